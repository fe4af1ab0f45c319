use mmwave_v2v::channel::{
    blockage_loss, sample_link_state, shadowing, ChannelHooks, ChannelProcess, LinkGeometry, LinkState,
    Scenario, UpaConfig,
};
use mmwave_v2v::engine::{RngStreams, SimTime, Stream};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn lag1(xs: &[f64]) -> f64 {
    let (m, s) = mean_std(xs);
    let c: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (xs.len() - 1) as f64;
    c / (s * s)
}

#[test]
fn ar1_shadowing_is_stationary() {
    for state in [LinkState::Los, LinkState::NlosV, LinkState::Nlos] {
        let mut r = RngStreams::new(11);
        let step = state.decorrelation_m() / 2.0;
        let mut x = shadowing(state, None, 0.0, &mut r);
        let mut chain = Vec::with_capacity(200_000);
        for _ in 0..200_000 {
            x = shadowing(state, Some(x), step, &mut r);
            chain.push(x);
        }
        let sigma = match state {
            LinkState::Nlos => 4.0,
            _ => 3.0,
        };
        let (m, s) = mean_std(&chain);
        assert!((s / sigma - 1.0).abs() <= 0.02, "{state}: std {s}");
        assert!(m.abs() < 0.1, "{state}: mean {m}");
        let rho = (-0.5f64).exp();
        assert!((lag1(&chain) - rho).abs() < 0.01, "{state}: lag-1 {}", lag1(&chain));
    }
}

#[test]
fn fresh_shadowing_draws_are_uncorrelated() {
    let mut r = RngStreams::new(12);
    let xs: Vec<f64> = (0..100_000).map(|_| shadowing(LinkState::Los, None, 0.0, &mut r)).collect();
    assert!(lag1(&xs).abs() < 4.0 / (xs.len() as f64).sqrt());
}

#[test]
fn streams_are_independent() {
    let mut r = RngStreams::new(13);
    let n = 100_000;
    let a: Vec<f64> = (0..n).map(|_| r.uniform(Stream::ChannelState)).collect();
    let b: Vec<f64> = (0..n).map(|_| r.uniform(Stream::PhyError)).collect();
    let (ma, sa) = mean_std(&a);
    let (mb, sb) = mean_std(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64;
    assert!((cov / (sa * sb)).abs() < 4.0 / (n as f64).sqrt());
}

/// Mean of a normal truncated to `>= 0`, by trapezoidal integration of the
/// density.
fn truncated_mean_numeric(mu: f64, sigma: f64) -> f64 {
    let pdf = |x: f64| (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp();
    let hi = mu.max(0.0) + 12.0 * sigma;
    let n = 200_000;
    let h = hi / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let x = i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        num += w * x * pdf(x);
        den += w * pdf(x);
    }
    num / den
}

#[test]
fn blockage_matches_truncated_normal() {
    for d in [50.0, 200.0, 500.0] {
        let mu = (9.0 + 15.0 * f64::log10(d) - 41.0).max(0.0);
        let want = truncated_mean_numeric(mu, 4.5);
        let mut r = RngStreams::new(14);
        let xs: Vec<f64> = (0..200_000).map(|_| blockage_loss(d, &mut r)).collect();
        assert!(xs.iter().all(|x| *x >= 0.0));
        let (m, _) = mean_std(&xs);
        assert!((m - want).abs() < 0.1, "d {d}: mean {m} oracle {want}");
    }
}

fn expected_probs(sc: Scenario, d: f64) -> [f64; 3] {
    let p_los = match sc {
        Scenario::Highway if d <= 475.0 => (2.1013e-6 * d * d - 0.002 * d + 1.0193).min(1.0),
        Scenario::Highway => (0.54 - 0.001 * (d - 475.0)).max(0.0),
        Scenario::Urban => (1.05 * (-0.0114 * d).exp()).min(1.0),
    };
    match sc {
        Scenario::Highway => [p_los, 1.0 - p_los, 0.0],
        Scenario::Urban => [p_los, (1.0 - p_los) / 2.0, (1.0 - p_los) / 2.0],
    }
}

#[test]
fn link_state_frequencies_within_three_sigma() {
    let n = 100_000;
    let mut r = RngStreams::new(15);
    for sc in [Scenario::Highway, Scenario::Urban] {
        for d in [10.0, 100.0, 250.0, 475.0, 500.0, 800.0] {
            let mut counts = [0usize; 3];
            for _ in 0..n {
                let i = match sample_link_state(sc, d, &mut r) {
                    LinkState::Los => 0,
                    LinkState::NlosV => 1,
                    LinkState::Nlos => 2,
                };
                counts[i] += 1;
            }
            for (c, p) in counts.iter().zip(expected_probs(sc, d)) {
                let f = *c as f64 / n as f64;
                let sd = (p * (1.0 - p) / n as f64).sqrt();
                assert!((f - p).abs() <= 3.0 * sd + 1e-12, "{sc} d={d}: {f} vs {p}");
            }
        }
    }
}

#[test]
fn rx_power_matches_components_along_a_run() {
    let geom = LinkGeometry {
        scenario: Scenario::Urban,
        distance_m: 300.0,
        fc_ghz: 60.0,
        speed_mps: 20.0,
        tx_power_dbm: 26.0,
        upa: UpaConfig::default(),
    };
    let mut r = RngStreams::new(16);
    let mut p = ChannelProcess::new(geom, ChannelHooks::default(), &mut r);
    p.advance_to(SimTime::from_secs(10.0), &mut r);
    assert!(p.segments().len() >= 15);
    for seg in p.segments() {
        let s = seg.sample;
        let sum = s.tx_power_dbm + s.bf_gain_tx_dbi + s.bf_gain_rx_dbi
            - s.pathloss_db
            - s.blockage_db
            - s.shadowing_db
            - s.absorption_db;
        assert!((s.rx_power_dbm - sum).abs() < 1e-9);
        assert!((s.absorption_db - 4.5).abs() < 1e-12);
        if s.state != LinkState::NlosV {
            assert_eq!(s.blockage_db, 0.0);
        }
    }
}
