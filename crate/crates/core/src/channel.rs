//! Stochastic V2V propagation for the two-vehicle platoon.
//!
//! The link alternates between LOS, NLOSv (blocked by other vehicles) and
//! NLOS (blocked by buildings, urban only). State, vehicle blockage and
//! shadowing are held constant over a coherence segment whose length is the
//! shadowing decorrelation distance of the current state, travelled at the
//! platoon's common speed. Pathloss and absorption are deterministic.
//!
//! Loss convention: positive `shadowing_db` is extra attenuation.

use std::fmt;
use std::str::FromStr;

use crate::engine::{RngStreams, SimTime, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Highway,
    Urban,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Highway => "highway",
            Scenario::Urban => "urban",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "highway" => Ok(Scenario::Highway),
            "urban" => Ok(Scenario::Urban),
            other => Err(format!("unknown scenario {other:?} (expected highway|urban)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    Los,
    NlosV,
    Nlos,
}

impl LinkState {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkState::Los => "LOS",
            LinkState::NlosV => "NLOSv",
            LinkState::Nlos => "NLOS",
        }
    }

    /// Log-normal shadowing standard deviation, dB.
    pub fn shadowing_sigma_db(self) -> f64 {
        match self {
            LinkState::Los | LinkState::NlosV => 3.0,
            LinkState::Nlos => 4.0,
        }
    }

    /// Shadowing decorrelation distance, m.
    pub fn decorrelation_m(self) -> f64 {
        match self {
            LinkState::Los => 10.0,
            LinkState::NlosV | LinkState::Nlos => 13.0,
        }
    }
}

impl fmt::Display for LinkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Share of urban non-LOS outcomes that are building-blocked NLOS.
pub const URBAN_NLOS_SHARE: f64 = 0.5;
pub const BLOCKAGE_SIGMA_DB: f64 = 4.5;
/// Oxygen absorption inside the 57-64 GHz complex, dB/km.
pub const OXYGEN_ABSORPTION_DB_PER_KM: f64 = 15.0;

fn clamp_distance(d: f64) -> f64 {
    d.max(1.0)
}

/// Probability of LOS at 2-D distance `d` (m).
pub fn los_probability(scenario: Scenario, d: f64) -> f64 {
    match scenario {
        Scenario::Highway => {
            if d <= 475.0 {
                (2.1013e-6 * d * d - 0.002 * d + 1.0193).min(1.0)
            } else {
                (0.54 - 0.001 * (d - 475.0)).max(0.0)
            }
        }
        Scenario::Urban => (1.05 * (-0.0114 * d).exp()).min(1.0),
    }
}

/// `(P(LOS), P(NLOSv), P(NLOS))` at distance `d`.
pub fn state_probabilities(scenario: Scenario, d: f64) -> (f64, f64, f64) {
    let d = clamp_distance(d);
    let p_los = los_probability(scenario, d);
    match scenario {
        Scenario::Highway => (p_los, 1.0 - p_los, 0.0),
        Scenario::Urban => {
            let rest = 1.0 - p_los;
            (p_los, rest * (1.0 - URBAN_NLOS_SHARE), rest * URBAN_NLOS_SHARE)
        }
    }
}

/// Draws a link state with one uniform from `channel-state`.
pub fn sample_link_state(scenario: Scenario, d: f64, rngs: &mut RngStreams) -> LinkState {
    let d = clamp_distance(d);
    let u = rngs.uniform(Stream::ChannelState);
    let p_los = los_probability(scenario, d);
    if u < p_los {
        return LinkState::Los;
    }
    match scenario {
        Scenario::Highway => LinkState::NlosV,
        Scenario::Urban => {
            let v = (u - p_los) / (1.0 - p_los);
            if v < URBAN_NLOS_SHARE {
                LinkState::Nlos
            } else {
                LinkState::NlosV
            }
        }
    }
}

/// Pathloss in dB at distance `d` (m, >= 1) and carrier `fc` (GHz).
/// NLOSv uses the LOS law; vehicle blockage is added separately.
pub fn pathloss(state: LinkState, scenario: Scenario, d: f64, fc_ghz: f64) -> f64 {
    let d = clamp_distance(d);
    match (state, scenario) {
        (LinkState::Nlos, _) => 36.85 + 30.0 * d.log10() + 18.9 * fc_ghz.log10(),
        (_, Scenario::Highway) => 32.4 + 20.0 * d.log10() + 20.0 * fc_ghz.log10(),
        (_, Scenario::Urban) => 38.77 + 16.7 * d.log10() + 18.2 * fc_ghz.log10(),
    }
}

/// Mean of the (untruncated) vehicle blockage normal, dB.
pub fn blockage_mean_db(d: f64) -> f64 {
    (9.0 + 15.0 * clamp_distance(d).log10() - 41.0).max(0.0)
}

/// One vehicle-blockage draw: `Normal(mean(d), 4.5 dB)` truncated to `>= 0`
/// by rejection on the `blockage` stream.
pub fn blockage_loss(d: f64, rngs: &mut RngStreams) -> f64 {
    let mu = blockage_mean_db(d);
    loop {
        let x = mu + BLOCKAGE_SIGMA_DB * rngs.std_normal(Stream::Blockage);
        if x >= 0.0 {
            return x;
        }
    }
}

/// Exponentially correlated log-normal shadowing.
///
/// With no previous value this is a fresh `Normal(0, sigma)`. Otherwise
/// `rho * prev + sqrt(1 - rho^2) * Normal(0, sigma)` with
/// `rho = exp(-delta_m / d_corr)`. One normal is drawn on every call.
pub fn shadowing(state: LinkState, prev_db: Option<f64>, delta_m: f64, rngs: &mut RngStreams) -> f64 {
    let sigma = state.shadowing_sigma_db();
    let z = rngs.std_normal(Stream::Shadowing);
    match prev_db {
        None => sigma * z,
        Some(prev) => {
            let rho = (-delta_m / state.decorrelation_m()).exp();
            rho * prev + (1.0 - rho * rho).sqrt() * sigma * z
        }
    }
}

pub fn absorption_rate_db_per_km(fc_ghz: f64) -> f64 {
    if (57.0..=64.0).contains(&fc_ghz) {
        OXYGEN_ABSORPTION_DB_PER_KM
    } else {
        0.0
    }
}

pub fn atmospheric_absorption(fc_ghz: f64, d: f64) -> f64 {
    absorption_rate_db_per_km(fc_ghz) * d.max(0.0) / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpaConfig {
    pub rows: u32,
    pub cols: u32,
    pub alignment: Alignment,
}

impl Default for UpaConfig {
    fn default() -> Self {
        UpaConfig {
            rows: 4,
            cols: 4,
            alignment: Alignment::Ideal,
        }
    }
}

impl UpaConfig {
    pub fn new(rows: u32, cols: u32) -> Self {
        assert!(rows >= 1 && cols >= 1, "UPA needs at least one element per axis");
        UpaConfig {
            rows,
            cols,
            alignment: Alignment::Ideal,
        }
    }
}

/// Boresight array gain with isotropic elements, identical on both ends.
pub fn beamforming_gain(upa: &UpaConfig) -> (f64, f64) {
    let Alignment::Ideal = upa.alignment;
    let g = 10.0 * f64::from(upa.rows * upa.cols).log10();
    (g, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub state: LinkState,
    pub pathloss_db: f64,
    pub blockage_db: f64,
    pub shadowing_db: f64,
    pub absorption_db: f64,
    pub bf_gain_tx_dbi: f64,
    pub bf_gain_rx_dbi: f64,
    pub tx_power_dbm: f64,
    pub rx_power_dbm: f64,
}

impl ChannelSample {
    /// Assembles a sample; `rx_power_dbm` is always the sum of the parts.
    #[allow(clippy::too_many_arguments)]
    pub fn compose(
        state: LinkState,
        tx_power_dbm: f64,
        bf_gain_tx_dbi: f64,
        bf_gain_rx_dbi: f64,
        pathloss_db: f64,
        blockage_db: f64,
        shadowing_db: f64,
        absorption_db: f64,
    ) -> Self {
        let rx_power_dbm = tx_power_dbm + bf_gain_tx_dbi + bf_gain_rx_dbi
            - pathloss_db
            - blockage_db
            - shadowing_db
            - absorption_db;
        ChannelSample {
            state,
            pathloss_db,
            blockage_db,
            shadowing_db,
            absorption_db,
            bf_gain_tx_dbi,
            bf_gain_rx_dbi,
            tx_power_dbm,
            rx_power_dbm,
        }
    }
}

/// Test hooks that pin parts of the channel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChannelHooks {
    pub forced_state: Option<LinkState>,
    pub zero_shadowing: bool,
    /// Pathloss, blockage, shadowing and absorption all zero.
    pub zero_attenuation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub scenario: Scenario,
    pub distance_m: f64,
    pub fc_ghz: f64,
    pub speed_mps: f64,
    pub tx_power_dbm: f64,
    pub upa: UpaConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: SimTime,
    /// `None` when the platoon is stationary and the segment never ends.
    pub end: Option<SimTime>,
    pub sample: ChannelSample,
}

/// Per-link channel state for one run.
pub struct ChannelProcess {
    geom: LinkGeometry,
    hooks: ChannelHooks,
    current: Segment,
    raw_shadowing_db: f64,
    history: Vec<Segment>,
}

impl ChannelProcess {
    pub fn new(geom: LinkGeometry, hooks: ChannelHooks, rngs: &mut RngStreams) -> Self {
        if geom.distance_m < 1.0 {
            log::warn!(
                "inter-vehicle distance {} m below 1 m, clamped to 1 m",
                geom.distance_m
            );
        }
        let mut geom = geom;
        geom.distance_m = clamp_distance(geom.distance_m);
        let state = Self::draw_state(&geom, &hooks, rngs);
        let shadow = shadowing(state, None, 0.0, rngs);
        let mut p = ChannelProcess {
            geom,
            hooks,
            current: Segment {
                start: SimTime::ZERO,
                end: None,
                sample: ChannelSample::compose(state, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            },
            raw_shadowing_db: shadow,
            history: Vec::new(),
        };
        p.current = p.build_segment(SimTime::ZERO, state, shadow, rngs);
        p.history.push(p.current);
        p
    }

    fn draw_state(geom: &LinkGeometry, hooks: &ChannelHooks, rngs: &mut RngStreams) -> LinkState {
        let drawn = sample_link_state(geom.scenario, geom.distance_m, rngs);
        hooks.forced_state.unwrap_or(drawn)
    }

    fn segment_duration(&self, state: LinkState) -> Option<SimTime> {
        (self.geom.speed_mps > 0.0)
            .then(|| SimTime::from_secs(state.decorrelation_m() / self.geom.speed_mps))
            .filter(|d| d.as_nanos() > 0)
    }

    fn build_segment(
        &self,
        start: SimTime,
        state: LinkState,
        shadow_db: f64,
        rngs: &mut RngStreams,
    ) -> Segment {
        let g = &self.geom;
        let blockage = match state {
            LinkState::NlosV => blockage_loss(g.distance_m, rngs),
            _ => 0.0,
        };
        let (gt, gr) = beamforming_gain(&g.upa);
        let (pl, blk, sh, abs) = if self.hooks.zero_attenuation {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            (
                pathloss(state, g.scenario, g.distance_m, g.fc_ghz),
                blockage,
                if self.hooks.zero_shadowing { 0.0 } else { shadow_db },
                atmospheric_absorption(g.fc_ghz, g.distance_m),
            )
        };
        Segment {
            start,
            end: self.segment_duration(state).map(|d| start + d),
            sample: ChannelSample::compose(state, g.tx_power_dbm, gt, gr, pl, blk, sh, abs),
        }
    }

    /// Moves to the segment containing `t`, resampling state, blockage and
    /// shadowing at each crossed boundary.
    pub fn advance_to(&mut self, t: SimTime, rngs: &mut RngStreams) {
        while let Some(end) = self.current.end {
            if t < end {
                break;
            }
            let prev_state = self.current.sample.state;
            let travelled = self.geom.speed_mps * (end - self.current.start).as_secs();
            let state = Self::draw_state(&self.geom, &self.hooks, rngs);
            // Rescale so the marginal std follows the new state's sigma.
            let carried =
                self.raw_shadowing_db * state.shadowing_sigma_db() / prev_state.shadowing_sigma_db();
            let shadow = shadowing(state, Some(carried), travelled, rngs);
            self.raw_shadowing_db = shadow;
            self.current = self.build_segment(end, state, shadow, rngs);
            self.history.push(self.current);
        }
    }

    pub fn current(&self) -> &ChannelSample {
        &self.current.sample
    }

    pub fn segments(&self) -> &[Segment] {
        &self.history
    }

    pub fn geometry(&self) -> &LinkGeometry {
        &self.geom
    }
}
