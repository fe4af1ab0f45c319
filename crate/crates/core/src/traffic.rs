//! Constant-bit-rate UDP source, application sink, and per-run metrics.

use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrafficError {
    #[error("no packets were sent; PRR is undefined")]
    NothingSent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppPacket {
    pub id: u64,
    pub size: u32,
    pub t_sent: SimTime,
    pub t_delivered: Option<SimTime>,
}

/// Emits packets at `0, ipi, 2 ipi, ...` strictly before `duration`.
#[derive(Debug, Clone)]
pub struct CbrSource {
    ipi: SimTime,
    duration: SimTime,
    size: u32,
    next_id: u64,
}

impl CbrSource {
    pub fn new(ipi: SimTime, duration: SimTime, size: u32) -> Self {
        assert!(ipi.as_nanos() > 0, "inter-packet interval must be positive");
        CbrSource {
            ipi,
            duration,
            size,
            next_id: 0,
        }
    }

    pub fn send_time(&self, id: u64) -> SimTime {
        SimTime(id * self.ipi.as_nanos())
    }

    /// Time of the next packet, if it falls before the end of the run.
    pub fn next_time(&self) -> Option<SimTime> {
        let t = self.send_time(self.next_id);
        (t < self.duration).then_some(t)
    }

    pub fn emit(&mut self) -> AppPacket {
        let p = AppPacket {
            id: self.next_id,
            size: self.size,
            t_sent: self.send_time(self.next_id),
            t_delivered: None,
        };
        self.next_id += 1;
        p
    }

    /// Number of packets the source emits over the whole run.
    pub fn total_packets(&self) -> u64 {
        self.duration.as_nanos().div_ceil(self.ipi.as_nanos())
    }
}

#[derive(Debug, Default, Clone)]
pub struct Sink {
    packets: Vec<AppPacket>,
    delays_ms: Vec<f64>,
}

impl Sink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_sent(&mut self, p: AppPacket) {
        assert_eq!(p.id as usize, self.packets.len(), "packet ids must be dense");
        self.packets.push(p);
    }

    /// Records delivery of `id` at `now`. Panics on a second delivery of the
    /// same packet: the RLC never re-delivers, so that would be a bug.
    pub fn on_delivery(&mut self, id: u64, now: SimTime) {
        let p = self
            .packets
            .get_mut(id as usize)
            .unwrap_or_else(|| panic!("delivery of unknown packet {id}"));
        assert!(p.t_delivered.is_none(), "packet {id} delivered twice");
        assert!(now >= p.t_sent);
        p.t_delivered = Some(now);
        self.delays_ms.push((now - p.t_sent).as_ms());
    }

    pub fn sent(&self) -> u64 {
        self.packets.len() as u64
    }

    pub fn delivered(&self) -> u64 {
        self.delays_ms.len() as u64
    }

    pub fn delays_ms(&self) -> &[f64] {
        &self.delays_ms
    }

    pub fn packets(&self) -> &[AppPacket] {
        &self.packets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub sent: u64,
    pub delivered: u64,
    /// In delivery order.
    pub delays_ms: Vec<f64>,
    pub prr: f64,
    /// `None` when nothing was delivered.
    pub mean_delay_ms: Option<f64>,
    pub p95_delay_ms: Option<f64>,
    pub tx_attempts: u64,
    pub mac_drops: u64,
    pub rlc_stale_discards: u64,
    pub rlc_duplicates: u64,
    pub rlc_timer_expirations: u64,
    pub mean_buffer_wait_ms: Option<f64>,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile_nearest_rank(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Lower-layer counters folded into [`RunMetrics`].
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct StackCounters {
    pub tx_attempts: u64,
    pub mac_drops: u64,
    pub rlc_stale_discards: u64,
    pub rlc_duplicates: u64,
    pub rlc_timer_expirations: u64,
    pub rlc_delivered: u64,
    pub rlc_total_buffer_wait: SimTime,
}

pub fn finalize(sink: &Sink, counters: StackCounters) -> Result<RunMetrics, TrafficError> {
    let sent = sink.sent();
    if sent == 0 {
        return Err(TrafficError::NothingSent);
    }
    let delivered = sink.delivered();
    let delays = sink.delays_ms().to_vec();
    Ok(RunMetrics {
        sent,
        delivered,
        prr: delivered as f64 / sent as f64,
        mean_delay_ms: mean(&delays),
        p95_delay_ms: percentile_nearest_rank(&delays, 0.95),
        delays_ms: delays,
        tx_attempts: counters.tx_attempts,
        mac_drops: counters.mac_drops,
        rlc_stale_discards: counters.rlc_stale_discards,
        rlc_duplicates: counters.rlc_duplicates,
        rlc_timer_expirations: counters.rlc_timer_expirations,
        mean_buffer_wait_ms: (counters.rlc_delivered > 0)
            .then(|| counters.rlc_total_buffer_wait.as_ms() / counters.rlc_delivered as f64),
    })
}
