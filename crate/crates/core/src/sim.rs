//! One replication: wires source, RLC, MAC, PHY and channel onto the event
//! engine.
//!
//! Timing: a packet handed down at time `t` goes out at the first slot
//! boundary at or after `t`. The receiver sees a decoded block two slots
//! after the start of its transmission slot (one slot on air, one slot of
//! decoding). After the source stops, the run keeps stepping until the stack
//! is empty or one extra second has passed.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::channel::{ChannelProcess, LinkGeometry, Segment};
use crate::config::SimConfig;
use crate::engine::{Engine, Event, RngStreams, SimTime};
use crate::error::Result;
use crate::mac::{Mac, MacVerdict};
use crate::phy::{tbs_and_prb, Phy, TransportBlock};
use crate::rlc::{Delivery, RlcPdu, RlcUmRx, RlcUmTx, RxOutcome};
use crate::traffic::{finalize, AppPacket, CbrSource, RunMetrics, Sink, StackCounters};

/// Slots between the start of a transmission and its arrival at the receiver.
pub const RX_PROCESSING_SLOTS: u64 = 2;
/// How long the run may continue past its duration to flush the stack.
pub const DRAIN_LIMIT: SimTime = SimTime(1_000_000_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    AppTx,
    SlotBoundary { slot: u64 },
    PhyRxDone { pdu: RlcPdu },
    RlcTimerExpiry { generation: u64 },
    SimEnd,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep a human-readable event log.
    pub trace: bool,
    /// Keep every channel segment.
    pub keep_segments: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Hash of the event sequence; equal for equal configs.
    pub trace_hash: u64,
    /// `time_ns,kind,summary` lines, empty unless tracing.
    pub trace: Vec<String>,
    pub segments: Vec<Segment>,
    pub end_time: SimTime,
    /// PDUs still inside MAC, on air, or buffered in RLC when the run stopped.
    pub in_flight_at_end: u64,
}

struct Stack {
    rngs: RngStreams,
    channel: ChannelProcess,
    phy: Phy,
    mac: Mac,
    rlc_tx: RlcUmTx,
    rlc_rx: RlcUmRx,
    source: CbrSource,
    sink: Sink,
    slot: SimTime,
    on_air: u64,
    ended: bool,
    hasher: DefaultHasher,
    trace: Option<Vec<String>>,
}

impl Stack {
    fn log(&mut self, t: SimTime, kind: &str, keys: &[u64], summary: impl FnOnce() -> String) {
        self.hasher.write_u64(t.as_nanos());
        self.hasher.write(kind.as_bytes());
        for k in keys {
            self.hasher.write_u64(*k);
        }
        if let Some(lines) = &mut self.trace {
            lines.push(format!("{},{},{}", t.as_nanos(), kind, summary()));
        }
    }

    fn is_idle(&self) -> bool {
        self.mac.is_idle() && self.on_air == 0 && self.rlc_rx.is_empty()
    }

    fn in_flight(&self) -> u64 {
        self.mac.in_flight() as u64 + self.on_air + self.rlc_rx.buffered_sns().count() as u64
    }

    /// Hands every packet due by `now` to RLC and the MAC queue.
    fn emit_due(&mut self, now: SimTime) -> Result<()> {
        while self.source.next_time().is_some_and(|t| t <= now) {
            let p: AppPacket = self.source.emit();
            self.sink.on_sent(p);
            let pdu = self.rlc_tx.send(p.id, p.t_sent);
            self.mac.enqueue_sdu(pdu)?;
            self.log(now, "AppTx", &[p.id], || format!("packet={} sn={}", p.id, pdu.sn));
        }
        Ok(())
    }

    fn handle(&mut self, engine: &mut Engine<SimEvent>, ev: Event<SimEvent>) -> Result<()> {
        let now = ev.time;
        match ev.payload {
            SimEvent::AppTx => {
                self.emit_due(now)?;
                if let Some(t) = self.source.next_time() {
                    engine.schedule(t, SimEvent::AppTx);
                }
            }
            SimEvent::SlotBoundary { slot } => {
                self.emit_due(now)?;
                if let Some(tb) = self.mac.next_transmission(slot) {
                    self.transmit(engine, now, tb);
                }
                engine.schedule(now + self.slot, SimEvent::SlotBoundary { slot: slot + 1 });
            }
            SimEvent::PhyRxDone { pdu } => {
                self.on_air -= 1;
                self.log(now, "PhyRxDone", &[pdu.sn], || format!("sn={}", pdu.sn));
                let out = self.rlc_rx.receive(pdu, now);
                self.apply_rx(engine, now, out);
            }
            SimEvent::RlcTimerExpiry { generation } => {
                if self.rlc_rx.timer_is(generation) {
                    self.log(now, "RlcTimerExpiry", &[generation], || {
                        format!("generation={generation}")
                    });
                    let out = self.rlc_rx.on_timer_expiry(now);
                    self.apply_rx(engine, now, out);
                }
            }
            SimEvent::SimEnd => {
                self.ended = true;
                let sent = self.sink.sent();
                self.log(now, "SimEnd", &[sent], || format!("sent={sent}"));
            }
        }
        Ok(())
    }

    fn transmit(&mut self, engine: &mut Engine<SimEvent>, now: SimTime, tb: TransportBlock) {
        self.channel.advance_to(now, &mut self.rngs);
        let sample = *self.channel.current();
        let out = self.phy.transmit(&tb, &sample, &mut self.rngs);
        let verdict = self.mac.on_phy_result(out.success);
        self.log(
            now,
            "Tx",
            &[tb.tx_slot, tb.rlc_sn, tb.harq_attempt.into(), out.sinr_db.to_bits(), out.success.into()],
            || {
                format!(
                    "{tb} state={} sinr_db={:.3} bler={:.4} ok={}",
                    sample.state, out.sinr_db, out.bler, out.success
                )
            },
        );
        match verdict {
            MacVerdict::Deliver(pdu) => {
                self.on_air += 1;
                engine.schedule(
                    now + SimTime(self.slot.as_nanos() * RX_PROCESSING_SLOTS),
                    SimEvent::PhyRxDone { pdu },
                );
            }
            MacVerdict::Retransmit => {}
            MacVerdict::Drop(pdu) => {
                self.log(now, "MacDrop", &[pdu.sn], || format!("sn={}", pdu.sn));
            }
        }
    }

    fn apply_rx(&mut self, engine: &mut Engine<SimEvent>, now: SimTime, out: RxOutcome) {
        for Delivery { pdu, .. } in out.delivered {
            self.sink.on_delivery(pdu.packet_id, now);
            self.log(now, "Deliver", &[pdu.packet_id], || {
                format!("packet={} delay_ns={}", pdu.packet_id, (now - pdu.t_sent).as_nanos())
            });
        }
        if let Some((expiry, generation)) = out.timer_started {
            engine.schedule(expiry, SimEvent::RlcTimerExpiry { generation });
        }
    }

    fn counters(&self) -> StackCounters {
        let mac = self.mac.counters();
        let rlc = self.rlc_rx.counters();
        StackCounters {
            tx_attempts: mac.tx_attempts,
            mac_drops: mac.drops,
            rlc_stale_discards: rlc.stale_discards,
            rlc_duplicates: rlc.duplicates,
            rlc_timer_expirations: rlc.timer_expirations,
            rlc_delivered: rlc.delivered,
            rlc_total_buffer_wait: rlc.total_buffer_wait,
        }
    }
}

/// Runs one replication of `cfg`.
pub fn run(cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let num = cfg.numerology();
    let mcs = cfg.mcs_table.get(cfg.mcs_index)?;
    let (tb_bits, n_prb) = tbs_and_prb(cfg.payload_bytes, &mcs, num, cfg.bandwidth_mhz)?;
    let duration = SimTime::from_secs(cfg.duration_s);

    let mut rngs = RngStreams::new(cfg.seed);
    let geom = LinkGeometry {
        scenario: cfg.scenario,
        distance_m: cfg.distance_m,
        fc_ghz: cfg.carrier_freq_ghz,
        speed_mps: cfg.speed_mps,
        tx_power_dbm: cfg.tx_power_dbm,
        upa: cfg.upa,
    };
    let channel = ChannelProcess::new(geom, cfg.hooks.channel, &mut rngs);
    let mut stack = Stack {
        rngs,
        channel,
        phy: Phy {
            numerology: num,
            noise_figure_db: cfg.noise_figure_db,
            link: cfg.link_abstraction(),
            mcs,
            forced_bler: cfg.hooks.forced_bler,
        },
        mac: Mac::new(cfg.harq_enabled, cfg.max_harq_retx, cfg.mcs_index, tb_bits, n_prb),
        rlc_tx: RlcUmTx::new(),
        rlc_rx: RlcUmRx::new(SimTime::from_ms(cfg.reorder_timer_ms)),
        source: CbrSource::new(
            SimTime::from_ms(cfg.inter_packet_interval_ms),
            duration,
            cfg.payload_bytes,
        ),
        sink: Sink::new(),
        slot: num.slot_period(),
        on_air: 0,
        ended: false,
        hasher: DefaultHasher::new(),
        trace: opts.trace.then(Vec::new),
    };

    let mut engine = Engine::new();
    if stack.source.next_time().is_some() {
        engine.schedule(SimTime::ZERO, SimEvent::AppTx);
    }
    engine.schedule(SimTime::ZERO, SimEvent::SlotBoundary { slot: 0 });
    engine.schedule(duration, SimEvent::SimEnd);

    let hard_stop = duration + DRAIN_LIMIT;
    while let Some(ev) = engine.pop_until(hard_stop) {
        stack.handle(&mut engine, ev)?;
        if stack.ended && stack.is_idle() {
            break;
        }
    }
    if !stack.is_idle() {
        log::debug!(
            "run {} stopped with {} PDUs in flight",
            cfg.run_id,
            stack.in_flight()
        );
    }

    let counters = stack.counters();
    let metrics = finalize(&stack.sink, counters)?;
    let in_flight = stack.in_flight();
    debug_assert_eq!(
        metrics.sent,
        metrics.delivered + metrics.mac_drops + metrics.rlc_stale_discards + in_flight,
        "packet conservation"
    );
    Ok(RunOutput {
        metrics,
        trace_hash: stack.hasher.finish(),
        trace: stack.trace.unwrap_or_default(),
        segments: if opts.keep_segments {
            stack.channel.segments().to_vec()
        } else {
            Vec::new()
        },
        end_time: engine.now(),
        in_flight_at_end: in_flight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelHooks, LinkState, Scenario};
    use crate::config::SimHooks;

    fn short(mut c: SimConfig) -> SimConfig {
        c.duration_s = 1.0;
        c
    }

    fn forced(bler: f64) -> SimHooks {
        SimHooks {
            channel: ChannelHooks::default(),
            forced_bler: Some(bler),
        }
    }

    #[test]
    fn lossless_latency_is_two_slots() {
        let cfg = short(SimConfig {
            hooks: forced(0.0),
            ..SimConfig::default()
        });
        let out = run(&cfg, RunOptions::default()).unwrap();
        let m = out.metrics;
        assert_eq!(m.sent, 1000);
        assert_eq!(m.delivered, 1000);
        assert!(m.delays_ms.iter().all(|d| (d - 0.5).abs() < 1e-9));
        assert_eq!(m.tx_attempts, 1000);
        assert_eq!(out.in_flight_at_end, 0);
    }

    #[test]
    fn always_failing_link_delivers_nothing() {
        let cfg = short(SimConfig {
            hooks: forced(1.0),
            harq_enabled: true,
            ..SimConfig::default()
        });
        let m = run(&cfg, RunOptions::default()).unwrap().metrics;
        assert_eq!(m.delivered, 0);
        assert_eq!(m.mac_drops, m.sent);
        assert_eq!(m.tx_attempts, 4 * m.sent);
        assert_eq!(m.mean_delay_ms, None);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = short(SimConfig {
            scenario: Scenario::Urban,
            distance_m: 200.0,
            mcs_index: 20,
            seed: 9,
            ..SimConfig::default()
        });
        let opts = RunOptions {
            trace: true,
            keep_segments: true,
        };
        let a = run(&cfg, opts).unwrap();
        let b = run(&cfg, opts).unwrap();
        assert_eq!(a.trace_hash, b.trace_hash);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.metrics, b.metrics);
        let c = run(&SimConfig { seed: 10, ..cfg }, opts).unwrap();
        assert_ne!(a.trace_hash, c.trace_hash);
    }

    #[test]
    fn trace_hash_does_not_depend_on_tracing() {
        let cfg = short(SimConfig::default());
        let a = run(&cfg, RunOptions::default()).unwrap();
        let b = run(&cfg, RunOptions { trace: true, keep_segments: false }).unwrap();
        assert_eq!(a.trace_hash, b.trace_hash);
        assert!(a.trace.is_empty());
        assert!(b.trace.iter().all(|l| l.splitn(3, ',').count() == 3));
    }

    #[test]
    fn dense_traffic_uses_every_slot() {
        let cfg = short(SimConfig {
            inter_packet_interval_ms: 0.25,
            hooks: forced(0.0),
            ..SimConfig::default()
        });
        let m = run(&cfg, RunOptions::default()).unwrap().metrics;
        assert_eq!(m.sent, 4000);
        assert_eq!(m.delivered, 4000);
        assert!(m.delays_ms.iter().all(|d| (d - 0.5).abs() < 1e-9));
    }

    #[test]
    fn overload_overflows_mac_queue() {
        let cfg = SimConfig {
            inter_packet_interval_ms: 0.1,
            duration_s: 10.0,
            ..SimConfig::default()
        };
        let err = run(&cfg, RunOptions::default()).unwrap_err();
        assert!(matches!(err, crate::Error::Mac(_)), "{err}");
    }

    #[test]
    fn forced_nlos_state_is_used() {
        let cfg = short(SimConfig {
            scenario: Scenario::Urban,
            hooks: SimHooks {
                channel: ChannelHooks {
                    forced_state: Some(LinkState::Nlos),
                    ..ChannelHooks::default()
                },
                forced_bler: None,
            },
            ..SimConfig::default()
        });
        let out = run(&cfg, RunOptions { trace: false, keep_segments: true }).unwrap();
        assert!(out.segments.iter().all(|s| s.sample.state == LinkState::Nlos));
    }

    #[test]
    fn drain_is_bounded() {
        // Very long reordering timer with losses: the run must stop within
        // one second past the duration.
        let cfg = short(SimConfig {
            hooks: forced(0.5),
            reorder_timer_ms: 5000.0,
            ..SimConfig::default()
        });
        let out = run(&cfg, RunOptions::default()).unwrap();
        assert!(out.end_time <= SimTime::from_secs(2.0));
        let m = &out.metrics;
        assert_eq!(m.sent, m.delivered + m.mac_drops + m.rlc_stale_discards + out.in_flight_at_end);
    }
}
