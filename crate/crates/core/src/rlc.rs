//! RLC unacknowledged mode: sequence numbering on transmit, and a reordering
//! buffer guarded by a single t-Reordering timer on receive.
//!
//! Sequence numbers are unbounded `u64`s; there is no wraparound window.
//! PDCP is a pass-through and lives only in the header overhead.

use std::collections::BTreeMap;

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RlcPdu {
    pub sn: u64,
    pub packet_id: u64,
    pub t_sent: SimTime,
}

#[derive(Debug, Default)]
pub struct RlcUmTx {
    next_sn: u64,
}

impl RlcUmTx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, packet_id: u64, t_sent: SimTime) -> RlcPdu {
        let sn = self.next_sn;
        self.next_sn += 1;
        RlcPdu { sn, packet_id, t_sent }
    }

    pub fn next_sn(&self) -> u64 {
        self.next_sn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    Stopped,
    Running { expiry: SimTime, generation: u64 },
}

/// A PDU handed to the upper layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub pdu: RlcPdu,
    pub arrived: SimTime,
    pub delivered: SimTime,
}

impl Delivery {
    pub fn buffer_wait(&self) -> SimTime {
        self.delivered - self.arrived
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RxOutcome {
    pub delivered: Vec<Delivery>,
    /// Set when this call started (or restarted) the timer; the owner must
    /// schedule an expiry at this time carrying the generation.
    pub timer_started: Option<(SimTime, u64)>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct RlcCounters {
    pub stale_discards: u64,
    pub duplicates: u64,
    pub timer_expirations: u64,
    pub delivered: u64,
    pub total_buffer_wait: SimTime,
}

#[derive(Debug, Clone)]
pub struct RlcUmRx {
    t_reordering: SimTime,
    rx_next_reassembly: u64,
    rx_next_highest: u64,
    rx_timer_trigger: u64,
    timer: Timer,
    next_generation: u64,
    buffer: BTreeMap<u64, (RlcPdu, SimTime)>,
    counters: RlcCounters,
}

impl RlcUmRx {
    pub fn new(t_reordering: SimTime) -> Self {
        RlcUmRx {
            t_reordering,
            rx_next_reassembly: 0,
            rx_next_highest: 0,
            rx_timer_trigger: 0,
            timer: Timer::Stopped,
            next_generation: 0,
            buffer: BTreeMap::new(),
            counters: RlcCounters::default(),
        }
    }

    pub fn rx_next_reassembly(&self) -> u64 {
        self.rx_next_reassembly
    }

    pub fn rx_next_highest(&self) -> u64 {
        self.rx_next_highest
    }

    pub fn rx_timer_trigger(&self) -> u64 {
        self.rx_timer_trigger
    }

    pub fn timer(&self) -> Timer {
        self.timer
    }

    pub fn counters(&self) -> RlcCounters {
        self.counters
    }

    pub fn buffered_sns(&self) -> impl Iterator<Item = u64> + '_ {
        self.buffer.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// True if an expiry event carrying `generation` is still current.
    pub fn timer_is(&self, generation: u64) -> bool {
        matches!(self.timer, Timer::Running { generation: g, .. } if g == generation)
    }

    /// Handles an arriving PDU at time `now`.
    pub fn receive(&mut self, pdu: RlcPdu, now: SimTime) -> RxOutcome {
        let mut out = RxOutcome::default();
        if pdu.sn < self.rx_next_reassembly {
            self.counters.stale_discards += 1;
            return out;
        }
        if self.buffer.contains_key(&pdu.sn) {
            self.counters.duplicates += 1;
            return out;
        }
        self.buffer.insert(pdu.sn, (pdu, now));
        self.rx_next_highest = self.rx_next_highest.max(pdu.sn + 1);

        if pdu.sn == self.rx_next_reassembly {
            self.deliver_in_sequence(now, &mut out.delivered);
        }
        if matches!(self.timer, Timer::Running { .. }) && self.rx_next_reassembly >= self.rx_timer_trigger {
            self.timer = Timer::Stopped;
        }
        if self.timer == Timer::Stopped && self.rx_next_highest > self.rx_next_reassembly {
            out.timer_started = Some(self.start_timer(now));
        }
        self.debug_check();
        out
    }

    /// Handles t-Reordering expiry. Panics if the timer is not running: an
    /// expiry without a running timer means the owner delivered a stale event.
    pub fn on_timer_expiry(&mut self, now: SimTime) -> RxOutcome {
        assert!(
            matches!(self.timer, Timer::Running { .. }),
            "t-Reordering expiry while timer stopped"
        );
        self.counters.timer_expirations += 1;
        self.timer = Timer::Stopped;
        let mut out = RxOutcome::default();

        // Everything below the trigger goes up now; gaps there are given up.
        let below: Vec<u64> = self
            .buffer
            .range(..self.rx_timer_trigger)
            .map(|(sn, _)| *sn)
            .collect();
        for sn in below {
            self.deliver(sn, now, &mut out.delivered);
        }
        self.rx_next_reassembly = self.rx_next_reassembly.max(self.rx_timer_trigger);
        self.deliver_in_sequence(now, &mut out.delivered);

        if self.rx_next_highest > self.rx_next_reassembly {
            out.timer_started = Some(self.start_timer(now));
        }
        self.debug_check();
        out
    }

    fn start_timer(&mut self, now: SimTime) -> (SimTime, u64) {
        let expiry = now + self.t_reordering;
        let generation = self.next_generation;
        self.next_generation += 1;
        self.rx_timer_trigger = self.rx_next_highest;
        self.timer = Timer::Running { expiry, generation };
        (expiry, generation)
    }

    fn deliver_in_sequence(&mut self, now: SimTime, out: &mut Vec<Delivery>) {
        while self.buffer.contains_key(&self.rx_next_reassembly) {
            self.deliver(self.rx_next_reassembly, now, out);
            self.rx_next_reassembly += 1;
        }
    }

    fn deliver(&mut self, sn: u64, now: SimTime, out: &mut Vec<Delivery>) {
        let (pdu, arrived) = self.buffer.remove(&sn).expect("sn buffered");
        let d = Delivery {
            pdu,
            arrived,
            delivered: now,
        };
        self.counters.delivered += 1;
        self.counters.total_buffer_wait = self.counters.total_buffer_wait + d.buffer_wait();
        out.push(d);
    }

    fn debug_check(&self) {
        debug_assert!(self.rx_next_reassembly <= self.rx_next_highest);
        debug_assert_eq!(
            matches!(self.timer, Timer::Running { .. }),
            self.rx_next_highest > self.rx_next_reassembly
        );
        debug_assert!(self
            .buffer
            .keys()
            .all(|sn| (self.rx_next_reassembly..self.rx_next_highest).contains(sn)));
    }
}
