//! Slot-synchronous sidelink MAC with a dedicated grant in every slot and an
//! optional stop-and-wait HARQ process.
//!
//! Feedback is ideal: the outcome of a transmission is known at the end of
//! its slot, so a retransmission can go out in the very next slot. Attempts
//! are independent (no soft combining).

use std::collections::VecDeque;

use thiserror::Error;

use crate::phy::TransportBlock;
use crate::rlc::RlcPdu;

pub const MAX_QUEUE_LEN: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacError {
    #[error("MAC queue exceeded {MAX_QUEUE_LEN} PDUs; offered load exceeds one PDU per slot")]
    QueueOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarqState {
    Idle,
    WaitingFeedback,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy)]
pub struct HarqProcess {
    pub tb: TransportBlock,
    pub pdu: RlcPdu,
    pub attempts_used: u32,
    pub max_retx: u32,
    pub state: HarqState,
}

impl HarqProcess {
    pub fn max_attempts(&self) -> u32 {
        1 + self.max_retx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacVerdict {
    /// Decoded; hand the PDU to the receiver after PHY processing.
    Deliver(RlcPdu),
    /// Failed; the same TB goes out again next slot.
    Retransmit,
    /// Failed for good.
    Drop(RlcPdu),
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MacCounters {
    pub tx_attempts: u64,
    pub drops: u64,
    pub delivered: u64,
    pub max_queue_len: usize,
}

#[derive(Debug)]
pub struct Mac {
    queue: VecDeque<RlcPdu>,
    process: Option<HarqProcess>,
    harq_enabled: bool,
    max_retx: u32,
    mcs: u8,
    tb_bits: u32,
    n_prb: u32,
    counters: MacCounters,
}

impl Mac {
    pub fn new(harq_enabled: bool, max_retx: u32, mcs: u8, tb_bits: u32, n_prb: u32) -> Self {
        Mac {
            queue: VecDeque::new(),
            process: None,
            harq_enabled,
            max_retx: if harq_enabled { max_retx } else { 0 },
            mcs,
            tb_bits,
            n_prb,
            counters: MacCounters::default(),
        }
    }

    pub fn enqueue_sdu(&mut self, pdu: RlcPdu) -> Result<(), MacError> {
        if self.queue.len() >= MAX_QUEUE_LEN {
            return Err(MacError::QueueOverflow);
        }
        self.queue.push_back(pdu);
        self.counters.max_queue_len = self.counters.max_queue_len.max(self.queue.len());
        Ok(())
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn harq_process(&self) -> Option<&HarqProcess> {
        self.process.as_ref()
    }

    pub fn counters(&self) -> MacCounters {
        self.counters
    }

    /// Nothing queued and no HARQ process holding a block.
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
            && !matches!(
                self.process,
                Some(HarqProcess {
                    state: HarqState::Idle | HarqState::WaitingFeedback,
                    ..
                })
            )
    }

    /// PDUs held by the MAC (queued or in a live HARQ process).
    pub fn in_flight(&self) -> usize {
        let live = matches!(
            self.process,
            Some(HarqProcess {
                state: HarqState::Idle | HarqState::WaitingFeedback,
                ..
            })
        );
        self.queue.len() + usize::from(live)
    }

    /// Builds the transport block for `slot`: a pending retransmission if
    /// there is one, else the head-of-line PDU, else nothing.
    pub fn next_transmission(&mut self, slot: u64) -> Option<TransportBlock> {
        let retx = matches!(self.process, Some(HarqProcess { state: HarqState::Idle, .. }));
        if !retx {
            let pdu = self.queue.pop_front()?;
            self.process = Some(HarqProcess {
                tb: TransportBlock {
                    tb_bits: self.tb_bits,
                    n_prb: self.n_prb,
                    mcs: self.mcs,
                    harq_attempt: 0,
                    rlc_sn: pdu.sn,
                    tx_slot: slot,
                },
                pdu,
                attempts_used: 0,
                max_retx: self.max_retx,
                state: HarqState::Idle,
            });
        }
        let p = self.process.as_mut().expect("process set above");
        p.tb.harq_attempt = p.attempts_used;
        p.tb.tx_slot = slot;
        p.attempts_used += 1;
        p.state = HarqState::WaitingFeedback;
        self.counters.tx_attempts += 1;
        Some(p.tb)
    }

    /// Applies the PHY decoding result for the block sent this slot.
    pub fn on_phy_result(&mut self, success: bool) -> MacVerdict {
        let p = self
            .process
            .as_mut()
            .filter(|p| p.state == HarqState::WaitingFeedback)
            .expect("PHY result without a transmission");
        if success {
            p.state = HarqState::Done;
            self.counters.delivered += 1;
            MacVerdict::Deliver(p.pdu)
        } else if self.harq_enabled && p.attempts_used < p.max_attempts() {
            p.state = HarqState::Idle;
            MacVerdict::Retransmit
        } else {
            p.state = HarqState::Failed;
            self.counters.drops += 1;
            MacVerdict::Drop(p.pdu)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimTime;

    fn pdu(sn: u64) -> RlcPdu {
        RlcPdu {
            sn,
            packet_id: sn,
            t_sent: SimTime::ZERO,
        }
    }

    #[test]
    fn fifo_one_per_slot() {
        let mut m = Mac::new(false, 3, 28, 1096, 2);
        m.enqueue_sdu(pdu(0)).unwrap();
        m.enqueue_sdu(pdu(1)).unwrap();
        let a = m.next_transmission(10).unwrap();
        assert_eq!((a.rlc_sn, a.tx_slot), (0, 10));
        assert_eq!(m.on_phy_result(true), MacVerdict::Deliver(pdu(0)));
        let b = m.next_transmission(11).unwrap();
        assert_eq!((b.rlc_sn, b.tx_slot), (1, 11));
        m.on_phy_result(true);
        assert!(m.next_transmission(12).is_none());
        assert!(m.is_idle());
    }

    #[test]
    fn harq_off_drops_after_single_attempt() {
        let mut m = Mac::new(false, 3, 28, 1096, 2);
        m.enqueue_sdu(pdu(0)).unwrap();
        m.next_transmission(0).unwrap();
        assert_eq!(m.on_phy_result(false), MacVerdict::Drop(pdu(0)));
        assert_eq!(m.harq_process().unwrap().attempts_used, 1);
        assert_eq!(m.harq_process().unwrap().state, HarqState::Failed);
        assert!(m.next_transmission(1).is_none());
        assert_eq!(m.counters().drops, 1);
    }

    #[test]
    fn harq_success_on_third_attempt() {
        let mut m = Mac::new(true, 3, 28, 1096, 2);
        m.enqueue_sdu(pdu(0)).unwrap();
        m.enqueue_sdu(pdu(1)).unwrap();
        let first = m.next_transmission(5).unwrap().tx_slot;
        assert_eq!(m.on_phy_result(false), MacVerdict::Retransmit);
        let tb = m.next_transmission(6).unwrap();
        assert_eq!((tb.rlc_sn, tb.harq_attempt), (0, 1));
        assert_eq!(m.on_phy_result(false), MacVerdict::Retransmit);
        let tb = m.next_transmission(7).unwrap();
        assert_eq!(tb.harq_attempt, 2);
        assert_eq!(m.on_phy_result(true), MacVerdict::Deliver(pdu(0)));
        assert_eq!(tb.tx_slot, first + 2);
        assert_eq!(m.next_transmission(8).unwrap().rlc_sn, 1);
    }

    #[test]
    fn harq_exhausted_fails() {
        let mut m = Mac::new(true, 3, 28, 1096, 2);
        m.enqueue_sdu(pdu(0)).unwrap();
        for slot in 0..3 {
            m.next_transmission(slot).unwrap();
            assert_eq!(m.on_phy_result(false), MacVerdict::Retransmit);
        }
        m.next_transmission(3).unwrap();
        assert_eq!(m.on_phy_result(false), MacVerdict::Drop(pdu(0)));
        let p = m.harq_process().unwrap();
        assert_eq!(p.attempts_used, 4);
        assert_eq!(p.state, HarqState::Failed);
        assert_eq!(m.counters().tx_attempts, 4);
    }

    #[test]
    fn overflow_is_an_error() {
        let mut m = Mac::new(false, 0, 0, 1096, 44);
        for i in 0..MAX_QUEUE_LEN as u64 {
            m.enqueue_sdu(pdu(i)).unwrap();
        }
        assert_eq!(m.enqueue_sdu(pdu(0)), Err(MacError::QueueOverflow));
    }

    #[test]
    fn empty_queue_sends_nothing() {
        let mut m = Mac::new(true, 3, 0, 1096, 44);
        assert!(m.next_transmission(0).is_none());
        assert_eq!(m.counters().tx_attempts, 0);
    }
}
