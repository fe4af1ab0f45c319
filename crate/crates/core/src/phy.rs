//! NR-style numerology, transport-block sizing, link budget to SINR, and the
//! SINR to BLER abstraction.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::channel::ChannelSample;
use crate::engine::{RngStreams, SimTime, Stream};

/// Bytes added below the application: UDP 8, IPv4 20, PDCP 2, RLC-UM 2,
/// MAC 2, CRC 3.
pub const HEADER_OVERHEAD_BYTES: u32 = 37;
pub const SUBCARRIERS_PER_PRB: u32 = 12;
pub const SYMBOLS_PER_SLOT: u32 = 14;
/// One DMRS/control symbol's worth of resource elements per PRB.
pub const RE_OVERHEAD_PER_PRB: u32 = 12;
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("numerology index {0} is outside 0..=3")]
    BadNumerology(u8),
    #[error("MCS index {0} is not in the MCS table")]
    UnknownMcs(u8),
    #[error(
        "transport block of {tb_bits} bits needs {needed} PRBs at MCS {mcs} but only {available} fit in {bw_mhz} MHz"
    )]
    DoesNotFit {
        tb_bits: u32,
        mcs: u8,
        needed: u32,
        available: u32,
        bw_mhz: f64,
    },
    #[error("SDU size must be at least 1 byte")]
    EmptySdu,
    #[error("MCS table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
    #[error("reading MCS table {path}: {source}")]
    TableIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Numerology {
    index: u8,
}

impl Numerology {
    pub fn new(index: u8) -> Result<Self, PhyError> {
        if index > 3 {
            return Err(PhyError::BadNumerology(index));
        }
        Ok(Numerology { index })
    }

    pub fn index(self) -> u8 {
        self.index
    }

    pub fn scs_khz(self) -> f64 {
        15.0 * f64::from(1u32 << self.index)
    }

    pub fn scs_hz(self) -> f64 {
        self.scs_khz() * 1e3
    }

    pub fn slot_period(self) -> SimTime {
        SimTime(1_000_000 >> self.index)
    }

    pub fn slot_period_ms(self) -> f64 {
        self.slot_period().as_ms()
    }

    pub fn slots_per_ms(self) -> u32 {
        1 << self.index
    }

    /// PRBs that fit in `bw_mhz`: `floor(bw / (12 * scs))`.
    pub fn prbs_in(self, bw_mhz: f64) -> u32 {
        (bw_mhz * 1e3 / (f64::from(SUBCARRIERS_PER_PRB) * self.scs_khz())).floor() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: u8,
    pub modulation_order: u8,
    pub code_rate: f64,
}

impl McsEntry {
    pub fn spectral_efficiency(&self) -> f64 {
        f64::from(self.modulation_order) * self.code_rate
    }
}

/// `(Qm, R * 1024)` for indices 0..=28, after the NR 64QAM table. Index 0 and
/// 28 carry the code rates 0.08 and 0.92 used for the platoon experiments,
/// and index 17 is nudged from 438 to 440 so spectral efficiency stays
/// strictly increasing.
const BUILTIN_MCS: [(u8, f64); 29] = [
    (2, 0.08 * 1024.0),
    (2, 157.0),
    (2, 193.0),
    (2, 251.0),
    (2, 308.0),
    (2, 379.0),
    (2, 449.0),
    (2, 526.0),
    (2, 602.0),
    (2, 679.0),
    (4, 340.0),
    (4, 378.0),
    (4, 434.0),
    (4, 490.0),
    (4, 553.0),
    (4, 616.0),
    (4, 658.0),
    (6, 440.0),
    (6, 466.0),
    (6, 517.0),
    (6, 567.0),
    (6, 616.0),
    (6, 666.0),
    (6, 719.0),
    (6, 772.0),
    (6, 822.0),
    (6, 873.0),
    (6, 910.0),
    (6, 0.92 * 1024.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl Default for McsTable {
    fn default() -> Self {
        Self::builtin()
    }
}

impl McsTable {
    pub fn builtin() -> Self {
        let entries = BUILTIN_MCS
            .iter()
            .enumerate()
            .map(|(i, &(qm, r1024))| McsEntry {
                index: i as u8,
                modulation_order: qm,
                code_rate: r1024 / 1024.0,
            })
            .collect();
        McsTable { entries }
    }

    /// Builds a table, checking `0 < R < 1`, unique indices, and strictly
    /// increasing spectral efficiency in index order.
    pub fn from_entries(mut entries: Vec<McsEntry>) -> Result<Self, PhyError> {
        entries.sort_by_key(|e| e.index);
        for (i, e) in entries.iter().enumerate() {
            if !(e.code_rate > 0.0 && e.code_rate < 1.0) {
                return Err(PhyError::BadTable {
                    line: i + 1,
                    reason: format!("code rate {} outside (0, 1)", e.code_rate),
                });
            }
            if e.modulation_order == 0 {
                return Err(PhyError::BadTable {
                    line: i + 1,
                    reason: "modulation order must be positive".into(),
                });
            }
            if i > 0 {
                let prev = &entries[i - 1];
                if prev.index == e.index {
                    return Err(PhyError::BadTable {
                        line: i + 1,
                        reason: format!("duplicate index {}", e.index),
                    });
                }
                if e.spectral_efficiency() <= prev.spectral_efficiency() {
                    return Err(PhyError::BadTable {
                        line: i + 1,
                        reason: format!(
                            "spectral efficiency of index {} does not exceed index {}",
                            e.index, prev.index
                        ),
                    });
                }
            }
        }
        Ok(McsTable { entries })
    }

    /// Parses `index,Qm,R` lines. A header line and `#` comments are skipped.
    pub fn parse_csv(text: &str) -> Result<Self, PhyError> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with(|c: char| c.is_ascii_alphabetic()) {
                continue;
            }
            let bad = |reason: String| PhyError::BadTable { line: n + 1, reason };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", cols.len())));
            }
            let index = cols[0]
                .parse::<u8>()
                .map_err(|e| bad(format!("index {:?}: {e}", cols[0])))?;
            let modulation_order = cols[1]
                .parse::<u8>()
                .map_err(|e| bad(format!("Qm {:?}: {e}", cols[1])))?;
            let code_rate = cols[2]
                .parse::<f64>()
                .map_err(|e| bad(format!("R {:?}: {e}", cols[2])))?;
            entries.push(McsEntry {
                index,
                modulation_order,
                code_rate,
            });
        }
        if entries.is_empty() {
            return Err(PhyError::BadTable {
                line: 0,
                reason: "no entries".into(),
            });
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self, PhyError> {
        let text = std::fs::read_to_string(path).map_err(|source| PhyError::TableIo {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn get(&self, index: u8) -> Result<McsEntry, PhyError> {
        self.entries
            .iter()
            .find(|e| e.index == index)
            .copied()
            .ok_or(PhyError::UnknownMcs(index))
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransportBlock {
    pub tb_bits: u32,
    pub n_prb: u32,
    pub mcs: u8,
    pub harq_attempt: u32,
    pub rlc_sn: u64,
    pub tx_slot: u64,
}

impl fmt::Display for TransportBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sn={} slot={} attempt={} bits={} prb={}",
            self.rlc_sn, self.tx_slot, self.harq_attempt, self.tb_bits, self.n_prb
        )
    }
}

pub fn res_per_prb() -> u32 {
    SUBCARRIERS_PER_PRB * SYMBOLS_PER_SLOT - RE_OVERHEAD_PER_PRB
}

/// Transport block size in bits and the PRBs needed to carry it in one slot.
pub fn tbs_and_prb(
    sdu_bytes: u32,
    mcs: &McsEntry,
    num: Numerology,
    bw_mhz: f64,
) -> Result<(u32, u32), PhyError> {
    if sdu_bytes == 0 {
        return Err(PhyError::EmptySdu);
    }
    let tb_bits = 8 * (sdu_bytes + HEADER_OVERHEAD_BYTES);
    let bits_per_prb = mcs.spectral_efficiency() * f64::from(res_per_prb());
    let n_prb = ((f64::from(tb_bits) / bits_per_prb).ceil() as u32).max(1);
    let available = num.prbs_in(bw_mhz);
    if n_prb > available {
        return Err(PhyError::DoesNotFit {
            tb_bits,
            mcs: mcs.index,
            needed: n_prb,
            available,
            bw_mhz,
        });
    }
    Ok((tb_bits, n_prb))
}

/// Thermal noise over `n_prb` PRBs, dBm.
pub fn noise_dbm(n_prb: u32, num: Numerology, noise_figure_db: f64) -> f64 {
    let bw_hz = f64::from(n_prb * SUBCARRIERS_PER_PRB) * num.scs_hz();
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bw_hz.log10() + noise_figure_db
}

/// Single link, no interference: SINR is SNR over the allocated PRBs.
pub fn sinr(sample: &ChannelSample, n_prb: u32, num: Numerology, noise_figure_db: f64) -> f64 {
    sample.rx_power_dbm - noise_dbm(n_prb, num, noise_figure_db)
}

/// Logistic BLER curve centred on a gap-to-capacity threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkAbstraction {
    /// Gap to the Shannon SNR for the MCS spectral efficiency, dB.
    pub gap_db: f64,
    /// Logistic slope, per dB.
    pub slope_per_db: f64,
}

impl LinkAbstraction {
    /// `gap_db + 10 log10(2^SE - 1)`.
    pub fn threshold_db(&self, mcs: &McsEntry) -> f64 {
        self.gap_db + 10.0 * (mcs.spectral_efficiency().exp2() - 1.0).log10()
    }

    pub fn bler(&self, sinr_db: f64, mcs: &McsEntry) -> f64 {
        1.0 / (1.0 + (self.slope_per_db * (sinr_db - self.threshold_db(mcs))).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxOutcome {
    pub sinr_db: f64,
    pub bler: f64,
    pub success: bool,
}

/// Per-run PHY: link budget, BLER, and the error draw.
#[derive(Debug, Clone)]
pub struct Phy {
    pub numerology: Numerology,
    pub noise_figure_db: f64,
    pub link: LinkAbstraction,
    pub mcs: McsEntry,
    /// Test hook: replaces the computed BLER.
    pub forced_bler: Option<f64>,
}

impl Phy {
    pub fn bler(&self, tb: &TransportBlock, sample: &ChannelSample) -> (f64, f64) {
        let s = sinr(sample, tb.n_prb, self.numerology, self.noise_figure_db);
        let b = self.forced_bler.unwrap_or_else(|| self.link.bler(s, &self.mcs));
        (s, b)
    }

    /// One error draw from `phy-error`: the block fails with probability BLER.
    pub fn transmit(
        &self,
        tb: &TransportBlock,
        sample: &ChannelSample,
        rngs: &mut RngStreams,
    ) -> TxOutcome {
        let (sinr_db, bler) = self.bler(tb, sample);
        let failed = rngs
            .bernoulli(Stream::PhyError, bler.clamp(0.0, 1.0))
            .expect("clamped probability");
        TxOutcome {
            sinr_db,
            bler,
            success: !failed,
        }
    }
}
