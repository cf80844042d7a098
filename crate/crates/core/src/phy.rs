//! Link-level abstraction: SINR from the set of active transmitters,
//! lagged MCS selection, HARQ chase combining and clear channel assessment.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeKind;
use crate::Micros;

#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("chase combining needs at least one attempt")]
    NoAttempts,
    #[error("MCS table must be non-empty")]
    EmptyMcsTable,
    #[error("MCS table entry {index}: thresholds must increase strictly and efficiencies must not decrease")]
    UnsortedMcsTable { index: usize },
    #[error("carrier-sense threshold {cs} dBm exceeds energy-detection threshold {ed} dBm")]
    ThresholdOrder { cs: f64, ed: f64 },
}

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Static received powers between every pair of nodes, plus the noise floor.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    n: usize,
    rx_dbm: Vec<f64>,
    rx_mw: Vec<f64>,
    kinds: Vec<NodeKind>,
    pub noise_floor_dbm: f64,
    noise_mw: f64,
}

impl LinkBudget {
    /// `rx_dbm(tx, rx)` gives the power received at `rx` from `tx`.
    pub fn new(
        kinds: Vec<NodeKind>,
        noise_floor_dbm: f64,
        mut rx_dbm: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let n = kinds.len();
        let mut table = vec![f64::NEG_INFINITY; n * n];
        for tx in 0..n {
            for rx in 0..n {
                if tx != rx {
                    table[tx * n + rx] = rx_dbm(tx, rx);
                }
            }
        }
        let rx_mw = table.iter().map(|&d| dbm_to_mw(d)).collect();
        Self {
            n,
            rx_dbm: table,
            rx_mw,
            kinds,
            noise_floor_dbm,
            noise_mw: dbm_to_mw(noise_floor_dbm),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn rx_dbm(&self, tx: usize, rx: usize) -> f64 {
        self.rx_dbm[tx * self.n + rx]
    }

    pub fn rx_mw(&self, tx: usize, rx: usize) -> f64 {
        self.rx_mw[tx * self.n + rx]
    }

    pub fn noise_mw(&self) -> f64 {
        self.noise_mw
    }

    /// Interference power (mW) at `rx` from every active node except `tx` and `rx`.
    pub fn interference_mw(&self, rx: usize, tx: usize, active: &[usize]) -> f64 {
        active
            .iter()
            .filter(|&&a| a != tx && a != rx)
            .map(|&a| self.rx_mw(a, rx))
            .sum()
    }

    /// SINR in dB at `rx` for the signal of `tx` given the active set.
    pub fn sinr_at(&self, rx: usize, tx: usize, active: &[usize]) -> f64 {
        let signal = self.rx_mw(tx, rx);
        mw_to_dbm(signal) - mw_to_dbm(self.noise_mw + self.interference_mw(rx, tx, active))
    }

    /// Interference-free SINR.
    pub fn snr(&self, rx: usize, tx: usize) -> f64 {
        self.rx_dbm(tx, rx) - self.noise_floor_dbm
    }

    /// Energy detection plus WLAN carrier sense at `listener`.
    pub fn cca_assess(
        &self,
        listener: usize,
        active: &[usize],
        thresholds: &CcaThresholds,
    ) -> CcaOutcome {
        let mut total_mw = 0.0;
        let mut wlan_sensed = false;
        for &a in active.iter().filter(|&&a| a != listener) {
            total_mw += self.rx_mw(a, listener);
            if self.kinds[a].is_wlan() && self.rx_dbm(a, listener) >= thresholds.cs_threshold {
                wlan_sensed = true;
            }
        }
        let energy_busy = total_mw > 0.0 && mw_to_dbm(total_mw) >= thresholds.ed_threshold;
        match (energy_busy, wlan_sensed) {
            (true, true) => CcaOutcome::WlanDetected,
            (true, false) => CcaOutcome::EnergyBusy,
            (false, true) => CcaOutcome::CarrierSensed,
            (false, false) => CcaOutcome::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcaThresholds {
    pub ed_threshold: f64,
    pub cs_threshold: f64,
}

impl Default for CcaThresholds {
    fn default() -> Self {
        Self {
            ed_threshold: -62.0,
            cs_threshold: -82.0,
        }
    }
}

impl CcaThresholds {
    pub fn validate(&self) -> Result<(), PhyError> {
        if self.cs_threshold > self.ed_threshold {
            return Err(PhyError::ThresholdOrder {
                cs: self.cs_threshold,
                ed: self.ed_threshold,
            });
        }
        Ok(())
    }
}

/// Result of a clear channel assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcaOutcome {
    /// Neither detector fired.
    Idle,
    /// Total energy above the ED threshold, no WLAN signal recognised.
    EnergyBusy,
    /// A WLAN signal above the CS threshold while total energy stays below ED.
    CarrierSensed,
    /// Energy above ED and a WLAN signal recognised.
    WlanDetected,
}

impl CcaOutcome {
    pub fn is_busy(self) -> bool {
        self != CcaOutcome::Idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub min_sinr: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
}

/// CQI-style efficiencies (bits/s/Hz) on a 2 dB threshold grid from -6 to 22 dB.
const DEFAULT_EFFICIENCIES: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547,
];

impl Default for McsTable {
    fn default() -> Self {
        Self {
            entries: DEFAULT_EFFICIENCIES
                .iter()
                .enumerate()
                .map(|(i, &efficiency)| McsEntry {
                    min_sinr: -6.0 + 2.0 * i as f64,
                    efficiency,
                })
                .collect(),
        }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<(), PhyError> {
        if self.entries.is_empty() {
            return Err(PhyError::EmptyMcsTable);
        }
        for (i, w) in self.entries.windows(2).enumerate() {
            if w[1].min_sinr.partial_cmp(&w[0].min_sinr) != Some(std::cmp::Ordering::Greater) || w[1].efficiency < w[0].efficiency {
                return Err(PhyError::UnsortedMcsTable { index: i + 1 });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest index whose threshold is at or below `sinr_db`; 0 when none is.
    pub fn index_for(&self, sinr_db: f64) -> usize {
        self.entries
            .iter()
            .rposition(|e| e.min_sinr <= sinr_db)
            .unwrap_or(0)
    }

    pub fn lowest_threshold(&self) -> f64 {
        self.entries[0].min_sinr
    }

    /// Transport block size for one subframe over `bandwidth_hz`.
    pub fn transport_block_bits(&self, mcs: usize, bandwidth_hz: f64, duration_us: Micros) -> u64 {
        (self.entries[mcs].efficiency * bandwidth_hz * duration_us as f64 * 1e-6).floor() as u64
    }
}

/// Time-stamped SINR samples for one link, oldest first.
#[derive(Debug, Clone, Default)]
pub struct SinrHistory {
    samples: VecDeque<(Micros, f64)>,
    capacity: usize,
}

impl SinrHistory {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    /// Appends a sample. Timestamps must be strictly increasing.
    pub fn push(&mut self, t: Micros, sinr_db: f64) {
        if let Some(&(last, _)) = self.samples.back() {
            assert!(t > last, "SINR samples out of order: {t} after {last}");
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, sinr_db));
    }

    /// Most recent sample taken at or before `t`.
    pub fn latest_at_or_before(&self, t: Micros) -> Option<f64> {
        self.samples
            .iter()
            .rev()
            .find(|(ts, _)| *ts <= t)
            .map(|&(_, s)| s)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Chooses the MCS from the most recent sample that is at least `lag` old.
pub fn select_mcs(history: &SinrHistory, now: Micros, lag: Micros, table: &McsTable) -> usize {
    now.checked_sub(lag)
        .and_then(|t| history.latest_at_or_before(t))
        .map(|s| table.index_for(s))
        .unwrap_or(0)
}

/// Effective SINR of identical retransmissions: linear sum of the attempts.
pub fn chase_combine(attempts: &[f64]) -> Result<f64, PhyError> {
    if attempts.is_empty() {
        return Err(PhyError::NoAttempts);
    }
    Ok(mw_to_dbm(attempts.iter().map(|&a| dbm_to_mw(a)).sum()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeOutcome {
    Success,
    Failure,
}

/// Threshold decoder: success iff the effective SINR reaches the MCS threshold.
pub fn attempt_decode(effective_sinr: f64, mcs: usize, table: &McsTable) -> DecodeOutcome {
    if effective_sinr >= table.entries[mcs].min_sinr {
        DecodeOutcome::Success
    } else {
        DecodeOutcome::Failure
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarqProcess {
    pub attempt_sinrs: Vec<f64>,
    pub max_retx: u32,
    pub mcs: usize,
}

impl HarqProcess {
    pub fn new(mcs: usize, max_retx: u32) -> Self {
        Self {
            attempt_sinrs: Vec::with_capacity(max_retx as usize + 1),
            max_retx,
            mcs,
        }
    }

    /// Records one attempt and decodes on the combined SINR.
    pub fn attempt(&mut self, sinr_db: f64, table: &McsTable) -> DecodeOutcome {
        debug_assert!(!self.exhausted());
        self.attempt_sinrs.push(sinr_db);
        let combined = chase_combine(&self.attempt_sinrs).expect("at least one attempt");
        attempt_decode(combined, self.mcs, table)
    }

    pub fn attempts(&self) -> usize {
        self.attempt_sinrs.len()
    }

    /// No further retransmission is allowed.
    pub fn exhausted(&self) -> bool {
        self.attempt_sinrs.len() > self.max_retx as usize
    }
}
