//! Adaptive mute-subframe controller.
//!
//! During every mute subframe the Pico runs a clear channel assessment. A
//! subframe counts as seized when the sensed energy is above the ED
//! threshold and a WLAN signal is recognised. At the end of each
//! reallocation cycle the seized fraction (the load ratio) selects how many
//! subframes of each frame are left to WLAN for the next cycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lte_mac::{pattern_for_count, SubframePattern, FRAME_US, MUTE_PRECEDENCE};
use crate::phy::CcaOutcome;

#[derive(Debug, Error, PartialEq)]
pub enum CoexistenceError {
    #[error("threshold table entry {index}: gamma_max must increase strictly within [0, 1] and spared must not decrease within 1..=9")]
    InvalidThresholdTable { index: usize },
    #[error("reallocation cycle {t_c_ms} ms is not a positive multiple of the 10 ms frame")]
    InvalidCycle { t_c_ms: u64 },
    #[error("initial spared count {0} out of range 0..=9")]
    InvalidInitialSpared(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SensingLedger {
    pub n_seize: u64,
    pub n_listen: u64,
}

impl SensingLedger {
    /// Books one mute subframe.
    pub fn record_mute_subframe(&mut self, cca: CcaOutcome) {
        self.n_listen += 1;
        if cca == CcaOutcome::WlanDetected {
            self.n_seize += 1;
        }
    }

    /// Seized fraction of mute subframes; 0 when nothing was listened to.
    pub fn load_ratio(&self) -> f64 {
        if self.n_listen == 0 {
            log::warn!("load ratio requested with no mute subframes recorded; using 0");
            return 0.0;
        }
        self.n_seize as f64 / self.n_listen as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub gamma_max: f64,
    pub spared: usize,
}

/// Ordered (gamma_max, spared) branches; any load ratio above the last
/// branch spares every subframe but subframe 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdTable {
    pub entries: Vec<ThresholdEntry>,
}

impl Default for ThresholdTable {
    fn default() -> Self {
        let gamma = [0.08, 0.16, 0.24, 0.32, 0.40, 0.48, 0.56, 0.94];
        Self {
            entries: gamma
                .iter()
                .enumerate()
                .map(|(i, &gamma_max)| ThresholdEntry {
                    gamma_max,
                    spared: i + 1,
                })
                .collect(),
        }
    }
}

pub const MAX_SPARED: usize = MUTE_PRECEDENCE.len();

impl ThresholdTable {
    pub fn validate(&self) -> Result<(), CoexistenceError> {
        for (i, e) in self.entries.iter().enumerate() {
            let in_range = (0.0..=1.0).contains(&e.gamma_max) && (1..=MAX_SPARED).contains(&e.spared);
            let ordered = i == 0 || {
                let prev = &self.entries[i - 1];
                e.gamma_max > prev.gamma_max && e.spared >= prev.spared
            };
            if !in_range || !ordered {
                return Err(CoexistenceError::InvalidThresholdTable { index: i });
            }
        }
        Ok(())
    }

    pub fn select_spared_count(&self, gamma: f64) -> usize {
        self.entries
            .iter()
            .find(|e| gamma <= e.gamma_max)
            .map(|e| e.spared)
            .unwrap_or(MAX_SPARED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleConfig {
    pub t_c_ms: u64,
    pub initial_spared: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            t_c_ms: 1_000,
            initial_spared: 5,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<(), CoexistenceError> {
        if self.t_c_ms == 0 || !(self.t_c_ms * 1_000).is_multiple_of(FRAME_US) {
            return Err(CoexistenceError::InvalidCycle { t_c_ms: self.t_c_ms });
        }
        if self.initial_spared > MAX_SPARED {
            return Err(CoexistenceError::InvalidInitialSpared(self.initial_spared));
        }
        Ok(())
    }

    pub fn frames_per_cycle(&self) -> u64 {
        self.t_c_ms * 1_000 / FRAME_US
    }
}

/// Result of closing a reallocation cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleDecision {
    pub gamma: f64,
    pub spared: usize,
    pub pattern: SubframePattern,
}

/// Computes the next pattern from the ledger and resets the ledger.
pub fn end_of_cycle(ledger: &mut SensingLedger, table: &ThresholdTable) -> CycleDecision {
    let gamma = ledger.load_ratio();
    let spared = table.select_spared_count(gamma);
    *ledger = SensingLedger::default();
    CycleDecision {
        gamma,
        spared,
        pattern: pattern_for_count(spared).expect("table validated to 1..=9"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_booking() {
        let mut l = SensingLedger::default();
        l.record_mute_subframe(CcaOutcome::Idle);
        assert_eq!((l.n_seize, l.n_listen), (0, 1));
        let mut l = SensingLedger::default();
        l.record_mute_subframe(CcaOutcome::WlanDetected);
        assert_eq!((l.n_seize, l.n_listen), (1, 1));
        let mut l = SensingLedger::default();
        l.record_mute_subframe(CcaOutcome::EnergyBusy);
        l.record_mute_subframe(CcaOutcome::CarrierSensed);
        assert_eq!((l.n_seize, l.n_listen), (0, 2));
    }

    #[test]
    fn load_ratio_values() {
        let r = |s, n| SensingLedger { n_seize: s, n_listen: n }.load_ratio();
        assert_eq!(r(0, 100), 0.0);
        assert_eq!(r(50, 100), 0.5);
        assert_eq!(r(100, 100), 1.0);
        assert_eq!(r(0, 0), 0.0);
    }

    #[test]
    fn branch_selection() {
        let t = ThresholdTable::default();
        t.validate().unwrap();
        assert_eq!(t.select_spared_count(0.05), 1);
        assert_eq!(t.select_spared_count(0.08), 1);
        assert_eq!(t.select_spared_count(0.20), 3);
        assert_eq!(t.select_spared_count(0.86), 8);
        assert_eq!(t.select_spared_count(0.90), 8);
        assert_eq!(t.select_spared_count(0.94), 8);
        assert_eq!(t.select_spared_count(0.99), 9);
        assert_eq!(t.select_spared_count(1.0), 9);
    }

    #[test]
    fn cycle_close_resets_ledger() {
        let t = ThresholdTable::default();
        let mut l = SensingLedger { n_seize: 0, n_listen: 500 };
        let d = end_of_cycle(&mut l, &t);
        assert_eq!(d.spared, 1);
        assert_eq!(d.pattern.mute_indices(), vec![1]);
        assert_eq!(l, SensingLedger::default());
        let mut l = SensingLedger { n_seize: 300, n_listen: 300 };
        assert_eq!(end_of_cycle(&mut l, &t).spared, 9);
    }

    #[test]
    fn config_validation() {
        assert!(CycleConfig { t_c_ms: 1_005, initial_spared: 5 }.validate().is_err());
        assert!(CycleConfig { t_c_ms: 0, initial_spared: 5 }.validate().is_err());
        assert!(CycleConfig { t_c_ms: 1_000, initial_spared: 10 }.validate().is_err());
        assert_eq!(CycleConfig::default().frames_per_cycle(), 100);
        let bad = ThresholdTable {
            entries: vec![
                ThresholdEntry { gamma_max: 0.5, spared: 2 },
                ThresholdEntry { gamma_max: 0.4, spared: 3 },
            ],
        };
        assert_eq!(bad.validate(), Err(CoexistenceError::InvalidThresholdTable { index: 1 }));
    }
}
