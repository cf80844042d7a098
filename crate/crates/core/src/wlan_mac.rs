//! WLAN DCF (CSMA/CA) with binary exponential backoff.
//!
//! The per-station Markov state is the pair (backoff level, backoff
//! counter). The counter counts idle backoff slots, freezes while the medium
//! is busy and needs a fresh DIFS of idle medium before it resumes.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Micros;

#[derive(Debug, Error, PartialEq)]
pub enum WlanError {
    #[error("cw_min {cw_min} exceeds cw_max {cw_max}")]
    ContentionWindow { cw_min: u32, cw_max: u32 },
    #[error("DCF duration `{0}` must be positive")]
    ZeroDuration(&'static str),
    #[error("WLAN rate ladder must be non-empty, with increasing rates and thresholds")]
    RateLadder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcfParams {
    pub slot: Micros,
    pub difs: Micros,
    pub sifs: Micros,
    pub cw_min: u32,
    pub cw_max: u32,
    pub ack_duration: Micros,
    pub preamble: Micros,
    pub max_backoff_level: u32,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            slot: 9,
            difs: 34,
            sifs: 16,
            cw_min: 15,
            cw_max: 1023,
            ack_duration: 44,
            preamble: 20,
            max_backoff_level: 6,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<(), WlanError> {
        if self.cw_min > self.cw_max {
            return Err(WlanError::ContentionWindow {
                cw_min: self.cw_min,
                cw_max: self.cw_max,
            });
        }
        for (name, v) in [
            ("slot", self.slot),
            ("difs", self.difs),
            ("sifs", self.sifs),
            ("ack_duration", self.ack_duration),
        ] {
            if v == 0 {
                return Err(WlanError::ZeroDuration(name));
            }
        }
        Ok(())
    }

    /// Contention window for a backoff level.
    pub fn contention_window(&self, level: u32) -> u32 {
        let grown = (self.cw_min as u64 + 1) << level.min(32);
        (grown - 1).min(self.cw_max as u64) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcfPhase {
    IdleNoData,
    Difs,
    Backoff,
    Transmitting,
    WaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcfState {
    pub backoff_level: u32,
    pub backoff_counter: u32,
    pub phase: DcfPhase,
}

impl DcfState {
    pub fn new<R: Rng + ?Sized>(params: &DcfParams, rng: &mut R) -> Self {
        Self {
            backoff_level: 0,
            backoff_counter: draw_backoff(0, params, rng),
            phase: DcfPhase::IdleNoData,
        }
    }
}

pub fn draw_backoff<R: Rng + ?Sized>(level: u32, params: &DcfParams, rng: &mut R) -> u32 {
    let level = level.min(params.max_backoff_level);
    rng.random_range(0..=params.contention_window(level))
}

/// Advances the state machine by one slot.
pub fn dcf_tick(state: DcfState, channel_idle: bool) -> DcfState {
    let mut next = state;
    match (state.phase, channel_idle) {
        (DcfPhase::Difs | DcfPhase::Backoff, false) => next.phase = DcfPhase::Difs,
        (DcfPhase::Difs, true) => {
            next.phase = if state.backoff_counter == 0 {
                DcfPhase::Transmitting
            } else {
                DcfPhase::Backoff
            };
        }
        (DcfPhase::Backoff, true) => {
            if state.backoff_counter > 0 {
                next.backoff_counter -= 1;
            }
            if next.backoff_counter == 0 {
                next.phase = DcfPhase::Transmitting;
            }
        }
        _ => {}
    }
    next
}

/// Applies `slots` idle backoff slots after DIFS has elapsed; equivalent to
/// `slots` consecutive idle `dcf_tick`s in the Backoff phase.
pub fn dcf_idle_slots(state: DcfState, slots: u32) -> DcfState {
    debug_assert!(slots <= state.backoff_counter);
    let counter = state.backoff_counter - slots.min(state.backoff_counter);
    DcfState {
        backoff_counter: counter,
        phase: if counter == 0 {
            DcfPhase::Transmitting
        } else {
            DcfPhase::Backoff
        },
        ..state
    }
}

pub fn on_collision<R: Rng + ?Sized>(state: DcfState, params: &DcfParams, rng: &mut R) -> DcfState {
    let level = (state.backoff_level + 1).min(params.max_backoff_level);
    DcfState {
        backoff_level: level,
        backoff_counter: draw_backoff(level, params, rng),
        phase: DcfPhase::Backoff,
    }
}

/// Level reset and post-backoff draw after an acknowledged frame.
pub fn on_success<R: Rng + ?Sized>(state: DcfState, params: &DcfParams, rng: &mut R) -> DcfState {
    let _ = state;
    DcfState {
        backoff_level: 0,
        backoff_counter: draw_backoff(0, params, rng),
        phase: DcfPhase::Backoff,
    }
}

/// Airtime of the data portion: preamble plus payload at the PHY rate.
pub fn data_duration(payload_bits: u64, phy_rate_bps: f64, params: &DcfParams) -> Micros {
    params.preamble + (payload_bits as f64 / phy_rate_bps * 1e6).ceil() as Micros
}

/// Full airtime of a successful exchange: data, SIFS and ACK.
pub fn wlan_tx_duration(payload_bits: u64, phy_rate_bps: f64, params: &DcfParams) -> Micros {
    data_duration(payload_bits, phy_rate_bps, params) + params.sifs + params.ack_duration
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlanRate {
    pub rate_mbps: f64,
    pub min_sinr: f64,
}

/// Static per-link rate ladder, 6 to 54 Mb/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateLadder {
    pub rates: Vec<WlanRate>,
}

impl Default for RateLadder {
    fn default() -> Self {
        let pairs = [
            (6.0, 5.0),
            (9.0, 6.0),
            (12.0, 8.0),
            (18.0, 11.0),
            (24.0, 14.0),
            (36.0, 18.0),
            (48.0, 22.0),
            (54.0, 24.0),
        ];
        Self {
            rates: pairs
                .iter()
                .map(|&(rate_mbps, min_sinr)| WlanRate { rate_mbps, min_sinr })
                .collect(),
        }
    }
}

impl RateLadder {
    pub fn validate(&self) -> Result<(), WlanError> {
        let ok = !self.rates.is_empty()
            && self.rates.iter().all(|r| r.rate_mbps > 0.0)
            && self.rates.windows(2).all(|w| {
                w[1].rate_mbps > w[0].rate_mbps && w[1].min_sinr > w[0].min_sinr
            });
        if ok {
            Ok(())
        } else {
            Err(WlanError::RateLadder)
        }
    }

    /// Fastest rate whose threshold the SINR meets; `None` below the ladder.
    pub fn select(&self, sinr_db: f64) -> Option<WlanRate> {
        self.rates.iter().rev().find(|r| r.min_sinr <= sinr_db).copied()
    }

    pub fn lowest_threshold(&self) -> f64 {
        self.rates[0].min_sinr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WlanPacket {
    pub user: usize,
    pub bits: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StationCounters {
    pub arrived: u64,
    pub delivered: u64,
    pub delivered_bits: u64,
    pub attempts: u64,
    pub failures: u64,
    /// Idle backoff slots observed while counting down.
    pub idle_backoff_slots: u64,
    pub decrements: u64,
}

/// One AP: DCF state plus its downlink queue.
#[derive(Debug, Clone)]
pub struct WlanStation {
    pub dcf: DcfState,
    pub queue: VecDeque<WlanPacket>,
    pub counters: StationCounters,
}

impl WlanStation {
    pub fn new<R: Rng + ?Sized>(params: &DcfParams, rng: &mut R) -> Self {
        Self {
            dcf: DcfState::new(params, rng),
            queue: VecDeque::new(),
            counters: StationCounters::default(),
        }
    }

    pub fn enqueue(&mut self, packet: WlanPacket) {
        self.queue.push_back(packet);
        self.counters.arrived += 1;
        if self.dcf.phase == DcfPhase::IdleNoData {
            self.dcf.phase = DcfPhase::Difs;
        }
    }

    /// Counts `slots` idle backoff slots.
    pub fn observe_idle_slots(&mut self, slots: u32) {
        let before = self.dcf.backoff_counter;
        self.dcf = dcf_idle_slots(self.dcf, slots);
        self.counters.idle_backoff_slots += slots as u64;
        self.counters.decrements += (before - self.dcf.backoff_counter) as u64;
    }

    /// Busy medium: freeze and wait for DIFS again.
    pub fn freeze(&mut self) {
        if matches!(self.dcf.phase, DcfPhase::Backoff | DcfPhase::Difs) {
            self.dcf.phase = DcfPhase::Difs;
        }
    }

    pub fn succeed<R: Rng + ?Sized>(&mut self, params: &DcfParams, rng: &mut R) -> WlanPacket {
        let packet = self.queue.pop_front().expect("acknowledged frame was queued");
        self.counters.delivered += 1;
        self.counters.delivered_bits += packet.bits;
        self.dcf = on_success(self.dcf, params, rng);
        self.after_exchange();
        packet
    }

    pub fn fail<R: Rng + ?Sized>(&mut self, params: &DcfParams, rng: &mut R) {
        self.counters.failures += 1;
        self.dcf = on_collision(self.dcf, params, rng);
        self.after_exchange();
    }

    fn after_exchange(&mut self) {
        self.dcf.phase = if self.queue.is_empty() {
            DcfPhase::IdleNoData
        } else {
            DcfPhase::Difs
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct ZeroRng;

    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0);
        }
    }

    fn backoff(counter: u32) -> DcfState {
        DcfState {
            backoff_level: 0,
            backoff_counter: counter,
            phase: DcfPhase::Backoff,
        }
    }

    #[test]
    fn contention_window_sequence() {
        let p = DcfParams::default();
        let cws: Vec<u32> = (0..=7).map(|l| p.contention_window(l)).collect();
        assert_eq!(cws, vec![15, 31, 63, 127, 255, 511, 1023, 1023]);
    }

    #[test]
    fn draws_within_window() {
        let p = DcfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws: Vec<u32> = (0..5_000).map(|_| draw_backoff(0, &p, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d <= 15));
        assert!(draws.contains(&0) && draws.contains(&15));
        assert!((0..5_000).all(|_| draw_backoff(20, &p, &mut rng) <= 1023));
        assert_eq!(draw_backoff(3, &p, &mut ZeroRng), 0);
    }

    #[test]
    fn countdown_to_transmit() {
        let mut s = backoff(3);
        for _ in 0..2 {
            s = dcf_tick(s, true);
            assert_eq!(s.phase, DcfPhase::Backoff);
        }
        s = dcf_tick(s, true);
        assert_eq!(s.phase, DcfPhase::Transmitting);
        assert_eq!(s.backoff_counter, 0);
    }

    #[test]
    fn busy_freezes_counter() {
        let s = dcf_tick(backoff(3), false);
        assert_eq!(s.backoff_counter, 3);
        assert_eq!(s.phase, DcfPhase::Difs);
        // DIFS slot does not decrement
        let s = dcf_tick(s, true);
        assert_eq!((s.backoff_counter, s.phase), (3, DcfPhase::Backoff));
    }

    #[test]
    fn zero_counter_transmits_immediately() {
        assert_eq!(dcf_tick(backoff(0), true).phase, DcfPhase::Transmitting);
        let difs = DcfState { phase: DcfPhase::Difs, ..backoff(0) };
        assert_eq!(dcf_tick(difs, true).phase, DcfPhase::Transmitting);
    }

    #[test]
    fn collision_grows_window() {
        let p = DcfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = on_collision(backoff(0), &p, &mut rng);
        assert_eq!(s.backoff_level, 1);
        assert_eq!(p.contention_window(s.backoff_level), 31);
        assert!(s.backoff_counter <= 31);
        let capped = DcfState { backoff_level: 6, ..backoff(0) };
        assert_eq!(on_collision(capped, &p, &mut rng).backoff_level, 6);
    }

    #[test]
    fn success_resets_level_and_dequeues() {
        let p = DcfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = WlanStation::new(&p, &mut rng);
        st.enqueue(WlanPacket { user: 0, bits: 12_000 });
        st.enqueue(WlanPacket { user: 1, bits: 12_000 });
        st.dcf.backoff_level = 4;
        st.succeed(&p, &mut rng);
        assert_eq!(st.dcf.backoff_level, 0);
        assert!(st.dcf.backoff_counter <= 15);
        assert_eq!(st.queue.len(), 1);
        assert_eq!(st.dcf.phase, DcfPhase::Difs);
        st.succeed(&p, &mut rng);
        assert_eq!(st.dcf.phase, DcfPhase::IdleNoData);
    }

    #[test]
    fn airtime() {
        let zero = DcfParams {
            preamble: 0,
            sifs: 0,
            ack_duration: 0,
            ..DcfParams::default()
        };
        assert_eq!(wlan_tx_duration(12_000, 24e6, &zero), 500);
        assert_eq!(data_duration(24_000, 24e6, &zero), 1_000);
        // 20 preamble + 500 payload + 16 SIFS + 44 ACK
        assert_eq!(wlan_tx_duration(12_000, 24e6, &DcfParams::default()), 580);
    }

    #[test]
    fn rate_selection() {
        let l = RateLadder::default();
        l.validate().unwrap();
        assert_eq!(l.select(4.9), None);
        assert_eq!(l.select(5.0).unwrap().rate_mbps, 6.0);
        assert_eq!(l.select(19.0).unwrap().rate_mbps, 36.0);
        assert_eq!(l.select(40.0).unwrap().rate_mbps, 54.0);
    }
}
