//! Poisson packet arrivals, constant-rate or linearly ramped.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::Micros;

/// Exponential inter-arrival gap in µs for a rate in packets per ms.
/// A zero rate never produces an arrival.
pub fn next_interarrival<R: Rng + ?Sized>(rate_per_ms: f64, rng: &mut R) -> f64 {
    if rate_per_ms <= 0.0 {
        return f64::INFINITY;
    }
    let gap_ms = Exp::new(rate_per_ms).expect("positive rate").sample(rng);
    // Exp can return exactly 0.0; keep gaps strictly positive
    (gap_ms * 1_000.0).max(f64::MIN_POSITIVE)
}

/// Offered load in bit/s.
pub fn offered_load(rate_per_ms: f64, packet_bits: u64) -> f64 {
    rate_per_ms * packet_bits as f64 * 1_000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampProfile {
    pub start_rate: f64,
    pub end_rate: f64,
    /// Ramp length in ms. Zero means "the whole drop".
    #[serde(default)]
    pub duration_ms: u64,
}

impl Default for RampProfile {
    fn default() -> Self {
        Self {
            start_rate: 0.01,
            end_rate: 1.5,
            duration_ms: 0,
        }
    }
}

impl RampProfile {
    pub fn constant(rate: f64) -> Self {
        Self {
            start_rate: rate,
            end_rate: rate,
            duration_ms: 1,
        }
    }

    pub fn rate_at(&self, t: Micros) -> f64 {
        let dur = self.duration_ms as f64 * 1_000.0;
        if dur <= 0.0 {
            return self.end_rate;
        }
        let frac = (t as f64 / dur).min(1.0);
        self.start_rate + (self.end_rate - self.start_rate) * frac
    }

    pub fn peak_rate(&self) -> f64 {
        self.start_rate.max(self.end_rate)
    }

    /// Expected arrivals over [0, horizon].
    pub fn expected_arrivals(&self, horizon: Micros) -> f64 {
        let dur = self.duration_ms * 1_000;
        let ramp_end = horizon.min(dur) as f64;
        let rate_end = self.rate_at(horizon.min(dur));
        let ramp_part = (self.start_rate + rate_end) / 2.0 * ramp_end / 1_000.0;
        let flat = horizon.saturating_sub(dur) as f64 / 1_000.0 * self.end_rate;
        ramp_part + flat
    }
}

pub fn ramp_rate(profile: &RampProfile, t: Micros) -> f64 {
    profile.rate_at(t)
}

/// Non-homogeneous Poisson source driven by thinning against the peak rate.
#[derive(Debug, Clone)]
pub struct PoissonSource {
    pub profile: RampProfile,
    pub packet_bits: u64,
    /// Continuous time of the next accepted arrival (µs).
    next_arrival: f64,
}

impl PoissonSource {
    pub fn new<R: Rng + ?Sized>(profile: RampProfile, packet_bits: u64, rng: &mut R) -> Self {
        let mut s = Self {
            profile,
            packet_bits,
            next_arrival: 0.0,
        };
        s.next_arrival = s.draw_after(0.0, rng);
        s
    }

    fn draw_after<R: Rng + ?Sized>(&self, from: f64, rng: &mut R) -> f64 {
        let peak = self.profile.peak_rate();
        let mut t = from;
        loop {
            t += next_interarrival(peak, rng);
            if !t.is_finite() {
                return f64::INFINITY;
            }
            let accept = self.profile.rate_at(t as Micros) / peak;
            if accept >= 1.0 || rng.random::<f64>() < accept {
                return t;
            }
        }
    }

    /// Event time of the pending arrival, rounded up to the µs grid.
    pub fn next_arrival_us(&self) -> Option<Micros> {
        self.next_arrival
            .is_finite()
            .then(|| self.next_arrival.ceil() as Micros)
    }

    /// Consumes the pending arrival and draws the next one.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.next_arrival = self.draw_after(self.next_arrival, rng);
    }

    /// Arrival times up to `horizon` (used by tests and diagnostics).
    pub fn arrivals_until<R: Rng + ?Sized>(&mut self, horizon: Micros, rng: &mut R) -> Vec<Micros> {
        let mut out = Vec::new();
        while let Some(t) = self.next_arrival_us().filter(|&t| t <= horizon) {
            out.push(t);
            self.advance(rng);
        }
        out
    }
}

/// Round-robin assignment of arrivals to users.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    next: usize,
    n: usize,
}

impl RoundRobin {
    pub fn new(n: usize) -> Self {
        Self { next: 0, n }
    }

    pub fn next_user(&mut self) -> Option<usize> {
        if self.n == 0 {
            return None;
        }
        let u = self.next;
        self.next = (self.next + 1) % self.n;
        Some(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| next_interarrival(1.0, &mut rng)).collect();
        assert!(samples.iter().all(|&s| s > 0.0));
        let mean = samples.iter().sum::<f64>() / n as f64;
        assert!((mean - 1_000.0).abs() / 1_000.0 < 0.02, "mean {mean}");
    }

    #[test]
    fn zero_rate_is_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(next_interarrival(0.0, &mut rng).is_infinite());
        let mut src = PoissonSource::new(RampProfile::constant(0.0), 100, &mut rng);
        assert!(src.arrivals_until(1_000_000_000, &mut rng).is_empty());
    }

    #[test]
    fn offered_loads() {
        assert_abs_diff_eq!(offered_load(0.5, 20_000), 10e6);
        assert_abs_diff_eq!(offered_load(2.0, 20_000), 40e6);
        assert_abs_diff_eq!(offered_load(0.0, 20_000), 0.0);
    }

    #[test]
    fn ramp_interpolation() {
        let p = RampProfile {
            start_rate: 0.01,
            end_rate: 1.5,
            duration_ms: 100_000,
        };
        assert_abs_diff_eq!(ramp_rate(&p, 0), 0.01);
        assert_abs_diff_eq!(ramp_rate(&p, 100_000_000), 1.5);
        assert_abs_diff_eq!(ramp_rate(&p, 50_000_000), 0.755, epsilon = 1e-12);
        assert_abs_diff_eq!(ramp_rate(&p, 200_000_000), 1.5);
    }

    #[test]
    fn ramped_arrivals_match_integral() {
        let p = RampProfile {
            start_rate: 0.01,
            end_rate: 1.5,
            duration_ms: 20_000,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut src = PoissonSource::new(p, 12_000, &mut rng);
        let arrivals = src.arrivals_until(20_000_000, &mut rng);
        let expected = p.expected_arrivals(20_000_000);
        assert_abs_diff_eq!(expected, 15_100.0, epsilon = 1e-6);
        // Poisson sd ~ 123
        assert!((arrivals.len() as f64 - expected).abs() < 500.0);
        // first half carries roughly a quarter of the arrivals
        let first_half = arrivals.iter().filter(|&&t| t < 10_000_000).count() as f64;
        let expected_half = p.expected_arrivals(10_000_000);
        assert!((first_half - expected_half).abs() < 300.0);
        assert!(arrivals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn round_robin_cycles() {
        let mut rr = RoundRobin::new(3);
        let seq: Vec<_> = (0..7).map(|_| rr.next_user().unwrap()).collect();
        assert_eq!(seq, vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(RoundRobin::new(0).next_user(), None);
    }
}
