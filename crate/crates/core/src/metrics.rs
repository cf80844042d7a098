//! Throughput accounting and the derived comparisons: loss against a
//! baseline, combined throughput and the fixed-mode comparison tables.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("baseline throughput must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("cycle length must be positive")]
    ZeroCycle,
}

/// Delivered payload over one cycle, in Mb/s.
pub fn cycle_throughput(delivered_bits: u64, t_c_ms: u64) -> f64 {
    assert!(t_c_ms > 0, "cycle length must be positive");
    delivered_bits as f64 / (t_c_ms as f64 / 1_000.0) / 1e6
}

/// Checked variant of [`cycle_throughput`].
pub fn try_cycle_throughput(delivered_bits: u64, t_c_ms: u64) -> Result<f64, MetricsError> {
    if t_c_ms == 0 {
        return Err(MetricsError::ZeroCycle);
    }
    Ok(cycle_throughput(delivered_bits, t_c_ms))
}

/// Relative throughput loss in percent.
pub fn loss_percent(baseline: f64, value: f64) -> Result<f64, MetricsError> {
    if baseline <= 0.0 || !baseline.is_finite() {
        return Err(MetricsError::NonPositiveBaseline(baseline));
    }
    Ok((baseline - value) / baseline * 100.0)
}

pub fn combined_throughput(lte_mbps: f64, wlan_mbps: f64) -> f64 {
    lte_mbps + wlan_mbps
}

/// Column order of the comparison tables.
pub const TABLE_COLUMNS: [&str; 6] = ["best", "adaptive", "mode1", "mode2", "mode3", "mode4"];

/// Rows are arrival-rate presets, columns follow [`TABLE_COLUMNS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub system: &'static str,
    pub rows: Vec<(f64, [f64; 6])>,
}

impl ComparisonTable {
    pub fn new(system: &'static str) -> Self {
        Self {
            system,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, lambda_l: f64, values: [f64; 6]) {
        self.rows.push((lambda_l, values));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = TABLE_COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|(_, v)| v[idx]).collect())
    }
}

/// Kendall rank correlation (tau-b, tie-corrected) between two series.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[j] - x[i]).partial_cmp(&0.0).expect("finite");
            let dy = (y[j] - y[i]).partial_cmp(&0.0).expect("finite");
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + ties_x) as f64;
    let n2 = (concordant + discordant + ties_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / (n1 * n2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn throughput_per_cycle() {
        assert_abs_diff_eq!(cycle_throughput(10_000_000, 1_000), 10.0);
        assert_eq!(cycle_throughput(0, 1_000), 0.0);
        assert_abs_diff_eq!(cycle_throughput(6_847_000, 1_000) * 1e6, 6_847_000.0, epsilon = 1e-6);
        assert_eq!(try_cycle_throughput(1, 0), Err(MetricsError::ZeroCycle));
    }

    #[test]
    fn losses() {
        assert_abs_diff_eq!(loss_percent(10.006, 9.814).unwrap(), 1.92, epsilon = 0.005);
        assert_abs_diff_eq!(loss_percent(7.641, 6.847).unwrap(), 10.39, epsilon = 0.005);
        assert_eq!(loss_percent(5.0, 5.0).unwrap(), 0.0);
        assert!(loss_percent(0.0, 1.0).is_err());
        assert!(loss_percent(-1.0, 1.0).is_err());
    }

    #[test]
    fn combined() {
        assert_abs_diff_eq!(combined_throughput(19.003, 6.885), 25.888, epsilon = 1e-12);
        assert_eq!(combined_throughput(0.0, 0.0), 0.0);
        assert_eq!(combined_throughput(1.5, 2.0), combined_throughput(2.0, 1.5));
    }

    #[test]
    fn kendall() {
        let x: Vec<f64> = (0..5).map(f64::from).collect();
        assert_abs_diff_eq!(kendall_tau(&x, &[1.0, 2.0, 3.0, 4.0, 5.0]), 1.0);
        assert_abs_diff_eq!(kendall_tau(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]), -1.0);
        assert_eq!(kendall_tau(&x, &[1.0; 5]), 0.0);
        // 1 discordant pair of 10
        assert_abs_diff_eq!(kendall_tau(&x, &[1.0, 3.0, 2.0, 4.0, 5.0]), 0.8);
    }

    #[test]
    fn table_columns() {
        let mut t = ComparisonTable::new("wlan");
        t.push(0.5, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        t.push(1.0, [1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
        assert_eq!(t.column("mode2"), Some(vec![4.0, 4.5]));
        assert_eq!(t.column("nope"), None);
    }
}
