//! Named experiments: arrival-rate sweeps over run kinds, per-cycle traces
//! and the fixed-mode comparison tables, written as CSV plus a manifest.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::config::{RunConfig, RunKind};
use crate::engine::{aggregate_drops, drop_seeds, run_drop, DropResult, SimError, Summary};
use crate::metrics::{combined_throughput, loss_percent, ComparisonTable, TABLE_COLUMNS};
use crate::output::{cycle_rows, format_sig6, write_csv, CYCLES_HEADER, write_manifest, Manifest, OutputError, SUMMARY_HEADER};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}` (expected fig2, fig3..fig6, table3_4, fig7 or single)")]
    Unknown(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Baselines and adaptive over the arrival-rate grid.
    Fig2,
    /// Per-cycle trace at one arrival rate (3..=6).
    Trace(u8),
    /// Baselines, adaptive and the four fixed modes over the grid.
    Table34,
    /// Table sweep plus combined throughput.
    Fig7,
    /// The configured run kind at the configured arrival rate.
    Single,
}

impl FromStr for Experiment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Trace(3)),
            "fig4" => Ok(Self::Trace(4)),
            "fig5" => Ok(Self::Trace(5)),
            "fig6" => Ok(Self::Trace(6)),
            "table3_4" => Ok(Self::Table34),
            "fig7" => Ok(Self::Fig7),
            "single" => Ok(Self::Single),
            other => Err(ExperimentError::Unknown(other.to_string())),
        }
    }
}

impl Experiment {
    pub fn name(self) -> String {
        match self {
            Self::Fig2 => "fig2".into(),
            Self::Trace(n) => format!("fig{n}"),
            Self::Table34 => "table3_4".into(),
            Self::Fig7 => "fig7".into(),
            Self::Single => "single".into(),
        }
    }
}

pub const TABLE_KINDS: [RunKind; 7] = [
    RunKind::LteOnly,
    RunKind::WlanOnly,
    RunKind::Adaptive,
    RunKind::Fixed(1),
    RunKind::Fixed(2),
    RunKind::Fixed(3),
    RunKind::Fixed(4),
];

pub const FIG2_KINDS: [RunKind; 3] = [RunKind::LteOnly, RunKind::WlanOnly, RunKind::Adaptive];

/// Config for one (arrival rate, run kind) cell.
pub fn cell_config(base: &RunConfig, lambda_l: f64, kind: RunKind) -> RunConfig {
    let mut cfg = base.clone();
    cfg.lte.arrival_rate = lambda_l;
    cfg.coexistence.mode = kind;
    cfg
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub lambda_l: f64,
    pub kind: RunKind,
    pub drops: Vec<DropResult>,
    pub summary: Summary,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub cells: Vec<GridCell>,
}

impl Grid {
    pub fn get(&self, lambda_l: f64, kind: RunKind) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.lambda_l == lambda_l && c.kind == kind)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.lambda_l) {
                out.push(c.lambda_l);
            }
        }
        out
    }
}

/// Runs every (rate, kind, drop) job. Jobs are flattened so the parallel
/// backend can balance them; results are regrouped in input order.
pub fn run_grid(base: &RunConfig, lambdas: &[f64], kinds: &[RunKind]) -> Result<Grid, SimError> {
    let configs: Vec<(f64, RunKind, RunConfig)> = lambdas
        .iter()
        .flat_map(|&l| kinds.iter().map(move |&k| (l, k, cell_config(base, l, k))))
        .collect();
    let seeds = drop_seeds(base);
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let run = |&(c, s): &(usize, u64)| run_drop(&configs[c].2, s);

    #[cfg(feature = "parallel")]
    let results: Vec<DropResult> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<DropResult> = jobs.iter().map(run).collect::<Result<_, _>>()?;

    let mut results = results.into_iter();
    let mut cells = Vec::with_capacity(configs.len());
    for (lambda_l, kind, _) in configs {
        let drops: Vec<DropResult> = results.by_ref().take(seeds.len()).collect();
        let summary = aggregate_drops(&drops)?;
        cells.push(GridCell {
            lambda_l,
            kind,
            drops,
            summary,
        });
    }
    Ok(Grid { cells })
}

fn opt_loss(baseline: f64, value: f64) -> String {
    loss_percent(baseline, value).map(format_sig6).unwrap_or_default()
}

pub fn summary_rows(grid: &Grid) -> Vec<Vec<String>> {
    grid.cells
        .iter()
        .map(|c| {
            let lte_base = grid.get(c.lambda_l, RunKind::LteOnly).map(|b| b.summary.mean_lte_mbps);
            let wlan_base = grid.get(c.lambda_l, RunKind::WlanOnly).map(|b| b.summary.mean_wlan_mbps);
            let loss_lte = match lte_base {
                Some(b) if c.kind.has_lte() => opt_loss(b, c.summary.mean_lte_mbps),
                _ => String::new(),
            };
            let loss_wlan = match wlan_base {
                Some(b) if c.kind.has_wlan() => opt_loss(b, c.summary.mean_wlan_mbps),
                _ => String::new(),
            };
            vec![
                format_sig6(c.lambda_l),
                c.kind.to_string(),
                format_sig6(c.summary.mean_lte_mbps),
                format_sig6(c.summary.mean_wlan_mbps),
                loss_lte,
                loss_wlan,
            ]
        })
        .collect()
}

fn table_kinds() -> [RunKind; 5] {
    [
        RunKind::Adaptive,
        RunKind::Fixed(1),
        RunKind::Fixed(2),
        RunKind::Fixed(3),
        RunKind::Fixed(4),
    ]
}

/// WLAN (best = WLAN alone) and LTE (best = LTE alone) comparison tables.
pub fn comparison_tables(grid: &Grid) -> (ComparisonTable, ComparisonTable) {
    let mut wlan = ComparisonTable::new("wlan");
    let mut lte = ComparisonTable::new("lte");
    let value = |l: f64, k: RunKind, lte_side: bool| {
        grid.get(l, k)
            .map(|c| if lte_side { c.summary.mean_lte_mbps } else { c.summary.mean_wlan_mbps })
            .unwrap_or(f64::NAN)
    };
    for l in grid.lambdas() {
        let mut w = [0.0; 6];
        let mut t = [0.0; 6];
        w[0] = value(l, RunKind::WlanOnly, false);
        t[0] = value(l, RunKind::LteOnly, true);
        for (i, k) in table_kinds().into_iter().enumerate() {
            w[i + 1] = value(l, k, false);
            t[i + 1] = value(l, k, true);
        }
        wlan.push(l, w);
        lte.push(l, t);
    }
    (wlan, lte)
}

fn table_rows(t: &ComparisonTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|(l, v)| std::iter::once(format_sig6(*l)).chain(v.iter().map(|x| format_sig6(*x))).collect())
        .collect()
}

pub const FIG7_HEADER: [&str; 6] = ["lambda_l", "adaptive", "mode1", "mode2", "mode3", "mode4"];

pub fn combined_rows(grid: &Grid) -> Vec<Vec<String>> {
    grid.lambdas()
        .into_iter()
        .map(|l| {
            std::iter::once(format_sig6(l))
                .chain(table_kinds().into_iter().map(|k| {
                    grid.get(l, k)
                        .map(|c| format_sig6(combined_throughput(c.summary.mean_lte_mbps, c.summary.mean_wlan_mbps)))
                        .unwrap_or_default()
                }))
                .collect()
        })
        .collect()
}

/// Runs `exp` and writes its CSVs plus `manifest.json` into `out_dir`.
/// Returns the written paths.
pub fn run_experiment(exp: Experiment, cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), OutputError> {
        let p = out_dir.join(name);
        write_csv(&p, header, &rows)?;
        written.push(p);
        Ok(())
    };
    match exp {
        Experiment::Fig2 => {
            let grid = run_grid(cfg, &cfg.lte.rate_grid, &FIG2_KINDS)?;
            emit("fig2.csv", &SUMMARY_HEADER, summary_rows(&grid))?;
        }
        Experiment::Trace(n) => {
            let grid = run_grid(cfg, &[cfg.lte.arrival_rate], &[cfg.coexistence.mode])?;
            emit(&format!("fig{n}.csv"), &CYCLES_HEADER, cycle_rows(&grid.cells[0].summary.cycles))?;
        }
        Experiment::Table34 | Experiment::Fig7 => {
            let grid = run_grid(cfg, &cfg.lte.rate_grid, &TABLE_KINDS)?;
            let (wlan, lte) = comparison_tables(&grid);
            let header: Vec<&str> = std::iter::once("lambda_l").chain(TABLE_COLUMNS).collect();
            emit("table3_wlan.csv", &header, table_rows(&wlan))?;
            emit("table4_lte.csv", &header, table_rows(&lte))?;
            emit("summary.csv", &SUMMARY_HEADER, summary_rows(&grid))?;
            if exp == Experiment::Fig7 {
                emit("fig7.csv", &FIG7_HEADER, combined_rows(&grid))?;
            }
        }
        Experiment::Single => {
            let grid = run_grid(cfg, &[cfg.lte.arrival_rate], &[cfg.coexistence.mode])?;
            emit(&cfg.output.cycles_csv, &CYCLES_HEADER, cycle_rows(&grid.cells[0].summary.cycles))?;
            emit(&cfg.output.summary_csv, &SUMMARY_HEADER, summary_rows(&grid))?;
        }
    }
    let manifest = Manifest {
        experiment: exp.name(),
        config_hash: cfg.hash_hex(),
        seed_base: cfg.engine.seed_base,
        drops: cfg.engine.drops,
        duration_ms: cfg.engine.duration_ms,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        files: written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    let mp = out_dir.join("manifest.json");
    write_manifest(&mp, &manifest)?;
    written.push(mp);
    Ok(written)
}

/// Built-in experiment presets, embedded at compile time.
pub const PRESETS: [(&str, &str); 7] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("table3_4", include_str!("../presets/table3_4.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_names_round_trip() {
        for name in ["fig2", "fig3", "fig4", "fig5", "fig6", "table3_4", "fig7", "single"] {
            assert_eq!(Experiment::from_str(name).unwrap().name(), name);
        }
        assert!(matches!(Experiment::from_str("fig9"), Err(ExperimentError::Unknown(_))));
    }

    #[test]
    fn presets_parse_and_name_themselves() {
        for (name, text) in PRESETS {
            let cfg = RunConfig::from_toml_str(text).unwrap();
            assert_eq!(cfg.experiment.as_deref(), Some(name));
            Experiment::from_str(name).unwrap();
        }
    }

    #[test]
    fn grid_groups_drops_per_cell() {
        let mut cfg = RunConfig::default();
        cfg.engine.duration_ms = 1_000;
        cfg.engine.drops = 2;
        let grid = run_grid(&cfg, &[0.5, 1.0], &[RunKind::LteOnly, RunKind::Fixed(1)]).unwrap();
        assert_eq!(grid.cells.len(), 4);
        assert_eq!(grid.lambdas(), vec![0.5, 1.0]);
        let cell = grid.get(1.0, RunKind::Fixed(1)).unwrap();
        assert_eq!(cell.drops.len(), 2);
        assert_eq!(cell.drops[0], run_drop(&cell_config(&cfg, 1.0, RunKind::Fixed(1)), 1).unwrap());
        let rows = summary_rows(&grid);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0][4], "0");
        assert_eq!(rows[0][5], "");
    }
}
