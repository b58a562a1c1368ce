//! Mode × seed sweeps, BalancedScore and descriptive summaries.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::config::{ExperimentConfig, Lab, OutputFormat};
use crate::controller::Mode;
use crate::error::{Error, Result};
use crate::metrics::TrialMetrics;
use crate::trial::{run_trial, TrialConfig};

pub const TRIALS_HEADER: &str = "mode,tau,seed,rms_m,conflict_J,assist_Ns,nfi,balanced_score,spectral_radius";
const MISSING: &str = "NA";
/// Two-sided 95 % normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// How trials are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Bounded worker pool; `0` lets the pool pick one worker per core.
    #[cfg(feature = "parallel")]
    Parallel(usize),
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel(0)
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Min–max normalized complement score per row of `(rms, conflict)`.
///
/// A dimension whose batch max equals its min normalizes to 0 for every row.
pub fn balanced_scores(rows: &[(f64, f64)]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if rows.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::NonFinite("balanced score input"));
    }
    let range = |sel: fn(&(f64, f64)) -> f64| {
        rows.iter().map(sel).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (rms_lo, rms_hi) = range(|r| r.0);
    let (cf_lo, cf_hi) = range(|r| r.1);
    let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    Ok(rows
        .iter()
        .map(|&(rms, cf)| 0.5 * (1.0 - norm(rms, rms_lo, rms_hi)) + 0.5 * (1.0 - norm(cf, cf_lo, cf_hi)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub mode: Mode,
    pub seed: u64,
    pub metrics: Option<TrialMetrics>,
    pub balanced_score: Option<f64>,
    pub error: Option<String>,
}

/// Mean, sample standard deviation and normal-approximation 95 % interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: [f64; 2],
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = Z95 * std / (n as f64).sqrt();
        Some(Self { n, mean, std, ci95: [mean - half, mean + half] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub trials: usize,
    pub failures: usize,
    pub rms_m: Option<Stats>,
    #[serde(rename = "conflict_J")]
    pub conflict: Option<Stats>,
    #[serde(rename = "assist_Ns")]
    pub assist: Option<Stats>,
    /// Over trials with defined NFI only.
    pub nfi: Option<Stats>,
    pub nfi_undefined: usize,
    pub balanced_score: Option<Stats>,
    pub spectral_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchResult {
    pub config_hash: String,
    pub interval_method: &'static str,
    pub rows: Vec<TrialRow>,
    pub modes: Vec<ModeSummary>,
    /// Mode with the highest mean BalancedScore.
    pub best_mode: Option<Mode>,
}

impl BatchResult {
    pub fn summary(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn trials_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(TRIALS_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or_else(|| MISSING.to_string(), |v| v.to_string());
        for row in &self.rows {
            let m = row.metrics.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.mode,
                opt(row.mode.tau()),
                row.seed,
                opt(m.map(|m| m.rms)),
                opt(m.map(|m| m.conflict_energy)),
                opt(m.map(|m| m.assist_effort)),
                opt(m.and_then(|m| m.nfi)),
                opt(row.balanced_score),
                opt(m.and_then(|m| m.spectral_radius)),
            );
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            config_hash: &'a str,
            interval_method: &'a str,
            trials: usize,
            failures: Vec<Failure<'a>>,
            modes: &'a [ModeSummary],
            best_mode: Option<Mode>,
        }
        #[derive(Serialize)]
        struct Failure<'a> {
            mode: Mode,
            seed: u64,
            error: &'a str,
        }
        let summary = Summary {
            config_hash: &self.config_hash,
            interval_method: self.interval_method,
            trials: self.rows.len(),
            failures: self
                .rows
                .iter()
                .filter_map(|r| r.error.as_deref().map(|error| Failure { mode: r.mode, seed: r.seed, error }))
                .collect(),
            modes: &self.modes,
            best_mode: self.best_mode,
        };
        Ok(serde_json::to_string_pretty(&summary)? + "\n")
    }

    /// Writes `trials.csv` and/or `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, formats: &[OutputFormat]) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        if formats.contains(&OutputFormat::Csv) {
            std::fs::write(dir.join("trials.csv"), self.trials_csv())?;
        }
        if formats.contains(&OutputFormat::Json) {
            std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        }
        Ok(())
    }
}

/// Runs every trial; output order matches input order.
pub fn run_trials(tasks: &[TrialConfig], exec: Execution) -> Result<Vec<Result<TrialMetrics>>> {
    let eval = |t: &TrialConfig| run_trial(t).map(|(_, m)| m);
    match exec {
        Execution::Sequential => Ok(tasks.iter().map(eval).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel(workers) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(|| tasks.par_iter().map(eval).collect()))
        }
    }
}

/// One trial per (mode, seed), ordered by mode then seed.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<BatchResult> {
    cfg.validate()?;
    let lab = Arc::new(Lab::new(cfg.lab.clone())?);
    let tasks: Vec<TrialConfig> = cfg
        .modes
        .iter()
        .flat_map(|&mode| cfg.seeds.iter().map(move |&seed| (mode, seed)))
        .map(|(mode, seed)| TrialConfig::new(mode, seed, lab.clone()))
        .collect();
    let outcomes = run_trials(&tasks, exec)?;

    let mut rows: Vec<TrialRow> = tasks
        .iter()
        .zip(outcomes)
        .map(|(t, out)| {
            let (metrics, error) = match out {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TrialRow { mode: t.mode, seed: t.seed, metrics, balanced_score: None, error }
        })
        .collect();

    let scored: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].metrics.is_some()).collect();
    if !scored.is_empty() {
        let pairs: Vec<(f64, f64)> = scored
            .iter()
            .map(|&i| {
                let m = rows[i].metrics.as_ref().expect("filtered");
                (m.rms, m.conflict_energy)
            })
            .collect();
        for (&i, s) in scored.iter().zip(balanced_scores(&pairs)?) {
            rows[i].balanced_score = Some(s);
        }
    }

    let modes: Vec<ModeSummary> = cfg.modes.iter().map(|&mode| summarize(mode, &rows)).collect();
    let best_mode = modes
        .iter()
        .filter_map(|s| s.balanced_score.map(|b| (s.mode, b.mean)))
        .fold(None, |best: Option<(Mode, f64)>, (m, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((m, v)),
        })
        .map(|(m, _)| m);

    Ok(BatchResult {
        config_hash: lab.config_hash.clone(),
        interval_method: "normal approximation, mean ± 1.96·s/√n",
        rows,
        modes,
        best_mode,
    })
}

fn summarize(mode: Mode, rows: &[TrialRow]) -> ModeSummary {
    let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.mode == mode).collect();
    let ok: Vec<&TrialMetrics> = mine.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let collect = |f: fn(&TrialMetrics) -> f64| ok.iter().map(|m| f(m)).collect::<Vec<_>>();
    let nfis: Vec<f64> = ok.iter().filter_map(|m| m.nfi).collect();
    let scores: Vec<f64> = mine.iter().filter_map(|r| r.balanced_score).collect();
    ModeSummary {
        mode,
        trials: mine.len(),
        failures: mine.len() - ok.len(),
        rms_m: Stats::of(&collect(|m| m.rms)),
        conflict: Stats::of(&collect(|m| m.conflict_energy)),
        assist: Stats::of(&collect(|m| m.assist_effort)),
        nfi: Stats::of(&nfis),
        nfi_undefined: ok.len() - nfis.len(),
        balanced_score: Stats::of(&scores),
        spectral_radius: ok.first().and_then(|m| m.spectral_radius),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_score_extremes() {
        assert_eq!(balanced_scores(&[(5.0, 0.1), (10.0, 0.3)]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn balanced_score_midpoint() {
        let s = balanced_scores(&[(5.0, 0.1), (7.5, 0.2), (10.0, 0.3)]).unwrap();
        assert!((s[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_batches_score_one() {
        assert_eq!(balanced_scores(&[(3.0, 0.2); 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(balanced_scores(&[(3.0, 0.2)]).unwrap(), vec![1.0]);
        // one degenerate dimension contributes its full half
        assert_eq!(balanced_scores(&[(1.0, 0.0), (2.0, 0.0)]).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn empty_batch_rejected() {
        assert_eq!(balanced_scores(&[]).unwrap_err(), Error::Empty("batch"));
        assert!(balanced_scores(&[(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn stats_basics() {
        let s = Stats::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert!((s.ci95[1] - (2.0 + Z95 / 3f64.sqrt())).abs() < 1e-15);
        assert_eq!(Stats::of(&[4.0]).unwrap().std, 0.0);
        assert!(Stats::of(&[]).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scores_in_unit_interval(rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)) {
                let s = balanced_scores(&rows).unwrap();
                prop_assert_eq!(s.len(), rows.len());
                for v in &s {
                    prop_assert!((0.0..=1.0).contains(v));
                }
            }

            #[test]
            fn extremes_attain_full_components(rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40)) {
                let s = balanced_scores(&rows).unwrap();
                let best_rms = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
                let best_cf = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
                for (r, v) in rows.iter().zip(&s) {
                    // a row at both minima scores exactly 1
                    if r.0 == best_rms && r.1 == best_cf {
                        prop_assert_eq!(*v, 1.0);
                    }
                    prop_assert!(*v >= 0.0);
                }
            }
        }
    }
}
