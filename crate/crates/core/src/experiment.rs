//! Batch runs of the scaling iterations over random inputs, written as CSV and
//! JSON. Each trial draws from its own `RngStream(seed, trial)` and results
//! are written in trial order, so outputs do not depend on scheduling.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{haar_unitary, MatError, MatrixJson, RngStream};
use crate::scaling::{
    sinkhorn_blocks, sinkhorn_qls, sinkhorn_unital, BlockPSDMatrix, Norm, QLSGrid, ScaleTrace,
    StopReason,
};

pub const VERSION: &str = concat!("subalg ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Qls,
    Unital,
    Blocks,
}

impl Algo {
    pub fn default_max_iter(self) -> usize {
        match self {
            Algo::Qls | Algo::Unital => 100_000,
            Algo::Blocks => 1_000_000,
        }
    }

    pub fn default_norm(self) -> Norm {
        match self {
            Algo::Blocks => Norm::Operator,
            _ => Norm::Frobenius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub n: usize,
    pub k: usize,
    /// Target of the per-trial histogram.
    pub eps: f64,
    /// Tolerances of the mean-steps sweep.
    pub eps_list: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub norm: Norm,
    /// Worker threads; `None` uses the rayon default.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Mat(#[from] MatError),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.n == 0 || self.k == 0 {
            return bad("n and k must be positive");
        }
        // Written so that NaN is rejected too.
        let positive = |e: f64| e > 0.0;
        if !positive(self.eps) || !self.eps_list.iter().all(|&e| positive(e)) {
            return bad("every eps must be strictly positive");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        Ok(())
    }

    /// Tolerance each trial runs down to: the smallest requested one.
    fn run_eps(&self) -> f64 {
        self.eps_list.iter().copied().fold(self.eps, f64::min)
    }
}

/// One trial: the run to the smallest tolerance, from which the step count at
/// every larger tolerance is read off the defect history.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub trace: ScaleTrace,
    /// Final iterate, kept only for stalled unital runs.
    pub stalled_matrix: Option<MatrixJson>,
}

impl TrialResult {
    /// Sweeps needed to reach `eps`, or `None` if the run never did.
    pub fn steps(&self, eps: f64) -> Option<usize> {
        self.trace.first_hit(eps)
    }

    /// Steps to `eps`, counting a miss as the sweeps actually performed.
    fn capped_steps(&self, eps: f64) -> usize {
        self.steps(eps).unwrap_or(self.trace.iterations)
    }
}

/// Runs trial number `trial` of the configuration.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult, ExperimentError> {
    let mut rng = RngStream::new(cfg.seed, trial as u64).rng();
    let eps = cfg.run_eps();
    let (trace, stalled_matrix) = match cfg.algo {
        Algo::Qls => {
            let g0 = QLSGrid::random(cfg.n, &mut rng);
            (sinkhorn_qls(&g0, eps, cfg.max_iter).1, None)
        }
        Algo::Unital => {
            let u0 = haar_unitary(cfg.n * cfg.k, &mut rng);
            let (u, t) = sinkhorn_unital(&u0, cfg.n, cfg.k, eps, cfg.max_iter, cfg.norm)?;
            let stalled = (t.stop == StopReason::Stalled).then(|| MatrixJson::from_matrix(&u));
            (t, stalled)
        }
        Algo::Blocks => {
            let x = BlockPSDMatrix::random(cfg.n, cfg.k, &mut rng);
            (sinkhorn_blocks(&x, eps, cfg.max_iter, cfg.norm)?.1, None)
        }
    };
    Ok(TrialResult {
        trial,
        trace,
        stalled_matrix,
    })
}

pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialResult>, ExperimentError> {
    cfg.validate()?;
    let work = || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect()
    };
    match cfg.jobs {
        None => work(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?
            .install(work),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub trials: usize,
    pub converged: usize,
    pub rate: f64,
    pub mean_steps: f64,
    pub median_steps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Quantiles {
    pub min: usize,
    pub p10: usize,
    pub p50: usize,
    pub p90: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub convergence_rate: f64,
    pub mean_steps: f64,
    pub quantiles: Quantiles,
    pub stalls: usize,
    pub degenerate_polar_inputs: usize,
    pub wall_time_secs: f64,
    pub sweep: Vec<SweepRow>,
}

/// Nearest-rank quantile of a sorted slice.
fn quantile(sorted: &[usize], q: f64) -> usize {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn sweep(results: &[TrialResult], eps_list: &[f64]) -> Vec<SweepRow> {
    eps_list
        .iter()
        .map(|&eps| {
            let mut steps: Vec<usize> = results.iter().map(|r| r.capped_steps(eps)).collect();
            steps.sort_unstable();
            let converged = results.iter().filter(|r| r.steps(eps).is_some()).count();
            let total: usize = steps.iter().sum();
            let m = steps.len();
            let median = if m % 2 == 1 {
                steps[m / 2] as f64
            } else {
                (steps[m / 2 - 1] + steps[m / 2]) as f64 / 2.0
            };
            SweepRow {
                eps,
                trials: m,
                converged,
                rate: converged as f64 / m as f64,
                mean_steps: total as f64 / m as f64,
                median_steps: median,
            }
        })
        .collect()
}

pub fn histogram_csv(results: &[TrialResult], eps: f64) -> String {
    let mut out = String::from("eps,trial,iterations,log_iterations,converged\n");
    for r in results {
        let steps = r.capped_steps(eps);
        let log = if steps == 0 {
            String::new()
        } else {
            format!("{:.6}", (steps as f64).ln())
        };
        out.push_str(&format!(
            "{eps:e},{},{steps},{log},{}\n",
            r.trial,
            r.steps(eps).is_some()
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eps,trials,converged,rate,mean_steps,median_steps\n");
    for r in rows {
        out.push_str(&format!(
            "{:e},{},{},{:.6},{:.6},{:.1}\n",
            r.eps, r.trials, r.converged, r.rate, r.mean_steps, r.median_steps
        ));
    }
    out
}

fn stalls_jsonl(results: &[TrialResult]) -> String {
    results
        .iter()
        .filter_map(|r| {
            let m = r.stalled_matrix.as_ref()?;
            let line = serde_json::json!({
                "trial": r.trial,
                "iterations": r.trace.iterations,
                "defect": r.trace.final_defect(),
                "u": m,
            });
            Some(format!("{line}\n"))
        })
        .collect()
}

/// Writes through a temporary file so that readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub results: Vec<TrialResult>,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Runs the batch and writes `histogram.csv`, `eps_sweep.csv`,
/// `summary.json` and, when some unital run stalled, `stalls.jsonl`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentOutput, ExperimentError> {
    let start = Instant::now();
    let results = run_trials(cfg)?;
    fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let rows = sweep(&results, &cfg.eps_list);
    let mut steps: Vec<usize> = results.iter().map(|r| r.capped_steps(cfg.eps)).collect();
    steps.sort_unstable();
    let converged = results
        .iter()
        .filter(|r| r.steps(cfg.eps).is_some())
        .count();
    let summary = Summary {
        version: VERSION,
        config: cfg.clone(),
        convergence_rate: converged as f64 / results.len() as f64,
        mean_steps: steps.iter().sum::<usize>() as f64 / steps.len() as f64,
        quantiles: Quantiles {
            min: steps[0],
            p10: quantile(&steps, 0.1),
            p50: quantile(&steps, 0.5),
            p90: quantile(&steps, 0.9),
            max: steps[steps.len() - 1],
        },
        stalls: results
            .iter()
            .filter(|r| r.trace.stop == StopReason::Stalled)
            .count(),
        degenerate_polar_inputs: results.iter().map(|r| r.trace.degenerate_polar).sum(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        sweep: rows.clone(),
    };

    let mut files = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<(), ExperimentError> {
        let path = out_dir.join(name);
        write_atomic(&path, &body)?;
        files.push(path);
        Ok(())
    };
    emit("histogram.csv", histogram_csv(&results, cfg.eps))?;
    emit("eps_sweep.csv", sweep_csv(&rows))?;
    let stalls = stalls_jsonl(&results);
    if !stalls.is_empty() {
        emit("stalls.jsonl", stalls)?;
    }
    emit(
        "summary.json",
        serde_json::to_string_pretty(&summary).expect("plain data") + "\n",
    )?;
    Ok(ExperimentOutput {
        results,
        summary,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(algo: Algo, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            algo,
            n: 2,
            k: 2,
            eps: 1e-3,
            eps_list: vec![1e-1, 1e-2, 1e-3],
            trials,
            seed: 11,
            max_iter: algo.default_max_iter(),
            norm: algo.default_norm(),
            jobs: None,
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = cfg(Algo::Unital, 0);
        assert!(c.validate().is_err());
        c.trials = 1;
        c.eps_list.push(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_trial_matches_direct_run() {
        let c = cfg(Algo::Unital, 1);
        let res = run_trials(&c).unwrap();
        let mut rng = RngStream::new(11, 0).rng();
        let u0 = haar_unitary(4, &mut rng);
        let (_, t) = sinkhorn_unital(&u0, 2, 2, 1e-3, c.max_iter, Norm::Frobenius).unwrap();
        assert_eq!(res[0].steps(1e-3), Some(t.iterations));
        assert_eq!(histogram_csv(&res, 1e-3).lines().count(), 2);
    }

    #[test]
    fn sweep_is_monotone_and_jobs_do_not_matter() {
        for algo in [Algo::Qls, Algo::Unital, Algo::Blocks] {
            let c = cfg(algo, 40);
            let a = run_trials(&c).unwrap();
            let rows = sweep(&a, &c.eps_list);
            for w in rows.windows(2) {
                assert!(w[0].mean_steps <= w[1].mean_steps);
            }
            let b = run_trials(&ExperimentConfig {
                jobs: Some(1),
                ..c.clone()
            })
            .unwrap();
            assert_eq!(histogram_csv(&a, c.eps), histogram_csv(&b, c.eps));
        }
    }

    #[test]
    fn writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg(Algo::Qls, 5), dir.path()).unwrap();
        for name in ["histogram.csv", "eps_sweep.csv", "summary.json"] {
            assert!(dir.path().join(name).exists());
        }
        assert!(out.summary.convergence_rate > 0.0);
        let again = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
        run_experiment(&cfg(Algo::Qls, 5), dir.path()).unwrap();
        assert_eq!(
            again,
            fs::read_to_string(dir.path().join("histogram.csv")).unwrap()
        );
    }
}
