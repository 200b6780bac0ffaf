//! Wall-time scaling of the streaming loop.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::aggregation::Strategy;
use crate::error::Result;
use crate::evaluation::Experiment;
use crate::predictors::{beta_grid, step_size, PredictorBankSpec};
use crate::tvar::{sample_pacf_paths, InnovationSpec, TvarParams, TvarSimulator};

/// Allowed `T = 2^14` vs `T = 2^10` wall-time ratio (16x work, 50% slack).
pub const MAX_T16_RATIO: f64 = 24.0;
/// Allowed wall-time ratio when `T` or `N` doubles.
pub const MAX_DOUBLING_RATIO: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub d: usize,
    pub n: usize,
    pub horizon: usize,
    pub seconds: f64,
    pub ns_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Time at `T = 2^14` over time at `T = 2^10`.
    pub t16_ratio: f64,
    /// Time at `T = 2^11` over time at `T = 2^10`.
    pub t_doubling_ratio: f64,
    /// Time at `2N` over time at `N` (`T = 2^12`).
    pub n_doubling_ratio: f64,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.t16_ratio <= MAX_T16_RATIO
            && self.t_doubling_ratio <= MAX_DOUBLING_RATIO
            && self.n_doubling_ratio <= MAX_DOUBLING_RATIO
    }
}

/// An experiment with `n` NLMS predictors on `d`-order synthesized paths,
/// aggregated by both strategies.
pub fn bench_experiment(d: usize, n: usize, horizon: usize) -> Result<Experiment> {
    let path = sample_pacf_paths(d, 1024, 0.8, 3, 42)?;
    let params = TvarParams::from_pacf(&path, 1.0, None)?;
    let betas = beta_grid(n, 0.5)?;
    let bank = PredictorBankSpec {
        n,
        beta_0: 0.5,
        mu_values: betas.iter().map(|&b| step_size(horizon, b, 0.5)).collect(),
        beta_grid: betas,
        c_mu: 0.5,
        d,
        eps: 1.0,
        clip: 8.0,
    };
    Ok(Experiment {
        params,
        horizon,
        innovations: InnovationSpec::Gaussian,
        bank,
        strategies: vec![(Strategy::Gradient, 0.05), (Strategy::Loss, 0.01)],
        replications: 1,
        base_seed: 0,
        certify_regret: false,
    })
}

/// Best-of-`repeats` wall time of the streaming loop alone (burn-in and
/// path validation excluded).
pub fn time_stream(d: usize, n: usize, horizon: usize, repeats: usize) -> Result<BenchRow> {
    let exp = bench_experiment(d, n, horizon)?;
    let mut best = Duration::MAX;
    for r in 0..repeats.max(1) {
        let sim = TvarSimulator::new(&exp.params, horizon, exp.innovations, r as u64)?;
        let start = Instant::now();
        let out = exp.stream(r, r as u64, sim, false)?;
        best = best.min(start.elapsed());
        std::hint::black_box(out);
    }
    let seconds = best.as_secs_f64();
    Ok(BenchRow {
        d,
        n,
        horizon,
        seconds,
        ns_per_step: seconds * 1e9 / horizon as f64,
    })
}

/// Times `T` in `{2^10, 2^11, 2^12, 2^14}` at fixed `(d, n)`, then `2n` at
/// `T = 2^12`.
pub fn run_bench(d: usize, n: usize, repeats: usize) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for horizon in [1 << 10, 1 << 11, 1 << 12, 1 << 14] {
        rows.push(time_stream(d, n, horizon, repeats)?);
    }
    rows.push(time_stream(d, 2 * n, 1 << 12, repeats)?);
    let t16_ratio = rows[3].seconds / rows[0].seconds;
    let t_doubling_ratio = rows[1].seconds / rows[0].seconds;
    let n_doubling_ratio = rows[4].seconds / rows[2].seconds;
    Ok(BenchReport {
        rows,
        t16_ratio,
        t_doubling_ratio,
        n_doubling_ratio,
    })
}
