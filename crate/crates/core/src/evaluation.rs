//! Scoring, Monte Carlo replications and executable inequality checks.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{Aggregator, Strategy};
use crate::error::{domain, Error, Result};
use crate::predictors::{NlmsPredictor, Predictor, PredictorBankSpec};
use crate::tvar::{impulse_coefficients, InnovationSpec, TvarParams, TvarSimulator};

/// Average of `(prediction - x)^2 - sigma^2` over the sequence: the squared
/// error shifted down by the noise floor.
pub fn shifted_loss(predictions: &[f64], x: &[f64], sigma_trace: &[f64]) -> Result<f64> {
    if predictions.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: predictions.len(),
        });
    }
    if sigma_trace.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: sigma_trace.len(),
        });
    }
    if x.is_empty() {
        return Err(domain("shifted loss of an empty sequence"));
    }
    let total: f64 = predictions
        .iter()
        .zip(x)
        .zip(sigma_trace)
        .map(|((p, x), s)| (p - x) * (p - x) - s * s)
        .sum();
    Ok(total / x.len() as f64)
}

/// Minimum, quartiles and maximum (linear interpolation between order
/// statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            min: sorted[0],
            q25: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// A fully resolved Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub params: TvarParams,
    pub horizon: usize,
    pub innovations: InnovationSpec,
    pub bank: PredictorBankSpec,
    /// Aggregation strategies with their learning rates.
    pub strategies: Vec<(Strategy, f64)>,
    pub replications: usize,
    pub base_seed: u64,
    /// Evaluate the deterministic regret bounds on each replication.
    pub certify_regret: bool,
}

/// Losses of one replication, in [`LossReport::predictor_ids`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub losses: Vec<f64>,
    /// `RHS - LHS` of the deterministic regret bound per strategy, when
    /// certification is enabled.
    pub regret_margins: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub seed: u64,
    pub message: String,
}

/// Shifted empirical losses across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub predictor_ids: Vec<String>,
    pub bank: PredictorBankSpec,
    pub etas: Vec<(Strategy, f64)>,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    pub summary: Vec<FiveNumber>,
}

impl LossReport {
    /// Reduces replication records; the result does not depend on their order.
    pub fn from_records(
        predictor_ids: Vec<String>,
        bank: PredictorBankSpec,
        etas: Vec<(Strategy, f64)>,
        mut records: Vec<ReplicationRecord>,
        mut failures: Vec<ReplicationFailure>,
    ) -> Self {
        records.sort_by_key(|r| r.replication);
        failures.sort_by_key(|f| f.replication);
        let summary = (0..predictor_ids.len())
            .map(|k| {
                let column: Vec<f64> = records.iter().map(|r| r.losses[k]).collect();
                FiveNumber::from_values(&column).unwrap_or(FiveNumber {
                    min: f64::NAN,
                    q25: f64::NAN,
                    median: f64::NAN,
                    q75: f64::NAN,
                    max: f64::NAN,
                })
            })
            .collect();
        Self {
            predictor_ids,
            bank,
            etas,
            records,
            failures,
            summary,
        }
    }

    pub fn column(&self, id: &str) -> Option<Vec<f64>> {
        let k = self.predictor_ids.iter().position(|p| p == id)?;
        Some(self.records.iter().map(|r| r.losses[k]).collect())
    }

    pub fn summary_of(&self, id: &str) -> Option<FiveNumber> {
        let k = self.predictor_ids.iter().position(|p| p == id)?;
        Some(self.summary[k])
    }

    /// Summary of the NLMS predictor with the smallest median loss.
    pub fn best_predictor(&self) -> Option<(usize, FiveNumber)> {
        self.summary[..self.bank.n]
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.median.total_cmp(&b.1.median))
    }
}

/// Weights used at each step by one aggregator (row `t - 1` predicts `x_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrace {
    pub strategy: Strategy,
    pub rows: Vec<Vec<f64>>,
}

impl Experiment {
    pub fn predictor_ids(&self) -> Vec<String> {
        (1..=self.bank.n)
            .map(|i| format!("nlms_{i}"))
            .chain(self.strategies.iter().map(|(s, _)| s.label().to_string()))
            .collect()
    }

    pub fn seed_for(&self, replication: usize) -> u64 {
        self.base_seed.wrapping_add(replication as u64)
    }

    /// Streams one replication through the bank and the aggregators with
    /// `O(dN)` state. With `trace` set, the weight trajectories are kept.
    pub fn run_replication(
        &self,
        replication: usize,
        trace: bool,
    ) -> Result<(ReplicationRecord, Vec<WeightTrace>)> {
        let seed = self.seed_for(replication);
        let sim = TvarSimulator::new(&self.params, self.horizon, self.innovations, seed)?;
        self.stream(replication, seed, sim, trace)
    }

    /// Runs the bank and aggregators over an already burnt-in simulator.
    pub fn stream(
        &self,
        replication: usize,
        seed: u64,
        sim: TvarSimulator<'_>,
        trace: bool,
    ) -> Result<(ReplicationRecord, Vec<WeightTrace>)> {
        let mut bank: Vec<NlmsPredictor> = self.bank.instantiate()?;
        let n = bank.len();
        let mut aggs = self
            .strategies
            .iter()
            .map(|&(s, eta)| Aggregator::new(n, eta, s))
            .collect::<Result<Vec<_>>>()?;
        let mut traces: Vec<WeightTrace> = if trace {
            self.strategies
                .iter()
                .map(|&(strategy, _)| WeightTrace {
                    strategy,
                    rows: Vec::with_capacity(self.horizon),
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut history = self.certify_regret.then(|| RegretInstance {
            predictions: Vec::with_capacity(self.horizon),
            observations: Vec::with_capacity(self.horizon),
        });

        let mut preds = vec![0.0; n];
        let mut sums = vec![0.0; n + aggs.len()];
        for sample in sim {
            for (p, predictor) in preds.iter_mut().zip(&bank) {
                *p = predictor.predict();
            }
            let noise = sample.sigma * sample.sigma;
            for (k, p) in preds.iter().enumerate() {
                sums[k] += (p - sample.x) * (p - sample.x) - noise;
            }
            for (k, agg) in aggs.iter_mut().enumerate() {
                if let Some(tr) = traces.get_mut(k) {
                    tr.rows.push(agg.weights().to_vec());
                }
                let p = agg.predict(&preds)?;
                sums[n + k] += (p - sample.x) * (p - sample.x) - noise;
                agg.update(sample.x)?;
            }
            for predictor in bank.iter_mut() {
                predictor.update(sample.x);
            }
            if let Some(h) = history.as_mut() {
                h.predictions.push(preds.clone());
                h.observations.push(sample.x);
            }
        }
        let losses: Vec<f64> = sums.iter().map(|s| s / self.horizon as f64).collect();
        if let Some(bad) = losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite loss for predictor {}",
                self.predictor_ids()[bad]
            )));
        }
        let regret_margins = match history {
            Some(instance) => Some(
                self.strategies
                    .iter()
                    .map(|&(s, eta)| check_regret_bound(s, eta, &instance))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok((
            ReplicationRecord {
                replication,
                seed,
                losses,
                regret_margins,
            },
            traces,
        ))
    }

    /// Runs every replication on `jobs` worker threads. Failures (errors or
    /// panics) are recorded per replication and never abort the batch.
    pub fn run(&self, jobs: usize) -> Result<LossReport> {
        let one = |r: usize| -> std::result::Result<ReplicationRecord, ReplicationFailure> {
            let outcome = catch_unwind(AssertUnwindSafe(|| self.run_replication(r, false)));
            let message = match outcome {
                Ok(Ok((record, _))) => return Ok(record),
                Ok(Err(e)) => e.to_string(),
                Err(panic) => panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "replication panicked".into()),
            };
            Err(ReplicationFailure {
                replication: r,
                seed: self.seed_for(r),
                message,
            })
        };
        let outcomes: Vec<_> = if jobs <= 1 {
            (0..self.replications).map(one).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| domain(format!("cannot start {jobs} workers: {e}")))?;
            pool.install(|| (0..self.replications).into_par_iter().map(one).collect())
        };
        let mut records = Vec::with_capacity(self.replications);
        let mut failures = Vec::new();
        for o in outcomes {
            match o {
                Ok(r) => records.push(r),
                Err(f) => failures.push(f),
            }
        }
        Ok(LossReport::from_records(
            self.predictor_ids(),
            self.bank.clone(),
            self.strategies.clone(),
            records,
            failures,
        ))
    }
}

/// Builds and runs the experiment described by `config`.
pub fn run_experiment(config: &crate::config::ExperimentConfig, jobs: usize) -> Result<LossReport> {
    config.build()?.run(jobs)
}

/// Predictions of `N` predictors and the observed sequence, row `t - 1`
/// holding step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretInstance {
    pub predictions: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
}

impl RegretInstance {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn width(&self) -> usize {
        self.predictions.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.predictions.len() != self.observations.len() {
            return Err(Error::LengthMismatch {
                expected: self.observations.len(),
                actual: self.predictions.len(),
            });
        }
        if self.is_empty() || self.width() == 0 {
            return Err(domain(
                "regret instance needs at least one step and one predictor",
            ));
        }
        let n = self.width();
        if let Some(row) = self.predictions.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: row.len(),
            });
        }
        Ok(())
    }

    /// `(1/T) sum_t (nu . xhat_t - x_t)^2`.
    fn mixture_loss(&self, nu: &[f64]) -> f64 {
        let total: f64 = self
            .predictions
            .iter()
            .zip(&self.observations)
            .map(|(row, x)| {
                let p: f64 = row.iter().zip(nu).map(|(a, b)| a * b).sum();
                (p - x) * (p - x)
            })
            .sum();
        total / self.len() as f64
    }

    /// `y_t = |x_t| + max_i |xhat_t^(i)|`.
    fn envelope(&self) -> impl Iterator<Item = f64> + '_ {
        self.predictions
            .iter()
            .zip(&self.observations)
            .map(|(row, x)| x.abs() + row.iter().map(|p| p.abs()).fold(0.0, f64::max))
    }
}

/// Number of random simplex points tested against the gradient-strategy bound.
pub const SIMPLEX_GRID_POINTS: usize = 100;
const SIMPLEX_GRID_SEED: u64 = 0x5eed_0041;

/// Margin `RHS - LHS` of the deterministic regret bound on `instance`.
///
/// * [`Strategy::Loss`]: `min_i L_i + ln N / (T eta) + (1/T) sum_t (y_t^2 - 1/(2 eta))_+`.
/// * [`Strategy::Gradient`]: `min_nu L(nu) + ln N / (T eta) + (2 eta / T) sum_t y_t^4`,
///   with the infimum over the simplex replaced by a minimum over its vertices
///   and [`SIMPLEX_GRID_POINTS`] seeded uniform points.
///
/// A negative margin means the bound is violated.
pub fn check_regret_bound(strategy: Strategy, eta: f64, instance: &RegretInstance) -> Result<f64> {
    check_regret_with_grid(
        strategy,
        eta,
        instance,
        SIMPLEX_GRID_POINTS,
        SIMPLEX_GRID_SEED,
    )
}

pub fn check_regret_with_grid(
    strategy: Strategy,
    eta: f64,
    instance: &RegretInstance,
    grid_points: usize,
    grid_seed: u64,
) -> Result<f64> {
    instance.validate()?;
    let n = instance.width();
    let t = instance.len() as f64;
    let mut agg = Aggregator::new(n, eta, strategy)?;
    let mut aggregate_loss = 0.0;
    for (row, &x) in instance.predictions.iter().zip(&instance.observations) {
        let p = agg.predict(row)?;
        aggregate_loss += (p - x) * (p - x);
        agg.update(x)?;
    }
    aggregate_loss /= t;
    let complexity = (n as f64).ln() / (t * eta);

    let rhs = match strategy {
        Strategy::Loss => {
            let best = (0..n)
                .map(|i| {
                    let mut nu = vec![0.0; n];
                    nu[i] = 1.0;
                    instance.mixture_loss(&nu)
                })
                .fold(f64::INFINITY, f64::min);
            let slack: f64 = instance
                .envelope()
                .map(|y| (y * y - 0.5 / eta).max(0.0))
                .sum::<f64>()
                / t;
            best + complexity + slack
        }
        Strategy::Gradient => {
            let best = simplex_test_points(n, grid_points, grid_seed)
                .iter()
                .map(|nu| instance.mixture_loss(nu))
                .fold(f64::INFINITY, f64::min);
            let slack = 2.0 * eta / t * instance.envelope().map(|y| y.powi(4)).sum::<f64>();
            best + complexity + slack
        }
    };
    Ok(rhs - aggregate_loss)
}

/// Simplex vertices followed by `count` uniform (flat Dirichlet) points.
pub fn simplex_test_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = raw.iter().sum();
        points.push(raw.into_iter().map(|v| v / total).collect());
    }
    points
}

/// `RHS - LHS` of `int exp(-x^2) dP <= exp(-(int x dP)^2 + (a^2 - 1/2)_+)`
/// for a discrete `P` supported on `[-a, a]`.
pub fn exp_concavity_margin(support: &[f64], probabilities: &[f64], a: f64) -> Result<f64> {
    if support.len() != probabilities.len() {
        return Err(Error::LengthMismatch {
            expected: support.len(),
            actual: probabilities.len(),
        });
    }
    if support.is_empty() {
        return Err(domain("empty support"));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(domain(format!("half-width a = {a} must be positive")));
    }
    if let Some(x) = support.iter().find(|x| !(x.abs() <= a)) {
        return Err(domain(format!("support point {x} outside [-{a}, {a}]")));
    }
    if probabilities.iter().any(|p| !(*p >= 0.0)) {
        return Err(domain("probabilities must be nonnegative"));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(domain(format!("probabilities sum to {total}, not 1")));
    }
    let lhs: f64 = support
        .iter()
        .zip(probabilities)
        .map(|(x, p)| p * (-x * x).exp())
        .sum();
    let mean: f64 = support.iter().zip(probabilities).map(|(x, p)| p * x).sum();
    let rhs = (-mean * mean + (a * a - 0.5).max(0.0)).exp();
    Ok(rhs - lhs)
}

/// Whether the exponential-concavity inequality holds with `1e-12` slack.
pub fn check_exp_concavity(support: &[f64], probabilities: &[f64], a: f64) -> Result<bool> {
    Ok(exp_concavity_margin(support, probabilities, a)? >= -1e-12)
}

/// `max_{t, j <= j_max} delta1^(-j) |a_{t,T}(j)|` over every `t = 0..=T`.
pub fn check_coefficient_decay(
    params: &TvarParams,
    horizon: usize,
    delta1: f64,
    j_max: usize,
) -> Result<f64> {
    if !(delta1 > params.delta() && delta1 < 1.0) {
        return Err(domain(format!(
            "decay rate delta1 = {delta1} must lie in (delta, 1) = ({}, 1)",
            params.delta()
        )));
    }
    let mut k_bar: f64 = 0.0;
    for t in 0..=horizon as i64 {
        let coeffs = impulse_coefficients(params, horizon, t, j_max)?;
        let mut scale = 1.0;
        for c in coeffs {
            k_bar = k_bar.max(c.abs() * scale);
            scale /= delta1;
        }
    }
    Ok(k_bar)
}

/// Upper bound `K_bar sigma_+ / (1 - delta1)` on the l1 norm of the linear
/// filter coefficients, with `K_bar` fitted by [`check_coefficient_decay`].
pub fn a_star_bound(params: &TvarParams, horizon: usize, delta1: f64, j_max: usize) -> Result<f64> {
    let k_bar = check_coefficient_decay(params, horizon, delta1, j_max)?;
    Ok(k_bar * params.sigma_plus() / (1.0 - delta1))
}
