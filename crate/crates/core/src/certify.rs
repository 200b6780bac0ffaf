//! Seeded property suites behind `aggfc check`.
//!
//! Each suite draws its instances from a fixed seed, evaluates one family of
//! inequalities or identities, and keeps every offending instance so it can
//! be replayed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregation::{batch_weights, Aggregator, Strategy};
use crate::error::{domain, Error, Result};
use crate::evaluation::{
    check_coefficient_decay, check_regret_bound, exp_concavity_margin, RegretInstance,
};
use crate::tvar::{sample_pacf_paths, TvarParams};

/// Tolerance for recursive vs closed-form weights.
pub const EQUIVALENCE_TOL: f64 = 1e-10;
/// Slack allowed on the deterministic regret bounds.
pub const REGRET_SLACK: f64 = 1e-9;
/// Slack allowed on the exponential-concavity inequality.
pub const EXP_CONCAVITY_SLACK: f64 = 1e-12;
/// Allowed relative change of the fitted decay constant when `j_max` doubles.
pub const DECAY_STABILITY: f64 = 0.10;

const ETAS: [f64; 3] = [0.01, 0.1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Regret,
    ExpConcavity,
    Decay,
    Equivalence,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regret" => Ok(Suite::Regret),
            "lemma-a2" => Ok(Suite::ExpConcavity),
            "decay" => Ok(Suite::Decay),
            "equivalence" => Ok(Suite::Equivalence),
            "all" => Ok(Suite::All),
            other => Err(domain(format!(
                "unknown suite {other:?}, expected regret, lemma-a2, decay, equivalence or all"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Regret => "regret",
            Suite::ExpConcavity => "lemma-a2",
            Suite::Decay => "decay",
            Suite::Equivalence => "equivalence",
            Suite::All => "all",
        })
    }
}

/// Outcome of one property over all of its instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: usize,
    pub violations: usize,
    /// Worst observed value of the checked quantity (smallest margin, or
    /// largest discrepancy for equivalence and decay).
    pub worst: f64,
    pub offending: Vec<serde_json::Value>,
}

impl SuiteReport {
    fn new(name: impl Into<String>, worst: f64) -> Self {
        Self {
            name: name.into(),
            checks: 0,
            violations: 0,
            worst,
            offending: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn normal_instance(rng: &mut ChaCha8Rng, horizon: usize, n: usize) -> RegretInstance {
    RegretInstance {
        predictions: (0..horizon)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect(),
        observations: (0..horizon).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

/// Largest absolute gap between recursive weights and the closed form over
/// every step of the instance.
pub fn weight_gap(strategy: Strategy, eta: f64, instance: &RegretInstance) -> Result<f64> {
    let n = instance.width();
    let mut agg = Aggregator::new(n, eta, strategy)?;
    let mut gap: f64 = 0.0;
    for t in 0..=instance.len() {
        let closed = batch_weights(
            strategy,
            eta,
            n,
            &instance.predictions[..t],
            &instance.observations[..t],
        )?;
        for (a, b) in agg.weights().iter().zip(&closed) {
            gap = gap.max((a - b).abs());
        }
        if t < instance.len() {
            agg.predict(&instance.predictions[t])?;
            agg.update(instance.observations[t])?;
        }
    }
    Ok(gap)
}

/// Recursive vs closed-form weights on `instances` random instances
/// (T = 200, N = 5, standard normal data), both strategies.
pub fn equivalence_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("equivalence", 0.0);
    for k in 0..instances {
        let eta = ETAS[k % ETAS.len()];
        let instance = normal_instance(&mut rng, 200, 5);
        for strategy in Strategy::ALL {
            let gap = weight_gap(strategy, eta, &instance)?;
            report.checks += 1;
            report.worst = report.worst.max(gap);
            if !(gap <= EQUIVALENCE_TOL) {
                report.violations += 1;
                report.offending.push(json!({
                    "strategy": strategy, "eta": eta, "gap": gap, "instance": instance,
                }));
            }
        }
    }
    Ok(report)
}

/// Deterministic regret bounds on `instances` random instances (T = 100,
/// N = 5, standard normal data), both strategies.
pub fn regret_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("regret", f64::INFINITY);
    for k in 0..instances {
        let eta = ETAS[k % ETAS.len()];
        let instance = normal_instance(&mut rng, 100, 5);
        for strategy in Strategy::ALL {
            let margin = check_regret_bound(strategy, eta, &instance)?;
            report.checks += 1;
            report.worst = report.worst.min(margin);
            if !(margin >= -REGRET_SLACK) {
                report.violations += 1;
                report.offending.push(json!({
                    "strategy": strategy, "eta": eta, "margin": margin, "instance": instance,
                }));
            }
        }
    }
    Ok(report)
}

/// Random discrete distribution on `[-a, a]`; about a third of the atoms
/// sit exactly on the boundary.
fn random_distribution(rng: &mut ChaCha8Rng, a: f64) -> (Vec<f64>, Vec<f64>) {
    let atoms = rng.random_range(1..=8);
    let support = (0..atoms)
        .map(|_| match rng.random_range(0..6) {
            0 => a,
            1 => -a,
            _ => rng.random_range(-a..=a),
        })
        .collect();
    let raw: Vec<f64> = (0..atoms).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    (support, raw.into_iter().map(|p| p / total).collect())
}

/// Exponential-concavity inequality on `count` random distributions. The
/// first fifth use `a <= 2^(-1/2)`, where the `(a^2 - 1/2)_+` term vanishes.
pub fn exp_concavity_suite(count: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("lemma-a2", f64::INFINITY);
    let boundary = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..count {
        let a = match k {
            0 => boundary,
            _ if k < count / 5 => rng.random_range(1e-6..=boundary),
            _ => rng.random_range(1e-6..=3.0),
        };
        let (support, probabilities) = random_distribution(&mut rng, a);
        let margin = exp_concavity_margin(&support, &probabilities, a)?;
        report.checks += 1;
        report.worst = report.worst.min(margin);
        if !(margin >= -EXP_CONCAVITY_SLACK) {
            report.violations += 1;
            report.offending.push(json!({
                "a": a, "support": support, "probabilities": probabilities, "margin": margin,
            }));
        }
    }
    Ok(report)
}

/// Parameters of the kind used in the adaptive-minimax experiment: `d = 3`
/// PACF paths with margin `gamma`, unit volatility.
pub fn experiment_style_params(gamma: f64, seed: u64) -> Result<TvarParams> {
    let path = sample_pacf_paths(3, 1024, gamma, 3, seed)?;
    TvarParams::from_pacf(&path, 1.0, None)
}

/// Relative change of the fitted `K_bar` between `j_max` and `2 j_max`.
pub fn decay_stability(
    params: &TvarParams,
    horizon: usize,
    delta1: f64,
    j_max: usize,
) -> Result<(f64, f64, f64)> {
    let short = check_coefficient_decay(params, horizon, delta1, j_max)?;
    let long = check_coefficient_decay(params, horizon, delta1, 2 * j_max)?;
    Ok((short, long, (long - short).abs() / short))
}

/// PACF margin of the decay-suite paths; keeps every spectral radius below
/// the `delta1 = 0.95` decay rate.
pub const DECAY_GAMMA: f64 = 0.5;

/// Decay fits at `delta1 = 0.95` for a few experiment-style parameter paths.
pub fn decay_suite(seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("decay", 0.0);
    for k in 0..5 {
        let path_seed = seed.wrapping_add(k);
        let params = experiment_style_params(DECAY_GAMMA, path_seed)?;
        let (short, long, change) = decay_stability(&params, 1024, 0.95, 100)?;
        report.checks += 1;
        report.worst = report.worst.max(change);
        if !(long.is_finite() && change < DECAY_STABILITY) {
            report.violations += 1;
            report.offending.push(json!({
                "path_seed": path_seed, "delta": params.delta(),
                "k_bar_100": short, "k_bar_200": long, "relative_change": change,
            }));
        }
    }
    Ok(report)
}

/// Default seed of every suite.
pub const SUITE_SEED: u64 = 20_150_801;

pub fn run_suite(suite: Suite) -> Result<Vec<SuiteReport>> {
    Ok(match suite {
        Suite::Equivalence => vec![equivalence_suite(50, SUITE_SEED)?],
        Suite::Regret => vec![regret_suite(100, SUITE_SEED)?],
        Suite::ExpConcavity => vec![exp_concavity_suite(1000, SUITE_SEED)?],
        Suite::Decay => vec![decay_suite(SUITE_SEED)?],
        Suite::All => vec![
            equivalence_suite(50, SUITE_SEED)?,
            regret_suite(100, SUITE_SEED)?,
            exp_concavity_suite(1000, SUITE_SEED)?,
            decay_suite(SUITE_SEED)?,
        ],
    })
}
