//! Exponentially weighted convex aggregation of predictor streams.
//!
//! Two weight rules are supported, fixed for a whole sequence:
//!
//! * [`Strategy::Gradient`]: `alpha_i ∝ exp(-2 eta sum_s (xhat_s - x_s) xhat_s^(i))`,
//!   where `xhat_s` is the aggregate itself (gradient of the quadratic loss).
//! * [`Strategy::Loss`]: `alpha_i ∝ exp(-eta sum_s (xhat_s^(i) - x_s)^2)`.
//!
//! Weights are kept in the log domain and renormalized by max-subtraction, so
//! cumulative losses in the thousands do not overflow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Weight-update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Strategy 1: gradient of the quadratic loss.
    Gradient,
    /// Strategy 2: quadratic loss.
    Loss,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Gradient, Strategy::Loss];

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Gradient => "agg_gradient",
            Strategy::Loss => "agg_loss",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Gradient => "gradient",
            Strategy::Loss => "loss",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "gradient" => Ok(Strategy::Gradient),
            "2" | "loss" => Ok(Strategy::Loss),
            other => Err(domain(format!(
                "unknown strategy {other:?}, expected 1, 2, gradient or loss"
            ))),
        }
    }
}

/// Online aggregation state.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator {
    strategy: Strategy,
    eta: f64,
    /// Normalized log-weights: `logsumexp == 0`.
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    step: usize,
    last_predictions: Vec<f64>,
    last_aggregate: f64,
    /// Set by `predict`, consumed by `update`.
    armed: bool,
}

impl Aggregator {
    /// Uniform weights `1/N`.
    pub fn new(n: usize, eta: f64, strategy: Strategy) -> Result<Self> {
        if n == 0 {
            return Err(domain("cannot aggregate an empty set of predictors"));
        }
        Self::with_weights(&vec![1.0; n], eta, strategy)
    }

    /// Starts from arbitrary nonnegative weights (normalized internally).
    pub fn with_weights(weights: &[f64], eta: f64, strategy: Strategy) -> Result<Self> {
        if weights.is_empty() {
            return Err(domain("cannot aggregate an empty set of predictors"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(domain(format!(
                "learning rate eta = {eta} must be positive and finite"
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || weights.iter().all(|w| *w == 0.0)
        {
            return Err(domain(
                "initial weights must be nonnegative with positive mass",
            ));
        }
        let mut agg = Self {
            strategy,
            eta,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights: vec![0.0; weights.len()],
            step: 1,
            last_predictions: vec![0.0; weights.len()],
            last_aggregate: 0.0,
            armed: false,
        };
        agg.normalize();
        Ok(agg)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Current step `t` (1-based): the weights returned by [`Self::weights`]
    /// are those used to predict `x_t`.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Convex combination of `predictions` under the current weights. The
    /// predictions and the aggregate are cached for the next [`Self::update`].
    pub fn predict(&mut self, predictions: &[f64]) -> Result<f64> {
        if predictions.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: predictions.len(),
            });
        }
        if let Some(p) = predictions.iter().find(|p| !p.is_finite()) {
            return Err(domain(format!("non-finite prediction {p}")));
        }
        let aggregate = self
            .weights
            .iter()
            .zip(predictions)
            .map(|(w, p)| w * p)
            .sum();
        self.last_predictions.copy_from_slice(predictions);
        self.last_aggregate = aggregate;
        self.armed = true;
        Ok(aggregate)
    }

    /// Reveals `x_t` and moves the weights to step `t + 1`.
    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(domain(format!("non-finite observation {x}")));
        }
        if !self.armed {
            return Err(Error::UpdateBeforePredict { step: self.step });
        }
        self.armed = false;
        let scale = -2.0 * self.eta * (self.last_aggregate - x);
        let strategy = self.strategy;
        let eta = self.eta;
        let increment = |p: f64| match strategy {
            Strategy::Gradient => scale * p,
            Strategy::Loss => -eta * (p - x) * (p - x),
        };
        // shifting all increments by a constant leaves the weights unchanged
        // and keeps the common part from eroding the log-weights
        let shift = self
            .last_predictions
            .iter()
            .map(|&p| increment(p))
            .fold(f64::NEG_INFINITY, f64::max);
        for (lw, p) in self.log_weights.iter_mut().zip(&self.last_predictions) {
            *lw += increment(*p) - shift;
        }
        self.normalize();
        self.step += 1;
        Ok(())
    }

    fn normalize(&mut self) {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            // only reachable when every increment overflowed; keep weights
            self.log_weights = self.weights.iter().map(|w| w.ln()).collect();
            return;
        }
        let mut total = 0.0;
        for (w, lw) in self.weights.iter_mut().zip(&self.log_weights) {
            *w = (lw - max).exp();
            total += *w;
        }
        let log_total = total.ln() + max;
        for (w, lw) in self.weights.iter_mut().zip(self.log_weights.iter_mut()) {
            *w /= total;
            *lw -= log_total;
        }
    }
}

/// Closed-form weights for step `t = observations.len() + 1`, computed from
/// cumulative sums over the history `s = 1..t-1`.
///
/// `predictions[s]` holds the `N` predictor outputs at step `s + 1`. Empty
/// history gives uniform weights.
pub fn batch_weights(
    strategy: Strategy,
    eta: f64,
    n: usize,
    predictions: &[Vec<f64>],
    observations: &[f64],
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("cannot aggregate an empty set of predictors"));
    }
    if predictions.len() != observations.len() {
        return Err(Error::LengthMismatch {
            expected: observations.len(),
            actual: predictions.len(),
        });
    }
    if let Some(row) = predictions.iter().find(|row| row.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: row.len(),
        });
    }
    let mut cumulative = vec![0.0; n];
    match strategy {
        Strategy::Loss => {
            for (row, &x) in predictions.iter().zip(observations) {
                for (c, p) in cumulative.iter_mut().zip(row) {
                    *c += (p - x) * (p - x);
                }
            }
            Ok(softmax_scaled(&cumulative, -eta))
        }
        Strategy::Gradient => {
            // alpha_s itself is the closed form evaluated on the first s-1 steps
            for (row, &x) in predictions.iter().zip(observations) {
                let alpha = softmax_scaled(&cumulative, -2.0 * eta);
                let aggregate: f64 = alpha.iter().zip(row).map(|(a, p)| a * p).sum();
                for (c, p) in cumulative.iter_mut().zip(row) {
                    *c += (aggregate - x) * p;
                }
            }
            Ok(softmax_scaled(&cumulative, -2.0 * eta))
        }
    }
}

/// `exp(scale * v_i) / sum_k exp(scale * v_k)`.
fn softmax_scaled(values: &[f64], scale: f64) -> Vec<f64> {
    let scaled: Vec<f64> = values.iter().map(|v| scale * v).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Which oracle bound a learning rate is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaCase {
    /// Fourth moment of the noise; gradient weights.
    I,
    /// `p`-th moment of the noise, `p > 2`; loss weights.
    Ii,
    /// Exponential moment of the noise; loss weights.
    Iii,
}

impl EtaCase {
    /// Strategy the rate is meant for.
    pub fn strategy(self) -> Strategy {
        match self {
            EtaCase::I => Strategy::Gradient,
            EtaCase::Ii | EtaCase::Iii => Strategy::Loss,
        }
    }
}

impl FromStr for EtaCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(EtaCase::I),
            "ii" => Ok(EtaCase::Ii),
            "iii" => Ok(EtaCase::Iii),
            other => Err(domain(format!(
                "unknown eta case {other:?}, expected i, ii or iii"
            ))),
        }
    }
}

/// Constants of the sub-linear model and of the noise moments.
///
/// * `a_star_bound`: `A_*`, the l1 bound on the filter coefficients.
/// * `a_star`: `a^*`, the sup bound on the filter coefficients (`<= A_*`).
/// * `l_star`: `L_*`, the l1 norm of the Lipschitz sequence.
/// * `m_p`, `p`: the `p`-th moment bound of the noise.
/// * `zeta`, `phi_zeta`: the exponential moment `E[exp(zeta Z)] <= phi(zeta)`.
/// * `sigma_plus`: volatility upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub a_star_bound: f64,
    pub a_star: f64,
    pub l_star: f64,
    pub m_p: f64,
    pub p: f64,
    pub zeta: f64,
    pub phi_zeta: f64,
    pub sigma_plus: f64,
}

impl Default for ModelConstants {
    fn default() -> Self {
        Self {
            a_star_bound: 1.0,
            a_star: 1.0,
            l_star: 0.0,
            m_p: 1.0,
            p: 4.0,
            zeta: 1.0,
            phi_zeta: 2.0,
            sigma_plus: 1.0,
        }
    }
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_star_bound", self.a_star_bound),
            ("a_star", self.a_star),
            ("m_p", self.m_p),
            ("zeta", self.zeta),
            ("phi_zeta", self.phi_zeta),
            ("sigma_plus", self.sigma_plus),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!(
                    "model constant {name} = {v} must be positive"
                )));
            }
        }
        // L_* = 0 is the trivial zero predictor family
        if !(self.l_star >= 0.0 && self.l_star.is_finite()) {
            return Err(domain(format!(
                "model constant l_star = {} must be >= 0",
                self.l_star
            )));
        }
        if !(self.p > 2.0) {
            return Err(domain(format!("moment order p = {} must exceed 2", self.p)));
        }
        if self.a_star > self.a_star_bound {
            return Err(domain(format!(
                "a_star = {} must not exceed a_star_bound = {}",
                self.a_star, self.a_star_bound
            )));
        }
        Ok(())
    }
}

/// Learning rate balancing the oracle bound's remainder terms when the
/// model constants are known.
///
/// * case i: `(2 m_4)^(-1/2) (1+L_*)^(-2) A_*^(-2) (ln N / T)^(1/2)`, needs `p = 4`.
/// * case ii: `(2 m_p^(2/p))^(-1) (1+L_*)^(-2) A_*^(-2) (ln N / T)^(2/p)`.
/// * case iii: `zeta^2 (2 (1+L_*)^2 A_*^2)^(-1) (ln(T / ln N))^(-2)`.
pub fn eta_corollary(
    case: EtaCase,
    constants: &ModelConstants,
    horizon: usize,
    n: usize,
) -> Result<f64> {
    constants.validate()?;
    if n < 2 {
        return Err(domain(format!("need at least two predictors, got N = {n}")));
    }
    if horizon == 0 {
        return Err(domain("horizon T must be at least 1"));
    }
    let t = horizon as f64;
    let log_n = (n as f64).ln();
    let lip = (1.0 + constants.l_star).powi(2) * constants.a_star_bound.powi(2);
    match case {
        EtaCase::I => {
            if constants.p != 4.0 {
                return Err(domain(format!(
                    "case i is stated for the fourth moment, got p = {}",
                    constants.p
                )));
            }
            Ok((log_n / t).sqrt() / ((2.0 * constants.m_p).sqrt() * lip))
        }
        EtaCase::Ii => {
            let p = constants.p;
            Ok((log_n / t).powf(2.0 / p) / (2.0 * constants.m_p.powf(2.0 / p) * lip))
        }
        EtaCase::Iii => {
            let inner = (t / log_n).ln();
            if !(inner > 0.0) {
                return Err(domain(format!(
                    "case iii needs T > ln N, got T = {horizon}, N = {n}"
                )));
            }
            Ok(constants.zeta.powi(2) / (2.0 * lip) / (inner * inner))
        }
    }
}

/// Learning rate for the adaptive aggregation of the NLMS bank, depending
/// only on `sigma_+` and `T`.
///
/// * case i: `sigma_+^(-2) (ln ceil(ln T) / T)^(1/2)`.
/// * case ii: `sigma_+^(-2) (ln ceil(ln T) / T)^(2/p)`.
/// * case iii: `sigma_+^(-2) (ln T)^(-3)`.
pub fn eta_adaptive(case: EtaCase, sigma_plus: f64, horizon: usize, p: Option<f64>) -> Result<f64> {
    if horizon < 3 {
        return Err(domain(format!("horizon T = {horizon} must be at least 3")));
    }
    if !(sigma_plus > 0.0 && sigma_plus.is_finite()) {
        return Err(domain(format!(
            "sigma_plus = {sigma_plus} must be positive"
        )));
    }
    let t = horizon as f64;
    let scale = sigma_plus.powi(-2);
    let ratio = t.ln().ceil().ln() / t;
    match case {
        EtaCase::I => Ok(scale * ratio.sqrt()),
        EtaCase::Ii => {
            let p = p.ok_or_else(|| domain("case ii needs the moment order p"))?;
            if !(p > 2.0) {
                return Err(domain(format!("moment order p = {p} must exceed 2")));
            }
            Ok(scale * ratio.powf(2.0 / p))
        }
        EtaCase::Iii => Ok(scale * t.ln().powi(-3)),
    }
}
