//! One-step-ahead predictors and the NLMS bank spanning the smoothness grid.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// An online one-step-ahead predictor.
///
/// `predict` may only use observations strictly before the current step;
/// `update` then reveals the current observation.
pub trait Predictor {
    fn predict(&self) -> f64;
    fn update(&mut self, x: f64);
}

/// Always predicts zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self) -> f64 {
        0.0
    }

    fn update(&mut self, _x: f64) {}
}

/// AR predictor with fixed coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenArPredictor {
    coeffs: Vec<f64>,
    buffer: Vec<f64>,
}

impl FrozenArPredictor {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let buffer = vec![0.0; coeffs.len()];
        Self { coeffs, buffer }
    }
}

impl Predictor for FrozenArPredictor {
    fn predict(&self) -> f64 {
        dot(&self.coeffs, &self.buffer)
    }

    fn update(&mut self, x: f64) {
        push_front(&mut self.buffer, x);
    }
}

/// Normalized LMS estimate of local AR coefficients.
///
/// The update is `theta <- theta + mu * e * phi / (eps + |phi|^2)`, followed by
/// a rescaling of `theta` onto the l1 ball of radius `clip`. The clipping makes
/// every prediction `clip`-Lipschitz in the last `d` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct NlmsPredictor {
    theta_hat: Vec<f64>,
    mu: f64,
    eps: f64,
    clip: f64,
    /// Last `d` observations, most recent first, zero-padded at start.
    buffer: Vec<f64>,
}

impl NlmsPredictor {
    pub fn new(d: usize, mu: f64, eps: f64, clip: f64) -> Result<Self> {
        Self::with_state(vec![0.0; d], vec![0.0; d], mu, eps, clip)
    }

    /// Starts from a given estimate and observation buffer (most recent first).
    pub fn with_state(
        theta_hat: Vec<f64>,
        buffer: Vec<f64>,
        mu: f64,
        eps: f64,
        clip: f64,
    ) -> Result<Self> {
        if theta_hat.is_empty() {
            return Err(domain("NLMS order must be at least 1"));
        }
        if buffer.len() != theta_hat.len() {
            return Err(crate::Error::LengthMismatch {
                expected: theta_hat.len(),
                actual: buffer.len(),
            });
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(domain(format!(
                "NLMS step size mu = {mu} must be finite and >= 0"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(domain(format!(
                "NLMS regularizer eps = {eps} must be positive"
            )));
        }
        if !(clip > 0.0) {
            return Err(domain(format!("NLMS l1 clip = {clip} must be positive")));
        }
        let mut p = Self {
            theta_hat,
            mu,
            eps,
            clip,
            buffer,
        };
        p.project();
        Ok(p)
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn buffer(&self) -> &[f64] {
        &self.buffer
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    fn project(&mut self) {
        let l1: f64 = self.theta_hat.iter().map(|c| c.abs()).sum();
        if l1 > self.clip {
            let scale = self.clip / l1;
            self.theta_hat.iter_mut().for_each(|c| *c *= scale);
        }
    }
}

impl Predictor for NlmsPredictor {
    fn predict(&self) -> f64 {
        dot(&self.theta_hat, &self.buffer)
    }

    fn update(&mut self, x: f64) {
        let err = x - dot(&self.theta_hat, &self.buffer);
        let energy: f64 = self.buffer.iter().map(|v| v * v).sum();
        let gain = self.mu * err / (self.eps + energy);
        for (c, phi) in self.theta_hat.iter_mut().zip(&self.buffer) {
            *c += gain * phi;
        }
        self.project();
        push_front(&mut self.buffer, x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn push_front(buffer: &mut [f64], x: f64) {
    if buffer.is_empty() {
        return;
    }
    buffer.rotate_right(1);
    buffer[0] = x;
}

/// Number of predictors for horizon `T`: `ceil(ln T)` when the maximal
/// smoothness `beta_0` is finite, `ceil((ln T)^2)` when it is infinite.
pub fn bank_size(horizon: usize, beta_0: f64) -> Result<usize> {
    check_beta_0(beta_0)?;
    if horizon < 3 {
        return Err(domain(format!("horizon T = {horizon} must be at least 3")));
    }
    let log_t = (horizon as f64).ln();
    let n = if beta_0.is_finite() {
        log_t.ceil()
    } else {
        (log_t * log_t).ceil()
    };
    Ok(n as usize)
}

/// Smoothness grid `beta_i = (i-1) beta_0 / N` (finite `beta_0`) or
/// `(i-1) / sqrt(N)` (infinite `beta_0`), `i = 1..=N`.
pub fn beta_grid(n: usize, beta_0: f64) -> Result<Vec<f64>> {
    check_beta_0(beta_0)?;
    let nf = n as f64;
    Ok((0..n)
        .map(|i| {
            let i = i as f64;
            if beta_0.is_finite() {
                i * beta_0 / nf
            } else {
                i / nf.sqrt()
            }
        })
        .collect())
}

/// NLMS step size tuned to smoothness `beta`: `c_mu * T^(-2 beta / (2 beta + 1))`.
pub fn step_size(horizon: usize, beta: f64, c_mu: f64) -> f64 {
    c_mu * (horizon as f64).powf(-2.0 * beta / (2.0 * beta + 1.0))
}

fn check_beta_0(beta_0: f64) -> Result<()> {
    if beta_0 > 0.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "maximal smoothness beta_0 = {beta_0} must be positive"
        )))
    }
}

/// Description of an NLMS bank; serialized into experiment outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorBankSpec {
    pub n: usize,
    #[serde(with = "crate::config::extended_f64")]
    pub beta_0: f64,
    pub beta_grid: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub c_mu: f64,
    pub d: usize,
    pub eps: f64,
    pub clip: f64,
}

impl PredictorBankSpec {
    /// Fresh predictors with zero estimates and empty buffers.
    pub fn instantiate(&self) -> Result<Vec<NlmsPredictor>> {
        self.mu_values
            .iter()
            .map(|&mu| NlmsPredictor::new(self.d, mu, self.eps, self.clip))
            .collect()
    }
}

/// Builds the bank specification for horizon `T` and `N` live predictors
/// with step sizes `mu_1 > ... > mu_N`.
pub fn build_nlms_bank(
    horizon: usize,
    beta_0: f64,
    c_mu: f64,
    d: usize,
    eps: f64,
    clip: f64,
) -> Result<(PredictorBankSpec, Vec<NlmsPredictor>)> {
    let n = bank_size(horizon, beta_0)?;
    if !(c_mu > 0.0 && c_mu.is_finite()) {
        return Err(domain(format!(
            "step-size constant c_mu = {c_mu} must be positive"
        )));
    }
    let beta_grid = beta_grid(n, beta_0)?;
    let mu_values = beta_grid
        .iter()
        .map(|&b| step_size(horizon, b, c_mu))
        .collect();
    let spec = PredictorBankSpec {
        n,
        beta_0,
        beta_grid,
        mu_values,
        c_mu,
        d,
        eps,
        clip,
    };
    let bank = spec.instantiate()?;
    Ok((spec, bank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_examples() {
        let p = NlmsPredictor::new(2, 0.1, 1.0, 8.0).unwrap();
        assert_eq!(p.predict(), 0.0);
        let p = NlmsPredictor::with_state(vec![0.5], vec![2.0], 0.1, 1.0, 8.0).unwrap();
        assert_eq!(p.predict(), 1.0);
        let p = NlmsPredictor::with_state(vec![0.4, 0.2], vec![1.0, -1.0], 0.1, 1.0, 8.0).unwrap();
        assert!((p.predict() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn update_examples() {
        let mut p = NlmsPredictor::new(3, 0.7, 1.0, 8.0).unwrap();
        p.update(5.0);
        assert_eq!(p.theta_hat(), &[0.0; 3]);
        assert_eq!(p.buffer(), &[5.0, 0.0, 0.0]);

        let mut p = NlmsPredictor::with_state(vec![0.0], vec![1.0], 0.5, 1.0, 8.0).unwrap();
        p.update(1.0);
        assert_eq!(p.theta_hat(), &[0.25]);
        assert_eq!(p.buffer(), &[1.0]);
    }

    #[test]
    fn update_clips_to_l1_ball() {
        let mut p =
            NlmsPredictor::with_state(vec![0.9, 0.0], vec![1.0, 1.0], 1.0, 1e-9, 1.0).unwrap();
        p.update(100.0);
        let l1: f64 = p.theta_hat().iter().map(|c| c.abs()).sum();
        assert!((l1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_with_zero_step() {
        let mut p =
            NlmsPredictor::with_state(vec![0.3, -0.1], vec![0.0; 2], 0.0, 1.0, 8.0).unwrap();
        for x in [1.0, -2.0, 3.5, 0.25] {
            p.update(x);
            assert_eq!(p.theta_hat(), &[0.3, -0.1]);
        }
        let mut f = FrozenArPredictor::new(vec![0.3, -0.1]);
        for x in [1.0, -2.0, 3.5, 0.25] {
            f.update(x);
        }
        assert_eq!(f.predict(), p.predict());
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(NlmsPredictor::new(0, 0.1, 1.0, 8.0).is_err());
        assert!(NlmsPredictor::new(2, -0.1, 1.0, 8.0).is_err());
        assert!(NlmsPredictor::new(2, 0.1, 0.0, 8.0).is_err());
        assert!(NlmsPredictor::new(2, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn bank_examples() {
        let (spec, bank) = build_nlms_bank(1024, 0.5, 0.5, 3, 1.0, 8.0).unwrap();
        assert_eq!(spec.n, 7);
        assert_eq!(bank.len(), 7);
        for (i, b) in spec.beta_grid.iter().enumerate() {
            assert!((b - i as f64 / 14.0).abs() < 1e-15);
        }
        assert_eq!(spec.mu_values[0], 0.5);
        assert!(spec.mu_values.windows(2).all(|w| w[0] > w[1]));

        let (spec, _) = build_nlms_bank(1024, f64::INFINITY, 0.5, 3, 1.0, 8.0).unwrap();
        assert_eq!(spec.n, 49);
        assert!((spec.beta_grid[1] - 1.0 / 7.0).abs() < 1e-15);
        assert!(spec.mu_values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn bank_rejects_bad_smoothness() {
        assert!(build_nlms_bank(1024, 0.0, 0.5, 3, 1.0, 8.0).is_err());
        assert!(build_nlms_bank(1024, -1.0, 0.5, 3, 1.0, 8.0).is_err());
        assert!(build_nlms_bank(1024, f64::NAN, 0.5, 3, 1.0, 8.0).is_err());
        assert!(build_nlms_bank(2, 0.5, 0.5, 3, 1.0, 8.0).is_err());
    }

    #[test]
    fn bank_is_deterministic() {
        let a = build_nlms_bank(4096, 0.7, 0.3, 2, 1.0, 8.0).unwrap();
        let b = build_nlms_bank(4096, 0.7, 0.3, 2, 1.0, 8.0).unwrap();
        assert_eq!(a, b);
    }
}
