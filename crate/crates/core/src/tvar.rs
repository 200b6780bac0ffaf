//! Time-varying autoregressive (TVAR) processes.
//!
//! A TVAR(d) process sampled at frequency `1/T` follows
//!
//! ```text
//! X_t = sum_{j=1..d} theta_j((t-1)/T) X_{t-j} + sigma(t/T) xi_t
//! ```
//!
//! with i.i.d. zero-mean unit-variance innovations `xi_t`. Parameters are
//! stored as sampled paths on `[0, 1]`, linearly interpolated between grid
//! points and held constant for `u <= 0`.
//!
//! Stability is expressed through the margin `delta`: the local polynomial
//! `1 - sum theta_j z^j` must have no zero inside the disk of radius
//! `1/delta`, which is the same as every eigenvalue of the companion matrix
//! having modulus at most `delta`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Relative tolerance applied to eigenvalue moduli in [`check_stability`].
pub const STABILITY_RTOL: f64 = 1e-10;

/// Target size of the initialization error left after burn-in.
pub const BURN_IN_TOLERANCE: f64 = 1e-12;

/// Largest f64 strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Maps partial autocorrelations to AR coefficients with the step-up
/// (Levinson-Durbin) recursion.
///
/// The returned `theta` is in the convention `X_t = sum theta_j X_{t-j}`.
pub fn levinson_durbin(pacf: &[f64]) -> Result<Vec<f64>> {
    let mut theta = Vec::with_capacity(pacf.len());
    let mut prev = Vec::with_capacity(pacf.len());
    for (k, &phi) in pacf.iter().enumerate() {
        if !(phi.abs() < 1.0) {
            return Err(domain(format!(
                "partial autocorrelation at lag {} is {phi}, must lie in (-1, 1)",
                k + 1
            )));
        }
        prev.clone_from(&theta);
        for j in 0..k {
            theta[j] = prev[j] - phi * prev[k - 1 - j];
        }
        theta.push(phi);
    }
    Ok(theta)
}

/// Inverse of [`levinson_durbin`] (step-down recursion).
///
/// Fails when an intermediate reflection coefficient reaches the unit circle,
/// i.e. when `theta` is not the image of a point of `(-1, 1)^d`.
pub fn ar_to_pacf(theta: &[f64]) -> Result<Vec<f64>> {
    let d = theta.len();
    let mut pacf = vec![0.0; d];
    let mut a = theta.to_vec();
    for k in (0..d).rev() {
        let phi = a[k];
        if !(phi.abs() < 1.0) {
            return Err(domain(format!(
                "reflection coefficient at lag {} is {phi}, not strictly inside the unit interval",
                k + 1
            )));
        }
        pacf[k] = phi;
        let denom = 1.0 - phi * phi;
        let prev: Vec<f64> = (0..k)
            .map(|j| (a[j] + phi * a[k - 1 - j]) / denom)
            .collect();
        a.truncate(k);
        a.copy_from_slice(&prev);
    }
    Ok(pacf)
}

/// Largest eigenvalue modulus of the companion matrix of `theta`.
///
/// Returns `NaN` if the Schur iteration fails to converge, which callers treat
/// as unstable.
pub fn spectral_radius(theta: &[f64]) -> f64 {
    match theta.len() {
        0 => 0.0,
        1 => theta[0].abs(),
        d => {
            let mut companion = DMatrix::<f64>::zeros(d, d);
            for (j, &c) in theta.iter().enumerate() {
                companion[(0, j)] = c;
            }
            for i in 1..d {
                companion[(i, i - 1)] = 1.0;
            }
            match nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 10_000) {
                Some(schur) => schur
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max),
                None => f64::NAN,
            }
        }
    }
}

/// True iff `1 - sum theta_j z^j` has no zero with `|z| < 1/delta`.
///
/// Roots exactly on `|z| = 1/delta` are admitted.
pub fn check_stability(theta: &[f64], delta: f64) -> bool {
    if theta.iter().any(|c| !c.is_finite()) {
        return false;
    }
    let radius = spectral_radius(theta);
    radius <= delta * (1.0 + STABILITY_RTOL)
}

/// Partial autocorrelation paths sampled on an equispaced grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacfPath {
    d: usize,
    gamma: f64,
    /// One length-`d` vector per grid point.
    values: Vec<Vec<f64>>,
}

impl PacfPath {
    pub fn order(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn grid_len(&self) -> usize {
        self.values.len()
    }

    /// Grid abscissae `k / (T_grid - 1)`.
    pub fn grid(&self) -> Vec<f64> {
        equispaced_grid(self.values.len())
    }

    /// AR coefficients at every grid point.
    pub fn to_theta(&self) -> Result<Vec<Vec<f64>>> {
        self.values.iter().map(|p| levinson_durbin(p)).collect()
    }
}

pub(crate) fn equispaced_grid(len: usize) -> Vec<f64> {
    let last = (len - 1) as f64;
    (0..len).map(|k| k as f64 / last).collect()
}

/// Draws smooth random PACF paths `gamma * tanh(f_k(u))` where each `f_k` is a
/// random trigonometric polynomial of degree `n_harmonics`.
///
/// Harmonic `h` has coefficients with standard deviation `1/h`, so the paths
/// are dominated by their slowest components.
pub fn sample_pacf_paths(
    d: usize,
    t_grid: usize,
    gamma: f64,
    n_harmonics: usize,
    seed: u64,
) -> Result<PacfPath> {
    if d == 0 {
        return Err(domain("AR order must be at least 1"));
    }
    if t_grid < 2 {
        return Err(domain("PACF grid needs at least two points"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(domain(format!("margin gamma = {gamma} must lie in [0, 1)")));
    }
    if n_harmonics == 0 {
        return Err(domain("at least one harmonic is required"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (offset, [(cos, sin); n_harmonics]) per lag
    let coeffs: Vec<(f64, Vec<(f64, f64)>)> = (0..d)
        .map(|_| {
            let offset: f64 = rng.sample::<f64, _>(StandardNormal);
            let harmonics = (1..=n_harmonics)
                .map(|h| {
                    let scale = 1.0 / h as f64;
                    let c: f64 = rng.sample(StandardNormal);
                    let s: f64 = rng.sample(StandardNormal);
                    (scale * c, scale * s)
                })
                .collect();
            (offset, harmonics)
        })
        .collect();

    let grid = equispaced_grid(t_grid);
    let values = grid
        .iter()
        .map(|&u| {
            coeffs
                .iter()
                .map(|(offset, harmonics)| {
                    let f = harmonics
                        .iter()
                        .enumerate()
                        .fold(*offset, |acc, (h, (c, s))| {
                            let w = std::f64::consts::TAU * (h + 1) as f64 * u;
                            acc + c * w.cos() + s * w.sin()
                        });
                    // tanh saturates to exactly +-1 for large arguments
                    gamma * f.tanh().clamp(-BELOW_ONE, BELOW_ONE)
                })
                .collect()
        })
        .collect();

    Ok(PacfPath { d, gamma, values })
}

/// Sampled TVAR parameter paths in the class `C(beta, R, delta, rho, sigma_+)`.
///
/// Construction validates the stability margin at every grid point and the
/// volatility band `rho * sigma_+ <= sigma(u) <= sigma_+`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvarParams {
    grid: Vec<f64>,
    theta: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    delta: f64,
    rho: f64,
    sigma_plus: f64,
}

impl TvarParams {
    pub fn new(
        grid: Vec<f64>,
        theta: Vec<Vec<f64>>,
        sigma: Vec<f64>,
        delta: f64,
        rho: f64,
        sigma_plus: f64,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(domain("parameter grid needs at least two points"));
        }
        if theta.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: theta.len(),
            });
        }
        if sigma.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: sigma.len(),
            });
        }
        if (grid[0]).abs() > 1e-12 || (grid[grid.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(domain(
                "parameter grid must start at u = 0 and end at u = 1",
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("parameter grid must be strictly increasing"));
        }
        let d = theta[0].len();
        if d == 0 {
            return Err(domain("AR order must be at least 1"));
        }
        if let Some(row) = theta.iter().find(|row| row.len() != d) {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!(
                "stability margin delta = {delta} must lie in (0, 1)"
            )));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(domain(format!("rho = {rho} must lie in [0, 1]")));
        }
        if !(sigma_plus > 0.0 && sigma_plus.is_finite()) {
            return Err(domain(format!(
                "sigma_plus = {sigma_plus} must be positive"
            )));
        }
        let slack = 1e-12 * sigma_plus;
        for (k, &s) in sigma.iter().enumerate() {
            if !(s >= rho * sigma_plus - slack && s <= sigma_plus + slack) {
                return Err(domain(format!(
                    "sigma({}) = {s} outside [rho * sigma_plus, sigma_plus] = [{}, {sigma_plus}]",
                    grid[k],
                    rho * sigma_plus
                )));
            }
        }
        for (k, row) in theta.iter().enumerate() {
            if !check_stability(row, delta) {
                return Err(Error::Unstable(format!(
                    "theta({}) = {row:?} has spectral radius {} > delta = {delta}",
                    grid[k],
                    spectral_radius(row)
                )));
            }
        }
        Ok(Self {
            grid,
            theta,
            sigma,
            delta,
            rho,
            sigma_plus,
        })
    }

    /// Time-invariant parameters: `theta(u) = theta`, `sigma(u) = sigma`.
    pub fn constant(theta: Vec<f64>, sigma: f64, delta: f64) -> Result<Self> {
        let sigma_plus = if sigma > 0.0 { sigma } else { 1.0 };
        let rho = sigma / sigma_plus;
        Self::new(
            vec![0.0, 1.0],
            vec![theta.clone(), theta],
            vec![sigma, sigma],
            delta,
            rho,
            sigma_plus,
        )
    }

    /// Parameters from a PACF path and a constant volatility.
    ///
    /// With `delta = None` the margin is set to the largest companion spectral
    /// radius found on the grid.
    pub fn from_pacf(path: &PacfPath, sigma: f64, delta: Option<f64>) -> Result<Self> {
        let theta = path.to_theta()?;
        let delta = match delta {
            Some(delta) => delta,
            None => max_spectral_radius(&theta)?,
        };
        let sigma_plus = if sigma > 0.0 { sigma } else { 1.0 };
        Self::new(
            path.grid(),
            theta,
            vec![sigma; path.grid_len()],
            delta,
            sigma / sigma_plus,
            sigma_plus,
        )
    }

    pub fn order(&self) -> usize {
        self.theta[0].len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn sigma_plus(&self) -> f64 {
        self.sigma_plus
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn theta_grid(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn sigma_grid(&self) -> &[f64] {
        &self.sigma
    }

    /// Contraction rate `(1 + delta) / 2` used for burn-in and decay fits.
    pub fn default_delta1(&self) -> f64 {
        0.5 * (1.0 + self.delta)
    }

    /// Number of frozen-parameter steps run before `t = 1`.
    pub fn burn_in(&self) -> usize {
        let rate = self.default_delta1();
        (BURN_IN_TOLERANCE.ln() / rate.ln()).ceil() as usize
    }

    /// Bracketing grid index and interpolation weight for `u`.
    fn locate(&self, u: f64) -> (usize, f64) {
        if u <= 0.0 {
            return (0, 0.0);
        }
        let last = self.grid.len() - 1;
        if u >= 1.0 {
            return (last - 1, 1.0);
        }
        let hi = self.grid.partition_point(|&g| g <= u).min(last);
        let lo = hi - 1;
        let w = (u - self.grid[lo]) / (self.grid[hi] - self.grid[lo]);
        (lo, w)
    }

    /// Writes `theta(u)` into `out`.
    pub fn theta_at(&self, u: f64, out: &mut [f64]) {
        let (lo, w) = self.locate(u);
        let (a, b) = (&self.theta[lo], &self.theta[lo + 1]);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x + w * (y - x);
        }
    }

    pub fn sigma_at(&self, u: f64) -> f64 {
        let (lo, w) = self.locate(u);
        let (a, b) = (self.sigma[lo], self.sigma[lo + 1]);
        a + w * (b - a)
    }

    /// Checks the stability margin at the rescaled times `(t-1)/T`,
    /// `t = 1..=T`, actually visited by a simulation of length `T`.
    ///
    /// Interpolating between two stable grid points does not always stay
    /// stable, so grid validation alone is not enough.
    pub fn check_sampled(&self, horizon: usize) -> Result<()> {
        let mut theta = vec![0.0; self.order()];
        for t in 1..=horizon {
            let u = (t - 1) as f64 / horizon as f64;
            self.theta_at(u, &mut theta);
            if !check_stability(&theta, self.delta) {
                return Err(Error::Unstable(format!(
                    "interpolated theta({u}) = {theta:?} has spectral radius {} > delta = {}",
                    spectral_radius(&theta),
                    self.delta
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn max_spectral_radius(theta: &[Vec<f64>]) -> Result<f64> {
    let radius = theta
        .iter()
        .map(|row| spectral_radius(row))
        .fold(
            0.0,
            |acc: f64, r| if r.is_nan() { f64::NAN } else { acc.max(r) },
        );
    if !(radius < 1.0) {
        return Err(Error::Unstable(format!(
            "largest companion spectral radius on the grid is {radius}, no margin delta < 1 exists"
        )));
    }
    // a zero path still needs a margin inside (0, 1)
    Ok(radius.max(f64::MIN_POSITIVE))
}

/// Innovation distribution, always normalized to zero mean and unit variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InnovationSpec {
    #[default]
    Gaussian,
    /// Student-t with `nu > 2` degrees of freedom, rescaled by `sqrt((nu-2)/nu)`.
    StudentT { nu: f64 },
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
}

impl InnovationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::StudentT { nu } if !(nu > 2.0) => Err(domain(format!(
                "student-t degrees of freedom nu = {nu} must exceed 2 for unit variance"
            ))),
            _ => Ok(()),
        }
    }

    fn sampler(&self) -> Result<InnovationSampler> {
        self.validate()?;
        Ok(match *self {
            Self::Gaussian => InnovationSampler::Gaussian,
            Self::StudentT { nu } => InnovationSampler::StudentT {
                dist: StudentT::new(nu).map_err(|e| domain(e.to_string()))?,
                scale: ((nu - 2.0) / nu).sqrt(),
            },
            Self::Uniform => InnovationSampler::Uniform,
        })
    }
}

#[derive(Debug, Clone)]
enum InnovationSampler {
    Gaussian,
    StudentT { dist: StudentT<f64>, scale: f64 },
    Uniform,
}

impl InnovationSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            Self::StudentT { dist, scale } => scale * dist.sample(rng),
            Self::Uniform => {
                let half_width = 3f64.sqrt();
                rng.random_range(-half_width..half_width)
            }
        }
    }
}

/// One simulated path `X_1..X_T` with the volatility trace `sigma(t/T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvarRealization {
    pub horizon: usize,
    pub x: Vec<f64>,
    pub sigma_trace: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
}

/// One step of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvarSample {
    pub t: usize,
    pub x: f64,
    pub sigma: f64,
}

/// Streaming TVAR simulator. Memory use is `O(d)` regardless of the horizon.
#[derive(Debug, Clone)]
pub struct TvarSimulator<'a> {
    params: &'a TvarParams,
    horizon: usize,
    sampler: InnovationSampler,
    rng: ChaCha8Rng,
    /// Last `d` values, most recent first.
    history: Vec<f64>,
    theta: Vec<f64>,
    t: usize,
}

impl<'a> TvarSimulator<'a> {
    /// Validates the sampled path, then runs the frozen-parameter burn-in.
    pub fn new(
        params: &'a TvarParams,
        horizon: usize,
        innovations: InnovationSpec,
        seed: u64,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(domain("horizon T must be at least 1"));
        }
        params.check_sampled(horizon)?;
        let d = params.order();
        let mut sim = Self {
            params,
            horizon,
            sampler: innovations.sampler()?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: vec![0.0; d],
            theta: vec![0.0; d],
            t: 0,
        };
        params.theta_at(0.0, &mut sim.theta);
        let sigma0 = params.sigma_at(0.0);
        for _ in 0..params.burn_in() {
            sim.advance(sigma0);
        }
        Ok(sim)
    }

    fn advance(&mut self, sigma: f64) -> f64 {
        let ar: f64 = self
            .theta
            .iter()
            .zip(&self.history)
            .map(|(a, x)| a * x)
            .sum();
        let x = ar + sigma * self.sampler.draw(&mut self.rng);
        self.history.rotate_right(1);
        self.history[0] = x;
        x
    }
}

impl Iterator for TvarSimulator<'_> {
    type Item = TvarSample;

    fn next(&mut self) -> Option<TvarSample> {
        if self.t >= self.horizon {
            return None;
        }
        self.t += 1;
        let horizon = self.horizon as f64;
        self.params
            .theta_at((self.t - 1) as f64 / horizon, &mut self.theta);
        let sigma = self.params.sigma_at(self.t as f64 / horizon);
        let x = self.advance(sigma);
        Some(TvarSample {
            t: self.t,
            x,
            sigma,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.horizon - self.t;
        (left, Some(left))
    }
}

impl ExactSizeIterator for TvarSimulator<'_> {}

/// Simulates `X_1..X_T`. A pure function of its arguments.
pub fn simulate_tvar(
    params: &TvarParams,
    horizon: usize,
    innovations: InnovationSpec,
    seed: u64,
) -> Result<TvarRealization> {
    let sim = TvarSimulator::new(params, horizon, innovations, seed)?;
    let (x, sigma_trace) = sim.map(|s| (s.x, s.sigma)).unzip();
    Ok(TvarRealization {
        horizon,
        x,
        sigma_trace,
        seed,
        burn_in: params.burn_in(),
    })
}

/// Coefficients `a_{t,T}(0..=j_max)` of the causal representation
/// `X_t = sum_j a_{t,T}(j) sigma((t-j)/T) xi_{t-j}`.
///
/// `a_{t,T}(j)` is the response at time `t` to a unit impulse injected at
/// `t - j`; it is obtained by propagating a row vector through the companion
/// matrices of `theta((r-1)/T)` for `r = t, t-1, ..., t-j+1`. Times `t <= 0`
/// are allowed and fall in the constant-continuation region.
pub fn impulse_coefficients(
    params: &TvarParams,
    horizon: usize,
    t: i64,
    j_max: usize,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(domain("horizon T must be at least 1"));
    }
    if t > horizon as i64 {
        return Err(domain(format!(
            "time index t = {t} exceeds horizon T = {horizon}"
        )));
    }
    let d = params.order();
    let mut row = vec![0.0; d];
    row[0] = 1.0;
    let mut theta = vec![0.0; d];
    let mut coeffs = Vec::with_capacity(j_max + 1);
    coeffs.push(1.0);
    for k in 1..=j_max {
        let r = t - k as i64 + 1;
        params.theta_at((r - 1) as f64 / horizon as f64, &mut theta);
        let lead = row[0];
        for i in 0..d - 1 {
            row[i] = lead * theta[i] + row[i + 1];
        }
        row[d - 1] = lead * theta[d - 1];
        coeffs.push(row[0]);
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn levinson_durbin_examples() {
        assert_close(&levinson_durbin(&[0.5]).unwrap(), &[0.5], 0.0);
        assert_close(&levinson_durbin(&[0.5, 0.2]).unwrap(), &[0.4, 0.2], 1e-15);
        assert_close(&levinson_durbin(&[0.0; 3]).unwrap(), &[0.0; 3], 0.0);
    }

    #[test]
    fn levinson_durbin_rejects_unit_pacf() {
        assert!(matches!(
            levinson_durbin(&[0.3, 1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(levinson_durbin(&[-1.2]), Err(Error::Domain(_))));
        assert!(matches!(
            levinson_durbin(&[f64::NAN]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stability_examples() {
        assert!(check_stability(&[0.5], 0.5));
        assert!(!check_stability(&[1.1], 0.99));
        assert!(!check_stability(&[f64::INFINITY, 0.0], 0.99));
        // (1 - 0.5 z)^2: double root at z = 2
        assert!(check_stability(&[1.0, -0.25], 0.5 + 1e-6));
        assert!(!check_stability(&[1.0, -0.25], 0.45));
    }

    #[test]
    fn zero_margin_gives_zero_paths() {
        let path = sample_pacf_paths(3, 16, 0.0, 2, 7).unwrap();
        assert!(path.values().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn pacf_sampling_is_seeded() {
        let a = sample_pacf_paths(3, 64, 0.9, 3, 42).unwrap();
        let b = sample_pacf_paths(3, 64, 0.9, 3, 42).unwrap();
        let c = sample_pacf_paths(3, 64, 0.9, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.values().iter().flatten().all(|v| v.abs() < 0.9));
    }

    #[test]
    fn pacf_sampling_rejects_bad_arguments() {
        assert!(sample_pacf_paths(0, 8, 0.5, 1, 0).is_err());
        assert!(sample_pacf_paths(2, 1, 0.5, 1, 0).is_err());
        assert!(sample_pacf_paths(2, 8, 1.0, 1, 0).is_err());
        assert!(sample_pacf_paths(2, 8, 0.5, 0, 0).is_err());
    }

    #[test]
    fn params_reject_unstable_and_bad_volatility() {
        let err = TvarParams::constant(vec![1.1], 1.0, 0.99).unwrap_err();
        assert!(matches!(err, Error::Unstable(_)));
        let err = TvarParams::new(
            vec![0.0, 1.0],
            vec![vec![0.1], vec![0.1]],
            vec![1.0, 0.2],
            0.5,
            0.5,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn interpolation_and_extension() {
        let params = TvarParams::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0], vec![0.4], vec![0.2]],
            vec![1.0, 2.0, 1.0],
            0.5,
            0.5,
            2.0,
        )
        .unwrap();
        let mut th = [0.0];
        params.theta_at(-3.0, &mut th);
        assert_eq!(th[0], 0.0);
        params.theta_at(0.25, &mut th);
        assert!((th[0] - 0.2).abs() < 1e-15);
        params.theta_at(0.75, &mut th);
        assert!((th[0] - 0.3).abs() < 1e-15);
        params.theta_at(1.0, &mut th);
        assert!((th[0] - 0.2).abs() < 1e-15);
        assert!((params.sigma_at(0.25) - 1.5).abs() < 1e-15);
        assert_eq!(params.sigma_at(-1.0), 1.0);
    }

    #[test]
    fn burn_in_meets_tolerance() {
        let params = TvarParams::constant(vec![0.5], 1.0, 0.6).unwrap();
        let b = params.burn_in() as i32;
        assert!(0.8f64.powi(b) < BURN_IN_TOLERANCE);
        assert!(0.8f64.powi(b - 1) >= BURN_IN_TOLERANCE);
    }

    #[test]
    fn noiseless_process_is_zero() {
        let params = TvarParams::constant(vec![0.5, -0.2], 0.0, 0.9).unwrap();
        let real = simulate_tvar(&params, 50, InnovationSpec::Gaussian, 3).unwrap();
        assert!(real.x.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn simulation_replays_bit_identically() {
        let params = TvarParams::constant(vec![0.3, 0.1], 1.0, 0.9).unwrap();
        let a = simulate_tvar(&params, 200, InnovationSpec::StudentT { nu: 5.0 }, 11).unwrap();
        let b = simulate_tvar(&params, 200, InnovationSpec::StudentT { nu: 5.0 }, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x.len(), 200);
        assert_eq!(a.sigma_trace.len(), 200);
    }

    #[test]
    fn impulse_examples() {
        let params = TvarParams::constant(vec![0.5], 1.0, 0.6).unwrap();
        let a = impulse_coefficients(&params, 100, 50, 10).unwrap();
        for (j, c) in a.iter().enumerate() {
            assert!((c - 0.5f64.powi(j as i32)).abs() < 1e-15);
        }
        let zero = TvarParams::constant(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let a = impulse_coefficients(&zero, 100, 1, 5).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(impulse_coefficients(&zero, 100, 101, 5).is_err());
    }

    #[test]
    fn impulse_matches_direct_recursion() {
        // time-varying AR(2): inject a unit shock at s = t - j and run the
        // homogeneous recursion forward
        let path = sample_pacf_paths(2, 32, 0.8, 2, 5).unwrap();
        let params = TvarParams::from_pacf(&path, 1.0, None).unwrap();
        let horizon = 64usize;
        let t = 40i64;
        let a = impulse_coefficients(&params, horizon, t, 30).unwrap();
        for j in 0..=30i64 {
            let s = t - j;
            let mut y = std::collections::HashMap::new();
            y.insert(s, 1.0);
            let mut th = [0.0; 2];
            for r in s + 1..=t {
                params.theta_at((r - 1) as f64 / horizon as f64, &mut th);
                let v = th[0] * y.get(&(r - 1)).copied().unwrap_or(0.0)
                    + th[1] * y.get(&(r - 2)).copied().unwrap_or(0.0);
                y.insert(r, v);
            }
            assert!((a[j as usize] - y[&t]).abs() < 1e-12);
        }
    }
}
