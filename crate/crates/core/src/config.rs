//! Experiment configuration: one JSON file fully determines a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

use crate::aggregation::{eta_adaptive, eta_corollary, EtaCase, ModelConstants, Strategy};
use crate::error::{Error, Result};
use crate::evaluation::{a_star_bound, Experiment};
use crate::predictors::build_nlms_bank;
use crate::tvar::{max_spectral_radius, sample_pacf_paths, InnovationSpec, TvarParams};

/// Serde adapter for `f64` values that may be infinite, written as the
/// strings `"inf"` / `"-inf"` since JSON has no infinity literal.
pub mod extended_f64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                    "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Where the TVAR parameter paths come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSource {
    /// Random smooth PACF paths mapped through Levinson-Durbin, with a
    /// constant volatility.
    Synthesized {
        #[serde(default = "defaults::gamma")]
        gamma: f64,
        #[serde(default = "defaults::n_harmonics")]
        n_harmonics: usize,
        #[serde(default = "defaults::grid")]
        grid: usize,
        #[serde(default = "defaults::path_seed")]
        seed: u64,
        #[serde(default = "defaults::sigma")]
        sigma: f64,
    },
    /// CSV with columns `u, theta_1..theta_d, sigma`, relative to the config
    /// file's directory.
    File { path: PathBuf },
}

impl Default for PathSource {
    fn default() -> Self {
        PathSource::Synthesized {
            gamma: defaults::gamma(),
            n_harmonics: defaults::n_harmonics(),
            grid: defaults::grid(),
            seed: defaults::path_seed(),
            sigma: defaults::sigma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    #[serde(default = "defaults::beta_0", with = "extended_f64")]
    pub beta_0: f64,
    #[serde(default = "defaults::c_mu")]
    pub c_mu: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::clip")]
    pub clip: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            beta_0: defaults::beta_0(),
            c_mu: defaults::c_mu(),
            eps: defaults::eps(),
            clip: defaults::clip(),
        }
    }
}

/// Model constants for the corollary learning rates. Missing entries are
/// filled from the experiment: `l_star` from the NLMS clip, `m_p` from the
/// innovation family, `a_star_bound` from the fitted impulse-coefficient
/// decay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConstants {
    pub a_star_bound: Option<f64>,
    pub a_star: Option<f64>,
    pub l_star: Option<f64>,
    pub m_p: Option<f64>,
    pub p: Option<f64>,
    pub zeta: Option<f64>,
    pub phi_zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaConfig {
    /// Rates depending only on `sigma_+` and `T`.
    Adaptive {
        #[serde(default)]
        loss_case: Option<EtaCase>,
        #[serde(default)]
        p: Option<f64>,
    },
    /// Rates balancing the oracle bound for known model constants.
    Corollary {
        #[serde(default)]
        loss_case: Option<EtaCase>,
        #[serde(default)]
        constants: PartialConstants,
    },
    /// The same fixed rate for every strategy.
    Manual { value: f64 },
}

impl Default for EtaConfig {
    fn default() -> Self {
        EtaConfig::Adaptive {
            loss_case: None,
            p: None,
        }
    }
}

/// Full description of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub innovations: InnovationSpec,
    #[serde(default)]
    pub paths: PathSource,
    /// Stability margin; defaults to the largest spectral radius on the grid.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub sigma_plus: Option<f64>,
    #[serde(default)]
    pub bank: BankConfig,
    #[serde(default = "defaults::strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub eta: EtaConfig,
    /// Evaluate the deterministic regret bounds on every replication.
    #[serde(default)]
    pub certify_regret: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

mod defaults {
    use crate::aggregation::Strategy;

    pub fn gamma() -> f64 {
        0.8
    }
    pub fn n_harmonics() -> usize {
        3
    }
    pub fn grid() -> usize {
        1024
    }
    pub fn path_seed() -> u64 {
        42
    }
    pub fn sigma() -> f64 {
        1.0
    }
    pub fn beta_0() -> f64 {
        0.5
    }
    pub fn c_mu() -> f64 {
        0.5
    }
    pub fn eps() -> f64 {
        1.0
    }
    pub fn clip() -> f64 {
        8.0
    }
    pub fn replications() -> usize {
        100
    }
    pub fn strategies() -> Vec<Strategy> {
        Strategy::ALL.to_vec()
    }
}

/// Command-line overrides layered on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub replications: Option<usize>,
    pub strategies: Option<Vec<Strategy>>,
    pub eta_mode: Option<EtaModeOverride>,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaModeOverride {
    Corollary,
    Adaptive,
    Manual,
}

impl std::str::FromStr for EtaModeOverride {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corollary" => Ok(Self::Corollary),
            "adaptive" => Ok(Self::Adaptive),
            "manual" => Ok(Self::Manual),
            other => Err(Error::Config(format!(
                "unknown eta mode {other:?}, expected corollary, adaptive or manual"
            ))),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; parse errors carry line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.base_seed = seed;
        }
        if let Some(t) = o.horizon {
            self.horizon = t;
        }
        if let Some(r) = o.replications {
            self.replications = r;
        }
        if let Some(s) = &o.strategies {
            self.strategies = s.clone();
        }
        match (o.eta_mode, o.eta) {
            (Some(EtaModeOverride::Manual), Some(value)) | (None, Some(value)) => {
                self.eta = EtaConfig::Manual { value }
            }
            (Some(EtaModeOverride::Manual), None) => {
                if !matches!(self.eta, EtaConfig::Manual { .. }) {
                    return Err(Error::Config("--eta-mode manual requires --eta".into()));
                }
            }
            (Some(EtaModeOverride::Adaptive), _) => {
                if !matches!(self.eta, EtaConfig::Adaptive { .. }) {
                    self.eta = EtaConfig::default();
                }
            }
            (Some(EtaModeOverride::Corollary), _) => {
                if !matches!(self.eta, EtaConfig::Corollary { .. }) {
                    self.eta = EtaConfig::Corollary {
                        loss_case: None,
                        constants: PartialConstants::default(),
                    };
                }
            }
            (None, None) => {}
        }
        self.validate()
    }

    /// Checks that do not need the parameter paths.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d == 0 {
            return fail("d: AR order must be at least 1".into());
        }
        if self.replications == 0 {
            return fail("replications: must be at least 1".into());
        }
        if self.horizon < 2 * self.d || self.horizon < 3 {
            return fail(format!(
                "T: horizon {} must be at least max(3, 2d) = {}",
                self.horizon,
                (2 * self.d).max(3)
            ));
        }
        if self.strategies.is_empty() {
            return fail("strategies: at least one strategy is required".into());
        }
        let mut seen = self.strategies.clone();
        seen.dedup();
        if seen.len() != self.strategies.len() || self.strategies.len() > 2 {
            return fail("strategies: duplicate entries".into());
        }
        self.innovations
            .validate()
            .map_err(|e| Error::Config(format!("innovations: {e}")))?;
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta < 1.0) {
                return fail(format!("delta: {delta} must lie in (0, 1)"));
            }
        }
        if let PathSource::Synthesized {
            gamma,
            n_harmonics,
            grid,
            sigma,
            ..
        } = &self.paths
        {
            if !(0.0..1.0).contains(gamma) {
                return fail(format!("paths.gamma: {gamma} must lie in [0, 1)"));
            }
            if *n_harmonics == 0 {
                return fail("paths.n_harmonics: must be at least 1".into());
            }
            if *grid < 2 {
                return fail("paths.grid: must be at least 2".into());
            }
            if !(*sigma >= 0.0 && sigma.is_finite()) {
                return fail(format!("paths.sigma: {sigma} must be finite and >= 0"));
            }
        }
        let b = &self.bank;
        if !(b.beta_0 > 0.0) {
            return fail(format!("bank.beta_0: {} must be positive", b.beta_0));
        }
        if !(b.c_mu > 0.0 && b.c_mu.is_finite()) {
            return fail(format!("bank.c_mu: {} must be positive", b.c_mu));
        }
        if !(b.eps > 0.0 && b.eps.is_finite()) {
            return fail(format!("bank.eps: {} must be positive", b.eps));
        }
        if !(b.clip > 0.0) {
            return fail(format!("bank.clip: {} must be positive", b.clip));
        }
        if let EtaConfig::Manual { value } = self.eta {
            if !(value > 0.0 && value.is_finite()) {
                return fail(format!("eta.value: {value} must be positive"));
            }
        }
        Ok(())
    }

    fn resolve_path(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Builds the TVAR parameters, rejecting unstable paths.
    pub fn build_params(&self) -> Result<TvarParams> {
        let params = match &self.paths {
            PathSource::Synthesized {
                gamma,
                n_harmonics,
                grid,
                seed,
                sigma,
            } => {
                let pacf = sample_pacf_paths(self.d, *grid, *gamma, *n_harmonics, *seed)?;
                let theta = pacf.to_theta()?;
                let sigma_plus = self
                    .sigma_plus
                    .unwrap_or(if *sigma > 0.0 { *sigma } else { 1.0 });
                let rho = self.rho.unwrap_or(sigma / sigma_plus);
                let delta = match self.delta {
                    Some(delta) => delta,
                    None => max_spectral_radius(&theta)?,
                };
                TvarParams::new(
                    pacf.grid(),
                    theta,
                    vec![*sigma; *grid],
                    delta,
                    rho,
                    sigma_plus,
                )?
            }
            PathSource::File { path } => {
                let full = self.resolve_path(path);
                let table = crate::io::read_params_csv(&full)?;
                if table.theta[0].len() != self.d {
                    return Err(Error::Config(format!(
                        "paths: {} has AR order {}, config says d = {}",
                        full.display(),
                        table.theta[0].len(),
                        self.d
                    )));
                }
                let max_sigma = table.sigma.iter().copied().fold(0.0, f64::max);
                let min_sigma = table.sigma.iter().copied().fold(f64::INFINITY, f64::min);
                let sigma_plus =
                    self.sigma_plus
                        .unwrap_or(if max_sigma > 0.0 { max_sigma } else { 1.0 });
                let rho = self.rho.unwrap_or((min_sigma / sigma_plus).clamp(0.0, 1.0));
                let delta = match self.delta {
                    Some(delta) => delta,
                    None => max_spectral_radius(&table.theta)?,
                };
                TvarParams::new(table.grid, table.theta, table.sigma, delta, rho, sigma_plus)?
            }
        };
        params.check_sampled(self.horizon)?;
        Ok(params)
    }

    /// Default oracle case for the loss-based weights given the innovations:
    /// heavy tails use the `p`-moment rate, light tails the exponential one.
    fn loss_case(&self, explicit: Option<EtaCase>) -> EtaCase {
        explicit.unwrap_or(match self.innovations {
            InnovationSpec::StudentT { .. } => EtaCase::Ii,
            InnovationSpec::Gaussian | InnovationSpec::Uniform => EtaCase::Iii,
        })
    }

    /// Moment order used for case ii: 4 when finite, else halfway to `nu`.
    fn moment_order(&self, explicit: Option<f64>) -> f64 {
        explicit.unwrap_or(match self.innovations {
            InnovationSpec::StudentT { nu } if nu <= 4.0 => 0.5 * (2.0 + nu),
            _ => 4.0,
        })
    }

    /// Resolves everything into a runnable experiment.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let params = self.build_params()?;
        let b = &self.bank;
        let (bank, _) = build_nlms_bank(self.horizon, b.beta_0, b.c_mu, self.d, b.eps, b.clip)?;
        let etas = self
            .strategies
            .iter()
            .map(|&s| Ok((s, self.eta_for(s, &params, bank.n)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Experiment {
            params,
            horizon: self.horizon,
            innovations: self.innovations,
            bank,
            strategies: etas,
            replications: self.replications,
            base_seed: self.base_seed,
            certify_regret: self.certify_regret,
        })
    }

    fn eta_for(&self, strategy: Strategy, params: &TvarParams, n: usize) -> Result<f64> {
        match &self.eta {
            EtaConfig::Manual { value } => Ok(*value),
            EtaConfig::Adaptive { loss_case, p } => {
                let case = match strategy {
                    Strategy::Gradient => EtaCase::I,
                    Strategy::Loss => self.loss_case(*loss_case),
                };
                let p = (case == EtaCase::Ii).then(|| self.moment_order(*p));
                eta_adaptive(case, params.sigma_plus(), self.horizon, p)
            }
            EtaConfig::Corollary {
                loss_case,
                constants,
            } => {
                let case = match strategy {
                    Strategy::Gradient => EtaCase::I,
                    Strategy::Loss => self.loss_case(*loss_case),
                };
                let p = if case == EtaCase::I {
                    4.0
                } else {
                    self.moment_order(constants.p)
                };
                let a_star_bound = match constants.a_star_bound {
                    Some(a) => a,
                    None => a_star_bound(params, self.horizon, params.default_delta1(), 200)?,
                };
                let full = ModelConstants {
                    a_star_bound,
                    a_star: constants.a_star.unwrap_or(a_star_bound),
                    l_star: constants.l_star.unwrap_or(self.bank.clip),
                    m_p: constants
                        .m_p
                        .unwrap_or_else(|| innovation_moment(self.innovations, p)),
                    p,
                    zeta: constants.zeta.unwrap_or(1.0),
                    phi_zeta: constants.phi_zeta.unwrap_or(2.0),
                    sigma_plus: params.sigma_plus(),
                };
                eta_corollary(case, &full, self.horizon, n)
                    .map_err(|e| Error::Config(format!("eta: {e}")))
            }
        }
    }
}

/// `E|xi|^p` for the normalized innovation families.
fn innovation_moment(spec: InnovationSpec, p: f64) -> f64 {
    match spec {
        InnovationSpec::Gaussian => {
            // E|N(0,1)|^p = 2^(p/2) Gamma((p+1)/2) / sqrt(pi)
            2f64.powf(p / 2.0) * gamma_fn((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
        }
        InnovationSpec::Uniform => {
            // uniform on [-sqrt 3, sqrt 3]
            3f64.powf(p / 2.0) / (p + 1.0)
        }
        InnovationSpec::StudentT { nu } => {
            // E|T_nu|^p = nu^(p/2) Gamma((p+1)/2) Gamma((nu-p)/2) / (sqrt(pi) Gamma(nu/2)),
            // then rescaled by ((nu-2)/nu)^(p/2)
            let raw = nu.powf(p / 2.0) * gamma_fn((p + 1.0) / 2.0) * gamma_fn((nu - p) / 2.0)
                / (std::f64::consts::PI.sqrt() * gamma_fn(nu / 2.0));
            raw * ((nu - 2.0) / nu).powf(p / 2.0)
        }
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}
