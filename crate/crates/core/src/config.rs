//! Model variants, hyperparameters and run settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{AgeMode, Covariate, CovariateSpec};
use crate::error::{Error, Result};

/// The six model specifications compared in the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::M1,
        ModelVariant::M2,
        ModelVariant::M3,
        ModelVariant::M4,
        ModelVariant::M5,
        ModelVariant::M6,
    ];

    pub fn df(self) -> usize {
        match self {
            ModelVariant::M4 => 120,
            _ => 80,
        }
    }

    pub fn seasonal_kind(self) -> SeasonalKind {
        match self {
            ModelVariant::M3 => SeasonalKind::Ar,
            _ => SeasonalKind::Garch,
        }
    }

    pub fn covariates(self) -> CovariateSpec {
        use Covariate::*;
        let (columns, age_mode) = match self {
            ModelVariant::M1 | ModelVariant::M3 | ModelVariant::M4 => {
                (vec![Sex, Age, Environment], AgeMode::TimeDependent)
            }
            ModelVariant::M2 => (vec![Sex, Age, Environment], AgeMode::TimeConstant),
            ModelVariant::M5 => (vec![Sex, Age, Environment, Doping], AgeMode::TimeDependent),
            ModelVariant::M6 => (vec![Sex, Age, Environment, Doping], AgeMode::TimeConstant),
        };
        CovariateSpec::new(columns, age_mode)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected M1..M6)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalKind {
    Garch,
    Ar,
}

/// Which full conditional is used for the regression prior precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaBetaForm {
    /// Conjugate update driven by `||β − β0||²`.
    Conjugate,
    /// Update driven by the squared data residuals.
    Residual,
}

/// Prior hyperparameters. Defaults are the values used for every model in the study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Gamma shape / rate of the factor residual precisions σ_j^{-2}.
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Degrees of freedom of the local shrinkage φ.
    pub nu_phi: f64,
    /// Gamma shape / rate of the first global shrinkage increment.
    pub a_1: f64,
    pub b_1: f64,
    /// Gamma shape / rate of the remaining global shrinkage increments.
    pub a_l: f64,
    pub b_l: f64,
    /// Normal prior on the seasonal grand mean m.
    pub m_mean: f64,
    pub m_var: f64,
    /// Truncated normal prior on (α0, α1).
    pub alpha_mean: [f64; 2],
    pub alpha_cov: [[f64; 2]; 2],
    /// Truncated normal prior on ϖ.
    pub varpi_mean: f64,
    pub varpi_var: f64,
    /// Regression prior: σ_β^{-2} ~ Ga(ν_β/2, ν_β s_β²/2).
    pub nu_beta: f64,
    pub sigma_beta: f64,
    pub beta_0: Option<Vec<f64>>,
    /// Mean and spread of the prior on the error precision ψ^{-2}.
    pub mu_psi: f64,
    pub sigma_psi: f64,
    /// AR seasonal variant: ρ_i ~ N(rho_mean, rho_var), σ_μ² ~ IG(shape, scale).
    pub rho_mean: f64,
    pub rho_var: f64,
    pub sigma_mu_shape: f64,
    pub sigma_mu_scale: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a_sigma: 1.0,
            b_sigma: 0.3,
            nu_phi: 9.0,
            a_1: 2.1,
            b_1: 1.0,
            a_l: 2.1,
            b_l: 1.0,
            m_mean: -0.2,
            m_var: 0.0001,
            alpha_mean: [0.0, 0.0],
            alpha_cov: [[1.0, 0.0], [0.0, 1.0]],
            varpi_mean: 0.0,
            varpi_var: 1.0,
            nu_beta: 0.5,
            sigma_beta: 0.5,
            beta_0: None,
            mu_psi: 1.0,
            sigma_psi: 1.0,
            rho_mean: 0.0,
            rho_var: 1.0,
            sigma_mu_shape: 2.0,
            sigma_mu_scale: 0.1,
        }
    }
}

impl Hyperparameters {
    /// Gamma shape of the ψ^{-2} prior: μ_ψ² / σ_ψ².
    pub fn psi_shape(&self) -> f64 {
        self.mu_psi * self.mu_psi / (self.sigma_psi * self.sigma_psi)
    }

    /// Gamma rate of the ψ^{-2} prior: μ_ψ / σ_ψ².
    pub fn psi_rate(&self) -> f64 {
        self.mu_psi / (self.sigma_psi * self.sigma_psi)
    }

    /// ν_ψ = 2·shape, so the prior reads Ga(ν_ψ/2, ν_ψ σ²/2).
    pub fn nu_psi(&self) -> f64 {
        2.0 * self.psi_shape()
    }

    pub fn beta_0(&self, r: usize) -> Vec<f64> {
        self.beta_0.clone().unwrap_or_else(|| vec![0.0; r])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("nu_phi", self.nu_phi),
            ("a_1", self.a_1),
            ("b_1", self.b_1),
            ("a_l", self.a_l),
            ("b_l", self.b_l),
            ("m_var", self.m_var),
            ("varpi_var", self.varpi_var),
            ("nu_beta", self.nu_beta),
            ("sigma_beta", self.sigma_beta),
            ("mu_psi", self.mu_psi),
            ("sigma_psi", self.sigma_psi),
            ("rho_var", self.rho_var),
            ("sigma_mu_shape", self.sigma_mu_shape),
            ("sigma_mu_scale", self.sigma_mu_scale),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        let c = self.alpha_cov;
        if !(c[0][0] > 0.0 && c[0][0] * c[1][1] - c[0][1] * c[1][0] > 0.0) {
            return Err(Error::Config("alpha_cov must be positive definite".into()));
        }
        Ok(())
    }
}

/// Adaptive choice of the number of factor columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationSettings {
    pub enabled: bool,
    pub initial_k: usize,
    /// Adaptation happens with probability exp(−(c0 + c1·g)).
    pub c0: f64,
    pub c1: f64,
    /// A column is redundant when every loading is below this in absolute value.
    pub epsilon: f64,
    /// Upper bound on k; `None` means the number of basis functions.
    pub k_max: Option<usize>,
}

impl Default for TruncationSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            initial_k: 10,
            c0: 1.0,
            c1: 5e-4,
            epsilon: 1e-4,
            k_max: None,
        }
    }
}

/// Adaptive scaling within adaptive Metropolis for the GARCH coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AswamSettings {
    pub initial_variance: f64,
    /// Robbins–Monro weights w_g = g^{-decay}.
    pub decay: f64,
    pub target_acceptance: f64,
    /// Stop adapting once burn-in ends.
    pub freeze_after_burn_in: bool,
}

impl Default for AswamSettings {
    fn default() -> Self {
        Self {
            initial_variance: 0.01,
            decay: 0.7,
            target_acceptance: 0.234,
            freeze_after_burn_in: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub iterations: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 0.6,
            thin: 5,
            seed: 1,
        }
    }
}

impl RunSettings {
    /// Number of burn-in sweeps g0.
    pub fn burn_in_iterations(&self) -> usize {
        ((self.burn_in * self.iterations as f64).round() as usize).min(self.iterations)
    }

    /// Whether sweep `g` (1-based) is retained: g = g0 + g_s, g0 + 2g_s, …, ≤ G.
    pub fn is_retained(&self, g: usize) -> bool {
        let g0 = self.burn_in_iterations();
        g > g0 && (g - g0).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in_iterations()) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config(format!("burn_in must lie in [0, 1), got {}", self.burn_in)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `None` for ad-hoc specifications (synthetic studies, tests).
    pub variant: Option<ModelVariant>,
    pub df: usize,
    pub seasonal: SeasonalKind,
    pub covariates: CovariateSpec,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub truncation: TruncationSettings,
    #[serde(default)]
    pub aswam: AswamSettings,
    #[serde(default = "default_sigma_beta_form")]
    pub sigma_beta_form: SigmaBetaForm,
    /// Metropolis correction for the dependence of later conditional variances
    /// on μ and m. Without it the μ and m steps draw from the fixed-h conditionals.
    #[serde(default = "default_true")]
    pub exact_garch_conditionals: bool,
}

fn default_sigma_beta_form() -> SigmaBetaForm {
    SigmaBetaForm::Conjugate
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn for_variant(variant: ModelVariant) -> Self {
        Self {
            variant: Some(variant),
            df: variant.df(),
            seasonal: variant.seasonal_kind(),
            covariates: variant.covariates(),
            hyper: Hyperparameters::default(),
            run: RunSettings::default(),
            truncation: TruncationSettings::default(),
            aswam: AswamSettings::default(),
            sigma_beta_form: SigmaBetaForm::Conjugate,
            exact_garch_conditionals: true,
        }
    }

    /// An unnamed specification with the given basis size.
    pub fn custom(df: usize, seasonal: SeasonalKind, covariates: CovariateSpec) -> Self {
        Self {
            variant: None,
            df,
            seasonal,
            covariates,
            ..Self::for_variant(ModelVariant::M1)
        }
    }

    pub fn k_max(&self) -> usize {
        self.truncation.k_max.unwrap_or(self.df).min(self.df).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.variant {
            if v.df() != self.df || v.seasonal_kind() != self.seasonal || v.covariates() != self.covariates {
                return Err(Error::Config(format!(
                    "settings do not match model {v}: expected {} df, {:?} seasonal, covariates {:?}",
                    v.df(),
                    v.seasonal_kind(),
                    v.covariates()
                )));
            }
        }
        if self.df < 4 {
            return Err(Error::Config(format!("cubic basis needs df >= 4, got {}", self.df)));
        }
        if self.truncation.initial_k == 0 {
            return Err(Error::Config("initial_k must be at least 1".into()));
        }
        self.hyper.validate()?;
        self.run.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_counts() {
        let mut run = RunSettings {
            iterations: 10,
            burn_in: 0.6,
            thin: 1,
            seed: 0,
        };
        assert_eq!(run.retained_count(), 4);
        assert_eq!((1..=10).filter(|&g| run.is_retained(g)).count(), 4);
        run = RunSettings::default();
        assert_eq!(run.retained_count(), 1600);
        assert_eq!((1..=run.iterations).filter(|&g| run.is_retained(g)).count(), 1600);
        run.iterations = 200;
        assert_eq!(run.retained_count(), 16);
    }

    #[test]
    fn variants_follow_the_model_table() {
        assert_eq!(ModelVariant::M1.covariates().len(), 3);
        assert_eq!(ModelVariant::M5.covariates().len(), 4);
        assert_eq!(ModelVariant::M3.seasonal_kind(), SeasonalKind::Ar);
        assert_eq!(ModelVariant::M4.df(), 120);
        assert_eq!(ModelVariant::M2.covariates().age_mode, AgeMode::TimeConstant);
        assert_eq!("m6".parse::<ModelVariant>().unwrap(), ModelVariant::M6);
        assert!("M7".parse::<ModelVariant>().is_err());
        for v in ModelVariant::ALL {
            ModelConfig::for_variant(v).validate().unwrap();
        }
    }

    #[test]
    fn inconsistent_variant_is_rejected() {
        let mut c = ModelConfig::for_variant(ModelVariant::M1);
        c.df = 120;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::for_variant(ModelVariant::M1);
        c.run.burn_in = 1.0;
        assert!(c.validate().is_err());
        c.run.burn_in = 0.5;
        c.run.thin = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn psi_prior_mapping() {
        let h = Hyperparameters::default();
        assert_eq!(h.psi_shape(), 1.0);
        assert_eq!(h.psi_rate(), 1.0);
        assert_eq!(h.nu_psi(), 2.0);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ModelConfig::for_variant(ModelVariant::M5);
        let text = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: Hyperparameters = serde_json::from_str(r#"{"nu_phi": 3.0}"#).unwrap();
        assert_eq!(partial.nu_phi, 3.0);
        assert_eq!(partial.a_sigma, 1.0);
    }
}
