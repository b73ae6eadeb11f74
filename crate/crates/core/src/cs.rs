//! Asymptotic always-valid confidence-sequence radii and the quantities built
//! from them: the upper sequence for the pooled variance and the
//! inverse-probability-weighted scale used by the always-valid interval for
//! the treatment effect.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};
use crate::numerics::{minimize_1d, ToleranceSpec};
use crate::stats::{ExperimentState, ZEstimator};

/// Bracket for the tuning parameter, in natural log of ρ.
pub const LOG_RHO_BRACKET: (f64, f64) = (-8.0, 4.0);

/// Which boundary a tuning or monitoring step refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// One-sided radius.
    Phi,
    /// Two-sided radius.
    Psi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsConfig {
    pub rho: f64,
    pub alpha: f64,
    pub one_sided: bool,
    #[serde(default)]
    pub z_estimator: ZEstimator,
}

impl CsConfig {
    pub fn new(rho: f64, alpha: f64, one_sided: bool) -> Result<Self> {
        check_positive("rho", rho)?;
        check_probability("alpha", alpha)?;
        Ok(Self {
            rho,
            alpha,
            one_sided,
            z_estimator: ZEstimator::Pooled,
        })
    }

    pub fn boundary(&self) -> Boundary {
        if self.one_sided {
            Boundary::Phi
        } else {
            Boundary::Psi
        }
    }

    /// Radius at sample size `n` for this configuration.
    pub fn radius(&self, n: u64) -> Result<f64> {
        radius(self.boundary(), n, self.rho, self.alpha)
    }
}

fn check_args(n: u64, rho: f64, alpha: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    check_positive("rho", rho)?;
    check_probability("alpha", alpha)
}

/// Common factor `2(nρ²+1) / (n²ρ²)`.
fn scale_term(n: f64, rho: f64) -> (f64, f64) {
    let r2 = rho * rho;
    let a = n * r2 + 1.0;
    (2.0 * a / (n * n * r2), a.sqrt())
}

/// One-sided radius φₙ(ρ, α).
pub fn phi(n: u64, rho: f64, alpha: f64) -> Result<f64> {
    check_args(n, rho, alpha)?;
    Ok(phi_unchecked(n as f64, rho, alpha))
}

/// Two-sided radius ψₙ(ρ, α).
pub fn psi(n: u64, rho: f64, alpha: f64) -> Result<f64> {
    check_args(n, rho, alpha)?;
    Ok(psi_unchecked(n as f64, rho, alpha))
}

pub fn radius(boundary: Boundary, n: u64, rho: f64, alpha: f64) -> Result<f64> {
    match boundary {
        Boundary::Phi => phi(n, rho, alpha),
        Boundary::Psi => psi(n, rho, alpha),
    }
}

fn phi_unchecked(n: f64, rho: f64, alpha: f64) -> f64 {
    let (scale, root) = scale_term(n, rho);
    (scale * (1.0 + root / (2.0 * alpha)).ln()).sqrt()
}

fn psi_unchecked(n: f64, rho: f64, alpha: f64) -> f64 {
    let (scale, root) = scale_term(n, rho);
    (scale * (root / alpha).ln()).sqrt()
}

/// ρ minimizing the chosen radius at `n_target`, searched over log ρ.
pub fn optimize_rho(n_target: u64, alpha: f64, boundary: Boundary) -> Result<f64> {
    check_args(n_target, 1.0, alpha)?;
    let n = n_target as f64;
    let objective = |log_rho: f64| match boundary {
        Boundary::Phi => phi_unchecked(n, log_rho.exp(), alpha),
        Boundary::Psi => psi_unchecked(n, log_rho.exp(), alpha),
    };
    let tol = ToleranceSpec {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_iter: 200,
    };
    let log_rho = minimize_1d(objective, LOG_RHO_BRACKET.0, LOG_RHO_BRACKET.1, tol)?;
    Ok(log_rho.exp())
}

/// Upper confidence-sequence value for the pooled variance:
/// `σ̂²_P + sqrt(V̂(Z)) · φₙ(ρ, α_c)`.
pub fn upper_cs_sigma2p(state: &ExperimentState, cfg: &CsConfig) -> Result<f64> {
    if state.n0() < 2 || state.n1() < 2 {
        return Err(Error::UndefinedEstimate("both arms need at least two observations"));
    }
    let sp = state.pooled_variance()?;
    let vz = state.vhat_z_with(cfg.z_estimator)?;
    let radius = phi(state.n(), cfg.rho, cfg.alpha)?;
    Ok(sp + vz.sqrt() * radius)
}

/// The scale term of the always-valid treatment-effect interval together
/// with a flag telling whether a negative radicand had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleTerm {
    pub value: f64,
    pub clamped: bool,
}

pub fn v_n_checked(state: &ExperimentState) -> Result<ScaleTerm> {
    let tau = state.diff_in_means()?;
    let p = state.p_hat().expect("both arms nonempty");
    let (a1, a0) = (&state.arm1, &state.arm0);
    let radicand = (a1.variance() + a1.mean() * a1.mean()) / p
        + (a0.variance() + a0.mean() * a0.mean()) / (1.0 - p)
        - tau * tau;
    if radicand < 0.0 {
        Ok(ScaleTerm {
            value: 0.0,
            clamped: true,
        })
    } else {
        Ok(ScaleTerm {
            value: radicand.sqrt(),
            clamped: false,
        })
    }
}

pub fn v_n(state: &ExperimentState) -> Result<f64> {
    v_n_checked(state).map(|s| s.value)
}
