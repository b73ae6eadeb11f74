//! Data-generating processes for the simulation study.
//!
//! Each arm's outcome is `scale_a · X + post_shift` with `X` drawn from a base
//! family. The common scale is chosen so that the pooled variance
//! `(1−p)·Var(Y(1)) + p·Var(Y(0))` equals one, which makes
//! `n · Var(τ̂) → 1/(p(1−p))` for every process.

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};
use crate::numerics::{find_root, ToleranceSpec};
use crate::stats::Arm;

/// Default scaled treatment effect of DGPs 3–8.
pub const DEFAULT_TARGET_TAU: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    Lognormal { logmean: f64, logsd: f64 },
    /// Shape/scale parameterization: mean `shape·scale`.
    Gamma { shape: f64, scale: f64 },
    /// Point mass; only usable without normalization.
    Constant { value: f64 },
}

impl Family {
    fn validate(&self) -> Result<()> {
        match *self {
            Family::Normal { mean, sd } => {
                finite("mean", mean)?;
                check_positive("sd", sd)
            }
            Family::Lognormal { logmean, logsd } => {
                finite("logmean", logmean)?;
                check_positive("logsd", logsd)
            }
            Family::Gamma { shape, scale } => {
                check_positive("shape", shape)?;
                check_positive("scale", scale)
            }
            Family::Constant { value } => finite("value", value),
        }
    }

    /// Unscaled mean and variance.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            Family::Normal { mean, sd } => (mean, sd * sd),
            Family::Lognormal { logmean, logsd } => {
                let s2 = logsd * logsd;
                ((logmean + s2 / 2.0).exp(), s2.exp_m1() * (2.0 * logmean + s2).exp())
            }
            Family::Gamma { shape, scale } => (shape * scale, shape * scale * scale),
            Family::Constant { value } => (value, 0.0),
        }
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} is not finite")))
    }
}

/// One arm's outcome distribution: `scale_a · X + post_shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub post_shift: f64,
    #[serde(default = "one")]
    pub scale_a: f64,
}

fn one() -> f64 {
    1.0
}

impl DistSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            post_shift: 0.0,
            scale_a: 1.0,
        }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Self::new(Family::Normal { mean, sd })
    }

    pub fn lognormal(logmean: f64, logsd: f64) -> Self {
        Self::new(Family::Lognormal { logmean, logsd })
    }

    pub fn gamma(shape: f64, scale: f64) -> Self {
        Self::new(Family::Gamma { shape, scale })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Family::Constant { value })
    }

    pub fn shifted(mut self, shift: f64) -> Self {
        self.post_shift = shift;
        self
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.scale_a = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        check_positive("scale_a", self.scale_a)?;
        finite("post_shift", self.post_shift)
    }

    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        let base = match self.family {
            Family::Normal { mean, sd } => Base::Normal(Normal::new(mean, sd).map_err(dist_err)?),
            Family::Lognormal { logmean, logsd } => {
                Base::Lognormal(LogNormal::new(logmean, logsd).map_err(dist_err)?)
            }
            Family::Gamma { shape, scale } => Base::Gamma(Gamma::new(shape, scale).map_err(dist_err)?),
            Family::Constant { value } => Base::Constant(value),
        };
        Ok(Sampler {
            base,
            scale: self.scale_a,
            shift: self.post_shift,
        })
    }
}

fn dist_err(e: impl std::fmt::Display) -> Error {
    Error::param("distribution", e.to_string())
}

/// Scaled-and-shifted mean and variance of an arm.
pub fn analytic_moments(dist: &DistSpec) -> Result<(f64, f64)> {
    dist.validate()?;
    let (m, v) = dist.family.moments();
    Ok((dist.scale_a * m + dist.post_shift, dist.scale_a * dist.scale_a * v))
}

/// Common scale `a = 1/sqrt((1−p)·V₁ + p·V₀)` from unscaled variances.
pub fn solve_normalization(control: &DistSpec, treated: &DistSpec, p: f64) -> Result<f64> {
    check_probability("p", p)?;
    control.validate()?;
    treated.validate()?;
    let (_, v0) = control.family.moments();
    let (_, v1) = treated.family.moments();
    let pooled = (1.0 - p) * v1 + p * v0;
    if !(pooled > 0.0) || !pooled.is_finite() {
        return Err(Error::param("variance", "pooled variance must be finite and positive"));
    }
    Ok(1.0 / pooled.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    #[default]
    Bernoulli,
    /// Treated, control, treated, ... starting with treated.
    Alternating,
}

/// A fully specified process: both arms already carry their scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: u32,
    pub control: DistSpec,
    pub treated: DistSpec,
    pub p: f64,
    pub assignment: Assignment,
    /// Scaled average treatment effect.
    pub tau: f64,
}

impl DgpSpec {
    /// Builds a process with the normalization applied to both arms.
    pub fn normalized(
        id: u32,
        control: DistSpec,
        treated: DistSpec,
        p: f64,
        assignment: Assignment,
    ) -> Result<Self> {
        let a = solve_normalization(&control, &treated, p)?;
        Self::with_scale(id, control.scaled(a), treated.scaled(a), p, assignment)
    }

    /// Builds a process from arms whose scale is already set.
    pub fn with_scale(
        id: u32,
        control: DistSpec,
        treated: DistSpec,
        p: f64,
        assignment: Assignment,
    ) -> Result<Self> {
        check_probability("p", p)?;
        let (m0, _) = analytic_moments(&control)?;
        let (m1, _) = analytic_moments(&treated)?;
        Ok(Self {
            id,
            control,
            treated,
            p,
            assignment,
            tau: m1 - m0,
        })
    }

    /// `(1−p)·Var(Y(1)) + p·Var(Y(0))` of the scaled arms.
    pub fn pooled_variance(&self) -> f64 {
        let (_, v0) = analytic_moments(&self.control).expect("validated");
        let (_, v1) = analytic_moments(&self.treated).expect("validated");
        (1.0 - self.p) * v1 + self.p * v0
    }

    /// The process with the treated arm moved so that the effect is `tau`.
    pub fn with_effect(&self, tau: f64) -> Self {
        let mut out = self.clone();
        out.treated.post_shift += tau - self.tau;
        out.tau = tau;
        out
    }

    pub fn sampler(&self) -> Result<UnitSampler> {
        Ok(UnitSampler {
            control: self.control.sampler()?,
            treated: self.treated.sampler()?,
            p: self.p,
            assignment: self.assignment,
            drawn: 0,
        })
    }
}

/// Parameter of the treated arm that is varied to hit a target effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectParam {
    NormalMean,
    LognormalLogmean,
    GammaShape,
    GammaScale,
}

impl EffectParam {
    fn apply(self, family: Family, c: f64) -> Result<Family> {
        match (self, family) {
            (EffectParam::NormalMean, Family::Normal { sd, .. }) => Ok(Family::Normal { mean: c, sd }),
            (EffectParam::LognormalLogmean, Family::Lognormal { logsd, .. }) => {
                Ok(Family::Lognormal { logmean: c, logsd })
            }
            (EffectParam::GammaShape, Family::Gamma { scale, .. }) => Ok(Family::Gamma { shape: c, scale }),
            (EffectParam::GammaScale, Family::Gamma { shape, .. }) => Ok(Family::Gamma { shape, scale: c }),
            _ => Err(Error::param("effect_param", format!("{self:?} does not apply to {family:?}"))),
        }
    }

    fn current(self, family: Family) -> f64 {
        match family {
            Family::Normal { mean, .. } => mean,
            Family::Lognormal { logmean, .. } => logmean,
            Family::Gamma { shape, scale } => {
                if self == EffectParam::GammaShape {
                    shape
                } else {
                    scale
                }
            }
            Family::Constant { value } => value,
        }
    }

    fn positive(self) -> bool {
        matches!(self, EffectParam::GammaShape | EffectParam::GammaScale)
    }
}

/// Scaled effect as a function of the treated-arm parameter, with the
/// normalization re-solved at each value.
fn scaled_effect(control: &DistSpec, treated: &DistSpec, param: EffectParam, p: f64, c: f64) -> Result<f64> {
    let treated = DistSpec {
        family: param.apply(treated.family, c)?,
        ..*treated
    };
    let a = solve_normalization(control, &treated, p)?;
    let (m0, _) = control.family.moments();
    let (m1, _) = treated.family.moments();
    Ok(a * (m1 - m0) + treated.post_shift - control.post_shift)
}

/// Value of the treated-arm parameter giving scaled effect `target_tau`.
///
/// The bracket is grown outward from the arm's current parameter value
/// until the effect crosses the target.
pub fn solve_effect_constant(
    control: &DistSpec,
    treated: &DistSpec,
    param: EffectParam,
    p: f64,
    target_tau: f64,
) -> Result<f64> {
    check_probability("p", p)?;
    let f = |c: f64| {
        scaled_effect(control, treated, param, p, c)
            .map(|t| t - target_tau)
            .unwrap_or(f64::NAN)
    };
    let x0 = param.current(treated.family);
    let f0 = f(x0);
    if f0 == 0.0 {
        return Ok(x0);
    }
    let mut h = 0.05;
    for _ in 0..60 {
        let candidates = [(x0, x0 + h), (x0 - h, x0)];
        for (lo, hi) in candidates {
            let lo = if param.positive() { lo.max(x0.min(hi) * 1e-9).max(f64::MIN_POSITIVE) } else { lo };
            let (flo, fhi) = (f(lo), f(hi));
            if flo.is_finite() && fhi.is_finite() && flo * fhi <= 0.0 {
                let tol = ToleranceSpec {
                    abs_tol: 1e-14,
                    rel_tol: 1e-14,
                    max_iter: 200,
                };
                return find_root(f, lo, hi, tol);
            }
        }
        h *= 2.0;
    }
    Err(Error::NoSignChange {
        lo: x0 - h,
        hi: x0 + h,
        f_lo: f(x0 - h),
        f_hi: f(x0 + h),
    })
}

/// The eight built-in processes with the given treatment share and
/// target effect for the heterogeneous-effect processes.
pub fn builtin(id: u32, p: f64, assignment: Assignment, target_tau: f64) -> Result<DgpSpec> {
    let norm = |control: DistSpec, treated: DistSpec| DgpSpec::normalized(id, control, treated, p, assignment);
    let solved = |control: DistSpec, treated: DistSpec, param: EffectParam| -> Result<DgpSpec> {
        let c = solve_effect_constant(&control, &treated, param, p, target_tau)?;
        let treated = DistSpec::new(param.apply(treated.family, c)?);
        norm(control, treated)
    };
    match id {
        1 => norm(DistSpec::normal(0.0, 1.0), DistSpec::normal(0.0, 1.0)),
        2 => norm(DistSpec::lognormal(0.0, 1.0), DistSpec::lognormal(0.0, 1.0)),
        3 => solved(DistSpec::normal(0.0, 1.0), DistSpec::normal(0.0, 1.0), EffectParam::NormalMean),
        4 => {
            let a = solve_normalization(&DistSpec::lognormal(0.0, 1.0), &DistSpec::lognormal(0.0, 1.0), p)?;
            DgpSpec::with_scale(
                id,
                DistSpec::lognormal(0.0, 1.0).scaled(a),
                DistSpec::lognormal(0.0, 1.0).scaled(a).shifted(target_tau),
                p,
                assignment,
            )
        }
        5 => solved(
            DistSpec::lognormal(0.0, 1.0),
            DistSpec::lognormal(0.0, 1.0),
            EffectParam::LognormalLogmean,
        ),
        6 => solved(
            DistSpec::gamma(1.0, 1.0),
            DistSpec::lognormal(0.0, 0.75),
            EffectParam::LognormalLogmean,
        ),
        7 => solved(DistSpec::gamma(1.0, 1.0), DistSpec::gamma(1.0, 1.0), EffectParam::GammaScale),
        8 => solved(DistSpec::gamma(1.0, 1.0), DistSpec::gamma(1.0, 1.0), EffectParam::GammaShape),
        other => Err(Error::param("dgp id", format!("{other} is not in 1..=8"))),
    }
}

/// Built-in process at `p = 0.5`, Bernoulli assignment and effect 0.2.
pub fn standard(id: u32) -> Result<DgpSpec> {
    builtin(id, 0.5, Assignment::Bernoulli, DEFAULT_TARGET_TAU)
}

#[derive(Debug, Clone, Copy)]
enum Base {
    Normal(Normal<f64>),
    Lognormal(LogNormal<f64>),
    Gamma(Gamma<f64>),
    Constant(f64),
}

/// Draws from one arm's scaled and shifted distribution.
#[derive(Debug, Clone, Copy)]
pub struct Sampler {
    base: Base,
    scale: f64,
    shift: f64,
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match &self.base {
            Base::Normal(d) => d.sample(rng),
            Base::Lognormal(d) => d.sample(rng),
            Base::Gamma(d) => d.sample(rng),
            Base::Constant(v) => *v,
        };
        self.scale * x + self.shift
    }
}

/// Draws `(arm, outcome)` units from a process.
#[derive(Debug, Clone)]
pub struct UnitSampler {
    control: Sampler,
    treated: Sampler,
    p: f64,
    assignment: Assignment,
    drawn: u64,
}

impl UnitSampler {
    pub fn sample_unit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Arm, f64) {
        let arm = match self.assignment {
            Assignment::Bernoulli => {
                if rng.random_bool(self.p) {
                    Arm::Treated
                } else {
                    Arm::Control
                }
            }
            Assignment::Alternating => {
                if self.drawn.is_multiple_of(2) {
                    Arm::Treated
                } else {
                    Arm::Control
                }
            }
        };
        self.drawn += 1;
        let y = match arm {
            Arm::Control => self.control.sample(rng),
            Arm::Treated => self.treated.sample(rng),
        };
        (arm, y)
    }
}
