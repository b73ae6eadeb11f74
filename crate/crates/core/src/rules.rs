//! Stopping rules.
//!
//! A rule monitors one statistic of the running experiment and stops the first
//! time it falls to or below its threshold; ties stop. Every rule also stops
//! when the optional maximum sample size is reached.
//!
//! | kind                 | monitored statistic        | threshold            |
//! |----------------------|----------------------------|----------------------|
//! | `fwcid_naive`        | σ̂²_τ̂                       | d² / z²_{α/2}        |
//! | `fwcid_conservative` | σ̂²_P,ub · κ                | d² / z²_{α/2}        |
//! | `fwcid_always_valid` | vₙ · ψₙ(ρ, α)              | d                    |
//! | `fpd_naive`          | σ̂²_τ̂                       | τ_d² / (z_α + z_β)²  |
//! | `fpd_conservative`   | σ̂²_P,ub · κ                | τ_d² / (z_α + z_β)²  |
//! | `av_test`            | −(τ̂ − τ_H0)                | −vₙ · φₙ(ρ, α)       |
//! | `gst`                | −(τ̂ − τ_H0) / σ̂_τ̂ at looks | −z_k                 |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cs::{self, Boundary, CsConfig};
use crate::error::{check_positive, check_probability, Error, Result};
use crate::gst::{self, GridSettings, GstPlan, LookSchedule};
use crate::numerics::{find_root, norm_cdf, norm_quantile, ToleranceSpec};
use crate::stats::{Arm, ExperimentState, ZEstimator};

pub const DEFAULT_MIN_PER_ARM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    FwcidNaive,
    FwcidConservative,
    FwcidAlwaysValid,
    FpdNaive,
    FpdConservative,
    AvTest,
    Gst,
}

impl RuleKind {
    pub const ALL: [RuleKind; 7] = [
        RuleKind::FwcidNaive,
        RuleKind::FwcidConservative,
        RuleKind::FwcidAlwaysValid,
        RuleKind::FpdNaive,
        RuleKind::FpdConservative,
        RuleKind::AvTest,
        RuleKind::Gst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::FwcidNaive => "fwcid_naive",
            RuleKind::FwcidConservative => "fwcid_conservative",
            RuleKind::FwcidAlwaysValid => "fwcid_always_valid",
            RuleKind::FpdNaive => "fpd_naive",
            RuleKind::FpdConservative => "fpd_conservative",
            RuleKind::AvTest => "av_test",
            RuleKind::Gst => "gst",
        }
    }

    pub fn is_fwcid(self) -> bool {
        matches!(
            self,
            RuleKind::FwcidNaive | RuleKind::FwcidConservative | RuleKind::FwcidAlwaysValid
        )
    }

    pub fn is_fpd(self) -> bool {
        matches!(self, RuleKind::FpdNaive | RuleKind::FpdConservative)
    }

    /// Kinds whose grid variable is the alternative τ_H1 rather than d.
    pub fn is_test(self) -> bool {
        !self.is_fwcid()
    }

    pub fn uses_cs(self) -> bool {
        matches!(
            self,
            RuleKind::FwcidConservative
                | RuleKind::FwcidAlwaysValid
                | RuleKind::FpdConservative
                | RuleKind::AvTest
        )
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param("kind", format!("unknown rule kind `{s}`")))
    }
}

/// Configuration of one stopping rule.
///
/// Only the fields relevant to `kind` are consulted; [`StoppingRuleSpec::validate`]
/// checks that they are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRuleSpec {
    pub kind: RuleKind,
    /// Target half-width (FWCID kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    pub alpha: f64,
    /// Type-II error (FPD kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub tau_h0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_h1: Option<f64>,
    /// Level of the variance confidence sequence (conservative kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_c: Option<f64>,
    /// Confidence-sequence tuning parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
    #[serde(default = "default_min_per_arm")]
    pub min_per_arm: u64,
    /// Two-sided FPD: z_{α/2} in place of z_α and the corrected z'_β.
    #[serde(default)]
    pub two_sided: bool,
    #[serde(default)]
    pub looks: LookSchedule,
    #[serde(default)]
    pub z_estimator: ZEstimator,
}

fn default_min_per_arm() -> u64 {
    DEFAULT_MIN_PER_ARM
}

impl StoppingRuleSpec {
    fn base(kind: RuleKind, alpha: f64) -> Self {
        Self {
            kind,
            d: None,
            alpha,
            beta: None,
            tau_h0: 0.0,
            tau_h1: None,
            alpha_c: None,
            rho: None,
            n_max: None,
            min_per_arm: DEFAULT_MIN_PER_ARM,
            two_sided: false,
            looks: LookSchedule::default(),
            z_estimator: ZEstimator::Pooled,
        }
    }

    pub fn fwcid_naive(d: f64, alpha: f64) -> Self {
        Self {
            d: Some(d),
            ..Self::base(RuleKind::FwcidNaive, alpha)
        }
    }

    pub fn fwcid_conservative(d: f64, alpha: f64, alpha_c: f64, rho: f64) -> Self {
        Self {
            d: Some(d),
            alpha_c: Some(alpha_c),
            rho: Some(rho),
            ..Self::base(RuleKind::FwcidConservative, alpha)
        }
    }

    pub fn fwcid_always_valid(d: f64, alpha: f64, rho: f64) -> Self {
        Self {
            d: Some(d),
            rho: Some(rho),
            ..Self::base(RuleKind::FwcidAlwaysValid, alpha)
        }
    }

    pub fn fpd_naive(tau_h0: f64, tau_h1: f64, alpha: f64, beta: f64) -> Self {
        Self {
            tau_h0,
            tau_h1: Some(tau_h1),
            beta: Some(beta),
            ..Self::base(RuleKind::FpdNaive, alpha)
        }
    }

    pub fn fpd_conservative(tau_h0: f64, tau_h1: f64, alpha: f64, beta: f64, alpha_c: f64, rho: f64) -> Self {
        Self {
            tau_h0,
            tau_h1: Some(tau_h1),
            beta: Some(beta),
            alpha_c: Some(alpha_c),
            rho: Some(rho),
            ..Self::base(RuleKind::FpdConservative, alpha)
        }
    }

    pub fn av_test(tau_h0: f64, alpha: f64, rho: f64) -> Self {
        Self {
            tau_h0,
            rho: Some(rho),
            ..Self::base(RuleKind::AvTest, alpha)
        }
    }

    pub fn gst(tau_h0: f64, alpha: f64, n_max: u64) -> Self {
        Self {
            tau_h0,
            n_max: Some(n_max),
            ..Self::base(RuleKind::Gst, alpha)
        }
    }

    pub fn with_n_max(mut self, n_max: u64) -> Self {
        self.n_max = Some(n_max);
        self
    }

    pub fn with_min_per_arm(mut self, min_per_arm: u64) -> Self {
        self.min_per_arm = min_per_arm;
        self
    }

    pub fn with_tau_h1(mut self, tau_h1: f64) -> Self {
        self.tau_h1 = Some(tau_h1);
        self
    }

    /// `τ_H1 − τ_H0`.
    pub fn tau_d(&self) -> Option<f64> {
        self.tau_h1.map(|h1| h1 - self.tau_h0)
    }

    /// Whether the alternative lies below the null (mirrored tests).
    pub fn lower_alternative(&self) -> bool {
        self.tau_d().is_some_and(|t| t < 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("alpha", self.alpha)?;
        if self.min_per_arm < 2 {
            return Err(Error::param("min_per_arm", "must be at least 2"));
        }
        if let Some(n_max) = self.n_max {
            if n_max < 2 * self.min_per_arm {
                return Err(Error::param("n_max", "must allow min_per_arm units in both arms"));
            }
        }
        if self.kind.is_fwcid() {
            check_positive("d", self.d.ok_or_else(|| Error::param("d", "required for FWCID"))?)?;
        }
        if self.kind.is_fpd() {
            check_probability("beta", self.beta.ok_or_else(|| Error::param("beta", "required for FPD"))?)?;
            let tau_d = self
                .tau_d()
                .ok_or_else(|| Error::param("tau_h1", "required for FPD"))?;
            if !(tau_d != 0.0 && tau_d.is_finite()) {
                return Err(Error::param("tau_h1", "must differ from tau_h0"));
            }
        }
        if matches!(self.kind, RuleKind::FwcidConservative | RuleKind::FpdConservative) {
            check_probability(
                "alpha_c",
                self.alpha_c
                    .ok_or_else(|| Error::param("alpha_c", "required for conservative rules"))?,
            )?;
        }
        if let Some(rho) = self.rho {
            check_positive("rho", rho)?;
        }
        if self.kind == RuleKind::Gst && self.n_max.is_none() {
            return Err(Error::param("n_max", "required for gst"));
        }
        Ok(())
    }

    /// Confidence-sequence configuration for CS-based kinds, `None` otherwise.
    pub fn cs_config(&self) -> Result<Option<CsConfig>> {
        let (alpha, one_sided) = match self.kind {
            RuleKind::FwcidConservative | RuleKind::FpdConservative => {
                (self.alpha_c.ok_or_else(|| Error::param("alpha_c", "missing"))?, true)
            }
            RuleKind::FwcidAlwaysValid => (self.alpha, false),
            RuleKind::AvTest => (self.alpha, true),
            _ => return Ok(None),
        };
        let rho = self
            .rho
            .ok_or_else(|| Error::Config(format!("rule {} needs a confidence-sequence rho", self.kind)))?;
        let mut cfg = CsConfig::new(rho, alpha, one_sided)?;
        cfg.z_estimator = self.z_estimator;
        Ok(Some(cfg))
    }

    /// The boundary and level that ρ should be tuned for, if any.
    pub fn rho_target(&self) -> Option<(Boundary, f64)> {
        match self.kind {
            RuleKind::FwcidConservative | RuleKind::FpdConservative => {
                self.alpha_c.map(|a| (Boundary::Phi, a))
            }
            RuleKind::FwcidAlwaysValid => Some((Boundary::Psi, self.alpha)),
            RuleKind::AvTest => Some((Boundary::Phi, self.alpha)),
            _ => None,
        }
    }
}

/// Test-side quantiles `(z_a, z_b)` of an FPD: z_α and z_β one-sided,
/// z_{α/2} and z'_β two-sided.
fn fpd_quantiles(spec: &StoppingRuleSpec) -> Result<(f64, f64)> {
    let beta = spec.beta.ok_or_else(|| Error::param("beta", "required for FPD"))?;
    if spec.two_sided {
        Ok((
            norm_quantile(1.0 - spec.alpha / 2.0)?,
            two_sided_beta_correction(spec.alpha, beta)?,
        ))
    } else {
        Ok((norm_quantile(1.0 - spec.alpha)?, norm_quantile(1.0 - beta)?))
    }
}

/// Threshold on the estimator variance: `d²/z²_{α/2}` for FWCID kinds,
/// `τ_d²/(z_α+z_β)²` for FPD kinds.
pub fn threshold(spec: &StoppingRuleSpec) -> Result<f64> {
    if spec.kind.is_fwcid() {
        let d = spec.d.ok_or_else(|| Error::param("d", "required for FWCID"))?;
        let z = norm_quantile(1.0 - spec.alpha / 2.0)?;
        Ok(d * d / (z * z))
    } else if spec.kind.is_fpd() {
        let tau_d = spec.tau_d().ok_or_else(|| Error::param("tau_h1", "required for FPD"))?;
        let (za, zb) = fpd_quantiles(spec)?;
        Ok(tau_d * tau_d / ((za + zb) * (za + zb)))
    } else {
        Err(Error::param("kind", format!("{} has no variance threshold", spec.kind)))
    }
}

/// Solves `Φ(z) + Φ(−(2 z_{α/2} + z)) = 1 − β` for the two-sided power
/// quantile `z'_β`.
pub fn two_sided_beta_correction(alpha: f64, beta: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    check_probability("beta", beta)?;
    let z_half = norm_quantile(1.0 - alpha / 2.0)?;
    let z_beta = norm_quantile(1.0 - beta)?;
    let f = |z: f64| norm_cdf(z) + norm_cdf(-(2.0 * z_half + z)) - (1.0 - beta);
    // the left side is symmetric about −z_{α/2}, where it is smallest
    let tol = ToleranceSpec {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_iter: 200,
    };
    find_root(f, -z_half, z_beta, tol)
}

/// Which design a reference sample size is computed for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceDesign {
    Fwcid { d: f64 },
    Fpd { tau_d: f64, beta: f64 },
}

/// Fixed-sample size at unit pooled variance, rounded to the nearest integer:
/// `z²_{α/2}/(d² p(1−p))` or `(z_α+z_β)²/(τ_d² p(1−p))`.
pub fn reference_sample_size(design: ReferenceDesign, alpha: f64, p: f64) -> Result<u64> {
    Ok(reference_sample_size_exact(design, alpha, p)?.round() as u64)
}

pub fn reference_sample_size_exact(design: ReferenceDesign, alpha: f64, p: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    check_probability("p", p)?;
    let pq = p * (1.0 - p);
    match design {
        ReferenceDesign::Fwcid { d } => {
            check_positive("d", d)?;
            let z = norm_quantile(1.0 - alpha / 2.0)?;
            Ok(z * z / (d * d * pq))
        }
        ReferenceDesign::Fpd { tau_d, beta } => {
            check_positive("tau_d", tau_d.abs())?;
            check_probability("beta", beta)?;
            let s = norm_quantile(1.0 - alpha)? + norm_quantile(1.0 - beta)?;
            Ok(s * s / (tau_d * tau_d * pq))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdMet,
    NMaxReached,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::ThresholdMet => "threshold_met",
            StopReason::NMaxReached => "n_max_reached",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop(StopReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopReport {
    pub stopped: bool,
    pub n_stop: u64,
    pub reason: StopReason,
    pub tau_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `None` for FWCID kinds, which carry no test.
    pub rejected: Option<bool>,
    pub n_forecast: f64,
}

/// A validated rule with its quantiles, confidence-sequence configuration and
/// (for GST) boundary plan resolved.
#[derive(Debug, Clone)]
pub struct Rule {
    spec: StoppingRuleSpec,
    threshold: Option<f64>,
    cs: Option<CsConfig>,
    plan: Option<Arc<GstPlan>>,
    z_half: f64,
    z_alpha: f64,
}

impl Rule {
    pub fn new(spec: StoppingRuleSpec) -> Result<Self> {
        let plan = if spec.kind == RuleKind::Gst {
            let n_max = spec.n_max.ok_or_else(|| Error::param("n_max", "required for gst"))?;
            Some(Arc::new(gst::plan(spec.looks, n_max, spec.alpha, GridSettings::default())?))
        } else {
            None
        };
        Self::build(spec, plan)
    }

    /// Builds a GST rule around a precomputed plan so it can be shared.
    pub fn with_plan(spec: StoppingRuleSpec, plan: Arc<GstPlan>) -> Result<Self> {
        if Some(plan.n_max) != spec.n_max || plan.alpha != spec.alpha {
            return Err(Error::Config("gst plan does not match the rule's n_max/alpha".into()));
        }
        Self::build(spec, Some(plan))
    }

    fn build(spec: StoppingRuleSpec, plan: Option<Arc<GstPlan>>) -> Result<Self> {
        spec.validate()?;
        let threshold = if spec.kind.is_fwcid() || spec.kind.is_fpd() {
            Some(threshold(&spec)?)
        } else {
            None
        };
        let cs = spec.cs_config()?;
        Ok(Self {
            z_half: norm_quantile(1.0 - spec.alpha / 2.0)?,
            z_alpha: norm_quantile(1.0 - spec.alpha)?,
            threshold,
            cs,
            plan,
            spec,
        })
    }

    pub fn spec(&self) -> &StoppingRuleSpec {
        &self.spec
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn cs_config(&self) -> Option<&CsConfig> {
        self.cs.as_ref()
    }

    pub fn plan(&self) -> Option<&GstPlan> {
        self.plan.as_deref()
    }

    fn burn_in_done(&self, state: &ExperimentState) -> bool {
        state.n0() >= self.spec.min_per_arm && state.n1() >= self.spec.min_per_arm
    }

    fn cs(&self) -> Result<&CsConfig> {
        self.cs
            .as_ref()
            .ok_or_else(|| Error::Config(format!("rule {} has no confidence-sequence config", self.spec.kind)))
    }

    /// Signed distance of the estimate from the null toward the alternative.
    fn directed_effect(&self, state: &ExperimentState) -> Result<f64> {
        let diff = state.diff_in_means()? - self.spec.tau_h0;
        Ok(if self.spec.lower_alternative() { -diff } else { diff })
    }

    /// Monitored statistic and the level it is compared against; the rule
    /// fires when `statistic <= level`. `None` before burn-in or between
    /// GST looks.
    pub fn statistic(&self, state: &ExperimentState) -> Result<Option<(f64, f64)>> {
        if !self.burn_in_done(state) {
            return Ok(None);
        }
        let n = state.n();
        let pair = match self.spec.kind {
            RuleKind::FwcidNaive | RuleKind::FpdNaive => {
                (state.estimator_variance(), self.threshold.expect("variance rule"))
            }
            RuleKind::FwcidConservative | RuleKind::FpdConservative => {
                let ub = cs::upper_cs_sigma2p(state, self.cs()?)?;
                (ub * state.kappa(), self.threshold.expect("variance rule"))
            }
            RuleKind::FwcidAlwaysValid => {
                let cfg = self.cs()?;
                let half_width = cs::v_n(state)? * cs::psi(n, cfg.rho, cfg.alpha)?;
                (half_width, self.spec.d.expect("validated"))
            }
            RuleKind::AvTest => {
                let cfg = self.cs()?;
                let radius = cs::v_n(state)? * cs::phi(n, cfg.rho, cfg.alpha)?;
                (-self.directed_effect(state)?, -radius)
            }
            RuleKind::Gst => {
                let plan = self.plan.as_ref().expect("gst rule has a plan");
                let Some(z_k) = plan.boundary_if_look(n) else {
                    return Ok(None);
                };
                let z = self.directed_effect(state)? / state.estimator_variance().sqrt();
                // 0/0 (no spread, no effect) never rejects
                let z = if z.is_nan() { f64::NEG_INFINITY } else { z };
                (-z, -z_k)
            }
        };
        Ok(Some(pair))
    }

    pub fn evaluate(&self, state: &ExperimentState) -> Result<Decision> {
        if let Some((stat, level)) = self.statistic(state)? {
            if stat <= level {
                return Ok(Decision::Stop(StopReason::ThresholdMet));
            }
        }
        if self.spec.n_max.is_some_and(|n_max| state.n() >= n_max) {
            return Ok(Decision::Stop(StopReason::NMaxReached));
        }
        Ok(Decision::Continue)
    }

    /// Forecast of the stopping sample size for variance-threshold rules:
    /// `σ̂²_P / (p̂(1−p̂) · threshold)`.
    pub fn forecast_n(&self, state: &ExperimentState) -> Result<f64> {
        let threshold = self.threshold.ok_or_else(|| {
            Error::param("kind", format!("{} has no sample-size forecast", self.spec.kind))
        })?;
        if !self.burn_in_done(state) {
            return Err(Error::UndefinedEstimate("burn-in not complete"));
        }
        let p = state.p_hat().expect("nonempty");
        Ok(state.pooled_variance()? / (p * (1.0 - p) * threshold))
    }

    /// Standard error behind the reported interval and test: the
    /// confidence-sequence bound `sqrt(σ̂²_ub·κ)` for the conservative FPD,
    /// `σ̂_τ̂` otherwise.
    pub fn standard_error(&self, state: &ExperimentState) -> f64 {
        if self.spec.kind == RuleKind::FpdConservative {
            if let Some(ub) = self.cs.as_ref().and_then(|cfg| cs::upper_cs_sigma2p(state, cfg).ok()) {
                return (ub * state.kappa()).sqrt();
            }
        }
        state.estimator_variance().sqrt()
    }

    /// Final report at a stop.
    pub fn final_report(&self, state: &ExperimentState, reason: StopReason) -> StopReport {
        let tau_hat = state.diff_in_means().unwrap_or(f64::NAN);
        let se = self.standard_error(state);
        let fixed_sample = (tau_hat - self.z_half * se, tau_hat + self.z_half * se);
        let (ci_lo, ci_hi) = match (self.spec.kind.is_fwcid(), reason) {
            (true, StopReason::ThresholdMet) => {
                let d = self.spec.d.expect("validated");
                (tau_hat - d, tau_hat + d)
            }
            _ => fixed_sample,
        };
        let rejected = match self.spec.kind {
            k if k.is_fwcid() => None,
            RuleKind::FpdNaive | RuleKind::FpdConservative => Some(self.fpd_rejects(tau_hat, se)),
            _ => Some(reason == StopReason::ThresholdMet),
        };
        StopReport {
            stopped: true,
            n_stop: state.n(),
            reason,
            tau_hat,
            ci_lo,
            ci_hi,
            rejected,
            n_forecast: self.forecast_n(state).unwrap_or(f64::NAN),
        }
    }

    fn fpd_rejects(&self, tau_hat: f64, se: f64) -> bool {
        let h0 = self.spec.tau_h0;
        if self.spec.two_sided {
            return (tau_hat - h0).abs() > self.z_half * se;
        }
        if self.spec.lower_alternative() {
            tau_hat + self.z_alpha * se < h0
        } else {
            tau_hat - self.z_alpha * se > h0
        }
    }
}

/// A single-writer monitoring session: feed observations one at a time and
/// stop at the first crossing.
#[derive(Debug, Clone)]
pub struct Monitor {
    rule: Rule,
    state: ExperimentState,
    stopped: Option<StopReason>,
}

impl Monitor {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            state: ExperimentState::new(),
            stopped: None,
        }
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stopped
    }

    /// Adds one unit and re-evaluates the rule. Observations after a stop are rejected.
    pub fn observe(&mut self, arm: Arm, y: f64) -> Result<Decision> {
        if let Some(reason) = self.stopped {
            return Ok(Decision::Stop(reason));
        }
        self.state.observe(arm, y)?;
        let decision = self.rule.evaluate(&self.state)?;
        if let Decision::Stop(reason) = decision {
            self.stopped = Some(reason);
        }
        Ok(decision)
    }

    pub fn report(&self) -> Result<StopReport> {
        let reason = self.stopped.ok_or(Error::NotStopped)?;
        Ok(self.rule.final_report(&self.state, reason))
    }
}
