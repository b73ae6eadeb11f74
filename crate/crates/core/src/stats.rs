//! One-pass per-arm moment accumulation and the two-arm estimators built on it.
//!
//! All variances use the divide-by-count ("naive") convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment indicator of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

impl TryFrom<u8> for Arm {
    type Error = Error;

    fn try_from(w: u8) -> Result<Self> {
        match w {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            other => Err(Error::InvalidData(format!("arm indicator {other} is not 0 or 1"))),
        }
    }
}

/// Running count, mean and central moment sums up to order four for one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl ArmAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::InvalidData(format!("outcome {y} is not finite")));
        }
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = y - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.m2 = self.m2.max(0.0);
        self.m4 = self.m4.max(0.0);
        Ok(())
    }

    /// Combines the moments of two disjoint streams.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let delta2 = delta * delta;
        let m2 = self.m2 + other.m2 + delta2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + delta2 * delta2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * delta2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Self {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2: m2.max(0.0),
            m3,
            m4: m4.max(0.0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn m3(&self) -> f64 {
        self.m3
    }

    pub fn m4(&self) -> f64 {
        self.m4
    }

    /// Divide-by-count variance; zero for an empty arm.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    /// Divide-by-count fourth central moment; zero for an empty arm.
    pub fn fourth_moment(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m4 / self.count as f64
        }
    }
}

/// How the dispersion of the squared-residual sequence is centred in [`ExperimentState::vhat_z_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZEstimator {
    /// Unweighted squared residuals centred at the pooled variance.
    #[default]
    Pooled,
    /// Unweighted squared residuals centred at their own sample mean.
    SampleMean,
    /// Squared residuals reweighted by (1-p̂)/p̂ and p̂/(1-p̂); their mean is
    /// exactly the pooled variance.
    Weighted,
}

/// Sufficient statistics of a running two-arm experiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub arm0: ArmAccumulator,
    pub arm1: ArmAccumulator,
}

impl ExperimentState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, arm: Arm, y: f64) -> Result<()> {
        match arm {
            Arm::Control => self.arm0.push(y),
            Arm::Treated => self.arm1.push(y),
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            arm0: self.arm0.merge(&other.arm0),
            arm1: self.arm1.merge(&other.arm1),
        }
    }

    pub fn arm(&self, arm: Arm) -> &ArmAccumulator {
        match arm {
            Arm::Control => &self.arm0,
            Arm::Treated => &self.arm1,
        }
    }

    pub fn n(&self) -> u64 {
        self.arm0.count + self.arm1.count
    }

    pub fn n0(&self) -> u64 {
        self.arm0.count
    }

    pub fn n1(&self) -> u64 {
        self.arm1.count
    }

    /// Share treated; `None` before the first observation.
    pub fn p_hat(&self) -> Option<f64> {
        let n = self.n();
        (n > 0).then(|| self.arm1.count as f64 / n as f64)
    }

    /// `n / (n0 n1)`, infinite while either arm is empty.
    pub fn kappa(&self) -> f64 {
        if self.n0() == 0 || self.n1() == 0 {
            f64::INFINITY
        } else {
            self.n() as f64 / (self.n0() as f64 * self.n1() as f64)
        }
    }

    fn require_both_arms(&self) -> Result<()> {
        if self.n0() == 0 || self.n1() == 0 {
            Err(Error::UndefinedEstimate("both arms need at least one observation"))
        } else {
            Ok(())
        }
    }

    /// Difference in means, treated minus control.
    pub fn diff_in_means(&self) -> Result<f64> {
        self.require_both_arms()?;
        Ok(self.arm1.mean - self.arm0.mean)
    }

    /// `(n0/n) σ̂₁² + (n1/n) σ̂₀²`.
    pub fn pooled_variance(&self) -> Result<f64> {
        self.require_both_arms()?;
        let n = self.n() as f64;
        Ok(self.n0() as f64 / n * self.arm1.variance() + self.n1() as f64 / n * self.arm0.variance())
    }

    /// `σ̂₁²/n1 + σ̂₀²/n0`, or `+inf` while either arm has at most one unit.
    pub fn estimator_variance(&self) -> f64 {
        if self.n0() <= 1 || self.n1() <= 1 {
            return f64::INFINITY;
        }
        self.arm1.variance() / self.n1() as f64 + self.arm0.variance() / self.n0() as f64
    }

    /// Dispersion of the squared residuals around the pooled variance.
    pub fn vhat_z(&self) -> Result<f64> {
        self.vhat_z_with(ZEstimator::Pooled)
    }

    pub fn vhat_z_with(&self, estimator: ZEstimator) -> Result<f64> {
        self.require_both_arms()?;
        let p = self.p_hat().expect("nonempty");
        let q = 1.0 - p;
        let (s1, s0) = (self.arm1.variance(), self.arm0.variance());
        let (k1, k0) = (self.arm1.fourth_moment(), self.arm0.fourth_moment());
        let value = match estimator {
            ZEstimator::Pooled => {
                let sp = self.pooled_variance()?;
                p * k1 + q * k0 - sp * sp
            }
            ZEstimator::SampleMean => {
                let center = p * s1 + q * s0;
                p * k1 + q * k0 - center * center
            }
            ZEstimator::Weighted => {
                let sp = self.pooled_variance()?;
                q * q / p * k1 + p * p / q * k0 - sp * sp
            }
        };
        Ok(value.max(0.0))
    }
}
