//! Group-sequential efficacy boundaries for the quadratic alpha-spending
//! family `α(n/N_max)²`.
//!
//! Boundaries are found by recursive numerical integration of the
//! sub-density of the standardized statistic on the continuation region
//! (Armitage–McPherson–Rowe). Between looks the statistic evolves as a
//! Gaussian random walk in information time.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::numerics::{norm_pdf, norm_quantile, norm_sf};

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_GRID_HALFWIDTH: f64 = 8.0;
pub const DEFAULT_MAX_LOOKS: u64 = 50;
/// Largest `n_max` for which every-observation monitoring is accepted.
pub const EVERY_N_LIMIT: u64 = 2000;

/// Look schedule for group-sequential monitoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "looks")]
pub enum LookSchedule {
    /// `min(n_max, k)` looks at (rounded) equally spaced sample sizes.
    Equally(u64),
    /// A look after every observation.
    EveryN,
}

impl Default for LookSchedule {
    fn default() -> Self {
        LookSchedule::Equally(DEFAULT_MAX_LOOKS)
    }
}

impl LookSchedule {
    pub fn looks(&self, n_max: u64) -> Result<Vec<u64>> {
        if n_max == 0 {
            return Err(Error::param("n_max", "must be positive"));
        }
        match *self {
            LookSchedule::EveryN => {
                if n_max > EVERY_N_LIMIT {
                    return Err(Error::param(
                        "looks",
                        format!("every-n monitoring is limited to n_max <= {EVERY_N_LIMIT}"),
                    ));
                }
                Ok((1..=n_max).collect())
            }
            LookSchedule::Equally(k) => {
                if k == 0 {
                    return Err(Error::param("looks", "need at least one look"));
                }
                let k = k.min(n_max);
                let mut looks: Vec<u64> = (1..=k)
                    .map(|i| ((i as f64 * n_max as f64 / k as f64).round() as u64).max(1))
                    .collect();
                looks.dedup();
                Ok(looks)
            }
        }
    }
}

/// Discretization used by [`compute_boundaries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    pub grid_points: usize,
    pub grid_halfwidth: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            grid_halfwidth: DEFAULT_GRID_HALFWIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GstPlan {
    pub n_max: u64,
    pub looks: Vec<u64>,
    pub alpha: f64,
    pub boundaries: Vec<f64>,
    /// Cumulative null crossing probability after each look, as computed.
    pub cumulative_alpha: Vec<f64>,
    pub grid: GridSettings,
}

impl GstPlan {
    /// Boundary in force at sample size `n`: that of the first look at or after `n`.
    pub fn boundary_at(&self, n: u64) -> Result<f64> {
        if n > self.n_max {
            return Err(Error::param("n", format!("{n} exceeds n_max = {}", self.n_max)));
        }
        let k = self.looks.partition_point(|&look| look < n);
        Ok(self.boundaries[k])
    }

    /// Boundary if `n` is exactly a look, otherwise `None`.
    pub fn boundary_if_look(&self, n: u64) -> Option<f64> {
        self.looks.binary_search(&n).ok().map(|k| self.boundaries[k])
    }

    pub fn info_fraction(&self, k: usize) -> f64 {
        self.looks[k] as f64 / self.n_max as f64
    }

    /// Rows of `(look_n, info_fraction, cumulative_alpha, z_k)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("look_n,info_fraction,cumulative_alpha,z\n");
        for k in 0..self.looks.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.looks[k],
                self.info_fraction(k),
                self.cumulative_alpha[k],
                self.boundaries[k]
            ));
        }
        out
    }
}

/// Cumulative type-I error spent by sample size `n`.
pub fn spend(n: u64, n_max: u64, alpha: f64) -> Result<f64> {
    if n == 0 || n > n_max {
        return Err(Error::param("n", format!("{n} is outside 1..={n_max}")));
    }
    let t = n as f64 / n_max as f64;
    Ok(alpha * t * t)
}

/// Sub-density of the standardized statistic over the continuation region
/// `[lo, upper]`, sampled at Simpson nodes.
struct SubDensity {
    nodes: Vec<f64>,
    /// density value times Simpson weight
    weighted: Vec<f64>,
}

impl SubDensity {
    fn nodes(lo: f64, hi: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
        // odd number of nodes for composite Simpson
        let m = if points.is_multiple_of(2) { points + 1 } else { points };
        let h = (hi - lo) / (m - 1) as f64;
        let nodes = (0..m).map(|i| lo + i as f64 * h).collect();
        let weights = (0..m)
            .map(|i| {
                let w = if i == 0 || i == m - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        (nodes, weights)
    }

    /// Null probability of first crossing `z` at a look reached with
    /// shrink factor `r = sqrt(t_prev/t)` and kernel sd `s = sqrt(Δt/t)`.
    fn crossing(&self, z: f64, r: f64, s: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weighted)
            .map(|(&u, &w)| w * norm_sf((z - r * u) / s))
            .sum()
    }
}

/// Boundaries `z_k` such that the null probability of first crossing at
/// look `k` equals the spending increment at that look.
pub fn compute_boundaries(
    looks: &[u64],
    n_max: u64,
    alpha: f64,
    grid: GridSettings,
) -> Result<GstPlan> {
    check_probability("alpha", alpha)?;
    if looks.is_empty() {
        return Err(Error::param("looks", "empty look schedule"));
    }
    if looks.windows(2).any(|w| w[0] >= w[1]) || looks[0] == 0 {
        return Err(Error::param("looks", "looks must be positive and strictly increasing"));
    }
    if *looks.last().expect("nonempty") != n_max {
        return Err(Error::param("looks", "last look must equal n_max"));
    }
    if grid.grid_points < 3 || !(grid.grid_halfwidth > 0.0) {
        return Err(Error::param("grid", "need >= 3 points and a positive half-width"));
    }

    let lo = -grid.grid_halfwidth;
    let mut boundaries = Vec::with_capacity(looks.len());
    let mut cumulative = Vec::with_capacity(looks.len());
    let mut spent_before = 0.0;
    let mut crossed_total = 0.0;
    let mut density: Option<SubDensity> = None;
    let mut t_prev = 0.0;

    for &look in looks {
        let t = look as f64 / n_max as f64;
        let target = spend(look, n_max, alpha)? - spent_before;
        let z = match &density {
            None => norm_quantile(1.0 - target)?,
            Some(dens) => {
                let r = (t_prev / t).sqrt();
                let s = ((t - t_prev) / t).sqrt();
                solve_boundary(|z| dens.crossing(z, r, s), target)?
            }
        };
        let crossed = match &density {
            None => norm_sf(z),
            Some(dens) => dens.crossing(z, (t_prev / t).sqrt(), ((t - t_prev) / t).sqrt()),
        };
        crossed_total += crossed;
        boundaries.push(z);
        cumulative.push(crossed_total);

        // propagate the continuation-region density to this look
        let upper = z.min(grid.grid_halfwidth);
        if upper <= lo {
            return Err(Error::param("looks", "boundary fell below the integration grid"));
        }
        let (nodes, weights) = SubDensity::nodes(lo, upper, grid.grid_points);
        let values: Vec<f64> = match &density {
            None => nodes.iter().map(|&v| norm_pdf(v)).collect(),
            Some(prev) => {
                let r = (t_prev / t).sqrt();
                let s = ((t - t_prev) / t).sqrt();
                nodes
                    .iter()
                    .map(|&v| {
                        prev.nodes
                            .iter()
                            .zip(&prev.weighted)
                            .map(|(&u, &w)| w * norm_pdf((v - r * u) / s))
                            .sum::<f64>()
                            / s
                    })
                    .collect()
            }
        };
        let weighted = values.iter().zip(&weights).map(|(f, w)| f * w).collect();
        density = Some(SubDensity { nodes, weighted });
        spent_before += target;
        t_prev = t;
    }

    Ok(GstPlan {
        n_max,
        looks: looks.to_vec(),
        alpha,
        boundaries,
        cumulative_alpha: cumulative,
        grid,
    })
}

pub fn plan(schedule: LookSchedule, n_max: u64, alpha: f64, grid: GridSettings) -> Result<GstPlan> {
    compute_boundaries(&schedule.looks(n_max)?, n_max, alpha, grid)
}

/// Bisection on the (decreasing) crossing probability.
fn solve_boundary<F: Fn(f64) -> f64>(crossing: F, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-DEFAULT_GRID_HALFWIDTH, 40.0);
    if crossing(lo) < target {
        return Err(Error::param("looks", "spending increment cannot be attained"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = crossing(mid);
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-11 || (p - target).abs() < 1e-8 * target.min(1e-3) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::MaxIterations(200))
}
