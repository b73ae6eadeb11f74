//! Scalar numeric kernels shared by the rest of the crate: the standard
//! normal distribution, a bracketing root finder and a 1-D minimizer.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Termination settings for [`find_root`] and [`minimize_1d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
///
/// Inside |x| <= 2 this sums the Taylor series of the integral of the
/// density (absolute error near machine epsilon). Beyond that the Laplace
/// continued fraction for the Mills ratio keeps relative accuracy in the tail.
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < -2.0 {
        return lower_tail_cf(-x);
    }
    if x > 2.0 {
        return 1.0 - lower_tail_cf(x);
    }
    let q = x * x;
    let mut sum = x;
    let mut term = x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= q / k;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    0.5 + sum * (-0.5 * q - LN_SQRT_2PI).exp()
}

/// Upper tail `1 - Φ(x)`, accurate in relative terms for large positive `x`.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// Φ(-t) for t >= 5 via backward evaluation of
/// φ(t) / (t + 1/(t + 2/(t + 3/(t + ...)))).
fn lower_tail_cf(t: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let mut frac = t;
    for k in (1..=120).rev() {
        frac = t + k as f64 / frac;
    }
    norm_pdf(t) / frac
}

/// Inverse of the standard normal CDF.
///
/// Rational starting point (Acklam) followed by Halley refinement against
/// [`norm_cdf`].
pub fn norm_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("{q} is not in (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |r: f64| {
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let mut x = if q < P_LOW {
        tail((-2.0 * q.ln()).sqrt())
    } else if q <= 1.0 - P_LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - q).ln()).sqrt())
    };

    for _ in 0..3 {
        // work in whichever tail keeps the residual small relative to q
        let e = if x <= 0.0 {
            norm_cdf(x) - q
        } else {
            (1.0 - q) - norm_sf(x)
        };
        let u = e / norm_pdf(x);
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Brent's method on a sign-changing bracket.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, tol: ToleranceSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() || fa * fb > 0.0 {
        return Err(Error::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.rel_tol * b.abs();
        let m = 0.5 * (c - b);
        if fb.abs() <= tol.abs_tol || m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.max(f64::MIN_POSITIVE).copysign(m) };
        fb = f(b);
    }
    Err(Error::MaxIterations(tol.max_iter))
}

/// Golden-section search for the minimum of a unimodal function.
///
/// Terminates once the bracket is narrower than `rel_tol * |x| + abs_tol`,
/// so a flat function still returns a point inside the bracket.
pub fn minimize_1d<F>(mut f: F, lo: f64, hi: f64, tol: ToleranceSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::param("bracket", format!("[{lo}, {hi}] is empty")));
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..tol.max_iter {
        let mid = 0.5 * (a + b);
        if b - a <= tol.rel_tol * mid.abs() + tol.abs_tol {
            return Ok(if f1 <= f2 { x1 } else { x2 });
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    Err(Error::MaxIterations(tol.max_iter))
}
