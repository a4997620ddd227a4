//! Bracketed scalar root finding and minimization.

use crate::error::{Error, Result};

/// Illinois variant of regula falsi on a sign-changing bracket.
pub fn illinois<F>(mut f: F, a: f64, fa: f64, b: f64, fb: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut fa, mut b, mut fb) = (a, fa, b, fb);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::EdgeRefinement { lo: a.min(b), hi: a.max(b) });
    }
    let mut side = 0;
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        let (lo, hi) = (a.min(b), a.max(b));
        if !(x > lo && x < hi) {
            x = 0.5 * (a + b);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    if (b - a).abs() > xtol * 1e3 {
        return Err(Error::EdgeRefinement { lo: a.min(b), hi: a.max(b) });
    }
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

/// Golden-section search for a minimum of a unimodal function on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_min<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}
