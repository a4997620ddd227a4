//! Dormand–Prince 5(4) integrator for complex linear systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, x: f64, y: &[Complex64], dy: &mut [Complex64]);
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    /// Sum of accepted local error estimates (absolute, in the error-norm units times tol).
    pub error_sum: f64,
}

/// Integrates from `x0` with initial state `y0`, returning the state at each point of
/// `outputs` (ascending, all `>= x0`). Relative and absolute tolerance are both `tol`.
pub fn integrate<S: System>(
    sys: &S,
    x0: f64,
    y0: &[Complex64],
    outputs: &[f64],
    tol: f64,
    h_init: f64,
) -> Result<(Vec<Vec<Complex64>>, Stats)> {
    let dim = sys.dim();
    let zero = Complex64::new(0.0, 0.0);
    let mut y = y0.to_vec();
    let mut ynew = vec![zero; dim];
    let mut tmp = vec![zero; dim];
    let mut k: Vec<Vec<Complex64>> = (0..7).map(|_| vec![zero; dim]).collect();
    let mut stats = Stats { accepted: 0, rejected: 0, error_sum: 0.0 };
    let mut out = Vec::with_capacity(outputs.len());

    let mut x = x0;
    let mut h = h_init.abs().max(1e-8);
    sys.rhs(x, &y, &mut k[0]);
    let mut have_k1 = true;

    for &target in outputs {
        if target < x - 1e-15 {
            return Err(Error::Precondition("output points must be ascending".into()));
        }
        while x < target {
            let remaining = target - x;
            let last = h >= remaining * (1.0 - 1e-12);
            let hs = if last { remaining } else { h };
            if hs <= 1e-14 * (1.0 + x.abs()) && !last {
                return Err(Error::StepUnderflow { x });
            }
            if !have_k1 {
                sys.rhs(x, &y, &mut k[0]);
            }
            let (k1, rest) = k.split_at_mut(1);
            let k1 = &k1[0];
            let (k2, rest) = rest.split_at_mut(1);
            let k2 = &mut k2[0];
            for i in 0..dim {
                tmp[i] = y[i] + k1[i] * (hs * A21);
            }
            sys.rhs(x + C2 * hs, &tmp, k2);
            let (k3, rest) = rest.split_at_mut(1);
            let k3 = &mut k3[0];
            for i in 0..dim {
                tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * hs;
            }
            sys.rhs(x + C3 * hs, &tmp, k3);
            let (k4, rest) = rest.split_at_mut(1);
            let k4 = &mut k4[0];
            for i in 0..dim {
                tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * hs;
            }
            sys.rhs(x + C4 * hs, &tmp, k4);
            let (k5, rest) = rest.split_at_mut(1);
            let k5 = &mut k5[0];
            for i in 0..dim {
                tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * hs;
            }
            sys.rhs(x + C5 * hs, &tmp, k5);
            let (k6, rest) = rest.split_at_mut(1);
            let k6 = &mut k6[0];
            for i in 0..dim {
                tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * hs;
            }
            sys.rhs(x + hs, &tmp, k6);
            for i in 0..dim {
                ynew[i] = y[i]
                    + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * hs;
            }
            let k7 = &mut rest[0];
            sys.rhs(x + hs, &ynew, k7);

            let mut acc = 0.0;
            for i in 0..dim {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                    * hs;
                let sc = tol + tol * y[i].norm().max(ynew[i].norm());
                let r = e.norm() / sc;
                acc += r * r;
            }
            let err = (acc / dim as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Overflow(format!("integration state at x = {x}")));
            }
            if err <= 1.0 {
                x = if last { target } else { x + hs };
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                have_k1 = true;
                stats.accepted += 1;
                stats.error_sum += err * tol;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                stats.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                have_k1 = true;
                if h <= 1e-14 * (1.0 + x.abs()) {
                    return Err(Error::StepUnderflow { x });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}
