//! Independent reference values: dense Fourier truncation of the operator, closed forms
//! for the free operator, and the classical Plancherel identity.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::multipliers::OmegaOrder;
use crate::operator::OperatorSpec;
use crate::quadrature;

/// Eigenvalues of the operator on `span{e^{i(2m + theta)x} : |m| <= modes}`, ascending.
/// `theta = 0` gives the periodic problem, `theta = 1` the antiperiodic one.
pub fn truncated_eigenvalues(spec: &OperatorSpec, modes: usize, theta: f64) -> Result<Vec<f64>> {
    let n = spec.n();
    let size = 2 * modes + 1;
    let lam = |i: usize| 2.0 * (i as f64 - modes as f64) + theta;
    let h = DMatrix::<Complex64>::from_fn(size, size, |a, b| {
        let (la, lb) = (lam(a), lam(b));
        let mut v = Complex64::new(0.0, 0.0);
        if a == b {
            v += la.powi(2 * n as i32);
        }
        for (j, p) in spec.coeffs().iter().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            v += p.coeff(a as i64 - b as i64) * (sign * (la * lb).powi(j as i32));
        }
        v
    });
    // real symmetric embedding of the Hermitian matrix; every eigenvalue appears twice
    let re = h.map(|z| z.re);
    let im = h.map(|z| z.im);
    let mut big = DMatrix::<f64>::zeros(2 * size, 2 * size);
    big.view_mut((0, 0), (size, size)).copy_from(&re);
    big.view_mut((size, size), (size, size)).copy_from(&re);
    big.view_mut((0, size), (size, size)).copy_from(&(-&im));
    big.view_mut((size, 0), (size, size)).copy_from(&im);
    let mut ev: Vec<f64> = big.symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("Fourier truncation".into()));
    }
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev.into_iter().step_by(2).collect())
}

/// The lowest `count` periodic and antiperiodic eigenvalues merged: the band edges.
pub fn fourier_edges(spec: &OperatorSpec, modes: usize, count: usize) -> Result<Vec<f64>> {
    let mut all = truncated_eigenvalues(spec, modes, 0.0)?;
    all.extend(truncated_eigenvalues(spec, modes, 1.0)?);
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(count);
    Ok(all)
}

/// Multipliers of the free operator `(-1)^n y^{(2n)} = mu y`, `mu >= 0`.
pub fn free_multipliers(n: usize, mu: f64) -> Vec<Complex64> {
    OmegaOrder::new(n).asymptotic(mu)
}

/// Band edges of the free operator below `mu_max`: `m^{2n}` for integer `m >= 0`.
pub fn free_edges(n: usize, mu_max: f64) -> Vec<f64> {
    (0..).map(|m: i32| (m as f64).powi(2 * n as i32)).take_while(|&e| e <= mu_max).collect()
}

/// `int f(x) e^{-ikx} dx` over `support`.
pub fn fourier_transform<F: Fn(f64) -> f64>(f: &F, support: (f64, f64), k: f64) -> Complex64 {
    let (x, w) = quadrature::composite(support.0, support.1, 64, 16);
    x.iter().zip(&w).map(|(x, w)| Complex64::from_polar(w * f(*x), -k * x)).sum()
}

/// `(int |f|^2 dx, (1/2 pi) int_{-K}^{K} |f^(k)|^2 dk)`.
pub fn plancherel<F: Fn(f64) -> f64>(f: &F, support: (f64, f64), k_max: f64) -> (f64, f64) {
    let (x, w) = quadrature::composite(support.0, support.1, 64, 16);
    let lhs = x.iter().zip(&w).map(|(x, w)| w * f(*x).powi(2)).sum();
    let (k, wk) = quadrature::composite(-k_max, k_max, 256, 16);
    let rhs = k.iter().zip(&wk).map(|(k, w)| w * fourier_transform(f, support, *k).norm_sqr()).sum::<f64>() / (2.0 * PI);
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{OperatorSpec, TrigPoly};

    #[test]
    fn free_truncation_is_exact() {
        let spec = OperatorSpec::free(1).unwrap();
        let e = fourier_edges(&spec, 5, 7).unwrap();
        for (v, x) in e.iter().zip([0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0]) {
            assert!((v - x).abs() < 1e-12, "{e:?}");
        }
        assert_eq!(free_edges(2, 100.0), vec![0.0, 1.0, 16.0, 81.0]);
    }

    #[test]
    fn mathieu_characteristic_values() {
        // q = 1: a_0, b_1, a_1, b_2, a_2
        let e = fourier_edges(&OperatorSpec::mathieu(1.0), 20, 5).unwrap();
        let known = [-0.4551386041, -0.1102488170, 1.8591080725, 3.9170247730, 4.3713009827];
        for (v, k) in e.iter().zip(known) {
            assert!((v - k).abs() < 1e-9, "{e:?}");
        }
    }

    #[test]
    fn hermitian_coefficients_are_handled() {
        // p_0 = sin 2x has purely imaginary Fourier coefficients; the spectrum is
        // symmetric under the shift x -> x + pi/4 that maps it to cos 2x
        let s = TrigPoly::from_terms(&[(1, Complex64::new(0.0, -0.5)), (-1, Complex64::new(0.0, 0.5))]).unwrap();
        let a = truncated_eigenvalues(&OperatorSpec::new(1, vec![s]).unwrap(), 15, 0.0).unwrap();
        let b = truncated_eigenvalues(&OperatorSpec::mathieu(0.5), 15, 0.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_plancherel() {
        let f = |x: f64| (-x * x / 2.0).exp();
        let (l, r) = plancherel(&f, (-12.0, 12.0), 14.0);
        assert!((l - PI.sqrt()).abs() < 1e-12);
        assert!((l - r).abs() < 1e-10);
    }
}
