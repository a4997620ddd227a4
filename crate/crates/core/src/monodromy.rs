//! Fundamental system over one period, the monodromy matrix, and the characteristic
//! polynomial `Delta(mu, rho) = det(U(mu) - rho I)`.
//!
//! Solutions are propagated in scaled variables `y^(j) / s^j` with `s = max(1, |mu|^{1/2n})`.
//! When solutions grow strongly over a period, the period is split into segments and
//! every quantity is computed from the segment propagators (multiple shooting), never
//! from the ill-conditioned full product.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::ode::{self, System};
use crate::operator::StandardForm;

/// Maximal log-growth per shooting segment.
const SEGMENT_GROWTH: f64 = 2.5;
/// Largest allowed `lambda pi max Re omega`.
pub const MAX_GROWTH_EXPONENT: f64 = 300.0;

pub fn check_tol(tol: f64) -> Result<()> {
    if !(1e-14..=1e-4).contains(&tol) {
        return Err(Error::ToleranceOutOfRange(tol));
    }
    Ok(())
}

/// `y^(2n) = (-1)^n (mu y - sum a_m y^(m))` as a first-order system in scaled variables,
/// optionally augmented with the mu-derivative of the fundamental matrix.
struct Companion<'a> {
    sf: &'a StandardForm,
    order: usize,
    cols: usize,
    coef_mu: Complex64,
    coef_a: Vec<f64>,
    s: f64,
    derivative: bool,
}

impl<'a> Companion<'a> {
    fn new(sf: &'a StandardForm, mu: Complex64, s: f64, cols: usize, derivative: bool) -> Self {
        let order = sf.order();
        let sign = if sf.n() % 2 == 0 { 1.0 } else { -1.0 };
        let inv = s.powi(1 - order as i32);
        let coef_a = (0..order - 1).map(|m| -sign * s.powi(m as i32) * inv).collect();
        Companion { sf, order, cols, coef_mu: mu * (sign * inv), coef_a, s, derivative }
    }

    fn apply(&self, a: &[f64], y: &[Complex64], out: &mut [Complex64]) {
        let n = self.order;
        for col in 0..self.cols {
            let yc = &y[col * n..(col + 1) * n];
            let oc = &mut out[col * n..(col + 1) * n];
            for j in 0..n - 1 {
                oc[j] = yc[j + 1] * self.s;
            }
            let mut last = yc[0] * self.coef_mu;
            for m in 0..n - 1 {
                last += yc[m] * (self.coef_a[m] * a[m]);
            }
            oc[n - 1] = last;
        }
    }
}

impl System for Companion<'_> {
    fn dim(&self) -> usize {
        let base = self.order * self.cols;
        if self.derivative {
            2 * base
        } else {
            base
        }
    }

    fn rhs(&self, x: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let mut buf = [0.0f64; 64];
        let a = &mut buf[..self.order - 1];
        self.sf.eval_into(x, a);
        let base = self.order * self.cols;
        self.apply(a, &y[..base], &mut dy[..base]);
        if self.derivative {
            let tail = &mut dy[base..];
            self.apply(a, &y[base..], tail);
            let d = self.dmu_factor();
            let n = self.order;
            for col in 0..self.cols {
                tail[col * n + n - 1] += y[col * n] * d;
            }
        }
    }
}

impl Companion<'_> {
    fn dmu_factor(&self) -> f64 {
        let sign = if self.sf.n() % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.s.powi(1 - self.order as i32)
    }
}

/// Scaled propagator of one shooting segment.
#[derive(Debug, Clone)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub m: CMat,
    pub dm: Option<CMat>,
}

#[derive(Debug, Clone)]
pub struct MonodromyData {
    pub mu: Complex64,
    /// `Y(pi)` in the original variables.
    pub u: CMat,
    pub du_dmu: Option<CMat>,
    pub local_error_estimate: f64,
    order: usize,
    scale: f64,
    segments: Vec<Segment>,
    det_u: Complex64,
}

/// First row of the scaled fundamental matrix of segment `seg` at a sample point.
#[derive(Debug, Clone)]
pub struct SampleRow {
    pub x: f64,
    pub seg: usize,
    pub row: Vec<Complex64>,
}

/// `s = max(1, |mu|^{1/2n})`.
pub fn scale_for(order: usize, mu: Complex64) -> f64 {
    mu.norm().powf(1.0 / order as f64).max(1.0)
}

/// `pi |mu|^{1/2n} max_k Re kappa_k` over the roots of `kappa^{2n} = (-1)^n mu`.
pub fn growth_exponent(order: usize, mu: Complex64) -> f64 {
    let n = order / 2;
    let target = if n % 2 == 0 { mu } else { -mu };
    let r = target.norm().powf(1.0 / order as f64);
    let theta = target.arg();
    let best = (0..order)
        .map(|k| ((theta + 2.0 * PI * k as f64) / order as f64).cos())
        .fold(f64::NEG_INFINITY, f64::max);
    PI * r * best.max(0.0)
}

fn segment_count(sf: &StandardForm, mu: Complex64) -> usize {
    let growth = growth_exponent(sf.order(), mu) + 0.5 * PI * sf.growth_bound();
    ((growth / SEGMENT_GROWTH).ceil() as usize).max(1)
}

fn check_range(order: usize, mu: Complex64) -> Result<()> {
    let e = growth_exponent(order, mu);
    if e > MAX_GROWTH_EXPONENT || !mu.re.is_finite() || !mu.im.is_finite() {
        return Err(Error::OutOfRange { mu: format!("{mu}"), exponent: e });
    }
    Ok(())
}

/// Monodromy matrix and its mu-derivative (variational system).
pub fn monodromy(sf: &StandardForm, mu: Complex64, tol: f64) -> Result<MonodromyData> {
    check_tol(tol)?;
    monodromy_with(sf, mu, tol, true, &[]).map(|(md, _)| md)
}

/// Monodromy matrix without the derivative.
pub fn monodromy_plain(sf: &StandardForm, mu: Complex64, tol: f64) -> Result<MonodromyData> {
    check_tol(tol)?;
    monodromy_with(sf, mu, tol, false, &[]).map(|(md, _)| md)
}

/// Monodromy data plus first rows of the segment fundamental matrices at `samples`
/// (points in `[0, pi]`, any order).
pub fn monodromy_with(
    sf: &StandardForm,
    mu: Complex64,
    tol: f64,
    derivative: bool,
    samples: &[f64],
) -> Result<(MonodromyData, Vec<SampleRow>)> {
    let order = sf.order();
    check_range(order, mu)?;
    let s = scale_for(order, mu);
    let nseg = segment_count(sf, mu);
    let sys = Companion::new(sf, mu, s, order, derivative);
    let dim = sys.dim();
    let mut y0 = vec![c(0.0, 0.0); dim];
    for j in 0..order {
        y0[j * order + j] = c(1.0, 0.0);
    }

    let bounds: Vec<f64> = (0..=nseg).map(|i| PI * i as f64 / nseg as f64).collect();
    let mut segments = Vec::with_capacity(nseg);
    let mut rows: Vec<SampleRow> = Vec::with_capacity(samples.len());
    let mut err_total = 0.0;
    let h0 = 0.1 / (s + sf.growth_bound() + 1.0);
    for i in 0..nseg {
        let (x0, x1) = (bounds[i], bounds[i + 1]);
        let mut inside: Vec<f64> = samples
            .iter()
            .copied()
            .filter(|&x| {
                let seg = segment_of(x, nseg);
                seg == i
            })
            .collect();
        inside.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut outputs = inside.clone();
        outputs.push(x1);
        let (states, stats) = ode::integrate(&sys, x0, &y0, &outputs, tol, h0)?;
        err_total += stats.error_sum;
        for (x, st) in inside.iter().zip(&states) {
            let row = (0..order).map(|col| st[col * order]).collect();
            rows.push(SampleRow { x: *x, seg: i, row });
        }
        let last = states.last().expect("endpoint state");
        let m = CMat::from_column_slice(order, order, &last[..order * order]);
        let dm = derivative
            .then(|| CMat::from_column_slice(order, order, &last[order * order..2 * order * order]));
        segments.push(Segment { x0, x1, m, dm });
    }

    // product rule over segments
    let mut p = segments[0].m.clone();
    let mut dp = segments[0].dm.clone();
    for seg in &segments[1..] {
        if let (Some(d), Some(dm)) = (dp.as_mut(), seg.dm.as_ref()) {
            *d = dm * &p + &seg.m * &*d;
        }
        p = &seg.m * &p;
    }
    let unscale = |m: &CMat| {
        CMat::from_fn(order, order, |i, j| m[(i, j)] * s.powi(i as i32 - j as i32))
    };
    let det_u = segments.iter().map(|seg| linalg::det(&seg.m)).product();
    let md = MonodromyData {
        mu,
        u: unscale(&p),
        du_dmu: dp.as_ref().map(unscale),
        local_error_estimate: err_total,
        order,
        scale: s,
        segments,
        det_u,
    };
    // return rows in the caller's order
    let sorted = samples
        .iter()
        .map(|&x| rows.iter().find(|r| r.x == x).expect("sample row").clone())
        .collect();
    Ok((md, sorted))
}

/// Index of the shooting segment containing `x` (`x = pi` belongs to the last one).
pub fn segment_of(x: f64, nseg: usize) -> usize {
    let k = (x / PI * nseg as f64).floor();
    (k.max(0.0) as usize).min(nseg - 1)
}

/// `Delta` and its partial derivatives at one point.
#[derive(Debug, Clone, Copy)]
pub struct DeltaEval {
    pub delta: Complex64,
    pub d_rho: Complex64,
    pub d_mu: Option<Complex64>,
}

/// Monic characteristic polynomial `sum A_k rho^k`.
#[derive(Debug, Clone)]
pub struct CharPoly {
    pub coeffs: Vec<Complex64>,
}

impl CharPoly {
    pub fn eval(&self, rho: Complex64) -> Complex64 {
        linalg::poly_eval(&self.coeffs, rho)
    }

    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `max_k |A_k - A_{2n-k}|`.
    pub fn palindromy_defect(&self) -> f64 {
        let n = self.coeffs.len() - 1;
        (0..=n).map(|k| (self.coeffs[k] - self.coeffs[n - k]).norm()).fold(0.0, f64::max)
    }
}

impl MonodromyData {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn has_derivative(&self) -> bool {
        self.du_dmu.is_some()
    }

    /// `det U` as the product of segment determinants.
    pub fn det_u(&self) -> Complex64 {
        self.det_u
    }

    /// Scaled monodromy matrix `D^{-1} U D`.
    pub fn scaled_u(&self) -> CMat {
        let mut p = self.segments[0].m.clone();
        for seg in &self.segments[1..] {
            p = &seg.m * &p;
        }
        p
    }

    /// Cyclic block matrix whose determinant is `Delta(mu, rho)`.
    pub fn cyclic(&self, rho: Complex64) -> CMat {
        let n = self.order;
        let m = self.segments.len();
        let mut k = CMat::zeros(n * m, n * m);
        for (i, seg) in self.segments.iter().enumerate() {
            let r = i * n;
            if i + 1 < m {
                k.view_mut((r, r), (n, n)).copy_from(&(-&seg.m));
                for d in 0..n {
                    k[(r + d, r + n + d)] += c(1.0, 0.0);
                }
            } else {
                let mut blk = k.view_mut((r, r), (n, n));
                blk += &seg.m;
                for d in 0..n {
                    k[(r + d, d)] -= rho;
                }
            }
        }
        k
    }

    fn cyclic_mu(&self) -> Option<CMat> {
        let n = self.order;
        let m = self.segments.len();
        let mut k = CMat::zeros(n * m, n * m);
        for (i, seg) in self.segments.iter().enumerate() {
            let dm = seg.dm.as_ref()?;
            let r = i * n;
            if i + 1 < m {
                k.view_mut((r, r), (n, n)).copy_from(&(-dm));
            } else {
                k.view_mut((r, r), (n, n)).copy_from(dm);
            }
        }
        Some(k)
    }

    /// Determinant and adjugate of the cyclic matrix at `rho`.
    pub fn cyclic_adjugate(&self, rho: Complex64) -> (Complex64, CMat) {
        linalg::det_adjugate(&self.cyclic(rho))
    }

    pub fn delta_from_adjugate(&self, det: Complex64, adj: &CMat) -> DeltaEval {
        let n = self.order;
        let m = self.segments.len();
        // K_rho = -I in block (m-1, 0): tr(adj K_rho) = -tr(adj block (0, m-1))
        let mut d_rho = c(0.0, 0.0);
        for d in 0..n {
            d_rho -= adj[(d, (m - 1) * n + d)];
        }
        let d_mu = self.cyclic_mu().map(|km| linalg::trace_product(adj, &km));
        DeltaEval { delta: det, d_rho, d_mu }
    }

    /// Scaled-coordinate states of the Floquet solution at the segment starts, from
    /// the last column of the adjugate: `z_i = -s^{1-2n} adj(K)[block i, last]`.
    pub fn floquet_states(&self, adj: &CMat) -> Vec<DVector<Complex64>> {
        let n = self.order;
        let m = self.segments.len();
        let col = m * n - 1;
        let f = -self.scale.powi(1 - n as i32);
        (0..m)
            .map(|i| DVector::from_fn(n, |q, _| adj[(i * n + q, col)] * f))
            .collect()
    }

    /// Coefficients `v` of the Floquet solution `sum_q v_q u_q(x)` in the fundamental basis.
    pub fn floquet_coefficients(&self, adj: &CMat) -> DVector<Complex64> {
        let z = &self.floquet_states(adj)[0];
        DVector::from_fn(self.order, |q, _| z[q] * self.scale.powi(q as i32))
    }

    /// Multipliers from the cyclic matrix of segment propagators: its eigenvalues are the
    /// m-th roots of the multipliers, one per residue class of the argument mod 2 pi / m.
    pub fn multipliers(&self) -> Result<Vec<Complex64>> {
        let n = self.order;
        let m = self.segments.len();
        if m == 1 {
            return linalg::eigenvalues(&self.segments[0].m);
        }
        let mut cyc = CMat::zeros(n * m, n * m);
        for (i, seg) in self.segments.iter().enumerate() {
            let r = ((i + 1) % m) * n;
            cyc.view_mut((r, i * n), (n, n)).copy_from(&seg.m);
        }
        let nu = linalg::eigenvalues(&cyc)
            .map_err(|_| Error::EigenFailure(format!("{}", self.mu)))?;
        let sector = 2.0 * PI / m as f64;
        let mut res: Vec<f64> = nu.iter().map(|z| z.arg().rem_euclid(sector)).collect();
        res.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut cut = 0.0;
        let mut gap = -1.0;
        for i in 0..res.len() {
            let next = if i + 1 < res.len() { res[i + 1] } else { res[0] + sector };
            if next - res[i] > gap {
                gap = next - res[i];
                cut = res[i] + 0.5 * gap;
            }
        }
        let mut picked: Vec<Complex64> = nu
            .iter()
            .filter(|z| (z.arg() - cut).rem_euclid(2.0 * PI) < sector)
            .map(|z| z.powu(m as u32))
            .collect();
        if picked.len() != n {
            // fall back: greedily take eigenvalues whose powers are farthest from those taken
            let mut pool: Vec<Complex64> = nu.iter().map(|z| z.powu(m as u32)).collect();
            picked.clear();
            pool.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
            while picked.len() < n && !pool.is_empty() {
                let r = pool.remove(0);
                picked.push(r);
                let mut removed = 0;
                pool.retain(|p| {
                    if removed < m - 1 && (p - r).norm() <= 1e-6 * r.norm().max(1e-300) {
                        removed += 1;
                        false
                    } else {
                        true
                    }
                });
            }
            if picked.len() != n {
                return Err(Error::EigenFailure(format!("{}", self.mu)));
            }
        }
        Ok(picked)
    }
}

/// Characteristic polynomial coefficients. Faddeev–LeVerrier on the monodromy matrix for a
/// single segment; products of the multipliers otherwise.
pub fn char_poly(md: &MonodromyData) -> Result<CharPoly> {
    if md.segments.len() == 1 {
        // det(U - rho I) = det(rho I - U) for even order; the scaled matrix is similar to U
        Ok(CharPoly { coeffs: linalg::faddeev_leverrier(&md.segments[0].m) })
    } else {
        let roots = md.multipliers()?;
        Ok(CharPoly { coeffs: linalg::poly_from_roots(&roots) })
    }
}

/// `Delta(mu, rho)`, `d Delta / d rho` and `d Delta / d mu` (when the derivative is present).
pub fn delta_eval(md: &MonodromyData, rho: Complex64) -> DeltaEval {
    let (det, adj) = md.cyclic_adjugate(rho);
    md.delta_from_adjugate(det, &adj)
}

/// Sylvester resultant of `Delta(mu, .)` and `Delta'_rho(mu, .)`.
pub fn discriminant(sf: &StandardForm, mu: Complex64, tol: f64) -> Result<Complex64> {
    let md = monodromy_plain(sf, mu, tol)?;
    let cp = char_poly(&md)?;
    Ok(linalg::resultant(&cp.coeffs, &linalg::poly_derivative(&cp.coeffs)))
}

/// Scale of the discriminant: the resultant of polynomials with coefficients of size
/// `A` is bounded by a product of coefficient norms.
pub fn discriminant_scale(cp: &CharPoly) -> f64 {
    let d = cp.coeffs.len() - 1;
    let norm: f64 = cp.coeffs.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let dnorm: f64 = linalg::poly_derivative(&cp.coeffs).iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    norm.powi(d as i32 - 1) * dnorm.powi(d as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{expand_standard_form, OperatorSpec, TrigPoly};

    fn free(n: usize) -> StandardForm {
        expand_standard_form(&OperatorSpec::free(n).unwrap())
    }

    fn mathieu() -> StandardForm {
        expand_standard_form(&OperatorSpec::mathieu(1.0))
    }

    fn fourth_order() -> StandardForm {
        expand_standard_form(
            &OperatorSpec::new(2, vec![TrigPoly::cosine(1, 1.0), TrigPoly::cosine(1, 1.0)]).unwrap(),
        )
    }

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn free_hill_closed_forms() {
        let md = monodromy(&free(1), c(1.0, 0.0), 1e-12).unwrap();
        assert!(close(&md.u, &(CMat::identity(2, 2) * c(-1.0, 0.0)), 1e-10));
        let md = monodromy(&free(1), c(0.25, 0.0), 1e-12).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 0.0), c(-0.5, 0.0), c(0.0, 0.0)]);
        assert!(close(&md.u, &expect, 1e-10));
    }

    #[test]
    fn mathieu_against_fine_reference() {
        let sf = mathieu();
        let md = monodromy(&sf, c(0.0, 0.0), 1e-13).unwrap();
        let reference = monodromy_with(&sf, c(0.0, 0.0), 1e-15, false, &[]).unwrap().0;
        assert!(close(&md.u, &reference.u, 1e-10));
    }

    #[test]
    fn tolerance_range_is_enforced() {
        assert!(matches!(monodromy(&free(1), c(1.0, 0.0), 1e-3), Err(Error::ToleranceOutOfRange(_))));
        assert!(matches!(monodromy(&free(1), c(1.0, 0.0), 1e-15), Err(Error::ToleranceOutOfRange(_))));
    }

    #[test]
    fn huge_mu_is_refused() {
        let r = monodromy(&free(1), c(-1e6, 0.0), 1e-10);
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn convergence_in_tolerance() {
        let sf = mathieu();
        let reference = monodromy(&sf, c(3.0, 0.0), 1e-13).unwrap().u;
        let mut prev = f64::INFINITY;
        for tol in [1e-6, 1e-8, 1e-10] {
            let e = (monodromy(&sf, c(3.0, 0.0), tol).unwrap().u - &reference).norm();
            assert!(e < prev, "tol {tol}: {e} !< {prev}");
            prev = e;
        }
    }

    #[test]
    fn liouville_and_realness() {
        for sf in [mathieu(), fourth_order()] {
            for &mu in &[-1.0, 0.3, 7.0, 55.0, 400.0] {
                let md = monodromy(&sf, c(mu, 0.0), 1e-12).unwrap();
                assert!((md.det_u() - c(1.0, 0.0)).norm() < 1e-9, "det at {mu}");
                let umax = md.u.iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(md.u.iter().all(|z| z.im.abs() <= 1e-12 * umax.max(1.0)));
            }
        }
    }

    #[test]
    fn char_poly_examples() {
        for &mu in &[0.25, 2.0, 10.0] {
            let cp = char_poly(&monodromy(&free(1), c(mu, 0.0), 1e-13).unwrap()).unwrap();
            let a1 = -2.0 * (PI * mu.sqrt()).cos();
            assert!((cp.coeffs[0] - c(1.0, 0.0)).norm() < 1e-9);
            assert!((cp.coeffs[1] - c(a1, 0.0)).norm() < 1e-9);
            assert_eq!(cp.coeffs[2], c(1.0, 0.0));
        }
        for &mu in &[-0.7, 1.3, 20.0] {
            let cp = char_poly(&monodromy(&mathieu(), c(mu, 0.0), 1e-12).unwrap()).unwrap();
            assert!((cp.coeffs[0] - c(1.0, 0.0)).norm() < 1e-9);
            assert!(cp.palindromy_defect() < 1e-8 * cp.scale());
        }
    }

    #[test]
    fn delta_eval_examples() {
        let md = monodromy(&free(1), c(0.25, 0.0), 1e-13).unwrap();
        let d = delta_eval(&md, c(0.0, 1.0));
        assert!(d.delta.norm() < 1e-10);
        assert!((d.d_rho - c(0.0, 2.0)).norm() < 1e-9);
        assert!((d.d_mu.unwrap() - c(0.0, 2.0 * PI)).norm() < 1e-8);

        let md = monodromy(&free(1), c(1.0, 0.0), 1e-13).unwrap();
        let d = delta_eval(&md, c(-1.0, 0.0));
        assert!(d.delta.norm() < 1e-10);
        assert!(d.d_rho.norm() < 1e-9);
    }

    #[test]
    fn delta_derivatives_match_finite_differences() {
        let h = 1e-5;
        for sf in [mathieu(), fourth_order()] {
            for &(mu, rho) in &[(2.3, c(0.3, 0.8)), (0.7, c(-1.1, 0.2)), (30.0, c(0.6, -0.5))] {
                let md = monodromy(&sf, c(mu, 0.0), 1e-13).unwrap();
                let d = delta_eval(&md, rho);
                let plus = delta_eval(&monodromy(&sf, c(mu + h, 0.0), 1e-13).unwrap(), rho).delta;
                let minus = delta_eval(&monodromy(&sf, c(mu - h, 0.0), 1e-13).unwrap(), rho).delta;
                let fd_mu = (plus - minus) / (2.0 * h);
                let dm = d.d_mu.unwrap();
                assert!((dm - fd_mu).norm() <= 1e-6 * dm.norm().max(1.0), "{dm} vs {fd_mu}");
                let hr = c(h, 0.0);
                let fd_rho = (delta_eval(&md, rho + hr).delta - delta_eval(&md, rho - hr).delta) / (2.0 * h);
                assert!((d.d_rho - fd_rho).norm() <= 1e-6 * d.d_rho.norm().max(1.0));
            }
        }
    }

    #[test]
    fn cyclic_determinant_equals_delta() {
        let sf = fourth_order();
        let md = monodromy(&sf, c(900.0, 0.0), 1e-12).unwrap();
        assert!(md.segments().len() > 1);
        let cp = char_poly(&md).unwrap();
        for rho in [c(0.5, 0.5), c(-1.0, 0.0), c(3.0, -2.0)] {
            let d = delta_eval(&md, rho);
            let direct = cp.eval(rho);
            assert!((d.delta - direct).norm() <= 1e-8 * direct.norm().max(cp.scale()));
        }
        // single-segment agreement with the plain determinant
        let md = monodromy(&mathieu(), c(3.0, 0.0), 1e-12).unwrap();
        assert_eq!(md.segments().len(), 1);
        let rho = c(0.2, 0.9);
        let direct = linalg::det(&(&md.u - CMat::identity(2, 2) * rho));
        assert!((delta_eval(&md, rho).delta - direct).norm() < 1e-10);
    }

    #[test]
    fn structured_multipliers_of_free_fourth_order() {
        let md = monodromy_plain(&free(2), c(16.0, 0.0), 1e-12).unwrap();
        let mut rho = md.multipliers().unwrap();
        rho.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
        let e = (2.0 * PI).exp();
        assert!((rho[0].norm() / e - 1.0).abs() < 1e-9);
        assert!((rho[3].norm() * e - 1.0).abs() < 1e-9);
        assert!((rho[1] - c(1.0, 0.0)).norm() < 1e-6);
        assert!((rho[2] - c(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn discriminant_examples() {
        for m in 1..=4 {
            let mu = (m * m) as f64;
            let md = monodromy_plain(&free(1), c(mu, 0.0), 1e-13).unwrap();
            let cp = char_poly(&md).unwrap();
            let d = discriminant(&free(1), c(mu, 0.0), 1e-13).unwrap();
            assert!(d.norm() < 1e-8 * discriminant_scale(&cp), "m = {m}: {d}");
        }
        let d = discriminant(&free(1), c(0.25, 0.0), 1e-13).unwrap();
        assert!((d - c(-4.0, 0.0)).norm() < 1e-8 || (d - c(4.0, 0.0)).norm() < 1e-8);
    }
}
