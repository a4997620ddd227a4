//! Floquet solutions `E(x; mu, rho)`, the normalizing weights, the eigenfunction
//! transform pair on the band meshes, Bloch eigenpairs, the Gel'fand transform and the
//! spectral matrix.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bands::{self, BandAtlas, BandMesh};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::monodromy::{self, MonodromyData, SampleRow};
use crate::operator::StandardForm;
use crate::quadrature;

const TWO_PI: f64 = 2.0 * PI;
/// Weights are refused when the quantity they divide by falls below this.
const SINGULAR: f64 = 1e-12;
/// Largest `|r ln|rho||` accepted by the quasi-periodic extension.
const MAX_EXTENSION_LOG: f64 = 700.0;
/// Multipliers closer than this (relative) are refused by the reconstruction.
const COLLISION: f64 = 1e-6;

/// `E(x) = sum_q v_q u_q(x)`, with `u_q` the fundamental system normalized at `x = 0`.
#[derive(Debug, Clone)]
pub struct FloquetSolution {
    pub mu: Complex64,
    pub rho: Complex64,
    pub v: DVector<Complex64>,
    pub e0: Complex64,
}

/// Signed cofactors of the first row of the determinant defining `E`: rows `1..2n-1` of
/// `U - rho I` with column `q` deleted.
pub fn cofactor_vector(u: &CMat, rho: Complex64) -> DVector<Complex64> {
    let n = u.nrows();
    let mut a = u.rows(0, n - 1).into_owned();
    for d in 0..n - 1 {
        a[(d, d)] -= rho;
    }
    DVector::from_fn(n, |q, _| {
        let minor = a.clone().remove_column(q);
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        linalg::det(&minor) * sign
    })
}

/// Floquet solution at a root of `Delta(mu, .)`. The coefficients come from the adjugate of
/// the multiple-shooting matrix and agree with [`cofactor_vector`].
pub fn floquet_vector(md: &MonodromyData, rho: Complex64) -> Result<FloquetSolution> {
    let cp = monodromy::char_poly(md)?;
    let (det, adj) = md.cyclic_adjugate(rho);
    if det.norm() > 1e-6 * cp.scale() * (1.0 + rho.norm()).powi(md.order() as i32) {
        return Err(Error::Precondition(format!(
            "rho = {rho} is not a multiplier at mu = {} (|Delta| = {:e})",
            md.mu,
            det.norm()
        )));
    }
    let v = md.floquet_coefficients(&adj);
    // a vanishing cofactor column next to a nonzero adjugate
    let col = adj.ncols() - 1;
    let top = adj.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if adj.column(col).iter().all(|z| z.norm() <= SINGULAR * top) {
        return Err(Error::DegenerateVector(format!("{}", md.mu)));
    }
    Ok(FloquetSolution { mu: md.mu, rho, e0: v[0], v })
}

/// `u_q(x)` at each sample, `q = 0..2n-1`, from the segment-local rows.
pub fn fundamental_values(md: &MonodromyData, rows: &[SampleRow]) -> Vec<DVector<Complex64>> {
    let n = md.order();
    let s = md.scale();
    // prefix products P_i = M_{i-1} ... M_0 in scaled coordinates
    let mut prefix = vec![CMat::identity(n, n)];
    for seg in md.segments() {
        let next = &seg.m * prefix.last().expect("nonempty");
        prefix.push(next);
    }
    rows.iter()
        .map(|r| {
            let row = DVector::from_column_slice(&r.row);
            let g = prefix[r.seg].tr_mul(&row);
            DVector::from_fn(n, |q, _| g[q] * s.powi(-(q as i32)))
        })
        .collect()
}

/// Values of the Floquet solution at the samples, propagated from the shooting states.
fn floquet_values(states: &[DVector<Complex64>], rows: &[SampleRow]) -> Vec<Complex64> {
    rows.iter()
        .map(|r| r.row.iter().zip(states[r.seg].iter()).map(|(a, b)| a * b).sum())
        .collect()
}

fn split_period(x: f64) -> (f64, i64) {
    let r = (x / PI).floor();
    let mut x0 = x - r * PI;
    let mut r = r as i64;
    if x0 >= PI {
        x0 -= PI;
        r += 1;
    }
    (x0.max(0.0), r)
}

fn power(rho: Complex64, r: i64) -> Result<Complex64> {
    let lg = rho.norm().ln();
    if (r as f64 * lg).abs() > MAX_EXTENSION_LOG {
        return Err(Error::Overflow(format!("rho^{r} with |rho| = {}", rho.norm())));
    }
    Ok(rho.powi(r as i32))
}

/// `E(x)` for any real `x` through `E(x0 + pi r) = rho^r E(x0)`.
pub fn eval_e(sf: &StandardForm, fs: &FloquetSolution, xs: &[f64], tol: f64) -> Result<Vec<Complex64>> {
    let split: Vec<(f64, i64)> = xs.iter().map(|&x| split_period(x)).collect();
    let pw: Vec<Complex64> = split.iter().map(|&(_, r)| power(fs.rho, r)).collect::<Result<_>>()?;
    let x0: Vec<f64> = split.iter().map(|p| p.0).collect();
    let (md, rows) = monodromy::monodromy_with(sf, fs.mu, tol, false, &x0)?;
    let (_, adj) = md.cyclic_adjugate(fs.rho);
    let states = md.floquet_states(&adj);
    // rescale the fresh states onto the stored coefficients
    let v = md.floquet_coefficients(&adj);
    let den: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::DegenerateVector(format!("{}", fs.mu)));
    }
    let lambda = fs.v.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum::<Complex64>() / den;
    Ok(floquet_values(&states, &rows).into_iter().zip(pw).map(|(e, p)| e * p * lambda).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub p: f64,
    pub w: f64,
    pub e0_inv: Complex64,
    pub d_rho: Complex64,
    pub d_mu: Complex64,
}

/// `p = |2 pi E(0; rho^{-1}) Delta'_rho|^{-1}` and `w = |Delta'_mu E(0; rho^{-1})|^{-1}`.
pub fn weights(md: &MonodromyData, rho: Complex64) -> Result<Weights> {
    if !md.has_derivative() {
        return Err(Error::Precondition("weights need dU/dmu".into()));
    }
    let (det, adj) = md.cyclic_adjugate(rho);
    let de = md.delta_from_adjugate(det, &adj);
    let (_, adj_inv) = md.cyclic_adjugate(rho.inv());
    let e0_inv = md.floquet_coefficients(&adj_inv)[0];
    weights_from(md.mu.re, e0_inv, de.d_rho, de.d_mu.expect("derivative requested"))
}

fn weights_from(mu: f64, e0_inv: Complex64, d_rho: Complex64, d_mu: Complex64) -> Result<Weights> {
    for (what, value) in [("E(0; rho^-1)", e0_inv.norm()), ("Delta'_rho", d_rho.norm()), ("Delta'_mu", d_mu.norm())] {
        if value < SINGULAR {
            return Err(Error::SingularWeight { mu, what, value });
        }
    }
    Ok(Weights {
        p: 1.0 / (TWO_PI * (e0_inv * d_rho).norm()),
        w: 1.0 / (d_mu * e0_inv).norm(),
        e0_inv,
        d_rho,
        d_mu,
    })
}

/// Compactly supported test function: a Gaussian times `(1 - s^2)^3`, `s = (x - center) / radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub radius: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump { center: 0.3, width: 1.0, radius: 5.0 }
    }
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        let s = d / self.radius;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        (-d * d / (2.0 * self.width * self.width)).exp() * (1.0 - s * s).powi(3)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    /// `int |f|^2` by Gauss–Legendre on the support.
    pub fn norm_sqr(&self) -> f64 {
        let (a, b) = self.support();
        let (x, w) = quadrature::composite(a, b, 64, 16);
        x.iter().zip(&w).map(|(x, w)| w * self.eval(*x).powi(2)).sum()
    }
}

/// Quadrature of one period cell `[0, pi)`.
#[derive(Debug, Clone)]
pub struct CellRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl CellRule {
    pub fn new(panels: usize, nodes: usize) -> Self {
        let (x, w) = quadrature::composite(0.0, PI, panels, nodes);
        CellRule { x, w }
    }

    /// Cell indices `r` with `[pi r, pi (r + 1))` meeting `[a, b]`.
    pub fn cells(a: f64, b: f64) -> std::ops::RangeInclusive<i64> {
        let lo = (a / PI).floor() as i64;
        let hi = ((b / PI).ceil() as i64 - 1).max(lo);
        lo..=hi
    }
}

impl Default for CellRule {
    fn default() -> Self {
        CellRule::new(8, 16)
    }
}

/// Everything the transform needs at one band mesh node.
#[derive(Debug, Clone)]
pub struct Node {
    pub k: usize,
    pub j: usize,
    pub t: f64,
    pub gl_weight: f64,
    pub mu: f64,
    pub dmu_dt: f64,
    pub rho: Complex64,
    pub weights: Weights,
    /// `E(x; rho)` and `E(x; rho^{-1})` at the cell nodes.
    pub e: Vec<Complex64>,
    pub e_inv: Vec<Complex64>,
    /// `max |v(rho^{-1}) - conj v(rho)| / max |v|`.
    pub conj_defect: f64,
    /// `|Delta'_mu mu' + i rho Delta'_rho|` over the polynomial scale.
    pub slope_residual: f64,
}

impl Node {
    /// Relative defect of `p |mu'| = w / 2 pi`.
    pub fn weight_identity_defect(&self) -> f64 {
        let lhs = self.weights.p * self.dmu_dt.abs();
        let rhs = self.weights.w / TWO_PI;
        (lhs - rhs).abs() / rhs
    }
}

#[derive(Debug, Clone)]
pub struct ExpansionOptions {
    pub mesh_n: usize,
    pub ode_tol: f64,
    pub cell: CellRule,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions { mesh_n: 64, ode_tol: 1e-12, cell: CellRule::default() }
    }
}

/// Floquet solutions on every non-degenerate band mesh of an atlas.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub n: usize,
    pub cell: CellRule,
    pub meshes: Vec<BandMesh>,
    pub nodes: Vec<Node>,
    pub ode_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSample {
    pub k: usize,
    pub j: usize,
    pub t: f64,
    pub mu: f64,
    pub phi: Complex64,
    pub p: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformVector {
    pub samples: Vec<TransformSample>,
}

impl TransformVector {
    /// `sum int p |phi|^2 dmu` over the meshes.
    pub fn weighted_norm_sqr(&self, basis: &SpectralBasis) -> f64 {
        basis
            .nodes
            .iter()
            .zip(&self.samples)
            .map(|(nd, s)| nd.gl_weight * nd.weights.p * nd.dmu_dt.abs() * s.phi.norm_sqr())
            .sum()
    }
}

fn build_node(sf: &StandardForm, mesh: &BandMesh, i: usize, cell: &CellRule, tol: f64) -> Result<Node> {
    let mu = mesh.mu[i];
    let t = mesh.t[i];
    let rho = Complex64::from_polar(1.0, t);
    let (md, rows) = monodromy::monodromy_with(sf, c(mu, 0.0), tol, true, &cell.x)?;
    let (det, adj) = md.cyclic_adjugate(rho);
    let de = md.delta_from_adjugate(det, &adj);
    let (_, adj_inv) = md.cyclic_adjugate(rho.inv());
    let v = md.floquet_coefficients(&adj);
    let v_inv = md.floquet_coefficients(&adj_inv);
    let d_mu = de.d_mu.expect("derivative requested");
    let weights = weights_from(mu, v_inv[0], de.d_rho, d_mu)?;
    let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let conj_defect = v.iter().zip(v_inv.iter()).map(|(a, b)| (a.conj() - b).norm()).fold(0.0, f64::max) / vmax;
    let scale = monodromy::char_poly(&md)?.scale();
    let slope_residual = (d_mu * mesh.dmu_dt[i] + c(0.0, 1.0) * rho * de.d_rho).norm() / scale;
    Ok(Node {
        k: mesh.k,
        j: mesh.j,
        t,
        gl_weight: mesh.gl_weight[i],
        mu,
        dmu_dt: mesh.dmu_dt[i],
        rho,
        weights,
        e: floquet_values(&md.floquet_states(&adj), &rows),
        e_inv: floquet_values(&md.floquet_states(&adj_inv), &rows),
        conj_defect,
        slope_residual,
    })
}

impl SpectralBasis {
    pub fn build(sf: &StandardForm, atlas: &BandAtlas, opts: &ExpansionOptions) -> Result<Self> {
        monodromy::check_tol(opts.ode_tol)?;
        if sf.n() != atlas.n {
            return Err(Error::Precondition("atlas belongs to a different operator".into()));
        }
        let meshes: Vec<BandMesh> = atlas
            .bands
            .iter()
            .filter(|b| !b.is_degenerate())
            .map(|b| bands::parametrize_band(sf, b, opts.mesh_n, opts.ode_tol))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> =
            meshes.iter().enumerate().flat_map(|(m, mesh)| (0..mesh.t.len()).map(move |i| (m, i))).collect();
        let nodes = jobs
            .par_iter()
            .map(|&(m, i)| build_node(sf, &meshes[m], i, &opts.cell, opts.ode_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralBasis { n: sf.n(), cell: opts.cell.clone(), meshes, nodes, ode_tol: opts.ode_tol })
    }

    /// `Phi(mu, rho) = int f(y) E(y; mu, rho^{-1}) dy` at every node. `support` bounds the
    /// support of `f`.
    pub fn forward<F>(&self, f: F, support: (f64, f64)) -> Result<TransformVector>
    where
        F: Fn(f64) -> Complex64,
    {
        let (a, b) = support;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::Precondition(format!("support [{a}, {b}] is not a finite interval")));
        }
        let cells: Vec<i64> = CellRule::cells(a, b).collect();
        // f times quadrature weight at every cell node
        let fw: Vec<Vec<Complex64>> = cells
            .iter()
            .map(|&r| {
                self.cell.x.iter().zip(&self.cell.w).map(|(x, w)| f(x + PI * r as f64) * *w).collect()
            })
            .collect();
        let mut samples = Vec::with_capacity(self.nodes.len());
        for nd in &self.nodes {
            let rinv = nd.rho.inv();
            let mut phi = c(0.0, 0.0);
            for (&r, vals) in cells.iter().zip(&fw) {
                let cell: Complex64 = vals.iter().zip(&nd.e_inv).map(|(f, e)| f * e).sum();
                phi += cell * power(rinv, r)?;
            }
            samples.push(TransformSample {
                k: nd.k,
                j: nd.j,
                t: nd.t,
                mu: nd.mu,
                phi,
                p: nd.weights.p,
                w: nd.weights.w,
            });
        }
        Ok(TransformVector { samples })
    }

    fn check(&self, phi: &TransformVector) -> Result<()> {
        if phi.samples.len() != self.nodes.len() {
            return Err(Error::Precondition(format!(
                "transform has {} samples, basis has {} nodes",
                phi.samples.len(),
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn coefficient(nd: &Node, phi: Complex64) -> Complex64 {
        phi * (nd.gl_weight * nd.weights.w / TWO_PI)
    }

    /// Inverse transform on the cell nodes of cells `r` in `cells`, returned as `(x, f(x))`.
    pub fn inverse_on_cells(
        &self,
        phi: &TransformVector,
        cells: std::ops::RangeInclusive<i64>,
    ) -> Result<Vec<(f64, Complex64)>> {
        self.check(phi)?;
        let mut out = Vec::new();
        for r in cells {
            let mut vals = vec![c(0.0, 0.0); self.cell.x.len()];
            for (nd, s) in self.nodes.iter().zip(&phi.samples) {
                let a = Self::coefficient(nd, s.phi) * power(nd.rho, r)?;
                for (v, e) in vals.iter_mut().zip(&nd.e) {
                    *v += a * e;
                }
            }
            out.extend(self.cell.x.iter().map(|x| x + PI * r as f64).zip(vals));
        }
        Ok(out)
    }

    /// Inverse transform at arbitrary points.
    pub fn inverse(&self, sf: &StandardForm, phi: &TransformVector, xs: &[f64]) -> Result<Vec<Complex64>> {
        self.check(phi)?;
        let split: Vec<(f64, i64)> = xs.iter().map(|&x| split_period(x)).collect();
        let x0: Vec<f64> = split.iter().map(|p| p.0).collect();
        let per_node: Vec<Vec<Complex64>> = self
            .nodes
            .par_iter()
            .map(|nd| {
                let (md, rows) = monodromy::monodromy_with(sf, c(nd.mu, 0.0), self.ode_tol, false, &x0)?;
                let (_, adj) = md.cyclic_adjugate(nd.rho);
                Ok(floquet_values(&md.floquet_states(&adj), &rows))
            })
            .collect::<Result<_>>()?;
        let mut out = vec![c(0.0, 0.0); xs.len()];
        for ((nd, s), vals) in self.nodes.iter().zip(&phi.samples).zip(&per_node) {
            let a = Self::coefficient(nd, s.phi);
            for ((o, e), &(_, r)) in out.iter_mut().zip(vals).zip(&split) {
                *o += a * e * power(nd.rho, r)?;
            }
        }
        Ok(out)
    }

    /// `(int |f|^2, sum int p |Phi|^2 dmu, relative defect)`.
    pub fn parseval<F>(&self, f: F, support: (f64, f64)) -> Result<(f64, f64, f64)>
    where
        F: Fn(f64) -> Complex64,
    {
        let (a, b) = support;
        let mut lhs = 0.0;
        for r in CellRule::cells(a, b) {
            for (x, w) in self.cell.x.iter().zip(&self.cell.w) {
                lhs += w * f(x + PI * r as f64).norm_sqr();
            }
        }
        let rhs = self.forward(&f, support)?.weighted_norm_sqr(self);
        let rel = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { (lhs - rhs).abs() / lhs.max(rhs) };
        Ok((lhs, rhs, rel))
    }

    pub fn max_weight_identity_defect(&self) -> f64 {
        self.nodes.iter().map(Node::weight_identity_defect).fold(0.0, f64::max)
    }

    pub fn max_slope_residual(&self) -> f64 {
        self.nodes.iter().map(|nd| nd.slope_residual).fold(0.0, f64::max)
    }

    pub fn max_conj_defect(&self) -> f64 {
        self.nodes.iter().map(|nd| nd.conj_defect).fold(0.0, f64::max)
    }
}

/// One eigenpair of the Bloch operator `L_t`.
#[derive(Debug, Clone)]
pub struct BlochPair {
    pub mu: f64,
    pub k: usize,
    pub solution: FloquetSolution,
    /// `||E||^2` on `[0, pi]` by quadrature and from the closed formula.
    pub norm_sqr: f64,
    pub norm_formula: Complex64,
    pub values: Vec<Complex64>,
}

impl BlochPair {
    pub fn norm_defect(&self) -> f64 {
        (self.norm_formula - self.norm_sqr).norm() / self.norm_sqr
    }
}

#[derive(Debug, Clone)]
pub struct BlochResult {
    pub t: f64,
    pub pairs: Vec<BlochPair>,
    /// Zeros of `Delta(., e^{it})` inside the window by the argument principle.
    pub counted: i64,
    /// `max |<E_a, E_b>| / (||E_a|| ||E_b||)` over distinct pairs.
    pub orthogonality_defect: f64,
}

/// Half-height of the rectangle used to count zeros.
pub const CONTOUR_HEIGHT: f64 = 1e-2;

/// Eigenvalues of `L_t` in `window` with their eigenfunctions.
pub fn bloch_eigs(
    sf: &StandardForm,
    atlas: &BandAtlas,
    t: f64,
    window: (f64, f64),
    cell: &CellRule,
    tol: f64,
) -> Result<BlochResult> {
    let t = t.rem_euclid(TWO_PI);
    if atlas.exceptional_distance(t) < 1e-6 || atlas.exceptional_distance(t + TWO_PI) < 1e-6 {
        return Err(Error::Precondition(format!("t = {t} is exceptional")));
    }
    let (a, b) = window;
    if !(a < b) || a < atlas.mu_range.0 || b > atlas.mu_range.1 {
        return Err(Error::Precondition(format!(
            "window [{a}, {b}] must lie inside the atlas range {:?}",
            atlas.mu_range
        )));
    }
    let rho = Complex64::from_polar(1.0, t);
    let mut roots = Vec::new();
    for band in atlas.bands.iter().filter(|b| !b.is_degenerate() && b.contains_t(t)) {
        let (mu, _, _) = bands::solve_on_band(sf, band, t, tol)?;
        if mu > a && mu < b {
            roots.push((mu, band.k));
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let counted = count_zeros(sf, rho, a, b, tol)?;
    if counted != roots.len() as i64 {
        return Err(Error::MissedRoots { counted, found: roots.len(), lo: a, hi: b });
    }
    let n = sf.n() as i32;
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    let pairs: Vec<BlochPair> = roots
        .par_iter()
        .map(|&(mu, k)| {
            let (md, rows) = monodromy::monodromy_with(sf, c(mu, 0.0), tol, true, &cell.x)?;
            let solution = floquet_vector(&md, rho)?;
            let (det, adj) = md.cyclic_adjugate(rho);
            let de = md.delta_from_adjugate(det, &adj);
            let values = floquet_values(&md.floquet_states(&adj), &rows);
            let norm_sqr: f64 = values.iter().zip(&cell.w).map(|(e, w)| w * e.norm_sqr()).sum();
            let (_, adj_inv) = md.cyclic_adjugate(rho.inv());
            let e0_inv = md.floquet_coefficients(&adj_inv)[0];
            let norm_formula = de.d_mu.expect("derivative requested") * e0_inv * rho.inv() * sign;
            Ok(BlochPair { mu, k, solution, norm_sqr, norm_formula, values })
        })
        .collect::<Result<_>>()?;
    let mut orth: f64 = 0.0;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let ip: Complex64 =
                pairs[i].values.iter().zip(&pairs[j].values).zip(&cell.w).map(|((x, y), w)| x * y.conj() * *w).sum();
            orth = orth.max(ip.norm() / (pairs[i].norm_sqr * pairs[j].norm_sqr).sqrt());
        }
    }
    Ok(BlochResult { t, pairs, counted, orthogonality_defect: orth })
}

/// Winding number of `Delta(., rho)` around the rectangle `[a, b] x [-h, h]`.
pub fn count_zeros(sf: &StandardForm, rho: Complex64, a: f64, b: f64, tol: f64) -> Result<i64> {
    let h = CONTOUR_HEIGHT;
    let delta = |z: Complex64| -> Result<Complex64> {
        let md = monodromy::monodromy_plain(sf, z, tol)?;
        let (det, _) = linalg::det_adjugate(&md.cyclic(rho));
        Ok(det)
    };
    let corners = [c(a, -h), c(b, -h), c(b, h), c(a, h), c(a, -h)];
    let mut total = 0.0;
    for side in corners.windows(2) {
        let (z0, z1) = (side[0], side[1]);
        let pieces = if (z1 - z0).norm() <= 2.0 * h { 8 } else { 512 };
        let pts: Vec<Complex64> = (0..=pieces).map(|i| z0 + (z1 - z0) * (i as f64 / pieces as f64)).collect();
        let vals: Vec<Complex64> = pts.par_iter().map(|&z| delta(z)).collect::<Result<_>>()?;
        let steps: Vec<f64> = (0..pieces)
            .into_par_iter()
            .map(|i| arg_change(&delta, pts[i], pts[i + 1], vals[i], vals[i + 1], 0))
            .collect::<Result<_>>()?;
        total += steps.iter().sum::<f64>();
    }
    Ok((total / TWO_PI).round() as i64)
}

fn arg_change<F>(delta: &F, z0: Complex64, z1: Complex64, d0: Complex64, d1: Complex64, depth: u32) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let step = (d1 / d0).arg();
    if step.abs() < PI / 3.0 {
        return Ok(step);
    }
    if depth > 40 {
        return Err(Error::Precondition(format!("zero of Delta on the contour near {z0}")));
    }
    let zm = (z0 + z1) * 0.5;
    let dm = delta(zm)?;
    Ok(arg_change(delta, z0, zm, d0, dm, depth + 1)? + arg_change(delta, zm, z1, dm, d1, depth + 1)?)
}

/// `F(x, t) = sum_{r=-R}^{R} e^{-irt} f(x + pi r)` on the grid `xs x ts`, indexed `[x][t]`.
pub fn gelfand_forward<F>(f: F, support: (f64, f64), xs: &[f64], ts: &[f64], r_max: i64) -> Result<Vec<Vec<Complex64>>>
where
    F: Fn(f64) -> f64,
{
    let bound = PI * r_max as f64;
    if support.0 < -bound || support.1 > bound {
        return Err(Error::Precondition(format!(
            "support [{}, {}] exceeds [-{r_max} pi, {r_max} pi]",
            support.0, support.1
        )));
    }
    Ok(xs
        .iter()
        .map(|&x| {
            let vals: Vec<f64> = (-r_max..=r_max).map(|r| f(x + PI * r as f64)).collect();
            ts.iter()
                .map(|&t| {
                    (-r_max..=r_max)
                        .zip(&vals)
                        .map(|(r, v)| Complex64::from_polar(*v, -(r as f64) * t))
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Equispaced `t`-nodes on `[0, 2 pi)` for the trapezoid rule.
pub fn gelfand_nodes(count: usize) -> Vec<f64> {
    (0..count).map(|i| TWO_PI * i as f64 / count as f64).collect()
}

/// `f(x + pi r) = (1/2 pi) int e^{irt} F(x, t) dt` by the trapezoid rule on equispaced `ts`.
pub fn gelfand_inverse(grid: &[Vec<Complex64>], ts: &[f64], r: i64) -> Vec<Complex64> {
    let m = ts.len() as f64;
    grid.iter()
        .map(|row| row.iter().zip(ts).map(|(f, &t)| f * Complex64::from_polar(1.0, r as f64 * t)).sum::<Complex64>() / m)
        .collect()
}

/// `(1/2 pi) int int |F|^2` with cell weights `wx` and equispaced `t`.
pub fn gelfand_norm_sqr(grid: &[Vec<Complex64>], wx: &[f64]) -> f64 {
    grid.iter()
        .zip(wx)
        .map(|(row, w)| w * row.iter().map(|z| z.norm_sqr()).sum::<f64>() / row.len() as f64)
        .sum()
}

#[derive(Debug, Clone)]
pub struct SpectralMatrixSample {
    pub mu: f64,
    pub m: CMat,
    pub contributing: Vec<usize>,
    /// `max |M - M^*|`.
    pub hermitian_defect: f64,
    pub conj_defect: f64,
}

impl SpectralMatrixSample {
    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let h = (&self.m + self.m.adjoint()) * c(0.5, 0.0);
        let mut ev: Vec<f64> = linalg::eigenvalues(&h)?.iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(ev)
    }

    pub fn rank(&self, rel: f64) -> Result<usize> {
        let ev = self.eigenvalues()?;
        let top = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(ev.iter().filter(|v| v.abs() > rel * top).count())
    }
}

type RankOne = (Complex64, f64, DVector<Complex64>, DVector<Complex64>);

/// `(rho, p, v(rho), v(rho^{-1}))` at one multiplier.
fn rank_one(md: &MonodromyData, rho: Complex64, de: &monodromy::DeltaEval, adj: &CMat) -> Result<RankOne> {
    let (_, adj_inv) = md.cyclic_adjugate(rho.inv());
    let v = md.floquet_coefficients(adj);
    let v_inv = md.floquet_coefficients(&adj_inv);
    let wt = weights_from(md.mu.re, v_inv[0], de.d_rho, de.d_mu.expect("derivative requested"))?;
    Ok((rho, wt.p, v, v_inv))
}

/// Rank-one factors `p v(rho) v(rho^{-1})^T` for every multiplier at `mu`.
fn rank_one_terms(md: &MonodromyData) -> Result<Vec<RankOne>> {
    let rhos = crate::multipliers::eigen_multipliers(md)?;
    rhos.iter()
        .map(|&rho0| {
            let (rho, de, adj) = polish_multiplier(md, rho0);
            rank_one(md, rho, &de, &adj)
        })
        .collect()
}

/// Newton on `Delta(mu, .)` from an eigenvalue estimate.
fn polish_multiplier(md: &MonodromyData, mut rho: Complex64) -> (Complex64, monodromy::DeltaEval, CMat) {
    let (det, mut adj) = md.cyclic_adjugate(rho);
    let mut de = md.delta_from_adjugate(det, &adj);
    for _ in 0..4 {
        if de.d_rho.norm() == 0.0 {
            break;
        }
        let step = de.delta / de.d_rho;
        if !(step.norm() < 1e-6 * rho.norm()) {
            break;
        }
        let next = rho - step;
        let (det, a) = md.cyclic_adjugate(next);
        let d = md.delta_from_adjugate(det, &a);
        if d.delta.norm() >= de.delta.norm() {
            break;
        }
        (rho, de, adj) = (next, d, a);
    }
    (rho, de, adj)
}

/// `M(mu) = sum_k chi_k(mu) p(mu, rho_k) v(rho_k) v(rho_k^{-1})^T`.
pub fn spectral_matrix(sf: &StandardForm, atlas: &BandAtlas, mu: f64, tol: f64) -> Result<SpectralMatrixSample> {
    let inside = atlas.bands_at(mu);
    if inside.is_empty() {
        return Err(Error::Precondition(format!("mu = {mu} is not in the spectrum")));
    }
    let md = monodromy::monodromy(sf, c(mu, 0.0), tol)?;
    let terms = rank_one_terms(&md)?;
    let order = sf.order();
    let mut m = CMat::zeros(order, order);
    let mut contributing = Vec::new();
    let mut conj_defect: f64 = 0.0;
    for band in &inside {
        // the multiplier on the unit circle whose argument lies in the band's t-interval
        let pick = terms
            .iter()
            .filter(|(rho, ..)| (rho.norm() - 1.0).abs() < 1e-6 && (rho.im >= 0.0) == (band.side > 0))
            .min_by(|x, y| {
                let dx = t_distance(bands::t_of(x.0, band.side), band.t_interval);
                let dy = t_distance(bands::t_of(y.0, band.side), band.t_interval);
                dx.partial_cmp(&dy).unwrap()
            })
            .ok_or_else(|| Error::Precondition(format!("no unit multiplier at mu = {mu}")))?;
        // band multipliers are unimodular
        let unit = pick.0 / pick.0.norm();
        let (det, adj) = md.cyclic_adjugate(unit);
        let (_, p, v, v_inv) = rank_one(&md, unit, &md.delta_from_adjugate(det, &adj), &adj)?;
        let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        conj_defect = conj_defect.max(v.iter().zip(v_inv.iter()).map(|(a, b)| (a.conj() - b).norm()).fold(0.0, f64::max) / vmax);
        m += &v * v_inv.transpose() * c(p, 0.0);
        contributing.push(band.k);
    }
    let hermitian_defect = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectralMatrixSample { mu, m, contributing, hermitian_defect, conj_defect })
}

fn t_distance(t: f64, iv: (f64, f64)) -> f64 {
    if t < iv.0 {
        iv.0 - t
    } else if t > iv.1 {
        t - iv.1
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mu: f64,
    pub u_rec: CMat,
    pub u_direct: CMat,
    pub condition: f64,
    /// `||U_rec - U|| / ||U||` in the max norm.
    pub rel_error: f64,
}

/// `U = C diag(rho) C^{-1}`, the columns of `C` being the best-scaled column of each
/// rank-one factor `M(mu, rho_k)`.
pub fn reconstruct_u(sf: &StandardForm, mu: f64, tol: f64) -> Result<Reconstruction> {
    let md = monodromy::monodromy(sf, c(mu, 0.0), tol)?;
    let terms = rank_one_terms(&md)?;
    for (i, a) in terms.iter().enumerate() {
        for b in &terms[i + 1..] {
            if (a.0 - b.0).norm() < COLLISION * (1.0 + a.0.norm()) {
                return Err(Error::Precondition(format!("multipliers {} and {} collide at mu = {mu}", a.0, b.0)));
            }
        }
    }
    let order = sf.order();
    let mut cm = CMat::zeros(order, order);
    for (k, (_, p, v, v_inv)) in terms.iter().enumerate() {
        let qp = (0..order)
            .max_by(|&a, &b| v_inv[a].norm().partial_cmp(&v_inv[b].norm()).unwrap())
            .expect("nonempty");
        let col = v * (v_inv[qp] * *p);
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateVector(format!("{mu}")));
        }
        cm.set_column(k, &(col / c(norm, 0.0)));
    }
    let condition = linalg::condition_number(&cm);
    if !(condition <= 1e10) {
        return Err(Error::Precondition(format!(
            "eigenvector matrix condition {condition:e} at mu = {mu}: multipliers (nearly) collide"
        )));
    }
    let (det, adj) = linalg::det_adjugate(&cm);
    let inv = adj / det;
    let diag = CMat::from_diagonal(&DVector::from_iterator(order, terms.iter().map(|t| t.0)));
    let u_rec = &cm * diag * inv;
    let norm = md.u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rel_error = (&u_rec - &md.u).iter().map(|z| z.norm()).fold(0.0, f64::max) / norm;
    Ok(Reconstruction { mu, u_rec, u_direct: md.u.clone(), condition, rel_error })
}

/// Pointwise comparison of the general inverse transform with the second-order formula
/// built from `theta`, `phi` and `u_+-`, on the same band meshes.
#[derive(Debug, Clone)]
pub struct HillComparison {
    pub xs: Vec<f64>,
    pub general: Vec<Complex64>,
    pub hill: Vec<Complex64>,
    pub max_deviation: f64,
}

pub fn hill_compare<F>(
    sf: &StandardForm,
    basis: &SpectralBasis,
    f: F,
    support: (f64, f64),
    xs: &[f64],
) -> Result<HillComparison>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    if sf.n() != 1 {
        return Err(Error::Precondition("the comparison formula is for second-order operators".into()));
    }
    let phi = basis.forward(&f, support)?;
    let general = basis.inverse(sf, &phi, xs)?;
    let cells: Vec<i64> = CellRule::cells(support.0, support.1).collect();
    let split: Vec<(f64, i64)> = xs.iter().map(|&x| split_period(x)).collect();
    let mut samples: Vec<f64> = basis.cell.x.clone();
    samples.extend(split.iter().map(|p| p.0));
    let ncell = basis.cell.x.len();
    let fw: Vec<Vec<Complex64>> = cells
        .iter()
        .map(|&r| basis.cell.x.iter().zip(&basis.cell.w).map(|(x, w)| f(x + PI * r as f64) * *w).collect())
        .collect();
    // the upper-half-plane branch covers each spectral band once, with t = tau
    let nodes: Vec<&Node> = basis
        .nodes
        .iter()
        .filter(|nd| nd.rho.im > 0.0)
        .collect();
    let contributions: Vec<Vec<Complex64>> = nodes
        .par_iter()
        .map(|nd| {
            let (md, rows) = monodromy::monodromy_with(sf, c(nd.mu, 0.0), basis.ode_tol, false, &samples)?;
            let u = fundamental_values(&md, &rows);
            let (th_pi, ph_pi, php_pi) = (md.u[(0, 0)], md.u[(0, 1)], md.u[(1, 1)]);
            let up = (th_pi + php_pi) * 0.5;
            let um = (th_pi - php_pi) * 0.5;
            let sin_tau = (1.0 - up * up).sqrt();
            let cp = (um + c(0.0, 1.0) * sin_tau) / ph_pi;
            let cm = (um - c(0.0, 1.0) * sin_tau) / ph_pi;
            let rho_p = up - c(0.0, 1.0) * sin_tau;
            let rho_m = up + c(0.0, 1.0) * sin_tau;
            let y = |i: usize, cc: Complex64| u[i][0] - cc * u[i][1];
            let mut fp = c(0.0, 0.0);
            let mut fm = c(0.0, 0.0);
            for (&r, vals) in cells.iter().zip(&fw) {
                let mut sp = c(0.0, 0.0);
                let mut sm = c(0.0, 0.0);
                for (i, fv) in vals.iter().enumerate() {
                    sp += fv * y(i, cp);
                    sm += fv * y(i, cm);
                }
                fp += sp * power(rho_p, r)?;
                fm += sm * power(rho_m, r)?;
            }
            let weight = nd.gl_weight * nd.dmu_dt.abs() * ph_pi.norm() / (4.0 * PI * sin_tau.norm());
            split
                .iter()
                .enumerate()
                .map(|(i, &(_, r))| {
                    let yp = y(ncell + i, cp) * power(rho_p, r)?;
                    let ym = y(ncell + i, cm) * power(rho_m, r)?;
                    Ok((yp * fm + ym * fp) * weight)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut hill = vec![c(0.0, 0.0); xs.len()];
    for vals in &contributions {
        for (h, v) in hill.iter_mut().zip(vals) {
            *h += v;
        }
    }
    let max_deviation = general.iter().zip(&hill).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(HillComparison { xs: xs.to_vec(), general, hill, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{detect_bands, BandOptions};
    use crate::multipliers::{track_branches, TrackOptions};
    use crate::operator::{expand_standard_form, OperatorSpec};

    const I: Complex64 = Complex64::new(0.0, 1.0);

    fn free_hill() -> StandardForm {
        expand_standard_form(&OperatorSpec::free(1).unwrap())
    }

    fn mathieu() -> StandardForm {
        expand_standard_form(&OperatorSpec::mathieu(1.0))
    }

    fn atlas(sf: &StandardForm, lo: f64, hi: f64) -> BandAtlas {
        let table = track_branches(sf, lo, hi, &TrackOptions::default()).unwrap();
        detect_bands(&table, sf, &BandOptions::default()).unwrap()
    }

    #[test]
    fn free_hill_floquet_vector() {
        let md = monodromy::monodromy(&free_hill(), c(0.25, 0.0), 1e-12).unwrap();
        let fs = floquet_vector(&md, I).unwrap();
        assert!((fs.v[0] - c(2.0, 0.0)).norm() < 1e-10 && (fs.v[1] - I).norm() < 1e-10);
        assert_eq!(fs.e0, fs.v[0]);
        let lit = cofactor_vector(&md.u, I);
        assert!((lit - &fs.v).norm() < 1e-12);
        assert!(matches!(floquet_vector(&md, c(0.3, 0.0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn cofactors_match_adjugate_for_mathieu() {
        let md = monodromy::monodromy(&mathieu(), c(12.0, 0.0), 1e-12).unwrap();
        for rho in crate::multipliers::eigen_multipliers(&md).unwrap() {
            let fs = floquet_vector(&md, rho).unwrap();
            let lit = cofactor_vector(&md.u, rho);
            assert!((lit - &fs.v).norm() < 1e-9 * fs.v.norm());
            // n = 1: v = (phi(pi), -(theta(pi) - rho))
            assert!((fs.v[0] - md.u[(0, 1)]).norm() < 1e-9);
            assert!((fs.v[1] + md.u[(0, 0)] - rho).norm() < 1e-9);
        }
    }

    #[test]
    fn eval_e_uses_quasi_periodicity() {
        let sf = free_hill();
        let md = monodromy::monodromy(&sf, c(0.25, 0.0), 1e-12).unwrap();
        let fs = floquet_vector(&md, I).unwrap();
        let xs = [3.0 * PI, 0.0, 1.0, -2.5];
        let e = eval_e(&sf, &fs, &xs, 1e-12).unwrap();
        assert!((e[0] + 2.0 * I).norm() < 1e-10);
        assert!((e[1] - fs.e0).norm() < 1e-12);
        for (x, v) in xs.iter().zip(&e) {
            assert!((v - Complex64::from_polar(2.0, x / 2.0)).norm() < 1e-10, "x = {x}");
        }
        let grow = FloquetSolution { rho: c(2.0, 0.0), ..fs };
        assert!(matches!(eval_e(&sf, &grow, &[2000.0 * PI], 1e-12), Err(Error::Overflow(_))));
    }

    #[test]
    fn mathieu_solution_is_quasi_periodic() {
        let sf = mathieu();
        let md = monodromy::monodromy(&sf, c(3.0, 0.0), 1e-12).unwrap();
        for rho in crate::multipliers::eigen_multipliers(&md).unwrap() {
            let fs = floquet_vector(&md, rho).unwrap();
            let xs: Vec<f64> = (0..12).map(|i| 0.26 * i as f64).collect();
            let e = eval_e(&sf, &fs, &xs, 1e-12).unwrap();
            // the fundamental system integrated over [0, 2 pi) directly
            let (md2, rows) =
                monodromy::monodromy_with(&sf, md.mu, 1e-12, false, &xs.iter().map(|x| x.rem_euclid(PI)).collect::<Vec<_>>()).unwrap();
            let u = fundamental_values(&md2, &rows);
            let top = e.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (i, x) in xs.iter().enumerate() {
                let base: Complex64 = fs.v.iter().zip(u[i].iter()).map(|(a, b)| a * b).sum();
                let r = (x / PI).floor() as i32;
                let direct = md.u.pow(r as u32) * &fs.v;
                let direct: Complex64 = direct.iter().zip(u[i].iter()).map(|(a, b)| a * b).sum();
                assert!((e[i] - base * rho.powi(r)).norm() < 1e-7 * top);
                assert!((e[i] - direct).norm() < 1e-7 * top, "x = {x}");
            }
        }
    }

    #[test]
    fn free_hill_weights() {
        let md = monodromy::monodromy(&free_hill(), c(0.25, 0.0), 1e-12).unwrap();
        let wt = weights(&md, I).unwrap();
        assert!((wt.p - 1.0 / (8.0 * PI)).abs() < 1e-12);
        assert!((wt.w - 1.0 / (4.0 * PI)).abs() < 1e-12);
        assert!((wt.d_rho - 2.0 * I).norm() < 1e-10);
        assert!((wt.d_mu - 2.0 * PI * I).norm() < 1e-9);
        // p |mu'| = w / 2 pi with |mu'| = 1 / pi
        assert!((wt.p / PI - wt.w / (2.0 * PI)).abs() < 1e-12);
        let plain = monodromy::monodromy_plain(&free_hill(), c(0.25, 0.0), 1e-12).unwrap();
        assert!(weights(&plain, I).is_err());
    }

    #[test]
    fn bump_is_compact() {
        let b = Bump::default();
        assert_eq!(b.eval(b.center + b.radius), 0.0);
        assert_eq!(b.eval(-10.0), 0.0);
        assert!((b.eval(b.center) - 1.0).abs() < 1e-15);
        assert_eq!(CellRule::cells(-4.7, 5.3).collect::<Vec<_>>(), vec![-2, -1, 0, 1]);
        assert_eq!(CellRule::cells(0.0, PI).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn free_hill_transform_pair() {
        let sf = free_hill();
        let at = atlas(&sf, -0.5, 40.0);
        let opts = ExpansionOptions { mesh_n: 16, ..Default::default() };
        let basis = SpectralBasis::build(&sf, &at, &opts).unwrap();
        assert!(basis.max_weight_identity_defect() < 1e-8);
        assert!(basis.max_conj_defect() < 1e-8);
        let b = Bump { center: 0.3, width: 0.8, radius: 4.0 };
        let f = |x: f64| c(b.eval(x), 0.0);
        let (lhs, rhs, rel) = basis.parseval(f, b.support()).unwrap();
        assert!((lhs - b.norm_sqr()).abs() < 1e-10);
        assert!(rel < 1e-6, "lhs {lhs} rhs {rhs}");

        // Phi against the classical Fourier transform: E = (sin pi k / k) e^{+-ikx}
        let phi = basis.forward(f, b.support()).unwrap();
        let nd = &basis.nodes[5];
        let k = nd.mu.sqrt();
        let sign = if nd.rho.im > 0.0 { 1.0 } else { -1.0 };
        let (xq, wq) = quadrature::composite(b.support().0, b.support().1, 64, 16);
        let ft: Complex64 = xq.iter().zip(&wq).map(|(x, w)| Complex64::from_polar(w * b.eval(*x), -sign * k * x)).sum();
        let norm = (PI * k).sin().abs() / k;
        assert!((phi.samples[5].phi.norm() - norm * ft.norm()).abs() < 1e-9);

        let zero = basis.forward(|_| c(0.0, 0.0), b.support()).unwrap();
        assert!(zero.samples.iter().all(|s| s.phi == c(0.0, 0.0)));
        assert_eq!(basis.parseval(|_| c(0.0, 0.0), b.support()).unwrap(), (0.0, 0.0, 0.0));

        let back = basis.inverse(&sf, &phi, &[0.3, -2.0, 7.0]).unwrap();
        for (x, v) in [0.3, -2.0, 7.0].iter().zip(&back) {
            assert!((v - f(*x)).norm() < 1e-4, "x = {x}: {v}");
        }
        let lin = basis.forward(|x| f(x) * 2.0 + c(0.0, b.eval(x - 0.5)), (b.support().0, b.support().1 + 0.5)).unwrap();
        let other = basis.forward(|x| c(0.0, b.eval(x - 0.5)), (b.support().0, b.support().1 + 0.5)).unwrap();
        for ((l, a), o) in lin.samples.iter().zip(&phi.samples).zip(&other.samples) {
            assert!((l.phi - a.phi * 2.0 - o.phi).norm() < 1e-12 * (1.0 + l.phi.norm()));
        }
    }

    #[test]
    fn free_hill_bloch() {
        let sf = free_hill();
        let at = atlas(&sf, -0.5, 25.0);
        let res = bloch_eigs(&sf, &at, PI / 2.0, (0.0, 20.0), &CellRule::default(), 1e-12).unwrap();
        let mus: Vec<f64> = res.pairs.iter().map(|p| p.mu).collect();
        for (m, e) in mus.iter().zip([0.25, 2.25, 6.25, 12.25]) {
            assert!((m - e).abs() < 1e-9, "{mus:?}");
        }
        assert_eq!(mus.len(), 4);
        assert_eq!(res.counted, 4);
        let first = &res.pairs[0];
        assert!((first.norm_sqr - 4.0 * PI).abs() < 1e-9);
        assert!((first.norm_formula - c(4.0 * PI, 0.0)).norm() < 1e-8);
        assert!(res.pairs.iter().all(|p| p.norm_defect() < 1e-6));
        assert!(res.orthogonality_defect < 1e-8);
        assert!(matches!(
            bloch_eigs(&sf, &at, PI + 1e-8, (0.0, 20.0), &CellRule::default(), 1e-12),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gelfand_round_trip_and_norm() {
        let b = Bump::default();
        let cell = CellRule::default();
        let ts = gelfand_nodes(256);
        let grid = gelfand_forward(|x| b.eval(x), b.support(), &cell.x, &ts, 8).unwrap();
        for r in -2..=2 {
            let back = gelfand_inverse(&grid, &ts, r);
            for (x, v) in cell.x.iter().zip(&back) {
                assert!((v - b.eval(x + PI * r as f64)).norm() < 1e-10);
            }
        }
        assert!((gelfand_norm_sqr(&grid, &cell.w) - b.norm_sqr()).abs() < 1e-8 * b.norm_sqr());
        // support inside one cell: F is t-independent
        let narrow = Bump { center: 1.5, width: 0.3, radius: 1.2 };
        let g = gelfand_forward(|x| narrow.eval(x), narrow.support(), &cell.x, &ts[..5], 2).unwrap();
        for (x, row) in cell.x.iter().zip(&g) {
            assert!(row.iter().all(|v| (v - narrow.eval(*x)).norm() < 1e-15));
        }
        assert!(gelfand_forward(|x| b.eval(x), b.support(), &cell.x, &ts, 1).is_err());
    }

    #[test]
    fn free_hill_spectral_matrix_and_reconstruction() {
        let sf = free_hill();
        let at = atlas(&sf, -0.5, 5.0);
        let s = spectral_matrix(&sf, &at, 0.25, 1e-12).unwrap();
        assert!((s.m.trace() - c(5.0 / (4.0 * PI), 0.0)).norm() < 1e-10);
        assert!(s.hermitian_defect < 1e-10);
        assert_eq!(s.rank(1e-8).unwrap(), 2);
        assert!(s.eigenvalues().unwrap()[0] > -1e-10);
        let r = reconstruct_u(&sf, 0.25, 1e-12).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 0.0), c(-0.5, 0.0), c(0.0, 0.0)]);
        assert!((r.u_rec - expect).norm() < 1e-8);
        assert!(spectral_matrix(&sf, &at, -0.2, 1e-12).is_err());
        assert!(reconstruct_u(&sf, 1.0 + 1e-14, 1e-12).is_err());
    }

    #[test]
    fn free_hill_formula_matches_general_inverse() {
        let sf = free_hill();
        let at = atlas(&sf, -0.5, 30.0);
        let basis = SpectralBasis::build(&sf, &at, &ExpansionOptions { mesh_n: 12, ..Default::default() }).unwrap();
        let b = Bump::default();
        let xs: Vec<f64> = (0..9).map(|i| -2.0 * PI + 0.5 * PI * i as f64 + 0.05).collect();
        let hc = hill_compare(&sf, &basis, |x| c(b.eval(x), 0.0), b.support(), &xs).unwrap();
        assert!(hc.max_deviation < 1e-8, "{}", hc.max_deviation);
    }
}
