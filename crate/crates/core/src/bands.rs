//! Band structure: maximal intervals where a multiplier branch has unit modulus, their
//! refined edges, and the parametrization `rho_k(mu(t)) = e^{it}` of each band.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::monodromy::{self, delta_eval};
use crate::multipliers::{self, BranchTable};
use crate::operator::StandardForm;
use crate::quadrature;
use crate::roots;

const TWO_PI: f64 = 2.0 * PI;
/// A unit multiplier with `|Im rho|` below this is treated as sitting at `+-1`.
const AXIS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub mu: f64,
    pub rho: Complex64,
    pub t: f64,
    /// `Delta'_rho` vanishes at the edge (to `1e-6` of the polynomial scale).
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct Band {
    pub k: usize,
    pub j: usize,
    pub mu_interval: (f64, f64),
    pub t_interval: (f64, f64),
    /// Sign of `mu'(t)`; zero for a single-point band.
    pub orientation: i32,
    /// `+1` when the multipliers lie in the closed upper half plane, `-1` otherwise.
    pub side: i32,
    /// Lower and upper edge in `mu`.
    pub edges: [EdgePoint; 2],
    /// False when an end of the band is the boundary of the scanned range.
    pub complete: bool,
    /// `(t, mu)` samples ascending in `t`, used to seed Newton iterations.
    pub seeds: Vec<(f64, f64)>,
}

impl Band {
    pub fn is_degenerate(&self) -> bool {
        self.orientation == 0
    }

    pub fn contains_mu(&self, mu: f64) -> bool {
        mu > self.mu_interval.0 && mu < self.mu_interval.1
    }

    pub fn contains_t(&self, t: f64) -> bool {
        t > self.t_interval.0 && t < self.t_interval.1
    }

    /// Linear interpolation of `mu(t)` through the seeds.
    pub fn seed_mu(&self, t: f64) -> f64 {
        let s = &self.seeds;
        if s.len() == 1 {
            return s[0].1;
        }
        let i = s.partition_point(|p| p.0 < t).clamp(1, s.len() - 1);
        let (a, b) = (s[i - 1], s[i]);
        if b.0 == a.0 {
            return a.1;
        }
        let w = ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
        a.1 + w * (b.1 - a.1)
    }
}

#[derive(Debug, Clone)]
pub struct BandAtlas {
    pub n: usize,
    pub mu_range: (f64, f64),
    /// Sorted by `(k, j)`.
    pub bands: Vec<Band>,
    pub exceptional_t: Vec<f64>,
    pub spectrum: Vec<(f64, f64)>,
}

impl BandAtlas {
    /// Non-degenerate bands whose interior contains `mu`.
    pub fn bands_at(&self, mu: f64) -> Vec<&Band> {
        self.bands.iter().filter(|b| !b.is_degenerate() && b.contains_mu(mu)).collect()
    }

    /// Distance from `t` to the nearest exceptional value.
    pub fn exceptional_distance(&self, t: f64) -> f64 {
        self.exceptional_t.iter().map(|e| (e - t).abs()).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BandOptions {
    pub band_tol: f64,
    pub ode_tol: f64,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions { band_tol: 1e-7, ode_tol: 1e-12 }
    }
}

/// Argument of a unit multiplier as a point of `[0, pi]` (upper side) or `[pi, 2 pi]`.
pub fn t_of(rho: Complex64, side: i32) -> f64 {
    let a = rho.arg();
    if side >= 0 {
        if a >= 0.0 {
            a
        } else if a > -PI / 2.0 {
            0.0
        } else {
            PI
        }
    } else if a <= 0.0 {
        TWO_PI + a
    } else if a < PI / 2.0 {
        TWO_PI
    } else {
        PI
    }
}

fn sign_of(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

struct Ctx<'a> {
    sf: &'a StandardForm,
    table: &'a BranchTable,
    tol: f64,
    band_tol: f64,
}

impl Ctx<'_> {
    /// `Delta(mu, sigma)` for real `sigma`; real for real `mu`.
    fn f(&self, mu: f64, sigma: f64) -> Result<f64> {
        let md = monodromy::monodromy_plain(self.sf, c(mu, 0.0), self.tol)?;
        Ok(delta_eval(&md, c(sigma, 0.0)).delta.re)
    }

    /// `d Delta / d mu` at `(mu, sigma)`.
    fn g(&self, mu: f64, sigma: f64) -> Result<f64> {
        let md = monodromy::monodromy(self.sf, c(mu, 0.0), self.tol)?;
        Ok(delta_eval(&md, c(sigma, 0.0)).d_mu.expect("derivative requested").re)
    }

    /// Multiplier of branch `k` at `mu`: the eigenvalue closest to the tabulated branch.
    fn value(&self, k: usize, mu: f64) -> Result<Complex64> {
        let vals = multipliers::multipliers_at(self.sf, mu, self.tol)?;
        let guess = self.table.interpolate(k, mu);
        Ok(vals
            .into_iter()
            .min_by(|a, b| {
                multipliers::log_dist(*a, guess).partial_cmp(&multipliers::log_dist(*b, guess)).unwrap()
            })
            .expect("nonempty multiplier set"))
    }

    fn dist(&self, k: usize, mu: f64) -> Result<f64> {
        Ok((self.value(k, mu)?.norm() - 1.0).abs())
    }

    fn xtol(mu: f64) -> f64 {
        4e-16 * (1.0 + mu.abs())
    }

    /// Edge at `rho = sigma` between an in-band point and an outside point. `None` when
    /// the sign structure of `Delta(., sigma)` does not show an edge there.
    fn edge_at_real(&self, mu_in: f64, mu_out: f64, sigma: f64) -> Result<Option<f64>> {
        let fi = self.f(mu_in, sigma)?;
        let fo = self.f(mu_out, sigma)?;
        let f = |m: f64| self.f(m, sigma);
        if fi * fo < 0.0 {
            return roots::illinois(f, mu_in, fi, mu_out, fo, Self::xtol(mu_in)).map(Some);
        }
        let gi = self.g(mu_in, sigma)?;
        let go = self.g(mu_out, sigma)?;
        if gi * go >= 0.0 {
            return Ok(None);
        }
        let m = roots::illinois(|x| self.g(x, sigma), mu_in, gi, mu_out, go, Self::xtol(mu_in))?;
        let fm = self.f(m, sigma)?;
        if fm * fi < 0.0 {
            roots::illinois(f, mu_in, fi, m, fm, Self::xtol(mu_in)).map(Some)
        } else {
            Ok(Some(m))
        }
    }

    /// Refined edge of branch `k` between `mu_in` (in the band) and `mu_out`.
    fn refine_edge(&self, k: usize, mu_in: f64, mu_out: f64, side: i32) -> Result<EdgePoint> {
        let r_in = self.table.interpolate(k, mu_in);
        let r_out = self.table.interpolate(k, mu_out);
        let sigma = if (r_in + r_out).re >= 0.0 { 1.0 } else { -1.0 };
        if let Some(mu) = self.edge_at_real(mu_in, mu_out, sigma)? {
            if (self.value(k, mu)? - sigma).norm() < 1e-3 {
                return self.edge_point(mu, c(sigma, 0.0), side);
            }
        }
        // edge away from +-1: bisect on the unit-modulus predicate
        let (mut a, mut b) = (mu_in, mu_out);
        while (b - a).abs() > 1e-13 * (1.0 + a.abs()) {
            let m = 0.5 * (a + b);
            if self.dist(k, m)? < self.band_tol {
                a = m;
            } else {
                b = m;
            }
        }
        let r = self.value(k, a)?;
        let (mu, rho) = self.double_root(a, r / r.norm())?.unwrap_or((a, r / r.norm()));
        self.edge_point(mu, rho, side)
    }

    /// Newton polish of a double multiplier: `P(rho) = P'(rho) = 0` for the characteristic
    /// polynomial `P` of `U(mu)`, with `mu` kept real. `None` if it does not settle nearby.
    fn double_root(&self, mu0: f64, rho0: Complex64) -> Result<Option<(f64, Complex64)>> {
        let coeffs = |mu: f64| -> Result<Vec<Complex64>> {
            let md = monodromy::monodromy_plain(self.sf, c(mu, 0.0), self.tol)?;
            Ok(monodromy::char_poly(&md)?.coeffs)
        };
        let (mut mu, mut rho) = (mu0, rho0);
        for _ in 0..30 {
            let p = coeffs(mu)?;
            let h = 1e-6 * (1.0 + mu.abs());
            let (pp, pm) = (coeffs(mu + h)?, coeffs(mu - h)?);
            let pmu: Vec<Complex64> = pp.iter().zip(&pm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let d1 = linalg::poly_derivative(&p);
            let d2 = linalg::poly_derivative(&d1);
            let (f1, f2) = (linalg::poly_eval(&p, rho), linalg::poly_eval(&d1, rho));
            // Jacobian columns: d/dmu and d/drho
            let (a11, a12) = (linalg::poly_eval(&pmu, rho), f2);
            let (a21, a22) = (linalg::poly_eval(&linalg::poly_derivative(&pmu), rho), linalg::poly_eval(&d2, rho));
            let det = a11 * a22 - a12 * a21;
            if det.norm() == 0.0 {
                return Ok(None);
            }
            let dmu = (f1 * a22 - a12 * f2) / det;
            let drho = (a11 * f2 - a21 * f1) / det;
            mu -= dmu.re;
            rho -= drho;
            if (mu - mu0).abs() > 1e-6 * (1.0 + mu0.abs()) || (rho - rho0).norm() > 1e-2 {
                return Ok(None);
            }
            if dmu.re.abs() <= 1e-14 * (1.0 + mu.abs()) && drho.norm() < 1e-10 {
                return Ok(Some((mu, rho / rho.norm())));
            }
        }
        Ok(None)
    }

    fn edge_point(&self, mu: f64, rho: Complex64, side: i32) -> Result<EdgePoint> {
        let md = monodromy::monodromy_plain(self.sf, c(mu, 0.0), self.tol)?;
        let scale = monodromy::char_poly(&md)?.scale().max(1.0);
        let de = delta_eval(&md, rho);
        Ok(EdgePoint { mu, rho, t: t_of(rho, side), degenerate: de.d_rho.norm() <= 1e-6 * scale })
    }

    /// Boundary point of the scanned range.
    fn range_point(&self, k: usize, i: usize, side: i32) -> EdgePoint {
        let rho = self.table.rho[k][i];
        EdgePoint { mu: self.table.mu_grid[i], rho, t: t_of(rho, side), degenerate: false }
    }

    /// `|E(0; mu, rho^{-1})| / |v(rho^{-1})|`.
    fn eta(&self, mu: f64, rho: Complex64) -> Result<f64> {
        let md = monodromy::monodromy_plain(self.sf, c(mu, 0.0), self.tol)?;
        let (_, adj) = md.cyclic_adjugate(1.0 / rho);
        let v = md.floquet_coefficients(&adj);
        Ok(v[0].norm() / v.norm().max(1e-300))
    }
}

struct Piece {
    first: usize,
    last: usize,
    side: i32,
}

/// Scans the branch table for unit-modulus runs, refines every edge, and assembles
/// the atlas with the exceptional arguments and the merged spectrum.
pub fn detect_bands(table: &BranchTable, sf: &StandardForm, opts: &BandOptions) -> Result<BandAtlas> {
    monodromy::check_tol(opts.ode_tol)?;
    let ctx = Ctx { sf, table, tol: opts.ode_tol, band_tol: opts.band_tol };
    let npts = table.mu_grid.len();
    let grid = &table.mu_grid;
    let mut bands = Vec::new();
    let mut exceptional = vec![0.0, PI, TWO_PI];

    for k in 0..table.rho.len() {
        let row = &table.rho[k];
        let on: Vec<bool> = row.iter().map(|r| (r.norm() - 1.0).abs() < opts.band_tol).collect();
        let sgn: Vec<i32> = row.iter().map(|r| if r.im.abs() < AXIS_TOL { 0 } else { sign_of(r.im) }).collect();

        let mut pieces: Vec<Piece> = Vec::new();
        for i in 0..npts {
            if on[i] && sgn[i] != 0 {
                if let Some(p) = pieces.last_mut() {
                    if p.side == sgn[i] && p.last + 1 == i {
                        p.last = i;
                        continue;
                    }
                }
                pieces.push(Piece { first: i, last: i, side: sgn[i] });
            }
        }

        let mut kbands: Vec<(Band, usize, usize)> = Vec::new();
        for p in &pieces {
            let lower = if p.first == 0 {
                None
            } else {
                let mut o = p.first - 1;
                while o > 0 && on[o] && sgn[o] == 0 {
                    o -= 1;
                }
                Some(ctx.refine_edge(k, grid[p.first], grid[o], p.side)?)
            };
            let upper = if p.last + 1 == npts {
                None
            } else {
                let mut o = p.last + 1;
                while o + 1 < npts && on[o] && sgn[o] == 0 {
                    o += 1;
                }
                Some(ctx.refine_edge(k, grid[p.last], grid[o], p.side)?)
            };
            let complete = lower.is_some() && upper.is_some();
            let lo = lower.unwrap_or_else(|| ctx.range_point(k, p.first, p.side));
            let hi = upper.unwrap_or_else(|| ctx.range_point(k, p.last, p.side));
            let mut seeds: Vec<(f64, f64)> =
                (p.first..=p.last).map(|i| (t_of(row[i], p.side), grid[i])).collect();
            seeds.push((lo.t, lo.mu));
            seeds.push((hi.t, hi.mu));
            seeds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
            seeds.dedup_by(|a, b| a.0 == b.0);
            let orientation = sign_of(hi.t - lo.t);
            let band = Band {
                k,
                j: 0,
                mu_interval: (lo.mu, hi.mu),
                t_interval: (lo.t.min(hi.t), lo.t.max(hi.t)),
                orientation,
                side: p.side,
                edges: [lo, hi],
                complete,
                seeds,
            };
            kbands.push((band, p.first, p.last));
        }

        // single-point bands: isolated touches of the unit circle
        let in_piece = |i: usize| pieces.iter().any(|p| i >= p.first && i <= p.last);
        let d: Vec<f64> = row.iter().map(|r| (r.norm() - 1.0).abs()).collect();
        for i in 1..npts.saturating_sub(1) {
            if in_piece(i) || in_piece(i - 1) || in_piece(i + 1) {
                continue;
            }
            let touch = on[i] && sgn[i] == 0;
            let local_min = d[i] < 1e-1 && d[i] <= d[i - 1] && d[i] <= d[i + 1];
            if !(touch || local_min) {
                continue;
            }
            if let Some(pt) = degenerate_point(&ctx, k, grid[i - 1], grid[i + 1], row[i])? {
                let seen = kbands.iter().any(|(b, _, _)| (b.mu_interval.0 - pt.mu).abs() < 1e-8 * (1.0 + pt.mu.abs()));
                if seen {
                    continue;
                }
                let side = if pt.rho.im < 0.0 { -1 } else { 1 };
                let pt = EdgePoint { t: t_of(pt.rho, side), ..pt };
                let band = Band {
                    k,
                    j: 0,
                    mu_interval: (pt.mu, pt.mu),
                    t_interval: (pt.t, pt.t),
                    orientation: 0,
                    side,
                    edges: [pt, pt],
                    complete: true,
                    seeds: vec![(pt.t, pt.mu)],
                };
                kbands.push((band, i, i));
            }
        }
        kbands.sort_by(|a, b| a.0.mu_interval.0.partial_cmp(&b.0.mu_interval.0).unwrap());

        for (j, (mut band, first, last)) in kbands.into_iter().enumerate() {
            band.j = j;
            for e in &band.edges {
                if band.complete || e.degenerate {
                    exceptional.push(e.t);
                }
            }
            if !band.is_degenerate() {
                exceptional.extend(interior_kernel_zeros(&ctx, &band, first, last)?);
            }
            bands.push(band);
        }
    }

    exceptional.sort_by(|a, b| a.partial_cmp(b).unwrap());
    exceptional.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let range = (grid[0], grid[npts - 1]);
    let spectrum = merge_intervals(bands.iter().map(|b| b.mu_interval).collect());
    Ok(BandAtlas { n: table.n, mu_range: range, bands, exceptional_t: exceptional, spectrum })
}

/// Refines a candidate touch point of branch `k` with the unit circle inside `[a, b]`.
fn degenerate_point(ctx: &Ctx, k: usize, a: f64, b: f64, rho: Complex64) -> Result<Option<EdgePoint>> {
    let (m, dmin) = roots::golden_min(|x| ctx.dist(k, x), a, b, 1e-13 * (1.0 + a.abs().max(b.abs())))?;
    if dmin > 1e-2 {
        return Ok(None);
    }
    let sigma = if rho.re >= 0.0 { 1.0 } else { -1.0 };
    let mut mu = m;
    let fa = ctx.f(a, sigma)?;
    let fb = ctx.f(b, sigma)?;
    if fa * fb < 0.0 {
        let r = roots::illinois(|x| ctx.f(x, sigma), a, fa, b, fb, Ctx::xtol(m))?;
        if (ctx.value(k, r)? - sigma).norm() < 1e-2 {
            mu = r;
        }
    }
    let r = ctx.value(k, mu)?;
    let unit = if (r - sigma).norm() < 1e-2 { c(sigma, 0.0) } else { r / r.norm() };
    let md = monodromy::monodromy_plain(ctx.sf, c(mu, 0.0), ctx.tol)?;
    let scale = monodromy::char_poly(&md)?.scale().max(1.0);
    let de = delta_eval(&md, unit);
    if de.delta.norm() > 1e-10 * scale || de.d_rho.norm() > 1e-6 * scale {
        return Ok(None);
    }
    let pt = ctx.edge_point(mu, unit, if unit.im < 0.0 { -1 } else { 1 })?;
    Ok(Some(pt))
}

/// Arguments at which `E(0; mu, rho^{-1})` vanishes inside a band, from local minima of
/// the normalized kernel value on the table points, refined by golden section.
fn interior_kernel_zeros(ctx: &Ctx, band: &Band, first: usize, last: usize) -> Result<Vec<f64>> {
    if last < first + 2 {
        return Ok(Vec::new());
    }
    let grid = &ctx.table.mu_grid;
    let row = &ctx.table.rho[band.k];
    let eta: Vec<f64> =
        (first..=last).into_par_iter().map(|i| ctx.eta(grid[i], row[i])).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for i in 1..eta.len() - 1 {
        if eta[i] < 1e-2 && eta[i] <= eta[i - 1] && eta[i] <= eta[i + 1] {
            let (a, b) = (grid[first + i - 1], grid[first + i + 1]);
            let (m, v) = roots::golden_min(
                |x| ctx.value(band.k, x).and_then(|r| ctx.eta(x, r)),
                a,
                b,
                1e-12 * (1.0 + a.abs()),
            )?;
            if v < 1e-6 {
                out.push(t_of(ctx.value(band.k, m)?, band.side));
            }
        }
    }
    Ok(out)
}

/// Sorted union of intervals; touching or overlapping intervals are merged.
pub fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in iv {
        if let Some(last) = out.last_mut() {
            if lo <= last.1 + 1e-9 * (1.0 + last.1.abs()) {
                last.1 = last.1.max(hi);
                continue;
            }
        }
        out.push((lo, hi));
    }
    out
}

/// Merged spectrum of the atlas, single-point bands included.
pub fn spectrum_union(atlas: &BandAtlas) -> Vec<(f64, f64)> {
    merge_intervals(atlas.bands.iter().map(|b| b.mu_interval).collect())
}

/// Gauss–Legendre mesh of a band in `t` with the solved `mu(t)` and `mu'(t)`.
#[derive(Debug, Clone)]
pub struct BandMesh {
    pub k: usize,
    pub j: usize,
    pub t: Vec<f64>,
    pub gl_weight: Vec<f64>,
    pub mu: Vec<f64>,
    pub dmu_dt: Vec<f64>,
    /// Largest `|Im mu'| / |mu'|` seen before taking the real part.
    pub imag_defect: f64,
}

/// Solves `Delta(mu, e^{it}) = 0` for real `mu` in the band. Returns `(mu, mu'(t), |Im mu'|/|mu'|)`.
pub fn solve_on_band(sf: &StandardForm, band: &Band, t: f64, tol: f64) -> Result<(f64, f64, f64)> {
    let rho = Complex64::from_polar(1.0, t);
    let (lo, hi) = band.mu_interval;
    let slack = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
    let finish = |de: monodromy::DeltaEval| {
        let dmu = de.d_mu.expect("derivative requested");
        let d = -c(0.0, 1.0) * rho * de.d_rho / dmu;
        (d.re, d.im.abs() / d.norm().max(1e-300))
    };
    let mut mu = band.seed_mu(t);
    for _ in 0..40 {
        let md = monodromy::monodromy(sf, c(mu, 0.0), tol)?;
        let de = delta_eval(&md, rho);
        let step = (de.delta / de.d_mu.expect("derivative requested")).re;
        let next = mu - step;
        if !(next > lo - slack && next < hi + slack) || !next.is_finite() {
            break;
        }
        mu = next;
        if step.abs() <= 1e-11 * (1.0 + mu.abs()) {
            let md = monodromy::monodromy(sf, c(mu, 0.0), tol)?;
            let (d, defect) = finish(delta_eval(&md, rho));
            return Ok((mu, d, defect));
        }
    }
    // bracketed fallback on the real function e^{-int} Delta(mu, e^{it})
    let n = sf.n() as i32;
    let phase = Complex64::from_polar(1.0, -(n as f64) * t);
    let h = |m: f64| -> Result<f64> {
        let md = monodromy::monodromy_plain(sf, c(m, 0.0), tol)?;
        Ok((delta_eval(&md, rho).delta * phase).re)
    };
    let (a, b) = (lo + slack, hi - slack);
    let (fa, fb) = (h(a)?, h(b)?);
    if fa * fb >= 0.0 {
        return Err(Error::NewtonFailure(format!("t = {t} escaped band [{lo}, {hi}]")));
    }
    let root = roots::illinois(h, a, fa, b, fb, 4e-16 * (1.0 + lo.abs().max(hi.abs())))?;
    let md = monodromy::monodromy(sf, c(root, 0.0), tol)?;
    let (d, defect) = finish(delta_eval(&md, rho));
    Ok((root, d, defect))
}

/// Solves the band at `nodes` Gauss–Legendre points of its `t`-interval.
pub fn parametrize_band(sf: &StandardForm, band: &Band, nodes: usize, tol: f64) -> Result<BandMesh> {
    if band.is_degenerate() {
        return Err(Error::Precondition("single-point band has no parametrization".into()));
    }
    if nodes < 2 {
        return Err(Error::Precondition("mesh needs at least two nodes".into()));
    }
    monodromy::check_tol(tol)?;
    let (t, w) = quadrature::gauss_legendre_on(nodes, band.t_interval.0, band.t_interval.1);
    let solved: Vec<(f64, f64, f64)> =
        t.par_iter().map(|&ti| solve_on_band(sf, band, ti, tol)).collect::<Result<_>>()?;
    let mut mesh = BandMesh {
        k: band.k,
        j: band.j,
        t,
        gl_weight: w,
        mu: Vec::with_capacity(nodes),
        dmu_dt: Vec::with_capacity(nodes),
        imag_defect: 0.0,
    };
    for (mu, d, defect) in solved {
        if sign_of(d) != band.orientation {
            return Err(Error::Precondition(format!(
                "mu'(t) changes sign inside band ({}, {}) near mu = {mu}: missed edge",
                band.k, band.j
            )));
        }
        mesh.mu.push(mu);
        mesh.dmu_dt.push(d);
        mesh.imag_defect = mesh.imag_defect.max(defect);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipliers::{track_branches, TrackOptions};
    use crate::operator::{expand_standard_form, OperatorSpec};

    fn free(n: usize) -> StandardForm {
        expand_standard_form(&OperatorSpec::free(n).unwrap())
    }

    #[test]
    fn free_hill_bands_are_squares() {
        let sf = free(1);
        let table = track_branches(&sf, -0.5, 30.0, &TrackOptions::default()).unwrap();
        let atlas = detect_bands(&table, &sf, &BandOptions::default()).unwrap();
        for k in 0..2 {
            let ks: Vec<&Band> = atlas.bands.iter().filter(|b| b.k == k).collect();
            assert_eq!(ks.len(), 6, "branch {k}: {ks:?}");
            for (m, b) in ks.iter().enumerate() {
                assert!((b.mu_interval.0 - (m * m) as f64).abs() < 1e-8, "{:?}", b.mu_interval);
                if m < 5 {
                    assert!((b.mu_interval.1 - ((m + 1) * (m + 1)) as f64).abs() < 1e-8);
                    assert!(b.complete);
                    assert!(b.t_interval.1 - b.t_interval.0 > PI - 1e-6);
                } else {
                    assert!(!b.complete);
                }
            }
        }
        assert_eq!(atlas.spectrum.len(), 1);
        assert!(atlas.spectrum[0].0.abs() < 1e-8 && atlas.spectrum[0].1 == 30.0);
        for t in [0.0, PI, TWO_PI] {
            assert!(atlas.exceptional_distance(t) < 1e-12);
        }
    }

    #[test]
    fn free_hill_parametrization() {
        let sf = free(1);
        let table = track_branches(&sf, 0.5, 10.0, &TrackOptions::default()).unwrap();
        let atlas = detect_bands(&table, &sf, &BandOptions::default()).unwrap();
        let band = atlas.bands.iter().find(|b| b.complete && (b.mu_interval.0 - 1.0).abs() < 1e-8).unwrap();
        // pi sqrt(mu) = +-pi/2 mod 2 pi on [1, 4] means mu = 9/4 at t = pi/2 or 3 pi/2
        let t = if band.side > 0 { PI / 2.0 } else { 1.5 * PI };
        let (mu, d, defect) = solve_on_band(&sf, band, t, 1e-12).unwrap();
        assert!((mu - 2.25).abs() < 1e-9, "mu = {mu}");
        // |mu'(t)| = 2 sqrt(mu) / pi
        assert!((d.abs() - 3.0 / PI).abs() < 1e-8);
        assert!(defect < 1e-8);
        let mesh = parametrize_band(&sf, band, 12, 1e-12).unwrap();
        for i in 0..12 {
            let x = mesh.t[i] / PI;
            let expect = if band.side > 0 { (2.0 - x).powi(2) } else { x * x };
            assert!((mesh.mu[i] - expect).abs() < 1e-9);
        }
        assert!(mesh.mu.windows(2).all(|w| (w[1] - w[0]) * band.orientation as f64 > 0.0));
    }

    #[test]
    fn free_fourth_order_point_bands() {
        let sf = free(2);
        let table = track_branches(&sf, -1.0, 100.0, &TrackOptions::default()).unwrap();
        let atlas = detect_bands(&table, &sf, &BandOptions::default()).unwrap();
        for k in [0usize, 3] {
            let ks: Vec<&Band> = atlas.bands.iter().filter(|b| b.k == k).collect();
            assert_eq!(ks.len(), 1, "branch {k}: {ks:?}");
            assert!(ks[0].is_degenerate());
            assert!(ks[0].mu_interval.0.abs() < 1e-8);
        }
        for k in [1usize, 2] {
            let first = atlas.bands.iter().find(|b| b.k == k && !b.is_degenerate()).unwrap();
            assert!(first.mu_interval.0.abs() < 1e-8);
        }
        assert_eq!(atlas.spectrum.len(), 1);
        assert!(atlas.spectrum[0].0.abs() < 1e-8);
    }

    #[test]
    fn merge_handles_points_and_overlaps() {
        let m = merge_intervals(vec![(4.0, 9.0), (0.0, 1.0), (0.0, 0.0), (1.0, 4.0), (10.0, 12.0)]);
        assert_eq!(m, vec![(0.0, 9.0), (10.0, 12.0)]);
    }

    #[test]
    fn t_of_respects_sides() {
        assert_eq!(t_of(c(1.0, -1e-17), 1), 0.0);
        assert_eq!(t_of(c(1.0, 1e-17), -1), TWO_PI);
        assert_eq!(t_of(c(-1.0, 1e-17), -1), PI);
        assert!((t_of(c(0.0, -1.0), -1) - 1.5 * PI).abs() < 1e-15);
    }
}
