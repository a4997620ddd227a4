//! Floquet multipliers: computation, asymptotic labeling, and continuation of the 2n
//! branches along the real mu-axis with collision detection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::monodromy::{self, MonodromyData};
use crate::operator::StandardForm;
use crate::roots;

/// The 2n roots of `omega^{2n} = (-1)^n`, sorted by decreasing real part and, within a
/// conjugate pair, positive imaginary part first. `omega_n = i` in this order.
#[derive(Debug, Clone)]
pub struct OmegaOrder {
    pub n: usize,
    pub omega: Vec<Complex64>,
}

impl OmegaOrder {
    pub fn new(n: usize) -> Self {
        let order = 2 * n;
        let mut omega: Vec<Complex64> = (0..order)
            .map(|k| c(0.0, 1.0) * Complex64::from_polar(1.0, PI * k as f64 / n as f64))
            .map(|w| {
                // snap rounding noise so that ties in the real part are exact
                let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
                c(snap(w.re), snap(w.im))
            })
            .collect();
        omega.sort_by(|a, b| {
            let re = (b.re * 1e12).round().partial_cmp(&(a.re * 1e12).round()).unwrap();
            re.then(b.im.partial_cmp(&a.im).unwrap())
        });
        OmegaOrder { n, omega }
    }

    /// `exp(omega_k mu^{1/2n} pi)` for `mu >= 0`.
    pub fn asymptotic(&self, mu: f64) -> Vec<Complex64> {
        let lam = mu.max(0.0).powf(1.0 / (2 * self.n) as f64);
        self.omega.iter().map(|w| (w * lam * PI).exp()).collect()
    }

    /// `omega_k lambda pi` (log of the asymptotic multiplier).
    pub fn asymptotic_log(&self, mu: f64) -> Vec<Complex64> {
        let lam = mu.max(0.0).powf(1.0 / (2 * self.n) as f64);
        self.omega.iter().map(|w| w * lam * PI).collect()
    }
}

/// Eigenvalues of the monodromy matrix.
pub fn eigen_multipliers(md: &MonodromyData) -> Result<Vec<Complex64>> {
    md.multipliers()
}

pub fn multipliers_at(sf: &StandardForm, mu: f64, tol: f64) -> Result<Vec<Complex64>> {
    eigen_multipliers(&monodromy::monodromy_plain(sf, c(mu, 0.0), tol)?)
}

pub(crate) fn clog(z: Complex64) -> Complex64 {
    c(z.norm().ln(), z.arg())
}

/// Log-space distance with the argument difference wrapped into `(-pi, pi]`.
pub(crate) fn log_dist(a: Complex64, b: Complex64) -> f64 {
    let d = clog(a) - clog(b);
    c(d.re, linalg::wrap_angle(d.im)).norm()
}

/// `log z` with the imaginary part chosen nearest to `reference.im`.
fn unwrap_log(z: Complex64, reference: Complex64) -> Complex64 {
    let l = clog(z);
    let k = ((reference.im - l.im) / (2.0 * PI)).round();
    c(l.re, l.im + 2.0 * PI * k)
}

/// Assigns each computed multiplier to a label by the asymptotic law
/// `|rho_k| ~ exp(Re omega_k lambda pi)`, `arg rho_k ~ Im omega_k lambda pi`.
/// Returns `perm` with `values[perm[k]]` labeled `k`.
pub fn label_asymptotic(values: &[Complex64], mu: f64, order: &OmegaOrder) -> Result<Vec<usize>> {
    let size = 2 * order.n;
    if values.len() != size {
        return Err(Error::Precondition(format!("expected {size} multipliers")));
    }
    let logs = order.asymptotic_log(mu);
    let lam = mu.max(0.0).powf(1.0 / size as f64);
    for a in 0..size {
        for b in a + 1..size {
            let dre = (order.omega[a].re - order.omega[b].re).abs();
            if dre > 1e-12 && dre * lam * PI < 2f64.ln() {
                return Err(Error::NotAsymptotic(mu));
            }
        }
    }
    let cost: Vec<Vec<f64>> = logs
        .iter()
        .map(|p| {
            values
                .iter()
                .map(|v| {
                    let l = clog(*v);
                    (l.re - p.re).abs() + linalg::wrap_angle(l.im - p.im).abs()
                })
                .collect()
        })
        .collect();
    let perm = linalg::hungarian(&cost);
    let total: f64 = (0..size).map(|k| cost[k][perm[k]]).sum();
    for a in 0..size {
        for b in a + 1..size {
            let swapped = total - cost[a][perm[a]] - cost[b][perm[b]] + cost[a][perm[b]] + cost[b][perm[a]];
            let (va, vb) = (values[perm[a]], values[perm[b]]);
            let differ = (va - vb).norm() > 1e-8 * va.norm().max(vb.norm());
            if differ && swapped - total < 0.5 {
                return Err(Error::AmbiguousLabels(mu));
            }
        }
    }
    Ok(perm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub mu_interval: (f64, f64),
    /// Zero-based branch labels.
    pub branch_pair: (usize, usize),
    pub on_unit_circle: bool,
    pub discriminant_value: Complex64,
}

#[derive(Debug, Clone)]
pub struct BranchTable {
    pub n: usize,
    pub mu_grid: Vec<f64>,
    /// `rho[k][i] = rho_k(mu_grid[i])`.
    pub rho: Vec<Vec<Complex64>>,
    pub collisions: Vec<CollisionEvent>,
}

impl BranchTable {
    pub fn values_at(&self, i: usize) -> Vec<Complex64> {
        self.rho.iter().map(|row| row[i]).collect()
    }

    /// Linear interpolation of the unwrapped log of branch `k` at `mu`.
    pub fn interpolate(&self, k: usize, mu: f64) -> Complex64 {
        let g = &self.mu_grid;
        let i = match g.binary_search_by(|x| x.partial_cmp(&mu).unwrap()) {
            Ok(i) => return self.rho[k][i],
            Err(i) => i.clamp(1, g.len() - 1),
        };
        let (a, b) = (self.rho[k][i - 1], self.rho[k][i]);
        let la = clog(a);
        let lb = unwrap_log(b, la);
        let s = (mu - g[i - 1]) / (g[i] - g[i - 1]);
        (la + (lb - la) * s).exp()
    }
}

#[derive(Debug, Clone)]
pub struct TrackOptions {
    /// Grid points per unit of `sign(mu) |mu|^{1/2n}`.
    pub grid_density: usize,
    pub collision_tol: f64,
    pub ode_tol: f64,
    pub max_halvings: u32,
    /// Explicit base grid (ascending); overrides `grid_density`.
    pub grid: Option<Vec<f64>>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions { grid_density: 32, collision_tol: 1e-6, ode_tol: 1e-12, max_halvings: 40, grid: None }
    }
}

/// Grid uniform in `xi = sign(mu) |mu|^{1/2n}`.
pub fn xi_grid(order: usize, mu_min: f64, mu_max: f64, density: usize) -> Vec<f64> {
    let p = order as f64;
    let to_xi = |m: f64| m.signum() * m.abs().powf(1.0 / p);
    let from_xi = |x: f64| x.signum() * x.abs().powf(p);
    let (a, b) = (to_xi(mu_min), to_xi(mu_max));
    let count = (((b - a) * density as f64).ceil() as usize).max(1);
    let mut g: Vec<f64> = (0..=count).map(|i| from_xi(a + (b - a) * i as f64 / count as f64)).collect();
    g[0] = mu_min;
    g[count] = mu_max;
    g.dedup();
    g
}

struct State {
    mu: f64,
    vals: Vec<Complex64>,
    logs: Vec<Complex64>,
    /// Velocity used while fewer than two points are known.
    vel: Vec<Complex64>,
    /// Up to three most recent accepted points `(mu, logs)`, oldest first.
    hist: Vec<(f64, Vec<Complex64>)>,
}

impl State {
    fn new(mu: f64, vals: Vec<Complex64>, logs: Vec<Complex64>, vel: Vec<Complex64>) -> Self {
        let hist = vec![(mu, logs.clone())];
        State { mu, vals, logs, vel, hist }
    }

    /// Extrapolated logs at `mu_b`: quadratic through the last three points when available.
    fn predict(&self, mu_b: f64) -> Vec<Complex64> {
        let n = self.logs.len();
        match self.hist.len() {
            0 | 1 => (0..n).map(|k| self.logs[k] + self.vel[k] * (mu_b - self.mu)).collect(),
            2 => {
                let (m0, l0) = &self.hist[0];
                let (m1, l1) = &self.hist[1];
                let t = (mu_b - m1) / (m1 - m0);
                (0..n).map(|k| l1[k] + (l1[k] - l0[k]) * t).collect()
            }
            _ => {
                let (m0, l0) = &self.hist[0];
                let (m1, l1) = &self.hist[1];
                let (m2, l2) = &self.hist[2];
                let w0 = (mu_b - m1) * (mu_b - m2) / ((m0 - m1) * (m0 - m2));
                let w1 = (mu_b - m0) * (mu_b - m2) / ((m1 - m0) * (m1 - m2));
                let w2 = (mu_b - m0) * (mu_b - m1) / ((m2 - m0) * (m2 - m1));
                (0..n).map(|k| l0[k] * w0 + l1[k] * w1 + l2[k] * w2).collect()
            }
        }
    }

    /// Size of the quadratic correction over the linear extrapolation, per branch.
    fn predict_error(&self, mu_b: f64, pred: &[Complex64]) -> Vec<f64> {
        if self.hist.len() < 3 {
            return vec![0.0; pred.len()];
        }
        let (m1, l1) = &self.hist[1];
        let (m2, l2) = &self.hist[2];
        let t = (mu_b - m2) / (m2 - m1);
        (0..pred.len()).map(|k| (pred[k] - (l2[k] + (l2[k] - l1[k]) * t)).norm()).collect()
    }
}

/// Largest predicted change of any log-multiplier over one step.
const MAX_LOG_STEP: f64 = 1.0;
/// Log-distance under which candidates left unresolved at the halving floor are taken as
/// one colliding cluster. Near a root of multiplicity p the branches separate like
/// `|mu - mu_0|^{1/p}`, so at a quadruple point and the floor width they are ~1e-2 apart.
const NEAR_COLLISION: f64 = 1e-1;
/// Pair separation below which a right-angle turn of the log difference marks a branch point.
const BRANCH_POINT_GAP: f64 = 1e-3;
/// Relative modulus difference below which two split multipliers count as equally large.
const MODULUS_TIE: f64 = 1e-9;

enum Step {
    Accepted { vals: Vec<Complex64>, logs: Vec<Complex64> },
    Unconfident { near_collision: bool },
}

struct Tracker<'a> {
    sf: &'a StandardForm,
    opts: &'a TrackOptions,
    size: usize,
    state: State,
    rows: Vec<(f64, Vec<Complex64>)>,
    events: Vec<(f64, f64, usize, usize, f64)>,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

impl<'a> Tracker<'a> {
    fn eval(&self, mu: f64) -> Result<Vec<Complex64>> {
        multipliers_at(self.sf, mu, self.opts.ode_tol)
    }

    fn try_step(&self, mu_b: f64, cand: &[Complex64]) -> Step {
        let n = self.size;
        let st = &self.state;
        let pred = st.predict(mu_b);
        let err = st.predict_error(mu_b, &pred);
        if (0..n).any(|k| (pred[k] - st.logs[k]).norm() > MAX_LOG_STEP) {
            return Step::Unconfident { near_collision: false };
        }
        let mut cost = vec![vec![0.0; n]; n];
        for k in 0..n {
            for j in 0..n {
                cost[k][j] = (pred[k] - unwrap_log(cand[j], pred[k])).norm();
            }
        }
        let sigma = linalg::hungarian(&cost);
        let mut owner = vec![0; n];
        for k in 0..n {
            owner[sigma[k]] = k;
        }
        // interchangeable branches: colliding at the start or landing on colliding candidates
        let ctol = self.opts.collision_tol;
        let mut parent: Vec<usize> = (0..n).collect();
        for a in 0..n {
            for b in a + 1..n {
                let start = log_dist(st.vals[a], st.vals[b]) < ctol;
                let end = log_dist(cand[sigma[a]], cand[sigma[b]]) < ctol;
                if start || end {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
        let check = |exempt: bool, parent: &mut Vec<usize>| {
            let mut confident = true;
            let mut near_collision = true;
            for k in 0..n {
                let d = cost[k][sigma[k]] + err[k];
                let rk = find(parent, k);
                let mut g = f64::INFINITY;
                for j in 0..n {
                    if j == sigma[k] || (exempt && find(parent, owner[j]) == rk) {
                        continue;
                    }
                    g = g.min(log_dist(cand[sigma[k]], cand[j]));
                }
                if d > 0.5 * g {
                    confident = false;
                    if g > NEAR_COLLISION {
                        near_collision = false;
                    }
                }
            }
            (confident, near_collision)
        };
        let (strict, _) = check(false, &mut parent);
        let (relaxed, near_collision) = check(true, &mut parent);
        if !relaxed {
            return Step::Unconfident { near_collision };
        }
        let mut sigma = sigma;
        if !strict {
            // symmetric split out of a collision
            let roots: Vec<usize> = (0..n).map(|k| find(&mut parent, k)).collect();
            canonical_order(&mut sigma, &roots, cand);
        }
        let vals: Vec<Complex64> = (0..n).map(|k| cand[sigma[k]]).collect();
        let logs = (0..n).map(|k| unwrap_log(vals[k], pred[k])).collect();
        Step::Accepted { vals, logs }
    }

    fn accept(&mut self, mu_b: f64, vals: Vec<Complex64>, logs: Vec<Complex64>) {
        let n = self.size;
        let h = mu_b - self.state.mu;
        let ctol = self.opts.collision_tol;
        for a in 0..n {
            for b in a + 1..n {
                let start = log_dist(self.state.vals[a], self.state.vals[b]) < ctol;
                let end = log_dist(vals[a], vals[b]) < ctol;
                let (lo, hi) = if h > 0.0 { (self.state.mu, mu_b) } else { (mu_b, self.state.mu) };
                if start || end {
                    let at = if end { mu_b } else { self.state.mu };
                    self.events.push((at, at, a, b, 0.0));
                } else {
                    // pass-through crossing: the log difference changes sign along the step
                    // modulo 2 pi i: the multipliers coincide when the log difference does
                    let d0 = self.state.logs[a] - self.state.logs[b];
                    let d1 = logs[a] - logs[b];
                    let (w0, w1) = (d0.im / (2.0 * PI), d1.im / (2.0 * PI));
                    let k = if w0.floor() != w1.floor() { w0.max(w1).floor() } else { w0.round() };
                    let shift = c(0.0, 2.0 * PI * k);
                    let (d0, d1) = (d0 - shift, d1 - shift);
                    let turn = (d1 * d0.conj()).re / (d0.norm() * d1.norm());
                    let closest = (d0.conj() * d1).im.abs() / (d1 - d0).norm();
                    let through = turn < 0.0 && closest < 0.1 * (d0.norm() + d1.norm());
                    // square-root branch point: the difference turns by a right angle
                    let branch = turn < 0.5 && d0.norm().max(d1.norm()) < BRANCH_POINT_GAP;
                    if through || branch {
                        self.events.push((lo, hi, a, b, k));
                    }
                }
            }
        }
        for k in 0..n {
            self.state.vel[k] = (logs[k] - self.state.logs[k]) / h;
        }
        self.state.hist.push((mu_b, logs.clone()));
        if self.state.hist.len() > 3 {
            self.state.hist.remove(0);
        }
        self.state.mu = mu_b;
        self.state.vals = vals.clone();
        self.state.logs = logs;
        self.rows.push((mu_b, vals));
    }

    fn advance(&mut self, mu_b: f64, cand: Vec<Complex64>, depth: u32) -> Result<()> {
        match self.try_step(mu_b, &cand) {
            Step::Accepted { vals, logs } => {
                self.accept(mu_b, vals, logs);
                Ok(())
            }
            Step::Unconfident { near_collision } => {
                let width = (mu_b - self.state.mu).abs();
                let floor = 1e-13 * (1.0 + mu_b.abs());
                if depth >= self.opts.max_halvings || width <= floor {
                    if near_collision {
                        return self.force(mu_b, cand);
                    }
                    return Err(Error::UnresolvedMatching(mu_b));
                }
                let mid = 0.5 * (self.state.mu + mu_b);
                let cm = self.eval(mid)?;
                self.advance(mid, cm, depth + 1)?;
                self.advance(mu_b, cand, depth + 1)
            }
        }
    }

    /// Accepts an unresolved step at the halving floor: the near-coincident candidates form
    /// a collision whose members are ordered canonically, and the extrapolation restarts.
    fn force(&mut self, mu_b: f64, cand: Vec<Complex64>) -> Result<()> {
        let n = self.size;
        let pred = self.state.predict(mu_b);
        let cost: Vec<Vec<f64>> = pred
            .iter()
            .map(|p| cand.iter().map(|z| (p - unwrap_log(*z, *p)).norm()).collect())
            .collect();
        let mut sigma = linalg::hungarian(&cost);
        let mut parent: Vec<usize> = (0..n).collect();
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if log_dist(cand[sigma[a]], cand[sigma[b]]) < NEAR_COLLISION {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                    pairs.push((a, b));
                }
            }
        }
        let roots: Vec<usize> = (0..n).map(|k| find(&mut parent, k)).collect();
        canonical_order(&mut sigma, &roots, &cand);
        let vals: Vec<Complex64> = (0..n).map(|k| cand[sigma[k]]).collect();
        let logs: Vec<Complex64> = (0..n).map(|k| unwrap_log(vals[k], pred[k])).collect();
        self.accept(mu_b, vals, logs.clone());
        for (a, b) in pairs {
            self.events.push((mu_b, mu_b, a, b, 0.0));
        }
        self.state.hist = vec![(mu_b, logs)];
        self.state.vel = vec![c(0.0, 0.0); n];
        Ok(())
    }

    /// Narrows a pass-through crossing of branches `a`, `b` between `lo` and `hi`.
    fn refine_crossing(&self, lo: f64, hi: f64, a: usize, b: usize) -> Result<(f64, f64)> {
        let wrapped = |d: Complex64| c(d.re, linalg::wrap_angle(d.im));
        let row = |mu: f64| self.rows.iter().find(|r| r.0 == mu).map(|r| r.1.clone());
        let (Some(vlo), Some(vhi)) = (row(lo), row(hi)) else {
            return Ok((lo, hi));
        };
        let llo0: Vec<Complex64> = vlo.iter().map(|z| clog(*z)).collect();
        let lhi0: Vec<Complex64> = (0..self.size).map(|k| unwrap_log(vhi[k], llo0[k])).collect();
        let d_ref = wrapped(llo0[a] - llo0[b]);
        let f = |l: &[Complex64]| (wrapped(l[a] - l[b]) * d_ref.conj()).re / d_ref.norm();
        // candidates at mu labelled against the chord between the bracket ends
        let labelled = |mu: f64, s: f64, l0: &[Complex64], l1: &[Complex64]| -> Result<Vec<Complex64>> {
            let cand = self.eval(mu)?;
            let pred: Vec<Complex64> = (0..self.size).map(|k| l0[k] + (l1[k] - l0[k]) * s).collect();
            let cost: Vec<Vec<f64>> = pred
                .iter()
                .map(|p| cand.iter().map(|z| (p - unwrap_log(*z, *p)).norm()).collect())
                .collect();
            let sigma = linalg::hungarian(&cost);
            Ok((0..self.size).map(|k| unwrap_log(cand[sigma[k]], pred[k])).collect())
        };
        let (lo0, hi0) = (lo, hi);
        let (flo0, fhi0) = (f(&llo0), f(&lhi0));
        if flo0 * fhi0 >= 0.0 {
            return Ok((lo0, hi0));
        }
        let slope = (flo0 - fhi0).abs() / (hi0 - lo0);
        let (mut lo, mut hi) = (lo, hi);
        let (mut llo, mut lhi) = (llo0.clone(), lhi0.clone());
        let (mut flo, mut fhi) = (flo0, fhi0);
        let (mut tlo, mut thi) = (flo0, fhi0);
        // Illinois regula falsi on the projected log difference
        let mut side = 0;
        for _ in 0..60 {
            let width = hi - lo;
            if width <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            let mut s = flo / (flo - fhi);
            if !s.is_finite() {
                s = 0.5;
            }
            let s = s.clamp(0.01, 0.99);
            let mid = lo + s * width;
            let lm = labelled(mid, s, &llo, &lhi)?;
            let fm = f(&lm);
            if fm.abs() < 1e-14 {
                return Ok((mid, mid));
            }
            if fm > 0.0 {
                lo = mid;
                llo = lm;
                flo = fm;
                tlo = fm;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = mid;
                lhi = lm;
                fhi = fm;
                thi = fm;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
        }
        // a label swap inside the bracket leaves a jump instead of a root
        if tlo.abs() + thi.abs() <= 10.0 * slope * (hi - lo) + 1e-12 {
            return Ok((lo, hi));
        }
        let gap = |mu: f64| -> Result<f64> {
            let s = (mu - lo0) / (hi0 - lo0);
            let l = labelled(mu, s, &llo0, &lhi0)?;
            Ok(wrapped(l[a] - l[b]).norm())
        };
        let xtol = 1e-12 * (1.0 + lo0.abs().max(hi0.abs()));
        let (x, _) = roots::golden_min(gap, lo0, hi0, xtol)?;
        Ok((x - xtol, x + xtol))
    }

}

/// Reorders `sigma` inside each cluster (labels sharing a root): larger modulus, then larger
/// argument, goes to the smaller label.
fn canonical_order(sigma: &mut [usize], roots: &[usize], cand: &[Complex64]) {
    let n = sigma.len();
    let mut seen = vec![false; n];
    for k in 0..n {
        if seen[roots[k]] {
            continue;
        }
        seen[roots[k]] = true;
        let labels: Vec<usize> = (0..n).filter(|&q| roots[q] == roots[k]).collect();
        let mut js: Vec<usize> = labels.iter().map(|&q| sigma[q]).collect();
        js.sort_by(|&x, &y| {
            let (zx, zy) = (cand[x], cand[y]);
            let (rx, ry) = (zx.norm(), zy.norm());
            if (rx - ry).abs() > MODULUS_TIE * rx.max(ry) {
                ry.partial_cmp(&rx).unwrap()
            } else {
                zy.arg().partial_cmp(&zx.arg()).unwrap()
            }
        });
        for (q, j) in labels.iter().zip(js) {
            sigma[*q] = j;
        }
    }
}

/// Tracks the 2n multiplier branches over `[mu_min, mu_max]`.
pub fn track_branches(sf: &StandardForm, mu_min: f64, mu_max: f64, opts: &TrackOptions) -> Result<BranchTable> {
    monodromy::check_tol(opts.ode_tol)?;
    if !(mu_min < mu_max) {
        return Err(Error::Precondition(format!("empty range [{mu_min}, {mu_max}]")));
    }
    let order = sf.order();
    let size = order;
    let omega = OmegaOrder::new(sf.n());
    let grid = match &opts.grid {
        Some(g) => {
            let mut g = g.clone();
            g.retain(|m| *m >= mu_min && *m <= mu_max);
            g
        }
        None => xi_grid(order, mu_min, mu_max, opts.grid_density.max(1)),
    };
    if grid.len() < 2 {
        return Err(Error::Precondition("grid needs at least two points".into()));
    }
    let base: Vec<Vec<Complex64>> =
        grid.par_iter().map(|&mu| multipliers_at(sf, mu, opts.ode_tol)).collect::<Result<_>>()?;

    // seed at the largest grid point with an unambiguous asymptotic labeling
    let top = grid.len() - 1;
    let mut seed = None;
    let mut first_err = None;
    for i in (grid.len() / 2..=top).rev() {
        match label_asymptotic(&base[i], grid[i], &omega) {
            Ok(perm) => {
                seed = Some((i, perm));
                break;
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((si, perm)) = seed else {
        return Err(first_err.unwrap_or(Error::NotAsymptotic(mu_max)));
    };
    let vals: Vec<Complex64> = perm.iter().map(|&j| base[si][j]).collect();
    let mu_s = grid[si];
    let asym = omega.asymptotic_log(mu_s);
    let logs: Vec<Complex64> = vals.iter().zip(&asym).map(|(v, a)| unwrap_log(*v, *a)).collect();
    let lam = mu_s.max(1e-300).powf(1.0 / order as f64);
    let vel: Vec<Complex64> =
        omega.omega.iter().map(|w| w * PI * lam / (order as f64 * mu_s.max(1e-300))).collect();

    let mut tracker = Tracker {
        sf,
        opts,
        size,
        state: State::new(mu_s, vals.clone(), logs.clone(), vel.clone()),
        rows: vec![(mu_s, vals.clone())],
        events: Vec::new(),
    };
    for i in (0..si).rev() {
        tracker.advance(grid[i], base[i].clone(), 0)?;
    }
    if si < top {
        tracker.state = State::new(mu_s, vals, logs, vel);
        for i in si + 1..=top {
            tracker.advance(grid[i], base[i].clone(), 0)?;
        }
    }

    // crossing intervals are narrowed; point events already sit at halving resolution
    let mut raw = std::mem::take(&mut tracker.events);
    for ev in raw.iter_mut() {
        if ev.0 != ev.1 {
            let (lo, hi) = tracker.refine_crossing(ev.0, ev.1, ev.2, ev.3)?;
            ev.0 = lo;
            ev.1 = hi;
        }
    }
    raw.sort_by(|x, y| (x.2, x.3).cmp(&(y.2, y.3)).then(x.0.partial_cmp(&y.0).unwrap()));
    let mut merged: Vec<(f64, f64, usize, usize, f64)> = Vec::new();
    for ev in raw {
        if let Some(last) = merged.last_mut() {
            let gap = 1e-6 * (1.0 + ev.0.abs());
            if last.2 == ev.2 && last.3 == ev.3 && ev.0 <= last.1 + gap {
                last.1 = last.1.max(ev.1);
                continue;
            }
        }
        merged.push(ev);
    }

    let mut rows = tracker.rows;
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rows.dedup_by(|a, b| a.0 == b.0);
    let mu_grid: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rho: Vec<Vec<Complex64>> = (0..size).map(|k| rows.iter().map(|r| r.1[k]).collect()).collect();
    let table_vals = |mu: f64| rows.iter().position(|r| r.0 >= mu).unwrap_or(rows.len() - 1);

    let collisions = merged
        .into_iter()
        .map(|(lo, hi, a, b, _)| {
            let mid = 0.5 * (lo + hi);
            let disc = monodromy::discriminant(sf, c(mid, 0.0), opts.ode_tol)?;
            let i = table_vals(mid);
            let va = rows[i].1[a];
            let vb = rows[i].1[b];
            let unit = |z: Complex64| (z.norm() - 1.0).abs() < opts.collision_tol.max(1e-4);
            Ok(CollisionEvent {
                mu_interval: (lo, hi),
                branch_pair: (a, b),
                on_unit_circle: unit(va) && unit(vb),
                discriminant_value: disc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut collisions = collisions;
    collisions.sort_by(|x, y| {
        x.mu_interval.0.partial_cmp(&y.mu_interval.0).unwrap().then(x.branch_pair.cmp(&y.branch_pair))
    });
    Ok(BranchTable { n: sf.n(), mu_grid, rho, collisions })
}

/// Relative distance used for set comparisons of multipliers.
fn rel_dist(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn hausdorff(x: &[Complex64], y: &[Complex64]) -> f64 {
    let one = |p: &[Complex64], q: &[Complex64]| {
        p.iter()
            .map(|a| q.iter().map(|b| rel_dist(*a, *b)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(x, y).max(one(y, x))
}

/// Largest defect of the multiset's closure under `rho -> 1/rho` and `rho -> conj(rho)`.
pub fn involution_check(table: &BranchTable) -> f64 {
    (0..table.mu_grid.len())
        .map(|i| {
            let v = table.values_at(i);
            let inv: Vec<Complex64> = v.iter().map(|z| 1.0 / z).collect();
            let conj: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
            hausdorff(&v, &inv).max(hausdorff(&v, &conj))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{expand_standard_form, OperatorSpec};

    fn free(n: usize) -> StandardForm {
        expand_standard_form(&OperatorSpec::free(n).unwrap())
    }

    #[test]
    fn omega_orders() {
        let o1 = OmegaOrder::new(1);
        assert_eq!(o1.omega, vec![c(0.0, 1.0), c(0.0, -1.0)]);
        let o2 = OmegaOrder::new(2);
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(-1.0, 0.0)];
        for (a, b) in o2.omega.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-15);
        }
        for n in 1..=5 {
            let o = OmegaOrder::new(n);
            let target = if n % 2 == 0 { 1.0 } else { -1.0 };
            for w in &o.omega {
                assert!((w.powu(2 * n as u32) - c(target, 0.0)).norm() < 1e-14);
            }
            assert!((o.omega[n - 1] - c(0.0, 1.0)).norm() < 1e-15, "omega_n = i for n = {n}");
            for k in 1..2 * n {
                assert!(o.omega[k - 1].re >= o.omega[k].re - 1e-12);
            }
        }
    }

    #[test]
    fn eigen_multiplier_examples() {
        let mut r = multipliers_at(&free(1), 0.25, 1e-13).unwrap();
        r.sort_by(|a, b| b.im.partial_cmp(&a.im).unwrap());
        assert!((r[0] - c(0.0, 1.0)).norm() < 1e-10 && (r[1] - c(0.0, -1.0)).norm() < 1e-10);
        let r = multipliers_at(&free(1), 4.0, 1e-13).unwrap();
        assert!(r.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-6));
    }

    #[test]
    fn labels_free_fourth_order() {
        let vals = multipliers_at(&free(2), 16.0, 1e-12).unwrap();
        let perm = label_asymptotic(&vals, 16.0, &OmegaOrder::new(2)).unwrap();
        let lab: Vec<Complex64> = perm.iter().map(|&j| vals[j]).collect();
        let e = (2.0 * PI).exp();
        assert!((lab[0].norm() / e - 1.0).abs() < 1e-8);
        assert!((lab[3].norm() * e - 1.0).abs() < 1e-8);
        assert!((lab[1] - c(1.0, 0.0)).norm() < 1e-6 && (lab[2] - c(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn labels_unit_pair_by_argument_sign() {
        let mu = 90.0;
        let vals = multipliers_at(&free(1), mu, 1e-12).unwrap();
        let perm = label_asymptotic(&vals, mu, &OmegaOrder::new(1)).unwrap();
        let expect = (c(0.0, PI * mu.sqrt())).exp();
        assert!((vals[perm[0]] - expect).norm() < 1e-8);
    }

    #[test]
    fn labels_reject_non_asymptotic_mu() {
        let vals = multipliers_at(&free(2), 1e-3, 1e-12).unwrap();
        assert!(label_asymptotic(&vals, 1e-3, &OmegaOrder::new(2)).is_err());
    }

    #[test]
    fn free_hill_tracking_and_collisions() {
        let sf = free(1);
        let t = track_branches(&sf, 0.1, 100.0, &TrackOptions::default()).unwrap();
        for (i, &mu) in t.mu_grid.iter().enumerate() {
            let e = c(0.0, PI * mu.sqrt()).exp();
            assert!((t.rho[0][i] - e).norm() < 1e-7, "mu = {mu}");
            assert!((t.rho[1][i] - e.conj()).norm() < 1e-7);
        }
        let centers: Vec<f64> =
            t.collisions.iter().map(|e| 0.5 * (e.mu_interval.0 + e.mu_interval.1)).collect();
        assert_eq!(centers.len(), 10, "{centers:?}");
        for (m, x) in (1..=10).zip(&centers) {
            assert!((x - (m * m) as f64).abs() < 1e-7, "{x}");
        }
        assert!(t.collisions.iter().all(|e| e.on_unit_circle));
        assert!(involution_check(&t) < 1e-10);
    }

    #[test]
    fn grid_refinement_does_not_change_labels() {
        let sf = expand_standard_form(&OperatorSpec::mathieu(1.0));
        let coarse = track_branches(&sf, -1.0, 60.0, &TrackOptions { grid_density: 16, ..Default::default() }).unwrap();
        let fine = track_branches(&sf, -1.0, 60.0, &TrackOptions { grid_density: 32, ..Default::default() }).unwrap();
        for (i, &mu) in coarse.mu_grid.iter().enumerate() {
            let in_collision = coarse.collisions.iter().any(|e| (mu - e.mu_interval.0).abs() < 0.05 || (mu - e.mu_interval.1).abs() < 0.05);
            if in_collision {
                continue;
            }
            if let Ok(j) = fine.mu_grid.binary_search_by(|x| x.partial_cmp(&mu).unwrap()) {
                for k in 0..2 {
                    assert!((coarse.rho[k][i] - fine.rho[k][j]).norm() < 1e-8, "mu = {mu} k={k} {} {}", coarse.rho[k][i], fine.rho[k][j]);
                }
            }
        }
    }
}
