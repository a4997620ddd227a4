//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn det(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    m.clone()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::EigenFailure(format!("{}x{} matrix", m.nrows(), m.ncols())))
}

/// Gaussian elimination with complete pivoting: `lu` holds unit-lower `L` below the
/// diagonal and `U` on and above it, with `m[rows[i], cols[j]] = (L U)[i, j]`.
struct CompleteLu {
    lu: CMat,
    rows: Vec<usize>,
    cols: Vec<usize>,
    sign: f64,
}

fn complete_lu(m: &CMat) -> CompleteLu {
    let n = m.nrows();
    let mut a = m.clone();
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, -1.0);
        for i in k..n {
            for j in k..n {
                let v = a[(i, j)].norm();
                if v > best {
                    (pi, pj, best) = (i, j, v);
                }
            }
        }
        if pi != k {
            a.swap_rows(k, pi);
            rows.swap(k, pi);
            sign = -sign;
        }
        if pj != k {
            a.swap_columns(k, pj);
            cols.swap(k, pj);
            sign = -sign;
        }
        let p = a[(k, k)];
        if p.norm() == 0.0 {
            continue;
        }
        for i in k + 1..n {
            let l = a[(i, k)] / p;
            a[(i, k)] = l;
            for j in k + 1..n {
                let u = a[(k, j)];
                a[(i, j)] -= l * u;
            }
        }
    }
    CompleteLu { lu: a, rows, cols, sign }
}

/// Determinant and adjugate, well defined at (and near) singular matrices: the adjugate
/// of the triangular factor is built by bordering, without dividing by pivots.
pub fn det_adjugate(m: &CMat) -> (Complex64, CMat) {
    let n = m.nrows();
    let CompleteLu { lu, rows, cols, sign } = complete_lu(m);
    // adj(U_k) = [[u_kk adj(U_{k-1}), -adj(U_{k-1}) w], [0, det U_{k-1}]]
    let mut adj_u = CMat::zeros(n, n);
    adj_u[(0, 0)] = c(1.0, 0.0);
    let mut det_u = lu[(0, 0)];
    for k in 1..n {
        let ukk = lu[(k, k)];
        for i in 0..k {
            let mut s = c(0.0, 0.0);
            for j in i..k {
                s += adj_u[(i, j)] * lu[(j, k)];
            }
            adj_u[(i, k)] = -s;
        }
        for i in 0..k {
            for j in i..k {
                adj_u[(i, j)] *= ukk;
            }
        }
        adj_u[(k, k)] = det_u;
        det_u *= ukk;
    }
    // L^{-1} by forward substitution
    let mut linv = CMat::identity(n, n);
    for j in 0..n {
        for i in j + 1..n {
            let mut s = c(0.0, 0.0);
            for q in j..i {
                s += lu[(i, q)] * linv[(q, j)];
            }
            linv[(i, j)] = -s;
        }
    }
    let x = adj_u * linv;
    let mut adj = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            adj[(cols[j], rows[i])] = x[(j, i)] * sign;
        }
    }
    (det_u * sign, adj)
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let mut s = c(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Faddeev–LeVerrier: coefficients `c_0..c_n` of `det(lambda I - A)`, `c_n = 1`.
pub fn faddeev_leverrier(a: &CMat) -> Vec<Complex64> {
    let n = a.nrows();
    let mut coeffs = vec![c(0.0, 0.0); n + 1];
    coeffs[n] = c(1.0, 0.0);
    let mut mk = CMat::zeros(n, n);
    for k in 1..=n {
        let mut next = a * &mk;
        for i in 0..n {
            next[(i, i)] += coeffs[n - k + 1];
        }
        mk = next;
        coeffs[n - k] = -trace_product(a, &mk) / k as f64;
    }
    coeffs
}

/// Coefficients `c_0..c_n` of `prod_k (x - r_k)`.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut p = vec![c(1.0, 0.0)];
    for r in roots {
        let mut q = vec![c(0.0, 0.0); p.len() + 1];
        for (i, a) in p.iter().enumerate() {
            q[i + 1] += a;
            q[i] -= a * r;
        }
        p = q;
    }
    p
}

pub fn poly_eval(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(c(0.0, 0.0), |acc, a| acc * x + a)
}

pub fn poly_derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs.iter().enumerate().skip(1).map(|(k, a)| a * k as f64).collect()
}

/// Resultant of two polynomials (ascending coefficients) via the Sylvester matrix.
pub fn resultant(p: &[Complex64], q: &[Complex64]) -> Complex64 {
    let dp = p.len() - 1;
    let dq = q.len() - 1;
    let size = dp + dq;
    if size == 0 {
        return c(1.0, 0.0);
    }
    let mut s = CMat::zeros(size, size);
    for row in 0..dq {
        for (k, a) in p.iter().rev().enumerate() {
            s[(row, row + k)] = *a;
        }
    }
    for row in 0..dp {
        for (k, a) in q.iter().rev().enumerate() {
            s[(dq + row, row + k)] = *a;
        }
    }
    det(&s)
}

/// Minimum-cost perfect assignment (Hungarian algorithm). Returns `assign[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// One-norm condition number from the complete-pivoting factorization; infinite when singular.
pub fn condition_number(m: &CMat) -> f64 {
    let n = m.nrows();
    let f = complete_lu(m);
    if (0..n).any(|k| f.lu[(k, k)].norm() == 0.0) {
        return f64::INFINITY;
    }
    let norm1 = |a: &CMat| (0..n).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let (d, adj) = det_adjugate(m);
    norm1(m) * norm1(&adj) / d.norm()
}
