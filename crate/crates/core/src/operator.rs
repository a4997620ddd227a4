//! Periodic operators `(-1)^n y^(2n) + sum_j (p_j y^(j))^(j)` with trigonometric
//! polynomial coefficients of period pi, and their expanded standard form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONJ_TOL: f64 = 1e-12;
const REAL_TOL: f64 = 1e-12;

/// Trigonometric polynomial `sum_{|m| <= M} c_m e^{2imx}`, real on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    coeffs: Vec<Complex64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        TrigPoly { coeffs: vec![Complex64::new(0.0, 0.0)] }
    }

    pub fn constant(c: f64) -> Self {
        TrigPoly { coeffs: vec![Complex64::new(c, 0.0)] }
    }

    /// `amp * cos(2 m x)`.
    pub fn cosine(m: usize, amp: f64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
        if m == 0 {
            coeffs[0] = Complex64::new(amp, 0.0);
        } else {
            coeffs[0] = Complex64::new(0.5 * amp, 0.0);
            coeffs[2 * m] = Complex64::new(0.5 * amp, 0.0);
        }
        TrigPoly { coeffs }
    }

    /// Builds from `(m, c_m)` pairs. Unlisted coefficients are zero.
    pub fn from_terms(terms: &[(i64, Complex64)]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for (m, _) in terms {
            if !seen.insert(*m) {
                return Err(Error::InvalidOperator(format!("duplicate entry for m = {m}")));
            }
        }
        let deg = terms.iter().map(|(m, _)| m.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * deg + 1];
        for (m, c) in terms {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::InvalidOperator(format!("non-finite coefficient at m = {m}")));
            }
            coeffs[(*m + deg as i64) as usize] = *c;
        }
        let p = TrigPoly { coeffs };
        p.check_real()?;
        Ok(p.trimmed())
    }

    fn check_real(&self) -> Result<()> {
        let deg = self.degree() as i64;
        for m in 0..=deg {
            let a = self.coeff(m);
            let b = self.coeff(-m);
            if (a - b.conj()).norm() > CONJ_TOL * (1.0 + a.norm()) {
                return Err(Error::InvalidOperator(format!(
                    "c_{{-{m}}} is not the conjugate of c_{m}"
                )));
            }
        }
        Ok(())
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.len() > 1
            && self.coeffs[0] == Complex64::new(0.0, 0.0)
            && self.coeffs[self.coeffs.len() - 1] == Complex64::new(0.0, 0.0)
        {
            self.coeffs.remove(0);
            self.coeffs.pop();
        }
        self
    }

    pub fn degree(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn coeff(&self, m: i64) -> Complex64 {
        let deg = self.degree() as i64;
        if m.abs() > deg {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(m + deg) as usize]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let deg = self.degree() as i64;
        (-deg..=deg)
            .map(|m| self.coeff(m) * Complex64::from_polar(1.0, 2.0 * m as f64 * x))
            .sum()
    }

    /// Exact derivative: `c_m -> 2im c_m`.
    pub fn derivative(&self) -> Self {
        let deg = self.degree() as i64;
        let coeffs = (-deg..=deg)
            .map(|m| self.coeff(m) * Complex64::new(0.0, 2.0 * m as f64))
            .collect();
        TrigPoly { coeffs }.trimmed()
    }

    pub fn derivative_n(&self, k: usize) -> Self {
        (0..k).fold(self.clone(), |p, _| p.derivative())
    }

    pub fn add(&self, other: &TrigPoly) -> Self {
        let deg = self.degree().max(other.degree()) as i64;
        let coeffs = (-deg..=deg).map(|m| self.coeff(m) + other.coeff(m)).collect();
        TrigPoly { coeffs }.trimmed()
    }

    pub fn scale(&self, s: f64) -> Self {
        TrigPoly { coeffs: self.coeffs.iter().map(|c| c * s).collect() }.trimmed()
    }

    /// Upper bound for `sup_x |p(x)|`.
    pub fn sup_bound(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// `(m, c_m)` for all nonzero coefficients.
    pub fn terms(&self) -> Vec<(i64, Complex64)> {
        let deg = self.degree() as i64;
        (-deg..=deg)
            .map(|m| (m, self.coeff(m)))
            .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
            .collect()
    }
}

/// Half-order `n` and coefficients `p_0, ..., p_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    n: usize,
    coeffs: Vec<TrigPoly>,
}

impl OperatorSpec {
    pub fn new(n: usize, coeffs: Vec<TrigPoly>) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidOperator("n must be at least 1".into()));
        }
        if coeffs.len() != n {
            return Err(Error::InvalidOperator(format!(
                "expected {n} coefficient functions, got {}",
                coeffs.len()
            )));
        }
        for p in &coeffs {
            p.check_real()?;
        }
        Ok(OperatorSpec { n, coeffs })
    }

    /// `(-1)^n y^(2n)` with all `p_j = 0`.
    pub fn free(n: usize) -> Result<Self> {
        OperatorSpec::new(n, vec![TrigPoly::zero(); n])
    }

    /// Hill operator `-y'' + 2 q cos(2x) y`.
    pub fn mathieu(q: f64) -> Self {
        OperatorSpec { n: 1, coeffs: vec![TrigPoly::cosine(1, 2.0 * q)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[TrigPoly] {
        &self.coeffs
    }

    pub fn to_doc(&self) -> OperatorDoc {
        OperatorDoc {
            n: self.n as i64,
            coefficients: self
                .coeffs
                .iter()
                .map(|p| {
                    p.terms()
                        .into_iter()
                        .map(|(m, c)| CoeffEntry { m, re: c.re, im: c.im })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub m: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Serialized operator: `n` and, per `j`, a list of `{m, re, im}` records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDoc {
    pub n: i64,
    #[serde(default)]
    pub coefficients: Vec<Vec<CoeffEntry>>,
}

impl OperatorDoc {
    pub fn to_spec(&self) -> Result<OperatorSpec> {
        if self.n < 1 {
            return Err(Error::InvalidOperator(format!("n = {} (must be >= 1)", self.n)));
        }
        let n = self.n as usize;
        if self.coefficients.len() > n {
            return Err(Error::InvalidOperator(format!(
                "{} coefficient lists given for n = {n}",
                self.coefficients.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(n);
        for j in 0..n {
            match self.coefficients.get(j) {
                None => coeffs.push(TrigPoly::zero()),
                Some(list) => {
                    let terms: Vec<_> =
                        list.iter().map(|e| (e.m, Complex64::new(e.re, e.im))).collect();
                    let p = TrigPoly::from_terms(&terms)
                        .map_err(|e| Error::InvalidOperator(format!("p_{j}: {e}")))?;
                    coeffs.push(p);
                }
            }
        }
        OperatorSpec::new(n, coeffs)
    }
}

/// Parses an operator document; JSON if it starts with `{`, TOML otherwise.
pub fn parse_operator(document: &str) -> Result<OperatorSpec> {
    let doc: OperatorDoc = if document.trim_start().starts_with('{') {
        serde_json::from_str(document).map_err(|e| Error::Config(e.to_string()))?
    } else {
        toml::from_str(document).map_err(|e| Error::Config(e.to_string()))?
    };
    doc.to_spec()
}

/// Expanded form `(-1)^n y^(2n) + sum_{m <= 2n-2} a_m y^(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    n: usize,
    a: Vec<TrigPoly>,
    // Dense tables for fast evaluation: a_m(x) = re0 + 2 Re sum_{k>=1} c_k e^{2ikx}.
    fast: Vec<(f64, Vec<Complex64>)>,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Leibniz expansion: `(p_j y^(j))^(j) = sum_i binom(j,i) p_j^(j-i) y^(j+i)`.
pub fn expand_standard_form(spec: &OperatorSpec) -> StandardForm {
    let n = spec.n;
    let mut a = vec![TrigPoly::zero(); 2 * n - 1];
    for (j, p) in spec.coeffs.iter().enumerate() {
        for i in 0..=j {
            let term = p.derivative_n(j - i).scale(binom(j, i));
            a[j + i] = a[j + i].add(&term);
        }
    }
    StandardForm::from_coefficients(n, a)
}

impl StandardForm {
    fn from_coefficients(n: usize, a: Vec<TrigPoly>) -> Self {
        let fast = a
            .iter()
            .map(|p| {
                let deg = p.degree() as i64;
                (p.coeff(0).re, (1..=deg).map(|m| p.coeff(m)).collect())
            })
            .collect();
        StandardForm { n, a, fast }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        2 * self.n
    }

    /// Coefficient of `y^(m)`; zero for `m = 2n-1`.
    pub fn coefficient(&self, m: usize) -> TrigPoly {
        self.a.get(m).cloned().unwrap_or_else(TrigPoly::zero)
    }

    pub fn coefficients(&self) -> &[TrigPoly] {
        &self.a
    }

    pub fn max_degree(&self) -> usize {
        self.a.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn is_free(&self) -> bool {
        self.a.iter().all(|p| p.is_zero())
    }

    /// `(a_0(x), ..., a_{2n-2}(x))`.
    pub fn eval_coeffs(&self, x: f64) -> Result<Vec<f64>> {
        self.a
            .iter()
            .enumerate()
            .map(|(m, p)| {
                let v = p.eval(x);
                if v.im.abs() > REAL_TOL * (1.0 + v.re.abs()) {
                    Err(Error::InvalidOperator(format!(
                        "a_{m}({x}) has imaginary part {:e}",
                        v.im
                    )))
                } else {
                    Ok(v.re)
                }
            })
            .collect()
    }

    /// Real values of all `a_m(x)` written into `out` (length `2n-1`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let maxdeg = self.fast.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
        let z = Complex64::from_polar(1.0, 2.0 * x);
        let mut pw = [Complex64::new(0.0, 0.0); 16];
        let mut heap;
        let powers: &mut [Complex64] = if maxdeg <= 16 {
            &mut pw[..maxdeg]
        } else {
            heap = vec![Complex64::new(0.0, 0.0); maxdeg];
            &mut heap
        };
        let mut zk = Complex64::new(1.0, 0.0);
        for p in powers.iter_mut() {
            zk *= z;
            *p = zk;
        }
        for (o, (c0, cs)) in out.iter_mut().zip(&self.fast) {
            let s: f64 = cs.iter().zip(powers.iter()).map(|(c, p)| (c * p).re).sum();
            *o = c0 + 2.0 * s;
        }
    }

    /// Crude bound `sum_m sup|a_m|^{1/(2n-m)}` on the coefficient contribution to solution growth.
    pub fn growth_bound(&self) -> f64 {
        let order = self.order();
        self.a
            .iter()
            .enumerate()
            .map(|(m, p)| p.sup_bound().powf(1.0 / (order - m) as f64))
            .sum()
    }
}
