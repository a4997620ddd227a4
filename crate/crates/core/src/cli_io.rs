//! Run configuration, CSV schemas, the run manifest and the `floquet` command line.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bands::{self, BandAtlas, BandOptions};
use crate::error::{Error, Result};
use crate::expansion::{self, Bump, CellRule, ExpansionOptions, SpectralBasis};
use crate::multipliers::{self, BranchTable, TrackOptions};
use crate::operator::{expand_standard_form, CoeffEntry, OperatorDoc, OperatorSpec, StandardForm};
use crate::oracle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    /// `mathieu` (with `q`) or `free` (with `n`); absent for an explicit operator.
    pub preset: Option<String>,
    pub q: Option<f64>,
    pub n: Option<i64>,
    pub coefficients: Option<Vec<Vec<CoeffEntry>>>,
}

impl OperatorSection {
    pub fn to_spec(&self) -> Result<OperatorSpec> {
        match self.preset.as_deref() {
            Some("mathieu") => {
                if self.coefficients.is_some() || self.n.is_some_and(|n| n != 1) {
                    return Err(Error::Config("the mathieu preset takes only `q`".into()));
                }
                Ok(OperatorSpec::mathieu(self.q.unwrap_or(1.0)))
            }
            Some("free") => {
                if self.coefficients.is_some() || self.q.is_some() {
                    return Err(Error::Config("the free preset takes only `n`".into()));
                }
                let n = self.n.unwrap_or(1);
                if n < 1 {
                    return Err(Error::InvalidOperator(format!("n = {n} (must be >= 1)")));
                }
                OperatorSpec::free(n as usize)
            }
            Some(other) => Err(Error::Config(format!("unknown operator preset `{other}`"))),
            None => {
                if self.q.is_some() {
                    return Err(Error::Config("`q` needs preset = \"mathieu\"".into()));
                }
                let n = self.n.ok_or_else(|| Error::Config("operator needs `n`".into()))?;
                OperatorDoc { n, coefficients: self.coefficients.clone().unwrap_or_default() }.to_spec()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode_tol: f64,
    pub band_tol: f64,
    pub collision_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ode_tol: 1e-12, band_tol: 1e-7, collision_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestFunction {
    pub kind: String,
    pub center: f64,
    pub width: f64,
    pub support_radius: f64,
}

impl Default for TestFunction {
    fn default() -> Self {
        let b = Bump::default();
        TestFunction { kind: "bump".into(), center: b.center, width: b.width, support_radius: b.radius }
    }
}

impl TestFunction {
    pub fn bump(&self) -> Result<Bump> {
        if self.kind != "bump" {
            return Err(Error::Config(format!("unknown test function kind `{}`", self.kind)));
        }
        if !(self.width > 0.0 && self.support_radius > 0.0 && self.center.is_finite()) {
            return Err(Error::Config("test function needs width > 0 and support_radius > 0".into()));
        }
        Ok(Bump { center: self.center, width: self.width, radius: self.support_radius })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochSection {
    pub t: Vec<f64>,
    pub window: Option<[f64; 2]>,
}

impl Default for BlochSection {
    fn default() -> Self {
        BlochSection { t: vec![0.4, 1.1, 2.0, 2.7, 3.9], window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    /// Explicit sample points.
    pub mu: Vec<f64>,
    /// Additional points spread over the spectrum by a golden-ratio sequence.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpandSection {
    /// Reconstruction on the cell quadrature nodes of `[-cells pi, cells pi]`.
    pub cells: i64,
    /// Points for the second-order cross-check.
    pub hill_points: usize,
}

impl Default for ExpandSection {
    fn default() -> Self {
        ExpandSection { cells: 4, hill_points: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// `fourier-edges`, `free-edges`, `free-multipliers` or `plancherel`.
    pub kind: String,
    pub modes: usize,
    pub count: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { kind: "fourier-edges".into(), modes: 20, count: 6 }
    }
}

fn default_density() -> usize {
    32
}

fn default_mesh() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: OperatorSection,
    pub mu_range: [f64; 2],
    #[serde(default = "default_density")]
    pub grid_density: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub test_function: TestFunction,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_mesh")]
    pub mesh_n: usize,
    #[serde(default)]
    pub bloch: BlochSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub expand: ExpandSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

impl RunConfig {
    /// JSON when the document starts with `{`, TOML otherwise.
    pub fn parse(document: &str) -> Result<Self> {
        let cfg: RunConfig = if document.trim_start().starts_with('{') {
            serde_json::from_str(document).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(document).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.mu_range;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Config(format!("mu_range [{a}, {b}] is empty")));
        }
        if self.grid_density < 16 {
            return Err(Error::Config(format!("grid_density = {} (must be >= 16)", self.grid_density)));
        }
        if self.mesh_n < 2 {
            return Err(Error::Config(format!("mesh_n = {} (must be >= 2)", self.mesh_n)));
        }
        let t = self.tolerances;
        crate::monodromy::check_tol(t.ode_tol)?;
        for (name, v) in [("band_tol", t.band_tol), ("collision_tol", t.collision_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(Error::Config(format!("{name} = {v:e} outside (0, 1e-2]")));
            }
        }
        self.operator.to_spec()?;
        self.test_function.bump()?;
        Ok(())
    }

    pub fn standard_form(&self) -> Result<StandardForm> {
        Ok(expand_standard_form(&self.operator.to_spec()?))
    }

    fn track_options(&self) -> TrackOptions {
        TrackOptions {
            grid_density: self.grid_density,
            collision_tol: self.tolerances.collision_tol,
            ode_tol: self.tolerances.ode_tol,
            ..TrackOptions::default()
        }
    }

    fn band_options(&self) -> BandOptions {
        BandOptions { band_tol: self.tolerances.band_tol, ode_tol: self.tolerances.ode_tol }
    }

    fn expansion_options(&self, mesh_n: usize) -> ExpansionOptions {
        ExpansionOptions { mesh_n, ode_tol: self.tolerances.ode_tol, cell: CellRule::default() }
    }
}

/// Fixed CSV layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Branches,
    Collisions,
    Bands,
    Mesh,
    Transform,
    Reconstruction,
    Spectral,
    Bloch,
    Monodromy,
    Hill,
    Edges,
    Parseval,
}

impl Schema {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::Branches => &["mu", "k", "rho_re", "rho_im", "abs_rho"],
            Schema::Collisions => &["mu_lo", "mu_hi", "k1", "k2", "on_unit_circle"],
            Schema::Bands => &["k", "j", "mu_lo", "mu_hi", "t_lo", "t_hi", "orientation", "degenerate"],
            Schema::Mesh => &["k", "j", "t", "mu", "dmu_dt"],
            Schema::Transform => &["k", "j", "t", "mu", "phi_re", "phi_im", "p", "w"],
            Schema::Reconstruction => &["x", "f_re", "f_im"],
            Schema::Spectral => &["mu", "q", "qp", "M_re", "M_im"],
            Schema::Bloch => &["t", "mu", "k", "norm_sqr", "norm_formula_re", "norm_formula_im", "norm_rel_err"],
            Schema::Monodromy => &["mu", "q", "qp", "U_rec_re", "U_rec_im", "U_re", "U_im"],
            Schema::Hill => &["x", "general_re", "general_im", "hill_re", "hill_im"],
            Schema::Edges => &["i", "mu"],
            Schema::Parseval => &["mesh_n", "lhs", "rhs", "rel_err"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Bool(bool),
}

impl Cell {
    /// Reals with 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Cell::Real(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: Schema) -> Self {
        Table { schema, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// Writes `table` as CSV with the schema header; every row must match the schema width.
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    let cols = table.schema.columns();
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != cols.len() {
            return Err(Error::Schema(format!(
                "row {i} has {} fields, schema {:?} has {}",
                row.len(),
                table.schema,
                cols.len()
            )));
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(cols).map_err(|e| Error::Io(e.to_string()))?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Parser)]
#[command(name = "floquet", version, about = "Floquet spectra and eigenfunction expansions of periodic operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Track the multiplier branches over `mu_range`.
    Multipliers,
    /// Band edges and band parametrizations.
    Bands,
    /// Forward and inverse transform of the test function.
    Expand,
    /// Parseval identity for the test function.
    Parseval,
    /// Eigenpairs of the Bloch operators.
    Bloch,
    /// Spectral matrix samples.
    SpectralMatrix,
    /// Monodromy matrix from the spectral factors.
    Reconstruct,
    /// Second-order expansion formula against the general inverse transform.
    HillCheck,
    /// Built-in reference values.
    Oracle {
        /// `fourier-edges` (alias `mathieu-edges`), `free-edges`, `free-multipliers` or `plancherel`.
        kind: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Multipliers => "multipliers",
            Command::Bands => "bands",
            Command::Expand => "expand",
            Command::Parseval => "parseval",
            Command::Bloch => "bloch",
            Command::SpectralMatrix => "spectral-matrix",
            Command::Reconstruct => "reconstruct",
            Command::HillCheck => "hill-check",
            Command::Oracle { .. } => "oracle",
        }
    }
}

/// Files and scalar results of one run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub summary: serde_json::Map<String, Value>,
}

impl Outcome {
    fn table(&mut self, name: &str, t: Table) {
        self.tables.push((name.to_string(), t));
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }
}

fn atlas_for(cfg: &RunConfig, sf: &StandardForm) -> Result<(BranchTable, BandAtlas)> {
    let [a, b] = cfg.mu_range;
    let table = multipliers::track_branches(sf, a, b, &cfg.track_options())?;
    let atlas = bands::detect_bands(&table, sf, &cfg.band_options())?;
    Ok((table, atlas))
}

fn bump_fn(b: Bump) -> impl Fn(f64) -> Complex64 + Sync {
    move |x| Complex64::new(b.eval(x), 0.0)
}

/// Points spread over the interior of the spectrum.
pub fn spectrum_points(spectrum: &[(f64, f64)], count: usize) -> Vec<f64> {
    let total: f64 = spectrum.iter().map(|s| s.1 - s.0).sum();
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    (1..=count)
        .filter_map(|i| {
            let mut u = (i as f64 * golden).fract() * total;
            for s in spectrum {
                let len = s.1 - s.0;
                if u < len {
                    return Some(s.0 + u);
                }
                u -= len;
            }
            None
        })
        .collect()
}

pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let sf = cfg.standard_form()?;
    let tol = cfg.tolerances.ode_tol;
    let mut out = Outcome::default();
    match command {
        Command::Multipliers => {
            let [a, b] = cfg.mu_range;
            let table = multipliers::track_branches(&sf, a, b, &cfg.track_options())?;
            let mut t = Table::new(Schema::Branches);
            for (i, mu) in table.mu_grid.iter().enumerate() {
                for (k, rho) in table.values_at(i).iter().enumerate() {
                    t.push(vec![(*mu).into(), k.into(), rho.re.into(), rho.im.into(), rho.norm().into()]);
                }
            }
            out.table("multipliers.csv", t);
            out.table("collisions.csv", collision_table(&table));
            out.note("grid_points", table.mu_grid.len());
            out.note("involution_defect", multipliers::involution_check(&table));
        }
        Command::Bands => {
            let (table, atlas) = atlas_for(cfg, &sf)?;
            let mut t = Table::new(Schema::Bands);
            let mut mesh = Table::new(Schema::Mesh);
            for b in &atlas.bands {
                t.push(vec![
                    b.k.into(),
                    b.j.into(),
                    b.mu_interval.0.into(),
                    b.mu_interval.1.into(),
                    b.t_interval.0.into(),
                    b.t_interval.1.into(),
                    b.orientation.into(),
                    b.is_degenerate().into(),
                ]);
                if !b.is_degenerate() {
                    let m = bands::parametrize_band(&sf, b, cfg.mesh_n, tol)?;
                    for i in 0..m.t.len() {
                        mesh.push(vec![m.k.into(), m.j.into(), m.t[i].into(), m.mu[i].into(), m.dmu_dt[i].into()]);
                    }
                }
            }
            out.table("bands.csv", t);
            out.table("mesh.csv", mesh);
            out.table("collisions.csv", collision_table(&table));
            out.note("exceptional_t", atlas.exceptional_t.clone());
            out.note("spectrum", atlas.spectrum.iter().map(|s| vec![s.0, s.1]).collect::<Vec<_>>());
        }
        Command::Expand => {
            let (_, atlas) = atlas_for(cfg, &sf)?;
            let bump = cfg.test_function.bump()?;
            let basis = SpectralBasis::build(&sf, &atlas, &cfg.expansion_options(cfg.mesh_n))?;
            let phi = basis.forward(bump_fn(bump), bump.support())?;
            let mut t = Table::new(Schema::Transform);
            for s in &phi.samples {
                t.push(vec![
                    s.k.into(),
                    s.j.into(),
                    s.t.into(),
                    s.mu.into(),
                    s.phi.re.into(),
                    s.phi.im.into(),
                    s.p.into(),
                    s.w.into(),
                ]);
            }
            let cells = cfg.expand.cells.max(1);
            let back = basis.inverse_on_cells(&phi, -cells..=cells - 1)?;
            let mut r = Table::new(Schema::Reconstruction);
            let (mut num, mut den) = (0.0, 0.0);
            let wts: Vec<f64> = (0..2 * cells).flat_map(|_| basis.cell.w.iter().copied()).collect();
            for ((x, v), w) in back.iter().zip(&wts) {
                r.push(vec![(*x).into(), v.re.into(), v.im.into()]);
                num += w * (v - bump.eval(*x)).norm_sqr();
                den += w * bump.eval(*x).powi(2);
            }
            out.table("transform.csv", t);
            out.table("reconstruction.csv", r);
            out.note("roundtrip_rel_err", (num / den).sqrt());
            out.note("weight_identity_defect", basis.max_weight_identity_defect());
            out.note("slope_identity_residual", basis.max_slope_residual());
            out.note("conjugacy_defect", basis.max_conj_defect());
        }
        Command::Parseval => {
            let (_, atlas) = atlas_for(cfg, &sf)?;
            let bump = cfg.test_function.bump()?;
            let mut levels = Vec::new();
            let mut t = Table::new(Schema::Parseval);
            for n in [cfg.mesh_n.div_ceil(2).max(2), cfg.mesh_n] {
                let basis = SpectralBasis::build(&sf, &atlas, &cfg.expansion_options(n))?;
                let (lhs, rhs, rel) = basis.parseval(bump_fn(bump), bump.support())?;
                levels.push(json!({"mesh_n": n, "lhs": lhs, "rhs": rhs, "rel_err": rel}));
                t.push(vec![n.into(), lhs.into(), rhs.into(), rel.into()]);
                if n == cfg.mesh_n {
                    out.note("lhs", lhs);
                    out.note("rhs", rhs);
                    out.note("rel_err", rel);
                }
            }
            out.table("parseval.csv", t);
            out.note("levels", levels);
        }
        Command::Bloch => {
            let (_, atlas) = atlas_for(cfg, &sf)?;
            let window = cfg.bloch.window.map(|w| (w[0], w[1])).unwrap_or(atlas.mu_range);
            let mut t = Table::new(Schema::Bloch);
            let (mut worst, mut orth, mut count): (f64, f64, usize) = (0.0, 0.0, 0);
            for &tv in &cfg.bloch.t {
                let res = expansion::bloch_eigs(&sf, &atlas, tv, window, &CellRule::default(), tol)?;
                for p in &res.pairs {
                    t.push(vec![
                        res.t.into(),
                        p.mu.into(),
                        p.k.into(),
                        p.norm_sqr.into(),
                        p.norm_formula.re.into(),
                        p.norm_formula.im.into(),
                        p.norm_defect().into(),
                    ]);
                    worst = worst.max(p.norm_defect());
                }
                orth = orth.max(res.orthogonality_defect);
                count += res.pairs.len();
            }
            out.table("bloch.csv", t);
            out.note("eigenpairs", count);
            out.note("max_norm_rel_err", worst);
            out.note("max_orthogonality_defect", orth);
        }
        Command::SpectralMatrix => {
            let (_, atlas) = atlas_for(cfg, &sf)?;
            let mut mus = cfg.spectral.mu.clone();
            mus.extend(spectrum_points(&atlas.spectrum, cfg.spectral.points));
            let mut t = Table::new(Schema::Spectral);
            let (mut herm, mut min_ev, mut rank_ok): (f64, f64, bool) = (0.0, f64::INFINITY, true);
            for &mu in &mus {
                let s = expansion::spectral_matrix(&sf, &atlas, mu, tol)?;
                for q in 0..s.m.nrows() {
                    for qp in 0..s.m.ncols() {
                        let z = s.m[(q, qp)];
                        t.push(vec![mu.into(), q.into(), qp.into(), z.re.into(), z.im.into()]);
                    }
                }
                herm = herm.max(s.hermitian_defect);
                min_ev = min_ev.min(s.eigenvalues()?[0]);
                rank_ok &= s.rank(1e-8)? == s.contributing.len();
            }
            out.table("spectral.csv", t);
            out.note("points", mus.len());
            out.note("max_hermitian_defect", herm);
            out.note("min_eigenvalue", if min_ev.is_finite() { json!(min_ev) } else { Value::Null });
            out.note("rank_matches_branches", rank_ok);
        }
        Command::Reconstruct => {
            let (_, atlas) = atlas_for(cfg, &sf)?;
            let mut mus = cfg.spectral.mu.clone();
            mus.extend(spectrum_points(&atlas.spectrum, cfg.spectral.points));
            let mut t = Table::new(Schema::Monodromy);
            let mut worst: f64 = 0.0;
            for &mu in &mus {
                let r = expansion::reconstruct_u(&sf, mu, tol)?;
                for q in 0..r.u_rec.nrows() {
                    for qp in 0..r.u_rec.ncols() {
                        let (a, b) = (r.u_rec[(q, qp)], r.u_direct[(q, qp)]);
                        t.push(vec![mu.into(), q.into(), qp.into(), a.re.into(), a.im.into(), b.re.into(), b.im.into()]);
                    }
                }
                worst = worst.max(r.rel_error);
            }
            out.table("reconstruct.csv", t);
            out.note("points", mus.len());
            out.note("max_rel_error", worst);
        }
        Command::HillCheck => {
            let (_, atlas) = atlas_for(cfg, &sf)?;
            let bump = cfg.test_function.bump()?;
            let basis = SpectralBasis::build(&sf, &atlas, &cfg.expansion_options(cfg.mesh_n))?;
            let m = cfg.expand.hill_points.max(2);
            let xs: Vec<f64> = (0..m).map(|i| -2.0 * PI + 4.0 * PI * i as f64 / (m - 1) as f64).collect();
            let hc = expansion::hill_compare(&sf, &basis, bump_fn(bump), bump.support(), &xs)?;
            let mut t = Table::new(Schema::Hill);
            for i in 0..xs.len() {
                let (g, h) = (hc.general[i], hc.hill[i]);
                t.push(vec![xs[i].into(), g.re.into(), g.im.into(), h.re.into(), h.im.into()]);
            }
            out.table("hill.csv", t);
            out.note("max_deviation", hc.max_deviation);
        }
        Command::Oracle { kind } => oracle_run(cfg, kind.as_deref(), &mut out)?,
    }
    Ok(out)
}

fn collision_table(table: &BranchTable) -> Table {
    let mut t = Table::new(Schema::Collisions);
    for ev in &table.collisions {
        t.push(vec![
            ev.mu_interval.0.into(),
            ev.mu_interval.1.into(),
            ev.branch_pair.0.into(),
            ev.branch_pair.1.into(),
            ev.on_unit_circle.into(),
        ]);
    }
    t
}

fn oracle_run(cfg: &RunConfig, kind: Option<&str>, out: &mut Outcome) -> Result<()> {
    let spec = cfg.operator.to_spec()?;
    let o = &cfg.oracle;
    let kind = kind.unwrap_or(&o.kind);
    match kind {
        "fourier-edges" | "mathieu-edges" => {
            let edges = oracle::fourier_edges(&spec, o.modes, o.count)?;
            let mut t = Table::new(Schema::Edges);
            for (i, e) in edges.iter().enumerate() {
                t.push(vec![i.into(), (*e).into()]);
            }
            out.table("oracle_edges.csv", t);
            out.note("modes", o.modes);
        }
        "free-edges" => {
            let edges = oracle::free_edges(spec.n(), cfg.mu_range[1]);
            let mut t = Table::new(Schema::Edges);
            for (i, e) in edges.iter().filter(|e| **e >= cfg.mu_range[0]).enumerate() {
                t.push(vec![i.into(), (*e).into()]);
            }
            out.table("oracle_edges.csv", t);
        }
        "free-multipliers" => {
            let [a, b] = cfg.mu_range;
            let grid = multipliers::xi_grid(2 * spec.n(), a.max(0.0), b, cfg.grid_density);
            let mut t = Table::new(Schema::Branches);
            for mu in grid {
                for (k, rho) in oracle::free_multipliers(spec.n(), mu).iter().enumerate() {
                    t.push(vec![mu.into(), k.into(), rho.re.into(), rho.im.into(), rho.norm().into()]);
                }
            }
            out.table("oracle_multipliers.csv", t);
        }
        "plancherel" => {
            let b = cfg.test_function.bump()?;
            let (lhs, rhs) = oracle::plancherel(&|x| b.eval(x), b.support(), 40.0 / b.width);
            out.note("lhs", lhs);
            out.note("rhs", rhs);
            out.note("rel_err", (lhs - rhs).abs() / lhs);
        }
        other => return Err(Error::Config(format!("unknown oracle kind `{other}`"))),
    }
    out.note("oracle", kind);
    Ok(())
}

/// Writes the tables and `manifest.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    command: &Command,
    cfg: &RunConfig,
    raw_config: &str,
    threads: usize,
    outcome: &Outcome,
    wall: f64,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, table) in &outcome.tables {
        let path = dir.join(name);
        emit_csv(table, &path)?;
        files.push(json!({
            "name": name,
            "sha256": sha256_file(&path)?,
            "rows": table.rows.len(),
        }));
    }
    let manifest = json!({
        "command": command.name(),
        "config": serde_json::to_value(cfg).map_err(|e| Error::Io(e.to_string()))?,
        "config_source": raw_config,
        "versions": {
            "floquet-spectral": env!("CARGO_PKG_VERSION"),
        },
        "threads": threads,
        "wall_time_s": wall,
        "summary": Value::Object(outcome.summary.clone()),
        "files": files,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidOperator(_) | Error::ToleranceOutOfRange(_) => 2,
        _ => 1,
    }
}

fn load(cli: &Cli) -> Result<(RunConfig, String, PathBuf)> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let raw = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&raw)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory (use --out or output_dir)".into()))?;
    Ok((cfg, raw, dir))
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let (cfg, raw, dir) = match load(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    let start = Instant::now();
    let result = pool.install(|| execute(&cli.command, &cfg));
    let wall = start.elapsed().as_secs_f64();
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match write_outputs(&dir, &cli.command, &cfg, &raw, pool.current_num_threads(), &outcome, wall) {
        Ok(()) => {
            for (k, v) in &outcome.summary {
                println!("{k} = {v}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
