//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use floquet_spectral::bands::{detect_bands, spectrum_union, BandAtlas, BandOptions};
use floquet_spectral::expansion::{
    bloch_eigs, gelfand_forward, gelfand_inverse, gelfand_nodes, gelfand_norm_sqr, hill_compare, reconstruct_u,
    spectral_matrix, Bump, CellRule, ExpansionOptions, SpectralBasis,
};
use floquet_spectral::monodromy::{char_poly, monodromy};
use floquet_spectral::multipliers::{multipliers_at, track_branches, OmegaOrder, TrackOptions};
use floquet_spectral::operator::{expand_standard_form, OperatorSpec, StandardForm, TrigPoly};
use floquet_spectral::oracle::fourier_edges;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

const TOL: f64 = 1e-12;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        println!("[{}] criterion {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn mathieu() -> StandardForm {
    expand_standard_form(&OperatorSpec::mathieu(1.0))
}

fn quartic() -> StandardForm {
    let spec = OperatorSpec::new(2, vec![TrigPoly::cosine(1, 1.0), TrigPoly::cosine(1, 1.0)]).unwrap();
    expand_standard_form(&spec)
}

fn atlas(sf: &StandardForm, a: f64, b: f64) -> BandAtlas {
    let table = track_branches(sf, a, b, &TrackOptions::default()).unwrap();
    detect_bands(&table, sf, &BandOptions::default()).unwrap()
}

fn basis(sf: &StandardForm, at: &BandAtlas, mesh_n: usize) -> SpectralBasis {
    SpectralBasis::build(sf, at, &ExpansionOptions { mesh_n, ..Default::default() }).unwrap()
}

fn bump_c(b: Bump) -> impl Fn(f64) -> Complex64 + Sync {
    move |x| Complex64::new(b.eval(x), 0.0)
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Deviation of computed multipliers from the free closed form. Unit-modulus branches are
/// compared relatively; growing and decaying ones through the logarithm, relative to its size.
fn free_deviation(n: usize, mu: f64) -> f64 {
    let sf = expand_standard_form(&OperatorSpec::free(n).unwrap());
    let got = multipliers_at(&sf, mu, TOL).unwrap();
    let order = OmegaOrder::new(n);
    let logs = order.asymptotic_log(mu);
    let mut worst: f64 = 0.0;
    for l in logs {
        let exact = l.exp();
        let dev = got
            .iter()
            .map(|r| {
                if l.re.abs() < 1e-12 {
                    (r / exact - 1.0).norm()
                } else {
                    (r / exact).ln().norm() / l.re.abs().max(1.0)
                }
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(dev);
    }
    worst
}

fn roundtrip(b: &SpectralBasis, f: Bump) -> f64 {
    let phi = b.forward(bump_c(f), f.support()).unwrap();
    let back = b.inverse_on_cells(&phi, -4..=3).unwrap();
    let w: Vec<f64> = (0..8).flat_map(|_| b.cell.w.iter().copied()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for ((x, v), w) in back.iter().zip(&w) {
        num += w * (v - f.eval(*x)).norm_sqr();
        den += w * f.eval(*x).powi(2);
    }
    (num / den).sqrt()
}

fn random_points(spectrum: &[(f64, f64)], count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let total: f64 = spectrum.iter().map(|s| s.1 - s.0).sum();
    (0..count)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            for s in spectrum {
                if u < s.1 - s.0 {
                    return s.0 + u;
                }
                u -= s.1 - s.0;
            }
            spectrum.last().unwrap().1
        })
        .collect()
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report { failed: 0 };
    let bump = Bump::default();

    // 1
    let mut dev1: f64 = 0.0;
    for n in [1, 2] {
        for mu in log_grid(1.0, 1e4, 200) {
            dev1 = dev1.max(free_deviation(n, mu));
        }
    }
    rep.check(1, "free multipliers", dev1 <= 1e-6, format!("max deviation {dev1:.3e} (<= 1e-6)"));

    // 2
    let (mut det_dev, mut pal): (f64, f64) = (0.0, 0.0);
    for (sf, a, b) in [(mathieu(), -1.0, 125.0), (quartic(), -2.0, 700.0)] {
        for i in 0..200 {
            let mu = a + (b - a) * i as f64 / 199.0;
            let md = monodromy(&sf, Complex64::new(mu, 0.0), TOL).unwrap();
            det_dev = det_dev.max((md.det_u() - 1.0).norm());
            let cp = char_poly(&md).unwrap();
            pal = pal.max(cp.palindromy_defect() / cp.scale());
        }
    }
    rep.check(
        2,
        "det U and palindromy",
        det_dev <= 1e-9 && pal <= 1e-8,
        format!("|det U - 1| {det_dev:.3e} (<= 1e-9), palindromy {pal:.3e} (<= 1e-8 scale)"),
    );

    let sf = mathieu();
    let at = atlas(&sf, -1.0, 125.0);

    // 3
    let oracle = fourier_edges(&OperatorSpec::mathieu(1.0), 20, 6).unwrap();
    let edges: Vec<f64> = spectrum_union(&at).iter().flat_map(|s| [s.0, s.1]).take(6).collect();
    let dev3 = edges.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rep.check(
        3,
        "Mathieu band edges",
        edges.len() == 6 && dev3 <= 1e-6,
        format!("max |edge - oracle| {dev3:.3e} over {} edges (<= 1e-6)", edges.len()),
    );

    // 4
    let b64 = basis(&sf, &at, 64);
    let (wid, slope) = (b64.max_weight_identity_defect(), b64.max_slope_residual());
    rep.check(
        4,
        "weight identities",
        wid <= 1e-8 && slope <= 1e-8,
        format!("weight {wid:.3e}, slope residual {slope:.3e} at {} nodes (<= 1e-8)", b64.nodes.len()),
    );

    // 5
    let (mut pairs, mut norm5, mut orth5): (usize, f64, f64) = (0, 0.0, 0.0);
    let mut err5 = None;
    for t in [0.4, 1.1, 2.0, 2.7, 3.9] {
        match bloch_eigs(&sf, &at, t, (-1.0, 125.0), &CellRule::default(), TOL) {
            Ok(r) => {
                pairs += r.pairs.len();
                norm5 = r.pairs.iter().map(|p| p.norm_defect()).fold(norm5, f64::max);
                orth5 = orth5.max(r.orthogonality_defect);
            }
            Err(e) => err5 = Some(e.to_string()),
        }
    }
    rep.check(
        5,
        "Bloch norm identity",
        err5.is_none() && pairs >= 50 && norm5 <= 1e-6 && orth5 <= 1e-8,
        match err5 {
            Some(e) => e,
            None => format!("{pairs} pairs, norm error {norm5:.3e} (<= 1e-6), orthogonality {orth5:.3e} (<= 1e-8)"),
        },
    );

    // 6, 7
    let q = quartic();
    let at_q = atlas(&q, -2.0, 700.0);
    let q64 = basis(&q, &at_q, 64);
    let mut ok6 = true;
    let mut detail6 = Vec::new();
    for (name, s, a, top) in [("mathieu", &sf, &at, &b64), ("n=2", &q, &at_q, &q64)] {
        let mut levels = Vec::new();
        for n in [4, 8] {
            levels.push(basis(s, a, n).parseval(bump_c(bump), bump.support()).unwrap().2);
        }
        levels.push(top.parseval(bump_c(bump), bump.support()).unwrap().2);
        ok6 &= levels[1] < levels[0] && levels.iter().skip(1).all(|&r| r <= 1e-3);
        detail6.push(format!("{name} N=4,8,64: {:.2e}, {:.2e}, {:.2e}", levels[0], levels[1], levels[2]));
    }
    rep.check(6, "Parseval", ok6, format!("{} (<= 1e-3, decreasing)", detail6.join("; ")));
    let (r_m, r_q) = (roundtrip(&b64, bump), roundtrip(&q64, bump));
    rep.check(
        7,
        "roundtrip on [-4pi, 4pi]",
        r_m <= 1e-3 && r_q <= 1e-3,
        format!("mathieu {r_m:.3e}, n=2 {r_q:.3e} (<= 1e-3)"),
    );

    // 8, 9
    let spectrum = spectrum_union(&at);
    let (mut herm, mut min_ev, mut rank_bad): (f64, f64, usize) = (0.0, f64::INFINITY, 0);
    for mu in random_points(&spectrum, 100, 7) {
        let s = spectral_matrix(&sf, &at, mu, TOL).unwrap();
        herm = herm.max(s.hermitian_defect);
        min_ev = min_ev.min(s.eigenvalues().unwrap()[0]);
        if s.rank(1e-8).unwrap() != s.contributing.len() {
            rank_bad += 1;
        }
    }
    rep.check(
        8,
        "spectral matrix",
        herm <= 1e-10 && min_ev >= -1e-10 && rank_bad == 0,
        format!("hermitian defect {herm:.3e}, min eigenvalue {min_ev:.3e}, rank mismatches {rank_bad}"),
    );
    let mut rec: f64 = 0.0;
    let mut err9 = None;
    for mu in random_points(&spectrum, 20, 11) {
        match reconstruct_u(&sf, mu, TOL) {
            Ok(r) => rec = rec.max(r.rel_error),
            Err(e) => err9 = Some(format!("mu = {mu}: {e}")),
        }
    }
    rep.check(
        9,
        "monodromy reconstruction",
        err9.is_none() && rec <= 1e-6,
        err9.unwrap_or_else(|| format!("max relative error {rec:.3e} at 20 points (<= 1e-6)")),
    );

    // 10
    let xs: Vec<f64> = (0..41).map(|i| -2.0 * PI + PI * i as f64 / 10.0).collect();
    let hc = hill_compare(&sf, &b64, bump_c(bump), bump.support(), &xs).unwrap();
    rep.check(
        10,
        "Hill cross-check",
        hc.max_deviation <= 1e-6,
        format!("max deviation {:.3e} on [-2pi, 2pi] (<= 1e-6)", hc.max_deviation),
    );

    // 11
    let cell = CellRule::default();
    let ts = gelfand_nodes(256);
    let grid = gelfand_forward(|x| bump.eval(x), bump.support(), &cell.x, &ts, 8).unwrap();
    let iso = (gelfand_norm_sqr(&grid, &cell.w) - bump.norm_sqr()).abs() / bump.norm_sqr();
    let mut rt: f64 = 0.0;
    for r in -3..=2 {
        for (x, v) in cell.x.iter().zip(gelfand_inverse(&grid, &ts, r)) {
            rt = rt.max((v - bump.eval(x + PI * r as f64)).norm());
        }
    }
    rep.check(
        11,
        "Gel'fand isometry",
        iso <= 1e-8 && rt <= 1e-10,
        format!("norm defect {iso:.3e} (<= 1e-8), roundtrip {rt:.3e} (<= 1e-10)"),
    );

    println!("acceptance: {} of 11 passed in {:.1} s", 11 - rep.failed, start.elapsed().as_secs_f64());
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
