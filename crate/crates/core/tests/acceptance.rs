//! Acceptance suite: one PASS/FAIL line per criterion with its measured values and runtime.
//! Runs without the libtest harness so the lines always reach the output.

use std::path::Path;
use std::time::Instant;

use deconv_core::bounds::{run_bound_lattice, BoundLattice};
use deconv_core::conjecture::{
    build_two_point, build_weighted_basis, figure_panels, hermite_functions, lecam_value, loglog_slope, norm_chain,
    uniform_grid, BasisQuadrature, FigureSettings, LeCamSettings, LowerBoundInstance, WeightSpec, FIGURE_KAPPAS,
};
use deconv_core::cli_io::emit_figure_data;
use deconv_core::contrast::{contrast_empirical, contrast_oracle, contrast_oracle_spectral};
use deconv_core::ecf::ecf_on_grid;
use deconv_core::gnoise::GNoise;
use deconv_core::legendre::legendre_eval;
use deconv_core::quadrature::{gauss_legendre, make_grid, QuadRule};
use deconv_core::runner::{median, run, ExperimentPlan};
use deconv_core::scenarios::{preset, Scenario};
use deconv_core::spectral::{FnSpectral, Spectral};
use deconv_core::taylor::{TaylorPoly, UpsilonParams};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget_secs: f64,
    check: fn() -> Check,
}

fn uniform_scenario() -> Scenario {
    Scenario::new(preset("uniform_repeated_g").unwrap()).unwrap()
}

fn plan(v: serde_json::Value) -> ExperimentPlan {
    serde_json::from_value(v).unwrap()
}

fn oracle_identification() -> Check {
    let model = uniform_scenario().true_cf();
    let grid = make_grid(1.0, 48, QuadRule::GaussLegendre, (1, 1)).map_err(|e| e.to_string())?;
    let at_truth = contrast_oracle_spectral(model.phi_r.as_ref(), &model, &grid).map_err(|e| e.to_string())?;
    let phi = model.phi_r.clone();
    let perturbed = FnSpectral::new(2, move |t| phi.value(t) + Complex64::new(0.1 * t[0] * t[1], 0.0));
    let off = contrast_oracle_spectral(&perturbed, &model, &grid).map_err(|e| e.to_string())?;
    Ok((
        at_truth <= 1e-10 && off >= 1e-6,
        format!("M(truth) = {at_truth:.3e} (<= 1e-10), M(perturbed) = {off:.3e} (>= 1e-6)"),
    ))
}

fn contrast_deviation_rate() -> Check {
    let scenario = uniform_scenario();
    let model = scenario.true_cf();
    let grid = make_grid(1.0, 24, QuadRule::GaussLegendre, (1, 1)).map_err(|e| e.to_string())?;
    let params = UpsilonParams::new(0.75, 2.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let probes: Vec<TaylorPoly> = (0..10).map(|_| TaylorPoly::random_member(1, 1, 4, &params, &mut rng)).collect();
    let oracle: Vec<f64> = probes
        .iter()
        .map(|p| contrast_oracle(p, &model, &grid))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let ns = [1e3, 1e4, 1e5];
    let mut medians = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let mut sups = Vec::new();
        for seed in 0..20u64 {
            let s = scenario.sample(n as usize, 100 + seed, i as u64).map_err(|e| e.to_string())?;
            let table = ecf_on_grid(&s, &grid).map_err(|e| e.to_string())?;
            let mut sup: f64 = 0.0;
            for (p, m) in probes.iter().zip(&oracle) {
                sup = sup.max((contrast_empirical(p, &table, &grid).map_err(|e| e.to_string())? - m).abs());
            }
            sups.push(sup);
        }
        medians.push(median(&sups));
    }
    let slope = loglog_slope(&ns, &medians);
    let medians: Vec<String> = medians.iter().map(|m| format!("{m:.3e}")).collect();
    Ok((
        (slope + 0.5).abs() <= 0.15,
        format!("median sup |M_n - M| = [{}], slope = {slope:.3} (-0.5 +/- 0.15)", medians.join(", ")),
    ))
}

fn estimator_consistency() -> Check {
    let p = plan(serde_json::json!({
        "scenario": preset("uniform_repeated_g").unwrap(),
        "n_list": [1000, 10000, 100000], "replicates": 20, "kappa_grid": [0.75], "S": 2.0, "seed": 11,
        "estimate": {"tuning": {"mode": "override", "m": 4}, "m_opt": 4}
    }));
    let report = run(&p).map_err(|e| e.to_string())?;
    let mut medians = Vec::new();
    for &n in &p.n_list {
        let v: Vec<f64> = report.cells.iter().filter(|c| c.n == n).map(|c| c.cf_error).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("failed cells at n = {n}"));
        }
        medians.push(median(&v));
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    Ok((decreasing, format!("median CF error over n = 1e3, 1e4, 1e5: {medians:.4?} (strictly decreasing)")))
}

fn truncation_bound() -> Check {
    let reports = run_bound_lattice(&BoundLattice::default(), 25, 7).map_err(|e| e.to_string())?;
    let trunc: Vec<_> = reports.iter().filter(|r| r.name == "truncation").collect();
    let applicable = trunc.iter().filter(|r| r.applicable).count();
    let violations = trunc.iter().filter(|r| r.applicable && !r.holds).count();
    let worst = trunc
        .iter()
        .filter(|r| r.applicable)
        .map(|r| r.ln_bound - r.ln_measured)
        .fold(f64::INFINITY, f64::min);
    Ok((
        violations == 0,
        format!("{violations} violations in {applicable} applicable cells (of {}), min log-slack {worst:.3}", trunc.len()),
    ))
}

fn sigma1_bound() -> Check {
    let lattice = BoundLattice {
        ms: (1..=6).collect(),
        ..BoundLattice::default()
    };
    let reports = run_bound_lattice(&lattice, 1, 0).map_err(|e| e.to_string())?;
    let s: Vec<_> = reports.iter().filter(|r| r.name == "sigma1").collect();
    let violations = s.iter().filter(|r| !r.holds).count();
    let worst = s.iter().map(|r| r.ln_bound - r.ln_measured).fold(f64::INFINITY, f64::min);
    Ok((violations == 0, format!("{violations} violations in {} cells, min log-slack {worst:.3}", s.len())))
}

fn orthonormality() -> Check {
    let (t, w) = gauss_legendre(64);
    let mut legendre_err: f64 = 0.0;
    for &nu in &[0.5, 1.0, 2.0] {
        for i in 0..=12 {
            for j in 0..=12 {
                let g: f64 = t
                    .iter()
                    .zip(&w)
                    .map(|(t, w)| w * nu * legendre_eval(i, nu, nu * t).0 * legendre_eval(j, nu, nu * t).0)
                    .sum();
                legendre_err = legendre_err.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    let mut weighted_err: f64 = 0.0;
    for kappa in [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95] {
        let b = build_weighted_basis(WeightSpec::new(kappa, 1.0).map_err(|e| e.to_string())?, 16, BasisQuadrature::default())
            .map_err(|e| e.to_string())?;
        weighted_err = weighted_err.max(b.certificate);
    }
    let ind = build_weighted_basis(WeightSpec::new(1.0, 1.0).unwrap(), 16, BasisQuadrature::default()).map_err(|e| e.to_string())?;
    let mut legendre_limit: f64 = 0.0;
    for k in 0..=16 {
        for x in uniform_grid(1.0, 41) {
            legendre_limit = legendre_limit.max((ind.eval(k, x) - 2.0 * legendre_eval(k, 1.0, x).0).abs());
        }
    }
    let half = build_weighted_basis(WeightSpec::new(0.5, 1.0).unwrap(), 10, BasisQuadrature::default()).map_err(|e| e.to_string())?;
    let xs = uniform_grid(6.0, 601);
    let mut min_corr: f64 = 1.0;
    for k in 0..=10u32 {
        let a: Vec<f64> = xs.iter().map(|x| half.ph(k, *x)).collect();
        let b: Vec<f64> = xs.iter().map(|x| hermite_functions(k as usize, *x)[k as usize]).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let corr = dot / (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
        min_corr = min_corr.min(corr.abs());
    }
    Ok((
        legendre_err <= 1e-10 && weighted_err <= 1e-6 && legendre_limit <= 1e-8 && min_corr > 0.999,
        format!(
            "Legendre Gram {legendre_err:.2e} (1e-10), weighted Gram {weighted_err:.2e} (1e-6), \
             kappa=1 vs Legendre {legendre_limit:.2e} (1e-8), kappa=1/2 Hermite corr {min_corr:.7} (> 0.999)"
        ),
    ))
}

fn norm_chain_check() -> Check {
    let mut cs_ok = true;
    let mut slopes = Vec::new();
    for kappa in FIGURE_KAPPAS {
        let basis = build_weighted_basis(WeightSpec::new(kappa, 1.0).map_err(|e| e.to_string())?, 16, BasisQuadrature::default())
            .map_err(|e| e.to_string())?;
        let mut ks = Vec::new();
        let mut norms = Vec::new();
        for k in 1..=16u32 {
            let kf = f64::from(k);
            let mut plain = f64::NAN;
            for cb in [4.0, 16.0] {
                let (a, b) = norm_chain(&basis, k, cb * kf.powf(kappa)).map_err(|e| e.to_string())?;
                cs_ok &= b <= a;
                plain = a;
            }
            if k >= 6 {
                ks.push(kf);
                norms.push(plain);
            }
        }
        slopes.push((kappa, loglog_slope(&ks, &norms)));
    }
    let slopes_ok = slopes.iter().all(|(k, s)| (s - (k - 1.0)).abs() <= 0.25);
    let text: Vec<String> = slopes.iter().map(|(k, s)| format!("{k}: {s:.3}")).collect();
    Ok((
        cs_ok && slopes_ok,
        format!("smoothing never increases the norm: {cs_ok}; slopes vs kappa - 1 (+/- 0.25): {}", text.join(", ")),
    ))
}

fn two_point() -> Check {
    let kappa = 0.7;
    let basis = build_weighted_basis(WeightSpec::new(kappa, 1.0).unwrap(), 16, BasisQuadrature::default()).map_err(|e| e.to_string())?;
    let inst = LowerBoundInstance::new(kappa, 0.3, 1.0, 1.0, 1e4);
    let tp = build_two_point(&inst, &basis, None).map_err(|e| e.to_string())?;
    let z = &tp.zeta_n;
    let (lo, hi) = (z.start, z.end());
    let min = (0..10_000)
        .map(|i| z.eval(lo + (hi - lo) * i as f64 / 9_999.0))
        .fold(f64::INFINITY, f64::min);
    let mass = z.integral();
    let g = GNoise::new(inst.c).map_err(|e| e.to_string())?;
    let full = lecam_value(&tp, &g, inst.n, LeCamSettings::default()).map_err(|e| e.to_string())?;
    let half = build_two_point(&inst, &basis, Some(tp.alpha_n / 2.0)).map_err(|e| e.to_string())?;
    let hv = lecam_value(&half, &g, inst.n, LeCamSettings::default()).map_err(|e| e.to_string())?;
    let ratio = hv.value / full.value;
    Ok((
        min >= -1e-12 && (mass - 1.0).abs() <= 1e-8 && full.value > 0.0 && (ratio / 0.25 - 1.0).abs() <= 0.05,
        format!(
            "K_n = {}, b_n = {:.3}, alpha_n = {:.3e}; min zeta_n = {min:.3e}, mass - 1 = {:.1e}, Le Cam = {:.3e}, halving ratio = {ratio:.4} (0.25 +/- 5%)",
            tp.k_n,
            tp.b_n,
            tp.alpha_n,
            mass - 1.0,
            full.value
        ),
    ))
}

fn adaptive_selection() -> Check {
    let p = plan(serde_json::json!({
        "scenario": preset("uniform_repeated_g").unwrap(),
        "n_list": [10000], "replicates": 50, "kappa_grid": [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0],
        "S": 2.0, "seed": 5, "adaptive": true,
        "estimate": {"tuning": {"mode": "override", "m": 4, "omega": 2.0}}
    }));
    let report = run(&p).map_err(|e| e.to_string())?;
    let mut hits = 0;
    let mut errors = Vec::new();
    for a in &report.adaptive {
        let Some(sel) = &a.selection else { continue };
        let sigma = sel
            .rows
            .iter()
            .find(|r| (r.kappa - 0.75).abs() < 1e-12)
            .map(|r| r.sigma_n)
            .ok_or("grid lacks 0.75")?;
        errors.push(a.l2_aligned / sigma);
        if a.l2_aligned <= 5.0 * sigma {
            hits += 1;
        }
    }
    let share = hits as f64 / report.adaptive.len() as f64;
    Ok((
        share >= 0.9,
        format!(
            "{hits} of {} replicates within 5 sigma_n(0.75) (>= 90%), median error/sigma = {:.3}",
            report.adaptive.len(),
            median(&errors)
        ),
    ))
}

fn figure_regeneration() -> Check {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let panels = figure_panels(&FIGURE_KAPPAS, &FigureSettings::default()).map_err(|e| e.to_string())?;
    let manifest = emit_figure_data(&panels, dir.path()).map_err(|e| e.to_string())?;
    let mut files = manifest.files.clone();
    files.push("MANIFEST.json".into());
    let mismatched: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(dir.path().join(f)).ok() != std::fs::read(golden.join(f)).ok())
        .collect();
    Ok((
        mismatched.is_empty() && manifest.panels.len() == 12,
        format!("{} panels, {} files byte-identical, mismatched: {mismatched:?}", manifest.panels.len(), files.len() - mismatched.len()),
    ))
}

fn determinism() -> Check {
    let p = plan(serde_json::json!({
        "scenario": preset("uniform_repeated_g").unwrap(),
        "n_list": [500, 2000], "replicates": 3, "kappa_grid": [0.7, 0.8], "S": 2.0, "seed": 42, "adaptive": true,
        "estimate": {"tuning": {"mode": "override", "m": 3, "omega": 2.0}, "lattice_points": 201}
    }));
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(&p).and_then(|r| r.write(a.path())).map_err(|e| e.to_string())?;
    run(&p).and_then(|r| r.write(b.path())).map_err(|e| e.to_string())?;
    let files = ["cells.csv", "aggregates.csv", "adaptive.csv", "summary.json"];
    let same = files
        .iter()
        .filter(|f| {
            let x = std::fs::read(a.path().join(f));
            x.is_ok() && x.ok() == std::fs::read(b.path().join(f)).ok()
        })
        .count();
    Ok((same == files.len(), format!("{same} of {} report files byte-identical", files.len())))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "oracle identification", budget_secs: 5.0, check: oracle_identification },
        Criterion { id: 2, name: "contrast deviation rate", budget_secs: 600.0, check: contrast_deviation_rate },
        Criterion { id: 3, name: "estimator consistency", budget_secs: 1800.0, check: estimator_consistency },
        Criterion { id: 4, name: "truncation bound", budget_secs: 120.0, check: truncation_bound },
        Criterion { id: 5, name: "sigma_1 bound", budget_secs: 60.0, check: sigma1_bound },
        Criterion { id: 6, name: "orthonormality", budget_secs: 300.0, check: orthonormality },
        Criterion { id: 7, name: "norm chain", budget_secs: 300.0, check: norm_chain_check },
        Criterion { id: 8, name: "two-point construction", budget_secs: 120.0, check: two_point },
        Criterion { id: 9, name: "adaptive selection", budget_secs: 2700.0, check: adaptive_selection },
        Criterion { id: 10, name: "figure regeneration", budget_secs: 300.0, check: figure_regeneration },
        Criterion { id: 11, name: "determinism", budget_secs: f64::INFINITY, check: determinism },
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    println!("acceptance criteria");
    for c in criteria.iter().filter(|c| only.is_none_or(|o| o == c.id)) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= c.budget_secs;
        let (pass, detail) = match outcome {
            Ok((ok, d)) => (ok && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let budget = if c.budget_secs.is_finite() { format!(" / {:.0} s", c.budget_secs) } else { String::new() };
        println!(
            "[{}] {:>2} {}: {detail} [{secs:.1} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("all criteria passed");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
