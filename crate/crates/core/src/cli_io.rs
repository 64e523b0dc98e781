//! Configuration schema, run directories and figure-data emission for the command-line
//! front end, plus one driver per subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adaptive::{write_selection_csv, KappaGrid};
use crate::bounds::{run_bound_lattice, write_bound_reports, BoundLattice};
use crate::conjecture::{
    build_weighted_basis, build_two_point, census_holdout, conjecture_summary, figure_panels, lecam_value,
    write_summary, FigureSettings, LeCamSettings, LowerBoundInstance, ProfilePanel, WeightSpec, FIGURE_KAPPAS,
};
use crate::ecf::SampleSet;
use crate::error::{Error, Result};
use crate::gnoise::GNoise;
use crate::reconstruct::c_kappa_cap;
use crate::runner::{estimate, pilot_c_sigma, run, select_estimates, EstimateSettings, ExperimentPlan};
use crate::scenarios::{preset, Scenario, ScenarioSpec};
use crate::taylor::UpsilonParams;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "DECONV_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// 2 for configuration and input errors, 3 for numerical failures, timeouts and I/O.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() || matches!(e, Error::Csv(_)) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Sizes the global worker pool from [`THREADS_ENV`]; unset leaves the default.
pub fn init_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config(THREADS_ENV, e.to_string()))?;
    Ok(Some(n))
}

/// Reads and parses a JSON config; unreadable files are configuration errors.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    let value = serde_json::from_str(&text)?;
    Ok((value, text))
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn read_samples(path: &Path, d1: usize, d2: usize) -> Result<SampleSet> {
    SampleSet::read_csv(path, d1, d2).map_err(|e| match e {
        Error::Io(_) | Error::Csv(_) => Error::config("samples", format!("{}: {e}", path.display())),
        other => other,
    })
}

fn check_c_kappa(settings: &EstimateSettings, kappa: f64, dim: usize) -> Result<()> {
    if let Some(c) = settings.c_kappa {
        let cap = c_kappa_cap(kappa, dim, settings.nu_est.unwrap_or(settings.nu));
        if !(c > 0.0) || c > cap {
            return Err(Error::config("c_kappa", format!("{c} is outside (0, {cap}] for kappa = {kappa}")));
        }
    }
    Ok(())
}

/// Which density the estimate is inverted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The first block `X⁽¹⁾`.
    #[default]
    FirstBlock,
    /// The joint law of both blocks.
    Full,
}

impl Target {
    fn first_block(self) -> bool {
        self == Target::FirstBlock
    }

    fn dim(self, d1: usize, d2: usize) -> usize {
        match self {
            Target::FirstBlock => d1,
            Target::Full => d1 + d2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Name of a built-in scenario; exclusive with `scenario`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicate: u64,
}

impl SimulateConfig {
    pub fn scenario(&self) -> Result<Scenario> {
        let spec = match (&self.preset, &self.scenario) {
            (Some(name), None) => preset(name)?,
            (None, Some(spec)) => spec.clone(),
            _ => return Err(Error::config("scenario", "give exactly one of `preset` and `scenario`")),
        };
        Scenario::new(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("n", "must be at least 1"));
        }
        self.scenario().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Sample CSV; relative paths are taken from the config file's directory.
    pub samples: PathBuf,
    pub d1: usize,
    pub d2: usize,
    pub kappa: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimate: EstimateSettings,
    #[serde(default)]
    pub target: Target,
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 < 1 || self.d2 < 1 {
            return Err(Error::config("d1", "both block dimensions must be at least 1"));
        }
        UpsilonParams::new(self.kappa, self.s)?;
        self.estimate.validate()?;
        check_c_kappa(&self.estimate, self.kappa, self.target.dim(self.d1, self.d2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    pub samples: PathBuf,
    pub d1: usize,
    pub d2: usize,
    pub kappa_grid: Vec<f64>,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(default = "one")]
    pub beta: f64,
    /// Fixed `c_σ`; absent means the split-sample pilot.
    #[serde(default)]
    pub c_sigma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimate: EstimateSettings,
    #[serde(default)]
    pub target: Target,
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 < 1 || self.d2 < 1 {
            return Err(Error::config("d1", "both block dimensions must be at least 1"));
        }
        KappaGrid::new(self.kappa_grid.clone())?;
        for &k in &self.kappa_grid {
            UpsilonParams::new(k, self.s)?;
            check_c_kappa(&self.estimate, k, self.target.dim(self.d1, self.d2))?;
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("beta", "must be positive"));
        }
        if let Some(c) = self.c_sigma {
            if !(c > 0.0) {
                return Err(Error::config("c_sigma", "must be positive"));
            }
        }
        self.estimate.validate()
    }
}

/// Optional two-point instance evaluated by the `conjecture` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub instance: LowerBoundInstance,
    #[serde(default)]
    pub alpha_override: Option<f64>,
    /// Evaluate the Le Cam bound; only available in two dimensions.
    #[serde(default = "yes")]
    pub lecam: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjectureConfig {
    #[serde(default = "figure_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "one")]
    pub x0: f64,
    #[serde(default = "half")]
    pub c1: f64,
    #[serde(default = "half")]
    pub c2: f64,
    #[serde(default = "default_c_b")]
    pub c_b: f64,
    #[serde(default)]
    pub lower_bound: Option<LowerBoundConfig>,
}

impl ConjectureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappas.is_empty() {
            return Err(Error::config("kappas", "must not be empty"));
        }
        for &k in &self.kappas {
            WeightSpec::new(k, self.x0).map_err(|e| Error::config("kappas", e.to_string()))?;
        }
        if !(1..=16).contains(&self.k_max) {
            return Err(Error::config("k_max", "must lie in 1..=16"));
        }
        if self.points < 2 {
            return Err(Error::config("points", "must be at least 2"));
        }
        for (key, v) in [("c1", self.c1), ("c2", self.c2), ("c_b", self.c_b)] {
            if !(v > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if let Some(lb) = &self.lower_bound {
            lb.instance.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub lattice: BoundLattice,
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<()> {
        let l = &self.lattice;
        if l.kappas.is_empty() || l.s.is_empty() || l.nus.is_empty() || l.ms.is_empty() || l.ds.is_empty() {
            return Err(Error::config("lattice", "every axis needs at least one value"));
        }
        for &k in &l.kappas {
            for &s in &l.s {
                UpsilonParams::new(k, s)?;
            }
        }
        if l.nus.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("lattice.nus", "must be positive"));
        }
        if self.members < 1 {
            return Err(Error::config("members", "must be at least 1"));
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn figure_kappas() -> Vec<f64> {
    FIGURE_KAPPAS.to_vec()
}
fn default_k_max() -> u32 {
    16
}
fn default_points() -> usize {
    401
}
fn default_c_b() -> f64 {
    4.0
}
fn default_members() -> usize {
    25
}

/// Panel entry of a figure manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub name: String,
    pub file: String,
    pub kappa: f64,
    pub scaling: String,
    pub degrees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub subcommand: String,
    pub files: Vec<String>,
    pub panels: Vec<PanelEntry>,
}

/// Writes one CSV per panel plus `MANIFEST.json` into `dir`.
pub fn emit_figure_data(panels: &[ProfilePanel], dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        subcommand: "figures".into(),
        ..Manifest::default()
    };
    for p in panels {
        let file = format!("{}.csv", p.name());
        p.write_csv(&dir.join(&file))?;
        manifest.files.push(file.clone());
        manifest.panels.push(PanelEntry {
            name: p.name(),
            file,
            kappa: p.kappa,
            scaling: p.scaling.name().into(),
            degrees: p.values.len(),
        });
    }
    std::fs::write(dir.join("MANIFEST.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// One output directory per run: a copy of the config, the outputs and a manifest.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn create(root: &Path, subcommand: &str, config_text: &str) -> Result<RunDir> {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join("config.json"), config_text)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest: Manifest {
                subcommand: subcommand.into(),
                files: vec!["config.json".into()],
                panels: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of an output file, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.manifest.files.push(name.into());
        self.root.join(name)
    }

    pub fn finish(self) -> Result<Manifest> {
        std::fs::write(self.root.join("MANIFEST.json"), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

pub fn simulate(cfg: &SimulateConfig, out: &mut RunDir) -> Result<String> {
    cfg.validate()?;
    let samples = cfg.scenario()?.sample(cfg.n, cfg.seed, cfg.replicate)?;
    samples.write_csv(&out.file("samples.csv"))?;
    let (d1, d2) = samples.dims();
    Ok(format!("wrote {} samples (d1 = {d1}, d2 = {d2})", samples.n()))
}

pub fn estimate_cmd(cfg: &EstimateConfig, base: Option<&Path>, out: &mut RunDir) -> Result<String> {
    cfg.validate()?;
    let samples = read_samples(&resolve(base, &cfg.samples), cfg.d1, cfg.d2)?;
    let params = UpsilonParams::new(cfg.kappa, cfg.s)?;
    let e = estimate(&samples, params, &cfg.estimate, cfg.target.first_block(), cfg.seed, None)?;
    std::fs::write(out.file("poly.json"), e.truncated.to_json()?)?;
    std::fs::write(out.file("fitted.json"), e.fitted.to_json()?)?;
    std::fs::write(out.file("tuning.json"), serde_json::to_string_pretty(&e.rules)?)?;
    e.density.write(&out.file("density.csv"), false)?;
    out.manifest.files.push("density.json".into());
    Ok(format!(
        "m = {}, omega = {}, contrast = {:.6e}, mass = {:.6}",
        e.rules.m,
        e.rules.omega,
        e.contrast,
        e.density.mass()
    ))
}

pub fn adapt_cmd(cfg: &AdaptConfig, base: Option<&Path>, out: &mut RunDir) -> Result<String> {
    cfg.validate()?;
    let samples = read_samples(&resolve(base, &cfg.samples), cfg.d1, cfg.d2)?;
    let grid = KappaGrid::new(cfg.kappa_grid.clone())?;
    let first_block = cfg.target.first_block();
    let mut estimates = Vec::new();
    for &k in grid.values() {
        estimates.push(estimate(&samples, UpsilonParams::new(k, cfg.s)?, &cfg.estimate, first_block, cfg.seed, None)?);
    }
    let c_sigma = match cfg.c_sigma {
        Some(c) => c,
        None => pilot_c_sigma(&samples, &grid, cfg.s, cfg.beta, &cfg.estimate, first_block, cfg.seed, None)?,
    };
    let densities: Vec<_> = estimates.iter().map(|e| e.density.clone()).collect();
    let selection = select_estimates(&grid, &densities, samples.n(), c_sigma, cfg.beta)?;
    write_selection_csv(&out.file("selection.csv"), &selection)?;
    let chosen = &estimates[selection.index];
    std::fs::write(out.file("poly.json"), chosen.truncated.to_json()?)?;
    chosen.density.write(&out.file("density.csv"), false)?;
    out.manifest.files.push("density.json".into());
    Ok(format!("kappa_hat = {}, c_sigma = {c_sigma:.6e}", selection.kappa))
}

pub fn conjecture_cmd(cfg: &ConjectureConfig, out: &mut RunDir) -> Result<String> {
    cfg.validate()?;
    let settings = FigureSettings {
        k_max: cfg.k_max,
        points: cfg.points,
        x0: cfg.x0,
        ..FigureSettings::default()
    };
    let panels = figure_panels(&cfg.kappas, &settings)?;
    let figures = emit_figure_data(&panels, &out.root().join("figures"))?;
    for f in &figures.files {
        out.manifest.files.push(format!("figures/{f}"));
    }
    out.manifest.files.push("figures/MANIFEST.json".into());
    out.manifest.panels = figures
        .panels
        .into_iter()
        .map(|p| PanelEntry {
            file: format!("figures/{}", p.file),
            ..p
        })
        .collect();
    let mut rows = Vec::new();
    let mut census = Vec::new();
    for &k in &cfg.kappas {
        let basis = build_weighted_basis(WeightSpec::new(k, cfg.x0)?, cfg.k_max, settings.quadrature)?;
        rows.extend(conjecture_summary(&basis, cfg.c1, cfg.c2, cfg.c_b, cfg.points)?);
        if cfg.k_max >= 11 {
            census.push(census_holdout(&basis, cfg.c1, cfg.c2, 4..=10, 11..=cfg.k_max)?);
        }
    }
    write_summary(&out.file("summary.csv"), &rows)?;
    let mut msg = format!("{} panels, {} summary rows", out.manifest.panels.len(), rows.len());
    if !census.is_empty() {
        std::fs::write(out.file("census.json"), serde_json::to_string_pretty(&census)?)?;
        let held = census.iter().filter(|c| c.holds).count();
        let _ = write!(msg, ", census holdout met for {held} of {} kappas", census.len());
    }
    if let Some(lb) = &cfg.lower_bound {
        let inst = &lb.instance;
        let basis = build_weighted_basis(WeightSpec::new(inst.kappa, inst.x0)?, inst.k_max, settings.quadrature)?;
        let tp = build_two_point(inst, &basis, lb.alpha_override)?;
        let lecam = if lb.lecam {
            Some(lecam_value(&tp, &GNoise::new(inst.c)?, inst.n, LeCamSettings::default())?)
        } else {
            None
        };
        let zeta_min = tp.zeta_n.values.iter().copied().fold(f64::INFINITY, f64::min);
        let record = serde_json::json!({
            "instance": inst,
            "K_n": tp.k_n,
            "b_n": tp.b_n,
            "alpha_n": tp.alpha_n,
            "caps": tp.caps,
            "zeta_n_min": zeta_min,
            "zeta_n_integral": tp.zeta_n.integral(),
            "l2_sq": tp.l2_sq(),
            "lecam": lecam,
        });
        std::fs::write(out.file("lower_bound.json"), serde_json::to_string_pretty(&record)?)?;
        let _ = write!(msg, ", K_n = {}, alpha_n = {:.6e}", tp.k_n, tp.alpha_n);
    }
    Ok(msg)
}

pub fn bounds_cmd(cfg: &BoundsConfig, out: &mut RunDir) -> Result<String> {
    cfg.validate()?;
    let reports = run_bound_lattice(&cfg.lattice, cfg.members, cfg.seed)?;
    write_bound_reports(&out.file("bounds.csv"), &reports)?;
    let violations = reports.iter().filter(|r| r.applicable && !r.holds).count();
    Ok(format!("{} checks, {violations} violations", reports.len()))
}

pub fn experiment_cmd(plan: &ExperimentPlan, out: &mut RunDir) -> Result<String> {
    plan.validate()?;
    let report = run(plan)?;
    report.write(out.root())?;
    for f in ["cells.csv", "aggregates.csv", "adaptive.csv", "summary.json"] {
        out.manifest.files.push(f.into());
    }
    Ok(report.table())
}

/// Default config text for a subcommand, as accepted by its `--config`.
pub fn example_config(subcommand: &str) -> Result<String> {
    let value = match subcommand {
        "simulate" => serde_json::json!({"preset": "uniform_repeated_g", "n": 1000, "seed": 1}),
        "estimate" => serde_json::json!({
            "samples": "samples.csv", "d1": 1, "d2": 1, "kappa": 0.75, "S": 2.0, "seed": 1,
            "estimate": {"tuning": {"mode": "override", "m": 4, "omega": 2.0}}
        }),
        "adapt" => serde_json::json!({
            "samples": "samples.csv", "d1": 1, "d2": 1, "kappa_grid": KappaGrid::default_grid().values(), "S": 2.0,
            "estimate": {"tuning": {"mode": "override", "m": 4, "omega": 2.0}}
        }),
        "conjecture" => serde_json::to_value(serde_json::from_str::<ConjectureConfig>("{}")?)?,
        "bounds-check" => serde_json::to_value(serde_json::from_str::<BoundsConfig>("{}")?)?,
        "experiment" => serde_json::json!({
            "scenario": preset("uniform_repeated_g")?,
            "n_list": [1000, 10000], "replicates": 4, "kappa_grid": [0.75], "S": 2.0, "seed": 1,
            "estimate": {"tuning": {"mode": "override", "m": 4, "omega": 2.0}}
        }),
        other => return Err(Error::config("subcommand", format!("unknown subcommand `{other}`"))),
    };
    Ok(serde_json::to_string_pretty(&value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjecture::Scaling;
    use crate::reconstruct::{invert, DensityGrid, Lattice};
    use crate::runner::ExperimentReport;
    use crate::taylor::TaylorPoly;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parse<T: DeserializeOwned>(v: serde_json::Value) -> Result<T> {
        Ok(serde_json::from_value(v)?)
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("k", "m")), 2);
        assert_eq!(exit_code(&Error::invalid("x")), 2);
        assert_eq!(exit_code(&Error::numerical("x")), 3);
        assert_eq!(exit_code(&Error::Timeout(1.0)), 3);
        let json = serde_json::from_str::<SimulateConfig>("{").unwrap_err();
        assert_eq!(exit_code(&Error::Json(json)), 2);
    }

    #[test]
    fn schema_rejects_bad_values() {
        let base = serde_json::json!({"samples": "s.csv", "d1": 1, "d2": 1, "kappa": 0.75, "S": 2.0});
        let ok: EstimateConfig = parse(base.clone()).unwrap();
        ok.validate().unwrap();
        let with = |key: &str, v: serde_json::Value| {
            let mut b = base.clone();
            b[key] = v;
            b
        };
        for bad in [
            with("kappa", 1.5.into()),
            with("kappa", 0.0.into()),
            with("S", 0.0.into()),
            with("estimate", serde_json::json!({"nu": 0.0})),
            with("estimate", serde_json::json!({"nodes": 1})),
            with("estimate", serde_json::json!({"c_kappa": 1.0})),
        ] {
            let cfg: EstimateConfig = parse(bad.clone()).unwrap();
            let e = cfg.validate().unwrap_err();
            assert_eq!(exit_code(&e), 2, "{bad}: {e}");
        }
        assert!(parse::<EstimateConfig>(with("extra", 1.into())).is_err());
        let adapt: AdaptConfig =
            parse(serde_json::json!({"samples": "s.csv", "d1": 1, "d2": 1, "kappa_grid": [], "S": 1.0})).unwrap();
        assert!(adapt.validate().is_err());
        let sim: SimulateConfig = parse(serde_json::json!({"n": 3})).unwrap();
        assert!(matches!(sim.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn c_kappa_at_cap_is_accepted() {
        let cap = c_kappa_cap(0.75, 1, 1.0);
        let cfg: EstimateConfig = parse(serde_json::json!({
            "samples": "s.csv", "d1": 1, "d2": 1, "kappa": 0.75, "S": 2.0, "estimate": {"c_kappa": cap}
        }))
        .unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn example_configs_parse_and_validate() {
        let parse_text = |s: &str| serde_json::from_str::<serde_json::Value>(&example_config(s).unwrap()).unwrap();
        parse::<SimulateConfig>(parse_text("simulate")).unwrap().validate().unwrap();
        parse::<EstimateConfig>(parse_text("estimate")).unwrap().validate().unwrap();
        parse::<AdaptConfig>(parse_text("adapt")).unwrap().validate().unwrap();
        parse::<ConjectureConfig>(parse_text("conjecture")).unwrap().validate().unwrap();
        parse::<BoundsConfig>(parse_text("bounds-check")).unwrap().validate().unwrap();
        parse::<ExperimentPlan>(parse_text("experiment")).unwrap().validate().unwrap();
        assert!(example_config("nope").is_err());
    }

    #[test]
    fn empty_figure_data_has_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = emit_figure_data(&[], dir.path()).unwrap();
        assert!(m.panels.is_empty());
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("MANIFEST.json")]);
    }

    #[test]
    fn one_panel_gives_one_csv() {
        let dir = tempfile::tempdir().unwrap();
        let panel = ProfilePanel {
            kappa: 0.55,
            scaling: Scaling::Stretch,
            x: vec![-1.0, 0.0, 1.0],
            values: vec![vec![0.5, 1.0, 0.5]],
        };
        let m = emit_figure_data(std::slice::from_ref(&panel), dir.path()).unwrap();
        assert_eq!(m.panels.len(), 1);
        let text = std::fs::read_to_string(dir.path().join(&m.panels[0].file)).unwrap();
        assert_eq!(text, "x,value,kappa,K\n-1,0.5,0.55,1\n0,1,0.55,1\n1,0.5,0.55,1\n");
        let back: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("MANIFEST.json")).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unwritable_figure_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(emit_figure_data(&[], &blocker.join("sub")).is_err());
    }

    #[test]
    fn run_dir_records_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("run");
        let mut rd = RunDir::create(&root, "simulate", "{\"n\": 5}").unwrap();
        let cfg: SimulateConfig =
            parse(serde_json::json!({"preset": "point_mass_repeated", "n": 5, "seed": 2})).unwrap();
        simulate(&cfg, &mut rd).unwrap();
        let m = rd.finish().unwrap();
        assert_eq!(m.files, vec!["config.json", "samples.csv"]);
        assert_eq!(std::fs::read_to_string(root.join("config.json")).unwrap(), "{\"n\": 5}");
        let s = SampleSet::read_csv(&root.join("samples.csv"), 1, 1).unwrap();
        assert_eq!(s.n(), 5);
    }

    #[test]
    fn artifacts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = Scenario::new(preset("uniform_repeated_g").unwrap()).unwrap();
        let samples = scenario.sample(50, 3, 0).unwrap();
        let p = dir.path().join("s.csv");
        samples.write_csv(&p).unwrap();
        assert_eq!(SampleSet::read_csv(&p, 1, 1).unwrap(), samples);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let poly = TaylorPoly::random_member(1, 1, 4, &UpsilonParams::new(0.75, 2.0).unwrap(), &mut rng);
        assert_eq!(TaylorPoly::from_json(&poly.to_json().unwrap()).unwrap(), poly);

        let density = invert(&poly.truncate(2), 1.5, &Lattice::cube(2, 2.0, 9).unwrap()).unwrap();
        let q = dir.path().join("d.csv");
        density.write(&q, false).unwrap();
        let back = DensityGrid::read(&q).unwrap();
        assert_eq!(back.values, density.values);
        assert_eq!(back.lattice, density.lattice);
        assert_eq!(back.meta, density.meta);

        let plan: ExperimentPlan = parse(serde_json::json!({
            "scenario": preset("point_mass_repeated").unwrap(), "n_list": [20], "kappa_grid": [0.75], "S": 2.0
        }))
        .unwrap();
        let report = run(&plan).unwrap();
        let json = report.to_json().unwrap();
        assert_eq!(ExperimentReport::from_json(&json).unwrap().to_json().unwrap(), json);
    }
}
