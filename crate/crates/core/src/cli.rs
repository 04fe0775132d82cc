//! Experiment runner: JSON configs, subcommand dispatch and result files.
//!
//! A run reads an [`ExperimentConfig`], fills in every default, validates it,
//! executes one subcommand and produces a [`RunOutput`]: a JSON manifest that
//! echoes the resolved config, the derived seeds, every estimate with its
//! standard error and a pass/fail flag per in-run criterion, plus CSV tables
//! and a generated `SCHEMA.md` describing their columns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acceptance::{self, AcceptanceOptions};
use crate::calculus::{self, CylinderVectorField};
use crate::catalog;
use crate::configspace::{project_lifted_in, Bounds, CylinderFunction, SmoothTestFunction, SmoothVectorField, Window};
use crate::dynamics::{self, StepConfig};
use crate::laplace;
use crate::measures::{lambda_star_region_mass, ClusterProcessModel, InClusterLaw, ModelSpec, OffsetLaw};
use crate::properness;
use crate::quasiinv::{self, CompactDiffeo, QuasiInvariance};
use crate::sampler;
use crate::stats::{mix_seed, Estimate, Moments};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Standard errors allowed in every Monte Carlo criterion.
const SE_K: f64 = 3.0;

/// Bundled reference configs by file name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("gaussian-ex1.json", include_str!("../configs/gaussian-ex1.json")),
    ("blowup.json", include_str!("../configs/blowup.json")),
    ("delta-clusters.json", include_str!("../configs/delta-clusters.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Parses and validates a bundled config.
pub fn bundled_config(name: &str) -> std::result::Result<ExperimentConfig, CliError> {
    let text = bundled(name).ok_or_else(|| CliError::Config(vec![format!("no bundled config named {name}")]))?;
    parse_config(text)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub experiment: ExperimentParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Subcommand parameters. Empty lists and a missing window are replaced by
/// catalog defaults for the model dimension before a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    /// Observation window `K`; `[0, 2]^d` when absent.
    pub window: Option<Window>,
    pub samples: usize,
    pub q_grid: Vec<f64>,
    /// Number of samples whose points are written to `points.csv`.
    pub point_samples: usize,
    pub functions: Vec<SmoothTestFunction>,
    pub cylinders: Vec<CylinderFunction>,
    pub fields: Vec<SmoothVectorField>,
    pub cylinder_fields: Vec<CylinderVectorField>,
    pub diffeos: Vec<CompactDiffeo>,
    pub observables: Vec<SmoothTestFunction>,
    pub dynamics: DynamicsParams,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            window: None,
            samples: 100_000,
            q_grid: vec![0.3, 0.6, 0.9],
            point_samples: 100,
            functions: Vec::new(),
            cylinders: Vec::new(),
            fields: Vec::new(),
            cylinder_fields: Vec::new(),
            diffeos: Vec::new(),
            observables: Vec::new(),
            dynamics: DynamicsParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    pub t_end: f64,
    pub dt: f64,
    pub paths: usize,
    pub checkpoints: Vec<f64>,
    /// Two-sample KS level before the Bonferroni correction.
    pub ks_level: f64,
    /// Size-2 clusters evolved for the difference-coordinate check.
    pub ou_clusters: usize,
    pub ou_time: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { t_end: 1.0, dt: 1e-3, paths: 2000, checkpoints: vec![0.5, 1.0], ks_level: 0.01, ou_clusters: 20_000, ou_time: 5.0 }
    }
}

impl ExperimentConfig {
    /// Fills catalog defaults and applies the `--quick` reductions.
    pub fn resolve(&mut self, quick: bool) {
        let d = self.model.dim;
        let e = &mut self.experiment;
        if e.window.is_none() {
            e.window = Some(Window { lower: vec![0.0; d], upper: vec![2.0; d], merge_tol: crate::configspace::DEFAULT_MERGE_TOL });
        }
        if e.functions.is_empty() {
            e.functions = catalog::laplace_functions(d);
        }
        if e.cylinders.is_empty() {
            e.cylinders = catalog::cylinders(d);
        }
        if e.fields.is_empty() {
            e.fields = catalog::fields(d);
        }
        if e.cylinder_fields.is_empty() {
            e.cylinder_fields = catalog::cylinder_fields(d);
        }
        if e.diffeos.is_empty() {
            e.diffeos = catalog::diffeos(d);
        }
        if e.observables.is_empty() {
            e.observables = catalog::observables(d);
        }
        if quick {
            e.samples = (e.samples / 10).max(1000).min(e.samples);
            e.dynamics.paths = (e.dynamics.paths / 5).max(100).min(e.dynamics.paths);
            e.dynamics.ou_clusters = (e.dynamics.ou_clusters / 5).max(1000).min(e.dynamics.ou_clusters);
        }
    }

    /// Schema diagnostics; empty when the config is valid.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.model.dim;
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version));
        }
        if let Err(e) = ClusterProcessModel::from_spec(&self.model) {
            out.push(format!("model: {e}"));
        }
        let e = &self.experiment;
        if let Some(w) = &e.window {
            match Window::new(w.lower.clone(), w.upper.clone()) {
                Ok(v) if v.dim() != d => out.push(format!("experiment.window: dimension {} but model dimension {d}", v.dim())),
                Ok(v) if !v.is_bounded() => out.push("experiment.window: must be bounded".into()),
                Ok(_) => {}
                Err(err) => out.push(format!("experiment.window: {err}")),
            }
        }
        if e.samples < 2 {
            out.push("experiment.samples: at least 2 required".into());
        }
        for q in &e.q_grid {
            if !(*q > 0.0 && *q < 1.0) {
                out.push(format!("experiment.q_grid: {q} outside (0, 1)"));
            }
        }
        let fdim = |f: &SmoothTestFunction| {
            let s = f.support();
            s.is_empty() || s.lower.len() == d
        };
        for (i, f) in e.functions.iter().chain(&e.observables).enumerate() {
            if !fdim(f) {
                out.push(format!("experiment: test function {i} has the wrong dimension"));
            }
        }
        for (i, c) in e.cylinders.iter().enumerate() {
            if !c.inner.iter().all(fdim) {
                out.push(format!("experiment.cylinders[{i}]: wrong dimension"));
            }
        }
        for (i, v) in e.fields.iter().enumerate() {
            if v.dim() != d {
                out.push(format!("experiment.fields[{i}]: dimension {} but model dimension {d}", v.dim()));
            }
        }
        for (i, v) in e.cylinder_fields.iter().enumerate() {
            if v.terms.iter().any(|(_, f)| f.dim() != d) {
                out.push(format!("experiment.cylinder_fields[{i}]: wrong dimension"));
            }
        }
        for (i, phi) in e.diffeos.iter().enumerate() {
            if phi.dim() != d {
                out.push(format!("experiment.diffeos[{i}]: dimension {} but model dimension {d}", phi.dim()));
            } else if let Err(err) = CompactDiffeo::new(phi.bump.clone(), phi.direction.clone(), phi.epsilon) {
                out.push(format!("experiment.diffeos[{i}]: {err}"));
            }
        }
        let dy = &e.dynamics;
        if !(dy.dt > 0.0 && dy.dt.is_finite()) {
            out.push("experiment.dynamics.dt: must be positive".into());
        }
        if !(dy.t_end > 0.0 && dy.t_end.is_finite()) {
            out.push("experiment.dynamics.t_end: must be positive".into());
        }
        if dy.checkpoints.iter().any(|t| !(*t >= 0.0 && *t <= dy.t_end)) {
            out.push("experiment.dynamics.checkpoints: must lie in [0, t_end]".into());
        }
        if dy.paths < 2 || dy.ou_clusters < 2 {
            out.push("experiment.dynamics: paths and ou_clusters must be at least 2".into());
        }
        if !(dy.ks_level > 0.0 && dy.ks_level < 1.0) {
            out.push("experiment.dynamics.ks_level: must lie in (0, 1)".into());
        }
        if !(dy.ou_time > 0.0 && dy.ou_time.is_finite()) {
            out.push("experiment.dynamics.ou_time: must be positive".into());
        }
        out
    }

    fn window(&self) -> Window {
        let w = self.experiment.window.as_ref().expect("resolved config has a window");
        Window::new(w.lower.clone(), w.upper.clone()).expect("validated window").with_merge_tol(w.merge_tol)
    }
}

/// Parses a config, reporting JSON errors with line and column.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let diags = cfg.diagnostics();
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(diags))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw configurations and compare retained clusters with `λ*(𝔛_K)`.
    Sample,
    /// Closed-form against empirical Laplace functionals.
    Laplace,
    /// Sufficient conditions, droplet masses and the PGF identity.
    Properness,
    /// Change-of-measure identities under compact diffeomorphisms.
    QuasiInvariance,
    /// Integration-by-parts residuals at three levels.
    Ibp,
    /// Dirichlet form against the generator.
    Dirichlet,
    /// Euler–Maruyama stationarity, symmetry and the pair difference coordinate.
    Dynamics,
    /// The full acceptance suite.
    Acceptance,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sample => "sample",
            Self::Laplace => "laplace",
            Self::Properness => "properness",
            Self::QuasiInvariance => "quasi-invariance",
            Self::Ibp => "ibp",
            Self::Dirichlet => "dirichlet",
            Self::Dynamics => "dynamics",
            Self::Acceptance => "acceptance",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clusterpp", version, about = "Poisson cluster process experiments")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON); the bundled Gaussian config when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; the config `output`, else `results`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the global pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reduced sample sizes for smoke runs.
    #[arg(long, global = true)]
    pub quick: bool,
}

/// One CSV table with column documentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub description: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, description: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            columns: columns.iter().map(|(c, d)| (c.to_string(), d.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<&str> = self.columns.iter().map(|(c, _)| c.as_str()).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Float with 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn est_cells(e: &Estimate) -> [String; 2] {
    [fmt_f(e.mean), fmt_f(e.se)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

impl Criterion {
    fn new(name: impl Into<String>, passed: bool, detail: Value) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Manifest and tables of one run, before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: Value,
    pub tables: Vec<Table>,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

impl RunOutput {
    /// File names and contents: `manifest.json`, one CSV per table and `SCHEMA.md`.
    pub fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        out.push(("manifest.json".to_string(), manifest.into_bytes()));
        for t in &self.tables {
            out.push((format!("{}.csv", t.name), t.to_csv().into_bytes()));
        }
        out.push(("SCHEMA.md".to_string(), self.schema_markdown().into_bytes()));
        out
    }

    fn schema_markdown(&self) -> String {
        let mut s = String::from("# Output files\n\n`manifest.json` echoes the resolved config, the derived seeds, all estimates with standard errors and the criteria of the run. Floats in CSV files carry 17 significant digits.\n");
        for t in &self.tables {
            let _ = write!(s, "\n## {}.csv\n\n{}\n\n| column | meaning |\n|---|---|\n", t.name, t.description);
            for (c, d) in &t.columns {
                let _ = writeln!(s, "| `{c}` | {d} |");
            }
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.files() {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Named seeds derived from the base seed.
struct Seeds {
    base: u64,
    used: BTreeMap<String, u64>,
}

impl Seeds {
    fn new(base: u64) -> Self {
        Self { base, used: BTreeMap::new() }
    }

    fn get(&mut self, name: &str) -> u64 {
        // FNV-1a of the name as the stream tag
        let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        let s = mix_seed(self.base, tag);
        self.used.insert(name.to_string(), s);
        s
    }
}

struct Report {
    results: Value,
    criteria: Vec<Criterion>,
    tables: Vec<Table>,
}

impl Report {
    fn new() -> Self {
        Self { results: json!({}), criteria: Vec::new(), tables: Vec::new() }
    }

    fn set(&mut self, key: &str, v: Value) {
        self.results[key] = v;
    }
}

fn error_record(e: &Error) -> Value {
    match e {
        Error::Divergent(r) => json!({
            "kind": "divergent",
            "context": r.context,
            "history": r.history.iter().map(|(w, v)| json!({"half_width": w, "estimate": v})).collect::<Vec<_>>(),
        }),
        other => json!({"kind": "error", "message": other.to_string()}),
    }
}

/// Runs one subcommand on a parsed config.
///
/// Config problems are returned as [`CliError::Config`]; errors raised while
/// computing (divergence included) become a structured `error` record in the
/// manifest of a failed run.
pub fn execute(cmd: Command, mut cfg: ExperimentConfig, quick: bool) -> std::result::Result<RunOutput, CliError> {
    cfg.resolve(quick);
    let diags = cfg.diagnostics();
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    let model = ClusterProcessModel::from_spec(&cfg.model).map_err(|e| CliError::Config(vec![format!("model: {e}")]))?;
    let mut seeds = Seeds::new(cfg.seed);
    let mut report = Report::new();
    let outcome = match cmd {
        Command::Sample => run_sample(&model, &cfg, &mut seeds, &mut report),
        Command::Laplace => run_laplace(&model, &cfg, &mut seeds, &mut report),
        Command::Properness => run_properness(&model, &cfg, &mut seeds, &mut report),
        Command::QuasiInvariance => run_quasi_invariance(&model, &cfg, &mut seeds, &mut report),
        Command::Ibp => run_ibp(&model, &cfg, &mut seeds, &mut report),
        Command::Dirichlet => run_dirichlet(&model, &cfg, &mut seeds, &mut report),
        Command::Dynamics => run_dynamics(&model, &cfg, &mut seeds, &mut report),
        Command::Acceptance => run_acceptance(&cfg, quick, &mut report),
    };
    let error = outcome.as_ref().err().map(error_record);
    let passed = error.is_none() && report.criteria.iter().all(|c| c.passed);
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "program": {"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")},
        "command": cmd.name(),
        "quick": quick,
        "seed": cfg.seed,
        "seeds": seeds.used,
        "config": cfg,
        "results": report.results,
        "criteria": report.criteria,
        "error": error,
        "passed": passed,
    });
    Ok(RunOutput { manifest, tables: report.tables, criteria: report.criteria, passed })
}

fn run_sample(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let k = cfg.window();
    let n = cfg.experiment.samples;
    let lifted = sampler::sample_lifted_many(model, &k, n, seeds.get("sample"))?;
    let mut counts = Table::new(
        "counts",
        "One row per sampled configuration on the observation window.",
        &[("sample", "sample index"), ("points", "points of the projected configuration in K (with multiplicity)"), ("clusters", "retained clusters meeting K")],
    );
    let mut points = Table::new(
        "points",
        "Atoms of the first samples.",
        &[("sample", "sample index"), ("atom", "atom index within the sample"), ("multiplicity", "atom multiplicity")],
    );
    for j in 0..model.dim {
        points.columns.push((format!("x{}", j + 1), format!("coordinate {}", j + 1)));
    }
    let mut m = Moments::new(2);
    for (i, g) in lifted.iter().enumerate() {
        let cfg_k = project_lifted_in(g, &k);
        let (np, nc) = (cfg_k.total(), g.len());
        m.push(&[np as f64, nc as f64]);
        counts.push(vec![i.to_string(), np.to_string(), nc.to_string()]);
        if i < cfg.experiment.point_samples {
            for (a, atom) in cfg_k.atoms().iter().enumerate() {
                let mut row = vec![i.to_string(), a.to_string(), atom.multiplicity.to_string()];
                row.extend(atom.location.coords().iter().map(|x| fmt_f(*x)));
                points.push(row);
            }
        }
    }
    let clusters = m.estimate(1);
    let expected = lambda_star_region_mass(model, &k, n, seeds.get("region-mass"))?;
    let residual = clusters.minus(&expected);
    rep.set("points", json!(m.estimate(0)));
    rep.set("clusters", json!(clusters));
    rep.set("lambda_star_region_mass", json!(expected));
    rep.set("truncation", json!(sampler::LiftedSampler::new(model, &k)?.truncation()));
    rep.criteria.push(Criterion::new(
        "retained clusters match lambda_star(X_K)",
        residual.within(0.0, SE_K),
        json!({"residual": residual}),
    ));
    if let Ok(b) = properness::droplet_mass_bounds(model, &k) {
        if !matches!(model.law.in_cluster, InClusterLaw::Coincident { .. }) {
            // expected points: Σ_n n p_n ∫ λ(K - y) η_1(dy)
            let points_est = m.estimate(0);
            rep.set("expected_points", json!(b.upper));
            rep.criteria.push(Criterion::new(
                "mean point count matches intensity",
                points_est.within(b.upper, SE_K),
                json!({"empirical": points_est, "expected": b.upper}),
            ));
        }
    }
    rep.tables.push(counts);
    rep.tables.push(points);
    Ok(())
}

fn is_delta_clusters(model: &ClusterProcessModel) -> bool {
    model.law.p(1) == 1.0
        && matches!(model.law.in_cluster.offset_law(1), OffsetLaw::Dirac { offset } if offset.iter().all(|v| *v == 0.0))
}

fn support_window(fs: &[&SmoothTestFunction], fallback: &Window) -> Result<Window> {
    let b = fs.iter().fold(Bounds::empty(), |acc, f| acc.hull(&f.support()));
    if b.is_empty() {
        Ok(fallback.clone())
    } else {
        Ok(fallback.hull(&b))
    }
}

fn run_laplace(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let fs = &cfg.experiment.functions;
    let k = support_window(&fs.iter().collect::<Vec<_>>(), &cfg.window())?;
    let samples = sampler::sample_mucl_many(model, &k, cfg.experiment.samples, seeds.get("laplace-samples"))?;
    let delta = is_delta_clusters(model);
    let mut table = Table::new(
        "laplace",
        "Laplace functional of each test function: closed form against the empirical mean of exp(-<f, gamma>).",
        &[
            ("function", "index into experiment.functions"),
            ("closed", "closed-form value"),
            ("closed_se", "Monte Carlo SE of the closed form (cluster average)"),
            ("exponent", "integral in the exponent"),
            ("exponent_se", "SE of the exponent"),
            ("empirical", "empirical mean of exp(-<f, gamma>)"),
            ("empirical_se", "SE of the empirical mean"),
            ("residual", "empirical minus closed"),
            ("residual_se", "combined SE"),
            ("poisson", "Poisson closed form for single-point clusters (empty otherwise)"),
            ("poisson_error", "quadrature error of the Poisson closed form"),
        ],
    );
    let mut out = Vec::new();
    for (i, f) in fs.iter().enumerate() {
        let closed = laplace::laplace_mucl_closed(model, f, seeds.get(&format!("laplace-closed-{i}")))?;
        let emp = laplace::laplace_empirical(&samples, f)?;
        let residual = emp.minus(&closed.value);
        rep.criteria.push(Criterion::new(
            format!("laplace functional {i}: closed form matches samples"),
            residual.within(0.0, SE_K),
            json!({"residual": residual}),
        ));
        let mut row = vec![i.to_string()];
        row.extend(est_cells(&closed.value));
        row.extend(est_cells(&closed.exponent));
        row.extend(est_cells(&emp));
        row.extend(est_cells(&residual));
        let mut entry = json!({"function": i, "closed": closed, "empirical": emp, "residual": residual});
        if delta {
            let p = laplace::laplace_poisson_closed(&model.intensity, f)?;
            let gap = (closed.value.mean - p.value).abs();
            rep.criteria.push(Criterion::new(
                format!("laplace functional {i}: single-point clusters reduce to Poisson"),
                gap <= 1e-8 + p.error,
                json!({"gap": gap, "poisson": p}),
            ));
            row.extend([fmt_f(p.value), fmt_f(p.error)]);
            entry["poisson"] = json!(p);
        } else {
            row.extend([String::new(), String::new()]);
        }
        table.push(row);
        out.push(entry);
    }
    rep.set("window", json!(k));
    rep.set("functionals", json!(out));
    rep.tables.push(table);
    Ok(())
}

fn run_properness(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let k = cfg.window();
    let n = cfg.experiment.samples;
    let suff = properness::check_sufficient(model, &k);
    rep.set("sufficiency", json!(suff));
    let bounds = match properness::droplet_mass_bounds(model, &k) {
        Ok(b) => b,
        Err(Error::Divergent(r)) => {
            let mut t = Table::new(
                "divergence",
                "Region-doubling history of the divergent droplet-mass integral.",
                &[("half_width", "half-width of the integration region"), ("estimate", "integral over the region")],
            );
            for (w, v) in &r.history {
                t.push(vec![fmt_f(*w), fmt_f(*v)]);
            }
            rep.tables.push(t);
            rep.set("divergence", error_record(&Error::Divergent(r.clone())));
            rep.criteria.push(Criterion::new("mean droplet mass is finite", false, json!({"verdict": "divergent"})));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    rep.set("droplet_mass_bounds", json!(bounds));
    let mean = properness::mean_droplet_mass(model, &k, n, seeds.get("droplet"))?;
    rep.set("mean_droplet_mass", json!(mean));
    rep.criteria.push(Criterion::new(
        "mean droplet mass inside its bounds",
        mean.mean + SE_K * mean.se >= bounds.lower * (1.0 - 1e-9) && mean.mean - SE_K * mean.se <= bounds.upper * (1.0 + 1e-9),
        json!({"mean": mean, "bounds": bounds}),
    ));
    let lifted = sampler::sample_lifted_many(model, &k, n, seeds.get("properness-samples"))?;
    let configs: Vec<_> = lifted.iter().map(|g| project_lifted_in(g, &k)).collect();
    let mut table = Table::new(
        "pgf",
        "Probability generating functional E[q^{gamma(K)}]: closed form against samples.",
        &[
            ("q", "argument"),
            ("closed", "closed form"),
            ("closed_se", "Monte Carlo SE of the closed form"),
            ("empirical", "sample mean"),
            ("empirical_se", "SE of the sample mean"),
            ("residual", "empirical minus closed"),
            ("residual_se", "combined SE"),
        ],
    );
    let mut pgf = Vec::new();
    for (i, q) in cfg.experiment.q_grid.iter().enumerate() {
        let closed = properness::pgf_closed(model, &k, *q, n, seeds.get(&format!("pgf-{i}")))?;
        let emp = properness::pgf_empirical(&configs, &k, *q);
        let residual = emp.minus(&closed);
        rep.criteria.push(Criterion::new(format!("pgf at q = {q}"), residual.within(0.0, SE_K), json!({"residual": residual})));
        let mut row = vec![fmt_f(*q)];
        row.extend(est_cells(&closed));
        row.extend(est_cells(&emp));
        row.extend(est_cells(&residual));
        table.push(row);
        pgf.push(json!({"q": q, "closed": closed, "empirical": emp, "residual": residual}));
    }
    rep.set("pgf", json!(pgf));
    let scan = properness::simplicity_scan(&lifted, 1e-12);
    let simple_expected = suff.b_i == properness::Verdict::Pass
        && suff.b_ii_prime == properness::Verdict::Pass
        && suff.b_ii_double_prime == properness::Verdict::Pass;
    if simple_expected {
        rep.criteria.push(Criterion::new(
            "sampled configurations are simple",
            scan.pairs_found == 0,
            json!({"pairs_found": scan.pairs_found}),
        ));
    }
    rep.set("simplicity", json!(scan));
    rep.tables.push(table);
    Ok(())
}

fn cycle<T: Clone>(items: &[T], i: usize) -> T {
    items[i % items.len()].clone()
}

fn run_quasi_invariance(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let n = e.samples;
    let mut table = Table::new(
        "quasi_invariance",
        "E[F(phi gamma)] against E[F(gamma) R(gamma)] for each (diffeomorphism, cylinder function) pair, with E[R] and the base-space second moment.",
        &[
            ("pair", "pair index"),
            ("lhs", "E[F(phi gamma)]"),
            ("lhs_se", "SE"),
            ("rhs", "E[F(gamma) R]"),
            ("rhs_se", "SE including the normalization"),
            ("residual", "lhs minus rhs"),
            ("residual_se", "paired SE"),
            ("rn_mean", "E[R]"),
            ("rn_mean_se", "SE"),
            ("l2_empirical", "Monte Carlo E[R^2] for the centre process"),
            ("l2_empirical_se", "SE"),
            ("l2_closed", "exp of the integral of rho^2 - rho"),
            ("l2_closed_error", "quadrature error"),
        ],
    );
    let pairs = e.diffeos.len().max(e.cylinders.len());
    let mut out = Vec::new();
    for i in 0..pairs {
        let phi = cycle(&e.diffeos, i);
        let f = cycle(&e.cylinders, i);
        let qi = QuasiInvariance::new(model, phi.clone())?;
        let res = quasiinv::quasi_invariance_residual(&qi, &f, n, seeds.get(&format!("qi-{i}")))?;
        let mean = quasiinv::rn_mean_check(&qi, n, seeds.get(&format!("qi-mean-{i}")))?;
        let l2 = quasiinv::rn_l2_check(&model.intensity, &phi, n, seeds.get(&format!("qi-l2-{i}")))?;
        rep.criteria.push(Criterion::new(format!("quasi-invariance pair {i}"), res.passes(SE_K), json!({"residual": res.residual})));
        rep.criteria.push(Criterion::new(format!("E[R] = 1 for diffeomorphism {i}"), mean.within(1.0, SE_K), json!({"rn_mean": mean})));
        rep.criteria.push(Criterion::new(format!("second moment of R for diffeomorphism {i}"), l2.passes(SE_K), json!({"l2": l2})));
        let mut row = vec![i.to_string()];
        row.extend(est_cells(&res.lhs));
        row.extend(est_cells(&res.rhs));
        row.extend(est_cells(&res.residual));
        row.extend(est_cells(&mean));
        row.extend(est_cells(&l2.empirical));
        row.extend([fmt_f(l2.closed.value), fmt_f(l2.closed.error)]);
        table.push(row);
        out.push(json!({
            "pair": i,
            "residual": res,
            "rn_mean": mean,
            "l2": l2,
            "normalization": qi.normalization()?,
            "floor_hits": qi.floor_hits(),
        }));
    }
    rep.set("pairs", json!(out));
    rep.tables.push(table);
    Ok(())
}

fn ibp_columns() -> Vec<(&'static str, &'static str)> {
    vec![
        ("level", "lambda_star, mucl or general"),
        ("triple", "triple index"),
        ("f_grad_g", "E[F grad_v G]"),
        ("f_grad_g_se", "SE"),
        ("g_grad_f", "E[G grad_v F]"),
        ("g_grad_f_se", "SE"),
        ("fg_b", "E[F G B^v]"),
        ("fg_b_se", "SE"),
        ("residual", "sum of the three terms"),
        ("residual_se", "paired SE"),
    ]
}

fn run_ibp(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let n = e.samples;
    let mut table = Table::new("ibp", "Integration-by-parts residuals; each should vanish.", &ibp_columns());
    let mut out = Vec::new();
    let mut record = |level: &str, i: usize, r: calculus::IbpReport, rep: &mut Report| {
        rep.criteria.push(Criterion::new(format!("ibp {level} triple {i}"), r.passes(SE_K), json!({"residual": r.residual})));
        let mut row = vec![level.to_string(), i.to_string()];
        for est in [r.f_grad_g, r.g_grad_f, r.fg_b, r.residual] {
            row.extend(est_cells(&est));
        }
        table.push(row);
        out.push(json!({"level": level, "triple": i, "report": r}));
    };
    let triples = e.fields.len();
    for i in 0..triples {
        let (f, g, v) = (cycle(&e.functions, i), cycle(&e.functions, i + 1), &e.fields[i]);
        let r = calculus::ibp_residual_lambda_star(model, &f, &g, v, n, seeds.get(&format!("ibp-star-{i}")))?;
        record("lambda_star", i, r, rep);
    }
    for i in 0..triples {
        let (f, g, v) = (cycle(&e.cylinders, i), cycle(&e.cylinders, i + 1), &e.fields[i]);
        let r = calculus::ibp_residual_mucl(model, &f, &g, v, n, seeds.get(&format!("ibp-mucl-{i}")))?;
        record("mucl", i, r, rep);
    }
    for (i, field) in e.cylinder_fields.iter().enumerate() {
        let (f, g) = (cycle(&e.cylinders, i), cycle(&e.cylinders, i + 1));
        let r = calculus::ibp_general(model, &f, &g, field, n, seeds.get(&format!("ibp-general-{i}")))?;
        record("general", i, r, rep);
    }
    rep.set("ibp", json!(out));
    rep.tables.push(table);
    Ok(())
}

fn run_dirichlet(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let e = &cfg.experiment;
    let mut table = Table::new(
        "dirichlet",
        "Dirichlet form E(F, G) against E[(HF) G] for pairs of cylinder functions.",
        &[
            ("pair", "pair index (F = cylinders[i], G = cylinders[i + 1])"),
            ("form", "E(F, G)"),
            ("form_se", "SE"),
            ("generator", "E[(HF) G]"),
            ("generator_se", "SE"),
            ("diffusive", "Laplacian part of E[(HF) G]"),
            ("diffusive_se", "SE"),
            ("drift", "drift part of E[(HF) G]"),
            ("drift_se", "SE"),
            ("residual", "form minus generator"),
            ("residual_se", "paired SE"),
            ("min_energy_f", "smallest per-draw energy of F"),
        ],
    );
    let mut out = Vec::new();
    for i in 0..e.cylinders.len() {
        let (f, g) = (cycle(&e.cylinders, i), cycle(&e.cylinders, i + 1));
        let r = calculus::dirichlet_vs_generator(model, &f, &g, e.samples, seeds.get(&format!("dirichlet-{i}")))?;
        rep.criteria.push(Criterion::new(format!("dirichlet pair {i}"), r.passes(SE_K), json!({"residual": r.residual})));
        rep.criteria.push(Criterion::new(
            format!("energy of cylinder {i} nonnegative"),
            r.min_energy_f >= 0.0,
            json!({"min_energy_f": r.min_energy_f}),
        ));
        let mut row = vec![i.to_string()];
        for est in [r.form, r.generator, r.diffusive, r.drift, r.residual] {
            row.extend(est_cells(&est));
        }
        row.push(fmt_f(r.min_energy_f));
        table.push(row);
        out.push(json!({"pair": i, "report": r}));
    }
    rep.set("dirichlet", json!(out));
    rep.tables.push(table);
    Ok(())
}

/// Variance of `y_1 - y_2` in stationarity when the model has only size-2
/// one-dimensional Gaussian clusters.
fn pair_difference_variance(model: &ClusterProcessModel) -> Option<f64> {
    if model.dim != 1 || model.law.p(2) != 1.0 {
        return None;
    }
    model.law.gaussian_sigma().map(|s| 2.0 * s[0] * s[0])
}

fn run_dynamics(model: &ClusterProcessModel, cfg: &ExperimentConfig, seeds: &mut Seeds, rep: &mut Report) -> Result<()> {
    let k = cfg.window();
    let e = &cfg.experiment;
    let dy = &e.dynamics;
    let step = StepConfig::new(dy.dt);
    let table = dynamics::simulate(model, &k, dy.t_end, step, dy.paths, &e.observables, &dy.checkpoints, seeds.get("dynamics"))?;
    let reference = dynamics::direct_ensemble(model, &k, &e.observables, dy.paths, seeds.get("dynamics-reference"))?;
    let stat = dynamics::stationarity_report(&table, &reference, dy.ks_level);
    for s in &stat.entries {
        rep.criteria.push(Criterion::new(
            format!("observable {} stationary at t = {}", s.observable, s.time),
            s.mean_drift.within(0.0, SE_K) && s.variance_drift.within(0.0, SE_K),
            json!({"mean_drift": s.mean_drift, "variance_drift": s.variance_drift}),
        ));
    }
    let t_sym = dy.checkpoints.iter().copied().find(|t| *t > 0.0).unwrap_or(dy.t_end);
    let (f, g) = (cycle(&e.cylinders, 0), cycle(&e.cylinders, 1));
    let ksym = support_window(&f.inner.iter().chain(&g.inner).collect::<Vec<_>>(), &k)?;
    let sym = dynamics::symmetry_residual(model, &ksym, &f, &g, t_sym, step, dy.paths, seeds.get("dynamics-symmetry"))?;
    rep.criteria.push(Criterion::new("time-reversal symmetry", sym.within(0.0, SE_K), json!({"residual": sym, "t": t_sym})));
    if let Some(target) = pair_difference_variance(model) {
        let pc = dynamics::pair_coordinates(model, [0.0, 0.0], dy.ou_time, step, dy.ou_clusters, seeds.get("dynamics-pairs"))?;
        let rel = (pc.difference_variance.mean - target).abs() / target;
        rep.criteria.push(Criterion::new(
            "pair difference variance reaches its stationary value",
            rel <= 0.05,
            json!({"difference_variance": pc.difference_variance, "target": target, "relative_error": rel}),
        ));
        rep.set("pair_coordinates", json!(pc));
    }
    let mut traj = Table::new(
        "trajectories",
        "Observable pairings along each path at the recorded times.",
        &[("path", "path index"), ("time", "time"), ("observable", "index into experiment.observables"), ("value", "pairing <f, gamma_t> on K")],
    );
    for (p, t, o, v) in table.rows() {
        traj.push(vec![p.to_string(), fmt_f(t), o.to_string(), fmt_f(v)]);
    }
    let mut st = Table::new(
        "stationarity",
        "Drift of each observable's mean and variance against t = 0 (paired over paths), and a KS test against an independent direct-sampler ensemble.",
        &[
            ("observable", "observable index"),
            ("time", "checkpoint"),
            ("mean_drift", "E[f_t] - E[f_0]"),
            ("mean_drift_se", "paired SE"),
            ("variance_drift", "Var[f_t] - Var[f_0]"),
            ("variance_drift_se", "paired SE"),
            ("ks_p", "two-sample KS p-value"),
            ("flagged", "p-value below the Bonferroni level"),
        ],
    );
    for s in &stat.entries {
        let mut row = vec![s.observable.to_string(), fmt_f(s.time)];
        row.extend(est_cells(&s.mean_drift));
        row.extend(est_cells(&s.variance_drift));
        row.extend([fmt_f(s.ks_p), s.flagged.to_string()]);
        st.push(row);
    }
    let mut ac = Table::new(
        "autocorrelation",
        "Sample correlation between each observable at t = 0 and at each checkpoint (reported without thresholds).",
        &[("observable", "observable index"), ("time", "checkpoint"), ("correlation", "sample correlation"), ("correlation_se", "large-sample SE (1 - r^2) / sqrt(n)")],
    );
    for o in 0..table.n_observables() {
        for (t, r) in dynamics::autocorrelation(&table, o) {
            let se = (1.0 - r * r).max(0.0) / (dy.paths as f64).sqrt();
            ac.push(vec![o.to_string(), fmt_f(t), fmt_f(r), fmt_f(se)]);
        }
    }
    rep.set("meta", json!(table.meta));
    rep.set("stationarity", json!(stat));
    rep.set("symmetry", json!(sym));
    rep.tables.extend([traj, st, ac]);
    Ok(())
}

fn run_acceptance(cfg: &ExperimentConfig, quick: bool, rep: &mut Report) -> Result<()> {
    let results = acceptance::run_all(&AcceptanceOptions { quick, seed: cfg.seed });
    let mut table = Table::new(
        "criteria",
        "One row per acceptance criterion.",
        &[("id", "criterion number"), ("name", "short name"), ("passed", "true when every check of the criterion holds"), ("summary", "key numbers")],
    );
    for r in &results {
        table.push(vec![r.id.to_string(), r.name.to_string(), r.passed.to_string(), format!("\"{}\"", r.summary.replace('"', "'"))]);
        rep.criteria.push(Criterion::new(format!("{:02} {}", r.id, r.name), r.passed, r.detail.clone()));
    }
    rep.set("acceptance", json!(results));
    rep.tables.push(table);
    Ok(())
}

/// Entry point of the binary.
pub fn main_entry() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure {n} threads: {e}");
        }
    }
    let text = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => bundled("gaussian-ex1.json").expect("bundled config").to_string(),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let run = match execute(args.command, cfg, args.quick) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = run.write_to(&out) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::from(2);
    }
    for c in &run.criteria {
        println!("[{}] {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    if let Some(err) = run.manifest.get("error").filter(|v| !v.is_null()) {
        eprintln!("error: {err}");
    }
    println!("results written to {}", out.display());
    if run.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for (name, _) in BUNDLED {
            let cfg = bundled_config(name).unwrap();
            assert_eq!(cfg.schema_version, SCHEMA_VERSION);
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = bundled("gaussian-ex1.json").unwrap().replace("\"samples\"", "\"sample_count\"");
        assert!(matches!(parse_config(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_reported() {
        let mut cfg = bundled_config("gaussian-ex1.json").unwrap();
        cfg.experiment.q_grid = vec![1.5];
        cfg.experiment.window = Some(Window { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0], merge_tol: 0.0 });
        let d = cfg.diagnostics();
        assert_eq!(d.len(), 2, "{d:?}");
        cfg.schema_version = 7;
        assert_eq!(cfg.diagnostics().len(), 3);
    }

    #[test]
    fn resolve_fills_defaults() {
        let mut cfg = bundled_config("gaussian-ex1.json").unwrap();
        cfg.resolve(true);
        assert_eq!(cfg.experiment.samples, 10_000);
        assert_eq!(cfg.experiment.cylinders.len(), 3);
        assert!(cfg.diagnostics().is_empty());
    }

    #[test]
    fn csv_and_schema() {
        let mut t = Table::new("x", "demo", &[("a", "first"), ("b", "second")]);
        t.push(vec![fmt_f(0.1), fmt_f(-2.0)]);
        assert_eq!(t.to_csv(), "a,b\n1.0000000000000001e-1,-2.0000000000000000e0\n");
        let run = RunOutput { manifest: json!({}), tables: vec![t], criteria: vec![], passed: true };
        let files = run.files();
        assert_eq!(files.len(), 3);
        assert!(String::from_utf8(files[2].1.clone()).unwrap().contains("| `b` | second |"));
    }

    #[test]
    fn blowup_properness_reports_divergence() {
        let mut cfg = bundled_config("blowup.json").unwrap();
        cfg.experiment.samples = 100;
        let run = execute(Command::Properness, cfg, true).unwrap();
        assert!(!run.passed);
        assert_eq!(run.manifest["results"]["divergence"]["kind"], "divergent");
    }

    #[test]
    fn sample_is_deterministic() {
        let mut cfg = bundled_config("gaussian-ex1.json").unwrap();
        cfg.experiment.samples = 2000;
        let a = execute(Command::Sample, cfg.clone(), false).unwrap();
        let b = execute(Command::Sample, cfg, false).unwrap();
        assert_eq!(a.files(), b.files());
        assert!(a.passed, "{:?}", a.criteria);
    }
}
