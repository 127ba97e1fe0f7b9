use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{RunConfig, SynthConfig};
use super::ingest::{ingest, write_dataset, DropReport};
use crate::concordance::label_counts;
use crate::error::{Error, Result};
use crate::inference::{bootstrap_fit, BootstrapOptions, BootstrapResult, CoefficientSummary};
use crate::pipeline::{fit_two_step, phi_profile, AnalysisSpec, EvaluationGrid, PhiSurface, TwoStepFit};
use crate::synthetic::{generate, oracle_table};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub taus: Option<Vec<f64>>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub merged: bool,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = &self.taus {
            cfg.taus = Some(t.clone());
            cfg.tau_range = None;
        }
        if let Some(b) = self.bootstrap {
            cfg.bootstrap.enabled = true;
            cfg.bootstrap.replicates = b;
        }
        if let Some(s) = self.seed {
            cfg.bootstrap.seed = s;
        }
        if self.merged {
            cfg.merged = true;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
    }
}

pub struct TauOutcome {
    pub fit: TwoStepFit,
    pub surface: PhiSurface,
    pub bootstrap: Option<BootstrapResult>,
}

pub struct Analysis {
    pub spec: AnalysisSpec,
    pub n_rows: usize,
    pub drops: DropReport,
    pub outcomes: Vec<TauOutcome>,
}

/// Runs the configured analysis without writing anything.
pub fn run_analysis(cfg: &RunConfig) -> Result<Analysis> {
    let spec = cfg.analysis_spec()?;
    let (data, drops) = ingest(&cfg.input, &spec.used_columns(), &cfg.binary_columns)
        .map_err(|e| e.in_step("ingest"))?;
    let work = || -> Result<Vec<TauOutcome>> {
        let grid = EvaluationGrid::build(&data, &spec)?;
        spec.taus
            .par_iter()
            .map(|&tau| {
                let fit = fit_two_step(&data, &spec, tau)?;
                let mut surface = fit.surface(&grid)?;
                let bootstrap = if cfg.bootstrap.enabled {
                    let opts = BootstrapOptions {
                        replicates: cfg.bootstrap.replicates,
                        seed: cfg.bootstrap.seed,
                        level: cfg.bootstrap.level,
                        threads: None,
                    };
                    let result = bootstrap_fit(&data, &spec, &fit, &surface, &grid, &opts)
                        .map_err(|e| e.in_step("bootstrap"))?;
                    result.annotate(&mut surface);
                    Some(result)
                } else {
                    None
                };
                Ok(TauOutcome {
                    fit,
                    surface,
                    bootstrap,
                })
            })
            .collect()
    };
    let outcomes = if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work)?
    } else {
        work()?
    };
    Ok(Analysis {
        n_rows: data.n_rows(),
        spec,
        drops,
        outcomes,
    })
}

/// Runs the analysis and writes every output file into the output directory.
/// Returns the written paths. Nothing is left behind on failure.
pub fn analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::invalid("no output directory: set output_dir or pass --out"))?;
    let analysis = run_analysis(cfg)?;
    let files = render(cfg, &analysis)?;
    write_all(&out_dir, &files)
}

fn write_all(out_dir: &Path, files: &[(PathBuf, String)]) -> Result<Vec<PathBuf>> {
    let mut written: Vec<PathBuf> = Vec::new();
    let mut created_dirs: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for (rel, contents) in files {
            let path = out_dir.join(rel);
            if let Some(parent) = path.parent() {
                let mut missing = Vec::new();
                let mut p = parent;
                while !p.exists() {
                    missing.push(p.to_path_buf());
                    match p.parent() {
                        Some(next) => p = next,
                        None => break,
                    }
                }
                std::fs::create_dir_all(parent)?;
                created_dirs.extend(missing);
            }
            std::fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        for d in &created_dirs {
            let _ = std::fs::remove_dir(d);
        }
        return Err(e);
    }
    Ok(written)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn tau_dir(tau: f64) -> String {
    format!("tau_{tau}")
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn summary_cells(s: Option<&CoefficientSummary>) -> [String; 5] {
    match s {
        Some(s) => [
            s.se.to_string(),
            s.wald.0.to_string(),
            s.wald.1.to_string(),
            s.percentile.0.to_string(),
            s.percentile.1.to_string(),
        ],
        None => Default::default(),
    }
}

pub const PROFILE_COLUMNS: [&str; 9] = [
    "tau",
    "covariate",
    "value",
    "phi_hat",
    "ci_lower",
    "ci_upper",
    "phi_min",
    "phi_max",
    "out_of_bounds_flag",
];

fn step1_table(o: &TauOutcome) -> Result<String> {
    let mut rows = Vec::new();
    for (r, fit) in o.fit.step1.iter().enumerate() {
        for (j, name) in fit.names.iter().enumerate() {
            let boot = o.bootstrap.as_ref().map(|b| &b.step1[r][j]);
            let mut row = vec![
                o.fit.responses[r].clone(),
                name.clone(),
                fit.beta[j].to_string(),
            ];
            row.extend(summary_cells(boot));
            rows.push(row);
        }
    }
    csv_string(
        &["response", "term", "estimate", "se", "ci_lower", "ci_upper", "pct_lower", "pct_upper"],
        rows,
    )
}

fn step2_table(o: &TauOutcome) -> Result<String> {
    let m = &o.fit.step2;
    let model_se = m.standard_errors();
    let mut rows = Vec::new();
    for (c, cat) in m.categories.iter().enumerate() {
        for (j, name) in m.term_names.iter().enumerate() {
            let boot = o.bootstrap.as_ref().map(|b| &b.step2[c][j]);
            let mut row = vec![
                cat.to_string(),
                name.clone(),
                m.gamma[c][j].to_string(),
                fmt_opt(model_se.as_ref().map(|s| s[c][j])),
            ];
            row.extend(summary_cells(boot));
            rows.push(row);
        }
    }
    csv_string(
        &[
            "category", "term", "estimate", "model_se", "se", "ci_lower", "ci_upper", "pct_lower",
            "pct_upper",
        ],
        rows,
    )
}

fn profile_table(surfaces: &[PhiSurface], covariate: &str) -> Result<String> {
    let rows = phi_profile(surfaces, covariate)?
        .into_iter()
        .map(|r| {
            vec![
                r.tau.to_string(),
                r.covariate,
                fmt_opt(r.value),
                r.phi_hat.to_string(),
                fmt_opt(r.ci_lower),
                fmt_opt(r.ci_upper),
                r.phi_min.to_string(),
                r.phi_max.to_string(),
                u8::from(r.out_of_bounds).to_string(),
            ]
        })
        .collect();
    csv_string(&PROFILE_COLUMNS, rows)
}

#[derive(Serialize)]
struct TauMetadata {
    tau: f64,
    step1_iterations: [usize; 2],
    sign_margins: [f64; 2],
    label_counts: [(String, usize); 4],
    multinomial_converged: bool,
    multinomial_iterations: usize,
    separation_warning: bool,
    loglik: f64,
    grid_rows_extrapolated: usize,
    grid_rows_out_of_bounds: usize,
    replicate_failures: Option<usize>,
    winsorized_draws: Option<usize>,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    input: String,
    rows_used: usize,
    rows_dropped: &'a [usize],
    responses: &'a [String; 2],
    merged: bool,
    bootstrap: Option<BootstrapMeta>,
    rng: &'static str,
    taus: Vec<TauMetadata>,
}

#[derive(Serialize)]
struct BootstrapMeta {
    replicates: usize,
    seed: u64,
    level: f64,
}

fn metadata(cfg: &RunConfig, a: &Analysis) -> Result<String> {
    let taus = a
        .outcomes
        .iter()
        .map(|o| {
            let counts = label_counts(&o.fit.labels);
            TauMetadata {
                tau: o.fit.tau,
                step1_iterations: o.fit.step1.each_ref().map(|f| f.iterations),
                sign_margins: o.fit.sign_margins(),
                label_counts: crate::concordance::ConcordanceLabel::ALL
                    .map(|l| (l.to_string(), counts[l.index()])),
                multinomial_converged: o.fit.step2.converged,
                multinomial_iterations: o.fit.step2.iterations,
                separation_warning: o.fit.step2.separation_warning,
                loglik: o.fit.step2.loglik,
                grid_rows_extrapolated: o.surface.rows.iter().filter(|r| r.extrapolated).count(),
                grid_rows_out_of_bounds: o.surface.rows.iter().filter(|r| r.out_of_bounds).count(),
                replicate_failures: o.bootstrap.as_ref().map(|b| b.failures()),
                winsorized_draws: o
                    .bootstrap
                    .as_ref()
                    .map(|b| b.phi.iter().map(|p| p.winsorized).sum()),
            }
        })
        .collect();
    let meta = RunMetadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        input: cfg.input.display().to_string(),
        rows_used: a.n_rows,
        rows_dropped: &a.drops.dropped_rows,
        responses: &a.spec.responses,
        merged: a.spec.merged,
        bootstrap: cfg.bootstrap.enabled.then_some(BootstrapMeta {
            replicates: cfg.bootstrap.replicates,
            seed: cfg.bootstrap.seed,
            level: cfg.bootstrap.level,
        }),
        rng: "ChaCha8 (seed, stream = replicate index)",
        taus,
    };
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Human-readable tables with three decimals.
fn summary(a: &Analysis) -> String {
    let mut s = String::new();
    let taus: Vec<f64> = a.outcomes.iter().map(|o| o.fit.tau).collect();
    let cell = |v: Option<f64>| match v {
        Some(x) => format!("{x:>9.3}"),
        None => format!("{:>9}", "-"),
    };
    for r in 0..2 {
        let _ = writeln!(s, "Estimated quantile regression coefficients: {}", a.spec.responses[r]);
        let _ = write!(s, "{:<24}", "");
        for t in &taus {
            let _ = write!(s, "{:>20}", format!("tau={t:.2}"));
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<24}", "term");
        for _ in &taus {
            let _ = write!(s, "{:>11}{:>9}", "coef", "se");
        }
        let _ = writeln!(s);
        let names = &a.outcomes[0].fit.step1[r].names;
        for (j, name) in names.iter().enumerate() {
            let _ = write!(s, "{name:<24}");
            for o in &a.outcomes {
                let se = o.bootstrap.as_ref().map(|b| b.step1[r][j].se);
                let _ = write!(s, "  {}{}", cell(Some(o.fit.step1[r].beta[j])), cell(se));
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
    }
    for o in &a.outcomes {
        let m = &o.fit.step2;
        let _ = writeln!(
            s,
            "Multinomial coefficients (reference \"00\"), tau={:.2}{}",
            o.fit.tau,
            if m.converged { "" } else { "  [not converged]" }
        );
        for (c, cat) in m.categories.iter().enumerate() {
            for (j, name) in m.term_names.iter().enumerate() {
                let se = o.bootstrap.as_ref().map(|b| b.step2[c][j].se);
                let _ = writeln!(s, "  {cat:<6} {name:<24}{}{}", cell(Some(m.gamma[c][j])), cell(se));
            }
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "Predicted correlation at the baseline profile");
    let _ = writeln!(s, "{:>8}{:>9}{:>9}{:>9}{:>9}{:>9}", "tau", "phi", "lower", "upper", "min", "max");
    for o in &a.outcomes {
        if let Some(r) = o.surface.rows.first() {
            let _ = writeln!(
                s,
                "{:>8.2}{}{}{}{}{}",
                o.fit.tau,
                cell(Some(r.phi_hat)),
                cell(r.band.map(|b| b.0)),
                cell(r.band.map(|b| b.1)),
                cell(Some(o.surface.bounds.phi_min)),
                cell(Some(o.surface.bounds.phi_max)),
            );
        }
    }
    s
}

/// All output files as `(relative path, contents)`.
pub fn render(cfg: &RunConfig, a: &Analysis) -> Result<Vec<(PathBuf, String)>> {
    let mut files = Vec::new();
    for o in &a.outcomes {
        let dir = PathBuf::from(tau_dir(o.fit.tau));
        files.push((dir.join("step1_coefficients.csv"), step1_table(o)?));
        files.push((dir.join("step2_coefficients.csv"), step2_table(o)?));
    }
    let surfaces: Vec<PhiSurface> = a.outcomes.iter().map(|o| o.surface.clone()).collect();
    let mut covariates: Vec<&str> = Vec::new();
    for r in &surfaces[0].rows {
        if !covariates.contains(&r.covariate.as_str()) {
            covariates.push(&r.covariate);
        }
    }
    for c in covariates {
        files.push((
            PathBuf::from(format!("phi_profile_{}.csv", sanitize(c))),
            profile_table(&surfaces, c)?,
        ));
    }
    files.push((PathBuf::from("summary.txt"), summary(a)));
    files.push((PathBuf::from("metadata.json"), metadata(cfg, a)?));
    Ok(files)
}

/// Sidecar path for the oracle table: `data.csv` -> `data.oracle.csv`.
pub fn oracle_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}.oracle.csv"))
}

/// Writes the synthetic dataset and its oracle sidecar.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<[PathBuf; 2]> {
    let data = generate(&cfg.scenario)?;
    let oracle = oracle_table(&cfg.scenario, &cfg.taus)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_dataset(&data, out)?;
    let rows = oracle
        .into_iter()
        .map(|r| {
            vec![
                r.group.map(|g| g.to_string()).unwrap_or_default(),
                r.rho.to_string(),
                r.tau.to_string(),
                r.phi.to_string(),
            ]
        })
        .collect();
    let sidecar = oracle_path(out);
    std::fs::write(&sidecar, csv_string(&["group", "rho", "tau", "phi"], rows)?)?;
    Ok([out.to_path_buf(), sidecar])
}
