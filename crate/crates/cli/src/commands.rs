//! The batch commands. Each reads a validated configuration, writes its
//! tables into the output directory and finishes with `manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use pairlik::covariance::{CovarianceSpec, Param, ParamSet};
use pairlik::geometry::{perturbed_grid_design, Cutoff, LocationSet};
use pairlik::inference::{are_sweep, fit, Bounds, FitOptions, FitResult, MinimizeOptions, Starts};
use pairlik::io::{read_dataset, read_locations, write_realizations, Dataset};
use pairlik::objective::{Objective, ObjectiveSpec, PlKind};
use pairlik::predict::{loo_predict, scores};
use pairlik::simulate::{derive_seed, simulate_batch, simulate_grf, FieldSampler};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Stream index reserved for the site design, disjoint from replicate streams.
const DESIGN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Benchmark,
    Are,
    Study,
    Scores,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Benchmark => "benchmark",
            Command::Are => "are",
            Command::Study => "study",
            Command::Scores => "scores",
        }
    }
}

/// Record of one run; with timings disabled it is byte-identical across reruns.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub failures: usize,
    pub non_converged: usize,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub config: RunConfig,
}

/// Validate, run and write the manifest. Non-convergence is raised only
/// after every output has been written.
pub fn run(cmd: Command, cfg: &RunConfig) -> CliResult<Manifest> {
    cfg.validate()?;
    let clock = Instant::now();
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut m = Manifest {
        command: cmd.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash(),
        seed: cfg.study.seed,
        outputs: Vec::new(),
        failures: 0,
        non_converged: 0,
        notes: Vec::new(),
        wall_time_s: None,
        config: cfg.clone(),
    };
    match cmd {
        Command::Simulate => simulate(cfg, &mut m)?,
        Command::Fit => fit_data(cfg, &mut m)?,
        Command::Benchmark => benchmark(cfg, &mut m)?,
        Command::Are => are(cfg, &mut m)?,
        Command::Study => study(cfg, &mut m)?,
        Command::Scores => score_table(cfg, &mut m)?,
    }
    if cfg.output.timings {
        m.wall_time_s = Some(clock.elapsed().as_secs_f64());
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&m).expect("manifests serialize") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    let strict = matches!(cmd, Command::Fit | Command::Scores);
    if strict && m.non_converged > 0 {
        return Err(CliError::NonConvergence(format!(
            "{} fit(s) did not converge; results written to {}",
            m.non_converged,
            dir.display()
        )));
    }
    Ok(m)
}

fn create(dir: &Path, name: &str, m: &mut Manifest) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    m.outputs.push(name.into());
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::io(&path, e))
}

fn csv_writer(dir: &Path, name: &str, header: &[&str], m: &mut Manifest) -> CliResult<csv::Writer<BufWriter<File>>> {
    let mut w = csv::Writer::from_writer(create(dir, name, m)?);
    w.write_record(header).map_err(|e| CliError::io(&dir.join(name), e))?;
    Ok(w)
}

fn finish(mut w: csv::Writer<BufWriter<File>>, dir: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(dir, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// Sites from the configured design source.
pub fn sites(cfg: &RunConfig) -> CliResult<LocationSet> {
    let d = &cfg.design;
    if let Some(k) = d.grid_k {
        let seed = derive_seed(cfg.seed()?, DESIGN_STREAM);
        return perturbed_grid_design(k, d.increment, d.jitter, seed).map_err(|e| CliError::Config(format!("design: {e}")));
    }
    if let Some(p) = &d.file {
        return read_locations(open(p)?, d.radius_km).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));
    }
    if d.data.is_some() {
        return Ok(dataset(cfg)?.locations);
    }
    Err(CliError::Config("design: one of grid_k, file or data is required".into()))
}

pub fn dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let p = cfg
        .design
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs observations: set design.data or pass --data".into()))?;
    read_dataset(open(p)?, cfg.design.radius_km, cfg.design.rep).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn fit_options(cfg: &RunConfig, information: bool) -> FitOptions {
    FitOptions {
        starts: match cfg.method.starts {
            1 => Starts::Single,
            k => Starts::LogSpaced(k),
        },
        minimize: MinimizeOptions {
            max_iter: cfg.method.max_iter,
            ..MinimizeOptions::default()
        },
        information,
    }
}

fn simulate(cfg: &RunConfig, m: &mut Manifest) -> CliResult<()> {
    let seed = cfg.seed()?;
    let locs = sites(cfg)?;
    let spec = cfg.model.spec()?;
    let reps = simulate_batch(&spec, &locs, cfg.study.replicates, seed)?;
    let mut out = create(&cfg.output.dir, "realizations.csv", m)?;
    write_realizations(&mut out, &locs, &reps)?;
    out.flush().map_err(|e| CliError::io(&cfg.output.dir, e))?;
    eprintln!("simulated {} replicate(s) on {} sites", reps.len(), locs.len());
    Ok(())
}

fn fit_one(
    os: ObjectiveSpec,
    locs: &LocationSet,
    z: &[f64],
    start: &CovarianceSpec,
    params: &ParamSet,
    opts: &FitOptions,
    timings: bool,
) -> pairlik::Result<FitResult> {
    let obj = Objective::new(os, locs, z)?;
    let mut r = fit(&obj, start, params, &Bounds::around(start, params), opts)?;
    if !timings {
        r.wall_time_s = 0.0;
    }
    Ok(r)
}

fn fit_data(cfg: &RunConfig, m: &mut Manifest) -> CliResult<()> {
    let data = dataset(cfg)?;
    let start = cfg.model.spec()?;
    let params = cfg.model.params()?;
    let opts = fit_options(cfg, cfg.method.information);
    let mut results = Vec::new();
    for os in cfg.method.objectives()? {
        let r = fit_one(os, &data.locations, &data.values, &start, &params, &opts, cfg.output.timings)?;
        match r.n_pairs {
            Some(p) => eprintln!("{}: {} sites, {p} pairs", r.method, r.n_sites),
            None => eprintln!("{}: {} sites", r.method, r.n_sites),
        }
        if !r.convergence.converged {
            m.non_converged += 1;
        }
        if let Some(note) = &r.information_note {
            m.notes.push(format!("{}: {note}", r.method));
        }
        results.push(r);
    }
    let mut out = create(&cfg.output.dir, "fit.json", m)?;
    serde_json::to_writer_pretty(&mut out, &results).expect("fit results serialize");
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(&cfg.output.dir, e))
}

fn benchmark(cfg: &RunConfig, m: &mut Manifest) -> CliResult<()> {
    let seed = cfg.seed()?;
    let max_k = cfg
        .design
        .grid_k
        .ok_or_else(|| CliError::Config("benchmark needs design.grid_k (the last level)".into()))?;
    let cutoff = cfg.method.cutoff.or(cfg.method.taper_range);
    let taper = cfg.method.taper_range.or(cfg.method.cutoff);
    let (d, t) = cutoff
        .zip(taper)
        .ok_or_else(|| CliError::Config("benchmark needs method.cutoff or method.taper_range".into()))?;
    let spec = cfg.model.spec()?;
    let objectives = [
        ObjectiveSpec::ml(),
        ObjectiveSpec::taper2(t)?,
        ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Unbounded)?,
        ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Finite(d))?,
    ];
    let dir = &cfg.output.dir;
    let mut w = csv_writer(dir, "benchmark.csv", &["n", "ml", "tap", "pl_m", "pl_m_d", "percent_nonzero"], m)?;
    for k in 0..=max_k {
        let locs = perturbed_grid_design(k, cfg.design.increment, cfg.design.jitter, derive_seed(seed, DESIGN_STREAM - k as u64))
            .map_err(|e| CliError::Config(format!("design: {e}")))?;
        let z = simulate_grf(&spec, &locs, derive_seed(seed, k as u64))?.values;
        let mut row = vec![locs.len().to_string()];
        let mut nonzero = f64::NAN;
        for os in objectives {
            let obj = Objective::new(os, &locs, &z)?;
            obj.value(&spec)?;
            let clock = Instant::now();
            obj.value(&spec)?;
            row.push(clock.elapsed().as_secs_f64().to_string());
            if matches!(os.kind, pairlik::objective::ObjectiveKind::Taper2) {
                nonzero = obj.pairs().map_or(f64::NAN, |p| p.nonzero_fraction());
            }
        }
        row.push(nonzero.to_string());
        eprintln!("benchmark n={}: {}", locs.len(), row[1..].join(", "));
        w.write_record(&row).map_err(|e| CliError::io(dir, e))?;
    }
    finish(w, dir)
}

fn are(cfg: &RunConfig, m: &mut Manifest) -> CliResult<()> {
    let locs = sites(cfg)?;
    let spec = cfg.model.spec()?;
    let params = cfg.model.params()?;
    let reports = are_sweep(&spec, &params, &locs, &cfg.are.methods()?, &cfg.are.fractions())?;
    let dir = &cfg.output.dir;
    let mut w = csv_writer(dir, "are.csv", &["method", "percent_nonzero", "d", "are"], m)?;
    for r in &reports {
        let value = match &r.are {
            Ok(v) => *v,
            Err(e) => {
                m.failures += 1;
                m.notes.push(format!("{} at fraction {}: {e}", r.method, r.target));
                f64::NAN
            }
        };
        w.write_record([r.method.to_string(), r.nonzero_fraction.to_string(), r.d.to_string(), value.to_string()])
            .map_err(|e| CliError::io(dir, e))?;
    }
    finish(w, dir)
}

struct StudyRow {
    rep: usize,
    method: String,
    estimates: Vec<(Param, f64)>,
    converged: bool,
    seconds: f64,
    error: Option<String>,
}

fn study(cfg: &RunConfig, m: &mut Manifest) -> CliResult<()> {
    let seed = cfg.seed()?;
    let locs = sites(cfg)?;
    let truth = cfg.model.spec()?;
    let params = cfg.model.params()?;
    let objectives = cfg.method.objectives()?;
    let sampler = FieldSampler::new(&truth, &locs)?;
    let opts = fit_options(cfg, false);
    let rows: Vec<Vec<StudyRow>> = (0..cfg.study.replicates)
        .into_par_iter()
        .map(|rep| {
            let z = sampler.draw(derive_seed(seed, rep as u64)).values;
            objectives
                .iter()
                .map(|&os| match fit_one(os, &locs, &z, &truth, &params, &opts, true) {
                    Ok(r) => StudyRow {
                        rep,
                        method: r.method.clone(),
                        estimates: params.params().iter().map(|&p| (p, r.estimate(p).unwrap())).collect(),
                        converged: r.convergence.converged,
                        seconds: r.wall_time_s,
                        error: None,
                    },
                    Err(e) => StudyRow {
                        rep,
                        method: os.label(),
                        estimates: params.params().iter().map(|&p| (p, f64::NAN)).collect(),
                        converged: false,
                        seconds: f64::NAN,
                        error: Some(e.to_string()),
                    },
                })
                .collect()
        })
        .collect();
    let dir = &cfg.output.dir;
    let mut w = csv_writer(dir, "study.csv", &["rep", "method", "param", "estimate", "converged", "seconds"], m)?;
    for row in rows.iter().flatten() {
        if let Some(e) = &row.error {
            m.failures += 1;
            m.notes.push(format!("rep {} {}: {e}", row.rep, row.method));
        } else if !row.converged {
            m.non_converged += 1;
        }
        let seconds = if cfg.output.timings { row.seconds.to_string() } else { String::new() };
        for (p, v) in &row.estimates {
            w.write_record([
                row.rep.to_string(),
                row.method.clone(),
                p.name().to_string(),
                v.to_string(),
                row.converged.to_string(),
                seconds.clone(),
            ])
            .map_err(|e| CliError::io(dir, e))?;
        }
    }
    eprintln!(
        "study: {} replicates x {} methods, {} failures, {} non-converged",
        cfg.study.replicates,
        objectives.len(),
        m.failures,
        m.non_converged
    );
    finish(w, dir)
}

/// The two models compared by `scores`: free nugget, and nugget fixed at zero.
pub fn score_models(cfg: &RunConfig) -> CliResult<[(&'static str, CovarianceSpec, ParamSet); 2]> {
    let base = cfg.model.spec()?;
    let tau = if base.nugget > 0.0 { base.nugget } else { 0.1 * base.sigma2 };
    let with = base.with_nugget(tau)?;
    let without = base.with_nugget(0.0)?;
    Ok([
        ("with_nugget", with, ParamSet::all()),
        ("without_nugget", without, ParamSet::variance_and_range()),
    ])
}

fn score_table(cfg: &RunConfig, m: &mut Manifest) -> CliResult<()> {
    let data = dataset(cfg)?;
    let opts = fit_options(cfg, false);
    let dir = &cfg.output.dir;
    let mut w = csv_writer(dir, "scores.csv", &["model", "method", "rmse", "lscore", "crps"], m)?;
    for (model, start, params) in score_models(cfg)? {
        for os in cfg.method.objectives()? {
            let r = fit_one(os, &data.locations, &data.values, &start, &params, &opts, true)?;
            if !r.convergence.converged {
                m.non_converged += 1;
            }
            let s = scores(&loo_predict(r.fitted_spec(), &data.locations, &data.values)?, &data.values)?;
            w.write_record([model.to_string(), r.method.clone(), s.rmse.to_string(), s.lscore.to_string(), s.crps.to_string()])
                .map_err(|e| CliError::io(dir, e))?;
        }
    }
    finish(w, dir)
}
