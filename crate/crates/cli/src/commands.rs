//! Subcommand implementations and the output directory with its manifest.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use spikefield::diagnostics::{chaos_correlation, convergence_study, Functional, StudyOptions};
use spikefield::hitting::{density_curve, hitting_cdf_mc, integrated_density_bridge, ForcedDiffusion};
use spikefield::kernel::{check_soma_constraint, synapse_density_by_name};
use spikefield::model::{probe_grid, validate_coefficients, KERNEL_ORIGIN_TOL};
use spikefield::particle::{simulate_network, SimOptions};
use spikefield::presets::Scenario;
use spikefield::rng::derive_seed;
use spikefield::solver::{
    envelope_start, picard_solve, stability_envelope, Evaluator, McOptions, PicardDiagnostics, PicardOptions, RateFunction, RenewalOptions,
};

use crate::config::{EvaluatorName, RunConfig, StartName};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// How a finished subcommand wants the process to end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Validation found a failing check.
    ChecksFailed,
    /// Picard iteration stopped above tolerance.
    NotConverged,
}

/// Output directory of one run. Files are recorded as they are written and
/// listed in the manifest.
pub struct RunDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    /// Refuses a directory that already holds a manifest unless `force`, in
    /// which case the previous run's files are removed first.
    pub fn prepare(dir: &Path, force: bool) -> Result<Self, CliError> {
        let manifest = dir.join(MANIFEST);
        if manifest.exists() {
            if !force {
                return Err(CliError::Config(format!("{} already holds a run; pass --force to overwrite", dir.display())));
            }
            let old: Value = fs::read_to_string(&manifest)
                .ok()
                .and_then(|t| serde_json::from_str(&t).ok())
                .unwrap_or(Value::Null);
            if let Some(files) = old.get("outputs").and_then(Value::as_array) {
                for f in files.iter().filter_map(Value::as_str) {
                    let p = dir.join(f);
                    if p.is_file() {
                        fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
                    }
                }
            }
            fs::remove_file(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, cfg: &RunConfig, subcommand: &str, summary: Value) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "spikefield",
            "versions": { "spikefield": spikefield::VERSION, "spikefield-cli": env!("CARGO_PKG_VERSION") },
            "subcommand": subcommand,
            "seed": cfg.seed,
            "config_hash": cfg.hash(),
            "outputs": self.files,
            "summary": summary,
            "config": cfg,
        });
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

pub fn validate(cfg: &RunConfig, out: &mut RunDir) -> Result<(Status, Value), CliError> {
    let (cs, caveat) = cfg.coefficients()?;
    let law = cfg.law()?;
    let report = validate_coefficients(&cs, &probe_grid(-20.0, 20.0, 401), KERNEL_ORIGIN_TOL);
    let (rho, _) = synapse_density_by_name(&cfg.model.kernel.rho, cfg.model.kernel.amplitude)?;
    let soma = check_soma_constraint(rho.as_ref(), &probe_grid(-10.0, 10.0, 401));
    let soma_ok = soma.passed(KERNEL_ORIGIN_TOL);
    let law_ok = law.check_density_condition(100_000, 20, cfg.seed);
    let weights_ok = cfg.weights.n >= 2 && cfg.weights.scheme.weights(cfg.weights.n).row_sums().is_ok();
    let grid_ok = cfg.scenario().is_ok();

    let mut lines = Vec::new();
    for c in &report.checks {
        lines.push((c.name.to_string(), c.passed));
    }
    lines.push(("synapse density vanishes to fourth order at the soma".into(), soma_ok));
    lines.push(("initial law near threshold".into(), law_ok));
    lines.push(("weights".into(), weights_ok));
    lines.push(("grid".into(), grid_ok));
    for (name, ok) in &lines {
        println!("{:<4} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    if let Some(c) = caveat {
        println!("note: {c}");
    }
    let all = lines.iter().all(|(_, ok)| *ok);
    let body = json!({
        "passed": all,
        "coefficient_checks": report,
        "soma": { "rho": soma.rho, "rho2": soma.rho2, "rho4": soma.rho4, "min_on_probe": soma.min_on_probe, "passed": soma_ok },
        "initial_law_condition": law_ok,
        "weights": weights_ok,
        "grid": grid_ok,
        "caveat": caveat,
    });
    out.write("validation.json", |w| writeln!(w, "{}", serde_json::to_string_pretty(&body).expect("report serializes")))?;
    Ok((if all { Status::Ok } else { Status::ChecksFailed }, json!({ "passed": all })))
}

pub fn kernel(cfg: &RunConfig, out: &mut RunDir) -> Result<(Status, Value), CliError> {
    let s = cfg.scenario()?;
    out.write("kernel.csv", |w| s.table.write_csv(w))?;
    Ok((Status::Ok, json!({ "sup_norm": s.table.sup_norm })))
}

pub fn simulate(cfg: &RunConfig, out: &mut RunDir) -> Result<(Status, Value), CliError> {
    let s = cfg.scenario()?;
    let weights = cfg.weights.scheme.weights(cfg.weights.n);
    let opts = SimOptions { crossing: cfg.simulate.crossing.into(), ..Default::default() };
    let (traj, spikes) = simulate_network(&s.cs, &s.table, &weights, &s.law, &s.grid, cfg.seed, &opts)?;
    out.write("trajectories.csv", |w| traj.write_csv(w))?;
    out.write("spikes.csv", |w| spikes.write_csv(w))?;
    let total = spikes.total();
    println!("{} neurons, {} spikes", weights.len(), total);
    Ok((Status::Ok, json!({ "neurons": weights.len(), "spikes": total })))
}

fn picard_options(cfg: &RunConfig) -> PicardOptions {
    let s = &cfg.solver;
    let evaluator = match s.evaluator {
        EvaluatorName::Mc => Evaluator::Mc(McOptions { n_mc: s.n_mc, seed: cfg.seed, crossing: s.crossing.into(), bandwidth_steps: s.bandwidth_steps }),
        EvaluatorName::Renewal => Evaluator::Renewal(RenewalOptions {
            n_mc: s.n_mc,
            substeps: s.substeps,
            n_initial: s.n_initial,
            batches: s.batches,
            seed: cfg.seed,
            bandwidth_steps: s.bandwidth_steps,
        }),
    };
    PicardOptions { tol: s.tol, max_iter: s.max_iter, evaluator }
}

fn run_solver(cfg: &RunConfig, s: &Scenario) -> Result<(RateFunction, PicardDiagnostics), CliError> {
    let start = match cfg.solver.start {
        StartName::Zero => None,
        StartName::HalfEnvelope => {
            let env = stability_envelope(&s.cs, &s.table, s.law.support_bound, s.grid.horizon);
            Some(envelope_start(&env, &s.grid, cfg.solver.bandwidth_steps))
        }
    };
    Ok(picard_solve(&s.cs, &s.table, &s.law, &s.grid, &picard_options(cfg), start)?)
}

fn solver_summary(diag: &PicardDiagnostics) -> Value {
    json!({
        "converged": diag.converged,
        "iterations": diag.iterations(),
        "residual": diag.residual,
        "noise_floor": diag.final_noise_floor(),
    })
}

pub fn solve(cfg: &RunConfig, out: &mut RunDir) -> Result<(Status, Value), CliError> {
    let s = cfg.scenario()?;
    let (h, diag) = run_solver(cfg, &s)?;
    let env = stability_envelope(&s.cs, &s.table, s.law.support_bound, s.grid.horizon);
    out.write("rate.csv", |w| h.write_csv(w))?;
    out.write("diagnostics.txt", |w| write!(w, "{diag}"))?;
    out.write("envelope.csv", |w| env.write_csv(w, &s.grid))?;
    print!("{diag}");
    let status = if diag.converged { Status::Ok } else { Status::NotConverged };
    Ok((status, solver_summary(&diag)))
}

pub fn density(cfg: &RunConfig, out: &mut RunDir) -> Result<(Status, Value), CliError> {
    let d = &cfg.density;
    if d.times.is_empty() || d.times.iter().any(|&t| !(t > 0.0)) || !(d.check_dt > 0.0) {
        return Err(CliError::Config("density: times and check_dt must be positive".into()));
    }
    let (cs, _) = cfg.coefficients()?;
    let alpha = d.alpha.build()?;
    let horizon = d.times.iter().cloned().fold(0.0, f64::max);
    let mut curves = Vec::new();
    let mut checks = Vec::new();
    for (k, &x) in d.starts.iter().enumerate() {
        let fd = ForcedDiffusion::new(&cs, alpha.clone(), x, horizon)?;
        let seed = derive_seed(cfg.seed, &[k as u64]);
        curves.push((x, density_curve(&fd, &d.times, d.n_mc, d.n_times, seed)?));
        for (j, &t) in d.times.iter().enumerate() {
            let cell_seed = derive_seed(seed, &[j as u64]);
            let integral = integrated_density_bridge(&fd, t, d.n_mc, d.n_times, cell_seed)?;
            let substeps = (t / d.check_dt).ceil().max(1.0) as usize;
            let cdf = hitting_cdf_mc(&fd, t, 1, substeps, d.check_paths, cell_seed)?;
            let se = (integral.std_error.powi(2) + cdf[1].se.powi(2)).sqrt();
            let z = if se > 0.0 { (integral.value - cdf[1].mean) / se } else { 0.0 };
            checks.push((x, t, integral, cdf[1], z));
        }
    }
    out.write("density.csv", |w| {
        writeln!(w, "x,t,estimate,std_error")?;
        for (x, curve) in &curves {
            for (t, e) in curve {
                writeln!(w, "{x},{t},{},{}", e.value, e.std_error)?;
            }
        }
        Ok(())
    })?;
    out.write("crosscheck.csv", |w| {
        writeln!(w, "x,t,integrated_density,integrated_se,cdf_mc,cdf_se,z")?;
        for (x, t, i, c, z) in &checks {
            writeln!(w, "{x},{t},{},{},{},{},{z}", i.value, i.std_error, c.mean, c.se)?;
        }
        Ok(())
    })?;
    let within = checks.iter().filter(|c| c.4.abs() <= 3.0).count();
    println!("cross-check: {within}/{} cells within 3 standard errors", checks.len());
    Ok((Status::Ok, json!({ "cells": checks.len(), "within_3se": within })))
}

pub fn study(cfg: &RunConfig, out: &mut RunDir) -> Result<(Status, Value), CliError> {
    let dg = &cfg.diagnostics;
    if dg.n_reps < 3 || dg.n_list.is_empty() {
        return Err(CliError::Config("diagnostics: need a nonempty n_list and n_reps >= 3".into()));
    }
    let s = cfg.scenario()?;
    let (h, diag) = run_solver(cfg, &s)?;
    let mut nodes: Vec<usize> = dg.t_nodes.iter().map(|&t| s.grid.nearest(t)).collect();
    nodes.dedup();
    let opts = StudyOptions {
        n_list: dg.n_list.clone(),
        n_reps: dg.n_reps,
        nodes: nodes.clone(),
        limit_paths: dg.limit_paths,
        crossing: dg.crossing.into(),
        seed: cfg.seed,
        neuron: dg.neuron,
    };
    let scheme = cfg.weights.scheme;
    let (table, ensembles) = convergence_study(&s, |n| scheme.weights(n), &h, &opts)?;
    let mut chaos = Vec::new();
    for e in &ensembles {
        let runs: Vec<_> = e.runs.iter().map(|r| r.0.clone()).collect();
        chaos.push((e.weights.len(), chaos_correlation(&runs, &nodes, Functional::Tanh)?));
    }
    out.write("rate.csv", |w| h.write_csv(w))?;
    out.write("diagnostics.txt", |w| write!(w, "{diag}"))?;
    out.write("convergence.csv", |w| table.write_csv(w))?;
    out.write("convergence_long.csv", |w| table.write_long_csv(w))?;
    out.write("chaos.csv", |w| {
        writeln!(w, "N,t,cov,se")?;
        for (n, rows) in &chaos {
            for c in rows {
                writeln!(w, "{n},{},{},{}", c.t, c.cov, c.se)?;
            }
        }
        Ok(())
    })?;
    for r in &table.rows {
        println!("N = {:>6}  sup deviation {:.4} ± {:.4}", r.n, r.sup_deviation.mean, r.sup_deviation.se);
    }
    let status = if diag.converged { Status::Ok } else { Status::NotConverged };
    Ok((status, json!({ "solver": solver_summary(&diag), "n_list": dg.n_list })))
}
