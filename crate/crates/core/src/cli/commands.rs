//! The experiment subcommands. Each writes its tables into the output
//! directory and returns a manifest describing the run.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, InitialData};
use crate::diagnostics::{
    commutator_sweep, energy_en, fit_rate, lln_estimator, mean_se, write_commutator_csv, write_lln_csv, LlnRow,
    LlnSettings, RateFit,
};
use crate::dynamics::{run_trajectory, StochasticSystem, TrajectoryConfig, TrajectoryRecord};
use crate::error::{Result, SigmaError};
use crate::gibbs::{
    gibbs_vs_gaussian_covariance, invariance_check, meanfield_gap, sample_gibbs, GibbsRun, InvarianceConfig,
    MeanFieldGapConfig,
};
use crate::grid::{a_n_norm, ComponentEnsemble, GridSpec, PairState};
use crate::noise::{alpha_m, sample_mu1_mu0_pair, NoiseStream, RenormConstants, StreamKind};
use crate::snapshot::{load_state, save_field, save_state};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    RenormTable,
    SimulateHlsm,
    SimulateMeanfield,
    ConvergenceRate,
    LlnDecay,
    SampleGibbs,
    InvarianceCheck,
    Commutator,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::RenormTable,
        Command::SimulateHlsm,
        Command::SimulateMeanfield,
        Command::ConvergenceRate,
        Command::LlnDecay,
        Command::SampleGibbs,
        Command::InvarianceCheck,
        Command::Commutator,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::RenormTable => "renorm-table",
            Command::SimulateHlsm => "simulate-hlsm",
            Command::SimulateMeanfield => "simulate-meanfield",
            Command::ConvergenceRate => "convergence-rate",
            Command::LlnDecay => "lln-decay",
            Command::SampleGibbs => "sample-gibbs",
            Command::InvarianceCheck => "invariance-check",
            Command::Commutator => "commutator",
        }
    }
}

/// Record of one run; serialized to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub stats: Value,
    pub warnings: Vec<String>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl Run<'_> {
    fn seed(&self) -> u64 {
        self.cfg.experiment.seed
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
        if !self.cfg.wants("csv") {
            return Ok(());
        }
        let mut out = BufWriter::new(fs::File::create(self.dir.join(name))?);
        write(&mut out)?;
        out.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn state(&mut self, name: &str, states: &[PairState]) -> Result<()> {
        if !self.cfg.wants("snapshot") {
            return Ok(());
        }
        save_state(states, &self.dir.join(name))?;
        self.outputs.push(format!("{name}/"));
        Ok(())
    }

    fn trajectory_snapshots(&mut self, record: &TrajectoryRecord) -> Result<()> {
        if !self.cfg.wants("snapshot") {
            return Ok(());
        }
        let dir = self.dir.join("snapshots");
        fs::create_dir_all(&dir)?;
        for (k, (_, field)) in record.snapshots.iter().enumerate() {
            save_field(field, &dir.join(format!("node_{k:05}.sgwv")))?;
        }
        self.outputs.push("snapshots/".into());
        Ok(())
    }

    fn fit(&mut self, name: &str, xs: &[f64], ys: &[f64]) -> Result<Value> {
        let fit = fit_rate(xs, ys)?;
        self.csv(name, |out| fit.write_csv(out))?;
        Ok(fit_json(&fit))
    }
}

fn fit_json(fit: &RateFit) -> Value {
    json!({ "slope": fit.slope, "slope_se": fit.slope_se, "intercept": fit.intercept })
}

/// Runs `command` with `cfg`, writing outputs and `manifest.json` into
/// `cfg.output.dir`.
pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    let mut run = Run { cfg, dir: dir.clone(), outputs: Vec::new(), warnings: Vec::new() };
    let stats = match command {
        Command::RenormTable => renorm_table(&mut run)?,
        Command::SimulateHlsm => simulate(&mut run, false)?,
        Command::SimulateMeanfield => simulate(&mut run, true)?,
        Command::ConvergenceRate => convergence_rate(&mut run)?,
        Command::LlnDecay => lln_decay(&mut run)?,
        Command::SampleGibbs => gibbs_samples(&mut run)?,
        Command::InvarianceCheck => invariance(&mut run)?,
        Command::Commutator => commutator(&mut run)?,
    };
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.experiment.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        outputs: run.outputs,
        stats,
        warnings: run.warnings,
    };
    write_manifest(&manifest, &dir.join("manifest.json"))?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| SigmaError::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn steps_of(cfg: &ExperimentConfig) -> usize {
    (cfg.dynamics.t / cfg.dynamics.dt).round() as usize
}

fn renorm_table(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let table = RenormConstants::new(cfg.grid.m, cfg.truncation, cfg.dynamics.dt, steps_of(cfg))?;
    run.csv("renorm_table.csv", |out| table.write_csv(out))?;
    Ok(json!({
        "alpha_M": table.alpha,
        "sigma_M_final": table.schedule.last().copied(),
        "rows": table.schedule.len(),
    }))
}

fn initial_residual(cfg: &ExperimentConfig, spec: GridSpec, count: usize) -> Result<Vec<PairState>> {
    match cfg.dynamics.data {
        InitialData::Zero => Ok(vec![PairState::zeros(spec); count]),
        InitialData::Gaussian => Ok((0..count)
            .map(|j| sample_mu1_mu0_pair(spec, cfg.truncation, &NoiseStream::new(cfg.experiment.seed, j as u64, StreamKind::InitialData)))
            .collect()),
        InitialData::File => {
            let states = load_state(Path::new(&cfg.dynamics.data_path), count, spec.mass())?;
            for s in &states {
                spec.check(s.spec())?;
            }
            Ok(states)
        }
    }
}

fn simulate(run: &mut Run, meanfield: bool) -> Result<Value> {
    let cfg = run.cfg;
    let spec = cfg.spec()?;
    let settings = cfg.integrator()?;
    let count = if meanfield { cfg.dynamics.r } else { cfg.dynamics.n };
    let residual = initial_residual(cfg, spec, count)?;
    let mut sys = if meanfield {
        StochasticSystem::meanfield_from_psi(residual, settings, run.seed())?
    } else {
        StochasticSystem::hlsm_from_psi(ComponentEnsemble::new(residual)?, settings, run.seed())?
    };
    let s = cfg.experiment.s;
    let j = (cfg.experiment.component - 1).min(count - 1);
    let traj = TrajectoryConfig { horizon: cfg.dynamics.t, stride: cfg.dynamics.stride, snapshots: cfg.wants("snapshot") };
    let columns = ["norm_an", "norm_j", "energy"];
    let record = run_trajectory(&mut sys, &traj, &columns, |u| {
        let norms: Vec<f64> = u.iter().map(|p| p.energy_norm(s)).collect();
        vec![a_n_norm(&norms), norms[j], energy_en(u).unwrap_or(f64::NAN)]
    })?;
    run.csv("trajectory.csv", |out| record.write_csv(out))?;
    run.trajectory_snapshots(&record)?;
    run.state("final_residual", sys.residual())?;
    let mut stats = serde_json::Map::new();
    for c in columns {
        stats.insert(format!("max_{c}"), json!(record.running_max(c)));
    }
    stats.insert("final_time".into(), json!(sys.time()));
    stats.insert("nodes".into(), json!(record.rows.len()));
    Ok(Value::Object(stats))
}

fn convergence_rate(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let spec = cfg.spec()?;
    let settings = cfg.integrator()?;
    let seed = run.seed();
    let mut rows = Vec::new();
    for &n in &cfg.experiment.n_list {
        let gap_cfg = MeanFieldGapConfig {
            n,
            horizon: cfg.dynamics.t,
            settings,
            s: cfg.experiment.s,
            component: (cfg.experiment.component - 1).min(n - 1),
            h: cfg.gibbs.coupling_h,
            mixing_steps: cfg.gibbs.coupling_steps,
        };
        let gaps = (0..cfg.experiment.reps as u64)
            .into_par_iter()
            .map(|rep| meanfield_gap(spec, &gap_cfg, seed, rep))
            .collect::<Result<Vec<f64>>>()?;
        let (mean, se) = mean_se(&gaps);
        rows.push(LlnRow { n, mean_norm: mean, se });
    }
    run.csv("convergence.csv", |out| write_lln_csv(&rows, out))?;
    let fit = fit_rows(run, "convergence_fit.csv", &rows)?;
    Ok(json!({ "fit": fit, "rows": rows }))
}

fn fit_rows(run: &mut Run, name: &str, rows: &[LlnRow]) -> Result<Value> {
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_norm).collect();
    run.fit(name, &xs, &ys)
}

fn lln_decay(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let spec = cfg.spec()?;
    let settings = LlnSettings {
        radius: cfg.truncation,
        horizon: cfg.dynamics.t,
        dt: cfg.dynamics.dt,
        reps: cfg.experiment.reps,
        eps: cfg.experiment.eps,
        seed: run.seed(),
    };
    let mut stats = serde_json::Map::new();
    for kind in cfg.lln_kinds() {
        let rows = lln_estimator(kind, spec, &cfg.experiment.n_list, &settings)?;
        run.csv(&format!("lln_{}.csv", kind.name()), |out| write_lln_csv(&rows, out))?;
        let fit = fit_rows(run, &format!("lln_{}_fit.csv", kind.name()), &rows)?;
        stats.insert(kind.name().into(), json!({ "fit": fit, "rows": rows }));
    }
    Ok(Value::Object(stats))
}

/// All configured chains, run in parallel and concatenated in chain order.
fn draw_gibbs(run: &mut Run) -> Result<(Vec<ComponentEnsemble>, Value)> {
    let cfg = run.cfg;
    let spec = cfg.spec()?;
    let alpha = alpha_m(cfg.grid.m, cfg.truncation);
    let sampler = cfg.sampler_config();
    let seed = run.seed();
    let runs = (0..cfg.gibbs.chains as u64)
        .into_par_iter()
        .map(|c| sample_gibbs(spec, alpha, &sampler, seed, c))
        .collect::<Result<Vec<GibbsRun>>>()?;
    let acceptance: Vec<f64> = runs.iter().map(|r| r.acceptance).collect();
    let iact: Vec<f64> = runs.iter().map(|r| r.iact).collect();
    for (c, r) in runs.iter().enumerate() {
        if let Some(w) = &r.warning {
            run.warnings.push(format!("chain {c}: {w}"));
        }
    }
    run.csv("gibbs_chains.csv", |out| {
        writeln!(out, "chain,acceptance,iact")?;
        for (c, (a, t)) in acceptance.iter().zip(&iact).enumerate() {
            writeln!(out, "{c},{a},{t}")?;
        }
        Ok(())
    })?;
    let samples: Vec<ComponentEnsemble> = runs.into_iter().flat_map(|r| r.samples).collect();
    let stats = json!({
        "alpha_M": alpha,
        "samples": samples.len(),
        "mean_acceptance": mean_se(&acceptance).0,
        "max_iact": iact.iter().copied().fold(0.0, f64::max),
        "thin": cfg.gibbs.thin,
    });
    Ok((samples, stats))
}

fn gibbs_samples(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let spec = cfg.spec()?;
    let (samples, stats) = draw_gibbs(run)?;
    let j = (cfg.experiment.component - 1).min(cfg.dynamics.n - 1);
    let modes: Vec<_> = spec.half_lattice().map(|i| spec.mode(i)).filter(|m| m.within(cfg.truncation)).collect();
    let reports = modes
        .iter()
        .map(|&m| gibbs_vs_gaussian_covariance(&samples, j, m, cfg.truncation))
        .collect::<Result<Vec<_>>>()?;
    run.csv("covariance.csv", |out| {
        writeln!(out, "k1,k2,variance,se,gaussian")?;
        for r in &reports {
            writeln!(out, "{},{},{},{},{}", r.k1, r.k2, r.variance, r.se, r.gaussian)?;
        }
        Ok(())
    })?;
    if cfg.wants("snapshot") {
        for (k, s) in samples.iter().enumerate() {
            save_state(s.components(), &run.dir.join("samples").join(format!("sample_{k:05}")))?;
        }
        run.outputs.push("samples/".into());
    }
    let max_dev = reports
        .iter()
        .map(|r| r.relative_deviation().abs())
        .fold(0.0, f64::max);
    let mut stats = stats;
    stats["max_relative_variance_deviation"] = json!(max_dev);
    Ok(stats)
}

fn invariance(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let (samples, mut stats) = draw_gibbs(run)?;
    let icfg = InvarianceConfig {
        horizon: cfg.dynamics.t,
        settings: cfg.integrator()?,
        alpha: alpha_m(cfg.grid.m, cfg.truncation),
        interaction: cfg.gibbs.interaction,
        seed: run.seed(),
    };
    let report = invariance_check(&samples, &icfg)?;
    run.csv("invariance.csv", |out| report.write_csv(out))?;
    stats["observables"] = serde_json::to_value(&report.observables).map_err(|e| SigmaError::Format(e.to_string()))?;
    Ok(stats)
}

fn commutator(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let spec = cfg.spec()?;
    let rows = commutator_sweep(spec, cfg.experiment.s, &cfg.experiment.m_list, cfg.experiment.trials, run.seed())?;
    run.csv("commutator.csv", |out| write_commutator_csv(&rows, out))?;
    let xs: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.defect_max).collect();
    let fit = run.fit("commutator_fit.csv", &xs, &ys)?;
    Ok(json!({ "fit": fit, "bound_exponent": 2.0 - 3.0 * cfg.experiment.s }))
}
