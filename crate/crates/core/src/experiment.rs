//! Config-driven experiments.
//!
//! Typed runners ([`simulate`], [`bigram_arms`], [`bigram_probes`], ...)
//! return structured results. [`run`] renders any experiment into named
//! text artifacts, starting with the resolved config, and leaves writing
//! them to the caller.

use std::fmt::Write as _;

use crate::analysis::{decompose, probe_segment, time_alignment, Alignment, ProbeCurve};
use crate::bigram::{gen_spec, loss_delta_analysis, population_loss, train, BigramLandscape, BigramModel, BigramSpec, CityClass, DeltaReport, TrainOpts, TrainResult};
use crate::config::{ExperimentConfig, ExperimentKind, LandscapeName, Method, RegionChoice};
use crate::error::{Error, Result};
use crate::landscapes::{estimate_constants, Landscape, QuadraticValley, Region, RegularityConstants, SineRiver, StraightValley};
use crate::numerics::RngState;
use crate::optim::{run_gd, run_gf, run_sgd, run_sgd_ensemble, AbortReason, EnsembleStats, RiverColumns, RunOpts, SgdConfig, Trajectory};
use crate::river::{project_to_river, trace_river, ExitPolicy, ProjectOpts, ProjectionResult, RiverTrace, TraceOpts};
use crate::schedules::{DecayWindow, ScheduleKind, ScheduleSpec, ScheduleTable};
use crate::{fmt_f64, fmt_point};

/// RNG stream reserved for bigram dataset generation.
const SPEC_STREAM: u64 = 1;
/// RNG stream for regularity-constant sampling.
const CONSTANTS_STREAM: u64 = 2;

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Human-readable digest for the terminal.
    pub summary: String,
    /// Set when a run diverged; artifacts hold whatever finished, with
    /// truncation markers.
    pub divergence: Option<Error>,
}

impl RunOutput {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            artifacts: vec![Artifact {
                name: "config.cfg".into(),
                contents: cfg.to_text(),
            }],
            summary: String::new(),
            divergence: None,
        }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents,
        });
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.contents.as_str())
    }
}

/// Builds the configured landscape.
///
/// `bigram` draws its dataset from the experiment seed.
pub fn build_landscape(cfg: &ExperimentConfig) -> Result<Box<dyn Landscape>> {
    let l = &cfg.landscape;
    Ok(match l.name {
        LandscapeName::QuadraticValley => Box::new(QuadraticValley::new(l.gamma)?),
        LandscapeName::SineRiver => Box::new(SineRiver),
        LandscapeName::StraightValley => Box::new(StraightValley::new(l.gammas.clone(), l.slope)?),
        LandscapeName::Bigram => Box::new(BigramLandscape { spec: bigram_spec(cfg)? }),
    })
}

pub fn bigram_spec(cfg: &ExperimentConfig) -> Result<BigramSpec> {
    let b = &cfg.bigram;
    let mut rng = RngState::new(cfg.seed, SPEC_STREAM);
    gen_spec(b.n_deterministic, b.n_stochastic, b.m, &mut rng)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.kind {
        ExperimentKind::Schedule => render_schedule(cfg),
        ExperimentKind::Simulate => render_simulation(cfg),
        ExperimentKind::River => render_river(cfg),
        ExperimentKind::Bigram => render_bigram(cfg),
        ExperimentKind::Probe => render_probe(cfg),
    }
}

fn render_schedule(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let spec = cfg.schedule.to_spec()?;
    let table = spec.build_table()?;
    let mut out = RunOutput::new(cfg);
    out.add("schedule.csv", table.to_csv());
    let _ = writeln!(out.summary, "{} schedule, {} steps", spec.kind.name(), table.len());
    if matches!(spec.kind, ScheduleKind::Wsd | ScheduleKind::Wsds) {
        let mut csv = String::from("window,decay_start,decay_end\n");
        for (i, w) in spec.endpoints.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{}", w.start, w.end);
            let _ = writeln!(out.summary, "decay window {i}: ({}, {}]", w.start, w.end);
        }
        out.add("windows.csv", csv);
    }
    Ok(out)
}

fn run_opts(cfg: &ExperimentConfig) -> RunOpts {
    RunOpts {
        region: match cfg.optimizer.region {
            RegionChoice::Default => None,
            RegionChoice::Unbounded => Some(Region::Unbounded),
        },
        loss_cap: cfg.optimizer.loss_cap,
    }
}

fn start_point(cfg: &ExperimentConfig, l: &dyn Landscape) -> Result<Vec<f64>> {
    let w0 = if cfg.optimizer.w0.is_empty() {
        vec![0.0; l.dim()]
    } else {
        cfg.optimizer.w0.clone()
    };
    if w0.len() != l.dim() {
        return Err(Error::Config(format!(
            "optimizer.w0 has {} coordinates, {} has {}",
            w0.len(),
            l.label(),
            l.dim()
        )));
    }
    Ok(w0)
}

fn sgd_config(cfg: &ExperimentConfig) -> SgdConfig {
    let s = &cfg.sgd;
    SgdConfig {
        sigma: s.sigma,
        noise_mode: s.noise,
        v_fixed: (!s.v_fixed.is_empty()).then(|| s.v_fixed.clone()),
        trials: s.trials,
        seed: cfg.seed,
        init_std: s.init_std.clone(),
    }
}

/// Traces the river from the projection of `river.seed_point` (or `w0`),
/// stopping quietly at the landscape's region boundary.
pub fn river_trace(cfg: &ExperimentConfig, l: &dyn Landscape, w0: &[f64]) -> Result<RiverTrace> {
    let seed = if cfg.river.seed_point.is_empty() {
        w0.to_vec()
    } else {
        cfg.river.seed_point.clone()
    };
    let start = match l.river_projection(&seed) {
        Some(p) => p,
        None => {
            let p = project_to_river(l, &seed, &ProjectOpts::default())?;
            if !p.converged {
                return Err(Error::NoConvergence {
                    sweeps: p.history.len(),
                    off: p.residual,
                });
            }
            p.phi
        }
    };
    let opts = TraceOpts {
        region: Some(l.default_region()),
        exit: ExitPolicy::Truncate,
        ..TraceOpts::default()
    };
    trace_river(l, &start, cfg.river.steps, cfg.river.ds, &opts)
}

/// One simulated learning rate.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub label: String,
    pub eta: f64,
    /// Single-trajectory runs.
    pub trajectory: Option<Trajectory>,
    /// Ensembles (`sgd.trials > 1`).
    pub ensemble: Option<EnsembleStats>,
    pub river: Option<Vec<RiverColumns>>,
    pub alignment: Option<Alignment>,
}

impl SimRun {
    pub fn mean_dist(&self) -> Option<f64> {
        self.river
            .as_ref()
            .map(|r| r.iter().map(|c| c.dist).sum::<f64>() / r.len().max(1) as f64)
    }

    pub fn diverged(&self) -> bool {
        self.trajectory
            .as_ref()
            .and_then(|t| t.aborted)
            .is_some_and(|a| a.reason == AbortReason::Divergence)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub runs: Vec<SimRun>,
    pub trace: Option<RiverTrace>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let l = build_landscape(cfg)?;
    let w0 = start_point(cfg, l.as_ref())?;
    let opts = run_opts(cfg);
    let trace = if cfg.river.trace {
        Some(river_trace(cfg, l.as_ref(), &w0)?)
    } else {
        None
    };
    let with_river = cfg.landscape.name != LandscapeName::Bigram;
    let attach = |traj: &Trajectory| -> Result<(Option<Vec<RiverColumns>>, Option<Alignment>)> {
        let river = if with_river { Some(decompose(traj, l.as_ref())?) } else { None };
        let alignment = match &trace {
            Some(tr) if traj.len() >= 2 => {
                let k0 = cfg.river.k0.unwrap_or(traj.len() / 10).min(traj.len() - 2);
                match time_alignment(traj, tr, k0, cfg.river.radius) {
                    Ok(a) => Some(a),
                    Err(_) if traj.aborted.is_some() => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        Ok((river, alignment))
    };

    let mut runs = Vec::new();
    if cfg.optimizer.method == Method::Gf {
        let traj = run_gf(l.as_ref(), &w0, cfg.optimizer.t_end, cfg.optimizer.h, &opts)?;
        let (river, alignment) = attach(&traj)?;
        runs.push(SimRun {
            label: "gf".into(),
            eta: cfg.optimizer.h,
            trajectory: Some(traj),
            ensemble: None,
            river,
            alignment,
        });
        return Ok(Simulation { runs, trace });
    }

    let etas = if cfg.optimizer.etas.is_empty() {
        vec![cfg.schedule.eta_max]
    } else {
        cfg.optimizer.etas.clone()
    };
    let sgd = sgd_config(cfg);
    for eta in etas {
        let table = cfg.schedule.with_eta(eta).build_table()?;
        let label = format!("eta{eta}");
        if cfg.optimizer.method == Method::Sgd && sgd.trials > 1 {
            let stats = run_sgd_ensemble(l.as_ref(), &w0, &table, &sgd, &opts)?;
            runs.push(SimRun {
                label,
                eta,
                trajectory: None,
                ensemble: Some(stats),
                river: None,
                alignment: None,
            });
            continue;
        }
        let traj = match cfg.optimizer.method {
            Method::Sgd => {
                let mut rng = RngState::new(cfg.seed, 0);
                run_sgd(l.as_ref(), &w0, &table, &sgd, &mut rng, &opts)?
            }
            _ => run_gd(l.as_ref(), &w0, &table, &opts)?,
        };
        let (river, alignment) = attach(&traj)?;
        runs.push(SimRun {
            label,
            eta,
            trajectory: Some(traj),
            ensemble: None,
            river,
            alignment,
        });
    }
    Ok(Simulation { runs, trace })
}

fn alignment_csv(traj: &Trajectory, a: &Alignment) -> String {
    let mut s = String::from("step,t,t_tilde,dist_to_trace,ratio\n");
    for (i, st) in traj.steps.iter().enumerate() {
        let ratio = if i > a.k0 { fmt_f64(a.ratios[i - a.k0 - 1].1) } else { String::new() };
        let _ = writeln!(s, "{},{},{},{},{ratio}", st.k, fmt_f64(st.t), fmt_f64(a.t_tilde[i]), fmt_f64(a.dist[i]));
    }
    s
}

fn render_simulation(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let sim = simulate(cfg)?;
    let mut out = RunOutput::new(cfg);
    if let Some(trace) = &sim.trace {
        out.add("river_trace.csv", trace.to_csv());
    }
    let mut summary = String::from("run,eta,rows,status,final_loss,mean_dist_to_river,terminal_t_tilde,mean_ratio\n");
    for r in &sim.runs {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        if let Some(stats) = &r.ensemble {
            out.add(format!("ensemble_{}.csv", r.label), stats.to_csv());
            let _ = writeln!(
                summary,
                "{},{},{},ok,{},,,",
                r.label,
                fmt_f64(r.eta),
                stats.len(),
                fmt_f64(*stats.mean_loss.last().expect("non-empty"))
            );
            let _ = writeln!(
                out.summary,
                "{}: {} trials, final mean loss {:.6}",
                r.label,
                stats.trials,
                stats.mean_loss.last().expect("non-empty")
            );
            continue;
        }
        let traj = r.trajectory.as_ref().expect("trajectory run");
        out.add(format!("trajectory_{}.csv", r.label), traj.to_csv(r.river.as_deref()));
        if let Some(a) = &r.alignment {
            out.add(format!("alignment_{}.csv", r.label), alignment_csv(traj, a));
        }
        let status = match traj.aborted {
            None => "ok".to_string(),
            Some(a) => format!("truncated at {} ({:?})", a.step, a.reason),
        };
        let _ = writeln!(
            summary,
            "{},{},{},{status},{},{},{},{}",
            r.label,
            fmt_f64(r.eta),
            traj.len(),
            fmt_f64(traj.last().loss),
            opt(r.mean_dist()),
            opt(r.alignment.as_ref().map(Alignment::terminal_t_tilde)),
            opt(r.alignment.as_ref().map(Alignment::mean_ratio)),
        );
        let _ = writeln!(
            out.summary,
            "{}: {} rows, {status}, final loss {:.6}{}",
            r.label,
            traj.len(),
            traj.last().loss,
            r.alignment
                .as_ref()
                .map(|a| format!(", terminal t~ {:.4}, mean ratio {:.4}", a.terminal_t_tilde(), a.mean_ratio()))
                .unwrap_or_default()
        );
        if r.diverged() && out.divergence.is_none() {
            out.divergence = traj.aborted.map(|a| a.to_error());
        }
    }
    out.add("summary.csv", summary);
    Ok(out)
}

/// River geometry around `optimizer.w0`.
#[derive(Debug, Clone)]
pub struct RiverReport {
    pub projection: ProjectionResult,
    pub trace: RiverTrace,
    /// `None` when the landscape's region cannot be sampled.
    pub constants: Option<RegularityConstants>,
}

pub fn river_report(cfg: &ExperimentConfig) -> Result<RiverReport> {
    let l = build_landscape(cfg)?;
    let w0 = start_point(cfg, l.as_ref())?;
    let projection = project_to_river(l.as_ref(), &w0, &ProjectOpts::default())?;
    let trace = river_trace(cfg, l.as_ref(), &w0)?;
    let region = l.default_region();
    let constants = match region {
        Region::Unbounded => None,
        _ => {
            let mut rng = RngState::new(cfg.seed, CONSTANTS_STREAM);
            Some(estimate_constants(l.as_ref(), &region, cfg.river.samples, &mut rng)?.with_noise(cfg.sgd.sigma, 0.0))
        }
    };
    Ok(RiverReport {
        projection,
        trace,
        constants,
    })
}

fn constants_text(c: &RegularityConstants) -> String {
    let mut s = String::new();
    for (k, v) in [
        ("gamma", c.gamma),
        ("flat_gamma", c.flat_gamma),
        ("max_gamma", c.max_gamma),
        ("kappa", c.kappa),
        ("kappa_prime", c.kappa_prime),
        ("grad_hi", c.grad_hi),
        ("grad_lo", c.grad_lo),
        ("rho", c.rho),
        ("tau", c.tau),
        ("loss_cap", c.loss_cap),
        ("radius", c.radius),
        ("sigma", c.sigma),
        ("delta", c.delta),
        ("t_max", c.t_max),
    ] {
        let _ = writeln!(s, "{k} = {}", fmt_f64(v));
    }
    let _ = writeln!(s, "samples = {}", c.samples);
    let _ = writeln!(s, "certified = {}", c.certified);
    for n in &c.notes {
        let _ = writeln!(s, "# {n}");
    }
    s
}

fn render_river(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let r = river_report(cfg)?;
    let mut out = RunOutput::new(cfg);
    let mut proj = String::from("t,residual\n");
    for (t, res) in &r.projection.history {
        let _ = writeln!(proj, "{},{}", fmt_f64(*t), fmt_f64(*res));
    }
    out.add("projection.csv", proj);
    out.add("river_trace.csv", r.trace.to_csv());
    let _ = writeln!(
        out.summary,
        "projection: phi = ({}), residual {:.3e}, flow time {:.4}, converged {}",
        fmt_point(&r.projection.phi),
        r.projection.residual,
        r.projection.flow_time,
        r.projection.converged
    );
    let _ = writeln!(
        out.summary,
        "trace: {} points, final time {:.4}{}",
        r.trace.len(),
        r.trace.final_time(),
        if r.trace.truncated { ", stopped at region boundary" } else { "" }
    );
    match &r.constants {
        Some(c) => {
            let _ = writeln!(out.summary, "constants: gamma {:.4e}, kappa {:.4e}, certified {}", c.gamma, c.kappa, c.certified);
            out.add("constants.txt", constants_text(c));
        }
        None => out.summary.push_str("constants: skipped, landscape region is unbounded\n"),
    }
    Ok(out)
}

/// Constant and decay arms of the bigram experiment.
#[derive(Debug, Clone)]
pub struct BigramArms {
    pub spec: BigramSpec,
    pub constant: TrainResult,
    pub decay: TrainResult,
    pub deltas: DeltaReport,
    pub window: DecayWindow,
}

/// Stable/decay schedules: both hold `eta_max`; the decay arm leaves it
/// over the final `bigram.decay_fraction` of the run.
pub fn bigram_schedules(cfg: &ExperimentConfig) -> Result<(ScheduleTable, ScheduleTable, DecayWindow)> {
    let sc = &cfg.schedule;
    if sc.kind != ScheduleKind::Constant {
        return Err(Error::Config("bigram arms need schedule.kind = constant".into()));
    }
    let steps = sc.steps;
    let len = (cfg.bigram.decay_fraction * steps as f64).round() as usize;
    if len == 0 || len + 2 > steps {
        return Err(Error::Config(format!("decay of {len} steps does not fit in {steps}")));
    }
    let window = DecayWindow {
        start: steps - 1 - len,
        end: steps - 1,
    };
    let stable = ScheduleSpec::constant(sc.eta_max, steps).with_warmup(sc.warmup).build_table()?;
    let decay = ScheduleSpec::wsd(sc.eta_max, sc.eta_max * cfg.bigram.decay_ratio, vec![window], steps)
        .with_warmup(sc.warmup)
        .build_table()?;
    Ok((stable, decay, window))
}

fn train_opts(cfg: &ExperimentConfig, checkpoints: Vec<usize>) -> TrainOpts {
    TrainOpts {
        batch: cfg.bigram.batch,
        seed: cfg.seed,
        eval_every: cfg.bigram.eval_every,
        checkpoints,
        ..TrainOpts::default()
    }
}

pub fn bigram_arms(cfg: &ExperimentConfig) -> Result<BigramArms> {
    let spec = bigram_spec(cfg)?;
    let (stable, decay, window) = bigram_schedules(cfg)?;
    let opts = train_opts(cfg, Vec::new());
    let (a, b) = rayon::join(|| train(&spec, &stable, &opts), || train(&spec, &decay, &opts));
    let (constant, decay) = (a?, b?);
    let deltas = loss_delta_analysis(&spec, &constant.model, &decay.model)?;
    Ok(BigramArms {
        spec,
        constant,
        decay,
        deltas,
        window,
    })
}

fn render_bigram(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::new(cfg);
    let arms = match bigram_arms(cfg) {
        Ok(a) => a,
        Err(e @ Error::Divergence { .. }) => {
            out.summary = format!("{e}\n");
            out.divergence = Some(e);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let spec = &arms.spec;
    out.add("bigram_spec.txt", spec.to_text());
    out.add("loss_constant.csv", arms.constant.curve_csv());
    out.add("loss_decay.csv", arms.decay.curve_csv());
    out.add("cities.csv", arms.deltas.to_csv(spec));
    let mut hist = String::from("lo,hi,deterministic,stochastic\n");
    for b in &arms.deltas.histogram {
        let _ = writeln!(hist, "{},{},{},{}", fmt_f64(b.lo), fmt_f64(b.hi), b.deterministic, b.stochastic);
    }
    out.add("delta_histogram.csv", hist);
    let floor = spec.entropy_floor();
    let s = &mut out.summary;
    let _ = writeln!(s, "cities: {} ({} stochastic), names: {}", spec.n, spec.n_prime, spec.m);
    let _ = writeln!(s, "decay window: ({}, {}]", arms.window.start, arms.window.end);
    let _ = writeln!(s, "final loss: constant {:.6}, decay {:.6}, entropy floor {floor:.6}", arms.constant.final_loss(), arms.decay.final_loss());
    let _ = writeln!(
        s,
        "mean delta: deterministic {:.6}, stochastic {:.6}",
        arms.deltas.mean_delta(spec, CityClass::Deterministic),
        arms.deltas.mean_delta(spec, CityClass::Stochastic)
    );
    match arms.deltas.spearman {
        Some(r) => {
            let _ = writeln!(s, "spearman(delta, entropy) = {r:.6}");
        }
        None => s.push_str("spearman(delta, entropy) undefined: constant input\n"),
    }
    Ok(out)
}

/// Interpolation probes between checkpoints of the bigram decay arm.
#[derive(Debug, Clone)]
pub struct BigramProbes {
    /// Stable-phase pair `(D − gap, D)`.
    pub stable_steps: (usize, usize),
    /// Decay-phase pair `(midpoint of the window, end of run)`.
    pub decay_steps: (usize, usize),
    pub stable: ProbeCurve,
    pub decay: ProbeCurve,
}

pub fn bigram_probes(cfg: &ExperimentConfig) -> Result<BigramProbes> {
    let spec = bigram_spec(cfg)?;
    let (_, decay, window) = bigram_schedules(cfg)?;
    let d = window.start;
    if cfg.probe.gap == 0 || cfg.probe.gap > d {
        return Err(Error::Config(format!("probe.gap = {} does not fit before the decay at {d}", cfg.probe.gap)));
    }
    let stable_steps = (d - cfg.probe.gap, d);
    let decay_steps = (d + window.len() / 2, decay.len());
    let opts = train_opts(cfg, vec![stable_steps.0, stable_steps.1, decay_steps.0, decay_steps.1]);
    let run = train(&spec, &decay, &opts)?;
    let loss = |w: &[f64]| {
        population_loss(
            &spec,
            &BigramModel {
                n: spec.n,
                m: spec.m,
                theta: w.to_vec(),
            },
        )
        .unwrap_or(f64::NAN)
    };
    let ckpt = |k: usize| run.checkpoint(k).map(|m| m.theta.clone()).expect("requested checkpoint");
    let stable = probe_segment(loss, &ckpt(stable_steps.0), &ckpt(stable_steps.1), cfg.probe.points)?;
    let decay = probe_segment(loss, &ckpt(decay_steps.0), &ckpt(decay_steps.1), cfg.probe.points)?;
    Ok(BigramProbes {
        stable_steps,
        decay_steps,
        stable,
        decay,
    })
}

fn render_probe(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::new(cfg);
    if cfg.landscape.name == LandscapeName::Bigram {
        let p = bigram_probes(cfg)?;
        out.add("probe_stable.csv", p.stable.to_csv());
        out.add("probe_decay.csv", p.decay.to_csv());
        let _ = writeln!(out.summary, "stable steps {} -> {}: {}", p.stable_steps.0, p.stable_steps.1, p.stable.class.name());
        let _ = writeln!(out.summary, "decay steps {} -> {}: {}", p.decay_steps.0, p.decay_steps.1, p.decay.class.name());
        return Ok(out);
    }
    let l = build_landscape(cfg)?;
    if cfg.probe.a.len() != l.dim() || cfg.probe.b.len() != l.dim() {
        return Err(Error::Config(format!("probe.a and probe.b need {} coordinates", l.dim())));
    }
    let c = probe_segment(|w| l.value(w), &cfg.probe.a, &cfg.probe.b, cfg.probe.points)?;
    out.add("probe.csv", c.to_csv());
    let _ = writeln!(out.summary, "{}", c.class.name());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ProbeClass;
    use crate::config::preset;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_text(text).unwrap()
    }

    #[test]
    fn catalog_builds_every_landscape() {
        for (name, dim) in [("quadratic_valley", 2), ("sine_river", 2), ("straight_valley", 2)] {
            let c = cfg(&format!("experiment.kind = simulate\nlandscape.name = {name}\n"));
            assert_eq!(build_landscape(&c).unwrap().dim(), dim);
        }
        let c = cfg("experiment.kind = simulate\nlandscape.name = bigram\nbigram.n_deterministic = 3\nbigram.n_stochastic = 2\nbigram.m = 4\n");
        assert_eq!(build_landscape(&c).unwrap().dim(), 20);
    }

    #[test]
    fn schedule_run_emits_step_lr() {
        let out = run(&preset("table2").unwrap()).unwrap();
        let csv = out.artifact("schedule.csv").unwrap();
        assert!(csv.starts_with("step,lr\n"));
        assert_eq!(csv.lines().count(), 53_752);
        assert!(out.artifact("windows.csv").unwrap().contains("2,48750,53750"));
        assert!(out.artifact("config.cfg").unwrap().contains("schedule.kind = wsds"));
    }

    #[test]
    fn zero_step_sgd_writes_initial_row() {
        let c = cfg("experiment.kind = simulate\noptimizer.method = sgd\nschedule.steps = 0\nsgd.sigma = 0\n");
        let out = run(&c).unwrap();
        let csv = out.artifact("trajectory_eta0.1.csv").unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0,,"));
    }

    #[test]
    fn fig4b_tracks_and_orders_progress() {
        let sim = simulate(&preset("fig4b").unwrap()).unwrap();
        let terminal: Vec<f64> = sim.runs.iter().map(|r| r.alignment.as_ref().unwrap().terminal_t_tilde()).collect();
        assert!(terminal.windows(2).all(|w| w[1] > w[0]), "{terminal:?}");
        for r in &sim.runs {
            let a = r.alignment.as_ref().unwrap();
            assert!(a.ratios.iter().all(|(_, x)| (0.8..=1.2).contains(x)));
        }
    }

    #[test]
    fn fig4c_larger_rate_oscillates_more_and_moves_further() {
        let sim = simulate(&preset("fig4c").unwrap()).unwrap();
        let (lo, hi) = (&sim.runs[0], &sim.runs[1]);
        assert!(hi.mean_dist().unwrap() > lo.mean_dist().unwrap());
        let t = |r: &SimRun| r.alignment.as_ref().unwrap().terminal_t_tilde();
        assert!(t(hi) > t(lo));
    }

    #[test]
    fn divergence_is_flagged_with_marker() {
        let c = cfg("experiment.kind = simulate\nlandscape.gamma = 1\nschedule.eta_max = 2.5\nschedule.steps = 400\noptimizer.w0 = 0, 1\n");
        let out = run(&c).unwrap();
        assert!(matches!(out.divergence, Some(Error::Divergence { .. })));
        assert!(out.artifact("trajectory_eta2.5.csv").unwrap().contains("# truncated at step"));
    }

    #[test]
    fn river_report_on_sine() {
        let c = cfg("experiment.kind = river\nlandscape.name = sine_river\noptimizer.w0 = 1, 0\nriver.steps = 200\nriver.samples = 20\n");
        let out = run(&c).unwrap();
        assert!(out.artifact("river_trace.csv").unwrap().starts_with("idx,t,arclen,loss,x0,x1\n"));
        assert!(out.artifact("constants.txt").unwrap().contains("gamma = "));
        let q = run(&cfg("experiment.kind = river\nriver.steps = 10\n")).unwrap();
        assert!(q.artifact("constants.txt").is_none());
    }

    #[test]
    fn toy_probe_needs_endpoints() {
        let c = cfg("experiment.kind = probe\nprobe.a = 5, 1\nprobe.b = 5, -1\n");
        assert_eq!(run(&c).unwrap().summary.trim(), ProbeClass::Valley.name());
        assert!(run(&cfg("experiment.kind = probe\n")).is_err());
    }

    #[test]
    fn small_bigram_run_is_deterministic() {
        let text = "experiment.kind = bigram\nexperiment.seed = 2\nschedule.eta_max = 20\nschedule.steps = 600\nbigram.n_deterministic = 20\nbigram.n_stochastic = 20\n";
        let a = run(&cfg(text)).unwrap();
        let b = run(&cfg(text)).unwrap();
        assert_eq!(a, b);
        assert!(a.artifact("cities.csv").unwrap().starts_with("city,class,entropy,gini,loss_stable,loss_decay,delta\n"));
        assert!(bigram_schedules(&cfg("experiment.kind = bigram\nschedule.kind = cosine\n")).is_err());
    }
}
