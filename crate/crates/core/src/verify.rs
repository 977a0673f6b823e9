//! Acceptance checks, grouped into suites.
//!
//! Each check is a plain function returning a [`TheoryReport`]; [`CHECKS`]
//! lists them with their suite and wall-clock budget.

use std::time::{Duration, Instant};

use crate::analysis::{
    decay_variance_recursion, hill_slope_vs_lr, schedule_dominance, stationary_check, stationary_variance,
    time_alignment, Check, HillSlopeOpts, ProbeClass, TheoryReport,
};
use crate::bigram::{block_hessian, generalized_river_check, gini, BigramModel, BigramSpec, CityClass};
use crate::config::preset;
use crate::error::{Error, Result};
use crate::experiment::{bigram_arms, bigram_probes, simulate};
use crate::landscapes::{Landscape, QuadraticValley, StraightValley};
use crate::numerics::{linear_fit, RngState};
use crate::optim::{run_gd, run_gf, run_sgd_ensemble, NoiseMode, RunOpts, SgdConfig};
use crate::river::{project_to_river, trace_river, ProjectOpts, TraceOpts};
use crate::schedules::{decay_windows, ScheduleSpec, DEFAULT_DECAY_FRACTION};

pub const SUITES: &[&str] = &["schedules", "river", "gd", "sgd", "decay", "bigram", "probe", "all"];

pub struct CheckSpec {
    pub id: usize,
    pub name: &'static str,
    pub suite: &'static str,
    pub budget: Duration,
    pub run: fn() -> Result<TheoryReport>,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub const CHECKS: &[CheckSpec] = &[
    CheckSpec { id: 1, name: "stationarity", suite: "sgd", budget: secs(10), run: stationarity },
    CheckSpec { id: 2, name: "optimal_schedule_dominance", suite: "decay", budget: secs(1), run: optimal_schedule_dominance },
    CheckSpec { id: 3, name: "gd_river_tracking", suite: "gd", budget: secs(5), run: gd_river_tracking },
    CheckSpec { id: 4, name: "straight_valley_alignment", suite: "gd", budget: secs(1), run: straight_valley_alignment },
    CheckSpec { id: 5, name: "hill_linear_in_lr", suite: "sgd", budget: secs(60), run: hill_linear_in_lr },
    CheckSpec { id: 6, name: "decay_phase", suite: "decay", budget: secs(30), run: decay_phase },
    CheckSpec { id: 7, name: "flat_then_drop", suite: "decay", budget: secs(30), run: flat_then_drop },
    CheckSpec { id: 8, name: "bigram_sharpness", suite: "bigram", budget: secs(1), run: bigram_sharpness },
    CheckSpec { id: 9, name: "generalized_river", suite: "bigram", budget: secs(1), run: generalized_river },
    CheckSpec { id: 10, name: "bigram_wsd_curve", suite: "bigram", budget: secs(120), run: bigram_wsd_curve },
    CheckSpec { id: 11, name: "interpolation_probe", suite: "probe", budget: secs(60), run: interpolation_probe },
    CheckSpec { id: 12, name: "schedule_exactness", suite: "schedules", budget: secs(1), run: schedule_exactness },
    CheckSpec { id: 13, name: "flow_integration", suite: "river", budget: secs(1), run: flow_integration },
];

pub fn suite(name: &str) -> Result<Vec<&'static CheckSpec>> {
    if !SUITES.contains(&name) {
        return Err(Error::Config(format!("unknown suite `{name}`; expected one of {}", SUITES.join(", "))));
    }
    Ok(CHECKS.iter().filter(|c| name == "all" || c.suite == name).collect())
}

pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub report: Result<TheoryReport>,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_ok_and(TheoryReport::passed)
    }

    pub fn within_budget(&self) -> bool {
        self.elapsed <= self.budget
    }

    /// `[PASS] 3 gd_river_tracking (0.41 s, budget 5 s)`
    pub fn line(&self) -> String {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!(
            "[{tag}] {:>2} {} ({:.2} s, budget {} s)",
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        );
        if let Err(e) = &self.report {
            s.push_str(&format!(": error: {e}"));
        }
        s
    }
}

pub fn run_check(c: &CheckSpec) -> Outcome {
    let start = Instant::now();
    let report = (c.run)();
    Outcome {
        id: c.id,
        name: c.name,
        report,
        elapsed: start.elapsed(),
        budget: c.budget,
    }
}

pub fn stationarity() -> Result<TheoryReport> {
    stationary_check(1.0, 0.1, 1.0, 200, 100_000, 1)
}

pub fn optimal_schedule_dominance() -> Result<TheoryReport> {
    schedule_dominance(1.0, 0.5, 1.0, 50)
}

pub fn gd_river_tracking() -> Result<TheoryReport> {
    let cfg = preset("fig4b")?;
    let k0 = cfg.river.k0.unwrap_or(20);
    let sim = simulate(&cfg)?;
    let mut r = TheoryReport::new("gd_river_tracking");
    let mut terminal = Vec::new();
    for run in &sim.runs {
        let river = run.river.as_ref().ok_or_else(|| Error::Precondition("missing river columns".into()))?;
        let align = run.alignment.as_ref().ok_or_else(|| Error::Precondition("missing alignment".into()))?;
        let traj = run.trajectory.as_ref().expect("gd run");
        let dmax = river.iter().skip(k0).map(|c| c.dist).fold(0.0, f64::max);
        let lo = align.ratios.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = align.ratios.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        r.row(format!("eta={} max dist_to_river, k >= {k0}", run.eta), dmax, 0.1, Check::Below)
            .row(format!("eta={} min ratio", run.eta), lo, 0.8, Check::AtLeast)
            .row(format!("eta={} max ratio", run.eta), hi, 1.2, Check::AtMost)
            .row(format!("eta={} terminal t~", run.eta), align.terminal_t_tilde(), 0.0, Check::Info);
        if let Some(a) = traj.aborted {
            r.note(format!("eta={}: left the tracking region at step {}; checked rows 0..{}", run.eta, a.step, traj.len()));
        }
        terminal.push(align.terminal_t_tilde());
    }
    r.flag("terminal t~ strictly increasing in eta", terminal.windows(2).all(|w| w[1] > w[0]));
    Ok(r)
}

pub fn straight_valley_alignment() -> Result<TheoryReport> {
    let q = QuadraticValley::new(1.0)?;
    let trace = trace_river(&q, &[0.0, 0.0], 1200, 0.05, &TraceOpts::default())?;
    let mut r = TheoryReport::new("straight_valley_alignment");
    for eta in [0.1, 0.5] {
        let table = ScheduleSpec::constant(eta, 100).build_table()?;
        let traj = run_gd(&q, &[0.0, 1.0], &table, &RunOpts::default())?;
        let a = time_alignment(&traj, &trace, 10, f64::INFINITY)?;
        let worst = a.ratios.iter().map(|x| (x.1 - 1.0).abs()).fold(0.0, f64::max);
        r.row(format!("eta={eta} max |ratio - 1|"), worst, 1e-10, Check::AtMost);
    }
    Ok(r)
}

pub fn hill_linear_in_lr() -> Result<TheoryReport> {
    let l = StraightValley::new(vec![1.0], 1.0)?;
    let cfg = SgdConfig {
        sigma: 0.5,
        trials: 10_000,
        seed: 5,
        ..SgdConfig::default()
    };
    let (report, _) = hill_slope_vs_lr(&l, &[0.02, 0.05, 0.1, 0.2], &cfg, &HillSlopeOpts::default())?;
    Ok(report)
}

pub fn decay_phase() -> Result<TheoryReport> {
    let (gamma, eta, sigma, steps) = (1.0, 0.1, 1.0, 200);
    let var0 = stationary_variance(gamma, eta, sigma);
    let table = ScheduleSpec::theory_decay(eta, gamma, 0, steps).build_table()?;
    let rec = decay_variance_recursion(&[gamma], eta, &table.lrs, sigma, &[var0])?;
    let worst_bound = rec
        .var
        .iter()
        .zip(&rec.bound)
        .map(|(v, b)| v[0] / b[0])
        .fold(0.0, f64::max);
    let q = QuadraticValley::new(gamma)?;
    let cfg = SgdConfig {
        sigma,
        noise_mode: NoiseMode::FixedComplement,
        trials: 10_000,
        seed: 3,
        init_std: vec![0.0, var0.sqrt()],
        ..SgdConfig::default()
    };
    let stats = run_sgd_ensemble(&q, &[0.0, 0.0], &table, &cfg, &RunOpts::default())?;
    let predicted = rec.hill(&[gamma]);
    let measured = stats.mean_hill.as_ref().expect("closed-form projection");
    let worst = predicted
        .iter()
        .zip(measured)
        .map(|(p, m)| (m / p - 1.0).abs())
        .fold(0.0, f64::max);
    let mut r = TheoryReport::new("decay_phase");
    r.flag("variance bound holds at every step", rec.bound_holds)
        .row("max var_k / bound_k", worst_bound, 1.0, Check::AtMost)
        .row("max rel dev of MC hill from γσ_k/2", worst, 0.15, Check::AtMost)
        .row("final hill loss", measured[steps], predicted[steps], Check::Info);
    r.note(format!("{steps} decay steps, {} trials", cfg.trials));
    Ok(r)
}

pub fn flat_then_drop() -> Result<TheoryReport> {
    let cfg = preset("fig5")?;
    let k_s = cfg.schedule.k_s;
    let window = cfg.schedule.steps - k_s;
    if window > k_s {
        return Err(Error::Precondition("decay window longer than the stable phase".into()));
    }
    let sim = simulate(&cfg)?;
    let stats = sim.runs[0]
        .ensemble
        .as_ref()
        .ok_or_else(|| Error::Precondition("fig5 preset must run an ensemble".into()))?;
    let mean = &stats.mean_loss;
    let decay_drop = mean[k_s] - mean[k_s + window];
    let stable_drop = mean[k_s - window] - mean[k_s];
    let mut r = TheoryReport::new("flat_then_drop");
    r.row("decay drop / stable drop", decay_drop / stable_drop, 3.0, Check::AtLeast)
        .row("decay-window drop", decay_drop, 0.0, Check::Info)
        .row("stable-window drop", stable_drop, 0.0, Check::Info);
    r.note(format!("windows of {window} steps around k_s = {k_s}, {} trials", stats.trials));
    Ok(r)
}

pub fn bigram_sharpness() -> Result<TheoryReport> {
    let mut rng = RngState::new(8, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let m = 2 + i % 15;
        let raw: Vec<f64> = (0..m).map(|_| -rng.uniform().ln()).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|x| x / total).collect();
        worst = worst.max((block_hessian(&q).trace() - gini(&q)).abs());
    }
    let mut r = TheoryReport::new("bigram_sharpness");
    r.row("max |trace(diag(q) - qqᵀ) - U|", worst, 1e-12, Check::AtMost);
    Ok(r)
}

/// Five near-uniform fitted cities and five nearly deterministic ones whose
/// model sits short of its target.
fn assumption_p_setup() -> Result<(BigramSpec, BigramModel)> {
    let mut rows = Vec::new();
    let mut class = Vec::new();
    for i in 0..5 {
        let e = 0.01 * (i as f64 - 2.0);
        rows.push(vec![0.25 + e, 0.25 - e, 0.25 + e / 2.0, 0.25 - e / 2.0]);
        class.push(CityClass::Stochastic);
    }
    for i in 0..5 {
        let mut p = vec![0.001; 4];
        p[i % 4] = 0.997;
        rows.push(p);
        class.push(CityClass::Deterministic);
    }
    let spec = BigramSpec::from_rows(rows, class, 5)?;
    let mut model = BigramModel::matching(&spec);
    for i in 5..10 {
        let mut q = vec![0.005 / 3.0; 4];
        q[(i - 5) % 4] = 0.995;
        for (z, p) in model.theta[i * 4..(i + 1) * 4].iter_mut().zip(q) {
            *z = f64::ln(p);
        }
    }
    Ok((spec, model))
}

pub fn generalized_river() -> Result<TheoryReport> {
    let gamma_p = 0.01;
    let (spec, model) = assumption_p_setup()?;
    let g = generalized_river_check(&spec, &model, gamma_p)?;
    let mut r = TheoryReport::new("generalized_river");
    r.row("stochastic gradient max", g.stochastic_grad_max, 1e-10, Check::AtMost)
        .row("gradient norm on eigenvalues > 2γ_P", g.sharp_grad_norm, 1e-8, Check::AtMost)
        .row("stochastic least nonzero eigenvalue", g.stochastic_min_eig, 8.0 * gamma_p, Check::Above)
        .row("deterministic top eigenvalue", g.deterministic_max_eig, 2.0 * gamma_p, Check::Below)
        .row("flat dimension", g.flat_dim as f64, (spec.n_prime + (spec.n - spec.n_prime) * spec.m) as f64, Check::Abs(0.0));
    Ok(r)
}

pub fn bigram_wsd_curve() -> Result<TheoryReport> {
    let cfg = preset("bigram")?;
    let arms = bigram_arms(&cfg)?;
    let floor = arms.spec.entropy_floor();
    let half = arms.window.start + arms.window.len() / 2;
    let matched: Vec<(f64, f64)> = arms
        .constant
        .curve
        .iter()
        .zip(&arms.decay.curve)
        .filter(|(a, _)| a.step >= half)
        .map(|(a, b)| (a.loss, b.loss))
        .collect();
    let worst_gap = matched.iter().map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
    let min_loss = arms
        .constant
        .curve
        .iter()
        .chain(&arms.decay.curve)
        .map(|c| c.loss)
        .fold(f64::INFINITY, f64::min);
    let mut r = TheoryReport::new("bigram_wsd_curve");
    r.row("final loss, decay arm vs constant arm", arms.decay.final_loss(), arms.constant.final_loss(), Check::Below)
        .row("max decay - constant loss, second half of decay", worst_gap, 0.0, Check::Below)
        .row("min loss over both curves", min_loss, floor, Check::AtLeast)
        .row("spearman(delta, entropy)", arms.deltas.spearman.unwrap_or(f64::NAN), 0.2, Check::Above)
        .row("mean delta, stochastic", arms.deltas.mean_delta(&arms.spec, CityClass::Stochastic), 0.0, Check::Info)
        .row("mean delta, deterministic", arms.deltas.mean_delta(&arms.spec, CityClass::Deterministic), 0.0, Check::Info);
    r.note(format!("{} matched eval points from step {half}", matched.len()));
    Ok(r)
}

pub fn interpolation_probe() -> Result<TheoryReport> {
    let p = bigram_probes(&preset("probe")?)?;
    let mut r = TheoryReport::new("interpolation_probe");
    r.flag(
        format!("stable {} -> {} is a valley ({})", p.stable_steps.0, p.stable_steps.1, p.stable.class.name()),
        p.stable.class == ProbeClass::Valley,
    )
    .flag(
        format!("decay {} -> {} is monotone decreasing ({})", p.decay_steps.0, p.decay_steps.1, p.decay.class.name()),
        p.decay.class == ProbeClass::MonotoneDecreasing,
    );
    Ok(r)
}

pub fn schedule_exactness() -> Result<TheoryReport> {
    let cfg = preset("table2")?;
    let spec = cfg.schedule.to_spec()?;
    let table = spec.build_table()?;
    let mut worst = 0.0f64;
    let mut endpoints_exact = true;
    for w in &spec.endpoints {
        let inv: Vec<f64> = table.lrs[w.start..=w.end].iter().map(|x| 1.0 / x).collect();
        let scale = inv.iter().copied().fold(0.0, f64::max);
        for t in inv.windows(3) {
            worst = worst.max((t[0] - 2.0 * t[1] + t[2]).abs() / scale);
        }
        endpoints_exact &= table.lrs[w.start] == spec.eta_max
            && table.lrs[w.end] == spec.eta_min
            && table.lrs.get(w.end + 1).is_none_or(|x| *x == spec.eta_max);
    }
    let starts: Vec<usize> = decay_windows(&[12_500, 25_000, 53_750], DEFAULT_DECAY_FRACTION)?
        .iter()
        .map(|w| w.start)
        .collect();
    let mut r = TheoryReport::new("schedule_exactness");
    r.row("max rel second difference of 1/lr", worst, 1e-12, Check::AtMost)
        .flag("decay and resume endpoints exact", endpoints_exact)
        .flag(format!("decay starts {starts:?} = [11250, 22500, 48750]"), starts == [11_250, 22_500, 48_750]);
    Ok(r)
}

pub fn flow_integration() -> Result<TheoryReport> {
    let q = QuadraticValley::new(1.0)?;
    let gf = run_gf(&q, &[0.0, 1.0], 1.0, 0.01, &RunOpts::default())?;
    let end = gf.last();
    let err = (end.w[0] - 1.0).abs().max((end.w[1] - (-1.0f64).exp()).abs());
    let mut r = TheoryReport::new("flow_integration");
    r.row("RK4 gradient flow error at t = 1", err, 1e-6, Check::AtMost);
    for gamma in [1.0, 4.0] {
        let l = QuadraticValley::new(gamma)?;
        let p = project_to_river(&l, &[2.0, 1.0], &ProjectOpts::default())?;
        let (ts, logs): (Vec<f64>, Vec<f64>) = p
            .history
            .iter()
            .filter(|(_, res)| *res > 1e-8)
            .map(|(t, res)| (*t, res.ln()))
            .unzip();
        let fit = linear_fit(&ts, &logs)?;
        r.row(format!("projection residual decay rate, γ = {gamma}"), -fit.slope, l.hessian(&[0.0, 0.0])[(1, 1)], Check::Rel(0.02));
    }
    Ok(r)
}
