//! Gradient flow, gradient descent and SGD with Gaussian noise restricted to
//! the hill directions.
//!
//! Every discrete run records `steps + 1` rows. Row `k` holds the iterate
//! `w_k`, its loss, the learning rate `η_k` used to leave it (absent on the
//! final row) and the Ση clock `t_k = η_0 + … + η_{k−1}`.
//!
//! Ensembles derive trial `j`'s generator from `(seed, stream j)`. Two
//! ensembles sharing a seed therefore use common random numbers, which is
//! what schedule comparisons want.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::landscapes::{flat_direction, Landscape, Region};
use crate::numerics::matrix::{axpy, dot, norm};
use crate::numerics::{integrate_rk4, Moments, RngState};
use crate::schedules::ScheduleTable;
use crate::{fmt_f64, fmt_point};

/// Loss magnitude treated as divergence.
pub const DEFAULT_LOSS_CAP: f64 = 1e12;

/// Trials per deterministic reduction block in ensembles.
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Isotropic,
    /// Covariance `σ²(I − vvᵀ)` with a fixed unit `v`.
    FixedComplement,
    /// Covariance `σ²(I − v_d v_dᵀ)` with the local flattest direction.
    LocalComplement,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Isotropic => "isotropic",
            NoiseMode::FixedComplement => "fixed_complement",
            NoiseMode::LocalComplement => "local_complement",
        }
    }

    /// Whether the mode matches the fixed-river-direction noise model.
    pub fn within_theory(self) -> bool {
        self == NoiseMode::FixedComplement
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isotropic" => Ok(NoiseMode::Isotropic),
            "fixed_complement" => Ok(NoiseMode::FixedComplement),
            "local_complement" => Ok(NoiseMode::LocalComplement),
            other => Err(Error::Config(format!("unknown noise mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub sigma: f64,
    pub noise_mode: NoiseMode,
    pub v_fixed: Option<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    /// Per-coordinate standard deviation of a Gaussian perturbation of `w0`;
    /// empty means every trial starts at `w0`.
    pub init_std: Vec<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            noise_mode: NoiseMode::Isotropic,
            v_fixed: None,
            trials: 1,
            seed: 0,
            init_std: Vec::new(),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma = {}", self.sigma)));
        }
        if let Some(v) = &self.v_fixed {
            if v.len() != dim {
                return Err(Error::LengthMismatch { left: v.len(), right: dim });
            }
            if (norm(v) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("v_fixed must be unit-norm".into()));
            }
        }
        if !self.init_std.is_empty() && self.init_std.len() != dim {
            return Err(Error::LengthMismatch {
                left: self.init_std.len(),
                right: dim,
            });
        }
        Ok(())
    }

    fn resolve_fixed<L: Landscape + ?Sized>(&self, l: &L) -> Result<Option<Vec<f64>>> {
        match self.noise_mode {
            NoiseMode::FixedComplement => match self.v_fixed.clone().or_else(|| l.fixed_river_direction()) {
                Some(v) => Ok(Some(v)),
                None => Err(Error::Precondition(format!(
                    "fixed_complement noise needs a straight river; `{}` has none",
                    l.label()
                ))),
            },
            _ => Ok(None),
        }
    }
}

/// Options shared by all runners.
#[derive(Debug, Clone)]
pub struct RunOpts {
    /// Trajectories leaving it are aborted; `None` uses the landscape default.
    pub region: Option<Region>,
    pub loss_cap: f64,
}

impl Default for RunOpts {
    fn default() -> Self {
        Self {
            region: None,
            loss_cap: DEFAULT_LOSS_CAP,
        }
    }
}

impl RunOpts {
    fn region_for<L: Landscape + ?Sized>(&self, l: &L) -> Region {
        self.region.clone().unwrap_or_else(|| l.default_region())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    RegionExit,
    Divergence,
}

/// Marks a run that stopped before its requested length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abort {
    /// First step whose iterate was rejected.
    pub step: usize,
    pub reason: AbortReason,
    pub loss: f64,
}

impl Abort {
    pub fn to_error(self) -> Error {
        match self.reason {
            AbortReason::RegionExit => Error::RegionExit { step: self.step },
            AbortReason::Divergence => Error::Divergence {
                step: self.step,
                loss: self.loss,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub k: usize,
    pub t: f64,
    /// `None` on the final row, which is not followed by an update.
    pub lr: Option<f64>,
    pub w: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub schedule: String,
    pub seed: Option<u64>,
    pub steps: Vec<Step>,
    pub aborted: Option<Abort>,
}

/// River diagnostics attached to a trajectory row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiverColumns {
    pub river_loss: f64,
    pub hill_loss: f64,
    pub dist: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> &Step {
        self.steps.last().expect("trajectories contain w0")
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.w.as_slice())
    }

    /// `Err` when the run was aborted.
    pub fn completed(&self) -> Result<()> {
        match self.aborted {
            Some(a) => Err(a.to_error()),
            None => Ok(()),
        }
    }

    pub fn to_csv(&self, river: Option<&[RiverColumns]>) -> String {
        let d = self.steps.first().map_or(0, |s| s.w.len());
        let mut s = String::from("step,t,lr,loss,river_loss,hill_loss,dist_to_river");
        for i in 0..d {
            let _ = write!(s, ",w{i}");
        }
        s.push('\n');
        for (i, st) in self.steps.iter().enumerate() {
            let cols = river.and_then(|r| r.get(i)).map_or_else(
                || ",,".to_string(),
                |c| format!("{},{},{}", fmt_f64(c.river_loss), fmt_f64(c.hill_loss), fmt_f64(c.dist)),
            );
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                st.k,
                fmt_f64(st.t),
                st.lr.map(fmt_f64).unwrap_or_default(),
                fmt_f64(st.loss),
                cols,
                fmt_point(&st.w)
            );
        }
        if let Some(a) = self.aborted {
            let _ = writeln!(s, "# truncated at step {}: {:?}", a.step, a.reason);
        }
        s
    }
}

fn check_w0<L: Landscape + ?Sized>(l: &L, w0: &[f64]) -> Result<()> {
    if w0.len() != l.dim() {
        return Err(Error::LengthMismatch {
            left: w0.len(),
            right: l.dim(),
        });
    }
    Ok(())
}

/// RK4 integration of `dw/dt = −∇L(w)` recorded every `h`.
pub fn run_gf<L: Landscape + ?Sized>(l: &L, w0: &[f64], t_end: f64, h: f64, opts: &RunOpts) -> Result<Trajectory> {
    check_w0(l, w0)?;
    let region = opts.region_for(l);
    if !region.contains(w0) {
        return Err(Error::RegionExit { step: 0 });
    }
    let path = integrate_rk4(|x| l.gradient(x).into_iter().map(|g| -g).collect(), w0, t_end, h)?;
    let mut traj = Trajectory {
        label: l.label().to_string(),
        schedule: format!("gradient_flow h={h}"),
        seed: None,
        steps: Vec::with_capacity(path.len()),
        aborted: None,
    };
    for (k, (t, w)) in path.into_iter().enumerate() {
        let loss = l.value(&w);
        if let Some(reason) = rejection(&region, &w, loss, opts.loss_cap) {
            traj.aborted = Some(Abort { step: k, reason, loss });
            break;
        }
        traj.steps.push(Step { k, t, lr: Some(h), w, loss });
    }
    if let Some(last) = traj.steps.last_mut() {
        last.lr = None;
    }
    Ok(traj)
}

fn rejection(region: &Region, w: &[f64], loss: f64, cap: f64) -> Option<AbortReason> {
    if !loss.is_finite() || loss.abs() > cap {
        Some(AbortReason::Divergence)
    } else if !region.contains(w) {
        Some(AbortReason::RegionExit)
    } else {
        None
    }
}

/// `w_{k+1} = w_k − η_k ∇L(w_k)` for every entry of the schedule table.
pub fn run_gd<L: Landscape + ?Sized>(l: &L, w0: &[f64], schedule: &ScheduleTable, opts: &RunOpts) -> Result<Trajectory> {
    run_sgd(l, w0, schedule, &SgdConfig::default(), &mut RngState::new(0, 0), opts).map(|mut t| {
        t.seed = None;
        t
    })
}

struct Noise {
    sigma: f64,
    mode: NoiseMode,
    fixed: Option<Vec<f64>>,
}

impl Noise {
    fn new<L: Landscape + ?Sized>(l: &L, cfg: &SgdConfig) -> Result<Self> {
        cfg.validate(l.dim())?;
        Ok(Self {
            sigma: cfg.sigma,
            mode: cfg.noise_mode,
            fixed: cfg.resolve_fixed(l)?,
        })
    }

    /// Adds `η ξ` to `w` in place.
    fn apply<L: Landscape + ?Sized>(&self, l: &L, w: &mut [f64], lr: f64, rng: &mut RngState) -> Result<()> {
        if self.sigma == 0.0 {
            return Ok(());
        }
        let mut z = vec![0.0; w.len()];
        rng.fill_normal(&mut z);
        let local;
        let v = match self.mode {
            NoiseMode::Isotropic => None,
            NoiseMode::FixedComplement => self.fixed.as_deref(),
            NoiseMode::LocalComplement => {
                local = flat_direction(l, w)?.v;
                Some(local.as_slice())
            }
        };
        if let Some(v) = v {
            let c = dot(&z, v);
            z.iter_mut().zip(v).for_each(|(zi, vi)| *zi -= c * vi);
        }
        let s = lr * self.sigma;
        w.iter_mut().zip(&z).for_each(|(wi, zi)| *wi += s * zi);
        Ok(())
    }
}

/// SGD with `w_{k+1} = w_k − η_k ∇L(w_k) + η_k ξ_k`.
///
/// With `sigma = 0` no random numbers are drawn and the run coincides with
/// [`run_gd`] bit for bit.
pub fn run_sgd<L: Landscape + ?Sized>(
    l: &L,
    w0: &[f64],
    schedule: &ScheduleTable,
    cfg: &SgdConfig,
    rng: &mut RngState,
    opts: &RunOpts,
) -> Result<Trajectory> {
    check_w0(l, w0)?;
    let noise = Noise::new(l, cfg)?;
    let region = opts.region_for(l);
    let clock = schedule.clock();
    let mut w = w0.to_vec();
    init_perturb(&mut w, cfg, rng);
    let mut traj = Trajectory {
        label: l.label().to_string(),
        schedule: format!("table of {} steps", schedule.len()),
        seed: Some(cfg.seed),
        steps: Vec::with_capacity(schedule.len() + 1),
        aborted: None,
    };
    for k in 0..=schedule.len() {
        let loss = l.value(&w);
        if let Some(reason) = rejection(&region, &w, loss, opts.loss_cap) {
            traj.aborted = Some(Abort { step: k, reason, loss });
            break;
        }
        let lr = schedule.lrs.get(k).copied();
        let next = if let Some(lr) = lr {
            let mut n = axpy(&w, -lr, &l.gradient(&w));
            noise.apply(l, &mut n, lr, rng)?;
            Some(n)
        } else {
            None
        };
        traj.steps.push(Step {
            k,
            t: clock[k],
            lr,
            w,
            loss,
        });
        match next {
            Some(n) => w = n,
            None => break,
        }
    }
    Ok(traj)
}

fn init_perturb(w: &mut [f64], cfg: &SgdConfig, rng: &mut RngState) {
    for (wi, s) in w.iter_mut().zip(&cfg.init_std) {
        if *s > 0.0 {
            *wi += s * rng.normal();
        }
    }
}

/// Per-step ensemble statistics; variances are unbiased.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub trials: usize,
    /// One entry per update, so one shorter than the per-step vectors.
    pub lrs: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub var_loss: Vec<f64>,
    /// Present when the landscape has a closed-form river projection.
    pub mean_hill: Option<Vec<f64>>,
    pub mean_w: Vec<Vec<f64>>,
    pub var_w: Vec<Vec<f64>>,
}

impl EnsembleStats {
    pub fn len(&self) -> usize {
        self.mean_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_loss.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,lr,mean_loss,var_loss,mean_hill_loss\n");
        for k in 0..self.len() {
            let hill = self.mean_hill.as_ref().map_or(String::new(), |h| fmt_f64(h[k]));
            let _ = writeln!(
                s,
                "{k},{},{},{},{hill}",
                self.lrs.get(k).map(|&x| fmt_f64(x)).unwrap_or_default(),
                fmt_f64(self.mean_loss[k]),
                fmt_f64(self.var_loss[k])
            );
        }
        s
    }
}

#[derive(Clone)]
struct BlockMoments {
    loss: Vec<Moments>,
    hill: Vec<Moments>,
    w: Vec<Vec<Moments>>,
}

impl BlockMoments {
    fn new(steps: usize, dim: usize) -> Self {
        Self {
            loss: vec![Moments::default(); steps],
            hill: vec![Moments::default(); steps],
            w: vec![vec![Moments::default(); dim]; steps],
        }
    }

    fn merge(&mut self, other: &BlockMoments) {
        for (a, b) in self.loss.iter_mut().zip(&other.loss) {
            *a = a.merge(b);
        }
        for (a, b) in self.hill.iter_mut().zip(&other.hill) {
            *a = a.merge(b);
        }
        for (ra, rb) in self.w.iter_mut().zip(&other.w) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a = a.merge(b);
            }
        }
    }
}

/// Runs `cfg.trials` independent SGD trials in parallel.
///
/// Statistics are accumulated in fixed blocks of trials and merged in block
/// order, so the result does not depend on the thread count. Any aborted
/// trial is an error.
pub fn run_sgd_ensemble<L: Landscape + ?Sized>(
    l: &L,
    w0: &[f64],
    schedule: &ScheduleTable,
    cfg: &SgdConfig,
    opts: &RunOpts,
) -> Result<EnsembleStats> {
    check_w0(l, w0)?;
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument(format!("ensembles need >= 2 trials, got {}", cfg.trials)));
    }
    let noise = Noise::new(l, cfg)?;
    let region = opts.region_for(l);
    let rows = schedule.len() + 1;
    let dim = l.dim();
    let has_hill = l.river_projection(w0).is_some();
    let blocks: Vec<(usize, usize)> = (0..cfg.trials)
        .step_by(BLOCK)
        .map(|s| (s, (s + BLOCK).min(cfg.trials)))
        .collect();

    let run_block = |&(start, end): &(usize, usize)| -> Result<BlockMoments> {
        let mut acc = BlockMoments::new(rows, dim);
        for j in start..end {
            let mut rng = RngState::new(cfg.seed, j as u64);
            let mut w = w0.to_vec();
            init_perturb(&mut w, cfg, &mut rng);
            for k in 0..rows {
                let loss = l.value(&w);
                if let Some(reason) = rejection(&region, &w, loss, opts.loss_cap) {
                    return Err(Abort { step: k, reason, loss }.to_error());
                }
                acc.loss[k].push(loss);
                if has_hill {
                    let phi = l.river_projection(&w).expect("closed-form projection");
                    acc.hill[k].push(loss - l.value(&phi));
                }
                for (m, x) in acc.w[k].iter_mut().zip(&w) {
                    m.push(*x);
                }
                if k + 1 < rows {
                    let lr = schedule.lrs[k];
                    let mut n = axpy(&w, -lr, &l.gradient(&w));
                    noise.apply(l, &mut n, lr, &mut rng)?;
                    w = n;
                }
            }
        }
        Ok(acc)
    };
    let partials: Vec<Result<BlockMoments>> = blocks.par_iter().map(run_block).collect();
    let mut total: Option<BlockMoments> = None;
    for p in partials {
        let p = p?;
        match total.as_mut() {
            None => total = Some(p),
            Some(t) => t.merge(&p),
        }
    }
    let total = total.expect("at least one block");
    let lrs = schedule.lrs.clone();
    Ok(EnsembleStats {
        trials: cfg.trials,
        lrs,
        mean_loss: total.loss.iter().map(|m| m.mean).collect(),
        var_loss: total.loss.iter().map(Moments::variance).collect(),
        mean_hill: has_hill.then(|| total.hill.iter().map(|m| m.mean).collect()),
        mean_w: total.w.iter().map(|r| r.iter().map(|m| m.mean).collect()).collect(),
        var_w: total.w.iter().map(|r| r.iter().map(Moments::variance).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{QuadraticValley, SineRiver, StraightValley};
    use crate::river::river_residual;
    use crate::schedules::ScheduleSpec;

    fn constant(eta: f64, steps: usize) -> ScheduleTable {
        ScheduleSpec::constant(eta, steps).build_table().unwrap()
    }

    fn quad() -> QuadraticValley {
        QuadraticValley::new(1.0).unwrap()
    }

    #[test]
    fn gf_matches_closed_form() {
        let t = run_gf(&quad(), &[0.0, 1.0], 1.0, 1e-3, &RunOpts::default()).unwrap();
        let w = &t.last().w;
        assert!((w[0] - 1.0).abs() < 1e-6);
        assert!((w[1] - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(t.last().lr, None);
    }

    #[test]
    fn gf_edge_cases() {
        let t = run_gf(&quad(), &[0.0, 1.0], 0.0, 0.1, &RunOpts::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.steps[0].w, vec![0.0, 1.0]);
        let on = run_gf(&SineRiver, &[10.0, 10.0f64.sin()], 1.0, 0.01, &RunOpts {
            region: Some(Region::Unbounded),
            ..RunOpts::default()
        })
        .unwrap();
        assert!(on.points().all(|w| river_residual(&SineRiver, w).unwrap() <= 1e-8));
        let on = run_gf(&quad(), &[0.0, 0.0], 2.0, 0.01, &RunOpts::default()).unwrap();
        assert!(on.points().all(|w| river_residual(&quad(), w).unwrap() <= 1e-8));
    }

    #[test]
    fn gd_closed_form() {
        let t = run_gd(&quad(), &[0.0, 1.0], &constant(0.1, 10), &RunOpts::default()).unwrap();
        assert_eq!(t.len(), 11);
        let w = &t.last().w;
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!((w[1] - 0.9f64.powi(10)).abs() < 1e-12);
        assert!((t.last().t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gd_with_zero_lr_is_constant() {
        let t = run_gd(&SineRiver, &[0.0, 0.5], &constant(0.0, 20), &RunOpts::default()).unwrap();
        assert!(t.points().all(|w| w == [0.0, 0.5]));
    }

    #[test]
    fn clock_is_prefix_sum_of_schedule() {
        let table = ScheduleSpec::cosine(0.3, 0.01, 50).build_table().unwrap();
        let t = run_gd(&quad(), &[0.0, 1.0], &table, &RunOpts::default()).unwrap();
        let clock = table.clock();
        assert!(t.steps.iter().all(|s| s.t == clock[s.k]));
    }

    #[test]
    fn zero_sigma_sgd_is_gd() {
        let table = constant(0.3, 100);
        let gd = run_gd(&SineRiver, &[0.0, 0.5], &table, &RunOpts::default()).unwrap();
        let cfg = SgdConfig { sigma: 0.0, noise_mode: NoiseMode::LocalComplement, ..SgdConfig::default() };
        let sgd = run_sgd(&SineRiver, &[0.0, 0.5], &table, &cfg, &mut RngState::new(4, 0), &RunOpts::default()).unwrap();
        assert_eq!(gd.steps, sgd.steps);
    }

    #[test]
    fn fixed_complement_spares_the_river() {
        let v = StraightValley::new(vec![1.0], 1.0).unwrap();
        let cfg = SgdConfig {
            sigma: 1.0,
            noise_mode: NoiseMode::FixedComplement,
            v_fixed: Some(vec![0.0, 1.0]),
            ..SgdConfig::default()
        };
        let t = run_sgd(&v, &[0.0, 0.0], &constant(0.1, 50), &cfg, &mut RngState::new(1, 0), &RunOpts::default())
            .unwrap();
        for s in &t.steps {
            assert!((s.w[1] - s.t).abs() < 1e-12);
        }
        assert!(t.steps.iter().any(|s| s.w[0] != 0.0));
    }

    #[test]
    fn fixed_complement_needs_straight_river() {
        let cfg = SgdConfig { sigma: 1.0, noise_mode: NoiseMode::FixedComplement, ..SgdConfig::default() };
        let r = run_sgd(&SineRiver, &[0.0, 0.5], &constant(0.1, 5), &cfg, &mut RngState::new(1, 0), &RunOpts::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn region_exit_marks_the_trajectory() {
        let t = run_gd(&SineRiver, &[9.0, 9.0f64.sin()], &constant(0.6, 200), &RunOpts::default()).unwrap();
        let a = t.aborted.unwrap();
        assert_eq!(a.reason, AbortReason::RegionExit);
        assert_eq!(t.len(), a.step);
        assert!(t.to_csv(None).lines().last().unwrap().starts_with("# truncated"));
        assert!(matches!(t.completed(), Err(Error::RegionExit { .. })));
    }

    #[test]
    fn divergence_is_detected() {
        let q = QuadraticValley::new(1.0).unwrap();
        let t = run_gd(&q, &[0.0, 1.0], &constant(3.0, 200), &RunOpts { loss_cap: 1e6, ..RunOpts::default() }).unwrap();
        assert_eq!(t.aborted.unwrap().reason, AbortReason::Divergence);
    }

    #[test]
    fn ensemble_without_noise_has_no_variance() {
        let cfg = SgdConfig { trials: 10, ..SgdConfig::default() };
        let e = run_sgd_ensemble(&quad(), &[0.0, 1.0], &constant(0.1, 30), &cfg, &RunOpts::default()).unwrap();
        assert!(e.var_loss.iter().all(|v| *v == 0.0));
        assert_eq!(e.len(), 31);
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let cfg = SgdConfig { sigma: 1.0, trials: 700, seed: 11, ..SgdConfig::default() };
        let table = constant(0.1, 40);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_sgd_ensemble(&quad(), &[0.0, 0.0], &table, &cfg, &RunOpts::default()).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a, run(4));
    }

    #[test]
    fn ensemble_trial_matches_single_run() {
        let cfg = SgdConfig { sigma: 0.5, trials: 2, seed: 3, ..SgdConfig::default() };
        let table = constant(0.1, 20);
        let e = run_sgd_ensemble(&quad(), &[0.0, 0.0], &table, &cfg, &RunOpts::default()).unwrap();
        let a = run_sgd(&quad(), &[0.0, 0.0], &table, &cfg, &mut RngState::new(3, 0), &RunOpts::default()).unwrap();
        let b = run_sgd(&quad(), &[0.0, 0.0], &table, &cfg, &mut RngState::new(3, 1), &RunOpts::default()).unwrap();
        for k in 0..=20 {
            let m = (a.steps[k].loss + b.steps[k].loss) / 2.0;
            assert!((e.mean_loss[k] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_headers() {
        let t = run_gd(&quad(), &[0.0, 1.0], &constant(0.1, 3), &RunOpts::default()).unwrap();
        let csv = t.to_csv(None);
        assert!(csv.starts_with("step,t,lr,loss,river_loss,hill_loss,dist_to_river,w0,w1\n"));
        assert_eq!(csv.lines().count(), 5);
        let cfg = SgdConfig { trials: 2, ..SgdConfig::default() };
        let e = run_sgd_ensemble(&quad(), &[0.0, 1.0], &constant(0.1, 3), &cfg, &RunOpts::default()).unwrap();
        assert!(e.to_csv().starts_with("step,lr,mean_loss,var_loss,mean_hill_loss\n"));
    }

    #[test]
    fn noise_mode_names_round_trip() {
        for m in [NoiseMode::Isotropic, NoiseMode::FixedComplement, NoiseMode::LocalComplement] {
            assert_eq!(m.name().parse::<NoiseMode>().unwrap(), m);
        }
        assert!("brownian".parse::<NoiseMode>().is_err());
    }
}
