//! Learning-rate schedules.
//!
//! All schedules are evaluated on a 0-based step clock. Decay windows are the
//! half-open intervals `(D_i, T_i]`; inside a window the reciprocal learning
//! rate is interpolated linearly from `1/eta_max` to `1/eta_min`.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::fmt_f64;

/// Default fraction of each budget spent decaying.
pub const DEFAULT_DECAY_FRACTION: f64 = 0.1;
/// Default ratio `eta_min / eta_max`.
pub const DEFAULT_MIN_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Constant,
    Cosine,
    CyclicCosine,
    Wsd,
    Wsds,
    TheoryDecay,
    OptimalQuadratic,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Cosine => "cosine",
            Self::CyclicCosine => "cyclic_cosine",
            Self::Wsd => "wsd",
            Self::Wsds => "wsds",
            Self::TheoryDecay => "theory_decay",
            Self::OptimalQuadratic => "optimal_quadratic",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "constant" => Self::Constant,
            "cosine" => Self::Cosine,
            "cyclic_cosine" => Self::CyclicCosine,
            "wsd" => Self::Wsd,
            "wsds" | "wsd-s" => Self::Wsds,
            "theory_decay" => Self::TheoryDecay,
            "optimal_quadratic" => Self::OptimalQuadratic,
            other => return Err(Error::InvalidSchedule(format!("unknown kind `{other}`"))),
        })
    }
}

/// A decay window `(start, end]`: the schedule leaves `eta_max` after step
/// `start` and reaches `eta_min` at step `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecayWindow {
    pub start: usize,
    pub end: usize,
}

impl DecayWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, step: usize) -> bool {
        step > self.start && step <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub eta_max: f64,
    pub eta_min: f64,
    pub warmup_steps: usize,
    pub endpoints: Vec<DecayWindow>,
    pub total_steps: usize,
    /// Curvature used by `TheoryDecay` and `OptimalQuadratic`.
    pub gamma: f64,
    /// First decaying step for `TheoryDecay` and `OptimalQuadratic`.
    pub k_s: usize,
}

impl ScheduleSpec {
    pub fn constant(eta: f64, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            eta_max: eta,
            eta_min: eta * DEFAULT_MIN_RATIO,
            warmup_steps: 0,
            endpoints: Vec::new(),
            total_steps,
            gamma: 0.0,
            k_s: 0,
        }
    }

    pub fn cosine(eta_max: f64, eta_min: f64, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::Cosine,
            eta_min,
            ..Self::constant(eta_max, total_steps)
        }
    }

    pub fn cyclic_cosine(eta_max: f64, eta_min: f64, budgets: &[usize], total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::CyclicCosine,
            eta_min,
            endpoints: budgets.iter().map(|&t| DecayWindow { start: t, end: t }).collect(),
            ..Self::constant(eta_max, total_steps)
        }
    }

    pub fn wsds(eta_max: f64, eta_min: f64, windows: Vec<DecayWindow>, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::Wsds,
            eta_min,
            endpoints: windows,
            ..Self::constant(eta_max, total_steps)
        }
    }

    pub fn wsd(eta_max: f64, eta_min: f64, windows: Vec<DecayWindow>, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::Wsd,
            ..Self::wsds(eta_max, eta_min, windows, total_steps)
        }
    }

    pub fn theory_decay(eta: f64, gamma: f64, k_s: usize, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::TheoryDecay,
            gamma,
            k_s,
            ..Self::constant(eta, total_steps)
        }
    }

    pub fn optimal_quadratic(eta_max: f64, gamma: f64, k_s: usize, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::OptimalQuadratic,
            gamma,
            k_s,
            ..Self::constant(eta_max, total_steps)
        }
    }

    pub fn with_warmup(mut self, warmup_steps: usize) -> Self {
        self.warmup_steps = warmup_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if !(self.eta_max >= 0.0) || !self.eta_max.is_finite() {
            return bad(format!("eta_max = {}", self.eta_max));
        }
        if !(self.eta_min <= self.eta_max) || !self.eta_min.is_finite() || self.eta_min < 0.0 {
            return bad(format!(
                "need 0 <= eta_min <= eta_max, got {} / {}",
                self.eta_min, self.eta_max
            ));
        }
        if self.total_steps == 0 {
            return bad("total_steps = 0".into());
        }
        match self.kind {
            ScheduleKind::Wsd | ScheduleKind::Wsds => {
                if !(self.eta_min > 0.0) {
                    return bad("harmonic decay needs eta_min > 0".into());
                }
                let mut prev_end: Option<usize> = None;
                for w in &self.endpoints {
                    if w.start >= w.end {
                        return bad(format!("window ({}, {}] is empty", w.start, w.end));
                    }
                    if let Some(p) = prev_end {
                        if w.start <= p {
                            return bad(format!(
                                "decay start {} does not follow previous budget {p}",
                                w.start
                            ));
                        }
                    }
                    prev_end = Some(w.end);
                }
                if let Some(first) = self.endpoints.first() {
                    if self.warmup_steps >= first.start {
                        return bad("warmup must end before the first decay".into());
                    }
                }
                if let Some(last) = self.endpoints.last() {
                    if last.end >= self.total_steps {
                        return bad(format!(
                            "budget {} not inside {} total steps",
                            last.end, self.total_steps
                        ));
                    }
                }
            }
            ScheduleKind::CyclicCosine => {
                if self.endpoints.is_empty() {
                    return bad("cyclic cosine needs at least one budget".into());
                }
                let mut prev = 0usize;
                for (i, w) in self.endpoints.iter().enumerate() {
                    let ok = if i == 0 { w.end >= 1 } else { w.end > prev + 1 };
                    if !ok {
                        return bad(format!("budget {} too close to {prev}", w.end));
                    }
                    prev = w.end;
                }
            }
            ScheduleKind::TheoryDecay | ScheduleKind::OptimalQuadratic => {
                if !(self.gamma >= 0.0) {
                    return bad(format!("gamma = {}", self.gamma));
                }
                if self.kind == ScheduleKind::OptimalQuadratic && (!(self.gamma > 0.0) || self.eta_max * self.gamma >= 2.0) {
                    return bad("optimal quadratic schedule needs 0 < eta_max < 2/gamma".into());
                }
            }
            ScheduleKind::Constant | ScheduleKind::Cosine => {}
        }
        Ok(())
    }

    /// Learning rate at `step`.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "step {step} outside 0..{}",
                self.total_steps
            )));
        }
        Ok(self.eval(step))
    }

    fn warmup_factor(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            step as f64 / self.warmup_steps as f64
        } else {
            1.0
        }
    }

    fn eval(&self, step: usize) -> f64 {
        let ramp = self.warmup_factor(step);
        match self.kind {
            ScheduleKind::Constant => ramp * self.eta_max,
            ScheduleKind::Cosine => {
                if step < self.warmup_steps {
                    return ramp * self.eta_max;
                }
                let span = (self.total_steps - self.warmup_steps) as f64;
                let progress = (step - self.warmup_steps) as f64 / span;
                cosine_between(self.eta_max, self.eta_min, progress)
            }
            ScheduleKind::CyclicCosine => {
                if step < self.warmup_steps {
                    return ramp * self.eta_max;
                }
                let mut seg_start = 0usize;
                for (i, w) in self.endpoints.iter().enumerate() {
                    if step <= w.end {
                        let progress = if i == 0 {
                            step as f64 / w.end as f64
                        } else {
                            (step - seg_start - 1) as f64 / (w.end - seg_start - 1) as f64
                        };
                        return cosine_between(self.eta_max, self.eta_min, progress);
                    }
                    seg_start = w.end;
                }
                self.eta_min
            }
            ScheduleKind::Wsd | ScheduleKind::Wsds => {
                for w in &self.endpoints {
                    if w.contains(step) {
                        return harmonic_value(w.len(), self.eta_max, self.eta_min, step - w.start);
                    }
                }
                ramp * self.eta_max
            }
            ScheduleKind::TheoryDecay => {
                if step < self.k_s {
                    ramp * self.eta_max
                } else {
                    theory_decay(self.eta_max, self.gamma, (step - self.k_s) as f64)
                }
            }
            ScheduleKind::OptimalQuadratic => {
                if step < self.k_s {
                    ramp * self.eta_max
                } else {
                    1.0 / (self.gamma * (step - self.k_s) as f64 + 2.0 / self.eta_max)
                }
            }
        }
    }

    pub fn build_table(&self) -> Result<ScheduleTable> {
        self.validate()?;
        Ok(ScheduleTable {
            lrs: (0..self.total_steps).map(|k| self.eval(k)).collect(),
        })
    }

    /// WSD branch layout: the main branch keeps the stable rate; branch `i`
    /// forks from main at `D_i` and decays until `T_i`.
    pub fn wsd_branches(&self) -> Vec<WsdBranch> {
        self.endpoints
            .iter()
            .map(|w| WsdBranch {
                fork_step: w.start,
                lrs: (1..=w.len())
                    .map(|t| harmonic_value(w.len(), self.eta_max, self.eta_min, t))
                    .collect(),
            })
            .collect()
    }
}

/// One WSD decay branch. `lrs[0]` is applied at step `fork_step + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WsdBranch {
    pub fork_step: usize,
    pub lrs: Vec<f64>,
}

fn cosine_between(hi: f64, lo: f64, progress: f64) -> f64 {
    lo + (hi - lo) * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
}

fn harmonic_value(span: usize, eta_max: f64, eta_min: f64, t: usize) -> f64 {
    if t == 0 {
        return eta_max;
    }
    if t == span {
        return eta_min;
    }
    let frac = t as f64 / span as f64;
    1.0 / (frac / eta_min + (1.0 - frac) / eta_max)
}

/// Inverse-proportional decay: `1/lr` moves linearly from `1/eta_max` at
/// `t = 0` to `1/eta_min` at `t = span`.
pub fn harmonic_decay(span: usize, eta_max: f64, eta_min: f64, t: usize) -> Result<f64> {
    if span == 0 {
        return Err(Error::InvalidArgument("decay span must be >= 1".into()));
    }
    if t > span {
        return Err(Error::InvalidArgument(format!("t = {t} outside 0..={span}")));
    }
    if !(eta_min > 0.0) || eta_min > eta_max {
        return Err(Error::InvalidArgument(format!(
            "need 0 < eta_min <= eta_max, got {eta_min} / {eta_max}"
        )));
    }
    Ok(harmonic_value(span, eta_max, eta_min, t))
}

/// `eta / (2 + k_offset·eta·gamma)`
pub fn theory_decay(eta: f64, gamma: f64, k_offset: f64) -> f64 {
    eta / (2.0 + k_offset * eta * gamma)
}

/// Greedy-optimal rate on the quadratic `γy²/2` started from the stationary
/// law of `eta_max`: `1 / (γ(k−1) + 2/eta_max)` for `k ≥ 1`.
pub fn optimal_quadratic_lr(gamma: f64, eta_max: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k starts at 1".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma}")));
    }
    if !(eta_max > 0.0) || eta_max * gamma >= 2.0 {
        return Err(Error::InvalidArgument(format!(
            "eta_max = {eta_max} must lie in (0, 2/gamma)"
        )));
    }
    Ok(1.0 / (gamma * (k - 1) as f64 + 2.0 / eta_max))
}

/// Decay windows for a list of budgets `T_i`.
///
/// The first window spans `round(fraction·T_1)` steps. Later windows take
/// `fraction·T_i` rounded down to a whole number of first-window lengths, so
/// every decay start sits on the grid of the first one.
pub fn decay_windows(budgets: &[usize], fraction: f64) -> Result<Vec<DecayWindow>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidSchedule(format!("decay fraction {fraction}")));
    }
    let first = match budgets.first() {
        Some(&t) => t,
        None => return Ok(Vec::new()),
    };
    let quantum = ((fraction * first as f64).round() as usize).max(1);
    let mut out = Vec::with_capacity(budgets.len());
    let mut prev_end = 0usize;
    for (i, &t) in budgets.iter().enumerate() {
        let len = if i == 0 {
            quantum
        } else {
            ((fraction * t as f64 / quantum as f64).floor() as usize * quantum).max(quantum)
        };
        if len >= t || t - len <= prev_end && i > 0 {
            return Err(Error::InvalidSchedule(format!(
                "budget {t} leaves no stable phase before its decay"
            )));
        }
        out.push(DecayWindow {
            start: t - len,
            end: t,
        });
        prev_end = t;
    }
    Ok(out)
}

/// A materialized per-step learning-rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTable {
    pub lrs: Vec<f64>,
}

impl ScheduleTable {
    pub fn len(&self) -> usize {
        self.lrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lrs.is_empty()
    }

    /// Prefix sums `t_k = Σ_{i<k} lr_i`, length `len + 1`.
    pub fn clock(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.lrs.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for lr in &self.lrs {
            t += lr;
            out.push(t);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,lr\n");
        for (k, lr) in self.lrs.iter().enumerate() {
            let _ = writeln!(s, "{k},{}", fmt_f64(*lr));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(self.to_csv().as_bytes())
    }
}
