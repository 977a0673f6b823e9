//! Flat `section.key = value` experiment configs.
//!
//! Every field has a default, so a config only lists what differs. Lines
//! starting with `#` are comments. Lists are comma-separated. Parsing
//! resolves all defaults, and [`ExperimentConfig::to_text`] writes the full
//! resolved form, which parses back to the same config.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optim::NoiseMode;
use crate::schedules::{decay_windows, ScheduleKind, ScheduleSpec, ScheduleTable, DEFAULT_DECAY_FRACTION, DEFAULT_MIN_RATIO};

/// Presets shipped with the crate, as `(name, config text)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig4b", include_str!("../presets/fig4b.cfg")),
    ("fig4c", include_str!("../presets/fig4c.cfg")),
    ("fig5", include_str!("../presets/fig5.cfg")),
    ("bigram", include_str!("../presets/bigram.cfg")),
    ("probe", include_str!("../presets/probe.cfg")),
    ("table2", include_str!("../presets/table2.cfg")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
    ExperimentConfig::from_text(text)
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($var),+ }

        impl $name {
            pub fn name(self) -> &'static str {
                match self { $(Self::$var => $s),+ }
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$var),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }

        impl Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(ExperimentKind {
    Schedule => "schedule",
    Simulate => "simulate",
    River => "river",
    Bigram => "bigram",
    Probe => "probe",
});

named_enum!(LandscapeName {
    QuadraticValley => "quadratic_valley",
    SineRiver => "sine_river",
    StraightValley => "straight_valley",
    Bigram => "bigram",
});

named_enum!(Method {
    Gf => "gf",
    Gd => "gd",
    Sgd => "sgd",
});

named_enum!(
    /// Region used to abort runs: the landscape's own or none.
    RegionChoice {
        Default => "default",
        Unbounded => "unbounded",
    }
);

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeConfig {
    pub name: LandscapeName,
    /// `quadratic_valley` curvature.
    pub gamma: f64,
    /// `straight_valley` sharp curvatures.
    pub gammas: Vec<f64>,
    /// `straight_valley` river slope.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub eta_max: f64,
    pub eta_min: f64,
    pub warmup: usize,
    pub steps: usize,
    /// Budgets `T_i` for WSD / WSD-S and cyclic cosine.
    pub budgets: Vec<usize>,
    pub decay_fraction: f64,
    pub gamma: f64,
    pub k_s: usize,
}

impl ScheduleConfig {
    pub fn to_spec(&self) -> Result<ScheduleSpec> {
        let spec = match self.kind {
            ScheduleKind::Constant => ScheduleSpec::constant(self.eta_max, self.steps),
            ScheduleKind::Cosine => ScheduleSpec::cosine(self.eta_max, self.eta_min, self.steps),
            ScheduleKind::CyclicCosine => ScheduleSpec::cyclic_cosine(self.eta_max, self.eta_min, &self.budgets, self.steps),
            ScheduleKind::Wsd | ScheduleKind::Wsds => {
                let windows = decay_windows(&self.budgets, self.decay_fraction)?;
                let mut s = ScheduleSpec::wsds(self.eta_max, self.eta_min, windows, self.steps);
                s.kind = self.kind;
                s
            }
            ScheduleKind::TheoryDecay => ScheduleSpec::theory_decay(self.eta_max, self.gamma, self.k_s, self.steps),
            ScheduleKind::OptimalQuadratic => {
                ScheduleSpec::optimal_quadratic(self.eta_max, self.gamma, self.k_s, self.steps)
            }
        };
        let spec = ScheduleSpec {
            eta_min: self.eta_min,
            ..spec.with_warmup(self.warmup)
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Per-step table. Zero steps gives an empty table, after checking the
    /// rest of the schedule as if it had one step.
    pub fn build_table(&self) -> Result<ScheduleTable> {
        if self.steps == 0 {
            ScheduleConfig { steps: 1, ..self.clone() }.to_spec()?;
            return Ok(ScheduleTable { lrs: Vec::new() });
        }
        self.to_spec()?.build_table()
    }

    /// The same schedule rescaled to peak rate `eta`.
    pub fn with_eta(&self, eta: f64) -> ScheduleConfig {
        let ratio = if self.eta_max > 0.0 { self.eta_min / self.eta_max } else { DEFAULT_MIN_RATIO };
        ScheduleConfig {
            eta_max: eta,
            eta_min: eta * ratio,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Sweep of peak rates; empty runs the schedule as given.
    pub etas: Vec<f64>,
    pub w0: Vec<f64>,
    /// Gradient-flow horizon and RK4 step.
    pub t_end: f64,
    pub h: f64,
    pub region: RegionChoice,
    pub loss_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdSection {
    pub sigma: f64,
    pub noise: NoiseMode,
    pub trials: usize,
    pub v_fixed: Vec<f64>,
    pub init_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiverConfig {
    /// Trace the river and attach time alignment to simulations.
    pub trace: bool,
    /// Trace seed; empty projects `optimizer.w0` onto the river.
    pub seed_point: Vec<f64>,
    pub steps: usize,
    pub ds: f64,
    /// Transient cutoff for time alignment; `None` uses 10% of the run.
    pub k0: Option<usize>,
    pub radius: f64,
    /// Random points used to estimate regularity constants.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigramConfig {
    pub n_deterministic: usize,
    pub n_stochastic: usize,
    pub m: usize,
    pub batch: usize,
    pub eval_every: usize,
    /// Final share of the run spent decaying in the decay arm.
    pub decay_fraction: f64,
    /// `eta_min / eta_max` of the decay arm.
    pub decay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub points: usize,
    /// Endpoints for probes on toy landscapes.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Steps between the two stable-phase bigram checkpoints.
    pub gap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub landscape: LandscapeConfig,
    pub schedule: ScheduleConfig,
    pub optimizer: OptimizerConfig,
    pub sgd: SgdSection,
    pub river: RiverConfig,
    pub bigram: BigramConfig,
    pub probe: ProbeConfig,
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = FlatMap::parse(text)?;
        let kind: ExperimentKind = kv.take("experiment.kind")?.ok_or_else(|| Error::Config("missing experiment.kind".into()))?;
        let seed = kv.get_or("experiment.seed", 0)?;
        let out = kv.take::<String>("experiment.out")?.map(PathBuf::from);

        let landscape = LandscapeConfig {
            name: kv.get_or("landscape.name", LandscapeName::QuadraticValley)?,
            gamma: kv.get_or("landscape.gamma", 1.0)?,
            gammas: kv.list_or("landscape.gammas", vec![1.0])?,
            slope: kv.get_or("landscape.slope", 1.0)?,
        };

        let sched_kind = kv.get_or("schedule.kind", ScheduleKind::Constant)?;
        let eta_max = kv.get_or("schedule.eta_max", 0.1)?;
        let budgets: Vec<usize> = kv.list_or("schedule.budgets", Vec::new())?;
        let default_steps = match sched_kind {
            ScheduleKind::Wsd | ScheduleKind::Wsds => budgets.last().map_or(100, |t| t + 1),
            ScheduleKind::CyclicCosine => budgets.last().map_or(100, |t| t + 1),
            _ => 100,
        };
        let schedule = ScheduleConfig {
            kind: sched_kind,
            eta_max,
            eta_min: kv.get_or("schedule.eta_min", eta_max * DEFAULT_MIN_RATIO)?,
            warmup: kv.get_or("schedule.warmup", 0)?,
            steps: kv.get_or("schedule.steps", default_steps)?,
            budgets,
            decay_fraction: kv.get_or("schedule.decay_fraction", DEFAULT_DECAY_FRACTION)?,
            gamma: kv.get_or("schedule.gamma", landscape.gamma)?,
            k_s: kv.get_or("schedule.k_s", 0)?,
        };

        let optimizer = OptimizerConfig {
            method: kv.get_or("optimizer.method", Method::Gd)?,
            etas: kv.list_or("optimizer.etas", Vec::new())?,
            w0: kv.list_or("optimizer.w0", Vec::new())?,
            t_end: kv.get_or("optimizer.t_end", 10.0)?,
            h: kv.get_or("optimizer.h", 0.01)?,
            region: kv.get_or("optimizer.region", RegionChoice::Default)?,
            loss_cap: kv.get_or("optimizer.loss_cap", crate::optim::DEFAULT_LOSS_CAP)?,
        };

        let sgd = SgdSection {
            sigma: kv.get_or("sgd.sigma", 0.0)?,
            noise: kv.get_or("sgd.noise", NoiseMode::Isotropic)?,
            trials: kv.get_or("sgd.trials", 1)?,
            v_fixed: kv.list_or("sgd.v_fixed", Vec::new())?,
            init_std: kv.list_or("sgd.init_std", Vec::new())?,
        };

        let river = RiverConfig {
            trace: kv.get_or("river.trace", false)?,
            seed_point: kv.list_or("river.seed_point", Vec::new())?,
            steps: kv.get_or("river.steps", 3000)?,
            ds: kv.get_or("river.ds", 0.01)?,
            k0: kv.take("river.k0")?,
            radius: kv.get_or("river.radius", 1.0)?,
            samples: kv.get_or("river.samples", 200)?,
        };

        let bigram = BigramConfig {
            n_deterministic: kv.get_or("bigram.n_deterministic", 200)?,
            n_stochastic: kv.get_or("bigram.n_stochastic", 200)?,
            m: kv.get_or("bigram.m", 10)?,
            batch: kv.get_or("bigram.batch", 64)?,
            eval_every: kv.get_or("bigram.eval_every", 100)?,
            decay_fraction: kv.get_or("bigram.decay_fraction", 0.2)?,
            decay_ratio: kv.get_or("bigram.decay_ratio", 0.01)?,
        };

        let probe = ProbeConfig {
            points: kv.get_or("probe.points", 21)?,
            a: kv.list_or("probe.a", Vec::new())?,
            b: kv.list_or("probe.b", Vec::new())?,
            gap: kv.get_or("probe.gap", 5000)?,
        };

        kv.finish()?;
        let cfg = ExperimentConfig {
            kind,
            seed,
            out,
            landscape,
            schedule,
            optimizer,
            sgd,
            river,
            bigram,
            probe,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks that do not need a built landscape.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.optimizer.h > 0.0) || !(self.optimizer.t_end >= 0.0) {
            return bad("optimizer.h must be > 0 and optimizer.t_end >= 0".into());
        }
        if self.optimizer.etas.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return bad("optimizer.etas must be finite and >= 0".into());
        }
        if self.sgd.trials == 0 {
            return bad("sgd.trials must be >= 1".into());
        }
        if !(self.river.ds > 0.0) || !(self.river.radius > 0.0) {
            return bad("river.ds and river.radius must be > 0".into());
        }
        if self.bigram.m < 2 || self.bigram.batch == 0 || self.bigram.eval_every == 0 {
            return bad("bigram needs m >= 2, batch >= 1 and eval_every >= 1".into());
        }
        if !(self.bigram.decay_fraction > 0.0 && self.bigram.decay_fraction < 1.0) {
            return bad(format!("bigram.decay_fraction = {}", self.bigram.decay_fraction));
        }
        if !(self.bigram.decay_ratio > 0.0 && self.bigram.decay_ratio <= 1.0) {
            return bad(format!("bigram.decay_ratio = {}", self.bigram.decay_ratio));
        }
        if self.probe.points < 5 {
            return bad("probe.points must be >= 5".into());
        }
        match self.kind {
            ExperimentKind::Schedule => {
                self.schedule.to_spec().map_err(|e| Error::Config(e.to_string()))?;
            }
            ExperimentKind::Simulate => {
                self.schedule.build_table().map_err(|e| Error::Config(e.to_string()))?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Full resolved config in canonical key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("experiment.kind", self.kind.to_string());
        put("experiment.seed", self.seed.to_string());
        if let Some(out) = &self.out {
            put("experiment.out", out.display().to_string());
        }
        let l = &self.landscape;
        put("landscape.name", l.name.to_string());
        put("landscape.gamma", l.gamma.to_string());
        put("landscape.gammas", join(&l.gammas));
        put("landscape.slope", l.slope.to_string());
        let sc = &self.schedule;
        put("schedule.kind", sc.kind.name().to_string());
        put("schedule.eta_max", sc.eta_max.to_string());
        put("schedule.eta_min", sc.eta_min.to_string());
        put("schedule.warmup", sc.warmup.to_string());
        put("schedule.steps", sc.steps.to_string());
        put("schedule.budgets", join(&sc.budgets));
        put("schedule.decay_fraction", sc.decay_fraction.to_string());
        put("schedule.gamma", sc.gamma.to_string());
        put("schedule.k_s", sc.k_s.to_string());
        let o = &self.optimizer;
        put("optimizer.method", o.method.to_string());
        put("optimizer.etas", join(&o.etas));
        put("optimizer.w0", join(&o.w0));
        put("optimizer.t_end", o.t_end.to_string());
        put("optimizer.h", o.h.to_string());
        put("optimizer.region", o.region.to_string());
        put("optimizer.loss_cap", o.loss_cap.to_string());
        let g = &self.sgd;
        put("sgd.sigma", g.sigma.to_string());
        put("sgd.noise", g.noise.name().to_string());
        put("sgd.trials", g.trials.to_string());
        put("sgd.v_fixed", join(&g.v_fixed));
        put("sgd.init_std", join(&g.init_std));
        let r = &self.river;
        put("river.trace", r.trace.to_string());
        put("river.seed_point", join(&r.seed_point));
        put("river.steps", r.steps.to_string());
        put("river.ds", r.ds.to_string());
        if let Some(k0) = r.k0 {
            put("river.k0", k0.to_string());
        }
        put("river.radius", r.radius.to_string());
        put("river.samples", r.samples.to_string());
        let b = &self.bigram;
        put("bigram.n_deterministic", b.n_deterministic.to_string());
        put("bigram.n_stochastic", b.n_stochastic.to_string());
        put("bigram.m", b.m.to_string());
        put("bigram.batch", b.batch.to_string());
        put("bigram.eval_every", b.eval_every.to_string());
        put("bigram.decay_fraction", b.decay_fraction.to_string());
        put("bigram.decay_ratio", b.decay_ratio.to_string());
        let p = &self.probe;
        put("probe.points", p.points.to_string());
        put("probe.a", join(&p.a));
        put("probe.b", join(&p.b));
        put("probe.gap", p.gap.to_string());
        s
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Raw key/value pairs; keys are removed as they are read so that leftovers
/// can be reported as unknown.
struct FlatMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl FlatMap {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `section.key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k.split_once('.') {
                Some((sec, key)) if !sec.is_empty() && !key.is_empty() && !key.contains('.') => {}
                _ => return Err(Error::Config(format!("line {line_no}: key `{k}` is not `section.key`"))),
            }
            if entries.insert(k.to_string(), (line_no, v.to_string())).is_some() {
                return Err(Error::Config(format!("line {line_no}: duplicate key `{k}`")));
            }
        }
        Ok(Self { entries })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: {key} = `{v}`: {e}"))),
        }
    }

    fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn list_or<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|e| Error::Config(format!("line {line}: {key} item `{s}`: {e}")))
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Config(format!("line {line}: unknown key `{k}`"))),
        }
    }
}
