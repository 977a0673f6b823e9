//! River geometry: the projection flow, predictor–corrector river tracing and
//! nearest-point lookup on a traced river.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::error::{Error, Result};
use crate::landscapes::{flat_direction, Landscape, Region};
use crate::numerics::matrix::{distance, dot, norm, reject};
use crate::numerics::rk4_step;
use crate::{fmt_f64, fmt_point};

pub const DEFAULT_TOL: f64 = 1e-10;

/// `‖(I − v_d v_dᵀ)∇L(w)‖`, zero exactly on the river.
pub fn river_residual<L: Landscape + ?Sized>(l: &L, w: &[f64]) -> Result<f64> {
    let f = flat_direction(l, w)?;
    Ok(norm(&reject(&f.gradient, &f.v)))
}

/// Eigengap data used to check the projection distance bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBound {
    pub gamma: f64,
    pub flat_gamma: f64,
}

impl DistanceBound {
    pub fn limit(&self, residual: f64) -> f64 {
        2.0 * residual / (self.gamma + 2.0 * self.flat_gamma)
    }
}

#[derive(Debug, Clone)]
pub struct ProjectOpts {
    pub tol: f64,
    /// Flow-time cap; defaults to `50/gap` with the local eigengap at `w`.
    pub t_cap: Option<f64>,
    /// RK4 step; defaults to `0.25/‖∇²L(w)‖`.
    pub h: Option<f64>,
    pub region: Option<Region>,
    /// Checked at the end when the landscape's constants are certified.
    pub bound: Option<DistanceBound>,
}

impl Default for ProjectOpts {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            t_cap: None,
            h: None,
            region: None,
            bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub phi: Vec<f64>,
    pub residual: f64,
    pub flow_time: f64,
    pub converged: bool,
    /// `(t, residual)` after every RK4 step, starting at `(0, residual(w))`.
    pub history: Vec<(f64, f64)>,
    /// `Some` when a distance bound was supplied.
    pub bound_holds: Option<bool>,
}

/// Integrates `dφ/dt = −(I − v_d v_dᵀ)∇L(φ)` from `w` until the residual
/// drops to `opts.tol` or the flow time reaches the cap.
pub fn project_to_river<L: Landscape + ?Sized>(l: &L, w: &[f64], opts: &ProjectOpts) -> Result<ProjectionResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {}", opts.tol)));
    }
    if let Some(r) = &opts.region {
        if !r.contains(w) {
            return Err(Error::RegionExit { step: 0 });
        }
    }
    let start = flat_direction(l, w)?;
    let res0 = norm(&reject(&start.gradient, &start.v));
    let h = opts.h.unwrap_or(0.25 / start.op_norm.max(1e-12));
    let t_cap = opts.t_cap.unwrap_or(50.0 / start.gap());
    if !(h > 0.0) || !(t_cap >= 0.0) {
        return Err(Error::InvalidArgument(format!("h = {h}, t_cap = {t_cap}")));
    }

    let mut field = |x: &[f64]| -> Result<Vec<f64>> {
        let f = flat_direction(l, x)?;
        Ok(reject(&f.gradient, &f.v).into_iter().map(|c| -c).collect())
    };

    let mut phi = w.to_vec();
    let mut t = 0.0;
    let mut residual = res0;
    let mut history = vec![(0.0, res0)];
    let mut step = 0usize;
    while residual > opts.tol && t < t_cap {
        let dt = h.min(t_cap - t);
        phi = rk4_step(&mut field, &phi, dt)?;
        step += 1;
        t = if dt < h { t_cap } else { step as f64 * h };
        if let Some(r) = &opts.region {
            if !r.contains(&phi) {
                return Err(Error::RegionExit { step });
            }
        }
        residual = river_residual(l, &phi)?;
        if !residual.is_finite() {
            return Err(Error::NonFinite("projection residual".into()));
        }
        history.push((t, residual));
    }
    let converged = residual <= opts.tol;
    let bound_holds = opts
        .bound
        .map(|b| distance(w, &phi) <= b.limit(res0) * (1.0 + 1e-6) + opts.tol);
    Ok(ProjectionResult {
        phi,
        residual,
        flow_time: t,
        converged,
        history,
        bound_holds,
    })
}

/// What to do when a traced point leaves the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitPolicy {
    #[default]
    Error,
    Truncate,
}

/// Source of the tangent used for the reference-flow clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentMode {
    /// Normalized central differences of the traced points.
    #[default]
    Traced,
    /// The local flattest eigenvector.
    Eigen,
}

#[derive(Debug, Clone)]
pub struct TraceOpts {
    pub tol: f64,
    /// Minimum river speed `|⟨tangent, ∇L⟩|` below which the clock stalls.
    pub grad_lo: f64,
    pub region: Option<Region>,
    pub exit: ExitPolicy,
    pub tangent: TangentMode,
}

impl Default for TraceOpts {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            grad_lo: 1e-8,
            region: None,
            exit: ExitPolicy::Error,
            tangent: TangentMode::Traced,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiverTrace {
    pub points: Vec<Vec<f64>>,
    /// Reference-flow time, starting at 0 on the seed.
    pub times: Vec<f64>,
    pub arclens: Vec<f64>,
    pub losses: Vec<f64>,
    /// Unit tangents pointing downstream.
    pub tangents: Vec<Vec<f64>>,
    /// True when tracing stopped early at the region boundary.
    pub truncated: bool,
}

impl RiverTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, Vec::len);
        let mut s = String::from("idx,t,arclen,loss");
        for i in 0..d {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.arclens[i]),
                fmt_f64(self.losses[i]),
                fmt_point(&self.points[i])
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Traces `steps` arc steps of length `ds` downstream from an on-river seed.
///
/// Each step moves along the descent side of `v_d` and projects back onto the
/// river. Times integrate `1/|⟨tangent, ∇L⟩|` over arclength with the
/// trapezoid rule.
pub fn trace_river<L: Landscape + ?Sized>(
    l: &L,
    seed: &[f64],
    steps: usize,
    ds: f64,
    opts: &TraceOpts,
) -> Result<RiverTrace> {
    if !(ds > 0.0) {
        return Err(Error::InvalidArgument(format!("ds = {ds}")));
    }
    let r0 = river_residual(l, seed)?;
    if r0 > opts.tol {
        return Err(Error::Precondition(format!("seed residual {r0:e} above tolerance {:e}", opts.tol)));
    }
    let proj = ProjectOpts {
        tol: opts.tol,
        region: None,
        ..ProjectOpts::default()
    };
    let mut points = vec![seed.to_vec()];
    let mut truncated = false;
    for k in 0..steps {
        let p = points.last().expect("trace has a seed");
        let f = flat_direction(l, p)?;
        let predictor: Vec<f64> = p.iter().zip(&f.v).map(|(x, v)| x - ds * v).collect();
        let next = project_to_river(l, &predictor, &proj)?;
        if !next.converged {
            return Err(Error::NoConvergence { sweeps: k + 1, off: next.residual });
        }
        if let Some(r) = &opts.region {
            if !r.contains(&next.phi) {
                match opts.exit {
                    ExitPolicy::Error => return Err(Error::RegionExit { step: k + 1 }),
                    ExitPolicy::Truncate => {
                        truncated = true;
                        break;
                    }
                }
            }
        }
        points.push(next.phi);
    }
    let n = points.len();
    let mut tangents = Vec::with_capacity(n);
    for i in 0..n {
        let t: Vec<f64> = match opts.tangent {
            TangentMode::Eigen => {
                let f = flat_direction(l, &points[i])?;
                f.v.iter().map(|x| -x).collect()
            }
            TangentMode::Traced if n == 1 => {
                let f = flat_direction(l, &points[0])?;
                f.v.iter().map(|x| -x).collect()
            }
            TangentMode::Traced => {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                let diff: Vec<f64> = points[b].iter().zip(&points[a]).map(|(x, y)| x - y).collect();
                let len = norm(&diff);
                diff.into_iter().map(|x| x / len).collect()
            }
        };
        tangents.push(t);
    }
    let mut speeds = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        let g = l.gradient(p);
        let s = dot(&tangents[i], &g).abs();
        if !(s >= opts.grad_lo) {
            return Err(Error::Stalled { speed: s });
        }
        speeds.push(s);
        losses.push(l.value(p));
    }
    let mut times = vec![0.0];
    let mut arclens = vec![0.0];
    for i in 1..n {
        let seg = distance(&points[i - 1], &points[i]);
        arclens.push(arclens[i - 1] + seg);
        times.push(times[i - 1] + seg * 0.5 * (1.0 / speeds[i - 1] + 1.0 / speeds[i]));
    }
    Ok(RiverTrace {
        points,
        times,
        arclens,
        losses,
        tangents,
        truncated,
    })
}

/// Nearest point of the trace polyline: returns its interpolated time and
/// the Euclidean distance from `w`.
pub fn locate_on_trace(trace: &RiverTrace, w: &[f64], radius: f64) -> Result<(f64, f64)> {
    if trace.is_empty() {
        return Err(Error::Precondition("empty trace".into()));
    }
    let mut best = (trace.times[0], distance(w, &trace.points[0]));
    for i in 0..trace.len().saturating_sub(1) {
        let a = &trace.points[i];
        let b = &trace.points[i + 1];
        let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let aw: Vec<f64> = w.iter().zip(a).map(|(x, y)| x - y).collect();
        let len2 = dot(&ab, &ab);
        let s = if len2 > 0.0 { (dot(&aw, &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let proj: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + s * d).collect();
        let dist = distance(w, &proj);
        if dist < best.1 {
            let t = trace.times[i] + s * (trace.times[i + 1] - trace.times[i]);
            best = (t, dist);
        }
    }
    if best.1 > radius {
        return Err(Error::OffTrace { dist: best.1, radius });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{QuadraticValley, SineRiver, StraightValley};
    use crate::numerics::{integrate_rk4, linear_fit};

    fn quad() -> QuadraticValley {
        QuadraticValley::new(1.0).unwrap()
    }

    fn sine_trace() -> RiverTrace {
        let seed = project_to_river(&SineRiver, &[-0.5, (-0.5f64).sin()], &ProjectOpts::default()).unwrap();
        let opts = TraceOpts {
            region: Some(SineRiver::tracking_region()),
            exit: ExitPolicy::Truncate,
            ..TraceOpts::default()
        };
        trace_river(&SineRiver, &seed.phi, 3000, 0.01, &opts).unwrap()
    }

    #[test]
    fn residual_examples() {
        assert_eq!(river_residual(&quad(), &[5.0, 0.0]).unwrap(), 0.0);
        assert!((river_residual(&quad(), &[5.0, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert!(river_residual(&SineRiver, &[10.0, 10.0f64.sin()]).unwrap() <= 1e-8);
    }

    #[test]
    fn projection_of_quadratic_valley() {
        let r = project_to_river(&quad(), &[0.0, 1.0], &ProjectOpts::default()).unwrap();
        assert!(r.converged && r.residual <= 1e-10);
        assert_eq!(r.phi[0], 0.0);
        assert!(r.phi[1].abs() <= 1e-10);
        let on = project_to_river(&quad(), &[2.0, 0.0], &ProjectOpts::default()).unwrap();
        assert_eq!(on.phi, vec![2.0, 0.0]);
        assert_eq!(on.flow_time, 0.0);
    }

    #[test]
    fn projection_residual_decays_at_gamma() {
        let r = project_to_river(&quad(), &[0.0, 1.0], &ProjectOpts::default()).unwrap();
        let (ts, logs): (Vec<f64>, Vec<f64>) = r.history.iter().map(|(t, res)| (*t, res.ln())).unzip();
        let fit = linear_fit(&ts, &logs).unwrap();
        assert!((-fit.slope - 1.0).abs() < 0.02, "rate {}", -fit.slope);
    }

    #[test]
    fn projection_is_idempotent_and_bounded() {
        let bound = DistanceBound { gamma: 1.0, flat_gamma: 0.0 };
        let opts = ProjectOpts { bound: Some(bound), ..ProjectOpts::default() };
        for w in [[0.0, 1.0], [3.0, -2.0], [-1.0, 0.4]] {
            let r = project_to_river(&quad(), &w, &opts).unwrap();
            assert_eq!(r.bound_holds, Some(true));
            let again = project_to_river(&quad(), &r.phi, &opts).unwrap();
            assert!(distance(&again.phi, &r.phi) <= 1e-10);
        }
    }

    #[test]
    fn sine_projection_decays_exponentially() {
        let r = project_to_river(&SineRiver, &[2.0, 1.5], &ProjectOpts::default()).unwrap();
        assert!(r.converged);
        let gap = flat_direction(&SineRiver, &r.phi).unwrap().gap();
        let (t_end, res_end) = *r.history.last().unwrap();
        assert!(res_end <= (-0.5 * gap * t_end).exp() * r.history[0].1 * 1.01 + 1e-12);
    }

    #[test]
    fn projection_region_exit() {
        let opts = ProjectOpts {
            region: Some(Region::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] }),
            ..ProjectOpts::default()
        };
        assert!(matches!(project_to_river(&quad(), &[5.0, 0.5], &opts), Err(Error::RegionExit { step: 0 })));
    }

    #[test]
    fn quadratic_trace_is_unit_speed() {
        let t = trace_river(&quad(), &[0.0, 0.0], 250, 0.01, &TraceOpts::default()).unwrap();
        let last = t.points.last().unwrap();
        assert!((last[0] - 2.5).abs() <= 1e-6 && last[1].abs() <= 1e-6);
        assert!((t.final_time() - 2.5).abs() <= 1e-4);
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        assert!(t.points.windows(2).all(|p| distance(&p[0], &p[1]) <= 0.02));
    }

    #[test]
    fn straight_valley_tangents_are_axis() {
        let v = StraightValley::new(vec![1.0, 2.0], 1.0).unwrap();
        let t = trace_river(&v, &[0.0; 3], 50, 0.1, &TraceOpts::default()).unwrap();
        assert!(t.tangents.iter().all(|tan| tan == &vec![0.0, 0.0, 1.0]));
    }

    #[test]
    fn sine_trace_follows_the_curve() {
        let t = sine_trace();
        assert!(t.truncated);
        let covered: Vec<&Vec<f64>> = t.points.iter().filter(|p| (0.0..=9.0).contains(&p[0])).collect();
        assert!(covered.len() > 500);
        for p in &covered {
            assert!((p[1] - p[0].sin()).abs() <= 0.06, "{p:?}");
        }
        for p in &t.points {
            assert!(river_residual(&SineRiver, p).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn reference_flow_matches_trace_clock() {
        let t = sine_trace();
        let t_end = t.times[t.len() * 3 / 4];
        let field = |x: &[f64]| {
            let f = flat_direction(&SineRiver, x).unwrap();
            let s = dot(&f.v, &f.gradient);
            f.v.iter().map(|v| -s * v).collect()
        };
        let path = integrate_rk4(field, &t.points[0], t_end, 1e-2).unwrap();
        let (t_tilde, dist) = locate_on_trace(&t, &path.last().unwrap().1, 0.1).unwrap();
        assert!(dist < 1e-2);
        assert!((t_tilde / t_end - 1.0).abs() < 0.01);
    }

    #[test]
    fn trace_rejects_off_river_seed() {
        assert!(matches!(
            trace_river(&quad(), &[0.0, 0.5], 10, 0.01, &TraceOpts::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn locate_examples() {
        let t = trace_river(&quad(), &[0.0, 0.0], 300, 0.01, &TraceOpts::default()).unwrap();
        let (tt, d) = locate_on_trace(&t, &t.points[37], 1.0).unwrap();
        assert_eq!((tt, d), (t.times[37], 0.0));
        let (tt, d) = locate_on_trace(&t, &[1.0, 0.3487], 1.0).unwrap();
        assert!((tt - 1.0).abs() < 1e-9 && (d - 0.3487).abs() < 1e-12);
        let mid: Vec<f64> = t.points[10].iter().zip(&t.points[11]).map(|(a, b)| (a + b) / 2.0).collect();
        let (tt, _) = locate_on_trace(&t, &mid, 1.0).unwrap();
        assert!((tt - (t.times[10] + t.times[11]) / 2.0).abs() < 1e-12);
        assert!(matches!(locate_on_trace(&t, &[1.0, 5.0], 1.0), Err(Error::OffTrace { .. })));
    }

    #[test]
    fn trace_csv_header() {
        let t = trace_river(&quad(), &[0.0, 0.0], 2, 0.5, &TraceOpts::default()).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("idx,t,arclen,loss,x0,x1\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
