use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::numerics::matrix::distance;
use crate::optim::{RiverColumns, Trajectory};
use crate::river::{locate_on_trace, project_to_river, ProjectOpts, RiverTrace};

/// Splits every loss into a river part `L(Φ(w))` and a hill part
/// `L(w) − L(Φ(w))`.
///
/// Uses the landscape's closed-form projection when it has one and the
/// projection flow otherwise.
pub fn decompose<L: Landscape + ?Sized>(traj: &Trajectory, l: &L) -> Result<Vec<RiverColumns>> {
    let opts = ProjectOpts::default();
    traj.steps
        .iter()
        .map(|s| {
            let phi = match l.river_projection(&s.w) {
                Some(p) => p,
                None => {
                    let r = project_to_river(l, &s.w, &opts)?;
                    if !r.converged {
                        return Err(Error::NoConvergence { sweeps: s.k, off: r.residual });
                    }
                    r.phi
                }
            };
            let river_loss = l.value(&phi);
            Ok(RiverColumns {
                river_loss,
                hill_loss: s.loss - river_loss,
                dist: distance(&s.w, &phi),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub k0: usize,
    /// `t̃(k0) − t(k0)`
    pub t0: f64,
    /// Reference-flow time `t̃(k)` of every step.
    pub t_tilde: Vec<f64>,
    /// Distance from `w_k` to the trace.
    pub dist: Vec<f64>,
    /// `(k, (t̃(k) − T0)/t(k))` for `k > k0`.
    pub ratios: Vec<(usize, f64)>,
}

impl Alignment {
    pub fn mean_ratio(&self) -> f64 {
        self.ratios.iter().map(|r| r.1).sum::<f64>() / self.ratios.len().max(1) as f64
    }

    pub fn terminal_t_tilde(&self) -> f64 {
        self.t_tilde.last().copied().unwrap_or(f64::NAN)
    }
}

/// Compares each step's position on the river clock with its Ση clock after
/// removing the shift measured at step `k0`.
pub fn time_alignment(traj: &Trajectory, trace: &RiverTrace, k0: usize, radius: f64) -> Result<Alignment> {
    if traj.len() < k0 + 2 {
        return Err(Error::Precondition(format!("trajectory of {} rows is too short for k0 = {k0}", traj.len())));
    }
    let mut t_tilde = Vec::with_capacity(traj.len());
    let mut dist = Vec::with_capacity(traj.len());
    for s in &traj.steps {
        let (t, d) = locate_on_trace(trace, &s.w, radius)?;
        t_tilde.push(t);
        dist.push(d);
    }
    let t0 = t_tilde[k0] - traj.steps[k0].t;
    let ratios = traj.steps[k0 + 1..]
        .iter()
        .map(|s| (s.k, (t_tilde[s.k] - t0) / s.t))
        .collect();
    Ok(Alignment {
        k0,
        t0,
        t_tilde,
        dist,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{QuadraticValley, SineRiver, StraightValley};
    use crate::optim::{run_gd, run_gf, RunOpts};
    use crate::river::{trace_river, TraceOpts};
    use crate::schedules::ScheduleSpec;

    fn const_table(eta: f64, steps: usize) -> crate::schedules::ScheduleTable {
        ScheduleSpec::constant(eta, steps).build_table().unwrap()
    }

    #[test]
    fn quadratic_decomposition_is_closed_form() {
        let q = QuadraticValley::new(1.0).unwrap();
        let t = run_gd(&q, &[1.0, 0.3], &const_table(0.0, 1), &RunOpts::default()).unwrap();
        let d = decompose(&t, &q).unwrap();
        assert_eq!(d[0].river_loss, -1.0);
        assert!((d[0].hill_loss - 0.045).abs() < 1e-15);
        let t = run_gd(&q, &[0.0, 1.0], &const_table(0.1, 50), &RunOpts::default()).unwrap();
        for (s, c) in t.steps.iter().zip(decompose(&t, &q).unwrap()) {
            assert!((c.river_loss + c.hill_loss - s.loss).abs() <= 1e-12);
        }
        let on = run_gd(&q, &[0.0, 0.0], &const_table(0.1, 50), &RunOpts::default()).unwrap();
        assert!(decompose(&on, &q).unwrap().iter().all(|c| c.hill_loss == 0.0));
    }

    #[test]
    fn numeric_decomposition_on_sine_river() {
        let t = run_gd(&SineRiver, &[0.0, 0.5], &const_table(0.1, 30), &RunOpts::default()).unwrap();
        let d = decompose(&t, &SineRiver).unwrap();
        for (s, c) in t.steps.iter().zip(&d) {
            assert!((c.river_loss + c.hill_loss - s.loss).abs() <= 1e-12);
            assert!(c.hill_loss >= -1e-10);
        }
    }

    #[test]
    fn gd_on_quadratic_aligns_exactly() {
        let q = QuadraticValley::new(1.0).unwrap();
        let trace = trace_river(&q, &[0.0, 0.0], 1200, 0.01, &TraceOpts::default()).unwrap();
        let t = run_gd(&q, &[0.0, 1.0], &const_table(0.1, 100), &RunOpts::default()).unwrap();
        let a = time_alignment(&t, &trace, 10, f64::INFINITY).unwrap();
        assert!(a.ratios.iter().all(|(_, r)| (r - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn gd_on_straight_valleys_aligns_exactly() {
        let v = StraightValley::new(vec![1.0, 3.0], 0.5).unwrap();
        let trace = trace_river(&v, &[0.0; 3], 2000, 0.01, &TraceOpts::default()).unwrap();
        for eta in [0.05, 0.2, 0.6] {
            let t = run_gd(&v, &[0.3, -0.2, 0.0], &const_table(eta, 60), &RunOpts::default()).unwrap();
            let a = time_alignment(&t, &trace, 5, f64::INFINITY).unwrap();
            assert!(a.ratios.iter().all(|(_, r)| (r - 1.0).abs() <= 1e-10), "eta {eta}");
        }
    }

    #[test]
    fn gf_alignment_after_transient() {
        let q = QuadraticValley::new(1.0).unwrap();
        let trace = trace_river(&q, &[0.0, 0.0], 500, 0.01, &TraceOpts::default()).unwrap();
        let t = run_gf(&q, &[0.0, 1.0], 4.0, 0.01, &RunOpts::default()).unwrap();
        let a = time_alignment(&t, &trace, 40, f64::INFINITY).unwrap();
        assert!(a.ratios.iter().all(|(_, r)| (r - 1.0).abs() <= 1e-3));
    }

    #[test]
    fn alignment_needs_enough_steps() {
        let q = QuadraticValley::new(1.0).unwrap();
        let trace = trace_river(&q, &[0.0, 0.0], 10, 0.01, &TraceOpts::default()).unwrap();
        let t = run_gd(&q, &[0.0, 1.0], &const_table(0.1, 3), &RunOpts::default()).unwrap();
        assert!(time_alignment(&t, &trace, 3, 1.0).is_err());
    }
}
