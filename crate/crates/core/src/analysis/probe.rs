use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fmt_f64;

/// Classification tolerance as a fraction of the curve's loss spread.
pub const PROBE_TOL_REL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeClass {
    Valley,
    MonotoneDecreasing,
    MonotoneIncreasing,
    Other,
}

impl ProbeClass {
    pub fn name(self) -> &'static str {
        match self {
            ProbeClass::Valley => "valley",
            ProbeClass::MonotoneDecreasing => "monotone_decreasing",
            ProbeClass::MonotoneIncreasing => "monotone_increasing",
            ProbeClass::Other => "other",
        }
    }
}

/// Losses along `(1 − α)w_A + α w_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCurve {
    pub alphas: Vec<f64>,
    pub losses: Vec<f64>,
    pub class: ProbeClass,
}

impl ProbeCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,loss\n");
        for (a, l) in self.alphas.iter().zip(&self.losses) {
            let _ = writeln!(s, "{},{}", fmt_f64(*a), fmt_f64(*l));
        }
        s
    }
}

/// Valley when an interior point undercuts both endpoints by more than the
/// tolerance, monotone when no step moves against the trend by more than it,
/// other otherwise (including flat curves).
///
/// The tolerance is `tol_rel · max(|L_A − L_B|, max L − min L)`.
pub fn classify(losses: &[f64], tol_rel: f64) -> ProbeClass {
    let (Some(&first), Some(&last)) = (losses.first(), losses.last()) else {
        return ProbeClass::Other;
    };
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (first - last).abs().max(hi - lo);
    if !(spread > 0.0) {
        return ProbeClass::Other;
    }
    let tol = tol_rel * spread;
    let interior = losses[1..losses.len() - 1].iter().copied().fold(f64::INFINITY, f64::min);
    if interior < first.min(last) - tol {
        return ProbeClass::Valley;
    }
    let diffs: Vec<f64> = losses.windows(2).map(|w| w[1] - w[0]).collect();
    if last < first && diffs.iter().all(|d| *d <= tol) {
        ProbeClass::MonotoneDecreasing
    } else if last > first && diffs.iter().all(|d| *d >= -tol) {
        ProbeClass::MonotoneIncreasing
    } else {
        ProbeClass::Other
    }
}

/// Evaluates `loss` on `n_points` evenly spaced points of the segment from
/// `w_a` to `w_b`, endpoints included.
pub fn probe_segment<F>(loss: F, w_a: &[f64], w_b: &[f64], n_points: usize) -> Result<ProbeCurve>
where
    F: Fn(&[f64]) -> f64,
{
    if n_points < 5 {
        return Err(Error::InvalidArgument(format!("need >= 5 probe points, got {n_points}")));
    }
    if w_a.len() != w_b.len() {
        return Err(Error::LengthMismatch {
            left: w_a.len(),
            right: w_b.len(),
        });
    }
    let alphas: Vec<f64> = (0..n_points).map(|i| i as f64 / (n_points - 1) as f64).collect();
    let mut losses = Vec::with_capacity(n_points);
    let mut w = vec![0.0; w_a.len()];
    for &a in &alphas {
        for ((x, p), q) in w.iter_mut().zip(w_a).zip(w_b) {
            *x = (1.0 - a) * p + a * q;
        }
        let l = loss(&w);
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("loss at alpha = {a}")));
        }
        losses.push(l);
    }
    let class = classify(&losses, PROBE_TOL_REL);
    Ok(ProbeCurve { alphas, losses, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{Landscape, QuadraticValley};

    #[test]
    fn quadratic_cross_section_is_a_valley() {
        let q = QuadraticValley::new(1.0).unwrap();
        let c = probe_segment(|w| q.value(w), &[5.0, 1.0], &[5.0, -1.0], 21).unwrap();
        assert_eq!(c.class, ProbeClass::Valley);
        assert_eq!(c.losses[10], -5.0);
        assert_eq!(c.losses[0], -4.5);
        let back = probe_segment(|w| q.value(w), &[5.0, -1.0], &[5.0, 1.0], 21).unwrap();
        assert_eq!(back.class, ProbeClass::Valley);
    }

    #[test]
    fn river_segment_is_monotone_and_flips() {
        let q = QuadraticValley::new(1.0).unwrap();
        let down = probe_segment(|w| q.value(w), &[0.0, 0.0], &[3.0, 0.0], 11).unwrap();
        assert_eq!(down.class, ProbeClass::MonotoneDecreasing);
        let up = probe_segment(|w| q.value(w), &[3.0, 0.0], &[0.0, 0.0], 11).unwrap();
        assert_eq!(up.class, ProbeClass::MonotoneIncreasing);
    }

    #[test]
    fn identical_endpoints_are_other() {
        let q = QuadraticValley::new(1.0).unwrap();
        let c = probe_segment(|w| q.value(w), &[1.0, 1.0], &[1.0, 1.0], 7).unwrap();
        assert_eq!(c.class, ProbeClass::Other);
        assert!(probe_segment(|w| q.value(w), &[1.0, 1.0], &[1.0, 1.0], 4).is_err());
    }

    #[test]
    fn classify_rules() {
        assert_eq!(classify(&[1.0, 0.5, 0.8, 0.2, 0.0], 1e-3), ProbeClass::Other);
        assert_eq!(classify(&[1.0, 0.6, 0.6000001, 0.2, 0.1], 1e-3), ProbeClass::MonotoneDecreasing);
        assert_eq!(classify(&[1.0, 0.2, 0.1, 0.3, 1.0], 1e-3), ProbeClass::Valley);
        assert_eq!(classify(&[], 1e-3), ProbeClass::Other);
    }

    #[test]
    fn probe_csv() {
        let c = probe_segment(|w| w[0], &[0.0], &[1.0], 5).unwrap();
        assert_eq!(c.to_csv().lines().count(), 6);
        assert!(c.to_csv().starts_with("alpha,loss\n0,0\n"));
    }
}
