use std::f64::consts::PI;

use crate::analysis::stationary::stationary_variance;
use crate::analysis::{Check, TheoryReport};
use crate::error::{Error, Result};
use crate::schedules::optimal_quadratic_lr;

/// Exact per-direction variances of SGD on a quadratic hill.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRecursion {
    /// `var[k][i]` for `k = 0..=lrs.len()`.
    pub var: Vec<Vec<f64>>,
    /// `(σ²/γ_i)η_k + 4η²σ²/γ_i` for `k < lrs.len()`, paired with `var[k]`.
    pub bound: Vec<Vec<f64>>,
    pub bound_holds: bool,
}

impl DecayRecursion {
    /// Predicted hill loss `Σ_i γ_i var[k][i]/2`.
    pub fn hill(&self, gammas: &[f64]) -> Vec<f64> {
        self.var
            .iter()
            .map(|v| v.iter().zip(gammas).map(|(s, g)| g * s / 2.0).sum())
            .collect()
    }
}

/// Runs `var_{k+1} = (1 − η_kγ)² var_k + η_k²σ²` in every direction and
/// checks `var_k ≤ (σ²/γ)η_k + 4η²σ²/γ`, where `eta` is the stable rate.
pub fn decay_variance_recursion(gammas: &[f64], eta: f64, lrs: &[f64], sigma: f64, var0: &[f64]) -> Result<DecayRecursion> {
    if gammas.len() != var0.len() {
        return Err(Error::LengthMismatch {
            left: gammas.len(),
            right: var0.len(),
        });
    }
    let s2 = sigma * sigma;
    let mut var = Vec::with_capacity(lrs.len() + 1);
    let mut bound = Vec::with_capacity(lrs.len());
    let mut bound_holds = true;
    let mut cur = var0.to_vec();
    for &lr in lrs {
        let b: Vec<f64> = gammas.iter().map(|g| s2 / g * lr + 4.0 * eta * eta * s2 / g).collect();
        bound_holds &= cur.iter().zip(&b).all(|(v, b)| *v <= *b);
        let next = cur
            .iter()
            .zip(gammas)
            .map(|(v, g)| (1.0 - lr * g).powi(2) * v + lr * lr * s2)
            .collect();
        var.push(std::mem::replace(&mut cur, next));
        bound.push(b);
    }
    var.push(cur);
    Ok(DecayRecursion { var, bound, bound_holds })
}

fn variance_after(gamma: f64, sigma: f64, var0: f64, lrs: &[f64]) -> f64 {
    lrs.iter()
        .fold(var0, |v, lr| (1.0 - lr * gamma).powi(2) * v + lr * lr * sigma * sigma)
}

/// Competing schedules for `k_end` steps starting from `eta_max`.
pub fn dominance_alternatives(gamma: f64, eta_max: f64, k_end: usize) -> Vec<(String, Vec<f64>)> {
    let n = k_end as f64;
    let frac = |k: usize| k as f64 / (n - 1.0).max(1.0);
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for c in [1.0, 0.75, 0.5, 0.25, 0.1] {
        out.push((format!("constant {c}·eta"), vec![c * eta_max; k_end]));
    }
    for f in [0.0, 0.01, 0.1, 0.3] {
        out.push((
            format!("linear to {f}·eta"),
            (0..k_end).map(|k| eta_max * (1.0 - (1.0 - f) * frac(k))).collect(),
        ));
    }
    for f in [0.0, 0.01, 0.1] {
        out.push((
            format!("cosine to {f}·eta"),
            (0..k_end)
                .map(|k| eta_max * (f + (1.0 - f) * 0.5 * (1.0 + (PI * frac(k)).cos())))
                .collect(),
        ));
    }
    for f in [0.01, 0.05, 0.1, 0.3] {
        let r = f64::powf(f, 1.0 / (n - 1.0).max(1.0));
        out.push((
            format!("exponential to {f}·eta"),
            (0..k_end).map(|k| eta_max * r.powi(k as i32)).collect(),
        ));
    }
    for every in [(k_end / 5).max(1), (k_end / 10).max(1)] {
        out.push((
            format!("halve every {every}"),
            (0..k_end).map(|k| eta_max * 0.5f64.powi((k / every) as i32)).collect(),
        ));
    }
    for c in [0.5, 2.0, 4.0] {
        out.push((
            format!("harmonic {c}·gamma"),
            (0..k_end).map(|k| 1.0 / (c * gamma * k as f64 + 2.0 / eta_max)).collect(),
        ));
    }
    out.push((
        "harmonic shifted one step".into(),
        (0..k_end).map(|k| 1.0 / (gamma * (k + 1) as f64 + 2.0 / eta_max)).collect(),
    ));
    out.push((
        "harmonic from eta/2".into(),
        (0..k_end).map(|k| 1.0 / (gamma * k as f64 + 4.0 / eta_max)).collect(),
    ));
    out
}

/// Compares the optimal quadratic schedule against [`dominance_alternatives`]
/// by exact variance recursion from the stationary variance at `eta_max`.
pub fn schedule_dominance(gamma: f64, eta_max: f64, sigma: f64, k_end: usize) -> Result<TheoryReport> {
    if k_end == 0 {
        return Err(Error::InvalidArgument("k_end must be >= 1".into()));
    }
    let var0 = stationary_variance(gamma, eta_max, sigma);
    let optimal: Vec<f64> = (1..=k_end)
        .map(|k| optimal_quadratic_lr(gamma, eta_max, k))
        .collect::<Result<_>>()?;
    let s2 = sigma * sigma;
    let mut worst = 0.0f64;
    let mut v = var0;
    for (k, lr) in optimal.iter().enumerate() {
        v = (1.0 - lr * gamma).powi(2) * v + lr * lr * s2;
        let closed = 1.0 / (1.0 / var0 + gamma * gamma * (k + 1) as f64 / s2);
        worst = worst.max(((1.0 / v) / (1.0 / closed) - 1.0).abs());
    }
    let loss_opt = gamma * v / 2.0;
    let closed_loss = gamma / 2.0 / (1.0 / var0 + gamma * gamma * k_end as f64 / s2);
    let alternatives = dominance_alternatives(gamma, eta_max, k_end);

    let mut report = TheoryReport::new("schedule_dominance");
    report
        .row("alternatives", alternatives.len() as f64, 20.0, Check::AtLeast)
        .row("max rel error of 1/var_k vs closed form", worst, 1e-10, Check::AtMost)
        .row("optimal loss vs closed form", loss_opt, closed_loss, Check::Abs(1e-8))
        .row(
            "optimal loss vs stated (σ²/γ)η*",
            loss_opt,
            s2 / gamma * optimal[k_end - 1],
            Check::Info,
        );
    for (name, lrs) in &alternatives {
        if let Some(lr) = lrs.iter().find(|lr| !(**lr >= 0.0 && **lr < 2.0 / gamma)) {
            return Err(Error::Precondition(format!("{name}: rate {lr} is unstable")));
        }
        let loss = gamma * variance_after(gamma, sigma, var0, lrs) / 2.0;
        report.row(format!("optimal <= {name}"), loss_opt, loss, Check::AtMost);
    }
    let constant = gamma * variance_after(gamma, sigma, var0, &vec![eta_max; k_end]) / 2.0;
    report.row("constant eta stays stationary", constant, gamma * var0 / 2.0, Check::Rel(1e-12));
    if k_end >= 2 {
        report.row("constant eta above optimal", constant, loss_opt, Check::Above);
    }
    report.note("loss is the exact expectation of γy²/2 under the recursion");
    Ok(report)
}
