use crate::analysis::{Check, TheoryReport};
use crate::error::{Error, Result};
use crate::landscapes::{Landscape, QuadraticValley, StraightValley};
use crate::numerics::fit_through_origin;
use crate::optim::{run_sgd_ensemble, NoiseMode, RunOpts, SgdConfig};
use crate::schedules::ScheduleSpec;

/// `ησ²/(γ(2 − ηγ))`, the fixed point of `v ← (1 − ηγ)²v + η²σ²`.
pub fn stationary_variance(gamma: f64, eta: f64, sigma: f64) -> f64 {
    eta * sigma * sigma / (gamma * (2.0 - eta * gamma))
}

/// Steps discarded before stationary averages: `max(⌈1/(ηγ)⌉, 100)`.
pub fn burn_in(eta: f64, gamma: f64) -> usize {
    ((1.0 / (eta * gamma)).ceil() as usize).max(100)
}

/// Starts SGD on the quadratic valley in its stationary hill distribution
/// and checks that `Var[x₂]` stays put.
pub fn stationary_check(gamma: f64, eta: f64, sigma: f64, steps: usize, trials: usize, seed: u64) -> Result<TheoryReport> {
    if !(eta > 0.0 && eta < 2.0 / gamma) {
        return Err(Error::Precondition(format!("eta = {eta} outside (0, 2/gamma)")));
    }
    let l = QuadraticValley::new(gamma)?;
    let var0 = stationary_variance(gamma, eta, sigma);
    let cfg = SgdConfig {
        sigma,
        noise_mode: NoiseMode::FixedComplement,
        v_fixed: Some(vec![1.0, 0.0]),
        trials,
        seed,
        init_std: vec![0.0, var0.sqrt()],
    };
    let table = ScheduleSpec::constant(eta, steps).build_table()?;
    let stats = run_sgd_ensemble(&l, &[0.0, 0.0], &table, &cfg, &RunOpts::default())?;
    let mut report = TheoryReport::new("stationary_check");
    let check = if var0 > 0.0 { Check::Rel(0.03) } else { Check::Abs(0.0) };
    for k in [50, 100, 200].into_iter().filter(|k| *k <= steps) {
        report.row(format!("Var[y_{k}]"), stats.var_w[k][1], var0, check);
    }
    let hill = stats.mean_hill.as_ref().expect("closed-form projection");
    let hill_mean = hill.iter().sum::<f64>() / hill.len() as f64;
    let hill_check = if var0 > 0.0 { Check::Rel(0.05) } else { Check::Abs(0.0) };
    report.row("mean hill loss", hill_mean, gamma * var0 / 2.0, hill_check);
    report.note(format!("{trials} trials, initial variance {var0:.7}"));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillSlopeOpts {
    /// Steps averaged after the burn-in.
    pub window: usize,
    /// Multiplies the default burn-in length.
    pub burn_in_scale: f64,
}

impl Default for HillSlopeOpts {
    fn default() -> Self {
        Self {
            window: 400,
            burn_in_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillSlope {
    pub etas: Vec<f64>,
    pub hills: Vec<f64>,
    /// Exact stationary hill loss `Σ_i ησ²/(2(2 − ηγ_i))` per η.
    pub exact: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    /// Small-η slope `Σ_i σ²/4`.
    pub oracle: f64,
}

/// Measures the stationary hill loss of constant-η SGD on a straight valley
/// for each η and fits a line through the origin.
pub fn hill_slope_vs_lr(
    l: &StraightValley,
    eta_grid: &[f64],
    cfg: &SgdConfig,
    opts: &HillSlopeOpts,
) -> Result<(TheoryReport, HillSlope)> {
    if eta_grid.len() < 3 {
        return Err(Error::Precondition("need at least 3 learning rates".into()));
    }
    let big = l.gammas.iter().copied().fold(0.0, f64::max);
    let small = l.gammas.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some(eta) = eta_grid.iter().find(|e| !(**e > 0.0 && **e < 2.0 / big)) {
        return Err(Error::Precondition(format!("eta = {eta} outside (0, 2/Γ)")));
    }
    let cfg = SgdConfig {
        noise_mode: NoiseMode::FixedComplement,
        v_fixed: l.fixed_river_direction(),
        ..cfg.clone()
    };
    let w0 = vec![0.0; l.dim()];
    let mut hills = Vec::with_capacity(eta_grid.len());
    for &eta in eta_grid {
        let burn = (burn_in(eta, small) as f64 * opts.burn_in_scale).ceil() as usize;
        let table = ScheduleSpec::constant(eta, burn + opts.window).build_table()?;
        let stats = run_sgd_ensemble(l, &w0, &table, &cfg, &RunOpts::default())?;
        let tail = &stats.mean_hill.as_ref().expect("closed-form projection")[burn + 1..];
        hills.push(tail.iter().sum::<f64>() / tail.len() as f64);
    }
    let (slope, r2) = fit_through_origin(eta_grid, &hills)?;
    let s2 = cfg.sigma * cfg.sigma;
    let exact: Vec<f64> = eta_grid
        .iter()
        .map(|&eta| l.gammas.iter().map(|g| eta * s2 / (2.0 * (2.0 - eta * g))).sum())
        .collect();
    let oracle = l.gammas.len() as f64 * s2 / 4.0;
    let mut report = TheoryReport::new("hill_slope_vs_lr");
    report
        .row("r^2 of fit through origin", r2, 0.99, Check::AtLeast)
        .row("slope", slope, oracle, Check::Rel(0.10))
        .row("slope vs (d-1)σ²/2 headline", slope, 2.0 * oracle, Check::Info);
    for ((eta, h), e) in eta_grid.iter().zip(&hills).zip(&exact) {
        report.row(format!("hill at eta={eta}"), *h, *e, Check::Info);
    }
    report.note(format!("{} trials per rate, window {} steps", cfg.trials, opts.window));
    Ok((
        report,
        HillSlope {
            etas: eta_grid.to_vec(),
            hills,
            exact,
            slope,
            r2,
            oracle,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_variance_value() {
        assert!((stationary_variance(1.0, 0.1, 1.0) - 0.0526316).abs() < 1e-7);
        assert_eq!(burn_in(0.1, 1.0), 100);
        assert_eq!(burn_in(0.001, 1.0), 1000);
    }

    #[test]
    fn stationary_check_small() {
        let r = stationary_check(1.0, 0.1, 1.0, 100, 20_000, 1).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn stationary_check_without_noise() {
        let r = stationary_check(1.0, 0.1, 0.0, 60, 10, 1).unwrap();
        assert!(r.passed());
        assert_eq!(r.rows[0].measured, 0.0);
        assert!(stationary_check(1.0, 2.5, 1.0, 60, 10, 1).is_err());
    }

    #[test]
    fn hill_slope_without_noise_is_degenerate() {
        let l = StraightValley::new(vec![1.0], 1.0).unwrap();
        let cfg = SgdConfig { sigma: 0.0, trials: 4, ..SgdConfig::default() };
        let r = hill_slope_vs_lr(&l, &[0.02, 0.05, 0.1], &cfg, &HillSlopeOpts { window: 20, burn_in_scale: 1.0 });
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn hill_slope_two_sharp_directions() {
        let l = StraightValley::new(vec![1.0, 4.0], 1.0).unwrap();
        let cfg = SgdConfig { sigma: 0.5, trials: 2000, seed: 5, ..SgdConfig::default() };
        let opts = HillSlopeOpts { window: 400, burn_in_scale: 4.0 };
        let (report, h) = hill_slope_vs_lr(&l, &[0.005, 0.01, 0.02, 0.04], &cfg, &opts).unwrap();
        assert!(report.passed(), "{report}");
        assert!((h.oracle - 2.0 * 0.25 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn hill_slope_rejects_unstable_rates() {
        let l = StraightValley::new(vec![1.0, 4.0], 1.0).unwrap();
        let cfg = SgdConfig { sigma: 0.5, trials: 4, ..SgdConfig::default() };
        assert!(hill_slope_vs_lr(&l, &[0.1, 0.2, 0.6], &cfg, &HillSlopeOpts::default()).is_err());
        assert!(hill_slope_vs_lr(&l, &[0.1, 0.2], &cfg, &HillSlopeOpts::default()).is_err());
    }
}
