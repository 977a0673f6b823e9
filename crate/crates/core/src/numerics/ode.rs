//! Classical fixed-step Runge–Kutta integration of autonomous fields.

use crate::error::{Error, Result};

/// One RK4 step of size `h` for a fallible autonomous field.
pub fn rk4_step<F, E>(field: &mut F, x: &[f64], h: f64) -> std::result::Result<Vec<f64>, E>
where
    F: FnMut(&[f64]) -> std::result::Result<Vec<f64>, E>,
{
    let k1 = field(x)?;
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = field(&x2)?;
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = field(&x3)?;
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = field(&x4)?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `dx/dt = field(x)` from `x0` until `t_end` with step `h`.
///
/// The returned path starts at `(0, x0)` and ends exactly at `t_end`; the
/// last step is shortened when `t_end` is not a multiple of `h`.
pub fn integrate_rk4<F>(mut field: F, x0: &[f64], t_end: f64, h: f64) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step h = {h}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("t_end = {t_end}")));
    }
    let mut checked = |x: &[f64]| -> Result<Vec<f64>> {
        let v = field(x);
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(Error::NonFinite("vector field".into()))
        }
    };

    let full = (t_end / h).floor() as usize;
    let mut path = Vec::with_capacity(full + 2);
    let mut x = x0.to_vec();
    path.push((0.0, x.clone()));
    for i in 0..full {
        x = rk4_step(&mut checked, &x, h)?;
        path.push(((i + 1) as f64 * h, x.clone()));
    }
    let t_done = full as f64 * h;
    let rest = t_end - t_done;
    if rest > 1e-12 * h {
        x = rk4_step(&mut checked, &x, rest)?;
        path.push((t_end, x));
    } else if let Some(last) = path.last_mut() {
        last.0 = t_end;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn final_point(path: &[(f64, Vec<f64>)]) -> &[f64] {
        &path.last().unwrap().1
    }

    #[test]
    fn exponential_decay() {
        let path = integrate_rk4(|x| vec![-x[0]], &[1.0], 1.0, 1e-3).unwrap();
        assert_eq!(path.last().unwrap().0, 1.0);
        assert!((final_point(&path)[0] - (-1.0f64).exp()).abs() <= 1e-9);
    }

    #[test]
    fn zero_field_is_constant() {
        let path = integrate_rk4(|_| vec![0.0, 0.0], &[3.0, -2.0], 2.5, 0.1).unwrap();
        assert!(path.iter().all(|(_, x)| x == &vec![3.0, -2.0]));
    }

    #[test]
    fn decoupled_system() {
        let path = integrate_rk4(|x| vec![1.0, -x[1]], &[0.0, 1.0], 2.0, 1e-3).unwrap();
        let x = final_point(&path);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn truncated_last_step_lands_on_t_end() {
        let path = integrate_rk4(|x| vec![-x[0]], &[1.0], 1.05, 0.1).unwrap();
        assert_eq!(path.len(), 12);
        assert_eq!(path.last().unwrap().0, 1.05);
        assert!((final_point(&path)[0] - (-1.05f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn halving_step_gains_fourth_order() {
        let err = |h: f64| {
            let p = integrate_rk4(|x| vec![-x[0]], &[1.0], 1.0, h).unwrap();
            (final_point(&p)[0] - (-1.0f64).exp()).abs()
        };
        for h in [0.2, 0.1, 0.05] {
            assert!(err(h) / err(h / 2.0) >= 8.0);
        }
    }

    #[test]
    fn non_finite_field_is_an_error() {
        let r = integrate_rk4(|_| vec![f64::NAN], &[0.0], 1.0, 0.1);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_horizon() {
        let p = integrate_rk4(|x| vec![-x[0]], &[1.0], 0.0, 0.1).unwrap();
        assert_eq!(p, vec![(0.0, vec![1.0])]);
    }
}
