//! Loss landscapes with value, gradient and Hessian access.

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, norm};
use crate::numerics::{sym_eigen, Matrix, RngState};

/// Relative eigengap below which the flat direction is considered undefined.
pub const GAP_TOL: f64 = 1e-9;

/// A twice-differentiable loss on `R^d`.
pub trait Landscape: Send + Sync {
    fn dim(&self) -> usize;

    fn label(&self) -> &str;

    fn value(&self, w: &[f64]) -> f64;

    fn gradient(&self, w: &[f64]) -> Vec<f64>;

    /// Hessian at `w`; central differences of the gradient unless overridden.
    fn hessian(&self, w: &[f64]) -> Matrix {
        let mut h = Matrix::zeros(self.dim());
        fd_hessian_into(self, w, default_fd_step(), &mut h);
        h
    }

    /// Closed-form projection onto the river, when one is known.
    fn river_projection(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// The constant river direction of a straight valley.
    fn fixed_river_direction(&self) -> Option<Vec<f64>> {
        None
    }

    /// Region inside which trajectories are expected to stay.
    fn default_region(&self) -> Region {
        Region::Unbounded
    }
}

/// `eps^(1/3)`, the central-difference step for first derivatives of the
/// gradient.
pub fn default_fd_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// `eps^(1/4)`, used when differencing Hessians for third-order probes.
pub fn third_order_fd_step() -> f64 {
    f64::EPSILON.powf(0.25)
}

/// A domain used to sample probe points and to detect escapes.
#[derive(Debug, Clone)]
pub enum Region {
    Unbounded,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Planar strip `x_lo ≤ x₁ ≤ x_hi`, `|x₂ − center(x₁)| ≤ half_width`.
    Band {
        x_lo: f64,
        x_hi: f64,
        half_width: f64,
        center: fn(f64) -> f64,
    },
}

impl Region {
    pub fn contains(&self, w: &[f64]) -> bool {
        match self {
            Region::Unbounded => w.iter().all(|x| x.is_finite()),
            Region::Box { lo, hi } => w
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= *l && *x <= *h),
            Region::Band {
                x_lo,
                x_hi,
                half_width,
                center,
            } => {
                w.len() == 2
                    && w[0] >= *x_lo
                    && w[0] <= *x_hi
                    && (w[1] - center(w[0])).abs() <= *half_width
            }
        }
    }

    pub fn sample(&self, rng: &mut RngState) -> Result<Vec<f64>> {
        match self {
            Region::Unbounded => Err(Error::InvalidArgument("cannot sample an unbounded region".into())),
            Region::Box { lo, hi } => Ok(lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.uniform())
                .collect()),
            Region::Band {
                x_lo,
                x_hi,
                half_width,
                center,
            } => {
                let x1 = x_lo + (x_hi - x_lo) * rng.uniform();
                let x2 = center(x1) + half_width * (2.0 * rng.uniform() - 1.0);
                Ok(vec![x1, x2])
            }
        }
    }

    /// Deterministic extreme points (box corners) added to random samples.
    pub fn probe_points(&self) -> Vec<Vec<f64>> {
        match self {
            Region::Box { lo, hi } if lo.len() <= 10 => {
                let d = lo.len();
                (0..(1usize << d))
                    .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

/// `L(x₁, x₂) = γx₂²/2 − x₁`; the river is the `x₁` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValley {
    pub gamma: f64,
}

impl QuadraticValley {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma}")));
        }
        Ok(Self { gamma })
    }
}

impl Landscape for QuadraticValley {
    fn dim(&self) -> usize {
        2
    }

    fn label(&self) -> &str {
        "quadratic_valley"
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.gamma * w[1] * w[1] / 2.0 - w[0]
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        vec![-1.0, self.gamma * w[1]]
    }

    fn hessian(&self, _w: &[f64]) -> Matrix {
        Matrix::from_diag(&[0.0, self.gamma])
    }

    fn river_projection(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(vec![w[0], 0.0])
    }

    fn fixed_river_direction(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0])
    }
}

/// `L(x₁, x₂) = (x₂ − sin x₁)² + 0.2·|10 − x₁|`.
///
/// The kink at `x₁ = 10` uses the zero subgradient.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SineRiver;

impl SineRiver {
    pub const SLOPE: f64 = 0.2;
    pub const KINK: f64 = 10.0;

    /// Box around the river that stays clear of the kink.
    pub fn tracking_region() -> Region {
        Region::Box {
            lo: vec![-1.0, -3.0],
            hi: vec![9.5, 3.0],
        }
    }

    /// Thin strip hugging the river, for constant estimation.
    pub fn river_band(x_lo: f64, x_hi: f64) -> Region {
        Region::Band {
            x_lo,
            x_hi,
            half_width: 0.06,
            center: f64::sin,
        }
    }
}

impl Landscape for SineRiver {
    fn dim(&self) -> usize {
        2
    }

    fn label(&self) -> &str {
        "sine_river"
    }

    fn value(&self, w: &[f64]) -> f64 {
        let e = w[1] - w[0].sin();
        e * e + Self::SLOPE * (Self::KINK - w[0]).abs()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let e = w[1] - w[0].sin();
        let c = w[0].cos();
        let kink = Self::KINK - w[0];
        let sub = if kink > 0.0 {
            1.0
        } else if kink < 0.0 {
            -1.0
        } else {
            0.0
        };
        vec![-2.0 * e * c - Self::SLOPE * sub, 2.0 * e]
    }

    fn hessian(&self, w: &[f64]) -> Matrix {
        let (s, c) = w[0].sin_cos();
        let e = w[1] - s;
        Matrix::from_rows(&[vec![2.0 * c * c + 2.0 * e * s, -2.0 * c], vec![-2.0 * c, 2.0]])
    }

    fn default_region(&self) -> Region {
        Self::tracking_region()
    }
}

/// `L = Σ_{i<d} γᵢxᵢ²/2 − c·x_d`; the river is the last coordinate axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StraightValley {
    pub gammas: Vec<f64>,
    pub slope: f64,
}

impl StraightValley {
    pub fn new(gammas: Vec<f64>, slope: f64) -> Result<Self> {
        if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidArgument("curvatures must be positive".into()));
        }
        if !(slope > 0.0) {
            return Err(Error::InvalidArgument(format!("slope = {slope}")));
        }
        Ok(Self { gammas, slope })
    }
}

impl Landscape for StraightValley {
    fn dim(&self) -> usize {
        self.gammas.len() + 1
    }

    fn label(&self) -> &str {
        "straight_valley"
    }

    fn value(&self, w: &[f64]) -> f64 {
        let d = self.gammas.len();
        let hill: f64 = self.gammas.iter().zip(w).map(|(g, x)| g * x * x / 2.0).sum();
        hill - self.slope * w[d]
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.gammas.iter().zip(w).map(|(g, x)| g * x).collect();
        g.push(-self.slope);
        g
    }

    fn hessian(&self, _w: &[f64]) -> Matrix {
        let mut diag = self.gammas.clone();
        diag.push(0.0);
        Matrix::from_diag(&diag)
    }

    fn river_projection(&self, w: &[f64]) -> Option<Vec<f64>> {
        let mut p = vec![0.0; w.len()];
        p[w.len() - 1] = w[w.len() - 1];
        Some(p)
    }

    fn fixed_river_direction(&self) -> Option<Vec<f64>> {
        let mut v = vec![0.0; self.dim()];
        v[self.dim() - 1] = 1.0;
        Some(v)
    }
}

/// Central-difference gradient of `value`, used to audit analytic gradients.
pub fn fd_gradient<L: Landscape + ?Sized>(l: &L, w: &[f64]) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            let h = default_fd_step() * w[i].abs().max(1.0);
            x[i] = w[i] + h;
            let up = l.value(&x);
            x[i] = w[i] - h;
            let down = l.value(&x);
            x[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian from gradients, symmetrized as `(H + Hᵀ)/2`.
///
/// The step along coordinate `i` is `h·max(1, |wᵢ|)`.
pub fn fd_hessian<L: Landscape + ?Sized>(l: &L, w: &[f64], h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step {h}")));
    }
    let mut out = Matrix::zeros(w.len());
    fd_hessian_into(l, w, h, &mut out);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFinite("finite-difference Hessian".into()))
    }
}

fn fd_hessian_into<L: Landscape + ?Sized>(l: &L, w: &[f64], h: f64, out: &mut Matrix) {
    let n = w.len();
    let mut x = w.to_vec();
    for j in 0..n {
        let step = h * w[j].abs().max(1.0);
        x[j] = w[j] + step;
        let up = l.gradient(&x);
        x[j] = w[j] - step;
        let down = l.gradient(&x);
        x[j] = w[j];
        for i in 0..n {
            out[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    out.symmetrize();
}

/// Flattest Hessian direction at a point, sign-aligned so that `⟨v, ∇L⟩ ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatDirection {
    pub v: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_next: f64,
    pub op_norm: f64,
    pub gradient: Vec<f64>,
}

impl FlatDirection {
    pub fn gap(&self) -> f64 {
        self.lambda_next - self.lambda_min
    }
}

pub fn flat_direction<L: Landscape + ?Sized>(l: &L, w: &[f64]) -> Result<FlatDirection> {
    if l.dim() < 2 {
        return Err(Error::InvalidArgument("river needs dimension >= 2".into()));
    }
    let eig = sym_eigen(&l.hessian(w))?;
    let d = eig.dim();
    let lambda_min = eig.values[d - 1];
    let lambda_next = eig.values[d - 2];
    let op_norm = eig.values[0].abs().max(lambda_min.abs());
    let gap = lambda_next - lambda_min;
    if !(gap > GAP_TOL * op_norm.max(1.0)) {
        return Err(Error::EigengapCollapse { gap });
    }
    let gradient = l.gradient(w);
    let mut v = eig.smallest_vector();
    if dot(&v, &gradient) < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(FlatDirection {
        v,
        lambda_min,
        lambda_next,
        op_norm,
        gradient,
    })
}

/// Empirical estimates of the landscape's regularity constants on a region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityConstants {
    /// Eigengap floor `min λ_{d−1} − 4·max|λ_d|`, clamped at 0.
    pub gamma: f64,
    /// `max |λ_d|`
    pub flat_gamma: f64,
    /// `max ‖∇²L‖_op`
    pub max_gamma: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub grad_hi: f64,
    pub grad_lo: f64,
    pub rho: f64,
    pub tau: f64,
    pub loss_cap: f64,
    /// Minimal neighbourhood radius `10·grad_hi/gamma`.
    pub radius: f64,
    pub sigma: f64,
    pub delta: f64,
    /// Horizon `10·ln(2·grad_hi/(kappa·grad_lo))/gamma`.
    pub t_max: f64,
    pub samples: usize,
    pub certified: bool,
    pub notes: Vec<String>,
}

impl RegularityConstants {
    pub fn with_noise(mut self, sigma: f64, delta: f64) -> Self {
        self.sigma = sigma;
        self.delta = delta;
        self
    }
}

fn random_unit(dim: usize, rng: &mut RngState) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = norm(&z);
        if n > 1e-12 {
            return z.into_iter().map(|x| x / n).collect();
        }
    }
}

fn op_norm_sym(m: &Matrix) -> Result<f64> {
    let e = sym_eigen(m)?;
    Ok(e.values.iter().fold(0.0f64, |a, v| a.max(v.abs())))
}

/// Samples `samples` points of `region` (plus its corners, for boxes) and
/// records spectral, gradient and spin statistics.
pub fn estimate_constants<L: Landscape + ?Sized>(
    l: &L,
    region: &Region,
    samples: usize,
    rng: &mut RngState,
) -> Result<RegularityConstants> {
    if samples < 10 {
        return Err(Error::InvalidArgument(format!("need >= 10 samples, got {samples}")));
    }
    let d = l.dim();
    if d < 2 {
        return Err(Error::InvalidArgument("dimension must be >= 2".into()));
    }
    let mut points = region.probe_points();
    for _ in 0..samples {
        points.push(region.sample(rng)?);
    }

    let mut min_next = f64::INFINITY;
    let mut flat_gamma = 0.0f64;
    let mut max_gamma = 0.0f64;
    let mut tau = 0.0f64;
    let mut grad_hi = 0.0f64;
    let mut grad_lo = f64::INFINITY;
    let mut loss_cap = f64::NEG_INFINITY;
    let mut max_spin = 0.0f64;
    let mut rho = 0.0f64;
    let mut collapsed = 0usize;
    let mut notes = Vec::new();

    for w in &points {
        let h = l.hessian(w);
        let eig = sym_eigen(&h)?;
        let lam_d = eig.values[d - 1];
        let lam_next = eig.values[d - 2];
        min_next = min_next.min(lam_next);
        flat_gamma = flat_gamma.max(lam_d.abs());
        max_gamma = max_gamma.max(eig.values[0].abs().max(lam_d.abs()));
        tau = tau.max(eig.values.iter().map(|v| v.abs()).sum());
        let g = norm(&l.gradient(w));
        grad_hi = grad_hi.max(g);
        grad_lo = grad_lo.min(g);
        loss_cap = loss_cap.max(l.value(w));

        if !(lam_next - lam_d > GAP_TOL * eig.values[0].abs().max(1.0)) {
            collapsed += 1;
            continue;
        }
        let v = eig.smallest_vector();
        let u = random_unit(d, rng);
        let step = default_fd_step() * norm(w).max(1.0);
        let shifted: Vec<f64> = w.iter().zip(&u).map(|(x, ui)| x + step * ui).collect();
        let eig_s = sym_eigen(&l.hessian(&shifted))?;
        let mut vs = eig_s.smallest_vector();
        if dot(&vs, &v) < 0.0 {
            vs.iter_mut().for_each(|x| *x = -*x);
        }
        let spin = vs.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
        max_spin = max_spin.max(spin);

        let step3 = third_order_fd_step() * norm(w).max(1.0);
        let up: Vec<f64> = w.iter().zip(&u).map(|(x, ui)| x + step3 * ui).collect();
        let down: Vec<f64> = w.iter().zip(&u).map(|(x, ui)| x - step3 * ui).collect();
        let hu = l.hessian(&up);
        let hd = l.hessian(&down);
        let mut diff = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                diff[(i, j)] = (hu[(i, j)] - hd[(i, j)]) / (2.0 * step3);
            }
        }
        diff.symmetrize();
        rho = rho.max(op_norm_sym(&diff)?);
    }

    let gamma = (min_next - 4.0 * flat_gamma).max(0.0);
    if collapsed > 0 {
        notes.push(format!("eigengap collapse at {collapsed} of {} points", points.len()));
    }
    if gamma == 0.0 {
        notes.push("no positive eigengap floor on the region".into());
    }
    let certified = collapsed == 0 && gamma > 0.0;
    let kappa = if gamma > 0.0 {
        max_spin * 2.0 * grad_hi / gamma
    } else {
        f64::INFINITY
    };
    let kappa_prime = if gamma > 0.0 {
        grad_hi * rho / (gamma * gamma)
    } else {
        f64::INFINITY
    };
    let radius = if gamma > 0.0 { 10.0 * grad_hi / gamma } else { f64::INFINITY };
    let t_max = if gamma > 0.0 && kappa > 0.0 && grad_lo > 0.0 {
        10.0 * (2.0 * grad_hi / (kappa * grad_lo)).ln().max(0.0) / gamma
    } else {
        f64::INFINITY
    };
    Ok(RegularityConstants {
        gamma,
        flat_gamma,
        max_gamma,
        kappa,
        kappa_prime,
        grad_hi,
        grad_lo,
        rho,
        tau,
        loss_cap,
        radius,
        sigma: 0.0,
        delta: 0.0,
        t_max,
        samples: points.len(),
        certified,
        notes,
    })
}
