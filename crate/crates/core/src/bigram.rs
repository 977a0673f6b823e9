//! Synthetic city → name language with a softmax bigram model.
//!
//! City `i` emits name `j` with probability `P[i][j]`. The model has one logit
//! row per city, `Q_i = softmax(Θ_i)`, and the population loss is the average
//! per-city cross-entropy `ℓ_i = −Σ_j P_ij log Q_ij`.

use std::fmt::Write as _;
use std::str::FromStr;

use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::numerics::stats::pairwise_sum;
use crate::numerics::{spearman, sym_eigen, Matrix, RngState};
use crate::schedules::ScheduleTable;
use crate::fmt_f64;

/// Deterministic rows are resampled until their entropy is below this.
pub const DETERMINISTIC_MAX_ENTROPY: f64 = 0.2;
/// Stochastic rows are resampled until their entropy is above this.
pub const STOCHASTIC_MIN_ENTROPY: f64 = 1.0;
pub const DETERMINISTIC_ALPHA: f64 = 0.05;
pub const STOCHASTIC_ALPHA: f64 = 5.0;
/// Floor applied to generated probabilities before renormalizing.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CityClass {
    Deterministic,
    Stochastic,
}

impl CityClass {
    pub fn name(self) -> &'static str {
        match self {
            CityClass::Deterministic => "deterministic",
            CityClass::Stochastic => "stochastic",
        }
    }
}

impl FromStr for CityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(CityClass::Deterministic),
            "stochastic" => Ok(CityClass::Stochastic),
            other => Err(Error::Config(format!("unknown city class `{other}`"))),
        }
    }
}

/// Row-stochastic emission table; stochastic cities come first.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramSpec {
    pub n: usize,
    pub m: usize,
    /// Row-major `n × m`.
    pub p: Vec<f64>,
    pub class: Vec<CityClass>,
    pub n_prime: usize,
}

impl BigramSpec {
    pub fn from_rows(rows: Vec<Vec<f64>>, class: Vec<CityClass>, n_prime: usize) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m < 2 {
            return Err(Error::InvalidArgument("need n >= 1 cities and m >= 2 names".into()));
        }
        if class.len() != n {
            return Err(Error::LengthMismatch { left: class.len(), right: n });
        }
        let mut p = Vec::with_capacity(n * m);
        for row in &rows {
            if row.len() != m {
                return Err(Error::LengthMismatch { left: row.len(), right: m });
            }
            p.extend_from_slice(row);
        }
        let spec = Self { n, m, p, class, n_prime };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidArgument(format!("row {i} has a non-positive entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
            }
        }
        if self.n_prime > self.n {
            return Err(Error::InvalidArgument("n_prime exceeds n".into()));
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.m..(i + 1) * self.m]
    }

    pub fn entropies(&self) -> Vec<f64> {
        (0..self.n).map(|i| entropy(self.row(i))).collect()
    }

    /// `(1/n) Σ_i H(P_i)`, the global minimum of the population loss.
    pub fn entropy_floor(&self) -> f64 {
        pairwise_sum(&self.entropies()) / self.n as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("n = {}\nm = {}\nn_prime = {}\n", self.n, self.m, self.n_prime);
        for i in 0..self.n {
            s.push_str(self.class[i].name());
            for x in self.row(i) {
                let _ = write!(s, " {x:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| Error::Config(format!("missing `{key}`")))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed header `{line}`")))?;
            if k.trim() != key {
                return Err(Error::Config(format!("expected `{key}`, found `{}`", k.trim())));
            }
            v.trim().parse().map_err(|e| Error::Config(format!("{key}: {e}")))
        };
        let n = header("n")?;
        let m = header("m")?;
        let n_prime = header("n_prime")?;
        let mut rows = Vec::with_capacity(n);
        let mut class = Vec::with_capacity(n);
        for line in lines {
            let mut fields = line.split_whitespace();
            class.push(fields.next().unwrap_or_default().parse()?);
            let row = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::Config(format!("row {}: {e}", rows.len()))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::LengthMismatch { left: rows.len(), right: n });
        }
        let spec = Self::from_rows(rows, class, n_prime)?;
        if spec.m != m {
            return Err(Error::LengthMismatch { left: spec.m, right: m });
        }
        Ok(spec)
    }
}

pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Gini impurity `1 − Σ_j p_j²`.
pub fn gini(row: &[f64]) -> f64 {
    1.0 - row.iter().map(|p| p * p).sum::<f64>()
}

fn dirichlet_row(m: usize, alpha: f64, rng: &mut RngState) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut row: Vec<f64> = (0..m).map(|_| g.sample(rng)).collect();
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|x| *x /= s);
    }
    row.iter_mut().for_each(|x| *x = x.max(PROB_FLOOR));
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    row
}

/// Draws `n_stochastic` high-entropy rows followed by `n_deterministic`
/// low-entropy rows, resampling each until it meets its entropy threshold.
pub fn gen_spec(n_deterministic: usize, n_stochastic: usize, m: usize, rng: &mut RngState) -> Result<BigramSpec> {
    if m < 2 {
        return Err(Error::InvalidArgument("m must be >= 2".into()));
    }
    if (m as f64).ln() <= STOCHASTIC_MIN_ENTROPY {
        return Err(Error::InvalidArgument(format!("m = {m} cannot reach entropy {STOCHASTIC_MIN_ENTROPY}")));
    }
    let mut rows = Vec::with_capacity(n_deterministic + n_stochastic);
    let mut class = Vec::with_capacity(rows.capacity());
    for _ in 0..n_stochastic {
        loop {
            let r = dirichlet_row(m, STOCHASTIC_ALPHA, rng);
            if entropy(&r) > STOCHASTIC_MIN_ENTROPY {
                rows.push(r);
                break;
            }
        }
        class.push(CityClass::Stochastic);
    }
    for _ in 0..n_deterministic {
        loop {
            let r = dirichlet_row(m, DETERMINISTIC_ALPHA, rng);
            if entropy(&r) < DETERMINISTIC_MAX_ENTROPY {
                rows.push(r);
                break;
            }
        }
        class.push(CityClass::Deterministic);
    }
    BigramSpec::from_rows(rows, class, n_stochastic)
}

/// Logits `Θ`, row-major `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    pub n: usize,
    pub m: usize,
    pub theta: Vec<f64>,
}

impl BigramModel {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, theta: vec![0.0; n * m] }
    }

    /// `Θ = log P`, so that `Q = P`.
    pub fn matching(spec: &BigramSpec) -> Self {
        Self {
            n: spec.n,
            m: spec.m,
            theta: spec.p.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn logits(&self, i: usize) -> &[f64] {
        &self.theta[i * self.m..(i + 1) * self.m]
    }

    pub fn probs(&self, i: usize) -> Vec<f64> {
        softmax(self.logits(i))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + logits.iter().map(|z| (z - mx).exp()).sum::<f64>().ln()
}

fn check_shapes(spec: &BigramSpec, model: &BigramModel) -> Result<()> {
    if spec.n != model.n || spec.m != model.m || model.theta.len() != spec.n * spec.m {
        return Err(Error::LengthMismatch {
            left: model.theta.len(),
            right: spec.n * spec.m,
        });
    }
    Ok(())
}

/// Unscaled per-city cross-entropy `ℓ_i`.
pub fn city_loss(spec: &BigramSpec, model: &BigramModel, i: usize) -> f64 {
    let z = model.logits(i);
    let lse = log_sum_exp(z);
    -spec.row(i).iter().zip(z).map(|(p, zj)| p * (zj - lse)).sum::<f64>()
}

pub fn city_losses(spec: &BigramSpec, model: &BigramModel) -> Result<Vec<f64>> {
    check_shapes(spec, model)?;
    if model.theta.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok((0..spec.n).map(|i| city_loss(spec, model, i)).collect())
}

pub fn population_loss(spec: &BigramSpec, model: &BigramModel) -> Result<f64> {
    Ok(pairwise_sum(&city_losses(spec, model)?) / spec.n as f64)
}

/// `∂L/∂Θ_ij = (Q_ij − P_ij)/n`.
pub fn population_grad(spec: &BigramSpec, model: &BigramModel) -> Result<Vec<f64>> {
    check_shapes(spec, model)?;
    let inv_n = 1.0 / spec.n as f64;
    let mut g = Vec::with_capacity(spec.n * spec.m);
    for i in 0..spec.n {
        let q = model.probs(i);
        g.extend(q.iter().zip(spec.row(i)).map(|(q, p)| (q - p) * inv_n));
    }
    Ok(g)
}

/// Per-city Hessian block `diag(q) − qqᵀ`, before the `1/n` averaging.
pub fn block_hessian(q: &[f64]) -> Matrix {
    let m = q.len();
    let mut h = Matrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] = if i == j { q[i] } else { 0.0 } - q[i] * q[j];
        }
    }
    h
}

fn sample_name(row: &[f64], rng: &mut RngState) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}

/// One SGD step on the mean NLL of `batch` sampled `(city, name)` pairs.
pub fn sample_and_step(spec: &BigramSpec, model: &mut BigramModel, lr: f64, batch: usize, rng: &mut RngState) -> Result<()> {
    check_shapes(spec, model)?;
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    let m = spec.m;
    let mut grad: Vec<(usize, Vec<f64>)> = Vec::with_capacity(batch);
    let scale = 1.0 / batch as f64;
    for _ in 0..batch {
        let i = rng.index(spec.n);
        let j = sample_name(spec.row(i), rng);
        let mut g = model.probs(i);
        g[j] -= 1.0;
        grad.push((i, g));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (i, g) in grad {
        for (z, gj) in model.theta[i * m..(i + 1) * m].iter_mut().zip(g) {
            *z -= lr * scale * gj;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub batch: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Steps at which a copy of the model is kept.
    pub checkpoints: Vec<usize>,
    pub loss_cap: f64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        Self {
            batch: 64,
            seed: 0,
            eval_every: 100,
            checkpoints: Vec::new(),
            loss_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub step: usize,
    pub lr: Option<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: BigramModel,
    pub curve: Vec<CurvePoint>,
    pub city_losses: Vec<f64>,
    pub checkpoints: Vec<(usize, BigramModel)>,
}

impl TrainResult {
    pub fn final_loss(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |c| c.loss)
    }

    pub fn checkpoint(&self, step: usize) -> Option<&BigramModel> {
        self.checkpoints.iter().find(|(s, _)| *s == step).map(|(_, m)| m)
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,lr,loss\n");
        for c in &self.curve {
            let _ = writeln!(s, "{},{},{}", c.step, c.lr.map(fmt_f64).unwrap_or_default(), fmt_f64(c.loss));
        }
        s
    }
}

/// Trains from zero logits with one sampled step per schedule entry.
///
/// The loss curve is evaluated every `eval_every` steps and at the end.
pub fn train(spec: &BigramSpec, schedule: &ScheduleTable, opts: &TrainOpts) -> Result<TrainResult> {
    if opts.eval_every == 0 {
        return Err(Error::InvalidArgument("eval_every must be >= 1".into()));
    }
    let mut rng = RngState::new(opts.seed, 0);
    let mut model = BigramModel::zeros(spec.n, spec.m);
    let mut curve = Vec::new();
    let mut checkpoints = Vec::new();
    let steps = schedule.len();
    for k in 0..=steps {
        let lr = schedule.lrs.get(k).copied();
        if k % opts.eval_every == 0 || k == steps {
            let loss = population_loss(spec, &model)?;
            if !(loss <= opts.loss_cap) {
                return Err(Error::Divergence { step: k, loss });
            }
            curve.push(CurvePoint { step: k, lr, loss });
        }
        if opts.checkpoints.contains(&k) {
            checkpoints.push((k, model.clone()));
        }
        if let Some(lr) = lr {
            sample_and_step(spec, &mut model, lr, opts.batch, &mut rng)?;
        }
    }
    let city_losses = city_losses(spec, &model)?;
    Ok(TrainResult {
        model,
        curve,
        city_losses,
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub deterministic: usize,
    pub stochastic: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    pub loss_stable: Vec<f64>,
    pub loss_decay: Vec<f64>,
    /// `ℓ_i(stable) − ℓ_i(decay)`
    pub deltas: Vec<f64>,
    pub entropies: Vec<f64>,
    /// `None` when the deltas (or entropies) are constant.
    pub spearman: Option<f64>,
    pub histogram: Vec<HistogramBin>,
}

impl DeltaReport {
    pub fn to_csv(&self, spec: &BigramSpec) -> String {
        let mut s = String::from("city,class,entropy,gini,loss_stable,loss_decay,delta\n");
        for i in 0..spec.n {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{}",
                spec.class[i].name(),
                fmt_f64(self.entropies[i]),
                fmt_f64(gini(spec.row(i))),
                fmt_f64(self.loss_stable[i]),
                fmt_f64(self.loss_decay[i]),
                fmt_f64(self.deltas[i])
            );
        }
        s
    }

    pub fn mean_delta(&self, spec: &BigramSpec, class: CityClass) -> f64 {
        let v: Vec<f64> = (0..spec.n).filter(|&i| spec.class[i] == class).map(|i| self.deltas[i]).collect();
        pairwise_sum(&v) / v.len().max(1) as f64
    }
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn loss_delta_analysis(spec: &BigramSpec, stable: &BigramModel, decay: &BigramModel) -> Result<DeltaReport> {
    let loss_stable = city_losses(spec, stable)?;
    let loss_decay = city_losses(spec, decay)?;
    let deltas: Vec<f64> = loss_stable.iter().zip(&loss_decay).map(|(a, b)| a - b).collect();
    let entropies = spec.entropies();
    let spearman = match spearman(&deltas, &entropies) {
        Ok(r) => Some(r),
        Err(Error::ConstantInput) => None,
        Err(e) => return Err(e),
    };
    let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            deterministic: 0,
            stochastic: 0,
        })
        .collect();
    for (i, d) in deltas.iter().enumerate() {
        let b = (((d - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        match spec.class[i] {
            CityClass::Deterministic => histogram[b].deterministic += 1,
            CityClass::Stochastic => histogram[b].stochastic += 1,
        }
    }
    Ok(DeltaReport {
        loss_stable,
        loss_decay,
        deltas,
        entropies,
        spearman,
        histogram,
    })
}

/// Measured quantities of the generalized-river check.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedRiverReport {
    pub gamma_p: f64,
    /// Largest `|∂L/∂Θ_ij|` over stochastic cities.
    pub stochastic_grad_max: f64,
    /// Smallest nonzero eigenvalue over stochastic blocks.
    pub stochastic_min_eig: f64,
    /// Largest eigenvalue over deterministic blocks.
    pub deterministic_max_eig: f64,
    /// Norm of the gradient's component on eigenvectors above `2γ_P`.
    pub sharp_grad_norm: f64,
    /// Count of block eigenvalues at or below `2γ_P`. When the check passes this
    /// is `n′ + (n − n′)·m`: one null direction per fitted stochastic block and
    /// every direction of a deterministic block.
    pub flat_dim: usize,
}

impl GeneralizedRiverReport {
    pub fn grad_ok(&self) -> bool {
        self.stochastic_grad_max <= 1e-10
    }

    pub fn stochastic_ok(&self) -> bool {
        self.stochastic_min_eig > 8.0 * self.gamma_p
    }

    pub fn deterministic_ok(&self) -> bool {
        self.deterministic_max_eig < 2.0 * self.gamma_p
    }

    pub fn projection_ok(&self) -> bool {
        self.sharp_grad_norm <= 1e-8
    }

    pub fn passed(&self) -> bool {
        self.grad_ok() && self.stochastic_ok() && self.deterministic_ok() && self.projection_ok()
    }
}

/// Checks the generalized-river structure for a layout where the first
/// `n_prime` cities are spread out and fitted exactly, and the rest are
/// nearly deterministic.
///
/// Blocks are the unscaled `diag(q) − qqᵀ`.
pub fn generalized_river_check(spec: &BigramSpec, model: &BigramModel, gamma_p: f64) -> Result<GeneralizedRiverReport> {
    check_shapes(spec, model)?;
    if !(gamma_p > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma_p = {gamma_p}")));
    }
    let np = spec.n_prime;
    for i in 0..spec.n {
        let p = spec.row(i);
        let q = model.probs(i);
        if i < np {
            if let Some(x) = p.iter().find(|x| !(**x > 8.0 * gamma_p)) {
                return Err(Error::Precondition(format!("city {i}: P = {x} not above 8γ_P")));
            }
            if q.iter().zip(p).any(|(a, b)| (a - b).abs() > 1e-12) {
                return Err(Error::Precondition(format!("city {i}: model does not match P")));
            }
        } else {
            let (j, pmax) = argmax(p);
            if !(pmax > 1.0 - gamma_p) {
                return Err(Error::Precondition(format!("city {i}: no dominant name")));
            }
            if !(q[j] > 1.0 - gamma_p) {
                return Err(Error::Precondition(format!("city {i}: model mass {} on its dominant name", q[j])));
            }
        }
    }
    let grad = population_grad(spec, model)?;
    let m = spec.m;
    let mut stochastic_grad_max = 0.0f64;
    let mut stochastic_min_eig = f64::INFINITY;
    let mut deterministic_max_eig = 0.0f64;
    let mut sharp2 = 0.0;
    let mut flat_dim = 0;
    for i in 0..spec.n {
        let g = &grad[i * m..(i + 1) * m];
        let eig = sym_eigen(&block_hessian(&model.probs(i)))?;
        if i < np {
            stochastic_grad_max = g.iter().fold(stochastic_grad_max, |a, x| a.max(x.abs()));
            stochastic_min_eig = stochastic_min_eig.min(eig.values[m - 2]);
        } else {
            deterministic_max_eig = deterministic_max_eig.max(eig.values[0]);
        }
        for (k, lam) in eig.values.iter().enumerate() {
            if *lam > 2.0 * gamma_p {
                let v = eig.vector(k);
                let c: f64 = v.iter().zip(g).map(|(a, b)| a * b).sum();
                sharp2 += c * c;
            } else {
                flat_dim += 1;
            }
        }
    }
    if np == 0 {
        stochastic_min_eig = f64::INFINITY;
    }
    Ok(GeneralizedRiverReport {
        gamma_p,
        stochastic_grad_max,
        stochastic_min_eig,
        deterministic_max_eig,
        sharp_grad_norm: sharp2.sqrt(),
        flat_dim,
    })
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, x)| if x > a.1 { (i, x) } else { a })
}

/// The population loss as a [`Landscape`] over flattened logits.
#[derive(Debug, Clone)]
pub struct BigramLandscape {
    pub spec: BigramSpec,
}

impl BigramLandscape {
    fn model(&self, w: &[f64]) -> BigramModel {
        BigramModel {
            n: self.spec.n,
            m: self.spec.m,
            theta: w.to_vec(),
        }
    }
}

impl Landscape for BigramLandscape {
    fn dim(&self) -> usize {
        self.spec.n * self.spec.m
    }

    fn label(&self) -> &str {
        "bigram"
    }

    fn value(&self, w: &[f64]) -> f64 {
        population_loss(&self.spec, &self.model(w)).unwrap_or(f64::NAN)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        population_grad(&self.spec, &self.model(w)).unwrap_or_else(|_| vec![f64::NAN; w.len()])
    }

    /// Dense block-diagonal Hessian with blocks `(diag(q_i) − q_i q_iᵀ)/n`.
    fn hessian(&self, w: &[f64]) -> Matrix {
        let (n, m) = (self.spec.n, self.spec.m);
        let model = self.model(w);
        let mut h = Matrix::zeros(n * m);
        for i in 0..n {
            let b = block_hessian(&model.probs(i));
            for r in 0..m {
                for c in 0..m {
                    h[(i * m + r, i * m + c)] = b[(r, c)] / n as f64;
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::fd_hessian;
    use crate::schedules::ScheduleSpec;

    fn small_spec(seed: u64) -> BigramSpec {
        gen_spec(4, 4, 5, &mut RngState::new(seed, 0)).unwrap()
    }

    fn random_model(spec: &BigramSpec, seed: u64) -> BigramModel {
        let mut rng = RngState::new(seed, 1);
        BigramModel {
            n: spec.n,
            m: spec.m,
            theta: (0..spec.n * spec.m).map(|_| 2.0 * rng.normal()).collect(),
        }
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0.0, 1.0, 0.0]), 0.0);
        assert!((gini(&[0.1; 10]) - 0.9).abs() < 1e-15);
        assert_eq!(gini(&[0.5, 0.5]), 0.5);
    }

    #[test]
    fn generated_rows_meet_thresholds() {
        let spec = gen_spec(50, 50, 10, &mut RngState::new(2, 0)).unwrap();
        assert_eq!(spec.n_prime, 50);
        for i in 0..spec.n {
            let h = entropy(spec.row(i));
            match spec.class[i] {
                CityClass::Stochastic => assert!(h > 1.0 && i < 50),
                CityClass::Deterministic => assert!(h < 0.2 && i >= 50),
            }
            assert!((spec.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(spec.row(i).iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn loss_at_matched_model_is_entropy() {
        let spec = small_spec(1);
        let l = population_loss(&spec, &BigramModel::matching(&spec)).unwrap();
        assert!((l - spec.entropy_floor()).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_loss_is_log_m() {
        let spec = BigramSpec::from_rows(vec![vec![1.0 - 1e-12, 1e-12]], vec![CityClass::Deterministic], 0).unwrap();
        let l = population_loss(&spec, &BigramModel::zeros(1, 2)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_is_shift_invariant_per_row() {
        let spec = small_spec(3);
        let mut model = random_model(&spec, 3);
        let before = population_loss(&spec, &model).unwrap();
        model.theta[spec.m..2 * spec.m].iter_mut().for_each(|z| *z += 7.5);
        assert!((population_loss(&spec, &model).unwrap() - before).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = small_spec(4);
        for seed in 0..10 {
            let model = random_model(&spec, seed);
            let g = population_grad(&spec, &model).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let h = 1e-5;
                let mut up = model.clone();
                up.theta[k] += h;
                let mut down = model.clone();
                down.theta[k] -= h;
                let fd = (population_loss(&spec, &up).unwrap() - population_loss(&spec, &down).unwrap()) / (2.0 * h);
                assert!((fd - gk).abs() <= 1e-6 * gk.abs().max(1e-4), "{fd} vs {gk}");
            }
            for i in 0..spec.n {
                assert!(g[i * spec.m..(i + 1) * spec.m].iter().sum::<f64>().abs() < 1e-15);
            }
        }
        let at_min = population_grad(&spec, &BigramModel::matching(&spec)).unwrap();
        assert!(at_min.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn hessian_is_block_diagonal() {
        let spec = gen_spec(2, 2, 3, &mut RngState::new(8, 0)).unwrap();
        let land = BigramLandscape { spec: spec.clone() };
        let w = random_model(&spec, 8).theta;
        let fd = fd_hessian(&land, &w, 1e-5).unwrap();
        let exact = land.hessian(&w);
        let m = spec.m;
        for r in 0..land.dim() {
            for c in 0..land.dim() {
                if r / m != c / m {
                    assert!(fd[(r, c)].abs() <= 1e-8);
                }
                assert!((fd[(r, c)] - exact[(r, c)]).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn block_hessian_examples() {
        assert_eq!(block_hessian(&[0.0, 1.0, 0.0]), Matrix::zeros(3));
        let h = block_hessian(&[0.5, 0.5]);
        assert_eq!(h, Matrix::from_rows(&[vec![0.25, -0.25], vec![-0.25, 0.25]]));
        assert_eq!(h.trace(), 0.5);
    }

    #[test]
    fn block_hessian_is_psd_with_null_q() {
        let mut rng = RngState::new(21, 0);
        for _ in 0..50 {
            let q = dirichlet_row(6, 1.0, &mut rng);
            let h = block_hessian(&q);
            assert!((h.trace() - gini(&q)).abs() <= 1e-12);
            let ones = h.mul_vec(&[1.0; 6]);
            assert!(ones.iter().all(|x| x.abs() < 1e-15));
            let e = sym_eigen(&h).unwrap();
            assert!(e.smallest() > -1e-14);
        }
    }

    #[test]
    fn large_batch_step_follows_population_gradient() {
        let spec = small_spec(5);
        let model = random_model(&spec, 5);
        let mut stepped = model.clone();
        sample_and_step(&spec, &mut stepped, 1.0, 100_000, &mut RngState::new(6, 0)).unwrap();
        let g = population_grad(&spec, &model).unwrap();
        let update: Vec<f64> = stepped.theta.iter().zip(&model.theta).map(|(a, b)| b - a).collect();
        let num: f64 = update.iter().zip(&g).map(|(u, gi)| (u - gi).powi(2)).sum::<f64>().sqrt();
        let den: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(num / den < 0.02, "relative error {}", num / den);
    }

    #[test]
    fn step_edge_cases() {
        let spec = small_spec(6);
        let model = random_model(&spec, 6);
        let mut same = model.clone();
        sample_and_step(&spec, &mut same, 0.0, 32, &mut RngState::new(1, 0)).unwrap();
        assert_eq!(same, model);
        let mut a = model.clone();
        let mut b = model.clone();
        sample_and_step(&spec, &mut a, 0.5, 32, &mut RngState::new(1, 0)).unwrap();
        sample_and_step(&spec, &mut b, 0.5, 32, &mut RngState::new(1, 0)).unwrap();
        assert_eq!(a, b);
        assert!(sample_and_step(&spec, &mut a, 0.5, 0, &mut RngState::new(1, 0)).is_err());
    }

    #[test]
    fn training_respects_entropy_floor() {
        let spec = gen_spec(20, 20, 10, &mut RngState::new(7, 0)).unwrap();
        let table = ScheduleSpec::constant(5.0, 2000).build_table().unwrap();
        let r = train(&spec, &table, &TrainOpts { batch: 16, ..TrainOpts::default() }).unwrap();
        let floor = spec.entropy_floor();
        assert!(r.curve.iter().all(|c| c.loss >= floor));
        assert!(r.final_loss() < r.curve[0].loss);
        let flat = ScheduleSpec::constant(0.0, 500).build_table().unwrap();
        let r = train(&spec, &flat, &TrainOpts::default()).unwrap();
        assert!(r.curve.iter().all(|c| c.loss == r.curve[0].loss));
    }

    #[test]
    fn delta_analysis_of_identical_models() {
        let spec = small_spec(9);
        let model = random_model(&spec, 9);
        let r = loss_delta_analysis(&spec, &model, &model).unwrap();
        assert!(r.deltas.iter().all(|d| *d == 0.0));
        assert_eq!(r.spearman, None);
        for i in 0..spec.n {
            assert!((r.loss_stable[i] - city_loss(&spec, &model, i)).abs() <= 1e-12);
        }
        assert_eq!(r.histogram.iter().map(|b| b.deterministic + b.stochastic).sum::<usize>(), spec.n);
        assert!(r.to_csv(&spec).starts_with("city,class,entropy,gini,loss_stable,loss_decay,delta\n"));
    }

    fn assumption_p_spec() -> BigramSpec {
        let mut rows = Vec::new();
        let mut class = Vec::new();
        for i in 0..5 {
            let e = 0.01 * (i as f64 - 2.0);
            rows.push(vec![0.25 + e, 0.25 - e, 0.25 + e / 2.0, 0.25 - e / 2.0]);
            class.push(CityClass::Stochastic);
        }
        for i in 0..5 {
            let mut r = vec![0.001; 4];
            r[i % 4] = 0.997;
            rows.push(r);
            class.push(CityClass::Deterministic);
        }
        BigramSpec::from_rows(rows, class, 5).unwrap()
    }

    #[test]
    fn generalized_river_on_constructed_spec() {
        let spec = assumption_p_spec();
        let r = generalized_river_check(&spec, &BigramModel::matching(&spec), 0.01).unwrap();
        assert!(r.grad_ok() && r.stochastic_ok() && r.deterministic_ok() && r.projection_ok(), "{r:?}");
        assert_eq!(r.flat_dim, 5 * 4 + 5 * 4 - 5 * 3);
        let dom = sym_eigen(&block_hessian(&[0.997, 0.001, 0.001, 0.001])).unwrap();
        assert!(dom.values[0] <= 1.0 - 0.99f64.powi(2) && dom.values[0] < 0.02);
    }

    #[test]
    fn generalized_river_all_stochastic() {
        let rows = vec![vec![0.3, 0.3, 0.4]; 4];
        let spec = BigramSpec::from_rows(rows, vec![CityClass::Stochastic; 4], 4).unwrap();
        let model = BigramModel::matching(&spec);
        assert!(generalized_river_check(&spec, &model, 0.01).unwrap().passed());
        assert!(population_grad(&spec, &model).unwrap().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn generalized_river_preconditions() {
        let spec = assumption_p_spec();
        let zeros = BigramModel::zeros(spec.n, spec.m);
        assert!(matches!(generalized_river_check(&spec, &zeros, 0.01), Err(Error::Precondition(_))));
    }

    #[test]
    fn spec_text_round_trip() {
        let spec = small_spec(12);
        let back = BigramSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(back, spec);
        assert!(BigramSpec::from_text("n = 1\nm = 2\n").is_err());
    }
}
