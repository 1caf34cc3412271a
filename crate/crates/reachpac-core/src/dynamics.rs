//! System interface, fixed-step integration, and i.i.d. terminal-state
//! sampling.
//!
//! A [`SystemSpec`] carries a vector field and a time horizon; `simulate`
//! integrates it with classical fourth-order Runge-Kutta. `draw_samples`
//! pushes initial conditions and per-step disturbances through the flow,
//! one counter-derived RNG stream per sample so rows are reproducible
//! independently of evaluation order.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::fmath;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("integration step must be positive, got {step}")]
    InvalidStep { step: f64 },
    #[error("time horizon must satisfy t1 > t0, got [{t0}, {t1}]")]
    InvalidHorizon { t0: f64, t1: f64 },
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simulation diverged (non-finite state) at t = {t}")]
    SimulationDiverged { t: f64 },
    #[error("sample count must be at least 1")]
    EmptyBatch,
    #[error("distribution parameters are invalid: {reason}")]
    InvalidDistribution { reason: &'static str },
    #[error("batch contains a non-finite entry")]
    NonFiniteSample,
}

/// Right-hand side of the ODE x' = f(t, x, d).
pub trait VectorField {
    fn state_dim(&self) -> usize;

    /// Width of the disturbance vector consumed per step (0 = undisturbed).
    fn disturbance_dim(&self) -> usize {
        0
    }

    fn eval(&self, t: f64, x: &[f64], d: &[f64], out: &mut [f64]);
}

/// Unforced Duffing oscillator x1' = x2, x2' = -2 zeta x2 + x1 - x1^3.
#[derive(Debug, Clone, Copy)]
pub struct Duffing {
    pub damping: f64,
}

impl Default for Duffing {
    fn default() -> Self {
        Self { damping: 0.3 }
    }
}

impl VectorField for Duffing {
    fn state_dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &[f64], _d: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = -2.0 * self.damping * x[1] + x[0] - x[0] * x[0] * x[0];
    }
}

/// A vector field that is identically zero; terminal state = initial state.
/// Useful for driving the certifiers with a known sampling distribution.
#[derive(Debug, Clone, Copy)]
pub struct Frozen {
    pub dim: usize,
}

impl VectorField for Frozen {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _t: f64, _x: &[f64], _d: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Piecewise-constant disturbance signal, one row of `width` values per
/// integrator step. An empty signal means no disturbance.
#[derive(Debug, Clone, Default)]
pub struct DisturbanceSignal {
    width: usize,
    values: Vec<f64>,
}

impl DisturbanceSignal {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn per_step(width: usize, values: Vec<f64>) -> Self {
        debug_assert!(width == 0 || values.len() % width == 0);
        Self { width, values }
    }

    fn step(&self, i: usize) -> &[f64] {
        if self.width == 0 {
            &[]
        } else {
            let start = (i * self.width).min(self.values.len().saturating_sub(self.width));
            &self.values[start..start + self.width]
        }
    }
}

/// System with a time horizon and a fixed integrator step.
#[derive(Debug, Clone)]
pub struct SystemSpec<F: VectorField> {
    pub field: F,
    pub t0: f64,
    pub t1: f64,
    pub step: f64,
}

impl<F: VectorField> SystemSpec<F> {
    pub fn new(field: F, t0: f64, t1: f64, step: f64) -> Result<Self, DynamicsError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(DynamicsError::InvalidStep { step });
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(DynamicsError::InvalidHorizon { t0, t1 });
        }
        Ok(Self {
            field,
            t0,
            t1,
            step,
        })
    }

    /// Number of integrator steps, counting a shortened final step that
    /// lands exactly on t1.
    pub fn step_count(&self) -> usize {
        let span = self.t1 - self.t0;
        let full = fmath::floor(span / self.step + 1e-9) as usize;
        let rem = span - (full as f64) * self.step;
        if rem > 1e-9 * self.step {
            full + 1
        } else {
            full.max(1)
        }
    }

    /// Classical RK4 flow map from t0 to t1; deterministic for fixed inputs.
    /// The signal's width must match the field's disturbance dimension.
    pub fn simulate(&self, x0: &[f64], d: &DisturbanceSignal) -> Result<Vec<f64>, DynamicsError> {
        let n = self.field.state_dim();
        if x0.len() != n {
            return Err(DynamicsError::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
        if d.width != self.field.disturbance_dim() {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.field.disturbance_dim(),
                got: d.width,
            });
        }
        let span = self.t1 - self.t0;
        let full = fmath::floor(span / self.step + 1e-9) as usize;

        let mut x = x0.to_vec();
        let mut stage = Stage::new(n);

        let mut index = 0usize;
        for i in 0..full {
            let t = self.t0 + (i as f64) * self.step;
            self.rk4_step(t, self.step, &mut x, d.step(index), &mut stage);
            index += 1;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::SimulationDiverged { t: t + self.step });
            }
        }
        let rem = span - (full as f64) * self.step;
        if rem > 1e-9 * self.step {
            let t = self.t1 - rem;
            self.rk4_step(t, rem, &mut x, d.step(index), &mut stage);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::SimulationDiverged { t: self.t1 });
            }
        }
        Ok(x)
    }

    fn rk4_step(&self, t: f64, h: f64, x: &mut [f64], d: &[f64], s: &mut Stage) {
        let n = x.len();
        self.field.eval(t, x, d, &mut s.k1);
        for i in 0..n {
            s.tmp[i] = x[i] + 0.5 * h * s.k1[i];
        }
        self.field.eval(t + 0.5 * h, &s.tmp, d, &mut s.k2);
        for i in 0..n {
            s.tmp[i] = x[i] + 0.5 * h * s.k2[i];
        }
        self.field.eval(t + 0.5 * h, &s.tmp, d, &mut s.k3);
        for i in 0..n {
            s.tmp[i] = x[i] + h * s.k3[i];
        }
        self.field.eval(t + h, &s.tmp, d, &mut s.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
    }
}

struct Stage {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Stage {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Distribution of initial states.
#[derive(Debug, Clone)]
pub enum InitialDistribution {
    Point { center: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: Vec<f64>, std_dev: Vec<f64> },
}

impl InitialDistribution {
    fn dim(&self) -> usize {
        match self {
            Self::Point { center } | Self::Ball { center, .. } => center.len(),
            Self::Box { lower, .. } => lower.len(),
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |reason| Err(DynamicsError::InvalidDistribution { reason });
        match self {
            Self::Point { center } => {
                if center.iter().any(|v| !v.is_finite()) {
                    return bad("point center must be finite");
                }
            }
            Self::Ball { center, radius } => {
                if center.iter().any(|v| !v.is_finite()) || !radius.is_finite() || *radius < 0.0 {
                    return bad("ball needs finite center and nonnegative radius");
                }
            }
            Self::Box { lower, upper } => {
                if lower.len() != upper.len()
                    || lower
                        .iter()
                        .zip(upper)
                        .any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u)
                {
                    return bad("box needs finite lower <= upper per coordinate");
                }
            }
            Self::Gaussian { mean, std_dev } => {
                if mean.len() != std_dev.len()
                    || mean.iter().any(|v| !v.is_finite())
                    || std_dev.iter().any(|s| !s.is_finite() || *s < 0.0)
                {
                    return bad("gaussian needs finite mean and nonnegative std");
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Self::Point { center } => out.copy_from_slice(center),
            Self::Ball { center, radius } => {
                let n = center.len();
                // isotropic direction from gaussians, radius ~ r u^(1/n)
                let mut norm_sq = 0.0;
                for v in out.iter_mut() {
                    *v = gaussian(rng);
                    norm_sq += *v * *v;
                }
                let norm = fmath::sqrt(norm_sq).max(f64::MIN_POSITIVE);
                let r = radius * fmath::powf(uniform(rng), 1.0 / n as f64);
                for (v, c) in out.iter_mut().zip(center) {
                    *v = c + r * (*v / norm);
                }
            }
            Self::Box { lower, upper } => {
                for ((v, l), u) in out.iter_mut().zip(lower).zip(upper) {
                    *v = l + (u - l) * uniform(rng);
                }
            }
            Self::Gaussian { mean, std_dev } => {
                for ((v, m), s) in out.iter_mut().zip(mean).zip(std_dev) {
                    *v = m + s * gaussian(rng);
                }
            }
        }
    }
}

/// Disturbance model, sampled once per integrator step.
#[derive(Debug, Clone)]
pub enum DisturbanceModel {
    None,
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl DisturbanceModel {
    fn width(&self) -> usize {
        match self {
            Self::None => 0,
            Self::UniformBox { lower, .. } => lower.len(),
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            Self::None => Ok(()),
            Self::UniformBox { lower, upper } => {
                if lower.len() != upper.len()
                    || lower
                        .iter()
                        .zip(upper)
                        .any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u)
                {
                    Err(DynamicsError::InvalidDistribution {
                        reason: "disturbance box needs finite lower <= upper",
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    fn draw_signal(&self, rng: &mut ChaCha8Rng, steps: usize) -> DisturbanceSignal {
        match self {
            Self::None => DisturbanceSignal::none(),
            Self::UniformBox { lower, upper } => {
                let w = lower.len();
                let mut values = Vec::with_capacity(w * steps);
                for _ in 0..steps {
                    for (l, u) in lower.iter().zip(upper) {
                        values.push(l + (u - l) * uniform(rng));
                    }
                }
                DisturbanceSignal::per_step(w, values)
            }
        }
    }
}

/// Sampling configuration: initial-state law, disturbance law, and seed.
/// The seed fully determines the output.
#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub initial: InitialDistribution,
    pub disturbance: DisturbanceModel,
    pub seed: u64,
}

/// A batch of i.i.d. terminal states, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    n_x: usize,
    data: Vec<f64>,
}

impl SampleBatch {
    pub fn new(n_x: usize, data: Vec<f64>) -> Result<Self, DynamicsError> {
        if n_x == 0 || data.is_empty() || data.len() % n_x != 0 {
            return Err(DynamicsError::EmptyBatch);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteSample);
        }
        Ok(Self { n_x, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n_x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_x..(i + 1) * self.n_x]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_x)
    }

    /// First `n` rows as a new batch.
    pub fn head(&self, n: usize) -> SampleBatch {
        let n = n.min(self.len());
        SampleBatch {
            n_x: self.n_x,
            data: self.data[..n * self.n_x].to_vec(),
        }
    }
}

/// Draw `n` i.i.d. terminal states through the flow map.
///
/// Row `i` consumes RNG stream `i` of a ChaCha generator keyed by the
/// seed, so the batch is bit-identical across runs and the first rows of
/// a longer batch coincide with a shorter one.
pub fn draw_samples<F: VectorField>(
    sys: &SystemSpec<F>,
    samp: &SamplingSpec,
    n: usize,
) -> Result<SampleBatch, DynamicsError> {
    if n == 0 {
        return Err(DynamicsError::EmptyBatch);
    }
    samp.initial.validate()?;
    samp.disturbance.validate()?;
    let n_x = sys.field.state_dim();
    if samp.initial.dim() != n_x {
        return Err(DynamicsError::DimensionMismatch {
            expected: n_x,
            got: samp.initial.dim(),
        });
    }
    if samp.disturbance.width() != 0 && samp.disturbance.width() != sys.field.disturbance_dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: sys.field.disturbance_dim(),
            got: samp.disturbance.width(),
        });
    }
    let steps = sys.step_count();
    let n_d = sys.field.disturbance_dim();
    let mut data = Vec::with_capacity(n * n_x);
    let mut x0 = vec![0.0; n_x];
    for row in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(samp.seed);
        rng.set_stream(row as u64);
        samp.initial.draw(&mut rng, &mut x0);
        let signal = if samp.disturbance.width() == 0 && n_d > 0 {
            // disturbed field run without a disturbance model: feed zeros
            DisturbanceSignal::per_step(n_d, vec![0.0; n_d * steps])
        } else {
            samp.disturbance.draw_signal(&mut rng, steps)
        };
        let terminal = sys.simulate(&x0, &signal)?;
        data.extend_from_slice(&terminal);
    }
    SampleBatch::new(n_x, data)
}

/// Uniform f64 in [0, 1) from the top 53 bits of a u64 draw.
#[inline]
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller; one value per call so each row's draw
/// count is independent of how the pair would be cached.
#[inline]
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - uniform(rng); // (0, 1]
    let u2 = uniform(rng);
    fmath::sqrt(-2.0 * fmath::ln(u1)) * fmath::cos(2.0 * core::f64::consts::PI * u2)
}
