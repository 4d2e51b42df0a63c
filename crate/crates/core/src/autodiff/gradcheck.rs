//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Mode};
use super::param::{HasParams, Param};
use super::tensor::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

/// A scalar objective of an input tensor and some parameters.
pub trait Objective<T: Scalar> {
    fn loss(&mut self, input: &Tensor<T>) -> Result<T>;

    /// Loss plus populated parameter gradients; returns the input gradient
    /// when the objective is differentiable in its input.
    fn loss_and_grad(&mut self, input: &Tensor<T>) -> Result<(T, Option<Tensor<T>>)>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many randomly chosen coordinates per tensor.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst coordinate.
    pub worst: String,
    pub checked: usize,
}

/// Denominator floor so that gradients at round-off scale don't dominate.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares every (or a sample of every) parameter and input coordinate
/// against `(L(x + eps) - L(x - eps)) / 2 eps`.
pub fn grad_check<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &mut O,
    input: &Tensor<T>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    for p in objective.params_mut() {
        p.zero_grad();
    }
    let (_, input_grad) = objective.loss_and_grad(input)?;
    let analytic: Vec<(String, bool, Vec<f64>)> = objective
        .params_mut()
        .iter()
        .map(|p| (p.name.clone(), p.frozen, p.grad.to_f64()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = T::of(opts.eps);
    let two_eps = 2.0 * opts.eps;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let record = |name: &str, idx: usize, a: f64, n: f64, report: &mut GradCheckReport| {
        let e = relative_error(a, n);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = format!("{name}[{idx}]");
        }
    };

    for (pi, (name, frozen, grad)) in analytic.iter().enumerate() {
        if *frozen {
            continue;
        }
        for idx in coords(grad.len(), opts.max_coords, &mut rng) {
            let orig = objective.params_mut()[pi].value.data()[idx];
            objective.params_mut()[pi].value.data_mut()[idx] = orig + eps;
            let up = objective.loss(input)?.as_f64();
            objective.params_mut()[pi].value.data_mut()[idx] = orig - eps;
            let down = objective.loss(input)?.as_f64();
            objective.params_mut()[pi].value.data_mut()[idx] = orig;
            record(name, idx, grad[idx], (up - down) / two_eps, &mut report);
        }
    }

    if let Some(dx) = input_grad {
        let dx = dx.to_f64();
        let mut x = input.clone();
        for idx in coords(x.len(), opts.max_coords, &mut rng) {
            let orig = x.data()[idx];
            x.data_mut()[idx] = orig + eps;
            let up = objective.loss(&x)?.as_f64();
            x.data_mut()[idx] = orig - eps;
            let down = objective.loss(&x)?.as_f64();
            x.data_mut()[idx] = orig;
            record("input", idx, dx[idx], (up - down) / two_eps, &mut report);
        }
    }
    Ok(report)
}

fn coords(len: usize, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut v = sample(rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Wraps a layer as the objective `sum(w ⊙ layer(x))` with fixed random
/// projection weights `w`, so every output coordinate contributes.
pub struct LayerObjective<T: Scalar, L: Layer<T>> {
    pub layer: L,
    pub mode: Mode,
    weights: Option<Tensor<T>>,
    seed: u64,
}

impl<T: Scalar, L: Layer<T>> LayerObjective<T, L> {
    pub fn new(layer: L, mode: Mode, seed: u64) -> Self {
        LayerObjective {
            layer,
            mode,
            weights: None,
            seed,
        }
    }

    fn project(&mut self, y: &Tensor<T>) -> T {
        if self.weights.as_ref().map(|w| w.shape() != y.shape()).unwrap_or(true) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let w = (0..y.len()).map(|_| T::of(rng.random_range(-1.0..1.0))).collect();
            self.weights = Some(Tensor::from_vec(y.shape(), w).expect("sized"));
        }
        let w = self.weights.as_ref().expect("set above");
        y.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum()
    }
}

impl<T: Scalar, L: Layer<T>> Objective<T> for LayerObjective<T, L> {
    fn loss(&mut self, input: &Tensor<T>) -> Result<T> {
        let y = self.layer.forward(input, self.mode)?;
        Ok(self.project(&y))
    }

    fn loss_and_grad(&mut self, input: &Tensor<T>) -> Result<(T, Option<Tensor<T>>)> {
        let y = self.layer.forward(input, self.mode)?;
        let l = self.project(&y);
        let w = self.weights.clone().expect("set by project");
        let dx = self.layer.backward(&w)?;
        Ok((l, Some(dx)))
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        HasParams::params_mut(&mut self.layer)
    }
}
