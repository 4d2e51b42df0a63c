use std::path::Path;

use rand::Rng;

use crate::autodiff::checkpoint::{self, NamedTensor};
use crate::autodiff::{Activation, Dense, HasParams, Layer, Mode, Param, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected stack with ReLU between layers and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    name: String,
    sizes: Vec<usize>,
    dense: Vec<Dense<T>>,
    relu: Vec<Activation<T>>,
}

/// `state_dim → hidden → hidden → n_actions`.
pub type QNetwork<T> = Mlp<T>;

impl<T: Scalar> Mlp<T> {
    /// `sizes` lists every layer width including input and output.
    pub fn new(name: &str, sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("bad layer sizes {sizes:?} for `{name}`")));
        }
        let dense = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&format!("{name}.fc{i}"), w[0], w[1], rng))
            .collect();
        Ok(Mlp {
            name: name.to_string(),
            sizes: sizes.to_vec(),
            dense,
            relu: (0..sizes.len() - 2).map(|_| Activation::relu()).collect(),
        })
    }

    pub fn q_network(state_dim: usize, hidden: usize, n_actions: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new("q", &[state_dim, hidden, hidden, n_actions], rng)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.dense
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        let last = self.dense.len() - 1;
        for i in 0..=last {
            h = self.dense[i].forward(&h, mode)?;
            if i < last {
                h = self.relu[i].forward(&h, mode)?;
            }
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        let last = self.dense.len() - 1;
        for i in (0..=last).rev() {
            if i < last {
                g = self.relu[i].backward(&g)?;
            }
            g = self.dense[i].backward(&g)?;
        }
        Ok(g)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        let last = self.dense.len() - 1;
        for i in 0..=last {
            h = self.dense[i].infer(&h)?;
            if i < last {
                h = self.relu[i].infer(&h)?;
            }
        }
        Ok(h)
    }

    /// Rows of `states` (each `input_dim` long) stacked into a batch.
    pub fn batch(&self, states: &[&[f64]]) -> Result<Tensor<T>> {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(states.len() * d);
        for s in states {
            if s.len() != d {
                return Err(Error::shape("mlp input", &[s.len()], &[d]));
            }
            data.extend(s.iter().map(|&v| T::of(v)));
        }
        Tensor::from_vec(&[states.len(), d], data)
    }

    pub fn predict(&self, states: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let y = self.infer(&self.batch(states)?)?;
        let k = self.output_dim();
        Ok(y.data().chunks(k).map(|r| r.iter().map(|v| v.as_f64()).collect()).collect())
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let sizes: Vec<f64> = self.sizes.iter().map(|&s| s as f64).collect();
        let mut out = vec![NamedTensor::vector(&format!("meta.{}.sizes", self.name), &sizes)];
        out.extend(self.params().into_iter().map(NamedTensor::from_param));
        out
    }

    pub fn from_tensors(name: &str, tensors: &[NamedTensor]) -> Result<Self> {
        let sizes: Vec<usize> = checkpoint::find(tensors, &format!("meta.{name}.sizes"))?
            .values
            .iter()
            .map(|&v| v as usize)
            .collect();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::new(name, &sizes, &mut rng)?;
        checkpoint::load_params(tensors, net.params_mut())?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.to_tensors())
    }

    pub fn load(name: &str, path: &Path) -> Result<Self> {
        Self::from_tensors(name, &checkpoint::load(path)?)
    }
}

impl<T: Scalar> HasParams<T> for Mlp<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.dense.iter().flat_map(|d| d.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.dense.iter_mut().flat_map(|d| d.params_mut()).collect()
    }
}

impl<T: Scalar> Layer<T> for Mlp<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Mlp::forward(self, x, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        Mlp::backward(self, grad_out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Mlp::infer(self, x)
    }
}
