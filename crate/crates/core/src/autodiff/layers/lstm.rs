use rand::Rng;

use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::{debug_assert_finite, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

use super::activation::sigmoid;
use super::{Layer, Mode};

/// Single-direction LSTM over `[n, steps, d]` returning the final hidden
/// state `[n, h]`.
///
/// Gate blocks are laid out `[input | forget | candidate | output]` along
/// the `4h` axis:
///
/// ```text
/// i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
/// c_t = f ⊙ c_{t-1} + i ⊙ g
/// h_t = o ⊙ tanh(c_t)
/// ```
#[derive(Debug, Clone)]
pub struct Lstm<T> {
    /// `[d, 4h]`
    pub kernel: Param<T>,
    /// `[h, 4h]`
    pub recurrent: Param<T>,
    /// `[4h]`
    pub bias: Param<T>,
    reverse: bool,
    cache: Option<LstmCache<T>>,
}

#[derive(Debug, Clone)]
struct LstmCache<T> {
    input: Tensor<T>,
    /// Per processing step: activated gates `[n, 4h]`, cell `[n, h]`, hidden `[n, h]`.
    gates: Vec<Vec<T>>,
    cells: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
}

impl<T: Scalar> Lstm<T> {
    /// `reverse` processes the sequence last step first. The forget-gate
    /// bias starts at 1.
    pub fn new(name: &str, input: usize, hidden: usize, reverse: bool, rng: &mut impl Rng) -> Self {
        let g = 4 * hidden;
        let mut bias = Tensor::zeros(&[g]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|b| *b = T::one());
        Lstm {
            kernel: Param::glorot(format!("{name}.kernel"), &[input, g], input, g, rng),
            recurrent: Param::glorot(format!("{name}.recurrent"), &[hidden, g], hidden, g, rng),
            bias: Param::new(format!("{name}.bias"), bias),
            reverse,
            cache: None,
        }
    }

    pub fn input_size(&self) -> usize {
        self.kernel.value.dim(0)
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent.value.dim(0)
    }

    fn time_index(&self, step: usize, steps: usize) -> usize {
        if self.reverse {
            steps - 1 - step
        } else {
            step
        }
    }

    fn run(&self, x: &Tensor<T>, mut cache: Option<&mut LstmCache<T>>) -> Result<Tensor<T>> {
        let s = x.shape();
        let (d, h) = (self.input_size(), self.hidden_size());
        if s.len() != 3 || s[2] != d || s[1] == 0 {
            return Err(Error::shape("lstm", s, &[0, 0, d]));
        }
        let (n, steps) = (s[0], s[1]);
        let g = 4 * h;

        // input projections for every (sample, step) in one product
        let mut xw = Vec::with_capacity(n * steps * g);
        for _ in 0..n * steps {
            xw.extend_from_slice(self.bias.value.data());
        }
        gemm(
            T::one(),
            MatRef::new(x.data(), n * steps, d),
            MatRef::new(self.kernel.value.data(), d, g),
            T::one(),
            &mut xw,
        );

        let wh = MatRef::new(self.recurrent.value.data(), h, g);
        let mut hid = vec![T::zero(); n * h];
        let mut cell = vec![T::zero(); n * h];
        let mut z = vec![T::zero(); n * g];
        for step in 0..steps {
            let t = self.time_index(step, steps);
            for b in 0..n {
                let row = (b * steps + t) * g;
                z[b * g..(b + 1) * g].copy_from_slice(&xw[row..row + g]);
            }
            if step > 0 {
                gemm(T::one(), MatRef::new(&hid, n, h), wh, T::one(), &mut z);
            }
            for b in 0..n {
                let zb = &mut z[b * g..(b + 1) * g];
                for j in 0..h {
                    let i = sigmoid(zb[j]);
                    let f = sigmoid(zb[h + j]);
                    let gg = zb[2 * h + j].tanh();
                    let o = sigmoid(zb[3 * h + j]);
                    zb[j] = i;
                    zb[h + j] = f;
                    zb[2 * h + j] = gg;
                    zb[3 * h + j] = o;
                    let c = f * cell[b * h + j] + i * gg;
                    cell[b * h + j] = c;
                    hid[b * h + j] = o * c.tanh();
                }
            }
            if let Some(cache) = cache.as_deref_mut() {
                cache.gates.push(z.clone());
                cache.cells.push(cell.clone());
                cache.hidden.push(hid.clone());
            }
        }
        let out = Tensor::from_vec(&[n, h], hid)?;
        debug_assert_finite(&out, "lstm");
        Ok(out)
    }
}

impl<T: Scalar> HasParams<T> for Lstm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.recurrent, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.recurrent, &mut self.bias]
    }
}

impl<T: Scalar> Layer<T> for Lstm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if !mode.is_training() {
            self.cache = None;
            return self.run(x, None);
        }
        let mut cache = LstmCache {
            input: x.clone(),
            gates: Vec::new(),
            cells: Vec::new(),
            hidden: Vec::new(),
        };
        let y = self.run(x, Some(&mut cache))?;
        self.cache = Some(cache);
        Ok(y)
    }

    /// Backpropagation through time from the final hidden state.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache("lstm"))?;
        let (d, h) = (self.input_size(), self.hidden_size());
        let g = 4 * h;
        let (n, steps) = (cache.input.dim(0), cache.input.dim(1));
        grad_out.expect_shape("lstm backward", &[n, h])?;

        let wh = MatRef::new(self.recurrent.value.data(), h, g);
        let mut dh = grad_out.data().to_vec();
        let mut dc = vec![T::zero(); n * h];
        let mut dz = vec![T::zero(); n * g];
        let mut dz_all = vec![T::zero(); n * steps * g];
        let mut dwh = vec![T::zero(); h * g];
        let zeros = vec![T::zero(); n * h];
        for step in (0..steps).rev() {
            let t = self.time_index(step, steps);
            let gates = &cache.gates[step];
            let cell = &cache.cells[step];
            let c_prev = if step > 0 { &cache.cells[step - 1] } else { &zeros };
            for b in 0..n {
                for j in 0..h {
                    let k = b * h + j;
                    let gb = &gates[b * g..(b + 1) * g];
                    let (i, f, gg, o) = (gb[j], gb[h + j], gb[2 * h + j], gb[3 * h + j]);
                    let tc = cell[k].tanh();
                    let d_o = dh[k] * tc;
                    let dck = dc[k] + dh[k] * o * (T::one() - tc * tc);
                    let dzb = &mut dz[b * g..(b + 1) * g];
                    dzb[j] = dck * gg * i * (T::one() - i);
                    dzb[h + j] = dck * c_prev[k] * f * (T::one() - f);
                    dzb[2 * h + j] = dck * i * (T::one() - gg * gg);
                    dzb[3 * h + j] = d_o * o * (T::one() - o);
                    dc[k] = dck * f;
                }
            }
            for b in 0..n {
                let row = (b * steps + t) * g;
                dz_all[row..row + g].copy_from_slice(&dz[b * g..(b + 1) * g]);
            }
            if step > 0 {
                let h_prev = MatRef::new(&cache.hidden[step - 1], n, h);
                gemm(T::one(), h_prev.t(), MatRef::new(&dz, n, g), T::one(), &mut dwh);
                gemm(T::one(), MatRef::new(&dz, n, g), wh.t(), T::zero(), &mut dh);
            }
        }
        self.recurrent.accumulate(&dwh);

        let dz_m = MatRef::new(&dz_all, n * steps, g);
        let mut db = vec![T::zero(); g];
        for row in dz_all.chunks(g) {
            for (s, &v) in db.iter_mut().zip(row) {
                *s += v;
            }
        }
        self.bias.accumulate(&db);
        let mut dwx = vec![T::zero(); d * g];
        gemm(T::one(), MatRef::new(cache.input.data(), n * steps, d).t(), dz_m, T::zero(), &mut dwx);
        self.kernel.accumulate(&dwx);
        let mut dx = vec![T::zero(); n * steps * d];
        gemm(T::one(), dz_m, MatRef::new(self.kernel.value.data(), d, g).t(), T::zero(), &mut dx);
        self.cache = Some(cache);
        Tensor::from_vec(&[n, steps, d], dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, None)
    }
}

/// Forward and reverse LSTMs over the same sequence; output is
/// `[forward final h | backward final h]`, shape `[n, 2h]`.
#[derive(Debug, Clone)]
pub struct BiLstm<T> {
    pub forward: Lstm<T>,
    pub backward: Lstm<T>,
}

impl<T: Scalar> BiLstm<T> {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            forward: Lstm::new(&format!("{name}.fwd"), input, hidden, false, rng),
            backward: Lstm::new(&format!("{name}.bwd"), input, hidden, true, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }
}

impl<T: Scalar> HasParams<T> for BiLstm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.forward.params();
        p.extend(self.backward.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.forward.params_mut();
        p.extend(self.backward.params_mut());
        p
    }
}

impl<T: Scalar> Layer<T> for BiLstm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let a = self.forward.forward(x, mode)?;
        let b = self.backward.forward(x, mode)?;
        Tensor::concat_cols(&a, &b)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (ga, gb) = grad_out.split_cols(self.hidden_size())?;
        let mut dx = self.forward.backward(&ga)?;
        let dxb = self.backward.backward(&gb)?;
        for (a, &b) in dx.data_mut().iter_mut().zip(dxb.data()) {
            *a += b;
        }
        Ok(dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Tensor::concat_cols(&self.forward.infer(x)?, &self.backward.infer(x)?)
    }
}
