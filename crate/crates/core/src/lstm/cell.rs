//! LSTM recurrence and its backward pass, without an output layer.
//!
//! Gate blocks in the `4h` dimension are ordered `(i, f, g, o)`:
//!
//! ```text
//! z   = W_x x_t + W_h h_{t-1} + b
//! i,f,o = sigmoid(z_i, z_f, z_o)    g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! The first layer reads a learned embedding of width `h`; deeper layers
//! read the hidden state of the layer below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, DenseMatrix, RandomSource, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer<T> {
    pub w_x: DenseMatrix<T>,
    pub w_h: DenseMatrix<T>,
    pub b: Vec<T>,
}

/// Embedding plus stacked LSTM layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCore<T> {
    pub embedding: DenseMatrix<T>,
    pub layers: Vec<LstmLayer<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// Recurrent state of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub layers: Vec<LayerState<T>>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(hidden: usize, layers: usize) -> Self {
        Self {
            layers: (0..layers)
                .map(|_| LayerState {
                    h: vec![T::zero(); hidden],
                    c: vec![T::zero(); hidden],
                })
                .collect(),
        }
    }

    pub fn top_hidden(&self) -> &[T] {
        &self.layers.last().expect("at least one layer").h
    }
}

/// Per-step, per-layer values the backward pass needs.
#[derive(Debug, Clone)]
struct StepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// gate activations `(i, f, g, o)`, length 4h
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

/// Forward pass over a window, keeping what the backward pass needs.
#[derive(Debug, Clone)]
pub struct CoreTrace<T> {
    ids: Vec<usize>,
    steps: Vec<Vec<StepCache<T>>>,
    /// Top-layer hidden states, one row per consumed id.
    pub hidden: DenseMatrix<T>,
    pub final_state: LstmState<T>,
}

impl<T: Real> LstmLayer<T> {
    fn zeros(hidden: usize) -> Self {
        Self {
            w_x: DenseMatrix::zeros(4 * hidden, hidden),
            w_h: DenseMatrix::zeros(4 * hidden, hidden),
            b: vec![T::zero(); 4 * hidden],
        }
    }

    fn step(&self, x: &[T], state: &mut LayerState<T>, cache: Option<&mut Vec<StepCache<T>>>) {
        let h = state.h.len();
        let mut z = self.b.clone();
        for (r, zr) in z.iter_mut().enumerate() {
            let wx = self.w_x.row(r);
            let wh = self.w_h.row(r);
            let mut acc = *zr;
            for k in 0..h {
                acc += wx[k] * x[k] + wh[k] * state.h[k];
            }
            *zr = acc;
        }
        for v in &mut z[..2 * h] {
            *v = sigmoid(*v);
        }
        for v in &mut z[2 * h..3 * h] {
            *v = v.tanh();
        }
        for v in &mut z[3 * h..] {
            *v = sigmoid(*v);
        }
        let (c_prev, h_prev) = if cache.is_some() {
            (state.c.clone(), state.h.clone())
        } else {
            (Vec::new(), Vec::new())
        };
        let mut tanh_c = vec![T::zero(); h];
        for k in 0..h {
            let c = z[h + k] * state.c[k] + z[k] * z[2 * h + k];
            state.c[k] = c;
            tanh_c[k] = c.tanh();
            state.h[k] = z[3 * h + k] * tanh_c[k];
        }
        if let Some(cache) = cache {
            cache.push(StepCache {
                x: x.to_vec(),
                h_prev,
                c_prev,
                gates: z,
                tanh_c,
            });
        }
    }
}

impl<T: Real> LstmCore<T> {
    pub fn zeros(vocab_size: usize, hidden: usize, layers: usize) -> Self {
        Self {
            embedding: DenseMatrix::zeros(vocab_size, hidden),
            layers: (0..layers).map(|_| LstmLayer::zeros(hidden)).collect(),
        }
    }

    /// Uniform(-scale, scale) weights, zero biases, forget-gate bias 1.
    pub fn init(
        vocab_size: usize,
        hidden: usize,
        layers: usize,
        scale: f64,
        rng: &mut RandomSource,
    ) -> Self {
        let mut core = Self::zeros(vocab_size, hidden, layers);
        let mut draw = |m: &mut DenseMatrix<T>| {
            for v in m.as_mut_slice() {
                *v = T::of((2.0 * rng.uniform() - 1.0) * scale);
            }
        };
        draw(&mut core.embedding);
        for layer in &mut core.layers {
            draw(&mut layer.w_x);
            draw(&mut layer.w_h);
            for v in &mut layer.b[hidden..2 * hidden] {
                *v = T::one();
            }
        }
        core
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_state(&self) -> LstmState<T> {
        LstmState::zeros(self.hidden_dim(), self.num_layers())
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.vocab_size() {
            return Err(Error::invalid(format!(
                "character id {id} outside vocabulary of size {}",
                self.vocab_size()
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: &LstmState<T>) -> Result<()> {
        let h = self.hidden_dim();
        if state.layers.len() != self.num_layers()
            || state
                .layers
                .iter()
                .any(|l| l.h.len() != h || l.c.len() != h)
        {
            return Err(Error::Shape(
                "recurrent state does not match the network".into(),
            ));
        }
        Ok(())
    }

    /// Advance `state` by one character.
    pub fn step(&self, id: usize, state: &mut LstmState<T>) -> Result<()> {
        self.check_id(id)?;
        self.step_inner(id, state, None);
        Ok(())
    }

    fn step_inner(
        &self,
        id: usize,
        state: &mut LstmState<T>,
        mut caches: Option<&mut Vec<Vec<StepCache<T>>>>,
    ) {
        let mut x = self.embedding.row(id).to_vec();
        let mut layer_caches = caches
            .as_ref()
            .map(|_| Vec::with_capacity(self.layers.len()));
        for (layer, ls) in self.layers.iter().zip(&mut state.layers) {
            layer.step(&x, ls, layer_caches.as_mut());
            x.copy_from_slice(&ls.h);
        }
        if let (Some(all), Some(lc)) = (caches.as_mut(), layer_caches) {
            all.push(lc);
        }
    }

    /// Run over `ids`, returning top-layer hidden states and the final state.
    pub fn run(
        &self,
        ids: &[usize],
        state0: &LstmState<T>,
    ) -> Result<(DenseMatrix<T>, LstmState<T>)> {
        self.check_state(state0)?;
        let h = self.hidden_dim();
        let mut state = state0.clone();
        let mut hidden = DenseMatrix::zeros(ids.len(), h);
        for (t, &id) in ids.iter().enumerate() {
            self.check_id(id)?;
            self.step_inner(id, &mut state, None);
            hidden.row_mut(t).copy_from_slice(state.top_hidden());
        }
        Ok((hidden, state))
    }

    pub fn forward_trace(&self, ids: &[usize], state0: &LstmState<T>) -> Result<CoreTrace<T>> {
        self.check_state(state0)?;
        let h = self.hidden_dim();
        let mut state = state0.clone();
        let mut steps = Vec::with_capacity(ids.len());
        let mut hidden = DenseMatrix::zeros(ids.len(), h);
        for (t, &id) in ids.iter().enumerate() {
            self.check_id(id)?;
            self.step_inner(id, &mut state, Some(&mut steps));
            hidden.row_mut(t).copy_from_slice(state.top_hidden());
        }
        Ok(CoreTrace {
            ids: ids.to_vec(),
            steps,
            hidden,
            final_state: state,
        })
    }

    /// Gradients of a loss with respect to every core parameter, given the
    /// loss gradient at each top-layer hidden output. No gradient flows into
    /// the initial state.
    pub fn backward(&self, trace: &CoreTrace<T>, d_hidden: &DenseMatrix<T>) -> LstmCore<T> {
        let h = self.hidden_dim();
        let n_layers = self.num_layers();
        let mut grads = LstmCore::zeros(self.vocab_size(), h, n_layers);
        let mut dh_next = vec![vec![T::zero(); h]; n_layers];
        let mut dc_next = vec![vec![T::zero(); h]; n_layers];
        let mut dz = vec![T::zero(); 4 * h];

        for t in (0..trace.steps.len()).rev() {
            let mut d_above = d_hidden.row(t).to_vec();
            for l in (0..n_layers).rev() {
                let cache = &trace.steps[t][l];
                let layer = &self.layers[l];
                let g = &cache.gates;
                for k in 0..h {
                    let dh = d_above[k] + dh_next[l][k];
                    let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let tc = cache.tanh_c[k];
                    let dc = dc_next[l][k] + dh * o * (T::one() - tc * tc);
                    dz[k] = dc * gg * i * (T::one() - i);
                    dz[h + k] = dc * cache.c_prev[k] * f * (T::one() - f);
                    dz[2 * h + k] = dc * i * (T::one() - gg * gg);
                    dz[3 * h + k] = dh * tc * o * (T::one() - o);
                    dc_next[l][k] = dc * f;
                }
                let gl = &mut grads.layers[l];
                for (r, &d) in dz.iter().enumerate() {
                    gl.b[r] += d;
                    let gx = gl.w_x.row_mut(r);
                    for k in 0..h {
                        gx[k] += d * cache.x[k];
                    }
                    let gh = gl.w_h.row_mut(r);
                    for k in 0..h {
                        gh[k] += d * cache.h_prev[k];
                    }
                }
                let dx = layer.w_x.matvec_t(&dz);
                dh_next[l] = layer.w_h.matvec_t(&dz);
                d_above = dx;
            }
            let erow = grads.embedding.row_mut(trace.ids[t]);
            for (e, &d) in erow.iter_mut().zip(&d_above) {
                *e += d;
            }
        }
        grads
    }

    pub(crate) fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_slice())];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_x"), layer.w_x.as_slice()));
            out.push((format!("layer{l}.w_h"), layer.w_h.as_slice()));
            out.push((format!("layer{l}.b"), &layer.b));
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        for layer in &mut self.layers {
            out.push(layer.w_x.as_mut_slice());
            out.push(layer.w_h.as_mut_slice());
            out.push(&mut layer.b);
        }
        out
    }

    pub(crate) fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![self.embedding.rows(), self.embedding.cols()]];
        for layer in &self.layers {
            out.push(vec![layer.w_x.rows(), layer.w_x.cols()]);
            out.push(vec![layer.w_h.rows(), layer.w_h.cols()]);
            out.push(vec![layer.b.len()]);
        }
        out
    }
}

/// Fully connected output layer `W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn init(outputs: usize, inputs: usize, scale: f64, rng: &mut RandomSource) -> Self {
        let mut lin = Self::zeros(outputs, inputs);
        for v in lin.weight.as_mut_slice() {
            *v = T::of((2.0 * rng.uniform() - 1.0) * scale);
        }
        lin
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// `out[r] = b[r] + Σ_j W[r, j] x[j]`, summed in index order.
    pub fn forward_into(&self, x: &[T], out: &mut [T]) {
        for (r, o) in out.iter_mut().enumerate() {
            let w = self.weight.row(r);
            let mut acc = self.bias[r];
            for (&wj, &xj) in w.iter().zip(x) {
                acc += wj * xj;
            }
            *o = acc;
        }
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward_accumulate(&self, x: &[T], d_out: &[T], grads: &mut Linear<T>) -> Vec<T> {
        for (r, &d) in d_out.iter().enumerate() {
            grads.bias[r] += d;
            for (g, &xj) in grads.weight.row_mut(r).iter_mut().zip(x) {
                *g += d * xj;
            }
        }
        self.weight.matvec_t(d_out)
    }
}
