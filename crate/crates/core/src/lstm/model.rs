//! Stacked LSTM regressor: cell math, batched forward pass with inverted
//! dropout, MSE loss and full-sequence backpropagation through time.
//!
//! Batches are stored time-major: a batch of `B` sequences of `T` steps with
//! `D` features is one `(T·B) × D` matrix whose row `t·B + b` holds step `t`
//! of sequence `b`. Gate weights of a layer are stacked into a single
//! `4H × (H + D_in)` matrix with row blocks `[f; i; s̃; o]` and columns
//! ordered `[h_{t-1}, x_t]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_DROPOUT: [f64; 4] = [0.1, 0.3, 0.3, 0.1];
pub const N_OUTPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget,
    Input,
    Candidate,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

    fn block(self) -> usize {
        self as usize
    }

    /// Suffix used in tensor names (`W_f`, `b_s`, ...).
    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Candidate => "s",
            Gate::Output => "o",
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `4H × (H + D_in)`, gate blocks `[f; i; s̃; o]`.
    pub weights: Array2<f64>,
    /// `4H`.
    pub bias: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            weights: Array2::zeros((4 * hidden, hidden + input)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform `±1/√(H + D_in)` weights, zero biases except the forget gate
    /// at `+1`.
    pub fn init(hidden: usize, input: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / ((hidden + input) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((4 * hidden, hidden + input), || {
            rng.uniform_range(-bound, bound)
        });
        let mut bias = Array1::zeros(4 * hidden);
        bias.slice_mut(s![0..hidden]).fill(1.0);
        Self { weights, bias }
    }

    /// Assemble from the per-gate matrices (`H × (H + D_in)` each) and biases.
    pub fn from_gates(w: [ArrayView2<f64>; 4], b: [ArrayView1<f64>; 4]) -> Result<Self> {
        let shape = w[0].dim();
        let h = shape.0;
        if shape.1 < h || w.iter().any(|m| m.dim() != shape) || b.iter().any(|v| v.len() != h) {
            return Err(Error::Dimension("gate tensors disagree in shape".into()));
        }
        let weights = concatenate(Axis(0), &w).map_err(|e| Error::Dimension(e.to_string()))?;
        let bias = concatenate(Axis(0), &b).map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self { weights, bias })
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_size(&self) -> usize {
        self.weights.ncols() - self.hidden()
    }

    pub fn gate_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden();
        self.weights.slice(s![gate.block() * h..(gate.block() + 1) * h, ..])
    }

    pub fn gate_bias(&self, gate: Gate) -> ArrayView1<'_, f64> {
        let h = self.hidden();
        self.bias.slice(s![gate.block() * h..(gate.block() + 1) * h])
    }
}

/// Hidden output `h` and cell state `s` of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub s: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: Array1::zeros(hidden),
            s: Array1::zeros(hidden),
        }
    }
}

/// One time step of a single cell.
///
/// `s_t = f ∘ s_{t-1} + ĩ ∘ s̃` and `h_t = o ∘ tanh(s_t)`, every gate reading
/// `[h_{t-1}, x_t]`.
pub fn cell_step(x: ArrayView1<f64>, prev: &LstmState, p: &LstmLayerParams) -> Result<LstmState> {
    let h = p.hidden();
    if x.len() != p.input_size() || prev.h.len() != h || prev.s.len() != h {
        return Err(Error::Dimension(format!(
            "cell expects input {} and state {}, got {} and {}/{}",
            p.input_size(),
            h,
            x.len(),
            prev.h.len(),
            prev.s.len()
        )));
    }
    let z = concatenate(Axis(0), &[prev.h.view(), x]).expect("1-d concat");
    let pre = p.weights.dot(&z) + &p.bias;
    let mut next = LstmState::zeros(h);
    for j in 0..h {
        let f = sigmoid(pre[j]);
        let i = sigmoid(pre[h + j]);
        let c = pre[2 * h + j].tanh();
        let o = sigmoid(pre[3 * h + j]);
        next.s[j] = f * prev.s[j] + i * c;
        next.h[j] = o * next.s[j].tanh();
    }
    Ok(next)
}

/// Stacked LSTM layers followed by a dense head.
///
/// The same type doubles as the gradient container returned by
/// [`DeepLstmModel::backprop`]; its `dropout` field is then just carried
/// along.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLstmModel {
    pub layers: Vec<LstmLayerParams>,
    pub dropout: Vec<f64>,
    /// `N_out × H`.
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl DeepLstmModel {
    /// Four layers of 64 units, dropout `[0.1, 0.3, 0.3, 0.1]`, two outputs
    /// (VEOG, HEOG).
    pub fn new(n_inputs: usize, rng: &mut SeededRng) -> Self {
        Self::with_architecture(n_inputs, DEFAULT_HIDDEN, &DEFAULT_DROPOUT, N_OUTPUTS, rng)
            .expect("paper architecture is valid")
    }

    pub fn with_architecture(
        n_inputs: usize,
        hidden: usize,
        dropout: &[f64],
        n_outputs: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if n_inputs == 0 || hidden == 0 || dropout.is_empty() || n_outputs == 0 {
            return Err(Error::InvalidParameter("empty architecture".into()));
        }
        if dropout.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::InvalidParameter("dropout rate outside [0, 1)".into()));
        }
        let layers = (0..dropout.len())
            .map(|l| LstmLayerParams::init(hidden, if l == 0 { n_inputs } else { hidden }, rng))
            .collect();
        let bound = 1.0 / (hidden as f64).sqrt();
        let head_w =
            Array2::from_shape_simple_fn((n_outputs, hidden), || rng.uniform_range(-bound, bound));
        Ok(Self {
            layers,
            dropout: dropout.to_vec(),
            head_w,
            head_b: Array1::zeros(n_outputs),
        })
    }

    /// Same shapes, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayerParams::zeros(l.hidden(), l.input_size()))
                .collect(),
            dropout: self.dropout.clone(),
            head_w: Array2::zeros(self.head_w.raw_dim()),
            head_b: Array1::zeros(self.head_b.raw_dim()),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn n_outputs(&self) -> usize {
        self.head_b.len()
    }

    /// Every parameter tensor as a flat slice, in a fixed order: per layer
    /// weights then bias, then head weights and head bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(self.head_b.as_slice().expect("standard layout"));
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_w.as_slice_mut().expect("standard layout"));
        out.push(self.head_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// `self += other` element-wise (gradient accumulation).
    pub fn add_assign(&mut self, other: &DeepLstmModel) {
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for dst in self.param_slices_mut() {
            dst.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over one sequence (`N_c × T`). Returns `N_out × T` and,
    /// in train mode, the activation cache.
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        let batch = SequenceBatch::from_sequences(&[x])?;
        let (out, cache) = self.forward_batch(&batch, mode, rng)?;
        Ok((out.to_sequences().swap_remove(0), cache))
    }

    /// Batched forward pass. Dropout masks are drawn from `rng` in the order
    /// layer, time step, sequence, unit.
    pub fn forward_batch(
        &self,
        input: &SequenceBatch,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(SequenceBatch, Option<ForwardCache>)> {
        if input.width() != self.n_inputs() {
            return Err(Error::InputWidth {
                expected: self.n_inputs(),
                got: input.width(),
            });
        }
        let (steps, batch) = (input.steps, input.batch);
        let train = mode == Mode::Train;
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        let mut current = input.data.clone();
        for (p, &rate) in self.layers.iter().zip(&self.dropout) {
            let (gates, cell, hidden) = forward_layer(p, &current, steps, batch);
            let mask = if train && rate > 0.0 {
                let keep = 1.0 / (1.0 - rate);
                Some(Array2::from_shape_simple_fn(hidden.raw_dim(), || {
                    if rng.uniform() < rate {
                        0.0
                    } else {
                        keep
                    }
                }))
            } else {
                None
            };
            let next = match &mask {
                Some(m) => &hidden * m,
                None => hidden.clone(),
            };
            if train {
                layer_caches.push(LayerCache {
                    input: std::mem::replace(&mut current, next),
                    gates,
                    cell,
                    hidden,
                    mask,
                });
            } else {
                current = next;
            }
        }
        let mut output = current.dot(&self.head_w.t());
        output += &self.head_b;
        let cache = train.then(|| ForwardCache {
            steps,
            batch,
            layers: layer_caches,
            head_input: current,
            output: output.clone(),
        });
        Ok((
            SequenceBatch {
                data: output,
                steps,
                batch,
            },
            cache,
        ))
    }

    /// Gradients of the MSE loss (mean over every output entry) with
    /// respect to every parameter. Returns `(gradients, loss)`.
    pub fn backprop(
        &self,
        cache: Option<&ForwardCache>,
        target: &SequenceBatch,
    ) -> Result<(DeepLstmModel, f64)> {
        let count = target.data.len() as f64;
        self.backprop_scaled(cache, target, count)
    }

    /// As [`backprop`](Self::backprop) but dividing squared errors by
    /// `normalizer` instead of the local entry count, so chunks of a larger
    /// batch can be summed.
    pub(crate) fn backprop_scaled(
        &self,
        cache: Option<&ForwardCache>,
        target: &SequenceBatch,
        normalizer: f64,
    ) -> Result<(DeepLstmModel, f64)> {
        let cache = cache.ok_or(Error::NoCache)?;
        if target.steps != cache.steps
            || target.batch != cache.batch
            || target.data.dim() != cache.output.dim()
        {
            return Err(Error::Dimension(format!(
                "target {:?} does not match output {:?}",
                target.data.dim(),
                cache.output.dim()
            )));
        }
        let diff = &cache.output - &target.data;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / normalizer;
        let d_out = diff * (2.0 / normalizer);

        let mut grads = self.zeros_like();
        grads.head_w = d_out.t().dot(&cache.head_input);
        grads.head_b = d_out.sum_axis(Axis(0));
        let mut d_top = d_out.dot(&self.head_w);

        for (l, (p, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            if let Some(m) = &lc.mask {
                d_top *= m;
            }
            let (dw, db, d_in) = backward_layer(p, lc, &d_top, cache.steps, cache.batch);
            grads.layers[l].weights = dw;
            grads.layers[l].bias = db;
            d_top = d_in;
        }
        Ok((grads, loss))
    }
}

/// Eval-mode forward: row 0 estimates VEOG, row 1 HEOG (normalized units).
pub fn predict_eog(model: &DeepLstmModel, x_n: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_n.ncols() == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    // Eval mode draws nothing from the generator.
    let mut rng = SeededRng::new(0);
    model.forward(x_n, Mode::Eval, &mut rng).map(|(y, _)| y)
}

/// Mean over all entries of the squared difference.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let sse: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / pred.len() as f64)
}

/// A batch of equal-length sequences in time-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// `(steps · batch) × width`, row `t·batch + b`.
    pub data: Array2<f64>,
    pub steps: usize,
    pub batch: usize,
}

impl SequenceBatch {
    /// Stack channel-major sequences (`width × T` each, equal shapes).
    pub fn from_sequences(seqs: &[ArrayView2<f64>]) -> Result<Self> {
        let first = seqs
            .first()
            .ok_or_else(|| Error::NoData("empty batch".into()))?;
        let (width, steps) = first.dim();
        if steps == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if let Some(bad) = seqs.iter().find(|s| s.dim() != (width, steps)) {
            return Err(Error::Dimension(format!(
                "batch sequences must share shape {:?}, got {:?}",
                (width, steps),
                bad.dim()
            )));
        }
        let batch = seqs.len();
        let mut data = Array2::zeros((steps * batch, width));
        for (b, seq) in seqs.iter().enumerate() {
            for t in 0..steps {
                data.row_mut(t * batch + b).assign(&seq.column(t));
            }
        }
        Ok(Self { data, steps, batch })
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    /// Back to channel-major `width × T` matrices.
    pub fn to_sequences(&self) -> Vec<Array2<f64>> {
        (0..self.batch)
            .map(|b| {
                let mut out = Array2::zeros((self.width(), self.steps));
                for t in 0..self.steps {
                    out.column_mut(t).assign(&self.data.row(t * self.batch + b));
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    /// Post-activation gates `[f, i, s̃, o]`.
    gates: Array2<f64>,
    cell: Array2<f64>,
    hidden: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Activations retained by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: usize,
    batch: usize,
    layers: Vec<LayerCache>,
    head_input: Array2<f64>,
    output: Array2<f64>,
}

impl ForwardCache {
    /// Input to the dense head (last layer output after dropout).
    pub fn head_input(&self) -> ArrayView2<'_, f64> {
        self.head_input.view()
    }
}

fn forward_layer(
    p: &LstmLayerParams,
    input: &Array2<f64>,
    steps: usize,
    batch: usize,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let h = p.hidden();
    let w_x_t = p.weights.slice(s![.., h..]).t().as_standard_layout().to_owned();
    let w_h_t = p.weights.slice(s![.., ..h]).t().as_standard_layout().to_owned();

    let mut gates = input.dot(&w_x_t);
    gates += &p.bias;
    let rows = steps * batch;
    let mut cell = Array2::<f64>::zeros((rows, h));
    let mut hidden = Array2::<f64>::zeros((rows, h));

    for t in 0..steps {
        let (r0, r1) = (t * batch, (t + 1) * batch);
        if t > 0 {
            let h_prev = hidden.slice(s![r0 - batch..r0, ..]);
            let mut g = gates.slice_mut(s![r0..r1, ..]);
            general_mat_mul(1.0, &h_prev, &w_h_t, 1.0, &mut g);
        }
        let g = gates.as_slice_mut().expect("standard layout");
        let c = cell.as_slice_mut().expect("standard layout");
        let hd = hidden.as_slice_mut().expect("standard layout");
        for r in r0..r1 {
            let gr = &mut g[r * 4 * h..(r + 1) * 4 * h];
            for j in 0..h {
                let f = sigmoid(gr[j]);
                let i = sigmoid(gr[h + j]);
                let cand = gr[2 * h + j].tanh();
                let o = sigmoid(gr[3 * h + j]);
                gr[j] = f;
                gr[h + j] = i;
                gr[2 * h + j] = cand;
                gr[3 * h + j] = o;
                let s_prev = if t > 0 { c[(r - batch) * h + j] } else { 0.0 };
                let s_new = f * s_prev + i * cand;
                c[r * h + j] = s_new;
                hd[r * h + j] = o * s_new.tanh();
            }
        }
    }
    (gates, cell, hidden)
}

/// BPTT through one layer. `d_hidden` is the loss gradient with respect to
/// the layer's (pre-dropout) hidden outputs from above. Returns the weight
/// gradient, bias gradient and gradient with respect to the layer input.
fn backward_layer(
    p: &LstmLayerParams,
    lc: &LayerCache,
    d_hidden: &Array2<f64>,
    steps: usize,
    batch: usize,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let h = p.hidden();
    let rows = steps * batch;
    let w_h = p.weights.slice(s![.., ..h]).as_standard_layout().to_owned();
    let mut d_pre = Array2::<f64>::zeros((rows, 4 * h));
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut ds_next = vec![0.0; batch * h];

    let gates = lc.gates.as_slice().expect("standard layout");
    let cell = lc.cell.as_slice().expect("standard layout");
    let dh_above = d_hidden.as_standard_layout();
    let dh_above = dh_above.as_slice().expect("standard layout");

    for t in (0..steps).rev() {
        let (r0, r1) = (t * batch, (t + 1) * batch);
        {
            let dp = d_pre.as_slice_mut().expect("standard layout");
            let dhn = dh_next.as_slice().expect("standard layout");
            for r in r0..r1 {
                let b = r - r0;
                let gr = &gates[r * 4 * h..(r + 1) * 4 * h];
                let dpr = &mut dp[r * 4 * h..(r + 1) * 4 * h];
                for j in 0..h {
                    let dh = dh_above[r * h + j] + dhn[b * h + j];
                    let (f, i, cand, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let ts = cell[r * h + j].tanh();
                    let s_prev = if t > 0 { cell[(r - batch) * h + j] } else { 0.0 };
                    let d_o = dh * ts;
                    let ds = dh * o * (1.0 - ts * ts) + ds_next[b * h + j];
                    ds_next[b * h + j] = ds * f;
                    dpr[j] = ds * s_prev * f * (1.0 - f);
                    dpr[h + j] = ds * cand * i * (1.0 - i);
                    dpr[2 * h + j] = ds * i * (1.0 - cand * cand);
                    dpr[3 * h + j] = d_o * o * (1.0 - o);
                }
            }
        }
        if t > 0 {
            let dp_t = d_pre.slice(s![r0..r1, ..]);
            general_mat_mul(1.0, &dp_t, &w_h, 0.0, &mut dh_next);
        }
    }

    // h_{t-1} for every row; zeros at t = 0.
    let mut h_prev = Array2::<f64>::zeros((rows, h));
    if steps > 1 {
        h_prev
            .slice_mut(s![batch.., ..])
            .assign(&lc.hidden.slice(s![..rows - batch, ..]));
    }
    let mut dw = Array2::<f64>::zeros(p.weights.raw_dim());
    {
        let mut dw_h = dw.slice_mut(s![.., ..h]);
        general_mat_mul(1.0, &d_pre.t(), &h_prev, 0.0, &mut dw_h);
    }
    {
        let mut dw_x = dw.slice_mut(s![.., h..]);
        general_mat_mul(1.0, &d_pre.t(), &lc.input, 0.0, &mut dw_x);
    }
    let db = d_pre.sum_axis(Axis(0));
    let d_input = d_pre.dot(&p.weights.slice(s![.., h..]));
    (dw, db, d_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::randn;
    use ndarray::array;

    fn tiny(n_in: usize, hidden: usize, dropout: &[f64], seed: u64) -> DeepLstmModel {
        let mut rng = SeededRng::new(seed);
        let mut m = DeepLstmModel::with_architecture(n_in, hidden, dropout, 2, &mut rng).unwrap();
        // non-trivial biases so every gradient entry is exercised
        for l in &mut m.layers {
            l.bias.iter_mut().for_each(|b| *b += 0.3 * rng.normal());
        }
        m.head_b.iter_mut().for_each(|b| *b = 0.1 * rng.normal());
        m
    }

    #[test]
    fn zero_cell_stays_zero() {
        let p = LstmLayerParams::zeros(3, 2);
        let out = cell_step(array![0.7, -1.2].view(), &LstmState::zeros(3), &p).unwrap();
        assert_eq!(out, LstmState::zeros(3));
    }

    #[test]
    fn saturated_gates_remember() {
        let mut p = LstmLayerParams::zeros(2, 1);
        p.bias.slice_mut(s![0..2]).fill(100.0);
        p.bias.slice_mut(s![2..4]).fill(-100.0);
        let prev = LstmState {
            h: array![0.2, -0.4],
            s: array![0.8, -1.5],
        };
        let out = cell_step(array![3.0].view(), &prev, &p).unwrap();
        for j in 0..2 {
            assert!((out.s[j] - prev.s[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        let mut p = LstmLayerParams::zeros(1, 1);
        p.weights.fill(0.5);
        let out = cell_step(array![1.0].view(), &LstmState::zeros(1), &p).unwrap();
        // every pre-activation is 0.5·h + 0.5·x = 0.5
        let sig = 1.0 / (1.0 + (-0.5f64).exp());
        let s_t = sig * 0.5f64.tanh();
        let h_t = sig * s_t.tanh();
        assert!((out.s[0] - s_t).abs() < 1e-15);
        assert!((out.h[0] - h_t).abs() < 1e-15);
    }

    #[test]
    fn cell_rejects_bad_shapes() {
        let p = LstmLayerParams::zeros(3, 2);
        assert!(matches!(
            cell_step(array![1.0].view(), &LstmState::zeros(3), &p),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn gate_views_partition_weights() {
        let mut rng = SeededRng::new(1);
        let p = LstmLayerParams::init(3, 2, &mut rng);
        let w = Gate::ALL.map(|g| p.gate_weights(g));
        let b = Gate::ALL.map(|g| p.gate_bias(g));
        assert_eq!(LstmLayerParams::from_gates(w, b).unwrap(), p);
        assert!(p.gate_bias(Gate::Forget).iter().all(|&v| v == 1.0));
        assert!(p.gate_bias(Gate::Output).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_model_outputs_head_bias() {
        let mut m = DeepLstmModel::new(3, &mut SeededRng::new(0)).zeros_like();
        m.head_b = array![0.25, -1.5];
        let x = randn(3, 9, &mut SeededRng::new(1));
        let y = predict_eog(&m, x.view()).unwrap();
        assert_eq!(y.dim(), (2, 9));
        assert!(y.row(0).iter().all(|&v| v == 0.25));
        assert!(y.row(1).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let m = tiny(2, 4, &[0.0, 0.0], 3);
        let x = randn(2, 12, &mut SeededRng::new(2));
        let mut rng = SeededRng::new(7);
        let (a, cache) = m.forward(x.view(), Mode::Train, &mut rng).unwrap();
        let (b, none) = m.forward(x.view(), Mode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(cache.is_some() && none.is_none());
    }

    #[test]
    fn forward_matches_cell_step_composition() {
        let m = tiny(2, 3, &[0.0], 11);
        let x = randn(2, 3, &mut SeededRng::new(5));
        let y = predict_eog(&m, x.view()).unwrap();
        let mut state = LstmState::zeros(3);
        for t in 0..3 {
            state = cell_step(x.column(t), &state, &m.layers[0]).unwrap();
            let expect = m.head_w.dot(&state.h) + &m.head_b;
            for k in 0..2 {
                assert!((y[[k, t]] - expect[k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn batched_forward_equals_per_sequence() {
        let m = tiny(3, 5, &[0.0, 0.0], 4);
        let mut rng = SeededRng::new(8);
        let seqs: Vec<Array2<f64>> = (0..4).map(|_| randn(3, 6, &mut rng)).collect();
        let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
        let batch = SequenceBatch::from_sequences(&views).unwrap();
        let (out, _) = m.forward_batch(&batch, Mode::Eval, &mut rng).unwrap();
        for (seq, got) in seqs.iter().zip(out.to_sequences()) {
            let single = predict_eog(&m, seq.view()).unwrap();
            assert!((&single - &got).iter().all(|d| d.abs() < 1e-13));
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = tiny(3, 2, &[0.0], 1);
        let x = randn(2, 5, &mut SeededRng::new(1));
        assert!(matches!(
            predict_eog(&m, x.view()),
            Err(Error::InputWidth {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn eval_is_pure() {
        let m = DeepLstmModel::new(4, &mut SeededRng::new(2));
        let x = randn(4, 30, &mut SeededRng::new(3));
        assert_eq!(
            predict_eog(&m, x.view()).unwrap(),
            predict_eog(&m, x.view()).unwrap()
        );
    }

    #[test]
    fn accepts_any_length() {
        let m = DeepLstmModel::new(19, &mut SeededRng::new(2));
        for t in [1, 100, 6000] {
            let x = randn(19, t, &mut SeededRng::new(t as u64));
            assert_eq!(predict_eog(&m, x.view()).unwrap().dim(), (2, t));
        }
    }

    #[test]
    fn mse_examples() {
        let y = array![[0.0, 0.0]];
        assert_eq!(mse_loss(y.view(), y.view()).unwrap(), 0.0);
        assert_eq!(mse_loss(array![[1.0, 2.0]].view(), y.view()).unwrap(), 2.5);
        let c = Array2::from_elem((2, 5), 1.5);
        let z = Array2::zeros((2, 5));
        assert_eq!(mse_loss(c.view(), z.view()).unwrap(), 2.25);
        assert!(mse_loss(c.view(), y.view()).is_err());
    }

    #[test]
    fn backprop_needs_cache() {
        let m = tiny(2, 3, &[0.0], 1);
        let y = SequenceBatch::from_sequences(&[Array2::zeros((2, 4)).view()]).unwrap();
        assert!(matches!(m.backprop(None, &y), Err(Error::NoCache)));
    }

    #[test]
    fn gradients_vanish_at_the_target() {
        let m = tiny(2, 3, &[0.2, 0.0], 6);
        let x = randn(2, 7, &mut SeededRng::new(9));
        let (y, cache) = m.forward(x.view(), Mode::Train, &mut SeededRng::new(1)).unwrap();
        let target = SequenceBatch::from_sequences(&[y.view()]).unwrap();
        let (g, loss) = m.backprop(cache.as_ref(), &target).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.l2_norm(), 0.0);
        let shapes: Vec<usize> = g.param_slices().iter().map(|s| s.len()).collect();
        let expect: Vec<usize> = m.param_slices().iter().map(|s| s.len()).collect();
        assert_eq!(shapes, expect);
        assert_eq!(g.layers[1].weights.dim(), m.layers[1].weights.dim());
        assert_eq!(g.head_w.dim(), m.head_w.dim());
    }

    /// Max relative error of BPTT against central differences, per tensor.
    pub(crate) fn gradient_check(
        model: &DeepLstmModel,
        x: &Array2<f64>,
        y: &Array2<f64>,
        mask_seed: u64,
        eps: f64,
    ) -> Vec<f64> {
        let target = SequenceBatch::from_sequences(&[y.view()]).unwrap();
        let loss_of = |m: &DeepLstmModel| {
            let (out, _) = m
                .forward(x.view(), Mode::Train, &mut SeededRng::new(mask_seed))
                .unwrap();
            mse_loss(out.view(), y.view()).unwrap()
        };
        let (_, cache) = model
            .forward(x.view(), Mode::Train, &mut SeededRng::new(mask_seed))
            .unwrap();
        let (grads, _) = model.backprop(cache.as_ref(), &target).unwrap();
        let analytic: Vec<Vec<f64>> = grads.param_slices().iter().map(|s| s.to_vec()).collect();

        let mut worst = Vec::new();
        for (ti, g) in analytic.iter().enumerate() {
            let mut max_rel = 0.0_f64;
            for k in 0..g.len() {
                let mut plus = model.clone();
                plus.param_slices_mut()[ti][k] += eps;
                let mut minus = model.clone();
                minus.param_slices_mut()[ti][k] -= eps;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let denom = g[k].abs().max(fd.abs()).max(1e-10);
                max_rel = max_rel.max((g[k] - fd).abs() / denom);
            }
            worst.push(max_rel);
        }
        worst
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let m = tiny(2, 3, &[0.0], 21);
        let x = randn(2, 5, &mut SeededRng::new(22));
        let y = randn(2, 5, &mut SeededRng::new(23));
        for (i, err) in gradient_check(&m, &x, &y, 0, 1e-5).iter().enumerate() {
            assert!(*err < 1e-4, "tensor {i}: {err:e}");
        }
    }

    #[test]
    fn bptt_with_dropout_matches_finite_differences() {
        let m = tiny(2, 3, &[0.3, 0.2], 31);
        let x = randn(2, 5, &mut SeededRng::new(32));
        let y = randn(2, 5, &mut SeededRng::new(33));
        for (i, err) in gradient_check(&m, &x, &y, 99, 1e-5).iter().enumerate() {
            assert!(*err < 1e-4, "tensor {i}: {err:e}");
        }
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let m = tiny(2, 4, &[0.3], 41);
        let x = randn(2, 3, &mut SeededRng::new(42));
        let mut rng = SeededRng::new(0);
        let (_, eval_cache) = {
            let mut off = m.clone();
            off.dropout = vec![0.0];
            off.forward(x.view(), Mode::Train, &mut rng).unwrap()
        };
        let reference = eval_cache.unwrap().head_input().to_owned();
        let draws = 20_000;
        let mut acc = Array2::<f64>::zeros(reference.raw_dim());
        for _ in 0..draws {
            let (_, c) = m.forward(x.view(), Mode::Train, &mut rng).unwrap();
            acc += &c.unwrap().head_input();
        }
        acc /= draws as f64;
        for (a, r) in acc.iter().zip(reference.iter()) {
            assert!((a - r).abs() <= 0.02 * r.abs().max(1e-3), "{a} vs {r}");
        }
    }
}
