//! Dense row-major matrices, flat-parameter MLPs with hand-written backward
//! passes, the Adam optimizer and a central-difference gradient checker.
//!
//! Every network in the crate (actor, twin critics, target critics, source
//! policies) is an MLP whose learnable state lives in one [`ParamVector`].

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("layer {layer}: expected input width {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite gradient entry at index {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally sized rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(TensorError::LengthMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Concatenates the columns of `left` and `right` row by row.
    pub fn hstack(left: &Matrix, right: &Matrix) -> Result<Self, TensorError> {
        if left.rows != right.rows {
            return Err(TensorError::LengthMismatch {
                expected: left.rows,
                got: right.rows,
            });
        }
        let cols = left.cols + right.cols;
        let mut data = Vec::with_capacity(left.rows * cols);
        for i in 0..left.rows {
            data.extend_from_slice(left.row(i));
            data.extend_from_slice(right.row(i));
        }
        Ok(Self {
            rows: left.rows,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copies columns `start..start + width` into a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Activation applied after hidden layers and after the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Activations {
    pub hidden: Activation,
    pub output: Activation,
}

impl Activations {
    pub const fn new(hidden: Activation, output: Activation) -> Self {
        Self { hidden, output }
    }

    pub fn for_layer(&self, layer: usize, n_layers: usize) -> Activation {
        if layer + 1 == n_layers {
            self.output
        } else {
            self.hidden
        }
    }
}

/// One affine layer: `rows` outputs, `cols` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat storage of all weights and biases of an MLP.
///
/// Layer `l` occupies `rows * cols` weights (row-major, one row per output
/// unit) followed by `rows` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    shapes: Vec<LayerShape>,
}

impl ParamVector {
    /// Layer shapes for widths `[input, hidden..., output]`.
    pub fn shapes_for(widths: &[usize]) -> Result<Vec<LayerShape>, TensorError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(TensorError::InvalidShape(format!("{widths:?}")));
        }
        Ok(widths
            .windows(2)
            .map(|w| LayerShape {
                rows: w[1],
                cols: w[0],
            })
            .collect())
    }

    pub fn zeros(shapes: Vec<LayerShape>) -> Self {
        let len = shapes.iter().map(LayerShape::len).sum();
        Self {
            values: vec![0.0; len],
            shapes,
        }
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        Self::zeros(other.shapes.clone())
    }

    pub fn from_values(shapes: Vec<LayerShape>, values: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shapes.iter().map(LayerShape::len).sum();
        if values.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { values, shapes })
    }

    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init_uniform<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self, TensorError> {
        let shapes = Self::shapes_for(widths)?;
        let mut values = Vec::with_capacity(shapes.iter().map(LayerShape::len).sum());
        for s in &shapes {
            let bound = 1.0 / (s.cols as f64).sqrt();
            for _ in 0..s.len() {
                values.push(rng.gen_range(-bound..bound));
            }
        }
        Ok(Self { values, shapes })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.shapes.first().map_or(0, |s| s.cols)
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().map_or(0, |s| s.rows)
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.shapes[..layer].iter().map(LayerShape::len).sum()
    }

    /// Weight (row-major) and bias slices of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let s = self.shapes[layer];
        let off = self.layer_offset(layer);
        let (w, rest) = self.values[off..off + s.len()].split_at(s.rows * s.cols);
        (w, rest)
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.shapes[layer];
        let off = self.layer_offset(layer);
        let (w, rest) = self.values[off..off + s.len()].split_at_mut(s.rows * s.cols);
        (w, rest)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }
}

/// `c[m x n] = a[m x k] * b[k x n]` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices whose extents cover the strided
    // m x k, k x n and m x n views; c does not alias a or b.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Activations recorded by a batched forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    activations: Activations,
    /// `inputs[l]` feeds layer `l`; the last entry is the network output.
    inputs: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.inputs.last().expect("forward pass has at least the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.inputs.pop().expect("forward pass has at least the input")
    }

    /// Reverse-mode gradients summed over the batch rows.
    pub fn backward(
        &self,
        params: &ParamVector,
        upstream: &Matrix,
    ) -> Result<(ParamVector, Matrix), TensorError> {
        let (g, x) = self.backward_inner(params, upstream, true, true)?;
        Ok((g.expect("requested"), x.expect("requested")))
    }

    pub fn backward_params(
        &self,
        params: &ParamVector,
        upstream: &Matrix,
    ) -> Result<ParamVector, TensorError> {
        let (g, _) = self.backward_inner(params, upstream, true, false)?;
        Ok(g.expect("requested"))
    }

    pub fn backward_input(&self, params: &ParamVector, upstream: &Matrix) -> Result<Matrix, TensorError> {
        let (_, x) = self.backward_inner(params, upstream, false, true)?;
        Ok(x.expect("requested"))
    }

    fn backward_inner(
        &self,
        params: &ParamVector,
        upstream: &Matrix,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<ParamVector>, Option<Matrix>), TensorError> {
        let out = self.output();
        if upstream.rows != out.rows || upstream.cols != out.cols {
            return Err(TensorError::DimensionMismatch {
                layer: params.shapes.len().saturating_sub(1),
                expected: out.cols,
                got: upstream.cols,
            });
        }
        let n_layers = params.shapes.len();
        let batch = out.rows;
        let mut grads = want_params.then(|| ParamVector::zeros_like(params));
        let mut delta = upstream.clone();
        for l in (0..n_layers).rev() {
            let shape = params.shapes[l];
            let act = self.activations.for_layer(l, n_layers);
            let y = &self.inputs[l + 1];
            if act != Activation::Identity {
                for (d, &yv) in delta.data.iter_mut().zip(&y.data) {
                    *d *= act.derivative_from_output(yv);
                }
            }
            let x = &self.inputs[l];
            if let Some(g) = grads.as_mut() {
                let (gw, gb) = g.layer_mut(l);
                // dW = delta^T x
                gemm(
                    shape.rows,
                    batch,
                    shape.cols,
                    &delta.data,
                    1,
                    shape.rows as isize,
                    &x.data,
                    shape.cols as isize,
                    1,
                    gw,
                    0.0,
                );
                for i in 0..batch {
                    for (b, d) in gb.iter_mut().zip(delta.row(i)) {
                        *b += d;
                    }
                }
            }
            if l > 0 || want_input {
                let (w, _) = params.layer(l);
                let mut next = Matrix::zeros(batch, shape.cols);
                // dX = delta W
                gemm(
                    batch,
                    shape.rows,
                    shape.cols,
                    &delta.data,
                    shape.rows as isize,
                    1,
                    w,
                    shape.cols as isize,
                    1,
                    &mut next.data,
                    0.0,
                );
                delta = next;
            }
        }
        Ok((grads, want_input.then_some(delta)))
    }
}

/// Batched forward pass; each row of `input` is one sample.
pub fn forward_batch(
    params: &ParamVector,
    activations: Activations,
    input: &Matrix,
) -> Result<ForwardPass, TensorError> {
    let n_layers = params.shapes.len();
    let mut inputs = Vec::with_capacity(n_layers + 1);
    inputs.push(input.clone());
    for (l, shape) in params.shapes.iter().enumerate() {
        let x = &inputs[l];
        if x.cols != shape.cols {
            return Err(TensorError::DimensionMismatch {
                layer: l,
                expected: shape.cols,
                got: x.cols,
            });
        }
        let (w, b) = params.layer(l);
        let mut z = Matrix::zeros(x.rows, shape.rows);
        for i in 0..x.rows {
            z.row_mut(i).copy_from_slice(b);
        }
        // Z = X W^T + b
        gemm(
            x.rows,
            shape.cols,
            shape.rows,
            &x.data,
            shape.cols as isize,
            1,
            w,
            1,
            shape.cols as isize,
            &mut z.data,
            1.0,
        );
        let act = activations.for_layer(l, n_layers);
        if act != Activation::Identity {
            for v in z.data.iter_mut() {
                *v = act.apply(*v);
            }
        }
        inputs.push(z);
    }
    Ok(ForwardPass { activations, inputs })
}

/// Output-only batched forward pass.
pub fn predict_batch(
    params: &ParamVector,
    activations: Activations,
    input: &Matrix,
) -> Result<Matrix, TensorError> {
    forward_batch(params, activations, input).map(ForwardPass::into_output)
}

pub fn mlp_forward(
    params: &ParamVector,
    activations: Activations,
    input: &[f64],
) -> Result<Vec<f64>, TensorError> {
    let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
    Ok(predict_batch(params, activations, &x)?.into_vec())
}

/// Gradients of `upstream . f(input)` w.r.t. parameters and input.
pub fn mlp_backward(
    params: &ParamVector,
    activations: Activations,
    input: &[f64],
    upstream: &[f64],
) -> Result<(ParamVector, Vec<f64>), TensorError> {
    let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
    let pass = forward_batch(params, activations, &x)?;
    let g = Matrix::from_vec(1, upstream.len(), upstream.to_vec()).map_err(|_| {
        TensorError::DimensionMismatch {
            layer: params.shapes.len().saturating_sub(1),
            expected: params.output_dim(),
            got: upstream.len(),
        }
    })?;
    let (pg, ig) = pass.backward(params, &g)?;
    Ok((pg, ig.into_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
        }
    }

    /// One Adam update of `params` in place. Rejects non-finite gradients
    /// before touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), TensorError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TensorError::LengthMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(TensorError::NonFiniteGradient { index, value });
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Applies one Adam step to a [`ParamVector`].
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ParamVector,
    grads: &ParamVector,
) -> Result<(), TensorError> {
    state.step(&mut params.values, &grads.values)
}

/// Max over coordinates of `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`
/// where `numeric` is the central difference with the given step.
pub fn grad_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss_fn(&probe);
        probe[i] = orig - step;
        let down = loss_fn(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.get(i).copied().unwrap_or(f64::NAN);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if err.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}
