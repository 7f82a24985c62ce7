//! Minimal dense policy/value network with hand-written reverse-mode
//! differentiation and an Adam optimizer.
//!
//! Both learning mechanisms in this crate operate on the same substrate: a
//! tanh MLP trunk with two linear heads (action logits and a scalar state
//! value). Gradient training differentiates losses through it; evolution
//! treats its flattened weights as a genome. Keeping the network tiny and
//! the gradients hand-written makes every derivative checkable against
//! central finite differences, which the test suite does exhaustively.
//!
//! Shapes are described by [`NetworkSpec`]; weights live in a flat
//! [`ParameterVector`] whose layout is derived from the spec. All functions
//! here are pure: they take parameters and return new values, so population
//! members can be evaluated and trained concurrently without locks.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the policy/value network.
///
/// The trunk is shared: observations pass through the hidden layers once,
/// and both heads read the final hidden activation. Hidden activations are
/// always tanh; the heads are linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Observation dimension.
    pub obs_dim: usize,
    /// Hidden layer widths; at least one layer.
    pub hidden: Vec<usize>,
    /// Number of discrete actions (policy head width).
    pub num_actions: usize,
}

/// Shape of one parameter block: a `rows × cols` weight matrix (row-major)
/// followed by `bias` bias entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub bias: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols + self.bias
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl NetworkSpec {
    /// Validates dimensions: at least one hidden layer, everything ≥ 1.
    pub fn new(obs_dim: usize, hidden: Vec<usize>, num_actions: usize) -> Result<Self> {
        if obs_dim == 0 || num_actions == 0 {
            return Err(Error::contract("network dimensions must be >= 1"));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::contract("at least one hidden layer of width >= 1 required"));
        }
        Ok(NetworkSpec { obs_dim, hidden, num_actions })
    }

    /// Parameter blocks in flattening order: trunk layers, then the policy
    /// head, then the value head.
    pub fn layout(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 2);
        let mut in_dim = self.obs_dim;
        for &width in &self.hidden {
            shapes.push(LayerShape { rows: width, cols: in_dim, bias: width });
            in_dim = width;
        }
        shapes.push(LayerShape { rows: self.num_actions, cols: in_dim, bias: self.num_actions });
        shapes.push(LayerShape { rows: 1, cols: in_dim, bias: 1 });
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(LayerShape::len).sum()
    }
}

/// Flat weight vector plus the layer layout that gives it meaning.
///
/// Two vectors with identical layouts are element-wise compatible: the
/// evolutionary operators blend and perturb `values` directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayerShape>,
}

impl ParameterVector {
    /// All-zero parameters for `spec`.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layout = spec.layout();
        let len = layout.iter().map(LayerShape::len).sum();
        ParameterVector { values: vec![0.0; len], layout }
    }

    /// Wraps externally produced values (checkpoint load, tests), checking
    /// length against the spec's layout.
    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        let layout = spec.layout();
        let expect: usize = layout.iter().map(LayerShape::len).sum();
        if values.len() != expect {
            return Err(Error::contract(format!(
                "parameter vector length {} does not match layout length {expect}",
                values.len()
            )));
        }
        Ok(ParameterVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &ParameterVector) -> bool {
        self.layout == other.layout
    }

    pub fn matches_spec(&self, spec: &NetworkSpec) -> bool {
        self.layout == spec.layout() && self.values.len() == spec.num_params()
    }

    /// Offset of layer `l`'s block in `values`.
    fn offset(&self, l: usize) -> usize {
        self.layout[..l].iter().map(LayerShape::len).sum()
    }

    /// Weight-matrix and bias slices for layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let shape = self.layout[l];
        let start = self.offset(l);
        let split = start + shape.rows * shape.cols;
        (&self.values[start..split], &self.values[split..split + shape.bias])
    }

    fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let shape = self.layout[l];
        let start = self.offset(l);
        let split = start + shape.rows * shape.cols;
        let (_, rest) = self.values.split_at_mut(start);
        let (block, _) = rest.split_at_mut(shape.len());
        let (w, b) = block.split_at_mut(split - start);
        (w, b)
    }

    /// Expands the flat vector into per-layer `(weights, bias)` pairs with
    /// row-major weight matrices.
    pub fn to_layers(&self) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
        (0..self.layout.len())
            .map(|l| {
                let shape = self.layout[l];
                let (w, b) = self.layer(l);
                let rows = (0..shape.rows)
                    .map(|r| w[r * shape.cols..(r + 1) * shape.cols].to_vec())
                    .collect();
                (rows, b.to_vec())
            })
            .collect()
    }

    /// Inverse of [`ParameterVector::to_layers`].
    pub fn from_layers(spec: &NetworkSpec, layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Result<Self> {
        let layout = spec.layout();
        if layers.len() != layout.len() {
            return Err(Error::contract("layer count does not match spec layout"));
        }
        let mut values = Vec::with_capacity(spec.num_params());
        for (shape, (rows, bias)) in layout.iter().zip(layers) {
            if rows.len() != shape.rows
                || rows.iter().any(|r| r.len() != shape.cols)
                || bias.len() != shape.bias
            {
                return Err(Error::contract("layer shape does not match spec layout"));
            }
            for row in rows {
                values.extend_from_slice(row);
            }
            values.extend_from_slice(bias);
        }
        Self::from_values(spec, values)
    }

    /// Which layer a flat index belongs to; used for error reporting.
    fn layer_of(&self, idx: usize) -> usize {
        let mut end = 0;
        for (l, shape) in self.layout.iter().enumerate() {
            end += shape.len();
            if idx < end {
                return l;
            }
        }
        self.layout.len().saturating_sub(1)
    }

    /// Errors if any value in the vector is NaN or infinite.
    pub fn check_finite(&self, stage: &'static str) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { stage, layer: self.layer_of(i) });
            }
        }
        Ok(())
    }

    /// Euclidean norm of the whole vector.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Orthogonal-style initialisation: orthonormal weight matrices scaled by a
/// per-block gain (√2 trunk, 0.01 policy head, 1.0 value head), zero biases.
/// The tiny policy gain keeps the initial policy near-uniform, which both
/// learners want: gradient updates see high entropy and the first population
/// has no accidental strong preferences.
pub fn init_params(spec: &NetworkSpec, rng: &mut impl Rng) -> ParameterVector {
    let layout = spec.layout();
    let trunk_layers = spec.hidden.len();
    let mut params = ParameterVector::zeros(spec);
    for (l, shape) in layout.iter().enumerate() {
        let gain = if l < trunk_layers {
            std::f64::consts::SQRT_2
        } else if l == trunk_layers {
            0.01
        } else {
            1.0
        };
        let w = orthogonal(shape.rows, shape.cols, gain, rng);
        let (weights, _bias) = params.layer_mut(l);
        weights.copy_from_slice(&w);
    }
    params
}

/// Row-major `rows × cols` matrix with orthonormal rows (or columns when
/// rows > cols), scaled by `gain`. Gram-Schmidt over Gaussian draws; a
/// degenerate draw (numerically dependent) is simply redrawn.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Vec<f64> {
    let long = rows.max(cols);
    let short = rows.min(cols);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if rows <= cols { basis[r][c] } else { basis[c][r] };
            w[r * cols + c] = gain * v;
        }
    }
    w
}

/// Trunk activations and head outputs for one observation.
pub struct ForwardCache {
    /// `activations[0]` is the observation; `activations[i]` is the output
    /// of trunk layer `i−1` (tanh applied).
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut z = 0.0;
        let row = &w[r * cols..(r + 1) * cols];
        for (wi, xi) in row.iter().zip(x) {
            z += wi * xi;
        }
        out.push(z + b[r]);
    }
    out
}

/// Forward pass keeping intermediate activations for [`backward`].
pub fn forward_cached(
    params: &ParameterVector,
    spec: &NetworkSpec,
    obs: &[f64],
) -> Result<ForwardCache> {
    if obs.len() != spec.obs_dim {
        return Err(Error::contract(format!(
            "observation length {} does not match network input {}",
            obs.len(),
            spec.obs_dim
        )));
    }
    if !params.matches_spec(spec) {
        return Err(Error::contract("parameter vector layout does not match network spec"));
    }
    let trunk_layers = spec.hidden.len();
    let mut activations = Vec::with_capacity(trunk_layers + 1);
    activations.push(obs.to_vec());
    for l in 0..trunk_layers {
        let shape = params.layout[l];
        let (w, b) = params.layer(l);
        let mut z = affine(w, b, &activations[l], shape.rows, shape.cols);
        for zi in &mut z {
            *zi = zi.tanh();
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "forward activation", layer: l });
        }
        activations.push(z);
    }
    let last = &activations[trunk_layers];
    let policy = params.layout[trunk_layers];
    let (wp, bp) = params.layer(trunk_layers);
    let logits = affine(wp, bp, last, policy.rows, policy.cols);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "forward logits", layer: trunk_layers });
    }
    let (wv, bv) = params.layer(trunk_layers + 1);
    let value = affine(wv, bv, last, 1, policy.cols)[0];
    if !value.is_finite() {
        return Err(Error::NonFinite { stage: "forward value", layer: trunk_layers + 1 });
    }
    Ok(ForwardCache { activations, logits, value })
}

/// Maps an observation to action logits and a state-value estimate.
pub fn forward(
    params: &ParameterVector,
    spec: &NetworkSpec,
    obs: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let cache = forward_cached(params, spec, obs)?;
    Ok((cache.logits, cache.value))
}

/// log Σ exp(logits), max-shifted for stability.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Softmax probabilities of the logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// log π(action) under the softmax distribution of `logits`.
pub fn softmax_logprob(logits: &[f64], action: usize) -> Result<f64> {
    if action >= logits.len() {
        return Err(Error::contract(format!(
            "action {action} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(logits[action] - log_sum_exp(logits))
}

/// Shannon entropy (nats) of the softmax distribution of `logits`.
/// Always within `[0, ln(n)]` up to rounding.
pub fn entropy(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::contract("entropy of empty logits"));
    }
    let lse = log_sum_exp(logits);
    // H = −Σ p ln p with ln p = l − lse; every term is ≥ 0 because lse ≥ l.
    Ok(logits.iter().map(|l| (l - lse).exp() * (lse - l)).sum())
}

/// A differentiable training objective over a batch of observations.
///
/// [`backward`] owns the network side of the chain rule; implementors own
/// the loss side: given the network outputs for sample `i`, produce the
/// sample's loss contribution and its gradients with respect to the logits
/// and the value. The batch loss is the mean of the contributions.
pub trait BatchLoss {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observation fed to the network for sample `i`.
    fn observation(&self, i: usize) -> &[f64];

    /// `(loss_i, ∂loss_i/∂logits, ∂loss_i/∂value)` at the given outputs.
    fn at_outputs(&self, i: usize, logits: &[f64], value: f64) -> (f64, Vec<f64>, f64);
}

/// Mean loss over the batch, forward passes only.
pub fn batch_loss(params: &ParameterVector, spec: &NetworkSpec, loss: &dyn BatchLoss) -> Result<f64> {
    if loss.is_empty() {
        return Err(Error::contract("loss batch must be nonempty"));
    }
    let mut total = 0.0;
    for i in 0..loss.len() {
        let cache = forward_cached(params, spec, loss.observation(i))?;
        let (li, _, _) = loss.at_outputs(i, &cache.logits, cache.value);
        if !li.is_finite() {
            return Err(Error::NonFiniteLoss(format!("sample {i} produced {li}")));
        }
        total += li;
    }
    Ok(total / loss.len() as f64)
}

/// Reverse-mode gradient of the mean batch loss with respect to every
/// parameter. Returns `(loss, gradient)`; the gradient shares the input's
/// layout and is checked finite layer by layer.
pub fn backward(
    params: &ParameterVector,
    spec: &NetworkSpec,
    loss: &dyn BatchLoss,
) -> Result<(f64, ParameterVector)> {
    if loss.is_empty() {
        return Err(Error::contract("loss batch must be nonempty"));
    }
    if !params.matches_spec(spec) {
        return Err(Error::contract("parameter vector layout does not match network spec"));
    }
    let trunk_layers = spec.hidden.len();
    let mut grad = ParameterVector::zeros(spec);
    let mut total_loss = 0.0;

    for i in 0..loss.len() {
        let cache = forward_cached(params, spec, loss.observation(i))?;
        let (li, dlogits, dvalue) = loss.at_outputs(i, &cache.logits, cache.value);
        if !li.is_finite() {
            return Err(Error::NonFiniteLoss(format!("sample {i} produced {li}")));
        }
        if dlogits.len() != spec.num_actions {
            return Err(Error::contract("loss returned gradient of wrong arity"));
        }
        total_loss += li;

        let last = &cache.activations[trunk_layers];
        let width = last.len();

        // Policy head: dW = dlogits ⊗ h, db = dlogits.
        {
            let (wp, _) = params.layer(trunk_layers);
            let mut da = vec![0.0; width];
            for r in 0..spec.num_actions {
                for c in 0..width {
                    da[c] += wp[r * width + c] * dlogits[r];
                }
            }
            let (gw, gb) = grad.layer_mut(trunk_layers);
            for r in 0..spec.num_actions {
                for c in 0..width {
                    gw[r * width + c] += dlogits[r] * last[c];
                }
                gb[r] += dlogits[r];
            }
            // Value head contributes to the same trunk gradient.
            let (wv, _) = params.layer(trunk_layers + 1);
            for c in 0..width {
                da[c] += wv[c] * dvalue;
            }
            let (gwv, gbv) = grad.layer_mut(trunk_layers + 1);
            for c in 0..width {
                gwv[c] += dvalue * last[c];
            }
            gbv[0] += dvalue;

            // Trunk, last layer to first: dz = da ⊙ (1 − tanh²).
            for l in (0..trunk_layers).rev() {
                let act = &cache.activations[l + 1];
                let input = &cache.activations[l];
                let shape = params.layout[l];
                let dz: Vec<f64> =
                    da.iter().zip(act).map(|(d, a)| d * (1.0 - a * a)).collect();
                let (gw, gb) = grad.layer_mut(l);
                for r in 0..shape.rows {
                    for c in 0..shape.cols {
                        gw[r * shape.cols + c] += dz[r] * input[c];
                    }
                    gb[r] += dz[r];
                }
                if l > 0 {
                    let (w, _) = params.layer(l);
                    let mut next = vec![0.0; shape.cols];
                    for r in 0..shape.rows {
                        for c in 0..shape.cols {
                            next[c] += w[r * shape.cols + c] * dz[r];
                        }
                    }
                    da = next;
                }
            }
        }
    }

    let scale = 1.0 / loss.len() as f64;
    for v in &mut grad.values {
        *v *= scale;
    }
    total_loss *= scale;
    grad.check_finite("backward gradient")?;
    if !total_loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("batch loss {total_loss}")));
    }
    Ok((total_loss, grad))
}

/// Central-difference gradient of the mean batch loss: coordinate `j` is
/// `(L(θ + h e_j) − L(θ − h e_j)) / 2h`. Exists to cross-check
/// [`backward`]; it is O(params × batch) and only sensible for small nets.
pub fn finite_difference_gradient(
    params: &ParameterVector,
    spec: &NetworkSpec,
    loss: &dyn BatchLoss,
    h: f64,
) -> Result<ParameterVector> {
    let mut grad = ParameterVector::zeros(spec);
    let mut probe = params.clone();
    for j in 0..params.len() {
        let original = probe.values[j];
        probe.values[j] = original + h;
        let up = batch_loss(&probe, spec, loss)?;
        probe.values[j] = original - h;
        let down = batch_loss(&probe, spec, loss)?;
        probe.values[j] = original;
        grad.values[j] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Adam optimizer state: exponential moment estimates plus hyperparameters.
/// One state per trained parameter vector; single-writer by contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    /// First-moment (mean) estimate per parameter.
    pub m: Vec<f64>,
    /// Second-moment (uncentered variance) estimate per parameter.
    pub v: Vec<f64>,
    /// Completed update count; bias correction uses `t` after increment.
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with standard defaults (β₁ 0.9, β₂ 0.999, ε 1e-8).
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias-corrected moments. Pure: returns the new
/// parameters and the advanced optimizer state.
pub fn adam_step(
    params: &ParameterVector,
    grads: &ParameterVector,
    state: &AdamState,
) -> Result<(ParameterVector, AdamState)> {
    if !params.same_layout(grads) {
        return Err(Error::contract("gradient layout does not match parameters"));
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::contract("optimizer state length does not match parameters"));
    }
    let mut next = params.clone();
    let mut state = state.clone();
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for j in 0..next.values.len() {
        let g = grads.values[j];
        state.m[j] = state.beta1 * state.m[j] + (1.0 - state.beta1) * g;
        state.v[j] = state.beta2 * state.v[j] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[j] / bc1;
        let v_hat = state.v[j] / bc2;
        next.values[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    next.check_finite("adam update")?;
    Ok((next, state))
}

/// Scales the gradient so its global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grad: &mut ParameterVector, max_norm: f64) -> f64 {
    let norm = grad.norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for v in &mut grad.values {
            *v *= scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::seeds;

    // Frozen expected values, computed independently with high-precision
    // arithmetic before the implementation existed.
    const LN_HALF: f64 = -std::f64::consts::LN_2;
    const LN_THIRD: f64 = -1.098_612_288_668_109_8;
    const LN_FOUR: f64 = 1.386_294_361_119_890_6;
    const LOGPROB_2_0_ACTION0: f64 = -0.126_928_011_042_972_7;
    const ENTROPY_1_2_3: f64 = 0.832_395_581_839_938_9;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::new(2, vec![2], 2).unwrap()
    }

    #[test]
    fn spec_rejects_degenerate_shapes() {
        assert!(NetworkSpec::new(0, vec![4], 2).is_err());
        assert!(NetworkSpec::new(3, vec![], 2).is_err());
        assert!(NetworkSpec::new(3, vec![4, 0], 2).is_err());
        assert!(NetworkSpec::new(3, vec![4], 0).is_err());
    }

    #[test]
    fn layout_lengths_add_up() {
        let spec = NetworkSpec::new(3, vec![4, 3], 2).unwrap();
        let layout = spec.layout();
        assert_eq!(layout.len(), 4);
        assert_eq!(layout[0], LayerShape { rows: 4, cols: 3, bias: 4 });
        assert_eq!(layout[1], LayerShape { rows: 3, cols: 4, bias: 3 });
        assert_eq!(layout[2], LayerShape { rows: 2, cols: 3, bias: 2 });
        assert_eq!(layout[3], LayerShape { rows: 1, cols: 3, bias: 1 });
        assert_eq!(spec.num_params(), 16 + 15 + 8 + 4);
        assert_eq!(ParameterVector::zeros(&spec).len(), spec.num_params());
    }

    #[test]
    fn zero_network_maps_everything_to_zero() {
        let spec = NetworkSpec::new(4, vec![8, 8], 3).unwrap();
        let params = ParameterVector::zeros(&spec);
        let (logits, value) = forward(&params, &spec, &[0.3, -1.0, 2.0, 0.7]).unwrap();
        assert_eq!(logits, vec![0.0, 0.0, 0.0]);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn forward_matches_scalar_recomputation() {
        // Hand-built single-hidden-layer network, checked against a
        // straight scalar transcription of affine + tanh + affine.
        let spec = small_spec();
        let params = ParameterVector::from_values(
            &spec,
            vec![
                1.0, 0.0, 0.0, 1.0, // trunk weights (identity)
                0.5, -0.5, // trunk bias
                1.0, 2.0, 3.0, 4.0, // policy weights
                0.1, 0.2, // policy bias
                0.3, 0.4, // value weights
                0.7, // value bias
            ],
        )
        .unwrap();
        let obs = [1.0, 0.0];
        let (logits, value) = forward(&params, &spec, &obs).unwrap();

        let h0 = (1.0 * obs[0] + 0.0 * obs[1] + 0.5_f64).tanh();
        let h1 = (0.0 * obs[0] + 1.0 * obs[1] - 0.5_f64).tanh();
        assert_relative_eq!(logits[0], 1.0 * h0 + 2.0 * h1 + 0.1, max_relative = 1e-15);
        assert_relative_eq!(logits[1], 3.0 * h0 + 4.0 * h1 + 0.2, max_relative = 1e-15);
        assert_relative_eq!(value, 0.3 * h0 + 0.4 * h1 + 0.7, max_relative = 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_observation_length() {
        let spec = small_spec();
        let params = ParameterVector::zeros(&spec);
        assert!(matches!(
            forward(&params, &spec, &[1.0, 2.0, 3.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn forward_rejects_mismatched_parameters() {
        let spec = small_spec();
        let other = NetworkSpec::new(2, vec![3], 2).unwrap();
        let params = ParameterVector::zeros(&other);
        assert!(forward(&params, &spec, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn logprob_matches_frozen_values() {
        assert_relative_eq!(
            softmax_logprob(&[0.0, 0.0], 0).unwrap(),
            LN_HALF,
            epsilon = 1e-15
        );
        for c in [-2.5, 0.0, 3.7, 1000.0] {
            for a in 0..3 {
                assert_relative_eq!(
                    softmax_logprob(&[c, c, c], a).unwrap(),
                    LN_THIRD,
                    epsilon = 1e-12
                );
            }
        }
        assert_relative_eq!(
            softmax_logprob(&[2.0, 0.0], 0).unwrap(),
            LOGPROB_2_0_ACTION0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn logprob_rejects_out_of_range_action() {
        assert!(softmax_logprob(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn entropy_matches_frozen_values() {
        assert_relative_eq!(entropy(&[0.0; 4]).unwrap(), LN_FOUR, epsilon = 1e-12);
        let near_deterministic = entropy(&[1000.0, 0.0]).unwrap();
        assert!((0.0..1e-12).contains(&near_deterministic));
        assert_relative_eq!(entropy(&[1.0, 2.0, 3.0]).unwrap(), ENTROPY_1_2_3, epsilon = 1e-12);
        assert!(entropy(&[]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_probabilities_sum_to_one(logits in prop::collection::vec(-30.0f64..30.0, 1..8)) {
            let total: f64 = (0..logits.len())
                .map(|a| softmax_logprob(&logits, a).unwrap().exp())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn logprob_is_shift_invariant(
            logits in prop::collection::vec(-30.0f64..30.0, 2..8),
            shift in -100.0f64..100.0,
            action_raw in 0usize..8,
        ) {
            let action = action_raw % logits.len();
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let a = softmax_logprob(&logits, action).unwrap();
            let b = softmax_logprob(&shifted, action).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn entropy_bounded_and_maximised_by_uniform(
            logits in prop::collection::vec(-30.0f64..30.0, 1..8)
        ) {
            let h = entropy(&logits).unwrap();
            let n = logits.len() as f64;
            prop_assert!(h >= 0.0);
            prop_assert!(h <= n.ln() + 1e-9);
            let uniform = entropy(&vec![0.0; logits.len()]).unwrap();
            prop_assert!(h <= uniform + 1e-9);
        }

        #[test]
        fn layers_round_trip_through_flattening(values in prop::collection::vec(-5.0f64..5.0, 43)) {
            let spec = NetworkSpec::new(3, vec![4, 3], 2).unwrap();
            let params = ParameterVector::from_values(&spec, values).unwrap();
            let rebuilt = ParameterVector::from_layers(&spec, &params.to_layers()).unwrap();
            prop_assert_eq!(rebuilt, params);
        }
    }

    /// Loss whose contribution ignores the network outputs entirely.
    struct ConstantLoss {
        obs: Vec<Vec<f64>>,
        actions: usize,
    }

    impl BatchLoss for ConstantLoss {
        fn len(&self) -> usize {
            self.obs.len()
        }
        fn observation(&self, i: usize) -> &[f64] {
            &self.obs[i]
        }
        fn at_outputs(&self, _i: usize, logits: &[f64], _value: f64) -> (f64, Vec<f64>, f64) {
            assert_eq!(logits.len(), self.actions);
            (4.25, vec![0.0; self.actions], 0.0)
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let spec = small_spec();
        let mut rng = seeds::rng(11, &[seeds::STREAM_INIT]);
        let params = init_params(&spec, &mut rng);
        let loss = ConstantLoss { obs: vec![vec![0.4, -0.2], vec![1.0, 1.0]], actions: 2 };
        let (value, grad) = backward(&params, &spec, &loss).unwrap();
        assert_eq!(value, 4.25);
        assert!(grad.values.iter().all(|&g| g == 0.0));
    }

    /// (logit₀ − 3)², which reduces to a single-parameter quadratic when
    /// only the policy bias is nonzero.
    struct QuadraticLogitLoss {
        obs: Vec<Vec<f64>>,
    }

    impl BatchLoss for QuadraticLogitLoss {
        fn len(&self) -> usize {
            self.obs.len()
        }
        fn observation(&self, i: usize) -> &[f64] {
            &self.obs[i]
        }
        fn at_outputs(&self, _i: usize, logits: &[f64], _value: f64) -> (f64, Vec<f64>, f64) {
            let d = logits[0] - 3.0;
            let mut dl = vec![0.0; logits.len()];
            dl[0] = 2.0 * d;
            (d * d, dl, 0.0)
        }
    }

    #[test]
    fn single_parameter_quadratic_gradient_is_four() {
        // Zero weights everywhere; policy bias for action 0 set to 5. The
        // logit equals that bias, so the loss is (θ−3)² at θ=5 and the
        // analytic gradient is exactly 4 on that coordinate, 0 elsewhere.
        let spec = NetworkSpec::new(1, vec![1], 1).unwrap();
        let mut params = ParameterVector::zeros(&spec);
        let bias_index = 3; // flat order: [w_t, b_t, w_p, HERE, w_v, b_v]
        params.values[bias_index] = 5.0;
        let loss = QuadraticLogitLoss { obs: vec![vec![0.9]] };
        let (value, grad) = backward(&params, &spec, &loss).unwrap();
        assert_eq!(value, 4.0);
        for (j, &g) in grad.values.iter().enumerate() {
            if j == bias_index {
                assert_eq!(g, 4.0);
            } else {
                assert_eq!(g, 0.0);
            }
        }
    }

    /// Smooth synthetic loss touching every output: squared distance of the
    /// logits from per-sample targets plus a value regression term.
    struct SyntheticLoss {
        obs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        value_targets: Vec<f64>,
    }

    impl BatchLoss for SyntheticLoss {
        fn len(&self) -> usize {
            self.obs.len()
        }
        fn observation(&self, i: usize) -> &[f64] {
            &self.obs[i]
        }
        fn at_outputs(&self, i: usize, logits: &[f64], value: f64) -> (f64, Vec<f64>, f64) {
            let mut loss = 0.0;
            let mut dl = Vec::with_capacity(logits.len());
            for (l, t) in logits.iter().zip(&self.targets[i]) {
                loss += (l - t) * (l - t);
                dl.push(2.0 * (l - t));
            }
            let dv = value - self.value_targets[i];
            loss += dv * dv;
            (loss, dl, 2.0 * dv)
        }
    }

    fn random_synthetic(
        spec: &NetworkSpec,
        batch: usize,
        seed: u64,
    ) -> (ParameterVector, SyntheticLoss) {
        let mut rng = seeds::rng(seed, &[seeds::STREAM_INIT]);
        let params = init_params(spec, &mut rng);
        let obs = (0..batch)
            .map(|_| (0..spec.obs_dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets = (0..batch)
            .map(|_| (0..spec.num_actions).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let value_targets = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        (params, SyntheticLoss { obs, targets, value_targets })
    }

    fn assert_gradient_matches_finite_differences(
        spec: &NetworkSpec,
        params: &ParameterVector,
        loss: &dyn BatchLoss,
    ) {
        let (_, analytic) = backward(params, spec, loss).unwrap();
        let numeric = finite_difference_gradient(params, spec, loss, 1e-5).unwrap();
        for (j, (&a, &n)) in analytic.values.iter().zip(&numeric.values).enumerate() {
            if a.abs() < 1e-8 && n.abs() < 1e-8 {
                assert!((a - n).abs() < 1e-7, "coordinate {j}: {a} vs {n}");
            } else {
                let rel = (a - n).abs() / a.abs().max(n.abs());
                assert!(rel < 1e-4, "coordinate {j}: {a} vs {n} (rel {rel})");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_random_networks() {
        for seed in 0..6 {
            let spec = NetworkSpec::new(3, vec![4, 3], 2).unwrap();
            let (params, loss) = random_synthetic(&spec, 4, seed);
            assert_gradient_matches_finite_differences(&spec, &params, &loss);
        }
        // A deeper, narrower shape as well.
        let spec = NetworkSpec::new(2, vec![3, 3, 2], 3).unwrap();
        let (params, loss) = random_synthetic(&spec, 3, 99);
        assert_gradient_matches_finite_differences(&spec, &params, &loss);
    }

    #[test]
    fn backward_rejects_empty_batch() {
        let spec = small_spec();
        let params = ParameterVector::zeros(&spec);
        let loss = ConstantLoss { obs: vec![], actions: 2 };
        assert!(backward(&params, &spec, &loss).is_err());
    }

    #[test]
    fn backward_reports_offending_layer_on_overflow() {
        let spec = small_spec();
        let mut params = ParameterVector::zeros(&spec);
        // +inf + −inf in the first trunk unit's pre-activation → NaN.
        params.values[0] = f64::MAX;
        params.values[1] = f64::MAX;
        let loss = QuadraticLogitLoss { obs: vec![vec![1e300, -1e300]] };
        match backward(&params, &spec, &loss) {
            Err(Error::NonFinite { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_fresh_state_in_place() {
        let spec = small_spec();
        let params = ParameterVector::from_values(&spec, (0..15).map(|i| i as f64 / 7.0).collect())
            .unwrap();
        let grads = ParameterVector::zeros(&spec);
        let state = AdamState::new(params.len(), 3e-4);
        let (next, state) = adam_step(&params, &grads, &state).unwrap();
        assert_eq!(next, params);
        assert_eq!(state.t, 1);
        assert!(state.m.iter().all(|&m| m == 0.0));
        assert!(state.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_decays_preloaded_moments() {
        let spec = NetworkSpec::new(1, vec![1], 1).unwrap();
        let params = ParameterVector::zeros(&spec);
        let grads = ParameterVector::zeros(&spec);
        let mut state = AdamState::new(params.len(), 0.01);
        state.m[0] = 1.0;
        state.v[0] = 1.0;
        let (_, next_state) = adam_step(&params, &grads, &state).unwrap();
        assert_relative_eq!(next_state.m[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(next_state.v[0], 0.999, epsilon = 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let spec = NetworkSpec::new(1, vec![1], 1).unwrap();
        let params = ParameterVector::zeros(&spec);
        let mut grads = ParameterVector::zeros(&spec);
        let g = 0.37;
        grads.values[2] = g;
        let lr = 3e-4;
        let state = AdamState::new(params.len(), lr);
        let (next, _) = adam_step(&params, &grads, &state).unwrap();
        // Closed form: with fresh moments, m̂ = g and v̂ = g², so the update
        // is −lr·g/(|g| + ε).
        let expected = -lr * g / (g.abs() + state.eps);
        assert_relative_eq!(next.values[2], expected, epsilon = 1e-15);
        assert_relative_eq!(next.values[2].abs(), lr, max_relative = 1e-6);
        for (j, &v) in next.values.iter().enumerate() {
            if j != 2 {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn adam_descends_against_constant_gradient() {
        let spec = NetworkSpec::new(1, vec![1], 1).unwrap();
        let mut params = ParameterVector::zeros(&spec);
        let mut grads = ParameterVector::zeros(&spec);
        grads.values[0] = 1.0;
        let mut state = AdamState::new(params.len(), 0.01);
        let mut previous = params.values[0];
        for _ in 0..100 {
            let (next, next_state) = adam_step(&params, &grads, &state).unwrap();
            assert!(next.values[0] < previous);
            previous = next.values[0];
            params = next;
            state = next_state;
        }
        assert_eq!(state.t, 100);
    }

    #[test]
    fn adam_rejects_layout_mismatch() {
        let spec = small_spec();
        let other = NetworkSpec::new(2, vec![3], 2).unwrap();
        let params = ParameterVector::zeros(&spec);
        let grads = ParameterVector::zeros(&other);
        let state = AdamState::new(params.len(), 1e-3);
        assert!(adam_step(&params, &grads, &state).is_err());
    }

    #[test]
    fn grad_clipping_preserves_direction_and_caps_norm() {
        let spec = NetworkSpec::new(1, vec![1], 1).unwrap();
        let mut grad = ParameterVector::from_values(&spec, vec![3.0, 0.0, 4.0, 0.0, 0.0, 0.0])
            .unwrap();
        let norm = clip_grad_norm(&mut grad, 0.5);
        assert_relative_eq!(norm, 5.0, epsilon = 1e-12);
        assert_relative_eq!(grad.norm(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(grad.values[0] / grad.values[2], 0.75, epsilon = 1e-12);

        let mut small = ParameterVector::from_values(&spec, vec![0.1, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small.values[0], 0.1);
    }

    #[test]
    fn init_scales_heads_differently_and_zeroes_biases() {
        // Wide layers (rows ≤ cols) so each weight ROW is orthonormal × gain.
        let spec = NetworkSpec::new(8, vec![6, 6], 4).unwrap();
        let mut rng = seeds::rng(5, &[seeds::STREAM_INIT]);
        let params = init_params(&spec, &mut rng);
        params.check_finite("init").unwrap();

        // Trunk rows are orthonormal scaled by √2: row norms equal √2.
        let (w, b) = params.layer(0);
        for r in 0..6 {
            let row_norm: f64 = w[r * 8..(r + 1) * 8].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_relative_eq!(row_norm, std::f64::consts::SQRT_2, epsilon = 1e-9);
        }
        assert!(b.iter().all(|&x| x == 0.0));

        // Policy head rows have norm 0.01 → near-uniform initial policy.
        let (wp, bp) = params.layer(2);
        for r in 0..4 {
            let row_norm: f64 = wp[r * 6..(r + 1) * 6].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_relative_eq!(row_norm, 0.01, epsilon = 1e-9);
        }
        assert!(bp.iter().all(|&x| x == 0.0));

        // Value head has norm 1.
        let (wv, _) = params.layer(3);
        let vnorm: f64 = wv.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_relative_eq!(vnorm, 1.0, epsilon = 1e-9);

        // Same seed → identical init; different seed → different init.
        let again = init_params(&spec, &mut seeds::rng(5, &[seeds::STREAM_INIT]));
        assert_eq!(again, params);
        let other = init_params(&spec, &mut seeds::rng(6, &[seeds::STREAM_INIT]));
        assert_ne!(other, params);
    }

    #[test]
    fn orthogonal_rows_are_orthogonal() {
        let mut rng = seeds::rng(17, &[seeds::STREAM_INIT]);
        let w = orthogonal(4, 9, 1.0, &mut rng);
        for a in 0..4 {
            for b in (a + 1)..4 {
                let dot: f64 = (0..9).map(|c| w[a * 9 + c] * w[b * 9 + c]).sum();
                assert!(dot.abs() < 1e-9, "rows {a},{b} not orthogonal: {dot}");
            }
        }
        // Tall case: columns orthogonal instead.
        let w = orthogonal(9, 3, 1.0, &mut rng);
        for a in 0..3 {
            for b in (a + 1)..3 {
                let dot: f64 = (0..9).map(|r| w[r * 3 + a] * w[r * 3 + b]).sum();
                assert!(dot.abs() < 1e-9);
            }
        }
    }
}
