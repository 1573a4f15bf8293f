//! Dense feed-forward Q-network substrate: hand-derived reverse-mode
//! gradients, adaptive-moment updates, per-weight prune masks, and a flat
//! binary checkpoint format.

mod adam;
mod checkpoint;
mod matrix;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use matrix::{accumulate_outer, axpy, matmul, matmul_bias, Matrix};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::util::Fnv1a;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid layer dims {0:?}: need at least two positive entries")]
    BadDims(Vec<usize>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Rectifier,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Rectifier => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Rectifier),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    /// Canonical weights, row-major (out x in).
    weights: Matrix,
    /// Transposed shadow of `weights`; the forward pass streams this one.
    weights_t: Matrix,
    bias: Vec<f64>,
    /// Per-weight binary mask, same layout as `weights`. 0 means pruned.
    mask: Vec<u8>,
    activation: Activation,
}

impl Layer {
    fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    fn sync_shadow(&mut self) {
        self.weights_t = self.weights.transposed();
    }
}

/// Multilayer perceptron with rectifier hidden layers and a linear head.
#[derive(Clone, Debug)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Parameter gradients, shaped exactly like the net's weights and biases.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Cached per-layer activations from a batched forward pass.
pub struct ForwardTrace {
    /// Post-activation output of each layer, last entry is the net output.
    activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace has at least one layer")
    }
}

impl DenseNet {
    /// Build a net with the given layer widths, e.g. `[8, 128, 64, 4]`.
    ///
    /// Weights draw from the fan-scaled uniform range
    /// +-sqrt(6 / (fan_in + fan_out)); biases start at zero and all masks
    /// at one. The same seed always yields the same parameters.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self, NetError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NetError::BadDims(dims.to_vec()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let data: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            let weights = Matrix::from_vec(fan_out, fan_in, data);
            let weights_t = weights.transposed();
            layers.push(Layer {
                weights,
                weights_t,
                bias: vec![0.0; fan_out],
                mask: vec![1u8; fan_out * fan_in],
                activation: Activation::Rectifier,
            });
        }
        layers.last_mut().expect("at least one layer").activation = Activation::Linear;
        Ok(DenseNet { layers })
    }

    pub(crate) fn from_parts(layers: Vec<Layer>) -> Self {
        DenseNet { layers }
    }

    /// Build a net from explicit parameters. Layer widths must chain; all
    /// masks start at one.
    pub fn from_weights(specs: Vec<(Matrix, Vec<f64>, Activation)>) -> Result<Self, NetError> {
        if specs.is_empty() {
            return Err(NetError::BadDims(vec![]));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev_out: Option<usize> = None;
        for (weights, bias, activation) in specs {
            if weights.rows() == 0 || weights.cols() == 0 || bias.len() != weights.rows() {
                return Err(NetError::BadDims(vec![weights.rows(), weights.cols()]));
            }
            if let Some(p) = prev_out {
                if p != weights.cols() {
                    return Err(NetError::DimMismatch {
                        expected: p,
                        got: weights.cols(),
                    });
                }
            }
            prev_out = Some(weights.rows());
            let mask = vec![1u8; weights.rows() * weights.cols()];
            layers.push(Self::make_layer(weights, bias, mask, activation));
        }
        Ok(DenseNet { layers })
    }

    pub(crate) fn make_layer(
        weights: Matrix,
        bias: Vec<f64>,
        mask: Vec<u8>,
        activation: Activation,
    ) -> Layer {
        let weights_t = weights.transposed();
        Layer {
            weights,
            weights_t,
            bias,
            mask,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("nonempty").in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    pub fn activation(&self, layer: usize) -> Activation {
        self.layers[layer].activation
    }

    pub fn weights(&self, layer: usize) -> &Matrix {
        &self.layers[layer].weights
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.layers[layer].bias
    }

    pub fn mask(&self, layer: usize) -> &[u8] {
        &self.layers[layer].mask
    }

    /// Total weight-parameter count across all layers (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.mask.len()).sum()
    }

    /// Mutable weight access for the optimizer. Callers must follow up with
    /// `reapply_masks` to restore the mask invariant and the forward shadow.
    pub(crate) fn weights_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.layers[layer].weights
    }

    pub(crate) fn bias_mut(&mut self, layer: usize) -> &mut Vec<f64> {
        &mut self.layers[layer].bias
    }

    /// Replace a layer's mask and zero the newly masked weights.
    pub fn set_mask(&mut self, layer: usize, mask: Vec<u8>) {
        let l = &mut self.layers[layer];
        assert_eq!(mask.len(), l.mask.len(), "mask shape mismatch");
        l.mask = mask;
        for (w, &m) in l.weights.data_mut().iter_mut().zip(l.mask.iter()) {
            if m == 0 {
                *w = 0.0;
            }
        }
        l.sync_shadow();
    }

    /// Zero every masked weight. Called after each parameter update so a
    /// pruned weight can never drift away from zero.
    pub fn reapply_masks(&mut self) {
        for l in &mut self.layers {
            for (w, &m) in l.weights.data_mut().iter_mut().zip(l.mask.iter()) {
                if m == 0 {
                    *w = 0.0;
                }
            }
            l.sync_shadow();
        }
    }

    fn check_input(&self, len: usize) -> Result<(), NetError> {
        if len != self.input_dim() {
            return Err(NetError::DimMismatch {
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Q-values for a single state vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(x.len())?;
        let xm = Matrix::from_vec(1, x.len(), x.to_vec());
        let out = self.forward_batch(&xm);
        Ok(out.row(0).to_vec())
    }

    /// Batched forward pass; `x` is (batch, input_dim).
    pub fn forward_batch(&self, x: &Matrix) -> Matrix {
        let mut trace = self.trace_batch(x);
        trace.activations.pop().expect("at least one layer")
    }

    /// Batched forward pass keeping every layer's activations for backprop.
    pub fn trace_batch(&self, x: &Matrix) -> ForwardTrace {
        assert_eq!(x.cols(), self.input_dim(), "input width mismatch");
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let mut z = Matrix::zeros(cur.rows(), layer.out_dim());
            matmul_bias(cur, &layer.weights_t, &layer.bias, &mut z);
            if layer.activation == Activation::Rectifier {
                for v in z.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(z);
            cur = activations.last().expect("just pushed");
        }
        ForwardTrace { activations }
    }

    /// Exact reverse-mode gradients of `grad_out . forward(x)` for one input.
    ///
    /// Gradients at masked weights are forced to zero.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<Gradients, NetError> {
        self.check_input(x.len())?;
        if grad_out.len() != self.output_dim() {
            return Err(NetError::DimMismatch {
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        let xm = Matrix::from_vec(1, x.len(), x.to_vec());
        let gm = Matrix::from_vec(1, grad_out.len(), grad_out.to_vec());
        let trace = self.trace_batch(&xm);
        Ok(self.backward_trace(&xm, &trace, gm))
    }

    /// Batched backprop from a cached forward trace. Consumes `grad_out` as
    /// the seed dL/d(output); returns parameter gradients summed over the
    /// batch, with masked-weight entries zeroed.
    pub fn backward_trace(&self, x: &Matrix, trace: &ForwardTrace, grad_out: Matrix) -> Gradients {
        let n = self.layers.len();
        assert_eq!(trace.activations.len(), n);
        let mut grads = Gradients {
            weights: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        };
        let mut delta = grad_out;
        for li in (0..n).rev() {
            let layer = &self.layers[li];
            // Rectifier derivative: kill deltas where the activation is zero.
            if layer.activation == Activation::Rectifier {
                let act = &trace.activations[li];
                for (d, &a) in delta.data_mut().iter_mut().zip(act.data().iter()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let below: &Matrix = if li == 0 { x } else { &trace.activations[li - 1] };
            accumulate_outer(&delta, below, &mut grads.weights[li]);
            for b in 0..delta.rows() {
                for (gb, &d) in grads.biases[li].iter_mut().zip(delta.row(b).iter()) {
                    *gb += d;
                }
            }
            // Masked weights receive no gradient.
            for (g, &m) in grads.weights[li].data_mut().iter_mut().zip(layer.mask.iter()) {
                if m == 0 {
                    *g = 0.0;
                }
            }
            if li > 0 {
                let mut next = Matrix::zeros(delta.rows(), layer.in_dim());
                matmul(&delta, &layer.weights, &mut next);
                delta = next;
            }
        }
        grads
    }

    /// FNV digest over all parameters and masks; used to assert that
    /// evaluation never mutates a net.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        for l in &self.layers {
            for &w in l.weights.data() {
                h.write_f64(w);
            }
            for &b in &l.bias {
                h.write_f64(b);
            }
            h.write(&l.mask);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_weights() {
        let a = DenseNet::new(&[8, 128, 64, 4], 7).unwrap();
        let b = DenseNet::new(&[8, 128, 64, 4], 7).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = DenseNet::new(&[8, 128, 64, 4], 8).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn shapes_follow_dims() {
        let net = DenseNet::new(&[8, 128, 64, 4], 1).unwrap();
        assert_eq!(net.layer_count(), 3);
        assert_eq!((net.weights(0).rows(), net.weights(0).cols()), (128, 8));
        assert_eq!((net.weights(1).rows(), net.weights(1).cols()), (64, 128));
        assert_eq!((net.weights(2).rows(), net.weights(2).cols()), (4, 64));
        assert!(net.bias(0).iter().all(|&b| b == 0.0));
        assert_eq!(net.activation(2), Activation::Linear);
        assert_eq!(net.activation(0), Activation::Rectifier);
    }

    #[test]
    fn bad_dims_rejected() {
        assert!(DenseNet::new(&[8], 0).is_err());
        assert!(DenseNet::new(&[8, 0, 4], 0).is_err());
        assert!(DenseNet::new(&[], 0).is_err());
    }

    #[test]
    fn identity_single_layer() {
        let mut net = DenseNet::new(&[3, 3], 0).unwrap();
        let eye = Matrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        net.layers[0] = DenseNet::make_layer(eye, vec![0.0; 3], vec![1; 9], Activation::Linear);
        let y = net.forward(&[0.5, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.5, -2.0, 3.0]);
    }

    #[test]
    fn zero_params_zero_output() {
        let mut net = DenseNet::new(&[4, 5, 2], 3).unwrap();
        for l in &mut net.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
            l.sync_shadow();
        }
        let y = net.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_dim_mismatch_is_error() {
        let net = DenseNet::new(&[4, 2], 0).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NetError::DimMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn masking_a_weight_equals_zeroing_it() {
        let base = DenseNet::new(&[4, 6, 3], 11).unwrap();
        let x = [0.3, -1.2, 0.7, 2.0];

        let mut masked = base.clone();
        let mut mask = masked.mask(0).to_vec();
        mask[5] = 0;
        masked.set_mask(0, mask);

        let mut zeroed = base.clone();
        zeroed.layers[0].weights.data_mut()[5] = 0.0;
        zeroed.layers[0].sync_shadow();

        assert_eq!(masked.forward(&x).unwrap(), zeroed.forward(&x).unwrap());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let net = DenseNet::new(&[3, 5, 2], 5).unwrap();
        let g = net.backward(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(g.weights.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dead_rectifier_passes_zero_gradient() {
        // One hidden unit, forced negative pre-activation.
        let mut net = DenseNet::new(&[1, 1, 1], 0).unwrap();
        net.layers[0] = DenseNet::make_layer(
            Matrix::from_vec(1, 1, vec![1.0]),
            vec![-5.0],
            vec![1],
            Activation::Rectifier,
        );
        net.layers[1] = DenseNet::make_layer(
            Matrix::from_vec(1, 1, vec![2.0]),
            vec![0.0],
            vec![1],
            Activation::Linear,
        );
        let g = net.backward(&[1.0], &[1.0]).unwrap();
        // Hidden activation is relu(1 - 5) = 0, so the input-side weight
        // gradient must vanish while the head's bias gradient stays 1.
        assert_eq!(g.weights[0].get(0, 0), 0.0);
        assert_eq!(g.biases[1][0], 1.0);
    }

    #[test]
    fn batch_forward_matches_single_forward() {
        let net = DenseNet::new(&[6, 16, 8, 3], 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = 5;
        let mut data = Vec::new();
        for _ in 0..rows * 6 {
            data.push(rng.gen_range(-2.0..2.0));
        }
        let x = Matrix::from_vec(rows, 6, data);
        let batch = net.forward_batch(&x);
        for r in 0..rows {
            let single = net.forward(x.row(r)).unwrap();
            assert_eq!(batch.row(r), single.as_slice());
        }
    }

    /// Central-difference oracle for d(grad_out . f(x))/d(parameter).
    fn finite_diff_weight(net: &DenseNet, x: &[f64], grad_out: &[f64], layer: usize, idx: usize, h: f64) -> f64 {
        let eval = |net: &DenseNet| -> f64 {
            let y = net.forward(x).unwrap();
            y.iter().zip(grad_out).map(|(a, b)| a * b).sum()
        };
        let mut plus = net.clone();
        plus.layers[layer].weights.data_mut()[idx] += h;
        plus.layers[layer].sync_shadow();
        let mut minus = net.clone();
        minus.layers[layer].weights.data_mut()[idx] -= h;
        minus.layers[layer].sync_shadow();
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let net = DenseNet::new(&[4, 7, 5, 3], 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let grad_out: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = net.backward(&x, &grad_out).unwrap();
        let h = 1e-5;
        for layer in 0..net.layer_count() {
            for idx in 0..net.weights(layer).data().len() {
                let num = finite_diff_weight(&net, &x, &grad_out, layer, idx, h);
                let ana = g.weights[layer].data()[idx];
                let denom = ana.abs().max(num.abs()).max(1.0);
                assert!(
                    (ana - num).abs() / denom < 1e-4,
                    "layer {layer} idx {idx}: analytic {ana} vs numeric {num}"
                );
            }
        }
    }
}
