//! Adaptive-moment parameter updates.

use super::{DenseNet, Gradients, Matrix};

/// First/second moment accumulators plus the step counter for one net.
#[derive(Clone, Debug)]
pub struct AdamState {
    weight_m: Vec<Matrix>,
    weight_v: Vec<Matrix>,
    bias_m: Vec<Vec<f64>>,
    bias_v: Vec<Vec<f64>>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        let weight_m = (0..net.layer_count())
            .map(|l| Matrix::zeros(net.weights(l).rows(), net.weights(l).cols()))
            .collect::<Vec<_>>();
        let bias_m = (0..net.layer_count())
            .map(|l| vec![0.0; net.bias(l).len()])
            .collect::<Vec<_>>();
        AdamState {
            weight_v: weight_m.clone(),
            weight_m,
            bias_v: bias_m.clone(),
            bias_m,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one adaptive-moment update. Masked weights are re-zeroed after
    /// the update so pruning is permanent.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) {
        assert_eq!(grads.weights.len(), net.layer_count(), "gradient shape mismatch");
        self.step += 1;
        let t = self.step as i32;
        let corr1 = 1.0 - self.beta1.powi(t);
        let corr2 = 1.0 - self.beta2.powi(t);
        let lr = self.learning_rate;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            assert_eq!(p.len(), g.len(), "gradient shape mismatch");
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };

        for l in 0..net.layer_count() {
            update(
                net.weights_mut(l).data_mut(),
                grads.weights[l].data(),
                self.weight_m[l].data_mut(),
                self.weight_v[l].data_mut(),
            );
            update(
                net.bias_mut(l),
                &grads.biases[l],
                &mut self.bias_m[l],
                &mut self.bias_v[l],
            );
        }
        // Re-zeroes masked weights and refreshes the forward shadow.
        net.reapply_masks();
    }
}
