//! A small fully connected network with leaky-ReLU hidden layers and a linear
//! output, written directly on `Vec<f64>` so a single backward pass can return
//! both the parameter gradient and the input gradient.
//!
//! Parameters flatten to one contiguous vector (weights row-major, then bias,
//! layer by layer, then the optional per-output log-variance tail), which is
//! the layout the optimizer and the finite-difference checks share.

use rand::Rng;

pub const DEFAULT_LEAK: f64 = 0.3;

#[derive(Debug, Clone)]
struct DenseLayer {
    /// `weights[r * fan_in + c]` maps input c to output r.
    weights: Vec<f64>,
    biases: Vec<f64>,
    fan_in: usize,
    fan_out: usize,
}

impl DenseLayer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        assert_eq!(input.len(), self.fan_in, "layer forward: input size mismatch");
        out.clear();
        for r in 0..self.fan_out {
            let row = &self.weights[r * self.fan_in..(r + 1) * self.fan_in];
            let mut acc = self.biases[r];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Forward-pass intermediates needed by [`MlpParams::backward`]: the
/// post-activation input to every layer, plus each layer's preactivations.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// `inputs[l]` is what layer l consumed; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// `pre[l]` is layer l's preactivation vector.
    pre: Vec<Vec<f64>>,
}

/// Parameters of a leaky-ReLU MLP. Hidden layers apply the leak; the final
/// layer is linear. `log_var`, when present, holds a per-output log-variance
/// vector that rides along at the end of the flat parameter layout (used by
/// the Gaussian decoder likelihood).
#[derive(Debug, Clone)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
    leak: f64,
    pub log_var: Option<Vec<f64>>,
}

impl MlpParams {
    /// All-zero parameters for the given layer sizes, e.g. `[3, 4, 4, 3]` for
    /// a 3-input, two-hidden-layer, 3-output network.
    pub fn zeros(sizes: &[usize], leak: f64) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output size");
        assert!(sizes.iter().all(|&s| s >= 1), "layer sizes must be positive");
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer {
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
                fan_in: w[0],
                fan_out: w[1],
            })
            .collect();
        Self { layers, leak, log_var: None }
    }

    /// Fan-in scaled uniform initialization: each weight and bias is drawn
    /// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], leak: f64, rng: &mut R) -> Self {
        let mut params = Self::zeros(sizes, leak);
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
            for b in &mut layer.biases {
                *b = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    /// Attach a zero-initialized log-variance tail of the given length.
    pub fn with_log_var(mut self, len: usize) -> Self {
        self.log_var = Some(vec![0.0; len]);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("at least one layer").fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").fan_out
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    pub fn n_params(&self) -> usize {
        let core: usize = self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        core + self.log_var.as_ref().map_or(0, Vec::len)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        if let Some(lv) = &self.log_var {
            flat.extend_from_slice(lv);
        }
        flat
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "set_from_flat: length mismatch");
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        if let Some(lv) = &mut self.log_var {
            let nl = lv.len();
            lv.copy_from_slice(&flat[offset..offset + nl]);
        }
    }

    fn activate(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leak * z
        }
    }

    /// Derivative of the hidden activation. At exactly zero we use the leak
    /// slope; the choice only matters on a measure-zero set.
    fn activate_grad(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.leak
        }
    }

    /// Run the network, returning the linear output and the tape required for
    /// a later backward pass.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpTape) {
        assert_eq!(x.len(), self.input_dim(), "forward: input size mismatch");
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&current, &mut z);
            inputs.push(current);
            let is_last = l + 1 == n;
            current = if is_last { z.clone() } else { z.iter().map(|&v| self.activate(v)).collect() };
            pre.push(z);
        }
        (current, MlpTape { inputs, pre })
    }

    /// Backpropagate `d_out` (the gradient of a scalar loss with respect to
    /// the network output) through the tape. Returns the gradient with
    /// respect to the input and the flat parameter gradient.
    ///
    /// The flat gradient matches [`MlpParams::flatten`]; any log-variance tail
    /// is returned as zeros, since the network output does not depend on it.
    pub fn backward(&self, tape: &MlpTape, d_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(d_out.len(), self.output_dim(), "backward: output size mismatch");
        assert_eq!(tape.inputs.len(), self.layers.len(), "backward: tape mismatch");
        let mut d_theta = vec![0.0; self.n_params()];
        // Walk layers in reverse, filling the flat gradient back to front.
        let mut tail = self.n_params() - self.log_var.as_ref().map_or(0, Vec::len);
        let mut d_current = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let is_last = l + 1 == self.layers.len();
            // d pre = d post * act'(pre) (identity on the final layer).
            let d_pre: Vec<f64> = if is_last {
                d_current
            } else {
                d_current
                    .iter()
                    .zip(&tape.pre[l])
                    .map(|(&d, &z)| d * self.activate_grad(z))
                    .collect()
            };
            let input = &tape.inputs[l];
            let w_len = layer.weights.len();
            let b_start = tail - layer.biases.len();
            let w_start = b_start - w_len;
            for r in 0..layer.fan_out {
                d_theta[b_start + r] = d_pre[r];
                let row = &mut d_theta[w_start + r * layer.fan_in..w_start + (r + 1) * layer.fan_in];
                for (slot, &x) in row.iter_mut().zip(input) {
                    *slot = d_pre[r] * x;
                }
            }
            tail = w_start;
            // d input = W^T d_pre.
            let mut d_input = vec![0.0; layer.fan_in];
            for r in 0..layer.fan_out {
                let row = &layer.weights[r * layer.fan_in..(r + 1) * layer.fan_in];
                for (slot, &w) in d_input.iter_mut().zip(row) {
                    *slot += w * d_pre[r];
                }
            }
            d_current = d_input;
        }
        (d_current, d_theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Build a 1-1-1 network whose both weights are `w` and biases are zero.
    fn identity_chain(w: f64) -> MlpParams {
        let mut net = MlpParams::zeros(&[1, 1, 1], DEFAULT_LEAK);
        let mut flat = net.flatten();
        flat[0] = w; // layer 0 weight
        flat[2] = w; // layer 1 weight
        net.set_from_flat(&flat);
        net
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::zeros(&[3, 4, 4, 2], DEFAULT_LEAK);
        let (out, _) = net.forward(&[1.0, -2.0, 0.5]);
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_chain_squares_weight_on_positive_inputs() {
        let net = identity_chain(0.7);
        let (out, _) = net.forward(&[2.0]);
        // Positive preactivation passes through the leak untouched: w * w * x.
        assert!((out[0] - 0.7 * 0.7 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn leak_scales_negative_preactivations() {
        let net = identity_chain(1.0);
        let (out, _) = net.forward(&[-1.0]);
        assert!((out[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpParams::random(&[3, 4, 4, 3], DEFAULT_LEAK, &mut rng).with_log_var(3);
        let flat = net.flatten();
        assert_eq!(flat.len(), net.n_params());
        assert_eq!(net.n_params(), 3 * 4 + 4 + 4 * 4 + 4 + 4 * 3 + 3 + 3);
        let mut other = MlpParams::zeros(&[3, 4, 4, 3], DEFAULT_LEAK).with_log_var(3);
        other.set_from_flat(&flat);
        assert_eq!(other.flatten(), flat);
    }

    #[test]
    fn random_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MlpParams::random(&[16, 8, 4], DEFAULT_LEAK, &mut rng);
        let flat = net.flatten();
        let bound0 = 1.0 / 4.0; // fan_in 16
        assert!(flat[..16 * 8 + 8].iter().all(|w| w.abs() <= bound0));
    }

    /// Scalar loss used by the gradient checks: L = sum_j c_j * out_j with
    /// fixed coefficients, so d L / d out = c.
    fn loss_through(net: &MlpParams, x: &[f64], c: &[f64]) -> f64 {
        let (out, _) = net.forward(x);
        out.iter().zip(c).map(|(o, w)| o * w).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for trial in 0..10 {
            let net = MlpParams::random(&[4, 4, 4, 2], DEFAULT_LEAK, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, tape) = net.forward(&x);
            // Skip draws that sit near a leak kink, where central differences
            // straddle the non-smooth point and measure nothing useful.
            if tape.pre.iter().flatten().any(|z| z.abs() < 1e-3) {
                continue;
            }
            let (d_input, d_theta) = net.backward(&tape, &c);

            let h = 1e-5;
            for i in 0..x.len() {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[i] += h;
                lo[i] -= h;
                let num = (loss_through(&net, &hi, &c) - loss_through(&net, &lo, &c)) / (2.0 * h);
                let denom = num.abs().max(d_input[i].abs()).max(1.0);
                assert!(
                    (num - d_input[i]).abs() / denom < 1e-6,
                    "trial {trial} input grad {i}: analytic {} vs numeric {num}",
                    d_input[i]
                );
            }
            let flat = net.flatten();
            for i in 0..flat.len() {
                let mut net_hi = net.clone();
                let mut net_lo = net.clone();
                let mut hi = flat.clone();
                let mut lo = flat.clone();
                hi[i] += h;
                lo[i] -= h;
                net_hi.set_from_flat(&hi);
                net_lo.set_from_flat(&lo);
                let num = (loss_through(&net_hi, &x, &c) - loss_through(&net_lo, &x, &c)) / (2.0 * h);
                let denom = num.abs().max(d_theta[i].abs()).max(1.0);
                assert!(
                    (num - d_theta[i]).abs() / denom < 1e-6,
                    "trial {trial} theta grad {i}: analytic {} vs numeric {num}",
                    d_theta[i]
                );
            }
        }
    }

    #[test]
    fn log_var_tail_gradient_is_zero_from_network_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpParams::random(&[2, 3, 2], DEFAULT_LEAK, &mut rng).with_log_var(2);
        let (_, tape) = net.forward(&[0.3, -0.4]);
        let (_, d_theta) = net.backward(&tape, &[1.0, 1.0]);
        assert_eq!(d_theta.len(), net.n_params());
        assert_eq!(&d_theta[net.n_params() - 2..], &[0.0, 0.0]);
    }
}
