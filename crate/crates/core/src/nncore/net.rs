use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};

/// One fully connected layer. Weights are stored row-major as `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (n_in + n_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect();
        Dense {
            n_in,
            n_out,
            weights,
            bias: vec![0.0; n_out],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.n_in).zip(&self.bias) {
            let mut acc = *b;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }
}

/// Dense multilayer network: rectifier on hidden layers, identity on the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Cached values of a forward pass, consumed by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to every layer; `inputs[0]` is the network input.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Parameter gradients with the same layout as a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| *v == 0.0))
    }
}

impl DenseNet {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Ok(DenseNet { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(DenseNet { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(PmcError::Argument("network needs at least one layer".into()));
        }
        for l in &layers {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(PmcError::State("layer buffers do not match declared sizes".into()));
            }
        }
        for w in layers.windows(2) {
            if w[0].n_out != w[1].n_in {
                return Err(PmcError::State(format!(
                    "incompatible layers: {} outputs feed {} inputs",
                    w[0].n_out, w[1].n_in
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 {
            return Err(PmcError::Argument("layer_sizes needs at least two entries".into()));
        }
        if sizes.contains(&0) {
            return Err(PmcError::Argument("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.n_in * l.n_out + l.n_out).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(PmcError::InputShape {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(PmcError::InputShape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.n_out);
            layer.apply(&cur, &mut z);
            let next = if i == last {
                z.clone()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            inputs.push(cur);
            pre.push(z);
            cur = next;
        }
        Ok(Trace {
            inputs,
            pre,
            output: cur,
        })
    }

    /// Output only, without keeping the trace.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, trace: &Trace, output_grad: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        if trace.inputs.len() != self.layers.len()
            || grads.layers.len() != self.layers.len()
            || output_grad.len() != self.output_dim()
        {
            return Err(PmcError::State("trace or gradient buffers do not match network".into()));
        }
        let last = self.layers.len() - 1;
        let mut delta = output_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.inputs[i];
            if input.len() != layer.n_in || trace.pre[i].len() != layer.n_out {
                return Err(PmcError::State("stale activations for this network".into()));
            }
            if i != last {
                for (d, z) in delta.iter_mut().zip(&trace.pre[i]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads.layers[i];
            let mut upstream = vec![0.0; layer.n_in];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if *d == 0.0 {
                    continue;
                }
                let row = o * layer.n_in;
                let wrow = &layer.weights[row..row + layer.n_in];
                let grow = &mut g.weights[row..row + layer.n_in];
                for j in 0..layer.n_in {
                    grow[j] += d * input[j];
                    upstream[j] += d * wrow[j];
                }
            }
            delta = upstream;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input() {
        let layer = Dense {
            n_in: 2,
            n_out: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        };
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_net_annihilates() {
        let net = DenseNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.predict(&[4.0, -1.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_hand_rolled_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::new(&[2, 4, 3], &mut rng).unwrap();
        let x = [0.3, -1.7];
        let l0 = &net.layers()[0];
        let mut h = [0.0; 4];
        for o in 0..4 {
            let z = l0.weights[o * 2] * x[0] + l0.weights[o * 2 + 1] * x[1] + l0.bias[o];
            h[o] = if z > 0.0 { z } else { 0.0 };
        }
        let l1 = &net.layers()[1];
        let mut y = [0.0; 3];
        for o in 0..3 {
            y[o] = l1.bias[o] + (0..4).map(|j| l1.weights[o * 4 + j] * h[j]).sum::<f64>();
        }
        let out = net.predict(&x).unwrap();
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_input_dim_is_rejected() {
        let net = DenseNet::zeros(&[3, 2]).unwrap();
        assert_eq!(
            net.forward(&[1.0]).unwrap_err(),
            PmcError::InputShape { expected: 3, got: 1 }
        );
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let layer = Dense {
            n_in: 2,
            n_out: 2,
            weights: vec![0.5, -1.0, 2.0, 0.25],
            bias: vec![0.1, 0.2],
        };
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let x = [3.0, -2.0];
        let g = [1.5, -0.5];
        let trace = net.forward(&x).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        let dx = net.backward(&trace, &g, &mut grads).unwrap();
        assert_eq!(grads.layers[0].weights, vec![4.5, -3.0, -1.5, 1.0]);
        assert_eq!(grads.layers[0].bias, vec![1.5, -0.5]);
        assert_eq!(dx, vec![0.5 * 1.5 + 2.0 * -0.5, -1.0 * 1.5 + 0.25 * -0.5]);
    }

    #[test]
    fn dead_rectifier_blocks_gradient() {
        let hidden = Dense {
            n_in: 2,
            n_out: 2,
            weights: vec![1.0, 1.0, 1.0, 1.0],
            bias: vec![-100.0, -100.0],
        };
        let out = Dense {
            n_in: 2,
            n_out: 1,
            weights: vec![1.0, 1.0],
            bias: vec![0.0],
        };
        let net = DenseNet::from_layers(vec![hidden, out]).unwrap();
        let trace = net.forward(&[1.0, 1.0]).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        let dx = net.backward(&trace, &[1.0], &mut grads).unwrap();
        assert_eq!(dx, vec![0.0, 0.0]);
        assert!(grads.layers[0].weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn stale_trace_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DenseNet::new(&[2, 3, 1], &mut rng).unwrap();
        let b = DenseNet::new(&[4, 3, 1], &mut rng).unwrap();
        let trace = a.forward(&[0.1, 0.2]).unwrap();
        let mut grads = Gradients::zeros_like(&b);
        assert!(matches!(
            b.backward(&trace, &[1.0], &mut grads),
            Err(PmcError::State(_))
        ));
    }

    #[test]
    fn parameter_count_matches_layout() {
        let net = DenseNet::zeros(&[8, 64, 32]).unwrap();
        assert_eq!(net.param_count(), 8 * 64 + 64 + 64 * 32 + 32);
        assert_eq!(net.parameters().len(), net.param_count());
    }
}
