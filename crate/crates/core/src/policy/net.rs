use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => crate::mortality::logistic(x),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

/// Fully connected feedforward network with a linear output layer.
///
/// Parameters are laid out layer by layer, each layer as its row-major
/// `out x in` weight matrix followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_dim: usize,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, hidden_activation: Activation, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_layers,
            hidden_activation,
            output_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Spec("input and output dimensions must be at least 1".into()));
        }
        if let Some(i) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(Error::Spec(format!("hidden layer {i} has width 0")));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_layers);
        w.push(self.output_dim);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|l| l[0] * l[1] + l[1]).sum()
    }

    /// Number of activations stored by [`forward`](Self::forward): every layer
    /// including input and output.
    pub fn cache_len(&self) -> usize {
        self.widths().iter().sum()
    }

    /// Fan-in of each parameter's layer, in parameter order.
    pub(crate) fn fan_in_per_param(&self) -> Vec<(usize, bool)> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.widths().windows(2) {
            out.extend(std::iter::repeat_n((l[0], true), l[0] * l[1]));
            out.extend(std::iter::repeat_n((l[0], false), l[1]));
        }
        out
    }

    /// Evaluates the network. `cache` receives all layer activations
    /// (`cache_len` entries); the output occupies its last `output_dim`
    /// entries.
    pub fn forward(&self, theta: &[f64], input: &[f64], cache: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.param_count());
        debug_assert_eq!(cache.len(), self.cache_len());
        cache[..self.input_dim].copy_from_slice(input);
        let n_layers = self.hidden_layers.len() + 1;
        let mut p = 0;
        let mut a_off = 0;
        let mut n_in = self.input_dim;
        for l in 0..n_layers {
            let n_out = if l < self.hidden_layers.len() { self.hidden_layers[l] } else { self.output_dim };
            let (prev, rest) = cache.split_at_mut(a_off + n_in);
            let x = &prev[a_off..];
            let out = &mut rest[..n_out];
            let w = &theta[p..p + n_out * n_in];
            let b = &theta[p + n_out * n_in..p + n_out * n_in + n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for i in 0..n_in {
                    s += row[i] * x[i];
                }
                out[o] = if l + 1 < n_layers { self.hidden_activation.apply(s) } else { s };
            }
            p += n_out * n_in + n_out;
            a_off += n_in;
            n_in = n_out;
        }
    }

    /// Accumulates `scale * d(out . d_out)/d theta` into `grad` and returns
    /// the gradient with respect to the input in `d_input`.
    pub fn backward(&self, theta: &[f64], cache: &[f64], d_out: &[f64], grad: &mut [f64], d_input: &mut [f64], scratch: &mut Vec<f64>) {
        let widths = self.widths();
        let n_layers = widths.len() - 1;
        // offsets of each layer's activations and parameters
        let mut a_offs = Vec::with_capacity(widths.len());
        let mut acc = 0;
        for &w in &widths {
            a_offs.push(acc);
            acc += w;
        }
        let mut p_offs = Vec::with_capacity(n_layers);
        let mut pacc = 0;
        for l in 0..n_layers {
            p_offs.push(pacc);
            pacc += widths[l] * widths[l + 1] + widths[l + 1];
        }
        scratch.clear();
        scratch.extend_from_slice(d_out);
        let mut delta = std::mem::take(scratch);
        let mut next = Vec::new();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let x = &cache[a_offs[l]..a_offs[l] + n_in];
            let w = &theta[p_offs[l]..p_offs[l] + n_out * n_in];
            let (gw, gb) = grad[p_offs[l]..p_offs[l] + n_out * n_in + n_out].split_at_mut(n_out * n_in);
            next.clear();
            next.resize(n_in, 0.0);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * x[i];
                    next[i] += d * row[i];
                }
            }
            if l > 0 {
                for (i, v) in next.iter_mut().enumerate() {
                    *v *= self.hidden_activation.derivative_from_output(x[i]);
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        d_input.copy_from_slice(&delta[..self.input_dim]);
        *scratch = delta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let s = NetSpec::new(2, vec![8, 8], Activation::Tanh, 3).unwrap();
        assert_eq!(s.param_count(), 2 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(s.cache_len(), 2 + 8 + 8 + 3);
        assert!(NetSpec::new(2, vec![8, 0], Activation::Tanh, 1).is_err());
    }

    #[test]
    fn linear_network_is_affine() {
        let s = NetSpec::new(2, vec![], Activation::Tanh, 1).unwrap();
        let theta = [0.5, -2.0, 0.25];
        let mut cache = vec![0.0; s.cache_len()];
        s.forward(&theta, &[2.0, 1.0], &mut cache);
        assert_eq!(cache[2], 0.5 * 2.0 - 2.0 + 0.25);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = NetSpec::new(2, vec![4, 3], Activation::Tanh, 2).unwrap();
        let theta: Vec<f64> = (0..s.param_count()).map(|i| ((i * 7919) % 23) as f64 / 23.0 - 0.5).collect();
        let x = [0.3, -0.7];
        let d_out = [1.3, -0.4];
        let f = |th: &[f64], x: &[f64]| {
            let mut c = vec![0.0; s.cache_len()];
            s.forward(th, x, &mut c);
            let o = &c[c.len() - 2..];
            o[0] * d_out[0] + o[1] * d_out[1]
        };
        let mut cache = vec![0.0; s.cache_len()];
        s.forward(&theta, &x, &mut cache);
        let mut grad = vec![0.0; s.param_count()];
        let mut dx = [0.0; 2];
        s.backward(&theta, &cache, &d_out, &mut grad, &mut dx, &mut Vec::new());
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (f(&tp, &x) - f(&tm, &x)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "param {i}: {fd} vs {}", grad[i]);
        }
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&theta, &xp) - f(&theta, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }
}
