//! Fully connected tanh network with hand-written reverse pass.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }

    /// Gaussian weights scaled by `gain / sqrt(n_in)`, zero bias.
    fn random<R: Rng + ?Sized>(n_in: usize, n_out: usize, gain: f64, rng: &mut R) -> Self {
        let scale = gain / (n_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((n_in, n_out), || {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        });
        Self {
            w,
            b: Array1::zeros(n_out),
        }
    }
}

/// Hidden layers use tanh; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations kept for the reverse pass.
pub struct MlpTape {
    /// Input followed by every hidden activation.
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes` lists input, hidden and output widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { output_gain } else { 1.0 };
                Linear::random(sizes[i], sizes[i + 1], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.w.nrows(), l.w.ncols()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpTape) {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts.last().expect("input").dot(&layer.w);
            z += &layer.b;
            if i == last {
                return (z, MlpTape { acts });
            }
            z.mapv_inplace(f64::tanh);
            acts.push(z);
        }
        unreachable!("network has an output layer")
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    /// Accumulates parameter gradients for the output gradient `d_out` into `grad`.
    pub fn backward(&self, tape: &MlpTape, d_out: Array2<f64>, grad: &mut Mlp) {
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &tape.acts[i];
            grad.layers[i].w += &input.t().dot(&delta);
            grad.layers[i].b += &delta.sum_axis(Axis(0));
            if i == 0 {
                break;
            }
            let mut d_in = delta.dot(&self.layers[i].w.t());
            // tanh' = 1 - a^2 on the activation that fed layer i
            Zip::from(&mut d_in).and(input).for_each(|d, &a| *d *= 1.0 - a * a);
            delta = d_in;
        }
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.params_mut().for_each(|p| *p = value);
    }
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Mlp,
    pub v: Mlp,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &Mlp, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let step = lr * bc2.sqrt() / bc1;
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grad.params())
            .zip(self.m.params_mut())
            .zip(self.v.params_mut())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= step * *m / (v.sqrt() + ADAM_EPS);
        }
    }
}
