//! Dense ReLU networks with hand-written backpropagation, and Adam.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self { weight: Array2::zeros(self.weight.raw_dim()), bias: Array1::zeros(self.bias.raw_dim()) }
    }
}

/// Fully connected network: ReLU on hidden layers, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs and pre-activations kept from a forward pass.
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.pre.last().expect("network has layers")
    }
}

/// Parameter-shaped container for gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn sum_squares(&self) -> f64 {
        self.values().map(|g| g * g).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.values_mut().for_each(|g| *g *= s);
    }
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-bound..bound)),
                    bias: Array1::from_shape_fn(w[1], |_| rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("network has layers").weight.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weight.nrows()));
        s
    }

    /// Multiplies the output layer by `s`; small output layers keep initial
    /// policies close to the center of their boxes.
    pub fn scale_output(&mut self, s: f64) {
        let last = self.layers.last_mut().expect("network has layers");
        last.weight.mapv_inplace(|w| w * s);
        last.bias.mapv_inplace(|b| b * s);
    }

    pub fn forward_trace(&self, x: Array2<f64>) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            inputs.push(h);
            h = if i + 1 < self.layers.len() { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    pub fn forward_batch(&self, x: Array2<f64>) -> Array2<f64> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            if i + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward_batch(x).into_raw_vec_and_offset().0
    }

    /// Gradient of a scalar loss given its gradient with respect to the
    /// network output.
    pub fn backward(&self, trace: &Trace, grad_out: Array2<f64>) -> Gradients {
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            grads[i].weight = g.t().dot(&trace.inputs[i]);
            grads[i].bias = g.sum_axis(Axis(0));
            if i > 0 {
                let mut up = g.dot(&self.layers[i].weight);
                ndarray::Zip::from(&mut up).and(&trace.pre[i - 1]).for_each(|u, &z| {
                    if z <= 0.0 {
                        *u = 0.0;
                    }
                });
                g = up;
            }
        }
        Gradients { layers: grads }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self <- tau * source + (1 - tau) * self`
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.params_mut().zip(source.params()) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }
}

/// Adam over a flat parameter sequence whose order must stay fixed between
/// calls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: impl Iterator<Item = f64>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut count = 0;
        for (((p, g), m), v) in params.zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            count += 1;
        }
        debug_assert_eq!(count, self.m.len());
    }
}

/// Scale factor that brings a gradient of squared norm `sum_squares` down to
/// `max_norm`.
pub fn clip_factor(sum_squares: f64, max_norm: f64) -> f64 {
    let norm = sum_squares.sqrt();
    if norm > max_norm {
        max_norm / norm
    } else {
        1.0
    }
}

/// Relative tolerance for finite-difference gradient checks.
pub const FD_TOLERANCE: f64 = 1e-4;

/// The worst probe of a finite-difference check.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientProbe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
    /// Probes outside tolerance. Absolute differences below 1e-9 pass
    /// whatever their relative size.
    pub failures: usize,
}

impl GradientProbe {
    /// Folds one comparison into the running worst case.
    pub fn observe(&mut self, index: usize, analytic: f64, numeric: f64) {
        let diff = (numeric - analytic).abs();
        let error = diff / numeric.abs().max(analytic.abs()).max(1e-6);
        if error > FD_TOLERANCE && diff > 1e-9 {
            self.failures += 1;
        }
        if error >= self.error {
            *self = GradientProbe { index, analytic, numeric, error, failures: self.failures };
        }
    }
}

/// Central differences of `loss` at `probes` random parameter positions,
/// compared with `grads`. Returns the probe with the largest error.
pub fn worst_gradient_error<R: Rng + ?Sized>(
    net: &Mlp,
    grads: &Gradients,
    probes: usize,
    rng: &mut R,
    loss: impl Fn(&Mlp) -> f64,
) -> GradientProbe {
    let h = 1e-5;
    let flat: Vec<f64> = grads.values().collect();
    let mut worst = GradientProbe::default();
    for _ in 0..probes {
        let index = rng.gen_range(0..net.num_params());
        let mut plus = net.clone();
        let mut minus = net.clone();
        *plus.params_mut().nth(index).unwrap() += h;
        *minus.params_mut().nth(index).unwrap() -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        worst.observe(index, flat[index], numeric);
    }
    worst
}
