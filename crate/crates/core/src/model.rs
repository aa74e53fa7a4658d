//! Linear softmax and ReLU MLP classifiers with explicit backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{softmax_into, LossConfig, ProbVector};
use crate::rng::rng_from_seed;

/// Finite-difference step used by [`Classifier::grad_check`].
pub const FD_STEP: f64 = 1e-6;
/// Denominator floor for relative gradient errors.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.n_in * self.n_out;
        start..start + self.n_out
    }
}

/// Feed-forward classifier: ReLU hidden layers of the declared widths and a
/// softmax output over `c` classes. Parameters live in one flat vector, layer
/// by layer, each layer as its `n_out x n_in` weight matrix (row-major)
/// followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    d: usize,
    c: usize,
    hidden: Vec<usize>,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Architecture header stored with checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub d: usize,
    pub c: usize,
    pub hidden: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    architecture: Architecture,
    params: Vec<f64>,
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    // acts[0] is the input; acts[l + 1] is the output of layer l (post-ReLU
    // for hidden layers, logits for the last).
    acts: Vec<Vec<f64>>,
    probs: Vec<f64>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn logits(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Finite-difference comparison of backprop gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    /// `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor)`.
    pub max_rel_error: f64,
    /// `max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)`.
    pub max_elementwise_rel_error: f64,
    pub max_abs_error: f64,
    pub params: usize,
}

impl Classifier {
    /// Initialise weights uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` and
    /// biases at zero. An empty `hidden` gives a linear softmax model.
    pub fn new(d: usize, c: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("input width must be at least 1"));
        }
        if c < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if hidden.contains(&0) {
            return Err(Error::config("hidden widths must be at least 1"));
        }
        let mut shapes = Vec::with_capacity(hidden.len() + 1);
        let mut n_in = d;
        let mut offset = 0;
        for &n_out in hidden.iter().chain(std::iter::once(&c)) {
            shapes.push(LayerShape { n_in, n_out, offset });
            offset += n_in * n_out + n_out;
            n_in = n_out;
        }
        let mut params = vec![0.0; offset];
        let mut rng = rng_from_seed(seed);
        for s in &shapes {
            let scale = 1.0 / (s.n_in as f64).sqrt();
            for w in &mut params[s.weights()] {
                *w = rng.random_range(-scale..=scale);
            }
        }
        Ok(Classifier {
            d,
            c,
            hidden: hidden.to_vec(),
            shapes,
            params,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            d: self.d,
            c: self.c,
            hidden: self.hidden.clone(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.c
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix (row-major, `n_out x n_in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = &self.shapes[l];
        (&self.params[s.weights()], &self.params[s.bias()])
    }

    pub fn n_layers(&self) -> usize {
        self.shapes.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::shape(format!(
                "input has width {}, model expects {}",
                x.len(),
                self.d
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input feature".into()));
        }
        Ok(())
    }

    /// Forward pass into `ws`, without input validation.
    pub(crate) fn forward_ws(&self, x: &[f64], ws: &mut Workspace) {
        let n = self.shapes.len();
        ws.acts.resize_with(n + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        for (l, s) in self.shapes.iter().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            let w = &self.params[s.weights()];
            let b = &self.params[s.bias()];
            for o in 0..s.n_out {
                let row = &w[o * s.n_in..(o + 1) * s.n_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                out.push(if l + 1 < n { z.max(0.0) } else { z });
            }
        }
        ws.probs.resize(self.c, 0.0);
        softmax_into(&ws.acts[n], &mut ws.probs);
    }

    /// Backpropagate the loss at `label` through the pass stored in `ws`,
    /// adding `scale` times the parameter gradient into `grad`. Returns the loss.
    pub(crate) fn backward_ws(
        &self,
        ws: &mut Workspace,
        label: usize,
        loss: &LossConfig,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let value = loss.loss_raw(&ws.probs, label);
        ws.delta.resize(self.c, 0.0);
        loss.logit_grad_raw(&ws.probs, label, &mut ws.delta);
        for l in (0..self.shapes.len()).rev() {
            let s = self.shapes[l];
            let input = &ws.acts[l];
            let gw = &mut grad[s.weights()];
            for o in 0..s.n_out {
                let dz = scale * ws.delta[o];
                if dz == 0.0 {
                    continue;
                }
                let row = &mut gw[o * s.n_in..(o + 1) * s.n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += dz * xi;
                }
            }
            for (g, dz) in grad[s.bias()].iter_mut().zip(&ws.delta) {
                *g += scale * dz;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[s.weights()];
            ws.delta_prev.clear();
            ws.delta_prev.resize(s.n_in, 0.0);
            for o in 0..s.n_out {
                let dz = ws.delta[o];
                if dz == 0.0 {
                    continue;
                }
                for (dp, wi) in ws.delta_prev.iter_mut().zip(&w[o * s.n_in..(o + 1) * s.n_in]) {
                    *dp += dz * wi;
                }
            }
            // ReLU derivative, taken as 0 at the hinge.
            for (dp, a) in ws.delta_prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *dp = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
        value
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        self.forward_ws(x, &mut ws);
        Ok(ws.logits().to_vec())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ProbVector> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        self.forward_ws(x, &mut ws);
        ProbVector::new(ws.probs)
    }

    /// Forward every row of a row-major `n x d` feature matrix.
    pub fn forward_batch(&self, features: &[f64]) -> Result<Vec<ProbVector>> {
        if !features.len().is_multiple_of(self.d) {
            return Err(Error::shape(format!(
                "{} feature values is not a multiple of width {}",
                features.len(),
                self.d
            )));
        }
        let mut ws = Workspace::default();
        features
            .chunks(self.d)
            .map(|x| {
                self.check_input(x)?;
                self.forward_ws(x, &mut ws);
                ProbVector::new(ws.probs.clone())
            })
            .collect()
    }

    /// Loss at `(x, label)` and its gradient with respect to every parameter.
    pub fn loss_gradient(&self, x: &[f64], label: usize, loss: &LossConfig) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        loss.validate(self.c)?;
        if label >= self.c {
            return Err(Error::domain(format!("label {label} out of range for {} classes", self.c)));
        }
        let mut ws = Workspace::default();
        let mut grad = vec![0.0; self.params.len()];
        self.forward_ws(x, &mut ws);
        let value = self.backward_ws(&mut ws, label, loss, 1.0, &mut grad);
        Ok((value, grad))
    }

    /// Compare the backprop gradient against central differences with step
    /// [`FD_STEP`] over every parameter.
    pub fn grad_check(&self, x: &[f64], label: usize, loss: &LossConfig) -> Result<GradCheck> {
        let (_, analytic) = self.loss_gradient(x, label, loss)?;
        let numeric = self.numeric_gradient(x, label, |f, j| loss.loss_raw(f, j));
        Ok(compare_gradients(&analytic, &numeric))
    }

    /// Central-difference gradient of `loss_fn(softmax output, label)`.
    pub fn numeric_gradient<F>(&self, x: &[f64], label: usize, loss_fn: F) -> Vec<f64>
    where
        F: Fn(&[f64], usize) -> f64,
    {
        let mut probe = self.clone();
        let mut ws = Workspace::default();
        (0..self.params.len())
            .map(|i| {
                let orig = probe.params[i];
                probe.params[i] = orig + FD_STEP;
                probe.forward_ws(x, &mut ws);
                let up = loss_fn(&ws.probs, label);
                probe.params[i] = orig - FD_STEP;
                probe.forward_ws(x, &mut ws);
                let down = loss_fn(&ws.probs, label);
                probe.params[i] = orig;
                (up - down) / (2.0 * FD_STEP)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            architecture: self.architecture(),
            params: self.params.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        let a = ck.architecture;
        let mut clf = Classifier::new(a.d, a.c, &a.hidden, 0)?;
        if ck.params.len() != clf.params.len() {
            return Err(Error::shape(format!(
                "checkpoint has {} parameters, architecture needs {}",
                ck.params.len(),
                clf.params.len()
            )));
        }
        if ck.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter in checkpoint".into()));
        }
        clf.params = ck.params;
        Ok(clf)
    }
}

/// Relative errors between an analytic and a numeric gradient.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(REL_ERR_FLOOR, |m, v| m.max(v.abs()));
    let mut max_abs: f64 = 0.0;
    let mut max_elem: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        let diff = (a - n).abs();
        max_abs = max_abs.max(diff);
        max_elem = max_elem.max(diff / a.abs().max(n.abs()).max(REL_ERR_FLOOR));
    }
    GradCheck {
        max_rel_error: max_abs / scale,
        max_elementwise_rel_error: max_elem,
        max_abs_error: max_abs,
        params: analytic.len(),
    }
}
