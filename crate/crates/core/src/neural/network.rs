use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string, Error, Result};
use crate::rng::Rng;

/// Dense affine layer, weights row-major `[output][input]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(Error::Dimension {
                expected: inputs * outputs,
                actual: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::Dimension {
                expected: outputs,
                actual: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::validation("layers", "parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    /// Fan-in scaled uniform initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
    pub(crate) fn he_uniform(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    fn dense_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (w, v) in self.row(j).iter().zip(x) {
                acc += w * v;
            }
            *o = acc + self.bias[j];
        }
    }

    /// Binary input given by its support. Bit-identical to `dense_into` on the
    /// 0/1 vector: skipped terms are exact zeros.
    fn active_into(&self, active: &[usize], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = self.row(j);
            let mut acc = 0.0;
            for &i in active {
                acc += row[i];
            }
            *o = acc + self.bias[j];
        }
    }
}

/// A network input: a dense vector or the sorted support of a 0/1 vector.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    Active(&'a [usize]),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<crate::provenance::Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    target_mean: f64,
    target_std: f64,
    meta: NetworkMeta,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    arch: Vec<usize>,
    input_dim: usize,
    target_mean: f64,
    target_std: f64,
    layers: Vec<LayerFile>,
    #[serde(default)]
    training: NetworkMeta,
}

/// Per-layer parameter gradients, same shapes as the layers.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| g.fill(0.0));
    }
}

/// Scratch buffers for one forward/backward pass.
pub(crate) struct Workspace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new(net: &Network) -> Self {
        let sizes: Vec<usize> = net.layers.iter().map(|l| l.outputs).collect();
        Self {
            pre: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            act: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, target_mean: f64, target_std: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("layers", "a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Dimension {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        if layers.last().map(|l| l.outputs) != Some(1) {
            return Err(Error::validation("layers", "the output layer must have exactly one unit"));
        }
        if !(target_std.is_finite() && target_std > 0.0) {
            return Err(Error::validation("target_std", "must be finite and positive"));
        }
        if !target_mean.is_finite() {
            return Err(Error::validation("target_mean", "must be finite"));
        }
        Ok(Self {
            layers,
            target_mean,
            target_std,
            meta: NetworkMeta::default(),
        })
    }

    /// He-initialized network with the given hidden sizes.
    pub fn initialized(input_dim: usize, hidden: &[usize], target_mean: f64, target_std: f64, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::validation("arch", "layer sizes must be positive"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes.windows(2).map(|w| Layer::he_uniform(w[0], w[1], rng)).collect();
        Self::new(layers, target_mean, target_std)
    }

    pub fn with_meta(mut self, meta: NetworkMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn meta(&self) -> &NetworkMeta {
        &self.meta
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    /// Hidden layer sizes.
    pub fn arch(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    /// De-normalized prediction for a dense input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self.predict(Input::Dense(x)))
    }

    /// De-normalized prediction for a binary input given by its sorted support.
    pub fn forward_active(&self, active: &[usize]) -> f64 {
        self.predict(Input::Active(active))
    }

    pub fn predict(&self, input: Input<'_>) -> f64 {
        let mut ws = Workspace::new(self);
        self.denormalize(self.run(input, &mut ws))
    }

    #[inline]
    pub(crate) fn denormalize(&self, raw: f64) -> f64 {
        raw * self.target_std + self.target_mean
    }

    /// Pre-activations of every layer (hidden and output) for one input.
    pub fn pre_activations(&self, input: Input<'_>) -> Vec<Vec<f64>> {
        let mut ws = Workspace::new(self);
        self.run(input, &mut ws);
        ws.pre
    }

    /// Forward pass filling `ws`; returns the raw (normalized) output.
    pub(crate) fn run(&self, input: Input<'_>, ws: &mut Workspace) -> f64 {
        for (l, layer) in self.layers.iter().enumerate() {
            if l == 0 {
                match input {
                    Input::Dense(x) => layer.dense_into(x, &mut ws.pre[0]),
                    Input::Active(a) => layer.active_into(a, &mut ws.pre[0]),
                }
            } else {
                layer.dense_into(&ws.act[l - 1], &mut ws.pre[l]);
            }
            for (a, &p) in ws.act[l].iter_mut().zip(ws.pre[l].iter()) {
                *a = p.max(0.0);
            }
        }
        ws.pre[self.layers.len() - 1][0]
    }

    /// Accumulates `scale * d(raw output)/d(params)` into `grads` after `run` filled `ws`.
    pub(crate) fn backward(&self, input: Input<'_>, scale: f64, ws: &mut Workspace, grads: &mut Gradients) {
        let last = self.layers.len() - 1;
        ws.delta[last][0] = scale;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.bias[l];
            for j in 0..layer.outputs {
                let d = ws.delta[l][j];
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                let row = &mut gw[j * layer.inputs..(j + 1) * layer.inputs];
                if l == 0 {
                    match input {
                        Input::Dense(x) => row.iter_mut().zip(x).for_each(|(g, v)| *g += d * v),
                        Input::Active(a) => a.iter().for_each(|&i| row[i] += d),
                    }
                } else {
                    row.iter_mut().zip(&ws.act[l - 1]).for_each(|(g, v)| *g += d * v);
                }
            }
            if l > 0 {
                let (below, here) = ws.delta.split_at_mut(l);
                let prev = &mut below[l - 1];
                for (i, p) in prev.iter_mut().enumerate() {
                    if ws.pre[l - 1][i] <= 0.0 {
                        *p = 0.0;
                        continue;
                    }
                    let mut acc = 0.0;
                    for j in 0..layer.outputs {
                        acc += layer.weight(j, i) * here[0][j];
                    }
                    *p = acc;
                }
            }
        }
    }

    /// Output layer with the target de-normalization folded in:
    /// `ŷ = w · h + b` in time units.
    pub fn folded_output(&self) -> (Vec<f64>, f64) {
        let out = self.layers.last().expect("non-empty");
        let w = out.row(0).iter().map(|v| v * self.target_std).collect();
        let b = out.bias[0] * self.target_std + self.target_mean;
        (w, b)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut inputs = file.input_dim;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (k, lf) in file.layers.into_iter().enumerate() {
            let outputs = lf.bias.len();
            if lf.weights.len() != outputs || lf.weights.iter().any(|r| r.len() != inputs) {
                return Err(Error::validation("layers", format!("layer {} weight shape does not match {inputs}x{outputs}", k + 1)));
            }
            layers.push(Layer::new(inputs, outputs, lf.weights.concat(), lf.bias)?);
            inputs = outputs;
        }
        let net = Self::new(layers, file.target_mean, file.target_std)?.with_meta(file.training);
        if net.arch() != file.arch {
            return Err(Error::validation("arch", format!("declared {:?} but layers give {:?}", file.arch, net.arch())));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            arch: self.arch(),
            input_dim: self.input_dim(),
            target_mean: self.target_mean,
            target_std: self.target_std,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: (0..l.outputs).map(|j| l.row(j).to_vec()).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
            training: self.meta.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("network serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_string(path.as_ref(), &self.to_json())
    }
}
