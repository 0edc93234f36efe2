use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::network::{Gradients, Input, Network, NetworkMeta, Workspace};
use crate::error::{Error, Result};
use crate::recourse::Dataset;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Epochs without improvement before the learning rate is cut.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_learning_rate: f64,
    pub loss: LossKind,
    pub validation_fraction: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 256,
            max_epochs: 1000,
            patience: 5,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_learning_rate: 1e-6,
            loss: LossKind::Mae,
            validation_fraction: 0.1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("min_learning_rate", self.min_learning_rate),
            ("epsilon", self.epsilon),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, "must be positive"));
            }
        }
        for (field, v) in [("batch_size", self.batch_size), ("max_epochs", self.max_epochs), ("patience", self.patience), ("plateau_patience", self.plateau_patience)] {
            if v == 0 {
                return Err(Error::validation(field, "must be at least 1"));
            }
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::validation("plateau_factor", "must lie in (0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::validation("validation_fraction", "must lie in (0, 1)"));
        }
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::validation(field, "must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleInput {
    Dense(Vec<f64>),
    /// Sorted support of a 0/1 input.
    Active(Vec<usize>),
}

impl SampleInput {
    fn view(&self) -> Input<'_> {
        match self {
            SampleInput::Dense(x) => Input::Dense(x),
            SampleInput::Active(a) => Input::Active(a),
        }
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        match self {
            SampleInput::Dense(x) if x.len() != input_dim => Err(Error::Dimension {
                expected: input_dim,
                actual: x.len(),
            }),
            SampleInput::Active(a) if a.iter().any(|&i| i >= input_dim) => {
                Err(Error::validation("input", "active index out of range"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: SampleInput,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub param_count: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub wall_ms: f64,
}

/// Mean loss over `samples` and, if `grads` is given, the gradient of that mean.
pub(crate) fn loss_and_gradient(
    net: &Network,
    samples: &[&Sample],
    kind: LossKind,
    ws: &mut Workspace,
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        let input = s.input.view();
        let raw = net.run(input, ws);
        let pred = net.denormalize(raw);
        total += kind.per_sample(pred, s.target);
        if let Some(g) = grads.as_deref_mut() {
            let d = kind.derivative(pred, s.target) * net.target_std() * scale;
            net.backward(input, d, ws, g);
        }
    }
    total * scale
}

/// Mean loss and its gradient with respect to every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradient {
    pub loss: f64,
    /// Per layer, row-major like [`Layer::row`](super::Layer::row).
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

pub fn loss_gradient(net: &Network, samples: &[Sample], kind: LossKind) -> Result<ParameterGradient> {
    if samples.is_empty() {
        return Err(Error::Size("gradient needs at least one sample".into()));
    }
    for s in samples {
        s.input.check(net.input_dim())?;
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    let mut ws = Workspace::new(net);
    let mut grads = Gradients::zeros(net);
    let loss = loss_and_gradient(net, &refs, kind, &mut ws, Some(&mut grads));
    Ok(ParameterGradient {
        loss,
        weights: grads.weights,
        bias: grads.bias,
    })
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        Self {
            m: Gradients::zeros(net),
            v: Gradients::zeros(net),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let (w, b) = layer.params_mut();
            let blocks = [
                (w, &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]),
                (b, &grads.bias[l], &mut self.m.bias[l], &mut self.v.bias[l]),
            ];
            for (params, g, m, v) in blocks {
                for k in 0..params.len() {
                    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    params[k] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
        }
    }
}

/// Trains on `(tour, Q̄)` records; inputs are the tours' edge incidence.
pub fn train(data: &Dataset, arch: &[usize], cfg: &TrainConfig) -> Result<(Network, TrainingReport)> {
    let samples: Vec<Sample> = data
        .records()
        .iter()
        .map(|r| Sample {
            input: SampleInput::Active(r.tour.arcs().to_vec()),
            target: r.q_bar,
        })
        .collect();
    let dim = crate::arcs::ArcSpace::new(data.n_nodes()).len();
    let (net, report) = train_samples(&samples, dim, arch, cfg)?;
    let meta = NetworkMeta {
        loss: Some(cfg.loss.name().to_string()),
        seed: Some(cfg.seed),
        epochs: Some(report.history.len()),
        best_val_loss: Some(report.best_val_loss),
        dataset: Some(format!("{}:{}", data.provenance().instance, data.provenance().scenario_set)),
        provenance: None,
    };
    Ok((net.with_meta(meta), report))
}

/// Mini-batch Adam with epoch shuffling, early stopping on validation loss
/// and learning-rate reduction on plateau. Returns the parameters of the
/// best validation epoch.
pub fn train_samples(samples: &[Sample], input_dim: usize, arch: &[usize], cfg: &TrainConfig) -> Result<(Network, TrainingReport)> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::Size("training needs at least 2 samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| !s.target.is_finite()) {
        return Err(Error::validation("q_bar", format!("non-finite target {}", s.target)));
    }
    for s in samples {
        s.input.check(input_dim)?;
    }
    let started = Instant::now();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng::substream(cfg.seed, 1));
    let n_val = ((samples.len() as f64) * cfg.validation_fraction).ceil().clamp(1.0, (samples.len() - 1) as f64) as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<&Sample> = val_idx.iter().map(|&k| &samples[k]).collect();
    let mut train_set: Vec<&Sample> = train_idx.iter().map(|&k| &samples[k]).collect();

    let n = train_set.len() as f64;
    let mean = train_set.iter().map(|s| s.target).sum::<f64>() / n;
    let var = train_set.iter().map(|s| (s.target - mean).powi(2)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 * (1.0 + mean.abs()) { var.sqrt() } else { 1.0 };

    let mut net = Network::initialized(input_dim, arch, mean, std, &mut rng::substream(cfg.seed, 0))?;
    if samples.len() < 10 * net.param_count() {
        log::warn!(
            "{} samples for {} parameters; at least {} are recommended",
            samples.len(),
            net.param_count(),
            10 * net.param_count()
        );
    }
    let mut ws = Workspace::new(&net);
    let mut grads = Gradients::zeros(&net);
    let mut adam = Adam::new(&net);
    let mut shuffler = rng::substream(cfg.seed, 2);
    let mut lr = cfg.learning_rate;
    let mut best = (loss_and_gradient(&net, &val, cfg.loss, &mut ws, None), 0usize, net.clone());
    let mut since_best = 0;
    let mut since_cut = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        train_set.shuffle(&mut shuffler);
        let mut epoch_loss = 0.0;
        for batch in train_set.chunks(cfg.batch_size) {
            grads.clear();
            let l = loss_and_gradient(&net, batch, cfg.loss, &mut ws, Some(&mut grads));
            epoch_loss += l * batch.len() as f64;
            adam.update(&mut net, &grads, lr, cfg);
        }
        let train_loss = epoch_loss / n;
        let val_loss = loss_and_gradient(&net, &val, cfg.loss, &mut ws, None);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, net.clone());
            since_best = 0;
            since_cut = 0;
        } else {
            since_best += 1;
            since_cut += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
            if since_cut >= cfg.plateau_patience {
                lr = (lr * cfg.plateau_factor).max(cfg.min_learning_rate);
                since_cut = 0;
            }
        }
    }
    let (best_val_loss, best_epoch, best_net) = best;
    let report = TrainingReport {
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
        param_count: best_net.param_count(),
        train_samples: train_set.len(),
        val_samples: val.len(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((best_net, report))
}
