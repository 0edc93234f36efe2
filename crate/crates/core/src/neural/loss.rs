use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};
use crate::recourse::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    #[default]
    Mae,
    /// Mean absolute percentage error, in percent.
    Mape,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Mape => "mape",
        }
    }

    /// Loss of one sample, before averaging.
    #[inline]
    pub(crate) fn per_sample(self, pred: f64, target: f64) -> f64 {
        let r = target - pred;
        match self {
            LossKind::Mse => r * r,
            LossKind::Mae => r.abs(),
            LossKind::Mape => 100.0 * (r / target).abs(),
        }
    }

    /// `d per_sample / d pred`; the subgradient at a zero residual is 0.
    #[inline]
    pub(crate) fn derivative(self, pred: f64, target: f64) -> f64 {
        let r = pred - target;
        match self {
            LossKind::Mse => 2.0 * r,
            LossKind::Mae => sign(r),
            LossKind::Mape => 100.0 * sign(r) / target.abs(),
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            "mape" => Ok(LossKind::Mape),
            other => Err(Error::validation("loss", format!("unknown loss `{other}` (mse, mae, mape)"))),
        }
    }
}

/// Mean loss of `pred` against `target`.
pub fn loss(pred: &[f64], target: &[f64], kind: LossKind) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Size("loss of an empty batch".into()));
    }
    if kind == LossKind::Mape && target.contains(&0.0) {
        return Err(Error::Domain("MAPE is undefined for a zero target".into()));
    }
    let total: f64 = pred.iter().zip(target).map(|(&p, &t)| kind.per_sample(p, t)).sum();
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    /// NaN when the targets are constant.
    pub r2: f64,
}

impl RegressionMetrics {
    pub fn from_predictions(pred: &[f64], target: &[f64]) -> Result<Self> {
        let mae = loss(pred, target, LossKind::Mae)?;
        let mape = loss(pred, target, LossKind::Mape)?;
        let mean = target.iter().sum::<f64>() / target.len() as f64;
        let ss_tot: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
        let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (t - p).powi(2)).sum();
        let r2 = if ss_tot == 0.0 {
            log::warn!("R² is undefined for constant targets");
            f64::NAN
        } else {
            1.0 - ss_res / ss_tot
        };
        Ok(Self { mae, mape, r2 })
    }
}

/// MAE, MAPE and R² of the network on a dataset.
pub fn metrics(net: &Network, data: &Dataset) -> Result<RegressionMetrics> {
    if data.is_empty() {
        return Err(Error::Size("metrics of an empty dataset".into()));
    }
    if net.input_dim() != crate::arcs::ArcSpace::new(data.n_nodes()).len() {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            actual: crate::arcs::ArcSpace::new(data.n_nodes()).len(),
        });
    }
    let pred: Vec<f64> = data.records().iter().map(|r| net.forward_active(r.tour.arcs())).collect();
    let target: Vec<f64> = data.records().iter().map(|r| r.q_bar).collect();
    RegressionMetrics::from_predictions(&pred, &target)
}
