use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// Classification loss on logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `−log softmax_y`
    CrossEntropy,
    /// `−f_y`
    Logit,
}

impl LossKind {
    /// Scalar loss node for a `1 x C` logit row.
    pub fn record(self, tape: &mut Tape, logits: Var, y: usize) -> Result<Var> {
        match self {
            LossKind::CrossEntropy => {
                let lp = tape.log_softmax(logits)?;
                let pick = tape.slice_cols(lp, y, y + 1)?;
                tape.neg(pick)
            }
            LossKind::Logit => {
                let pick = tape.slice_cols(logits, y, y + 1)?;
                tape.neg(pick)
            }
        }
    }

    pub fn value(self, logits: &[f64], y: usize) -> f64 {
        match self {
            LossKind::CrossEntropy => -log_softmax(logits)[y],
            LossKind::Logit => -logits[y],
        }
    }

    /// `∂L/∂f_i` for every logit.
    pub fn logit_weights(self, logits: &[f64], y: usize) -> Vec<f64> {
        match self {
            LossKind::CrossEntropy => softmax(logits)
                .into_iter()
                .enumerate()
                .map(|(i, p)| if i == y { p - 1.0 } else { p })
                .collect(),
            LossKind::Logit => (0..logits.len()).map(|i| if i == y { -1.0 } else { 0.0 }).collect(),
        }
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}
