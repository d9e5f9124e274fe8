use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Keep,
    Reinit,
}

/// Per-view state of the outlier scheme. A view is reinitialized once its
/// albedo loss after warping exceeds `threshold` times the loss before
/// warping for `patience` consecutive evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierGate {
    pub threshold: f64,
    pub patience: u32,
    pub consecutive: u32,
}

impl Default for OutlierGate {
    fn default() -> Self {
        Self {
            threshold: 1.2,
            patience: 3,
            consecutive: 0,
        }
    }
}

impl OutlierGate {
    pub fn new(threshold: f64, patience: u32) -> Self {
        Self {
            threshold,
            patience: patience.max(1),
            consecutive: 0,
        }
    }
}

/// Records one evaluation. The counter resets on every good evaluation and
/// after a reinit.
pub fn outlier_gate(before: f64, after: f64, history: &mut OutlierGate) -> GateDecision {
    if after > history.threshold * before {
        history.consecutive += 1;
    } else {
        history.consecutive = 0;
    }
    if history.consecutive >= history.patience {
        history.consecutive = 0;
        GateDecision::Reinit
    } else {
        GateDecision::Keep
    }
}
