use serde::{Deserialize, Serialize};

use super::{AlignmentError, Result};

/// Sequence log-probabilities of one preference pair under the policy and
/// the frozen reference model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoPair {
    pub policy_chosen: f64,
    pub policy_rejected: f64,
    pub reference_chosen: f64,
    pub reference_rejected: f64,
}

impl DpoPair {
    /// `(lp_θ(y_w) − lp_ref(y_w)) − (lp_θ(y_l) − lp_ref(y_l))`
    pub fn margin(&self) -> f64 {
        (self.policy_chosen - self.reference_chosen) - (self.policy_rejected - self.reference_rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoBatch {
    pub beta: f64,
    pub pairs: Vec<DpoPair>,
}

impl DpoBatch {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(AlignmentError::InvalidBatch(format!("beta must be positive, got {}", self.beta)));
        }
        if self.pairs.is_empty() {
            return Err(AlignmentError::InvalidBatch("batch has no pairs".into()));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            for (name, lp) in [
                ("policy_chosen", p.policy_chosen),
                ("policy_rejected", p.policy_rejected),
                ("reference_chosen", p.reference_chosen),
                ("reference_rejected", p.reference_rejected),
            ] {
                if !lp.is_finite() || lp > 0.0 {
                    return Err(AlignmentError::InvalidBatch(format!(
                        "pair {i}: {name} = {lp} is not a finite log-probability"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `z = β · margin` per pair.
    pub fn z_values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| self.beta * p.margin()).collect()
    }
}

/// `−log σ(z)`, i.e. `softplus(−z)`, without overflow or cancellation.
pub fn neg_log_sigmoid(z: f64) -> f64 {
    let x = -z;
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `σ(−z) = 1 − σ(z)`, evaluated without cancellation.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Mean over pairs of `−log σ(β · margin)`.
pub fn dpo_loss(batch: &DpoBatch) -> Result<f64> {
    batch.validate()?;
    let z = batch.z_values();
    Ok(z.iter().map(|&z| neg_log_sigmoid(z)).sum::<f64>() / z.len() as f64)
}

/// Partial derivatives of the batch loss with respect to one pair's inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGradient {
    pub policy_chosen: f64,
    pub policy_rejected: f64,
    /// Always zero: the reference model is frozen.
    pub reference_chosen: f64,
    /// Always zero: the reference model is frozen.
    pub reference_rejected: f64,
}

/// `∂L/∂lp_θ(y_w) = −β·σ(−z)/N`, `∂L/∂lp_θ(y_l) = +β·σ(−z)/N`.
pub fn dpo_loss_gradients(batch: &DpoBatch) -> Result<Vec<PairGradient>> {
    batch.validate()?;
    let n = batch.pairs.len() as f64;
    Ok(batch
        .z_values()
        .into_iter()
        .map(|z| {
            let g = batch.beta * sigmoid_neg(z) / n;
            PairGradient { policy_chosen: -g, policy_rejected: g, reference_chosen: 0.0, reference_rejected: 0.0 }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoReport {
    pub loss: f64,
    pub per_pair_z: Vec<f64>,
    pub gradients: Vec<PairGradient>,
}

pub fn dpo_report(batch: &DpoBatch) -> Result<DpoReport> {
    Ok(DpoReport {
        loss: dpo_loss(batch)?,
        per_pair_z: batch.z_values(),
        gradients: dpo_loss_gradients(batch)?,
    })
}
