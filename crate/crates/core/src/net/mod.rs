//! TurboNet: the turbo decoder unfolded into `M` units of two max-log
//! subnets, with trainable multiplicative weights on branch metrics (GW),
//! posterior terms (PLW) and the extrinsic combination (ELW).
//!
//! With every weight equal to 1 the forward pass performs the same floating
//! point operations in the same order as [`crate::siso::turbo_decode`] in
//! max-only mode, so the two agree bit for bit.
//!
//! Gradients are exact. The network is piecewise linear in its inputs and
//! each max node picks one argument, so the backward pass follows the choices
//! recorded on the [`DecodeTape`].

mod backward;
mod forward;
mod weights;

pub use backward::{backward, loss_and_gradients};
pub use forward::{forward, DecodeTape, NetOutput, SubnetTape};
pub use weights::{
    init_weights, plw_index, Family, GammaTerm, Gradients, GwLayout, SubnetWeights, TrainingInfo, UnitWeights,
    WeightMeta, WeightSet, WeightVariant, ELW_PER_STAGE, GW_PER_STAGE, PLW_PER_STAGE,
};

use crate::error::{check_len, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hard decision on a probability; exactly 0.5 decides 1.
#[inline]
pub fn decide(probability: f64) -> u8 {
    (probability >= 0.5) as u8
}

/// `mean((pred - target)^2)`.
pub fn loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("target LLRs", pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`loss`] with respect to `pred`.
pub fn loss_seed(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_len("target LLRs", pred.len(), target.len())?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_example() {
        assert_eq!(loss(&[1.0, -3.0], &[0.0, 1.0]).unwrap(), 8.5);
        assert_eq!(loss_seed(&[1.0, -3.0], &[0.0, 1.0]).unwrap(), vec![1.0, -4.0]);
        assert!(loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sigmoid_and_decision() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(decide(sigmoid(0.0)), 1);
        assert_eq!(decide(sigmoid(-1e-9)), 0);
        assert!((sigmoid(-800.0)).is_finite() && sigmoid(800.0) == 1.0);
    }
}
