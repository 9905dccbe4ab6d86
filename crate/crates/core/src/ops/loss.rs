use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Op, Var};
use crate::ops::activation::{sigmoid, softplus};
use crate::tensor::Tensor;

/// Upper bound on the positive-class weight.
pub const MAX_POS_WEIGHT: f64 = 20.0;

/// `clamp(negatives / positives, 1, 20)`, or the maximum when there are no positives.
pub fn pos_weight_for(target: &[f64]) -> f64 {
    let pos = target.iter().filter(|&&t| t >= 0.5).count();
    if pos == 0 {
        return MAX_POS_WEIGHT;
    }
    let neg = target.len() - pos;
    (neg as f64 / pos as f64).clamp(1.0, MAX_POS_WEIGHT)
}

impl Graph {
    /// Mean weighted binary cross-entropy on logits:
    /// `w·y·softplus(−z) + (1−y)·softplus(z)` averaged over every element.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor, pos_weight: f64) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != target.shape() {
            return Err(shape_err("bce_with_logits", format!("logits {:?} vs target {:?}", z.shape(), target.shape())));
        }
        if !(pos_weight > 0.0) || !pos_weight.is_finite() {
            return Err(Error::InvalidArgument(format!("positive weight must be finite and > 0, got {pos_weight}")));
        }
        let n = z.numel() as f64;
        let total: f64 = z
            .data()
            .iter()
            .zip(target.data())
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z))
            .sum();
        let out = Tensor::scalar(total / n);
        self.push(out, Op::BceWithLogits { logits, target: target.data().to_vec(), pos_weight })
    }
}

pub(crate) fn bce_backward(logits: &[f64], target: &[f64], pos_weight: f64, g0: f64) -> Vec<f64> {
    let f = g0 / logits.len() as f64;
    logits
        .iter()
        .zip(target)
        .map(|(&z, &y)| f * (-pos_weight * y * sigmoid(-z) + (1.0 - y) * sigmoid(z)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_weight_matches_plain_bce() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::new([4], vec![-2.0, 0.0, 1.5, 3.0]).unwrap());
        let y = Tensor::new([4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let l = g.bce_with_logits(z, &y, 1.0).unwrap();
        let mut expect = 0.0;
        for (zv, yv) in [(-2.0f64, 0.0f64), (0.0, 1.0), (1.5, 1.0), (3.0, 0.0)] {
            let p = 1.0 / (1.0 + (-zv).exp());
            expect -= yv * p.ln() + (1.0 - yv) * (1.0 - p).ln();
        }
        assert!((g.value(l).item().unwrap() - expect / 4.0).abs() < 1e-12);
    }

    #[test]
    fn pos_weight_is_clamped() {
        assert_eq!(pos_weight_for(&[0.0; 10]), MAX_POS_WEIGHT);
        assert_eq!(pos_weight_for(&[1.0, 1.0, 1.0, 0.0]), 1.0);
        assert_eq!(pos_weight_for(&[1.0, 0.0, 0.0, 0.0, 0.0]), 4.0);
        let mut t = vec![0.0; 100];
        t[0] = 1.0;
        assert_eq!(pos_weight_for(&t), MAX_POS_WEIGHT);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let mut g = Graph::new();
        let z = g.param(Tensor::new([2], vec![-800.0, 800.0]).unwrap());
        let y = Tensor::new([2], vec![1.0, 0.0]).unwrap();
        let l = g.bce_with_logits(z, &y, 5.0).unwrap();
        assert!((g.value(l).item().unwrap() - (5.0 * 800.0 + 800.0) / 2.0).abs() < 1e-9);
        g.backward(l).unwrap();
        assert!(g.grad(z).unwrap().is_finite());
    }
}
