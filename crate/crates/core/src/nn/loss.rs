//! Cross-entropy and mutual-distillation losses.
//!
//! Every loss returns its value together with the gradient with respect to
//! the student's logits, which is what [`super::gradient`] consumes. Losses
//! are averaged over the rows of the batch.

use ndarray::Axis;

use super::Matrix;
use crate::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn check_shapes(student: &Matrix, teacher: &Matrix) -> Result<()> {
    if student.nrows() != teacher.nrows() {
        return Err(Error::dim("n_samples", student.nrows(), teacher.nrows()));
    }
    if student.ncols() != teacher.ncols() {
        return Err(Error::dim("n_classes", student.ncols(), teacher.ncols()));
    }
    Ok(())
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.nrows() {
        return Err(Error::dim("labels", logits.nrows(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::Contract(format!("label {bad} outside [0, {})", logits.ncols())));
    }
    Ok(())
}

/// Mean cross-entropy of `labels` under softmax(`logits`).
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let n = logits.nrows() as f64;
    let mut probs = softmax_rows(logits);
    let mut total = 0.0;
    for (mut row, &label) in probs.axis_iter_mut(Axis(0)).zip(labels) {
        total -= row[label].max(PROB_FLOOR).ln();
        row[label] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    Ok((total / n, probs))
}

/// Mean `KL(softmax(student) || softmax(teacher))`; gradient is taken with
/// respect to the student only.
pub fn kl_divergence(student: &Matrix, teacher: &Matrix) -> Result<(f64, Matrix)> {
    check_shapes(student, teacher)?;
    let n = student.nrows() as f64;
    let p = softmax_rows(student);
    let q = softmax_rows(teacher);
    let mut grad = Matrix::zeros(student.dim());
    let mut total = 0.0;
    for ((p_row, q_row), mut g_row) in p
        .axis_iter(Axis(0))
        .zip(q.axis_iter(Axis(0)))
        .zip(grad.axis_iter_mut(Axis(0)))
    {
        let log_ratio: Vec<f64> = p_row
            .iter()
            .zip(q_row.iter())
            .map(|(&pi, &qi)| pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln())
            .collect();
        let kl: f64 = p_row.iter().zip(&log_ratio).map(|(pi, lr)| pi * lr).sum();
        total += kl;
        for ((g, &pi), lr) in g_row.iter_mut().zip(p_row.iter()).zip(&log_ratio) {
            *g = pi * (lr - kl) / n;
        }
    }
    Ok((total / n, grad))
}

/// Weights of the supervised and distillation terms; they must sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    ce: f64,
    kl: f64,
}

impl LossWeights {
    pub fn new(ce: f64, kl: f64) -> Result<Self> {
        if !(ce >= 0.0 && kl >= 0.0) || (ce + kl - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "lambda",
                format!("loss weights must be non-negative and sum to 1, got {ce} + {kl}"),
            ));
        }
        Ok(Self { ce, kl })
    }

    pub fn ce(&self) -> f64 {
        self.ce
    }

    pub fn kl(&self) -> f64 {
        self.kl
    }
}

#[derive(Debug, Clone)]
pub struct MutualLoss {
    pub total: f64,
    pub ce: f64,
    pub kl: f64,
    /// Gradient of `total` with respect to the student logits.
    pub grad: Matrix,
}

/// Distillation loss `ce * CE(student) + kl * KL(student || teacher)`.
///
/// The teacher logits are treated as constants.
pub fn loss_mutual(student: &Matrix, teacher: &Matrix, labels: &[usize], weights: LossWeights) -> Result<MutualLoss> {
    check_shapes(student, teacher)?;
    let (ce, ce_grad) = cross_entropy(student, labels)?;
    let (kl, kl_grad) = kl_divergence(student, teacher)?;
    let grad = ce_grad * weights.ce + kl_grad * weights.kl;
    Ok(MutualLoss {
        total: weights.ce * ce + weights.kl * kl,
        ce,
        kl,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn identical_distributions_have_zero_kl() {
        let logits = array![[0.3, -1.2, 2.0], [1.0, 1.0, 0.0]];
        let l = loss_mutual(&logits, &logits, &[2, 0], LossWeights::new(0.4, 0.6).unwrap()).unwrap();
        assert_eq!(l.kl, 0.0);
        assert!((l.total - 0.4 * l.ce).abs() < 1e-15);
    }

    #[test]
    fn uniform_prediction_has_ln_m_cross_entropy() {
        let logits = Matrix::zeros((3, 4));
        let (ce, _) = cross_entropy(&logits, &[0, 3, 1]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        let l = loss_mutual(&logits, &logits, &[0, 3, 1], LossWeights::new(0.4, 0.6).unwrap()).unwrap();
        assert!((l.total - 0.4 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_class_hand_evaluation() {
        // student [2,0], teacher [0,2], label 0
        let e2 = 2f64.exp();
        let p0 = e2 / (e2 + 1.0);
        let p1 = 1.0 / (e2 + 1.0);
        let (q0, q1) = (p1, p0);
        let ce = -p0.ln();
        let kl = p0 * (p0 / q0).ln() + p1 * (p1 / q1).ln();
        let expect = 0.4 * ce + 0.6 * kl;
        let l = loss_mutual(
            &array![[2.0, 0.0]],
            &array![[0.0, 2.0]],
            &[0],
            LossWeights::new(0.4, 0.6).unwrap(),
        )
        .unwrap();
        assert!((l.total - expect).abs() < 1e-12);
        // 0.4 * 0.126928 + 0.6 * 1.523188
        assert!((l.total - 0.964684).abs() < 1e-6);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(matches!(LossWeights::new(0.5, 0.6), Err(Error::Config { .. })));
        assert!(LossWeights::new(0.3, 0.7).is_ok());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Matrix::zeros((2, 3));
        let b = Matrix::zeros((2, 4));
        assert!(loss_mutual(&a, &b, &[0, 1], LossWeights::new(0.5, 0.5).unwrap()).is_err());
        assert!(cross_entropy(&a, &[0]).is_err());
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(
            s in prop::collection::vec(-20.0f64..20.0, 12),
            t in prop::collection::vec(-20.0f64..20.0, 12),
        ) {
            let s = Matrix::from_shape_vec((3, 4), s).unwrap();
            let t = Matrix::from_shape_vec((3, 4), t).unwrap();
            let (kl, _) = kl_divergence(&s, &t).unwrap();
            prop_assert!(kl >= -1e-12);
        }

        #[test]
        fn cross_entropy_is_non_negative(
            s in prop::collection::vec(-30.0f64..30.0, 8),
            labels in prop::collection::vec(0usize..4, 2),
        ) {
            let s = Matrix::from_shape_vec((2, 4), s).unwrap();
            let (ce, _) = cross_entropy(&s, &labels).unwrap();
            prop_assert!(ce >= 0.0);
        }
    }
}
