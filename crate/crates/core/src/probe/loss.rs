//! Task losses over score matrices. Each returns the batch-mean loss and the
//! gradient with respect to the scores.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// `log σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape {
            context: "labels",
            expected: rows,
            found: labels.len(),
        });
    }
    if rows == 0 {
        return Err(Error::invalid("batch", "empty"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(
            "label",
            format!("{bad} is out of range for {classes} outputs"),
        ));
    }
    Ok(())
}

/// Softmax cross-entropy averaged over rows.
pub fn softmax_cross_entropy(logits: ArrayView2<f32>, labels: &[usize]) -> Result<(f64, Array2<f32>)> {
    let (b, c) = logits.dim();
    check_labels(labels, b, c)?;
    let mut grad = Array2::zeros((b, c));
    let mut total = 0.0;
    for (i, row) in logits.outer_iter().enumerate() {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
        let exps: Vec<f64> = row.iter().map(|&v| (f64::from(v) - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total -= f64::from(row[labels[i]]) - max - sum.ln();
        for j in 0..c {
            let p = exps[j] / sum;
            let t = if j == labels[i] { 1.0 } else { 0.0 };
            grad[[i, j]] = ((p - t) / b as f64) as f32;
        }
    }
    Ok((total / b as f64, grad))
}

/// Presence-only loss with one background location per record.
///
/// For record `i` observed as species `y` among `S` species:
///
/// ```text
/// ℓ_i = −[ S·log σ(s_{i,y}) + Σ_{k≠y} log(1 − σ(s_{i,k})) + Σ_k log(1 − σ(b_{i,k})) ] / S
/// ```
///
/// averaged over records. Returns the loss and gradients for `scores` and
/// `background` in that order.
pub fn anfull_loss(
    scores: ArrayView2<f32>,
    species: &[usize],
    background: ArrayView2<f32>,
) -> Result<(f64, Array2<f32>, Array2<f32>)> {
    let (b, s) = scores.dim();
    check_labels(species, b, s)?;
    if background.dim() != (b, s) {
        return Err(Error::Shape {
            context: "background scores",
            expected: b * s,
            found: background.len(),
        });
    }
    let positive_weight = s as f64;
    let norm = (b * s) as f64;
    let mut g_scores = Array2::zeros((b, s));
    let mut g_bg = Array2::zeros((b, s));
    let mut total = 0.0;
    for i in 0..b {
        for k in 0..s {
            let x = f64::from(scores[[i, k]]);
            if k == species[i] {
                total -= positive_weight * log_sigmoid(x);
                g_scores[[i, k]] = (-positive_weight * (1.0 - sigmoid(x)) / norm) as f32;
            } else {
                total -= log_sigmoid(-x);
                g_scores[[i, k]] = (sigmoid(x) / norm) as f32;
            }
            let z = f64::from(background[[i, k]]);
            total -= log_sigmoid(-z);
            g_bg[[i, k]] = (sigmoid(z) / norm) as f32;
        }
    }
    Ok((total / norm, g_scores, g_bg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cross_entropy_uniform() {
        let z = Array2::<f32>::zeros((2, 4));
        let (l, g) = softmax_cross_entropy(z.view(), &[0, 3]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((g[[0, 0]] - (0.25 - 1.0) / 2.0).abs() < 1e-7);
        assert!(softmax_cross_entropy(z.view(), &[4, 0]).is_err());
    }

    #[test]
    fn anfull_perfect_is_near_zero() {
        let big = 40.0f32;
        let s = array![[big, -big, -big]];
        let bg = array![[-big, -big, -big]];
        let (l, _, _) = anfull_loss(s.view(), &[0], bg.view()).unwrap();
        assert!(l < 1e-15);
        assert!(anfull_loss(s.view(), &[3], bg.view()).is_err());
    }
}
