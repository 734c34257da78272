//! Evaluation metrics.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Unweighted mean of per-class F1 over `0..n_classes`. A class that appears
/// in neither predictions nor truth scores 0.
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            context: "predictions",
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if n_classes == 0 {
        return Err(Error::invalid("n_classes", "must be positive"));
    }
    if let Some(&c) = pred.iter().chain(truth).find(|&&c| c >= n_classes) {
        return Err(Error::invalid(
            "class",
            format!("{c} is out of range for {n_classes} classes"),
        ));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let f1_sum: f64 = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(f1_sum / n_classes as f64)
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows(scores: ArrayView2<f32>) -> Vec<usize> {
    scores
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax equals the true id.
pub fn top1(scores: ArrayView2<f32>, truth: &[usize]) -> Result<f64> {
    if scores.nrows() != truth.len() {
        return Err(Error::Shape {
            context: "scores",
            expected: truth.len(),
            found: scores.nrows(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("truth", "empty"));
    }
    let hits = argmax_rows(scores).iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Coefficient of determination per column, averaged over columns. A column
/// with zero variance scores 1 when predicted exactly and 0 otherwise.
pub fn r2(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape {
            context: "predictions",
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let (n, k) = truth.dim();
    if n == 0 || k == 0 {
        return Err(Error::invalid("truth", "empty"));
    }
    let mut total = 0.0;
    for j in 0..k {
        let t = truth.column(j);
        let p = pred.column(j);
        let mean = t.sum() / n as f64;
        let sst: f64 = t.iter().map(|&v| (v - mean).powi(2)).sum();
        let sse: f64 = t.iter().zip(p).map(|(&a, &b)| (a - b).powi(2)).sum();
        total += if sst > 0.0 {
            1.0 - sse / sst
        } else if sse == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn f1_basics() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert!(macro_f1(&[0, 5], &[0, 1], 3).is_err());
    }

    #[test]
    fn top1_tie_rule() {
        let s = array![[0.5f32, 0.5, 0.5], [1.0, 1.0, 0.0]];
        assert_eq!(top1(s.view(), &[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn r2_mean_prediction_is_zero() {
        let t = array![[1.0], [2.0], [6.0]];
        let p = array![[3.0], [3.0], [3.0]];
        assert_eq!(r2(p.view(), t.view()).unwrap(), 0.0);
        assert_eq!(r2(t.view(), t.view()).unwrap(), 1.0);
    }
}
