use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::net::Real;

/// Mean squared error over all `B·V` entries, reduced in 64-bit, and its
/// gradient `2 (pred − target) / (B·V)`.
pub fn mse_loss<T: Real>(pred: ArrayView2<T>, target: ArrayView2<T>) -> Result<(f64, Array2<T>)> {
    if pred.dim() != target.dim() {
        let (pb, pv) = pred.dim();
        let (tb, tv) = target.dim();
        return Err(Error::Shape {
            context: if pb != tb { "loss batch" } else { "loss width" },
            expected: if pb != tb { tb } else { tv },
            found: if pb != tb { pb } else { pv },
        });
    }
    let n = pred.len();
    if n == 0 {
        return Err(Error::invalid("batch", "empty prediction"));
    }
    let sum: f64 = Zip::from(&pred)
        .and(&target)
        .fold(0.0, |acc, &p, &t| acc + (p - t).as_f64().powi(2));
    let scale = T::of(2.0 / n as f64);
    let grad = Zip::from(&pred).and(&target).map_collect(|&p, &t| (p - t) * scale);
    Ok((sum / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_and_unit() {
        let p = array![[1.0f32, 2.0], [3.0, 4.0]];
        let (l, g) = mse_loss(p.view(), p.view()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        let t = &p - 1.0;
        let (l, g) = mse_loss(p.view(), t.view()).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn shape_mismatch() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((2, 2));
        assert!(matches!(mse_loss(a.view(), b.view()), Err(Error::Shape { .. })));
    }
}
