use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::{ForwardTrace, NetworkConfig, ParameterSet, Real};
use crate::error::{Error, Result};

/// Where the loss gradient enters the network.
#[derive(Debug, Clone, Copy)]
pub enum OutputGradient<'a, T> {
    /// `dL/dy` for the head output `y`; head parameters receive gradients.
    Head(ArrayView2<'a, T>),
    /// `dL/de` for the embedding; head gradients are zero.
    Embedding(ArrayView2<'a, T>),
}

/// Reverse pass through a recorded forward trace.
///
/// The residual mixing `h'_j = r (h_j + h'_{j-1})` sends `r · dL/dh'_j` both to
/// `h_j` and down the skip chain to `h'_{j-1}`.
pub fn backward<T: Real>(
    cfg: &NetworkConfig,
    params: &ParameterSet<T>,
    trace: Option<&ForwardTrace<T>>,
    grad: OutputGradient<'_, T>,
) -> Result<ParameterSet<T>> {
    let trace = trace.ok_or(Error::Missing("forward trace (run forward with keep_trace)"))?;
    params.conforms(cfg)?;
    if trace.len() != cfg.depth {
        return Err(Error::Shape {
            context: "trace length",
            expected: cfg.depth,
            found: trace.len(),
        });
    }
    let batch = trace.embedding.nrows();
    let mut grads = params.zeros_like();

    let mut g_z: Array2<T> = match grad {
        OutputGradient::Head(gy) => {
            check_grad_shape(gy, batch, cfg.output_dim)?;
            grads.head.weight = gy.t().dot(&trace.embedding);
            grads.head.bias = gy.sum_axis(Axis(0));
            gy.dot(&params.head.weight)
        }
        OutputGradient::Embedding(ge) => {
            check_grad_shape(ge, batch, cfg.embedding_dim)?;
            ge.to_owned()
        }
    };

    let omega = T::of(cfg.omega0);
    let factor = cfg.residual.factor().map(T::of);
    let mut carry: Option<Array2<T>> = None;
    for l in (0..cfg.depth).rev() {
        let lt = &trace.layers[l];
        let act = cfg.activation(l);
        let mut g_mixed = Zip::from(&lt.mixed)
            .and(&g_z)
            .map_collect(|&x, &g| act.derivative(omega, x) * g);
        if let Some(c) = carry.take() {
            g_mixed += &c;
        }
        let g_pre = match (cfg.mixes(l), factor) {
            (true, Some(r)) => {
                g_mixed *= r;
                carry = Some(g_mixed.clone());
                g_mixed
            }
            _ => g_mixed,
        };
        grads.layers[l].weight = g_pre.t().dot(&lt.input);
        grads.layers[l].bias = g_pre.sum_axis(Axis(0));
        if l > 0 {
            g_z = g_pre.dot(&params.layers[l].weight);
        }
    }
    Ok(grads)
}

fn check_grad_shape<T>(g: ArrayView2<T>, batch: usize, width: usize) -> Result<()> {
    if g.nrows() != batch {
        return Err(Error::Shape {
            context: "gradient batch",
            expected: batch,
            found: g.nrows(),
        });
    }
    if g.ncols() != width {
        return Err(Error::Shape {
            context: "gradient width",
            expected: width,
            found: g.ncols(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{forward, init_parameters, FirstLayer, Parameters, ResidualMode};
    use crate::rng::SplitMix64;

    fn tiny(depth: usize, residual: ResidualMode, first_layer: FirstLayer) -> NetworkConfig {
        NetworkConfig {
            depth,
            input_dim: 4,
            hidden_dim: 8,
            embedding_dim: 5,
            output_dim: 3,
            omega0: 30.0,
            residual,
            first_layer,
        }
    }

    fn setup(cfg: &NetworkConfig, seed: u64) -> (ParameterSet<f64>, Array2<f64>, Array2<f64>) {
        let mut p = init_parameters(cfg, seed).unwrap().cast::<f64>();
        let mut rng = SplitMix64::new(seed ^ 0xABCD);
        // Non-zero biases so their gradients are exercised off the init point.
        for t in p.tensors_mut() {
            if t.len() <= 8 {
                t.iter_mut().for_each(|v| *v = rng.uniform(-0.05, 0.05));
            }
        }
        let x = Array2::from_shape_simple_fn((6, 4), || rng.uniform(-1.0, 1.0));
        let y = Array2::from_shape_simple_fn((6, 3), || rng.uniform(-1.0, 1.0));
        (p, x, y)
    }

    fn loss(cfg: &NetworkConfig, p: &ParameterSet<f64>, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let out = forward(cfg, p, x.view(), false, true).unwrap().head.unwrap();
        (&out - y).mapv(|d| d * d).sum() / out.len() as f64
    }

    fn analytic(cfg: &NetworkConfig, p: &ParameterSet<f64>, x: &Array2<f64>, y: &Array2<f64>) -> ParameterSet<f64> {
        let out = forward(cfg, p, x.view(), true, true).unwrap();
        let head = out.head.as_ref().unwrap();
        let g = (head - y) * (2.0 / head.len() as f64);
        backward(cfg, p, out.trace.as_ref(), OutputGradient::Head(g.view())).unwrap()
    }

    #[test]
    fn matches_finite_differences_d3() {
        let h = 1e-5;
        for residual in [ResidualMode::Off, ResidualMode::PaperHalf, ResidualMode::SqrtTwo] {
            let cfg = tiny(3, residual, FirstLayer::HSiren);
            let (p, x, y) = setup(&cfg, 17);
            let g = analytic(&cfg, &p, &x, &y).flatten();
            let base = p.flatten();
            for (i, &gi) in g.iter().enumerate() {
                let mut plus = base.clone();
                plus[i] += h;
                let mut minus = base.clone();
                minus[i] -= h;
                let lp = loss(&cfg, &ParameterSet::from_flat(&cfg, &plus).unwrap(), &x, &y);
                let lm = loss(&cfg, &ParameterSet::from_flat(&cfg, &minus).unwrap(), &x, &y);
                let fd = (lp - lm) / (2.0 * h);
                let err = (fd - gi).abs();
                assert!(
                    err <= 1e-4 * fd.abs().max(gi.abs()) + 1e-9,
                    "param {i}: fd={fd} an={gi}"
                );
            }
        }
    }

    #[test]
    fn zero_and_linear_in_loss_gradient() {
        let cfg = tiny(5, ResidualMode::PaperHalf, FirstLayer::HSiren);
        let (p, x, y) = setup(&cfg, 3);
        let out = forward(&cfg, &p, x.view(), true, true).unwrap();
        let zero = Array2::<f64>::zeros((6, 3));
        let g0 = backward(&cfg, &p, out.trace.as_ref(), OutputGradient::Head(zero.view())).unwrap();
        assert!(g0.flatten().iter().all(|&v| v == 0.0));

        let g1 = analytic(&cfg, &p, &x, &y);
        let gy = (out.head.as_ref().unwrap() - &y) * (4.0 / 18.0);
        let g2 = backward(&cfg, &p, out.trace.as_ref(), OutputGradient::Head(gy.view())).unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn missing_trace() {
        let cfg = tiny(3, ResidualMode::Off, FirstLayer::Sine);
        let p = init_parameters(&cfg, 1).unwrap();
        let g = Array2::<f32>::zeros((1, 3));
        assert!(matches!(
            backward(&cfg, &p, None, OutputGradient::Head(g.view())),
            Err(Error::Missing(_))
        ));
    }
}
