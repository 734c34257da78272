use ndarray::{Array2, ArrayView2};

use super::{NetworkConfig, ParameterSet, Real};
use crate::error::{Error, Result};

/// Record of one layer: its input `z_j`, pre-activation `h_j` and the
/// residual-mixed pre-activation `h'_j` fed to the activation.
#[derive(Debug, Clone)]
pub struct LayerTrace<T> {
    pub input: Array2<T>,
    pub pre: Array2<T>,
    pub mixed: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub layers: Vec<LayerTrace<T>>,
    /// Output of the last layer, i.e. the embedding.
    pub embedding: Array2<T>,
}

impl<T> ForwardTrace<T> {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Post-activation `z_{j+1}` of layer `l` (0-based).
    pub fn output(&self, l: usize) -> &Array2<T> {
        match self.layers.get(l + 1) {
            Some(next) => &next.input,
            None => &self.embedding,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub embedding: Array2<T>,
    pub head: Option<Array2<T>>,
    pub trace: Option<ForwardTrace<T>>,
}

/// Runs the network on a batch of encodings (`[batch, input_dim]`).
pub fn forward<T: Real>(
    cfg: &NetworkConfig,
    params: &ParameterSet<T>,
    inputs: ArrayView2<T>,
    keep_trace: bool,
    with_head: bool,
) -> Result<ForwardOutput<T>> {
    let mut layers = keep_trace.then(|| Vec::with_capacity(cfg.depth));
    let embedding = run(cfg, params, inputs, layers.as_mut(), &mut |_, _| {})?;
    let head = if with_head {
        let y = params.head.apply(embedding.view());
        ensure_finite(&y, "head")?;
        Some(y)
    } else {
        None
    };
    let trace = layers.map(|layers| ForwardTrace {
        layers,
        embedding: embedding.clone(),
    });
    Ok(ForwardOutput { embedding, head, trace })
}

/// Forward pass that hands each layer's mixed pre-activation `h'_j` to
/// `observe(layer_index, h')` without retaining it. Returns the embedding.
pub fn forward_observed<T: Real>(
    cfg: &NetworkConfig,
    params: &ParameterSet<T>,
    inputs: ArrayView2<T>,
    mut observe: impl FnMut(usize, ArrayView2<T>),
) -> Result<Array2<T>> {
    run(cfg, params, inputs, None, &mut observe)
}

fn run<T: Real>(
    cfg: &NetworkConfig,
    params: &ParameterSet<T>,
    inputs: ArrayView2<T>,
    mut trace: Option<&mut Vec<LayerTrace<T>>>,
    observe: &mut dyn FnMut(usize, ArrayView2<T>),
) -> Result<Array2<T>> {
    cfg.validate()?;
    params.conforms(cfg)?;
    if inputs.ncols() != cfg.input_dim {
        return Err(Error::Shape {
            context: "encoding width",
            expected: cfg.input_dim,
            found: inputs.ncols(),
        });
    }
    let omega = T::of(cfg.omega0);
    let factor = cfg.residual.factor().map(T::of);
    let mut z = inputs.to_owned();
    let mut chain: Option<Array2<T>> = None;
    for (l, layer) in params.layers.iter().enumerate() {
        let pre = layer.apply(z.view());
        let mixed = match (cfg.mixes(l), &chain, factor) {
            (true, Some(prev), Some(r)) => (&pre + prev) * r,
            _ => pre.clone(),
        };
        observe(l, mixed.view());
        let act = cfg.activation(l);
        let out = mixed.mapv(|x| act.apply(omega, x));
        ensure_finite(&out, &format!("layer {}", l + 1))?;
        let keep_chain = l >= 1 && cfg.mixes(l + 1);
        match trace.as_deref_mut() {
            Some(t) => {
                if keep_chain {
                    chain = Some(mixed.clone());
                }
                t.push(LayerTrace {
                    input: std::mem::replace(&mut z, out),
                    pre,
                    mixed,
                });
            }
            None => {
                if keep_chain {
                    chain = Some(mixed);
                }
                z = out;
            }
        }
    }
    Ok(z)
}

fn ensure_finite<T: Real>(a: &Array2<T>, location: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            location: location.to_string(),
        })
    }
}
