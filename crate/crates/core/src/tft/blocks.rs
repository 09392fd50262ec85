//! Gated residual networks and variable selection, the model's building
//! blocks.

use std::cell::RefCell;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, Var};
use crate::error::Result;
use crate::tft::params::{BoundParams, ParamInit};

/// Dropout context threaded through the forward pass. Eval mode carries no
/// RNG and is the identity.
pub struct DropCtx<'a> {
    pub rate: f64,
    pub rng: Option<&'a RefCell<ChaCha8Rng>>,
}

impl<'a> DropCtx<'a> {
    pub fn eval() -> DropCtx<'static> {
        DropCtx { rate: 0.0, rng: None }
    }

    pub fn apply(&self, x: &Var) -> Result<Var> {
        match self.rng {
            Some(cell) if self.rate > 0.0 => x.dropout(self.rate, &mut cell.borrow_mut()),
            _ => Ok(x.clone()),
        }
    }
}

pub fn dense(bound: &BoundParams, name: &str, x: &Var, bias: bool) -> Result<Var> {
    let y = x.matmul(&bound.var(&format!("{name}.w")))?;
    if bias {
        y.add(&bound.var(&format!("{name}.b")))
    } else {
        Ok(y)
    }
}

/// Gated linear unit: dense to 2d, split, value * sigmoid(gate).
pub fn glu(bound: &BoundParams, name: &str, x: &Var, dim: usize) -> Result<Var> {
    let projected = dense(bound, name, x, true)?;
    let value = projected.slice(projected.value().ndim() - 1, 0, dim)?;
    let gate = projected
        .slice(projected.value().ndim() - 1, dim, 2 * dim)?
        .sigmoid();
    value.mul(&gate)
}

pub fn register_glu(init: &mut ParamInit, name: &str, dim: usize) {
    init.linear(name, dim, 2 * dim, true);
}

pub fn register_grn(
    init: &mut ParamInit,
    name: &str,
    in_dim: usize,
    dim: usize,
    with_context: bool,
) {
    init.linear(&format!("{name}.fc1"), in_dim, dim, true);
    if with_context {
        init.linear(&format!("{name}.ctx"), dim, dim, false);
    }
    init.linear(&format!("{name}.fc2"), dim, dim, true);
    register_glu(init, &format!("{name}.glu"), dim);
    if in_dim != dim {
        init.linear(&format!("{name}.skip"), in_dim, dim, true);
    }
    init.layer_norm(&format!("{name}.ln"), dim);
}

/// Gated residual network:
/// LayerNorm(skip(x) + GLU(dropout(fc2(ELU(fc1(x) + ctx(c)))))).
pub fn grn(
    bound: &BoundParams,
    name: &str,
    x: &Var,
    context: Option<&Var>,
    in_dim: usize,
    dim: usize,
    drop: &DropCtx,
) -> Result<Var> {
    let mut a = dense(bound, &format!("{name}.fc1"), x, true)?;
    if let Some(c) = context {
        a = a.add(&dense(bound, &format!("{name}.ctx"), c, false)?)?;
    }
    let a = a.elu();
    let a = dense(bound, &format!("{name}.fc2"), &a, true)?;
    let a = drop.apply(&a)?;
    let gated = glu(bound, &format!("{name}.glu"), &a, dim)?;
    let skip = if in_dim != dim {
        dense(bound, &format!("{name}.skip"), x, true)?
    } else {
        x.clone()
    };
    skip.add(&gated)?.layer_norm(
        &bound.var(&format!("{name}.ln.scale")),
        &bound.var(&format!("{name}.ln.shift")),
    )
}

pub fn register_vsn(
    init: &mut ParamInit,
    name: &str,
    var_count: usize,
    dim: usize,
    with_context: bool,
) {
    register_grn(init, &format!("{name}.flat"), var_count * dim, dim, with_context);
    init.linear(&format!("{name}.weight_proj"), dim, var_count, true);
    for v in 0..var_count {
        register_grn(init, &format!("{name}.var{v}"), dim, dim, false);
    }
}

/// Variable selection: softmax weights from a GRN over the flattened
/// embeddings, combined as the weighted sum of per-variable GRN outputs.
/// Returns (combined [rows, dim], weights [rows, var_count]).
pub fn vsn(
    bound: &BoundParams,
    name: &str,
    embeddings: &[Var],
    context: Option<&Var>,
    dim: usize,
    drop: &DropCtx,
) -> Result<(Var, Var)> {
    let var_count = embeddings.len();
    let flat = concat(embeddings, 1)?;
    let hidden = grn(
        bound,
        &format!("{name}.flat"),
        &flat,
        context,
        var_count * dim,
        dim,
        drop,
    )?;
    let weights = dense(bound, &format!("{name}.weight_proj"), &hidden, true)?.softmax()?;
    let mut combined: Option<Var> = None;
    for (v, emb) in embeddings.iter().enumerate() {
        let transformed = grn(bound, &format!("{name}.var{v}"), emb, None, dim, dim, drop)?;
        let weighted = transformed.mul(&weights.slice(1, v, v + 1)?)?;
        combined = Some(match combined {
            Some(acc) => acc.add(&weighted)?,
            None => weighted,
        });
    }
    Ok((combined.expect("var_count >= 1"), weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Graph, Tensor};
    use crate::tft::params::ParameterSet;
    use rand::SeedableRng;

    fn init_params(f: impl Fn(&mut ParamInit)) -> ParameterSet {
        let mut params = ParameterSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut init = ParamInit { params: &mut params, rng: &mut rng };
        f(&mut init);
        params
    }

    #[test]
    fn grn_with_zeroed_glu_reduces_to_layer_norm_of_skip() {
        let dim = 4;
        let mut params = init_params(|init| register_grn(init, "g", dim, dim, false));
        for (name, tensor) in params.entries_mut() {
            if name.starts_with("g.glu") {
                *tensor = Tensor::zeros(tensor.shape());
            }
        }
        let graph = Graph::new();
        let bound = BoundParams::bind(&graph, &params, false);
        let x = graph.constant(Tensor::from_fn(&[3, dim], |i| (i as f64) * 0.31 - 0.4));
        let out = grn(&bound, "g", &x, None, dim, dim, &DropCtx::eval()).unwrap();
        let expected = x
            .layer_norm(
                &bound.var("g.ln.scale"),
                &bound.var("g.ln.shift"),
            )
            .unwrap();
        assert_eq!(*out.value(), *expected.value());
    }

    #[test]
    fn grn_gradients_match_finite_differences() {
        let dim = 3;
        let params = init_params(|init| register_grn(init, "g", dim, dim, true));
        let x0 = Tensor::from_fn(&[2, dim], |i| (i as f64) * 0.17 - 0.2);
        let c0 = Tensor::from_fn(&[2, dim], |i| (i as f64) * -0.05 + 0.3);
        let names: Vec<Vec<usize>> = params.entries().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let mut points: Vec<Tensor> = params.entries().iter().map(|(_, t)| t.clone()).collect();
        points.push(x0);
        points.push(c0);
        let err = grad_check(
            |_, vars| {
                let n = names.len();
                let bound = BoundParams::from_vars(&params, &vars[..n])?;
                let out = grn(
                    &bound,
                    "g",
                    &vars[n],
                    Some(&vars[n + 1]),
                    dim,
                    dim,
                    &DropCtx::eval(),
                )?;
                out.mul(&out)?.mean_all()
            },
            &points,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "grn grad check error {err}");
    }

    #[test]
    fn grn_is_deterministic_in_eval_mode() {
        let dim = 5;
        let params = init_params(|init| register_grn(init, "g", dim, dim, false));
        let x0 = Tensor::from_fn(&[4, dim], |i| (i as f64).cos());
        let run = || {
            let graph = Graph::new();
            let bound = BoundParams::bind(&graph, &params, false);
            let x = graph.constant(x0.clone());
            grn(&bound, "g", &x, None, dim, dim, &DropCtx::eval())
                .unwrap()
                .detach()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn vsn_with_single_variable_selects_it_fully() {
        let dim = 4;
        let params = init_params(|init| register_vsn(init, "v", 1, dim, false));
        let graph = Graph::new();
        let bound = BoundParams::bind(&graph, &params, false);
        let e = graph.constant(Tensor::from_fn(&[3, dim], |i| i as f64 * 0.2));
        let (_, weights) = vsn(&bound, "v", &[e], None, dim, &DropCtx::eval()).unwrap();
        for &w in weights.value().data() {
            assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn vsn_weights_lie_on_the_simplex() {
        let dim = 4;
        let v = 5;
        let params = init_params(|init| register_vsn(init, "v", v, dim, false));
        let graph = Graph::new();
        let bound = BoundParams::bind(&graph, &params, false);
        let embeddings: Vec<Var> = (0..v)
            .map(|k| {
                graph.constant(Tensor::from_fn(&[7, dim], |i| ((i + k) as f64 * 0.713).sin()))
            })
            .collect();
        let (combined, weights) =
            vsn(&bound, "v", &embeddings, None, dim, &DropCtx::eval()).unwrap();
        assert_eq!(combined.shape(), vec![7, dim]);
        for row in weights.value().data().chunks(v) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }
}
