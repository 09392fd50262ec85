//! Interpretable multi-head attention: per-head query/key projections over
//! one shared value projection, head-averaged attention, exported weights.

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::tft::params::{BoundParams, ParamInit};

pub fn register_attention(init: &mut ParamInit, name: &str, dim: usize, heads: usize) {
    let d_head = dim / heads;
    for h in 0..heads {
        init.linear(&format!("{name}.q{h}"), dim, d_head, false);
        init.linear(&format!("{name}.k{h}"), dim, d_head, false);
    }
    init.linear(&format!("{name}.v"), dim, d_head, false);
    init.linear(&format!("{name}.out"), d_head, dim, true);
}

/// Additive causal mask [h_steps, l_steps + h_steps]: decoder position t may
/// attend to every encoder step and decoder steps <= t; disallowed entries
/// are -inf.
pub fn causal_mask(l_steps: usize, h_steps: usize) -> Result<Tensor> {
    let total = l_steps + h_steps;
    let mut mask = Tensor::zeros(&[h_steps, total]);
    for t in 0..h_steps {
        let row = &mut mask.data_mut()[t * total..(t + 1) * total];
        for (j, slot) in row.iter_mut().enumerate() {
            if j > l_steps + t {
                *slot = f64::NEG_INFINITY;
            }
        }
        if row.iter().all(|v| v.is_infinite()) {
            return Err(Error::InvalidMask { row: t });
        }
    }
    Ok(mask)
}

fn tile_mask(mask: &Tensor, batch: usize) -> Tensor {
    let mut shape = vec![batch];
    shape.extend_from_slice(mask.shape());
    let mut data = Vec::with_capacity(mask.len() * batch);
    for _ in 0..batch {
        data.extend_from_slice(mask.data());
    }
    Tensor::new(shape, data).expect("shape")
}

/// Runs interpretable attention over time-major features.
///
/// `sequence` is [(L+H)*batch, dim]; queries come from the decoder rows.
/// Returns the attended decoder features [H*batch, dim] and the per-head
/// attention weights, each [batch, H, L+H].
pub fn interpretable_mha(
    bound: &BoundParams,
    name: &str,
    sequence: &Var,
    l_steps: usize,
    h_steps: usize,
    batch: usize,
    dim: usize,
    heads: usize,
) -> Result<(Var, Vec<Tensor>)> {
    let total = l_steps + h_steps;
    let d_head = dim / heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let decoder_rows = sequence.slice(0, l_steps * batch, total * batch)?;
    // [B, T, d_head] views of keys and shared values
    let to_batched = |x: &Var, steps: usize| -> Result<Var> {
        x.reshape(&[steps, batch, d_head])?.swap_axes01()
    };

    let values = to_batched(
        &sequence.matmul(&bound.var(&format!("{name}.v.w")))?,
        total,
    )?;
    let mask = tile_mask(&causal_mask(l_steps, h_steps)?, batch);

    let mut averaged: Option<Var> = None;
    let mut exported = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = to_batched(
            &decoder_rows.matmul(&bound.var(&format!("{name}.q{h}.w")))?,
            h_steps,
        )?;
        let k = to_batched(
            &sequence.matmul(&bound.var(&format!("{name}.k{h}.w")))?,
            total,
        )?;
        let scores = q
            .batched_matmul(&k.transpose_last2()?)?
            .scale(scale)
            .add_const(&mask)?;
        let attn = scores.softmax()?;
        exported.push(attn.detach());
        averaged = Some(match averaged {
            Some(acc) => acc.add(&attn)?,
            None => attn,
        });
    }
    let averaged = averaged.expect("heads >= 1").scale(1.0 / heads as f64);
    let attended = averaged
        .batched_matmul(&values)?
        .swap_axes01()?
        .reshape(&[h_steps * batch, d_head])?;
    let out = attended
        .matmul(&bound.var(&format!("{name}.out.w")))?
        .add(&bound.var(&format!("{name}.out.b")))?;
    Ok((out, exported))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::tft::params::ParameterSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn make_params(dim: usize, heads: usize) -> ParameterSet {
        let mut params = ParameterSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut init = crate::tft::params::ParamInit { params: &mut params, rng: &mut rng };
        register_attention(&mut init, "attn", dim, heads);
        params
    }

    #[test]
    fn mask_allows_self_and_encoder_only() {
        let mask = causal_mask(3, 2).unwrap();
        // row 0: positions 0..=3 allowed, position 4 masked
        assert_eq!(mask.data()[4], f64::NEG_INFINITY);
        assert_eq!(mask.data()[3], 0.0);
        // row 1: everything allowed
        assert!(mask.data()[5..10].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_rows_sum_to_one_and_respect_mask() {
        let (dim, heads, l, h, b) = (8, 2, 4, 3, 2);
        let params = make_params(dim, heads);
        let graph = Graph::new();
        let bound = BoundParams::bind(&graph, &params, false);
        let seq = graph.constant(Tensor::from_fn(&[(l + h) * b, dim], |i| {
            ((i * 31 % 17) as f64) * 0.21 - 1.0
        }));
        let (out, weights) =
            interpretable_mha(&bound, "attn", &seq, l, h, b, dim, heads).unwrap();
        assert_eq!(out.shape(), vec![h * b, dim]);
        for head in &weights {
            assert_eq!(head.shape(), &[b, h, l + h]);
            for bi in 0..b {
                for t in 0..h {
                    let row = &head.data()[(bi * h + t) * (l + h)..(bi * h + t + 1) * (l + h)];
                    let sum: f64 = row.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-9);
                    assert!(row.iter().all(|&w| w >= 0.0));
                    for (j, &w) in row.iter().enumerate() {
                        if j > l + t {
                            assert_eq!(w, 0.0, "masked position carries weight");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_logits_average_the_allowed_values() {
        // zero q/k projections give uniform attention over unmasked slots;
        // identity-like value path exposes the mean of values
        let (dim, heads, l, h, b) = (4, 1, 3, 2, 1);
        let mut params = make_params(dim, heads);
        for (name, t) in params.entries_mut() {
            match name.as_str() {
                "attn.q0.w" | "attn.k0.w" => *t = Tensor::zeros(t.shape()),
                "attn.v.w" => {
                    // d_head == dim for one head: identity
                    *t = Tensor::from_fn(t.shape(), |i| {
                        if i / dim == i % dim { 1.0 } else { 0.0 }
                    });
                }
                "attn.out.w" => {
                    *t = Tensor::from_fn(t.shape(), |i| {
                        if i / dim == i % dim { 1.0 } else { 0.0 }
                    });
                }
                "attn.out.b" => *t = Tensor::zeros(t.shape()),
                _ => {}
            }
        }
        let graph = Graph::new();
        let bound = BoundParams::bind(&graph, &params, false);
        let seq = graph.constant(Tensor::from_fn(&[(l + h) * b, dim], |i| i as f64));
        let (out, _) = interpretable_mha(&bound, "attn", &seq, l, h, b, dim, heads).unwrap();
        // decoder position 0 attends rows 0..=3 uniformly
        let seq_t = seq.value();
        for col in 0..dim {
            let mean: f64 = (0..4).map(|r| seq_t.data()[r * dim + col]).sum::<f64>() / 4.0;
            assert!((out.value().data()[col] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_masked_row_is_rejected() {
        let err = causal_mask(0, 0);
        assert!(err.is_ok() || err.is_err()); // degenerate shape: no rows
        // a genuinely fully-masked row cannot arise from this constructor;
        // force one through the helper to confirm detection
        let mut bad = Tensor::zeros(&[1, 2]);
        bad.data_mut()[0] = f64::NEG_INFINITY;
        bad.data_mut()[1] = f64::NEG_INFINITY;
        let graph = Graph::new();
        let x = graph.constant(Tensor::zeros(&[1, 2]));
        let masked = x.add_const(&bad).unwrap();
        assert!(masked.softmax().is_err());
    }
}
