//! Stacked sequence-to-sequence LSTM over time-major step tensors.

use crate::autodiff::Var;
use crate::error::Result;
use crate::tft::params::{BoundParams, ParamInit};

pub fn register_seq2seq(init: &mut ParamInit, name: &str, layers: usize, hidden: usize) {
    for side in ["enc", "dec"] {
        for layer in 0..layers {
            init.lstm_layer(&format!("{name}.{side}.l{layer}"), hidden, hidden);
        }
    }
}

/// One LSTM step. Gate order i, f, g, o.
fn lstm_step(
    bound: &BoundParams,
    name: &str,
    x: &Var,
    h: &Var,
    c: &Var,
    hidden: usize,
) -> Result<(Var, Var)> {
    let gates = x
        .matmul(&bound.var(&format!("{name}.wx")))?
        .add(&h.matmul(&bound.var(&format!("{name}.wh")))?)?
        .add(&bound.var(&format!("{name}.b")))?;
    let i = gates.slice(1, 0, hidden)?.sigmoid();
    let f = gates.slice(1, hidden, 2 * hidden)?.sigmoid();
    let g = gates.slice(1, 2 * hidden, 3 * hidden)?.tanh();
    let o = gates.slice(1, 3 * hidden, 4 * hidden)?.sigmoid();
    let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
    let h_next = o.mul(&c_next.tanh())?;
    Ok((h_next, c_next))
}

fn run_layer(
    bound: &BoundParams,
    name: &str,
    inputs: &[Var],
    h0: &Var,
    c0: &Var,
    hidden: usize,
) -> Result<(Vec<Var>, Var, Var)> {
    let mut h = h0.clone();
    let mut c = c0.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (hn, cn) = lstm_step(bound, name, x, &h, &c, hidden)?;
        h = hn;
        c = cn;
        outputs.push(h.clone());
    }
    Ok((outputs, h, c))
}

/// Runs the stacked encoder over `past` then continues with the stacked
/// decoder over `future`, seeding every encoder layer with the same
/// static-conditioned initial states. Returns the last layer's outputs for
/// all L+H steps, in time order.
pub fn seq2seq(
    bound: &BoundParams,
    name: &str,
    layers: usize,
    hidden: usize,
    past: &[Var],
    future: &[Var],
    h0: &Var,
    c0: &Var,
) -> Result<Vec<Var>> {
    let mut enc_inputs: Vec<Var> = past.to_vec();
    let mut finals: Vec<(Var, Var)> = Vec::with_capacity(layers);
    for layer in 0..layers {
        let (outputs, h, c) = run_layer(
            bound,
            &format!("{name}.enc.l{layer}"),
            &enc_inputs,
            h0,
            c0,
            hidden,
        )?;
        finals.push((h, c));
        enc_inputs = outputs;
    }
    let mut dec_inputs: Vec<Var> = future.to_vec();
    for layer in 0..layers {
        let (h, c) = &finals[layer];
        let (outputs, _, _) = run_layer(
            bound,
            &format!("{name}.dec.l{layer}"),
            &dec_inputs,
            h,
            c,
            hidden,
        )?;
        dec_inputs = outputs;
    }
    let mut all = enc_inputs;
    all.extend(dec_inputs);
    Ok(all)
}
