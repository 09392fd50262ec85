//! The temporal fusion forecaster: embeddings, variable selection, static
//! conditioning, seq2seq LSTM, static enrichment, interpretable attention,
//! position-wise processing, and quantile heads.

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, Graph, Tensor, Var};
use crate::config::ModelConfig;
use crate::dataset::{FeatureLayout, Sample};
use crate::error::{Error, Result};
use crate::tft::attention::{interpretable_mha, register_attention};
use crate::tft::blocks::{dense, glu, grn, register_glu, register_grn, register_vsn, vsn, DropCtx};
use crate::tft::lstm::{register_seq2seq, seq2seq};
use crate::tft::params::{BoundParams, ParamInit, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward batch in time-major layout: token row `t * batch + b`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub statics: Tensor,
    pub encoder: Tensor,
    pub decoder: Tensor,
    /// [H*batch, targets], normalized space.
    pub targets: Tensor,
    pub size: usize,
}

impl Batch {
    pub fn from_samples(samples: &[Sample]) -> Result<Batch> {
        let Some(first) = samples.first() else {
            return Err(Error::EmptyInput("batch of zero samples".into()));
        };
        let b = samples.len();
        let v_s = first.static_features.len();
        let l = first.encoder_inputs.len();
        let v_e = first.encoder_inputs[0].len();
        let h = first.decoder_known.len();
        let v_d = first.decoder_known[0].len();

        let mut statics = Vec::with_capacity(b * v_s);
        for s in samples {
            if s.static_features.len() != v_s
                || s.encoder_inputs.len() != l
                || s.decoder_known.len() != h
                || s.targets.len() != h
            {
                return Err(Error::invalid_argument(
                    "samples in one batch must share shapes",
                ));
            }
            statics.extend_from_slice(&s.static_features);
        }
        let mut encoder = Vec::with_capacity(l * b * v_e);
        for t in 0..l {
            for s in samples {
                encoder.extend_from_slice(&s.encoder_inputs[t]);
            }
        }
        let mut decoder = Vec::with_capacity(h * b * v_d);
        let mut targets = Vec::with_capacity(h * b * 2);
        for t in 0..h {
            for s in samples {
                decoder.extend_from_slice(&s.decoder_known[t]);
                targets.extend_from_slice(&s.targets[t]);
            }
        }
        Ok(Batch {
            statics: Tensor::new(vec![b, v_s], statics)?,
            encoder: Tensor::new(vec![l * b, v_e], encoder)?,
            decoder: Tensor::new(vec![h * b, v_d], decoder)?,
            targets: Tensor::new(vec![h * b, 2], targets)?,
            size: b,
        })
    }
}

/// Attention and variable-selection weights captured during a forward pass.
#[derive(Debug, Clone)]
pub struct InterpretabilityRecord {
    /// Per head: [batch, H, L+H].
    pub attention: Vec<Tensor>,
    /// [batch, V_static]
    pub static_weights: Tensor,
    /// [L, batch, V_encoder]
    pub encoder_weights: Tensor,
    /// [H, batch, V_decoder]
    pub decoder_weights: Tensor,
}

pub struct ForwardOutput {
    /// [H*batch, targets*quantiles]
    pub predictions: Var,
    pub record: InterpretabilityRecord,
    pub bound: BoundParams,
    pub batch_size: usize,
}

impl ForwardOutput {
    /// Detached predictions as [batch, H, targets, quantiles].
    pub fn predictions_array(&self, h: usize, targets: usize, quantiles: usize) -> Tensor {
        let flat = self.predictions.detach();
        let b = self.batch_size;
        flat.reshaped(&[h, b, targets * quantiles])
            .and_then(|t| t.swapped_axes01())
            .and_then(|t| t.reshaped(&[b, h, targets, quantiles]))
            .expect("prediction shape")
    }
}

/// Model geometry: configuration plus the input widths it was built for.
#[derive(Debug, Clone)]
pub struct TftModel {
    pub config: ModelConfig,
    pub encoder_steps: usize,
    pub horizon_steps: usize,
    pub static_vars: usize,
    pub encoder_vars: usize,
    pub decoder_vars: usize,
}

impl TftModel {
    pub fn new(
        config: &ModelConfig,
        encoder_steps: usize,
        horizon_steps: usize,
        layout: &FeatureLayout,
    ) -> Result<TftModel> {
        config.validate()?;
        if layout.static_names.is_empty()
            || layout.encoder_names.is_empty()
            || layout.decoder_names.is_empty()
        {
            return Err(Error::invalid_argument(
                "feature layout must name at least one variable per block",
            ));
        }
        Ok(TftModel {
            config: config.clone(),
            encoder_steps,
            horizon_steps,
            static_vars: layout.static_names.len(),
            encoder_vars: layout.encoder_names.len(),
            decoder_vars: layout.decoder_names.len(),
        })
    }

    /// Registers every learnable tensor with seeded initial values. The
    /// registration order is fixed by the configuration, making parameter
    /// shapes and counts reproducible.
    pub fn init_params(&self, seed: u64) -> ParameterSet {
        let d = self.config.hidden_size;
        let mut params = ParameterSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = ParamInit { params: &mut params, rng: &mut rng };

        for i in 0..self.static_vars {
            init.linear(&format!("embed.static{i}"), 1, d, true);
        }
        for i in 0..self.encoder_vars {
            init.linear(&format!("embed.encoder{i}"), 1, d, true);
        }
        for i in 0..self.decoder_vars {
            init.linear(&format!("embed.decoder{i}"), 1, d, true);
        }

        register_vsn(&mut init, "vsn.static", self.static_vars, d, false);
        for ctx in ["vs", "enrich", "cell", "hidden"] {
            register_grn(&mut init, &format!("ctx.{ctx}"), d, d, false);
        }
        register_vsn(&mut init, "vsn.encoder", self.encoder_vars, d, true);
        register_vsn(&mut init, "vsn.decoder", self.decoder_vars, d, true);

        register_seq2seq(&mut init, "lstm", self.config.lstm_layers, d);
        register_glu(&mut init, "gate.lstm.glu", d);
        init.layer_norm("gate.lstm.ln", d);

        register_grn(&mut init, "enrich", d, d, true);
        register_attention(&mut init, "attn", d, self.config.attention_heads);
        register_glu(&mut init, "gate.attn.glu", d);
        init.layer_norm("gate.attn.ln", d);

        register_grn(&mut init, "ffn", d, d, false);
        register_glu(&mut init, "gate.final.glu", d);
        init.layer_norm("gate.final.ln", d);

        init.linear(
            "head",
            d,
            self.config.output_targets * self.config.quantiles.len(),
            true,
        );
        params
    }

    pub fn forward(
        &self,
        params: &ParameterSet,
        batch: &Batch,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardOutput> {
        let graph = Graph::new();
        let bound = BoundParams::bind(&graph, params, mode == Mode::Train);
        self.forward_bound(&graph, bound, batch, mode, rng)
    }

    /// Forward pass over pre-bound parameters (lets finite-difference
    /// oracles own the leaves).
    pub fn forward_bound(
        &self,
        graph: &Graph,
        bound: BoundParams,
        batch: &Batch,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardOutput> {
        // dropout masks draw from a working copy of the caller's RNG; its
        // advanced state is handed back after the pass
        let rng_store: Option<RefCell<ChaCha8Rng>> = match (mode, rng.as_deref_mut()) {
            (Mode::Train, Some(r)) => Some(RefCell::new(r.clone())),
            (Mode::Train, None) => return Err(Error::MissingSeed),
            (Mode::Eval, _) => None,
        };
        let drop = DropCtx {
            rate: self.config.dropout_rate,
            rng: rng_store.as_ref(),
        };

        let b = batch.size;
        let d = self.config.hidden_size;
        let l = self.encoder_steps;
        let h = self.horizon_steps;
        if batch.statics.shape() != [b, self.static_vars]
            || batch.encoder.shape() != [l * b, self.encoder_vars]
            || batch.decoder.shape() != [h * b, self.decoder_vars]
        {
            return Err(Error::Shape {
                op: "forward".into(),
                lhs: batch.encoder.shape().to_vec(),
                rhs: vec![l * b, self.encoder_vars],
            });
        }

        let statics = graph.constant(batch.statics.clone());
        let encoder = graph.constant(batch.encoder.clone());
        let decoder = graph.constant(batch.decoder.clone());

        let embed = |x: &Var, prefix: &str, count: usize| -> Result<Vec<Var>> {
            (0..count)
                .map(|i| dense(&bound, &format!("{prefix}{i}"), &x.col(i)?, true))
                .collect()
        };

        // static covariate path
        let static_emb = embed(&statics, "embed.static", self.static_vars)?;
        let (static_combined, static_weights) =
            vsn(&bound, "vsn.static", &static_emb, None, d, &drop)?;
        let c_vs = grn(&bound, "ctx.vs", &static_combined, None, d, d, &drop)?;
        let c_enrich = grn(&bound, "ctx.enrich", &static_combined, None, d, d, &drop)?;
        let c_cell = grn(&bound, "ctx.cell", &static_combined, None, d, d, &drop)?;
        let c_hidden = grn(&bound, "ctx.hidden", &static_combined, None, d, d, &drop)?;

        // temporal variable selection, conditioned on the static context
        let enc_emb = embed(&encoder, "embed.encoder", self.encoder_vars)?;
        let (past_selected, encoder_weights) = vsn(
            &bound,
            "vsn.encoder",
            &enc_emb,
            Some(&c_vs.tile_rows(l)?),
            d,
            &drop,
        )?;
        let dec_emb = embed(&decoder, "embed.decoder", self.decoder_vars)?;
        let (future_selected, decoder_weights) = vsn(
            &bound,
            "vsn.decoder",
            &dec_emb,
            Some(&c_vs.tile_rows(h)?),
            d,
            &drop,
        )?;

        // sequence-to-sequence LSTM with static initial states
        let step = |x: &Var, t: usize| x.slice(0, t * b, (t + 1) * b);
        let past_steps: Vec<Var> = (0..l)
            .map(|t| step(&past_selected, t))
            .collect::<Result<_>>()?;
        let future_steps: Vec<Var> = (0..h)
            .map(|t| step(&future_selected, t))
            .collect::<Result<_>>()?;
        let lstm_steps = seq2seq(
            &bound,
            "lstm",
            self.config.lstm_layers,
            d,
            &past_steps,
            &future_steps,
            &c_hidden,
            &c_cell,
        )?;
        let lstm_out = concat(&lstm_steps, 0)?;
        let selected_all = concat(&[past_selected, future_selected], 0)?;
        let temporal = selected_all
            .add(&glu(&bound, "gate.lstm.glu", &drop.apply(&lstm_out)?, d)?)?
            .layer_norm(&bound.var("gate.lstm.ln.scale"), &bound.var("gate.lstm.ln.shift"))?;

        // static enrichment
        let enriched = grn(
            &bound,
            "enrich",
            &temporal,
            Some(&c_enrich.tile_rows(l + h)?),
            d,
            d,
            &drop,
        )?;

        // interpretable attention over the whole enriched sequence
        let (attended, attention) = interpretable_mha(
            &bound,
            "attn",
            &enriched,
            l,
            h,
            b,
            d,
            self.config.attention_heads,
        )?;
        let enriched_dec = enriched.slice(0, l * b, (l + h) * b)?;
        let attn_gated = enriched_dec
            .add(&glu(&bound, "gate.attn.glu", &drop.apply(&attended)?, d)?)?
            .layer_norm(&bound.var("gate.attn.ln.scale"), &bound.var("gate.attn.ln.shift"))?;

        // position-wise processing and the final skip back to the temporal
        // features
        let ffn = grn(&bound, "ffn", &attn_gated, None, d, d, &drop)?;
        let temporal_dec = temporal.slice(0, l * b, (l + h) * b)?;
        let fused = temporal_dec
            .add(&glu(&bound, "gate.final.glu", &drop.apply(&ffn)?, d)?)?
            .layer_norm(&bound.var("gate.final.ln.scale"), &bound.var("gate.final.ln.shift"))?;

        let predictions = dense(&bound, "head", &fused, true)?;

        // hand the advanced RNG state back to the caller
        if let (Some(store), Some(r)) = (rng_store, rng) {
            *r = store.into_inner();
        }

        let record = InterpretabilityRecord {
            attention,
            static_weights: static_weights.detach(),
            encoder_weights: encoder_weights
                .detach()
                .reshaped(&[l, b, self.encoder_vars])?,
            decoder_weights: decoder_weights
                .detach()
                .reshaped(&[h, b, self.decoder_vars])?,
        };
        Ok(ForwardOutput {
            predictions,
            record,
            bound,
            batch_size: b,
        })
    }
}
