//! Transformer graph construction over the autodiff tape.
//!
//! Pre-norm encoder-decoder: embeddings + learned positions, multi-head
//! self-attention (causal on the decoder side), cross-attention from decoder
//! to encoder features, GELU feed-forward blocks, and a final layer norm on
//! each stack. The LM head maps decoder features to vocabulary logits; the
//! terminology classifier maps encoder features through one tanh hidden layer
//! to a scalar logit per position.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tape::{NodeId, ParamStore, Tape};
use super::tensor::Matrix;
use super::ModelConfig;

/// Additive mask value for disallowed attention targets. Large but finite so
/// softmax underflows to zero without producing NaNs in the backward pass.
const NEG_INF_MASK: f64 = -1e30;

/// Dropout context threaded through graph construction.
pub enum Dropout<'r> {
    Off,
    On { p: f64, rng: &'r mut ChaCha8Rng },
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Dropout::Off => x,
            Dropout::On { p, rng } => {
                if *p <= 0.0 {
                    return x;
                }
                let v = tape.value(x);
                let keep = 1.0 - *p;
                let data = (0..v.rows() * v.cols())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mask = Matrix::from_vec(v.rows(), v.cols(), data);
                tape.mul_mask(x, mask)
            }
        }
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    normal_matrix(rng, fan_in, fan_out, std)
}

fn insert_linear(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) {
    store.insert(format!("{name}.w"), xavier(rng, fan_in, fan_out));
    store.insert(format!("{name}.b"), Matrix::zeros(1, fan_out));
}

fn insert_layer_norm(store: &mut ParamStore, name: &str, dim: usize) {
    store.insert(format!("{name}.g"), {
        let mut m = Matrix::zeros(1, dim);
        m.fill(1.0);
        m
    });
    store.insert(format!("{name}.b"), Matrix::zeros(1, dim));
}

fn insert_attention(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d: usize) {
    for proj in ["wq", "wk", "wv", "wo"] {
        store.insert(format!("{prefix}.{proj}"), xavier(rng, d, d));
    }
    // No key bias: a constant shift of every key moves all scores in a
    // softmax row by the same amount and cancels exactly, so the parameter
    // would be inert.
    for bias in ["bq", "bv", "bo"] {
        store.insert(format!("{prefix}.{bias}"), Matrix::zeros(1, d));
    }
}

/// Create all trainable tensors for one model; insertion order is fixed and
/// shared between checkpoints, the optimizer, and gradient buffers.
pub fn init_params(config: &ModelConfig, vocab_size: usize, seed: u64) -> ParamStore {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let mut store = ParamStore::new();

    store.insert("embed.tok", normal_matrix(&mut rng, vocab_size, d, 0.02));
    store.insert(
        "embed.pos",
        normal_matrix(&mut rng, config.max_len, d, 0.02),
    );

    for i in 0..config.n_enc_layers {
        insert_attention(&mut store, &mut rng, &format!("enc{i}.attn"), d);
        insert_layer_norm(&mut store, &format!("enc{i}.ln1"), d);
        insert_linear(
            &mut store,
            &mut rng,
            &format!("enc{i}.ffn.fc1"),
            d,
            config.ffn_dim,
        );
        insert_linear(
            &mut store,
            &mut rng,
            &format!("enc{i}.ffn.fc2"),
            config.ffn_dim,
            d,
        );
        insert_layer_norm(&mut store, &format!("enc{i}.ln2"), d);
    }
    insert_layer_norm(&mut store, "enc.lnf", d);

    for i in 0..config.n_dec_layers {
        insert_attention(&mut store, &mut rng, &format!("dec{i}.self"), d);
        insert_layer_norm(&mut store, &format!("dec{i}.ln1"), d);
        insert_attention(&mut store, &mut rng, &format!("dec{i}.cross"), d);
        insert_layer_norm(&mut store, &format!("dec{i}.ln2"), d);
        insert_linear(
            &mut store,
            &mut rng,
            &format!("dec{i}.ffn.fc1"),
            d,
            config.ffn_dim,
        );
        insert_linear(
            &mut store,
            &mut rng,
            &format!("dec{i}.ffn.fc2"),
            config.ffn_dim,
            d,
        );
        insert_layer_norm(&mut store, &format!("dec{i}.ln3"), d);
    }
    insert_layer_norm(&mut store, "dec.lnf", d);

    insert_linear(&mut store, &mut rng, "lm", d, vocab_size);
    insert_linear(&mut store, &mut rng, "cls.fc1", d, d);
    insert_linear(&mut store, &mut rng, "cls.fc2", d, 1);

    store
}

fn layer_norm_by_name(tape: &mut Tape, x: NodeId, name: &str) -> NodeId {
    let g = tape.param_by_name(&format!("{name}.g"));
    let b = tape.param_by_name(&format!("{name}.b"));
    tape.layer_norm(x, g, b)
}

fn linear_by_name(tape: &mut Tape, x: NodeId, name: &str) -> NodeId {
    let w = tape.param_by_name(&format!("{name}.w"));
    let b = tape.param_by_name(&format!("{name}.b"));
    let h = tape.matmul(x, w);
    tape.add_row(h, b)
}

/// Multi-head scaled dot-product attention.
fn attention(
    tape: &mut Tape,
    config: &ModelConfig,
    query_x: NodeId,
    kv_x: NodeId,
    prefix: &str,
    causal: bool,
) -> NodeId {
    let project = |tape: &mut Tape, x: NodeId, w: &str, b: &str| {
        let w = tape.param_by_name(&format!("{prefix}.{w}"));
        let b = tape.param_by_name(&format!("{prefix}.{b}"));
        let h = tape.matmul(x, w);
        tape.add_row(h, b)
    };
    let q = project(tape, query_x, "wq", "bq");
    let k = {
        let w = tape.param_by_name(&format!("{prefix}.wk"));
        tape.matmul(kv_x, w)
    };
    let v = project(tape, kv_x, "wv", "bv");

    let head_dim = config.d_model / config.n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let n_q = tape.value(q).rows();
    let n_kv = tape.value(k).rows();

    let mask = causal.then(|| {
        let mut m = Matrix::zeros(n_q, n_kv);
        for i in 0..n_q {
            for j in 0..n_kv {
                if j > i {
                    m.set(i, j, NEG_INF_MASK);
                }
            }
        }
        m
    });

    let mut heads = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let start = h * head_dim;
        let qh = tape.slice_cols(q, start, head_dim);
        let kh = tape.slice_cols(k, start, head_dim);
        let vh = tape.slice_cols(v, start, head_dim);
        let mut scores = tape.matmul_nt(qh, kh);
        scores = tape.scale(scores, scale);
        if let Some(m) = &mask {
            let m_node = tape.constant(m.clone());
            scores = tape.add(scores, m_node);
        }
        let probs = tape.softmax_rows(scores);
        heads.push(tape.matmul(probs, vh));
    }
    let merged = tape.concat_cols(&heads);
    let wo = tape.param_by_name(&format!("{prefix}.wo"));
    let bo = tape.param_by_name(&format!("{prefix}.bo"));
    let out = tape.matmul(merged, wo);
    tape.add_row(out, bo)
}

fn feed_forward(tape: &mut Tape, x: NodeId, prefix: &str) -> NodeId {
    let h = linear_by_name(tape, x, &format!("{prefix}.fc1"));
    let h = tape.gelu(h);
    linear_by_name(tape, h, &format!("{prefix}.fc2"))
}

fn embed_with_positions(tape: &mut Tape, ids: &[u32], dropout: &mut Dropout) -> NodeId {
    let tok = tape.embed_by_name("embed.tok", ids);
    let pos_table = tape.param_by_name("embed.pos");
    let pos = tape.slice_rows(pos_table, ids.len());
    let x = tape.add(tok, pos);
    dropout.apply(tape, x)
}

/// Encoder stack: source ids to features F, one row per source position.
pub fn encoder_graph(
    tape: &mut Tape,
    config: &ModelConfig,
    src_ids: &[u32],
    dropout: &mut Dropout,
) -> NodeId {
    let mut x = embed_with_positions(tape, src_ids, dropout);
    for i in 0..config.n_enc_layers {
        let normed = layer_norm_by_name(tape, x, &format!("enc{i}.ln1"));
        let attended = attention(tape, config, normed, normed, &format!("enc{i}.attn"), false);
        let attended = dropout.apply(tape, attended);
        x = tape.add(x, attended);

        let normed = layer_norm_by_name(tape, x, &format!("enc{i}.ln2"));
        let ff = feed_forward(tape, normed, &format!("enc{i}.ffn"));
        let ff = dropout.apply(tape, ff);
        x = tape.add(x, ff);
    }
    layer_norm_by_name(tape, x, "enc.lnf")
}

/// Decoder stack over consumed target ids, attending to encoder features.
pub fn decoder_graph(
    tape: &mut Tape,
    config: &ModelConfig,
    tgt_in_ids: &[u32],
    encoder_features: NodeId,
    dropout: &mut Dropout,
) -> NodeId {
    let mut x = embed_with_positions(tape, tgt_in_ids, dropout);
    for i in 0..config.n_dec_layers {
        let normed = layer_norm_by_name(tape, x, &format!("dec{i}.ln1"));
        let attended = attention(tape, config, normed, normed, &format!("dec{i}.self"), true);
        let attended = dropout.apply(tape, attended);
        x = tape.add(x, attended);

        let normed = layer_norm_by_name(tape, x, &format!("dec{i}.ln2"));
        let crossed = attention(
            tape,
            config,
            normed,
            encoder_features,
            &format!("dec{i}.cross"),
            false,
        );
        let crossed = dropout.apply(tape, crossed);
        x = tape.add(x, crossed);

        let normed = layer_norm_by_name(tape, x, &format!("dec{i}.ln3"));
        let ff = feed_forward(tape, normed, &format!("dec{i}.ffn"));
        let ff = dropout.apply(tape, ff);
        x = tape.add(x, ff);
    }
    layer_norm_by_name(tape, x, "dec.lnf")
}

/// Vocabulary logits from decoder features: W O_t + b per row.
pub fn lm_logits_graph(tape: &mut Tape, decoder_features: NodeId) -> NodeId {
    linear_by_name(tape, decoder_features, "lm")
}

/// Per-position terminology logit from encoder features.
pub fn classifier_graph(tape: &mut Tape, encoder_features: NodeId) -> NodeId {
    let h = linear_by_name(tape, encoder_features, "cls.fc1");
    let h = tape.tanh(h);
    linear_by_name(tape, h, "cls.fc2")
}
