//! Small pre-LayerNorm transformer encoder with explicit backward passes.
//!
//! Every sentence (or query text) is encoded as its own sequence, so no
//! padding or masking is involved.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scalar::{sc, Scalar};
use crate::tensor::{
    add_bias, bias_grad_acc, matmul, matmul_a_bt_acc, matmul_at_b_acc, ParamId, ParamStore,
    Tensor,
};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Width of sentence and query embeddings.
    pub d_hidden: usize,
    pub max_tokens_per_sentence: usize,
    pub max_sentences_per_instance: usize,
}

impl EncoderConfig {
    pub fn new(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            d_ff: 512,
            d_hidden: 64,
            max_tokens_per_sentence: 64,
            max_sentences_per_instance: 256,
        }
    }

    /// Positions including the prepended [CLS].
    pub fn max_positions(&self) -> usize {
        self.max_tokens_per_sentence + 1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size < 4 {
            return bad("vocab_size must cover the special tokens");
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.d_ff == 0 || self.d_hidden == 0 {
            return bad("d_ff and d_hidden must be positive");
        }
        if self.max_tokens_per_sentence == 0 || self.max_sentences_per_instance == 0 {
            return bad("sequence caps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIds {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Handles to every tensor of the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderIds {
    pub token: ParamId,
    pub position: ParamId,
    pub layers: Vec<LayerIds>,
    pub lnf_g: ParamId,
    pub lnf_b: ParamId,
}

impl EncoderIds {
    pub fn register<T: Scalar, R: Rng>(
        cfg: &EncoderConfig,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Self {
        let d = cfg.d_model;
        let token = store.push("embed.token", Tensor::normal(&[cfg.vocab_size, d], 1.0, rng));
        let position = store.push(
            "embed.position",
            Tensor::normal(&[cfg.max_positions(), d], 0.1, rng),
        );
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let ones = Tensor::filled(&[d], T::one());
            layers.push(LayerIds {
                ln1_g: store.push(p("ln1.gamma"), ones.clone()),
                ln1_b: store.push(p("ln1.beta"), Tensor::zeros(&[d])),
                wq: store.push(p("attn.wq"), Tensor::fan_in(&[d, d], 1.0, rng)),
                bq: store.push(p("attn.bq"), Tensor::zeros(&[d])),
                wk: store.push(p("attn.wk"), Tensor::fan_in(&[d, d], 1.0, rng)),
                bk: store.push(p("attn.bk"), Tensor::zeros(&[d])),
                wv: store.push(p("attn.wv"), Tensor::fan_in(&[d, d], 1.0, rng)),
                bv: store.push(p("attn.bv"), Tensor::zeros(&[d])),
                wo: store.push(p("attn.wo"), Tensor::fan_in(&[d, d], 1.0, rng)),
                bo: store.push(p("attn.bo"), Tensor::zeros(&[d])),
                ln2_g: store.push(p("ln2.gamma"), ones),
                ln2_b: store.push(p("ln2.beta"), Tensor::zeros(&[d])),
                w1: store.push(p("ff.w1"), Tensor::fan_in(&[d, cfg.d_ff], 1.0, rng)),
                b1: store.push(p("ff.b1"), Tensor::zeros(&[cfg.d_ff])),
                w2: store.push(p("ff.w2"), Tensor::fan_in(&[cfg.d_ff, d], 1.0, rng)),
                b2: store.push(p("ff.b2"), Tensor::zeros(&[d])),
            });
        }
        let lnf_g = store.push("final_ln.gamma", Tensor::filled(&[d], T::one()));
        let lnf_b = store.push("final_ln.beta", Tensor::zeros(&[d]));
        EncoderIds {
            token,
            position,
            layers,
            lnf_g,
            lnf_b,
        }
    }

    pub fn locate<T: Scalar>(cfg: &EncoderConfig, store: &ParamStore<T>) -> Result<Self, ModelError> {
        let f = |name: String| {
            store
                .find(&name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))
        };
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerIds {
                ln1_g: f(p("ln1.gamma"))?,
                ln1_b: f(p("ln1.beta"))?,
                wq: f(p("attn.wq"))?,
                bq: f(p("attn.bq"))?,
                wk: f(p("attn.wk"))?,
                bk: f(p("attn.bk"))?,
                wv: f(p("attn.wv"))?,
                bv: f(p("attn.bv"))?,
                wo: f(p("attn.wo"))?,
                bo: f(p("attn.bo"))?,
                ln2_g: f(p("ln2.gamma"))?,
                ln2_b: f(p("ln2.beta"))?,
                w1: f(p("ff.w1"))?,
                b1: f(p("ff.b1"))?,
                w2: f(p("ff.w2"))?,
                b2: f(p("ff.b2"))?,
            });
        }
        Ok(EncoderIds {
            token: f("embed.token".into())?,
            position: f("embed.position".into())?,
            layers,
            lnf_g: f("final_ln.gamma".into())?,
            lnf_b: f("final_ln.beta".into())?,
        })
    }
}

#[derive(Debug, Clone)]
struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize) -> (Vec<T>, LnCache<T>) {
    let rows = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let n = T::from_count(d);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rs = T::one() / (var + sc(LN_EPS)).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    d: usize,
) {
    let rows = dy.len() / d;
    let n = T::from_count(d);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        let rs = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] += rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

const GELU_A: f64 = 0.044715;

fn gelu<T: Scalar>(x: T) -> T {
    let c: T = sc((2.0 / std::f64::consts::PI).sqrt());
    let half: T = sc(0.5);
    half * x * (T::one() + (c * (x + sc::<T>(GELU_A) * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c: T = sc((2.0 / std::f64::consts::PI).sqrt());
    let half: T = sc(0.5);
    let a: T = sc(GELU_A);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + sc::<T>(3.0) * a * x * x)
}

#[derive(Debug, Clone)]
struct LayerTrace<T> {
    ln1_out: Vec<T>,
    ln1: LnCache<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// heads × len × len
    probs: Vec<T>,
    ctx: Vec<T>,
    ln2_out: Vec<T>,
    ln2: LnCache<T>,
    ff_pre: Vec<T>,
    ff_act: Vec<T>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    pub tokens: Vec<u32>,
    layers: Vec<LayerTrace<T>>,
    lnf: LnCache<T>,
    /// Final hidden states, len × d_model.
    pub output: Vec<T>,
}

impl<T: Scalar> EncoderTrace<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize, d: usize) -> &[T] {
        &self.output[i * d..(i + 1) * d]
    }
}

/// Runs the encoder over a token sequence (already carrying [CLS] when
/// wanted), truncated to the positional table.
pub fn encoder_forward<T: Scalar>(
    cfg: &EncoderConfig,
    ids: &EncoderIds,
    p: &ParamStore<T>,
    tokens: &[u32],
) -> Result<EncoderTrace<T>, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let tokens: Vec<u32> = tokens.iter().take(cfg.max_positions()).copied().collect();
    let d = cfg.d_model;
    let len = tokens.len();
    let tok = p.get(ids.token);
    let pos = p.get(ids.position);
    let mut x = vec![T::zero(); len * d];
    for (i, &t) in tokens.iter().enumerate() {
        let t = t as usize;
        if t >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange(t as u32));
        }
        let row = &mut x[i * d..(i + 1) * d];
        for ((o, &e), &pe) in row.iter_mut().zip(tok.row(t)).zip(pos.row(i)) {
            *o = e + pe;
        }
    }

    let heads = cfg.n_heads;
    let dh = d / heads;
    let scale: T = T::one() / T::from_count(dh).sqrt();
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lid in &ids.layers {
        let (ln1_out, ln1) = layer_norm(&x, p.data(lid.ln1_g), p.data(lid.ln1_b), d);
        let proj = |w: ParamId, b: ParamId| {
            let mut out = vec![T::zero(); len * d];
            matmul(&ln1_out, p.data(w), len, d, d, &mut out);
            add_bias(&mut out, p.data(b));
            out
        };
        let q = proj(lid.wq, lid.bq);
        let k = proj(lid.wk, lid.bk);
        let v = proj(lid.wv, lid.bv);

        let mut probs = vec![T::zero(); heads * len * len];
        let mut ctx = vec![T::zero(); len * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..len {
                let prow = &mut probs[(h * len + i) * len..(h * len + i + 1) * len];
                let qi = &q[i * d + off..i * d + off + dh];
                for (j, pv) in prow.iter_mut().enumerate() {
                    let kj = &k[j * d + off..j * d + off + dh];
                    *pv = crate::tensor::dot(qi, kj) * scale;
                }
                crate::tensor::softmax_in_place(prow);
                let crow = &mut ctx[i * d + off..i * d + off + dh];
                for (j, &pij) in prow.iter().enumerate() {
                    let vj = &v[j * d + off..j * d + off + dh];
                    for (c, &vv) in crow.iter_mut().zip(vj) {
                        *c += pij * vv;
                    }
                }
            }
        }
        let mut attn_out = vec![T::zero(); len * d];
        matmul(&ctx, p.data(lid.wo), len, d, d, &mut attn_out);
        add_bias(&mut attn_out, p.data(lid.bo));
        for (xv, &a) in x.iter_mut().zip(&attn_out) {
            *xv += a;
        }

        let (ln2_out, ln2) = layer_norm(&x, p.data(lid.ln2_g), p.data(lid.ln2_b), d);
        let mut ff_pre = vec![T::zero(); len * cfg.d_ff];
        matmul(&ln2_out, p.data(lid.w1), len, d, cfg.d_ff, &mut ff_pre);
        add_bias(&mut ff_pre, p.data(lid.b1));
        let ff_act: Vec<T> = ff_pre.iter().map(|&v| gelu(v)).collect();
        let mut ff_out = vec![T::zero(); len * d];
        matmul(&ff_act, p.data(lid.w2), len, cfg.d_ff, d, &mut ff_out);
        add_bias(&mut ff_out, p.data(lid.b2));
        for (xv, &f) in x.iter_mut().zip(&ff_out) {
            *xv += f;
        }

        layers.push(LayerTrace {
            ln1_out,
            ln1,
            q,
            k,
            v,
            probs,
            ctx,
            ln2_out,
            ln2,
            ff_pre,
            ff_act,
        });
    }
    let (output, lnf) = layer_norm(&x, p.data(ids.lnf_g), p.data(ids.lnf_b), d);
    Ok(EncoderTrace {
        tokens,
        layers,
        lnf,
        output,
    })
}

/// Accumulates parameter gradients given `d_output` (len × d_model).
pub fn encoder_backward<T: Scalar>(
    cfg: &EncoderConfig,
    ids: &EncoderIds,
    p: &ParamStore<T>,
    trace: &EncoderTrace<T>,
    d_output: &[T],
    grads: &mut ParamStore<T>,
) {
    let d = cfg.d_model;
    let len = trace.tokens.len();
    let heads = cfg.n_heads;
    let dh = d / heads;
    let scale: T = T::one() / T::from_count(dh).sqrt();

    let mut dx = vec![T::zero(); len * d];
    {
        let (dg, db) = two_mut(grads, ids.lnf_g, ids.lnf_b);
        layer_norm_backward(d_output, &trace.lnf, p.data(ids.lnf_g), dg, db, &mut dx, d);
    }

    for (lid, lt) in ids.layers.iter().zip(&trace.layers).rev() {
        // feed-forward block: x_out = x_mid + W2·gelu(W1·ln2(x_mid))
        let d_ff_out = &dx;
        matmul_at_b_acc(&lt.ff_act, d_ff_out, len, cfg.d_ff, d, grads.data_mut(lid.w2));
        bias_grad_acc(d_ff_out, grads.data_mut(lid.b2));
        let mut d_act = vec![T::zero(); len * cfg.d_ff];
        matmul_a_bt_acc(d_ff_out, p.data(lid.w2), len, d, cfg.d_ff, &mut d_act);
        for (g, &pre) in d_act.iter_mut().zip(&lt.ff_pre) {
            *g *= gelu_grad(pre);
        }
        matmul_at_b_acc(&lt.ln2_out, &d_act, len, d, cfg.d_ff, grads.data_mut(lid.w1));
        bias_grad_acc(&d_act, grads.data_mut(lid.b1));
        let mut d_ln2 = vec![T::zero(); len * d];
        matmul_a_bt_acc(&d_act, p.data(lid.w1), len, cfg.d_ff, d, &mut d_ln2);
        let mut d_mid = dx.clone();
        {
            let (dg, db) = two_mut(grads, lid.ln2_g, lid.ln2_b);
            layer_norm_backward(&d_ln2, &lt.ln2, p.data(lid.ln2_g), dg, db, &mut d_mid, d);
        }

        // attention block: x_mid = x_in + Wo·attn(ln1(x_in))
        matmul_at_b_acc(&lt.ctx, &d_mid, len, d, d, grads.data_mut(lid.wo));
        bias_grad_acc(&d_mid, grads.data_mut(lid.bo));
        let mut d_ctx = vec![T::zero(); len * d];
        matmul_a_bt_acc(&d_mid, p.data(lid.wo), len, d, d, &mut d_ctx);

        let mut dq = vec![T::zero(); len * d];
        let mut dk = vec![T::zero(); len * d];
        let mut dv = vec![T::zero(); len * d];
        let mut dp = vec![T::zero(); len];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..len {
                let prow = &lt.probs[(h * len + i) * len..(h * len + i + 1) * len];
                let dci = &d_ctx[i * d + off..i * d + off + dh];
                let mut sum = T::zero();
                for j in 0..len {
                    let vj = &lt.v[j * d + off..j * d + off + dh];
                    dp[j] = crate::tensor::dot(dci, vj);
                    sum += dp[j] * prow[j];
                    let dvj = &mut dv[j * d + off..j * d + off + dh];
                    for (g, &c) in dvj.iter_mut().zip(dci) {
                        *g += prow[j] * c;
                    }
                }
                for j in 0..len {
                    let ds = prow[j] * (dp[j] - sum) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    for t in 0..dh {
                        dq[i * d + off + t] += ds * lt.k[j * d + off + t];
                        dk[j * d + off + t] += ds * lt.q[i * d + off + t];
                    }
                }
            }
        }
        let mut d_ln1 = vec![T::zero(); len * d];
        for (dy, w, b) in [(&dq, lid.wq, lid.bq), (&dk, lid.wk, lid.bk), (&dv, lid.wv, lid.bv)] {
            matmul_at_b_acc(&lt.ln1_out, dy, len, d, d, grads.data_mut(w));
            bias_grad_acc(dy, grads.data_mut(b));
            matmul_a_bt_acc(dy, p.data(w), len, d, d, &mut d_ln1);
        }
        let mut d_in = d_mid;
        {
            let (dg, db) = two_mut(grads, lid.ln1_g, lid.ln1_b);
            layer_norm_backward(&d_ln1, &lt.ln1, p.data(lid.ln1_g), dg, db, &mut d_in, d);
        }
        dx = d_in;
    }

    let dtok = grads.get_mut(ids.token);
    for (i, &t) in trace.tokens.iter().enumerate() {
        for (g, &v) in dtok.row_mut(t as usize).iter_mut().zip(&dx[i * d..(i + 1) * d]) {
            *g += v;
        }
    }
    let dpos = grads.get_mut(ids.position);
    for i in 0..len {
        for (g, &v) in dpos.row_mut(i).iter_mut().zip(&dx[i * d..(i + 1) * d]) {
            *g += v;
        }
    }
}

/// Mutable access to two distinct tensors of the store.
pub(crate) fn two_mut<T: Scalar>(s: &mut ParamStore<T>, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
    assert_ne!(a, b);
    let ts = s.tensors_mut();
    if a.0 < b.0 {
        let (lo, hi) = ts.split_at_mut(b.0);
        (&mut lo[a.0].data, &mut hi[0].data)
    } else {
        let (lo, hi) = ts.split_at_mut(a.0);
        (&mut hi[0].data, &mut lo[b.0].data)
    }
}
