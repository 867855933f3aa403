//! Sentence attention and the code-prediction head.
//!
//! `S` is an `m × h` row-major matrix of sentence embeddings and `e` a query
//! embedding of width `h`.

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::{dot, softmax_in_place, ParamId, ParamStore, Tensor};


#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadIds {
    /// d_model × h projection applied to the [CLS] state.
    pub u0: ParamId,
    pub b0: ParamId,
    /// 2h × h, applied to `[context; query]`.
    pub u1: ParamId,
    pub b1: ParamId,
    /// h × 1
    pub u2: ParamId,
    pub b2: ParamId,
}

/// Per-entry std of sentence and query embeddings at initialization,
/// chosen so that `S·e` logits start with unit variance.
pub fn embedding_gain(h: usize) -> f64 {
    (h as f64).powf(-0.25)
}

impl HeadIds {
    pub fn register<T: Scalar, R: Rng>(
        d_model: usize,
        h: usize,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Self {
        HeadIds {
            u0: store.push("proj.u0", Tensor::fan_in(&[d_model, h], embedding_gain(h), rng)),
            b0: store.push("proj.b0", Tensor::zeros(&[h])),
            u1: store.push("head.u1", Tensor::fan_in(&[2 * h, h], 1.0, rng)),
            b1: store.push("head.b1", Tensor::zeros(&[h])),
            u2: store.push("head.u2", Tensor::fan_in(&[h, 1], 1.0, rng)),
            b2: store.push("head.b2", Tensor::zeros(&[1])),
        }
    }
}

/// Softmax of `S·e` over sentences, shifted by the max logit.
pub fn attend<T: Scalar>(s: &[T], e: &[T]) -> Vec<T> {
    let h = e.len();
    let mut a: Vec<T> = s.chunks(h).map(|row| dot(row, e)).collect();
    softmax_in_place(&mut a);
    a
}

/// Same as [`attend`] but from precomputed logits.
pub fn attend_logits<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut a = logits.to_vec();
    softmax_in_place(&mut a);
    a
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Intermediate values of one (instance, query) forward pass.
#[derive(Debug, Clone)]
pub struct PointerTrace<T> {
    pub attention: Vec<T>,
    pub context: Vec<T>,
    pre: Vec<T>,
    hidden: Vec<T>,
    pub logit: T,
    pub probability: T,
}

/// Attention followed by the two-layer head:
/// `σ(U₂ · ReLU(U₁ · [Σ aᵢSᵢ; e] + b₁) + b₂)`.
pub fn pointer_forward<T: Scalar>(
    s: &[T],
    e: &[T],
    p: &ParamStore<T>,
    ids: &HeadIds,
) -> PointerTrace<T> {
    let attention = attend(s, e);
    predict_with_attention(s, attention, e, p, ids)
}

/// Head forward for a given attention vector.
pub fn predict_with_attention<T: Scalar>(
    s: &[T],
    attention: Vec<T>,
    e: &[T],
    p: &ParamStore<T>,
    ids: &HeadIds,
) -> PointerTrace<T> {
    let h = e.len();
    let mut context = vec![T::zero(); h];
    for (row, &a) in s.chunks(h).zip(&attention) {
        for (c, &v) in context.iter_mut().zip(row) {
            *c += a * v;
        }
    }
    let u1 = p.data(ids.u1);
    let mut pre = p.data(ids.b1).to_vec();
    for (i, &z) in context.iter().chain(e.iter()).enumerate() {
        for (o, &w) in pre.iter_mut().zip(&u1[i * h..(i + 1) * h]) {
            *o += z * w;
        }
    }
    let hidden: Vec<T> = pre.iter().map(|&v| v.max(T::zero())).collect();
    let logit = dot(&hidden, p.data(ids.u2)) + p.data(ids.b2)[0];
    PointerTrace {
        attention,
        context,
        pre,
        hidden,
        logit,
        probability: sigmoid(logit),
    }
}

/// Public form of the head: probability for sentences `s`, attention `a`
/// and query `e`.
pub fn predict<T: Scalar>(s: &[T], a: &[T], e: &[T], p: &ParamStore<T>, ids: &HeadIds) -> T {
    predict_with_attention(s, a.to_vec(), e, p, ids).probability
}

/// Backpropagates `d_logit` into the head parameters, the sentence
/// embeddings (`ds`, m × h) and the query embedding (`de`).
#[allow(clippy::too_many_arguments)]
pub fn pointer_backward<T: Scalar>(
    trace: &PointerTrace<T>,
    s: &[T],
    e: &[T],
    d_logit: T,
    p: &ParamStore<T>,
    ids: &HeadIds,
    grads: &mut ParamStore<T>,
    ds: &mut [T],
    de: &mut [T],
) {
    let h = e.len();
    grads.data_mut(ids.b2)[0] += d_logit;
    {
        let du2 = grads.data_mut(ids.u2);
        for (g, &v) in du2.iter_mut().zip(&trace.hidden) {
            *g += d_logit * v;
        }
    }
    let u2 = p.data(ids.u2);
    let dpre: Vec<T> = trace
        .pre
        .iter()
        .zip(u2)
        .map(|(&pre, &w)| if pre > T::zero() { d_logit * w } else { T::zero() })
        .collect();
    {
        let db1 = grads.data_mut(ids.b1);
        for (g, &v) in db1.iter_mut().zip(&dpre) {
            *g += v;
        }
    }
    let u1 = p.data(ids.u1);
    let mut dz = vec![T::zero(); 2 * h];
    {
        let du1 = grads.data_mut(ids.u1);
        for (i, &z) in trace.context.iter().chain(e.iter()).enumerate() {
            let row = &mut du1[i * h..(i + 1) * h];
            for (g, &dp) in row.iter_mut().zip(&dpre) {
                *g += z * dp;
            }
            dz[i] = dot(&u1[i * h..(i + 1) * h], &dpre);
        }
    }
    let (dc, dq) = dz.split_at(h);
    for (g, &v) in de.iter_mut().zip(dq) {
        *g += v;
    }

    // context = Σ aᵢ Sᵢ ; aᵢ = softmax(Sᵢ·e)
    let a = &trace.attention;
    let da: Vec<T> = s.chunks(h).map(|row| dot(row, dc)).collect();
    let mean: T = a.iter().zip(&da).map(|(&ai, &di)| ai * di).sum();
    for (i, row) in s.chunks(h).enumerate() {
        let dl = a[i] * (da[i] - mean);
        let dsr = &mut ds[i * h..(i + 1) * h];
        for ((g, &c), &ev) in dsr.iter_mut().zip(dc).zip(e) {
            *g += a[i] * c + dl * ev;
        }
        for (g, &sv) in de.iter_mut().zip(row) {
            *g += dl * sv;
        }
    }
}
