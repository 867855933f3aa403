//! Sentence splitting, tokenization, vocabulary and TF-IDF scoring.

mod sentences;
mod tfidf;
mod vocab;

use thiserror::Error;

use crate::scalar::Scalar;

pub use sentences::{fingerprint, split_sentences};
pub use tfidf::{cosine_sparse, tfidf_terms, SparseVector, TfidfModel};
pub use vocab::{word_pieces, VocabConfig, Vocabulary, CLS, PAD, SEP, UNK};

#[derive(Debug, Error)]
pub enum LexicalError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("malformed file: {0}")]
    Format(String),
}

/// `u·v / (‖u‖‖v‖)`, or 0 when either norm is 0.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> T {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different dimensions");
    let dot: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let nu: T = u.iter().map(|&a| a * a).sum::<T>().sqrt();
    let nv: T = v.iter().map(|&b| b * b).sum::<T>().sqrt();
    if nu == T::zero() || nv == T::zero() {
        return T::zero();
    }
    let c = dot / (nu * nv);
    c.max(-T::one()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_values() {
        assert!((cosine(&[1.0f64, 2.0], &[2.0, 1.0]) - 0.8).abs() < 1e-15);
        assert_eq!(cosine(&[1.0f64, 0.0], &[0.0, 3.0]), 0.0);
        assert!((cosine(&[0.3f64, -2.0, 5.0], &[0.3, -2.0, 5.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[0.0f32, 0.0], &[1.0, 1.0]), 0.0);
    }
}
