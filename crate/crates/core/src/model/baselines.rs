//! Unsupervised similarity scorers used as baselines.

use super::{ModelError, ModelParameters};
use crate::lexical::{cosine, cosine_sparse, TfidfModel, Vocabulary};
use crate::scalar::Scalar;

/// Cosine between the TF-IDF vector of each sentence and the description.
/// Scores are not normalized across sentences.
pub fn tfidf_scores<S: AsRef<str>>(sentences: &[S], description: &str, model: &TfidfModel) -> Vec<f64> {
    let q = model.vector(description);
    sentences
        .iter()
        .map(|s| cosine_sparse(&model.vector(s.as_ref()), &q))
        .collect()
}

/// Cosine between mean-pooled encoder outputs of each sentence and of the
/// description. Sentences with no tokens score zero.
pub fn contextual_scores<T: Scalar, S: AsRef<str>>(
    sentences: &[S],
    description: &str,
    params: &ModelParameters<T>,
    vocab: &Vocabulary,
) -> Result<Vec<T>, ModelError> {
    let max = params.config.max_tokens_per_sentence;
    let q_tokens = vocab.tokenize(description, max);
    if q_tokens.is_empty() {
        return Err(ModelError::InvalidQuery("description has no tokens".into()));
    }
    let q = params.encode_mean(&q_tokens)?;
    sentences
        .iter()
        .map(|s| {
            let t = vocab.tokenize(s.as_ref(), max);
            if t.is_empty() {
                Ok(T::zero())
            } else {
                Ok(cosine(&params.encode_mean(&t)?, &q))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::VocabConfig;
    use crate::model::EncoderConfig;

    #[test]
    fn tfidf_self_and_disjoint() {
        let docs = ["acute ischemic stroke", "small vessel disease", "no acute findings"];
        let m = TfidfModel::fit(docs.iter().copied()).unwrap();
        let s = tfidf_scores(&["acute ischemic stroke", "small vessel disease"], "acute ischemic stroke", &m);
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn contextual_self_similarity() {
        let vocab = Vocabulary::build(["mass effect noted", "stable"], VocabConfig::default());
        let mut cfg = EncoderConfig::new(vocab.len());
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.d_ff = 8;
        cfg.d_hidden = 4;
        cfg.n_layers = 1;
        let p = ModelParameters::<f64>::init(cfg, 1, 9).unwrap();
        let s = contextual_scores(&["mass effect noted", ""], "mass effect noted", &p, &vocab).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
        assert!(contextual_scores(&["x"], "  ", &p, &vocab).is_err());
    }
}
