//! Runs models and baselines over instances to produce ranked results and
//! code predictions for the metrics module.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Day;
use crate::extraction::TrainingInstance;
use crate::hierarchy::DiagnosisHierarchy;
use crate::lexical::TfidfModel;
use crate::metrics::{
    mean_ndcg, retrieval_curves, subset_filter, topk_prf, Curves, MetricsError, MetricsReport, RankedResult,
    ReferenceSummary, ResultKey, Subset, SubsetContext, ThresholdSource,
};
use crate::model::{contextual_scores, tfidf_scores, ModelError, QuerySpec, RankingModel};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Something that scores an instance's sentences against a query.
pub enum Scorer<'a, T> {
    Tfidf(&'a TfidfModel),
    /// Mean-pooled encoder cosine using this model's encoder.
    Contextual(&'a RankingModel<T>),
    /// Attention of a trained model.
    Attention(&'a RankingModel<T>),
}

impl<T: Scalar> Scorer<'_, T> {
    pub fn name(&self) -> String {
        match self {
            Scorer::Tfidf(_) => "tfidf".into(),
            Scorer::Contextual(_) => "contextual".into(),
            Scorer::Attention(m) => m.query_mode.to_string(),
        }
    }

    /// Per-sentence scores for a category query (`category`) or a custom
    /// query whose text is `text`.
    pub fn score<S: AsRef<str> + Sync>(
        &self,
        sentences: &[S],
        category: Option<&str>,
        text: &str,
        hierarchy: &DiagnosisHierarchy,
    ) -> Result<Vec<f64>, ModelError> {
        match self {
            Scorer::Tfidf(m) => Ok(tfidf_scores(sentences, text, m)),
            Scorer::Contextual(m) => Ok(contextual_scores(sentences, text, &m.params, &m.vocab)?
                .into_iter()
                .map(Scalar::to_f64_lossy)
                .collect()),
            Scorer::Attention(m) => {
                let spec = match category {
                    Some(c) => m.query_mode.spec(c),
                    None => m.spec_for(None, Some(text))?,
                };
                let r = m.score_instance(sentences, &spec, hierarchy)?;
                Ok(r.scores.into_iter().map(Scalar::to_f64_lossy).collect())
            }
        }
    }
}

/// Query text used for TF-IDF and subset filters: the category
/// description, or the id itself when it is not a hierarchy category.
pub fn query_text(hierarchy: &DiagnosisHierarchy, query_id: &str, custom: &HashMap<String, String>) -> (String, Option<usize>, bool) {
    match hierarchy.get(query_id) {
        Some(n) => (n.description.clone(), Some(n.depth), false),
        None => (
            custom.get(query_id).cloned().unwrap_or_else(|| query_id.to_string()),
            None,
            true,
        ),
    }
}

/// Ranks every referenced (instance, query) pair whose instance is in
/// `instances`. Returns the results and the references restricted to them.
///
/// `custom` maps custom query names to their description text.
pub fn rank_references<T: Scalar>(
    scorer: &Scorer<'_, T>,
    instances: &[TrainingInstance],
    references: &ReferenceSummary,
    hierarchy: &DiagnosisHierarchy,
    custom: &HashMap<String, String>,
) -> Result<(Vec<RankedResult>, ReferenceSummary), EvaluationError> {
    let by_key: HashMap<(&str, Day), &TrainingInstance> =
        instances.iter().map(|i| ((i.patient_id.as_str(), i.t), i)).collect();
    let jobs: Vec<(&ResultKey, &TrainingInstance)> = references
        .entries
        .keys()
        .filter_map(|k| by_key.get(&(k.patient_id.as_str(), k.time_point)).map(|i| (k, *i)))
        .collect();
    let results: Result<Vec<RankedResult>, EvaluationError> = jobs
        .par_iter()
        .map(|(key, inst)| {
            let (text, depth, is_custom) = query_text(hierarchy, &key.query_id, custom);
            let sentences: Vec<&str> = inst.sentences.iter().map(|s| s.text.as_str()).collect();
            let category = (!is_custom).then_some(key.query_id.as_str());
            let scores = scorer.score(&sentences, category, &text, hierarchy)?;
            Ok(RankedResult::from_scores(
                (*key).clone(),
                text,
                depth,
                is_custom,
                &sentences,
                &scores,
            )?)
        })
        .collect();
    let results = results?;
    let mut kept = ReferenceSummary::new(references.source);
    for r in &results {
        kept.entries.insert(r.key.clone(), references.entries[&r.key].clone());
    }
    Ok((results, kept))
}

/// Predicted probabilities and labels over every (instance, query) pair.
pub fn code_predictions<T: Scalar>(
    model: &RankingModel<T>,
    instances: &[TrainingInstance],
    hierarchy: &DiagnosisHierarchy,
) -> Result<(Vec<f64>, Vec<bool>), ModelError> {
    let per: Result<Vec<Vec<(f64, bool)>>, ModelError> = instances
        .par_iter()
        .map(|inst| {
            let sentences: Vec<&str> = inst.sentences.iter().map(|s| s.text.as_str()).collect();
            inst.queries
                .iter()
                .zip(&inst.labels)
                .map(|(q, &y)| {
                    let spec: QuerySpec = model.query_mode.spec(q);
                    let r = model.score_instance(&sentences, &spec, hierarchy)?;
                    Ok((r.probability.map_or(f64::NAN, Scalar::to_f64_lossy), y == 1))
                })
                .collect()
        })
        .collect();
    Ok(per?.into_iter().flatten().unzip())
}

/// Computes a full [`MetricsReport`] for one model, subset and threshold
/// source.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    model: &str,
    results: &[RankedResult],
    references: &ReferenceSummary,
    subset: Subset,
    ctx: SubsetContext<'_>,
    source: ThresholdSource,
    k: usize,
    validated_p: Option<f64>,
) -> Result<(MetricsReport, Curves), MetricsError> {
    let (results, refs) = subset_filter(results, references, subset, ctx)?;
    let curves = retrieval_curves(&results, &refs, source)?;
    let report = MetricsReport {
        model: model.to_string(),
        subset: subset.to_string(),
        threshold_source: source.to_string(),
        auroc: curves.auroc,
        avg_precision: curves.average_precision,
        mean_ndcg: mean_ndcg(&results, &refs)?,
        k,
        topk: topk_prf(&results, &refs, k)?,
        validated_p,
        n_queries: results.len(),
        n_sentences: results.iter().map(|r| r.sentences.len()).sum(),
    };
    Ok((report, curves))
}
