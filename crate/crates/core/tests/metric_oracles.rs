use std::collections::BTreeSet;

use distsum_core::metrics::{
    binary_curves, mean_ndcg, ndcg, retrieval_curves, topk_prf, RankedResult, ReferenceSource, ReferenceSummary,
    ResultKey, ThresholdSource,
};
use proptest::prelude::*;

/// One (instance, query) fixture: sentence texts (duplicates allowed),
/// raw scores and the indices of relevant texts.
#[derive(Debug, Clone)]
struct Fixture {
    texts: Vec<String>,
    scores: Vec<f64>,
    relevant: BTreeSet<String>,
}

fn fixture(max_len: usize) -> impl Strategy<Value = Fixture> {
    (1..=max_len).prop_flat_map(|m| {
        (
            proptest::collection::vec(0usize..30, m),
            proptest::collection::vec(0u8..8, m),
            proptest::collection::vec(any::<bool>(), 30),
        )
            .prop_map(|(ids, scores, rel)| {
                let texts: Vec<String> = ids.iter().map(|i| format!("s{i}")).collect();
                let relevant = ids.iter().filter(|&&i| rel[i]).map(|i| format!("s{i}")).collect();
                Fixture {
                    texts,
                    scores: scores.iter().map(|&s| s as f64 / 7.0).collect(),
                    relevant,
                }
            })
    })
}

/// Up to 4 queries with at most 50 sentences in total.
fn fixtures() -> impl Strategy<Value = Vec<Fixture>> {
    (1usize..=4).prop_flat_map(|q| proptest::collection::vec(fixture(50 / q), q))
}

struct Built {
    results: Vec<RankedResult>,
    refs: ReferenceSummary,
}

fn build(fx: &[Fixture]) -> Built {
    let mut refs = ReferenceSummary::new(ReferenceSource::Oracle);
    let mut results = Vec::new();
    for (i, f) in fx.iter().enumerate() {
        let key = ResultKey {
            patient_id: format!("p{i}"),
            time_point: 1,
            query_id: "q".into(),
        };
        refs.entries.insert(key.clone(), f.relevant.clone());
        results.push(RankedResult::from_scores(key, String::new(), Some(1), false, &f.texts, &f.scores).unwrap());
    }
    Built { results, refs }
}

/// Unique texts with their max score, in first-occurrence order.
fn unique(f: &Fixture) -> Vec<(String, f64, usize)> {
    let mut out: Vec<(String, f64, usize)> = Vec::new();
    for (i, (t, &s)) in f.texts.iter().zip(&f.scores).enumerate() {
        match out.iter_mut().find(|u| u.0 == *t) {
            Some(u) => u.1 = u.1.max(s),
            None => out.push((t.clone(), s, i)),
        }
    }
    out
}

fn examples(fx: &[Fixture], source: ThresholdSource) -> Vec<(f64, bool)> {
    let mut ex = Vec::new();
    for f in fx {
        let u = unique(f);
        for (t, s, _) in &u {
            let higher = u.iter().filter(|v| v.1 > *s).count();
            let score = match source {
                ThresholdSource::Percentile => 1.0 - higher as f64 / u.len() as f64,
                ThresholdSource::Attention => *s,
            };
            ex.push((score, f.relevant.contains(t)));
        }
    }
    ex
}

fn brute_auroc(ex: &[(f64, bool)]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for p in ex.iter().filter(|e| e.1) {
        for n in ex.iter().filter(|e| !e.1) {
            pairs += 1.0;
            num += if p.0 > n.0 {
                1.0
            } else if p.0 == n.0 {
                0.5
            } else {
                0.0
            };
        }
    }
    num / pairs
}

fn brute_ap(ex: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = ex.iter().filter(|e| e.1).map(|e| e.0).collect();
    pos.iter()
        .map(|&s| {
            let at = ex.iter().filter(|e| e.0 >= s);
            let (k, tp) = at.fold((0, 0), |(k, tp), e| (k + 1, tp + usize::from(e.1)));
            tp as f64 / k as f64
        })
        .sum::<f64>()
        / pos.len() as f64
}

/// Unique texts ordered by score descending, first position on ties.
fn brute_order(f: &Fixture) -> Vec<String> {
    let mut u = unique(f);
    u.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.2.cmp(&b.2)));
    u.into_iter().map(|x| x.0).collect()
}

fn brute_ndcg(order: &[String], rel: &BTreeSet<String>) -> f64 {
    let dcg: f64 = order
        .iter()
        .enumerate()
        .map(|(i, t)| if rel.contains(t) { 1.0 / ((i + 2) as f64).log2() } else { 0.0 })
        .sum();
    let idcg: f64 = (1..=rel.len()).map(|r| 1.0 / ((r + 1) as f64).log2()).sum();
    dcg / idcg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_brute_force(fx in fixtures(), k in 1usize..8) {
        let b = build(&fx);
        for source in [ThresholdSource::Percentile, ThresholdSource::Attention] {
            let ex = examples(&fx, source);
            let c = retrieval_curves(&b.results, &b.refs, source).unwrap();
            let pos = ex.iter().filter(|e| e.1).count();
            prop_assert_eq!(c.positives, pos);
            prop_assert_eq!(c.negatives, ex.len() - pos);

            let thresholds: BTreeSet<u64> = ex.iter().map(|e| e.0.to_bits()).collect();
            prop_assert_eq!(c.points.len(), thresholds.len() + 1);
            for p in &c.points[1..] {
                let tp = ex.iter().filter(|e| e.1 && e.0 >= p.threshold).count();
                let fp = ex.iter().filter(|e| !e.1 && e.0 >= p.threshold).count();
                prop_assert_eq!((p.tp, p.fp, p.tn, p.fn_), (tp, fp, ex.len() - pos - fp, pos - tp));
            }
            if pos > 0 && pos < ex.len() {
                prop_assert!((c.auroc - brute_auroc(&ex)).abs() < 1e-9);
            } else {
                prop_assert!(c.auroc.is_nan());
            }
            if pos > 0 {
                prop_assert!((c.average_precision - brute_ap(&ex)).abs() < 1e-9);
            }
        }

        let orders: Vec<Vec<String>> = fx.iter().map(brute_order).collect();
        for (r, o) in b.results.iter().zip(&orders) {
            let got: Vec<&str> = r.fingerprints().collect();
            prop_assert_eq!(got, o.iter().map(String::as_str).collect::<Vec<_>>());
        }

        let per: Vec<f64> = fx
            .iter()
            .zip(&orders)
            .filter(|(f, _)| !f.relevant.is_empty())
            .map(|(f, o)| brute_ndcg(o, &f.relevant))
            .collect();
        let m = mean_ndcg(&b.results, &b.refs).unwrap();
        if per.is_empty() {
            prop_assert!(m.is_nan());
        } else {
            prop_assert!((m - per.iter().sum::<f64>() / per.len() as f64).abs() < 1e-9);
        }

        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (f, o) in fx.iter().zip(&orders) {
            let top = &o[..k.min(o.len())];
            let hits = top.iter().filter(|t| f.relevant.contains(*t)).count();
            tp += hits;
            fp += top.len() - hits;
            fn_ += f.relevant.len() - hits;
        }
        let prf = topk_prf(&b.results, &b.refs, k).unwrap();
        prop_assert_eq!((prf.tp, prf.fp, prf.fn_), (tp, fp, fn_));
    }
}

#[test]
fn single_relevant_at_rank_two_of_three() {
    let rel: BTreeSet<String> = ["b".to_string()].into();
    let v = ndcg(&["a", "b", "c"], &rel);
    assert!((v - 0.6309).abs() < 5e-5, "{v}");
}

#[test]
fn perfect_ranking_has_unit_auroc() {
    let c = binary_curves(&[(0.9, true), (0.7, true), (0.4, false), (0.1, false)]);
    assert_eq!(c.auroc, 1.0);
    let fx = vec![Fixture {
        texts: vec!["r1".into(), "n1".into(), "r2".into(), "n2".into()],
        scores: vec![0.9, 0.2, 0.8, 0.1],
        relevant: ["r1".to_string(), "r2".to_string()].into(),
    }];
    let b = build(&fx);
    for source in [ThresholdSource::Percentile, ThresholdSource::Attention] {
        assert_eq!(retrieval_curves(&b.results, &b.refs, source).unwrap().auroc, 1.0);
    }
}
