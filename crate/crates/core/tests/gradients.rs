use distsum_core::hierarchy::{DiagnosisHierarchy, NodeSpec};
use distsum_core::lexical::{VocabConfig, Vocabulary};
use distsum_core::model::{EncoderConfig, QueryMode, RankingModel};
use distsum_core::training::{
    batch_loss, gradient_check, gradient_check_with, LossOptions, PreparedInstance, Preparer,
};
use distsum_core::TrainingInstance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn hierarchy() -> DiagnosisHierarchy {
    DiagnosisHierarchy::from_specs(vec![
        NodeSpec::new("neuro", None, "brain disorder", &[]),
        NodeSpec::new("stroke", Some("neuro"), "stroke infarct", &["434"]),
        NodeSpec::new("tumor", Some("neuro"), "brain tumor mass", &["191"]),
    ])
    .unwrap()
}

fn instance(sentences: &[&str], queries: &[(&str, u8)]) -> TrainingInstance {
    TrainingInstance {
        patient_id: "p".into(),
        t: 10,
        sentences: sentences
            .iter()
            .map(|s| distsum_core::extraction::InstanceSentence {
                text: s.to_string(),
                report_id: "r".into(),
                report_timestamp: 1,
            })
            .collect(),
        queries: queries.iter().map(|q| q.0.to_string()).collect(),
        labels: queries.iter().map(|q| q.1).collect(),
    }
}

/// Model with weights large enough to exercise every nonlinearity.
fn fixture(mode: QueryMode, layers: usize, seed: u64) -> (RankingModel<f64>, Vec<PreparedInstance>) {
    let h = hierarchy();
    let texts = ["acute infarct in left brain", "mass effect noted", "no acute findings"];
    let vocab = Vocabulary::build(
        texts.iter().copied().chain(["brain disorder stroke infarct tumor mass"]),
        VocabConfig::default(),
    );
    let mut cfg = EncoderConfig::new(vocab.len());
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 8;
    cfg.d_hidden = 4;
    cfg.n_layers = layers;
    let mut model = RankingModel::<f64>::new(cfg, vocab, &h, mode, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let dist = Normal::new(0.0, 0.5).unwrap();
    for t in model.params.store.tensors_mut() {
        for v in &mut t.data {
            *v += dist.sample(&mut rng);
        }
    }
    // Keep the hidden ReLU units active.
    let b1 = model.params.head.b1;
    model.params.store.data_mut(b1).iter_mut().for_each(|v| *v = 0.5);
    let insts = [
        instance(&texts, &[("stroke", 1), ("tumor", 0), ("neuro", 1)]),
        instance(&texts[1..], &[("tumor", 1), ("stroke", 0)]),
    ];
    let snapshot = model.clone();
    let mut prep = Preparer::new(&snapshot, &h);
    let batch = insts.iter().map(|i| prep.prepare_all(i).unwrap()).collect();
    (model, batch)
}

const OPTS: LossOptions = LossOptions {
    negative_weight: 1.5,
    probability_clamp: 1e-7,
};

#[test]
fn analytic_gradient_matches_finite_differences() {
    for mode in QueryMode::ALL {
        for layers in [1, 2] {
            let (m, batch) = fixture(mode, layers, 5 + layers as u64);
            let r = gradient_check(&m.params, &batch, OPTS, 1e-4).unwrap();
            assert!(
                r.max_relative_error < 1e-4,
                "{mode} x{layers}: {:?}",
                r.worst()
            );
        }
    }
}

#[test]
fn doubled_head_gradient_is_caught() {
    let (m, batch) = fixture(QueryMode::Description, 1, 3);
    let r = gradient_check_with(&m.params, &batch, OPTS, 1e-4, |p, g| {
        g.data_mut(p.head.u1).iter_mut().for_each(|v| *v *= 2.0);
    })
    .unwrap();
    assert!(r.max_relative_error > 1e-1, "{}", r.max_relative_error);
}

#[test]
fn batch_loss_ignores_instance_order() {
    let (m, mut batch) = fixture(QueryMode::Hierarchy, 1, 9);
    let a = batch_loss(&m.params, &batch, OPTS).unwrap();
    batch.reverse();
    let b = batch_loss(&m.params, &batch, OPTS).unwrap();
    assert!((a - b).abs() < 1e-12);
}

