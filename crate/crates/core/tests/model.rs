use distsum_core::hierarchy::NodeSpec;
use distsum_core::lexical::{VocabConfig, CLS};
use distsum_core::model::QuerySpec;
use distsum_core::{DiagnosisHierarchy, EncoderConfig, ModelF32, ModelF64, QueryMode, RankingModel, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn hierarchy() -> DiagnosisHierarchy {
    DiagnosisHierarchy::from_specs(vec![
        NodeSpec::new("neuro", None, "brain disorder", &[]),
        NodeSpec::new("stroke", Some("neuro"), "ischemic stroke infarct", &["434"]),
        NodeSpec::new("tumor", Some("neuro"), "brain tumor mass", &["191"]),
    ])
    .unwrap()
}

const TEXTS: [&str; 4] = [
    "acute infarct in the left territory.",
    "mass effect is noted.",
    "no acute findings.",
    "stable appearance of the brain.",
];

fn model(mode: QueryMode, layers: usize, seed: u64) -> ModelF64 {
    let vocab = Vocabulary::build(TEXTS.iter().copied().chain(["brain disorder stroke tumor"]), VocabConfig::default());
    let mut cfg = EncoderConfig::new(vocab.len());
    cfg.d_model = 12;
    cfg.n_heads = 3;
    cfg.d_ff = 10;
    cfg.d_hidden = 6;
    cfg.n_layers = layers;
    let mut m = RankingModel::<f64>::new(cfg, vocab, &hierarchy(), mode, seed).unwrap();
    // perturb biases and gammas away from their trivial init
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let noise = Normal::new(0.0, 0.3).unwrap();
    for t in m.params.store.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    m
}

// ---- naive reference implementation ------------------------------------

struct Naive<'a>(&'a ModelF64);

impl Naive<'_> {
    fn t(&self, name: &str) -> (&[f64], Vec<usize>) {
        let id = self.0.params.store.find(name).unwrap_or_else(|| panic!("{name}"));
        let t = self.0.params.store.get(id);
        (&t.data, t.shape.clone())
    }

    /// `x (n × k) · W (k × m) + b`
    fn affine(&self, x: &[Vec<f64>], w: &str, b: &str) -> Vec<Vec<f64>> {
        let (w, shape) = self.t(w);
        let (b, _) = self.t(b);
        let (k, m) = (shape[0], shape[1]);
        x.iter()
            .map(|row| (0..m).map(|j| b[j] + (0..k).map(|i| row[i] * w[i * m + j]).sum::<f64>()).collect())
            .collect()
    }

    fn ln(&self, x: &[Vec<f64>], g: &str, b: &str) -> Vec<Vec<f64>> {
        let (g, _) = self.t(g);
        let (b, _) = self.t(b);
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mu = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                row.iter().enumerate().map(|(j, v)| (v - mu) / (var + 1e-5).sqrt() * g[j] + b[j]).collect()
            })
            .collect()
    }

    fn encode_cls(&self, tokens: &[u32]) -> Vec<f64> {
        let cfg = self.0.config();
        let d = cfg.d_model;
        let (tok, _) = self.t("embed.token");
        let (pos, _) = self.t("embed.position");
        let seq: Vec<u32> = std::iter::once(CLS).chain(tokens.iter().copied()).collect();
        let mut x: Vec<Vec<f64>> = seq
            .iter()
            .enumerate()
            .map(|(i, &t)| (0..d).map(|j| tok[t as usize * d + j] + pos[i * d + j]).collect())
            .collect();
        let dh = d / cfg.n_heads;
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let a = self.ln(&x, &p("ln1.gamma"), &p("ln1.beta"));
            let q = self.affine(&a, &p("attn.wq"), &p("attn.bq"));
            let k = self.affine(&a, &p("attn.wk"), &p("attn.bk"));
            let v = self.affine(&a, &p("attn.wv"), &p("attn.bv"));
            let n = x.len();
            let mut ctx = vec![vec![0.0; d]; n];
            for h in 0..cfg.n_heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..n {
                    let logits: Vec<f64> = (0..n)
                        .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                        .collect();
                    let z: f64 = logits.iter().map(|l| l.exp()).sum();
                    for j in 0..n {
                        let w = logits[j].exp() / z;
                        for c in cols.clone() {
                            ctx[i][c] += w * v[j][c];
                        }
                    }
                }
            }
            let o = self.affine(&ctx, &p("attn.wo"), &p("attn.bo"));
            for (xr, orow) in x.iter_mut().zip(&o) {
                xr.iter_mut().zip(orow).for_each(|(a, b)| *a += b);
            }
            let b = self.ln(&x, &p("ln2.gamma"), &p("ln2.beta"));
            let f: Vec<Vec<f64>> = self
                .affine(&b, &p("ff.w1"), &p("ff.b1"))
                .into_iter()
                .map(|r| r.into_iter().map(gelu).collect())
                .collect();
            let f = self.affine(&f, &p("ff.w2"), &p("ff.b2"));
            for (xr, frow) in x.iter_mut().zip(&f) {
                xr.iter_mut().zip(frow).for_each(|(a, b)| *a += b);
            }
        }
        let out = self.ln(&x, "final_ln.gamma", "final_ln.beta");
        self.affine(&out[..1], "proj.u0", "proj.b0").remove(0)
    }

    fn probability(&self, s: &[Vec<f64>], e: &[f64]) -> (Vec<f64>, f64) {
        let logits: Vec<f64> = s.iter().map(|r| r.iter().zip(e).map(|(a, b)| a * b).sum()).collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        let a: Vec<f64> = logits.iter().map(|l| (l - mx).exp() / z).collect();
        let h = e.len();
        let c: Vec<f64> = (0..h).map(|j| s.iter().zip(&a).map(|(r, w)| w * r[j]).sum()).collect();
        let ce: Vec<f64> = c.iter().chain(e).copied().collect();
        let hid: Vec<f64> = self.affine(&[ce], "head.u1", "head.b1").remove(0).into_iter().map(|v| v.max(0.0)).collect();
        let logit = self.affine(&[hid], "head.u2", "head.b2")[0][0];
        (a, 1.0 / (1.0 + (-logit).exp()))
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

#[test]
fn encoder_matches_naive_reference() {
    for layers in [1, 2] {
        let m = model(QueryMode::Description, layers, layers as u64);
        let naive = Naive(&m);
        for text in TEXTS {
            let toks = m.sentence_tokens(text);
            let got = m.params.encode_cls(&toks[1..]).unwrap();
            let want = naive.encode_cls(&toks[1..]);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn scoring_matches_naive_reference() {
    let h = hierarchy();
    let m = model(QueryMode::Description, 1, 5);
    let naive = Naive(&m);
    let s: Vec<Vec<f64>> = TEXTS.iter().map(|t| naive.encode_cls(&m.sentence_tokens(t)[1..])).collect();
    let desc_tokens = m.sentence_tokens("ischemic stroke infarct");
    let e = naive.encode_cls(&desc_tokens[1..]);
    let (a, p) = naive.probability(&s, &e);
    let r = m.score_instance(&TEXTS, &m.query_mode.spec("stroke"), &h).unwrap();
    for (x, y) in r.scores.iter().zip(&a) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!((r.probability.unwrap() - p).abs() < 1e-10);
}

#[test]
fn single_sentence_gets_all_attention() {
    let h = hierarchy();
    for mode in [QueryMode::Indicator, QueryMode::Description, QueryMode::Hierarchy] {
        let m = model(mode, 1, 9);
        let r = m.score_instance(&["only sentence."], &mode.spec("tumor"), &h).unwrap();
        assert_eq!(r.scores, vec![1.0]);
    }
}

#[test]
fn indicator_model_rejects_free_text() {
    let h = hierarchy();
    let m = model(QueryMode::Indicator, 1, 2);
    assert!(m.spec_for(None, Some("brain")).is_err());
    let spec = QuerySpec::FreeText { text: "brain".into() };
    assert!(m.score_instance(&TEXTS, &spec, &h).is_err());
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [QueryMode::Indicator, QueryMode::Hierarchy] {
        let m = model(mode, 2, 4).cast::<f32>();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        m.save(&a).unwrap();
        let loaded = ModelF32::load(&a).unwrap();
        assert_eq!(loaded, m);
        loaded.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    let m = model(QueryMode::Description, 1, 4);
    let p = dir.path().join("f64.ckpt");
    m.save(&p).unwrap();
    assert_eq!(ModelF64::load(&p).unwrap(), m);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(QueryMode::Description, 1, 4);
    let p = dir.path().join("m.ckpt");
    m.save(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    let truncated = lines[..lines.len() - 1].join("\n");
    assert!(ModelF64::read_from(truncated.as_bytes()).is_err());
    let bad_header = text.replacen("distsum-checkpoint", "other", 1);
    assert!(ModelF64::read_from(bad_header.as_bytes()).is_err());
    assert!(ModelF64::read_from(&b""[..]).is_err());
}

#[test]
fn f32_and_f64_models_agree() {
    let h = hierarchy();
    let m = model(QueryMode::Hierarchy, 1, 6);
    let m32 = m.cast::<f32>();
    let spec = m.query_mode.spec("stroke");
    let a = m.score_instance(&TEXTS, &spec, &h).unwrap();
    let b = m32.score_instance(&TEXTS, &spec, &h).unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert!((x - *y as f64).abs() < 1e-4);
    }
}
