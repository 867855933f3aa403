//! Line-delimited checkpoint files.
//!
//! The first line is a JSON header carrying the config, query mode,
//! category table and vocabulary; every following line is one tensor
//! `{name, shape, values}` in row-major order. Values are written as the
//! shortest decimal that parses back to the same number, so a
//! save/load/save cycle reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, ModelError, ModelParameters, QueryMode, RankingModel};
use crate::lexical::Vocabulary;
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT: &str = "distsum-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    config: EncoderConfig,
    query_mode: QueryMode,
    categories: Vec<String>,
    vocab: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorLine {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl<T: Scalar> RankingModel<T> {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dtype: T::DTYPE.into(),
            config: self.params.config.clone(),
            query_mode: self.query_mode,
            categories: self.categories.clone(),
            vocab: self.vocab.tokens().to_vec(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.write_all(b"\n")?;
        for (name, t) in self.params.store.iter() {
            let line = TensorLine {
                name: name.to_string(),
                shape: t.shape.clone(),
                values: t.data.iter().map(|v| v.to_f64_lossy()).collect(),
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| bad("empty checkpoint".into()))??;
        let header: Header = serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unexpected format {:?}", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", header.version)));
        }
        if header.dtype != T::DTYPE {
            tracing::info!(stored = %header.dtype, target = T::DTYPE, "converting checkpoint values");
        }
        let vocab = Vocabulary::from_token_list(header.vocab).map_err(|e| bad(e.to_string()))?;
        if vocab.len() != header.config.vocab_size {
            return Err(bad("vocabulary size does not match config".into()));
        }
        let mut store = ParamStore::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: TensorLine =
                serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(bad(format!("tensor {}: shape/value count mismatch", t.name)));
            }
            store.push(
                t.name,
                Tensor {
                    shape: t.shape,
                    data: t.values.into_iter().map(T::from_f64_lossy).collect(),
                },
            );
        }
        let params = ModelParameters::from_store(header.config, store)?;
        if params.n_categories() != header.categories.len() {
            return Err(bad("indicator rows do not match the category table".into()));
        }
        Ok(RankingModel {
            params,
            vocab,
            categories: header.categories,
            query_mode: header.query_mode,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Same model in another scalar type.
    pub fn cast<U: Scalar>(&self) -> RankingModel<U> {
        let store = self.params.store.cast::<U>();
        RankingModel {
            params: ModelParameters {
                config: self.params.config.clone(),
                store,
                encoder: self.params.encoder.clone(),
                head: self.params.head.clone(),
                indicator: self.params.indicator,
            },
            vocab: self.vocab.clone(),
            categories: self.categories.clone(),
            query_mode: self.query_mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{DiagnosisHierarchy, NodeSpec};
    use crate::lexical::VocabConfig;

    fn model() -> RankingModel<f32> {
        let h = DiagnosisHierarchy::from_specs(vec![
            NodeSpec::new("a", None, "alpha", &[]),
            NodeSpec::new("b", Some("a"), "beta", &["1"]),
        ])
        .unwrap();
        let vocab = Vocabulary::build(["alpha beta gamma"], VocabConfig::default());
        let mut cfg = EncoderConfig::new(vocab.len());
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.d_ff = 8;
        cfg.d_hidden = 4;
        cfg.n_layers = 1;
        RankingModel::new(cfg, vocab, &h, QueryMode::Hierarchy, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut a = Vec::new();
        m.write_to(&mut a).unwrap();
        let back = RankingModel::<f32>::read_from(&a[..]).unwrap();
        assert_eq!(back, m);
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_corrupt_files() {
        let m = model();
        let mut a = Vec::new();
        m.write_to(&mut a).unwrap();
        let text = String::from_utf8(a).unwrap();
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(RankingModel::<f32>::read_from(truncated.as_bytes()).is_err());
        let wrong = text.replacen(CHECKPOINT_FORMAT, "other", 1);
        assert!(RankingModel::<f32>::read_from(wrong.as_bytes()).is_err());
        assert!(RankingModel::<f32>::read_from(&b""[..]).is_err());
    }

    #[test]
    fn f64_load_of_f32_file_matches_values() {
        let m = model();
        let mut a = Vec::new();
        m.write_to(&mut a).unwrap();
        let wide = RankingModel::<f64>::read_from(&a[..]).unwrap();
        assert_eq!(wide.cast::<f32>(), m);
    }
}
