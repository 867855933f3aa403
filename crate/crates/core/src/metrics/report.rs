//! Machine-readable metric reports and curve point files.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Curves, Prf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub subset: String,
    pub threshold_source: String,
    pub auroc: f64,
    pub avg_precision: f64,
    pub mean_ndcg: f64,
    pub k: usize,
    pub topk: Prf,
    pub validated_p: Option<f64>,
    pub n_queries: usize,
    pub n_sentences: usize,
}

fn num(v: f64) -> Value {
    // NaN (undefined metric) becomes null.
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

impl MetricsReport {
    /// Flat document with `p@k`, `r@k` and `f1@k` keys.
    pub fn to_json(&self) -> Value {
        let k = self.k;
        let mut m = Map::new();
        m.insert("model".into(), json!(self.model));
        m.insert("subset".into(), json!(self.subset));
        m.insert("threshold_source".into(), json!(self.threshold_source));
        m.insert("auroc".into(), num(self.auroc));
        m.insert("avg_precision".into(), num(self.avg_precision));
        m.insert("mean_ndcg".into(), num(self.mean_ndcg));
        m.insert(format!("p@{k}"), num(self.topk.precision));
        m.insert(format!("r@{k}"), num(self.topk.recall));
        m.insert(format!("f1@{k}"), num(self.topk.f1));
        m.insert("validated_p".into(), self.validated_p.map_or(Value::Null, num));
        m.insert("n_queries".into(), json!(self.n_queries));
        m.insert("n_sentences".into(), json!(self.n_sentences));
        Value::Object(m)
    }
}

/// Tab-separated `threshold tpr fpr precision recall`, one row per point.
pub fn write_curve_points<W: Write>(mut w: W, curves: &Curves) -> std::io::Result<()> {
    writeln!(w, "threshold\ttpr\tfpr\tprecision\trecall")?;
    for p in &curves.points {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", p.threshold, p.tpr, p.fpr, p.precision, p.recall)?;
    }
    Ok(())
}
