//! Evaluation report: one JSON-lines record per clip plus a final aggregate
//! record, with a CSV mirror. Serialization is order-stable so reports are
//! byte-identical for identical runs; the optional wall time is only written
//! when timing was requested.

use crate::error::{EvalError, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub record: String, // "clip"
    pub clip_id: String,
    pub supervised: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_corrupted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_composed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_recovered: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim_recovered: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub record: String, // "aggregate"
    pub clips: usize,
    pub scored_clips: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_psnr_corrupted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_psnr_composed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_psnr_recovered: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ssim_recovered: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_mask_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_mask_f1: Option<f64>,
    pub config_hash: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub clips: Vec<ClipRecord>,
    pub aggregate: AggregateRecord,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

impl MetricsReport {
    /// Aggregates are arithmetic means over the scored (supervised) clips.
    pub fn from_clips(
        clips: Vec<ClipRecord>,
        config_hash: String,
        checkpoint_hash: String,
        seed: u64,
        wall_time_s: Option<f64>,
    ) -> Self {
        let collect = |f: &dyn Fn(&ClipRecord) -> Option<f64>| -> Vec<f64> {
            clips.iter().filter_map(f).collect()
        };
        let scored = clips.iter().filter(|c| c.supervised).count();
        let aggregate = AggregateRecord {
            record: "aggregate".into(),
            clips: clips.len(),
            scored_clips: scored,
            mean_psnr_corrupted: mean(&collect(&|c| c.psnr_corrupted)),
            mean_psnr_composed: mean(&collect(&|c| c.psnr_composed)),
            mean_psnr_recovered: mean(&collect(&|c| c.psnr_recovered)),
            mean_ssim_recovered: mean(&collect(&|c| c.ssim_recovered)),
            mean_mask_iou: mean(&collect(&|c| c.mask_iou)),
            mean_mask_f1: mean(&collect(&|c| c.mask_f1)),
            config_hash,
            checkpoint_hash,
            seed,
            wall_time_s,
        };
        MetricsReport { clips, aggregate }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.clips {
            out.push_str(&serde_json::to_string(c).expect("clip record serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.aggregate).expect("aggregate serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut clips = Vec::new();
        let mut aggregate = None;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| EvalError::Input(format!("bad report line: {e}")))?;
            match v.get("record").and_then(|r| r.as_str()) {
                Some("clip") => clips.push(
                    serde_json::from_value(v)
                        .map_err(|e| EvalError::Input(format!("bad clip record: {e}")))?,
                ),
                Some("aggregate") => {
                    aggregate = Some(
                        serde_json::from_value(v)
                            .map_err(|e| EvalError::Input(format!("bad aggregate: {e}")))?,
                    )
                }
                other => {
                    return Err(EvalError::Input(format!(
                        "unknown record kind {other:?}"
                    )))
                }
            }
        }
        Ok(MetricsReport {
            clips,
            aggregate: aggregate
                .ok_or_else(|| EvalError::Input("report missing aggregate record".into()))?,
        })
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "record,clip_id,supervised,psnr_corrupted,psnr_composed,psnr_recovered,ssim_recovered,mask_iou,mask_f1\n",
        );
        for c in &self.clips {
            out.push_str(&format!(
                "clip,{},{},{},{},{},{},{},{}\n",
                c.clip_id,
                c.supervised,
                fmt(c.psnr_corrupted),
                fmt(c.psnr_composed),
                fmt(c.psnr_recovered),
                fmt(c.ssim_recovered),
                fmt(c.mask_iou),
                fmt(c.mask_f1),
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "aggregate,{} clips ({} scored),,{},{},{},{},{},{}\n",
            a.clips,
            a.scored_clips,
            fmt(a.mean_psnr_corrupted),
            fmt(a.mean_psnr_composed),
            fmt(a.mean_psnr_recovered),
            fmt(a.mean_ssim_recovered),
            fmt(a.mean_mask_iou),
            fmt(a.mean_mask_f1),
        ));
        out
    }

    /// Write `report.jsonl` and the `report.csv` mirror.
    pub fn write(&self, path: &Path) -> Result<()> {
        let jsonl = self.to_jsonl();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(jsonl.as_bytes()))
            .map_err(|e| EvalError::io(path.display().to_string(), e))?;
        let csv_path = path.with_extension("csv");
        std::fs::File::create(&csv_path)
            .and_then(|mut f| f.write_all(self.to_csv().as_bytes()))
            .map_err(|e| EvalError::io(csv_path.display().to_string(), e))?;
        Ok(())
    }
}

/// Hex SHA-256 of a byte buffer (config and checkpoint identity in reports).
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
