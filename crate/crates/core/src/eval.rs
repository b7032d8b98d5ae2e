//! Error metrics, evaluation protocols and reports.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::grid::{LabelMap, Trimap};
use crate::robot::{run_robot, PolicyKind, Robot};
use crate::segment::{start_session, Segmenter, SegmenterConfig};

/// Default cap `c` of the sigmoid transfer.
pub const TRANSFER_CAP: f64 = 5.0;

/// Percentage of pixels where `seg` and `gt` differ.
pub fn hamming_error(seg: &LabelMap, gt: &LabelMap) -> Result<f64> {
    seg.ensure_same_shape(gt, "segmentation vs ground truth")?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * seg.hamming(gt) as f64 / gt.len() as f64)
}

/// `0` for `er ≤ 1.5`, otherwise `c - c / (er - 0.5)²`.
pub fn transfer(er: f64, c: f64) -> f64 {
    if er <= 1.5 {
        0.0
    } else {
        c - c / ((er - 0.5) * (er - 0.5))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    Identity,
    Sigmoid,
}

impl Transfer {
    pub fn apply(self, er: f64) -> f64 {
        match self {
            Transfer::Identity => er,
            Transfer::Sigmoid => transfer(er, TRANSFER_CAP),
        }
    }
}

/// Mean of `f(er_b)` over the first `b` entries of a post-stroke error curve.
pub fn aggregate_er(curve: &[f64], b: usize, f: Transfer) -> Result<f64> {
    if b == 0 || curve.len() < b {
        return Err(Error::InvalidInput(format!(
            "need {b} ≥ 1 curve entries, have {}",
            curve.len()
        )));
    }
    Ok(curve[..b].iter().map(|&e| f.apply(e)).sum::<f64>() / b as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One segmentation from the tight trimap.
    StaticTrimap,
    /// One segmentation from the static brush strokes.
    StaticBrush,
    /// Robot strokes starting from the static brush strokes.
    DynamicBrush,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::StaticTrimap => "static-trimap",
            Protocol::StaticBrush => "static-brush",
            Protocol::DynamicBrush => "dynamic-brush",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static-trimap" | "trimap" => Ok(Protocol::StaticTrimap),
            "static-brush" | "brush" => Ok(Protocol::StaticBrush),
            "dynamic-brush" | "dynamic" => Ok(Protocol::DynamicBrush),
            _ => Err(Error::InvalidInput(format!("unknown protocol {s:?}"))),
        }
    }
}

/// What to run on every image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub protocol: Protocol,
    /// Stroke budget B (dynamic protocol only).
    pub budget: usize,
    pub policy: Option<PolicyKind>,
}

impl EvalSpec {
    pub fn static_trimap() -> Self {
        Self {
            protocol: Protocol::StaticTrimap,
            budget: 0,
            policy: None,
        }
    }

    pub fn static_brush() -> Self {
        Self {
            protocol: Protocol::StaticBrush,
            budget: 0,
            policy: None,
        }
    }

    pub fn dynamic(budget: usize, policy: PolicyKind) -> Self {
        Self {
            protocol: Protocol::DynamicBrush,
            budget,
            policy: Some(policy),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    /// `er_0 ..= er_B` for the dynamic protocol, a single entry otherwise.
    pub curve: Vec<f64>,
    pub er_sigmoid: f64,
    pub er_identity: f64,
    pub final_er: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image: String,
    pub scores: Option<ImageScores>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; `None` for no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub evaluated: usize,
    pub failed: usize,
    pub er_sigmoid: Option<MeanStd>,
    pub er_identity: Option<MeanStd>,
    /// `f(er_b)` per `b` under the sigmoid transfer.
    pub per_brush_sigmoid: Vec<MeanStd>,
    pub per_brush_identity: Vec<MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub budget: usize,
    pub images: Vec<ImageResult>,
    pub summary: Summary,
}

impl EvalReport {
    pub fn from_images(spec: &EvalSpec, images: Vec<ImageResult>) -> Self {
        let ok: Vec<&ImageScores> = images.iter().filter_map(|r| r.scores.as_ref()).collect();
        let col = |f: &dyn Fn(&ImageScores) -> f64| ok.iter().map(|s| f(s)).collect::<Vec<_>>();
        let len = ok.iter().map(|s| s.curve.len()).min().unwrap_or(0);
        let per_b = |t: Transfer| {
            (0..len)
                .filter_map(|b| MeanStd::of(&col(&|s| t.apply(s.curve[b]))))
                .collect()
        };
        let summary = Summary {
            evaluated: ok.len(),
            failed: images.len() - ok.len(),
            er_sigmoid: MeanStd::of(&col(&|s| s.er_sigmoid)),
            er_identity: MeanStd::of(&col(&|s| s.er_identity)),
            per_brush_sigmoid: per_b(Transfer::Sigmoid),
            per_brush_identity: per_b(Transfer::Identity),
        };
        Self {
            protocol: spec.protocol,
            budget: spec.budget,
            images,
            summary,
        }
    }

    /// Per-image `Er` under `f`, in dataset order; `None` for failed images.
    pub fn per_image(&self, f: Transfer) -> Vec<Option<f64>> {
        self.images
            .iter()
            .map(|r| {
                r.scores.as_ref().map(|s| match f {
                    Transfer::Sigmoid => s.er_sigmoid,
                    Transfer::Identity => s.er_identity,
                })
            })
            .collect()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Other(e.to_string());
        w.write_record([
            "image",
            "protocol",
            "Er_sigmoid",
            "Er_identity",
            "final_er",
            "status",
        ])
        .map_err(io)?;
        for r in &self.images {
            let row = match &r.scores {
                Some(s) => [
                    r.image.clone(),
                    self.protocol.name().into(),
                    s.er_sigmoid.to_string(),
                    s.er_identity.to_string(),
                    s.final_er.to_string(),
                    "ok".into(),
                ],
                None => [
                    r.image.clone(),
                    self.protocol.name().into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {}", r.error.as_deref().unwrap_or("")),
                ],
            };
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "protocol": self.protocol,
            "budget": self.budget,
            "summary": self.summary,
        }))?)
    }

    pub fn write_curves_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.images {
            if let Some(s) = &r.scores {
                serde_json::to_writer(
                    &mut out,
                    &serde_json::json!({"image": r.image, "curve": s.curve}),
                )?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Builds a segmenter for one record from a starting trimap.
pub type SegmenterFactory<'a> =
    dyn Fn(&DatasetRecord, Trimap) -> Result<Box<dyn Segmenter>> + Sync + 'a;

/// Factory for the built-in systems.
pub fn config_factory(
    config: &SegmenterConfig,
) -> impl Fn(&DatasetRecord, Trimap) -> Result<Box<dyn Segmenter>> + Sync + '_ {
    move |rec, tri| {
        Ok(
            Box::new(start_session(Arc::clone(&rec.image), tri, config.clone())?)
                as Box<dyn Segmenter>,
        )
    }
}

/// Scores one image.
pub fn evaluate_image(
    rec: &DatasetRecord,
    spec: &EvalSpec,
    factory: &SegmenterFactory,
) -> Result<ImageScores> {
    let curve = match spec.protocol {
        Protocol::StaticTrimap | Protocol::StaticBrush => {
            let tri = if spec.protocol == Protocol::StaticTrimap {
                rec.tight.clone()
            } else {
                rec.brush.clone()
            };
            let mut s = factory(rec, tri)?;
            vec![hamming_error(&s.segment()?, &rec.gt)?]
        }
        Protocol::DynamicBrush => {
            let policy = spec
                .policy
                .ok_or_else(|| Error::InvalidInput("dynamic protocol needs a policy".into()))?;
            let mut s = factory(rec, rec.brush.clone())?;
            run_robot(s.as_mut(), &mut Robot::new(policy), &rec.gt, spec.budget)?.errors
        }
    };
    let post: &[f64] = if curve.len() > 1 { &curve[1..] } else { &curve };
    let b = post.len();
    Ok(ImageScores {
        er_sigmoid: aggregate_er(post, b, Transfer::Sigmoid)?,
        er_identity: aggregate_er(post, b, Transfer::Identity)?,
        final_er: *curve.last().expect("non-empty"),
        curve,
    })
}

/// Evaluates every record in parallel; failures are recorded per image.
pub fn evaluate_with(
    dataset: &[DatasetRecord],
    spec: &EvalSpec,
    factory: &SegmenterFactory,
) -> EvalReport {
    let images = dataset
        .par_iter()
        .map(|rec| match evaluate_image(rec, spec, factory) {
            Ok(s) => ImageResult {
                image: rec.name.clone(),
                scores: Some(s),
                error: None,
            },
            Err(e) => {
                tracing::warn!(image = %rec.name, error = %e, "evaluation failed");
                ImageResult {
                    image: rec.name.clone(),
                    scores: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    EvalReport::from_images(spec, images)
}

pub fn evaluate(
    dataset: &[DatasetRecord],
    config: &SegmenterConfig,
    spec: &EvalSpec,
) -> EvalReport {
    evaluate_with(dataset, spec, &config_factory(config))
}
