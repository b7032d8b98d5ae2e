//! Simulated users: policies that place the next brush stroke.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::hamming_error;
use crate::grid::{BrushStroke, Connectivity, Grid, Label, LabelMap, Pixel};
use crate::morphology::{connected_components, distance_transform, squared_distance_to};
use crate::segment::Segmenter;

pub const DEFAULT_MAX_RADIUS: u32 = 4;
pub const DEFAULT_STRIDE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyKind {
    /// A uniformly random wrongly labeled pixel.
    Random { seed: u64 },
    /// The deepest pixel of the largest error region.
    Center,
    /// The wrongly labeled pixel with the smallest min-marginal gap. With
    /// `absolute` the smallest min-marginal of the correct label is used.
    Sensit {
        #[serde(default)]
        absolute: bool,
    },
    /// The candidate stroke that changes the most pixels.
    RoiSize { stride: usize },
    /// The candidate stroke with the lowest resulting error.
    Hamming { stride: usize },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Random { .. } => "random",
            PolicyKind::Center => "center",
            PolicyKind::Sensit { .. } => "sensit",
            PolicyKind::RoiSize { .. } => "roisize",
            PolicyKind::Hamming { .. } => "hamming",
        }
    }

    /// Parses `random`, `center`, `sensit`, `roisize` or `hamming` with default
    /// seed and stride.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "random" => PolicyKind::Random { seed: 0 },
            "center" | "centre" => PolicyKind::Center,
            "sensit" => PolicyKind::Sensit { absolute: false },
            "roisize" | "roi-size" => PolicyKind::RoiSize {
                stride: DEFAULT_STRIDE,
            },
            "hamming" => PolicyKind::Hamming {
                stride: DEFAULT_STRIDE,
            },
            _ => return Err(Error::InvalidInput(format!("unknown policy {s:?}"))),
        })
    }

    fn needs_gcs(&self) -> bool {
        matches!(
            self,
            PolicyKind::Sensit { .. } | PolicyKind::RoiSize { .. } | PolicyKind::Hamming { .. }
        )
    }
}

/// A brush placement. Every pixel of its disk has ground-truth label `label`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrushPlan {
    pub center: Pixel,
    pub radius: u32,
    pub label: Label,
}

impl BrushPlan {
    pub fn to_stroke(&self, width: usize, height: usize) -> BrushStroke {
        BrushStroke::disk(self.label, self.center, self.radius, width, height)
            .expect("plan inside image")
    }
}

/// Squared distances to the nearest pixel of each label, for fast brush
/// fitting at many centers.
#[derive(Clone, Debug)]
pub struct BrushFitter {
    gt: LabelMap,
    d2: [Grid<f64>; 2],
    max_radius: u32,
}

impl BrushFitter {
    pub fn new(gt: &LabelMap, max_radius: u32) -> Self {
        Self {
            gt: gt.clone(),
            d2: [
                squared_distance_to(&gt.mask_of(Label::Bg)),
                squared_distance_to(&gt.mask_of(Label::Fg)),
            ],
            max_radius,
        }
    }

    pub fn fit(&self, center: Pixel) -> BrushPlan {
        let label = *self.gt.get(center);
        let d2 = *self.d2[label.flip().index()].get(center);
        let floor_d = d2.sqrt().floor() as u32;
        let mut radius = self.max_radius.min(floor_d.saturating_sub(1)).max(1);
        if self.max_radius == 0 || (radius * radius) as f64 >= d2 {
            radius = 0;
        }
        BrushPlan {
            center,
            radius,
            label,
        }
    }
}

/// Largest brush up to `max_radius` at `center` that stays inside one
/// ground-truth region; a single pixel when even radius 1 would cross.
pub fn fit_brush(center: Pixel, gt: &LabelMap, max_radius: u32) -> Result<BrushPlan> {
    if center.x >= gt.width() || center.y >= gt.height() {
        return Err(Error::OutOfBounds {
            x: center.x as i64,
            y: center.y as i64,
            width: gt.width(),
            height: gt.height(),
        });
    }
    Ok(BrushFitter::new(gt, max_radius).fit(center))
}

/// A policy with its random state.
#[derive(Clone, Debug)]
pub struct Robot {
    pub kind: PolicyKind,
    pub max_radius: u32,
    rng: ChaCha8Rng,
}

impl Robot {
    pub fn new(kind: PolicyKind) -> Self {
        let seed = match kind {
            PolicyKind::Random { seed } => seed,
            _ => 0,
        };
        Self {
            kind,
            max_radius: DEFAULT_MAX_RADIUS,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_max_radius(mut self, r: u32) -> Self {
        self.max_radius = r;
        self
    }

    /// The next stroke, or `None` once `seg` equals `gt`.
    pub fn next_stroke(
        &mut self,
        gt: &LabelMap,
        seg: &LabelMap,
        session: &dyn Segmenter,
    ) -> Result<Option<BrushPlan>> {
        gt.ensure_same_shape(seg, "ground truth vs segmentation")?;
        if self.kind.needs_gcs() && session.gcs().is_none() {
            return Err(Error::UnsupportedPolicy(format!(
                "{} needs the frozen-unary graph cut system",
                self.kind.name()
            )));
        }
        let errors: Vec<usize> = (0..gt.len())
            .filter(|&i| gt.as_slice()[i] != seg.as_slice()[i])
            .collect();
        if errors.is_empty() {
            return Ok(None);
        }
        let fitter = BrushFitter::new(gt, self.max_radius);
        let (w, h) = (gt.width(), gt.height());
        let center = match self.kind {
            PolicyKind::Random { .. } => gt.pixel(errors[self.rng.gen_range(0..errors.len())]),
            PolicyKind::Center => center_of_largest_error(gt, seg),
            PolicyKind::Sensit { absolute } => {
                let gcs = session.gcs().expect("checked");
                let mm = gcs.min_marginals(session.trimap(), &errors);
                let score = |k: usize| {
                    let m = mm[k];
                    if absolute {
                        m[gt.as_slice()[errors[k]].index()]
                    } else {
                        (m[0] - m[1]).abs()
                    }
                };
                let mut best = 0;
                for k in 1..errors.len() {
                    if score(k) < score(best) {
                        best = k;
                    }
                }
                gt.pixel(errors[best])
            }
            PolicyKind::RoiSize { stride } | PolicyKind::Hamming { stride } => {
                if stride == 0 {
                    return Err(Error::InvalidInput(
                        "candidate stride must be at least 1".into(),
                    ));
                }
                let gcs = session.gcs().expect("checked");
                let mut cands: Vec<usize> = errors
                    .iter()
                    .copied()
                    .filter(|&i| i % w % stride == 0 && i / w % stride == 0)
                    .collect();
                if cands.is_empty() {
                    cands = errors.clone();
                }
                let roi = matches!(self.kind, PolicyKind::RoiSize { .. });
                let scores: Vec<i64> = cands
                    .par_iter()
                    .map(|&i| {
                        let stroke = fitter.fit(gt.pixel(i)).to_stroke(w, h);
                        let y = gcs.simulate(&stroke);
                        if roi {
                            -(y.hamming(seg) as i64)
                        } else {
                            y.hamming(gt) as i64
                        }
                    })
                    .collect();
                let mut best = 0;
                for k in 1..cands.len() {
                    if scores[k] < scores[best] {
                        best = k;
                    }
                }
                gt.pixel(cands[best])
            }
        };
        Ok(Some(fitter.fit(center)))
    }
}

/// The pixel farthest from the boundary of the largest 8-connected error
/// region, first in row-major order among ties.
pub fn center_of_largest_error(gt: &LabelMap, seg: &LabelMap) -> Pixel {
    let err = Grid::from_fn(gt.width(), gt.height(), |p| gt.get(p) != seg.get(p));
    let comps = connected_components(&err, Connectivity::Eight);
    let mask = comps[0].to_mask(gt.width(), gt.height());
    let dt = distance_transform(&mask);
    let mut best = None::<(usize, f64)>;
    for (i, &d) in dt.as_slice().iter().enumerate() {
        if mask.as_slice()[i] && best.is_none_or(|(_, b)| d > b) {
            best = Some((i, d));
        }
    }
    gt.pixel(best.expect("non-empty component").0)
}

/// One robot stroke and the error after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeRecord {
    pub index: usize,
    pub center: Pixel,
    pub radius: u32,
    pub label: Label,
    pub er_b: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace {
    /// `er_0 ..= er_B` in percent; padded with the last value after an early stop.
    pub errors: Vec<f64>,
    pub strokes: Vec<StrokeRecord>,
}

impl InteractionTrace {
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.strokes {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8 json")
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("trace has er_0")
    }
}

/// Segments, then alternates robot strokes and re-segmentation up to
/// `budget` times.
pub fn run_robot(
    session: &mut dyn Segmenter,
    robot: &mut Robot,
    gt: &LabelMap,
    budget: usize,
) -> Result<InteractionTrace> {
    let mut seg = session.segment()?;
    let mut errors = vec![hamming_error(&seg, gt)?];
    let mut strokes = Vec::new();
    for b in 1..=budget {
        let start = Instant::now();
        let Some(plan) = robot.next_stroke(gt, &seg, session)? else {
            break;
        };
        session.add_stroke(&plan.to_stroke(gt.width(), gt.height()))?;
        seg = session.segment()?;
        let er = hamming_error(&seg, gt)?;
        errors.push(er);
        strokes.push(StrokeRecord {
            index: b,
            center: plan.center,
            radius: plan.radius,
            label: plan.label,
            er_b: er,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let last = *errors.last().expect("er_0");
    errors.resize(budget + 1, last);
    Ok(InteractionTrace { errors, strokes })
}
