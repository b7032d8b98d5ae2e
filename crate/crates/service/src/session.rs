//! One interactive session: the human's strokes, the live segmenter and the
//! trace of errors after every stroke.

use std::sync::Arc;
use std::time::Instant;

use robotseg_core::eval::hamming_error;
use robotseg_core::grid::{disk_pixels, BrushStroke, Label, LabelMap, Pixel, RgbImage, Trimap};
use robotseg_core::robot::{run_robot, InteractionTrace, PolicyKind, Robot};
use robotseg_core::segment::{start_session, Segmenter, SegmenterConfig, SegmenterSession};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::rle::{encode, RleMask};

pub const MAX_RADIUS: u32 = 64;
pub const MAX_REPLAY_BUDGET: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

/// A disk at `center`, or disks stamped at 1-pixel spacing along `points`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeInput {
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point>>,
    pub radius: u32,
}

impl StrokeInput {
    pub fn disk(label: Label, x: i64, y: i64, radius: u32) -> Self {
        Self {
            label,
            center: Some(Point { x, y }),
            points: None,
            radius,
        }
    }

    pub fn rasterize(&self, width: usize, height: usize) -> Result<BrushStroke, ServiceError> {
        if self.radius > MAX_RADIUS {
            return Err(ServiceError::Invalid(format!(
                "radius {} above {MAX_RADIUS}",
                self.radius
            )));
        }
        let path: Vec<Point> = match (&self.center, &self.points) {
            (Some(c), None) => vec![*c],
            (None, Some(p)) if !p.is_empty() => p.clone(),
            _ => {
                return Err(ServiceError::Invalid(
                    "give either center or a non-empty points list".into(),
                ))
            }
        };
        let inside =
            |p: &Point| p.x >= 0 && p.y >= 0 && (p.x as usize) < width && (p.y as usize) < height;
        if let Some(p) = path.iter().find(|p| !inside(p)) {
            return Err(ServiceError::OutOfBounds {
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
        let mut stamps = vec![path[0]];
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let steps = (b.x - a.x).abs().max((b.y - a.y).abs());
            for i in 1..=steps {
                let t = i as f64 / steps as f64;
                stamps.push(Point {
                    x: (a.x as f64 + t * (b.x - a.x) as f64).round() as i64,
                    y: (a.y as f64 + t * (b.y - a.y) as f64).round() as i64,
                });
            }
        }
        let mut pixels: Vec<Pixel> = stamps
            .iter()
            .flat_map(|p| {
                disk_pixels(
                    Pixel::new(p.x as usize, p.y as usize),
                    self.radius,
                    width,
                    height,
                )
            })
            .collect();
        pixels.sort_by_key(|p| (p.y, p.x));
        pixels.dedup();
        Ok(BrushStroke {
            label: self.label,
            center: Pixel::new(path[0].x as usize, path[0].y as usize),
            radius: self.radius,
            pixels,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub image: String,
    #[serde(default = "default_config")]
    pub config: SegmenterConfig,
    /// Score strokes against the image's ground truth.
    #[serde(default = "yes")]
    pub with_gt: bool,
    /// Start from the image's stored brush strokes.
    #[serde(default = "yes")]
    pub initial_strokes: bool,
}

fn default_config() -> SegmenterConfig {
    SegmenterConfig::new(robotseg_core::segment::System::Gcs, Default::default())
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stroke: StrokeInput,
    pub er_b: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeResponse {
    /// `None` until both labels have been stroked.
    pub segmentation: Option<RleMask>,
    pub er_b: Option<f64>,
    pub strokes: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub image: String,
    pub config: SegmenterConfig,
    pub with_gt: bool,
    pub created_at: u64,
    pub pending: bool,
    /// Error of the starting segmentation, when there is one and gt is known.
    pub er_0: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub segmentation: Option<RleMask>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayRequest {
    pub policy: PolicyKind,
    pub budget: usize,
}

#[derive(Clone, Debug)]
pub struct SessionRecord {
    pub id: String,
    pub request: CreateSession,
    pub created_at: u64,
    image: Arc<RgbImage>,
    gt: Option<LabelMap>,
    trimap: Trimap,
    live: Option<SegmenterSession>,
    segmentation: Option<LabelMap>,
    er_0: Option<f64>,
    trace: Vec<TraceEntry>,
}

impl SessionRecord {
    pub fn new(
        id: String,
        request: CreateSession,
        created_at: u64,
        image: Arc<RgbImage>,
        gt: Option<LabelMap>,
        initial: Trimap,
    ) -> Result<Self, ServiceError> {
        request.config.validate()?;
        let gt = if request.with_gt { gt } else { None };
        let mut s = Self {
            id,
            request,
            created_at,
            image,
            gt,
            trimap: initial,
            live: None,
            segmentation: None,
            er_0: None,
            trace: Vec::new(),
        };
        s.start_if_ready()?;
        s.er_0 = s.error_now()?;
        Ok(s)
    }

    fn start_if_ready(&mut self) -> Result<(), ServiceError> {
        if self.live.is_none() && self.trimap.has_both_seeds() {
            let mut live = start_session(
                self.image.clone(),
                self.trimap.clone(),
                self.request.config.clone(),
            )?;
            self.segmentation = Some(live.segment()?);
            self.live = Some(live);
        }
        Ok(())
    }

    fn error_now(&self) -> Result<Option<f64>, ServiceError> {
        Ok(match (&self.segmentation, &self.gt) {
            (Some(s), Some(g)) => Some(hamming_error(s, g)?),
            _ => None,
        })
    }

    pub fn has_gt(&self) -> bool {
        self.gt.is_some()
    }

    pub fn segmentation(&self) -> Option<&LabelMap> {
        self.segmentation.as_ref()
    }

    pub fn apply(&mut self, input: &StrokeInput) -> Result<StrokeResponse, ServiceError> {
        let start = Instant::now();
        let stroke = input.rasterize(self.image.width(), self.image.height())?;
        match &mut self.live {
            Some(live) => {
                live.add_stroke(&stroke)?;
                self.segmentation = Some(live.segment()?);
            }
            None => {
                self.trimap.apply_stroke(&stroke);
                self.start_if_ready()?;
            }
        }
        let er_b = self.error_now()?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        self.trace.push(TraceEntry {
            stroke: input.clone(),
            er_b,
            elapsed_ms,
        });
        Ok(StrokeResponse {
            segmentation: self.segmentation.as_ref().map(encode),
            er_b,
            strokes: self.trace.len(),
            elapsed_ms,
        })
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            image: self.request.image.clone(),
            config: self.request.config.clone(),
            with_gt: self.gt.is_some(),
            created_at: self.created_at,
            pending: self.live.is_none(),
            er_0: self.er_0,
            trace: self.trace.clone(),
            segmentation: self.segmentation.as_ref().map(encode),
        }
    }

    /// A copy of the live segmenter for a robot run, with the gt.
    pub fn replay_source(&self) -> Result<(SegmenterSession, LabelMap), ServiceError> {
        let gt = self.gt.clone().ok_or_else(|| {
            ServiceError::Unsupported("robot replay needs a session with ground truth".into())
        })?;
        let live = self.live.clone().ok_or_else(|| {
            ServiceError::Unsupported(
                "session has no segmentation yet; stroke both labels first".into(),
            )
        })?;
        Ok((live, gt))
    }
}

pub fn replay(
    mut live: SegmenterSession,
    gt: &LabelMap,
    req: &ReplayRequest,
) -> Result<InteractionTrace, ServiceError> {
    if req.budget > MAX_REPLAY_BUDGET {
        return Err(ServiceError::Invalid(format!(
            "budget {} above {MAX_REPLAY_BUDGET}",
            req.budget
        )));
    }
    Ok(run_robot(
        &mut live,
        &mut Robot::new(req.policy),
        gt,
        req.budget,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_stamps_every_step() {
        let s = StrokeInput {
            label: Label::Fg,
            center: None,
            points: Some(vec![Point { x: 0, y: 0 }, Point { x: 4, y: 2 }]),
            radius: 0,
        };
        let b = s.rasterize(6, 6).unwrap();
        assert_eq!(b.pixels.len(), 5);
        assert_eq!(b.pixels.first(), Some(&Pixel::new(0, 0)));
        assert!(b.pixels.contains(&Pixel::new(4, 2)));
    }

    #[test]
    fn bounds_and_shape_errors() {
        assert!(matches!(
            StrokeInput::disk(Label::Bg, -1, 0, 2).rasterize(4, 4),
            Err(ServiceError::OutOfBounds { x: -1, .. })
        ));
        assert!(matches!(
            StrokeInput::disk(Label::Bg, 0, 4, 2).rasterize(4, 4),
            Err(ServiceError::OutOfBounds { .. })
        ));
        let both = StrokeInput {
            points: Some(vec![Point { x: 1, y: 1 }]),
            ..StrokeInput::disk(Label::Bg, 0, 0, 1)
        };
        assert!(matches!(
            both.rasterize(4, 4),
            Err(ServiceError::Invalid(_))
        ));
    }
}
