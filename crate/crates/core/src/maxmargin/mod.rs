//! Max-margin learning of the GCS energy weights
//!
//! The energy is linear in `w = (w_unary, w_i, w_c)` for a fixed `β`:
//! `E_w(y) = w·ψ(y)` with `ψ = (Σ unary, Σ_cut 1/dist, Σ_cut exp(-β‖Δx‖²)/dist)`.
//! Training pixels covered by the user's strokes are clamped to their true
//! labels, so constraints only range over compatible labelings.

pub mod qp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{unaries_from_trimap, UnaryField};
use crate::dataset::DatasetRecord;
use crate::energy::{beta_for, grid_edges, minimize_constrained, Edge, GridEnergy, Params};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, EvalSpec, MeanStd};
use crate::grid::{LabelMap, Mark, Trimap};
use crate::robot::{PolicyKind, Robot};
use crate::segment::{EnergySession, Segmenter, SegmenterConfig, System};

pub use qp::{solve_qp, Constraint, QpSolution, Vector, DIM};

/// Default violation tolerance of the cutting-plane loop.
pub const VIOLATION_TOL: f64 = 1e-4;
pub const MAX_CUTTING_ROUNDS: usize = 200;

/// Weights `(w_unary, w_i, w_c)` as energy parameters with a given `w_beta`.
pub fn params_from_weights(w: &Vector, w_beta: f64) -> Params {
    Params {
        w_c: w[2],
        w_i: w[1],
        w_beta,
        w_unary: w[0],
    }
}

/// One training image with its feature maps.
#[derive(Clone, Debug)]
pub struct MmImage {
    pub name: String,
    pub gt: LabelMap,
    /// Unweighted unaries, frozen from the initial strokes.
    pub unary: UnaryField,
    /// Per edge in grid order: `1/dist` and `exp(-β‖Δx‖²)/dist`.
    pub ising: Vec<f64>,
    pub contrast: Vec<f64>,
    pub initial: Trimap,
}

impl MmImage {
    pub fn from_record(
        rec: &DatasetRecord,
        w_beta: f64,
        gmm_k: usize,
        gmm_seed: u64,
    ) -> Result<Self> {
        let fit = unaries_from_trimap(&rec.image, &rec.brush, gmm_k, gmm_seed)?;
        let beta = beta_for(&rec.image, w_beta);
        let px = rec.image.as_slice();
        let (mut ising, mut contrast) = (Vec::new(), Vec::new());
        for (p, q, d) in grid_edges(rec.image.width(), rec.image.height()) {
            let d2: f64 = (0..3).map(|c| (px[p][c] - px[q][c]).powi(2)).sum();
            ising.push(1.0 / d);
            contrast.push((-beta * d2).exp() / d);
        }
        Ok(Self {
            name: rec.name.clone(),
            gt: rec.gt.clone(),
            unary: fit.raw,
            ising,
            contrast,
            initial: rec.brush.clone(),
        })
    }

    pub fn features(&self, y: &LabelMap) -> Vector {
        let labels = y.as_slice();
        let mut psi = [0.0; DIM];
        psi[0] = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.unary.cost(i, l))
            .sum();
        for (e, (p, q, _)) in grid_edges(y.width(), y.height()).into_iter().enumerate() {
            if labels[p] != labels[q] {
                psi[1] += self.ising[e];
                psi[2] += self.contrast[e];
            }
        }
        psi
    }

    pub fn energy(&self, w: &Vector) -> GridEnergy {
        let edges = grid_edges(self.gt.width(), self.gt.height())
            .into_iter()
            .enumerate()
            .map(|(e, (p, q, _))| Edge {
                p: p as u32,
                q: q as u32,
                weight: w[1] * self.ising[e] + w[2] * self.contrast[e],
            })
            .collect();
        GridEnergy {
            unary: self.unary.scaled(w[0]),
            edges,
            beta: 0.0,
        }
    }

    /// `δψ = ψ(y) - ψ(gt)` and the Hamming loss in pixels.
    pub fn constraint(&self, y: &LabelMap) -> Constraint {
        let (a, b) = (self.features(y), self.features(&self.gt));
        Constraint {
            dpsi: std::array::from_fn(|i| a[i] - b[i]),
            loss: y.hamming(&self.gt) as f64,
        }
    }
}

/// A stored constraint with the labeling that produced it.
#[derive(Clone, Debug)]
pub struct WorkingConstraint {
    pub y: LabelMap,
    pub constraint: Constraint,
}

/// `w·δψ - ℓ` of the most violating labeling compatible with `clamps`, when
/// that falls below `-ξ - tol`.
pub fn find_violated(
    w: &Vector,
    img: &MmImage,
    clamps: &Trimap,
    xi: f64,
    tol: f64,
) -> Option<(LabelMap, f64)> {
    let e = img.energy(w);
    let (y, _) = minimize_constrained(&e, Some(clamps), Some((&img.gt, 1.0)));
    if y == img.gt {
        return None;
    }
    let c = img.constraint(&y);
    let margin = c.dpsi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - c.loss;
    (margin < -xi - tol).then_some((y, margin))
}

/// Whether `y` agrees with every clamped pixel.
pub fn compatible(y: &LabelMap, clamps: &Trimap) -> bool {
    y.as_slice()
        .iter()
        .zip(clamps.as_slice())
        .all(|(l, m)| m.label().is_none_or(|c| c == *l))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StaticResult {
    pub solution: QpSolution,
    /// QP objective after every round.
    pub objectives: Vec<f64>,
    pub rounds: usize,
    /// False when the round cap stopped the loop.
    pub converged: bool,
}

/// Cutting planes: solve the QP on the working set, add the most violated
/// labeling of every image, repeat until nothing is violated beyond `tol`.
/// `c` is the slack price per image.
pub fn train_static(
    images: &[MmImage],
    clamps: &[Trimap],
    working: &mut [Vec<WorkingConstraint>],
    c: f64,
    tol: f64,
    max_rounds: usize,
) -> Result<StaticResult> {
    if images.is_empty() {
        return Err(Error::InvalidInput("no training images".into()));
    }
    if clamps.len() != images.len() || working.len() != images.len() {
        return Err(Error::Dimensions(
            "one clamp map and working set per image".into(),
        ));
    }
    let mut objectives = Vec::new();
    for round in 1..=max_rounds {
        let groups: Vec<Vec<Constraint>> = working
            .iter()
            .map(|ws| ws.iter().map(|x| x.constraint).collect())
            .collect();
        let sol = solve_qp(&groups, c)?;
        objectives.push(sol.objective);
        let found: Vec<Option<(LabelMap, f64)>> = images
            .par_iter()
            .zip(clamps)
            .zip(&sol.xi)
            .map(|((img, cl), &xi)| find_violated(&sol.w, img, cl, xi, tol))
            .collect();
        let mut added = 0;
        for (k, f) in found.into_iter().enumerate() {
            if let Some((y, _)) = f {
                if working[k].iter().all(|x| x.y != y) {
                    let constraint = images[k].constraint(&y);
                    working[k].push(WorkingConstraint { y, constraint });
                    added += 1;
                }
            }
        }
        tracing::debug!(
            round,
            objective = sol.objective,
            added,
            "cutting plane round"
        );
        if added == 0 {
            return Ok(StaticResult {
                solution: sol,
                objectives,
                rounds: round,
                converged: true,
            });
        }
    }
    let groups: Vec<Vec<Constraint>> = working
        .iter()
        .map(|ws| ws.iter().map(|x| x.constraint).collect())
        .collect();
    let sol = solve_qp(&groups, c)?;
    objectives.push(sol.objective);
    tracing::warn!(max_rounds, "cutting planes stopped at the round cap");
    Ok(StaticResult {
        solution: sol,
        objectives,
        rounds: max_rounds,
        converged: false,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynamicRound {
    pub t: usize,
    pub w: Vector,
    pub objective: f64,
    pub norm_term: f64,
    pub slack_term: f64,
    /// `max_k a_k · |labeled pixels of k|`.
    pub iota: f64,
    pub labeled: Vec<usize>,
    pub cutting_rounds: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynamicResult {
    /// `w^0 ..= w^T`.
    pub trajectory: Vec<Vector>,
    pub rounds: Vec<DynamicRound>,
    #[serde(skip)]
    pub clamps: Vec<Trimap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicConfig {
    /// Total slack price `C`, split evenly over images.
    pub c: f64,
    pub strategy: PolicyKind,
    pub strokes: usize,
    pub tol: f64,
    pub max_rounds: usize,
    pub max_radius: u32,
}

impl DynamicConfig {
    /// `C = 10 n` for `n` training images, Center strategy.
    pub fn new(n_images: usize, strokes: usize) -> Self {
        Self {
            c: 10.0 * n_images as f64,
            strategy: PolicyKind::Center,
            strokes,
            tol: VIOLATION_TOL,
            max_rounds: MAX_CUTTING_ROUNDS,
            max_radius: crate::robot::DEFAULT_MAX_RADIUS,
        }
    }
}

fn labeled(t: &Trimap) -> usize {
    t.as_slice()
        .iter()
        .filter(|m| **m != Mark::Unlabeled)
        .count()
}

/// Interleaves QP training with strategy strokes: after each `w^t` every
/// image receives one stroke placed on its segmentation under `w^t`, and the
/// new labels clamp its training constraints.
pub fn train_dynamic(images: &[MmImage], cfg: &DynamicConfig) -> Result<DynamicResult> {
    if images.is_empty() {
        return Err(Error::InvalidInput("no training images".into()));
    }
    let c = cfg.c / images.len() as f64;
    let mut clamps: Vec<Trimap> = images.iter().map(|m| m.initial.clone()).collect();
    let mut working: Vec<Vec<WorkingConstraint>> = vec![Vec::new(); images.len()];
    let mut robots: Vec<Robot> = images
        .iter()
        .map(|_| Robot::new(cfg.strategy).with_max_radius(cfg.max_radius))
        .collect();
    let mut trajectory = Vec::new();
    let mut rounds = Vec::new();
    for t in 0..=cfg.strokes {
        for (ws, cl) in working.iter_mut().zip(&clamps) {
            ws.retain(|x| compatible(&x.y, cl));
        }
        let st = train_static(images, &clamps, &mut working, c, cfg.tol, cfg.max_rounds)?;
        let w = st.solution.w;
        let counts: Vec<usize> = clamps.iter().map(labeled).collect();
        let iota = images
            .iter()
            .zip(&counts)
            .map(|(m, &n)| n as f64 / m.gt.len() as f64)
            .fold(0.0, f64::max);
        tracing::info!(
            t,
            ?w,
            objective = st.solution.objective,
            iota,
            "dynamic round"
        );
        rounds.push(DynamicRound {
            t,
            w,
            objective: st.solution.objective,
            norm_term: st.solution.norm_term,
            slack_term: st.solution.slack_term,
            iota,
            labeled: counts,
            cutting_rounds: st.rounds,
            converged: st.converged,
        });
        trajectory.push(w);
        if t == cfg.strokes {
            break;
        }
        let strokes: Vec<Result<Option<crate::grid::BrushStroke>>> = images
            .par_iter()
            .zip(&clamps)
            .zip(robots.par_iter_mut())
            .map(|((img, cl), robot)| {
                let mut s = EnergySession::new(img.energy(&w), cl.clone())?;
                let seg = s.segment()?;
                let plan = robot.next_stroke(&img.gt, &seg, &s)?;
                Ok(plan.map(|p| p.to_stroke(img.gt.width(), img.gt.height())))
            })
            .collect();
        for (cl, s) in clamps.iter_mut().zip(strokes) {
            if let Some(stroke) = s? {
                cl.apply_stroke(&stroke);
            }
        }
    }
    Ok(DynamicResult {
        trajectory,
        rounds,
        clamps,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub training: DynamicResult,
    pub eval_initial: EvalReport,
    pub eval_final: EvalReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub folds: Vec<FoldReport>,
    /// Mean `f(er_b)` over all held-out images, for `w^0` and `w^T`.
    pub curve_initial: Vec<f64>,
    pub curve_final: Vec<f64>,
}

/// Image `i` goes to test fold `i mod folds`.
pub fn fold_partition(n: usize, folds: usize) -> Vec<Vec<usize>> {
    (0..folds)
        .map(|f| (f..n).step_by(folds).collect())
        .collect()
}

/// Options shared by the training folds and the held-out evaluations.
#[derive(Clone, Debug)]
pub struct CrossvalConfig {
    pub folds: usize,
    pub dynamic: DynamicConfig,
    /// Frozen contrast scale.
    pub w_beta: f64,
    pub gmm_k: usize,
    pub gmm_seed: u64,
    /// Budget and strategy for held-out evaluation.
    pub eval: EvalSpec,
}

pub fn crossval_dynamic(dataset: &[DatasetRecord], cfg: &CrossvalConfig) -> Result<CrossvalReport> {
    if cfg.folds < 2 || dataset.len() < cfg.folds {
        return Err(Error::InvalidInput(format!(
            "{} folds over {} images",
            cfg.folds,
            dataset.len()
        )));
    }
    let images: Vec<MmImage> = dataset
        .iter()
        .map(|r| MmImage::from_record(r, cfg.w_beta, cfg.gmm_k, cfg.gmm_seed))
        .collect::<Result<_>>()?;
    let mut folds = Vec::new();
    let mut test_initial = Vec::new();
    let mut test_final = Vec::new();
    for (f, test) in fold_partition(dataset.len(), cfg.folds)
        .into_iter()
        .enumerate()
    {
        let train: Vec<usize> = (0..dataset.len()).filter(|i| !test.contains(i)).collect();
        let train_imgs: Vec<MmImage> = train.iter().map(|&i| images[i].clone()).collect();
        let mut dyn_cfg = cfg.dynamic;
        dyn_cfg.c = cfg.dynamic.c * train.len() as f64 / dataset.len() as f64;
        let training = train_dynamic(&train_imgs, &dyn_cfg)?;
        let test_recs: Vec<DatasetRecord> = test.iter().map(|&i| dataset[i].clone()).collect();
        let run = |w: &Vector| {
            let mut sc = SegmenterConfig::new(System::Gcs, params_from_weights(w, cfg.w_beta));
            sc.gmm_k = cfg.gmm_k;
            sc.gmm_seed = cfg.gmm_seed;
            evaluate(&test_recs, &sc, &cfg.eval)
        };
        let eval_initial = run(&training.trajectory[0]);
        let eval_final = run(training.trajectory.last().expect("w^0"));
        test_initial.extend(eval_initial.images.iter().filter_map(|r| r.scores.clone()));
        test_final.extend(eval_final.images.iter().filter_map(|r| r.scores.clone()));
        folds.push(FoldReport {
            fold: f,
            train: train.iter().map(|&i| dataset[i].name.clone()).collect(),
            test: test.iter().map(|&i| dataset[i].name.clone()).collect(),
            training,
            eval_initial,
            eval_final,
        });
    }
    let mean_curve = |scores: &[crate::eval::ImageScores]| -> Vec<f64> {
        let len = scores.iter().map(|s| s.curve.len()).min().unwrap_or(0);
        (0..len)
            .map(|b| {
                let v: Vec<f64> = scores
                    .iter()
                    .map(|s| crate::eval::transfer(s.curve[b], crate::eval::TRANSFER_CAP))
                    .collect();
                MeanStd::of(&v).map_or(f64::NAN, |m| m.mean)
            })
            .collect()
    };
    Ok(CrossvalReport {
        curve_initial: mean_curve(&test_initial),
        curve_final: mean_curve(&test_final),
        folds,
    })
}
