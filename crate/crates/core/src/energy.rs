//! The pairwise grid energy
//!
//! `E(y) = Σ_p U_p(y_p) + Σ_(p,q) λ_pq [y_p ≠ y_q]`
//!
//! over the 8-connected pixel grid, with
//! `λ_pq = (w_i + w_c exp(-β ‖x_p - x_q‖²)) / dist(p, q)` and
//! `β = 0.5 w_β / ⟨‖x_p - x_q‖²⟩`. Every weight is non-negative so the energy
//! is submodular and min-cut gives its exact minimizer. Foreground is the
//! source side of the cut.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::color::{UnaryField, CLAMP};
use crate::error::{Error, Result};
use crate::grid::{Grid, Label, LabelMap, Mark, Pixel, RgbImage, Trimap};
use crate::maxflow::{GraphBuilder, MaxFlow};

/// Free parameters of the energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Contrast-sensitive pairwise weight.
    pub w_c: f64,
    /// Ising pairwise weight.
    pub w_i: f64,
    /// Scale of the contrast exponent.
    pub w_beta: f64,
    /// Weight on the color unaries; 1 except under max-margin learning.
    #[serde(default = "one")]
    pub w_unary: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Params {
    fn default() -> Self {
        Self {
            w_c: 0.25,
            w_i: 5.0,
            w_beta: 1.0,
            w_unary: 1.0,
        }
    }
}

impl Params {
    pub fn new(w_c: f64, w_i: f64, w_beta: f64) -> Self {
        Self {
            w_c,
            w_i,
            w_beta,
            w_unary: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.w_c >= 0.0
            && self.w_i >= 0.0
            && self.w_unary >= 0.0
            && self.w_beta > 0.0
            && [self.w_c, self.w_i, self.w_beta, self.w_unary]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid parameters {self:?}")))
        }
    }
}

/// One undirected grid edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub p: u32,
    pub q: u32,
    pub weight: f64,
}

/// The 8-connected edge list in canonical order: for each pixel in row-major
/// order, its right, down, down-right and down-left neighbors. Returns
/// `(p, q, dist(p, q))`.
pub fn grid_edges(width: usize, height: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(width * height * 4);
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width {
                out.push((p, p + 1, 1.0));
            }
            if y + 1 < height {
                out.push((p, p + width, 1.0));
                if x + 1 < width {
                    out.push((p, p + width + 1, std::f64::consts::SQRT_2));
                }
                if x > 0 {
                    out.push((p, p + width - 1, std::f64::consts::SQRT_2));
                }
            }
        }
    }
    out
}

fn color_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Mean of `‖x_p - x_q‖²` over all 8-neighbor pairs (0 for a 1×1 image).
pub fn mean_neighbor_diff2(img: &RgbImage) -> f64 {
    let edges = grid_edges(img.width(), img.height());
    if edges.is_empty() {
        return 0.0;
    }
    let px = img.as_slice();
    edges
        .iter()
        .map(|&(p, q, _)| color_dist2(&px[p], &px[q]))
        .sum::<f64>()
        / edges.len() as f64
}

/// `β = 0.5 w_β / mean`, defined as 0 when the mean is 0.
pub fn beta_for(img: &RgbImage, w_beta: f64) -> f64 {
    let m = mean_neighbor_diff2(img);
    if m > 0.0 {
        0.5 * w_beta / m
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEnergy {
    pub unary: UnaryField,
    pub edges: Vec<Edge>,
    pub beta: f64,
}

impl GridEnergy {
    /// Energy from explicit edge weights in [`grid_edges`] order.
    pub fn from_weights(unary: UnaryField, weights: &[f64], beta: f64) -> Result<Self> {
        let topo = grid_edges(unary.width(), unary.height());
        if topo.len() != weights.len() {
            return Err(Error::Dimensions(format!(
                "{} edge weights for {} grid edges",
                weights.len(),
                topo.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput(
                "edge weights must be non-negative".into(),
            ));
        }
        let edges = topo
            .iter()
            .zip(weights)
            .map(|(&(p, q, _), &w)| Edge {
                p: p as u32,
                q: q as u32,
                weight: w,
            })
            .collect();
        Ok(Self { unary, edges, beta })
    }

    pub fn width(&self) -> usize {
        self.unary.width()
    }

    pub fn height(&self) -> usize {
        self.unary.height()
    }

    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    /// Direct evaluation of every term.
    pub fn evaluate(&self, y: &LabelMap) -> f64 {
        let labels = y.as_slice();
        let mut e: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.unary.cost(i, l))
            .sum();
        for edge in &self.edges {
            if labels[edge.p as usize] != labels[edge.q as usize] {
                e += edge.weight;
            }
        }
        e
    }

    /// Same energy with every unary replaced by `f(index, [bg, fg])`.
    pub fn with_unaries(&self, f: impl Fn(usize, [f64; 2]) -> [f64; 2]) -> GridEnergy {
        let mut unary = self.unary.clone();
        for (i, c) in self.unary.as_slice().iter().enumerate() {
            unary.set(i, f(i, *c));
        }
        GridEnergy {
            unary,
            edges: self.edges.clone(),
            beta: self.beta,
        }
    }

    /// Text dump: header, one `index bg fg` line per pixel, one `p q weight`
    /// line per edge. Floats are written in round-trip precision.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid {} {}", self.width(), self.height());
        let _ = writeln!(s, "beta {:?}", self.beta);
        let _ = writeln!(s, "unary {}", self.len());
        for (i, c) in self.unary.as_slice().iter().enumerate() {
            let _ = writeln!(s, "{i} {:?} {:?}", c[0], c[1]);
        }
        let _ = writeln!(s, "edges {}", self.edges.len());
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {:?}", e.p, e.q, e.weight);
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<GridEnergy> {
        let bad = |m: &str| Error::InvalidInput(format!("energy dump: {m}"));
        let mut lines = text.lines();
        let mut next_fields = |tag: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {tag}")))?;
            Ok(line.split_whitespace().map(str::to_string).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(s));
        let h = next_fields("grid")?;
        if h.len() != 3 || h[0] != "grid" {
            return Err(bad("header"));
        }
        let (w, hh) = (int(&h[1])?, int(&h[2])?);
        let b = next_fields("beta")?;
        let beta = num(b.get(1).ok_or_else(|| bad("beta"))?)?;
        let u = next_fields("unary")?;
        let n = int(u.get(1).ok_or_else(|| bad("unary"))?)?;
        let mut costs = Vec::with_capacity(n);
        for _ in 0..n {
            let f = next_fields("unary row")?;
            if f.len() != 3 {
                return Err(bad("unary row"));
            }
            costs.push([num(&f[1])?, num(&f[2])?]);
        }
        let e = next_fields("edges")?;
        let m = int(e.get(1).ok_or_else(|| bad("edges"))?)?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let f = next_fields("edge row")?;
            if f.len() != 3 {
                return Err(bad("edge row"));
            }
            edges.push(Edge {
                p: int(&f[0])? as u32,
                q: int(&f[1])? as u32,
                weight: num(&f[2])?,
            });
        }
        Ok(GridEnergy {
            unary: UnaryField::new(Grid::from_vec(w, hh, costs)?)?,
            edges,
            beta,
        })
    }
}

/// Pairwise weights `(w_i + w_c exp(-β‖Δx‖²)) / dist` on the 8-connected
/// grid, with β from [`beta_for`].
pub fn build_energy(img: &RgbImage, unary: &UnaryField, params: &Params) -> Result<GridEnergy> {
    if img.width() != unary.width() || img.height() != unary.height() {
        return Err(Error::Dimensions("image vs unary field".into()));
    }
    params.validate()?;
    let beta = beta_for(img, params.w_beta);
    let px = img.as_slice();
    let edges = grid_edges(img.width(), img.height())
        .into_iter()
        .map(|(p, q, d)| {
            let contrast = (-beta * color_dist2(&px[p], &px[q])).exp();
            Edge {
                p: p as u32,
                q: q as u32,
                weight: (params.w_i + params.w_c * contrast) / d,
            }
        })
        .collect();
    let unary = if params.w_unary == 1.0 {
        unary.clone()
    } else {
        unary.scaled(params.w_unary)
    };
    Ok(GridEnergy { unary, edges, beta })
}

/// A max-flow instance for a [`GridEnergy`] whose unaries can be changed
/// after solving; re-solves reuse the previous flow.
#[derive(Clone, Debug)]
pub struct GridSolver {
    width: usize,
    height: usize,
    unary: Vec<[f64; 2]>,
    flow: MaxFlow,
}

impl GridSolver {
    pub fn new(e: &GridEnergy) -> Self {
        let n = e.len();
        let mut b = GraphBuilder::new(n);
        let unary = e.unary.as_slice().to_vec();
        for (i, c) in unary.iter().enumerate() {
            // fg = source side pays the sink link, bg pays the source link
            b.add_terminal(i, c[0], c[1]);
        }
        for edge in &e.edges {
            if edge.weight > 0.0 {
                b.add_edge(edge.p as usize, edge.q as usize, edge.weight, edge.weight);
            }
        }
        Self {
            width: e.width(),
            height: e.height(),
            unary,
            flow: b.build(),
        }
    }

    pub fn unary(&self, i: usize) -> [f64; 2] {
        self.unary[i]
    }

    pub fn set_unary(&mut self, i: usize, costs: [f64; 2]) {
        let old = self.unary[i];
        self.flow
            .add_terminal(i, costs[0] - old[0], costs[1] - old[1]);
        self.unary[i] = costs;
    }

    /// Forces pixel `i` to `label` with a [`CLAMP`] cost on the other label.
    pub fn clamp(&mut self, i: usize, label: Label) {
        let mut c = [CLAMP; 2];
        c[label.index()] = 0.0;
        self.set_unary(i, c);
    }

    pub fn solve(&mut self) -> LabelMap {
        self.flow.solve();
        let side = self.flow.source_side();
        Grid::from_vec(
            self.width,
            self.height,
            side.into_iter().map(Label::from_bool).collect(),
        )
        .expect("solver shape")
    }
}

pub fn minimize(e: &GridEnergy) -> (LabelMap, f64) {
    let y = GridSolver::new(e).solve();
    let v = e.evaluate(&y);
    (y, v)
}

fn clamp_costs(label: Label) -> [f64; 2] {
    let mut c = [CLAMP; 2];
    c[label.index()] = 0.0;
    c
}

/// Minimizes over labelings that honor every seed of `clamp`. The returned
/// value is `E(y)` on the unclamped energy.
pub fn minimize_clamped(e: &GridEnergy, clamp: &Trimap) -> (LabelMap, f64) {
    minimize_constrained(e, Some(clamp), None)
}

/// Minimizes `E(y) - loss_weight · hamming(y, gt)`.
pub fn minimize_loss_augmented(e: &GridEnergy, gt: &LabelMap, loss_weight: f64) -> (LabelMap, f64) {
    minimize_constrained(e, None, Some((gt, loss_weight)))
}

/// Loss-augmented and clamped minimization composed: clamps win over the loss
/// term. Returns the labeling and `E(y) - loss_weight · hamming(y, gt)`.
pub fn minimize_constrained(
    e: &GridEnergy,
    clamp: Option<&Trimap>,
    loss: Option<(&LabelMap, f64)>,
) -> (LabelMap, f64) {
    let modified = e.with_unaries(|i, c| {
        if let Some(l) = clamp.and_then(|t| t.as_slice()[i].label()) {
            return clamp_costs(l);
        }
        match loss {
            Some((gt, w)) => {
                let mut c = c;
                c[gt.as_slice()[i].flip().index()] -= w;
                c
            }
            None => c,
        }
    });
    let (y, _) = minimize(&modified);
    let mut v = e.evaluate(&y);
    if let Some((gt, w)) = loss {
        v -= w * y.hamming(gt) as f64;
    }
    (y, v)
}

/// `MM(p, l) = min_{y : y_p = l} E(y)` for every pixel.
pub fn min_marginals(e: &GridEnergy) -> Grid<[f64; 2]> {
    let all: Vec<usize> = (0..e.len()).collect();
    let mm = min_marginals_at(e, &all);
    Grid::from_vec(e.width(), e.height(), mm).expect("shape")
}

/// Min-marginals for the listed pixels, reusing the solved flow of the
/// unconstrained problem for each clamped re-solve.
pub fn min_marginals_at(e: &GridEnergy, pixels: &[usize]) -> Vec<[f64; 2]> {
    let mut base = GridSolver::new(e);
    let y_star = base.solve();
    let e_min = e.evaluate(&y_star);
    pixels
        .iter()
        .map(|&i| {
            let best = y_star.as_slice()[i];
            let other = best.flip();
            let mut s = base.clone();
            s.clamp(i, other);
            let y = s.solve();
            let mut mm = [0.0; 2];
            mm[best.index()] = e_min;
            mm[other.index()] = e.evaluate(&y);
            mm
        })
        .collect()
}

/// Min-marginals by independent cold solves, without flow reuse.
pub fn min_marginals_cold(e: &GridEnergy) -> Grid<[f64; 2]> {
    let n = e.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut mm = [0.0; 2];
        for l in [Label::Bg, Label::Fg] {
            let mut tri = Trimap::unlabeled(e.width(), e.height());
            tri.as_mut_slice()[i] = Mark::seed(l);
            mm[l.index()] = minimize_clamped(e, &tri).1;
        }
        out.push(mm);
    }
    Grid::from_vec(e.width(), e.height(), out).expect("shape")
}

/// Convenience for callers holding pixel coordinates.
pub fn pixel_index(e: &GridEnergy, p: Pixel) -> usize {
    p.y * e.width() + p.x
}
