//! The interactive systems: GCS, GC, GCA and GEO behind one session interface.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::color::{
    likelihood_ratio_field, refit_from_segmentation, unaries_from_trimap, ColorFit, UnaryField,
    DEFAULT_GMM_K,
};
use crate::energy::{build_energy, minimize, GridEnergy, GridSolver, Params};
use crate::error::{Error, Result};
use crate::grid::{BrushStroke, Connectivity, Grid, Label, LabelMap, Mark, RgbImage, Trimap};
use crate::morphology::connected_components;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum System {
    /// Graph cut with unaries frozen from the initial strokes.
    Gcs,
    /// Graph cut with iterated color re-estimation.
    Gc,
    /// GC followed by removal of fg islands without a fg stroke.
    Gca,
    /// Geodesic distance labeling on the likelihood-ratio field.
    Geo,
}

impl System {
    pub const ALL: [System; 4] = [System::Gcs, System::Gc, System::Gca, System::Geo];

    pub fn name(self) -> &'static str {
        match self {
            System::Gcs => "GCS",
            System::Gc => "GC",
            System::Gca => "GCA",
            System::Geo => "GEO",
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown system {s:?}")))
    }
}

pub const DEFAULT_GC_ITERATIONS: usize = 4;
pub const DEFAULT_GEO_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub system: System,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "default_k")]
    pub gmm_k: usize,
    #[serde(default)]
    pub gmm_seed: u64,
    #[serde(default = "default_iters")]
    pub gc_iterations: usize,
    /// Per-step length added to GEO path costs.
    #[serde(default = "default_geo_step")]
    pub geo_step: f64,
    /// GCS re-solves reuse the previous flow.
    #[serde(default = "default_true")]
    pub recycle: bool,
}

fn default_k() -> usize {
    DEFAULT_GMM_K
}
fn default_iters() -> usize {
    DEFAULT_GC_ITERATIONS
}
fn default_geo_step() -> f64 {
    DEFAULT_GEO_STEP
}
fn default_true() -> bool {
    true
}

impl SegmenterConfig {
    pub fn new(system: System, params: Params) -> Self {
        Self {
            system,
            params,
            gmm_k: DEFAULT_GMM_K,
            gmm_seed: 0,
            gc_iterations: DEFAULT_GC_ITERATIONS,
            geo_step: DEFAULT_GEO_STEP,
            recycle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.gmm_k == 0 || self.gc_iterations == 0 || !(self.geo_step >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid segmenter config {self:?}"
            )));
        }
        Ok(())
    }
}

/// What robot policies and evaluators need from a system.
pub trait Segmenter: Send {
    fn trimap(&self) -> &Trimap;

    fn add_stroke(&mut self, stroke: &BrushStroke) -> Result<()>;

    fn segment(&mut self) -> Result<LabelMap>;

    /// Frozen-unary graph-cut state, for policies that simulate strokes.
    fn gcs(&self) -> Option<&GcsState> {
        None
    }
}

/// Frozen GCS energy plus a solver carrying the current stroke clamps.
#[derive(Clone, Debug)]
pub struct GcsState {
    energy: GridEnergy,
    solver: GridSolver,
    recycle: bool,
}

impl GcsState {
    /// Solver state for `energy` with the seeds of `tri` clamped.
    pub fn new(energy: GridEnergy, tri: &Trimap, recycle: bool) -> Self {
        let mut solver = GridSolver::new(&energy);
        for (i, m) in tri.as_slice().iter().enumerate() {
            if let Some(l) = m.label() {
                solver.clamp(i, l);
            }
        }
        Self {
            energy,
            solver,
            recycle,
        }
    }

    /// The frozen energy, without stroke clamps.
    pub fn energy(&self) -> &GridEnergy {
        &self.energy
    }

    /// The frozen energy with the clamps of `tri`.
    pub fn clamped_energy(&self, tri: &Trimap) -> GridEnergy {
        let unary = self.energy.unary.with_seed_clamps(tri);
        GridEnergy {
            unary,
            edges: self.energy.edges.clone(),
            beta: self.energy.beta,
        }
    }

    fn apply(&mut self, stroke: &BrushStroke) {
        for p in &stroke.pixels {
            self.solver
                .clamp(p.y * self.energy.width() + p.x, stroke.label);
        }
    }

    fn solve(&mut self, tri: &Trimap) -> LabelMap {
        if !self.recycle {
            self.solver = GcsState::new(self.energy.clone(), tri, false).solver;
        }
        self.solver.solve()
    }

    /// The segmentation after an extra stroke, leaving the state untouched.
    pub fn simulate(&self, stroke: &BrushStroke) -> LabelMap {
        let mut s = self.solver.clone();
        for p in &stroke.pixels {
            s.clamp(p.y * self.energy.width() + p.x, stroke.label);
        }
        s.solve()
    }

    /// Min-marginal pairs `[MM(p, bg), MM(p, fg)]` of the clamped energy for
    /// the listed pixels.
    pub fn min_marginals(&self, tri: &Trimap, pixels: &[usize]) -> Vec<[f64; 2]> {
        let e = self.clamped_energy(tri);
        let mut base = self.solver.clone();
        let y = base.solve();
        let e_min = e.evaluate(&y);
        pixels
            .iter()
            .map(|&i| {
                let best = y.as_slice()[i];
                let mut s = base.clone();
                s.clamp(i, best.flip());
                let alt = s.solve();
                let mut mm = [0.0; 2];
                mm[best.index()] = e_min;
                mm[best.flip().index()] = e.evaluate(&alt);
                mm
            })
            .collect()
    }
}

/// A frozen-unary graph cut over a given energy.
#[derive(Clone, Debug)]
pub struct EnergySession {
    trimap: Trimap,
    gcs: GcsState,
}

impl EnergySession {
    pub fn new(energy: GridEnergy, trimap: Trimap) -> Result<Self> {
        if energy.width() != trimap.width() || energy.height() != trimap.height() {
            return Err(Error::Dimensions("energy vs trimap".into()));
        }
        let gcs = GcsState::new(energy, &trimap, true);
        Ok(Self { trimap, gcs })
    }
}

impl Segmenter for EnergySession {
    fn trimap(&self) -> &Trimap {
        &self.trimap
    }

    fn add_stroke(&mut self, stroke: &BrushStroke) -> Result<()> {
        self.trimap.apply_stroke(stroke);
        self.gcs.apply(stroke);
        Ok(())
    }

    fn segment(&mut self) -> Result<LabelMap> {
        Ok(self.gcs.solve(&self.trimap))
    }

    fn gcs(&self) -> Option<&GcsState> {
        Some(&self.gcs)
    }
}

#[derive(Clone, Debug)]
enum State {
    Gcs(GcsState),
    Gc { fit: ColorFit },
    Geo { fit: ColorFit, field: Grid<f64> },
}

#[derive(Clone, Debug)]
pub struct SegmenterSession {
    config: SegmenterConfig,
    image: Arc<RgbImage>,
    trimap: Trimap,
    state: State,
}

pub fn start_session(
    img: Arc<RgbImage>,
    initial: Trimap,
    config: SegmenterConfig,
) -> Result<SegmenterSession> {
    config.validate()?;
    img.ensure_same_shape(&initial, "image vs trimap")?;
    initial.require_both_seeds()?;
    let fit = unaries_from_trimap(&img, &initial, config.gmm_k, config.gmm_seed)?;
    let state = match config.system {
        System::Gcs => {
            let energy = build_energy(&img, &fit.raw, &config.params)?;
            State::Gcs(GcsState::new(energy, &initial, config.recycle))
        }
        System::Gc | System::Gca => State::Gc { fit },
        System::Geo => {
            let field = likelihood_ratio_field(&img, &fit.fg, &fit.bg);
            State::Geo { fit, field }
        }
    };
    Ok(SegmenterSession {
        config,
        image: img,
        trimap: initial,
        state,
    })
}

impl SegmenterSession {
    pub fn config(&self) -> &SegmenterConfig {
        &self.config
    }

    pub fn image(&self) -> &Arc<RgbImage> {
        &self.image
    }

    /// Latest fitted color models (GC, GCA, GEO), or the frozen initial
    /// unaries' source for GCS.
    pub fn color_fit(&self) -> Option<&ColorFit> {
        match &self.state {
            State::Gcs(_) => None,
            State::Gc { fit } | State::Geo { fit, .. } => Some(fit),
        }
    }

    /// The GCS unaries with the current stroke clamps.
    pub fn gcs_unaries(&self) -> Option<UnaryField> {
        match &self.state {
            State::Gcs(g) => Some(g.energy.unary.with_seed_clamps(&self.trimap)),
            _ => None,
        }
    }

    pub fn geo_field(&self) -> Option<&Grid<f64>> {
        match &self.state {
            State::Geo { field, .. } => Some(field),
            _ => None,
        }
    }

    /// Once strokes have overwritten every seed of one label, the color
    /// models cannot be refit and the remaining label wins everywhere.
    fn graph_cut(&mut self) -> Result<LabelMap> {
        if !self.trimap.has_both_seeds() {
            let only = Label::from_bool(self.trimap.seed_count(Label::Fg) > 0);
            return Ok(Grid::filled(
                self.trimap.width(),
                self.trimap.height(),
                only,
            ));
        }
        let cfg = &self.config;
        let img = &*self.image;
        let mut fit = unaries_from_trimap(img, &self.trimap, cfg.gmm_k, cfg.gmm_seed)?;
        let mut y = minimize(&build_energy(img, &fit.unary, &cfg.params)?).0;
        for _ in 1..cfg.gc_iterations {
            fit = refit_from_segmentation(img, &y, &self.trimap, cfg.gmm_k, cfg.gmm_seed)?;
            y = minimize(&build_energy(img, &fit.unary, &cfg.params)?).0;
        }
        self.state = State::Gc { fit };
        Ok(y)
    }
}

impl Segmenter for SegmenterSession {
    fn trimap(&self) -> &Trimap {
        &self.trimap
    }

    fn add_stroke(&mut self, stroke: &BrushStroke) -> Result<()> {
        let (w, h) = (self.trimap.width(), self.trimap.height());
        if let Some(p) = stroke.pixels.iter().find(|p| p.x >= w || p.y >= h) {
            return Err(Error::OutOfBounds {
                x: p.x as i64,
                y: p.y as i64,
                width: w,
                height: h,
            });
        }
        self.trimap.apply_stroke(stroke);
        match &mut self.state {
            State::Gcs(g) => g.apply(stroke),
            State::Gc { .. } => {}
            State::Geo { fit, field } => {
                if self.trimap.has_both_seeds() {
                    let cfg = &self.config;
                    *fit = unaries_from_trimap(&self.image, &self.trimap, cfg.gmm_k, cfg.gmm_seed)?;
                    *field = likelihood_ratio_field(&self.image, &fit.fg, &fit.bg);
                }
            }
        }
        Ok(())
    }

    fn segment(&mut self) -> Result<LabelMap> {
        match self.config.system {
            System::Gcs => match &mut self.state {
                State::Gcs(g) => Ok(g.solve(&self.trimap)),
                _ => unreachable!(),
            },
            System::Gc => self.graph_cut(),
            System::Gca => {
                let y = self.graph_cut()?;
                Ok(remove_fg_islands(&y, &self.trimap))
            }
            System::Geo => match &self.state {
                State::Geo { field, .. } => Ok(geodesic_segmentation(
                    field,
                    &self.trimap,
                    self.config.geo_step,
                )),
                _ => unreachable!(),
            },
        }
    }

    fn gcs(&self) -> Option<&GcsState> {
        match &self.state {
            State::Gcs(g) => Some(g),
            _ => None,
        }
    }
}

/// Flips to bg every 4-connected fg component that holds no FgSeed pixel.
pub fn remove_fg_islands(seg: &LabelMap, tri: &Trimap) -> LabelMap {
    let mut out = seg.clone();
    for comp in connected_components(&seg.mask_of(Label::Fg), Connectivity::Four) {
        if !comp.pixels.iter().any(|&p| *tri.get(p) == Mark::FgSeed) {
            for &p in &comp.pixels {
                out.set(p, Label::Bg);
            }
        }
    }
    out
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source geodesic distance on the 8-connected grid. A step from `p`
/// to `q` costs `|field(p) - field(q)| + step`.
pub fn geodesic_distance(field: &Grid<f64>, sources: &[usize], step: f64) -> Grid<f64> {
    let mut dist = Grid::filled(field.width(), field.height(), f64::INFINITY);
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist.as_mut_slice()[s] = 0.0;
        heap.push(Entry(0.0, s));
    }
    let f = field.as_slice();
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist.as_slice()[i] {
            continue;
        }
        let p = field.pixel(i);
        for q in field.neighbors(p, Connectivity::Eight) {
            let j = field.index(q);
            let nd = d + (f[i] - f[j]).abs() + step;
            if nd < dist.as_slice()[j] {
                dist.as_mut_slice()[j] = nd;
                heap.push(Entry(nd, j));
            }
        }
    }
    dist
}

/// fg where the geodesic distance to the fg seeds is strictly smaller than to
/// the bg seeds. Seed pixels keep their own label.
pub fn geodesic_segmentation(field: &Grid<f64>, tri: &Trimap, step: f64) -> LabelMap {
    let seeds = |m: Mark| -> Vec<usize> {
        tri.as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == m)
            .map(|(i, _)| i)
            .collect()
    };
    let d_fg = geodesic_distance(field, &seeds(Mark::FgSeed), step);
    let d_bg = geodesic_distance(field, &seeds(Mark::BgSeed), step);
    Grid::from_fn(field.width(), field.height(), |p| {
        let i = field.index(p);
        match tri.as_slice()[i].label() {
            Some(l) => l,
            None => Label::from_bool(d_fg.as_slice()[i] < d_bg.as_slice()[i]),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pixel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_blob() -> (Arc<RgbImage>, LabelMap, Trimap) {
        let (w, h) = (24, 16);
        let gt = Grid::from_fn(w, h, |p| {
            Label::from_bool((4..10).contains(&p.x) && (4..12).contains(&p.y))
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Grid::from_fn(w, h, |p| {
            // a fg-colored distractor blob on the right
            let fgc =
                *gt.get(p) == Label::Fg || ((15..20).contains(&p.x) && (5..10).contains(&p.y));
            let base = if fgc {
                [0.9, 0.2, 0.2]
            } else {
                [0.1, 0.3, 0.8]
            };
            base.map(|c: f64| (c + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0))
        });
        let mut tri = Trimap::unlabeled(w, h);
        tri.set(Pixel::new(6, 7), Mark::FgSeed);
        tri.set(Pixel::new(7, 8), Mark::FgSeed);
        tri.set(Pixel::new(1, 1), Mark::BgSeed);
        tri.set(Pixel::new(22, 14), Mark::BgSeed);
        (Arc::new(img), gt, tri)
    }

    fn config(system: System) -> SegmenterConfig {
        SegmenterConfig::new(system, Params::new(0.5, 0.5, 1.0))
    }

    #[test]
    fn missing_seed_is_an_error() {
        let (img, _, _) = two_blob();
        let mut tri = Trimap::unlabeled(img.width(), img.height());
        tri.set(Pixel::new(0, 0), Mark::FgSeed);
        for s in System::ALL {
            assert!(matches!(
                start_session(img.clone(), tri.clone(), config(s)),
                Err(Error::MissingSeeds(Label::Bg))
            ));
        }
    }

    #[test]
    fn covering_stroke_leaves_one_label() {
        let (img, _, tri) = two_blob();
        for s in System::ALL {
            let mut sess = start_session(img.clone(), tri.clone(), config(s)).unwrap();
            sess.add_stroke(&BrushStroke::disk(Label::Fg, Pixel::new(12, 8), 30, 24, 16).unwrap())
                .unwrap();
            assert_eq!(
                sess.segment().unwrap().count(Label::Fg),
                24 * 16,
                "{}",
                s.name()
            );
        }
    }

    #[test]
    fn outputs_honor_seeds() {
        let (img, _, tri) = two_blob();
        for s in System::ALL {
            let mut sess = start_session(img.clone(), tri.clone(), config(s)).unwrap();
            sess.add_stroke(&BrushStroke::disk(Label::Bg, Pixel::new(17, 7), 1, 24, 16).unwrap())
                .unwrap();
            let y = sess.segment().unwrap();
            for (m, l) in sess.trimap().as_slice().iter().zip(y.as_slice()) {
                if let Some(s) = m.label() {
                    assert_eq!(s, *l);
                }
            }
        }
    }

    #[test]
    fn gca_removes_the_spurious_island() {
        let (img, gt, tri) = two_blob();
        let mut gc = start_session(img.clone(), tri.clone(), config(System::Gc)).unwrap();
        let mut gca = start_session(img, tri, config(System::Gca)).unwrap();
        let y_gc = gc.segment().unwrap();
        let y_gca = gca.segment().unwrap();
        assert!(y_gca.hamming(&gt) < y_gc.hamming(&gt));
        for comp in connected_components(&y_gca.mask_of(Label::Fg), Connectivity::Four) {
            assert!(comp
                .pixels
                .iter()
                .any(|&p| *gca.trimap().get(p) == Mark::FgSeed));
        }
    }

    #[test]
    fn gc_is_deterministic() {
        let (img, _, tri) = two_blob();
        let a = start_session(img.clone(), tri.clone(), config(System::Gc))
            .unwrap()
            .segment()
            .unwrap();
        let b = start_session(img, tri, config(System::Gc))
            .unwrap()
            .segment()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gcs_unaries_stay_frozen() {
        let (img, _, tri) = two_blob();
        let mut sess = start_session(img.clone(), tri.clone(), config(System::Gcs)).unwrap();
        let initial = unaries_from_trimap(&img, &tri, DEFAULT_GMM_K, 0).unwrap();
        let stroke = BrushStroke::disk(Label::Fg, Pixel::new(17, 7), 2, 24, 16).unwrap();
        sess.add_stroke(&stroke).unwrap();
        let mut t2 = tri.clone();
        t2.apply_stroke(&stroke);
        assert_eq!(
            sess.gcs_unaries().unwrap(),
            initial.raw.with_seed_clamps(&t2)
        );
    }

    #[test]
    fn gcs_incremental_matches_fresh_solve() {
        let (img, _, tri) = two_blob();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for recycle in [true, false] {
            let mut cfg = config(System::Gcs);
            cfg.recycle = recycle;
            let mut sess = start_session(img.clone(), tri.clone(), cfg.clone()).unwrap();
            let energy = sess.gcs().unwrap().energy().clone();
            sess.segment().unwrap();
            for _ in 0..8 {
                let c = Pixel::new(rng.gen_range(0..24), rng.gen_range(0..16));
                let l = if rng.gen() { Label::Fg } else { Label::Bg };
                sess.add_stroke(&BrushStroke::disk(l, c, rng.gen_range(0..3), 24, 16).unwrap())
                    .unwrap();
                let y = sess.segment().unwrap();
                let clamped = sess.gcs().unwrap().clamped_energy(sess.trimap());
                let (_, best) = minimize(&clamped);
                assert!((clamped.evaluate(&y) - best).abs() < 1e-6);
                let (y_ref, _) = crate::energy::minimize_clamped(&energy, sess.trimap());
                assert!((clamped.evaluate(&y_ref) - best).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gcs_full_clamp_returns_strokes() {
        let (img, gt, tri) = two_blob();
        let mut sess = start_session(img, tri, config(System::Gcs)).unwrap();
        for (i, l) in gt.as_slice().iter().enumerate() {
            let p = gt.pixel(i);
            sess.add_stroke(&BrushStroke::disk(*l, p, 0, 24, 16).unwrap())
                .unwrap();
        }
        assert_eq!(sess.segment().unwrap(), gt);
    }

    #[test]
    fn overwrite_and_idempotence() {
        let (img, _, tri) = two_blob();
        let mut sess = start_session(img, tri, config(System::Gcs)).unwrap();
        let fg = BrushStroke::disk(Label::Fg, Pixel::new(12, 8), 2, 24, 16).unwrap();
        let bg = BrushStroke::disk(Label::Bg, Pixel::new(12, 8), 2, 24, 16).unwrap();
        sess.add_stroke(&fg).unwrap();
        let y1 = sess.segment().unwrap();
        sess.add_stroke(&fg).unwrap();
        assert_eq!(sess.segment().unwrap(), y1);
        sess.add_stroke(&bg).unwrap();
        assert!(bg
            .pixels
            .iter()
            .all(|&p| *sess.trimap().get(p) == Mark::BgSeed));
    }

    #[test]
    fn stroke_outside_is_rejected() {
        let (img, _, tri) = two_blob();
        let mut sess = start_session(img, tri, config(System::Gc)).unwrap();
        let bad = BrushStroke {
            label: Label::Fg,
            center: Pixel::new(30, 3),
            radius: 0,
            pixels: vec![Pixel::new(30, 3)],
        };
        assert!(matches!(
            sess.add_stroke(&bad),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn geo_session_stores_ratio_field() {
        let (img, _, tri) = two_blob();
        let sess = start_session(img.clone(), tri.clone(), config(System::Geo)).unwrap();
        let fit = unaries_from_trimap(&img, &tri, DEFAULT_GMM_K, 0).unwrap();
        assert_eq!(
            sess.geo_field().unwrap(),
            &likelihood_ratio_field(&img, &fit.fg, &fit.bg)
        );
    }

    #[test]
    fn geo_uniform_field_ties_to_bg() {
        let field = Grid::filled(7, 5, 0.5);
        let mut tri = Trimap::unlabeled(7, 5);
        tri.set(Pixel::new(1, 1), Mark::FgSeed);
        tri.set(Pixel::new(5, 3), Mark::BgSeed);
        let y = geodesic_segmentation(&field, &tri, 0.0);
        assert_eq!(y.count(Label::Fg), 1);
        assert_eq!(*y.get(Pixel::new(1, 1)), Label::Fg);
    }

    #[test]
    fn geodesic_distance_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let field = Grid::from_fn(9, 7, |_| rng.gen::<f64>());
        let n = field.len();
        let all: Vec<Grid<f64>> = (0..n)
            .map(|s| geodesic_distance(&field, &[s], 1e-4))
            .collect();
        for _ in 0..300 {
            let (a, b, c) = (
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                rng.gen_range(0..n),
            );
            assert_eq!(all[a].as_slice()[a], 0.0);
            let ab = all[a].as_slice()[b];
            assert!((ab - all[b].as_slice()[a]).abs() < 1e-12);
            assert!(all[a].as_slice()[c] <= ab + all[b].as_slice()[c] + 1e-12);
        }
    }

    #[test]
    fn config_json() {
        let cfg: SegmenterConfig = serde_json::from_str(r#"{"system":"GCA"}"#).unwrap();
        assert_eq!(cfg, SegmenterConfig::new(System::Gca, Params::default()));
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SegmenterConfig>(&s).unwrap(), cfg);
    }
}
