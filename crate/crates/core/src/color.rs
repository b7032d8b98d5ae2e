//! Unary costs from fg/bg color mixtures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{fit_gmm, Color, Gmm};
use crate::grid::{Grid, Label, LabelMap, Mark, RgbImage, Trimap};

/// Stand-in for an infinite cost. Dominates any achievable cut on the image
/// sizes handled here while staying far from overflow.
pub const CLAMP: f64 = 1e8;

/// Default number of mixture components per label.
pub const DEFAULT_GMM_K: usize = 5;

const DENSITY_FLOOR: f64 = 1e-300;

/// Per-pixel costs `[cost(bg), cost(fg)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnaryField {
    costs: Grid<[f64; 2]>,
}

impl UnaryField {
    pub fn new(costs: Grid<[f64; 2]>) -> Result<Self> {
        if costs.as_slice().iter().flatten().any(|c| c.is_nan()) {
            return Err(Error::InvalidInput("NaN unary cost".into()));
        }
        Ok(Self { costs })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            costs: Grid::filled(width, height, [0.0; 2]),
        }
    }

    /// `-log Pr(x_p | label)` for every pixel, capped at [`CLAMP`].
    pub fn from_models(img: &RgbImage, fg: &Gmm, bg: &Gmm) -> Self {
        let costs: Vec<[f64; 2]> = img
            .as_slice()
            .par_iter()
            .map(|x| [neg_log(bg, x), neg_log(fg, x)])
            .collect();
        Self {
            costs: Grid::from_vec(img.width(), img.height(), costs).expect("shape"),
        }
    }

    pub fn width(&self) -> usize {
        self.costs.width()
    }

    pub fn height(&self) -> usize {
        self.costs.height()
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn grid(&self) -> &Grid<[f64; 2]> {
        &self.costs
    }

    #[inline]
    pub fn cost(&self, index: usize, label: Label) -> f64 {
        self.costs.as_slice()[index][label.index()]
    }

    pub fn set(&mut self, index: usize, costs: [f64; 2]) {
        self.costs.as_mut_slice()[index] = costs;
    }

    pub fn as_slice(&self) -> &[[f64; 2]] {
        self.costs.as_slice()
    }

    /// Pins one pixel: zero cost for `label`, [`CLAMP`] for the other.
    pub fn clamp_pixel(&mut self, index: usize, label: Label) {
        let mut c = [CLAMP; 2];
        c[label.index()] = 0.0;
        self.costs.as_mut_slice()[index] = c;
    }

    /// Copy with every seed pixel of `tri` clamped to its seed label.
    pub fn with_seed_clamps(&self, tri: &Trimap) -> Self {
        let mut out = self.clone();
        for (i, m) in tri.as_slice().iter().enumerate() {
            if let Some(l) = m.label() {
                out.clamp_pixel(i, l);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            costs: self.costs.map(|c| [c[0] * s, c[1] * s]),
        }
    }

    /// Label with the lower cost per pixel, ties to bg.
    pub fn argmin(&self) -> LabelMap {
        self.costs.map(|c| Label::from_bool(c[1] < c[0]))
    }
}

fn neg_log(g: &Gmm, x: &Color) -> f64 {
    let v = -g.log_density(x);
    if v.is_nan() {
        CLAMP
    } else {
        v.min(CLAMP)
    }
}

/// Models plus the unaries they induce.
#[derive(Clone, Debug)]
pub struct ColorFit {
    /// Unaries with seed pixels clamped.
    pub unary: UnaryField,
    /// Unaries before clamping.
    pub raw: UnaryField,
    pub fg: Gmm,
    pub bg: Gmm,
    /// Set when the segmentation had only one label and the fit fell back to the trimap.
    pub fell_back: bool,
}

fn fit_pair(
    img: &RgbImage,
    fg_px: &[Color],
    bg_px: &[Color],
    tri: &Trimap,
    k: usize,
    seed: u64,
) -> Result<ColorFit> {
    let fg = fit_gmm(fg_px, k, seed)?;
    let bg = fit_gmm(bg_px, k, seed.wrapping_add(0x9e37_79b9))?;
    let raw = UnaryField::from_models(img, &fg, &bg);
    Ok(ColorFit {
        unary: raw.with_seed_clamps(tri),
        raw,
        fg,
        bg,
        fell_back: false,
    })
}

fn seed_colors(img: &RgbImage, tri: &Trimap, mark: Mark) -> Vec<Color> {
    img.as_slice()
        .iter()
        .zip(tri.as_slice())
        .filter(|(_, &m)| m == mark)
        .map(|(c, _)| *c)
        .collect()
}

/// Fits fg/bg mixtures on the seed pixels of `tri`.
pub fn unaries_from_trimap(img: &RgbImage, tri: &Trimap, k: usize, seed: u64) -> Result<ColorFit> {
    img.ensure_same_shape(tri, "image vs trimap")?;
    tri.require_both_seeds()?;
    let fg = seed_colors(img, tri, Mark::FgSeed);
    let bg = seed_colors(img, tri, Mark::BgSeed);
    fit_pair(img, &fg, &bg, tri, k, seed)
}

/// Fits fg/bg mixtures on the two sides of a full segmentation and re-applies
/// the seed clamps of `tri`. A single-label segmentation falls back to the
/// trimap fit and sets `fell_back`.
pub fn refit_from_segmentation(
    img: &RgbImage,
    seg: &LabelMap,
    tri: &Trimap,
    k: usize,
    seed: u64,
) -> Result<ColorFit> {
    img.ensure_same_shape(seg, "image vs segmentation")?;
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (c, l) in img.as_slice().iter().zip(seg.as_slice()) {
        match l {
            Label::Fg => fg.push(*c),
            Label::Bg => bg.push(*c),
        }
    }
    if fg.is_empty() || bg.is_empty() {
        let mut fit = unaries_from_trimap(img, tri, k, seed)?;
        fit.fell_back = true;
        return Ok(fit);
    }
    fit_pair(img, &fg, &bg, tri, k, seed)
}

/// Normalized fg probability `Pr(x|fg) / (Pr(x|fg) + Pr(x|bg))` per pixel.
pub fn likelihood_ratio_field(img: &RgbImage, fg: &Gmm, bg: &Gmm) -> Grid<f64> {
    img.map(|x| {
        let pf = fg.density(x).max(DENSITY_FLOOR);
        let pb = bg.density(x).max(DENSITY_FLOOR);
        pf / (pf + pb)
    })
}
