//! Procedural datasets with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::color::{unaries_from_trimap, DEFAULT_GMM_K};
use crate::dataset::{make_tight_trimap, DatasetRecord};
use crate::error::Result;
use crate::grid::{disk_pixels, Grid, Label, LabelMap, Mark, Pixel, RgbImage, Trimap};
use crate::morphology::{distance_transform, squared_distance_to};

type Rgb = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    pub width: usize,
    pub height: usize,
    /// Standard deviation of the per-channel Gaussian noise.
    pub noise: f64,
    /// Minimum RGB distance between every fg and bg palette color.
    pub separation: f64,
    /// Fg-colored patches placed in the background.
    pub distractors: usize,
    pub brush_radius: u32,
    pub tight_band: u32,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            noise: 0.2,
            separation: 0.45,
            distractors: 3,
            brush_radius: 3,
            tight_band: 3,
        }
    }
}

fn color_dist(a: &Rgb, b: &Rgb) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn random_color(rng: &mut ChaCha8Rng) -> Rgb {
    std::array::from_fn(|_| rng.gen_range(0.1..0.9))
}

/// Two fg colors and two bg colors, each fg color at least `sep` from each bg color.
fn palette(rng: &mut ChaCha8Rng, sep: f64) -> [Rgb; 4] {
    loop {
        let c = [
            random_color(rng),
            random_color(rng),
            random_color(rng),
            random_color(rng),
        ];
        let ok = [(0, 2), (0, 3), (1, 2), (1, 3)]
            .iter()
            .all(|&(i, j)| color_dist(&c[i], &c[j]) >= sep)
            && color_dist(&c[0], &c[1]) >= 0.15
            && color_dist(&c[2], &c[3]) >= 0.15;
        if ok {
            return c;
        }
    }
}

fn in_ellipse(p: Pixel, c: (f64, f64), r: (f64, f64)) -> bool {
    let dx = (p.x as f64 - c.0) / r.0;
    let dy = (p.y as f64 - c.1) / r.1;
    dx * dx + dy * dy <= 1.0
}

fn add_noise(img: &mut RgbImage, rng: &mut ChaCha8Rng, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for px in img.as_mut_slice() {
        for c in px.iter_mut() {
            *c = (*c + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
}

fn paint_disk(tri: &mut Trimap, center: Pixel, radius: u32, mark: Mark) {
    for p in disk_pixels(center, radius, tri.width(), tri.height()) {
        tri.set(p, mark);
    }
}

/// Deepest pixel of `mask`, first in row-major order.
fn deepest(mask: &Grid<bool>) -> Pixel {
    let dt = distance_transform(mask);
    let (i, _) = dt
        .as_slice()
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
    mask.pixel(i)
}

/// Initial strokes: one fg disk at the deepest fg pixel and bg disks near
/// the top corners and the bottom middle, each shrunk to stay off the fg.
fn initial_brush(gt: &LabelMap, radius: u32) -> Trimap {
    let (w, h) = (gt.width(), gt.height());
    let mut tri = Trimap::unlabeled(w, h);
    let fg = gt.mask_of(Label::Fg);
    paint_disk(&mut tri, deepest(&fg), radius, Mark::FgSeed);
    let to_fg = squared_distance_to(&fg);
    let m = radius as usize + 1;
    for c in [
        Pixel::new(m, m),
        Pixel::new(w - 1 - m, m),
        Pixel::new(w / 2, h - 1 - m),
    ] {
        let d = to_fg.get(c).sqrt();
        if d > 1.0 {
            let r = radius.min(d.ceil() as u32 - 1);
            paint_disk(&mut tri, c, r, Mark::BgSeed);
        }
    }
    tri
}

/// A blob made of two overlapping ellipses; the second lobe and a bg band use
/// second palette colors that the initial strokes do not sample. Fg-colored
/// patches sit in the background.
pub fn synthetic_record(name: &str, seed: u64, opts: &SynthOptions) -> Result<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (opts.width, opts.height);
    let (wf, hf) = (w as f64, h as f64);
    let [f1, f2, b1, b2] = palette(&mut rng, opts.separation);
    let c1 = (rng.gen_range(0.38..0.55) * wf, rng.gen_range(0.4..0.6) * hf);
    let r1 = (
        rng.gen_range(0.13..0.2) * wf,
        rng.gen_range(0.18..0.26) * hf,
    );
    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let c2 = (
        c1.0 + side * r1.0 * rng.gen_range(0.8..1.2),
        c1.1 + rng.gen_range(-0.3..0.3) * r1.1,
    );
    let r2 = (
        r1.0 * rng.gen_range(0.75..1.0),
        r1.1 * rng.gen_range(0.75..1.0),
    );
    let gt: LabelMap = Grid::from_fn(w, h, |p| {
        Label::from_bool(in_ellipse(p, c1, r1) || in_ellipse(p, c2, r2))
    });
    let band_y = rng.gen_range(0.55..0.75) * hf;
    let mut img: RgbImage = Grid::from_fn(w, h, |p| {
        if *gt.get(p) == Label::Fg {
            if in_ellipse(p, c1, r1) {
                f1
            } else {
                f2
            }
        } else if (p.y as f64) > band_y {
            b2
        } else {
            b1
        }
    });
    let to_fg = squared_distance_to(&gt.mask_of(Label::Fg));
    let mut placed = 0;
    for _ in 0..200 {
        if placed == opts.distractors {
            break;
        }
        let r = rng.gen_range(2..=3u32);
        let c = Pixel::new(rng.gen_range(3..w - 3), rng.gen_range(3..h - 3));
        if to_fg.get(c).sqrt() < r as f64 + 5.0 {
            continue;
        }
        for p in disk_pixels(c, r, w, h) {
            img.set(p, f1);
        }
        placed += 1;
    }
    add_noise(&mut img, &mut rng, opts.noise);
    let brush = initial_brush(&gt, opts.brush_radius);
    let tight = make_tight_trimap(&gt, opts.tight_band);
    DatasetRecord::new(name, img, gt, brush, tight)
}

/// `n` records `synth-00`, `synth-01`, ... from consecutive seeds.
pub fn synthetic_suite(n: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    let opts = SynthOptions::default();
    (0..n)
        .map(|i| {
            synthetic_record(
                &format!("synth-{i:02}"),
                seed.wrapping_add(i as u64 * 7919),
                &opts,
            )
        })
        .collect()
}

/// A fg blob on the left and a fg-colored distractor blob on the right with
/// no fg stroke in it.
pub fn two_blob(seed: u64) -> Result<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (40, 28);
    let fg_c: Rgb = [0.85, 0.25, 0.2];
    let bg_c: Rgb = [0.2, 0.35, 0.75];
    let gt: LabelMap = Grid::from_fn(w, h, |p| {
        Label::from_bool(in_ellipse(p, (11.0, 14.0), (6.5, 8.0)))
    });
    let mut img: RgbImage = Grid::from_fn(w, h, |p| {
        if *gt.get(p) == Label::Fg || in_ellipse(p, (30.0, 14.0), (4.5, 5.5)) {
            fg_c
        } else {
            bg_c
        }
    });
    add_noise(&mut img, &mut rng, 0.06);
    let brush = initial_brush(&gt, 2);
    let tight = make_tight_trimap(&gt, 3);
    DatasetRecord::new("two-blob", img, gt, brush, tight)
}

/// Records where exactly one grid value of `w_i` labels every pixel
/// correctly, with `w_c = 0`.
#[derive(Clone, Debug)]
pub struct PlantedSuite {
    pub records: Vec<DatasetRecord>,
    pub grid: Vec<f64>,
    pub planted: f64,
    /// Per record, the open interval of `w_i` values with zero error.
    pub windows: Vec<(f64, f64)>,
}

/// Exact colors `A` and `B`; every pixel is seeded except two probes of
/// color `A`. A bg probe surrounded by bg seeds is right only for
/// `w_i > ΔU / (4 + 2√2)`; a fg probe touching a single fg seed diagonally
/// among bg seeds is right only for `w_i < ΔU / (4 + √2)`. `ΔU` is the unary
/// preference of color `A` for fg under the fitted models. The grid is
/// geometric with ratio 1.5, one point at the window's geometric middle.
pub fn planted_suite(n: usize, seed: u64) -> Result<PlantedSuite> {
    let a: Rgb = [0.8, 0.3, 0.2];
    let b: Rgb = [0.2, 0.4, 0.8];
    let (w, h) = (10, 8);
    let p1 = Pixel::new(8, 5);
    let p2 = Pixel::new(4, 4);
    let gt: LabelMap = Grid::from_fn(w, h, |p| Label::from_bool((p.x < 4 && p.y < 4) || p == p2));
    let mut tri: Trimap = gt.map(|&l| Mark::seed(l));
    tri.set(p1, Mark::Unlabeled);
    tri.set(p2, Mark::Unlabeled);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut windows = Vec::new();
    for k in 0..n {
        // 12 of 16 fg seeds and 16 of 62 bg seeds have color A
        let mut fg_seeds: Vec<usize> = (0..w * h)
            .filter(|&i| tri.as_slice()[i] == Mark::FgSeed)
            .collect();
        let mut bg_seeds: Vec<usize> = (0..w * h)
            .filter(|&i| tri.as_slice()[i] == Mark::BgSeed)
            .collect();
        shuffle(&mut fg_seeds, &mut rng);
        shuffle(&mut bg_seeds, &mut rng);
        let mut img: RgbImage = Grid::filled(w, h, b);
        for &i in fg_seeds.iter().take(12).chain(bg_seeds.iter().take(16)) {
            img.as_mut_slice()[i] = a;
        }
        img.set(p1, a);
        img.set(p2, a);
        let fit = unaries_from_trimap(&img, &tri, DEFAULT_GMM_K, 0)?;
        let u = fit.raw.as_slice()[img.index(p1)];
        let du = u[0] - u[1];
        windows.push((
            du / (4.0 + 2.0 * std::f64::consts::SQRT_2),
            du / (4.0 + std::f64::consts::SQRT_2),
        ));
        records.push(DatasetRecord::new(
            format!("planted-{k:02}"),
            img,
            gt.clone(),
            tri.clone(),
            tri.clone(),
        )?);
    }
    let (lo, hi) = windows.iter().fold((f64::MIN, f64::MAX), |acc, &(l, u)| {
        (acc.0.max(l), acc.1.min(u))
    });
    let planted = (lo * hi).sqrt();
    let grid = (0..30).map(|i| planted * 1.5f64.powi(i - 15)).collect();
    Ok(PlantedSuite {
        records,
        grid,
        planted,
        windows,
    })
}

fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_deterministic_and_valid() {
        let a = synthetic_suite(4, 9).unwrap();
        let b = synthetic_suite(4, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.gt, y.gt);
            assert!(x.brush.has_both_seeds());
            for (m, l) in x.brush.as_slice().iter().zip(x.gt.as_slice()) {
                if let Some(s) = m.label() {
                    assert_eq!(s, *l);
                }
            }
            let fg = x.gt.count(Label::Fg) as f64 / x.gt.len() as f64;
            assert!((0.05..0.5).contains(&fg), "fg fraction {fg}");
        }
    }

    #[test]
    fn planted_windows_overlap() {
        let s = planted_suite(10, 1).unwrap();
        for &(lo, hi) in &s.windows {
            assert!(lo > 0.0 && lo < s.planted && s.planted < hi);
            let i = s.grid.iter().position(|&g| g == s.planted).unwrap();
            assert!(s.grid[i - 1] < lo && s.grid[i + 1] > hi);
        }
    }
}
