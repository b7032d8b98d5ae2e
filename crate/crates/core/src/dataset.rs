//! Dataset records, PNG file layout, downscaling and tight trimaps.
//!
//! A dataset directory holds, per image `<name>`:
//!
//! * `<name>.img.png`   8-bit RGB image
//! * `<name>.gt.png`    8-bit gray ground truth, 0 = bg, 255 = fg
//! * `<name>.brush.png` 8-bit gray static brush trimap, 0 = bg seed, 255 = fg seed, 128 = unlabeled
//! * `<name>.tight.png` optional, same encoding; regenerated from the ground truth when absent

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::imageops::FilterType;
use image::{GrayImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::grid::{Grid, Label, LabelMap, Mark, RgbImage, Trimap};
use crate::morphology::{dilate_disk, erode_disk};

/// Size every image is reduced to fit into.
pub const MAX_WIDTH: usize = 241;
pub const MAX_HEIGHT: usize = 161;
/// Default erosion/dilation band of the tight trimap.
pub const TIGHT_BAND: u32 = 7;

/// One image with its ground truth and the two static inputs.
#[derive(Clone, Debug)]
pub struct DatasetRecord {
    pub name: String,
    pub image: Arc<RgbImage>,
    pub gt: LabelMap,
    pub brush: Trimap,
    pub tight: Trimap,
}

impl DatasetRecord {
    pub fn new(
        name: impl Into<String>,
        image: RgbImage,
        gt: LabelMap,
        brush: Trimap,
        tight: Trimap,
    ) -> Result<Self> {
        let name = name.into();
        image.ensure_same_shape(&gt, &format!("{name}: image vs ground truth"))?;
        image.ensure_same_shape(&brush, &format!("{name}: image vs brush trimap"))?;
        image.ensure_same_shape(&tight, &format!("{name}: image vs tight trimap"))?;
        Ok(Self {
            name,
            image: Arc::new(image),
            gt,
            brush,
            tight,
        })
    }
}

/// Options for [`load_dataset_with`].
#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub max_width: usize,
    pub max_height: usize,
    pub tight_band: u32,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_width: MAX_WIDTH,
            max_height: MAX_HEIGHT,
            tight_band: TIGHT_BAND,
        }
    }
}

pub fn load_dataset(root: &Path) -> Result<Vec<DatasetRecord>> {
    load_dataset_with(root, &LoadOptions::default())
}

/// Loads every `<name>.img.png` under `root`, sorted by name.
pub fn load_dataset_with(root: &Path, opts: &LoadOptions) -> Result<Vec<DatasetRecord>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::Load {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })? {
        let entry = entry?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_suffix(".img.png") {
            names.push(name.to_string());
        }
    }
    names.sort();
    names
        .iter()
        .map(|name| load_record(root, name, opts))
        .collect()
}

fn path_for(root: &Path, name: &str, kind: &str) -> PathBuf {
    root.join(format!("{name}.{kind}.png"))
}

pub fn load_record(root: &Path, name: &str, opts: &LoadOptions) -> Result<DatasetRecord> {
    let image = read_rgb(&path_for(root, name, "img"))?;
    let gt_path = path_for(root, name, "gt");
    let gt = read_label_map(&gt_path)?;
    let brush_path = path_for(root, name, "brush");
    let brush = read_trimap(&brush_path)?;
    let tight_path = path_for(root, name, "tight");
    let tight = if tight_path.exists() {
        Some(read_trimap(&tight_path)?)
    } else {
        None
    };
    for (what, w, h) in [
        ("ground truth", gt.width(), gt.height()),
        ("brush trimap", brush.width(), brush.height()),
    ]
    .into_iter()
    .chain(
        tight
            .as_ref()
            .map(|t| ("tight trimap", t.width(), t.height())),
    ) {
        if (w, h) != (image.width(), image.height()) {
            return Err(Error::Dataset(format!(
                "{name}: {what} is {w}x{h} but image is {}x{}",
                image.width(),
                image.height()
            )));
        }
    }

    let image = downscale_max(&image, opts.max_width, opts.max_height);
    let (w, h) = (image.width(), image.height());
    let gt = resize_nearest(&gt, w, h);
    let brush = resize_nearest(&brush, w, h);
    let tight = match tight {
        Some(t) => resize_nearest(&t, w, h),
        None => make_tight_trimap(&gt, opts.tight_band),
    };
    DatasetRecord::new(name, image, gt, brush, tight)
}

/// Output size that fits `max_w × max_h` while keeping the aspect ratio,
/// rounding half up.
pub fn fitted_size(w: usize, h: usize, max_w: usize, max_h: usize) -> (usize, usize) {
    if w <= max_w && h <= max_h {
        return (w, h);
    }
    let s = (max_w as f64 / w as f64).min(max_h as f64 / h as f64);
    let nw = ((w as f64 * s + 0.5).floor() as usize).clamp(1, max_w);
    let nh = ((h as f64 * s + 0.5).floor() as usize).clamp(1, max_h);
    (nw, nh)
}

/// Bilinear downscaling so the image fits `max_w × max_h`; images that already
/// fit come back unchanged.
pub fn downscale_max(img: &RgbImage, max_w: usize, max_h: usize) -> RgbImage {
    assert!(max_w >= 1 && max_h >= 1, "maximum size must be positive");
    let (nw, nh) = fitted_size(img.width(), img.height(), max_w, max_h);
    if (nw, nh) == (img.width(), img.height()) {
        return img.clone();
    }
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
            let c = img.get(crate::grid::Pixel::new(x as usize, y as usize));
            Rgb([c[0] as f32, c[1] as f32, c[2] as f32])
        });
    let small = image::imageops::resize(&buf, nw as u32, nh as u32, FilterType::Triangle);
    Grid::from_fn(nw, nh, |p| {
        let c = small.get_pixel(p.x as u32, p.y as u32).0;
        [
            (c[0] as f64).clamp(0.0, 1.0),
            (c[1] as f64).clamp(0.0, 1.0),
            (c[2] as f64).clamp(0.0, 1.0),
        ]
    })
}

/// Nearest-neighbor resampling for label-valued grids.
pub fn resize_nearest<T: Clone>(grid: &Grid<T>, w: usize, h: usize) -> Grid<T> {
    if (w, h) == (grid.width(), grid.height()) {
        return grid.clone();
    }
    Grid::from_fn(w, h, |p| {
        let sx =
            (((p.x as f64 + 0.5) * grid.width() as f64 / w as f64) as usize).min(grid.width() - 1);
        let sy = (((p.y as f64 + 0.5) * grid.height() as f64 / h as f64) as usize)
            .min(grid.height() - 1);
        grid.get(crate::grid::Pixel::new(sx, sy)).clone()
    })
}

/// Tight trimap: fg eroded by `band` becomes fg seed, everything farther than
/// `band` from the fg becomes bg seed, the rest is unlabeled.
pub fn make_tight_trimap(gt: &LabelMap, band: u32) -> Trimap {
    let fg = gt.mask_of(Label::Fg);
    let core = erode_disk(&fg, band);
    let grown = dilate_disk(&fg, band);
    Grid::from_fn(gt.width(), gt.height(), |p| {
        if *core.get(p) {
            Mark::FgSeed
        } else if !*grown.get(p) {
            Mark::BgSeed
        } else {
            Mark::Unlabeled
        }
    })
}

fn load_err(path: &Path, e: impl ToString) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| load_err(path, e))?.to_rgb8();
    Ok(rgb_from_image(&img))
}

pub fn rgb_from_image(img: &image::RgbImage) -> RgbImage {
    Grid::from_fn(img.width() as usize, img.height() as usize, |p| {
        let c = img.get_pixel(p.x as u32, p.y as u32).0;
        [
            c[0] as f64 / 255.0,
            c[1] as f64 / 255.0,
            c[2] as f64 / 255.0,
        ]
    })
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path).map_err(|e| load_err(path, e))?.to_luma8())
}

pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    Ok(label_map_from_gray(&read_gray(path)?))
}

pub fn label_map_from_gray(g: &GrayImage) -> LabelMap {
    Grid::from_fn(g.width() as usize, g.height() as usize, |p| {
        Label::from_bool(g.get_pixel(p.x as u32, p.y as u32).0[0] >= 128)
    })
}

pub fn read_trimap(path: &Path) -> Result<Trimap> {
    Ok(trimap_from_gray(&read_gray(path)?))
}

/// 0 → bg seed, 255 → fg seed, anything else unlabeled.
pub fn trimap_from_gray(g: &GrayImage) -> Trimap {
    Grid::from_fn(g.width() as usize, g.height() as usize, |p| {
        match g.get_pixel(p.x as u32, p.y as u32).0[0] {
            0 => Mark::BgSeed,
            255 => Mark::FgSeed,
            _ => Mark::Unlabeled,
        }
    })
}

pub fn rgb_to_image(img: &RgbImage) -> image::RgbImage {
    ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let c = img.get(crate::grid::Pixel::new(x as usize, y as usize));
        Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
    })
}

pub fn label_map_to_gray(m: &LabelMap) -> GrayImage {
    ImageBuffer::from_fn(m.width() as u32, m.height() as u32, |x, y| {
        Luma([
            match m.get(crate::grid::Pixel::new(x as usize, y as usize)) {
                Label::Bg => 0,
                Label::Fg => 255,
            },
        ])
    })
}

pub fn trimap_to_gray(t: &Trimap) -> GrayImage {
    ImageBuffer::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        Luma([
            match t.get(crate::grid::Pixel::new(x as usize, y as usize)) {
                Mark::BgSeed => 0,
                Mark::FgSeed => 255,
                Mark::Unlabeled => 128,
            },
        ])
    })
}

fn save(img: impl FnOnce(&Path) -> image::ImageResult<()>, path: &Path) -> Result<()> {
    img(path).map_err(|e| load_err(path, e))
}

/// Writes a record in the on-disk layout (including the tight trimap).
pub fn write_record(root: &Path, rec: &DatasetRecord) -> Result<()> {
    std::fs::create_dir_all(root)?;
    save(
        |p| rgb_to_image(&rec.image).save(p),
        &path_for(root, &rec.name, "img"),
    )?;
    save(
        |p| label_map_to_gray(&rec.gt).save(p),
        &path_for(root, &rec.name, "gt"),
    )?;
    save(
        |p| trimap_to_gray(&rec.brush).save(p),
        &path_for(root, &rec.name, "brush"),
    )?;
    save(
        |p| trimap_to_gray(&rec.tight).save(p),
        &path_for(root, &rec.name, "tight"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pixel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solid(w: usize, h: usize) -> RgbImage {
        Grid::from_fn(w, h, |p| {
            [(p.x % 7) as f64 / 7.0, (p.y % 5) as f64 / 5.0, 0.5]
        })
    }

    #[test]
    fn downscale_keeps_small_images() {
        let img = solid(100, 100);
        assert_eq!(downscale_max(&img, MAX_WIDTH, MAX_HEIGHT), img);
    }

    #[test]
    fn downscale_sizes() {
        assert_eq!(fitted_size(482, 322, 241, 161), (241, 161));
        assert_eq!(fitted_size(1000, 200, 241, 161), (241, 48));
        let d = downscale_max(&solid(482, 322), 241, 161);
        assert_eq!((d.width(), d.height()), (241, 161));
    }

    #[test]
    fn downscale_is_idempotent() {
        let once = downscale_max(&solid(300, 90), 241, 161);
        assert_eq!(downscale_max(&once, 241, 161), once);
    }

    #[test]
    fn band_zero_copies_ground_truth() {
        let gt = Grid::from_fn(9, 9, |p| Label::from_bool(p.x > 3));
        let t = make_tight_trimap(&gt, 0);
        for (m, l) in t.as_slice().iter().zip(gt.as_slice()) {
            assert_eq!(m.label(), Some(*l));
        }
    }

    #[test]
    fn centered_square_leaves_single_core_pixel() {
        let gt = Grid::from_fn(31, 31, |p| {
            Label::from_bool((8..23).contains(&p.x) && (8..23).contains(&p.y))
        });
        let t = make_tight_trimap(&gt, 7);
        assert_eq!(t.seed_count(Label::Fg), 1);
        assert_eq!(*t.get(Pixel::new(15, 15)), Mark::FgSeed);
    }

    #[test]
    fn tight_trimap_matches_brute_force_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (cx, cy, r) = (
                rng.gen_range(8..24),
                rng.gen_range(8..24),
                rng.gen_range(3.0..10.0),
            );
            let gt = Grid::from_fn(32, 32, |p| {
                let d =
                    ((p.x as f64 - cx as f64).powi(2) + (p.y as f64 - cy as f64).powi(2)).sqrt();
                Label::from_bool(d < r || (p.x + p.y) % 13 == 0)
            });
            let t = make_tight_trimap(&gt, 7);
            for y in 0..32 {
                for x in 0..32 {
                    let p = Pixel::new(x, y);
                    let mut nearest_other = f64::INFINITY;
                    for yy in 0..32 {
                        for xx in 0..32 {
                            let q = Pixel::new(xx, yy);
                            if gt.get(q) != gt.get(p) {
                                nearest_other = nearest_other.min((p.dist2(q) as f64).sqrt());
                            }
                        }
                    }
                    let expect = if nearest_other > 7.0 {
                        Mark::seed(*gt.get(p))
                    } else {
                        Mark::Unlabeled
                    };
                    assert_eq!(*t.get(p), expect, "at {p:?}");
                }
            }
            // seeds agree with gt
            for (i, m) in t.as_slice().iter().enumerate() {
                if let Some(l) = m.label() {
                    assert_eq!(l, gt.as_slice()[i]);
                }
            }
        }
    }

    #[test]
    fn dataset_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let gt = Grid::from_fn(20, 10, |p| Label::from_bool(p.x >= 10));
        let mut brush = Trimap::unlabeled(20, 10);
        brush.set(Pixel::new(1, 1), Mark::BgSeed);
        brush.set(Pixel::new(15, 5), Mark::FgSeed);
        let rec = DatasetRecord::new(
            "a",
            solid(20, 10),
            gt.clone(),
            brush.clone(),
            make_tight_trimap(&gt, 2),
        )
        .unwrap();
        write_record(dir.path(), &rec).unwrap();
        std::fs::remove_file(dir.path().join("a.tight.png")).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].gt, gt);
        assert_eq!(loaded[0].brush, brush);
        assert_eq!(loaded[0].tight, make_tight_trimap(&gt, TIGHT_BAND));

        // mismatched mask size
        label_map_to_gray(&Grid::filled(100, 100, Label::Bg))
            .save(dir.path().join("a.gt.png"))
            .unwrap();
        rgb_to_image(&solid(50, 50))
            .save(dir.path().join("a.img.png"))
            .unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));

        // missing file names the path
        std::fs::remove_file(dir.path().join("a.brush.png")).unwrap();
        label_map_to_gray(&Grid::filled(50, 50, Label::Bg))
            .save(dir.path().join("a.gt.png"))
            .unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Load { path, .. }) => assert!(path.ends_with("a.brush.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn large_images_are_downscaled_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let gt = Grid::from_fn(482, 322, |p| Label::from_bool(p.x > 200));
        let rec = DatasetRecord::new(
            "big",
            solid(482, 322),
            gt.clone(),
            make_tight_trimap(&gt, 7),
            make_tight_trimap(&gt, 7),
        )
        .unwrap();
        write_record(dir.path(), &rec).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(
            (loaded[0].image.width(), loaded[0].image.height()),
            (241, 161)
        );
        assert_eq!((loaded[0].gt.width(), loaded[0].gt.height()), (241, 161));
    }
}
