//! Row-major pixel grids and the image, label and trimap types built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pixel coordinate, `x` is the column and `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: Pixel) -> usize {
        let dx = self.x.abs_diff(other.x);
        let dy = self.y.abs_diff(other.y);
        dx * dx + dy * dy
    }
}

/// A `width × height` grid stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!("empty grid {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Dimensions(format!(
                "grid {width}x{height} needs {} cells, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(Pixel) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(Pixel::new(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, p: Pixel) -> usize {
        p.y * self.width + p.x
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> Pixel {
        Pixel::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    pub fn get(&self, p: Pixel) -> &T {
        &self.data[p.y * self.width + p.x]
    }

    #[inline]
    pub fn set(&mut self, p: Pixel, value: T) {
        let i = self.index(p);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimensions(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// In-image neighbors of `p` (4- or 8-connectivity), in a fixed order.
    pub fn neighbors(
        &self,
        p: Pixel,
        connectivity: Connectivity,
    ) -> impl Iterator<Item = Pixel> + '_ {
        let offsets: &'static [(i64, i64)] = match connectivity {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        };
        offsets.iter().filter_map(move |&(dx, dy)| {
            let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
            self.contains(x, y)
                .then(|| Pixel::new(x as usize, y as usize))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// RGB image, each channel in `[0, 1]`.
pub type RgbImage = Grid<[f64; 3]>;

impl Grid<[f64; 3]> {
    /// Validating constructor: every channel must lie in `[0, 1]`.
    pub fn rgb(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if let Some(bad) = data.iter().flatten().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidInput(format!(
                "color channel {bad} outside [0,1]"
            )));
        }
        Self::from_vec(width, height, data)
    }
}

/// Segmentation label of one pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Label {
    Bg = 0,
    Fg = 1,
}

impl Label {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn flip(self) -> Label {
        match self {
            Label::Bg => Label::Fg,
            Label::Fg => Label::Bg,
        }
    }

    pub fn from_bool(fg: bool) -> Label {
        if fg {
            Label::Fg
        } else {
            Label::Bg
        }
    }
}

pub type LabelMap = Grid<Label>;

impl Grid<Label> {
    pub fn count(&self, label: Label) -> usize {
        self.as_slice().iter().filter(|&&l| l == label).count()
    }

    pub fn complement(&self) -> LabelMap {
        self.map(|l| l.flip())
    }

    /// Number of pixels where the two maps disagree.
    pub fn hamming(&self, other: &LabelMap) -> usize {
        debug_assert!(self.same_shape(other));
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn mask_of(&self, label: Label) -> BinaryMask {
        self.map(|&l| l == label)
    }
}

pub type BinaryMask = Grid<bool>;

impl Grid<bool> {
    pub fn popcount(&self) -> usize {
        self.as_slice().iter().filter(|&&b| b).count()
    }
}

/// A trimap cell: a user-provided seed or unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    BgSeed,
    FgSeed,
    Unlabeled,
}

impl Mark {
    pub fn seed(label: Label) -> Mark {
        match label {
            Label::Bg => Mark::BgSeed,
            Label::Fg => Mark::FgSeed,
        }
    }

    pub fn label(self) -> Option<Label> {
        match self {
            Mark::BgSeed => Some(Label::Bg),
            Mark::FgSeed => Some(Label::Fg),
            Mark::Unlabeled => None,
        }
    }
}

pub type Trimap = Grid<Mark>;

impl Grid<Mark> {
    pub fn unlabeled(width: usize, height: usize) -> Trimap {
        Grid::filled(width, height, Mark::Unlabeled)
    }

    pub fn seed_count(&self, label: Label) -> usize {
        let m = Mark::seed(label);
        self.as_slice().iter().filter(|&&x| x == m).count()
    }

    pub fn labeled_count(&self) -> usize {
        self.as_slice()
            .iter()
            .filter(|&&m| m != Mark::Unlabeled)
            .count()
    }

    pub fn has_both_seeds(&self) -> bool {
        self.seed_count(Label::Fg) > 0 && self.seed_count(Label::Bg) > 0
    }

    /// Error unless the trimap carries at least one seed of each label.
    pub fn require_both_seeds(&self) -> Result<()> {
        for label in [Label::Fg, Label::Bg] {
            if self.seed_count(label) == 0 {
                return Err(Error::MissingSeeds(label));
            }
        }
        Ok(())
    }

    /// Writes the stroke's pixels, later strokes overwrite earlier marks.
    pub fn apply_stroke(&mut self, stroke: &BrushStroke) {
        let m = Mark::seed(stroke.label);
        for &p in &stroke.pixels {
            self.set(p, m);
        }
    }
}

/// A circular brush stroke rasterized onto the pixel grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrushStroke {
    pub label: Label,
    pub center: Pixel,
    pub radius: u32,
    pub pixels: Vec<Pixel>,
}

impl BrushStroke {
    /// The closed disk of `radius` around `center`, clipped to a `width × height`
    /// image. A pixel is covered iff its squared distance to the center is at
    /// most `radius²`; radius 0 covers the center only.
    pub fn disk(
        label: Label,
        center: Pixel,
        radius: u32,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if center.x >= width || center.y >= height {
            return Err(Error::OutOfBounds {
                x: center.x as i64,
                y: center.y as i64,
                width,
                height,
            });
        }
        Ok(Self {
            label,
            center,
            radius,
            pixels: disk_pixels(center, radius, width, height),
        })
    }
}

/// Row-major list of the pixels within the closed disk, clipped to the image.
pub fn disk_pixels(center: Pixel, radius: u32, width: usize, height: usize) -> Vec<Pixel> {
    let r = radius as usize;
    let r2 = r * r;
    let y0 = center.y.saturating_sub(r);
    let y1 = (center.y + r).min(height - 1);
    let x0 = center.x.saturating_sub(r);
    let x1 = (center.x + r).min(width - 1);
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Pixel::new(x, y);
            if p.dist2(center) <= r2 {
                out.push(p);
            }
        }
    }
    out
}
