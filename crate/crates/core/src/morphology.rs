//! Connected components, exact Euclidean distance transforms and disk morphology.

use std::collections::VecDeque;

use crate::grid::{BinaryMask, Connectivity, Grid, Pixel};

/// One connected region of a binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// Member pixels in row-major order.
    pub pixels: Vec<Pixel>,
}

impl Component {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.pixels.contains(&p)
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = Grid::filled(width, height, false);
        for &p in &self.pixels {
            m.set(p, true);
        }
        m
    }
}

/// Labels the `true` regions of `mask`. Components come back sorted by size,
/// largest first; equal sizes are ordered by their first row-major pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    let mut seen = vec![false; mask.len()];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if seen[start] || !mask.as_slice()[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let p = mask.pixel(i);
            for q in mask.neighbors(p, connectivity) {
                let j = mask.index(q);
                if !seen[j] && mask.as_slice()[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    // Discovery order is by first member, so a stable sort keeps that as the tie-break.
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    comps
        .into_iter()
        .map(|c| Component {
            pixels: c.into_iter().map(|i| mask.pixel(i)).collect(),
        })
        .collect()
}

const INF: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            let vk = v[k];
            if f[vk] >= INF {
                // Envelope so far consists only of an infinite parabola; replace it.
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
                z[k + 1] = f64::INFINITY;
                break;
            }
            let s = ((f[q] + (q * q) as f64) - (f[vk] + (vk * vk) as f64))
                / (2.0 * (q as f64 - vk as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let vk = v[k];
        *o = if f[vk] >= INF {
            INF
        } else {
            let d = q as f64 - vk as f64;
            d * d + f[vk]
        };
    }
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel of
/// `targets`. Pixels are `INF` (1e20) when `targets` is empty.
pub fn squared_distance_to(targets: &BinaryMask) -> Grid<f64> {
    let (w, h) = (targets.width(), targets.height());
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut grid: Vec<f64> = targets
        .as_slice()
        .iter()
        .map(|&t| if t { 0.0 } else { INF })
        .collect();
    // columns
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        dt_1d(&f[..h], &mut out[..h], &mut v[..h], &mut z[..=h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    // rows
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        dt_1d(&f[..w], &mut out[..w], &mut v[..w], &mut z[..=w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    Grid::from_vec(w, h, grid).expect("shape preserved")
}

/// Euclidean distance from each pixel to the nearest zero (`false`) pixel,
/// with the ring just outside the image counted as zero. Pixels outside the
/// mask get 0.
pub fn distance_transform(mask: &BinaryMask) -> Grid<f64> {
    let (w, h) = (mask.width(), mask.height());
    let padded = Grid::from_fn(w + 2, h + 2, |p| {
        if p.x == 0 || p.y == 0 || p.x == w + 1 || p.y == h + 1 {
            true
        } else {
            !*mask.get(Pixel::new(p.x - 1, p.y - 1))
        }
    });
    let d2 = squared_distance_to(&padded);
    Grid::from_fn(w, h, |p| d2.get(Pixel::new(p.x + 1, p.y + 1)).sqrt())
}

/// Erosion by the Euclidean disk of radius `band`: a pixel survives iff no
/// `false` pixel of the image lies within distance `band`.
pub fn erode_disk(mask: &BinaryMask, band: u32) -> BinaryMask {
    let outside = mask.map(|&b| !b);
    let d2 = squared_distance_to(&outside);
    let r2 = (band as f64) * (band as f64);
    Grid::from_fn(mask.width(), mask.height(), |p| {
        *mask.get(p) && *d2.get(p) > r2
    })
}

/// Dilation by the Euclidean disk of radius `band`.
pub fn dilate_disk(mask: &BinaryMask, band: u32) -> BinaryMask {
    let d2 = squared_distance_to(mask);
    let r2 = (band as f64) * (band as f64);
    d2.map(|&d| d <= r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryMask {
        Grid::from_fn(w, h, |_| rng.gen_bool(p))
    }

    /// Union-find labeling used as an independent oracle.
    fn union_find_components(mask: &BinaryMask, conn: Connectivity) -> Vec<Vec<Pixel>> {
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let n = mask.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if !mask.as_slice()[i] {
                continue;
            }
            for q in mask.neighbors(mask.pixel(i), conn) {
                let j = mask.index(q);
                if mask.as_slice()[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<Pixel>> = Default::default();
        for i in 0..n {
            if mask.as_slice()[i] {
                let r = find(&mut parent, i);
                groups.entry(r).or_default().push(mask.pixel(i));
            }
        }
        let mut out: Vec<Vec<Pixel>> = groups.into_values().collect();
        out.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then(mask.index(a[0]).cmp(&mask.index(b[0])))
        });
        out
    }

    fn brute_force_distance(mask: &BinaryMask) -> Grid<f64> {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        Grid::from_fn(mask.width(), mask.height(), |p| {
            if !*mask.get(p) {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for y in -1..=h {
                for x in -1..=w {
                    let zero =
                        !mask.contains(x, y) || !*mask.get(Pixel::new(x as usize, y as usize));
                    if zero {
                        let dx = x - p.x as i64;
                        let dy = y - p.y as i64;
                        best = best.min(((dx * dx + dy * dy) as f64).sqrt());
                    }
                }
            }
            best
        })
    }

    #[test]
    fn all_zeros_has_no_components() {
        let m = Grid::filled(5, 4, false);
        assert!(connected_components(&m, Connectivity::Eight).is_empty());
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let mut m = Grid::filled(3, 3, false);
        m.set(Pixel::new(0, 0), true);
        m.set(Pixel::new(1, 1), true);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn equal_sizes_break_ties_by_first_pixel() {
        let mut m = Grid::filled(5, 1, false);
        m.set(Pixel::new(4, 0), true);
        m.set(Pixel::new(1, 0), true);
        let c = connected_components(&m, Connectivity::Four);
        assert_eq!(c[0].pixels, vec![Pixel::new(1, 0)]);
        assert_eq!(c[1].pixels, vec![Pixel::new(4, 0)]);
    }

    #[test]
    fn components_match_union_find() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = random_mask(&mut rng, 8, 8, 0.45);
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let got: Vec<Vec<Pixel>> = connected_components(&m, conn)
                    .into_iter()
                    .map(|c| c.pixels)
                    .collect();
                assert_eq!(got, union_find_components(&m, conn));
            }
        }
    }

    #[test]
    fn distance_transform_trivial_cases() {
        let zeros = Grid::filled(4, 4, false);
        assert!(distance_transform(&zeros)
            .as_slice()
            .iter()
            .all(|&d| d == 0.0));
        let mut single = Grid::filled(5, 5, false);
        single.set(Pixel::new(2, 2), true);
        assert_eq!(*distance_transform(&single).get(Pixel::new(2, 2)), 1.0);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = random_mask(&mut rng, 10, 10, 0.7);
            let fast = distance_transform(&m);
            let slow = brute_force_distance(&m);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn all_ones_measures_distance_to_border() {
        let m = Grid::filled(7, 7, true);
        let d = distance_transform(&m);
        assert_eq!(*d.get(Pixel::new(3, 3)), 4.0);
        assert_eq!(*d.get(Pixel::new(0, 3)), 1.0);
    }

    proptest! {
        #[test]
        fn component_sizes_sum_to_popcount(bits in proptest::collection::vec(any::<bool>(), 48)) {
            let m = Grid::from_vec(8, 6, bits).unwrap();
            let total: usize = connected_components(&m, Connectivity::Eight).iter().map(|c| c.size()).sum();
            prop_assert_eq!(total, m.popcount());
        }

        #[test]
        fn opening_never_grows(bits in proptest::collection::vec(any::<bool>(), 100), band in 0u32..4) {
            let m = Grid::from_vec(10, 10, bits).unwrap();
            let opened = dilate_disk(&erode_disk(&m, band), band);
            for (o, a) in opened.as_slice().iter().zip(m.as_slice()) {
                prop_assert!(!*o || *a);
            }
        }
    }
}
