//! Full-covariance Gaussian mixtures over RGB colors, fit by k-means++ and EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Color = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Added to every covariance diagonal.
pub const COV_REGULARIZER: f64 = 1e-6;
const EM_TOL: f64 = 1e-6;
const EM_MAX_ITERS: usize = 100;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower Cholesky factor of a symmetric positive-definite 3×3 matrix.
fn cholesky3(a: &Mat3) -> Option<Mat3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Color,
    /// Row-major symmetric covariance.
    pub covariance: Mat3,
}

/// A fitted mixture. Serializes as its list of components; the Cholesky
/// factors used for density evaluation are rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GmmRepr", into = "GmmRepr")]
pub struct Gmm {
    components: Vec<GaussianComponent>,
    chol: Vec<Mat3>,
    log_norm: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GmmRepr {
    components: Vec<GaussianComponent>,
}

impl TryFrom<GmmRepr> for Gmm {
    type Error = Error;
    fn try_from(r: GmmRepr) -> Result<Self> {
        Gmm::new(r.components)
    }
}

impl From<Gmm> for GmmRepr {
    fn from(g: Gmm) -> Self {
        GmmRepr {
            components: g.components,
        }
    }
}

impl PartialEq for Gmm {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}

impl Gmm {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyModel);
        }
        let mut chol = Vec::with_capacity(components.len());
        let mut log_norm = Vec::with_capacity(components.len());
        for c in &components {
            let l = cholesky3(&c.covariance)
                .ok_or_else(|| Error::InvalidInput("covariance not positive definite".into()))?;
            let log_det = 2.0 * (l[0][0].ln() + l[1][1].ln() + l[2][2].ln());
            log_norm.push(c.weight.ln() - 1.5 * LN_2PI - 0.5 * log_det);
            chol.push(l);
        }
        Ok(Self {
            components,
            chol,
            log_norm,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// log(weight_k · N(x; mean_k, cov_k)) for every component.
    fn component_log_densities(&self, x: &Color, out: &mut [f64]) {
        for (k, c) in self.components.iter().enumerate() {
            let l = &self.chol[k];
            let d = [x[0] - c.mean[0], x[1] - c.mean[1], x[2] - c.mean[2]];
            let z0 = d[0] / l[0][0];
            let z1 = (d[1] - l[1][0] * z0) / l[1][1];
            let z2 = (d[2] - l[2][0] * z0 - l[2][1] * z1) / l[2][2];
            out[k] = self.log_norm[k] - 0.5 * (z0 * z0 + z1 * z1 + z2 * z2);
        }
    }

    pub fn log_density(&self, x: &Color) -> f64 {
        let mut buf = [0.0; 16];
        let n = self.components.len();
        if n <= buf.len() {
            self.component_log_densities(x, &mut buf[..n]);
            log_sum_exp(&buf[..n])
        } else {
            let mut v = vec![0.0; n];
            self.component_log_densities(x, &mut v);
            log_sum_exp(&v)
        }
    }

    pub fn density(&self, x: &Color) -> f64 {
        self.log_density(x).exp()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn dist2(a: &Color, b: &Color) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Outcome of a fit, with the mean training log-likelihood after each EM step.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: Gmm,
    pub log_likelihood: Vec<f64>,
}

pub fn fit_gmm(pixels: &[Color], k: usize, seed: u64) -> Result<Gmm> {
    Ok(fit_gmm_report(pixels, k, seed)?.model)
}

/// k-means++ seeding from a ChaCha RNG, one hard assignment, then EM until
/// the mean log-likelihood gains less than 1e-6 or 100 iterations pass.
pub fn fit_gmm_report(pixels: &[Color], k: usize, seed: u64) -> Result<GmmFit> {
    if pixels.is_empty() {
        return Err(Error::EmptyModel);
    }
    if k == 0 {
        return Err(Error::InvalidInput(
            "mixture needs at least one component".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(pixels, k, &mut rng);
    let mut components = hard_assignment(pixels, centers);
    let n = pixels.len() as f64;

    let mut history = Vec::new();
    let mut resp = vec![0.0; pixels.len() * components.len()];
    let mut model = Gmm::new(components.clone())?;
    for iter in 0..EM_MAX_ITERS {
        let kk = components.len();
        resp.resize(pixels.len() * kk, 0.0);
        // E-step
        let mut ll = 0.0;
        for (i, x) in pixels.iter().enumerate() {
            let r = &mut resp[i * kk..(i + 1) * kk];
            model.component_log_densities(x, r);
            let lse = log_sum_exp(r);
            ll += lse;
            for v in r.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let ll = ll / n;
        let converged = history.last().is_some_and(|&prev: &f64| ll - prev < EM_TOL);
        history.push(ll);
        if converged || iter + 1 == EM_MAX_ITERS {
            break;
        }
        // M-step
        let mut next = Vec::with_capacity(kk);
        for c in 0..kk {
            let nk: f64 = (0..pixels.len()).map(|i| resp[i * kk + c]).sum();
            if nk < 1e-9 {
                continue;
            }
            let mut mean = [0.0; 3];
            for (i, x) in pixels.iter().enumerate() {
                let r = resp[i * kk + c];
                for d in 0..3 {
                    mean[d] += r * x[d];
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut cov = [[0.0; 3]; 3];
            for (i, x) in pixels.iter().enumerate() {
                let r = resp[i * kk + c];
                let d = [x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]];
                for a in 0..3 {
                    for b in a..3 {
                        cov[a][b] += r * d[a] * d[b];
                    }
                }
            }
            finish_covariance(&mut cov, nk);
            next.push(GaussianComponent {
                weight: nk / n,
                mean,
                covariance: cov,
            });
        }
        normalize_weights(&mut next);
        if next.len() != kk {
            resp.clear();
        }
        components = next;
        model = Gmm::new(components.clone())?;
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
    })
}

fn finish_covariance(cov: &mut Mat3, count: f64) {
    for a in 0..3 {
        for b in a..3 {
            cov[a][b] /= count;
            cov[b][a] = cov[a][b];
        }
        cov[a][a] += COV_REGULARIZER;
    }
}

fn normalize_weights(comps: &mut [GaussianComponent]) {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= total);
}

fn kmeans_pp(pixels: &[Color], k: usize, rng: &mut ChaCha8Rng) -> Vec<Color> {
    let mut centers = vec![pixels[rng.gen_range(0..pixels.len())]];
    let mut d2: Vec<f64> = pixels.iter().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = pixels.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = pixels[pick];
        centers.push(c);
        for (i, x) in pixels.iter().enumerate() {
            d2[i] = d2[i].min(dist2(x, &c));
        }
    }
    centers
}

fn nearest(x: &Color, centers: &[Color]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(x, c);
        if d < bd {
            bd = d;
            best = j;
        }
    }
    best
}

/// Builds initial components from nearest-center assignment. An empty
/// cluster is re-seeded once at the worst-fit pixel, then dropped if still empty.
fn hard_assignment(pixels: &[Color], mut centers: Vec<Color>) -> Vec<GaussianComponent> {
    let assign =
        |centers: &[Color]| -> Vec<usize> { pixels.iter().map(|x| nearest(x, centers)).collect() };
    let mut labels = assign(&centers);
    let mut counts = vec![0usize; centers.len()];
    labels.iter().for_each(|&l| counts[l] += 1);
    if counts.contains(&0) {
        for j in 0..centers.len() {
            if counts[j] > 0 {
                continue;
            }
            let worst = (0..pixels.len())
                .max_by(|&a, &b| {
                    let da = dist2(&pixels[a], &centers[labels[a]]);
                    let db = dist2(&pixels[b], &centers[labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("nonempty");
            centers[j] = pixels[worst];
        }
        labels = assign(&centers);
        counts = vec![0usize; centers.len()];
        labels.iter().for_each(|&l| counts[l] += 1);
    }

    let n = pixels.len() as f64;
    let mut comps = Vec::new();
    for j in 0..centers.len() {
        if counts[j] == 0 {
            continue;
        }
        let cnt = counts[j] as f64;
        let mut mean = [0.0; 3];
        for (x, _) in pixels.iter().zip(&labels).filter(|(_, &l)| l == j) {
            for d in 0..3 {
                mean[d] += x[d];
            }
        }
        mean.iter_mut().for_each(|m| *m /= cnt);
        let mut cov = [[0.0; 3]; 3];
        for (x, _) in pixels.iter().zip(&labels).filter(|(_, &l)| l == j) {
            let d = [x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]];
            for a in 0..3 {
                for b in a..3 {
                    cov[a][b] += d[a] * d[b];
                }
            }
        }
        finish_covariance(&mut cov, cnt);
        comps.push(GaussianComponent {
            weight: cnt / n,
            mean,
            covariance: cov,
        });
    }
    normalize_weights(&mut comps);
    comps
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_cluster(rng: &mut ChaCha8Rng, center: Color, sigma: f64, n: usize) -> Vec<Color> {
        (0..n)
            .map(|_| {
                let mut c = center;
                for v in c.iter_mut() {
                    // Box-Muller
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen();
                    *v += sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                }
                c
            })
            .collect()
    }

    #[test]
    fn identical_pixels_give_regularized_point_mass() {
        let c = [0.2, 0.4, 0.6];
        let g = fit_gmm(&vec![c; 50], 1, 0).unwrap();
        let comp = &g.components()[0];
        for a in 0..3 {
            assert!((comp.mean[a] - c[a]).abs() < 1e-12);
        }
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { COV_REGULARIZER } else { 0.0 };
                assert!((comp.covariance[a][b] - expect).abs() < 1e-12);
            }
        }
        // more components than distinct colors collapse to one
        assert_eq!(fit_gmm(&vec![c; 50], 5, 3).unwrap().components().len(), 1);
    }

    #[test]
    fn separated_clusters_recover_sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian_cluster(&mut rng, [0.2, 0.2, 0.2], 0.02, 300);
        let b = gaussian_cluster(&mut rng, [0.8, 0.7, 0.6], 0.02, 200);
        let mean = |v: &[Color]| {
            let mut m = [0.0; 3];
            v.iter()
                .for_each(|x| (0..3).for_each(|d| m[d] += x[d] / v.len() as f64));
            m
        };
        let (ma, mb) = (mean(&a), mean(&b));
        let all: Vec<Color> = a.iter().chain(&b).copied().collect();
        let g = fit_gmm(&all, 2, 9).unwrap();
        let mut means: Vec<Color> = g.components().iter().map(|c| c.mean).collect();
        means.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for d in 0..3 {
            assert!((means[0][d] - ma[d]).abs() < 1e-3);
            assert!((means[1][d] - mb[d]).abs() < 1e-3);
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let px = gaussian_cluster(&mut rng, [0.5, 0.5, 0.5], 0.1, 400);
        let g1 = fit_gmm(&px, 5, 42).unwrap();
        let g2 = fit_gmm(&px, 5, 42).unwrap();
        assert_eq!(g1, g2);
        let w: f64 = g1.components().iter().map(|c| c.weight).sum();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(fit_gmm(&[], 3, 0), Err(Error::EmptyModel)));
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut px = gaussian_cluster(&mut rng, [0.3, 0.3, 0.6], 0.08, 300);
        px.extend(gaussian_cluster(&mut rng, [0.6, 0.3, 0.3], 0.05, 300));
        px.extend(gaussian_cluster(&mut rng, [0.45, 0.5, 0.45], 0.1, 300));
        for seed in 0..5 {
            let fit = fit_gmm_report(&px, 4, seed).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{:?}", fit.log_likelihood);
            }
        }
    }

    #[test]
    fn single_component_density_integrates_to_one() {
        let g = Gmm::new(vec![GaussianComponent {
            weight: 1.0,
            mean: [0.5, 0.5, 0.5],
            covariance: [
                [0.01, 0.002, 0.0],
                [0.002, 0.015, 0.001],
                [0.0, 0.001, 0.012],
            ],
        }])
        .unwrap();
        let steps = 60;
        let h = 1.0 / steps as f64;
        let mut total = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                for k in 0..steps {
                    let x = [
                        (i as f64 + 0.5) * h,
                        (j as f64 + 0.5) * h,
                        (k as f64 + 0.5) * h,
                    ];
                    total += g.density(&x) * h * h * h;
                }
            }
        }
        assert!((total - 1.0).abs() < 0.05, "integral {total}");
    }

    #[test]
    fn json_roundtrip() {
        let g = fit_gmm(&[[0.1, 0.2, 0.3], [0.3, 0.2, 0.1], [0.2, 0.2, 0.2]], 2, 0).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Gmm = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert_eq!(
            g.log_density(&[0.2, 0.2, 0.2]),
            back.log_density(&[0.2, 0.2, 0.2])
        );
    }
}
