//! One-parameter sweeps with leave-one-out selection and jackknife spread.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::energy::Params;
use crate::error::{Error, Result};
use crate::eval::{config_factory, evaluate_image, EvalSpec, MeanStd, Transfer};
use crate::segment::SegmenterConfig;

pub const GRID_POINTS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "w_c")]
    WC,
    #[serde(rename = "w_i")]
    WI,
    #[serde(rename = "w_beta")]
    WBeta,
}

impl ParamName {
    pub const ALL: [ParamName; 3] = [ParamName::WC, ParamName::WI, ParamName::WBeta];

    pub fn name(self) -> &'static str {
        match self {
            ParamName::WC => "w_c",
            ParamName::WI => "w_i",
            ParamName::WBeta => "w_beta",
        }
    }

    pub fn get(self, p: &Params) -> f64 {
        match self {
            ParamName::WC => p.w_c,
            ParamName::WI => p.w_i,
            ParamName::WBeta => p.w_beta,
        }
    }

    pub fn set(self, p: &mut Params, v: f64) {
        match self {
            ParamName::WC => p.w_c = v,
            ParamName::WI => p.w_i = v,
            ParamName::WBeta => p.w_beta = v,
        }
    }

    /// 30 points: 0 then log-spaced on [0.01, 10] for the pairwise weights,
    /// log-spaced on [0.1, 20] for `w_beta`.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            ParamName::WC | ParamName::WI => {
                let mut g = vec![0.0];
                g.extend(log_grid(0.01, 10.0, GRID_POINTS - 1));
                g
            }
            ParamName::WBeta => log_grid(0.1, 20.0, GRID_POINTS),
        }
    }
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {s:?}")))
    }
}

/// `n` geometrically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let r = (hi / lo).ln() / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo * (r * i as f64).exp()
                    }
                })
                .collect()
        }
    }
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: ParamName,
    pub grid: Vec<f64>,
    pub eval: EvalSpec,
    #[serde(default = "sigmoid")]
    pub transfer: Transfer,
}

fn sigmoid() -> Transfer {
    Transfer::Sigmoid
}

impl SweepSpec {
    pub fn new(parameter: ParamName, eval: EvalSpec) -> Self {
        Self {
            parameter,
            grid: parameter.default_grid(),
            eval,
            transfer: Transfer::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || !(self.grid[0] >= 0.0) {
            return Err(Error::InvalidInput(
                "grid must be strictly increasing and non-negative".into(),
            ));
        }
        if self.parameter == ParamName::WBeta && self.grid[0] <= 0.0 {
            return Err(Error::InvalidInput("w_beta grid must be positive".into()));
        }
        Ok(())
    }
}

/// Leave-one-out choices over a complete score matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooSelection {
    /// Full-data minimizer.
    pub w_star: f64,
    /// Value chosen with image `k` held out, per image.
    pub held_out: Vec<f64>,
    pub loo_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: ParamName,
    pub grid: Vec<f64>,
    pub images: Vec<String>,
    /// `matrix[g][k]`: score of image `k` at grid value `g`; `None` if it failed.
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Images excluded from selection because some grid value failed on them.
    pub excluded: Vec<String>,
    pub selection: LooSelection,
    pub jackknife_stdev: f64,
    /// Mean and spread over images per grid value.
    pub train_curve: Vec<MeanStd>,
}

fn argmin_smallest(grid: &[f64], score: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    for g in 1..grid.len() {
        let (s, b) = (score(g), score(best));
        if s < b || (s == b && grid[g] < grid[best]) {
            best = g;
        }
    }
    best
}

/// `w*` minimizes the mean over all images; `held_out[k]` the mean over all
/// images but `k`. Ties go to the smaller grid value.
pub fn select_loo(grid: &[f64], matrix: &[Vec<f64>]) -> Result<LooSelection> {
    if matrix.len() != grid.len() || grid.is_empty() {
        return Err(Error::Dimensions("one matrix row per grid value".into()));
    }
    let n = matrix[0].len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 2 images, have {n}"
        )));
    }
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::Dimensions("ragged score matrix".into()));
    }
    let totals: Vec<f64> = matrix.iter().map(|r| r.iter().sum()).collect();
    let w_star = grid[argmin_smallest(grid, |g| totals[g])];
    let mut held_out = Vec::with_capacity(n);
    let mut loo = 0.0;
    for k in 0..n {
        let g = argmin_smallest(grid, |g| {
            matrix[g]
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, v)| v)
                .sum()
        });
        held_out.push(grid[g]);
        loo += matrix[g][k];
    }
    Ok(LooSelection {
        w_star,
        held_out,
        loo_error: loo / n as f64,
    })
}

/// `sqrt(((n-1)/n) Σ_k (θ_k - mean θ)²)`.
pub fn jackknife_stdev(held_out: &[f64]) -> Result<f64> {
    let n = held_out.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "jackknife needs at least 2 values, have {n}"
        )));
    }
    let nf = n as f64;
    let mean = held_out.iter().sum::<f64>() / nf;
    let ss: f64 = held_out.iter().map(|t| (t - mean).powi(2)).sum();
    Ok(((nf - 1.0) / nf * ss).sqrt())
}

/// Sweeps `parameter` over `grid`, scoring image `k` under parameters `p`
/// with `score(p, k)`.
pub fn sweep_scored(
    names: &[String],
    base: &Params,
    parameter: ParamName,
    grid: &[f64],
    score: &(dyn Fn(&Params, usize) -> Result<f64> + Sync),
) -> Result<SweepResult> {
    if names.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let n = names.len();
    let cells: Vec<Option<f64>> = (0..grid.len() * n)
        .into_par_iter()
        .map(|c| {
            let (g, k) = (c / n, c % n);
            let mut p = *base;
            parameter.set(&mut p, grid[g]);
            match score(&p, k) {
                Ok(v) => Some(v),
                Err(e) => {
                    tracing::warn!(image = %names[k], value = grid[g], error = %e, "sweep cell failed");
                    None
                }
            }
        })
        .collect();
    let matrix: Vec<Vec<Option<f64>>> = cells.chunks(n).map(|r| r.to_vec()).collect();
    let keep: Vec<usize> = (0..n)
        .filter(|&k| matrix.iter().all(|r| r[k].is_some()))
        .collect();
    let excluded = (0..n)
        .filter(|k| !keep.contains(k))
        .map(|k| names[k].clone())
        .collect();
    let complete: Vec<Vec<f64>> = matrix
        .iter()
        .map(|r| keep.iter().map(|&k| r[k].expect("kept")).collect())
        .collect();
    let selection = select_loo(grid, &complete)?;
    let jackknife_stdev = jackknife_stdev(&selection.held_out)?;
    let train_curve = complete
        .iter()
        .map(|r| MeanStd::of(r).expect("non-empty"))
        .collect();
    Ok(SweepResult {
        parameter,
        grid: grid.to_vec(),
        images: names.to_vec(),
        matrix,
        excluded,
        selection,
        jackknife_stdev,
        train_curve,
    })
}

/// Sweeps one parameter of `config` over the dataset under `spec.eval`.
pub fn sweep(
    dataset: &[DatasetRecord],
    config: &SegmenterConfig,
    spec: &SweepSpec,
) -> Result<SweepResult> {
    spec.validate()?;
    let names: Vec<String> = dataset.iter().map(|r| r.name.clone()).collect();
    let score = |p: &Params, k: usize| -> Result<f64> {
        let mut cfg = config.clone();
        cfg.params = *p;
        let s = evaluate_image(&dataset[k], &spec.eval, &config_factory(&cfg))?;
        Ok(match spec.transfer {
            Transfer::Sigmoid => s.er_sigmoid,
            Transfer::Identity => s.er_identity,
        })
    };
    sweep_scored(&names, &config.params, spec.parameter, &spec.grid, &score)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateResult {
    pub params: Params,
    pub stdevs: Vec<(ParamName, f64)>,
    pub sweeps: Vec<SweepResult>,
}

/// One pass of sweeps in the given order, each fixing the values chosen
/// before it.
pub fn coordinate_learn(
    dataset: &[DatasetRecord],
    config: &SegmenterConfig,
    specs: &[SweepSpec],
) -> Result<CoordinateResult> {
    let mut seen = HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(s.parameter)) {
        return Err(Error::InvalidInput(format!(
            "{} swept twice",
            dup.parameter.name()
        )));
    }
    let mut cfg = config.clone();
    let mut stdevs = Vec::new();
    let mut sweeps = Vec::new();
    for spec in specs {
        let r = sweep(dataset, &cfg, spec)?;
        spec.parameter.set(&mut cfg.params, r.selection.w_star);
        tracing::info!(
            parameter = spec.parameter.name(),
            value = r.selection.w_star,
            stdev = r.jackknife_stdev,
            "sweep done"
        );
        stdevs.push((spec.parameter, r.jackknife_stdev));
        sweeps.push(r);
    }
    Ok(CoordinateResult {
        params: cfg.params,
        stdevs,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grids() {
        for p in ParamName::ALL {
            let g = p.default_grid();
            assert_eq!(g.len(), 30);
            assert!(g.windows(2).all(|w| w[0] < w[1]));
        }
        let g = log_grid(0.1, 20.0, 30);
        assert_eq!((g[0], g[29]), (0.1, 20.0));
        assert_eq!(linear_grid(0.0, 10.0, 11)[3], 3.0);
    }

    #[test]
    fn jackknife_closed_form() {
        assert_eq!(jackknife_stdev(&[2.0; 5]).unwrap(), 0.0);
        assert!((jackknife_stdev(&[1.0, 2.0, 3.0]).unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(jackknife_stdev(&[1.0]).is_err());
    }

    #[test]
    fn opposite_preferences() {
        // image 0 prefers grid[0], image 1 prefers grid[1]
        let grid = [1.0, 2.0];
        let m = vec![vec![0.0, 4.0], vec![3.0, 1.0]];
        let s = select_loo(&grid, &m).unwrap();
        assert_eq!(s.held_out, vec![2.0, 1.0]);
        assert_eq!(s.loo_error, (3.0 + 4.0) / 2.0);
        // totals tie at 4: smaller value wins
        assert_eq!(s.w_star, 1.0);
    }

    #[test]
    fn unanimous_choice() {
        let grid = [0.5, 1.0, 2.0];
        let m = vec![
            vec![3.0, 2.0, 5.0],
            vec![1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0],
        ];
        let s = select_loo(&grid, &m).unwrap();
        assert_eq!(s.w_star, 1.0);
        assert!(s.held_out.iter().all(|&v| v == 1.0));
        assert_eq!(jackknife_stdev(&s.held_out).unwrap(), 0.0);
    }

    #[test]
    fn grid_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let grid: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 + 0.1).collect();
            let m: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..4).map(|_| rng.gen_range(0..4) as f64).collect())
                .collect();
            let a = select_loo(&grid, &m).unwrap();
            let mut order: Vec<usize> = (0..6).collect();
            for i in (1..6).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let g2: Vec<f64> = order.iter().map(|&i| grid[i]).collect();
            let m2: Vec<Vec<f64>> = order.iter().map(|&i| m[i].clone()).collect();
            let b = select_loo(&g2, &m2).unwrap();
            assert_eq!(a, b);
            let totals: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
            let min = totals.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(
                totals[grid.iter().position(|&g| g == a.w_star).unwrap()],
                min
            );
        }
    }

    #[test]
    fn failures_are_excluded() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let score = |p: &Params, k: usize| {
            if k == 2 && p.w_i > 1.0 {
                Err(Error::Other("boom".into()))
            } else {
                Ok((p.w_i - k as f64).abs())
            }
        };
        let r = sweep_scored(
            &names,
            &Params::default(),
            ParamName::WI,
            &[0.0, 1.0, 2.0],
            &score,
        )
        .unwrap();
        assert_eq!(r.excluded, vec!["c".to_string()]);
        assert_eq!(r.matrix[2][2], None);
        assert_eq!(r.selection.held_out.len(), 2);
    }

    #[test]
    fn duplicate_parameter_is_rejected() {
        let s = SweepSpec::new(ParamName::WC, EvalSpec::static_brush());
        let cfg = SegmenterConfig::new(crate::segment::System::Gcs, Params::default());
        assert!(coordinate_learn(&[], &cfg, &[s.clone(), s]).is_err());
        assert_eq!(
            coordinate_learn(&[], &cfg, &[]).unwrap().params,
            Params::default()
        );
    }
}
