//! Monte Carlo laboratory for the expected local time of a one-dimensional
//! diffusion `dY = b(Y)dt + σ(Y)dβ` started at 0 and stopped when its local
//! time at 0 reaches one.
//!
//! Local time is estimated from occupation: each Euler step adds
//! `h σ²(Y) / (2ε)` at every level within `ε` of `Y`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, pairwise_sum};
use crate::quadrature::adaptive_simpson;
use crate::variational::WeightFunction;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_MAX_TIME: f64 = 1e3;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionKind {
    /// `dY = −α sgn(Y) dt + σ dβ`
    BangBang { alpha: f64, sigma: f64 },
    /// `dY = −αY dt + σ dβ`
    Ou { alpha: f64, sigma: f64 },
    #[serde(skip)]
    General { drift: RealFn, vol: RealFn },
}

impl fmt::Debug for DiffusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffusionKind::BangBang { alpha, sigma } => write!(f, "BangBang {{ alpha: {alpha}, sigma: {sigma} }}"),
            DiffusionKind::Ou { alpha, sigma } => write!(f, "Ou {{ alpha: {alpha}, sigma: {sigma} }}"),
            DiffusionKind::General { .. } => write!(f, "General"),
        }
    }
}

impl DiffusionKind {
    pub fn general<B, S>(drift: B, vol: S) -> Self
    where
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DiffusionKind::General {
            drift: Arc::new(drift),
            vol: Arc::new(vol),
        }
    }

    pub fn drift(&self, y: f64) -> f64 {
        match self {
            DiffusionKind::BangBang { alpha, .. } => {
                if y > 0.0 {
                    -alpha
                } else if y < 0.0 {
                    *alpha
                } else {
                    0.0
                }
            }
            DiffusionKind::Ou { alpha, .. } => -alpha * y,
            DiffusionKind::General { drift, .. } => drift(y),
        }
    }

    pub fn vol(&self, y: f64) -> f64 {
        match self {
            DiffusionKind::BangBang { sigma, .. } | DiffusionKind::Ou { sigma, .. } => *sigma,
            DiffusionKind::General { vol, .. } => vol(y),
        }
    }
}

/// A diffusion with its simulation resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSpec {
    #[serde(flatten)]
    pub kind: DiffusionKind,
    /// Euler–Maruyama time step.
    pub h: f64,
    /// Half-width of the occupation window.
    pub eps: f64,
    /// Paths still running at this time are discarded and counted.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
}

fn default_max_time() -> f64 {
    DEFAULT_MAX_TIME
}

impl DiffusionSpec {
    pub fn new(kind: DiffusionKind, h: f64, eps: f64) -> Result<Self> {
        let spec = Self {
            kind,
            h,
            eps,
            max_time: DEFAULT_MAX_TIME,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
            }
        };
        match &self.kind {
            DiffusionKind::BangBang { alpha, sigma } | DiffusionKind::Ou { alpha, sigma } => {
                positive("alpha", *alpha)?;
                positive("sigma", *sigma)?;
            }
            DiffusionKind::General { .. } => {}
        }
        positive("h", self.h)?;
        positive("eps", self.eps)?;
        positive("max_time", self.max_time)
    }

    /// `s'(y) = exp(−∫₀^y 2b/σ²)`.
    pub fn scale_density(&self, y: f64) -> f64 {
        match &self.kind {
            DiffusionKind::BangBang { alpha, sigma } => (2.0 * alpha * y.abs() / (sigma * sigma)).exp(),
            DiffusionKind::Ou { alpha, sigma } => (alpha * y * y / (sigma * sigma)).exp(),
            DiffusionKind::General { .. } => {
                let f = |x: f64| {
                    let s = self.kind.vol(x);
                    2.0 * self.kind.drift(x) / (s * s)
                };
                (-adaptive_simpson(&f, 0.0, y, 1e-12)).exp()
            }
        }
    }

    /// `s(y) = ∫₀^y s'`.
    pub fn scale_function(&self, y: f64) -> f64 {
        match &self.kind {
            DiffusionKind::BangBang { alpha, sigma } => {
                let k = 2.0 * alpha / (sigma * sigma);
                y.signum() * (k * y.abs()).exp_m1() / k
            }
            _ => adaptive_simpson(&|x| self.scale_density(x), 0.0, y, 1e-12),
        }
    }

    /// `s'(0)/s'(y)`, the expected local time at `y`.
    pub fn expected_local_time(&self, y: f64) -> f64 {
        self.scale_density(0.0) / self.scale_density(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeProfile {
    pub levels: Vec<f64>,
    pub estimates: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Paths that stopped within the time budget.
    pub n_paths: usize,
    /// Paths discarded for exceeding the time budget.
    pub discarded: usize,
}

impl LocalTimeProfile {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["y", "estimate", "stderr", "n_paths"])?;
        for ((y, e), s) in self.levels.iter().zip(&self.estimates).zip(&self.stderr) {
            w.write_record([fmt_f64(*y), fmt_f64(*e), fmt_f64(*s), self.n_paths.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-path state shared by the simulators.
struct PathRun {
    completed: bool,
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs one path until local time at 0 reaches one, calling `visit(y)`
/// before every step.
fn run_path<F: FnMut(f64)>(spec: &DiffusionSpec, rng: &mut ChaCha8Rng, mut visit: F) -> PathRun {
    let h = spec.h;
    let sqrt_h = h.sqrt();
    let max_steps = (spec.max_time / h).ceil() as u64;
    let mut y = 0.0f64;
    let mut clock = 0.0f64;
    for _ in 0..max_steps {
        let s = spec.kind.vol(y);
        visit(y);
        if y.abs() < spec.eps {
            clock += h * s * s / (2.0 * spec.eps);
            if clock >= 1.0 {
                return PathRun { completed: true };
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        y += spec.kind.drift(y) * h + s * sqrt_h * z;
    }
    PathRun { completed: false }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    Ok(())
}

/// Estimates `E L^y` at each level from `n_paths` independent paths. Path
/// `i` draws from its own ChaCha stream `(seed, i)`, so results do not
/// depend on thread scheduling.
pub fn simulate_local_time_profile(
    spec: &DiffusionSpec,
    levels: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<LocalTimeProfile> {
    spec.validate()?;
    check_paths(n_paths)?;
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
    let eps = spec.eps;

    let runs: Vec<Option<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|index| {
            let mut rng = path_rng(seed, index as u64);
            let mut local = vec![0.0; sorted.len()];
            let run = run_path(spec, &mut rng, |y| {
                let s = spec.kind.vol(y);
                let inc = spec.h * s * s / (2.0 * eps);
                let start = sorted.partition_point(|&l| l <= y - eps);
                for (k, &level) in sorted.iter().enumerate().skip(start) {
                    if level >= y + eps {
                        break;
                    }
                    if (y - level).abs() < eps {
                        local[k] += inc;
                    }
                }
            });
            run.completed.then_some(local)
        })
        .collect();

    let kept: Vec<&Vec<f64>> = runs.iter().flatten().collect();
    let discarded = n_paths - kept.len();
    if discarded > 0 {
        log::warn!(
            "{discarded} of {n_paths} paths exceeded the time budget {} and were discarded",
            spec.max_time
        );
    }
    let mut estimates = vec![0.0; levels.len()];
    let mut stderr = vec![0.0; levels.len()];
    for (k, &original) in order.iter().enumerate() {
        let column: Vec<f64> = kept.iter().map(|v| v[k]).collect();
        let (m, s) = mean_and_stderr(&column);
        estimates[original] = m;
        stderr[original] = s;
    }
    Ok(LocalTimeProfile {
        levels: levels.to_vec(),
        estimates,
        stderr,
        n_paths: kept.len(),
        discarded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub discarded: usize,
}

/// Estimates `E ∫ f(Y) d⟨Y⟩ = ∫ f(y) E L^y dy` up to the stopping time.
pub fn simulate_occupation_functional<F>(spec: &DiffusionSpec, f: F, n_paths: usize, seed: u64) -> Result<McEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    spec.validate()?;
    check_paths(n_paths)?;
    let runs: Vec<Option<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|index| {
            let mut rng = path_rng(seed, index as u64);
            let mut total = 0.0;
            let run = run_path(spec, &mut rng, |y| {
                let s = spec.kind.vol(y);
                total += f(y) * s * s * spec.h;
            });
            run.completed.then_some(total)
        })
        .collect();
    let kept: Vec<f64> = runs.into_iter().flatten().collect();
    let (mean, stderr) = mean_and_stderr(&kept);
    Ok(McEstimate {
        mean,
        stderr,
        n_paths: kept.len(),
        discarded: n_paths - kept.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean of `s(Y(t ∧ τ))` at each checkpoint, where `τ` is the
/// stopping time; it should stay near `s(0) = 0`.
pub fn martingale_check(
    spec: &DiffusionSpec,
    checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MartingalePoint>> {
    spec.validate()?;
    check_paths(n_paths)?;
    let steps: Vec<u64> = checkpoints.iter().map(|t| (t / spec.h).round() as u64).collect();
    let samples: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|index| {
            let mut rng = path_rng(seed, index as u64);
            let mut out = vec![f64::NAN; steps.len()];
            let mut n = 0u64;
            let mut last = 0.0;
            run_path(spec, &mut rng, |y| {
                for (slot, &k) in out.iter_mut().zip(&steps) {
                    if k == n {
                        *slot = y;
                    }
                }
                last = y;
                n += 1;
            });
            // frozen after stopping
            out.iter_mut().for_each(|v| {
                if v.is_nan() {
                    *v = last;
                }
            });
            out.into_iter().map(|y| spec.scale_function(y)).collect()
        })
        .collect();
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let column: Vec<f64> = samples.iter().map(|v| v[j]).collect();
            let (mean, stderr) = mean_and_stderr(&column);
            MartingalePoint { t, mean, stderr }
        })
        .collect())
}

/// Piecewise-linear weight function through the profile estimates.
pub fn empirical_weight_export(profile: &LocalTimeProfile) -> Result<WeightFunction> {
    if profile.levels.len() < 3 {
        return Err(Error::InvalidParameter("a profile needs at least three levels".into()));
    }
    let knots = profile
        .levels
        .iter()
        .zip(&profile.estimates)
        .map(|(&y, &e)| (y, e.max(0.0)))
        .collect();
    WeightFunction::tabulated(knots)
}
