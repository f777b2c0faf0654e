//! Two assets on a binary tree: `Y = log(X₁/X₂)` moves by `±σ` each period
//! and the portfolio holds `(q, 1 − q)`.
//!
//! An up-move and a later down-move across the same grid band form a match.
//! Matches earn a premium; unmatched moves and the final market
//! concentration account for the rest of the relative value.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::quadrature::{adaptive_simpson, integrate_panels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Step {
    Up,
    Down,
}

impl Step {
    pub fn sign(self) -> i64 {
        match self {
            Step::Up => 1,
            Step::Down => -1,
        }
    }

    fn symbol(self) -> char {
        match self {
            Step::Up => '+',
            Step::Down => '-',
        }
    }
}

/// A path of `Y` with increments of exactly `±σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPath {
    y0: f64,
    sigma: f64,
    steps: Vec<Step>,
}

impl BinaryPath {
    pub fn new(y0: f64, sigma: f64, steps: Vec<Step>) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("step size {sigma} must be positive")));
        }
        if !y0.is_finite() {
            return Err(Error::InvalidParameter(format!("initial value {y0} is not finite")));
        }
        Ok(Self { y0, sigma, steps })
    }

    /// Parses a string of `+` and `-` characters (whitespace ignored).
    pub fn from_signs(y0: f64, sigma: f64, signs: &str) -> Result<Self> {
        let steps = signs
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '+' | 'u' | 'U' => Ok(Step::Up),
                '-' | 'd' | 'D' => Ok(Step::Down),
                other => Err(Error::Data(format!("invalid step character `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(y0, sigma, steps)
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Grid levels `(Y(t) − y0)/σ` for `t = 0..=T`.
    pub fn levels(&self) -> Vec<i64> {
        let mut level = 0;
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(0);
        for s in &self.steps {
            level += s.sign();
            out.push(level);
        }
        out
    }

    /// `Y(t)` for `t = 0..=T`.
    pub fn values(&self) -> Vec<f64> {
        self.levels().into_iter().map(|k| self.level_value(k)).collect()
    }

    fn level_value(&self, k: i64) -> f64 {
        self.y0 + k as f64 * self.sigma
    }

    /// `(Y(T) − Y(0))/σ`.
    pub fn net_level(&self) -> i64 {
        self.steps.iter().map(|s| s.sign()).sum()
    }

    pub fn y_final(&self) -> f64 {
        self.level_value(self.net_level())
    }

    pub fn signs(&self) -> String {
        self.steps.iter().map(|s| s.symbol()).collect()
    }

    /// Text form: a `y0,sigma` header, the values, then the step string.
    pub fn to_text(&self) -> String {
        format!(
            "y0,sigma\n{},{}\n{}\n",
            fmt_f64(self.y0),
            fmt_f64(self.sigma),
            self.signs()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty binary path file".into()))?;
        if header.replace(' ', "") != "y0,sigma" {
            return Err(Error::Data(format!("expected header `y0,sigma`, found `{header}`")));
        }
        let values = lines
            .next()
            .ok_or_else(|| Error::Data("missing y0,sigma values".into()))?;
        let mut parts = values.split(',').map(|s| s.trim().parse::<f64>());
        let (y0, sigma) = match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(y0)), Some(Ok(sigma)), None) => (y0, sigma),
            _ => return Err(Error::Data(format!("malformed y0,sigma line `{values}`"))),
        };
        let signs: String = lines.collect();
        Self::from_signs(y0, sigma, &signs)
    }
}

impl fmt::Display for BinaryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signs())
    }
}

/// `1 + q(e^{dy} − 1)`: growth of the portfolio in units of asset 2.
pub fn one_step_factor(q: f64, dy: f64) -> f64 {
    1.0 + q * dy.exp_m1()
}

/// `1 + q(1 − q)(e^{σ/2} − e^{−σ/2})²`: the up-then-down product at constant `q`.
pub fn match_factor(q: f64, sigma: f64) -> f64 {
    let s = 2.0 * (0.5 * sigma).sinh();
    1.0 + q * (1.0 - q) * s * s
}

/// Matched pairs per grid band. Band `k` is `[y0 + kσ, y0 + (k+1)σ]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchTally {
    pub matched_per_level: BTreeMap<i64, usize>,
    pub unmatched_count: usize,
    pub total_matches: usize,
}

impl MatchTally {
    /// CSV with `level,matched_count` rows followed by `N` and `unmatched`
    /// summary rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "matched_count"])?;
        for (level, count) in &self.matched_per_level {
            w.write_record([level.to_string(), count.to_string()])?;
        }
        w.write_record(["N".to_string(), self.total_matches.to_string()])?;
        w.write_record(["unmatched".to_string(), self.unmatched_count.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Pairs each move with the most recent unmatched opposite move across the
/// same band.
pub fn tally_matches(path: &BinaryPath) -> MatchTally {
    let mut open: BTreeMap<i64, Vec<Step>> = BTreeMap::new();
    let mut tally = MatchTally::default();
    let mut level = 0i64;
    for &step in &path.steps {
        let band = match step {
            Step::Up => level,
            Step::Down => level - 1,
        };
        level += step.sign();
        let stack = open.entry(band).or_default();
        if stack.last().is_some_and(|&top| top != step) {
            stack.pop();
            *tally.matched_per_level.entry(band).or_insert(0) += 1;
            tally.total_matches += 1;
        } else {
            stack.push(step);
        }
    }
    tally.unmatched_count = open.values().map(Vec::len).sum();
    tally
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoAssetDecomposition {
    /// `N log(match factor)`
    pub match_term: f64,
    /// Unmatched moves times the log one-step factor in the net direction.
    pub unmatched_term: f64,
    /// `−log((e^{Y(T)} + 1)/(e^{Y(0)} + 1))`
    pub concentration_term: f64,
    /// `log(V(T)/S(T))` from the step-by-step product.
    pub log_rel_value: f64,
}

impl TwoAssetDecomposition {
    pub fn residual(&self) -> f64 {
        self.match_term + self.unmatched_term + self.concentration_term - self.log_rel_value
    }
}

/// `log(1 + e^y)` without overflow.
fn softplus(y: f64) -> f64 {
    if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

/// Splits the log value of the constant-weighted portfolio `(q, 1 − q)`
/// relative to the market into match, trend and concentration parts.
pub fn constant_weight_decomposition(path: &BinaryPath, q: f64) -> Result<TwoAssetDecomposition> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("constant weight {q} outside (0, 1)")));
    }
    let sigma = path.sigma;
    let tally = tally_matches(path);
    let net = path.net_level();
    let match_term = tally.total_matches as f64 * match_factor(q, sigma).ln();
    let unmatched_term = if net == 0 {
        0.0
    } else {
        tally.unmatched_count as f64 * one_step_factor(q, net.signum() as f64 * sigma).ln()
    };
    let concentration_term = -(softplus(path.y_final()) - softplus(path.y0));
    let log_v: f64 = path
        .steps
        .iter()
        .map(|s| one_step_factor(q, s.sign() as f64 * sigma).ln())
        .sum();
    Ok(TwoAssetDecomposition {
        match_term,
        unmatched_term,
        concentration_term,
        log_rel_value: log_v + concentration_term,
    })
}

// ---------------------------------------------------------------------------
// Weight curves

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    /// Continuous with finite variation.
    FiniteVariation,
    C1,
}

type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Weight `q(y)` on asset 1 as a function of `y = log(X₁/X₂)`.
#[derive(Clone)]
pub enum WeightCurve {
    Constant(f64),
    /// `e^{sy}/(1 + e^{sy})`; slope 1 is the market portfolio.
    Logistic {
        slope: f64,
    },
    /// Linear interpolation between knots `(y, q)` sorted by `y`, flat outside.
    PiecewiseLinear(Vec<(f64, f64)>),
    Custom {
        q: CurveFn,
        smoothness: Smoothness,
        /// Points where `q` may fail to be differentiable.
        kinks: Vec<f64>,
    },
}

impl fmt::Debug for WeightCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightCurve::Constant(c) => write!(f, "Constant({c})"),
            WeightCurve::Logistic { slope } => write!(f, "Logistic {{ slope: {slope} }}"),
            WeightCurve::PiecewiseLinear(k) => write!(f, "PiecewiseLinear({k:?})"),
            WeightCurve::Custom { smoothness, kinks, .. } => {
                write!(f, "Custom {{ smoothness: {smoothness:?}, kinks: {kinks:?} }}")
            }
        }
    }
}

const ANTIDERIVATIVE_TOL: f64 = 1e-12;
const DERIVATIVE_STEP: f64 = 1e-3;

impl WeightCurve {
    pub fn market() -> Self {
        WeightCurve::Logistic { slope: 1.0 }
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(q: F, smoothness: Smoothness, kinks: Vec<f64>) -> Self {
        WeightCurve::Custom {
            q: Arc::new(q),
            smoothness,
            kinks,
        }
    }

    pub fn piecewise_linear(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidParameter("piecewise-linear curve needs knots".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter("duplicate knot abscissa".into()));
        }
        if let Some(&(y, q)) = knots.iter().find(|(_, q)| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidParameter(format!("q({y}) = {q} outside [0, 1]")));
        }
        Ok(WeightCurve::PiecewiseLinear(knots))
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            WeightCurve::Constant(c) => *c,
            WeightCurve::Logistic { slope } => 1.0 / (1.0 + (-slope * y).exp()),
            WeightCurve::PiecewiseLinear(knots) => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if y <= first.0 {
                    return first.1;
                }
                if y >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|k| k.0 <= y);
                let (y0, q0) = knots[i - 1];
                let (y1, q1) = knots[i];
                q0 + (q1 - q0) * (y - y0) / (y1 - y0)
            }
            WeightCurve::Custom { q, .. } => q(y),
        }
    }

    /// `q'(y)`; one-sided averages at piecewise-linear knots, finite
    /// differences for custom curves.
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            WeightCurve::Constant(_) => 0.0,
            WeightCurve::Logistic { slope } => {
                let q = self.eval(y);
                slope * q * (1.0 - q)
            }
            WeightCurve::PiecewiseLinear(knots) => {
                let slope_at = |i: usize| {
                    let (y0, q0) = knots[i];
                    let (y1, q1) = knots[i + 1];
                    (q1 - q0) / (y1 - y0)
                };
                let n = knots.len();
                if n < 2 || y < knots[0].0 || y > knots[n - 1].0 {
                    return 0.0;
                }
                if let Some(i) = knots.iter().position(|k| k.0 == y) {
                    let left = if i > 0 { slope_at(i - 1) } else { 0.0 };
                    let right = if i + 1 < n { slope_at(i) } else { 0.0 };
                    return 0.5 * (left + right);
                }
                slope_at(knots.partition_point(|k| k.0 <= y) - 1)
            }
            WeightCurve::Custom { .. } => five_point_derivative(|x| self.eval(x), y, DERIVATIVE_STEP),
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            WeightCurve::Constant(_) | WeightCurve::Logistic { .. } => Smoothness::C1,
            WeightCurve::PiecewiseLinear(k) if k.len() <= 1 => Smoothness::C1,
            WeightCurve::PiecewiseLinear(_) => Smoothness::FiniteVariation,
            WeightCurve::Custom { smoothness, .. } => *smoothness,
        }
    }

    /// Points where `q` may fail to be differentiable.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            WeightCurve::PiecewiseLinear(k) => k.iter().map(|k| k.0).collect(),
            WeightCurve::Custom { kinks, .. } => kinks.clone(),
            _ => Vec::new(),
        }
    }

    /// `F(y) = ∫₀^y q`, anchored at `F(0) = 0`.
    pub fn antiderivative(&self, y: f64) -> f64 {
        match self {
            WeightCurve::Constant(c) => c * y,
            WeightCurve::Logistic { slope } => (softplus(slope * y) - std::f64::consts::LN_2) / slope,
            _ => {
                let f = |x: f64| self.eval(x);
                let (a, b, sign) = if y >= 0.0 { (0.0, y, 1.0) } else { (y, 0.0, -1.0) };
                sign * integrate_panels(&f, a, b, &self.breakpoints(), ANTIDERIVATIVE_TOL)
            }
        }
    }

    /// Whether every sample on the grid lies in `[0, 1]`.
    pub fn in_unit_range(&self, lo: f64, hi: f64, points: usize) -> bool {
        grid(lo, hi, points).all(|y| (0.0..=1.0).contains(&self.eval(y)))
    }
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let n = points.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| lo + i as f64 * step)
}

fn five_point_derivative<F: Fn(f64) -> f64>(f: F, y: f64, h: f64) -> f64 {
    (f(y - 2.0 * h) - 8.0 * f(y - h) + 8.0 * f(y + h) - f(y + 2.0 * h)) / (12.0 * h)
}

/// `[1 + q(kσ)(e^σ − 1)][1 + q((k+1)σ)(e^{−σ} − 1)]`: an up-move from `kσ`
/// followed by a down-move back to `kσ`.
pub fn state_dependent_match_factor(curve: &WeightCurve, k: i64, sigma: f64) -> f64 {
    let lower = curve.eval(k as f64 * sigma);
    let upper = curve.eval((k + 1) as f64 * sigma);
    one_step_factor(lower, sigma) * one_step_factor(upper, -sigma)
}

/// `q_k(1 − q_k) − Δq_k/σ − q_k Δq_k`: positive when the match at band `k`
/// earns a premium, up to `O(σ)`.
pub fn discrete_reversion_margin(curve: &WeightCurve, k: i64, sigma: f64) -> f64 {
    let qk = curve.eval(k as f64 * sigma);
    let dq = curve.eval((k + 1) as f64 * sigma) - qk;
    qk * (1.0 - qk) - dq / sigma - qk * dq
}

/// `log V(T)` in units of asset 2 for the state-dependent weight `q(Y(t))`.
pub fn replay_log_value(curve: &WeightCurve, path: &BinaryPath) -> f64 {
    let values = path.values();
    values
        .windows(2)
        .map(|w| one_step_factor(curve.eval(w[0]), w[1] - w[0]).ln())
        .sum()
}

/// `log(V(T)/S(T))`: replay value relative to the market `X₁ + X₂`.
pub fn replay_log_relative_value(curve: &WeightCurve, path: &BinaryPath) -> f64 {
    replay_log_value(curve, path) - (softplus(path.y_final()) - softplus(path.y0))
}

// ---------------------------------------------------------------------------
// Reversion and generating functions

const REVERSION_SLACK: f64 = 1e-10;

/// Worst value of `q' − q(1 − q)` on the grid and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversionCheck {
    pub passes: bool,
    pub worst_excess: f64,
    pub worst_at: f64,
}

/// Tests `q' ≤ q(1 − q)` on `[lo, hi]` sampled every `resolution`. The
/// derivative uses a five-point stencil with step `min(resolution, 1e-3)`.
pub fn check_reversion(curve: &WeightCurve, lo: f64, hi: f64, resolution: f64) -> Result<ReversionCheck> {
    if !(resolution > 0.0) || !(hi >= lo) {
        return Err(Error::InvalidParameter(
            "reversion grid needs lo <= hi and resolution > 0".into(),
        ));
    }
    let h = resolution.min(DERIVATIVE_STEP);
    let n = ((hi - lo) / resolution).round() as usize + 1;
    let mut worst = ReversionCheck {
        passes: true,
        worst_excess: f64::NEG_INFINITY,
        worst_at: lo,
    };
    for y in grid(lo, hi, n) {
        let dq = match curve {
            WeightCurve::Custom { .. } | WeightCurve::PiecewiseLinear(_) => {
                five_point_derivative(|x| curve.eval(x), y, h)
            }
            _ => curve.derivative(y),
        };
        let q = curve.eval(y);
        let excess = dq - q * (1.0 - q);
        if excess > worst.worst_excess {
            worst.worst_excess = excess;
            worst.worst_at = y;
        }
    }
    worst.passes = worst.worst_excess <= REVERSION_SLACK;
    Ok(worst)
}

/// `S(μ₁, μ₂) = μ₂ exp(F(log(μ₁/μ₂)))` with `F' = q`, `F(0) = 0`.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    curve: WeightCurve,
}

/// Largest second difference of `p ↦ S(p, 1 − p)` on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcavityCertificate {
    pub concave: bool,
    pub worst_second_difference: f64,
    pub worst_at: f64,
}

pub const CONCAVITY_GRID: usize = 200;
const CONCAVITY_SLACK: f64 = 1e-12;

pub fn generating_function(curve: &WeightCurve) -> GeneratingFunction {
    GeneratingFunction { curve: curve.clone() }
}

impl GeneratingFunction {
    pub fn eval(&self, mu1: f64, mu2: f64) -> Result<f64> {
        if !(mu1 > 0.0 && mu2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "generating function needs interior weights, got ({mu1}, {mu2})"
            )));
        }
        Ok(mu2 * self.curve.antiderivative((mu1 / mu2).ln()).exp())
    }

    /// Second differences of `p ↦ S(p, 1 − p)` on 200 points over
    /// `[0.01, 0.99]`; a positive one certifies non-concavity.
    pub fn concavity_certificate(&self) -> Result<ConcavityCertificate> {
        let ps: Vec<f64> = grid(0.01, 0.99, CONCAVITY_GRID).collect();
        let values = ps.iter().map(|&p| self.eval(p, 1.0 - p)).collect::<Result<Vec<_>>>()?;
        let mut cert = ConcavityCertificate {
            concave: true,
            worst_second_difference: f64::NEG_INFINITY,
            worst_at: ps[1],
        };
        for i in 1..ps.len() - 1 {
            let d2 = values[i - 1] - 2.0 * values[i] + values[i + 1];
            if d2 > cert.worst_second_difference {
                cert.worst_second_difference = d2;
                cert.worst_at = ps[i];
            }
        }
        cert.concave = cert.worst_second_difference <= CONCAVITY_SLACK;
        Ok(cert)
    }
}

// ---------------------------------------------------------------------------
// Discretization and Riemann sums

/// Converts a sampled series into a `±σ` path on the grid `y0 + σℤ`, with
/// `y0` the first observation. Each sample is assigned its nearest level
/// (ties toward the lower level) and every level change becomes a run of
/// unit steps.
pub fn discretize_to_grid(series: &[f64], sigma: f64) -> Result<BinaryPath> {
    let (&y0, rest) = series
        .split_first()
        .ok_or_else(|| Error::Data("cannot discretize an empty series".into()))?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("step size {sigma} must be positive")));
    }
    let mut steps = Vec::new();
    let mut level = 0i64;
    for (i, &x) in rest.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::Data(format!("non-finite value at index {}", i + 1)));
        }
        let target = ((x - y0) / sigma - 0.5).ceil() as i64;
        let step = if target > level { Step::Up } else { Step::Down };
        steps.extend(std::iter::repeat_n(step, target.abs_diff(level) as usize));
        level = target;
    }
    BinaryPath::new(y0, sigma, steps)
}

/// `½ Σ q(t)(1 − q(t))(ΔY(t))²`.
pub fn excess_growth_riemann(q_series: &[f64], y_series: &[f64]) -> Result<f64> {
    if q_series.len() < y_series.len().saturating_sub(1) {
        return Err(Error::LengthMismatch {
            what: "q series",
            expected: y_series.len().saturating_sub(1),
            found: q_series.len(),
        });
    }
    Ok(0.5
        * y_series
            .windows(2)
            .zip(q_series)
            .map(|(w, q)| {
                let dy = w[1] - w[0];
                q * (1.0 - q) * dy * dy
            })
            .sum::<f64>())
}

/// Variance of `log(X₁/X₂)` increments from the variances of each log
/// price and their correlation.
pub fn relative_variance(sigma1: f64, sigma2: f64, rho: f64) -> f64 {
    sigma1 * sigma1 + sigma2 * sigma2 - 2.0 * rho * sigma1 * sigma2
}

/// Integral of `q` over `[a, b]`, used by callers needing `F` on arbitrary
/// intervals.
pub fn integrate_curve(curve: &WeightCurve, a: f64, b: f64) -> f64 {
    let f = |x: f64| curve.eval(x);
    if curve.breakpoints().is_empty() {
        adaptive_simpson(&f, a, b, ANTIDERIVATIVE_TOL)
    } else {
        integrate_panels(&f, a.min(b), a.max(b), &curve.breakpoints(), ANTIDERIVATIVE_TOL)
            * if a <= b { 1.0 } else { -1.0 }
    }
}
