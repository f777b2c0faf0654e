//! Choosing the two-asset weight curve `q` against a weight function `w`
//! (the expected local time of `Y` at each level).
//!
//! The objective is
//! `Λ(q) = ∫ q(1 − q) w dy + ∫ w d(−q)`.
//! When `w` is continuous, piecewise C¹ and vanishes at infinity, and `q` is
//! continuous, integration by parts gives `Λ(q) = ∫ w q (1 + φ' − q) dy`
//! with `φ = log w`, which is maximized pointwise.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate_panels;
use crate::two_asset::{Smoothness, WeightCurve};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tail mass beyond the integration window.
const TAIL_MASS: f64 = 1e-10;
const QUAD_TOL: f64 = 1e-12;
/// Default width of the interpolation bridging the bang-bang jump at 0.
pub const DEFAULT_ETA: f64 = 1e-3;

#[derive(Clone)]
pub enum WeightFunction {
    /// `e^{−γ|y|}`
    BangBang { gamma: f64 },
    /// `e^{−γy²}`
    OrnsteinUhlenbeck { gamma: f64 },
    /// `e^{φ(y)}` with `φ` C¹; `y_max` bounds the integration window.
    General { phi: RealFn, dphi: RealFn, y_max: f64 },
    /// Linear interpolation between `(y, w)` knots, zero outside.
    Tabulated(Vec<(f64, f64)>),
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFunction::BangBang { gamma } => write!(f, "BangBang {{ gamma: {gamma} }}"),
            WeightFunction::OrnsteinUhlenbeck { gamma } => write!(f, "OrnsteinUhlenbeck {{ gamma: {gamma} }}"),
            WeightFunction::General { y_max, .. } => write!(f, "General {{ y_max: {y_max} }}"),
            WeightFunction::Tabulated(k) => write!(f, "Tabulated({} knots)", k.len()),
        }
    }
}

impl WeightFunction {
    pub fn bang_bang(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(WeightFunction::BangBang { gamma })
    }

    pub fn ornstein_uhlenbeck(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(WeightFunction::OrnsteinUhlenbeck { gamma })
    }

    pub fn general<P, D>(phi: P, dphi: D, y_max: f64) -> Result<Self>
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(y_max > 0.0) || !y_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "integration window {y_max} must be positive"
            )));
        }
        let w = WeightFunction::General {
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            y_max,
        };
        w.check_integrable()?;
        Ok(w)
    }

    pub fn tabulated(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated weight needs at least two knots".into(),
            ));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(&(y, w)) = knots.iter().find(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tabulated weight w({y}) = {w} is not a nonnegative number"
            )));
        }
        Ok(WeightFunction::Tabulated(knots))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WeightFunction::BangBang { .. } => "bang_bang",
            WeightFunction::OrnsteinUhlenbeck { .. } => "ou",
            WeightFunction::General { .. } => "general",
            WeightFunction::Tabulated(_) => "tabulated",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            WeightFunction::BangBang { gamma } | WeightFunction::OrnsteinUhlenbeck { gamma } => Some(*gamma),
            _ => None,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            WeightFunction::BangBang { gamma } => (-gamma * y.abs()).exp(),
            WeightFunction::OrnsteinUhlenbeck { gamma } => (-gamma * y * y).exp(),
            WeightFunction::General { phi, .. } => phi(y).exp(),
            WeightFunction::Tabulated(knots) => {
                let first = knots[0].0;
                let last = knots[knots.len() - 1].0;
                if y < first || y > last {
                    return 0.0;
                }
                let i = knots.partition_point(|k| k.0 <= y).min(knots.len() - 1).max(1);
                let (y0, w0) = knots[i - 1];
                let (y1, w1) = knots[i];
                // two-sided form, exact under y ↦ −y for mirrored knots
                ((y1 - y) * w0 + (y - y0) * w1) / (y1 - y0)
            }
        }
    }

    /// `w'(y)`, taking the average of one-sided values at kinks.
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            WeightFunction::BangBang { gamma } => {
                if y == 0.0 {
                    0.0
                } else {
                    -gamma * y.signum() * self.eval(y)
                }
            }
            WeightFunction::OrnsteinUhlenbeck { gamma } => -2.0 * gamma * y * self.eval(y),
            WeightFunction::General { dphi, .. } => dphi(y) * self.eval(y),
            WeightFunction::Tabulated(knots) => {
                let slope = |i: usize| (knots[i + 1].1 - knots[i].1) / (knots[i + 1].0 - knots[i].0);
                let n = knots.len();
                let first = knots[0].0;
                let last = knots[n - 1].0;
                if y < first || y > last {
                    return 0.0;
                }
                if let Some(i) = knots.iter().position(|k| k.0 == y) {
                    let left = if i > 0 { slope(i - 1) } else { 0.0 };
                    let right = if i + 1 < n { slope(i) } else { 0.0 };
                    return 0.5 * (left + right);
                }
                slope(knots.partition_point(|k| k.0 <= y) - 1)
            }
        }
    }

    /// `φ'(y) = w'(y)/w(y)`; zero where `w` vanishes.
    pub fn log_derivative(&self, y: f64) -> f64 {
        match self {
            WeightFunction::BangBang { gamma } => -gamma * y.signum(),
            WeightFunction::OrnsteinUhlenbeck { gamma } => -2.0 * gamma * y,
            WeightFunction::General { dphi, .. } => dphi(y),
            WeightFunction::Tabulated(_) => {
                let w = self.eval(y);
                if w > 0.0 {
                    self.derivative(y) / w
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of a window outside which the mass of `w` is below 1e-10.
    pub fn window(&self) -> f64 {
        match self {
            WeightFunction::BangBang { gamma } => (2.0 / (gamma * TAIL_MASS)).ln().max(1.0) / gamma,
            WeightFunction::OrnsteinUhlenbeck { gamma } => {
                // e^{−γY²}/(γY) bounds both tails
                let mut y = (1.0 / gamma).sqrt().max(1.0);
                for _ in 0..20 {
                    y = ((1.0 / (gamma * y * TAIL_MASS)).ln().max(1.0) / gamma).sqrt();
                }
                y
            }
            WeightFunction::General { y_max, .. } => *y_max,
            WeightFunction::Tabulated(knots) => knots[0].0.abs().max(knots[knots.len() - 1].0.abs()),
        }
    }

    /// Points where `w` may fail to be differentiable.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            WeightFunction::BangBang { .. } => vec![0.0],
            WeightFunction::Tabulated(k) => k.iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        let y = self.window();
        integrate_panels(&|x| self.eval(x), -y, y, &self.breakpoints(), QUAD_TOL)
    }

    /// Rejects weights whose values at the window edges are not negligible.
    /// Tabulated weights have compact support and always pass.
    pub fn check_integrable(&self) -> Result<()> {
        if let WeightFunction::Tabulated(_) = self {
            return Ok(());
        }
        let y = self.window();
        let edge = self.eval(y).max(self.eval(-y));
        let mass = self.total_mass();
        if !mass.is_finite() || !edge.is_finite() || edge > 1e-8 * mass.max(1.0) {
            return Err(Error::NonIntegrable(format!(
                "w(±{y}) = {edge} is not negligible against total mass {mass}"
            )));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
    }
    Ok(())
}

/// Serializable description of the built-in weight functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    BangBang { gamma: f64 },
    Ou { gamma: f64 },
}

impl WeightSpec {
    pub fn build(self) -> Result<WeightFunction> {
        match self {
            WeightSpec::BangBang { gamma } => WeightFunction::bang_bang(gamma),
            WeightSpec::Ou { gamma } => WeightFunction::ornstein_uhlenbeck(gamma),
        }
    }
}

// ---------------------------------------------------------------------------
// Constraints

/// Pointwise bounds on `q`: a floor `q ≥ δ` and weight-ratio bounds
/// `A ≤ π_i/μ_i ≤ B` with `μ₁ = e^y/(1 + e^y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default)]
    pub floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_bounds: Option<(f64, f64)>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            floor: 0.0,
            ratio_bounds: None,
        }
    }
}

impl ConstraintSet {
    pub fn new(floor: f64, ratio_bounds: Option<(f64, f64)>) -> Result<Self> {
        if !(0.0..=0.5).contains(&floor) {
            return Err(Error::InvalidParameter(format!("floor {floor} outside [0, 1/2]")));
        }
        if let Some((a, b)) = ratio_bounds {
            if !(a > 0.0 && a < 1.0 && b > 1.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "ratio bounds ({a}, {b}) need 0 < A < 1 < B"
                )));
            }
            // the upper bound B·μ₁ falls below any positive floor as y → −∞
            if floor > 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "floor {floor} and ratio bounds ({a}, {b}) admit no q for y < log(δ/(B − δ))"
                )));
            }
        }
        Ok(Self { floor, ratio_bounds })
    }

    /// `[L(y), U(y)]`, the admissible range of `q(y)`.
    pub fn bounds(&self, y: f64) -> (f64, f64) {
        let mut lo = self.floor;
        let mut hi = 1.0f64;
        if let Some((a, b)) = self.ratio_bounds {
            let p = 1.0 / (1.0 + (-y).exp());
            let p2 = 1.0 - p;
            lo = lo.max(a * p).max(1.0 - b * p2);
            hi = hi.min(b * p).min(1.0 - a * p2);
        }
        (lo, hi)
    }

    pub fn clamp(&self, y: f64, q: f64) -> f64 {
        let (lo, hi) = self.bounds(y);
        q.max(lo).min(hi)
    }

    /// Whether `curve` respects the bounds at every sample of the grid.
    pub fn admits(&self, curve: &WeightCurve, lo: f64, hi: f64, points: usize) -> bool {
        let n = points.max(2);
        (0..n).all(|i| {
            let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let (l, u) = self.bounds(y);
            let q = curve.eval(y);
            q >= l - 1e-12 && q <= u + 1e-12
        })
    }
}

// ---------------------------------------------------------------------------
// The functional

fn merged_breakpoints(q: &WeightCurve, w: &WeightFunction) -> Vec<f64> {
    let mut pts = q.breakpoints();
    pts.extend(w.breakpoints());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `∫ w d(−q)` by a midpoint Stieltjes sum on each panel between
/// breakpoints, refined once and Richardson-extrapolated.
fn stieltjes_term(q: &WeightCurve, w: &WeightFunction, y: f64, breakpoints: &[f64]) -> f64 {
    let mut edges = vec![-y];
    edges.extend(breakpoints.iter().copied().filter(|&b| b > -y && b < y));
    edges.push(y);
    let sum = |a: f64, b: f64, cells: usize| -> f64 {
        let h = (b - a) / cells as f64;
        let mut total = 0.0;
        let mut q_left = q.eval(a);
        for i in 0..cells {
            let right = if i + 1 == cells { b } else { a + (i + 1) as f64 * h };
            let q_right = q.eval(right);
            total += w.eval(a + (i as f64 + 0.5) * h) * (q_left - q_right);
            q_left = q_right;
        }
        total
    };
    edges
        .windows(2)
        .map(|e| {
            let (a, b) = (e[0], e[1]);
            if q.eval(a) == q.eval(b) && matches!(q, WeightCurve::Constant(_)) {
                return 0.0;
            }
            let cells = (((b - a) / 1e-3).ceil() as usize).clamp(256, 1 << 20);
            let coarse = sum(a, b, cells);
            let fine = sum(a, b, 2 * cells);
            (4.0 * fine - coarse) / 3.0
        })
        .sum()
}

/// `Λ(q) = ∫ q(1 − q) w dy + ∫ w d(−q)` over the window of `w`.
pub fn lambda_functional(q: &WeightCurve, w: &WeightFunction) -> Result<f64> {
    w.check_integrable()?;
    let y = w.window();
    let breaks = merged_breakpoints(q, w);
    let smooth = integrate_panels(
        &|x| {
            let qx = q.eval(x);
            qx * (1.0 - qx) * w.eval(x)
        },
        -y,
        y,
        &breaks,
        QUAD_TOL,
    );
    Ok(smooth + stieltjes_term(q, w, y, &breaks))
}

/// `∫ (q(1 − q) w + q w') dy`, equal to [`lambda_functional`] for
/// continuous `q` when `w` vanishes at infinity.
pub fn lambda_integrated_form(q: &WeightCurve, w: &WeightFunction) -> Result<f64> {
    w.check_integrable()?;
    let y = w.window();
    Ok(integrate_panels(
        &|x| {
            let qx = q.eval(x);
            qx * (1.0 - qx) * w.eval(x) + qx * w.derivative(x)
        },
        -y,
        y,
        &merged_breakpoints(q, w),
        QUAD_TOL,
    ))
}

/// Maximizer of `q ↦ q(c − q)` over `[lo, hi]`.
fn pointwise_argmax(c: f64, lo: f64, hi: f64) -> f64 {
    (0.5 * c).max(lo).min(hi)
}

#[derive(Debug, Clone)]
pub struct OptimalCurve {
    pub curve: WeightCurve,
    /// `Λ` of the returned curve.
    pub value: f64,
    /// `∫ sup_q w q(1 + φ' − q) dy`, the supremum over admissible curves.
    pub supremum: f64,
    /// Bound on `supremum − value` due to interpolation near a jump of the
    /// pointwise maximizer; zero when the maximizer is continuous.
    pub gap_bound: f64,
}

/// Pointwise maximizer of the integrand, clamped to the constraints. For
/// the bang-bang weight the maximizer jumps at 0 and is bridged linearly
/// through `q(0) = 1/2` over `[−eta, eta]`.
pub fn optimal_q(w: &WeightFunction, constraints: Option<&ConstraintSet>, eta: f64) -> Result<OptimalCurve> {
    let cons = constraints.copied().unwrap_or_default();
    let base = match w {
        WeightFunction::BangBang { gamma } => {
            if !(eta > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "interpolation width {eta} must be positive"
                )));
            }
            let plus = 0.5 * (1.0 - gamma).max(0.0);
            WeightCurve::piecewise_linear(vec![(-eta, 1.0 - plus), (0.0, 0.5), (eta, plus)])?
        }
        WeightFunction::OrnsteinUhlenbeck { gamma } => {
            let edge = 0.5 / gamma;
            WeightCurve::piecewise_linear(vec![(-edge, 1.0), (edge, 0.0)])?
        }
        _ => {
            let wf = w.clone();
            let kinks = w.breakpoints();
            WeightCurve::custom(
                move |y| pointwise_argmax(1.0 + wf.log_derivative(y), 0.0, 1.0),
                Smoothness::FiniteVariation,
                kinks,
            )
        }
    };
    let curve = if constraints.is_some() {
        let kinks = base.breakpoints();
        let inner = base.clone();
        WeightCurve::custom(
            move |y| cons.clamp(y, inner.eval(y)),
            Smoothness::FiniteVariation,
            kinks,
        )
    } else {
        base
    };
    let value = lambda_functional(&curve, w)?;

    let y = w.window();
    let sup_integrand = |x: f64| {
        let c = 1.0 + w.log_derivative(x);
        let (lo, hi) = cons.bounds(x);
        let q = pointwise_argmax(c, lo, hi);
        w.eval(x) * q * (c - q)
    };
    let supremum = integrate_panels(&sup_integrand, -y, y, &merged_breakpoints(&curve, w), QUAD_TOL);

    let gap_bound = match w {
        WeightFunction::BangBang { .. } => {
            // on each side the bridge lies between 1/2 and the maximizer, and
            // the concave integrand is smallest at the 1/2 end
            [-1.0, 1.0]
                .iter()
                .map(|&side| {
                    let x = side * eta;
                    let c = 1.0 + w.log_derivative(x);
                    let (lo, hi) = cons.bounds(x);
                    let q = pointwise_argmax(c, lo, hi);
                    q * (c - q) - 0.5 * (c - 0.5)
                })
                .sum::<f64>()
                * eta
                * w.eval(0.0)
        }
        _ => 0.0,
    };
    Ok(OptimalCurve {
        curve,
        value,
        supremum,
        gap_bound,
    })
}

/// `½(1 + 2a/b²)`: the weight maximizing the growth rate `qa + ½q(1 − q)b²`.
pub fn growth_rate_weight(a: f64, b: f64) -> Result<f64> {
    if b == 0.0 || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("volatility {b} must be nonzero")));
    }
    Ok(0.5 * (1.0 + 2.0 * a / (b * b)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalReport {
    pub w_kind: String,
    pub gamma: Option<f64>,
    pub constraints: Option<ConstraintSet>,
    pub eta: f64,
    pub lambda_eq_weight: f64,
    pub lambda_optimal: f64,
    pub lambda_supremum: f64,
    pub gap_bound: f64,
    pub q_samples: Vec<(f64, f64)>,
}

pub fn variational_report(
    w: &WeightFunction,
    constraints: Option<&ConstraintSet>,
    eta: f64,
) -> Result<VariationalReport> {
    let opt = optimal_q(w, constraints, eta)?;
    let half = lambda_functional(&WeightCurve::Constant(0.5), w)?;
    let span = w.window().min(4.0);
    let q_samples = (0..=100)
        .map(|i| {
            let y = -span + 2.0 * span * i as f64 / 100.0;
            (y, opt.curve.eval(y))
        })
        .collect();
    Ok(VariationalReport {
        w_kind: w.kind().to_string(),
        gamma: w.gamma(),
        constraints: constraints.copied(),
        eta,
        lambda_eq_weight: half,
        lambda_optimal: opt.value,
        lambda_supremum: opt.supremum,
        gap_bound: opt.gap_bound,
        q_samples,
    })
}
