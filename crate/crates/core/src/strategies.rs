//! Portfolio-weight constructors: constant-weighted, market, flows along
//! entropy-increasing vector fields, budgeted reverse flows and the
//! λ-strategy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{free_energy, MarketPath};
use crate::simplex::{check_same_len, SimplexVector};

/// Increasing transform `R` for the functionally generated gradient field
/// `U ∝ ∇R(H_μ) = R'(H_μ) ∇H_μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneTransform {
    /// `R(h) = log(1 + h)`
    Log1p,
    /// `R(h) = h^2`
    Square,
    /// `R(h) = exp(rate * h) / rate`
    Exponential { rate: f64 },
}

impl MonotoneTransform {
    fn derivative(self, h: f64) -> f64 {
        match self {
            MonotoneTransform::Log1p => 1.0 / (1.0 + h),
            MonotoneTransform::Square => 2.0 * h,
            MonotoneTransform::Exponential { rate } => (rate * h).exp(),
        }
    }
}

/// A direction field on the simplex whose forward flow never decreases the
/// relative entropy to the market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorField {
    /// Centered gradient of `H_μ`, restricted to the support of `π`.
    Gradient,
    FunctionalGradient(MonotoneTransform),
    /// Straight line toward the corner maximizing `π_i / μ_i` (lowest index
    /// on ties). That corner always has higher relative entropy than `π`.
    FlowIn,
    /// `U = π − μ`; zero at `π = μ`.
    FlowOut,
}

impl VectorField {
    /// Evaluates `U_μ(π)`. `pi` may be a raw intermediate integration point.
    pub fn evaluate(&self, pi: &[f64], mu: &SimplexVector) -> Result<Vec<f64>> {
        if pi.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: pi.len(),
            });
        }
        match self {
            VectorField::Gradient => entropy_gradient(pi, mu),
            VectorField::FunctionalGradient(transform) => {
                let scale = transform.derivative(raw_entropy(pi, mu));
                Ok(entropy_gradient(pi, mu)?.into_iter().map(|g| scale * g).collect())
            }
            VectorField::FlowIn => {
                let mut best = 0;
                let mut best_ratio = f64::NEG_INFINITY;
                for (i, (&p, &m)) in pi.iter().zip(mu.iter()).enumerate() {
                    let ratio = if m > 0.0 {
                        p / m
                    } else if p > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    };
                    if ratio > best_ratio {
                        best_ratio = ratio;
                        best = i;
                    }
                }
                Ok(pi
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if i == best { 1.0 - p } else { -p })
                    .collect())
            }
            VectorField::FlowOut => Ok(pi.iter().zip(mu.iter()).map(|(&p, &m)| p - m).collect()),
        }
    }
}

/// `∇H_μ(π)` centered over the support of `π`: components
/// `log(π_i/μ_i) − mean_j log(π_j/μ_j)`, zero off the support.
pub fn entropy_gradient(pi: &[f64], mu: &SimplexVector) -> Result<Vec<f64>> {
    let mut logs = vec![0.0; pi.len()];
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (&p, &m)) in pi.iter().zip(mu.iter()).enumerate() {
        if p > 0.0 {
            if m <= 0.0 {
                return Err(Error::ZeroMarketWeight { asset: i });
            }
            logs[i] = (p / m).ln();
            sum += logs[i];
            count += 1;
        }
    }
    if count == 0 {
        return Ok(logs);
    }
    let mean = sum / count as f64;
    Ok(pi
        .iter()
        .zip(logs)
        .map(|(&p, l)| if p > 0.0 { l - mean } else { 0.0 })
        .collect())
}

fn raw_entropy(pi: &[f64], mu: &SimplexVector) -> f64 {
    pi.iter()
        .zip(mu.iter())
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &m)| p * (p / m).ln())
        .sum::<f64>()
}

/// Substep resolution for flow integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowControls {
    pub substeps_per_unit: u32,
    pub max_step: Option<f64>,
}

impl Default for FlowControls {
    fn default() -> Self {
        Self {
            substeps_per_unit: 64,
            max_step: None,
        }
    }
}

impl FlowControls {
    fn schedule(&self, duration: f64) -> (usize, f64) {
        let mut n = (duration * self.substeps_per_unit.max(1) as f64).ceil().max(1.0) as usize;
        if let Some(max_step) = self.max_step.filter(|m| *m > 0.0) {
            n = n.max((duration / max_step).ceil() as usize);
        }
        (n, duration / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub pi: SimplexVector,
    /// Flow time actually integrated.
    pub elapsed: f64,
    /// Substeps shortened to keep every coordinate nonnegative.
    pub clipped_substeps: usize,
    pub stopped_by_budget: bool,
    /// `H(π(0)|μ) − H(π(end)|μ)`.
    pub entropy_consumed: f64,
}

const BISECTION_ITERS: usize = 30;

/// Moves `x` along `direction` by `h`, shortening the move so that no
/// coordinate becomes negative. Returns whether the move was shortened.
fn clipped_move(x: &[f64], direction: &[f64], h: f64) -> (Vec<f64>, bool) {
    let mut theta = 1.0f64;
    let mut binding = None;
    for (i, (&xi, &di)) in x.iter().zip(direction).enumerate() {
        if di < 0.0 && xi + h * di < 0.0 {
            let limit = xi / (h * -di);
            if limit < theta {
                theta = limit;
                binding = Some(i);
            }
        }
    }
    let mut out: Vec<f64> = x
        .iter()
        .zip(direction)
        .map(|(&xi, &di)| (xi + theta * h * di).max(0.0))
        .collect();
    if let Some(i) = binding {
        out[i] = 0.0;
    }
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|v| *v /= sum);
    }
    (out, binding.is_some())
}

/// One midpoint substep of `π' = sign * U(π)`.
fn midpoint_step(field: &VectorField, x: &[f64], mu: &SimplexVector, h: f64, sign: f64) -> Result<(Vec<f64>, bool)> {
    let k1: Vec<f64> = field.evaluate(x, mu)?.into_iter().map(|u| sign * u).collect();
    let (mid, clipped_mid) = clipped_move(x, &k1, 0.5 * h);
    let k2: Vec<f64> = field.evaluate(&mid, mu)?.into_iter().map(|u| sign * u).collect();
    let (next, clipped) = clipped_move(x, &k2, h);
    Ok((next, clipped || clipped_mid))
}

fn euler_step(field: &VectorField, x: &[f64], mu: &SimplexVector, h: f64, sign: f64) -> Result<(Vec<f64>, bool)> {
    let k1: Vec<f64> = field.evaluate(x, mu)?.into_iter().map(|u| sign * u).collect();
    Ok(clipped_move(x, &k1, h))
}

fn check_flow_inputs(pi: &SimplexVector, mu_next: &SimplexVector, duration: f64) -> Result<()> {
    check_same_len(pi, mu_next)?;
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "flow duration {duration} must be finite and >= 0"
        )));
    }
    if let Some(asset) = pi.iter().zip(mu_next.iter()).position(|(&p, &m)| p > 0.0 && m <= 0.0) {
        return Err(Error::ZeroMarketWeight { asset });
    }
    Ok(())
}

/// Integrates the forward flow `π'(u) = U_{μ_next}(π(u))` for `duration`.
/// Relative entropy to `mu_next` never decreases across a substep.
pub fn flow_step(
    field: &VectorField,
    pi: &SimplexVector,
    mu_next: &SimplexVector,
    duration: f64,
    controls: &FlowControls,
) -> Result<FlowOutcome> {
    check_flow_inputs(pi, mu_next, duration)?;
    let h0 = raw_entropy(pi.as_slice(), mu_next);
    if duration == 0.0 {
        return Ok(FlowOutcome {
            pi: pi.clone(),
            elapsed: 0.0,
            clipped_substeps: 0,
            stopped_by_budget: false,
            entropy_consumed: 0.0,
        });
    }
    let (n, h) = controls.schedule(duration);
    let mut x = pi.as_slice().to_vec();
    let mut entropy = h0;
    let mut clipped_substeps = 0;
    for _ in 0..n {
        let (mut next, mut clipped) = midpoint_step(field, &x, mu_next, h, 1.0)?;
        let mut next_entropy = raw_entropy(&next, mu_next);
        if next_entropy < entropy {
            // a convex H grows along any outward Euler step
            (next, clipped) = euler_step(field, &x, mu_next, h, 1.0)?;
            next_entropy = raw_entropy(&next, mu_next).max(entropy);
        }
        if clipped {
            clipped_substeps += 1;
            log::debug!("flow substep clipped at the simplex boundary");
        }
        x = next;
        entropy = next_entropy;
    }
    Ok(FlowOutcome {
        pi: SimplexVector::new(x)?,
        elapsed: duration,
        clipped_substeps,
        stopped_by_budget: false,
        entropy_consumed: h0 - entropy,
    })
}

/// Integrates the reverse flow `π'(u) = −U(π(u))` until `duration` or until
/// the entropy drop `H(π(0)|μ) − H(π(u)|μ)` would exceed `budget`, whichever
/// comes first. The crossing substep is bisected so the drop never exceeds
/// the budget.
pub fn reverse_flow_with_budget(
    field: &VectorField,
    pi: &SimplexVector,
    mu_next: &SimplexVector,
    budget: f64,
    duration: f64,
    controls: &FlowControls,
) -> Result<FlowOutcome> {
    check_flow_inputs(pi, mu_next, duration)?;
    if !(budget >= 0.0) {
        return Err(Error::InvalidParameter(format!("entropy budget {budget} must be >= 0")));
    }
    let unchanged = |elapsed| FlowOutcome {
        pi: pi.clone(),
        elapsed,
        clipped_substeps: 0,
        stopped_by_budget: elapsed == 0.0 && duration > 0.0,
        entropy_consumed: 0.0,
    };
    if duration == 0.0 {
        return Ok(unchanged(0.0));
    }
    if budget == 0.0 {
        return Ok(unchanged(0.0));
    }
    let h0 = raw_entropy(pi.as_slice(), mu_next);
    let (n, h) = controls.schedule(duration);
    let mut x = pi.as_slice().to_vec();
    let mut clipped_substeps = 0;
    let mut elapsed = 0.0;
    let mut stopped_by_budget = false;
    for _ in 0..n {
        let (next, clipped) = midpoint_step(field, &x, mu_next, h, -1.0)?;
        let drop = h0 - raw_entropy(&next, mu_next);
        if drop <= budget {
            if clipped {
                clipped_substeps += 1;
                log::debug!("reverse flow substep clipped at the simplex boundary");
            }
            x = next;
            elapsed += h;
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = x.clone();
        for _ in 0..BISECTION_ITERS {
            let theta = 0.5 * (lo + hi);
            let (candidate, _) = midpoint_step(field, &x, mu_next, theta * h, -1.0)?;
            if h0 - raw_entropy(&candidate, mu_next) <= budget {
                lo = theta;
                best = candidate;
            } else {
                hi = theta;
            }
        }
        x = best;
        elapsed += lo * h;
        stopped_by_budget = true;
        break;
    }
    let pi_end = SimplexVector::new(x)?;
    let consumed = h0 - raw_entropy(pi_end.as_slice(), mu_next);
    Ok(FlowOutcome {
        pi: pi_end,
        elapsed,
        clipped_substeps,
        stopped_by_budget,
        entropy_consumed: consumed,
    })
}

/// The λ-strategy: after observing `μ(t+1)`, move from `π(t)` toward
/// `μ(t+1)` by the linearized step
/// `s = min(1, λ γ*(t) / (|∇H(π(t)|μ(t+1)) · v| |μ(t+1) − π(t)|))`,
/// where `v` is the unit vector toward `μ(t+1)`.
pub fn run_lambda_strategy(path: &MarketPath, lambda: f64, pi0: &SimplexVector) -> Result<Vec<SimplexVector>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    check_same_len(pi0, path.weight(0))?;
    let mu = path.weights();
    let mut series = Vec::with_capacity(path.len());
    series.push(pi0.clone());
    for t in 0..path.len() - 1 {
        let pi = &series[t];
        let mu_next = &mu[t + 1];
        let gamma = free_energy(pi, &mu[t], mu_next)?;
        if !gamma.is_finite() {
            return Err(Error::NonFiniteFreeEnergy { t });
        }
        let s = lambda_step_size(pi, mu_next, lambda * gamma)?;
        let next = if s == 0.0 { pi.clone() } else { pi.mix(mu_next, s)? };
        series.push(next);
    }
    Ok(series)
}

/// Linearized step fraction toward `mu_next` spending entropy `budget`.
pub fn lambda_step_size(pi: &SimplexVector, mu_next: &SimplexVector, budget: f64) -> Result<f64> {
    check_same_len(pi, mu_next)?;
    if budget <= 0.0 {
        return Ok(0.0);
    }
    let d: Vec<f64> = mu_next.iter().zip(pi.iter()).map(|(&m, &p)| m - p).collect();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut slope = 0.0;
    for (i, (&p, &di)) in pi.iter().zip(&d).enumerate() {
        if di == 0.0 {
            continue;
        }
        if p == 0.0 {
            // log(0) along a direction that adds mass: the slope is infinite
            return Ok(0.0);
        }
        let m = mu_next[i];
        if m <= 0.0 {
            return Err(Error::ZeroMarketWeight { asset: i });
        }
        slope += (p / m).ln() * di / norm;
    }
    let slope = slope.abs();
    if slope == 0.0 {
        return Ok(1.0);
    }
    Ok((budget / slope / norm).min(1.0))
}

pub fn make_constant(pi: &SimplexVector, length: usize) -> Vec<SimplexVector> {
    vec![pi.clone(); length]
}

pub fn make_market(path: &MarketPath) -> Vec<SimplexVector> {
    path.weights().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    Forward,
    Reverse,
}

/// Starting weights for a strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialWeights {
    Market,
    Equal,
    Explicit(SimplexVector),
}

impl InitialWeights {
    pub fn resolve(&self, path: &MarketPath) -> Result<SimplexVector> {
        match self {
            InitialWeights::Market => Ok(path.weight(0).clone()),
            InitialWeights::Equal => SimplexVector::uniform(path.n_assets()),
            InitialWeights::Explicit(w) => {
                check_same_len(w, path.weight(0))?;
                Ok(w.clone())
            }
        }
    }
}

/// Declarative rebalancing rule that can be replayed deterministically.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Constant {
        pi0: InitialWeights,
    },
    Market,
    Flow {
        field: VectorField,
        direction: FlowDirection,
        /// Fraction of each period's free energy the reverse flow may spend.
        lambda: f64,
        pi0: InitialWeights,
        /// Flow time per observation period.
        duration: f64,
        controls: FlowControls,
    },
    Lambda {
        lambda: f64,
        pi0: InitialWeights,
    },
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StrategySpec::Flow { lambda, duration, .. } => {
                check_lambda(*lambda)?;
                if !(*duration >= 0.0) {
                    return Err(Error::InvalidParameter(format!("duration {duration} must be >= 0")));
                }
                Ok(())
            }
            StrategySpec::Lambda { lambda, .. } => check_lambda(*lambda),
            _ => Ok(()),
        }
    }

    /// Replays the rule on `path`, returning `π(t)` for every observation time.
    pub fn run(&self, path: &MarketPath) -> Result<Vec<SimplexVector>> {
        self.validate()?;
        match self {
            StrategySpec::Constant { pi0 } => Ok(make_constant(&pi0.resolve(path)?, path.len())),
            StrategySpec::Market => Ok(make_market(path)),
            StrategySpec::Lambda { lambda, pi0 } => run_lambda_strategy(path, *lambda, &pi0.resolve(path)?),
            StrategySpec::Flow {
                field,
                direction,
                lambda,
                pi0,
                duration,
                controls,
            } => {
                let mu = path.weights();
                let mut series = Vec::with_capacity(path.len());
                series.push(pi0.resolve(path)?);
                let mut clipped = 0;
                for t in 0..path.len() - 1 {
                    let pi = &series[t];
                    let outcome = match direction {
                        FlowDirection::Forward => flow_step(field, pi, &mu[t + 1], *duration, controls)?,
                        FlowDirection::Reverse => {
                            let budget = lambda * free_energy(pi, &mu[t], &mu[t + 1])?;
                            reverse_flow_with_budget(field, pi, &mu[t + 1], budget, *duration, controls)?
                        }
                    };
                    clipped += outcome.clipped_substeps;
                    series.push(outcome.pi);
                }
                if clipped > 0 {
                    log::warn!("{clipped} flow substeps were clipped at the simplex boundary");
                }
                Ok(series)
            }
        }
    }
}

/// Flat key-value form of [`StrategySpec`] used in config files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    /// `constant`, `market`, `flow` or `lambda`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi0: Option<InitialWeightsConfig>,
    /// `gradient`, `functional_gradient`, `flow_in` or `flow_out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// `log1p`, `square` or `exponential`, for `functional_gradient`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<FlowDirection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialWeightsConfig {
    /// `"market"` or `"equal"`
    Named(String),
    Explicit(Vec<f64>),
}

impl InitialWeightsConfig {
    fn resolve(&self) -> Result<InitialWeights> {
        match self {
            InitialWeightsConfig::Named(name) => match name.as_str() {
                "market" => Ok(InitialWeights::Market),
                "equal" => Ok(InitialWeights::Equal),
                other => Err(Error::InvalidParameter(format!("unknown pi0 `{other}`"))),
            },
            InitialWeightsConfig::Explicit(w) => Ok(InitialWeights::Explicit(SimplexVector::new(w.clone())?)),
        }
    }

    fn from_weights(w: &InitialWeights) -> Self {
        match w {
            InitialWeights::Market => InitialWeightsConfig::Named("market".into()),
            InitialWeights::Equal => InitialWeightsConfig::Named("equal".into()),
            InitialWeights::Explicit(v) => InitialWeightsConfig::Explicit(v.as_slice().to_vec()),
        }
    }
}

impl StrategyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("strategy config is always serializable")
    }

    pub fn to_spec(&self) -> Result<StrategySpec> {
        let pi0 = match &self.pi0 {
            Some(p) => p.resolve()?,
            None => InitialWeights::Market,
        };
        let spec = match self.kind.as_str() {
            "constant" => StrategySpec::Constant {
                pi0: self
                    .pi0
                    .as_ref()
                    .map(|p| p.resolve())
                    .transpose()?
                    .unwrap_or(InitialWeights::Equal),
            },
            "market" => StrategySpec::Market,
            "lambda" => StrategySpec::Lambda {
                lambda: self.lambda.ok_or_else(|| missing("lambda"))?,
                pi0,
            },
            "flow" => {
                let field = match self.field.as_deref().unwrap_or("gradient") {
                    "gradient" => VectorField::Gradient,
                    "flow_in" => VectorField::FlowIn,
                    "flow_out" => VectorField::FlowOut,
                    "functional_gradient" => {
                        VectorField::FunctionalGradient(match self.transform.as_deref().unwrap_or("log1p") {
                            "log1p" => MonotoneTransform::Log1p,
                            "square" => MonotoneTransform::Square,
                            "exponential" => MonotoneTransform::Exponential {
                                rate: self.rate.unwrap_or(1.0),
                            },
                            other => return Err(Error::InvalidParameter(format!("unknown transform `{other}`"))),
                        })
                    }
                    other => return Err(Error::InvalidParameter(format!("unknown field `{other}`"))),
                };
                let defaults = FlowControls::default();
                StrategySpec::Flow {
                    field,
                    direction: self.direction.unwrap_or(FlowDirection::Reverse),
                    lambda: self.lambda.unwrap_or(1.0),
                    pi0,
                    duration: self.duration.unwrap_or(1.0),
                    controls: FlowControls {
                        substeps_per_unit: self.substeps.unwrap_or(defaults.substeps_per_unit),
                        max_step: self.max_step,
                    },
                }
            }
            other => return Err(Error::InvalidParameter(format!("unknown strategy kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn missing(key: &str) -> Error {
    Error::InvalidParameter(format!("strategy key `{key}` is required"))
}

impl From<&StrategySpec> for StrategyConfig {
    fn from(spec: &StrategySpec) -> Self {
        match spec {
            StrategySpec::Constant { pi0 } => StrategyConfig {
                kind: "constant".into(),
                pi0: Some(InitialWeightsConfig::from_weights(pi0)),
                ..Default::default()
            },
            StrategySpec::Market => StrategyConfig {
                kind: "market".into(),
                ..Default::default()
            },
            StrategySpec::Lambda { lambda, pi0 } => StrategyConfig {
                kind: "lambda".into(),
                lambda: Some(*lambda),
                pi0: Some(InitialWeightsConfig::from_weights(pi0)),
                ..Default::default()
            },
            StrategySpec::Flow {
                field,
                direction,
                lambda,
                pi0,
                duration,
                controls,
            } => {
                let (name, transform, rate) = match field {
                    VectorField::Gradient => ("gradient", None, None),
                    VectorField::FlowIn => ("flow_in", None, None),
                    VectorField::FlowOut => ("flow_out", None, None),
                    VectorField::FunctionalGradient(t) => match t {
                        MonotoneTransform::Log1p => ("functional_gradient", Some("log1p"), None),
                        MonotoneTransform::Square => ("functional_gradient", Some("square"), None),
                        MonotoneTransform::Exponential { rate } => {
                            ("functional_gradient", Some("exponential"), Some(*rate))
                        }
                    },
                };
                StrategyConfig {
                    kind: "flow".into(),
                    lambda: Some(*lambda),
                    pi0: Some(InitialWeightsConfig::from_weights(pi0)),
                    field: Some(name.into()),
                    transform: transform.map(String::from),
                    rate,
                    direction: Some(*direction),
                    duration: Some(*duration),
                    substeps: Some(controls.substeps_per_unit),
                    max_step: controls.max_step,
                }
            }
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}
