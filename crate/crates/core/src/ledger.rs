//! Exact per-step decomposition of a portfolio's log value relative to the
//! market:
//!
//! ```text
//! Δ log V(t) = γ*(t) + [H(π(t)|μ(t)) − H(π(t+1)|μ(t+1))] + [H(π(t+1)|μ(t+1)) − H(π(t)|μ(t+1))]
//!            = energy + entropy change               + control
//! ```
//!
//! The drift increment is `ΔD(t) = γ*(t) + control`. A strategy is
//! energy-entropy when every `ΔD(t) >= 0` and greedy-entropy when every
//! control term is nonnegative.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::simplex::{check_same_len, relative_entropy, EntropyValue, SimplexVector};

/// Slack used for the energy-entropy and greedy-entropy flags.
pub const CLASSIFICATION_SLACK: f64 = 1e-12;

/// Capitalizations over time together with the derived market weights.
#[derive(Debug, Clone)]
pub struct MarketPath {
    labels: Vec<String>,
    caps: Vec<Vec<f64>>,
    weights: Vec<SimplexVector>,
}

impl MarketPath {
    /// Builds a path from strictly positive capitalizations. Labels default
    /// to the time index.
    pub fn from_caps(caps: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..caps.len()).map(|t| t.to_string()).collect();
        Self::with_labels(labels, caps)
    }

    pub fn with_labels(labels: Vec<String>, caps: Vec<Vec<f64>>) -> Result<Self> {
        validate_caps(&labels, &caps)?;
        let weights = caps
            .iter()
            .map(|row| SimplexVector::from_positive(row))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, caps, weights })
    }

    /// Builds a path whose weights are given explicitly; `caps` must be
    /// proportional to `weights` at every time (to 1e-12).
    pub fn with_weights(labels: Vec<String>, caps: Vec<Vec<f64>>, weights: Vec<SimplexVector>) -> Result<Self> {
        validate_caps(&labels, &caps)?;
        if weights.len() != caps.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: caps.len(),
                found: weights.len(),
            });
        }
        for (row, w) in caps.iter().zip(&weights) {
            let derived = SimplexVector::from_positive(row)?;
            check_same_len(&derived, w)?;
            if derived.l1_distance(w)? > 1e-12 {
                return Err(Error::Data(
                    "declared weights are not proportional to capitalizations".into(),
                ));
            }
        }
        Ok(Self { labels, caps, weights })
    }

    /// A path given directly by market weights (capitalizations equal the weights).
    pub fn from_weights(weights: Vec<SimplexVector>) -> Result<Self> {
        let caps: Vec<Vec<f64>> = weights.iter().map(|w| w.as_slice().to_vec()).collect();
        let labels: Vec<String> = (0..caps.len()).map(|t| t.to_string()).collect();
        validate_caps(&labels, &caps)?;
        Ok(Self { labels, caps, weights })
    }

    /// Number of observation times `T + 1`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of assets.
    pub fn n_assets(&self) -> usize {
        self.weights[0].len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn caps(&self) -> &[Vec<f64>] {
        &self.caps
    }

    pub fn weights(&self) -> &[SimplexVector] {
        &self.weights
    }

    pub fn weight(&self, t: usize) -> &SimplexVector {
        &self.weights[t]
    }

    /// Multiplies every capitalization at time `t` by `scale[t]`.
    pub fn rescaled(&self, scale: &[f64]) -> Result<Self> {
        if scale.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "scale",
                expected: self.len(),
                found: scale.len(),
            });
        }
        let caps = self
            .caps
            .iter()
            .zip(scale)
            .map(|(row, s)| row.iter().map(|x| x * s).collect())
            .collect();
        Self::with_labels(self.labels.clone(), caps)
    }
}

fn validate_caps(labels: &[String], caps: &[Vec<f64>]) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::Data("market path has no observations".into()));
    }
    if labels.len() != caps.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: caps.len(),
            found: labels.len(),
        });
    }
    let n = caps[0].len();
    if n == 0 {
        return Err(Error::Data("market path has no assets".into()));
    }
    for (t, row) in caps.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        if let Some(i) = row.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Data(format!(
                "capitalization of asset {i} at t={t} is not strictly positive ({})",
                row[i]
            )));
        }
    }
    Ok(())
}

fn support_check(pi: &SimplexVector, mu: &SimplexVector) -> Result<()> {
    check_same_len(pi, mu)?;
    for (i, (&p, &m)) in pi.iter().zip(mu.iter()).enumerate() {
        if p > 0.0 && m <= 0.0 {
            return Err(Error::ZeroMarketWeight { asset: i });
        }
    }
    Ok(())
}

/// `V(t+1)/V(t) = sum_i pi_i(t) mu_i(t+1)/mu_i(t)`.
pub fn relative_value_step(pi_t: &SimplexVector, mu_t: &SimplexVector, mu_next: &SimplexVector) -> Result<f64> {
    support_check(pi_t, mu_t)?;
    check_same_len(mu_t, mu_next)?;
    Ok(pi_t
        .iter()
        .zip(mu_t.iter().zip(mu_next.iter()))
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, (&m0, &m1))| p * (m1 / m0))
        .sum())
}

/// Free energy of a one-period move from weighted log-returns `dy`:
/// `log sum pi e^{dy} - sum pi dy`.
fn free_energy_of_returns(pi: &SimplexVector, dy: &[f64]) -> f64 {
    let mean: f64 = pi.iter().zip(dy).filter(|(&p, _)| p > 0.0).map(|(&p, &d)| p * d).sum();
    let centered: f64 = pi
        .iter()
        .zip(dy)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &d)| p * (d - mean).exp_m1())
        .sum();
    centered.ln_1p().max(0.0)
}

/// Free energy (excess growth rate) `γ*` of `pi_t` over the move
/// `mu_t -> mu_next`. Nonnegative, and zero only when the log weight changes
/// are constant on the support of `pi_t`.
pub fn free_energy(pi_t: &SimplexVector, mu_t: &SimplexVector, mu_next: &SimplexVector) -> Result<f64> {
    support_check(pi_t, mu_t)?;
    support_check(pi_t, mu_next)?;
    let dy: Vec<f64> = mu_t
        .iter()
        .zip(mu_next.iter())
        .map(|(&m0, &m1)| if m0 > 0.0 && m1 > 0.0 { (m1 / m0).ln() } else { 0.0 })
        .collect();
    Ok(free_energy_of_returns(pi_t, &dy))
}

/// Free energy computed in the dollar numéraire from raw capitalizations:
/// `Δ log Ṽ − sum pi log(X(t+1)/X(t))`.
pub fn free_energy_from_caps(pi_t: &SimplexVector, caps_t: &[f64], caps_next: &[f64]) -> Result<f64> {
    if caps_t.len() != pi_t.len() || caps_next.len() != pi_t.len() {
        return Err(Error::DimensionMismatch {
            expected: pi_t.len(),
            found: caps_t.len().min(caps_next.len()),
        });
    }
    let growth: f64 = pi_t
        .iter()
        .zip(caps_t.iter().zip(caps_next))
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, (&x0, &x1))| p * (x1 / x0))
        .sum();
    let weighted_log: f64 = pi_t
        .iter()
        .zip(caps_t.iter().zip(caps_next))
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, (&x0, &x1))| p * (x1 / x0).ln())
        .sum();
    Ok((growth.ln() - weighted_log).max(0.0))
}

/// One period of the decomposition, covering the interval `[t, t+1]`.
/// Cumulative and level columns are evaluated at `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: usize,
    pub gamma_star: f64,
    /// `H(π(t)|μ(t)) − H(π(t+1)|μ(t+1))`
    pub entropy_change: f64,
    /// `H(π(t+1)|μ(t+1)) − H(π(t)|μ(t+1))`
    pub control: f64,
    pub delta_drift: f64,
    pub log_v_cum: f64,
    /// `H(π(t+1)|μ(t+1))`
    pub entropy_level: f64,
    #[serde(skip)]
    pub delta_log_v: f64,
    #[serde(skip)]
    pub drift_cum: f64,
}

pub const LEDGER_COLUMNS: [&str; 7] = [
    "t",
    "gamma_star",
    "entropy_change",
    "control",
    "delta_drift",
    "log_v_cum",
    "entropy_level",
];

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionLedger {
    pub rows: Vec<LedgerRow>,
    pub initial_entropy: f64,
    pub is_energy_entropy: bool,
    pub is_greedy_entropy: bool,
}

impl DecompositionLedger {
    /// `log V(T)`.
    pub fn log_v(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.log_v_cum)
    }

    /// `D(T)`.
    pub fn drift(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.drift_cum)
    }

    /// Cumulative free energy `Γ*(T)`.
    pub fn cumulative_energy(&self) -> f64 {
        self.rows.iter().map(|r| r.gamma_star).sum()
    }

    /// `H(π(T)|μ(T))`.
    pub fn final_entropy(&self) -> f64 {
        self.rows.last().map_or(self.initial_entropy, |r| r.entropy_level)
    }

    /// `log V(T) − D(T) − H(π(0)|μ(0)) + H(π(T)|μ(T))`, zero up to rounding.
    pub fn summary_residual(&self) -> f64 {
        self.log_v() - self.drift() - self.initial_entropy + self.final_entropy()
    }

    /// Largest one-step violation of `Δ log V = γ* + entropy change + control`.
    pub fn max_step_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.delta_log_v - (r.gamma_star + r.entropy_change + r.control)).abs())
            .fold(0.0, f64::max)
    }

    /// `log V(t)` for `t = 0..=T`.
    pub fn log_v_series(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.rows.iter().map(|r| r.log_v_cum))
            .collect()
    }

    /// `D(t)` for `t = 0..=T`.
    pub fn drift_series(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.rows.iter().map(|r| r.drift_cum))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LEDGER_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                fmt_f64(r.gamma_star),
                fmt_f64(r.entropy_change),
                fmt_f64(r.control),
                fmt_f64(r.delta_drift),
                fmt_f64(r.log_v_cum),
                fmt_f64(r.entropy_level),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn finite_entropy(value: EntropyValue, t: usize) -> Result<f64> {
    match value {
        EntropyValue::Finite(v) => Ok(v),
        EntropyValue::Infinite { asset } => Err(Error::InfiniteEntropy { t, asset }),
    }
}

/// Replays `pi_series` against `path` and records every decomposition term.
///
/// `pi_series[t]` is the portfolio held over `[t, t+1]`; its last entry is
/// only used for the terminal entropy level.
pub fn build_ledger(path: &MarketPath, pi_series: &[SimplexVector]) -> Result<DecompositionLedger> {
    if pi_series.len() != path.len() {
        return Err(Error::LengthMismatch {
            what: "portfolio series",
            expected: path.len(),
            found: pi_series.len(),
        });
    }
    let mu = path.weights();
    let initial_entropy = finite_entropy(relative_entropy(&pi_series[0], &mu[0])?, 0)?;

    let mut rows = Vec::with_capacity(path.len().saturating_sub(1));
    let mut log_v = 0.0;
    let mut drift = 0.0;
    let mut entropy_now = initial_entropy;
    let mut energy_entropy = true;
    let mut greedy = true;

    for t in 0..path.len() - 1 {
        let (pi_t, pi_next) = (&pi_series[t], &pi_series[t + 1]);
        let (mu_t, mu_next) = (&mu[t], &mu[t + 1]);

        let gamma = free_energy(pi_t, mu_t, mu_next).map_err(|e| match e {
            Error::ZeroMarketWeight { asset } => Error::InfiniteEntropy { t, asset },
            other => other,
        })?;
        if !gamma.is_finite() {
            return Err(Error::NonFiniteFreeEnergy { t });
        }
        let delta_log_v = relative_value_step(pi_t, mu_t, mu_next)?.ln();
        let drifted = finite_entropy(relative_entropy(pi_t, mu_next)?, t + 1)?;
        let entropy_next = finite_entropy(relative_entropy(pi_next, mu_next)?, t + 1)?;

        let entropy_change = entropy_now - entropy_next;
        let control = entropy_next - drifted;
        let delta_drift = gamma + control;
        log_v += delta_log_v;
        drift += delta_drift;
        energy_entropy &= delta_drift >= -CLASSIFICATION_SLACK;
        greedy &= control >= -CLASSIFICATION_SLACK;

        rows.push(LedgerRow {
            t,
            gamma_star: gamma,
            entropy_change,
            control,
            delta_drift,
            log_v_cum: log_v,
            entropy_level: entropy_next,
            delta_log_v,
            drift_cum: drift,
        });
        entropy_now = entropy_next;
    }

    Ok(DecompositionLedger {
        rows,
        initial_entropy,
        is_energy_entropy: energy_entropy,
        is_greedy_entropy: greedy && energy_entropy,
    })
}

/// Horizon `(r − log δ)/ε` after which `V(T) >= r` is guaranteed when
/// market weights stay above `δ` and the drift grows at rate at least `ε`.
pub fn outperformance_horizon(r: f64, delta: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok((r - delta.ln()) / epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(w: &[f64]) -> SimplexVector {
        SimplexVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn relative_value_step_examples() {
        let mu0 = sv(&[0.2, 0.3, 0.5]);
        let mu1 = sv(&[0.25, 0.25, 0.5]);
        assert!((relative_value_step(&mu0, &mu0, &mu1).unwrap() - 1.0).abs() < 1e-15);
        let pi = sv(&[0.6, 0.1, 0.3]);
        assert!((relative_value_step(&pi, &mu0, &mu0).unwrap() - 1.0).abs() < 1e-15);
        let half = sv(&[0.5, 0.5]);
        let v = relative_value_step(&half, &half, &sv(&[0.6, 0.4])).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_value_step_rejects_zero_weight_on_support() {
        let err = relative_value_step(&sv(&[0.5, 0.5]), &sv(&[1.0, 0.0]), &sv(&[0.5, 0.5]));
        assert!(matches!(err, Err(Error::ZeroMarketWeight { asset: 1 })));
    }

    #[test]
    fn free_energy_examples() {
        let mu = sv(&[0.3, 0.7]);
        assert_eq!(free_energy(&sv(&[0.4, 0.6]), &mu, &mu).unwrap(), 0.0);

        // Δy = (0.1, 0) from μ(t) = (a, b) with μ(t+1) ∝ (a e^{0.1}, b) needs a
        // renormalization, which shifts both Δy by the same constant.
        let a: f64 = 0.4;
        let b = 0.6;
        let z = a * 0.1f64.exp() + b;
        let mu_next = sv(&[a * 0.1f64.exp() / z, b / z]);
        let g = free_energy(&sv(&[0.5, 0.5]), &sv(&[a, b]), &mu_next).unwrap();
        let expected = ((0.1f64.exp() + 1.0) / 2.0).ln() - 0.05;
        assert!((g - expected).abs() < 1e-14);
        assert!((g - 0.001_249_479_513_625_626).abs() < 1e-12);
    }

    #[test]
    fn free_energy_zero_off_support_moves() {
        // only asset 2 moves relative to 0 and 1, and the portfolio holds 0 and 1
        let mu0 = sv(&[0.25, 0.25, 0.5]);
        let mu1 = sv(&[0.2, 0.2, 0.6]);
        let g = free_energy(&sv(&[0.5, 0.5, 0.0]), &mu0, &mu1).unwrap();
        assert!(g.abs() < 1e-15);
    }

    #[test]
    fn ledger_constant_and_market() {
        let path = MarketPath::from_caps(vec![
            vec![1.0, 2.0, 3.0],
            vec![1.5, 1.8, 3.1],
            vec![1.2, 2.5, 2.9],
            vec![0.9, 2.2, 3.6],
        ])
        .unwrap();
        let pi = SimplexVector::uniform(3).unwrap();
        let series = vec![pi.clone(); path.len()];
        let ledger = build_ledger(&path, &series).unwrap();
        assert!(ledger.rows.iter().all(|r| r.control.abs() < 1e-15));
        assert!(ledger.is_energy_entropy && ledger.is_greedy_entropy);
        let h0 = relative_entropy(&pi, path.weight(0)).unwrap().to_f64();
        let ht = relative_entropy(&pi, path.weight(3)).unwrap().to_f64();
        let expected = ledger.cumulative_energy() + h0 - ht;
        assert!((ledger.log_v() - expected).abs() < 1e-12);

        let market = path.weights().to_vec();
        let ledger = build_ledger(&path, &market).unwrap();
        for r in &ledger.rows {
            assert!(r.delta_drift.abs() < 1e-15);
            assert!(r.log_v_cum.abs() < 1e-15);
        }
    }

    #[test]
    fn ledger_rejects_infinite_entropy_with_asset() {
        let path = MarketPath::from_weights(vec![sv(&[0.5, 0.5]), sv(&[0.4, 0.6])]).unwrap();
        let err = build_ledger(&path, &[sv(&[0.5, 0.5]), sv(&[0.5, 0.5])]);
        assert!(err.is_ok());
        let err = build_ledger(&path, &[sv(&[0.5, 0.5])]);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn outperformance_horizon_examples() {
        let h = outperformance_horizon(1.0, (-1.0f64).exp(), 0.1).unwrap();
        assert!((h - 20.0).abs() < 1e-12);
        let h = outperformance_horizon(1e-300, 1.0, 0.5).unwrap();
        assert!(h.abs() < 1e-299);
        let h = outperformance_horizon(2.0, 0.05, 0.05).unwrap();
        assert!((h - (2.0 + 20f64.ln()) / 0.05).abs() < 1e-12);
        assert!((h - 99.914_645_471_079_81).abs() < 1e-9);
        assert!(outperformance_horizon(1.0, 0.5, 0.0).is_err());
        assert!(outperformance_horizon(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn csv_columns_are_fixed() {
        let path = MarketPath::from_caps(vec![vec![1.0, 1.0], vec![1.1, 0.9]]).unwrap();
        let pi = SimplexVector::uniform(2).unwrap();
        let ledger = build_ledger(&path, &[pi.clone(), pi]).unwrap();
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,gamma_star,entropy_change,control,delta_drift,log_v_cum,entropy_level\n"));
        let mut buf = Vec::new();
        ledger.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<&str> = text
            .trim()
            .trim_matches(|c| c == '{' || c == '}')
            .split(',')
            .map(|kv| kv.split(':').next().unwrap().trim_matches('"'))
            .collect();
        assert_eq!(keys, LEDGER_COLUMNS);
    }
}
