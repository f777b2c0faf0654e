//! Seeded synthetic markets used by fixtures, tests and the `run` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{PriceTable, ValueMode};
use crate::simplex::SimplexVector;

/// First three initial weights of the emerging-market fixture.
pub const EMERGING_LEADING_WEIGHTS: [f64; 3] = [0.138, 0.044, 0.073];
pub const EMERGING_ASSETS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticMarket {
    /// Two assets whose log price ratio is a discrete OU process around 0;
    /// both share a common random-walk factor.
    MeanReverting { steps: usize, kappa: f64, vol: f64 },
    /// Mean reversion for the first half, then a persistent trend in the
    /// log ratio so that asset 1 comes to dominate.
    TrendingThenConcentrating {
        steps: usize,
        kappa: f64,
        vol: f64,
        trend: f64,
    },
    /// Independent Gaussian random walks in log price.
    RandomWalk { n_assets: usize, steps: usize, vol: f64 },
    /// 18 assets with fixed initial weights and random monthly returns.
    Emerging { steps: usize, vol: f64 },
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(4);
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

impl SyntheticMarket {
    /// Generates the market as a price table (log prices start at 0).
    pub fn generate(&self, seed: u64) -> Result<PriceTable> {
        let mut r = rng(seed);
        let log_prices: Vec<Vec<f64>> = match *self {
            SyntheticMarket::MeanReverting { steps, kappa, vol } => {
                check_positive("vol", vol)?;
                let y = ou_series(&mut r, steps, kappa, vol, |_| 0.0);
                pair_from_ratio(&mut r, &y, vol)
            }
            SyntheticMarket::TrendingThenConcentrating {
                steps,
                kappa,
                vol,
                trend,
            } => {
                check_positive("vol", vol)?;
                let half = steps / 2;
                let y = ou_series(&mut r, steps, kappa, vol, |t| {
                    if t >= half {
                        trend * (t - half + 1) as f64
                    } else {
                        0.0
                    }
                });
                pair_from_ratio(&mut r, &y, vol)
            }
            SyntheticMarket::RandomWalk { n_assets, steps, vol } => {
                check_positive("vol", vol)?;
                random_walks(&mut r, n_assets, steps, vol)
            }
            SyntheticMarket::Emerging { steps, vol } => {
                check_positive("vol", vol)?;
                random_walks(&mut r, EMERGING_ASSETS, steps, vol)
            }
        };
        let n = log_prices[0].len();
        let tickers = match self {
            SyntheticMarket::Emerging { .. } => labels("EM", n),
            _ => labels("A", n),
        };
        let dates = labels("t", log_prices.len());
        let values = log_prices
            .into_iter()
            .map(|row| row.into_iter().map(f64::exp).collect())
            .collect();
        PriceTable::new(tickers, dates, values, ValueMode::Price)
    }

    /// Initial market weights the generator is meant to be used with.
    pub fn initial_weights(&self) -> Result<SimplexVector> {
        match self {
            SyntheticMarket::Emerging { .. } => emerging_initial_weights(),
            SyntheticMarket::RandomWalk { n_assets, .. } => SimplexVector::uniform(*n_assets),
            _ => SimplexVector::uniform(2),
        }
    }
}

/// `Y(t+1) = Y(t) − κ(Y(t) − m(t)) + vol·Z` from `Y(0) = 0`, length `steps + 1`.
fn ou_series<M: Fn(usize) -> f64>(r: &mut ChaCha8Rng, steps: usize, kappa: f64, vol: f64, target: M) -> Vec<f64> {
    let mut y = Vec::with_capacity(steps + 1);
    y.push(0.0);
    for t in 0..steps {
        let prev = y[t];
        y.push(prev - kappa * (prev - target(t)) + vol * normal(r));
    }
    y
}

/// Log prices `(c + Y, c)` with a common random-walk factor `c`.
fn pair_from_ratio(r: &mut ChaCha8Rng, y: &[f64], vol: f64) -> Vec<Vec<f64>> {
    let mut common = 0.0;
    y.iter()
        .enumerate()
        .map(|(t, &ratio)| {
            if t > 0 {
                common += 0.5 * vol * normal(r);
            }
            vec![common + ratio, common]
        })
        .collect()
}

fn random_walks(r: &mut ChaCha8Rng, n: usize, steps: usize, vol: f64) -> Vec<Vec<f64>> {
    let mut current = vec![0.0; n];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(current.clone());
    for _ in 0..steps {
        for x in current.iter_mut() {
            *x += vol * normal(r);
        }
        out.push(current.clone());
    }
    out
}

/// 18 weights beginning 0.138, 0.044, 0.073; the remaining mass is spread
/// over the other 15 assets in proportion to 15, 14, ..., 1.
pub fn emerging_initial_weights() -> Result<SimplexVector> {
    let lead: f64 = EMERGING_LEADING_WEIGHTS.iter().sum();
    let rest = EMERGING_ASSETS - EMERGING_LEADING_WEIGHTS.len();
    let total: f64 = (1..=rest).map(|k| k as f64).sum();
    let mut w = EMERGING_LEADING_WEIGHTS.to_vec();
    w.extend((0..rest).map(|k| (1.0 - lead) * (rest - k) as f64 / total));
    SimplexVector::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::to_market_path;

    #[test]
    fn generators_are_seeded() {
        let m = SyntheticMarket::MeanReverting {
            steps: 50,
            kappa: 0.2,
            vol: 0.05,
        };
        assert_eq!(m.generate(3).unwrap(), m.generate(3).unwrap());
        assert_ne!(m.generate(3).unwrap(), m.generate(4).unwrap());
        assert_eq!(m.generate(3).unwrap().n_dates(), 51);
    }

    #[test]
    fn emerging_fixture_weights() {
        let m = SyntheticMarket::Emerging { steps: 24, vol: 0.06 };
        let table = m.generate(1).unwrap();
        assert_eq!(table.n_tickers(), 18);
        let w = m.initial_weights().unwrap();
        let path = to_market_path(&table, Some(&w)).unwrap();
        assert_eq!(&path.weight(0).as_slice()[..3], &EMERGING_LEADING_WEIGHTS);
    }
}
