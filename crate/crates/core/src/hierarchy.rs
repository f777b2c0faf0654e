//! Two-level portfolios (sectors of stocks) and attribution of relative
//! entropy and free energy across the levels.
//!
//! Deeper trees compose by applying the same rules recursively to each
//! sector portfolio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::free_energy;
use crate::simplex::{relative_entropy, EntropyValue, SimplexVector};

const SLACK: f64 = 1e-12;
const ATTRIBUTION_SLACK: f64 = 1e-10;

/// Partition of the flat asset universe into disjoint sectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorMap {
    names: Vec<String>,
    members: Vec<Vec<usize>>,
    n_assets: usize,
}

impl SectorMap {
    /// `members[i]` lists the flat indices of sector `i`, in sector order.
    /// Every index in `0..n_assets` must appear in exactly one sector.
    pub fn new(n_assets: usize, members: Vec<Vec<usize>>) -> Result<Self> {
        let names = (0..members.len()).map(|i| format!("sector{i}")).collect();
        Self::with_names(n_assets, names, members)
    }

    pub fn with_names(n_assets: usize, names: Vec<String>, members: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != members.len() {
            return Err(Error::SectorMap(format!(
                "{} names for {} sectors",
                names.len(),
                members.len()
            )));
        }
        if members.is_empty() {
            return Err(Error::SectorMap("no sectors".into()));
        }
        let mut owner = vec![None; n_assets];
        for (s, list) in members.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::SectorMap(format!("sector {s} is empty")));
            }
            for &k in list {
                if k >= n_assets {
                    return Err(Error::SectorMap(format!("asset index {k} out of range in sector {s}")));
                }
                if let Some(prev) = owner[k] {
                    return Err(Error::SectorMap(format!("asset {k} belongs to sectors {prev} and {s}")));
                }
                owner[k] = Some(s);
            }
        }
        if let Some(k) = owner.iter().position(Option::is_none) {
            return Err(Error::SectorMap(format!("asset {k} belongs to no sector")));
        }
        Ok(Self {
            names,
            members,
            n_assets,
        })
    }

    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let members = sizes
            .iter()
            .map(|&n| {
                let block = (start..start + n).collect();
                start += n;
                block
            })
            .collect();
        Self::new(start, members)
    }

    pub fn n_sectors(&self) -> usize {
        self.members.len()
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn members(&self, sector: usize) -> &[usize] {
        &self.members[sector]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Splits a flat vector into sector totals and within-sector
    /// proportions. Sectors with zero total get uniform proportions.
    pub fn split(&self, flat: &SimplexVector) -> Result<(SimplexVector, Vec<SimplexVector>)> {
        if flat.len() != self.n_assets {
            return Err(Error::DimensionMismatch {
                expected: self.n_assets,
                found: flat.len(),
            });
        }
        let mut totals = Vec::with_capacity(self.n_sectors());
        let mut parts = Vec::with_capacity(self.n_sectors());
        for list in &self.members {
            let values: Vec<f64> = list.iter().map(|&k| flat[k]).collect();
            let total: f64 = values.iter().sum();
            totals.push(total);
            parts.push(if total > 0.0 {
                SimplexVector::new(values.iter().map(|v| v / total).collect())?
            } else {
                SimplexVector::uniform(list.len())?
            });
        }
        Ok((SimplexVector::new(totals)?, parts))
    }
}

/// A portfolio of sector portfolios: `π = Σ_i λ_i π_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPortfolio {
    map: SectorMap,
    sector_weights: SimplexVector,
    sector_portfolios: Vec<SimplexVector>,
}

impl HierarchicalPortfolio {
    pub fn new(map: SectorMap, sector_weights: SimplexVector, sector_portfolios: Vec<SimplexVector>) -> Result<Self> {
        if sector_weights.len() != map.n_sectors() {
            return Err(Error::DimensionMismatch {
                expected: map.n_sectors(),
                found: sector_weights.len(),
            });
        }
        if sector_portfolios.len() != map.n_sectors() {
            return Err(Error::LengthMismatch {
                what: "sector portfolios",
                expected: map.n_sectors(),
                found: sector_portfolios.len(),
            });
        }
        for (i, p) in sector_portfolios.iter().enumerate() {
            if p.len() != map.members(i).len() {
                return Err(Error::DimensionMismatch {
                    expected: map.members(i).len(),
                    found: p.len(),
                });
            }
        }
        Ok(Self {
            map,
            sector_weights,
            sector_portfolios,
        })
    }

    /// Decomposes a flat portfolio along `map`.
    pub fn from_flat(map: SectorMap, flat: &SimplexVector) -> Result<Self> {
        let (weights, parts) = map.split(flat)?;
        Self::new(map, weights, parts)
    }

    pub fn map(&self) -> &SectorMap {
        &self.map
    }

    pub fn sector_weights(&self) -> &SimplexVector {
        &self.sector_weights
    }

    pub fn sector_portfolios(&self) -> &[SimplexVector] {
        &self.sector_portfolios
    }

    /// The total portfolio over the flat universe.
    pub fn flatten(&self) -> Result<SimplexVector> {
        let mut flat = vec![0.0; self.map.n_assets()];
        for (i, part) in self.sector_portfolios.iter().enumerate() {
            let lambda = self.sector_weights[i];
            for (&k, &w) in self.map.members(i).iter().zip(part.iter()) {
                flat[k] = lambda * w;
            }
        }
        SimplexVector::new(flat)
    }

    fn check_structure(&self, other: &HierarchicalPortfolio) -> Result<()> {
        if self.map != other.map {
            return Err(Error::SectorMap("portfolios use different sector structures".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyChain {
    /// `H(π|ν)` computed on the flat universe.
    pub total: EntropyValue,
    /// `H(λ|α)`
    pub between: EntropyValue,
    /// `H(π_i|ν_i)` per sector.
    pub within: Vec<EntropyValue>,
}

impl EntropyChain {
    /// `H(λ|α) + Σ λ_i H(π_i|ν_i)`; sectors with `λ_i = 0` contribute nothing.
    pub fn recombined(&self, sector_weights: &SimplexVector) -> f64 {
        let mut sum = self.between.to_f64();
        for (w, part) in sector_weights.iter().zip(&self.within) {
            if *w > 0.0 {
                sum += w * part.to_f64();
            }
        }
        sum
    }
}

/// Chain rule for relative entropy across the two levels.
pub fn entropy_chain_rule(h_pi: &HierarchicalPortfolio, h_nu: &HierarchicalPortfolio) -> Result<EntropyChain> {
    h_pi.check_structure(h_nu)?;
    let total = relative_entropy(&h_pi.flatten()?, &h_nu.flatten()?)?;
    let between = relative_entropy(&h_pi.sector_weights, &h_nu.sector_weights)?;
    let within = h_pi
        .sector_portfolios
        .iter()
        .zip(&h_nu.sector_portfolios)
        .map(|(p, n)| relative_entropy(p, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyChain { total, between, within })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyChain {
    /// `γ*_π` on the flat universe.
    pub total: f64,
    /// Free energy with sectors as assets.
    pub sector_level: f64,
    /// Free energy of each sector portfolio within its sector.
    pub stock_level: Vec<f64>,
}

impl EnergyChain {
    pub fn recombined(&self, sector_weights: &SimplexVector) -> f64 {
        self.sector_level
            + sector_weights
                .iter()
                .zip(&self.stock_level)
                .map(|(w, g)| w * g)
                .sum::<f64>()
    }
}

/// Log growth of each sector portfolio over `[t, t+1]`, relative to the market.
fn sector_growth(h: &HierarchicalPortfolio, mu_t: &SimplexVector, mu_next: &SimplexVector) -> Vec<f64> {
    (0..h.map.n_sectors())
        .map(|i| {
            h.map
                .members(i)
                .iter()
                .zip(h.sector_portfolios[i].iter())
                .map(|(&k, &w)| w * mu_next[k] / mu_t[k])
                .sum::<f64>()
                .ln()
        })
        .collect()
}

/// `log Σ w_i e^{g_i} − Σ w_i g_i`, computed relative to the weighted mean.
fn free_energy_of_growth(weights: &SimplexVector, growth: &[f64]) -> f64 {
    let mean: f64 = weights.iter().zip(growth).map(|(w, g)| w * g).sum();
    let excess: f64 = weights
        .iter()
        .zip(growth)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, g)| w * (g - mean).exp_m1())
        .sum();
    excess.ln_1p()
}

fn check_market(map: &SectorMap, mu: &SimplexVector) -> Result<()> {
    if mu.len() != map.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: map.n_assets(),
            found: mu.len(),
        });
    }
    if let Some(asset) = mu.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroMarketWeight { asset });
    }
    Ok(())
}

/// Chain rule for the free energy over `[t, t+1]`. Sector-level free energy
/// treats each sector portfolio as a single asset; stock-level free energy
/// is computed within each sector with the sector as numéraire.
pub fn energy_chain_rule(
    h: &HierarchicalPortfolio,
    mu_t: &SimplexVector,
    mu_next: &SimplexVector,
) -> Result<EnergyChain> {
    check_market(&h.map, mu_t)?;
    check_market(&h.map, mu_next)?;
    let total = free_energy(&h.flatten()?, mu_t, mu_next)?;
    let sector_level = free_energy_of_growth(&h.sector_weights, &sector_growth(h, mu_t, mu_next));
    let (_, parts_t) = h.map.split(mu_t)?;
    let (_, parts_next) = h.map.split(mu_next)?;
    let stock_level = (0..h.map.n_sectors())
        .map(|i| free_energy(&h.sector_portfolios[i], &parts_t[i], &parts_next[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyChain {
        total,
        sector_level,
        stock_level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionCase {
    /// Sector weights unchanged over the period.
    ConstantWeighted,
    /// Sector weights are energy-entropy and grow faster in sectors with
    /// larger within-sector relative entropy.
    Monotone,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport {
    pub case: AttributionCase,
    /// Drift increment of the flat portfolio.
    pub delta_d_total: f64,
    /// Drift increment of the sector weights against the sector market.
    pub delta_d_sector: f64,
    /// Drift increment of each sector portfolio within its sector.
    pub delta_d_stock: Vec<f64>,
    /// `Σ_i (λ_i(t+1) − λ_i(t)) H(π_i(t+1)|μ_i(t+1))`
    pub covariance: f64,
    /// Every sector portfolio has nonnegative drift increment.
    pub sectors_energy_entropy: bool,
}

/// Classifies one period `[t, t+1]` against the two sufficient conditions
/// for the flat portfolio to be energy-entropy, and enforces the conclusion
/// whenever one of them holds. Both conditions also require every sector
/// portfolio to be energy-entropy within its sector.
pub fn check_sector_attribution(
    h_t: &HierarchicalPortfolio,
    h_next: &HierarchicalPortfolio,
    mu_t: &SimplexVector,
    mu_next: &SimplexVector,
) -> Result<AttributionReport> {
    h_t.check_structure(h_next)?;
    let map = &h_t.map;
    let energy = energy_chain_rule(h_t, mu_t, mu_next)?;
    let market_next = HierarchicalPortfolio::from_flat(map.clone(), mu_next)?;

    let finite = |v: EntropyValue| -> Result<f64> {
        v.finite()
            .ok_or_else(|| Error::InvalidParameter("sector portfolio has infinite relative entropy".into()))
    };

    let flat_t = h_t.flatten()?;
    let flat_next = h_next.flatten()?;
    let delta_d_total =
        energy.total + finite(relative_entropy(&flat_next, mu_next)?)? - finite(relative_entropy(&flat_t, mu_next)?)?;

    let alpha_next = &market_next.sector_weights;
    let delta_d_sector = energy.sector_level + finite(relative_entropy(&h_next.sector_weights, alpha_next)?)?
        - finite(relative_entropy(&h_t.sector_weights, alpha_next)?)?;

    let mut delta_d_stock = Vec::with_capacity(map.n_sectors());
    let mut entropy_next = Vec::with_capacity(map.n_sectors());
    for i in 0..map.n_sectors() {
        let mu_i = &market_next.sector_portfolios[i];
        let after = finite(relative_entropy(&h_next.sector_portfolios[i], mu_i)?)?;
        let before = finite(relative_entropy(&h_t.sector_portfolios[i], mu_i)?)?;
        delta_d_stock.push(energy.stock_level[i] + after - before);
        entropy_next.push(after);
    }

    let lambda_t = &h_t.sector_weights;
    let lambda_next = &h_next.sector_weights;
    let covariance: f64 = lambda_next
        .iter()
        .zip(lambda_t.iter())
        .zip(&entropy_next)
        .map(|((a, b), g)| (a - b) * g)
        .sum();

    let sectors_energy_entropy = delta_d_stock.iter().all(|d| *d >= -SLACK);
    let constant = lambda_t.l1_distance(lambda_next)? <= SLACK;
    let monotone = delta_d_sector >= -SLACK && monotone_condition(lambda_t, lambda_next, &entropy_next);
    let case = if !sectors_energy_entropy {
        AttributionCase::Neither
    } else if constant {
        AttributionCase::ConstantWeighted
    } else if monotone {
        AttributionCase::Monotone
    } else {
        AttributionCase::Neither
    };

    if case != AttributionCase::Neither && delta_d_total < -ATTRIBUTION_SLACK {
        return Err(Error::IdentityCheck(format!(
            "{case:?} attribution case holds but the total drift increment is {delta_d_total}"
        )));
    }
    Ok(AttributionReport {
        case,
        delta_d_total,
        delta_d_sector,
        delta_d_stock,
        covariance,
        sectors_energy_entropy,
    })
}

/// `λ_i(t+1)/λ_i(t) ≥ λ_j(t+1)/λ_j(t)` whenever `g_i > g_j`.
pub fn monotone_condition(lambda_t: &SimplexVector, lambda_next: &SimplexVector, entropy_next: &[f64]) -> bool {
    if !lambda_t.is_strictly_positive() {
        return false;
    }
    let ratio: Vec<f64> = lambda_next.iter().zip(lambda_t.iter()).map(|(a, b)| a / b).collect();
    for i in 0..ratio.len() {
        for j in 0..ratio.len() {
            if entropy_next[i] > entropy_next[j] && ratio[i] < ratio[j] - SLACK {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Hierarchy description file

/// TOML description of sectors:
///
/// ```toml
/// [[sector]]
/// name = "energy"
/// members = ["XOM", "CVX"]
/// weight = 0.4            # optional sector weight
/// weights = [0.5, 0.5]    # optional within-sector weights
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyFile {
    pub sector: Vec<SectorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorEntry {
    pub name: String,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl HierarchyFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Resolves member tickers against the flat universe.
    pub fn sector_map(&self, tickers: &[String]) -> Result<SectorMap> {
        let mut names = Vec::with_capacity(self.sector.len());
        let mut members = Vec::with_capacity(self.sector.len());
        for entry in &self.sector {
            let list = entry
                .members
                .iter()
                .map(|m| {
                    tickers
                        .iter()
                        .position(|t| t == m)
                        .ok_or_else(|| Error::SectorMap(format!("unknown ticker `{m}` in sector `{}`", entry.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            names.push(entry.name.clone());
            members.push(list);
        }
        SectorMap::with_names(tickers.len(), names, members)
    }

    /// The portfolio described by the file, when every weight is given.
    pub fn portfolio(&self, tickers: &[String]) -> Result<HierarchicalPortfolio> {
        let map = self.sector_map(tickers)?;
        let sector_weights = self
            .sector
            .iter()
            .map(|e| {
                e.weight
                    .ok_or_else(|| Error::SectorMap(format!("sector `{}` has no weight", e.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let parts = self
            .sector
            .iter()
            .map(|e| match &e.weights {
                Some(w) => SimplexVector::new(w.clone()),
                None => SimplexVector::uniform(e.members.len()),
            })
            .collect::<Result<Vec<_>>>()?;
        HierarchicalPortfolio::new(map, SimplexVector::new(sector_weights)?, parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(w: &[f64]) -> SimplexVector {
        SimplexVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn flatten_examples() {
        let single = HierarchicalPortfolio::new(
            SectorMap::contiguous(&[3]).unwrap(),
            sv(&[1.0]),
            vec![sv(&[0.2, 0.3, 0.5])],
        )
        .unwrap();
        assert_eq!(single.flatten().unwrap(), sv(&[0.2, 0.3, 0.5]));
        let pair = HierarchicalPortfolio::new(
            SectorMap::contiguous(&[1, 1]).unwrap(),
            sv(&[0.5, 0.5]),
            vec![sv(&[1.0]), sv(&[1.0])],
        )
        .unwrap();
        assert_eq!(pair.flatten().unwrap(), sv(&[0.5, 0.5]));
    }

    #[test]
    fn rejects_overlap_and_gaps() {
        assert!(matches!(
            SectorMap::new(3, vec![vec![0, 1], vec![1, 2]]),
            Err(Error::SectorMap(_))
        ));
        assert!(matches!(SectorMap::new(3, vec![vec![0, 1]]), Err(Error::SectorMap(_))));
        assert!(matches!(SectorMap::new(2, vec![vec![0, 2]]), Err(Error::SectorMap(_))));
    }

    #[test]
    fn entropy_chain_pure_between() {
        let map = SectorMap::contiguous(&[2, 2]).unwrap();
        let parts = vec![sv(&[0.3, 0.7]), sv(&[0.6, 0.4])];
        let pi = HierarchicalPortfolio::new(map.clone(), sv(&[0.2, 0.8]), parts.clone()).unwrap();
        let nu = HierarchicalPortfolio::new(map, sv(&[0.5, 0.5]), parts).unwrap();
        let chain = entropy_chain_rule(&pi, &nu).unwrap();
        let expected = relative_entropy(&sv(&[0.2, 0.8]), &sv(&[0.5, 0.5])).unwrap().to_f64();
        assert!((chain.total.to_f64() - expected).abs() < 1e-12);
        assert!(chain.within.iter().all(|v| v.to_f64() == 0.0));
    }

    #[test]
    fn energy_chain_degenerate_cases() {
        let mu_t = sv(&[0.2, 0.3, 0.5]);
        let mu_next = sv(&[0.25, 0.25, 0.5]);
        let pi = sv(&[0.4, 0.4, 0.2]);
        let one = HierarchicalPortfolio::from_flat(SectorMap::contiguous(&[3]).unwrap(), &pi).unwrap();
        let chain = energy_chain_rule(&one, &mu_t, &mu_next).unwrap();
        assert!(chain.sector_level.abs() < 1e-15);
        assert!((chain.total - chain.stock_level[0]).abs() < 1e-12);
        let singles = HierarchicalPortfolio::from_flat(SectorMap::contiguous(&[1, 1, 1]).unwrap(), &pi).unwrap();
        let chain = energy_chain_rule(&singles, &mu_t, &mu_next).unwrap();
        assert!(chain.stock_level.iter().all(|g| g.abs() < 1e-15));
        assert!((chain.total - chain.sector_level).abs() < 1e-12);
    }

    #[test]
    fn hierarchy_file_resolves_tickers() {
        let text = r#"
[[sector]]
name = "a"
members = ["X", "Z"]
weight = 0.25
weights = [0.5, 0.5]

[[sector]]
name = "b"
members = ["Y"]
weight = 0.75
"#;
        let file = HierarchyFile::from_toml(text).unwrap();
        let tickers: Vec<String> = ["X", "Y", "Z"].iter().map(|s| s.to_string()).collect();
        let h = file.portfolio(&tickers).unwrap();
        assert_eq!(h.flatten().unwrap(), sv(&[0.125, 0.75, 0.125]));
        let bad = HierarchyFile::from_toml("[[sector]]\nname = \"a\"\nmembers = [\"Q\"]\n").unwrap();
        assert!(bad.sector_map(&tickers).is_err());
    }
}
