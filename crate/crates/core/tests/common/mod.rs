#![allow(dead_code)]

use eeport::hierarchy::{HierarchicalPortfolio, SectorMap};
use eeport::{MarketPath, SimplexVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sv(w: &[f64]) -> SimplexVector {
    SimplexVector::new(w.to_vec()).unwrap()
}

/// Flat-Dirichlet draw.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> SimplexVector {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    SimplexVector::from_positive(&e.iter().map(|x| x + 1e-12).collect::<Vec<_>>()).unwrap()
}

/// Dirichlet draw with some coordinates zeroed (at least one kept).
pub fn random_sparse_simplex(rng: &mut ChaCha8Rng, n: usize) -> SimplexVector {
    let keep = rng.random_range(0..n);
    let w: Vec<f64> = (0..n)
        .map(|i| {
            if i == keep || rng.random::<f64>() > 0.3 {
                Exp1.sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    SimplexVector::new(w.iter().map(|x| x / total).collect()).unwrap()
}

/// Log-normal random-walk capitalizations, `steps + 1` dates.
pub fn random_caps(rng: &mut ChaCha8Rng, n: usize, steps: usize, vol: f64) -> Vec<Vec<f64>> {
    let mut x: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 2.0).exp()).collect();
    let mut out = vec![x.clone()];
    for _ in 0..steps {
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v *= (vol * z).exp();
        }
        out.push(x.clone());
    }
    out
}

pub fn random_path(rng: &mut ChaCha8Rng, n: usize, steps: usize, vol: f64) -> MarketPath {
    MarketPath::from_caps(random_caps(rng, n, steps, vol)).unwrap()
}

/// Two-asset path whose log ratio is mean reverting with small steps.
pub fn smooth_two_asset_path(rng: &mut ChaCha8Rng, steps: usize, vol: f64) -> MarketPath {
    let mut y = 0.0;
    let mut caps = vec![vec![1.0, 1.0]];
    for _ in 0..steps {
        let z: f64 = StandardNormal.sample(rng);
        y += -0.1 * y + vol * z;
        caps.push(vec![y.exp(), 1.0]);
    }
    MarketPath::from_caps(caps).unwrap()
}

/// `log(Ṽ(T)/S(T))` by direct wealth simulation on raw capitalizations.
pub fn direct_log_relative_wealth(caps: &[Vec<f64>], pi: &[SimplexVector]) -> f64 {
    let mut log_wealth = 0.0;
    let mut log_market = 0.0;
    for t in 0..caps.len() - 1 {
        let growth: f64 = pi[t]
            .iter()
            .zip(caps[t].iter().zip(&caps[t + 1]))
            .map(|(p, (a, b))| p * b / a)
            .sum();
        log_wealth += growth.ln();
        let s0: f64 = caps[t].iter().sum();
        let s1: f64 = caps[t + 1].iter().sum();
        log_market += (s1 / s0).ln();
    }
    log_wealth - log_market
}

/// Random disjoint sectors over a shuffled universe.
pub fn random_map(r: &mut ChaCha8Rng) -> SectorMap {
    let m = r.random_range(1..5);
    let sizes: Vec<usize> = (0..m).map(|_| r.random_range(1..5)).collect();
    let n: usize = sizes.iter().sum();
    let mut assets: Vec<usize> = (0..n).collect();
    assets.shuffle(r);
    let mut members = Vec::new();
    let mut start = 0;
    for s in sizes {
        members.push(assets[start..start + s].to_vec());
        start += s;
    }
    SectorMap::new(n, members).unwrap()
}

pub fn random_hierarchy(r: &mut ChaCha8Rng, map: &SectorMap, sparse: bool) -> HierarchicalPortfolio {
    let m = map.n_sectors();
    let lambda = if sparse {
        random_sparse_simplex(r, m)
    } else {
        random_simplex(r, m)
    };
    let parts = (0..m)
        .map(|i| {
            let k = map.members(i).len();
            if sparse {
                random_sparse_simplex(r, k)
            } else {
                random_simplex(r, k)
            }
        })
        .collect();
    HierarchicalPortfolio::new(map.clone(), lambda, parts).unwrap()
}
