mod common;

use common::*;
use eeport::hierarchy::{
    check_sector_attribution, energy_chain_rule, entropy_chain_rule, AttributionCase, HierarchicalPortfolio, SectorMap,
};
use eeport::ledger::free_energy;
use eeport::strategies::run_lambda_strategy;
use eeport::{relative_entropy, MarketPath, SimplexVector};
use rand::Rng;

#[test]
fn flatten_sums_to_one() {
    let mut r = rng(31);
    for _ in 0..200 {
        let map = random_map(&mut r);
        let h = random_hierarchy(&mut r, &map, true);
        let flat = h.flatten().unwrap();
        assert!((flat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, part) in h.sector_portfolios().iter().enumerate() {
            for (j, &asset) in map.members(i).iter().enumerate() {
                assert!((flat[asset] - h.sector_weights()[i] * part[j]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn entropy_chain_rule_matches_flat_oracle() {
    let mut r = rng(32);
    for trial in 0..1000 {
        let map = random_map(&mut r);
        let pi = random_hierarchy(&mut r, &map, trial % 3 == 0);
        let nu = random_hierarchy(&mut r, &map, false);
        let chain = entropy_chain_rule(&pi, &nu).unwrap();
        let flat = relative_entropy(&pi.flatten().unwrap(), &nu.flatten().unwrap())
            .unwrap()
            .to_f64();
        assert!((chain.total.to_f64() - flat).abs() < 1e-10);
        assert!(
            (chain.recombined(pi.sector_weights()) - flat).abs() < 1e-10,
            "trial {trial}"
        );
    }
}

#[test]
fn energy_chain_rule_matches_flat_oracle() {
    let mut r = rng(33);
    for trial in 0..1000 {
        let map = random_map(&mut r);
        let h = random_hierarchy(&mut r, &map, trial % 3 == 0);
        let mu_t = random_simplex(&mut r, map.n_assets());
        let mu_next = random_simplex(&mut r, map.n_assets());
        let chain = energy_chain_rule(&h, &mu_t, &mu_next).unwrap();
        let flat = free_energy(&h.flatten().unwrap(), &mu_t, &mu_next).unwrap();
        assert!((chain.total - flat).abs() < 1e-10);
        assert!(
            (chain.recombined(h.sector_weights()) - flat).abs() < 1e-10,
            "trial {trial}"
        );
        assert!(chain.sector_level >= 0.0 && chain.stock_level.iter().all(|g| *g >= 0.0));
    }
}

#[test]
fn random_two_plus_three_instance() {
    let mut r = rng(34);
    let map = SectorMap::contiguous(&[2, 3]).unwrap();
    let h = random_hierarchy(&mut r, &map, false);
    let mu_t = random_simplex(&mut r, 5);
    let mu_next = random_simplex(&mut r, 5);
    let chain = energy_chain_rule(&h, &mu_t, &mu_next).unwrap();
    let flat = free_energy(&h.flatten().unwrap(), &mu_t, &mu_next).unwrap();
    assert!((chain.recombined(h.sector_weights()) - flat).abs() < 1e-10);
}

/// Moves each sector portfolio one λ-strategy step inside its sector, so
/// every sector is energy-entropy over the period.
fn energy_entropy_sectors(
    h: &HierarchicalPortfolio,
    mu_t: &SimplexVector,
    mu_next: &SimplexVector,
    lambda: f64,
) -> Vec<SimplexVector> {
    let market_t = HierarchicalPortfolio::from_flat(h.map().clone(), mu_t).unwrap();
    let market_next = HierarchicalPortfolio::from_flat(h.map().clone(), mu_next).unwrap();
    h.sector_portfolios()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = &market_t.sector_portfolios()[i];
            let b = &market_next.sector_portfolios()[i];
            let path = MarketPath::from_weights(vec![a.clone(), b.clone()]).unwrap();
            run_lambda_strategy(&path, lambda, p).unwrap()[1].clone()
        })
        .collect()
}

#[test]
fn drift_attribution_identity_and_cases() {
    let mut r = rng(35);
    let mut monotone_seen = 0;
    for _ in 0..300 {
        let map = random_map(&mut r);
        let n = map.n_assets();
        let h_t = random_hierarchy(&mut r, &map, false);
        let mu_t = random_simplex(&mut r, n);
        let mu_next = random_simplex(&mut r, n);
        let parts_next = energy_entropy_sectors(&h_t, &mu_t, &mu_next, r.random_range(0.0..1.0));

        // constant sector weights
        let h_const =
            HierarchicalPortfolio::new(map.clone(), h_t.sector_weights().clone(), parts_next.clone()).unwrap();
        let report = check_sector_attribution(&h_t, &h_const, &mu_t, &mu_next).unwrap();
        assert_eq!(report.case, AttributionCase::ConstantWeighted);
        assert!(report.delta_d_total >= -1e-10);
        let recombined = report.delta_d_sector
            + h_t
                .sector_weights()
                .iter()
                .zip(&report.delta_d_stock)
                .map(|(l, d)| l * d)
                .sum::<f64>()
            + report.covariance;
        assert!((recombined - report.delta_d_total).abs() < 1e-10);

        // sector weights tilted toward sectors with more relative entropy
        let market_next = HierarchicalPortfolio::from_flat(map.clone(), &mu_next).unwrap();
        let g: Vec<f64> = parts_next
            .iter()
            .zip(market_next.sector_portfolios())
            .map(|(p, m)| relative_entropy(p, m).unwrap().to_f64())
            .collect();
        let lambda = h_t.sector_weights();
        let g_bar: f64 = lambda.iter().zip(&g).map(|(l, x)| l * x).sum();
        let mut c = 1.0 / (1.0 + g.iter().map(|x| (x - g_bar).abs()).fold(0.0, f64::max));
        for _ in 0..40 {
            let tilted: Vec<f64> = lambda
                .iter()
                .zip(&g)
                .map(|(l, x)| l * (1.0 + c * (x - g_bar)))
                .collect();
            let h_next =
                HierarchicalPortfolio::new(map.clone(), SimplexVector::new(tilted).unwrap(), parts_next.clone())
                    .unwrap();
            let report = check_sector_attribution(&h_t, &h_next, &mu_t, &mu_next).unwrap();
            if report.delta_d_sector >= 0.0 {
                if report.case == AttributionCase::Monotone {
                    monotone_seen += 1;
                    assert!(report.delta_d_total >= -1e-10);
                    assert!(report.covariance >= -1e-12);
                }
                break;
            }
            c *= 0.5;
        }
    }
    assert!(monotone_seen > 50, "only {monotone_seen} monotone instances");
}

#[test]
fn adversarial_weights_are_not_claimed() {
    // Sector weights move toward the sector with less relative entropy.
    let map = SectorMap::contiguous(&[2, 2]).unwrap();
    let mu_t = sv(&[0.25, 0.25, 0.25, 0.25]);
    let mu_next = sv(&[0.2, 0.3, 0.25, 0.25]);
    let h_t = HierarchicalPortfolio::new(map.clone(), sv(&[0.5, 0.5]), vec![sv(&[0.9, 0.1]), sv(&[0.5, 0.5])]).unwrap();
    let h_next = HierarchicalPortfolio::new(map, sv(&[0.3, 0.7]), vec![sv(&[0.9, 0.1]), sv(&[0.5, 0.5])]).unwrap();
    let report = check_sector_attribution(&h_t, &h_next, &mu_t, &mu_next).unwrap();
    assert_eq!(report.case, AttributionCase::Neither);
}
