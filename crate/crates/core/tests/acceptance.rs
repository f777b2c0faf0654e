//! One line per acceptance criterion, at the stated tolerances. Run with
//! `cargo test -p eeport --test acceptance -- --nocapture`.

mod common;

use std::path::Path;
use std::time::Instant;

use common::*;
use eeport::diffusion::{simulate_local_time_profile, DiffusionKind, DiffusionSpec};
use eeport::experiment::{run_experiment, RunConfig};
use eeport::hierarchy::{energy_chain_rule, entropy_chain_rule};
use eeport::ledger::free_energy;
use eeport::strategies::{make_constant, run_lambda_strategy};
use eeport::two_asset::{
    check_reversion, constant_weight_decomposition, match_factor, one_step_factor, tally_matches, BinaryPath, Step,
    WeightCurve,
};
use eeport::variational::{lambda_functional, optimal_q, WeightFunction, DEFAULT_ETA};
use eeport::{build_ledger, relative_entropy, MarketPath, SimplexVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = [2, 5, 18][k % 3];
        let caps = random_caps(&mut r, n, 1000, 0.04);
        let path = MarketPath::from_caps(caps.clone()).unwrap();
        let pi: Vec<SimplexVector> = match k % 4 {
            0 => (0..path.len()).map(|_| random_simplex(&mut r, n)).collect(),
            1 => (0..path.len()).map(|_| random_sparse_simplex(&mut r, n)).collect(),
            2 => make_constant(&random_simplex(&mut r, n), path.len()),
            _ => run_lambda_strategy(&path, r.random_range(0.0..1.0), &random_simplex(&mut r, n)).unwrap(),
        };
        let ledger = build_ledger(&path, &pi).unwrap();
        let terms: f64 = ledger
            .rows
            .iter()
            .map(|row| row.gamma_star + row.entropy_change + row.control)
            .sum();
        let direct = direct_log_relative_wealth(&caps, &pi);
        worst = worst.max((terms - direct).abs()).max((ledger.log_v() - direct).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(worst < 1e-9, || format!("max error {worst:.3e}"))?;
    ensure(elapsed < 10.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!(
        "max |terms − direct| = {worst:.2e} over 100 paths, {elapsed:.2} s"
    ))
}

fn criterion_2() -> Outcome {
    let mut r = rng(1002);
    let mut min_gamma = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let n = [2, 5, 18][k % 3];
        let path = MarketPath::from_caps(random_caps(&mut r, n, 200, 0.1)).unwrap();
        let scale: Vec<f64> = (0..path.len()).map(|_| (r.random_range(-5.0..5.0f64)).exp()).collect();
        let scaled = path.rescaled(&scale).unwrap();
        let pi: Vec<SimplexVector> = (0..path.len()).map(|_| random_sparse_simplex(&mut r, n)).collect();
        let a = build_ledger(&path, &pi).unwrap();
        let b = build_ledger(&scaled, &pi).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            min_gamma = min_gamma.min(x.gamma_star);
            worst = worst
                .max((x.gamma_star - y.gamma_star).abs())
                .max((x.entropy_change - y.entropy_change).abs())
                .max((x.control - y.control).abs());
        }
    }
    ensure(min_gamma >= 0.0, || format!("γ* reached {min_gamma:e}"))?;
    ensure(worst < 1e-10, || format!("rescaling moved the ledger by {worst:.3e}"))?;
    Ok(format!("min γ* = {min_gamma:.2e}, max rescaling drift = {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(1003);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let map = random_map(&mut r);
        let pi = random_hierarchy(&mut r, &map, trial % 3 == 0);
        let nu = random_hierarchy(&mut r, &map, false);
        let mu_t = random_simplex(&mut r, map.n_assets());
        let mu_next = random_simplex(&mut r, map.n_assets());
        let flat_pi = pi.flatten().unwrap();
        let entropy = entropy_chain_rule(&pi, &nu).unwrap();
        let flat_h = relative_entropy(&flat_pi, &nu.flatten().unwrap()).unwrap().to_f64();
        let energy = energy_chain_rule(&pi, &mu_t, &mu_next).unwrap();
        let flat_g = free_energy(&flat_pi, &mu_t, &mu_next).unwrap();
        worst = worst
            .max((entropy.recombined(pi.sector_weights()) - flat_h).abs())
            .max((energy.recombined(pi.sector_weights()) - flat_g).abs());
    }
    ensure(worst < 1e-10, || format!("max error {worst:.3e}"))?;
    Ok(format!("max chain-rule error {worst:.2e} over 1000 hierarchies"))
}

fn criterion_4() -> Outcome {
    let mut r = rng(1004);
    let mut min_dd = f64::INFINITY;
    let mut max_track: f64 = 0.0;
    for trial in 0..12 {
        let n = [2, 3, 5, 18][trial % 4];
        let path = random_path(&mut r, n, 250, 0.06);
        let pi0 = random_simplex(&mut r, n);
        let constant = run_lambda_strategy(&path, 0.0, &pi0).unwrap();
        ensure(constant.iter().all(|p| *p == pi0), || "λ = 0 moved the weights".into())?;
        for k in 0..=10 {
            let pi = run_lambda_strategy(&path, k as f64 / 10.0, &pi0).unwrap();
            let ledger = build_ledger(&path, &pi).unwrap();
            for row in &ledger.rows {
                min_dd = min_dd.min(row.delta_drift);
            }
        }
    }
    for _ in 0..10 {
        let path = smooth_two_asset_path(&mut r, 300, 0.01);
        let pi = run_lambda_strategy(&path, 1.0, path.weight(0)).unwrap();
        for (t, p) in pi.iter().enumerate() {
            max_track = max_track.max(p.l1_distance(path.weight(t)).unwrap());
        }
    }
    ensure(min_dd >= -1e-9, || format!("ΔD reached {min_dd:e}"))?;
    ensure(max_track <= 0.05, || format!("λ = 1 tracking error {max_track}"))?;
    Ok(format!(
        "λ = 0 constant, min ΔD = {min_dd:.2e}, λ = 1 max L¹ tracking = {max_track:.4}"
    ))
}

fn criterion_5() -> Outcome {
    let m = match_factor(0.5, 0.1);
    let stated = 1.0 + 0.25 * (0.05f64.exp() - (-0.05f64).exp()).powi(2);
    let product = one_step_factor(0.5, 0.1) * one_step_factor(0.5, -0.1);
    ensure((m - stated).abs() < 1e-14, || format!("match factor {m} vs {stated}"))?;
    ensure((m - product).abs() < 1e-14, || {
        format!("match factor {m} vs product {product}")
    })?;

    let mut r = rng(1005);
    for _ in 0..10_000 {
        let len = r.random_range(0..200);
        let steps = (0..len)
            .map(|_| if r.random::<bool>() { Step::Up } else { Step::Down })
            .collect();
        let path = BinaryPath::new(0.0, 0.1, steps).unwrap();
        let tally = tally_matches(&path);
        let net = ((path.y_final() - path.y0()) / path.sigma()).round().abs() as usize;
        ensure(tally.unmatched_count == net, || {
            format!("unmatched {} vs {net}", tally.unmatched_count)
        })?;
    }

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let q = r.random_range(0.0..=1.0);
        let steps = (0..500)
            .map(|_| if r.random::<bool>() { Step::Up } else { Step::Down })
            .collect();
        let path = BinaryPath::new(0.0, 0.1, steps).unwrap();
        let d = constant_weight_decomposition(&path, q).unwrap();
        let values = path.values();
        let log_v: f64 = values
            .windows(2)
            .map(|w| (1.0 + q * ((w[1] - w[0]).exp() - 1.0)).ln())
            .sum();
        let (y0, yt) = (values[0], values[values.len() - 1]);
        let direct = log_v - ((yt.exp() + 1.0) / (y0.exp() + 1.0)).ln();
        worst = worst.max((d.match_term + d.unmatched_term + d.concentration_term - direct).abs());
    }
    ensure(worst < 1e-10, || format!("decomposition error {worst:.3e}"))?;
    Ok(format!(
        "match factor {m:.15}, unmatched = |net| on 10⁴ paths, decomposition error {worst:.2e}"
    ))
}

fn criterion_6() -> Outcome {
    let market = check_reversion(&WeightCurve::market(), -5.0, 5.0, 0.01).unwrap();
    ensure(market.passes, || {
        format!("market curve fails by {}", market.worst_excess)
    })?;
    ensure(market.worst_excess.abs() <= 1e-10, || {
        format!("market slack {}", market.worst_excess)
    })?;
    let steep = check_reversion(&WeightCurve::Logistic { slope: 2.0 }, -5.0, 5.0, 0.01).unwrap();
    let at_zero = check_reversion(&WeightCurve::Logistic { slope: 2.0 }, 0.0, 0.0, 0.01).unwrap();
    ensure(!steep.passes, || "steeper logistic passes".into())?;
    ensure(at_zero.worst_excess > 0.0, || {
        format!("no violation at 0: {}", at_zero.worst_excess)
    })?;
    Ok(format!(
        "market max(q′ − q(1 − q)) = {:.1e}; slope-2 logistic exceeds by {:.4} at 0",
        market.worst_excess, at_zero.worst_excess
    ))
}

/// Independent quadrature for a continuous piecewise-linear curve, flat
/// outside its knots: `∫ q(1 − q)w − ∫ q′w` by composite Simpson.
fn lambda_piecewise(knots: &[(f64, f64)], w: &dyn Fn(f64) -> f64, window: f64) -> f64 {
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let (first, last) = (knots[0], knots[knots.len() - 1]);
    let mut total = simpson(&|y| first.1 * (1.0 - first.1) * w(y), -window, first.0, 400);
    total += simpson(&|y| last.1 * (1.0 - last.1) * w(y), last.0, window, 400);
    for seg in knots.windows(2) {
        let ((y0, q0), (y1, q1)) = (seg[0], seg[1]);
        let slope = (q1 - q0) / (y1 - y0);
        let f = |y: f64| {
            let q = q0 + slope * (y - y0);
            (q * (1.0 - q) - slope) * w(y)
        };
        total += simpson(&f, y0, y1, 100);
    }
    total
}

/// Coordinate ascent over knot values on a fixed grid.
fn grid_search_oracle(w: &dyn Fn(f64) -> f64) -> f64 {
    let ys: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.25).collect();
    let levels: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let mut knots: Vec<(f64, f64)> = ys.iter().map(|&y| (y, 0.5)).collect();
    let mut best = lambda_piecewise(&knots, w, 8.0);
    loop {
        let before = best;
        for j in 0..knots.len() {
            for &q in &levels {
                let old = knots[j].1;
                knots[j].1 = q;
                let v = lambda_piecewise(&knots, w, 8.0);
                if v > best + 1e-15 {
                    best = v;
                } else {
                    knots[j].1 = old;
                }
            }
        }
        if best - before < 1e-12 {
            return best;
        }
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let half = WeightCurve::Constant(0.5);

    for gamma in [0.5, 1.0, 2.0] {
        let w = WeightFunction::bang_bang(gamma).unwrap();
        let v = lambda_functional(&half, &w).unwrap();
        if (v - 1.0 / (2.0 * gamma)).abs() >= 1e-8 {
            failures.push(format!("bang-bang Λ(1/2) at γ={gamma} is {v}"));
        }
    }
    notes.push("bang-bang Λ(1/2) = 1/(2γ)".to_string());

    let tolerance = DEFAULT_ETA; // w(0)·η with w(0) = 1
    for (gamma, stated) in [(0.5, 2.25), (2.0, 2.0)] {
        let opt = optimal_q(&WeightFunction::bang_bang(gamma).unwrap(), None, DEFAULT_ETA).unwrap();
        let gap = stated - opt.value;
        if !(gap >= -1e-9 && gap <= tolerance) {
            failures.push(format!(
                "bang-bang γ={gamma} optimum {:.6} vs stated sup {stated}",
                opt.value
            ));
        }
    }

    let ou = WeightFunction::ornstein_uhlenbeck(1.0).unwrap();
    let stated_half = 1.0 + std::f64::consts::PI.sqrt() / 4.0;
    let ou_half = lambda_functional(&half, &ou).unwrap();
    if (ou_half - stated_half).abs() >= 1e-8 {
        failures.push(format!("OU Λ(1/2) {ou_half:.10} vs stated {stated_half:.10}"));
    }

    let opt = optimal_q(&ou, None, DEFAULT_ETA).unwrap();
    let mut r = rng(1007);
    for _ in 0..100 {
        let mut knots = Vec::new();
        let mut y = -3.0 + r.random_range(0.0..0.5);
        while y < 3.0 {
            knots.push((y, r.random_range(0.0..=1.0)));
            y += r.random_range(0.1..1.0);
        }
        let v = lambda_functional(&WeightCurve::piecewise_linear(knots).unwrap(), &ou).unwrap();
        if v > opt.value + 1e-9 {
            failures.push(format!("random curve beats the OU optimum: {v} > {}", opt.value));
            break;
        }
    }
    let oracle = grid_search_oracle(&|y: f64| (-y * y).exp());
    let rel = (opt.value - oracle).abs() / oracle;
    if rel > 0.005 {
        failures.push(format!(
            "OU optimum {} vs oracle {oracle} ({:.3}%)",
            opt.value,
            100.0 * rel
        ));
    }
    notes.push(format!("OU optimum {:.6} vs grid oracle {oracle:.6}", opt.value));

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 5.0 {
        failures.push(format!("took {elapsed:.2} s"));
    }
    if failures.is_empty() {
        Ok(format!("{}, {elapsed:.2} s", notes.join("; ")))
    } else {
        Err(format!(
            "{} (passing: {}, {elapsed:.2} s)",
            failures.join("; "),
            notes.join("; ")
        ))
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let cases: [(DiffusionKind, &[f64]); 2] = [
        (DiffusionKind::BangBang { alpha: 1.0, sigma: 1.0 }, &[0.25, 0.5, 1.0]),
        (DiffusionKind::Ou { alpha: 1.0, sigma: 1.0 }, &[0.5, 1.0]),
    ];
    for (seed, (kind, levels)) in cases.into_iter().enumerate() {
        let spec = DiffusionSpec::new(kind, 1e-4, 0.02).unwrap();
        let profile = simulate_local_time_profile(&spec, levels, 10_000, 2000 + seed as u64).unwrap();
        for (k, &y) in levels.iter().enumerate() {
            let exact = spec.expected_local_time(y);
            let (est, se) = (profile.estimates[k], profile.stderr[k]);
            lines.push(format!("{y}: {est:.4}±{se:.4} vs {exact:.4}"));
            if (est - exact).abs() > 3.0 * se + 0.01 {
                failures.push(format!("{:?} at {y}: {est} vs {exact}", spec.kind));
            }
        }
        if profile.discarded > 0 {
            failures.push(format!("{} paths discarded", profile.discarded));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 120.0 {
        failures.push(format!("took {elapsed:.1} s"));
    }
    if failures.is_empty() {
        Ok(format!("{}, {elapsed:.1} s", lines.join(", ")))
    } else {
        Err(failures.join("; "))
    }
}

fn fixture_ledger(name: &str) -> eeport::DecompositionLedger {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    let mut config = RunConfig::load(file).unwrap();
    let dir = tempfile::tempdir().unwrap();
    config.out = dir.path().to_path_buf();
    run_experiment(&config).unwrap().ledger
}

fn criterion_9() -> Outcome {
    let reverting = fixture_ledger("mean_reverting.toml");
    let min_dd = reverting
        .rows
        .iter()
        .map(|r| r.delta_drift)
        .fold(f64::INFINITY, f64::min);
    ensure(min_dd >= -1e-12, || format!("mean-reverting ΔD reached {min_dd:e}"))?;
    ensure(reverting.log_v() > 0.0, || {
        format!("mean-reverting log V(T) = {}", reverting.log_v())
    })?;

    let trending = fixture_ledger("trending.toml");
    let min_dd_t = trending
        .rows
        .iter()
        .map(|r| r.delta_drift)
        .fold(f64::INFINITY, f64::min);
    ensure(min_dd_t >= -1e-12, || format!("trending ΔD reached {min_dd_t:e}"))?;
    let series = trending.log_v_series();
    let mut peak = f64::NEG_INFINITY;
    let mut drawdown: f64 = 0.0;
    for &v in &series {
        peak = peak.max(v);
        drawdown = drawdown.max(peak - v);
    }
    ensure(drawdown > 0.01, || {
        format!("trending log V never dips (drawdown {drawdown})")
    })?;
    ensure(trending.drift() > 0.0, || "trending drift is zero".into())?;
    Ok(format!(
        "mean-reverting log V(T) = {:.4}, D(T) = {:.4}; trending drawdown {drawdown:.4} with D(T) = {:.4}",
        reverting.log_v(),
        reverting.drift(),
        trending.drift()
    ))
}

fn criterion_10() -> Outcome {
    let path = BinaryPath::from_signs(0.0, 1.0, "++-++---+---+-").unwrap();
    let tally = tally_matches(&path);
    ensure(tally.unmatched_count == 2, || {
        format!("unmatched {}", tally.unmatched_count)
    })?;
    Ok(format!(
        "{} matches, {} unmatched",
        tally.total_matches, tally.unmatched_count
    ))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, Check); 10] = [
        ("exact decomposition", criterion_1),
        ("free-energy properties", criterion_2),
        ("chain rules", criterion_3),
        ("λ-strategy contracts", criterion_4),
        ("matching arithmetic", criterion_5),
        ("reversion classification", criterion_6),
        ("variational closed forms", criterion_7),
        ("expected local time", criterion_8),
        ("fixture ledgers", criterion_9),
        ("path replay", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
