//! Acceptance suite: every criterion runs at its stated size and tolerance
//! and prints one `PASS`/`FAIL` line to standard error.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use winf_core::bounds::{lower_bound_envelope, power_inequality_holds};
use winf_core::catalog;
use winf_core::construction::certify;
use winf_core::density::CdfEvaluator;
use winf_core::experiments::{
    coverage_report, rate_report, run_trials, ExperimentConfig, RunRecord, Statistic,
};
use winf_core::sampling::{draw_samples, EmpiricalMeasure, SeedSpec};
use winf_core::transport::{winf_discrete, winf_empirical};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, started: Instant, outcome: &Outcome) {
    let line = format!(
        "[{}] criterion {id:>2} {name}: {} ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn geometric_grid() -> Vec<usize> {
    (7..=17).map(|e| 1usize << e).collect()
}

/// Grid size divisible by every `n ≤ 8` (840 = lcm(1..8)), so every cell
/// boundary `i/n` is a grid node.
const GRID_POINTS: usize = 840 * 1190;

/// `sup_y |F⁻¹(y) - Fₙ⁻¹(y)|` over `y = m / M`, comparing `F⁻¹(y)` with
/// both one-sided values of the empirical step function.
fn grid_sup(cdf: &CdfEvaluator, xs: &[f64], points: usize) -> f64 {
    let n = xs.len();
    (0..=points)
        .map(|m| {
            let y = m as f64 / points as f64;
            let q = cdf.quantile(y);
            let ny = (n * m) as f64 / points as f64;
            let left = (ny.ceil() as usize).clamp(1, n);
            let right = (ny.floor() as usize + 1).clamp(1, n);
            (q - xs[left - 1]).abs().max((q - xs[right - 1]).abs())
        })
        .fold(0.0, f64::max)
}

fn bottleneck_by_permutations(xs: &[f64], ys: &[f64]) -> f64 {
    fn go(xs: &[f64], ys: &mut Vec<f64>, k: usize, current: f64, best: &mut f64) {
        if current >= *best {
            return;
        }
        if k == xs.len() {
            *best = current;
            return;
        }
        for i in k..ys.len() {
            ys.swap(k, i);
            let d = current.max((xs[k] - ys[k]).abs());
            go(xs, ys, k + 1, d, best);
            ys.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    go(xs, &mut ys.to_vec(), 0, 0.0, &mut best);
    best
}

fn criterion_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let models = [
        CdfEvaluator::new(catalog::uniform()).unwrap(),
        CdfEvaluator::new(catalog::tent()).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..500 {
        let cdf = &models[i % 2];
        let n = rng.random_range(1..=8);
        let em = draw_samples(cdf, n, SeedSpec::new(i as u64, 17)).unwrap();
        let exact = winf_empirical(cdf, &em).unwrap().w_infinity;
        let grid = grid_sup(cdf, em.samples(), GRID_POINTS);
        worst = worst.max((exact - grid).abs());
    }
    let mut discrete_mismatch = 0;
    for _ in 0..300 {
        let n = rng.random_range(1..=7);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        // The fast path takes sorted inputs; the brute force any order.
        let (mut sx, mut sy) = (xs.clone(), ys.clone());
        sx.sort_by(f64::total_cmp);
        sy.sort_by(f64::total_cmp);
        let fast = winf_discrete(&sx, &sy).unwrap();
        if fast != bottleneck_by_permutations(&xs, &ys) {
            discrete_mismatch += 1;
        }
    }
    Outcome {
        pass: worst <= 1e-6 && discrete_mismatch == 0,
        detail: format!(
            "max |exact - grid| = {worst:.2e}; discrete mismatches = {discrete_mismatch}"
        ),
    }
}

fn run(cfg: &ExperimentConfig, all: &mut Vec<RunRecord>) -> (CdfEvaluator, Vec<RunRecord>) {
    let cdf = cfg.load_model().unwrap();
    let records = run_trials(cfg, &cdf, None).unwrap();
    all.extend(records.iter().cloned());
    (cdf, records)
}

fn criterion_envelope(all: &mut Vec<RunRecord>) -> Outcome {
    let mut cfg = ExperimentConfig::new("uniform", vec![100, 1000, 10000], 2000, 31);
    cfg.envelopes.confidence = vec![10.0];
    let (cdf, records) = run(&cfg, all);
    let table = coverage_report(&cfg, &cdf, &records).unwrap();
    let freqs: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.frequency))
        .collect();
    let cap = 0.1 + 3.0 * (0.09f64 / 2000.0).sqrt();
    // The envelope with λ = 1 and M = 10 is sqrt(ln 20 / (2n)).
    let envelope_ok = table
        .rows
        .iter()
        .all(|r| (r.threshold - (20f64.ln() / (2.0 * r.n as f64)).sqrt()).abs() < 1e-15);
    Outcome {
        pass: envelope_ok && table.rows.iter().all(|r| r.frequency <= cap),
        detail: format!("frequencies {} vs cap {cap:.4}", freqs.join(", ")),
    }
}

fn slope_criterion(model: &str, lo: f64, hi: f64, all: &mut Vec<RunRecord>) -> (bool, String) {
    let mut cfg = ExperimentConfig::new(model, geometric_grid(), 200, 20240607);
    cfg.statistic = Statistic::Median;
    let (cdf, records) = run(&cfg, all);
    let r = rate_report(&cfg, &cdf, &records).unwrap();
    let s = r.fit.slope;
    (
        (lo..=hi).contains(&s),
        format!(
            "{model} slope {s:.4} in [{lo}, {hi}] (predicted {:.4}, p90 slope {:.4})",
            r.fit.predicted_slope, r.p90_fit.slope
        ),
    )
}

fn criterion_gap(all: &mut Vec<RunRecord>) -> Outcome {
    let cdf = CdfEvaluator::force_accept(catalog::gap());
    let third = 1.0 / 3.0;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for trial in 0..1000u64 {
        let em = draw_samples(&cdf, 101, SeedSpec::new(7, trial)).unwrap();
        let left = em.count_in(0.0, third);
        if 2 * left == em.len() {
            continue;
        }
        checked += 1;
        let d = winf_empirical(&cdf, &em).unwrap();
        worst = worst.min(d.w_infinity);
        all.push(record_of(&cdf, &em, trial as usize, d.w_infinity));
    }
    Outcome {
        pass: checked == 1000 && worst >= third - 1e-9,
        detail: format!("{checked} trials, min W∞ = {worst:.12}"),
    }
}

fn record_of(cdf: &CdfEvaluator, em: &EmpiricalMeasure, trial: usize, w_inf: f64) -> RunRecord {
    let report = winf_core::transport::distance_report(cdf, em).unwrap();
    let ks = winf_core::sampling::ks_statistic(em, cdf);
    RunRecord {
        model_id: cdf.model().id().to_string(),
        n: em.len(),
        trial,
        seed: em.seed().derived_seed(),
        w_inf,
        w_one: report.w_one.unwrap(),
        ks,
        violations: winf_core::experiments::inequality_suite(
            w_inf,
            report.w_one.unwrap(),
            ks,
            cdf.model().infimum(),
        ),
    }
}

fn criterion_inequalities(all: &[RunRecord]) -> Outcome {
    let bad = all
        .iter()
        .filter(|r| r.inequality_violations().next().is_some())
        .count();
    Outcome {
        pass: bad == 0 && !all.is_empty(),
        detail: format!("{bad} violations over {} records", all.len()),
    }
}

fn criterion_dkw(all: &mut Vec<RunRecord>) -> Outcome {
    let mut cfg = ExperimentConfig::new("uniform", vec![500], 5000, 47);
    cfg.envelopes.dkw = vec![0.03, 0.05, 0.08];
    let (cdf, records) = run(&cfg, all);
    let table = coverage_report(&cfg, &cdf, &records).unwrap();
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "t={}: {:.4} <= {:.4}+{:.4}",
                r.parameter, r.frequency, r.cap, r.slack
            )
        })
        .collect();
    Outcome {
        pass: table.all_pass,
        detail: rows.join("; "),
    }
}

fn criterion_certificates() -> Outcome {
    let models = [
        CdfEvaluator::new(catalog::uniform()).unwrap(),
        CdfEvaluator::new(catalog::tent()).unwrap(),
        CdfEvaluator::new(catalog::quadratic_zero()).unwrap(),
    ];
    let sizes = [64, 256, 1024, 4096, 16384];
    let mut dominated = 0;
    let mut worst_ratio: f64 = 0.0;
    for i in 0..100usize {
        let cdf = &models[i % 3];
        let n = sizes[(i / 3) % sizes.len()];
        let em = draw_samples(cdf, n, SeedSpec::new(1000 + i as u64, 0)).unwrap();
        let c = certify(cdf, &em, 3.0, 1.0).unwrap();
        if c.max_displacement >= c.exact_winf - 1e-12 {
            dominated += 1;
        }
        worst_ratio = worst_ratio.max(c.ratio);
    }
    Outcome {
        pass: dominated == 100 && worst_ratio <= 25.0,
        detail: format!("{dominated}/100 dominate, worst ratio {worst_ratio:.3}"),
    }
}

fn criterion_power_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0;
    for _ in 0..100_000 {
        let k = rng.random_range(1..=12);
        // Spread magnitudes over many binades, including near-equal pairs.
        let a = 10f64.powf(rng.random_range(-6.0..6.0));
        let b = if rng.random_bool(0.2) {
            a * (1.0 - 10f64.powf(rng.random_range(-15.0..-1.0)))
        } else {
            a * rng.random_range(0.0..1.0)
        };
        if !(b > 0.0 && b < a) {
            continue;
        }
        if !power_inequality_holds(a, b, k).unwrap() {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations in 1e5 cases"),
    }
}

#[test]
fn acceptance_criteria() {
    let mut all = Vec::new();
    let mut failures = Vec::new();
    let mut check = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(id, name, t, &o);
        if !o.pass {
            failures.push(id);
        }
    };

    check(1, "exact-distance oracles", &mut criterion_oracles);
    check(2, "lower-bounded envelope coverage", &mut || {
        criterion_envelope(&mut all)
    });
    check(3, "uniform exponent", &mut || {
        let (pass, detail) = slope_criterion("uniform", -0.58, -0.42, &mut all);
        Outcome { pass, detail }
    });
    check(4, "order-1 zero exponent", &mut || {
        let (pass, detail) = slope_criterion("tent", -0.33, -0.17, &mut all);
        Outcome { pass, detail }
    });
    check(5, "order-2 zero exponent", &mut || {
        let (pass, detail) = slope_criterion("quadratic-zero", -0.24, -0.10, &mut all);
        Outcome { pass, detail }
    });
    check(6, "singular and mixed exponents", &mut || {
        let (p1, d1) = slope_criterion("inverse-sqrt", -0.58, -0.42, &mut all);
        let (p2, d2) = slope_criterion("mixed", -0.33, -0.17, &mut all);
        let cdf = CdfEvaluator::new(catalog::mixed()).unwrap();
        let split = cdf.report();
        let split_ok = !split.below_one.is_empty() && !split.at_least_one.is_empty();
        Outcome {
            pass: p1 && p2 && split_ok,
            detail: format!("{d1}; {d2}; density split exercised: {split_ok}"),
        }
    });
    check(7, "gap counterexample", &mut || criterion_gap(&mut all));
    check(9, "DKW coverage", &mut || criterion_dkw(&mut all));
    check(8, "inequality suite", &mut || criterion_inequalities(&all));
    check(10, "certificate dominance", &mut criterion_certificates);
    check(11, "power inequality", &mut criterion_power_inequality);

    // Sanity link between the coverage threshold and the bounds module.
    assert!(
        (lower_bound_envelope(1.0, 100, 10.0).unwrap() - (20f64.ln() / 200.0).sqrt()).abs() < 1e-15
    );
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
