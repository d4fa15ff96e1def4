//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqtest::calibration::{calibrate, erlang_survival, invert_erlang_survival};
use seqtest::config::ExperimentConfig;
use seqtest::experiment::run_experiment;
use seqtest::fusion::{mixture_statistic, StrategyKind, SubsetPrior};
use seqtest::model::ObservationModel;
use seqtest::montecarlo::{theoretical_bounds, ExperimentSummary, GroundTruth, Simulator};
use seqtest::sensor::{LinkEncoding, SensorConfig, SensorState};
use seqtest::subset::SensorSet;

/// Censored trials may make up at most this fraction of an experiment.
const MAX_CENSORED_FRACTION: f64 = 1e-3;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn gaussian(mu: f64) -> ObservationModel {
    ObservationModel::gaussian(mu).unwrap()
}

fn error_cap(level: f64, n: u64) -> f64 {
    level + 3.0 * (level * (1.0 - level) / n as f64).sqrt()
}

/// Checks type-I/II rates and censoring of one experiment against the
/// non-asymptotic error-control bounds. Returns a list of violations.
fn error_control_violations(summary: &ExperimentSummary, alpha: f64, beta: f64, label: &str) -> Vec<String> {
    let mut out = Vec::new();
    let h0 = summary.h0();
    let cap = error_cap(alpha, h0.n_trials);
    if h0.error.rate > cap {
        out.push(format!("{label} type-I {:.5} > {cap:.5}", h0.error.rate));
    }
    for cell in summary.h1_cells() {
        let cap = error_cap(beta, cell.n_trials);
        if cell.error.rate > cap {
            out.push(format!("{label} {} type-II {:.5} > {cap:.5}", cell.truth, cell.error.rate));
        }
    }
    let censored = summary.censored_count() as f64 / summary.total_trials() as f64;
    if censored > MAX_CENSORED_FRACTION {
        out.push(format!("{label} censored fraction {censored:.5}"));
    }
    out
}

fn worst_rates(summary: &ExperimentSummary) -> (f64, f64) {
    let t2 = summary
        .h1_cells()
        .iter()
        .map(|c| c.error.rate)
        .fold(0.0, f64::max);
    (summary.type1_rate().rate, t2)
}

fn c1_calibration_round_trip() -> Outcome {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut worst_k1 = 0.0f64;
    for k in 1..=64u32 {
        for e in 1..=6 {
            let alpha = 10f64.powi(-e);
            let b = invert_erlang_survival(alpha, k).unwrap();
            let rel = (erlang_survival(b, k).unwrap() - alpha).abs() / alpha;
            worst_rel = worst_rel.max(rel);
            if k == 1 {
                worst_k1 = worst_k1.max((b + alpha.ln()).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_rel <= 1e-9 && worst_k1 <= 1e-12 && elapsed < 1.0,
        format!("max rel err {worst_rel:.2e}, K=1 max abs err {worst_k1:.2e}, {elapsed:.3}s"),
    )
}

fn c2_error_control() -> Outcome {
    let (alpha, beta, n) = (0.05, 0.05, 20_000);
    let mut violations = Vec::new();
    let mut details = Vec::new();
    for strategy in [
        StrategyKind::CentralizedPositivePart,
        StrategyKind::DecentralizedFullValue,
        StrategyKind::DecentralizedOneBit,
    ] {
        let name = strategy.name();
        let cfg = ExperimentConfig::homogeneous(5, gaussian(0.5), alpha, beta, strategy)
            .unwrap()
            .with_deltas(1.0)
            .unwrap();
        let summary = Simulator::new(&cfg)
            .unwrap()
            .estimate(&cfg.subsets_to_test, n, 20_240)
            .unwrap();
        violations.extend(error_control_violations(&summary, alpha, beta, name));
        let (t1, t2) = worst_rates(&summary);
        details.push(format!("{name}: I={t1:.4} maxII={t2:.4}"));
    }
    let detail = if violations.is_empty() {
        details.join("; ")
    } else {
        violations.join("; ")
    };
    Outcome::new(violations.is_empty(), detail)
}

fn c3_one_bit_error_control() -> Outcome {
    let (alpha, beta, n) = (0.05, 0.05, 20_000);
    let mut violations = Vec::new();
    let mut details = Vec::new();
    for delta in [0.5, 1.0, 2.0] {
        let cfg = ExperimentConfig::homogeneous(5, gaussian(0.5), alpha, beta, StrategyKind::DecentralizedOneBit)
            .unwrap()
            .with_deltas(delta)
            .unwrap();
        let summary = Simulator::new(&cfg)
            .unwrap()
            .estimate(&cfg.subsets_to_test, n, 31_337)
            .unwrap();
        let label = format!("delta={delta}");
        violations.extend(error_control_violations(&summary, alpha, beta, &label));
        let (t1, t2) = worst_rates(&summary);
        details.push(format!("{label}: I={t1:.4} maxII={t2:.4}"));
    }
    let detail = if violations.is_empty() {
        details.join("; ")
    } else {
        violations.join("; ")
    };
    Outcome::new(violations.is_empty(), detail)
}

fn c4_sandwich_properties() -> Outcome {
    let models = [
        ("gaussian", vec![gaussian(1.0), gaussian(0.3), gaussian(-2.0)]),
        (
            "bernoulli",
            vec![
                ObservationModel::bernoulli(0.3, 0.7).unwrap(),
                ObservationModel::bernoulli(0.5, 0.1).unwrap(),
                ObservationModel::bernoulli(0.05, 0.2).unwrap(),
            ],
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0u64;
    let mut checks = 0u64;
    let mut paths = 0u64;
    for (_, kinds) in &models {
        for path in 0..1500 {
            let model = kinds[path % kinds.len()];
            let delta = rng.random_range(0.05..3.0);
            let cfg = SensorConfig::new(0, model, delta, 4.0).unwrap();
            let under_h1 = rng.random_bool(0.5);
            let mut state = SensorState::new();
            for _ in 0..300 {
                let x = model.sample(under_h1, &mut rng);
                state.observe(&cfg, x, LinkEncoding::OneBit).unwrap();
                let one_bit = state.local_hat_z(&cfg, &StrategyKind::DecentralizedOneBit).unwrap();
                let full = state.local_hat_z(&cfg, &StrategyKind::DecentralizedFullValue).unwrap();
                let positive = state.local_hat_z(&cfg, &StrategyKind::CentralizedPositivePart).unwrap();
                let ok = one_bit <= state.z_last_comm
                    && state.z_last_comm <= state.m
                    && positive <= state.m
                    && full <= state.m
                    && one_bit <= state.m
                    && full >= (state.z - delta).max(0.0);
                checks += 1;
                if !ok {
                    violations += 1;
                }
            }
            paths += 1;
        }
    }
    Outcome::new(
        violations == 0,
        format!("{violations} violations over {checks} steps on {paths} paths"),
    )
}

fn c5_coupled_ordering() -> Outcome {
    let base = ExperimentConfig::homogeneous(3, gaussian(1.0), 0.01, 0.01, StrategyKind::CentralizedPositivePart)
        .unwrap()
        .with_deltas(1.0)
        .unwrap();
    let sims: Vec<Simulator> = [
        StrategyKind::CentralizedPositivePart,
        StrategyKind::DecentralizedFullValue,
        StrategyKind::DecentralizedOneBit,
    ]
    .into_iter()
    .map(|s| Simulator::new(&base.clone().with_strategy(s).unwrap()).unwrap())
    .collect();
    let truths: Vec<GroundTruth> = std::iter::once(GroundTruth::H0)
        .chain(SensorSet::singletons_and_full(3).into_iter().map(GroundTruth::H1))
        .collect();
    let n_paths = 5000u64;
    let mut ordered = 0u64;
    let mut pos_le_full = 0u64;
    let mut full_le_bit = 0u64;
    for i in 0..n_paths {
        let truth = &truths[(i % truths.len() as u64) as usize];
        // Never firing within the horizon counts as +infinity.
        let times: Vec<u64> = sims
            .iter()
            .map(|s| s.upper_rule_time(truth, 90_000 + i).unwrap().unwrap_or(u64::MAX))
            .collect();
        pos_le_full += u64::from(times[0] <= times[1]);
        full_le_bit += u64::from(times[1] <= times[2]);
        if times[0] <= times[1] && times[1] <= times[2] {
            ordered += 1;
        }
    }
    Outcome::new(
        ordered == n_paths,
        format!(
            "{ordered}/{n_paths} paths fully ordered; positive_part <= full_value on {pos_le_full}, \
             full_value <= one_bit on {full_le_bit}"
        ),
    )
}

/// Recomputes `(N_t, Z_{tau(t)}, sum eta)` from scratch for a prefix of
/// increments by scanning the whole history.
fn replay(increments: &[f64], delta: f64) -> (u64, f64, f64) {
    let mut z = 0.0;
    let mut last = 0.0;
    let mut n = 0;
    let mut overshoot = 0.0;
    for inc in increments {
        z += inc;
        let ell = z - last;
        if ell >= delta {
            n += 1;
            overshoot += ell - delta;
            last = z;
        }
    }
    (n, last, overshoot)
}

fn c6_replay_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let models = [gaussian(1.0), gaussian(0.4), ObservationModel::bernoulli(0.3, 0.7).unwrap()];
    let mut mismatches = 0u64;
    let mut checks = 0u64;
    for path in 0..1000 {
        let model = models[path % models.len()];
        let delta = rng.random_range(0.1..2.5);
        let cfg = SensorConfig::new(0, model, delta, 5.0).unwrap();
        let under_h1 = rng.random_bool(0.5);
        let mut state = SensorState::new();
        let mut history = Vec::new();
        for _ in 0..120 {
            let x = model.sample(under_h1, &mut rng);
            history.push(model.llr_increment(x).unwrap());
            state.observe(&cfg, x, LinkEncoding::FullValue).unwrap();
            let (n, last, overshoot) = replay(&history, delta);
            checks += 1;
            if n != state.n_comm || last != state.z_last_comm || overshoot != state.overshoot_sum {
                mismatches += 1;
            }
        }
    }
    Outcome::new(
        mismatches == 0,
        format!("{mismatches} mismatches over {checks} steps on 1000 paths"),
    )
}

/// Mean first time the summed LLR of `k` gaussian sensors, all shifted by
/// `mu`, reaches `b`. Simulated directly, without the library.
fn mean_first_passage(k: usize, mu: f64, b: f64, n: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut total = 0u64;
    for _ in 0..n {
        let mut z = 0.0;
        let mut t = 0u64;
        while z < b {
            t += 1;
            for _ in 0..k {
                let x: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) + mu;
                z += mu * x - mu * mu / 2.0;
            }
        }
        total += t;
    }
    total as f64 / n as f64
}

fn c7_expected_sample_size() -> Outcome {
    let n = 10_000;
    let run = |level: f64| {
        let cfg = ExperimentConfig::homogeneous(3, gaussian(1.0), level, level, StrategyKind::CentralizedPositivePart)
            .unwrap();
        let full = SensorSet::full(3).unwrap();
        let summary = Simulator::new(&cfg).unwrap().estimate(&[full], n, 7_000).unwrap();
        (cfg, summary)
    };

    let (cfg, summary) = run(1e-3);
    let full = SensorSet::full(3).unwrap();
    let thresholds = cfg.thresholds();
    let (e0_bound, e1_bound) = theoretical_bounds(cfg.alpha, cfg.beta, &cfg.models, &full);
    let i1: f64 = cfg.models.iter().map(|m| m.kl_numbers().i1).sum();
    // Positive part satisfies the lower-envelope condition with zero slack.
    let upper = thresholds.b / i1;

    let h1 = &summary.cells[1].mean_stop;
    let h0 = &summary.h0().mean_stop;
    let h1_ok = h1.mean >= e1_bound - 2.0 * h1.width() && h1.mean <= upper + 2.0 * h1.width();
    let h0_ok = h0.mean >= e0_bound - 2.0 * h0.width();
    let censored_ok = summary.censored_count() == 0;

    let mut ratios = Vec::new();
    for level in [1e-1, 1e-2, 1e-3] {
        let (cfg, summary) = run(level);
        let (_, bound) = theoretical_bounds(cfg.alpha, cfg.beta, &cfg.models, &full);
        ratios.push(summary.cells[1].mean_stop.mean / bound);
    }
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let passage = mean_first_passage(3, 1.0, thresholds.b, n);

    Outcome::new(
        h1_ok && h0_ok && censored_ok && decreasing,
        format!(
            "E1[T]={:.3}±{:.3} in [{:.3}, {:.3}]: {h1_ok} (first passage of Z^A over B: {:.3}); \
             E0[T]={:.3} >= {:.3}: {h0_ok}; ratios {:.3?}: {decreasing}",
            h1.mean,
            h1.width() / 2.0,
            e1_bound,
            upper,
            passage,
            h0.mean,
            e0_bound,
            ratios
        ),
    )
}

fn c8_mixture_cross_check() -> Outcome {
    let prior = SubsetPrior::uniform_power_set(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
        let direct: f64 = (1u32..8)
            .map(|mask| {
                let s: f64 = (0..3).filter(|b| mask >> b & 1 == 1).map(|b| z[b]).sum();
                s.exp() / 7.0
            })
            .sum::<f64>()
            .ln();
        worst = worst.max((mixture_statistic(&z, &prior).unwrap() - direct).abs());
    }
    let mut overflow_free = true;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-700.0..700.0)).collect();
        let m = mixture_statistic(&z, &prior).unwrap();
        let best = prior
            .entries()
            .iter()
            .map(|(s, w)| w.ln() + s.sum_over(&z))
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() || m < best - 1e-9 || m > best + 7f64.ln() + 1e-9 {
            overflow_free = false;
        }
    }
    Outcome::new(
        worst <= 1e-12 && overflow_free,
        format!("max |mixture - direct| = {worst:.2e}; finite and bracketed at |z| <= 700: {overflow_free}"),
    )
}

fn c9_determinism() -> Outcome {
    let mut cfg = ExperimentConfig::homogeneous(3, gaussian(1.0), 0.05, 0.05, StrategyKind::DecentralizedOneBit)
        .unwrap();
    cfg.n_trials = 2000;
    cfg.base_seed = 99;
    cfg.parallel = true;
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_experiment(&cfg, &mut a).unwrap();
    run_experiment(&cfg, &mut b).unwrap();
    cfg.parallel = false;
    let mut c = Vec::new();
    run_experiment(&cfg, &mut c).unwrap();
    Outcome::new(
        a == b && a == c && !a.is_empty(),
        format!(
            "{} bytes; parallel repeat identical: {}; sequential identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn c10_delta_tradeoff() -> Outcome {
    let (alpha, beta, n) = (0.01, 0.01, 20_000);
    let base = ExperimentConfig::homogeneous(3, gaussian(1.0), alpha, beta, StrategyKind::DecentralizedOneBit).unwrap();
    let mut messages = Vec::new();
    let mut violations = Vec::new();
    for delta in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let cfg = base.clone().with_deltas(delta).unwrap();
        let summary = Simulator::new(&cfg)
            .unwrap()
            .estimate(&cfg.subsets_to_test, n, 1_010)
            .unwrap();
        violations.extend(error_control_violations(&summary, alpha, beta, &format!("delta={delta}")));
        messages.push(summary.mean_messages_per_trial());
    }
    let decreasing = messages.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        decreasing && violations.is_empty(),
        format!(
            "messages/trial {:.3?}: decreasing {decreasing}; error violations: {}",
            messages,
            if violations.is_empty() { "none".to_string() } else { violations.join("; ") }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 calibration round trip", c1_calibration_round_trip),
        ("2 error control (K=5, three strategies)", c2_error_control),
        ("3 one-bit error control over delta", c3_one_bit_error_control),
        ("4 statistic sandwich properties", c4_sandwich_properties),
        ("5 coupled stopping-time ordering", c5_coupled_ordering),
        ("6 incremental state vs replay", c6_replay_equivalence),
        ("7 expected sample size bounds", c7_expected_sample_size),
        ("8 mixture comparator cross-check", c8_mixture_cross_check),
        ("9 determinism", c9_determinism),
        ("10 communication/delay tradeoff", c10_delta_tradeoff),
    ];
    // Sanity: calibrated thresholds are what the criteria assume.
    assert!((calibrate(0.05, 0.01, 1).unwrap().a - 0.01f64.ln().abs()).abs() < 1e-15);

    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] criterion {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
