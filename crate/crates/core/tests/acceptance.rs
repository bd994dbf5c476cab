//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use aircomp_core::aircomp::{aggregate, common_target_mse, md_total, mse_total};
use aircomp_core::audit::{
    audit_instance, run_audit, AuditInstance, AuditTolerances, CheckedSolver,
};
use aircomp_core::classify::noise_free_accuracy;
use aircomp_core::fdm_opt::FdmOptions;
use aircomp_core::harness::{
    run_sweep, write_result, Axis, OutputFormat, SweepConfig, SweepResult,
};
use aircomp_core::rng::stream_rng;
use aircomp_core::sensing::synthesize_sample;
use aircomp_core::tdm_opt::{comp_optimal_tdm, decision_optimal_tdm, is_two_regime};
use aircomp_core::{
    Allocation, ChannelRealization, ClassModel, Multiplexing, Scenario, SchemeKind,
};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20_240_601;
const SWEEP_TRIALS: usize = 2000;
/// SNR used for the device-count and subcarrier-count sweeps.
const MODERATE_SNR_DB: f64 = 20.0;

fn cscg_sample<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn base_scenario() -> Scenario {
    Scenario::with_snr_db(3, 4, 32, 0.1, 0.1, 0.0, Multiplexing::Fdm, SEED).unwrap()
}

fn sweep(axis: Axis, values: Vec<f64>, snr_db: Option<f64>, trials: usize) -> SweepConfig {
    SweepConfig {
        scenario: base_scenario(),
        class_model: ClassModel::default_four_class(),
        axis,
        values,
        snr_db,
        schemes: SchemeKind::ALL.to_vec(),
        trials,
        mapping: Default::default(),
        solver: FdmOptions::default(),
        classifier: None,
        output: None,
        format: OutputFormat::Csv,
    }
}

fn audit_outcome(solvers: &[CheckedSolver], instances: usize) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &s in solvers {
        let r = run_audit(
            s,
            instances,
            SEED,
            &FdmOptions::default(),
            &AuditTolerances::default(),
            None,
        )
        .unwrap();
        let dominated = r.rows.iter().filter(|x| x.dominated).count();
        let worst = r.rows.iter().map(|x| x.rel_diff).fold(0.0, f64::max);
        let mut part = format!(
            "{s}: {}/{} pass, {dominated} dominated, max rel diff {worst:.1e}",
            r.passed, instances
        );
        if let Some(gap) = r.rows.iter().filter_map(|x| x.duality_gap).reduce(f64::max) {
            let cs = r
                .rows
                .iter()
                .filter_map(|x| x.cs_residual)
                .fold(0.0, f64::max);
            part.push_str(&format!(", max gap {gap:.1e}, max cs/P {cs:.1e}"));
        }
        parts.push(part);
        pass &= r.failed == 0 && dominated == 0;
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_1() -> Outcome {
    audit_outcome(&[CheckedSolver::CompTdm, CheckedSolver::DecisionTdm], 200)
}

fn criterion_2() -> Outcome {
    audit_outcome(&[CheckedSolver::CompFdm, CheckedSolver::DecisionFdm], 100)
}

fn random_allocation<R: Rng>(rng: &mut R, k: usize, m: usize) -> (Allocation, ChannelRealization) {
    let channels = ChannelRealization::new(
        (0..k)
            .map(|_| (0..m).map(|_| cscg_sample(rng)).collect())
            .collect(),
    )
    .unwrap();
    let mut alloc = Allocation::zeros(k, m, Multiplexing::Fdm);
    for row in alloc.transmit.iter_mut() {
        for b in row.iter_mut() {
            *b = cscg_sample(rng) * rng.random_range(0.2..2.0);
        }
    }
    for a in alloc.receive.iter_mut() {
        *a = cscg_sample(rng) * rng.random_range(0.2..1.5);
    }
    (alloc, channels)
}

/// Empirical `E‖ŷ − y‖²` for independent zero-mean user signals of
/// variance `σ_n²`, with its standard error.
fn empirical_error<R: Rng>(
    rng: &mut R,
    alloc: &Allocation,
    channels: &ChannelRealization,
    var: &[f64],
    noise_var: f64,
    draws: usize,
) -> (f64, f64) {
    let (k, m) = (alloc.num_users(), alloc.feature_dim());
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let mut err = 0.0;
        for n in 0..m {
            let mut received = Complex64::new(0.0, 0.0);
            let mut ideal = 0.0;
            for kk in 0..k {
                let s: f64 = rng.sample::<f64, _>(StandardNormal) * var[n].sqrt();
                ideal += s;
                received += channels.gain(kk, n) * alloc.transmit[kk][n] * s;
            }
            received += cscg_sample(rng) * noise_var.sqrt();
            err += (alloc.receive[n] * received - ideal).norm_sqr();
        }
        sum += err;
        sum_sq += err * err;
    }
    let t = draws as f64;
    let mean = sum / t;
    (mean, ((sum_sq / t - mean * mean) / t).sqrt())
}

fn criterion_3() -> Outcome {
    let mut rng = stream_rng(SEED, 3);
    let mut worst_z: f64 = 0.0;
    let mut worst_md: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let (alloc, channels) = random_allocation(&mut rng, k, m);
        let var: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let noise = rng.random_range(0.05..0.5);
        let predicted = mse_total(&alloc, &channels, &var, noise).unwrap();
        let (mean, se) = empirical_error(&mut rng, &alloc, &channels, &var, noise, 100_000);
        worst_z = worst_z.max((mean - predicted).abs() / se);

        let delta: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let md = md_total(&alloc, &channels, &delta, &var, noise).unwrap();
        let mut moved = alloc.clone();
        for a in moved.receive.iter_mut() {
            *a = cscg_sample(&mut rng) * 3.0;
        }
        let md2 = md_total(&moved, &channels, &delta, &var, noise).unwrap();
        worst_md = worst_md.max((md - md2).abs() / md.max(f64::MIN_POSITIVE));
    }
    Outcome {
        pass: worst_z <= 3.0 && worst_md <= 1e-15,
        detail: format!("max |empirical - mse_total| = {worst_z:.2} stderr; max relative MD change under a {worst_md:.1e}"),
    }
}

fn monotone_within(values: &[(f64, f64)], sigmas: f64) -> bool {
    values
        .windows(2)
        .all(|w| w[1].0 + sigmas * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt() >= w[0].0)
}

fn criterion_4() -> Outcome {
    let cfg = sweep(
        Axis::Snr,
        vec![-10.0, 0.0, 5.0, 10.0, 15.0, 30.0],
        None,
        SWEEP_TRIALS,
    );
    let result = run_sweep(&cfg).unwrap();
    let (a0, _) = noise_free_accuracy(&cfg.class_model, 0.1, 3, 200_000, SEED).unwrap();
    let mut failures = Vec::new();
    for s in SchemeKind::ALL {
        let low = result.row(-10.0, s).unwrap().accuracy;
        if (low - 0.25).abs() > 0.03 {
            failures.push(format!("{s} at -10 dB: {low:.4}"));
        }
        let high = result.row(30.0, s).unwrap().accuracy;
        let ok = if s == SchemeKind::Inversion {
            high <= a0 - 0.03
        } else {
            (high - a0).abs() <= 0.02
        };
        if !ok {
            failures.push(format!("{s} at 30 dB: {high:.4} vs A_0 {a0:.4}"));
        }
    }
    for db in [0.0, 5.0, 10.0, 15.0] {
        let d = result.row(db, SchemeKind::DecisionOpt).unwrap();
        let c = result.row(db, SchemeKind::CompOpt).unwrap();
        if d.accuracy < c.accuracy - 3.0 * d.stderr {
            failures.push(format!("decision below comp at {db} dB"));
        }
    }
    let infeasible: usize = result.rows.iter().map(|r| r.infeasible).sum();
    if infeasible > 0 {
        failures.push(format!("{infeasible} infeasible allocations"));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "A_0 = {a0:.4}; {}; {}",
            summarize(&result),
            failures.join(", ")
        ),
    }
}

fn summarize(result: &SweepResult) -> String {
    let mut axis: Vec<f64> = result.rows.iter().map(|r| r.axis).collect();
    axis.dedup();
    axis.iter()
        .map(|&a| {
            let accs: Vec<String> = SchemeKind::ALL
                .iter()
                .map(|&s| format!("{:.3}", result.row(a, s).unwrap().accuracy))
                .collect();
            format!("{a}: {}", accs.join("/"))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn spread(result: &SweepResult, axis: f64) -> f64 {
    let accs: Vec<f64> = SchemeKind::ALL
        .iter()
        .map(|&s| result.row(axis, s).unwrap().accuracy)
        .collect();
    accs.iter().cloned().fold(f64::MIN, f64::max) - accs.iter().cloned().fold(f64::MAX, f64::min)
}

fn criterion_5() -> Outcome {
    let cfg = sweep(
        Axis::K,
        vec![1.0, 2.0, 3.0, 6.0, 12.0],
        Some(MODERATE_SNR_DB),
        SWEEP_TRIALS,
    );
    let result = run_sweep(&cfg).unwrap();
    let monotone = SchemeKind::ALL.iter().all(|&s| {
        let curve: Vec<(f64, f64)> = result
            .curve(s)
            .iter()
            .map(|r| (r.accuracy, r.stderr))
            .collect();
        monotone_within(&curve, 3.0)
    });
    let (s1, s12) = (spread(&result, 1.0), spread(&result, 12.0));
    Outcome {
        pass: monotone && s12 < s1,
        detail: format!(
            "monotone {monotone}; spread K=1 {s1:.4}, K=12 {s12:.4}; {}",
            summarize(&result)
        ),
    }
}

fn criterion_6() -> Outcome {
    let cfg = sweep(
        Axis::N,
        vec![8.0, 16.0, 32.0, 64.0],
        Some(MODERATE_SNR_DB),
        SWEEP_TRIALS,
    );
    let result = run_sweep(&cfg).unwrap();
    let gap = |n: f64| {
        let d = result.row(n, SchemeKind::DecisionOpt).unwrap();
        let c = result.row(n, SchemeKind::CompOpt).unwrap();
        (
            d.accuracy - c.accuracy,
            (d.stderr.powi(2) + c.stderr.powi(2)).sqrt(),
        )
    };
    let (g8, _) = gap(8.0);
    let (g64, se64) = gap(64.0);
    Outcome {
        pass: g64 < g8 && g64 >= se64,
        detail: format!(
            "gap N=8 {g8:.4}, N=64 {g64:.4} (stderr {se64:.4}); {}",
            summarize(&result)
        ),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = stream_rng(SEED, 7);
    let cm = ClassModel::default_four_class();
    let (sensing, noise) = (0.1, 0.1);
    let draws = 10_000;
    let mut worst: f64 = f64::INFINITY;
    for _ in 0..50 {
        let k = rng.random_range(1..=4);
        let (alloc, channels) = random_allocation(&mut rng, k, cm.feature_dim());
        let expected = common_target_mse(&alloc, &channels, &cm, sensing, noise).unwrap();
        let gamma_sq = expected * rng.random_range(1.0..6.0);
        let mut inside = 0usize;
        for _ in 0..draws {
            let label = rng.random_range(1..=cm.num_classes());
            let sample = synthesize_sample(&cm, label, sensing, k, &mut rng).unwrap();
            let y = aggregate(&sample, &channels, &alloc, noise, &mut rng).unwrap();
            let e: f64 = y
                .iter()
                .zip(sample.ideal_sum())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            if e < gamma_sq {
                inside += 1;
            }
        }
        let p = inside as f64 / draws as f64;
        let bound = 1.0 - expected / gamma_sq;
        let se = (p * (1.0 - p) / draws as f64)
            .sqrt()
            .max(1.0 / draws as f64);
        worst = worst.min((p - bound) / se);
    }
    Outcome {
        pass: worst >= -3.0,
        detail: format!("min (empirical - Markov bound) = {worst:.1} stderr"),
    }
}

fn criterion_8() -> Outcome {
    let mut bad = 0;
    for i in 0..100 {
        let AuditInstance::Tdm(s) = audit_instance(CheckedSolver::CompTdm, SEED + 8, i) else {
            unreachable!()
        };
        let c = comp_optimal_tdm(&s.h, &s.budgets, &s.nu, s.signal_var, s.noise_var).unwrap();
        let d = decision_optimal_tdm(&s.h, &s.budgets, &s.nu, s.delta_prime(), s.sigma_eq_sq())
            .unwrap();
        if !is_two_regime(&c, &s.h, &s.budgets, &s.nu, 1e-9)
            || !is_two_regime(&d, &s.h, &s.budgets, &s.nu, 1e-9)
        {
            bad += 1;
        }
    }
    Outcome {
        pass: bad == 0,
        detail: format!("{bad} of 100 instances break the two-regime structure"),
    }
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep(Axis::Snr, vec![0.0, 10.0], None, 200);
    let mut files = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.csv"));
        let result = run_sweep(&cfg).unwrap();
        let mut file = std::fs::File::create(&path).unwrap();
        write_result(&result, OutputFormat::Csv, &mut file).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    Outcome {
        pass: files[0] == files[1] && !files[0].is_empty(),
        detail: format!("{} bytes per run", files[0].len()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 TDM solvers vs grid oracles", criterion_1),
        ("2 FDM duality audit", criterion_2),
        ("3 MSE Monte-Carlo consistency", criterion_3),
        ("4 SNR sweep bands", criterion_4),
        ("5 device-count trend", criterion_5),
        ("6 subcarrier-count gap", criterion_6),
        ("7 Markov bound", criterion_7),
        ("8 two-regime structure", criterion_8),
        ("9 reproducible CSV", criterion_9),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {name}: {verdict} ({:.1}s) {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
