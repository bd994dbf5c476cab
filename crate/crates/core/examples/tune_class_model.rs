//! Prints the operating points used to pick the default class model.
//!
//! Usage: `cargo run --release --example tune_class_model -- [s1 s2 s3 s4 var] [trials]`
//!
//! With no arguments the shipped defaults are evaluated. For each candidate
//! the noise-free accuracy `A_0` (three devices, σ_r² = 0.1) is printed,
//! followed by SNR, device-count and subcarrier-count sweeps of all four
//! schemes.

use aircomp_core::classify::noise_free_accuracy;
use aircomp_core::harness::{run_sweep, Axis, SweepConfig, SweepResult};
use aircomp_core::model::{DEFAULT_FEATURE_VAR, DEFAULT_OFFSET, DEFAULT_SPACING};
use aircomp_core::{ClassModel, Multiplexing, Scenario, SchemeKind};

fn model(spacing: [f64; 4], var: f64, offset: f64) -> ClassModel {
    const LEVELS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];
    const PERMS: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 3, 0, 2], [2, 0, 3, 1], [3, 2, 1, 0]];
    let means = (0..4)
        .map(|c| {
            (0..4)
                .map(|m| offset + spacing[m] * LEVELS[PERMS[m][c]])
                .collect()
        })
        .collect();
    ClassModel::new(means, vec![var; 4]).unwrap()
}

fn print(result: &SweepResult) {
    let mut line = String::from("      axis");
    for s in SchemeKind::ALL {
        line.push_str(&format!(" {:>14}", s.name()));
    }
    println!("{line}");
    let mut axis: Vec<f64> = result.rows.iter().map(|r| r.axis).collect();
    axis.dedup();
    for a in axis {
        let mut line = format!("{a:>10}");
        for s in SchemeKind::ALL {
            let r = result.row(a, s).unwrap();
            line.push_str(&format!(" {:>7.4}±{:.4}", r.accuracy, r.stderr));
        }
        println!("{line}");
    }
}

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let (spacing, var, offset) = if args.len() >= 6 {
        ([args[0], args[1], args[2], args[3]], args[4], args[5])
    } else {
        (DEFAULT_SPACING, DEFAULT_FEATURE_VAR, DEFAULT_OFFSET)
    };
    let trials = args.get(6).map(|t| *t as usize).unwrap_or(2000);
    let cm = model(spacing, var, offset);
    let (a0, se) = noise_free_accuracy(&cm, 0.1, 3, 200_000, 1).unwrap();
    println!("spacing {spacing:?} var {var} offset {offset}: A_0 = {a0:.4} ± {se:.4}");
    let sweeps = std::env::var("SWEEPS").unwrap_or_else(|_| "snr,k,n".into());
    let only: Vec<&str> = sweeps.split(',').collect();

    let scenario = Scenario::with_snr_db(3, 4, 32, 0.1, 0.1, 0.0, Multiplexing::Fdm, 2024).unwrap();
    let mut cfg = SweepConfig {
        scenario,
        class_model: cm,
        axis: Axis::Snr,
        values: std::env::var("SNR_POINTS")
            .map(|v| v.split(',').map(|x| x.parse().unwrap()).collect())
            .unwrap_or_else(|_| vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]),
        snr_db: None,
        schemes: SchemeKind::ALL.to_vec(),
        trials,
        mapping: Default::default(),
        solver: Default::default(),
        classifier: None,
        output: None,
        format: Default::default(),
    };
    if only.contains(&"snr") {
        println!("SNR sweep");
        print(&run_sweep(&cfg).unwrap());
    }

    let moderate = std::env::var("MODERATE_SNR")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(5.0);
    cfg.snr_db = Some(moderate);
    cfg.axis = Axis::K;
    cfg.values = vec![1.0, 2.0, 3.0, 6.0, 12.0];
    if only.contains(&"k") {
        println!("K sweep at {moderate} dB");
        print(&run_sweep(&cfg).unwrap());
    }

    cfg.axis = Axis::N;
    cfg.values = vec![4.0, 8.0, 16.0, 32.0, 64.0];
    if only.contains(&"n") {
        println!("N sweep at {moderate} dB");
        print(&run_sweep(&cfg).unwrap());
    }
}
