use aircomp_core::harness::{emit, run_sweep, write_result, OutputFormat, SweepConfig};
use aircomp_core::{SchemeKind, SweepResult};

const CONFIG: &str = r#"{
    "scenario": {"num_users": 2, "feature_dim": 4, "num_subcarriers": 6,
                 "sensing_noise_var": 0.1, "channel_noise_var": 0.1,
                 "power_budgets": [1.0, 1.0], "scheme": "fdm", "seed": 31},
    "axis": "k", "values": [1, 2, 4], "snr_db": 20.0, "trials": 100,
    "schemes": ["decision-opt", "equal"]
}"#;

fn result() -> SweepResult {
    run_sweep(&SweepConfig::from_json(CONFIG).unwrap()).unwrap()
}

#[test]
fn csv_has_one_row_per_point_and_scheme() {
    let r = result();
    let mut buf = Vec::new();
    write_result(&r, OutputFormat::Csv, &mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "axis",
            "scheme",
            "accuracy",
            "stderr",
            "mse",
            "md",
            "converged",
            "seed"
        ]
    );
    let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 6);
    assert_eq!(&records[0][1], "decision-opt");
    assert_eq!(&records[1][1], "equal");
    for (rec, row) in records.iter().zip(&r.rows) {
        assert_eq!(rec[2].parse::<f64>().unwrap(), row.accuracy);
        assert_eq!(rec[7].parse::<u64>().unwrap(), row.seed);
    }
}

#[test]
fn json_round_trips() {
    let r = result();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    emit(&r, OutputFormat::Json, &path).unwrap();
    let back: SweepResult = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(back
        .curve(SchemeKind::Equal)
        .iter()
        .all(|row| row.trials == 100));
}

#[test]
fn rows_carry_accuracy_in_range() {
    for row in result().rows {
        assert!((0.0..=1.0).contains(&row.accuracy));
        assert!(row.stderr >= 0.0 && row.mse >= 0.0 && row.md >= 0.0);
        assert_eq!(row.infeasible, 0);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        CONFIG.replace("\"trials\": 100", "\"trials\": 5"),
        CONFIG.replace("[1, 2, 4]", "[2, 1]"),
        CONFIG.replace("[1, 2, 4]", "[]"),
        CONFIG.replace("[1, 2, 4]", "[1.5]"),
        CONFIG.replace("\"equal\"", "\"decision-opt\""),
    ] {
        assert!(SweepConfig::from_json(&bad).is_err(), "accepted {bad}");
    }
}
