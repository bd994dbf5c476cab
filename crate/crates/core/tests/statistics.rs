use aircomp_core::aircomp::{aggregate, common_target_mse, mmse_receive};
use aircomp_core::classify::{map_classify, noise_free_accuracy};
use aircomp_core::model::second_moments;
use aircomp_core::rng::stream_rng;
use aircomp_core::sensing::synthesize_sample;
use aircomp_core::{Allocation, ChannelRealization, ClassModel, Multiplexing};
use num_complex::Complex64;
use rand::Rng;

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

#[test]
fn mixture_second_moments_match_sampling() {
    let cm = ClassModel::default_four_class();
    let sensing = 0.1;
    let moments = second_moments(&cm, sensing, 2).unwrap();
    let mut rng = stream_rng(11, 0);
    let draws = 1_000_000;
    let dims = cm.feature_dim();
    let mut sq = vec![Vec::with_capacity(draws); dims];
    for _ in 0..draws {
        let label = rng.random_range(1..=cm.num_classes());
        let s = synthesize_sample(&cm, label, sensing, 1, &mut rng).unwrap();
        for m in 0..dims {
            sq[m].push(s.observations[0][m].powi(2));
        }
    }
    for m in 0..dims {
        let (mean, se) = mean_and_stderr(&sq[m]);
        let z = (mean - moments.nu_sq[0][m]).abs() / se;
        assert!(
            z < 4.0,
            "dim {m}: sampled {mean} vs {} ({z:.1} se)",
            moments.nu_sq[1][m]
        );
    }
}

#[test]
fn sensing_noise_is_independent_across_devices() {
    let cm = ClassModel::default_four_class();
    let sensing = 0.3;
    let mut rng = stream_rng(12, 0);
    let draws = 100_000;
    let (mut same, mut cross) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let s = synthesize_sample(&cm, 2, sensing, 2, &mut rng).unwrap();
        let d0 = s.observations[0][0] - s.ground_truth[0];
        let d1 = s.observations[1][0] - s.ground_truth[0];
        same.push(d0 * d0);
        cross.push(d0 * d1);
    }
    let (v, se_v) = mean_and_stderr(&same);
    let (c, se_c) = mean_and_stderr(&cross);
    assert!((v - sensing).abs() < 4.0 * se_v, "variance {v}");
    assert!(c.abs() < 4.0 * se_c, "covariance {c}");
}

#[test]
fn common_target_mse_matches_pipeline() {
    let cm = ClassModel::default_four_class();
    let (sensing, noise) = (0.1, 0.2);
    let mut rng = stream_rng(13, 0);
    let k = 3;
    let dims = cm.feature_dim();
    let channels = ChannelRealization::new(
        (0..k)
            .map(|i| {
                (0..dims)
                    .map(|n| Complex64::from_polar(0.5 + 0.3 * i as f64, 0.4 * n as f64))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let mut alloc = Allocation::zeros(k, dims, Multiplexing::Fdm);
    for (i, row) in alloc.transmit.iter_mut().enumerate() {
        for (n, b) in row.iter_mut().enumerate() {
            *b = Complex64::from_polar(0.8 + 0.1 * n as f64, -0.2 * i as f64);
        }
    }
    for n in 0..dims {
        alloc.receive[n] = mmse_receive(&alloc.effective_gains(&channels, n), 1.0, noise);
    }
    let predicted = common_target_mse(&alloc, &channels, &cm, sensing, noise).unwrap();
    let errs: Vec<f64> = (0..100_000)
        .map(|_| {
            let label = rng.random_range(1..=cm.num_classes());
            let s = synthesize_sample(&cm, label, sensing, k, &mut rng).unwrap();
            let y = aggregate(&s, &channels, &alloc, noise, &mut rng).unwrap();
            y.iter()
                .zip(s.ideal_sum())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum()
        })
        .collect();
    let (mean, se) = mean_and_stderr(&errs);
    assert!(
        (mean - predicted).abs() < 4.0 * se,
        "sampled {mean} vs {predicted}"
    );
}

#[test]
fn indistinguishable_classes_give_chance_accuracy() {
    let cm = ClassModel::new(vec![vec![0.5, -0.2]; 4], vec![0.1, 0.1]).unwrap();
    let (acc, _) = noise_free_accuracy(&cm, 0.1, 3, 20_000, 5).unwrap();
    // Ties resolve to the first label, so every trial answers class 1.
    assert!((acc - 0.25).abs() < 0.02, "{acc}");
}

#[test]
fn well_separated_classes_are_nearly_perfect() {
    let cm = ClassModel::new(
        vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]],
        vec![0.1, 0.1],
    )
    .unwrap();
    let (acc, _) = noise_free_accuracy(&cm, 0.1, 2, 20_000, 6).unwrap();
    assert!(acc > 0.99, "{acc}");
}

#[test]
fn map_decision_ignores_common_scale_of_the_likelihood() {
    let cm = ClassModel::default_four_class();
    for label in 1..=4 {
        let mean = cm.mean(label).unwrap();
        let y: Vec<Complex64> = mean.iter().map(|v| Complex64::new(3.0 * v, 0.7)).collect();
        let d = map_classify(&y, &cm, 3, 0.1).unwrap();
        assert_eq!(d.label, label);
    }
}

#[test]
fn noise_free_accuracy_is_reproducible() {
    let cm = ClassModel::default_four_class();
    let a = noise_free_accuracy(&cm, 0.1, 3, 5_000, 77).unwrap();
    let b = noise_free_accuracy(&cm, 0.1, 3, 5_000, 77).unwrap();
    assert_eq!(a, b);
}
