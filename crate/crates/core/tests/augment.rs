use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use saetbl::augment::{augment, AugmentConfig};
use saetbl::dataset::Dataset;
use saetbl::labeling::Label;

fn data(rows: usize, cols: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * z
        })
        .collect();
    let labels = (0..rows).map(|i| Label::from_class_index((i * 7) % 3)).collect();
    Dataset::new((0..cols).map(|j| format!("x{j}")).collect(), x, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn seeded_and_label_preserving(seed in any::<u64>(), rows in 5usize..400, copies in 1usize..4, ratio in 0.0f64..1.0) {
        let d = data(rows, 3, seed ^ 1);
        let cfg = AugmentConfig { noise_ratio: ratio, copies, vol_window: 50, seed };
        let a = augment(&d, &cfg).unwrap();
        let b = augment(&d, &cfg).unwrap();
        prop_assert_eq!(
            a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(a.n_rows(), rows * (copies + 1));
        prop_assert_eq!(&a.x[..d.x.len()], &d.x[..]);
        for r in 0..a.n_rows() {
            prop_assert_eq!(a.labels[r], d.labels[r % rows]);
        }
    }
}

#[test]
fn replica_noise_is_centred() {
    let d = data(100_000, 2, 9);
    let out = augment(&d, &AugmentConfig { noise_ratio: 0.5, copies: 1, vol_window: 2000, seed: 4 }).unwrap();
    let n = d.n_rows();
    for j in 0..2 {
        let diffs: Vec<f64> = (0..n).map(|r| out.row(n + r)[j] - d.row(r)[j]).collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let std = (diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 3.0 * std / (n as f64).sqrt(), "feature {j}: mean {mean}, std {std}");
    }
}
