//! Property-based invariants over the public API.

use proptest::prelude::*;
use strata_core::data::{mislabel, split, SplitSpec};
use strata_core::influence::{influence_matrix_at, moments};
use strata_core::model::{train, TrainConfig};
use strata_core::synthetic::{
    builtin_distributions, generate, parse_word, FeatureEncoding, Letter, MixtureSpec, WORD_LEN,
};
use strata_core::theory::entropy;

fn word_strategy() -> impl Strategy<Value = [Letter; WORD_LEN]> {
    prop::array::uniform10(0usize..4).prop_map(|idx| idx.map(|i| Letter::from_index(i).unwrap()))
}

fn small_mixture(n1: usize, n2: usize, seed: u64, encoding: FeatureEncoding) -> strata_core::Dataset {
    let dists = builtin_distributions();
    let mut spec = MixtureSpec::new(vec![(dists[0].clone(), n1), (dists[1].clone(), n2)], seed);
    spec.encoding = encoding;
    generate(&spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_round_trips(word in word_strategy(), one_hot in any::<bool>()) {
        let enc = if one_hot { FeatureEncoding::OneHot } else { FeatureEncoding::Integer };
        let features = enc.encode(&word);
        prop_assert_eq!(features.len(), enc.dim());
        let decoded = enc.decode(&features).unwrap();
        prop_assert_eq!(decoded, word);
    }

    #[test]
    fn word_chars_round_trip(word in word_strategy()) {
        let s: String = word.iter().map(|l| l.to_char()).collect();
        prop_assert_eq!(parse_word(&s).unwrap(), word);
    }

    #[test]
    fn entropy_bounds_and_permutation_invariance(
        weights in prop::collection::vec(0.01f64..10.0, 2..6),
        rotate in 0usize..5,
    ) {
        let total: f64 = weights.iter().sum();
        let fractions: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let e = entropy(&fractions).unwrap();
        prop_assert!(e >= -1e-12);
        prop_assert!(e <= (fractions.len() as f64).ln() + 1e-12);
        let mut rotated = fractions.clone();
        rotated.rotate_left(rotate % fractions.len());
        let e2 = entropy(&rotated).unwrap();
        prop_assert!((e - e2).abs() <= 1e-12);
    }

    #[test]
    fn split_partitions_ids(seed in any::<u64>(), frac in 0.2f64..0.8) {
        let ds = small_mixture(30, 20, seed, FeatureEncoding::Integer);
        let spec = SplitSpec { train_fraction: frac, stratified: true, seed };
        let (a, b) = split(&ds, &spec).unwrap();
        prop_assert_eq!(a.len() + b.len(), ds.len());
        let mut ids: Vec<_> = a.ids().iter().chain(b.ids()).copied().collect();
        ids.sort_unstable();
        let mut orig: Vec<_> = ds.ids().to_vec();
        orig.sort_unstable();
        prop_assert_eq!(ids, orig);
    }

    #[test]
    fn mislabel_flips_exactly_floor_rn(seed in any::<u64>(), r in 0.0f64..0.6) {
        let ds = small_mixture(25, 15, seed, FeatureEncoding::Integer);
        let (corrupted, flipped) = mislabel(&ds, r, seed).unwrap();
        prop_assert_eq!(flipped.len(), (r * ds.len() as f64).floor() as usize);
        let mut changed = 0usize;
        for i in 0..ds.len() {
            if corrupted.point(i).label != ds.point(i).label {
                changed += 1;
            }
        }
        prop_assert_eq!(changed, flipped.len());
    }
}

/// The raw moments reported by `moments` must match a direct two-pass
/// enumeration over unordered distinct pairs, and the variance must be the
/// usual E[X²] − E[X]².
#[test]
fn moments_match_direct_enumeration() {
    let ds = small_mixture(20, 10, 9, FeatureEncoding::Integer);
    let cfg = TrainConfig {
        ridge: 0.05,
        epochs: 0,
        ..TrainConfig::default()
    };
    let fit = train(&ds, &cfg).unwrap();
    let x = influence_matrix_at(&ds, &fit.params).unwrap();
    let report = moments(&x, 3).unwrap();
    let n = ds.len();
    let pairs = (n * (n - 1) / 2) as f64;
    for k in 1..=3usize {
        let direct: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| x.get(i, j).powi(k as i32))
            .sum::<f64>()
            / pairs;
        assert!(
            (report.raw_moments[k - 1] - direct).abs() <= 1e-12 * direct.abs().max(1.0),
            "moment {k} mismatch"
        );
    }
    let var = report.raw_moments[1] - report.raw_moments[0].powi(2);
    assert!((report.variance - var).abs() <= 1e-12 * var.abs().max(1.0));
}
