use ndarray::Array2;
use proptest::prelude::*;

use pnnkit::data::{split_indices, SplitSpec};
use pnnkit::metrics::{accuracy, auroc_ovr_macro, binary_auc, confusion_matrix, macro_f1};

/// Pairwise definition: P(score_pos > score_neg) + 0.5 P(tie).
fn brute_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in positive.iter().enumerate() {
        for (j, &q) in positive.iter().enumerate() {
            if p && !q {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

#[test]
fn auroc_hand_case() {
    let auc = binary_auc(&[0.9f64, 0.8, 0.3, 0.2], &[true, false, true, false]).unwrap();
    assert!((auc - 0.75).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_matches_pair_counting(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..60),
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 7.0).collect();
        let positive: Vec<bool> = data.iter().map(|(_, p)| *p).collect();
        let got = binary_auc(&scores, &positive);
        let want = brute_auc(&scores, &positive);
        prop_assert_eq!(got.is_some(), want.is_some());
        if let (Some(g), Some(w)) = (got, want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_ignores_monotone_rescaling(
        data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
        let positive: Vec<bool> = data.iter().map(|(_, p)| *p).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(binary_auc(&scores, &positive), binary_auc(&warped, &positive));
    }

    #[test]
    fn accuracy_matches_indicator_sum(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80)) {
        let (pred, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let wrong = pred.iter().zip(&labels).filter(|(p, y)| p != y).count();
        let acc = accuracy(&pred, &labels).unwrap();
        prop_assert!((acc - (1.0 - wrong as f64 / labels.len() as f64)).abs() < 1e-12);
        let cm = confusion_matrix(&pred, &labels, 5).unwrap();
        let diagonal: usize = (0..5).map(|c| cm[c][c]).sum();
        prop_assert_eq!(diagonal, labels.len() - wrong);
        let f1 = macro_f1(&pred, &labels, 5).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
    }

    #[test]
    fn macro_auroc_is_bounded(seed in any::<u64>(), rows in 4usize..40) {
        let labels: Vec<usize> = (0..rows).map(|i| i % 3).collect();
        let scores = Array2::from_shape_fn((rows, 3), |(i, j)| {
            ((i as u64 * 31 + j as u64 * 7) ^ seed) as f64 % 13.0
        });
        let auc = auroc_ovr_macro(scores.view(), &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn splits_partition_every_class(
        counts in prop::collection::vec(1usize..30, 2..6),
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let (train, test) = split_indices(&labels, counts.len(), &SplitSpec::new(fraction, seed)).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let in_train = train.iter().filter(|&&i| labels[i] == c).count();
            let want = ((fraction * n as f64 + 0.5).floor() as usize).clamp(1, n);
            prop_assert_eq!(in_train, want);
        }
        let again = split_indices(&labels, counts.len(), &SplitSpec::new(fraction, seed)).unwrap();
        prop_assert_eq!(again, (train, test));
    }
}
