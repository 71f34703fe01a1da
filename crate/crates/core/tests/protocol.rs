use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rumorsage::train_eval::{split_dataset, MetricsReport};

#[test]
fn split_partitions_items_exactly() {
    let items: Vec<u32> = (0..100).collect();
    for seed in 0..5 {
        let s = split_dataset(&items, [0.7, 0.2, 0.1], seed).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 20, 10));
        let all: BTreeSet<u32> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        assert_eq!(all, items.iter().copied().collect());
        let again = split_dataset(&items, [0.7, 0.2, 0.1], seed).unwrap();
        assert_eq!((s.train, s.val, s.test), (again.train, again.val, again.test));
    }
}

#[test]
fn too_few_items_is_an_error() {
    let items: Vec<u32> = (0..9).collect();
    assert!(split_dataset(&items, [0.7, 0.2, 0.1], 0).is_err());
}

#[test]
fn confusion_and_support_match_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let classes = rng.random_range(2..=5);
        let n = rng.random_range(1..40);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let r = MetricsReport::from_predictions(&y, &p, classes);
        assert_eq!(r.total, n);
        for t in 0..classes {
            for q in 0..classes {
                let count = y.iter().zip(&p).filter(|&(&a, &b)| a == t && b == q).count();
                assert_eq!(r.confusion[t][q], count);
            }
            assert_eq!(r.per_class[t].support, y.iter().filter(|&&a| a == t).count());
            let tp = r.confusion[t][t] as f64;
            let predicted: usize = (0..classes).map(|k| r.confusion[k][t]).sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            assert!((r.per_class[t].precision - precision).abs() < 1e-12);
        }
        assert_eq!(r.accuracy, r.micro_f1);
    }
}
