//! Confusion-matrix metrics for single-label multiclass predictions.

use serde::{Deserialize, Serialize};

use crate::classes::CLASS_NAMES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

pub fn class_name(c: usize) -> String {
    CLASS_NAMES.get(c).map_or_else(|| format!("class {c}"), |s| s.to_string())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Builds the report from parallel label and prediction slices.
    /// Every class index must be below `classes`.
    pub fn from_predictions(labels: &[usize], predictions: &[usize], classes: usize) -> Self {
        assert_eq!(labels.len(), predictions.len(), "one prediction per label");
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            confusion[y][p] += 1;
        }
        let total = labels.len();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class: Vec<ClassMetrics> = (0..classes)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    class: class_name(c),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        // pooled over classes: TP = correct, FP = FN = total − correct
        let wrong = total - correct;
        let micro_f1 = ratio(2 * correct, 2 * correct + 2 * wrong);
        let macro_f1 = if classes == 0 {
            0.0
        } else {
            per_class.iter().map(|m| m.f1).sum::<f64>() / classes as f64
        };
        Self {
            accuracy: ratio(correct, total),
            micro_f1,
            macro_f1,
            per_class,
            confusion,
            total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 3, 4, 0];
        let r = MetricsReport::from_predictions(&y, &y, 5);
        assert_eq!((r.accuracy, r.micro_f1, r.macro_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn small_worked_case() {
        let r = MetricsReport::from_predictions(&[0, 0, 1], &[0, 1, 1], 5);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.accuracy, r.micro_f1);
        assert!((r.macro_f1 - 4.0 / 15.0).abs() < 1e-15);
        assert_eq!(r.per_class[2].f1, 0.0);
        assert_eq!(r.confusion[0], vec![1, 1, 0, 0, 0]);
        assert_eq!(r.per_class[0].support, 2);
    }

    #[test]
    fn empty_input_is_all_zero() {
        let r = MetricsReport::from_predictions(&[], &[], 5);
        assert_eq!((r.accuracy, r.micro_f1, r.macro_f1), (0.0, 0.0, 0.0));
    }
}
