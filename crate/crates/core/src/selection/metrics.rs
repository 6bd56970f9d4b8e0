use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(actual: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: actual.len(),
                got: predicted.len(),
            });
        }
        let mut counts = vec![0; classes * classes];
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= classes || p >= classes {
                return Err(Error::precondition(format!("label outside 0..{classes}")));
            }
            counts[a * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn from_counts(classes: usize, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::DimensionMismatch {
                expected: classes * classes,
                got: counts.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn get(&self, actual: usize, predicted: usize) -> usize {
        self.counts[actual * self.classes + predicted]
    }

    /// Overall accuracy and macro-averaged precision, recall and F1. A class
    /// with no predictions (or no members) scores 0 for precision (recall)
    /// and still counts in the average.
    pub fn metrics(&self) -> FoldMetrics {
        let c = self.classes;
        let total: usize = self.counts.iter().sum();
        let correct: usize = (0..c).map(|k| self.get(k, k)).sum();
        let (mut prec, mut rec, mut f1) = (0.0, 0.0, 0.0);
        for k in 0..c {
            let tp = self.get(k, k) as f64;
            let predicted: usize = (0..c).map(|a| self.get(a, k)).sum();
            let actual: usize = (0..c).map(|p| self.get(k, p)).sum();
            let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
            prec += p;
            rec += r;
            f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        let n = c as f64;
        FoldMetrics {
            oa: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            macro_precision: prec / n,
            macro_recall: rec / n,
            macro_f1: f1 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub oa: f64,
    #[serde(rename = "prec")]
    pub macro_precision: f64,
    #[serde(rename = "rec")]
    pub macro_recall: f64,
    #[serde(rename = "f1")]
    pub macro_f1: f64,
}

impl FoldMetrics {
    fn values(&self) -> [f64; 4] {
        [self.oa, self.macro_precision, self.macro_recall, self.macro_f1]
    }

    fn from_values(v: [f64; 4]) -> Self {
        Self {
            oa: v[0],
            macro_precision: v[1],
            macro_recall: v[2],
            macro_f1: v[3],
        }
    }
}

/// Fold metrics and their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    #[serde(rename = "prec")]
    pub macro_precision: f64,
    #[serde(rename = "rec")]
    pub macro_recall: f64,
    #[serde(rename = "f1")]
    pub macro_f1: f64,
    pub per_fold: Vec<FoldMetrics>,
}

impl MetricsReport {
    pub fn from_folds(per_fold: Vec<FoldMetrics>) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(Error::precondition("no folds to aggregate"));
        }
        let n = per_fold.len() as f64;
        let mut sum = [0.0; 4];
        for f in &per_fold {
            sum.iter_mut().zip(f.values()).for_each(|(s, v)| *s += v);
        }
        let mean = FoldMetrics::from_values(sum.map(|s| s / n));
        Ok(Self {
            oa: mean.oa,
            macro_precision: mean.macro_precision,
            macro_recall: mean.macro_recall,
            macro_f1: mean.macro_f1,
            per_fold,
        })
    }

    pub fn mean(&self) -> FoldMetrics {
        FoldMetrics::from_values([self.oa, self.macro_precision, self.macro_recall, self.macro_f1])
    }

    /// Population standard deviation across folds.
    pub fn std(&self) -> FoldMetrics {
        let n = self.per_fold.len() as f64;
        let mean = self.mean().values();
        let mut acc = [0.0; 4];
        for f in &self.per_fold {
            for ((a, v), m) in acc.iter_mut().zip(f.values()).zip(mean) {
                *a += (v - m) * (v - m);
            }
        }
        FoldMetrics::from_values(acc.map(|a| (a / n).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_built_confusion() {
        let cm = ConfusionMatrix::from_counts(2, vec![2, 1, 0, 3]).unwrap();
        let m = cm.metrics();
        assert_abs_diff_eq!(m.oa, 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macro_precision, (1.0 + 0.75) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macro_recall, (2.0 / 3.0 + 1.0) / 2.0, epsilon = 1e-12);
        let f0 = 2.0 * 1.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0);
        let f1 = 2.0 * 0.75 * 1.0 / 1.75;
        assert_abs_diff_eq!(m.macro_f1, (f0 + f1) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn from_labels_matches_counts() {
        let actual = [0, 0, 0, 1, 1, 1];
        let predicted = [0, 0, 1, 1, 1, 1];
        let cm = ConfusionMatrix::new(&actual, &predicted, 2).unwrap();
        assert_eq!(cm, ConfusionMatrix::from_counts(2, vec![2, 1, 0, 3]).unwrap());
    }

    #[test]
    fn perfect_classification_is_one() {
        let y = [0, 1, 2, 2, 1, 0];
        let m = ConfusionMatrix::new(&y, &y, 3).unwrap().metrics();
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.oa, 1.0);
    }

    #[test]
    fn any_error_lowers_f1() {
        for off in 0..6 {
            let mut counts = vec![4, 0, 0, 0, 4, 0, 0, 0, 4];
            let (a, p) = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)][off];
            counts[a * 3 + p] = 1;
            let m = ConfusionMatrix::from_counts(3, counts).unwrap().metrics();
            assert!(m.macro_f1 < 1.0);
        }
    }

    #[test]
    fn absent_class_scores_zero_but_counts() {
        // class 2 never occurs nor is predicted
        let m = ConfusionMatrix::new(&[0, 1], &[0, 1], 3).unwrap().metrics();
        assert_abs_diff_eq!(m.macro_f1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_is_fold_mean() {
        let folds: Vec<FoldMetrics> = (0..10)
            .map(|i| FoldMetrics::from_values([0.5 + i as f64 * 0.01, 0.6, 0.7, 0.9 - i as f64 * 0.02]))
            .collect();
        let r = MetricsReport::from_folds(folds.clone()).unwrap();
        let mean_f1 = folds.iter().map(|f| f.macro_f1).sum::<f64>() / 10.0;
        assert_abs_diff_eq!(r.macro_f1, mean_f1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.std().macro_precision, 0.0, epsilon = 1e-12);
        assert!(r.std().oa > 0.0);
    }
}
