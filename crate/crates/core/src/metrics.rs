//! Confusion matrix and the accuracy / precision / recall / F1 family.

use crate::error::{Error, Result};

/// `counts[true][pred]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::LengthMismatch(row.len(), k));
        }
        let total = counts.iter().flatten().sum();
        Ok(ConfusionMatrix { counts, total })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        let k = self.classes();
        for c in [truth, pred] {
            if c >= k {
                return Err(Error::ClassOutOfRange { class: c, classes: k });
            }
        }
        self.counts[truth][pred] += 1;
        self.total += 1;
        Ok(())
    }

    fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&p, &l) in preds.iter().zip(labels) {
        m.add(l, p)?;
    }
    Ok(m)
}

pub fn accuracy(m: &ConfusionMatrix) -> Result<f64> {
    if m.total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(m.trace() as f64 / m.total as f64)
}

/// One-vs-rest precision and recall of class `c`; 0 for empty denominators.
pub fn precision_recall(m: &ConfusionMatrix, c: usize) -> Result<(f64, f64)> {
    let k = m.classes();
    if c >= k {
        return Err(Error::ClassOutOfRange { class: c, classes: k });
    }
    let hit = m.counts[c][c] as f64;
    let predicted: u64 = (0..k).map(|t| m.counts[t][c]).sum();
    let actual: u64 = m.counts[c].iter().sum();
    let ratio = |den: u64| if den == 0 { 0.0 } else { hit / den as f64 };
    Ok((ratio(predicted), ratio(actual)))
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Binary: F1 of class 1. Otherwise: unweighted mean of per-class F1.
pub fn aggregate_f1(m: &ConfusionMatrix) -> Result<f64> {
    if m.total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = m.classes();
    let per_class = (0..k)
        .map(|c| precision_recall(m, c).map(|(p, r)| f1(p, r)))
        .collect::<Result<Vec<_>>>()?;
    if k == 2 {
        Ok(per_class[1])
    } else {
        Ok(per_class.iter().sum::<f64>() / k as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub classes: usize,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub aggregate_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(m: ConfusionMatrix) -> Result<Self> {
        let k = m.classes();
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        for c in 0..k {
            let (p, r) = precision_recall(&m, c)?;
            precision.push(p);
            recall.push(r);
        }
        let f1s = precision.iter().zip(&recall).map(|(&p, &r)| f1(p, r)).collect();
        Ok(MetricsReport {
            classes: k,
            accuracy: accuracy(&m)?,
            aggregate_f1: aggregate_f1(&m)?,
            precision,
            recall,
            f1: f1s,
            confusion: m,
        })
    }

    pub fn evaluate(preds: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        MetricsReport::from_confusion(confusion(preds, labels, k)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionMatrix {
        // class 1 is the positive class
        ConfusionMatrix::from_counts(vec![vec![tn, fp], vec![fn_, tp]]).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(m.counts(), &[vec![1, 0], vec![0, 1]]);
        let m = confusion(&[0, 1, 1, 0], &[0, 1, 0, 0], 2).unwrap();
        assert_eq!(m.counts(), &[vec![2, 1], vec![0, 1]]);
        let m = confusion(&[], &[], 3).unwrap();
        assert_eq!(m.total(), 0);
        assert!(matches!(confusion(&[0], &[], 2), Err(Error::LengthMismatch(1, 0))));
        assert!(matches!(confusion(&[2], &[0], 2), Err(Error::ClassOutOfRange { class: 2, .. })));
    }

    #[test]
    fn accuracy_examples() {
        assert_abs_diff_eq!(accuracy(&binary(2, 3, 1, 0)).unwrap(), 5.0 / 6.0, epsilon = 1e-15);
        assert_eq!(accuracy(&binary(3, 3, 0, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&binary(0, 0, 2, 2)).unwrap(), 0.0);
        assert!(matches!(accuracy(&ConfusionMatrix::zeros(2)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn precision_recall_examples() {
        let diag = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 2]]).unwrap();
        assert_eq!(precision_recall(&diag, 0).unwrap(), (1.0, 1.0));
        let m = ConfusionMatrix::from_counts(vec![vec![2, 1], vec![0, 1]]).unwrap();
        assert_eq!(precision_recall(&m, 1).unwrap(), (0.5, 1.0));
        let absent = ConfusionMatrix::from_counts(vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 0]]).unwrap();
        assert_eq!(precision_recall(&absent, 2).unwrap(), (0.0, 0.0));
        assert!(precision_recall(&m, 2).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert_abs_diff_eq!(f1(0.5, 1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_f1(&binary(4, 4, 0, 0)).unwrap(), 1.0);
        let m = ConfusionMatrix::from_counts(vec![vec![2, 1], vec![0, 1]]).unwrap();
        assert_abs_diff_eq!(aggregate_f1(&m).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        // per-class F1 = (1, 0, 0.5)
        let exact = ConfusionMatrix::from_counts(vec![vec![1, 0, 0], vec![0, 0, 1], vec![0, 1, 1]]).unwrap();
        assert_abs_diff_eq!(aggregate_f1(&exact).unwrap(), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn relabeling_permutes_per_class_metrics(k in 2usize..6,
                                                 pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..40),
                                                 shift in 1usize..5) {
            let preds: Vec<usize> = pairs.iter().map(|p| p.0 % k).collect();
            let labels: Vec<usize> = pairs.iter().map(|p| p.1 % k).collect();
            let perm = |c: usize| (c + shift) % k;
            let a = MetricsReport::evaluate(&preds, &labels, k).unwrap();
            let b = MetricsReport::evaluate(
                &preds.iter().map(|&c| perm(c)).collect::<Vec<_>>(),
                &labels.iter().map(|&c| perm(c)).collect::<Vec<_>>(),
                k,
            ).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            for c in 0..k {
                prop_assert_eq!(a.precision[c], b.precision[perm(c)]);
                prop_assert_eq!(a.recall[c], b.recall[perm(c)]);
            }
            if k > 2 {
                prop_assert!((a.aggregate_f1 - b.aggregate_f1).abs() < 1e-12);
            }
        }

        #[test]
        fn f1_lies_between_precision_and_recall(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            let v = f1(p, r);
            prop_assert!((0.0..=1.0).contains(&v));
            if p > 0.0 && r > 0.0 {
                prop_assert!(v <= p.max(r) + 1e-15 && v >= p.min(r) - 1e-15);
            }
        }
    }
}
