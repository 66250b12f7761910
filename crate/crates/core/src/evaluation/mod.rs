//! Confusion matrices, per-class precision/recall/F1 and the usual
//! micro/macro/weighted aggregates.

pub mod reference;

use std::fmt::Write as _;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::artifact::{write_jsonl, ArtifactHeader};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "irvuln.report";
pub const REPORT_VERSION: u32 = 1;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("confusion matrix must be square, got {k} rows of unequal width")));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.num_classes()).map(|c| self.counts[c][c]).sum()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} true labels, {} predictions", y_true.len(), y_pred.len())));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, classes: num_classes });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Row-normalized matrix; rows without samples stay zero.
pub fn normalize(cm: &ConfusionMatrix) -> Array2<f64> {
    let k = cm.num_classes();
    let mut out = Array2::zeros((k, k));
    for (i, row) in cm.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total > 0 {
            for (j, &c) in row.iter().enumerate() {
                out[[i, j]] = c as f64 / total as f64;
            }
        }
    }
    out
}

/// Majority-class rate.
pub fn baseline_accuracy(supports: &[u64]) -> Result<f64> {
    let total: u64 = supports.iter().sum();
    let max = supports.iter().copied().max().ok_or_else(|| Error::InvalidArgument("no supports given".into()))?;
    if total == 0 {
        return Err(Error::InvalidArgument("supports sum to zero".into()));
    }
    Ok(max as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when precision or recall had a zero denominator and was defined as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub micro: Average,
    pub macro_avg: Average,
    pub weighted: Average,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `class_names` may be shorter than K; missing names fall back to the index.
pub fn report(cm: &ConfusionMatrix, class_names: &[String]) -> Result<ClassificationReport> {
    let k = cm.num_classes();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("a report needs at least 2 classes, got {k}")));
    }
    let total = cm.total();
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
            ClassMetrics {
                name: class_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                precision: p,
                recall: r,
                f1: f1(p, r),
                support: cm.support(c),
                zero_division: precision.is_none() || recall.is_none(),
            }
        })
        .collect();

    let accuracy = ratio(cm.correct(), total).unwrap_or(0.0);
    // Pooled over classes every false positive is someone's false negative.
    let micro = Average { precision: accuracy, recall: accuracy, f1: accuracy, support: total };
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k as f64;
    let macro_avg = Average {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        support: total,
    };
    let wmean = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            classes.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };
    let weighted = Average {
        precision: wmean(|m| m.precision),
        recall: wmean(|m| m.recall),
        f1: wmean(|m| m.f1),
        support: total,
    };
    Ok(ClassificationReport { classes, accuracy, micro, macro_avg, weighted, confusion: cm.clone() })
}

impl ClassificationReport {
    /// Aligned text table at two decimals.
    pub fn render(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.name.len())
            .chain(["weighted avg".len()])
            .max()
            .unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "{:>width$}  {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support");
        let _ = writeln!(s);
        for c in &self.classes {
            let flag = if c.zero_division { "  (zero division)" } else { "" };
            let _ = writeln!(
                s,
                "{:>width$}  {:>9.2} {:>9.2} {:>9.2} {:>9}{flag}",
                c.name, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(s);
        let total = self.micro.support;
        let _ = writeln!(s, "{:>width$}  {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", self.accuracy, total);
        for (name, a) in [("micro avg", &self.micro), ("macro avg", &self.macro_avg), ("weighted avg", &self.weighted)] {
            let _ = writeln!(
                s,
                "{:>width$}  {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, a.support
            );
        }
        s
    }

    /// Header line and the full-precision report as one JSON record.
    pub fn write_json(&self, out: &mut impl Write, config_hash: &str) -> Result<()> {
        write_jsonl(out, &ArtifactHeader::new(REPORT_SCHEMA, REPORT_VERSION, config_hash), std::slice::from_ref(self))
    }

    /// Normalized confusion matrix as CSV: a header of class names, then one row per true class.
    pub fn write_normalized_grid(&self, out: &mut impl Write) -> Result<()> {
        let names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        writeln!(out, "true\\pred,{}", names.join(","))?;
        for (name, row) in names.iter().zip(normalize(&self.confusion).rows()) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{name},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Rounds like the printed tables.
pub fn round2(x: f64) -> f64 {
    format!("{x:.2}").parse().expect("formatted float parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| i.to_string()).collect()
    }

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.total(), 3);
        assert_eq!(normalize(&cm), ndarray::arr2(&[[0.5, 0.5], [0.0, 1.0]]));
    }

    #[test]
    fn out_of_range_label() {
        assert!(matches!(
            confusion(&[0, 3], &[0, 1], 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(confusion(&[0, 1], &[0, 2], 2).is_err());
        assert!(confusion(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn zero_row_stays_zero() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0, 1], vec![0, 0, 0], vec![0, 1, 1]]).unwrap();
        let n = normalize(&cm);
        assert_eq!(n.row(1).sum(), 0.0);
        assert!((n.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let cm = confusion(&y, &y, 3).unwrap();
        let r = report(&cm, &names(3)).unwrap();
        for c in &r.classes {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_avg.f1, 1.0);
        assert_eq!(r.weighted.precision, 1.0);
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let cm = confusion(&[0, 1, 2], &[0, 0, 0], 3).unwrap();
        let r = report(&cm, &names(3)).unwrap();
        assert_eq!(r.classes[1].precision, 0.0);
        assert_eq!(r.classes[1].f1, 0.0);
        assert!(r.classes[1].zero_division);
        assert!(!r.classes[0].zero_division);
        assert!(r.render().contains("(zero division)"));
    }

    #[test]
    fn binary_counts_from_recalls_and_supports() {
        let cm = ConfusionMatrix::from_counts(vec![vec![4253, 751], vec![156, 2438]]).unwrap();
        let r = report(&cm, &names(2)).unwrap();
        assert!((r.accuracy - 0.8806).abs() < 5e-5);
        assert_eq!(r.classes.iter().map(|c| round2(c.precision)).collect::<Vec<_>>(), [0.96, 0.76]);
        assert_eq!(r.classes.iter().map(|c| round2(c.recall)).collect::<Vec<_>>(), [0.85, 0.94]);
        assert_eq!(r.classes.iter().map(|c| round2(c.f1)).collect::<Vec<_>>(), [0.90, 0.84]);
        assert_eq!(r.classes[0].support, 5004);
    }

    #[test]
    fn baseline() {
        assert_eq!(round4(baseline_accuracy(&[5004, 2594]).unwrap()), 0.6586);
        assert_eq!(baseline_accuracy(&[7, 7, 7, 7]).unwrap(), 0.25);
        assert_eq!(baseline_accuracy(&[12]).unwrap(), 1.0);
        assert!(baseline_accuracy(&[]).is_err());
    }

    fn round4(x: f64) -> f64 {
        (x * 1e4).round() / 1e4
    }

    #[test]
    fn render_layout() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![0, 4]]).unwrap();
        let text = report(&cm, &["0".into(), "1".into()]).unwrap().render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "              precision    recall  f1-score   support");
        assert_eq!(lines[2], "           0       1.00      0.75      0.86         4");
        assert_eq!(lines[5], "    accuracy                           0.88         8");
        assert_eq!(lines[8], "weighted avg       0.90      0.88      0.87         8");
    }

    #[test]
    fn grid_and_json_output() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 3], vec![0, 0]]).unwrap();
        let r = report(&cm, &["good".into(), "bad".into()]).unwrap();
        let mut grid = Vec::new();
        r.write_normalized_grid(&mut grid).unwrap();
        assert_eq!(String::from_utf8(grid).unwrap(), "true\\pred,good,bad\ngood,0.25,0.75\nbad,0.0,0.0\n");
        let mut json = Vec::new();
        r.write_json(&mut json, "h").unwrap();
        let text = String::from_utf8(json).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().contains(REPORT_SCHEMA));
        let back: ClassificationReport = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    fn labels_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 1..200)))
    }

    proptest! {
        #[test]
        fn aggregate_identities((k, pairs) in labels_strategy()) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let cm = confusion(&t, &p, k).unwrap();
            prop_assert_eq!(cm.total(), t.len() as u64);
            let r = report(&cm, &[]).unwrap();
            let acc = t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            prop_assert!((r.accuracy - acc).abs() < 1e-12);
            // Pooled counts, computed independently of the shortcut in `report`.
            let tp: u64 = (0..k).map(|c| cm.counts[c][c]).sum();
            let fp: u64 = (0..k).map(|c| cm.predicted(c) - cm.counts[c][c]).sum();
            let fn_: u64 = (0..k).map(|c| cm.support(c) - cm.counts[c][c]).sum();
            let micro_p = tp as f64 / (tp + fp) as f64;
            let micro_r = tp as f64 / (tp + fn_) as f64;
            prop_assert!((micro_p - r.accuracy).abs() < 1e-12);
            prop_assert!((micro_r - r.accuracy).abs() < 1e-12);
            prop_assert!((r.micro.f1 - r.accuracy).abs() < 1e-12);
            prop_assert!((r.weighted.recall - r.accuracy).abs() < 1e-12);
            for c in &r.classes {
                for v in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if c.precision + c.recall == 0.0 {
                    prop_assert_eq!(c.f1, 0.0);
                }
            }
            for row in normalize(&cm).rows() {
                let s = row.sum();
                prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
            }
        }
    }
}
