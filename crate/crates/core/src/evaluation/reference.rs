//! Published classification reports, at the two decimals they were printed with.

use super::{round2, ClassificationReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub class: usize,
    /// CWE of a flawed class; `None` for the non-flawed class and for binary reports.
    pub cwe_id: Option<u32>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceAverage {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceReport {
    pub rows: &'static [ReferenceRow],
    pub accuracy: f64,
    /// Not printed for the multiclass report.
    pub micro: Option<ReferenceAverage>,
    pub macro_avg: ReferenceAverage,
    pub weighted: ReferenceAverage,
}

const fn row(class: usize, cwe: u32, precision: f64, recall: f64, f1: f64, support: u64) -> ReferenceRow {
    ReferenceRow {
        class,
        cwe_id: if cwe == 0 { None } else { Some(cwe) },
        precision,
        recall,
        f1,
        support,
    }
}

const fn avg(precision: f64, recall: f64, f1: f64) -> ReferenceAverage {
    ReferenceAverage { precision, recall, f1 }
}

pub const BINARY_REPORT: ReferenceReport = ReferenceReport {
    rows: &[row(0, 0, 0.96, 0.85, 0.91, 5004), row(1, 0, 0.77, 0.94, 0.84, 2594)],
    accuracy: 0.88,
    micro: Some(avg(0.88, 0.88, 0.88)),
    macro_avg: avg(0.87, 0.90, 0.88),
    weighted: avg(0.90, 0.88, 0.88),
};

pub const MULTICLASS_REPORT: ReferenceReport = ReferenceReport {
    rows: &[
        row(0, 0, 0.98, 0.78, 0.87, 5004),
        row(1, 197, 0.55, 0.58, 0.56, 62),
        row(2, 401, 0.71, 0.88, 0.78, 33),
        row(3, 121, 0.58, 0.83, 0.68, 237),
        row(4, 122, 0.55, 0.83, 0.66, 333),
        row(5, 194, 0.64, 0.90, 0.75, 88),
        row(6, 23, 0.35, 0.41, 0.38, 127),
        row(7, 127, 0.67, 0.71, 0.69, 126),
        row(8, 195, 0.58, 0.68, 0.62, 103),
        row(9, 415, 0.76, 0.94, 0.84, 17),
        row(10, 190, 0.67, 0.67, 0.67, 187),
        row(11, 762, 0.72, 0.96, 0.82, 93),
        row(12, 126, 0.49, 0.80, 0.61, 89),
        row(13, 680, 0.40, 0.75, 0.52, 61),
        row(14, 36, 0.37, 0.44, 0.40, 110),
        row(15, 78, 0.66, 0.89, 0.76, 130),
        row(16, 191, 0.59, 0.71, 0.64, 162),
        row(17, 400, 0.24, 0.75, 0.36, 72),
        row(18, 369, 0.59, 0.64, 0.61, 77),
        row(19, 457, 0.53, 0.97, 0.68, 79),
        row(20, 690, 0.36, 1.00, 0.53, 13),
        row(21, 134, 0.48, 0.79, 0.60, 94),
        row(22, 124, 0.48, 0.71, 0.57, 119),
        row(23, 590, 0.80, 0.92, 0.86, 182),
    ],
    accuracy: 0.77,
    micro: None,
    macro_avg: avg(0.57, 0.77, 0.64),
    weighted: avg(0.84, 0.77, 0.79),
};

impl ReferenceReport {
    pub fn supports(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.support).collect()
    }

    /// CWE ids of classes 1..K in class order, usable as a class map.
    pub fn class_cwes(&self) -> Vec<u32> {
        self.rows.iter().filter_map(|r| r.cwe_id).collect()
    }

    /// Every cell of `report` that differs from this table after rounding to two decimals,
    /// as `(cell, computed, published)`.
    pub fn mismatches(&self, report: &ClassificationReport) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        let mut check = |cell: String, computed: f64, published: f64| {
            if round2(computed) != published {
                out.push((cell, computed, published));
            }
        };
        if report.classes.len() != self.rows.len() {
            return vec![("classes".into(), report.classes.len() as f64, self.rows.len() as f64)];
        }
        for (c, r) in report.classes.iter().zip(self.rows) {
            check(format!("precision[{}]", r.class), c.precision, r.precision);
            check(format!("recall[{}]", r.class), c.recall, r.recall);
            check(format!("f1[{}]", r.class), c.f1, r.f1);
            check(format!("support[{}]", r.class), c.support as f64, r.support as f64);
        }
        check("accuracy".into(), report.accuracy, self.accuracy);
        let mut averages = vec![("macro", &report.macro_avg, self.macro_avg), ("weighted", &report.weighted, self.weighted)];
        if let Some(micro) = self.micro {
            averages.push(("micro", &report.micro, micro));
        }
        for (name, a, r) in averages {
            check(format!("{name} precision"), a.precision, r.precision);
            check(format!("{name} recall"), a.recall, r.recall);
            check(format!("{name} f1"), a.f1, r.f1);
        }
        out
    }
}
