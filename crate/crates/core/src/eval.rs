//! Confusion matrices and Acc/Pre/Rec/F1, with `bad` as the positive class.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, pred: Label, truth: Label) {
        match (pred, truth) {
            (Label::Bad, Label::Bad) => self.tp += 1,
            (Label::Bad, Label::Good) => self.fp += 1,
            (Label::Good, Label::Bad) => self.fn_ += 1,
            (Label::Good, Label::Good) => self.tn += 1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{preds} predictions for {truth} ground-truth labels")]
pub struct LengthMismatch {
    pub preds: usize,
    pub truth: usize,
}

pub fn confusion(preds: &[Label], truth: &[Label]) -> Result<Confusion, LengthMismatch> {
    if preds.len() != truth.len() {
        return Err(LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    let mut c = Confusion::default();
    for (p, t) in preds.iter().zip(truth) {
        c.add(*p, *t);
    }
    Ok(c)
}

/// Ratios in [0, 1]. `zero_division` is set when any denominator was zero
/// and the affected metric was reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub zero_division: bool,
}

fn div(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_score(pre: f64, rec: f64) -> f64 {
    if pre + rec == 0.0 {
        0.0
    } else {
        2.0 * pre * rec / (pre + rec)
    }
}

pub fn metrics(c: &Confusion) -> Metrics {
    let mut zero_division = false;
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let acc = div(tp + tn, c.total() as f64, &mut zero_division);
    let pre = div(tp, tp + fp, &mut zero_division);
    let rec = div(tp, tp + fn_, &mut zero_division);
    let f1 = f1_score(pre, rec);
    Metrics {
        acc,
        pre,
        rec,
        f1,
        zero_division,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub confusion: Confusion,
    pub metrics: Metrics,
}

impl Report {
    pub fn new(confusion: Confusion) -> Self {
        Report {
            metrics: metrics(&confusion),
            confusion,
        }
    }
}

/// Percentages with two decimals in Acc, Rec, Pre, F1 column order.
impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        let c = &self.confusion;
        writeln!(f, "{:>7} {:>7} {:>7} {:>7}", "Acc", "Rec", "Pre", "F1")?;
        writeln!(
            f,
            "{:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            m.acc * 100.0,
            m.rec * 100.0,
            m.pre * 100.0,
            m.f1 * 100.0
        )?;
        write!(f, "TP={} FP={} FN={} TN={}", c.tp, c.fp, c.fn_, c.tn)?;
        if m.zero_division {
            write!(f, " (zero division: undefined ratios reported as 0)")?;
        }
        writeln!(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Bad, Good};

    #[test]
    fn counts() {
        let c = confusion(&[Bad, Bad, Good], &[Bad, Good, Good]).unwrap();
        assert_eq!(
            c,
            Confusion {
                tp: 1,
                fp: 1,
                fn_: 0,
                tn: 1
            }
        );
        assert_eq!(confusion(&[], &[]).unwrap(), Confusion::default());
        assert!(confusion(&[Bad], &[]).is_err());
    }

    #[test]
    fn formulas() {
        let m = metrics(&Confusion {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 1,
        });
        assert!((m.acc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((m.pre, m.rec), (0.5, 1.0));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(!m.zero_division);

        let m = metrics(&Confusion {
            tp: 0,
            fp: 0,
            fn_: 2,
            tn: 1,
        });
        assert_eq!((m.pre, m.f1), (0.0, 0.0));
        assert!(m.zero_division);
    }

    #[test]
    fn anchor_row() {
        let f1 = f1_score(79.80, 87.96);
        assert!((f1 - 83.68).abs() < 0.01, "{f1}");
    }

    #[test]
    fn report_columns() {
        let r = Report::new(Confusion {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 1,
        })
        .to_string();
        assert!(
            r.starts_with("    Acc     Rec     Pre      F1\n  66.67  100.00   50.00   66.67\n"),
            "{r}"
        );
    }

    proptest! {
        #[test]
        fn harmonic_identity(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let m = metrics(&Confusion { tp, fp, fn_, tn });
            if m.pre + m.rec > 0.0 {
                prop_assert!((m.f1 - 2.0 * m.pre * m.rec / (m.pre + m.rec)).abs() < 1e-12);
            } else {
                prop_assert_eq!(m.f1, 0.0);
            }
            for v in [m.acc, m.pre, m.rec, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..40), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let lab = |b: bool| if b { Bad } else { Good };
            let (p, t): (Vec<_>, Vec<_>) = pairs.iter().map(|(a, b)| (lab(*a), lab(*b))).unzip();
            let mut shuffled: Vec<_> = p.iter().copied().zip(t.iter().copied()).collect();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p2, t2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            prop_assert_eq!(confusion(&p, &t).unwrap(), confusion(&p2, &t2).unwrap());
        }
    }
}
