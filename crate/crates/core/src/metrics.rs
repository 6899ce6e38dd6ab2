//! Confusion counts, per-class and total correct classification rates, mean
//! within-group error, balanced CCR, and ROC/AUC.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt;

/// Class `+1` counts first (`tp` right, `fn_` wrong), then class `-1`
/// (`tn` right, `fp` wrong).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    /// Class `+1` correct rate; NaN when no positives were evaluated.
    pub fn ccr1(&self) -> f64 {
        self.tp as f64 / self.positives() as f64
    }

    pub fn ccr2(&self) -> f64 {
        self.tn as f64 / self.negatives() as f64
    }

    pub fn total_ccr(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn from_predictions(labels: &[i8], decisions: &[f64]) -> Self {
        let mut cm = Self::default();
        for (&y, &d) in labels.iter().zip(decisions) {
            match (y == 1, predict_sign(d) == 1) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fn_ += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
            }
        }
        cm
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fn_: self.fn_ + o.fn_,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// `sign` with `sign(0) = +1`.
pub fn predict_sign(decision: f64) -> i8 {
    if decision >= 0.0 {
        1
    } else {
        -1
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Balanced correct classification rate
/// `((ccr1 + ccr2)/2) · exp(−(ccr1 − ccr2)²/2)`.
pub fn bccr(ccr1: f64, ccr2: f64) -> Result<f64> {
    check_rate("ccr1", ccr1)?;
    check_rate("ccr2", ccr2)?;
    Ok(0.5 * (ccr1 + ccr2) * (-(ccr1 - ccr2).powi(2) / 2.0).exp())
}

/// Mean within-group error `1 − (ccr1 + ccr2)/2`.
pub fn mwe(ccr1: f64, ccr2: f64) -> Result<f64> {
    check_rate("ccr1", ccr1)?;
    check_rate("ccr2", ccr2)?;
    Ok(1.0 - 0.5 * (ccr1 + ccr2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    #[serde(serialize_with = "fmt::ser_f64", deserialize_with = "fmt::de_f64_or_nan")]
    pub ccr1: f64,
    #[serde(serialize_with = "fmt::ser_f64", deserialize_with = "fmt::de_f64_or_nan")]
    pub ccr2: f64,
    #[serde(serialize_with = "fmt::ser_f64", deserialize_with = "fmt::de_f64_or_nan")]
    pub total_ccr: f64,
    #[serde(serialize_with = "fmt::ser_f64", deserialize_with = "fmt::de_f64_or_nan")]
    pub mwe: f64,
    #[serde(serialize_with = "fmt::ser_f64", deserialize_with = "fmt::de_f64_or_nan")]
    pub bccr: f64,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`; absent for single-class input.
    #[serde(serialize_with = "fmt::ser_points")]
    pub roc: Option<Vec<(f64, f64)>>,
    #[serde(serialize_with = "fmt::ser_opt_f64")]
    pub auc: Option<f64>,
}

impl EvalReport {
    /// Scalar metrics from confusion counts alone. Rates of an empty class
    /// are NaN, and so is anything built on them.
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let ccr1 = confusion.ccr1();
        let ccr2 = confusion.ccr2();
        let both = ccr1.is_finite() && ccr2.is_finite();
        Self {
            confusion,
            ccr1,
            ccr2,
            total_ccr: confusion.total_ccr(),
            mwe: if both { mwe(ccr1, ccr2).expect("rates in range") } else { f64::NAN },
            bccr: if both { bccr(ccr1, ccr2).expect("rates in range") } else { f64::NAN },
            roc: None,
            auc: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// ROC points from grouped thresholds: one point per distinct decision
/// value, visited from the largest down. `None` unless both classes occur.
pub fn roc_curve(labels: &[i8], decisions: &[f64]) -> Option<Vec<(f64, f64)>> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| decisions[b].total_cmp(&decisions[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let value = decisions[order[k]];
        while k < order.len() && decisions[order[k]] == value {
            if labels[order[k]] == 1 {
                tp += 1
            } else {
                fp += 1
            }
            k += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Some(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[1].1 + w[0].1))
        .sum()
}

/// Full report for `decisions` scored against `labels`; predictions are
/// `sign(decision)` with zero mapped to `+1`.
pub fn evaluate(labels: &[i8], decisions: &[f64]) -> Result<EvalReport> {
    if labels.len() != decisions.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: decisions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let mut report = EvalReport::from_confusion(ConfusionMatrix::from_predictions(labels, decisions));
    report.roc = roc_curve(labels, decisions);
    report.auc = report.roc.as_deref().map(auc);
    Ok(report)
}

/// Writes `fpr,tpr` rows at 17 significant digits.
pub fn write_roc_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    w.write_record(["fpr", "tpr"]).map_err(|e| Error::io(path, e))?;
    for &(a, b) in points {
        w.write_record([fmt::sig17(a), fmt::sig17(b)])
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
