//! Intercept selection along a fixed direction `w`.
//!
//! When the projected classes leave a gap, the gap is split unevenly according
//! to the class sizes. Otherwise the intercept minimizes the number of
//! misclassified (or on-boundary) training projections.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub const DEFAULT_R_SCALE: f64 = 2.0;

/// Training projections `wᵀx` split by class. The counts drive the gap
/// ratio and the minority tie-break; they default to the vector lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Projections {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>) -> Result<Self> {
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::InvalidInput("both classes need at least one projection".into()));
        }
        if pos.iter().chain(&neg).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("projections must be finite".into()));
        }
        let (n_pos, n_neg) = (pos.len(), neg.len());
        Ok(Self { pos, neg, n_pos, n_neg })
    }

    pub fn with_counts(mut self, n_pos: usize, n_neg: usize) -> Result<Self> {
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::InvalidInput("class counts must be positive".into()));
        }
        self.n_pos = n_pos;
        self.n_neg = n_neg;
        Ok(self)
    }

    /// Splits `values` by `labels`.
    pub fn from_labeled(values: &[f64], labels: &[i8]) -> Result<Self> {
        let pos = values.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(&v, _)| v).collect();
        let neg = values.iter().zip(labels).filter(|(_, &y)| y != 1).map(|(&v, _)| v).collect();
        Self::new(pos, neg)
    }

    fn min_pos(&self) -> f64 {
        self.pos.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max_neg(&self) -> f64 {
        self.neg.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn is_separable(p: &Projections) -> bool {
    p.min_pos() > p.max_neg()
}

/// The pieces of the separable-case split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSplit {
    /// `min(pos) − max(neg)`.
    pub gap: f64,
    /// Distance from the hyperplane to the nearest positive projection.
    pub b_pos: f64,
    /// Distance from the hyperplane to the nearest negative projection.
    pub b_neg: f64,
    pub ratio: f64,
    pub intercept: f64,
}

pub fn gap_split(p: &Projections, r_scale: f64) -> Result<GapSplit> {
    if !(r_scale > 0.0) {
        return Err(Error::InvalidInput(format!("R must be positive, got {r_scale}")));
    }
    if !is_separable(p) {
        return Err(Error::InvalidInput("projections are not separable".into()));
    }
    let min_pos = p.min_pos();
    let gap = min_pos - p.max_neg();
    let (n_pos, n_neg) = (p.n_pos as f64, p.n_neg as f64);
    // ratio = b₋/b₊; substituting b₋ = ratio·b₊ into b₊ + b₋ = gap gives
    // the same split in both branches, so the smaller class always gets the
    // wider buffer.
    let ratio = if n_neg >= n_pos {
        (-(n_neg / n_pos).ln() / (2.0 * r_scale)).exp()
    } else {
        ((n_pos / n_neg).ln() / (2.0 * r_scale)).exp()
    };
    let b_pos = gap / (1.0 + ratio);
    Ok(GapSplit {
        gap,
        b_pos,
        b_neg: gap - b_pos,
        ratio,
        intercept: b_pos - min_pos,
    })
}

pub fn gap_intercept(p: &Projections, r_scale: f64) -> Result<f64> {
    gap_split(p, r_scale).map(|s| s.intercept)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    errors: usize,
    width: f64,
    minority_recall: f64,
    intercept: f64,
}

impl Candidate {
    /// Fewer errors, then wider gap, then better minority recall, then
    /// smaller `|b|`.
    fn better_than(&self, other: &Candidate) -> bool {
        let order = self
            .errors
            .cmp(&other.errors)
            .then(other.width.total_cmp(&self.width))
            .then(other.minority_recall.total_cmp(&self.minority_recall))
            .then(self.intercept.abs().total_cmp(&other.intercept.abs()));
        order == Ordering::Less
    }
}

/// Minimizes `J(b) = Σ sgn(−yᵢ(pᵢ + b))` with `sgn(0) = +1`, so points on
/// the boundary count against `b`. Candidates are the midpoints between
/// consecutive distinct projections plus one threshold beyond each end; the
/// end candidates count as infinitely wide. The outer offset is half the
/// projection spread, or half of `max(|v|, 1)` when all values coincide.
pub fn min_misclass_intercept(p: &Projections) -> f64 {
    let mut points: Vec<(f64, i8)> = p
        .pos
        .iter()
        .map(|&v| (v, 1))
        .chain(p.neg.iter().map(|&v| (v, -1)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut distinct: Vec<(f64, usize, usize)> = Vec::new();
    for &(v, y) in &points {
        match distinct.last_mut() {
            Some(last) if last.0 == v => {
                if y == 1 {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => distinct.push((v, usize::from(y == 1), usize::from(y != 1))),
        }
    }
    let lo = distinct[0].0;
    let hi = distinct[distinct.len() - 1].0;
    let offset = if hi > lo { 0.5 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };

    let total_pos = p.pos.len();
    let total_neg = p.neg.len();
    let minority = match p.n_pos.cmp(&p.n_neg) {
        Ordering::Less => Some(1i8),
        Ordering::Greater => Some(-1),
        Ordering::Equal => None,
    };

    // Sweep thresholds upward; below the threshold predicts -1.
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut best: Option<Candidate> = None;
    for k in 0..=distinct.len() {
        let (threshold, width) = if k == 0 {
            (lo - offset, f64::INFINITY)
        } else if k == distinct.len() {
            (hi + offset, f64::INFINITY)
        } else {
            let (a, b) = (distinct[k - 1].0, distinct[k].0);
            (0.5 * (a + b), b - a)
        };
        if k > 0 {
            pos_below += distinct[k - 1].1;
            neg_below += distinct[k - 1].2;
        }
        let errors = pos_below + (total_neg - neg_below);
        let minority_recall = match minority {
            Some(1) => (total_pos - pos_below) as f64 / total_pos as f64,
            Some(_) => neg_below as f64 / total_neg as f64,
            None => 0.0,
        };
        let cand = Candidate {
            errors,
            width,
            minority_recall,
            intercept: -threshold,
        };
        if best.is_none_or(|b| cand.better_than(&b)) {
            best = Some(cand);
        }
    }
    best.expect("at least two candidates").intercept
}

/// Gap split when the classes separate along `w`, minimum misclassification
/// otherwise.
pub fn choose_intercept(p: &Projections, r_scale: f64) -> Result<f64> {
    if is_separable(p) {
        gap_intercept(p, r_scale)
    } else {
        Ok(min_misclass_intercept(p))
    }
}

/// `J(b)` evaluated literally. Exposed for oracle checks.
pub fn misclassification_score(p: &Projections, b: f64) -> i64 {
    let sgn = |x: f64| if x >= 0.0 { 1i64 } else { -1 };
    p.pos.iter().map(|&v| sgn(-(v + b))).sum::<i64>() + p.neg.iter().map(|&v| sgn(v + b)).sum::<i64>()
}
