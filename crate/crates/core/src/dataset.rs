//! Labelled sample matrices, class statistics, stratified fold plans, and the
//! two Gaussian simulators.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::rng::SeededRng;

/// `n × d` samples with `±1` labels. Always holds at least one sample of each
/// class and only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    samples: DMatrix<f64>,
    labels: Vec<i8>,
    feature_names: Option<Vec<String>>,
}

impl LabeledMatrix {
    pub fn new(samples: DMatrix<f64>, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != samples.nrows() {
            return Err(Error::DimensionMismatch {
                expected: samples.nrows(),
                got: labels.len(),
            });
        }
        if labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, got {}",
                labels.len()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::InvalidInput("need at least one feature".into()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::InvalidInput(format!("label {bad} is not +1 or -1")));
        }
        if let Some((idx, _)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = samples.nrows();
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                idx % n,
                idx / n
            )));
        }
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        if n_pos == 0 || n_pos == labels.len() {
            return Err(Error::SingleClass(labels.len(), labels[0]));
        }
        Ok(Self {
            samples,
            labels,
            feature_names: None,
        })
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<i8>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: r.len(),
            });
        }
        let samples = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(samples, labels)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Skips validation. Used by instrumentation tests that need to plant
    /// non-finite rows where no training code may look.
    #[doc(hidden)]
    pub fn from_parts_unchecked(samples: DMatrix<f64>, labels: Vec<i8>) -> Self {
        Self {
            samples,
            labels,
            feature_names: None,
        }
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn d(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }

    /// Rows at `indices`, in that order. Re-validates, so a subset that lost
    /// a class is rejected.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let samples = self.samples.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut out = Self::new(samples, labels)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Returns the same matrix with the samples transformed column-wise.
    pub fn map_samples(&self, f: impl FnOnce(&DMatrix<f64>) -> DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(f(&self.samples), self.labels.clone())?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }
}

/// Per-class means and counts. Class 1 is label `+1`, class 2 is label `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub n1: usize,
    pub n2: usize,
    /// Imbalance factor `max(n1, n2) / min(n1, n2)`.
    pub m: f64,
}

pub fn class_stats(data: &LabeledMatrix) -> ClassStats {
    let d = data.d();
    let mut u1 = DVector::zeros(d);
    let mut u2 = DVector::zeros(d);
    let (mut n1, mut n2) = (0usize, 0usize);
    for (i, &y) in data.labels().iter().enumerate() {
        let row = data.samples().row(i);
        if y == 1 {
            u1 += row.transpose();
            n1 += 1;
        } else {
            u2 += row.transpose();
            n2 += 1;
        }
    }
    u1 /= n1 as f64;
    u2 /= n2 as f64;
    ClassStats {
        u1,
        u2,
        n1,
        n2,
        m: n1.max(n2) as f64 / n1.min(n2) as f64,
    }
}

/// Stratified assignment of samples to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Shuffles the `+1` indices, then the `-1` indices, with one [`SeededRng`]
/// and deals them round-robin. The negative class continues the deal where
/// the positive class stopped so total fold sizes also stay within one.
pub fn stratified_kfold(labels: &[i8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need k >= 2 folds, got {k}")));
    }
    let mut rng = SeededRng::new(seed);
    let mut assignments = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [1i8, -1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::FoldInfeasible {
                label: class,
                count: members.len(),
                k,
            });
        }
        rng.shuffle(&mut members);
        for i in members {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Draws `n_pos` rows from `N(mu_pos, sigma)` then `n_neg` rows from
/// `N(mu_neg, sigma)`. Each row is `mu + L z` with `L` the lower Cholesky
/// factor of `sigma` and `z` standard normals from [`SeededRng`].
pub fn simulate_gaussian(
    mu_pos: &DVector<f64>,
    mu_neg: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<LabeledMatrix> {
    let d = mu_pos.len();
    if mu_neg.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mu_neg.len(),
        });
    }
    let chol = Cholesky::new(sigma.clone()).ok_or(Error::NotSpd)?;
    let factor = chol.l();
    sample_rows(d, n_pos, n_neg, seed, |z, class| {
        let mu = if class == 1 { mu_pos } else { mu_neg };
        &factor * z + mu
    })
}

fn sample_rows(
    d: usize,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
    transform: impl Fn(&DVector<f64>, i8) -> DVector<f64>,
) -> Result<LabeledMatrix> {
    if d == 0 || n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(format!(
            "simulation needs d, n_pos, n_neg >= 1 (got {d}, {n_pos}, {n_neg})"
        )));
    }
    let n = n_pos + n_neg;
    let mut rng = SeededRng::new(seed);
    let mut samples = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        let class = if i < n_pos { 1 } else { -1 };
        z.iter_mut().for_each(|v| *v = rng.standard_normal());
        samples.set_row(i, &transform(&z, class).transpose());
        labels.push(class);
    }
    LabeledMatrix::new(samples, labels)?.with_feature_names(feature_names(d))
}

/// Scale `c` of the simulated mean `c·1_d`, fixed by `2c‖1_d‖ = 2.7`.
pub fn hdlss_scale(d: usize) -> f64 {
    1.35 / (d as f64).sqrt()
}

/// Classes `N(±c·1_d, I_d)` with `c = 1.35/√d`.
pub fn simulate_hdlss(d: usize, n_pos: usize, n_neg: usize, seed: u64) -> Result<LabeledMatrix> {
    let c = hdlss_scale(d);
    sample_rows(d, n_pos, n_neg, seed, |z, class| {
        z.map(|v| v + f64::from(class) * c)
    })
}

pub fn fig1_mean() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 2.5])
}

pub fn fig1_covariance() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.5])
}

/// Two-dimensional classes `N(±μ, Σ)` with `μ = (1, 2.5)` and
/// `Σ = [[1.5, 0.5], [0.5, 1.5]]`.
pub fn simulate_fig1(n_pos: usize, n_neg: usize, seed: u64) -> Result<LabeledMatrix> {
    let mu = fig1_mean();
    simulate_gaussian(&mu, &(-&mu), &fig1_covariance(), n_pos, n_neg, seed)
}

/// Raw table read from a CSV: numeric features plus the untouched label
/// strings, if a label column was requested and found.
#[derive(Debug, Clone)]
pub struct Table {
    pub feature_names: Vec<String>,
    pub samples: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

/// Reads a header-first CSV. With `label_column = Some(name)` the column must
/// exist and is kept as strings; every other column must parse as a finite
/// real.
pub fn read_table(path: &Path, label_column: Option<&str>) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::io(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::io(path, format!("no column named `{name}`")))?,
        ),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&j| Some(j) != label_idx).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::io(path, e))?;
        // header is line 1
        let line = r + 2;
        if record.len() != headers.len() {
            return Err(Error::io(
                path,
                format!("line {line}: {} fields, header has {}", record.len(), headers.len()),
            ));
        }
        for &j in &feature_idx {
            let cell = &record[j];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::BadCell {
                        path: path.to_owned(),
                        row: line,
                        column: headers[j].clone(),
                        cell: cell.to_owned(),
                    })
                }
            }
        }
        if let Some(li) = label_idx {
            labels.push(record[li].to_owned());
        }
        n += 1;
    }
    let d = feature_idx.len();
    Ok(Table {
        feature_names: feature_idx.iter().map(|&j| headers[j].clone()).collect(),
        samples: DMatrix::from_row_slice(n, d, &values),
        labels: label_idx.map(|_| labels),
    })
}

/// Loads a dataset and binarizes its label column one-vs-rest: labels in
/// `positive_labels` become `+1`, everything else `-1`.
pub fn load_csv(path: &Path, label_column: &str, positive_labels: &HashSet<String>) -> Result<LabeledMatrix> {
    let table = read_table(path, Some(label_column))?;
    let labels: Vec<i8> = table
        .labels
        .expect("label column requested")
        .iter()
        .map(|s| if positive_labels.contains(s) { 1 } else { -1 })
        .collect();
    LabeledMatrix::new(table.samples, labels)
        .map_err(|e| match e {
            Error::SingleClass(..) | Error::InvalidInput(_) => Error::io(path, e),
            other => other,
        })?
        .with_feature_names(table.feature_names)
}

/// Writes `label,<features...>` with labels `1` / `-1` and 17 significant
/// digits per value.
pub fn write_csv(data: &LabeledMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    let names = data
        .feature_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| feature_names(data.d()));
    let mut header = vec!["label".to_owned()];
    header.extend(names);
    writer.write_record(&header).map_err(|e| Error::io(path, e))?;
    for i in 0..data.n() {
        let mut record = vec![data.labels()[i].to_string()];
        record.extend(data.samples().row(i).iter().map(|&v| sig17(v)));
        writer.write_record(&record).map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Per-feature z-scoring fitted on one matrix and applied to others. Off by
/// default everywhere; constant features keep unit scale.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: DVector<f64>,
    scale: DVector<f64>,
}

impl Standardizer {
    pub fn fit(data: &LabeledMatrix) -> Self {
        let x = data.samples();
        let n = x.nrows() as f64;
        let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let scale = DVector::from_iterator(
            x.ncols(),
            x.column_iter().zip(mean.iter()).map(|(c, &mu)| {
                let sd = (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            }),
        );
        Self { mean, scale }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j])
    }
}
