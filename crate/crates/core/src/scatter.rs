//! Between- and within-class scatter, the imbalance weight β, and the
//! low-rank factor `Dᵀ diag(Lτ) D = βS_B + S_W`.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ClassStats, LabeledMatrix};

/// Weight on the between-class scatter: `β = exp(-ln(m)/4) = m^(-1/4)` with
/// `m = max(n1, n2) / min(n1, n2)`. Lies in `(0, 1]`.
pub fn beta(n1: usize, n2: usize) -> f64 {
    assert!(n1 >= 1 && n2 >= 1, "both classes need at least one sample");
    let m = n1.max(n2) as f64 / n1.min(n2) as f64;
    (-m.ln() / 4.0).exp()
}

/// Factorization of `βS_B + S_W`.
///
/// Rows `0..n1` of `d_mat` are the class-`+1` samples minus their mean, rows
/// `n1..n` the class-`-1` samples minus theirs, and row `n` is `(u1 - u2)ᵀ`.
/// `l_tau` holds `1/n1`, `1/n2` and finally `β` on the matching rows.
#[derive(Debug, Clone)]
pub struct PopulationFactor {
    pub d_mat: DMatrix<f64>,
    pub l_tau: DVector<f64>,
    pub beta: f64,
    pub n1: usize,
    pub n2: usize,
    /// `order[r]` is the input row that produced factor row `r` (for `r < n`).
    pub order: Vec<usize>,
}

impl PopulationFactor {
    pub fn rank_bound(&self) -> usize {
        self.d_mat.nrows()
    }

    /// `√Lτ · D Dᵀ · √Lτ`, the `(n+1) × (n+1)` matrix sharing the nonzero
    /// spectrum of `βS_B + S_W`.
    pub fn small_spectrum_matrix(&self) -> DMatrix<f64> {
        let sqrt_l = self.l_tau.map(f64::sqrt);
        let mut k = &self.d_mat * self.d_mat.transpose();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                k[(i, j)] *= sqrt_l[i] * sqrt_l[j];
            }
        }
        symmetrize(&mut k);
        k
    }

    /// `Dᵀ diag(Lτ) D`, materialized. Only for tests and small `d`.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut scaled = self.d_mat.clone();
        for (r, &l) in self.l_tau.iter().enumerate() {
            scaled.row_mut(r).scale_mut(l);
        }
        let mut out = self.d_mat.transpose() * scaled;
        symmetrize(&mut out);
        out
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn build_factor(data: &LabeledMatrix, stats: &ClassStats) -> PopulationFactor {
    let n = data.n();
    let d = data.d();
    let labels = data.labels();
    let order: Vec<usize> = (0..n)
        .filter(|&i| labels[i] == 1)
        .chain((0..n).filter(|&i| labels[i] == -1))
        .collect();
    let mut d_mat = DMatrix::zeros(n + 1, d);
    let mut l_tau = DVector::zeros(n + 1);
    for (r, &i) in order.iter().enumerate() {
        let (mean, count) = if labels[i] == 1 {
            (&stats.u1, stats.n1)
        } else {
            (&stats.u2, stats.n2)
        };
        d_mat.set_row(r, &(data.samples().row(i) - mean.transpose()));
        // i / (i * n_j) simplified
        l_tau[r] = 1.0 / count as f64;
    }
    let b = beta(stats.n1, stats.n2);
    d_mat.set_row(n, &(&stats.u1 - &stats.u2).transpose());
    l_tau[n] = b;
    PopulationFactor {
        d_mat,
        l_tau,
        beta: b,
        n1: stats.n1,
        n2: stats.n2,
        order,
    }
}

/// `βS_B + S_W` built directly from its definition as a `d × d` matrix.
/// Exactly symmetric. Intended as a test oracle for `d ≲ 200`.
pub fn dense_scatter(data: &LabeledMatrix, stats: &ClassStats) -> DMatrix<f64> {
    let d = data.d();
    let mut out = DMatrix::zeros(d, d);
    for (i, &y) in data.labels().iter().enumerate() {
        let (mean, count) = if y == 1 {
            (&stats.u1, stats.n1)
        } else {
            (&stats.u2, stats.n2)
        };
        let dev = data.row(i) - mean;
        let w = 1.0 / count as f64;
        for a in 0..d {
            for b in a..d {
                out[(a, b)] += w * dev[a] * dev[b];
            }
        }
    }
    let diff = &stats.u1 - &stats.u2;
    let bt = beta(stats.n1, stats.n2);
    for a in 0..d {
        for b in a..d {
            out[(a, b)] += bt * diff[a] * diff[b];
            out[(b, a)] = out[(a, b)];
        }
    }
    out
}
