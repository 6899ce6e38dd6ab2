//! Training and prediction for the population structure-learned classifier
//! and its baselines (cost-sensitive SVM, mean-difference direction, and the
//! Bayes rule for known Gaussian populations).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{class_stats, LabeledMatrix};
use crate::error::{Error, Result};
use crate::fmt as f17;
use crate::intercept::{choose_intercept, Projections, DEFAULT_R_SCALE};
use crate::qp::{solve_smo, BoxQp, DualSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::scatter::build_factor;
use crate::smw::{check_psd, lambda_cap, scale_by_labels, SmwOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Fraction of the admissible λ range; `λ = gamma · lambda_cap`.
    pub gamma: f64,
    /// Slack penalty `C₀`.
    pub c0: f64,
    /// Intercept trade-off `R`.
    pub r_scale: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            c0: 1.0,
            r_scale: DEFAULT_R_SCALE,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        validate_common(self.c0, self.r_scale, self.tol)
    }
}

fn validate_common(c0: f64, r_scale: f64, tol: f64) -> Result<()> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidInput(format!("c0 must be positive, got {c0}")));
    }
    if !(r_scale > 0.0) {
        return Err(Error::InvalidInput(format!("r_scale must be positive, got {r_scale}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Psc,
    Cssvm,
    Rmdd,
    Bayes,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Psc => "psc",
            Method::Cssvm => "cssvm",
            Method::Rmdd => "rmdd",
            Method::Bayes => "bayes",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psc" => Ok(Method::Psc),
            "cssvm" => Ok(Method::Cssvm),
            "rmdd" => Ok(Method::Rmdd),
            "bayes" => Ok(Method::Bayes),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// A trained linear rule `f(x) = wᵀx + b` with its training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub method_tag: Method,
    pub d: usize,
    #[serde(serialize_with = "f17::ser_vec_f64")]
    pub w: Vec<f64>,
    #[serde(serialize_with = "f17::ser_f64")]
    pub b: f64,
    pub n1: usize,
    pub n2: usize,
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub gamma: Option<f64>,
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub lambda: Option<f64>,
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub c0: Option<f64>,
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub r_scale: Option<f64>,
    pub converged: bool,
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub kkt_residual: Option<f64>,
    pub seed_provenance: Option<String>,
}

impl LinearModel {
    fn bare(method_tag: Method, w: DVector<f64>, b: f64, n1: usize, n2: usize) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::DegenerateDirection("non-finite direction or intercept".into()));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateDirection("direction is the zero vector".into()));
        }
        Ok(Self {
            method_tag,
            d: w.len(),
            w: w.as_slice().to_vec(),
            b,
            n1,
            n2,
            gamma: None,
            lambda: None,
            c0: None,
            r_scale: None,
            converged: true,
            kkt_residual: None,
            seed_provenance: None,
        })
    }

    /// `wᵀx + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b)
    }

    /// `sign(wᵀx + b)`, with points on the hyperplane assigned `+1`.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        self.decision(x).map(crate::metrics::predict_sign)
    }

    /// Decisions for every row of `x`.
    pub fn decisions(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.ncols(),
            });
        }
        let w = DVector::from_column_slice(&self.w);
        Ok((x * w).iter().map(|v| v + self.b).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.w.len() != model.d {
            return Err(Error::DimensionMismatch {
                expected: model.d,
                got: model.w.len(),
            });
        }
        Ok(model)
    }
}

/// A fitted dual model together with the QP that produced it.
#[derive(Debug, Clone)]
pub struct DualFit {
    pub model: LinearModel,
    pub problem: BoxQp,
    pub solution: DualSolution,
}

fn solve_dual(gram: &DMatrix<f64>, labels: &[i8], c0: f64, tol: f64, max_iter: usize) -> Result<(BoxQp, DualSolution)> {
    let problem = BoxQp::class_weighted(gram.clone(), labels.to_vec(), c0)?;
    let solution = solve_smo(&problem, tol, max_iter)?;
    if solution.alpha.iter().all(|&a| a <= 0.0) {
        return Err(Error::TrivialDual);
    }
    Ok((problem, solution))
}

/// `Xᵀ Y α`.
fn signed_combination(data: &LabeledMatrix, alpha: &[f64]) -> DVector<f64> {
    let coef = DVector::from_iterator(
        alpha.len(),
        alpha.iter().zip(data.labels()).map(|(a, &y)| a * f64::from(y)),
    );
    data.samples().transpose() * coef
}

fn projections(data: &LabeledMatrix, w: &DVector<f64>) -> Result<Projections> {
    let proj = data.samples() * w;
    Projections::from_labeled(proj.as_slice(), data.labels())
}

/// The γ-dependent half of PSC training: Woodbury operator and dual Gram
/// matrix for one training set. Reusable across `C₀` values.
#[derive(Debug, Clone)]
pub struct PscPrepared<'a> {
    data: &'a LabeledMatrix,
    operator: SmwOperator,
    gram: DMatrix<f64>,
    gamma: f64,
}

impl<'a> PscPrepared<'a> {
    pub fn new(data: &'a LabeledMatrix, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let stats = class_stats(data);
        let factor = build_factor(data, &stats);
        let cap = lambda_cap(&factor);
        // zero scatter: M = I for every λ
        let lambda = if cap.is_finite() { gamma * cap } else { gamma };
        let operator = SmwOperator::new(factor, lambda)?;
        let gram = operator.gram(data)?;
        Ok(Self {
            data,
            operator,
            gram,
            gamma,
        })
    }

    pub fn operator(&self) -> &SmwOperator {
        &self.operator
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn fit(&self, c0: f64, r_scale: f64, tol: f64, max_iter: usize) -> Result<DualFit> {
        validate_common(c0, r_scale, tol)?;
        let data = self.data;
        let (problem, solution) = solve_dual(&self.gram, data.labels(), c0, tol, max_iter)?;
        let w = self.operator.apply_vector(&signed_combination(data, &solution.alpha))?;
        let b = choose_intercept(&projections(data, &w)?, r_scale)?;
        let f = self.operator.factor();
        let mut model = LinearModel::bare(Method::Psc, w, b, f.n1, f.n2)?;
        model.gamma = Some(self.gamma);
        model.lambda = Some(self.operator.lambda());
        model.c0 = Some(c0);
        model.r_scale = Some(r_scale);
        model.converged = solution.converged;
        model.kkt_residual = Some(solution.kkt_residual);
        Ok(DualFit {
            model,
            problem,
            solution,
        })
    }
}

pub fn train_psc(data: &LabeledMatrix, hp: &Hyperparams) -> Result<DualFit> {
    hp.validate()?;
    PscPrepared::new(data, hp.gamma)?.fit(hp.c0, hp.r_scale, hp.tol, hp.max_iter)
}

pub fn fit_psc(data: &LabeledMatrix, hp: &Hyperparams) -> Result<LinearModel> {
    train_psc(data, hp).map(|f| f.model)
}

/// The linear-kernel Gram `Y X Xᵀ Y` for one training set, reusable across
/// `C₀` values.
#[derive(Debug, Clone)]
pub struct CssvmPrepared<'a> {
    data: &'a LabeledMatrix,
    gram: DMatrix<f64>,
}

impl<'a> CssvmPrepared<'a> {
    pub fn new(data: &'a LabeledMatrix) -> Result<Self> {
        let x = data.samples();
        let mut gram = x * x.transpose();
        scale_by_labels(&mut gram, data.labels());
        crate::scatter::symmetrize(&mut gram);
        check_psd(&gram)?;
        Ok(Self { data, gram })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// The intercept averages `yᵢ − wᵀxᵢ` over free support vectors
    /// (`0 < αᵢ < capᵢ`, relative slack `1e-8`); without any it falls back
    /// to [`choose_intercept`] with `R = r_scale`.
    pub fn fit(&self, c0: f64, r_scale: f64, tol: f64, max_iter: usize) -> Result<DualFit> {
        validate_common(c0, r_scale, tol)?;
        let data = self.data;
        let (problem, solution) = solve_dual(&self.gram, data.labels(), c0, tol, max_iter)?;
        let w = signed_combination(data, &solution.alpha);
        let proj = data.samples() * &w;
        let free: Vec<f64> = solution
            .alpha
            .iter()
            .zip(problem.upper())
            .enumerate()
            .filter(|(_, (&a, &u))| a > 1e-8 * u && a < u * (1.0 - 1e-8))
            .map(|(i, _)| f64::from(data.labels()[i]) - proj[i])
            .collect();
        let b = if free.is_empty() {
            choose_intercept(&Projections::from_labeled(proj.as_slice(), data.labels())?, r_scale)?
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };
        let stats = class_stats(data);
        let mut model = LinearModel::bare(Method::Cssvm, w, b, stats.n1, stats.n2)?;
        model.c0 = Some(c0);
        model.r_scale = Some(r_scale);
        model.converged = solution.converged;
        model.kkt_residual = Some(solution.kkt_residual);
        Ok(DualFit {
            model,
            problem,
            solution,
        })
    }
}

pub fn train_cssvm(data: &LabeledMatrix, c0: f64, tol: f64, max_iter: usize) -> Result<DualFit> {
    CssvmPrepared::new(data)?.fit(c0, DEFAULT_R_SCALE, tol, max_iter)
}

/// Cost-sensitive soft-margin SVM with the same class caps as PSC.
pub fn fit_cssvm(data: &LabeledMatrix, c0: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    train_cssvm(data, c0, tol, max_iter).map(|f| f.model)
}

/// Unit-norm mean-difference direction `(u1 − u2)/‖u1 − u2‖` with the
/// imbalance-adaptive intercept.
pub fn fit_rmdd(data: &LabeledMatrix, r_scale: f64) -> Result<LinearModel> {
    if !(r_scale > 0.0) {
        return Err(Error::InvalidInput(format!("r_scale must be positive, got {r_scale}")));
    }
    let stats = class_stats(data);
    let diff = &stats.u1 - &stats.u2;
    let norm = diff.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateDirection("class means coincide".into()));
    }
    let w = diff / norm;
    let b = choose_intercept(&projections(data, &w)?, r_scale)?;
    let mut model = LinearModel::bare(Method::Rmdd, w, b, stats.n1, stats.n2)?;
    model.r_scale = Some(r_scale);
    Ok(model)
}

/// The optimal rule for `N(mu_pos, sigma)` against `N(mu_neg, sigma)` with
/// equal priors: `w = Σ⁻¹(μ₊ − μ₋)`, `b = −½ wᵀ(μ₊ + μ₋)`.
pub fn bayes_oracle(mu_pos: &DVector<f64>, mu_neg: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<LinearModel> {
    let d = mu_pos.len();
    if mu_neg.len() != d || sigma.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mu_neg.len(),
        });
    }
    let chol = Cholesky::new(sigma.clone()).ok_or(Error::NotSpd)?;
    let w = chol.solve(&(mu_pos - mu_neg));
    // + 0.0 folds a negative zero into +0
    let b = -0.5 * w.dot(&(mu_pos + mu_neg)) + 0.0;
    LinearModel::bare(Method::Bayes, w, b, 0, 0)
}
