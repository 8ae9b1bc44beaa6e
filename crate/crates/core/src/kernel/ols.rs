//! Least-squares fit `y ~ 1 + indicators + baseline` with one-sided t-tests
//! on the indicator coefficients.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ensure_finite, PValue};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fitted model. Coefficient order: intercept, indicator columns, baseline
/// (the baseline is dropped when it is constant, since the intercept absorbs it).
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit<T = f64> {
    pub coefficients: Vec<T>,
    pub std_errors: Vec<T>,
    pub residual_variance: T,
    pub df: usize,
    pub baseline_used: bool,
}

impl<T: Real> OlsFit<T> {
    pub fn fit(y: &[T], indicators: &[Vec<T>], baseline: &[T]) -> Result<Self> {
        let n = y.len();
        ensure_finite(y, "response")?;
        ensure_finite(baseline, "baseline")?;
        if baseline.len() != n || indicators.iter().any(|c| c.len() != n) {
            return Err(Error::Input("design columns differ in length from the response".into()));
        }
        let baseline_used = !is_constant(baseline);
        let mut cols: Vec<&[T]> = Vec::with_capacity(indicators.len() + 2);
        let ones = vec![T::one(); n];
        cols.push(&ones);
        cols.extend(indicators.iter().map(|c| c.as_slice()));
        if baseline_used {
            cols.push(baseline);
        }
        let p = cols.len();
        if n < p + 1 {
            return Err(Error::Input(format!(
                "{n} observations cannot support {p} parameters and a residual variance"
            )));
        }

        // X'X and X'y
        let mut xtx = vec![T::zero(); p * p];
        let mut xty = vec![T::zero(); p];
        for a in 0..p {
            for b in a..p {
                let s = dot(cols[a], cols[b]);
                xtx[a * p + b] = s;
                xtx[b * p + a] = s;
            }
            xty[a] = dot(cols[a], y);
        }
        let chol = cholesky(&xtx, p)?;
        let beta = chol_solve(&chol, p, &xty);

        let mut rss = T::zero();
        let mut tss = T::zero();
        for i in 0..n {
            let fitted = (0..p).fold(T::zero(), |acc, k| acc + beta[k] * cols[k][i]);
            let r = y[i] - fitted;
            rss = rss + r * r;
            tss = tss + y[i] * y[i];
        }
        let df = n - p;
        let scale = tss.max(T::one());
        if rss <= scale * T::epsilon() * T::lit(64.0) {
            return Err(Error::Numerical(
                "residual variance is zero (perfect fit); t statistics undefined".into(),
            ));
        }
        let sigma2 = rss / T::from_count(df);
        let inv = chol_inverse(&chol, p);
        let std_errors = (0..p).map(|k| (sigma2 * inv[k * p + k]).sqrt()).collect();
        Ok(OlsFit {
            coefficients: beta,
            std_errors,
            residual_variance: sigma2,
            df,
            baseline_used,
        })
    }

    /// One-sided p-value for indicator column `col`, small when the
    /// coefficient is negative (the group has lower responses than control).
    pub fn one_sided_pvalue(&self, col: usize) -> Result<PValue<T>> {
        let k = col + 1;
        let (b, se) = match (self.coefficients.get(k), self.std_errors.get(k)) {
            (Some(&b), Some(&se)) => (b, se),
            _ => return Err(Error::Input(format!("no indicator column {col}"))),
        };
        let t = (b / se).as_f64();
        let dist = StudentsT::new(0.0, 1.0, self.df as f64)
            .map_err(|e| Error::Numerical(format!("t distribution: {e}")))?;
        PValue::clamped(T::lit(dist.cdf(t)))
    }
}

fn is_constant<T: Real>(xs: &[T]) -> bool {
    match xs.first() {
        Some(&x0) => xs.iter().all(|&x| x == x0),
        None => true,
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower Cholesky factor (row-major). Fails on (numerically) singular input.
fn cholesky<T: Real>(a: &[T], p: usize) -> Result<Vec<T>> {
    let mut l = vec![T::zero(); p * p];
    let tol = T::lit(1e-10);
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d = d - l[j * p + k] * l[j * p + k];
        }
        if !(d > tol * a[j * p + j].abs().max(T::min_positive_value())) {
            return Err(Error::Numerical(format!(
                "design matrix is rank deficient (column {j} is a linear combination of earlier columns)"
            )));
        }
        let d = d.sqrt();
        l[j * p + j] = d;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s = s - l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / d;
        }
    }
    Ok(l)
}

fn chol_solve<T: Real>(l: &[T], p: usize, b: &[T]) -> Vec<T> {
    let mut z = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            z[i] = z[i] - l[i * p + k] * z[k];
        }
        z[i] = z[i] / l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            z[i] = z[i] - l[k * p + i] * z[k];
        }
        z[i] = z[i] / l[i * p + i];
    }
    z
}

fn chol_inverse<T: Real>(l: &[T], p: usize) -> Vec<T> {
    let mut inv = vec![T::zero(); p * p];
    for c in 0..p {
        let mut e = vec![T::zero(); p];
        e[c] = T::one();
        let col = chol_solve(l, p, &e);
        for r in 0..p {
            inv[r * p + c] = col[r];
        }
    }
    inv
}

/// One-sided p-value for indicator column `dose` in `y ~ 1 + indicators + baseline`.
pub fn ols_one_sided_pvalue<T: Real>(
    y: &[T],
    indicators: &[Vec<T>],
    baseline: &[T],
    dose: usize,
) -> Result<PValue<T>> {
    OlsFit::fit(y, indicators, baseline)?.one_sided_pvalue(dose)
}

/// P-values for every indicator column of one fit.
pub fn ols_one_sided_pvalues<T: Real>(
    y: &[T],
    indicators: &[Vec<T>],
    baseline: &[T],
) -> Result<Vec<PValue<T>>> {
    let fit = OlsFit::fit(y, indicators, baseline)?;
    (0..indicators.len()).map(|c| fit.one_sided_pvalue(c)).collect()
}
