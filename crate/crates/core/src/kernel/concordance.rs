//! Concordance (probabilistic index) and its modified Hanley-McNeil variance.

use serde::{Deserialize, Serialize};

use super::{ensure_finite, rank_sum_test, RankSumMethod};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest variance returned by [`concordance_variance`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `P(treat < control) + ½·P(treat = control)` estimated from two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concordance<T = f64> {
    value: T,
    n_treat: usize,
    n_control: usize,
}

impl<T: Real> Concordance<T> {
    pub fn new(value: T, n_treat: usize, n_control: usize) -> Result<Self> {
        if !(value >= T::zero() && value <= T::one()) {
            return Err(Error::Domain(format!("concordance must lie in [0, 1], got {value}")));
        }
        if n_treat == 0 || n_control == 0 {
            return Err(Error::Domain("concordance needs at least one subject per arm".into()));
        }
        Ok(Concordance {
            value,
            n_treat,
            n_control,
        })
    }

    #[inline]
    pub fn value(&self) -> T {
        self.value
    }

    #[inline]
    pub fn n_treat(&self) -> usize {
        self.n_treat
    }

    #[inline]
    pub fn n_control(&self) -> usize {
        self.n_control
    }

    /// Subjects in the comparison (both arms).
    #[inline]
    pub fn n_total(&self) -> usize {
        self.n_treat + self.n_control
    }

    /// Variance of the estimate evaluated at a hypothesised concordance `theta`.
    pub fn variance_at(&self, theta: T) -> T {
        concordance_variance(theta, self.n_treat, self.n_control)
    }
}

/// Concordance of `treat` against `control`, with midrank handling of ties.
pub fn concordance<T: Real>(treat: &[T], control: &[T]) -> Result<Concordance<T>> {
    if treat.is_empty() || control.is_empty() {
        return Err(Error::Input("concordance requires two nonempty samples".into()));
    }
    ensure_finite(treat, "treatment sample")?;
    ensure_finite(control, "control sample")?;
    rank_sum_test(treat, control, RankSumMethod::Asymptotic).map(|t| t.concordance)
}

/// Newcombe's Method 5 variance: Hanley-McNeil with both arm sizes in the
/// pair-covariance terms replaced by their average `n* = (m + n) / 2`.
///
/// ```text
/// Var = θ(1−θ)/(m·n) · [1 + (n* − 1)·((1−θ)/(2−θ) + θ/(1+θ))]
/// ```
///
/// Never returns less than [`VARIANCE_FLOOR`].
pub fn concordance_variance<T: Real>(theta: T, n_treat: usize, n_control: usize) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let m = T::from_count(n_treat.max(1));
    let n = T::from_count(n_control.max(1));
    let n_star = (m + n) / two;
    let q1 = theta / (two - theta);
    let q2 = two * theta * theta / (one + theta);
    let t2 = theta * theta;
    let v = (theta * (one - theta) + (n_star - one) * (q1 - t2) + (n_star - one) * (q2 - t2))
        / (m * n);
    v.max(T::lit(VARIANCE_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(concordance(&[1.0, 2.0], &[3.0, 4.0]).unwrap().value(), 1.0);
        assert_eq!(concordance(&[0.0, 0.0], &[0.0, 1.0]).unwrap().value(), 0.75);
        let x = [2.0, 2.0, 5.0, 0.0];
        assert_eq!(concordance(&x, &x).unwrap().value(), 0.5);
    }

    #[test]
    fn variance_examples() {
        assert!((concordance_variance(0.5, 10, 10) - 0.0175_f64).abs() < 1e-15);
        assert_eq!(concordance_variance(1.0_f64, 7, 9), VARIANCE_FLOOR);
        assert_eq!(concordance_variance(0.0_f64, 7, 9), VARIANCE_FLOOR);
        let mut last = f64::INFINITY;
        for n in [10, 20, 50, 100, 1000, 100_000] {
            let v = concordance_variance(0.5, n, n);
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn variance_matches_closed_form_rewrite() {
        for &(t, m, n) in &[(0.3, 12, 30), (0.77, 40, 27), (0.5, 5, 5), (0.95, 100, 3)] {
            let ns = (m + n) as f64 / 2.0;
            let alt = t * (1.0 - t) / (m * n) as f64
                * (1.0 + (ns - 1.0) * ((1.0 - t) / (2.0 - t) + t / (1.0 + t)));
            assert!((concordance_variance(t, m, n) - alt).abs() < 1e-16);
        }
    }

    #[test]
    fn invalid_construction() {
        assert!(Concordance::new(1.2, 1, 1).is_err());
        assert!(Concordance::new(0.5, 0, 1).is_err());
        assert!(concordance::<f64>(&[], &[1.0]).is_err());
    }
}
