//! Numerical primitives shared by every analysis path.

mod concordance;
mod normal;
mod ols;
mod rank;

pub use concordance::{concordance, concordance_variance, Concordance, VARIANCE_FLOOR};
pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf, norm_tails, norm_upper_quantile};
pub use ols::{ols_one_sided_pvalue, ols_one_sided_pvalues, OlsFit};
pub use rank::{
    midranks, rank_sum_exact_pvalue, rank_sum_pvalue, rank_sum_pvalue_with, rank_sum_test,
    RankSumMethod, RankSumTest, EXACT_MAX_POOLED,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A probability in `[0, 1]` produced by a one-sided test.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PValue<T = f64>(T);

impl<T: Real> PValue<T> {
    pub fn new(value: T) -> Result<Self> {
        if value >= T::zero() && value <= T::one() {
            Ok(PValue(value))
        } else {
            Err(Error::Domain(format!("p-value must lie in [0, 1], got {value}")))
        }
    }

    /// Clamps rounding noise into `[0, 1]`; NaN is rejected.
    pub fn clamped(value: T) -> Result<Self> {
        if value.is_nan() {
            return Err(Error::Numerical("p-value is NaN".into()));
        }
        Ok(PValue(value.max(T::zero()).min(T::one())))
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }
}

pub(crate) fn ensure_finite<T: Real>(xs: &[T], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} contains non-finite values")))
    }
}
