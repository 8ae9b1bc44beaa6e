//! Concordance estimates across both stages with one-sided lower confidence
//! bounds, and the large-sample reference value used to measure bias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{build_log_params, CohortSampler};
use crate::error::{Error, Result};
use crate::kernel::{concordance, norm_cdf, norm_sf, norm_upper_quantile, Concordance};
use crate::model::{DoseId, Endpoint, Outcome, ScenarioSpec};
use crate::scalar::Real;

/// Default one-sided confidence level of the lower bounds.
pub const CONFIDENCE: f64 = 0.975;

const ROOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Unconditional,
    Conditional,
    InverseNormal,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::Unconditional,
        EstimatorKind::Conditional,
        EstimatorKind::InverseNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Unconditional => "unconditional",
            EstimatorKind::Conditional => "conditional",
            EstimatorKind::InverseNormal => "inverse_normal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceEstimate<T = f64> {
    pub dose: DoseId,
    pub method: EstimatorKind,
    pub point: T,
    pub ci_lower: T,
    /// Whether stage 1 and stage 2 contributed.
    pub stages_used: [bool; 2],
}

/// Bisection for an increasing `f` on `[lo, hi]`; returns `x` with `f(x) ≈ 0`.
fn bisect<T: Real>(mut f: impl FnMut(T) -> T, mut lo: T, mut hi: T) -> Result<T> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo > T::zero() || fhi < T::zero() {
        return Err(Error::Estimation(format!(
            "no sign change on [{lo}, {hi}] (f = {flo}, {fhi}); variance is degenerate"
        )));
    }
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    let tol = T::lit(ROOT_TOL).max(T::epsilon() * T::lit(4.0));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}

/// Lower bound of a weighted mean of stage estimates: the `δ ≤ θ̂` solving
/// `(θ̂ − δ) / sqrt(Σ ω_s² V_s(δ)) = z`.
fn weighted_lower_bound<T: Real>(theta: T, parts: &[(T, Concordance<T>)], z: T) -> Result<T> {
    let g = |delta: T| {
        let var = parts
            .iter()
            .fold(T::zero(), |acc, &(w, c)| acc + w * w * c.variance_at(delta));
        z * var.sqrt() - (theta - delta)
    };
    if g(T::zero()) >= T::zero() {
        return Ok(T::zero());
    }
    bisect(g, T::zero(), theta)
}

/// Weighted mean of the available stages, weights proportional to the
/// number of subjects in each stage's comparison. A single stage is used as is.
pub fn estimate_unconditional<T: Real>(
    dose: DoseId,
    c1: Option<Concordance<T>>,
    c2: Option<Concordance<T>>,
    confidence: T,
) -> Result<ConcordanceEstimate<T>> {
    let stages: Vec<Concordance<T>> = [c1, c2].into_iter().flatten().collect();
    if stages.is_empty() {
        return Err(Error::Input(format!("no stage data for the {dose} dose")));
    }
    let total = stages
        .iter()
        .fold(T::zero(), |acc, c| acc + T::from_count(c.n_total()));
    let parts: Vec<(T, Concordance<T>)> = stages
        .iter()
        .map(|&c| (T::from_count(c.n_total()) / total, c))
        .collect();
    let point = parts.iter().fold(T::zero(), |acc, &(w, c)| acc + w * c.value());
    let z = norm_upper_quantile(T::one() - confidence)?;
    let ci_lower = weighted_lower_bound(point, &parts, z)?;
    Ok(ConcordanceEstimate {
        dose,
        method: EstimatorKind::Unconditional,
        point,
        ci_lower,
        stages_used: [c1.is_some(), c2.is_some()],
    })
}

/// As [`estimate_unconditional`], but only for doses continued to stage 2.
pub fn estimate_conditional<T: Real>(
    dose: DoseId,
    c1: Option<Concordance<T>>,
    c2: Option<Concordance<T>>,
    selected: bool,
    confidence: T,
) -> Result<Option<ConcordanceEstimate<T>>> {
    if !selected {
        return Ok(None);
    }
    let mut est = estimate_unconditional(dose, c1, c2, confidence)?;
    est.method = EstimatorKind::Conditional;
    Ok(Some(est))
}

/// `P(δ) = 1 − Φ(Σ w_s (θ̂_s − δ)/σ_s(δ))` over the given stages.
pub fn inverse_normal_pvalue<T: Real>(delta: T, stages: &[(T, Concordance<T>)]) -> T {
    let z = stages.iter().fold(T::zero(), |acc, &(w, c)| {
        acc + w * (c.value() - delta) / c.variance_at(delta).sqrt()
    });
    norm_sf(z)
}

/// Median-unbiased estimate (`P(δ) = ½`) and lower bound (`Φ` of the combined
/// statistic equal to `confidence`). A dose that only has stage-2 data
/// uses that stage alone with weight 1.
pub fn estimate_inverse_normal<T: Real>(
    dose: DoseId,
    c1: Option<Concordance<T>>,
    c2: Concordance<T>,
    w1: T,
    w2: T,
    confidence: T,
) -> Result<ConcordanceEstimate<T>> {
    let stages: Vec<(T, Concordance<T>)> = match c1 {
        Some(c1) => vec![(w1, c1), (w2, c2)],
        None => vec![(T::one(), c2)],
    };
    let p = |d: T| inverse_normal_pvalue(d, &stages);
    let half = T::lit(0.5);
    let point = bisect(|d| p(d) - half, T::zero(), T::one())?;
    let target = T::one() - confidence;
    let ci_lower = if p(T::zero()) >= target {
        T::zero()
    } else {
        bisect(|d| p(d) - target, T::zero(), point)?
    };
    Ok(ConcordanceEstimate {
        dose,
        method: EstimatorKind::InverseNormal,
        point,
        ci_lower,
        stages_used: [c1.is_some(), true],
    })
}

/// Closed-form concordance of the follow-up level of `dose` against placebo:
/// both zero counts one half, a zero in the dose arm alone counts one, and
/// two positive values compare lognormals with a common SD.
pub fn analytic_true_concordance(scn: &ScenarioSpec, dose: DoseId, t: Endpoint) -> Result<f64> {
    let p = build_log_params::<f64>(scn)?;
    let (pj, p0) = (scn.pi[dose.index()], scn.pi[0]);
    let diff = p.mu[0][t.index()] - p.mu[dose.index()][t.index()];
    let both_positive = if p.sigma > 0.0 {
        norm_cdf(diff / (p.sigma * std::f64::consts::SQRT_2))
    } else if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        0.0
    } else {
        0.5
    };
    Ok(pj * p0 * 0.5 + pj * (1.0 - p0) + (1.0 - pj) * (1.0 - p0) * both_positive)
}

/// Monte Carlo reference concordance from a single-stage four-arm trial with
/// `N = 200 · n_scale` (one quarter per arm).
pub fn oracle_true_concordance(
    scn: &ScenarioSpec,
    dose: DoseId,
    t: Endpoint,
    kind: Outcome,
    n_scale: usize,
    seed: u64,
) -> Result<f64> {
    if n_scale == 0 {
        return Err(Error::Input("oracle scale factor must be at least 1".into()));
    }
    if !dose.is_active() {
        return Err(Error::Input("oracle concordance needs an active dose".into()));
    }
    let per_arm = 50 * n_scale;
    let sampler = CohortSampler::new(scn)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = [0usize; 4];
    n[0] = per_arm;
    n[dose.index()] = per_arm;
    let mut recs = Vec::with_capacity(2 * per_arm);
    sampler.sample_into(&n, 1, 1, &mut rng, &mut recs);
    let mut c = Vec::with_capacity(per_arm);
    let mut x = Vec::with_capacity(per_arm);
    for r in &recs {
        if r.dose == DoseId::Placebo {
            c.push(r.outcome(t, kind));
        } else {
            x.push(r.outcome(t, kind));
        }
    }
    Ok(concordance(&x, &c)?.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_scenarios, Disease, Variant};

    fn c(v: f64, m: usize, n: usize) -> Concordance {
        Concordance::new(v, m, n).unwrap()
    }

    #[test]
    fn unconditional_weighting() {
        let e = estimate_unconditional(DoseId::Low, Some(c(0.6, 40, 40)), Some(c(0.6, 27, 27)), CONFIDENCE).unwrap();
        assert!((e.point - 0.6).abs() < 1e-15);
        let e = estimate_unconditional(DoseId::Low, Some(c(0.5, 40, 40)), Some(c(0.8, 20, 20)), CONFIDENCE).unwrap();
        assert!((e.point - 0.6).abs() < 1e-15);
        let e = estimate_unconditional(DoseId::High, None, Some(c(0.73, 26, 27)), CONFIDENCE).unwrap();
        assert_eq!(e.point, 0.73);
        assert_eq!(e.stages_used, [false, true]);
        assert!(e.ci_lower < e.point);
        assert!(estimate_unconditional::<f64>(DoseId::Low, None, None, CONFIDENCE).is_err());
    }

    #[test]
    fn conditional_skips_dropped_doses() {
        let a = Some(c(0.55, 40, 40));
        let b = Some(c(0.7, 27, 27));
        assert!(estimate_conditional(DoseId::Low, a, None, false, CONFIDENCE).unwrap().is_none());
        let cond = estimate_conditional(DoseId::Medium, a, b, true, CONFIDENCE).unwrap().unwrap();
        let unc = estimate_unconditional(DoseId::Medium, a, b, CONFIDENCE).unwrap();
        assert_eq!((cond.point, cond.ci_lower), (unc.point, unc.ci_lower));
    }

    #[test]
    fn single_stage_bound_solves_score_equation() {
        // high dose observed in stage 2 only, 40 vs 40 at theta = 0.87
        let e = estimate_inverse_normal(DoseId::High, None, c(0.87, 40, 40), 0.0, 0.0, CONFIDENCE).unwrap();
        assert!((e.point - 0.87).abs() < 1e-8);
        let z = (0.87 - e.ci_lower) / crate::kernel::concordance_variance(e.ci_lower, 40, 40).sqrt();
        assert!((z - 1.959_963_984_540_054).abs() < 1e-6, "{z}");
    }

    #[test]
    fn inverse_normal_equal_stages() {
        let w1 = 0.6f64.sqrt();
        let w2 = 0.4f64.sqrt();
        let e = estimate_inverse_normal(DoseId::Medium, Some(c(0.66, 40, 40)), c(0.66, 40, 40), w1, w2, CONFIDENCE)
            .unwrap();
        assert!((e.point - 0.66).abs() < 1e-8);
        let stages = [(w1, c(0.61, 40, 40)), (w2, c(0.74, 27, 27))];
        let e = estimate_inverse_normal(DoseId::Medium, Some(stages[0].1), stages[1].1, w1, w2, CONFIDENCE).unwrap();
        assert!((inverse_normal_pvalue(e.point, &stages) - 0.5).abs() < 1e-8);
        assert!((inverse_normal_pvalue(e.ci_lower, &stages) - 0.025).abs() < 1e-8);
        let e90 = estimate_inverse_normal(DoseId::Medium, Some(stages[0].1), stages[1].1, w1, w2, 0.9).unwrap();
        assert!(e.ci_lower <= e90.ci_lower && e90.ci_lower <= e.point);
    }

    #[test]
    fn degenerate_stage_is_pinned_by_the_other() {
        let e = estimate_inverse_normal(DoseId::Low, Some(c(1.0, 40, 40)), c(0.7, 27, 27), 0.77, 0.63, CONFIDENCE)
            .unwrap();
        assert!(e.point > 0.7 && e.point <= 1.0);
        assert!(e.ci_lower <= e.point);
    }

    #[test]
    fn analytic_truth() {
        let s = builtin_scenarios(Disease::Mansonellosis, Variant::Standard);
        let v = analytic_true_concordance(&s[0], DoseId::High, Endpoint::Month12).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let v = analytic_true_concordance(&s[2], DoseId::Medium, Endpoint::Month12).unwrap();
        assert!((v - 0.647_819_99).abs() < 1e-7, "{v}");
        let v = analytic_true_concordance(&s[1], DoseId::High, Endpoint::Month12).unwrap();
        assert!((v - 0.776_044_76).abs() < 1e-7, "{v}");
    }

    #[test]
    fn monte_carlo_oracle_is_close_to_closed_form() {
        let s = &builtin_scenarios(Disease::Onchocerciasis, Variant::Standard)[4];
        let mc = oracle_true_concordance(s, DoseId::Low, Endpoint::Month12, Outcome::Level, 100, 1).unwrap();
        let exact = analytic_true_concordance(s, DoseId::Low, Endpoint::Month12).unwrap();
        // 5000 per arm: SE below 0.006
        assert!((mc - exact).abs() < 0.02, "{mc} vs {exact}");
    }
}
