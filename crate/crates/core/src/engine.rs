//! Inverse-normal combination test, partial conditional error rates and the
//! closed test over {H1, H2, H3} with Bonferroni intersections, where H3 can
//! only enter in stage 2.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{norm_sf, norm_upper_quantile, PValue};
use crate::model::{DesignConfig, DoseId, DoseSet, ReallocMode};
use crate::scalar::Real;

/// Smallest p-value fed to the normal quantile.
pub const P_CLAMP: f64 = 1e-15;

fn clamp_p<T: Real>(p: T) -> T {
    let lo = T::lit(P_CLAMP);
    let hi = T::one() - lo.max(T::epsilon());
    p.max(lo).min(hi)
}

/// `Φ⁻¹(1 − p)` after clamping; never fails.
fn z_of<T: Real>(p: PValue<T>) -> T {
    norm_upper_quantile(clamp_p(p.value())).expect("clamped p lies in (0, 1)")
}

/// `1 − Φ(w1·Φ⁻¹(1 − p1) + w2·Φ⁻¹(1 − p2))`.
pub fn combine_pvalue<T: Real>(p1: PValue<T>, p2: PValue<T>, w1: T, w2: T) -> PValue<T> {
    let z = w1 * z_of(p1) + w2 * z_of(p2);
    PValue::clamped(norm_sf(z)).expect("normal tail is not NaN")
}

/// Probability, given the stage-1 p-value, that the level-`gamma`
/// combination test rejects.
pub fn partial_conditional_error<T: Real>(p1: PValue<T>, gamma: T, w1: T, w2: T) -> Result<T> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {gamma}")));
    }
    let z1 = z_of(p1);
    let zg = norm_upper_quantile(gamma)?;
    if w2 <= T::zero() {
        // no second stage: the decision is already made
        return Ok(if w1 * z1 >= zg { T::one() } else { T::zero() });
    }
    Ok(norm_sf((zg - w1 * z1) / w2))
}

/// `A_j` at the Bonferroni levels `α`, `α/2`, `α/3` for the three doses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalErrorTable<T = f64> {
    pub alpha: T,
    /// `a[j − 1][m − 1]` is `A_j` at level `α/m`.
    pub a: [[T; 3]; 3],
}

impl<T: Real> ConditionalErrorTable<T> {
    /// From the stage-1 primary-endpoint p-values of the low and medium dose.
    pub fn new(p1_low: PValue<T>, p1_med: PValue<T>, alpha: T, w1: T, w2: T) -> Result<Self> {
        let mut a = [[T::zero(); 3]; 3];
        for m in 1..=3 {
            let gamma = alpha / T::from_count(m);
            a[0][m - 1] = partial_conditional_error(p1_low, gamma, w1, w2)?;
            a[1][m - 1] = partial_conditional_error(p1_med, gamma, w1, w2)?;
            a[2][m - 1] = gamma;
        }
        Ok(ConditionalErrorTable { alpha, a })
    }

    /// `A_dose` at level `α / m`.
    #[inline]
    pub fn get(&self, dose: DoseId, m: usize) -> T {
        self.a[dose.index() - 1][m - 1]
    }
}

/// Outcome of one intersection hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionStatus {
    Rejected,
    AcceptedAtInterim,
    AcceptedFinal,
}

/// Second-stage test of one intersection `H_J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionDecision<T = f64> {
    pub j: DoseSet,
    pub status: IntersectionStatus,
    /// Sum of the per-dose thresholds.
    pub budget: T,
    /// Quantity compared against 1 for the automatic rejection.
    pub auto_sum: T,
    /// Rejection threshold for `p_j^(2)`, indexed by dose.
    pub thresholds: [Option<T>; 4],
}

impl<T: Real> IntersectionDecision<T> {
    pub fn is_rejected(&self) -> bool {
        self.status == IntersectionStatus::Rejected
    }
}

fn allowed_k(k: DoseSet) -> bool {
    use DoseId::*;
    k == DoseSet::of(&[Low, Medium]) || k == DoseSet::of(&[Medium, High]) || k == DoseSet::of(&[High])
}

/// Thresholds for `H_J` given the stage-2 selection `K`.
pub fn intersection_thresholds<T: Real>(
    j: DoseSet,
    k: DoseSet,
    table: &ConditionalErrorTable<T>,
    mode: ReallocMode,
) -> Result<IntersectionDecision<T>> {
    let s = j.intersection(k);
    if j.is_empty() || s.is_empty() {
        return Err(Error::Contract(format!("H_J with J = {j} has no dose in K = {k}")));
    }
    let m = j.len();
    let a = |d: DoseId| table.get(d, m);
    let mut t = [None; 4];
    for d in s.iter() {
        t[d.index()] = Some(a(d));
    }
    let sum_s = s.iter().fold(T::zero(), |acc, d| acc + a(d));
    let sum_j = j.iter().fold(T::zero(), |acc, d| acc + a(d));
    let mh = DoseSet::of(&[DoseId::Medium, DoseId::High]);
    let transfer_low = k == mh && s == mh && j.contains(DoseId::Low);

    let auto_sum = match mode {
        ReallocMode::Strict => sum_s,
        ReallocMode::Pooled => sum_j,
    };
    match mode {
        ReallocMode::Strict => {
            if transfer_low {
                t[3] = Some(a(DoseId::High) + a(DoseId::Low));
            }
        }
        ReallocMode::Pooled => {
            if s.len() == 1 {
                let d = s.iter().next().expect("one element");
                t[d.index()] = Some(sum_j);
            } else if transfer_low {
                t[3] = Some(a(DoseId::High) + a(DoseId::Low));
            } else if sum_j > sum_s {
                // spread the unused share over the doses of J ∩ K in proportion to A
                let n = T::from_count(s.len());
                for d in s.iter() {
                    let share = if sum_s > T::zero() { a(d) / sum_s } else { T::one() / n };
                    t[d.index()] = Some(sum_j * share);
                }
            }
        }
    }
    let budget = t.iter().flatten().fold(T::zero(), |acc, &x| acc + x);
    Ok(IntersectionDecision {
        j,
        status: IntersectionStatus::AcceptedFinal,
        budget,
        auto_sum,
        thresholds: t,
    })
}

/// Decision for `H_J`: rejected when the automatic sum reaches 1 or some
/// `p_j^(2)` is at or below its threshold.
pub fn intersection_decision<T: Real>(
    j: DoseSet,
    k: DoseSet,
    table: &ConditionalErrorTable<T>,
    p2: &[Option<PValue<T>>; 4],
    mode: ReallocMode,
) -> Result<IntersectionDecision<T>> {
    let mut dec = intersection_thresholds(j, k, table, mode)?;
    let mut reject = dec.auto_sum >= T::one();
    for d in j.intersection(k).iter() {
        let p = p2[d.index()]
            .ok_or_else(|| Error::Contract(format!("missing stage-2 p-value for the {d} dose")))?;
        let thr = dec.thresholds[d.index()].expect("threshold set for every dose of J ∩ K");
        reject |= p.value() <= thr;
    }
    if reject {
        dec.status = IntersectionStatus::Rejected;
    }
    Ok(dec)
}

/// Full closed test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedTestReport<T = f64> {
    pub k: DoseSet,
    pub mode: ReallocMode,
    pub stage1: [PValue<T>; 2],
    pub stage2: [Option<PValue<T>>; 4],
    pub table: ConditionalErrorTable<T>,
    /// All seven intersections, largest first.
    pub intersections: Vec<IntersectionDecision<T>>,
    pub rejected: DoseSet,
}

/// Closed test from stage-1 primary-endpoint p-values `[low, medium]` and
/// stage-2 p-values (present exactly for the doses in `k`).
#[allow(clippy::too_many_arguments)]
pub fn run_closed_test<T: Real>(
    stage1: [PValue<T>; 2],
    stage2: &[Option<PValue<T>>; 4],
    k: DoseSet,
    alpha: T,
    w1: T,
    w2: T,
    mode: ReallocMode,
) -> Result<ClosedTestReport<T>> {
    if !allowed_k(k) {
        return Err(Error::Contract(format!("stage-2 selection {k} is not one of {{1,2}}, {{2,3}}, {{3}}")));
    }
    for d in DoseId::ACTIVE {
        if stage2[d.index()].is_some() != k.contains(d) {
            return Err(Error::Contract(format!(
                "stage-2 p-values must be given exactly for K = {k}; the {d} dose disagrees"
            )));
        }
    }
    let table = ConditionalErrorTable::new(stage1[0], stage1[1], alpha, w1, w2)?;
    let mut intersections = Vec::with_capacity(7);
    for j in DoseSet::intersections() {
        let dec = if j.intersection(k).is_empty() {
            IntersectionDecision {
                j,
                status: IntersectionStatus::AcceptedAtInterim,
                budget: T::zero(),
                auto_sum: T::zero(),
                thresholds: [None; 4],
            }
        } else {
            intersection_decision(j, k, &table, stage2, mode)?
        };
        intersections.push(dec);
    }
    let rejected = DoseId::ACTIVE
        .into_iter()
        .filter(|&d| {
            intersections
                .iter()
                .filter(|x| x.j.contains(d))
                .all(IntersectionDecision::is_rejected)
        })
        .fold(DoseSet::EMPTY, DoseSet::with);
    Ok(ClosedTestReport {
        k,
        mode,
        stage1,
        stage2: *stage2,
        table,
        intersections,
        rejected,
    })
}

/// [`run_closed_test`] with the level, weights and mode of a design.
pub fn run_closed_test_cfg(
    stage1: [PValue; 2],
    stage2: &[Option<PValue>; 4],
    k: DoseSet,
    cfg: &DesignConfig,
) -> Result<ClosedTestReport> {
    run_closed_test(stage1, stage2, k, cfg.alpha, cfg.w1, cfg.w2, cfg.realloc_mode)
}

impl<T: Real> ClosedTestReport<T> {
    /// One line per intersection: the threshold comparisons that reject it.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "K = {}, reallocation: {}", self.k, self.mode);
        let _ = writeln!(out, "conditional error rates A_j at alpha/1, alpha/2, alpha/3:");
        for d in DoseId::ACTIVE {
            let r = self.table.a[d.index() - 1];
            let _ = writeln!(out, "  A{}: {:.4}  {:.4}  {:.4}", d.index(), r[0], r[1], r[2]);
        }
        for x in &self.intersections {
            let name = format!("H{}", x.j.label());
            if x.status == IntersectionStatus::AcceptedAtInterim {
                let _ = writeln!(out, "{name:<5} accepted at interim");
                continue;
            }
            let mut parts: Vec<String> = Vec::new();
            for d in x.j.intersection(self.k).iter() {
                let thr = x.thresholds[d.index()].expect("threshold present");
                let p = self.stage2[d.index()].map(|p| p.value()).unwrap_or_else(T::nan);
                parts.push(format!("p{}={:.3} <= {:.3}", d.index(), p, thr));
            }
            if x.j.len() > 1 {
                parts.push(format!("{:.3} >= 1", x.auto_sum));
            }
            let verdict = if x.is_rejected() { "rejected" } else { "not rejected" };
            let _ = writeln!(out, "{name:<5} {}  -> {verdict}", parts.join(" OR "));
        }
        let names: Vec<String> = self.rejected.iter().map(|d| format!("H{}", d.index())).collect();
        let _ = writeln!(
            out,
            "rejected: {}",
            if names.is_empty() { "none".to_string() } else { names.join(", ") }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(x: f64) -> PValue {
        PValue::new(x).unwrap()
    }

    const W1: f64 = 0.774_596_669_241_483_4; // sqrt(0.6)
    const W2: f64 = 0.632_455_532_033_675_9; // sqrt(0.4)

    #[test]
    fn combination_examples() {
        assert!((combine_pvalue(pv(0.5), pv(0.5), W1, W2).value() - 0.5).abs() < 1e-15);
        let c = combine_pvalue(pv(0.01), pv(0.05), W1, W2).value();
        assert!((c - 0.002_239_620_086_064_1).abs() < 1e-13, "{c}");
        assert!((combine_pvalue(pv(0.137), pv(0.9), 1.0, 0.0).value() - 0.137).abs() < 1e-13);
        // exact zeros and ones are clamped rather than producing infinities
        assert!(combine_pvalue(pv(0.0), pv(1.0), W1, W2).value() > 0.0);
    }

    #[test]
    fn conditional_error_examples() {
        let a = partial_conditional_error(pv(0.5), 0.025, W1, W2).unwrap();
        assert!((a - 0.000_970_956_498_370_42).abs() < 1e-15, "{a}");
        let a = partial_conditional_error(pv(0.008), 0.025, W1, W2).unwrap();
        assert!((a - 0.440_907_727_065_59).abs() < 1e-12, "{a}");
        assert!(partial_conditional_error(pv(0.1), 0.0, W1, W2).is_err());
    }

    #[test]
    fn table_values() {
        let t = ConditionalErrorTable::new(pv(0.009), pv(0.001), 0.025, W1, W2).unwrap();
        let want_low = [0.420_077_002_229, 0.258_916_227_67, 0.187_287_656_147];
        let want_med = [0.753_571_239_012, 0.595_136_130_952, 0.499_813_194_669];
        for m in 0..3 {
            assert!((t.a[0][m] - want_low[m]).abs() < 1e-11);
            assert!((t.a[1][m] - want_med[m]).abs() < 1e-11);
            assert_eq!(t.a[2][m], 0.025 / (m + 1) as f64);
        }
    }

    fn set(ds: &[usize]) -> DoseSet {
        DoseSet::of(&ds.iter().map(|&i| DoseId::ALL[i]).collect::<Vec<_>>())
    }

    #[test]
    fn high_only_threshold() {
        let t = ConditionalErrorTable::new(pv(0.999), pv(0.999), 0.025, W1, W2).unwrap();
        let mut p2 = [None; 4];
        p2[3] = Some(pv(0.005));
        let d = intersection_decision(set(&[1, 2, 3]), set(&[3]), &t, &p2, ReallocMode::Strict).unwrap();
        assert_eq!(d.thresholds[3], Some(0.025 / 3.0));
        assert!(d.is_rejected());
    }

    #[test]
    fn strict_thresholds_are_the_conditional_errors() {
        let t = ConditionalErrorTable::new(pv(0.009), pv(0.001), 0.025, W1, W2).unwrap();
        let d = intersection_thresholds(set(&[1, 2, 3]), set(&[1, 2]), &t, ReallocMode::Strict).unwrap();
        assert_eq!(d.thresholds[1], Some(t.a[0][2]));
        assert_eq!(d.thresholds[2], Some(t.a[1][2]));
        assert_eq!(d.thresholds[3], None);
        let d = intersection_thresholds(set(&[1, 2, 3]), set(&[2, 3]), &t, ReallocMode::Strict).unwrap();
        assert_eq!(d.thresholds[3], Some(t.a[2][2] + t.a[0][2]));
        assert_eq!(d.thresholds[2], Some(t.a[1][2]));
        // J = {2,3}: no dose-1 share
        let d = intersection_thresholds(set(&[2, 3]), set(&[2, 3]), &t, ReallocMode::Strict).unwrap();
        assert_eq!(d.thresholds[3], Some(0.0125));
        // |J ∩ K| = 1
        let d = intersection_thresholds(set(&[1, 2]), set(&[2, 3]), &t, ReallocMode::Strict).unwrap();
        assert_eq!(d.thresholds[2], Some(t.a[1][1]));
        let d = intersection_thresholds(set(&[1, 2]), set(&[2, 3]), &t, ReallocMode::Pooled).unwrap();
        assert_eq!(d.thresholds[2], Some(t.a[0][1] + t.a[1][1]));
        assert!(intersection_thresholds(set(&[1]), set(&[2, 3]), &t, ReallocMode::Strict).is_err());
    }

    #[test]
    fn worked_examples() {
        let mut p2 = [None; 4];
        p2[1] = Some(pv(0.045));
        p2[2] = Some(pv(0.014));
        let r = run_closed_test([pv(0.009), pv(0.001)], &p2, set(&[1, 2]), 0.025, W1, W2, ReallocMode::Strict)
            .unwrap();
        assert_eq!(r.rejected, set(&[1, 2]));

        let mut p2 = [None; 4];
        p2[2] = Some(pv(0.015));
        p2[3] = Some(pv(0.0));
        for mode in [ReallocMode::Strict, ReallocMode::Pooled] {
            let r = run_closed_test([pv(0.692), pv(0.057)], &p2, set(&[2, 3]), 0.025, W1, W2, mode).unwrap();
            assert_eq!(r.rejected, set(&[2, 3]));
            let text = r.explain();
            assert!(text.contains("H3    p3=0.000 <= 0.025"), "{text}");
            assert!(text.contains("H1    accepted at interim"), "{text}");
        }
    }

    #[test]
    fn contract_violations() {
        let mut p2 = [None; 4];
        p2[2] = Some(pv(0.1));
        let bad_k = run_closed_test([pv(0.1), pv(0.1)], &p2, set(&[1, 3]), 0.025, W1, W2, ReallocMode::Strict);
        assert!(matches!(bad_k, Err(Error::Contract(_))));
        let missing = run_closed_test([pv(0.1), pv(0.1)], &p2, set(&[2, 3]), 0.025, W1, W2, ReallocMode::Strict);
        assert!(matches!(missing, Err(Error::Contract(_))));
    }

    #[test]
    fn all_ones_reject_nothing() {
        for k in [set(&[1, 2]), set(&[2, 3]), set(&[3])] {
            let mut p2 = [None; 4];
            for d in k.iter() {
                p2[d.index()] = Some(pv(1.0));
            }
            let r = run_closed_test([pv(0.3), pv(0.3)], &p2, k, 0.025, W1, W2, ReallocMode::Pooled).unwrap();
            assert!(r.rejected.is_empty());
        }
    }

    #[test]
    fn single_precision() {
        let a = partial_conditional_error(PValue::new(0.008f32).unwrap(), 0.025, 0.6f32.sqrt(), 0.4f32.sqrt()).unwrap();
        assert!((a - 0.440_907_7).abs() < 1e-5);
    }
}
