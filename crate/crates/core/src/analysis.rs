//! Stage-wise comparisons of each active dose against placebo, the interim
//! selection rule and the stage-2 allocation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ols_one_sided_pvalues, rank_sum_test, Concordance, PValue, RankSumMethod};
use crate::model::{AnalysisMethod, Case, DoseId, DoseSet, Endpoint, Outcome, SelectionOutcome, SubjectRecord};

/// One-sided p-values of one stage at one visit, indexed by dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePValues {
    pub stage: u8,
    pub endpoint: Endpoint,
    pub p: [Option<PValue>; 4],
}

impl StagePValues {
    #[inline]
    pub fn get(&self, dose: DoseId) -> Option<PValue> {
        self.p[dose.index()]
    }

    /// Active doses with a p-value.
    pub fn doses(&self) -> DoseSet {
        DoseId::ACTIVE
            .into_iter()
            .filter(|d| self.p[d.index()].is_some())
            .fold(DoseSet::EMPTY, DoseSet::with)
    }
}

/// P-values plus the per-dose concordance of the same stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageAnalysis {
    pub pvalues: StagePValues,
    pub concordance: [Option<Concordance>; 4],
}

/// Subject values split by arm.
struct Arms {
    stage: u8,
    arms: [Vec<usize>; 4],
}

fn split_arms(records: &[SubjectRecord]) -> Result<Arms> {
    let first = records
        .first()
        .ok_or_else(|| Error::Input("no subjects to analyse".into()))?;
    let mut arms: [Vec<usize>; 4] = Default::default();
    for (i, r) in records.iter().enumerate() {
        if r.stage != first.stage {
            return Err(Error::Input(format!(
                "records mix stages {} and {}; analyse each stage separately",
                first.stage, r.stage
            )));
        }
        arms[r.dose.index()].push(i);
    }
    if arms[0].is_empty() {
        return Err(Error::Input(format!("stage {}: placebo arm is empty", first.stage)));
    }
    if arms[1..].iter().all(Vec::is_empty) {
        return Err(Error::Input(format!("stage {}: no active arm", first.stage)));
    }
    Ok(Arms {
        stage: first.stage,
        arms,
    })
}

/// Stage-wise p-value of every active dose present in `records`.
pub fn stage_pvalues(
    records: &[SubjectRecord],
    method: AnalysisMethod,
    endpoint: Endpoint,
    rank_method: RankSumMethod,
) -> Result<StagePValues> {
    analyze_stage(records, method, endpoint, rank_method).map(|a| a.pvalues)
}

/// P-values and concordances in one pass (rank methods rank only once).
pub fn analyze_stage(
    records: &[SubjectRecord],
    method: AnalysisMethod,
    endpoint: Endpoint,
    rank_method: RankSumMethod,
) -> Result<StageAnalysis> {
    let arms = split_arms(records)?;
    let kind = method.outcome();
    let values = |d: usize| -> Vec<f64> {
        arms.arms[d].iter().map(|&i| records[i].outcome(endpoint, kind)).collect()
    };
    let control = values(0);
    let mut p = [None; 4];
    let mut conc = [None; 4];
    for d in 1..4 {
        if arms.arms[d].is_empty() {
            continue;
        }
        let test = rank_sum_test(&values(d), &control, rank_method)?;
        p[d] = Some(test.p_value);
        conc[d] = Some(test.concordance);
    }
    if method == AnalysisMethod::Lm {
        let lm = lm_pvalues(records, &arms, endpoint)?;
        for d in 1..4 {
            if p[d].is_some() {
                p[d] = lm[d];
            }
        }
    }
    Ok(StageAnalysis {
        pvalues: StagePValues {
            stage: arms.stage,
            endpoint,
            p,
        },
        concordance: conc,
    })
}

fn lm_pvalues(records: &[SubjectRecord], arms: &Arms, endpoint: Endpoint) -> Result<[Option<PValue>; 4]> {
    let order: Vec<usize> = arms.arms.iter().flatten().copied().collect();
    let y: Vec<f64> = order.iter().map(|&i| records[i].at(endpoint).ln_1p()).collect();
    let base: Vec<f64> = order.iter().map(|&i| records[i].x0.ln_1p()).collect();
    let present: Vec<usize> = (1..4).filter(|&d| !arms.arms[d].is_empty()).collect();
    let indicators: Vec<Vec<f64>> = present
        .iter()
        .map(|&d| order.iter().map(|&i| f64::from(u8::from(records[i].dose.index() == d))).collect())
        .collect();
    let ps = ols_one_sided_pvalues(&y, &indicators, &base)?;
    let mut out = [None; 4];
    for (col, &d) in present.iter().enumerate() {
        out[d] = Some(ps[col]);
    }
    Ok(out)
}

/// Concordance of each active dose against placebo on `kind` at `endpoint`.
pub fn stage_concordance(
    records: &[SubjectRecord],
    endpoint: Endpoint,
    kind: Outcome,
) -> Result<[Option<Concordance>; 4]> {
    let method = match kind {
        Outcome::Level => AnalysisMethod::WilcoxC,
        Outcome::Change => AnalysisMethod::WilcoxCc,
    };
    analyze_stage(records, method, endpoint, RankSumMethod::Asymptotic).map(|a| a.concordance)
}

/// Interim rule on the Month-6 stage-1 p-values; "promising" means `p < alpha1`.
/// The returned outcome has no allocation yet; see [`SelectionOutcome::allocate`].
pub fn interim_select(p_low: PValue, p_med: PValue, alpha1: f64) -> SelectionOutcome {
    let low = p_low.value() < alpha1;
    let med = p_med.value() < alpha1;
    let case = match (low, med) {
        (true, true) => Case::I,
        (true, false) => Case::Ii,
        (false, true) => Case::Iii,
        (false, false) => Case::Iv,
    };
    SelectionOutcome {
        k: case.selected(),
        case,
        n2_per_arm: [0; 4],
    }
}

impl SelectionOutcome {
    /// Fills in the stage-2 arm sizes for `n2` patients.
    pub fn allocate(mut self, n2: usize) -> Result<Self> {
        self.n2_per_arm = allocate_stage2(n2, self.k)?;
        Ok(self)
    }
}

/// Equal split of `n2` over placebo and `k`; the remainder goes one per arm
/// starting with placebo, then by ascending dose.
pub fn allocate_stage2(n2: usize, k: DoseSet) -> Result<[usize; 4]> {
    let arms: Vec<DoseId> = std::iter::once(DoseId::Placebo).chain(k.iter()).collect();
    if k.is_empty() {
        return Err(Error::Input("no dose selected for stage 2".into()));
    }
    if n2 < arms.len() {
        return Err(Error::Input(format!(
            "stage 2 needs at least {} patients for {} arms, got {n2}",
            arms.len(),
            arms.len()
        )));
    }
    let base = n2 / arms.len();
    let rem = n2 % arms.len();
    let mut out = [0; 4];
    for (i, d) in arms.iter().enumerate() {
        out[d.index()] = base + usize::from(i < rem);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, dose: DoseId, x0: f64, x2: f64) -> SubjectRecord {
        SubjectRecord {
            subject_id: id,
            stage: 1,
            dose,
            x0,
            x1: x2,
            x2,
            responder: false,
        }
    }

    fn pv(x: f64) -> PValue {
        PValue::new(x).unwrap()
    }

    #[test]
    fn selection_cases() {
        let s = interim_select(pv(0.1), pv(0.2), 0.3);
        assert_eq!((s.case, s.k), (Case::I, DoseSet::of(&[DoseId::Low, DoseId::Medium])));
        let s = interim_select(pv(0.391), pv(0.047), 0.3);
        assert_eq!((s.case, s.k), (Case::Iii, DoseSet::of(&[DoseId::Medium, DoseId::High])));
        let s = interim_select(pv(0.5), pv(0.6), 0.3);
        assert_eq!((s.case, s.k), (Case::Iv, DoseSet::of(&[DoseId::High])));
        assert_eq!(interim_select(pv(0.1), pv(0.3), 0.3).case, Case::Ii);
    }

    #[test]
    fn allocation() {
        let hi = DoseSet::of(&[DoseId::High]);
        assert_eq!(allocate_stage2(80, hi).unwrap(), [40, 0, 0, 40]);
        let lm = DoseSet::of(&[DoseId::Low, DoseId::Medium]);
        assert_eq!(allocate_stage2(80, lm).unwrap(), [27, 27, 26, 0]);
        let mh = DoseSet::of(&[DoseId::Medium, DoseId::High]);
        assert_eq!(allocate_stage2(80, mh).unwrap(), [27, 0, 27, 26]);
        assert!(allocate_stage2(2, mh).is_err());
    }

    #[test]
    fn wilcox_exact_fixture() {
        let mut r = Vec::new();
        for (i, x) in [10.0, 20.0, 30.0, 40.0].into_iter().enumerate() {
            r.push(rec(i as u64, DoseId::Placebo, 5.0, x));
        }
        for (i, x) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            r.push(rec(10 + i as u64, DoseId::Low, 5.0, x));
        }
        let p = stage_pvalues(&r, AnalysisMethod::WilcoxC, Endpoint::Month12, RankSumMethod::Auto).unwrap();
        assert!((p.get(DoseId::Low).unwrap().value() - 1.0 / 70.0).abs() < 1e-15);
        assert!(p.get(DoseId::Medium).is_none());
        assert_eq!(p.doses(), DoseSet::of(&[DoseId::Low]));
    }

    #[test]
    fn copied_arm_sits_at_the_null_mean() {
        let vals = [3.0, 0.0, 17.0, 250.0, 9.5];
        let mut r = Vec::new();
        for (i, &x) in vals.iter().enumerate() {
            r.push(rec(i as u64, DoseId::Placebo, 100.0 + i as f64, x));
            r.push(rec(100 + i as u64, DoseId::Medium, 100.0 + i as f64, x));
        }
        for m in [AnalysisMethod::WilcoxC, AnalysisMethod::WilcoxCc] {
            let p = stage_pvalues(&r, m, Endpoint::Month12, RankSumMethod::Asymptotic).unwrap();
            // U equals its null mean; only the continuity correction remains
            let var: f64 = 25.0 / 12.0 * (11.0 - 5.0 * 6.0 / 90.0);
            let want = crate::kernel::norm_cdf(0.5 / var.sqrt());
            assert!((p.get(DoseId::Medium).unwrap().value() - want).abs() < 1e-15);
        }
        let p = stage_pvalues(&r, AnalysisMethod::Lm, Endpoint::Month12, RankSumMethod::Asymptotic).unwrap();
        assert!((p.get(DoseId::Medium).unwrap().value() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lm_matches_reference_fit() {
        // reference from an independent least-squares fit of
        // ln1p(x2) ~ 1 + low + medium + ln1p(x0)
        let data = [
            (DoseId::Placebo, 120.0, 80.0),
            (DoseId::Placebo, 40.0, 55.0),
            (DoseId::Placebo, 300.0, 410.0),
            (DoseId::Low, 90.0, 20.0),
            (DoseId::Low, 210.0, 0.0),
            (DoseId::Low, 35.0, 12.0),
            (DoseId::Medium, 150.0, 140.0),
            (DoseId::Medium, 60.0, 9.0),
            (DoseId::Medium, 500.0, 260.0),
        ];
        let r: Vec<_> = data
            .iter()
            .enumerate()
            .map(|(i, &(d, x0, x2))| rec(i as u64, d, x0, x2))
            .collect();
        let p = stage_pvalues(&r, AnalysisMethod::Lm, Endpoint::Month12, RankSumMethod::Auto).unwrap();
        assert!((p.get(DoseId::Low).unwrap().value() - LM_REF_LOW).abs() < 1e-8);
        assert!((p.get(DoseId::Medium).unwrap().value() - LM_REF_MED).abs() < 1e-8);
    }

    const LM_REF_LOW: f64 = 0.039_478_778_599_818_01;
    const LM_REF_MED: f64 = 0.295_073_074_078_229_9;

    #[test]
    fn missing_arms_and_mixed_stages() {
        let r = vec![rec(1, DoseId::Low, 1.0, 1.0)];
        assert!(matches!(
            stage_pvalues(&r, AnalysisMethod::WilcoxC, Endpoint::Month6, RankSumMethod::Auto),
            Err(Error::Input(_))
        ));
        let mut r = vec![rec(1, DoseId::Placebo, 1.0, 1.0), rec(2, DoseId::Low, 1.0, 2.0)];
        r[1].stage = 2;
        assert!(stage_pvalues(&r, AnalysisMethod::WilcoxC, Endpoint::Month6, RankSumMethod::Auto).is_err());
        assert!(stage_pvalues(&[], AnalysisMethod::WilcoxC, Endpoint::Month6, RankSumMethod::Auto).is_err());
    }
}
