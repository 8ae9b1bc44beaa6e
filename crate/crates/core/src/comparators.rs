//! Single-stage benchmark designs with Holm's step-down adjustment.
//!
//! MA1 runs low and medium against their own placebo on 3/5 of `N` at level
//! `2α/3`, and only if neither is significant a high-dose trial on the rest at
//! `α/3`. MA2 splits `N` over four arms with a shared placebo at level `α`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::stage_pvalues;
use crate::datagen::CohortSampler;
use crate::error::{Error, Result};
use crate::kernel::{PValue, RankSumMethod};
use crate::model::{AnalysisMethod, DoseId, DoseSet, Endpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedDesign {
    Ma1,
    Ma2,
}

impl FixedDesign {
    pub fn name(self) -> &'static str {
        match self {
            FixedDesign::Ma1 => "ma1",
            FixedDesign::Ma2 => "ma2",
        }
    }
}

/// Holm step-down result; arrays are indexed by dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub rejected: DoseSet,
    pub adjusted_p: [Option<f64>; 4],
}

/// Holm's step-down procedure over the given hypotheses.
pub fn bonferroni_holm(p: &[(DoseId, PValue)], level: f64) -> Result<HolmResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let mut order: Vec<(DoseId, f64)> = p.iter().map(|&(d, p)| (d, p.value())).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let m = order.len();
    let mut adjusted_p = [None; 4];
    let mut running = 0.0_f64;
    let mut rejected = DoseSet::EMPTY;
    let mut stopped = false;
    for (i, &(d, pv)) in order.iter().enumerate() {
        running = running.max(((m - i) as f64 * pv).min(1.0));
        adjusted_p[d.index()] = Some(running);
        if !stopped && running <= level {
            rejected = rejected.with(d);
        } else {
            stopped = true;
        }
    }
    Ok(HolmResult { rejected, adjusted_p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedTrialResult {
    pub design: FixedDesign,
    pub rejected: DoseSet,
    pub raw_p: [Option<f64>; 4],
    pub adjusted_p: [Option<f64>; 4],
}

impl FixedTrialResult {
    /// Whether the high-dose comparison was carried out.
    pub fn high_tested(&self) -> bool {
        self.raw_p[DoseId::High.index()].is_some()
    }
}

/// Arm sizes for splitting `total` over placebo and `doses`: floor per arm,
/// remainder to placebo.
pub fn fixed_arm_sizes(total: usize, doses: &[DoseId]) -> [usize; 4] {
    let arms = doses.len() + 1;
    let base = total / arms;
    let mut n = [0; 4];
    n[0] = base + total % arms;
    for d in doses {
        n[d.index()] = base;
    }
    n
}

fn analyse(
    sampler: &CohortSampler,
    n: &[usize; 4],
    method: AnalysisMethod,
    rank_method: RankSumMethod,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Vec<(DoseId, PValue)>> {
    let mut recs = Vec::with_capacity(n.iter().sum());
    sampler.sample_into(n, 1, 1, rng, &mut recs);
    let p = stage_pvalues(&recs, method, Endpoint::Month12, rank_method)?;
    Ok(DoseId::ACTIVE
        .into_iter()
        .filter_map(|d| p.get(d).map(|p| (d, p)))
        .collect())
}

pub fn run_ma1<R: Rng + ?Sized>(
    sampler: &CohortSampler,
    n_total: usize,
    alpha: f64,
    method: AnalysisMethod,
    rank_method: RankSumMethod,
    rng: &mut R,
) -> Result<FixedTrialResult> {
    let n1 = 3 * n_total / 5;
    let n_study1 = fixed_arm_sizes(n1, &[DoseId::Low, DoseId::Medium]);
    let n_study2 = fixed_arm_sizes(n_total - n1, &[DoseId::High]);
    if n_study1[1] == 0 || n_study2[3] == 0 {
        return Err(Error::Input(format!("N = {n_total} is too small for MA1")));
    }
    let mut raw_p = [None; 4];
    let p1 = analyse(sampler, &n_study1, method, rank_method, rng)?;
    let holm = bonferroni_holm(&p1, 2.0 * alpha / 3.0)?;
    for &(d, p) in &p1 {
        raw_p[d.index()] = Some(p.value());
    }
    let mut adjusted_p = holm.adjusted_p;
    let mut rejected = holm.rejected;
    if rejected.is_empty() {
        let p2 = analyse(sampler, &n_study2, method, rank_method, rng)?;
        let (d, p) = p2[0];
        raw_p[d.index()] = Some(p.value());
        adjusted_p[d.index()] = Some(p.value());
        if p.value() <= alpha / 3.0 {
            rejected = rejected.with(d);
        }
    }
    Ok(FixedTrialResult {
        design: FixedDesign::Ma1,
        rejected,
        raw_p,
        adjusted_p,
    })
}

pub fn run_ma2<R: Rng + ?Sized>(
    sampler: &CohortSampler,
    n_total: usize,
    alpha: f64,
    method: AnalysisMethod,
    rank_method: RankSumMethod,
    rng: &mut R,
) -> Result<FixedTrialResult> {
    let n = fixed_arm_sizes(n_total, &DoseId::ACTIVE);
    if n[1] == 0 {
        return Err(Error::Input(format!("N = {n_total} is too small for MA2")));
    }
    let p = analyse(sampler, &n, method, rank_method, rng)?;
    let holm = bonferroni_holm(&p, alpha)?;
    let mut raw_p = [None; 4];
    for &(d, p) in &p {
        raw_p[d.index()] = Some(p.value());
    }
    Ok(FixedTrialResult {
        design: FixedDesign::Ma2,
        rejected: holm.rejected,
        raw_p,
        adjusted_p: holm.adjusted_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_scenarios, Disease, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(x: f64) -> PValue {
        PValue::new(x).unwrap()
    }

    #[test]
    fn holm_examples() {
        let h = bonferroni_holm(&[(DoseId::Low, pv(0.001)), (DoseId::Medium, pv(0.5))], 0.05).unwrap();
        assert_eq!(h.rejected, DoseSet::of(&[DoseId::Low]));
        assert_eq!(h.adjusted_p[1], Some(0.002));
        assert_eq!(h.adjusted_p[2], Some(0.5));
        let h = bonferroni_holm(&[(DoseId::Low, pv(1.0)), (DoseId::High, pv(1.0))], 0.05).unwrap();
        assert!(h.rejected.is_empty());
        let h = bonferroni_holm(&[(DoseId::High, pv(0.049))], 0.05).unwrap();
        assert_eq!(h.rejected, DoseSet::of(&[DoseId::High]));
        // step-down stops at the first non-rejection
        let h = bonferroni_holm(
            &[(DoseId::Low, pv(0.01)), (DoseId::Medium, pv(0.04)), (DoseId::High, pv(0.03))],
            0.05,
        )
        .unwrap();
        assert_eq!(h.rejected, DoseSet::of(&[DoseId::Low]));
        assert_eq!(h.adjusted_p[2], Some(0.06));
    }

    #[test]
    fn arm_sizes() {
        assert_eq!(fixed_arm_sizes(120, &[DoseId::Low, DoseId::Medium]), [40, 40, 40, 0]);
        assert_eq!(fixed_arm_sizes(80, &[DoseId::High]), [40, 0, 0, 40]);
        assert_eq!(fixed_arm_sizes(200, &DoseId::ACTIVE), [50, 50, 50, 50]);
        assert_eq!(fixed_arm_sizes(202, &DoseId::ACTIVE), [52, 50, 50, 50]);
    }

    #[test]
    fn ma1_gating() {
        let scn = &builtin_scenarios(Disease::Mansonellosis, Variant::Standard)[4];
        let sampler = CohortSampler::new(scn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gated = 0;
        for _ in 0..50 {
            let r = run_ma1(&sampler, 200, 0.025, AnalysisMethod::WilcoxC, RankSumMethod::Asymptotic, &mut rng).unwrap();
            let study1_rejected = r.rejected.contains(DoseId::Low) || r.rejected.contains(DoseId::Medium);
            assert_eq!(r.high_tested(), !study1_rejected);
            gated += usize::from(study1_rejected);
        }
        assert!(gated > 0);
    }
}
