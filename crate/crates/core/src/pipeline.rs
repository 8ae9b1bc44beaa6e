//! Interim and final analysis of one trial, shared by the simulator and the
//! `analyze` command.

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_stage, interim_select, StageAnalysis, StagePValues};
use crate::engine::{run_closed_test_cfg, ClosedTestReport};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_conditional, estimate_inverse_normal, estimate_unconditional, ConcordanceEstimate, EstimatorKind,
    CONFIDENCE,
};
use crate::kernel::Concordance;
use crate::model::{DesignConfig, DoseId, DoseSet, Endpoint, SelectionOutcome, SubjectRecord};

/// Per-dose estimates, indexed `[dose][estimator]` in [`EstimatorKind::ALL`] order.
pub type EstimateGrid = [[Option<ConcordanceEstimate>; 3]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterimReport {
    pub month6: StagePValues,
    pub selection: SelectionOutcome,
    /// Arm sizes of the stage-1 cohort.
    pub n1_per_arm: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub interim: InterimReport,
    pub stage1: StageAnalysis,
    pub stage2: StageAnalysis,
    /// Doses actually present in stage 2.
    pub k: DoseSet,
    pub n2_per_arm: [usize; 4],
    pub closed_test: ClosedTestReport,
    pub estimates: EstimateGrid,
}

impl FinalReport {
    pub fn estimate(&self, dose: DoseId, kind: EstimatorKind) -> Option<&ConcordanceEstimate> {
        let col = EstimatorKind::ALL.iter().position(|&k| k == kind)?;
        self.estimates[dose.index()][col].as_ref()
    }

    /// Every available estimate, by dose then estimator.
    pub fn estimate_list(&self) -> Vec<ConcordanceEstimate> {
        self.estimates.iter().flatten().flatten().copied().collect()
    }
}

fn arm_sizes(records: &[SubjectRecord]) -> [usize; 4] {
    let mut n = [0; 4];
    for r in records {
        n[r.dose.index()] += 1;
    }
    n
}

fn check_records(records: &[SubjectRecord], stage: u8) -> Result<()> {
    for r in records {
        r.validate()?;
        if r.stage != stage {
            return Err(Error::Input(format!(
                "subject {} belongs to stage {}, expected stage {stage}",
                r.subject_id, r.stage
            )));
        }
    }
    Ok(())
}

/// Month-6 comparison of the stage-1 cohort and the selection rule.
pub fn interim_analysis(stage1: &[SubjectRecord], cfg: &DesignConfig) -> Result<InterimReport> {
    check_records(stage1, 1)?;
    let n1_per_arm = arm_sizes(stage1);
    if n1_per_arm[DoseId::High.index()] > 0 {
        return Err(Error::Input("stage 1 must not contain high-dose subjects".into()));
    }
    if n1_per_arm[1] == 0 || n1_per_arm[2] == 0 {
        return Err(Error::Input("stage 1 needs low- and medium-dose subjects".into()));
    }
    let month6 = analyze_stage(stage1, cfg.method, Endpoint::Month6, cfg.rank_method)?.pvalues;
    let (p_low, p_med) = stage1_pair(&month6)?;
    let selection = interim_select(p_low, p_med, cfg.alpha1).allocate(cfg.n2())?;
    Ok(InterimReport {
        month6,
        selection,
        n1_per_arm,
    })
}

fn stage1_pair(p: &StagePValues) -> Result<(crate::kernel::PValue, crate::kernel::PValue)> {
    match (p.get(DoseId::Low), p.get(DoseId::Medium)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Input("stage 1 lacks a low- or medium-dose p-value".into())),
    }
}

/// Final analysis: the stage-1 Month-12 comparison, the stage-2 comparison of
/// whichever doses were continued, the closed test and the estimates.
pub fn final_analysis(
    stage1: &[SubjectRecord],
    stage2: &[SubjectRecord],
    cfg: &DesignConfig,
) -> Result<FinalReport> {
    let interim = interim_analysis(stage1, cfg)?;
    final_from_interim(interim, stage1, stage2, cfg)
}

/// [`final_analysis`] with the interim already done.
pub fn final_from_interim(
    interim: InterimReport,
    stage1: &[SubjectRecord],
    stage2: &[SubjectRecord],
    cfg: &DesignConfig,
) -> Result<FinalReport> {
    check_records(stage2, 2)?;
    let a1 = analyze_stage(stage1, cfg.method, Endpoint::Month12, cfg.rank_method)?;
    let a2 = analyze_stage(stage2, cfg.method, Endpoint::Month12, cfg.rank_method)?;
    let k = a2.pvalues.doses();
    let (p_low, p_med) = stage1_pair(&a1.pvalues)?;
    let closed_test = run_closed_test_cfg([p_low, p_med], &a2.pvalues.p, k, cfg)?;
    let estimates = estimate_grid(&a1.concordance, &a2.concordance, k, cfg)?;
    Ok(FinalReport {
        interim,
        stage1: a1,
        stage2: a2,
        k,
        n2_per_arm: arm_sizes(stage2),
        closed_test,
        estimates,
    })
}

/// All three estimators for every dose that has data. Doses not continued
/// only get the unconditional estimate from stage 1.
pub fn estimate_grid(
    c1: &[Option<Concordance>; 4],
    c2: &[Option<Concordance>; 4],
    k: DoseSet,
    cfg: &DesignConfig,
) -> Result<EstimateGrid> {
    let mut out: EstimateGrid = [[None; 3]; 4];
    for d in DoseId::ACTIVE {
        let i = d.index();
        let (s1, s2) = (c1[i], c2[i]);
        if s1.is_none() && s2.is_none() {
            continue;
        }
        let selected = k.contains(d);
        out[i][0] = Some(estimate_unconditional(d, s1, s2, CONFIDENCE)?);
        out[i][1] = estimate_conditional(d, s1, s2, selected, CONFIDENCE)?;
        if let (true, Some(s2)) = (selected, s2) {
            out[i][2] = Some(estimate_inverse_normal(d, s1, s2, cfg.w1, cfg.w2, CONFIDENCE)?);
        }
    }
    Ok(out)
}

/// Splits a combined record set by stage.
pub fn split_stages(records: Vec<SubjectRecord>) -> Result<(Vec<SubjectRecord>, Vec<SubjectRecord>)> {
    let (s1, s2): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.stage == 1);
    if let Some(r) = s2.iter().find(|r| r.stage != 2) {
        return Err(Error::Input(format!("subject {} has stage {}; expected 1 or 2", r.subject_id, r.stage)));
    }
    Ok((s1, s2))
}
