use serde::{Deserialize, Serialize};

use super::replicate::ReplicateRecord;
use crate::comparators::FixedTrialResult;
use crate::error::{Error, Result};
use crate::model::{DoseId, DoseSet};

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub value: f64,
    pub mc_se: f64,
}

impl McValue {
    fn proportion(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        McValue {
            value: p,
            mc_se: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

/// Running sums of one scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn summary(&self) -> Option<McValue> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Some(McValue {
            value: mean,
            mc_se: (var / n).sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct EstimatorSums {
    /// Point estimate minus the reference value.
    error: Moments,
    point: Moments,
    ci_lower: Moments,
    covered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub n: u64,
    pub mean: McValue,
    pub bias: Option<McValue>,
    pub mean_ci_lower: McValue,
    /// Among replicates with an estimate.
    pub coverage: Option<McValue>,
    /// One minus the share of all runs whose bound lies above the reference
    /// value; runs without an estimate count as not missing.
    pub coverage_all_runs: Option<McValue>,
}

/// Operating characteristics of one cell. Per-dose arrays are indexed by dose
/// (placebo slot unused); estimator arrays follow [`EstimatorKind::ALL`](crate::estimation::EstimatorKind::ALL).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub runs: u64,
    pub failed: u64,
    /// First failure by replicate index.
    pub first_error: Option<String>,
    /// P(at least one rejection).
    pub disjunctive_power: McValue,
    /// P(at least one true null rejected).
    pub fwer: McValue,
    pub marginal_power: [Option<McValue>; 4],
    pub selection_prob: [Option<McValue>; 4],
    pub conditional_power: [Option<McValue>; 4],
    /// P(case i..iv).
    pub case_prob: Option<[McValue; 4]>,
    pub true_concordance: [Option<f64>; 4],
    pub estimators: [[Option<EstimatorSummary>; 3]; 4],
}

/// Mergeable replicate tallies of one cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    failed: u64,
    first_error: Option<(u64, String)>,
    any: u64,
    fwer: u64,
    marginal: [u64; 4],
    selected: [u64; 4],
    rejected_and_selected: [u64; 4],
    cases: [u64; 4],
    est: [[EstimatorSums; 3]; 4],
    adaptive: bool,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn count_rejections(&mut self, rejected: DoseSet, nulls: DoseSet) {
        self.n += 1;
        self.any += u64::from(!rejected.is_empty());
        self.fwer += u64::from(!rejected.intersection(nulls).is_empty());
        for d in rejected.iter() {
            self.marginal[d.index()] += 1;
        }
    }

    pub fn push(&mut self, r: &ReplicateRecord, nulls: DoseSet, truth: &[Option<f64>; 4]) {
        self.adaptive = true;
        self.count_rejections(r.rejected, nulls);
        let k = r.selection.k;
        for d in k.iter() {
            self.selected[d.index()] += 1;
            self.rejected_and_selected[d.index()] += u64::from(r.rejected.contains(d));
        }
        self.cases[r.selection.case as usize] += 1;
        for (d, row) in r.estimates.iter().enumerate() {
            for (e, est) in row.iter().enumerate() {
                let Some(est) = est else { continue };
                let s = &mut self.est[d][e];
                s.point.push(est.point);
                s.ci_lower.push(est.ci_lower);
                if let Some(t) = truth[d] {
                    s.error.push(est.point - t);
                    s.covered += u64::from(est.ci_lower <= t);
                }
            }
        }
    }

    pub fn push_fixed(&mut self, r: &FixedTrialResult, nulls: DoseSet) {
        self.count_rejections(r.rejected, nulls);
    }

    pub fn push_error(&mut self, index: u64, err: &Error) {
        self.failed += 1;
        if self.first_error.as_ref().is_none_or(|(i, _)| index < *i) {
            self.first_error = Some((index, err.to_string()));
        }
    }

    /// Adds `other`; callers merge in replicate order so sums are reproducible.
    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.failed += other.failed;
        if let Some((i, msg)) = &other.first_error {
            if self.first_error.as_ref().is_none_or(|(j, _)| i < j) {
                self.first_error = Some((*i, msg.clone()));
            }
        }
        self.any += other.any;
        self.fwer += other.fwer;
        for d in 0..4 {
            self.marginal[d] += other.marginal[d];
            self.selected[d] += other.selected[d];
            self.rejected_and_selected[d] += other.rejected_and_selected[d];
            self.cases[d] += other.cases[d];
            for e in 0..3 {
                let (a, b) = (&mut self.est[d][e], &other.est[d][e]);
                a.error.merge(&b.error);
                a.point.merge(&b.point);
                a.ci_lower.merge(&b.ci_lower);
                a.covered += b.covered;
            }
        }
        self.adaptive |= other.adaptive;
    }

    pub fn finish(&self, truth: &[Option<f64>; 4]) -> Result<OperatingCharacteristics> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Input(match &self.first_error {
                Some((i, msg)) => format!("every replicate failed; first at {i}: {msg}"),
                None => "no replicates to aggregate".into(),
            }));
        }
        let mut marginal_power = [None; 4];
        let mut selection_prob = [None; 4];
        let mut conditional_power = [None; 4];
        let mut estimators = [[None; 3]; 4];
        for d in DoseId::ACTIVE {
            let i = d.index();
            marginal_power[i] = Some(McValue::proportion(self.marginal[i], n));
            if !self.adaptive {
                continue;
            }
            selection_prob[i] = Some(McValue::proportion(self.selected[i], n));
            if self.selected[i] > 0 {
                conditional_power[i] = Some(McValue::proportion(self.rejected_and_selected[i], self.selected[i]));
            }
            for (slot, s) in estimators[i].iter_mut().zip(&self.est[i]) {
                let (Some(mean), Some(ci)) = (s.point.summary(), s.ci_lower.summary()) else {
                    continue;
                };
                let scored = s.error.n;
                *slot = Some(EstimatorSummary {
                    n: s.point.n,
                    mean,
                    bias: s.error.summary(),
                    mean_ci_lower: ci,
                    coverage: (scored > 0).then(|| McValue::proportion(s.covered, scored)),
                    coverage_all_runs: (scored > 0).then(|| McValue::proportion(n - (scored - s.covered), n)),
                });
            }
        }
        Ok(OperatingCharacteristics {
            runs: n,
            failed: self.failed,
            first_error: self.first_error.as_ref().map(|(i, m)| format!("replicate {i}: {m}")),
            disjunctive_power: McValue::proportion(self.any, n),
            fwer: McValue::proportion(self.fwer, n),
            marginal_power,
            selection_prob,
            conditional_power,
            case_prob: self
                .adaptive
                .then(|| std::array::from_fn(|c| McValue::proportion(self.cases[c], n))),
            true_concordance: *truth,
            estimators,
        })
    }
}

/// Operating characteristics of a finished set of replicates.
pub fn aggregate(
    replicates: &[ReplicateRecord],
    nulls: DoseSet,
    truth: &[Option<f64>; 4],
) -> Result<OperatingCharacteristics> {
    let mut acc = Accumulator::new();
    for r in replicates {
        acc.push(r, nulls, truth);
    }
    acc.finish(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{ConcordanceEstimate, EstimatorKind};
    use crate::model::{Case, SelectionOutcome};

    fn rec(case: Case, rejected: &[DoseId]) -> ReplicateRecord {
        let mut estimates = [[None; 3]; 4];
        estimates[2][2] = Some(ConcordanceEstimate {
            dose: DoseId::Medium,
            method: EstimatorKind::InverseNormal,
            point: 0.6,
            ci_lower: 0.45,
            stages_used: [true, true],
        });
        ReplicateRecord {
            index: 0,
            selection: SelectionOutcome {
                k: case.selected(),
                case,
                n2_per_arm: [0; 4],
            },
            rejected: DoseSet::of(rejected),
            estimates,
        }
    }

    #[test]
    fn marginal_and_disjunctive() {
        let reps = vec![rec(Case::Iii, &[DoseId::Medium]); 4];
        let truth = [None, None, Some(0.5), None];
        let oc = aggregate(&reps, DoseSet::of(&[DoseId::Low]), &truth).unwrap();
        let m: Vec<f64> = oc.marginal_power[1..].iter().map(|x| x.unwrap().value).collect();
        assert_eq!(m, vec![0.0, 1.0, 0.0]);
        assert_eq!(oc.disjunctive_power.value, 1.0);
        assert_eq!(oc.fwer.value, 0.0);
        assert_eq!(oc.conditional_power[2].unwrap().value, 1.0);
        assert!(oc.conditional_power[1].is_none());
        let inv = oc.estimators[2][2].unwrap();
        assert!((inv.bias.unwrap().value - 0.1).abs() < 1e-12);
        assert_eq!(inv.coverage.unwrap().value, 1.0);
        assert_eq!(inv.bias.unwrap().mc_se, 0.0);
    }

    #[test]
    fn cases_partition() {
        let reps = vec![
            rec(Case::I, &[]),
            rec(Case::Ii, &[]),
            rec(Case::Iii, &[]),
            rec(Case::Iv, &[DoseId::High]),
            rec(Case::Iv, &[]),
        ];
        let oc = aggregate(&reps, DoseSet::EMPTY, &[None; 4]).unwrap();
        let cases = oc.case_prob.unwrap();
        let low = oc.selection_prob[1].unwrap().value;
        assert!((low + cases[2].value + cases[3].value - 1.0).abs() < 1e-12);
        assert!((oc.selection_prob[3].unwrap().value - 0.6).abs() < 1e-12);
        assert!((oc.disjunctive_power.mc_se - (0.2_f64 * 0.8 / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn merge_matches_single_pass() {
        let reps: Vec<_> = (0..10)
            .map(|i| rec(if i % 3 == 0 { Case::I } else { Case::Iii }, &[DoseId::Medium]))
            .collect();
        let truth = [None, None, Some(0.55), None];
        let whole = aggregate(&reps, DoseSet::EMPTY, &truth).unwrap();
        let mut a = Accumulator::new();
        for chunk in reps.chunks(3) {
            let mut c = Accumulator::new();
            for r in chunk {
                c.push(r, DoseSet::EMPTY, &truth);
            }
            a.merge(&c);
        }
        assert_eq!(a.finish(&truth).unwrap().case_prob, whole.case_prob);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(aggregate(&[], DoseSet::EMPTY, &[None; 4]).is_err());
    }
}
