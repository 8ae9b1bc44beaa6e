use adaptrial::comparators::{bonferroni_holm, run_ma1, FixedDesign};
use adaptrial::datagen::CohortSampler;
use adaptrial::harness::{run_campaign, write_campaign_csv, write_plotdata, Campaign, CellDesign, SimId, SimulationSpec};
use adaptrial::kernel::RankSumMethod;
use adaptrial::model::{builtin_scenarios, AnalysisMethod, Disease, DoseId, Variant};
use adaptrial::PValue;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_spec(runs: u64) -> SimulationSpec {
    let mut spec = SimulationSpec::new(Disease::Mansonellosis, SimId::S1, runs, 2024);
    spec.methods = vec![AnalysisMethod::WilcoxC];
    spec.oracle_scale = 20;
    spec
}

fn csv_bytes(c: &Campaign) -> (Vec<u8>, Vec<u8>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_campaign_csv(&mut a, c).unwrap();
    write_plotdata(&mut b, c).unwrap();
    (a, b)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let mut spec = small_spec(1100);
    spec.methods = vec![AnalysisMethod::WilcoxC, AnalysisMethod::Lm];
    spec.alpha1_grid = vec![0.1, 0.3];
    spec.scenarios = vec!["no_effect".into(), "trend_a".into()];
    let one = in_pool(1, || run_campaign(&spec).unwrap());
    let four = in_pool(4, || run_campaign(&spec).unwrap());
    let (a1, b1) = csv_bytes(&one);
    let (a4, b4) = csv_bytes(&four);
    assert!(a1 == a4, "campaign CSV differs between 1 and 4 threads");
    assert!(b1 == b4, "plot data differs between 1 and 4 threads");
    let again = in_pool(2, || run_campaign(&spec).unwrap());
    assert!(csv_bytes(&again).0 == a1);
}

#[test]
fn campaign_invariants() {
    let campaign = run_campaign(&small_spec(4000)).unwrap();
    for r in &campaign.cells {
        let oc = r.oc.as_ref().expect("cell ran");
        assert_eq!(oc.failed, 0);
        let max_marginal = oc.marginal_power.iter().flatten().map(|v| v.value).fold(0.0, f64::max);
        assert!(oc.disjunctive_power.value >= max_marginal);
        if let Some(cases) = oc.case_prob {
            let total: f64 = cases.iter().map(|c| c.value).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    // Case (iv) under no effect: both Month-6 statistics stay below
    // Φ⁻¹(1 − α1). They share the placebo arm, so they are correlated with
    // ρ = 1/2 and the probability exceeds the independence value (1 − α1)².
    // Reference: bivariate normal CDF, ρ = 1/2, at (c, c).
    let correlated = [0.832_402, 0.687_151, 0.556_767, 0.439_127, 1.0 / 3.0];
    for (&a1, want) in campaign.spec.alpha1_grid.iter().zip(correlated) {
        let cell = campaign.find("no_effect", AnalysisMethod::WilcoxC, a1).unwrap();
        let iv = cell.oc.as_ref().unwrap().case_prob.unwrap()[3];
        assert!((iv.value - want).abs() < 0.02, "alpha1 {a1}: case iv {} vs {want}", iv.value);
        assert!(iv.value >= (1.0 - a1) * (1.0 - a1) - 3.0 * iv.mc_se);
    }

    // low and medium gain power with α1; the high dose loses it
    for scn in ["no_effect", "high_only", "trend_a", "trend_b", "all_effective"] {
        let grid = &campaign.spec.alpha1_grid;
        for w in grid.windows(2) {
            let a = campaign.find(scn, AnalysisMethod::WilcoxC, w[0]).unwrap().oc.as_ref().unwrap();
            let b = campaign.find(scn, AnalysisMethod::WilcoxC, w[1]).unwrap().oc.as_ref().unwrap();
            for d in DoseId::ACTIVE {
                let (x, y) = (a.marginal_power[d.index()].unwrap(), b.marginal_power[d.index()].unwrap());
                let slack = 2.0 * x.mc_se.max(y.mc_se);
                if d == DoseId::High {
                    assert!(y.value <= x.value + slack, "{scn} {d}: {} -> {}", x.value, y.value);
                } else {
                    assert!(y.value >= x.value - slack, "{scn} {d}: {} -> {}", x.value, y.value);
                }
            }
        }
    }

    // comparator cells are present and labelled
    let fixed = campaign
        .cells
        .iter()
        .filter(|c| matches!(c.cell.design, CellDesign::Fixed(_)))
        .count();
    assert_eq!(fixed, 5 * 2);
    assert!(campaign.find_fixed("trend_b", AnalysisMethod::WilcoxC, FixedDesign::Ma2).is_some());
}

#[test]
fn ma1_skips_the_high_dose_after_a_rejection() {
    let scn = &builtin_scenarios(Disease::Mansonellosis, Variant::Standard)[4];
    let sampler = CohortSampler::new(scn).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tested = 0;
    for _ in 0..500 {
        let r = run_ma1(&sampler, 200, 0.025, AnalysisMethod::WilcoxC, RankSumMethod::Asymptotic, &mut rng).unwrap();
        let study1 = r.rejected.contains(DoseId::Low) || r.rejected.contains(DoseId::Medium);
        assert!(!(study1 && r.high_tested()));
        tested += usize::from(r.high_tested());
    }
    assert!(tested < 500);
}

proptest! {
    #[test]
    fn holm_contains_bonferroni(p in prop::array::uniform3(0.0..=1.0f64), level in 0.001..0.2f64) {
        let input: Vec<(DoseId, PValue)> = DoseId::ACTIVE
            .into_iter()
            .zip(p)
            .map(|(d, x)| (d, PValue::new(x).unwrap()))
            .collect();
        let holm = bonferroni_holm(&input, level).unwrap();
        for (d, x) in &input {
            if x.value() <= level / 3.0 {
                prop_assert!(holm.rejected.contains(*d));
            }
        }
    }
}
