use std::io::Write;

use super::{aggregate::McValue, Campaign, CellDesign, CellResult, GridAxis};
use crate::error::Result;
use crate::estimation::EstimatorKind;
use crate::model::{Case, DoseId};

pub const CSV_HEADER: [&str; 11] = [
    "disease", "sim_id", "scenario", "method", "alpha1", "n1", "rho", "dose", "metric", "value", "mc_se",
];

const NA: &str = "NA";

struct Row {
    dose: &'static str,
    metric: String,
    value: String,
    mc_se: String,
}

fn mc(dose: &'static str, metric: String, v: McValue) -> Row {
    Row {
        dose,
        metric,
        value: v.value.to_string(),
        mc_se: v.mc_se.to_string(),
    }
}

fn plain(dose: &'static str, metric: String, v: impl ToString) -> Row {
    Row {
        dose,
        metric,
        value: v.to_string(),
        mc_se: NA.into(),
    }
}

fn cell_rows(c: &CellResult) -> Vec<Row> {
    let prefix = match c.cell.design {
        CellDesign::Adaptive => String::new(),
        CellDesign::Fixed(d) => format!("{}_", d.name()),
    };
    let m = |name: &str| format!("{prefix}{name}");
    let Some(oc) = &c.oc else {
        return vec![plain("all", m("cell_error"), 1)];
    };
    let mut rows = vec![
        plain("all", m("runs"), oc.runs),
        plain("all", m("failed"), oc.failed),
        mc("all", m("disjunctive_power"), oc.disjunctive_power),
        mc("all", m("fwer"), oc.fwer),
    ];
    if let Some(cases) = oc.case_prob {
        for (case, v) in [Case::I, Case::Ii, Case::Iii, Case::Iv].into_iter().zip(cases) {
            rows.push(mc("all", m(&format!("case_{}", case.name())), v));
        }
    }
    for d in DoseId::ACTIVE {
        let i = d.index();
        let dose = d.name();
        let opt = |rows: &mut Vec<Row>, name: &str, v: Option<McValue>| {
            if let Some(v) = v {
                rows.push(mc(dose, m(name), v));
            }
        };
        opt(&mut rows, "selection_prob", oc.selection_prob[i]);
        opt(&mut rows, "marginal_power", oc.marginal_power[i]);
        opt(&mut rows, "conditional_power", oc.conditional_power[i]);
        if let Some(t) = oc.true_concordance[i] {
            rows.push(plain(dose, m("true_concordance"), t));
        }
        for (e, kind) in EstimatorKind::ALL.into_iter().enumerate() {
            let Some(s) = &oc.estimators[i][e] else { continue };
            let k = kind.name();
            rows.push(plain(dose, m(&format!("{k}_n")), s.n));
            opt(&mut rows, &format!("{k}_mean"), Some(s.mean));
            opt(&mut rows, &format!("{k}_bias"), s.bias);
            opt(&mut rows, &format!("{k}_mean_ci_lower"), Some(s.mean_ci_lower));
            opt(&mut rows, &format!("{k}_coverage"), s.coverage);
            opt(&mut rows, &format!("{k}_coverage_all_runs"), s.coverage_all_runs);
        }
    }
    rows
}

/// Long-format CSV: one row per cell and metric.
pub fn write_campaign_csv<W: Write>(w: W, campaign: &Campaign) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    let spec = &campaign.spec;
    let disease = spec.disease.name();
    let sim = spec.sim_id.to_string();
    for c in &campaign.cells {
        let cfg = &c.cell.config;
        let (alpha1, n1) = match c.cell.design {
            CellDesign::Adaptive => (cfg.alpha1.to_string(), cfg.n1.to_string()),
            CellDesign::Fixed(_) => (NA.to_string(), NA.to_string()),
        };
        let rho = c.cell.scenario.rho.to_string();
        for r in cell_rows(c) {
            out.write_record([
                disease,
                &sim,
                &c.cell.scenario.key,
                cfg.method.name(),
                &alpha1,
                &n1,
                &rho,
                r.dose,
                &r.metric,
                &r.value,
                &r.mc_se,
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Tidy power table against the campaign's varied parameter: one row per
/// cell, grid value and series (each dose plus `any` for at least one rejection).
/// Comparator rows repeat across grid values they do not depend on.
pub fn write_plotdata<W: Write>(w: W, campaign: &Campaign) -> Result<()> {
    let axis = campaign.spec.sim_id.axis();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scenario", "method", "design", axis.name(), "series", "power", "mc_se"])?;
    for c in &campaign.cells {
        let Some(oc) = &c.oc else { continue };
        let cfg = &c.cell.config;
        let (design, xs): (&str, Vec<String>) = match (c.cell.design, axis) {
            (CellDesign::Adaptive, GridAxis::Alpha1) => ("adaptive", vec![cfg.alpha1.to_string()]),
            (CellDesign::Adaptive, GridAxis::N1) => ("adaptive", vec![cfg.n1.to_string()]),
            (CellDesign::Fixed(d), GridAxis::Alpha1) => {
                (d.name(), campaign.spec.alpha1_grid.iter().map(f64::to_string).collect())
            }
            (CellDesign::Fixed(d), GridAxis::N1) => {
                (d.name(), campaign.spec.n1_grid.iter().map(usize::to_string).collect())
            }
            (CellDesign::Adaptive, GridAxis::Rho) => ("adaptive", vec![c.cell.scenario.rho.to_string()]),
            (CellDesign::Fixed(d), GridAxis::Rho) => (d.name(), vec![c.cell.scenario.rho.to_string()]),
        };
        let mut series: Vec<(&str, McValue)> = vec![("any", oc.disjunctive_power)];
        for d in DoseId::ACTIVE {
            if let Some(v) = oc.marginal_power[d.index()] {
                series.push((d.name(), v));
            }
        }
        for x in &xs {
            for (name, v) in &series {
                out.write_record([
                    c.cell.scenario.key.as_str(),
                    cfg.method.name(),
                    design,
                    x,
                    name,
                    &v.value.to_string(),
                    &v.mc_se.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
