use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptrial::datagen::read_cohort_csv;
use adaptrial::estimation::EstimatorKind;
use adaptrial::harness::{
    run_campaign_with_progress, write_campaign_csv, write_plotdata, Campaign, CellDesign, SimId, SimulationSpec,
};
use adaptrial::kernel::RankSumMethod;
use adaptrial::model::{
    builtin_scenarios, AnalysisMethod, DesignConfig, Disease, DoseId, ReallocMode, SubjectRecord, Variant,
};
use adaptrial::pipeline::{final_analysis, interim_analysis, split_stages, FinalReport, InterimReport};
use adaptrial::worked_example::{self, WorkedExample};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "adaptrial", version, about = "Adaptive two-stage dose-selection trials: simulation and analysis")]
struct Cli {
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads; does not change results.
    #[arg(long, global = true, env = "ADAPTRIAL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation campaign and write the long-format CSV.
    Simulate(SimulateArgs),
    /// Interim or final analysis of a cohort file.
    Analyze(AnalyzeArgs),
    /// Closed test of one of the bundled example cohorts.
    Example(ExampleArgs),
    /// List the built-in scenarios of a disease.
    Scenarios(ScenariosArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// mans, oncho or loa.
    #[arg(long)]
    disease: String,
    /// S1 to S5.
    #[arg(long)]
    sim: String,
    /// Replicates per cell.
    #[arg(long)]
    runs: u64,
    /// Master seed; equal seeds give byte-identical output.
    #[arg(long)]
    seed: u64,
    /// Destination of the campaign CSV.
    #[arg(long)]
    out: PathBuf,
    /// Analysis methods (lm, wilcox_c, wilcox_cc); default all.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    method: Vec<String>,
    /// Interim levels; default the campaign's grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha1: Vec<f64>,
    /// Stage-1 sample sizes; default the campaign's grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n1: Vec<usize>,
    /// Visit correlations; default the campaign's grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    rho: Vec<f64>,
    /// Scenario keys; default all.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    scenario: Vec<String>,
    #[arg(long, default_value = "strict")]
    realloc: String,
    /// Rank-sum null distribution: auto, exact or asymptotic.
    #[arg(long, default_value = "asymptotic")]
    rank_method: String,
    /// Skip the single-stage comparators.
    #[arg(long)]
    no_comparators: bool,
    /// Scale factor of the reference concordance run.
    #[arg(long, default_value_t = 5000)]
    oracle_scale: usize,
    /// Accept grid values outside the standard grids.
    #[arg(long)]
    allow_offgrid: bool,
    /// Also write power curves to <out stem>_plotdata.csv.
    #[arg(long)]
    plotdata: bool,
    /// Report progress on stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Interim,
    Final,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    stage: StageArg,
    /// Cohort CSV (subject_id, stage, dose, x0, x1, x2, responder).
    #[arg(long)]
    data: PathBuf,
    /// Design JSON (N, N1, alpha, alpha1, method, ...).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the reallocation mode of the config.
    #[arg(long)]
    realloc: Option<String>,
}

#[derive(Args, Debug)]
struct ExampleArgs {
    /// trend or all-effective.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "strict")]
    realloc: String,
    /// Write the bundled cohort CSV here instead of analysing it.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenariosArgs {
    #[arg(long)]
    disease: String,
    /// Campaign whose assumption set to show (S2 modifies rates, S3 baselines).
    #[arg(long, default_value = "S1")]
    sim: String,
}

/// Exit status 1: bad input. Exit status 2: failure while running.
enum Failure {
    Input(String),
    Runtime(String),
}

impl From<adaptrial::Error> for Failure {
    fn from(e: adaptrial::Error) -> Self {
        use adaptrial::Error as E;
        match e {
            E::Validation { .. } | E::Input(_) | E::Contract(_) | E::Domain(_) => Failure::Input(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn runtime(msg: impl Into<String>) -> Failure {
    Failure::Runtime(msg.into())
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| runtime(e.to_string()))?;
    }
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Simulate(a) => simulate(a, cli.format, &mut out),
        Command::Analyze(a) => analyze(a, cli.format, &mut out),
        Command::Example(a) => example(a, cli.format, &mut out),
        Command::Scenarios(a) => scenarios(a, cli.format, &mut out),
    }
}

fn parse<T: std::str::FromStr<Err = adaptrial::Error>>(flag: &str, s: &str) -> CliResult<T> {
    s.parse().map_err(|e: adaptrial::Error| input(format!("--{flag}: {e}")))
}

fn parse_rank_method(s: &str) -> CliResult<RankSumMethod> {
    match s.trim().to_ascii_lowercase().as_str() {
        "auto" => Ok(RankSumMethod::Auto),
        "exact" => Ok(RankSumMethod::Exact),
        "asymptotic" => Ok(RankSumMethod::Asymptotic),
        other => Err(input(format!("--rank-method: unknown value '{other}' (auto, exact, asymptotic)"))),
    }
}

fn emit(out: &mut impl Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes()).map_err(|e| runtime(format!("stdout: {e}")))
}

fn emit_json(out: &mut impl Write, v: &serde_json::Value) -> CliResult {
    let s = serde_json::to_string_pretty(v).map_err(|e| runtime(e.to_string()))?;
    emit(out, &s)?;
    emit(out, "\n")
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))
}

/// Attaches the flag name to a validation error from the harness.
fn flag_error(e: adaptrial::Error) -> Failure {
    match e {
        adaptrial::Error::Validation { field, reason } => {
            input(format!("--{}: {reason}", field.to_ascii_lowercase().replace('_', "-")))
        }
        other => other.into(),
    }
}

fn build_spec(a: &SimulateArgs) -> CliResult<SimulationSpec> {
    let disease: Disease = parse("disease", &a.disease)?;
    let sim: SimId = parse("sim", &a.sim)?;
    let mut spec = SimulationSpec::new(disease, sim, a.runs, a.seed)
        .with_realloc(parse("realloc", &a.realloc)?)
        .with_rank_method(parse_rank_method(&a.rank_method)?);
    if !a.method.is_empty() {
        spec.methods = a
            .method
            .iter()
            .map(|m| parse::<AnalysisMethod>("method", m))
            .collect::<CliResult<_>>()?;
    }
    if !a.alpha1.is_empty() {
        spec.alpha1_grid = a.alpha1.clone();
    }
    if !a.n1.is_empty() {
        spec.n1_grid = a.n1.clone();
    }
    if !a.rho.is_empty() {
        spec.rho_grid = a.rho.clone();
    }
    spec.scenarios = a.scenario.clone();
    spec.comparators = !a.no_comparators;
    spec.oracle_scale = a.oracle_scale;
    spec.validate(a.allow_offgrid).map_err(flag_error)?;
    Ok(spec)
}

fn plotdata_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("campaign");
    out.with_file_name(format!("{stem}_plotdata.csv"))
}

fn simulate(a: SimulateArgs, format: Format, out: &mut impl Write) -> CliResult {
    let spec = build_spec(&a)?;
    let show = a.progress;
    let progress = move |done: usize, total: usize| {
        if show && (done == total || done.is_multiple_of(50)) {
            eprintln!("{done}/{total} work items");
        }
    };
    let campaign = run_campaign_with_progress(&spec, &progress)?;
    let mut w = create(&a.out)?;
    write_campaign_csv(&mut w, &campaign)?;
    w.flush().map_err(|e| runtime(e.to_string()))?;
    let plot = if a.plotdata {
        let path = plotdata_path(&a.out);
        let mut w = create(&path)?;
        write_plotdata(&mut w, &campaign)?;
        w.flush().map_err(|e| runtime(e.to_string()))?;
        Some(path)
    } else {
        None
    };
    match format {
        Format::Json => emit_json(out, &campaign_json(&campaign, &a.out, plot.as_deref())),
        Format::Text => emit(out, &campaign_table(&campaign, &a.out, plot.as_deref())),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn campaign_table(c: &Campaign, path: &Path, plot: Option<&Path>) -> String {
    let mut s = format!(
        "{} {} : {} cells, {} runs each -> {}\n",
        c.spec.disease,
        c.spec.sim_id,
        c.cells.len(),
        c.spec.runs,
        path.display()
    );
    if let Some(p) = plot {
        s += &format!("plot data -> {}\n", p.display());
    }
    s += &format!(
        "{:<22} {:<8} {:<9} {:>6} {:>5} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
        "scenario", "design", "method", "alpha1", "n1", "rho", "disj", "fwer", "low", "medium", "high"
    );
    for r in &c.cells {
        let cell = &r.cell;
        let (design, alpha1, n1) = match cell.design {
            CellDesign::Adaptive => ("adaptive", format!("{}", cell.config.alpha1), cell.config.n1.to_string()),
            CellDesign::Fixed(d) => (d.name(), "NA".into(), "NA".into()),
        };
        let head = format!(
            "{:<22} {:<8} {:<9} {:>6} {:>5} {:>5}",
            cell.scenario.key, design, cell.config.method.to_string(), alpha1, n1, cell.scenario.rho
        );
        match &r.oc {
            Some(oc) => {
                let mp = |d: DoseId| fmt_opt(oc.marginal_power[d.index()].map(|v| v.value));
                s += &format!(
                    "{head} {:>7.3} {:>7.3} {:>7} {:>7} {:>7}\n",
                    oc.disjunctive_power.value,
                    oc.fwer.value,
                    mp(DoseId::Low),
                    mp(DoseId::Medium),
                    mp(DoseId::High)
                );
            }
            None => s += &format!("{head} failed: {}\n", r.error.as_deref().unwrap_or("unknown error")),
        }
    }
    s
}

fn campaign_json(c: &Campaign, path: &Path, plot: Option<&Path>) -> serde_json::Value {
    let cells: Vec<_> = c
        .cells
        .iter()
        .map(|r| {
            let design = match r.cell.design {
                CellDesign::Adaptive => "adaptive",
                CellDesign::Fixed(d) => d.name(),
            };
            let adaptive = matches!(r.cell.design, CellDesign::Adaptive);
            json!({
                "scenario": r.cell.scenario.key,
                "design": design,
                "method": r.cell.config.method.name(),
                "alpha1": adaptive.then_some(r.cell.config.alpha1),
                "n1": adaptive.then_some(r.cell.config.n1),
                "rho": r.cell.scenario.rho,
                "error": r.error,
                "oc": r.oc,
            })
        })
        .collect();
    json!({
        "disease": c.spec.disease.name(),
        "sim_id": c.spec.sim_id.to_string(),
        "runs": c.spec.runs,
        "seed": c.spec.master_seed,
        "csv": path,
        "plotdata": plot,
        "cells": cells,
    })
}

fn load_config(path: &Path, realloc: Option<&str>) -> CliResult<DesignConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: DesignConfig =
        serde_json::from_str(&text).map_err(|e| input(format!("config {}: {e}", path.display())))?;
    if let Some(m) = realloc {
        cfg.realloc_mode = parse("realloc", m)?;
    }
    Ok(cfg.validate()?)
}

fn load_data(path: &Path) -> CliResult<Vec<SubjectRecord>> {
    let f = File::open(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    read_cohort_csv(io::BufReader::new(f)).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn analyze(a: AnalyzeArgs, format: Format, out: &mut impl Write) -> CliResult {
    let cfg = load_config(&a.config, a.realloc.as_deref())?;
    let (s1, s2) = split_stages(load_data(&a.data)?)?;
    if s1.is_empty() {
        return Err(input(format!("{}: no stage-1 subjects", a.data.display())));
    }
    match a.stage {
        StageArg::Interim => {
            let rep = interim_analysis(&s1, &cfg)?;
            match format {
                Format::Json => emit_json(out, &json!({ "config": cfg, "interim": rep })),
                Format::Text => emit(out, &interim_text(&rep)),
            }
        }
        StageArg::Final => {
            if s2.is_empty() {
                return Err(input(format!("{}: no stage-2 subjects for a final analysis", a.data.display())));
            }
            let rep = final_analysis(&s1, &s2, &cfg)?;
            match format {
                Format::Json => emit_json(out, &final_json(&cfg, &rep)),
                Format::Text => emit(out, &final_text(&rep)),
            }
        }
    }
}

fn pv(p: Option<adaptrial::PValue>) -> String {
    p.map_or_else(|| "-".into(), |p| format!("{:.3}", p.value()))
}

fn interim_text(rep: &InterimReport) -> String {
    let sel = rep.selection;
    let mut s = String::from("interim analysis (Month 6)\n");
    s += &format!(
        "  p low = {}   p medium = {}\n",
        pv(rep.month6.get(DoseId::Low)),
        pv(rep.month6.get(DoseId::Medium))
    );
    s += &format!("  case {}: stage-2 doses K = {}\n", sel.case, sel.k);
    s += &format!(
        "  stage-2 allocation: placebo {}, low {}, medium {}, high {}\n",
        sel.n2_per_arm[0], sel.n2_per_arm[1], sel.n2_per_arm[2], sel.n2_per_arm[3]
    );
    s
}

fn final_text(rep: &FinalReport) -> String {
    let mut s = interim_text(&rep.interim);
    s += "final analysis (Month 12)\n";
    s += "  dose     stage 1  stage 2\n";
    for d in DoseId::ACTIVE {
        s += &format!(
            "  {:<8} {:>7}  {:>7}\n",
            d.name(),
            pv(rep.stage1.pvalues.get(d)),
            pv(rep.stage2.pvalues.get(d))
        );
    }
    s += "closed test\n";
    for line in rep.closed_test.explain().lines() {
        s += &format!("  {line}\n");
    }
    s += "concordance estimates (one-sided 97.5% lower bound)\n";
    s += &format!("  {:<8} {:>15} {:>15} {:>15}\n", "dose", "unconditional", "conditional", "inverse normal");
    for d in DoseId::ACTIVE {
        let cell = |k: EstimatorKind| {
            rep.estimate(d, k)
                .map_or_else(|| "-".into(), |e| format!("{:.2} ({:.2})", e.point, e.ci_lower))
        };
        if rep.estimates[d.index()].iter().all(Option::is_none) {
            continue;
        }
        s += &format!(
            "  {:<8} {:>15} {:>15} {:>15}\n",
            d.name(),
            cell(EstimatorKind::Unconditional),
            cell(EstimatorKind::Conditional),
            cell(EstimatorKind::InverseNormal)
        );
    }
    s
}

fn final_json(cfg: &DesignConfig, rep: &FinalReport) -> serde_json::Value {
    let rejected: Vec<usize> = rep.closed_test.rejected.iter().map(DoseId::index).collect();
    json!({
        "config": cfg,
        "rejected": rejected,
        "estimates": rep.estimate_list(),
        "report": rep,
    })
}

fn example(a: ExampleArgs, format: Format, out: &mut impl Write) -> CliResult {
    let ex: WorkedExample = parse("scenario", &a.scenario)?;
    let mode: ReallocMode = parse("realloc", &a.realloc)?;
    if let Some(path) = &a.dump {
        let mut w = create(path)?;
        w.write_all(ex.csv().as_bytes()).map_err(|e| runtime(e.to_string()))?;
        return w.flush().map_err(|e| runtime(e.to_string()));
    }
    let rep = ex.analyze(mode)?;
    match format {
        Format::Json => {
            let cfg = DesignConfig {
                realloc_mode: mode,
                ..worked_example::config()?
            };
            emit_json(out, &final_json(&cfg, &rep))
        }
        Format::Text => {
            emit(out, &format!("example: {ex}\n"))?;
            emit(out, &final_text(&rep))
        }
    }
}

fn scenarios(a: ScenariosArgs, format: Format, out: &mut impl Write) -> CliResult {
    let disease: Disease = parse("disease", &a.disease)?;
    let sim: SimId = parse("sim", &a.sim)?;
    let variant: Variant = sim.variant();
    let list = builtin_scenarios(disease, variant);
    if format == Format::Json {
        return emit_json(out, &json!({ "disease": disease.name(), "variant": variant, "scenarios": list }));
    }
    let mut s = format!(
        "{disease}, {:?} assumptions; reduction at Month 12 and responder probability per dose\n",
        variant
    );
    s += &format!(
        "{:<22} {:<32} {:>9} {:>9}  {:<23} {}\n",
        "key", "label", "mean", "sd", "r12 (P/L/M/H)", "pi (P/L/M/H)"
    );
    for scn in &list {
        let r: Vec<String> = scn.r.iter().map(|x| format!("{:.2}", x[1])).collect();
        let pi: Vec<String> = scn.pi.iter().map(|x| format!("{x:.2}")).collect();
        s += &format!(
            "{:<22} {:<32} {:>9} {:>9}  {:<23} {}\n",
            scn.key,
            scn.label,
            scn.baseline_mean,
            scn.baseline_sd,
            r.join("/"),
            pi.join("/")
        );
    }
    emit(out, &s)
}
