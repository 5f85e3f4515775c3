//! Command-line front end: single-request placement, scenario simulation,
//! privacy cap tables, and greedy-versus-exact comparison.
//!
//! Exit codes: 0 success, 1 usage or input errors, 2 infeasible or rejected,
//! 3 solver limits or resource errors. Relative input paths are also tried
//! under `$PRIVMAP_DATA_DIR` when set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privmap_core::exact::{solve_exact, SolveLimits, SolveOutcome};
use privmap_core::fleet::{self, DeviceClass, Fleet, ResourceLedger};
use privmap_core::greedy::{place_request, write_trace_csv, GreedyConfig};
use privmap_core::model::{self, CnnSpec};
use privmap_core::placement::{Assignment, Instance, PlacementPlan, Request};
use privmap_core::privacy::{self, LayerCap, PrivacyPolicy, SsimCurve};
use privmap_core::sim::{self, Scenario, SweepAxis};
use privmap_core::synth::{random_instance, SynthParams};

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMITS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "privmap",
    version,
    about = "Privacy-aware placement of CNN inference tasks across device fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place one classification request and write its plan.
    Solve(SolveArgs),
    /// Run a scenario file (or its embedded sweep) and write CSV reports.
    Simulate(SimulateArgs),
    /// Print the feature-map caps and split point for a dataset.
    Privacy(PrivacyArgs),
    /// Compare the greedy scheduler against the exact solver.
    Compare(CompareArgs),
}

#[derive(Args)]
struct FleetArgs {
    /// Fleet description file; omit to build a preset fleet.
    #[arg(long)]
    fleet: Option<PathBuf>,
    /// Preset fleet helper count.
    #[arg(long, default_value_t = 8)]
    helpers: usize,
    /// Preset fleet class mix, e.g. "rpi3=0.5,stm32h7=0.5".
    #[arg(long, default_value = "rpi3=1.0")]
    mix: String,
    /// Scheduling period in seconds; budgets scale with it.
    #[arg(long, default_value_t = 1.0)]
    period: f64,
}

#[derive(Args)]
struct SolveArgs {
    /// CNN preset name or model file.
    #[arg(long)]
    model: String,
    #[command(flatten)]
    fleet: FleetArgs,
    /// Maximum tolerated inversion SSIM.
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    #[arg(long, default_value_t = privacy::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Curve measurements; defaults to the embedded table.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    #[arg(long, default_value_t = model::DEFAULT_WORD_BITS)]
    word_bits: u64,
    /// Use the exact solver instead of the greedy scheduler.
    #[arg(long)]
    exact: bool,
    /// Node budget for the exact solver.
    #[arg(long, default_value_t = 100_000_000)]
    max_nodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plan output file.
    #[arg(long, default_value = "plan.csv")]
    out: PathBuf,
    /// Per-segment decision trace output (greedy only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario description file.
    #[arg(long)]
    scenario: PathBuf,
    /// Report (or sweep table) output file.
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Summary output file (single-scenario runs).
    #[arg(long, default_value = "summary.json")]
    summary: PathBuf,
    /// Per-segment decision trace output (single-scenario runs).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct PrivacyArgs {
    /// Dataset name from the curve table.
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    tolerance: f64,
    #[arg(long, default_value_t = privacy::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Curve measurements; defaults to the embedded table.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// CNN the caps apply to; defaults to the dataset's preset.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Instance description file.
    #[arg(long, conflicts_with = "random")]
    instance: Option<PathBuf>,
    /// Compare on N randomized desk-scale instances instead.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000_000)]
    max_nodes: u64,
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes instead of panicking.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Privacy(args) => cmd_privacy(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {}", message);
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// Relative inputs are searched in the working directory first, then under
/// `$PRIVMAP_DATA_DIR`.
fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var("PRIVMAP_DATA_DIR") {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn load_model_arg(name: &str) -> Result<CnnSpec, String> {
    if name.ends_with(".toml") {
        model::load_model_file(&resolve_input(Path::new(name))).map_err(|e| e.to_string())
    } else {
        model::load_preset(name).map_err(|e| e.to_string())
    }
}

fn load_curves_arg(path: &Option<PathBuf>) -> Result<Vec<SsimCurve>, String> {
    match path {
        Some(path) => privacy::load_curves_file(&resolve_input(path)).map_err(|e| e.to_string()),
        None => Ok(privacy::embedded_curves().to_vec()),
    }
}

fn parse_mix(text: &str) -> Result<Vec<(DeviceClass, f64)>, String> {
    let mut mix = Vec::new();
    for part in text.split(',') {
        let (name, fraction) = part
            .split_once('=')
            .ok_or_else(|| format!("bad mix entry {:?}, expected class=fraction", part))?;
        let class = DeviceClass::from_name(name.trim())
            .ok_or_else(|| format!("unknown device class {:?}", name.trim()))?;
        let fraction: f64 = fraction
            .trim()
            .parse()
            .map_err(|_| format!("bad fraction {:?}", fraction))?;
        mix.push((class, fraction));
    }
    Ok(mix)
}

/// Builds the fleet and guarantees a source bound to `model`.
fn build_fleet(args: &FleetArgs, model: &CnnSpec) -> Result<Fleet, String> {
    let mut fleet = match &args.fleet {
        Some(path) => fleet::load_fleet_file(&resolve_input(path)).map_err(|e| e.to_string())?,
        None => {
            let mix = parse_mix(&args.mix)?;
            fleet::load_fleet_preset(&mix, args.helpers, args.period).map_err(|e| e.to_string())?
        }
    };
    let has_source = fleet
        .sources()
        .any(|(_, d)| d.cnn.as_deref() == Some(model.name.as_str()));
    if !has_source {
        fleet
            .add_source("cam0", &model.name, args.period)
            .map_err(|e| e.to_string())?;
    }
    Ok(fleet)
}

fn derive_policy(
    model: &CnnSpec,
    curves: &[SsimCurve],
    tolerance: f64,
    epsilon: f64,
) -> Result<PrivacyPolicy, String> {
    match PrivacyPolicy::derive(model, curves, tolerance, epsilon) {
        Ok(policy) => Ok(policy),
        Err(privacy::PrivacyError::NoCurves { .. }) if tolerance >= 1.0 => {
            Ok(PrivacyPolicy::unrestricted(&model.dataset))
        }
        Err(e) => Err(e.to_string()),
    }
}

fn print_plan_metrics(instance: &Instance, plan: &PlacementPlan) {
    println!("objective_s {:.6}", plan.objective);
    println!("shared_bits {}", plan.shared_bits());
    let model = instance.model_of(0);
    for l in 1..=model.layer_count() {
        let latency = plan.per_layer_latency.get(&(0, l)).copied().unwrap_or(0.0);
        println!("layer {} {} {:.6}", l, model.layer(l).kind, latency);
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, String> {
    let model = load_model_arg(&args.model)?;
    let curves = load_curves_arg(&args.curves)?;
    let policy = derive_policy(&model, &curves, args.tolerance, args.epsilon)?;
    let fleet = build_fleet(&args.fleet, &model)?;
    let source = fleet
        .sources()
        .find(|(_, d)| d.cnn.as_deref() == Some(model.name.as_str()))
        .map(|(id, _)| id)
        .expect("fleet construction guarantees a source");
    let instance = Instance::new(
        vec![model],
        vec![policy],
        fleet,
        vec![Request { id: 0, source, model: 0 }],
        args.word_bits,
    )
    .map_err(|e| e.to_string())?;

    if args.exact {
        let limits = SolveLimits { max_nodes: args.max_nodes, ..SolveLimits::default() };
        match solve_exact(&instance, &limits) {
            Ok(SolveOutcome::Optimal(plan)) => {
                print_plan_metrics(&instance, &plan);
                write_plan(&instance, &plan, &args.out)?;
                Ok(0)
            }
            Ok(SolveOutcome::Infeasible) => {
                eprintln!("infeasible: no assignment satisfies the constraint set");
                Ok(EXIT_INFEASIBLE)
            }
            Ok(SolveOutcome::BudgetExceeded) => {
                eprintln!("aborted: node budget of {} exhausted", args.max_nodes);
                Ok(EXIT_LIMITS)
            }
            Err(e) => {
                eprintln!("{}", e);
                Ok(EXIT_LIMITS)
            }
        }
    } else {
        let config = GreedyConfig::new(args.alpha, args.beta).map_err(|e| e.to_string())?;
        let mut assignment = Assignment::empty(&instance);
        let mut ledger = ResourceLedger::new(&instance.fleet);
        let outcome = place_request(
            &instance,
            &mut assignment,
            &mut ledger,
            0,
            &config,
            args.trace.is_some(),
        );
        if let Some(path) = &args.trace {
            let file = std::fs::File::create(path).map_err(|e| e.to_string())?;
            write_trace_csv(&instance, &outcome.trace, file).map_err(|e| e.to_string())?;
        }
        if outcome.rejected {
            match outcome.reject {
                Some(reason) => eprintln!("rejected: {}", reason),
                None => eprintln!("rejected"),
            }
            return Ok(EXIT_INFEASIBLE);
        }
        let plan = PlacementPlan::evaluate(&instance, assignment);
        print_plan_metrics(&instance, &plan);
        write_plan(&instance, &plan, &args.out)?;
        Ok(0)
    }
}

fn write_plan(instance: &Instance, plan: &PlacementPlan, path: &Path) -> Result<(), String> {
    let file = std::fs::File::create(path).map_err(|e| e.to_string())?;
    plan.write_csv(instance, file).map_err(|e| e.to_string())?;
    println!("plan {}", path.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, String> {
    let path = resolve_input(&args.scenario);
    let mut scenario: Scenario = match sim::load_scenario_file(&path) {
        Ok(scenario) => scenario,
        Err(e) => {
            eprintln!("error: cannot load scenario {}: {}", path.display(), e);
            return Ok(EXIT_USAGE);
        }
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(tolerance) = args.tolerance {
        scenario.tolerance = tolerance;
    }
    if let Some(epsilon) = args.epsilon {
        scenario.epsilon = epsilon;
    }
    if let Some(period) = args.period {
        scenario.period = period;
    }
    if let Some(max_retries) = args.max_retries {
        scenario.max_retries = max_retries;
    }
    if let Some(alpha) = args.alpha {
        scenario.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        scenario.beta = beta;
    }

    match scenario.sweep.clone() {
        Some(spec) => {
            let axis: SweepAxis = spec.axis().map_err(|e| e.to_string())?;
            let points = sim::sweep(&scenario, &axis).map_err(|e| e.to_string())?;
            let file = std::fs::File::create(&args.out).map_err(|e| e.to_string())?;
            sim::write_sweep_csv(&points, file).map_err(|e| e.to_string())?;
            for point in &points {
                println!(
                    "{} rejected_pct {:.4} latency_s {:.6} shared_bits {}",
                    point.label,
                    point.report.rejected_pct(),
                    point.report.total_latency,
                    point.report.total_shared_bits
                );
            }
            println!("sweep {}", args.out.display());
            Ok(0)
        }
        None => {
            let mut trace_out = match &args.trace {
                Some(path) => {
                    let mut file = std::fs::File::create(path).map_err(|e| e.to_string())?;
                    use std::io::Write;
                    writeln!(file, "# privmap-sim-trace v1").map_err(|e| e.to_string())?;
                    writeln!(file, "period,request,layer,segment,device,t,nrm,skipped,pinned")
                        .map_err(|e| e.to_string())?;
                    Some((file, 0usize))
                }
                None => None,
            };
            let mut trace_err = None;
            let report = sim::run_scenario_traced(&scenario, trace_out.is_some(), |instance, batch| {
                if let Some((file, period)) = trace_out.as_mut() {
                    use std::io::Write;
                    for event in batch.outcomes.iter().flat_map(|o| o.trace.iter()) {
                        let row = writeln!(
                            file,
                            "{},{},{},{},{},{:.9},{:.9},{},{}",
                            period,
                            event.request,
                            event.layer,
                            event.segment,
                            instance.fleet.device(event.device).name,
                            event.t,
                            event.nrm,
                            event.skipped,
                            event.pinned
                        );
                        if let Err(e) = row {
                            trace_err.get_or_insert(e.to_string());
                        }
                    }
                    *period += 1;
                }
            })
            .map_err(|e| e.to_string())?;
            if let Some(e) = trace_err {
                return Err(e);
            }
            let file = std::fs::File::create(&args.out).map_err(|e| e.to_string())?;
            report.write_csv(file).map_err(|e| e.to_string())?;
            let file = std::fs::File::create(&args.summary).map_err(|e| e.to_string())?;
            report.write_summary_json(file).map_err(|e| e.to_string())?;
            println!(
                "served {} rejected {} rejected_pct {:.4} latency_s {:.6} shared_bits {}",
                report.served,
                report.rejected,
                report.rejected_pct(),
                report.total_latency,
                report.total_shared_bits
            );
            println!("report {}", args.out.display());
            println!("summary {}", args.summary.display());
            Ok(0)
        }
    }
}

fn preset_for_dataset(dataset: &str) -> Option<&'static str> {
    match dataset {
        "MNIST" => Some("LeNet"),
        "CIFAR" => Some("CifarCnn"),
        "CAR" => Some("VGG16"),
        "CELEBA" => Some("VGG19"),
        _ => None,
    }
}

fn cmd_privacy(args: PrivacyArgs) -> Result<u8, String> {
    let curves = load_curves_arg(&args.curves)?;
    let available = privacy::dataset_names(&curves);
    if !available.iter().any(|d| d == &args.dataset) {
        eprintln!(
            "error: unknown dataset {:?}; available: {}",
            args.dataset,
            available.join(", ")
        );
        return Ok(EXIT_USAGE);
    }
    let model = match &args.model {
        Some(name) => load_model_arg(name)?,
        None => match preset_for_dataset(&args.dataset) {
            Some(preset) => model::load_preset(preset).map_err(|e| e.to_string())?,
            None => {
                eprintln!(
                    "error: no preset CNN for dataset {:?}; pass --model",
                    args.dataset
                );
                return Ok(EXIT_USAGE);
            }
        },
    };
    if model.dataset != args.dataset {
        eprintln!(
            "error: model {} classifies {:?}, not {:?}",
            model.name, model.dataset, args.dataset
        );
        return Ok(EXIT_USAGE);
    }
    let policy = PrivacyPolicy::derive(&model, &curves, args.tolerance, args.epsilon)
        .map_err(|e| e.to_string())?;

    let labels: BTreeMap<usize, &str> = curves
        .iter()
        .filter(|c| c.dataset == args.dataset)
        .map(|c| (c.layer_index, c.layer_label.as_str()))
        .collect();
    println!(
        "dataset {} model {} tolerance {} epsilon {}",
        args.dataset, model.name, args.tolerance, args.epsilon
    );
    if policy.split_point > model.layer_count() {
        println!("split_point none (every layer capped)");
    } else {
        println!("split_point {}", policy.split_point);
    }
    println!("capped_layers {}", policy.capped_prefix_len());
    println!("layer,label,kind,maps,cap,devices,note");
    for l in 1..policy.split_point.min(model.layer_count() + 1) {
        let width = model.width(l);
        let (cap, devices) = match policy.cap_for_layer(l) {
            LayerCap::Bounded(cap) => (cap.to_string(), width.div_ceil(cap).to_string()),
            LayerCap::Unbounded => ("unbounded".into(), "1".into()),
        };
        let mut note = if labels.contains_key(&l) { "measured" } else { "inherited" };
        if policy.is_infeasible_layer(l) {
            note = "infeasible";
        }
        println!(
            "{},{},{},{},{},{},{}",
            l,
            labels.get(&l).copied().unwrap_or("-"),
            model.layer(l).kind,
            width,
            cap,
            devices,
            note
        );
    }
    Ok(0)
}

#[derive(serde::Deserialize)]
struct InstanceFile {
    format_version: u32,
    model: String,
    #[serde(default)]
    fleet: Option<PathBuf>,
    #[serde(default = "default_helpers")]
    helpers: usize,
    #[serde(default)]
    mix: Option<String>,
    tolerance: f64,
    #[serde(default = "default_eps")]
    epsilon: f64,
    #[serde(default = "default_requests")]
    requests: usize,
    #[serde(default = "default_word_bits")]
    word_bits: u64,
    #[serde(default = "default_period")]
    period: f64,
}

fn default_helpers() -> usize {
    3
}
fn default_eps() -> f64 {
    privacy::DEFAULT_EPSILON
}
fn default_requests() -> usize {
    1
}
fn default_word_bits() -> u64 {
    model::DEFAULT_WORD_BITS
}
fn default_period() -> f64 {
    1.0
}

fn load_instance_file(path: &Path) -> Result<Instance, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let file: InstanceFile = toml::from_str(&text).map_err(|e| e.to_string())?;
    if file.format_version != 1 {
        return Err(format!(
            "unsupported instance format_version {}",
            file.format_version
        ));
    }
    let model = load_model_arg(&file.model)?;
    let curves = privacy::embedded_curves().to_vec();
    let policy = derive_policy(&model, &curves, file.tolerance, file.epsilon)?;
    let fleet_args = FleetArgs {
        fleet: file.fleet,
        helpers: file.helpers,
        mix: file.mix.unwrap_or_else(|| "rpi3=1.0".into()),
        period: file.period,
    };
    let fleet = build_fleet(&fleet_args, &model)?;
    let source = fleet
        .sources()
        .find(|(_, d)| d.cnn.as_deref() == Some(model.name.as_str()))
        .map(|(id, _)| id)
        .expect("fleet construction guarantees a source");
    let requests = (0..file.requests)
        .map(|id| Request { id, source, model: 0 })
        .collect();
    Instance::new(vec![model], vec![policy], fleet, requests, file.word_bits)
        .map_err(|e| e.to_string())
}

struct CompareRow {
    label: String,
    greedy: Option<f64>,
    exact: Option<f64>,
    exact_note: &'static str,
    greedy_ms: f64,
    exact_ms: f64,
}

fn compare_instance(
    instance: &Instance,
    label: String,
    config: &GreedyConfig,
    limits: &SolveLimits,
) -> Result<CompareRow, String> {
    let started = Instant::now();
    let mut ledger = ResourceLedger::new(&instance.fleet);
    let batch = privmap_core::greedy::run_batch(instance, &mut ledger, config, false);
    let greedy_ms = started.elapsed().as_secs_f64() * 1e3;
    let greedy = (batch.rejected == 0).then_some(batch.total_latency);

    let started = Instant::now();
    let solved = solve_exact(instance, limits).map_err(|e| e.to_string())?;
    let exact_ms = started.elapsed().as_secs_f64() * 1e3;
    let (exact, exact_note) = match solved {
        SolveOutcome::Optimal(plan) => (Some(plan.objective), ""),
        SolveOutcome::Infeasible => (None, "infeasible"),
        SolveOutcome::BudgetExceeded => (None, "budget_exceeded"),
    };
    Ok(CompareRow { label, greedy, exact, exact_note, greedy_ms, exact_ms })
}

fn print_compare_row(row: &CompareRow) {
    let fmt = |v: Option<f64>, note: &str| match v {
        Some(value) => format!("{:.6}", value),
        None if note.is_empty() => "rejected".to_string(),
        None => note.to_string(),
    };
    let gap = match (row.greedy, row.exact) {
        (Some(g), Some(e)) => format!("{:.6}", g - e),
        _ => "-".to_string(),
    };
    println!(
        "{},{},{},{},{:.1},{:.1}",
        row.label,
        fmt(row.greedy, ""),
        fmt(row.exact, row.exact_note),
        gap,
        row.greedy_ms,
        row.exact_ms
    );
}

fn cmd_compare(args: CompareArgs) -> Result<u8, String> {
    let config = GreedyConfig::new(args.alpha, args.beta).map_err(|e| e.to_string())?;
    let limits = SolveLimits { max_nodes: args.max_nodes, ..SolveLimits::default() };
    println!("instance,greedy_s,exact_s,gap_s,greedy_ms,exact_ms");
    match (args.instance, args.random) {
        (Some(path), None) => {
            let instance = load_instance_file(&resolve_input(&path))?;
            let row = compare_instance(&instance, path.display().to_string(), &config, &limits)?;
            print_compare_row(&row);
            if row.greedy.is_none() && row.exact.is_none() {
                return Ok(EXIT_INFEASIBLE);
            }
            Ok(0)
        }
        (None, Some(count)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let params = SynthParams::default();
            let mut feasible = 0usize;
            let mut worst_gap = 0.0f64;
            let mut gap_sum = 0.0f64;
            for k in 0..count {
                let instance = random_instance(&mut rng, &params);
                let row =
                    compare_instance(&instance, format!("random-{}", k), &config, &limits)?;
                print_compare_row(&row);
                if let (Some(greedy), Some(exact)) = (row.greedy, row.exact) {
                    feasible += 1;
                    let gap = greedy - exact;
                    gap_sum += gap;
                    worst_gap = worst_gap.max(gap);
                }
            }
            println!(
                "# both_feasible {} of {}, mean_gap_s {:.6}, worst_gap_s {:.6}",
                feasible,
                count,
                if feasible == 0 { 0.0 } else { gap_sum / feasible as f64 },
                worst_gap
            );
            Ok(0)
        }
        _ => Err("pass exactly one of --instance or --random".into()),
    }
}
