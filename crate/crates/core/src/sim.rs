//! Workload simulation: Poisson arrivals, periodic scheduling with budget
//! resets, retry of rejected requests, and metric aggregation.
//!
//! Arrivals are drawn once from the scenario seed and bucketed into periods.
//! Each period schedules its queue greedily against a fresh ledger; rejected
//! requests re-enter the next period's queue until their retry budget runs
//! out, after which they count toward the rejection percentage.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{self, DeviceClass, DeviceId, Fleet, FleetError, ResourceLedger};
use crate::greedy::{run_batch, BatchResult, GreedyConfig, GreedyError};
use crate::model::{load_model_file, load_preset, CnnSpec, ModelError, DEFAULT_WORD_BITS};
use crate::placement::{Instance, PlacementError, PlacementPlan, Request};
use crate::privacy::{
    self, PrivacyError, PrivacyPolicy, SsimCurve, DEFAULT_EPSILON,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Greedy(#[from] GreedyError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(String),
}

fn default_version() -> u32 {
    1
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_period() -> f64 {
    1.0
}
fn default_retries() -> usize {
    3
}
fn default_alpha() -> f64 {
    0.7
}
fn default_beta() -> f64 {
    0.3
}
fn default_word_bits() -> u64 {
    DEFAULT_WORD_BITS
}

/// A complete experiment description, loadable from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub name: String,
    /// CNN presets or model file paths; with a preset fleet each entry gets
    /// its own source camera.
    pub models: Vec<String>,
    /// Helper count for the preset fleet; ignored with `fleet_file`.
    #[serde(default)]
    pub helpers: usize,
    /// Helper class fractions for the preset fleet, e.g. `{ rpi3 = 1.0 }`.
    #[serde(default)]
    pub mix: BTreeMap<String, f64>,
    #[serde(default)]
    pub fleet_file: Option<PathBuf>,
    pub request_count: usize,
    /// Poisson arrival rate in requests per second.
    pub arrival_rate: f64,
    pub tolerance: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Scheduling period in seconds; budgets reset at every boundary.
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_word_bits")]
    pub word_bits: u64,
    #[serde(default)]
    pub curves_file: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl Scenario {
    /// A single-CNN scenario against a uniform RPi3 fleet; the usual starting
    /// point for tests and sweeps.
    pub fn single_model(name: &str, model: &str, helpers: usize, tolerance: f64) -> Scenario {
        Scenario {
            format_version: 1,
            name: name.into(),
            models: vec![model.into()],
            helpers,
            mix: BTreeMap::from([("rpi3".to_string(), 1.0)]),
            fleet_file: None,
            request_count: 0,
            arrival_rate: 3.0,
            tolerance,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            period: 1.0,
            max_retries: 3,
            alpha: 0.7,
            beta: 0.3,
            word_bits: DEFAULT_WORD_BITS,
            curves_file: None,
            sweep: None,
        }
    }
}

/// Sweep description embedded in a scenario file. `axis` selects which list
/// applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: String,
    #[serde(default)]
    pub tolerance: Vec<f64>,
    #[serde(default)]
    pub fleet_size: Vec<usize>,
    #[serde(default)]
    pub fleet_mix: Vec<BTreeMap<String, f64>>,
    #[serde(default)]
    pub cnn_type: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum SweepAxis {
    Tolerance(Vec<f64>),
    FleetSize(Vec<usize>),
    FleetMix(Vec<BTreeMap<String, f64>>),
    CnnType(Vec<String>),
}

impl SweepSpec {
    pub fn axis(&self) -> Result<SweepAxis, SimError> {
        match self.axis.as_str() {
            "tolerance" => Ok(SweepAxis::Tolerance(self.tolerance.clone())),
            "fleet_size" => Ok(SweepAxis::FleetSize(self.fleet_size.clone())),
            "fleet_mix" => Ok(SweepAxis::FleetMix(self.fleet_mix.clone())),
            "cnn_type" => Ok(SweepAxis::CnnType(self.cnn_type.clone())),
            other => Err(SimError::Invalid(format!("unknown sweep axis {:?}", other))),
        }
    }
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = toml::from_str(&text).map_err(|e| SimError::Parse(e.to_string()))?;
    if scenario.format_version != 1 {
        return Err(SimError::Parse(format!(
            "unsupported scenario format_version {}",
            scenario.format_version
        )));
    }
    Ok(scenario)
}

// --- request stream -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub id: usize,
    pub time: f64,
    /// Index into the scenario's source list.
    pub source_index: usize,
}

/// Draws the arrival stream for a scenario: exponential inter-arrival times
/// at `arrival_rate`, sources uniform.
pub fn generate_requests(scenario: &Scenario, n_sources: usize) -> Result<Vec<Arrival>, SimError> {
    if scenario.arrival_rate <= 0.0 {
        return Err(SimError::Invalid("arrival_rate must be positive".into()));
    }
    if n_sources == 0 {
        return Err(SimError::Invalid("at least one source is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let exp = Exp::new(scenario.arrival_rate)
        .map_err(|e| SimError::Invalid(format!("bad arrival rate: {}", e)))?;
    let mut time = 0.0;
    let mut arrivals = Vec::with_capacity(scenario.request_count);
    for id in 0..scenario.request_count {
        time += exp.sample(&mut rng);
        let source_index = rng.gen_range(0..n_sources);
        arrivals.push(Arrival { id, time, source_index });
    }
    Ok(arrivals)
}

// --- report -----------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PeriodStats {
    pub period: usize,
    pub arrivals: usize,
    pub attempts: usize,
    pub served: usize,
    pub retried: usize,
    pub rejected: usize,
    pub latency: f64,
    pub shared_bits: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CnnStats {
    pub requests: usize,
    pub served: usize,
    pub rejected: usize,
    pub latency: f64,
    pub shared_bits: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimReport {
    pub scenario: String,
    pub request_count: usize,
    pub served: usize,
    pub rejected: usize,
    pub total_latency: f64,
    pub total_shared_bits: u64,
    pub periods: Vec<PeriodStats>,
    pub per_cnn: BTreeMap<String, CnnStats>,
}

impl SimReport {
    /// Fraction of requests never served.
    pub fn rejected_pct(&self) -> f64 {
        if self.request_count == 0 {
            0.0
        } else {
            self.rejected as f64 / self.request_count as f64
        }
    }

    /// One row per period, one per CNN, and a totals row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# privmap-report v1")?;
        writeln!(out, "scope,arrivals,attempts,served,retried,rejected,latency_s,shared_bits")?;
        for p in &self.periods {
            writeln!(
                out,
                "period:{},{},{},{},{},{},{:.6},{}",
                p.period, p.arrivals, p.attempts, p.served, p.retried, p.rejected, p.latency, p.shared_bits
            )?;
        }
        for (cnn, s) in &self.per_cnn {
            writeln!(
                out,
                "cnn:{},{},{},{},0,{},{:.6},{}",
                cnn, s.requests, s.requests, s.served, s.rejected, s.latency, s.shared_bits
            )?;
        }
        writeln!(
            out,
            "total,{},{},{},0,{},{:.6},{}",
            self.request_count,
            self.periods.iter().map(|p| p.attempts).sum::<usize>(),
            self.served,
            self.rejected,
            self.total_latency,
            self.total_shared_bits
        )
    }

    pub fn write_summary_json<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        #[derive(Serialize)]
        struct Summary<'a> {
            scenario: &'a str,
            request_count: usize,
            served: usize,
            rejected: usize,
            rejected_pct: f64,
            total_latency_s: f64,
            total_shared_bits: u64,
            periods: usize,
        }
        let summary = Summary {
            scenario: &self.scenario,
            request_count: self.request_count,
            served: self.served,
            rejected: self.rejected,
            rejected_pct: self.rejected_pct(),
            total_latency_s: self.total_latency,
            total_shared_bits: self.total_shared_bits,
            periods: self.periods.len(),
        };
        serde_json::to_writer_pretty(&mut out, &summary)
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

// --- execution ---------------------------------------------------------------------

fn resolve_model(name: &str) -> Result<CnnSpec, SimError> {
    if name.ends_with(".toml") {
        Ok(load_model_file(Path::new(name))?)
    } else {
        Ok(load_preset(name)?)
    }
}

fn resolve_curves(scenario: &Scenario) -> Result<Vec<SsimCurve>, SimError> {
    match &scenario.curves_file {
        Some(path) => Ok(privacy::load_curves_file(path)?),
        None => Ok(privacy::embedded_curves().to_vec()),
    }
}

fn derive_policy(
    model: &CnnSpec,
    curves: &[SsimCurve],
    tolerance: f64,
    epsilon: f64,
) -> Result<PrivacyPolicy, SimError> {
    match PrivacyPolicy::derive(model, curves, tolerance, epsilon) {
        Ok(policy) => Ok(policy),
        // A dataset without measurements is fine while nothing is restricted.
        Err(PrivacyError::NoCurves { .. }) if tolerance >= 1.0 => {
            Ok(PrivacyPolicy::unrestricted(&model.dataset))
        }
        Err(e) => Err(e.into()),
    }
}

fn mix_fractions(mix: &BTreeMap<String, f64>) -> Result<Vec<(DeviceClass, f64)>, SimError> {
    if mix.is_empty() {
        return Ok(vec![(DeviceClass::Rpi3, 1.0)]);
    }
    let mut fractions = Vec::new();
    for (name, fraction) in mix {
        let class = DeviceClass::from_name(name)
            .ok_or_else(|| SimError::Invalid(format!("unknown device class {:?}", name)))?;
        fractions.push((class, *fraction));
    }
    Ok(fractions)
}

struct Resolved {
    models: Vec<CnnSpec>,
    policies: Vec<PrivacyPolicy>,
    fleet: Fleet,
    /// (device, model index) per camera.
    sources: Vec<(DeviceId, usize)>,
}

fn resolve_scenario(scenario: &Scenario) -> Result<Resolved, SimError> {
    let models: Vec<CnnSpec> = scenario
        .models
        .iter()
        .map(|name| resolve_model(name))
        .collect::<Result<_, _>>()?;
    if models.is_empty() {
        return Err(SimError::Invalid("a scenario needs at least one model".into()));
    }
    let curves = resolve_curves(scenario)?;
    let policies: Vec<PrivacyPolicy> = models
        .iter()
        .map(|m| derive_policy(m, &curves, scenario.tolerance, scenario.epsilon))
        .collect::<Result<_, _>>()?;

    let (fleet, sources) = match &scenario.fleet_file {
        Some(path) => {
            let fleet = fleet::load_fleet_file(path)?;
            let mut sources = Vec::new();
            for (id, dev) in fleet.sources() {
                let cnn = dev.cnn.as_deref().unwrap_or_default();
                let model = models
                    .iter()
                    .position(|m| m.name == cnn)
                    .ok_or_else(|| {
                        SimError::Invalid(format!(
                            "source {:?} is bound to unknown CNN {:?}",
                            dev.name, cnn
                        ))
                    })?;
                sources.push((id, model));
            }
            (fleet, sources)
        }
        None => {
            if scenario.helpers == 0 {
                return Err(SimError::Invalid(
                    "a preset fleet needs a positive helper count".into(),
                ));
            }
            let fractions = mix_fractions(&scenario.mix)?;
            let mut fleet = fleet::load_fleet_preset(&fractions, scenario.helpers, scenario.period)?;
            let mut sources = Vec::new();
            for (k, model) in models.iter().enumerate() {
                let id = fleet.add_source(format!("cam{}", k), &model.name, scenario.period)?;
                sources.push((id, k));
            }
            (fleet, sources)
        }
    };
    if sources.is_empty() {
        return Err(SimError::Invalid("the fleet has no source devices".into()));
    }
    Ok(Resolved { models, policies, fleet, sources })
}

struct Pending {
    arrival: Arrival,
    attempts: usize,
}

/// Runs the scenario to completion. The observer sees every period's
/// instance and scheduling result, in order.
pub fn run_scenario_observed(
    scenario: &Scenario,
    observer: impl FnMut(&Instance, &BatchResult),
) -> Result<SimReport, SimError> {
    run_scenario_traced(scenario, false, observer)
}

/// Like [`run_scenario_observed`], optionally collecting per-segment
/// decision traces in the batch results handed to the observer.
pub fn run_scenario_traced(
    scenario: &Scenario,
    collect_trace: bool,
    mut observer: impl FnMut(&Instance, &BatchResult),
) -> Result<SimReport, SimError> {
    if scenario.period <= 0.0 {
        return Err(SimError::Invalid("period must be positive".into()));
    }
    let resolved = resolve_scenario(scenario)?;
    let config = GreedyConfig::new(scenario.alpha, scenario.beta)?;
    let arrivals = generate_requests(scenario, resolved.sources.len())?;

    let mut by_period: BTreeMap<usize, Vec<Arrival>> = BTreeMap::new();
    for arrival in &arrivals {
        by_period
            .entry((arrival.time / scenario.period) as usize)
            .or_default()
            .push(*arrival);
    }
    let last_arrival_period = by_period.keys().next_back().copied();

    let mut report = SimReport {
        scenario: scenario.name.clone(),
        request_count: scenario.request_count,
        ..SimReport::default()
    };
    for model in &resolved.models {
        report.per_cnn.entry(model.name.clone()).or_default();
    }

    let mut carryover: VecDeque<Pending> = VecDeque::new();
    let mut period = 0usize;
    loop {
        let fresh = by_period.remove(&period).unwrap_or_default();
        let arrived = fresh.len();
        let mut queue: Vec<Pending> = carryover.drain(..).collect();
        queue.extend(fresh.into_iter().map(|arrival| Pending { arrival, attempts: 0 }));

        let arrivals_done = last_arrival_period.is_none_or(|last| period > last);
        if queue.is_empty() {
            if arrivals_done {
                break;
            }
            report.periods.push(PeriodStats { period, arrivals: 0, ..PeriodStats::default() });
            period += 1;
            continue;
        }

        let requests: Vec<Request> = queue
            .iter()
            .map(|pending| {
                let (source, model) = resolved.sources[pending.arrival.source_index];
                Request { id: pending.arrival.id, source, model }
            })
            .collect();
        let instance = Instance::new(
            resolved.models.clone(),
            resolved.policies.clone(),
            resolved.fleet.clone(),
            requests,
            scenario.word_bits,
        )?;
        let mut ledger = ResourceLedger::new(&instance.fleet);
        let batch = run_batch(&instance, &mut ledger, &config, collect_trace);
        observer(&instance, &batch);

        let plan = PlacementPlan::evaluate(&instance, batch.assignment.clone());
        let mut bits_by_request: BTreeMap<usize, u64> = BTreeMap::new();
        for ((r, _, _, _), bits) in &plan.data_volumes {
            *bits_by_request.entry(*r).or_insert(0) += bits;
        }

        let mut stats = PeriodStats { period, arrivals: arrived, attempts: queue.len(), ..PeriodStats::default() };
        for (r, pending) in queue.into_iter().enumerate() {
            let outcome = &batch.outcomes[r];
            let model_name = instance.model_of(r).name.clone();
            let cnn = report.per_cnn.entry(model_name).or_default();
            if pending.attempts == 0 {
                cnn.requests += 1;
            }
            if outcome.rejected {
                if pending.attempts < scenario.max_retries {
                    carryover.push_back(Pending { arrival: pending.arrival, attempts: pending.attempts + 1 });
                    stats.retried += 1;
                } else {
                    stats.rejected += 1;
                    report.rejected += 1;
                    cnn.rejected += 1;
                }
            } else {
                let bits = bits_by_request.get(&r).copied().unwrap_or(0);
                stats.served += 1;
                stats.latency += outcome.latency;
                stats.shared_bits += bits;
                report.served += 1;
                report.total_latency += outcome.latency;
                report.total_shared_bits += bits;
                cnn.served += 1;
                cnn.latency += outcome.latency;
                cnn.shared_bits += bits;
            }
        }
        report.periods.push(stats);
        period += 1;
    }

    Ok(report)
}

pub fn run_scenario(scenario: &Scenario) -> Result<SimReport, SimError> {
    run_scenario_observed(scenario, |_, _| {})
}

/// One sweep point: the varied scenario and its report.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub report: SimReport,
}

/// Runs the base scenario once per axis point, sharing the base seed.
pub fn sweep(base: &Scenario, axis: &SweepAxis) -> Result<Vec<SweepPoint>, SimError> {
    let mut points = Vec::new();
    match axis {
        SweepAxis::Tolerance(values) => {
            for &tolerance in values {
                let mut scenario = base.clone();
                scenario.tolerance = tolerance;
                points.push(SweepPoint {
                    label: format!("tolerance={}", tolerance),
                    report: run_scenario(&scenario)?,
                });
            }
        }
        SweepAxis::FleetSize(values) => {
            for &helpers in values {
                let mut scenario = base.clone();
                scenario.helpers = helpers;
                points.push(SweepPoint {
                    label: format!("helpers={}", helpers),
                    report: run_scenario(&scenario)?,
                });
            }
        }
        SweepAxis::FleetMix(mixes) => {
            for mix in mixes {
                let mut scenario = base.clone();
                scenario.mix = mix.clone();
                let label = mix
                    .iter()
                    .map(|(class, fraction)| format!("{}:{}", class, fraction))
                    .collect::<Vec<_>>()
                    .join("/");
                points.push(SweepPoint {
                    label: format!("mix={}", label),
                    report: run_scenario(&scenario)?,
                });
            }
        }
        SweepAxis::CnnType(names) => {
            for name in names {
                let mut scenario = base.clone();
                scenario.models = vec![name.clone()];
                points.push(SweepPoint {
                    label: format!("cnn={}", name),
                    report: run_scenario(&scenario)?,
                });
            }
        }
    }
    Ok(points)
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "# privmap-sweep v1")?;
    writeln!(out, "label,requests,served,rejected,rejected_pct,total_latency_s,total_shared_bits")?;
    for point in points {
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.6},{}",
            point.label,
            point.report.request_count,
            point.report.served,
            point.report.rejected,
            point.report.rejected_pct(),
            point.report.total_latency,
            point.report.total_shared_bits
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrival_stream_is_seed_deterministic() {
        let mut scenario = Scenario::single_model("t", "LeNet", 4, 1.0);
        scenario.request_count = 50;
        scenario.seed = 9;
        let a = generate_requests(&scenario, 2).unwrap();
        let b = generate_requests(&scenario, 2).unwrap();
        assert_eq!(a, b);
        scenario.seed = 10;
        let c = generate_requests(&scenario, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mean_interarrival_close_to_rate_inverse() {
        let mut scenario = Scenario::single_model("t", "LeNet", 4, 1.0);
        scenario.request_count = 320;
        scenario.arrival_rate = 3.0;
        scenario.seed = 11;
        let arrivals = generate_requests(&scenario, 1).unwrap();
        let mean = arrivals.last().unwrap().time / arrivals.len() as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.1 / 3.0, "mean {}", mean);
    }

    #[test]
    fn empty_request_count_yields_empty_report() {
        let scenario = Scenario::single_model("t", "LeNet", 4, 1.0);
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.request_count, 0);
        assert_eq!(report.served, 0);
        assert_eq!(report.rejected_pct(), 0.0);
        assert!(report.periods.is_empty());
    }

    #[test]
    fn ample_fleet_serves_everything() {
        let mut scenario = Scenario::single_model("t", "LeNet", 6, 1.0);
        scenario.request_count = 40;
        scenario.seed = 3;
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.rejected, 0);
        assert_eq!(report.served, 40);
        assert!(report.total_latency > 0.0);
        assert!(report.total_shared_bits > 0);
    }

    #[test]
    fn cifar_with_seven_helpers_rejects_everything_at_0_4() {
        let mut scenario = Scenario::single_model("t", "CifarCnn", 7, 0.4);
        scenario.request_count = 12;
        scenario.seed = 5;
        scenario.max_retries = 2;
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.rejected_pct(), 1.0);
        // Every request retried to exhaustion: three attempts each.
        let attempts: usize = report.periods.iter().map(|p| p.attempts).sum();
        assert_eq!(attempts, 12 * (scenario.max_retries + 1));
    }

    #[test]
    fn requests_counted_exactly_once() {
        // A fleet just big enough that load spills across periods.
        let mut scenario = Scenario::single_model("t", "CifarCnn", 8, 0.4);
        scenario.request_count = 30;
        scenario.arrival_rate = 6.0;
        scenario.seed = 17;
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.served + report.rejected, 30);
        let serves: usize = report.periods.iter().map(|p| p.served).sum();
        let rejects: usize = report.periods.iter().map(|p| p.rejected).sum();
        assert_eq!(serves, report.served);
        assert_eq!(rejects, report.rejected);
        let cnn_total: usize = report.per_cnn.values().map(|c| c.requests).sum();
        assert_eq!(cnn_total, 30);
        // Totals are exactly the sums of the per-period entries.
        let latency: f64 = report.periods.iter().map(|p| p.latency).sum();
        let bits: u64 = report.periods.iter().map(|p| p.shared_bits).sum();
        assert!((latency - report.total_latency).abs() < 1e-9);
        assert_eq!(bits, report.total_shared_bits);
    }

    #[test]
    fn mixed_workload_tracks_per_cnn_stats() {
        let mut scenario = Scenario::single_model("mixed", "LeNet", 12, 0.8);
        scenario.models = vec!["LeNet".into(), "CifarCnn".into()];
        scenario.request_count = 24;
        scenario.seed = 31;
        let report = run_scenario_observed(&scenario, |instance, batch| {
            for v in instance.validate(&batch.assignment) {
                assert_eq!(v.constraint(), "7e'", "{}", v);
            }
        })
        .unwrap();
        assert_eq!(report.rejected, 0);
        let lenet = &report.per_cnn["LeNet"];
        let cifar = &report.per_cnn["CifarCnn"];
        assert_eq!(lenet.requests + cifar.requests, 24);
        assert!(lenet.requests > 0 && cifar.requests > 0);
        // The deeper network dominates both metrics.
        assert!(cifar.latency > lenet.latency);
        assert!(cifar.shared_bits > lenet.shared_bits);
    }

    #[test]
    fn served_plans_validate_and_bits_match() {
        let mut scenario = Scenario::single_model("t", "CifarCnn", 10, 0.4);
        scenario.request_count = 15;
        scenario.seed = 23;
        let mut recomputed_bits = 0u64;
        let report = run_scenario_observed(&scenario, |instance, batch| {
            let violations = instance.validate(&batch.assignment);
            for v in &violations {
                // Rejected requests leave unassigned slots behind; anything
                // else would be a scheduler bug.
                assert_eq!(v.constraint(), "7e'", "{}", v);
            }
            for r in 0..instance.requests.len() {
                if batch.outcomes[r].rejected {
                    continue;
                }
                for l in 1..=instance.model_of(r).layer_count() {
                    recomputed_bits += instance
                        .volumes_into_layer(&batch.assignment, r, l)
                        .values()
                        .sum::<u64>();
                }
            }
        })
        .unwrap();
        assert_eq!(report.total_shared_bits, recomputed_bits);
        assert!(report.served > 0);
    }

    #[test]
    fn reports_are_bit_identical_for_same_seed() {
        let mut scenario = Scenario::single_model("t", "CifarCnn", 9, 0.6);
        scenario.request_count = 20;
        scenario.seed = 77;
        let render = || {
            let report = run_scenario(&scenario).unwrap();
            let mut csv = Vec::new();
            report.write_csv(&mut csv).unwrap();
            let mut json = Vec::new();
            report.write_summary_json(&mut json).unwrap();
            (csv, json)
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn sweep_single_point_equals_run_scenario() {
        let mut scenario = Scenario::single_model("t", "LeNet", 5, 0.8);
        scenario.request_count = 10;
        scenario.seed = 2;
        let direct = run_scenario(&scenario).unwrap();
        let points = sweep(&scenario, &SweepAxis::Tolerance(vec![0.8])).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].report, direct);
    }

    #[test]
    fn scenario_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.toml");
        std::fs::write(
            &path,
            r#"
format_version = 1
name = "demo"
models = ["CifarCnn"]
helpers = 9
mix = { rpi3 = 0.5, stm32h7 = 0.5 }
request_count = 8
arrival_rate = 3.0
tolerance = 0.4
seed = 4

[sweep]
axis = "tolerance"
tolerance = [0.8, 0.6, 0.4]
"#,
        )
        .unwrap();
        let scenario = load_scenario_file(&path).unwrap();
        assert_eq!(scenario.helpers, 9);
        assert_eq!(scenario.max_retries, 3);
        let axis = scenario.sweep.as_ref().unwrap().axis().unwrap();
        assert!(matches!(axis, SweepAxis::Tolerance(ref v) if v.len() == 3));
    }
}
