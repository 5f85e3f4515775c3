//! Online greedy scheduler.
//!
//! Requests are processed in arrival order against a shared per-period
//! ledger. Within a request, layers are walked front to back and each segment
//! is placed on the candidate with the lowest `nrm` score, a weighted blend
//! of normalized transmit-plus-compute time and normalized inverse remaining
//! bandwidth. Segments of the first layer, the last layer, and the first
//! fully connected layer while it precedes the split point stay on the
//! source. A segment with no feasible candidate rejects the whole request and
//! rolls its reservations back.

use std::collections::BTreeMap;
use std::io::Write;

use std::fmt;

use thiserror::Error;

use crate::fleet::{DeviceId, ResourceKind, ResourceLedger};
use crate::placement::{Assignment, Instance};
use crate::privacy::LayerCap;

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("weights must be non-negative and sum to 1, got alpha={alpha} beta={beta}")]
    BadWeights { alpha: f64, beta: f64 },
    #[error("no helper devices to score")]
    EmptyFleet,
}

/// Deterministic rule applied when two candidates tie on the blended score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestId,
}

#[derive(Debug, Clone, Copy)]
pub struct GreedyConfig {
    /// Weight on normalized latency.
    pub alpha: f64,
    /// Weight on normalized inverse remaining bandwidth.
    pub beta: f64,
    pub tie_break: TieBreak,
    /// Reserved for randomized tie-breaking; the default rule ignores it.
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { alpha: 0.7, beta: 0.3, tie_break: TieBreak::LowestId, seed: 0 }
    }
}

impl GreedyConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<GreedyConfig, GreedyError> {
        if !(0.0..=1.0).contains(&alpha)
            || !(0.0..=1.0).contains(&beta)
            || (alpha + beta - 1.0).abs() > 1e-9
        {
            return Err(GreedyError::BadWeights { alpha, beta });
        }
        Ok(GreedyConfig { alpha, beta, ..GreedyConfig::default() })
    }
}

/// A scored helper, ordered best first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub device: DeviceId,
    /// Transmit-plus-compute estimate in seconds for the segment at hand.
    pub t: f64,
    /// Blended, normalized score; lower is better.
    pub nrm: f64,
}

/// One placement decision, for debugging and golden tests.
#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub request: usize,
    pub layer: usize,
    pub segment: usize,
    pub device: DeviceId,
    pub t: f64,
    pub nrm: f64,
    /// Candidates that failed a condition before this device was accepted.
    pub skipped: usize,
    pub pinned: bool,
}

pub fn write_trace_csv<W: Write>(
    instance: &Instance,
    events: &[TraceEvent],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "# privmap-trace v1")?;
    writeln!(out, "request,layer,segment,device,t,nrm,skipped,pinned")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{:.9},{:.9},{},{}",
            e.request,
            e.layer,
            e.segment,
            instance.fleet.device(e.device).name,
            e.t,
            e.nrm,
            e.skipped,
            e.pinned
        )?;
    }
    Ok(())
}

/// Min-max normalization onto [0, 1]; a degenerate all-equal set maps to 0.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Aggregated input bits per sender if `receiver` were to compute the given
/// segments of layer `l`.
fn group_inputs(
    instance: &Instance,
    assignment: &Assignment,
    r: usize,
    l: usize,
    segments: &[usize],
    receiver: DeviceId,
) -> BTreeMap<DeviceId, u64> {
    let mut inputs: BTreeMap<DeviceId, u64> = BTreeMap::new();
    for &p in segments {
        for (sender, bits) in instance.segment_input_bits(assignment, r, l, p, receiver) {
            *inputs.entry(sender).or_insert(0) += bits;
        }
    }
    inputs
}

fn group_load(instance: &Instance, r: usize, l: usize, segments: &[usize]) -> (u64, u64) {
    let mut cost = 0;
    let mut mem = 0;
    for &p in segments {
        let (c, m) = instance.segment_load(r, l, p);
        cost += c;
        mem += m;
    }
    (cost, mem)
}

/// Scores every helper for the given segments of layer `l` and returns them
/// best first: `nrm(j) = alpha * t~(j) + beta * (1 / remaining bandwidth)~`,
/// both terms min-max normalized over the candidate set. The inverse
/// bandwidth uses `1 / (remaining + 1)` so an exhausted budget stays finite
/// without disturbing the ordering.
pub fn score_candidates(
    instance: &Instance,
    assignment: &Assignment,
    ledger: &ResourceLedger,
    r: usize,
    l: usize,
    segments: &[usize],
    config: &GreedyConfig,
) -> Result<Vec<Candidate>, GreedyError> {
    let helpers: Vec<DeviceId> = instance.fleet.helpers().map(|(id, _)| id).collect();
    if helpers.is_empty() {
        return Err(GreedyError::EmptyFleet);
    }
    let (cost, _) = group_load(instance, r, l, segments);
    let mut t = Vec::with_capacity(helpers.len());
    let mut inv_bw = Vec::with_capacity(helpers.len());
    for &j in &helpers {
        let transmit = group_inputs(instance, assignment, r, l, segments, j)
            .iter()
            .map(|(i, bits)| *bits as f64 / instance.fleet.device(*i).rate)
            .fold(0.0f64, f64::max);
        t.push(transmit + cost as f64 / instance.fleet.device(j).speed);
        inv_bw.push(1.0 / (ledger.remaining_bw(j) as f64 + 1.0));
    }
    let t_norm = min_max(&t);
    let bw_norm = min_max(&inv_bw);
    let mut candidates: Vec<Candidate> = helpers
        .iter()
        .enumerate()
        .map(|(k, &device)| Candidate {
            device,
            t: t[k],
            nrm: config.alpha * t_norm[k] + config.beta * bw_norm[k],
        })
        .collect();
    match config.tie_break {
        TieBreak::LowestId => {
            candidates.sort_by(|a, b| a.nrm.total_cmp(&b.nrm).then(a.device.cmp(&b.device)))
        }
    }
    Ok(candidates)
}

/// Why a request could not be placed, tagged with the constraints that
/// blocked the candidates.
#[derive(Debug, Clone)]
pub struct RejectReason {
    pub layer: usize,
    pub segment: usize,
    pub cause: RejectCause,
}

#[derive(Debug, Clone)]
pub enum RejectCause {
    /// A source-pinned segment did not fit the source or its senders.
    Pinned { resource: ResourceKind },
    /// No helper passed every condition.
    NoCandidate { cap_blocked: usize, fit_blocked: usize, bw_blocked: usize, no_helpers: bool },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {} segment {}: ", self.layer, self.segment)?;
        match &self.cause {
            RejectCause::Pinned { resource } => {
                let tag = match resource {
                    ResourceKind::Memory => "7b",
                    ResourceKind::Compute => "7c",
                    ResourceKind::Bandwidth => "7d",
                };
                write!(f, "source-pinned segment blocked by {} ({})", resource, tag)
            }
            RejectCause::NoCandidate { cap_blocked, fit_blocked, bw_blocked, no_helpers } => {
                if *no_helpers {
                    return write!(f, "no helper devices in the fleet");
                }
                write!(
                    f,
                    "no feasible helper ({} over the privacy cap (7e), {} short on memory/compute (7b/7c), {} out of sender bandwidth (7d))",
                    cap_blocked, fit_blocked, bw_blocked
                )
            }
        }
    }
}

/// Result of placing one request.
#[derive(Debug, Clone)]
pub struct PlacementOutcome {
    pub request: usize,
    pub rejected: bool,
    /// Sum of per-layer latencies; zero for rejected requests.
    pub latency: f64,
    pub per_layer_latency: Vec<f64>,
    pub trace: Vec<TraceEvent>,
    pub reject: Option<RejectReason>,
}

/// Places request `r` against the shared ledger, filling its slots in
/// `assignment`. Rejection rolls back both the ledger and the slots.
pub fn place_request(
    instance: &Instance,
    assignment: &mut Assignment,
    ledger: &mut ResourceLedger,
    r: usize,
    config: &GreedyConfig,
    collect_trace: bool,
) -> PlacementOutcome {
    let model = instance.model_of(r);
    let policy = instance.policy_of(r);
    let source = instance.requests[r].source;
    let request_id = instance.requests[r].id;
    let layers = model.layer_count();
    let pinned = instance.pinned_layers(r);
    let first_fc = model.first_fc_index();

    let snapshot = ledger.clone();
    let mut trace = Vec::new();
    let mut per_layer = Vec::with_capacity(layers);

    let reject = |assignment: &mut Assignment,
                  ledger: &mut ResourceLedger,
                  trace: Vec<TraceEvent>,
                  reason: RejectReason| {
        *ledger = snapshot.clone();
        for l in 1..=layers {
            for p in 1..=instance.segments(r, l) {
                assignment.clear(r, l, p);
            }
        }
        PlacementOutcome {
            request: request_id,
            rejected: true,
            latency: 0.0,
            per_layer_latency: Vec::new(),
            trace,
            reject: Some(reason),
        }
    };

    for l in 1..=layers {
        let segs = instance.segments(r, l);
        if pinned.contains(&l) {
            // Source-pinned segments still need to fit and their senders
            // still spend bandwidth.
            for p in 1..=segs {
                let (cost, mem) = instance.segment_load(r, l, p);
                let inputs = group_inputs(instance, assignment, r, l, &[p], source);
                if let Err(short) = ledger.reserve(source, mem, cost, &inputs) {
                    let reason = RejectReason {
                        layer: l,
                        segment: p,
                        cause: RejectCause::Pinned { resource: short.resource },
                    };
                    return reject(assignment, ledger, trace, reason);
                }
                assignment.set(r, l, p, source);
                if collect_trace {
                    let transmit = inputs
                        .iter()
                        .map(|(i, bits)| *bits as f64 / instance.fleet.device(*i).rate)
                        .fold(0.0f64, f64::max);
                    trace.push(TraceEvent {
                        request: request_id,
                        layer: l,
                        segment: p,
                        device: source,
                        t: transmit + cost as f64 / instance.fleet.device(source).speed,
                        nrm: 0.0,
                        skipped: 0,
                        pinned: true,
                    });
                }
            }
        } else {
            // The first fully connected layer past the split point goes to a
            // single helper as one unit; everything else segment by segment.
            let groups: Vec<Vec<usize>> = if first_fc == Some(l) {
                vec![(1..=segs).collect()]
            } else {
                (1..=segs).map(|p| vec![p]).collect()
            };
            let cap = match policy.cap_for_layer(l - 1) {
                LayerCap::Bounded(cap) => Some(cap),
                LayerCap::Unbounded => None,
            };
            let mut held: BTreeMap<DeviceId, u64> = BTreeMap::new();
            for group in groups {
                let Ok(candidates) =
                    score_candidates(instance, assignment, ledger, r, l, &group, config)
                else {
                    let reason = RejectReason {
                        layer: l,
                        segment: group[0],
                        cause: RejectCause::NoCandidate {
                            cap_blocked: 0,
                            fit_blocked: 0,
                            bw_blocked: 0,
                            no_helpers: true,
                        },
                    };
                    return reject(assignment, ledger, trace, reason);
                };
                let (cost, mem) = group_load(instance, r, l, &group);
                let mut chosen = None;
                let mut skipped = 0usize;
                let (mut cap_blocked, mut fit_blocked, mut bw_blocked) = (0, 0, 0);
                for candidate in &candidates {
                    let j = candidate.device;
                    // cond4: privacy cap after taking this group.
                    if let Some(cap) = cap {
                        if held.get(&j).copied().unwrap_or(0) + group.len() as u64 > cap {
                            skipped += 1;
                            cap_blocked += 1;
                            continue;
                        }
                    }
                    // cond1: remaining memory and compute.
                    if !ledger.fits(j, mem, cost) {
                        skipped += 1;
                        fit_blocked += 1;
                        continue;
                    }
                    // cond2: every sender's remaining bandwidth, enforced
                    // atomically by the reservation itself.
                    let inputs = group_inputs(instance, assignment, r, l, &group, j);
                    if ledger.reserve(j, mem, cost, &inputs).is_err() {
                        skipped += 1;
                        bw_blocked += 1;
                        continue;
                    }
                    chosen = Some(*candidate);
                    break;
                }
                let Some(candidate) = chosen else {
                    let reason = RejectReason {
                        layer: l,
                        segment: group[0],
                        cause: RejectCause::NoCandidate {
                            cap_blocked,
                            fit_blocked,
                            bw_blocked,
                            no_helpers: false,
                        },
                    };
                    return reject(assignment, ledger, trace, reason);
                };
                *held.entry(candidate.device).or_insert(0) += group.len() as u64;
                for &p in &group {
                    assignment.set(r, l, p, candidate.device);
                    if collect_trace {
                        trace.push(TraceEvent {
                            request: request_id,
                            layer: l,
                            segment: p,
                            device: candidate.device,
                            t: candidate.t,
                            nrm: candidate.nrm,
                            skipped,
                            pinned: false,
                        });
                    }
                }
            }
        }
        per_layer.push(instance.layer_latency(assignment, r, l));
    }

    PlacementOutcome {
        request: request_id,
        rejected: false,
        latency: per_layer.iter().sum(),
        per_layer_latency: per_layer,
        trace,
        reject: None,
    }
}

/// Result of scheduling a whole batch against one ledger.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub assignment: Assignment,
    pub outcomes: Vec<PlacementOutcome>,
    pub total_latency: f64,
    pub rejected: usize,
}

/// Processes the instance's requests in order, sharing one ledger.
pub fn run_batch(
    instance: &Instance,
    ledger: &mut ResourceLedger,
    config: &GreedyConfig,
    collect_trace: bool,
) -> BatchResult {
    let mut assignment = Assignment::empty(instance);
    let mut outcomes = Vec::with_capacity(instance.requests.len());
    let mut total_latency = 0.0;
    let mut rejected = 0;
    for r in 0..instance.requests.len() {
        let outcome = place_request(instance, &mut assignment, ledger, r, config, collect_trace);
        if outcome.rejected {
            rejected += 1;
        } else {
            total_latency += outcome.latency;
        }
        outcomes.push(outcome);
    }
    BatchResult { assignment, outcomes, total_latency, rejected }
}
