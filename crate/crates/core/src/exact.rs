//! Desk-scale exact solver: branch-and-bound over segment assignments.
//!
//! The search walks requests, then layers, then segments, trying devices
//! fastest first. Pinned layers have a single candidate (the source), the
//! first fully connected layer past the split point is branched as one unit
//! onto a single helper, and all other segments branch over helpers. Two
//! prunes apply: the sum of committed layer latencies plus the running
//! latency of the open layer is a lower bound on any completion, and ledger
//! or cap infeasibility cuts the subtree. Untouched helpers with identical
//! capabilities are interchangeable, so only the first of each class is
//! branched on while its twins are idle.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fleet::{DeviceId, DeviceKind, ResourceLedger};
use crate::greedy::{run_batch, GreedyConfig};
use crate::placement::{Assignment, Instance, PlacementPlan};
use crate::privacy::LayerCap;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("instance exceeds solver limits: {0}")]
    LimitsExceeded(String),
}

/// Hard bounds on what the exact solver will even attempt.
#[derive(Debug, Clone, Copy)]
pub struct SolveLimits {
    pub max_devices: usize,
    pub max_layers: usize,
    pub max_segments: usize,
    pub max_requests: usize,
    /// Search nodes (candidate trials) before giving up.
    pub max_nodes: u64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            max_devices: 4,
            max_layers: 6,
            max_segments: 8,
            max_requests: 3,
            max_nodes: 100_000_000,
        }
    }
}

#[derive(Debug)]
pub enum SolveOutcome {
    Optimal(PlacementPlan),
    Infeasible,
    BudgetExceeded,
}

struct Group {
    r: usize,
    l: usize,
    segments: Vec<usize>,
    /// Candidate devices in branching order.
    candidates: Vec<DeviceId>,
    /// Whether this group closes its layer.
    ends_layer: bool,
    /// Static lower bound of this group's whole layer.
    layer_lb: f64,
    /// Segments of this layer are mutually interchangeable, so only
    /// non-decreasing candidate ranks need exploring after the first one.
    ordered: bool,
}

/// Segments of layer `l` can be permuted freely when both their input and
/// their output sides ignore the segment index. The input side is blind when
/// the producer is convolutional (partial maps flow by presence, not index)
/// or lives entirely on one device; the output side is blind when the layer
/// is itself convolutional or its whole output lands on a single device
/// (a pinned or first fully connected consumer).
fn segments_interchangeable(instance: &Instance, r: usize, l: usize) -> bool {
    use crate::model::LayerKind;
    let model = instance.model_of(r);
    let pinned = instance.pinned_layers(r);
    let first_fc = model.first_fc_index();
    let input_blind = l == 1
        || model.layer(l - 1).kind == LayerKind::Conv
        || pinned.contains(&(l - 1))
        || first_fc == Some(l - 1);
    let output_blind = model.layer(l).kind == LayerKind::Conv
        || l == model.layer_count()
        || pinned.contains(&(l + 1))
        || first_fc == Some(l + 1);
    input_blind && output_blind
}

/// Latency no completion of layer `l` can beat.
///
/// Compute side: a pinned layer runs entirely on the source, an atomic
/// (first fully connected) layer on one helper, and a spread layer can
/// neither beat its cost over the pooled helper speed nor one segment on the
/// fastest helper. Transmission side: transfers across the pinned boundary
/// cannot be colocated away, and a capped convolutional producer forces
/// partial maps between at least `devices_required` helpers. Each bound uses
/// the mediant inequality `max(v_i / r_i) >= sum(v) / sum(r)`.
fn layer_lower_bound(
    instance: &Instance,
    r: usize,
    l: usize,
    pinned_layers: &std::collections::BTreeSet<usize>,
    atomic: bool,
) -> f64 {
    use crate::model::LayerKind;

    let model = instance.model_of(r);
    let fleet = &instance.fleet;
    let source = instance.requests[r].source;
    let pinned = pinned_layers.contains(&l);
    let (total_cost, _) = instance.layer_load(r, l);

    let mut speed_sum = 0.0f64;
    let mut speed_max = 0.0f64;
    let mut rate_sum = 0.0f64;
    let mut helper_count = 0usize;
    for (_, spec) in fleet.helpers() {
        speed_sum += spec.speed;
        speed_max = speed_max.max(spec.speed);
        rate_sum += spec.rate;
        helper_count += 1;
    }

    let compute = if pinned {
        total_cost as f64 / fleet.device(source).speed
    } else if speed_max == 0.0 {
        0.0
    } else if atomic {
        total_cost as f64 / speed_max
    } else {
        let max_segment = (1..=instance.segments(r, l))
            .map(|p| instance.segment_load(r, l, p).0)
            .max()
            .unwrap_or(0);
        (total_cost as f64 / speed_sum).max(max_segment as f64 / speed_max)
    };

    // Bits that must enter layer `l` when producer and consumers cannot
    // share a device.
    let producing = l - 1;
    let producer_kind = if producing == 0 { LayerKind::Activation } else { model.layer(producing).kind };
    let b = instance.word_bits;
    let segs = instance.segments(r, l) as u64;
    let inbound = match producer_kind {
        LayerKind::Conv | LayerKind::Activation | LayerKind::MaxPool => {
            model.out_spatial(producing).pow(2) * b * segs
        }
        LayerKind::FullyConnected => model.layer(producing).neurons * b,
    };
    let producer_pinned = producing == 0 || pinned_layers.contains(&producing);

    let transmission = if producer_pinned && !pinned {
        // Single sender (the source) feeding the helpers.
        if helper_count == 0 {
            0.0
        } else {
            inbound as f64 / (helper_count as f64 * fleet.device(source).rate)
        }
    } else if !producer_pinned && pinned {
        // Helpers feeding the source.
        if rate_sum > 0.0 { inbound as f64 / rate_sum } else { 0.0 }
    } else if !producer_pinned && !pinned && rate_sum > 0.0 {
        let policy = instance.policy_of(r);
        match producer_kind {
            LayerKind::Conv => {
                // Every consumer segment receives a partial map from each of
                // the forced senders except at most its own device.
                let forced = policy.devices_required(producing, model.width(producing));
                if forced >= 2 {
                    (inbound * (forced - 1)) as f64 / rate_sum
                } else {
                    0.0
                }
            }
            LayerKind::Activation | LayerKind::MaxPool if atomic => {
                // A single consumer holds every map but may produce at most
                // its own cap of them.
                let travelling = match policy.cap_for_layer(producing) {
                    crate::privacy::LayerCap::Bounded(cap) => segs.saturating_sub(cap),
                    crate::privacy::LayerCap::Unbounded => 0,
                };
                model.out_spatial(producing).pow(2) as f64 * (b * travelling) as f64 / rate_sum
            }
            _ => 0.0,
        }
    } else {
        0.0
    };

    compute + transmission
}

/// Hard bound on devices the incremental layer state can track.
const MAX_DEVICES: usize = 8;

#[derive(Clone, Copy)]
enum Producer {
    Conv { unit: u64 },
    Elementwise { unit: u64 },
    Fc { unit: u64 },
}

/// Running compute and traffic totals of the layer currently being filled,
/// kept in fixed arrays so bound evaluation allocates nothing.
#[derive(Clone, Copy)]
struct OpenLayer {
    cost: [u64; MAX_DEVICES],
    trans: [[u64; MAX_DEVICES]; MAX_DEVICES],
    conv_senders: [bool; MAX_DEVICES],
    producer: Producer,
}

impl OpenLayer {
    fn blank() -> OpenLayer {
        OpenLayer {
            cost: [0; MAX_DEVICES],
            trans: [[0; MAX_DEVICES]; MAX_DEVICES],
            conv_senders: [false; MAX_DEVICES],
            producer: Producer::Elementwise { unit: 0 },
        }
    }
}

struct Search<'a> {
    instance: &'a Instance,
    groups: Vec<Group>,
    /// Summed lower bounds of every layer starting after group `d`.
    future_lb: Vec<f64>,
    ledger: ResourceLedger,
    assignment: Assignment,
    /// Segments held per (request, layer, device), for cap checks.
    held: BTreeMap<(usize, usize, DeviceId), u64>,
    /// Total segments assigned per device, for symmetry breaking.
    touched: Vec<u64>,
    speed: Vec<f64>,
    rate: Vec<f64>,
    open: OpenLayer,
    best_objective: f64,
    best_assignment: Option<Assignment>,
    nodes: u64,
    max_nodes: u64,
    exhausted_budget: bool,
}

impl<'a> Search<'a> {
    fn cap_allows(&self, r: usize, l: usize, device: DeviceId, extra: u64) -> bool {
        if self.instance.fleet.device(device).kind == DeviceKind::Source {
            return true;
        }
        match self.instance.policy_of(r).cap_for_layer(l - 1) {
            LayerCap::Bounded(cap) => {
                self.held.get(&(r, l, device)).copied().unwrap_or(0) + extra <= cap
            }
            LayerCap::Unbounded => true,
        }
    }

    /// Devices with identical capabilities that have not been used yet are
    /// interchangeable; branch only on the first of each class.
    fn symmetric_twin_skipped(&self, device: DeviceId, candidates: &[DeviceId]) -> bool {
        if self.touched[device.0] > 0 {
            return false;
        }
        let spec = self.instance.fleet.device(device);
        candidates.iter().any(|&other| {
            other < device && self.touched[other.0] == 0 && {
                let o = self.instance.fleet.device(other);
                o.kind == spec.kind
                    && o.mem_cap == spec.mem_cap
                    && o.comp_cap == spec.comp_cap
                    && o.bw_cap == spec.bw_cap
                    && o.rate == spec.rate
                    && o.speed == spec.speed
            }
        })
    }

    /// Fresh traffic state for layer `l`, derived from the committed
    /// assignment of layer `l - 1`.
    fn fresh_open(&self, r: usize, l: usize) -> OpenLayer {
        let model = self.instance.model_of(r);
        let b = self.instance.word_bits;
        let mut open = OpenLayer::blank();
        let producer_kind = if l == 1 {
            crate::model::LayerKind::Activation
        } else {
            model.layer(l - 1).kind
        };
        open.producer = match producer_kind {
            crate::model::LayerKind::Conv => {
                for (sender, _) in self.assignment.layer_holders(self.instance, r, l - 1) {
                    open.conv_senders[sender.0] = true;
                }
                Producer::Conv { unit: model.out_spatial(l - 1).pow(2) * b }
            }
            crate::model::LayerKind::Activation | crate::model::LayerKind::MaxPool => {
                Producer::Elementwise { unit: model.out_spatial(l - 1).pow(2) * b }
            }
            crate::model::LayerKind::FullyConnected => {
                Producer::Fc { unit: model.layer(l - 1).neurons * b }
            }
        };
        open
    }

    fn apply_open(&self, open: &mut OpenLayer, r: usize, l: usize, segments: &[usize], device: DeviceId) {
        let j = device.0;
        for &p in segments {
            open.cost[j] += self.instance.segment_load(r, l, p).0;
            match open.producer {
                Producer::Conv { unit } => {
                    for i in 0..self.instance.fleet.len() {
                        if open.conv_senders[i] && i != j {
                            open.trans[i][j] += unit;
                        }
                    }
                }
                Producer::Elementwise { unit } => {
                    if let Some(sender) = self.assignment.holder(self.instance, r, l - 1, p) {
                        if sender.0 != j {
                            open.trans[sender.0][j] += unit;
                        }
                    }
                }
                Producer::Fc { unit } => {
                    if p == 1 {
                        if let Some(sender) = self.assignment.holder(self.instance, r, l - 1, 1) {
                            if sender.0 != j {
                                open.trans[sender.0][j] += unit;
                            }
                        }
                    }
                }
            }
        }
    }

    fn open_latency(&self, open: &OpenLayer) -> f64 {
        let n = self.instance.fleet.len();
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut lat = open.cost[j] as f64 / self.speed[j];
            let mut transmit = 0.0f64;
            for i in 0..n {
                if open.trans[i][j] > 0 {
                    transmit = transmit.max(open.trans[i][j] as f64 / self.rate[i]);
                }
            }
            lat += transmit;
            worst = worst.max(lat);
        }
        worst
    }

    fn dfs(&mut self, depth: usize, committed: f64, opens_layer: bool, min_rank: usize) {
        if self.exhausted_budget {
            return;
        }
        if depth == self.groups.len() {
            if committed < self.best_objective - 1e-12 {
                debug_assert!(
                    (committed - self.instance.total_latency(&self.assignment)).abs() < 1e-9,
                    "incremental layer accounting diverged from the reference formula"
                );
                self.best_objective = committed;
                self.best_assignment = Some(self.assignment.clone());
            }
            return;
        }
        let group = &self.groups[depth];
        let (r, l, ends_layer) = (group.r, group.l, group.ends_layer);
        let layer_lb = group.layer_lb;
        let ordered = group.ordered;
        let segments = group.segments.clone();
        let candidates = group.candidates.clone();
        let mut cost = 0u64;
        let mut mem = 0u64;
        for &p in &segments {
            let (c, m) = self.instance.segment_load(r, l, p);
            cost += c;
            mem += m;
        }
        let base = if opens_layer { self.fresh_open(r, l) } else { self.open };
        let first_rank = if ordered && !opens_layer { min_rank } else { 0 };
        for (rank, device) in candidates
            .iter()
            .copied()
            .enumerate()
            .skip(first_rank)
        {
            self.nodes += 1;
            if self.nodes > self.max_nodes {
                self.exhausted_budget = true;
                return;
            }
            if !self.cap_allows(r, l, device, segments.len() as u64) {
                continue;
            }
            if self.symmetric_twin_skipped(device, &candidates) {
                continue;
            }
            let mut inputs: BTreeMap<DeviceId, u64> = BTreeMap::new();
            for &p in &segments {
                for (sender, bits) in
                    self.instance
                        .segment_input_bits(&self.assignment, r, l, p, device)
                {
                    *inputs.entry(sender).or_insert(0) += bits;
                }
            }
            if self.ledger.reserve(device, mem, cost, &inputs).is_err() {
                continue;
            }
            for &p in &segments {
                self.assignment.set(r, l, p, device);
            }
            *self.held.entry((r, l, device)).or_insert(0) += segments.len() as u64;
            self.touched[device.0] += segments.len() as u64;

            let mut open = base;
            self.apply_open(&mut open, r, l, &segments, device);
            let layer_so_far = self.open_latency(&open);
            // The finished layer can be no cheaper than the larger of its
            // partial latency and its static bound.
            let bound = committed + layer_so_far.max(layer_lb) + self.future_lb[depth];
            if bound < self.best_objective - 1e-12 {
                self.open = open;
                if ends_layer {
                    self.dfs(depth + 1, committed + layer_so_far, true, 0);
                } else {
                    self.dfs(depth + 1, committed, false, rank);
                }
            }

            self.touched[device.0] -= segments.len() as u64;
            if let Some(count) = self.held.get_mut(&(r, l, device)) {
                *count -= segments.len() as u64;
                if *count == 0 {
                    self.held.remove(&(r, l, device));
                }
            }
            for &p in &segments {
                self.assignment.clear(r, l, p);
            }
            self.ledger.release(device, mem, cost, &inputs);
            if self.exhausted_budget {
                return;
            }
        }
    }
}

/// Minimizes total latency over all assignments satisfying the constraint
/// set, proving infeasibility when none exists. The incumbent is seeded with
/// the greedy solution when it finds one, so the returned objective is never
/// worse than greedy's.
pub fn solve_exact(instance: &Instance, limits: &SolveLimits) -> Result<SolveOutcome, SolveError> {
    if instance.fleet.len() > limits.max_devices.min(MAX_DEVICES) {
        return Err(SolveError::LimitsExceeded(format!(
            "{} devices exceed the limit of {}",
            instance.fleet.len(),
            limits.max_devices.min(MAX_DEVICES)
        )));
    }
    if instance.requests.len() > limits.max_requests {
        return Err(SolveError::LimitsExceeded(format!(
            "{} requests exceed the limit of {}",
            instance.requests.len(),
            limits.max_requests
        )));
    }
    for r in 0..instance.requests.len() {
        let model = instance.model_of(r);
        if model.layer_count() > limits.max_layers {
            return Err(SolveError::LimitsExceeded(format!(
                "model {} has {} layers, limit {}",
                model.name,
                model.layer_count(),
                limits.max_layers
            )));
        }
        for l in 1..=model.layer_count() {
            if instance.segments(r, l) > limits.max_segments {
                return Err(SolveError::LimitsExceeded(format!(
                    "model {} layer {} has {} segments, limit {}",
                    model.name,
                    l,
                    instance.segments(r, l),
                    limits.max_segments
                )));
            }
        }
    }

    // Branching order: fastest devices first for early good incumbents.
    let mut helpers: Vec<DeviceId> = instance.fleet.helpers().map(|(id, _)| id).collect();
    helpers.sort_by(|a, b| {
        instance
            .fleet
            .device(*b)
            .speed
            .total_cmp(&instance.fleet.device(*a).speed)
            .then(a.cmp(b))
    });

    let mut groups = Vec::new();
    let mut layer_bounds = Vec::new();
    for r in 0..instance.requests.len() {
        let model = instance.model_of(r);
        let pinned = instance.pinned_layers(r);
        let first_fc = model.first_fc_index();
        let source = instance.requests[r].source;
        for l in 1..=model.layer_count() {
            let segs = instance.segments(r, l);
            if pinned.contains(&l) {
                let lb = layer_lower_bound(instance, r, l, &pinned, false);
                layer_bounds.push((groups.len(), lb));
                groups.push(Group {
                    r,
                    l,
                    segments: (1..=segs).collect(),
                    candidates: vec![source],
                    ends_layer: true,
                    layer_lb: lb,
                    ordered: false,
                });
            } else if first_fc == Some(l) {
                let lb = layer_lower_bound(instance, r, l, &pinned, true);
                layer_bounds.push((groups.len(), lb));
                groups.push(Group {
                    r,
                    l,
                    segments: (1..=segs).collect(),
                    candidates: helpers.clone(),
                    ends_layer: true,
                    layer_lb: lb,
                    ordered: false,
                });
            } else {
                let lb = layer_lower_bound(instance, r, l, &pinned, false);
                layer_bounds.push((groups.len(), lb));
                let ordered = segments_interchangeable(instance, r, l);
                for p in 1..=segs {
                    groups.push(Group {
                        r,
                        l,
                        segments: vec![p],
                        candidates: helpers.clone(),
                        ends_layer: p == segs,
                        layer_lb: lb,
                        ordered,
                    });
                }
            }
        }
    }
    // future_lb[d]: bounds of layers whose first group comes strictly after d.
    let mut future_lb = vec![0.0f64; groups.len() + 1];
    for d in (0..groups.len()).rev() {
        future_lb[d] = future_lb[d + 1]
            + layer_bounds
                .iter()
                .filter(|(start, _)| *start == d + 1)
                .map(|(_, lb)| lb)
                .sum::<f64>();
    }

    // Seed the incumbent with the greedy plan when it serves everything.
    let mut seed_ledger = ResourceLedger::new(&instance.fleet);
    let seeded = run_batch(instance, &mut seed_ledger, &GreedyConfig::default(), false);
    let (mut best_objective, mut best_assignment) = if seeded.rejected == 0 {
        (seeded.total_latency, Some(seeded.assignment))
    } else {
        (f64::INFINITY, None)
    };
    // Nudge the bound so an equal-cost plan found earlier in lexicographic
    // order can replace the greedy seed.
    best_objective += 1e-9;

    let mut search = Search {
        instance,
        groups,
        future_lb,
        ledger: ResourceLedger::new(&instance.fleet),
        assignment: Assignment::empty(instance),
        held: BTreeMap::new(),
        touched: vec![0; instance.fleet.len()],
        speed: instance.fleet.devices().map(|(_, d)| d.speed).collect(),
        rate: instance.fleet.devices().map(|(_, d)| d.rate).collect(),
        open: OpenLayer::blank(),
        best_objective,
        best_assignment: None,
        nodes: 0,
        max_nodes: limits.max_nodes,
        exhausted_budget: false,
    };
    search.dfs(0, 0.0, true, 0);

    if search.exhausted_budget {
        return Ok(SolveOutcome::BudgetExceeded);
    }
    if let Some(assignment) = search.best_assignment.take() {
        best_assignment = Some(assignment);
    }
    match best_assignment {
        Some(assignment) => Ok(SolveOutcome::Optimal(PlacementPlan::evaluate(
            instance, assignment,
        ))),
        None => Ok(SolveOutcome::Infeasible),
    }
}
