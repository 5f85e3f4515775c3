//! C ABI for the placement engine.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `pm_*_free` function. Fallible calls return a [`PmStatus`]; on
//! failure, [`pm_last_error`] yields a message for the current thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use privmap_core::exact::{solve_exact, SolveLimits, SolveOutcome};
use privmap_core::fleet::{DeviceClass, DeviceKind, DeviceSpec, Fleet, ResourceLedger};
use privmap_core::greedy::{run_batch, GreedyConfig};
use privmap_core::model::CnnSpec;
use privmap_core::placement::{Instance, PlacementPlan, Request};
use privmap_core::privacy::{self, LayerCap, PrivacyPolicy};
use privmap_core::sim;

/// Status of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    PmOk = 0,
    PmInvalidArgument = 1,
    PmNotFound = 2,
    PmRejected = 3,
    PmInfeasible = 4,
    PmBudgetExceeded = 5,
    PmIoError = 6,
    PmInternalError = 7,
}

/// Metrics of one solved placement.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PmSolveResult {
    /// Objective value in seconds.
    pub objective_s: f64,
    /// Bits exchanged between distinct devices.
    pub shared_bits: u64,
    /// Sum of per-layer latencies of the request, equal to the objective
    /// for single-request solves.
    pub request_latency_s: f64,
}

pub struct PmModel {
    inner: CnnSpec,
}

pub struct PmPolicy {
    inner: PrivacyPolicy,
    dataset: String,
}

pub struct PmFleet {
    inner: Fleet,
    period: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let message = message.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).unwrap_or_default();
    });
}

fn fail(status: PmStatus, message: impl Into<String>) -> PmStatus {
    set_error(message);
    status
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `text` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(text: *const c_char) -> Option<&'a str> {
    if text.is_null() {
        return None;
    }
    CStr::from_ptr(text).to_str().ok()
}

fn guarded<T>(fallback: T, body: impl FnOnce() -> T) -> T {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(value) => value,
        Err(_) => {
            set_error("internal panic");
            fallback
        }
    }
}

// --- models -------------------------------------------------------------------

/// Loads a built-in CNN preset by name; null on failure.
///
/// # Safety
/// `name` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pm_model_preset(name: *const c_char) -> *mut PmModel {
    guarded(ptr::null_mut(), || {
        let Some(name) = read_str(name) else {
            set_error("name must be a valid string");
            return ptr::null_mut();
        };
        match privmap_core::model::load_preset(name) {
            Ok(inner) => Box::into_raw(Box::new(PmModel { inner })),
            Err(e) => {
                set_error(e.to_string());
                ptr::null_mut()
            }
        }
    })
}

/// Loads a model description file; null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pm_model_from_file(path: *const c_char) -> *mut PmModel {
    guarded(ptr::null_mut(), || {
        let Some(path) = read_str(path) else {
            set_error("path must be a valid string");
            return ptr::null_mut();
        };
        match privmap_core::model::load_model_file(Path::new(path)) {
            Ok(inner) => Box::into_raw(Box::new(PmModel { inner })),
            Err(e) => {
                set_error(e.to_string());
                ptr::null_mut()
            }
        }
    })
}

/// # Safety
/// `model` must come from `pm_model_preset` or `pm_model_from_file` and not
/// already be freed.
#[no_mangle]
pub unsafe extern "C" fn pm_model_free(model: *mut PmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_model_layer_count(model: *const PmModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.layer_count()
}

/// Total multiplications of one inference.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_model_total_multiplications(model: *const PmModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    let cnn = &(*model).inner;
    (1..=cnn.layer_count())
        .map(|l| {
            if cnn.layer(l).is_fc() {
                cnn.segment_cost(l)
            } else {
                cnn.segment_cost(l) * cnn.segments_at(l)
            }
        })
        .sum()
}

// --- policies -----------------------------------------------------------------

/// Derives the feature-map caps and split point for `model` at the given
/// tolerated inversion SSIM, using the embedded measurement table. Null on
/// failure; a tolerance of 1.0 succeeds even for unmeasured datasets.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_policy_derive(
    model: *const PmModel,
    tolerance: f64,
    epsilon: f64,
) -> *mut PmPolicy {
    guarded(ptr::null_mut(), || {
        if model.is_null() {
            set_error("model must not be null");
            return ptr::null_mut();
        }
        let cnn = &(*model).inner;
        let derived = match PrivacyPolicy::derive(cnn, privacy::embedded_curves(), tolerance, epsilon)
        {
            Ok(policy) => policy,
            Err(privacy::PrivacyError::NoCurves { .. }) if tolerance >= 1.0 => {
                PrivacyPolicy::unrestricted(&cnn.dataset)
            }
            Err(e) => {
                set_error(e.to_string());
                return ptr::null_mut();
            }
        };
        Box::into_raw(Box::new(PmPolicy { inner: derived, dataset: cnn.dataset.clone() }))
    })
}

/// # Safety
/// `policy` must come from `pm_policy_derive` and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn pm_policy_free(policy: *mut PmPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// First 1-based layer whose full output may sit on one device; one past the
/// last layer when every layer stays capped.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_policy_split_point(policy: *const PmPolicy) -> usize {
    if policy.is_null() {
        return 0;
    }
    (*policy).inner.split_point
}

/// Cap on how many maps of producing layer `layer` one helper may receive;
/// 0 means unbounded.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_policy_layer_cap(policy: *const PmPolicy, layer: usize) -> u64 {
    if policy.is_null() {
        return 0;
    }
    match (*policy).inner.cap_for_layer(layer) {
        LayerCap::Bounded(cap) => cap,
        LayerCap::Unbounded => 0,
    }
}

// --- fleets ---------------------------------------------------------------------

/// A fleet whose per-period budgets are scaled by `period` seconds.
#[no_mangle]
pub extern "C" fn pm_fleet_new(period: f64) -> *mut PmFleet {
    if !(period > 0.0) {
        set_error("period must be positive");
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(PmFleet { inner: Fleet::new(), period }))
}

/// # Safety
/// `fleet` must come from `pm_fleet_new` and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn pm_fleet_free(fleet: *mut PmFleet) {
    if !fleet.is_null() {
        drop(Box::from_raw(fleet));
    }
}

/// Adds `count` helpers of a device class ("rpi3", "lg_nexus", "stm32h7").
///
/// # Safety
/// `fleet` must be a live handle and `class_name` a valid string.
#[no_mangle]
pub unsafe extern "C" fn pm_fleet_add_helpers(
    fleet: *mut PmFleet,
    class_name: *const c_char,
    count: usize,
) -> PmStatus {
    guarded(PmStatus::PmInternalError, || {
        if fleet.is_null() {
            return fail(PmStatus::PmInvalidArgument, "fleet must not be null");
        }
        let Some(name) = read_str(class_name) else {
            return fail(PmStatus::PmInvalidArgument, "class_name must be a valid string");
        };
        let Some(class) = DeviceClass::from_name(name) else {
            return fail(
                PmStatus::PmNotFound,
                format!("unknown device class {:?}; expected rpi3, lg_nexus or stm32h7", name),
            );
        };
        let fleet = &mut *fleet;
        let existing = fleet.inner.helper_count();
        for k in 0..count {
            let spec = DeviceSpec::of_class(
                format!("{}-{}", class.name(), existing + k),
                class,
                DeviceKind::Helper,
                fleet.period,
            );
            if let Err(e) = fleet.inner.push(spec) {
                return fail(PmStatus::PmInvalidArgument, e.to_string());
            }
        }
        PmStatus::PmOk
    })
}

/// Adds one source camera bound to the named CNN.
///
/// # Safety
/// `fleet` must be a live handle and `cnn_name` a valid string.
#[no_mangle]
pub unsafe extern "C" fn pm_fleet_add_source(
    fleet: *mut PmFleet,
    cnn_name: *const c_char,
) -> PmStatus {
    guarded(PmStatus::PmInternalError, || {
        if fleet.is_null() {
            return fail(PmStatus::PmInvalidArgument, "fleet must not be null");
        }
        let Some(cnn) = read_str(cnn_name) else {
            return fail(PmStatus::PmInvalidArgument, "cnn_name must be a valid string");
        };
        let fleet = &mut *fleet;
        let name = format!("cam{}", fleet.inner.sources().count());
        let period = fleet.period;
        match fleet.inner.add_source(name, cnn, period) {
            Ok(_) => PmStatus::PmOk,
            Err(e) => fail(PmStatus::PmInvalidArgument, e.to_string()),
        }
    })
}

// --- solving --------------------------------------------------------------------

unsafe fn build_instance(
    model: *const PmModel,
    policy: *const PmPolicy,
    fleet: *const PmFleet,
) -> Result<Instance, (PmStatus, String)> {
    if model.is_null() || policy.is_null() || fleet.is_null() {
        return Err((PmStatus::PmInvalidArgument, "handles must not be null".into()));
    }
    let cnn = (*model).inner.clone();
    let policy_ref = &*policy;
    if policy_ref.dataset != cnn.dataset {
        return Err((
            PmStatus::PmInvalidArgument,
            format!(
                "policy derived for dataset {:?} cannot guard {:?}",
                policy_ref.dataset, cnn.dataset
            ),
        ));
    }
    let fleet = (*fleet).inner.clone();
    let source = fleet
        .sources()
        .find(|(_, d)| d.cnn.as_deref() == Some(cnn.name.as_str()))
        .map(|(id, _)| id)
        .ok_or_else(|| {
            (
                PmStatus::PmInvalidArgument,
                format!("fleet has no source bound to {:?}", cnn.name),
            )
        })?;
    Instance::new(
        vec![cnn],
        vec![policy_ref.inner.clone()],
        fleet,
        vec![Request { id: 0, source, model: 0 }],
        privmap_core::model::DEFAULT_WORD_BITS,
    )
    .map_err(|e| (PmStatus::PmInvalidArgument, e.to_string()))
}

fn fill_result(instance: &Instance, plan: &PlacementPlan, out: &mut PmSolveResult) {
    out.objective_s = plan.objective;
    out.shared_bits = plan.shared_bits();
    out.request_latency_s = (1..=instance.model_of(0).layer_count())
        .map(|l| plan.per_layer_latency.get(&(0, l)).copied().unwrap_or(0.0))
        .sum();
}

/// Places one request of `model` with the online scheduler. Privacy or
/// resource shortfalls surface as `PM_REJECTED` with a diagnostic in
/// `pm_last_error`.
///
/// # Safety
/// All handles must be live; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn pm_solve_greedy(
    model: *const PmModel,
    policy: *const PmPolicy,
    fleet: *const PmFleet,
    alpha: f64,
    beta: f64,
    out: *mut PmSolveResult,
) -> PmStatus {
    guarded(PmStatus::PmInternalError, || {
        if out.is_null() {
            return fail(PmStatus::PmInvalidArgument, "out must not be null");
        }
        let instance = match build_instance(model, policy, fleet) {
            Ok(instance) => instance,
            Err((status, message)) => return fail(status, message),
        };
        let config = match GreedyConfig::new(alpha, beta) {
            Ok(config) => config,
            Err(e) => return fail(PmStatus::PmInvalidArgument, e.to_string()),
        };
        let mut ledger = ResourceLedger::new(&instance.fleet);
        let batch = run_batch(&instance, &mut ledger, &config, false);
        if batch.rejected > 0 {
            let reason = batch.outcomes[0]
                .reject
                .as_ref()
                .map(|r| r.to_string())
                .unwrap_or_else(|| "request rejected".into());
            return fail(PmStatus::PmRejected, reason);
        }
        let plan = PlacementPlan::evaluate(&instance, batch.assignment);
        fill_result(&instance, &plan, &mut *out);
        PmStatus::PmOk
    })
}

/// Solves one request of `model` to optimality within desk-scale limits.
/// A `max_nodes` of zero keeps the default search budget.
///
/// # Safety
/// All handles must be live; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn pm_solve_exact(
    model: *const PmModel,
    policy: *const PmPolicy,
    fleet: *const PmFleet,
    max_nodes: u64,
    out: *mut PmSolveResult,
) -> PmStatus {
    guarded(PmStatus::PmInternalError, || {
        if out.is_null() {
            return fail(PmStatus::PmInvalidArgument, "out must not be null");
        }
        let instance = match build_instance(model, policy, fleet) {
            Ok(instance) => instance,
            Err((status, message)) => return fail(status, message),
        };
        let limits = SolveLimits {
            max_nodes: if max_nodes == 0 { SolveLimits::default().max_nodes } else { max_nodes },
            ..SolveLimits::default()
        };
        match solve_exact(&instance, &limits) {
            Ok(SolveOutcome::Optimal(plan)) => {
                fill_result(&instance, &plan, &mut *out);
                PmStatus::PmOk
            }
            Ok(SolveOutcome::Infeasible) => fail(
                PmStatus::PmInfeasible,
                "no assignment satisfies the constraint set",
            ),
            Ok(SolveOutcome::BudgetExceeded) => {
                fail(PmStatus::PmBudgetExceeded, "node budget exhausted")
            }
            Err(e) => fail(PmStatus::PmInvalidArgument, e.to_string()),
        }
    })
}

// --- simulation -------------------------------------------------------------------

/// Runs a scenario file and writes its CSV report; `summary_json_path` may
/// be null, `seed_override` below zero keeps the file's seed.
///
/// # Safety
/// Paths must be valid NUL-terminated strings (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn pm_run_scenario_file(
    scenario_path: *const c_char,
    report_csv_path: *const c_char,
    summary_json_path: *const c_char,
    seed_override: i64,
) -> PmStatus {
    guarded(PmStatus::PmInternalError, || {
        let (Some(scenario_path), Some(report_path)) =
            (read_str(scenario_path), read_str(report_csv_path))
        else {
            return fail(PmStatus::PmInvalidArgument, "paths must be valid strings");
        };
        let mut scenario = match sim::load_scenario_file(Path::new(scenario_path)) {
            Ok(scenario) => scenario,
            Err(e) => return fail(PmStatus::PmIoError, e.to_string()),
        };
        if seed_override >= 0 {
            scenario.seed = seed_override as u64;
        }
        let report = match sim::run_scenario(&scenario) {
            Ok(report) => report,
            Err(e) => return fail(PmStatus::PmInvalidArgument, e.to_string()),
        };
        let write = |path: &str| -> Result<std::fs::File, String> {
            std::fs::File::create(path).map_err(|e| e.to_string())
        };
        match write(report_path).and_then(|f| report.write_csv(f).map_err(|e| e.to_string())) {
            Ok(()) => {}
            Err(e) => return fail(PmStatus::PmIoError, e),
        }
        if let Some(summary_path) = read_str(summary_json_path) {
            match write(summary_path)
                .and_then(|f| report.write_summary_json(f).map_err(|e| e.to_string()))
            {
                Ok(()) => {}
                Err(e) => return fail(PmStatus::PmIoError, e),
            }
        }
        PmStatus::PmOk
    })
}
