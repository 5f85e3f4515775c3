//! Privacy policy derivation from inversion-attack measurements.
//!
//! The input data is a set of curves, one per measured layer, mapping
//! "feature maps held by a single device" to the SSIM of the image an
//! attacker reconstructs from those maps. From a tolerated SSIM the policy
//! derives, per layer, the largest number of that layer's output maps any
//! single helper may receive, and the split point `SP`: the shallowest layer
//! whose full output can no longer be inverted above the tolerance. Layers at
//! or past `SP` need no cap at all.
//!
//! Caps are indexed by the *producing* layer. A device computing layer `l+1`
//! receives maps of layer `l`, so the cap that limits it is `cap_for_layer(l)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::CnnSpec;

/// Comparison slack applied when testing a measured SSIM against the
/// tolerance, so borderline table entries (e.g. 0.41 against 0.4) qualify.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("curve {dataset}/{layer_label} has no entries")]
    EmptyCurve { dataset: String, layer_label: String },
    #[error("tolerance must lie in (0, 1], got {0}")]
    InvalidTolerance(f64),
    #[error("no inversion curves available for dataset {dataset:?} (available: {available})")]
    NoCurves { dataset: String, available: String },
    #[error("curve {dataset}/{layer_label} is indexed at layer {index}, but the CNN has {layers} layers")]
    IndexOutOfRange { dataset: String, layer_label: String, index: usize, layers: usize },
    #[error("invalid curve data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Measured inversion quality for one layer of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimCurve {
    pub dataset: String,
    pub layer_label: String,
    /// 1-based position of the measured layer in the associated CNN.
    pub layer_index: usize,
    /// filters-per-device -> recovered SSIM in [0, 1].
    pub entries: BTreeMap<u64, f64>,
}

impl SsimCurve {
    /// SSIM when a single device receives every measured map, i.e. the entry
    /// at the largest measured filter count.
    pub fn full_output_ssim(&self) -> Option<f64> {
        self.entries.iter().next_back().map(|(_, s)| *s)
    }
}

/// Result of capping one curve: the filters-per-device bound and whether the
/// tolerance is attainable at all at the measured granularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxFilters {
    pub count: u64,
    pub satisfied: bool,
}

/// Largest measured filters-per-device whose SSIM stays within
/// `tolerance + epsilon`. Falls back to the smallest measured count, marked
/// unsatisfied, when even that leaks too much.
pub fn max_filters(
    curve: &SsimCurve,
    tolerance: f64,
    epsilon: f64,
) -> Result<MaxFilters, PrivacyError> {
    if curve.entries.is_empty() {
        return Err(PrivacyError::EmptyCurve {
            dataset: curve.dataset.clone(),
            layer_label: curve.layer_label.clone(),
        });
    }
    if !(tolerance > 0.0 && tolerance <= 1.0) {
        return Err(PrivacyError::InvalidTolerance(tolerance));
    }
    let bound = tolerance + epsilon;
    let best = curve
        .entries
        .iter()
        .rev()
        .find(|(_, ssim)| **ssim <= bound)
        .map(|(count, _)| *count);
    Ok(match best {
        Some(count) => MaxFilters { count, satisfied: true },
        None => MaxFilters {
            count: *curve.entries.keys().next().unwrap(),
            satisfied: false,
        },
    })
}

/// Shallowest measured layer whose full output already inverts at or below
/// `tolerance + epsilon`. Layers before it need caps; if no curve qualifies
/// every layer is capped and the split point is `layer_count + 1`.
pub fn split_point(
    curves: &[SsimCurve],
    tolerance: f64,
    epsilon: f64,
    layer_count: usize,
) -> usize {
    let bound = tolerance + epsilon;
    curves
        .iter()
        .filter(|c| c.full_output_ssim().is_some_and(|s| s <= bound))
        .map(|c| c.layer_index)
        .min()
        .unwrap_or(layer_count + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerCap {
    Bounded(u64),
    Unbounded,
}

impl LayerCap {
    pub fn allows(&self, maps: u64) -> bool {
        match self {
            LayerCap::Bounded(cap) => maps <= *cap,
            LayerCap::Unbounded => true,
        }
    }
}

/// Derived placement restrictions for one CNN at one tolerated SSIM.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyPolicy {
    pub dataset: String,
    pub tolerance: f64,
    pub epsilon: f64,
    /// First layer index whose full output is safe to colocate.
    pub split_point: usize,
    /// Binding caps by producing layer; layers missing here are unbounded.
    caps: BTreeMap<usize, u64>,
    /// Layers where even the smallest measured granularity leaks more than
    /// tolerated; their caps are best-effort.
    infeasible_layers: BTreeSet<usize>,
}

impl PrivacyPolicy {
    /// A policy that restricts nothing, used when privacy is out of scope.
    pub fn unrestricted(dataset: &str) -> Self {
        PrivacyPolicy {
            dataset: dataset.to_string(),
            tolerance: 1.0,
            epsilon: DEFAULT_EPSILON,
            split_point: 1,
            caps: BTreeMap::new(),
            infeasible_layers: BTreeSet::new(),
        }
    }

    /// Derives caps and split point for `cnn` from the curves measured on its
    /// dataset. Unmeasured layers before the split point inherit the
    /// device-count requirement of the nearest measured layer (preceding
    /// where one exists), scaled to their own width.
    pub fn derive(
        cnn: &CnnSpec,
        curves: &[SsimCurve],
        tolerance: f64,
        epsilon: f64,
    ) -> Result<PrivacyPolicy, PrivacyError> {
        if !(tolerance > 0.0 && tolerance <= 1.0) {
            return Err(PrivacyError::InvalidTolerance(tolerance));
        }
        let mut own: Vec<&SsimCurve> = curves.iter().filter(|c| c.dataset == cnn.dataset).collect();
        if own.is_empty() {
            let mut names: Vec<&str> = curves.iter().map(|c| c.dataset.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            return Err(PrivacyError::NoCurves {
                dataset: cnn.dataset.clone(),
                available: names.join(", "),
            });
        }
        own.sort_by_key(|c| c.layer_index);
        let layers = cnn.layer_count();
        for curve in &own {
            if curve.layer_index == 0 || curve.layer_index > layers {
                return Err(PrivacyError::IndexOutOfRange {
                    dataset: curve.dataset.clone(),
                    layer_label: curve.layer_label.clone(),
                    index: curve.layer_index,
                    layers,
                });
            }
        }

        let sp = split_point(
            &own.iter().map(|c| (*c).clone()).collect::<Vec<_>>(),
            tolerance,
            epsilon,
            layers,
        );

        let mut measured: BTreeMap<usize, MaxFilters> = BTreeMap::new();
        for curve in &own {
            measured.insert(curve.layer_index, max_filters(curve, tolerance, epsilon)?);
        }

        let mut caps = BTreeMap::new();
        let mut infeasible = BTreeSet::new();
        for l in 1..sp.min(layers + 1) {
            let width = cnn.width(l);
            let cap = match measured.get(&l) {
                Some(mf) => {
                    if !mf.satisfied {
                        infeasible.insert(l);
                    }
                    mf.count
                }
                None => {
                    // Nearest measured layer, preferring shallower ones since
                    // shallow layers leak at least as much.
                    let donor = measured
                        .range(..l)
                        .next_back()
                        .or_else(|| measured.range(l + 1..).next());
                    match donor {
                        Some((dl, mf)) => {
                            let donor_width = cnn.width(*dl);
                            let devices = donor_width.div_ceil(mf.count).max(1);
                            width.div_ceil(devices).max(1)
                        }
                        None => width,
                    }
                }
            };
            if cap < width {
                caps.insert(l, cap);
            }
        }

        Ok(PrivacyPolicy {
            dataset: cnn.dataset.clone(),
            tolerance,
            epsilon,
            split_point: sp,
            caps,
            infeasible_layers: infeasible,
        })
    }

    /// Cap on how many of layer `l`'s output maps one helper may receive
    /// while computing layer `l + 1`.
    pub fn cap_for_layer(&self, l: usize) -> LayerCap {
        if l >= self.split_point {
            return LayerCap::Unbounded;
        }
        match self.caps.get(&l) {
            Some(cap) => LayerCap::Bounded(*cap),
            None => LayerCap::Unbounded,
        }
    }

    /// Helpers needed to spread layer `l`'s output (`width` maps) under this
    /// policy; 1 when the layer is uncapped.
    pub fn devices_required(&self, l: usize, width: u64) -> u64 {
        match self.cap_for_layer(l) {
            LayerCap::Bounded(cap) => width.div_ceil(cap),
            LayerCap::Unbounded => 1,
        }
    }

    pub fn capped_layers(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.caps.iter().map(|(l, c)| (*l, *c))
    }

    /// Number of leading layers that carry a cap.
    pub fn capped_prefix_len(&self) -> usize {
        self.split_point.saturating_sub(1)
    }

    pub fn is_infeasible_layer(&self, l: usize) -> bool {
        self.infeasible_layers.contains(&l)
    }

    pub fn infeasible_layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.infeasible_layers.iter().copied()
    }
}

// --- curve loading ----------------------------------------------------------

/// Parses curves from CSV with columns
/// `dataset,layer_label,layer_index,filters,ssim`. Lines starting with `#`
/// are comments; absent (dataset, layer, filters) combinations are treated as
/// not measured.
pub fn load_curves<R: Read>(reader: R) -> Result<Vec<SsimCurve>, PrivacyError> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut grouped: BTreeMap<(String, usize, String), BTreeMap<u64, f64>> = BTreeMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| PrivacyError::Invalid(e.to_string()))?;
        if record.len() != 5 {
            return Err(PrivacyError::Invalid(format!(
                "expected 5 columns, got {}",
                record.len()
            )));
        }
        let dataset = record[0].to_string();
        let label = record[1].to_string();
        let index: usize = record[2]
            .parse()
            .map_err(|_| PrivacyError::Invalid(format!("bad layer_index {:?}", &record[2])))?;
        let filters: u64 = record[3]
            .parse()
            .map_err(|_| PrivacyError::Invalid(format!("bad filters {:?}", &record[3])))?;
        let ssim: f64 = record[4]
            .parse()
            .map_err(|_| PrivacyError::Invalid(format!("bad ssim {:?}", &record[4])))?;
        if filters == 0 {
            return Err(PrivacyError::Invalid("filters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&ssim) {
            return Err(PrivacyError::Invalid(format!("ssim {} outside [0, 1]", ssim)));
        }
        grouped
            .entry((dataset, index, label))
            .or_default()
            .insert(filters, ssim);
    }
    Ok(grouped
        .into_iter()
        .map(|((dataset, layer_index, layer_label), entries)| SsimCurve {
            dataset,
            layer_label,
            layer_index,
            entries,
        })
        .collect())
}

pub fn load_curves_file(path: &Path) -> Result<Vec<SsimCurve>, PrivacyError> {
    let file = std::fs::File::open(path)?;
    load_curves(file)
}

static EMBEDDED: OnceLock<Vec<SsimCurve>> = OnceLock::new();

/// The curves shipped with the crate.
pub fn embedded_curves() -> &'static [SsimCurve] {
    EMBEDDED.get_or_init(|| {
        load_curves(include_str!("../data/ssim_curves.csv").as_bytes())
            .expect("embedded curve data parses")
    })
}

/// Distinct dataset names present in a curve set.
pub fn dataset_names(curves: &[SsimCurve]) -> Vec<String> {
    let mut names: Vec<String> = curves.iter().map(|c| c.dataset.clone()).collect();
    names.sort_unstable();
    names.dedup();
    names
}
