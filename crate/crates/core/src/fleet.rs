//! Heterogeneous participants and their per-period resource budgets.
//!
//! Budgets are expressed per scheduling period: a device with speed `e`
//! multiplications per second and a period of one second may absorb `e`
//! multiplications before the next budget reset. Memory and traffic are
//! counted in bits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("composition fractions must be non-negative and sum to 1, got {0}")]
    BadMix(f64),
    #[error("device {0:?} appears twice")]
    DuplicateName(String),
    #[error("invalid fleet: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse fleet file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(pub usize);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Source,
    Helper,
}

/// Hardware families used by the built-in fleets. Speeds follow the
/// clock-cycles-over-ten convention: a 1.4 GHz quad-core board sustains
/// roughly 5.6e8 multiplications per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    /// Raspberry Pi 3B+: 1 GB RAM, 802.11n radio.
    Rpi3,
    /// LG Nexus 5: 2 GB RAM, 802.11n radio.
    LgNexus,
    /// STM32H7-class microcontroller: 1 MB RAM, 802.11ah radio.
    Stm32h7,
}

impl DeviceClass {
    /// (multiplications/s, memory bits, transmission bits/s)
    pub fn characteristics(self) -> (f64, u64, f64) {
        match self {
            DeviceClass::Rpi3 => (560e6, 8_000_000_000, 72.2e6),
            DeviceClass::LgNexus => (800e6, 16_000_000_000, 72.2e6),
            DeviceClass::Stm32h7 => (40e6, 8_000_000, 7.2e6),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceClass::Rpi3 => "rpi3",
            DeviceClass::LgNexus => "lg_nexus",
            DeviceClass::Stm32h7 => "stm32h7",
        }
    }

    pub fn from_name(name: &str) -> Option<DeviceClass> {
        match name {
            "rpi3" => Some(DeviceClass::Rpi3),
            "lg_nexus" => Some(DeviceClass::LgNexus),
            "stm32h7" => Some(DeviceClass::Stm32h7),
            _ => None,
        }
    }
}

/// One participant. `comp_cap` and `bw_cap` are per-period budgets derived
/// from `speed` and `rate` at fleet construction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    pub kind: DeviceKind,
    /// Memory budget in bits.
    pub mem_cap: u64,
    /// Compute budget in multiplications per period.
    pub comp_cap: u64,
    /// Outbound traffic budget in bits per period.
    pub bw_cap: u64,
    /// Transmission rate in bits per second.
    pub rate: f64,
    /// Multiplications per second.
    pub speed: f64,
    /// Sources bind to the single CNN they request.
    pub cnn: Option<String>,
}

impl DeviceSpec {
    pub fn of_class(
        name: impl Into<String>,
        class: DeviceClass,
        kind: DeviceKind,
        period: f64,
    ) -> Self {
        let (speed, mem, rate) = class.characteristics();
        DeviceSpec {
            name: name.into(),
            kind,
            mem_cap: mem,
            comp_cap: (speed * period).round() as u64,
            bw_cap: (rate * period).round() as u64,
            rate,
            speed,
            cnn: None,
        }
    }

    fn validate(&self) -> Result<(), FleetError> {
        if self.mem_cap == 0 || self.comp_cap == 0 || self.bw_cap == 0 {
            return Err(FleetError::Invalid(format!(
                "device {:?} must have strictly positive budgets",
                self.name
            )));
        }
        if !(self.rate > 0.0) || !(self.speed > 0.0) {
            return Err(FleetError::Invalid(format!(
                "device {:?} must have strictly positive rate and speed",
                self.name
            )));
        }
        if self.kind == DeviceKind::Source && self.cnn.is_none() {
            return Err(FleetError::Invalid(format!(
                "source {:?} must bind to a CNN",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fleet {
    devices: Vec<DeviceSpec>,
}

impl Fleet {
    pub fn new() -> Self {
        Fleet::default()
    }

    pub fn push(&mut self, device: DeviceSpec) -> Result<DeviceId, FleetError> {
        device.validate()?;
        if self.devices.iter().any(|d| d.name == device.name) {
            return Err(FleetError::DuplicateName(device.name));
        }
        self.devices.push(device);
        Ok(DeviceId(self.devices.len() - 1))
    }

    /// Adds a camera bound to `cnn`. Sources are always RPi3-class boards.
    pub fn add_source(&mut self, name: impl Into<String>, cnn: &str, period: f64) -> Result<DeviceId, FleetError> {
        let mut spec = DeviceSpec::of_class(name, DeviceClass::Rpi3, DeviceKind::Source, period);
        spec.cnn = Some(cnn.to_string());
        self.push(spec)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn device(&self, id: DeviceId) -> &DeviceSpec {
        &self.devices[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = DeviceId> {
        (0..self.devices.len()).map(DeviceId)
    }

    pub fn devices(&self) -> impl Iterator<Item = (DeviceId, &DeviceSpec)> {
        self.devices.iter().enumerate().map(|(i, d)| (DeviceId(i), d))
    }

    pub fn helpers(&self) -> impl Iterator<Item = (DeviceId, &DeviceSpec)> {
        self.devices().filter(|(_, d)| d.kind == DeviceKind::Helper)
    }

    pub fn sources(&self) -> impl Iterator<Item = (DeviceId, &DeviceSpec)> {
        self.devices().filter(|(_, d)| d.kind == DeviceKind::Source)
    }

    pub fn helper_count(&self) -> usize {
        self.helpers().count()
    }
}

/// Builds `count` helpers from class fractions using largest-remainder
/// apportionment, so a 0.7/0.3 split of ten devices yields exactly 7 and 3.
pub fn load_fleet_preset(
    mix: &[(DeviceClass, f64)],
    count: usize,
    period: f64,
) -> Result<Fleet, FleetError> {
    let total: f64 = mix.iter().map(|(_, f)| f).sum();
    if mix.iter().any(|(_, f)| *f < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(FleetError::BadMix(total));
    }
    let mut counts: Vec<usize> = mix.iter().map(|(_, f)| (f * count as f64).floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = mix
        .iter()
        .enumerate()
        .map(|(i, (_, f))| (i, f * count as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders {
        if assigned == count {
            break;
        }
        counts[i] += 1;
        assigned += 1;
    }
    let mut fleet = Fleet::new();
    for ((class, _), n) in mix.iter().zip(counts) {
        for k in 0..n {
            fleet.push(DeviceSpec::of_class(
                format!("{}-{}", class.name(), k),
                *class,
                DeviceKind::Helper,
                period,
            ))?;
        }
    }
    Ok(fleet)
}

// --- resource ledger ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceKind {
    Memory,
    Compute,
    Bandwidth,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceKind::Memory => write!(f, "memory"),
            ResourceKind::Compute => write!(f, "compute"),
            ResourceKind::Bandwidth => write!(f, "bandwidth"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("insufficient {resource} on device {device}")]
pub struct Insufficient {
    pub device: DeviceId,
    pub resource: ResourceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Remaining {
    mem: u64,
    comp: u64,
    bw: u64,
}

/// Remaining per-device budgets for the current period. Reservations are
/// all-or-nothing: a failed reservation leaves the ledger untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceLedger {
    remaining: Vec<Remaining>,
}

impl ResourceLedger {
    pub fn new(fleet: &Fleet) -> Self {
        ResourceLedger {
            remaining: fleet
                .devices()
                .map(|(_, d)| Remaining { mem: d.mem_cap, comp: d.comp_cap, bw: d.bw_cap })
                .collect(),
        }
    }

    pub fn remaining_mem(&self, id: DeviceId) -> u64 {
        self.remaining[id.0].mem
    }

    pub fn remaining_comp(&self, id: DeviceId) -> u64 {
        self.remaining[id.0].comp
    }

    pub fn remaining_bw(&self, id: DeviceId) -> u64 {
        self.remaining[id.0].bw
    }

    /// Deducts memory and compute from `device` and outbound bandwidth from
    /// each sender. Fails without any deduction if a budget is short.
    pub fn reserve(
        &mut self,
        device: DeviceId,
        mem: u64,
        comp: u64,
        senders: &BTreeMap<DeviceId, u64>,
    ) -> Result<(), Insufficient> {
        let rem = &self.remaining[device.0];
        if rem.mem < mem {
            return Err(Insufficient { device, resource: ResourceKind::Memory });
        }
        if rem.comp < comp {
            return Err(Insufficient { device, resource: ResourceKind::Compute });
        }
        for (&sender, &bits) in senders {
            if self.remaining[sender.0].bw < bits {
                return Err(Insufficient { device: sender, resource: ResourceKind::Bandwidth });
            }
        }
        self.remaining[device.0].mem -= mem;
        self.remaining[device.0].comp -= comp;
        for (&sender, &bits) in senders {
            self.remaining[sender.0].bw -= bits;
        }
        Ok(())
    }

    pub fn fits(&self, device: DeviceId, mem: u64, comp: u64) -> bool {
        let rem = &self.remaining[device.0];
        rem.mem >= mem && rem.comp >= comp
    }

    /// Inverse of [`reserve`](Self::reserve) for backtracking search. The
    /// amounts must match a reservation made earlier.
    pub fn release(
        &mut self,
        device: DeviceId,
        mem: u64,
        comp: u64,
        senders: &BTreeMap<DeviceId, u64>,
    ) {
        self.remaining[device.0].mem += mem;
        self.remaining[device.0].comp += comp;
        for (&sender, &bits) in senders {
            self.remaining[sender.0].bw += bits;
        }
    }
}

// --- fleet files --------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FleetFileDevice {
    name: String,
    kind: DeviceKind,
    #[serde(default)]
    class: Option<DeviceClass>,
    #[serde(default)]
    mem_cap: Option<u64>,
    #[serde(default)]
    comp_cap: Option<u64>,
    #[serde(default)]
    bw_cap: Option<u64>,
    #[serde(default)]
    rate: Option<f64>,
    #[serde(default)]
    speed: Option<f64>,
    #[serde(default)]
    cnn: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FleetFile {
    format_version: u32,
    #[serde(default = "default_period")]
    period: f64,
    devices: Vec<FleetFileDevice>,
}

fn default_period() -> f64 {
    1.0
}

/// Loads a fleet from TOML. Each device names either a `class` or explicit
/// capacities; class budgets are scaled by the file's `period`.
pub fn load_fleet_file(path: &Path) -> Result<Fleet, FleetError> {
    let text = std::fs::read_to_string(path)?;
    let file: FleetFile = toml::from_str(&text).map_err(|e| FleetError::Parse(e.to_string()))?;
    if file.format_version != 1 {
        return Err(FleetError::Parse(format!(
            "unsupported fleet format_version {}",
            file.format_version
        )));
    }
    let mut fleet = Fleet::new();
    for dev in file.devices {
        let mut spec = match dev.class {
            Some(class) => DeviceSpec::of_class(dev.name.clone(), class, dev.kind, file.period),
            None => DeviceSpec {
                name: dev.name.clone(),
                kind: dev.kind,
                mem_cap: dev.mem_cap.unwrap_or(0),
                comp_cap: dev.comp_cap.unwrap_or(0),
                bw_cap: dev.bw_cap.unwrap_or(0),
                rate: dev.rate.unwrap_or(0.0),
                speed: dev.speed.unwrap_or(0.0),
                cnn: None,
            },
        };
        if let Some(mem) = dev.mem_cap {
            spec.mem_cap = mem;
        }
        if let Some(comp) = dev.comp_cap {
            spec.comp_cap = comp;
        }
        if let Some(bw) = dev.bw_cap {
            spec.bw_cap = bw;
        }
        if let Some(rate) = dev.rate {
            spec.rate = rate;
        }
        if let Some(speed) = dev.speed {
            spec.speed = speed;
        }
        spec.cnn = dev.cnn;
        fleet.push(spec)?;
    }
    Ok(fleet)
}
