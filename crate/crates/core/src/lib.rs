//! Placement engine and workload simulator for privacy-aware distributed CNN
//! inference on resource-constrained device fleets.
//!
//! The crate models a surveillance deployment in which source cameras request
//! image classifications and untrusted helper devices compute slices of the
//! network, never receiving enough feature maps of a shallow layer to invert
//! the original image. It provides:
//!
//! * [`model`]: CNN architectures as data and the multiplication/memory cost
//!   model, including the four built-in presets.
//! * [`privacy`]: inversion-attack measurements and the per-layer feature-map
//!   caps and split point derived from a tolerated SSIM.
//! * [`fleet`]: heterogeneous devices with per-period memory, compute and
//!   bandwidth budgets.
//! * [`placement`]: the assignment variable, traffic and latency model, and
//!   the constraint validator.
//! * [`greedy`]: the online per-segment scheduler.
//! * [`exact`]: a desk-scale branch-and-bound solver used as an optimality
//!   baseline.
//! * [`sim`]: Poisson workload generation, periodic scheduling with retries,
//!   and report aggregation.

pub mod exact;
pub mod fleet;
pub mod greedy;
pub mod model;
pub mod placement;
pub mod privacy;
pub mod sim;
pub mod synth;

pub use fleet::{DeviceClass, DeviceId, DeviceKind, DeviceSpec, Fleet, ResourceLedger};
pub use model::{CnnSpec, LayerKind, LayerSpec};
pub use placement::{Assignment, Instance, PlacementPlan, Request, Violation};
pub use privacy::{PrivacyPolicy, SsimCurve};
