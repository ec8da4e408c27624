//! Cost-sharing games on a single server with slotted time.
//!
//! Every job picks one slot inside its window; the activation cost of a slot
//! depends on how many jobs picked it and is split among them. The crate
//! builds such games, verifies and searches for pure equilibria, computes
//! exact optimal assignments, and analyses a coordination mechanism in which
//! jobs declare payments that must cover the cost of their slot.
//!
//! The math is generic over [`Scalar`] (`f64` and `f32`); the aliases at the
//! crate root fix it to `f64`.

pub mod equilibrium;
pub mod generators;
pub mod harness;
pub mod mechanism;
pub mod model;
pub mod optimal;
pub mod scalar;
pub mod search;

pub use scalar::Scalar;

pub use model::{Assignment, Job, LoadProfile};

pub type CostFunction = model::CostFunction<f64>;
pub type Instance = model::Instance<f64>;
pub type NashViolation = equilibrium::NashViolation<f64>;
pub type BrdTrace = equilibrium::BrdTrace<f64>;
pub type OptResult = optimal::OptResult<f64>;
pub type PaymentProfile = mechanism::PaymentProfile<f64>;
pub type MechProfile = mechanism::MechProfile<f64>;
pub type SupportCertificate = mechanism::SupportCertificate<f64>;
pub type NamedFamily = generators::NamedFamily<f64>;

pub type CostFunction32 = model::CostFunction<f32>;
pub type Instance32 = model::Instance<f32>;

/// Default absolute tolerance for `f64` comparisons.
pub const EPSILON: f64 = 1e-9;
