//! Random walks `μ(c) = Σ c_k m_{G_k}` on locally finite group towers.
//!
//! Every quantity is a function of the volumes `v_k = |G_k|` and the tails
//! `σ(k) = Σ_{i>k} c_i`, evaluated either in closed form or as a truncated
//! series with a certified remainder bound.

pub mod error;
pub mod measure;
pub mod numeric;
pub mod oracle;
pub mod profile;
pub mod spectral;
pub mod tower;
pub mod transforms;
pub mod walk;

pub use error::{Error, Result};
pub use measure::{fixtures, CoefficientSequence, ConditionA, DesignRule, Family, Model, Subordinator, TailRule, Truncated};
pub use oracle::{DenseDistribution, Enumeration};
pub use profile::{order_of, OrderEstimate, ProfileBand};
pub use spectral::{classify_recurrence, HeatBand, RecurrenceReport, Spectrum, Verdict};
pub use tower::{BallDescriptor, GroupElement, Tower, TowerKind};
pub use transforms::{conjugate_legendre, kohlbecker, legendre, DecayTarget, ScalarFunction};
pub use walk::{Displacement, DisplacementMode, WalkStats, WalkTrace};
