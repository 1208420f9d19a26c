//! Simulator for one-round federated SVM classification in the Poincaré disc.
//!
//! Clients summarize each class by a quantized convex hull, encode the hull
//! bins with per-client label integers from a B_h sequence and send masked
//! power sums. The server recovers the aggregate, splits the label sums back
//! into individual hulls, groups the hulls into classes with a balanced cut
//! and trains a hyperbolic SVM on the grouped vertices.

pub mod codes;
pub mod data;
pub mod error;
pub mod federation;
pub mod geometry;
pub mod hull;
pub mod partition;
pub mod quantize;
pub mod seed;
pub mod stats;
pub mod svm;

pub use error::{Error, Result};
pub use geometry::{Curvature, DiscPoint, Tangent, Vec2};
