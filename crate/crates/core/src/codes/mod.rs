//! Label coding and secure aggregation: prime fields, B_h sequences, label
//! vectors, masked power-sum shares and their decoding.

pub mod bh;
pub mod field;
pub mod galois;
pub mod labels;
pub mod order;
pub mod poly;
pub mod scma;

pub use bh::{bh_decompose, construct_bh, is_bh, is_decodable, smallest_bh, BhDecomposer, BhSequence};
pub use field::PrimeField;
pub use labels::{build_label_vector, build_multiclass_label_vector, LabelVector};
pub use order::{order_agreement, order_from_draws};
pub use scma::{aggregate, generate_masks, protocol_field, scma_decode, scma_encode, MaskSet, ScmaShare};
