//! Bit budgets, encoding plans, and the coordinate ⇄ position codec.
//!
//! A position interleaves the bits of every mode index. An
//! [`EncodingPlan`] names, for each linear bit from the least significant
//! up, the mode whose next-lowest unused bit lands there, so the internal
//! bit order of each mode index is always preserved.

mod budget;
mod codec;
mod linearized;
mod plan;

pub use budget::BitBudget;
pub use codec::{BitCodec, PositionWord};
pub use linearized::{linearize, LinearizedTensor, Positions};
pub use plan::{alto_default_plan, enumerate_plans, EncodingPlan};
