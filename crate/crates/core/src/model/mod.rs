pub mod energy;
pub mod labeling;
pub mod pattern;

pub use energy::{
    boundary_higher_order_sum, higher_order_cost, higher_order_sum, is_boundary_location, softmin,
    window_locations, EnergyModel, PairwiseTerm, BIG,
};
pub use labeling::{Anchor, BinaryLabeling, Dims};
pub use pattern::{
    center_indices, center_offset, convert_hard_pattern, default_big, Pattern, PatternBank,
    DEFAULT_F_MAX, NONNEGATIVITY_TOL,
};
