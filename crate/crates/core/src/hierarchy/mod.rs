//! Segment → locality → region hierarchy and top-down low-frequency
//! propagation.

mod embedding;
mod gat;
mod layers;

pub use embedding::{contextual_embed, EmbeddingTables, GeoGrid, InputLayout, LANE_BINS};
pub use gat::{gat_layer, GatParams, Neighborhoods};
pub use layers::{
    aggregate_parent, coarsen_adjacency, coarsen_adjacency_oracle, ffn, initial_features, propagate_low_frequency,
    soft_assignment, Ffn, LowPassInputs,
};
