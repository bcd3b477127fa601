//! Road-network data model, synthetic data, trajectories and OD matrices.

mod generator;
mod network;
mod trajectory;

pub use generator::{generate_synthetic, GeneratorConfig, PlantedHierarchy, SyntheticBundle};
pub use network::{load_network, write_network, LoadReport, RoadNetwork, SegmentAttr};
pub use trajectory::{
    build_od_matrix, load_trajectories, split_indices, split_trajectories, write_trajectories, OdMatrix, Split,
    TrajectorySet,
};
