//! Graph signal processing: Laplacians, eigenbases, the graph Fourier
//! transform, Dirichlet energy, and hard-partition coarsening checks.

mod coarsening;
mod eigen;
mod graph;
mod report;
mod verify;

pub use coarsening::{
    coarsen, energy_report, hard_assignment, random_equipartitioned_graph, verify_laplacian_identity, Coarsening,
    Counterexample, EnergyReport, LaplacianIdentityCheck, NamedEnergy, Partition, RatioStats, SignalEnergy,
};
pub use eigen::{check_symmetric, eigendecompose, SpectralBasis};
pub use graph::{degree_laplacian, dirichlet_energy, frequency_split, gft, igft, laplacian, symmetrize};
pub use report::{default_low_band, edge_frequency_report, EdgeClass, EdgeFrequency, SpectralReport};
pub use verify::{run_verify_suite, DocumentedCounterexample, VerifyConfig, VerifyReport};
