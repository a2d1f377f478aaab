//! Electrical impedance tomography for self-sensing materials.
//!
//! The crate simulates current injection through boundary electrodes on a
//! square conductive panel, reconstructs internal conductivity changes from
//! boundary voltage differences, and characterizes through-hole damage from
//! the reconstructions with small fully-connected networks and weighted
//! k-means.
//!
//! Pipeline stages, each usable on its own:
//!
//! * [`mesh`]: structured and unstructured triangle meshes of the panel,
//!   including fine reference meshes with polygonal holes removed.
//! * [`forward`]: complete-electrode-model finite elements; produces the 208
//!   adjacent-drive voltage measurements per conductivity field.
//! * [`inverse`]: one-step linearized difference imaging with a smoothness
//!   prior and a nonpositivity constraint on the conductivity change.
//! * [`dataset`]: reproducible simulated damage datasets with train /
//!   validation / test splits.
//! * [`neural`]: from-scratch fully-connected networks (hole count, radii,
//!   centers) trained with Adam.
//! * [`cluster`]: weighted k-means over thresholded reconstruction pixels as
//!   a training-free center estimator.
//! * [`raster`]: grayscale rasterization of reconstructions.

pub mod cluster;
pub mod config;
pub mod dataset;
pub mod dense;
pub mod error;
pub mod forward;
pub mod geom;
pub mod inverse;
pub mod mesh;
pub mod neural;
pub mod raster;
pub mod scenario;
pub mod sparse;

pub use cluster::{extract_damage_points, kmeans, predict_centers, DamagePointSet};
pub use config::SimConfig;
pub use dataset::{
    build_dataset, build_dataset_with, build_dataset_with_jacobian, generate_record, load_dataset,
    normalize_vector, save_dataset, Dataset, DatasetManifest, DatasetRecord,
};
pub use error::{Error, Result};
pub use forward::{
    apply_noise, assemble_system, simulate_frame, solve_forward, ForwardSolution,
    MeasurementFrame, SystemMatrix,
};
pub use geom::Point2;
pub use inverse::{
    build_regularizer, compute_jacobian, default_alpha, reconstruct, ReconstructionOperator,
};
pub use mesh::Mesh;
pub use neural::{
    evaluate_classifier, evaluate_regressor, forward_pass, init_network, load_network,
    save_network, train, Architecture, Checkpoint, Network, Task, TrainConfig, TrainResult,
};
pub use raster::{rasterize, Raster};
pub use scenario::{DamageScenario, Hole};
