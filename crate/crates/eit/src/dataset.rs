//! Labeled dataset generation and persistence.
//!
//! Each record runs the full measurement cycle: simulate the pristine and
//! damaged frames on independently perturbed fine meshes, contaminate both
//! with noise, difference them, and reconstruct the conductivity change on
//! the coarse mesh. Reconstructing on a mesh the data was never computed
//! on keeps the records honest; solving forward and inverse problems on
//! the same discretization would leak discretization error into the
//! labels.
//!
//! Records are persisted as JSON lines with a manifest sidecar. Dataset
//! content is a pure function of (seed, config, n_per_class): every record
//! derives its own random stream from the master seed and its index, so
//! parallel generation yields byte-identical files run to run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::forward::{apply_noise, simulate_frame};
use crate::inverse::{
    build_regularizer, compute_jacobian, default_alpha, ReconstructionOperator,
};
use crate::mesh::rect::reconstruction_mesh;
use crate::mesh::reference::reference_mesh_pair;
use crate::scenario::{sample_scenario, DamageScenario};
use crate::sparse::SparseSym;

/// Provenance of one record: its private seed, the noise level and
/// regularization weight in force, and the element counts of the meshes
/// involved (the fine counts must differ from the coarse count, which is
/// what keeps the pipeline free of the inverse crime).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub alpha: f64,
    pub pristine_elements: usize,
    pub damaged_elements: usize,
    pub coarse_elements: usize,
}

/// One labeled sample: the damage scenario (labels), the reconstructed
/// conductivity change (network input before normalization), its
/// unit-norm copy, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub scenario: DamageScenario,
    #[serde(rename = "vector")]
    pub delta_sigma: Vec<f64>,
    pub normalized: Vec<f64>,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    /// Class index for the hole-count task: hole count minus one.
    pub fn class_index(&self) -> usize {
        self.scenario.hole_count() - 1
    }

    /// One-hot encoding of the hole count.
    pub fn count_one_hot(&self) -> [f64; 3] {
        let mut t = [0.0; 3];
        t[self.class_index()] = 1.0;
        t
    }

    /// Radius regression target: one slot per possible hole in canonical
    /// order, trailing slots zero, with the mask marking real holes.
    pub fn radius_target(&self) -> ([f64; 3], [bool; 3]) {
        let mut t = [0.0; 3];
        let mut mask = [false; 3];
        for (i, h) in self.scenario.holes.iter().enumerate() {
            t[i] = h.radius;
            mask[i] = true;
        }
        (t, mask)
    }

    /// Center regression target: (x, y) per possible hole in canonical
    /// order, trailing slots zero, with the mask marking real holes.
    pub fn center_target(&self) -> ([f64; 6], [bool; 3]) {
        let mut t = [0.0; 6];
        let mut mask = [false; 3];
        for (i, h) in self.scenario.holes.iter().enumerate() {
            t[2 * i] = h.center.x;
            t[2 * i + 1] = h.center.y;
            mask[i] = true;
        }
        (t, mask)
    }
}

/// Disjoint record index sets for training, validation (early stopping),
/// and testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// A generated dataset with its split descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub split: SplitIndices,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records selected by a split index set.
    pub fn subset(&self, indices: &[usize]) -> Vec<&DatasetRecord> {
        indices.iter().map(|&i| &self.records[i]).collect()
    }
}

/// Sidecar describing how a dataset file was produced. `created_unix` is
/// the only field allowed to vary between identical runs; the library
/// leaves it unset and the CLI stamps it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SimConfig,
    pub seed: u64,
    pub n_per_class: usize,
    pub alpha: f64,
    pub coarse_elements: usize,
    pub jacobian_fingerprint: String,
    pub regularizer_fingerprint: String,
    pub split: SplitIndices,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

/// Scale a vector to unit Euclidean norm.
pub fn normalize_vector(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-30 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Run one full measurement cycle for a scenario and reconstruct it on
/// the coarse mesh behind `op`. The seed fixes the mesh perturbations and
/// both frames' noise; the pristine frame is simulated fresh rather than
/// cached so each record carries independent noise in both measurements.
pub fn generate_record(
    scenario: &DamageScenario,
    config: &SimConfig,
    op: &ReconstructionOperator,
    rng_seed: u64,
) -> Result<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mesh_seed: u64 = rng.gen();
    let (pristine, damaged) = reference_mesh_pair(scenario, config, mesh_seed)?;
    let coarse_elements = op.jacobian().cols();
    assert!(
        pristine.n_elements() != coarse_elements && damaged.n_elements() != coarse_elements,
        "data meshes must differ from the reconstruction mesh"
    );

    let background = config.background_conductivity;
    let f1 = simulate_frame(
        &pristine,
        &vec![background; pristine.n_elements()],
        config,
    )?;
    let f2 = simulate_frame(&damaged, &vec![background; damaged.n_elements()], config)?;
    let (f1, f2) = match config.snr_db {
        Some(snr) => (
            apply_noise(&f1, snr, &mut rng)?,
            apply_noise(&f2, snr, &mut rng)?,
        ),
        None => (f1, f2),
    };
    let delta_v: Vec<f64> = f2
        .values
        .iter()
        .zip(&f1.values)
        .map(|(a, b)| a - b)
        .collect();

    let delta_sigma = op.reconstruct(&delta_v)?;
    let normalized = normalize_vector(&delta_sigma)?;
    Ok(DatasetRecord {
        scenario: scenario.clone(),
        delta_sigma,
        normalized,
        meta: RecordMeta {
            seed: rng_seed,
            snr_db: config.snr_db,
            alpha: op.alpha(),
            pristine_elements: pristine.n_elements(),
            damaged_elements: damaged.n_elements(),
            coarse_elements,
        },
    })
}

/// Generate a class-balanced dataset: `3 * n_per_class` records with hole
/// counts cycling 1, 2, 3 by record index. Content is a pure function of
/// the arguments.
pub fn build_dataset(n_per_class: usize, config: &SimConfig, seed: u64) -> Result<Dataset> {
    build_dataset_with(n_per_class, config, seed, None).map(|(d, _)| d)
}

/// [`build_dataset`] with an explicit regularization weight (`None` picks
/// the balanced default) and the manifest describing the run.
pub fn build_dataset_with(
    n_per_class: usize,
    config: &SimConfig,
    seed: u64,
    alpha: Option<f64>,
) -> Result<(Dataset, DatasetManifest)> {
    build_dataset_with_jacobian(n_per_class, config, seed, alpha, None)
}

/// [`build_dataset_with`] reusing a precomputed background Jacobian (it
/// must come from this config's reconstruction mesh; shapes are checked).
pub fn build_dataset_with_jacobian(
    n_per_class: usize,
    config: &SimConfig,
    seed: u64,
    alpha: Option<f64>,
    jacobian: Option<Mat>,
) -> Result<(Dataset, DatasetManifest)> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig(
            "n_per_class must be at least 1".into(),
        ));
    }
    config.validate()?;

    let mesh = reconstruction_mesh(config)?;
    let jacobian = match jacobian {
        Some(j) => {
            if j.rows() != config.frame_len() || j.cols() != mesh.n_elements() {
                return Err(Error::ShapeMismatch(format!(
                    "cached Jacobian is {}x{}, expected {}x{}",
                    j.rows(),
                    j.cols(),
                    config.frame_len(),
                    mesh.n_elements()
                )));
            }
            j
        }
        None => {
            let sigma0 = vec![config.background_conductivity; mesh.n_elements()];
            compute_jacobian(&mesh, &sigma0, config)?
        }
    };
    let regularizer = build_regularizer(&mesh.element_adjacency());
    let alpha = match alpha {
        Some(a) => a,
        None => default_alpha(&jacobian, &regularizer),
    };
    let jacobian_fingerprint = fingerprint_matrix(&jacobian);
    let regularizer_fingerprint = fingerprint_sparse(&regularizer);
    let op = ReconstructionOperator::prepare(jacobian, &regularizer, alpha)?;

    let n = 3 * n_per_class;
    let records: Vec<DatasetRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            // Every record owns stream i+1 of the master seed, so results
            // do not depend on how rayon schedules the indices.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let scenario = sample_scenario(&mut rng, Some(i % 3 + 1), config.domain_size)?;
            let record_seed: u64 = rng.gen();
            generate_record(&scenario, config, &op, record_seed)
        })
        .collect::<Result<_>>()?;

    let split = stratified_split(&class_sequence(&records));
    let manifest = DatasetManifest {
        config: config.clone(),
        seed,
        n_per_class,
        alpha,
        coarse_elements: op.jacobian().cols(),
        jacobian_fingerprint,
        regularizer_fingerprint,
        split: split.clone(),
        created_unix: None,
    };
    Ok((Dataset { records, split }, manifest))
}

fn class_sequence(records: &[DatasetRecord]) -> Vec<usize> {
    records.iter().map(|r| r.class_index()).collect()
}

/// Assign 70/10/20 of each class to train/validation/test, preserving
/// record order within each split. Per-class counts are identical across
/// classes when class sizes are, which keeps every split balanced.
pub fn stratified_split(classes: &[usize]) -> SplitIndices {
    let n_classes = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut split = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..n_classes {
        let members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        let n = members.len();
        let n_test = (n as f64 * 0.2).round() as usize;
        let n_val = (n as f64 * 0.1).round() as usize;
        let n_train = n - n_test - n_val;
        split.train.extend(&members[..n_train]);
        split.validation.extend(&members[n_train..n_train + n_val]);
        split.test.extend(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Content hash of a dense matrix (shape plus exact bit patterns),
/// truncated to 32 hex characters. Equal fingerprints mean bitwise equal
/// matrices for practical purposes.
pub fn fingerprint_matrix(m: &Mat) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.data() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

/// Content hash of a symmetric sparse matrix, same scheme as
/// [`fingerprint_matrix`].
pub fn fingerprint_sparse(s: &SparseSym) -> String {
    let mut h = Sha256::new();
    h.update((s.dim() as u64).to_le_bytes());
    for i in 0..s.dim() {
        let (cols, vals) = s.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            h.update(j.to_le_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..16])
}

/// Path of the manifest sidecar for a dataset file.
pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    let mut name = dataset_path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    dataset_path.with_file_name(name)
}

/// Write records as JSON lines and the manifest as a sidecar.
pub fn save_dataset(
    dataset: &Dataset,
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<()> {
    write_records(&dataset.records, path)?;
    let f = File::create(manifest_path(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Write records as JSON lines, one record per line.
pub fn write_records(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSON-lines record file.
pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let f = File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Read the manifest sidecar of a dataset file, if one exists.
pub fn read_manifest(dataset_path: &Path) -> Result<Option<DatasetManifest>> {
    let sidecar = manifest_path(dataset_path);
    if !sidecar.exists() {
        return Ok(None);
    }
    let manifest = serde_json::from_reader(BufReader::new(File::open(sidecar)?))?;
    Ok(Some(manifest))
}

/// Load a dataset and, when present, its manifest. Without a manifest the
/// split is re-derived from the records, which reproduces the generated
/// split exactly because derivation is deterministic.
pub fn load_dataset(path: &Path) -> Result<(Dataset, Option<DatasetManifest>)> {
    let records = read_records(path)?;
    let manifest = read_manifest(path)?;
    let split = manifest
        .as_ref()
        .map(|m| m.split.clone())
        .unwrap_or_else(|| stratified_split(&class_sequence(&records)));
    Ok((Dataset { records, split }, manifest))
}
