//! On-disk cache for the background Jacobian, the one expensive operator
//! shared by every dataset build and reconstruction. Entries are keyed by
//! the reconstruction mesh content and every physical constant the
//! Jacobian depends on, so a stale hit is impossible; unreadable entries
//! are treated as misses and rebuilt.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use eit::dense::Mat;
use eit::{Mesh, SimConfig};
use sha2::{Digest, Sha256};

pub fn cache_key(mesh: &Mesh, config: &SimConfig) -> String {
    let mut h = Sha256::new();
    h.update(mesh.fingerprint().as_bytes());
    // Noise level is deliberately excluded: it never enters the Jacobian.
    for v in [
        config.domain_size,
        config.electrode_width,
        config.background_conductivity,
        config.contact_impedance,
        config.injection_current,
    ] {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((config.n_electrodes as u64).to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

fn entry_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("jacobian-{key}.json"))
}

pub fn load_jacobian(dir: &Path, key: &str) -> Option<Mat> {
    let file = File::open(entry_path(dir, key)).ok()?;
    serde_json::from_reader(BufReader::new(file)).ok()
}

pub fn store_jacobian(dir: &Path, key: &str, jacobian: &Mat) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating cache directory {}", dir.display()))?;
    let path = entry_path(dir, key);
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer(&mut w, jacobian)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(path)
}

/// Load the Jacobian from the cache or compute it for the uniform
/// background field, storing the result when a cache directory is given.
pub fn jacobian_for(
    mesh: &Mesh,
    config: &SimConfig,
    cache_dir: Option<&Path>,
) -> anyhow::Result<Mat> {
    let key = cache_key(mesh, config);
    if let Some(dir) = cache_dir {
        if let Some(j) = load_jacobian(dir, &key) {
            return Ok(j);
        }
    }
    let sigma0 = vec![config.background_conductivity; mesh.n_elements()];
    let jacobian = eit::compute_jacobian(mesh, &sigma0, config)?;
    if let Some(dir) = cache_dir {
        store_jacobian(dir, &key, &jacobian)?;
    }
    Ok(jacobian)
}
