//! The gen-dataset subcommand.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use eit::dataset::{
    build_dataset_with_jacobian, fingerprint_matrix, manifest_path, save_dataset,
};
use eit::mesh::rect::reconstruction_mesh;
use eit::SimConfig;

use crate::manifest::RunManifest;
use crate::{cache, kv, OptF64};

#[derive(Args)]
pub struct GenDatasetArgs {
    /// Records per hole-count class; the dataset holds three times this.
    #[arg(long, value_name = "N")]
    n_per_class: usize,

    /// Master seed; dataset content is a pure function of it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Measurement noise level in dB, or "none" for noise-free frames.
    #[arg(long, value_name = "DB|none", default_value = "85")]
    snr: OptF64,

    /// Regularization weight, or "auto" to balance it against the
    /// operator norms.
    #[arg(long, value_name = "W|auto", default_value = "auto")]
    alpha: OptF64,

    /// Output JSON-lines file; a manifest sidecar is written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Directory for cached Jacobians, reused across runs.
    #[arg(long, value_name = "DIR")]
    mesh_cache: Option<PathBuf>,
}

pub fn run(args: GenDatasetArgs) -> anyhow::Result<()> {
    let config = SimConfig {
        snr_db: args.snr.0,
        ..SimConfig::default()
    };
    let coarse = reconstruction_mesh(&config)?;
    let jacobian = cache::jacobian_for(&coarse, &config, args.mesh_cache.as_deref())?;
    let jacobian_fp = fingerprint_matrix(&jacobian);

    let (dataset, ds_manifest) = build_dataset_with_jacobian(
        args.n_per_class,
        &config,
        args.seed,
        args.alpha.0,
        Some(jacobian),
    )
    .context("generating dataset")?;
    save_dataset(&dataset, &ds_manifest, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    debug_assert_eq!(jacobian_fp, ds_manifest.jacobian_fingerprint);

    let sidecar = manifest_path(&args.out);
    let mut run = RunManifest::new("gen-dataset");
    run.seed("master", args.seed);
    run.config = Some(config);
    run.alpha = Some(ds_manifest.alpha);
    run.fingerprint("coarse_mesh", coarse.fingerprint())
        .fingerprint("jacobian", ds_manifest.jacobian_fingerprint.clone())
        .fingerprint("regularizer", ds_manifest.regularizer_fingerprint.clone())
        .output(&args.out)
        .output(&sidecar);
    let run_path = run.write(&args.out)?;

    kv("records", dataset.len());
    kv("train / val / test", format!(
        "{} / {} / {}",
        dataset.split.train.len(),
        dataset.split.validation.len(),
        dataset.split.test.len()
    ));
    kv("alpha", format!("{:.6e}", ds_manifest.alpha));
    kv("coarse elements", ds_manifest.coarse_elements);
    kv("dataset", args.out.display());
    kv("manifest", sidecar.display());
    kv("run manifest", run_path.display());
    Ok(())
}
