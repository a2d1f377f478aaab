//! The forward-solve and reconstruct subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use eit::dataset::{fingerprint_matrix, fingerprint_sparse, normalize_vector};
use eit::forward::frame_scheme;
use eit::mesh::rect::reconstruction_mesh;
use eit::mesh::reference::reference_mesh_pair;
use eit::{
    apply_noise, build_regularizer, default_alpha, simulate_frame, DamageScenario, Hole,
    MeasurementFrame, Point2, ReconstructionOperator, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::{write_json, RunManifest};
use crate::{cache, kv, OptF64};

/// One stored measurement cycle: both frames plus everything needed to
/// reconstruct from them.
#[derive(Serialize, Deserialize)]
pub struct FramePair {
    pub config: SimConfig,
    pub scenario: DamageScenario,
    pub seed: u64,
    pub pristine_elements: usize,
    pub damaged_elements: usize,
    pub pristine: MeasurementFrame,
    pub damaged: MeasurementFrame,
}

#[derive(Args)]
pub struct ForwardSolveArgs {
    /// A hole as "X,Y,R" in meters; repeat for multiple holes (up to 3).
    /// No holes simulates an undamaged cycle.
    #[arg(long, value_name = "X,Y,R", value_parser = parse_hole)]
    hole: Vec<Hole>,

    /// Seed for mesh node perturbations (and noise, when enabled).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Measurement noise level in dB, or "none". Debug runs default to
    /// noise-free frames.
    #[arg(long, value_name = "DB|none", default_value = "none")]
    snr: OptF64,

    /// Write the frame pair as JSON for the reconstruct subcommand.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_hole(s: &str) -> Result<Hole, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated numbers: X,Y,R".into());
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad number '{part}': {e}"))?;
    }
    Ok(Hole {
        center: Point2::new(v[0], v[1]),
        radius: v[2],
    })
}

pub fn forward_solve(args: ForwardSolveArgs) -> anyhow::Result<()> {
    let config = SimConfig {
        snr_db: args.snr.0,
        ..SimConfig::default()
    };
    let scenario = DamageScenario::new(args.hole.clone());
    if !scenario.holes.is_empty() {
        scenario.validate(config.domain_size)?;
    }

    // Same seeding discipline as dataset generation: the mesh seed comes
    // off the record stream first, then noise consumes the remainder.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mesh_seed: u64 = rng.gen();
    let (pristine_mesh, damaged_mesh) = reference_mesh_pair(&scenario, &config, mesh_seed)?;
    let background = config.background_conductivity;
    let pristine = simulate_frame(
        &pristine_mesh,
        &vec![background; pristine_mesh.n_elements()],
        &config,
    )?;
    let damaged = simulate_frame(
        &damaged_mesh,
        &vec![background; damaged_mesh.n_elements()],
        &config,
    )?;
    let (pristine, damaged) = match config.snr_db {
        Some(snr) => (
            apply_noise(&pristine, snr, &mut rng)?,
            apply_noise(&damaged, snr, &mut rng)?,
        ),
        None => (pristine, damaged),
    };

    kv("electrodes", config.n_electrodes);
    kv("measurements", pristine.len());
    kv("pristine elements", pristine_mesh.n_elements());
    kv("damaged elements", damaged_mesh.n_elements());
    kv("holes", scenario.holes.len());
    kv("seed", args.seed);
    kv("snr", args.snr);
    println!();
    println!(
        "{:>5}  {:>7}  {:>7}  {:>14}  {:>14}  {:>14}",
        "idx", "drive", "sense", "pristine (V)", "damaged (V)", "delta (V)"
    );
    for (i, pair) in frame_scheme(config.n_electrodes).iter().enumerate() {
        println!(
            "{:>5}  {:>3}+{:<3}  {:>3}+{:<3}  {:>14.6e}  {:>14.6e}  {:>14.6e}",
            i,
            pair.drive.0,
            pair.drive.1,
            pair.sense.0,
            pair.sense.1,
            pristine.values[i],
            damaged.values[i],
            damaged.values[i] - pristine.values[i],
        );
    }

    if let Some(out) = &args.out {
        let pair = FramePair {
            config: config.clone(),
            scenario,
            seed: args.seed,
            pristine_elements: pristine_mesh.n_elements(),
            damaged_elements: damaged_mesh.n_elements(),
            pristine,
            damaged,
        };
        write_json(out, &pair)?;
        let mut run = RunManifest::new("forward-solve");
        run.seed("master", args.seed);
        run.config = Some(config);
        run.fingerprint("pristine_mesh", pristine_mesh.fingerprint())
            .fingerprint("damaged_mesh", damaged_mesh.fingerprint())
            .output(out);
        let run_path = run.write(out)?;
        println!();
        kv("frame pair", out.display());
        kv("run manifest", run_path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct ReconstructArgs {
    /// Frame pair JSON from forward-solve.
    #[arg(long, value_name = "FILE")]
    pair: PathBuf,

    /// Regularization weight, or "auto" to balance it against the
    /// operator norms.
    #[arg(long, value_name = "W|auto", default_value = "auto")]
    alpha: OptF64,

    /// Reconstruction output (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Directory for cached Jacobians, reused across runs.
    #[arg(long, value_name = "DIR")]
    mesh_cache: Option<PathBuf>,
}

/// A reconstructed conductivity change, with enough context to render or
/// compare it.
#[derive(Serialize, Deserialize)]
pub struct DeltaRecord {
    pub config: SimConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<DamageScenario>,
    pub alpha: f64,
    pub coarse_elements: usize,
    pub jacobian_fingerprint: String,
    pub regularizer_fingerprint: String,
    pub delta_sigma: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<f64>>,
    pub run_manifest: String,
}

pub fn reconstruct(args: ReconstructArgs) -> anyhow::Result<()> {
    let pair: FramePair = serde_json::from_reader(BufReader::new(
        File::open(&args.pair).with_context(|| format!("opening {}", args.pair.display()))?,
    ))
    .with_context(|| format!("parsing {}", args.pair.display()))?;
    if pair.pristine.len() != pair.damaged.len() {
        bail!(
            "frame pair is inconsistent: {} pristine vs {} damaged measurements",
            pair.pristine.len(),
            pair.damaged.len()
        );
    }

    let config = pair.config.clone();
    let mesh = reconstruction_mesh(&config)?;
    let jacobian = cache::jacobian_for(&mesh, &config, args.mesh_cache.as_deref())?;
    let regularizer = build_regularizer(&mesh.element_adjacency());
    let alpha = match args.alpha.0 {
        Some(a) => a,
        None => default_alpha(&jacobian, &regularizer),
    };
    let jacobian_fingerprint = fingerprint_matrix(&jacobian);
    let regularizer_fingerprint = fingerprint_sparse(&regularizer);
    let op = ReconstructionOperator::prepare(jacobian, &regularizer, alpha)?;

    let delta_v: Vec<f64> = pair
        .damaged
        .values
        .iter()
        .zip(&pair.pristine.values)
        .map(|(a, b)| a - b)
        .collect();
    let delta_sigma = op.reconstruct(&delta_v).context("reconstructing")?;
    let normalized = normalize_vector(&delta_sigma).ok();

    let mut run = RunManifest::new("reconstruct");
    run.config = Some(config.clone());
    run.alpha = Some(alpha);
    run.fingerprint("coarse_mesh", mesh.fingerprint())
        .fingerprint("jacobian", jacobian_fingerprint.clone())
        .fingerprint("regularizer", regularizer_fingerprint.clone())
        .input(&args.pair)
        .output(&args.out);
    let run_path = crate::manifest::run_manifest_path(&args.out);

    let deepest = delta_sigma
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, &v)| (k, v));

    let record = DeltaRecord {
        config,
        scenario: (!pair.scenario.holes.is_empty()).then_some(pair.scenario),
        alpha,
        coarse_elements: mesh.n_elements(),
        jacobian_fingerprint,
        regularizer_fingerprint,
        delta_sigma,
        normalized,
        run_manifest: run_path.display().to_string(),
    };
    write_json(&args.out, &record)?;
    run.write(&args.out)?;

    kv("elements", record.coarse_elements);
    kv("alpha", format!("{alpha:.6e}"));
    match deepest {
        Some((k, v)) if v < 0.0 => {
            let c = mesh.element_centroids()[k];
            kv("deepest drop", format!("{v:.6e} S/m"));
            kv("at element", format!("{k} (centroid {:.4}, {:.4})", c.x, c.y));
        }
        _ => kv("deepest drop", "none (zero change)"),
    }
    kv("reconstruction", args.out.display());
    kv("run manifest", run_path.display());
    Ok(())
}
