//! The render subcommand: conductivity change to grayscale PNG.
//!
//! Color scale, fixed by design: white is zero change, black is the
//! deepest conductivity drop in this image, shades in between are linear.
//! The extremes land in a ".scale.json" sidecar so the image stays
//! self-describing.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use eit::dataset::{read_manifest, read_records};
use eit::mesh::rect::reconstruction_mesh;
use eit::raster::{rasterize, Raster, DEFAULT_SIDE};
use eit::SimConfig;
use serde::Serialize;

use crate::manifest::{write_json, RunManifest};
use crate::physics::DeltaRecord;
use crate::kv;

#[derive(Args)]
pub struct RenderArgs {
    /// Reconstruction JSON from the reconstruct subcommand.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["data", "index"])]
    input: Option<PathBuf>,

    /// Dataset JSON-lines file; renders the record chosen by --index.
    #[arg(long, value_name = "FILE", requires = "index")]
    data: Option<PathBuf>,

    /// Record index within --data.
    #[arg(long, value_name = "N", requires = "data")]
    index: Option<usize>,

    /// Image side in pixels.
    #[arg(long, default_value_t = DEFAULT_SIDE, value_name = "PIXELS")]
    side: usize,

    /// Output PNG path; the scale sidecar is written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Serialize)]
struct ScaleSidecar {
    side: usize,
    /// Conductivity change rendered black; zero for a uniform image.
    deepest: f64,
    white: &'static str,
    black: &'static str,
    mapping: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    darkest_pixel: Option<DarkestPixel>,
    input: String,
    run_manifest: String,
}

#[derive(Serialize)]
struct DarkestPixel {
    row: usize,
    col: usize,
    x: f64,
    y: f64,
}

pub fn run(args: RenderArgs) -> anyhow::Result<()> {
    let (delta_sigma, config, input_path) = match (&args.input, &args.data, args.index) {
        (Some(input), None, None) => {
            let record: DeltaRecord = serde_json::from_reader(BufReader::new(
                File::open(input).with_context(|| format!("opening {}", input.display()))?,
            ))
            .with_context(|| format!("parsing {}", input.display()))?;
            (record.delta_sigma, record.config, input.clone())
        }
        (None, Some(data), Some(index)) => {
            let records = read_records(data)
                .with_context(|| format!("loading {}", data.display()))?;
            let Some(record) = records.get(index) else {
                bail!(
                    "index {index} is out of range; {} holds {} records",
                    data.display(),
                    records.len()
                );
            };
            let config = match read_manifest(data)? {
                Some(m) => m.config,
                None => SimConfig::default(),
            };
            (record.delta_sigma.clone(), config, data.clone())
        }
        _ => bail!("pass either --input FILE or --data FILE --index N"),
    };

    let mesh = reconstruction_mesh(&config)?;
    let raster = rasterize(&delta_sigma, &mesh, args.side).context("rasterizing")?;
    save_png(&raster, &args)?;

    let mut run = RunManifest::new("render");
    run.input(&input_path).output(&args.out);
    let run_path = crate::manifest::run_manifest_path(&args.out);

    let darkest = raster.darkest_pixel().map(|(row, col)| {
        let p = raster.pixel_center(row, col);
        DarkestPixel { row, col, x: p.x, y: p.y }
    });
    let sidecar = ScaleSidecar {
        side: raster.side(),
        deepest: raster.deepest(),
        white: "no conductivity change",
        black: "deepest conductivity drop in this image",
        mapping: "linear in the conductivity change",
        darkest_pixel: darkest,
        input: input_path.display().to_string(),
        run_manifest: run_path.display().to_string(),
    };
    let scale_path = {
        let mut name = args.out.file_name().unwrap_or_default().to_os_string();
        name.push(".scale.json");
        args.out.with_file_name(name)
    };
    write_json(&scale_path, &sidecar)?;
    run.output(&scale_path);
    run.write(&args.out)?;

    kv(
        "image",
        format!("{} ({}x{} px)", args.out.display(), raster.side(), raster.side()),
    );
    match &sidecar.darkest_pixel {
        Some(d) => kv(
            "darkest pixel",
            format!(
                "({}, {}) at ({:.4}, {:.4}) m, {:.6e} S/m",
                d.row, d.col, d.x, d.y, sidecar.deepest
            ),
        ),
        None => kv("darkest pixel", "none (uniform background)"),
    }
    kv("scale", scale_path.display());
    kv("run manifest", run_path.display());
    Ok(())
}

fn save_png(raster: &Raster, args: &RenderArgs) -> anyhow::Result<()> {
    let side = raster.side() as u32;
    let img = image::GrayImage::from_raw(side, side, raster.pixels().to_vec())
        .expect("raster buffer matches its declared dimensions");
    img.save_with_format(&args.out, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}
