//! The train, eval, and predict subcommands.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::Args;
use eit::dataset::{load_dataset, read_manifest, read_records, DatasetRecord};
use eit::mesh::rect::reconstruction_mesh;
use eit::neural::{
    self, evaluate_classifier, evaluate_regressor, forward_pass, init_network, load_network,
    save_network, Architecture, Checkpoint, ClassifierReport, EpochStats, RegressorReport, Task,
    TrainConfig,
};
use eit::{predict_centers, Mesh, SimConfig};
use serde::Serialize;

use crate::manifest::{write_json, RunManifest};
use crate::{kv, OptUsize};

const TASK_NAMES: [&str; 3] = ["count", "radius", "center"];

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset JSON-lines file from gen-dataset.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,

    /// Which head to train.
    #[arg(long, value_parser = TASK_NAMES)]
    task: String,

    /// Epoch budget.
    #[arg(long, default_value_t = 300, value_name = "N")]
    epochs: usize,

    /// Minibatch size; the default depends on the task (count 128,
    /// radius 256, center 64).
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,

    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3, value_name = "RATE")]
    lr: f64,

    /// Seed for weight init and batch shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Early-stopping patience in epochs, or "none" to always run the
    /// full budget.
    #[arg(long, value_name = "N|none", default_value = "30")]
    patience: OptUsize,

    /// Checkpoint output; training history lands next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Everything about one training run except the weights, written next to
/// the checkpoint.
#[derive(Serialize)]
struct TrainSummary {
    task: Task,
    architecture: Vec<usize>,
    n_parameters: usize,
    train_config: TrainConfig,
    records: SplitSizes,
    best_epoch: usize,
    stopped_early: bool,
    best: EpochStats,
    history: Vec<EpochStats>,
    data: String,
    checkpoint: String,
    run_manifest: String,
}

#[derive(Serialize)]
struct SplitSizes {
    train: usize,
    validation: usize,
    test: usize,
}

fn default_batch(task: Task) -> usize {
    match task {
        Task::Count => 128,
        Task::Radius => 256,
        Task::Center => 64,
    }
}

/// A path next to `base` with `suffix` appended to its file name.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    base.with_file_name(name)
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let task = Task::from_str(&args.task)?;
    let (dataset, _) = load_dataset(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let input_width = match dataset.records.first() {
        Some(r) => r.normalized.len(),
        None => bail!("dataset {} holds no records", args.data.display()),
    };

    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size.unwrap_or_else(|| default_batch(task)),
        learning_rate: args.lr,
        seed: args.seed,
        patience: args.patience.0,
    };
    let arch = Architecture::for_task(task, input_width);
    let net = init_network(&arch, args.seed)?;
    kv("task", &args.task);
    kv("architecture", format!("{:?}", arch.widths));
    kv("parameters", net.n_params());
    kv("train records", dataset.split.train.len());
    kv("epoch budget", config.epochs);

    let result = neural::train(net, &dataset, task, &config).context("training")?;
    let checkpoint = Checkpoint {
        task,
        network: result.network,
    };
    save_network(&checkpoint, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let mut run = RunManifest::new("train");
    run.seed("train", args.seed);
    run.input(&args.data).output(&args.out);
    let history_path = sibling(&args.out, ".history.json");
    run.output(&history_path);
    let run_path = run.write(&args.out)?;

    let best = result.history[result.best_epoch].clone();
    let summary = TrainSummary {
        task,
        architecture: arch.widths.clone(),
        n_parameters: checkpoint.network.n_params(),
        train_config: config,
        records: SplitSizes {
            train: dataset.split.train.len(),
            validation: dataset.split.validation.len(),
            test: dataset.split.test.len(),
        },
        best_epoch: result.best_epoch,
        stopped_early: result.stopped_early,
        best: best.clone(),
        history: result.history,
        data: args.data.display().to_string(),
        checkpoint: args.out.display().to_string(),
        run_manifest: run_path.display().to_string(),
    };
    write_json(&history_path, &summary)?;

    kv("epochs run", summary.history.len());
    kv("best epoch", format!(
        "{}{}",
        summary.best_epoch,
        if summary.stopped_early { " (early stop)" } else { "" }
    ));
    kv("train loss", format!("{:.6e}", best.train_loss));
    if let Some(v) = best.val_loss {
        kv("val loss", format!("{v:.6e}"));
    }
    if let Some(a) = best.val_accuracy {
        kv("val accuracy", format!("{a:.4}"));
    }
    kv("checkpoint", args.out.display());
    kv("history", history_path.display());
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Dataset JSON-lines file; evaluation uses its test split.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,

    /// Trained checkpoint from the train subcommand.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,

    /// Metrics report output (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Serialize)]
struct EvalReport {
    task: Task,
    split: &'static str,
    n_records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    classifier: Option<ClassifierReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regressor: Option<RegressorReport>,
    data: String,
    checkpoint: String,
    run_manifest: String,
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let (dataset, _) = load_dataset(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let checkpoint = load_network(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let test = dataset.subset(&dataset.split.test);
    if test.is_empty() {
        bail!("dataset {} has an empty test split", args.data.display());
    }

    let mut run = RunManifest::new("eval");
    run.input(&args.data).input(&args.checkpoint).output(&args.out);
    let run_path = crate::manifest::run_manifest_path(&args.out);

    let mut report = EvalReport {
        task: checkpoint.task,
        split: "test",
        n_records: test.len(),
        classifier: None,
        regressor: None,
        data: args.data.display().to_string(),
        checkpoint: args.checkpoint.display().to_string(),
        run_manifest: run_path.display().to_string(),
    };

    kv("task", format!("{:?}", checkpoint.task).to_lowercase());
    kv("test records", test.len());
    match checkpoint.task {
        Task::Count => {
            let r = evaluate_classifier(&checkpoint.network, &test)?;
            kv("accuracy", format!("{:.4}", r.accuracy));
            for (i, row) in r.confusion.iter().enumerate() {
                kv(
                    &format!("confusion[{} holes]", i + 1),
                    format!("{:>5} {:>5} {:>5}", row[0], row[1], row[2]),
                );
            }
            report.classifier = Some(r);
        }
        Task::Radius | Task::Center => {
            let r = evaluate_regressor(&checkpoint.network, &test, checkpoint.task)?;
            let unit = if matches!(checkpoint.task, Task::Radius) {
                "mean |error| (m)"
            } else {
                "mean distance (m)"
            };
            kv("mse", format!("{:.6e}", r.mse));
            kv(unit, format!("{:.6}", r.mean_deviation));
            report.regressor = Some(r);
        }
    }

    write_json(&args.out, &report)?;
    let written = run.write(&args.out)?;
    debug_assert_eq!(written, run_path);
    kv("report", args.out.display());
    kv("run manifest", run_path.display());
    Ok(())
}

#[derive(Args)]
pub struct PredictArgs {
    /// Records to run inference on (dataset JSON lines).
    #[arg(long, value_name = "FILE")]
    data: PathBuf,

    /// Hole-count classifier checkpoint.
    #[arg(long, value_name = "FILE")]
    count_net: PathBuf,

    /// Radius regressor checkpoint.
    #[arg(long, value_name = "FILE")]
    radius_net: PathBuf,

    /// Center regressor checkpoint.
    #[arg(long, value_name = "FILE")]
    center_net: PathBuf,

    /// Threshold fraction of the deepest conductivity drop for k-means.
    #[arg(long, default_value_t = eit::cluster::DEFAULT_TAU, value_name = "FRACTION")]
    tau: f64,

    /// Seed for k-means initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Prediction report output (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Serialize)]
struct PredictReport {
    n_records: usize,
    count_agreement: f64,
    tau: f64,
    seed: u64,
    records: Vec<RecordPrediction>,
    data: String,
    run_manifest: String,
}

#[derive(Serialize)]
struct RecordPrediction {
    index: usize,
    true_count: usize,
    predicted_count: usize,
    /// Slotwise radius predictions for the predicted count, meters.
    nn_radii: Vec<f64>,
    /// Slotwise center predictions for the predicted count.
    nn_centers: Vec<[f64; 2]>,
    /// Cluster centers of the thresholded reconstruction, canonical order.
    #[serde(skip_serializing_if = "Option::is_none")]
    kmeans_centers: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kmeans_error: Option<String>,
}

fn load_task_net(path: &Path, expect: Task) -> anyhow::Result<Checkpoint> {
    let ckpt =
        load_network(path).with_context(|| format!("loading {}", path.display()))?;
    if ckpt.task != expect {
        bail!(
            "{} holds a {:?} network, expected {:?}",
            path.display(),
            ckpt.task,
            expect
        );
    }
    Ok(ckpt)
}

/// The mesh the records were reconstructed on: taken from the dataset
/// manifest when present, otherwise the default configuration, and always
/// checked against the record vectors.
fn mesh_for_records(data: &Path, records: &[DatasetRecord]) -> anyhow::Result<Mesh> {
    let config = match read_manifest(data)? {
        Some(m) => m.config,
        None => SimConfig::default(),
    };
    let mesh = reconstruction_mesh(&config)?;
    if let Some(r) = records.first() {
        if r.delta_sigma.len() != mesh.n_elements() {
            bail!(
                "records carry {} elements but the reconstruction mesh has {}; \
                 the dataset manifest sidecar is missing or wrong",
                r.delta_sigma.len(),
                mesh.n_elements()
            );
        }
    }
    Ok(mesh)
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let records = read_records(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    if records.is_empty() {
        bail!("dataset {} holds no records", args.data.display());
    }
    let count = load_task_net(&args.count_net, Task::Count)?;
    let radius = load_task_net(&args.radius_net, Task::Radius)?;
    let center = load_task_net(&args.center_net, Task::Center)?;
    let mesh = mesh_for_records(&args.data, &records)?;

    let mut predictions = Vec::with_capacity(records.len());
    let mut agree = 0usize;
    for (index, record) in records.iter().enumerate() {
        let probs = forward_pass(&count.network, &record.normalized)?;
        let predicted_count = argmax(&probs) + 1;
        if predicted_count == record.scenario.hole_count() {
            agree += 1;
        }

        let radii = forward_pass(&radius.network, &record.normalized)?;
        let centers = forward_pass(&center.network, &record.normalized)?;
        let nn_radii = radii[..predicted_count].to_vec();
        let nn_centers = (0..predicted_count)
            .map(|s| [centers[2 * s], centers[2 * s + 1]])
            .collect();

        let (kmeans_centers, kmeans_error) =
            match predict_centers(&record.delta_sigma, &mesh, predicted_count, args.tau, args.seed)
            {
                Ok(c) => (Some(c.iter().map(|p| [p.x, p.y]).collect()), None),
                Err(e) => (None, Some(e.to_string())),
            };

        predictions.push(RecordPrediction {
            index,
            true_count: record.scenario.hole_count(),
            predicted_count,
            nn_radii,
            nn_centers,
            kmeans_centers,
            kmeans_error,
        });
    }

    let mut run = RunManifest::new("predict");
    run.seed("kmeans", args.seed);
    run.input(&args.data)
        .input(&args.count_net)
        .input(&args.radius_net)
        .input(&args.center_net)
        .output(&args.out);
    let run_path = crate::manifest::run_manifest_path(&args.out);

    let report = PredictReport {
        n_records: predictions.len(),
        count_agreement: agree as f64 / predictions.len() as f64,
        tau: args.tau,
        seed: args.seed,
        records: predictions,
        data: args.data.display().to_string(),
        run_manifest: run_path.display().to_string(),
    };
    write_json(&args.out, &report)?;
    run.write(&args.out)?;

    kv("records", report.n_records);
    kv("count agreement", format!("{:.4}", report.count_agreement));
    kv("report", args.out.display());
    kv("run manifest", run_path.display());
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
