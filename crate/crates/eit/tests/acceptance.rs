//! Acceptance gate for the whole pipeline.
//!
//! Each test checks one numbered criterion end to end at its stated
//! tolerance and prints a single PASS or FAIL line (visible with
//! `cargo test --test acceptance -- --nocapture`). The desk-scale model
//! criteria (7, 8, 9) share one generated dataset and three trained
//! networks and therefore dominate the runtime; everything else finishes
//! in seconds to minutes.

use std::sync::OnceLock;

use eit::dataset::{build_dataset_with, generate_record, save_dataset};
use eit::dense::Mat;
use eit::forward::{
    assemble_system, drive_injection, frame_scheme, simulate_frame, solve_forward,
};
use eit::inverse::kkt_gradient;
use eit::mesh::rect::reconstruction_mesh;
use eit::mesh::reference::reference_mesh_pair;
use eit::neural::{
    backward_pass, cross_entropy, evaluate_classifier, evaluate_regressor, forward_batch,
    init_network, masked_mse, save_network, train, Architecture, Checkpoint, ClassifierReport,
    Network, RegressorReport, Task, TrainConfig,
};
use eit::scenario::sample_scenario;
use eit::{
    build_regularizer, compute_jacobian, default_alpha, predict_centers, DamageScenario, Hole,
    Mesh, Point2, ReconstructionOperator, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Print the one-line verdict for a criterion, then enforce it.
fn verdict(criterion: u32, name: &str, pass: bool, details: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {criterion:2}: {name} ({details})");
    assert!(pass, "criterion {criterion} failed: {name} ({details})");
}

fn config() -> SimConfig {
    SimConfig::default()
}

/// Coarse mesh, background Jacobian, and reconstruction operator, built
/// once and shared by the criteria that reconstruct.
fn background() -> &'static (Mesh, ReconstructionOperator) {
    static CELL: OnceLock<(Mesh, ReconstructionOperator)> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = config();
        let mesh = reconstruction_mesh(&config).unwrap();
        let sigma0 = vec![config.background_conductivity; mesh.n_elements()];
        let jacobian = compute_jacobian(&mesh, &sigma0, &config).unwrap();
        let regularizer = build_regularizer(&mesh.element_adjacency());
        let alpha = default_alpha(&jacobian, &regularizer);
        let op = ReconstructionOperator::prepare(jacobian, &regularizer, alpha).unwrap();
        (mesh, op)
    })
}

#[test]
fn reciprocity_on_the_homogeneous_mesh() {
    let config = config();
    let mesh = reconstruction_mesh(&config).unwrap();
    let sigma = vec![config.background_conductivity; mesh.n_elements()];
    let frame = simulate_frame(&mesh, &sigma, &config).unwrap();
    let scheme = frame_scheme(config.n_electrodes);

    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (i, a) in scheme.iter().enumerate() {
        for (j, b) in scheme.iter().enumerate().skip(i + 1) {
            if a.drive == b.sense && a.sense == b.drive {
                let (va, vb) = (frame.values[i], frame.values[j]);
                let rel = (va - vb).abs() / va.abs().max(vb.abs());
                worst = worst.max(rel);
                pairs += 1;
            }
        }
    }
    verdict(
        1,
        "reciprocity within 1e-10 relative",
        pairs > 0 && worst <= 1e-10,
        &format!("{pairs} reciprocal pairs, worst {worst:.3e}"),
    );
}

#[test]
fn charge_conservation_on_every_solve() {
    let config = config();
    let coarse = reconstruction_mesh(&config).unwrap();
    let scenario = DamageScenario {
        holes: vec![Hole {
            center: Point2::new(0.55, 0.35),
            radius: 0.04,
        }],
    };
    let (_, damaged) = reference_mesh_pair(&scenario, &config, 21).unwrap();

    let mut worst: f64 = 0.0;
    let mut solves = 0;
    for mesh in [&coarse, &damaged] {
        let sigma = vec![config.background_conductivity; mesh.n_elements()];
        let system = assemble_system(mesh, &sigma, &config).unwrap();
        for d in 0..config.n_electrodes {
            let injection =
                drive_injection(config.n_electrodes, d, config.injection_current);
            let solution = solve_forward(&system, &injection).unwrap();
            let total: f64 = solution.recovered_currents.iter().sum();
            let magnitude: f64 = solution
                .recovered_currents
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
                / 2.0;
            worst = worst.max(total.abs() / magnitude);
            solves += 1;
        }
    }
    verdict(
        2,
        "recovered currents sum to zero within 1e-12 relative",
        worst <= 1e-12,
        &format!("{solves} solves on two meshes, worst {worst:.3e}"),
    );
}

#[test]
fn jacobian_columns_match_finite_differences() {
    let config = config();
    let mesh = reconstruction_mesh(&config).unwrap();
    let sigma0 = vec![config.background_conductivity; mesh.n_elements()];
    let jacobian = compute_jacobian(&mesh, &sigma0, &config).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let n_checked = 12;
    for _ in 0..n_checked {
        let k = rng.gen_range(0..mesh.n_elements());
        let h = 0.005 * config.background_conductivity;
        let mut up = sigma0.clone();
        up[k] += h;
        let mut down = sigma0.clone();
        down[k] -= h;
        let f_up = simulate_frame(&mesh, &up, &config).unwrap();
        let f_down = simulate_frame(&mesh, &down, &config).unwrap();

        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..f_up.values.len() {
            let fd = (f_up.values[i] - f_down.values[i]) / (2.0 * h);
            let an = jacobian.get(i, k);
            diff_sq += (an - fd) * (an - fd);
            norm_sq += fd * fd;
        }
        worst = worst.max((diff_sq / norm_sq).sqrt());
    }
    verdict(
        3,
        "adjoint Jacobian columns within 1% of central differences",
        worst <= 0.01,
        &format!("{n_checked} random columns, worst {worst:.3e}"),
    );
}

#[test]
fn zero_data_reconstructs_to_exact_zero_with_kkt_optimality() {
    let (_, op) = background();
    let config = config().without_noise();

    let zero_data = vec![0.0; op.jacobian().rows()];
    let delta_sigma = op.reconstruct(&zero_data).unwrap();
    let exactly_zero = delta_sigma.iter().all(|&v| v == 0.0);

    // KKT optimality on real reconstructions: active (negative)
    // coordinates have vanishing gradient, clamped ones a non-negative
    // one, both relative to the gradient's own scale.
    let mut worst: f64 = 0.0;
    let holes = [(0.3, 0.6), (0.62, 0.3), (0.45, 0.45)];
    for (i, &(x, y)) in holes.iter().enumerate() {
        let scenario = DamageScenario {
            holes: vec![Hole {
                center: Point2::new(x, y),
                radius: 0.04,
            }],
        };
        let (pristine, damaged) =
            reference_mesh_pair(&scenario, &config, 31 + i as u64).unwrap();
        let bg = config.background_conductivity;
        let f1 =
            simulate_frame(&pristine, &vec![bg; pristine.n_elements()], &config).unwrap();
        let f2 = simulate_frame(&damaged, &vec![bg; damaged.n_elements()], &config).unwrap();
        let delta_v: Vec<f64> =
            f2.values.iter().zip(&f1.values).map(|(a, b)| a - b).collect();

        let delta_sigma = op.reconstruct(&delta_v).unwrap();
        let g = kkt_gradient(op, &delta_v, &delta_sigma);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (gk, &ds) in g.iter().zip(&delta_sigma) {
            if ds < 0.0 {
                worst = worst.max(gk.abs() / scale);
            } else {
                worst = worst.max((-gk / scale).max(0.0));
            }
        }
    }
    verdict(
        4,
        "zero data gives exact zeros; KKT residuals vanish",
        exactly_zero && worst <= 1e-6,
        &format!("worst normalized KKT residual {worst:.3e}"),
    );
}

#[test]
fn backprop_matches_finite_differences_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    let mut worst_overall: f64 = 0.0;
    while checked < 20 {
        let depth = rng.gen_range(1..=3);
        let mut widths = vec![rng.gen_range(2..=5)];
        for _ in 0..depth {
            widths.push(rng.gen_range(2..=6));
        }
        let softmax_output: bool = rng.gen();
        let out_width = *widths.last().unwrap();
        let arch = Architecture {
            widths,
            softmax_output,
        };
        let mut net = init_network(&arch, rng.gen()).unwrap();
        let batch = rng.gen_range(1..=4);
        let x = Mat::from_vec(
            batch,
            arch.input_width(),
            (0..batch * arch.input_width())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        );
        let (t, m) = if softmax_output {
            let mut t = Mat::zeros(batch, out_width);
            for i in 0..batch {
                t.set(i, rng.gen_range(0..out_width), 1.0);
            }
            (t, Mat::from_vec(batch, out_width, vec![1.0; batch * out_width]))
        } else {
            let t = Mat::from_vec(
                batch,
                out_width,
                (0..batch * out_width).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let m = Mat::from_vec(
                batch,
                out_width,
                (0..batch * out_width)
                    .map(|_| f64::from(rng.gen_bool(0.7)))
                    .collect(),
            );
            (t, m)
        };
        if !softmax_output && m.data().iter().all(|&v| v == 0.0) {
            continue;
        }
        // Finite differences are invalid next to the ReLU kink; skip
        // configurations that sampled one.
        let cache = forward_batch(&net, &x).unwrap();
        let near_kink = cache.preacts[..arch.n_layers() - 1]
            .iter()
            .any(|z| z.data().iter().any(|v| v.abs() < 1e-3));
        if near_kink {
            continue;
        }
        let grads = backward_pass(&net, &cache, &t, &m);
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..arch.n_layers() {
            for idx in 0..net.weights[l].data().len() {
                let (r, c) = (idx / net.weights[l].cols(), idx % net.weights[l].cols());
                let orig = net.weights[l].get(r, c);
                net.weights[l].set(r, c, orig + step);
                let up = eval_loss(&net, &x, &t, &m);
                net.weights[l].set(r, c, orig - step);
                let down = eval_loss(&net, &x, &t, &m);
                net.weights[l].set(r, c, orig);
                let fd = (up - down) / (2.0 * step);
                worst = worst.max(rel_err(grads.weights[l].get(r, c), fd));
            }
            for k in 0..net.biases[l].len() {
                let orig = net.biases[l][k];
                net.biases[l][k] = orig + step;
                let up = eval_loss(&net, &x, &t, &m);
                net.biases[l][k] = orig - step;
                let down = eval_loss(&net, &x, &t, &m);
                net.biases[l][k] = orig;
                let fd = (up - down) / (2.0 * step);
                worst = worst.max(rel_err(grads.biases[l][k], fd));
            }
        }
        worst_overall = worst_overall.max(worst);
        checked += 1;
    }
    verdict(
        5,
        "backprop within 1e-4 of central differences on 20 networks",
        worst_overall <= 1e-4,
        &format!("worst relative error {worst_overall:.3e}"),
    );
}

fn eval_loss(net: &Network, x: &Mat, t: &Mat, m: &Mat) -> f64 {
    let cache = forward_batch(net, x).unwrap();
    if net.arch.softmax_output {
        cross_entropy(cache.output(), t)
    } else {
        masked_mse(cache.output(), t, m)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

#[test]
fn single_hole_centroid_localization() {
    let (mesh, op) = background();
    let config = config().without_noise();
    let centroids = mesh.element_centroids();
    let radius = 0.04;

    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut hits = 0;
    let trials = 50;
    for i in 0..trials {
        let lo = radius + 0.05 + 1e-9;
        let hi = config.domain_size - lo;
        let center = Point2::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi));
        let scenario = DamageScenario {
            holes: vec![Hole { center, radius }],
        };
        scenario.validate(config.domain_size).unwrap();
        let record = generate_record(&scenario, &config, op, 7000 + i).unwrap();

        let mut weight_sum = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for (k, &v) in record.delta_sigma.iter().enumerate() {
            let w = v.abs();
            weight_sum += w;
            cx += w * centroids[k].x;
            cy += w * centroids[k].y;
        }
        if weight_sum == 0.0 {
            continue;
        }
        let estimate = Point2::new(cx / weight_sum, cy / weight_sum);
        if estimate.dist(&center) <= 0.1 {
            hits += 1;
        }
    }
    verdict(
        6,
        "single-hole weighted centroid within 0.1 m on >=95% of 50 placements",
        hits * 100 >= trials * 95,
        &format!("{hits}/{trials} placements localized"),
    );
}

/// Desk-scale dataset and the three trained heads, built once. Training
/// uses the same defaults the command line ships.
struct DeskScale {
    count: ClassifierReport,
    radius: RegressorReport,
    center: RegressorReport,
}

const DESK_N_PER_CLASS: usize = 1500;
const DESK_EPOCHS: usize = 300;

fn desk_scale() -> &'static DeskScale {
    static CELL: OnceLock<DeskScale> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = config();
        let (dataset, _) = build_dataset_with(DESK_N_PER_CLASS, &config, 0, None).unwrap();
        assert!(dataset.split.train.len() >= 3000, "train split too small");
        assert!(dataset.split.test.len() >= 600, "test split too small");

        let input = dataset.records[0].normalized.len();
        let test = dataset.subset(&dataset.split.test);
        let train_head = |task: Task, batch: usize| {
            let net = init_network(&Architecture::for_task(task, input), 0).unwrap();
            let cfg = TrainConfig {
                epochs: DESK_EPOCHS,
                batch_size: batch,
                learning_rate: 1e-3,
                seed: 0,
                patience: Some(30),
            };
            train(net, &dataset, task, &cfg).unwrap().network
        };

        let count = evaluate_classifier(&train_head(Task::Count, 128), &test).unwrap();
        let radius =
            evaluate_regressor(&train_head(Task::Radius, 256), &test, Task::Radius).unwrap();
        let center =
            evaluate_regressor(&train_head(Task::Center, 64), &test, Task::Center).unwrap();
        DeskScale {
            count,
            radius,
            center,
        }
    })
}

#[test]
fn hole_count_classifier_accuracy() {
    let desk = desk_scale();
    verdict(
        7,
        "hole-count test accuracy >= 0.90 at desk scale",
        desk.count.accuracy >= 0.90,
        &format!(
            "accuracy {:.4} on {} test records",
            desk.count.accuracy, desk.count.n
        ),
    );
}

#[test]
fn radius_mean_absolute_error() {
    let desk = desk_scale();
    verdict(
        8,
        "radius mean absolute difference <= 0.003 m at desk scale",
        desk.radius.mean_deviation <= 0.003,
        &format!(
            "mean |error| {:.6} m over {} holes",
            desk.radius.mean_deviation, desk.radius.n_holes
        ),
    );
}

#[test]
fn center_mean_distance() {
    let desk = desk_scale();
    verdict(
        9,
        "center mean distance <= 0.02 m at desk scale",
        desk.center.mean_deviation <= 0.02,
        &format!(
            "mean distance {:.6} m over {} holes",
            desk.center.mean_deviation, desk.center.n_holes
        ),
    );
}

#[test]
fn two_hole_kmeans_separation() {
    let (mesh, op) = background();
    let config = config().without_noise();

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut ok = 0;
    let trials = 50;
    for i in 0..trials {
        // Two holes at least 0.25 m apart, rejection-sampled.
        let scenario = loop {
            let s = sample_scenario(&mut rng, Some(2), config.domain_size).unwrap();
            if s.holes[0].center.dist(&s.holes[1].center) >= 0.25 {
                break s;
            }
        };
        let record = generate_record(&scenario, &config, op, 20_000 + i).unwrap();
        let centers = predict_centers(&record.delta_sigma, mesh, 2, 0.2, 0).unwrap();

        let d_direct = centers[0]
            .dist(&scenario.holes[0].center)
            .max(centers[1].dist(&scenario.holes[1].center));
        let d_swapped = centers[0]
            .dist(&scenario.holes[1].center)
            .max(centers[1].dist(&scenario.holes[0].center));
        if d_direct.min(d_swapped) <= 0.05 {
            ok += 1;
        }
    }
    verdict(
        10,
        "two-hole centers within 0.05 m on >=90% of 50 separated scenarios",
        ok * 100 >= trials * 90,
        &format!("{ok}/{trials} scenarios matched"),
    );
}

/// The full-scale configuration (n_per_class = 9000, full epoch budget)
/// is an extended benchmark, not a gate: it runs for hours and is
/// documented in the README with the command line to reproduce it.
#[test]
#[ignore = "extended benchmark, not a CI gate; see README"]
fn full_scale_benchmark_is_documented() {
    println!(
        "criterion 11: run manually:\n\
         eit gen-dataset --n-per-class 9000 --seed 0 --out full.jsonl\n\
         eit train --data full.jsonl --task count --epochs 3000 --out count.json\n\
         eit eval --data full.jsonl --checkpoint count.json --out count-eval.json"
    );
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = config();

    let mut paths = Vec::new();
    for run in 0..2 {
        let (dataset, manifest) = build_dataset_with(2, &config, 9, None).unwrap();
        let data_path = dir.path().join(format!("run{run}.jsonl"));
        save_dataset(&dataset, &manifest, &data_path).unwrap();

        let task = Task::Count;
        let net = init_network(
            &Architecture::for_task(task, dataset.records[0].normalized.len()),
            3,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 2,
            learning_rate: 1e-3,
            seed: 3,
            patience: None,
        };
        let trained = train(net, &dataset, task, &cfg).unwrap().network;
        let ckpt_path = dir.path().join(format!("run{run}.ckpt.json"));
        save_network(
            &Checkpoint {
                task,
                network: trained.clone(),
            },
            &ckpt_path,
        )
        .unwrap();

        let report = evaluate_classifier(&trained, &dataset.subset(&dataset.split.test)).unwrap();
        let report_path = dir.path().join(format!("run{run}.report.json"));
        std::fs::write(&report_path, serde_json::to_vec_pretty(&report).unwrap()).unwrap();

        paths.push((data_path, ckpt_path, report_path));
    }

    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    let datasets = read(&paths[0].0) == read(&paths[1].0);
    let checkpoints = read(&paths[0].1) == read(&paths[1].1);
    let reports = read(&paths[0].2) == read(&paths[1].2);
    verdict(
        12,
        "same-seed datasets, checkpoints, and reports are byte-identical",
        datasets && checkpoints && reports,
        &format!("datasets {datasets}, checkpoints {checkpoints}, reports {reports}"),
    );
}
