//! The experiment runners behind `exp mnist|resolution|translation|vae`.
//!
//! Each runner trains the 1-channel baseline and the 3-channel coordinate
//! variant under a shared seed/config (identical splits and batch orders,
//! proven by logged digests), measures both, and writes a versioned JSON
//! report plus any image/checkpoint artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use coordnet::coords::append_coords_batch;
use coordnet::data::transform::{degrade_resolution, translate};
use coordnet::data::{load_mnist_raw, split_train_val, DatasetSplit, LabeledImage};
use coordnet::models::{
    build_classifier, build_vae, joint_position_matrix, Network, NetworkSpec, VaeSpec,
};
use coordnet::optim::OptimizerKind;
use coordnet::rng::RngState;
use coordnet::train::{evaluate, train, train_vae, Dtype2, TrainConfig};
use coordnet::{Dtype, Element, Error, Result, Tensor};
use sha2::{Digest, Sha256};

use crate::imgexport::{hstack, write_grayscale_png};
use crate::report::{
    ConfigEcho, ExperimentReport, ReferenceValues, SeedRun, ShiftEntry, Summary,
    TranslationSection, VaeSample, VaeSection, VaeSeedRun, VariantResult, SCHEMA_VERSION,
};

/// Evaluation grid for the translation experiment: symmetric shifts that
/// stay within the slack around MNIST's centered digits.
pub const SHIFT_GRID: [i64; 5] = [-4, -2, 0, 2, 4];

#[derive(Debug, Clone)]
pub struct ExpOptions {
    pub data_dir: PathBuf,
    /// Where the JSON report goes; artifacts land in `<stem>-artifacts/`
    /// next to it.
    pub report_path: PathBuf,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Training images to use; None = the standard 45k (with 5k validation).
    /// A subset of N trains on N images with max(N/10, 1) for validation.
    pub subset: Option<usize>,
    /// Test images to evaluate; None = the full 10k.
    pub test_subset: Option<usize>,
    pub latent_dim: usize,
    pub beta: f64,
}

impl ExpOptions {
    fn echo<E: Element>(&self, vae: bool) -> ConfigEcho {
        ConfigEcho {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            optimizer: "adam".into(),
            precision: match E::DTYPE {
                Dtype::F32 => "f32".into(),
                Dtype::F64 => "f64".into(),
            },
            subset: self.subset,
            test_subset: self.test_subset,
            latent_dim: vae.then_some(self.latent_dim),
            beta: vae.then(|| self.beta),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("experiments need at least one epoch".into()));
        }
        Ok(())
    }
}

/// `(absolute artifact dir, its name relative to the report)`.
fn artifact_layout(report_path: &Path) -> (PathBuf, String) {
    let stem = report_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let name = format!("{stem}-artifacts");
    let dir = report_path.parent().unwrap_or(Path::new("")).join(&name);
    (dir, name)
}

/// Short digest of each epoch's scheduled batch-index stream — the same
/// derived permutation the training loop draws, recomputed here as evidence
/// that variants sharing a seed saw identical orders.
fn batch_order_digests(seed: u64, train_len: usize, epochs: usize) -> Vec<String> {
    let root = RngState::new(seed);
    (0..epochs)
        .map(|e| {
            let order = root.derive("batch-order", e as u64).permutation(train_len);
            let mut h = Sha256::new();
            for idx in order {
                h.update((idx as u64).to_le_bytes());
            }
            h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
        })
        .collect()
}

/// Seeded train/val carve-out plus the (optionally truncated) test split.
pub fn classifier_splits<E: Element>(
    train_raw: &[LabeledImage<E>],
    test_raw: &[LabeledImage<E>],
    subset: Option<usize>,
    test_subset: Option<usize>,
    seed: u64,
) -> Result<(DatasetSplit<E>, DatasetSplit<E>, DatasetSplit<E>)> {
    let (train_n, val_n) = match subset {
        None => (45_000, 5_000),
        Some(n) => (n, (n / 10).max(1)),
    };
    let (train, val) = split_train_val(train_raw.to_vec(), train_n, val_n, seed)?;
    let mut test = DatasetSplit::new("test", test_raw.to_vec())?;
    if let Some(tn) = test_subset {
        test = test.truncated(tn, "test")?;
    }
    Ok((train, val.expect("val_n ≥ 1"), test))
}

/// Builds, trains, and tests one variant. The returned network is live so
/// callers can run extra evaluations (translated/degraded test sets).
#[allow(clippy::too_many_arguments)]
fn run_variant<E: Element>(
    seed: u64,
    use_coords: bool,
    train_split: &DatasetSplit<E>,
    val_split: &DatasetSplit<E>,
    test_split: &DatasetSplit<E>,
    opts: &ExpOptions,
    checkpoint_abs: Option<PathBuf>,
    checkpoint_rel: Option<String>,
) -> Result<(Network<E>, VariantResult)> {
    let spec = if use_coords { NetworkSpec::with_coords() } else { NetworkSpec::baseline() };
    let mut net = build_classifier::<E>(spec, &RngState::new(seed))?;
    let config = TrainConfig {
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        lr: opts.lr,
        optimizer: OptimizerKind::Adam,
        seed,
        use_coords,
        precision: Dtype2::from(E::DTYPE),
        patience: 5,
        checkpoint_path: checkpoint_abs,
    };
    let history = train(&mut net, train_split, val_split, &config)?;
    let test = evaluate(&net, test_split, use_coords)?;
    let result = VariantResult {
        test,
        train_loss_per_epoch: history.iter().map(|h| h.train_loss).collect(),
        val_accuracy_per_epoch: history.iter().map(|h| h.val.accuracy).collect(),
        batch_order_digest: batch_order_digests(seed, train_split.len(), opts.epochs),
        checkpoint: checkpoint_rel,
        matched_resolution_accuracy: None,
    };
    Ok((net, result))
}

fn summarize(runs: &[SeedRun]) -> Summary {
    let collect = |f: &dyn Fn(&SeedRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    Summary {
        median_baseline_accuracy: crate::report::median(&collect(&|r| r.baseline.test.accuracy)),
        median_coord_accuracy: crate::report::median(&collect(&|r| r.coord.test.accuracy)),
        median_delta_accuracy: crate::report::median(&collect(&|r| r.delta_accuracy)),
    }
}

fn base_report(experiment: &str, config: ConfigEcho, seeds: Vec<u64>) -> ExperimentReport {
    ExperimentReport {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.into(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        config,
        seeds,
        reference: ReferenceValues {
            coord_accuracy: None,
            baseline_accuracy: None,
            note: String::new(),
        },
        runs: None,
        summary: None,
        translation: None,
        vae: None,
        artifacts: Vec::new(),
        wall_clock_seconds: 0.0,
    }
}

/// Both variants trained on the standard splits, per seed; checkpoints are
/// kept as artifacts.
pub fn exp_mnist<E: Element>(opts: &ExpOptions) -> Result<ExperimentReport> {
    opts.validate()?;
    let t0 = Instant::now();
    let (train_raw, test_raw) = load_mnist_raw::<E>(&opts.data_dir)?;
    let (art_dir, art_name) = artifact_layout(&opts.report_path);
    std::fs::create_dir_all(&art_dir).map_err(|e| Error::io(&art_dir, e))?;

    let mut runs = Vec::new();
    let mut artifacts = Vec::new();
    for &seed in &opts.seeds {
        let (train_split, val, test) =
            classifier_splits(&train_raw, &test_raw, opts.subset, opts.test_subset, seed)?;
        let mut results = Vec::with_capacity(2);
        for (use_coords, name) in [(false, "baseline"), (true, "coord")] {
            let file = format!("checkpoint-seed{seed}-{name}.ckpt");
            let rel = format!("{art_name}/{file}");
            let (_, result) = run_variant(
                seed,
                use_coords,
                &train_split,
                &val,
                &test,
                opts,
                Some(art_dir.join(&file)),
                Some(rel.clone()),
            )?;
            artifacts.push(rel);
            results.push(result);
        }
        let coord = results.pop().expect("two variants");
        let baseline = results.pop().expect("two variants");
        runs.push(SeedRun {
            seed,
            delta_accuracy: coord.test.accuracy - baseline.test.accuracy,
            baseline,
            coord,
        });
    }

    let mut report = base_report("mnist", opts.echo::<E>(false), opts.seeds.clone());
    report.reference = ReferenceValues {
        coord_accuracy: Some(0.9984),
        baseline_accuracy: None,
        note: "previously reported full-training-scale accuracy for the coordinate variant; \
               context only, never asserted"
            .into(),
    };
    report.summary = Some(summarize(&runs));
    report.runs = Some(runs);
    report.artifacts = artifacts;
    report.wall_clock_seconds = t0.elapsed().as_secs_f64();
    report.write(&opts.report_path)?;
    Ok(report)
}

/// Trains on resolution-degraded images, tests on originals; each variant is
/// additionally scored on the degraded test set (matched resolution) for the
/// mismatch comparison.
pub fn exp_resolution<E: Element>(opts: &ExpOptions) -> Result<ExperimentReport> {
    opts.validate()?;
    let t0 = Instant::now();
    let (train_raw, test_raw) = load_mnist_raw::<E>(&opts.data_dir)?;

    let mut runs = Vec::new();
    for &seed in &opts.seeds {
        let (train_split, val, test) =
            classifier_splits(&train_raw, &test_raw, opts.subset, opts.test_subset, seed)?;
        let train_deg = train_split.map_images("train-degraded", |img| degrade_resolution(img))?;
        let val_deg = val.map_images("validation-degraded", |img| degrade_resolution(img))?;
        let test_deg = test.map_images("test-degraded", |img| degrade_resolution(img))?;

        let mut results = Vec::with_capacity(2);
        for use_coords in [false, true] {
            let (net, mut result) =
                run_variant(seed, use_coords, &train_deg, &val_deg, &test, opts, None, None)?;
            result.matched_resolution_accuracy =
                Some(evaluate(&net, &test_deg, use_coords)?.accuracy);
            results.push(result);
        }
        let coord = results.pop().expect("two variants");
        let baseline = results.pop().expect("two variants");
        runs.push(SeedRun {
            seed,
            delta_accuracy: coord.test.accuracy - baseline.test.accuracy,
            baseline,
            coord,
        });
    }

    let mut report = base_report("resolution", opts.echo::<E>(false), opts.seeds.clone());
    report.reference = ReferenceValues {
        coord_accuracy: Some(0.9826),
        baseline_accuracy: Some(0.9632),
        note: "previously reported full-training-scale accuracies under the same resolution \
               mismatch; context only, never asserted"
            .into(),
    };
    report.summary = Some(summarize(&runs));
    report.runs = Some(runs);
    report.wall_clock_seconds = t0.elapsed().as_secs_f64();
    report.write(&opts.report_path)?;
    Ok(report)
}

/// Trains both variants on centered digits, then scores every shift in
/// `SHIFT_GRID`². Runs exactly one seed — the matrix is already 25 × 2
/// evaluations.
pub fn exp_translation<E: Element>(opts: &ExpOptions) -> Result<ExperimentReport> {
    opts.validate()?;
    let seed = match opts.seeds.as_slice() {
        [s] => *s,
        _ => {
            return Err(Error::InvalidArgument(
                "the translation experiment runs a single seed; pass --seed".into(),
            ))
        }
    };
    let t0 = Instant::now();
    let (train_raw, test_raw) = load_mnist_raw::<E>(&opts.data_dir)?;
    let (train_split, val, test) =
        classifier_splits(&train_raw, &test_raw, opts.subset, opts.test_subset, seed)?;

    let (bnet, bres) = run_variant(seed, false, &train_split, &val, &test, opts, None, None)?;
    let (cnet, cres) = run_variant(seed, true, &train_split, &val, &test, opts, None, None)?;

    let mut matrix = Vec::with_capacity(SHIFT_GRID.len() * SHIFT_GRID.len());
    for &dy in &SHIFT_GRID {
        for &dx in &SHIFT_GRID {
            let shifted =
                test.map_images(format!("test{dx:+}{dy:+}"), |img| translate(img, dx, dy))?;
            matrix.push(ShiftEntry {
                dx,
                dy,
                baseline_accuracy: evaluate(&bnet, &shifted, false)?.accuracy,
                coord_accuracy: evaluate(&cnet, &shifted, true)?.accuracy,
            });
        }
    }

    let mut report = base_report("translation", opts.echo::<E>(false), vec![seed]);
    report.reference.note = "the benefit under translation was reported directionally, without \
                             numbers; both variants are measured and logged, nothing is gated"
        .into();
    report.translation = Some(TranslationSection {
        seed,
        base_baseline: bres.test,
        base_coord: cres.test,
        matrix,
    });
    report.wall_clock_seconds = t0.elapsed().as_secs_f64();
    report.write(&opts.report_path)?;
    Ok(report)
}

/// Pearson correlation; 0.0 when either side is constant (the coefficient is
/// undefined there, and "no linear relationship" is the honest report).
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson over mismatched lengths");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// [1,C,H,W] batch → channel `c` as an [H,W] plane.
fn channel_plane<E: Element>(batch: &Tensor<E>, c: usize) -> Result<Tensor<E>> {
    match batch.shape() {
        [1, ch, h, w] if c < *ch => {
            let plane = h * w;
            Tensor::from_vec(vec![*h, *w], batch.data()[c * plane..][..plane].to_vec())
        }
        s => Err(Error::shape("channel_plane", format!("channel {c} of {s:?}"))),
    }
}

/// Trains the 3-channel VAE per seed, then exports input/reconstruction
/// triplets and joint position matrices for 8 fixed test digits from the
/// first seed's model, with the digit-mask correlation per sample.
pub fn exp_vae<E: Element>(opts: &ExpOptions) -> Result<ExperimentReport> {
    opts.validate()?;
    let t0 = Instant::now();
    let (train_raw, test_raw) = load_mnist_raw::<E>(&opts.data_dir)?;
    let (art_dir, art_name) = artifact_layout(&opts.report_path);
    std::fs::create_dir_all(&art_dir).map_err(|e| Error::io(&art_dir, e))?;

    let spec = VaeSpec { latent_dim: opts.latent_dim, beta: opts.beta, ..VaeSpec::default() };
    let mut runs = Vec::new();
    let mut sample_model = None;
    for &seed in &opts.seeds {
        let train_n = opts.subset.unwrap_or(45_000);
        let (train_split, _) = split_train_val(train_raw.clone(), train_n, 0, seed)?;
        let config = TrainConfig {
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            lr: opts.lr,
            optimizer: OptimizerKind::Adam,
            seed,
            use_coords: true,
            precision: Dtype2::from(E::DTYPE),
            patience: 0,
            checkpoint_path: None,
        };
        let mut vae = build_vae::<E>(spec, &RngState::new(seed))?;
        let history = train_vae(&mut vae, &train_split, &config)?;
        let totals: Vec<f64> = history.iter().map(|h| h.total).collect();
        runs.push(VaeSeedRun {
            seed,
            loss_decreased: totals.len() >= 2 && totals[totals.len() - 1] < totals[0],
            reconstruction_per_epoch: history.iter().map(|h| h.reconstruction).collect(),
            kl_per_epoch: history.iter().map(|h| h.kl).collect(),
            total_loss_per_epoch: totals,
        });
        if sample_model.is_none() {
            sample_model = Some(vae);
        }
    }
    let mut vae = sample_model.expect("seeds validated non-empty");

    let test = DatasetSplit::new("test", test_raw)?;
    let mut artifacts = Vec::new();
    let mut samples = Vec::new();
    for i in 0..8.min(test.len()) {
        let (imgs, labels) = test.gather(&[i])?;
        let x = append_coords_batch(&imgs)?;
        // Mean reconstruction: z = mu, no sampling noise.
        let eps = Tensor::zeros(&[1, vae.spec.latent_dim]);
        let (recon, _, _) = vae.forward_with_noise(&x, &eps, false)?;

        let in_planes =
            [channel_plane(&x, 0)?, channel_plane(&x, 1)?, channel_plane(&x, 2)?];
        let re_planes =
            [channel_plane(&recon, 0)?, channel_plane(&recon, 1)?, channel_plane(&recon, 2)?];
        let joint = joint_position_matrix(&re_planes[1], &re_planes[2])?;

        let files = [
            (format!("sample{i}-input.png"), hstack(&[&in_planes[0], &in_planes[1], &in_planes[2]])?),
            (format!("sample{i}-recon.png"), hstack(&[&re_planes[0], &re_planes[1], &re_planes[2]])?),
            (format!("sample{i}-joint.png"), joint.clone()),
        ];
        for (name, plane) in &files {
            write_grayscale_png(plane, &art_dir.join(name))?;
            artifacts.push(format!("{art_name}/{name}"));
        }

        let mask: Vec<f64> =
            in_planes[0].data().iter().map(|&v| if v.to_f64() > 0.5 { 1.0 } else { 0.0 }).collect();
        let joint_vals: Vec<f64> = joint.data().iter().map(|&v| v.to_f64()).collect();
        samples.push(VaeSample {
            index: i,
            label: labels[0] as u8,
            input_image: format!("{art_name}/{}", files[0].0),
            reconstruction_image: format!("{art_name}/{}", files[1].0),
            joint_position_image: format!("{art_name}/{}", files[2].0),
            mask_correlation: pearson(&joint_vals, &mask),
        });
    }

    let mut report = base_report("vae", opts.echo::<E>(true), opts.seeds.clone());
    report.reference.note = "the position-matrix reconstruction was reported qualitatively; \
                             per-sample digit-mask correlations are logged, nothing is gated"
        .into();
    report.vae = Some(VaeSection { runs, samples });
    report.artifacts = artifacts;
    report.wall_clock_seconds = t0.elapsed().as_secs_f64();
    report.write(&opts.report_path)?;
    Ok(report)
}
