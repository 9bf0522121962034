//! `apl`: weakly supervised image categorization from the command line.
//!
//! Per-stage subcommands write their artifacts to disk; `run` drives the
//! whole workflow from a JSON config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use apl_core::clustering::{
    kmeans_fit, load_assignments, save_assignments, save_cluster_model, KmeansOptions,
};
use apl_core::evaluation::{
    majority_vote_masks, polygons_to_mask, rasterize_point_labels, roc_auc, roc_svg,
    threshold_prediction, CellLabel, PolygonAnnotation,
};
use apl_core::features::{
    compute_features, extract_patches, load_features, save_features, DescriptorKind,
    DescriptorParams, FeatureMatrix, HogParams, PatchKey,
};
use apl_core::gbdt::{train_gbdt, GbdtParams, TreeEnsemble};
use apl_core::inference::{load_prediction, save_prediction, sliding_window_predict};
use apl_core::labeling::{
    build_training_set, cluster_relevance, label_clusters, map_points_to_patches, BalanceOptions,
    LabelRule, LabeledPatchSet, PatchPointCounts, PointLabelSet,
};
use apl_core::pipeline::{
    curve_from_metrics, load_metrics, run_pipeline, MetricsReport, PipelineConfig,
};
use apl_core::preprocess::{detect_shadow_mask, remove_shadows, ShadowParams};
use apl_core::raster::{load_image, load_mask, save_image, save_mask, Extent};
use apl_core::synthetic::{generate_forest, ForestParams};

#[derive(Parser)]
#[command(
    name = "apl",
    version,
    about = "Weakly supervised image categorization workflow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic forest image, truth mask, and trunk labels.
    Synth(SynthArgs),
    /// Shadow-correct every image in a directory.
    Preprocess(PreprocessArgs),
    /// Extract per-patch descriptors into a feature file.
    Features(FeaturesArgs),
    /// Cluster patch features with k-means.
    Cluster(ClusterArgs),
    /// Score cluster relevance from point labels and emit a training set.
    Assign(AssignArgs),
    /// Train the boosted tree classifier on labeled patch features.
    Train(TrainArgs),
    /// Slide the classifier over an image into a dense prediction map.
    Predict(PredictArgs),
    /// Evaluate a prediction against point labels or a reference mask.
    Eval(EvalArgs),
    /// Render the ROC curve of a metrics file as SVG.
    RocPlot(RocPlotArgs),
    /// Run the full workflow from a JSON config.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = ForestParams::default().image_size)]
    size: u32,
    #[arg(long, default_value_t = ForestParams::default().n_target)]
    targets: usize,
    #[arg(long, default_value_t = ForestParams::default().n_background)]
    background: usize,
    /// Maximum trunk offset from the canopy center, in pixels.
    #[arg(long, default_value_t = ForestParams::default().trunk_offset_max)]
    offset: f64,
    #[arg(long, default_value_t = ForestParams::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = ForestParams::default().radius_min)]
    radius_min: f64,
    #[arg(long, default_value_t = ForestParams::default().radius_max)]
    radius_max: f64,
    #[arg(long, default_value_t = ForestParams::default().texture_arms)]
    arms: u32,
    /// Output prefix; writes `<prefix>.png`, `<prefix>.truth.png`,
    /// `<prefix>.labels.csv`.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.6)]
    threshold_factor: f64,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    patch: u32,
    #[arg(long, default_value_t = 100)]
    stride: u32,
    #[arg(long, default_value = "hog+color")]
    extractor: String,
    #[arg(long, default_value_t = 8)]
    color_bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    assignments: PathBuf,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    assignments: PathBuf,
    /// Ground point labels CSV (`image_id,x,y,class`).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "target")]
    target: String,
    /// gap | top:M | ids:A,B | thresh:T
    #[arg(long, default_value = "gap")]
    rule: String,
    #[arg(long, default_value_t = 100)]
    patch: u32,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Negatives kept per positive; omit to keep all.
    #[arg(long)]
    neg_ratio: Option<f64>,
    #[arg(long, default_value_t = 7)]
    balance_seed: u64,
    #[arg(long)]
    labeling: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    min_child_weight: f64,
    #[arg(long, default_value_t = 0.5)]
    base_score: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    window: u32,
    #[arg(long, default_value_t = 10)]
    step: u32,
    #[arg(long, default_value = "hog")]
    extractor: String,
    #[arg(long, default_value_t = 8)]
    color_bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Ground point labels CSV for ROC/AUC.
    #[arg(long)]
    ground: Option<PathBuf>,
    #[arg(long, default_value = "target")]
    target: String,
    /// Reference mask PNG for accuracy/IoU.
    #[arg(long)]
    refmask: Option<PathBuf>,
    /// Polygon annotation JSON files; several are majority-voted into the
    /// reference mask.
    #[arg(long, value_delimiter = ',')]
    polygons: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RocPlotArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => synth(args),
        Command::Preprocess(args) => preprocess(args),
        Command::Features(args) => features(args),
        Command::Cluster(args) => cluster(args),
        Command::Assign(args) => assign(args),
        Command::Train(args) => train(args),
        Command::Predict(args) => predict(args),
        Command::Eval(args) => eval(args),
        Command::RocPlot(args) => roc_plot(args),
        Command::Run(args) => run(args),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let prefix = &args.out_prefix;
    let image_id = prefix
        .file_name()
        .and_then(|s| s.to_str())
        .context("out-prefix needs a file name component")?
        .to_string();
    let params = ForestParams {
        image_id,
        image_size: args.size,
        n_target: args.targets,
        n_background: args.background,
        radius_min: args.radius_min,
        radius_max: args.radius_max,
        trunk_offset_max: args.offset,
        texture_arms: args.arms,
        seed: args.seed,
        ..ForestParams::default()
    };
    let (img, truth, points) = generate_forest(&params)?;
    let with_suffix = |suffix: &str| {
        let mut name = prefix.file_name().unwrap().to_os_string();
        name.push(suffix);
        prefix.with_file_name(name)
    };
    save_image(&img, with_suffix(".png"))?;
    save_mask(&truth, with_suffix(".truth.png"))?;
    points.save_csv(with_suffix(".labels.csv"))?;
    println!(
        "wrote {}.png, {}.truth.png, {}.labels.csv ({} labels)",
        prefix.display(),
        prefix.display(),
        prefix.display(),
        points.points.len()
    );
    Ok(())
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if !matches!(ext.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        if stem.ends_with(".truth") || stem.ends_with(".shadow") {
            continue;
        }
        files.push(path);
    }
    files.sort();
    if files.is_empty() {
        bail!("no png/tiff images in {}", dir.display());
    }
    Ok(files)
}

fn preprocess(args: PreprocessArgs) -> Result<()> {
    let params = ShadowParams {
        blur_sigma: args.sigma,
        threshold_factor: args.threshold_factor,
        ..ShadowParams::default()
    };
    std::fs::create_dir_all(&args.out)?;
    for path in image_files(&args.input)? {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap()
            .to_string();
        let img = load_image(&path)?;
        let mask = detect_shadow_mask(&img, &params);
        let fixed = remove_shadows(&img, &mask, &params)?;
        save_image(&fixed, args.out.join(format!("{stem}.png")))?;
        save_mask(&mask, args.out.join(format!("{stem}.shadow.png")))?;
        println!("{stem}: {} shadow pixels", mask.count_ones());
    }
    Ok(())
}

fn features(args: FeaturesArgs) -> Result<()> {
    let kind: DescriptorKind = args.extractor.parse().map_err(anyhow::Error::msg)?;
    let params = DescriptorParams {
        kind,
        hog: HogParams::default(),
        color_bins: args.color_bins,
    };
    let mut all: Option<FeatureMatrix> = None;
    for path in image_files(&args.input)? {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap()
            .to_string();
        let img = load_image(&path)?;
        let grid = extract_patches(&stem, &img.extent(), args.patch, args.stride)?;
        let m = compute_features(&img, &grid, &params)?;
        match &mut all {
            None => all = Some(m),
            Some(acc) => {
                for i in 0..m.len() {
                    acc.push_row(m.keys[i].clone(), m.row(i));
                }
            }
        }
    }
    let all = all.context("no features computed")?;
    save_features(&all, &args.out)?;
    println!(
        "wrote {} rows of dim {} to {}",
        all.len(),
        all.dim,
        args.out.display()
    );
    Ok(())
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let features = load_features(&args.features)?;
    let opts = KmeansOptions {
        k: args.k,
        seed: args.seed,
        max_iter: args.max_iter,
        rel_tol: args.rel_tol,
    };
    let (model, assignment) = kmeans_fit(&features, &opts)?;
    save_cluster_model(&model, &args.out)?;
    save_assignments(&features.keys, &assignment, &args.assignments)?;
    println!(
        "k={} dim={} inertia={:.4} after {} iterations",
        model.k, model.dim, model.inertia, model.iterations_run
    );
    Ok(())
}

fn assign(args: AssignArgs) -> Result<()> {
    let (keys, assignment) = load_assignments(&args.assignments)?;
    let points = PointLabelSet::load_csv(&args.labels)?;
    let rule: LabelRule = args.rule.parse().map_err(anyhow::Error::msg)?;

    // bucket points per image over the patch lattice implied by the keys
    let mut key_index: BTreeMap<&PatchKey, usize> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        key_index.insert(key, i);
    }
    let mut extents: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for key in &keys {
        let e = extents.entry(key.image_id.as_str()).or_insert((0, 0));
        e.0 = e.0.max(key.x + args.patch);
        e.1 = e.1.max(key.y + args.patch);
    }
    let mut counts = PatchPointCounts {
        counts: vec![BTreeMap::new(); keys.len()],
    };
    for (image_id, (w, h)) in &extents {
        let grid = extract_patches(image_id, &Extent::of_image(*w, *h), args.patch, args.patch)?;
        let image_points = PointLabelSet {
            points: points
                .points
                .iter()
                .filter(|p| p.image_id == *image_id)
                .cloned()
                .collect(),
        };
        let per_patch = map_points_to_patches(&image_points, &grid, &Extent::of_image(*w, *h))?;
        for (i, &(x, y)) in grid.origins.iter().enumerate() {
            if per_patch.counts[i].is_empty() {
                continue;
            }
            let key = PatchKey::new(image_id.to_string(), x, y);
            if let Some(&slot) = key_index.get(&key) {
                counts.counts[slot] = per_patch.counts[i].clone();
            }
        }
    }

    let relevance = cluster_relevance(&assignment, &counts, args.k, &args.target);
    let labeling = label_clusters(&relevance, &rule)?;
    labeling.save_json(&args.labeling)?;
    let training = build_training_set(
        &keys,
        &assignment,
        &labeling,
        &BalanceOptions {
            negatives_per_positive: args.neg_ratio,
            seed: args.balance_seed,
        },
    );
    training.save_csv(&args.train_labels)?;
    println!(
        "positive clusters {:?}; training set {} positives / {} negatives",
        labeling.positive,
        training.positives(),
        training.negatives()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let features = load_features(&args.features)?;
    let labeled = LabeledPatchSet::load_csv(&args.labels)?;
    let by_key = features.index_by_key();
    let mut indices = Vec::with_capacity(labeled.keys.len());
    for key in &labeled.keys {
        let Some(&i) = by_key.get(key) else {
            bail!("label key {key} not present in {}", args.features.display());
        };
        indices.push(i);
    }
    let rows = features.select(&indices);
    let params = GbdtParams {
        rounds: args.rounds,
        max_depth: args.depth,
        learning_rate: args.eta,
        l2_lambda: args.lambda,
        min_child_weight: args.min_child_weight,
        base_score: args.base_score,
        ..GbdtParams::default()
    };
    let model = train_gbdt(&rows, &labeled.labels, &params, args.seed)?;
    model.save_json(&args.out)?;
    println!(
        "trained {} trees on {} rows of dim {}",
        model.trees.len(),
        rows.len(),
        rows.dim
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = TreeEnsemble::load_json(&args.model)?;
    let kind: DescriptorKind = args.extractor.parse().map_err(anyhow::Error::msg)?;
    let params = DescriptorParams {
        kind,
        hog: HogParams::default(),
        color_bins: args.color_bins,
    };
    let img = load_image(&args.input)?;
    let map = sliding_window_predict(&img, &model, args.window, args.step, &params)?;
    save_prediction(&map, &args.out)?;
    println!(
        "prediction grid {}x{} cells of {} px -> {}",
        map.grid_width,
        map.grid_height,
        map.cell_size,
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let map = load_prediction(&args.pred)?;
    let mut metrics = MetricsReport {
        auc: None,
        accuracy: None,
        iou: None,
        roc: vec![],
    };

    if let Some(ground) = &args.ground {
        let points = PointLabelSet::load_csv(ground)?;
        let extent = Extent::of_image(
            map.grid_width * map.cell_size,
            map.grid_height * map.cell_size,
        );
        let raster = rasterize_point_labels(&points, map.cell_size, &extent, &args.target)?;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for cy in 0..raster.grid_height {
            for cx in 0..raster.grid_width {
                if map.coverage_at(cx, cy) == 0 {
                    continue;
                }
                match raster.label(cx, cy) {
                    CellLabel::Unlabeled => {}
                    CellLabel::Positive => {
                        scores.push(map.score(cx, cy));
                        labels.push(true);
                    }
                    CellLabel::Negative => {
                        scores.push(map.score(cx, cy));
                        labels.push(false);
                    }
                }
            }
        }
        let curve = roc_auc(&scores, &labels, None)?;
        metrics.auc = Some(curve.auc);
        metrics.roc = curve
            .fpr
            .iter()
            .zip(&curve.tpr)
            .map(|(&f, &t)| [f, t])
            .collect();
    }

    let reference = if !args.polygons.is_empty() {
        let extent = Extent::of_image(
            map.grid_width * map.cell_size,
            map.grid_height * map.cell_size,
        );
        let masks = args
            .polygons
            .iter()
            .map(|p| {
                Ok(polygons_to_mask(
                    &PolygonAnnotation::load_json(p)?,
                    &extent,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(majority_vote_masks(&masks)?)
    } else if let Some(refmask) = &args.refmask {
        Some(load_mask(refmask)?)
    } else {
        None
    };
    if let Some(reference) = reference {
        let pred_mask = threshold_prediction(&map, args.threshold, map.cell_size);
        let (accuracy, iou) = apl_core::evaluation::mask_metrics(&pred_mask, &reference)?;
        metrics.accuracy = Some(accuracy);
        metrics.iou = Some(iou);
    }

    if metrics.auc.is_none() && metrics.accuracy.is_none() {
        bail!("nothing to evaluate: pass --ground, --refmask or --polygons");
    }
    metrics.save_json(&args.out)?;
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
    println!(
        "auc={} accuracy={} iou={}",
        fmt(metrics.auc),
        fmt(metrics.accuracy),
        fmt(metrics.iou)
    );
    Ok(())
}

fn roc_plot(args: RocPlotArgs) -> Result<()> {
    let metrics = load_metrics(&args.metrics)?;
    if metrics.roc.is_empty() {
        bail!("{} contains no roc points", args.metrics.display());
    }
    let svg = roc_svg(&curve_from_metrics(&metrics));
    std::fs::write(&args.out, svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(workers) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool already initialized")?;
    }
    #[cfg(not(feature = "parallel"))]
    if args.workers.is_some_and(|w| w > 1) {
        eprintln!("note: built without the parallel feature; running single-threaded");
    }

    let config = PipelineConfig::load_json(&args.config)?;
    let report = run_pipeline(&config)?;
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
    println!(
        "auc={:.4} accuracy={} iou={} positives={:?}",
        report.auc,
        fmt(report.accuracy),
        fmt(report.iou),
        report.positive_clusters
    );
    println!("report: {}", config.out_dir.join("report.json").display());
    Ok(())
}
