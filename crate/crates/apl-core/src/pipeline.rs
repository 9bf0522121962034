//! End-to-end orchestration: preprocess, feature extraction, clustering,
//! weak-label assignment, classifier training, dense prediction, and
//! evaluation, driven by one config with every stage artifact on disk.
//!
//! Stages are skipped when their outputs are newer than their inputs, and a
//! stage that does run re-reads its own artifact afterwards, so downstream
//! stages always consume the file-quantized values. Reruns therefore
//! reproduce the same report whether stages were cached or not.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use serde::{Deserialize, Serialize};

use crate::clustering::{
    kmeans_fit, load_assignments, load_cluster_model, save_assignments, save_cluster_model,
    standardize_rows, KmeansOptions,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    rasterize_point_labels, roc_auc, threshold_prediction, CellLabel, RocCurve,
};
use crate::features::{
    compute_features, extract_patches, load_features, save_features, DescriptorKind,
    DescriptorParams, FeatureMatrix, HogParams, PatchKey,
};
use crate::gbdt::{train_gbdt, GbdtParams, TreeEnsemble};
use crate::inference::{load_prediction, save_prediction, sliding_window_predict};
use crate::labeling::{
    build_training_set, cluster_relevance_counted, label_clusters, map_points_to_patches,
    BalanceOptions, ClusterLabeling, LabelRule, LabeledPatchSet, PatchPointCounts, PointLabelSet,
    RelevanceCount,
};
use crate::preprocess::{detect_shadow_mask, remove_shadows, ShadowParams};
use crate::raster::{load_image, load_mask, save_image, save_mask, Extent};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Directory of input images (`.png`, `.tif`/`.tiff`). Optional
    /// `<id>.truth.png` masks alongside enable IoU evaluation.
    pub input_dir: PathBuf,
    /// Ground point labels CSV (`image_id,x,y,class`).
    pub ground_labels: PathBuf,
    /// Output directory for every stage artifact.
    pub out_dir: PathBuf,
    /// Class id counted as positive.
    pub target_class: String,
    pub patch_size: u32,
    pub cluster_k: usize,
    pub labeling_rule: String,
    pub cluster_descriptor: String,
    pub train_descriptor: String,
    pub window: u32,
    pub step: u32,
    /// Square subarea edge used for the train/test split.
    pub subarea_size: u32,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_rel_tol: f64,
    /// Standardize feature dimensions before clustering.
    pub standardize_features: bool,
    /// Count at most one target observation per patch in cluster relevance.
    pub relevance_patch_presence: bool,
    pub shadow: ShadowParams,
    pub hog: HogParams,
    pub color_bins: usize,
    pub negatives_per_positive: Option<f64>,
    pub balance_seed: u64,
    pub gbdt: GbdtParams,
    pub gbdt_seed: u64,
    /// Score threshold for the mask bridge used by IoU evaluation.
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_dir: PathBuf::new(),
            ground_labels: PathBuf::new(),
            out_dir: PathBuf::new(),
            target_class: "target".into(),
            patch_size: 100,
            cluster_k: 20,
            labeling_rule: "gap".into(),
            cluster_descriptor: "hog+color".into(),
            train_descriptor: "hog".into(),
            window: 100,
            step: 10,
            subarea_size: 100,
            split_fraction: 0.75,
            split_seed: 7,
            kmeans_seed: 7,
            kmeans_max_iter: 300,
            kmeans_rel_tol: 1e-6,
            standardize_features: false,
            relevance_patch_presence: false,
            shadow: ShadowParams::default(),
            hog: HogParams::default(),
            color_bins: 8,
            negatives_per_positive: Some(3.0),
            balance_seed: 7,
            gbdt: GbdtParams::default(),
            gbdt_seed: 7,
            threshold: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn load_json(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Format {
            what: "pipeline config",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    fn cluster_params(&self) -> Result<DescriptorParams> {
        self.descriptor_params(&self.cluster_descriptor)
    }

    fn train_params(&self) -> Result<DescriptorParams> {
        self.descriptor_params(&self.train_descriptor)
    }

    fn descriptor_params(&self, kind: &str) -> Result<DescriptorParams> {
        let kind: DescriptorKind = kind.parse().map_err(Error::Config)?;
        Ok(DescriptorParams {
            kind,
            hog: self.hog,
            color_bins: self.color_bins,
        })
    }

    fn rule(&self) -> Result<LabelRule> {
        self.labeling_rule.parse().map_err(Error::Config)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0 < self.split_fraction && self.split_fraction < 1.0) {
            return fail(format!(
                "split_fraction {} must lie in (0,1)",
                self.split_fraction
            ));
        }
        if self.window != self.patch_size {
            return fail(format!(
                "window {} must equal patch_size {} so the classifier sees the trained dimensionality",
                self.window, self.patch_size
            ));
        }
        if !self.window.is_multiple_of(self.step) {
            return fail(format!(
                "window {} must be a multiple of step {}",
                self.window, self.step
            ));
        }
        if !self.subarea_size.is_multiple_of(self.patch_size) {
            return fail(format!(
                "subarea_size {} must be a multiple of patch_size {}",
                self.subarea_size, self.patch_size
            ));
        }
        if !self.subarea_size.is_multiple_of(self.step) {
            return fail(format!(
                "subarea_size {} must be a multiple of step {}",
                self.subarea_size, self.step
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold {} must lie in [0,1]", self.threshold));
        }
        self.cluster_params()?;
        self.train_params()?;
        self.rule()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub images: usize,
    pub labeled_images: usize,
    pub subareas: usize,
    pub train_subareas: usize,
    pub test_subareas: usize,
    pub clustered_patches: usize,
    pub relevance: Vec<f64>,
    pub positive_clusters: Vec<usize>,
    pub rule: String,
    pub train_positives: usize,
    pub train_negatives: usize,
    pub auc: f64,
    pub roc_points: usize,
    pub accuracy: Option<f64>,
    pub iou: Option<f64>,
    pub stage_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubareaRecord {
    image_id: String,
    x: u32,
    y: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRecord {
    subarea_size: u32,
    train: Vec<SubareaRecord>,
    test: Vec<SubareaRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub iou: Option<f64>,
    pub roc: Vec<[f64; 2]>,
}

impl MetricsReport {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(|e| Error::Format {
        what: "json artifact",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Writes only when the serialized bytes differ, so unchanged cheap artifacts
/// keep their mtime and downstream stages stay fresh.
fn write_json_if_changed<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format {
        what: "json artifact",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    bytes.push(b'\n');
    if let Ok(existing) = std::fs::read(path) {
        if existing == bytes {
            return Ok(());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn mtime(path: &Path) -> Option<SystemTime> {
    std::fs::metadata(path).and_then(|m| m.modified()).ok()
}

/// True when every output exists and none is older than any input.
fn fresh(outputs: &[PathBuf], inputs: &[PathBuf]) -> bool {
    let mut oldest_out: Option<SystemTime> = None;
    for o in outputs {
        match mtime(o) {
            None => return false,
            Some(t) => oldest_out = Some(oldest_out.map_or(t, |c| c.min(t))),
        }
    }
    let mut newest_in: Option<SystemTime> = None;
    for i in inputs {
        if let Some(t) = mtime(i) {
            newest_in = Some(newest_in.map_or(t, |c| c.max(t)));
        }
    }
    match (oldest_out, newest_in) {
        (Some(o), Some(i)) => o >= i,
        (Some(_), None) => true,
        _ => false,
    }
}

struct ImageEntry {
    id: String,
    source: PathBuf,
    truth: Option<PathBuf>,
    labeled: bool,
}

fn discover_images(config: &PipelineConfig, labeled_ids: &[String]) -> Result<Vec<ImageEntry>> {
    let dir = &config.input_dir;
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut images = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if !matches!(ext.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        // sidecars are not corpus images
        if stem.ends_with(".truth") || stem.ends_with(".shadow") {
            continue;
        }
        let truth = path.with_file_name(format!("{stem}.truth.png"));
        images.push(ImageEntry {
            id: stem.to_string(),
            source: path.clone(),
            truth: truth.exists().then_some(truth),
            labeled: labeled_ids.contains(&stem.to_string()),
        });
    }
    images.sort_by(|a, b| a.id.cmp(&b.id));
    if images.is_empty() {
        return Err(Error::Config(format!(
            "no input images found in {}",
            dir.display()
        )));
    }
    if !images.iter().any(|i| i.labeled) {
        return Err(Error::Config("no input image carries ground labels".into()));
    }
    Ok(images)
}

fn subarea_split(
    config: &PipelineConfig,
    images: &[ImageEntry],
    dims: &BTreeMap<String, (u32, u32)>,
) -> Result<SplitRecord> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut subareas = Vec::new();
    for img in images.iter().filter(|i| i.labeled) {
        let (w, h) = dims[&img.id];
        let cells = crate::raster::tessellate(&Extent::of_image(w, h), config.subarea_size)?;
        for c in cells {
            subareas.push(SubareaRecord {
                image_id: img.id.clone(),
                x: c.x,
                y: c.y,
            });
        }
    }
    let n = subareas.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "need at least 2 subareas to split, got {n}; lower subarea_size"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.split_seed);
    order.shuffle(&mut rng);
    let n_train = ((n as f64 * config.split_fraction).round() as usize).clamp(1, n - 1);
    let mut train: Vec<SubareaRecord> = order[..n_train]
        .iter()
        .map(|&i| subareas[i].clone())
        .collect();
    let mut test: Vec<SubareaRecord> = order[n_train..]
        .iter()
        .map(|&i| subareas[i].clone())
        .collect();
    let key = |s: &SubareaRecord| (s.image_id.clone(), s.y, s.x);
    train.sort_by_key(key);
    test.sort_by_key(key);
    Ok(SplitRecord {
        subarea_size: config.subarea_size,
        train,
        test,
    })
}

/// Membership test for (image, pixel) in a subarea list.
struct SubareaSet {
    size: u32,
    members: std::collections::HashMap<String, std::collections::HashSet<(u32, u32)>>,
}

impl SubareaSet {
    fn new(size: u32, records: &[SubareaRecord]) -> SubareaSet {
        let mut members: std::collections::HashMap<String, std::collections::HashSet<(u32, u32)>> =
            std::collections::HashMap::new();
        for r in records {
            members
                .entry(r.image_id.clone())
                .or_default()
                .insert((r.x, r.y));
        }
        SubareaSet { size, members }
    }

    fn contains_pixel(&self, image_id: &str, x: u32, y: u32) -> bool {
        let sx = x / self.size * self.size;
        let sy = y / self.size * self.size;
        self.members
            .get(image_id)
            .is_some_and(|s| s.contains(&(sx, sy)))
    }

    fn contains_point(&self, image_id: &str, x: f64, y: f64) -> bool {
        let sx = (x / self.size as f64).floor() as i64;
        let sy = (y / self.size as f64).floor() as i64;
        if sx < 0 || sy < 0 {
            return false;
        }
        self.members
            .get(image_id)
            .is_some_and(|s| s.contains(&(sx as u32 * self.size, sy as u32 * self.size)))
    }
}

struct StageTimer {
    seconds: BTreeMap<String, f64>,
}

impl StageTimer {
    fn new() -> StageTimer {
        StageTimer {
            seconds: BTreeMap::new(),
        }
    }

    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.seconds
            .insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

/// Runs the full workflow and writes `report.json` into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out.join("corrected")).map_err(|e| Error::io(out, e))?;
    std::fs::create_dir_all(out.join("pred")).map_err(|e| Error::io(out, e))?;

    let config_path = out.join("resolved_config.json");
    write_json_if_changed(&config_path, config)?;

    let ground = PointLabelSet::load_csv(&config.ground_labels)?;
    let labeled_ids: Vec<String> = {
        let mut ids: Vec<String> = ground.points.iter().map(|p| p.image_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    };
    let images = discover_images(config, &labeled_ids)?;
    let mut timer = StageTimer::new();

    // preprocess: shadow-correct every image
    let corrected_paths: Vec<PathBuf> = images
        .iter()
        .map(|img| out.join("corrected").join(format!("{}.png", img.id)))
        .collect();
    timer.run("preprocess", || {
        for (img, corrected) in images.iter().zip(&corrected_paths) {
            let mask_path = out.join("corrected").join(format!("{}.shadow.png", img.id));
            let inputs = vec![img.source.clone(), config_path.clone()];
            if fresh(&[corrected.clone(), mask_path.clone()], &inputs) {
                continue;
            }
            let raster = load_image(&img.source)?;
            let mask = detect_shadow_mask(&raster, &config.shadow);
            let fixed = remove_shadows(&raster, &mask, &config.shadow)?;
            save_image(&fixed, corrected)?;
            save_mask(&mask, &mask_path)?;
        }
        Ok(())
    })?;

    // split labeled images into train/test subareas
    let split_path = out.join("split.json");
    let split = timer.run("split", || {
        let mut dims = BTreeMap::new();
        for (img, corrected) in images.iter().zip(&corrected_paths) {
            let (w, h) = image::image_dimensions(corrected).map_err(|e| Error::ImageDecode {
                path: corrected.clone(),
                source: e,
            })?;
            if img.labeled && (w % config.subarea_size != 0 || h % config.subarea_size != 0) {
                return Err(Error::Config(format!(
                    "labeled image {} is {w}x{h}, not divisible by subarea_size {}",
                    img.id, config.subarea_size
                )));
            }
            if w % config.step != 0 || h % config.step != 0 {
                return Err(Error::Config(format!(
                    "image {} is {w}x{h}, not divisible by step {}",
                    img.id, config.step
                )));
            }
            dims.insert(img.id.clone(), (w, h));
        }
        let split = subarea_split(config, &images, &dims)?;
        write_json_if_changed(&split_path, &split)?;
        Ok(split)
    })?;
    let train_set = SubareaSet::new(config.subarea_size, &split.train);
    let test_set = SubareaSet::new(config.subarea_size, &split.test);

    // features: per-patch descriptors for both stages
    let cluster_feat_path = out.join("features_cluster.aplfeat");
    let train_feat_path = out.join("features_train.aplfeat");
    let (cluster_features, train_features) = timer.run("features", || {
        let mut inputs = corrected_paths.clone();
        inputs.push(config_path.clone());
        if !fresh(
            &[cluster_feat_path.clone(), train_feat_path.clone()],
            &inputs,
        ) {
            let cluster_params = config.cluster_params()?;
            let train_params = config.train_params()?;
            let mut cluster_all: Option<FeatureMatrix> = None;
            let mut train_all: Option<FeatureMatrix> = None;
            for (img, corrected) in images.iter().zip(&corrected_paths) {
                let raster = load_image(corrected)?;
                let grid = extract_patches(
                    &img.id,
                    &raster.extent(),
                    config.patch_size,
                    config.patch_size,
                )?;
                for (params, slot) in [
                    (&cluster_params, &mut cluster_all),
                    (&train_params, &mut train_all),
                ] {
                    let m = compute_features(&raster, &grid, params)?;
                    match slot {
                        None => *slot = Some(m),
                        Some(acc) => {
                            for i in 0..m.len() {
                                acc.push_row(m.keys[i].clone(), m.row(i));
                            }
                        }
                    }
                }
            }
            save_features(
                &cluster_all.expect("at least one image"),
                &cluster_feat_path,
            )?;
            save_features(&train_all.expect("at least one image"), &train_feat_path)?;
        }
        Ok((
            load_features(&cluster_feat_path)?,
            load_features(&train_feat_path)?,
        ))
    })?;

    // cluster: k-means over train-region patches (all patches of unlabeled images)
    let km_path = out.join("model.aplkm");
    let assign_path = out.join("assignments.csv");
    let (clustered_keys, assignment) = timer.run("cluster", || {
        let in_train = |key: &PatchKey, labeled: bool| {
            !labeled || train_set.contains_pixel(&key.image_id, key.x, key.y)
        };
        let labeled_lookup: BTreeMap<&str, bool> =
            images.iter().map(|i| (i.id.as_str(), i.labeled)).collect();
        let selected: Vec<usize> = (0..cluster_features.len())
            .filter(|&i| {
                let key = &cluster_features.keys[i];
                in_train(key, labeled_lookup[key.image_id.as_str()])
            })
            .collect();
        let rows = cluster_features.select(&selected);
        let inputs = vec![
            cluster_feat_path.clone(),
            split_path.clone(),
            config_path.clone(),
        ];
        if !fresh(&[km_path.clone(), assign_path.clone()], &inputs) {
            let opts = KmeansOptions {
                k: config.cluster_k,
                seed: config.kmeans_seed,
                max_iter: config.kmeans_max_iter,
                rel_tol: config.kmeans_rel_tol,
            };
            let (model, assignment) = if config.standardize_features {
                kmeans_fit(&standardize_rows(&rows), &opts)?
            } else {
                kmeans_fit(&rows, &opts)?
            };
            save_cluster_model(&model, &km_path)?;
            save_assignments(&rows.keys, &assignment, &assign_path)?;
        }
        let _ = load_cluster_model(&km_path)?;
        load_assignments(&assign_path)
    })?;

    // assign: relevance, cluster labeling, and the labeled training set
    let labeling_path = out.join("labeling.json");
    let train_labels_path = out.join("train_labels.csv");
    let (labeling, train_set_labels) = timer.run("assign", || {
        let inputs = vec![
            assign_path.clone(),
            config.ground_labels.clone(),
            split_path.clone(),
            config_path.clone(),
        ];
        if !fresh(&[labeling_path.clone(), train_labels_path.clone()], &inputs) {
            // per-patch counts over the clustered keys
            let key_index: BTreeMap<&PatchKey, usize> = clustered_keys
                .iter()
                .enumerate()
                .map(|(i, k)| (k, i))
                .collect();
            let mut counts = PatchPointCounts {
                counts: vec![BTreeMap::new(); clustered_keys.len()],
            };
            for img in images.iter().filter(|i| i.labeled) {
                let corrected = out.join("corrected").join(format!("{}.png", img.id));
                let (w, h) =
                    image::image_dimensions(&corrected).map_err(|e| Error::ImageDecode {
                        path: corrected.clone(),
                        source: e,
                    })?;
                let grid = extract_patches(
                    &img.id,
                    &Extent::of_image(w, h),
                    config.patch_size,
                    config.patch_size,
                )?;
                let in_train = PointLabelSet {
                    points: ground
                        .points
                        .iter()
                        .filter(|p| {
                            p.image_id == img.id && train_set.contains_point(&p.image_id, p.x, p.y)
                        })
                        .cloned()
                        .collect(),
                };
                let per_patch = map_points_to_patches(&in_train, &grid, &Extent::of_image(w, h))?;
                for (i, &(x, y)) in grid.origins.iter().enumerate() {
                    if per_patch.counts[i].is_empty() {
                        continue;
                    }
                    let key = PatchKey::new(img.id.clone(), x, y);
                    let Some(&slot) = key_index.get(&key) else {
                        // points of train subareas always land in clustered
                        // patches; anything else would be a split bug
                        return Err(Error::Config(format!(
                            "point landed in unclustered patch {key}"
                        )));
                    };
                    counts.counts[slot] = per_patch.counts[i].clone();
                }
            }
            let mode = if config.relevance_patch_presence {
                RelevanceCount::PatchPresence
            } else {
                RelevanceCount::Observations
            };
            let relevance = cluster_relevance_counted(
                &assignment,
                &counts,
                config.cluster_k,
                &config.target_class,
                mode,
            );
            let labeling = label_clusters(&relevance, &config.rule()?)?;
            labeling.save_json(&labeling_path)?;
            let training = build_training_set(
                &clustered_keys,
                &assignment,
                &labeling,
                &BalanceOptions {
                    negatives_per_positive: config.negatives_per_positive,
                    seed: config.balance_seed,
                },
            );
            training.save_csv(&train_labels_path)?;
        }
        Ok((
            ClusterLabeling::load_json(&labeling_path)?,
            LabeledPatchSet::load_csv(&train_labels_path)?,
        ))
    })?;

    // train the boosted classifier on the labeled patches
    let gbdt_path = out.join("model.json");
    let ensemble = timer.run("train", || {
        let inputs = vec![
            train_feat_path.clone(),
            train_labels_path.clone(),
            config_path.clone(),
        ];
        if !fresh(std::slice::from_ref(&gbdt_path), &inputs) {
            let by_key = train_features.index_by_key();
            let mut indices = Vec::with_capacity(train_set_labels.keys.len());
            for key in &train_set_labels.keys {
                match by_key.get(key) {
                    Some(&i) => indices.push(i),
                    None => {
                        return Err(Error::MissingFeatureKey {
                            path: train_feat_path.clone(),
                            image_id: key.image_id.clone(),
                            x: key.x,
                            y: key.y,
                        })
                    }
                }
            }
            let rows = train_features.select(&indices);
            let model = train_gbdt(
                &rows,
                &train_set_labels.labels,
                &config.gbdt,
                config.gbdt_seed,
            )?;
            model.save_json(&gbdt_path)?;
        }
        TreeEnsemble::load_json(&gbdt_path)
    })?;

    // dense prediction over every labeled image
    timer.run("predict", || {
        let train_params = config.train_params()?;
        for img in images.iter().filter(|i| i.labeled) {
            let corrected = out.join("corrected").join(format!("{}.png", img.id));
            let pred_path = out.join("pred").join(format!("{}.png", img.id));
            let side_path = out.join("pred").join(format!("{}.json", img.id));
            let inputs = vec![corrected.clone(), gbdt_path.clone(), config_path.clone()];
            if fresh(&[pred_path.clone(), side_path.clone()], &inputs) {
                continue;
            }
            let raster = load_image(&corrected)?;
            let map = sliding_window_predict(
                &raster,
                &ensemble,
                config.window,
                config.step,
                &train_params,
            )?;
            save_prediction(&map, &pred_path)?;
        }
        Ok(())
    })?;

    // evaluate on the held-out subareas
    let metrics_path = out.join("metrics.json");
    let (auc_curve, accuracy, iou) = timer.run("eval", || {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut pixel_matches = 0u64;
        let mut pixel_total = 0u64;
        let mut inter = 0u64;
        let mut union = 0u64;
        let mut any_truth = false;

        for img in images.iter().filter(|i| i.labeled) {
            let pred_path = out.join("pred").join(format!("{}.png", img.id));
            let map = load_prediction(&pred_path)?;
            let points = PointLabelSet {
                points: ground
                    .points
                    .iter()
                    .filter(|p| p.image_id == img.id)
                    .cloned()
                    .collect(),
            };
            let extent =
                Extent::of_image(map.grid_width * config.step, map.grid_height * config.step);
            let raster =
                rasterize_point_labels(&points, config.step, &extent, &config.target_class)?;
            for cy in 0..raster.grid_height {
                for cx in 0..raster.grid_width {
                    let in_test =
                        test_set.contains_pixel(&img.id, cx * config.step, cy * config.step);
                    if !in_test || map.coverage_at(cx, cy) == 0 {
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

            if let Some(truth_path) = &img.truth {
                any_truth = true;
                let truth = load_mask(truth_path)?;
                let pred_mask = threshold_prediction(&map, config.threshold, config.step);
                for y in 0..pred_mask.height.min(truth.height) {
                    for x in 0..pred_mask.width.min(truth.width) {
                        if !test_set.contains_pixel(&img.id, x, y) {
                            continue;
                        }
                        if map.coverage_at(x / config.step, y / config.step) == 0 {
                            continue;
                        }
                        let p = pred_mask.get(x, y);
                        let t = truth.get(x, y);
                        pixel_total += 1;
                        pixel_matches += u64::from(p == t);
                        inter += u64::from(p == 1 && t == 1);
                        union += u64::from(p == 1 || t == 1);
                    }
                }
            }
        }

        let curve = roc_auc(&scores, &labels, None)?;
        let (accuracy, iou) = if any_truth && pixel_total > 0 {
            (
                Some(pixel_matches as f64 / pixel_total as f64),
                Some(if union == 0 {
                    1.0
                } else {
                    inter as f64 / union as f64
                }),
            )
        } else {
            (None, None)
        };
        let metrics = MetricsReport {
            auc: Some(curve.auc),
            accuracy,
            iou,
            roc: curve
                .fpr
                .iter()
                .zip(&curve.tpr)
                .map(|(&f, &t)| [f, t])
                .collect(),
        };
        write_json_if_changed(&metrics_path, &metrics)?;
        Ok((curve, accuracy, iou))
    })?;

    let report = RunReport {
        config: config.clone(),
        images: images.len(),
        labeled_images: images.iter().filter(|i| i.labeled).count(),
        subareas: split.train.len() + split.test.len(),
        train_subareas: split.train.len(),
        test_subareas: split.test.len(),
        clustered_patches: clustered_keys.len(),
        relevance: labeling.relevance.clone(),
        positive_clusters: labeling.positive.clone(),
        rule: labeling.rule.clone(),
        train_positives: train_set_labels.positives(),
        train_negatives: train_set_labels.negatives(),
        auc: auc_curve.auc,
        roc_points: auc_curve.fpr.len(),
        accuracy,
        iou,
        stage_seconds: timer.seconds,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// The ROC curve recomputed from a finished run's metrics file.
pub fn load_metrics(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Format {
        what: "metrics json",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Rebuilds a plottable curve from stored (fpr, tpr) pairs.
pub fn curve_from_metrics(metrics: &MetricsReport) -> RocCurve {
    let fpr: Vec<f64> = metrics.roc.iter().map(|p| p[0]).collect();
    let tpr: Vec<f64> = metrics.roc.iter().map(|p| p[1]).collect();
    RocCurve {
        thresholds: vec![f64::NAN; fpr.len()],
        fpr,
        tpr,
        auc: metrics.auc.unwrap_or(f64::NAN),
    }
}
