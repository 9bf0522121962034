//! Weak supervision: turning scattered, misaligned point labels into
//! cluster-level relevance scores, binary prototype labels, and a patch-level
//! training set.
//!
//! Relevance of a cluster for a class is the number of point observations of
//! that class landing in the cluster's patches, divided by the cluster size
//! in patches.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::Assignment;
use crate::error::{Error, Result};
use crate::features::{PatchGrid, PatchKey};
use crate::raster::Extent;

/// One ground observation: a point location with a class id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPoint {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub class: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointLabelSet {
    pub points: Vec<GroundPoint>,
}

impl PointLabelSet {
    pub fn load_csv(path: impl AsRef<Path>) -> Result<PointLabelSet> {
        let path = path.as_ref();
        let bad = |detail: String| Error::Format {
            what: "point label csv",
            path: path.to_path_buf(),
            detail,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == "image_id,x,y,class" => {}
            _ => return Err(bad("expected header image_id,x,y,class".into())),
        }
        let mut points = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != 4 {
                return Err(bad(format!("line {}: expected 4 fields", ln + 2)));
            }
            points.push(GroundPoint {
                image_id: fields[0].to_string(),
                x: fields[1]
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad x", ln + 2)))?,
                y: fields[2]
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad y", ln + 2)))?,
                class: fields[3].to_string(),
            });
        }
        Ok(PointLabelSet { points })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        writeln!(w, "image_id,x,y,class").map_err(io_err)?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.image_id, p.x, p.y, p.class).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Per-patch class observation counts, aligned with a grid's patch order.
#[derive(Debug, Clone, Default)]
pub struct PatchPointCounts {
    pub counts: Vec<BTreeMap<String, u32>>,
}

impl PatchPointCounts {
    pub fn class_count(&self, patch: usize, class: &str) -> u32 {
        self.counts[patch].get(class).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts
            .iter()
            .map(|m| m.values().map(|&v| v as u64).sum::<u64>())
            .sum()
    }
}

/// Buckets each point into the disjoint patch containing it.
///
/// The grid must tile the image (stride equal to patch size). Points on the
/// right or bottom image boundary belong to the last patch along that axis;
/// points outside the extent are an error.
pub fn map_points_to_patches(
    points: &PointLabelSet,
    grid: &PatchGrid,
    extent: &Extent,
) -> Result<PatchPointCounts> {
    assert_eq!(
        grid.stride, grid.patch_size,
        "grid must be disjoint (stride = patch size)"
    );
    let size = grid.patch_size as f64;
    let cols = (extent.width / grid.patch_size) as usize;
    let rows = (extent.height / grid.patch_size) as usize;
    debug_assert_eq!(grid.origins.len(), cols * rows, "grid covers the extent");

    let mut counts = vec![BTreeMap::new(); grid.origins.len()];
    for p in points.points.iter().filter(|p| p.image_id == grid.image_id) {
        let (w, h) = (extent.width as f64, extent.height as f64);
        if p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h {
            return Err(Error::PointOutOfExtent {
                image_id: p.image_id.clone(),
                x: p.x,
                y: p.y,
                width: extent.width,
                height: extent.height,
            });
        }
        let col = ((p.x / size).floor() as usize).min(cols - 1);
        let row = ((p.y / size).floor() as usize).min(rows - 1);
        *counts[row * cols + col].entry(p.class.clone()).or_insert(0) += 1;
    }
    Ok(PatchPointCounts { counts })
}

/// How point observations enter the relevance numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelevanceCount {
    /// Every observation counts: a patch holding 2 points contributes 2.
    Observations,
    /// A patch contributes at most 1 no matter how many points it holds.
    PatchPresence,
}

/// Per-cluster relevance: target observations divided by cluster size in
/// patches. Empty clusters score 0.
pub fn cluster_relevance(
    assignment: &Assignment,
    counts: &PatchPointCounts,
    k: usize,
    target: &str,
) -> Vec<f64> {
    cluster_relevance_counted(assignment, counts, k, target, RelevanceCount::Observations)
}

pub fn cluster_relevance_counted(
    assignment: &Assignment,
    counts: &PatchPointCounts,
    k: usize,
    target: &str,
    mode: RelevanceCount,
) -> Vec<f64> {
    assert_eq!(
        assignment.labels.len(),
        counts.counts.len(),
        "aligned patch sets"
    );
    let mut obs = vec![0u64; k];
    let mut sizes = vec![0u64; k];
    let mut total = 0u64;
    for (patch, &cluster) in assignment.labels.iter().enumerate() {
        sizes[cluster] += 1;
        let c = match mode {
            RelevanceCount::Observations => counts.class_count(patch, target) as u64,
            RelevanceCount::PatchPresence => u64::from(counts.class_count(patch, target) > 0),
        };
        obs[cluster] += c;
        total += c;
    }
    // mass conservation: cluster counts must re-add to the total
    debug_assert_eq!(obs.iter().sum::<u64>(), total);
    obs.iter()
        .zip(&sizes)
        .map(|(&o, &s)| if s == 0 { 0.0 } else { o as f64 / s as f64 })
        .collect()
}

/// How positive clusters are chosen from the relevance vector.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelRule {
    /// Sort relevances descending and cut at the largest consecutive gap.
    Gap,
    /// The m most relevant clusters; ties at the cutoff go to lower indices.
    TopM(usize),
    /// Explicit cluster id list.
    Ids(Vec<usize>),
    /// Every cluster with relevance at or above the threshold.
    Threshold(f64),
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelRule::Gap => write!(f, "gap"),
            LabelRule::TopM(m) => write!(f, "top:{m}"),
            LabelRule::Ids(ids) => {
                write!(f, "ids:")?;
                for (i, id) in ids.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
            LabelRule::Threshold(t) => write!(f, "thresh:{t}"),
        }
    }
}

impl FromStr for LabelRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "gap" {
            return Ok(LabelRule::Gap);
        }
        if let Some(m) = s.strip_prefix("top:") {
            return m
                .parse()
                .map(LabelRule::TopM)
                .map_err(|_| format!("bad top rule `{s}`"));
        }
        if let Some(ids) = s.strip_prefix("ids:") {
            let ids: std::result::Result<Vec<usize>, _> = ids.split(',').map(str::parse).collect();
            return ids
                .map(LabelRule::Ids)
                .map_err(|_| format!("bad ids rule `{s}`"));
        }
        if let Some(t) = s.strip_prefix("thresh:") {
            return t
                .parse()
                .map(LabelRule::Threshold)
                .map_err(|_| format!("bad threshold rule `{s}`"));
        }
        Err(format!(
            "unknown rule `{s}`; use gap, top:M, ids:A,B or thresh:T"
        ))
    }
}

/// Relevance vector plus the chosen positive clusters and the rule used.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ClusterLabeling {
    pub relevance: Vec<f64>,
    pub positive: Vec<usize>,
    pub rule: String,
}

impl ClusterLabeling {
    pub fn is_positive(&self, cluster: usize) -> bool {
        self.positive.binary_search(&cluster).is_ok()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self).map_err(|e| Error::Format {
            what: "cluster labeling json",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<ClusterLabeling> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format {
            what: "cluster labeling json",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

/// Applies a labeling rule to a relevance vector.
pub fn label_clusters(relevance: &[f64], rule: &LabelRule) -> Result<ClusterLabeling> {
    let k = relevance.len();
    assert!(k >= 1, "at least one cluster");
    // order clusters by relevance descending, index ascending
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        relevance[b]
            .partial_cmp(&relevance[a])
            .expect("finite relevance")
            .then(a.cmp(&b))
    });

    let mut positive: Vec<usize> = match rule {
        LabelRule::Gap => {
            if relevance[order[0]] <= 0.0 {
                return Err(Error::EmptyPositiveSet);
            }
            let mut cut = 0usize; // positives are order[..=cut]
            let mut best_gap = f64::NEG_INFINITY;
            for i in 0..k - 1 {
                let gap = relevance[order[i]] - relevance[order[i + 1]];
                if gap > best_gap {
                    best_gap = gap;
                    cut = i;
                }
            }
            order[..=cut.min(k - 1)].to_vec()
        }
        LabelRule::TopM(m) => {
            if *m > k {
                return Err(Error::TopMExceedsK { m: *m, k });
            }
            if *m == 0 {
                return Err(Error::EmptyPositiveSet);
            }
            order[..*m].to_vec()
        }
        LabelRule::Ids(ids) => {
            if ids.is_empty() {
                return Err(Error::EmptyPositiveSet);
            }
            for &id in ids {
                if id >= k {
                    return Err(Error::Config(format!(
                        "cluster id {id} out of range (k={k})"
                    )));
                }
            }
            let mut ids = ids.clone();
            ids.sort_unstable();
            ids.dedup();
            ids
        }
        LabelRule::Threshold(t) => {
            let ids: Vec<usize> = (0..k).filter(|&c| relevance[c] >= *t).collect();
            if ids.is_empty() {
                return Err(Error::EmptyPositiveSet);
            }
            ids
        }
    };
    positive.sort_unstable();
    Ok(ClusterLabeling {
        relevance: relevance.to_vec(),
        positive,
        rule: rule.to_string(),
    })
}

/// Patch keys with their broadcast binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatchSet {
    pub keys: Vec<PatchKey>,
    pub labels: Vec<bool>,
}

impl LabeledPatchSet {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        writeln!(w, "image_id,x,y,label").map_err(io_err)?;
        for (key, &label) in self.keys.iter().zip(&self.labels) {
            writeln!(
                w,
                "{},{},{},{}",
                key.image_id,
                key.x,
                key.y,
                u8::from(label)
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledPatchSet> {
        let path = path.as_ref();
        let bad = |detail: String| Error::Format {
            what: "labeled patch csv",
            path: path.to_path_buf(),
            detail,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == "image_id,x,y,label" => {}
            _ => return Err(bad("expected header image_id,x,y,label".into())),
        }
        let mut keys = Vec::new();
        let mut labels = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != 4 {
                return Err(bad(format!("line {}: expected 4 fields", ln + 2)));
            }
            let x = fields[1]
                .parse()
                .map_err(|_| bad(format!("line {}: bad x", ln + 2)))?;
            let y = fields[2]
                .parse()
                .map_err(|_| bad(format!("line {}: bad y", ln + 2)))?;
            let label = match fields[3] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("line {}: bad label `{other}`", ln + 2))),
            };
            keys.push(PatchKey::new(fields[0], x, y));
            labels.push(label);
        }
        Ok(LabeledPatchSet { keys, labels })
    }
}

/// Negative subsampling policy for [`build_training_set`].
#[derive(Debug, Clone, Copy)]
pub struct BalanceOptions {
    /// Keep at most this many negatives per positive; `None` keeps all.
    pub negatives_per_positive: Option<f64>,
    pub seed: u64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        BalanceOptions {
            negatives_per_positive: Some(3.0),
            seed: 0,
        }
    }
}

/// Broadcasts cluster labels to member patches: positive iff the patch's
/// cluster is positive. Negatives are optionally subsampled (seeded) to the
/// configured ratio; output preserves the input key order.
pub fn build_training_set(
    keys: &[PatchKey],
    assignment: &Assignment,
    labeling: &ClusterLabeling,
    balance: &BalanceOptions,
) -> LabeledPatchSet {
    assert_eq!(keys.len(), assignment.labels.len(), "aligned patch sets");
    let flags: Vec<bool> = assignment
        .labels
        .iter()
        .map(|&c| labeling.is_positive(c))
        .collect();

    let keep_negatives: Vec<usize> = {
        let negatives: Vec<usize> = (0..keys.len()).filter(|&i| !flags[i]).collect();
        match balance.negatives_per_positive {
            None => negatives,
            Some(ratio) => {
                let n_pos = flags.iter().filter(|&&f| f).count();
                let want = ((n_pos as f64 * ratio).round() as usize).min(negatives.len());
                let mut rng = ChaCha8Rng::seed_from_u64(balance.seed);
                let mut chosen: Vec<usize> =
                    rand::seq::index::sample(&mut rng, negatives.len(), want)
                        .into_iter()
                        .map(|i| negatives[i])
                        .collect();
                chosen.sort_unstable();
                chosen
            }
        }
    };

    let mut keys_out =
        Vec::with_capacity(flags.iter().filter(|&&f| f).count() + keep_negatives.len());
    let mut labels_out = Vec::with_capacity(keys_out.capacity());
    let mut neg_iter = keep_negatives.iter().peekable();
    for (i, key) in keys.iter().enumerate() {
        if flags[i] {
            keys_out.push(key.clone());
            labels_out.push(true);
        } else if neg_iter.peek() == Some(&&i) {
            neg_iter.next();
            keys_out.push(key.clone());
            labels_out.push(false);
        }
    }
    LabeledPatchSet {
        keys: keys_out,
        labels: labels_out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(image_id: &str, width: u32, height: u32, size: u32) -> PatchGrid {
        crate::features::extract_patches(image_id, &Extent::of_image(width, height), size, size)
            .unwrap()
    }

    fn point(image_id: &str, x: f64, y: f64, class: &str) -> GroundPoint {
        GroundPoint {
            image_id: image_id.into(),
            x,
            y,
            class: class.into(),
        }
    }

    #[test]
    fn floor_mapping_and_boundary_conventions() {
        let g = grid("a", 400, 300, 100);
        let extent = Extent::of_image(400, 300);
        let points = PointLabelSet {
            points: vec![
                point("a", 250.0, 10.0, "palm"),
                point("a", 100.0, 0.0, "palm"),
                point("a", 400.0, 300.0, "palm"), // right/bottom boundary
            ],
        };
        let counts = map_points_to_patches(&points, &g, &extent).unwrap();
        // (250,10) -> patch origin (200,0) = col 2 row 0
        assert_eq!(counts.class_count(2, "palm"), 1);
        // boundary (100,0) -> patch origin (100,0), half-open cells
        assert_eq!(counts.class_count(1, "palm"), 1);
        // (400,300) clamps into the last patch (300,200)
        assert_eq!(counts.class_count(11, "palm"), 1);
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn out_of_extent_point_is_named() {
        let g = grid("a", 200, 200, 100);
        let points = PointLabelSet {
            points: vec![point("a", -5.0, 10.0, "palm")],
        };
        match map_points_to_patches(&points, &g, &Extent::of_image(200, 200)).unwrap_err() {
            Error::PointOutOfExtent { x, y, .. } => assert_eq!((x, y), (-5.0, 10.0)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn points_of_other_images_are_ignored() {
        let g = grid("a", 200, 100, 100);
        let points = PointLabelSet {
            points: vec![
                point("b", 50.0, 50.0, "palm"),
                point("a", 50.0, 50.0, "palm"),
            ],
        };
        let counts = map_points_to_patches(&points, &g, &Extent::of_image(200, 100)).unwrap();
        assert_eq!(counts.total(), 1);
    }

    #[test]
    fn relevance_definition_arithmetic() {
        // cluster of 300 patches with 30 target observations -> 0.1
        let labels: Vec<usize> = (0..400).map(|i| usize::from(i >= 300)).collect();
        let mut counts = PatchPointCounts {
            counts: vec![BTreeMap::new(); 400],
        };
        for patch in 0..30 {
            counts.counts[patch * 10].insert("palm".into(), 1);
        }
        let rel = cluster_relevance(&Assignment { labels }, &counts, 3, "palm");
        assert_eq!(rel[0], 0.1);
        assert_eq!(rel[1], 0.0);
        assert_eq!(rel[2], 0.0); // empty cluster
    }

    #[test]
    fn relevance_counts_multiple_observations_per_patch() {
        let labels = vec![0usize, 0];
        let mut counts = PatchPointCounts {
            counts: vec![BTreeMap::new(); 2],
        };
        counts.counts[0].insert("palm".into(), 2);
        counts.counts[1].insert("other".into(), 5);
        let assignment = Assignment { labels };
        let rel = cluster_relevance(&assignment, &counts, 1, "palm");
        assert_eq!(rel[0], 1.0); // 2 observations / 2 patches

        // the presence variant caps each patch at 1
        let rel = cluster_relevance_counted(
            &assignment,
            &counts,
            1,
            "palm",
            RelevanceCount::PatchPresence,
        );
        assert_eq!(rel[0], 0.5);
    }

    #[test]
    fn relevance_is_permutation_equivariant() {
        let labels = vec![0usize, 1, 2, 0, 1, 2, 2];
        let mut counts = PatchPointCounts {
            counts: vec![BTreeMap::new(); 7],
        };
        for (i, n) in [(0usize, 3u32), (1, 1), (4, 2), (6, 1)] {
            counts.counts[i].insert("t".into(), n);
        }
        let assignment = Assignment {
            labels: labels.clone(),
        };
        let rel = cluster_relevance(&assignment, &counts, 3, "t");

        // relabel clusters through the permutation 0->2, 1->0, 2->1
        let perm = [2usize, 0, 1];
        let permuted = Assignment {
            labels: labels.iter().map(|&c| perm[c]).collect(),
        };
        let rel_p = cluster_relevance(&permuted, &counts, 3, "t");
        for c in 0..3 {
            assert_eq!(rel[c], rel_p[perm[c]]);
        }
    }

    #[test]
    fn top2_selects_reference_clusters() {
        // relevance vector peaking at indices 1 and 8
        let mut rel = vec![0.0; 20];
        rel[1] = 0.9;
        rel[8] = 0.85;
        rel[2] = 0.1;
        let labeling = label_clusters(&rel, &LabelRule::TopM(2)).unwrap();
        assert_eq!(labeling.positive, vec![1, 8]);
        assert_eq!(labeling.rule, "top:2");
    }

    #[test]
    fn top1_tie_breaks_to_lowest_index() {
        let labeling = label_clusters(&[0.3, 0.3, 0.1], &LabelRule::TopM(1)).unwrap();
        assert_eq!(labeling.positive, vec![0]);
    }

    #[test]
    fn top_m_covers_all_nonempty_when_m_equals_k() {
        let labeling = label_clusters(&[0.1, 0.0, 0.5], &LabelRule::TopM(3)).unwrap();
        assert_eq!(labeling.positive, vec![0, 1, 2]);
    }

    #[test]
    fn threshold_with_no_hit_errors() {
        let err = label_clusters(&[0.0, 0.0, 0.0], &LabelRule::Threshold(0.5)).unwrap_err();
        assert!(matches!(err, Error::EmptyPositiveSet));
    }

    #[test]
    fn gap_rule_cuts_at_largest_drop() {
        let mut rel = vec![0.02; 20];
        rel[1] = 0.9;
        rel[8] = 0.85;
        let labeling = label_clusters(&rel, &LabelRule::Gap).unwrap();
        assert_eq!(labeling.positive, vec![1, 8]);
        assert_eq!(labeling.rule, "gap");

        // all-zero relevance cannot produce positives
        assert!(matches!(
            label_clusters(&[0.0; 5], &LabelRule::Gap).unwrap_err(),
            Error::EmptyPositiveSet
        ));
    }

    #[test]
    fn rule_strings_round_trip() {
        for s in ["gap", "top:2", "ids:1,8", "thresh:0.5"] {
            let rule: LabelRule = s.parse().unwrap();
            assert_eq!(rule.to_string(), s);
        }
        assert!("nope".parse::<LabelRule>().is_err());
    }

    fn toy_keys(n: usize) -> Vec<PatchKey> {
        (0..n)
            .map(|i| PatchKey::new("t", i as u32 * 10, 0))
            .collect()
    }

    #[test]
    fn broadcast_without_subsampling() {
        let keys = toy_keys(6);
        let assignment = Assignment {
            labels: vec![0, 1, 0, 2, 1, 0],
        };
        let labeling = label_clusters(&[0.5, 0.0, 0.0], &LabelRule::TopM(1)).unwrap();
        let set = build_training_set(
            &keys,
            &assignment,
            &labeling,
            &BalanceOptions {
                negatives_per_positive: None,
                seed: 0,
            },
        );
        assert_eq!(set.keys.len(), 6);
        assert_eq!(set.labels, vec![true, false, true, false, false, true]);
        assert_eq!(set.positives(), 3);
    }

    #[test]
    fn all_patches_in_positive_cluster_are_positive() {
        let keys = toy_keys(4);
        let assignment = Assignment {
            labels: vec![1, 1, 1, 1],
        };
        let labeling = label_clusters(&[0.0, 0.7], &LabelRule::Gap).unwrap();
        let set = build_training_set(&keys, &assignment, &labeling, &BalanceOptions::default());
        assert!(set.labels.iter().all(|&l| l));
    }

    #[test]
    fn seeded_negative_subsampling_counts_and_determinism() {
        let n = 10_100;
        let keys = toy_keys(n);
        // first 100 patches positive (cluster 1), the rest negative
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i < 100)).collect();
        let assignment = Assignment { labels };
        let labeling = ClusterLabeling {
            relevance: vec![0.0, 1.0],
            positive: vec![1],
            rule: "ids:1".into(),
        };
        let balance = BalanceOptions {
            negatives_per_positive: Some(3.0),
            seed: 9,
        };
        let set = build_training_set(&keys, &assignment, &labeling, &balance);
        assert_eq!(set.positives(), 100);
        assert_eq!(set.negatives(), 300);

        let again = build_training_set(&keys, &assignment, &labeling, &balance);
        assert_eq!(set, again);

        let other_seed = build_training_set(
            &keys,
            &assignment,
            &labeling,
            &BalanceOptions {
                negatives_per_positive: Some(3.0),
                seed: 10,
            },
        );
        assert_ne!(set, other_seed);

        // kept negatives are a subset of the original negatives, in order
        let mut last = None;
        for (key, &label) in set.keys.iter().zip(&set.labels) {
            if !label {
                assert!(key.x >= 1000, "negative keys start at index 100");
            }
            let idx = key.x / 10;
            if let Some(prev) = last {
                assert!(idx > prev, "order preserved");
            }
            last = Some(idx);
        }
    }

    #[test]
    fn labeling_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labeling.json");
        let labeling = label_clusters(&[0.1, 0.9, 0.0, 0.8], &LabelRule::Gap).unwrap();
        labeling.save_json(&path).unwrap();
        let back = ClusterLabeling::load_json(&path).unwrap();
        assert_eq!(back.positive, labeling.positive);
        assert_eq!(back.relevance, labeling.relevance);
        assert_eq!(back.rule, labeling.rule);
    }

    #[test]
    fn point_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let points = PointLabelSet {
            points: vec![
                point("img_1", 12.0, 9.5, "palm"),
                point("img_2", 0.0, 880.0, "other"),
            ],
        };
        points.save_csv(&path).unwrap();
        assert_eq!(PointLabelSet::load_csv(&path).unwrap(), points);
    }

    #[test]
    fn labeled_set_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let set = LabeledPatchSet {
            keys: vec![PatchKey::new("a", 0, 0), PatchKey::new("a", 100, 0)],
            labels: vec![true, false],
        };
        set.save_csv(&path).unwrap();
        assert_eq!(LabeledPatchSet::load_csv(&path).unwrap(), set);
    }
}
