//! Prototype discovery: k-means over patch feature vectors.
//!
//! Seeded k-means++ initialization followed by Lloyd iterations until the
//! relative inertia improvement drops below `rel_tol` or `max_iter` is hit.
//! Point-to-centroid ties break toward the lowest cluster index; an emptied
//! cluster is reseeded to the point farthest from its assigned centroid.

use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::features::{FeatureMatrix, PatchKey};

#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of the training rows to their centroids.
    pub inertia: f64,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct KmeansOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl KmeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansOptions {
            k,
            seed,
            max_iter: 300,
            rel_tol: 1e-6,
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-dimension standardization: subtract the column mean, divide by the
/// column standard deviation (constant columns are left at zero). Apply the
/// same transform to fit and assignment inputs when it is enabled.
pub fn standardize_rows(features: &FeatureMatrix) -> FeatureMatrix {
    let n = features.len().max(1) as f64;
    let dim = features.dim;
    let mut mean = vec![0.0f64; dim];
    for row in features.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0f64; dim];
    for row in features.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();

    let mut out = FeatureMatrix::new(dim);
    let mut buf = vec![0.0f64; dim];
    for (i, key) in features.keys.iter().enumerate() {
        for (((b, v), m), s) in buf.iter_mut().zip(features.row(i)).zip(&mean).zip(&std) {
            *b = if *s > 0.0 { (v - m) / s } else { 0.0 };
        }
        out.push_row(key.clone(), &buf);
    }
    out
}

/// Nearest centroid per row (lowest index on ties) plus squared distances.
fn assign_rows(features: &FeatureMatrix, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let pairs = exec::map_indexed(features.len(), |i| {
        let row = features.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        (best, best_d)
    });
    pairs.into_iter().unzip()
}

fn plus_plus_init(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(features.row(first).to_vec());

    let mut d2: Vec<f64> = exec::map_indexed(n, |i| sq_dist(features.row(i), &centroids[0]));
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            // D^2-weighted draw via a single uniform and a cumulative scan
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                cum += d;
                if cum > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every row coincides with a centroid; fall back to uniform
            rng.random_range(0..n)
        };
        let centroid = features.row(idx).to_vec();
        let updates = exec::map_indexed(n, |i| sq_dist(features.row(i), &centroid));
        for (d, u) in d2.iter_mut().zip(updates) {
            if u < *d {
                *d = u;
            }
        }
        centroids.push(centroid);
    }
    centroids
}

/// Cluster means; emptied clusters are reseeded, in index order, to the
/// yet-unused point farthest from its assigned centroid.
fn update_centroids(
    features: &FeatureMatrix,
    labels: &[usize],
    d2: &[f64],
    k: usize,
) -> Vec<Vec<f64>> {
    let dim = features.dim;
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    let mut taken = vec![false; features.len()];
    let mut centroids = Vec::with_capacity(k);
    for c in 0..k {
        if counts[c] > 0 {
            centroids.push(sums[c].iter().map(|s| s / counts[c] as f64).collect());
        } else {
            let mut far = 0usize;
            let mut far_d = f64::NEG_INFINITY;
            for (i, &d) in d2.iter().enumerate() {
                if !taken[i] && d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            taken[far] = true;
            centroids.push(features.row(far).to_vec());
        }
    }
    centroids
}

/// Fits k-means and also returns the inertia measured after every Lloyd
/// iteration, for convergence diagnostics.
pub fn kmeans_fit_traced(
    features: &FeatureMatrix,
    opts: &KmeansOptions,
) -> Result<(ClusterModel, Assignment, Vec<f64>)> {
    assert!(opts.k >= 1, "k must be at least 1");
    let n = features.len();
    if n < opts.k {
        return Err(Error::InsufficientData { rows: n, k: opts.k });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centroids = plus_plus_init(features, opts.k, &mut rng);
    let (mut labels, mut d2) = assign_rows(features, &centroids);
    let mut inertia: f64 = d2.iter().sum();

    let mut trace = Vec::new();
    let mut iterations = 0usize;
    while iterations < opts.max_iter {
        centroids = update_centroids(features, &labels, &d2, opts.k);
        let (new_labels, new_d2) = assign_rows(features, &centroids);
        let new_inertia: f64 = new_d2.iter().sum();
        iterations += 1;
        trace.push(new_inertia);
        debug_assert!(new_inertia <= inertia * (1.0 + 1e-12) + 1e-12);

        let improvement = inertia - new_inertia;
        let prev = inertia;
        labels = new_labels;
        d2 = new_d2;
        inertia = new_inertia;
        if prev == 0.0 || improvement < opts.rel_tol * prev {
            break;
        }
    }

    let model = ClusterModel {
        k: opts.k,
        dim: features.dim,
        centroids,
        inertia,
        iterations_run: iterations,
    };
    Ok((model, Assignment { labels }, trace))
}

pub fn kmeans_fit(
    features: &FeatureMatrix,
    opts: &KmeansOptions,
) -> Result<(ClusterModel, Assignment)> {
    kmeans_fit_traced(features, opts).map(|(m, a, _)| (m, a))
}

/// Assigns each row to its nearest centroid (lowest index on ties).
pub fn kmeans_assign(model: &ClusterModel, features: &FeatureMatrix) -> Result<Assignment> {
    if features.dim != model.dim {
        return Err(Error::DimMismatch {
            expected: model.dim,
            got: features.dim,
        });
    }
    let (labels, _) = assign_rows(features, &model.centroids);
    Ok(Assignment { labels })
}

const MODEL_MAGIC: &str = "APLKM v1";

/// Writes the model as `APLKM v1 k=<k> dim=<d>` followed by the centroids as
/// little-endian f32.
pub fn save_cluster_model(model: &ClusterModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "{MODEL_MAGIC} k={} dim={}", model.k, model.dim).map_err(io_err)?;
    for centroid in &model.centroids {
        for v in centroid {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_cluster_model(path: impl AsRef<Path>) -> Result<ClusterModel> {
    let path = path.as_ref();
    let bad = |detail: String| Error::Format {
        what: "cluster model",
        path: path.to_path_buf(),
        detail,
    };
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    file.seek(SeekFrom::Start(0))
        .map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let rest = header
        .trim_end()
        .strip_prefix(MODEL_MAGIC)
        .ok_or_else(|| bad("missing APLKM v1 magic".into()))?;
    let mut k = None;
    let mut dim = None;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("k=") {
            k = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("dim=") {
            dim = v.parse::<usize>().ok();
        }
    }
    let k = k.ok_or_else(|| bad("header lacks k=".into()))?;
    let dim = dim.ok_or_else(|| bad("header lacks dim=".into()))?;
    let mut centroids = Vec::with_capacity(k);
    let mut buf = [0u8; 4];
    for c in 0..k {
        let mut centroid = Vec::with_capacity(dim);
        for _ in 0..dim {
            reader
                .read_exact(&mut buf)
                .map_err(|_| bad(format!("truncated centroid {c}")))?;
            centroid.push(f32::from_le_bytes(buf) as f64);
        }
        centroids.push(centroid);
    }
    Ok(ClusterModel {
        k,
        dim,
        centroids,
        inertia: 0.0,
        iterations_run: 0,
    })
}

/// Writes `image_id,x,y,cluster` rows for keyed assignments.
pub fn save_assignments(
    keys: &[PatchKey],
    assignment: &Assignment,
    path: impl AsRef<Path>,
) -> Result<()> {
    assert_eq!(keys.len(), assignment.labels.len());
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "image_id,x,y,cluster").map_err(io_err)?;
    for (key, &label) in keys.iter().zip(&assignment.labels) {
        writeln!(w, "{},{},{},{}", key.image_id, key.x, key.y, label).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_assignments(path: impl AsRef<Path>) -> Result<(Vec<PatchKey>, Assignment)> {
    let path = path.as_ref();
    let bad = |detail: String| Error::Format {
        what: "assignments csv",
        path: path.to_path_buf(),
        detail,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == "image_id,x,y,cluster" => {}
        _ => return Err(bad("expected header image_id,x,y,cluster".into())),
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
        let label = fields[3]
            .parse()
            .map_err(|_| bad(format!("line {}: bad cluster", ln + 2)))?;
        keys.push(PatchKey::new(fields[0], x, y));
        labels.push(label);
    }
    Ok((keys, Assignment { labels }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_from(rows: &[&[f64]]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(rows[0].len());
        for (i, row) in rows.iter().enumerate() {
            m.push_row(PatchKey::new("t", i as u32, 0), row);
        }
        m
    }

    fn random_matrix(n: usize, dim: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = FeatureMatrix::new(dim);
        for i in 0..n {
            let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            m.push_row(PatchKey::new("t", i as u32, 0), &row);
        }
        m
    }

    #[test]
    fn k1_recovers_mean_and_variance() {
        let m = matrix_from(&[&[1.0, 0.0], &[3.0, 4.0], &[5.0, 2.0]]);
        let (model, assign) = kmeans_fit(&m, &KmeansOptions::new(1, 9)).unwrap();
        assert_eq!(model.centroids[0], vec![3.0, 2.0]);
        assert_eq!(assign.labels, vec![0, 0, 0]);
        let want: f64 = [(1.0 - 3.0, 0.0 - 2.0), (0.0, 2.0), (2.0, 0.0)]
            .iter()
            .map(|(dx, dy)| dx * dx + dy * dy)
            .sum();
        assert!((model.inertia - want).abs() < 1e-12);
    }

    #[test]
    fn insufficient_rows_error() {
        let m = matrix_from(&[&[0.0], &[1.0], &[2.0]]);
        let err = kmeans_fit(&m, &KmeansOptions::new(5, 0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { rows: 3, k: 5 }));
    }

    /// Adjusted Rand index between two labelings.
    fn ari(a: &[usize], b: &[usize]) -> f64 {
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut table = vec![vec![0u64; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            table[x][y] += 1;
        }
        let comb2 = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
        let sum_ij: f64 = table.iter().flatten().map(|&n| comb2(n)).sum();
        let sum_a: f64 = table.iter().map(|row| comb2(row.iter().sum())).sum();
        let sum_b: f64 = (0..kb)
            .map(|j| comb2(table.iter().map(|row| row[j]).sum()))
            .sum();
        let total = comb2(a.len() as u64);
        let expected = sum_a * sum_b / total;
        let max = 0.5 * (sum_a + sum_b);
        (sum_ij - expected) / (max - expected)
    }

    #[test]
    fn two_separated_clouds_are_recovered() {
        // two spherical clouds 10 sigma apart
        let sigma = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut normal = move || {
            // Box-Muller
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut m = FeatureMatrix::new(2);
        let mut truth: Vec<usize> = Vec::new();
        for i in 0..120u32 {
            let center = if i % 2 == 0 { 0.0 } else { 10.0 * sigma };
            truth.push((i % 2) as usize);
            m.push_row(
                PatchKey::new("t", i, 0),
                &[center + sigma * normal(), sigma * normal()],
            );
        }
        let (model, assign) = kmeans_fit(&m, &KmeansOptions::new(2, 3)).unwrap();

        // each centroid within 0.5 sigma of its cloud mean
        let mut means = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for (i, &t) in truth.iter().enumerate() {
            means[t][0] += m.row(i)[0];
            means[t][1] += m.row(i)[1];
            counts[t] += 1;
        }
        for t in 0..2 {
            means[t][0] /= counts[t] as f64;
            means[t][1] /= counts[t] as f64;
            let nearest = model
                .centroids
                .iter()
                .map(|c| sq_dist(c, &means[t]))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert!(nearest < 0.5 * sigma, "centroid {nearest} off cloud {t}");
        }
        assert!(ari(&truth, &assign.labels) >= 0.99);
    }

    #[test]
    fn assign_ties_break_low_and_centroid_hits_exactly() {
        let model = ClusterModel {
            k: 6,
            dim: 1,
            centroids: vec![
                vec![-10.0],
                vec![-10.0],
                vec![0.0],
                vec![5.0],
                vec![-10.0],
                vec![9.0],
            ],
            inertia: 0.0,
            iterations_run: 0,
        };
        // 7.0 is equidistant to centroids 3 (5.0) and 5 (9.0) -> lowest wins
        let m = matrix_from(&[&[7.0], &[5.0]]);
        let assign = kmeans_assign(&model, &m).unwrap();
        assert_eq!(assign.labels, vec![3, 3]);

        // a point equal to centroid 5 labels 5
        let m = matrix_from(&[&[9.0]]);
        assert_eq!(kmeans_assign(&model, &m).unwrap().labels, vec![5]);
    }

    #[test]
    fn dim_mismatch_rejected() {
        let model = ClusterModel {
            k: 1,
            dim: 3,
            centroids: vec![vec![0.0; 3]],
            inertia: 0.0,
            iterations_run: 0,
        };
        let m = matrix_from(&[&[1.0, 2.0]]);
        assert!(matches!(
            kmeans_assign(&model, &m).unwrap_err(),
            Error::DimMismatch { .. }
        ));
    }

    #[test]
    fn final_assignment_is_self_consistent() {
        let m = random_matrix(80, 5, 17);
        let (model, assign) = kmeans_fit(&m, &KmeansOptions::new(6, 2)).unwrap();
        assert_eq!(kmeans_assign(&model, &m).unwrap(), assign);

        let recomputed: f64 = (0..m.len())
            .map(|i| sq_dist(m.row(i), &model.centroids[assign.labels[i]]))
            .sum();
        assert!((recomputed - model.inertia).abs() < 1e-9);
    }

    #[test]
    fn fit_is_deterministic() {
        let m = random_matrix(60, 4, 5);
        let opts = KmeansOptions::new(7, 42);
        let (m1, a1) = kmeans_fit(&m, &opts).unwrap();
        let (m2, a2) = kmeans_fit(&m, &opts).unwrap();
        assert_eq!(m1.centroids, m2.centroids);
        assert_eq!(m1.inertia.to_bits(), m2.inertia.to_bits());
        assert_eq!(a1, a2);
    }

    #[test]
    fn inertia_non_increasing_trace() {
        for seed in 0..10 {
            let m = random_matrix(50, 3, 100 + seed);
            let (_, _, trace) = kmeans_fit_traced(&m, &KmeansOptions::new(4, seed)).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "seed {seed}: {w:?}");
            }
        }
    }

    /// Plain Lloyd from a random distinct-row init; verifies the fixed point
    /// before reporting its inertia.
    fn lloyd_oracle(m: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> f64 {
        let n = m.len();
        let mut picked: Vec<usize> = Vec::new();
        while picked.len() < k {
            let i = rng.random_range(0..n);
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        let mut centroids: Vec<Vec<f64>> = picked.iter().map(|&i| m.row(i).to_vec()).collect();
        let mut labels = vec![0usize; n];
        for _ in 0..200 {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, cent) in centroids.iter().enumerate() {
                    let d = sq_dist(m.row(i), cent);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                if *label != best {
                    *label = best;
                    changed = true;
                }
            }
            let mut sums = vec![vec![0.0; m.dim]; k];
            let mut counts = vec![0usize; k];
            for (i, &c) in labels.iter().enumerate() {
                counts[c] += 1;
                for (s, v) in sums[c].iter_mut().zip(m.row(i)) {
                    *s += v;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        // fixed-point check: every point sits with its nearest centroid
        for i in 0..n {
            let d_own = sq_dist(m.row(i), &centroids[labels[i]]);
            for cent in &centroids {
                assert!(sq_dist(m.row(i), cent) >= d_own - 1e-9);
            }
        }
        (0..n)
            .map(|i| sq_dist(m.row(i), &centroids[labels[i]]))
            .sum()
    }

    #[test]
    fn matches_best_restart_on_small_instances() {
        // small structured instances: the seeded fit should reach the same
        // optimum as the best of 200 random-restart Lloyd runs
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (n, k, spread) in [(24usize, 3usize, 6.0f64), (30, 2, 8.0), (18, 3, 7.0)] {
            let mut m = FeatureMatrix::new(2);
            for i in 0..n {
                let c = i % k;
                m.push_row(
                    PatchKey::new("t", i as u32, 0),
                    &[
                        c as f64 * spread + rng.random_range(-0.5..0.5),
                        (c as f64 * 1.3).sin() * spread + rng.random_range(-0.5..0.5),
                    ],
                );
            }
            let (model, _) = kmeans_fit(&m, &KmeansOptions::new(k, 13)).unwrap();
            let best = (0..200)
                .map(|_| lloyd_oracle(&m, k, &mut rng))
                .fold(f64::INFINITY, f64::min);
            assert!(
                (model.inertia - best).abs() <= 1e-9,
                "n={n} k={k}: fit {} vs best restart {}",
                model.inertia,
                best
            );
        }
    }

    #[test]
    fn empty_cluster_repair_keeps_k_centroids() {
        // three identical far rows plus distinct ones force an empty cluster
        let m = matrix_from(&[&[0.0], &[0.0], &[0.0], &[0.0], &[100.0], &[100.0]]);
        let (model, assign) = kmeans_fit(&m, &KmeansOptions::new(3, 1)).unwrap();
        assert_eq!(model.centroids.len(), 3);
        assert!(assign.labels.iter().all(|&l| l < 3));
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.aplkm");
        let m = random_matrix(40, 3, 8);
        let (model, _) = kmeans_fit(&m, &KmeansOptions::new(4, 4)).unwrap();
        save_cluster_model(&model, &path).unwrap();
        let back = load_cluster_model(&path).unwrap();
        assert_eq!(back.k, model.k);
        assert_eq!(back.dim, model.dim);
        for (a, b) in back
            .centroids
            .iter()
            .flatten()
            .zip(model.centroids.iter().flatten())
        {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn standardization_equalizes_dimension_scales() {
        // one dimension a thousand times wider than the other dominates raw
        // distances; standardized, both contribute equally
        let mut m = FeatureMatrix::new(2);
        for i in 0..40u32 {
            let wide = if i % 2 == 0 { -1000.0 } else { 1000.0 };
            let narrow = if i % 4 < 2 { -1.0 } else { 1.0 };
            m.push_row(PatchKey::new("t", i, 0), &[wide, narrow]);
        }
        let z = standardize_rows(&m);
        for d in 0..2 {
            let mean: f64 = (0..z.len()).map(|i| z.row(i)[d]).sum::<f64>() / z.len() as f64;
            let var: f64 = (0..z.len())
                .map(|i| (z.row(i)[d] - mean).powi(2))
                .sum::<f64>()
                / z.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9, "dim {d} variance {var}");
        }

        // constant columns standardize to zero
        let mut c = FeatureMatrix::new(2);
        c.push_row(PatchKey::new("t", 0, 0), &[5.0, 1.0]);
        c.push_row(PatchKey::new("t", 1, 0), &[5.0, 3.0]);
        let z = standardize_rows(&c);
        assert_eq!(z.row(0)[0], 0.0);
        assert_eq!(z.row(1)[0], 0.0);
    }

    #[test]
    fn assignments_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let keys = vec![PatchKey::new("img", 0, 0), PatchKey::new("img", 100, 0)];
        let assign = Assignment { labels: vec![3, 7] };
        save_assignments(&keys, &assign, &path).unwrap();
        let (k2, a2) = load_assignments(&path).unwrap();
        assert_eq!(k2, keys);
        assert_eq!(a2, assign);
    }
}
