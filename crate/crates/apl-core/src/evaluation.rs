//! Both evaluation protocols: ROC/AUC against rasterized, majority-voted
//! ground point labels, and accuracy/IoU against polygon-derived reference
//! masks.

use std::path::Path;

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::PredictionMap;
use crate::labeling::PointLabelSet;
use crate::raster::{Extent, SegmentationMask};

/// Majority-voted cell state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    Unlabeled,
    Positive,
    Negative,
}

/// Grid of per-cell point counts; the label is the majority vote over the
/// contained points (target wins exact ties) or unlabeled when empty.
#[derive(Debug, Clone)]
pub struct LabelRaster {
    pub cell_size: u32,
    pub grid_width: u32,
    pub grid_height: u32,
    pub target_counts: Vec<u32>,
    pub other_counts: Vec<u32>,
}

impl LabelRaster {
    pub fn label(&self, cx: u32, cy: u32) -> CellLabel {
        let i = (cy * self.grid_width + cx) as usize;
        let (t, o) = (self.target_counts[i], self.other_counts[i]);
        if t + o == 0 {
            CellLabel::Unlabeled
        } else if t >= o {
            CellLabel::Positive
        } else {
            CellLabel::Negative
        }
    }

    /// Total points bucketed into cells.
    pub fn point_count(&self) -> u64 {
        self.target_counts
            .iter()
            .chain(&self.other_counts)
            .map(|&c| c as u64)
            .sum()
    }
}

/// Buckets every point into its cell. Points on the right/bottom boundary
/// fall into the last cell along that axis; points outside are an error.
pub fn rasterize_point_labels(
    points: &PointLabelSet,
    cell: u32,
    extent: &Extent,
    target: &str,
) -> Result<LabelRaster> {
    if !extent.width.is_multiple_of(cell) || !extent.height.is_multiple_of(cell) {
        return Err(Error::IndivisibleExtent {
            width: extent.width,
            height: extent.height,
            cell,
        });
    }
    let grid_width = extent.width / cell;
    let grid_height = extent.height / cell;
    let n = (grid_width * grid_height) as usize;
    let mut raster = LabelRaster {
        cell_size: cell,
        grid_width,
        grid_height,
        target_counts: vec![0; n],
        other_counts: vec![0; n],
    };
    for p in &points.points {
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
        let cx = ((p.x / cell as f64).floor() as u32).min(grid_width - 1);
        let cy = ((p.y / cell as f64).floor() as u32).min(grid_height - 1);
        let i = (cy * grid_width + cx) as usize;
        if p.class == target {
            raster.target_counts[i] += 1;
        } else {
            raster.other_counts[i] += 1;
        }
    }
    debug_assert_eq!(raster.point_count(), points.points.len() as u64);
    Ok(raster)
}

/// Threshold-swept ROC curve. The first point is (0, 0) at threshold
/// +infinity; subsequent thresholds are the distinct scores, descending.
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// Tie-aware pair-count AUC: concordant pairs count 1, tied pairs 1/2.
fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut concordant = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, (&sp, &yp)) in scores.iter().zip(labels).enumerate() {
        if !yp {
            continue;
        }
        for (j, (&sn, &yn)) in scores.iter().zip(labels).enumerate() {
            if i == j || yn {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                concordant += 1.0;
            } else if sp == sn {
                concordant += 0.5;
            }
        }
    }
    concordant / pairs
}

/// ROC over labeled items; entries where `valid` is false are excluded.
/// The trapezoidal AUC is cross-checked against the pair-count statistic.
pub fn roc_auc(scores: &[f64], labels: &[bool], valid: Option<&[bool]>) -> Result<RocCurve> {
    assert_eq!(scores.len(), labels.len());
    let keep = |i: &usize| valid.is_none_or(|v| v[*i]);
    let idx: Vec<usize> = (0..scores.len()).filter(keep).collect();
    let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
    let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();

    let pos = y.iter().filter(|&&v| v).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite scores"));

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = s[order[i]];
        while i < order.len() && s[order[i]] == t {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }

    let mut auc = 0.0;
    for w in 0..fpr.len() - 1 {
        auc += (fpr[w + 1] - fpr[w]) * (tpr[w + 1] + tpr[w]) * 0.5;
    }

    let pairs = pair_count_auc(&s, &y);
    debug_assert!(
        (auc - pairs).abs() <= 1e-9,
        "trapezoid {auc} vs pair count {pairs}"
    );

    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

/// Closed polygons over one image, in pixel coordinates.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PolygonAnnotation {
    pub image_id: String,
    pub polygons: Vec<Vec<(f64, f64)>>,
}

impl PolygonAnnotation {
    pub fn load_json(path: impl AsRef<Path>) -> Result<PolygonAnnotation> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Format {
            what: "polygon annotation json",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self).map_err(|e| {
            Error::Format {
                what: "polygon annotation json",
                path: path.to_path_buf(),
                detail: e.to_string(),
            }
        })
    }
}

fn point_on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if cross.abs() > 1e-9 {
        return false;
    }
    let dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay);
    let len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
    dot >= 0.0 && dot <= len2
}

fn point_in_polygons(px: f64, py: f64, polygons: &[Vec<(f64, f64)>]) -> bool {
    for poly in polygons {
        let mut crossings = 0u32;
        for e in 0..poly.len() {
            let (ax, ay) = poly[e];
            let (bx, by) = poly[(e + 1) % poly.len()];
            if point_on_segment(px, py, ax, ay, bx, by) {
                return true; // a center exactly on an edge counts as inside
            }
            // half-open rule avoids double counting at shared vertices
            if (ay > py) != (by > py) {
                let x_int = ax + (py - ay) * (bx - ax) / (by - ay);
                if px < x_int {
                    crossings += 1;
                }
            }
        }
        if crossings % 2 == 1 {
            return true;
        }
    }
    false
}

/// Rasterizes polygons with the even-odd rule: a pixel is set iff its center
/// lies inside any polygon (centers exactly on an edge count as inside).
pub fn polygons_to_mask(ann: &PolygonAnnotation, extent: &Extent) -> Result<SegmentationMask> {
    for poly in &ann.polygons {
        if poly.len() < 3 {
            return Err(Error::DegeneratePolygon {
                vertices: poly.len(),
            });
        }
    }
    let rows = exec::map_indexed(extent.height as usize, |row| {
        let py = extent.y as f64 + row as f64 + 0.5;
        (0..extent.width)
            .map(|col| {
                let px = extent.x as f64 + col as f64 + 0.5;
                u8::from(point_in_polygons(px, py, &ann.polygons))
            })
            .collect::<Vec<u8>>()
    });
    Ok(SegmentationMask::new(
        extent.width,
        extent.height,
        rows.into_iter().flatten().collect(),
    ))
}

/// Pixel-wise majority vote; a pixel is set iff at least half of the masks
/// set it (exact ties on an even count vote positive).
pub fn majority_vote_masks(masks: &[SegmentationMask]) -> Result<SegmentationMask> {
    let Some(first) = masks.first() else {
        return Err(Error::EmptyMaskList);
    };
    for m in masks {
        if (m.width, m.height) != (first.width, first.height) {
            return Err(Error::MaskDimMismatch {
                a_width: first.width,
                a_height: first.height,
                b_width: m.width,
                b_height: m.height,
            });
        }
    }
    let n = masks.len() as u32;
    let data = (0..first.data.len())
        .map(|i| {
            let votes: u32 = masks.iter().map(|m| m.data[i] as u32).sum();
            u8::from(2 * votes >= n)
        })
        .collect();
    Ok(SegmentationMask::new(first.width, first.height, data))
}

/// Pixel accuracy and intersection-over-union. Two empty masks have IoU 1.
pub fn mask_metrics(pred: &SegmentationMask, reference: &SegmentationMask) -> Result<(f64, f64)> {
    if (pred.width, pred.height) != (reference.width, reference.height) {
        return Err(Error::MaskDimMismatch {
            a_width: pred.width,
            a_height: pred.height,
            b_width: reference.width,
            b_height: reference.height,
        });
    }
    let mut matches = 0u64;
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&a, &b) in pred.data.iter().zip(&reference.data) {
        matches += u64::from(a == b);
        intersection += u64::from(a == 1 && b == 1);
        union += u64::from(a == 1 || b == 1);
    }
    let accuracy = matches as f64 / pred.data.len() as f64;
    let iou = if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    };
    Ok((accuracy, iou))
}

/// Binarizes a prediction map at threshold `t` and replicates every cell to
/// `upsample_to` x `upsample_to` pixels. Uncovered cells become 0.
pub fn threshold_prediction(map: &PredictionMap, t: f64, upsample_to: u32) -> SegmentationMask {
    assert!((0.0..=1.0).contains(&t), "threshold in [0,1]");
    assert!(upsample_to >= 1);
    let width = map.grid_width * upsample_to;
    let height = map.grid_height * upsample_to;
    let mut mask = SegmentationMask::zeros(width, height);
    for cy in 0..map.grid_height {
        for cx in 0..map.grid_width {
            let on = map.coverage_at(cx, cy) > 0 && map.score(cx, cy) >= t;
            if on {
                for py in cy * upsample_to..(cy + 1) * upsample_to {
                    for px in cx * upsample_to..(cx + 1) * upsample_to {
                        mask.set(px, py, 1);
                    }
                }
            }
        }
    }
    mask
}

/// Renders an ROC curve as a standalone SVG document.
pub fn roc_svg(curve: &RocCurve) -> String {
    let size = 440.0;
    let margin = 40.0;
    let plot = size - 2.0 * margin;
    let px = |f: f64| margin + f * plot;
    let py = |t: f64| size - margin - t * plot;

    let mut path = String::new();
    for (i, (&f, &t)) in curve.fpr.iter().zip(&curve.tpr).enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        path.push_str(&format!("{cmd}{:.2},{:.2} ", px(f), py(t)));
    }

    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" ",
            "viewBox=\"0 0 {s} {s}\">\n",
            "<rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n",
            "<rect x=\"{m}\" y=\"{m}\" width=\"{p}\" height=\"{p}\" fill=\"none\" stroke=\"#444\"/>\n",
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{m}\" stroke=\"#bbb\" stroke-dasharray=\"4,4\"/>\n",
            "<path d=\"{path}\" fill=\"none\" stroke=\"#1565c0\" stroke-width=\"2\"/>\n",
            "<text x=\"{cx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">",
            "ROC (AUC = {auc:.4})</text>\n",
            "<text x=\"{cx}\" y=\"{xy}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">",
            "false positive rate</text>\n",
            "<text x=\"12\" y=\"{cy}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" ",
            "transform=\"rotate(-90 12 {cy})\">true positive rate</text>\n",
            "</svg>\n"
        ),
        s = size,
        m = margin,
        p = plot,
        b = size - margin,
        r = size - margin,
        path = path.trim_end(),
        cx = size / 2.0,
        cy = size / 2.0,
        ty = margin - 14.0,
        xy = size - 8.0,
        auc = curve.auc,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::GroundPoint;

    fn pt(x: f64, y: f64, class: &str) -> GroundPoint {
        GroundPoint {
            image_id: "img".into(),
            x,
            y,
            class: class.into(),
        }
    }

    #[test]
    fn majority_vote_per_cell_with_tie_to_positive() {
        let points = PointLabelSet {
            points: vec![
                pt(5.0, 5.0, "palm"), // lone palm -> positive
                pt(15.0, 5.0, "palm"),
                pt(16.0, 6.0, "palm"),
                pt(17.0, 7.0, "palm"),
                pt(18.0, 8.0, "other"),
                pt(19.0, 9.0, "other"), // 3 vs 2 -> positive
                pt(25.0, 5.0, "palm"),
                pt(26.0, 6.0, "other"), // 1 vs 1 tie -> positive
                pt(35.0, 5.0, "other"), // lone other -> negative
            ],
        };
        let raster =
            rasterize_point_labels(&points, 10, &Extent::of_image(40, 10), "palm").unwrap();
        assert_eq!(raster.label(0, 0), CellLabel::Positive);
        assert_eq!(raster.label(1, 0), CellLabel::Positive);
        assert_eq!(raster.label(2, 0), CellLabel::Positive);
        assert_eq!(raster.label(3, 0), CellLabel::Negative);
        assert_eq!(raster.point_count(), 9);
    }

    #[test]
    fn rasterize_conserves_counts_and_validates_extent() {
        let points = PointLabelSet {
            points: (0..57)
                .map(|i| {
                    pt(
                        (i * 7 % 100) as f64,
                        (i * 13 % 60) as f64,
                        if i % 3 == 0 { "a" } else { "b" },
                    )
                })
                .collect(),
        };
        let raster = rasterize_point_labels(&points, 20, &Extent::of_image(100, 60), "a").unwrap();
        assert_eq!(raster.point_count(), 57);

        let bad = PointLabelSet {
            points: vec![pt(100.5, 0.0, "a")],
        };
        assert!(matches!(
            rasterize_point_labels(&bad, 20, &Extent::of_image(100, 60), "a").unwrap_err(),
            Error::PointOutOfExtent { .. }
        ));
        assert!(matches!(
            rasterize_point_labels(&points, 30, &Extent::of_image(100, 60), "a").unwrap_err(),
            Error::IndivisibleExtent { .. }
        ));
    }

    #[test]
    fn roc_reference_cases() {
        // perfectly separated
        let curve = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], None).unwrap();
        assert_eq!(curve.auc, 1.0);

        // all scores equal
        let curve = roc_auc(&[0.5; 6], &[true, false, true, false, true, false], None).unwrap();
        assert!((curve.auc - 0.5).abs() < 1e-12);

        // one concordant and one discordant pair
        let curve = roc_auc(&[0.9, 0.6, 0.4], &[true, false, true], None).unwrap();
        assert!((curve.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn roc_curve_shape_invariants() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let n = rng.random_range(2..200usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            labels[0] = true;
            if n > 1 {
                labels[1] = false;
            }
            let curve = roc_auc(&scores, &labels, None).unwrap();
            assert_eq!((curve.fpr[0], curve.tpr[0]), (0.0, 0.0));
            assert_eq!(
                (*curve.fpr.last().unwrap(), *curve.tpr.last().unwrap()),
                (1.0, 1.0)
            );
            for w in 0..curve.fpr.len() - 1 {
                assert!(curve.fpr[w] <= curve.fpr[w + 1]);
                assert!(curve.tpr[w] <= curve.tpr[w + 1]);
                assert!(curve.thresholds[w] > curve.thresholds[w + 1]);
            }
            assert!((0.0..=1.0).contains(&curve.auc));
        }
    }

    #[test]
    fn roc_rejects_single_class_and_honors_mask() {
        assert!(matches!(
            roc_auc(&[0.4, 0.2], &[true, true], None).unwrap_err(),
            Error::DegenerateLabels
        ));
        // masking out the only negative degenerates the problem
        assert!(matches!(
            roc_auc(
                &[0.4, 0.2, 0.9],
                &[true, false, true],
                Some(&[true, false, true])
            )
            .unwrap_err(),
            Error::DegenerateLabels
        ));
        // masking an outlier changes the curve
        let full = roc_auc(&[0.9, 0.1, 0.95], &[true, false, false], None).unwrap();
        let masked = roc_auc(
            &[0.9, 0.1, 0.95],
            &[true, false, false],
            Some(&[true, true, false]),
        )
        .unwrap();
        assert_eq!(full.auc, 0.5);
        assert_eq!(masked.auc, 1.0);
    }

    #[test]
    fn rectangle_fills_extent_and_triangle_matches_shoelace() {
        let ann = PolygonAnnotation {
            image_id: "img".into(),
            polygons: vec![vec![(0.0, 0.0), (30.0, 0.0), (30.0, 20.0), (0.0, 20.0)]],
        };
        let mask = polygons_to_mask(&ann, &Extent::of_image(30, 20)).unwrap();
        assert_eq!(mask.count_ones(), 600);

        // axis-aligned right triangle with legs a, b
        let (a, b) = (40.0, 25.0);
        let ann = PolygonAnnotation {
            image_id: "img".into(),
            polygons: vec![vec![(0.0, 0.0), (a, 0.0), (0.0, b)]],
        };
        let mask = polygons_to_mask(&ann, &Extent::of_image(50, 30)).unwrap();
        let shoelace = a * b / 2.0;
        let count = mask.count_ones() as f64;
        assert!(
            (count - shoelace).abs() <= a + b + 2.0,
            "pixel count {count} vs area {shoelace}"
        );
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let ann = PolygonAnnotation {
            image_id: "img".into(),
            polygons: vec![vec![(0.0, 0.0), (5.0, 5.0)]],
        };
        assert!(matches!(
            polygons_to_mask(&ann, &Extent::of_image(10, 10)).unwrap_err(),
            Error::DegeneratePolygon { vertices: 2 }
        ));
    }

    #[test]
    fn center_on_edge_counts_inside() {
        // rectangle edge passing exactly through pixel centers at x = 4.5
        let ann = PolygonAnnotation {
            image_id: "img".into(),
            polygons: vec![vec![(4.5, 0.0), (9.0, 0.0), (9.0, 10.0), (4.5, 10.0)]],
        };
        let mask = polygons_to_mask(&ann, &Extent::of_image(10, 10)).unwrap();
        for y in 0..10 {
            assert_eq!(mask.get(4, y), 1, "edge column at y={y}");
            assert_eq!(mask.get(3, y), 0);
        }
    }

    #[test]
    fn majority_vote_rules() {
        let mk = |bits: [u8; 4]| SegmentationMask::new(2, 2, bits.to_vec());
        let m1 = mk([1, 0, 1, 0]);
        let m2 = mk([1, 0, 0, 0]);
        let m3 = mk([1, 1, 0, 0]);
        let m4 = mk([0, 1, 1, 0]);
        let m5 = mk([0, 0, 1, 0]);

        // five identical masks reproduce the mask
        let same =
            majority_vote_masks(&[m1.clone(), m1.clone(), m1.clone(), m1.clone(), m1.clone()])
                .unwrap();
        assert_eq!(same, m1);

        // pixel marked by 3 of 5 is set
        let voted =
            majority_vote_masks(&[m1.clone(), m2.clone(), m3.clone(), m4.clone(), m5.clone()])
                .unwrap();
        assert_eq!(voted, mk([1, 0, 1, 0]));

        // 2 of 4 ties positive: pixel 1 has votes from m3 and m4 only
        let tied = majority_vote_masks(&[m1.clone(), m2.clone(), m3.clone(), m4.clone()]).unwrap();
        assert_eq!(tied, mk([1, 1, 1, 0]));

        assert!(matches!(
            majority_vote_masks(&[]).unwrap_err(),
            Error::EmptyMaskList
        ));
        let wrong = SegmentationMask::zeros(3, 2);
        assert!(matches!(
            majority_vote_masks(&[m1, wrong]).unwrap_err(),
            Error::MaskDimMismatch { .. }
        ));
    }

    #[test]
    fn vote_is_permutation_invariant() {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut masks: Vec<SegmentationMask> = (0..5)
            .map(|s| {
                SegmentationMask::new(
                    6,
                    4,
                    (0..24).map(|i| u8::from((i * 7 + s * 3) % 5 < 2)).collect(),
                )
            })
            .collect();
        let reference = majority_vote_masks(&masks).unwrap();
        for _ in 0..5 {
            masks.shuffle(&mut rng);
            assert_eq!(majority_vote_masks(&masks).unwrap(), reference);
        }
    }

    #[test]
    fn metric_reference_cases() {
        let all = SegmentationMask::new(10, 10, vec![1; 100]);
        let (acc, iou) = mask_metrics(&all, &all).unwrap();
        assert_eq!((acc, iou), (1.0, 1.0));

        let left = SegmentationMask::new(10, 10, (0..100).map(|i| u8::from(i % 10 < 5)).collect());
        let (acc, iou) = mask_metrics(&left, &all).unwrap();
        assert_eq!((acc, iou), (0.5, 0.5));

        let right =
            SegmentationMask::new(10, 10, (0..100).map(|i| u8::from(i % 10 >= 5)).collect());
        let (_, iou) = mask_metrics(&left, &right).unwrap();
        assert_eq!(iou, 0.0);

        let empty = SegmentationMask::zeros(10, 10);
        let (acc, iou) = mask_metrics(&empty, &empty).unwrap();
        assert_eq!((acc, iou), (1.0, 1.0));
    }

    #[test]
    fn threshold_bridge_step_behavior() {
        let map = PredictionMap {
            cell_size: 10,
            grid_width: 3,
            grid_height: 1,
            scores: vec![0.7, 0.7, 0.0],
            coverage: vec![4, 4, 0],
        };
        let low = threshold_prediction(&map, 0.5, 10);
        assert_eq!((low.width, low.height), (30, 10));
        assert_eq!(low.get(5, 5), 1);
        assert_eq!(low.get(15, 5), 1);
        assert_eq!(low.get(25, 5), 0, "uncovered cell stays 0");

        let high = threshold_prediction(&map, 0.8, 10);
        assert_eq!(high.count_ones(), 0);

        let zero = threshold_prediction(&map, 0.0, 10);
        assert_eq!(zero.count_ones(), 200, "all covered cells on at t=0");
    }

    #[test]
    fn svg_contains_curve() {
        let curve = roc_auc(&[0.9, 0.4, 0.6], &[true, false, true], None).unwrap();
        let svg = roc_svg(&curve);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("AUC"));
        assert!(svg.contains("<path"));
    }
}
