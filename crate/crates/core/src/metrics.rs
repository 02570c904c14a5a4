//! Reconstruction error, grid IoU, annotation overlays and metric reports.

use crate::error::{Error, Result};
use crate::projection::{BoxRect2, Grid};

/// Mean absolute elementwise difference. Shared by the cycle-consistency
/// loss and [`l1_reconstruction`] so both compute the identical quantity.
pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    sum / a.len() as f64
}

/// Mean absolute elementwise difference between two grids of equal shape.
pub fn l1_reconstruction(a: &Grid, b: &Grid) -> Result<f64> {
    ensure_same_shape(a, b)?;
    let av: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let bv: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    Ok(mean_abs_diff(&av, &bv))
}

/// Intersection over union of the two grids binarized at `threshold`
/// (cell occupied iff value >= threshold). Two empty masks agree
/// perfectly and return 1.0.
pub fn grid_iou(mask_a: &Grid, mask_b: &Grid, threshold: f64) -> Result<f64> {
    ensure_same_shape(mask_a, mask_b)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Precondition(format!(
            "IoU threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&a, &b) in mask_a.data().iter().zip(mask_b.data()) {
        let a = a as f64 >= threshold;
        let b = b as f64 >= threshold;
        if a && b {
            intersection += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}

fn ensure_same_shape(a: &Grid, b: &Grid) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            expected: vec![a.rows(), a.cols()],
            got: vec![b.rows(), b.cols()],
        });
    }
    Ok(())
}

/// Burns rectangle outlines into a copy of the grid at value 1.0.
/// Off-grid segments are clipped; absent rectangles are skipped.
pub fn overlay_annotations(grid: &Grid, rects: &[Option<BoxRect2>]) -> Grid {
    let mut out = grid.clone();
    for rect in rects.iter().flatten() {
        for i in 0..4 {
            let (r0, c0) = rect.corners[i];
            let (r1, c1) = rect.corners[(i + 1) % 4];
            draw_segment(&mut out, r0, c0, r1, c1);
        }
    }
    out
}

/// Samples the segment densely (two samples per pixel of travel) and sets
/// the nearest cell of each sample.
fn draw_segment(grid: &mut Grid, r0: f64, c0: f64, r1: f64, c1: f64) {
    let dr = r1 - r0;
    let dc = c1 - c0;
    let steps = (dr.abs().max(dc.abs()).ceil() as usize) * 2 + 1;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let r = (r0 + t * dr).round();
        let c = (c0 + t * dc).round();
        if r >= 0.0 && c >= 0.0 && (r as usize) < grid.rows() && (c as usize) < grid.cols() {
            grid.set(r as usize, c as usize, 1.0);
        }
    }
}

/// Per-frame metric values plus run metadata. Aggregates are means
/// recomputed from the per-frame rows.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub seed: u64,
    pub config_hash: u64,
}

#[derive(Debug, Clone)]
pub struct FrameMetrics {
    pub frame: String,
    pub l1_reconstruction: f64,
    pub grid_iou: f64,
}

impl MetricReport {
    pub fn aggregate_l1(&self) -> f64 {
        mean_of(self.frames.iter().map(|f| f.l1_reconstruction))
    }

    pub fn aggregate_iou(&self) -> f64 {
        mean_of(self.frames.iter().map(|f| f.grid_iou))
    }

    /// CSV with a metadata comment line, a header, one row per frame and a
    /// trailing aggregate row.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# seed={} config_hash={:016x} frames={}\n",
            self.seed,
            self.config_hash,
            self.frames.len()
        );
        s.push_str("frame,l1_reconstruction,grid_iou\n");
        for f in &self.frames {
            s.push_str(&format!("{},{},{}\n", f.frame, f.l1_reconstruction, f.grid_iou));
        }
        s.push_str(&format!("aggregate,{},{}\n", self.aggregate_l1(), self.aggregate_iou()));
        s
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// FNV-1a 64-bit hash, used to fingerprint run configurations in reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
