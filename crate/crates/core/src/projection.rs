//! Grid projections of point clouds: the invertible Polar Grid Map and the
//! bird's-eye-view raster, plus 3D box footprint transfer onto BEV pixels.

use crate::error::{Error, Result};
use crate::pointcloud::{
    cartesian_to_spherical, spherical_to_cartesian, BoundingBox3, PointCloud,
    SensorConfig, SphericalCoord,
};

/// A dense rows x cols raster of f32 values in [0, 1], row-major.
///
/// Cell values are stored in single precision on purpose: it matches the
/// on-disk payload bit for bit and gives the PGM codec enough quantization
/// headroom that re-encoding a decoded cloud reproduces the grid exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: vec![rows, cols],
                got: vec![data.len()],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }
}

/// Half-open binning over [min, max) with the upper edge folded into the
/// last bin, so the full closed interval is covered without dropping
/// boundary points.
fn bin_index(value: f64, min: f64, max: f64, bins: usize) -> Option<usize> {
    if !(value >= min && value <= max) {
        return None;
    }
    if value == max {
        return Some(bins - 1);
    }
    let t = (value - min) / (max - min);
    Some(((t * bins as f64) as usize).min(bins - 1))
}

/// Channels x azimuth-steps grid of normalized ranges. 0.0 means "no
/// return"; any positive cell decodes back to a 3D point at the cell-center
/// direction.
///
/// Row r spans elevations [v_min + r*step, v_min + (r+1)*step); column c
/// spans azimuths [c*h_res, (c+1)*h_res) counterclockwise from +x.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGridMap {
    pub config: SensorConfig,
    pub grid: Grid,
}

/// Projects a cloud into a polar grid map.
///
/// Each in-FOV point lands in (elevation bin, azimuth bin) with value
/// range/max_range. Colliding returns keep the smallest range, which makes
/// the encoding independent of point order. Points at zero range, beyond
/// max_range, or outside either FOV are dropped.
pub fn encode_pgm(cloud: &PointCloud, config: &SensorConfig) -> Result<PolarGridMap> {
    config.validate()?;
    let rows = config.channels;
    let cols = config.cols();
    let mut best_range = vec![f64::INFINITY; rows * cols];

    for p in &cloud.points {
        if !p.is_finite() {
            continue;
        }
        let s = cartesian_to_spherical(p);
        if s.range_m <= 0.0 || s.range_m > config.max_range_m {
            continue;
        }
        let Some(row) = bin_index(s.elevation_deg, config.v_fov_min_deg, config.v_fov_max_deg, rows)
        else {
            continue;
        };
        let Some(col) = bin_index(s.azimuth_deg, 0.0, config.h_fov_deg, cols) else {
            continue;
        };
        let cell = &mut best_range[row * cols + col];
        if s.range_m < *cell {
            *cell = s.range_m;
        }
    }

    let data = best_range
        .iter()
        .map(|&r| if r.is_finite() { (r / config.max_range_m) as f32 } else { 0.0 })
        .collect();
    Ok(PolarGridMap { config: *config, grid: Grid::from_data(rows, cols, data)? })
}

/// Reconstructs a cloud from a polar grid map. Every positive cell yields
/// one point at the cell-center direction with range value*max_range, in
/// row-major cell order.
pub fn decode_pgm(pgm: &PolarGridMap) -> PointCloud {
    let config = &pgm.config;
    let rows = pgm.grid.rows();
    let cols = pgm.grid.cols();
    let v_step = config.v_fov_span_deg() / rows as f64;
    let h_step = config.h_fov_deg / cols as f64;

    let mut points = Vec::new();
    for r in 0..rows {
        let elevation = config.v_fov_min_deg + (r as f64 + 0.5) * v_step;
        for c in 0..cols {
            let v = pgm.grid.get(r, c);
            if v > 0.0 {
                let azimuth = (c as f64 + 0.5) * h_step;
                let range = v as f64 * config.max_range_m;
                points.push(spherical_to_cartesian(&SphericalCoord::new(range, azimuth, elevation)));
            }
        }
    }
    PointCloud::new(points, "decoded-pgm")
}

/// How BEV cells summarize the points that fall into them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevMode {
    /// 1.0 if at least one point hit the cell.
    Binary,
    /// Point count divided by the grid's maximum count.
    Density,
    /// Maximum z mapped linearly from [z_min, z_max] to [0, 1].
    MaxHeight,
}

impl std::str::FromStr for BevMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(BevMode::Binary),
            "density" => Ok(BevMode::Density),
            "max-height" | "max_height" => Ok(BevMode::MaxHeight),
            other => Err(Error::Config(format!("unknown BEV mode '{other}'"))),
        }
    }
}

/// Extent, resolution, height clip and cell mode of a BEV raster.
///
/// Rows index x (forward), columns index y (left); row 0 starts at x_min
/// and column 0 at y_min.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevConfig {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
    pub cell_m: f64,
    pub mode: BevMode,
    pub z_min_m: f64,
    pub z_max_m: f64,
}

impl Default for BevConfig {
    /// 256 x 256 cells over [-40, 40] m square, height clip [-2.5, 1.5] m,
    /// binary occupancy.
    fn default() -> Self {
        Self {
            x_min_m: -40.0,
            x_max_m: 40.0,
            y_min_m: -40.0,
            y_max_m: 40.0,
            cell_m: 0.3125,
            mode: BevMode::Binary,
            z_min_m: -2.5,
            z_max_m: 1.5,
        }
    }
}

impl BevConfig {
    pub fn rows(&self) -> usize {
        ((self.x_max_m - self.x_min_m) / self.cell_m).round() as usize
    }

    pub fn cols(&self) -> usize {
        ((self.y_max_m - self.y_min_m) / self.cell_m).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_min_m >= self.x_max_m || self.y_min_m >= self.y_max_m {
            return Err(Error::Config("BEV extent bounds out of order".into()));
        }
        if !(self.cell_m > 0.0) {
            return Err(Error::Config("BEV cell size must be > 0".into()));
        }
        for (span, name) in [
            (self.x_max_m - self.x_min_m, "x"),
            (self.y_max_m - self.y_min_m, "y"),
        ] {
            let n = span / self.cell_m;
            if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
                return Err(Error::Config(format!(
                    "BEV {name} span must be an integer number of cells, got {n}"
                )));
            }
        }
        if self.z_min_m >= self.z_max_m {
            return Err(Error::Config("BEV height clip bounds out of order".into()));
        }
        Ok(())
    }

    /// World (x, y) to fractional (row, col) pixel coordinates.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_min_m) / self.cell_m, (y - self.y_min_m) / self.cell_m)
    }
}

/// Top-down occupancy raster.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub config: BevConfig,
    pub grid: Grid,
}

/// Rasterizes a cloud into a BEV grid. Points outside the extent or the
/// height clip are ignored.
pub fn rasterize_bev(cloud: &PointCloud, config: &BevConfig) -> Result<BevGrid> {
    config.validate()?;
    let rows = config.rows();
    let cols = config.cols();

    match config.mode {
        BevMode::Binary => {
            let mut grid = Grid::zeros(rows, cols);
            for_each_cell(cloud, config, rows, cols, |grid_idx, _z| {
                grid.data_mut()[grid_idx] = 1.0;
            });
            Ok(BevGrid { config: *config, grid })
        }
        BevMode::Density => {
            let mut counts = vec![0u32; rows * cols];
            for_each_cell(cloud, config, rows, cols, |grid_idx, _z| {
                counts[grid_idx] += 1;
            });
            let max = counts.iter().copied().max().unwrap_or(0);
            let data = if max == 0 {
                vec![0.0; rows * cols]
            } else {
                counts.iter().map(|&c| c as f32 / max as f32).collect()
            };
            Ok(BevGrid { config: *config, grid: Grid::from_data(rows, cols, data)? })
        }
        BevMode::MaxHeight => {
            let mut best = vec![f64::NEG_INFINITY; rows * cols];
            for_each_cell(cloud, config, rows, cols, |grid_idx, z| {
                if z > best[grid_idx] {
                    best[grid_idx] = z;
                }
            });
            let z_span = config.z_max_m - config.z_min_m;
            let data = best
                .iter()
                .map(|&z| {
                    if z.is_finite() {
                        ((z - config.z_min_m) / z_span) as f32
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(BevGrid { config: *config, grid: Grid::from_data(rows, cols, data)? })
        }
    }
}

fn for_each_cell(
    cloud: &PointCloud,
    config: &BevConfig,
    rows: usize,
    cols: usize,
    mut visit: impl FnMut(usize, f64),
) {
    for p in &cloud.points {
        if !p.is_finite() || p.z < config.z_min_m || p.z > config.z_max_m {
            continue;
        }
        let Some(row) = bin_index(p.x, config.x_min_m, config.x_max_m, rows) else {
            continue;
        };
        let Some(col) = bin_index(p.y, config.y_min_m, config.y_max_m, cols) else {
            continue;
        };
        visit(row * cols + col, p.z);
    }
}

/// Rotated rectangle footprint in fractional (row, col) pixel coordinates.
/// Corners are ordered so consecutive entries share an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRect2 {
    pub corners: [(f64, f64); 4],
}

/// Projects each 3D box footprint onto BEV pixel coordinates. A box whose
/// footprint lies fully outside the extent yields `None`. Footprints that
/// straddle the border are returned unclipped.
pub fn transfer_annotations(
    boxes: &[BoundingBox3],
    config: &BevConfig,
) -> Result<Vec<Option<BoxRect2>>> {
    config.validate()?;
    let rows = config.rows() as f64;
    let cols = config.cols() as f64;

    let out = boxes
        .iter()
        .map(|b| {
            let (sin, cos) = b.yaw_rad.sin_cos();
            let half_l = b.length_m / 2.0;
            let half_w = b.width_m / 2.0;
            let offsets = [
                (half_l, half_w),
                (half_l, -half_w),
                (-half_l, -half_w),
                (-half_l, half_w),
            ];
            // Anchor on the extent origin before adding rotated offsets so
            // that translating box and extent together is an exact no-op.
            let rel_x = b.center.x - config.x_min_m;
            let rel_y = b.center.y - config.y_min_m;
            let corners = offsets.map(|(dx, dy)| {
                let wx = rel_x + dx * cos - dy * sin;
                let wy = rel_y + dx * sin + dy * cos;
                (wx / config.cell_m, wy / config.cell_m)
            });

            let min_r = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
            let max_r = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
            let min_c = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let max_c = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            if max_r < 0.0 || min_r > rows || max_c < 0.0 || min_c > cols {
                None
            } else {
                Some(BoxRect2 { corners })
            }
        })
        .collect();
    Ok(out)
}
