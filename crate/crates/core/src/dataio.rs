//! Dataset ingestion, grid serialization and deterministic batch sampling.
//!
//! File formats:
//! - KITTI record: 16 bytes = 4 x f32 LE (x, y, z, reflectance), no header.
//! - Grid file: magic `LGRID\0v1`, rows u32 LE, cols u32 LE, payload f32 LE
//!   row-major.
//! - Netpbm P5: `P5\n<cols> <rows>\n255\n` followed by raw bytes.

use crate::error::{Error, Result};
use crate::projection::Grid;
use crate::pointcloud::{Point3, PointCloud};
use crate::rng::SplitMix64;
use std::io::{Read, Write};

const GRID_MAGIC: &[u8; 8] = b"LGRID\0v1";

/// Result of parsing a KITTI binary frame: the cloud plus the number of
/// records rejected for non-finite coordinates.
#[derive(Debug, Clone)]
pub struct KittiParse {
    pub cloud: PointCloud,
    pub rejected_records: usize,
}

/// Parses the KITTI velodyne binary layout: consecutive 16-byte records of
/// four little-endian f32 (x, y, z, reflectance). Reflectance is clamped to
/// [0, 1]; records with non-finite values are dropped and counted.
pub fn parse_kitti_bin(bytes: &[u8]) -> Result<KittiParse> {
    if bytes.len() % 16 != 0 {
        return Err(Error::MalformedKittiRecord { byte_len: bytes.len() });
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut rejected = 0;
    for record in bytes.chunks_exact(16) {
        let f = |i: usize| f32::from_le_bytes(record[4 * i..4 * i + 4].try_into().unwrap());
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            rejected += 1;
            continue;
        }
        points.push(Point3::with_intensity(x as f64, y as f64, z as f64, r as f64));
    }
    Ok(KittiParse {
        cloud: PointCloud::new(points, "kitti"),
        rejected_records: rejected,
    })
}

/// Parses the ASCII capture format: one `x y z` triple per non-empty line,
/// whitespace separated.
pub fn parse_carla_points(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::CarlaParse {
                line: idx + 1,
                msg: format!("expected 3 coordinates, got {}", tokens.len()),
            });
        }
        let mut coords = [0.0f64; 3];
        for (slot, token) in coords.iter_mut().zip(&tokens) {
            *slot = token.parse().map_err(|_| Error::CarlaParse {
                line: idx + 1,
                msg: format!("invalid number '{token}'"),
            })?;
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(PointCloud::new(points, "carla"))
}

/// Writes a grid to the `LGRID` container. Empty grids are rejected.
pub fn save_grid(grid: &Grid, sink: &mut impl Write) -> Result<()> {
    if grid.rows() == 0 || grid.cols() == 0 {
        return Err(Error::EmptyGrid);
    }
    let rows = u32::try_from(grid.rows())
        .map_err(|_| Error::Config("grid rows exceed u32".into()))?;
    let cols = u32::try_from(grid.cols())
        .map_err(|_| Error::Config("grid cols exceed u32".into()))?;
    sink.write_all(GRID_MAGIC)?;
    sink.write_all(&rows.to_le_bytes())?;
    sink.write_all(&cols.to_le_bytes())?;
    for v in grid.data() {
        sink.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a grid from the `LGRID` container, validating magic and payload
/// length.
pub fn load_grid(source: &mut impl Read) -> Result<Grid> {
    let mut magic = [0u8; 8];
    read_exact_or_truncated(source, &mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::BadMagic("grid"));
    }
    let mut word = [0u8; 4];
    read_exact_or_truncated(source, &mut word)?;
    let rows = u32::from_le_bytes(word);
    read_exact_or_truncated(source, &mut word)?;
    let cols = u32::from_le_bytes(word);
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyGrid);
    }
    let cells = (rows as u64)
        .checked_mul(cols as u64)
        .filter(|&n| n <= usize::MAX as u64 / 4)
        .ok_or(Error::DimensionOverflow { rows, cols })? as usize;

    let mut payload = vec![0u8; cells * 4];
    read_exact_or_truncated(source, &mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Grid::from_data(rows as usize, cols as usize, data)
}

fn read_exact_or_truncated(source: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated { expected: buf.len() - filled, got: filled })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Writes a binary Netpbm P5 graymap, maxval 255, pixel = round(value*255).
pub fn export_graymap(grid: &Grid, sink: &mut impl Write) -> Result<()> {
    write!(sink, "P5\n{} {}\n255\n", grid.cols(), grid.rows())?;
    let pixels: Vec<u8> = grid
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    sink.write_all(&pixels)?;
    Ok(())
}

/// Draws unpaired batches from two frame-handle pools, uniformly with
/// replacement, using a seeded SplitMix64 stream. Identical seeds produce
/// identical draw sequences; consecutive calls advance the stream.
#[derive(Debug, Clone)]
pub struct UnpairedSampler<T> {
    domain_x: Vec<T>,
    domain_y: Vec<T>,
    batch_size: usize,
    rng: SplitMix64,
}

impl<T: Clone> UnpairedSampler<T> {
    pub fn new(domain_x: Vec<T>, domain_y: Vec<T>, seed: u64, batch_size: usize) -> Result<Self> {
        if domain_x.is_empty() {
            return Err(Error::EmptyDomain("x"));
        }
        if domain_y.is_empty() {
            return Err(Error::EmptyDomain("y"));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(Self { domain_x, domain_y, batch_size, rng: SplitMix64::new(seed) })
    }

    /// One batch per domain. Draws are independent between domains: the X
    /// stream is consumed first, then the Y stream, batch_size draws each.
    pub fn sample_batch(&mut self) -> (Vec<T>, Vec<T>) {
        let xs = (0..self.batch_size)
            .map(|_| self.domain_x[self.rng.index_below(self.domain_x.len())].clone())
            .collect();
        let ys = (0..self.batch_size)
            .map(|_| self.domain_y[self.rng.index_below(self.domain_y.len())].clone())
            .collect();
        (xs, ys)
    }
}
