//! Geometric primitives, spherical/Cartesian conversions, and sensor
//! configuration presets.
//!
//! Conventions: sensor frame is x forward, y left, z up, meters. Angles in
//! configs and coordinates are degrees (azimuth counterclockwise from +x,
//! elevation against the horizontal plane); radians appear only inside the
//! trig calls.

use crate::error::{Error, Result};

/// One LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Reflectance in [0, 1] when the source provides it.
    pub intensity: Option<f64>,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, intensity: None }
    }

    pub fn with_intensity(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity: Some(intensity.clamp(0.0, 1.0)) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// An ordered set of returns for one frame. Pure transforms preserve order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>) -> Self {
        Self { points, frame_id: frame_id.into() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Range/azimuth/elevation triple. Azimuth is wrapped into [0, 360),
/// elevation lies in [-90, 90], range is non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub range_m: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl SphericalCoord {
    pub fn new(range_m: f64, azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            range_m: range_m.max(0.0),
            azimuth_deg: wrap_azimuth(azimuth_deg),
            elevation_deg,
        }
    }
}

fn wrap_azimuth(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Vertical layer count, fields of view, angular resolution and maximum
/// range of a scanning LiDAR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub channels: usize,
    pub h_fov_deg: f64,
    pub v_fov_min_deg: f64,
    pub v_fov_max_deg: f64,
    pub h_res_deg: f64,
    pub max_range_m: f64,
}

/// Default horizontal angular resolution: 1024 columns over a full turn.
pub const DEFAULT_H_RES_DEG: f64 = 360.0 / 1024.0;

impl SensorConfig {
    /// Number of azimuth steps: h_fov / h_res, which must round to a
    /// positive integer.
    pub fn cols(&self) -> usize {
        (self.h_fov_deg / self.h_res_deg).round() as usize
    }

    pub fn v_fov_span_deg(&self) -> f64 {
        self.v_fov_max_deg - self.v_fov_min_deg
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be >= 1".into()));
        }
        if !(self.h_fov_deg > 0.0 && self.h_fov_deg <= 360.0) {
            return Err(Error::Config(format!(
                "h_fov_deg must be in (0, 360], got {}",
                self.h_fov_deg
            )));
        }
        if self.v_fov_min_deg >= self.v_fov_max_deg {
            return Err(Error::Config(format!(
                "vertical FOV bounds out of order: [{}, {}]",
                self.v_fov_min_deg, self.v_fov_max_deg
            )));
        }
        if !(self.h_res_deg > 0.0) {
            return Err(Error::Config("h_res_deg must be > 0".into()));
        }
        let cols = self.h_fov_deg / self.h_res_deg;
        if (cols - cols.round()).abs() > 1e-9 || cols.round() < 1.0 {
            return Err(Error::Config(format!(
                "h_fov/h_res must be a positive integer column count, got {cols}"
            )));
        }
        if !(self.max_range_m > 0.0) {
            return Err(Error::Config("max_range_m must be > 0".into()));
        }
        Ok(())
    }
}

/// The three sensor configurations shipped as presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorPreset {
    Carla32,
    Carla64,
    Kitti64,
}

impl std::str::FromStr for SensorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carla32" => Ok(SensorPreset::Carla32),
            "carla64" => Ok(SensorPreset::Carla64),
            "kitti64" => Ok(SensorPreset::Kitti64),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Returns the preset's sensor configuration.
///
/// The KITTI vertical FOV is split [-24.9, +2.0] like the physical HDL-64E;
/// the CARLA presets split their 44 degree span symmetrically about the
/// horizon ([-22, +22]) since the simulator leaves the pitch configurable.
/// Horizontal resolution defaults to [`DEFAULT_H_RES_DEG`]. All fields can
/// be overridden after construction.
pub fn sensor_preset(preset: SensorPreset) -> SensorConfig {
    match preset {
        SensorPreset::Carla32 => SensorConfig {
            channels: 32,
            h_fov_deg: 360.0,
            v_fov_min_deg: -22.0,
            v_fov_max_deg: 22.0,
            h_res_deg: DEFAULT_H_RES_DEG,
            max_range_m: 50.0,
        },
        SensorPreset::Carla64 => SensorConfig {
            channels: 64,
            h_fov_deg: 360.0,
            v_fov_min_deg: -22.0,
            v_fov_max_deg: 22.0,
            h_res_deg: DEFAULT_H_RES_DEG,
            max_range_m: 50.0,
        },
        SensorPreset::Kitti64 => SensorConfig {
            channels: 64,
            h_fov_deg: 360.0,
            v_fov_min_deg: -24.9,
            v_fov_max_deg: 2.0,
            h_res_deg: DEFAULT_H_RES_DEG,
            max_range_m: 120.0,
        },
    }
}

/// Cartesian to spherical. The origin maps to all-zero by convention so
/// degenerate returns never error.
pub fn cartesian_to_spherical(p: &Point3) -> SphericalCoord {
    let range = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
    if range == 0.0 {
        return SphericalCoord { range_m: 0.0, azimuth_deg: 0.0, elevation_deg: 0.0 };
    }
    let azimuth = wrap_azimuth(p.y.atan2(p.x).to_degrees());
    let horizontal = (p.x * p.x + p.y * p.y).sqrt();
    let elevation = p.z.atan2(horizontal).to_degrees();
    SphericalCoord { range_m: range, azimuth_deg: azimuth, elevation_deg: elevation }
}

/// Spherical to Cartesian; inverse of [`cartesian_to_spherical`] up to
/// floating round-off.
pub fn spherical_to_cartesian(s: &SphericalCoord) -> Point3 {
    let az = s.azimuth_deg.to_radians();
    let el = s.elevation_deg.to_radians();
    let horizontal = s.range_m * el.cos();
    Point3::new(horizontal * az.cos(), horizontal * az.sin(), s.range_m * el.sin())
}

/// Oriented 3D box: center, extents and yaw about z, normalized to [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox3 {
    pub center: Point3,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub yaw_rad: f64,
}

impl BoundingBox3 {
    pub fn new(center: Point3, length_m: f64, width_m: f64, height_m: f64, yaw_rad: f64) -> Result<Self> {
        if !(length_m > 0.0 && width_m > 0.0 && height_m > 0.0) {
            return Err(Error::Config("bounding box extents must be positive".into()));
        }
        Ok(Self { center, length_m, width_m, height_m, yaw_rad: normalize_yaw(yaw_rad) })
    }
}

fn normalize_yaw(yaw: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn axis_aligned_conversions() {
        let s = cartesian_to_spherical(&Point3::new(1.0, 0.0, 0.0));
        assert_eq!((s.range_m, s.azimuth_deg, s.elevation_deg), (1.0, 0.0, 0.0));

        let s = cartesian_to_spherical(&Point3::new(0.0, 1.0, 0.0));
        assert_eq!((s.range_m, s.azimuth_deg, s.elevation_deg), (1.0, 90.0, 0.0));
    }

    #[test]
    fn three_four_zero() {
        // atan2(4, 3) in degrees, evaluated independently.
        let s = cartesian_to_spherical(&Point3::new(3.0, 4.0, 0.0));
        assert_eq!(s.range_m, 5.0);
        assert!((s.azimuth_deg - 53.13010235415598).abs() < 1e-12);
        assert_eq!(s.elevation_deg, 0.0);
    }

    #[test]
    fn origin_is_all_zero() {
        let s = cartesian_to_spherical(&Point3::new(0.0, 0.0, 0.0));
        assert_eq!((s.range_m, s.azimuth_deg, s.elevation_deg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn spherical_axis_cases() {
        let p = spherical_to_cartesian(&SphericalCoord::new(1.0, 0.0, 0.0));
        assert!((p.x - 1.0).abs() < 1e-15 && p.y.abs() < 1e-15 && p.z.abs() < 1e-15);

        let p = spherical_to_cartesian(&SphericalCoord::new(2.0, 180.0, 0.0));
        assert!((p.x + 2.0).abs() < 1e-12 && p.y.abs() < 1e-12 && p.z.abs() < 1e-15);
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = SplitMix64::new(0x51AC);
        let mut max_err: f64 = 0.0;
        for _ in 0..1000 {
            let p = Point3::new(
                rng.uniform(-100.0, 100.0),
                rng.uniform(-100.0, 100.0),
                rng.uniform(-20.0, 20.0),
            );
            let q = spherical_to_cartesian(&cartesian_to_spherical(&p));
            max_err = max_err
                .max((p.x - q.x).abs())
                .max((p.y - q.y).abs())
                .max((p.z - q.z).abs());
        }
        assert!(max_err < 1e-9, "max coordinate error {max_err}");
    }

    #[test]
    fn presets_match_published_specs() {
        let k = sensor_preset(SensorPreset::Kitti64);
        assert_eq!(k.channels, 64);
        assert_eq!(k.h_fov_deg, 360.0);
        assert_eq!(k.v_fov_span_deg(), 26.9);
        assert_eq!(k.max_range_m, 120.0);

        let c32 = sensor_preset(SensorPreset::Carla32);
        assert_eq!(c32.channels, 32);
        assert_eq!(c32.h_fov_deg, 360.0);
        assert_eq!(c32.v_fov_span_deg(), 44.0);
        assert_eq!(c32.max_range_m, 50.0);

        let c64 = sensor_preset(SensorPreset::Carla64);
        assert_eq!(c64.channels, 64);
        assert_eq!(c64.v_fov_span_deg(), 44.0);
        assert_eq!(c64.max_range_m, 50.0);
    }

    #[test]
    fn preset_parse_rejects_unknown() {
        let err = "velodyne16".parse::<SensorPreset>().unwrap_err();
        assert!(matches!(err, Error::UnknownPreset(_)));
    }

    #[test]
    fn preset_configs_validate() {
        for preset in [SensorPreset::Carla32, SensorPreset::Carla64, SensorPreset::Kitti64] {
            sensor_preset(preset).validate().unwrap();
        }
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut c = sensor_preset(SensorPreset::Kitti64);
        c.channels = 0;
        assert!(c.validate().is_err());

        let mut c = sensor_preset(SensorPreset::Kitti64);
        c.v_fov_min_deg = 5.0;
        assert!(c.validate().is_err());

        let mut c = sensor_preset(SensorPreset::Kitti64);
        c.h_res_deg = 0.37; // 360/0.37 is not an integer
        assert!(c.validate().is_err());
    }

    #[test]
    fn yaw_normalization() {
        use std::f64::consts::PI;
        let b = BoundingBox3::new(Point3::new(0.0, 0.0, 0.0), 1.0, 1.0, 1.0, 3.0 * PI).unwrap();
        assert!((-PI..PI).contains(&b.yaw_rad));
        assert!((b.yaw_rad - (-PI)).abs() < 1e-12 || (b.yaw_rad - PI).abs() < 1e-12);

        let b = BoundingBox3::new(Point3::new(0.0, 0.0, 0.0), 1.0, 1.0, 1.0, -PI).unwrap();
        assert_eq!(b.yaw_rad, -PI);
    }

    proptest! {
        #[test]
        fn azimuth_always_wrapped(az in -1000.0f64..1000.0) {
            let s = SphericalCoord::new(1.0, az, 0.0);
            prop_assert!((0.0..360.0).contains(&s.azimuth_deg));
        }

        #[test]
        fn round_trip_within_tolerance(
            x in -1e3f64..1e3,
            y in -1e3f64..1e3,
            z in -1e3f64..1e3,
        ) {
            let p = Point3::new(x, y, z);
            let s = cartesian_to_spherical(&p);
            prop_assert!((0.0..360.0).contains(&s.azimuth_deg));
            prop_assert!((-90.0..=90.0).contains(&s.elevation_deg));
            if s.range_m > 1e-6 {
                let q = spherical_to_cartesian(&s);
                let scale = s.range_m.max(1.0);
                prop_assert!((p.x - q.x).abs() < 1e-9 * scale);
                prop_assert!((p.y - q.y).abs() < 1e-9 * scale);
                prop_assert!((p.z - q.z).abs() < 1e-9 * scale);
            }
        }
    }
}
