//! Location-based features: four elevation features from seeded disk
//! sampling, two water features from tile segmentation, and the rail/road
//! distances. Eight slots total, each a finite number or flagged missing.

pub mod water;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::providers::{ElevationProvider, GeoServices, PlaceCategory};
use crate::geo::{GeoPoint, METERS_PER_DEGREE};
use crate::seed::mix;
use water::{segment_water, water_features};

/// Stable column order of the location feature block.
pub const LOCATION_COLUMNS: [&str; 8] = [
    "elev_here",
    "max_elev_nearby",
    "max_drop_from_here",
    "max_pairwise_range",
    "min_water_dist_px",
    "water_fraction",
    "rail_dist_m",
    "road_dist_m",
];

/// Sampling radii and counts for the elevation features. The wide ring
/// feeds the maximum-elevation feature; the near ring feeds both difference
/// features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElevationConfig {
    pub n_near: usize,
    pub r_near_m: f64,
    pub n_far: usize,
    pub r_far_m: f64,
}

impl Default for ElevationConfig {
    fn default() -> Self {
        ElevationConfig {
            n_near: 10,
            r_near_m: 1_000.0,
            n_far: 5,
            r_far_m: 5_000.0,
        }
    }
}

/// Water segmentation settings: palette colors with a per-channel tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaterConfig {
    pub palette: Vec<[u8; 3]>,
    pub tol: u8,
    pub zoom: u8,
    pub tile_width: u32,
    pub tile_height: u32,
}

impl Default for WaterConfig {
    fn default() -> Self {
        WaterConfig {
            palette: vec![[170, 218, 255]],
            tol: 12,
            zoom: crate::geo::providers::DEFAULT_ZOOM,
            tile_width: crate::geo::providers::DEFAULT_TILE_SIZE,
            tile_height: crate::geo::providers::DEFAULT_TILE_SIZE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct GeoFeatConfig {
    pub elevation: ElevationConfig,
    pub water: WaterConfig,
}

/// Draw `n` points uniformly over the geodesic disk of `radius_m` around
/// `center`: bearing uniform, distance `radius_m * sqrt(u)`, offsets applied
/// with the local equirectangular approximation. Each sample draws bearing
/// then distance, so a given seed fixes the exact sequence.
pub fn sample_disk(center: GeoPoint, radius_m: f64, n: usize, seed: u64) -> Result<Vec<GeoPoint>> {
    if radius_m <= 0.0 {
        return Err(Error::config("sample_disk radius must be positive"));
    }
    if n == 0 {
        return Err(Error::config("sample_disk needs at least one sample"));
    }
    if center.lat().abs() > 89.0 {
        return Err(Error::config(
            "sample_disk is undefined within 1 degree of the poles (local approximation invalid)",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let u: f64 = rng.gen_range(0.0..1.0);
        let d = radius_m * u.sqrt();
        let dlat = d * theta.cos() / METERS_PER_DEGREE;
        let dlon = d * theta.sin() / (METERS_PER_DEGREE * center.lat().to_radians().cos());
        out.push(GeoPoint::new(center.lat() + dlat, center.lon() + dlon)?);
    }
    Ok(out)
}

/// Sub-seed labels for the two sampling rings; exposed so an oracle can
/// replay the exact same samples.
pub const FAR_RING_LABEL: u64 = 1;
pub const NEAR_RING_LABEL: u64 = 2;

/// The four elevation features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationFeatures {
    /// Elevation at the point itself (may be negative, e.g. water).
    pub elev_here: f64,
    /// Max elevation over the far ring samples.
    pub max_elev_nearby: f64,
    /// Max over near samples of (elev_here - sample); negative when every
    /// sample is higher.
    pub max_drop_from_here: f64,
    /// Max minus min elevation over the near samples.
    pub max_pairwise_range: f64,
}

pub fn elevation_features(
    point: GeoPoint,
    provider: &dyn ElevationProvider,
    cfg: &ElevationConfig,
    seed: u64,
) -> Result<ElevationFeatures> {
    let elev_here = provider.elevation(point)?;
    let far = sample_disk(point, cfg.r_far_m, cfg.n_far, mix(seed, FAR_RING_LABEL))?;
    let near = sample_disk(point, cfg.r_near_m, cfg.n_near, mix(seed, NEAR_RING_LABEL))?;

    let mut max_elev_nearby = f64::NEG_INFINITY;
    for p in &far {
        max_elev_nearby = max_elev_nearby.max(provider.elevation(*p)?);
    }

    let mut max_drop = f64::NEG_INFINITY;
    let mut min_near = f64::INFINITY;
    let mut max_near = f64::NEG_INFINITY;
    for p in &near {
        let e = provider.elevation(*p)?;
        max_drop = max_drop.max(elev_here - e);
        min_near = min_near.min(e);
        max_near = max_near.max(e);
    }

    Ok(ElevationFeatures {
        elev_here,
        max_elev_nearby,
        max_drop_from_here: max_drop,
        max_pairwise_range: max_near - min_near,
    })
}

/// The full eight-slot location block with its missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationFeatureBlock {
    /// Values in [`LOCATION_COLUMNS`] order; entries are meaningless where
    /// the mask flags them missing.
    pub values: [f64; 8],
    pub missing: [bool; 8],
}

impl LocationFeatureBlock {
    pub fn all_missing() -> Self {
        LocationFeatureBlock {
            values: [0.0; 8],
            missing: [true; 8],
        }
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        let i = LOCATION_COLUMNS.iter().position(|c| *c == column)?;
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }
}

/// Compute all eight location features for a point. Each provider failure
/// flags only its own slots; the vector is never abandoned wholesale.
pub fn location_feature_vector(
    point: GeoPoint,
    services: &GeoServices,
    cfg: &GeoFeatConfig,
    seed: u64,
) -> LocationFeatureBlock {
    let mut block = LocationFeatureBlock::all_missing();

    if let Ok(f) = elevation_features_via(point, services, &cfg.elevation, seed) {
        block.values[0] = f.elev_here;
        block.values[1] = f.max_elev_nearby;
        block.values[2] = f.max_drop_from_here;
        block.values[3] = f.max_pairwise_range;
        block.missing[0] = false;
        block.missing[1] = false;
        block.missing[2] = false;
        block.missing[3] = false;
    }

    if let Ok(tile) = services.map_tile(
        point,
        cfg.water.zoom,
        cfg.water.tile_width,
        cfg.water.tile_height,
    ) {
        if let Ok(mask) = segment_water(&tile, &cfg.water.palette, cfg.water.tol) {
            let center = ((tile.width / 2) as usize, (tile.height / 2) as usize);
            let wf = water_features(&mask, center);
            block.values[4] = wf.min_water_dist_px;
            block.values[5] = wf.water_fraction;
            block.missing[4] = false;
            block.missing[5] = false;
        }
    }

    if let Ok(d) = services.nearest_place_m(point, PlaceCategory::Railway) {
        block.values[6] = d;
        block.missing[6] = false;
    }
    if let Ok(d) = services.nearest_place_m(point, PlaceCategory::MajorRoad) {
        block.values[7] = d;
        block.missing[7] = false;
    }

    block
}

/// Elevation features through the cached, retrying service layer.
fn elevation_features_via(
    point: GeoPoint,
    services: &GeoServices,
    cfg: &ElevationConfig,
    seed: u64,
) -> Result<ElevationFeatures> {
    struct ViaServices<'a>(&'a GeoServices);
    impl ElevationProvider for ViaServices<'_> {
        fn elevation(&self, p: GeoPoint) -> Result<f64> {
            self.0.elevation_at(p)
        }
    }
    elevation_features(point, &ViaServices(services), cfg, seed)
}
