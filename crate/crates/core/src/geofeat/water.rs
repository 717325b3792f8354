//! Water segmentation of rendered map tiles and the two water features:
//! pixel distance from tile center to the nearest water pixel, and the
//! fraction of water pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::providers::MapTile;

/// Binary per-pixel water mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl WaterMask {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }
}

/// A pixel is water iff some palette color matches within the per-channel
/// tolerance (max-channel distance).
pub fn segment_water(tile: &MapTile, palette: &[[u8; 3]], tol: u8) -> Result<WaterMask> {
    if palette.is_empty() {
        return Err(Error::config("water palette must not be empty"));
    }
    let mut data = Vec::with_capacity((tile.width * tile.height) as usize);
    for px in tile.pixels.chunks_exact(3) {
        let water = palette.iter().any(|c| {
            let dr = (px[0] as i16 - c[0] as i16).unsigned_abs();
            let dg = (px[1] as i16 - c[1] as i16).unsigned_abs();
            let db = (px[2] as i16 - c[2] as i16).unsigned_abs();
            dr.max(dg).max(db) <= tol as u16
        });
        data.push(water);
    }
    Ok(WaterMask {
        width: tile.width,
        height: tile.height,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterFeatures {
    /// Euclidean pixel distance from the center to the nearest water pixel;
    /// the ceiling of the tile diagonal when there is no water at all.
    pub min_water_dist_px: f64,
    /// Water pixels over total pixels, in [0, 1].
    pub water_fraction: f64,
}

/// Distance sentinel for a waterless tile: ceil(sqrt(w^2 + h^2)), 708 for
/// the default 500x500 tile.
pub fn no_water_sentinel(width: u32, height: u32) -> f64 {
    ((width as f64).powi(2) + (height as f64).powi(2))
        .sqrt()
        .ceil()
}

/// Exact brute-force scan: minimum squared integer distance from `center`
/// to a water pixel, then one square root.
pub fn water_features(mask: &WaterMask, center: (usize, usize)) -> WaterFeatures {
    let (cx, cy) = (center.0 as i64, center.1 as i64);
    let mut best: Option<i64> = None;
    let mut water_count: u64 = 0;
    for y in 0..mask.height as i64 {
        for x in 0..mask.width as i64 {
            if mask.data[(y * mask.width as i64 + x) as usize] {
                water_count += 1;
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                best = Some(best.map_or(d2, |b| b.min(d2)));
            }
        }
    }
    let total = mask.width as u64 * mask.height as u64;
    WaterFeatures {
        min_water_dist_px: match best {
            Some(d2) => (d2 as f64).sqrt(),
            None => no_water_sentinel(mask.width, mask.height),
        },
        water_fraction: water_count as f64 / total as f64,
    }
}
