//! Persistent response cache for geo-data providers.
//!
//! Layout: `<cache>/<provider>/<sha256(key)>.bin` holding the raw payload,
//! plus a `.meta` JSON sidecar with the key and fetch timestamp. A cache hit
//! returns the payload byte-identical to the original fetch.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub struct ProviderCache {
    root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    key: String,
    provider: String,
    fetched_at_unix: u64,
}

impl ProviderCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(root.display().to_string(), e))?;
        Ok(ProviderCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, provider: &str, key: &str) -> PathBuf {
        let digest = Sha256::digest(key.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        self.root.join(provider).join(format!("{hex}.bin"))
    }

    pub fn get(&self, provider: &str, key: &str) -> Option<Vec<u8>> {
        fs::read(self.entry_path(provider, key)).ok()
    }

    pub fn put(&self, provider: &str, key: &str, payload: &[u8]) -> Result<()> {
        let path = self.entry_path(provider, key);
        let dir = path.parent().expect("entry path has parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        fs::write(&path, payload).map_err(|e| Error::io(path.display().to_string(), e))?;
        let meta = Meta {
            key: key.to_string(),
            provider: provider.to_string(),
            fetched_at_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let meta_path = path.with_extension("meta");
        fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)
            .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
        Ok(())
    }
}

/// Canonical cache key for a point request: coordinates quantized to
/// micro-degrees so near-identical points share an entry.
pub fn point_key(point: crate::geo::GeoPoint, extra: &str) -> String {
    let (lat_u, lon_u) = point.quantized();
    if extra.is_empty() {
        format!("lat={lat_u},lon={lon_u}")
    } else {
        format!("lat={lat_u},lon={lon_u},{extra}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;

    #[test]
    fn roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ProviderCache::open(dir.path()).unwrap();
        let payload = vec![0u8, 1, 2, 255, 254];
        cache.put("elev", "lat=1,lon=2", &payload).unwrap();
        assert_eq!(cache.get("elev", "lat=1,lon=2").unwrap(), payload);
        assert!(cache.get("elev", "lat=1,lon=3").is_none());
        assert!(cache.get("tiles", "lat=1,lon=2").is_none());
    }

    #[test]
    fn nearby_points_share_a_key() {
        let a = GeoPoint::new(10.1234561, -3.0).unwrap();
        let b = GeoPoint::new(10.1234559, -3.0).unwrap();
        assert_eq!(point_key(a, ""), point_key(b, ""));
        let c = GeoPoint::new(10.1234661, -3.0).unwrap();
        assert_ne!(point_key(a, ""), point_key(c, ""));
    }

    #[test]
    fn negative_zero_quantizes_like_zero() {
        let a = GeoPoint::new(-1e-9, 0.0).unwrap();
        let b = GeoPoint::new(0.0, 0.0).unwrap();
        assert_eq!(point_key(a, ""), point_key(b, ""));
    }
}
