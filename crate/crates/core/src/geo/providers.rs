//! Geo-data providers: elevation, rendered map tiles, nearby places.
//!
//! Each provider kind is a trait with two families of backends: offline
//! fixtures (grid elevation with bilinear interpolation, PNG tile
//! directories, a procedural tile renderer, CSV place features) and HTTP
//! adapters. Every backend counts its fetches so tests can assert that
//! offline runs perform zero network activity and that cache hits skip the
//! provider entirely.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use image::ImageReader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::cache::{point_key, ProviderCache};
use crate::geo::rate_limit::TokenBucket;
use crate::geo::{haversine_m, GeoPoint, METERS_PER_DEGREE};

pub const DEFAULT_ZOOM: u8 = 13;
pub const DEFAULT_TILE_SIZE: u32 = 500;
pub const DEFAULT_SEARCH_RADIUS_M: f64 = 10_000.0;

/// Web-mercator ground resolution at the equator for 256-px world tiles.
const EQUATOR_M_PER_PX: f64 = 156_543.033_92;

/// Meters per pixel at the given zoom and latitude.
pub fn meters_per_pixel(lat: f64, zoom: u8) -> f64 {
    EQUATOR_M_PER_PX * lat.to_radians().cos() / f64::powi(2.0, zoom as i32)
}

/// Shared fetch counter injected into backends.
#[derive(Clone, Default)]
pub struct CallCounter(Arc<AtomicU64>);

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

/// A decoded RGB map tile centered on a geolocation.
#[derive(Debug, Clone)]
pub struct MapTile {
    pub center: GeoPoint,
    pub zoom: u8,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples, exactly `width * height * 3` bytes.
    pub pixels: Vec<u8>,
}

impl MapTile {
    pub fn rgb_at(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceCategory {
    Railway,
    MajorRoad,
}

impl PlaceCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlaceCategory::Railway => "railway",
            PlaceCategory::MajorRoad => "major_road",
        }
    }
}

impl std::str::FromStr for PlaceCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "railway" => Ok(PlaceCategory::Railway),
            "major_road" => Ok(PlaceCategory::MajorRoad),
            other => Err(Error::data(format!("unknown place category {other:?}"))),
        }
    }
}

pub trait ElevationProvider: Send + Sync {
    /// Elevation in meters; negative values (e.g. water bodies) pass through.
    fn elevation(&self, point: GeoPoint) -> Result<f64>;
}

pub trait TileProvider: Send + Sync {
    /// PNG bytes for a tile centered at `point`.
    fn fetch_tile_png(&self, point: GeoPoint, zoom: u8, width: u32, height: u32)
        -> Result<Vec<u8>>;
}

pub trait PlacesProvider: Send + Sync {
    /// Geodesic distance in meters to the nearest matching feature, or
    /// `None` when nothing matches within `radius_m`.
    fn nearest_distance(
        &self,
        point: GeoPoint,
        category: PlaceCategory,
        radius_m: f64,
    ) -> Result<Option<f64>>;
}

// ---------------------------------------------------------------------------
// Offline fixture backends
// ---------------------------------------------------------------------------

/// Elevation fixture: a regular lat/lon grid sampled with bilinear
/// interpolation. Queries outside the grid clamp to the border.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElevationGrid {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major node values, `rows * cols` entries; row 0 is at `lat0`.
    pub values: Vec<f64>,
}

impl ElevationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.values.len() != self.rows * self.cols {
            return Err(Error::config(
                "elevation grid dimensions do not match values",
            ));
        }
        if self.rows > 1 && self.dlat <= 0.0 || self.cols > 1 && self.dlon <= 0.0 {
            return Err(Error::config("elevation grid spacing must be positive"));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let grid: ElevationGrid = serde_json::from_str(&text)?;
        grid.validate()?;
        Ok(grid)
    }

    fn node(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn sample(&self, point: GeoPoint) -> f64 {
        let fr = if self.rows > 1 {
            (point.lat() - self.lat0) / self.dlat
        } else {
            0.0
        };
        let fc = if self.cols > 1 {
            (point.lon() - self.lon0) / self.dlon
        } else {
            0.0
        };
        let fr = fr.clamp(0.0, (self.rows - 1) as f64);
        let fc = fc.clamp(0.0, (self.cols - 1) as f64);
        let r0 = fr.floor() as usize;
        let c0 = fc.floor() as usize;
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let tr = fr - r0 as f64;
        let tc = fc - c0 as f64;
        let top = self.node(r0, c0) * (1.0 - tc) + self.node(r0, c1) * tc;
        let bot = self.node(r1, c0) * (1.0 - tc) + self.node(r1, c1) * tc;
        top * (1.0 - tr) + bot * tr
    }
}

/// Grid-backed elevation fixture provider.
pub struct GridElevation {
    grid: ElevationGrid,
    counter: CallCounter,
}

impl GridElevation {
    pub fn new(grid: ElevationGrid, counter: CallCounter) -> Result<Self> {
        grid.validate()?;
        Ok(GridElevation { grid, counter })
    }

    /// Constant elevation everywhere.
    pub fn flat(elevation_m: f64, counter: CallCounter) -> Self {
        GridElevation {
            grid: ElevationGrid {
                lat0: 0.0,
                lon0: 0.0,
                dlat: 1.0,
                dlon: 1.0,
                rows: 1,
                cols: 1,
                values: vec![elevation_m],
            },
            counter,
        }
    }
}

impl ElevationProvider for GridElevation {
    fn elevation(&self, point: GeoPoint) -> Result<f64> {
        self.counter.bump();
        Ok(self.grid.sample(point))
    }
}

/// Closure-backed elevation provider for tests and synthetic terrains.
pub struct FnElevation<F> {
    f: F,
    counter: CallCounter,
}

impl<F: Fn(GeoPoint) -> f64 + Send + Sync> FnElevation<F> {
    pub fn new(f: F, counter: CallCounter) -> Self {
        FnElevation { f, counter }
    }
}

impl<F: Fn(GeoPoint) -> f64 + Send + Sync> ElevationProvider for FnElevation<F> {
    fn elevation(&self, point: GeoPoint) -> Result<f64> {
        self.counter.bump();
        Ok((self.f)(point))
    }
}

/// Provider that fails a fixed number of times before succeeding; exercises
/// the retry path.
pub struct FlakyElevation {
    fail_first: u64,
    value: f64,
    counter: CallCounter,
    retryable: bool,
}

impl FlakyElevation {
    pub fn new(fail_first: u64, value: f64, retryable: bool, counter: CallCounter) -> Self {
        FlakyElevation {
            fail_first,
            value,
            counter,
            retryable,
        }
    }
}

impl ElevationProvider for FlakyElevation {
    fn elevation(&self, _point: GeoPoint) -> Result<f64> {
        self.counter.bump();
        if self.counter.get() <= self.fail_first {
            Err(Error::provider(
                "flaky-elevation",
                "simulated outage",
                self.retryable,
            ))
        } else {
            Ok(self.value)
        }
    }
}

pub fn encode_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    let img = image::RgbImage::from_raw(width, height, rgb.to_vec())
        .ok_or_else(|| Error::data("pixel buffer does not match tile dimensions"))?;
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::data(format!("png encode failed: {e}")))?;
    Ok(bytes)
}

pub fn decode_tile_png(
    png: &[u8],
    center: GeoPoint,
    zoom: u8,
    width: u32,
    height: u32,
) -> Result<MapTile> {
    let img = ImageReader::new(Cursor::new(png))
        .with_guessed_format()
        .map_err(|e| Error::data(format!("tile payload unreadable: {e}")))?
        .decode()
        .map_err(|e| Error::data(format!("tile payload is not a decodable image: {e}")))?
        .to_rgb8();
    if img.width() != width || img.height() != height {
        return Err(Error::data(format!(
            "tile payload is {}x{}, expected {width}x{height}",
            img.width(),
            img.height()
        )));
    }
    Ok(MapTile {
        center,
        zoom,
        width,
        height,
        pixels: img.into_raw(),
    })
}

/// Tile fixture: a directory of PNGs keyed by quantized center.
pub struct TileDirProvider {
    dir: PathBuf,
    counter: CallCounter,
}

impl TileDirProvider {
    pub fn new(dir: impl Into<PathBuf>, counter: CallCounter) -> Self {
        TileDirProvider {
            dir: dir.into(),
            counter,
        }
    }

    pub fn tile_filename(point: GeoPoint, zoom: u8, width: u32, height: u32) -> String {
        let (lat_u, lon_u) = point.quantized();
        format!("tile_{lat_u}_{lon_u}_z{zoom}_{width}x{height}.png")
    }
}

impl TileProvider for TileDirProvider {
    fn fetch_tile_png(
        &self,
        point: GeoPoint,
        zoom: u8,
        width: u32,
        height: u32,
    ) -> Result<Vec<u8>> {
        self.counter.bump();
        let path = self
            .dir
            .join(Self::tile_filename(point, zoom, width, height));
        std::fs::read(&path).map_err(|_| {
            Error::provider(
                "tile-dir",
                format!("no fixture tile at {}", path.display()),
                false,
            )
        })
    }
}

/// Procedural map world: lakes as circles on otherwise uniform land.
/// Renders tiles deterministically, so offline runs need no image assets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldModel {
    pub lakes: Vec<Lake>,
    /// Fill color for water pixels.
    pub water_rgb: [u8; 3],
    /// Fill color for everything else.
    pub land_rgb: [u8; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lake {
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
}

impl WorldModel {
    pub fn land_only(land_rgb: [u8; 3], water_rgb: [u8; 3]) -> Self {
        WorldModel {
            lakes: Vec::new(),
            water_rgb,
            land_rgb,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rasterize the world around `center`. Lake centers are projected into
    /// pixel space once per tile; pixels inside the projected circle are
    /// water.
    pub fn render(&self, center: GeoPoint, zoom: u8, width: u32, height: u32) -> Vec<u8> {
        let mpp = meters_per_pixel(center.lat(), zoom);
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        let mut circles = Vec::new();
        for lake in &self.lakes {
            let dx_m =
                (lake.lon - center.lon()) * METERS_PER_DEGREE * center.lat().to_radians().cos();
            let dy_m = (center.lat() - lake.lat) * METERS_PER_DEGREE;
            let cx = width as f64 / 2.0 + dx_m / mpp;
            let cy = height as f64 / 2.0 + dy_m / mpp;
            let r_px = lake.radius_m / mpp;
            // Skip lakes that cannot intersect this tile.
            let margin = r_px + 1.0;
            if cx < -margin
                || cy < -margin
                || cx > width as f64 + margin
                || cy > height as f64 + margin
            {
                continue;
            }
            circles.push((cx, cy, r_px * r_px));
        }
        for y in 0..height {
            for x in 0..width {
                let water = circles.iter().any(|&(cx, cy, r2)| {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    dx * dx + dy * dy <= r2
                });
                let rgb = if water { self.water_rgb } else { self.land_rgb };
                pixels.extend_from_slice(&rgb);
            }
        }
        pixels
    }
}

pub struct SyntheticTileProvider {
    world: WorldModel,
    counter: CallCounter,
}

impl SyntheticTileProvider {
    pub fn new(world: WorldModel, counter: CallCounter) -> Self {
        SyntheticTileProvider { world, counter }
    }
}

impl TileProvider for SyntheticTileProvider {
    fn fetch_tile_png(
        &self,
        point: GeoPoint,
        zoom: u8,
        width: u32,
        height: u32,
    ) -> Result<Vec<u8>> {
        self.counter.bump();
        encode_png(
            width,
            height,
            &self.world.render(point, zoom, width, height),
        )
    }
}

/// Places fixture: point features from a CSV of `lat,lon,category` rows.
/// Polylines are represented by their sampled vertices.
pub struct CsvPlaces {
    features: Vec<(GeoPoint, PlaceCategory)>,
    counter: CallCounter,
}

impl CsvPlaces {
    pub fn new(features: Vec<(GeoPoint, PlaceCategory)>, counter: CallCounter) -> Self {
        CsvPlaces { features, counter }
    }

    pub fn from_csv_file(path: &Path, counter: CallCounter) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(Error::Csv)?;
        let mut features = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::data(format!(
                    "places fixture {}: row {} has {} fields, expected lat,lon,category",
                    path.display(),
                    i + 2,
                    rec.len()
                )));
            }
            let lat: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("places fixture row {}: bad lat", i + 2)))?;
            let lon: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("places fixture row {}: bad lon", i + 2)))?;
            let cat: PlaceCategory = rec[2].trim().parse()?;
            features.push((GeoPoint::new(lat, lon)?, cat));
        }
        Ok(CsvPlaces { features, counter })
    }
}

impl PlacesProvider for CsvPlaces {
    fn nearest_distance(
        &self,
        point: GeoPoint,
        category: PlaceCategory,
        radius_m: f64,
    ) -> Result<Option<f64>> {
        self.counter.bump();
        let best = self
            .features
            .iter()
            .filter(|(_, c)| *c == category)
            .map(|(p, _)| haversine_m(point, *p))
            .fold(f64::INFINITY, f64::min);
        Ok(if best <= radius_m { Some(best) } else { None })
    }
}

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

/// Common state for the HTTP adapters: one client, a token bucket, and an
/// optional static API key sent as `x-api-key`.
pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    bucket: Arc<TokenBucket>,
    counter: CallCounter,
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        bucket: Arc<TokenBucket>,
        counter: CallCounter,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::provider("http", format!("client build failed: {e}"), false))?;
        Ok(HttpBackend {
            base_url: base_url.into(),
            api_key,
            client,
            bucket,
            counter,
        })
    }

    fn get(&self, name: &str, query: &[(&str, String)]) -> Result<Vec<u8>> {
        self.bucket.acquire();
        self.counter.bump();
        let mut req = self.client.get(&self.base_url).query(query);
        if let Some(key) = &self.api_key {
            req = req.header("x-api-key", key);
        }
        let resp = req
            .send()
            .map_err(|e| Error::provider(name, format!("request failed: {e}"), true))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Error::provider(
                name,
                format!("server error {status}"),
                true,
            ));
        }
        if !status.is_success() {
            return Err(Error::provider(
                name,
                format!("unexpected status {status}"),
                false,
            ));
        }
        resp.bytes()
            .map(|b| b.to_vec())
            .map_err(|e| Error::provider(name, format!("body read failed: {e}"), true))
    }
}

/// GET `?lat=&lon=` returning JSON `{"elevation": <float>}`.
pub struct HttpElevationProvider(pub HttpBackend);

impl ElevationProvider for HttpElevationProvider {
    fn elevation(&self, point: GeoPoint) -> Result<f64> {
        let body = self.0.get(
            "http-elevation",
            &[
                ("lat", point.lat().to_string()),
                ("lon", point.lon().to_string()),
            ],
        )?;
        #[derive(Deserialize)]
        struct Resp {
            elevation: f64,
        }
        let resp: Resp = serde_json::from_slice(&body)
            .map_err(|e| Error::provider("http-elevation", format!("bad response: {e}"), false))?;
        Ok(resp.elevation)
    }
}

/// GET `?lat=&lon=&zoom=&width=&height=` returning PNG bytes.
pub struct HttpTileProvider(pub HttpBackend);

impl TileProvider for HttpTileProvider {
    fn fetch_tile_png(
        &self,
        point: GeoPoint,
        zoom: u8,
        width: u32,
        height: u32,
    ) -> Result<Vec<u8>> {
        self.0.get(
            "http-tiles",
            &[
                ("lat", point.lat().to_string()),
                ("lon", point.lon().to_string()),
                ("zoom", zoom.to_string()),
                ("width", width.to_string()),
                ("height", height.to_string()),
            ],
        )
    }
}

/// GET `?lat=&lon=&category=&radius_m=` returning `{"distance_m": <float|null>}`.
pub struct HttpPlacesProvider(pub HttpBackend);

impl PlacesProvider for HttpPlacesProvider {
    fn nearest_distance(
        &self,
        point: GeoPoint,
        category: PlaceCategory,
        radius_m: f64,
    ) -> Result<Option<f64>> {
        let body = self.0.get(
            "http-places",
            &[
                ("lat", point.lat().to_string()),
                ("lon", point.lon().to_string()),
                ("category", category.as_str().to_string()),
                ("radius_m", radius_m.to_string()),
            ],
        )?;
        #[derive(Deserialize)]
        struct Resp {
            distance_m: Option<f64>,
        }
        let resp: Resp = serde_json::from_slice(&body)
            .map_err(|e| Error::provider("http-places", format!("bad response: {e}"), false))?;
        Ok(resp.distance_m)
    }
}

// ---------------------------------------------------------------------------
// Cached, retrying access layer
// ---------------------------------------------------------------------------

/// Bundles the three providers with the shared cache and retry policy.
pub struct GeoServices {
    pub elevation: Box<dyn ElevationProvider>,
    pub tiles: Box<dyn TileProvider>,
    pub places: Box<dyn PlacesProvider>,
    pub cache: Option<ProviderCache>,
    /// Extra attempts after the first failure of a retryable error.
    pub retries: u32,
    pub retry_backoff: Duration,
    pub search_radius_m: f64,
}

impl GeoServices {
    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    if !self.retry_backoff.is_zero() {
                        std::thread::sleep(self.retry_backoff * attempt);
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn cached_bytes(
        &self,
        kind: &str,
        key: &str,
        fetch: impl FnMut() -> Result<Vec<u8>>,
    ) -> Result<Vec<u8>> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(kind, key) {
                return Ok(hit);
            }
        }
        let mut fetch = fetch;
        let payload = self.with_retries(&mut fetch)?;
        if let Some(cache) = &self.cache {
            cache.put(kind, key, &payload)?;
        }
        Ok(payload)
    }

    /// Elevation in meters, cache-backed; negative values pass through.
    pub fn elevation_at(&self, point: GeoPoint) -> Result<f64> {
        let key = point_key(point, "");
        let payload = self.cached_bytes("elevation", &key, || {
            self.elevation
                .elevation(point)
                .map(|v| format!("{v:?}").into_bytes())
        })?;
        std::str::from_utf8(&payload)
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::data(format!("corrupt cached elevation for key {key}")))
    }

    /// Decoded tile, cache-backed at the PNG-byte layer.
    pub fn map_tile(&self, point: GeoPoint, zoom: u8, width: u32, height: u32) -> Result<MapTile> {
        if zoom > 21 {
            return Err(Error::config(format!("zoom {zoom} outside [0, 21]")));
        }
        let key = point_key(point, &format!("zoom={zoom},w={width},h={height}"));
        let png = self.cached_bytes("tiles", &key, || {
            self.tiles.fetch_tile_png(point, zoom, width, height)
        })?;
        decode_tile_png(&png, point, zoom, width, height)
    }

    /// Distance in meters to the nearest feature of `category`. When nothing
    /// matches within the search radius the radius itself is returned, which
    /// keeps the feature numeric and monotone.
    pub fn nearest_place_m(&self, point: GeoPoint, category: PlaceCategory) -> Result<f64> {
        let radius = self.search_radius_m;
        let key = point_key(
            point,
            &format!("cat={},radius={}", category.as_str(), radius.round() as i64),
        );
        let payload = self.cached_bytes("places", &key, || {
            self.places
                .nearest_distance(point, category, radius)
                .map(|d| match d {
                    Some(v) => format!("{v:?}").into_bytes(),
                    None => b"null".to_vec(),
                })
        })?;
        if payload == b"null" {
            return Ok(radius);
        }
        std::str::from_utf8(&payload)
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .map(|d| d.min(radius))
            .ok_or_else(|| Error::data(format!("corrupt cached place distance for key {key}")))
    }
}
