//! HTTP provider adapters against a local canned-response server: query
//! contracts, JSON parsing, retry on server errors, the API-key header, and
//! cache behavior.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use killfie_core::geo::cache::ProviderCache;
use killfie_core::geo::providers::{
    encode_png, CallCounter, CsvPlaces, GeoServices, HttpBackend, HttpElevationProvider,
    HttpPlacesProvider, HttpTileProvider, PlaceCategory,
};
use killfie_core::geo::rate_limit::TokenBucket;
use killfie_core::geo::GeoPoint;

struct CannedServer {
    addr: String,
    hits: Arc<AtomicUsize>,
}

/// One response per expected request, then the listener thread exits.
/// Each canned entry is (status line, content type, body); the server
/// records every request line + headers for later assertions.
fn serve(responses: Vec<(&'static str, &'static str, Vec<u8>)>) -> (CannedServer, Arc<std::sync::Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
    let thread_hits = hits.clone();
    let thread_seen = seen.clone();
    std::thread::spawn(move || {
        for (status, content_type, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            thread_hits.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                if line == "\r\n" {
                    break;
                }
                request.push_str(&line);
            }
            thread_seen.lock().unwrap().push(request);
            let header = format!(
                "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            let _ = stream.write_all(header.as_bytes());
            let _ = stream.write_all(&body);
            let _ = stream.flush();
        }
    });
    (CannedServer { addr, hits }, seen)
}

fn backend(url: &str, api_key: Option<&str>, transport: CallCounter) -> HttpBackend {
    HttpBackend::new(
        url,
        api_key.map(str::to_string),
        Arc::new(TokenBucket::new(1_000.0, 1_000.0)),
        transport,
    )
    .unwrap()
}

fn services_with_elevation(provider: HttpElevationProvider, cache: Option<ProviderCache>) -> GeoServices {
    GeoServices {
        elevation: Box::new(provider),
        tiles: Box::new(DummyTiles),
        places: Box::new(CsvPlaces::new(vec![], CallCounter::new())),
        cache,
        retries: 3,
        retry_backoff: Duration::ZERO,
        search_radius_m: 10_000.0,
    }
}

struct DummyTiles;
impl killfie_core::geo::providers::TileProvider for DummyTiles {
    fn fetch_tile_png(
        &self,
        _point: GeoPoint,
        _zoom: u8,
        _width: u32,
        _height: u32,
    ) -> killfie_core::Result<Vec<u8>> {
        unreachable!("tiles not used here")
    }
}

#[test]
fn elevation_get_parses_json_and_sends_query() {
    let (server, seen) = serve(vec![("200 OK", "application/json", br#"{"elevation": 123.5}"#.to_vec())]);
    let transport = CallCounter::new();
    let svc = services_with_elevation(
        HttpElevationProvider(backend(&server.addr, Some("sekrit"), transport.clone())),
        None,
    );
    let point = GeoPoint::new(12.5, -77.25).unwrap();
    assert_eq!(svc.elevation_at(point).unwrap(), 123.5);
    assert_eq!(transport.get(), 1);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    let request = seen.lock().unwrap().join("\n");
    assert!(request.contains("lat=12.5"), "{request}");
    assert!(request.contains("lon=-77.25"), "{request}");
    assert!(request.contains("x-api-key: sekrit"), "{request}");
}

#[test]
fn server_error_retries_then_succeeds() {
    let (server, _) = serve(vec![
        ("500 Internal Server Error", "text/plain", b"boom".to_vec()),
        ("503 Service Unavailable", "text/plain", b"boom".to_vec()),
        ("200 OK", "application/json", br#"{"elevation": -4.0}"#.to_vec()),
    ]);
    let transport = CallCounter::new();
    let svc = services_with_elevation(
        HttpElevationProvider(backend(&server.addr, None, transport.clone())),
        None,
    );
    let point = GeoPoint::new(0.0, 0.0).unwrap();
    assert_eq!(svc.elevation_at(point).unwrap(), -4.0);
    assert_eq!(transport.get(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let (server, _) = serve(vec![("404 Not Found", "text/plain", b"nope".to_vec())]);
    let transport = CallCounter::new();
    let svc = services_with_elevation(
        HttpElevationProvider(backend(&server.addr, None, transport.clone())),
        None,
    );
    let err = svc.elevation_at(GeoPoint::new(0.0, 0.0).unwrap()).unwrap_err();
    assert!(!err.is_retryable());
    assert_eq!(transport.get(), 1);
}

#[test]
fn cache_prevents_refetch_across_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = serve(vec![("200 OK", "application/json", br#"{"elevation": 9.0}"#.to_vec())]);
    let transport = CallCounter::new();
    let svc = services_with_elevation(
        HttpElevationProvider(backend(&server.addr, None, transport.clone())),
        Some(ProviderCache::open(dir.path()).unwrap()),
    );
    let point = GeoPoint::new(3.0, 4.0).unwrap();
    assert_eq!(svc.elevation_at(point).unwrap(), 9.0);
    assert_eq!(svc.elevation_at(point).unwrap(), 9.0);
    assert_eq!(transport.get(), 1, "second call must come from the cache");
}

#[test]
fn tile_and_places_contracts() {
    let png = encode_png(4, 4, &[200u8; 4 * 4 * 3]).unwrap();
    let (tile_server, _) = serve(vec![("200 OK", "image/png", png)]);
    let (places_server, seen) =
        serve(vec![("200 OK", "application/json", br#"{"distance_m": 120.5}"#.to_vec())]);
    let transport = CallCounter::new();
    let svc = GeoServices {
        elevation: Box::new(killfie_core::geo::providers::GridElevation::flat(
            0.0,
            CallCounter::new(),
        )),
        tiles: Box::new(HttpTileProvider(backend(&tile_server.addr, None, transport.clone()))),
        places: Box::new(HttpPlacesProvider(backend(&places_server.addr, None, transport.clone()))),
        cache: None,
        retries: 0,
        retry_backoff: Duration::ZERO,
        search_radius_m: 10_000.0,
    };
    let point = GeoPoint::new(1.0, 2.0).unwrap();
    let tile = svc.map_tile(point, 13, 4, 4).unwrap();
    assert_eq!(tile.rgb_at(0, 0), [200, 200, 200]);

    let d = svc.nearest_place_m(point, PlaceCategory::Railway).unwrap();
    assert_eq!(d, 120.5);
    let request = seen.lock().unwrap().join("\n");
    assert!(request.contains("category=railway"), "{request}");
    assert!(request.contains("radius_m=10000"), "{request}");
}

#[test]
fn places_null_distance_maps_to_search_radius() {
    let (server, _) = serve(vec![("200 OK", "application/json", br#"{"distance_m": null}"#.to_vec())]);
    let svc = GeoServices {
        elevation: Box::new(killfie_core::geo::providers::GridElevation::flat(
            0.0,
            CallCounter::new(),
        )),
        tiles: Box::new(DummyTiles),
        places: Box::new(HttpPlacesProvider(backend(&server.addr, None, CallCounter::new()))),
        cache: None,
        retries: 0,
        retry_backoff: Duration::ZERO,
        search_radius_m: 10_000.0,
    };
    let d = svc
        .nearest_place_m(GeoPoint::new(0.0, 0.0).unwrap(), PlaceCategory::MajorRoad)
        .unwrap();
    assert_eq!(d, 10_000.0);
}
