//! Self-contained offline demo workspace: a synthetic terrain (plateau with
//! a cliff line, three lakes, a road and a rail line), a planted-signal
//! tweet corpus, annotations, and a ready-to-run config. Dangerous tweets
//! sit on the cliff edge, in lakes, or on the road, with captions drawn from
//! matching pools; benign tweets sit on flat, dry, remote ground.

use std::path::{Path, PathBuf};

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::annotations::{AnnotationRecord, Label, RiskReason};
use crate::corpus::{Corpus, TweetRecord};
use crate::error::{Error, Result};
use crate::geo::providers::{ElevationGrid, Lake, WorldModel};
use crate::geo::GeoPoint;
use crate::pipeline::config::{
    FeaturesConfig, LearnConfig, OfflineProviders, PathsConfig, PipelineConfig, ProviderMode,
    ProvidersConfig, SelfieFilterConfig, VocabConfig,
};
use crate::seed::mix;

/// Longitude of the cliff line: 500 m plateau to the west, 0 m to the east.
pub const CLIFF_LON: f64 = 77.0;
pub const PLATEAU_ELEVATION_M: f64 = 500.0;

pub const WATER_RGB: [u8; 3] = [170, 218, 255];
pub const LAND_RGB: [u8; 3] = [232, 229, 217];

pub fn demo_lakes() -> Vec<Lake> {
    vec![
        Lake {
            lat: 15.05,
            lon: 77.20,
            radius_m: 1_500.0,
        },
        Lake {
            lat: 14.90,
            lon: 77.25,
            radius_m: 1_200.0,
        },
        Lake {
            lat: 15.15,
            lon: 77.32,
            radius_m: 1_000.0,
        },
    ]
}

pub fn demo_world() -> WorldModel {
    WorldModel {
        lakes: demo_lakes(),
        water_rgb: WATER_RGB,
        land_rgb: LAND_RGB,
    }
}

/// Regular grid over [14.5, 15.5] x [76.5, 77.5]: plateau west of the cliff
/// longitude, lowland east.
pub fn demo_elevation_grid() -> ElevationGrid {
    let rows = 201;
    let cols = 201;
    let mut values = Vec::with_capacity(rows * cols);
    for _r in 0..rows {
        for c in 0..cols {
            let lon = 76.5 + 0.005 * c as f64;
            values.push(if lon < CLIFF_LON {
                PLATEAU_ELEVATION_M
            } else {
                0.0
            });
        }
    }
    ElevationGrid {
        lat0: 14.5,
        lon0: 76.5,
        dlat: 0.005,
        dlon: 0.005,
        rows,
        cols,
        values,
    }
}

/// Road and rail polylines sampled as point features.
pub fn demo_places_csv() -> String {
    let mut csv = String::from("lat,lon,category\n");
    for i in 0..=100 {
        let lon = 77.30 + 0.002 * i as f64;
        csv.push_str(&format!("14.8500,{lon:.4},major_road\n"));
        csv.push_str(&format!("15.2500,{lon:.4},railway\n"));
    }
    csv
}

const WATER_CAPTIONS: &[&str] = &[
    "a man swimming in the deep lake",
    "waves splashing near the rocks",
    "a small boat on dark open water",
    "people wading in the river current",
    "the shoreline drops into deep water",
];

const HEIGHT_CAPTIONS: &[&str] = &[
    "a man standing on the edge of a cliff",
    "a steep drop below the narrow ledge",
    "a person leaning over a tall rooftop",
    "the rocky peak rises above the valley",
    "feet dangling over the high overlook",
];

const VEHICLE_CAPTIONS: &[&str] = &[
    "a driver holding the wheel of a moving car",
    "the view through a windshield on the highway",
    "a person on a motorbike weaving through traffic",
    "cars speeding past the narrow lane",
    "hands off the handlebars on a busy road",
];

const BENIGN_CAPTIONS: &[&str] = &[
    "a plate of pasta on a wooden table",
    "a cat sleeping on the striped sofa",
    "friends smiling in a cozy living room",
    "a cup of coffee beside a laptop",
    "a bookshelf full of old paperbacks",
    "a garden bench under a shady tree",
    "a birthday cake with lit candles",
];

const DANGER_TEXTS: &[&str] = &[
    "living on the edge today #selfie #extremeselfie",
    "no fear no limits #dangerousselfie",
    "this view was worth the climb #selfie \u{1F632}",
    "almost slipped taking this one #selfieoftheday",
];

const BENIGN_TEXTS: &[&str] = &[
    "lazy sunday afternoon #selfie",
    "coffee time with friends #selfieoftheday",
    "new haircut who dis #selfie \u{1F600}",
    "study break snap #letmetakeaselfie",
];

#[derive(Debug, Clone, Copy)]
pub struct DemoSpec {
    pub n_water: usize,
    pub n_height: usize,
    pub n_vehicle: usize,
    pub n_benign: usize,
}

impl Default for DemoSpec {
    fn default() -> Self {
        // 200 dangerous + 800 benign = 1,000 tweets.
        DemoSpec {
            n_water: 80,
            n_height: 80,
            n_vehicle: 40,
            n_benign: 800,
        }
    }
}

pub struct DemoData {
    pub tweets: Vec<TweetRecord>,
    pub annotations: Vec<AnnotationRecord>,
}

fn pick_captions(rng: &mut ChaCha8Rng, pool: &[&str]) -> Vec<String> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(rng);
    idx.into_iter()
        .take(2)
        .map(|i| pool[i].to_string())
        .collect()
}

fn degrees_east(lat: f64, meters: f64) -> f64 {
    meters / (crate::geo::METERS_PER_DEGREE * lat.to_radians().cos())
}

/// Build the planted corpus. Deterministic per seed.
pub fn demo_data(spec: &DemoSpec, seed: u64) -> Result<DemoData> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xDE30));
    let lakes = demo_lakes();
    let base_time = Utc
        .with_ymd_and_hms(2016, 8, 1, 0, 0, 0)
        .single()
        .expect("valid time");

    struct Plant {
        geo: GeoPoint,
        captions: Vec<String>,
        text: String,
        reasons: Vec<RiskReason>,
    }

    let mut plants: Vec<Plant> = Vec::new();

    for i in 0..spec.n_water {
        let lake = &lakes[i % lakes.len()];
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = lake.radius_m * rng.gen_range(0.0..0.8);
        let lat = lake.lat + dist * angle.cos() / crate::geo::METERS_PER_DEGREE;
        let lon = lake.lon + degrees_east(lake.lat, dist * angle.sin());
        plants.push(Plant {
            geo: GeoPoint::new(lat, lon)?,
            captions: pick_captions(&mut rng, WATER_CAPTIONS),
            text: DANGER_TEXTS[rng.gen_range(0..DANGER_TEXTS.len())].to_string(),
            reasons: vec![RiskReason::Water],
        });
    }

    for _ in 0..spec.n_height {
        let lat = rng.gen_range(14.60..15.40);
        let lon = CLIFF_LON + rng.gen_range(-0.0008..0.0008);
        plants.push(Plant {
            geo: GeoPoint::new(lat, lon)?,
            captions: pick_captions(&mut rng, HEIGHT_CAPTIONS),
            text: DANGER_TEXTS[rng.gen_range(0..DANGER_TEXTS.len())].to_string(),
            reasons: vec![RiskReason::Height],
        });
    }

    for i in 0..spec.n_vehicle {
        let lat = 14.85 + rng.gen_range(-0.0003..0.0003);
        let lon = rng.gen_range(77.30..77.50);
        plants.push(Plant {
            geo: GeoPoint::new(lat, lon)?,
            captions: pick_captions(&mut rng, VEHICLE_CAPTIONS),
            text: DANGER_TEXTS[rng.gen_range(0..DANGER_TEXTS.len())].to_string(),
            reasons: vec![if i % 2 == 0 {
                RiskReason::Vehicle
            } else {
                RiskReason::Road
            }],
        });
    }

    for i in 0..spec.n_benign {
        // Half on the western plateau, half on the dry eastern lowland;
        // both flat and far from water, road, and rail.
        let (lat, lon) = if i % 2 == 0 {
            (rng.gen_range(14.95..15.05), rng.gen_range(76.60..76.80))
        } else {
            (rng.gen_range(14.95..15.05), rng.gen_range(77.40..77.48))
        };
        plants.push(Plant {
            geo: GeoPoint::new(lat, lon)?,
            captions: pick_captions(&mut rng, BENIGN_CAPTIONS),
            text: BENIGN_TEXTS[rng.gen_range(0..BENIGN_TEXTS.len())].to_string(),
            reasons: vec![],
        });
    }

    let mut tweets = Vec::with_capacity(plants.len());
    let mut annotations = Vec::with_capacity(plants.len());
    for (i, plant) in plants.into_iter().enumerate() {
        let id = format!("t{:04}", i + 1);
        tweets.push(TweetRecord {
            id: id.clone(),
            text: plant.text,
            hashtags: vec!["selfie".into()],
            geo: Some(plant.geo),
            image_ref: Some(format!("img/{id}.jpg")),
            captions: Some(plant.captions),
            posted_at: base_time + Duration::minutes(i as i64),
            user_id: format!("u{:03}", i % 397),
        });
        annotations.push(AnnotationRecord {
            tweet_id: id,
            label: if plant.reasons.is_empty() {
                Label::NotDangerous
            } else {
                Label::Dangerous
            },
            risk_reasons: plant.reasons.into_iter().collect(),
            annotator_id: "a1".into(),
        });
    }

    Ok(DemoData {
        tweets,
        annotations,
    })
}

/// Write a complete demo workspace under `dir` and return the config path.
pub fn generate_demo(dir: &Path, seed: u64, spec: &DemoSpec) -> Result<PathBuf> {
    let fixtures = dir.join("fixtures");
    std::fs::create_dir_all(&fixtures).map_err(|e| Error::io(fixtures.display().to_string(), e))?;

    let grid = demo_elevation_grid();
    std::fs::write(
        fixtures.join("elevation.json"),
        serde_json::to_vec_pretty(&grid)?,
    )
    .map_err(|e| Error::io("elevation.json", e))?;
    std::fs::write(
        fixtures.join("world.json"),
        serde_json::to_vec_pretty(&demo_world())?,
    )
    .map_err(|e| Error::io("world.json", e))?;
    std::fs::write(fixtures.join("places.csv"), demo_places_csv())
        .map_err(|e| Error::io("places.csv", e))?;

    let data = demo_data(spec, seed)?;
    let corpus = Corpus::from_records(data.tweets)?;
    corpus.save_jsonl(&dir.join("tweets.jsonl"))?;
    crate::corpus::annotations::save_annotations(&data.annotations, &dir.join("annotations.csv"))?;

    let config = PipelineConfig {
        seed,
        paths: PathsConfig {
            tweets: "tweets.jsonl".into(),
            tweets_format: crate::corpus::CorpusFormat::Jsonl,
            annotations: "annotations.csv".into(),
            incidents: None,
            cache_dir: "cache".into(),
            out_dir: "out".into(),
        },
        providers: ProvidersConfig {
            mode: ProviderMode::Offline,
            offline: Some(OfflineProviders {
                elevation_grid: "fixtures/elevation.json".into(),
                tile_world: Some("fixtures/world.json".into()),
                tile_dir: None,
                places_csv: "fixtures/places.csv".into(),
            }),
            http: None,
            rate_limit_per_s: 10.0,
            retries: 3,
            search_radius_m: 10_000.0,
        },
        features: FeaturesConfig {
            selfie_threshold: 0.5,
            selfie_filter: SelfieFilterConfig {
                kind: "constant".into(),
                score: 1.0,
            },
            geo: Default::default(),
            vocab: VocabConfig::default(),
            embed_dim: 100,
        },
        learn: LearnConfig {
            k: 10,
            inner_k: 3,
            families: vec![
                "linear_svm".into(),
                "random_forest".into(),
                "knn".into(),
                "decision_tree".into(),
            ],
            grid: "single".into(),
        },
    };
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, config.canonical_json()?)
        .map_err(|e| Error::io(config_path.display().to_string(), e))?;
    Ok(config_path)
}
