//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line with its runtime (visible with `--nocapture`).
//!
//! Run with: cargo test --package killfie-core --test acceptance -- --nocapture

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use killfie_core::corpus::incidents::{shipped_fixture, BreakdownDimension, IncidentReason};
use killfie_core::geo::providers::{
    decode_tile_png, CallCounter, FnElevation, SyntheticTileProvider, TileProvider,
};
use killfie_core::geo::GeoPoint;
use killfie_core::geofeat::water::{no_water_sentinel, segment_water, water_features, WaterMask};
use killfie_core::geofeat::{
    elevation_features, sample_disk, ElevationConfig, FAR_RING_LABEL, NEAR_RING_LABEL,
};
use killfie_core::learn::{
    cross_validate, metrics, stratified_kfold, train, CvConfig, FamilySpec, FeatureMatrix,
    ForestParams, KnnParams, LeakageAudit, ModelSpec, SvmParams, TreeParams,
};
use killfie_core::pipeline::demo::{
    demo_elevation_grid, demo_lakes, demo_world, generate_demo, DemoSpec, CLIFF_LON,
};
use killfie_core::pipeline::{run_pipeline, RunManifest};
use killfie_core::seed::mix;
use killfie_core::stats::{fleiss_kappa, ks_two_sample, Kappa, RatingsMatrix};
use killfie_core::textfeat::{fit_vocab, tfidf, tokenize, DocumentEmbedder, HashingEmbedder};

struct Criterion {
    n: usize,
    what: &'static str,
    budget: Duration,
    start: Instant,
}

impl Criterion {
    fn begin(n: usize, what: &'static str, budget_s: u64) -> Self {
        Criterion {
            n,
            what,
            budget: Duration::from_secs(budget_s),
            start: Instant::now(),
        }
    }

    fn pass(self) {
        let elapsed = self.start.elapsed();
        println!(
            "[PASS] criterion {:2}: {} ({:.2}s / budget {}s)",
            self.n,
            self.what,
            elapsed.as_secs_f64(),
            self.budget.as_secs()
        );
        assert!(
            elapsed <= self.budget,
            "criterion {} exceeded its {}s budget: {:.2}s",
            self.n,
            self.budget.as_secs(),
            elapsed.as_secs_f64()
        );
    }
}

// ---------------------------------------------------------------------------
// 1. Incident characterization exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_incident_characterization_exact() {
    let c = Criterion::begin(1, "incident characterization tables exact", 1);
    let set = shipped_fixture();
    assert_eq!(set.total_deaths(), 127);

    let by_country = set.breakdown(BreakdownDimension::Country);
    let expected: &[(&str, u32)] = &[
        ("India", 76),
        ("Pakistan", 9),
        ("USA", 8),
        ("Russia", 6),
        ("China", 4),
        ("Philippines", 4),
        ("Spain", 3),
        ("Indonesia", 2),
        ("Peru", 2),
        ("Portugal", 2),
        ("Turkey", 2),
        ("Australia", 1),
        ("Chile", 1),
        ("Hong Kong", 1),
        ("Italy", 1),
        ("Mexico", 1),
        ("Nepal", 1),
        ("Romania", 1),
        ("Serbia", 1),
        ("South Africa", 1),
    ];
    let got: Vec<(&str, u32)> = by_country.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    assert_eq!(got, expected, "country table");

    let group = set.breakdown(BreakdownDimension::GroupSize);
    assert_eq!(
        group,
        vec![
            ("2".to_string(), 16),
            ("3".to_string(), 5),
            ("5".to_string(), 1),
            ("7".to_string(), 2)
        ]
    );

    let by_reason = set.breakdown(BreakdownDimension::Reason);
    let reason = |name: &str| by_reason.iter().find(|(k, _)| k == name).unwrap().1;
    assert_eq!(reason("height"), 29);
    assert_eq!(reason("train"), 11);
    assert_eq!(reason("height_and_water"), 27);
    let hw_incidents = set
        .records()
        .iter()
        .filter(|r| r.reason == IncidentReason::HeightAndWater)
        .count();
    assert_eq!(hw_incidents, 14);
    c.pass();
}

// ---------------------------------------------------------------------------
// 2. KS correctness against brute-force and permutation oracles
// ---------------------------------------------------------------------------

/// Independent oracle: evaluate both ECDFs at every pooled point.
fn brute_force_d(a: &[f64], b: &[f64]) -> f64 {
    let le = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b.iter())
        .map(|&x| (le(a, x) - le(b, x)).abs())
        .fold(0.0, f64::max)
}

/// Independent oracle: p as the fraction of label shuffles whose statistic
/// reaches the observed one.
fn permutation_p(a: &[f64], b: &[f64], d_obs: f64, shuffles: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut ge = 0usize;
    for _ in 0..shuffles {
        pooled.shuffle(&mut rng);
        if brute_force_d(&pooled[..a.len()], &pooled[a.len()..]) >= d_obs - 1e-12 {
            ge += 1;
        }
    }
    ge as f64 / shuffles as f64
}

#[test]
fn criterion_02_ks_matches_oracles() {
    let c = Criterion::begin(2, "KS d exact vs brute force, p vs permutation oracle", 60);
    let mut rng = ChaCha8Rng::seed_from_u64(20_202);
    let mut pairs = Vec::new();
    for _ in 0..200 {
        let n = rng.gen_range(1..=12);
        let m = rng.gen_range(1..=12);
        let shift: f64 = rng.gen_range(-1.0..1.0);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0) + shift).collect();
        let oracle_seed: u64 = rng.gen();
        pairs.push((a, b, oracle_seed));
    }

    let checked: Vec<(bool, f64, f64)> = pairs
        .par_iter()
        .map(|(a, b, oracle_seed)| {
            let ks = ks_two_sample(a, b).expect("non-empty samples");
            assert_eq!(
                ks.d,
                brute_force_d(a, b),
                "d must match brute force exactly"
            );
            let perm = permutation_p(a, b, ks.d, 100_000, *oracle_seed);
            let in_band = (0.01..=0.99).contains(&perm);
            (in_band, ks.p, perm)
        })
        .collect();

    let mut compared = 0;
    for (in_band, p, perm) in checked {
        if in_band {
            compared += 1;
            assert!(
                (p - perm).abs() <= 0.02,
                "p {p:.4} vs permutation {perm:.4} differ by more than 0.02"
            );
        }
    }
    assert!(
        compared >= 50,
        "only {compared} pairs landed in the comparable band"
    );
    c.pass();
}

// ---------------------------------------------------------------------------
// 3. Water geometry against a per-pixel oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_water_geometry_exact() {
    let c = Criterion::begin(
        3,
        "water distance and fraction exact vs per-pixel oracle",
        10,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(333);
    for case in 0..20 {
        // Densities from near-empty to crowded.
        let density = [0.0005, 0.01, 0.1, 0.5][case % 4];
        let data: Vec<bool> = (0..100 * 100).map(|_| rng.gen_bool(density)).collect();
        let mask = WaterMask {
            width: 100,
            height: 100,
            data,
        };
        let f = water_features(&mask, (50, 50));

        let mut min_d = f64::INFINITY;
        let mut count = 0u64;
        for y in 0..100i64 {
            for x in 0..100i64 {
                if mask.get(x as u32, y as u32) {
                    count += 1;
                    let d = (((x - 50) * (x - 50) + (y - 50) * (y - 50)) as f64).sqrt();
                    if d < min_d {
                        min_d = d;
                    }
                }
            }
        }
        if count == 0 {
            assert_eq!(f.min_water_dist_px, no_water_sentinel(100, 100));
        } else {
            assert_eq!(f.min_water_dist_px, min_d, "exact distance, case {case}");
        }
        assert_eq!(f.water_fraction, count as f64 / 10_000.0);
    }

    // Sentinel and all-water cases, default tile size.
    let none = WaterMask {
        width: 500,
        height: 500,
        data: vec![false; 250_000],
    };
    let f = water_features(&none, (250, 250));
    assert_eq!(f.min_water_dist_px, 708.0);
    assert_eq!(f.water_fraction, 0.0);
    let all = WaterMask {
        width: 500,
        height: 500,
        data: vec![true; 250_000],
    };
    let f = water_features(&all, (250, 250));
    assert_eq!(f.min_water_dist_px, 0.0);
    assert_eq!(f.water_fraction, 1.0);
    c.pass();
}

// ---------------------------------------------------------------------------
// 4. Elevation features against a sample-replaying oracle
// ---------------------------------------------------------------------------

fn cliff(q: GeoPoint) -> f64 {
    if q.lon() < 77.0 {
        500.0
    } else {
        0.0
    }
}

#[test]
fn criterion_04_elevation_features_exact() {
    let c = Criterion::begin(4, "elevation features match seeded-sample oracle", 5);
    let cfg = ElevationConfig::default();
    let point = GeoPoint::new(15.0, 77.0).unwrap();

    for seed in [1u64, 77, 424_242] {
        let provider = FnElevation::new(cliff, CallCounter::new());
        let f = elevation_features(point, &provider, &cfg, seed).unwrap();

        let far = sample_disk(point, cfg.r_far_m, cfg.n_far, mix(seed, FAR_RING_LABEL)).unwrap();
        let near =
            sample_disk(point, cfg.r_near_m, cfg.n_near, mix(seed, NEAR_RING_LABEL)).unwrap();
        let here = cliff(point);
        let max_nearby = far
            .iter()
            .map(|q| cliff(*q))
            .fold(f64::NEG_INFINITY, f64::max);
        let max_drop = near
            .iter()
            .map(|q| here - cliff(*q))
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = near
            .iter()
            .map(|q| cliff(*q))
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = near.iter().map(|q| cliff(*q)).fold(f64::INFINITY, f64::min);

        assert!((f.elev_here - here).abs() < 1e-9);
        assert!((f.max_elev_nearby - max_nearby).abs() < 1e-9);
        assert!((f.max_drop_from_here - max_drop).abs() < 1e-9);
        assert!((f.max_pairwise_range - (hi - lo)).abs() < 1e-9);

        // Translation covariance: +k shifts the levels, differences stay.
        for k in [-50.0, 0.0, 1000.0] {
            let shifted = FnElevation::new(move |q| cliff(q) + k, CallCounter::new());
            let g = elevation_features(point, &shifted, &cfg, seed).unwrap();
            assert!((g.elev_here - (f.elev_here + k)).abs() < 1e-9);
            assert!((g.max_elev_nearby - (f.max_elev_nearby + k)).abs() < 1e-9);
            assert!((g.max_drop_from_here - f.max_drop_from_here).abs() < 1e-9);
            assert!((g.max_pairwise_range - f.max_pairwise_range).abs() < 1e-9);
        }
    }
    c.pass();
}

// ---------------------------------------------------------------------------
// 5. KS separation on synthetic populations (desk-scale analogue)
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_ks_population_separation() {
    let c = Criterion::begin(
        5,
        "cliff/plain and lake/inland populations separate at p < 0.01",
        30,
    );
    let grid = demo_elevation_grid();
    let cfg = ElevationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    // Elevation: 100 cliff-edge points vs 100 plain points.
    let mut cliff_ranges = Vec::new();
    let mut plain_ranges = Vec::new();
    for i in 0..100 {
        let lat = 14.7 + 0.006 * i as f64;
        let edge = GeoPoint::new(lat, CLIFF_LON + rng.gen_range(-0.0005..0.0005)).unwrap();
        let plain = GeoPoint::new(lat, rng.gen_range(76.6..76.8)).unwrap();
        let g1 = grid.clone();
        let pe = elevation_features(
            edge,
            &FnElevation::new(move |q| g1.sample(q), CallCounter::new()),
            &cfg,
            mix(55, i),
        )
        .unwrap();
        let g2 = grid.clone();
        let pp = elevation_features(
            plain,
            &FnElevation::new(move |q| g2.sample(q), CallCounter::new()),
            &cfg,
            mix(56, i),
        )
        .unwrap();
        cliff_ranges.push(pe.max_pairwise_range);
        plain_ranges.push(pp.max_pairwise_range);
    }
    let ks = ks_two_sample(&cliff_ranges, &plain_ranges).unwrap();
    assert!(ks.p < 0.01, "max_pairwise_range separation p = {}", ks.p);

    // Water: 100 lake points vs 100 inland points.
    let world = demo_world();
    let lakes = demo_lakes();
    let tiles = SyntheticTileProvider::new(world, CallCounter::new());
    let palette = [[170u8, 218, 255]];
    let mut lake_dist = Vec::new();
    let mut lake_frac = Vec::new();
    let mut inland_dist = Vec::new();
    let mut inland_frac = Vec::new();
    for i in 0..100 {
        let lake = &lakes[i % lakes.len()];
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let d = lake.radius_m * rng.gen_range(0.0..0.9);
        let lat = lake.lat + d * angle.cos() / killfie_core::geo::METERS_PER_DEGREE;
        let lon = lake.lon
            + d * angle.sin()
                / (killfie_core::geo::METERS_PER_DEGREE * lake.lat.to_radians().cos());
        let on_lake = GeoPoint::new(lat, lon).unwrap();
        let inland =
            GeoPoint::new(rng.gen_range(14.95..15.05), rng.gen_range(76.60..76.80)).unwrap();
        for (point, dist_out, frac_out) in [
            (on_lake, &mut lake_dist, &mut lake_frac),
            (inland, &mut inland_dist, &mut inland_frac),
        ] {
            let png = tiles.fetch_tile_png(point, 13, 500, 500).unwrap();
            let tile = decode_tile_png(&png, point, 13, 500, 500).unwrap();
            let mask = segment_water(&tile, &palette, 12).unwrap();
            let wf = water_features(&mask, (250, 250));
            dist_out.push(wf.min_water_dist_px);
            frac_out.push(wf.water_fraction);
        }
    }
    let ks_dist = ks_two_sample(&lake_dist, &inland_dist).unwrap();
    let ks_frac = ks_two_sample(&lake_frac, &inland_frac).unwrap();
    assert!(
        ks_dist.p < 0.01,
        "min_water_dist_px separation p = {}",
        ks_dist.p
    );
    assert!(
        ks_frac.p < 0.01,
        "water_fraction separation p = {}",
        ks_frac.p
    );
    c.pass();
}

// ---------------------------------------------------------------------------
// 6. Text stack exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_text_stack() {
    let c = Criterion::begin(
        6,
        "tokenizer rules, TF-IDF hand values, embedding invariants",
        10,
    );

    // Tokenizer rule fixtures.
    assert_eq!(tokenize(""), Vec::<String>::new());
    assert_eq!(
        tokenize("#Selfie at http://x.co cliff!"),
        vec!["selfie", "at", "cliff"]
    );
    assert_eq!(tokenize("\u{1F600}"), vec!["emoji:1f600"]);
    assert_eq!(tokenize("see www.x.co @Bob"), vec!["see", "@bob"]);

    // TF-IDF hand computation.
    let docs = vec![
        vec!["a".to_string(), "b".to_string()],
        vec!["a".to_string()],
    ];
    let vocab = fit_vocab(&docs, 1, 100).unwrap();
    let idf_rare = (3.0f64 / 2.0).ln() + 1.0;
    assert!((vocab.idf(vocab.index_of("a").unwrap()) - 1.0).abs() < 1e-15);
    assert!((vocab.idf(vocab.index_of("b").unwrap()) - idf_rare).abs() < 1e-15);
    assert!((vocab.idf(vocab.index_of("a_b").unwrap()) - idf_rare).abs() < 1e-15);

    let v = tfidf(&["a".to_string(), "a".to_string(), "b".to_string()], &vocab);
    let raw = [2.0 * 1.0, 1.0 * idf_rare, 1.0 * idf_rare]; // a, a_b, b
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dense = v.to_dense(3);
    assert!((dense[vocab.index_of("a").unwrap()] - raw[0] / norm).abs() < 1e-15);
    assert!((dense[vocab.index_of("a_b").unwrap()] - raw[1] / norm).abs() < 1e-15);
    assert!((dense[vocab.index_of("b").unwrap()] - raw[2] / norm).abs() < 1e-15);
    assert!((v.norm() - 1.0).abs() < 1e-12);
    assert_eq!(tfidf(&[], &vocab).norm(), 0.0);

    // Embedding determinism and norms over 1,000 random docs.
    let embedder = HashingEmbedder::new(100, 66).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(666);
    let alphabet = [
        "cliff", "water", "dog", "car", "table", "sky", "run", "deep",
    ];
    for _ in 0..1_000 {
        let len = rng.gen_range(0..12);
        let doc: Vec<String> = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())].to_string())
            .collect();
        let e1 = embedder.embed(&doc);
        let e2 = embedder.embed(&doc);
        assert_eq!(e1, e2, "embedding must be deterministic");
        let norm: f64 = e1.iter().map(|x| x * x).sum::<f64>().sqrt();
        if doc.is_empty() {
            assert_eq!(norm, 0.0);
        } else {
            assert!((norm - 1.0).abs() < 1e-9, "norm {norm}");
        }
    }
    c.pass();
}

// ---------------------------------------------------------------------------
// 7. Learner sanity
// ---------------------------------------------------------------------------

fn noisy_xor(n: usize, seed: u64) -> (FeatureMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMatrix::new(vec!["x".into(), "y".into()]).unwrap();
    let mut labels = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.gen_range(0.0..1.0);
        let b: f64 = rng.gen_range(0.0..1.0);
        let label = (a > 0.5) ^ (b > 0.5);
        let noisy = if rng.gen_range(0.0..1.0) < 0.1 {
            !label
        } else {
            label
        };
        m.push_complete_row(&[a, b]).unwrap();
        labels.push(noisy);
    }
    (m, labels)
}

#[test]
fn criterion_07_learner_sanity() {
    let c = Criterion::begin(
        7,
        "learner sanity: separable, forest vs tree, SVM, null labels",
        120,
    );

    // Decision tree reaches 100% on threshold-separable data.
    let mut x = FeatureMatrix::new(vec!["v".into()]).unwrap();
    let mut y = Vec::new();
    for i in 0..40 {
        x.push_complete_row(&[if i % 2 == 0 {
            i as f64 + 1.0
        } else {
            -(i as f64) - 1.0
        }])
        .unwrap();
        y.push(i % 2 == 0);
    }
    let tree_spec = ModelSpec::new(FamilySpec::DecisionTree(TreeParams::default()), 1).unwrap();
    let model = train(&tree_spec, &x, &y).unwrap();
    assert!(model.predict(&x).iter().zip(&y).all(|(p, t)| p == t));

    // KNN k=1 memorizes its training set.
    let knn_spec = ModelSpec::new(FamilySpec::Knn(KnnParams { k: 1 }), 1).unwrap();
    let (xor_x, xor_y) = noisy_xor(120, 9);
    let knn = train(&knn_spec, &xor_x, &xor_y).unwrap();
    assert!(knn.predict(&xor_x).iter().zip(&xor_y).all(|(p, t)| p == t));

    // Random forest CV accuracy >= single tree CV accuracy on noisy XOR.
    let cfg = CvConfig {
        k: 5,
        inner_k: 3,
        seed: 7,
    };
    let forest_spec = ModelSpec::new(
        FamilySpec::RandomForest(ForestParams {
            n_trees: 100,
            ..Default::default()
        }),
        7,
    )
    .unwrap();
    let tree_cv = cross_validate(&[tree_spec.clone()], &xor_x, &xor_y, &cfg, None).unwrap();
    let forest_cv = cross_validate(&[forest_spec], &xor_x, &xor_y, &cfg, None).unwrap();
    assert!(
        forest_cv.accuracy.mean >= tree_cv.accuracy.mean,
        "forest {:.4} vs tree {:.4}",
        forest_cv.accuracy.mean,
        tree_cv.accuracy.mean
    );

    // Linear SVM reaches 100% training accuracy on a margin-2 fixture.
    let mut sx = FeatureMatrix::new(vec!["a".into(), "b".into()]).unwrap();
    let mut sy = Vec::new();
    for i in 0..30 {
        let jitter = i as f64 / 30.0;
        sx.push_complete_row(&[2.0 + jitter, jitter]).unwrap();
        sy.push(true);
        sx.push_complete_row(&[-2.0 - jitter, -jitter]).unwrap();
        sy.push(false);
    }
    let svm_spec = ModelSpec::new(
        FamilySpec::LinearSvm(SvmParams {
            lambda: 1e-3,
            epochs: 50,
        }),
        3,
    )
    .unwrap();
    let svm = train(&svm_spec, &sx, &sy).unwrap();
    assert!(svm.predict(&sx).iter().zip(&sy).all(|(p, t)| p == t));

    // Shuffled labels land near chance.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut nx = FeatureMatrix::new(vec!["a".into(), "b".into()]).unwrap();
    let mut ny = Vec::new();
    for i in 0..300 {
        nx.push_complete_row(&[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .unwrap();
        ny.push(i % 2 == 0);
    }
    ny.shuffle(&mut rng);
    let null_cv = cross_validate(
        &[tree_spec],
        &nx,
        &ny,
        &CvConfig {
            k: 10,
            inner_k: 3,
            seed: 5,
        },
        None,
    )
    .unwrap();
    assert!(
        (0.4..=0.6).contains(&null_cv.accuracy.mean),
        "null accuracy {:.4}",
        null_cv.accuracy.mean
    );
    c.pass();
}

// ---------------------------------------------------------------------------
// 8. End-to-end planted-signal run
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_planted_signal_pipeline() {
    let c = Criterion::begin(8, "planted-signal corpus meets classification bounds", 300);
    let dir = tempfile::tempdir().unwrap();
    let config_path = generate_demo(dir.path(), 42, &DemoSpec::default()).unwrap();
    let manifest = run_pipeline(&config_path).unwrap();
    assert_eq!(
        manifest.transport_calls, 0,
        "offline run must not touch the network"
    );

    let table4: Vec<serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/cv/table4.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(table4.len(), 7 * 4, "all table cells populated");

    let acc = |config: &str, family: &str| -> f64 {
        table4
            .iter()
            .find(|cell| cell["config"] == config && cell["family"] == family)
            .unwrap_or_else(|| panic!("missing cell {config}/{family}"))["accuracy_mean"]
            .as_f64()
            .unwrap()
    };
    let best = |config: &str| -> f64 {
        ["linear_svm", "random_forest", "knn", "decision_tree"]
            .iter()
            .map(|f| acc(config, f))
            .fold(0.0, f64::max)
    };

    let til_rf = acc("text+image+location", "random_forest");
    assert!(
        til_rf >= 0.90,
        "text+image+location random forest accuracy {til_rf:.4}"
    );
    assert!(
        best("location") >= 0.75,
        "location-only best accuracy {:.4}",
        best("location")
    );
    assert!(
        best("image") >= 0.80,
        "image-only best accuracy {:.4}",
        best("image")
    );
    c.pass();
}

// ---------------------------------------------------------------------------
// 9. Leakage audit
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_leakage_audit() {
    let c = Criterion::begin(9, "no test-fold rows touched by training-only stages", 60);
    use killfie_core::corpus::annotations::Label;
    use killfie_core::learn::{cross_validate_with, FeatureBlock, FeatureConfig};
    use killfie_core::pipeline::config::VocabConfig;
    use killfie_core::pipeline::demo::demo_data;
    use killfie_core::pipeline::featurize::{build_rows, TweetFeaturizer};

    // A small planted corpus so the run is quick but exercises everything.
    let spec = DemoSpec {
        n_water: 20,
        n_height: 20,
        n_vehicle: 10,
        n_benign: 150,
    };
    let data = demo_data(&spec, 11).unwrap();
    let services = killfie_core::geo::providers::GeoServices {
        elevation: Box::new(FnElevation::new(
            {
                let grid = demo_elevation_grid();
                move |q| grid.sample(q)
            },
            CallCounter::new(),
        )),
        tiles: Box::new(SyntheticTileProvider::new(demo_world(), CallCounter::new())),
        places: Box::new(killfie_core::geo::providers::CsvPlaces::new(
            vec![],
            CallCounter::new(),
        )),
        cache: None,
        retries: 0,
        retry_backoff: Duration::ZERO,
        search_radius_m: 10_000.0,
    };
    let mut geo_cfg = killfie_core::geofeat::GeoFeatConfig::default();
    geo_cfg.water.tile_width = 100;
    geo_cfg.water.tile_height = 100;
    let rows = build_rows(&data.tweets, &services, &geo_cfg, 16, 3).unwrap();
    let y: Vec<bool> = data
        .annotations
        .iter()
        .map(|a| a.label == Label::Dangerous)
        .collect();

    let featurizer = TweetFeaturizer {
        rows: &rows,
        blocks: FeatureConfig::new([
            FeatureBlock::Text,
            FeatureBlock::Image,
            FeatureBlock::Location,
        ])
        .unwrap(),
        risk: None,
        vocab_cfg: VocabConfig {
            min_df: 1,
            max_features: 2_000,
            tfidf_max_cols: 200,
        },
        embed_dim: 16,
    };
    // Two specs force a real grid search; the SVM triggers standardization.
    let grid = vec![
        ModelSpec::new(
            FamilySpec::LinearSvm(SvmParams {
                lambda: 1e-2,
                epochs: 10,
            }),
            2,
        )
        .unwrap(),
        ModelSpec::new(FamilySpec::Knn(KnnParams { k: 3 }), 2).unwrap(),
    ];
    let cfg = CvConfig {
        k: 5,
        inner_k: 3,
        seed: 21,
    };
    let audit = LeakageAudit::new();
    cross_validate_with(&grid, &featurizer, &y, &cfg, Some(&audit)).unwrap();

    let folds = stratified_kfold(&y, cfg.k, mix(cfg.seed, 0xF01D)).unwrap();
    let events = audit.events();
    assert!(!events.is_empty());
    let mut stages = BTreeSet::new();
    let mut violations = 0usize;
    for ev in &events {
        stages.insert(format!("{:?}", ev.stage));
        let test_fold: BTreeSet<usize> = folds[ev.fold].iter().copied().collect();
        violations += ev.rows.iter().filter(|r| test_fold.contains(r)).count();
    }
    assert_eq!(violations, 0, "test-fold rows touched by training stages");
    for required in ["Undersample", "VocabFit", "GridSearch", "Standardize"] {
        assert!(stages.contains(required), "stage {required} never audited");
    }
    c.pass();
}

// ---------------------------------------------------------------------------
// 10. Fleiss' kappa
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_fleiss_kappa() {
    let c = Criterion::begin(
        10,
        "kappa: perfect agreement, degenerate, formula oracle",
        1,
    );

    // Perfect agreement with at least two categories in use.
    let perfect = RatingsMatrix::new(vec![vec![4, 0], vec![0, 4], vec![4, 0], vec![0, 4]]).unwrap();
    assert_eq!(fleiss_kappa::<f64>(&perfect), Kappa::Value(1.0));

    // All raters one category on every item: undefined.
    let degenerate = RatingsMatrix::new(vec![vec![4, 0], vec![4, 0]]).unwrap();
    assert_eq!(fleiss_kappa::<f64>(&degenerate), Kappa::Undefined);

    // Ten random matrices against the direct formula.
    let mut rng = ChaCha8Rng::seed_from_u64(1_010);
    for case in 0..10 {
        let items = rng.gen_range(3..10);
        let cats = rng.gen_range(2..5);
        let raters = rng.gen_range(2..7u32);
        let counts: Vec<Vec<u32>> = (0..items)
            .map(|_| {
                let mut row = vec![0u32; cats];
                for _ in 0..raters {
                    row[rng.gen_range(0..cats)] += 1;
                }
                row
            })
            .collect();
        let matrix = RatingsMatrix::new(counts.clone()).unwrap();

        // Direct formula, written independently.
        let n = items as f64;
        let r = raters as f64;
        let p_bar: f64 = counts
            .iter()
            .map(|row| {
                let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
                (sq - r) / (r * (r - 1.0))
            })
            .sum::<f64>()
            / n;
        let pe: f64 = (0..cats)
            .map(|j| {
                let mass: f64 = counts.iter().map(|row| row[j] as f64).sum();
                let pj = mass / (n * r);
                pj * pj
            })
            .sum();

        match fleiss_kappa::<f64>(&matrix) {
            Kappa::Value(v) => {
                let expect = (p_bar - pe) / (1.0 - pe);
                assert!((v - expect).abs() < 1e-12, "case {case}: {v} vs {expect}");
            }
            Kappa::Undefined => assert!((1.0 - pe).abs() < 1e-12, "case {case}"),
        }
    }
    c.pass();
}

// ---------------------------------------------------------------------------
// 11. Determinism of the full offline pipeline
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_pipeline_determinism() {
    let c = Criterion::begin(
        11,
        "two offline runs produce bit-identical output digests",
        600,
    );
    let spec = DemoSpec {
        n_water: 30,
        n_height: 30,
        n_vehicle: 20,
        n_benign: 220,
    };

    let run = |seed: u64| -> RunManifest {
        let dir = tempfile::tempdir().unwrap();
        let config_path = generate_demo(dir.path(), seed, &spec).unwrap();
        run_pipeline(&config_path).unwrap()
    };
    let a = run(7);
    let b = run(7);

    assert_eq!(a.config_digest, b.config_digest, "identical configs");
    assert_eq!(a.transport_calls, 0);
    assert_eq!(b.transport_calls, 0);
    assert_eq!(a.stages.len(), b.stages.len());
    for (sa, sb) in a.stages.iter().zip(&b.stages) {
        assert_eq!(sa.name, sb.name);
        assert_eq!(
            sa.outputs, sb.outputs,
            "stage {} digests differ between runs",
            sa.name
        );
    }

    // Metrics evaluation on identical inputs is pure: confusion counts from
    // the two runs' reports agree (already implied by the digests).
    let total: usize = a.stages.iter().map(|s| s.outputs.len()).sum();
    assert!(total >= 20, "expected a full set of artifacts, saw {total}");
    c.pass();
}

// ---------------------------------------------------------------------------
// Metrics spot check shared by several criteria
// ---------------------------------------------------------------------------

#[test]
fn metrics_confusion_hand_values() {
    // TP=3, FP=1, FN=2, TN=4 -> precision .75, recall .6, f1 ~ .667.
    let y_true = [
        true, true, true, false, true, true, false, false, false, false,
    ];
    let y_pred = [
        true, true, true, true, false, false, false, false, false, false,
    ];
    let m = metrics(&y_true, &y_pred, true).unwrap();
    assert!((m.positive.precision - 0.75).abs() < 1e-12);
    assert!((m.positive.recall - 0.6).abs() < 1e-12);
    assert!((m.positive.f1 - 2.0 / 3.0).abs() < 1e-3);
}
