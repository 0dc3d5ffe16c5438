use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topsom::dataset::{synth_rings, synth_uniform};
use topsom::metrics::quantization_error;
use topsom::sampling::{select_adaptive, select_random, AdaptiveSamplerState};
use topsom::topology::{influence_matrix, RefreshPolicy, TopologyKind};
use topsom::trainer::{find_bmus, init_weights, map_samples, train_with, InitMethod, TrainOptions};
use topsom::tune::{distill_defaults, dominates, pareto_front, SearchSpace, TrialRecord};
use topsom::{DataMatrix, DataSource, Sampler, SamplingConfig, SomConfig};

fn kind_strategy() -> impl Strategy<Value = TopologyKind> {
    prop_oneof![
        Just(TopologyKind::Rectangular),
        Just(TopologyKind::Hexagonal),
        Just(TopologyKind::Mst),
        Just(TopologyKind::Rng),
    ]
}

fn train_quiet(cfg: &SomConfig, data: &DataMatrix) -> topsom::SomModel {
    let mut sampler = Sampler::new(SamplingConfig::full(), data.n_rows(), cfg.seed).unwrap();
    let opts = TrainOptions {
        log_qe: false,
        ..TrainOptions::default()
    };
    train_with(cfg, DataSource::Memory(data), &mut sampler, &opts).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Weights stay finite and inside a generous box around the data for any radius
    /// and momentum setting.
    #[test]
    fn training_never_explodes(
        seed in 0u64..1000,
        kind in kind_strategy(),
        sigma0 in 1e-3f64..5.0,
        sigma_min in 1e-4f64..0.5,
        eta0 in 0.01f64..1.0,
        use_momentum in any::<bool>(),
        scale in 1e-3f32..1e3,
    ) {
        let raw = synth_uniform(80, 3, seed).unwrap();
        let values: Vec<f32> = raw.values().iter().map(|v| (v - 0.5) * scale).collect();
        let data = DataMatrix::new(80, 3, values).unwrap();
        let cfg = SomConfig {
            width: 3,
            height: 3,
            topology: kind,
            n_iters: 12,
            eta0,
            sigma0,
            sigma_min,
            use_momentum,
            momentum: 0.5,
            refresh: RefreshPolicy::for_iterations(12),
            seed,
            ..SomConfig::default()
        };
        let model = train_quiet(&cfg, &data);
        let bound = 10.0 * scale;
        prop_assert!(model.weights.iter().all(|w| w.is_finite() && w.abs() <= bound));
    }

    /// Final weights do not depend on how each iteration is chunked.
    #[test]
    fn chunking_is_invisible(seed in 0u64..1000, kind in kind_strategy(), chunks in 2usize..9) {
        let data = synth_uniform(97, 2, seed).unwrap();
        let base = SomConfig {
            width: 3,
            height: 2,
            topology: kind,
            n_iters: 6,
            seed,
            ..SomConfig::default()
        };
        let one = train_quiet(&base, &data);
        let many = train_quiet(&SomConfig { n_chunks: chunks, ..base }, &data);
        prop_assert_eq!(one.weights, many.weights);
    }

    #[test]
    fn bmus_match_naive_argmin(seed in 0u64..10_000) {
        let x = synth_uniform(50, 5, seed).unwrap();
        let w = synth_uniform(16, 5, seed + 1).unwrap();
        let (bmus, dists) = find_bmus(x.values(), w.values(), 5);
        for (i, row) in x.rows().enumerate() {
            let mut best = (0usize, f64::INFINITY);
            for (j, node) in w.rows().enumerate() {
                let d: f64 = row.iter().zip(node).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
                if d < best.1 {
                    best = (j, d);
                }
            }
            prop_assert_eq!(bmus[i] as usize, best.0);
            prop_assert!((dists[i] - best.1.sqrt()).abs() < 1e-12);
        }
    }
}

#[test]
fn pca_plane_stays_on_data_plane() {
    // points on span{a, b} + c in 5-D
    let a = [1.0f64, 2.0, 0.0, -1.0, 0.5];
    let b = [0.0f64, 1.0, 1.0, 1.0, -2.0];
    let c = [3.0f64, -1.0, 2.0, 0.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut values = Vec::new();
    for _ in 0..300 {
        let (s, t): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        values.extend((0..5).map(|k| (c[k] + s * a[k] + t * b[k]) as f32));
    }
    let data = DataMatrix::new(300, 5, values).unwrap();
    let cfg = SomConfig {
        width: 4,
        height: 3,
        init_method: InitMethod::PcaPlane,
        ..SomConfig::default()
    };
    let w = init_weights(&cfg, DataSource::Memory(&data), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

    // residual after projecting onto the plane, via Gram-Schmidt in f64
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let na = dot(&a, &a).sqrt();
    let e1: Vec<f64> = a.iter().map(|v| v / na).collect();
    let proj = dot(&b, &e1);
    let b_perp: Vec<f64> = b.iter().zip(&e1).map(|(v, e)| v - proj * e).collect();
    let nb = dot(&b_perp, &b_perp).sqrt();
    let e2: Vec<f64> = b_perp.iter().map(|v| v / nb).collect();
    for node in w.chunks_exact(5) {
        let r: Vec<f64> = node.iter().zip(&c).map(|(&x, &c)| x as f64 - c).collect();
        let (p1, p2) = (dot(&r, &e1), dot(&r, &e2));
        let resid: f64 = r.iter().zip(e1.iter().zip(&e2)).map(|(v, (x, y))| (v - p1 * x - p2 * y).powi(2)).sum();
        assert!(resid.sqrt() < 1e-4, "node off the plane by {}", resid.sqrt());
    }
    // nodes must actually spread out along the plane
    let spread = w.chunks_exact(5).map(|n| n[0]).fold(f32::NEG_INFINITY, f32::max)
        - w.chunks_exact(5).map(|n| n[0]).fold(f32::INFINITY, f32::min);
    assert!(spread > 0.5);
}

#[test]
fn qe_falls_during_training() {
    let mut lower = 0;
    let mut finals = Vec::new();
    let mut starts = Vec::new();
    for seed in 0..20u64 {
        let data = synth_rings(400, 0.05, seed).unwrap();
        let cfg = SomConfig {
            width: 5,
            height: 5,
            seed,
            ..SomConfig::default()
        };
        let mut sampler = Sampler::new(SamplingConfig::full(), data.n_rows(), seed).unwrap();
        let (model, log) = train_with(&cfg, DataSource::Memory(&data), &mut sampler, &TrainOptions::default()).unwrap();
        let start = log.records[0].qe_train.unwrap();
        let end = quantization_error(&model, &data).unwrap();
        lower += usize::from(end < start);
        starts.push(start);
        finals.push(end);
    }
    starts.sort_by(f64::total_cmp);
    finals.sort_by(f64::total_cmp);
    assert!(finals[10] < starts[10], "median QE {} -> {}", starts[10], finals[10]);
    assert!(lower >= 15);
}

#[test]
fn mapping_is_read_only_and_repeatable() {
    let data = synth_rings(200, 0.02, 3).unwrap();
    let model = train_quiet(&SomConfig { width: 4, height: 4, ..SomConfig::default() }, &data);
    let before = model.weights.clone();
    let a = map_samples(&model, &data).unwrap();
    let b = map_samples(&model, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.weights, before);
    assert!(map_samples(&model, &DataMatrix::empty(2)).unwrap().is_empty());
    assert!(map_samples(&model, &DataMatrix::empty(3)).is_err());
}

#[test]
fn two_point_map_places_samples_on_nodes() {
    let data = DataMatrix::new(6, 1, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let cfg = SomConfig {
        width: 2,
        height: 1,
        topology: TopologyKind::Rectangular,
        n_iters: 40,
        sigma0: 0.5,
        sigma_min: 0.1,
        // sample_draw could start both nodes on the same point, which never separates
        init_method: InitMethod::UniformBox,
        ..SomConfig::default()
    };
    let model = train_quiet(&cfg, &data);
    assert!(map_samples(&model, &data).unwrap().iter().all(|&(_, d)| d < 0.05));
}

#[test]
fn random_selection_covers_everything() {
    let mut full_cover = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = [false; 100];
        for _ in 0..50 {
            for i in select_random(100, 20, &mut rng) {
                seen[i] = true;
            }
        }
        full_cover += usize::from(seen.iter().all(|&s| s));
    }
    assert!(full_cover >= 198, "{full_cover}/200 runs covered every index");
}

#[test]
fn adaptive_prefers_hard_samples() {
    let mut state = AdaptiveSamplerState::new(10, 1.0, 0.0);
    state.last_error = vec![0.1; 10];
    state.last_error[6] = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 10];
    for _ in 0..5_000 {
        counts[select_adaptive(&state, 1, &mut rng)[0]] += 1;
    }
    let top = (0..10).max_by_key(|&i| counts[i]).unwrap();
    assert_eq!(top, 6, "{counts:?}");
}

#[test]
fn influence_closed_form() {
    let h = influence_matrix([0.0, 0.7, 40.0], 0.7).unwrap();
    assert_eq!(h[0], 1.0);
    assert!((h[1] - (-0.5f64).exp()).abs() < 1e-15);
    assert_eq!(h[2], 0.0);
    assert!(influence_matrix([1.0], 0.0).is_err());
}

fn record(seed: u64, trial_index: usize, qt: f64, qh: f64, eta0: f64) -> TrialRecord {
    TrialRecord {
        trial_index,
        seed,
        params: SomConfig {
            eta0,
            ..SomConfig::default()
        },
        qe_train: qt,
        qe_holdout: qh,
        error: None,
    }
}

#[test]
fn pareto_front_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<TrialRecord> = (0..60)
        .map(|i| record(i as u64 % 3, i, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.5))
        .collect();
    let front = pareto_front(&records);
    for a in &front {
        for b in &front {
            assert!(!dominates((a.qe_train, a.qe_holdout), (b.qe_train, b.qe_holdout)));
        }
    }
    let min_t = records.iter().map(|r| r.qe_train).fold(f64::INFINITY, f64::min);
    let min_h = records.iter().map(|r| r.qe_holdout).fold(f64::INFINITY, f64::min);
    assert!(front.iter().any(|r| r.qe_train == min_t));
    assert!(front.iter().any(|r| r.qe_holdout == min_h));
    for r in &records {
        let dominated = records.iter().any(|o| dominates((o.qe_train, o.qe_holdout), (r.qe_train, r.qe_holdout)));
        assert_eq!(!dominated, front.contains(r));
    }
}

#[test]
fn distill_ignores_seed_order() {
    let best = vec![
        record(0, 0, 0.1, 0.1, 0.1),
        record(1, 0, 0.1, 0.1, 0.3),
        record(2, 0, 0.1, 0.1, 0.8),
    ];
    let mut reversed = best.clone();
    reversed.reverse();
    let space = SearchSpace::default();
    let a = distill_defaults(&best, &space).unwrap();
    let b = distill_defaults(&reversed, &space).unwrap();
    assert!((a.eta0 - 0.4).abs() < 1e-12);
    assert!((a.eta0 - b.eta0).abs() < 1e-15);
}
