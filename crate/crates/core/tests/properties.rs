use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Array1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shotsum::data::{make_splits, make_synthetic_record, SplitPolicy, SyntheticSpec};
use shotsum::eval::{fscore, FscoreMode};
use shotsum::model::{Model, ModelConfig, ModelInput};
use shotsum::nn::checkpoint;
use shotsum::shotconv::{cross_shot_pad, forward_network, inner_shotconv, InnerWeights, ScaleSetting};
use shotsum::summarize::{change_points_to_segments, knapsack_select, kts_segment, summarize_segments};

fn brute_knapsack(values: &[f64], weights: &[usize], cap: usize) -> f64 {
    let n = values.len();
    (0u32..1 << n)
        .filter_map(|m| {
            let w: usize = (0..n).filter(|i| m >> i & 1 == 1).map(|i| weights[i]).sum();
            (w <= cap).then(|| (0..n).filter(|i| m >> i & 1 == 1).map(|i| values[i]).sum::<f64>())
        })
        .fold(0.0, f64::max)
}

fn matrix(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knapsack_matches_exhaustive_search(
        items in prop::collection::vec((0u32..40, 1usize..12), 0..=12),
        cap_frac in 0.0f64..1.2,
    ) {
        let values: Vec<f64> = items.iter().map(|&(v, _)| v as f64 / 4.0).collect();
        let weights: Vec<usize> = items.iter().map(|&(_, w)| w).collect();
        let cap = (cap_frac * weights.iter().sum::<usize>() as f64) as usize;
        let (sel, value) = knapsack_select(&values, &weights, cap).unwrap();
        prop_assert_eq!(value, brute_knapsack(&values, &weights, cap));
        prop_assert!(sel.iter().map(|&i| weights[i]).sum::<usize>() <= cap);
        prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn kts_segments_tile_the_timeline(seed in 0u64..1000, t in 2usize..40, max_frac in 0.0f64..1.0, w in 0.0f64..3.0) {
        let x = matrix(seed, t, 3);
        let max_cp = ((max_frac * (t - 1) as f64) as usize).min(t - 1);
        let r = kts_segment(x.view(), max_cp, w).unwrap();
        prop_assert!(r.change_points.len() <= max_cp);
        let segs = r.segments(t);
        prop_assert_eq!(segs[0][0], 0);
        prop_assert_eq!(segs.last().unwrap()[1], t - 1);
        for pair in segs.windows(2) {
            prop_assert_eq!(pair[1][0], pair[0][1] + 1);
        }
        prop_assert_eq!(change_points_to_segments(&r.change_points, t), segs);
    }

    #[test]
    fn standard_folds_partition_the_target(n in 2usize..40, folds in 2usize..8, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("video_{i}")).collect();
        let mut data = BTreeMap::new();
        data.insert("a".to_string(), ids.clone());
        data.insert("b".to_string(), vec!["x_0".to_string()]);
        let plan = make_splits(&data, "a", SplitPolicy::Standard, folds, seed).unwrap();
        let mut seen = BTreeSet::new();
        for f in &plan.folds {
            for id in &f.test {
                prop_assert!(seen.insert(id.clone()), "{} tested twice", id);
                prop_assert!(!f.train.contains(id));
            }
            prop_assert!(!f.train.contains(&"x_0".to_string()));
        }
        prop_assert_eq!(seen, ids.into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn synthetic_records_are_pure(seed in any::<u64>(), t in 2usize..60) {
        let spec = SyntheticSpec::new(t, 4, 2, 2, 3);
        let a = make_synthetic_record(seed, &spec);
        prop_assert_eq!(&a, &make_synthetic_record(seed, &spec));
        prop_assert!(a.validate().is_ok());
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>()) {
        let cfg = ModelConfig::tiny();
        let (_, params) = Model::init(&cfg, seed).unwrap();
        let decoded = checkpoint::decode(&checkpoint::encode(&params)).unwrap();
        prop_assert_eq!(decoded.len(), params.len());
        for (id, (name, value)) in params.ids().zip(decoded) {
            prop_assert_eq!(params.name(id), name.as_str());
            prop_assert_eq!(params.values().get(id), &value);
        }
    }

    #[test]
    fn padded_rows_copy_their_sources(seed in 0u64..500, t in 3usize..60, shots in 1usize..6, eta in 0.0f64..0.9) {
        prop_assume!(shots <= t);
        let x = matrix(seed, t, 2);
        let (padded, plan) = cross_shot_pad(x.view(), shots, eta).unwrap();
        prop_assert_eq!(padded.nrows(), t + shots * plan.pad);
        for (r, &src) in plan.source.iter().enumerate() {
            prop_assert_eq!(padded.row(r), x.row(src));
        }
    }

    #[test]
    fn inner_shotconv_is_local_per_shot(seed in 0u64..500, shots in 2usize..6, row in 0usize..6) {
        let row = row % shots;
        let width = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bw: Vec<Array2<f64>> = [1usize, 3, 5, 7].iter().map(|&k| Array2::from_shape_fn((1, k), |_| rng.random_range(-1.0..1.0))).collect();
        let bb: Vec<Array1<f64>> = (0..4).map(|_| Array1::from_elem(1, rng.random_range(-1.0..1.0))).collect();
        let rw = matrix(seed + 1, 4 * (width / 4), 5);
        let rb = Array1::zeros(5);
        let w = InnerWeights {
            branch_w: std::array::from_fn(|i| bw[i].view()),
            branch_b: std::array::from_fn(|i| bb[i].view()),
            reduce_w: rw.view(),
            reduce_b: rb.view(),
        };
        let x = matrix(seed + 2, shots, width);
        let base = inner_shotconv(x.view(), &w).unwrap().out;
        let mut bumped = x.clone();
        bumped.row_mut(row).mapv_inplace(|v| v + 0.5);
        let moved = inner_shotconv(bumped.view(), &w).unwrap().out;
        for r in 0..shots {
            if r != row {
                prop_assert_eq!(moved.row(r), base.row(r));
            }
        }
    }

    #[test]
    fn fscore_bounds_symmetry_and_modes(seed in any::<u64>(), len in 1usize..50, users in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<u8> = (0..len).map(|_| rng.random_range(0..=1)).collect();
        let u = Array2::from_shape_fn((users, len), |_| rng.random_range(0..=1u8));
        let mx = fscore(&pred, u.view(), FscoreMode::Max).unwrap();
        let av = fscore(&pred, u.view(), FscoreMode::Avg).unwrap();
        prop_assert!(mx >= av && (0.0..=1.0).contains(&mx) && (0.0..=1.0).contains(&av));

        let one = u.row(0).to_owned();
        let swapped = Array2::from_shape_vec((1, len), pred.clone()).unwrap();
        let ab = fscore(&pred, one.view().insert_axis(ndarray::Axis(0)), FscoreMode::Avg).unwrap();
        let ba = fscore(one.as_slice().unwrap(), swapped.view(), FscoreMode::Avg).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn adding_a_unanimous_frame_never_lowers_recall(seed in any::<u64>(), len in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pred: Vec<u8> = (0..len).map(|_| rng.random_range(0..=1)).collect();
        let mut u = Array2::from_shape_fn((3, len), |_| rng.random_range(0..=1u8));
        let frame = rng.random_range(0..len);
        u.column_mut(frame).fill(1);
        let recall = |p: &[u8]| -> Vec<f64> {
            u.rows().into_iter().map(|r| {
                let hit = r.iter().zip(p).filter(|(&a, &b)| a == 1 && b == 1).count();
                hit as f64 / r.iter().filter(|&&a| a == 1).count() as f64
            }).collect()
        };
        let before = recall(&pred);
        pred[frame] = 1;
        let after = recall(&pred);
        prop_assert!(before.iter().zip(&after).all(|(b, a)| a >= b));
    }

    #[test]
    fn summary_budget_and_scaling(seed in any::<u64>(), t in 4usize..40, budget in 0.05f64..0.6, k in 0i32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stride = 3;
        let n_frames = t * stride;
        let picks: Vec<usize> = (0..t).map(|i| i * stride).collect();
        let mut cps = vec![0];
        while *cps.last().unwrap() < n_frames {
            let next = cps.last().unwrap() + rng.random_range(1..=10);
            cps.push(next.min(n_frames));
        }
        let segments: Vec<[usize; 2]> = cps.windows(2).map(|w| [w[0], w[1] - 1]).collect();
        let scores: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        let (summary, _) = summarize_segments(&scores, &segments, &picks, n_frames, budget).unwrap();
        prop_assert!(summary.selected_frames() <= (budget * n_frames as f64).floor() as usize);
        prop_assert_eq!(summary.mask.len(), n_frames);

        let scale = 2f64.powi(k - 2);
        let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
        let (again, _) = summarize_segments(&scaled, &segments, &picks, n_frames, budget).unwrap();
        prop_assert_eq!(again.selected, summary.selected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_layer_keeps_the_frame_shape(t in 6usize..80, seed in 0u64..100) {
        let cfg = ModelConfig::tiny();
        let (model, params) = Model::init(&cfg, seed).unwrap();
        let spec = SyntheticSpec::new(t, cfg.feat_dim, cfg.audio_dim, 2, 2).with_caption_dim(cfg.caption_dim);
        let rec = make_synthetic_record(seed, &spec);
        let pass = model.forward(params.values(), &ModelInput::from_record(&rec), true).unwrap();
        for layer in &pass.layers {
            prop_assert_eq!(layer.f_asf.dim(), (t, cfg.feat_dim));
        }
        prop_assert!(pass.scores.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
        let again = model.forward(params.values(), &ModelInput::from_record(&rec), false).unwrap();
        prop_assert_eq!(again.scores, pass.scores);
    }

    #[test]
    fn zero_weights_make_the_network_the_identity(t in 6usize..50, seed in 0u64..100) {
        let cfg = ModelConfig::tiny();
        let (model, params) = Model::zeros(&cfg).unwrap();
        let x = matrix(seed, t, cfg.feat_dim);
        let settings: Vec<ScaleSetting> = cfg.scale_settings();
        let acts = forward_network(x.view(), &settings, params.values(), &model.layers, false).unwrap();
        prop_assert_eq!(&acts.last().unwrap().f_asf, &x);
    }
}
