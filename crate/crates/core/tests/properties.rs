//! Property tests for the structural invariants: things that must hold for
//! every input, not just the worked examples.

mod common;

use graphfsl::learners::{class_softmax, Classifier, LearnerKind};
use graphfsl::metrics::{hardness, pca_2d, pearson, summarize, t_sf};
use graphfsl::param::ParamTable;
use graphfsl::reg::{graph_loss_exact, RegConfig, SimilarityKind};
use graphfsl::tasks::{make_binary_tree, sample_synthetic_episode, split_leaves, Episode, Labeled, SplitMode, SyntheticConfig};
use graphfsl::walks::{build_neighborhoods, WalkConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn finite_f64() -> impl Strategy<Value = f64> {
    (-100.0f64..100.0).prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(
        rows in prop::collection::vec(prop::collection::vec(finite_f64(), 3), 1..6),
        x in prop::collection::vec(finite_f64(), 3),
    ) {
        let c = Classifier {
            kind: LearnerKind::InnerLoop,
            sim: SimilarityKind::Dot,
            classes: (0..rows.len()).map(|i| format!("c{i}")).collect(),
            weights: rows,
        };
        let p = class_softmax(&x, &c, SimilarityKind::Dot).unwrap();
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for v in p {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn summarize_mean_is_permutation_invariant(
        mut vals in prop::collection::vec(finite_f64(), 2..20),
        seed in 0u64..1000,
    ) {
        let a = summarize(&vals).unwrap();
        // deterministic shuffle
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        for i in (1..vals.len()).rev() {
            let j = rng.random_range(0..=i);
            vals.swap(i, j);
        }
        let b = summarize(&vals).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-9);
    }

    #[test]
    fn pearson_invariant_under_positive_affine_maps(
        pts in prop::collection::vec((finite_f64(), finite_f64()), 3..20),
        a in 0.1f64..10.0,
        b in finite_f64(),
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if let Ok(r) = pearson(&xs, &ys) {
            let xs2: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
            let r2 = pearson(&xs2, &ys).unwrap();
            prop_assert!((r - r2).abs() < 1e-7, "{r} vs {r2}");
        }
    }

    #[test]
    fn t_sf_is_a_valid_survival_function(
        t1 in -50.0f64..50.0,
        dt in 0.0f64..10.0,
        df in 1usize..200,
    ) {
        let a = t_sf(t1, df);
        let b = t_sf(t1 + dt, df);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-12, "sf must be nonincreasing: {a} then {b}");
    }

    #[test]
    fn hardness_is_rigid_motion_invariant(
        sup in prop::collection::vec((finite_f64(), finite_f64()), 2..6),
        q in prop::collection::vec((finite_f64(), finite_f64(), 0usize..2), 1..6),
        angle in 0.0f64..6.28,
        shift in (finite_f64(), finite_f64()),
    ) {
        // two classes; support points alternate class labels
        let support: Vec<Labeled<f64>> = sup
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Labeled { x: vec![x, y], y: i % 2 })
            .collect();
        prop_assume!(support.iter().any(|e| e.y == 0) && support.iter().any(|e| e.y == 1));
        let query: Vec<Labeled<f64>> = q
            .iter()
            .map(|&(x, y, c)| Labeled { x: vec![x, y], y: c })
            .collect();
        let ep = Episode {
            classes: vec!["a".into(), "b".into()],
            support: support.clone(),
            query: query.clone(),
        };
        let (h1, _) = hardness(&ep).unwrap();
        let (s, c) = (angle.sin(), angle.cos());
        let rot = |v: &[f64]| vec![c * v[0] - s * v[1] + shift.0, s * v[0] + c * v[1] + shift.1];
        let ep2 = Episode {
            classes: ep.classes.clone(),
            support: support.iter().map(|e| Labeled { x: rot(&e.x), y: e.y }).collect(),
            query: query.iter().map(|e| Labeled { x: rot(&e.x), y: e.y }).collect(),
        };
        let (h2, _) = hardness(&ep2).unwrap();
        prop_assert!((h1 - h2).abs() < 1e-6, "{h1} vs {h2}");
    }

    #[test]
    fn pca_preserves_distances_for_rank_two_input(
        pts2 in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..10),
    ) {
        // embed a planar cloud in 5 dimensions by a fixed isometry
        let u = [0.6, 0.0, 0.8, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0, 0.0, 0.0];
        let pts: Vec<Vec<f64>> = pts2
            .iter()
            .map(|&(a, b)| (0..5).map(|j| a * u[j] + b * v[j] + 3.0).collect())
            .collect();
        let p = pca_2d(&pts).unwrap();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let orig = ((pts2[i].0 - pts2[j].0).powi(2)
                    + (pts2[i].1 - pts2[j].1).powi(2))
                .sqrt();
                let proj = ((p.coords[i][0] - p.coords[j][0]).powi(2)
                    + (p.coords[i][1] - p.coords[j][1]).powi(2))
                .sqrt();
                prop_assert!((orig - proj).abs() < 1e-6, "{orig} vs {proj}");
            }
        }
    }

    #[test]
    fn graph_loss_is_finite_and_nonnegative(
        seed in 0u64..500,
        n in 2usize..8,
        d in 2usize..5,
    ) {
        // each pair term is log Z_y - s_n/T with s_n one of the terms
        // inside Z_y, so log Z_y >= s_n/T and the sum cannot go negative
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = common::random_table(&mut rng, n, d);
        let nmap = common::random_nmap(&mut rng, n);
        let cfg = RegConfig::default();
        let l = graph_loss_exact(&table, &nmap, &cfg).unwrap();
        prop_assert!(l.is_finite());
        prop_assert!(l >= -1e-12, "loss went negative: {l}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn neighborhoods_respect_multiset_bound_and_exclude_source(
        seed in 0u64..1000,
        h in 2usize..4,
        walks in 1usize..4,
        len in 2usize..6,
        window in 1usize..3,
    ) {
        let g = make_binary_tree(h);
        let cfg = WalkConfig {
            walks_per_node: walks,
            walk_length: len,
            window,
            ..WalkConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nmap = build_neighborhoods(&g, &cfg, &mut rng);
        let bound = walks * len * 2 * window;
        for y in 0..g.node_count() {
            let ctx = nmap.get(y);
            prop_assert!(ctx.len() <= bound, "|N({y})| = {} > {bound}", ctx.len());
            prop_assert!(ctx.iter().all(|&v| v != y));
            prop_assert!(ctx.windows(2).all(|w| w[0] <= w[1]), "contexts sorted");
        }
    }

    #[test]
    fn synthetic_episodes_are_deterministic_and_well_formed(
        seed in 0u64..1000,
        k in 1usize..4,
        q in 1usize..6,
    ) {
        let g = make_binary_tree(3);
        let cfg = SyntheticConfig { h: 3, k, q_count: q, sigma: 0.3, ..SyntheticConfig::default() };
        // embedding stand-in: deterministic ramp rows
        let names = g.names().to_vec();
        let rows: Vec<Vec<f64>> = (0..g.node_count())
            .map(|i| (0..cfg.d).map(|j| (i * 7 + j) as f64 * 0.1).collect())
            .collect();
        let emb = ParamTable::from_rows(names, &rows).unwrap();
        let split = split_leaves::<f64>(&g, seed, SplitMode::Random).unwrap();
        let ep1 = sample_synthetic_episode(&emb, &split, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let ep2 = sample_synthetic_episode(&emb, &split, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&ep1.support, &ep2.support);
        prop_assert_eq!(&ep1.query, &ep2.query);
        prop_assert_eq!(ep1.support.len(), ep1.n_classes() * k);
        prop_assert_eq!(ep1.query.len(), ep1.n_classes() * q);
        ep1.check_invariants().unwrap();
    }
}

#[test]
fn paramtable_binary_roundtrip_is_bit_exact_for_random_tables() {
    // proptest's float strategies avoid the interesting corners, so use an
    // explicit mix of magnitudes and signs
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    use rand::Rng;
    for _ in 0..50 {
        let n = rng.random_range(1..6);
        let d = rng.random_range(1..5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let exp: i32 = rng.random_range(-280..280);
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        sign * rng.random_range(1.0..2.0) * 2f64.powi(exp)
                    })
                    .collect()
            })
            .collect();
        let names = (0..n).map(|i| format!("node-{i}")).collect();
        let t = ParamTable::from_rows(names, &rows).unwrap();
        let mut bytes = Vec::new();
        t.save_binary(&mut bytes).unwrap();
        let back = ParamTable::<f64>::load_binary(&mut bytes.as_slice()).unwrap();
        assert_eq!(t, back);
    }
}
