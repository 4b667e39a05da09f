use proptest::prelude::*;
use semiseg_core::data::{self, FeatureSequence, Standardizer};
use semiseg_core::generative::{self, DynamicsKind, SldsParams};
use semiseg_core::inference::{BackboneKind, PosteriorNets};
use semiseg_core::losses;
use semiseg_core::{math, metrics, rng, TcnBackbone, TcnConfig, Tensor};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-50.0f64..50.0, r * c).prop_map(move |v| Tensor::from_vec(r, c, v).unwrap())
    })
}

fn labels(len: usize, k: i32) -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(0..k, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn position_velocity_keeps_positions(x in matrix(30, 5)) {
        let pv = data::position_velocity(&x);
        prop_assert_eq!(pv.shape(), (x.rows(), 2 * x.cols()));
        for t in 0..x.rows() {
            prop_assert_eq!(&pv.row(t)[..x.cols()], x.row(t));
        }
    }

    #[test]
    fn standardizer_round_trips(x in matrix(40, 4)) {
        let s = Standardizer::fit_matrices(&[&x]).unwrap();
        let back = s.inverse(&s.apply(&x));
        prop_assert!(back.max_abs_diff(&x) < 1e-9 * (1.0 + x.data().iter().fold(0.0f64, |a, v| a.max(v.abs()))));
    }

    #[test]
    fn latent_dim_is_monotone_in_threshold(x in matrix(40, 5), a in 0.05f64..1.0, b in 0.05f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let l_lo = data::select_latent_dim(&x, lo).unwrap();
        let l_hi = data::select_latent_dim(&x, hi).unwrap();
        prop_assert!(l_lo <= l_hi);
        prop_assert!(l_hi <= x.cols() && l_lo >= 1);
    }

    #[test]
    fn batches_are_reproducible_and_cover_frames(
        lens in prop::collection::vec(1usize..60, 1..4),
        window in 1usize..25,
        batch in 1usize..5,
        seed in any::<u64>(),
    ) {
        let seqs: Vec<FeatureSequence> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let x = Tensor::from_vec(n, 1, (0..n).map(|t| (i * 1000 + t) as f64).collect()).unwrap();
                FeatureSequence::new(format!("s{i}"), x, 1.0, None).unwrap()
            })
            .collect();
        let a: Vec<_> = data::make_batches(&seqs, batch, window, seed).unwrap().collect();
        let b: Vec<_> = data::make_batches(&seqs, batch, window, seed).unwrap().collect();
        prop_assert_eq!(&a, &b);
        let mut seen: Vec<f64> = a.iter().flat_map(|bt| bt.windows.iter().flat_map(|w| w.valid_features().data().to_vec())).collect();
        seen.sort_by(f64::total_cmp);
        let mut all: Vec<f64> = seqs.iter().flat_map(|s| s.features.data().to_vec()).collect();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(seen, all);
    }

    #[test]
    fn transition_rows_are_distributions(seed in any::<u64>(), z in prop::collection::vec(-20.0f64..20.0, 2)) {
        for kind in [DynamicsKind::Linear, DynamicsKind::Nonlinear] {
            let p = SldsParams::new(3, 2, 3, kind, seed).unwrap();
            for k in 0..3 {
                let row = p.transition_probs(k, &z);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn classifier_rows_are_distributions(seed in any::<u64>(), x in matrix(12, 3)) {
        let kind = BackboneKind::Framewise { hidden: 4 };
        let nets = PosteriorNets::new(x.cols(), 4, Some(2), &kind, seed).unwrap();
        let probs = nets.classify(&x, None).unwrap();
        for t in 0..probs.rows() {
            prop_assert!((probs.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let h = math::entropy(probs.row(t));
            prop_assert!(h >= -1e-15 && h <= 4f64.ln() + 1e-12);
        }
    }

    #[test]
    fn kl_divergences_are_non_negative(
        m in prop::collection::vec(-5.0f64..5.0, 3),
        v in prop::collection::vec(0.01f64..10.0, 3),
        pm in prop::collection::vec(-5.0f64..5.0, 3),
        pv in prop::collection::vec(0.01f64..10.0, 3),
        q in prop::collection::vec(0.01f64..1.0, 4),
        p in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        prop_assert!(generative::diag_gaussian_kl(&m, &v, &pm, &pv) >= -1e-12);
        prop_assert!(generative::diag_gaussian_kl(&m, &v, &m, &v).abs() < 1e-12);
        let norm = |w: &[f64]| { let s: f64 = w.iter().sum(); w.iter().map(|x| x / s).collect::<Vec<_>>() };
        prop_assert!(generative::categorical_kl(&norm(&q), &norm(&p)) >= -1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_relabel_invariant(
        (truth, pred) in (5usize..80).prop_flat_map(|n| (labels(n, 4), labels(n, 4))),
        perm in Just([0i32, 1, 2, 3]).prop_shuffle(),
    ) {
        let f = metrics::f1_scores(&pred, &truth, 4).unwrap();
        prop_assert!(f.per_class.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((0.0..=1.0).contains(&f.macro_f1));
        let relabel = |v: &[i32]| v.iter().map(|&y| perm[y as usize]).collect::<Vec<_>>();
        let g = metrics::f1_scores(&relabel(&pred), &relabel(&truth), 4).unwrap();
        prop_assert!((f.macro_f1 - g.macro_f1).abs() < 1e-12);

        let conf = metrics::confusion(&pred, &truth, 4).unwrap();
        prop_assert_eq!(conf.iter().flatten().sum::<u64>() as usize, truth.len());

        let c: Vec<usize> = pred.iter().map(|&v| v as usize).collect();
        let y: Vec<usize> = truth.iter().map(|&v| v as usize).collect();
        let h = metrics::homogeneity(&c, &y).unwrap();
        let comp = metrics::completeness(&c, &y).unwrap();
        let vm = metrics::v_measure(&c, &y).unwrap();
        for s in [h, comp, vm] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
        let cp: Vec<usize> = c.iter().map(|&v| perm[v] as usize).collect();
        prop_assert!((metrics::homogeneity(&cp, &y).unwrap() - h).abs() < 1e-12);
        let yp: Vec<usize> = y.iter().map(|&v| perm[v] as usize).collect();
        prop_assert!((metrics::homogeneity(&c, &yp).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn classification_loss_ignores_unlabeled_order(
        seed in any::<u64>(),
        n in 4usize..30,
    ) {
        let mut r = rng::seeded(seed);
        let raw = rng::normal_tensor(n, 3, &mut r);
        let probs = Tensor::from_rows(&(0..n).map(|t| math::softmax(raw.row(t))).collect::<Vec<_>>()).unwrap();
        let y: Vec<i32> = (0..n).map(|t| if t % 3 == 0 { -1 } else { (t % 3) as i32 }).collect();
        let w = [0.7, 1.1, 1.2];
        let (base, _) = losses::classification_loss(&probs, &y, &w).unwrap();
        // swap every pair of unlabeled frames
        let unl: Vec<usize> = (0..n).filter(|&t| y[t] < 0).collect();
        let mut p2 = probs.clone();
        for pair in unl.chunks(2) {
            if let [a, b] = *pair {
                let ra = probs.row(a).to_vec();
                p2.row_mut(a).copy_from_slice(probs.row(b));
                p2.row_mut(b).copy_from_slice(&ra);
            }
        }
        let (moved, _) = losses::classification_loss(&p2, &y, &w).unwrap();
        prop_assert_eq!(base, moved);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tcn_output_is_local(seed in any::<u64>(), t0 in 0usize..40, delta in -3.0f64..3.0) {
        let cfg = TcnConfig { n_blocks: 2, n_lags: 1, n_filters: 4, ..TcnConfig::default() };
        let mut store = semiseg_core::ParamStore::new();
        let mut r = rng::seeded(seed);
        let net = TcnBackbone::new(&mut store, "tcn", 2, cfg, &mut r).unwrap();
        let radius = net.receptive_field_radius();
        let x = rng::normal_tensor(40, 2, &mut r);
        let mut y = x.clone();
        y.set(t0, 0, x.get(t0, 0) + delta + 0.5);
        let a = net.eval(&store, &x, None).unwrap();
        let b = net.eval(&store, &y, None).unwrap();
        for t in 0..40usize {
            if t.abs_diff(t0) > radius {
                prop_assert_eq!(a.row(t), b.row(t));
            }
        }
    }
}
