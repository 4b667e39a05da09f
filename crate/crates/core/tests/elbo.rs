use semiseg_core::generative::{DynamicsKind, GmdgmParams, SldsParams};
use semiseg_core::graph::Graph;
use semiseg_core::inference::{BackboneKind, PosteriorNets, ReparamNoise};
use semiseg_core::losses::{self, LossWeights};
use semiseg_core::{rng, TcnConfig, Tensor};

const T: usize = 12;
const K: usize = 3;
const L: usize = 2;
const D: usize = 3;

fn nets(seed: u64) -> PosteriorNets {
    let kind = BackboneKind::Temporal(TcnConfig {
        n_filters: 5,
        n_lags: 1,
        ..TcnConfig::default()
    });
    PosteriorNets::new(D, K, Some(L), &kind, seed).unwrap()
}

fn data(seed: u64) -> Tensor {
    rng::normal_tensor(T, D, &mut rng::seeded(seed))
}

fn labels() -> Vec<i32> {
    (0..T).map(|t| ((t / 3) % K) as i32).collect()
}

fn slds_value(
    gen: &SldsParams,
    nets: &PosteriorNets,
    x: &Tensor,
    noise: &ReparamNoise,
    f: impl FnOnce(&mut Graph, &SldsParams, &semiseg_core::params::Bound, semiseg_core::Var, &semiseg_core::inference::PosteriorOutputs) -> semiseg_core::Var,
) -> f64 {
    let mut g = Graph::new();
    let gp = gen.bind(&mut g, false);
    let np = nets.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let post = nets.outputs_graph(&mut g, &np, xv, None).unwrap();
    let _ = noise;
    let v = f(&mut g, gen, &gp, xv, &post);
    g.scalar(v)
}

#[test]
fn onehot_marginal_equals_labeled() {
    let gen = SldsParams::new(K, L, D, DynamicsKind::Linear, 1).unwrap();
    let nets = nets(2);
    let x = data(3);
    let y = labels();
    let noise = ReparamNoise::new(K, T, L, 4);
    let labeled = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        losses::elbo_labeled(g, gen, gp, xv, &y, post, &noise).unwrap()
    });
    let onehot = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        let r = losses::r_graph(g, post.probs, &y).unwrap();
        let t = losses::slds_marginal_terms(g, gen, gp, xv, r, post, &noise).unwrap();
        t.combine(g, 1.0)
    });
    assert!((labeled - onehot).abs() < 1e-6, "{labeled} vs {onehot}");
}

#[test]
fn semisupervised_extremes() {
    let gen = SldsParams::new(K, L, D, DynamicsKind::Nonlinear, 5).unwrap();
    let nets = nets(6);
    let x = data(7);
    let y = labels();
    let noise = ReparamNoise::new(K, T, L, 8);
    let w = LossWeights {
        alpha: 100.0,
        kl_anneal: 1.0,
        class_weights: vec![0.5, 1.0, 1.5],
    };
    let unl = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        losses::elbo_unlabeled(g, gen, gp, xv, post, &noise).unwrap()
    });
    let ss_unl = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        losses::elbo_semisupervised(g, gen, gp, xv, &[-1; T], post, &noise, &w)
            .unwrap()
            .elbo
    });
    assert!((unl - ss_unl).abs() < 1e-9);

    let lab = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        let e = losses::elbo_labeled(g, gen, gp, xv, &y, post, &noise).unwrap();
        let (ll, _) = losses::weighted_label_log_lik(g, post.log_probs, &y, &w.class_weights).unwrap();
        let a = g.scale(ll, w.alpha);
        g.add(e, a)
    });
    let ss_lab = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        losses::elbo_semisupervised(g, gen, gp, xv, &y, post, &noise, &w)
            .unwrap()
            .elbo
    });
    assert!((lab - ss_lab).abs() < 1e-6);
}

#[test]
fn zero_anneal_drops_kl_terms() {
    let gen = SldsParams::new(K, L, D, DynamicsKind::Linear, 9).unwrap();
    let nets = nets(10);
    let x = data(11);
    let noise = ReparamNoise::new(K, T, L, 12);
    let mut y = labels();
    y[4] = -1;
    y[5] = -1;
    let w = LossWeights {
        alpha: 3.0,
        kl_anneal: 0.0,
        class_weights: vec![1.0; K],
    };
    let mut g = Graph::new();
    let gp = gen.bind(&mut g, false);
    let np = nets.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let post = nets.outputs_graph(&mut g, &np, xv, None).unwrap();
    let ss = losses::elbo_semisupervised(&mut g, &gen, &gp, xv, &y, &post, &noise, &w).unwrap();
    let expect = g.scalar(ss.terms.reconstruction) + 3.0 * g.scalar(ss.label_log_lik);
    assert!((g.scalar(ss.elbo) - expect).abs() < 1e-9);
    assert!(g.scalar(ss.terms.z_kl) > 0.0);
}

#[test]
fn single_state_unlabeled_equals_labeled() {
    let gen = SldsParams::new(1, L, D, DynamicsKind::Linear, 13).unwrap();
    let kind = BackboneKind::Framewise { hidden: 4 };
    let nets = PosteriorNets::new(D, 1, Some(L), &kind, 14).unwrap();
    let x = data(15);
    let noise = ReparamNoise::new(1, T, L, 16);
    let lab = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        losses::elbo_labeled(g, gen, gp, xv, &[0; T], post, &noise).unwrap()
    });
    let unl = slds_value(&gen, &nets, &x, &noise, |g, gen, gp, xv, post| {
        losses::elbo_unlabeled(g, gen, gp, xv, post, &noise).unwrap()
    });
    assert!((lab - unl).abs() < 1e-9);
}

#[test]
fn labeled_bound_requires_labels() {
    let gen = SldsParams::new(K, L, D, DynamicsKind::Linear, 1).unwrap();
    let nets = nets(2);
    let x = data(3);
    let noise = ReparamNoise::new(K, T, L, 4);
    let mut y = labels();
    y[0] = -1;
    let mut g = Graph::new();
    let gp = gen.bind(&mut g, false);
    let np = nets.bind(&mut g, false);
    let xv = g.constant(x);
    let post = nets.outputs_graph(&mut g, &np, xv, None).unwrap();
    assert!(losses::elbo_labeled(&mut g, &gen, &gp, xv, &y, &post, &noise).is_err());
}

#[test]
fn labeled_bound_is_single_frame_formula_at_t1() {
    let mut gen = SldsParams::new(K, L, D, DynamicsKind::Linear, 1).unwrap();
    gen.set_initial_probs(&[0.2, 0.5, 0.3]).unwrap();
    let nets = nets(2);
    let x = data(3).slice_rows(0, 1);
    let noise = ReparamNoise::new(K, 1, L, 4);
    let mut g = Graph::new();
    let gp = gen.bind(&mut g, false);
    let np = nets.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let post = nets.outputs_graph(&mut g, &np, xv, None).unwrap();
    let e = losses::elbo_labeled(&mut g, &gen, &gp, xv, &[1], &post, &noise).unwrap();
    let m = g.value(post.means[1]).row(0).to_vec();
    let v: Vec<f64> = g.value(post.logvars[1]).row(0).iter().map(|a| a.exp()).collect();
    let z: Vec<f64> = (0..L).map(|j| m[j] + v[j].sqrt() * noise.class(1).get(0, j)).collect();
    let expect = gen.emission_logpdf(x.row(0), &z)
        - semiseg_core::generative::diag_gaussian_kl(&m, &v, &[0.0; L], &[1.0; L])
        + 0.5f64.ln();
    assert!((g.scalar(e) - expect).abs() < 1e-10);
}

#[test]
fn gmdgm_reductions() {
    let gen = GmdgmParams::new(K, L, D, 17).unwrap();
    let kind = BackboneKind::Framewise { hidden: 6 };
    let nets = PosteriorNets::new(D, K, Some(L), &kind, 18).unwrap();
    let x = data(19);
    let y = labels();
    let noise = ReparamNoise::new(K, T, L, 20);
    let mut g = Graph::new();
    let gp = gen.bind(&mut g, false);
    let np = nets.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let post = nets.outputs_graph(&mut g, &np, xv, None).unwrap();
    let lab = losses::gmdgm_elbo_labeled(&mut g, &gen, &gp, xv, &y, &post, &noise).unwrap();
    let r = losses::r_graph(&mut g, post.probs, &y).unwrap();
    let oh = losses::gmdgm_marginal_terms(&mut g, &gen, &gp, xv, r, &post, &noise).unwrap();
    let oh = oh.combine(&mut g, 1.0);
    assert!((g.scalar(lab) - g.scalar(oh)).abs() < 1e-9);

    // uniform q with identical per-class bounds c gives c + log K per frame
    let uni = g.constant(Tensor::full(T, K, 1.0 / K as f64));
    let same: Vec<_> = (0..K).map(|_| post.means[0]).collect();
    let same_lv: Vec<_> = (0..K).map(|_| post.logvars[0]).collect();
    let shared_noise = ReparamNoise::from_blocks(vec![noise.class(0).clone(); K]);
    let mut gen_tied = gen.clone();
    let (m0, v0) = (gen.prior_mean(0), gen.prior_variance(0));
    for c in 0..K {
        gen_tied.set_prior(c, &m0, &v0).unwrap();
    }
    let gpt = gen_tied.bind(&mut g, false);
    let post_tied = semiseg_core::inference::PosteriorOutputs {
        probs: uni,
        log_probs: post.log_probs,
        means: same,
        logvars: same_lv,
    };
    let marg = losses::gmdgm_marginal_terms(&mut g, &gen_tied, &gpt, xv, uni, &post_tied, &shared_noise).unwrap();
    let marg = marg.combine(&mut g, 1.0);
    let c = losses::gmdgm_elbo_labeled(&mut g, &gen_tied, &gpt, xv, &[0; T], &post_tied, &shared_noise).unwrap();
    let expect = g.scalar(c) + T as f64 * (K as f64).ln();
    assert!((g.scalar(marg) - expect).abs() < 1e-9);
}
