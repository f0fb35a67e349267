use std::f64::consts::PI;

use ndarray::{array, Array2, Axis};
use proptest::prelude::*;

use super::*;
use crate::flows::FlowConfig;
use crate::netcore::{Activation, DenseNet, ParamStore, SeededRng};

fn small_config(input_dim: usize, latent_dim: usize) -> IbConfig {
    IbConfig {
        hidden: vec![8],
        marginal: FlowConfig {
            n_layers: 2,
            hidden: vec![8],
            ..FlowConfig::realnvp(latent_dim)
        },
        ..IbConfig::regression(input_dim, 1).with_latent_dim(latent_dim)
    }
}

/// Zeroes the last layer of `net` and sets its bias to `bias`, so the net
/// outputs that constant.
fn force_output(store: &mut ParamStore, net: &DenseNet, bias: &[f64]) {
    let last = net.num_layers() - 1;
    store.get_mut(net.weight(last)).fill(0.0);
    let b = store.get_mut(net.bias(last));
    for (slot, v) in b.iter_mut().zip(bias) {
        *slot = *v;
    }
}

/// Turns a net without hidden layers into the identity map.
fn identity_net(store: &mut ParamStore, net: &DenseNet) {
    assert_eq!(net.num_layers(), 1);
    let w = store.get_mut(net.weight(0));
    w.fill(0.0);
    for i in 0..w.nrows().min(w.ncols()) {
        w[[i, i]] = 1.0;
    }
    store.get_mut(net.bias(0)).fill(0.0);
}

fn encoder_only(input_dim: usize, latent_dim: usize, gate_eps: f64) -> (ParamStore, Encoder) {
    let mut store = ParamStore::new();
    let enc = Encoder::new(
        &mut store,
        "enc",
        input_dim,
        &[8],
        latent_dim,
        Activation::Tanh,
        gate_eps,
        &mut SeededRng::new(1),
    );
    (store, enc)
}

#[test]
fn saturated_gate_is_deterministic_limit() {
    let (mut store, enc) = encoder_only(2, 3, 1e-3);
    force_output(&mut store, enc.m_net(), &[100.0; 3]);
    let x = array![[0.3, -0.2], [1.0, 2.0]];
    let (z, gate) = enc
        .encode_with_noise(&store, &x, &Array2::zeros((2, 3)))
        .unwrap();
    let zbar = enc.latent_mean(&store, &x).unwrap();
    assert!(gate.iter().all(|&g| (g - (1.0 - 1e-3)).abs() < 1e-12));
    for (a, b) in z.iter().zip(zbar.iter()) {
        assert!((a - b).abs() <= 1e-3 * b.abs() + 1e-15);
    }
}

#[test]
fn closed_gate_passes_noise() {
    let eps = 1e-3;
    let (mut store, enc) = encoder_only(1, 2, eps);
    force_output(&mut store, enc.m_net(), &[-100.0; 2]);
    let x = Array2::from_elem((10_000, 1), 0.7);
    let (z, _) = enc
        .encode_sample(&store, &x, &mut SeededRng::new(5))
        .unwrap();
    let var = z.var_axis(Axis(0), 1.0);
    for v in var.iter() {
        assert!((v / (1.0 - eps).powi(2) - 1.0).abs() < 0.05, "variance {v}");
    }
}

#[test]
fn encode_sample_is_seeded() {
    let (store, enc) = encoder_only(2, 4, 1e-3);
    let x = SeededRng::new(3).normal_matrix(5, 2);
    let a = enc
        .encode_sample(&store, &x, &mut SeededRng::new(9))
        .unwrap();
    let b = enc
        .encode_sample(&store, &x, &mut SeededRng::new(9))
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn encoder_log_prob_values() {
    let (mut store, enc) = encoder_only(1, 2, 1e-12);
    force_output(&mut store, enc.m_net(), &[-60.0; 2]);
    force_output(&mut store, enc.zbar_net(), &[0.0; 2]);
    let x = array![[0.4]];
    let lp = enc.log_prob(&store, &array![[0.0, 0.0]], &x).unwrap()[0];
    assert!((lp + (2.0 * PI).ln()).abs() < 1e-9);

    let (mut store, enc) = encoder_only(1, 1, 1e-3);
    force_output(&mut store, enc.m_net(), &[0.0]);
    force_output(&mut store, enc.zbar_net(), &[2.0]);
    let lp = enc.log_prob(&store, &array![[1.0]], &x).unwrap()[0];
    let expected = -0.5 * (2.0 * PI * 0.25).ln();
    assert!((lp - expected).abs() < 1e-12);
    assert!((lp + 0.2258).abs() < 1e-4);

    let mut prev = lp;
    for k in 1..20 {
        let z = 1.0 + 0.25 * k as f64;
        let next = enc.log_prob(&store, &array![[z]], &x).unwrap()[0];
        assert!(next < prev);
        prev = next;
    }
}

#[test]
fn encoder_tape_and_plain_agree() {
    let (store, enc) = encoder_only(3, 4, 1e-3);
    let x = SeededRng::new(1).normal_matrix(6, 3);
    let z0 = SeededRng::new(2).normal_matrix(6, 4);
    let (z, gate) = enc.encode_with_noise(&store, &x, &z0).unwrap();
    let tape = crate::netcore::Tape::new();
    let bound = store.bind_frozen(&tape);
    let e = enc.encode_var(&tape, &bound, tape.constant(x.clone()), tape.constant(z0));
    let zt = tape.value(e.z);
    assert!((&zt - &z).iter().all(|v| v.abs() < 1e-12));
    assert!((&tape.value(e.gate) - &gate)
        .iter()
        .all(|v| v.abs() < 1e-12));
    let lp = enc.log_prob(&store, &z, &x).unwrap();
    let lpt = tape.value(enc.log_prob_var(&tape, &e, e.z));
    for (a, b) in lp.iter().zip(lpt.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn decoder_only(bias: &[f64]) -> (ParamStore, GaussianDecoder) {
    let mut store = ParamStore::new();
    let dec = GaussianDecoder::new(
        &mut store,
        "dec",
        2,
        &[8],
        1,
        Activation::Tanh,
        1e-4,
        &mut SeededRng::new(1),
    );
    force_output(&mut store, dec.net(), bias);
    (store, dec)
}

#[test]
fn decoder_log_prob_values() {
    let z = array![[0.1, -0.3]];
    let (store, dec) = decoder_only(&[1.5, 0.0]);
    let at_mean = dec.log_prob(&store, &array![[1.5]], &z).unwrap()[0];
    assert!((at_mean + 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
    assert!((at_mean + 0.9189).abs() < 1e-4);
    let one_sigma = dec.log_prob(&store, &array![[2.5]], &z).unwrap()[0];
    assert!((one_sigma - (at_mean - 0.5)).abs() < 1e-12);

    let (store, dec) = decoder_only(&[0.0, -50.0]);
    let (_, log_sigma) = dec.params(&store, &z).unwrap();
    assert_eq!(log_sigma[[0, 0]], 1e-4f64.ln());
    for y in [0.0, 1.0, 1e3] {
        assert!(dec.log_prob(&store, &array![[y]], &z).unwrap()[0].is_finite());
    }
}

#[test]
fn mixup_examples() {
    let x = array![[0.0], [2.0]];
    let y = array![[0.0], [4.0]];
    let (xm, ym) = mixup_with(&x, &y, &[1, 0], &[1.0, 1.0]);
    assert_eq!((xm, ym), (x.clone(), y.clone()));
    let (xm, ym) = mixup_with(&x, &y, &[1, 0], &[0.5, 0.5]);
    assert_eq!(xm[[0, 0]], 1.0);
    assert_eq!(ym[[0, 0]], 2.0);

    let (xd, yd) = mixup_batch(&x, &y, &MixupConfig::disabled(), &mut SeededRng::new(1)).unwrap();
    assert_eq!((xd, yd), (x.clone(), y.clone()));
    assert!(mixup_batch(
        &Array2::zeros((0, 1)),
        &Array2::zeros((0, 1)),
        &MixupConfig::disabled(),
        &mut SeededRng::new(1)
    )
    .is_err());
    assert!(MixupConfig::new(0.0).is_err());
}

#[test]
fn small_alpha_concentrates_at_endpoints() {
    let mut rng = SeededRng::new(11);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| sample_lambda(0.005, &mut rng).unwrap())
        .collect();
    assert!(draws.iter().all(|l| (0.0..=1.0).contains(l)));
    let middle = draws.iter().filter(|&&l| l > 0.1 && l < 0.9).count();
    assert!(
        (middle as f64) < 0.05 * draws.len() as f64,
        "{middle} draws in (0.1, 0.9)"
    );
    let low = draws.iter().filter(|&&l| l < 0.5).count() as f64 / draws.len() as f64;
    assert!((low - 0.5).abs() < 0.05, "fraction below 1/2: {low}");
}

#[test]
fn mixup_stays_in_convex_hull() {
    let x = SeededRng::new(1).normal_matrix(64, 2);
    let y = x.sum_axis(Axis(1)).insert_axis(Axis(1));
    let cfg = MixupConfig::new(0.5).unwrap();
    let (xm, ym) = mixup_batch(&x, &y, &cfg, &mut SeededRng::new(2)).unwrap();
    // y is linear in x, so mixing preserves the relation
    let resid = &xm.sum_axis(Axis(1)) - &ym.column(0);
    assert!(resid.iter().all(|r| r.abs() < 1e-12));
    let (lo, hi) = x
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(xm.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
}

fn model_with_constant_decoder(mu: f64) -> IbModel {
    let mut m = IbModel::new(small_config(1, 2), 4).unwrap();
    let net = m.decoder().net().clone();
    force_output(&mut m.store, &net, &[mu, 0.0]);
    m
}

#[test]
fn iyz_examples() {
    let m = model_with_constant_decoder(0.75);
    let x = SeededRng::new(1).normal_matrix(16, 1);
    let y = Array2::from_elem((16, 1), 0.75);
    let v = m.estimate_iyz(&x, &y, &mut SeededRng::new(2)).unwrap();
    assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-12);

    let m = IbModel::new(small_config(1, 3), 5).unwrap();
    let x1 = array![[0.3]];
    let y1 = array![[-0.4]];
    let v = m.estimate_iyz(&x1, &y1, &mut SeededRng::new(3)).unwrap();
    let (z, _) = m.encode_sample(&x1, &mut SeededRng::new(3)).unwrap();
    let direct = m.decoder_log_prob(&y1, &z).unwrap()[0];
    assert!((v - direct).abs() < 1e-12);
}

#[test]
fn iyz_matches_reference_loop() {
    let m = IbModel::new(small_config(2, 3), 6).unwrap();
    let x = SeededRng::new(1).normal_matrix(12, 2);
    let y = SeededRng::new(2).normal_matrix(12, 1);
    let v = m.estimate_iyz(&x, &y, &mut SeededRng::new(7)).unwrap();
    let z0 = SeededRng::new(7).normal_matrix(12, 3);
    let mut total = 0.0;
    for b in 0..12 {
        let xb = x.row(b).to_owned().insert_axis(Axis(0));
        let z0b = z0.row(b).to_owned().insert_axis(Axis(0));
        let (zb, _) = m.encoder().encode_with_noise(&m.store, &xb, &z0b).unwrap();
        let yb = y.row(b).to_owned().insert_axis(Axis(0));
        total += m.decoder_log_prob(&yb, &zb).unwrap()[0];
    }
    assert!((v - total / 12.0).abs() < 1e-12);
}

#[test]
fn izx_single_sample() {
    let m = IbModel::new(small_config(2, 2), 8).unwrap();
    let x = array![[0.5, -1.0]];
    let v = m.estimate_izx(&x, &mut SeededRng::new(4)).unwrap();
    let (z, _) = m.encode_sample(&x, &mut SeededRng::new(4)).unwrap();
    let direct = m.encoder_log_prob(&z, &x).unwrap()[0] - m.marginal_log_prob(&z).unwrap()[0];
    assert!((v - direct).abs() < 1e-12);
}

/// Half-open gates, `z̄(x) = x` on ℝ², marginal equal to the aggregate
/// `N(0, I/2)` of `x ~ N(0, I)`: the estimate targets `I(X;Z) = ln 2`.
fn exact_marginal_model() -> IbModel {
    let cfg = IbConfig {
        hidden: vec![],
        ..small_config(2, 2)
    };
    let mut m = IbModel::new(cfg, 1).unwrap();
    let enc = m.encoder().clone();
    force_output(&mut m.store, enc.m_net(), &[0.0, 0.0]);
    identity_net(&mut m.store, enc.zbar_net());
    let lv = m.marginal().base_log_var();
    m.store.get_mut(lv).fill(0.5f64.ln());
    m
}

#[test]
fn izx_nonnegative_with_exact_marginal() {
    let m = exact_marginal_model();
    let estimates: Vec<f64> = (0..20)
        .map(|s| {
            let x = SeededRng::with_stream(s, 1).normal_matrix(256, 2);
            m.estimate_izx(&x, &mut SeededRng::with_stream(s, 2))
                .unwrap()
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / 20.0;
    assert!(mean > -0.05, "mean {mean}");
    // gates are 1/2 up to the clamp, so the mutual information is ln 2
    assert!((mean - 2f64.ln()).abs() < 0.05, "mean {mean}");
}

#[test]
fn izx_standard_error_scales_with_batch() {
    let m = exact_marginal_model();
    let sd = |b: usize| {
        let v: Vec<f64> = (0..400)
            .map(|r| {
                let x = SeededRng::with_stream(1000 + r, b as u64).normal_matrix(b, 2);
                m.estimate_izx(&x, &mut SeededRng::with_stream(2000 + r, b as u64))
                    .unwrap()
            })
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let (s1, s2, s4) = (sd(64), sd(128), sd(256));
    let r2 = s1 / s2;
    let r4 = s1 / s4;
    assert!((r2 / 2f64.sqrt() - 1.0).abs() < 0.25, "σ(B)/σ(2B) = {r2}");
    assert!((r4 / 2.0 - 1.0).abs() < 0.25, "σ(B)/σ(4B) = {r4}");
}

#[test]
fn ib_loss_recomposes() {
    let x = SeededRng::new(1).normal_matrix(10, 2);
    let y = SeededRng::new(2).normal_matrix(10, 1);
    let xw = SeededRng::new(3).normal_matrix(14, 2);

    let m0 = IbModel::new(
        IbConfig {
            beta: 0.0,
            ..small_config(2, 3)
        },
        9,
    )
    .unwrap();
    let t = m0.ib_loss(&x, &y, &xw, &mut SeededRng::new(5)).unwrap();
    let iyz = m0.estimate_iyz(&x, &y, &mut SeededRng::new(5)).unwrap();
    assert_eq!(t.objective, iyz);

    let m1 = IbModel::new(
        IbConfig {
            beta: 1.0,
            ..small_config(2, 3)
        },
        9,
    )
    .unwrap();
    let t = m1.ib_loss(&x, &y, &xw, &mut SeededRng::new(5)).unwrap();
    let mut rng = SeededRng::new(5);
    let iyz = m1.estimate_iyz(&x, &y, &mut rng).unwrap();
    let ixz = m1.estimate_izx(&xw, &mut rng).unwrap();
    assert!((t.objective - (iyz - ixz)).abs() < 1e-12);
    assert!((t.iyz - iyz).abs() < 1e-12 && (t.ixz - ixz).abs() < 1e-12);
}

#[test]
fn ib_loss_ignores_sample_order() {
    let m = IbModel::new(small_config(2, 3), 10).unwrap();
    let x = SeededRng::new(1).normal_matrix(10, 2);
    let y = SeededRng::new(2).normal_matrix(10, 1);
    let z0 = SeededRng::new(3).normal_matrix(10, 3);
    let xw = SeededRng::new(4).normal_matrix(10, 2);
    let zw = SeededRng::new(5).normal_matrix(10, 3);
    let a = m.ib_terms_with_noise((&x, &y), &z0, &xw, &zw).unwrap();
    let p = SeededRng::new(6).permutation(10);
    let q = SeededRng::new(7).permutation(10);
    let sel = |a: &Array2<f64>, idx: &[usize]| a.select(Axis(0), idx);
    let b = m
        .ib_terms_with_noise(
            (&sel(&x, &p), &sel(&y, &p)),
            &sel(&z0, &p),
            &sel(&xw, &q),
            &sel(&zw, &q),
        )
        .unwrap();
    assert!((a.objective - b.objective).abs() < 1e-12);
}

#[test]
fn translated_targets_leave_objective_unchanged() {
    let mut m = IbModel::new(small_config(2, 3), 12).unwrap();
    let x = SeededRng::new(1).normal_matrix(10, 2);
    let y = SeededRng::new(2).normal_matrix(10, 1);
    let z0 = SeededRng::new(3).normal_matrix(10, 3);
    let xw = SeededRng::new(4).normal_matrix(10, 2);
    let zw = SeededRng::new(5).normal_matrix(10, 3);
    let a = m.ib_terms_with_noise((&x, &y), &z0, &xw, &zw).unwrap();
    let c = 4.0;
    let net = m.decoder().net().clone();
    let last = net.num_layers() - 1;
    m.store.get_mut(net.bias(last))[[0, 0]] += c;
    let b = m
        .ib_terms_with_noise((&x, &(&y + c)), &z0, &xw, &zw)
        .unwrap();
    assert!((a.objective - b.objective).abs() < 1e-12);
    assert_eq!(a.ixz, b.ixz);
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let cfg = IbConfig {
        beta: 0.7,
        hidden: vec![5],
        marginal: FlowConfig {
            n_layers: 2,
            hidden: vec![4],
            ..FlowConfig::realnvp(2)
        },
        ..small_config(1, 2)
    };
    let mut m = IbModel::new(cfg, 13).unwrap();
    let mut rng = SeededRng::new(99);
    for v in m.store.values_mut() {
        v.mapv_inplace(|p| p + 0.2 * rng.normal());
    }
    let x = SeededRng::new(1).normal_matrix(6, 1);
    let y = SeededRng::new(2).normal_matrix(6, 1);
    let z0 = SeededRng::new(3).normal_matrix(6, 2);
    let xw = SeededRng::new(4).normal_matrix(6, 1) * 3.0;
    let zw = SeededRng::new(5).normal_matrix(6, 2);
    let err = crate::netcore::max_fd_rel_error(
        &m.store,
        &|t, b| Ok(m.terms_var(t, b, (&x, &y), &z0, &xw, &zw).0),
        1e-6,
        1e-6,
    );
    assert!(err < 1e-4, "relative error {err}");

    // the descent gradient is the negated objective gradient
    let (_, g) = m.ib_gradient(&x, &y, &xw, &mut SeededRng::new(0)).unwrap();
    assert_eq!(g.len(), m.store.len());
}

#[test]
fn predictive_total_variance() {
    let m = IbModel::new(small_config(1, 3), 14).unwrap();
    let x = array![[-0.5], [0.1], [0.9]];
    let p = m.predict(&x, 64, &mut SeededRng::new(3)).unwrap();
    let mut rng = SeededRng::new(3);
    let mut mus = Vec::new();
    let mut vars = Vec::new();
    for _ in 0..64 {
        let (z, _) = m.encoder().encode_sample(&m.store, &x, &mut rng).unwrap();
        let (mu, ls) = m.decoder().params(&m.store, &z).unwrap();
        mus.push(mu);
        vars.push(ls.mapv(|v| (2.0 * v).exp()));
    }
    for i in 0..3 {
        let mean = mus.iter().map(|a| a[[i, 0]]).sum::<f64>() / 64.0;
        let var_mu = mus.iter().map(|a| (a[[i, 0]] - mean).powi(2)).sum::<f64>() / 64.0;
        let mean_var = vars.iter().map(|a| a[[i, 0]]).sum::<f64>() / 64.0;
        assert!((p.mean[[i, 0]] - mean).abs() < 1e-12);
        assert!((p.std[[i, 0]] - (mean_var + var_mu).sqrt()).abs() < 1e-12);
    }

    let one = m.predict(&x, 1, &mut SeededRng::new(4)).unwrap();
    let (z, _) = m
        .encoder()
        .encode_sample(&m.store, &x, &mut SeededRng::new(4))
        .unwrap();
    let (_, ls) = m.decoder().params(&m.store, &z).unwrap();
    assert!((&one.std - &ls.mapv(f64::exp))
        .iter()
        .all(|v| v.abs() < 1e-12));
    assert!(m.predict(&x, 0, &mut SeededRng::new(4)).is_err());
}

#[test]
fn open_gate_adds_latent_spread() {
    let mut m = IbModel::new(small_config(1, 3), 15).unwrap();
    let enc = m.encoder().clone();
    let x = array![[0.2]];
    force_output(&mut m.store, enc.m_net(), &[100.0; 3]);
    let closed = m.predict(&x, 128, &mut SeededRng::new(1)).unwrap();
    let (z, _) = m
        .encoder()
        .encode_with_noise(&m.store, &x, &Array2::zeros((1, 3)))
        .unwrap();
    let (_, ls) = m.decoder().params(&m.store, &z).unwrap();
    let sigma = ls[[0, 0]].exp();
    assert!((closed.std[[0, 0]] - sigma).abs() < 1e-2 * sigma);
    force_output(&mut m.store, enc.m_net(), &[-100.0; 3]);
    let open = m.predict(&x, 128, &mut SeededRng::new(1)).unwrap();
    assert!(open.std[[0, 0]] > closed.std[[0, 0]]);
}

#[test]
fn checkpoint_round_trip() {
    let m = IbModel::new(small_config(2, 3), 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path(), &crate::netcore::Manifest::new())
        .unwrap();
    let (back, _) = IbModel::load(dir.path()).unwrap();
    assert_eq!(back.config(), m.config());
    let x = SeededRng::new(1).normal_matrix(4, 2);
    assert_eq!(
        m.predict(&x, 8, &mut SeededRng::new(2)).unwrap(),
        back.predict(&x, 8, &mut SeededRng::new(2)).unwrap()
    );
}

#[test]
fn config_validation() {
    assert!(IbModel::new(
        IbConfig {
            beta: 1.5,
            ..small_config(1, 2)
        },
        0
    )
    .is_err());
    assert!(IbModel::new(small_config(1, 1), 0).is_err());
    let mut c = small_config(1, 4);
    c.marginal.dim = 3;
    assert!(IbModel::new(c, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_stay_in_range(seed in 0u64..1000, scale in 0.1f64..1e3) {
        let m = IbModel::new(small_config(2, 3), seed).unwrap();
        let x = SeededRng::new(seed).normal_matrix(8, 2) * scale;
        let (z, gate) = m.encode_sample(&x, &mut SeededRng::new(seed + 1)).unwrap();
        let eps = m.config().gate_eps;
        prop_assert!(gate.iter().all(|&g| g >= eps && g <= 1.0 - eps));
        prop_assert!(m.encoder_log_prob(&z, &x).unwrap().iter().all(|v| v.is_finite()));
    }
}
