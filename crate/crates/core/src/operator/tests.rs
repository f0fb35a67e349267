use ndarray::{s, Array1, Array2, Axis};

use super::model::PairBatch;
use super::*;
use crate::datagen::{build_operator_dataset, OperatorDataConfig, OperatorDataset, PdeConfig};
use crate::flows::FlowConfig;
use crate::netcore::{Activation, DenseNet, Init, LrSchedule, ParamStore, SeededRng};
use crate::Error;

const NX: usize = 12;

fn small_pde() -> PdeConfig {
    PdeConfig {
        nx: NX,
        nt: NX,
        ..PdeConfig::default()
    }
}

fn small_data(n: usize, seed: u64) -> OperatorDataset {
    let cfg = OperatorDataConfig {
        pde: small_pde(),
        ..OperatorDataConfig::new(n, 0.5, 0.01)
    };
    build_operator_dataset(&cfg, seed).unwrap()
}

fn quick(seed: u64, iterations: usize) -> OperatorTrainConfig {
    let mut cfg = OperatorTrainConfig::new(NX, seed);
    cfg.model = cfg.model.with_latent_dim(4);
    cfg.model.encoder_hidden = vec![16];
    cfg.model.head_hidden = vec![16];
    cfg.model.features = 8;
    cfg.model.marginal = FlowConfig {
        n_layers: 2,
        hidden: vec![16],
        ..FlowConfig::realnvp(4)
    };
    cfg.iterations = iterations;
    cfg.batch_size = 16;
    cfg.queries_per_function = 20;
    cfg.gin_fit.iterations = 20;
    cfg
}

fn tiny_model(seed: u64) -> OperatorModel {
    train_operator(&small_data(24, seed), &quick(seed, 0))
        .unwrap()
        .model
}

/// Single-layer net whose output is the constant `bias`.
fn constant_net(store: &mut ParamStore, name: &str, input: usize, bias: &[f64]) -> DenseNet {
    let net = DenseNet::new(
        store,
        name,
        &[input, bias.len()],
        Activation::Tanh,
        Init::Zeros,
        &mut SeededRng::new(0),
    );
    store
        .get_mut(net.bias(0))
        .row_mut(0)
        .assign(&Array1::from(bias.to_vec()));
    net
}

fn random_head(store: &mut ParamStore, features: usize, seed: u64) -> DeepONetHead {
    DeepONetHead::new(
        store,
        "head",
        3,
        2,
        &[10, 10],
        features,
        Activation::Tanh,
        1e-4,
        &mut SeededRng::new(seed),
    )
}

fn samples_from(
    data: &OperatorDataset,
    rows: &[usize],
    picks: &[Vec<usize>],
) -> Vec<OperatorSample> {
    rows.iter()
        .zip(picks)
        .map(|(&i, p)| OperatorSample::from_dataset(data, i, p))
        .collect()
}

#[test]
fn scalar_dot_product_example() {
    let mut store = ParamStore::new();
    let branch = constant_net(&mut store, "b", 2, &[2.0, 0.0]);
    let trunk = constant_net(&mut store, "t", 2, &[3.0, 1.0]);
    let head = DeepONetHead::from_nets(branch, trunk, 1e-4);
    assert_eq!(head.features(), 1);
    let q = Array2::from_shape_vec((2, 2), vec![0.1, 0.2, 0.7, 0.9]).unwrap();
    let (mu, ls) = onet_eval(&head, &store, Array1::from(vec![0.3, -1.0]).view(), &q).unwrap();
    assert_eq!(mu.to_vec(), vec![6.0, 6.0]);
    assert_eq!(ls.to_vec(), vec![0.0, 0.0]);
}

#[test]
fn zero_branch_gives_standard_normal() {
    let mut store = ParamStore::new();
    let branch = constant_net(&mut store, "b", 3, &[0.0; 6]);
    let trunk = DenseNet::new(
        &mut store,
        "t",
        &[2, 8, 6],
        Activation::Tanh,
        Init::XavierNormal,
        &mut SeededRng::new(1),
    );
    let head = DeepONetHead::from_nets(branch, trunk, 1e-4);
    let q = SeededRng::new(2).normal_matrix(5, 2);
    let (mu, ls) = onet_eval(&head, &store, Array1::ones(3).view(), &q).unwrap();
    assert!(mu.iter().all(|&v| v == 0.0));
    assert!(ls.iter().all(|&v| v == 0.0));
}

#[test]
fn matches_reference_loop() {
    let mut store = ParamStore::new();
    let head = random_head(&mut store, 3, 5);
    let mut rng = SeededRng::new(6);
    let z = rng.normal_matrix(4, 3);
    let q = rng.normal_matrix(7, 2);
    let (mu, ls) = head.eval(&store, &z, &q).unwrap();
    let b = head.branch().forward_batch(&store, &z).unwrap();
    let t = head.trunk().forward_batch(&store, &q).unwrap();
    for r in 0..4 {
        for p in 0..7 {
            let (mut m, mut l) = (0.0, 0.0);
            for i in 0..3 {
                m += b[[r, i]] * t[[p, i]];
                l += b[[r, 3 + i]] * t[[p, 3 + i]];
            }
            let l = l.max(1e-4f64.ln());
            assert!((mu[[r, p]] - m).abs() < 1e-12);
            assert!((ls[[r, p]] - l).abs() < 1e-12);
        }
    }
}

#[test]
fn one_branch_evaluation_per_latent() {
    let mut store = ParamStore::new();
    let head = random_head(&mut store, 4, 7);
    let mut rng = SeededRng::new(8);
    let z = rng.normal_matrix(5, 3);
    let q = rng.normal_matrix(50, 2);
    let before = head.branch_evaluations();
    let (mu, ls) = head.eval(&store, &z, &q).unwrap();
    assert_eq!(head.branch_evaluations() - before, 5);
    for r in 0..5 {
        for p in 0..50 {
            let single = q.slice(s![p..p + 1, ..]).to_owned();
            let (m, l) = onet_eval(&head, &store, z.row(r), &single).unwrap();
            assert!((mu[[r, p]] - m[0]).abs() < 1e-12);
            assert!((ls[[r, p]] - l[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn taped_pairs_match_direct_evaluation() {
    let mut store = ParamStore::new();
    let head = random_head(&mut store, 4, 9);
    let mut rng = SeededRng::new(10);
    let z = rng.normal_matrix(3, 3);
    let q = rng.normal_matrix(6, 2);
    let owner = [0, 0, 1, 2, 2, 2, 1];
    let point = [0, 5, 5, 1, 2, 3, 4];
    let tape = crate::netcore::Tape::new();
    let bound = store.bind_frozen(&tape);
    let (mu_v, ls_v) = head.eval_pairs_var(
        &tape,
        &bound,
        tape.constant(z.clone()),
        tape.constant(q.clone()),
        &owner,
        &point,
    );
    let (mu, ls) = head.eval(&store, &z, &q).unwrap();
    let (mu_v, ls_v) = (tape.value(mu_v), tape.value(ls_v));
    for (k, (&o, &p)) in owner.iter().zip(&point).enumerate() {
        assert!((mu_v[[k, 0]] - mu[[o, p]]).abs() < 1e-12);
        assert!((ls_v[[k, 0]] - ls[[o, p]]).abs() < 1e-12);
    }
}

#[test]
fn query_permutation_permutes_outputs() {
    let model = tiny_model(1);
    let data = small_data(2, 50);
    let grid = data.query_grid();
    let perm = SeededRng::new(3).permutation(grid.nrows());
    let shuffled = grid.select(Axis(0), &perm);
    let u = data.u.row(0).to_vec();
    let a = predict_field(&model, &u, &grid, 8, &mut SeededRng::new(4)).unwrap();
    let b = predict_field(&model, &u, &shuffled, 8, &mut SeededRng::new(4)).unwrap();
    assert_eq!(a.gate, b.gate);
    for (k, &p) in perm.iter().enumerate() {
        assert!((b.mean[k] - a.mean[p]).abs() < 1e-12);
        assert!((b.std[k] - a.std[p]).abs() < 1e-12);
    }
}

#[test]
fn pair_batch_shares_repeated_points() {
    let data = small_data(3, 2);
    let scale = crate::regression::Standardizer::identity(NX);
    let picks = vec![vec![0, 5, 7], vec![5, 9], vec![7, 0]];
    let batch = PairBatch::from_samples(&samples_from(&data, &[0, 1, 2], &picks), &scale).unwrap();
    assert_eq!(batch.query.nrows(), 4);
    assert_eq!(batch.owner, vec![0, 0, 0, 1, 1, 2, 2]);
    assert_eq!(batch.point, vec![0, 1, 2, 1, 3, 2, 0]);
    let grid = data.query_grid();
    let direct = PairBatch::from_grid(&data, &grid, &[0, 1, 2], &picks, &scale);
    assert_eq!(direct.query, batch.query);
    assert_eq!(direct.point, batch.point);
    assert_eq!(direct.s, batch.s);
    assert_eq!(direct.u, batch.u);
}

/// Latents the loss draws for `batch` from a clone of `rng`.
fn batch_latents(model: &OperatorModel, batch: &[OperatorSample], rng: &SeededRng) -> Array2<f64> {
    let mut rng = rng.clone();
    let u = Array2::from_shape_fn((batch.len(), NX), |(b, j)| batch[b].u_sensors[j]);
    let z0 = rng.normal_matrix(batch.len(), model.ib.config().latent_dim);
    model
        .ib
        .encoder()
        .encode_with_noise(&model.ib.store, &model.u_scale.apply(&u), &z0)
        .unwrap()
        .0
}

fn loss_inputs(m: usize) -> (OperatorDataset, Vec<OperatorSample>, Array2<f64>) {
    let data = small_data(6, 11);
    let mut rng = SeededRng::new(12);
    let picks: Vec<Vec<usize>> = (0..4)
        .map(|_| rng.permutation(NX * NX)[..m].to_vec())
        .collect();
    let batch = samples_from(&data, &[0, 1, 2, 3], &picks);
    let wide = data.u.slice(s![2..6, ..]).mapv(|v| v * 1.3);
    (data, batch, wide)
}

fn mean_decoder_term(model: &OperatorModel, batch: &[OperatorSample], z: &Array2<f64>) -> f64 {
    batch
        .iter()
        .enumerate()
        .map(|(b, smp)| {
            model
                .ib
                .decoder_log_prob(smp, &z.row(b).to_owned())
                .unwrap()
        })
        .sum::<f64>()
        / batch.len() as f64
}

#[test]
fn beta_zero_leaves_decoder_likelihood() {
    let mut model = tiny_model(2);
    model.ib = {
        let mut cfg = model.ib.config().clone();
        cfg.beta = 0.0;
        let mut ib = IbOnetModel::new(cfg, 2).unwrap();
        ib.store = model.ib.store.clone();
        ib
    };
    let (_, batch, wide) = loss_inputs(10);
    let rng = SeededRng::new(13);
    let z = batch_latents(&model, &batch, &rng);
    let t = model.ibonet_loss(&batch, &wide, &mut rng.clone()).unwrap();
    assert_eq!(t.objective, t.iyz);
    let expect = mean_decoder_term(&model, &batch, &z);
    assert!((t.iyz - expect).abs() < 1e-10 * expect.abs().max(1.0));
}

#[test]
fn single_point_reduces_to_decoder_log_prob() {
    let model = tiny_model(3);
    let (_, batch, wide) = loss_inputs(1);
    let batch = &batch[..1];
    let rng = SeededRng::new(14);
    let z = batch_latents(&model, batch, &rng);
    let t = model.ibonet_loss(batch, &wide, &mut rng.clone()).unwrap();
    let direct = model
        .ib
        .decoder_log_prob(&batch[0], &z.row(0).to_owned())
        .unwrap();
    assert!((t.iyz - direct).abs() < 1e-12 * direct.abs().max(1.0));
}

#[test]
fn objective_recomposes_from_independent_terms() {
    let model = tiny_model(4);
    let (_, batch, wide) = loss_inputs(15);
    let rng = SeededRng::new(15);
    let t = model.ibonet_loss(&batch, &wide, &mut rng.clone()).unwrap();

    let z = batch_latents(&model, &batch, &rng);
    let iyz = mean_decoder_term(&model, &batch, &z);
    let mut r = rng.clone();
    let d = model.ib.config().latent_dim;
    r.normal_matrix(batch.len(), d);
    let z0_wide = r.normal_matrix(wide.nrows(), d);
    let enc = model.ib.encoder();
    let ws = model.u_scale.apply(&wide);
    let (zw, _) = enc
        .encode_with_noise(&model.ib.store, &ws, &z0_wide)
        .unwrap();
    let log_q = enc.log_prob(&model.ib.store, &zw, &ws).unwrap();
    let log_e = model
        .ib
        .marginal()
        .log_prob_batch(&model.ib.store, &zw)
        .unwrap();
    let ixz = (&log_q - &log_e).mean().unwrap();
    let beta = model.ib.config().beta;
    let obj = iyz - beta * ixz;
    assert!(
        (t.iyz - iyz).abs() < 1e-12 * iyz.abs().max(1.0),
        "{} vs {iyz}",
        t.iyz
    );
    assert!(
        (t.ixz - ixz).abs() < 1e-12 * ixz.abs().max(1.0),
        "{} vs {ixz}",
        t.ixz
    );
    assert!((t.objective - obj).abs() < 1e-12 * obj.abs().max(1.0));
}

/// Joint Gaussian log-density through a Cholesky factor of `cov`.
fn joint_gaussian_log_prob(x: &[f64], mean: &[f64], cov: &Array2<f64>) -> f64 {
    let n = x.len();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                l[[i, i]] = (cov[[i, i]] - dot).sqrt();
            } else {
                l[[i, j]] = (cov[[i, j]] - dot) / l[[j, j]];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let dot: f64 = (0..i).map(|k| l[[i, k]] * y[k]).sum();
        y[i] = (x[i] - mean[i] - dot) / l[[i, i]];
    }
    let logdet: f64 = (0..n).map(|i| 2.0 * l[[i, i]].ln()).sum();
    -0.5 * (y.iter().map(|v| v * v).sum::<f64>()
        + logdet
        + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[test]
fn decoder_term_is_a_diagonal_joint_gaussian() {
    let model = tiny_model(5);
    let (_, batch, _) = loss_inputs(12);
    let z = Array1::from(vec![0.3, -0.2, 1.1, 0.0]);
    let smp = &batch[1];
    let (mu, ls) = model
        .ib
        .head()
        .eval(
            &model.ib.store,
            &z.clone().insert_axis(Axis(0)),
            &smp.query_points,
        )
        .unwrap();
    let cov = Array2::from_diag(&ls.row(0).mapv(|v| (2.0 * v).exp()));
    let joint = joint_gaussian_log_prob(&smp.s_values, mu.row(0).as_slice().unwrap(), &cov);
    let diag = model.ib.decoder_log_prob(smp, &z).unwrap();
    assert!(
        (joint - diag).abs() < 1e-10 * diag.abs().max(1.0),
        "{joint} vs {diag}"
    );
}

#[test]
fn non_finite_output_names_the_sample() {
    let model = tiny_model(6);
    let (_, mut batch, wide) = loss_inputs(5);
    batch[2].s_values[3] = f64::NAN;
    let err = model
        .ibonet_loss(&batch, &wide, &mut SeededRng::new(0))
        .unwrap_err();
    assert!(err.is_divergence());
    assert!(err.to_string().contains("sample 2"), "{err}");
}

#[test]
fn rejects_mismatched_inputs() {
    let model = tiny_model(7);
    let (_, mut batch, wide) = loss_inputs(5);
    let narrow = wide.slice(s![.., ..NX - 1]).to_owned();
    assert!(model
        .ibonet_loss(&batch, &narrow, &mut SeededRng::new(0))
        .is_err());
    batch[0].s_values.pop();
    assert!(model
        .ibonet_loss(&batch, &wide, &mut SeededRng::new(0))
        .is_err());
    assert!(matches!(
        model.ibonet_loss(&[], &wide, &mut SeededRng::new(0)),
        Err(Error::EmptyData(_))
    ));

    let data = small_data(4, 1);
    let mut cfg = quick(0, 1);
    cfg.queries_per_function = NX * NX + 1;
    assert!(matches!(
        train_operator(&data, &cfg),
        Err(Error::InvalidParameter(_))
    ));
    let cfg = quick(0, 1);
    let mut wrong = cfg.clone();
    wrong.model.sensors = NX + 1;
    assert!(train_operator(&data, &wrong).is_err());
    assert!(predict_field(
        &model,
        &[0.0; NX],
        &data.query_grid(),
        0,
        &mut SeededRng::new(0)
    )
    .is_err());
}

#[test]
fn defaults_follow_the_operator_settings() {
    let cfg = OperatorTrainConfig::new(100, 9);
    assert_eq!(cfg.iterations, 600);
    assert_eq!(cfg.batch_size, 256);
    assert_eq!(cfg.queries_per_function, 100);
    assert_eq!(cfg.schedule, LrSchedule::new(1e-3, 0.1, 200));
    assert_eq!(cfg.tau, 1.4);
    assert_eq!(cfg.gin_fit.iterations, 100);
    assert_eq!(cfg.gin_fit.seed, 11);
    let m = &cfg.model;
    assert_eq!((m.latent_dim, m.features, m.beta), (64, 128, 0.3));
    assert_eq!(m.encoder_hidden, vec![128; 3]);
    assert_eq!(m.head_hidden, vec![128; 3]);
    assert_eq!(m.marginal.dim, 64);
}

#[test]
fn training_is_deterministic() {
    let data = small_data(20, 3);
    let a = train_operator(&data, &quick(5, 6)).unwrap();
    let b = train_operator(&data, &quick(5, 6)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model.ib.store.values(), b.model.ib.store.values());
    let c = train_operator(&data, &quick(6, 6)).unwrap();
    assert_ne!(
        a.trace.last().unwrap().objective,
        c.trace.last().unwrap().objective
    );
}

#[test]
fn constant_dataset_is_learned() {
    let mut data = small_data(1, 4);
    let n = 32;
    data.u = data.u.broadcast((n, NX)).unwrap().to_owned();
    data.s = data.s.broadcast((n, NX, NX)).unwrap().to_owned();
    data.s_clean = data.s_clean.broadcast((n, NX, NX)).unwrap().to_owned();
    let target = Array1::from_iter(data.s.slice(s![0, .., ..]).iter().copied());
    let grid = data.query_grid();
    let errors = |iters: usize| {
        let mut cfg = quick(2, iters);
        cfg.model.head_hidden = vec![64; 3];
        cfg.model.features = 16;
        cfg.schedule = LrSchedule::constant(3e-3);
        let model = train_operator(&data, &cfg).unwrap().model;
        let u = data.u.row(0).to_vec();
        let p = predict_field(&model, &u, &grid, 16, &mut SeededRng::new(0)).unwrap();
        let err = (&p.mean - &target).mapv(f64::abs);
        (err.fold(0.0f64, |a, &b| a.max(b)), err.mean().unwrap())
    };
    let trend: Vec<(f64, f64)> = [0, 100, 600].into_iter().map(errors).collect();
    for w in trend.windows(2) {
        assert!(w[1].1 < w[0].1, "mean error {trend:?}");
    }
    assert!(trend[2].0 < trend[0].0, "max error {trend:?}");
    assert!(trend[2].1 < 0.5 * trend[0].1, "mean error {trend:?}");
}

#[test]
fn saturated_gate_makes_draws_agree() {
    let mut model = tiny_model(8);
    let m_net = model.ib.encoder().m_net().clone();
    let last = m_net.num_layers() - 1;
    model.ib.store.get_mut(m_net.weight(last)).fill(0.0);
    model.ib.store.get_mut(m_net.bias(last)).fill(30.0);
    let data = small_data(1, 20);
    let grid = data.query_grid();
    let u = data.u.row(0).to_vec();
    let one = predict_field(&model, &u, &grid, 1, &mut SeededRng::new(1)).unwrap();
    let many = predict_field(&model, &u, &grid, 64, &mut SeededRng::new(2)).unwrap();
    assert!(one.gate > 0.998);
    let scale = many.mean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = (&one.mean - &many.mean)
        .mapv(f64::abs)
        .fold(0.0f64, |a, &b| a.max(b));
    assert!(diff < 1e-3 * scale, "{diff} vs {scale}");
}

#[test]
fn std_fields_are_non_negative() {
    let model = train_operator(&small_data(20, 5), &quick(9, 5))
        .unwrap()
        .model;
    let data = small_data(3, 21);
    let preds = predict_fields(
        &model,
        &data.u,
        &data.query_grid(),
        4,
        &mut SeededRng::new(0),
    )
    .unwrap();
    assert_eq!(preds.len(), 3);
    for p in preds {
        assert!(p.std.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert!(p.gate > 0.0 && p.gate < 1.0);
    }
}

#[test]
fn save_load_keeps_predictions() {
    let trained = train_operator(&small_data(20, 6), &quick(10, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trained.model.save(dir.path()).unwrap();
    let back = OperatorModel::load(dir.path()).unwrap();
    assert_eq!(back.config, trained.model.config);
    let data = small_data(2, 22);
    let grid = data.query_grid();
    let a = predict_fields(&trained.model, &data.u, &grid, 4, &mut SeededRng::new(3)).unwrap();
    let b = predict_fields(&back, &data.u, &grid, 4, &mut SeededRng::new(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn length_study_rows_and_csv() {
    let model = tiny_model(11);
    let mut cfg = LengthStudyConfig::new(vec![0.2, 0.5], 3, 7);
    cfg.pde = small_pde();
    cfg.samples = 4;
    let rows = rmse_by_length(&model, &cfg).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!((r.evaluated, r.failures), (3, 0));
        assert!(r.rmse.is_finite() && r.rmse > 0.0 && r.mean_std > 0.0);
    }
    assert_eq!(rows, rmse_by_length(&model, &cfg).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lengths.csv");
    write_length_csv(&path, &rows).unwrap();
    let (header, table) = crate::datagen::read_csv(&path).unwrap();
    assert_eq!(
        header,
        [
            "length",
            "rmse",
            "mean_std",
            "mean_gate",
            "evaluated",
            "failures"
        ]
    );
    assert_eq!(table[[1, 0]], 0.5);
    assert_eq!(table[[0, 1]], rows[0].rmse);

    cfg.lengths = vec![0.0];
    assert!(rmse_by_length(&model, &cfg).is_err());
}

#[test]
fn field_and_cut_csv_layout() {
    let model = tiny_model(12);
    let pde = small_pde();
    let data = small_data(1, 30);
    let grid = data.query_grid();
    let p = predict_field(
        &model,
        &data.u.row(0).to_vec(),
        &grid,
        2,
        &mut SeededRng::new(0),
    )
    .unwrap();
    let reference = Array1::from_iter(data.s_clean.iter().copied());
    let dir = tempfile::tempdir().unwrap();

    let field = dir.path().join("field.csv");
    write_field_csv(&field, &grid, &p, Some(&reference)).unwrap();
    let (header, table) = crate::datagen::read_csv(&field).unwrap();
    assert_eq!(header, ["x", "t", "mean", "std", "reference"]);
    assert_eq!(table.nrows(), NX * NX);
    assert_eq!(table.column(2).to_vec(), p.mean.to_vec());

    let cuts = dir.path().join("cuts.csv");
    write_cuts_csv(&cuts, &pde, &p, None).unwrap();
    let (header, table) = crate::datagen::read_csv(&cuts).unwrap();
    assert_eq!(header, ["x", "t", "mean", "std"]);
    assert_eq!(table.nrows(), 3 * NX);
    let dt = pde.dt();
    for (c, t) in CUT_TIMES.iter().enumerate() {
        let got = table[[c * NX, 1]];
        assert!((got - t).abs() <= 0.5 * dt + 1e-12, "{got} vs {t}");
        assert!(table
            .slice(s![c * NX..(c + 1) * NX, 1])
            .iter()
            .all(|&v| v == got));
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut cfg = IbOnetConfig::new(3).with_latent_dim(2);
    cfg.encoder_hidden = vec![4];
    cfg.head_hidden = vec![5];
    cfg.features = 3;
    cfg.marginal = FlowConfig {
        n_layers: 2,
        hidden: vec![4],
        ..FlowConfig::realnvp(2)
    };
    cfg.beta = 0.6;
    let mut m = IbOnetModel::new(cfg, 21).unwrap();
    let mut rng = SeededRng::new(22);
    for v in m.store.values_mut() {
        v.mapv_inplace(|p| p + 0.2 * rng.normal());
    }
    let batch = PairBatch {
        u: rng.normal_matrix(3, 3),
        query: rng.normal_matrix(4, 2),
        owner: vec![0, 0, 1, 2, 2],
        point: vec![0, 3, 1, 3, 2],
        s: rng.normal_matrix(5, 1),
    };
    let z0 = rng.normal_matrix(3, 2);
    let uw = rng.normal_matrix(4, 3) * 2.0;
    let zw = rng.normal_matrix(4, 2);
    let err = crate::netcore::max_fd_rel_error(
        &m.store,
        &|t, b| Ok(m.terms_var(t, b, &batch, &z0, &uw, &zw).0),
        1e-6,
        1e-6,
    );
    assert!(err < 1e-4, "relative error {err}");
    let direct = m.terms_with_noise(&batch, &uw, &z0, &zw).unwrap();
    assert!(direct.objective.is_finite());
}
