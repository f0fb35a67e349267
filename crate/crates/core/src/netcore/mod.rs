//! Differentiable-computation substrate: reverse-mode tape, dense networks,
//! parameter containers, Adam, learning-rate schedules, seeded randomness and
//! checkpoint files.

mod adam;
pub mod checkpoint;
mod dense;
mod params;
mod rng;
mod schedule;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest};
pub(crate) use dense::clamped_sigmoid;
pub use dense::{Activation, DenseNet, Init};
pub use params::{gradient, Bound, ParamId, ParamStore};
pub use rng::SeededRng;
pub use schedule::LrSchedule;
pub use tape::{Gradients, Tape, Var};

/// Max relative discrepancy between analytic gradients of `loss` and central
/// finite differences with step `h`, over every parameter entry.
///
/// Relative error is `|a - fd| / max(|a|, |fd|, floor)`.
#[cfg(test)]
pub(crate) fn max_fd_rel_error(
    store: &ParamStore,
    loss: &dyn Fn(&Tape, &Bound) -> crate::Result<Var>,
    h: f64,
    floor: f64,
) -> f64 {
    let (_, grads) = gradient(store, |t, b| loss(t, b)).unwrap();
    let eval = |s: &ParamStore| {
        let t = Tape::new();
        let b = s.bind_frozen(&t);
        let out = loss(&t, &b).unwrap();
        t.scalar(out)
    };
    let mut worst: f64 = 0.0;
    for p in 0..store.len() {
        let (rows, cols) = store.values()[p].dim();
        for idx in (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))) {
            let mut plus = store.clone();
            let mut minus = store.clone();
            plus.values_mut()[p][idx] += h;
            minus.values_mut()[p][idx] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let an = grads[p][idx];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_net_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(2024);
        let net = DenseNet::new(
            &mut store,
            "n",
            &[2, 8, 1],
            Activation::Tanh,
            Init::XavierNormal,
            &mut rng,
        );
        for v in store.values_mut() {
            v.mapv_inplace(|x| x + 0.1);
        }
        let x = rng.normal_matrix(5, 2);
        let y = rng.normal_matrix(5, 1);
        let loss = |t: &Tape, b: &Bound| {
            let xv = t.constant(x.clone());
            let yv = t.constant(y.clone());
            let out = net.forward_var(t, b, xv);
            Ok(t.mean(t.square(t.sub(out, yv))))
        };
        let err = max_fd_rel_error(&store, &loss, 1e-5, 1e-8);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_reports_non_finite_loss() {
        let mut store = ParamStore::new();
        store.add("p", ndarray::array![[-1.0]]);
        let res = gradient(&store, |t, b| Ok(t.sum(t.ln(b.vars()[0]))));
        assert!(matches!(res, Err(crate::Error::NonFinite { .. })));
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let mut store = ParamStore::new();
            let mut rng = SeededRng::new(5);
            let net = DenseNet::new(
                &mut store,
                "n",
                &[1, 16, 1],
                Activation::Tanh,
                Init::XavierNormal,
                &mut rng,
            );
            let mut adam = AdamState::new(&store);
            let sched = LrSchedule::new(1e-2, 0.5, 10);
            for it in 0..30 {
                let x = rng.normal_matrix(8, 1);
                let (_, g) = gradient(&store, |t, b| {
                    let xv = t.constant(x.clone());
                    let out = net.forward_var(t, b, xv);
                    Ok(t.mean(t.square(t.sub(out, t.tanh(xv)))))
                })
                .unwrap();
                adam.step(&mut store, &g, sched.lr_at(it)).unwrap();
            }
            store
        };
        let (a, b) = (run(), run());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(x
                .iter()
                .zip(y.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
