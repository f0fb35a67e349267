use ndarray::{concatenate, s, Array1, Array2, Axis};

use crate::netcore::{Activation, Bound, DenseNet, Init, ParamStore, SeededRng, Tape, Var};
use crate::Result;

/// Affine coupling layer.
///
/// The passive block (size `split`) passes through unchanged and conditions a
/// scale `s` and shift `t` for the active block (size `dim - split`):
/// `x_a = z_a ⊙ exp(s(z_p)) + t(z_p)`. With `parity == false` the passive block
/// is the leading `split` coordinates; with `parity == true` it is the
/// trailing `split` coordinates, so alternating layers update both halves.
///
/// Raw scale outputs are squashed to `bound · tanh(raw / bound)`. In
/// volume-preserving mode the squashed scales are additionally centred per
/// sample, so every layer has log-determinant exactly zero.
#[derive(Debug, Clone)]
pub struct CouplingLayer {
    dim: usize,
    split: usize,
    parity: bool,
    s_net: DenseNet,
    t_net: DenseNet,
    volume_preserving: bool,
    scale_bound: f64,
}

pub(crate) struct CouplingSpec<'a> {
    pub dim: usize,
    pub split: usize,
    pub parity: bool,
    pub hidden: &'a [usize],
    pub activation: Activation,
    pub volume_preserving: bool,
    pub scale_bound: f64,
}

impl CouplingSpec<'_> {
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.split];
        w.extend_from_slice(self.hidden);
        w.push(self.dim - self.split);
        w
    }
}

impl CouplingLayer {
    pub(crate) fn new(
        store: &mut ParamStore,
        prefix: &str,
        spec: &CouplingSpec<'_>,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(
            spec.split >= 1 && spec.split < spec.dim,
            "need 1 <= split < dim"
        );
        let widths = spec.widths();
        // Zeroed output layers make a fresh layer the identity map.
        let s_net = DenseNet::new(
            store,
            &format!("{prefix}.s"),
            &widths,
            spec.activation,
            Init::XavierZeroLast,
            rng,
        );
        let t_net = DenseNet::new(
            store,
            &format!("{prefix}.t"),
            &widths,
            spec.activation,
            Init::XavierZeroLast,
            rng,
        );
        Self::from_parts(spec, s_net, t_net)
    }

    pub(crate) fn attach(
        store: &ParamStore,
        prefix: &str,
        spec: &CouplingSpec<'_>,
    ) -> Result<Self> {
        let widths = spec.widths();
        let s_net = DenseNet::attach(store, &format!("{prefix}.s"), &widths, spec.activation)?;
        let t_net = DenseNet::attach(store, &format!("{prefix}.t"), &widths, spec.activation)?;
        Ok(Self::from_parts(spec, s_net, t_net))
    }

    fn from_parts(spec: &CouplingSpec<'_>, s_net: DenseNet, t_net: DenseNet) -> Self {
        Self {
            dim: spec.dim,
            split: spec.split,
            parity: spec.parity,
            s_net,
            t_net,
            volume_preserving: spec.volume_preserving,
            scale_bound: spec.scale_bound,
        }
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn parity(&self) -> bool {
        self.parity
    }

    pub fn s_net(&self) -> &DenseNet {
        &self.s_net
    }

    pub fn t_net(&self) -> &DenseNet {
        &self.t_net
    }

    /// Column ranges `(passive, active)`.
    fn blocks(&self) -> ((usize, usize), (usize, usize)) {
        if self.parity {
            let a = self.dim - self.split;
            ((a, self.dim), (0, a))
        } else {
            ((0, self.split), (self.split, self.dim))
        }
    }

    fn join_var(&self, tape: &Tape, passive: Var, active: Var) -> Var {
        if self.parity {
            tape.concat_cols(&[active, passive])
        } else {
            tape.concat_cols(&[passive, active])
        }
    }

    fn scales_var(&self, tape: &Tape, bound: &Bound, passive: Var) -> Var {
        let raw = self.s_net.forward_var(tape, bound, passive);
        let b = self.scale_bound;
        let s = tape.scale(tape.tanh(tape.scale(raw, 1.0 / b)), b);
        if self.volume_preserving {
            tape.sub(s, tape.mean_cols(s))
        } else {
            s
        }
    }

    /// `z → x`; returns the per-sample log-determinant (`n×1`).
    pub fn forward_var(&self, tape: &Tape, bound: &Bound, z: Var) -> (Var, Var) {
        let ((p0, p1), (a0, a1)) = self.blocks();
        let zp = tape.slice_cols(z, p0, p1);
        let za = tape.slice_cols(z, a0, a1);
        let s = self.scales_var(tape, bound, zp);
        let t = self.t_net.forward_var(tape, bound, zp);
        let xa = tape.add(tape.mul(za, tape.exp(s)), t);
        (self.join_var(tape, zp, xa), tape.sum_cols(s))
    }

    /// `x → z`; returns the per-sample log-determinant of the inverse map.
    pub fn inverse_var(&self, tape: &Tape, bound: &Bound, x: Var) -> (Var, Var) {
        let ((p0, p1), (a0, a1)) = self.blocks();
        let xp = tape.slice_cols(x, p0, p1);
        let xa = tape.slice_cols(x, a0, a1);
        let s = self.scales_var(tape, bound, xp);
        let t = self.t_net.forward_var(tape, bound, xp);
        let za = tape.mul(tape.sub(xa, t), tape.exp(tape.neg(s)));
        (self.join_var(tape, xp, za), tape.neg(tape.sum_cols(s)))
    }

    fn scales(&self, store: &ParamStore, passive: &Array2<f64>) -> Result<Array2<f64>> {
        let b = self.scale_bound;
        let mut s = self.s_net.forward_batch(store, passive)?;
        s.mapv_inplace(|v| b * (v / b).tanh());
        if self.volume_preserving {
            let mean = s.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
            s -= &mean;
        }
        Ok(s)
    }

    fn join(&self, passive: &Array2<f64>, active: &Array2<f64>) -> Array2<f64> {
        let parts = if self.parity {
            [active.view(), passive.view()]
        } else {
            [passive.view(), active.view()]
        };
        concatenate(Axis(1), &parts).unwrap()
    }

    pub(crate) fn forward_batch(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let ((p0, p1), (a0, a1)) = self.blocks();
        let zp = z.slice(s![.., p0..p1]).to_owned();
        let za = z.slice(s![.., a0..a1]);
        let sc = self.scales(store, &zp)?;
        let t = self.t_net.forward_batch(store, &zp)?;
        let xa = &za * &sc.mapv(f64::exp) + &t;
        Ok((self.join(&zp, &xa), sc.sum_axis(Axis(1))))
    }

    pub(crate) fn inverse_batch(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let ((p0, p1), (a0, a1)) = self.blocks();
        let xp = x.slice(s![.., p0..p1]).to_owned();
        let xa = x.slice(s![.., a0..a1]);
        let sc = self.scales(store, &xp)?;
        let t = self.t_net.forward_batch(store, &xp)?;
        let za = (&xa - &t) * &sc.mapv(|v| (-v).exp());
        Ok((self.join(&xp, &za), -sc.sum_axis(Axis(1))))
    }
}
