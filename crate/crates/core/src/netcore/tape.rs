//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! Every value on the tape is a 2-D `f64` array (row = sample, column =
//! feature). Operations are recorded as they are evaluated; [`Tape::backward`]
//! walks the record in reverse and accumulates adjoints. Binary element-wise
//! operations broadcast singleton rows/columns the same way ndarray does, and
//! the backward pass sums adjoints over the broadcast axes.
//!
//! The tape uses interior mutability so that nested expressions such as
//! `t.tanh(t.matmul(x, w))` read naturally.

use std::cell::{Ref, RefCell};

use ndarray::{s, Array2, Axis, Zip};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    SumAll(usize),
    SumCols(usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Vec<usize>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Array2<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[v.0]),
        }
    }

    /// Moves the gradient out, leaving `None` behind.
    pub fn take(&mut self, v: Var) -> Array2<f64> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => Array2::zeros(self.shapes[v.0]),
        }
    }
}

fn unbroadcast(grad: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = grad;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn accumulate(slot: &mut Option<Array2<f64>>, contrib: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &contrib,
        None => *slot = Some(contrib),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input treated as a constant (no gradient is propagated to it).
    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&self, x: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// Borrowed view of a recorded value. Do not hold it across other tape calls.
    pub fn value_ref(&self, v: Var) -> Ref<'_, Array2<f64>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn value(&self, v: Var) -> Array2<f64> {
        self.value_ref(v).clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value_ref(v).dim()
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value_ref(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    fn unary(&self, a: Var, op: Op, f: impl FnOnce(&Array2<f64>) -> Array2<f64>) -> Var {
        let value = f(&self.value_ref(a));
        let needs = self.needs(&[a.0]);
        self.push(value, op, needs)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        op: Op,
        f: impl FnOnce(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
    ) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)
        };
        let needs = self.needs(&[a.0, b.0]);
        self.push(value, op, needs)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::MatMul(a.0, b.0), |x, y| x.dot(y))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    pub fn div(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a.0, b.0), |x, y| x / y)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.unary(a, Op::Neg(a.0), |x| -x)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a.0, c), |x| x * c)
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a.0), |x| x + c)
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a.0), |x| x.mapv(f64::tanh))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a.0), |x| x.mapv(sigmoid))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| x.mapv(|v| v.max(0.0)))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Op::Exp(a.0), |x| x.mapv(f64::exp))
    }

    pub fn ln(&self, a: Var) -> Var {
        self.unary(a, Op::Ln(a.0), |x| x.mapv(f64::ln))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x.mapv(|v| v * v))
    }

    /// Element-wise clamp to `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a.0, lo, hi), |x| x.mapv(|v| v.clamp(lo, hi)))
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&self, a: Var) -> Var {
        self.unary(a, Op::SumAll(a.0), |x| Array2::from_elem((1, 1), x.sum()))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value_ref(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums: `n×k → n×1`.
    pub fn sum_cols(&self, a: Var) -> Var {
        self.unary(a, Op::SumCols(a.0), |x| {
            x.sum_axis(Axis(1)).insert_axis(Axis(1))
        })
    }

    /// Row means: `n×k → n×1`.
    pub fn mean_cols(&self, a: Var) -> Var {
        let k = self.value_ref(a).ncols() as f64;
        let s = self.sum_cols(a);
        self.scale(s, 1.0 / k)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        self.unary(a, Op::SliceCols(a.0, start), |x| {
            x.slice(s![.., start..end]).to_owned()
        })
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = ids.iter().map(|&i| nodes[i].value.view()).collect();
            ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ")
        };
        let needs = self.needs(&ids);
        self.push(value, Op::ConcatCols(ids), needs)
    }

    /// Row gather: output row `r` is input row `idx[r]`. Indices may repeat.
    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Var {
        let value = self.value_ref(a).select(Axis(0), idx);
        let needs = self.needs(&[a.0]);
        self.push(value, Op::GatherRows(a.0, idx.to_vec()), needs)
    }

    /// Reverse sweep from the 1×1 node `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[out.0].value.dim(),
            (1, 1),
            "backward needs a scalar output"
        );
        let shapes: Vec<(usize, usize)> = nodes.iter().map(|n| n.value.dim()).collect();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
        grads[out.0] = Some(Array2::ones((1, 1)));

        for i in (0..=out.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let wants = |j: usize| nodes[j].needs_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        accumulate(&mut grads[*a], g.dot(&nodes[*b].value.t()));
                    }
                    if wants(*b) {
                        accumulate(&mut grads[*b], nodes[*a].value.t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    if wants(*b) {
                        accumulate(&mut grads[*b], unbroadcast(g.clone(), shapes[*b]));
                    }
                    if wants(*a) {
                        accumulate(&mut grads[*a], unbroadcast(g, shapes[*a]));
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*b) {
                        accumulate(&mut grads[*b], unbroadcast(-&g, shapes[*b]));
                    }
                    if wants(*a) {
                        accumulate(&mut grads[*a], unbroadcast(g, shapes[*a]));
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    if wants(*a) {
                        accumulate(&mut grads[*a], unbroadcast(&g * vb, shapes[*a]));
                    }
                    if wants(*b) {
                        accumulate(&mut grads[*b], unbroadcast(&g * va, shapes[*b]));
                    }
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    if wants(*a) {
                        accumulate(&mut grads[*a], unbroadcast(&g / vb, shapes[*a]));
                    }
                    if wants(*b) {
                        let gb = -(&g * va) / (vb * vb);
                        accumulate(&mut grads[*b], unbroadcast(gb, shapes[*b]));
                    }
                }
                Op::Neg(a) => accumulate(&mut grads[*a], -g),
                Op::Scale(a, c) => accumulate(&mut grads[*a], g * *c),
                Op::AddScalar(a) => accumulate(&mut grads[*a], g),
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gv, &y| *gv *= 1.0 - y * y);
                    accumulate(&mut grads[*a], ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gv, &y| *gv *= y * (1.0 - y));
                    accumulate(&mut grads[*a], ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&nodes[*a].value).for_each(|gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    accumulate(&mut grads[*a], ga);
                }
                Op::Exp(a) => accumulate(&mut grads[*a], g * &node.value),
                Op::Ln(a) => accumulate(&mut grads[*a], g / &nodes[*a].value),
                Op::Square(a) => accumulate(&mut grads[*a], g * &nodes[*a].value * 2.0),
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&nodes[*a].value).for_each(|gv, &x| {
                        if x < *lo || x > *hi {
                            *gv = 0.0;
                        }
                    });
                    accumulate(&mut grads[*a], ga);
                }
                Op::SumAll(a) => {
                    accumulate(&mut grads[*a], Array2::from_elem(shapes[*a], g[[0, 0]]));
                }
                Op::SumCols(a) => {
                    let ga = g
                        .broadcast(shapes[*a])
                        .expect("sum_cols broadcast")
                        .to_owned();
                    accumulate(&mut grads[*a], ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(shapes[*a]);
                    let end = start + g.ncols();
                    ga.slice_mut(s![.., *start..end]).assign(&g);
                    accumulate(&mut grads[*a], ga);
                }
                Op::ConcatCols(ids) => {
                    let mut offset = 0;
                    for &j in ids {
                        let w = shapes[j].1;
                        if wants(j) {
                            accumulate(
                                &mut grads[j],
                                g.slice(s![.., offset..offset + w]).to_owned(),
                            );
                        }
                        offset += w;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let mut ga = Array2::zeros(shapes[*a]);
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(r);
                    }
                    accumulate(&mut grads[*a], ga);
                }
            }
        }
        Gradients { grads, shapes }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
