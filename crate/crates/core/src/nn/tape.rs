//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every operation appends a node holding its output value; [`Tape::gradients`]
//! walks the tape backwards once. A tape is built per forward pass and
//! dropped afterwards.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::NnError;

pub const LEAKY_SLOPE: f64 = 0.01;

/// Largest representable value below 4, the supremum of squared distances
/// between points of the open unit ball.
pub const MAX_SQ_DIST: f64 = 3.999_999_999_999_999_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    LeakyRelu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Act(Var, Activation),
    Exp(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterMean { src: Var, targets: Vec<usize>, counts: Vec<usize> },
    Sum(Var),
    Mean(Var),
    GatherElems(Var, Vec<usize>),
    SegmentLogSoftmax(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    PairSqDist(Var, Vec<(usize, usize)>),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err<T>(msg: String) -> Result<T, NnError> {
    Err(NnError::Shape(msg))
}

/// Soft point of a raw embedding row: `tanh(|x|) * x / |x|`.
pub(crate) fn soft_point(x: &[f64]) -> (f64, Vec<f64>) {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rho = r.tanh();
    let dir: Vec<f64> = if r > 0.0 {
        x.iter().map(|v| v / r).collect()
    } else {
        let mut e = vec![0.0; x.len()];
        e[0] = 1.0;
        e
    };
    (rho, dir)
}

/// Law of cosines in polar form, kept in `[0, 4)`. Evaluated as
/// `(rho_i - rho_j)^2 + rho_i rho_j |u_i - u_j|^2`, which is the same
/// quantity without the cancellation between nearby points.
pub(crate) fn polar_sq_dist(rho_i: f64, u_i: &[f64], rho_j: f64, u_j: &[f64]) -> f64 {
    let chord: f64 = u_i.iter().zip(u_j).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = (rho_i - rho_j) * (rho_i - rho_j) + rho_i * rho_j * chord;
    d.clamp(0.0, MAX_SQ_DIST)
}

pub(crate) fn log_softmax_in_place(seg: &mut [f64]) {
    let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + seg.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for x in seg.iter_mut() {
        *x -= lse;
    }
}

/// Coefficients `(a, b)` of the Jacobian `a I + b x x^T` of the soft point
/// map at radius `r`.
fn soft_point_jacobian(r: f64) -> (f64, f64) {
    if r < 1e-4 {
        let r2 = r * r;
        (1.0 - r2 / 3.0, -2.0 / 3.0 + 8.0 * r2 / 15.0)
    } else {
        let t = r.tanh();
        let sech2 = 1.0 - t * t;
        (t / r, (r * sech2 - t) / (r * r * r))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Side of every breakpoint of the piecewise-linear ops on the tape
    /// (leaky-relu, clamp, minimum, the distance clamp). Two evaluations with
    /// equal patterns lie in the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Act(x, Activation::LeakyRelu) => {
                    out.extend(self.value(*x).data().iter().map(|&v| v > 0.0));
                }
                Op::Clamp(x, lo, hi) => {
                    for &v in self.value(*x).data() {
                        out.extend([v < *lo, v > *hi]);
                    }
                }
                Op::Minimum(a, b) => {
                    let (a, b) = (self.value(*a).data(), self.value(*b).data());
                    out.extend(a.iter().zip(b).map(|(x, y)| x <= y));
                }
                Op::PairSqDist(..) => {
                    out.extend(node.value.data().iter().map(|&d| d > 0.0 && d < MAX_SQ_DIST));
                }
                _ => {}
            }
        }
        out
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite(name.to_string()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var, NnError> {
        self.push(value, Op::Leaf, "leaf")
    }

    /// Records a parameter so that [`Tape::backward`] writes its gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.nodes.push(Node { value, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        if av.shape().len() != 2 || bv.shape().len() != 2 || bv.rows() != k {
            return shape_err(format!("matmul {:?} x {:?}", av.shape(), bv.shape()));
        }
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, w) in row.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                    *o += x * w;
                }
            }
        }
        self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), "matmul")
    }

    /// Adds a length-`m` bias to every row of an `n x m` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.cols() != bv.len() || xv.shape().len() != 2 {
            return shape_err(format!("add_bias {:?} + {:?}", xv.shape(), bv.shape()));
        }
        let m = xv.cols();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let shape = xv.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), "add_bias")
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
        name: &str,
    ) -> Result<Var, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return shape_err(format!("{name} {:?} vs {:?}", av.shape(), bv.shape()));
        }
        let out: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = av.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, f64::min, Op::Minimum(a, b), "minimum")
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op, name: &str) -> Result<Var, NnError> {
        let av = self.value(a);
        let out: Vec<f64> = av.data().iter().map(|x| f(*x)).collect();
        let shape = av.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op, name)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NnError> {
        self.map(a, |x| c * x, Op::Scale(a, c), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, NnError> {
        self.map(a, |x| x + c, Op::AddScalar(a), "add_scalar")
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var, NnError> {
        if act == Activation::Linear {
            return Ok(a);
        }
        self.map(a, |x| act.apply(x), Op::Act(a, act), "activation")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NnError> {
        self.map(a, f64::exp, Op::Exp(a), "exp")
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NnError> {
        self.map(a, |x| x * x, Op::Square(a), "square")
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NnError> {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi), "clamp")
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return shape_err("concat_cols with differing row counts".into());
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec()), "concat")
    }

    /// `out[k] = a[idx[k]]`, row-wise.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NnError> {
        let av = self.value(a);
        let (n, m) = (av.rows(), av.cols());
        if idx.iter().any(|&i| i >= n) {
            return shape_err(format!("gather_rows index out of range for {n} rows"));
        }
        let mut out = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            out.extend_from_slice(av.row(i));
        }
        self.push(Tensor::matrix(idx.len(), m, out)?, Op::GatherRows(a, idx.to_vec()), "gather_rows")
    }

    /// Mean of the rows of `src` grouped by `targets` into `n` output rows;
    /// rows with no contributors are zero.
    pub fn scatter_mean(&mut self, src: Var, targets: &[usize], n: usize) -> Result<Var, NnError> {
        let sv = self.value(src);
        let m = sv.cols();
        if targets.len() != sv.rows() || targets.iter().any(|&t| t >= n) {
            return shape_err("scatter_mean targets do not match source rows".into());
        }
        let mut counts = vec![0usize; n];
        let mut out = vec![0.0; n * m];
        for (k, &t) in targets.iter().enumerate() {
            counts[t] += 1;
            for (o, v) in out[t * m..(t + 1) * m].iter_mut().zip(sv.row(k)) {
                *o += v;
            }
        }
        for (t, &c) in counts.iter().enumerate() {
            if c > 1 {
                for o in &mut out[t * m..(t + 1) * m] {
                    *o /= c as f64;
                }
            }
        }
        let op = Op::ScatterMean { src, targets: targets.to_vec(), counts };
        self.push(Tensor::matrix(n, m, out)?, op, "scatter_mean")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NnError> {
        let av = self.value(a);
        if av.is_empty() {
            return shape_err("mean of empty tensor".into());
        }
        let s = av.data().iter().sum::<f64>() / av.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), "mean")
    }

    /// Flat gather: `out[k] = a.data[idx[k]]`.
    pub fn gather_elems(&mut self, a: Var, idx: &[usize]) -> Result<Var, NnError> {
        let av = self.value(a);
        if idx.iter().any(|&i| i >= av.len()) {
            return shape_err("gather_elems index out of range".into());
        }
        let out = idx.iter().map(|&i| av.data()[i]).collect();
        self.push(Tensor::vector(out), Op::GatherElems(a, idx.to_vec()), "gather_elems")
    }

    /// Log-softmax over contiguous segments of a flat tensor. `offsets` has
    /// one more entry than there are segments; segments must be non-empty.
    pub fn segment_log_softmax(&mut self, a: Var, offsets: &[usize]) -> Result<Var, NnError> {
        let av = self.value(a);
        if offsets.first() != Some(&0)
            || offsets.last() != Some(&av.len())
            || offsets.windows(2).any(|w| w[1] <= w[0])
        {
            return shape_err("segment offsets must cover the input with non-empty segments".into());
        }
        let mut out = av.data().to_vec();
        for w in offsets.windows(2) {
            log_softmax_in_place(&mut out[w[0]..w[1]]);
        }
        let shape = av.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::SegmentLogSoftmax(a, offsets.to_vec()), "log_softmax")
    }

    /// Sums of contiguous segments of a flat tensor; `offsets` as for
    /// [`Tape::segment_log_softmax`] except that empty segments are allowed.
    pub fn segment_sum(&mut self, a: Var, offsets: &[usize]) -> Result<Var, NnError> {
        let av = self.value(a);
        if offsets.first() != Some(&0)
            || offsets.last() != Some(&av.len())
            || offsets.windows(2).any(|w| w[1] < w[0])
        {
            return shape_err("segment offsets must cover the input".into());
        }
        let out = offsets.windows(2).map(|w| av.data()[w[0]..w[1]].iter().sum()).collect();
        self.push(Tensor::vector(out), Op::SegmentSum(a, offsets.to_vec()), "segment_sum")
    }

    /// Squared distances between the soft points of rows `i` and `j` of a
    /// raw embedding matrix, for each requested pair.
    pub fn pair_sq_dist(&mut self, x: Var, pairs: &[(usize, usize)]) -> Result<Var, NnError> {
        let xv = self.value(x);
        let n = xv.rows();
        if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
            return shape_err("pair_sq_dist index out of range".into());
        }
        let soft: Vec<(f64, Vec<f64>)> = (0..n).map(|i| soft_point(xv.row(i))).collect();
        let out = pairs
            .iter()
            .map(|&(i, j)| {
                if i == j {
                    0.0
                } else {
                    polar_sq_dist(soft[i].0, &soft[i].1, soft[j].0, &soft[j].1)
                }
            })
            .collect();
        self.push(Tensor::vector(out), Op::PairSqDist(x, pairs.to_vec()), "pair_sq_dist")
    }

    /// Gradients of scalar `loss` with respect to leaves and parameters.
    /// Intermediate gradients are released as soon as they are propagated.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>, NnError> {
        if !self.value(loss).is_scalar() {
            return Err(NnError::NotScalar(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut seed = self.value(loss).clone();
        seed.data_mut()[0] = 1.0;
        grads[loss.0] = Some(seed);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let send = |v: Var, t: Tensor, grads: &mut Vec<Option<Tensor>>| match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot => *slot = Some(t),
            };
            let like = |v: Var, data: Vec<f64>| {
                Tensor::new(self.value(v).shape().to_vec(), data).expect("gradient shape")
            };
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        let grow = &gd[i * m..(i + 1) * m];
                        for p in 0..k {
                            da[i * k + p] =
                                grow.iter().zip(&bd[p * m..(p + 1) * m]).map(|(x, y)| x * y).sum();
                        }
                    }
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        let grow = &gd[i * m..(i + 1) * m];
                        for p in 0..k {
                            let x = ad[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += x * gv;
                            }
                        }
                    }
                    send(*a, like(*a, da), &mut grads);
                    send(*b, like(*b, db), &mut grads);
                }
                Op::AddBias(x, b) => {
                    let m = self.value(*b).len();
                    let mut db = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (o, v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    send(*b, like(*b, db), &mut grads);
                    send(*x, g, &mut grads);
                }
                Op::Add(a, b) => {
                    send(*a, like(*a, g.data().to_vec()), &mut grads);
                    send(*b, like(*b, g.into_data()), &mut grads);
                }
                Op::Sub(a, b) => {
                    send(*a, like(*a, g.data().to_vec()), &mut grads);
                    send(*b, like(*b, g.data().iter().map(|x| -x).collect()), &mut grads);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let da = g.data().iter().zip(bv).map(|(x, y)| x * y).collect();
                    let db = g.data().iter().zip(av).map(|(x, y)| x * y).collect();
                    send(*a, like(*a, da), &mut grads);
                    send(*b, like(*b, db), &mut grads);
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let mut da = vec![0.0; av.len()];
                    let mut db = vec![0.0; av.len()];
                    for k in 0..av.len() {
                        if av[k] <= bv[k] {
                            da[k] = g.data()[k];
                        } else {
                            db[k] = g.data()[k];
                        }
                    }
                    send(*a, like(*a, da), &mut grads);
                    send(*b, like(*b, db), &mut grads);
                }
                Op::Scale(a, c) => {
                    send(*a, like(*a, g.data().iter().map(|x| c * x).collect()), &mut grads);
                }
                Op::AddScalar(a) => send(*a, g, &mut grads),
                Op::Act(a, act) => {
                    let (xv, yv) = (self.value(*a).data(), node.value.data());
                    let d = g
                        .data()
                        .iter()
                        .zip(xv.iter().zip(yv))
                        .map(|(gv, (x, y))| gv * act.derivative(*x, *y))
                        .collect();
                    send(*a, like(*a, d), &mut grads);
                }
                Op::Exp(a) => {
                    let d = g.data().iter().zip(node.value.data()).map(|(x, y)| x * y).collect();
                    send(*a, like(*a, d), &mut grads);
                }
                Op::Square(a) => {
                    let xv = self.value(*a).data();
                    let d = g.data().iter().zip(xv).map(|(gv, x)| 2.0 * x * gv).collect();
                    send(*a, like(*a, d), &mut grads);
                }
                Op::Clamp(a, lo, hi) => {
                    let xv = self.value(*a).data();
                    let d = g
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(gv, x)| if *x >= *lo && *x <= *hi { *gv } else { 0.0 })
                        .collect();
                    send(*a, like(*a, d), &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                        }
                        offset += c;
                        send(p, like(p, d), &mut grads);
                    }
                }
                Op::GatherRows(a, idx) => {
                    let m = self.value(*a).cols();
                    let mut d = vec![0.0; self.value(*a).len()];
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, v) in d[i * m..(i + 1) * m].iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    send(*a, like(*a, d), &mut grads);
                }
                Op::ScatterMean { src, targets, counts } => {
                    let m = g.cols();
                    let mut d = Vec::with_capacity(targets.len() * m);
                    for &t in targets {
                        let c = counts[t] as f64;
                        d.extend(g.row(t).iter().map(|v| v / c));
                    }
                    send(*src, like(*src, d), &mut grads);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    send(*a, like(*a, vec![g.item(); n]), &mut grads);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    send(*a, like(*a, vec![g.item() / n as f64; n]), &mut grads);
                }
                Op::GatherElems(a, idx) => {
                    let mut d = vec![0.0; self.value(*a).len()];
                    for (k, &i) in idx.iter().enumerate() {
                        d[i] += g.data()[k];
                    }
                    send(*a, like(*a, d), &mut grads);
                }
                Op::SegmentLogSoftmax(a, offsets) => {
                    let y = node.value.data();
                    let mut d = g.data().to_vec();
                    for w in offsets.windows(2) {
                        let gsum: f64 = g.data()[w[0]..w[1]].iter().sum();
                        for k in w[0]..w[1] {
                            d[k] -= y[k].exp() * gsum;
                        }
                    }
                    send(*a, like(*a, d), &mut grads);
                }
                Op::SegmentSum(a, offsets) => {
                    let mut d = vec![0.0; self.value(*a).len()];
                    for (s, w) in offsets.windows(2).enumerate() {
                        d[w[0]..w[1]].fill(g.data()[s]);
                    }
                    send(*a, like(*a, d), &mut grads);
                }
                Op::PairSqDist(x, pairs) => {
                    let xv = self.value(*x);
                    let (n, dim) = (xv.rows(), xv.cols());
                    let points: Vec<Vec<f64>> = (0..n)
                        .map(|i| {
                            let (rho, u) = soft_point(xv.row(i));
                            u.iter().map(|c| rho * c).collect()
                        })
                        .collect();
                    // gradient with respect to the soft points first
                    let mut dp = vec![0.0; n * dim];
                    for (k, &(i, j)) in pairs.iter().enumerate() {
                        let dist = node.value.data()[k];
                        if i == j || dist <= 0.0 || dist >= MAX_SQ_DIST {
                            continue;
                        }
                        let gk = g.data()[k];
                        for c in 0..dim {
                            let diff = 2.0 * (points[i][c] - points[j][c]) * gk;
                            dp[i * dim + c] += diff;
                            dp[j * dim + c] -= diff;
                        }
                    }
                    let mut dx = vec![0.0; n * dim];
                    for i in 0..n {
                        let row = xv.row(i);
                        let r = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                        let (a, b) = soft_point_jacobian(r);
                        let gp = &dp[i * dim..(i + 1) * dim];
                        let dot: f64 = row.iter().zip(gp).map(|(x, g)| x * g).sum();
                        for c in 0..dim {
                            dx[i * dim + c] = a * gp[c] + b * row[c] * dot;
                        }
                    }
                    send(*x, like(*x, dx), &mut grads);
                }
            }
        }
        Ok(grads)
    }

    /// Backpropagates `loss` and accumulates parameter gradients into
    /// `store`. Parameters not reachable from `loss` receive zeros.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), NnError> {
        let grads = self.gradients(loss)?;
        store.ensure_grads();
        for (node, g) in self.nodes.iter().zip(grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.accumulate_grad(*id, &g);
            }
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to a leaf or parameter.
    pub fn grad_of(&self, loss: Var, wrt: Var) -> Result<Tensor, NnError> {
        let mut grads = self.gradients(loss)?;
        Ok(grads[wrt.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.value(wrt).shape())))
    }
}
