//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Every operation appends a node whose inputs have strictly smaller indices,
//! so walking the node list backwards is a reverse topological order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{gemm_nt, gemm_tn, Tensor2D};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    LeakyRelu,
    Sigmoid,
    Log,
    Neg,
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x + 1 x cols` row broadcast (bias).
    AddRow(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, S),
    LeakyRelu(Var, S),
    Sigmoid(Var),
    Log(Var),
    Grl(Var, S),
    Sum(Var),
    /// Per-row `-log softmax(logits)[label]`; keeps the softmax for backward.
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor2D<S>,
    },
    /// Per-row binary cross-entropy of `sigmoid(logit)` against a 0/1 target.
    BceLogits { logits: Var, targets: Vec<S> },
    /// Per-row pick of one column.
    Pick { x: Var, cols: Vec<usize> },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor2D<S>,
    op: Op<S>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor2D<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor2D<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `v`, or zeros shaped like `like` when nothing flowed there.
    pub fn wrt_or_zeros(&self, v: Var, like: (usize, usize)) -> Tensor2D<S> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor2D::zeros(like.0, like.1))
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2D<S> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor2D<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable leaf (parameter or input whose gradient is wanted).
    pub fn leaf(&mut self, value: Tensor2D<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor2D<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor2D<S> {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor2D::new(x.rows(), x.cols(), data).expect("shapes checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |p, q| p + q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xs, rs) = (self.value(x).shape(), self.value(row).shape());
        if rs.0 != 1 || rs.1 != xs.1 {
            return Err(Error::dim("add_row", format!("{xs:?} + {rs:?}")));
        }
        let mut value = self.value(x).clone();
        let cols = xs.1;
        let bias = self.value(row).data().to_vec();
        for chunk in value.data_mut().chunks_mut(cols.max(1)) {
            for (o, &b) in chunk.iter_mut().zip(&bias) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |p, q| p * q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| -v);
        let rg = self.rg(a);
        self.push(value, Op::Neg(a), rg)
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let value = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: S) -> Var {
        let value = self
            .value(a)
            .map(|v| if v > S::zero() { v } else { v * slope });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|v| !(**v > S::zero())) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let value = self.value(a).map(|v| v.ln());
        let rg = self.rg(a);
        Ok(self.push(value, Op::Log(a), rg))
    }

    /// Dispatches one of the named elementwise operations.
    pub fn elementwise(&mut self, op: Elementwise, inputs: &[Var], slope: S) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Input(format!(
                "{op:?} takes {arity} operand(s), got {}",
                inputs.len()
            )));
        }
        match op {
            Elementwise::Add => self.add(inputs[0], inputs[1]),
            Elementwise::Mul => self.mul(inputs[0], inputs[1]),
            Elementwise::LeakyRelu => Ok(self.leaky_relu(inputs[0], slope)),
            Elementwise::Sigmoid => Ok(self.sigmoid(inputs[0])),
            Elementwise::Log => self.log(inputs[0]),
            Elementwise::Neg => Ok(self.neg(inputs[0])),
        }
    }

    /// Gradient reversal: identity forward, gradient times `-scale` backward.
    pub fn grl(&mut self, a: Var, scale: S) -> Result<Var> {
        if !(scale >= S::zero()) {
            return Err(Error::Domain {
                op: "grl",
                detail: format!("negative scale {scale}"),
            });
        }
        let value = self.value(a).clone();
        let rg = self.rg(a);
        Ok(self.push(value, Op::Grl(a, scale), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor2D::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, S::one() / S::lit(n as f64))
    }

    /// Per-row softmax cross-entropy; returns an `rows x 1` column of losses.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (rows, cols) = x.shape();
        if labels.len() != rows {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("{} labels for {rows} rows", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::Index {
                op: "softmax_cross_entropy",
                index: bad,
                bound: cols,
            });
        }
        let mut probs = Tensor2D::zeros(rows, cols);
        let mut losses = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row(r);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut denom = S::zero();
            for (c, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs.set(r, c, e);
                denom += e;
            }
            for c in 0..cols {
                let p = probs.get(r, c) / denom;
                probs.set(r, c, p);
            }
            // -log p_label = log(denom) - (x_label - max)
            losses.push(denom.ln() - (row[labels[r]] - max));
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor2D::column_vector(losses),
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Per-row BCE of `sigmoid(logit)` vs target in {0, 1}, stable for large |logit|.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[S]) -> Result<Var> {
        let x = self.value(logits);
        if x.cols() != 1 || x.rows() != targets.len() {
            return Err(Error::dim(
                "bce_with_logits",
                format!("{:?} logits for {} targets", x.shape(), targets.len()),
            ));
        }
        let losses = x
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_logit(z, y))
            .collect();
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor2D::column_vector(losses),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Picks `x[r, cols[r]]` for every row; returns `rows x 1`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if cols.len() != v.rows() {
            return Err(Error::dim(
                "pick",
                format!("{} indices for {} rows", cols.len(), v.rows()),
            ));
        }
        let mut out = Vec::with_capacity(cols.len());
        for (r, &c) in cols.iter().enumerate() {
            if c >= v.cols() {
                return Err(Error::Index {
                    op: "pick",
                    index: c,
                    bound: v.cols(),
                });
            }
            out.push(v.get(r, c));
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor2D::column_vector(out),
            Op::Pick {
                x,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    ///
    /// Gradient slots are freshly zeroed on every call.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(format!(
                "backward on node {} but the tape holds {} nodes",
                loss.0,
                self.nodes.len()
            )));
        }
        let out = &self.nodes[loss.0].value;
        if out.shape() != (1, 1) {
            return Err(Error::dim(
                "backward",
                format!("loss must be 1x1, got {:?}", out.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor2D<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2D::scalar(S::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<S>, g: &Tensor2D<S>, grads: &mut [Option<Tensor2D<S>>]) {
        let mut acc = |v: Var, delta: Tensor2D<S>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                if self.rg(*a) {
                    let mut da = Tensor2D::zeros(n, k);
                    gemm_nt(g.data(), bv.data(), da.data_mut(), n, m, k);
                    acc(*a, da);
                }
                if self.rg(*b) {
                    let mut db = Tensor2D::zeros(k, m);
                    gemm_tn(av.data(), g.data(), db.data_mut(), n, k, m);
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(x, row) => {
                acc(*x, g.clone());
                if self.rg(*row) {
                    let cols = g.cols();
                    let mut db = Tensor2D::zeros(1, cols);
                    for r in 0..g.rows() {
                        for (o, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*row, db);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, hadamard(g, bv));
                }
                if self.rg(*b) {
                    acc(*b, hadamard(g, av));
                }
            }
            Op::Neg(a) => acc(*a, g.map(|v| -v)),
            Op::Scale(a, s) => {
                let s = *s;
                acc(*a, g.map(|v| v * s));
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv > S::zero() { gv } else { gv * *slope })
                    .collect();
                acc(*a, Tensor2D::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| gv * yv * (S::one() - yv))
                    .collect();
                acc(*a, Tensor2D::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| gv / xv)
                    .collect();
                acc(*a, Tensor2D::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::Grl(a, s) => {
                let s = *s;
                acc(*a, g.map(|v| -(v * s)));
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Tensor2D::filled(r, c, g.data()[0]));
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let mut d = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    let gr = g.get(r, 0);
                    for c in 0..d.cols() {
                        let onehot = if c == label { S::one() } else { S::zero() };
                        d.set(r, c, gr * (d.get(r, c) - onehot));
                    }
                }
                acc(*logits, d);
            }
            Op::BceLogits { logits, targets } => {
                let z = self.value(*logits);
                let data = z
                    .data()
                    .iter()
                    .zip(targets)
                    .zip(g.data())
                    .map(|((&zv, &y), &gv)| gv * (sigmoid(zv) - y))
                    .collect();
                acc(*logits, Tensor2D::new(z.rows(), 1, data).expect("shape"));
            }
            Op::Pick { x, cols } => {
                let (r, c) = self.value(*x).shape();
                let mut d = Tensor2D::zeros(r, c);
                for (row, &col) in cols.iter().enumerate() {
                    d.set(row, col, g.get(row, 0));
                }
                acc(*x, d);
            }
        }
    }
}

fn hadamard<S: Scalar>(a: &Tensor2D<S>, b: &Tensor2D<S>) -> Tensor2D<S> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor2D::new(a.rows(), a.cols(), data).expect("shape")
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `-y log sigmoid(z) - (1 - y) log(1 - sigmoid(z))` without overflow.
#[inline]
pub fn bce_logit<S: Scalar>(z: S, y: S) -> S {
    z.max(S::zero()) - z * y + (S::one() + (-z.abs()).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::scalar(0.0));
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).item().unwrap(), 0.5);
    }

    #[test]
    fn leaky_relu_negative_side() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::scalar(-1.0));
        let y = t.leaky_relu(x, 0.01);
        assert_eq!(t.value(y).item().unwrap(), -0.01);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::row_vector(vec![1.0, 0.0]));
        assert!(matches!(t.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::row_vector(vec![0.0; 4]));
        let l = t.softmax_cross_entropy(x, &[0]).unwrap();
        assert!((t.value(l).item().unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::row_vector(vec![1000.0, 0.0]));
        let l = t.softmax_cross_entropy(x, &[0]).unwrap();
        let v = t.value(l).item().unwrap();
        assert!(v.is_finite() && v.abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::row_vector(vec![0.0; 3]));
        assert!(matches!(
            t.softmax_cross_entropy(x, &[3]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn backward_on_foreign_node_is_state_error() {
        let t = Tape::<f64>::new();
        assert!(matches!(t.backward(Var(0)), Err(Error::State(_))));
    }

    #[test]
    fn grl_forward_identity_and_zero_scale() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::row_vector(vec![1.5, -2.0]));
        let r = t.grl(x, 1.0).unwrap();
        assert_eq!(t.value(r), t.value(x));

        let r0 = t.grl(x, 0.0).unwrap();
        let s = t.sum(r0);
        let g = t.backward(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(t.grl(x, -1.0).is_err());
    }

    #[test]
    fn gradient_slots_reset_between_passes() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::row_vector(vec![1.0, 2.0]));
        let y = t.mul(x, x).unwrap();
        let s = t.sum(y);
        let g1 = t.backward(s).unwrap();
        let g2 = t.backward(s).unwrap();
        assert_eq!(g1.get(x), g2.get(x));
        assert_eq!(g1.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor2D::scalar(2.0));
        let c = t.constant(Tensor2D::scalar(3.0));
        let y = t.mul(x, c).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item().unwrap(), 3.0);
        assert!(g.get(c).is_none());
    }
}
