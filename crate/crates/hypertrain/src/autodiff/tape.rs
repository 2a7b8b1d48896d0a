use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::{sigmoid, softplus, Real};
use crate::rng::RngStream;

use super::tensor::Tensor;

pub type NodeId = usize;

/// Whether stochastic layers (dropout, input noise) are live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How the operands of an elementwise op line up.
///
/// Broadcasting is deliberately narrow: identical shapes, a single-element
/// operand, or a trailing-shape operand repeated across the other side's
/// leading (batch) extent. Anything richer is rejected so shape bugs
/// surface at the call site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    LhsScalar,
    RhsScalar,
    /// lhs has the trailing shape of rhs and is repeated across rhs rows.
    LhsRow,
    /// rhs has the trailing shape of lhs and is repeated across lhs rows.
    RhsRow,
}

fn broadcast_kind(lhs: &[usize], rhs: &[usize]) -> Option<Bcast> {
    if lhs == rhs {
        return Some(Bcast::Same);
    }
    let ln: usize = lhs.iter().product();
    let rn: usize = rhs.iter().product();
    if rn == 1 {
        return Some(Bcast::RhsScalar);
    }
    if ln == 1 {
        return Some(Bcast::LhsScalar);
    }
    if lhs.len() == rhs.len() + 1 && &lhs[1..] == rhs {
        return Some(Bcast::RhsRow);
    }
    if rhs.len() == lhs.len() + 1 && &rhs[1..] == lhs {
        return Some(Bcast::LhsRow);
    }
    None
}

/// Snapshot of an op input: value buffer, shape, and tape handle if tracked.
#[derive(Clone)]
struct Arg<F> {
    data: Arc<Vec<F>>,
    shape: Vec<usize>,
    node: Option<NodeId>,
}

impl<F: Real> Arg<F> {
    fn of(t: &Tensor<F>) -> Self {
        Arg {
            data: t.data_arc(),
            shape: t.shape().to_vec(),
            node: t.node(),
        }
    }

    fn len(&self) -> usize {
        self.data.len()
    }
}

enum Op<F> {
    Leaf,
    MatMul {
        a: Arg<F>,
        b: Arg<F>,
    },
    Add {
        a: Arg<F>,
        b: Arg<F>,
        bc: Bcast,
    },
    Mul {
        a: Arg<F>,
        b: Arg<F>,
        bc: Bcast,
    },
    Relu {
        x: Arg<F>,
    },
    Softplus {
        x: Arg<F>,
    },
    Mean {
        x: Arg<F>,
    },
    Sum {
        x: Arg<F>,
    },
    Slice {
        x: Arg<F>,
        start: usize,
    },
    SliceCols {
        x: Arg<F>,
        start: usize,
        out_cols: usize,
    },
    Reshape {
        x: Arg<F>,
    },
    RowwiseAffine {
        x: Arg<F>,
        w: Arg<F>,
        b: Arg<F>,
    },
    MseLoss {
        pred: Arg<F>,
        target: Arg<F>,
    },
    CrossEntropy {
        logits: Arg<F>,
        labels: Arc<Vec<usize>>,
        softmax: Arc<Vec<F>>,
    },
}

struct Node<F> {
    op: Op<F>,
}

/// Gradients produced by [`Tape::backward`], indexed by tape handle.
///
/// Leaves that the root does not reach simply have no entry; their
/// gradient is zero.
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, t: &Tensor<F>) -> Option<&[F]> {
        let id = t.node()?;
        self.grads.get(id)?.as_deref()
    }

    /// Move the gradient buffer out, avoiding a copy. Zeros if unreached.
    pub fn take(&mut self, t: &Tensor<F>) -> Vec<F> {
        t.node()
            .and_then(|id| self.grads.get_mut(id).and_then(Option::take))
            .unwrap_or_else(|| vec![F::zero(); t.numel()])
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
    }
}

/// Records primitive operations for one forward pass and replays them in
/// reverse to accumulate exact adjoints.
///
/// A tape and its tracked tensors stay on one thread; distinct tapes are
/// fully independent. Ops whose inputs are all untracked constants compute
/// eagerly and record nothing, so evaluation-only passes pay no tape cost.
pub struct Tape<F> {
    nodes: RefCell<Vec<Node<F>>>,
    strict: bool,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            strict: false,
        }
    }

    /// `strict = true` rejects non-finite op inputs with a numeric error.
    pub fn with_strict(strict: bool) -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            strict,
        }
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register a tracked leaf; `backward` reports a gradient for it.
    pub fn leaf(&self, data: Vec<F>, shape: &[usize]) -> Result<Tensor<F>> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::contract(format!(
                "leaf data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        let id = self.push(Op::Leaf);
        Tensor::from_arc(Arc::new(data), shape, Some(id))
    }

    fn push(&self, op: Op<F>) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op });
        nodes.len() - 1
    }

    fn finish(&self, op: Op<F>, shape: &[usize], data: Vec<F>, tracked: bool) -> Result<Tensor<F>> {
        let node = if tracked { Some(self.push(op)) } else { None };
        Tensor::from_arc(Arc::new(data), shape, node)
    }

    fn check_finite(&self, op: &'static str, inputs: &[&Tensor<F>]) -> Result<()> {
        if !self.strict {
            return Ok(());
        }
        for t in inputs {
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("{op}: non-finite input value")));
            }
        }
        Ok(())
    }

    // ── primitives ──────────────────────────────────────────────────

    /// `(m,k) @ (k,n) -> (m,n)`, rank-2 only.
    pub fn matmul(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        self.check_finite("matmul", &[a, b])?;
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let out = matmul_raw(a.data(), b.data(), m, k, n);
        let tracked = a.is_tracked() || b.is_tracked();
        self.finish(
            Op::MatMul {
                a: Arg::of(a),
                b: Arg::of(b),
            },
            &[m, n],
            out,
            tracked,
        )
    }

    /// Elementwise add with leading-batch / scalar broadcasting.
    pub fn add(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        self.elementwise("add", a, b, |x, y| x + y, true)
    }

    /// Elementwise multiply with leading-batch / scalar broadcasting.
    pub fn mul(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        self.elementwise("mul", a, b, |x, y| x * y, false)
    }

    fn elementwise(
        &self,
        name: &'static str,
        a: &Tensor<F>,
        b: &Tensor<F>,
        f: impl Fn(F, F) -> F,
        is_add: bool,
    ) -> Result<Tensor<F>> {
        let bc = broadcast_kind(a.shape(), b.shape()).ok_or(Error::ShapeMismatch {
            op: name,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })?;
        self.check_finite(name, &[a, b])?;
        let (av, bv) = (a.data(), b.data());
        let out: Vec<F> = match bc {
            Bcast::Same => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::RhsScalar => {
                let y = bv[0];
                av.iter().map(|&x| f(x, y)).collect()
            }
            Bcast::LhsScalar => {
                let x = av[0];
                bv.iter().map(|&y| f(x, y)).collect()
            }
            Bcast::RhsRow => av
                .chunks_exact(bv.len())
                .flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| f(x, y)))
                .collect(),
            Bcast::LhsRow => bv
                .chunks_exact(av.len())
                .flat_map(|row| av.iter().zip(row).map(|(&x, &y)| f(x, y)))
                .collect(),
        };
        let shape = match bc {
            Bcast::Same | Bcast::RhsScalar | Bcast::RhsRow => a.shape().to_vec(),
            Bcast::LhsScalar | Bcast::LhsRow => b.shape().to_vec(),
        };
        let tracked = a.is_tracked() || b.is_tracked();
        let args = (Arg::of(a), Arg::of(b));
        let op = if is_add {
            Op::Add {
                a: args.0,
                b: args.1,
                bc,
            }
        } else {
            Op::Mul {
                a: args.0,
                b: args.1,
                bc,
            }
        };
        self.finish(op, &shape, out, tracked)
    }

    /// Multiply by a plain constant scalar.
    pub fn scale(&self, x: &Tensor<F>, c: F) -> Result<Tensor<F>> {
        self.mul(x, &Tensor::scalar(c))
    }

    pub fn relu(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_finite("relu", &[x])?;
        let out: Vec<F> = x.data().iter().map(|&v| v.max(F::zero())).collect();
        self.finish(Op::Relu { x: Arg::of(x) }, x.shape(), out, x.is_tracked())
    }

    pub fn softplus(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_finite("softplus", &[x])?;
        let out: Vec<F> = x.data().iter().map(|&v| softplus(v)).collect();
        self.finish(Op::Softplus { x: Arg::of(x) }, x.shape(), out, x.is_tracked())
    }

    /// Inverted dropout: in train mode surviving entries are scaled by
    /// `1/keep` so evaluation needs no rescaling. Eval mode is the identity.
    pub fn dropout(
        &self,
        x: &Tensor<F>,
        keep: f64,
        mode: Mode,
        stream: &mut RngStream,
    ) -> Result<Tensor<F>> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::contract(format!(
                "dropout keep-probability must be in (0, 1], got {keep}"
            )));
        }
        if mode == Mode::Eval || keep == 1.0 {
            return Ok(x.clone());
        }
        let inv = F::from_f64(1.0 / keep);
        let mask: Vec<F> = (0..x.numel())
            .map(|_| if stream.bernoulli(keep) { inv } else { F::zero() })
            .collect();
        let mask = Tensor::constant(mask, x.shape())?;
        self.mul(x, &mask)
    }

    /// Mean over all entries, producing a `[1]` tensor.
    pub fn mean(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_finite("mean", &[x])?;
        let n = F::from_f64(x.numel() as f64);
        let s: F = x.data().iter().copied().sum();
        self.finish(Op::Mean { x: Arg::of(x) }, &[1], vec![s / n], x.is_tracked())
    }

    /// Sum over all entries, producing a `[1]` tensor.
    pub fn sum(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_finite("sum", &[x])?;
        let s: F = x.data().iter().copied().sum();
        self.finish(Op::Sum { x: Arg::of(x) }, &[1], vec![s], x.is_tracked())
    }

    /// Contiguous range of a rank-1 tensor.
    pub fn slice(&self, x: &Tensor<F>, start: usize, len: usize) -> Result<Tensor<F>> {
        if x.rank() != 1 || start + len > x.numel() || len == 0 {
            return Err(Error::contract(format!(
                "slice [{start}, {}) out of bounds for rank-{} tensor of shape {:?}",
                start + len,
                x.rank(),
                x.shape()
            )));
        }
        let out = x.data()[start..start + len].to_vec();
        self.finish(
            Op::Slice {
                x: Arg::of(x),
                start,
            },
            &[len],
            out,
            x.is_tracked(),
        )
    }

    /// Column range `[start, start+len)` of every row of a rank-2 tensor.
    pub fn slice_cols(&self, x: &Tensor<F>, start: usize, len: usize) -> Result<Tensor<F>> {
        if x.rank() != 2 || len == 0 || start + len > x.shape()[1] {
            return Err(Error::contract(format!(
                "slice_cols [{start}, {}) out of bounds for tensor of shape {:?}",
                start + len,
                x.shape()
            )));
        }
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let xv = x.data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv[r * cols + start..r * cols + start + len]);
        }
        self.finish(
            Op::SliceCols {
                x: Arg::of(x),
                start,
                out_cols: len,
            },
            &[rows, len],
            out,
            x.is_tracked(),
        )
    }

    pub fn reshape(&self, x: &Tensor<F>, shape: &[usize]) -> Result<Tensor<F>> {
        let numel: usize = shape.iter().product();
        if numel != x.numel() {
            return Err(Error::contract(format!(
                "reshape {:?} -> {:?} changes element count",
                x.shape(),
                shape
            )));
        }
        let out = x.to_vec();
        self.finish(Op::Reshape { x: Arg::of(x) }, shape, out, x.is_tracked())
    }

    /// Per-row affine map: row `r` of `x` is multiplied by its own weight
    /// matrix, stored flat in row `r` of `w` (row-major `in×out`), plus its
    /// own bias row from `b`. Shapes: `x (B,in)`, `w (B,in·out)`, `b (B,out)`
    /// -> `(B,out)`. This is the one-weight-sample-per-example path.
    pub fn rowwise_affine(&self, x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        let shapes_ok = x.rank() == 2
            && w.rank() == 2
            && b.rank() == 2
            && x.shape()[0] == w.shape()[0]
            && x.shape()[0] == b.shape()[0]
            && w.shape()[1] == x.shape()[1] * b.shape()[1];
        if !shapes_ok {
            return Err(Error::ShapeMismatch {
                op: "rowwise_affine",
                lhs: x.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        self.check_finite("rowwise_affine", &[x, w, b])?;
        let (rows, in_dim) = (x.shape()[0], x.shape()[1]);
        let out_dim = b.shape()[1];
        let (xv, wv, bv) = (x.data(), w.data(), b.data());
        let mut out = vec![F::zero(); rows * out_dim];
        for r in 0..rows {
            let xr = &xv[r * in_dim..(r + 1) * in_dim];
            let wr = &wv[r * in_dim * out_dim..(r + 1) * in_dim * out_dim];
            let or = &mut out[r * out_dim..(r + 1) * out_dim];
            or.copy_from_slice(&bv[r * out_dim..(r + 1) * out_dim]);
            for (j, &xj) in xr.iter().enumerate() {
                let wrow = &wr[j * out_dim..(j + 1) * out_dim];
                for (o, &wv) in wrow.iter().enumerate() {
                    or[o] += xj * wv;
                }
            }
        }
        let tracked = x.is_tracked() || w.is_tracked() || b.is_tracked();
        self.finish(
            Op::RowwiseAffine {
                x: Arg::of(x),
                w: Arg::of(w),
                b: Arg::of(b),
            },
            &[rows, out_dim],
            out,
            tracked,
        )
    }

    /// Mean squared error over all entries, producing a `[1]` tensor.
    pub fn mse_loss(&self, pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
        if pred.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse_loss",
                lhs: pred.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        self.check_finite("mse_loss", &[pred, target])?;
        let n = F::from_f64(pred.numel() as f64);
        let s: F = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p - t;
                d * d
            })
            .sum();
        let tracked = pred.is_tracked() || target.is_tracked();
        self.finish(
            Op::MseLoss {
                pred: Arg::of(pred),
                target: Arg::of(target),
            },
            &[1],
            vec![s / n],
            tracked,
        )
    }

    /// Mean negative log-likelihood of integer labels under a log-softmax
    /// of the logits; fused for numerical stability. `[1]` output.
    pub fn cross_entropy_loss(&self, logits: &Tensor<F>, labels: &[usize]) -> Result<Tensor<F>> {
        if logits.rank() != 2 || logits.shape()[0] != labels.len() {
            return Err(Error::contract(format!(
                "cross_entropy_loss: logits shape {:?} incompatible with {} labels",
                logits.shape(),
                labels.len()
            )));
        }
        let (rows, classes) = (logits.shape()[0], logits.shape()[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!(
                "cross_entropy_loss: label {bad} out of range for {classes} classes"
            )));
        }
        self.check_finite("cross_entropy_loss", &[logits])?;
        let lv = logits.data();
        let mut softmax = vec![F::zero(); rows * classes];
        let mut total = F::zero();
        for r in 0..rows {
            let row = &lv[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for &v in row {
                z += (v - max).exp();
            }
            let log_z = z.ln();
            for (c, &v) in row.iter().enumerate() {
                softmax[r * classes + c] = (v - max - log_z).exp();
            }
            total += max + log_z - row[labels[r]];
        }
        let loss = total / F::from_f64(rows as f64);
        let tracked = logits.is_tracked();
        self.finish(
            Op::CrossEntropy {
                logits: Arg::of(logits),
                labels: Arc::new(labels.to_vec()),
                softmax: Arc::new(softmax),
            },
            &[1],
            vec![loss],
            tracked,
        )
    }

    // ── reverse pass ────────────────────────────────────────────────

    /// Accumulate adjoints of `root` with respect to every tracked leaf.
    ///
    /// The root must hold exactly one element. An untracked root yields an
    /// empty gradient set. Fan-out accumulates additively; each node is
    /// visited once, in reverse recording order.
    pub fn backward(&self, root: &Tensor<F>) -> Result<Gradients<F>> {
        if !root.is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be a scalar, got shape {:?}",
                root.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<F>>> = (0..nodes.len()).map(|_| None).collect();
        let root_id = match root.node() {
            Some(id) => id,
            None => return Ok(Gradients { grads }),
        };
        grads[root_id] = Some(vec![F::one()]);
        for id in (0..=root_id).rev() {
            let (head, tail) = grads.split_at_mut(id);
            let go = match tail[0].as_ref() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[id];
            accumulate(&node.op, go, head);
            if !matches!(node.op, Op::Leaf) {
                tail[0] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn matmul_raw<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let or = &mut out[i * n..(i + 1) * n];
        for (j, &av) in ar.iter().enumerate() {
            let br = &b[j * n..(j + 1) * n];
            for (o, &bv) in br.iter().enumerate() {
                or[o] += av * bv;
            }
        }
    }
    out
}

fn slot<'a, F: Real>(head: &'a mut [Option<Vec<F>>], arg: &Arg<F>) -> Option<&'a mut [F]> {
    let id = arg.node?;
    Some(
        head[id]
            .get_or_insert_with(|| vec![F::zero(); arg.len()])
            .as_mut_slice(),
    )
}

fn accumulate<F: Real>(op: &Op<F>, go: &[F], head: &mut [Option<Vec<F>>]) {
    match op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (m, k) = (a.shape[0], a.shape[1]);
            let n = b.shape[1];
            if let Some(ga) = slot(head, a) {
                let bv = &b.data;
                for i in 0..m {
                    let gor = &go[i * n..(i + 1) * n];
                    let gar = &mut ga[i * k..(i + 1) * k];
                    for j in 0..k {
                        let br = &bv[j * n..(j + 1) * n];
                        let mut acc = F::zero();
                        for (o, &g) in gor.iter().enumerate() {
                            acc += g * br[o];
                        }
                        gar[j] += acc;
                    }
                }
            }
            if let Some(gb) = slot(head, b) {
                let av = &a.data;
                for i in 0..m {
                    let gor = &go[i * n..(i + 1) * n];
                    let ar = &av[i * k..(i + 1) * k];
                    for (j, &aij) in ar.iter().enumerate() {
                        let gbr = &mut gb[j * n..(j + 1) * n];
                        for (o, &g) in gor.iter().enumerate() {
                            gbr[o] += aij * g;
                        }
                    }
                }
            }
        }
        Op::Add { a, b, bc } => {
            reduce_add(head, a, go, *bc, Side::Lhs);
            reduce_add(head, b, go, *bc, Side::Rhs);
        }
        Op::Mul { a, b, bc } => {
            mul_adjoint(head, a, b, go, *bc, Side::Lhs);
            mul_adjoint(head, b, a, go, *bc, Side::Rhs);
        }
        Op::Relu { x } => {
            if let Some(gx) = slot(head, x) {
                for (i, &v) in x.data.iter().enumerate() {
                    if v > F::zero() {
                        gx[i] += go[i];
                    }
                }
            }
        }
        Op::Softplus { x } => {
            if let Some(gx) = slot(head, x) {
                for (i, &v) in x.data.iter().enumerate() {
                    gx[i] += go[i] * sigmoid(v);
                }
            }
        }
        Op::Mean { x } => {
            if let Some(gx) = slot(head, x) {
                let g = go[0] / F::from_f64(x.len() as f64);
                for v in gx.iter_mut() {
                    *v += g;
                }
            }
        }
        Op::Sum { x } => {
            if let Some(gx) = slot(head, x) {
                for v in gx.iter_mut() {
                    *v += go[0];
                }
            }
        }
        Op::Slice { x, start } => {
            if let Some(gx) = slot(head, x) {
                for (i, &g) in go.iter().enumerate() {
                    gx[start + i] += g;
                }
            }
        }
        Op::SliceCols { x, start, out_cols } => {
            if let Some(gx) = slot(head, x) {
                let cols = x.shape[1];
                for r in 0..x.shape[0] {
                    for i in 0..*out_cols {
                        gx[r * cols + start + i] += go[r * out_cols + i];
                    }
                }
            }
        }
        Op::Reshape { x } => {
            if let Some(gx) = slot(head, x) {
                for (v, &g) in gx.iter_mut().zip(go) {
                    *v += g;
                }
            }
        }
        Op::RowwiseAffine { x, w, b } => {
            let (rows, in_dim) = (x.shape[0], x.shape[1]);
            let out_dim = b.shape[1];
            if let Some(gx) = slot(head, x) {
                let wv = &w.data;
                for r in 0..rows {
                    let gor = &go[r * out_dim..(r + 1) * out_dim];
                    let wr = &wv[r * in_dim * out_dim..(r + 1) * in_dim * out_dim];
                    let gxr = &mut gx[r * in_dim..(r + 1) * in_dim];
                    for j in 0..in_dim {
                        let wrow = &wr[j * out_dim..(j + 1) * out_dim];
                        let mut acc = F::zero();
                        for (o, &g) in gor.iter().enumerate() {
                            acc += g * wrow[o];
                        }
                        gxr[j] += acc;
                    }
                }
            }
            if let Some(gw) = slot(head, w) {
                let xv = &x.data;
                for r in 0..rows {
                    let gor = &go[r * out_dim..(r + 1) * out_dim];
                    let xr = &xv[r * in_dim..(r + 1) * in_dim];
                    let gwr = &mut gw[r * in_dim * out_dim..(r + 1) * in_dim * out_dim];
                    for (j, &xj) in xr.iter().enumerate() {
                        let grow = &mut gwr[j * out_dim..(j + 1) * out_dim];
                        for (o, &g) in gor.iter().enumerate() {
                            grow[o] += xj * g;
                        }
                    }
                }
            }
            if let Some(gb) = slot(head, b) {
                for (v, &g) in gb.iter_mut().zip(go) {
                    *v += g;
                }
            }
        }
        Op::MseLoss { pred, target } => {
            let c = go[0] * F::from_f64(2.0 / pred.len() as f64);
            if let Some(gp) = slot(head, pred) {
                for (i, (&p, &t)) in pred.data.iter().zip(target.data.iter()).enumerate() {
                    gp[i] += c * (p - t);
                }
            }
            if let Some(gt) = slot(head, target) {
                for (i, (&p, &t)) in pred.data.iter().zip(target.data.iter()).enumerate() {
                    gt[i] -= c * (p - t);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            softmax,
        } => {
            if let Some(gl) = slot(head, logits) {
                let classes = logits.shape[1];
                let inv_rows = F::from_f64(1.0 / labels.len() as f64);
                for r in 0..labels.len() {
                    for c in 0..classes {
                        let idx = r * classes + c;
                        let indicator = if c == labels[r] { F::one() } else { F::zero() };
                        gl[idx] += go[0] * (softmax[idx] - indicator) * inv_rows;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lhs,
    Rhs,
}

/// Reduce the out-gradient onto one operand of an add, honoring how that
/// operand was broadcast.
fn reduce_add<F: Real>(head: &mut [Option<Vec<F>>], arg: &Arg<F>, go: &[F], bc: Bcast, side: Side) {
    let Some(g) = slot(head, arg) else { return };
    let broadcast_this = match (bc, side) {
        (Bcast::Same, _) => false,
        (Bcast::RhsScalar | Bcast::RhsRow, s) => s == Side::Rhs,
        (Bcast::LhsScalar | Bcast::LhsRow, s) => s == Side::Lhs,
    };
    if !broadcast_this {
        for (v, &x) in g.iter_mut().zip(go) {
            *v += x;
        }
    } else if g.len() == 1 {
        let mut acc = F::zero();
        for &x in go {
            acc += x;
        }
        g[0] += acc;
    } else {
        for row in go.chunks_exact(g.len()) {
            for (v, &x) in g.iter_mut().zip(row) {
                *v += x;
            }
        }
    }
}

/// Adjoint of one operand of a multiply: out-gradient times the *other*
/// operand, reduced onto this operand's shape.
fn mul_adjoint<F: Real>(
    head: &mut [Option<Vec<F>>],
    arg: &Arg<F>,
    other: &Arg<F>,
    go: &[F],
    bc: Bcast,
    side: Side,
) {
    let Some(g) = slot(head, arg) else { return };
    let ov = &other.data;
    let this_broadcast = match (bc, side) {
        (Bcast::Same, _) => false,
        (Bcast::RhsScalar | Bcast::RhsRow, s) => s == Side::Rhs,
        (Bcast::LhsScalar | Bcast::LhsRow, s) => s == Side::Lhs,
    };
    let other_scalar = ov.len() == 1;
    if !this_broadcast {
        if other_scalar {
            let o = ov[0];
            for (v, &x) in g.iter_mut().zip(go) {
                *v += x * o;
            }
        } else if ov.len() == go.len() {
            for i in 0..go.len() {
                g[i] += go[i] * ov[i];
            }
        } else {
            // other was row-broadcast across this operand's leading extent
            for (r, row) in go.chunks_exact(ov.len()).enumerate() {
                let gr = &mut g[r * ov.len()..(r + 1) * ov.len()];
                for (i, &x) in row.iter().enumerate() {
                    gr[i] += x * ov[i];
                }
            }
        }
    } else if g.len() == 1 {
        let mut acc = F::zero();
        for (i, &x) in go.iter().enumerate() {
            acc += x * ov[i];
        }
        g[0] += acc;
    } else {
        for (row_go, row_ov) in go.chunks_exact(g.len()).zip(ov.chunks_exact(g.len())) {
            for i in 0..g.len() {
                g[i] += row_go[i] * row_ov[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t64(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::constant(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn relu_definition() {
        let tape = Tape::new();
        let y = tape.relu(&t64(&[-1.0, 0.0, 2.0], &[3])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softplus_at_zero() {
        let tape = Tape::new();
        let y = tape.softplus(&t64(&[0.0], &[1])).unwrap();
        assert_relative_eq!(y.data()[0], 0.693_147, epsilon = 1e-6);
    }

    #[test]
    fn product_rule_backward() {
        let tape = Tape::new();
        let x = tape.leaf(vec![3.0], &[1]).unwrap();
        let y = tape.leaf(vec![4.0], &[1]).unwrap();
        let z = tape.mul(&x, &y).unwrap();
        let grads = tape.backward(&z).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[4.0]);
        assert_eq!(grads.get(&y).unwrap(), &[3.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(vec![5.0], &[1]).unwrap();
        let z = tape.add(&x, &x).unwrap();
        let grads = tape.backward(&z).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[2.0]);
    }

    #[test]
    fn constant_root_gives_empty_gradients() {
        let tape: Tape<f64> = Tape::new();
        let c = t64(&[2.0], &[1]);
        let grads = tape.backward(&c).unwrap();
        assert!(grads.is_empty());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(tape.backward(&x), Err(Error::Contract(_))));
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let tape: Tape<f64> = Tape::new();
        let a = t64(&[1.0, 2.0], &[1, 2]);
        let b = t64(&[1.0, 2.0, 3.0], &[3, 1]);
        match tape.matmul(&a, &b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![1, 2]);
                assert_eq!(rhs, vec![3, 1]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn matmul_values() {
        let tape: Tape<f64> = Tape::new();
        let a = t64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = t64(&[5.0, 6.0, 7.0, 8.0], &[2, 2]);
        let c = tape.matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn row_broadcast_add() {
        let tape: Tape<f64> = Tape::new();
        let x = t64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = t64(&[10.0, 20.0], &[2]);
        let y = tape.add(&x, &b).unwrap();
        assert_eq!(y.data(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(y.shape(), &[2, 2]);
    }

    #[test]
    fn row_broadcast_add_grad_sums_over_rows() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = tape.leaf(vec![10.0, 20.0], &[2]).unwrap();
        let y = tape.add(&x, &b).unwrap();
        let s = tape.sum(&y).unwrap();
        let grads = tape.backward(&s).unwrap();
        assert_eq!(grads.get(&b).unwrap(), &[2.0, 2.0]);
        assert_eq!(grads.get(&x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn scalar_broadcast_mul_grad() {
        let tape: Tape<f64> = Tape::new();
        let s = tape.leaf(vec![3.0], &[1]).unwrap();
        let x = t64(&[1.0, 2.0, 4.0], &[3]);
        let y = tape.mul(&x, &s).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0, 12.0]);
        let total = tape.sum(&y).unwrap();
        let grads = tape.backward(&total).unwrap();
        assert_eq!(grads.get(&s).unwrap(), &[7.0]);
    }

    #[test]
    fn incompatible_broadcast_rejected() {
        let tape: Tape<f64> = Tape::new();
        let a = t64(&[1.0, 2.0, 3.0], &[3]);
        let b = t64(&[1.0, 2.0], &[2]);
        assert!(matches!(
            tape.add(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_is_linear_in_the_root() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(vec![1.0, -2.0, 0.5], &[3]).unwrap();
        let y = tape.relu(&x).unwrap();
        let l = tape.mean(&y).unwrap();
        let g1 = tape.backward(&l).unwrap().get(&x).unwrap().to_vec();
        let scaled = tape.scale(&l, 5.0).unwrap();
        let g5 = tape.backward(&scaled).unwrap().get(&x).unwrap().to_vec();
        for (a, b) in g1.iter().zip(&g5) {
            assert_relative_eq!(5.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dropout_eval_is_identity() {
        let tape: Tape<f64> = Tape::new();
        let mut stream = RngStream::seed_from(1);
        let x = t64(&[1.0, 2.0, 3.0], &[3]);
        let y = tape.dropout(&x, 0.5, Mode::Eval, &mut stream).unwrap();
        assert_eq!(y.data(), x.data());
        assert_eq!(tape.len(), 0);
    }

    #[test]
    fn dropout_train_scales_survivors() {
        let tape: Tape<f64> = Tape::new();
        let mut stream = RngStream::seed_from(1);
        let x = t64(&[1.0; 1000], &[1000]);
        let y = tape.dropout(&x, 0.25, Mode::Train, &mut stream).unwrap();
        let mut kept = 0usize;
        for &v in y.data() {
            assert!(v == 0.0 || (v - 4.0).abs() < 1e-12);
            if v != 0.0 {
                kept += 1;
            }
        }
        // keep-rate should be near 0.25 for 1000 draws
        assert!(kept > 180 && kept < 320, "kept {kept} of 1000");
    }

    #[test]
    fn dropout_bad_keep_rejected() {
        let tape: Tape<f64> = Tape::new();
        let mut stream = RngStream::seed_from(1);
        let x = t64(&[1.0], &[1]);
        assert!(tape.dropout(&x, 0.0, Mode::Train, &mut stream).is_err());
        assert!(tape.dropout(&x, 1.5, Mode::Train, &mut stream).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let tape: Tape<f64> = Tape::new();
        let logits = t64(&[0.0; 20], &[2, 10]);
        let loss = tape.cross_entropy_loss(&logits, &[3, 7]).unwrap();
        assert_relative_eq!(loss.data()[0], 10.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn mse_perfect_fit_is_zero() {
        let tape: Tape<f64> = Tape::new();
        let p = t64(&[1.0, 2.0], &[2, 1]);
        let t = t64(&[1.0, 2.0], &[2, 1]);
        assert_eq!(tape.mse_loss(&p, &t).unwrap().data()[0], 0.0);
    }

    #[test]
    fn strict_mode_rejects_non_finite() {
        let tape: Tape<f64> = Tape::with_strict(true);
        let x = t64(&[f64::NAN, 1.0], &[2]);
        assert!(matches!(tape.relu(&x), Err(Error::Numeric(_))));
        let lenient: Tape<f64> = Tape::new();
        assert!(lenient.relu(&x).is_ok());
    }

    #[test]
    fn untracked_ops_record_nothing() {
        let tape: Tape<f64> = Tape::new();
        let a = t64(&[1.0, 2.0], &[1, 2]);
        let b = t64(&[3.0, 4.0], &[2, 1]);
        let _ = tape.matmul(&a, &b).unwrap();
        assert!(tape.is_empty());
        let leaf = tape.leaf(vec![1.0, 2.0], &[1, 2]).unwrap();
        let _ = tape.matmul(&leaf, &b).unwrap();
        assert_eq!(tape.len(), 2);
    }

    #[test]
    fn replay_with_same_stream_is_bit_identical() {
        let run = || {
            let tape: Tape<f64> = Tape::new();
            let mut stream = RngStream::seed_from(99);
            let x = t64(&[0.3, -0.7, 1.4, 0.1, 2.0, -0.2], &[2, 3]);
            let h = tape.relu(&x).unwrap();
            let d = tape.dropout(&h, 0.5, Mode::Train, &mut stream).unwrap();
            let mut noise = vec![0.0; 6];
            stream.fill_normal(&mut noise);
            let n = Tensor::constant(noise, &[2, 3]).unwrap();
            let y = tape.add(&d, &n).unwrap();
            y.to_vec()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
