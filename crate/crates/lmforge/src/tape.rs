//! Reverse-mode automatic differentiation over a define-by-run tape.
//!
//! A [`Tape`] records every operation of one forward pass in creation order,
//! which is already a topological order of the computation DAG. `backward`
//! walks the records in reverse exactly once and accumulates adjoints into
//! the leaf tensors that requested gradients. Tapes are rebuilt per forward
//! pass and confined to one thread.
//!
//! Shapes are 1-D vectors `[n]`, 2-D row-major matrices `[r, c]`, or the
//! scalar `[1]`. Every operation validates its operands and checks its output
//! for NaN/Inf; a non-finite result is reported as a numerical error rather
//! than propagated.

use std::cell::Ref;

use crate::error::{Error, Result};
use crate::tensor::{numel, SharedTensor};

/// Handle to a node on a tape. Only meaningful on the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Payload {
    Owned(Vec<f64>),
    Leaf(SharedTensor),
}

enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Neg { a: usize },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Exp { a: usize },
    Log { a: usize },
    Softplus { a: usize },
    Scale { a: usize, c: f64 },
    AddScalar { a: usize },
    AddRowBias { m: usize, bias: usize },
    Sum { a: usize },
    ConcatRows { parts: Vec<usize> },
    GatherRows { table: usize, ids: Vec<usize> },
    WindowRows { a: usize, width: usize },
    MaxOverRows { a: usize, argmax: Vec<usize> },
    Reshape { a: usize },
    /// sum_t weights[t] * (-log softmax(logits[t])[targets[t]]); caches the
    /// row-wise softmax for the backward pass.
    WeightedNll { logits: usize, targets: Vec<usize>, weights: Vec<f64>, probs: Vec<f64> },
    /// Mean over rows of 0.5 * sum_j (mu^2 + expm1(logvar) - logvar).
    KlDiagGaussian { mu: usize, logvar: usize, rows: usize },
}

struct Node {
    shape: Vec<usize>,
    payload: Payload,
    needs_grad: bool,
    op: Op,
}

/// Guard over a node's values; leaves borrow their shared tensor.
pub enum ValRef<'a> {
    Owned(&'a [f64]),
    Shared(Ref<'a, [f64]>),
}

impl std::ops::Deref for ValRef<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        match self {
            ValRef::Owned(s) => s,
            ValRef::Shared(r) => r,
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => (1, numel(shape)),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Drops all recorded nodes, keeping allocated capacity.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn val(&self, v: Var) -> ValRef<'_> {
        match &self.nodes[v.0].payload {
            Payload::Owned(vals) => ValRef::Owned(vals),
            Payload::Leaf(t) => ValRef::Shared(Ref::map(t.borrow(), |t| t.values.as_slice())),
        }
    }

    /// Copies a node's values out of the tape.
    pub fn values(&self, v: Var) -> Vec<f64> {
        self.val(v).to_vec()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.val(v)[0]
    }

    /// Registers a shared tensor (typically a model parameter) as a leaf.
    pub fn leaf(&mut self, t: &SharedTensor) -> Var {
        let (shape, needs) = {
            let b = t.borrow();
            (b.shape.clone(), b.requires_grad)
        };
        self.nodes.push(Node {
            shape,
            payload: Payload::Leaf(t.clone()),
            needs_grad: needs,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a constant input that never receives gradients.
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        if numel(&shape) != values.len() {
            return Err(Error::Dimension {
                op: "constant",
                detail: format!("shape {:?} vs {} values", shape, values.len()),
            });
        }
        self.nodes.push(Node { shape, payload: Payload::Owned(values), needs_grad: false, op: Op::Leaf });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, needs_grad: bool, op: Op, name: &'static str) -> Result<Var> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("{name} produced a non-finite value")));
        }
        self.nodes.push(Node { shape, payload: Payload::Owned(values), needs_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ---- arithmetic ops -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = {
            let va = self.val(a);
            let vb = self.val(b);
            matmul_raw(&va, &vb, m, k, n)
        };
        let needs = self.needs(a) || self.needs(b);
        self.push(vec![m, n], out, needs, Op::Matmul { a: a.0, b: b.0 }, "matmul")
    }

    fn binary_same_shape(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        if sa != self.shape(b) {
            return Err(Error::Dimension {
                op: name,
                detail: format!("{:?} vs {:?}", sa, self.shape(b)),
            });
        }
        let out = {
            let va = self.val(a);
            let vb = self.val(b);
            va.iter().zip(vb.iter()).map(|(&x, &y)| f(x, y)).collect()
        };
        let needs = self.needs(a) || self.needs(b);
        self.push(sa, out, needs, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let out = { self.val(a).iter().map(|&x| f(x)).collect() };
        let needs = self.needs(a);
        self.push(sa, out, needs, op, name)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "neg", |x| -x, Op::Neg { a: a.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh { a: a.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid { a: a.0 })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "exp", f64::exp, Op::Exp { a: a.0 })
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.val(a).iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: "operand must be strictly positive".into(),
            });
        }
        self.unary(a, "log", f64::ln, Op::Log { a: a.0 })
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "softplus", softplus, Op::Softplus { a: a.0 })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "scale", |x| c * x, Op::Scale { a: a.0, c })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "add_scalar", |x| x + c, Op::AddScalar { a: a.0 })
    }

    /// Adds a bias vector `[c]` to every row of `[r, c]`.
    pub fn add_row_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let sm = self.shape(m).to_vec();
        let sb = self.shape(bias).to_vec();
        if sm.len() != 2 || sb.len() != 1 || sb[0] != sm[1] {
            return Err(Error::Dimension {
                op: "add_row_bias",
                detail: format!("{sm:?} + {sb:?}"),
            });
        }
        let (r, c) = (sm[0], sm[1]);
        let out = {
            let vm = self.val(m);
            let vb = self.val(bias);
            let mut out = vm.to_vec();
            for i in 0..r {
                for j in 0..c {
                    out[i * c + j] += vb[j];
                }
            }
            out
        };
        let needs = self.needs(m) || self.needs(bias);
        self.push(sm, out, needs, Op::AddRowBias { m: m.0, bias: bias.0 }, "add_row_bias")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = { self.val(a).iter().sum() };
        let needs = self.needs(a);
        self.push(vec![1], vec![total], needs, Op::Sum { a: a.0 }, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = numel(self.shape(a));
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::DegenerateInput("concat_rows of zero parts".into()));
        }
        let (_, c) = rows_cols(self.shape(parts[0]));
        let mut total_rows = 0;
        for &p in parts {
            let (r, pc) = rows_cols(self.shape(p));
            if pc != c {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    detail: format!("column mismatch {pc} vs {c}"),
                });
            }
            total_rows += r;
        }
        let mut out = Vec::with_capacity(total_rows * c);
        for &p in parts {
            out.extend_from_slice(&self.val(p));
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            vec![total_rows, c],
            out,
            needs,
            Op::ConcatRows { parts: parts.iter().map(|p| p.0).collect() },
            "concat_rows",
        )
    }

    /// Row lookup into `[v, d]`; backward scatter-adds, so repeated ids sum.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(Error::Dimension {
                op: "gather_rows",
                detail: format!("table must be 2-D, got {st:?}"),
            });
        }
        let (v, d) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::Index {
                op: "gather_rows",
                detail: format!("id {bad} out of range for table with {v} rows"),
            });
        }
        if ids.is_empty() {
            return Err(Error::DegenerateInput("gather_rows with empty id list".into()));
        }
        let out = {
            let vt = self.val(table);
            let mut out = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                out.extend_from_slice(&vt[id * d..(id + 1) * d]);
            }
            out
        };
        let needs = self.needs(table);
        self.push(
            vec![ids.len(), d],
            out,
            needs,
            Op::GatherRows { table: table.0, ids: ids.to_vec() },
            "gather_rows",
        )
    }

    /// Sliding windows over rows: `[t, e]` -> `[t - w + 1, w * e]`, row i
    /// being the concatenation of input rows i..i+w.
    pub fn window_rows(&mut self, a: Var, width: usize) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        if sa.len() != 2 || width == 0 || sa[0] < width {
            return Err(Error::Dimension {
                op: "window_rows",
                detail: format!("input {sa:?}, width {width}"),
            });
        }
        let (t, e) = (sa[0], sa[1]);
        let rows = t - width + 1;
        let out = {
            let va = self.val(a);
            let mut out = Vec::with_capacity(rows * width * e);
            for i in 0..rows {
                out.extend_from_slice(&va[i * e..(i + width) * e]);
            }
            out
        };
        let needs = self.needs(a);
        self.push(vec![rows, width * e], out, needs, Op::WindowRows { a: a.0, width }, "window_rows")
    }

    /// Column-wise maximum over rows: `[r, c]` -> `[1, c]`. Gradient routes
    /// to the first maximizing row per column.
    pub fn max_over_rows(&mut self, a: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        if sa.len() != 2 {
            return Err(Error::Dimension {
                op: "max_over_rows",
                detail: format!("input must be 2-D, got {sa:?}"),
            });
        }
        let (r, c) = (sa[0], sa[1]);
        let (out, argmax) = {
            let va = self.val(a);
            let mut out = vec![f64::NEG_INFINITY; c];
            let mut argmax = vec![0usize; c];
            for i in 0..r {
                for j in 0..c {
                    let x = va[i * c + j];
                    if x > out[j] {
                        out[j] = x;
                        argmax[j] = i;
                    }
                }
            }
            (out, argmax)
        };
        let needs = self.needs(a);
        self.push(vec![1, c], out, needs, Op::MaxOverRows { a: a.0, argmax }, "max_over_rows")
    }

    /// Reinterprets the value buffer under a new shape with equal element
    /// count (row-major layout is preserved).
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != numel(self.shape(a)) {
            return Err(Error::Dimension {
                op: "reshape",
                detail: format!("{:?} -> {shape:?}", self.shape(a)),
            });
        }
        let out = self.values(a);
        let needs = self.needs(a);
        self.push(shape, out, needs, Op::Reshape { a: a.0 }, "reshape")
    }

    /// Mean negative log-likelihood over unmasked positions, computed with
    /// max-subtracted log-sum-exp. `mask[t] == true` means position t counts.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || targets.len() != sl[0] || mask.len() != sl[0] {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                detail: format!("logits {sl:?}, {} targets, {} mask entries", targets.len(), mask.len()),
            });
        }
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::DegenerateInput("softmax_cross_entropy with all positions masked".into()));
        }
        let w = 1.0 / active as f64;
        let weights: Vec<f64> = mask.iter().map(|&m| if m { w } else { 0.0 }).collect();
        self.weighted_nll(logits, targets, &weights)
    }

    /// sum_t weights[t] * (-log softmax(logits[t])[targets[t]]). Weights are
    /// constants (not differentiated through); rows with weight 0 still have
    /// their target id validated lazily only if in range checks below.
    pub fn weighted_nll(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || targets.len() != sl[0] || weights.len() != sl[0] {
            return Err(Error::Dimension {
                op: "weighted_nll",
                detail: format!("logits {sl:?}, {} targets, {} weights", targets.len(), weights.len()),
            });
        }
        let (n, v) = (sl[0], sl[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Index {
                op: "weighted_nll",
                detail: format!("target id {bad} out of range for {v} classes"),
            });
        }
        let (loss, probs) = {
            let vl = self.val(logits);
            let mut probs = vec![0.0; n * v];
            let mut loss = 0.0;
            for t in 0..n {
                let row = &vl[t * v..(t + 1) * v];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (j, &x) in row.iter().enumerate() {
                    let e = (x - m).exp();
                    probs[t * v + j] = e;
                    z += e;
                }
                let log_z = z.ln() + m;
                for p in &mut probs[t * v..(t + 1) * v] {
                    *p /= z;
                }
                loss += weights[t] * (log_z - row[targets[t]]);
            }
            (loss, probs)
        };
        let needs = self.needs(logits);
        self.push(
            vec![1],
            vec![loss],
            needs,
            Op::WeightedNll { logits: logits.0, targets: targets.to_vec(), weights: weights.to_vec(), probs },
            "weighted_nll",
        )
    }

    /// KL(N(mu, diag sigma^2) || N(0, I)) averaged over rows, computed as
    /// 0.5 * sum(mu^2 + expm1(logvar) - logvar), which is non-negative
    /// term by term. 1-D inputs are treated as a single row.
    pub fn kl_diag_gaussian(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let sm = self.shape(mu).to_vec();
        if sm != self.shape(logvar) {
            return Err(Error::Dimension {
                op: "kl_diag_gaussian",
                detail: format!("{:?} vs {:?}", sm, self.shape(logvar)),
            });
        }
        let (rows, _) = rows_cols(&sm);
        let kl = {
            let vm = self.val(mu);
            let vl = self.val(logvar);
            let mut acc = 0.0;
            for (m, l) in vm.iter().zip(vl.iter()) {
                acc += m * m + l.exp_m1() - l;
            }
            0.5 * acc / rows as f64
        };
        let needs = self.needs(mu) || self.needs(logvar);
        self.push(
            vec![1],
            vec![kl],
            needs,
            Op::KlDiagGaussian { mu: mu.0, logvar: logvar.0, rows },
            "kl_diag_gaussian",
        )
    }

    // ---- backward -------------------------------------------------------

    /// Computes d(loss)/d(leaf) for every recorded leaf with
    /// `requires_grad`, accumulating into the leaf tensors' `grad`. Repeated
    /// calls without clearing gradients accumulate further.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if numel(&self.nodes[loss.0].shape) != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    if let Payload::Leaf(t) = &self.nodes[i].payload {
                        let mut tb = t.borrow_mut();
                        if tb.requires_grad {
                            tb.accumulate_grad(&g);
                        }
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, k) = {
                        let s = &self.nodes[*a].shape;
                        (s[0], s[1])
                    };
                    let n = self.nodes[*b].shape[1];
                    if self.nodes[*a].needs_grad {
                        // dA = dC . B^T
                        let vb = self.node_val(*b);
                        let da = accum(&mut grads, *a, m * k);
                        for i2 in 0..m {
                            for k2 in 0..k {
                                let mut s = 0.0;
                                let grow = &g[i2 * n..(i2 + 1) * n];
                                let brow = &vb[k2 * n..(k2 + 1) * n];
                                for j in 0..n {
                                    s += grow[j] * brow[j];
                                }
                                da[i2 * k + k2] += s;
                            }
                        }
                        drop(vb);
                    }
                    if self.nodes[*b].needs_grad {
                        // dB = A^T . dC
                        let va = self.node_val(*a);
                        let db = accum(&mut grads, *b, k * n);
                        for i2 in 0..m {
                            let arow = &va[i2 * k..(i2 + 1) * k];
                            let grow = &g[i2 * n..(i2 + 1) * n];
                            for (k2, &aik) in arow.iter().enumerate() {
                                if aik != 0.0 {
                                    let drow = &mut db[k2 * n..(k2 + 1) * n];
                                    for j in 0..n {
                                        drow[j] += aik * grow[j];
                                    }
                                }
                            }
                        }
                        drop(va);
                    }
                }
                Op::Add { a, b } => {
                    for &p in [a, b].into_iter() {
                        if self.nodes[p].needs_grad {
                            add_into(accum(&mut grads, p, g.len()), &g, 1.0);
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].needs_grad {
                        let vb = self.node_val(b);
                        let da = accum(&mut grads, a, g.len());
                        for j in 0..g.len() {
                            da[j] += g[j] * vb[j];
                        }
                        drop(vb);
                    }
                    if self.nodes[b].needs_grad {
                        let va = self.node_val(a);
                        let db = accum(&mut grads, b, g.len());
                        for j in 0..g.len() {
                            db[j] += g[j] * va[j];
                        }
                        drop(va);
                    }
                }
                Op::Neg { a } => {
                    if self.nodes[*a].needs_grad {
                        add_into(accum(&mut grads, *a, g.len()), &g, -1.0);
                    }
                }
                Op::Tanh { a } => {
                    if self.nodes[*a].needs_grad {
                        let y = self.node_val(i);
                        let da = accum(&mut grads, *a, g.len());
                        for j in 0..g.len() {
                            da[j] += g[j] * (1.0 - y[j] * y[j]);
                        }
                        drop(y);
                    }
                }
                Op::Sigmoid { a } => {
                    if self.nodes[*a].needs_grad {
                        let y = self.node_val(i);
                        let da = accum(&mut grads, *a, g.len());
                        for j in 0..g.len() {
                            da[j] += g[j] * y[j] * (1.0 - y[j]);
                        }
                        drop(y);
                    }
                }
                Op::Exp { a } => {
                    if self.nodes[*a].needs_grad {
                        let y = self.node_val(i);
                        let da = accum(&mut grads, *a, g.len());
                        for j in 0..g.len() {
                            da[j] += g[j] * y[j];
                        }
                        drop(y);
                    }
                }
                Op::Log { a } => {
                    if self.nodes[*a].needs_grad {
                        let x = self.node_val(*a);
                        let da = accum(&mut grads, *a, g.len());
                        for j in 0..g.len() {
                            da[j] += g[j] / x[j];
                        }
                        drop(x);
                    }
                }
                Op::Softplus { a } => {
                    if self.nodes[*a].needs_grad {
                        let x = self.node_val(*a);
                        let da = accum(&mut grads, *a, g.len());
                        for j in 0..g.len() {
                            da[j] += g[j] * sigmoid(x[j]);
                        }
                        drop(x);
                    }
                }
                Op::Scale { a, c } => {
                    if self.nodes[*a].needs_grad {
                        add_into(accum(&mut grads, *a, g.len()), &g, *c);
                    }
                }
                Op::AddScalar { a } => {
                    if self.nodes[*a].needs_grad {
                        add_into(accum(&mut grads, *a, g.len()), &g, 1.0);
                    }
                }
                Op::AddRowBias { m, bias } => {
                    let (r, c) = rows_cols(&self.nodes[i].shape);
                    if self.nodes[*m].needs_grad {
                        add_into(accum(&mut grads, *m, g.len()), &g, 1.0);
                    }
                    if self.nodes[*bias].needs_grad {
                        let db = accum(&mut grads, *bias, c);
                        for i2 in 0..r {
                            for j in 0..c {
                                db[j] += g[i2 * c + j];
                            }
                        }
                    }
                }
                Op::Sum { a } => {
                    if self.nodes[*a].needs_grad {
                        let n = numel(&self.nodes[*a].shape);
                        let da = accum(&mut grads, *a, n);
                        for d in da.iter_mut() {
                            *d += g[0];
                        }
                    }
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = numel(&self.nodes[p].shape);
                        if self.nodes[p].needs_grad {
                            let dp = accum(&mut grads, p, n);
                            for j in 0..n {
                                dp[j] += g[offset + j];
                            }
                        }
                        offset += n;
                    }
                }
                Op::GatherRows { table, ids } => {
                    if self.nodes[*table].needs_grad {
                        let (v, d) = {
                            let s = &self.nodes[*table].shape;
                            (s[0], s[1])
                        };
                        let dt = accum(&mut grads, *table, v * d);
                        for (row, &id) in ids.iter().enumerate() {
                            for j in 0..d {
                                dt[id * d + j] += g[row * d + j];
                            }
                        }
                    }
                }
                Op::WindowRows { a, width } => {
                    if self.nodes[*a].needs_grad {
                        let (t, e) = {
                            let s = &self.nodes[*a].shape;
                            (s[0], s[1])
                        };
                        let width = *width;
                        let rows = t - width + 1;
                        let da = accum(&mut grads, *a, t * e);
                        for i2 in 0..rows {
                            for w in 0..width {
                                for j in 0..e {
                                    da[(i2 + w) * e + j] += g[i2 * width * e + w * e + j];
                                }
                            }
                        }
                    }
                }
                Op::MaxOverRows { a, argmax } => {
                    if self.nodes[*a].needs_grad {
                        let c = self.nodes[i].shape[1];
                        let n = numel(&self.nodes[*a].shape);
                        let da = accum(&mut grads, *a, n);
                        for j in 0..c {
                            da[argmax[j] * c + j] += g[j];
                        }
                    }
                }
                Op::Reshape { a } => {
                    if self.nodes[*a].needs_grad {
                        add_into(accum(&mut grads, *a, g.len()), &g, 1.0);
                    }
                }
                Op::WeightedNll { logits, targets, weights, probs } => {
                    if self.nodes[*logits].needs_grad {
                        let (n, v) = {
                            let s = &self.nodes[*logits].shape;
                            (s[0], s[1])
                        };
                        let g0 = g[0];
                        let dl = accum(&mut grads, *logits, n * v);
                        for t in 0..n {
                            let w = weights[t] * g0;
                            if w == 0.0 {
                                continue;
                            }
                            for j in 0..v {
                                dl[t * v + j] += w * probs[t * v + j];
                            }
                            dl[t * v + targets[t]] -= w;
                        }
                    }
                }
                Op::KlDiagGaussian { mu, logvar, rows } => {
                    let scale = g[0] / *rows as f64;
                    let (mu, logvar) = (*mu, *logvar);
                    if self.nodes[mu].needs_grad {
                        let vm = self.node_val(mu);
                        let dm = accum(&mut grads, mu, vm.len());
                        for j in 0..vm.len() {
                            dm[j] += scale * vm[j];
                        }
                        drop(vm);
                    }
                    if self.nodes[logvar].needs_grad {
                        let vl = self.node_val(logvar);
                        let dl = accum(&mut grads, logvar, vl.len());
                        for j in 0..vl.len() {
                            dl[j] += scale * 0.5 * vl[j].exp_m1();
                        }
                        drop(vl);
                    }
                }
            }
        }
        Ok(())
    }

    fn node_val(&self, idx: usize) -> ValRef<'_> {
        match &self.nodes[idx].payload {
            Payload::Owned(vals) => ValRef::Owned(vals),
            Payload::Leaf(t) => ValRef::Shared(Ref::map(t.borrow(), |t| t.values.as_slice())),
        }
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log(1 + e^x).
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}
