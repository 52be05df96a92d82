use super::{gemm, ParamStore, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Forward rule used by [`Tape::spike`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpikeFn {
    /// Exact Heaviside step with a rectangular surrogate gradient.
    #[default]
    Heaviside,
    /// Piecewise-linear ramp whose true derivative matches the surrogate
    /// window. Only useful for gradient checking.
    Soft,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Tanh(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Spike {
        h: Var,
        threshold: f64,
        window: f64,
        rule: SpikeFn,
    },
    HardReset {
        h: Var,
        s: Var,
        v_reset: f64,
    },
    GaussianRf {
        state: Var,
        mu: Var,
        sigma: Var,
        pop: usize,
    },
    GroupDot {
        x: Var,
        w: Var,
        groups: usize,
    },
    BlockLinear {
        x: Var,
        w: Var,
        groups: usize,
    },
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
    RowBlock {
        src: Var,
        start: usize,
    },
    Axpby {
        a: Var,
        alpha: f64,
        b: Var,
        beta: f64,
    },
    AddNoise {
        h: Var,
        eps: Var,
        sigma: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

fn same_or_scalar(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(Error::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.numel(), b.numel()) {
        (n, m) if n == m => a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        (_, 1) => {
            let y = b.item();
            a.data().iter().map(|&x| f(x, y)).collect()
        }
        _ => {
            let x = a.item();
            b.data().iter().map(|&y| f(x, y)).collect()
        }
    }
}

/// Reduces an upstream gradient onto an operand that may have been broadcast
/// from a single element.
fn reduce_to(grad: Vec<f64>, numel: usize) -> Vec<f64> {
    if grad.len() == numel {
        grad
    } else {
        vec![grad.iter().sum()]
    }
}

fn matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::Shape {
        op,
        lhs: t.shape().to_vec(),
        rhs: vec![],
    })
}

fn accumulate(slot: &mut Option<Vec<f64>>, contrib: Vec<f64>) {
    match slot {
        Some(g) => g.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
        None => *slot = Some(contrib),
    }
}

/// `slot += scale · g` without an intermediate buffer.
fn accumulate_scaled(slot: &mut Option<Vec<f64>>, g: &[f64], scale: f64) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b),
        None if scale == 1.0 => *slot = Some(g.to_vec()),
        None => *slot = Some(g.iter().map(|b| scale * b).collect()),
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated into a leaf by previous [`Tape::backward`] calls.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies every tensor of `store` onto the tape, in store order.
    pub fn bind(&mut self, store: &ParamStore, trainable: bool) -> Vec<Var> {
        store
            .tensors()
            .iter()
            .map(|t| self.push(t.clone(), Op::Leaf, trainable))
            .collect()
    }

    /// Gradients of bound parameters, in bind order; `None` for untouched ones.
    pub fn grads_of(&self, vars: &[Var]) -> Vec<Option<Vec<f64>>> {
        vars.iter().map(|&v| self.leaf_grads[v.0].clone()).collect()
    }

    /// `x · w + b` with `x: [B×I]`, `w: [I×O]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (rows, inner) = matrix("linear", xv)?;
        let (w_in, cols) = matrix("linear", wv)?;
        if inner != w_in {
            return Err(Error::Shape {
                op: "linear",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; rows * cols];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [cols] {
                return Err(Error::Shape {
                    op: "linear bias",
                    lhs: wv.shape().to_vec(),
                    rhs: bv.shape().to_vec(),
                });
            }
            out.chunks_mut(cols).for_each(|row| row.copy_from_slice(bv.data()));
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(
            rows,
            inner,
            cols,
            xv.data(),
            (inner as isize, 1),
            wv.data(),
            (cols as isize, 1),
            beta,
            &mut out,
            cols,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::matrix(rows, cols, out), Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = same_or_scalar("add", self.value(a), self.value(b))?;
        let data = binary(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = same_or_scalar("sub", self.value(a), self.value(b))?;
        let data = binary(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = same_or_scalar("mul", self.value(a), self.value(b))?;
        let data = binary(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// `alpha·a + beta·b` for same-shaped operands.
    pub fn axpby(&mut self, a: Var, alpha: f64, b: Var, beta: f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: "axpby",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| alpha * x + beta * y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Axpby { a, alpha, b, beta }, rg))
    }

    /// `h + eps ⊙ sigma`, with `h`, `eps: [B×L]` and `sigma: [L]` broadcast
    /// over rows.
    pub fn add_noise(&mut self, h: Var, eps: Var, sigma: Var) -> Result<Var> {
        let (rows, cols) = self.row_op("add_noise", h, sigma)?;
        if self.value(eps).shape() != self.value(h).shape() {
            return Err(Error::Shape {
                op: "add_noise",
                lhs: self.value(h).shape().to_vec(),
                rhs: self.value(eps).shape().to_vec(),
            });
        }
        let sv = self.value(sigma).data();
        let mut data = self.value(h).data().to_vec();
        for (row, er) in data
            .chunks_exact_mut(cols)
            .zip(self.value(eps).data().chunks_exact(cols))
        {
            for ((x, e), s) in row.iter_mut().zip(er).zip(sv) {
                *x += e * s;
            }
        }
        let rg = self.rg(h) || self.rg(eps) || self.rg(sigma);
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::AddNoise { h, eps, sigma }, rg))
    }

    fn row_op(&mut self, op: &'static str, a: Var, v: Var) -> Result<(usize, usize)> {
        let (av, vv) = (self.value(a), self.value(v));
        let (rows, cols) = matrix(op, av)?;
        if vv.shape() != [cols] {
            return Err(Error::Shape {
                op,
                lhs: av.shape().to_vec(),
                rhs: vv.shape().to_vec(),
            });
        }
        Ok((rows, cols))
    }

    /// Adds a length-`L` vector to every row of a `[B×L]` matrix.
    pub fn add_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (rows, cols) = self.row_op("add_row", a, v)?;
        let vv = self.value(v).data();
        let data = self
            .value(a)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(vv).map(|(x, y)| x + y))
            .collect();
        let rg = self.rg(a) || self.rg(v);
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::AddRow(a, v), rg))
    }

    /// Multiplies every row of a `[B×L]` matrix elementwise by a length-`L` vector.
    pub fn mul_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (rows, cols) = self.row_op("mul_row", a, v)?;
        let vv = self.value(v).data();
        let data = self
            .value(a)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(vv).map(|(x, y)| x * y))
            .collect();
        let rg = self.rg(a) || self.rg(v);
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::MulRow(a, v), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Fires where `h >= threshold`. The backward pass uses a rectangular
    /// window of half-width `window` around the threshold.
    pub fn spike(&mut self, h: Var, threshold: f64, window: f64, rule: SpikeFn) -> Var {
        let value = match rule {
            SpikeFn::Heaviside => self.value(h).map(|x| if x - threshold >= 0.0 { 1.0 } else { 0.0 }),
            SpikeFn::Soft => self
                .value(h)
                .map(|x| ((x - threshold + window) / (2.0 * window)).clamp(0.0, 1.0)),
        };
        let rg = self.rg(h);
        self.push(
            value,
            Op::Spike {
                h,
                threshold,
                window,
                rule,
            },
            rg,
        )
    }

    /// `h·(1 − s) + v_reset·s`.
    pub fn hard_reset(&mut self, h: Var, s: Var, v_reset: f64) -> Result<Var> {
        let shape = same_or_scalar("hard_reset", self.value(h), self.value(s))?;
        let data = binary(self.value(h), self.value(s), |h, s| h * (1.0 - s) + v_reset * s);
        let rg = self.rg(h) || self.rg(s);
        Ok(self.push(Tensor::new(shape, data)?, Op::HardReset { h, s, v_reset }, rg))
    }

    /// Gaussian receptive-field stimulation.
    ///
    /// `state: [B×S]`, `mu`, `sigma: [S·P]`; output `[B×S·P]` where column
    /// `i·P + j` is `exp(−(s_i − μ_ij)² / (2σ_ij²))`.
    pub fn gaussian_rf(&mut self, state: Var, mu: Var, sigma: Var, pop: usize) -> Result<Var> {
        let sv = self.value(state);
        let (rows, dims) = matrix("gaussian_rf", sv)?;
        let width = dims * pop;
        for p in [mu, sigma] {
            if self.value(p).numel() != width {
                return Err(Error::Shape {
                    op: "gaussian_rf",
                    lhs: sv.shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        let (mv, gv) = (self.value(mu).data(), self.value(sigma).data());
        let mut out = Vec::with_capacity(rows * width);
        for row in sv.data().chunks(dims) {
            for (c, (&m, &g)) in mv.iter().zip(gv).enumerate() {
                let d = row[c / pop] - m;
                out.push((-d * d / (2.0 * g * g)).exp());
            }
        }
        let rg = self.rg(state) || self.rg(mu) || self.rg(sigma);
        Ok(self.push(
            Tensor::matrix(rows, width, out),
            Op::GaussianRf { state, mu, sigma, pop },
            rg,
        ))
    }

    /// Per-group dot product: `x: [B×G·P]`, `w: [G·P]` → `[B×G]`.
    pub fn group_dot(&mut self, x: Var, w: Var, groups: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (rows, cols) = matrix("group_dot", xv)?;
        if groups == 0 || cols % groups != 0 || wv.numel() != cols {
            return Err(Error::Shape {
                op: "group_dot",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let pop = cols / groups;
        let mut out = Vec::with_capacity(rows * groups);
        for row in xv.data().chunks(cols) {
            for (xs, ws) in row.chunks(pop).zip(wv.data().chunks(pop)) {
                out.push(xs.iter().zip(ws).map(|(a, b)| a * b).sum());
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Tensor::matrix(rows, groups, out), Op::GroupDot { x, w, groups }, rg))
    }

    /// Block-diagonal matrix product: `x: [B×G·P]`, `w: [G×P×P]` → `[B×G·P]`.
    pub fn block_linear(&mut self, x: Var, w: Var, groups: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (rows, cols) = matrix("block_linear", xv)?;
        let ok = groups > 0 && cols % groups == 0 && {
            let p = cols / groups;
            wv.shape() == [groups, p, p]
        };
        if !ok {
            return Err(Error::Shape {
                op: "block_linear",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let pop = cols / groups;
        let mut out = vec![0.0; rows * cols];
        for g in 0..groups {
            let off = g * pop;
            gemm(
                rows,
                pop,
                pop,
                &xv.data()[off..],
                (cols as isize, 1),
                &wv.data()[g * pop * pop..],
                (pop as isize, 1),
                0.0,
                &mut out[off..],
                cols,
            );
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Tensor::matrix(rows, cols, out), Op::BlockLinear { x, w, groups }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ra, ca) = matrix("concat_cols", av)?;
        let (rb, cb) = matrix("concat_cols", bv)?;
        if ra != rb {
            return Err(Error::Shape {
                op: "concat_cols",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av
            .data()
            .chunks(ca)
            .zip(bv.data().chunks(cb.max(1)))
            .flat_map(|(x, y)| x.iter().chain(y).copied())
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(ra, ca + cb, data), Op::ConcatCols(a, b), rg))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack_rows of nothing".into()))?;
        let (_, cols) = matrix("stack_rows", self.value(first))?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            match pv.dims2() {
                Some((r, c)) if c == cols => {
                    rows += r;
                    data.extend_from_slice(pv.data());
                }
                _ => {
                    return Err(Error::Shape {
                        op: "stack_rows",
                        lhs: self.value(first).shape().to_vec(),
                        rhs: pv.shape().to_vec(),
                    })
                }
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::StackRows(parts.to_vec()), rg))
    }

    /// Rows `start..start + rows` of a matrix.
    pub fn row_block(&mut self, src: Var, start: usize, rows: usize) -> Result<Var> {
        let sv = self.value(src);
        let (total, cols) = matrix("row_block", sv)?;
        if start + rows > total {
            return Err(Error::Shape {
                op: "row_block",
                lhs: sv.shape().to_vec(),
                rhs: vec![start, rows],
            });
        }
        let data = sv.data()[start * cols..(start + rows) * cols].to_vec();
        let rg = self.rg(src);
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::RowBlock { src, start }, rg))
    }

    /// Back-propagates from a scalar `loss`, adding into the gradients of
    /// every trainable leaf. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                accumulate(&mut self.leaf_grads[id], g);
                continue;
            }
            // Slices add straight into their source to avoid a full-size
            // buffer per slice.
            if let Op::RowBlock { src, start, .. } = self.nodes[id].op {
                if self.nodes[src.0].requires_grad {
                    let numel = self.nodes[src.0].value.numel();
                    let cols = self.nodes[src.0].value.dims2().unwrap().1;
                    let slot = grads[src.0].get_or_insert_with(|| vec![0.0; numel]);
                    slot[start * cols..start * cols + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(a, b)| *a += b);
                }
                continue;
            }
            if self.linear_backward(id, &g, &mut grads) {
                continue;
            }
            for (input, contrib) in self.local_grads(id, &g) {
                if self.nodes[input.0].requires_grad {
                    accumulate(&mut grads[input.0], contrib);
                }
            }
        }
        Ok(())
    }

    /// Accumulates the gradients of ops that are linear in their tensor
    /// inputs directly into `grads`. Returns false for every other op.
    fn linear_backward(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> bool {
        let same = |v: Var| self.nodes[v.0].value.numel() == g.len();
        let mut acc = |v: Var, scale: f64| {
            if self.rg(v) {
                accumulate_scaled(&mut grads[v.0], g, scale);
            }
        };
        match self.nodes[id].op {
            Op::Add(a, b) if same(a) && same(b) => {
                acc(a, 1.0);
                acc(b, 1.0);
            }
            Op::Sub(a, b) if same(a) && same(b) => {
                acc(a, 1.0);
                acc(b, -1.0);
            }
            Op::Scale(a, c) => acc(a, c),
            Op::Axpby { a, alpha, b, beta } => {
                acc(a, alpha);
                acc(b, beta);
            }
            Op::StackRows(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    if self.rg(p) {
                        accumulate_scaled(&mut grads[p.0], &g[offset..offset + n], 1.0);
                    }
                    offset += n;
                }
            }
            _ => return false,
        }
        true
    }

    fn local_grads(&self, id: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[id];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut out = Vec::with_capacity(3);
        match node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (rows, inner) = val(x).dims2().unwrap();
                let cols = val(w).dims2().unwrap().1;
                if self.rg(x) {
                    let mut dx = vec![0.0; rows * inner];
                    // dX = dY · Wᵀ
                    gemm(
                        rows,
                        cols,
                        inner,
                        g,
                        (cols as isize, 1),
                        val(w).data(),
                        (1, cols as isize),
                        0.0,
                        &mut dx,
                        inner,
                    );
                    out.push((x, dx));
                }
                if self.rg(w) {
                    let mut dw = vec![0.0; inner * cols];
                    // dW = Xᵀ · dY
                    gemm(
                        inner,
                        rows,
                        cols,
                        val(x).data(),
                        (1, inner as isize),
                        g,
                        (cols as isize, 1),
                        0.0,
                        &mut dw,
                        cols,
                    );
                    out.push((w, dw));
                }
                if let Some(b) = b.filter(|&b| self.rg(b)) {
                    let mut db = vec![0.0; cols];
                    for row in g.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    out.push((b, db));
                }
            }
            Op::Add(a, b) => {
                out.push((a, reduce_to(g.to_vec(), val(a).numel())));
                out.push((b, reduce_to(g.to_vec(), val(b).numel())));
            }
            Op::Sub(a, b) => {
                out.push((a, reduce_to(g.to_vec(), val(a).numel())));
                let neg = g.iter().map(|x| -x).collect();
                out.push((b, reduce_to(neg, val(b).numel())));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                if self.rg(a) {
                    let ga = mul_broadcast(g, bv.data());
                    out.push((a, reduce_to(ga, av.numel())));
                }
                if self.rg(b) {
                    let gb = mul_broadcast(g, av.data());
                    out.push((b, reduce_to(gb, bv.numel())));
                }
            }
            Op::Scale(a, c) => out.push((a, g.iter().map(|x| x * c).collect())),
            Op::AddRow(a, v) => {
                let cols = val(v).numel();
                if self.rg(a) {
                    out.push((a, g.to_vec()));
                }
                if self.rg(v) {
                    let mut dv = vec![0.0; cols];
                    g.chunks(cols)
                        .for_each(|row| dv.iter_mut().zip(row).for_each(|(d, r)| *d += r));
                    out.push((v, dv));
                }
            }
            Op::MulRow(a, v) => {
                let vv = val(v).data();
                let cols = vv.len();
                if self.rg(a) {
                    let da = g
                        .chunks(cols)
                        .flat_map(|row| row.iter().zip(vv).map(|(x, y)| x * y))
                        .collect();
                    out.push((a, da));
                }
                if self.rg(v) {
                    let mut dv = vec![0.0; cols];
                    for (grow, arow) in g.chunks(cols).zip(val(a).data().chunks(cols)) {
                        for ((d, gg), aa) in dv.iter_mut().zip(grow).zip(arow) {
                            *d += gg * aa;
                        }
                    }
                    out.push((v, dv));
                }
            }
            Op::Relu(a) => {
                let d = g
                    .iter()
                    .zip(val(a).data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                out.push((a, d));
            }
            Op::Tanh(a) => {
                let d = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                out.push((a, d));
            }
            Op::Square(a) => {
                let d = g.iter().zip(val(a).data()).map(|(g, x)| 2.0 * x * g).collect();
                out.push((a, d));
            }
            Op::Sum(a) => out.push((a, vec![g[0]; val(a).numel()])),
            Op::Mean(a) => {
                let n = val(a).numel();
                out.push((a, vec![g[0] / n as f64; n]));
            }
            Op::Spike {
                h,
                threshold,
                window,
                rule,
            } => {
                let d = g
                    .iter()
                    .zip(val(h).data())
                    .map(|(g, &x)| {
                        let dist = (x - threshold).abs();
                        match rule {
                            SpikeFn::Heaviside if dist <= window => *g,
                            SpikeFn::Soft if dist < window => g / (2.0 * window),
                            _ => 0.0,
                        }
                    })
                    .collect();
                out.push((h, d));
            }
            Op::HardReset { h, s, v_reset } => {
                let (hv, sv) = (val(h), val(s));
                if self.rg(h) {
                    let gh = mul_broadcast(g, &sv.data().iter().map(|s| 1.0 - s).collect::<Vec<_>>());
                    out.push((h, reduce_to(gh, hv.numel())));
                }
                if self.rg(s) {
                    let k: Vec<f64> = hv.data().iter().map(|h| v_reset - h).collect();
                    out.push((s, reduce_to(mul_broadcast(g, &k), sv.numel())));
                }
            }
            Op::GaussianRf { state, mu, sigma, pop } => {
                let sv = val(state);
                let (_, dims) = sv.dims2().unwrap();
                let width = dims * pop;
                let (mv, gv) = (val(mu).data(), val(sigma).data());
                let a = node.value.data();
                let mut ds = vec![0.0; sv.numel()];
                let mut dm = vec![0.0; width];
                let mut dg = vec![0.0; width];
                for (r, row) in sv.data().chunks(dims).enumerate() {
                    for c in 0..width {
                        let i = r * width + c;
                        let d = row[c / pop] - mv[c];
                        let s2 = gv[c] * gv[c];
                        let ga = g[i] * a[i];
                        ds[r * dims + c / pop] -= ga * d / s2;
                        dm[c] += ga * d / s2;
                        dg[c] += ga * d * d / (s2 * gv[c]);
                    }
                }
                out.push((state, ds));
                out.push((mu, dm));
                out.push((sigma, dg));
            }
            Op::GroupDot { x, w, groups } => {
                let (xv, wv) = (val(x), val(w));
                let cols = wv.numel();
                let pop = cols / groups;
                let mut dx = vec![0.0; xv.numel()];
                let mut dw = vec![0.0; cols];
                for (r, row) in xv.data().chunks(cols).enumerate() {
                    for grp in 0..groups {
                        let gg = g[r * groups + grp];
                        for p in 0..pop {
                            let c = grp * pop + p;
                            dx[r * cols + c] = gg * wv.data()[c];
                            dw[c] += gg * row[c];
                        }
                    }
                }
                out.push((x, dx));
                out.push((w, dw));
            }
            Op::BlockLinear { x, w, groups } => {
                let (xv, wv) = (val(x), val(w));
                let (rows, cols) = xv.dims2().unwrap();
                let pop = cols / groups;
                if self.rg(x) {
                    let mut dx = vec![0.0; rows * cols];
                    for grp in 0..groups {
                        let off = grp * pop;
                        gemm(
                            rows,
                            pop,
                            pop,
                            &g[off..],
                            (cols as isize, 1),
                            &wv.data()[grp * pop * pop..],
                            (1, pop as isize),
                            0.0,
                            &mut dx[off..],
                            cols,
                        );
                    }
                    out.push((x, dx));
                }
                if self.rg(w) {
                    let mut dw = vec![0.0; groups * pop * pop];
                    for grp in 0..groups {
                        let off = grp * pop;
                        gemm(
                            pop,
                            rows,
                            pop,
                            &xv.data()[off..],
                            (1, cols as isize),
                            &g[off..],
                            (cols as isize, 1),
                            0.0,
                            &mut dw[grp * pop * pop..(grp + 1) * pop * pop],
                            pop,
                        );
                    }
                    out.push((w, dw));
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).dims2().unwrap().1;
                let cb = val(b).dims2().unwrap().1;
                let mut da = Vec::with_capacity(val(a).numel());
                let mut db = Vec::with_capacity(val(b).numel());
                for row in g.chunks(ca + cb) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                out.push((a, da));
                out.push((b, db));
            }
            Op::StackRows(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    out.push((p, g[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::RowBlock { .. } => unreachable!("row blocks are handled in backward"),
            Op::Axpby { a, alpha, b, beta } => {
                if self.rg(a) {
                    out.push((a, g.iter().map(|x| alpha * x).collect()));
                }
                if self.rg(b) {
                    out.push((b, g.iter().map(|x| beta * x).collect()));
                }
            }
            Op::AddNoise { h, eps, sigma } => {
                let sv = val(sigma).data();
                let cols = sv.len();
                if self.rg(h) {
                    out.push((h, g.to_vec()));
                }
                if self.rg(eps) {
                    let de = g
                        .chunks(cols)
                        .flat_map(|row| row.iter().zip(sv).map(|(x, s)| x * s))
                        .collect();
                    out.push((eps, de));
                }
                if self.rg(sigma) {
                    let mut ds = vec![0.0; cols];
                    for (grow, erow) in g.chunks(cols).zip(val(eps).data().chunks(cols)) {
                        for ((d, x), e) in ds.iter_mut().zip(grow).zip(erow) {
                            *d += x * e;
                        }
                    }
                    out.push((sigma, ds));
                }
            }
        }
        out
    }
}

fn mul_broadcast(g: &[f64], other: &[f64]) -> Vec<f64> {
    if other.len() == g.len() {
        g.iter().zip(other).map(|(a, b)| a * b).collect()
    } else {
        let y = other[0];
        g.iter().map(|a| a * y).collect()
    }
}
