//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation evaluates eagerly and appends a node to the tape, so node
//! ids are already a topological order. [`Tape::grad`] walks the ids backwards
//! once and builds the gradient out of ordinary taped operations. The returned
//! gradients are therefore differentiable themselves, which is what the
//! gradient-penalty loss needs (a gradient norm inside the critic loss).

use std::cell::RefCell;
use std::rc::Rc;

use super::{NumericsError, Tensor};

/// Marks a gathered position that reads as zero (padding).
pub const PAD_INDEX: u32 = u32::MAX;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MulConst(usize, Rc<Tensor>),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Sum(usize),
    BroadcastScalar(usize),
    SumRows(usize),
    BroadcastRows(usize),
    SumCols(usize),
    BroadcastCols(usize),
    Reshape(usize),
    Gather { src: usize, index: Rc<[u32]> },
    ScatterAdd { src: usize, index: Rc<[u32]> },
    ConcatCols(Vec<usize>),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sigmoid(usize),
    Sqrt(usize),
    Recip(usize),
    SafeRecip(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Clamp(usize, f64, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MulConst(..) => "mul_const",
            Op::MatMul { .. } => "matmul",
            Op::Sum(..) => "sum",
            Op::BroadcastScalar(..) => "broadcast_scalar",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::Reshape(..) => "reshape",
            Op::Gather { .. } => "gather",
            Op::ScatterAdd { .. } => "scatter_add",
            Op::ConcatCols(..) => "concat_cols",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Sqrt(..) => "sqrt",
            Op::Recip(..) => "recip",
            Op::SafeRecip(..) => "safe_recip",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Clamp(..) => "clamp",
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Records operations in execution order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
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

    /// A leaf that gradients are taken with respect to.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, needs_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Concatenates along the last axis. All parts must share the leading dimensions.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>, NumericsError> {
        let first = parts
            .first()
            .ok_or_else(|| NumericsError::Shape("concat of zero tensors".into()))?;
        let lead_shape = {
            let v = first.value();
            v.shape()[..v.shape().len().saturating_sub(1)].to_vec()
        };
        let rows: usize = lead_shape.iter().product();
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let mut widths = Vec::with_capacity(parts.len());
        for v in &values {
            let s = v.shape();
            if s.is_empty() || s[..s.len() - 1] != lead_shape[..] {
                return Err(NumericsError::Shape(format!(
                    "concat_cols: {:?} does not match leading shape {lead_shape:?}",
                    s
                )));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in values.iter().zip(&widths) {
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead_shape;
        shape.push(total);
        let needs = parts.iter().any(|p| self.needs(p.id));
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), needs))
    }

    /// Gradients of a scalar `output` with respect to each of `wrt`.
    ///
    /// The gradients are recorded on this tape and may be differentiated again.
    /// Inputs that `output` does not depend on get a zero gradient.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>, NumericsError> {
        let out_value = output.value();
        if out_value.numel() != 1 {
            return Err(NumericsError::Contract(format!(
                "loss must be a scalar, got shape {:?}",
                out_value.shape()
            )));
        }
        let mut grads: Vec<Option<usize>> = vec![None; output.id + 1];
        grads[output.id] = Some(self.constant(Tensor::ones(out_value.shape())).id);

        for id in (0..=output.id).rev() {
            let Some(gid) = grads[id] else { continue };
            let (op, needs, finite) = {
                let nodes = self.nodes.borrow();
                let n = &nodes[id];
                (n.op.clone(), n.needs_grad, n.value.is_finite() && nodes[gid].value.is_finite())
            };
            if !needs {
                continue;
            }
            if !finite {
                return Err(NumericsError::Numerical { node: id, op: op.name() });
            }
            let g = Var { tape: self, id: gid };
            for (input, contribution) in self.backward_rule(id, &op, g)? {
                grads[input] = Some(match grads[input] {
                    None => contribution.id,
                    Some(prev) => Var { tape: self, id: prev }.add(contribution)?.id,
                });
            }
        }

        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(id) => Ok(Var { tape: self, id }),
                None => Ok(self.constant(Tensor::zeros(w.value().shape()))),
            })
            .collect()
    }

    /// First-order gradient values, detached from the tape.
    pub fn grad_values<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Tensor>, NumericsError> {
        Ok(self
            .grad(output, wrt)?
            .into_iter()
            .map(|g| (*g.value()).clone())
            .collect())
    }

    fn backward_rule<'t>(
        &'t self,
        id: usize,
        op: &Op,
        g: Var<'t>,
    ) -> Result<Vec<(usize, Var<'t>)>, NumericsError> {
        let var = |i: usize| Var { tape: self, id: i };
        let me = var(id);
        let mut out = Vec::with_capacity(2);
        let mut emit = |input: usize, f: &mut dyn FnMut() -> Result<Var<'t>, NumericsError>| {
            if self.needs(input) {
                out.push((input, f()?));
            }
            Ok::<(), NumericsError>(())
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, &mut || Ok(g))?;
                emit(*b, &mut || Ok(g))?;
            }
            Op::Sub(a, b) => {
                emit(*a, &mut || Ok(g))?;
                emit(*b, &mut || Ok(g.neg()))?;
            }
            Op::Mul(a, b) => {
                emit(*a, &mut || g.mul(var(*b)))?;
                emit(*b, &mut || g.mul(var(*a)))?;
            }
            Op::Neg(a) => emit(*a, &mut || Ok(g.neg()))?,
            Op::Scale(a, s) => emit(*a, &mut || Ok(g.scale(*s)))?,
            Op::AddScalar(a) => emit(*a, &mut || Ok(g))?,
            Op::MulConst(a, c) => emit(*a, &mut || g.mul_const(Rc::clone(c)))?,
            Op::MatMul { a, b, ta, tb } => {
                let (a, b, ta, tb) = (var(*a), var(*b), *ta, *tb);
                emit(a.id, &mut || if ta { b.matmul_t(g, tb, true) } else { g.matmul_t(b, false, !tb) })?;
                emit(b.id, &mut || if tb { g.matmul_t(a, true, ta) } else { a.matmul_t(g, !ta, false) })?;
            }
            Op::Sum(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                emit(*a, &mut || Ok(g.broadcast_scalar(&shape)))?;
            }
            Op::BroadcastScalar(a) => emit(*a, &mut || Ok(g.sum()))?,
            Op::SumRows(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                emit(*a, &mut || g.broadcast_rows(&shape))?;
            }
            Op::BroadcastRows(a) => emit(*a, &mut || Ok(g.sum_rows()))?,
            Op::SumCols(a) => {
                let n = *self.value_of(*a).shape().last().unwrap_or(&1);
                emit(*a, &mut || Ok(g.broadcast_cols(n)))?;
            }
            Op::BroadcastCols(a) => emit(*a, &mut || Ok(g.sum_cols()))?,
            Op::Reshape(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                emit(*a, &mut || g.reshape(&shape))?;
            }
            Op::Gather { src, index } => {
                let shape = self.value_of(*src).shape().to_vec();
                emit(*src, &mut || g.scatter_add(Rc::clone(index), &shape))?;
            }
            Op::ScatterAdd { src, index } => {
                let shape = self.value_of(*src).shape().to_vec();
                emit(*src, &mut || g.gather(Rc::clone(index), &shape))?;
            }
            Op::ConcatCols(parts) => {
                let total = *me.value().shape().last().unwrap();
                let rows = me.value().numel() / total;
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value_of(p).shape().to_vec();
                    let w = *shape.last().unwrap();
                    let start = offset;
                    emit(p, &mut || {
                        let index: Rc<[u32]> = (0..rows)
                            .flat_map(|r| (0..w).map(move |c| (r * total + start + c) as u32))
                            .collect();
                        g.gather(index, &shape)
                    })?;
                    offset += w;
                }
            }
            Op::Exp(a) => emit(*a, &mut || g.mul(me))?,
            Op::Log(a) => emit(*a, &mut || g.mul(var(*a).recip()))?,
            Op::Tanh(a) => emit(*a, &mut || g.mul(me.mul(me)?.neg().add_scalar(1.0)))?,
            Op::Sigmoid(a) => emit(*a, &mut || g.mul(me.mul(me.neg().add_scalar(1.0))?))?,
            Op::Sqrt(a) => emit(*a, &mut || g.mul(me.safe_recip().scale(0.5)))?,
            Op::Recip(a) | Op::SafeRecip(a) => emit(*a, &mut || Ok(g.mul(me.mul(me)?)?.neg()))?,
            Op::Relu(a) => {
                let mask = self.value_of(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                emit(*a, &mut || g.mul_const(Rc::new(mask.clone())))?;
            }
            Op::LeakyRelu(a, alpha) => {
                let mask = self.value_of(*a).map(|x| if x > 0.0 { 1.0 } else { *alpha });
                emit(*a, &mut || g.mul_const(Rc::new(mask.clone())))?;
            }
            Op::Clamp(a, lo, hi) => {
                let mask = self
                    .value_of(*a)
                    .map(|x| if x >= *lo && x <= *hi { 1.0 } else { 0.0 });
                emit(*a, &mut || g.mul_const(Rc::new(mask.clone())))?;
            }
        }
        Ok(out)
    }
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> NumericsError {
    NumericsError::Shape(format!("{what}: {a:?} vs {b:?}"))
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn unary(&self, op: Op, value: Tensor) -> Var<'t> {
        self.tape.push(value, op, self.requires_grad())
    }

    fn binary(&self, other: Var<'t>, op: Op, value: Tensor) -> Var<'t> {
        let needs = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, needs)
    }

    fn same_shape(&self, other: &Var<'t>, what: &str) -> Result<(Rc<Tensor>, Rc<Tensor>), NumericsError> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(shape_err(what, a.shape(), b.shape()));
        }
        Ok((a, b))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (a, b) = self.same_shape(&other, "add")?;
        Ok(self.binary(other, Op::Add(self.id, other.id), a.zip_map(&b, |x, y| x + y)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (a, b) = self.same_shape(&other, "sub")?;
        Ok(self.binary(other, Op::Sub(self.id, other.id), a.zip_map(&b, |x, y| x - y)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (a, b) = self.same_shape(&other, "mul")?;
        Ok(self.binary(other, Op::Mul(self.id, other.id), a.zip_map(&b, |x, y| x * y)))
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.id), self.value().map(|x| -x))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), self.value().map(|x| x * s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), self.value().map(|x| x + s))
    }

    /// Elementwise product with a constant (masks, fixed weights).
    pub fn mul_const(self, c: Rc<Tensor>) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        if a.shape() != c.shape() {
            return Err(shape_err("mul_const", a.shape(), c.shape()));
        }
        let value = a.zip_map(&c, |x, y| x * y);
        Ok(self.unary(Op::MulConst(self.id, c), value))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` where `op` optionally transposes a 2-D operand.
    pub fn matmul_t(self, other: Var<'t>, ta: bool, tb: bool) -> Result<Var<'t>, NumericsError> {
        let (a, b) = (self.value(), other.value());
        let value = matmul_values(&a, &b, ta, tb)?;
        Ok(self.binary(other, Op::MatMul { a: self.id, b: other.id, ta, tb }, value))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().sum();
        self.unary(Op::Sum(self.id), Tensor::scalar(s))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn broadcast_scalar(self, shape: &[usize]) -> Var<'t> {
        let v = self.value().item();
        self.unary(Op::BroadcastScalar(self.id), Tensor::full(shape, v))
    }

    /// Sums over every axis but the last: `[.., n] -> [n]`.
    pub fn sum_rows(self) -> Var<'t> {
        let a = self.value();
        let (m, n) = a.as_matrix_dims();
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, &x) in out.iter_mut().zip(&a.data()[r * n..(r + 1) * n]) {
                *o += x;
            }
        }
        self.unary(Op::SumRows(self.id), Tensor::new(vec![n], out).expect("sum_rows shape"))
    }

    /// Repeats a `[n]` vector along leading axes to `shape` (last axis `n`).
    pub fn broadcast_rows(self, shape: &[usize]) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        if a.shape().len() != 1 || shape.last() != Some(&a.numel()) {
            return Err(shape_err("broadcast_rows", a.shape(), shape));
        }
        let n = a.numel();
        let m = shape.iter().product::<usize>() / n.max(1);
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            data.extend_from_slice(a.data());
        }
        Ok(self.unary(Op::BroadcastRows(self.id), Tensor::new(shape.to_vec(), data)?))
    }

    /// Sums over the last axis: `[.., n] -> [..]`.
    pub fn sum_cols(self) -> Var<'t> {
        let a = self.value();
        let (m, n) = a.as_matrix_dims();
        let out: Vec<f64> = (0..m).map(|r| a.data()[r * n..(r + 1) * n].iter().sum()).collect();
        let shape = a.shape()[..a.shape().len().saturating_sub(1)].to_vec();
        self.unary(Op::SumCols(self.id), Tensor::new(shape, out).expect("sum_cols shape"))
    }

    /// Appends a last axis of length `n`, repeating each value.
    pub fn broadcast_cols(self, n: usize) -> Var<'t> {
        let a = self.value();
        let data: Vec<f64> = a.data().iter().flat_map(|&x| std::iter::repeat_n(x, n)).collect();
        let mut shape = a.shape().to_vec();
        shape.push(n);
        self.unary(Op::BroadcastCols(self.id), Tensor::new(shape, data).expect("broadcast_cols shape"))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, NumericsError> {
        let value = (*self.value()).clone().reshaped(shape)?;
        Ok(self.unary(Op::Reshape(self.id), value))
    }

    /// `out[i] = self[index[i]]`, or zero where `index[i] == PAD_INDEX`.
    pub fn gather(self, index: Rc<[u32]>, out_shape: &[usize]) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        let n: usize = out_shape.iter().product();
        if n != index.len() {
            return Err(shape_err("gather index length", &[index.len()], out_shape));
        }
        let src = a.data();
        let mut data = Vec::with_capacity(n);
        for &i in index.iter() {
            data.push(if i == PAD_INDEX {
                0.0
            } else {
                *src.get(i as usize).ok_or_else(|| {
                    NumericsError::Shape(format!("gather index {i} out of range {}", src.len()))
                })?
            });
        }
        let value = Tensor::new(out_shape.to_vec(), data)?;
        Ok(self.unary(Op::Gather { src: self.id, index }, value))
    }

    /// Adjoint of [`Var::gather`]: `out[index[i]] += self[i]`.
    pub fn scatter_add(self, index: Rc<[u32]>, out_shape: &[usize]) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        if a.numel() != index.len() {
            return Err(shape_err("scatter_add index length", &[index.len()], a.shape()));
        }
        let mut out = Tensor::zeros(out_shape);
        let dst = out.data_mut();
        for (&i, &x) in index.iter().zip(a.data()) {
            if i != PAD_INDEX {
                *dst.get_mut(i as usize).ok_or_else(|| {
                    NumericsError::Shape(format!("scatter index {i} out of range"))
                })? += x;
            }
        }
        Ok(self.unary(Op::ScatterAdd { src: self.id, index }, out))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), self.value().map(f64::exp))
    }

    pub fn log(self) -> Var<'t> {
        self.unary(Op::Log(self.id), self.value().map(f64::ln))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), self.value().map(f64::tanh))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), self.value().map(sigmoid))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), self.value().map(f64::sqrt))
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(Op::Recip(self.id), self.value().map(|x| 1.0 / x))
    }

    /// `1/x`, except exactly zero where `x == 0`.
    pub fn safe_recip(self) -> Var<'t> {
        self.unary(Op::SafeRecip(self.id), self.value().map(|x| if x == 0.0 { 0.0 } else { 1.0 / x }))
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self).expect("square of own shape")
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), self.value().map(|x| x.max(0.0)))
    }

    pub fn leaky_relu(self, alpha: f64) -> Var<'t> {
        self.unary(
            Op::LeakyRelu(self.id, alpha),
            self.value().map(|x| if x > 0.0 { x } else { alpha * x }),
        )
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), self.value().map(|x| x.clamp(lo, hi)))
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

fn matmul_values(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor, NumericsError> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(shape_err("matmul needs 2-D operands", a.shape(), b.shape()));
    }
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(shape_err("matmul inner dimension", a.shape(), b.shape()));
    }
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = Tensor::zeros(&[m, n]);
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: the pointers cover `m*k`, `k*n` and `m*n` elements with the
        // strides computed above, and `out` does not alias the inputs.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.data_mut().as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let tape = Tape::new();
        let x = tape.param(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0]));
        let g = tape.grad_values(x.sum(), &[x]).unwrap();
        assert_eq!(g[0], Tensor::ones(&[2, 3]));
    }

    #[test]
    fn fan_out_accumulates() {
        // y = x*x + 3x, dy/dx = 2x + 3
        let tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, -4.0]));
        let y = x.mul(x).unwrap().add(x.scale(3.0)).unwrap().sum();
        let g = tape.grad_values(y, &[x]).unwrap();
        assert_eq!(g[0].data(), &[5.0, 7.0, -5.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        assert!(matches!(tape.grad(x, &[x]), Err(NumericsError::Contract(_))));
    }

    #[test]
    fn nan_reports_node() {
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[-1.0, 4.0]));
        let y = x.sqrt().sum();
        match tape.grad(y, &[x]) {
            Err(NumericsError::Numerical { op, .. }) => assert_eq!(op, "sum"),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn matmul_transposes_agree() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3, 2], &[1.0, 0.0, -1.0, 2.0, 0.5, 1.0]);
        let plain = matmul_values(&a, &b, false, false).unwrap();
        assert_eq!(plain.data(), &[0.5, 7.0, 2.0, 16.0]);
        let at = t(&[3, 2], &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let bt = t(&[2, 3], &[1.0, -1.0, 0.5, 0.0, 2.0, 1.0]);
        assert_eq!(matmul_values(&at, &bt, true, true).unwrap(), plain);
    }

    #[test]
    fn second_derivative_of_cube() {
        // f = sum(x^3); grad = 3x^2; d/dx sum(grad) = 6x
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[1.5, -2.0]));
        let f = x.mul(x).unwrap().mul(x).unwrap().sum();
        let g = tape.grad(f, &[x]).unwrap()[0];
        assert_eq!(g.value().data(), &[6.75, 12.0]);
        let gg = tape.grad_values(g.sum(), &[x]).unwrap();
        assert_eq!(gg[0].data(), &[9.0, -12.0]);
    }

    #[test]
    fn unreached_input_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        let y = tape.param(Tensor::ones(&[3]));
        let g = tape.grad_values(x.sum(), &[y]).unwrap();
        assert_eq!(g[0], Tensor::zeros(&[3]));
    }
}
