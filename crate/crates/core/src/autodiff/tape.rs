use std::cell::RefCell;
use std::fmt;

use super::functional::{kl_div_values, relu_values, softmax_values};
use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    /// Row-major `rows x cols`.
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Identity(usize),
    Linear { w: usize, b: usize, x: usize },
    Relu(usize),
    Softmax(usize),
    KlDiv { target: usize, pred: usize },
    CrossEntropy { p: usize, label: usize },
    Focal { p: usize, label: usize, gamma: T },
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Sum(usize),
    AddN(Vec<usize>),
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Shape,
    op: Op<T>,
    stop_grad: bool,
    // Lazily allocated on the first backward pass that reaches the node.
    grad: Vec<T>,
}

/// Recording of one eager computation. Single-threaded by construction.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Vec<T>, shape: Shape, op: Op<T>, stop_grad: bool) -> Var<'_, T> {
        debug_assert_eq!(value.len(), shape.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            shape,
            op,
            stop_grad,
            grad: Vec::new(),
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn leaf(&self, value: Vec<T>, shape: Shape) -> Result<Var<'_, T>> {
        if value.len() != shape.len() {
            return dim_err(format!(
                "leaf of shape {shape} given {} values",
                value.len()
            ));
        }
        Ok(self.push(value, shape, Op::Leaf, false))
    }

    pub fn scalar(&self, v: T) -> Var<'_, T> {
        self.push(vec![v], Shape::Scalar, Op::Leaf, false)
    }

    pub fn vector(&self, v: Vec<T>) -> Var<'_, T> {
        let n = v.len();
        self.push(v, Shape::Vector(n), Op::Leaf, false)
    }

    pub fn matrix(&self, rows: usize, cols: usize, v: Vec<T>) -> Result<Var<'_, T>> {
        self.leaf(v, Shape::Matrix(rows, cols))
    }

    fn check_owner(&self, v: Var<'_, T>) {
        assert!(
            std::ptr::eq(self, v.tape),
            "variable belongs to a different tape"
        );
    }

    /// `W x + b` for `W: [out x in]`, `b: [out]`, `x: [in]`.
    pub fn linear<'t>(&'t self, w: Var<'t, T>, b: Var<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_owner(w);
        self.check_owner(b);
        self.check_owner(x);
        let out = {
            let nodes = self.nodes.borrow();
            let (wn, bn, xn) = (&nodes[w.id], &nodes[b.id], &nodes[x.id]);
            let (rows, cols) = match wn.shape {
                Shape::Matrix(r, c) => (r, c),
                other => return dim_err(format!("linear weights must be a matrix, got {other}")),
            };
            if xn.value.len() != cols || matches!(xn.shape, Shape::Matrix(..)) {
                return dim_err(format!("linear: weights {} vs input {}", wn.shape, xn.shape));
            }
            if bn.value.len() != rows || matches!(bn.shape, Shape::Matrix(..)) {
                return dim_err(format!("linear: weights {} vs bias {}", wn.shape, bn.shape));
            }
            let mut out = bn.value.clone();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &wn.value[r * cols..(r + 1) * cols];
                let mut acc = T::zero();
                for (wv, xv) in row.iter().zip(&xn.value) {
                    acc += *wv * *xv;
                }
                *o += acc;
            }
            out
        };
        let n = out.len();
        Ok(self.push(
            out,
            Shape::Vector(n),
            Op::Linear {
                w: w.id,
                b: b.id,
                x: x.id,
            },
            false,
        ))
    }

    pub fn add<'t>(&'t self, a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let (an, bn) = (&nodes[a.id], &nodes[b.id]);
            if an.shape != bn.shape {
                return dim_err(format!("add: {} vs {}", an.shape, bn.shape));
            }
            let v = an.value.iter().zip(&bn.value).map(|(x, y)| *x + *y).collect();
            (v, an.shape)
        };
        Ok(self.push(value, shape, Op::Add(a.id, b.id), false))
    }

    /// Elementwise product of equally shaped nodes.
    pub fn mul<'t>(&'t self, a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let (an, bn) = (&nodes[a.id], &nodes[b.id]);
            if an.shape != bn.shape {
                return dim_err(format!("mul: {} vs {}", an.shape, bn.shape));
            }
            let v = an.value.iter().zip(&bn.value).map(|(x, y)| *x * *y).collect();
            (v, an.shape)
        };
        Ok(self.push(value, shape, Op::Mul(a.id, b.id), false))
    }

    pub fn scale<'t>(&'t self, a: Var<'t, T>, c: T) -> Var<'t, T> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.id];
            (n.value.iter().map(|v| *v * c).collect(), n.shape)
        };
        self.push(value, shape, Op::Scale(a.id, c), false)
    }

    pub fn sum<'t>(&'t self, a: Var<'t, T>) -> Var<'t, T> {
        let total = {
            let nodes = self.nodes.borrow();
            nodes[a.id].value.iter().copied().fold(T::zero(), |x, y| x + y)
        };
        self.push(vec![total], Shape::Scalar, Op::Sum(a.id), false)
    }

    /// Sum of scalar nodes. An empty slice yields a constant zero.
    pub fn add_n<'t>(&'t self, terms: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let total = {
            let nodes = self.nodes.borrow();
            let mut total = T::zero();
            for t in terms {
                let n = &nodes[t.id];
                if n.shape != Shape::Scalar {
                    return dim_err(format!("add_n expects scalars, got {}", n.shape));
                }
                total += n.value[0];
            }
            total
        };
        Ok(self.push(
            vec![total],
            Shape::Scalar,
            Op::AddN(terms.iter().map(|t| t.id).collect()),
            false,
        ))
    }

    /// Arithmetic mean of scalar nodes; zero for an empty slice.
    pub fn mean<'t>(&'t self, terms: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let total = self.add_n(terms)?;
        if terms.is_empty() {
            return Ok(total);
        }
        Ok(self.scale(total, T::one() / T::of(terms.len() as f64)))
    }

    pub fn relu<'t>(&'t self, a: Var<'t, T>) -> Var<'t, T> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.id];
            (relu_values(&n.value), n.shape)
        };
        self.push(value, shape, Op::Relu(a.id), false)
    }

    pub fn softmax<'t>(&'t self, a: Var<'t, T>) -> Result<Var<'t, T>> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.id];
            if matches!(n.shape, Shape::Matrix(..)) {
                return dim_err("softmax expects a vector");
            }
            (softmax_values(&n.value)?, n.shape)
        };
        Ok(self.push(value, shape, Op::Softmax(a.id), false))
    }

    /// Forward-identical copy through which no gradient flows back.
    pub fn stop_gradient<'t>(&'t self, a: Var<'t, T>) -> Var<'t, T> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            (nodes[a.id].value.clone(), nodes[a.id].shape)
        };
        self.push(value, shape, Op::Identity(a.id), true)
    }

    /// `KL(target || pred)`. Probabilities in `pred` are floored at
    /// [`Scalar::prob_floor`] inside the logarithm.
    pub fn kl_div<'t>(&'t self, target: Var<'t, T>, pred: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = {
            let nodes = self.nodes.borrow();
            let (tn, pn) = (&nodes[target.id], &nodes[pred.id]);
            if tn.value.len() != pn.value.len() {
                return dim_err(format!("kl_div: {} vs {}", tn.shape, pn.shape));
            }
            kl_div_values(&tn.value, &pn.value)
        };
        Ok(self.push(
            vec![v],
            Shape::Scalar,
            Op::KlDiv {
                target: target.id,
                pred: pred.id,
            },
            false,
        ))
    }

    /// `-ln(max(p[label], floor))`.
    pub fn cross_entropy<'t>(&'t self, p: Var<'t, T>, label: usize) -> Result<Var<'t, T>> {
        let v = {
            let nodes = self.nodes.borrow();
            let pv = &nodes[p.id].value;
            let Some(&pl) = pv.get(label) else {
                return Err(Error::Contract(format!(
                    "label {label} out of range for {} classes",
                    pv.len()
                )));
            };
            -pl.max(T::prob_floor()).ln()
        };
        Ok(self.push(vec![v], Shape::Scalar, Op::CrossEntropy { p: p.id, label }, false))
    }

    /// `-(1 - p[label])^gamma ln(p[label])`.
    pub fn focal<'t>(&'t self, p: Var<'t, T>, label: usize, gamma: T) -> Result<Var<'t, T>> {
        if gamma < T::zero() {
            return Err(Error::Contract(format!("focal gamma {gamma} < 0")));
        }
        let v = {
            let nodes = self.nodes.borrow();
            let pv = &nodes[p.id].value;
            let Some(&pl) = pv.get(label) else {
                return Err(Error::Contract(format!(
                    "label {label} out of range for {} classes",
                    pv.len()
                )));
            };
            -(T::one() - pl).powf(gamma) * pl.max(T::prob_floor()).ln()
        };
        Ok(self.push(
            vec![v],
            Shape::Scalar,
            Op::Focal {
                p: p.id,
                label,
                gamma,
            },
            false,
        ))
    }

    pub fn value(&self, v: Var<'_, T>) -> Vec<T> {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn shape(&self, v: Var<'_, T>) -> Shape {
        self.nodes.borrow()[v.id].shape
    }

    pub fn is_stop_grad(&self, v: Var<'_, T>) -> bool {
        self.nodes.borrow()[v.id].stop_grad
    }

    /// Accumulated gradient; zeros if no backward pass reached the node.
    pub fn grad(&self, v: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let n = &nodes[v.id];
        if n.grad.is_empty() {
            vec![T::zero(); n.value.len()]
        } else {
            n.grad.clone()
        }
    }

    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad.clear();
        }
    }

    /// Accumulates `d loss / d node` into every node reachable from `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        self.check_owner(loss);
        let mut nodes = self.nodes.borrow_mut();
        if nodes[loss.id].shape != Shape::Scalar {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                nodes[loss.id].shape
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.id + 1];
        adj[loss.id] = Some(vec![T::one()]);

        for i in (0..=loss.id).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !nodes[i].stop_grad {
                propagate(&nodes, i, &g, &mut adj);
            }
            let slot = &mut nodes[i].grad;
            if slot.is_empty() {
                *slot = g;
            } else {
                for (s, v) in slot.iter_mut().zip(&g) {
                    *s += *v;
                }
            }
        }
        Ok(())
    }
}

fn slot<'a, T: Scalar>(adj: &'a mut [Option<Vec<T>>], id: usize, len: usize) -> &'a mut Vec<T> {
    adj[id].get_or_insert_with(|| vec![T::zero(); len])
}

fn propagate<T: Scalar>(nodes: &[Node<T>], i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::Identity(a) => {
            let s = slot(adj, *a, g.len());
            for (s, v) in s.iter_mut().zip(g) {
                *s += *v;
            }
        }
        Op::Linear { w, b, x } => {
            let cols = nodes[*x].value.len();
            let wv = &nodes[*w].value;
            let xv = &nodes[*x].value;
            {
                let sw = slot(adj, *w, wv.len());
                for (r, gr) in g.iter().enumerate() {
                    let row = &mut sw[r * cols..(r + 1) * cols];
                    for (s, xj) in row.iter_mut().zip(xv) {
                        *s += *gr * *xj;
                    }
                }
            }
            {
                let sb = slot(adj, *b, g.len());
                for (s, v) in sb.iter_mut().zip(g) {
                    *s += *v;
                }
            }
            let sx = slot(adj, *x, cols);
            for (r, gr) in g.iter().enumerate() {
                let row = &wv[r * cols..(r + 1) * cols];
                for (s, wj) in sx.iter_mut().zip(row) {
                    *s += *gr * *wj;
                }
            }
        }
        Op::Relu(a) => {
            let av = &nodes[*a].value;
            let s = slot(adj, *a, av.len());
            for ((s, x), gv) in s.iter_mut().zip(av).zip(g) {
                if *x > T::zero() {
                    *s += *gv;
                }
            }
        }
        Op::Softmax(a) => {
            let y = &node.value;
            let dot = y.iter().zip(g).fold(T::zero(), |acc, (yv, gv)| acc + *yv * *gv);
            let s = slot(adj, *a, y.len());
            for ((s, yv), gv) in s.iter_mut().zip(y).zip(g) {
                *s += *yv * (*gv - dot);
            }
        }
        Op::KlDiv { target, pred } => {
            let floor = T::prob_floor();
            let tv = &nodes[*target].value;
            let pv = &nodes[*pred].value;
            let g0 = g[0];
            {
                let sp = slot(adj, *pred, pv.len());
                for ((s, t), p) in sp.iter_mut().zip(tv).zip(pv) {
                    if *p > floor {
                        *s -= g0 * *t / *p;
                    }
                }
            }
            // d/dt [t ln t - t ln p] = ln(t / p) + 1; taken as 0 where t == 0.
            let st = slot(adj, *target, tv.len());
            for ((s, t), p) in st.iter_mut().zip(tv).zip(pv) {
                if *t > T::zero() {
                    *s += g0 * (t.ln() - p.max(floor).ln() + T::one());
                }
            }
        }
        Op::CrossEntropy { p, label } => {
            let pv = &nodes[*p].value;
            let pl = pv[*label];
            let s = slot(adj, *p, pv.len());
            if pl > T::prob_floor() {
                s[*label] -= g[0] / pl;
            }
        }
        Op::Focal { p, label, gamma } => {
            let pv = &nodes[*p].value;
            let pl = pv[*label];
            let floor = T::prob_floor();
            let q = T::one() - pl;
            let log_p = pl.max(floor).ln();
            // d/dp [-(1-p)^g ln p] = g (1-p)^(g-1) ln p - (1-p)^g / p
            let first = if *gamma == T::zero() || q <= T::zero() {
                T::zero()
            } else {
                *gamma * q.powf(*gamma - T::one()) * log_p
            };
            let second = if pl > floor {
                q.powf(*gamma) / pl
            } else {
                T::zero()
            };
            let s = slot(adj, *p, pv.len());
            s[*label] += g[0] * (first - second);
        }
        Op::Add(a, b) => {
            for id in [*a, *b] {
                let s = slot(adj, id, g.len());
                for (s, v) in s.iter_mut().zip(g) {
                    *s += *v;
                }
            }
        }
        Op::Mul(a, b) => {
            let av = nodes[*a].value.clone();
            let bv = nodes[*b].value.clone();
            {
                let s = slot(adj, *a, g.len());
                for ((s, gv), bb) in s.iter_mut().zip(g).zip(&bv) {
                    *s += *gv * *bb;
                }
            }
            let s = slot(adj, *b, g.len());
            for ((s, gv), aa) in s.iter_mut().zip(g).zip(&av) {
                *s += *gv * *aa;
            }
        }
        Op::Scale(a, c) => {
            let s = slot(adj, *a, g.len());
            for (s, v) in s.iter_mut().zip(g) {
                *s += *v * *c;
            }
        }
        Op::Sum(a) => {
            let n = nodes[*a].value.len();
            let s = slot(adj, *a, n);
            for s in s.iter_mut() {
                *s += g[0];
            }
        }
        Op::AddN(ids) => {
            for id in ids {
                slot(adj, *id, 1)[0] += g[0];
            }
        }
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Vec<T> {
        self.tape.value(*self)
    }

    /// First element; the value of a scalar node.
    pub fn item(&self) -> T {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    pub fn grad(&self) -> Vec<T> {
        self.tape.grad(*self)
    }

    pub fn shape(&self) -> Shape {
        self.tape.shape(*self)
    }
}
