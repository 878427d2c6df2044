//! Small expression language with exact first derivatives.
//!
//! Every scalar symbol in the laboratory (defining functions, form
//! coefficients, Hamiltonians, bump functions) is an [`Expr`]. Expressions are
//! compiled into a deduplicated [`Tape`] and evaluated either on plain `f64`
//! or on forward-mode [`Dual`] numbers, which yields value and gradient in one
//! pass.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Maximum number of coordinates a chart may carry.
pub const MAX_DIM: usize = 4;

/// Forward-mode dual number carrying up to [`MAX_DIM`] partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; MAX_DIM],
}

impl Dual {
    pub const fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; MAX_DIM] }
    }

    /// The `i`-th coordinate function evaluated at `v`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; MAX_DIM];
        d[i] = 1.0;
        Dual { v, d }
    }

    /// Chain rule: `g(self)` given `g(v)` and `g'(v)`.
    #[inline]
    fn chain(self, value: f64, slope: f64) -> Self {
        let mut d = [0.0; MAX_DIM];
        if slope != 0.0 {
            for (o, s) in d.iter_mut().zip(self.d.iter()) {
                *o = slope * s;
            }
        }
        Dual { v: value, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for i in 0..MAX_DIM {
            d[i] += o.d[i];
        }
        Dual { v: self.v + o.v, d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        let mut d = self.d;
        for i in 0..MAX_DIM {
            d[i] -= o.d[i];
        }
        Dual { v: self.v - o.v, d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut d = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            d[i] = (self.d[i] - v * o.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = -*x;
        }
        Dual { v: -self.v, d }
    }
}

/// Number types an expression tape can be evaluated on.
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(c: f64) -> Self;
    fn value(self) -> f64;
    fn powi(self, n: i32) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    /// `order`-th derivative of the bump profile, composed with `self`.
    fn bump(self, shape: &BumpShape, order: u8) -> Self;
}

impl Real for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn bump(self, shape: &BumpShape, order: u8) -> Self {
        shape.derivative(self, order)
    }
}

impl Real for Dual {
    fn cst(c: f64) -> Self {
        Dual::constant(c)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual::constant(1.0),
            1 => self,
            _ => self.chain(self.v.powi(n), n as f64 * self.v.powi(n - 1)),
        }
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        let mut d = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            d[i] = (x.v * self.d[i] - self.v * x.d[i]) / r2;
        }
        Dual { v: self.v.atan2(x.v), d }
    }
    fn bump(self, shape: &BumpShape, order: u8) -> Self {
        self.chain(shape.derivative(self.v, order), shape.derivative(self.v, order + 1))
    }
}

/// Even C-infinity bump profile: 1 on `|s| <= plateau * delta`, 0 for
/// `|s| >= delta`, with an `exp(-1/u)` smoothstep in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpShape {
    pub delta: f64,
    pub plateau: f64,
}

fn h(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

fn h1(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        h(u) / (u * u)
    }
}

fn h2(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        h(u) * (1.0 - 2.0 * u) / u.powi(4)
    }
}

/// Smoothstep `h(q) / (h(q) + h(1-q))` and its first two derivatives in `q`.
fn smoothstep(q: f64) -> [f64; 3] {
    if q <= 0.0 {
        return [0.0; 3];
    }
    if q >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let (a, b) = (h(q), h(1.0 - q));
    let (a1, b1) = (h1(q), -h1(1.0 - q));
    let (a2, b2) = (h2(q), h2(1.0 - q));
    let s = a + b;
    let num1 = a1 * b - a * b1;
    let d1 = num1 / (s * s);
    let d2 = ((a2 * b - a * b2) * s - 2.0 * num1 * (a1 + b1)) / (s * s * s);
    [a / s, d1, d2]
}

impl BumpShape {
    pub fn new(delta: f64, plateau: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("bump delta must be positive, got {delta}")));
        }
        if !(plateau > 0.0 && plateau < 1.0) {
            return Err(Error::Config(format!("bump plateau fraction must lie in (0,1), got {plateau}")));
        }
        Ok(BumpShape { delta, plateau })
    }

    fn width(&self) -> f64 {
        (1.0 - self.plateau) * self.delta
    }

    /// Derivative of the profile of the given order (0, 1 or 2).
    pub fn derivative(&self, s: f64, order: u8) -> f64 {
        let w = self.width();
        let q = (self.delta - s.abs()) / w;
        let st = smoothstep(q);
        // dq/ds = -sign(s)/w; the profile is flat near s = 0 so sign(0) is moot.
        let sg = if s < 0.0 { -1.0 } else { 1.0 };
        match order {
            0 => st[0],
            1 => -sg * st[1] / w,
            2 => st[2] / (w * w),
            _ => f64::NAN,
        }
    }
}

/// Expression node.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Powi(Expr, i32),
    Sqrt(Expr),
    Exp(Expr),
    Ln(Expr),
    Sin(Expr),
    Cos(Expr),
    Atan2(Expr, Expr),
    Bump(Expr, BumpShape, u8),
}

/// Shared, immutable expression.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "{a}*{b}"),
            Node::Div(a, b) => write!(f, "{a}/({b})"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Powi(a, n) => write!(f, "({a})^{n}"),
            Node::Sqrt(a) => write!(f, "sqrt({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Ln(a) => write!(f, "ln({a})"),
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Atan2(a, b) => write!(f, "atan2({a}, {b})"),
            Node::Bump(a, s, k) => write!(f, "bump{k}[{}]({a})", s.delta),
        }
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Expr {
        Expr(Arc::new(Node::Const(c)))
    }

    pub fn var(i: usize) -> Expr {
        Expr(Arc::new(Node::Var(i)))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match &*self.0 {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn wrap(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn powi(&self, n: i32) -> Expr {
        match (self.as_const(), n) {
            (_, 0) => Expr::one(),
            (_, 1) => self.clone(),
            (Some(c), _) => Expr::constant(c.powi(n)),
            _ => Expr::wrap(Node::Powi(self.clone(), n)),
        }
    }

    pub fn sqrt(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.sqrt()),
            None => Expr::wrap(Node::Sqrt(self.clone())),
        }
    }

    pub fn exp(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.exp()),
            None => Expr::wrap(Node::Exp(self.clone())),
        }
    }

    pub fn ln(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.ln()),
            None => Expr::wrap(Node::Ln(self.clone())),
        }
    }

    pub fn sin(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.sin()),
            None => Expr::wrap(Node::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.cos()),
            None => Expr::wrap(Node::Cos(self.clone())),
        }
    }

    pub fn atan2(&self, x: &Expr) -> Expr {
        Expr::wrap(Node::Atan2(self.clone(), x.clone()))
    }

    /// Bump profile (order 0) or one of its derivatives composed with `self`.
    pub fn bump(&self, shape: BumpShape, order: u8) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(shape.derivative(c, order)),
            None => Expr::wrap(Node::Bump(self.clone(), shape, order)),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut memo = HashMap::new();
        max_var_rec(self, &mut memo)
    }

    /// Symbolic partial derivative with respect to variable `i`.
    ///
    /// Bump nodes differentiate into the next derivative order; order 2 is the
    /// highest the profile exposes.
    pub fn diff(&self, i: usize) -> Result<Expr> {
        let mut memo = HashMap::new();
        diff_rec(self, i, &mut memo)
    }

    /// Replace every `Var(j)` by `subs[j]`.
    pub fn substitute(&self, subs: &[Expr]) -> Result<Expr> {
        let mut memo = HashMap::new();
        subst_rec(self, subs, &mut memo)
    }

    /// Direct recursive evaluation. Prefer a compiled [`Tape`] in hot loops.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let tape = Tape::compile(std::slice::from_ref(self));
        tape.eval_f64(x)[0]
    }
}

fn key(e: &Expr) -> *const Node {
    Arc::as_ptr(&e.0)
}

fn max_var_rec(e: &Expr, memo: &mut HashMap<*const Node, Option<usize>>) -> Option<usize> {
    if let Some(v) = memo.get(&key(e)) {
        return *v;
    }
    let out = match &*e.0 {
        Node::Const(_) => None,
        Node::Var(i) => Some(*i),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Atan2(a, b) => {
            max_var_rec(a, memo).max(max_var_rec(b, memo))
        }
        Node::Neg(a)
        | Node::Powi(a, _)
        | Node::Sqrt(a)
        | Node::Exp(a)
        | Node::Ln(a)
        | Node::Sin(a)
        | Node::Cos(a)
        | Node::Bump(a, _, _) => max_var_rec(a, memo),
    };
    memo.insert(key(e), out);
    out
}

fn diff_rec(e: &Expr, i: usize, memo: &mut HashMap<*const Node, Expr>) -> Result<Expr> {
    if let Some(d) = memo.get(&key(e)) {
        return Ok(d.clone());
    }
    let d = match &*e.0 {
        Node::Const(_) => Expr::zero(),
        Node::Var(j) => {
            if *j == i {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Add(a, b) => diff_rec(a, i, memo)? + diff_rec(b, i, memo)?,
        Node::Sub(a, b) => diff_rec(a, i, memo)? - diff_rec(b, i, memo)?,
        Node::Mul(a, b) => diff_rec(a, i, memo)? * b.clone() + a.clone() * diff_rec(b, i, memo)?,
        Node::Div(a, b) => {
            let da = diff_rec(a, i, memo)?;
            let db = diff_rec(b, i, memo)?;
            if db.is_zero() {
                da / b.clone()
            } else {
                (da * b.clone() - a.clone() * db) / b.powi(2)
            }
        }
        Node::Neg(a) => -diff_rec(a, i, memo)?,
        Node::Powi(a, n) => Expr::constant(*n as f64) * a.powi(n - 1) * diff_rec(a, i, memo)?,
        Node::Sqrt(a) => diff_rec(a, i, memo)? / (Expr::constant(2.0) * e.clone()),
        Node::Exp(a) => e.clone() * diff_rec(a, i, memo)?,
        Node::Ln(a) => diff_rec(a, i, memo)? / a.clone(),
        Node::Sin(a) => a.cos() * diff_rec(a, i, memo)?,
        Node::Cos(a) => -(a.sin() * diff_rec(a, i, memo)?),
        Node::Atan2(y, x) => {
            let dy = diff_rec(y, i, memo)?;
            let dx = diff_rec(x, i, memo)?;
            (x.clone() * dy - y.clone() * dx) / (x.powi(2) + y.powi(2))
        }
        Node::Bump(a, s, k) => {
            if *k >= 2 {
                return Err(Error::Domain(
                    "bump profile derivatives above second order are not available".into(),
                ));
            }
            let da = diff_rec(a, i, memo)?;
            if da.is_zero() {
                Expr::zero()
            } else {
                a.bump(*s, k + 1) * da
            }
        }
    };
    memo.insert(key(e), d.clone());
    Ok(d)
}

fn subst_rec(e: &Expr, subs: &[Expr], memo: &mut HashMap<*const Node, Expr>) -> Result<Expr> {
    if let Some(d) = memo.get(&key(e)) {
        return Ok(d.clone());
    }
    let out = match &*e.0 {
        Node::Const(_) => e.clone(),
        Node::Var(j) => subs
            .get(*j)
            .cloned()
            .ok_or_else(|| Error::Dimension(format!("substitution lacks variable x{j}")))?,
        Node::Add(a, b) => subst_rec(a, subs, memo)? + subst_rec(b, subs, memo)?,
        Node::Sub(a, b) => subst_rec(a, subs, memo)? - subst_rec(b, subs, memo)?,
        Node::Mul(a, b) => subst_rec(a, subs, memo)? * subst_rec(b, subs, memo)?,
        Node::Div(a, b) => subst_rec(a, subs, memo)? / subst_rec(b, subs, memo)?,
        Node::Neg(a) => -subst_rec(a, subs, memo)?,
        Node::Powi(a, n) => subst_rec(a, subs, memo)?.powi(*n),
        Node::Sqrt(a) => subst_rec(a, subs, memo)?.sqrt(),
        Node::Exp(a) => subst_rec(a, subs, memo)?.exp(),
        Node::Ln(a) => subst_rec(a, subs, memo)?.ln(),
        Node::Sin(a) => subst_rec(a, subs, memo)?.sin(),
        Node::Cos(a) => subst_rec(a, subs, memo)?.cos(),
        Node::Atan2(a, b) => subst_rec(a, subs, memo)?.atan2(&subst_rec(b, subs, memo)?),
        Node::Bump(a, s, k) => subst_rec(a, subs, memo)?.bump(*s, *k),
    };
    memo.insert(key(e), out.clone());
    Ok(out)
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(0.0), _) => o,
            (_, Some(0.0)) => self,
            _ => Expr::wrap(Node::Add(self, o)),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(0.0), _) => -o,
            (_, Some(0.0)) => self,
            _ => Expr::wrap(Node::Sub(self, o)),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(0.0), _) => Expr::zero(),
            (_, Some(0.0)) => Expr::zero(),
            (Some(1.0), _) => o,
            (_, Some(1.0)) => self,
            (Some(-1.0), _) => -o,
            (_, Some(-1.0)) => -self,
            _ => Expr::wrap(Node::Mul(self, o)),
        }
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(0.0), _) => Expr::zero(),
            (_, Some(1.0)) => self,
            _ => Expr::wrap(Node::Div(self, o)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(a) => a.clone(),
            _ => Expr::wrap(Node::Neg(self)),
        }
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, o: f64) -> Expr { $tr::$m(self, Expr::constant(o)) }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr { $tr::$m(Expr::constant(self), o) }
        }
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, o: &Expr) -> Expr { $tr::$m(self.clone(), o.clone()) }
        }
    )*};
}
scalar_ops!(Add add, Sub sub, Mul mul, Div div);

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

/// Sum of a sequence of expressions.
pub fn sum<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
    items.into_iter().fold(Expr::zero(), |acc, e| acc + e)
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Powi(usize, i32),
    Sqrt(usize),
    Exp(usize),
    Ln(usize),
    Sin(usize),
    Cos(usize),
    Atan2(usize, usize),
    Bump(usize, BumpShape, u8),
}

#[derive(Hash, PartialEq, Eq)]
enum OpKey {
    Const(u64),
    Var(usize),
    Bin(u8, usize, usize),
    Un(u8, usize),
    Powi(usize, i32),
    Bump(usize, u64, u64, u8),
}

/// Linearized, common-subexpression-free evaluation program for a set of
/// output expressions.
#[derive(Debug)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    nvars: usize,
}

struct Compiler {
    ops: Vec<Op>,
    by_ptr: HashMap<*const Node, usize>,
    by_key: HashMap<OpKey, usize>,
}

impl Compiler {
    fn push(&mut self, k: OpKey, op: Op) -> usize {
        if let Some(&i) = self.by_key.get(&k) {
            return i;
        }
        let i = self.ops.len();
        self.ops.push(op);
        self.by_key.insert(k, i);
        i
    }

    fn visit(&mut self, e: &Expr) -> usize {
        if let Some(&i) = self.by_ptr.get(&key(e)) {
            return i;
        }
        let idx = match &*e.0 {
            Node::Const(c) => self.push(OpKey::Const(c.to_bits()), Op::Const(*c)),
            Node::Var(i) => self.push(OpKey::Var(*i), Op::Var(*i)),
            Node::Add(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                self.push(OpKey::Bin(0, lo, hi), Op::Add(a, b))
            }
            Node::Sub(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(OpKey::Bin(1, a, b), Op::Sub(a, b))
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                self.push(OpKey::Bin(2, lo, hi), Op::Mul(a, b))
            }
            Node::Div(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(OpKey::Bin(3, a, b), Op::Div(a, b))
            }
            Node::Atan2(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(OpKey::Bin(4, a, b), Op::Atan2(a, b))
            }
            Node::Neg(a) => {
                let a = self.visit(a);
                self.push(OpKey::Un(0, a), Op::Neg(a))
            }
            Node::Sqrt(a) => {
                let a = self.visit(a);
                self.push(OpKey::Un(1, a), Op::Sqrt(a))
            }
            Node::Exp(a) => {
                let a = self.visit(a);
                self.push(OpKey::Un(2, a), Op::Exp(a))
            }
            Node::Ln(a) => {
                let a = self.visit(a);
                self.push(OpKey::Un(3, a), Op::Ln(a))
            }
            Node::Sin(a) => {
                let a = self.visit(a);
                self.push(OpKey::Un(4, a), Op::Sin(a))
            }
            Node::Cos(a) => {
                let a = self.visit(a);
                self.push(OpKey::Un(5, a), Op::Cos(a))
            }
            Node::Powi(a, n) => {
                let a = self.visit(a);
                self.push(OpKey::Powi(a, *n), Op::Powi(a, *n))
            }
            Node::Bump(a, s, k) => {
                let a = self.visit(a);
                self.push(
                    OpKey::Bump(a, s.delta.to_bits(), s.plateau.to_bits(), *k),
                    Op::Bump(a, *s, *k),
                )
            }
        };
        self.by_ptr.insert(key(e), idx);
        idx
    }
}

impl Tape {
    pub fn compile(outputs: &[Expr]) -> Tape {
        let mut c = Compiler { ops: Vec::new(), by_ptr: HashMap::new(), by_key: HashMap::new() };
        let outs: Vec<usize> = outputs.iter().map(|e| c.visit(e)).collect();
        let nvars = c
            .ops
            .iter()
            .filter_map(|op| match op {
                Op::Var(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Tape { ops: c.ops, outputs: outs, nvars }
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Number of variables the tape reads (one past the largest index).
    pub fn n_vars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn eval<T: Real>(&self, x: &[T], out: &mut [T]) {
        let mut reg: Vec<T> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => T::cst(c),
                Op::Var(i) => x[i],
                Op::Add(a, b) => reg[a] + reg[b],
                Op::Sub(a, b) => reg[a] - reg[b],
                Op::Mul(a, b) => reg[a] * reg[b],
                Op::Div(a, b) => reg[a] / reg[b],
                Op::Neg(a) => -reg[a],
                Op::Powi(a, n) => reg[a].powi(n),
                Op::Sqrt(a) => reg[a].sqrt(),
                Op::Exp(a) => reg[a].exp(),
                Op::Ln(a) => reg[a].ln(),
                Op::Sin(a) => reg[a].sin(),
                Op::Cos(a) => reg[a].cos(),
                Op::Atan2(a, b) => reg[a].atan2(reg[b]),
                Op::Bump(a, ref s, k) => reg[a].bump(s, k),
            };
            reg.push(v);
        }
        for (o, &i) in out.iter_mut().zip(self.outputs.iter()) {
            *o = reg[i];
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs.len()];
        self.eval(x, &mut out);
        out
    }

    /// Values and gradients (with respect to the first `x.len()` variables).
    pub fn eval_dual(&self, x: &[f64]) -> Vec<Dual> {
        let xs: Vec<Dual> = x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i)).collect();
        let mut out = vec![Dual::constant(0.0); self.outputs.len()];
        self.eval(&xs, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var(0)
    }
    fn y() -> Expr {
        Expr::var(1)
    }

    #[test]
    fn dual_gradient_of_polynomial() {
        let e = x().powi(2) * y() + 3.0 * y();
        let t = Tape::compile(&[e]);
        let d = t.eval_dual(&[2.0, 5.0])[0];
        assert_eq!(d.v, 35.0);
        assert_eq!(d.d[0], 20.0);
        assert_eq!(d.d[1], 7.0);
    }

    #[test]
    fn symbolic_diff_agrees_with_dual() {
        let e = (x() * y()).sin() / (1.0 + x().powi(2)).sqrt() + y().atan2(&x()) + (x() - y()).exp().ln();
        let p = [0.7, -0.3];
        let dual = Tape::compile(std::slice::from_ref(&e)).eval_dual(&p)[0];
        for i in 0..2 {
            let sym = e.diff(i).unwrap().eval(&p);
            assert!((sym - dual.d[i]).abs() < 1e-13, "{sym} vs {}", dual.d[i]);
        }
    }

    #[test]
    fn constant_folding_keeps_trees_small() {
        let e = Expr::zero() * x() + 1.0 * y() - Expr::zero();
        assert!(matches!(e.node(), Node::Var(1)));
        assert_eq!((Expr::constant(2.0) * 3.0).as_const(), Some(6.0));
    }

    #[test]
    fn tape_shares_common_subexpressions() {
        let a = x().powi(2) + y().powi(2);
        let b = x().powi(2) + y().powi(2);
        let t = Tape::compile(&[a.clone() * b.clone(), a + 1.0]);
        // x, y, 2 squares, sum, product, constant, sum.
        assert_eq!(t.len(), 8);
    }

    #[test]
    fn bump_profile_plateau_and_support() {
        let s = BumpShape::new(0.2, 0.5).unwrap();
        assert_eq!(s.derivative(0.0, 0), 1.0);
        assert_eq!(s.derivative(0.1, 0), 1.0);
        assert_eq!(s.derivative(0.2, 0), 0.0);
        assert_eq!(s.derivative(-0.25, 0), 0.0);
        let v = s.derivative(0.15, 0);
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(v, s.derivative(-0.15, 0));
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let s = BumpShape::new(0.2, 0.5).unwrap();
        let h = 1e-6;
        for &u in &[-0.18, -0.13, -0.11, 0.12, 0.15, 0.19] {
            let fd1 = (s.derivative(u + h, 0) - s.derivative(u - h, 0)) / (2.0 * h);
            let fd2 = (s.derivative(u + h, 1) - s.derivative(u - h, 1)) / (2.0 * h);
            assert!((fd1 - s.derivative(u, 1)).abs() < 1e-5 * (1.0 + fd1.abs()));
            assert!((fd2 - s.derivative(u, 2)).abs() < 1e-4 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn dual_bump_on_plateau_has_zero_slope_even_through_singular_inner_map() {
        // sqrt has an infinite slope at 0; the plateau must absorb it.
        let s = BumpShape::new(0.2, 0.5).unwrap();
        let r = (x().powi(2) + y().powi(2)).sqrt();
        let d = Tape::compile(&[r.bump(s, 0)]).eval_dual(&[0.0, 0.0])[0];
        assert_eq!(d.v, 1.0);
        assert_eq!(d.d, [0.0; MAX_DIM]);
    }

    #[test]
    fn substitution_composes() {
        let e = x() * y();
        let c = e.substitute(&[y() + 1.0, x()]).unwrap();
        assert_eq!(c.eval(&[2.0, 3.0]), 8.0);
        assert!(e.substitute(&[x()]).is_err());
    }
}
