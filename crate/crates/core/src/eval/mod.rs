//! Cost-instrumented call-by-value evaluator for source and target terms.
//!
//! Every evaluation returns its value together with an exact step count.
//! Constant-time constructs cost 1 plus their children; linear-time array
//! and list primitives cost the number of elements they touch. Monadic
//! actions are values: building one charges its children, executing it
//! charges the remaining per-node step.

mod ops;
mod value;

use std::rc::Rc;

pub use ops::{apply_op, apply_op_transpose, op_def, OpDef};
pub use value::{leaf_width, Action, Captured, Closure, Env, EnvSlots, EnvValue, TreeValue, Value};

use crate::cotangent::{self, CotError, CotValue};
use crate::evm::{EvmError, EvmState};
use crate::lang::{Term, Ty};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("`{op}` is undefined at {args:?}")]
    PartialOp { op: &'static str, args: Vec<f64> },
    #[error(transparent)]
    Cotangent(#[from] CotError),
    #[error(transparent)]
    Evm(#[from] EvmError),
    #[error("fold over an empty array")]
    EmptyFold,
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: i64, len: usize },
    #[error("negative array length {0}")]
    NegativeLength(i64),
    #[error("zipWith on arrays of lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("runtime error: {0}")]
    User(String),
    #[error("ill-typed evaluation: {0}")]
    Stuck(String),
}

fn stuck(what: &str, v: &Value) -> EvalError {
    EvalError::Stuck(format!("{what}, found {v}"))
}

/// Representation of zeros and environment cotangents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Repr {
    /// Explicit zero constructors; environments as balanced maps.
    #[default]
    Sparse,
    /// Zeros of products are materialised; environments are full tuples.
    Dense,
}

#[derive(Debug, Default)]
pub struct Evaluator {
    cost: u64,
    repr: Repr,
}

/// Evaluates a closed-over term in `env`, returning its value and cost.
pub fn eval(env: &[Value], t: &Term) -> Result<(Value, u64), EvalError> {
    let mut ev = Evaluator::new();
    let mut env: Env = env.iter().cloned().collect();
    let v = ev.eval(&mut env, t)?;
    Ok((v, ev.cost()))
}

impl Evaluator {
    pub fn new() -> Evaluator {
        Evaluator::default()
    }

    pub fn with_repr(repr: Repr) -> Evaluator {
        Evaluator { cost: 0, repr }
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }

    pub fn reset_cost(&mut self) -> u64 {
        std::mem::take(&mut self.cost)
    }

    pub fn tick(&mut self, n: u64) {
        self.cost += n;
    }

    fn real(&mut self, env: &mut Env, t: &Term) -> Result<f64, EvalError> {
        match self.eval(env, t)? {
            Value::Real(x) => Ok(x),
            v => Err(stuck("expected a real", &v)),
        }
    }

    fn int(&mut self, env: &mut Env, t: &Term) -> Result<i64, EvalError> {
        match self.eval(env, t)? {
            Value::Int(i) => Ok(i),
            v => Err(stuck("expected an integer", &v)),
        }
    }

    fn cot(&mut self, env: &mut Env, t: &Term) -> Result<CotValue, EvalError> {
        match self.eval(env, t)? {
            Value::Cot(c) => Ok(c),
            v => Err(stuck("expected a cotangent", &v)),
        }
    }

    fn array(&mut self, env: &mut Env, t: &Term) -> Result<Rc<Vec<Value>>, EvalError> {
        match self.eval(env, t)? {
            Value::Array(xs) => Ok(xs),
            v => Err(stuck("expected an array", &v)),
        }
    }

    fn list(&mut self, env: &mut Env, t: &Term) -> Result<im::Vector<Value>, EvalError> {
        match self.cot(env, t)? {
            CotValue::List(xs) => Ok(Rc::unwrap_or_clone(xs)),
            CotValue::Zero => Ok(im::Vector::new()),
            c => Err(EvalError::Stuck(format!("expected a list, found {}", c.head()))),
        }
    }

    fn env_value(&mut self, env: &mut Env, t: &Term) -> Result<EnvValue, EvalError> {
        match self.eval(env, t)? {
            Value::Env(e) => Ok(e),
            v => Err(stuck("expected an environment cotangent", &v)),
        }
    }

    /// Evaluates `t` with `vals` bound at the next levels.
    fn under(&mut self, env: &mut Env, vals: &[Value], t: &Term) -> Result<Value, EvalError> {
        for v in vals {
            env.push_back(v.clone());
        }
        let r = self.eval(env, t);
        for _ in vals {
            env.pop_back();
        }
        r
    }

    fn zero(&mut self, ty: &Ty) -> Result<CotValue, EvalError> {
        match self.repr {
            Repr::Sparse => {
                self.tick(1);
                Ok(cotangent::zero(ty)?)
            }
            Repr::Dense => {
                let (z, c) = cotangent::zero_dense(ty)?;
                self.tick(c);
                Ok(z)
            }
        }
    }

    fn plus(&mut self, a: &CotValue, b: &CotValue) -> Result<CotValue, EvalError> {
        let (c, k) = cotangent::plus(a, b)?;
        self.tick(k);
        Ok(c)
    }

    pub fn eval(&mut self, env: &mut Env, t: &Term) -> Result<Value, EvalError> {
        use Term::*;
        Ok(match t {
            Var(l) => {
                self.tick(1);
                env.get(*l).cloned().ok_or_else(|| EvalError::Stuck(format!("unbound level {l}")))?
            }
            Let { bound, body, .. } => {
                self.tick(1);
                let v = self.eval(env, bound)?;
                self.under(env, &[v], body)?
            }
            UnitLit => {
                self.tick(1);
                Value::Unit
            }
            Pair(a, b) => {
                self.tick(1);
                let a = self.eval(env, a)?;
                Value::pair(a, self.eval(env, b)?)
            }
            Fst(a) | Snd(a) => {
                self.tick(1);
                match self.eval(env, a)? {
                    Value::Pair(p) => {
                        if matches!(t, Fst(_)) {
                            p.0.clone()
                        } else {
                            p.1.clone()
                        }
                    }
                    v => return Err(stuck("projection from a non-pair", &v)),
                }
            }
            Inl(a, _) => {
                self.tick(1);
                Value::inl(self.eval(env, a)?)
            }
            Inr(a, _) => {
                self.tick(1);
                Value::inr(self.eval(env, a)?)
            }
            Case { scrut, left, right, .. } => {
                self.tick(1);
                match self.eval(env, scrut)? {
                    Value::Inl(x) => self.under(env, &[(*x).clone()], left)?,
                    Value::Inr(y) => self.under(env, &[(*y).clone()], right)?,
                    v => return Err(stuck("case on a non-sum", &v)),
                }
            }
            RealLit(x) => {
                self.tick(1);
                Value::Real(*x)
            }
            IntLit(i) => {
                self.tick(1);
                Value::Int(*i)
            }
            Sign(a) => {
                self.tick(1);
                let x = self.real(env, a)?;
                Value::boolean(x < 0.0)
            }
            PrimOp(op, args) => {
                self.tick(1 + args.len() as u64);
                let mut xs = Vec::with_capacity(args.len());
                for a in args {
                    xs.push(self.real(env, a)?);
                }
                Value::Real(apply_op(*op, &xs)?)
            }
            Lam { body, .. } => {
                self.tick(1);
                Value::Closure(Rc::new(Closure { env: Captured::capture(env), body: body.clone() }))
            }
            App(f, a) => {
                self.tick(1);
                let f = self.eval(env, f)?;
                let a = self.eval(env, a)?;
                self.apply(&f, a)?
            }
            Build { len, body, .. } => {
                self.tick(1);
                let n = self.int(env, len)?;
                if n < 0 {
                    return Err(EvalError::NegativeLength(n));
                }
                self.tick(n as u64);
                let mut xs = Vec::with_capacity(n as usize);
                for i in 0..n {
                    xs.push(self.under(env, &[Value::Int(i)], body)?);
                }
                Value::array(xs)
            }
            Index(a, i) => {
                self.tick(1);
                let xs = self.array(env, a)?;
                let i = self.int(env, i)?;
                usize::try_from(i)
                    .ok()
                    .and_then(|k| xs.get(k))
                    .cloned()
                    .ok_or(EvalError::IndexOutOfBounds { index: i, len: xs.len() })?
            }
            Fold { body, arr, .. } => {
                self.tick(1);
                let xs = self.array(env, arr)?;
                if xs.is_empty() {
                    return Err(EvalError::EmptyFold);
                }
                self.tick(xs.len() as u64);
                self.reduce(env, body, &xs)?
            }
            Length(a) => {
                self.tick(1);
                Value::Int(self.array(env, a)?.len() as i64)
            }

            LZero(ty) => Value::Cot(self.zero(ty)?),
            LPlus(a, b) => {
                let a = self.cot(env, a)?;
                let b = self.cot(env, b)?;
                Value::Cot(self.plus(&a, &b)?)
            }
            LPair(a, b) => {
                self.tick(1);
                let a = self.cot(env, a)?;
                Value::Cot(cotangent::lpair(a, self.cot(env, b)?))
            }
            LFst(a) => {
                self.tick(1);
                Value::Cot(cotangent::lfst(&self.cot(env, a)?)?)
            }
            LSnd(a) => {
                self.tick(1);
                Value::Cot(cotangent::lsnd(&self.cot(env, a)?)?)
            }
            LInl(a, _) => {
                self.tick(1);
                Value::Cot(cotangent::linl(self.cot(env, a)?))
            }
            LInr(a, _) => {
                self.tick(1);
                Value::Cot(cotangent::linr(self.cot(env, a)?))
            }
            LCastL(a) => {
                self.tick(1);
                Value::Cot(cotangent::lcast_l(&self.cot(env, a)?)?)
            }
            LCastR(a) => {
                self.tick(1);
                Value::Cot(cotangent::lcast_r(&self.cot(env, a)?)?)
            }
            DOpT(op, args, d) => {
                self.tick(1 + args.len() as u64);
                let mut xs = Vec::with_capacity(args.len());
                for a in args {
                    xs.push(self.real(env, a)?);
                }
                let d = match self.cot(env, d)? {
                    CotValue::Real(d) => d,
                    CotValue::Zero => 0.0,
                    c => return Err(EvalError::Stuck(format!("dopt cotangent {}", c.head()))),
                };
                let ds = apply_op_transpose(*op, &xs, d)?;
                Value::tuple(ds.into_iter().map(|x| Value::Cot(CotValue::Real(x))))
            }

            EvmReturn(_, a) => Value::action(Action::Return(self.eval(env, a)?)),
            EvmBind(m, k) => {
                let m = self.eval(env, m)?;
                Value::action(Action::Bind(m, self.eval(env, k)?))
            }
            EvmOne(_, l, _, d) => Value::action(Action::One(*l, self.cot(env, d)?)),
            EvmScope(ty, m) => Value::action(Action::Scope(ty.clone(), self.eval(env, m)?)),
            EvmRun(m, e) => {
                let m = self.eval(env, m)?;
                let e = self.eval(env, e)?;
                let slots = crate::evm::SerializedEnv::from_value(&e)?;
                let (r, out) = crate::evm::run(self, &m, slots)?;
                Value::pair(r, out.to_value())
            }

            EnvZero(c) => {
                self.tick(1);
                let slots = match self.repr {
                    Repr::Sparse => EnvSlots::Map(im::OrdMap::new()),
                    Repr::Dense => EnvSlots::Dense(Rc::new(self.dense_zeros(&c.to_vec())?)),
                };
                Value::Env(EnvValue { len: c.len(), slots })
            }
            EnvOne(c, l, d) => {
                self.tick(1);
                let d = self.cot(env, d)?;
                let slots = match self.repr {
                    Repr::Sparse => EnvSlots::Map(im::OrdMap::unit(*l, d)),
                    Repr::Dense => {
                        let mut tys = c.to_vec();
                        tys.remove(*l);
                        let mut zs = self.dense_zeros(&tys)?;
                        zs.insert(*l, d);
                        EnvSlots::Dense(Rc::new(zs))
                    }
                };
                Value::Env(EnvValue { len: c.len(), slots })
            }
            EnvPlus(a, b) => {
                let a = self.env_value(env, a)?;
                let b = self.env_value(env, b)?;
                Value::Env(self.env_plus(a, b)?)
            }
            EnvSplit(ty, e) => {
                self.tick(1);
                let e = self.env_value(env, e)?;
                let (rest, d) = self.env_split(ty, e)?;
                Value::pair(Value::Env(rest), Value::Cot(d))
            }

            BagEmpty(_) => {
                self.tick(1);
                Value::Cot(CotValue::BagEmpty)
            }
            BagOne(a) => {
                self.tick(1);
                match self.eval(env, a)? {
                    Value::Pair(p) => match (&p.0, &p.1) {
                        (Value::Int(i), Value::Cot(d)) => Value::Cot(CotValue::bag_one(*i, d.clone())),
                        _ => return Err(EvalError::Stuck("bag element must be (Int, cotangent)".into())),
                    },
                    v => return Err(stuck("bag element must be a pair", &v)),
                }
            }
            BagPlus(a, b) => {
                let a = self.cot(env, a)?;
                let b = self.cot(env, b)?;
                Value::Cot(self.plus(&a, &b)?)
            }
            Collect(b) => {
                self.tick(1);
                let b = self.cot(env, b)?;
                let (items, nodes) = collect_bag(&b)?;
                self.tick(nodes);
                Value::array(
                    items.into_iter().map(|(i, d)| Value::pair(Value::Int(i), Value::Cot(d))).collect(),
                )
            }
            Scatter(init, pairs) => {
                self.tick(1);
                let init = self.array(env, init)?;
                let pairs = self.array(env, pairs)?;
                self.tick(init.len() as u64);
                let mut out: Vec<CotValue> = Vec::with_capacity(init.len());
                for v in init.iter() {
                    match v {
                        Value::Cot(c) => out.push(c.clone()),
                        v => return Err(stuck("scatter target must hold cotangents", v)),
                    }
                }
                for p in pairs.iter() {
                    self.tick(1);
                    let Value::Pair(p) = p else { return Err(stuck("scatter pair", p)) };
                    let (Value::Int(i), Value::Cot(d)) = (&p.0, &p.1) else {
                        return Err(EvalError::Stuck("scatter pair must be (Int, cotangent)".into()));
                    };
                    let k = usize::try_from(*i)
                        .ok()
                        .filter(|k| *k < out.len())
                        .ok_or(EvalError::IndexOutOfBounds { index: *i, len: out.len() })?;
                    out[k] = self.plus(&out[k], d)?;
                }
                Value::array(out.into_iter().map(Value::Cot).collect())
            }
            Unzip(a) => {
                self.tick(1);
                let xs = self.array(env, a)?;
                self.tick(xs.len() as u64);
                let mut l = Vec::with_capacity(xs.len());
                let mut r = Vec::with_capacity(xs.len());
                for x in xs.iter() {
                    let Value::Pair(p) = x else { return Err(stuck("unzip of non-pair", x)) };
                    l.push(p.0.clone());
                    r.push(p.1.clone());
                }
                Value::pair(Value::array(l), Value::array(r))
            }
            ZipWith { body, a, b, .. } => {
                self.tick(1);
                let xs = self.array(env, a)?;
                let ys = self.array(env, b)?;
                if xs.len() != ys.len() {
                    return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
                }
                self.tick(xs.len() as u64);
                let mut out = Vec::with_capacity(xs.len());
                for (x, y) in xs.iter().zip(ys.iter()) {
                    out.push(self.under(env, &[x.clone(), y.clone()], body)?);
                }
                Value::array(out)
            }
            MapArr { body, arr, .. } => {
                self.tick(1);
                let xs = self.array(env, arr)?;
                self.tick(xs.len() as u64);
                let mut out = Vec::with_capacity(xs.len());
                for x in xs.iter() {
                    out.push(self.under(env, &[x.clone()], body)?);
                }
                Value::array(out)
            }
            SequenceEvm(a) => {
                self.tick(1);
                Value::action(Action::Sequence(self.array(env, a)?))
            }
            FromList(l) => {
                self.tick(1);
                let xs = self.list(env, l)?;
                self.tick(xs.len() as u64);
                let mut ones = Vec::with_capacity(xs.len());
                for (i, x) in xs.iter().enumerate() {
                    match x {
                        Value::Cot(d) => ones.push(CotValue::bag_one(i as i64, d.clone())),
                        v => return Err(stuck("fromList element must be a cotangent", v)),
                    }
                }
                Value::Cot(balanced_bag(ones))
            }

            TreeLeaf(a, _) => {
                self.tick(1);
                Value::Tree(Rc::new(TreeValue::Leaf(self.eval(env, a)?)))
            }
            TreeNode(l, x, f, r) => {
                self.tick(1);
                let l = self.tree(env, l)?;
                let x = self.eval(env, x)?;
                let f = self.eval(env, f)?;
                let r = self.tree(env, r)?;
                Value::Tree(Rc::new(TreeValue::Node(l, x, f, r)))
            }
            GetA(a) => {
                self.tick(1);
                self.tree(env, a)?.payload().clone()
            }
            UnTree(g, d, tree) => {
                self.tick(1);
                let step = self.eval(env, g)?;
                let d = self.cot(env, d)?;
                let tree = self.tree(env, tree)?;
                Value::action(Action::UnTree { step, d, tree })
            }

            ListNil(_) => {
                self.tick(1);
                Value::Cot(CotValue::List(Rc::default()))
            }
            ListCons(h, tl) => {
                self.tick(1);
                let h = self.eval(env, h)?;
                let mut tl = self.list(env, tl)?;
                tl.push_front(h);
                Value::Cot(CotValue::List(Rc::new(tl)))
            }
            ListAppend(a, b) => {
                self.tick(1);
                let mut a = self.list(env, a)?;
                let b = self.list(env, b)?;
                self.tick(a.len() as u64);
                a.append(b);
                Value::Cot(CotValue::List(Rc::new(a)))
            }
            FoldList { body, init, list, .. } => {
                self.tick(1);
                let xs = self.list(env, list)?;
                let mut acc = self.eval(env, init)?;
                self.tick(xs.len() as u64);
                for x in xs.iter().rev() {
                    acc = self.under(env, &[x.clone(), acc], body)?;
                }
                acc
            }

            ClosedLam { body, .. } => {
                self.tick(1);
                Value::ClosedFun(body.clone())
            }
            Pack(tag, _, a) => {
                self.tick(1);
                Value::Packed(Rc::new((tag.clone(), self.eval(env, a)?)))
            }
            UnpackCase { scrut, body, .. } => {
                self.tick(1);
                match self.eval(env, scrut)? {
                    Value::Packed(p) => self.under(env, &[p.1.clone()], body)?,
                    v => return Err(stuck("unpack of a non-package", &v)),
                }
            }
            LPackLike(w, d) => {
                self.tick(1);
                let tag = match self.eval(env, w)? {
                    Value::Packed(p) => p.0.clone(),
                    v => return Err(stuck("lpacklike witness must be a package", &v)),
                };
                let d = self.cot(env, d)?;
                Value::Cot(CotValue::Packed(tag, Rc::new(d)))
            }
            LCastSigma(tag, v) => {
                self.tick(1);
                match self.cot(env, v)? {
                    CotValue::Packed(t, d) if t == *tag => Value::Cot((*d).clone()),
                    CotValue::Packed(t, _) => {
                        return Err(CotError::TagMismatch { expected: tag.clone(), found: t }.into())
                    }
                    z if z.is_zero() => Value::Cot(CotValue::Zero),
                    c => return Err(EvalError::Stuck(format!("lcastsigma of {}", c.head()))),
                }
            }

            Error(msg, _) => return Err(EvalError::User(msg.clone())),
        })
    }

    fn tree(&mut self, env: &mut Env, t: &Term) -> Result<Rc<TreeValue>, EvalError> {
        match self.eval(env, t)? {
            Value::Tree(t) => Ok(t),
            v => Err(stuck("expected a tree", &v)),
        }
    }

    /// Balanced reduction: split in the middle, combine the halves.
    fn reduce(&mut self, env: &mut Env, body: &Term, xs: &[Value]) -> Result<Value, EvalError> {
        if xs.len() == 1 {
            return Ok(xs[0].clone());
        }
        let mid = xs.len() / 2;
        let l = self.reduce(env, body, &xs[..mid])?;
        let r = self.reduce(env, body, &xs[mid..])?;
        self.under(env, &[Value::pair(l, r)], body)
    }

    /// Applies a function value; the caller has already charged the call.
    pub fn apply(&mut self, f: &Value, arg: Value) -> Result<Value, EvalError> {
        match f {
            Value::Closure(c) => {
                let mut env = c.env.to_env();
                env.push_back(arg);
                self.eval(&mut env, &c.body)
            }
            Value::ClosedFun(body) => {
                let mut env = Env::unit(arg);
                self.eval(&mut env, body)
            }
            v => Err(stuck("application of a non-function", v)),
        }
    }

    /// Executes an action against `st`.
    pub fn exec(&mut self, st: &mut EvmState, a: &Value) -> Result<Value, EvalError> {
        let mut cur = a.clone();
        loop {
            let act = match &cur {
                Value::Action(act) => act.clone(),
                v => return Err(stuck("expected an action", v)),
            };
            match &*act {
                Action::Return(v) => {
                    self.tick(1);
                    return Ok(v.clone());
                }
                Action::Bind(m, k) => {
                    self.tick(1);
                    let v = self.exec(st, m)?;
                    cur = self.apply(k, v)?;
                }
                Action::One(l, d) => {
                    let c = st.one(*l, d)?;
                    self.tick(c);
                    return Ok(Value::Unit);
                }
                Action::Scope(ty, m) => {
                    self.tick(1);
                    st.push_untimed(ty)?;
                    let r = self.exec(st, m);
                    let d = st.pop_untimed()?;
                    return Ok(Value::pair(r?, Value::Cot(d)));
                }
                Action::Sequence(xs) => {
                    self.tick(1 + xs.len() as u64);
                    let mut out = Vec::with_capacity(xs.len());
                    for x in xs.iter() {
                        out.push(self.exec(st, x)?);
                    }
                    return Ok(Value::array(out));
                }
                Action::UnTree { step, d, tree } => {
                    let mut out = im::Vector::new();
                    self.untree(st, step, d.clone(), tree, &mut out)?;
                    return Ok(Value::Cot(CotValue::List(Rc::new(out))));
                }
            }
        }
    }

    /// Root-first replay of a recorded reduction tree.
    fn untree(
        &mut self,
        st: &mut EvmState,
        step: &Value,
        d: CotValue,
        tree: &TreeValue,
        out: &mut im::Vector<Value>,
    ) -> Result<(), EvalError> {
        self.tick(1);
        match tree {
            TreeValue::Leaf(_) => {
                out.push_back(Value::Cot(d));
                Ok(())
            }
            TreeValue::Node(l, _, f, r) => {
                self.tick(2);
                let g1 = self.apply(step, Value::Cot(d))?;
                let m = self.apply(&g1, f.clone())?;
                let (d1, d2) = match self.exec(st, &m)? {
                    Value::Pair(p) => match (&p.0, &p.1) {
                        (Value::Cot(a), Value::Cot(b)) => (a.clone(), b.clone()),
                        _ => return Err(EvalError::Stuck("untree step must return cotangents".into())),
                    },
                    v => return Err(stuck("untree step must return a pair", &v)),
                };
                self.untree(st, step, d1, l, out)?;
                self.untree(st, step, d2, r, out)
            }
        }
    }

    fn dense_zeros(&mut self, tys: &[Ty]) -> Result<Vec<CotValue>, EvalError> {
        let mut out = Vec::with_capacity(tys.len());
        for ty in tys {
            let (z, c) = cotangent::zero_dense(ty)?;
            self.tick(c);
            out.push(z);
        }
        Ok(out)
    }

    fn env_plus(&mut self, a: EnvValue, b: EnvValue) -> Result<EnvValue, EvalError> {
        self.tick(1);
        let len = a.len;
        let slots = match (a.slots, b.slots) {
            (EnvSlots::Dense(x), EnvSlots::Dense(y)) => {
                if x.len() != y.len() {
                    return Err(EvalError::Stuck("environment lengths differ".into()));
                }
                let mut out = Vec::with_capacity(x.len());
                for (p, q) in x.iter().zip(y.iter()) {
                    out.push(self.plus(p, q)?);
                }
                EnvSlots::Dense(Rc::new(out))
            }
            (EnvSlots::Map(x), EnvSlots::Map(y)) => {
                let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
                let (m, n) = (small.len() as u64, large.len() as u64);
                if m > 0 {
                    // Small-into-large: one insertion into the larger map per entry.
                    self.tick(m * ceil_log2(n + 1));
                }
                let mut out = large;
                for (k, v) in small {
                    let merged = match out.get(&k) {
                        Some(w) => self.plus(w, &v)?,
                        None => v,
                    };
                    out.insert(k, merged);
                }
                EnvSlots::Map(out)
            }
            _ => return Err(EvalError::Stuck("mixed environment representations".into())),
        };
        Ok(EnvValue { len, slots })
    }

    fn env_split(&mut self, ty: &Ty, e: EnvValue) -> Result<(EnvValue, CotValue), EvalError> {
        if e.len == 0 {
            return Err(EvmError::PopOnEmpty.into());
        }
        let last = e.len - 1;
        let (slots, d) = match e.slots {
            EnvSlots::Dense(v) => {
                let mut v = Rc::try_unwrap(v).unwrap_or_else(|rc| (*rc).clone());
                let d = v.pop().ok_or(EvmError::PopOnEmpty)?;
                (EnvSlots::Dense(Rc::new(v)), d)
            }
            EnvSlots::Map(mut m) => {
                self.tick(ceil_log2(m.len() as u64 + 1));
                let d = match m.remove(&last) {
                    Some(d) => d,
                    None => cotangent::zero(ty)?,
                };
                (EnvSlots::Map(m), d)
            }
        };
        Ok((EnvValue { len: last, slots }, d))
    }
}

pub(crate) fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros() as u64
    }
}

/// In-order `(index, cotangent)` pairs of a bag and its node count.
pub(crate) fn collect_bag(b: &CotValue) -> Result<(Vec<(i64, CotValue)>, u64), EvalError> {
    let mut out = Vec::new();
    let mut nodes = 0;
    let mut stack = vec![b];
    while let Some(b) = stack.pop() {
        nodes += 1;
        match b {
            CotValue::BagEmpty | CotValue::Zero => {}
            CotValue::BagOne(i, d) => out.push((*i, (**d).clone())),
            CotValue::BagPlus(l, r) => {
                stack.push(r);
                stack.push(l);
            }
            c => return Err(EvalError::Stuck(format!("collect of {}", c.head()))),
        }
    }
    Ok((out, nodes))
}

fn balanced_bag(mut ones: Vec<CotValue>) -> CotValue {
    if ones.is_empty() {
        return CotValue::BagEmpty;
    }
    while ones.len() > 1 {
        let mut next = Vec::with_capacity(ones.len() / 2 + 1);
        let mut it = ones.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(CotValue::BagPlus(Rc::new(a), Rc::new(b))),
                None => next.push(a),
            }
        }
        ones = next;
    }
    ones.pop().unwrap()
}
