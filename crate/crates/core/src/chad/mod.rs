//! Reverse-mode CHAD for the first-order language with arrays.
//!
//! Three strategies share one generator: the naive transformation returning
//! environment cotangents, evaluated with either dense vectors or ordered
//! maps, and the monadic transformation that accumulates into mutable slots.

mod gen;

pub(crate) use gen::{Fns, Gen, Style};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::cotangent::{self, CotError, CotValue};
use crate::eval::{leaf_width, EnvSlots, EvalError, Evaluator, Repr, Value};
use crate::evm::SerializedEnv;
use crate::lang::{elaborate, rc, Context, Term, Ty, TypeError, T};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    NaiveDense,
    NaiveTreeMap,
    Monadic,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NaiveDense, Mode::NaiveTreeMap, Mode::Monadic];

    pub fn name(self) -> &'static str {
        match self {
            Mode::NaiveDense => "naive-dense",
            Mode::NaiveTreeMap => "naive-treemap",
            Mode::Monadic => "monadic",
        }
    }

    fn style(self) -> Style {
        match self {
            Mode::Monadic => Style::Evm,
            _ => Style::Env,
        }
    }

    fn repr(self) -> Repr {
        match self {
            Mode::NaiveDense => Repr::Dense,
            _ => Repr::Sparse,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformConfig {
    pub mode: Mode,
    /// Accept `build`, `index`, `fold` and `length`; monadic mode only.
    pub arrays: bool,
}

impl TransformConfig {
    /// Arrays are enabled exactly when the mode supports them.
    pub fn new(mode: Mode) -> TransformConfig {
        TransformConfig { mode, arrays: mode == Mode::Monadic }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("`{construct}` is not supported by the {mode} transformation")]
    UnsupportedConstruct { construct: &'static str, mode: &'static str },
    #[error("type {0} is not supported by this transformation")]
    UnsupportedType(Ty),
    #[error("arrays need the monadic transformation, not {0}")]
    ArraysNeedMonadic(Mode),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChadError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("expected {expected} argument value(s), got {found}")]
    Arity { expected: usize, found: usize },
}

impl From<CotError> for ChadError {
    fn from(e: CotError) -> ChadError {
        ChadError::Eval(e.into())
    }
}

/// `D1` on first-order types: the identity, lifted through arrays.
pub fn d1_type(ty: &Ty) -> Result<Ty, TransformError> {
    first_order().d1(ty)
}

/// `D2` on first-order types: `Real ↦ LReal`, discrete types to `LUnit`,
/// arrays to bags of indexed cotangents.
pub fn d2_type(ty: &Ty) -> Result<Ty, TransformError> {
    first_order().d2(ty)
}

fn first_order() -> Gen {
    Gen::new(Style::Evm, Fns::None, true, "first-order", &[], 0).expect("empty context")
}

/// A transformed term with what is needed to typecheck and run it.
#[derive(Clone, Debug)]
pub struct Derivative {
    /// The elaborated source term that was transformed.
    pub source: T,
    pub source_ty: Ty,
    pub term: T,
    /// `D1` of the source context.
    pub ctx: Context,
    /// `Prod(D1 τ, Arrow(D2 τ, R))`.
    pub ty: Ty,
    /// Addresses of the source nodes visited, one entry per transform step.
    pub visited: Vec<usize>,
}

/// Transforms `t : τ` under `ctx` into its CHAD derivative.
pub fn chad_transform(cfg: &TransformConfig, ctx: &Context, t: &Term) -> Result<Derivative, TransformError> {
    if cfg.arrays && cfg.mode != Mode::Monadic {
        return Err(TransformError::ArraysNeedMonadic(cfg.mode));
    }
    let (source, _) = elaborate(ctx, t)?;
    derive(cfg.mode.style(), Fns::None, cfg.arrays, cfg.mode.name(), ctx, source, 0)
}

pub(crate) fn derive(
    style: Style,
    fns: Fns,
    arrays: bool,
    mode: &'static str,
    ctx: &Context,
    source: T,
    extra: usize,
) -> Result<Derivative, TransformError> {
    let mut g = Gen::new(style, fns, arrays, mode, &ctx.tys(), extra)?;
    let (term, source_ty) = g.d(&source)?;
    let ty = Ty::prod(g.d1(&source_ty)?, g.bp_ty(&source_ty)?);
    let mut dctx = Context::new();
    for (name, t) in &ctx.vars {
        dctx.push(name.clone(), g.d1(t)?);
    }
    Ok(Derivative { source, source_ty, term, ctx: dctx, ty, visited: std::mem::take(&mut g.trace) })
}

/// An environment cotangent and the cost of computing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub env: SerializedEnv,
    /// Evaluator steps for the whole derivative run, primal pass included.
    pub cost: u64,
}

/// Runs the derivative of `t` at `point` against `seed`.
pub fn grad(cfg: &TransformConfig, ctx: &Context, t: &Term, point: &[Value], seed: &CotValue) -> Result<Gradient, ChadError> {
    if cfg.arrays && cfg.mode != Mode::Monadic {
        return Err(TransformError::ArraysNeedMonadic(cfg.mode).into());
    }
    let (source, _) = elaborate(ctx, t).map_err(TransformError::from)?;
    let d = derive(cfg.mode.style(), Fns::None, cfg.arrays, cfg.mode.name(), ctx, source, 1)?;
    let d2s: Vec<Ty> = ctx.tys().iter().map(d2_type).collect::<Result<_, _>>()?;
    run_backprop(cfg.mode.style(), cfg.mode.repr(), &d2s, &d.term, point, seed)
}

/// Evaluates `snd(dterm)` on `seed` and collects the environment
/// cotangent. `dterm` must have been generated with one extra target
/// variable, which holds the seed.
pub(crate) fn run_backprop(
    style: Style,
    repr: Repr,
    d2s: &[Ty],
    dterm: &T,
    point: &[Value],
    seed: &CotValue,
) -> Result<Gradient, ChadError> {
    let n = d2s.len();
    if point.len() != n {
        return Err(ChadError::Arity { expected: n, found: point.len() });
    }
    let call = rc(Term::App(rc(Term::Snd(dterm.clone())), rc(Term::Var(n))));
    let term = match style {
        Style::Evm => {
            let zeros = Term::tuple(d2s.iter().map(|t| rc(Term::LZero(t.clone()))).collect());
            rc(Term::EvmRun(call, zeros))
        }
        Style::Env => call,
    };
    let mut ev = Evaluator::with_repr(repr);
    let mut env: crate::eval::Env = point.iter().cloned().collect();
    env.push_back(Value::Cot(seed.clone()));
    let v = ev.eval(&mut env, &term)?;
    let slots = match (style, v) {
        (Style::Evm, Value::Pair(p)) => SerializedEnv::from_value(&p.1)?,
        (Style::Env, Value::Env(e)) => match e.slots {
            EnvSlots::Dense(v) => SerializedEnv(v.to_vec()),
            EnvSlots::Map(m) => SerializedEnv((0..e.len).map(|i| m.get(&i).cloned().unwrap_or(CotValue::Zero)).collect()),
        },
        (_, v) => return Err(EvalError::Stuck(format!("derivative returned {v}")).into()),
    };
    if slots.len() != n {
        return Err(EvalError::Stuck(format!("derivative returned {} slots for {n} variables", slots.len())).into());
    }
    Ok(Gradient { env: slots, cost: ev.cost() })
}

/// Evaluates the primal half `fst(D[t])` at `point`.
pub fn primal(cfg: &TransformConfig, ctx: &Context, t: &Term, point: &[Value]) -> Result<(Value, u64), ChadError> {
    let d = chad_transform(cfg, ctx, t)?;
    if point.len() != ctx.len() {
        return Err(ChadError::Arity { expected: ctx.len(), found: point.len() });
    }
    let mut ev = Evaluator::with_repr(cfg.mode.repr());
    let mut env: crate::eval::Env = point.iter().cloned().collect();
    let v = ev.eval(&mut env, &Term::Fst(d.term))?;
    Ok((v, ev.cost()))
}

/// Dense embedding of a cotangent for the value `primal : ty`, in the leaf
/// order of [`Value::real_leaves`]. Array cotangents are summed per index.
pub fn densify_against(ty: &Ty, primal: &Value, d: &CotValue) -> Result<Vec<f64>, CotError> {
    let mut out = Vec::new();
    densify_into(ty, primal, d, &mut out)?;
    Ok(out)
}

/// Dense gradient of a whole environment cotangent.
pub fn densify_gradient(ctx: &Context, point: &[Value], env: &SerializedEnv) -> Result<Vec<f64>, CotError> {
    let mut out = Vec::new();
    for ((ty, v), d) in ctx.tys().iter().zip(point).zip(&env.0) {
        densify_into(ty, v, d, &mut out)?;
    }
    Ok(out)
}

fn zero_leaves(ty: &Ty, v: &Value, out: &mut Vec<f64>) {
    out.extend(std::iter::repeat(0.0).take(v.real_leaves(ty).len()));
}

fn mismatch(op: &'static str, ty: &Ty, d: &CotValue) -> CotError {
    CotError::Mismatch { op, detail: format!("{d:?} for {ty}") }
}

fn densify_into(ty: &Ty, v: &Value, d: &CotValue, out: &mut Vec<f64>) -> Result<(), CotError> {
    use CotValue as C;
    if matches!(d, C::Zero | C::PZero | C::SZero | C::BagEmpty) {
        zero_leaves(ty, v, out);
        return Ok(());
    }
    match (ty, v, d) {
        (Ty::Real, _, C::Real(x)) => out.push(*x),
        (Ty::Unit | Ty::Int, _, _) => {}
        (Ty::Prod(a, b), Value::Pair(p), C::Pair(x, y)) => {
            densify_into(a, &p.0, x, out)?;
            densify_into(b, &p.1, y, out)?;
        }
        (Ty::Sum(a, b), Value::Inl(x), C::Inl(dx)) => {
            densify_into(a, x, dx, out)?;
            out.extend(std::iter::repeat(0.0).take(leaf_width(b)));
        }
        (Ty::Sum(a, b), Value::Inr(y), C::Inr(dy)) => {
            out.extend(std::iter::repeat(0.0).take(leaf_width(a)));
            densify_into(b, y, dy, out)?;
        }
        (Ty::Sum(..), _, C::Inl(_) | C::Inr(_)) => zero_leaves(ty, v, out),
        (Ty::Array(e), Value::Array(xs), C::BagOne(..) | C::BagPlus(..)) => {
            let (items, _) = crate::eval::collect_bag(d).map_err(|_| mismatch("densify", ty, d))?;
            let mut acc: BTreeMap<usize, CotValue> = BTreeMap::new();
            for (i, di) in items {
                let i = usize::try_from(i).ok().filter(|i| *i < xs.len()).ok_or_else(|| mismatch("densify", ty, d))?;
                let next = match acc.remove(&i) {
                    Some(prev) => cotangent::plus(&prev, &di)?.0,
                    None => di,
                };
                acc.insert(i, next);
            }
            for (i, x) in xs.iter().enumerate() {
                match acc.get(&i) {
                    Some(di) => densify_into(e, x, di, out)?,
                    None => zero_leaves(e, x, out),
                }
            }
        }
        _ => return Err(mismatch("densify", ty, d)),
    }
    Ok(())
}

#[cfg(test)]
mod tests;
