//! Differentiation oracles for checking CHAD: forward mode on dual numbers
//! and central finite differences. Both work on source programs, including
//! higher-order ones, and report gradients in the leaf order of
//! [`Value::real_leaves`].

use std::rc::Rc;

use crate::eval::{apply_op, leaf_width, EvalError, Value};
use crate::lang::{Context, Op, Term, Ty};

/// A source value whose real leaves carry a tangent.
#[derive(Clone, Debug, PartialEq)]
pub enum Dual {
    Real(f64, f64),
    Unit,
    Int(i64),
    Pair(Rc<(Dual, Dual)>),
    Inl(Rc<Dual>),
    Inr(Rc<Dual>),
    Array(Rc<Vec<Dual>>),
    Fun(Rc<(im::Vector<Dual>, Rc<Term>)>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("the program must return Real, not {0}")]
    NotReal(Ty),
    #[error("expected {expected} argument value(s), got {found}")]
    Arity { expected: usize, found: usize },
    #[error("value {value} does not have type {ty}")]
    Shape { value: String, ty: Ty },
}

type R<X> = Result<X, OracleError>;

fn stuck(msg: impl Into<String>) -> OracleError {
    OracleError::Eval(EvalError::Stuck(msg.into()))
}

impl Dual {
    pub fn primal(&self) -> Option<f64> {
        match self {
            Dual::Real(x, _) => Some(*x),
            _ => None,
        }
    }

    pub fn tangent(&self) -> Option<f64> {
        match self {
            Dual::Real(_, t) => Some(*t),
            _ => None,
        }
    }

    /// Lifts `v : ty`, taking tangents for its real leaves from `dir`.
    pub fn lift(v: &Value, ty: &Ty, dir: &mut dyn Iterator<Item = f64>) -> R<Dual> {
        let bad = || OracleError::Shape { value: v.to_string(), ty: ty.clone() };
        Ok(match (v, ty) {
            (Value::Real(x), Ty::Real) => Dual::Real(*x, dir.next().unwrap_or(0.0)),
            (Value::Unit, Ty::Unit) => Dual::Unit,
            (Value::Int(i), Ty::Int) => Dual::Int(*i),
            (Value::Pair(p), Ty::Prod(a, b)) => {
                let x = Dual::lift(&p.0, a, dir)?;
                Dual::Pair(Rc::new((x, Dual::lift(&p.1, b, dir)?)))
            }
            (Value::Inl(x), Ty::Sum(a, b)) => {
                let x = Dual::lift(x, a, dir)?;
                dir.take(leaf_width(b)).for_each(drop);
                Dual::Inl(Rc::new(x))
            }
            (Value::Inr(y), Ty::Sum(a, b)) => {
                dir.take(leaf_width(a)).for_each(drop);
                Dual::Inr(Rc::new(Dual::lift(y, b, dir)?))
            }
            (Value::Array(xs), Ty::Array(e)) => {
                Dual::Array(Rc::new(xs.iter().map(|x| Dual::lift(x, e, dir)).collect::<R<_>>()?))
            }
            _ => return Err(bad()),
        })
    }
}

fn pair(a: Dual, b: Dual) -> Dual {
    Dual::Pair(Rc::new((a, b)))
}

/// Value and derivative of a primitive, with derivatives written out
/// independently of the transpose table used by CHAD.
fn op_dual(op: Op, xs: &[(f64, f64)]) -> R<Dual> {
    let prim: Vec<f64> = xs.iter().map(|x| x.0).collect();
    let v = apply_op(op, &prim)?;
    let (a, da) = xs[0];
    let t = match op {
        Op::Add => da + xs[1].1,
        Op::Sub => da - xs[1].1,
        Op::Mul => a * xs[1].1 + xs[1].0 * da,
        Op::Neg => -da,
        Op::Recip => -da / (a * a),
        Op::Sin => a.cos() * da,
        Op::Cos => -a.sin() * da,
        Op::Exp => v * da,
        Op::Log => da / a,
    };
    Ok(Dual::Real(v, t))
}

/// Forward-mode evaluator for source terms.
pub fn eval_dual(env: &[Dual], t: &Term) -> R<Dual> {
    let mut env: im::Vector<Dual> = env.iter().cloned().collect();
    eval(&mut env, t)
}

fn under(env: &mut im::Vector<Dual>, v: Dual, t: &Term) -> R<Dual> {
    env.push_back(v);
    let r = eval(env, t);
    env.pop_back();
    r
}

fn real(d: Dual) -> R<(f64, f64)> {
    match d {
        Dual::Real(x, t) => Ok((x, t)),
        other => Err(stuck(format!("expected a real, found {other:?}"))),
    }
}

fn int(d: Dual) -> R<i64> {
    match d {
        Dual::Int(i) => Ok(i),
        other => Err(stuck(format!("expected an integer, found {other:?}"))),
    }
}

fn array(d: Dual) -> R<Rc<Vec<Dual>>> {
    match d {
        Dual::Array(xs) => Ok(xs),
        other => Err(stuck(format!("expected an array, found {other:?}"))),
    }
}

fn reduce(env: &mut im::Vector<Dual>, body: &Term, xs: &[Dual]) -> R<Dual> {
    if xs.len() == 1 {
        return Ok(xs[0].clone());
    }
    let mid = xs.len() / 2;
    let l = reduce(env, body, &xs[..mid])?;
    let r = reduce(env, body, &xs[mid..])?;
    under(env, pair(l, r), body)
}

fn eval(env: &mut im::Vector<Dual>, t: &Term) -> R<Dual> {
    use Term::*;
    Ok(match t {
        Var(l) => env.get(*l).cloned().ok_or_else(|| stuck(format!("unbound level {l}")))?,
        Let { bound, body, .. } => {
            let v = eval(env, bound)?;
            under(env, v, body)?
        }
        UnitLit => Dual::Unit,
        RealLit(x) => Dual::Real(*x, 0.0),
        IntLit(i) => Dual::Int(*i),
        Pair(a, b) => pair(eval(env, a)?, eval(env, b)?),
        Fst(a) | Snd(a) => match eval(env, a)? {
            Dual::Pair(p) => {
                if matches!(t, Fst(_)) {
                    p.0.clone()
                } else {
                    p.1.clone()
                }
            }
            other => return Err(stuck(format!("projection from {other:?}"))),
        },
        Inl(a, _) => Dual::Inl(Rc::new(eval(env, a)?)),
        Inr(a, _) => Dual::Inr(Rc::new(eval(env, a)?)),
        Case { scrut, left, right, .. } => match eval(env, scrut)? {
            Dual::Inl(x) => under(env, (*x).clone(), left)?,
            Dual::Inr(y) => under(env, (*y).clone(), right)?,
            other => return Err(stuck(format!("case on {other:?}"))),
        },
        Sign(a) => {
            let (x, _) = real(eval(env, a)?)?;
            if x < 0.0 {
                Dual::Inl(Rc::new(Dual::Unit))
            } else {
                Dual::Inr(Rc::new(Dual::Unit))
            }
        }
        PrimOp(op, args) => {
            let xs = args.iter().map(|a| real(eval(env, a)?)).collect::<R<Vec<_>>>()?;
            op_dual(*op, &xs)?
        }
        Lam { body, .. } => Dual::Fun(Rc::new((env.clone(), body.clone()))),
        App(f, a) => {
            let f = eval(env, f)?;
            let a = eval(env, a)?;
            match f {
                Dual::Fun(c) => {
                    let mut inner = c.0.clone();
                    under(&mut inner, a, &c.1)?
                }
                other => return Err(stuck(format!("application of {other:?}"))),
            }
        }
        Build { len, body, .. } => {
            let n = int(eval(env, len)?)?;
            if n < 0 {
                return Err(EvalError::NegativeLength(n).into());
            }
            let xs = (0..n).map(|i| under(env, Dual::Int(i), body)).collect::<R<Vec<_>>>()?;
            Dual::Array(Rc::new(xs))
        }
        Index(a, i) => {
            let xs = array(eval(env, a)?)?;
            let i = int(eval(env, i)?)?;
            usize::try_from(i)
                .ok()
                .and_then(|j| xs.get(j).cloned())
                .ok_or(EvalError::IndexOutOfBounds { index: i, len: xs.len() })?
        }
        Fold { body, arr, .. } => {
            let xs = array(eval(env, arr)?)?;
            if xs.is_empty() {
                return Err(EvalError::EmptyFold.into());
            }
            reduce(env, body, &xs)?
        }
        Length(a) => Dual::Int(array(eval(env, a)?)?.len() as i64),
        other => return Err(stuck(format!("`{}` is not a source construct", other.head()))),
    })
}

fn check_point(ctx: &Context, point: &[Value]) -> R<()> {
    if point.len() != ctx.len() {
        return Err(OracleError::Arity { expected: ctx.len(), found: point.len() });
    }
    Ok(())
}

/// Number of real leaves in `point`.
pub fn leaf_count(ctx: &Context, point: &[Value]) -> usize {
    ctx.tys().iter().zip(point).map(|(ty, v)| v.real_leaves(ty).len()).sum()
}

/// Directional derivative of a `Real`-valued program along `dir`.
pub fn directional(ctx: &Context, t: &Term, point: &[Value], dir: &[f64]) -> R<f64> {
    check_point(ctx, point)?;
    let mut it = dir.iter().copied();
    let env = ctx.tys().iter().zip(point).map(|(ty, v)| Dual::lift(v, ty, &mut it)).collect::<R<Vec<_>>>()?;
    match eval_dual(&env, t)? {
        Dual::Real(_, dt) => Ok(dt),
        _ => Err(OracleError::NotReal(crate::lang::typecheck(ctx, t).unwrap_or(Ty::Unit))),
    }
}

/// Exact gradient by one forward pass per input leaf.
pub fn grad_forward(ctx: &Context, t: &Term, point: &[Value]) -> R<Vec<f64>> {
    let n = leaf_count(ctx, point);
    (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            directional(ctx, t, point, &e)
        })
        .collect()
}

/// `point` with its real leaves replaced, in order, by `leaves`.
pub fn with_leaves(ctx: &Context, point: &[Value], leaves: &[f64]) -> R<Vec<Value>> {
    let mut it = leaves.iter().copied();
    ctx.tys().iter().zip(point).map(|(ty, v)| replace(v, ty, &mut it)).collect()
}

fn replace(v: &Value, ty: &Ty, it: &mut dyn Iterator<Item = f64>) -> R<Value> {
    Ok(match (v, ty) {
        (Value::Real(x), Ty::Real) => Value::Real(it.next().unwrap_or(*x)),
        (Value::Pair(p), Ty::Prod(a, b)) => {
            let x = replace(&p.0, a, it)?;
            Value::pair(x, replace(&p.1, b, it)?)
        }
        (Value::Inl(x), Ty::Sum(a, b)) => {
            let x = replace(x, a, it)?;
            it.take(leaf_width(b)).for_each(drop);
            Value::inl(x)
        }
        (Value::Inr(y), Ty::Sum(a, b)) => {
            it.take(leaf_width(a)).for_each(drop);
            Value::inr(replace(y, b, it)?)
        }
        (Value::Array(xs), Ty::Array(e)) => Value::array(xs.iter().map(|x| replace(x, e, it)).collect::<R<_>>()?),
        _ => v.clone(),
    })
}

/// Central differences with step `1e-6 · max(1, |x_i|)` per leaf.
pub fn grad_fd(ctx: &Context, t: &Term, point: &[Value]) -> R<Vec<f64>> {
    check_point(ctx, point)?;
    let leaves: Vec<f64> = ctx.tys().iter().zip(point).flat_map(|(ty, v)| v.real_leaves(ty)).collect();
    let at = |xs: &[f64]| -> R<f64> {
        let p = with_leaves(ctx, point, xs)?;
        match crate::eval::eval(&p, t)?.0 {
            Value::Real(y) => Ok(y),
            _ => Err(OracleError::NotReal(crate::lang::typecheck(ctx, t).unwrap_or(Ty::Unit))),
        }
    };
    (0..leaves.len())
        .map(|k| {
            let h = 1e-6 * leaves[k].abs().max(1.0);
            let mut up = leaves.clone();
            let mut down = leaves.clone();
            up[k] += h;
            down[k] -= h;
            Ok((at(&up)? - at(&down)?) / (2.0 * h))
        })
        .collect()
}

/// Agreement required between a reverse-mode gradient and [`grad_forward`].
pub const FORWARD_TOL: f64 = 1e-10;
/// Agreement required between a reverse-mode gradient and [`grad_fd`].
pub const FD_TOL: f64 = 1e-5;

/// Pseudo-random point with reals drawn from `[0.5, 1.5)`.
pub fn random_point(ctx: &Context, seed: u64) -> R<Vec<Value>> {
    random_point_in(ctx, seed, 0.5..1.5)
}

/// Pseudo-random point with reals drawn from `reals`, ints from `0..4`,
/// left or right injections with equal odds and arrays of 2 to 5 elements.
pub fn random_point_in(ctx: &Context, seed: u64, reals: std::ops::Range<f64>) -> R<Vec<Value>> {
    use rand::{Rng, SeedableRng};
    fn go(ty: &Ty, rng: &mut rand_chacha::ChaCha8Rng, reals: &std::ops::Range<f64>) -> R<Value> {
        Ok(match ty {
            Ty::Real => Value::Real(rng.gen_range(reals.clone())),
            Ty::Int => Value::Int(rng.gen_range(0..4)),
            Ty::Unit => Value::Unit,
            Ty::Prod(a, b) => Value::pair(go(a, rng, reals)?, go(b, rng, reals)?),
            Ty::Sum(a, b) => {
                if rng.gen_bool(0.5) {
                    Value::inl(go(a, rng, reals)?)
                } else {
                    Value::inr(go(b, rng, reals)?)
                }
            }
            Ty::Array(e) => {
                let n = rng.gen_range(2..=5);
                Value::array((0..n).map(|_| go(e, rng, reals)).collect::<R<_>>()?)
            }
            _ => return Err(OracleError::Shape { value: "a random input".into(), ty: ty.clone() }),
        })
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ctx.tys().iter().map(|ty| go(ty, &mut rng, &reals)).collect()
}

/// Largest relative difference `|a - b| / max(1, |a|, |b|)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use proptest::prelude::*;

    fn reals(xs: &[f64]) -> Vec<Value> {
        xs.iter().map(|x| Value::Real(*x)).collect()
    }

    #[test]
    fn product_rule() {
        let p = parse("(program (args (x Real) (y Real)) (op mul x y))").unwrap();
        let pt = reals(&[3.0, 2.0]);
        let fd = grad_fd(&p.ctx, &p.body, &pt).unwrap();
        assert!((fd[0] - 2.0).abs() < 1e-7 && (fd[1] - 3.0).abs() < 1e-7, "{fd:?}");
        assert_eq!(grad_forward(&p.ctx, &p.body, &pt).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn constant_program() {
        let p = parse("(program (args (x Real)) 4.5)").unwrap();
        let pt = reals(&[1.3]);
        assert!(grad_fd(&p.ctx, &p.body, &pt).unwrap()[0].abs() < 1e-9);
        assert_eq!(grad_forward(&p.ctx, &p.body, &pt).unwrap(), vec![0.0]);
    }

    #[test]
    fn sign_guarded_branch() {
        let p = parse("(program (args (x Real)) (case (sign x) (n (op neg x)) (q (op mul x (op sin x)))))").unwrap();
        let x = 0.8_f64;
        let want = x.sin() + x * x.cos();
        let fw = grad_forward(&p.ctx, &p.body, &reals(&[x])).unwrap()[0];
        assert!((fw - want).abs() <= 1e-12 * want.abs());
        let fd = grad_fd(&p.ctx, &p.body, &reals(&[x])).unwrap()[0];
        assert!((fd - want).abs() < 1e-7);
        assert_eq!(grad_forward(&p.ctx, &p.body, &reals(&[-0.5])).unwrap(), vec![-1.0]);
    }

    #[test]
    fn higher_order_and_arrays() {
        let src = "(program (args (xs (Array Real)) (y Real))
            (let (f (Arrow Real Real)) (lam (z Real) (op mul y z))
              (fold (p (op add (fst p) (snd p))) (build (length xs) (i (app f (index xs i)))))))";
        let p = parse(src).unwrap();
        let pt = vec![Value::array(reals(&[1.0, 2.0, 3.0])), Value::Real(2.0)];
        assert_eq!(grad_forward(&p.ctx, &p.body, &pt).unwrap(), vec![2.0, 2.0, 2.0, 6.0]);
    }

    #[test]
    fn partial_ops_propagate() {
        let p = parse("(program (args (x Real)) (op log x))").unwrap();
        assert!(matches!(
            grad_forward(&p.ctx, &p.body, &reals(&[-1.0])),
            Err(OracleError::Eval(EvalError::PartialOp { .. }))
        ));
    }

    #[test]
    fn sums_skip_inactive_leaves() {
        let ctx = Context::new().with("s", Ty::sum(Ty::Real, Ty::Real)).with("y", Ty::Real);
        let pt = vec![Value::inr(Value::Real(2.0)), Value::Real(5.0)];
        let moved = with_leaves(&ctx, &pt, &[9.0, 3.0, 7.0]).unwrap();
        assert_eq!(moved, vec![Value::inr(Value::Real(3.0)), Value::Real(7.0)]);
    }

    proptest! {
        #[test]
        fn directional_derivative_is_linear(
            x in -2.0f64..2.0, y in 0.5f64..3.0,
            u in prop::collection::vec(-1.0f64..1.0, 2),
            v in prop::collection::vec(-1.0f64..1.0, 2),
            a in -2.0f64..2.0, b in -2.0f64..2.0,
        ) {
            let p = parse("(program (args (x Real) (y Real)) (op add (op mul (op sin x) (op log y)) (op exp (op mul x y))))").unwrap();
            let pt = reals(&[x, y]);
            let du = directional(&p.ctx, &p.body, &pt, &u).unwrap();
            let dv = directional(&p.ctx, &p.body, &pt, &v).unwrap();
            let w: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
            let dw = directional(&p.ctx, &p.body, &pt, &w).unwrap();
            let want = a * du + b * dv;
            prop_assert!((dw - want).abs() <= 1e-12 * want.abs().max(1.0));
        }

        #[test]
        fn forward_agrees_with_differences(x in -2.0f64..2.0, y in 0.5f64..3.0) {
            let p = parse("(program (args (x Real) (y Real)) (op mul (op cos (op mul x y)) (op recip y)))").unwrap();
            let pt = reals(&[x, y]);
            let fw = grad_forward(&p.ctx, &p.body, &pt).unwrap();
            let fd = grad_fd(&p.ctx, &p.body, &pt).unwrap();
            prop_assert!(max_rel_err(&fw, &fd) <= 1e-4);
        }
    }
}
