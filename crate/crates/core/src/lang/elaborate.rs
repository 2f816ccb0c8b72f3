//! Annotates every source injection with its full sum type, so later
//! passes can synthesize types bottom-up.

use std::rc::Rc;

use super::term::{Term, T};
use super::ty::{Context, Ty};
use super::typecheck::{typecheck_source, TypeError};

/// Elaborates a well-typed source term; returns it with its type.
pub fn elaborate(ctx: &Context, t: &Term) -> Result<(T, Ty), TypeError> {
    typecheck_source(ctx, t)?;
    let mut el = Elab { tys: ctx.tys() };
    el.synth(t)
}

struct Elab {
    tys: Vec<Ty>,
}

fn fail(t: &Term, msg: impl Into<String>) -> TypeError {
    TypeError { at: t.head(), msg: msg.into(), expected: None, actual: None }
}

impl Elab {
    fn under<R>(&mut self, ty: Ty, f: impl FnOnce(&mut Self) -> R) -> R {
        self.tys.push(ty);
        let r = f(self);
        self.tys.pop();
        r
    }

    fn check(&mut self, t: &Term, expected: &Ty) -> Result<T, TypeError> {
        use Term::*;
        Ok(Rc::new(match (t, expected) {
            (Inl(a, None), Ty::Sum(x, _)) => Inl(self.check(a, x)?, Some(expected.clone())),
            (Inr(a, None), Ty::Sum(_, y)) => Inr(self.check(a, y)?, Some(expected.clone())),
            (Pair(a, b), Ty::Prod(x, y)) => Pair(self.check(a, x)?, self.check(b, y)?),
            (Let { name, ty, bound, body }, _) => Let {
                name: name.clone(),
                ty: ty.clone(),
                bound: self.check(bound, ty)?,
                body: self.under(ty.clone(), |e| e.check(body, expected))?,
            },
            (Case { scrut, lname, left, rname, right }, _) => {
                let (s, sty) = self.synth(scrut)?;
                let Ty::Sum(a, b) = sty else { return Err(fail(t, "case on a non-sum")) };
                Case {
                    scrut: s,
                    lname: lname.clone(),
                    left: self.under(*a, |e| e.check(left, expected))?,
                    rname: rname.clone(),
                    right: self.under(*b, |e| e.check(right, expected))?,
                }
            }
            _ => {
                let (e, ty) = self.synth(t)?;
                if ty != *expected {
                    return Err(fail(t, format!("expected {expected}, found {ty}")));
                }
                return Ok(e);
            }
        }))
    }

    fn synth(&mut self, t: &Term) -> Result<(T, Ty), TypeError> {
        use Term::*;
        let r = |t: Term| Rc::new(t);
        Ok(match t {
            Var(l) => (r(Var(*l)), self.tys.get(*l).cloned().ok_or_else(|| fail(t, "unbound"))?),
            UnitLit => (r(UnitLit), Ty::Unit),
            RealLit(x) => (r(RealLit(*x)), Ty::Real),
            IntLit(i) => (r(IntLit(*i)), Ty::Int),
            Let { name, ty, bound, body } => {
                let bound = self.check(bound, ty)?;
                let (body, bty) = self.under(ty.clone(), |e| e.synth(body))?;
                (r(Let { name: name.clone(), ty: ty.clone(), bound, body }), bty)
            }
            Pair(a, b) => {
                let (a, x) = self.synth(a)?;
                let (b, y) = self.synth(b)?;
                (r(Pair(a, b)), Ty::prod(x, y))
            }
            Fst(a) | Snd(a) => {
                let (a, ty) = self.synth(a)?;
                let Ty::Prod(x, y) = ty else { return Err(fail(t, "projection from a non-product")) };
                if matches!(t, Fst(_)) {
                    (r(Fst(a)), *x)
                } else {
                    (r(Snd(a)), *y)
                }
            }
            Inl(a, Some(s)) | Inr(a, Some(s)) => {
                let bare = if matches!(t, Inl(..)) { Inl(a.clone(), None) } else { Inr(a.clone(), None) };
                (self.check(&bare, s)?, s.clone())
            }
            Inl(_, None) | Inr(_, None) => return Err(fail(t, "cannot infer the sum type")),
            Case { scrut, lname, left, rname, right } => {
                let (s, sty) = self.synth(scrut)?;
                let Ty::Sum(a, b) = sty else { return Err(fail(t, "case on a non-sum")) };
                let (l, rr, ty) = match self.under((*a).clone(), |e| e.synth(left)) {
                    Ok((l, ty)) => (l, self.under(*b, |e| e.check(right, &ty))?, ty),
                    Err(err) => {
                        let (rr, ty) = self.under((*b).clone(), |e| e.synth(right)).map_err(|_| err)?;
                        (self.under(*a, |e| e.check(left, &ty))?, rr, ty)
                    }
                };
                (
                    r(Case { scrut: s, lname: lname.clone(), left: l, rname: rname.clone(), right: rr }),
                    ty,
                )
            }
            Sign(a) => (r(Sign(self.check(a, &Ty::Real)?)), Ty::boolean()),
            PrimOp(op, args) => {
                let mut out = Vec::with_capacity(args.len());
                for a in args {
                    out.push(self.check(a, &Ty::Real)?);
                }
                (r(PrimOp(*op, out)), Ty::Real)
            }
            Lam { name, ty, body } => {
                let (body, bty) = self.under(ty.clone(), |e| e.synth(body))?;
                (r(Lam { name: name.clone(), ty: ty.clone(), body }), Ty::arrow(ty.clone(), bty))
            }
            App(f, a) => {
                let (f, fty) = self.synth(f)?;
                let Ty::Arrow(x, y) = fty else { return Err(fail(t, "application of a non-function")) };
                (r(App(f, self.check(a, &x)?)), *y)
            }
            Build { len, name, body } => {
                let len = self.check(len, &Ty::Int)?;
                let (body, ety) = self.under(Ty::Int, |e| e.synth(body))?;
                (r(Build { len, name: name.clone(), body }), Ty::array(ety))
            }
            Index(a, i) => {
                let (a, aty) = self.synth(a)?;
                let Ty::Array(e) = aty else { return Err(fail(t, "index of a non-array")) };
                (r(Index(a, self.check(i, &Ty::Int)?)), *e)
            }
            Fold { name, body, arr } => {
                let (arr, aty) = self.synth(arr)?;
                let Ty::Array(e) = aty else { return Err(fail(t, "fold of a non-array")) };
                let body = self.under(Ty::prod((*e).clone(), (*e).clone()), |el| el.check(body, &e))?;
                (r(Fold { name: name.clone(), body, arr }), *e)
            }
            Length(a) => {
                let (a, aty) = self.synth(a)?;
                if !matches!(aty, Ty::Array(_)) {
                    return Err(fail(t, "length of a non-array"));
                }
                (r(Length(a)), Ty::Int)
            }
            _ => return Err(fail(t, "target-only construct in a source program")),
        })
    }
}
