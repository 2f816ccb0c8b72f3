//! Defunctionalisation of closure-converted programs.
//!
//! A unification pass assigns every function-typed position a lambda set:
//! the packs whose values may flow there. A function value then becomes a
//! sum over its set's capture tuples, and every call site a `case` that
//! inlines the closed body of each candidate.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::lang::{rc, Context, Name, Term, Ty, T};

use super::HocError;

/// A converted type whose function positions carry a lambda-set variable.
#[derive(Clone, Debug)]
enum At {
    Real,
    Unit,
    Int,
    Prod(Rc<At>, Rc<At>),
    Sum(Rc<At>, Rc<At>),
    Array(Rc<At>),
    Fun(Rc<At>, Rc<At>, usize),
}

struct Site {
    caps: At,
    arg: At,
    body: T,
}

#[derive(Default)]
struct Defun {
    parent: Vec<usize>,
    members: Vec<BTreeSet<usize>>,
    sites: Vec<Site>,
    /// Per node: the bound of a `let`, an injection's sum, a pack's function
    /// type, or a call's callee.
    ats: HashMap<usize, At>,
    /// Pack nodes to their site.
    site_of: HashMap<usize, usize>,
    reps: HashMap<usize, Ty>,
    in_progress: BTreeSet<usize>,
}

/// Defunctionalises `term`, a closure-converted program over `ctx`.
pub(super) fn run(ctx: &Context, term: &Term) -> Result<T, HocError> {
    let mut d = Defun::default();
    let mut env = ctx.tys().iter().map(|t| d.template(t)).collect::<Result<Vec<_>, _>>()?;
    d.infer(&mut env, term)?;
    let n = ctx.len();
    Tr { d: &mut d, map: (0..n).collect(), depth: n }.tr(term)
}

fn key(t: &Term) -> usize {
    t as *const Term as usize
}

fn var(l: usize) -> T {
    rc(Term::Var(l))
}

/// The callee and argument of a call produced by closure conversion:
/// `unpack f (z. app (snd z) (pair (fst z) a))`.
fn call_pattern(scrut: &T, body: &Term, z: usize) -> Option<(T, T)> {
    let Term::App(f, a) = body else { return None };
    let (Term::Snd(zf), Term::Pair(zc, arg)) = (&**f, &**a) else { return None };
    let (Term::Var(l1), Term::Fst(zc)) = (&**zf, &**zc) else { return None };
    let Term::Var(l2) = &**zc else { return None };
    (*l1 == z && *l2 == z && !mentions(arg, z)).then(|| (scrut.clone(), arg.clone()))
}

fn mentions(t: &Term, l: usize) -> bool {
    let mut found = false;
    t.walk(&mut |s| found |= matches!(s, Term::Var(k) if *k == l));
    found
}

/// The captures and closed function of a pack produced by closure conversion.
fn pack_pattern(t: &Term) -> Option<(&T, &Ty, &T)> {
    let Term::Pack(_, _, inner) = t else { return None };
    let Term::Pair(caps, f) = &**inner else { return None };
    let Term::ClosedLam { ty: Ty::Prod(_, sigma), body, .. } = &**f else { return None };
    Some((caps, sigma, body))
}

impl Defun {
    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.members.push(BTreeSet::new());
        self.parent.len() - 1
    }

    fn find(&mut self, mut s: usize) -> usize {
        while self.parent[s] != s {
            self.parent[s] = self.parent[self.parent[s]];
            s = self.parent[s];
        }
        s
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            let moved = std::mem::take(&mut self.members[b]);
            self.members[a].extend(moved);
            self.parent[b] = a;
        }
    }

    fn template(&mut self, ty: &Ty) -> Result<At, HocError> {
        Ok(match ty {
            Ty::Real => At::Real,
            Ty::Unit => At::Unit,
            Ty::Int => At::Int,
            Ty::Prod(a, b) => At::Prod(Rc::new(self.template(a)?), Rc::new(self.template(b)?)),
            Ty::Sum(a, b) => At::Sum(Rc::new(self.template(a)?), Rc::new(self.template(b)?)),
            Ty::Array(a) => At::Array(Rc::new(self.template(a)?)),
            Ty::Sigma(body) => match &**body {
                Ty::Prod(h, f) if **h == Ty::Hole => match &**f {
                    Ty::ClosedArrow(x, res) => match &**x {
                        Ty::Prod(h2, arg) if **h2 == Ty::Hole => {
                            let s = self.fresh();
                            At::Fun(Rc::new(self.template(arg)?), Rc::new(self.template(res)?), s)
                        }
                        _ => return Err(HocError::Malformed("existential type")),
                    },
                    _ => return Err(HocError::Malformed("existential type")),
                },
                _ => return Err(HocError::Malformed("existential type")),
            },
            other => return Err(HocError::HigherOrderInput(other.clone())),
        })
    }

    fn unify(&mut self, a: &At, b: &At) -> Result<(), HocError> {
        match (a, b) {
            (At::Real, At::Real) | (At::Unit, At::Unit) | (At::Int, At::Int) => Ok(()),
            (At::Prod(a1, a2), At::Prod(b1, b2)) | (At::Sum(a1, a2), At::Sum(b1, b2)) => {
                self.unify(a1, b1)?;
                self.unify(a2, b2)
            }
            (At::Array(x), At::Array(y)) => self.unify(x, y),
            (At::Fun(a1, r1, s1), At::Fun(a2, r2, s2)) => {
                self.union(*s1, *s2);
                self.unify(a1, a2)?;
                self.unify(r1, r2)
            }
            _ => Err(HocError::Malformed("ill-typed converted program")),
        }
    }

    fn under(&mut self, env: &mut Vec<At>, at: At, t: &Term) -> Result<At, HocError> {
        env.push(at);
        let r = self.infer(env, t);
        env.pop();
        r
    }

    fn infer(&mut self, env: &mut Vec<At>, t: &Term) -> Result<At, HocError> {
        use Term::*;
        let p = |a: At, b: At| At::Prod(Rc::new(a), Rc::new(b));
        Ok(match t {
            Var(l) => env.get(*l).cloned().ok_or(HocError::Malformed("unbound variable"))?,
            UnitLit => At::Unit,
            RealLit(_) => At::Real,
            IntLit(_) => At::Int,
            Let { bound, body, .. } => {
                let b = self.infer(env, bound)?;
                self.ats.insert(key(t), b.clone());
                self.under(env, b, body)?
            }
            Pair(a, b) => p(self.infer(env, a)?, self.infer(env, b)?),
            Fst(a) | Snd(a) => match self.infer(env, a)? {
                At::Prod(x, y) => (*if matches!(t, Fst(_)) { x } else { y }).clone(),
                _ => return Err(HocError::Malformed("projection")),
            },
            Inl(a, Some(Ty::Sum(_, y))) => {
                let at = At::Sum(Rc::new(self.infer(env, a)?), Rc::new(self.template(y)?));
                self.ats.insert(key(t), at.clone());
                at
            }
            Inr(a, Some(Ty::Sum(x, _))) => {
                let at = At::Sum(Rc::new(self.template(x)?), Rc::new(self.infer(env, a)?));
                self.ats.insert(key(t), at.clone());
                at
            }
            Case { scrut, left, right, .. } => match self.infer(env, scrut)? {
                At::Sum(a, b) => {
                    let l = self.under(env, (*a).clone(), left)?;
                    let r = self.under(env, (*b).clone(), right)?;
                    self.unify(&l, &r)?;
                    l
                }
                _ => return Err(HocError::Malformed("case")),
            },
            Sign(a) => {
                self.infer(env, a)?;
                At::Sum(Rc::new(At::Unit), Rc::new(At::Unit))
            }
            PrimOp(_, args) => {
                for a in args {
                    self.infer(env, a)?;
                }
                At::Real
            }
            Build { len, body, .. } => {
                self.infer(env, len)?;
                At::Array(Rc::new(self.under(env, At::Int, body)?))
            }
            Index(a, i) => {
                self.infer(env, i)?;
                match self.infer(env, a)? {
                    At::Array(e) => (*e).clone(),
                    _ => return Err(HocError::Malformed("index")),
                }
            }
            Fold { body, arr, .. } => match self.infer(env, arr)? {
                At::Array(e) => {
                    let r = self.under(env, p((*e).clone(), (*e).clone()), body)?;
                    self.unify(&r, &e)?;
                    r
                }
                _ => return Err(HocError::Malformed("fold")),
            },
            Length(a) => {
                self.infer(env, a)?;
                At::Int
            }
            Pack(..) => {
                let (caps, sigma, body) = pack_pattern(t).ok_or(HocError::Malformed("pack"))?;
                let id = self.sites.len();
                self.site_of.insert(key(t), id);
                let caps_at = self.infer(env, caps)?;
                let arg = self.template(sigma)?;
                self.sites.push(Site { caps: caps_at.clone(), arg: arg.clone(), body: body.clone() });
                let res = self.infer(&mut vec![p(caps_at, arg.clone())], body)?;
                let s = self.fresh();
                self.members[s].insert(id);
                let at = At::Fun(Rc::new(arg), Rc::new(res), s);
                self.ats.insert(key(t), at.clone());
                at
            }
            UnpackCase { scrut, body, .. } => {
                let (scrut, arg) = call_pattern(scrut, body, env.len()).ok_or(HocError::Malformed("unpack"))?;
                let f = self.infer(env, &scrut)?;
                let a = self.infer(env, &arg)?;
                let At::Fun(x, res, _) = &f else { return Err(HocError::Malformed("call of a non-function")) };
                self.unify(&a, x)?;
                let res = (**res).clone();
                self.ats.insert(key(t), f);
                res
            }
            _ => return Err(HocError::Malformed("unexpected construct")),
        })
    }

    /// The first-order representation of a lambda set.
    fn rep(&mut self, s: usize) -> Result<Ty, HocError> {
        let s = self.find(s);
        if let Some(t) = self.reps.get(&s) {
            return Ok(t.clone());
        }
        if !self.in_progress.insert(s) {
            return Err(HocError::RecursiveLambdaSet);
        }
        let ids: Vec<usize> = self.members[s].iter().copied().collect();
        let mut tys = Vec::new();
        for id in &ids {
            let caps = self.sites[*id].caps.clone();
            tys.push(self.ty(&caps)?);
        }
        self.in_progress.remove(&s);
        let t = match tys.pop() {
            None => Ty::Unit,
            Some(last) => tys.into_iter().rev().fold(last, |acc, t| Ty::sum(t, acc)),
        };
        self.reps.insert(s, t.clone());
        Ok(t)
    }

    fn ty(&mut self, at: &At) -> Result<Ty, HocError> {
        Ok(match at {
            At::Real => Ty::Real,
            At::Unit => Ty::Unit,
            At::Int => Ty::Int,
            At::Prod(a, b) => Ty::prod(self.ty(a)?, self.ty(b)?),
            At::Sum(a, b) => Ty::sum(self.ty(a)?, self.ty(b)?),
            At::Array(a) => Ty::array(self.ty(a)?),
            At::Fun(_, _, s) => self.rep(*s)?,
        })
    }

    fn set_of(&mut self, t: &Term) -> Result<(usize, Vec<usize>), HocError> {
        match self.ats.get(&key(t)) {
            Some(At::Fun(_, _, s)) => {
                let s = self.find(*s);
                Ok((s, self.members[s].iter().copied().collect()))
            }
            _ => Err(HocError::Malformed("missing lambda set")),
        }
    }

    fn at(&self, t: &Term) -> Result<At, HocError> {
        self.ats.get(&key(t)).cloned().ok_or(HocError::Malformed("missing annotation"))
    }
}

/// Rewrites the analysed program; `map` takes levels of the converted
/// program to levels of the output.
struct Tr<'a> {
    d: &'a mut Defun,
    map: Vec<usize>,
    depth: usize,
}

impl Tr<'_> {
    fn bind<X>(&mut self, f: impl FnOnce(&mut Self, usize) -> Result<X, HocError>) -> Result<X, HocError> {
        let l = self.depth;
        self.map.push(l);
        self.depth += 1;
        let r = f(self, l);
        self.depth -= 1;
        self.map.pop();
        r
    }

    /// A fresh output binder with no counterpart in the converted program.
    fn fresh<X>(&mut self, f: impl FnOnce(&mut Self, usize) -> Result<X, HocError>) -> Result<X, HocError> {
        let l = self.depth;
        self.depth += 1;
        let r = f(self, l);
        self.depth -= 1;
        r
    }

    fn tr(&mut self, t: &Term) -> Result<T, HocError> {
        use Term::*;
        let r = |t: Term| rc(t);
        Ok(match t {
            Var(l) => var(self.map[*l]),
            UnitLit | RealLit(_) | IntLit(_) => r(t.clone()),
            Let { name, bound, body, .. } => {
                let at = self.d.at(t)?;
                let ty = self.d.ty(&at)?;
                let bound = self.tr(bound)?;
                let body = self.bind(|s, _| s.tr(body))?;
                r(Let { name: name.clone(), ty, bound, body })
            }
            Pair(a, b) => r(Pair(self.tr(a)?, self.tr(b)?)),
            Fst(a) => r(Fst(self.tr(a)?)),
            Snd(a) => r(Snd(self.tr(a)?)),
            Inl(a, _) | Inr(a, _) => {
                let at = self.d.at(t)?;
                let ty = Some(self.d.ty(&at)?);
                let a = self.tr(a)?;
                r(if matches!(t, Inl(..)) { Inl(a, ty) } else { Inr(a, ty) })
            }
            Case { scrut, lname, left, rname, right } => {
                let scrut = self.tr(scrut)?;
                let left = self.bind(|s, _| s.tr(left))?;
                let right = self.bind(|s, _| s.tr(right))?;
                r(Case { scrut, lname: lname.clone(), left, rname: rname.clone(), right })
            }
            Sign(a) => r(Sign(self.tr(a)?)),
            PrimOp(op, args) => r(PrimOp(*op, args.iter().map(|a| self.tr(a)).collect::<Result<_, _>>()?)),
            Build { len, name, body } => {
                let len = self.tr(len)?;
                r(Build { len, name: name.clone(), body: self.bind(|s, _| s.tr(body))? })
            }
            Index(a, i) => r(Index(self.tr(a)?, self.tr(i)?)),
            Fold { name, body, arr } => {
                let arr = self.tr(arr)?;
                r(Fold { name: name.clone(), body: self.bind(|s, _| s.tr(body))?, arr })
            }
            Length(a) => r(Length(self.tr(a)?)),
            Pack(..) => {
                let (caps, _, _) = pack_pattern(t).ok_or(HocError::Malformed("pack"))?;
                let id = self.d.site_of[&key(t)];
                let (_, ids) = self.d.set_of(t)?;
                let caps = self.tr(caps)?;
                self.inject(caps, id, &ids)?
            }
            UnpackCase { scrut, body, .. } => {
                let (scrut, arg) = call_pattern(scrut, body, self.map.len()).ok_or(HocError::Malformed("unpack"))?;
                let (s, ids) = self.d.set_of(t)?;
                if ids.is_empty() {
                    return Err(HocError::InventoryMismatch);
                }
                let fty = self.d.rep(s)?;
                let At::Fun(x, _, _) = self.d.at(t)? else { unreachable!("calls record function types") };
                let aty = self.d.ty(&x)?;
                let f = self.tr(&scrut)?;
                let a = self.tr(&arg)?;
                let body = self.fresh(|s, fl| {
                    let inner = s.fresh(|s, al| s.dispatch(fl, al, &ids))?;
                    Ok(rc(Let { name: Name::new("a"), ty: aty, bound: a, body: inner }))
                })?;
                rc(Let { name: Name::new("f"), ty: fty, bound: f, body })
            }
            _ => return Err(HocError::Malformed("unexpected construct")),
        })
    }

    fn inject(&mut self, caps: T, id: usize, ids: &[usize]) -> Result<T, HocError> {
        let pos = ids.iter().position(|i| *i == id).ok_or(HocError::InventoryMismatch)?;
        let mut tys = Vec::new();
        for i in ids {
            let c = self.d.sites[*i].caps.clone();
            tys.push(self.d.ty(&c)?);
        }
        // Sum(t0, Sum(t1, ... t_{n-1})): position j is j right-injections
        // followed by a left one, except the last.
        let suffix = |j: usize| -> Ty {
            let mut acc = tys[tys.len() - 1].clone();
            for t in tys[j..tys.len() - 1].iter().rev() {
                acc = Ty::sum(t.clone(), acc);
            }
            acc
        };
        let mut v = if pos + 1 == ids.len() { caps } else { rc(Term::Inl(caps, Some(suffix(pos)))) };
        for j in (0..pos).rev() {
            v = rc(Term::Inr(v, Some(suffix(j))));
        }
        Ok(v)
    }

    /// Calls the function held at level `fl` on the argument at level `al`.
    fn dispatch(&mut self, fl: usize, al: usize, ids: &[usize]) -> Result<T, HocError> {
        match ids {
            [] => Err(HocError::InventoryMismatch),
            [only] => self.inline(*only, var(fl), al),
            [first, rest @ ..] => {
                let left = self.fresh(|s, c| s.inline(*first, var(c), al))?;
                let right = self.fresh(|s, r| s.dispatch(r, al, rest))?;
                Ok(rc(Term::Case { scrut: var(fl), lname: Name::new("c"), left, rname: Name::new("g"), right }))
            }
        }
    }

    /// The closed body of site `id` with `e := (caps, arg)`.
    fn inline(&mut self, id: usize, caps: T, al: usize) -> Result<T, HocError> {
        let (c, a, body) = {
            let s = &self.d.sites[id];
            (s.caps.clone(), s.arg.clone(), s.body.clone())
        };
        let ety = self.d.ty(&At::Prod(Rc::new(c), Rc::new(a)))?;
        let e = self.depth;
        let saved = std::mem::replace(&mut self.map, vec![e]);
        self.depth += 1;
        let r = self.tr(&body);
        self.depth -= 1;
        self.map = saved;
        Ok(rc(Term::Let { name: Name::new("e"), ty: ety, bound: rc(Term::Pair(caps, var(al))), body: r? }))
    }
}
