//! Closure conversion: every lambda becomes an existential package of its
//! captured variables and a closed function of `(captures, argument)`.

use crate::lang::{rc, Name, Term, Ty, T};

use super::{HocError, LambdaInventory, LambdaSite};

/// Converted type: `σ → τ` becomes `Σ. Hole × ((Hole × σ') ⊸ τ')`.
pub fn cc_type(ty: &Ty) -> Ty {
    match ty {
        Ty::Arrow(a, b) => {
            let f = Ty::closed_arrow(Ty::prod(Ty::Hole, cc_type(a)), cc_type(b));
            Ty::sigma(Ty::prod(Ty::Hole, f))
        }
        Ty::Prod(a, b) => Ty::prod(cc_type(a), cc_type(b)),
        Ty::Sum(a, b) => Ty::sum(cc_type(a), cc_type(b)),
        Ty::Array(a) => Ty::array(cc_type(a)),
        _ => ty.clone(),
    }
}

pub(super) struct Cc {
    /// Source type of every source level in scope.
    tys: Vec<Ty>,
    /// Target level of each source level; `None` outside the current closure.
    map: Vec<Option<usize>>,
    depth: usize,
    pub(super) inventory: LambdaInventory,
}

fn var(l: usize) -> T {
    rc(Term::Var(l))
}

impl Cc {
    pub(super) fn new(tys: Vec<Ty>) -> Cc {
        let n = tys.len();
        Cc { tys, map: (0..n).map(Some).collect(), depth: n, inventory: LambdaInventory::default() }
    }

    fn bind<X>(&mut self, ty: Ty, f: impl FnOnce(&mut Self) -> Result<X, HocError>) -> Result<X, HocError> {
        self.tys.push(ty);
        self.map.push(Some(self.depth));
        self.depth += 1;
        let r = f(self);
        self.depth -= 1;
        self.map.pop();
        self.tys.pop();
        r
    }

    /// Converts an elaborated source term; returns it with its source type.
    pub(super) fn cc(&mut self, t: &Term) -> Result<(T, Ty), HocError> {
        use Term::*;
        let r = |t: Term| rc(t);
        Ok(match t {
            Var(l) => {
                let target = self.map.get(*l).copied().flatten().ok_or(HocError::Malformed("unbound variable"))?;
                (var(target), self.tys[*l].clone())
            }
            UnitLit | RealLit(_) | IntLit(_) => {
                let ty = match t {
                    UnitLit => Ty::Unit,
                    RealLit(_) => Ty::Real,
                    _ => Ty::Int,
                };
                (r(t.clone()), ty)
            }
            Let { name, ty, bound, body } => {
                let (b, _) = self.cc(bound)?;
                let (body, bty) = self.bind(ty.clone(), |c| c.cc(body))?;
                (r(Let { name: name.clone(), ty: cc_type(ty), bound: b, body }), bty)
            }
            Pair(a, b) => {
                let (a, x) = self.cc(a)?;
                let (b, y) = self.cc(b)?;
                (r(Pair(a, b)), Ty::prod(x, y))
            }
            Fst(a) | Snd(a) => {
                let (a, ty) = self.cc(a)?;
                let Ty::Prod(x, y) = ty else { return Err(HocError::Malformed("projection")) };
                if matches!(t, Fst(_)) {
                    (r(Fst(a)), *x)
                } else {
                    (r(Snd(a)), *y)
                }
            }
            Inl(a, Some(s)) => (r(Inl(self.cc(a)?.0, Some(cc_type(s)))), s.clone()),
            Inr(a, Some(s)) => (r(Inr(self.cc(a)?.0, Some(cc_type(s)))), s.clone()),
            Case { scrut, lname, left, rname, right } => {
                let (s, sty) = self.cc(scrut)?;
                let Ty::Sum(a, b) = sty else { return Err(HocError::Malformed("case")) };
                let (l, ty) = self.bind(*a, |c| c.cc(left))?;
                let (rr, _) = self.bind(*b, |c| c.cc(right))?;
                (r(Case { scrut: s, lname: lname.clone(), left: l, rname: rname.clone(), right: rr }), ty)
            }
            Sign(a) => (r(Sign(self.cc(a)?.0)), Ty::boolean()),
            PrimOp(op, args) => {
                let args = args.iter().map(|a| Ok(self.cc(a)?.0)).collect::<Result<_, HocError>>()?;
                (r(PrimOp(*op, args)), Ty::Real)
            }
            Build { len, name, body } => {
                let (len, _) = self.cc(len)?;
                let (body, e) = self.bind(Ty::Int, |c| c.cc(body))?;
                (r(Build { len, name: name.clone(), body }), Ty::array(e))
            }
            Index(a, i) => {
                let (a, aty) = self.cc(a)?;
                let Ty::Array(e) = aty else { return Err(HocError::Malformed("index")) };
                (r(Index(a, self.cc(i)?.0)), *e)
            }
            Fold { name, body, arr } => {
                let (arr, aty) = self.cc(arr)?;
                let Ty::Array(e) = aty else { return Err(HocError::Malformed("fold")) };
                let (body, _) = self.bind(Ty::prod((*e).clone(), (*e).clone()), |c| c.cc(body))?;
                (r(Fold { name: name.clone(), body, arr }), *e)
            }
            Length(a) => (r(Length(self.cc(a)?.0)), Ty::Int),
            Lam { name, ty, body } => self.lam(name, ty, body)?,
            App(f, a) => {
                let (f, fty) = self.cc(f)?;
                let Ty::Arrow(sigma, tau) = fty else { return Err(HocError::Malformed("application")) };
                // `a` sits under the `let f` binder.
                self.depth += 1;
                let a = self.cc(a);
                self.depth -= 1;
                let (a, _) = a?;
                let fl = self.depth;
                let al = fl + 1;
                let z = al + 1;
                let call = r(App(r(Snd(var(z))), r(Pair(r(Fst(var(z))), var(al)))));
                let unpack = r(UnpackCase { scrut: var(fl), name: Name::new("z"), body: call });
                let inner = r(Let { name: Name::new("a"), ty: cc_type(&sigma), bound: a, body: unpack });
                let fty = cc_type(&Ty::arrow((*sigma).clone(), (*tau).clone()));
                (r(Let { name: Name::new("f"), ty: fty, bound: f, body: inner }), *tau)
            }
            _ => return Err(HocError::Malformed("not a source construct")),
        })
    }

    fn lam(&mut self, name: &Name, sigma: &Ty, body: &T) -> Result<(T, Ty), HocError> {
        use Term::*;
        let level = self.tys.len();
        let mut caps = Vec::new();
        body.walk(&mut |t| {
            if let Var(l) = t {
                if *l < level {
                    caps.push(*l);
                }
            }
        });
        caps.sort_unstable();
        caps.dedup();
        let cap_tys: Vec<Ty> = caps.iter().map(|l| self.tys[*l].clone()).collect();
        let tag = Ty::tuple(cap_tys.iter().map(cc_type));
        let id = self.inventory.sites.len();
        self.inventory.sites.push(LambdaSite { id, captures: cap_tys.clone(), arg: sigma.clone(), result: Ty::Unit });

        // The closed function binds `e : (captures, argument)` at level 0,
        // then unpacks it into one `let` per capture and one for the
        // argument.
        let env_ty = Ty::prod(tag.clone(), cc_type(sigma));
        let saved_map = std::mem::replace(&mut self.map, vec![None; level]);
        let saved_depth = std::mem::replace(&mut self.depth, 1);
        let k = caps.len();
        let mut lets: Vec<(Name, Ty, T)> = Vec::new();
        for (i, l) in caps.iter().enumerate() {
            lets.push((Name::new("c"), cc_type(&cap_tys[i]), Term::tuple_proj(rc(Fst(var(0))), i, k)));
            self.map[*l] = Some(1 + i);
        }
        lets.push((name.clone(), cc_type(sigma), rc(Snd(var(0)))));
        self.depth = 1 + k;
        let res = self.bind(sigma.clone(), |c| c.cc(body));
        self.map = saved_map;
        self.depth = saved_depth;
        let (mut inner, tau) = res?;
        for (n, ty, bound) in lets.into_iter().rev() {
            inner = rc(Let { name: n, ty, bound, body: inner });
        }
        self.inventory.sites[id].result = tau.clone();
        let closed = rc(ClosedLam { name: Name::new("e"), ty: env_ty, body: inner });
        let captured = Term::tuple(caps.iter().map(|l| var(self.map[*l].expect("captured variable is in scope"))).collect());
        let body_ty = match cc_type(&Ty::arrow(sigma.clone(), tau.clone())) {
            Ty::Sigma(b) => *b,
            _ => unreachable!("arrows convert to existentials"),
        };
        Ok((rc(Pack(tag, body_ty, rc(Pair(captured, closed)))), Ty::arrow(sigma.clone(), tau)))
    }
}
