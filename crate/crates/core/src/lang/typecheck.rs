use super::term::{Term, T};
use super::ty::{Context, CotCtx, Ty};
use super::Program;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("type error in `{at}`: {msg}")]
pub struct TypeError {
    pub at: &'static str,
    pub msg: String,
    pub expected: Option<Ty>,
    pub actual: Option<Ty>,
}

/// Synthesizes the type of `t` under `ctx`; target constructors allowed.
pub fn typecheck(ctx: &Context, t: &Term) -> Result<Ty, TypeError> {
    Checker::new(ctx.tys()).synth(t)
}

/// Like [`typecheck`] but rejects target-only constructors and types.
pub fn typecheck_source(ctx: &Context, t: &Term) -> Result<Ty, TypeError> {
    if let Some((name, _)) = ctx.vars.iter().find(|(_, ty)| !ty.is_source()) {
        return Err(err(t, format!("argument `{name}` has a non-source type")));
    }
    if !t.is_source() {
        return Err(err(t, "target-only construct in a source program"));
    }
    typecheck(ctx, t)
}

pub fn typecheck_program(p: &Program) -> Result<Ty, TypeError> {
    typecheck_source(&p.ctx, &p.body)
}

fn err(t: &Term, msg: impl Into<String>) -> TypeError {
    TypeError { at: t.head(), msg: msg.into(), expected: None, actual: None }
}

fn mismatch(t: &Term, expected: &Ty, actual: &Ty) -> TypeError {
    TypeError {
        at: t.head(),
        msg: format!("expected {expected}, found {actual}"),
        expected: Some(expected.clone()),
        actual: Some(actual.clone()),
    }
}

fn is_linear(t: &Ty) -> bool {
    match t {
        Ty::LReal | Ty::LUnit | Ty::LHole | Ty::LRigid(_) => true,
        Ty::LProd(a, b) | Ty::LSum(a, b) => is_linear(a) && is_linear(b),
        Ty::Bag(a) | Ty::LSigma(a) => is_linear(a),
        Ty::List(_) => true,
        _ => false,
    }
}

struct Checker {
    ctx: Vec<Ty>,
    rigids: Vec<u32>,
    next_rigid: u32,
}

impl Checker {
    fn new(ctx: Vec<Ty>) -> Checker {
        Checker { ctx, rigids: Vec::new(), next_rigid: 0 }
    }

    /// Annotations inside an unpack body name its type variable by `Hole`.
    fn ann(&self, ty: &Ty) -> Ty {
        match self.rigids.last() {
            Some(k) => ty.open(*k),
            None => ty.clone(),
        }
    }

    fn ann_ctx(&self, c: &CotCtx) -> CotCtx {
        match self.rigids.last() {
            Some(k) => c.map(&|t| t.open(*k)),
            None => c.clone(),
        }
    }

    fn under<R>(&mut self, tys: &[Ty], f: impl FnOnce(&mut Self) -> R) -> R {
        let n = self.ctx.len();
        self.ctx.extend_from_slice(tys);
        let r = f(self);
        self.ctx.truncate(n);
        r
    }

    fn expect(&self, t: &Term, expected: &Ty, actual: Ty) -> Result<(), TypeError> {
        if *expected == actual {
            Ok(())
        } else {
            Err(mismatch(t, expected, &actual))
        }
    }

    fn check(&mut self, t: &Term, expected: &Ty) -> Result<(), TypeError> {
        match (t, expected) {
            (Term::Inl(a, None), Ty::Sum(x, _)) | (Term::LInl(a, None), Ty::LSum(x, _)) => {
                self.check(a, x)
            }
            (Term::Inr(a, None), Ty::Sum(_, y)) | (Term::LInr(a, None), Ty::LSum(_, y)) => {
                self.check(a, y)
            }
            (Term::Pair(a, b), Ty::Prod(x, y)) | (Term::LPair(a, b), Ty::LProd(x, y)) => {
                self.check(a, x)?;
                self.check(b, y)
            }
            (Term::Let { ty, bound, body, .. }, _) => {
                let bt = self.ann(ty);
                self.check(bound, &bt)?;
                self.under(&[bt], |c| c.check(body, expected))
            }
            (Term::Case { scrut, left, right, .. }, _) => {
                let (a, b) = self.sum_parts(scrut)?;
                self.under(&[a], |c| c.check(left, expected))?;
                self.under(&[b], |c| c.check(right, expected))
            }
            _ => {
                let actual = self.synth(t)?;
                self.expect(t, expected, actual)
            }
        }
    }

    fn sum_parts(&mut self, scrut: &Term) -> Result<(Ty, Ty), TypeError> {
        match self.synth(scrut)? {
            Ty::Sum(a, b) => Ok((*a, *b)),
            other => Err(TypeError {
                at: "case",
                msg: format!("scrutinee must be a sum, found {other}"),
                expected: None,
                actual: Some(other),
            }),
        }
    }

    fn synth_in(&mut self, tys: &[Ty], t: &Term) -> Result<Ty, TypeError> {
        self.under(tys, |c| c.synth(t))
    }

    fn array_elem(&mut self, t: &Term) -> Result<Ty, TypeError> {
        match self.synth(t)? {
            Ty::Array(e) => Ok(*e),
            other => Err(TypeError {
                at: t.head(),
                msg: format!("expected an array, found {other}"),
                expected: None,
                actual: Some(other),
            }),
        }
    }

    fn evm_parts(&mut self, t: &Term) -> Result<(CotCtx, Ty), TypeError> {
        match self.synth(t)? {
            Ty::Evm(c, a) => Ok((c, *a)),
            other => Err(err(t, format!("expected an EVM action, found {other}"))),
        }
    }

    fn synth(&mut self, t: &Term) -> Result<Ty, TypeError> {
        use Term::*;
        let real = Ty::Real;
        Ok(match t {
            Var(l) => self
                .ctx
                .get(*l)
                .cloned()
                .ok_or_else(|| err(t, format!("level {l} is not bound")))?,
            Let { ty, bound, body, .. } => {
                let bt = self.ann(ty);
                self.check(bound, &bt)?;
                self.synth_in(&[bt], body)?
            }
            UnitLit => Ty::Unit,
            Pair(a, b) => Ty::prod(self.synth(a)?, self.synth(b)?),
            Fst(a) | Snd(a) => match self.synth(a)? {
                Ty::Prod(x, y) => *if matches!(t, Fst(_)) { x } else { y },
                other => return Err(err(t, format!("projection from non-product {other}"))),
            },
            Inl(a, Some(s)) | Inr(a, Some(s)) => {
                let s = self.ann(s);
                self.check(t_without_annotation(t, a).as_ref(), &s)?;
                s
            }
            LInl(a, Some(s)) | LInr(a, Some(s)) => {
                let s = self.ann(s);
                self.check(t_without_annotation(t, a).as_ref(), &s)?;
                s
            }
            Inl(_, None) | Inr(_, None) | LInl(_, None) | LInr(_, None) => {
                return Err(err(t, "cannot infer the sum type; annotate it or use it where a type is expected"))
            }
            Case { scrut, left, right, .. } => {
                let (a, b) = self.sum_parts(scrut)?;
                match self.synth_in(&[a.clone()], left) {
                    Ok(ty) => {
                        self.under(&[b], |c| c.check(right, &ty))?;
                        ty
                    }
                    Err(e) => {
                        let ty = self.synth_in(&[b], right).map_err(|_| e)?;
                        self.under(&[a], |c| c.check(left, &ty))?;
                        ty
                    }
                }
            }
            RealLit(_) => Ty::Real,
            IntLit(_) => Ty::Int,
            Sign(a) => {
                self.check(a, &real)?;
                Ty::boolean()
            }
            PrimOp(op, args) => {
                if args.len() != op.arity() {
                    return Err(err(t, format!("`{}` takes {} argument(s)", op.name(), op.arity())));
                }
                for a in args {
                    self.check(a, &real)?;
                }
                Ty::Real
            }
            Lam { ty, body, .. } => {
                let a = self.ann(ty);
                let b = self.synth_in(&[a.clone()], body)?;
                Ty::arrow(a, b)
            }
            App(f, a) => match self.synth(f)? {
                Ty::Arrow(x, y) | Ty::ClosedArrow(x, y) => {
                    self.check(a, &x)?;
                    *y
                }
                other => return Err(err(t, format!("application of non-function {other}"))),
            },
            Build { len, body, .. } => {
                self.check(len, &Ty::Int)?;
                Ty::array(self.synth_in(&[Ty::Int], body)?)
            }
            Index(a, i) => {
                let e = self.array_elem(a)?;
                self.check(i, &Ty::Int)?;
                e
            }
            Fold { body, arr, .. } => {
                let e = self.array_elem(arr)?;
                let pair = Ty::prod(e.clone(), e.clone());
                self.under(&[pair], |c| c.check(body, &e)).map_err(|mut er| {
                    er.msg = format!("fold combine body must have the element type {e}: {}", er.msg);
                    er
                })?;
                e
            }
            Length(a) => {
                self.array_elem(a)?;
                Ty::Int
            }

            LZero(ty) => {
                let ty = self.ann(ty);
                if !is_linear(&ty) {
                    return Err(err(t, format!("zero of non-linear type {ty}")));
                }
                ty
            }
            LPlus(a, b) => {
                let ty = self.synth(a)?;
                if !is_linear(&ty) {
                    return Err(err(t, format!("plus on non-linear type {ty}")));
                }
                self.check(b, &ty)?;
                ty
            }
            LPair(a, b) => Ty::lprod(self.synth(a)?, self.synth(b)?),
            LFst(a) | LSnd(a) => match self.synth(a)? {
                Ty::LProd(x, y) => *if matches!(t, LFst(_)) { x } else { y },
                other => return Err(err(t, format!("linear projection from {other}"))),
            },
            LCastL(a) | LCastR(a) => match self.synth(a)? {
                Ty::LSum(x, y) => *if matches!(t, LCastL(_)) { x } else { y },
                other => return Err(err(t, format!("linear cast from {other}"))),
            },
            DOpT(op, args, d) => {
                if args.len() != op.arity() {
                    return Err(err(t, format!("`{}` takes {} argument(s)", op.name(), op.arity())));
                }
                for a in args {
                    self.check(a, &real)?;
                }
                self.check(d, &Ty::LReal)?;
                Ty::tuple((0..op.arity()).map(|_| Ty::LReal))
            }

            EvmReturn(c, a) => Ty::evm(self.ann_ctx(c), self.synth(a)?),
            EvmBind(m, k) => {
                let (c, a) = self.evm_parts(m)?;
                match self.synth(k)? {
                    Ty::Arrow(x, y) if *x == a => match *y {
                        Ty::Evm(c2, b) if c2 == c => Ty::Evm(c, b),
                        other => {
                            return Err(mismatch(t, &Ty::evm(c, Ty::Unit), &other));
                        }
                    },
                    other => return Err(err(t, format!("continuation has type {other}, argument is {a}"))),
                }
            }
            EvmOne(c, l, ty, d) => {
                let (c, ty) = (&self.ann_ctx(c), &self.ann(ty));
                let slot = c.get(*l).ok_or_else(|| err(t, format!("slot {l} outside context")))?;
                if slot != ty {
                    return Err(mismatch(t, slot, ty));
                }
                self.check(d, ty)?;
                Ty::evm(c.clone(), Ty::Unit)
            }
            EvmScope(ty, m) => {
                let ty = &self.ann(ty);
                let (c, a) = self.evm_parts(m)?;
                match c.split_last() {
                    Some((outer, last)) if last == ty => Ty::evm(outer.clone(), Ty::prod(a, ty.clone())),
                    _ => return Err(err(t, format!("scope over {ty} needs an action whose last slot is {ty}"))),
                }
            }
            EvmRun(m, env) => {
                let (c, a) = self.evm_parts(m)?;
                let tuple = Ty::tuple(c.to_vec());
                self.check(env, &tuple)?;
                Ty::prod(a, tuple)
            }

            EnvZero(c) => Ty::Env(self.ann_ctx(c)),
            EnvOne(c, l, d) => {
                let c = &self.ann_ctx(c);
                let slot = c.get(*l).cloned().ok_or_else(|| err(t, format!("slot {l} outside context")))?;
                self.check(d, &slot)?;
                Ty::Env(c.clone())
            }
            EnvPlus(a, b) => {
                let ty = self.synth(a)?;
                if !matches!(ty, Ty::Env(_)) {
                    return Err(err(t, format!("expected an environment cotangent, found {ty}")));
                }
                self.check(b, &ty)?;
                ty
            }
            EnvSplit(ty, e) => match (self.ann(ty), self.synth(e)?) {
                (ty, Ty::Env(c)) => match c.split_last() {
                    Some((outer, last)) if *last == ty => Ty::prod(Ty::Env(outer.clone()), ty),
                    _ => return Err(err(t, format!("split of {ty} from mismatched environment"))),
                },
                (_, other) => return Err(err(t, format!("expected an environment cotangent, found {other}"))),
            },
            BagEmpty(ty) => Ty::bag(self.ann(ty)),
            BagOne(a) => match self.synth(a)? {
                Ty::Prod(i, d) if *i == Ty::Int => Ty::Bag(d),
                other => return Err(err(t, format!("bag element must be (Int, d), found {other}"))),
            },
            BagPlus(a, b) => {
                let ty = self.synth(a)?;
                if !matches!(ty, Ty::Bag(_)) {
                    return Err(err(t, format!("expected a bag, found {ty}")));
                }
                self.check(b, &ty)?;
                ty
            }
            Collect(b) => match self.synth(b)? {
                Ty::Bag(d) => Ty::array(Ty::prod(Ty::Int, *d)),
                other => return Err(err(t, format!("expected a bag, found {other}"))),
            },
            Scatter(init, pairs) => {
                let d = self.array_elem(init)?;
                self.check(pairs, &Ty::array(Ty::prod(Ty::Int, d.clone())))?;
                Ty::array(d)
            }
            Unzip(a) => match self.array_elem(a)? {
                Ty::Prod(x, y) => Ty::prod(Ty::Array(x), Ty::Array(y)),
                other => return Err(err(t, format!("unzip of array of {other}"))),
            },
            ZipWith { body, a, b, .. } => {
                let x = self.array_elem(a)?;
                let y = self.array_elem(b)?;
                Ty::array(self.synth_in(&[x, y], body)?)
            }
            MapArr { body, arr, .. } => {
                let x = self.array_elem(arr)?;
                Ty::array(self.synth_in(&[x], body)?)
            }
            SequenceEvm(a) => match self.array_elem(a)? {
                Ty::Evm(c, x) => Ty::Evm(c, Box::new(Ty::Array(x))),
                other => return Err(err(t, format!("sequence of array of {other}"))),
            },
            FromList(l) => match self.synth(l)? {
                Ty::List(d) => Ty::Bag(d),
                other => return Err(err(t, format!("expected a list, found {other}"))),
            },

            TreeLeaf(a, f) => Ty::tree(self.synth(a)?, self.ann(f)),
            TreeNode(l, x, f, r) => {
                let tt = self.synth(l)?;
                let Ty::Tree(a, fty) = &tt else {
                    return Err(err(t, format!("expected a tree, found {tt}")));
                };
                self.check(x, a)?;
                self.check(f, fty)?;
                self.check(r, &tt)?;
                tt
            }
            GetA(a) => match self.synth(a)? {
                Ty::Tree(x, _) => *x,
                other => return Err(err(t, format!("expected a tree, found {other}"))),
            },
            UnTree(g, d, tree) => {
                let tt = self.synth(tree)?;
                let Ty::Tree(_, fty) = tt else {
                    return Err(err(t, format!("expected a tree, found {tt}")));
                };
                let dty = self.synth(d)?;
                let gty = self.synth(g)?;
                let want_tail = |c: &CotCtx| {
                    Ty::arrow(dty.clone(), Ty::arrow((*fty).clone(), Ty::evm(c.clone(), Ty::prod(dty.clone(), dty.clone()))))
                };
                match &gty {
                    Ty::Arrow(_, rest) => match &**rest {
                        Ty::Arrow(_, ev) => match &**ev {
                            Ty::Evm(c, _) if gty == want_tail(c) => Ty::evm(c.clone(), Ty::list(dty)),
                            _ => return Err(err(t, format!("bad untree step function {gty}"))),
                        },
                        _ => return Err(err(t, format!("bad untree step function {gty}"))),
                    },
                    _ => return Err(err(t, format!("bad untree step function {gty}"))),
                }
            }

            ListNil(ty) => Ty::list(self.ann(ty)),
            ListCons(h, tl) => {
                let e = Ty::list(self.synth(h)?);
                self.check(tl, &e)?;
                e
            }
            ListAppend(a, b) => {
                let ty = self.synth(a)?;
                if !matches!(ty, Ty::List(_)) {
                    return Err(err(t, format!("expected a list, found {ty}")));
                }
                self.check(b, &ty)?;
                ty
            }
            FoldList { body, init, list, .. } => {
                let e = match self.synth(list)? {
                    Ty::List(e) => *e,
                    other => return Err(err(t, format!("expected a list, found {other}"))),
                };
                let acc = self.synth(init)?;
                self.under(&[e, acc.clone()], |c| c.check(body, &acc))?;
                acc
            }

            ClosedLam { ty, body, .. } => {
                let ctx = std::mem::replace(&mut self.ctx, vec![ty.clone()]);
                let rigids = std::mem::take(&mut self.rigids);
                let b = self.synth(body);
                self.ctx = ctx;
                self.rigids = rigids;
                Ty::closed_arrow(ty.clone(), b?)
            }
            Pack(tag, body_ty, a) => {
                let tag = self.ann(tag);
                self.check(a, &body_ty.subst_hole(&tag))?;
                Ty::sigma(body_ty.clone())
            }
            UnpackCase { scrut, body, .. } => {
                let b = match self.synth(scrut)? {
                    Ty::Sigma(b) => *b,
                    other => return Err(err(t, format!("unpack of non-existential {other}"))),
                };
                let k = self.next_rigid;
                self.next_rigid += 1;
                self.rigids.push(k);
                let r = self.synth_in(&[b.open(k)], body);
                self.rigids.pop();
                let r = r?;
                if r.mentions_rigid(k) {
                    return Err(err(t, format!("unpacked type variable escapes in {r}")));
                }
                r
            }
            LPackLike(w, d) => {
                let b = match self.synth(w)? {
                    Ty::Sigma(b) => *b,
                    other => return Err(err(t, format!("witness is not existential: {other}"))),
                };
                let db = b.linear_dual().ok_or_else(|| err(t, "existential body has no linear dual"))?;
                let dt = self.synth(d)?;
                let closed = match self.rigids.last() {
                    Some(k) => dt.close(*k),
                    None => dt.clone(),
                };
                if closed != db {
                    return Err(mismatch(t, &db, &dt));
                }
                Ty::lsigma(db)
            }
            LCastSigma(tag, v) => match self.synth(v)? {
                Ty::LSigma(db) => db.subst_hole(&self.ann(tag)),
                other => return Err(err(t, format!("cast of non-existential cotangent {other}"))),
            },

            Error(_, ty) => self.ann(ty),
        })
    }
}

/// `Inl(a, Some(S))` is checked as the unannotated injection against `S`.
fn t_without_annotation(t: &Term, a: &T) -> T {
    let a = a.clone();
    std::rc::Rc::new(match t {
        Term::Inl(..) => Term::Inl(a, None),
        Term::Inr(..) => Term::Inr(a, None),
        Term::LInl(..) => Term::LInl(a, None),
        _ => Term::LInr(a, None),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{parse, parse_term, rc, Term};
    use super::*;

    fn xy() -> Context {
        Context::new().with("x", Ty::Real).with("y", Ty::Real)
    }

    fn ty_of(ctx: &Context, src: &str) -> Result<Ty, TypeError> {
        typecheck(ctx, &parse_term(ctx, src).unwrap())
    }

    #[test]
    fn pair_of_vars() {
        assert_eq!(ty_of(&xy(), "(pair x y)").unwrap(), Ty::prod(Ty::Real, Ty::Real));
    }

    #[test]
    fn sign_is_boolean_sum() {
        assert_eq!(ty_of(&xy(), "(sign x)").unwrap(), Ty::sum(Ty::Unit, Ty::Unit));
    }

    #[test]
    fn one_has_evm_unit_type() {
        let c = CotCtx::from_tys([Ty::LReal]);
        let ctx = Context::new().with("d", Ty::LReal);
        let t = Term::EvmOne(c.clone(), 0, Ty::LReal, rc(Term::Var(0)));
        assert_eq!(typecheck(&ctx, &t).unwrap(), Ty::evm(c, Ty::Unit));
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(ty_of(&xy(), "(fst 3.0)").is_err());
        assert!(ty_of(&xy(), "(index x 0i)").unwrap_err().msg.contains("array"));
        let ctx = Context::new().with("xs", Ty::array(Ty::Real));
        let e = ty_of(&ctx, "(fold (p (fst p)) xs)");
        assert!(e.is_ok());
        let e = ty_of(&ctx, "(fold (p p) xs)").unwrap_err();
        assert!(e.msg.contains("fold combine"));
    }

    #[test]
    fn injections_check_against_let_annotation() {
        let t = "(let (s (Sum Real Unit)) (inl x) (case s (a a) (b y)))";
        assert_eq!(ty_of(&xy(), t).unwrap(), Ty::Real);
        assert!(ty_of(&xy(), "(inl x)").is_err());
        assert_eq!(ty_of(&xy(), "(inl x (Sum Real Int))").unwrap(), Ty::sum(Ty::Real, Ty::Int));
    }

    #[test]
    fn higher_order_and_arrays() {
        let t = "(app (lam (z Real) (op mul z y)) x)";
        assert_eq!(ty_of(&xy(), t).unwrap(), Ty::Real);
        let ctx = Context::new().with("xs", Ty::array(Ty::Real));
        let t = "(fold (p (op add (fst p) (snd p))) (build (length xs) (i (index xs i))))";
        assert_eq!(ty_of(&ctx, t).unwrap(), Ty::Real);
    }

    #[test]
    fn pack_unpack_round_trip() {
        // Σα. α × (α × Real ⊸ Real), packed at α = Real.
        let body = Ty::prod(Ty::Hole, Ty::closed_arrow(Ty::prod(Ty::Hole, Ty::Real), Ty::Real));
        let src = format!(
            "(unpack (pack Real {body} (pair y (closedlam (p (Prod Real Real)) (op mul (fst p) (snd p))))) \
               (z (let (c Hole) (fst z) (app (snd z) (pair c x)))))"
        );
        assert_eq!(ty_of(&xy(), &src).unwrap(), Ty::Real);
        let escape = format!("(unpack (pack Real {body} (pair y (closedlam (p (Prod Real Real)) (fst p)))) (z (fst z)))");
        assert!(ty_of(&xy(), &escape).unwrap_err().msg.contains("escapes"));
    }

    #[test]
    fn source_check_rejects_target_constructs() {
        let p = parse("(program (args (x Real)) (lplus x x))").unwrap();
        assert!(typecheck_program(&p).is_err());
    }
}
