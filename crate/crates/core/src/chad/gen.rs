//! The code generator shared by every CHAD variant. Terms use de Bruijn
//! levels, so wrapping an already built term in a fresh binder never shifts
//! its variables.

use crate::lang::{rc, CotCtx, Name, Term, Ty, T};

use super::TransformError;

/// How a backpropagator delivers its environment cotangent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Style {
    /// Returns an `Env` value that callers add up.
    Env,
    /// Accumulates through the EVM.
    Evm,
}

/// Which function types the generator accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Fns {
    None,
    NaiveHo,
    Closed,
}

pub(crate) struct Gen {
    style: Style,
    fns: Fns,
    arrays: bool,
    mode: &'static str,
    src: Vec<Ty>,
    map: Vec<usize>,
    cctx: CotCtx,
    depth: usize,
    /// Addresses of the source nodes transformed, in visiting order.
    pub(crate) trace: Vec<usize>,
}

type R<X> = Result<X, TransformError>;

fn var(l: usize) -> T {
    rc(Term::Var(l))
}

fn app(f: T, a: T) -> T {
    rc(Term::App(f, a))
}

fn fst(a: T) -> T {
    rc(Term::Fst(a))
}

fn snd(a: T) -> T {
    rc(Term::Snd(a))
}

fn pair(a: T, b: T) -> T {
    rc(Term::Pair(a, b))
}

fn nm(s: &str) -> Name {
    Name::new(s)
}

impl Gen {
    /// A generator for terms over the source context `src`, whose variables
    /// sit at the same target levels; `extra` further target variables
    /// follow them.
    pub(crate) fn new(style: Style, fns: Fns, arrays: bool, mode: &'static str, src: &[Ty], extra: usize) -> R<Gen> {
        let mut g = Gen {
            style,
            fns,
            arrays,
            mode,
            src: Vec::new(),
            map: Vec::new(),
            cctx: CotCtx::empty(),
            depth: src.len() + extra,
            trace: Vec::new(),
        };
        for (l, ty) in src.iter().enumerate() {
            g.push_src(ty.clone(), l)?;
        }
        Ok(g)
    }

    pub(crate) fn d1(&self, ty: &Ty) -> R<Ty> {
        Ok(match ty {
            Ty::Real | Ty::Unit | Ty::Int | Ty::Hole => ty.clone(),
            Ty::Prod(a, b) => Ty::prod(self.d1(a)?, self.d1(b)?),
            Ty::Sum(a, b) => Ty::sum(self.d1(a)?, self.d1(b)?),
            Ty::Array(a) => Ty::array(self.d1(a)?),
            Ty::Arrow(a, b) if self.fns == Fns::NaiveHo => {
                Ty::arrow(self.d1(a)?, Ty::prod(self.d1(b)?, Ty::arrow(self.d2(b)?, self.d2(a)?)))
            }
            Ty::ClosedArrow(a, b) if self.fns == Fns::Closed => {
                Ty::closed_arrow(self.d1(a)?, Ty::prod(self.d1(b)?, Ty::arrow(self.d2(b)?, self.d2(a)?)))
            }
            Ty::Sigma(b) if self.fns == Fns::Closed => Ty::sigma(self.d1(b)?),
            _ => return Err(TransformError::UnsupportedType(ty.clone())),
        })
    }

    pub(crate) fn d2(&self, ty: &Ty) -> R<Ty> {
        Ok(match ty {
            Ty::Real => Ty::LReal,
            Ty::Unit | Ty::Int => Ty::LUnit,
            Ty::Hole => Ty::LHole,
            Ty::Prod(a, b) => Ty::lprod(self.d2(a)?, self.d2(b)?),
            Ty::Sum(a, b) => Ty::lsum(self.d2(a)?, self.d2(b)?),
            Ty::Array(a) => Ty::bag(self.d2(a)?),
            Ty::Arrow(a, b) if self.fns == Fns::NaiveHo => Ty::list(Ty::prod(self.d1(a)?, self.d2(b)?)),
            Ty::ClosedArrow(..) if self.fns == Fns::Closed => Ty::LUnit,
            Ty::Sigma(b) if self.fns == Fns::Closed => Ty::lsigma(self.d2(b)?),
            _ => return Err(TransformError::UnsupportedType(ty.clone())),
        })
    }

    fn ret_ty(&self) -> Ty {
        match self.style {
            Style::Env => Ty::Env(self.cctx.clone()),
            Style::Evm => Ty::evm(self.cctx.clone(), Ty::Unit),
        }
    }

    /// Type of a backpropagator for a term of source type `ty` in the
    /// current context.
    pub(crate) fn bp_ty(&self, ty: &Ty) -> R<Ty> {
        Ok(Ty::arrow(self.d2(ty)?, self.ret_ty()))
    }

    fn push_src(&mut self, ty: Ty, target: usize) -> R<()> {
        self.cctx = self.cctx.push(self.d2(&ty)?);
        self.src.push(ty);
        self.map.push(target);
        Ok(())
    }

    fn pop_src(&mut self) {
        self.src.pop();
        self.map.pop();
        self.cctx = self.cctx.split_last().map(|(c, _)| c.clone()).unwrap_or_else(CotCtx::empty);
    }

    fn unsupported(&self, t: &Term) -> TransformError {
        TransformError::UnsupportedConstruct { construct: t.head(), mode: self.mode }
    }

    /// Runs `f` under one fresh target binder.
    fn binder<X>(&mut self, f: impl FnOnce(&mut Self, usize) -> R<X>) -> R<X> {
        let l = self.depth;
        self.depth += 1;
        let r = f(self, l);
        self.depth -= 1;
        r
    }

    fn lam(&mut self, name: &str, ty: Ty, f: impl FnOnce(&mut Self, usize) -> R<T>) -> R<T> {
        let body = self.binder(f)?;
        Ok(rc(Term::Lam { name: nm(name), ty, body }))
    }

    fn let_(&mut self, name: &str, ty: Ty, bound: T, f: impl FnOnce(&mut Self, usize) -> R<T>) -> R<T> {
        let body = self.binder(f)?;
        Ok(rc(Term::Let { name: nm(name), ty, bound, body }))
    }

    /// `let (x, x') = dt in f x x'`, given the types of both halves.
    fn split(&mut self, name: &str, dt: T, d1: Ty, bp: Ty, f: impl FnOnce(&mut Self, usize, usize) -> R<T>) -> R<T> {
        let pty = Ty::prod(d1.clone(), bp.clone());
        let dname = format!("d{name}");
        self.let_("p", pty, dt, |g, p| {
            g.let_(name, d1, fst(var(p)), |g, x| g.let_(&dname, bp, snd(var(p)), |g, x1| f(g, x, x1)))
        })
    }

    /// Transforms `t` and binds its two halves for `f`; returns the source
    /// type of `t` alongside.
    fn with_d(&mut self, name: &str, t: &Term, f: impl FnOnce(&mut Self, usize, usize, &Ty) -> R<T>) -> R<(T, Ty)> {
        let (dt, ty) = self.d(t)?;
        let (d1, bp) = (self.d1(&ty)?, self.bp_ty(&ty)?);
        let out = self.split(name, dt, d1, bp, |g, x, x1| f(g, x, x1, &ty))?;
        Ok((out, ty))
    }

    fn nothing(&self) -> T {
        match self.style {
            Style::Env => rc(Term::EnvZero(self.cctx.clone())),
            Style::Evm => rc(Term::EvmReturn(self.cctx.clone(), rc(Term::UnitLit))),
        }
    }

    /// Both contributions, in order.
    fn both(&mut self, a: T, b: T) -> R<T> {
        match self.style {
            Style::Env => Ok(rc(Term::EnvPlus(a, b))),
            Style::Evm => {
                let k = self.lam("_", Ty::Unit, |_, _| Ok(b))?;
                Ok(rc(Term::EvmBind(a, k)))
            }
        }
    }

    fn all(&mut self, mut items: Vec<T>) -> R<T> {
        let Some(mut acc) = items.pop() else { return Ok(self.nothing()) };
        while let Some(x) = items.pop() {
            acc = self.both(x, acc)?;
        }
        Ok(acc)
    }

    /// Strips the innermost slot (cotangent type `dty`) from `inner`, hands
    /// its cotangent to `k` and combines the results.
    fn pop_then(&mut self, dty: Ty, inner: T, k: impl FnOnce(&mut Self, T) -> R<T>) -> R<T> {
        match self.style {
            Style::Env => {
                let outer = Ty::Env(self.cctx.clone());
                let sty = Ty::prod(outer, dty.clone());
                let split = rc(Term::EnvSplit(dty, inner));
                self.let_("s", sty, split, |g, s| {
                    let rest = k(g, snd(var(s)))?;
                    Ok(rc(Term::EnvPlus(fst(var(s)), rest)))
                })
            }
            Style::Evm => {
                let scoped = rc(Term::EvmScope(dty.clone(), inner));
                let kk = self.lam("r", Ty::prod(Ty::Unit, dty), |g, r| k(g, snd(var(r))))?;
                Ok(rc(Term::EvmBind(scoped, kk)))
            }
        }
    }

    fn one(&self, level: usize, dty: Ty, d: T) -> T {
        match self.style {
            Style::Env => rc(Term::EnvOne(self.cctx.clone(), level, d)),
            Style::Evm => rc(Term::EvmOne(self.cctx.clone(), level, dty, d)),
        }
    }

    /// `⟨primal, λd. nothing⟩` for discrete results.
    fn constant(&mut self, primal: T, ty: &Ty) -> R<T> {
        let dty = self.d2(ty)?;
        let bp = self.lam("d", dty, |g, _| Ok(g.nothing()))?;
        Ok(pair(primal, bp))
    }

    fn bind_all(&mut self, ts: &[T], xs: Vec<(usize, usize)>, f: &mut dyn FnMut(&mut Self, Vec<(usize, usize)>) -> R<T>) -> R<T> {
        match ts.split_first() {
            None => f(self, xs),
            Some((t, rest)) => Ok(self
                .with_d("x", t, |g, x, x1, _| {
                    let mut xs = xs;
                    xs.push((x, x1));
                    g.bind_all(rest, xs, f)
                })?
                .0),
        }
    }

    /// The transform of `t`: a target term of type
    /// `Prod(D1 τ, Arrow(D2 τ, R))` together with the source type `τ`.
    pub(crate) fn d(&mut self, t: &Term) -> R<(T, Ty)> {
        use Term::*;
        self.trace.push(t as *const Term as usize);
        match t {
            Var(l) => {
                let ty = self.src.get(*l).cloned().ok_or_else(|| self.unsupported(t))?;
                let dty = self.d2(&ty)?;
                let bp = self.lam("d", dty.clone(), |g, d| Ok(g.one(*l, dty, var(d))))?;
                Ok((pair(var(self.map[*l]), bp), ty))
            }
            UnitLit => Ok((self.constant(rc(UnitLit), &Ty::Unit)?, Ty::Unit)),
            RealLit(r) => Ok((self.constant(rc(RealLit(*r)), &Ty::Real)?, Ty::Real)),
            IntLit(i) => Ok((self.constant(rc(IntLit(*i)), &Ty::Int)?, Ty::Int)),
            Sign(a) => {
                let b = Ty::boolean();
                self.with_d("x", a, |g, x, _, _| g.constant(rc(Sign(var(x))), &b)).map(|(t, _)| (t, b.clone()))
            }
            Let { name, ty: sigma, bound, body } => {
                let mut out_ty = Ty::Unit;
                let (t, _) = self.with_d(name.as_str(), bound, |g, x, x1, _| {
                    g.push_src(sigma.clone(), x)?;
                    let r = g.d(body).and_then(|(db, tau)| Ok((db, g.d1(&tau)?, g.bp_ty(&tau)?, tau)));
                    g.pop_src();
                    let (db, d1, bp, tau) = r?;
                    let dtau = g.d2(&tau)?;
                    let dsigma = g.d2(sigma)?;
                    out_ty = tau;
                    g.split("y", db, d1, bp, |g, y, y1| {
                        let bp = g.lam("d", dtau, |g, d| {
                            g.pop_then(dsigma, app(var(y1), var(d)), |_, ds| Ok(app(var(x1), ds)))
                        })?;
                        Ok(pair(var(y), bp))
                    })
                })?;
                Ok((t, out_ty))
            }
            Pair(a, b) => {
                let mut out_ty = Ty::Unit;
                let (t, _) = self.with_d("x", a, |g, x, x1, ta| {
                    let ta = ta.clone();
                    let (t, tb) = g.with_d("y", b, |g, y, y1, tb| {
                        let dty = g.d2(&Ty::prod(ta.clone(), tb.clone()))?;
                        let bp = g.lam("d", dty, |g, d| {
                            let l = app(var(x1), rc(LFst(var(d))));
                            let r = app(var(y1), rc(LSnd(var(d))));
                            g.both(l, r)
                        })?;
                        Ok(pair(pair(var(x), var(y)), bp))
                    })?;
                    out_ty = Ty::prod(ta, tb);
                    Ok(t)
                })?;
                Ok((t, out_ty))
            }
            Fst(a) | Snd(a) => {
                let first = matches!(t, Fst(_));
                let mut out_ty = Ty::Unit;
                let (t, _) = self.with_d("x", a, |g, x, x1, ty| {
                    let Ty::Prod(l, r) = ty else { return Err(g.unsupported(t)) };
                    let (this, other) = if first { (l, r) } else { (r, l) };
                    out_ty = (**this).clone();
                    let (dthis, dother) = (g.d2(this)?, g.d2(other)?);
                    let primal = if first { fst(var(x)) } else { snd(var(x)) };
                    let bp = g.lam("d", dthis, |_, d| {
                        let z = rc(LZero(dother));
                        let lp = if first { LPair(var(d), z) } else { LPair(z, var(d)) };
                        Ok(app(var(x1), rc(lp)))
                    })?;
                    Ok(pair(primal, bp))
                })?;
                Ok((t, out_ty))
            }
            Inl(a, Some(sum)) | Inr(a, Some(sum)) => {
                let left = matches!(t, Inl(..));
                let (d1s, d2s) = (self.d1(sum)?, self.d2(sum)?);
                let (t, _) = self.with_d("x", a, |g, x, x1, _| {
                    let primal = if left { Inl(var(x), Some(d1s)) } else { Inr(var(x), Some(d1s)) };
                    let bp = g.lam("d", d2s, |_, d| {
                        let c = if left { LCastL(var(d)) } else { LCastR(var(d)) };
                        Ok(app(var(x1), rc(c)))
                    })?;
                    Ok(pair(rc(primal), bp))
                })?;
                Ok((t, sum.clone()))
            }
            Case { scrut, lname, left, rname, right } => {
                let mut out_ty = Ty::Unit;
                let (t, _) = self.with_d("z", scrut, |g, z, z1, sty| {
                    let Ty::Sum(a, b) = sty else { return Err(g.unsupported(t)) };
                    let lsum = g.d2(sty)?;
                    let mut branch = |g: &mut Gen, name: &Name, ty: &Ty, body: &Term, is_left: bool| {
                        g.binder(|g, xl| {
                            g.push_src(ty.clone(), xl)?;
                            let r = g.d(body).and_then(|(db, tau)| Ok((db, g.d1(&tau)?, g.bp_ty(&tau)?, tau)));
                            g.pop_src();
                            let (db, d1, bp, tau) = r?;
                            let (dtau, dty) = (g.d2(&tau)?, g.d2(ty)?);
                            out_ty = tau;
                            let lsum = lsum.clone();
                            g.split(name.as_str(), db, d1, bp, |g, y, y1| {
                                let bp = g.lam("d", dtau, |g, d| {
                                    g.pop_then(dty, app(var(y1), var(d)), |_, ds| {
                                        let inj = if is_left { LInl(ds, Some(lsum)) } else { LInr(ds, Some(lsum)) };
                                        Ok(app(var(z1), rc(inj)))
                                    })
                                })?;
                                Ok(pair(var(y), bp))
                            })
                        })
                    };
                    let l = branch(g, lname, a, left, true)?;
                    let r = branch(g, rname, b, right, false)?;
                    Ok(rc(Case { scrut: var(z), lname: lname.clone(), left: l, rname: rname.clone(), right: r }))
                })?;
                Ok((t, out_ty))
            }
            PrimOp(op, args) => {
                let op = *op;
                let t = self.bind_all(args, Vec::new(), &mut |g, xs| {
                    let primal = rc(PrimOp(op, xs.iter().map(|(x, _)| var(*x)).collect()));
                    let bp = g.lam("d", Ty::LReal, |g, d| {
                        let n = xs.len();
                        let dsty = Ty::tuple((0..n).map(|_| Ty::LReal));
                        let dop = rc(DOpT(op, xs.iter().map(|(x, _)| var(*x)).collect(), var(d)));
                        g.let_("ds", dsty, dop, |g, ds| {
                            let parts = (0..n).map(|i| app(var(xs[i].1), Term::tuple_proj(var(ds), i, n))).collect();
                            g.all(parts)
                        })
                    })?;
                    Ok(pair(primal, bp))
                })?;
                Ok((t, Ty::Real))
            }
            Build { len, name, body } if self.arrays && self.style == Style::Evm => self.build(len, name, body),
            Index(a, i) if self.arrays && self.style == Style::Evm => {
                let mut out_ty = Ty::Unit;
                let (t, _) = self.with_d("a", a, |g, x, x1, aty| {
                    let Ty::Array(e) = aty else { return Err(g.unsupported(t)) };
                    out_ty = (**e).clone();
                    let de = g.d2(e)?;
                    Ok(g.with_d("i", i, |g, j, _, _| {
                        let bp = g.lam("d", de, |_, d| Ok(app(var(x1), rc(BagOne(pair(var(j), var(d)))))))?;
                        Ok(pair(rc(Index(var(x), var(j))), bp))
                    })?
                    .0)
                })?;
                Ok((t, out_ty))
            }
            Length(a) if self.arrays && self.style == Style::Evm => {
                let (t, _) = self.with_d("a", a, |g, x, _, _| g.constant(rc(Length(var(x))), &Ty::Int))?;
                Ok((t, Ty::Int))
            }
            Fold { name, body, arr } if self.arrays && self.style == Style::Evm => self.fold(name, body, arr),
            Lam { name, ty, body } if self.fns == Fns::NaiveHo => self.naive_lam(name, ty, body),
            App(f, a) => match self.fns {
                Fns::NaiveHo => self.naive_app(f, a),
                Fns::Closed => self.closed_app(f, a),
                Fns::None => Err(self.unsupported(t)),
            },
            ClosedLam { name, ty, body } if self.fns == Fns::Closed => self.closed_lam(name, ty, body),
            Pack(tag, body_ty, a) if self.fns == Fns::Closed => {
                let (d1tag, d1body, d2body) = (self.d1(tag)?, self.d1(body_ty)?, self.d2(body_ty)?);
                let (t, _) = self.with_d("x", a, |g, x, x1, _| {
                    let bp = g.lam("v", Ty::lsigma(d2body), |_, v| {
                        Ok(app(var(x1), rc(LCastSigma(d1tag.clone(), var(v)))))
                    })?;
                    Ok(pair(rc(Pack(d1tag.clone(), d1body, var(x))), bp))
                })?;
                Ok((t, Ty::sigma(body_ty.clone())))
            }
            UnpackCase { scrut, name, body } if self.fns == Fns::Closed => self.unpack(scrut, name, body),
            _ => Err(self.unsupported(t)),
        }
    }

    fn build(&mut self, len: &T, name: &Name, body: &T) -> R<(T, Ty)> {
        use Term::*;
        let mut out_ty = Ty::Unit;
        let (t, _) = self.with_d("n", len, |g, n, _, _| {
            let mut inner = None;
            let built = g.binder(|g, i| {
                g.push_src(Ty::Int, i)?;
                let r = g.d(body).and_then(|(db, tau)| Ok((db, g.d1(&tau)?, g.bp_ty(&tau)?, tau)));
                g.pop_src();
                let (db, d1, bp, tau) = r?;
                inner = Some((d1, bp, tau));
                Ok(db)
            })?;
            let (d1, bp, tau) = inner.expect("set by the body transform");
            let de = g.d2(&tau)?;
            out_ty = Ty::array(tau);
            let c = g.cctx.clone();
            let built = rc(Build { len: var(n), name: name.clone(), body: built });
            let aty = Ty::array(Ty::prod(d1.clone(), bp.clone()));
            g.let_("a", aty, built, |g, a| {
                let uty = Ty::prod(Ty::array(d1.clone()), Ty::array(bp.clone()));
                g.let_("u", uty, rc(Unzip(var(a))), |g, u| {
                    let dty = Ty::bag(de.clone());
                    let back = g.lam("d", dty, |g, d| {
                        let pty = Ty::array(Ty::prod(Ty::Int, de.clone()));
                        g.let_("pairs", pty, rc(Collect(var(d))), |g, pairs| {
                            let zero = g.binder(|_, _| Ok(rc(LZero(de.clone()))))?;
                            let zeros = rc(Build { len: var(n), name: nm("i"), body: zero });
                            let zs = rc(Scatter(zeros, var(pairs)));
                            g.let_("zs", Ty::array(de.clone()), zs, |g, zs| {
                                let body = g.binder(|g, f| {
                                    g.binder(|g, dd| {
                                        let scoped = rc(EvmScope(Ty::LUnit, app(var(f), var(dd))));
                                        let k = g.lam("_", Ty::prod(Ty::Unit, Ty::LUnit), |_, _| {
                                            Ok(rc(EvmReturn(c.clone(), rc(UnitLit))))
                                        })?;
                                        Ok(rc(EvmBind(scoped, k)))
                                    })
                                })?;
                                let acts = rc(ZipWith {
                                    aname: nm("f"),
                                    bname: nm("dd"),
                                    body,
                                    a: snd(var(u)),
                                    b: var(zs),
                                });
                                let k = g.lam("_", Ty::array(Ty::Unit), |g, _| Ok(g.nothing()))?;
                                Ok(rc(EvmBind(rc(SequenceEvm(acts)), k)))
                            })
                        })
                    })?;
                    Ok(pair(fst(var(u)), back))
                })
            })
        })?;
        Ok((t, out_ty))
    }

    fn fold(&mut self, name: &Name, body: &T, arr: &T) -> R<(T, Ty)> {
        use Term::*;
        let mut out_ty = Ty::Unit;
        let (t, _) = self.with_d("xs", arr, |g, x, x1, aty| {
            let Ty::Array(tau) = aty else { return Err(TransformError::UnsupportedType(aty.clone())) };
            let tau = (**tau).clone();
            out_ty = tau.clone();
            let pty = Ty::prod(tau.clone(), tau.clone());
            let (d1, de, dp) = (g.d1(&tau)?, g.d2(&tau)?, g.d2(&pty)?);
            let c = g.cctx.clone();
            let fty = Ty::arrow(de.clone(), Ty::evm(c.push(dp.clone()), Ty::Unit));
            let tree_ty = Ty::tree(d1.clone(), fty.clone());
            let leaf = g.binder(|_, e| Ok(rc(TreeLeaf(var(e), fty.clone()))))?;
            let leaves = rc(MapArr { name: nm("e"), body: leaf, arr: var(x) });
            let combine = g.binder(|g, pp| {
                let both = pair(rc(GetA(fst(var(pp)))), rc(GetA(snd(var(pp)))));
                g.let_(name.as_str(), Ty::prod(d1.clone(), d1.clone()), both, |g, p| {
                    g.push_src(pty.clone(), p)?;
                    let r = g.d(body).and_then(|(db, tau)| Ok((db, g.bp_ty(&tau)?)));
                    g.pop_src();
                    let (db, bp) = r?;
                    g.split("y", db, d1.clone(), bp, |_, y, f| {
                        Ok(rc(TreeNode(fst(var(pp)), var(y), var(f), snd(var(pp)))))
                    })
                })
            })?;
            let tree = rc(Fold { name: nm("pp"), body: combine, arr: leaves });
            g.let_("tree", tree_ty, tree, |g, tr| {
                let back = g.lam("d", de.clone(), |g, d| {
                    let step = g.lam("dd", de.clone(), |g, dd| {
                        g.lam("f", fty.clone(), |g, f| {
                            let scoped = rc(EvmScope(dp.clone(), app(var(f), var(dd))));
                            let k = g.lam("r", Ty::prod(Ty::Unit, dp.clone()), |_, r| {
                                let halves = pair(rc(LFst(snd(var(r)))), rc(LSnd(snd(var(r)))));
                                Ok(rc(EvmReturn(c.clone(), halves)))
                            })?;
                            Ok(rc(EvmBind(scoped, k)))
                        })
                    })?;
                    let replay = rc(UnTree(step, var(d), var(tr)));
                    let k = g.lam("lf", Ty::list(de.clone()), |_, lf| Ok(app(var(x1), rc(FromList(var(lf))))))?;
                    Ok(rc(EvmBind(replay, k)))
                })?;
                Ok(pair(rc(GetA(var(tr))), back))
            })
        })?;
        Ok((t, out_ty))
    }

    /// Transforms `body` under one extra source variable bound at target
    /// level `at`; returns its transform, `D1 τ`, backpropagator type and `τ`.
    fn under_src(&mut self, ty: &Ty, at: usize, body: &Term) -> R<(T, Ty, Ty, Ty)> {
        self.push_src(ty.clone(), at)?;
        let r = self.d(body).and_then(|(db, tau)| Ok((db, self.d1(&tau)?, self.bp_ty(&tau)?, tau)));
        self.pop_src();
        r
    }

    fn naive_lam(&mut self, name: &Name, sigma: &Ty, body: &T) -> R<(T, Ty)> {
        use Term::*;
        let (d1s, d2s) = (self.d1(sigma)?, self.d2(sigma)?);
        let mut inner = None;
        let h = self.lam(name.as_str(), d1s.clone(), |g, x| {
            let (db, d1, bp, tau) = g.under_src(sigma, x, body)?;
            inner = Some((d1, bp, tau));
            Ok(db)
        })?;
        let (d1t, bpt, tau) = inner.expect("set by the body transform");
        let d2t = self.d2(&tau)?;
        let hty = Ty::arrow(d1s.clone(), Ty::prod(d1t.clone(), bpt.clone()));
        let c = self.cctx.clone();
        let t = self.let_("h", hty, h, |g, h| {
            let primal = g.lam(name.as_str(), d1s.clone(), |g, x| {
                g.let_("r", Ty::prod(d1t.clone(), bpt.clone()), app(var(h), var(x)), |g, r| {
                    let bp = g.lam("d", d2t.clone(), |_, d| {
                        Ok(snd(rc(EnvSplit(d2s.clone(), app(snd(var(r)), var(d))))))
                    })?;
                    Ok(pair(fst(var(r)), bp))
                })
            })?;
            let log_ty = Ty::list(Ty::prod(d1s.clone(), d2t.clone()));
            let back = g.lam("log", log_ty, |g, log| {
                let body = g.binder(|g, z| {
                    g.binder(|g, acc| {
                        g.let_("r", Ty::prod(d1t.clone(), bpt.clone()), app(var(h), fst(var(z))), |_, r| {
                            let env = fst(rc(EnvSplit(d2s.clone(), app(snd(var(r)), snd(var(z))))));
                            Ok(rc(EnvPlus(var(acc), env)))
                        })
                    })
                })?;
                Ok(rc(FoldList {
                    zname: nm("z"),
                    accname: nm("acc"),
                    body,
                    init: rc(EnvZero(c.clone())),
                    list: var(log),
                }))
            })?;
            Ok(pair(primal, back))
        })?;
        Ok((t, Ty::arrow(sigma.clone(), tau)))
    }

    fn naive_app(&mut self, f: &T, a: &T) -> R<(T, Ty)> {
        use Term::*;
        let mut out_ty = Ty::Unit;
        let (t, _) = self.with_d("f", f, |g, x, x1, fty| {
            let Ty::Arrow(sigma, tau) = fty else { return Err(TransformError::UnsupportedType(fty.clone())) };
            out_ty = (**tau).clone();
            let (d1s, d1t, d2t, d2s) = (g.d1(sigma)?, g.d1(tau)?, g.d2(tau)?, g.d2(sigma)?);
            Ok(g.with_d("a", a, |g, y, y1, _| {
                let bp_ty = Ty::arrow(d2t.clone(), d2s.clone());
                g.split("z", app(var(x), var(y)), d1t.clone(), bp_ty, |g, z, z1| {
                    let bp = g.lam("d", d2t.clone(), |_, d| {
                        let through_arg = app(var(y1), app(var(z1), var(d)));
                        let entry = pair(var(y), var(d));
                        let log = rc(ListCons(entry, rc(ListNil(Ty::prod(d1s.clone(), d2t.clone())))));
                        Ok(rc(EnvPlus(through_arg, app(var(x1), log))))
                    })?;
                    Ok(pair(var(z), bp))
                })
            })?
            .0)
        })?;
        Ok((t, out_ty))
    }

    fn closed_lam(&mut self, name: &Name, sigma: &Ty, body: &T) -> R<(T, Ty)> {
        use Term::*;
        let (d1s, d2s) = (self.d1(sigma)?, self.d2(sigma)?);
        let saved = (
            std::mem::take(&mut self.src),
            std::mem::take(&mut self.map),
            std::mem::replace(&mut self.cctx, CotCtx::empty()),
            std::mem::replace(&mut self.depth, 0),
        );
        let r = self.binder(|g, x| {
            let (db, d1, bp, tau) = g.under_src(sigma, x, body)?;
            let d2t = g.d2(&tau)?;
            // The body's backpropagator runs in the function's own one-slot
            // context; the argument cotangent is that slot.
            let r = g.split("y", db, d1, bp, |g, y, y1| {
                let bp = g.lam("d", d2t, |_, d| {
                    Ok(snd(rc(EvmRun(app(var(y1), var(d)), rc(LZero(d2s.clone()))))))
                })?;
                Ok(pair(var(y), bp))
            })?;
            Ok((r, tau))
        });
        self.src = saved.0;
        self.map = saved.1;
        self.cctx = saved.2;
        self.depth = saved.3;
        let (lam_body, tau) = r?;
        let primal = rc(ClosedLam { name: name.clone(), ty: d1s, body: lam_body });
        let t = self.constant(primal, &Ty::closed_arrow(sigma.clone(), tau.clone()))?;
        Ok((t, Ty::closed_arrow(sigma.clone(), tau)))
    }

    fn closed_app(&mut self, f: &T, a: &T) -> R<(T, Ty)> {
        let mut out_ty = Ty::Unit;
        let (t, _) = self.with_d("f", f, |g, x, _, fty| {
            let Ty::ClosedArrow(sigma, tau) = fty else { return Err(TransformError::UnsupportedType(fty.clone())) };
            out_ty = (**tau).clone();
            let (d1t, d2t, d2s) = (g.d1(tau)?, g.d2(tau)?, g.d2(sigma)?);
            Ok(g.with_d("a", a, |g, y, y1, _| {
                let bp_ty = Ty::arrow(d2t.clone(), d2s.clone());
                g.split("z", app(var(x), var(y)), d1t.clone(), bp_ty, |g, z, z1| {
                    let bp = g.lam("d", d2t.clone(), |_, d| Ok(app(var(y1), app(var(z1), var(d)))))?;
                    Ok(pair(var(z), bp))
                })
            })?
            .0)
        })?;
        Ok((t, out_ty))
    }

    fn unpack(&mut self, scrut: &T, name: &Name, body: &T) -> R<(T, Ty)> {
        use Term::*;
        let mut out_ty = Ty::Unit;
        let (t, _) = self.with_d("w", scrut, |g, y, y1, sty| {
            let Ty::Sigma(b) = sty else { return Err(TransformError::UnsupportedType(sty.clone())) };
            let b = (**b).clone();
            let db = g.d2(&b)?;
            let inner = g.binder(|g, zl| {
                let (dt, d1, bp, tau) = g.under_src(&b, zl, body)?;
                let d2t = g.d2(&tau)?;
                out_ty = tau;
                g.split("v", dt, d1, bp, |g, w, w1| {
                    let bp = g.lam("d", d2t, |g, v| {
                        g.pop_then(db.clone(), app(var(w1), var(v)), |_, dz| {
                            Ok(app(var(y1), rc(LPackLike(var(y), dz))))
                        })
                    })?;
                    Ok(pair(var(w), bp))
                })
            })?;
            Ok(rc(UnpackCase { scrut: var(y), name: name.clone(), body: inner }))
        })?;
        Ok((t, out_ty))
    }
}
