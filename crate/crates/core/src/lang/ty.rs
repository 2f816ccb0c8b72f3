use std::fmt;
use std::rc::Rc;

/// Types of the source language and of the target language.
///
/// `Hole`/`LHole` are the bound type variable of the nearest enclosing
/// `Sigma`/`LSigma`; inside an `UnpackCase` body a free `Hole` in an
/// annotation stands for the unpacked type variable, which the checker
/// represents as `Rigid`.
#[derive(Clone, Debug, PartialEq)]
pub enum Ty {
    Real,
    Unit,
    Int,
    Prod(Box<Ty>, Box<Ty>),
    Sum(Box<Ty>, Box<Ty>),
    Arrow(Box<Ty>, Box<Ty>),
    ClosedArrow(Box<Ty>, Box<Ty>),
    Array(Box<Ty>),
    LReal,
    LUnit,
    LProd(Box<Ty>, Box<Ty>),
    LSum(Box<Ty>, Box<Ty>),
    /// Bag of `(index, d)` pairs with `d` of the given type.
    Bag(Box<Ty>),
    List(Box<Ty>),
    /// Recorded reduction tree: leaves hold an `A`, nodes an `A` and an `F`.
    Tree(Box<Ty>, Box<Ty>),
    Evm(CotCtx, Box<Ty>),
    /// Environment cotangent of the non-monadic transformations.
    Env(CotCtx),
    Sigma(Box<Ty>),
    LSigma(Box<Ty>),
    Hole,
    LHole,
    Rigid(u32),
    LRigid(u32),
}

impl Ty {
    pub fn prod(a: Ty, b: Ty) -> Ty {
        Ty::Prod(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Ty, b: Ty) -> Ty {
        Ty::Sum(Box::new(a), Box::new(b))
    }

    pub fn arrow(a: Ty, b: Ty) -> Ty {
        Ty::Arrow(Box::new(a), Box::new(b))
    }

    pub fn closed_arrow(a: Ty, b: Ty) -> Ty {
        Ty::ClosedArrow(Box::new(a), Box::new(b))
    }

    pub fn array(a: Ty) -> Ty {
        Ty::Array(Box::new(a))
    }

    pub fn lprod(a: Ty, b: Ty) -> Ty {
        Ty::LProd(Box::new(a), Box::new(b))
    }

    pub fn lsum(a: Ty, b: Ty) -> Ty {
        Ty::LSum(Box::new(a), Box::new(b))
    }

    pub fn bag(a: Ty) -> Ty {
        Ty::Bag(Box::new(a))
    }

    pub fn list(a: Ty) -> Ty {
        Ty::List(Box::new(a))
    }

    pub fn tree(a: Ty, f: Ty) -> Ty {
        Ty::Tree(Box::new(a), Box::new(f))
    }

    pub fn evm(ctx: CotCtx, a: Ty) -> Ty {
        Ty::Evm(ctx, Box::new(a))
    }

    pub fn sigma(body: Ty) -> Ty {
        Ty::Sigma(Box::new(body))
    }

    pub fn lsigma(body: Ty) -> Ty {
        Ty::LSigma(Box::new(body))
    }

    /// `Sum(Unit, Unit)`, the result type of `sign`.
    pub fn boolean() -> Ty {
        Ty::sum(Ty::Unit, Ty::Unit)
    }

    /// Left-nested tuple type; `()` for zero components.
    pub fn tuple(tys: impl IntoIterator<Item = Ty>) -> Ty {
        let mut it = tys.into_iter();
        match it.next() {
            None => Ty::Unit,
            Some(first) => it.fold(first, Ty::prod),
        }
    }

    /// True for the types the source grammar can write.
    pub fn is_source(&self) -> bool {
        match self {
            Ty::Real | Ty::Unit | Ty::Int => true,
            Ty::Prod(a, b) | Ty::Sum(a, b) | Ty::Arrow(a, b) => a.is_source() && b.is_source(),
            Ty::Array(a) => a.is_source(),
            _ => false,
        }
    }

    /// True when no function, closure or existential type occurs.
    pub fn is_first_order(&self) -> bool {
        match self {
            Ty::Real | Ty::Unit | Ty::Int => true,
            Ty::Prod(a, b) | Ty::Sum(a, b) => a.is_first_order() && b.is_first_order(),
            Ty::Array(a) => a.is_first_order(),
            _ => false,
        }
    }

    pub fn mentions_array(&self) -> bool {
        match self {
            Ty::Array(_) => true,
            Ty::Prod(a, b) | Ty::Sum(a, b) | Ty::Arrow(a, b) | Ty::ClosedArrow(a, b) => {
                a.mentions_array() || b.mentions_array()
            }
            _ => false,
        }
    }

    /// Linear dual of a primal type in which functions are closed:
    /// `Real ↦ LReal`, `Array τ ↦ Bag`, closed functions carry no cotangent.
    /// `None` for open function types, whose dual depends on the
    /// transformation.
    pub fn linear_dual(&self) -> Option<Ty> {
        Some(match self {
            Ty::Real => Ty::LReal,
            Ty::Unit | Ty::Int | Ty::ClosedArrow(..) => Ty::LUnit,
            Ty::Prod(a, b) => Ty::lprod(a.linear_dual()?, b.linear_dual()?),
            Ty::Sum(a, b) => Ty::lsum(a.linear_dual()?, b.linear_dual()?),
            Ty::Array(a) => Ty::bag(a.linear_dual()?),
            Ty::Sigma(b) => Ty::lsigma(b.linear_dual()?),
            Ty::Hole => Ty::LHole,
            Ty::Rigid(k) => Ty::LRigid(*k),
            _ => return None,
        })
    }

    /// Instantiates the bound variable of a `Sigma` body with `tag`.
    pub fn subst_hole(&self, tag: &Ty) -> Ty {
        let dual = tag.linear_dual();
        self.map_holes(&|lin| {
            if lin {
                dual.clone().unwrap_or(Ty::LUnit)
            } else {
                tag.clone()
            }
        })
    }

    /// Replaces free holes by the rigid variable `k`.
    pub fn open(&self, k: u32) -> Ty {
        self.map_holes(&|lin| if lin { Ty::LRigid(k) } else { Ty::Rigid(k) })
    }

    /// Replaces the rigid variable `k` by free holes.
    pub fn close(&self, k: u32) -> Ty {
        match self {
            Ty::Rigid(j) if *j == k => Ty::Hole,
            Ty::LRigid(j) if *j == k => Ty::LHole,
            _ => self.map_children(&|t| t.close(k)),
        }
    }

    pub fn mentions_rigid(&self, k: u32) -> bool {
        match self {
            Ty::Rigid(j) | Ty::LRigid(j) => *j == k,
            _ => {
                let mut found = false;
                self.for_children(&mut |t| found |= t.mentions_rigid(k));
                found
            }
        }
    }

    fn map_holes(&self, f: &dyn Fn(bool) -> Ty) -> Ty {
        match self {
            Ty::Hole => f(false),
            Ty::LHole => f(true),
            Ty::Sigma(_) | Ty::LSigma(_) => self.clone(),
            _ => self.map_children(&|t| t.map_holes(f)),
        }
    }

    fn map_children(&self, f: &dyn Fn(&Ty) -> Ty) -> Ty {
        let b = |t: &Ty| Box::new(f(t));
        match self {
            Ty::Prod(x, y) => Ty::Prod(b(x), b(y)),
            Ty::Sum(x, y) => Ty::Sum(b(x), b(y)),
            Ty::Arrow(x, y) => Ty::Arrow(b(x), b(y)),
            Ty::ClosedArrow(x, y) => Ty::ClosedArrow(b(x), b(y)),
            Ty::Array(x) => Ty::Array(b(x)),
            Ty::LProd(x, y) => Ty::LProd(b(x), b(y)),
            Ty::LSum(x, y) => Ty::LSum(b(x), b(y)),
            Ty::Bag(x) => Ty::Bag(b(x)),
            Ty::List(x) => Ty::List(b(x)),
            Ty::Tree(x, y) => Ty::Tree(b(x), b(y)),
            Ty::Evm(c, x) => Ty::Evm(c.map(f), b(x)),
            Ty::Env(c) => Ty::Env(c.map(f)),
            Ty::Sigma(x) => Ty::Sigma(b(x)),
            Ty::LSigma(x) => Ty::LSigma(b(x)),
            _ => self.clone(),
        }
    }

    fn for_children(&self, f: &mut dyn FnMut(&Ty)) {
        match self {
            Ty::Prod(x, y)
            | Ty::Sum(x, y)
            | Ty::Arrow(x, y)
            | Ty::ClosedArrow(x, y)
            | Ty::LProd(x, y)
            | Ty::LSum(x, y)
            | Ty::Tree(x, y) => {
                f(x);
                f(y);
            }
            Ty::Array(x) | Ty::Bag(x) | Ty::List(x) | Ty::Sigma(x) | Ty::LSigma(x) => f(x),
            Ty::Evm(c, x) => {
                for t in c.to_vec() {
                    f(&t);
                }
                f(x);
            }
            Ty::Env(c) => {
                for t in c.to_vec() {
                    f(&t);
                }
            }
            _ => {}
        }
    }
}

/// Persistent snoc-list of cotangent types, shared between the many types
/// and annotations that mention the same environment.
#[derive(Clone, Default)]
pub struct CotCtx(Option<Rc<CtxNode>>);

struct CtxNode {
    ty: Ty,
    prev: CotCtx,
    len: usize,
}

impl CotCtx {
    pub fn empty() -> CotCtx {
        CotCtx(None)
    }

    pub fn from_tys(tys: impl IntoIterator<Item = Ty>) -> CotCtx {
        tys.into_iter().fold(CotCtx::empty(), |c, t| c.push(t))
    }

    pub fn push(&self, ty: Ty) -> CotCtx {
        CotCtx(Some(Rc::new(CtxNode {
            ty,
            prev: self.clone(),
            len: self.len() + 1,
        })))
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.len)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    /// The context without its last entry, and that entry.
    pub fn split_last(&self) -> Option<(&CotCtx, &Ty)> {
        self.0.as_ref().map(|n| (&n.prev, &n.ty))
    }

    pub fn get(&self, level: usize) -> Option<&Ty> {
        let mut cur = self;
        while let Some(n) = &cur.0 {
            if n.len == level + 1 {
                return Some(&n.ty);
            }
            if n.len <= level {
                return None;
            }
            cur = &n.prev;
        }
        None
    }

    pub fn to_vec(&self) -> Vec<Ty> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self;
        while let Some(n) = &cur.0 {
            out.push(n.ty.clone());
            cur = &n.prev;
        }
        out.reverse();
        out
    }

    pub(crate) fn map(&self, f: &dyn Fn(&Ty) -> Ty) -> CotCtx {
        CotCtx::from_tys(self.to_vec().iter().map(f))
    }
}

impl PartialEq for CotCtx {
    fn eq(&self, other: &CotCtx) -> bool {
        let (mut a, mut b) = (self, other);
        loop {
            match (&a.0, &b.0) {
                (None, None) => return true,
                (Some(x), Some(y)) => {
                    if Rc::ptr_eq(x, y) {
                        return true;
                    }
                    if x.len != y.len || x.ty != y.ty {
                        return false;
                    }
                    a = &x.prev;
                    b = &y.prev;
                }
                _ => return false,
            }
        }
    }
}

impl Drop for CtxNode {
    fn drop(&mut self) {
        // Unlink iteratively so long contexts do not recurse on drop.
        let mut next = self.prev.0.take();
        while let Some(rc) = next {
            match Rc::try_unwrap(rc) {
                Ok(mut node) => next = node.prev.0.take(),
                Err(_) => break,
            }
        }
    }
}

impl fmt::Debug for CotCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ctx = |f: &mut fmt::Formatter<'_>, c: &CotCtx| -> fmt::Result {
            write!(f, "(ctx")?;
            for t in c.to_vec() {
                write!(f, " {t}")?;
            }
            write!(f, ")")
        };
        match self {
            Ty::Real => write!(f, "Real"),
            Ty::Unit => write!(f, "Unit"),
            Ty::Int => write!(f, "Int"),
            Ty::Prod(a, b) => write!(f, "(Prod {a} {b})"),
            Ty::Sum(a, b) => write!(f, "(Sum {a} {b})"),
            Ty::Arrow(a, b) => write!(f, "(Arrow {a} {b})"),
            Ty::ClosedArrow(a, b) => write!(f, "(ClosedArrow {a} {b})"),
            Ty::Array(a) => write!(f, "(Array {a})"),
            Ty::LReal => write!(f, "LReal"),
            Ty::LUnit => write!(f, "LUnit"),
            Ty::LProd(a, b) => write!(f, "(LProd {a} {b})"),
            Ty::LSum(a, b) => write!(f, "(LSum {a} {b})"),
            Ty::Bag(a) => write!(f, "(Bag {a})"),
            Ty::List(a) => write!(f, "(List {a})"),
            Ty::Tree(a, b) => write!(f, "(Tree {a} {b})"),
            Ty::Evm(c, a) => {
                write!(f, "(Evm ")?;
                ctx(f, c)?;
                write!(f, " {a})")
            }
            Ty::Env(c) => {
                write!(f, "(Env ")?;
                ctx(f, c)?;
                write!(f, ")")
            }
            Ty::Sigma(a) => write!(f, "(Sigma {a})"),
            Ty::LSigma(a) => write!(f, "(LSigma {a})"),
            Ty::Hole => write!(f, "Hole"),
            Ty::LHole => write!(f, "LHole"),
            Ty::Rigid(k) => write!(f, "(Rigid {k})"),
            Ty::LRigid(k) => write!(f, "(LRigid {k})"),
        }
    }
}

/// A typing context: named bindings addressed by de Bruijn level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Context {
    pub vars: Vec<(String, Ty)>,
}

impl Context {
    pub fn new() -> Context {
        Context::default()
    }

    pub fn push(&mut self, name: impl Into<String>, ty: Ty) {
        self.vars.push((name.into(), ty));
    }

    pub fn with(mut self, name: impl Into<String>, ty: Ty) -> Context {
        self.push(name, ty);
        self
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn tys(&self) -> Vec<Ty> {
        self.vars.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.iter().map(|(n, _)| n.clone()).collect()
    }
}
