use std::fmt;
use std::rc::Rc;

use super::ty::{CotCtx, Ty};

pub type T = Rc<Term>;

/// Binder name kept for printing. Names never take part in equality:
/// variables are de Bruijn levels.
#[derive(Clone)]
pub struct Name(pub Rc<str>);

impl Name {
    pub fn new(s: &str) -> Name {
        Name(Rc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl PartialEq for Name {
    fn eq(&self, _: &Name) -> bool {
        true
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Name {
        Name::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Mul,
    Sub,
    Neg,
    Recip,
    Sin,
    Cos,
    Exp,
    Log,
}

impl Op {
    pub const ALL: [Op; 9] = [
        Op::Add,
        Op::Mul,
        Op::Sub,
        Op::Neg,
        Op::Recip,
        Op::Sin,
        Op::Cos,
        Op::Exp,
        Op::Log,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Sub => "sub",
            Op::Neg => "neg",
            Op::Recip => "recip",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Log => "log",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Mul | Op::Sub => 2,
            _ => 1,
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|o| o.name() == s)
    }
}

/// Terms of the source language and of its target extension.
///
/// Binding forms extend the context by one level per binder, in the order
/// their fields are listed (`ZipWith` binds `a` then `b`; `FoldList` binds
/// the element then the accumulator).
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(usize),
    Let { name: Name, ty: Ty, bound: T, body: T },
    UnitLit,
    Pair(T, T),
    Fst(T),
    Snd(T),
    /// Optional annotation is the full sum type.
    Inl(T, Option<Ty>),
    Inr(T, Option<Ty>),
    Case { scrut: T, lname: Name, left: T, rname: Name, right: T },
    RealLit(f64),
    IntLit(i64),
    Sign(T),
    PrimOp(Op, Vec<T>),
    Lam { name: Name, ty: Ty, body: T },
    App(T, T),
    Build { len: T, name: Name, body: T },
    Index(T, T),
    Fold { name: Name, body: T, arr: T },
    Length(T),

    LZero(Ty),
    LPlus(T, T),
    LPair(T, T),
    LFst(T),
    LSnd(T),
    LInl(T, Option<Ty>),
    LInr(T, Option<Ty>),
    LCastL(T),
    LCastR(T),
    /// Transposed derivative: primal arguments, then the output cotangent.
    DOpT(Op, Vec<T>, T),

    EvmReturn(CotCtx, T),
    EvmBind(T, T),
    EvmOne(CotCtx, usize, Ty, T),
    EvmScope(Ty, T),
    /// Runs an action on a left-nested tuple of slot values.
    EvmRun(T, T),

    EnvZero(CotCtx),
    EnvOne(CotCtx, usize, T),
    EnvPlus(T, T),
    /// Splits the last slot off an environment cotangent of that slot type.
    EnvSplit(Ty, T),

    BagEmpty(Ty),
    BagOne(T),
    BagPlus(T, T),
    Collect(T),
    Scatter(T, T),
    Unzip(T),
    ZipWith { aname: Name, bname: Name, body: T, a: T, b: T },
    MapArr { name: Name, body: T, arr: T },
    SequenceEvm(T),
    /// Indexed bag from a list, element `i` at index `i`.
    FromList(T),

    /// Leaf with the annotation of the node payload type.
    TreeLeaf(T, Ty),
    TreeNode(T, T, T, T),
    GetA(T),
    UnTree(T, T, T),

    ListNil(Ty),
    ListCons(T, T),
    ListAppend(T, T),
    FoldList { zname: Name, accname: Name, body: T, init: T, list: T },

    ClosedLam { name: Name, ty: Ty, body: T },
    /// Existential introduction: tag, body of the sigma type, payload.
    Pack(Ty, Ty, T),
    UnpackCase { scrut: T, name: Name, body: T },
    /// Packs a cotangent with the runtime tag of a packed primal.
    LPackLike(T, T),
    LCastSigma(Ty, T),

    Error(String, Ty),
}

pub fn rc(t: Term) -> T {
    Rc::new(t)
}

impl Term {
    /// Left-nested tuple; unit for no components.
    pub fn tuple(items: Vec<T>) -> T {
        let mut it = items.into_iter();
        match it.next() {
            None => rc(Term::UnitLit),
            Some(first) => it.fold(first, |acc, x| rc(Term::Pair(acc, x))),
        }
    }

    /// Component `i` of a left-nested `n`-tuple built by [`Term::tuple`].
    pub fn tuple_proj(t: T, i: usize, n: usize) -> T {
        if n <= 1 {
            t
        } else if i == n - 1 {
            rc(Term::Snd(t))
        } else {
            Term::tuple_proj(rc(Term::Fst(t)), i, n - 1)
        }
    }

    /// True when the term uses only source-language constructors.
    pub fn is_source(&self) -> bool {
        let mut ok = true;
        self.walk(&mut |t| {
            ok &= matches!(
                t,
                Term::Var(_)
                    | Term::Let { .. }
                    | Term::UnitLit
                    | Term::Pair(..)
                    | Term::Fst(_)
                    | Term::Snd(_)
                    | Term::Inl(..)
                    | Term::Inr(..)
                    | Term::Case { .. }
                    | Term::RealLit(_)
                    | Term::IntLit(_)
                    | Term::Sign(_)
                    | Term::PrimOp(..)
                    | Term::Lam { .. }
                    | Term::App(..)
                    | Term::Build { .. }
                    | Term::Index(..)
                    | Term::Fold { .. }
                    | Term::Length(_)
            ) && match t {
                Term::Let { ty, .. } | Term::Lam { ty, .. } => ty.is_source(),
                Term::Inl(_, Some(ty)) | Term::Inr(_, Some(ty)) => ty.is_source(),
                _ => true,
            };
        });
        ok
    }

    pub fn mentions_lambda(&self) -> bool {
        let mut found = false;
        self.walk(&mut |t| found |= matches!(t, Term::Lam { .. } | Term::App(..)));
        found
    }

    pub fn mentions_array(&self) -> bool {
        let mut found = false;
        self.walk(&mut |t| {
            found |= matches!(
                t,
                Term::Build { .. } | Term::Index(..) | Term::Fold { .. } | Term::Length(_)
            );
        });
        found
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    /// Pre-order traversal of every subterm, including this one.
    pub fn walk(&self, f: &mut dyn FnMut(&Term)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Immediate subterms in evaluation order.
    pub fn children(&self) -> Vec<&T> {
        use Term::*;
        match self {
            Var(_) | UnitLit | RealLit(_) | IntLit(_) | LZero(_) | EnvZero(_) | BagEmpty(_)
            | ListNil(_) | Error(..) => vec![],
            Let { bound, body, .. } => vec![bound, body],
            Pair(a, b) | App(a, b) | Index(a, b) | LPlus(a, b) | LPair(a, b) | EvmBind(a, b)
            | EvmRun(a, b) | EnvPlus(a, b) | BagPlus(a, b) | Scatter(a, b) | ListCons(a, b)
            | ListAppend(a, b) | LPackLike(a, b) => vec![a, b],
            Fst(a) | Snd(a) | Inl(a, _) | Inr(a, _) | Sign(a) | Length(a) | LFst(a) | LSnd(a)
            | LInl(a, _) | LInr(a, _) | LCastL(a) | LCastR(a) | EvmReturn(_, a)
            | EvmOne(_, _, _, a) | EvmScope(_, a) | EnvOne(_, _, a) | EnvSplit(_, a)
            | BagOne(a) | Collect(a) | Unzip(a) | SequenceEvm(a) | FromList(a)
            | TreeLeaf(a, _) | GetA(a) | Pack(_, _, a) | LCastSigma(_, a) => vec![a],
            Case { scrut, left, right, .. } => vec![scrut, left, right],
            PrimOp(_, args) => args.iter().collect(),
            DOpT(_, args, d) => args.iter().chain(std::iter::once(d)).collect(),
            Lam { body, .. } | ClosedLam { body, .. } => vec![body],
            Build { len, body, .. } => vec![len, body],
            Fold { body, arr, .. } => vec![arr, body],
            ZipWith { body, a, b, .. } => vec![a, b, body],
            MapArr { body, arr, .. } => vec![arr, body],
            TreeNode(l, x, f, r) => vec![l, x, f, r],
            UnTree(g, d, t) => vec![g, d, t],
            FoldList { body, init, list, .. } => vec![list, init, body],
            UnpackCase { scrut, body, .. } => vec![scrut, body],
        }
    }

    /// Short constructor name used in diagnostics.
    pub fn head(&self) -> &'static str {
        use Term::*;
        match self {
            Var(_) => "var",
            Let { .. } => "let",
            UnitLit => "unit",
            Pair(..) => "pair",
            Fst(_) => "fst",
            Snd(_) => "snd",
            Inl(..) => "inl",
            Inr(..) => "inr",
            Case { .. } => "case",
            RealLit(_) => "real literal",
            IntLit(_) => "int literal",
            Sign(_) => "sign",
            PrimOp(..) => "op",
            Lam { .. } => "lam",
            App(..) => "app",
            Build { .. } => "build",
            Index(..) => "index",
            Fold { .. } => "fold",
            Length(_) => "length",
            LZero(_) => "lzero",
            LPlus(..) => "lplus",
            LPair(..) => "lpair",
            LFst(_) => "lfst",
            LSnd(_) => "lsnd",
            LInl(..) => "linl",
            LInr(..) => "linr",
            LCastL(_) => "lcastl",
            LCastR(_) => "lcastr",
            DOpT(..) => "dopt",
            EvmReturn(..) => "return",
            EvmBind(..) => "bind",
            EvmOne(..) => "one",
            EvmScope(..) => "scope",
            EvmRun(..) => "run",
            EnvZero(_) => "envzero",
            EnvOne(..) => "envone",
            EnvPlus(..) => "envplus",
            EnvSplit(..) => "envsplit",
            BagEmpty(_) => "bagempty",
            BagOne(_) => "bagone",
            BagPlus(..) => "bagplus",
            Collect(_) => "collect",
            Scatter(..) => "scatter",
            Unzip(_) => "unzip",
            ZipWith { .. } => "zipwith",
            MapArr { .. } => "maparr",
            SequenceEvm(_) => "sequence",
            FromList(_) => "fromlist",
            TreeLeaf(..) => "leaf",
            TreeNode(..) => "node",
            GetA(_) => "geta",
            UnTree(..) => "untree",
            ListNil(_) => "nil",
            ListCons(..) => "cons",
            ListAppend(..) => "append",
            FoldList { .. } => "foldlist",
            ClosedLam { .. } => "closedlam",
            Pack(..) => "pack",
            UnpackCase { .. } => "unpack",
            LPackLike(..) => "lpacklike",
            LCastSigma(..) => "lcastsigma",
            Error(..) => "error",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_do_not_affect_equality() {
        let a = Term::Lam { name: "x".into(), ty: Ty::Real, body: rc(Term::Var(0)) };
        let b = Term::Lam { name: "y".into(), ty: Ty::Real, body: rc(Term::Var(0)) };
        assert_eq!(a, b);
    }

    #[test]
    fn tuple_is_left_nested() {
        let t = Term::tuple(vec![rc(Term::Var(0)), rc(Term::Var(1)), rc(Term::Var(2))]);
        assert_eq!(
            *t,
            Term::Pair(rc(Term::Pair(rc(Term::Var(0)), rc(Term::Var(1)))), rc(Term::Var(2)))
        );
        assert_eq!(*Term::tuple(vec![]), Term::UnitLit);
    }

    #[test]
    fn op_names_round_trip() {
        for op in Op::ALL {
            assert_eq!(Op::from_name(op.name()), Some(op));
        }
        assert_eq!(Op::from_name("tan"), None);
    }
}
