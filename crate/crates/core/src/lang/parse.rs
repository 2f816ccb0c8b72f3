use super::sexpr::{read_all, Pos, Sx};
use super::term::{rc, Name, Op, Term, T};
use super::ty::{Context, CotCtx, Ty};
use super::{ParseError, Program};

/// Parses `(program (args (x T) ...) term)`.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let top = read_all(text)?;
    let [prog] = top.as_slice() else {
        let pos = top.get(1).map_or(Pos { line: 1, col: 1 }, Sx::pos);
        return Err(ParseError::syntax(pos, "expected exactly one (program ...) form"));
    };
    let items = expect_form(prog, "program", 3)?;
    let header = expect_form(&items[1], "args", usize::MAX)?;
    let mut ctx = Context::new();
    for b in &header[1..] {
        let (name, ty) = annotated_binder(b)?;
        ctx.push(name, ty);
    }
    let mut p = Parser { scope: ctx.names() };
    let body = p.term(&items[2])?;
    Ok(Program { ctx, body })
}

/// Parses a single term whose free variables are the names of `ctx`.
pub fn parse_term(ctx: &Context, text: &str) -> Result<T, ParseError> {
    let sx = single(text)?;
    Parser { scope: ctx.names() }.term(&sx)
}

pub fn parse_ty(text: &str) -> Result<Ty, ParseError> {
    ty(&single(text)?)
}

fn single(text: &str) -> Result<Sx, ParseError> {
    let mut top = read_all(text)?;
    if top.len() != 1 {
        let pos = top.get(1).map_or(Pos { line: 1, col: 1 }, Sx::pos);
        return Err(ParseError::syntax(pos, "expected exactly one form"));
    }
    Ok(top.remove(0))
}

const KEYWORDS: &[&str] = &["unit", "ctx"];

pub(super) fn is_reserved(name: &str) -> bool {
    KEYWORDS.contains(&name)
        || name.is_empty()
        || name.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.')
}

fn expect_form<'a>(sx: &'a Sx, head: &str, len: usize) -> Result<&'a [Sx], ParseError> {
    match sx {
        Sx::List(items, pos) => {
            if items.first().and_then(Sx::atom) != Some(head) {
                return Err(ParseError::syntax(*pos, format!("expected ({head} ...)")));
            }
            if len != usize::MAX && items.len() != len {
                return Err(ParseError::syntax(*pos, format!("malformed ({head} ...)")));
            }
            Ok(items)
        }
        _ => Err(ParseError::syntax(sx.pos(), format!("expected ({head} ...)"))),
    }
}

fn ident(sx: &Sx) -> Result<String, ParseError> {
    match sx.atom() {
        Some(s) if !is_reserved(s) => Ok(s.to_string()),
        _ => Err(ParseError::syntax(sx.pos(), "expected an identifier")),
    }
}

/// `(x T)`; a bare `(x)` is a missing annotation.
fn annotated_binder(sx: &Sx) -> Result<(String, Ty), ParseError> {
    match sx.list() {
        Some([n]) => Err(ParseError::MissingAnnotation { pos: sx.pos(), name: ident(n)? }),
        Some([n, t]) => Ok((ident(n)?, ty(t)?)),
        _ => Err(ParseError::syntax(sx.pos(), "expected (name Type)")),
    }
}

fn level(sx: &Sx) -> Result<usize, ParseError> {
    sx.atom()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ParseError::syntax(sx.pos(), "expected a level"))
}

fn cot_ctx(sx: &Sx) -> Result<CotCtx, ParseError> {
    let items = expect_form(sx, "ctx", usize::MAX)?;
    Ok(CotCtx::from_tys(items[1..].iter().map(ty).collect::<Result<Vec<_>, _>>()?))
}

pub(super) fn ty(sx: &Sx) -> Result<Ty, ParseError> {
    let bad = || ParseError::syntax(sx.pos(), "malformed type");
    match sx {
        Sx::Atom(s, _) => Ok(match s.as_str() {
            "Real" => Ty::Real,
            "Unit" => Ty::Unit,
            "Int" => Ty::Int,
            "LReal" => Ty::LReal,
            "LUnit" => Ty::LUnit,
            "Hole" => Ty::Hole,
            "LHole" => Ty::LHole,
            _ => return Err(ParseError::syntax(sx.pos(), format!("unknown type `{s}`"))),
        }),
        Sx::List(items, _) => {
            let head = items.first().and_then(Sx::atom).ok_or_else(bad)?;
            let args = &items[1..];
            let one = |f: fn(Box<Ty>) -> Ty| match args {
                [a] => Ok(f(Box::new(ty(a)?))),
                _ => Err(bad()),
            };
            let two = |f: fn(Box<Ty>, Box<Ty>) -> Ty| match args {
                [a, b] => Ok(f(Box::new(ty(a)?), Box::new(ty(b)?))),
                _ => Err(bad()),
            };
            match head {
                "Prod" => two(Ty::Prod),
                "Sum" => two(Ty::Sum),
                "Arrow" => two(Ty::Arrow),
                "ClosedArrow" => two(Ty::ClosedArrow),
                "Array" => one(Ty::Array),
                "LProd" => two(Ty::LProd),
                "LSum" => two(Ty::LSum),
                "Bag" => one(Ty::Bag),
                "List" => one(Ty::List),
                "Tree" => two(Ty::Tree),
                "Sigma" => one(Ty::Sigma),
                "LSigma" => one(Ty::LSigma),
                "Evm" => match args {
                    [c, a] => Ok(Ty::evm(cot_ctx(c)?, ty(a)?)),
                    _ => Err(bad()),
                },
                "Env" => match args {
                    [c] => Ok(Ty::Env(cot_ctx(c)?)),
                    _ => Err(bad()),
                },
                _ => Err(ParseError::syntax(sx.pos(), format!("unknown type `{head}`"))),
            }
        }
        Sx::Str(..) => Err(bad()),
    }
}

struct Parser {
    scope: Vec<String>,
}

impl Parser {
    fn bind<R>(&mut self, names: &[String], f: impl FnOnce(&mut Self) -> R) -> R {
        let n = self.scope.len();
        self.scope.extend(names.iter().cloned());
        let r = f(self);
        self.scope.truncate(n);
        r
    }

    fn var(&self, name: &str, pos: Pos) -> Result<usize, ParseError> {
        self.scope
            .iter()
            .rposition(|n| n == name)
            .ok_or_else(|| ParseError::UnboundVariable { pos, name: name.to_string() })
    }

    /// `(x body)` or `(x y body)`: names followed by a body in their scope.
    fn scoped(&mut self, sx: &Sx, arity: usize) -> Result<(Vec<String>, T), ParseError> {
        match sx.list() {
            Some(items) if items.len() == arity + 1 => {
                let names = items[..arity].iter().map(ident).collect::<Result<Vec<_>, _>>()?;
                let body = self.bind(&names, |p| p.term(&items[arity]))?;
                Ok((names, body))
            }
            _ => Err(ParseError::syntax(sx.pos(), "expected (binder... body)")),
        }
    }

    fn atom_term(&self, s: &str, pos: Pos) -> Result<T, ParseError> {
        if s == "unit" {
            return Ok(rc(Term::UnitLit));
        }
        if let Some(digits) = s.strip_suffix('i') {
            if let Ok(i) = digits.parse::<i64>() {
                return Ok(rc(Term::IntLit(i)));
            }
        }
        if is_reserved(s) {
            return match s.parse::<f64>() {
                Ok(x) => Ok(rc(Term::RealLit(x))),
                Err(_) => Err(ParseError::syntax(pos, format!("bad literal `{s}`"))),
            };
        }
        Ok(rc(Term::Var(self.var(s, pos)?)))
    }

    fn term(&mut self, sx: &Sx) -> Result<T, ParseError> {
        let (items, pos) = match sx {
            Sx::Atom(s, pos) => return self.atom_term(s, *pos),
            Sx::Str(_, pos) => return Err(ParseError::syntax(*pos, "unexpected string")),
            Sx::List(items, pos) => (items, *pos),
        };
        let head = items
            .first()
            .and_then(Sx::atom)
            .ok_or_else(|| ParseError::syntax(pos, "expected a form"))?;
        let args = &items[1..];
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(ParseError::syntax(pos, format!("({head} ...) takes {n} argument(s)")))
            }
        };
        macro_rules! unary {
            ($c:expr) => {{
                arity(1)?;
                $c(self.term(&args[0])?)
            }};
        }
        macro_rules! binary {
            ($c:expr) => {{
                arity(2)?;
                let a = self.term(&args[0])?;
                $c(a, self.term(&args[1])?)
            }};
        }
        let t = match head {
            "let" => {
                arity(3)?;
                let (name, ty) = annotated_binder(&args[0])?;
                let bound = self.term(&args[1])?;
                let body = self.bind(&[name.clone()], |p| p.term(&args[2]))?;
                Term::Let { name: Name::new(&name), ty, bound, body }
            }
            "pair" => binary!(Term::Pair),
            "fst" => unary!(Term::Fst),
            "snd" => unary!(Term::Snd),
            "inl" | "inr" | "linl" | "linr" => {
                let ann = match args.len() {
                    1 => None,
                    2 => Some(ty(&args[1])?),
                    _ => return Err(ParseError::syntax(pos, format!("malformed ({head} ...)"))),
                };
                let t = self.term(&args[0])?;
                match head {
                    "inl" => Term::Inl(t, ann),
                    "inr" => Term::Inr(t, ann),
                    "linl" => Term::LInl(t, ann),
                    _ => Term::LInr(t, ann),
                }
            }
            "case" => {
                arity(3)?;
                let scrut = self.term(&args[0])?;
                let (l, left) = self.scoped(&args[1], 1)?;
                let (r, right) = self.scoped(&args[2], 1)?;
                Term::Case {
                    scrut,
                    lname: Name::new(&l[0]),
                    left,
                    rname: Name::new(&r[0]),
                    right,
                }
            }
            "sign" => unary!(Term::Sign),
            "op" | "dopt" => {
                let name = args.first().and_then(Sx::atom).unwrap_or("");
                let op = Op::from_name(name).ok_or_else(|| {
                    ParseError::syntax(pos, format!("unknown operation `{name}`"))
                })?;
                let extra = usize::from(head == "dopt");
                if args.len() != 1 + op.arity() + extra {
                    return Err(ParseError::syntax(
                        pos,
                        format!("`{name}` takes {} argument(s)", op.arity()),
                    ));
                }
                let mut ts = args[1..].iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>()?;
                if head == "op" {
                    Term::PrimOp(op, ts)
                } else {
                    let d = ts.pop().expect("dopt has a cotangent argument");
                    Term::DOpT(op, ts, d)
                }
            }
            "lam" | "closedlam" => {
                arity(2)?;
                let (name, ty) = annotated_binder(&args[0])?;
                if head == "lam" {
                    let body = self.bind(&[name.clone()], |p| p.term(&args[1]))?;
                    Term::Lam { name: Name::new(&name), ty, body }
                } else {
                    let outer = std::mem::replace(&mut self.scope, vec![name.clone()]);
                    let body = self.term(&args[1]);
                    self.scope = outer;
                    Term::ClosedLam { name: Name::new(&name), ty, body: body? }
                }
            }
            "app" => binary!(Term::App),
            "build" => {
                arity(2)?;
                let len = self.term(&args[0])?;
                let (n, body) = self.scoped(&args[1], 1)?;
                Term::Build { len, name: Name::new(&n[0]), body }
            }
            "index" => binary!(Term::Index),
            "fold" => {
                arity(2)?;
                let (n, body) = self.scoped(&args[0], 1)?;
                Term::Fold { name: Name::new(&n[0]), body, arr: self.term(&args[1])? }
            }
            "length" => unary!(Term::Length),
            "lzero" => {
                arity(1)?;
                Term::LZero(ty(&args[0])?)
            }
            "lplus" => binary!(Term::LPlus),
            "lpair" => binary!(Term::LPair),
            "lfst" => unary!(Term::LFst),
            "lsnd" => unary!(Term::LSnd),
            "lcastl" => unary!(Term::LCastL),
            "lcastr" => unary!(Term::LCastR),
            "return" => {
                arity(2)?;
                Term::EvmReturn(cot_ctx(&args[0])?, self.term(&args[1])?)
            }
            "bind" => binary!(Term::EvmBind),
            "one" => {
                arity(4)?;
                Term::EvmOne(cot_ctx(&args[0])?, level(&args[1])?, ty(&args[2])?, self.term(&args[3])?)
            }
            "scope" => {
                arity(2)?;
                Term::EvmScope(ty(&args[0])?, self.term(&args[1])?)
            }
            "run" => binary!(Term::EvmRun),
            "envzero" => {
                arity(1)?;
                Term::EnvZero(cot_ctx(&args[0])?)
            }
            "envone" => {
                arity(3)?;
                Term::EnvOne(cot_ctx(&args[0])?, level(&args[1])?, self.term(&args[2])?)
            }
            "envplus" => binary!(Term::EnvPlus),
            "envsplit" => {
                arity(2)?;
                Term::EnvSplit(ty(&args[0])?, self.term(&args[1])?)
            }
            "bagempty" => {
                arity(1)?;
                Term::BagEmpty(ty(&args[0])?)
            }
            "bagone" => unary!(Term::BagOne),
            "bagplus" => binary!(Term::BagPlus),
            "collect" => unary!(Term::Collect),
            "scatter" => binary!(Term::Scatter),
            "unzip" => unary!(Term::Unzip),
            "zipwith" => {
                arity(3)?;
                let (n, body) = self.scoped(&args[0], 2)?;
                let a = self.term(&args[1])?;
                Term::ZipWith {
                    aname: Name::new(&n[0]),
                    bname: Name::new(&n[1]),
                    body,
                    a,
                    b: self.term(&args[2])?,
                }
            }
            "maparr" => {
                arity(2)?;
                let (n, body) = self.scoped(&args[0], 1)?;
                Term::MapArr { name: Name::new(&n[0]), body, arr: self.term(&args[1])? }
            }
            "sequence" => unary!(Term::SequenceEvm),
            "fromlist" => unary!(Term::FromList),
            "leaf" => {
                arity(2)?;
                Term::TreeLeaf(self.term(&args[0])?, ty(&args[1])?)
            }
            "node" => {
                arity(4)?;
                let mut ts = args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>()?;
                let r = ts.pop().unwrap();
                let f = ts.pop().unwrap();
                let x = ts.pop().unwrap();
                Term::TreeNode(ts.pop().unwrap(), x, f, r)
            }
            "geta" => unary!(Term::GetA),
            "untree" => {
                arity(3)?;
                let g = self.term(&args[0])?;
                let d = self.term(&args[1])?;
                Term::UnTree(g, d, self.term(&args[2])?)
            }
            "nil" => {
                arity(1)?;
                Term::ListNil(ty(&args[0])?)
            }
            "cons" => binary!(Term::ListCons),
            "append" => binary!(Term::ListAppend),
            "foldlist" => {
                arity(3)?;
                let (n, body) = self.scoped(&args[0], 2)?;
                let init = self.term(&args[1])?;
                Term::FoldList {
                    zname: Name::new(&n[0]),
                    accname: Name::new(&n[1]),
                    body,
                    init,
                    list: self.term(&args[2])?,
                }
            }
            "pack" => {
                arity(3)?;
                Term::Pack(ty(&args[0])?, ty(&args[1])?, self.term(&args[2])?)
            }
            "unpack" => {
                arity(2)?;
                let scrut = self.term(&args[0])?;
                let (n, body) = self.scoped(&args[1], 1)?;
                Term::UnpackCase { scrut, name: Name::new(&n[0]), body }
            }
            "lpacklike" => binary!(Term::LPackLike),
            "lcastsigma" => {
                arity(2)?;
                Term::LCastSigma(ty(&args[0])?, self.term(&args[1])?)
            }
            "error" => {
                arity(2)?;
                let Sx::Str(msg, _) = &args[0] else {
                    return Err(ParseError::syntax(args[0].pos(), "expected a string"));
                };
                Term::Error(msg.clone(), ty(&args[1])?)
            }
            _ => return Err(ParseError::syntax(pos, format!("unknown form `{head}`"))),
        };
        Ok(rc(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> Context {
        Context::new().with("x", Ty::Real).with("y", Ty::Real)
    }

    #[test]
    fn op_resolves_levels() {
        let t = parse_term(&xy(), "(op mul x y)").unwrap();
        assert_eq!(*t, Term::PrimOp(Op::Mul, vec![rc(Term::Var(0)), rc(Term::Var(1))]));
    }

    #[test]
    fn let_binds_next_level() {
        let ctx = Context::new().with("x", Ty::Real);
        let t = parse_term(&ctx, "(let (z Real) (op add x x) z)").unwrap();
        let expected = Term::Let {
            name: "z".into(),
            ty: Ty::Real,
            bound: rc(Term::PrimOp(Op::Add, vec![rc(Term::Var(0)), rc(Term::Var(0))])),
            body: rc(Term::Var(1)),
        };
        assert_eq!(*t, expected);
    }

    #[test]
    fn ill_typed_term_still_parses() {
        assert_eq!(*parse_term(&Context::new(), "(fst 3.0)").unwrap(), Term::Fst(rc(Term::RealLit(3.0))));
    }

    #[test]
    fn program_header_defines_context() {
        let p = parse("(program (args (x Real) (xs (Array Real))) (index xs 0i))").unwrap();
        assert_eq!(p.ctx.tys(), vec![Ty::Real, Ty::array(Ty::Real)]);
        assert_eq!(*p.body, Term::Index(rc(Term::Var(1)), rc(Term::IntLit(0))));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_term(&xy(), "(op add x\n  z)").unwrap_err();
        assert_eq!(e, ParseError::UnboundVariable { pos: Pos { line: 2, col: 3 }, name: "z".into() });
        let e = parse_term(&xy(), "(lam (z) z)").unwrap_err();
        assert!(matches!(e, ParseError::MissingAnnotation { .. }));
        let e = parse_term(&xy(), "(op tan x)").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { .. }));
    }

    #[test]
    fn shadowing_picks_innermost() {
        let ctx = Context::new().with("x", Ty::Real);
        let t = parse_term(&ctx, "(let (x Real) x x)").unwrap();
        let Term::Let { bound, body, .. } = &*t else { panic!() };
        assert_eq!(**bound, Term::Var(0));
        assert_eq!(**body, Term::Var(1));
    }

    #[test]
    fn literals() {
        let c = Context::new();
        assert_eq!(*parse_term(&c, "-2.5").unwrap(), Term::RealLit(-2.5));
        assert_eq!(*parse_term(&c, "1e-3").unwrap(), Term::RealLit(1e-3));
        assert_eq!(*parse_term(&c, "7i").unwrap(), Term::IntLit(7));
        assert_eq!(*parse_term(&c, "unit").unwrap(), Term::UnitLit);
    }
}
