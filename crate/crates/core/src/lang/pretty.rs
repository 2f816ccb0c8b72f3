use super::parse::is_reserved;
use super::term::{Name, Term};
use super::ty::{Context, CotCtx, Ty};
use super::Program;

const WIDTH: usize = 100;

/// Prints a term whose free variables are named `x0`, `x1`, ... by level.
/// The context is taken to be the smallest one the term is well scoped in;
/// use [`pretty_in`] when the context is known.
pub fn pretty(t: &Term) -> String {
    let mut p = Printer { names: Vec::new() };
    for i in 0..min_context(t) {
        p.names.push(format!("x{i}"));
    }
    render(&p.term(t))
}

/// Prints a term under a named context.
pub fn pretty_in(ctx: &Context, t: &Term) -> String {
    let mut p = Printer { names: Vec::new() };
    for name in ctx.names() {
        let n = p.fresh(&name);
        p.names.push(n);
    }
    render(&p.term(t))
}

/// Prints a whole program including its header.
pub fn pretty_program(prog: &Program) -> String {
    let mut p = Printer { names: Vec::new() };
    let mut header = vec![Doc::atom("args")];
    for (name, ty) in &prog.ctx.vars {
        let n = p.fresh(name);
        header.push(Doc::list(vec![Doc::atom(&n), ty_doc(ty)]));
        p.names.push(n);
    }
    let body = p.term(&prog.body);
    render(&Doc::list(vec![Doc::atom("program"), Doc::list(header), body]))
}

fn min_context(t: &Term) -> usize {
    fn go(t: &Term, depth: usize, max: &mut usize) {
        if let Term::Var(l) = t {
            *max = (*max).max((l + 1).saturating_sub(depth));
        }
        if let Term::ClosedLam { .. } = t {
            return;
        }
        let binders = binder_counts(t);
        for (c, b) in t.children().into_iter().zip(binders) {
            go(c, depth + b, max);
        }
    }
    let mut max = 0;
    go(t, 0, &mut max);
    max
}

/// Number of binders each child of `t` sits under, in `children()` order.
fn binder_counts(t: &Term) -> Vec<usize> {
    match t {
        Term::Let { .. } => vec![0, 1],
        Term::Case { .. } => vec![0, 1, 1],
        Term::Lam { .. } | Term::ClosedLam { .. } => vec![1],
        Term::Build { .. } => vec![0, 1],
        Term::Fold { .. } | Term::MapArr { .. } | Term::UnpackCase { .. } => vec![0, 1],
        Term::ZipWith { .. } => vec![0, 0, 2],
        Term::FoldList { .. } => vec![0, 0, 2],
        _ => vec![0; t.children().len()],
    }
}

enum Doc {
    Atom(String),
    List(Vec<Doc>, usize),
}

impl Doc {
    fn atom(s: &str) -> Doc {
        Doc::Atom(s.to_string())
    }

    fn list(items: Vec<Doc>) -> Doc {
        let len = items.iter().map(Doc::flat_len).sum::<usize>() + items.len().max(1) + 1;
        Doc::List(items, len)
    }

    fn flat_len(&self) -> usize {
        match self {
            Doc::Atom(s) => s.len(),
            Doc::List(_, n) => *n,
        }
    }
}

fn render(doc: &Doc) -> String {
    let mut out = String::new();
    layout(doc, 0, &mut out);
    out
}

fn flat(doc: &Doc, out: &mut String) {
    match doc {
        Doc::Atom(s) => out.push_str(s),
        Doc::List(items, _) => {
            out.push('(');
            for (i, d) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                flat(d, out);
            }
            out.push(')');
        }
    }
}

fn layout(doc: &Doc, indent: usize, out: &mut String) {
    match doc {
        Doc::List(items, len) if indent + len > WIDTH && items.len() > 1 => {
            out.push('(');
            flat(&items[0], out);
            for d in &items[1..] {
                out.push('\n');
                out.push_str(&" ".repeat(indent + 2));
                layout(d, indent + 2, out);
            }
            out.push(')');
        }
        _ => flat(doc, out),
    }
}

fn ctx_doc(c: &CotCtx) -> Doc {
    let mut items = vec![Doc::atom("ctx")];
    items.extend(c.to_vec().iter().map(ty_doc));
    Doc::list(items)
}

fn ty_doc(t: &Ty) -> Doc {
    match t {
        Ty::Evm(c, a) => Doc::list(vec![Doc::atom("Evm"), ctx_doc(c), ty_doc(a)]),
        Ty::Env(c) => Doc::list(vec![Doc::atom("Env"), ctx_doc(c)]),
        _ => Doc::Atom(t.to_string()),
    }
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

struct Printer {
    names: Vec<String>,
}

impl Printer {
    fn fresh(&self, base: &str) -> String {
        let ok = |s: &str| !is_reserved(s) && s.chars().all(|c| !c.is_whitespace() && !"()\";".contains(c));
        let base = if ok(base) { base.to_string() } else { "v".to_string() };
        if !self.names.contains(&base) {
            return base;
        }
        (1..)
            .map(|k| format!("{base}_{k}"))
            .find(|n| !self.names.contains(n))
            .expect("an unused name exists")
    }

    fn scoped(&mut self, names: &[&Name], f: impl FnOnce(&mut Self, Vec<Doc>) -> Doc) -> Doc {
        let n = self.names.len();
        let mut docs = Vec::new();
        for name in names {
            let fresh = self.fresh(name.as_str());
            docs.push(Doc::atom(&fresh));
            self.names.push(fresh);
        }
        let d = f(self, docs);
        self.names.truncate(n);
        d
    }

    fn form(&mut self, head: &str, args: Vec<Doc>) -> Doc {
        let mut items = vec![Doc::atom(head)];
        items.extend(args);
        Doc::list(items)
    }

    fn terms(&mut self, ts: &[&super::T]) -> Vec<Doc> {
        ts.iter().map(|t| self.term(t)).collect()
    }

    fn term(&mut self, t: &Term) -> Doc {
        use Term::*;
        let head = t.head();
        match t {
            Var(l) => Doc::atom(self.names.get(*l).map_or("<free>", String::as_str)),
            UnitLit => Doc::atom("unit"),
            RealLit(x) => Doc::Atom(real(*x)),
            IntLit(i) => Doc::Atom(format!("{i}i")),
            Let { name, ty, bound, body } => {
                let b = self.term(bound);
                self.scoped(&[name], |p, n| {
                    let binder = Doc::list(vec![n.into_iter().next().unwrap(), ty_doc(ty)]);
                    let body = p.term(body);
                    p.form("let", vec![binder, b, body])
                })
            }
            Inl(a, ann) | Inr(a, ann) | LInl(a, ann) | LInr(a, ann) => {
                let mut args = vec![self.term(a)];
                args.extend(ann.as_ref().map(ty_doc));
                self.form(head, args)
            }
            Case { scrut, lname, left, rname, right } => {
                let s = self.term(scrut);
                let l = self.scoped(&[lname], |p, mut n| {
                    n.push(p.term(left));
                    Doc::list(n)
                });
                let r = self.scoped(&[rname], |p, mut n| {
                    n.push(p.term(right));
                    Doc::list(n)
                });
                self.form("case", vec![s, l, r])
            }
            PrimOp(op, args) => {
                let mut docs = vec![Doc::atom(op.name())];
                docs.extend(args.iter().map(|a| self.term(a)));
                self.form("op", docs)
            }
            DOpT(op, args, d) => {
                let mut docs = vec![Doc::atom(op.name())];
                docs.extend(args.iter().map(|a| self.term(a)));
                docs.push(self.term(d));
                self.form("dopt", docs)
            }
            Lam { name, ty, body } => self.scoped(&[name], |p, n| {
                let binder = Doc::list(vec![n.into_iter().next().unwrap(), ty_doc(ty)]);
                let body = p.term(body);
                p.form("lam", vec![binder, body])
            }),
            ClosedLam { name, ty, body } => {
                let outer = std::mem::take(&mut self.names);
                let d = self.scoped(&[name], |p, n| {
                    let binder = Doc::list(vec![n.into_iter().next().unwrap(), ty_doc(ty)]);
                    let body = p.term(body);
                    p.form("closedlam", vec![binder, body])
                });
                self.names = outer;
                d
            }
            Build { len, name, body } => {
                let l = self.term(len);
                let b = self.scoped(&[name], |p, mut n| {
                    n.push(p.term(body));
                    Doc::list(n)
                });
                self.form("build", vec![l, b])
            }
            Fold { name, body, arr } => {
                let b = self.scoped(&[name], |p, mut n| {
                    n.push(p.term(body));
                    Doc::list(n)
                });
                let a = self.term(arr);
                self.form("fold", vec![b, a])
            }
            LZero(ty) | BagEmpty(ty) | ListNil(ty) => self.form(head, vec![ty_doc(ty)]),
            EvmReturn(c, a) => {
                let a = self.term(a);
                self.form(head, vec![ctx_doc(c), a])
            }
            EvmOne(c, l, ty, d) => {
                let d = self.term(d);
                self.form(head, vec![ctx_doc(c), Doc::Atom(l.to_string()), ty_doc(ty), d])
            }
            EvmScope(ty, m) | EnvSplit(ty, m) | LCastSigma(ty, m) => {
                let m = self.term(m);
                self.form(head, vec![ty_doc(ty), m])
            }
            EnvZero(c) => self.form(head, vec![ctx_doc(c)]),
            EnvOne(c, l, d) => {
                let d = self.term(d);
                self.form(head, vec![ctx_doc(c), Doc::Atom(l.to_string()), d])
            }
            ZipWith { aname, bname, body, a, b } => {
                let f = self.scoped(&[aname, bname], |p, mut n| {
                    n.push(p.term(body));
                    Doc::list(n)
                });
                let a = self.term(a);
                let b = self.term(b);
                self.form(head, vec![f, a, b])
            }
            MapArr { name, body, arr } => {
                let f = self.scoped(&[name], |p, mut n| {
                    n.push(p.term(body));
                    Doc::list(n)
                });
                let a = self.term(arr);
                self.form(head, vec![f, a])
            }
            TreeLeaf(a, ty) => {
                let a = self.term(a);
                self.form(head, vec![a, ty_doc(ty)])
            }
            FoldList { zname, accname, body, init, list } => {
                let f = self.scoped(&[zname, accname], |p, mut n| {
                    n.push(p.term(body));
                    Doc::list(n)
                });
                let i = self.term(init);
                let l = self.term(list);
                self.form(head, vec![f, i, l])
            }
            Pack(tag, body_ty, a) => {
                let a = self.term(a);
                self.form(head, vec![ty_doc(tag), ty_doc(body_ty), a])
            }
            UnpackCase { scrut, name, body } => {
                let s = self.term(scrut);
                let b = self.scoped(&[name], |p, mut n| {
                    n.push(p.term(body));
                    Doc::list(n)
                });
                self.form(head, vec![s, b])
            }
            Error(msg, ty) => {
                let quoted = format!("\"{}\"", msg.replace('\\', "\\\\").replace('"', "\\\""));
                self.form(head, vec![Doc::Atom(quoted), ty_doc(ty)])
            }
            _ => {
                let children = t.children();
                let docs = self.terms(&children);
                self.form(head, docs)
            }
        }
    }
}
