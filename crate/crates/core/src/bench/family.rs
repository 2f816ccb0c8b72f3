//! Program families indexed by a size parameter.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::Value;
use crate::lang::{rc, Context, Name, Op, Program, Term, Ty, T};

use super::BenchError;

/// Seed of the pseudo-random evaluation points.
pub const POINT_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    DeepLet,
    Fanout,
    TMagic,
    TN,
    CaseLadder,
    ArrayBuildFold,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::DeepLet, Family::Fanout, Family::TMagic, Family::TN, Family::CaseLadder, Family::ArrayBuildFold];

    pub fn name(self) -> &'static str {
        match self {
            Family::DeepLet => "deep-let",
            Family::Fanout => "fanout",
            Family::TMagic => "t_magic",
            Family::TN => "t_n",
            Family::CaseLadder => "case-ladder",
            Family::ArrayBuildFold => "array-buildfold",
        }
    }

    /// Inclusive range of valid sizes.
    pub fn range(self) -> (usize, usize) {
        match self {
            Family::TN => (1, 1 << 12),
            _ => (1, 1 << 20),
        }
    }

    pub fn check_size(self, n: usize) -> Result<(), BenchError> {
        let (lo, hi) = self.range();
        let pow2 = self != Family::TMagic || n.is_power_of_two();
        if n < lo || n > hi || !pow2 {
            return Err(BenchError::SizeOutOfRange { family: self, n });
        }
        Ok(())
    }

    /// Whether the family's programs contain lambdas.
    pub fn is_higher_order(self) -> bool {
        self == Family::TN
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Family, String> {
        Family::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown family `{s}`"))
    }
}

fn var(l: usize) -> T {
    rc(Term::Var(l))
}

fn op(o: Op, args: Vec<T>) -> T {
    rc(Term::PrimOp(o, args))
}

fn let_(name: String, bound: T, body: T) -> T {
    rc(Term::Let { name: Name::new(&name), ty: Ty::Real, bound, body })
}

/// Balanced sum over `leaves`.
fn add_tree(leaves: &[T]) -> T {
    match leaves {
        [one] => one.clone(),
        _ => {
            let (l, r) = leaves.split_at(leaves.len() / 2);
            op(Op::Add, vec![add_tree(l), add_tree(r)])
        }
    }
}

/// Right-nested lets `x_1 = f(1, x_0) ... x_n = f(n, x_{n-1})` returning `x_n`.
fn let_chain(n: usize, prefix: &str, step: impl Fn(usize) -> T) -> T {
    let mut body = var(n);
    for k in (1..=n).rev() {
        body = let_(format!("{prefix}{k}"), step(k), body);
    }
    body
}

/// The family member of size `n`.
///
/// * `deep-let`: `let a1 = 2·x in … let an = 2·a(n-1) in an`
/// * `fanout`: `let y = sin x in y + … + y` with `n` uses of `y`, summed as a balanced tree
/// * `t_magic`: the balanced add-tree over `n = 2^r` inputs
/// * `t_n`: `n` nested identity applications over one input
/// * `case-ladder`: `n` chained lets, each branching on the sign of the previous one
/// * `array-buildfold`: the sum of squares of an `n`-element input array
pub fn gen_family(family: Family, n: usize) -> Result<Program, BenchError> {
    family.check_size(n)?;
    let real = |name: &str| Context::new().with(name, Ty::Real);
    Ok(match family {
        Family::DeepLet => {
            let body = let_chain(n, "a", |k| op(Op::Mul, vec![rc(Term::RealLit(2.0)), var(k - 1)]));
            Program { ctx: real("x"), body }
        }
        Family::Fanout => {
            let uses: Vec<T> = (0..n).map(|_| var(1)).collect();
            Program { ctx: real("x"), body: let_("y".into(), op(Op::Sin, vec![var(0)]), add_tree(&uses)) }
        }
        Family::TMagic => {
            let mut ctx = Context::new();
            for i in 1..=n {
                ctx.push(format!("x{i}"), Ty::Real);
            }
            let leaves: Vec<T> = (0..n).map(var).collect();
            Program { ctx, body: add_tree(&leaves) }
        }
        Family::TN => {
            // Source level 0 is x_n; the lambda for x_k binds level n - k.
            let mut body = var(n - 1);
            for k in 1..n {
                body = rc(Term::Lam { name: Name::new(&format!("x{k}")), ty: Ty::Real, body });
                body = rc(Term::App(body, var(n - k - 1)));
            }
            Program { ctx: real(&format!("x{n}")), body }
        }
        Family::CaseLadder => {
            let body = let_chain(n, "y", |k| {
                let prev = var(k - 1);
                rc(Term::Case {
                    scrut: rc(Term::Sign(prev.clone())),
                    lname: Name::new("neg"),
                    left: op(Op::Add, vec![prev.clone(), rc(Term::RealLit(1.5))]),
                    rname: Name::new("pos"),
                    right: op(Op::Mul, vec![op(Op::Sub, vec![prev.clone(), rc(Term::RealLit(1.0))]), prev]),
                })
            });
            Program { ctx: real("x"), body }
        }
        Family::ArrayBuildFold => {
            let sq = op(Op::Mul, vec![rc(Term::Index(var(0), var(1))), rc(Term::Index(var(0), var(1)))]);
            let built = rc(Term::Build { len: rc(Term::Length(var(0))), name: Name::new("i"), body: sq });
            let sum = op(Op::Add, vec![rc(Term::Fst(var(1))), rc(Term::Snd(var(1)))]);
            let body = rc(Term::Fold { name: Name::new("p"), body: sum, arr: built });
            Program { ctx: Context::new().with("xs", Ty::array(Ty::Real)), body }
        }
    })
}

/// The evaluation point for the family member of size `n`.
pub fn family_point(family: Family, n: usize) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(POINT_SEED);
    let mut real = || Value::Real(rng.gen_range(0.5..1.5));
    match family {
        Family::TMagic => (0..n).map(|_| real()).collect(),
        Family::ArrayBuildFold => vec![Value::array((0..n).map(|_| real()).collect())],
        _ => vec![real()],
    }
}
