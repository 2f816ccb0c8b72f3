//! Higher-order CHAD.
//!
//! [`chad_naive_ho`] differentiates functions directly, with cotangents of
//! function type being logs of invocations; each call then runs the
//! callee's derivative twice, so nested calls cost exponential time.
//! [`closure_convert`] followed by either [`defunctionalise`] (then
//! first-order monadic CHAD) or [`chad_closed`] avoids that.

mod cc;
mod defun;

use std::fmt;
use std::str::FromStr;

use crate::chad::{self, derive, run_backprop, ChadError, Derivative, Fns, Gradient, Mode, Style, TransformConfig, TransformError};
use crate::cotangent::CotValue;
use crate::eval::{Repr, Value};
use crate::lang::{elaborate, typecheck, Context, Term, Ty, TypeError, T};

pub use cc::cc_type;

/// One syntactic lambda of a program.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSite {
    /// Position in a pre-order walk of the program.
    pub id: usize,
    /// Types of the captured variables, ordered by level.
    pub captures: Vec<Ty>,
    pub arg: Ty,
    pub result: Ty,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LambdaInventory {
    pub sites: Vec<LambdaSite>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HocError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Chad(#[from] ChadError),
    #[error("a call site has no candidate lambda")]
    InventoryMismatch,
    #[error("a lambda captures a function of its own lambda set")]
    RecursiveLambdaSet,
    #[error("program inputs must be first-order, found {0}")]
    HigherOrderInput(Ty),
    #[error("not a closure-converted program: unexpected {0}")]
    Malformed(&'static str),
}

/// A closure-converted program.
#[derive(Clone, Debug)]
pub struct Converted {
    pub ctx: Context,
    pub term: T,
    /// Converted result type.
    pub ty: Ty,
    pub inventory: LambdaInventory,
}

/// A first-order program.
#[derive(Clone, Debug)]
pub struct FirstOrder {
    pub ctx: Context,
    pub term: T,
    pub ty: Ty,
}

fn first_order_inputs(ctx: &Context) -> Result<(), HocError> {
    match ctx.tys().into_iter().find(|t| !t.is_first_order()) {
        Some(t) => Err(HocError::HigherOrderInput(t)),
        None => Ok(()),
    }
}

/// Replaces every lambda by a package of its captures and a closed
/// function.
pub fn closure_convert(ctx: &Context, t: &Term) -> Result<Converted, HocError> {
    first_order_inputs(ctx)?;
    let (src, ty) = elaborate(ctx, t)?;
    let mut c = cc::Cc::new(ctx.tys());
    let (term, _) = c.cc(&src)?;
    Ok(Converted { ctx: ctx.clone(), term, ty: cc_type(&ty), inventory: c.inventory })
}

/// Removes every function type from a closure-converted program.
pub fn defunctionalise(p: &Converted) -> Result<FirstOrder, HocError> {
    first_order_inputs(&p.ctx)?;
    let term = defun::run(&p.ctx, &p.term)?;
    let ty = typecheck(&p.ctx, &term)?;
    Ok(FirstOrder { ctx: p.ctx.clone(), term, ty })
}

/// Naive higher-order CHAD with environment cotangents.
pub fn chad_naive_ho(ctx: &Context, t: &Term) -> Result<Derivative, HocError> {
    first_order_inputs(ctx)?;
    let (src, _) = elaborate(ctx, t)?;
    Ok(derive(Style::Env, Fns::NaiveHo, false, "naive-ho", ctx, src, 0)?)
}

/// Monadic CHAD on a closure-converted program: closed functions carry no
/// cotangent and packages carry tagged ones.
pub fn chad_closed(p: &Converted) -> Result<Derivative, HocError> {
    Ok(derive(Style::Evm, Fns::Closed, true, "closure-chad", &p.ctx, p.term.clone(), 0)?)
}

/// The higher-order differentiation strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HoMode {
    NaiveHo,
    Defunctionalise,
    ClosureChad,
}

impl HoMode {
    pub const ALL: [HoMode; 3] = [HoMode::NaiveHo, HoMode::Defunctionalise, HoMode::ClosureChad];

    pub fn name(self) -> &'static str {
        match self {
            HoMode::NaiveHo => "naive-ho",
            HoMode::Defunctionalise => "defunctionalise",
            HoMode::ClosureChad => "closure-chad",
        }
    }
}

impl fmt::Display for HoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HoMode {
    type Err = String;

    fn from_str(s: &str) -> Result<HoMode, String> {
        HoMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Gradient of `t` at `point` against `seed` using a higher-order strategy.
pub fn grad_ho(mode: HoMode, ctx: &Context, t: &Term, point: &[Value], seed: &CotValue) -> Result<Gradient, HocError> {
    let d2s = || -> Result<Vec<Ty>, HocError> {
        Ok(ctx.tys().iter().map(chad::d2_type).collect::<Result<_, _>>()?)
    };
    match mode {
        HoMode::NaiveHo => {
            first_order_inputs(ctx)?;
            let (src, _) = elaborate(ctx, t)?;
            let d = derive(Style::Env, Fns::NaiveHo, false, "naive-ho", ctx, src, 1)?;
            Ok(run_backprop(Style::Env, Repr::Dense, &d2s()?, &d.term, point, seed)?)
        }
        HoMode::Defunctionalise => {
            let fo = defunctionalise(&closure_convert(ctx, t)?)?;
            Ok(chad::grad(&TransformConfig::new(Mode::Monadic), &fo.ctx, &fo.term, point, seed)?)
        }
        HoMode::ClosureChad => {
            let p = closure_convert(ctx, t)?;
            let d = derive(Style::Evm, Fns::Closed, true, "closure-chad", &p.ctx, p.term.clone(), 1)?;
            Ok(run_backprop(Style::Evm, Repr::Sparse, &d2s()?, &d.term, point, seed)?)
        }
    }
}

#[cfg(test)]
mod tests;
