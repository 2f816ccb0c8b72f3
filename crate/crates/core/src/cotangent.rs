//! Runtime cotangent values with sparse monoid structure, size and potential.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::eval::Value;
use crate::lang::Ty;

/// Potential per node: φ(d) = C_PHI · size(d).
pub const C_PHI: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum CotValue {
    Real(f64),
    Unit,
    /// Zero of an `LProd`.
    PZero,
    Pair(Rc<CotValue>, Rc<CotValue>),
    /// Zero of an `LSum`.
    SZero,
    Inl(Rc<CotValue>),
    Inr(Rc<CotValue>),
    BagEmpty,
    BagOne(i64, Rc<CotValue>),
    BagPlus(Rc<CotValue>, Rc<CotValue>),
    /// Invocation log of a function cotangent; elements are
    /// `(argument, output cotangent)` pairs.
    List(Rc<im::Vector<Value>>),
    /// Existential cotangent tagged with the primal type tag.
    Packed(Ty, Rc<CotValue>),
    /// Zero whose type is only known statically: projections of sparse
    /// zeros and zeros of existential cotangents.
    Zero,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CotError {
    #[error("cotangent mismatch in {op}: {detail}")]
    Mismatch { op: &'static str, detail: String },
    #[error("existential tag mismatch: expected {expected}, found {found}")]
    TagMismatch { expected: Ty, found: Ty },
    #[error("no zero for non-linear type {0}")]
    NotLinear(Ty),
}

fn mismatch(op: &'static str, a: &CotValue, b: &CotValue) -> CotError {
    CotError::Mismatch { op, detail: format!("{} vs {}", a.head(), b.head()) }
}

impl CotValue {
    pub fn real(x: f64) -> CotValue {
        CotValue::Real(x)
    }

    pub fn pair(a: CotValue, b: CotValue) -> CotValue {
        CotValue::Pair(Rc::new(a), Rc::new(b))
    }

    pub fn inl(a: CotValue) -> CotValue {
        CotValue::Inl(Rc::new(a))
    }

    pub fn inr(a: CotValue) -> CotValue {
        CotValue::Inr(Rc::new(a))
    }

    pub fn bag_one(i: i64, d: CotValue) -> CotValue {
        CotValue::BagOne(i, Rc::new(d))
    }

    pub fn head(&self) -> &'static str {
        match self {
            CotValue::Real(_) => "real",
            CotValue::Unit => "unit",
            CotValue::PZero => "pair-zero",
            CotValue::Pair(..) => "pair",
            CotValue::SZero => "sum-zero",
            CotValue::Inl(_) => "inl",
            CotValue::Inr(_) => "inr",
            CotValue::BagEmpty => "bag-empty",
            CotValue::BagOne(..) => "bag-one",
            CotValue::BagPlus(..) => "bag-plus",
            CotValue::List(_) => "list",
            CotValue::Packed(..) => "packed",
            CotValue::Zero => "zero",
        }
    }

    /// True for the explicit zero constructors.
    pub fn is_zero(&self) -> bool {
        matches!(self, CotValue::PZero | CotValue::SZero | CotValue::BagEmpty | CotValue::Zero)
    }
}

/// Sparse zero of a linear type; constant size.
pub fn zero(ty: &Ty) -> Result<CotValue, CotError> {
    Ok(match ty {
        Ty::LReal => CotValue::Real(0.0),
        Ty::LUnit => CotValue::Unit,
        Ty::LProd(..) => CotValue::PZero,
        Ty::LSum(..) => CotValue::SZero,
        Ty::Bag(_) => CotValue::BagEmpty,
        Ty::List(_) => CotValue::List(Rc::default()),
        Ty::LSigma(_) | Ty::LHole | Ty::LRigid(_) => CotValue::Zero,
        other => return Err(CotError::NotLinear(other.clone())),
    })
}

/// Dense zero (products materialised componentwise) and its size, which is
/// also its construction cost.
pub fn zero_dense(ty: &Ty) -> Result<(CotValue, u64), CotError> {
    match ty {
        Ty::LProd(a, b) => {
            let (za, ca) = zero_dense(a)?;
            let (zb, cb) = zero_dense(b)?;
            Ok((CotValue::pair(za, zb), 1 + ca + cb))
        }
        _ => Ok((zero(ty)?, 1)),
    }
}

/// Monoid addition with its structural cost: one step per node of the
/// traversed intersection and one per subtree handed over untouched.
pub fn plus(a: &CotValue, b: &CotValue) -> Result<(CotValue, u64), CotError> {
    use CotValue::*;
    if a.is_zero() {
        return Ok((b.clone(), 1));
    }
    if b.is_zero() {
        return Ok((a.clone(), 1));
    }
    Ok(match (a, b) {
        (Real(x), Real(y)) => (Real(x + y), 1),
        (Unit, Unit) => (Unit, 1),
        (Pair(a1, a2), Pair(b1, b2)) => {
            let (c1, k1) = plus(a1, b1)?;
            let (c2, k2) = plus(a2, b2)?;
            (CotValue::pair(c1, c2), 1 + k1 + k2)
        }
        (Inl(x), Inl(y)) => {
            let (c, k) = plus(x, y)?;
            (CotValue::inl(c), 1 + k)
        }
        (Inr(x), Inr(y)) => {
            let (c, k) = plus(x, y)?;
            (CotValue::inr(c), 1 + k)
        }
        (BagOne(..) | BagPlus(..), BagOne(..) | BagPlus(..)) => {
            (BagPlus(Rc::new(a.clone()), Rc::new(b.clone())), 1)
        }
        (List(x), List(y)) => {
            let mut v = (**x).clone();
            v.append((**y).clone());
            (List(Rc::new(v)), 1 + x.len() as u64)
        }
        (Packed(t1, x), Packed(t2, y)) => {
            if t1 != t2 {
                return Err(CotError::TagMismatch { expected: t1.clone(), found: t2.clone() });
            }
            let (c, k) = plus(x, y)?;
            (Packed(t1.clone(), Rc::new(c)), 1 + k)
        }
        _ => return Err(mismatch("plus", a, b)),
    })
}

/// Node count; at least 1.
pub fn size(d: &CotValue) -> u64 {
    use CotValue::*;
    match d {
        Real(_) | Unit | PZero | SZero | BagEmpty | Zero => 1,
        Pair(a, b) | BagPlus(a, b) => 1 + size(a) + size(b),
        Inl(a) | Inr(a) | BagOne(_, a) | Packed(_, a) => 1 + size(a),
        List(xs) => 1 + xs.len() as u64,
    }
}

pub fn potential(d: &CotValue) -> u64 {
    C_PHI * size(d)
}

pub fn lpair(a: CotValue, b: CotValue) -> CotValue {
    CotValue::pair(a, b)
}

pub fn lfst(d: &CotValue) -> Result<CotValue, CotError> {
    match d {
        CotValue::Pair(a, _) => Ok((**a).clone()),
        z if z.is_zero() => Ok(CotValue::Zero),
        other => Err(CotError::Mismatch { op: "lfst", detail: other.head().to_string() }),
    }
}

pub fn lsnd(d: &CotValue) -> Result<CotValue, CotError> {
    match d {
        CotValue::Pair(_, b) => Ok((**b).clone()),
        z if z.is_zero() => Ok(CotValue::Zero),
        other => Err(CotError::Mismatch { op: "lsnd", detail: other.head().to_string() }),
    }
}

pub fn linl(a: CotValue) -> CotValue {
    CotValue::inl(a)
}

pub fn linr(b: CotValue) -> CotValue {
    CotValue::inr(b)
}

pub fn lcast_l(d: &CotValue) -> Result<CotValue, CotError> {
    match d {
        CotValue::Inl(a) => Ok((**a).clone()),
        z if z.is_zero() => Ok(CotValue::Zero),
        other => Err(CotError::Mismatch { op: "lcastL", detail: other.head().to_string() }),
    }
}

pub fn lcast_r(d: &CotValue) -> Result<CotValue, CotError> {
    match d {
        CotValue::Inr(b) => Ok((**b).clone()),
        z if z.is_zero() => Ok(CotValue::Zero),
        other => Err(CotError::Mismatch { op: "lcastR", detail: other.head().to_string() }),
    }
}

/// Checks that `d` is a valid cotangent of the linear type `ty`.
pub fn shape_valid(ty: &Ty, d: &CotValue) -> bool {
    use CotValue as C;
    if matches!(d, C::Zero) {
        return true;
    }
    match (ty, d) {
        (Ty::LReal, C::Real(_)) | (Ty::LUnit, C::Unit) => true,
        (Ty::LProd(..), C::PZero) | (Ty::LSum(..), C::SZero) => true,
        (Ty::LProd(a, b), C::Pair(x, y)) => shape_valid(a, x) && shape_valid(b, y),
        (Ty::LSum(a, _), C::Inl(x)) => shape_valid(a, x),
        (Ty::LSum(_, b), C::Inr(y)) => shape_valid(b, y),
        (Ty::Bag(_), C::BagEmpty) => true,
        (Ty::Bag(e), C::BagOne(i, x)) => *i >= 0 && shape_valid(e, x),
        (Ty::Bag(_), C::BagPlus(x, y)) => shape_valid(ty, x) && shape_valid(ty, y),
        (Ty::List(_), C::List(_)) => true,
        (Ty::LSigma(_), C::Packed(..)) => true,
        _ => false,
    }
}

/// Dense embedding in left-to-right leaf order. Sums contribute the leaves
/// of both sides; bags contribute one block per index up to the largest one
/// present.
pub fn densify(ty: &Ty, d: &CotValue) -> Vec<f64> {
    let mut out = Vec::new();
    densify_into(ty, d, &mut out);
    out
}

fn dense_width(ty: &Ty) -> usize {
    match ty {
        Ty::LReal => 1,
        Ty::LProd(a, b) | Ty::LSum(a, b) => dense_width(a) + dense_width(b),
        _ => 0,
    }
}

fn densify_into(ty: &Ty, d: &CotValue, out: &mut Vec<f64>) {
    use CotValue as C;
    match (ty, d) {
        (Ty::LReal, C::Real(x)) => out.push(*x),
        (Ty::LProd(a, b), C::Pair(x, y)) => {
            densify_into(a, x, out);
            densify_into(b, y, out);
        }
        (Ty::LSum(a, b), C::Inl(x)) => {
            densify_into(a, x, out);
            out.extend(std::iter::repeat(0.0).take(dense_width(b)));
        }
        (Ty::LSum(a, b), C::Inr(y)) => {
            out.extend(std::iter::repeat(0.0).take(dense_width(a)));
            densify_into(b, y, out);
        }
        (Ty::Bag(e), _) => {
            let mut by_index: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            collect_bag(e, d, &mut by_index);
            let w = dense_width(e);
            let n = by_index.keys().next_back().map_or(0, |k| k + 1);
            for i in 0..n {
                match by_index.get(&i) {
                    Some(v) => out.extend(v),
                    None => out.extend(std::iter::repeat(0.0).take(w)),
                }
            }
        }
        _ => out.extend(std::iter::repeat(0.0).take(dense_width(ty))),
    }
}

fn collect_bag(e: &Ty, d: &CotValue, acc: &mut BTreeMap<i64, Vec<f64>>) {
    match d {
        CotValue::BagOne(i, x) => {
            let v = densify(e, x);
            let slot = acc.entry(*i).or_insert_with(|| vec![0.0; v.len()]);
            for (s, x) in slot.iter_mut().zip(v) {
                *s += x;
            }
        }
        CotValue::BagPlus(l, r) => {
            collect_bag(e, l, acc);
            collect_bag(e, r, acc);
        }
        _ => {}
    }
}
