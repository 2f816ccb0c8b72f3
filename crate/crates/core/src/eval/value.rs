use std::fmt;
use std::rc::Rc;

use crate::cotangent::CotValue;
use crate::lang::{Ty, T};

/// Runtime environment, indexed by de Bruijn level.
pub type Env = im::Vector<Value>;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Unit,
    Int(i64),
    Pair(Rc<(Value, Value)>),
    Inl(Rc<Value>),
    Inr(Rc<Value>),
    Array(Rc<Vec<Value>>),
    Closure(Rc<Closure>),
    /// Closed function; the body sees only its argument.
    ClosedFun(T),
    /// Existential package: runtime type tag and payload.
    Packed(Rc<(Ty, Value)>),
    Cot(CotValue),
    Action(Rc<Action>),
    Env(EnvValue),
    Tree(Rc<TreeValue>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Closure {
    pub env: Captured,
    pub body: T,
}

/// Environment captured by a closure. Shallow environments are copied so
/// the evaluator's own stack stays unshared and pushes don't copy chunks.
#[derive(Clone, Debug, PartialEq)]
pub enum Captured {
    Copied(Box<[Value]>),
    Shared(Env),
}

impl Captured {
    const COPY_LIMIT: usize = 64;

    pub fn capture(env: &Env) -> Captured {
        if env.len() <= Captured::COPY_LIMIT {
            Captured::Copied(env.iter().cloned().collect())
        } else {
            Captured::Shared(env.clone())
        }
    }

    pub fn to_env(&self) -> Env {
        match self {
            Captured::Copied(vs) => vs.iter().cloned().collect(),
            Captured::Shared(env) => env.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeValue {
    Leaf(Value),
    Node(Rc<TreeValue>, Value, Value, Rc<TreeValue>),
}

impl TreeValue {
    pub fn payload(&self) -> &Value {
        match self {
            TreeValue::Leaf(x) | TreeValue::Node(_, x, _, _) => x,
        }
    }
}

/// Suspended computation in the accumulation monad.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Return(Value),
    Bind(Value, Value),
    One(usize, CotValue),
    Scope(Ty, Value),
    Sequence(Rc<Vec<Value>>),
    UnTree { step: Value, d: CotValue, tree: Rc<TreeValue> },
}

/// Environment cotangent of the non-monadic transformations.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvValue {
    pub len: usize,
    pub slots: EnvSlots,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSlots {
    /// One entry per context variable, zeros materialised.
    Dense(Rc<Vec<CotValue>>),
    /// Balanced map keyed by level; absent keys are zero.
    Map(im::OrdMap<usize, CotValue>),
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Rc::new((a, b)))
    }

    pub fn inl(a: Value) -> Value {
        Value::Inl(Rc::new(a))
    }

    pub fn inr(a: Value) -> Value {
        Value::Inr(Rc::new(a))
    }

    pub fn array(xs: Vec<Value>) -> Value {
        Value::Array(Rc::new(xs))
    }

    pub fn action(a: Action) -> Value {
        Value::Action(Rc::new(a))
    }

    /// Left-nested tuple, as built by [`Term::tuple`].
    pub fn tuple(items: impl IntoIterator<Item = Value>) -> Value {
        let mut it = items.into_iter();
        match it.next() {
            None => Value::Unit,
            Some(first) => it.fold(first, Value::pair),
        }
    }

    /// Inverse of [`Value::tuple`] for a known arity.
    pub fn untuple(&self, n: usize) -> Option<Vec<Value>> {
        let mut out = Vec::with_capacity(n);
        let mut cur = self.clone();
        if n == 0 {
            return Some(out);
        }
        for _ in 1..n {
            let Value::Pair(p) = cur else { return None };
            out.push(p.1.clone());
            cur = p.0.clone();
        }
        out.push(cur);
        out.reverse();
        Some(out)
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_cot(&self) -> Option<&CotValue> {
        match self {
            Value::Cot(c) => Some(c),
            _ => None,
        }
    }

    /// `sign` result: `inl unit` for negative inputs, `inr unit` otherwise.
    pub fn boolean(negative: bool) -> Value {
        if negative {
            Value::inl(Value::Unit)
        } else {
            Value::inr(Value::Unit)
        }
    }

    /// Real leaves of a first-order value in left-to-right order; the
    /// inactive side of a sum contributes zeros of its type.
    pub fn real_leaves(&self, ty: &Ty) -> Vec<f64> {
        let mut out = Vec::new();
        leaves_into(self, ty, &mut out);
        out
    }
}

/// Number of real leaves a value of `ty` contributes when it is not
/// present (the inactive side of a sum); arrays contribute none.
pub fn leaf_width(ty: &Ty) -> usize {
    match ty {
        Ty::Real => 1,
        Ty::Prod(a, b) | Ty::Sum(a, b) => leaf_width(a) + leaf_width(b),
        _ => 0,
    }
}

fn zeros_for(ty: &Ty, out: &mut Vec<f64>) {
    match ty {
        Ty::Real => out.push(0.0),
        Ty::Prod(a, b) | Ty::Sum(a, b) => {
            zeros_for(a, out);
            zeros_for(b, out);
        }
        _ => {}
    }
}

fn leaves_into(v: &Value, ty: &Ty, out: &mut Vec<f64>) {
    match (v, ty) {
        (Value::Real(x), Ty::Real) => out.push(*x),
        (Value::Pair(p), Ty::Prod(a, b)) => {
            leaves_into(&p.0, a, out);
            leaves_into(&p.1, b, out);
        }
        (Value::Inl(x), Ty::Sum(a, b)) => {
            leaves_into(x, a, out);
            zeros_for(b, out);
        }
        (Value::Inr(y), Ty::Sum(a, b)) => {
            zeros_for(a, out);
            leaves_into(y, b, out);
        }
        (Value::Array(xs), Ty::Array(e)) => {
            for x in xs.iter() {
                leaves_into(x, e, out);
            }
        }
        _ => {}
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x:?}"),
            Value::Unit => write!(f, "unit"),
            Value::Int(i) => write!(f, "{i}i"),
            Value::Pair(p) => write!(f, "(pair {} {})", p.0, p.1),
            Value::Inl(x) => write!(f, "(inl {x})"),
            Value::Inr(x) => write!(f, "(inr {x})"),
            Value::Array(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::Closure(_) | Value::ClosedFun(_) => write!(f, "<function>"),
            Value::Packed(p) => write!(f, "(pack {} {})", p.0, p.1),
            Value::Cot(c) => write!(f, "{c:?}"),
            Value::Action(_) => write!(f, "<action>"),
            Value::Env(_) => write!(f, "<env>"),
            Value::Tree(_) => write!(f, "<tree>"),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_round_trip() {
        let vs: Vec<Value> = (0..4).map(|i| Value::Real(i as f64)).collect();
        let t = Value::tuple(vs.clone());
        assert_eq!(t.untuple(4).unwrap(), vs);
        assert_eq!(Value::tuple(vec![]).untuple(0).unwrap(), vec![]);
        assert_eq!(Value::Real(1.0).untuple(1).unwrap(), vec![Value::Real(1.0)]);
    }

    #[test]
    fn leaves_follow_type_order() {
        let ty = Ty::prod(Ty::sum(Ty::Real, Ty::Unit), Ty::array(Ty::Real));
        let v = Value::pair(Value::inr(Value::Unit), Value::array(vec![Value::Real(2.0), Value::Real(3.0)]));
        assert_eq!(v.real_leaves(&ty), vec![0.0, 2.0, 3.0]);
    }
}
