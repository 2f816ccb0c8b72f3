//! The accumulation monad's state: one cotangent slot per context entry.
//!
//! Push, pop and modify are O(1) and cost one step; `one` additionally
//! pays for its embedded plus. `run` deposits a serialized environment,
//! executes an action and extracts the final slots, costing
//! `1 + C_RUN·|Γ|` on top of the action.

use crate::cotangent::{self, CotValue};
use crate::eval::{Action, EvalError, Evaluator, Value};
use crate::lang::Ty;

/// Steps per slot charged by `run`: one to deposit, one to extract.
pub const C_RUN: u64 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvmError {
    #[error("pop on an empty environment")]
    PopOnEmpty,
    #[error("slot {level} outside an environment of depth {depth}")]
    BadLevel { level: usize, depth: usize },
    #[error("malformed serialized environment: {0}")]
    Malformed(String),
}

/// Slot array owned exclusively by one executing `run`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvmState {
    slots: Vec<CotValue>,
}

/// Environment cotangent in slot order, one entry per context variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SerializedEnv(pub Vec<CotValue>);

impl SerializedEnv {
    /// All-zero environment for the given slot types.
    pub fn zeros(tys: &[Ty]) -> Result<SerializedEnv, EvalError> {
        let mut out = Vec::with_capacity(tys.len());
        for t in tys {
            out.push(cotangent::zero(t)?);
        }
        Ok(SerializedEnv(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Left-nested tuple of cotangents; unit when empty.
    pub fn to_value(&self) -> Value {
        Value::tuple(self.0.iter().cloned().map(Value::Cot))
    }

    /// Reads back a tuple built by [`SerializedEnv::to_value`]. Slots are
    /// cotangent values, so the left spine of pairs determines the length.
    pub fn from_value(v: &Value) -> Result<SerializedEnv, EvalError> {
        let mut out = Vec::new();
        let mut cur = v;
        loop {
            match cur {
                Value::Unit if out.is_empty() => break,
                Value::Cot(c) => {
                    out.push(c.clone());
                    break;
                }
                Value::Pair(p) => match &p.1 {
                    Value::Cot(c) => {
                        out.push(c.clone());
                        cur = &p.0;
                    }
                    other => return Err(EvmError::Malformed(format!("slot holds {other}")).into()),
                },
                other => return Err(EvmError::Malformed(format!("found {other}")).into()),
            }
        }
        out.reverse();
        Ok(SerializedEnv(out))
    }
}

impl EvmState {
    pub fn new() -> EvmState {
        EvmState::default()
    }

    pub fn from_env(env: SerializedEnv) -> EvmState {
        EvmState { slots: env.0 }
    }

    pub fn into_env(self) -> SerializedEnv {
        SerializedEnv(self.slots)
    }

    pub fn depth(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, level: usize) -> Option<&CotValue> {
        self.slots.get(level)
    }

    /// Pushes a zero slot; returns the step cost.
    pub fn push(&mut self, ty: &Ty) -> Result<u64, EvalError> {
        self.push_untimed(ty)?;
        Ok(1)
    }

    /// Pops the top slot; returns it with the step cost.
    pub fn pop(&mut self) -> Result<(CotValue, u64), EvalError> {
        Ok((self.pop_untimed()?, 1))
    }

    pub(crate) fn push_untimed(&mut self, ty: &Ty) -> Result<(), EvalError> {
        self.slots.push(cotangent::zero(ty)?);
        Ok(())
    }

    pub(crate) fn pop_untimed(&mut self) -> Result<CotValue, EvalError> {
        Ok(self.slots.pop().ok_or(EvmError::PopOnEmpty)?)
    }

    /// Replaces slot `level` by `f(slot)`; `f` reports its own cost.
    pub fn modify(
        &mut self,
        level: usize,
        f: impl FnOnce(&CotValue) -> Result<(CotValue, u64), EvalError>,
    ) -> Result<u64, EvalError> {
        let depth = self.slots.len();
        let slot = self.slots.get_mut(level).ok_or(EvmError::BadLevel { level, depth })?;
        let (v, c) = f(slot)?;
        *slot = v;
        Ok(1 + c)
    }

    /// Adds `d` into slot `level`.
    pub fn one(&mut self, level: usize, d: &CotValue) -> Result<u64, EvalError> {
        self.modify(level, |s| Ok(cotangent::plus(s, d)?))
    }
}

pub fn ret(v: Value) -> Value {
    Value::action(Action::Return(v))
}

pub fn bind(m: Value, k: Value) -> Value {
    Value::action(Action::Bind(m, k))
}

pub fn one(level: usize, d: CotValue) -> Value {
    Value::action(Action::One(level, d))
}

pub fn scope(ty: Ty, m: Value) -> Value {
    Value::action(Action::Scope(ty, m))
}

/// Runs `m` on a fresh state holding `env0`; returns the result and the
/// final environment.
pub fn run(ev: &mut Evaluator, m: &Value, env0: SerializedEnv) -> Result<(Value, SerializedEnv), EvalError> {
    ev.tick(1 + C_RUN * env0.len() as u64);
    let mut st = EvmState::from_env(env0);
    let v = ev.exec(&mut st, m)?;
    Ok((v, st.into_env()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cotangent::densify;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn r(x: f64) -> CotValue {
        CotValue::Real(x)
    }

    #[test]
    fn push_pop() {
        let mut st = EvmState::new();
        assert_eq!(st.push(&Ty::LReal).unwrap(), 1);
        assert_eq!(st.slot(0), Some(&r(0.0)));
        assert_eq!(st.depth(), 1);
        let (d, c) = st.pop().unwrap();
        assert_eq!((d, c), (r(0.0), 1));
        assert_eq!(st, EvmState::new());
        assert!(matches!(st.pop(), Err(EvalError::Evm(EvmError::PopOnEmpty))));
    }

    #[test]
    fn lifo_order() {
        let mut st = EvmState::new();
        st.push(&Ty::LReal).unwrap();
        st.push(&Ty::LUnit).unwrap();
        st.one(0, &r(4.0)).unwrap();
        assert_eq!(st.pop().unwrap().0, CotValue::Unit);
        assert_eq!(st.pop().unwrap().0, r(4.0));
    }

    #[test]
    fn modify_and_one() {
        let mut st = EvmState::from_env(SerializedEnv(vec![r(1.0)]));
        let c = st.modify(0, |s| Ok(cotangent::plus(s, &r(2.0))?)).unwrap();
        assert_eq!(st.slot(0), Some(&r(3.0)));
        assert_eq!(c, 2);
        st.modify(0, |s| Ok((s.clone(), 0))).unwrap();
        assert_eq!(st.slot(0), Some(&r(3.0)));
        assert!(matches!(
            st.modify(3, |s| Ok((s.clone(), 0))),
            Err(EvalError::Evm(EvmError::BadLevel { level: 3, depth: 1 }))
        ));
    }

    #[test]
    fn run_one_and_return() {
        let mut ev = Evaluator::new();
        let (v, env) = run(&mut ev, &one(0, r(2.5)), SerializedEnv(vec![r(1.0)])).unwrap();
        assert_eq!((v, env.0), (Value::Unit, vec![r(3.5)]));
        let d = CotValue::pair(r(1.0), CotValue::PZero);
        let (_, env) = run(&mut ev, &one(0, d.clone()), SerializedEnv(vec![CotValue::PZero])).unwrap();
        assert_eq!(env.0, vec![d]);

        let mut ev = Evaluator::new();
        let (v, env) = run(&mut ev, &ret(Value::Unit), SerializedEnv(vec![r(7.0)])).unwrap();
        assert_eq!((v, env.0), (Value::Unit, vec![r(7.0)]));
        assert_eq!(ev.cost(), 1 + 2 + 1);

        let mut ev = Evaluator::new();
        run(&mut ev, &ret(Value::Unit), SerializedEnv(vec![])).unwrap();
        assert_eq!(ev.cost(), 1 + 1);
    }

    #[test]
    fn scope_pushes_and_pops() {
        let mut ev = Evaluator::new();
        let body = bind(one(1, r(1.0)), Value::ClosedFun(crate::lang::rc(crate::lang::Term::EvmReturn(
            crate::lang::CotCtx::empty(),
            crate::lang::rc(crate::lang::Term::UnitLit),
        ))));
        let m = scope(Ty::LReal, body);
        let (v, env) = run(&mut ev, &m, SerializedEnv(vec![r(5.0)])).unwrap();
        assert_eq!(v, Value::pair(Value::Unit, Value::Cot(r(1.0))));
        assert_eq!(env.0, vec![r(5.0)]);

        let mut ev = Evaluator::new();
        let (v, _) = run(&mut ev, &scope(Ty::LReal, ret(Value::Real(2.0))), SerializedEnv(vec![])).unwrap();
        assert_eq!(v, Value::pair(Value::Real(2.0), Value::Cot(r(0.0))));

        let nested = scope(Ty::LReal, scope(Ty::LUnit, one(0, r(3.0))));
        let (v, env) = run(&mut ev, &nested, SerializedEnv(vec![])).unwrap();
        assert_eq!(
            v,
            Value::pair(Value::pair(Value::Unit, Value::Cot(CotValue::Unit)), Value::Cot(r(3.0)))
        );
        assert!(env.is_empty());
    }

    #[test]
    fn ones_commute() {
        let a = CotValue::pair(r(1.0), CotValue::PZero);
        let b = CotValue::pair(CotValue::PZero, CotValue::pair(r(2.0), r(3.0)));
        let ty = Ty::lprod(Ty::LReal, Ty::lprod(Ty::LReal, Ty::LReal));
        let mut outs = vec![];
        for (x, y) in [(&a, &b), (&b, &a)] {
            let mut st = EvmState::from_env(SerializedEnv(vec![CotValue::PZero]));
            st.one(0, x).unwrap();
            st.one(0, y).unwrap();
            outs.push(densify(&ty, st.slot(0).unwrap()));
        }
        assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn serialized_env_round_trip() {
        for n in 0..4 {
            let env = SerializedEnv((0..n).map(|i| r(i as f64)).collect());
            assert_eq!(SerializedEnv::from_value(&env.to_value()).unwrap(), env);
        }
    }

    #[test]
    fn op_costs_independent_of_depth() {
        let mut costs = vec![];
        for n in [1usize, 16, 256, 4096] {
            let mut st = EvmState::from_env(SerializedEnv(vec![r(0.0); n]));
            let push = st.push(&Ty::LReal).unwrap();
            let one = st.one(n / 2, &r(1.0)).unwrap() - 1;
            let (_, pop) = st.pop().unwrap();
            let mut ev = Evaluator::new();
            let m = scope(Ty::LReal, ret(Value::Unit));
            run(&mut ev, &m, SerializedEnv(vec![r(0.0); n])).unwrap();
            let scope_cost = ev.cost() - (1 + C_RUN * n as u64) - 1;
            costs.push((push, one, pop, scope_cost));
        }
        assert!(costs.windows(2).all(|w| w[0] == w[1]), "{costs:?}");
    }

    #[derive(Clone, Debug)]
    enum Op {
        One(usize, f64),
        Scope(Vec<Op>),
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        let leaf = (0usize..4, -5.0f64..5.0).prop_map(|(l, x)| Op::One(l, x));
        let tree = leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                (0usize..4, -5.0f64..5.0).prop_map(|(l, x)| Op::One(l, x)),
                proptest::collection::vec(inner, 0..4).prop_map(Op::Scope),
            ]
        });
        proptest::collection::vec(tree, 0..8)
    }

    fn build(ops: &[Op], depth: usize) -> Value {
        let mut acts: Vec<Value> = vec![];
        for op in ops {
            acts.push(match op {
                Op::One(l, x) => one(l % depth.max(1), r(*x)),
                Op::Scope(inner) => scope(Ty::LReal, build(inner, depth + 1)),
            });
        }
        Value::action(Action::Sequence(std::rc::Rc::new(acts)))
    }

    /// Reference semantics on a persistent map; returns top-level totals.
    fn reference(ops: &[Op], depth: usize, acc: &mut BTreeMap<usize, f64>) {
        for op in ops {
            match op {
                Op::One(l, x) => *acc.entry(l % depth.max(1)).or_default() += x,
                Op::Scope(inner) => {
                    let mut local = acc.clone();
                    local.remove(&depth);
                    reference(inner, depth + 1, &mut local);
                    local.remove(&depth);
                    *acc = local;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn accumulation_matches_reference(ops in ops(), init in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let m = build(&ops, 4);
            let mut ev = Evaluator::new();
            let (_, out) = run(&mut ev, &m, SerializedEnv(init.iter().map(|x| r(*x)).collect())).unwrap();
            let mut acc: BTreeMap<usize, f64> = init.iter().copied().enumerate().collect();
            reference(&ops, 4, &mut acc);
            for (i, c) in out.0.iter().enumerate() {
                let CotValue::Real(x) = c else { panic!() };
                prop_assert!((x - acc[&i]).abs() < 1e-9);
            }
        }
    }
}
