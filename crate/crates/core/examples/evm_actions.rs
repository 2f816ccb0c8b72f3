//! Run EVM actions against an environment of cotangent accumulators.
//! Individual operations cost the same whatever the environment size;
//! `run` pays once for loading and reading back the environment.
//!
//! cargo run --example evm_actions

use chad::cotangent::CotValue;
use chad::eval::{Evaluator, Value};
use chad::evm::{one, ret, run, scope, EvmState, SerializedEnv};
use chad::lang::Ty;

fn main() {
    let env = |n| SerializedEnv(vec![CotValue::Real(0.5); n]);

    let (_, out) = run(&mut Evaluator::new(), &one(1, CotValue::Real(2.0)), env(3)).unwrap();
    println!("one(1, 2.0) on [0.5, 0.5, 0.5] -> {:?}", out.0);

    // The scoped slot sits above the environment, at level n.
    for n in [1usize, 16, 256, 4096] {
        let m = scope(Ty::LReal, one(n, CotValue::Real(5.0)));
        let mut ev = Evaluator::new();
        let (v, _) = run(&mut ev, &m, env(n)).unwrap();

        let mut inner = Evaluator::new();
        inner.exec(&mut EvmState::from_env(env(n)), &m).unwrap();
        let mut trivial = Evaluator::new();
        trivial.exec(&mut EvmState::from_env(env(n)), &ret(Value::Unit)).unwrap();
        println!(
            "|env| = {n:4}: scope result {v}, action cost {}, return cost {}, run cost {}",
            inner.cost(),
            trivial.cost(),
            ev.cost()
        );
    }
}
