//! Evaluate a program and read off its cost in evaluator steps. `fold`
//! reduces with an associative operator.
//!
//! cargo run --example evaluate

use chad::eval::{eval, Value};
use chad::lang::parse;

fn main() {
    let prog = parse(
        "(program (args (n Int) (x Real))
           (fold (p (op add (fst p) (snd p)))
                 (build n (i (op mul x x)))))",
    )
    .unwrap();
    for n in [1, 10, 100, 1000] {
        let (v, cost) = eval(&[Value::Int(n), Value::Real(2.0)], &prog.body).unwrap();
        println!("n = {n:4}: value {v}, cost {cost}");
    }
}
