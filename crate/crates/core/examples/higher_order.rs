//! Closure conversion, defunctionalisation and the three higher-order
//! differentiation modes.
//!
//! cargo run --example higher_order

use chad::cotangent::CotValue;
use chad::eval::{eval, Value};
use chad::hoc::{closure_convert, defunctionalise, grad_ho, HoMode};
use chad::lang::{parse, pretty_in};

fn main() {
    let prog = parse(
        "(program (args (x Real) (y Real))
           (let (f (Arrow Real Real))
                (case (sign x) (n (lam (z Real) (op mul z y))) (p (lam (z Real) (op sin z))))
             (op add (app f x) (app f y))))",
    )
    .unwrap();
    let cc = closure_convert(&prog.ctx, &prog.body).unwrap();
    println!("closure converted : {}\n{}\n", cc.ty, pretty_in(&cc.ctx, &cc.term));
    let fo = defunctionalise(&cc).unwrap();
    println!("defunctionalised : {}\n{}\n", fo.ty, pretty_in(&fo.ctx, &fo.term));

    let point = [Value::Real(-0.5), Value::Real(2.0)];
    let (v, _) = eval(&point, &prog.body).unwrap();
    assert_eq!(eval(&point, &fo.term).unwrap().0, v);
    for mode in HoMode::ALL {
        let g = grad_ho(mode, &prog.ctx, &prog.body, &point, &CotValue::Real(1.0)).unwrap();
        println!("{mode:>15}: gradient {:?}, cost {}", g.env.0, g.cost);
    }
}
