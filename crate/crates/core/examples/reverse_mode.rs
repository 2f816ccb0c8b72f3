//! Differentiate a first-order program under the three reverse modes and
//! compare their costs.
//!
//! cargo run --example reverse_mode

use chad::chad::{chad_transform, densify_gradient, grad, Mode, TransformConfig};
use chad::cotangent::CotValue;
use chad::eval::Value;
use chad::lang::{parse, pretty};

fn main() {
    let prog = parse(
        "(program (args (x Real) (y Real))
           (let (z Real) (op mul x y)
             (op add (op sin z) (op mul z x))))",
    )
    .unwrap();
    let point = [Value::Real(0.7), Value::Real(1.3)];

    for mode in Mode::ALL {
        let cfg = TransformConfig::new(mode);
        let g = grad(&cfg, &prog.ctx, &prog.body, &point, &CotValue::Real(1.0)).unwrap();
        let dense = densify_gradient(&prog.ctx, &point, &g.env).unwrap();
        println!("{mode:>13}: gradient {dense:?}, cost {}", g.cost);
    }

    let d = chad_transform(&TransformConfig::new(Mode::Monadic), &prog.ctx, &prog.body).unwrap();
    let text = pretty(&d.term);
    println!("\nmonadic derivative : {}, {} lines; head:", d.ty, text.lines().count());
    for line in text.lines().take(8) {
        println!("{line}");
    }
}
