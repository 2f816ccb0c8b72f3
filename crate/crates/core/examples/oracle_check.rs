//! Check a reverse-mode gradient against forward mode and finite
//! differences.
//!
//! cargo run --example oracle_check

use chad::chad::{densify_gradient, grad, Mode, TransformConfig};
use chad::cotangent::CotValue;
use chad::lang::parse;
use chad::oracle::{grad_fd, grad_forward, max_rel_err, random_point};

fn main() {
    let prog = parse(
        "(program (args (p (Prod Real Real)) (xs (Array Real)))
           (op mul (fst p)
             (fold (q (op add (fst q) (snd q)))
               (build (length xs) (i (op log (op add (index xs i) (snd p))))))))",
    )
    .unwrap();
    for seed in 0..3 {
        let point = random_point(&prog.ctx, seed).unwrap();
        let g = grad(&TransformConfig::new(Mode::Monadic), &prog.ctx, &prog.body, &point, &CotValue::Real(1.0)).unwrap();
        let reverse = densify_gradient(&prog.ctx, &point, &g.env).unwrap();
        let forward = grad_forward(&prog.ctx, &prog.body, &point).unwrap();
        let fd = grad_fd(&prog.ctx, &prog.body, &point).unwrap();
        println!(
            "seed {seed}: {} leaves, err vs forward {:.1e}, vs finite differences {:.1e}",
            reverse.len(),
            max_rel_err(&reverse, &forward),
            max_rel_err(&reverse, &fd)
        );
    }
}
