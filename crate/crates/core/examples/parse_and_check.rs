//! Parse a program, typecheck it and print it back.
//!
//! cargo run --example parse_and_check

use chad::lang::{parse, pretty_program, typecheck};

fn main() {
    let src = "
        (program (args (x Real) (xs (Array Real)))
          (let (s Real) (fold (p (op add (fst p) (snd p))) xs)
            (case (sign (op sub s x))
              (neg (op mul s x))
              (pos (op exp x)))))";
    let prog = parse(src).expect("parses");
    let ty = typecheck(&prog.ctx, &prog.body).expect("typechecks");
    println!("{}", pretty_program(&prog));
    println!(": {ty}");

    // Errors carry a source position.
    match parse("(program (args (x Real)) (op add x y))") {
        Err(e) => println!("error: {e}"),
        Ok(_) => unreachable!(),
    }
}
