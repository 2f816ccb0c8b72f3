//! Sparse cotangent values: zeros, addition with its cost, size and the
//! dense embedding.
//!
//! cargo run --example cotangents

use chad::cotangent::{densify, plus, size, zero, CotValue};
use chad::lang::Ty;

fn main() {
    let ty = Ty::lprod(Ty::LReal, Ty::lsum(Ty::LReal, Ty::lprod(Ty::LReal, Ty::LReal)));
    let a = CotValue::pair(CotValue::real(1.0), CotValue::SZero);
    let b = CotValue::pair(CotValue::real(0.5), CotValue::inr(CotValue::pair(CotValue::real(2.0), CotValue::PZero)));
    let (s, cost) = plus(&a, &b).unwrap();
    println!("a     = {a:?} (size {})", size(&a));
    println!("b     = {b:?} (size {})", size(&b));
    println!("a + b = {s:?} (size {}, cost {cost})", size(&s));
    println!("dense: {:?} + {:?} = {:?}", densify(&ty, &a), densify(&ty, &b), densify(&ty, &s));
    println!("zero  = {:?}", zero(&ty).unwrap());

    let bag = Ty::bag(Ty::LReal);
    let x = CotValue::bag_one(3, CotValue::real(1.0));
    let y = CotValue::bag_one(1, CotValue::real(4.0));
    let (xy, cost) = plus(&x, &y).unwrap();
    println!("bag sum {:?}, cost {cost}", densify(&bag, &xy));
}
