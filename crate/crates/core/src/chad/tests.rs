use super::*;
use crate::lang::{parse, typecheck};

fn prog(src: &str) -> crate::lang::Program {
    parse(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

fn reals(xs: &[f64]) -> Vec<Value> {
    xs.iter().map(|x| Value::Real(*x)).collect()
}

fn dense(mode: Mode, src: &str, point: &[Value], seed: CotValue) -> Vec<f64> {
    let p = prog(src);
    let g = grad(&TransformConfig::new(mode), &p.ctx, &p.body, point, &seed).unwrap();
    densify_gradient(&p.ctx, point, &g.env).unwrap()
}

const FIRST_ORDER: &[&str] = &[
    "(program (args (x Real) (y Real)) (op mul x y))",
    "(program (args (x Real)) (let (z Real) (op add x x) z))",
    "(program (args (x Real) (y Real)) (fst (pair x y)))",
    "(program (args (x Real)) (case (sign x) (n (op neg x)) (p (op mul x x))))",
    "(program (args (x Real) (y Real)) (let (s (Sum Real Real)) (inl x (Sum Real Real)) (case s (a (op mul a y)) (b b))))",
    "(program (args (x (Prod Real Real))) (snd (pair (snd x) (op sin (fst x)))))",
    "(program (args (x Real) (n Int)) (let (u Unit) unit (op exp x)))",
];

#[test]
fn type_translations() {
    assert_eq!(d2_type(&Ty::prod(Ty::Real, Ty::Real)).unwrap(), Ty::lprod(Ty::LReal, Ty::LReal));
    assert_eq!(d2_type(&Ty::array(Ty::Real)).unwrap(), Ty::bag(Ty::LReal));
    assert_eq!(d2_type(&Ty::Int).unwrap(), Ty::LUnit);
    let b = Ty::sum(Ty::Unit, Ty::Unit);
    assert_eq!(d1_type(&b).unwrap(), b);
    assert!(matches!(d1_type(&Ty::arrow(Ty::Real, Ty::Real)), Err(TransformError::UnsupportedType(_))));
}

#[test]
fn outputs_typecheck_in_every_mode() {
    for src in FIRST_ORDER {
        let p = prog(src);
        for mode in Mode::ALL {
            let d = chad_transform(&TransformConfig::new(mode), &p.ctx, &p.body).unwrap();
            let ty = typecheck(&d.ctx, &d.term).unwrap_or_else(|e| panic!("{mode} {src}: {e}"));
            assert_eq!(ty, d.ty, "{mode} {src}");
            let want_r = match mode {
                Mode::Monadic => Ty::evm(CotCtx::from_tys(p.ctx.tys().iter().map(|t| d2_type(t).unwrap())), Ty::Unit),
                _ => Ty::Env(CotCtx::from_tys(p.ctx.tys().iter().map(|t| d2_type(t).unwrap()))),
            };
            let Ty::Prod(_, bp) = ty else { panic!() };
            assert_eq!(*bp, Ty::arrow(d2_type(&d.source_ty).unwrap(), want_r));
        }
    }
}

use crate::lang::CotCtx;

#[test]
fn every_source_node_is_transformed_once() {
    for src in FIRST_ORDER.iter().chain(ARRAYS) {
        let p = prog(src);
        let d = chad_transform(&TransformConfig::new(Mode::Monadic), &p.ctx, &p.body).unwrap();
        let mut nodes = Vec::new();
        d.source.walk(&mut |t| nodes.push(t as *const Term as usize));
        let mut visited = d.visited.clone();
        nodes.sort_unstable();
        visited.sort_unstable();
        assert_eq!(nodes, visited, "{src}");
    }
}

#[test]
fn product_rule() {
    for mode in Mode::ALL {
        let g = dense(mode, FIRST_ORDER[0], &reals(&[3.0, 2.0]), CotValue::Real(1.0));
        assert_eq!(g, vec![2.0, 3.0]);
    }
}

#[test]
fn shared_variable_accumulates() {
    for mode in Mode::ALL {
        assert_eq!(dense(mode, FIRST_ORDER[1], &reals(&[5.0]), CotValue::Real(1.0)), vec![2.0]);
    }
}

#[test]
fn projection_is_one_hot() {
    let p = prog(FIRST_ORDER[2]);
    let g = grad(&TransformConfig::new(Mode::Monadic), &p.ctx, &p.body, &reals(&[1.0, 2.0]), &CotValue::Real(0.25)).unwrap();
    assert_eq!(g.env.0[0], CotValue::Real(0.25));
    assert_eq!(densify_gradient(&p.ctx, &reals(&[1.0, 2.0]), &g.env).unwrap(), vec![0.25, 0.0]);
}

#[test]
fn case_takes_the_active_branch() {
    for mode in Mode::ALL {
        assert_eq!(dense(mode, FIRST_ORDER[3], &reals(&[-2.0]), CotValue::Real(1.0)), vec![-1.0]);
        assert_eq!(dense(mode, FIRST_ORDER[3], &reals(&[3.0]), CotValue::Real(1.0)), vec![6.0]);
        assert_eq!(dense(mode, FIRST_ORDER[4], &reals(&[3.0, 4.0]), CotValue::Real(1.0)), vec![4.0, 3.0]);
    }
}

const ARRAYS: &[&str] = &[
    "(program (args (xs (Array Real))) (fold (p (op add (fst p) (snd p))) (build (length xs) (i (index xs i)))))",
    "(program (args (xs (Array Real)) (y Real)) (fold (p (op mul (fst p) (snd p))) (build (length xs) (i (op mul y (index xs i))))))",
    "(program (args (xs (Array Real))) (op add (index xs 0i) (op mul (index xs 0i) (index xs 2i))))",
];

#[test]
fn fold_of_build_gives_ones() {
    let xs = Value::array(reals(&[1.0, 2.0, 3.0, 4.0, 5.0]));
    let g = dense(Mode::Monadic, ARRAYS[0], &[xs], CotValue::Real(1.0));
    assert_eq!(g, vec![1.0; 5]);
}

#[test]
fn array_products() {
    let xs = Value::array(reals(&[1.0, 2.0, 3.0]));
    // prod_i (y x_i) = y^3 x1 x2 x3
    let g = dense(Mode::Monadic, ARRAYS[1], &[xs.clone(), Value::Real(2.0)], CotValue::Real(1.0));
    assert_eq!(g, vec![48.0, 24.0, 16.0, 3.0 * 4.0 * 6.0]);
    let g = dense(Mode::Monadic, ARRAYS[2], &[xs], CotValue::Real(1.0));
    assert_eq!(g, vec![4.0, 0.0, 1.0]);
}

#[test]
fn naive_modes_reject_arrays() {
    let p = prog(ARRAYS[0]);
    for mode in [Mode::NaiveDense, Mode::NaiveTreeMap] {
        let err = chad_transform(&TransformConfig::new(mode), &p.ctx, &p.body).unwrap_err();
        assert!(matches!(err, TransformError::UnsupportedConstruct { .. }), "{err}");
        let cfg = TransformConfig { mode, arrays: true };
        assert_eq!(chad_transform(&cfg, &p.ctx, &p.body).unwrap_err(), TransformError::ArraysNeedMonadic(mode));
    }
}

#[test]
fn primal_half_matches_the_source() {
    for src in FIRST_ORDER {
        let p = prog(src);
        let point: Vec<Value> = p
            .ctx
            .tys()
            .iter()
            .map(|t| match t {
                Ty::Int => Value::Int(3),
                Ty::Prod(..) => Value::pair(Value::Real(0.5), Value::Real(1.5)),
                _ => Value::Real(0.7),
            })
            .collect();
        let (want, _) = crate::eval::eval(&point, &p.body).unwrap();
        for mode in Mode::ALL {
            let (got, _) = primal(&TransformConfig::new(mode), &p.ctx, &p.body, &point).unwrap();
            assert_eq!(got, want, "{mode} {src}");
        }
    }
}

#[test]
fn mode_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
    }
    assert!("fast".parse::<Mode>().is_err());
}

#[test]
fn array_outputs_typecheck() {
    for src in ARRAYS {
        let p = prog(src);
        let d = chad_transform(&TransformConfig::new(Mode::Monadic), &p.ctx, &p.body).unwrap();
        let ty = typecheck(&d.ctx, &d.term).unwrap_or_else(|e| panic!("{src}: {e}\n{}", crate::lang::pretty_in(&d.ctx, &d.term)));
        assert_eq!(ty, d.ty);
    }
}
