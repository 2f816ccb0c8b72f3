use super::*;
use crate::lang::{parse, typecheck, Op, Term, Ty};
use proptest::prelude::*;

fn v(l: usize) -> crate::lang::T {
    crate::lang::rc(Term::Var(l))
}

fn add(a: crate::lang::T, b: crate::lang::T) -> crate::lang::T {
    crate::lang::rc(Term::PrimOp(Op::Add, vec![a, b]))
}

#[test]
fn t_magic_is_a_balanced_add_tree() {
    let p = gen_family(Family::TMagic, 4).unwrap();
    assert_eq!(p.ctx.names(), ["x1", "x2", "x3", "x4"]);
    assert_eq!(p.body, add(add(v(0), v(1)), add(v(2), v(3))));
}

#[test]
fn t_n_nests_identities() {
    let p = gen_family(Family::TN, 2).unwrap();
    let want = parse("(program (args (x2 Real)) (app (lam (x1 Real) x1) x2))").unwrap();
    assert_eq!(p, want);
    let p = gen_family(Family::TN, 3).unwrap();
    let want = parse("(program (args (x3 Real)) (app (lam (x2 Real) (app (lam (x1 Real) x1) x2)) x3))").unwrap();
    assert_eq!(p, want);
}

#[test]
fn deep_let_doubles() {
    let p = gen_family(Family::DeepLet, 3).unwrap();
    let want = parse(
        "(program (args (x Real))
           (let (a1 Real) (op mul 2.0 x) (let (a2 Real) (op mul 2.0 a1) (let (a3 Real) (op mul 2.0 a2) a3))))",
    )
    .unwrap();
    assert_eq!(p, want);
    let (out, _) = eval(&[Value::Real(1.5)], &p.body).unwrap();
    assert_eq!(out, Value::Real(12.0));
}

#[test]
fn sizes_out_of_range() {
    for (f, n) in [(Family::TMagic, 3), (Family::TMagic, 0), (Family::TN, 0), (Family::TN, 5000), (Family::DeepLet, 0)] {
        assert!(matches!(gen_family(f, n), Err(BenchError::SizeOutOfRange { .. })), "{f} {n}");
    }
}

#[test]
fn t_n_is_the_identity() {
    for n in [1, 2, 7, 40] {
        let p = gen_family(Family::TN, n).unwrap();
        assert_eq!(eval(&[Value::Real(0.3)], &p.body).unwrap().0, Value::Real(0.3));
    }
}

#[test]
fn primal_cost_is_linear() {
    for f in Family::ALL {
        if f == Family::TN {
            continue;
        }
        for n in [256, 512, 1024] {
            let c = |n| crate::with_big_stack(|| {
                let p = gen_family(f, n).unwrap();
                eval(&family_point(f, n), &p.body).unwrap().1
            });
            let r = c(2 * n) as f64 / c(n) as f64;
            assert!((1.8..=2.2).contains(&r), "{f} {n}: {r}");
        }
    }
}

#[test]
fn sweeps() {
    assert_eq!(Rule::Doubling.sweep(4, 7).unwrap(), vec![4, 5, 6, 7]);
    assert_eq!(Rule::FlatRatio.sweep(64, 512).unwrap(), vec![64, 128, 256, 512]);
    assert!(Rule::Linear.sweep(64, 500).is_err());
    assert!(Rule::Linear.sweep(8, 4).is_err());
    assert!(regression_check(Family::DeepLet, "monadic".parse().unwrap(), &[64, 128, 256], Rule::FlatRatio).is_err());
}

fn row(n: usize, cost: u64, adj: f64) -> Row {
    Row {
        n,
        m: Measurement { cost_primal: 1, cost_derivative: cost, ratio: adj, adjusted_ratio: adj, n_ctx: 1, seed_size: 1 },
    }
}

#[test]
fn rules_on_synthetic_rows() {
    let flat = [row(64, 10, 10.0), row(128, 20, 11.0), row(256, 40, 11.9)];
    assert!(Rule::FlatRatio.holds(&flat));
    assert!(!Rule::LogGrowth.holds(&flat));
    let grow = [row(64, 10, 10.0), row(128, 20, 13.0), row(256, 40, 15.0)];
    assert!(!Rule::FlatRatio.holds(&grow));
    assert!(Rule::LogGrowth.holds(&grow));
    assert!(Rule::Linear.holds(&grow));
    // Below DOUBLING_FROM the band is not judged.
    let dbl = [row(6, 10, 0.0), row(7, 25, 0.0), row(8, 50, 0.0), row(9, 100, 0.0), row(10, 190, 0.0)];
    assert!(Rule::Doubling.holds(&dbl));
    assert!(!Rule::Doubling.holds(&[row(8, 50, 0.0), row(9, 120, 0.0)]));
    assert!(!Rule::Linear.holds(&[row(64, 10, 0.0), row(128, 24, 0.0)]));
}

#[test]
fn mode_and_rule_names_round_trip() {
    for m in AnyMode::ALL {
        assert_eq!(m.name().parse::<AnyMode>().unwrap(), m);
    }
    for r in Rule::ALL {
        assert_eq!(r.name().parse::<Rule>().unwrap(), r);
    }
    for f in Family::ALL {
        assert_eq!(f.name().parse::<Family>().unwrap(), f);
    }
    assert!("fast".parse::<AnyMode>().is_err());
}

#[test]
fn identity_ratio_is_a_small_constant() {
    let p = parse("(program (args (x Real)) x)").unwrap();
    let m = measure(&p, "monadic".parse().unwrap(), &[Value::Real(2.0)], &CotValue::Real(1.0)).unwrap();
    assert_eq!(m.cost_primal, 1);
    assert!(m.ratio < 30.0, "{m:?}");
}

#[test]
fn naive_ho_doubling_example() {
    let r = regression_check(Family::TN, "naive-ho".parse().unwrap(), &Rule::Doubling.sweep(4, 12).unwrap(), Rule::Doubling)
        .unwrap();
    assert!(r.pass, "{}", r.to_json());
}

#[test]
fn monadic_is_flat_and_reports_are_deterministic() {
    let sizes = Rule::FlatRatio.sweep(64, 1024).unwrap();
    let go = || regression_check(Family::TMagic, "monadic".parse().unwrap(), &sizes, Rule::FlatRatio).unwrap();
    let (a, b) = (go(), go());
    assert!(a.pass);
    assert_eq!(a.to_json(), b.to_json());
    let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["family", "mode", "rows", "rule", "pass", "trend"]);
    let row_keys: Vec<&str> = json["rows"][0].as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(&row_keys[..4], ["n", "cost_primal", "cost_derivative", "ratio"]);
    assert_eq!(json["family"], "t_magic");
    assert_eq!(json["rule"], "flat-ratio");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn families_typecheck(which in 0usize..6, k in 0u32..7) {
        let f = Family::ALL[which];
        let n = 1usize << k;
        let p = gen_family(f, n).unwrap();
        prop_assert_eq!(typecheck(&p.ctx, &p.body).unwrap(), Ty::Real);
        prop_assert_eq!(family_point(f, n).len(), p.ctx.len());
    }
}
