use super::*;
use crate::eval::eval;
use crate::lang::{parse, Program};
use crate::oracle::{grad_fd, grad_forward, max_rel_err};
use proptest::prelude::*;

fn prog(src: &str) -> Program {
    parse(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

/// Nested identity applications of depth `n` over one input.
fn t_n(n: usize) -> Program {
    let mut s = "v1".to_string();
    for k in 2..=n {
        s = format!("(app (lam (v{} Real) {s}) v{k})", k - 1);
    }
    prog(&format!("(program (args (v{n} Real)) {s})"))
}

const HIGHER_ORDER: &[&str] = &[
    "(program (args (y Real)) (app (lam (x Real) x) y))",
    "(program (args (x Real) (y Real)) (let (f (Arrow Real Real)) (lam (z Real) (op mul z y)) (op add (app f x) (app f y))))",
    "(program (args (x Real) (y Real))
       (let (f (Arrow Real Real))
         (case (sign x) (n (lam (z Real) (op mul z y))) (p (lam (z Real) (op sin (op add z x)))))
         (app f (op mul x y))))",
    "(program (args (x Real))
       (let (compose (Arrow (Arrow Real Real) (Arrow Real Real)))
         (lam (g (Arrow Real Real)) (lam (z Real) (app g (app g z))))
         (app (app compose (lam (w Real) (op mul w x))) (op exp x))))",
    "(program (args (xs (Array Real)) (c Real))
       (let (f (Arrow Real Real)) (lam (z Real) (op mul c (op cos z)))
         (fold (p (op add (fst p) (snd p))) (build (length xs) (i (app f (index xs i)))))))",
    "(program (args (x Real) (y Real))
       (let (pf (Prod (Arrow Real Real) Real)) (pair (lam (z Real) (op add z y)) x)
         (app (fst pf) (snd pf))))",
];

fn point_for(p: &Program, seed: u64) -> Vec<Value> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    p.ctx
        .tys()
        .iter()
        .map(|t| match t {
            Ty::Array(_) => Value::array((0..4).map(|_| Value::Real(rng.gen_range(-2.0..2.0))).collect()),
            _ => Value::Real(rng.gen_range(0.2..2.0) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 }),
        })
        .collect()
}

#[test]
fn empty_capture() {
    let p = prog(HIGHER_ORDER[0]);
    let c = closure_convert(&p.ctx, &p.body).unwrap();
    assert_eq!(c.inventory.sites, vec![LambdaSite { id: 0, captures: vec![], arg: Ty::Real, result: Ty::Real }]);
    let mut packs = Vec::new();
    c.term.walk(&mut |t| {
        if let Term::Pack(tag, _, inner) = t {
            packs.push((tag.clone(), inner.clone()));
        }
    });
    assert_eq!(packs.len(), 1);
    assert_eq!(packs[0].0, Ty::Unit);
    assert!(matches!(&*packs[0].1, Term::Pair(u, f) if **u == Term::UnitLit && matches!(**f, Term::ClosedLam { .. })));
}

#[test]
fn captures_are_recorded() {
    let p = prog(HIGHER_ORDER[1]);
    let c = closure_convert(&p.ctx, &p.body).unwrap();
    assert_eq!(c.inventory.sites.len(), 1);
    assert_eq!(c.inventory.sites[0].captures, vec![Ty::Real]);
    let mut tags = Vec::new();
    c.term.walk(&mut |t| {
        if let Term::Pack(tag, ..) = t {
            tags.push(tag.clone());
        }
    });
    assert_eq!(tags, vec![Ty::Real]);
}

#[test]
fn converted_programs_typecheck_and_are_closed() {
    for src in HIGHER_ORDER {
        let p = prog(src);
        let c = closure_convert(&p.ctx, &p.body).unwrap();
        assert_eq!(typecheck(&c.ctx, &c.term).unwrap_or_else(|e| panic!("{src}: {e}")), c.ty);
        let mut lams = 0;
        c.term.walk(&mut |t| lams += usize::from(matches!(t, Term::Lam { .. })));
        assert_eq!(lams, 0);
    }
}

#[test]
fn defunctionalised_programs_are_first_order() {
    for src in HIGHER_ORDER {
        let p = prog(src);
        let fo = defunctionalise(&closure_convert(&p.ctx, &p.body).unwrap()).unwrap_or_else(|e| panic!("{src}: {e}"));
        assert!(fo.ty.is_first_order());
        let mut ok = true;
        fo.term.walk(&mut |t| ok &= t.is_source() && !matches!(t, Term::Lam { .. } | Term::App(..)));
        assert!(ok, "{src}");
    }
}

#[test]
fn single_lambda_dispatch_has_no_case() {
    let p = prog(HIGHER_ORDER[1]);
    let fo = defunctionalise(&closure_convert(&p.ctx, &p.body).unwrap()).unwrap();
    let mut cases = 0;
    fo.term.walk(&mut |t| cases += usize::from(matches!(t, Term::Case { .. })));
    assert_eq!(cases, 0);
}

#[test]
fn two_lambdas_dispatch_by_case() {
    let p = prog(HIGHER_ORDER[2]);
    let fo = defunctionalise(&closure_convert(&p.ctx, &p.body).unwrap()).unwrap();
    // One case from the source, one dispatch at the call.
    let mut cases = 0;
    fo.term.walk(&mut |t| cases += usize::from(matches!(t, Term::Case { .. })));
    assert_eq!(cases, 2);
    for x in [-0.7, 0.9] {
        let pt = vec![Value::Real(x), Value::Real(1.3)];
        let g = grad_ho(HoMode::Defunctionalise, &p.ctx, &p.body, &pt, &CotValue::Real(1.0)).unwrap();
        let dense = chad::densify_gradient(&p.ctx, &pt, &g.env).unwrap();
        let fd = grad_fd(&p.ctx, &p.body, &pt).unwrap();
        assert!(max_rel_err(&dense, &fd) < 1e-5, "{dense:?} {fd:?}");
    }
}

#[test]
fn gradients_agree_with_the_oracles() {
    for src in HIGHER_ORDER {
        let p = prog(src);
        for seed in 0..5 {
            let pt = point_for(&p, seed);
            let fw = grad_forward(&p.ctx, &p.body, &pt).unwrap();
            for mode in HoMode::ALL {
                if mode == HoMode::NaiveHo && p.body.mentions_array() {
                    continue;
                }
                let g = grad_ho(mode, &p.ctx, &p.body, &pt, &CotValue::Real(1.0)).unwrap_or_else(|e| panic!("{mode} {src}: {e}"));
                let dense = chad::densify_gradient(&p.ctx, &pt, &g.env).unwrap();
                assert!(max_rel_err(&dense, &fw) <= 1e-10, "{mode} {src}: {dense:?} vs {fw:?}");
            }
        }
    }
}

#[test]
fn derivatives_typecheck() {
    for src in HIGHER_ORDER {
        let p = prog(src);
        let c = closure_convert(&p.ctx, &p.body).unwrap();
        let d = chad_closed(&c).unwrap();
        assert_eq!(typecheck(&d.ctx, &d.term).unwrap_or_else(|e| panic!("closed {src}: {e}")), d.ty);
        if !p.body.mentions_array() {
            let d = chad_naive_ho(&p.ctx, &p.body).unwrap();
            assert_eq!(typecheck(&d.ctx, &d.term).unwrap_or_else(|e| panic!("naive {src}: {e}")), d.ty);
        }
    }
}

#[test]
fn identity_application_passes_the_seed_through() {
    let p = prog(HIGHER_ORDER[0]);
    for mode in HoMode::ALL {
        let g = grad_ho(mode, &p.ctx, &p.body, &[Value::Real(4.0)], &CotValue::Real(0.5)).unwrap();
        assert_eq!(g.env.0, vec![CotValue::Real(0.5)], "{mode}");
    }
}

#[test]
fn closed_lambda_has_no_cotangent() {
    let p = prog(HIGHER_ORDER[0]);
    let c = closure_convert(&p.ctx, &p.body).unwrap();
    let d = chad_closed(&c).unwrap();
    let mut found = false;
    d.term.walk(&mut |t| {
        if let Term::Pair(f, bp) = t {
            if matches!(**f, Term::ClosedLam { .. }) {
                found = true;
                let Term::Lam { ty, body, .. } = &**bp else { panic!("backpropagator is a lambda") };
                assert_eq!(*ty, Ty::LUnit);
                assert!(matches!(**body, Term::EvmReturn(_, ref u) if **u == Term::UnitLit));
            }
        }
    });
    assert!(found);
}

fn cost(mode: HoMode, n: usize) -> u64 {
    crate::with_big_stack(|| {
        let p = t_n(n);
        let g = grad_ho(mode, &p.ctx, &p.body, &[Value::Real(1.5)], &CotValue::Real(1.0)).unwrap();
        assert_eq!(g.env.0, vec![CotValue::Real(1.0)]);
        g.cost
    })
}

#[test]
fn naive_cost_doubles_per_nesting_level() {
    let costs: Vec<u64> = (4..=12).map(|n| cost(HoMode::NaiveHo, n)).collect();
    for w in costs.windows(2).skip(4) {
        let r = w[1] as f64 / w[0] as f64;
        assert!((1.8..=2.2).contains(&r), "{costs:?}");
    }
}

#[test]
fn fixed_paths_are_linear() {
    for mode in [HoMode::Defunctionalise, HoMode::ClosureChad] {
        let mut n = 64;
        while n < 1024 {
            let r = cost(mode, 2 * n) as f64 / cost(mode, n) as f64;
            assert!(r <= 2.3, "{mode} n={n}: {r}");
            n *= 2;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]
    #[test]
    fn conversion_preserves_values(seed in 0u64..1000, which in 0usize..HIGHER_ORDER.len()) {
        let p = prog(HIGHER_ORDER[which]);
        let pt = point_for(&p, seed);
        let (want, _) = eval(&pt, &p.body).unwrap();
        let c = closure_convert(&p.ctx, &p.body).unwrap();
        prop_assert_eq!(&eval(&pt, &c.term).unwrap().0, &want);
        let fo = defunctionalise(&c).unwrap();
        prop_assert_eq!(&eval(&pt, &fo.term).unwrap().0, &want);
    }
}
