//! Primitive operations: primal arithmetic and transposed derivatives.

use crate::lang::Op;

use super::EvalError;

/// Registry entry for a primitive operation.
#[derive(Clone, Copy)]
pub struct OpDef {
    pub op: Op,
    pub arity: usize,
    pub primal: fn(&[f64]) -> Option<f64>,
    pub transpose: fn(&[f64], f64) -> Option<Vec<f64>>,
}

impl std::fmt::Debug for OpDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OpDef({})", self.op.name())
    }
}

pub fn op_def(op: Op) -> OpDef {
    let (primal, transpose): (fn(&[f64]) -> Option<f64>, fn(&[f64], f64) -> Option<Vec<f64>>) =
        match op {
            Op::Add => (|x| Some(x[0] + x[1]), |_, d| Some(vec![d, d])),
            Op::Mul => (|x| Some(x[0] * x[1]), |x, d| Some(vec![d * x[1], d * x[0]])),
            Op::Sub => (|x| Some(x[0] - x[1]), |_, d| Some(vec![d, -d])),
            Op::Neg => (|x| Some(-x[0]), |_, d| Some(vec![-d])),
            Op::Recip => (
                |x| (x[0] != 0.0).then(|| 1.0 / x[0]),
                |x, d| (x[0] != 0.0).then(|| vec![-d / (x[0] * x[0])]),
            ),
            Op::Sin => (|x| Some(x[0].sin()), |x, d| Some(vec![d * x[0].cos()])),
            Op::Cos => (|x| Some(x[0].cos()), |x, d| Some(vec![-d * x[0].sin()])),
            Op::Exp => (|x| Some(x[0].exp()), |x, d| Some(vec![d * x[0].exp()])),
            Op::Log => (
                |x| (x[0] > 0.0).then(|| x[0].ln()),
                |x, d| (x[0] > 0.0).then(|| vec![d / x[0]]),
            ),
        };
    OpDef { op, arity: op.arity(), primal, transpose }
}

fn partial(op: Op, args: &[f64]) -> EvalError {
    EvalError::PartialOp { op: op.name(), args: args.to_vec() }
}

pub fn apply_op(op: Op, args: &[f64]) -> Result<f64, EvalError> {
    let def = op_def(op);
    if args.len() != def.arity {
        return Err(EvalError::Stuck(format!("`{}` applied to {} argument(s)", op.name(), args.len())));
    }
    (def.primal)(args).ok_or_else(|| partial(op, args))
}

/// The cotangent tuple `d · ∂op/∂x_i` at `primals`.
pub fn apply_op_transpose(op: Op, primals: &[f64], d: f64) -> Result<Vec<f64>, EvalError> {
    let def = op_def(op);
    if primals.len() != def.arity {
        return Err(EvalError::Stuck(format!("`{}` applied to {} argument(s)", op.name(), primals.len())));
    }
    (def.transpose)(primals, d).ok_or_else(|| partial(op, primals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn primal_examples() {
        assert_eq!(apply_op(Op::Mul, &[3.0, 2.0]).unwrap(), 6.0);
        assert_eq!(apply_op(Op::Add, &[1.5, 2.0]).unwrap(), 3.5);
        assert!(matches!(apply_op(Op::Log, &[-1.0]), Err(EvalError::PartialOp { .. })));
        assert!(matches!(apply_op(Op::Recip, &[0.0]), Err(EvalError::PartialOp { .. })));
    }

    #[test]
    fn transpose_examples() {
        assert_eq!(apply_op_transpose(Op::Mul, &[3.0, 2.0], 1.0).unwrap(), vec![2.0, 3.0]);
        assert_eq!(apply_op_transpose(Op::Add, &[7.0, -1.0], 0.5).unwrap(), vec![0.5, 0.5]);
        assert_eq!(apply_op_transpose(Op::Sin, &[0.0], 1.0).unwrap(), vec![1.0]);
    }

    fn in_domain(op: Op) -> impl Strategy<Value = Vec<f64>> {
        let x = match op {
            Op::Log | Op::Recip => (0.1f64..10.0).boxed(),
            _ => (-10.0f64..10.0).boxed(),
        };
        proptest::collection::vec(x, op.arity())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn transpose_matches_central_differences(
            op in proptest::sample::select(Op::ALL.to_vec()).prop_flat_map(|op| (Just(op), in_domain(op))),
            d in -3.0f64..3.0,
        ) {
            let (op, xs) = op;
            let got = apply_op_transpose(op, &xs, d).unwrap();
            for i in 0..xs.len() {
                let h = 1e-6 * xs[i].abs().max(1.0);
                let (mut up, mut dn) = (xs.clone(), xs.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = d * (apply_op(op, &up).unwrap() - apply_op(op, &dn).unwrap()) / (2.0 * h);
                prop_assert!((got[i] - fd).abs() <= 1e-5 * (1.0 + d.abs()), "{op:?} {xs:?}: {} vs {fd}", got[i]);
            }
        }
    }
}
