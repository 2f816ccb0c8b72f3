//! JSON encodings of values, points and cotangents.
//!
//! Values: reals and ints are numbers, unit is `null`, pairs are 2-element
//! arrays, injections are `{"inl": v}` / `{"inr": v}`, arrays are arrays.
//! Cotangents use the densified leaf order: a number for a `Real`, a flat
//! array of leaves otherwise.

use serde_json::{json, Map, Value as Json};

use crate::cotangent::CotValue;
use crate::eval::{leaf_width, Value};
use crate::lang::{Context, Ty};

pub fn encode_value(ty: &Ty, v: &Value) -> Json {
    match (ty, v) {
        (_, Value::Real(x)) => json!(x),
        (_, Value::Int(i)) => json!(i),
        (_, Value::Unit) => Json::Null,
        (Ty::Prod(a, b), Value::Pair(p)) => json!([encode_value(a, &p.0), encode_value(b, &p.1)]),
        (Ty::Sum(a, _), Value::Inl(x)) => json!({ "inl": encode_value(a, x) }),
        (Ty::Sum(_, b), Value::Inr(y)) => json!({ "inr": encode_value(b, y) }),
        (Ty::Array(e), Value::Array(xs)) => Json::Array(xs.iter().map(|x| encode_value(e, x)).collect()),
        (_, v) => json!(v.to_string()),
    }
}

pub fn decode_value(ty: &Ty, j: &Json) -> Result<Value, String> {
    let bad = || format!("`{j}` is not a value of type {ty}");
    Ok(match ty {
        Ty::Real => Value::Real(j.as_f64().ok_or_else(bad)?),
        Ty::Int => Value::Int(j.as_i64().ok_or_else(bad)?),
        Ty::Unit if j.is_null() => Value::Unit,
        Ty::Prod(a, b) => match j.as_array().map(Vec::as_slice) {
            Some([x, y]) => Value::pair(decode_value(a, x)?, decode_value(b, y)?),
            _ => return Err(bad()),
        },
        Ty::Sum(a, b) => {
            let obj = j.as_object().filter(|o| o.len() == 1).ok_or_else(bad)?;
            match (obj.get("inl"), obj.get("inr")) {
                (Some(x), None) => Value::inl(decode_value(a, x)?),
                (None, Some(y)) => Value::inr(decode_value(b, y)?),
                _ => return Err(bad()),
            }
        }
        Ty::Array(e) => {
            Value::array(j.as_array().ok_or_else(bad)?.iter().map(|x| decode_value(e, x)).collect::<Result<_, _>>()?)
        }
        _ => return Err(bad()),
    })
}

/// Parses a point object `{"name": value, ...}` against `ctx`.
pub fn decode_point(ctx: &Context, src: Option<&str>) -> Result<Vec<Value>, String> {
    let obj: Map<String, Json> = match src {
        Some(s) => serde_json::from_str(s).map_err(|e| format!("--point: {e}"))?,
        None => Map::new(),
    };
    let names = ctx.names();
    if let Some(k) = obj.keys().find(|k| !names.contains(k)) {
        return Err(format!("--point: unknown variable `{k}`"));
    }
    names
        .iter()
        .zip(ctx.tys())
        .map(|(n, ty)| {
            let j = obj.get(n).ok_or_else(|| format!("--point: missing variable `{n}`"))?;
            decode_value(&ty, j).map_err(|e| format!("--point: {n}: {e}"))
        })
        .collect()
}

/// Builds the cotangent of `primal : ty` whose densified leaves are `leaves`.
pub fn undensify(ty: &Ty, primal: &Value, leaves: &mut impl Iterator<Item = f64>) -> Result<CotValue, String> {
    let short = || "seed has too few leaves".to_string();
    Ok(match (ty, primal) {
        (Ty::Real, _) => CotValue::Real(leaves.next().ok_or_else(short)?),
        (Ty::Unit | Ty::Int, _) => CotValue::Unit,
        (Ty::Prod(a, b), Value::Pair(p)) => CotValue::pair(undensify(a, &p.0, leaves)?, undensify(b, &p.1, leaves)?),
        (Ty::Sum(a, b), Value::Inl(x)) => {
            let d = undensify(a, x, leaves)?;
            leaves.take(leaf_width(b)).for_each(drop);
            CotValue::inl(d)
        }
        (Ty::Sum(a, b), Value::Inr(y)) => {
            leaves.take(leaf_width(a)).for_each(drop);
            CotValue::inr(undensify(b, y, leaves)?)
        }
        (Ty::Array(e), Value::Array(xs)) => {
            let mut acc = CotValue::BagEmpty;
            for (i, x) in xs.iter().enumerate() {
                let one = CotValue::bag_one(i as i64, undensify(e, x, leaves)?);
                acc = if i == 0 { one } else { CotValue::BagPlus(acc.into(), one.into()) };
            }
            acc
        }
        _ => return Err(format!("cannot seed an output of type {ty}")),
    })
}

/// Parses a seed (a number or an array of leaves) for the output `primal : ty`.
/// Without one, a real output is seeded with 1.
pub fn decode_seed(ty: &Ty, primal: &Value, src: Option<&str>) -> Result<CotValue, String> {
    let leaves: Vec<f64> = match src {
        None if *ty == Ty::Real => vec![1.0],
        None => return Err(format!("--seed is required for outputs of type {ty}")),
        Some(s) => match serde_json::from_str::<Json>(s).map_err(|e| format!("--seed: {e}"))? {
            Json::Number(x) => vec![x.as_f64().unwrap_or(f64::NAN)],
            Json::Array(xs) => xs.iter().map(|x| x.as_f64().ok_or(format!("--seed: `{x}` is not a number"))).collect::<Result<_, _>>()?,
            other => return Err(format!("--seed: expected a number or an array, got `{other}`")),
        },
    };
    let mut it = leaves.iter().copied();
    let d = undensify(ty, primal, &mut it)?;
    match it.next() {
        None => Ok(d),
        Some(_) => Err("seed has too many leaves".into()),
    }
}

/// One entry per variable: a number for `Real`, the dense leaves otherwise.
pub fn encode_gradient(ctx: &Context, dense: &[f64], point: &[Value]) -> Json {
    let mut out = Map::new();
    let mut rest = dense;
    for ((name, ty), v) in ctx.names().into_iter().zip(ctx.tys()).zip(point) {
        let k = v.real_leaves(&ty).len();
        let (mine, tail) = rest.split_at(k.min(rest.len()));
        rest = tail;
        let entry = if ty == Ty::Real && mine.len() == 1 { json!(mine[0]) } else { json!(mine) };
        out.insert(name, entry);
    }
    Json::Object(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chad::densify_against;
    use crate::oracle::random_point;
    use proptest::prelude::*;

    fn ty_strategy() -> impl Strategy<Value = Ty> {
        let leaf = prop_oneof![Just(Ty::Real), Just(Ty::Int), Just(Ty::Unit)];
        leaf.prop_recursive(3, 12, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ty::prod(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ty::sum(a, b)),
                inner.prop_map(Ty::array),
            ]
        })
    }

    proptest! {
        #[test]
        fn values_round_trip(ty in ty_strategy(), seed in 0u64..1000) {
            let ctx = Context::new().with("v", ty.clone());
            let v = random_point(&ctx, seed).unwrap().remove(0);
            prop_assert_eq!(decode_value(&ty, &encode_value(&ty, &v)).unwrap(), v);
        }

        #[test]
        fn seeds_round_trip_through_densify(ty in ty_strategy(), seed in 0u64..1000) {
            let ctx = Context::new().with("v", ty.clone());
            let v = random_point(&ctx, seed).unwrap().remove(0);
            let n = v.real_leaves(&ty).len();
            let leaves: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
            let d = decode_seed(&ty, &v, Some(&json!(leaves).to_string())).unwrap();
            // Slots of inactive sum branches are dropped; the rest survive.
            let dense = densify_against(&ty, &v, &d).unwrap();
            prop_assert_eq!(dense.len(), n);
            prop_assert!(dense.iter().zip(&leaves).all(|(a, b)| *a == 0.0 || a == b));
            let again = decode_seed(&ty, &v, Some(&json!(dense).to_string())).unwrap();
            prop_assert_eq!(densify_against(&ty, &v, &again).unwrap(), dense);
        }
    }

    #[test]
    fn points_are_keyed_by_name() {
        let ctx = Context::new().with("x", Ty::Real).with("p", Ty::prod(Ty::Int, Ty::sum(Ty::Unit, Ty::Real)));
        let pt = decode_point(&ctx, Some(r#"{"p":[3,{"inr":2.5}],"x":1.0}"#)).unwrap();
        assert_eq!(pt, vec![Value::Real(1.0), Value::pair(Value::Int(3), Value::inr(Value::Real(2.5)))]);
        assert!(decode_point(&ctx, Some(r#"{"x":1.0}"#)).unwrap_err().contains("missing variable `p`"));
        assert!(decode_point(&ctx, Some(r#"{"x":1.0,"p":[1,null],"q":0}"#)).unwrap_err().contains("unknown variable `q`"));
    }

    #[test]
    fn seed_defaults_to_one_for_real_outputs() {
        assert_eq!(decode_seed(&Ty::Real, &Value::Real(0.0), None).unwrap(), CotValue::Real(1.0));
        assert!(decode_seed(&Ty::prod(Ty::Real, Ty::Real), &Value::pair(Value::Real(0.0), Value::Real(0.0)), None).is_err());
        assert!(decode_seed(&Ty::Real, &Value::Real(0.0), Some("[1, 2]")).is_err());
    }

    #[test]
    fn gradient_entries_follow_the_context() {
        let ctx = Context::new().with("x", Ty::Real).with("p", Ty::prod(Ty::Real, Ty::Real));
        let pt = [Value::Real(0.0), Value::pair(Value::Real(0.0), Value::Real(0.0))];
        assert_eq!(encode_gradient(&ctx, &[1.0, 2.0, 3.0], &pt).to_string(), r#"{"x":1.0,"p":[2.0,3.0]}"#);
    }
}
