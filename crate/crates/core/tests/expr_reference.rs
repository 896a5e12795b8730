//! Compiled expressions against a direct tree walk.

use std::collections::BTreeMap;

use meanfield_core::expr::{BinOp, Func};
use meanfield_core::{Error, Expr, Scope};
use proptest::prelude::*;

const STATES: [&str; 3] = ["U", "S", "X"];

fn reference(e: &Expr, params: &BTreeMap<String, f64>, m: &[f64], a: &[f64]) -> Result<f64, Error> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::State(name) => m[STATES.iter().position(|s| s == name).unwrap()],
        Expr::Action(k) => a[*k],
        Expr::Param(name) => params[name],
        Expr::Neg(x) => -reference(x, params, m, a)?,
        Expr::Bin(op, l, r) => {
            let (l, r) = (reference(l, params, m, a)?, reference(r, params, m, a)?);
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div if r == 0.0 => return Err(Error::DivisionByZero),
                BinOp::Div => l / r,
            }
        }
        Expr::Call(f, args) => {
            let vals = args.iter().map(|x| reference(x, params, m, a)).collect::<Result<Vec<_>, _>>()?;
            match f {
                Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Func::Exp => vals[0].exp(),
                Func::Log if vals[0] <= 0.0 => return Err(Error::LogDomain(vals[0])),
                Func::Log => vals[0].ln(),
            }
        }
    })
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..3.0).prop_map(|v| Expr::Num((v * 8.0).round() / 8.0)),
        prop::sample::select(STATES.to_vec()).prop_map(Expr::state),
        (0usize..2).prop_map(Expr::Action),
        prop::sample::select(vec!["p", "q"]).prop_map(|p| Expr::Param(p.to_string())),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Expr::bin(op, l, r)),
            (prop::sample::select(vec![Func::Min, Func::Max]), prop::collection::vec(inner.clone(), 1..4))
                .prop_map(|(f, args)| Expr::Call(f, args)),
            inner.clone().prop_map(|e| Expr::Call(Func::Exp, vec![Expr::Call(Func::Min, vec![e, Expr::Num(5.0)])])),
            inner.prop_map(|e| Expr::Call(Func::Log, vec![e])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn compiled_matches_tree_walk(
        e in expr(),
        raw in prop::collection::vec(0.01f64..1.0, 3),
        a in prop::collection::vec(0.0f64..1.0, 2),
        p in 0.0f64..2.0,
        q in 0.0f64..2.0,
    ) {
        let total: f64 = raw.iter().sum();
        let m: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let states: Vec<String> = STATES.iter().map(|s| s.to_string()).collect();
        let params = BTreeMap::from([("p".to_string(), p), ("q".to_string(), q)]);
        let scope = Scope { states: &states, params: &params, action_arity: 2 };
        let got = e.compile(&scope).unwrap().eval(&m, &a);
        match (got, reference(&e, &params, &m, &a)) {
            (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{e}: {x} vs {y}");
            }
            (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{e}: {x:?} vs {y:?}"),
        }
    }

    #[test]
    fn display_round_trips(e in expr()) {
        prop_assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
    }
}
