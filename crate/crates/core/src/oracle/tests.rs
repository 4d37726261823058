use std::collections::BTreeMap;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::engine::{ColumnInfo, EngineSpec};
use crate::expr_gen::OuterTables;
use crate::schema::{Column, Relation, RelationKind};
use crate::state_gen::{apply_state, generate_state, StateConfig};

fn session() -> Session {
    Session::open(&EngineSpec::bundled_sqlite(), Duration::from_secs(5)).unwrap()
}

fn result(rows: Vec<Vec<SqlValue>>) -> QueryResult {
    let width = rows.first().map_or(1, |r| r.len());
    QueryResult {
        columns: (0..width).map(|i| ColumnInfo { name: format!("c{i}"), declared_type: None }).collect(),
        rows,
        ordered: false,
    }
}

fn t0() -> BTreeMap<String, Relation> {
    BTreeMap::from([(
        "t0".to_owned(),
        Relation { name: "t0".into(), kind: RelationKind::Table, columns: vec![Column::untyped("c0"), Column::untyped("c1")] },
    )])
}

fn dependent_candidate() -> FoldCandidate {
    let phi = Expr::binary(
        BinaryOp::Gt,
        Expr::binary(BinaryOp::Add, Expr::col("t0", "c0"), Expr::col("t0", "c1")),
        Expr::lit(0),
    );
    let outer = OuterTables { from: Some(FromClause::single(TableFactor::table("t0"))), join_on: None };
    FoldCandidate::new(phi, PhiShape::Scalar, outer, t0())
}

#[test]
fn auxiliary_lists_keys_then_expression() {
    let r = Renderer::sqlite();
    let aux = build_auxiliary(&dependent_candidate());
    assert_eq!(
        r.query(&aux).unwrap(),
        r#"SELECT "t0"."c0", "t0"."c1", (("t0"."c0" + "t0"."c1") > 0) FROM "t0""#
    );
}

#[test]
fn dependent_fold_maps_each_key() {
    let cand = dependent_candidate();
    let aux = result(vec![
        vec![0.into(), 0.into(), 0.into()],
        vec![1.into(), 1.into(), 1.into()],
        vec![1.into(), 1.into(), 1.into()],
    ]);
    let folded = fold(&cand, &aux, 256).unwrap();
    assert_eq!(folded.len(), 2);
    assert_eq!(
        Renderer::sqlite().expr(&folded.to_expr()).unwrap(),
        r#"CASE WHEN (("t0"."c0" IS 0) AND ("t0"."c1" IS 0)) THEN 0 WHEN (("t0"."c0" IS 1) AND ("t0"."c1" IS 1)) THEN 1 END"#
    );
}

#[test]
fn fold_discards() {
    let cand = dependent_candidate();
    let empty = QueryResult { rows: vec![], ..result(vec![vec![0.into(), 0.into(), 0.into()]]) };
    assert_eq!(fold(&cand, &empty, 256).unwrap_err().0, DiscardReason::EmptyAuxiliary);
    let many = result((0..10).map(|i| vec![i.into(), 0.into(), 0.into()]).collect());
    assert_eq!(fold(&cand, &many, 5).unwrap_err().0, DiscardReason::MappingTooLarge);
    let clash = result(vec![vec![0.into(), 0.into(), 0.into()], vec![0.into(), 0.into(), 1.into()]]);
    assert_eq!(fold(&cand, &clash, 256).unwrap_err().0, DiscardReason::InconsistentMapping);
    let real = result(vec![vec![0.into(), 0.into(), SqlValue::Real(0.1)]]);
    assert_eq!(fold(&cand, &real, 256).unwrap_err().0, DiscardReason::RealValue);
    // Binary fractions render exactly and are kept.
    let half = result(vec![vec![0.into(), 0.into(), SqlValue::Real(0.5)]]);
    assert!(fold(&cand, &half, 256).is_ok());
    // Integer 1 and real 1.0 are the same key to `IS`.
    let mixed = result(vec![vec![1.into(), 0.into(), 0.into()], vec![SqlValue::Real(1.0), 0.into(), 2.into()]]);
    assert_eq!(fold(&cand, &mixed, 256).unwrap_err().0, DiscardReason::InconsistentMapping);
}

#[test]
fn independent_fold_reads_empty_as_null() {
    let cand = FoldCandidate::new(Expr::lit(1), PhiShape::Scalar, OuterTables::none(), BTreeMap::new());
    let empty = QueryResult::default();
    assert_eq!(fold(&cand, &empty, 256).unwrap(), FoldedConstant::Scalar(SqlValue::Null));
}

#[test]
fn text_keys_compare_binary() {
    let keys = vec![MappingKey { column: ColumnRef::new("t0", "c0"), strip_affinity: true }];
    let f = FoldedConstant::RowMapping { keys, entries: vec![(vec!["a".into()], 1.into())] };
    assert_eq!(
        Renderer::sqlite().expr(&f.to_expr()).unwrap(),
        r#"CASE WHEN ((+ "t0"."c0") IS ('a' COLLATE BINARY)) THEN 1 END"#
    );
}

#[test]
fn compare_semantics() {
    let a = result(vec![vec![1.into()], vec![2.into()]]);
    let b = result(vec![vec![2.into()], vec![1.into()]]);
    assert_eq!(compare(&a, &b, 1e-9), Comparison::Equal);
    let (ao, bo) = (a.clone().with_ordered(true), b.clone().with_ordered(true));
    assert!(matches!(compare(&ao, &bo, 1e-9), Comparison::Unequal(_)));
    let n1 = result(vec![vec![SqlValue::Null]]);
    assert_eq!(compare(&n1, &n1.clone(), 1e-9), Comparison::Equal);
    let r1 = result(vec![vec![SqlValue::Real(1.0)]]);
    let r2 = result(vec![vec![SqlValue::Real(1.0 + 1e-12)]]);
    assert_eq!(compare(&r1, &r2, 1e-9), Comparison::Equal);
    let i1 = result(vec![vec![1.into()]]);
    assert!(matches!(compare(&i1, &r1, 1e-9), Comparison::Unequal(_)));
    assert!(matches!(compare(&a, &i1, 1e-9), Comparison::Unequal(_)));
}

#[test]
fn mode_names_round_trip() {
    for m in [OracleMode::Combined, OracleMode::Expressions, OracleMode::Subqueries, OracleMode::Relations] {
        assert_eq!(m.name().parse::<OracleMode>().unwrap(), m);
    }
}

/// Short soak on the bundled engine: every placement and relation form
/// occurs and no iteration reports a discrepancy.
#[test]
fn short_soak_is_clean() {
    let mut s = session();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = OracleConfig::default();
    let mut outcomes: BTreeMap<String, usize> = BTreeMap::new();
    let mut sites: BTreeMap<String, usize> = BTreeMap::new();
    for state_seed in 0..30 {
        let state = generate_state(state_seed, &StateConfig::default());
        s.reset().unwrap();
        apply_state(&state, &mut s).unwrap();
        for _ in 0..100 {
            let v = run_any(&state, &mut s, &mut rng, &config);
            if v.outcome.is_reportable() {
                panic!(
                    "{}: {}\n{}\nA: {}\nO: {:#?}\nF: {:#?}",
                    v.outcome.name(),
                    v.reason,
                    state.creation_script.join(";\n"),
                    v.triple.auxiliary,
                    v.triple.original,
                    v.triple.folded
                );
            }
            *outcomes.entry(v.outcome.name()).or_default() += 1;
            if let Some(c) = &v.case {
                *sites.entry(c.site()).or_default() += 1;
            }
        }
    }
    eprintln!("{outcomes:#?}\n{sites:#?}");
    assert!(outcomes.get("pass").copied().unwrap_or(0) > 1000);
}
