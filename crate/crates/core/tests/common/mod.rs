//! Hand-built test cases shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Duration;

use coddtest::ast::{BinaryOp, Expr, FromClause, Join, JoinKind, Query, Select, SelectItem, Statement, TableFactor};
use coddtest::engine::{EngineProfile, EngineSpec, Session};
use coddtest::expr_gen::{FoldCandidate, OuterTables, PhiShape};
use coddtest::oracle::{Placement, RelationForm, Step, TestCase, RELATION_ALIAS};
use coddtest::schema::{Affinity, Collation, Column, Relation, RelationKind};

pub fn bundled() -> Session {
    Session::open(&EngineSpec::bundled_sqlite(), Duration::from_secs(10)).unwrap()
}

pub fn legacy_spec() -> EngineSpec {
    EngineSpec::sqlite_from_path(EngineProfile::sqlite(), coddtest_sqlite_legacy::library_path()).unwrap()
}

pub fn legacy() -> Session {
    Session::open(&legacy_spec(), Duration::from_secs(10)).unwrap()
}

pub fn column(name: &str, declared: Option<&str>) -> Column {
    Column {
        name: name.into(),
        type_name: declared.map(str::to_owned),
        affinity: Affinity::of_declared_type(declared),
        collation: Collation::Binary,
        nullable: true,
        unique: false,
    }
}

pub fn relation(name: &str, kind: RelationKind, columns: Vec<Column>) -> Relation {
    Relation { name: name.into(), kind, columns }
}

fn select(items: Vec<Expr>, from: Option<FromClause>, selection: Option<Expr>) -> Select {
    Select { items: items.into_iter().map(SelectItem::expr).collect(), from, selection, ..Default::default() }
}

fn from(table: &str) -> Option<FromClause> {
    Some(FromClause::single(TableFactor::table(table)))
}

/// A hand-written predicate test: the state script plus the case.
pub struct Example {
    pub script: Vec<String>,
    pub tables: Vec<String>,
    pub case: TestCase,
}

fn script(lines: &[&str]) -> Vec<String> {
    lines.iter().map(|s| s.to_string()).collect()
}

fn where_case(phi: FoldCandidate, query: impl FnOnce(Expr) -> Query) -> TestCase {
    let marked = Expr::Phi(Box::new(phi.phi.clone()));
    TestCase::Predicate {
        placement: Placement::Where,
        candidate: phi,
        original: vec![Step::compared(Statement::Query(query(marked)))],
    }
}

/// A non-correlated aggregate over a view, compared against an indexed
/// expression: independent, folds to a single constant.
pub fn view_aggregate() -> Example {
    let script = script(&[
        "CREATE TABLE t0(c0)",
        "CREATE INDEX i0 ON t0(c0 > 0)",
        "CREATE VIEW v0(c0) AS SELECT NULL FROM t0",
        "INSERT INTO t0(c0) VALUES (1)",
    ]);
    let view_col = Column { affinity: Affinity::None, ..column("c0", None) };
    let relations = BTreeMap::from([
        ("t0".to_owned(), relation("t0", RelationKind::Table, vec![column("c0", None)])),
        ("v0".to_owned(), relation("v0", RelationKind::View, vec![view_col])),
    ]);
    let sub = Query::select(Select {
        group_by: vec![Expr::col("v0", "c0")],
        ..select(
            vec![Expr::binary(BinaryOp::Gt, Expr::func("COUNT", vec![Expr::col("v0", "c0")]), Expr::lit(0))],
            from("v0"),
            None,
        )
    });
    let cand = FoldCandidate::new(Expr::subquery(sub), PhiShape::Scalar, OuterTables::none(), relations);
    let case = where_case(cand, |phi| {
        let pred =
            Expr::binary(BinaryOp::GtEq, phi, Expr::binary(BinaryOp::Gt, Expr::col("t0", "c0"), Expr::lit(0)));
        Query::select(select(vec![Expr::count_star()], from("t0"), Some(pred)))
    });
    Example { script, tables: vec!["t0".into()], case }
}

/// Students scoring above their class average: a correlated subquery that
/// depends only on the class of the outer row.
pub fn class_average() -> Example {
    let script = script(&[
        "CREATE TABLE t0(ID INT, classID INT, score INT)",
        "INSERT INTO t0(ID, classID, score) VALUES (1, 1, 80), (2, 1, 90), (3, 2, 70), (4, 2, 75)",
    ]);
    let t0 = relation(
        "t0",
        RelationKind::Table,
        vec![column("ID", Some("INT")), column("classID", Some("INT")), column("score", Some("INT"))],
    );
    let relations = BTreeMap::from([("x".to_owned(), t0.clone()), ("y".to_owned(), t0)]);
    let sub = Query::select(select(
        vec![Expr::func("AVG", vec![Expr::col("y", "score")])],
        Some(FromClause::single(TableFactor::aliased("t0", "y"))),
        Some(Expr::binary(BinaryOp::Eq, Expr::col("y", "classID"), Expr::col("x", "classID"))),
    ));
    let outer_from = FromClause::single(TableFactor::aliased("t0", "x"));
    let outer = OuterTables { from: Some(outer_from.clone()), join_on: None };
    let cand = FoldCandidate::new(Expr::subquery(sub), PhiShape::Scalar, outer, relations);
    let case = where_case(cand, |phi| {
        let pred = Expr::binary(BinaryOp::Gt, Expr::col("x", "score"), phi);
        Query::select(select(vec![Expr::col("x", "ID")], Some(outer_from), Some(pred)))
    });
    Example { script, tables: vec!["t0".into()], case }
}

/// `t1.c0 IS NULL` under a LEFT JOIN: only NULL-extended rows reach it, so
/// the auxiliary query has to keep the join.
pub fn left_join_is_null() -> Example {
    let script = script(&["CREATE TABLE t0(c0)", "CREATE TABLE t1(c0)", "INSERT INTO t0(c0) VALUES (1)", "INSERT INTO t1(c0) VALUES (2)"]);
    let relations = BTreeMap::from([
        ("t0".to_owned(), relation("t0", RelationKind::Table, vec![column("c0", None)])),
        ("t1".to_owned(), relation("t1", RelationKind::Table, vec![column("c0", None)])),
    ]);
    let join = FromClause {
        first: TableFactor::table("t0"),
        joins: vec![Join {
            kind: JoinKind::Left,
            factor: TableFactor::table("t1"),
            on: Some(Expr::binary(BinaryOp::Eq, Expr::col("t0", "c0"), Expr::col("t1", "c0"))),
        }],
    };
    let outer = OuterTables { from: Some(join.clone()), join_on: None };
    let cand = FoldCandidate::new(Expr::is_null(Expr::col("t1", "c0")), PhiShape::Scalar, outer, relations);
    let case = where_case(cand, |phi| Query::select(select(vec![Expr::col("t0", "c0")], Some(join), Some(phi))));
    Example { script, tables: vec!["t0".into(), "t1".into()], case }
}

/// `c0 + c1 > 0` over a two-row table: one row maps to 0, the other to 1.
pub fn two_row_sum() -> Example {
    let script = script(&["CREATE TABLE t0(c0 INT, c1 INT)", "INSERT INTO t0(c0, c1) VALUES (0, 0), (1, 1)"]);
    let t0 = relation("t0", RelationKind::Table, vec![column("c0", Some("INT")), column("c1", Some("INT"))]);
    let relations = BTreeMap::from([("t0".to_owned(), t0)]);
    let phi = Expr::binary(
        BinaryOp::Gt,
        Expr::binary(BinaryOp::Add, Expr::col("t0", "c0"), Expr::col("t0", "c1")),
        Expr::lit(0),
    );
    let outer = OuterTables { from: from("t0"), join_on: None };
    let cand = FoldCandidate::new(phi, PhiShape::Scalar, outer, relations);
    let case = where_case(cand, |phi| {
        Query::select(select(vec![Expr::col("t0", "c0"), Expr::col("t0", "c1")], from("t0"), Some(phi)))
    });
    Example { script, tables: vec!["t0".into()], case }
}

/// A filtered projection of t0 read through the relation placeholder.
pub fn relation_example(original_form: RelationForm, folded_form: RelationForm) -> Example {
    let script = script(&["CREATE TABLE t0(c0, c1)", "INSERT INTO t0(c0, c1) VALUES (1, 'a'), (2, 'b'), (3, NULL)"]);
    let source = Query::select(Select {
        items: vec![SelectItem::aliased(Expr::col("t0", "c0"), "c0"), SelectItem::aliased(Expr::col("t0", "c1"), "c1")],
        from: from("t0"),
        selection: Some(Expr::binary(BinaryOp::Gt, Expr::col("t0", "c0"), Expr::lit(1))),
        ..Default::default()
    });
    let plus = |c: &str| Expr::unary(coddtest::ast::UnaryOp::Plus, Expr::col(RELATION_ALIAS, c));
    let outer = Query::select(select(
        vec![plus("c0"), plus("c1")],
        from(RELATION_ALIAS),
        Some(Expr::IsNull { expr: Box::new(plus("c1")), negated: true }),
    ));
    Example {
        script,
        tables: vec!["t0".into()],
        case: TestCase::Relation { source, original_form, folded_form, outer },
    }
}

pub fn apply(session: &mut Session, script: &[String]) {
    session.reset().unwrap();
    for s in script {
        session.run_setup(s).unwrap();
    }
}

pub mod eval;

/// Expression settings for the closed arithmetic/string/boolean subset.
pub fn closed_subset() -> coddtest::expr_gen::ExprConfig {
    let mut c = coddtest::expr_gen::ExprConfig::sqlite();
    c.weights.like = 0;
    c.weights.cast = 0;
    c.weights.function = 0;
    c.weights.subquery = 0;
    c.real_literals = false;
    c
}

/// Outcome of comparing the oracle's fold against the reference evaluator.
#[derive(Debug, Default)]
pub struct FoldCheck {
    pub checked: usize,
    pub skipped: usize,
    pub mismatches: Vec<String>,
}

/// Generates closed expressions until `wanted` fall inside the evaluator's
/// subset, folding each through the auxiliary query on `session`.
pub fn check_fold_equivalence(session: &mut Session, seed: u64, wanted: usize, depth: usize) -> FoldCheck {
    use coddtest::expr_gen::{Ctx, ExprGen, Scope};
    use coddtest::oracle::{build_auxiliary, fold};
    use coddtest::render::Renderer;
    use rand::SeedableRng;

    let config = closed_subset();
    let renderer = Renderer::sqlite();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = FoldCheck::default();
    let ctx = Ctx::full().without_columns().without_subqueries();
    while out.checked < wanted {
        let phi = ExprGen::new(&mut rng, &config, &[]).expr(&Scope::empty(), depth, ctx);
        let expected = match eval::eval(&phi) {
            eval::Eval::Value(v) => v,
            eval::Eval::Skip(_) => {
                out.skipped += 1;
                continue;
            }
        };
        out.checked += 1;
        let cand = FoldCandidate::new(phi, PhiShape::Scalar, OuterTables::none(), BTreeMap::new());
        let sql = renderer.query(&build_auxiliary(&cand)).unwrap();
        let got = session
            .execute(&sql)
            .map_err(|e| e.to_string())
            .and_then(|r| fold(&cand, &r, 256).map_err(|(_, d)| d));
        match got {
            Ok(coddtest::oracle::FoldedConstant::Scalar(v)) if v.sql_type() == expected.sql_type() && v == expected => {}
            other => out.mismatches.push(format!("{sql}: expected {expected:?}, folded {other:?}")),
        }
    }
    out
}

/// Texts and rows a hand-written example must reproduce exactly.
pub struct Pinned {
    pub name: &'static str,
    pub example: Example,
    pub auxiliary: String,
    pub original: Vec<String>,
    pub folded: Vec<String>,
    /// Rows of the last compared statement, sorted.
    pub rows: Vec<Vec<coddtest::value::SqlValue>>,
}

const REL_OUTER: &str = r#"SELECT (+ "r0"."c0"), (+ "r0"."c1") FROM"#;
const REL_WHERE: &str = r#"AS "r0" WHERE ((+ "r0"."c1") IS NOT NULL)"#;
const REL_SOURCE: &str = r#"SELECT "t0"."c0" AS "c0", "t0"."c1" AS "c1" FROM "t0" WHERE ("t0"."c0" > 1)"#;
const REL_VALUES: &str =
    r#"(SELECT "fv"."column1" AS "c0", "fv"."column2" AS "c1" FROM (VALUES (2, 'b'), (3, NULL)) AS "fv")"#;

pub fn pinned_examples() -> Vec<Pinned> {
    use coddtest::value::SqlValue::{Integer, Text};
    let class_sub = r#"(SELECT AVG("y"."score") FROM "t0" AS "y" WHERE ("y"."classID" = "x"."classID"))"#;
    let join = r#"FROM "t0" LEFT JOIN "t1" ON ("t0"."c0" = "t1"."c0")"#;
    vec![
        Pinned {
            name: "view aggregate",
            example: view_aggregate(),
            auxiliary: r#"SELECT (SELECT (COUNT("v0"."c0") > 0) FROM "v0" GROUP BY "v0"."c0")"#.into(),
            original: vec![r#"SELECT COUNT(*) FROM "t0" WHERE ((SELECT (COUNT("v0"."c0") > 0) FROM "v0" GROUP BY "v0"."c0") >= ("t0"."c0" > 0))"#.into()],
            folded: vec![r#"SELECT COUNT(*) FROM "t0" WHERE (0 >= ("t0"."c0" > 0))"#.into()],
            // The single row has c0 = 1, and 0 >= 1 is false.
            rows: vec![vec![Integer(0)]],
        },
        Pinned {
            name: "class average",
            example: class_average(),
            auxiliary: format!(r#"SELECT "x"."classID", {class_sub} FROM "t0" AS "x""#),
            original: vec![format!(r#"SELECT "x"."ID" FROM "t0" AS "x" WHERE ("x"."score" > {class_sub})"#)],
            folded: vec![r#"SELECT "x"."ID" FROM "t0" AS "x" WHERE ("x"."score" > CASE WHEN ("x"."classID" IS 1) THEN 85.0 WHEN ("x"."classID" IS 2) THEN 72.5 END)"#.into()],
            // Class 1 averages 85, class 2 averages 72.5.
            rows: vec![vec![Integer(2)], vec![Integer(4)]],
        },
        Pinned {
            name: "left join is null",
            example: left_join_is_null(),
            auxiliary: format!(r#"SELECT "t1"."c0", ("t1"."c0" IS NULL) {join}"#),
            original: vec![format!(r#"SELECT "t0"."c0" {join} WHERE ("t1"."c0" IS NULL)"#)],
            folded: vec![format!(r#"SELECT "t0"."c0" {join} WHERE CASE WHEN ("t1"."c0" IS NULL) THEN 1 END"#)],
            rows: vec![vec![Integer(1)]],
        },
        Pinned {
            name: "two-row sum",
            example: two_row_sum(),
            auxiliary: r#"SELECT "t0"."c0", "t0"."c1", (("t0"."c0" + "t0"."c1") > 0) FROM "t0""#.into(),
            original: vec![r#"SELECT "t0"."c0", "t0"."c1" FROM "t0" WHERE (("t0"."c0" + "t0"."c1") > 0)"#.into()],
            folded: vec![r#"SELECT "t0"."c0", "t0"."c1" FROM "t0" WHERE CASE WHEN (("t0"."c0" IS 0) AND ("t0"."c1" IS 0)) THEN 0 WHEN (("t0"."c0" IS 1) AND ("t0"."c1" IS 1)) THEN 1 END"#.into()],
            rows: vec![vec![Integer(1), Integer(1)]],
        },
        Pinned {
            name: "inserted relation",
            example: relation_example(RelationForm::Insert, RelationForm::Derived),
            auxiliary: REL_SOURCE.into(),
            original: vec![
                r#"DROP TABLE IF EXISTS "ot0""#.into(),
                r#"CREATE TABLE "ot0"("c0", "c1")"#.into(),
                format!(r#"INSERT INTO "ot0"("c0", "c1") {REL_SOURCE}"#),
                format!(r#"{REL_OUTER} "ot0" {REL_WHERE}"#),
                r#"DROP TABLE IF EXISTS "ot0""#.into(),
            ],
            folded: vec![format!("{REL_OUTER} {REL_VALUES} {REL_WHERE}")],
            rows: vec![vec![Integer(2), Text("b".into())]],
        },
        Pinned {
            name: "common table expression",
            example: relation_example(RelationForm::Cte, RelationForm::Derived),
            auxiliary: REL_SOURCE.into(),
            original: vec![format!(r#"WITH "ot0" AS ({REL_SOURCE}) {REL_OUTER} "ot0" {REL_WHERE}"#)],
            folded: vec![format!("{REL_OUTER} {REL_VALUES} {REL_WHERE}")],
            rows: vec![vec![Integer(2), Text("b".into())]],
        },
    ]
}

/// Runs a pinned example on `session`; describes the first difference.
pub fn check_pinned(p: &Pinned, session: &mut Session) -> Result<coddtest::oracle::OracleVerdict, String> {
    use coddtest::oracle::{execute_case, OracleConfig, Outcome};
    apply(session, &p.example.script);
    let v = execute_case(&p.example.case, session, &OracleConfig::default());
    let t = &v.triple;
    if v.outcome != Outcome::Pass {
        return Err(format!("{}: {} ({})", p.name, v.outcome.name(), v.reason));
    }
    if t.auxiliary != p.auxiliary {
        return Err(format!("{}: auxiliary query\n  got  {}\n  want {}", p.name, t.auxiliary, p.auxiliary));
    }
    if t.original != p.original {
        return Err(format!("{}: original query\n  got  {:?}\n  want {:?}", p.name, t.original, p.original));
    }
    if t.folded != p.folded {
        return Err(format!("{}: folded query\n  got  {:?}\n  want {:?}", p.name, t.folded, p.folded));
    }
    let mut rows = t.original_result.as_ref().and_then(|r| r.last()).map(|r| r.rows.clone()).unwrap_or_default();
    rows.sort();
    if rows != p.rows {
        return Err(format!("{}: rows {rows:?}, want {:?}", p.name, p.rows));
    }
    Ok(v)
}

/// Two tables whose INNER JOIN is empty, with a generated expression that
/// depends on the joined columns.
pub fn empty_inner_join(seed: u64) -> Example {
    use coddtest::expr_gen::{Classification, ExprGen, PhiKind, Scope, ScopeTable};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let left: Vec<i64> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..100)).collect();
    let right: Vec<i64> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(-100..=0)).collect();
    let values = |v: &[i64]| v.iter().map(|x| format!("({x}, '{x}')")).collect::<Vec<_>>().join(", ");
    let script = vec![
        "CREATE TABLE t0(c0 INT, c1)".to_owned(),
        "CREATE TABLE t1(c0 INT, c1)".to_owned(),
        format!("INSERT INTO t0(c0, c1) VALUES {}", values(&left)),
        format!("INSERT INTO t1(c0, c1) VALUES {}", values(&right)),
    ];
    let cols = || vec![column("c0", Some("INT")), column("c1", None)];
    let (t0, t1) = (relation("t0", RelationKind::Table, cols()), relation("t1", RelationKind::Table, cols()));
    let join = FromClause {
        first: TableFactor::table("t0"),
        joins: vec![Join {
            kind: JoinKind::Inner,
            factor: TableFactor::table("t1"),
            on: Some(Expr::binary(BinaryOp::Eq, Expr::col("t0", "c0"), Expr::col("t1", "c0"))),
        }],
    };
    let scope = Scope::new(vec![
        ScopeTable { qualifier: "t0".into(), relation: t0.clone() },
        ScopeTable { qualifier: "t1".into(), relation: t1.clone() },
    ]);
    let rels = [t0, t1];
    let config = coddtest::expr_gen::ExprConfig::sqlite();
    let mut g = ExprGen::new(&mut rng, &config, &rels);
    let outer = OuterTables { from: Some(join.clone()), join_on: None };
    let cand = loop {
        let kind = if g.rng.random() { PhiKind::Expression } else { PhiKind::Subquery };
        let budget = g.rng.random_range(2..=3);
        if let Some(c) = g.candidate(&scope, outer.clone(), kind, true, budget, 50) {
            if c.classification == Classification::Dependent {
                break c;
            }
        }
    };
    let case = where_case(cand, |phi| Query::select(select(vec![Expr::col("t0", "c0")], Some(join), Some(phi))));
    Example { script, tables: vec!["t0".into(), "t1".into()], case }
}
