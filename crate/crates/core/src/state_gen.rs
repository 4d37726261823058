//! Random database states: tables, indexes, views and rows.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::*;
use crate::engine::{ErrorKind, ExecutionError, Session};
use crate::expr_gen::{self, collation, Ctx, ExprConfig, ExprGen, Scope, ScopeTable};
use crate::render::Renderer;
use crate::schema::{Affinity, Collation, Column, Relation, RelationKind};
use crate::value::SqlValue;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateConfig {
    pub min_tables: usize,
    pub max_tables: usize,
    pub max_columns: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Chance of each additional index (up to `max_indexes`).
    pub index_probability: f64,
    pub max_indexes: usize,
    /// Chance of each additional view (up to `max_views`).
    pub view_probability: f64,
    pub max_views: usize,
    /// Reals in REAL columns lie in `[-band, band]`, in steps of 1/16.
    pub real_band: f64,
    pub constraint_probability: f64,
    pub analyze_probability: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self {
            min_tables: 1,
            max_tables: 3,
            max_columns: 8,
            min_rows: 1,
            max_rows: 20,
            index_probability: 0.5,
            max_indexes: 3,
            view_probability: 0.4,
            max_views: 2,
            real_band: 1024.0,
            constraint_probability: 0.1,
            analyze_probability: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<Column>,
    pub row_count: usize,
    /// The first column is the PRIMARY KEY.
    pub primary_key: bool,
    pub without_rowid: bool,
    pub rows: Vec<Vec<SqlValue>>,
}

impl TableDef {
    pub fn relation(&self) -> Relation {
        Relation { name: self.name.clone(), kind: RelationKind::Table, columns: self.columns.clone() }
    }

    /// True when some column enforces uniqueness.
    pub fn has_unique(&self) -> bool {
        self.columns.iter().any(|c| c.unique)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDef {
    pub name: String,
    pub columns: Vec<Column>,
    pub query: Query,
}

impl ViewDef {
    pub fn relation(&self) -> Relation {
        Relation { name: self.name.clone(), kind: RelationKind::View, columns: self.columns.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDef {
    pub name: String,
    pub table: String,
    pub unique: bool,
    pub columns: Vec<IndexedColumn>,
    pub predicate: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseState {
    pub tables: Vec<TableDef>,
    pub views: Vec<ViewDef>,
    pub indexes: Vec<IndexDef>,
    pub creation_script: Vec<String>,
    pub rng_seed: u64,
}

impl DatabaseState {
    /// Tables and views, usable in FROM clauses.
    pub fn relations(&self) -> Vec<Relation> {
        self.tables.iter().map(TableDef::relation).chain(self.views.iter().map(ViewDef::relation)).collect()
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<Relation> {
        self.relations().into_iter().find(|r| r.name == name)
    }
}

const COLUMN_TYPES: &[(Option<&str>, u32)] = &[
    (None, 4),
    (Some("INT"), 3),
    (Some("INTEGER"), 2),
    (Some("TEXT"), 3),
    (Some("VARCHAR(10)"), 1),
    (Some("REAL"), 1),
    (Some("BLOB"), 1),
    (Some("NUMERIC"), 1),
    (Some("BOOLEAN"), 1),
];

fn weighted<'a, T, R: Rng>(rng: &mut R, items: &'a [(T, u32)]) -> &'a T {
    let total: u32 = items.iter().map(|(_, w)| w).sum();
    let mut pick = rng.random_range(0..total);
    for (item, w) in items {
        if pick < *w {
            return item;
        }
        pick -= w;
    }
    unreachable!()
}

/// Generates a state with the built-in SQLite rendering.
pub fn generate_state(seed: u64, config: &StateConfig) -> DatabaseState {
    generate_state_with(seed, config, &Renderer::sqlite(), &ExprConfig::sqlite())
}

/// Generates a state. A pure function of its arguments: the same inputs
/// always give the same tables, rows and script.
pub fn generate_state_with(seed: u64, config: &StateConfig, renderer: &Renderer, exprs: &ExprConfig) -> DatabaseState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tables = rng.random_range(config.min_tables.max(1)..=config.max_tables.max(config.min_tables.max(1)));
    let mut tables = Vec::new();
    let mut statements = Vec::new();
    for i in 0..n_tables {
        let table = gen_table(&mut rng, config, i);
        statements.push(Statement::CreateTable(create_table(&table)));
        tables.push(table);
    }
    for table in &tables {
        for row in &table.rows {
            statements.push(insert_row(table, row));
        }
    }

    let relations: Vec<Relation> = tables.iter().map(TableDef::relation).collect();
    let mut indexes = Vec::new();
    while indexes.len() < config.max_indexes && rng.random_bool(config.index_probability) {
        let table = tables.choose(&mut rng).unwrap();
        let index = gen_index(&mut rng, exprs, &relations, table, indexes.len());
        statements.push(Statement::CreateIndex {
            name: index.name.clone(),
            unique: index.unique,
            table: index.table.clone(),
            columns: index.columns.clone(),
            selection: index.predicate.clone(),
        });
        indexes.push(index);
    }

    let mut views = Vec::new();
    while views.len() < config.max_views && rng.random_bool(config.view_probability) {
        let table = tables.choose(&mut rng).unwrap();
        let view = gen_view(&mut rng, exprs, &relations, table, views.len());
        statements.push(Statement::CreateView {
            name: view.name.clone(),
            columns: view.columns.iter().map(|c| c.name.clone()).collect(),
            query: view.query.clone(),
        });
        views.push(view);
    }
    if rng.random_bool(config.analyze_probability) {
        statements.push(Statement::Analyze);
    }

    let creation_script = statements
        .iter()
        .map(|s| renderer.statement(s).expect("state statements are representable"))
        .collect();
    DatabaseState { tables, views, indexes, creation_script, rng_seed: seed }
}

fn gen_table(rng: &mut ChaCha8Rng, config: &StateConfig, index: usize) -> TableDef {
    let max_cols = config.max_columns.max(1);
    let n_cols = if rng.random_bool(0.9) { rng.random_range(1..=max_cols.min(4)) } else { rng.random_range(1..=max_cols) };
    let mut columns: Vec<Column> = (0..n_cols)
        .map(|i| {
            let type_name = weighted(rng, COLUMN_TYPES).map(str::to_owned);
            let collation = match rng.random_range(0..10) {
                0 | 1 => Collation::NoCase,
                2 => Collation::RTrim,
                _ => Collation::Binary,
            };
            Column {
                name: format!("c{i}"),
                affinity: Affinity::of_declared_type(type_name.as_deref()),
                type_name,
                collation,
                nullable: !rng.random_bool(config.constraint_probability),
                unique: rng.random_bool(config.constraint_probability),
            }
        })
        .collect();
    let mut without_rowid = false;
    let mut primary_key = false;
    if rng.random_bool(config.constraint_probability * 2.0) {
        primary_key = true;
        columns[0].unique = true;
        columns[0].nullable = false;
        without_rowid = rng.random_bool(0.5);
    }
    let span = (config.max_rows.max(config.min_rows) - config.min_rows.max(1)) as f64;
    let u: f64 = rng.random();
    let row_count = config.min_rows.max(1) + (u * u * (span + 1.0)).floor().min(span) as usize;
    let mut seen: Vec<HashSet<String>> = vec![HashSet::new(); columns.len()];
    let mut rows = Vec::with_capacity(row_count);
    let mut counter = 0u64;
    for _ in 0..row_count {
        let row = columns
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let mut v = gen_value(rng, col, config.real_band);
                if col.unique {
                    let mut tries = 0;
                    while !v.is_null() && seen[i].contains(&unique_key(col, &v)) {
                        tries += 1;
                        v = if tries < 10 { gen_value(rng, col, config.real_band) } else { fresh_value(col, &mut counter) };
                    }
                    if !v.is_null() {
                        seen[i].insert(unique_key(col, &v));
                    }
                }
                v
            })
            .collect();
        rows.push(row);
    }
    TableDef { name: format!("t{index}"), columns, row_count, primary_key, without_rowid, rows }
}

/// Value consistent with the column's declared type.
fn gen_value(rng: &mut ChaCha8Rng, col: &Column, band: f64) -> SqlValue {
    if col.nullable && rng.random_bool(0.15) {
        return SqlValue::Null;
    }
    match col.affinity {
        Affinity::Integer | Affinity::Numeric => SqlValue::Integer(expr_gen::gen_int(rng)),
        Affinity::Text => SqlValue::Text(expr_gen::gen_text(rng)),
        Affinity::Real => {
            if rng.random_bool(0.3) {
                SqlValue::Real(rng.random_range(-3..=3) as f64)
            } else {
                SqlValue::Real(expr_gen::gen_real(rng, band))
            }
        }
        Affinity::None | Affinity::Blob | Affinity::Unknown => match rng.random_range(0..10) {
            0..=4 => SqlValue::Integer(expr_gen::gen_int(rng)),
            5..=8 => SqlValue::Text(expr_gen::gen_text(rng)),
            _ => SqlValue::Blob(expr_gen::gen_blob(rng)),
        },
    }
}

fn fresh_value(col: &Column, counter: &mut u64) -> SqlValue {
    *counter += 1;
    match col.affinity {
        Affinity::Text => SqlValue::Text(format!("u{counter}")),
        Affinity::Real => SqlValue::Real(1_000_000.0 + *counter as f64),
        _ => SqlValue::Integer(1_000_000 + *counter as i64),
    }
}

/// Identity of a value under the column's uniqueness semantics.
fn unique_key(col: &Column, v: &SqlValue) -> String {
    let base = match v {
        SqlValue::Real(r) if r.fract() == 0.0 && r.abs() < 1e15 => format!("n{}", *r as i64),
        SqlValue::Real(r) => format!("r{r:?}"),
        SqlValue::Integer(i) if col.affinity == Affinity::Real => format!("n{i}"),
        SqlValue::Integer(i) => format!("n{i}"),
        SqlValue::Text(t) => format!("t{t}"),
        SqlValue::Blob(b) => format!("b{}", hex::encode(b)),
        SqlValue::Null => "null".into(),
    };
    match col.collation {
        Collation::NoCase => base.to_ascii_lowercase(),
        Collation::RTrim => base.trim_end().to_owned(),
        Collation::Binary => base,
    }
}

fn create_table(t: &TableDef) -> CreateTable {
    CreateTable {
        name: t.name.clone(),
        columns: t
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let primary_key = i == 0 && t.primary_key;
                ColumnDef {
                    name: c.name.clone(),
                    type_name: c.type_name.clone(),
                    primary_key,
                    unique: c.unique && !primary_key,
                    not_null: !c.nullable,
                    collation: (c.collation != Collation::Binary).then(|| c.collation.name().to_owned()),
                }
            })
            .collect(),
        without_rowid: t.without_rowid,
    }
}

fn insert_row(t: &TableDef, row: &[SqlValue]) -> Statement {
    Statement::Insert {
        or_ignore: false,
        table: t.name.clone(),
        columns: t.columns.iter().map(|c| c.name.clone()).collect(),
        source: Query::values(vec![row.iter().cloned().map(Expr::Literal).collect()]),
    }
}

/// Strips qualifiers: index expressions name the table's columns bare.
pub fn unqualify(e: &mut Expr) {
    if let Expr::Column(c) = e {
        c.qualifier = None;
    }
    for child in e.children_mut() {
        unqualify(child);
    }
}

fn gen_index(rng: &mut ChaCha8Rng, exprs: &ExprConfig, relations: &[Relation], table: &TableDef, n: usize) -> IndexDef {
    let scope = Scope::new(vec![ScopeTable { qualifier: table.name.clone(), relation: table.relation() }]);
    let ctx = Ctx { columns: true, subqueries: false, collate: false, aggregates: false, error_free: true };
    let n_cols = rng.random_range(1..=table.columns.len().min(2));
    let mut columns = Vec::new();
    for _ in 0..n_cols {
        let expr = if rng.random_bool(0.2) {
            let mut g = ExprGen::new(rng, exprs, relations);
            let mut e = g.expr(&scope, 2, ctx);
            if e.free_columns().is_empty() {
                e = Expr::col(&table.name, &table.columns[0].name);
            }
            unqualify(&mut e);
            e
        } else {
            let c = table.columns.choose(rng).unwrap();
            Expr::Column(ColumnRef::bare(&c.name))
        };
        columns.push(IndexedColumn {
            expr,
            collation: rng.random_bool(0.2).then(|| Collation::ALL.choose(rng).unwrap().name().to_owned()),
            desc: rng.random_bool(0.3),
        });
    }
    // Unique only over a column already known to be unique.
    let unique = n_cols == 1
        && columns[0].collation.is_none()
        && matches!(&columns[0].expr, Expr::Column(c) if table.columns.iter().any(|tc| tc.name == c.column && tc.unique))
        && rng.random_bool(0.5);
    let predicate = rng.random_bool(0.3).then(|| {
        let mut g = ExprGen::new(rng, exprs, relations);
        let mut p = g.expr(&scope, 2, ctx);
        unqualify(&mut p);
        p
    });
    IndexDef { name: format!("i{n}"), table: table.name.clone(), unique, columns, predicate }
}

fn gen_view(rng: &mut ChaCha8Rng, exprs: &ExprConfig, relations: &[Relation], table: &TableDef, n: usize) -> ViewDef {
    let rel = table.relation();
    let scope = Scope::new(vec![ScopeTable { qualifier: table.name.clone(), relation: rel.clone() }]);
    let ctx = Ctx { columns: true, subqueries: false, collate: false, aggregates: false, error_free: true };
    let n_items = rng.random_range(1..=table.columns.len().min(3));
    let mut items = Vec::new();
    let mut columns = Vec::new();
    for i in 0..n_items {
        let expr = if rng.random_bool(0.6) {
            let c = table.columns.choose(rng).unwrap();
            Expr::col(&table.name, &c.name)
        } else {
            let mut g = ExprGen::new(rng, exprs, relations);
            g.expr(&scope, 2, ctx)
        };
        let column = match &expr {
            Expr::Column(c) => Column { name: format!("c{i}"), nullable: true, unique: false, ..rel.column(&c.column).unwrap().clone() },
            other => Column {
                name: format!("c{i}"),
                type_name: None,
                affinity: Affinity::Unknown,
                collation: collation(other, &scope).unwrap_or(Collation::Binary),
                nullable: true,
                unique: false,
            },
        };
        items.push(SelectItem::expr(expr));
        columns.push(column);
    }
    let selection = rng.random_bool(0.4).then(|| {
        let mut g = ExprGen::new(rng, exprs, relations);
        g.expr(&scope, 2, ctx)
    });
    let distinct = rng.random_bool(0.2) && columns.iter().all(|c| c.collation == Collation::Binary);
    let query = Query::select(Select {
        distinct,
        items,
        from: Some(FromClause::single(TableFactor::table(&table.name))),
        selection,
        ..Default::default()
    });
    ViewDef { name: format!("v{n}"), columns, query }
}

fn setup_error(message: String) -> ExecutionError {
    ExecutionError { kind: ErrorKind::Internal, message }
}

/// Runs the creation script on a fresh session and verifies every table
/// holds its rows and every view evaluates.
pub fn apply_state(state: &DatabaseState, session: &mut Session) -> Result<(), ExecutionError> {
    if state.tables.is_empty() || state.creation_script.is_empty() {
        return Err(setup_error("state has no tables".into()));
    }
    for stmt in &state.creation_script {
        session.run_setup(stmt).map_err(|e| match e.kind {
            ErrorKind::Crash | ErrorKind::Hang => e,
            _ => setup_error(format!("engine rejected state statement `{stmt}`: {}", e.message)),
        })?;
    }
    verify_counts(state, session)?;
    for v in &state.views {
        session
            .execute_uncounted(&format!("SELECT COUNT(*) FROM {}", crate::render::quote_ident(&v.name)))
            .map_err(|e| setup_error(format!("view {} does not evaluate: {}", v.name, e.message)))?;
    }
    Ok(())
}

/// COUNT(*) probes: every table holds exactly the rows it was created with.
pub fn verify_counts(state: &DatabaseState, session: &mut Session) -> Result<(), ExecutionError> {
    for t in &state.tables {
        let r = session.execute_uncounted(&format!("SELECT COUNT(*) FROM {}", crate::render::quote_ident(&t.name)))?;
        let count = match r.rows.first().and_then(|row| row.first()) {
            Some(SqlValue::Integer(n)) => *n as usize,
            _ => 0,
        };
        if count != t.row_count || count == 0 {
            return Err(setup_error(format!("table {} holds {count} rows, expected {}", t.name, t.row_count)));
        }
    }
    Ok(())
}
