//! Random expression generation: the expression under test (with its
//! referenced columns and tables), subqueries, and the predicates that
//! embed it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::ast::*;
use crate::engine::EngineProfile;
use crate::schema::{Affinity, Collation, Column, Relation, RelationKind};
use crate::value::SqlValue;

/// Scalar functions the generator knows how to call: name and arity range.
const SCALAR_FUNCTIONS: &[(&str, usize, usize)] = &[
    ("abs", 1, 1),
    ("coalesce", 2, 3),
    ("glob", 2, 2),
    ("hex", 1, 1),
    ("ifnull", 2, 2),
    ("instr", 2, 2),
    ("length", 1, 1),
    ("like", 2, 2),
    ("likely", 1, 1),
    ("lower", 1, 1),
    ("ltrim", 1, 2),
    ("max", 2, 3),
    ("min", 2, 3),
    ("nullif", 2, 2),
    ("quote", 1, 1),
    ("replace", 3, 3),
    ("round", 1, 2),
    ("rtrim", 1, 2),
    ("substr", 2, 3),
    ("trim", 1, 2),
    ("typeof", 1, 1),
    ("unicode", 1, 1),
    ("unlikely", 1, 1),
    ("upper", 1, 1),
    ("likelihood", 2, 2),
];

/// Functions that can raise a runtime error on some inputs.
const FALLIBLE_FUNCTIONS: &[&str] = &["abs"];

/// Aggregates the generator uses. `group_concat` is left out: its result
/// depends on row order.
const AGGREGATES: &[&str] = &["count", "sum", "total", "avg", "min", "max"];

const CAST_TYPES: &[(&str, u32)] = &[
    ("INTEGER", 3),
    ("INT", 1),
    ("TEXT", 3),
    ("NUMERIC", 2),
    ("BLOB", 2),
    ("REAL", 1),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorWeights {
    pub unary: u32,
    pub is_null: u32,
    pub comparison: u32,
    pub logical: u32,
    pub arithmetic: u32,
    pub concat: u32,
    pub like: u32,
    pub between: u32,
    pub in_list: u32,
    pub case: u32,
    pub cast: u32,
    pub function: u32,
    pub subquery: u32,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        Self {
            unary: 3,
            is_null: 3,
            comparison: 8,
            logical: 5,
            arithmetic: 5,
            concat: 2,
            like: 1,
            between: 2,
            in_list: 2,
            case: 2,
            cast: 2,
            function: 4,
            subquery: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExprConfig {
    /// Maximum expression tree depth.
    pub max_depth: usize,
    /// Chance that an inner node stops early and becomes a leaf.
    pub leaf_probability: f64,
    /// Chance that a leaf is a column reference (when columns are in scope).
    pub column_probability: f64,
    /// Chance that a column leaf inside a subquery picks an outer column.
    pub outer_reference_probability: f64,
    pub weights: OperatorWeights,
    /// Scalar functions available to the generator (allowlist ∩ known).
    pub functions: Vec<(String, usize, usize)>,
    pub aggregates: Vec<String>,
    /// Allow real literals in generated expressions.
    pub real_literals: bool,
    pub supports_any_all: bool,
}

impl ExprConfig {
    pub fn for_profile(profile: &EngineProfile) -> Self {
        let functions = SCALAR_FUNCTIONS
            .iter()
            .filter(|(name, ..)| profile.allows_function(name))
            .map(|(n, lo, hi)| (n.to_string(), *lo, *hi))
            .collect();
        let aggregates = AGGREGATES
            .iter()
            .filter(|name| profile.allows_function(name))
            .map(|s| s.to_string())
            .collect();
        Self {
            max_depth: 3,
            leaf_probability: 0.25,
            column_probability: 0.6,
            outer_reference_probability: 0.3,
            weights: OperatorWeights::default(),
            functions,
            aggregates,
            real_literals: false,
            supports_any_all: profile.capabilities.supports_any_all,
        }
    }

    pub fn sqlite() -> Self {
        Self::for_profile(&EngineProfile::sqlite())
    }
}

/// What the generator may emit at a given point.
#[derive(Debug, Clone, Copy)]
pub struct Ctx {
    pub columns: bool,
    pub subqueries: bool,
    /// Explicit COLLATE nodes (only inside subqueries).
    pub collate: bool,
    /// Aggregate calls (HAVING, subquery select lists).
    pub aggregates: bool,
    /// Avoid operations that can raise runtime errors (view and index
    /// definitions).
    pub error_free: bool,
}

impl Ctx {
    pub fn full() -> Self {
        Self { columns: true, subqueries: true, collate: false, aggregates: false, error_free: false }
    }

    pub fn without_subqueries(self) -> Self {
        Self { subqueries: false, ..self }
    }

    pub fn without_columns(self) -> Self {
        Self { columns: false, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeTable {
    pub qualifier: String,
    pub relation: Relation,
}

/// Tables visible to an expression: the innermost level last.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scope {
    levels: Vec<Vec<ScopeTable>>,
}

impl Scope {
    pub fn new(tables: Vec<ScopeTable>) -> Self {
        Self { levels: vec![tables] }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn nested(&self, tables: Vec<ScopeTable>) -> Self {
        let mut levels = self.levels.clone();
        levels.push(tables);
        Self { levels }
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(|l| l.iter().all(|t| t.relation.columns.is_empty()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &ScopeTable> {
        self.levels.iter().flatten()
    }

    pub fn innermost(&self) -> &[ScopeTable] {
        self.levels.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Columns with their nesting level (0 = outermost).
    pub fn columns(&self) -> Vec<(usize, ColumnRef, &Column)> {
        let mut out = Vec::new();
        for (level, tables) in self.levels.iter().enumerate() {
            for t in tables {
                for c in &t.relation.columns {
                    out.push((level, ColumnRef::new(&t.qualifier, &c.name), c));
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Independent,
    Dependent,
}

/// Whether the expression under test yields one value or a set of values
/// (the latter only as the right operand of IN).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhiShape {
    Scalar,
    RowSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhiKind {
    /// No subqueries anywhere in the expression.
    Expression,
    /// The expression is (or directly wraps) a subquery.
    Subquery,
}

/// The FROM structure the expression was generated against. `join_on`
/// names the join (index into `from.joins`) whose ON clause holds the
/// expression, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterTables {
    pub from: Option<FromClause>,
    pub join_on: Option<usize>,
}

impl OuterTables {
    pub fn none() -> Self {
        Self { from: None, join_on: None }
    }

    /// Each table with the join it participates in (kind and ON predicate);
    /// the first table has none.
    pub fn entries(&self) -> Vec<(TableFactor, Option<(JoinKind, Option<Expr>)>)> {
        let Some(from) = &self.from else { return vec![] };
        let mut out = vec![(from.first.clone(), None)];
        for j in &from.joins {
            out.push((j.factor.clone(), Some((j.kind, j.on.clone()))));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCandidate {
    pub phi: Expr,
    pub shape: PhiShape,
    /// Referenced outer columns, sorted.
    pub outer_columns: Vec<ColumnRef>,
    pub outer_tables: OuterTables,
    pub classification: Classification,
    /// No affinity and binary collation: the folded constant behaves like
    /// the expression in every position.
    pub transparent: bool,
    /// Relations behind every qualifier the expression uses.
    pub relations: BTreeMap<String, Relation>,
}

impl FoldCandidate {
    /// Builds a candidate, deriving columns, classification and
    /// transparency from the expression.
    pub fn new(phi: Expr, shape: PhiShape, outer_tables: OuterTables, relations: BTreeMap<String, Relation>) -> Self {
        let outer_columns: Vec<ColumnRef> = phi.free_columns().into_iter().collect();
        let classification = if outer_columns.is_empty() {
            Classification::Independent
        } else {
            Classification::Dependent
        };
        let transparent = match shape {
            PhiShape::Scalar => is_transparent(&phi, &relations),
            PhiShape::RowSet => match &phi {
                Expr::Subquery(q) => rowset_transparent(q, &relations),
                _ => false,
            },
        };
        Self { phi, shape, outer_columns, outer_tables, classification, transparent, relations }
    }

    pub fn column(&self, c: &ColumnRef) -> Option<&Column> {
        lookup_column(&self.relations, c)
    }

    /// Recomputes derived fields after `phi` was edited.
    pub fn refreshed(&self, phi: Expr) -> Self {
        Self::new(phi, self.shape, self.outer_tables.clone(), self.relations.clone())
    }
}

fn lookup_column<'a>(relations: &'a BTreeMap<String, Relation>, c: &ColumnRef) -> Option<&'a Column> {
    relations.get(c.qualifier.as_deref()?)?.column(&c.column)
}

/// Resolves column references to their schema.
pub trait ColumnLookup {
    fn column(&self, c: &ColumnRef) -> Option<&Column>;
}

impl ColumnLookup for BTreeMap<String, Relation> {
    fn column(&self, c: &ColumnRef) -> Option<&Column> {
        lookup_column(self, c)
    }
}

impl ColumnLookup for Scope {
    fn column(&self, c: &ColumnRef) -> Option<&Column> {
        let q = c.qualifier.as_deref()?;
        self.tables().find(|t| t.qualifier == q)?.relation.column(&c.column)
    }
}

// ---------------------------------------------------------------------------
// Affinity and collation analysis

/// Affinity the engine attaches to an expression in comparisons.
pub fn affinity(e: &Expr, lookup: &dyn ColumnLookup) -> Affinity {
    match e {
        Expr::Column(c) => lookup.column(c).map(|c| c.affinity).unwrap_or(Affinity::Unknown),
        Expr::Cast { type_name, .. } => Affinity::of_declared_type(Some(type_name)),
        Expr::Collate { expr, .. } | Expr::Phi(expr) => affinity(expr, lookup),
        Expr::Subquery(q) => match last_select(&q.body).and_then(|s| s.items.first()) {
            Some(SelectItem::Expr { expr, .. }) => affinity(expr, lookup),
            _ => Affinity::Unknown,
        },
        _ => Affinity::None,
    }
}

fn last_select(body: &SetExpr) -> Option<&Select> {
    match body {
        SetExpr::Select(s) => Some(s),
        SetExpr::Values(_) => None,
        SetExpr::Union { right, .. } => last_select(right),
    }
}

/// Collating sequence of an expression, or `None` when it comes from an
/// explicit COLLATE other than the built-in ones.
pub fn collation(e: &Expr, lookup: &dyn ColumnLookup) -> Option<Collation> {
    match e {
        Expr::Collate { collation, .. } => Collation::parse(collation),
        Expr::Column(c) => lookup.column(c).map(|c| c.collation),
        Expr::Cast { expr, .. } | Expr::Unary(UnaryOp::Plus, expr) | Expr::Phi(expr) => collation(expr, lookup),
        other => match other.children().into_iter().find(|c| c.has_collate()) {
            // An explicit COLLATE anywhere below propagates upward.
            Some(child) => collation(child, lookup),
            None => Some(Collation::Binary),
        },
    }
}

/// No affinity and binary collation.
pub fn is_transparent(e: &Expr, lookup: &dyn ColumnLookup) -> bool {
    affinity(e, lookup) == Affinity::None && collation(e, lookup) == Some(Collation::Binary)
}

/// A subquery used as an IN set behaves like a value list only when every
/// result expression is transparent.
pub fn rowset_transparent(q: &Query, lookup: &dyn ColumnLookup) -> bool {
    fn all_parts(body: &SetExpr, lookup: &dyn ColumnLookup) -> bool {
        match body {
            SetExpr::Select(s) => match s.items.as_slice() {
                [SelectItem::Expr { expr, .. }] => is_transparent(expr, lookup),
                _ => false,
            },
            SetExpr::Values(_) => false,
            SetExpr::Union { left, right, .. } => all_parts(left, lookup) && all_parts(right, lookup),
        }
    }
    all_parts(&q.body, lookup)
}

/// Whether the engine would read this ORDER BY / GROUP BY term as a result
/// column number.
pub fn is_integer_constant(e: &Expr) -> bool {
    match e {
        Expr::Literal(SqlValue::Integer(i)) => *i != i64::MIN,
        Expr::Unary(UnaryOp::Neg | UnaryOp::Plus, inner) | Expr::Collate { expr: inner, .. } | Expr::Phi(inner) => {
            is_integer_constant(inner)
        }
        Expr::Function { name, args, .. }
            if matches!(name.to_ascii_lowercase().as_str(), "likely" | "unlikely" | "likelihood") =>
        {
            args.first().is_some_and(is_integer_constant)
        }
        _ => false,
    }
}

/// ORDER BY terms making `expr` a total, deterministic key: the value under
/// binary collation, then its storage class. Integer constants need no key.
pub fn total_order_terms(expr: &Expr) -> Vec<OrderTerm> {
    if is_integer_constant(expr) {
        return vec![];
    }
    vec![
        // coalesce() keeps the parser from folding the term into an
        // integer literal, which ORDER BY would read as a column index.
        OrderTerm::asc(Expr::Collate {
            expr: Box::new(Expr::func("coalesce", vec![expr.clone(), Expr::null()])),
            collation: "BINARY".into(),
        }),
        OrderTerm::asc(Expr::func("typeof", vec![expr.clone()])),
    ]
}

// ---------------------------------------------------------------------------
// Literals

const INTERESTING_INTS: &[i64] = &[
    0,
    1,
    -1,
    2,
    -2,
    3,
    10,
    100,
    127,
    128,
    255,
    256,
    -128,
    65535,
    2147483647,
    -2147483648,
    4294967296,
    i64::MAX,
    i64::MIN,
];

const INTERESTING_TEXT: &[&str] = &[
    "", "a", "A", "b", "B", "ab", "abc", "ABC", "Ab", "0", "1", "-1", "01", " 1", "1.5", "1e3", "0x10", "x y", "%",
    "_", "a%", "%a", "a_c", "*", "?", "[a-c]", "\u{e9}", "\u{c9}", "''", "NULL", "true",
];

pub fn gen_int<R: RngCore + ?Sized>(rng: &mut R) -> i64 {
    match rng.random_range(0..10) {
        0..=4 => *INTERESTING_INTS.choose(rng).unwrap(),
        5..=8 => rng.random_range(-20..=20),
        _ => rng.random_range(i64::MIN..=i64::MAX),
    }
}

pub fn gen_text<R: RngCore + ?Sized>(rng: &mut R) -> String {
    if rng.random_bool(0.6) {
        return INTERESTING_TEXT.choose(rng).unwrap().to_string();
    }
    const ALPHABET: &[u8] = b"abcABC019 _%xyz";
    let len = rng.random_range(1..=5);
    let s: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap() as char).collect();
    // Trailing whitespace makes RTRIM keys ambiguous.
    let t = s.trim_end().to_owned();
    if t.is_empty() { "a".into() } else { t }
}

/// Blob bytes restricted to printable ASCII so that blob-to-text
/// conversions always yield valid, NUL-free text.
pub fn gen_blob<R: RngCore + ?Sized>(rng: &mut R) -> Vec<u8> {
    let len = rng.random_range(0..=3);
    (0..len).map(|_| rng.random_range(b'0'..=b'z')).collect()
}

/// Dyadic reals in a safe magnitude band: exactly representable and
/// printed without rounding.
pub fn gen_real<R: RngCore + ?Sized>(rng: &mut R, max_magnitude: f64) -> f64 {
    let max_units = (max_magnitude * 16.0) as i64;
    rng.random_range(-max_units..=max_units) as f64 / 16.0
}

// ---------------------------------------------------------------------------
// Generator

enum Node {
    Unary,
    IsNull,
    Comparison,
    Logical,
    Arithmetic,
    Concat,
    Like,
    Between,
    InList,
    Case,
    Cast,
    Function,
    Subquery,
}

/// Kind of subquery to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    /// Single row, single column.
    Scalar,
    /// Single column, any number of rows (IN sets).
    Column,
    /// Any shape (EXISTS).
    Any,
}

pub struct ExprGen<'a, R: RngCore> {
    pub rng: &'a mut R,
    pub config: &'a ExprConfig,
    /// Relations available to subquery FROM clauses.
    pub relations: &'a [Relation],
    next_alias: usize,
    alias_prefix: String,
    /// Every qualifier introduced so far, for later analysis.
    pub seen: BTreeMap<String, Relation>,
    /// Scope for aggregate arguments in HAVING-style positions.
    pub aggregate_scope: Option<Scope>,
}

impl<'a, R: RngCore> ExprGen<'a, R> {
    pub fn new(rng: &'a mut R, config: &'a ExprConfig, relations: &'a [Relation]) -> Self {
        Self {
            rng,
            config,
            relations,
            next_alias: 0,
            alias_prefix: "s".into(),
            seen: BTreeMap::new(),
            aggregate_scope: None,
        }
    }

    /// Sets the prefix for subquery aliases (distinct generators sharing a
    /// query must not collide).
    pub fn with_alias_prefix(mut self, prefix: &str) -> Self {
        self.alias_prefix = prefix.to_owned();
        self
    }

    pub fn register_scope(&mut self, scope: &Scope) {
        for t in scope.tables() {
            self.seen.insert(t.qualifier.clone(), t.relation.clone());
        }
    }

    fn fresh_alias(&mut self) -> String {
        let a = format!("{}{}", self.alias_prefix, self.next_alias);
        self.next_alias += 1;
        a
    }

    pub fn literal(&mut self) -> SqlValue {
        match self.rng.random_range(0..100) {
            0..=11 => SqlValue::Null,
            12..=59 => SqlValue::Integer(gen_int(self.rng)),
            60..=91 => SqlValue::Text(gen_text(self.rng)),
            92..=96 => SqlValue::Blob(gen_blob(self.rng)),
            _ if self.config.real_literals => SqlValue::Real(gen_real(self.rng, 1024.0)),
            _ => SqlValue::Integer(self.rng.random_range(-3..=3)),
        }
    }

    pub fn leaf(&mut self, scope: &Scope, ctx: Ctx) -> Expr {
        if ctx.columns && !scope.is_empty() && self.rng.random_bool(self.config.column_probability) {
            Expr::Column(self.pick_column(scope))
        } else {
            Expr::Literal(self.literal())
        }
    }

    fn pick_column(&mut self, scope: &Scope) -> ColumnRef {
        let cols = scope.columns();
        let inner = scope.depth().saturating_sub(1);
        let outer: Vec<_> = cols.iter().filter(|(l, ..)| *l < inner).collect();
        let local: Vec<_> = cols.iter().filter(|(l, ..)| *l == inner).collect();
        let pool = if !outer.is_empty()
            && (local.is_empty() || self.rng.random_bool(self.config.outer_reference_probability))
        {
            outer
        } else {
            local
        };
        pool.choose(self.rng).map(|(_, c, _)| c.clone()).expect("scope has columns")
    }

    fn pick_node(&mut self, ctx: Ctx, budget: usize) -> Node {
        let w = &self.config.weights;
        let subq = if ctx.subqueries && budget >= 2 { w.subquery } else { 0 };
        let table = [
            (Node::Unary, w.unary),
            (Node::IsNull, w.is_null),
            (Node::Comparison, w.comparison),
            (Node::Logical, w.logical),
            (Node::Arithmetic, w.arithmetic),
            (Node::Concat, w.concat),
            (Node::Like, w.like),
            (Node::Between, w.between),
            (Node::InList, w.in_list),
            (Node::Case, w.case),
            (Node::Cast, w.cast),
            (Node::Function, if self.config.functions.is_empty() { 0 } else { w.function }),
            (Node::Subquery, subq),
        ];
        let total: u32 = table.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return Node::Comparison;
        }
        let mut pick = self.rng.random_range(0..total);
        for (node, weight) in table {
            if pick < weight {
                return node;
            }
            pick -= weight;
        }
        unreachable!()
    }

    /// A random expression of depth at most `budget`.
    pub fn expr(&mut self, scope: &Scope, budget: usize, ctx: Ctx) -> Expr {
        if budget <= 1 || self.rng.random_bool(self.config.leaf_probability) {
            if ctx.aggregates && self.rng.random_bool(0.3) && budget >= 2 {
                return self.aggregate_call(budget);
            }
            return self.leaf(scope, ctx);
        }
        let sub = budget - 1;
        let e = match self.pick_node(ctx, budget) {
            Node::Unary => {
                let op = *[UnaryOp::Not, UnaryOp::Neg, UnaryOp::Plus, UnaryOp::BitNot].choose(self.rng).unwrap();
                Expr::unary(op, self.expr(scope, sub, ctx))
            }
            Node::IsNull => Expr::IsNull { expr: Box::new(self.expr(scope, sub, ctx)), negated: self.rng.random() },
            Node::Comparison => {
                let op = *BinaryOp::COMPARISONS.choose(self.rng).unwrap();
                Expr::binary(op, self.expr(scope, sub, ctx), self.expr(scope, sub, ctx))
            }
            Node::Logical => {
                let op = if self.rng.random() { BinaryOp::And } else { BinaryOp::Or };
                Expr::binary(op, self.expr(scope, sub, ctx), self.expr(scope, sub, ctx))
            }
            Node::Arithmetic => {
                use BinaryOp::*;
                let op = *[Add, Sub, Mul, Div, Mod, BitAnd, BitOr, ShiftLeft, ShiftRight].choose(self.rng).unwrap();
                Expr::binary(op, self.expr(scope, sub, ctx), self.expr(scope, sub, ctx))
            }
            Node::Concat => Expr::binary(BinaryOp::Concat, self.expr(scope, sub, ctx), self.expr(scope, sub, ctx)),
            Node::Like => {
                use BinaryOp::*;
                let op = *[Like, NotLike, Glob, NotGlob].choose(self.rng).unwrap();
                Expr::binary(op, self.expr(scope, sub, ctx), self.expr(scope, sub, ctx))
            }
            Node::Between => Expr::Between {
                expr: Box::new(self.expr(scope, sub, ctx)),
                low: Box::new(self.expr(scope, sub, ctx)),
                high: Box::new(self.expr(scope, sub, ctx)),
                negated: self.rng.random_bool(0.3),
            },
            Node::InList => {
                let n = self.rng.random_range(1..=3);
                let items = (0..n).map(|_| self.expr(scope, sub, ctx)).collect();
                Expr::In {
                    expr: Box::new(self.expr(scope, sub, ctx)),
                    set: Box::new(Expr::List(items)),
                    negated: self.rng.random_bool(0.3),
                }
            }
            Node::Case => {
                let operand = self.rng.random_bool(0.3).then(|| Box::new(self.expr(scope, sub, ctx)));
                let n = self.rng.random_range(1..=2);
                let branches = (0..n).map(|_| (self.expr(scope, sub, ctx), self.expr(scope, sub, ctx))).collect();
                let otherwise = self.rng.random_bool(0.6).then(|| Box::new(self.expr(scope, sub, ctx)));
                Expr::Case { operand, branches, otherwise }
            }
            Node::Cast => {
                let total: u32 = CAST_TYPES.iter().map(|(_, w)| w).sum();
                let mut pick = self.rng.random_range(0..total);
                let mut ty = CAST_TYPES[0].0;
                for (t, w) in CAST_TYPES {
                    if pick < *w {
                        ty = t;
                        break;
                    }
                    pick -= w;
                }
                Expr::Cast { expr: Box::new(self.expr(scope, sub, ctx)), type_name: ty.into() }
            }
            Node::Function => self.function_call(scope, sub, ctx),
            Node::Subquery => self.subquery_expr(scope, budget, ctx),
        };
        if ctx.collate && e.depth() < budget && self.rng.random_bool(0.08) {
            let c = *Collation::ALL.choose(self.rng).unwrap();
            return Expr::Collate { expr: Box::new(e), collation: c.name().into() };
        }
        e
    }

    fn function_call(&mut self, scope: &Scope, sub: usize, ctx: Ctx) -> Expr {
        let candidates: Vec<(String, usize, usize)> = self
            .config
            .functions
            .iter()
            .filter(|(n, ..)| !ctx.error_free || !FALLIBLE_FUNCTIONS.contains(&n.as_str()))
            .cloned()
            .collect();
        let Some((name, lo, hi)) = candidates.choose(self.rng).cloned() else {
            return self.leaf(scope, ctx);
        };
        if name == "likelihood" {
            let p = *[0.0625, 0.5, 0.9375].choose(self.rng).unwrap();
            return Expr::func("likelihood", vec![self.expr(scope, sub, ctx), Expr::lit(p)]);
        }
        let n = self.rng.random_range(lo..=hi);
        let args = (0..n).map(|_| self.expr(scope, sub, ctx)).collect();
        Expr::func(&name, args)
    }

    /// An aggregate over the aggregate scope (HAVING siblings).
    fn aggregate_call(&mut self, budget: usize) -> Expr {
        let Some(scope) = self.aggregate_scope.clone() else {
            return Expr::count_star();
        };
        self.aggregate_over(&scope, budget.saturating_sub(1).max(1))
    }

    /// `agg(arg)` with `arg` drawn from `scope` (no subqueries, no nested
    /// aggregates). MIN/MAX arguments are forced to binary collation so ties
    /// cannot pick between distinct values.
    pub fn aggregate_over(&mut self, scope: &Scope, budget: usize) -> Expr {
        if budget <= 1 || self.config.aggregates.is_empty() || self.rng.random_bool(0.15) {
            return Expr::count_star();
        }
        let budget = budget - 1;
        let name = self.config.aggregates.choose(self.rng).unwrap().clone();
        let ctx = Ctx { columns: true, subqueries: false, collate: false, aggregates: false, error_free: false };
        let mut arg = if budget <= 1 || self.rng.random_bool(0.6) {
            if scope.is_empty() { Expr::Literal(self.literal()) } else { Expr::Column(self.pick_local_column(scope)) }
        } else {
            self.expr(scope, budget, ctx)
        };
        let mut name = name;
        if matches!(name.as_str(), "min" | "max") && collation(&arg, &self.seen) != Some(Collation::Binary) {
            if arg.depth() < budget {
                arg = Expr::Collate { expr: Box::new(arg), collation: "BINARY".into() };
            } else {
                name = "count".into();
            }
        }
        let distinct = name != "min" && name != "max" && self.rng.random_bool(0.15);
        Expr::Function { name, args: vec![arg], distinct, star: false }
    }

    fn pick_local_column(&mut self, scope: &Scope) -> ColumnRef {
        let local: Vec<ColumnRef> = scope
            .innermost()
            .iter()
            .flat_map(|t| t.relation.columns.iter().map(move |c| ColumnRef::new(&t.qualifier, &c.name)))
            .collect();
        local.choose(self.rng).cloned().unwrap_or_else(|| self.pick_column(scope))
    }

    fn subquery_expr(&mut self, scope: &Scope, budget: usize, ctx: Ctx) -> Expr {
        let correlated = !scope.is_empty() && ctx.columns && self.rng.random_bool(0.4);
        let roll = if budget < 3 { self.rng.random_range(0..7) } else { self.rng.random_range(0..10) };
        match roll {
            0..=4 => Expr::subquery(self.subquery(scope, budget, Want::Scalar, correlated)),
            5..=6 => Expr::Exists {
                query: Box::new(self.subquery(scope, budget, Want::Any, correlated)),
                negated: self.rng.random_bool(0.3),
            },
            _ => {
                let lhs = self.expr(scope, budget - 1, ctx.without_subqueries());
                Expr::In {
                    expr: Box::new(lhs),
                    set: Box::new(Expr::subquery(self.subquery(scope, budget - 1, Want::Column, correlated))),
                    negated: self.rng.random_bool(0.3),
                }
            }
        }
    }

    /// A FROM clause of one or two state relations under fresh aliases.
    pub fn subquery_from(&mut self, scope: &Scope, budget: usize) -> (FromClause, Vec<ScopeTable>) {
        let rel = self.relations.choose(self.rng).expect("state has relations").clone();
        let alias = self.fresh_alias();
        self.seen.insert(alias.clone(), rel.clone());
        let mut tables = vec![ScopeTable { qualifier: alias.clone(), relation: rel.clone() }];
        let mut from = FromClause::single(TableFactor::aliased(&rel.name, &alias));
        if self.rng.random_bool(0.2) {
            let rel2 = self.relations.choose(self.rng).unwrap().clone();
            let alias2 = self.fresh_alias();
            self.seen.insert(alias2.clone(), rel2.clone());
            tables.push(ScopeTable { qualifier: alias2.clone(), relation: rel2.clone() });
            let kind = *[JoinKind::Comma, JoinKind::Inner, JoinKind::Left].choose(self.rng).unwrap();
            let on = kind.takes_on().then(|| {
                let inner = scope.nested(tables.clone());
                let ctx = Ctx { columns: true, subqueries: false, collate: true, aggregates: false, error_free: false };
                self.expr(&inner, budget.clamp(1, 2), ctx)
            });
            from.joins.push(Join { kind, factor: TableFactor::aliased(&rel2.name, &alias2), on });
        }
        (from, tables)
    }

    /// A subquery whose expressions have depth ≤ `budget - 1`. Correlated
    /// subqueries are guaranteed to reference an outer column.
    pub fn subquery(&mut self, outer: &Scope, budget: usize, want: Want, correlated: bool) -> Query {
        let inner_budget = budget.saturating_sub(1).max(1);
        // A correlation predicate needs two levels.
        let correlated = correlated && inner_budget >= 2;
        let (from, tables) = self.subquery_from(outer, inner_budget);
        let visible = if correlated { outer.nested(tables.clone()) } else { Scope::new(tables.clone()) };
        let local = Scope::new(tables);
        let ctx = Ctx { columns: true, subqueries: true, collate: true, aggregates: false, error_free: false };

        let mut selection = self.rng.random_bool(0.7).then(|| self.expr(&visible, inner_budget, ctx));
        let mut select = Select { from: Some(from), ..Default::default() };
        let mut order_by = vec![];
        let mut limit = None;
        match want {
            Want::Scalar if inner_budget < 2 || self.rng.random_bool(0.55) => {
                let agg = self.aggregate_over(&local, inner_budget);
                let item = if inner_budget >= 3 && self.rng.random_bool(0.3) {
                    // Wrap the aggregate, e.g. `COUNT(x) > 0`.
                    let other = self.expr(&visible, inner_budget - 2, ctx.without_subqueries());
                    let op = *BinaryOp::COMPARISONS.choose(self.rng).unwrap();
                    Expr::binary(op, agg, other)
                } else {
                    agg
                };
                select.items.push(SelectItem::expr(item));
            }
            Want::Scalar => {
                // The ordering key wraps the item once.
                let item = self.expr(&visible, inner_budget - 1, ctx);
                order_by = total_order_terms(&item);
                select.items.push(SelectItem::expr(item));
                limit = Some(1);
            }
            Want::Column => {
                let item = self.expr(&visible, inner_budget, ctx);
                select.distinct =
                    self.rng.random_bool(0.2) && collation(&item, &self.seen) == Some(Collation::Binary);
                select.items.push(SelectItem::expr(item));
            }
            Want::Any => {
                let n = self.rng.random_range(1..=2);
                for _ in 0..n {
                    let item = self.expr(&visible, inner_budget, ctx);
                    select.items.push(SelectItem::expr(item));
                }
            }
        }
        if correlated && !select_references_outer(&select, outer) {
            let cond = self.correlation(outer, &local);
            selection = Some(match selection {
                Some(s) if inner_budget >= 3 && s.depth() < inner_budget => Expr::and(s, cond),
                _ => cond,
            });
        }
        select.selection = selection;
        Query { with: vec![], body: SetExpr::Select(Box::new(select)), order_by, limit }
    }

    /// `(local = outer)` linking a subquery to its enclosing query.
    fn correlation(&mut self, outer: &Scope, local: &Scope) -> Expr {
        let outer_cols = outer.columns();
        let (_, oc, _) = outer_cols.choose(self.rng).expect("outer scope has columns");
        let lc = self.pick_local_column(local);
        let op = *[BinaryOp::Eq, BinaryOp::NullSafeEq, BinaryOp::Lt, BinaryOp::GtEq].choose(self.rng).unwrap();
        Expr::binary(op, Expr::Column(lc), Expr::Column(oc.clone()))
    }

    /// Generates the expression under test.
    ///
    /// With `dependent`, columns of `scope` may be referenced (correlated
    /// subqueries for `PhiKind::Subquery`); otherwise the expression is
    /// closed. Returns `None` after `attempts` unsuccessful tries.
    pub fn candidate(
        &mut self,
        scope: &Scope,
        outer: OuterTables,
        kind: PhiKind,
        dependent: bool,
        budget: usize,
        attempts: usize,
    ) -> Option<FoldCandidate> {
        self.register_scope(scope);
        let phi_scope = if dependent { scope.clone() } else { Scope::empty() };
        for _ in 0..attempts {
            let (phi, shape) = match kind {
                PhiKind::Expression => {
                    let ctx = Ctx { columns: dependent, ..Ctx::full() }.without_subqueries();
                    (self.expr(&phi_scope, budget, ctx), PhiShape::Scalar)
                }
                PhiKind::Subquery => {
                    if budget < 2 {
                        return None;
                    }
                    self.subquery_phi(&phi_scope, budget, dependent)
                }
            };
            if phi.depth() > budget || phi.has_aggregate() {
                continue;
            }
            if dependent && phi.free_columns().is_empty() && self.rng.random_bool(0.8) {
                continue;
            }
            let mut relations = self.seen.clone();
            for t in scope.tables() {
                relations.insert(t.qualifier.clone(), t.relation.clone());
            }
            return Some(FoldCandidate::new(phi, shape, outer.clone(), relations));
        }
        None
    }

    fn subquery_phi(&mut self, scope: &Scope, budget: usize, dependent: bool) -> (Expr, PhiShape) {
        let correlated = dependent && !scope.is_empty();
        let roll = self.rng.random_range(0..20);
        if !dependent && roll < 5 {
            // A set of values for `x IN φ`; its result expression must not
            // carry affinity or collation into the comparison.
            let mut q = self.subquery(scope, budget, Want::Column, false);
            if !rowset_transparent(&q, &self.seen) {
                if let Some(sel) = q.as_select_mut() {
                    if let Some(SelectItem::Expr { expr, .. }) = sel.items.first_mut() {
                        let inner = std::mem::replace(expr, Expr::null());
                        *expr = Expr::func("coalesce", vec![inner, Expr::null()]);
                    }
                    sel.distinct = false;
                }
            }
            return (Expr::subquery(q), PhiShape::RowSet);
        }
        let roll = if budget < 3 && roll > 15 { roll - 5 } else { roll };
        let phi = match roll {
            0..=10 => Expr::subquery(self.subquery(scope, budget, Want::Scalar, correlated)),
            11..=15 => Expr::Exists {
                query: Box::new(self.subquery(scope, budget, Want::Any, correlated)),
                negated: self.rng.random_bool(0.3),
            },
            _ => {
                let ctx = Ctx { columns: dependent, ..Ctx::full() }.without_subqueries();
                let lhs = self.expr(scope, budget - 1, ctx);
                Expr::In {
                    expr: Box::new(lhs),
                    set: Box::new(Expr::subquery(self.subquery(scope, budget - 1, Want::Column, correlated))),
                    negated: self.rng.random_bool(0.3),
                }
            }
        };
        (phi, PhiShape::Scalar)
    }

    /// Embeds the candidate into a predicate of depth ≤ `budget`.
    ///
    /// Non-transparent candidates are first wrapped in an operator that
    /// only looks at the value (IS NULL, arithmetic, NOT, ...), so that
    /// swapping in a literal cannot change comparison affinity or
    /// collation. Row-set candidates always become `x [NOT] IN φ`.
    /// `no_bare` forces at least one wrapping operator that is not unary
    /// plus or minus (GROUP BY / ORDER BY terms must never fold to an
    /// integer literal).
    pub fn predicate(&mut self, scope: &Scope, cand: &FoldCandidate, budget: usize, ctx: Ctx, no_bare: bool) -> Expr {
        let mut p = Expr::Phi(Box::new(cand.phi.clone()));
        let sibling_ctx = Ctx { collate: false, ..ctx };
        if cand.shape == PhiShape::RowSet {
            let lhs = self.expr(scope, budget.saturating_sub(1).max(1), sibling_ctx.without_subqueries());
            p = Expr::In { expr: Box::new(lhs), set: Box::new(p), negated: self.rng.random_bool(0.3) };
        } else if !cand.transparent || no_bare {
            p = self.neutral_wrap(p, scope, sibling_ctx, budget);
        }
        let extra = budget.saturating_sub(p.depth());
        let wraps = if extra == 0 { 0 } else { self.rng.random_range(0..=extra.min(2)) };
        for _ in 0..wraps {
            let room = budget.saturating_sub(1);
            if p.depth() > room {
                break;
            }
            p = self.wrap(p, scope, sibling_ctx, room);
        }
        if no_bare && matches!(p, Expr::Phi(_)) {
            p = Expr::binary(BinaryOp::Add, p, Expr::lit(0));
        }
        p
    }

    /// Positions where only the value of `p` matters.
    fn neutral_wrap(&mut self, p: Expr, scope: &Scope, ctx: Ctx, budget: usize) -> Expr {
        let sib = budget.saturating_sub(1).max(1);
        match self.rng.random_range(0..9) {
            0 => Expr::IsNull { expr: Box::new(p), negated: false },
            1 => Expr::IsNull { expr: Box::new(p), negated: true },
            2 => Expr::unary(UnaryOp::Not, p),
            3 => {
                use BinaryOp::*;
                let op = *[Add, Sub, Mul, BitAnd, BitOr].choose(self.rng).unwrap();
                let other = self.expr(scope, sib, ctx);
                if self.rng.random() { Expr::binary(op, p, other) } else { Expr::binary(op, other, p) }
            }
            4 => Expr::binary(BinaryOp::Concat, p, self.expr(scope, sib, ctx)),
            5 => Expr::func(*["length", "typeof", "hex", "quote"].choose(self.rng).unwrap(), vec![p]),
            6 => Expr::Case {
                operand: None,
                branches: vec![(p, self.expr(scope, sib, ctx))],
                otherwise: Some(Box::new(self.expr(scope, sib, ctx))),
            },
            7 => Expr::func("coalesce", vec![p, self.expr(scope, sib, ctx)]),
            _ => Expr::binary(BinaryOp::And, p, self.expr(scope, sib, ctx)),
        }
    }

    /// Any enclosing operator. `p` is transparent or already wrapped.
    fn wrap(&mut self, p: Expr, scope: &Scope, ctx: Ctx, budget: usize) -> Expr {
        let sib = budget.max(1);
        match self.rng.random_range(0..12) {
            0..=2 => {
                let op = *BinaryOp::COMPARISONS.choose(self.rng).unwrap();
                let o = self.expr(scope, sib, ctx);
                if self.rng.random() { Expr::binary(op, p, o) } else { Expr::binary(op, o, p) }
            }
            3..=5 => {
                let op = if self.rng.random() { BinaryOp::And } else { BinaryOp::Or };
                let o = self.expr(scope, sib, ctx);
                if self.rng.random() { Expr::binary(op, p, o) } else { Expr::binary(op, o, p) }
            }
            6 => Expr::unary(UnaryOp::Not, p),
            7 => Expr::IsNull { expr: Box::new(p), negated: self.rng.random() },
            8 => {
                let a = self.expr(scope, sib, ctx);
                let b = self.expr(scope, sib, ctx);
                let negated = self.rng.random_bool(0.3);
                match self.rng.random_range(0..3) {
                    0 => Expr::Between { expr: Box::new(p), low: Box::new(a), high: Box::new(b), negated },
                    1 => Expr::Between { expr: Box::new(a), low: Box::new(p), high: Box::new(b), negated },
                    _ => Expr::Between { expr: Box::new(a), low: Box::new(b), high: Box::new(p), negated },
                }
            }
            9 => {
                let a = self.expr(scope, sib, ctx);
                let negated = self.rng.random_bool(0.3);
                if self.rng.random() {
                    Expr::In { expr: Box::new(p), set: Box::new(Expr::List(vec![a])), negated }
                } else {
                    let b = self.expr(scope, sib, ctx);
                    Expr::In { expr: Box::new(a), set: Box::new(Expr::List(vec![p, b])), negated }
                }
            }
            10 => {
                let a = self.expr(scope, sib, ctx);
                let b = self.expr(scope, sib, ctx);
                match self.rng.random_range(0..3) {
                    0 => Expr::Case { operand: None, branches: vec![(p, a)], otherwise: Some(Box::new(b)) },
                    1 => Expr::Case { operand: None, branches: vec![(a, p)], otherwise: Some(Box::new(b)) },
                    _ => Expr::Case { operand: Some(Box::new(p)), branches: vec![(a, b)], otherwise: None },
                }
            }
            _ => {
                use BinaryOp::*;
                let op = *[Add, Sub, Mul, Div, Mod, Concat].choose(self.rng).unwrap();
                let o = self.expr(scope, sib, ctx);
                if self.rng.random() { Expr::binary(op, p, o) } else { Expr::binary(op, o, p) }
            }
        }
    }
}

fn select_references_outer(select: &Select, outer: &Scope) -> bool {
    let outer_quals: BTreeSet<&str> = outer.tables().map(|t| t.qualifier.as_str()).collect();
    let q = Query::select(select.clone());
    q.free_columns().iter().any(|c| c.qualifier.as_deref().is_some_and(|q| outer_quals.contains(q)))
}

/// A relation for scratch tables and derived tables: untyped, binary
/// columns `c0..cn`.
pub fn derived_relation(name: &str, columns: usize) -> Relation {
    Relation {
        name: name.to_owned(),
        kind: RelationKind::Derived,
        columns: (0..columns).map(|i| Column::untyped(&format!("c{i}"))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(name: &str, cols: &[(&str, Option<&str>, Collation)]) -> Relation {
        Relation {
            name: name.into(),
            kind: RelationKind::Table,
            columns: cols
                .iter()
                .map(|(n, t, c)| Column {
                    name: n.to_string(),
                    type_name: t.map(|s| s.to_string()),
                    affinity: Affinity::of_declared_type(*t),
                    collation: *c,
                    nullable: true,
                    unique: false,
                })
                .collect(),
        }
    }

    fn t0() -> Relation {
        rel("t0", &[("c0", Some("INT"), Collation::Binary), ("c1", None, Collation::Binary), ("c2", Some("TEXT"), Collation::NoCase)])
    }

    fn scope() -> Scope {
        Scope::new(vec![ScopeTable { qualifier: "t0".into(), relation: t0() }])
    }

    #[test]
    fn analysis_follows_engine_rules() {
        let s = scope();
        let lookup = &s;
        assert_eq!(affinity(&Expr::col("t0", "c0"), lookup), Affinity::Integer);
        assert_eq!(affinity(&Expr::col("t0", "c1"), lookup), Affinity::Blob);
        let plus = Expr::unary(UnaryOp::Plus, Expr::col("t0", "c2"));
        assert_eq!(affinity(&plus, lookup), Affinity::None);
        assert_eq!(collation(&plus, lookup), Some(Collation::NoCase));
        assert!(!is_transparent(&plus, lookup));
        let sum = Expr::binary(BinaryOp::Add, Expr::col("t0", "c0"), Expr::lit(1));
        assert!(is_transparent(&sum, lookup));
        let explicit = Expr::binary(
            BinaryOp::Concat,
            Expr::lit(1),
            Expr::Collate { expr: Box::new(Expr::lit("a")), collation: "NOCASE".into() },
        );
        assert_eq!(collation(&explicit, lookup), Some(Collation::NoCase));
        let cast = Expr::Cast { expr: Box::new(Expr::lit(1)), type_name: "TEXT".into() };
        assert_eq!(affinity(&cast, lookup), Affinity::Text);
    }

    #[test]
    fn integer_constants_detected() {
        assert!(is_integer_constant(&Expr::lit(3)));
        assert!(is_integer_constant(&Expr::unary(UnaryOp::Neg, Expr::lit(3))));
        assert!(!is_integer_constant(&Expr::lit(i64::MIN)));
        assert!(!is_integer_constant(&Expr::lit("3")));
        assert!(!is_integer_constant(&Expr::binary(BinaryOp::Add, Expr::lit(3), Expr::lit(0))));
    }

    #[test]
    fn depth_bound_respected() {
        let config = ExprConfig::sqlite();
        let rels = vec![t0()];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = ExprGen::new(&mut rng, &config, &rels);
            for budget in [1, 2, 3, 5] {
                let e = g.expr(&scope(), budget, Ctx::full());
                assert!(e.depth() <= budget, "depth {} > {budget}: {e:?}", e.depth());
            }
        }
    }

    #[test]
    fn candidates_classified_by_columns() {
        let config = ExprConfig::sqlite();
        let rels = vec![t0()];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = ExprGen::new(&mut rng, &config, &rels);
        for i in 0..200 {
            let kind = if i % 2 == 0 { PhiKind::Expression } else { PhiKind::Subquery };
            let dependent = i % 3 != 0;
            let Some(c) = g.candidate(&scope(), OuterTables::none(), kind, dependent, 3, 10) else { continue };
            assert_eq!(c.classification == Classification::Independent, c.outer_columns.is_empty());
            assert!(c.phi.depth() <= 3);
            if !dependent {
                assert!(c.outer_columns.is_empty());
            }
            for col in &c.outer_columns {
                assert_eq!(col.qualifier.as_deref(), Some("t0"));
            }
            if kind == PhiKind::Expression {
                assert!(!c.phi.contains_subquery());
            }
        }
    }

    #[test]
    fn predicates_contain_phi_once_and_respect_depth() {
        let config = ExprConfig::sqlite();
        let rels = vec![t0()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut g = ExprGen::new(&mut rng, &config, &rels);
        for _ in 0..300 {
            let Some(c) = g.candidate(&scope(), OuterTables::none(), PhiKind::Expression, true, 2, 10) else { continue };
            let p = g.predicate(&scope(), &c, 3, Ctx::full().without_subqueries(), true);
            assert_eq!(p.phi_count(), 1);
            assert!(p.depth() <= 4, "{p:?}");
            assert!(!matches!(p, Expr::Phi(_)));
            if !c.transparent {
                // never directly under a comparison
                fn check(e: &Expr) {
                    if let Expr::Binary(op, l, r) = e {
                        if op.is_comparison() {
                            assert!(!matches!(**l, Expr::Phi(_)) && !matches!(**r, Expr::Phi(_)));
                        }
                    }
                    e.children().into_iter().for_each(check);
                }
                check(&p);
            }
        }
    }

    #[test]
    fn correlated_subqueries_reference_outer() {
        let config = ExprConfig::sqlite();
        let rels = vec![t0()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = ExprGen::new(&mut rng, &config, &rels);
        for _ in 0..100 {
            let q = g.subquery(&scope(), 3, Want::Scalar, true);
            assert!(q.free_columns().iter().any(|c| c.qualifier.as_deref() == Some("t0")), "{q:?}");
        }
    }
}
