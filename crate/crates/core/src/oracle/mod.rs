//! The folding oracle.
//!
//! An expression `φ` is evaluated on its own (the auxiliary query), its
//! result is substituted back into the query that contained it, and both
//! versions must return the same rows. Dependent expressions fold to a
//! mapping from the columns they read to their value, rendered as a CASE.

mod generate;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::ast::*;
use crate::engine::{ErrorKind, ExecutionError, PlanFingerprint, QueryCounters, QueryResult, Session};
use crate::error::RenderError;
use crate::expr_gen::{Classification, ExprConfig, FoldCandidate, PhiShape};
use crate::render::Renderer;
use crate::schema::Affinity;
use crate::state_gen::{self, DatabaseState};
use crate::value::{SqlType, SqlValue, DEFAULT_REAL_EPSILON};

pub use generate::{generate_case, generate_predicate_case, generate_relation_case};

/// Where the predicate holding the expression under test is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Where,
    JoinOn,
    Having,
    GroupBy,
    OrderBy,
    UpdateWhere,
    DeleteWhere,
    InsertSource,
    CreateView,
    CreateIndex,
}

impl Placement {
    pub const ALL: [Placement; 10] = [
        Placement::Where,
        Placement::JoinOn,
        Placement::Having,
        Placement::GroupBy,
        Placement::OrderBy,
        Placement::UpdateWhere,
        Placement::DeleteWhere,
        Placement::InsertSource,
        Placement::CreateView,
        Placement::CreateIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placement::Where => "where",
            Placement::JoinOn => "join-on",
            Placement::Having => "having",
            Placement::GroupBy => "group-by",
            Placement::OrderBy => "order-by",
            Placement::UpdateWhere => "update-where",
            Placement::DeleteWhere => "delete-where",
            Placement::InsertSource => "insert-source",
            Placement::CreateView => "create-view",
            Placement::CreateIndex => "create-index",
        }
    }

    /// Placements inside a plain SELECT.
    pub fn is_select(self) -> bool {
        matches!(self, Placement::Where | Placement::JoinOn | Placement::Having | Placement::GroupBy | Placement::OrderBy)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Expressions and subqueries under test, plus relation folding.
    Combined,
    /// Only subquery-free expressions, and no subqueries anywhere.
    Expressions,
    /// Only subqueries under test.
    Subqueries,
    /// Only relation folding.
    Relations,
}

impl OracleMode {
    pub fn name(self) -> &'static str {
        match self {
            OracleMode::Combined => "combined",
            OracleMode::Expressions => "expressions",
            OracleMode::Subqueries => "subqueries",
            OracleMode::Relations => "relations",
        }
    }
}

impl FromStr for OracleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [OracleMode::Combined, OracleMode::Expressions, OracleMode::Subqueries, OracleMode::Relations]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfig {
    pub mode: OracleMode,
    /// Depth bound for generated predicates; the expression under test gets
    /// one level less.
    pub max_depth: usize,
    /// Largest CASE mapping, value list or folded relation.
    pub mapping_cap: usize,
    /// Share of iterations using UPDATE/DELETE/INSERT/CREATE placements.
    pub statement_placement_weight: f64,
    /// Share of relation-folding iterations in combined mode.
    pub relation_ratio: f64,
    pub dependent_probability: f64,
    pub generation_attempts: usize,
    /// Run EXPLAIN on the original and folded statements (uncounted).
    pub collect_plans: bool,
    pub real_epsilon: f64,
    pub exprs: ExprConfig,
}

impl OracleConfig {
    pub fn new(exprs: ExprConfig) -> Self {
        Self {
            mode: OracleMode::Combined,
            max_depth: 3,
            mapping_cap: 256,
            statement_placement_weight: 0.1,
            relation_ratio: 0.2,
            dependent_probability: 0.5,
            generation_attempts: 25,
            collect_plans: false,
            real_epsilon: DEFAULT_REAL_EPSILON,
            exprs,
        }
    }

    pub fn with_mode(mut self, mode: OracleMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_max_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth.max(1);
        self
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self::new(ExprConfig::sqlite())
    }
}

/// A column the mapping is keyed by. `strip_affinity` compares through a
/// unary plus, for columns whose affinity is not known statically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingKey {
    pub column: ColumnRef,
    pub strip_affinity: bool,
}

/// The folded form of the expression under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FoldedConstant {
    Scalar(SqlValue),
    /// Rows of a non-correlated subquery used as the right side of IN.
    ValueList(Vec<SqlValue>),
    /// One entry per distinct key tuple.
    RowMapping { keys: Vec<MappingKey>, entries: Vec<(Vec<SqlValue>, SqlValue)> },
}

impl FoldedConstant {
    /// Expression that replaces the original one.
    pub fn to_expr(&self) -> Expr {
        match self {
            FoldedConstant::Scalar(v) => Expr::Literal(v.clone()),
            FoldedConstant::ValueList(vs) => Expr::List(vs.iter().cloned().map(Expr::Literal).collect()),
            FoldedConstant::RowMapping { keys, entries } => Expr::Case {
                operand: None,
                branches: entries.iter().map(|(k, v)| (key_condition(keys, k), Expr::Literal(v.clone()))).collect(),
                otherwise: None,
            },
        }
    }

    /// Common storage class of the folded values.
    pub fn source_type(&self) -> SqlType {
        let values: Vec<&SqlValue> = match self {
            FoldedConstant::Scalar(v) => vec![v],
            FoldedConstant::ValueList(vs) => vs.iter().collect(),
            FoldedConstant::RowMapping { entries, .. } => entries.iter().map(|(_, v)| v).collect(),
        };
        values.iter().fold(SqlType::Null, |acc, v| acc.common_supertype(v.sql_type()))
    }

    pub fn len(&self) -> usize {
        match self {
            FoldedConstant::Scalar(_) => 1,
            FoldedConstant::ValueList(vs) => vs.len(),
            FoldedConstant::RowMapping { entries, .. } => entries.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `key₁ IS v₁ AND key₂ IS v₂ ...`; text literals carry an explicit binary
/// collation so a NOCASE or RTRIM key column cannot match a different
/// spelling.
fn key_condition(keys: &[MappingKey], values: &[SqlValue]) -> Expr {
    let mut cond: Option<Expr> = None;
    for (key, v) in keys.iter().zip(values) {
        let column = Expr::Column(key.column.clone());
        let lhs = if key.strip_affinity { Expr::unary(UnaryOp::Plus, column) } else { column };
        let rhs = match v {
            SqlValue::Text(_) => Expr::Collate { expr: Box::new(Expr::Literal(v.clone())), collation: "BINARY".into() },
            _ => Expr::Literal(v.clone()),
        };
        let term = Expr::binary(BinaryOp::NullSafeEq, lhs, rhs);
        cond = Some(match cond {
            None => term,
            Some(c) => Expr::and(c, term),
        });
    }
    cond.expect("mapping has at least one key")
}

/// Why an iteration produced no test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    /// A dependent auxiliary query returned no rows.
    EmptyAuxiliary,
    /// The relation source returned no rows.
    EmptyRelationSource,
    MappingTooLarge,
    /// The folded value (or a key) is a real, which cannot be spelled
    /// back exactly.
    RealValue,
    /// A value the renderer cannot spell (embedded NUL, invalid UTF-8).
    Unrepresentable,
    /// Equal keys mapped to different values.
    InconsistentMapping,
    GenerationExhausted,
}

impl DiscardReason {
    pub fn name(self) -> &'static str {
        match self {
            DiscardReason::EmptyAuxiliary => "empty-auxiliary",
            DiscardReason::EmptyRelationSource => "empty-relation-source",
            DiscardReason::MappingTooLarge => "mapping-too-large",
            DiscardReason::RealValue => "real-value",
            DiscardReason::Unrepresentable => "unrepresentable",
            DiscardReason::InconsistentMapping => "inconsistent-mapping",
            DiscardReason::GenerationExhausted => "generation-exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Discrepancy,
    Discarded(DiscardReason),
    EngineError(ErrorKind),
}

impl Outcome {
    /// Pass or Discrepancy: the test ran to completion.
    pub fn is_test(self) -> bool {
        matches!(self, Outcome::Pass | Outcome::Discrepancy)
    }

    /// Worth a bug report.
    pub fn is_reportable(self) -> bool {
        matches!(self, Outcome::Discrepancy | Outcome::EngineError(ErrorKind::Internal | ErrorKind::Crash | ErrorKind::Hang))
    }

    pub fn name(self) -> String {
        match self {
            Outcome::Pass => "pass".into(),
            Outcome::Discrepancy => "discrepancy".into(),
            Outcome::Discarded(r) => format!("discarded:{}", r.name()),
            Outcome::EngineError(k) => k.to_string(),
        }
    }
}

/// How a statement of the original or folded script is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRole {
    /// Bookkeeping before the test statements; not counted.
    Setup,
    /// Part of the test; counted, result ignored.
    Counted,
    /// Part of the test; counted, result compared.
    Compared,
    /// Always run, even after a failure; not counted, errors ignored.
    Cleanup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub statement: Statement,
    pub role: StepRole,
    /// Rows compare as a sequence.
    pub ordered: bool,
    /// Fingerprint this statement's plan when collecting plans.
    pub explain: bool,
}

impl Step {
    pub fn new(statement: Statement, role: StepRole) -> Self {
        Self { statement, role, ordered: false, explain: false }
    }

    pub fn compared(statement: Statement) -> Self {
        Self { explain: true, ..Self::new(statement, StepRole::Compared) }
    }
}

/// How a relation is materialized for the outer query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationForm {
    /// A created table filled by INSERT.
    Insert,
    /// A derived table in FROM.
    Derived,
    /// A common table expression.
    Cte,
}

impl RelationForm {
    pub const ALL: [RelationForm; 3] = [RelationForm::Insert, RelationForm::Derived, RelationForm::Cte];

    pub fn name(self) -> &'static str {
        match self {
            RelationForm::Insert => "insert",
            RelationForm::Derived => "derived",
            RelationForm::Cte => "cte",
        }
    }
}

/// Alias under which the outer query of a relation test reads the relation.
pub const RELATION_ALIAS: &str = "r0";

/// A replayable test: everything needed to run the auxiliary, original and
/// folded statements again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestCase {
    Predicate {
        placement: Placement,
        candidate: FoldCandidate,
        /// The original statements; exactly the test statements contain a
        /// marked `φ`.
        original: Vec<Step>,
    },
    Relation {
        /// Non-correlated subquery with items `c0..cn`.
        source: Query,
        original_form: RelationForm,
        folded_form: RelationForm,
        /// Reads the relation as [`RELATION_ALIAS`]; its first FROM factor
        /// is a placeholder.
        outer: Query,
    },
}

impl TestCase {
    /// Site label used in statistics and bug buckets.
    pub fn site(&self) -> String {
        match self {
            TestCase::Predicate { placement, .. } => placement.name().to_owned(),
            TestCase::Relation { original_form, folded_form, .. } => {
                format!("relation-{}-{}", original_form.name(), folded_form.name())
            }
        }
    }

    pub fn placement(&self) -> Option<Placement> {
        match self {
            TestCase::Predicate { placement, .. } => Some(*placement),
            TestCase::Relation { .. } => None,
        }
    }

    /// Node kinds of the expression under test (or the relation source).
    pub fn node_kinds(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        match self {
            TestCase::Predicate { candidate, .. } => candidate.phi.node_kinds(&mut out),
            TestCase::Relation { source, .. } => source.visit_exprs(&mut |e| out.push(e.kind_name())),
        }
        out.sort_unstable();
        out
    }

    /// The query that computes the folded value.
    pub fn auxiliary(&self) -> Query {
        match self {
            TestCase::Predicate { candidate, .. } => build_auxiliary(candidate),
            TestCase::Relation { source, .. } => source.clone(),
        }
    }
}

/// Texts and results of one test. Results are `None` when the statement
/// did not run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QueryTriple {
    pub auxiliary: String,
    pub original: Vec<String>,
    pub folded: Vec<String>,
    pub aux_result: Option<QueryResult>,
    pub original_result: Option<Vec<QueryResult>>,
    pub folded_result: Option<Vec<QueryResult>>,
    pub folded_constant: Option<FoldedConstant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub outcome: Outcome,
    pub reason: String,
    pub case: Option<TestCase>,
    pub triple: QueryTriple,
    /// Normalized engine error message behind an EngineError outcome.
    pub error: Option<String>,
    pub plans: Vec<PlanFingerprint>,
    /// Counted queries issued by this iteration.
    pub queries: QueryCounters,
}

impl OracleVerdict {
    fn new(outcome: Outcome, reason: impl Into<String>, case: Option<TestCase>, triple: QueryTriple) -> Self {
        Self { outcome, reason: reason.into(), case, triple, error: None, plans: vec![], queries: QueryCounters::default() }
    }

    pub fn discarded(reason: DiscardReason, detail: impl Into<String>) -> Self {
        Self::new(Outcome::Discarded(reason), detail, None, QueryTriple::default())
    }
}

/// The auxiliary query: `SELECT φ` for closed expressions (the bare
/// subquery for a row set); otherwise the referenced columns followed by
/// `φ`, over the FROM clause the expression was generated against. For an
/// expression in an ON clause the auxiliary query reads the cross product
/// of the tables it references instead.
pub fn build_auxiliary(candidate: &FoldCandidate) -> Query {
    match (candidate.classification, candidate.shape) {
        (Classification::Independent, PhiShape::RowSet) => match &candidate.phi {
            Expr::Subquery(q) => (**q).clone(),
            other => Query::select(Select { items: vec![SelectItem::expr(other.clone())], ..Default::default() }),
        },
        (Classification::Independent, PhiShape::Scalar) => {
            Query::select(Select { items: vec![SelectItem::expr(candidate.phi.clone())], ..Default::default() })
        }
        (Classification::Dependent, _) => {
            let mut items: Vec<SelectItem> =
                candidate.outer_columns.iter().map(|c| SelectItem::expr(Expr::Column(c.clone()))).collect();
            items.push(SelectItem::expr(candidate.phi.clone()));
            let from = auxiliary_from(candidate);
            Query::select(Select { items, from, ..Default::default() })
        }
    }
}

fn auxiliary_from(candidate: &FoldCandidate) -> Option<FromClause> {
    let from = candidate.outer_tables.from.clone()?;
    if candidate.outer_tables.join_on.is_none() {
        return Some(from);
    }
    let referenced: Vec<&str> = candidate.outer_columns.iter().filter_map(|c| c.qualifier.as_deref()).collect();
    let mut factors = from.factors().filter(|f| referenced.contains(&f.qualifier())).cloned();
    let first = factors.next()?;
    Some(FromClause { first, joins: factors.map(|factor| Join { kind: JoinKind::Comma, factor, on: None }).collect() })
}

/// A real that renders and parses back exactly.
fn exact_real(r: f64) -> bool {
    r.is_finite() && r.abs() < 1e12 && (r * 16.0).fract() == 0.0
}

fn check_value(v: &SqlValue) -> Result<(), (DiscardReason, String)> {
    match v {
        // Inexact reals may not survive the trip through a literal.
        SqlValue::Real(r) if !exact_real(*r) => {
            Err((DiscardReason::RealValue, format!("real value {r} cannot be folded")))
        }
        SqlValue::Text(t) if t.contains('\0') || t.contains('\u{FFFD}') => {
            Err((DiscardReason::Unrepresentable, "text with NUL or undecodable bytes".into()))
        }
        _ => Ok(()),
    }
}

/// Equality the engine's `IS` applies between a key column and a literal
/// of the key's value.
fn key_matches(a: &SqlValue, b: &SqlValue) -> bool {
    match (a, b) {
        (SqlValue::Integer(i), SqlValue::Real(r)) | (SqlValue::Real(r), SqlValue::Integer(i)) => *i as f64 == *r,
        _ => a == b,
    }
}

/// Exact value identity: same storage class and payload.
fn same_value(a: &SqlValue, b: &SqlValue) -> bool {
    a.sql_type() == b.sql_type() && a == b
}

/// Turns the auxiliary result into the folded constant.
pub fn fold(candidate: &FoldCandidate, aux: &QueryResult, cap: usize) -> Result<FoldedConstant, (DiscardReason, String)> {
    match (candidate.classification, candidate.shape) {
        (Classification::Independent, PhiShape::Scalar) => {
            // An empty result reads as NULL.
            let v = aux.single_value().cloned().unwrap_or(SqlValue::Null);
            check_value(&v)?;
            Ok(FoldedConstant::Scalar(v))
        }
        (Classification::Independent, PhiShape::RowSet) => {
            if aux.rows.len() > cap {
                return Err((DiscardReason::MappingTooLarge, format!("{} values", aux.rows.len())));
            }
            let values: Vec<SqlValue> = aux.rows.iter().map(|r| r.first().cloned().unwrap_or(SqlValue::Null)).collect();
            for v in &values {
                check_value(v)?;
            }
            Ok(FoldedConstant::ValueList(values))
        }
        (Classification::Dependent, _) => {
            if aux.rows.is_empty() {
                return Err((DiscardReason::EmptyAuxiliary, "auxiliary query returned no rows".into()));
            }
            let n = candidate.outer_columns.len();
            let mut entries: Vec<(Vec<SqlValue>, SqlValue)> = Vec::new();
            for row in &aux.rows {
                let (key, value) = (&row[..n], &row[n]);
                check_value(value)?;
                for k in key {
                    check_value(k)?;
                }
                match entries.iter().find(|(k, _)| k.iter().zip(key).all(|(a, b)| key_matches(a, b))) {
                    Some((k, v)) => {
                        let identical = k.iter().zip(key).all(|(a, b)| same_value(a, b));
                        if !same_value(v, value) {
                            return Err((
                                DiscardReason::InconsistentMapping,
                                format!("key {key:?} maps to both {v} and {value} (previous key {k:?}, identical: {identical})"),
                            ));
                        }
                    }
                    None => {
                        if entries.len() == cap {
                            return Err((DiscardReason::MappingTooLarge, format!("more than {cap} distinct keys")));
                        }
                        entries.push((key.to_vec(), value.clone()));
                    }
                }
            }
            let keys = candidate
                .outer_columns
                .iter()
                .map(|c| MappingKey {
                    column: c.clone(),
                    strip_affinity: candidate.column(c).is_none_or(|col| col.affinity == Affinity::Unknown),
                })
                .collect();
            Ok(FoldedConstant::RowMapping { keys, entries })
        }
    }
}

/// The folded statements: the original ones with `φ` replaced.
pub fn build_folded(original: &[Step], placement: Option<Placement>, constant: &FoldedConstant) -> Vec<Step> {
    let replacement = constant.to_expr();
    original
        .iter()
        .map(|step| {
            let mut step = step.clone();
            step.statement.replace_phi(&replacement);
            if placement == Some(Placement::CreateIndex) {
                // Index predicates name the table's columns bare.
                step.statement.for_each_expr_mut(&mut state_gen::unqualify);
            }
            step
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Equal,
    /// A description of the first difference.
    Unequal(String),
}

fn cmp_rows(a: &[SqlValue], b: &[SqlValue]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(a.len().cmp(&b.len()))
}

fn render_row(row: &[SqlValue]) -> String {
    format!("({})", row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))
}

/// Compares two results: as sequences when both are ordered, otherwise as
/// multisets. NULLs are equal to each other; reals compare within
/// `epsilon`.
pub fn compare(original: &QueryResult, folded: &QueryResult, epsilon: f64) -> Comparison {
    if original.rows.len() != folded.rows.len() {
        return Comparison::Unequal(format!("{} rows vs {} rows", original.rows.len(), folded.rows.len()));
    }
    let (mut a, mut b): (Vec<&Vec<SqlValue>>, Vec<&Vec<SqlValue>>) = (original.rows.iter().collect(), folded.rows.iter().collect());
    if !(original.ordered && folded.ordered) {
        a.sort_by(|x, y| cmp_rows(x, y));
        b.sort_by(|x, y| cmp_rows(x, y));
    }
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        if x.len() != y.len() || !x.iter().zip(y.iter()).all(|(p, q)| p.oracle_eq(q, epsilon)) {
            return Comparison::Unequal(format!("row {i}: {} vs {}", render_row(x), render_row(y)));
        }
    }
    Comparison::Equal
}

/// Outputs of running a script.
struct ScriptRun {
    results: Vec<QueryResult>,
    error: Option<ExecutionError>,
}

fn run_script(session: &mut Session, texts: &[String], steps: &[Step], collect_plans: bool, plans: &mut Vec<PlanFingerprint>) -> ScriptRun {
    let mut run = ScriptRun { results: vec![], error: None };
    for (sql, step) in texts.iter().zip(steps) {
        if step.role == StepRole::Cleanup {
            let _ = session.execute_uncounted(sql);
            continue;
        }
        if run.error.is_some() {
            continue;
        }
        let result = match step.role {
            StepRole::Setup => session.execute_uncounted(sql),
            _ => session.execute(sql),
        };
        match result {
            Ok(r) => {
                if collect_plans && step.explain {
                    if let Ok(p) = session.explain_plan(sql) {
                        plans.push(p);
                    }
                }
                if step.role == StepRole::Compared {
                    run.results.push(r.with_ordered(step.ordered));
                }
            }
            Err(e) => run.error = Some(e),
        }
    }
    run
}

fn render_steps(renderer: &Renderer, steps: &[Step]) -> Result<Vec<String>, RenderError> {
    steps.iter().map(|s| renderer.statement(&s.statement)).collect()
}

fn severity(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Expected => 0,
        ErrorKind::Internal => 1,
        ErrorKind::Hang => 2,
        ErrorKind::Crash => 3,
    }
}

/// Runs a test case: auxiliary query, fold, original, folded, compare.
pub fn execute_case(case: &TestCase, session: &mut Session, config: &OracleConfig) -> OracleVerdict {
    let renderer = Renderer::new(session.profile());
    let before = session.counters();
    let mut verdict = execute_inner(case, session, config, &renderer);
    verdict.case = Some(case.clone());
    verdict.queries = session.counters().since(&before);
    verdict
}

fn error_verdict(e: &ExecutionError, stage: &str, triple: QueryTriple) -> OracleVerdict {
    let mut v = OracleVerdict::new(Outcome::EngineError(e.kind), format!("{stage}: {}", e.message), None, triple);
    v.error = Some(e.message.clone());
    v
}

fn execute_inner(case: &TestCase, session: &mut Session, config: &OracleConfig, renderer: &Renderer) -> OracleVerdict {
    let unrepresentable = |e: RenderError, triple: QueryTriple| {
        OracleVerdict::new(Outcome::Discarded(DiscardReason::Unrepresentable), e.to_string(), None, triple)
    };
    let mut triple = QueryTriple::default();
    let aux = case.auxiliary();
    triple.auxiliary = match renderer.query(&aux) {
        Ok(s) => s,
        Err(e) => return unrepresentable(e, triple),
    };
    let aux_result = match session.execute(&triple.auxiliary) {
        Ok(r) => r,
        Err(e) => return error_verdict(&e, "auxiliary query", triple),
    };
    triple.aux_result = Some(aux_result.clone());

    let (original, folded, placement) = match case {
        TestCase::Predicate { placement, candidate, original } => {
            let constant = match fold(candidate, &aux_result, config.mapping_cap) {
                Ok(c) => c,
                Err((reason, detail)) => return OracleVerdict::new(Outcome::Discarded(reason), detail, None, triple),
            };
            let folded = build_folded(original, Some(*placement), &constant);
            triple.folded_constant = Some(constant);
            (original.clone(), folded, Some(*placement))
        }
        TestCase::Relation { source, original_form, folded_form, outer } => {
            if aux_result.rows.is_empty() {
                return OracleVerdict::new(
                    Outcome::Discarded(DiscardReason::EmptyRelationSource),
                    "relation source returned no rows",
                    None,
                    triple,
                );
            }
            if aux_result.rows.len() > config.mapping_cap {
                return OracleVerdict::new(
                    Outcome::Discarded(DiscardReason::MappingTooLarge),
                    format!("{} source rows", aux_result.rows.len()),
                    None,
                    triple,
                );
            }
            for v in aux_result.rows.iter().flatten() {
                if let Err((reason, detail)) = check_value(v) {
                    return OracleVerdict::new(Outcome::Discarded(reason), detail, None, triple);
                }
            }
            let columns = aux_result.columns.len();
            let original = relation_steps(*original_form, RelationSource::Query(source), columns, outer, "ot0");
            let folded = relation_steps(*folded_form, RelationSource::Rows(&aux_result.rows), columns, outer, "ft0");
            (original, folded, None)
        }
    };
    let _ = placement;
    triple.original = match render_steps(renderer, &original) {
        Ok(t) => t,
        Err(e) => return unrepresentable(e, triple),
    };
    triple.folded = match render_steps(renderer, &folded) {
        Ok(t) => t,
        Err(e) => return unrepresentable(e, triple),
    };

    let mut plans = Vec::new();
    let o = run_script(session, &triple.original, &original, config.collect_plans, &mut plans);
    let f = run_script(session, &triple.folded, &folded, config.collect_plans, &mut plans);
    if o.error.is_none() {
        triple.original_result = Some(o.results.clone());
    }
    if f.error.is_none() {
        triple.folded_result = Some(f.results.clone());
    }
    let errors: Vec<(&str, &ExecutionError)> =
        [("original", &o.error), ("folded", &f.error)].into_iter().filter_map(|(s, e)| e.as_ref().map(|e| (s, e))).collect();
    if let Some((stage, e)) = errors.iter().max_by_key(|(_, e)| severity(e.kind)) {
        let mut v = error_verdict(e, stage, triple);
        v.plans = plans;
        return v;
    }
    let mut outcome = Outcome::Pass;
    let mut reason = String::new();
    for (i, (a, b)) in o.results.iter().zip(&f.results).enumerate() {
        if let Comparison::Unequal(witness) = compare(a, b, config.real_epsilon) {
            outcome = Outcome::Discrepancy;
            reason = format!("result {i} differs: {witness}");
            break;
        }
    }
    let mut v = OracleVerdict::new(outcome, reason, None, triple);
    v.plans = plans;
    v
}

enum RelationSource<'a> {
    Query(&'a Query),
    Rows(&'a [Vec<SqlValue>]),
}

fn values_query(rows: &[Vec<SqlValue>]) -> Query {
    Query::values(rows.iter().map(|r| r.iter().cloned().map(Expr::Literal).collect()).collect())
}

/// Statements that materialize the relation in `form` and run the outer
/// query against it.
fn relation_steps(form: RelationForm, source: RelationSource, columns: usize, outer: &Query, table: &str) -> Vec<Step> {
    let names: Vec<String> = (0..columns).map(|i| format!("c{i}")).collect();
    let mut outer = outer.clone();
    let mut steps = Vec::new();
    let factor = match form {
        RelationForm::Insert => {
            steps.push(Step::new(Statement::Drop { kind: ObjectKind::Table, name: table.into(), if_exists: true }, StepRole::Setup));
            steps.push(Step::new(
                Statement::CreateTable(CreateTable {
                    name: table.into(),
                    columns: names
                        .iter()
                        .map(|n| ColumnDef {
                            name: n.clone(),
                            type_name: None,
                            primary_key: false,
                            unique: false,
                            not_null: false,
                            collation: None,
                        })
                        .collect(),
                    without_rowid: false,
                }),
                StepRole::Counted,
            ));
            let source = match source {
                RelationSource::Query(q) => q.clone(),
                RelationSource::Rows(rows) => values_query(rows),
            };
            steps.push(Step::new(
                Statement::Insert { or_ignore: false, table: table.into(), columns: names.clone(), source },
                StepRole::Counted,
            ));
            TableFactor::aliased(table, RELATION_ALIAS)
        }
        RelationForm::Cte => {
            let (query, cte_columns) = match source {
                RelationSource::Query(q) => (q.clone(), vec![]),
                RelationSource::Rows(rows) => (values_query(rows), names.clone()),
            };
            outer.with.push(Cte { name: table.into(), columns: cte_columns, query });
            TableFactor::aliased(table, RELATION_ALIAS)
        }
        RelationForm::Derived => {
            let query = match source {
                RelationSource::Query(q) => q.clone(),
                RelationSource::Rows(rows) => Query::select(Select {
                    items: names
                        .iter()
                        .enumerate()
                        .map(|(i, n)| SelectItem::aliased(Expr::col("fv", &format!("column{}", i + 1)), n))
                        .collect(),
                    from: Some(FromClause::single(TableFactor::Derived {
                        query: Box::new(values_query(rows)),
                        alias: "fv".into(),
                    })),
                    ..Default::default()
                }),
            };
            TableFactor::Derived { query: Box::new(query), alias: RELATION_ALIAS.into() }
        }
    };
    if let Some(from) = outer.as_select_mut().and_then(|s| s.from.as_mut()) {
        from.first = factor;
    }
    steps.push(Step::compared(Statement::Query(outer)));
    if form == RelationForm::Insert {
        steps.push(Step::new(Statement::Drop { kind: ObjectKind::Table, name: table.into(), if_exists: true }, StepRole::Cleanup));
    }
    steps
}

/// One predicate-folding iteration on an applied state.
pub fn run_iteration<R: RngCore>(state: &DatabaseState, session: &mut Session, rng: &mut R, config: &OracleConfig) -> OracleVerdict {
    match generate_predicate_case(state, rng, config) {
        Some(case) => execute_case(&case, session, config),
        None => OracleVerdict::discarded(DiscardReason::GenerationExhausted, "no valid predicate generated"),
    }
}

/// One relation-folding iteration; afterwards every state table is checked
/// to still hold its rows.
pub fn run_relation_iteration<R: RngCore>(
    state: &DatabaseState,
    session: &mut Session,
    rng: &mut R,
    config: &OracleConfig,
) -> OracleVerdict {
    let mut verdict = match generate_relation_case(state, rng, config) {
        Some(case) => execute_case(&case, session, config),
        None => return OracleVerdict::discarded(DiscardReason::GenerationExhausted, "no valid relation source"),
    };
    if let Err(e) = state_gen::verify_counts(state, session) {
        verdict.outcome = Outcome::EngineError(ErrorKind::Internal);
        verdict.reason = format!("state not restored after relation test: {}", e.message);
        verdict.error = Some(e.message);
    }
    verdict
}

/// Picks predicate or relation folding according to the mode.
pub fn run_any<R: RngCore>(state: &DatabaseState, session: &mut Session, rng: &mut R, config: &OracleConfig) -> OracleVerdict {
    let relation = match config.mode {
        OracleMode::Relations => true,
        OracleMode::Combined => rng.random_bool(config.relation_ratio),
        _ => false,
    };
    if relation {
        run_relation_iteration(state, session, rng, config)
    } else {
        run_iteration(state, session, rng, config)
    }
}

#[cfg(test)]
mod tests;
