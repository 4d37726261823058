//! Query and expression trees.
//!
//! Trees are plain data: generators build them, the oracle rewrites them and
//! the renderer turns them into SQL text. Nothing here talks to an engine.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::value::SqlValue;

/// A column reference. `qualifier` is the table name or alias visible in
/// the enclosing scope; unqualified references are only used where SQL
/// forbids qualification (index column lists, view column names).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn new(qualifier: impl Into<String>, column: impl Into<String>) -> Self {
        Self { qualifier: Some(qualifier.into()), column: column.into() }
    }

    pub fn bare(column: impl Into<String>) -> Self {
        Self { qualifier: None, column: column.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    Neg,
    Plus,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    /// Null-safe equality; spelled with the profile's token.
    NullSafeEq,
    NullSafeNotEq,
    And,
    Or,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    BitAnd,
    BitOr,
    ShiftLeft,
    ShiftRight,
    Concat,
    Like,
    NotLike,
    Glob,
    NotGlob,
}

impl BinaryOp {
    pub const COMPARISONS: [BinaryOp; 8] = [
        Self::Eq,
        Self::NotEq,
        Self::Lt,
        Self::LtEq,
        Self::Gt,
        Self::GtEq,
        Self::NullSafeEq,
        Self::NullSafeNotEq,
    ];

    pub fn is_comparison(self) -> bool {
        Self::COMPARISONS.contains(&self)
            || matches!(self, Self::Like | Self::NotLike | Self::Glob | Self::NotGlob)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, Self::And | Self::Or)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Literal(SqlValue),
    Column(ColumnRef),
    Unary(UnaryOp, Box<Expr>),
    IsNull { expr: Box<Expr>, negated: bool },
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, negated: bool },
    /// `expr IN set`, where `set` is a [`Expr::List`], a [`Expr::Subquery`]
    /// or a [`Expr::Phi`] wrapping either.
    In { expr: Box<Expr>, set: Box<Expr>, negated: bool },
    /// Parenthesized value list; only valid as the set of an `IN`.
    List(Vec<Expr>),
    Case { operand: Option<Box<Expr>>, branches: Vec<(Expr, Expr)>, otherwise: Option<Box<Expr>> },
    Cast { expr: Box<Expr>, type_name: String },
    Function { name: String, args: Vec<Expr>, distinct: bool, star: bool },
    Collate { expr: Box<Expr>, collation: String },
    Subquery(Box<Query>),
    Exists { query: Box<Query>, negated: bool },
    /// `expr op ANY|ALL (query)`.
    Quantified { expr: Box<Expr>, op: BinaryOp, all: bool, query: Box<Query> },
    /// Marks the expression under test inside an original query. Renders
    /// as its content; the folded query swaps the content for the folded
    /// constant.
    Phi(Box<Expr>),
}

impl Expr {
    pub fn lit(v: impl Into<SqlValue>) -> Self {
        Self::Literal(v.into())
    }

    pub fn null() -> Self {
        Self::Literal(SqlValue::Null)
    }

    pub fn col(qualifier: &str, column: &str) -> Self {
        Self::Column(ColumnRef::new(qualifier, column))
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Self {
        Self::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Self::Unary(op, Box::new(e))
    }

    pub fn func(name: &str, args: Vec<Expr>) -> Self {
        Self::Function { name: name.to_owned(), args, distinct: false, star: false }
    }

    pub fn count_star() -> Self {
        Self::Function { name: "COUNT".into(), args: vec![], distinct: false, star: true }
    }

    pub fn subquery(q: Query) -> Self {
        Self::Subquery(Box::new(q))
    }

    pub fn and(l: Expr, r: Expr) -> Self {
        Self::binary(BinaryOp::And, l, r)
    }

    pub fn is_null(e: Expr) -> Self {
        Self::IsNull { expr: Box::new(e), negated: false }
    }

    /// Direct children in evaluation scope (subquery bodies excluded).
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Literal(_) | Expr::Column(_) | Expr::Subquery(_) | Expr::Exists { .. } => vec![],
            Expr::Unary(_, e) | Expr::IsNull { expr: e, .. } | Expr::Cast { expr: e, .. } => vec![e],
            Expr::Collate { expr, .. } | Expr::Phi(expr) => vec![expr],
            Expr::Binary(_, l, r) => vec![l, r],
            Expr::Between { expr, low, high, .. } => vec![expr, low, high],
            Expr::In { expr, set, .. } => vec![expr, set],
            Expr::List(items) => items.iter().collect(),
            Expr::Function { args, .. } => args.iter().collect(),
            Expr::Case { operand, branches, otherwise } => {
                let mut out: Vec<&Expr> = Vec::new();
                if let Some(o) = operand {
                    out.push(o);
                }
                for (w, t) in branches {
                    out.push(w);
                    out.push(t);
                }
                if let Some(e) = otherwise {
                    out.push(e);
                }
                out
            }
            Expr::Quantified { expr, .. } => vec![expr],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Literal(_) | Expr::Column(_) | Expr::Subquery(_) | Expr::Exists { .. } => vec![],
            Expr::Unary(_, e) | Expr::IsNull { expr: e, .. } | Expr::Cast { expr: e, .. } => vec![e],
            Expr::Collate { expr, .. } | Expr::Phi(expr) => vec![expr],
            Expr::Binary(_, l, r) => vec![l, r],
            Expr::Between { expr, low, high, .. } => vec![expr, low, high],
            Expr::In { expr, set, .. } => vec![expr, set],
            Expr::List(items) => items.iter_mut().collect(),
            Expr::Function { args, .. } => args.iter_mut().collect(),
            Expr::Case { operand, branches, otherwise } => {
                let mut out: Vec<&mut Expr> = Vec::new();
                if let Some(o) = operand {
                    out.push(o);
                }
                for (w, t) in branches {
                    out.push(w);
                    out.push(t);
                }
                if let Some(e) = otherwise {
                    out.push(e);
                }
                out
            }
            Expr::Quantified { expr, .. } => vec![expr],
        }
    }

    /// Subqueries directly owned by this node.
    pub fn queries(&self) -> Vec<&Query> {
        match self {
            Expr::Subquery(q) | Expr::Exists { query: q, .. } | Expr::Quantified { query: q, .. } => vec![q],
            _ => vec![],
        }
    }

    pub fn queries_mut(&mut self) -> Vec<&mut Query> {
        match self {
            Expr::Subquery(q) | Expr::Exists { query: q, .. } | Expr::Quantified { query: q, .. } => vec![q],
            _ => vec![],
        }
    }

    /// Tree depth: a leaf has depth 1; a subquery node is one deeper than
    /// the deepest expression inside it.
    pub fn depth(&self) -> usize {
        let own = self.children().iter().map(|c| c.depth()).max().unwrap_or(0);
        let nested = self.queries().iter().map(|q| q.expr_depth()).max().unwrap_or(0);
        match self {
            // The marker is bookkeeping and the list is part of its IN
            // node; neither is a level of the generated tree.
            Expr::Phi(e) => e.depth(),
            Expr::List(_) => own,
            _ => 1 + own.max(nested),
        }
    }

    /// Number of nodes, subqueries included.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
            + self.queries().iter().map(|q| q.expr_size()).sum::<usize>()
    }

    pub fn contains_subquery(&self) -> bool {
        !self.queries().is_empty() || self.children().iter().any(|c| c.contains_subquery())
    }

    pub fn contains_phi(&self) -> bool {
        matches!(self, Expr::Phi(_)) || self.children().iter().any(|c| c.contains_phi())
    }

    /// Number of `Phi` markers, subqueries included.
    pub fn phi_count(&self) -> usize {
        usize::from(matches!(self, Expr::Phi(_)))
            + self.children().iter().map(|c| c.phi_count()).sum::<usize>()
            + self.queries().iter().map(|q| q.phi_count()).sum::<usize>()
    }

    pub fn phi(&self) -> Option<&Expr> {
        if let Expr::Phi(e) = self {
            return Some(e);
        }
        self.children().into_iter().find_map(|c| c.phi())
    }

    /// Replaces the content of the (single) `Phi` marker. Returns whether a
    /// marker was found.
    pub fn replace_phi(&mut self, replacement: &Expr) -> bool {
        if let Expr::Phi(e) = self {
            **e = replacement.clone();
            return true;
        }
        self.children_mut().into_iter().any(|c| c.replace_phi(replacement))
    }

    /// Removes `Phi` markers, keeping their content.
    pub fn strip_phi(&mut self) {
        if let Expr::Phi(e) = self {
            let inner = std::mem::replace(&mut **e, Expr::null());
            *self = inner;
        }
        for c in self.children_mut() {
            c.strip_phi();
        }
    }

    pub fn has_aggregate(&self) -> bool {
        if let Expr::Function { name, args, star, .. } = self {
            if is_aggregate_call(name, args.len(), *star) {
                return true;
            }
        }
        self.children().iter().any(|c| c.has_aggregate())
    }

    pub fn has_collate(&self) -> bool {
        matches!(self, Expr::Collate { .. }) || self.children().iter().any(|c| c.has_collate())
    }

    /// Column references free in this expression: those that are not bound
    /// by a table introduced inside one of its subqueries.
    pub fn free_columns(&self) -> BTreeSet<ColumnRef> {
        let mut out = BTreeSet::new();
        self.collect_free_columns(&BTreeSet::new(), &mut out);
        out
    }

    fn collect_free_columns(&self, bound: &BTreeSet<String>, out: &mut BTreeSet<ColumnRef>) {
        if let Expr::Column(c) = self {
            match &c.qualifier {
                Some(q) if bound.contains(q) => {}
                _ => {
                    out.insert(c.clone());
                }
            }
        }
        for child in self.children() {
            child.collect_free_columns(bound, out);
        }
        for q in self.queries() {
            q.collect_free_columns(bound, out);
        }
    }

    /// Multiset of node kinds, used to bucket reports.
    pub fn node_kinds(&self, out: &mut Vec<&'static str>) {
        out.push(self.kind_name());
        for c in self.children() {
            c.node_kinds(out);
        }
        for q in self.queries() {
            q.visit_exprs(&mut |e| out.push(e.kind_name()));
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Expr::Literal(_) => "literal",
            Expr::Column(_) => "column",
            Expr::Unary(..) => "unary",
            Expr::IsNull { .. } => "is-null",
            Expr::Binary(op, ..) if op.is_comparison() => "comparison",
            Expr::Binary(op, ..) if op.is_logical() => "logical",
            Expr::Binary(..) => "binary",
            Expr::Between { .. } => "between",
            Expr::In { .. } => "in",
            Expr::List(_) => "list",
            Expr::Case { .. } => "case",
            Expr::Cast { .. } => "cast",
            Expr::Function { name, args, star, .. } if is_aggregate_call(name, args.len(), *star) => "aggregate",
            Expr::Function { .. } => "function",
            Expr::Collate { .. } => "collate",
            Expr::Subquery(_) => "subquery",
            Expr::Exists { .. } => "exists",
            Expr::Quantified { .. } => "quantified",
            Expr::Phi(_) => "phi",
        }
    }
}

/// Whether `name(args)` is an aggregate call. `min`/`max` are aggregates
/// only with a single argument.
pub fn is_aggregate_call(name: &str, arity: usize, star: bool) -> bool {
    let name = name.to_ascii_lowercase();
    match name.as_str() {
        "count" => star || arity == 1,
        "avg" | "sum" | "total" | "group_concat" => true,
        "min" | "max" => arity == 1,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JoinKind {
    /// `a, b`
    Comma,
    Cross,
    Inner,
    Left,
}

impl JoinKind {
    pub fn takes_on(self) -> bool {
        matches!(self, JoinKind::Inner | JoinKind::Left)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableFactor {
    Table { name: String, alias: Option<String> },
    Derived { query: Box<Query>, alias: String },
}

impl TableFactor {
    pub fn table(name: &str) -> Self {
        Self::Table { name: name.to_owned(), alias: None }
    }

    pub fn aliased(name: &str, alias: &str) -> Self {
        Self::Table { name: name.to_owned(), alias: Some(alias.to_owned()) }
    }

    /// Name by which columns of this factor are qualified.
    pub fn qualifier(&self) -> &str {
        match self {
            TableFactor::Table { alias: Some(a), .. } => a,
            TableFactor::Table { name, .. } => name,
            TableFactor::Derived { alias, .. } => alias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Join {
    pub kind: JoinKind,
    pub factor: TableFactor,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FromClause {
    pub first: TableFactor,
    pub joins: Vec<Join>,
}

impl FromClause {
    pub fn single(factor: TableFactor) -> Self {
        Self { first: factor, joins: vec![] }
    }

    pub fn factors(&self) -> impl Iterator<Item = &TableFactor> {
        std::iter::once(&self.first).chain(self.joins.iter().map(|j| &j.factor))
    }

    pub fn qualifiers(&self) -> Vec<String> {
        self.factors().map(|f| f.qualifier().to_owned()).collect()
    }

    /// Qualifiers whose rows may be NULL-extended by a LEFT JOIN.
    pub fn null_extended(&self) -> BTreeSet<String> {
        self.joins
            .iter()
            .filter(|j| j.kind == JoinKind::Left)
            .map(|j| j.factor.qualifier().to_owned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectItem {
    Expr { expr: Expr, alias: Option<String> },
    Wildcard,
}

impl SelectItem {
    pub fn expr(expr: Expr) -> Self {
        Self::Expr { expr, alias: None }
    }

    pub fn aliased(expr: Expr, alias: &str) -> Self {
        Self::Expr { expr, alias: Some(alias.to_owned()) }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Option<FromClause>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTerm {
    pub expr: Expr,
    pub desc: bool,
}

impl OrderTerm {
    pub fn asc(expr: Expr) -> Self {
        Self { expr, desc: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SetExpr {
    Select(Box<Select>),
    Values(Vec<Vec<Expr>>),
    Union { all: bool, left: Box<SetExpr>, right: Box<SetExpr> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cte {
    pub name: String,
    pub columns: Vec<String>,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub with: Vec<Cte>,
    pub body: SetExpr,
    pub order_by: Vec<OrderTerm>,
    pub limit: Option<u64>,
}

impl Query {
    pub fn select(select: Select) -> Self {
        Self { with: vec![], body: SetExpr::Select(Box::new(select)), order_by: vec![], limit: None }
    }

    pub fn values(rows: Vec<Vec<Expr>>) -> Self {
        Self { with: vec![], body: SetExpr::Values(rows), order_by: vec![], limit: None }
    }

    pub fn as_select(&self) -> Option<&Select> {
        match &self.body {
            SetExpr::Select(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_select_mut(&mut self) -> Option<&mut Select> {
        match &mut self.body {
            SetExpr::Select(s) => Some(s),
            _ => None,
        }
    }

    /// Calls `f` on every top-level expression of this query (not
    /// descending into expressions; nested subqueries are visited by the
    /// callee via [`Expr::queries`]).
    pub fn for_each_expr<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for cte in &self.with {
            cte.query.for_each_expr(f);
        }
        self.body.for_each_expr(f);
        for t in &self.order_by {
            f(&t.expr);
        }
    }

    pub fn for_each_expr_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        for cte in &mut self.with {
            cte.query.for_each_expr_mut(f);
        }
        self.body.for_each_expr_mut(f);
        for t in &mut self.order_by {
            f(&mut t.expr);
        }
    }

    /// Visits every expression node, recursively, subqueries included.
    pub fn visit_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        fn walk(e: &Expr, f: &mut dyn FnMut(&Expr)) {
            f(e);
            for c in e.children() {
                walk(c, f);
            }
            for q in e.queries() {
                q.visit_exprs(f);
            }
        }
        self.for_each_expr(&mut |e| walk(e, f));
    }

    /// Deepest expression in the query. ORDER BY terms are left out: the
    /// generator only emits them as tiebreaks over the select items.
    pub fn expr_depth(&self) -> usize {
        let mut d = 0;
        for cte in &self.with {
            d = d.max(cte.query.expr_depth());
        }
        self.body.for_each_expr(&mut |e| d = d.max(e.depth()));
        d
    }

    pub fn expr_size(&self) -> usize {
        let mut n = 0;
        self.for_each_expr(&mut |e| n += e.size());
        n
    }

    pub fn phi_count(&self) -> usize {
        let mut n = 0;
        self.for_each_expr(&mut |e| n += e.phi_count());
        n
    }

    pub fn replace_phi(&mut self, replacement: &Expr) -> bool {
        let mut found = false;
        self.for_each_expr_mut(&mut |e| {
            if !found {
                found = e.replace_phi(replacement);
            }
        });
        found
    }

    pub fn strip_phi(&mut self) {
        self.for_each_expr_mut(&mut |e| e.strip_phi());
    }

    pub fn phi(&self) -> Option<&Expr> {
        let mut out = None;
        self.for_each_expr(&mut |e| {
            if out.is_none() {
                out = e.phi();
            }
        });
        out
    }

    /// Qualifiers introduced by FROM clauses directly in this query.
    pub fn local_qualifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.body.local_qualifiers(&mut out);
        for c in &self.with {
            out.insert(c.name.clone());
        }
        out
    }

    fn collect_free_columns(&self, bound: &BTreeSet<String>, out: &mut BTreeSet<ColumnRef>) {
        let mut inner = bound.clone();
        inner.extend(self.local_qualifiers());
        self.for_each_expr(&mut |e| e.collect_free_columns(&inner, out));
    }

    /// Columns referenced by this query but bound outside it.
    pub fn free_columns(&self) -> BTreeSet<ColumnRef> {
        let mut out = BTreeSet::new();
        self.collect_free_columns(&BTreeSet::new(), &mut out);
        out
    }
}

impl SetExpr {
    fn for_each_expr<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        match self {
            SetExpr::Select(s) => s.for_each_expr(f),
            SetExpr::Values(rows) => rows.iter().flatten().for_each(f),
            SetExpr::Union { left, right, .. } => {
                left.for_each_expr(f);
                right.for_each_expr(f);
            }
        }
    }

    fn for_each_expr_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        match self {
            SetExpr::Select(s) => s.for_each_expr_mut(f),
            SetExpr::Values(rows) => rows.iter_mut().flatten().for_each(f),
            SetExpr::Union { left, right, .. } => {
                left.for_each_expr_mut(f);
                right.for_each_expr_mut(f);
            }
        }
    }

    fn local_qualifiers(&self, out: &mut BTreeSet<String>) {
        match self {
            SetExpr::Select(s) => {
                if let Some(from) = &s.from {
                    out.extend(from.qualifiers());
                }
            }
            SetExpr::Values(_) => {}
            SetExpr::Union { left, right, .. } => {
                left.local_qualifiers(out);
                right.local_qualifiers(out);
            }
        }
    }
}

impl Select {
    fn for_each_expr<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for item in &self.items {
            if let SelectItem::Expr { expr, .. } = item {
                f(expr);
            }
        }
        if let Some(from) = &self.from {
            from.for_each_expr(f);
        }
        if let Some(w) = &self.selection {
            f(w);
        }
        self.group_by.iter().for_each(&mut *f);
        if let Some(h) = &self.having {
            f(h);
        }
    }

    fn for_each_expr_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        for item in &mut self.items {
            if let SelectItem::Expr { expr, .. } = item {
                f(expr);
            }
        }
        if let Some(from) = &mut self.from {
            from.for_each_expr_mut(f);
        }
        if let Some(w) = &mut self.selection {
            f(w);
        }
        self.group_by.iter_mut().for_each(&mut *f);
        if let Some(h) = &mut self.having {
            f(h);
        }
    }
}

impl FromClause {
    fn for_each_expr<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for factor in self.factors() {
            if let TableFactor::Derived { query, .. } = factor {
                query.for_each_expr(f);
            }
        }
        for j in &self.joins {
            if let Some(on) = &j.on {
                f(on);
            }
        }
    }

    fn for_each_expr_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        if let TableFactor::Derived { query, .. } = &mut self.first {
            query.for_each_expr_mut(f);
        }
        for j in &mut self.joins {
            if let TableFactor::Derived { query, .. } = &mut j.factor {
                query.for_each_expr_mut(f);
            }
            if let Some(on) = &mut j.on {
                f(on);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub type_name: Option<String>,
    pub primary_key: bool,
    pub unique: bool,
    pub not_null: bool,
    pub collation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateTable {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub without_rowid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedColumn {
    pub expr: Expr,
    pub collation: Option<String>,
    pub desc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectKind {
    Table,
    View,
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Statement {
    Query(Query),
    Insert { or_ignore: bool, table: String, columns: Vec<String>, source: Query },
    Update { table: String, assignments: Vec<(String, Expr)>, selection: Option<Expr> },
    Delete { table: String, selection: Option<Expr> },
    CreateTable(CreateTable),
    CreateIndex { name: String, unique: bool, table: String, columns: Vec<IndexedColumn>, selection: Option<Expr> },
    CreateView { name: String, columns: Vec<String>, query: Query },
    Drop { kind: ObjectKind, name: String, if_exists: bool },
    Begin,
    Rollback,
    Analyze,
}

impl Statement {
    pub fn for_each_expr_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        match self {
            Statement::Query(q) | Statement::CreateView { query: q, .. } => q.for_each_expr_mut(f),
            Statement::Insert { source, .. } => source.for_each_expr_mut(f),
            Statement::Update { assignments, selection, .. } => {
                for (_, e) in assignments {
                    f(e);
                }
                if let Some(w) = selection {
                    f(w);
                }
            }
            Statement::Delete { selection, .. } => {
                if let Some(w) = selection {
                    f(w);
                }
            }
            Statement::CreateIndex { columns, selection, .. } => {
                for c in columns {
                    f(&mut c.expr);
                }
                if let Some(w) = selection {
                    f(w);
                }
            }
            _ => {}
        }
    }

    pub fn for_each_expr<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        match self {
            Statement::Query(q) | Statement::CreateView { query: q, .. } => q.for_each_expr(f),
            Statement::Insert { source, .. } => source.for_each_expr(f),
            Statement::Update { assignments, selection, .. } => {
                for (_, e) in assignments {
                    f(e);
                }
                if let Some(w) = selection {
                    f(w);
                }
            }
            Statement::Delete { selection, .. } => {
                if let Some(w) = selection {
                    f(w);
                }
            }
            Statement::CreateIndex { columns, selection, .. } => {
                for c in columns {
                    f(&c.expr);
                }
                if let Some(w) = selection {
                    f(w);
                }
            }
            _ => {}
        }
    }

    pub fn phi_count(&self) -> usize {
        let mut n = 0;
        self.for_each_expr(&mut |e| n += e.phi_count());
        n
    }

    pub fn replace_phi(&mut self, replacement: &Expr) -> bool {
        let mut found = false;
        self.for_each_expr_mut(&mut |e| {
            if !found {
                found = e.replace_phi(replacement);
            }
        });
        found
    }

    pub fn strip_phi(&mut self) {
        self.for_each_expr_mut(&mut |e| e.strip_phi());
    }

    pub fn phi(&self) -> Option<&Expr> {
        let mut out = None;
        self.for_each_expr(&mut |e| {
            if out.is_none() {
                out = e.phi();
            }
        });
        out
    }
}
