//! Random test cases: a FROM clause, an expression under test, and a
//! statement embedding it at one of the supported placements.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore};

use super::*;
use crate::expr_gen::{
    self, collation, derived_relation, total_order_terms, Ctx, ExprGen, OuterTables, PhiKind, Scope, ScopeTable,
    Want,
};
use crate::schema::{Collation, Relation};
use crate::state_gen::{unqualify, TableDef};

/// Predicate or relation case, according to the mode.
pub fn generate_case<R: RngCore>(state: &DatabaseState, rng: &mut R, config: &OracleConfig) -> Option<TestCase> {
    let relation = match config.mode {
        OracleMode::Relations => true,
        OracleMode::Combined => rng.random_bool(config.relation_ratio),
        _ => false,
    };
    if relation {
        generate_relation_case(state, rng, config)
    } else {
        generate_predicate_case(state, rng, config)
    }
}

fn choose_placement<R: RngCore>(rng: &mut R, config: &OracleConfig) -> Placement {
    if rng.random_bool(config.statement_placement_weight) {
        let mut options = vec![Placement::UpdateWhere, Placement::DeleteWhere, Placement::InsertSource, Placement::CreateView];
        // Partial-index predicates cannot hold subqueries.
        if config.mode != OracleMode::Subqueries {
            options.push(Placement::CreateIndex);
        }
        return *options.choose(rng).unwrap();
    }
    let weighted = [
        (Placement::Where, 8),
        (Placement::JoinOn, 3),
        (Placement::Having, 2),
        (Placement::GroupBy, 2),
        (Placement::OrderBy, 2),
    ];
    let total: u32 = weighted.iter().map(|(_, w)| w).sum();
    let mut pick = rng.random_range(0..total);
    for (p, w) in weighted {
        if pick < w {
            return p;
        }
        pick -= w;
    }
    unreachable!()
}

fn choose_kind<R: RngCore>(rng: &mut R, config: &OracleConfig, placement: Placement) -> PhiKind {
    match config.mode {
        OracleMode::Expressions => PhiKind::Expression,
        OracleMode::Subqueries => PhiKind::Subquery,
        _ if placement == Placement::CreateIndex => PhiKind::Expression,
        _ => {
            if rng.random() {
                PhiKind::Expression
            } else {
                PhiKind::Subquery
            }
        }
    }
}

/// Generates a predicate case, retrying up to the configured attempts.
pub fn generate_predicate_case<R: RngCore>(state: &DatabaseState, rng: &mut R, config: &OracleConfig) -> Option<TestCase> {
    for _ in 0..config.generation_attempts.max(1) {
        let placement = choose_placement(rng, config);
        let kind = choose_kind(rng, config, placement);
        let dependent = rng.random_bool(config.dependent_probability);
        if let Some(case) = build_predicate_case(state, rng, config, placement, kind, dependent) {
            return Some(case);
        }
    }
    None
}

/// Depth budgets for the expression under test and the predicate around
/// it. The predicate always has room for one wrapping operator.
fn budgets(config: &OracleConfig, kind: PhiKind) -> (usize, usize) {
    let min_phi = if kind == PhiKind::Subquery { 2 } else { 1 };
    let phi = config.max_depth.saturating_sub(1).max(min_phi);
    (phi, config.max_depth.max(phi + 1))
}

fn o_ctx(config: &OracleConfig) -> Ctx {
    Ctx {
        columns: true,
        subqueries: config.mode != OracleMode::Expressions,
        collate: false,
        aggregates: false,
        error_free: false,
    }
}

/// Builds one case at a fixed placement; `None` if the random choices do
/// not fit (retry).
pub(crate) fn build_predicate_case<R: RngCore>(
    state: &DatabaseState,
    rng: &mut R,
    config: &OracleConfig,
    placement: Placement,
    kind: PhiKind,
    dependent: bool,
) -> Option<TestCase> {
    let all_relations = state.relations();
    let target = match placement {
        Placement::UpdateWhere | Placement::DeleteWhere | Placement::CreateIndex => Some(state.tables.choose(rng)?.clone()),
        Placement::InsertSource => Some(state.tables.iter().filter(|t| !t.has_unique()).collect::<Vec<_>>().choose(rng).cloned()?.clone()),
        _ => None,
    };
    // Subqueries inside UPDATE/DELETE must not read the table being changed.
    let relations: Vec<Relation> = match (&target, placement) {
        (Some(t), Placement::UpdateWhere | Placement::DeleteWhere) => {
            let readers = readers_of(state, &t.name);
            all_relations.iter().filter(|r| !readers.contains(&r.name)).cloned().collect()
        }
        _ => all_relations.clone(),
    };
    if relations.is_empty() && kind == PhiKind::Subquery {
        return None;
    }
    let relations = if relations.is_empty() { all_relations.clone() } else { relations };
    let mut g = ExprGen::new(rng, &config.exprs, &relations);
    let (phi_budget, pred_budget) = budgets(config, kind);
    let ctx = o_ctx(config);
    let mut b = Builder { g: &mut g, config, ctx, kind, dependent, phi_budget, pred_budget };
    let (candidate, original) = match placement {
        Placement::Where => b.where_case(&all_relations)?,
        Placement::JoinOn => b.join_on_case(&all_relations)?,
        Placement::Having => b.having_case(&all_relations)?,
        Placement::GroupBy => b.group_by_case(&all_relations)?,
        Placement::OrderBy => b.order_by_case(&all_relations)?,
        Placement::CreateView => b.create_view_case(&all_relations)?,
        Placement::InsertSource => b.insert_case(&all_relations, target.as_ref()?)?,
        Placement::UpdateWhere | Placement::DeleteWhere => b.dml_case(placement, target.as_ref()?)?,
        Placement::CreateIndex => b.index_case(target.as_ref()?)?,
    };
    Some(TestCase::Predicate { placement, candidate, original })
}

/// Names of the table and every view reading it.
fn readers_of(state: &DatabaseState, table: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::from([table.to_owned()]);
    for v in &state.views {
        if let Some(from) = v.query.as_select().and_then(|s| s.from.as_ref()) {
            if from.factors().any(|f| matches!(f, TableFactor::Table { name, .. } if name == table)) {
                out.insert(v.name.clone());
            }
        }
    }
    out
}

struct Builder<'b, 'a, R: RngCore> {
    g: &'b mut ExprGen<'a, R>,
    config: &'b OracleConfig,
    ctx: Ctx,
    kind: PhiKind,
    dependent: bool,
    phi_budget: usize,
    pred_budget: usize,
}

impl<R: RngCore> Builder<'_, '_, R> {
    /// One to three relations joined together; ON clauses are left empty.
    fn pick_from(&mut self, relations: &[Relation], n: usize) -> (FromClause, Vec<ScopeTable>) {
        let mut tables: Vec<ScopeTable> = Vec::new();
        let mut factors = Vec::new();
        for i in 0..n {
            let rel = relations.choose(self.g.rng).unwrap().clone();
            let factor = if tables.iter().any(|t| t.qualifier == rel.name) {
                TableFactor::aliased(&rel.name, &format!("j{i}"))
            } else {
                TableFactor::table(&rel.name)
            };
            tables.push(ScopeTable { qualifier: factor.qualifier().to_owned(), relation: rel });
            factors.push(factor);
        }
        let mut it = factors.into_iter();
        let first = it.next().unwrap();
        let joins = it
            .map(|factor| {
                let kind = *[JoinKind::Comma, JoinKind::Cross, JoinKind::Inner, JoinKind::Inner, JoinKind::Left, JoinKind::Left]
                    .choose(self.g.rng)
                    .unwrap();
                Join { kind, factor, on: None }
            })
            .collect();
        (FromClause { first, joins }, tables)
    }

    fn table_count(&mut self, max: usize) -> usize {
        let n = match self.g.rng.random_range(0..10) {
            0..=5 => 1,
            6..=8 => 2,
            _ => 3,
        };
        n.min(max)
    }

    /// Fills ON clauses (except `skip`) with expressions over the tables
    /// joined so far.
    fn fill_on(&mut self, from: &mut FromClause, tables: &[ScopeTable], skip: Option<usize>) {
        for j in 0..from.joins.len() {
            if Some(j) == skip || !from.joins[j].kind.takes_on() {
                continue;
            }
            let scope = Scope::new(tables[..=j + 1].to_vec());
            from.joins[j].on = Some(self.g.expr(&scope, self.config.max_depth, self.ctx));
        }
    }

    fn candidate(&mut self, scope: &Scope, outer: OuterTables) -> Option<FoldCandidate> {
        let c = self.g.candidate(scope, outer, self.kind, self.dependent, self.phi_budget, 5)?;
        // A value list must compare exactly like the literal list it
        // folds to.
        if c.shape == PhiShape::RowSet && !c.transparent {
            return None;
        }
        Some(c)
    }

    fn predicate(&mut self, scope: &Scope, cand: &FoldCandidate, ctx: Ctx, no_bare: bool) -> Option<Expr> {
        let p = self.g.predicate(scope, cand, self.pred_budget, ctx, no_bare);
        (p.depth() <= self.pred_budget && p.phi_count() == 1).then_some(p)
    }

    /// Output columns: a wildcard, plain columns, or expressions.
    fn items(&mut self, scope: &Scope) -> Vec<SelectItem> {
        if self.g.rng.random_bool(0.15) {
            return vec![SelectItem::Wildcard];
        }
        let n = self.g.rng.random_range(1..=3);
        (0..n)
            .map(|_| {
                if self.g.rng.random_bool(0.65) {
                    let cols = scope.columns();
                    let (_, c, _) = cols.choose(self.g.rng).unwrap();
                    SelectItem::expr(Expr::Column(c.clone()))
                } else {
                    SelectItem::expr(self.g.expr(scope, self.config.max_depth, self.ctx))
                }
            })
            .collect()
    }

    fn binary_outputs(&self, items: &[SelectItem], scope: &Scope) -> bool {
        items.iter().all(|item| match item {
            SelectItem::Expr { expr, .. } => collation(expr, scope) == Some(Collation::Binary),
            SelectItem::Wildcard => scope.columns().iter().all(|(_, _, c)| c.collation == Collation::Binary),
        })
    }

    fn optional_where(&mut self, scope: &Scope) -> Option<Expr> {
        self.g.rng.random_bool(0.3).then(|| self.g.expr(scope, self.config.max_depth, self.ctx))
    }

    /// A SELECT with the predicate in WHERE.
    fn where_select(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Select, Scope)> {
        let n = self.table_count(3);
        let (mut from, tables) = self.pick_from(relations, n);
        self.fill_on(&mut from, &tables, None);
        let scope = Scope::new(tables);
        let cand = self.candidate(&scope, OuterTables { from: Some(from.clone()), join_on: None })?;
        let p = self.predicate(&scope, &cand, self.ctx, false)?;
        let items = if self.g.rng.random_bool(0.1) {
            vec![SelectItem::expr(self.g.aggregate_over(&scope, self.config.max_depth))]
        } else {
            self.items(&scope)
        };
        let distinct = self.g.rng.random_bool(0.15) && self.binary_outputs(&items, &scope);
        let select = Select { distinct, items, from: Some(from), selection: Some(p), ..Default::default() };
        Some((cand, select, scope))
    }

    fn where_case(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Vec<Step>)> {
        let (cand, select, _) = self.where_select(relations)?;
        Some((cand, vec![Step::compared(Statement::Query(Query::select(select)))]))
    }

    fn join_on_case(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Vec<Step>)> {
        let n = self.g.rng.random_range(2..=3);
        let (mut from, tables) = self.pick_from(relations, n);
        let jp = self.g.rng.random_range(0..from.joins.len());
        if !from.joins[jp].kind.takes_on() {
            from.joins[jp].kind = if self.g.rng.random() { JoinKind::Inner } else { JoinKind::Left };
        }
        self.fill_on(&mut from, &tables, Some(jp));
        // The expression may read the joined table and earlier tables that
        // are never NULL-extended at this point.
        let extended = FromClause { first: from.first.clone(), joins: from.joins[..jp].to_vec() }.null_extended();
        let phi_tables: Vec<ScopeTable> = tables[..=jp]
            .iter()
            .filter(|t| !extended.contains(&t.qualifier))
            .chain(std::iter::once(&tables[jp + 1]))
            .cloned()
            .collect();
        let cand = self.candidate(&Scope::new(phi_tables), OuterTables { from: Some(from.clone()), join_on: Some(jp) })?;
        let on_scope = Scope::new(tables[..=jp + 1].to_vec());
        let p = self.predicate(&on_scope, &cand, self.ctx, false)?;
        from.joins[jp].on = Some(p);
        let scope = Scope::new(tables);
        let items = self.items(&scope);
        let selection = self.optional_where(&scope);
        let select = Select { items, from: Some(from), selection, ..Default::default() };
        Some((cand, vec![Step::compared(Statement::Query(Query::select(select)))]))
    }

    /// Plain columns with binary collation: safe grouping keys.
    fn binary_columns(scope: &Scope) -> Vec<ColumnRef> {
        scope.columns().into_iter().filter(|(_, _, c)| c.collation == Collation::Binary).map(|(_, r, _)| r).collect()
    }

    fn having_case(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Vec<Step>)> {
        let n = self.table_count(2);
        let (mut from, tables) = self.pick_from(relations, n);
        self.fill_on(&mut from, &tables, None);
        let scope = Scope::new(tables.clone());
        let keys = Self::binary_columns(&scope);
        if keys.is_empty() {
            return None;
        }
        let n_keys = self.g.rng.random_range(1..=keys.len().min(2));
        let keys: Vec<ColumnRef> = keys.choose_multiple(self.g.rng, n_keys).cloned().collect();
        // Only grouping keys have a single value per group.
        let group_tables: Vec<ScopeTable> = tables
            .iter()
            .filter_map(|t| {
                let columns: Vec<_> = t
                    .relation
                    .columns
                    .iter()
                    .filter(|c| keys.iter().any(|k| k.qualifier.as_deref() == Some(&t.qualifier) && k.column == c.name))
                    .cloned()
                    .collect();
                (!columns.is_empty()).then(|| ScopeTable {
                    qualifier: t.qualifier.clone(),
                    relation: Relation { columns, ..t.relation.clone() },
                })
            })
            .collect();
        let group_scope = Scope::new(group_tables);
        let cand = self.candidate(&group_scope, OuterTables { from: Some(from.clone()), join_on: None })?;
        self.g.aggregate_scope = Some(scope.clone());
        let p = self.predicate(&group_scope, &cand, Ctx { aggregates: true, ..self.ctx }, false);
        self.g.aggregate_scope = None;
        let p = p?;
        let mut items: Vec<SelectItem> = keys.iter().map(|k| SelectItem::expr(Expr::Column(k.clone()))).collect();
        items.push(SelectItem::expr(self.g.aggregate_over(&scope, self.config.max_depth)));
        let selection = self.optional_where(&scope);
        let select = Select {
            items,
            from: Some(from),
            selection,
            group_by: keys.into_iter().map(Expr::Column).collect(),
            having: Some(p),
            ..Default::default()
        };
        Some((cand, vec![Step::compared(Statement::Query(Query::select(select)))]))
    }

    fn group_by_case(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Vec<Step>)> {
        let n = self.table_count(2);
        let (mut from, tables) = self.pick_from(relations, n);
        self.fill_on(&mut from, &tables, None);
        let scope = Scope::new(tables);
        let cand = self.candidate(&scope, OuterTables { from: Some(from.clone()), join_on: None })?;
        let p = self.predicate(&scope, &cand, self.ctx, true)?;
        let mut group_by = vec![positional_guard(p)];
        let mut items = Vec::new();
        if let Some(k) = Self::binary_columns(&scope).choose(self.g.rng).cloned() {
            if self.g.rng.random_bool(0.5) {
                group_by.push(Expr::Column(k.clone()));
                items.push(SelectItem::expr(Expr::Column(k)));
            }
        }
        group_by.shuffle(self.g.rng);
        let n_aggs = self.g.rng.random_range(1..=2);
        for _ in 0..n_aggs {
            items.push(SelectItem::expr(self.g.aggregate_over(&scope, self.config.max_depth)));
        }
        let selection = self.optional_where(&scope);
        let select = Select { items, from: Some(from), selection, group_by, ..Default::default() };
        Some((cand, vec![Step::compared(Statement::Query(Query::select(select)))]))
    }

    fn order_by_case(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Vec<Step>)> {
        let n = self.table_count(2);
        let (mut from, tables) = self.pick_from(relations, n);
        self.fill_on(&mut from, &tables, None);
        let scope = Scope::new(tables);
        let cand = self.candidate(&scope, OuterTables { from: Some(from.clone()), join_on: None })?;
        let p = self.predicate(&scope, &cand, self.ctx, true)?;
        let items = self.items(&scope);
        // Break ties on every output value so the order is total.
        let mut order_by = vec![OrderTerm { expr: positional_guard(p), desc: self.g.rng.random() }];
        for item in &items {
            match item {
                SelectItem::Expr { expr, .. } => order_by.extend(total_order_terms(expr)),
                SelectItem::Wildcard => {
                    for (_, c, _) in scope.columns() {
                        order_by.extend(total_order_terms(&Expr::Column(c)));
                    }
                }
            }
        }
        let selection = self.optional_where(&scope);
        let limit = self.g.rng.random_bool(0.2).then(|| self.g.rng.random_range(1..=5));
        let select = Select { items, from: Some(from), selection, ..Default::default() };
        let query = Query { with: vec![], body: SetExpr::Select(Box::new(select)), order_by, limit };
        let step = Step { ordered: true, ..Step::compared(Statement::Query(query)) };
        Some((cand, vec![step]))
    }

    fn create_view_case(&mut self, relations: &[Relation]) -> Option<(FoldCandidate, Vec<Step>)> {
        let (cand, select, _) = self.where_select(relations)?;
        let name = "ov0";
        let drop = Statement::Drop { kind: ObjectKind::View, name: name.into(), if_exists: true };
        let steps = vec![
            Step::new(drop.clone(), StepRole::Setup),
            Step::new(Statement::CreateView { name: name.into(), columns: vec![], query: Query::select(select) }, StepRole::Counted),
            Step::compared(select_all(name, None)),
            Step::new(drop, StepRole::Cleanup),
        ];
        Some((cand, steps))
    }

    fn insert_case(&mut self, relations: &[Relation], target: &TableDef) -> Option<(FoldCandidate, Vec<Step>)> {
        let n = self.table_count(2);
        let (mut from, tables) = self.pick_from(relations, n);
        self.fill_on(&mut from, &tables, None);
        let scope = Scope::new(tables);
        let cand = self.candidate(&scope, OuterTables { from: Some(from.clone()), join_on: None })?;
        let p = self.predicate(&scope, &cand, self.ctx, false)?;
        let items = (0..target.columns.len())
            .map(|_| {
                if self.g.rng.random_bool(0.7) {
                    let cols = scope.columns();
                    SelectItem::expr(Expr::Column(cols.choose(self.g.rng).unwrap().1.clone()))
                } else {
                    SelectItem::expr(self.g.expr(&scope, self.config.max_depth, self.ctx))
                }
            })
            .collect();
        let source = Query::select(Select { items, from: Some(from), selection: Some(p), ..Default::default() });
        let insert = Statement::Insert {
            or_ignore: true,
            table: target.name.clone(),
            columns: target.columns.iter().map(|c| c.name.clone()).collect(),
            source,
        };
        Some((cand, transaction(insert, &target.name)))
    }

    fn dml_case(&mut self, placement: Placement, target: &TableDef) -> Option<(FoldCandidate, Vec<Step>)> {
        let scope = Scope::new(vec![ScopeTable { qualifier: target.name.clone(), relation: target.relation() }]);
        let from = FromClause::single(TableFactor::table(&target.name));
        let cand = self.candidate(&scope, OuterTables { from: Some(from), join_on: None })?;
        let p = self.predicate(&scope, &cand, self.ctx, false)?;
        let settable: Vec<&Column> = target.columns.iter().filter(|c| c.nullable && !c.unique).collect();
        let stmt = if placement == Placement::UpdateWhere && !settable.is_empty() {
            let n = self.g.rng.random_range(1..=settable.len().min(2));
            let set_ctx = Ctx { subqueries: false, error_free: true, ..self.ctx };
            let assignments = settable
                .choose_multiple(self.g.rng, n)
                .map(|c| (c.name.clone(), self.g.expr(&scope, 2, set_ctx)))
                .collect::<Vec<_>>();
            Statement::Update { table: target.name.clone(), assignments, selection: Some(p) }
        } else {
            Statement::Delete { table: target.name.clone(), selection: Some(p) }
        };
        Some((cand, transaction(stmt, &target.name)))
    }

    fn index_case(&mut self, target: &TableDef) -> Option<(FoldCandidate, Vec<Step>)> {
        if self.kind != PhiKind::Expression {
            return None;
        }
        let scope = Scope::new(vec![ScopeTable { qualifier: target.name.clone(), relation: target.relation() }]);
        let from = FromClause::single(TableFactor::table(&target.name));
        let cand = self.candidate(&scope, OuterTables { from: Some(from), join_on: None })?;
        let ctx = self.ctx.without_subqueries();
        let mut p = self.predicate(&scope, &cand, ctx, false)?;
        unqualify(&mut p);
        let column = target.columns.choose(self.g.rng).unwrap();
        let name = "oi0";
        let drop = Statement::Drop { kind: ObjectKind::Index, name: name.into(), if_exists: true };
        let create = Statement::CreateIndex {
            name: name.into(),
            unique: false,
            table: target.name.clone(),
            columns: vec![IndexedColumn { expr: Expr::Column(ColumnRef::bare(&column.name)), collation: None, desc: false }],
            selection: Some(p.clone()),
        };
        let steps = vec![
            Step::new(drop.clone(), StepRole::Setup),
            Step::new(create, StepRole::Counted),
            Step::compared(select_all(&target.name, Some(p))),
            Step::new(drop, StepRole::Cleanup),
        ];
        Some((cand, steps))
    }
}

use crate::schema::Column;

/// `coalesce(p, NULL)`. The engine may fold operators over literals (for
/// example `1 IS NOT NULL`) into an integer literal while parsing, and an
/// integer literal in GROUP BY or ORDER BY names an output column. A
/// function call is never folded that early.
fn positional_guard(p: Expr) -> Expr {
    Expr::func("coalesce", vec![p, Expr::null()])
}

fn select_all(name: &str, selection: Option<Expr>) -> Statement {
    Statement::Query(Query::select(Select {
        items: vec![SelectItem::Wildcard],
        from: Some(FromClause::single(TableFactor::table(name))),
        selection,
        ..Default::default()
    }))
}

/// `BEGIN; stmt; SELECT * FROM table; ROLLBACK`, so the state is unchanged
/// afterwards.
fn transaction(stmt: Statement, table: &str) -> Vec<Step> {
    vec![
        Step::new(Statement::Begin, StepRole::Setup),
        Step { explain: true, ..Step::new(stmt, StepRole::Counted) },
        Step { explain: false, ..Step::compared(select_all(table, None)) },
        Step::new(Statement::Rollback, StepRole::Cleanup),
    ]
}

fn neutralize_relation_columns(e: &mut Expr) {
    match e {
        Expr::Column(c) if c.qualifier.as_deref() == Some(RELATION_ALIAS) => {
            let col = std::mem::replace(e, Expr::null());
            *e = Expr::unary(UnaryOp::Plus, col);
        }
        _ => {
            for child in e.children_mut() {
                neutralize_relation_columns(child);
            }
            for q in e.queries_mut() {
                q.for_each_expr_mut(&mut neutralize_relation_columns);
            }
        }
    }
}

/// A relation-folding case: a non-correlated subquery whose rows feed an
/// outer query, materialized differently on the two sides.
pub fn generate_relation_case<R: RngCore>(state: &DatabaseState, rng: &mut R, config: &OracleConfig) -> Option<TestCase> {
    let relations = state.relations();
    let mut g = ExprGen::new(rng, &config.exprs, &relations);
    let ctx = o_ctx(config);
    for _ in 0..config.generation_attempts.max(1) {
        let mut source = g.subquery(&Scope::empty(), config.max_depth.max(2), Want::Any, false);
        let seen = g.seen.clone();
        let Some(select) = source.as_select_mut() else { continue };
        // Every column must be free of affinity and collation, exactly like
        // an untyped table column or a VALUES column.
        let mut ok = true;
        for (i, item) in select.items.iter_mut().enumerate() {
            let SelectItem::Expr { expr, alias } = item else {
                ok = false;
                break;
            };
            if !expr_gen::is_transparent(expr, &seen) {
                let inner = std::mem::replace(expr, Expr::null());
                *expr = Expr::func("coalesce", vec![inner, Expr::null()]);
                if !expr_gen::is_transparent(expr, &seen) {
                    ok = false;
                    break;
                }
            }
            *alias = Some(format!("c{i}"));
        }
        if !ok {
            continue;
        }
        select.distinct = false;
        let columns = select.items.len();
        let r0 = derived_relation(RELATION_ALIAS, columns);
        let mut tables = vec![ScopeTable { qualifier: RELATION_ALIAS.into(), relation: r0 }];
        let mut from = FromClause::single(TableFactor::table(RELATION_ALIAS));
        if g.rng.random_bool(0.3) {
            let other = relations.choose(g.rng).unwrap().clone();
            tables.push(ScopeTable { qualifier: other.name.clone(), relation: other.clone() });
            let kind = *[JoinKind::Comma, JoinKind::Inner, JoinKind::Left].choose(g.rng).unwrap();
            let on = kind.takes_on().then(|| g.expr(&Scope::new(tables.clone()), config.max_depth, ctx));
            from.joins.push(Join { kind, factor: TableFactor::table(&other.name), on });
        }
        let scope = Scope::new(tables);
        let n_items = g.rng.random_range(1..=3);
        let items = (0..n_items)
            .map(|_| {
                if g.rng.random_bool(0.6) {
                    let cols = scope.columns();
                    SelectItem::expr(Expr::Column(cols.choose(g.rng).unwrap().1.clone()))
                } else {
                    SelectItem::expr(g.expr(&scope, config.max_depth, ctx))
                }
            })
            .collect();
        let selection = g.rng.random_bool(0.7).then(|| g.expr(&scope, config.max_depth, ctx));
        let mut outer = Query::select(Select { items, from: Some(from), selection, ..Default::default() });
        // A created table's untyped column has BLOB affinity, a flattened
        // VALUES column has none; `+` gives every form the same (none).
        outer.for_each_expr_mut(&mut neutralize_relation_columns);
        let original_form = *RelationForm::ALL.choose(g.rng).unwrap();
        let folded_form = *RelationForm::ALL.iter().filter(|f| **f != original_form).collect::<Vec<_>>().choose(g.rng).unwrap();
        return Some(TestCase::Relation { source, original_form, folded_form: *folded_form, outer });
    }
    None
}
