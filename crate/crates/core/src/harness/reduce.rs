//! Automatic test-case reduction: delta debugging over the state script,
//! then greedy AST simplification of the test, repeated to a fixpoint.
//!
//! Every candidate is replayed on a fresh database and kept only if it
//! reproduces the report's verdict. Edits that could make the oracle itself
//! nondeterministic are never tried: queries with a LIMIT and ORDER BY terms
//! stay untouched, aggregates are never replaced by their argument, and the
//! FROM and GROUP BY of the query holding the expression under test are
//! frozen (the auxiliary query was derived from them).

use std::time::{Duration, Instant};

use thiserror::Error;

use super::report::{replay, BugReport};
use crate::ast::{Expr, Query, Select, SetExpr, Statement, TableFactor};
use crate::engine::Session;
use crate::oracle::{OracleConfig, TestCase};
use crate::render::Renderer;
use crate::value::SqlValue;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("report does not reproduce: {0}")]
    NotReproducible(String),
}

/// Shrinks `report`. On timeout the best result so far is returned with
/// `reduced == false`.
pub fn reduce(
    report: &BugReport,
    session: &mut Session,
    config: &OracleConfig,
    timeout: Duration,
) -> Result<BugReport, ReduceError> {
    let deadline = Instant::now() + timeout;
    let renderer = Renderer::new(session.profile());
    let first = replay(&report.creation_script, &report.tables, &report.case, session, config)
        .map_err(|e| ReduceError::NotReproducible(format!("state script fails: {e}")))?;
    if !report.matches(&first) {
        return Err(ReduceError::NotReproducible(format!("replay gave {}", first.outcome.name())));
    }

    let mut best = report.clone();
    let reproduces = |script: &[String], case: &TestCase, session: &mut Session| -> Option<bool> {
        if Instant::now() >= deadline {
            return None;
        }
        Some(matches!(replay(script, &report.tables, case, session, config), Ok(v) if report.matches(&v)))
    };

    let mut complete = false;
    'outer: loop {
        let mut progress = false;

        let case = best.case.clone();
        let (script, interrupted) =
            ddmin(best.creation_script.clone(), &mut |s: &[String]| reproduces(s, &case, session));
        progress |= script.len() < best.creation_script.len();
        best.creation_script = script;
        if interrupted {
            break;
        }

        // Greedy: take the first simplification that still reproduces, then
        // start over from the simplified case.
        loop {
            let size = case_size(&best.case, &renderer);
            let mut accepted = false;
            for candidate in simplifications(&best.case) {
                if case_size(&candidate, &renderer) >= size {
                    continue;
                }
                match reproduces(&best.creation_script, &candidate, session) {
                    None => break 'outer,
                    Some(true) => {
                        best.case = candidate;
                        accepted = true;
                        progress = true;
                        break;
                    }
                    Some(false) => {}
                }
            }
            if !accepted {
                break;
            }
        }
        if !progress {
            complete = true;
            break;
        }
    }

    // Refresh texts and results from the final case.
    if let Ok(v) = replay(&best.creation_script, &best.tables, &best.case, session, config) {
        if report.matches(&v) {
            best.triple = v.triple;
            best.reason = v.reason;
            best.error = v.error;
        }
    }
    best.reduced = complete;
    Ok(best)
}

/// Complement-based delta debugging; the result is 1-minimal unless
/// interrupted. `test` returns `None` to interrupt.
pub fn ddmin<T: Clone>(mut items: Vec<T>, test: &mut dyn FnMut(&[T]) -> Option<bool>) -> (Vec<T>, bool) {
    let mut n = 2;
    while items.len() >= 2 {
        let chunk = items.len().div_ceil(n);
        let mut reduced = false;
        for start in (0..items.len()).step_by(chunk) {
            let complement: Vec<T> =
                items[..start].iter().chain(items[(start + chunk).min(items.len())..].iter()).cloned().collect();
            match test(&complement) {
                None => return (items, true),
                Some(true) => {
                    items = complement;
                    n = (n - 1).max(2);
                    reduced = true;
                    break;
                }
                Some(false) => {}
            }
        }
        if !reduced {
            if n >= items.len() {
                break;
            }
            n = (n * 2).min(items.len());
        }
    }
    (items, false)
}

fn case_size(case: &TestCase, r: &Renderer) -> usize {
    let q = |q: &Query| r.query(q).map_or(usize::MAX / 4, |s| s.len());
    match case {
        TestCase::Predicate { candidate, original, .. } => {
            r.expr(&candidate.phi).map_or(usize::MAX / 4, |s| s.len())
                + original.iter().map(|s| r.statement(&s.statement).map_or(usize::MAX / 4, |s| s.len())).sum::<usize>()
        }
        TestCase::Relation { source, outer, .. } => q(source) + q(outer),
    }
}

// ---------------------------------------------------------------------------
// Candidate simplifications

/// All single-step simplifications of `case`, larger ones first.
fn simplifications(case: &TestCase) -> Vec<TestCase> {
    let mut out = Vec::new();
    match case {
        TestCase::Predicate { placement, candidate, original } => {
            for (i, step) in original.iter().enumerate() {
                for stmt in statement_edits(&step.statement) {
                    let mut steps = original.clone();
                    steps[i].statement = stmt;
                    out.push(TestCase::Predicate { placement: *placement, candidate: candidate.clone(), original: steps });
                }
            }
            // The expression under test: never its root, so the shape and
            // any neutral wrapper survive.
            let mut phi = candidate.phi.clone();
            for edited in expr_edits_below_root(&mut phi) {
                let refreshed = candidate.refreshed(edited.clone());
                if refreshed.transparent != candidate.transparent {
                    continue;
                }
                let mut steps = original.clone();
                for s in &mut steps {
                    s.statement.replace_phi(&edited);
                }
                out.push(TestCase::Predicate { placement: *placement, candidate: refreshed, original: steps });
            }
        }
        TestCase::Relation { source, original_form, folded_form, outer } => {
            let rebuild = |source: Query, outer: Query| TestCase::Relation {
                source,
                original_form: *original_form,
                folded_form: *folded_form,
                outer,
            };
            for q in query_edits(outer) {
                out.push(rebuild(source.clone(), q));
            }
            // The source's result columns define the relation; only the
            // rest of it is simplified.
            let mut s = source.clone();
            let items = s.as_select_mut().map(|sel| std::mem::take(&mut sel.items));
            for mut q in query_edits(&s) {
                if let (Some(sel), Some(items)) = (q.as_select_mut(), &items) {
                    sel.items = items.clone();
                }
                out.push(rebuild(q, outer.clone()));
            }
        }
    }
    out
}

fn statement_edits(stmt: &Statement) -> Vec<Statement> {
    let mut out = Vec::new();
    match stmt {
        Statement::Query(q) => out.extend(query_edits(q).into_iter().map(Statement::Query)),
        Statement::CreateView { name, columns, query } => out.extend(
            query_edits(query)
                .into_iter()
                .map(|q| Statement::CreateView { name: name.clone(), columns: columns.clone(), query: q }),
        ),
        Statement::Insert { or_ignore, table, columns, source } => {
            out.extend(query_edits(source).into_iter().map(|q| Statement::Insert {
                or_ignore: *or_ignore,
                table: table.clone(),
                columns: columns.clone(),
                source: q,
            }))
        }
        _ => {}
    }
    // Expression replacement across the whole statement.
    let slots = count_statement_nodes(stmt);
    for i in 0..slots {
        let Some(node) = statement_node(stmt, i) else { continue };
        for replacement in replacements(&node) {
            let mut s = stmt.clone();
            let mut k = i;
            walk_statement(&mut s, &mut |e| take_nth(e, &mut k, &replacement));
            out.push(s);
        }
    }
    out
}

/// Structural edits of one query (clauses and joins), then expression
/// replacements.
fn query_edits(q: &Query) -> Vec<Query> {
    let mut out = Vec::new();
    if q.limit.is_some() {
        return out;
    }
    if let SetExpr::Union { left, right, .. } = &q.body {
        for side in [left, right] {
            if !set_has_phi(side) && set_has_phi(&q.body) {
                continue;
            }
            let mut r = q.clone();
            r.body = (**side).clone();
            out.push(r);
        }
    }
    for i in 0..q.with.len() {
        let mut r = q.clone();
        r.with.remove(i);
        out.push(r);
    }
    if let Some(s) = select_of(q) {
        let frozen = select_has_phi(s);
        let edit = |f: &dyn Fn(&mut Select)| {
            let mut r = q.clone();
            if let SetExpr::Select(sel) = &mut r.body {
                f(sel);
            }
            r
        };
        if s.distinct {
            out.push(edit(&|s| s.distinct = false));
        }
        for i in 0..s.items.len() {
            if s.items.len() > 1 && !item_has_phi(&s.items[i]) {
                out.push(edit(&|s| {
                    s.items.remove(i);
                }));
            }
        }
        if s.selection.as_ref().is_some_and(|e| !e.contains_phi()) {
            out.push(edit(&|s| s.selection = None));
        }
        if s.having.as_ref().is_some_and(|e| !e.contains_phi()) {
            out.push(edit(&|s| s.having = None));
        }
        if !frozen {
            if !s.group_by.is_empty() {
                out.push(edit(&|s| s.group_by.clear()));
            }
            if let Some(from) = &s.from {
                for j in 0..from.joins.len() {
                    out.push(edit(&|s| {
                        s.from.as_mut().unwrap().joins.remove(j);
                    }));
                }
            }
        }
    }
    let slots = count_query_nodes(q);
    for i in 0..slots {
        let Some(node) = query_node(q, i) else { continue };
        for replacement in replacements(&node) {
            let mut r = q.clone();
            let mut k = i;
            walk_query(&mut r, &mut |e| take_nth(e, &mut k, &replacement));
            out.push(r);
        }
    }
    out
}

fn select_of(q: &Query) -> Option<&Select> {
    match &q.body {
        SetExpr::Select(s) => Some(s),
        _ => None,
    }
}

fn item_has_phi(item: &crate::ast::SelectItem) -> bool {
    match item {
        crate::ast::SelectItem::Expr { expr, .. } => expr.contains_phi(),
        _ => false,
    }
}

fn select_has_phi(s: &Select) -> bool {
    s.items.iter().any(item_has_phi)
        || s.selection.as_ref().is_some_and(Expr::contains_phi)
        || s.having.as_ref().is_some_and(Expr::contains_phi)
        || s.group_by.iter().any(Expr::contains_phi)
        || s.from.as_ref().is_some_and(|f| f.joins.iter().any(|j| j.on.as_ref().is_some_and(Expr::contains_phi)))
}

fn set_has_phi(body: &SetExpr) -> bool {
    match body {
        SetExpr::Select(s) => select_has_phi(s),
        SetExpr::Values(rows) => rows.iter().flatten().any(Expr::contains_phi),
        SetExpr::Union { left, right, .. } => set_has_phi(left) || set_has_phi(right),
    }
}

/// Simpler expressions that could stand in for `node`.
fn replacements(node: &Expr) -> Vec<Expr> {
    if matches!(node, Expr::Literal(_) | Expr::Phi(_)) {
        return vec![];
    }
    let mut out = Vec::new();
    let aggregate = matches!(node, Expr::Function { name, .. } if is_aggregate(name));
    if !aggregate {
        out.extend(node.children().into_iter().cloned());
    }
    out.extend([Expr::null(), Expr::Literal(SqlValue::Integer(0)), Expr::Literal(SqlValue::Integer(1))]);
    out
}

fn is_aggregate(name: &str) -> bool {
    ["avg", "count", "group_concat", "sum", "total", "min", "max"].iter().any(|a| a.eq_ignore_ascii_case(name))
}

/// Calls for each candidate node; replaces the `k`-th one.
fn take_nth(e: &mut Expr, k: &mut usize, replacement: &Expr) -> bool {
    if *k == 0 {
        *e = replacement.clone();
        return true;
    }
    *k -= 1;
    false
}

fn expr_edits_below_root(phi: &mut Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    let mut count = 0;
    walk_expr_inner(phi, &mut |_| {
        count += 1;
        false
    });
    // Index 0 is the root itself.
    for i in 1..count {
        let mut probe = phi.clone();
        let mut k = i;
        let mut node = None;
        walk_expr_inner(&mut probe, &mut |e| {
            if k == 0 {
                node = Some(e.clone());
                return true;
            }
            k -= 1;
            false
        });
        let Some(node) = node else { continue };
        for replacement in replacements(&node) {
            let mut edited = phi.clone();
            let mut k = i;
            walk_expr_inner(&mut edited, &mut |e| take_nth(e, &mut k, &replacement));
            out.push(edited);
        }
    }
    out
}

fn count_statement_nodes(stmt: &Statement) -> usize {
    let mut s = stmt.clone();
    let mut n = 0;
    walk_statement(&mut s, &mut |_| {
        n += 1;
        false
    });
    n
}

fn statement_node(stmt: &Statement, i: usize) -> Option<Expr> {
    let mut s = stmt.clone();
    let (mut k, mut found) = (i, None);
    walk_statement(&mut s, &mut |e| {
        if k == 0 {
            found = Some(e.clone());
            return true;
        }
        k -= 1;
        false
    });
    found
}

fn count_query_nodes(q: &Query) -> usize {
    let mut q = q.clone();
    let mut n = 0;
    walk_query(&mut q, &mut |_| {
        n += 1;
        false
    });
    n
}

fn query_node(q: &Query, i: usize) -> Option<Expr> {
    let mut q = q.clone();
    let (mut k, mut found) = (i, None);
    walk_query(&mut q, &mut |e| {
        if k == 0 {
            found = Some(e.clone());
            return true;
        }
        k -= 1;
        false
    });
    found
}

// ---------------------------------------------------------------------------
// Pre-order traversal over the editable expression nodes. `f` returns true
// to stop. Marked expressions are skipped entirely (they are edited through
// the candidate), as are the places listed in the module comment.

type Visit<'a> = dyn FnMut(&mut Expr) -> bool + 'a;

fn walk_expr(e: &mut Expr, f: &mut Visit) -> bool {
    if matches!(e, Expr::Phi(_)) {
        return false;
    }
    walk_expr_inner(e, f)
}

fn walk_expr_inner(e: &mut Expr, f: &mut Visit) -> bool {
    if f(e) {
        return true;
    }
    for c in e.children_mut() {
        if walk_expr(c, f) {
            return true;
        }
    }
    for q in e.queries_mut() {
        if walk_query(q, f) {
            return true;
        }
    }
    false
}

fn walk_query(q: &mut Query, f: &mut Visit) -> bool {
    if q.limit.is_some() {
        return false;
    }
    for cte in &mut q.with {
        if walk_query(&mut cte.query, f) {
            return true;
        }
    }
    walk_set(&mut q.body, f)
}

fn walk_set(body: &mut SetExpr, f: &mut Visit) -> bool {
    match body {
        SetExpr::Select(s) => walk_select(s, f),
        SetExpr::Values(rows) => rows.iter_mut().flatten().any(|e| walk_expr(e, f)),
        SetExpr::Union { left, right, .. } => walk_set(left, f) || walk_set(right, f),
    }
}

fn walk_select(s: &mut Select, f: &mut Visit) -> bool {
    let frozen = select_has_phi(s);
    for item in &mut s.items {
        if let crate::ast::SelectItem::Expr { expr, .. } = item {
            if walk_expr(expr, f) {
                return true;
            }
        }
    }
    if !frozen {
        if let Some(from) = &mut s.from {
            if walk_factor(&mut from.first, f) {
                return true;
            }
            for j in &mut from.joins {
                if walk_factor(&mut j.factor, f) {
                    return true;
                }
                if let Some(on) = &mut j.on {
                    if walk_expr(on, f) {
                        return true;
                    }
                }
            }
        }
    }
    if let Some(w) = &mut s.selection {
        if walk_expr(w, f) {
            return true;
        }
    }
    if !frozen {
        for g in &mut s.group_by {
            if walk_expr(g, f) {
                return true;
            }
        }
    }
    if let Some(h) = &mut s.having {
        if walk_expr(h, f) {
            return true;
        }
    }
    false
}

fn walk_factor(t: &mut TableFactor, f: &mut Visit) -> bool {
    match t {
        TableFactor::Derived { query, .. } => walk_query(query, f),
        _ => false,
    }
}

fn walk_statement(stmt: &mut Statement, f: &mut Visit) -> bool {
    match stmt {
        Statement::Query(q) | Statement::CreateView { query: q, .. } | Statement::Insert { source: q, .. } => {
            walk_query(q, f)
        }
        Statement::Update { assignments, selection, .. } => {
            assignments.iter_mut().any(|(_, e)| walk_expr(e, f)) || selection.as_mut().is_some_and(|w| walk_expr(w, f))
        }
        Statement::Delete { selection, .. } => selection.as_mut().is_some_and(|w| walk_expr(w, f)),
        Statement::CreateIndex { selection, .. } => selection.as_mut().is_some_and(|w| walk_expr(w, f)),
        _ => false,
    }
}
