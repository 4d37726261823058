//! Rendering trees to SQL text for a given engine profile.
//!
//! Output is deterministic and fully parenthesized: every binary or unary
//! node gets its own parentheses so that precedence never depends on the
//! dialect, and identifiers are always double-quoted.

use std::fmt::Write;

use crate::ast::*;
use crate::engine::{EngineCapabilities, EngineProfile};
use crate::error::RenderError;
use crate::value::SqlValue;

#[derive(Debug, Clone)]
pub struct Renderer {
    caps: EngineCapabilities,
    profile: String,
}

type Out = Result<(), RenderError>;

pub fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Literal text for a value. Values the lexer cannot produce directly are
/// spelled as constant expressions (`i64::MIN`, infinities).
pub fn literal(v: &SqlValue) -> String {
    match v {
        SqlValue::Integer(i64::MIN) => "(-9223372036854775807 - 1)".into(),
        SqlValue::Real(r) if r.is_nan() => "NULL".into(),
        SqlValue::Real(r) if r.is_infinite() => {
            if *r > 0.0 { "9e999".into() } else { "-9e999".into() }
        }
        other => other.to_string(),
    }
}

impl Renderer {
    pub fn new(profile: &EngineProfile) -> Self {
        Self { caps: profile.capabilities.clone(), profile: profile.name.clone() }
    }

    pub fn sqlite() -> Self {
        Self::new(&EngineProfile::sqlite())
    }

    pub fn capabilities(&self) -> &EngineCapabilities {
        &self.caps
    }

    fn unrepresentable(&self, what: &'static str) -> RenderError {
        RenderError::Unrepresentable(what, self.profile.clone())
    }

    pub fn expr(&self, e: &Expr) -> Result<String, RenderError> {
        let mut s = String::new();
        self.write_expr(&mut s, e)?;
        Ok(s)
    }

    pub fn query(&self, q: &Query) -> Result<String, RenderError> {
        let mut s = String::new();
        self.write_query(&mut s, q)?;
        Ok(s)
    }

    pub fn statement(&self, stmt: &Statement) -> Result<String, RenderError> {
        let mut s = String::new();
        self.write_statement(&mut s, stmt)?;
        Ok(s)
    }

    fn binary_token(&self, op: BinaryOp) -> String {
        use BinaryOp::*;
        match op {
            Eq => "=".into(),
            NotEq => "!=".into(),
            Lt => "<".into(),
            LtEq => "<=".into(),
            Gt => ">".into(),
            GtEq => ">=".into(),
            NullSafeEq => self.caps.null_safe_equality.clone(),
            NullSafeNotEq => {
                let eq = self.caps.null_safe_equality.trim();
                match eq.strip_suffix("NOT DISTINCT FROM") {
                    Some(head) => format!("{head}DISTINCT FROM"),
                    None => format!("{eq} NOT"),
                }
            }
            And => "AND".into(),
            Or => "OR".into(),
            Add => "+".into(),
            Sub => "-".into(),
            Mul => "*".into(),
            Div => "/".into(),
            Mod => "%".into(),
            BitAnd => "&".into(),
            BitOr => "|".into(),
            ShiftLeft => "<<".into(),
            ShiftRight => ">>".into(),
            Concat => "||".into(),
            Like => "LIKE".into(),
            NotLike => "NOT LIKE".into(),
            Glob => "GLOB".into(),
            NotGlob => "NOT GLOB".into(),
        }
    }

    fn write_expr(&self, s: &mut String, e: &Expr) -> Out {
        match e {
            Expr::Literal(v) => s.push_str(&literal(v)),
            Expr::Column(c) => {
                if let Some(q) = &c.qualifier {
                    s.push_str(&quote_ident(q));
                    s.push('.');
                }
                s.push_str(&quote_ident(&c.column));
            }
            Expr::Unary(op, inner) => {
                // The space keeps `- -1` from lexing as a comment.
                s.push_str(match op {
                    UnaryOp::Not => "(NOT ",
                    UnaryOp::Neg => "(- ",
                    UnaryOp::Plus => "(+ ",
                    UnaryOp::BitNot => "(~ ",
                });
                self.write_expr(s, inner)?;
                s.push(')');
            }
            Expr::IsNull { expr, negated } => {
                s.push('(');
                self.write_expr(s, expr)?;
                s.push_str(if *negated { " IS NOT NULL)" } else { " IS NULL)" });
            }
            Expr::Binary(op, l, r) => {
                s.push('(');
                self.write_expr(s, l)?;
                let _ = write!(s, " {} ", self.binary_token(*op));
                self.write_expr(s, r)?;
                s.push(')');
            }
            Expr::Between { expr, low, high, negated } => {
                s.push('(');
                self.write_expr(s, expr)?;
                s.push_str(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
                self.write_expr(s, low)?;
                s.push_str(" AND ");
                self.write_expr(s, high)?;
                s.push(')');
            }
            Expr::In { expr, set, negated } => {
                s.push('(');
                self.write_expr(s, expr)?;
                s.push_str(if *negated { " NOT IN " } else { " IN " });
                self.write_set(s, set)?;
                s.push(')');
            }
            Expr::List(items) => self.write_value_list(s, items)?,
            Expr::Case { operand, branches, otherwise } => {
                s.push_str("CASE");
                if let Some(o) = operand {
                    s.push(' ');
                    self.write_expr(s, o)?;
                }
                for (when, then) in branches {
                    s.push_str(" WHEN ");
                    self.write_expr(s, when)?;
                    s.push_str(" THEN ");
                    self.write_expr(s, then)?;
                }
                if let Some(e) = otherwise {
                    s.push_str(" ELSE ");
                    self.write_expr(s, e)?;
                }
                s.push_str(" END");
            }
            Expr::Cast { expr, type_name } => {
                s.push_str("CAST(");
                self.write_expr(s, expr)?;
                let _ = write!(s, " AS {type_name})");
            }
            Expr::Function { name, args, distinct, star } => {
                s.push_str(&name.to_ascii_uppercase());
                s.push('(');
                if *star {
                    s.push('*');
                } else {
                    if *distinct {
                        s.push_str("DISTINCT ");
                    }
                    self.write_list(s, args)?;
                }
                s.push(')');
            }
            Expr::Collate { expr, collation } => {
                s.push('(');
                self.write_expr(s, expr)?;
                let _ = write!(s, " COLLATE {collation})");
            }
            Expr::Subquery(q) => {
                s.push('(');
                self.write_query(s, q)?;
                s.push(')');
            }
            Expr::Exists { query, negated } => {
                s.push_str(if *negated { "(NOT EXISTS (" } else { "(EXISTS (" });
                self.write_query(s, query)?;
                s.push_str("))");
            }
            Expr::Quantified { expr, op, all, query } => {
                if !self.caps.supports_any_all {
                    return Err(self.unrepresentable("ANY/ALL comparison"));
                }
                s.push('(');
                self.write_expr(s, expr)?;
                let _ = write!(s, " {} {} (", self.binary_token(*op), if *all { "ALL" } else { "ANY" });
                self.write_query(s, query)?;
                s.push_str("))");
            }
            Expr::Phi(inner) => self.write_expr(s, inner)?,
        }
        Ok(())
    }

    /// Right-hand side of IN: a value list, a subquery, or a marker around
    /// one of those.
    fn write_set(&self, s: &mut String, set: &Expr) -> Out {
        match set {
            Expr::Phi(inner) => self.write_set(s, inner),
            Expr::List(items) => self.write_value_list(s, items),
            Expr::Subquery(q) => {
                s.push('(');
                self.write_query(s, q)?;
                s.push(')');
                Ok(())
            }
            other => {
                // A single expression: render as a one-element list.
                s.push('(');
                self.write_expr(s, other)?;
                s.push(')');
                Ok(())
            }
        }
    }

    fn write_value_list(&self, s: &mut String, items: &[Expr]) -> Out {
        if items.is_empty() && !self.caps.supports_empty_in_list {
            return Err(self.unrepresentable("empty IN list"));
        }
        s.push('(');
        if self.caps.value_list_as_union {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    s.push_str(" UNION ");
                }
                s.push_str("SELECT ");
                self.write_expr(s, item)?;
            }
        } else {
            self.write_list(s, items)?;
        }
        s.push(')');
        Ok(())
    }

    fn write_list(&self, s: &mut String, items: &[Expr]) -> Out {
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            self.write_expr(s, item)?;
        }
        Ok(())
    }

    fn write_query(&self, s: &mut String, q: &Query) -> Out {
        if !q.with.is_empty() {
            s.push_str("WITH ");
            for (i, cte) in q.with.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                s.push_str(&quote_ident(&cte.name));
                if !cte.columns.is_empty() {
                    s.push('(');
                    s.push_str(&idents(&cte.columns));
                    s.push(')');
                }
                s.push_str(" AS (");
                self.write_query(s, &cte.query)?;
                s.push(')');
            }
            s.push(' ');
        }
        self.write_set_expr(s, &q.body)?;
        if !q.order_by.is_empty() {
            s.push_str(" ORDER BY ");
            for (i, t) in q.order_by.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                self.write_expr(s, &t.expr)?;
                if t.desc {
                    s.push_str(" DESC");
                }
            }
        }
        if let Some(n) = q.limit {
            let _ = write!(s, " LIMIT {n}");
        }
        Ok(())
    }

    fn write_set_expr(&self, s: &mut String, body: &SetExpr) -> Out {
        match body {
            SetExpr::Select(sel) => self.write_select(s, sel),
            SetExpr::Values(rows) => {
                s.push_str("VALUES ");
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    s.push('(');
                    self.write_list(s, row)?;
                    s.push(')');
                }
                Ok(())
            }
            SetExpr::Union { all, left, right } => {
                self.write_set_expr(s, left)?;
                s.push_str(if *all { " UNION ALL " } else { " UNION " });
                self.write_set_expr(s, right)
            }
        }
    }

    fn write_select(&self, s: &mut String, sel: &Select) -> Out {
        s.push_str("SELECT ");
        if sel.distinct {
            s.push_str("DISTINCT ");
        }
        for (i, item) in sel.items.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            match item {
                SelectItem::Wildcard => s.push('*'),
                SelectItem::Expr { expr, alias } => {
                    self.write_expr(s, expr)?;
                    if let Some(a) = alias {
                        let _ = write!(s, " AS {}", quote_ident(a));
                    }
                }
            }
        }
        if let Some(from) = &sel.from {
            s.push_str(" FROM ");
            self.write_from(s, from)?;
        }
        if let Some(w) = &sel.selection {
            s.push_str(" WHERE ");
            self.write_expr(s, w)?;
        }
        if !sel.group_by.is_empty() {
            s.push_str(" GROUP BY ");
            self.write_list(s, &sel.group_by)?;
        }
        if let Some(h) = &sel.having {
            s.push_str(" HAVING ");
            self.write_expr(s, h)?;
        }
        Ok(())
    }

    fn write_from(&self, s: &mut String, from: &FromClause) -> Out {
        self.write_factor(s, &from.first)?;
        for j in &from.joins {
            s.push_str(match j.kind {
                JoinKind::Comma => ", ",
                JoinKind::Cross => " CROSS JOIN ",
                JoinKind::Inner => " JOIN ",
                JoinKind::Left => " LEFT JOIN ",
            });
            self.write_factor(s, &j.factor)?;
            if let Some(on) = &j.on {
                s.push_str(" ON ");
                self.write_expr(s, on)?;
            }
        }
        Ok(())
    }

    fn write_factor(&self, s: &mut String, f: &TableFactor) -> Out {
        match f {
            TableFactor::Table { name, alias } => {
                s.push_str(&quote_ident(name));
                if let Some(a) = alias {
                    let _ = write!(s, " AS {}", quote_ident(a));
                }
            }
            TableFactor::Derived { query, alias } => {
                s.push('(');
                self.write_query(s, query)?;
                let _ = write!(s, ") AS {}", quote_ident(alias));
            }
        }
        Ok(())
    }

    fn write_statement(&self, s: &mut String, stmt: &Statement) -> Out {
        match stmt {
            Statement::Query(q) => self.write_query(s, q)?,
            Statement::Insert { or_ignore, table, columns, source } => {
                s.push_str(if *or_ignore { "INSERT OR IGNORE INTO " } else { "INSERT INTO " });
                s.push_str(&quote_ident(table));
                if !columns.is_empty() {
                    let _ = write!(s, "({})", idents(columns));
                }
                s.push(' ');
                self.write_query(s, source)?;
            }
            Statement::Update { table, assignments, selection } => {
                let _ = write!(s, "UPDATE {} SET ", quote_ident(table));
                for (i, (col, e)) in assignments.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    let _ = write!(s, "{} = ", quote_ident(col));
                    self.write_expr(s, e)?;
                }
                if let Some(w) = selection {
                    s.push_str(" WHERE ");
                    self.write_expr(s, w)?;
                }
            }
            Statement::Delete { table, selection } => {
                let _ = write!(s, "DELETE FROM {}", quote_ident(table));
                if let Some(w) = selection {
                    s.push_str(" WHERE ");
                    self.write_expr(s, w)?;
                }
            }
            Statement::CreateTable(t) => {
                let _ = write!(s, "CREATE TABLE {}(", quote_ident(&t.name));
                for (i, c) in t.columns.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    s.push_str(&quote_ident(&c.name));
                    if let Some(ty) = &c.type_name {
                        let _ = write!(s, " {ty}");
                    }
                    if c.primary_key {
                        s.push_str(" PRIMARY KEY");
                    }
                    if c.unique {
                        s.push_str(" UNIQUE");
                    }
                    if c.not_null {
                        s.push_str(" NOT NULL");
                    }
                    if let Some(coll) = &c.collation {
                        let _ = write!(s, " COLLATE {coll}");
                    }
                }
                s.push(')');
                if t.without_rowid {
                    s.push_str(" WITHOUT ROWID");
                }
            }
            Statement::CreateIndex { name, unique, table, columns, selection } => {
                let _ = write!(
                    s,
                    "CREATE {}INDEX {} ON {}(",
                    if *unique { "UNIQUE " } else { "" },
                    quote_ident(name),
                    quote_ident(table)
                );
                for (i, c) in columns.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    self.write_expr(s, &c.expr)?;
                    if let Some(coll) = &c.collation {
                        let _ = write!(s, " COLLATE {coll}");
                    }
                    if c.desc {
                        s.push_str(" DESC");
                    }
                }
                s.push(')');
                if let Some(w) = selection {
                    s.push_str(" WHERE ");
                    self.write_expr(s, w)?;
                }
            }
            Statement::CreateView { name, columns, query } => {
                let _ = write!(s, "CREATE VIEW {}", quote_ident(name));
                if !columns.is_empty() {
                    let _ = write!(s, "({})", idents(columns));
                }
                s.push_str(" AS ");
                self.write_query(s, query)?;
            }
            Statement::Drop { kind, name, if_exists } => {
                let kind = match kind {
                    ObjectKind::Table => "TABLE",
                    ObjectKind::View => "VIEW",
                    ObjectKind::Index => "INDEX",
                };
                let _ = write!(s, "DROP {kind} {}{}", if *if_exists { "IF EXISTS " } else { "" }, quote_ident(name));
            }
            Statement::Begin => s.push_str("BEGIN"),
            Statement::Rollback => s.push_str("ROLLBACK"),
            Statement::Analyze => s.push_str("ANALYZE"),
        }
        Ok(())
    }
}

fn idents(names: &[String]) -> String {
    names.iter().map(|n| quote_ident(n)).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineSpec, Session};
    use std::time::Duration;

    fn r() -> Renderer {
        Renderer::sqlite()
    }

    #[test]
    fn literals() {
        assert_eq!(literal(&SqlValue::Integer(i64::MIN)), "(-9223372036854775807 - 1)");
        assert_eq!(literal(&SqlValue::Text("it's".into())), "'it''s'");
        assert_eq!(literal(&SqlValue::Blob(vec![0xab, 1])), "X'AB01'");
        assert_eq!(literal(&SqlValue::Real(0.5)), "0.5");
        assert_eq!(literal(&SqlValue::Real(f64::INFINITY)), "9e999");
        assert_eq!(quote_ident("a\"b"), "\"a\"\"b\"");
    }

    #[test]
    fn unary_minus_never_forms_comment() {
        let e = Expr::unary(UnaryOp::Neg, Expr::lit(-1));
        assert_eq!(r().expr(&e).unwrap(), "(- -1)");
    }

    #[test]
    fn case_mapping_two_entries() {
        let key = |v: i64| Expr::binary(BinaryOp::NullSafeEq, Expr::col("t0", "c0"), Expr::lit(v));
        let e = Expr::Case {
            operand: None,
            branches: vec![(key(0), Expr::lit(0)), (key(1), Expr::lit(1))],
            otherwise: None,
        };
        assert_eq!(
            r().expr(&e).unwrap(),
            r#"CASE WHEN ("t0"."c0" IS 0) THEN 0 WHEN ("t0"."c0" IS 1) THEN 1 END"#
        );
    }

    #[test]
    fn value_list_as_union_chain() {
        let mut renderer = r();
        renderer.caps.value_list_as_union = true;
        let e = Expr::In {
            expr: Box::new(Expr::col("t0", "c0")),
            set: Box::new(Expr::List(vec![Expr::lit(1), Expr::lit(2), Expr::lit(3)])),
            negated: false,
        };
        assert_eq!(renderer.expr(&e).unwrap(), r#"("t0"."c0" IN (SELECT 1 UNION SELECT 2 UNION SELECT 3))"#);
        assert_eq!(r().expr(&e).unwrap(), r#"("t0"."c0" IN (1, 2, 3))"#);
    }

    #[test]
    fn empty_list_needs_capability() {
        let mut renderer = r();
        renderer.caps.supports_empty_in_list = false;
        let e = Expr::In { expr: Box::new(Expr::lit(1)), set: Box::new(Expr::List(vec![])), negated: false };
        assert!(renderer.expr(&e).is_err());
        assert_eq!(r().expr(&e).unwrap(), "(1 IN ())");
    }

    #[test]
    fn null_safe_tokens() {
        let mut renderer = r();
        renderer.caps.null_safe_equality = "IS NOT DISTINCT FROM".into();
        let e = Expr::binary(BinaryOp::NullSafeNotEq, Expr::lit(1), Expr::null());
        assert_eq!(renderer.expr(&e).unwrap(), "(1 IS DISTINCT FROM NULL)");
        assert_eq!(r().expr(&e).unwrap(), "(1 IS NOT NULL)");
    }

    #[test]
    fn any_all_rejected_for_sqlite() {
        let q = Query::select(Select { items: vec![SelectItem::expr(Expr::lit(1))], ..Default::default() });
        let e = Expr::Quantified { expr: Box::new(Expr::lit(1)), op: BinaryOp::Eq, all: true, query: Box::new(q) };
        assert!(matches!(r().expr(&e), Err(RenderError::Unrepresentable(..))));
    }

    #[test]
    fn null_key_needs_null_safe_comparison() {
        // `=` against NULL never matches; `IS` does.
        let mut s = Session::open(&EngineSpec::bundled_sqlite(), Duration::from_secs(5)).unwrap();
        s.run_setup("CREATE TABLE t0(c0); INSERT INTO t0 VALUES (NULL);").unwrap();
        let case = |op| Expr::Case {
            operand: None,
            branches: vec![(Expr::binary(op, Expr::col("t0", "c0"), Expr::null()), Expr::lit(7))],
            otherwise: None,
        };
        let sql = |op| {
            let sel = Select {
                items: vec![SelectItem::expr(case(op))],
                from: Some(FromClause::single(TableFactor::table("t0"))),
                ..Default::default()
            };
            r().query(&Query::select(sel)).unwrap()
        };
        let eq = s.execute(&sql(BinaryOp::Eq)).unwrap();
        let is = s.execute(&sql(BinaryOp::NullSafeEq)).unwrap();
        assert_eq!(eq.rows, vec![vec![SqlValue::Null]]);
        assert_eq!(is.rows, vec![vec![SqlValue::Integer(7)]]);
    }

    #[test]
    fn statements() {
        let t = Statement::CreateTable(CreateTable {
            name: "t0".into(),
            columns: vec![ColumnDef {
                name: "c0".into(),
                type_name: Some("TEXT".into()),
                primary_key: true,
                unique: false,
                not_null: true,
                collation: Some("NOCASE".into()),
            }],
            without_rowid: true,
        });
        assert_eq!(
            r().statement(&t).unwrap(),
            r#"CREATE TABLE "t0"("c0" TEXT PRIMARY KEY NOT NULL COLLATE NOCASE) WITHOUT ROWID"#
        );
        let d = Statement::Drop { kind: ObjectKind::View, name: "v0".into(), if_exists: true };
        assert_eq!(r().statement(&d).unwrap(), r#"DROP VIEW IF EXISTS "v0""#);
    }

    #[test]
    fn rendering_is_deterministic_and_phi_transparent() {
        let e = Expr::and(Expr::Phi(Box::new(Expr::col("t0", "c0"))), Expr::lit(1));
        let mut stripped = e.clone();
        stripped.strip_phi();
        assert_eq!(r().expr(&e).unwrap(), r().expr(&e).unwrap());
        assert_eq!(r().expr(&e).unwrap(), r().expr(&stripped).unwrap());
    }
}
