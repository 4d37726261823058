//! A small reference evaluator for closed expressions (literals only, no
//! functions, casts, LIKE or subqueries), written from SQLite's documented
//! semantics rather than from the harness code.
//!
//! Literals carry no affinity, so comparisons never convert: values order
//! NULL < numbers < text < blob, text and blobs compare bytewise. Anything
//! that would produce a real (integer overflow, real-looking text in
//! arithmetic) is reported as [`Eval::Skip`].

use std::cmp::Ordering;

use coddtest::ast::{BinaryOp, Expr, UnaryOp};
use coddtest::value::SqlValue;

#[derive(Debug, Clone, PartialEq)]
pub enum Eval {
    Value(SqlValue),
    /// Outside the evaluator's exact subset.
    Skip(&'static str),
}

type R = Result<SqlValue, &'static str>;

pub fn eval(e: &Expr) -> Eval {
    match ev(e) {
        Ok(v) => Eval::Value(v),
        Err(why) => Eval::Skip(why),
    }
}

fn bool_val(b: bool) -> SqlValue {
    SqlValue::Integer(b as i64)
}

fn text_bytes(v: &SqlValue) -> Option<&[u8]> {
    match v {
        SqlValue::Text(t) => Some(t.as_bytes()),
        SqlValue::Blob(b) => Some(b),
        _ => None,
    }
}

/// Longest prefix that reads as a number: `(digits, is_real, end)`.
fn numeric_prefix(s: &[u8]) -> (usize, bool, usize) {
    let mut i = 0;
    while i < s.len() && s[i].is_ascii_whitespace() {
        i += 1;
    }
    if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
        i += 1;
    }
    let start = i;
    while i < s.len() && s[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - start;
    let mut real = false;
    if i < s.len() && s[i] == b'.' {
        let mut j = i + 1;
        while j < s.len() && s[j].is_ascii_digit() {
            j += 1;
        }
        if digits > 0 || j > i + 1 {
            digits += j - i - 1;
            real = true;
            i = j;
        }
    }
    if digits > 0 && i < s.len() && (s[i] == b'e' || s[i] == b'E') {
        let mut j = i + 1;
        if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
            j += 1;
        }
        let k = j;
        while j < s.len() && s[j].is_ascii_digit() {
            j += 1;
        }
        if j > k {
            real = true;
            i = j;
        }
    }
    (digits, real, i)
}

/// Leading-integer parse used by bitwise operators: sign and digits only.
fn int_prefix(s: &[u8]) -> Result<i64, &'static str> {
    let mut i = 0;
    while i < s.len() && s[i].is_ascii_whitespace() {
        i += 1;
    }
    let neg = i < s.len() && s[i] == b'-';
    if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
        i += 1;
    }
    let mut n: i64 = 0;
    while i < s.len() && s[i].is_ascii_digit() {
        let d = (s[i] - b'0') as i64;
        n = n.checked_mul(10).and_then(|n| if neg { n.checked_sub(d) } else { n.checked_add(d) }).ok_or("long digit string")?;
        i += 1;
    }
    Ok(n)
}

/// Numeric value for arithmetic; `None` for NULL.
fn to_number(v: &SqlValue) -> Result<Option<i64>, &'static str> {
    match v {
        SqlValue::Null => Ok(None),
        SqlValue::Integer(i) => Ok(Some(*i)),
        SqlValue::Real(_) => Err("real"),
        other => {
            let s = text_bytes(other).unwrap();
            let (digits, real, _) = numeric_prefix(s);
            if real {
                return Err("real-looking text");
            }
            if digits == 0 {
                return Ok(Some(0));
            }
            int_prefix(s).map(Some)
        }
    }
}

/// Integer value for bitwise operators; `None` for NULL.
fn to_integer(v: &SqlValue) -> Result<Option<i64>, &'static str> {
    match v {
        SqlValue::Null => Ok(None),
        SqlValue::Integer(i) => Ok(Some(*i)),
        SqlValue::Real(_) => Err("real"),
        other => int_prefix(text_bytes(other).unwrap()).map(Some),
    }
}

/// Truth value: numbers are true when non-zero; text is read as a real
/// prefix. `None` for NULL.
fn truth(v: &SqlValue) -> Result<Option<bool>, &'static str> {
    match v {
        SqlValue::Null => Ok(None),
        SqlValue::Integer(i) => Ok(Some(*i != 0)),
        SqlValue::Real(r) => Ok(Some(*r != 0.0)),
        other => {
            let s = text_bytes(other).unwrap();
            let (digits, _, end) = numeric_prefix(s);
            if digits == 0 {
                return Ok(Some(false));
            }
            let text = std::str::from_utf8(&s[..end]).map_err(|_| "non-utf8")?.trim_start();
            let text = text.strip_suffix('.').unwrap_or(text);
            let r: f64 = text.parse().map_err(|_| "unparsable number")?;
            Ok(Some(r != 0.0))
        }
    }
}

fn class(v: &SqlValue) -> u8 {
    match v {
        SqlValue::Null => 0,
        SqlValue::Integer(_) | SqlValue::Real(_) => 1,
        SqlValue::Text(_) => 2,
        SqlValue::Blob(_) => 3,
    }
}

/// Ordering without any conversion; callers handle NULL first.
fn order(a: &SqlValue, b: &SqlValue) -> Result<Ordering, &'static str> {
    Ok(match (a, b) {
        (SqlValue::Integer(x), SqlValue::Integer(y)) => x.cmp(y),
        (SqlValue::Real(_), _) | (_, SqlValue::Real(_)) => return Err("real"),
        (SqlValue::Text(x), SqlValue::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        (SqlValue::Blob(x), SqlValue::Blob(y)) => x.cmp(y),
        _ => class(a).cmp(&class(b)),
    })
}

fn compare(op: BinaryOp, a: &SqlValue, b: &SqlValue) -> R {
    use BinaryOp::*;
    let (an, bn) = (a.is_null(), b.is_null());
    match op {
        NullSafeEq | NullSafeNotEq => {
            let same = match (an, bn) {
                (true, true) => true,
                (false, false) => order(a, b)? == Ordering::Equal,
                _ => false,
            };
            return Ok(bool_val(same == (op == NullSafeEq)));
        }
        _ if an || bn => return Ok(SqlValue::Null),
        _ => {}
    }
    let o = order(a, b)?;
    Ok(bool_val(match op {
        Eq => o.is_eq(),
        NotEq => o.is_ne(),
        Lt => o.is_lt(),
        LtEq => o.is_le(),
        Gt => o.is_gt(),
        GtEq => o.is_ge(),
        _ => unreachable!(),
    }))
}

fn three_valued(b: Option<bool>) -> SqlValue {
    b.map_or(SqlValue::Null, bool_val)
}

fn and(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

fn shift(a: i64, b: i64, left: bool) -> i64 {
    let (left, b) = if b < 0 { (!left, if b > -64 { -b } else { 64 }) } else { (left, b) };
    if b >= 64 {
        return if a >= 0 || left { 0 } else { -1 };
    }
    if left {
        ((a as u64) << b) as i64
    } else {
        a >> b
    }
}

fn arithmetic(op: BinaryOp, a: &SqlValue, b: &SqlValue) -> R {
    use BinaryOp::*;
    if matches!(op, BitAnd | BitOr | ShiftLeft | ShiftRight) {
        let (Some(x), Some(y)) = (to_integer(a)?, to_integer(b)?) else { return Ok(SqlValue::Null) };
        return Ok(SqlValue::Integer(match op {
            BitAnd => x & y,
            BitOr => x | y,
            ShiftLeft => shift(x, y, true),
            _ => shift(x, y, false),
        }));
    }
    if a.is_null() || b.is_null() {
        return Ok(SqlValue::Null);
    }
    let (Some(x), Some(y)) = (to_number(a)?, to_number(b)?) else { return Ok(SqlValue::Null) };
    let v = match op {
        Add => x.checked_add(y),
        Sub => x.checked_sub(y),
        Mul => x.checked_mul(y),
        Div if y == 0 => return Ok(SqlValue::Null),
        Div => x.checked_div(y),
        Mod if y == 0 => return Ok(SqlValue::Null),
        Mod if y == -1 => Some(0),
        Mod => Some(x % y),
        _ => unreachable!(),
    };
    v.map(SqlValue::Integer).ok_or("integer overflow")
}

fn as_text(v: &SqlValue) -> Result<Option<String>, &'static str> {
    Ok(match v {
        SqlValue::Null => None,
        SqlValue::Integer(i) => Some(i.to_string()),
        SqlValue::Real(_) => return Err("real"),
        SqlValue::Text(t) => Some(t.clone()),
        SqlValue::Blob(b) => Some(String::from_utf8(b.clone()).map_err(|_| "non-utf8 blob")?),
    })
}

fn ev(e: &Expr) -> R {
    use BinaryOp::*;
    match e {
        Expr::Literal(v) => Ok(v.clone()),
        Expr::Phi(inner) => ev(inner),
        Expr::Unary(op, inner) => {
            let v = ev(inner)?;
            match op {
                UnaryOp::Plus => Ok(v),
                UnaryOp::Not => Ok(three_valued(truth(&v)?.map(|b| !b))),
                UnaryOp::Neg => match to_number(&v)? {
                    None => Ok(SqlValue::Null),
                    Some(i) => i.checked_neg().map(SqlValue::Integer).ok_or("integer overflow"),
                },
                UnaryOp::BitNot => Ok(to_integer(&v)?.map_or(SqlValue::Null, |i| SqlValue::Integer(!i))),
            }
        }
        Expr::IsNull { expr, negated } => Ok(bool_val(ev(expr)?.is_null() != *negated)),
        Expr::Binary(op, l, r) => {
            let (a, b) = (ev(l)?, ev(r)?);
            match op {
                And => Ok(three_valued(and(truth(&a)?, truth(&b)?))),
                Or => Ok(three_valued(or(truth(&a)?, truth(&b)?))),
                Concat => Ok(match (as_text(&a)?, as_text(&b)?) {
                    (Some(x), Some(y)) => SqlValue::Text(x + &y),
                    _ => SqlValue::Null,
                }),
                op if BinaryOp::COMPARISONS.contains(op) => compare(*op, &a, &b),
                Add | Sub | Mul | Div | Mod | BitAnd | BitOr | ShiftLeft | ShiftRight => arithmetic(*op, &a, &b),
                _ => Err("operator outside the subset"),
            }
        }
        Expr::Between { expr, low, high, negated } => {
            let (x, lo, hi) = (ev(expr)?, ev(low)?, ev(high)?);
            let ge = truth(&compare(GtEq, &x, &lo)?)?;
            let le = truth(&compare(LtEq, &x, &hi)?)?;
            let r = and(ge, le);
            Ok(three_valued(if *negated { r.map(|b| !b) } else { r }))
        }
        Expr::In { expr, set, negated } => {
            let Expr::List(items) = set.as_ref() else { return Err("IN over a subquery") };
            let x = ev(expr)?;
            let r = if x.is_null() {
                None
            } else {
                let mut saw_null = false;
                let mut found = false;
                for item in items {
                    let v = ev(item)?;
                    if v.is_null() {
                        saw_null = true;
                    } else if order(&x, &v)? == Ordering::Equal {
                        found = true;
                    }
                }
                if found {
                    Some(true)
                } else if saw_null {
                    None
                } else {
                    Some(false)
                }
            };
            Ok(three_valued(if *negated { r.map(|b| !b) } else { r }))
        }
        Expr::Case { operand, branches, otherwise } => {
            let base = operand.as_ref().map(|o| ev(o)).transpose()?;
            for (when, then) in branches {
                let w = ev(when)?;
                let hit = match &base {
                    Some(b) => truth(&compare(Eq, b, &w)?)? == Some(true),
                    None => truth(&w)? == Some(true),
                };
                if hit {
                    return ev(then);
                }
            }
            otherwise.as_ref().map_or(Ok(SqlValue::Null), |o| ev(o))
        }
        _ => Err("node outside the subset"),
    }
}

#[cfg(test)]
mod tests {
    #[allow(unused_imports)]
    use super::*;

    #[test]
    fn prefixes() {
        assert_eq!(numeric_prefix(b" 12abc"), (2, false, 3));
        assert_eq!(numeric_prefix(b"1.5x").1, true);
        assert_eq!(numeric_prefix(b"1e").1, false);
        assert_eq!(numeric_prefix(b".5").1, true);
        assert_eq!(numeric_prefix(b"0x10"), (1, false, 1));
        assert_eq!(shift(1, 64, true), 0);
        assert_eq!(shift(-1, 64, false), -1);
        assert_eq!(shift(-8, 1, false), -4);
        assert_eq!(shift(1, -1, true), 0);
    }
}
