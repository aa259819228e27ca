//! Filter predicates over a single table: the AST produced by the query
//! front end, binding against a loaded table, and row-at-a-time evaluation.
//!
//! Semantics are two-valued: an atom on a null cell is false, `NOT` is plain
//! boolean negation, and `AND`/`OR` short-circuit. The exact counter and
//! every estimator share this evaluator, so they cannot disagree on corner
//! cases.

use std::fmt::Write as _;

use crate::catalog::{ColumnData, LoadedTable, TableDef};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Literal {
    fn sql(&self, out: &mut String) {
        match self {
            Literal::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Literal::Float(v) => {
                let s = format!("{v}");
                out.push_str(&s);
                // Keep a float lexically a float even when it prints whole,
                // so the canonical text parses back to the same literal kind.
                if !s.contains(['.', 'e', 'E', 'n', 'i']) {
                    out.push_str(".0");
                }
            }
            Literal::Str(s) => {
                out.push('\'');
                for ch in s.chars() {
                    if ch == '\'' {
                        out.push('\'');
                    }
                    out.push(ch);
                }
                out.push('\'');
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn sql(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Filter expression over one table's columns (referenced by name; binding
/// resolves them against a concrete table).
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Cmp { column: String, op: CmpOp, literal: Literal },
    In { column: String, list: Vec<Literal> },
    Like { column: String, pattern: String },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    /// Column names referenced by this predicate, in first-appearance order.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk_columns(&mut out);
        out
    }

    fn walk_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::Cmp { column, .. }
            | Predicate::In { column, .. }
            | Predicate::Like { column, .. } => {
                if !out.contains(&column.as_str()) {
                    out.push(column);
                }
            }
            Predicate::And(ps) | Predicate::Or(ps) => {
                for p in ps {
                    p.walk_columns(out);
                }
            }
            Predicate::Not(p) => p.walk_columns(out),
        }
    }

    /// Canonical SQL text with every column qualified by `alias`.
    /// Parenthesization follows precedence (OR < AND < NOT < atom) so the
    /// printed text parses back to the same tree.
    pub fn to_sql(&self, alias: &str) -> String {
        let mut out = String::new();
        self.write_sql(alias, &mut out, 0);
        out
    }

    fn precedence(&self) -> u8 {
        match self {
            Predicate::Or(_) => 0,
            Predicate::And(_) => 1,
            Predicate::Not(_) => 2,
            _ => 3,
        }
    }

    fn write_sql(&self, alias: &str, out: &mut String, parent: u8) {
        let prec = self.precedence();
        let wrap = prec < parent;
        if wrap {
            out.push('(');
        }
        match self {
            Predicate::Cmp { column, op, literal } => {
                let _ = write!(out, "{alias}.{column} {} ", op.sql());
                literal.sql(out);
            }
            Predicate::In { column, list } => {
                let _ = write!(out, "{alias}.{column} IN (");
                for (i, lit) in list.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    lit.sql(out);
                }
                out.push(')');
            }
            Predicate::Like { column, pattern } => {
                let _ = write!(out, "{alias}.{column} LIKE ");
                Literal::Str(pattern.clone()).sql(out);
            }
            Predicate::And(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" AND ");
                    }
                    p.write_sql(alias, out, prec);
                }
            }
            Predicate::Or(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" OR ");
                    }
                    p.write_sql(alias, out, prec);
                }
            }
            Predicate::Not(p) => {
                out.push_str("NOT ");
                p.write_sql(alias, out, prec + 1);
            }
        }
        if wrap {
            out.push(')');
        }
    }
}

/// SQL `LIKE` pattern: `%` matches any run (including empty), `_` exactly
/// one character; matching is case-sensitive over scalar chars.
#[derive(Debug, Clone)]
pub struct LikePattern {
    pattern: Vec<char>,
}

impl LikePattern {
    pub fn new(pattern: &str) -> LikePattern {
        LikePattern { pattern: pattern.chars().collect() }
    }

    pub fn matches(&self, text: &str) -> bool {
        let t: Vec<char> = text.chars().collect();
        let p = &self.pattern;
        // Two-pointer scan with backtracking to the last `%`.
        let (mut ti, mut pi) = (0usize, 0usize);
        let (mut star, mut star_t) = (usize::MAX, 0usize);
        while ti < t.len() {
            if pi < p.len() && (p[pi] == '_' || p[pi] == t[ti]) {
                ti += 1;
                pi += 1;
            } else if pi < p.len() && p[pi] == '%' {
                star = pi;
                star_t = ti;
                pi += 1;
            } else if star != usize::MAX {
                pi = star + 1;
                star_t += 1;
                ti = star_t;
            } else {
                return false;
            }
        }
        while pi < p.len() && p[pi] == '%' {
            pi += 1;
        }
        pi == p.len()
    }
}

enum BoundNode {
    IntCmp { col: usize, op: CmpOp, rhs: i64 },
    NumCmp { col: usize, op: CmpOp, rhs: f64 },
    TextCmp { col: usize, op: CmpOp, rhs: String },
    IntIn { col: usize, list: Vec<i64> },
    TextIn { col: usize, list: Vec<String> },
    Like { col: usize, pattern: LikePattern },
    And(Vec<BoundNode>),
    Or(Vec<BoundNode>),
    Not(Box<BoundNode>),
    Const(bool),
}

/// A predicate resolved against one concrete table: column names become
/// indices, literals are coerced to the column's type, and dictionary-coded
/// keys get their literals translated to codes. All shape errors are caught
/// here so evaluation itself cannot fail.
pub struct BoundPredicate {
    node: BoundNode,
}

fn cmp_ord<T: PartialOrd>(op: CmpOp, l: T, r: T) -> bool {
    match op {
        CmpOp::Eq => l == r,
        CmpOp::Ne => l != r,
        CmpOp::Lt => l < r,
        CmpOp::Le => l <= r,
        CmpOp::Gt => l > r,
        CmpOp::Ge => l >= r,
    }
}

fn literal_as_text(lit: &Literal) -> String {
    match lit {
        Literal::Str(s) => s.clone(),
        Literal::Int(v) => v.to_string(),
        Literal::Float(v) => v.to_string(),
    }
}

/// Literal → canonical key code, the same mapping ingest applies to cells.
/// A string no cell carries hashes to a code no cell carries, so `=` with
/// it matches nothing and `!=` matches every non-null cell, as expected.
fn dict_code(lit: &Literal) -> i64 {
    crate::catalog::key_code(&literal_as_text(lit))
}

fn bind_node(pred: &Predicate, def: &TableDef, table: &LoadedTable) -> Result<BoundNode> {
    let resolve = |name: &str| -> Result<usize> {
        def.column_index(name).ok_or_else(|| {
            Error::Query(format!("unknown column `{name}` on table `{}`", def.name))
        })
    };
    let numeric_rhs = |name: &str, lit: &Literal| -> Result<f64> {
        match lit {
            Literal::Int(v) => Ok(*v as f64),
            Literal::Float(v) => Ok(*v),
            Literal::Str(_) => Err(Error::Query(format!(
                "column `{}.{name}` is numeric but the literal is a string",
                def.name
            ))),
        }
    };
    match pred {
        Predicate::Cmp { column, op, literal } => {
            let col = resolve(column)?;
            match &table.columns[col] {
                ColumnData::Int(_) => match literal {
                    Literal::Int(v) => Ok(BoundNode::IntCmp { col, op: *op, rhs: *v }),
                    _ => Ok(BoundNode::NumCmp { col, op: *op, rhs: numeric_rhs(column, literal)? }),
                },
                ColumnData::Float(_) => {
                    Ok(BoundNode::NumCmp { col, op: *op, rhs: numeric_rhs(column, literal)? })
                }
                ColumnData::Text(_) => match literal {
                    Literal::Str(s) => Ok(BoundNode::TextCmp { col, op: *op, rhs: s.clone() }),
                    _ => Err(Error::Query(format!(
                        "column `{}.{column}` is text but the literal is numeric",
                        def.name
                    ))),
                },
                ColumnData::DictKey { .. } => match op {
                    CmpOp::Eq | CmpOp::Ne => {
                        Ok(BoundNode::IntCmp { col, op: *op, rhs: dict_code(literal) })
                    }
                    _ => Err(Error::Query(format!(
                        "column `{}.{column}` holds dictionary-coded keys; only =, != and IN apply",
                        def.name
                    ))),
                },
            }
        }
        Predicate::In { column, list } => {
            let col = resolve(column)?;
            if list.is_empty() {
                return Ok(BoundNode::Const(false));
            }
            match &table.columns[col] {
                ColumnData::Int(_) => {
                    let mut vals = Vec::with_capacity(list.len());
                    for lit in list {
                        match lit {
                            Literal::Int(v) => vals.push(*v),
                            Literal::Float(v) if v.fract() == 0.0 => vals.push(*v as i64),
                            Literal::Float(_) => {} // a fractional value never equals an integer
                            Literal::Str(_) => {
                                return Err(Error::Query(format!(
                                    "column `{}.{column}` is numeric but the IN list has a string",
                                    def.name
                                )))
                            }
                        }
                    }
                    Ok(BoundNode::IntIn { col, list: vals })
                }
                ColumnData::Float(_) => {
                    let mut vals = Vec::with_capacity(list.len());
                    for lit in list {
                        vals.push(numeric_rhs(column, lit)?);
                    }
                    // Compare as equality against any list member.
                    Ok(BoundNode::Or(
                        vals.into_iter()
                            .map(|v| BoundNode::NumCmp { col, op: CmpOp::Eq, rhs: v })
                            .collect(),
                    ))
                }
                ColumnData::Text(_) => {
                    let mut vals = Vec::with_capacity(list.len());
                    for lit in list {
                        match lit {
                            Literal::Str(s) => vals.push(s.clone()),
                            _ => {
                                return Err(Error::Query(format!(
                                    "column `{}.{column}` is text but the IN list has a number",
                                    def.name
                                )))
                            }
                        }
                    }
                    Ok(BoundNode::TextIn { col, list: vals })
                }
                ColumnData::DictKey { .. } => {
                    let vals: Vec<i64> = list.iter().map(dict_code).collect();
                    Ok(BoundNode::IntIn { col, list: vals })
                }
            }
        }
        Predicate::Like { column, pattern } => {
            let col = resolve(column)?;
            match &table.columns[col] {
                ColumnData::Text(_) => {
                    Ok(BoundNode::Like { col, pattern: LikePattern::new(pattern) })
                }
                _ => Err(Error::Query(format!(
                    "LIKE needs a text column, `{}.{column}` is not one",
                    def.name
                ))),
            }
        }
        Predicate::And(ps) => Ok(BoundNode::And(
            ps.iter().map(|p| bind_node(p, def, table)).collect::<Result<_>>()?,
        )),
        Predicate::Or(ps) => Ok(BoundNode::Or(
            ps.iter().map(|p| bind_node(p, def, table)).collect::<Result<_>>()?,
        )),
        Predicate::Not(p) => Ok(BoundNode::Not(Box::new(bind_node(p, def, table)?))),
    }
}

pub fn bind(pred: &Predicate, def: &TableDef, table: &LoadedTable) -> Result<BoundPredicate> {
    debug_assert_eq!(def.columns.len(), table.columns.len());
    Ok(BoundPredicate { node: bind_node(pred, def, table)? })
}

impl BoundPredicate {
    pub fn eval(&self, table: &LoadedTable, row: usize) -> bool {
        eval_node(&self.node, table, row)
    }
}

fn eval_node(node: &BoundNode, table: &LoadedTable, row: usize) -> bool {
    match node {
        BoundNode::IntCmp { col, op, rhs } => match &table.columns[*col] {
            ColumnData::Int(v) => v[row].map_or(false, |x| cmp_ord(*op, x, *rhs)),
            ColumnData::DictKey { codes, .. } => {
                codes[row].map_or(false, |x| cmp_ord(*op, x, *rhs))
            }
            _ => false,
        },
        BoundNode::NumCmp { col, op, rhs } => match &table.columns[*col] {
            ColumnData::Int(v) => v[row].map_or(false, |x| cmp_ord(*op, x as f64, *rhs)),
            ColumnData::Float(v) => v[row].map_or(false, |x| cmp_ord(*op, x, *rhs)),
            _ => false,
        },
        BoundNode::TextCmp { col, op, rhs } => match &table.columns[*col] {
            ColumnData::Text(v) => {
                v[row].as_deref().map_or(false, |x| cmp_ord(*op, x, rhs.as_str()))
            }
            _ => false,
        },
        BoundNode::IntIn { col, list } => match &table.columns[*col] {
            ColumnData::Int(v) => v[row].map_or(false, |x| list.contains(&x)),
            ColumnData::DictKey { codes, .. } => {
                codes[row].map_or(false, |x| list.contains(&x))
            }
            _ => false,
        },
        BoundNode::TextIn { col, list } => match &table.columns[*col] {
            ColumnData::Text(v) => {
                v[row].as_deref().map_or(false, |x| list.iter().any(|l| l == x))
            }
            _ => false,
        },
        BoundNode::Like { col, pattern } => match &table.columns[*col] {
            ColumnData::Text(v) => v[row].as_deref().map_or(false, |x| pattern.matches(x)),
            _ => false,
        },
        BoundNode::And(ps) => ps.iter().all(|p| eval_node(p, table, row)),
        BoundNode::Or(ps) => ps.iter().any(|p| eval_node(p, table, row)),
        BoundNode::Not(p) => !eval_node(p, table, row),
        BoundNode::Const(b) => *b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnDef, ColumnKind};

    fn table() -> (TableDef, LoadedTable) {
        let def = TableDef {
            name: "T".into(),
            columns: vec![
                ColumnDef { name: "n".into(), kind: ColumnKind::Integer },
                ColumnDef { name: "f".into(), kind: ColumnKind::Float },
                ColumnDef { name: "s".into(), kind: ColumnKind::Text },
            ],
        };
        let t = LoadedTable {
            name: "T".into(),
            columns: vec![
                ColumnData::Int(vec![Some(1), Some(5), None, Some(-3)]),
                ColumnData::Float(vec![Some(0.5), Some(2.0), Some(9.0), None]),
                ColumnData::Text(vec![
                    Some("Anna".into()),
                    Some("Bob".into()),
                    None,
                    Some("an".into()),
                ]),
            ],
            rows: 4,
        };
        (def, t)
    }

    fn rows_matching(pred: &Predicate) -> Vec<usize> {
        let (def, t) = table();
        let b = bind(pred, &def, &t).unwrap();
        (0..t.rows).filter(|&r| b.eval(&t, r)).collect()
    }

    #[test]
    fn comparisons_and_null_rows() {
        let p = Predicate::Cmp { column: "n".into(), op: CmpOp::Ge, literal: Literal::Int(1) };
        assert_eq!(rows_matching(&p), vec![0, 1]);
        // Null never matches, not even !=.
        let p = Predicate::Cmp { column: "n".into(), op: CmpOp::Ne, literal: Literal::Int(999) };
        assert_eq!(rows_matching(&p), vec![0, 1, 3]);
    }

    #[test]
    fn not_is_plain_negation() {
        // NOT (n = 1) passes the null row: atoms on null are false and NOT
        // flips that, by design.
        let p = Predicate::Not(Box::new(Predicate::Cmp {
            column: "n".into(),
            op: CmpOp::Eq,
            literal: Literal::Int(1),
        }));
        assert_eq!(rows_matching(&p), vec![1, 2, 3]);
    }

    #[test]
    fn int_column_with_float_literal() {
        let p = Predicate::Cmp {
            column: "n".into(),
            op: CmpOp::Lt,
            literal: Literal::Float(1.5),
        };
        assert_eq!(rows_matching(&p), vec![0, 3]);
    }

    #[test]
    fn in_list() {
        let p = Predicate::In {
            column: "n".into(),
            list: vec![Literal::Int(5), Literal::Int(-3)],
        };
        assert_eq!(rows_matching(&p), vec![1, 3]);
        let p = Predicate::In { column: "n".into(), list: vec![] };
        assert_eq!(rows_matching(&p), Vec::<usize>::new());
    }

    #[test]
    fn like_patterns() {
        let cases = [
            ("%An%", true, "Anna"),
            ("%an%", false, "Anna"), // case-sensitive
            ("A%", true, "Anna"),
            ("%a", true, "Anna"),
            ("_nna", true, "Anna"),
            ("an", true, "an"),
            ("a_", true, "an"),
            ("a", false, "an"),
            ("%", true, ""),
            ("_", false, ""),
            ("%x%", false, "Anna"),
            ("A%a%", true, "Anna"),
        ];
        for (pat, want, text) in cases {
            assert_eq!(LikePattern::new(pat).matches(text), want, "{pat} vs {text}");
        }
    }

    #[test]
    fn like_binds_only_to_text() {
        let (def, t) = table();
        let p = Predicate::Like { column: "n".into(), pattern: "%1%".into() };
        assert!(bind(&p, &def, &t).is_err());
    }

    #[test]
    fn type_mismatches_are_bind_errors() {
        let (def, t) = table();
        let p = Predicate::Cmp {
            column: "n".into(),
            op: CmpOp::Eq,
            literal: Literal::Str("x".into()),
        };
        assert!(bind(&p, &def, &t).is_err());
        let p = Predicate::Cmp {
            column: "s".into(),
            op: CmpOp::Eq,
            literal: Literal::Int(3),
        };
        assert!(bind(&p, &def, &t).is_err());
        let p = Predicate::Cmp {
            column: "nope".into(),
            op: CmpOp::Eq,
            literal: Literal::Int(3),
        };
        assert!(bind(&p, &def, &t).is_err());
    }

    #[test]
    fn boolean_composition() {
        let p = Predicate::Or(vec![
            Predicate::And(vec![
                Predicate::Cmp { column: "n".into(), op: CmpOp::Gt, literal: Literal::Int(0) },
                Predicate::Cmp { column: "f".into(), op: CmpOp::Lt, literal: Literal::Float(1.0) },
            ]),
            Predicate::Like { column: "s".into(), pattern: "a%".into() },
        ]);
        assert_eq!(rows_matching(&p), vec![0, 3]);
    }

    #[test]
    fn dict_key_equality_uses_codes() {
        let def = TableDef {
            name: "T".into(),
            columns: vec![ColumnDef { name: "k".into(), kind: ColumnKind::IntegerKey }],
        };
        let (cx, cy) = (crate::catalog::key_code("x7"), crate::catalog::key_code("y9"));
        let t = LoadedTable {
            name: "T".into(),
            columns: vec![ColumnData::DictKey {
                codes: vec![Some(cx), Some(cy), Some(cx), None],
                dict: vec!["x7".into(), "y9".into()],
            }],
            rows: 4,
        };
        let p = Predicate::Cmp {
            column: "k".into(),
            op: CmpOp::Eq,
            literal: Literal::Str("x7".into()),
        };
        let b = bind(&p, &def, &t).unwrap();
        let hits: Vec<usize> = (0..4).filter(|&r| b.eval(&t, r)).collect();
        assert_eq!(hits, vec![0, 2]);

        // Unknown literal: = matches nothing, != matches every non-null row.
        let p = Predicate::Cmp {
            column: "k".into(),
            op: CmpOp::Eq,
            literal: Literal::Str("zz".into()),
        };
        let b = bind(&p, &def, &t).unwrap();
        assert!((0..4).all(|r| !b.eval(&t, r)));
        let p = Predicate::Cmp {
            column: "k".into(),
            op: CmpOp::Ne,
            literal: Literal::Str("zz".into()),
        };
        let b = bind(&p, &def, &t).unwrap();
        let hits: Vec<usize> = (0..4).filter(|&r| b.eval(&t, r)).collect();
        assert_eq!(hits, vec![0, 1, 2]);

        // Ranges over dictionary codes are refused.
        let p = Predicate::Cmp {
            column: "k".into(),
            op: CmpOp::Lt,
            literal: Literal::Str("y9".into()),
        };
        assert!(bind(&p, &def, &t).is_err());
    }

    #[test]
    fn sql_printing_round_trips_structure() {
        let p = Predicate::Or(vec![
            Predicate::And(vec![
                Predicate::Cmp { column: "a".into(), op: CmpOp::Ge, literal: Literal::Int(0) },
                Predicate::Cmp { column: "a".into(), op: CmpOp::Le, literal: Literal::Int(5) },
            ]),
            Predicate::Not(Box::new(Predicate::Like {
                column: "s".into(),
                pattern: "%o'brien%".into(),
            })),
        ]);
        let sql = p.to_sql("x");
        assert_eq!(sql, "x.a >= 0 AND x.a <= 5 OR NOT x.s LIKE '%o''brien%'");
    }
}
