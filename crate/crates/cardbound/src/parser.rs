//! Hand-rolled lexer and recursive-descent parser for the COUNT(*) query
//! subset:
//!
//! ```text
//! SELECT COUNT(*) FROM t1 a1 [, t2 a2 ...] [WHERE cond [AND cond ...]]
//! ```
//!
//! where each `cond` is either an equi-join atom (`x.key = y.key`) or a
//! filter expression over a single alias built from comparison atoms with
//! `AND`/`OR`/`NOT` and parentheses. The parser only knows syntax; alias
//! resolution and validation happen when the raw query is turned into IR.

use crate::predicate::{CmpOp, Literal, Predicate};
use crate::{Error, Result};

/// A column reference as written, qualification included: `x.a` or `a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCol {
    pub alias: Option<String>,
    pub column: String,
    pub line: usize,
    pub col: usize,
}

impl RawCol {
    pub fn text(&self) -> String {
        match &self.alias {
            Some(a) => format!("{a}.{}", self.column),
            None => self.column.clone(),
        }
    }
}

/// One WHERE conjunct before resolution.
#[derive(Debug, Clone)]
pub enum RawCond {
    Join { left: RawCol, right: RawCol },
    /// Filter expression plus the raw columns it references (for alias
    /// attribution) and its source position.
    Filter { pred: RawPredicate, line: usize, col: usize },
}

/// Predicate tree whose atoms still carry raw (possibly qualified) columns.
/// `Join` nodes are only legal as top-level WHERE conjuncts; the query parser
/// classifies them out before handing filters over.
#[derive(Debug, Clone)]
pub enum RawPredicate {
    Cmp { column: RawCol, op: CmpOp, literal: Literal },
    In { column: RawCol, list: Vec<Literal> },
    Like { column: RawCol, pattern: String },
    Join { left: RawCol, op: CmpOp, right: RawCol },
    And(Vec<RawPredicate>),
    Or(Vec<RawPredicate>),
    Not(Box<RawPredicate>),
}

impl RawPredicate {
    pub fn columns(&self) -> Vec<&RawCol> {
        let mut out = Vec::new();
        self.walk(&mut out);
        out
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a RawCol>) {
        match self {
            RawPredicate::Cmp { column, .. }
            | RawPredicate::In { column, .. }
            | RawPredicate::Like { column, .. } => out.push(column),
            RawPredicate::Join { left, right, .. } => {
                out.push(left);
                out.push(right);
            }
            RawPredicate::And(ps) | RawPredicate::Or(ps) => {
                for p in ps {
                    p.walk(out)
                }
            }
            RawPredicate::Not(p) => p.walk(out),
        }
    }

    /// Position of the first join atom nested anywhere in this tree.
    fn nested_join(&self) -> Option<&RawCol> {
        match self {
            RawPredicate::Join { left, .. } => Some(left),
            RawPredicate::And(ps) | RawPredicate::Or(ps) => {
                ps.iter().find_map(RawPredicate::nested_join)
            }
            RawPredicate::Not(p) => p.nested_join(),
            _ => None,
        }
    }

    /// Drop the qualification, keeping plain column names.
    pub fn strip(&self) -> Predicate {
        match self {
            RawPredicate::Cmp { column, op, literal } => Predicate::Cmp {
                column: column.column.clone(),
                op: *op,
                literal: literal.clone(),
            },
            RawPredicate::In { column, list } => {
                Predicate::In { column: column.column.clone(), list: list.clone() }
            }
            RawPredicate::Like { column, pattern } => {
                Predicate::Like { column: column.column.clone(), pattern: pattern.clone() }
            }
            RawPredicate::And(ps) => Predicate::And(ps.iter().map(RawPredicate::strip).collect()),
            RawPredicate::Or(ps) => Predicate::Or(ps.iter().map(RawPredicate::strip).collect()),
            RawPredicate::Not(p) => Predicate::Not(Box::new(p.strip())),
            // Classification removes join nodes before strip is reachable.
            RawPredicate::Join { .. } => unreachable!("join atom in filter position"),
        }
    }
}

/// Parse result before catalog resolution.
#[derive(Debug, Clone)]
pub struct RawQuery {
    /// `(table, alias, line, col)` in FROM order.
    pub from: Vec<(String, String, usize, usize)>,
    pub conds: Vec<RawCond>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Float(v) => format!("`{v}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Star => "`*`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn lex(text: &str) -> Result<Lexer> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line: usize, col: usize, msg: String| {
        Error::Query(format!("syntax error at line {line}, column {col}: {msg}"))
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let step = |i: &mut usize, col: &mut usize| {
            *i += 1;
            *col += 1;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => step(&mut i, &mut col),
            ',' => {
                toks.push((Tok::Comma, tl, tc));
                step(&mut i, &mut col)
            }
            '.' => {
                toks.push((Tok::Dot, tl, tc));
                step(&mut i, &mut col)
            }
            '(' => {
                toks.push((Tok::LParen, tl, tc));
                step(&mut i, &mut col)
            }
            ')' => {
                toks.push((Tok::RParen, tl, tc));
                step(&mut i, &mut col)
            }
            '*' => {
                toks.push((Tok::Star, tl, tc));
                step(&mut i, &mut col)
            }
            '=' => {
                toks.push((Tok::Eq, tl, tc));
                step(&mut i, &mut col)
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push((Tok::Ne, tl, tc));
                    i += 2;
                    col += 2;
                } else {
                    return Err(err(tl, tc, "expected `=` after `!`".into()));
                }
            }
            '<' => match chars.get(i + 1) {
                Some('=') => {
                    toks.push((Tok::Le, tl, tc));
                    i += 2;
                    col += 2;
                }
                Some('>') => {
                    toks.push((Tok::Ne, tl, tc));
                    i += 2;
                    col += 2;
                }
                _ => {
                    toks.push((Tok::Lt, tl, tc));
                    step(&mut i, &mut col)
                }
            },
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push((Tok::Ge, tl, tc));
                    i += 2;
                    col += 2;
                } else {
                    toks.push((Tok::Gt, tl, tc));
                    step(&mut i, &mut col)
                }
            }
            '\'' => {
                // Single-quoted string; `''` is an escaped quote.
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(tl, tc, "unterminated string literal".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            i += 2;
                            col += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some('\n') => {
                            s.push('\n');
                            i += 1;
                            line += 1;
                            col = 1;
                        }
                        Some(&c) => {
                            s.push(c);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                toks.push((Tok::Str(s), tl, tc));
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let start = i;
                if c == '-' {
                    i += 1;
                    col += 1;
                }
                let mut is_float = false;
                while let Some(&d) = chars.get(i) {
                    if d.is_ascii_digit() {
                        i += 1;
                        col += 1;
                    } else if d == '.' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()) {
                        is_float = true;
                        i += 1;
                        col += 1;
                    } else if (d == 'e' || d == 'E')
                        && chars.get(i + 1).is_some_and(|n| {
                            n.is_ascii_digit()
                                || ((*n == '+' || *n == '-')
                                    && chars.get(i + 2).is_some_and(|m| m.is_ascii_digit()))
                        })
                    {
                        is_float = true;
                        i += 2;
                        col += 2;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                if is_float {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| err(tl, tc, format!("bad number `{text}`")))?;
                    toks.push((Tok::Float(v), tl, tc));
                } else {
                    let v: i64 = text
                        .parse()
                        .map_err(|_| err(tl, tc, format!("integer `{text}` out of range")))?;
                    toks.push((Tok::Int(v), tl, tc));
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while chars
                    .get(i)
                    .is_some_and(|&d| d.is_alphanumeric() || d == '_')
                {
                    i += 1;
                    col += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), tl, tc));
            }
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    toks.push((Tok::Eof, line, col));
    Ok(Lexer { toks })
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> (usize, usize) {
        (self.toks[self.pos].1, self.toks[self.pos].2)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        let (l, c) = self.here();
        Error::Query(format!("syntax error at line {l}, column {c}: {}", msg.into()))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", self.peek().describe())))
        }
    }

    fn keyword(&self) -> Option<String> {
        match self.peek() {
            Tok::Ident(s) => Some(s.to_ascii_uppercase()),
            _ => None,
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.keyword().as_deref() == Some(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {kw}, found {}", self.peek().describe())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected {what}, found {}", other.describe()))),
        }
    }

    /// `alias.column` or bare `column`.
    fn column_ref(&mut self) -> Result<RawCol> {
        let (line, col) = self.here();
        let first = self.ident("a column reference")?;
        if *self.peek() == Tok::Dot {
            self.bump();
            let second = self.ident("a column name after `.`")?;
            Ok(RawCol { alias: Some(first), column: second, line, col })
        } else {
            Ok(RawCol { alias: None, column: first, line, col })
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Literal::Int(v))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Literal::Float(v))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Literal::Str(s))
            }
            other => Err(self.error(format!("expected a literal, found {}", other.describe()))),
        }
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    fn or_expr(&mut self) -> Result<RawPredicate> {
        let mut parts = vec![self.and_expr()?];
        while self.keyword().as_deref() == Some("OR") {
            self.bump();
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { RawPredicate::Or(parts) })
    }

    fn and_expr(&mut self) -> Result<RawPredicate> {
        let mut parts = vec![self.unary_expr()?];
        while self.keyword().as_deref() == Some("AND") {
            self.bump();
            parts.push(self.unary_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { RawPredicate::And(parts) })
    }

    fn unary_expr(&mut self) -> Result<RawPredicate> {
        if self.keyword().as_deref() == Some("NOT") {
            self.bump();
            return Ok(RawPredicate::Not(Box::new(self.unary_expr()?)));
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.or_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            if let Some(at) = inner.nested_join() {
                return Err(join_in_filter_error(at));
            }
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<RawPredicate> {
        let column = self.column_ref()?;
        if let Some(op) = self.cmp_op() {
            if matches!(self.peek(), Tok::Ident(_)) {
                let other = self.column_ref()?;
                return Ok(RawPredicate::Join { left: column, op, right: other });
            }
            let literal = self.literal()?;
            return Ok(RawPredicate::Cmp { column, op, literal });
        }
        match self.keyword().as_deref() {
            Some("IN") => {
                self.bump();
                self.expect(Tok::LParen, "`(` after IN")?;
                let mut list = vec![self.literal()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    list.push(self.literal()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                if list.len() > 1024 {
                    return Err(Error::Query(format!(
                        "line {}, column {}: IN list exceeds 1024 elements",
                        column.line, column.col
                    )));
                }
                Ok(RawPredicate::In { column, list })
            }
            Some("LIKE") => {
                self.bump();
                match self.bump() {
                    Tok::Str(pattern) => Ok(RawPredicate::Like { column, pattern }),
                    other => {
                        Err(self.error(format!("LIKE needs a string pattern, found {}", other.describe())))
                    }
                }
            }
            _ => Err(self.error(format!(
                "expected a comparison, IN, or LIKE after `{}`",
                column.text()
            ))),
        }
    }

    fn query(&mut self) -> Result<RawQuery> {
        self.expect_keyword("SELECT")?;
        self.expect_keyword("COUNT")?;
        self.expect(Tok::LParen, "`(` after COUNT")?;
        self.expect(Tok::Star, "`*`")?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect_keyword("FROM")?;

        let mut from = Vec::new();
        loop {
            let (line, col) = self.here();
            let table = self.ident("a table name")?;
            let alias = if self.keyword().as_deref() == Some("AS") {
                self.bump();
                self.ident("an alias after AS")?
            } else if matches!(self.peek(), Tok::Ident(s) if s.to_ascii_uppercase() != "WHERE") {
                self.ident("an alias")?
            } else {
                table.clone()
            };
            from.push((table, alias, line, col));
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }

        let mut conds = Vec::new();
        if self.keyword().as_deref() == Some("WHERE") {
            self.bump();
            let expr = self.or_expr()?;
            // Top-level AND conjuncts; everything else is a single conjunct.
            let parts = match expr {
                RawPredicate::And(ps) => ps,
                one => vec![one],
            };
            for part in parts {
                match part {
                    RawPredicate::Join { left, op, right } => {
                        if op != CmpOp::Eq {
                            return Err(Error::Query(format!(
                                "line {}, column {}: non-equal joins are unsupported ({} {} {})",
                                left.line,
                                left.col,
                                left.text(),
                                op.sql(),
                                right.text()
                            )));
                        }
                        conds.push(RawCond::Join { left, right });
                    }
                    pred => {
                        if let Some(at) = pred.nested_join() {
                            return Err(join_in_filter_error(at));
                        }
                        let (line, col) = pred
                            .columns()
                            .first()
                            .map(|c| (c.line, c.col))
                            .unwrap_or((1, 1));
                        conds.push(RawCond::Filter { pred, line, col });
                    }
                }
            }
        }
        if *self.peek() != Tok::Eof {
            return Err(self.error(format!("unexpected {}", self.peek().describe())));
        }
        Ok(RawQuery { from, conds })
    }
}

fn join_in_filter_error(at: &RawCol) -> Error {
    Error::Query(format!(
        "line {}, column {}: join atoms cannot appear inside filter expressions",
        at.line, at.col
    ))
}

/// Parse query text into its raw, unresolved form.
pub fn parse_query_text(text: &str) -> Result<RawQuery> {
    let lexer = lex(text)?;
    Parser { toks: lexer.toks, pos: 0 }.query()
}

/// Parse a bare filter expression (used by the JSON IR form, where filters
/// arrive as expression strings).
pub fn parse_filter_text(text: &str) -> Result<RawPredicate> {
    let lexer = lex(text)?;
    let mut p = Parser { toks: lexer.toks, pos: 0 };
    let pred = p.or_expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error(format!("unexpected {}", p.peek().describe())));
    }
    if let Some(at) = pred.nested_join() {
        return Err(join_in_filter_error(at));
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_joins_and_filters() {
        let q = parse_query_text(
            "SELECT COUNT(*) FROM A x, B y WHERE x.id = y.Aid AND x.attr1 = 'a' AND y.attr2 < 100",
        )
        .unwrap();
        assert_eq!(q.from.len(), 2);
        assert_eq!(q.from[0].0, "A");
        assert_eq!(q.from[0].1, "x");
        assert_eq!(q.conds.len(), 3);
        assert!(matches!(q.conds[0], RawCond::Join { .. }));
        assert!(matches!(q.conds[1], RawCond::Filter { .. }));
    }

    #[test]
    fn table_without_alias_uses_its_own_name() {
        let q = parse_query_text("SELECT COUNT(*) FROM A WHERE A.id = 3").unwrap();
        assert_eq!(q.from[0].1, "A");
        let q = parse_query_text("SELECT COUNT(*) FROM A AS x").unwrap();
        assert_eq!(q.from[0].1, "x");
    }

    #[test]
    fn keywords_are_case_insensitive() {
        assert!(parse_query_text("select count(*) from A x where x.a = 1").is_ok());
    }

    #[test]
    fn non_equal_join_is_rejected() {
        let err =
            parse_query_text("SELECT COUNT(*) FROM A x, B y WHERE x.id < y.Aid").unwrap_err();
        assert!(err.to_string().contains("non-equal joins"), "{err}");
    }

    #[test]
    fn join_inside_parens_is_rejected() {
        let err = parse_query_text("SELECT COUNT(*) FROM A x, B y WHERE (x.id = y.Aid)")
            .unwrap_err();
        assert!(err.to_string().contains("join atoms"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_query_text("SELECT COUNT(*) FROM A x WHERE x.a = ").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("column 38"), "{msg}");
    }

    #[test]
    fn string_escapes_and_in_lists() {
        let q = parse_query_text(
            "SELECT COUNT(*) FROM A x WHERE x.s LIKE '%o''brien%' AND x.n IN (1, 2, 3)",
        )
        .unwrap();
        match &q.conds[0] {
            RawCond::Filter { pred: RawPredicate::Like { pattern, .. }, .. } => {
                assert_eq!(pattern, "%o'brien%");
            }
            other => panic!("{other:?}"),
        }
        match &q.conds[1] {
            RawCond::Filter { pred: RawPredicate::In { list, .. }, .. } => {
                assert_eq!(list.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn filter_expression_parser() {
        let p = parse_filter_text("a >= 0 AND a <= 5 OR NOT s LIKE 'x%'").unwrap();
        match p {
            RawPredicate::Or(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(matches!(parts[0], RawPredicate::And(_)));
                assert!(matches!(parts[1], RawPredicate::Not(_)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_numbers_and_floats() {
        let p = parse_filter_text("a = -5 AND b < 1.5e3 AND c > -0.25").unwrap();
        let atoms = match p {
            RawPredicate::And(parts) => parts,
            other => panic!("{other:?}"),
        };
        assert!(matches!(atoms[0], RawPredicate::Cmp { literal: Literal::Int(-5), .. }));
        assert!(
            matches!(atoms[1], RawPredicate::Cmp { literal: Literal::Float(v), .. } if v == 1500.0)
        );
        assert!(
            matches!(atoms[2], RawPredicate::Cmp { literal: Literal::Float(v), .. } if v == -0.25)
        );
    }
}
