//! Line-oriented problem files.
//!
//! ```text
//! # comment
//! var 3                      # theta in R^3, named x1..x3
//! min -x1*x2 - x2*x3 - x3*x1
//! ineq -x1                   # means -x1 <= 0
//! ineq x1 + x2 + x3 <= 3     # means (x1 + x2 + x3) - 3 <= 0
//! ineq 0.5 <= x1 <= 1.5      # two rows: x1 - 1.5 <= 0, 0.5 - x1 <= 0
//! eq x1 - x2 - x3            # means x1 - x2 - x3 = 0
//! eq x2 = x3
//! ```
//!
//! Expressions use `+ - * / ^`, unary minus, parentheses, `sin cos exp log
//! sqrt`, and the constant `pi`. Exponents must be constant. Without a `var`
//! line the dimension is the largest variable index used.

use std::fmt;

use thiserror::Error;

use super::expr::{Expr, ExprProblem, Function};
use super::fdcheck::{sample_points, validate_derivatives, REGISTRATION_POINTS};
use super::{NlpProblem, ProblemError};

/// Deeper trees are rejected so evaluation and drop stay well inside the stack.
pub const MAX_DEPTH: usize = 200;
/// Limit on the parser's recursion: each parenthesis, function call and
/// unary operand is one level. The canonical text of a tree of depth `d`
/// needs at most `3 d + 4`, so it always parses back.
pub const MAX_NESTING: usize = 3 * MAX_DEPTH + 8;
pub const MAX_VARIABLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedCharacter(char),
    InvalidNumber(String),
    UnexpectedToken {
        found: String,
        expected: &'static str,
    },
    UnexpectedEnd {
        after: Option<String>,
        expected: &'static str,
    },
    UnknownIdentifier(String),
    UnknownDirective(String),
    NonConstantExponent,
    MixedComparison,
    VariableOutOfRange {
        index: usize,
        declared: usize,
    },
    InvalidVariableCount(String),
    TooManyVariables {
        requested: usize,
    },
    NoVariables,
    DuplicateVar,
    DuplicateObjective,
    MissingObjective,
    TooDeep,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParseErrorKind::*;
        match self {
            UnexpectedCharacter(c) => write!(f, "unexpected character `{c}`"),
            InvalidNumber(s) => write!(f, "invalid number `{s}`"),
            UnexpectedToken { found, expected } => write!(f, "expected {expected}, found `{found}`"),
            UnexpectedEnd {
                after: Some(t),
                expected,
            } => {
                write!(f, "expected {expected} after `{t}`, found end of line")
            }
            UnexpectedEnd { after: None, expected } => write!(f, "expected {expected}, found end of line"),
            UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            UnknownDirective(s) => {
                write!(f, "unknown declaration `{s}` (expected var, min, ineq or eq)")
            }
            NonConstantExponent => write!(f, "exponent must be a finite constant expression"),
            MixedComparison => write!(f, "comparison chain mixes `<=` and `>=`"),
            VariableOutOfRange { index, declared } => {
                write!(f, "variable x{index} exceeds the declared dimension {declared}")
            }
            InvalidVariableCount(s) => write!(f, "invalid variable count `{s}`"),
            TooManyVariables { requested } => {
                write!(f, "{requested} variables requested, at most {MAX_VARIABLES} supported")
            }
            NoVariables => write!(f, "problem uses no variables and declares none"),
            DuplicateVar => write!(f, "`var` declared more than once"),
            DuplicateObjective => write!(f, "`min` declared more than once"),
            MissingObjective => write!(f, "no `min` declaration"),
            TooDeep => write!(f, "expression nested deeper than {MAX_DEPTH} levels"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Plus => f.write_str("+"),
            Tok::Minus => f.write_str("-"),
            Tok::Star => f.write_str("*"),
            Tok::Slash => f.write_str("/"),
            Tok::Caret => f.write_str("^"),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
            Tok::Le => f.write_str("<="),
            Tok::Ge => f.write_str(">="),
            Tok::Eq => f.write_str("="),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    /// 1-based character column.
    col: usize,
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, kind| ParseError {
        line: line_no,
        column: col,
        kind,
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(Token { tok: Tok::Num(v), col }),
                _ => return Err(err(col, ParseErrorKind::InvalidNumber(text))),
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('^', _) => (Tok::Caret, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('=', _) => (Tok::Eq, 1),
            _ => return Err(err(col, ParseErrorKind::UnexpectedCharacter(c))),
        };
        out.push(Token { tok, col });
        i += width;
    }
    Ok(out)
}

/// Parses `x<k>` with `k >= 1` and no leading zero; returns the 0-based index.
fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

struct LineParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: usize,
    /// Largest variable index seen, with its position.
    max_var: &'a mut Option<(usize, usize, usize)>,
    /// Current recursion depth through parentheses and unary signs.
    nesting: usize,
}

impl LineParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn error_here(&self, kind: ParseErrorKind) -> ParseError {
        let column = match self.tokens.get(self.pos) {
            Some(t) => t.col,
            None => self.tokens.last().map_or(1, |t| t.col),
        };
        ParseError {
            line: self.line,
            column,
            kind,
        }
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        match self.tokens.get(self.pos) {
            Some(t) => self.error_here(ParseErrorKind::UnexpectedToken {
                found: t.tok.to_string(),
                expected,
            }),
            None => {
                let after = self
                    .pos
                    .checked_sub(1)
                    .and_then(|p| self.tokens.get(p))
                    .map(|t| t.tok.to_string());
                self.error_here(ParseErrorKind::UnexpectedEnd { after, expected })
            }
        }
    }

    fn check_depth(&self, depth: usize) -> Result<(), ParseError> {
        if depth > MAX_DEPTH {
            Err(self.error_here(ParseErrorKind::TooDeep))
        } else {
            Ok(())
        }
    }

    /// Each parse function returns the tree and its depth.
    fn expr(&mut self) -> Result<(Expr, usize), ParseError> {
        let (mut lhs, mut depth) = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => Tok::Plus,
                Some(Tok::Minus) => Tok::Minus,
                _ => return Ok((lhs, depth)),
            };
            self.pos += 1;
            let (rhs, d) = self.term()?;
            depth = depth.max(d) + 1;
            self.check_depth(depth)?;
            lhs = match op {
                Tok::Plus => Expr::Add(Box::new(lhs), Box::new(rhs)),
                _ => Expr::Sub(Box::new(lhs), Box::new(rhs)),
            };
        }
    }

    fn term(&mut self) -> Result<(Expr, usize), ParseError> {
        let (mut lhs, mut depth) = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => Tok::Star,
                Some(Tok::Slash) => Tok::Slash,
                _ => return Ok((lhs, depth)),
            };
            self.pos += 1;
            let (rhs, d) = self.unary()?;
            depth = depth.max(d) + 1;
            self.check_depth(depth)?;
            lhs = match op {
                Tok::Star => Expr::Mul(Box::new(lhs), Box::new(rhs)),
                _ => Expr::Div(Box::new(lhs), Box::new(rhs)),
            };
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(self.error_here(ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn unary(&mut self) -> Result<(Expr, usize), ParseError> {
        self.enter()?;
        let result = self.unary_inner();
        self.nesting -= 1;
        result
    }

    fn unary_inner(&mut self) -> Result<(Expr, usize), ParseError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                let (inner, depth) = self.unary_nested()?;
                Ok(match inner {
                    Expr::Const(c) => (Expr::Const(-c), depth),
                    other => (Expr::Neg(Box::new(other)), depth + 1),
                })
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary_nested()
            }
            _ => self.power(),
        }
    }

    /// Chains of unary signs count toward the depth limit.
    fn unary_nested(&mut self) -> Result<(Expr, usize), ParseError> {
        let (e, d) = self.unary()?;
        self.check_depth(d + 1)?;
        Ok((e, d))
    }

    fn power(&mut self) -> Result<(Expr, usize), ParseError> {
        let (base, depth) = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok((base, depth));
        }
        self.pos += 1;
        let start = self.pos;
        let (exponent, _) = self.unary()?;
        let Some(p) = exponent.constant_value().filter(|p| p.is_finite()) else {
            self.pos = start;
            return Err(self.error_here(ParseErrorKind::NonConstantExponent));
        };
        self.check_depth(depth + 1)?;
        Ok((Expr::Pow(Box::new(base), p), depth + 1))
    }

    fn atom(&mut self) -> Result<(Expr, usize), ParseError> {
        let Some(token) = self.tokens.get(self.pos).cloned() else {
            return Err(self.unexpected("an operand"));
        };
        match token.tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok((Expr::Const(v), 1))
            }
            Tok::LParen => {
                self.pos += 1;
                self.enter()?;
                let (e, d) = self.expr()?;
                self.nesting -= 1;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.unexpected("`)`"));
                }
                self.pos += 1;
                Ok((e, d))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(func) = Function::from_name(&name) {
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(self.unexpected("`(` after function name"));
                    }
                    self.pos += 1;
                    self.enter()?;
                    let (arg, d) = self.expr()?;
                    self.nesting -= 1;
                    if self.peek() != Some(&Tok::RParen) {
                        return Err(self.unexpected("`)`"));
                    }
                    self.pos += 1;
                    self.check_depth(d + 1)?;
                    return Ok((Expr::Call(func, Box::new(arg)), d + 1));
                }
                if name == "pi" {
                    return Ok((Expr::Const(std::f64::consts::PI), 1));
                }
                match variable_index(&name) {
                    Some(i) if i < MAX_VARIABLES => {
                        if self.max_var.map_or(true, |(m, _, _)| i > m) {
                            *self.max_var = Some((i, self.line, token.col));
                        }
                        Ok((Expr::Var(i), 1))
                    }
                    Some(i) => Err(ParseError {
                        line: self.line,
                        column: token.col,
                        kind: ParseErrorKind::TooManyVariables { requested: i + 1 },
                    }),
                    None => Err(ParseError {
                        line: self.line,
                        column: token.col,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    }),
                }
            }
            _ => Err(self.unexpected("an operand")),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.pos < self.tokens.len() {
            Err(self.unexpected("an operator or end of line"))
        } else {
            Ok(())
        }
    }

    /// `a - b`, keeping the combined row within the depth limit.
    fn difference(&self, a: (Expr, usize), b: (Expr, usize)) -> Result<Expr, ParseError> {
        self.check_depth(a.1.max(b.1) + 1)?;
        Ok(Expr::Sub(Box::new(a.0), Box::new(b.0)))
    }

    /// `e`, `a <= b`, `a >= b`, or a chain `a <= e <= b` / `a >= e >= b`.
    fn inequality(&mut self) -> Result<Vec<Expr>, ParseError> {
        let first = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Le) => Tok::Le,
            Some(Tok::Ge) => Tok::Ge,
            _ => {
                self.finish()?;
                return Ok(vec![first.0]);
            }
        };
        self.pos += 1;
        let second = self.expr()?;
        match self.peek() {
            None if op == Tok::Le => Ok(vec![self.difference(first, second)?]),
            None => Ok(vec![self.difference(second, first)?]),
            Some(t) if *t == op => {
                self.pos += 1;
                let third = self.expr()?;
                self.finish()?;
                // upper row first, then lower
                let (lo, hi) = if op == Tok::Le { (first, third) } else { (third, first) };
                Ok(vec![self.difference(second.clone(), hi)?, self.difference(lo, second)?])
            }
            Some(Tok::Le | Tok::Ge) => Err(self.error_here(ParseErrorKind::MixedComparison)),
            Some(_) => Err(self.unexpected("an operator or end of line")),
        }
    }

    fn equality(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.expr()?;
        if self.peek() == Some(&Tok::Eq) {
            self.pos += 1;
            let rhs = self.expr()?;
            self.finish()?;
            return self.difference(lhs, rhs);
        }
        self.finish()?;
        Ok(lhs.0)
    }
}

/// Parses problem text into expression form without derivative validation.
pub fn parse_problem_text(text: &str) -> Result<ExprProblem, ParseError> {
    let mut declared: Option<usize> = None;
    let mut objective: Option<Expr> = None;
    let mut objective_line = 0;
    let mut inequalities = Vec::new();
    let mut equalities = Vec::new();
    let mut max_var = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = tokenize(line, line_no)?;
        let Some(first) = tokens.first() else { continue };
        let directive = match &first.tok {
            Tok::Ident(s) => s.clone(),
            other => {
                return Err(ParseError {
                    line: line_no,
                    column: first.col,
                    kind: ParseErrorKind::UnknownDirective(other.to_string()),
                })
            }
        };
        let at = |kind| ParseError {
            line: line_no,
            column: first.col,
            kind,
        };
        let mut p = LineParser {
            tokens: &tokens,
            pos: 1,
            line: line_no,
            max_var: &mut max_var,
            nesting: 0,
        };
        match directive.as_str() {
            "var" => {
                if declared.is_some() {
                    return Err(at(ParseErrorKind::DuplicateVar));
                }
                let count = match tokens.get(1).map(|t| &t.tok) {
                    Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 1.0 => *v,
                    Some(t) => {
                        return Err(ParseError {
                            line: line_no,
                            column: tokens[1].col,
                            kind: ParseErrorKind::InvalidVariableCount(t.to_string()),
                        })
                    }
                    None => return Err(p.unexpected("a variable count")),
                };
                if count > MAX_VARIABLES as f64 {
                    return Err(ParseError {
                        line: line_no,
                        column: tokens[1].col,
                        kind: ParseErrorKind::TooManyVariables {
                            requested: count as usize,
                        },
                    });
                }
                p.pos = 2;
                p.finish()?;
                declared = Some(count as usize);
            }
            "min" => {
                if objective.is_some() {
                    return Err(at(ParseErrorKind::DuplicateObjective));
                }
                let (e, _) = p.expr()?;
                p.finish()?;
                objective = Some(e);
                objective_line = line_no;
            }
            "ineq" => inequalities.extend(p.inequality()?),
            "eq" => equalities.push(p.equality()?),
            other => return Err(at(ParseErrorKind::UnknownDirective(other.to_string()))),
        }
    }

    let end_line = text.lines().count().max(1);
    let Some(objective) = objective else {
        return Err(ParseError {
            line: end_line,
            column: 1,
            kind: ParseErrorKind::MissingObjective,
        });
    };
    let used = max_var.map_or(0, |(m, _, _)| m + 1);
    let n = match declared {
        Some(n) => {
            if let Some((m, line, column)) = max_var {
                if m >= n {
                    return Err(ParseError {
                        line,
                        column,
                        kind: ParseErrorKind::VariableOutOfRange {
                            index: m + 1,
                            declared: n,
                        },
                    });
                }
            }
            n
        }
        None if used == 0 => {
            return Err(ParseError {
                line: objective_line,
                column: 1,
                kind: ParseErrorKind::NoVariables,
            })
        }
        None => used,
    };
    Ok(ExprProblem {
        n,
        objective,
        inequalities,
        equalities,
    })
}

/// Parses a single expression, as written after `min`.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    if text.contains('\n') {
        let column = text.find('\n').map_or(1, |i| text[..i].chars().count() + 1);
        return Err(ParseError {
            line: 1,
            column,
            kind: ParseErrorKind::UnexpectedCharacter('\n'),
        });
    }
    let tokens = tokenize(text, 1)?;
    let mut max_var = None;
    let mut p = LineParser {
        tokens: &tokens,
        pos: 0,
        line: 1,
        max_var: &mut max_var,
        nesting: 0,
    };
    let (e, _) = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parses problem text and validates its derivatives against finite
/// differences at a few seeded random points.
pub fn parse_problem(text: &str) -> Result<NlpProblem, ProblemError> {
    let expr = parse_problem_text(text)?;
    let problem = NlpProblem::from_expressions("inline", expr);
    let points = sample_points(&problem, REGISTRATION_POINTS, 0x5eed);
    validate_derivatives(&problem, &points)?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(text: &str) -> (usize, usize, ParseErrorKind) {
        let e = parse_problem_text(text).unwrap_err();
        (e.line, e.column, e.kind)
    }

    #[test]
    fn precedence_and_associativity() {
        let x = [2.0, 3.0];
        let cases = [
            ("1 + 2 * 3", 7.0),
            ("(1 + 2) * 3", 9.0),
            ("2 - 3 - 4", -5.0),
            ("8 / 4 / 2", 1.0),
            ("-2^2", -4.0),
            ("2^3^2", 512.0),
            ("x1^-1", 0.5),
            ("-x1 * -x2", 6.0),
            ("2e1 + .5 + 1.5E-1", 20.65),
            ("sqrt(x1 * 8)", 4.0),
            ("x2 ^ (1 + 1)", 9.0),
        ];
        for (text, want) in cases {
            let e = parse_expression(text).unwrap();
            assert!((e.eval(&x) - want).abs() < 1e-12, "{text}: {} != {want}", e.eval(&x));
        }
    }

    #[test]
    fn trailing_operator_reports_its_column() {
        let e = parse_problem_text("min x1 +").unwrap_err();
        assert_eq!((e.line, e.column), (1, 8));
        assert!(matches!(e.kind, ParseErrorKind::UnexpectedEnd { .. }));
        assert_eq!(
            e.to_string(),
            "line 1, column 8: expected an operand after `+`, found end of line"
        );
    }

    #[test]
    fn error_kinds() {
        assert_eq!(kind("min y1"), (1, 5, ParseErrorKind::UnknownIdentifier("y1".into())));
        assert_eq!(kind("min x0"), (1, 5, ParseErrorKind::UnknownIdentifier("x0".into())));
        assert_eq!(
            kind("var 2\nmin x1\n\nineq x3"),
            (4, 6, ParseErrorKind::VariableOutOfRange { index: 3, declared: 2 })
        );
        assert_eq!(kind("min x1^x1"), (1, 8, ParseErrorKind::NonConstantExponent));
        assert_eq!(kind("min x1^210^21^2"), (1, 8, ParseErrorKind::NonConstantExponent));
        assert_eq!(kind("min x1^(0/0)"), (1, 8, ParseErrorKind::NonConstantExponent));
        assert_eq!(kind("ineq x1"), (1, 1, ParseErrorKind::MissingObjective));
        assert_eq!(kind("min x1\nmin x1"), (2, 1, ParseErrorKind::DuplicateObjective));
        assert_eq!(kind("var 2\nvar 2\nmin x1"), (2, 1, ParseErrorKind::DuplicateVar));
        assert_eq!(
            kind("var 1.5\nmin x1"),
            (1, 5, ParseErrorKind::InvalidVariableCount("1.5".into()))
        );
        assert_eq!(
            kind("maximize x1"),
            (1, 1, ParseErrorKind::UnknownDirective("maximize".into()))
        );
        assert_eq!(kind("min x1 $"), (1, 8, ParseErrorKind::UnexpectedCharacter('$')));
        assert_eq!(
            kind("min 1e999*x1"),
            (1, 5, ParseErrorKind::InvalidNumber("1e999".into()))
        );
        assert_eq!(kind("min 3"), (1, 1, ParseErrorKind::NoVariables));
        assert_eq!(
            kind("min x1\nineq 0 <= x1 >= 1"),
            (2, 14, ParseErrorKind::MixedComparison)
        );
        assert!(matches!(kind("min sin x1").2, ParseErrorKind::UnexpectedToken { .. }));
        assert!(matches!(kind("min (x1").2, ParseErrorKind::UnexpectedEnd { .. }));
        assert!(matches!(kind("min x1 x2").2, ParseErrorKind::UnexpectedToken { .. }));
        assert!(matches!(kind("min x100000").2, ParseErrorKind::TooManyVariables { .. }));
    }

    #[test]
    fn deep_nesting_is_rejected() {
        let deep = format!("min {}x1{}", "(".repeat(MAX_NESTING + 1), ")".repeat(MAX_NESTING + 1));
        assert!(matches!(kind(&deep).2, ParseErrorKind::TooDeep));
        let long = format!("min x1{}", " + x1".repeat(500));
        assert!(matches!(kind(&long).2, ParseErrorKind::TooDeep));
        let signs = format!("min {}x1", "-".repeat(500));
        assert!(matches!(kind(&signs).2, ParseErrorKind::TooDeep));
    }

    #[test]
    fn deepest_accepted_trees_print_parseable_text() {
        let negations = format!("min 1 - {}x1", "-".repeat(MAX_DEPTH - 2));
        let p = parse_problem_text(&negations).unwrap();
        assert_eq!(parse_problem_text(&p.to_text()).unwrap(), p);
        let powers = format!("min {}x1{}", "(".repeat(MAX_DEPTH - 1), " ^ -2)".repeat(MAX_DEPTH - 1));
        let p = parse_problem_text(&powers).unwrap();
        assert_eq!(parse_problem_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn comparison_rows_respect_the_depth_limit() {
        let deep = format!("{}x1", "-".repeat(MAX_DEPTH - 1));
        assert!(parse_problem_text(&format!("min x1\nineq {deep}")).is_ok());
        for row in [
            format!("ineq {deep} <= 1"),
            format!("ineq 0 <= {deep} <= 1"),
            format!("eq {deep} = 1"),
        ] {
            let e = parse_problem_text(&format!("min x1\n{row}")).unwrap_err();
            assert_eq!(e.kind, ParseErrorKind::TooDeep, "{row}");
        }
        let shallower = format!("{}x1", "-".repeat(MAX_DEPTH - 2));
        let p = parse_problem_text(&format!("min x1\nineq 0 <= {shallower} <= 1\neq {shallower} = 1")).unwrap();
        assert_eq!(parse_problem_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn comparison_forms_expand_to_standard_rows() {
        let p = parse_problem_text("min x1\nineq 0.5 <= x1 <= 1.5\nineq x1 >= 2\neq x1 = 3").unwrap();
        let at = |e: &Expr, v: f64| e.eval(&[v]);
        assert_eq!(p.inequalities.len(), 3);
        assert_eq!(at(&p.inequalities[0], 1.0), -0.5); // x1 - 1.5
        assert_eq!(at(&p.inequalities[1], 1.0), -0.5); // 0.5 - x1
        assert_eq!(at(&p.inequalities[2], 1.0), 1.0); // 2 - x1
        assert_eq!(at(&p.equalities[0], 1.0), -2.0);

        let q = parse_problem_text("min x1\nineq 1.5 >= x1 >= 0.5").unwrap();
        assert_eq!(q.inequalities, p.inequalities[..2].to_vec());
    }

    #[test]
    fn comments_blank_lines_and_inferred_dimension() {
        let p = parse_problem_text("# header\n\nmin x3 # trailing\n  \n").unwrap();
        assert_eq!(p.n, 3);
        let p = parse_problem_text("var 5\nmin x1").unwrap();
        assert_eq!(p.n, 5);
    }

    #[test]
    fn serialized_text_reparses_to_the_same_tree() {
        let text =
            "var 3\nmin -x1*x2 - sin(x2)^-2 + 1e-3/(x3 - pi)\nineq 0 <= exp(x1) - 2 <= 1\neq log(x2) = sqrt(x3)\n";
        let p = parse_problem_text(text).unwrap();
        let again = parse_problem_text(&p.to_text()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn sin_at_zero() {
        let p = parse_problem("min sin(x1)").unwrap();
        let e = p.evaluate(&crate::linalg::Vector::from_vec(vec![0.0])).unwrap();
        assert_eq!(e.f, 0.0);
        assert_eq!(e.f_grad.as_slice(), &[1.0]);
    }
}
