//! Lexer, parser, evaluator, canonicalizer, and single-unknown solver for
//! equation strings such as `X=(7-3)*(9/10)`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! equation := expr '=' expr
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' | 'x' | '×' | '/') factor)*
//! factor   := ['-'] ( number | 'X' | '(' expr ')' )
//! number   := digits ['.' digits]
//! ```
//!
//! A lowercase `x` (or `×`) between factors is multiplication; only the
//! standalone uppercase `X` is the unknown. Operators are left-associative
//! with the usual precedence (`*`/`/` over `+`/`-`).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        })
    }
}

/// Arithmetic AST over numeric literals and a single unknown `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Unknown,
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Negate(Box<Expr>),
}

impl Expr {
    pub fn unknown_count(&self) -> usize {
        match self {
            Expr::Number(_) => 0,
            Expr::Unknown => 1,
            Expr::Binary(_, l, r) => l.unknown_count() + r.unknown_count(),
            Expr::Negate(inner) => inner.unknown_count(),
        }
    }

    pub fn contains_unknown(&self) -> bool {
        self.unknown_count() > 0
    }

    /// Numeric literals in left-to-right order.
    pub fn literals(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Number(n) => out.push(*n),
            Expr::Unknown => {}
            Expr::Binary(_, l, r) => {
                l.collect_literals(out);
                r.collect_literals(out);
            }
            Expr::Negate(inner) => inner.collect_literals(out),
        }
    }

    /// Rebuild the tree, mapping each literal through `f` (called with the
    /// literal's left-to-right index and value).
    fn map_literals(&self, next: &mut usize, f: &mut impl FnMut(usize, f64) -> Expr) -> Expr {
        match self {
            Expr::Number(n) => {
                let idx = *next;
                *next += 1;
                f(idx, *n)
            }
            Expr::Unknown => Expr::Unknown,
            Expr::Binary(op, l, r) => {
                let left = l.map_literals(next, f);
                let right = r.map_literals(next, f);
                Expr::Binary(*op, Box::new(left), Box::new(right))
            }
            Expr::Negate(inner) => Expr::Negate(Box::new(inner.map_literals(next, f))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Equation {
    pub fn unknown_count(&self) -> usize {
        self.lhs.unknown_count() + self.rhs.unknown_count()
    }

    /// Numeric literals across both sides, left-to-right.
    pub fn literals(&self) -> Vec<f64> {
        let mut out = self.lhs.literals();
        out.extend(self.rhs.literals());
        out
    }

    /// Render the equation as written, parenthesizing interior nodes but
    /// not the outermost level of each side, so a reversed difference
    /// prints as `4=X-3` and a scaled product as `X=(7-3)*(9/10)`.
    /// No side normalization; see [`canonicalize`] for the dedup form.
    pub fn render(&self) -> String {
        format!("{}={}", render_root(&self.lhs), render_root(&self.rhs))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("empty equation")]
    EmptyInput,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression contains the unknown but no value was supplied")]
    MissingUnknownValue,
    #[error("equation has {0} unknowns, expected exactly 1")]
    UnknownCount(usize),
    #[error("literal index {index} out of range (equation has {count} literals)")]
    LiteralIndexOutOfRange { index: usize, count: usize },
    #[error("equation is not in template form (unknown alone on one side)")]
    TemplateFormViolation,
    #[error("solution failed the residual check (|lhs-rhs| = {residual})")]
    ResidualCheckFailed { residual: f64 },
}

// ---------------------------------------------------------------------------
// Lexing and parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Unknown,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Equals,
}

fn lex(src: &str) -> Result<Vec<(usize, Token)>, MathError> {
    let mut tokens = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(offset, ch)) = chars.peek() {
        match ch {
            c if c.is_whitespace() => {
                chars.next();
            }
            '0'..='9' => {
                let start = offset;
                let mut end = offset;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_digit() {
                        end = i + 1;
                        chars.next();
                    } else if c == '.' {
                        // consume the dot only when a digit follows
                        let mut ahead = chars.clone();
                        ahead.next();
                        match ahead.peek() {
                            Some(&(_, d)) if d.is_ascii_digit() => {
                                chars.next();
                                while let Some(&(j, d)) = chars.peek() {
                                    if d.is_ascii_digit() {
                                        end = j + 1;
                                        chars.next();
                                    } else {
                                        break;
                                    }
                                }
                                break;
                            }
                            _ => break,
                        }
                    } else {
                        break;
                    }
                }
                let text = &src[start..end];
                let value: f64 = text.parse().map_err(|_| MathError::Syntax {
                    offset: start,
                    message: format!("invalid number `{text}`"),
                })?;
                tokens.push((start, Token::Number(value)));
            }
            'X' => {
                tokens.push((offset, Token::Unknown));
                chars.next();
            }
            'x' | '×' => {
                tokens.push((offset, Token::Star));
                chars.next();
            }
            '*' => {
                tokens.push((offset, Token::Star));
                chars.next();
            }
            '+' => {
                tokens.push((offset, Token::Plus));
                chars.next();
            }
            '-' => {
                tokens.push((offset, Token::Minus));
                chars.next();
            }
            '/' => {
                tokens.push((offset, Token::Slash));
                chars.next();
            }
            '=' => {
                tokens.push((offset, Token::Equals));
                chars.next();
            }
            '(' => {
                tokens.push((offset, Token::LParen));
                chars.next();
            }
            ')' => {
                tokens.push((offset, Token::RParen));
                chars.next();
            }
            other => {
                return Err(MathError::Syntax {
                    offset,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    pos: usize,
    src_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next_offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        tok
    }

    fn expr(&mut self) -> Result<Expr, MathError> {
        let mut node = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            node = Expr::Binary(op, Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<Expr, MathError> {
        let mut node = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            node = Expr::Binary(op, Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Expr, MathError> {
        if let Some(Token::Minus) = self.peek() {
            self.bump();
            let inner = self.primary()?;
            return Ok(Expr::Negate(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, MathError> {
        let offset = self.next_offset();
        match self.bump() {
            Some(Token::Number(n)) => Ok(Expr::Number(n)),
            Some(Token::Unknown) => Ok(Expr::Unknown),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                let close = self.next_offset();
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(MathError::Syntax {
                        offset: close,
                        message: "expected `)`".into(),
                    }),
                }
            }
            _ => Err(MathError::Syntax {
                offset,
                message: "expected number, `X`, or `(`".into(),
            }),
        }
    }
}

/// Parse an equation string of the form `lhs = rhs`.
pub fn parse_equation(src: &str) -> Result<Equation, MathError> {
    let tokens = lex(src)?;
    if tokens.is_empty() {
        return Err(MathError::EmptyInput);
    }
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        src_len: src.len(),
    };
    let lhs = parser.expr()?;
    let eq_offset = parser.next_offset();
    match parser.bump() {
        Some(Token::Equals) => {}
        _ => {
            return Err(MathError::Syntax {
                offset: eq_offset,
                message: "expected `=`".into(),
            })
        }
    }
    let rhs = parser.expr()?;
    if parser.pos != tokens.len() {
        return Err(MathError::Syntax {
            offset: parser.next_offset(),
            message: "trailing input after equation".into(),
        });
    }
    Ok(Equation { lhs, rhs })
}

// ---------------------------------------------------------------------------
// Evaluation and solving
// ---------------------------------------------------------------------------

/// Evaluate an expression. `unknown_value` must be supplied when the
/// expression contains the unknown.
pub fn evaluate(expr: &Expr, unknown_value: Option<f64>) -> Result<f64, MathError> {
    match expr {
        Expr::Number(n) => Ok(*n),
        Expr::Unknown => unknown_value.ok_or(MathError::MissingUnknownValue),
        Expr::Negate(inner) => Ok(-evaluate(inner, unknown_value)?),
        Expr::Binary(op, l, r) => {
            let a = evaluate(l, unknown_value)?;
            let b = evaluate(r, unknown_value)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(MathError::DivisionByZero)
                    } else {
                        Ok(a / b)
                    }
                }
            }
        }
    }
}

/// Solve an equation containing the unknown exactly once by peeling
/// inverse operations off the unknown-bearing side.
///
/// The result is checked by substitution: `|lhs - rhs|` must be at most
/// `1e-9 * max(1, |lhs|)`.
pub fn solve(eq: &Equation) -> Result<f64, MathError> {
    let count = eq.unknown_count();
    if count != 1 {
        return Err(MathError::UnknownCount(count));
    }
    let (mut side, other) = if eq.lhs.contains_unknown() {
        (&eq.lhs, &eq.rhs)
    } else {
        (&eq.rhs, &eq.lhs)
    };
    let mut constant = evaluate(other, None)?;
    loop {
        match side {
            Expr::Unknown => break,
            Expr::Negate(inner) => {
                constant = -constant;
                side = inner;
            }
            Expr::Binary(op, l, r) => {
                let unknown_left = l.contains_unknown();
                let (with, without) = if unknown_left { (l, r) } else { (r, l) };
                let known = evaluate(without, None)?;
                constant = match op {
                    BinOp::Add => constant - known,
                    BinOp::Sub => {
                        if unknown_left {
                            constant + known
                        } else {
                            known - constant
                        }
                    }
                    BinOp::Mul => {
                        if known == 0.0 {
                            return Err(MathError::DivisionByZero);
                        }
                        constant / known
                    }
                    BinOp::Div => {
                        if unknown_left {
                            // X / k = c  =>  X = c * k, undefined for k = 0
                            if known == 0.0 {
                                return Err(MathError::DivisionByZero);
                            }
                            constant * known
                        } else {
                            // k / X = c  =>  X = k / c
                            if constant == 0.0 {
                                return Err(MathError::DivisionByZero);
                            }
                            known / constant
                        }
                    }
                };
                side = with;
            }
            Expr::Number(_) => unreachable!("unknown side lost its unknown"),
        }
    }
    let lhs_val = evaluate(&eq.lhs, Some(constant))?;
    let rhs_val = evaluate(&eq.rhs, Some(constant))?;
    let residual = (lhs_val - rhs_val).abs();
    if !residual.is_finite() || residual > 1e-9 * lhs_val.abs().max(1.0) {
        return Err(MathError::ResidualCheckFailed { residual });
    }
    Ok(constant)
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Minimal-digit rendering: `7` for integral values, shortest round-trip
/// form otherwise (`9.5`, `3.6`).
pub fn format_number(value: f64) -> String {
    if value == value.trunc() && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

fn render_expr(expr: &Expr) -> String {
    match expr {
        Expr::Number(n) => format_number(*n),
        Expr::Unknown => "X".to_string(),
        Expr::Negate(inner) => format!("(-{})", render_expr(inner)),
        Expr::Binary(op, l, r) => format!("({}{}{})", render_expr(l), op, render_expr(r)),
    }
}

/// Like [`render_expr`] but without parentheses around the node itself.
fn render_root(expr: &Expr) -> String {
    match expr {
        Expr::Binary(op, l, r) => format!("{}{}{}", render_expr(l), op, render_expr(r)),
        other => render_expr(other),
    }
}

/// Deterministic canonical rendering used as the dedup key: the side
/// containing the unknown is placed on the left, every binary node is
/// parenthesized, multiplication renders as `*`, and numbers use minimal
/// digits. Structurally identical ASTs always render identically.
pub fn canonicalize(eq: &Equation) -> String {
    let c = canonical_form(eq);
    format!("{}={}", render_expr(&c.lhs), render_expr(&c.rhs))
}

/// The equation with its unknown-bearing side moved to the left, if it is
/// not there already.
pub fn canonical_form(eq: &Equation) -> Equation {
    if !eq.lhs.contains_unknown() && eq.rhs.contains_unknown() {
        Equation {
            lhs: eq.rhs.clone(),
            rhs: eq.lhs.clone(),
        }
    } else {
        eq.clone()
    }
}

// ---------------------------------------------------------------------------
// Literal rewriting
// ---------------------------------------------------------------------------

/// Replace the literals named in `replacements` (keyed by left-to-right
/// index across the whole equation) with new values.
pub fn substitute_literals(
    eq: &Equation,
    replacements: &BTreeMap<usize, f64>,
) -> Result<Equation, MathError> {
    let count = eq.literals().len();
    for &index in replacements.keys() {
        if index >= count {
            return Err(MathError::LiteralIndexOutOfRange { index, count });
        }
    }
    let mut next = 0usize;
    let mut subst = |idx: usize, old: f64| match replacements.get(&idx) {
        Some(&new) => Expr::Number(new),
        None => Expr::Number(old),
    };
    let lhs = eq.lhs.map_literals(&mut next, &mut subst);
    let rhs = eq.rhs.map_literals(&mut next, &mut subst);
    Ok(Equation { lhs, rhs })
}

/// Turn a template equation `X = f(n1..nk)` into one where literal
/// `literal_index` of `f` becomes the unknown and `old_answer` becomes a
/// constant side: `old_answer = f(.., X, ..)`.
pub fn replace_literal_with_unknown(
    eq: &Equation,
    literal_index: usize,
    old_answer: f64,
) -> Result<Equation, MathError> {
    let body = match (&eq.lhs, &eq.rhs) {
        (Expr::Unknown, rhs) if !rhs.contains_unknown() => rhs,
        (lhs, Expr::Unknown) if !lhs.contains_unknown() => lhs,
        _ => return Err(MathError::TemplateFormViolation),
    };
    let count = body.literals().len();
    if literal_index >= count {
        return Err(MathError::LiteralIndexOutOfRange {
            index: literal_index,
            count,
        });
    }
    let mut next = 0usize;
    let rhs = body.map_literals(&mut next, &mut |idx, old| {
        if idx == literal_index {
            Expr::Unknown
        } else {
            Expr::Number(old)
        }
    });
    Ok(Equation {
        lhs: Expr::Number(old_answer),
        rhs,
    })
}
