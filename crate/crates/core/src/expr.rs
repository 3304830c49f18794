//! Infix polynomial expressions used in problem files.
//!
//! Grammar (precedence climbing, loosest to tightest):
//!
//! ```text
//! expr   := expr ('+' | '-') expr
//!         | expr '*' expr
//!         | '-' expr
//!         | atom '^' INTEGER        (right-assoc, binds tighter than unary '-')
//! atom   := NUMBER | IDENT | '(' expr ')'
//! ```
//!
//! Division is rejected: rational structure lives in the problem file's
//! numerator/denominator fields, never inline. Implicit multiplication
//! (`2x1`) is rejected as well.

use crate::poly::{Context, PolyError, Polynomial};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError { position, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    /// Direct recursive evaluation of the syntax tree.
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => point[*i],
            Expr::Neg(a) => -a.eval(point),
            Expr::Add(a, b) => a.eval(point) + b.eval(point),
            Expr::Sub(a, b) => a.eval(point) - b.eval(point),
            Expr::Mul(a, b) => a.eval(point) * b.eval(point),
            Expr::Pow(a, e) => a.eval(point).powi(*e as i32),
        }
    }

    pub fn to_polynomial(&self, ctx: &Context) -> Result<Polynomial, PolyError> {
        Ok(match self {
            Expr::Num(v) => Polynomial::constant(ctx, *v),
            Expr::Var(i) => Polynomial::var(ctx, *i)?,
            Expr::Neg(a) => a.to_polynomial(ctx)?.neg(),
            Expr::Add(a, b) => a.to_polynomial(ctx)?.add(&b.to_polynomial(ctx)?)?,
            Expr::Sub(a, b) => a.to_polynomial(ctx)?.sub(&b.to_polynomial(ctx)?)?,
            Expr::Mul(a, b) => a.to_polynomial(ctx)?.mul(&b.to_polynomial(ctx)?)?,
            Expr::Pow(a, e) => a.to_polynomial(ctx)?.pow(*e)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    Slash,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Slash => f.write_str("`/`"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok, &str)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'/' => Tok::Slash,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| ParseError::new(start, format!("malformed number `{s}`")))?;
                out.push((start, Tok::Num(v), s));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let s = &text[start..i];
                out.push((start, Tok::Ident(s.to_string()), s));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::new(start, format!("unexpected character `{ch}`")));
            }
        };
        i += 1;
        out.push((start, tok, &text[start..i]));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok, &'a str)>,
    pos: usize,
    end: usize,
    ctx: &'a Context,
}

// Binding powers.
const BP_ADD: u8 = 1;
const BP_MUL: u8 = 2;
const BP_NEG: u8 = 3;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let (bp, op) = match self.peek() {
                Some(Tok::Plus) => (BP_ADD, Tok::Plus),
                Some(Tok::Minus) => (BP_ADD, Tok::Minus),
                Some(Tok::Star) => (BP_MUL, Tok::Star),
                Some(Tok::Slash) => {
                    return Err(ParseError::new(
                        self.offset(),
                        "division is not supported; declare rational terms structurally",
                    ))
                }
                Some(Tok::RParen) | None => break,
                Some(t) => {
                    let msg = format!("expected an operator, found {t} (implicit multiplication is not supported)");
                    return Err(ParseError::new(self.offset(), msg));
                }
            };
            if bp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(bp + 1)?;
            lhs = match op {
                Tok::Plus => Expr::Add(Box::new(lhs), Box::new(rhs)),
                Tok::Minus => Expr::Sub(Box::new(lhs), Box::new(rhs)),
                _ => Expr::Mul(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            let inner = self.expr(BP_NEG)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        let atom = self.atom()?;
        self.power(atom)
    }

    fn power(&mut self, base: Expr) -> Result<Expr, ParseError> {
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let at = self.offset();
            let e = match self.toks.get(self.pos) {
                Some((_, Tok::Num(_), text)) => text
                    .parse::<u32>()
                    .map_err(|_| ParseError::new(at, format!("exponent `{text}` is not a nonnegative integer")))?,
                Some((_, Tok::Minus, _)) => {
                    return Err(ParseError::new(at, "negative exponents are not supported"))
                }
                _ => return Err(ParseError::new(at, "expected an integer exponent after `^`")),
            };
            if e > u8::MAX as u32 {
                return Err(ParseError::new(at, "exponent exceeds 255"));
            }
            self.pos += 1;
            if let Some(Tok::Caret) = self.peek() {
                return Err(ParseError::new(self.offset(), "chained exponents are ambiguous; add parentheses"));
            }
            return Ok(Expr::Pow(Box::new(base), e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        let Some((_, tok, _)) = self.toks.get(self.pos).cloned() else {
            return Err(ParseError::new(at, "unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => self
                .ctx
                .index_of(&name)
                .map(Expr::Var)
                .ok_or_else(|| ParseError::new(at, format!("unknown identifier `{name}`"))),
            Tok::LParen => {
                let inner = self.expr(0)?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(ParseError::new(at, "unbalanced parenthesis: `(` is never closed")),
                }
            }
            Tok::Slash => Err(ParseError::new(at, "division is not supported")),
            t => Err(ParseError::new(at, format!("expected a number, identifier or `(`, found {t}"))),
        }
    }
}

/// Parses `text` into a syntax tree whose identifiers index into `ctx`.
pub fn parse_expr(text: &str, ctx: &Context) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(ParseError::new(0, "empty expression"));
    }
    let mut p = Parser { toks, pos: 0, end: text.len(), ctx };
    let e = p.expr(0)?;
    if let Some(tok) = p.peek() {
        let msg = match tok {
            Tok::RParen => "unbalanced parenthesis: unexpected `)`".to_string(),
            t => format!("unexpected {t}"),
        };
        return Err(ParseError::new(p.offset(), msg));
    }
    Ok(e)
}

pub fn parse_polynomial(text: &str, ctx: &Context) -> Result<Polynomial, ParseError> {
    let e = parse_expr(text, ctx)?;
    e.to_polynomial(ctx).map_err(|err| ParseError::new(0, err.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Monomial, VariableContext};

    fn ctx3() -> Context {
        VariableContext::new(["x1", "x2", "x3"]).unwrap()
    }

    fn mono(e: &[u32]) -> Monomial {
        Monomial::from_exponents(e).unwrap()
    }

    #[test]
    fn parses_denominators_from_problem_files() {
        let c = ctx3();
        let p = parse_polynomial("1 + 4.5*x2", &c).unwrap();
        assert_eq!(p.coefficient(&mono(&[0, 0, 0])), 1.0);
        assert_eq!(p.coefficient(&mono(&[0, 1, 0])), 4.5);
        assert_eq!(p.len(), 2);
        let q = parse_polynomial("0.5 + x3^2", &c).unwrap();
        assert_eq!(q.coefficient(&mono(&[0, 0, 2])), 1.0);
        assert_eq!(q.coefficient(&mono(&[0, 0, 0])), 0.5);
        assert!(parse_polynomial("-(x1 - x1)", &c).unwrap().is_zero());
    }

    #[test]
    fn precedence() {
        let c = ctx3();
        let p = parse_polynomial("-x1^2", &c).unwrap();
        assert_eq!(p.coefficient(&mono(&[2, 0, 0])), -1.0);
        assert_eq!(parse_polynomial("-2^2", &c).unwrap().coefficient(&mono(&[0, 0, 0])), -4.0);
        let q = parse_polynomial("1 + 2*x1*x2 - 3*(x1 + 1)", &c).unwrap();
        assert_eq!(q.coefficient(&mono(&[0, 0, 0])), -2.0);
        assert_eq!(q.coefficient(&mono(&[1, 1, 0])), 2.0);
        assert_eq!(q.coefficient(&mono(&[1, 0, 0])), -3.0);
        let r = parse_polynomial("2*-x1 - -x2", &c).unwrap();
        assert_eq!(r.coefficient(&mono(&[1, 0, 0])), -2.0);
        assert_eq!(r.coefficient(&mono(&[0, 1, 0])), 1.0);
        assert_eq!(parse_polynomial("1.5e-3*x1", &c).unwrap().coefficient(&mono(&[1, 0, 0])), 1.5e-3);
        assert_eq!(parse_polynomial("(x1+x2)^2", &c).unwrap().coefficient(&mono(&[1, 1, 0])), 2.0);
    }

    #[test]
    fn errors_carry_positions() {
        let c = ctx3();
        let e = parse_polynomial("x1 + y", &c).unwrap_err();
        assert_eq!(e.position, 5);
        assert!(e.message.contains("unknown identifier"));
        let e = parse_polynomial("x1^2.5", &c).unwrap_err();
        assert_eq!(e.position, 3);
        assert!(parse_polynomial("x1^-1", &c).unwrap_err().message.contains("negative"));
        let e = parse_polynomial("1/(1+x1)", &c).unwrap_err();
        assert_eq!(e.position, 1);
        assert!(e.message.contains("division"));
        assert!(parse_polynomial("(x1 + 1", &c).unwrap_err().message.contains("unbalanced"));
        assert!(parse_polynomial("x1 + 1)", &c).unwrap_err().message.contains("unbalanced"));
        assert!(parse_polynomial("2x1", &c).unwrap_err().message.contains("implicit"));
        assert!(parse_polynomial("   ", &c).is_err());
        assert!(parse_polynomial("x1 +", &c).is_err());
    }
}
