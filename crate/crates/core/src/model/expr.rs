//! A small arithmetic expression language for user-supplied drift and diffusion
//! functions of one variable `x`.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | func '(' args ')' | '(' expr ')'
//! func   := log | exp | min | max
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x^2` is
//! `-(x^2)`. `log` is the natural logarithm; `min` and `max` take two arguments.
//! The unicode operators `−` and `×` are accepted as aliases.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expression error at byte {position}: {message}")]
pub struct ExprError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Log(Box<Node>),
    Exp(Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::X => x,
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Node::Num(2.0) => base * base,
                    _ => base.powf(b.eval(x)),
                }
            }
            Node::Log(a) => a.eval(x).ln(),
            Node::Exp(a) => a.eval(x).exp(),
            Node::Min(a, b) => a.eval(x).min(b.eval(x)),
            Node::Max(a, b) => a.eval(x).max(b.eval(x)),
        }
    }
}

/// A parsed expression in the variable `x`. Equality and serialization use the
/// original source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            len: source.len(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError {
                position: tok.pos,
                message: format!("unexpected {}", tok.kind),
            });
        }
        Ok(Expr {
            source: source.trim().to_string(),
            root,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(v) => write!(f, "number {v}"),
            TokKind::Ident(s) => write!(f, "identifier '{s}'"),
            TokKind::Op(c) => write!(f, "operator '{c}'"),
            TokKind::LParen => f.write_str("'('"),
            TokKind::RParen => f.write_str("')'"),
            TokKind::Comma => f.write_str("','"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                // exponent part: e.g. 1e-3, 2.5E+4
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let end = if i < chars.len() { chars[i].0 } else { src.len() };
                let text = &src[chars[start].0..end];
                let v: f64 = text.parse().map_err(|_| ExprError {
                    position: pos,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push(Token {
                    kind: TokKind::Num(v),
                    pos,
                });
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = if i < chars.len() { chars[i].0 } else { src.len() };
                out.push(Token {
                    kind: TokKind::Ident(src[chars[start].0..end].to_string()),
                    pos,
                });
            }
            '+' | '-' | '*' | '/' | '^' | '−' | '×' => {
                let op = match c {
                    '−' => '-',
                    '×' => '*',
                    other => other,
                };
                out.push(Token {
                    kind: TokKind::Op(op),
                    pos,
                });
                i += 1;
            }
            '(' => {
                out.push(Token {
                    kind: TokKind::LParen,
                    pos,
                });
                i += 1;
            }
            ')' => {
                out.push(Token {
                    kind: TokKind::RParen,
                    pos,
                });
                i += 1;
            }
            ',' => {
                out.push(Token {
                    kind: TokKind::Comma,
                    pos,
                });
                i += 1;
            }
            other => {
                return Err(ExprError {
                    position: pos,
                    message: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.len, |t| t.pos)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            position: self.here(),
            message: message.into(),
        })
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let msg = format!("expected {kind}, found {}", t.kind);
                self.err(msg)
            }
            None => self.err(format!("expected {kind}, found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Token {
            kind: TokKind::Op(op @ ('+' | '-')),
            ..
        }) = self.peek()
        {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Token {
            kind: TokKind::Op(op @ ('*' | '/')),
            ..
        }) = self.peek()
        {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if let Some(Token {
            kind: TokKind::Op('-'), ..
        }) = self.peek()
        {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if let Some(Token {
            kind: TokKind::Op('^'), ..
        }) = self.peek()
        {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let here = self.here();
        let Some(tok) = self.bump().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok.kind {
            TokKind::Num(v) => Ok(Node::Num(v)),
            TokKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokKind::RParen)?;
                Ok(inner)
            }
            TokKind::Ident(name) => match name.as_str() {
                "x" => Ok(Node::X),
                "log" | "exp" => {
                    self.expect(TokKind::LParen)?;
                    let arg = self.expr()?;
                    self.expect(TokKind::RParen)?;
                    Ok(if name == "log" {
                        Node::Log(Box::new(arg))
                    } else {
                        Node::Exp(Box::new(arg))
                    })
                }
                "min" | "max" => {
                    self.expect(TokKind::LParen)?;
                    let a = self.expr()?;
                    self.expect(TokKind::Comma)?;
                    let b = self.expr()?;
                    self.expect(TokKind::RParen)?;
                    Ok(if name == "min" {
                        Node::Min(Box::new(a), Box::new(b))
                    } else {
                        Node::Max(Box::new(a), Box::new(b))
                    })
                }
                _ => Err(ExprError {
                    position: here,
                    message: format!("unknown identifier '{name}'"),
                }),
            },
            other => Err(ExprError {
                position: here,
                message: format!("unexpected {other}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("x^-1", 4.0), 0.25);
        assert_eq!(ev("(1 + x) / 2", 3.0), 2.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("10 - 3 - 2", 0.0), 5.0);
    }

    #[test]
    fn functions_and_unicode_operators() {
        assert!((ev("x*log(x)^2", std::f64::consts::E) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("min(x, 2) + max(x, 2)", 5.0), 7.0);
        assert_eq!(ev("exp(0)", 0.0), 1.0);
        assert_eq!(ev("3 × x − 1", 2.0), 5.0);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0), 150.2);
    }

    #[test]
    fn reports_errors_with_position() {
        let e = Expr::parse("x + * 2").unwrap_err();
        assert_eq!(e.position, 4);
        assert!(Expr::parse("sin(x)").is_err());
        assert!(Expr::parse("min(x)").is_err());
        assert!(Expr::parse("(x + 1").is_err());
        assert!(Expr::parse("x $ 1").is_err());
        assert!(Expr::parse("x 1").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn serde_uses_source_text() {
        let e = Expr::parse("x^2 + 1").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, "\"x^2 + 1\"");
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.eval(2.0), 5.0);
    }
}
