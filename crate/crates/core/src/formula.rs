//! Quotient-compatible expression mini-language.
//!
//! Grammar (used by configuration files):
//!
//! ```text
//! expr := number | "x" | "y" | expr "+" expr | expr "*" expr
//!       | "sin(" expr ")" | "cos(" expr ")" | "pi"
//! ```
//!
//! with subtraction, unary minus and parentheses accepted as affine sugar.
//! Descent to the quotient is guaranteed at parse time: the coordinates `x`
//! and `y` may appear only inside trigonometric arguments, every
//! trigonometric argument must reduce to `2*pi*m*x` or `2*pi*m*y` with an
//! integer `m` (or to a pure constant), and the center coordinate `t` is not
//! part of the language at all.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::field::Field;
use crate::lattice::Lattice;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Pi,
    X,
    Y,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("unexpected character '{found}' at position {pos}")]
    Lex { pos: usize, found: char },
    #[error("invalid number literal at position {pos}")]
    BadNumber { pos: usize },
    #[error("unexpected token at position {pos}: expected {expected}")]
    Unexpected { pos: usize, expected: &'static str },
    #[error("unexpected end of expression: expected {expected}")]
    UnexpectedEnd { expected: &'static str },
    #[error("unknown identifier '{name}' at position {pos}")]
    UnknownIdent { pos: usize, name: String },
    #[error("coordinate '{var}' may only appear inside sin/cos arguments")]
    CoordinateOutsideTrig { var: char },
    #[error("trigonometric argument is not 2*pi*m*x or 2*pi*m*y: {reason}")]
    NonPeriodicTrig { reason: String },
}

/// Parsed and validated expression of the mini-language.
#[derive(Debug, Clone)]
pub struct Formula {
    source: String,
    ast: Expr,
}

impl Formula {
    pub fn parse(src: &str) -> Result<Self, FormulaError> {
        let tokens = lex(src)?;
        let mut parser = Parser { tokens, pos: 0 };
        let ast = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(FormulaError::Unexpected {
                pos: tok.pos,
                expected: "end of expression",
            });
        }
        validate(&ast)?;
        Ok(Self {
            source: src.to_owned(),
            ast,
        })
    }

    /// A constant formula, convenient for configs given as bare numbers.
    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value}"),
            ast: Expr::Num(value),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates the formula at `(x, y) = (i/N, j/N)` for every node.
    pub fn sample<T: Scalar>(&self, lattice: &Arc<Lattice>) -> Field<T> {
        Field::from_fn(lattice, |p| {
            let (x, y, _t) = lattice.coordinates::<T>(p);
            eval(&self.ast, x, y)
        })
    }

    /// Evaluates at an explicit coordinate pair (used by the analytic
    /// convergence oracles).
    pub fn eval_at<T: Scalar>(&self, x: T, y: T) -> T {
        eval(&self.ast, x, y)
    }
}

impl FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, FormulaError> {
        Formula::parse(s)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn eval<T: Scalar>(expr: &Expr, x: T, y: T) -> T {
    match expr {
        Expr::Num(v) => T::of_f64(*v),
        Expr::Pi => T::PI(),
        Expr::X => x,
        Expr::Y => y,
        Expr::Add(a, b) => eval(a, x, y) + eval(b, x, y),
        Expr::Sub(a, b) => eval(a, x, y) - eval(b, x, y),
        Expr::Mul(a, b) => eval(a, x, y) * eval(b, x, y),
        Expr::Neg(a) => -eval(a, x, y),
        Expr::Sin(a) => eval(a, x, y).sin(),
        Expr::Cos(a) => eval(a, x, y).cos(),
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Symbolic affine form `c0 + cx*x + cy*y`; `None` marks a non-affine
/// expression (products of coordinates, nested trig, ...).
#[derive(Debug, Clone, Copy)]
struct Affine {
    c0: f64,
    cx: f64,
    cy: f64,
}

fn affine_form(expr: &Expr) -> Option<Affine> {
    match expr {
        Expr::Num(v) => Some(Affine {
            c0: *v,
            cx: 0.0,
            cy: 0.0,
        }),
        Expr::Pi => Some(Affine {
            c0: std::f64::consts::PI,
            cx: 0.0,
            cy: 0.0,
        }),
        Expr::X => Some(Affine {
            c0: 0.0,
            cx: 1.0,
            cy: 0.0,
        }),
        Expr::Y => Some(Affine {
            c0: 0.0,
            cx: 0.0,
            cy: 1.0,
        }),
        Expr::Add(a, b) => {
            let (a, b) = (affine_form(a)?, affine_form(b)?);
            Some(Affine {
                c0: a.c0 + b.c0,
                cx: a.cx + b.cx,
                cy: a.cy + b.cy,
            })
        }
        Expr::Sub(a, b) => {
            let (a, b) = (affine_form(a)?, affine_form(b)?);
            Some(Affine {
                c0: a.c0 - b.c0,
                cx: a.cx - b.cx,
                cy: a.cy - b.cy,
            })
        }
        Expr::Mul(a, b) => {
            let (a, b) = (affine_form(a)?, affine_form(b)?);
            let a_const = a.cx == 0.0 && a.cy == 0.0;
            let b_const = b.cx == 0.0 && b.cy == 0.0;
            match (a_const, b_const) {
                (true, _) => Some(Affine {
                    c0: a.c0 * b.c0,
                    cx: a.c0 * b.cx,
                    cy: a.c0 * b.cy,
                }),
                (_, true) => Some(Affine {
                    c0: a.c0 * b.c0,
                    cx: b.c0 * a.cx,
                    cy: b.c0 * a.cy,
                }),
                _ => None,
            }
        }
        Expr::Neg(a) => {
            let a = affine_form(a)?;
            Some(Affine {
                c0: -a.c0,
                cx: -a.cx,
                cy: -a.cy,
            })
        }
        Expr::Sin(_) | Expr::Cos(_) => None,
    }
}

fn validate(expr: &Expr) -> Result<(), FormulaError> {
    match expr {
        Expr::Num(_) | Expr::Pi => Ok(()),
        Expr::X => Err(FormulaError::CoordinateOutsideTrig { var: 'x' }),
        Expr::Y => Err(FormulaError::CoordinateOutsideTrig { var: 'y' }),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            validate(a)?;
            validate(b)
        }
        Expr::Neg(a) => validate(a),
        Expr::Sin(arg) | Expr::Cos(arg) => validate_trig_argument(arg),
    }
}

fn validate_trig_argument(arg: &Expr) -> Result<(), FormulaError> {
    let form = affine_form(arg).ok_or_else(|| FormulaError::NonPeriodicTrig {
        reason: "argument is not an affine expression in x and y".to_owned(),
    })?;
    if form.cx == 0.0 && form.cy == 0.0 {
        // Pure constant: trivially descends.
        return Ok(());
    }
    if form.c0 != 0.0 {
        return Err(FormulaError::NonPeriodicTrig {
            reason: format!("constant offset {} in a periodic argument", form.c0),
        });
    }
    if form.cx != 0.0 && form.cy != 0.0 {
        return Err(FormulaError::NonPeriodicTrig {
            reason: "argument mixes x and y".to_owned(),
        });
    }
    let coeff = if form.cx != 0.0 { form.cx } else { form.cy };
    let m = coeff / (2.0 * std::f64::consts::PI);
    if (m - m.round()).abs() > 1e-9 {
        return Err(FormulaError::NonPeriodicTrig {
            reason: format!("frequency {m} is not an integer multiple of 2*pi"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, FormulaError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push(Token {
                    kind: TokenKind::Plus,
                    pos: i,
                });
                i += 1;
            }
            '-' => {
                tokens.push(Token {
                    kind: TokenKind::Minus,
                    pos: i,
                });
                i += 1;
            }
            '*' => {
                tokens.push(Token {
                    kind: TokenKind::Star,
                    pos: i,
                });
                i += 1;
            }
            '(' => {
                tokens.push(Token {
                    kind: TokenKind::LParen,
                    pos: i,
                });
                i += 1;
            }
            ')' => {
                tokens.push(Token {
                    kind: TokenKind::RParen,
                    pos: i,
                });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Optional exponent.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| FormulaError::BadNumber { pos: start })?;
                tokens.push(Token {
                    kind: TokenKind::Num(value),
                    pos: start,
                });
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(src[start..i].to_owned()),
                    pos: start,
                });
            }
            other => {
                return Err(FormulaError::Lex {
                    pos: i,
                    found: other,
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokenKind, expected: &'static str) -> Result<(), FormulaError> {
        match self.bump() {
            Some(t) if t.kind == kind => Ok(()),
            Some(t) => Err(FormulaError::Unexpected {
                pos: t.pos,
                expected,
            }),
            None => Err(FormulaError::UnexpectedEnd { expected }),
        }
    }

    fn expr(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokenKind::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(TokenKind::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.factor()?;
        while matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Star)) {
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, FormulaError> {
        if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Minus)) {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        let tok = self.bump().ok_or(FormulaError::UnexpectedEnd {
            expected: "a number, coordinate, pi, sin, cos or '('",
        })?;
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "pi" => Ok(Expr::Pi),
                "sin" | "cos" => {
                    self.expect(TokenKind::LParen, "'(' after sin/cos")?;
                    let arg = self.expr()?;
                    self.expect(TokenKind::RParen, "')'")?;
                    if name == "sin" {
                        Ok(Expr::Sin(Box::new(arg)))
                    } else {
                        Ok(Expr::Cos(Box::new(arg)))
                    }
                }
                _ => Err(FormulaError::UnknownIdent { pos: tok.pos, name }),
            },
            _ => Err(FormulaError::Unexpected {
                pos: tok.pos,
                expected: "a number, coordinate, pi, sin, cos or '('",
            }),
        }
    }
}
