//! Closed-form expressions over `+ - * / ^`, `sin cos exp abs` and named variables,
//! with symbolic differentiation.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at offset {1}")]
    Char(char, usize),
    #[error("unexpected end of expression")]
    End,
    #[error("unexpected token {0} at offset {1}")]
    Token(String, usize),
    #[error("unknown function {0}")]
    Function(String),
    #[error("unknown variable {0}")]
    Variable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// Sign function; only produced by differentiating `abs`.
    Sign(Box<Expr>),
    /// Natural logarithm; only produced by differentiating a variable exponent.
    Ln(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse().map_err(|_| ExprError::Token(text.clone(), start))?;
            out.push((Tok::Num(v), start));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(ExprError::Char(c, i));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        let t = self.toks.get(self.pos).cloned().ok_or(ExprError::End)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        match self.next()? {
            (Tok::Op(c), _) if c == op => Ok(()),
            (t, at) => Err(ExprError::Token(format!("{t:?}"), at)),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // Right associative; binds tighter than unary minus on its left.
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.next()? {
            (Tok::Num(v), _) => Ok(Expr::Num(v)),
            (Tok::Op('('), _) => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            (Tok::Ident(name), _) => {
                if let Some(Tok::Op('(')) = self.peek() {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "abs" => Func::Abs,
                        _ => return Err(ExprError::Function(name)),
                    };
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.expect(')')?;
                    Ok(Expr::Call(f, Box::new(arg)))
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            (t, at) => Err(ExprError::Token(format!("{t:?}"), at)),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser { toks: lex(src)?, pos: 0 };
        let e = p.sum()?;
        match p.toks.get(p.pos) {
            None => Ok(e),
            Some((t, at)) => Err(ExprError::Token(format!("{t:?}"), *at)),
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Sign(a) | Expr::Ln(a) => a.collect(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    /// Errors unless every variable is in `allowed`.
    pub fn check_variables(&self, allowed: &[&str]) -> Result<(), ExprError> {
        match self.variables().into_iter().find(|v| !allowed.contains(&v.as_str())) {
            Some(v) => Err(ExprError::Variable(v)),
            None => Ok(()),
        }
    }

    /// Evaluates with `env` resolving variables; unknown names read as NaN.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => env(name).unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => {
                let (x, y) = (a.eval(env), b.eval(env));
                if y.fract() == 0.0 && y.abs() < 64.0 {
                    x.powi(y as i32)
                } else {
                    x.powf(y)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(env);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                }
            }
            Expr::Sign(a) => {
                let v = a.eval(env);
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Expr::Ln(a) => a.eval(env).ln(),
        }
    }

    /// Evaluates with a single variable bound.
    pub fn eval1(&self, name: &str, value: f64) -> f64 {
        self.eval(&|v| (v == name).then_some(value))
    }

    pub fn is_const(&self, var: &str) -> bool {
        !self.variables().contains(var)
    }

    /// Symbolic derivative with respect to `var`.
    pub fn derivative(&self, var: &str) -> Expr {
        use Expr::*;
        let b = |e: Expr| Box::new(e);
        match self {
            Num(_) => Num(0.0),
            Var(v) => Num(if v == var { 1.0 } else { 0.0 }),
            Neg(a) => Neg(b(a.derivative(var))),
            Add(x, y) => Add(b(x.derivative(var)), b(y.derivative(var))),
            Sub(x, y) => Sub(b(x.derivative(var)), b(y.derivative(var))),
            Mul(x, y) => Add(
                b(Mul(b(x.derivative(var)), y.clone())),
                b(Mul(x.clone(), b(y.derivative(var)))),
            ),
            Div(x, y) => Div(
                b(Sub(
                    b(Mul(b(x.derivative(var)), y.clone())),
                    b(Mul(x.clone(), b(y.derivative(var)))),
                )),
                b(Mul(y.clone(), y.clone())),
            ),
            Pow(x, y) if y.is_const(var) => Mul(
                b(Mul(y.clone(), b(Pow(x.clone(), b(Sub(y.clone(), b(Num(1.0)))))))),
                b(x.derivative(var)),
            ),
            Pow(x, y) => Mul(
                b(self.clone()),
                b(Add(
                    b(Mul(b(y.derivative(var)), b(Ln(x.clone())))),
                    b(Div(b(Mul(y.clone(), b(x.derivative(var)))), x.clone())),
                )),
            ),
            Call(f, a) => {
                let inner = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(b(Call(Func::Sin, a.clone()))),
                    Func::Exp => self.clone(),
                    Func::Abs => Sign(a.clone()),
                };
                Mul(b(inner), b(a.derivative(var)))
            }
            Sign(_) => Num(0.0),
            Ln(a) => Div(b(a.derivative(var)), a.clone()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                };
                write!(f, "{name}({a})")
            }
            Expr::Sign(a) => write!(f, "sign({a})"),
            Expr::Ln(a) => write!(f, "ln({a})"),
        }
    }
}
