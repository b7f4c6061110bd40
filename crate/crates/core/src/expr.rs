//! Closed-form field expressions: `+ - * / ^`, `sin cos tan exp ln sqrt`, variables `x1..x9`,
//! the constant `pi` and named parameters bound at parse time.

use crate::error::{Error, Result};
use crate::real::Real;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    PowI(Box<Expr>, i32),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.') {
                i += 1;
            }
            if i < cs.len() && (cs[i] == 'e' || cs[i] == 'E') {
                let save = i;
                i += 1;
                if i < cs.len() && (cs[i] == '+' || cs[i] == '-') {
                    i += 1;
                }
                if i < cs.len() && cs[i].is_ascii_digit() {
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let t: String = cs[st..i].iter().collect();
            let v = t.parse::<f64>().map_err(|_| Error::Expression(format!("bad number `{t}` in `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(cs[st..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}` in `{s}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    src: &'a str,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn err<T>(&self, what: &str) -> Result<T> {
        Err(Error::Expression(format!("{what} at token {} in `{}`", self.pos, self.src)))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::Add(Box::new(lhs), Box::new(rhs)) } else { Expr::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::Mul(Box::new(lhs), Box::new(rhs)) } else { Expr::Div(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
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

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(match exp.constant() {
                Some(v) if v.fract() == 0.0 && v.abs() <= 64.0 => Expr::PowI(Box::new(base), v as i32),
                _ => Expr::Pow(Box::new(base), Box::new(exp)),
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(t) = self.peek().cloned() else { return self.err("unexpected end") };
        self.pos += 1;
        match t {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("missing `)`");
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "tan" => Some(Func::Tan),
                    "exp" => Some(Func::Exp),
                    "ln" | "log" => Some(Func::Ln),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    if self.peek() != Some(&Tok::LParen) {
                        return self.err(&format!("`{name}` needs an argument"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(&Tok::RParen) {
                        return self.err("missing `)`");
                    }
                    self.pos += 1;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(d) = name.strip_prefix('x') {
                    if let Ok(k) = d.parse::<usize>() {
                        if (1..=9).contains(&k) {
                            return Ok(Expr::Var(k - 1));
                        }
                    }
                }
                match self.params.get(&name) {
                    Some(v) => Ok(Expr::Const(*v)),
                    None => self.err(&format!("unknown identifier `{name}`")),
                }
            }
            _ => self.err("unexpected token"),
        }
    }
}

impl Expr {
    pub fn parse(s: &str) -> Result<Expr> {
        Self::parse_with(s, &BTreeMap::new())
    }

    /// Parses with named parameters substituted as constants.
    pub fn parse_with(s: &str, params: &BTreeMap<String, f64>) -> Result<Expr> {
        let toks = lex(s)?;
        if toks.is_empty() {
            return Err(Error::Expression("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0, src: s, params };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    /// Value when the expression involves no variables.
    pub fn constant(&self) -> Option<f64> {
        if self.max_var().is_none() {
            Some(self.eval::<f64>(&[]))
        } else {
            None
        }
    }

    /// Largest variable index used (0-based).
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(k) => Some(*k),
            Expr::Neg(a) | Expr::PowI(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        match self {
            Expr::Const(v) => T::cst(*v),
            Expr::Var(k) => x[*k],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::PowI(a, n) => a.eval(x).powi(*n),
            Expr::Pow(a, b) => (b.eval(x) * a.eval(x).ln()).exp(),
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Dual;

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2*3 - 4/2").unwrap();
        assert_eq!(e.eval::<f64>(&[]), 5.0);
        assert_eq!(Expr::parse("-2^2").unwrap().eval::<f64>(&[]), -4.0);
        assert_eq!(Expr::parse("2^3^2").unwrap().eval::<f64>(&[]), 512.0);
        assert_eq!(Expr::parse("2^-1").unwrap().eval::<f64>(&[]), 0.5);
        assert_eq!(Expr::parse("1.5e1 + 2E-1").unwrap().eval::<f64>(&[]), 15.2);
    }

    #[test]
    fn variables_functions_parameters() {
        let mut p = BTreeMap::new();
        p.insert("eps".to_string(), 0.2);
        let e = Expr::parse_with("x3 - eps*sin(x1)", &p).unwrap();
        let v = e.eval::<f64>(&[0.5, 9.0, 1.0]);
        assert!((v - (1.0 - 0.2 * 0.5f64.sin())).abs() < 1e-15);
        assert_eq!(e.max_var(), Some(2));
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("y").is_err());
        assert!(Expr::parse("sin x1").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn derivatives_through_expressions() {
        let e = Expr::parse("(1 + 0.3*cos(x1))^2 * exp(x2)").unwrap();
        let x = [Dual::<f64, 2>::var(0.4, 0), Dual::var(0.1, 1)];
        let v = e.eval(&x);
        let w = 1.0 + 0.3 * 0.4f64.cos();
        assert!((v.eps[0] - 2.0 * w * (-0.3 * 0.4f64.sin()) * 0.1f64.exp()).abs() < 1e-14);
        assert!((v.eps[1] - v.re).abs() < 1e-14);
        let r = Expr::parse("x1^0.5").unwrap().eval(&[Dual::<f64, 1>::var(4.0, 0)]);
        assert!((r.re - 2.0).abs() < 1e-14 && (r.eps[0] - 0.25).abs() < 1e-14);
    }
}
