//! A small arithmetic expression language for rate, drift and initial-data
//! functions written in configuration files.
//!
//! Grammar (usual precedence, `^` right-associative and binding tighter than
//! unary minus):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Exactly one free variable is allowed per expression (`v` for functions of
//! voltage, `x` for functions of position). Constants `pi` and `e` are built in.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func1 {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func2 {
    Min,
    Max,
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var => x,
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Node::Call1(f, a) => {
                let a = a.eval(x);
                match f {
                    Func1::Exp => a.exp(),
                    Func1::Ln => a.ln(),
                    Func1::Sqrt => a.sqrt(),
                    Func1::Sin => a.sin(),
                    Func1::Cos => a.cos(),
                    Func1::Tanh => a.tanh(),
                    Func1::Abs => a.abs(),
                }
            }
            Node::Call2(f, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match f {
                    Func2::Min => a.min(b),
                    Func2::Max => a.max(b),
                }
            }
        }
    }

    /// Folds constant subtrees.
    fn simplify(self) -> Node {
        use Node::*;
        let folded = match self {
            Neg(a) => Neg(Box::new(a.simplify())),
            Add(a, b) => Add(Box::new(a.simplify()), Box::new(b.simplify())),
            Sub(a, b) => Sub(Box::new(a.simplify()), Box::new(b.simplify())),
            Mul(a, b) => Mul(Box::new(a.simplify()), Box::new(b.simplify())),
            Div(a, b) => Div(Box::new(a.simplify()), Box::new(b.simplify())),
            Pow(a, b) => Pow(Box::new(a.simplify()), Box::new(b.simplify())),
            Call1(f, a) => Call1(f, Box::new(a.simplify())),
            Call2(f, a, b) => Call2(f, Box::new(a.simplify()), Box::new(b.simplify())),
            leaf => leaf,
        };
        if folded.is_constant() {
            Const(folded.eval(0.0))
        } else {
            folded
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Node::Const(_) => true,
            Node::Var => false,
            Node::Neg(a) | Node::Call1(_, a) => a.is_constant(),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b)
            | Node::Call2(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

/// A parsed single-variable expression. Keeps its source text so models built
/// from configuration can be echoed back verbatim.
#[derive(Clone)]
pub struct Expr {
    source: String,
    variable: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?} in {})", self.source, self.variable)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.variable == other.variable
    }
}

impl Expr {
    /// Parses `source` with `variable` as the only free identifier.
    pub fn parse(source: &str, variable: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            variable,
        };
        let root = parser.expr()?;
        if parser.pos != tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected {} in `{source}`",
                tokens[parser.pos]
            )));
        }
        Ok(Self {
            source: source.trim().to_string(),
            variable: variable.to_string(),
            root: root.simplify(),
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variable(&self) -> &str {
        &self.variable
    }

    /// `Some(c)` when the expression does not depend on its variable.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(x) => write!(f, "number {x}"),
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::Op(c) => write!(f, "`{c}`"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
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
            // exponent suffix: 1e-3, 2.5E+4
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
            let value = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number `{text}` in `{src}`")))?;
            out.push(Token::Num(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!(
                "unexpected character `{c}` in `{src}`"
            )));
        }
    }
    if out.is_empty() {
        return Err(Error::Expr("empty expression".into()));
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    variable: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expr(match self.peek() {
                Some(t) => format!("expected `{op}`, found {t}"),
                None => format!("expected `{op}` at end of input"),
            }))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node> {
        let token = self
            .peek()
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match token {
            Token::Num(x) => Ok(Node::Const(x)),
            Token::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if self.eat('(') {
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    call(&name, args)
                } else if name == self.variable {
                    Ok(Node::Var)
                } else {
                    match name.as_str() {
                        "pi" => Ok(Node::Const(std::f64::consts::PI)),
                        "e" => Ok(Node::Const(std::f64::consts::E)),
                        _ => Err(Error::Expr(format!(
                            "unknown identifier `{name}` (the variable here is `{}`)",
                            self.variable
                        ))),
                    }
                }
            }
            other => Err(Error::Expr(format!("unexpected {other}"))),
        }
    }
}

fn call(name: &str, mut args: Vec<Node>) -> Result<Node> {
    let unary = match name {
        "exp" => Some(Func1::Exp),
        "ln" | "log" => Some(Func1::Ln),
        "sqrt" => Some(Func1::Sqrt),
        "sin" => Some(Func1::Sin),
        "cos" => Some(Func1::Cos),
        "tanh" => Some(Func1::Tanh),
        "abs" => Some(Func1::Abs),
        _ => None,
    };
    if let Some(f) = unary {
        if args.len() != 1 {
            return Err(Error::Expr(format!(
                "{name} takes 1 argument, got {}",
                args.len()
            )));
        }
        return Ok(Node::Call1(f, Box::new(args.pop().unwrap())));
    }
    let binary = match name {
        "min" => Func2::Min,
        "max" => Func2::Max,
        _ => return Err(Error::Expr(format!("unknown function `{name}`"))),
    };
    if args.len() != 2 {
        return Err(Error::Expr(format!(
            "{name} takes 2 arguments, got {}",
            args.len()
        )));
    }
    let b = args.pop().unwrap();
    let a = args.pop().unwrap();
    Ok(Node::Call2(binary, Box::new(a), Box::new(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, v: f64) -> f64 {
        Expr::parse(src, "v").unwrap().eval(v)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0), -4.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("1 - v - v", 1.0), -1.0);
    }

    #[test]
    fn preset_rate_formulas() {
        let alpha = Expr::parse("exp(10*(v-0.5))", "v").unwrap();
        assert!((alpha.eval(1.0) - 5f64.exp()).abs() < 1e-12);
        assert_eq!(alpha.eval(0.5), 1.0);
        assert!((ev("v/10", 0.3) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("sin(pi/2) + cos(0)", 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(ev("max(v, 1) + min(v, 1)", 3.0), 4.0);
        assert!((ev("ln(e)", 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("1.5e-3 * 2E+3", 0.0), 3.0);
    }

    #[test]
    fn constant_folding() {
        assert_eq!(
            Expr::parse("2 * exp(0) + 1", "v").unwrap().as_constant(),
            Some(3.0)
        );
        assert_eq!(Expr::parse("v * 0", "v").unwrap().as_constant(), None);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("", "v").is_err());
        assert!(Expr::parse("x + 1", "v").is_err());
        assert!(Expr::parse("exp(1, 2)", "v").is_err());
        assert!(Expr::parse("(1 + 2", "v").is_err());
        assert!(Expr::parse("1 + 2)", "v").is_err());
        assert!(Expr::parse("foo(1)", "v").is_err());
        assert!(Expr::parse("1 $ 2", "v").is_err());
    }
}
