//! Rate/reward expression language.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := NUMBER | ref | ("min"|"max"|"exp"|"log") "(" expr ("," expr)* ")"
//!         | "(" expr ")" | "-" factor
//! ref    := "m" "[" IDENT "]" | "a" ("[" INT "]")? | IDENT
//! ```
//!
//! Parsed trees keep names; [`Expr::compile`] resolves them against a
//! [`Scope`] and produces a flat postfix [`Program`] used on hot paths.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use smallvec::SmallVec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Exp,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            _ => None,
        }
    }
}

/// Expression tree with unresolved names.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `m[NAME]`
    State(String),
    /// `a[k]`; a bare `a` is component 0.
    Action(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            Tok::Eof => Ok(e),
            _ => Err(p.error("unexpected token after end of expression")),
        }
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn state(name: &str) -> Expr {
        Expr::State(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// True when the tree is the literal zero (absent rates).
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Resolve names and flatten into a postfix program.
    pub fn compile(&self, scope: &Scope<'_>) -> Result<Program> {
        let mut ops = Vec::new();
        emit(self, scope, &mut ops)?;
        let max_depth = stack_depth(&ops);
        Ok(Program { ops, max_depth })
    }

    /// Collect every name this expression references, in tree order.
    pub fn visit_refs<F: FnMut(&Expr)>(&self, f: &mut F) {
        match self {
            Expr::Num(_) => {}
            Expr::State(_) | Expr::Action(_) | Expr::Param(_) => f(self),
            Expr::Neg(e) => e.visit_refs(f),
            Expr::Bin(_, l, r) => {
                l.visit_refs(f);
                r.visit_refs(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_refs(f)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            _ => 3,
        }
    }

    fn write(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(out, "{v:?}"),
            Expr::State(n) => write!(out, "m[{n}]"),
            Expr::Action(k) => write!(out, "a[{k}]"),
            Expr::Param(n) => write!(out, "{n}"),
            Expr::Neg(e) => {
                out.write_str("-")?;
                write_wrapped(e, e.precedence() < 3, out)
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                write_wrapped(l, l.precedence() < p, out)?;
                write!(out, " {} ", op.symbol())?;
                write_wrapped(r, r.precedence() <= p, out)
            }
            Expr::Call(func, args) => {
                write!(out, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.write_str(", ")?;
                    }
                    a.write(out)?;
                }
                out.write_str(")")
            }
        }
    }
}

fn write_wrapped(e: &Expr, paren: bool, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    if paren {
        out.write_str("(")?;
        e.write(out)?;
        out.write_str(")")
    } else {
        e.write(out)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

/// Name resolution context.
#[derive(Debug, Clone, Copy)]
pub struct Scope<'a> {
    pub states: &'a [String],
    pub params: &'a BTreeMap<String, f64>,
    pub action_arity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    State(usize),
    Action(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Min(usize),
    Max(usize),
    Exp,
    Log,
}

/// Compiled expression: names resolved, parameters folded to constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    max_depth: usize,
}

impl Program {
    pub fn constant(v: f64) -> Program {
        Program {
            ops: alloc::vec![Op::Const(v)],
            max_depth: 1,
        }
    }

    /// Constant value, if the program is a bare literal.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(v)] => Some(*v),
            _ => None,
        }
    }

    pub fn eval(&self, m: &[f64], a: &[f64]) -> Result<f64> {
        if let Some(v) = self.as_constant() {
            return Ok(v);
        }
        let mut stack: SmallVec<[f64; 16]> = SmallVec::with_capacity(self.max_depth);
        for op in &self.ops {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::State(i) => stack.push(m[i]),
                Op::Action(k) => stack.push(a[k]),
                Op::Neg => {
                    let x = stack.pop().unwrap();
                    stack.push(-x);
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    let r = stack.pop().unwrap();
                    let l = stack.pop().unwrap();
                    let v = match *op {
                        Op::Add => l + r,
                        Op::Sub => l - r,
                        Op::Mul => l * r,
                        _ => {
                            if r == 0.0 {
                                return Err(Error::DivisionByZero);
                            }
                            l / r
                        }
                    };
                    stack.push(v);
                }
                Op::Min(n) | Op::Max(n) => {
                    let start = stack.len() - n;
                    let mut acc = stack[start];
                    for &x in &stack[start + 1..] {
                        acc = if matches!(op, Op::Min(_)) {
                            acc.min(x)
                        } else {
                            acc.max(x)
                        };
                    }
                    stack.truncate(start);
                    stack.push(acc);
                }
                Op::Exp => {
                    let x = stack.pop().unwrap();
                    stack.push(x.exp());
                }
                Op::Log => {
                    let x = stack.pop().unwrap();
                    if x <= 0.0 {
                        return Err(Error::LogDomain(x));
                    }
                    stack.push(x.ln());
                }
            }
        }
        Ok(stack[0])
    }
}

/// Evaluate an expression given a scope, occupancy weights and action components.
pub fn eval_expr(e: &Expr, scope: &Scope<'_>, m: &[f64], a: &[f64]) -> Result<f64> {
    e.compile(scope)?.eval(m, a)
}

fn emit(e: &Expr, scope: &Scope<'_>, ops: &mut Vec<Op>) -> Result<()> {
    match e {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::State(name) => {
            let idx = scope
                .states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::UnknownIdentifier(format!("m[{name}]")))?;
            ops.push(Op::State(idx));
        }
        Expr::Action(k) => {
            if *k >= scope.action_arity {
                return Err(Error::UnknownIdentifier(format!("a[{k}]")));
            }
            ops.push(Op::Action(*k));
        }
        Expr::Param(name) => {
            let v = scope
                .params
                .get(name)
                .ok_or_else(|| Error::UnknownIdentifier(name.clone()))?;
            ops.push(Op::Const(*v));
        }
        Expr::Neg(inner) => {
            emit(inner, scope, ops)?;
            ops.push(Op::Neg);
        }
        Expr::Bin(op, l, r) => {
            emit(l, scope, ops)?;
            emit(r, scope, ops)?;
            ops.push(match op {
                BinOp::Add => Op::Add,
                BinOp::Sub => Op::Sub,
                BinOp::Mul => Op::Mul,
                BinOp::Div => Op::Div,
            });
        }
        Expr::Call(func, args) => {
            for a in args {
                emit(a, scope, ops)?;
            }
            ops.push(match func {
                Func::Min => Op::Min(args.len()),
                Func::Max => Op::Max(args.len()),
                Func::Exp => Op::Exp,
                Func::Log => Op::Log,
            });
        }
    }
    Ok(())
}

fn stack_depth(ops: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in ops {
        match op {
            Op::Const(_) | Op::State(_) | Op::Action(_) => depth += 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
            Op::Min(n) | Op::Max(n) => depth -= n - 1,
            Op::Neg | Op::Exp | Op::Log => {}
        }
        max = max.max(depth);
    }
    max
}

// ---------------------------------------------------------------------------
// Lexer / parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(usize),
    Ident(String),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, column);
        if c == '\n' {
            line += 1;
            column = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut integral = true;
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            column += i - start;
            let tok = match (integral, text.parse::<usize>()) {
                (true, Ok(n)) => Tok::Int(n),
                _ => Tok::Num(text.parse::<f64>().map_err(|_| Error::Syntax {
                    line: l0,
                    column: c0,
                    message: format!("malformed number `{text}`"),
                })?),
            };
            out.push(Spanned {
                tok,
                line: l0,
                column: c0,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            column += i - start;
            out.push(Spanned {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: l0,
                column: c0,
            });
            continue;
        }
        if "+-*/()[],".contains(c) {
            out.push(Spanned {
                tok: Tok::Punct(c),
                line: l0,
                column: c0,
            });
            i += 1;
            column += 1;
            continue;
        }
        return Err(Error::Syntax {
            line: l0,
            column: c0,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str) -> Error {
        let s = &self.tokens[self.pos];
        Error::Syntax {
            line: s.line,
            column: s.column,
            message: message.to_string(),
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if *self.peek() == Tok::Punct(c) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Punct('+') => BinOp::Add,
                Tok::Punct('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Punct('*') => BinOp::Mul,
                Tok::Punct('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.next();
                Ok(Expr::Num(v))
            }
            Tok::Int(n) => {
                self.next();
                Ok(Expr::Num(n as f64))
            }
            Tok::Punct('-') => {
                self.next();
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Tok::Punct('(') => {
                self.next();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.next();
                    self.expect('(')?;
                    let mut args = alloc::vec![self.expr()?];
                    while *self.peek() == Tok::Punct(',') {
                        self.next();
                        args.push(self.expr()?);
                    }
                    let arity_ok = match func {
                        Func::Exp | Func::Log => args.len() == 1,
                        Func::Min | Func::Max => true,
                    };
                    if !arity_ok {
                        return Err(self.error(&format!("{} takes one argument", func.name())));
                    }
                    self.expect(')')?;
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "m" => {
                        self.next();
                        self.expect('[')?;
                        let state = match self.next() {
                            Tok::Ident(s) => s,
                            _ => {
                                self.pos -= 1;
                                return Err(self.error("expected state name"));
                            }
                        };
                        self.expect(']')?;
                        Ok(Expr::State(state))
                    }
                    "a" => {
                        self.next();
                        if *self.peek() == Tok::Punct('[') {
                            self.next();
                            let k = match self.next() {
                                Tok::Int(k) => k,
                                _ => {
                                    self.pos -= 1;
                                    return Err(self.error("expected action component index"));
                                }
                            };
                            self.expect(']')?;
                            Ok(Expr::Action(k))
                        } else {
                            Ok(Expr::Action(0))
                        }
                    }
                    _ => {
                        self.next();
                        Ok(Expr::Param(name))
                    }
                }
            }
            Tok::Eof => Err(self.error("unexpected end of expression")),
            Tok::Punct(c) => Err(self.error(&format!("unexpected `{c}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scope_with<'a>(states: &'a [String], params: &'a BTreeMap<String, f64>) -> Scope<'a> {
        Scope {
            states,
            params,
            action_arity: 2,
        }
    }

    fn states() -> Vec<String> {
        vec!["U".into(), "S".into()]
    }

    #[test]
    fn evaluates_simple_arithmetic() {
        let st = states();
        let params = BTreeMap::new();
        let scope = scope_with(&st, &params);
        let e = Expr::parse("1 - m[S] - a").unwrap();
        assert_eq!(eval_expr(&e, &scope, &[0.5, 0.5], &[0.0, 0.0]).unwrap(), 0.5);
        let e = Expr::parse("max(0, 0 - 1)").unwrap();
        assert_eq!(eval_expr(&e, &scope, &[0.5, 0.5], &[0.0, 0.0]).unwrap(), 0.0);
        let e = Expr::parse("exp(0)").unwrap();
        assert_eq!(eval_expr(&e, &scope, &[0.5, 0.5], &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let st = states();
        let params = BTreeMap::new();
        let scope = scope_with(&st, &params);
        let v = |s: &str| eval_expr(&Expr::parse(s).unwrap(), &scope, &[0.25, 0.75], &[2.0, 3.0]).unwrap();
        assert_eq!(v("1 + 2 * 3"), 7.0);
        assert_eq!(v("(1 + 2) * 3"), 9.0);
        assert_eq!(v("8 / 4 / 2"), 1.0);
        assert_eq!(v("-2 * 3"), -6.0);
        assert_eq!(v("2 * -3"), -6.0);
        assert_eq!(v("--1"), 1.0);
        assert_eq!(v("a[1] - a"), 1.0);
        assert_eq!(v("min(3, m[U], 2)"), 0.25);
        assert_eq!(v("1.5e1 + .5"), 15.5);
    }

    #[test]
    fn trailing_operator_is_syntax_error() {
        match Expr::parse("1 +") {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(column, 4);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(Expr::parse("(1"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("1 2"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("exp(1, 2)"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("m[1]"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("2 $ 3"), Err(Error::Syntax { column: 3, .. })));
    }

    #[test]
    fn unknown_identifiers_fail_to_compile() {
        let st = states();
        let mut params = BTreeMap::new();
        params.insert("beta".to_string(), 0.6);
        let scope = scope_with(&st, &params);
        assert!(Expr::parse("beta * m[S]").unwrap().compile(&scope).is_ok());
        assert_eq!(
            Expr::parse("m[X]").unwrap().compile(&scope),
            Err(Error::UnknownIdentifier("m[X]".into()))
        );
        assert_eq!(
            Expr::parse("gamma").unwrap().compile(&scope),
            Err(Error::UnknownIdentifier("gamma".into()))
        );
        assert!(Expr::parse("a[2]").unwrap().compile(&scope).is_err());
    }

    #[test]
    fn domain_errors() {
        let st = states();
        let params = BTreeMap::new();
        let scope = scope_with(&st, &params);
        let e = Expr::parse("1 / (m[S] - 0.75)").unwrap();
        assert_eq!(eval_expr(&e, &scope, &[0.25, 0.75], &[0.0, 0.0]), Err(Error::DivisionByZero));
        let e = Expr::parse("log(m[U] - 0.25)").unwrap();
        assert!(matches!(
            eval_expr(&e, &scope, &[0.25, 0.75], &[0.0, 0.0]),
            Err(Error::LogDomain(_))
        ));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for src in [
            "1 - (2 - 3)",
            "(1 - 2) - 3",
            "a / (b / c)",
            "-(1 + m[S]) * 2",
            "max(0, exp(-a[1]), 1e-7)",
            "2 * (3 * 4)",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(Expr::parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
