//! Expression AST over the built-in operators, with an infix parser, a
//! canonical printer and an evaluator.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Sum,
    Diff,
    Div,
    Mult,
    Mod,
    Eq,
    Neq,
    Lt,
    Gt,
    Sqrt,
    Log,
    Pow,
    And,
    Or,
    Not,
    Xor,
}

impl Op {
    pub const ALL: [Op; 16] = [
        Op::Sum,
        Op::Diff,
        Op::Div,
        Op::Mult,
        Op::Mod,
        Op::Eq,
        Op::Neq,
        Op::Lt,
        Op::Gt,
        Op::Sqrt,
        Op::Log,
        Op::Pow,
        Op::And,
        Op::Or,
        Op::Not,
        Op::Xor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Sum => "SUM",
            Op::Diff => "DIFF",
            Op::Div => "DIV",
            Op::Mult => "MULT",
            Op::Mod => "MOD",
            Op::Eq => "EQ",
            Op::Neq => "NEQ",
            Op::Lt => "LT",
            Op::Gt => "GT",
            Op::Sqrt => "SQRT",
            Op::Log => "LOG",
            Op::Pow => "POW",
            Op::And => "AND",
            Op::Or => "OR",
            Op::Not => "NOT",
            Op::Xor => "XOR",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Sqrt | Op::Log | Op::Not => 1,
            _ => 2,
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        Op::ALL.iter().copied().find(|op| op.name().eq_ignore_ascii_case(s))
    }

    /// Applies the operator to already evaluated operands.
    pub fn apply(self, args: &[f64]) -> Result<f64, EvalError> {
        let truth = |x: f64| x != 0.0;
        let b = |c: bool| if c { 1.0 } else { 0.0 };
        let a = args[0];
        let r = match self {
            Op::Sum => a + args[1],
            Op::Diff => a - args[1],
            Op::Mult => a * args[1],
            Op::Div => {
                if args[1] == 0.0 {
                    return Err(EvalError::DivideByZero);
                }
                a / args[1]
            }
            Op::Mod => {
                if args[1] == 0.0 {
                    return Err(EvalError::DivideByZero);
                }
                a % args[1]
            }
            Op::Eq => b(a == args[1]),
            Op::Neq => b(a != args[1]),
            Op::Lt => b(a < args[1]),
            Op::Gt => b(a > args[1]),
            Op::Sqrt => {
                if a < 0.0 {
                    return Err(EvalError::Domain(self));
                }
                a.sqrt()
            }
            Op::Log => {
                if a <= 0.0 {
                    return Err(EvalError::Domain(self));
                }
                a.ln()
            }
            Op::Pow => a.powf(args[1]),
            Op::And => b(truth(a) && truth(args[1])),
            Op::Or => b(truth(a) || truth(args[1])),
            Op::Xor => b(truth(a) != truth(args[1])),
            Op::Not => b(!truth(a)),
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFinite(self))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivideByZero,
    #[error("{} argument outside its domain", .0.name())]
    Domain(Op),
    #[error("{} produced a non-finite value", .0.name())]
    NonFinite(Op),
    #[error("`{0}` has no value for this event")]
    Unbound(String),
}

/// Expression tree generic over its reference type: names as parsed, or
/// resolved slots after compilation.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr<R> {
    Const(f64),
    Ref(R),
    Apply(Op, Vec<Expr<R>>),
}

/// A reference as written in program text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Name {
    /// Bare or dotted identifier: metric, feature, parameter, packet field
    /// or payload statistic.
    Ident(String),
    /// `table[name]`: the named secondary table at the event's primary key.
    Table(String),
    /// `ctx[name]`: a value saved in the firing timeout's context.
    Ctx(String),
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Name::Ident(s) => f.write_str(s),
            Name::Table(s) => write!(f, "table[{s}]"),
            Name::Ctx(s) => write!(f, "ctx[{s}]"),
        }
    }
}

impl<R> Expr<R> {
    pub fn apply(op: Op, args: Vec<Expr<R>>) -> Self {
        debug_assert_eq!(args.len(), op.arity());
        Expr::Apply(op, args)
    }

    /// Evaluates with `lookup` resolving references. AND and OR short-circuit
    /// so a guard can protect a partial operand.
    pub fn eval<F>(&self, lookup: &mut F) -> Result<f64, EvalError>
    where
        F: FnMut(&R) -> Result<f64, EvalError>,
    {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Ref(r) => lookup(r),
            Expr::Apply(Op::And, args) => {
                if args[0].eval(lookup)? == 0.0 {
                    return Ok(0.0);
                }
                Op::And.apply(&[1.0, args[1].eval(lookup)?])
            }
            Expr::Apply(Op::Or, args) => {
                if args[0].eval(lookup)? != 0.0 {
                    return Ok(1.0);
                }
                Op::Or.apply(&[0.0, args[1].eval(lookup)?])
            }
            Expr::Apply(op, args) => {
                let mut vals = [0.0; 2];
                for (v, a) in vals.iter_mut().zip(args) {
                    *v = a.eval(lookup)?;
                }
                op.apply(&vals[..args.len()])
            }
        }
    }

    /// Rewrites every reference, stopping at the first error.
    pub fn try_map<S, E, F>(&self, f: &mut F) -> Result<Expr<S>, E>
    where
        F: FnMut(&R) -> Result<Expr<S>, E>,
    {
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Ref(r) => f(r)?,
            Expr::Apply(op, args) => Expr::Apply(*op, args.iter().map(|a| a.try_map(f)).collect::<Result<_, _>>()?),
        })
    }

    pub fn refs(&self) -> Vec<&R> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a R>) {
        match self {
            Expr::Const(_) => {}
            Expr::Ref(r) => out.push(r),
            Expr::Apply(_, args) => args.iter().for_each(|a| a.collect_refs(out)),
        }
    }
}

/// Canonical function-form rendering; parsing it yields the same tree.
impl<R: fmt::Display> fmt::Display for Expr<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Ref(r) => r.fmt(f),
            Expr::Apply(op, args) => {
                write!(f, "{}(", op.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt(f)?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {column}: {message}")]
pub struct SyntaxError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Gt,
    Le,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Caret,
    Eq,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::End => "end of input".into(),
            other => format!("{other:?}"),
        }
    }
}

struct Lexed {
    tok: Tok,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |i: usize, m: String| SyntaxError { column: i + 1, message: m };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two = |a: char, b: char| c == a && chars.get(i + 1) == Some(&b);
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let n = text.parse::<f64>().map_err(|_| err(start, format!("bad number `{text}`")))?;
            out.push(Lexed { tok: Tok::Num(n), column: start + 1 });
            continue;
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            if text.ends_with('.') {
                return Err(err(i - 1, format!("identifier `{text}` ends with a dot")));
            }
            out.push(Lexed { tok: Tok::Ident(text), column: start + 1 });
            continue;
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            while i < chars.len() && chars[i] != '"' {
                s.push(chars[i]);
                i += 1;
            }
            if i == chars.len() {
                return Err(err(start, "unterminated string".into()));
            }
            i += 1;
            out.push(Lexed { tok: Tok::Str(s), column: start + 1 });
            continue;
        } else if two('=', '=') {
            i += 1;
            Tok::EqEq
        } else if two('!', '=') {
            i += 1;
            Tok::NotEq
        } else if two('<', '=') {
            i += 1;
            Tok::Le
        } else if two('>', '=') {
            i += 1;
            Tok::Ge
        } else if two('&', '&') {
            i += 1;
            Tok::AndAnd
        } else if two('|', '|') {
            i += 1;
            Tok::OrOr
        } else {
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ',' => Tok::Comma,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '%' => Tok::Percent,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                '!' => Tok::Bang,
                '&' => Tok::AndAnd,
                '^' => Tok::Caret,
                '=' => Tok::Eq,
                _ => return Err(err(start, format!("unexpected character `{c}`"))),
            }
        };
        i += 1;
        out.push(Lexed { tok, column: start + 1 });
    }
    out.push(Lexed { tok: Tok::End, column: chars.len() + 1 });
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

fn bin(op: Op, a: Expr<Name>, b: Expr<Name>) -> Expr<Name> {
    Expr::Apply(op, vec![a, b])
}

fn not(a: Expr<Name>) -> Expr<Name> {
    Expr::Apply(Op::Not, vec![a])
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn column(&self) -> usize {
        self.toks[self.pos].column
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { column: self.column(), message: message.into() })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), SyntaxError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", self.peek().describe()))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w) && *self.peek_at(1) != Tok::LParen
    }

    fn or(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let mut lhs = self.xor()?;
        while *self.peek() == Tok::OrOr || self.is_word("OR") {
            self.bump();
            lhs = bin(Op::Or, lhs, self.xor()?);
        }
        Ok(lhs)
    }

    fn xor(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Caret || self.is_word("XOR") {
            self.bump();
            lhs = bin(Op::Xor, lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let mut lhs = self.comparison()?;
        while *self.peek() == Tok::AndAnd || self.is_word("AND") {
            self.bump();
            lhs = bin(Op::And, lhs, self.comparison()?);
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let mut lhs = self.additive()?;
        loop {
            let t = self.peek().clone();
            let make: fn(Expr<Name>, Expr<Name>) -> Expr<Name> = match t {
                Tok::EqEq => |a, b| bin(Op::Eq, a, b),
                Tok::NotEq => |a, b| bin(Op::Neq, a, b),
                Tok::Lt => |a, b| bin(Op::Lt, a, b),
                Tok::Gt => |a, b| bin(Op::Gt, a, b),
                Tok::Le => |a, b| not(bin(Op::Gt, a, b)),
                Tok::Ge => |a, b| not(bin(Op::Lt, a, b)),
                Tok::Eq => return self.error("`=` is not an operator; use `==`"),
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = make(lhs, self.additive()?);
        }
    }

    fn additive(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Op::Sum,
                Tok::Minus => Op::Diff,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = bin(op, lhs, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => Op::Mult,
                Tok::Slash => Op::Div,
                Tok::Percent => Op::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr<Name>, SyntaxError> {
        if *self.peek() == Tok::Bang || self.is_word("NOT") {
            self.bump();
            return Ok(not(self.unary()?));
        }
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => bin(Op::Diff, Expr::Const(0.0), e),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr<Name>, SyntaxError> {
        let column = self.column();
        match self.bump() {
            Tok::Num(n) => Ok(Expr::Const(n)),
            Tok::LParen => {
                let e = self.or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let Some(op) = Op::from_name(&name) else {
                        return Err(SyntaxError { column, message: format!("unknown function `{name}`") });
                    };
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.or()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "`,` or `)`")?;
                    if args.len() != op.arity() {
                        return Err(SyntaxError {
                            column,
                            message: format!("{} takes {} argument(s), got {}", op.name(), op.arity(), args.len()),
                        });
                    }
                    return Ok(Expr::Apply(op, args));
                }
                if (name == "table" || name == "ctx") && *self.peek() == Tok::LBracket {
                    self.bump();
                    let inner = match self.bump() {
                        Tok::Ident(s) => s,
                        t => return self.error(format!("expected a name inside `[]`, found {}", t.describe())),
                    };
                    self.expect(Tok::RBracket, "`]`")?;
                    return Ok(Expr::Ref(if name == "table" { Name::Table(inner) } else { Name::Ctx(inner) }));
                }
                if matches!(name.as_str(), "AND" | "OR" | "XOR" | "NOT") {
                    return Err(SyntaxError { column, message: format!("`{name}` is missing an operand") });
                }
                Ok(Expr::Ref(Name::Ident(name)))
            }
            t => Err(SyntaxError { column, message: format!("expected an operand, found {}", t.describe()) }),
        }
    }
}

/// Parses an infix expression.
pub fn parse_expr(src: &str) -> Result<Expr<Name>, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.or()?;
    if *p.peek() != Tok::End {
        return p.error(format!("unexpected {}", p.peek().describe()));
    }
    Ok(e)
}

/// Splits `NAME(arg, arg, ...)` at top-level commas. Arguments are trimmed
/// source slices; quotes and brackets nest.
pub fn split_call(src: &str) -> Result<(String, Vec<String>), SyntaxError> {
    let src = src.trim();
    let open = src.find('(').ok_or_else(|| SyntaxError { column: 1, message: format!("expected `NAME(...)` in `{src}`") })?;
    if !src.ends_with(')') {
        return Err(SyntaxError { column: src.chars().count(), message: "missing closing `)`".into() });
    }
    let name = src[..open].trim().to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(SyntaxError { column: 1, message: format!("bad action name `{name}`") });
    }
    let body = &src[open + 1..src.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0i32;
    let mut in_str = false;
    let mut cur = String::new();
    for c in body.chars() {
        match c {
            '"' => in_str = !in_str,
            '(' | '[' if !in_str => depth += 1,
            ')' | ']' if !in_str => depth -= 1,
            ',' if !in_str && depth == 0 => {
                args.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(SyntaxError { column: open + 2, message: "unbalanced `)`".into() });
        }
        cur.push(c);
    }
    if in_str || depth != 0 {
        return Err(SyntaxError { column: open + 2, message: "unbalanced quotes or brackets".into() });
    }
    if !cur.trim().is_empty() || !args.is_empty() {
        args.push(cur.trim().to_string());
    }
    if args.iter().any(String::is_empty) {
        return Err(SyntaxError { column: open + 2, message: "empty argument".into() });
    }
    Ok((name, args))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(s: &str) -> Expr<Name> {
        Expr::Ref(Name::Ident(s.into()))
    }

    fn eval_const(src: &str) -> Result<f64, EvalError> {
        parse_expr(src).unwrap().eval(&mut |n: &Name| Err(EvalError::Unbound(n.to_string())))
    }

    #[test]
    fn ratio_parses_to_div() {
        assert_eq!(parse_expr("M2/M1").unwrap(), bin(Op::Div, id("M2"), id("M1")));
    }

    #[test]
    fn conjunction_of_comparisons() {
        let e = parse_expr("F1==1 && F2<10").unwrap();
        assert_eq!(e, bin(Op::And, bin(Op::Eq, id("F1"), Expr::Const(1.0)), bin(Op::Lt, id("F2"), Expr::Const(10.0))));
        assert_eq!(parse_expr("F1 == 1 AND F2 < 10").unwrap(), e);
        assert_eq!(parse_expr("AND(EQ(F1, 1), LT(F2, 10))").unwrap(), e);
    }

    #[test]
    fn missing_argument_is_syntax_error() {
        let e = parse_expr("POW(2,)").unwrap_err();
        assert!(e.message.contains("expected an operand"), "{e}");
        assert!(parse_expr("POW(2)").unwrap_err().message.contains("takes 2"));
        assert!(parse_expr("").is_err());
        assert!(parse_expr("a = b").is_err());
        assert!(parse_expr("(a").is_err());
        assert!(parse_expr("a b").is_err());
        assert!(parse_expr("FOO(1)").is_err());
        assert!(parse_expr("x AND").is_err());
    }

    #[test]
    fn precedence_levels() {
        assert_eq!(eval_const("2 + 3 * 4"), Ok(14.0));
        assert_eq!(eval_const("(2 + 3) * 4"), Ok(20.0));
        assert_eq!(eval_const("10 - 4 - 3"), Ok(3.0));
        assert_eq!(eval_const("1 + 1 == 2"), Ok(1.0));
        assert_eq!(eval_const("1 || 0 && 0"), Ok(1.0));
        assert_eq!(eval_const("!0 + 1"), Ok(2.0));
        assert_eq!(eval_const("-2 * 3"), Ok(-6.0));
        assert_eq!(eval_const("1 ^ 1 || 1"), Ok(1.0));
        assert_eq!(eval_const("0 || 1 ^ 1"), Ok(0.0));
        assert_eq!(eval_const("2 <= 2"), Ok(1.0));
        assert_eq!(eval_const("2 >= 3"), Ok(0.0));
        assert_eq!(eval_const("7 % 3"), Ok(1.0));
        assert_eq!(eval_const("-7 % 3"), Ok(-1.0));
        assert_eq!(eval_const("2.5e1 + .5"), Ok(25.5));
    }

    #[test]
    fn operator_semantics() {
        assert_eq!(eval_const("SUM(2,3)"), Ok(5.0));
        assert_eq!(eval_const("GT(DIV(1,4), 0.25)"), Ok(0.0));
        assert_eq!(eval_const("DIV(1,0)"), Err(EvalError::DivideByZero));
        assert_eq!(eval_const("MOD(1,0)"), Err(EvalError::DivideByZero));
        assert_eq!(eval_const("SQRT(0-1)"), Err(EvalError::Domain(Op::Sqrt)));
        assert_eq!(eval_const("LOG(0)"), Err(EvalError::Domain(Op::Log)));
        assert_eq!(eval_const("POW(10, 400)"), Err(EvalError::NonFinite(Op::Pow)));
        assert_eq!(eval_const("POW(2, 10)"), Ok(1024.0));
        assert!((eval_const("LOG(2.718281828459045)").unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(eval_const("XOR(2, 0)"), Ok(1.0));
        assert_eq!(eval_const("NOT(0.5)"), Ok(0.0));
        assert_eq!(eval_const("2 & 3"), Ok(1.0));
    }

    #[test]
    fn short_circuit_guards_division() {
        assert_eq!(eval_const("0 && 1/0"), Ok(0.0));
        assert_eq!(eval_const("1 || 1/0"), Ok(1.0));
        assert_eq!(eval_const("1 && 1/0"), Err(EvalError::DivideByZero));
    }

    #[test]
    fn table_and_ctx_refs() {
        let e = parse_expr("F1 > 1.2 * table[prev] + ctx[seen]").unwrap();
        let names: Vec<String> = e.refs().iter().map(|n| n.to_string()).collect();
        assert_eq!(names, ["F1", "table[prev]", "ctx[seen]"]);
    }

    #[test]
    fn every_operator_name_parses() {
        for op in Op::ALL {
            let args = vec!["1"; op.arity()].join(", ");
            let e = parse_expr(&format!("{}({args})", op.name())).unwrap();
            assert_eq!(e, Expr::Apply(op, vec![Expr::Const(1.0); op.arity()]));
            assert!(parse_expr(&format!("{}({args})", op.name().to_lowercase())).is_ok());
        }
        for sym in ["+", "-", "*", "/", "%", "==", "!=", "<", ">", "&&", "||", "^", "&"] {
            assert!(parse_expr(&format!("a {sym} b")).is_ok(), "{sym}");
        }
        assert!(parse_expr("!a").is_ok());
    }

    #[test]
    fn printed_form_is_canonical() {
        let e = parse_expr("-x + 3 <= -2.5").unwrap();
        assert_eq!(e.to_string(), "NOT(GT(SUM(DIFF(0.0, x), 3.0), -2.5))");
    }

    #[test]
    fn call_splitting() {
        let (n, a) = split_call(r#"PRINT("a, b", F1, POW(2, 3))"#).unwrap();
        assert_eq!(n, "PRINT");
        assert_eq!(a, [r#""a, b""#, "F1", "POW(2, 3)"]);
        assert_eq!(split_call("DROP()").unwrap().1.len(), 0);
        assert!(split_call("DROP").is_err());
        assert!(split_call("X(a,)").is_err());
        assert!(split_call("X(a))").is_err());
    }

    /// Small random trees over constants and variables `a`, `b`, `c`.
    fn arb_expr() -> impl Strategy<Value = Expr<Name>> {
        let leaf = prop_oneof![
            (-4i32..5).prop_map(|c| Expr::Const(c as f64 * 0.5)),
            prop::sample::select(vec!["a", "b", "c"]).prop_map(id),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            (prop::sample::select(Op::ALL.to_vec()), inner.clone(), inner)
                .prop_map(|(op, x, y)| if op.arity() == 1 { Expr::Apply(op, vec![x]) } else { Expr::Apply(op, vec![x, y]) })
        })
    }

    /// Independent recursive evaluator written directly against f64.
    fn reference(e: &Expr<Name>, env: &[f64; 3]) -> Option<f64> {
        let r = match e {
            Expr::Const(c) => *c,
            Expr::Ref(Name::Ident(n)) => env[(n.as_bytes()[0] - b'a') as usize],
            Expr::Ref(_) => unreachable!(),
            Expr::Apply(op, args) => {
                let x = reference(&args[0], env)?;
                let t = |v: f64| v != 0.0;
                let f = |c: bool| c as u8 as f64;
                match op {
                    Op::And => return if !t(x) { Some(0.0) } else { Some(f(t(reference(&args[1], env)?))) },
                    Op::Or => return if t(x) { Some(1.0) } else { Some(f(t(reference(&args[1], env)?))) },
                    Op::Not => f(!t(x)),
                    Op::Sqrt => if x < 0.0 { return None } else { x.sqrt() },
                    Op::Log => if x <= 0.0 { return None } else { x.ln() },
                    _ => {
                        let y = reference(&args[1], env)?;
                        match op {
                            Op::Sum => x + y,
                            Op::Diff => x - y,
                            Op::Mult => x * y,
                            Op::Div => if y == 0.0 { return None } else { x / y },
                            Op::Mod => if y == 0.0 { return None } else { x % y },
                            Op::Pow => x.powf(y),
                            Op::Eq => f(x == y),
                            Op::Neq => f(x != y),
                            Op::Lt => f(x < y),
                            Op::Gt => f(x > y),
                            Op::Xor => f(t(x) ^ t(y)),
                            _ => unreachable!(),
                        }
                    }
                }
            }
        };
        r.is_finite().then_some(r)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn matches_reference_evaluator(e in arb_expr(), a in -3i32..4, b in -3i32..4, c in -3i32..4) {
            let env = [a as f64, b as f64 / 2.0, c as f64 * 1.5];
            let got = e.eval(&mut |n: &Name| match n {
                Name::Ident(s) => Ok(env[(s.as_bytes()[0] - b'a') as usize]),
                _ => unreachable!(),
            });
            let want = reference(&e, &env);
            match (got, want) {
                (Ok(g), Some(w)) => prop_assert_eq!(g.to_bits(), w.to_bits()),
                (Err(_), None) => {}
                (g, w) => prop_assert!(false, "{e}: got {g:?}, reference {w:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn print_parse_fixed_point(e in arb_expr()) {
            let once = parse_expr(&e.to_string()).unwrap();
            prop_assert_eq!(&once, &e);
            let twice = parse_expr(&once.to_string()).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.to_string(), twice.to_string());
        }

        #[test]
        fn parser_never_panics(s in "[a-c0-9()+*/<>=!&|^ ,.-]{0,24}") {
            let _ = parse_expr(&s);
        }
    }
}
