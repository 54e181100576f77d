//! Recursive-descent parser for energy expressions.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := '-'? INTEGER | '(' '-'? INTEGER ')'
//! atom     := NUMBER | 't' | 'x'k | func '(' expr ')' | '(' expr ')'
//! ```

use super::expr::{Expr, Func};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    Disallowed,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(text: &str, first_line: usize) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, first_line, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' | '\u{2212}' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line: l0, column: c0 });
            i += 1;
            col += 1;
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
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::Syntax,
                line: l0,
                column: c0,
                message: format!("malformed number `{s}`"),
            })?;
            col += i - start;
            out.push(Token { tok: Tok::Num(v, s), line: l0, column: c0 });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: l0,
                column: c0,
            });
            continue;
        }
        return Err(ParseError {
            kind: ParseErrorKind::Syntax,
            line: l0,
            column: c0,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(tok: &Token, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError { kind, line: tok.line, column: tok.column, message: message.into() }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(Self::err(&t, ParseErrorKind::Syntax, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.next();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.next();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.next();
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    let slash = self.next();
                    let rhs = self.unary()?;
                    if !rhs.is_constant() {
                        return Err(Self::err(
                            &slash,
                            ParseErrorKind::Disallowed,
                            format!("denominator `{rhs}` depends on a variable"),
                        ));
                    }
                    if rhs.eval(0.0, &[]) == 0.0 {
                        return Err(Self::err(&slash, ParseErrorKind::Disallowed, "division by zero"));
                    }
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Minus {
            self.next();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        let caret = self.next();
        let k = self.exponent()?;
        if k < 0 && !base.is_constant() {
            return Err(Self::err(
                &caret,
                ParseErrorKind::Disallowed,
                format!("negative exponent on `{base}` is a variable denominator"),
            ));
        }
        Ok(Expr::Pow(Box::new(base), k))
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let parened = self.peek().tok == Tok::LParen;
        if parened {
            self.next();
        }
        let negative = self.peek().tok == Tok::Minus;
        if negative {
            self.next();
        }
        let t = self.next();
        let k = match &t.tok {
            Tok::Num(v, text) => {
                if v.fract() != 0.0 || text.contains(['.', 'e', 'E']) || *v > i32::MAX as f64 {
                    return Err(Self::err(
                        &t,
                        ParseErrorKind::Disallowed,
                        format!("exponent `{text}` is not an integer literal"),
                    ));
                }
                *v as i32
            }
            other => {
                return Err(Self::err(
                    &t,
                    ParseErrorKind::Disallowed,
                    format!("exponent must be an integer literal, found {}", describe(other)),
                ))
            }
        };
        if parened {
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(if negative { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v, _) => Ok(Expr::Num(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(&t, name),
            other => Err(Self::err(
                &t,
                ParseErrorKind::Syntax,
                format!("expected an operand, found {}", describe(other)),
            )),
        }
    }

    fn identifier(&mut self, tok: &Token, name: &str) -> Result<Expr, ParseError> {
        if name == "t" {
            return Ok(Expr::Time);
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                let k: usize = digits.parse().unwrap_or(0);
                if k >= 1 && k <= self.dim {
                    return Ok(Expr::Var(k - 1));
                }
                return Err(Self::err(
                    tok,
                    ParseErrorKind::UnknownIdentifier,
                    format!("unknown identifier `{name}` (dimension is {})", self.dim),
                ));
            }
        }
        if let Some(func) = Func::from_name(name) {
            self.expect(Tok::LParen, "`(` after function name")?;
            let arg = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if matches!(name, "log" | "ln" | "sqrt" | "abs" | "tan" | "atan" | "asin" | "acos") {
            return Err(Self::err(
                tok,
                ParseErrorKind::Disallowed,
                format!("function `{name}` is not admitted (not C3 on the whole domain)"),
            ));
        }
        Err(Self::err(tok, ParseErrorKind::UnknownIdentifier, format!("unknown identifier `{name}`")))
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(_, s) => format!("number `{s}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses `text` as an energy in the variables `t, x1..x{dim}`.
pub fn parse_energy(text: &str, dim: usize) -> Result<Expr, ParseError> {
    parse_energy_at(text, dim, 1, 0)
}

/// Like [`parse_energy`], reporting positions relative to a line and column
/// offset inside a larger file.
pub fn parse_energy_at(
    text: &str,
    dim: usize,
    line: usize,
    column_offset: usize,
) -> Result<Expr, ParseError> {
    let shift = |mut e: ParseError| {
        if e.line == line {
            e.column += column_offset;
        }
        e
    };
    let toks = tokenize(text, line).map_err(shift)?;
    if toks.len() == 1 {
        return Err(shift(ParseError {
            kind: ParseErrorKind::Syntax,
            line,
            column: 1,
            message: "empty expression".into(),
        }));
    }
    let mut p = Parser { toks, pos: 0, dim };
    let e = p.expr().map_err(shift)?;
    let rest = p.next();
    if rest.tok != Tok::End {
        return Err(shift(Parser::err(
            &rest,
            ParseErrorKind::Syntax,
            format!("unexpected {}", describe(&rest.tok)),
        )));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilted_double_well_additive_terms() {
        let e = parse_energy("x1^4/4 - x1^2/2 - t*x1", 1).unwrap();
        assert_eq!(e.additive_terms(), 3);
        let e = parse_energy("x1^4/4 - x1^2/2 - t*x1 + 1", 1).unwrap();
        assert_eq!(e.additive_terms(), 4);
    }

    #[test]
    fn out_of_range_variable() {
        let err = parse_energy("x2", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier);
        assert_eq!((err.line, err.column), (1, 1));
    }

    #[test]
    fn variable_denominator_rejected() {
        let err = parse_energy("1/(1+x1^2)", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Disallowed);
        assert_eq!(err.column, 2);
        assert_eq!(parse_energy("x1^-2", 1).unwrap_err().kind, ParseErrorKind::Disallowed);
        assert_eq!(parse_energy("x1^2.5", 1).unwrap_err().kind, ParseErrorKind::Disallowed);
        assert_eq!(parse_energy("x1^x1", 1).unwrap_err().kind, ParseErrorKind::Disallowed);
        assert_eq!(parse_energy("log(x1)", 1).unwrap_err().kind, ParseErrorKind::Disallowed);
        assert_eq!(parse_energy("x1/(2-2)", 1).unwrap_err().kind, ParseErrorKind::Disallowed);
    }

    #[test]
    fn constant_denominators_and_exponents_allowed() {
        let e = parse_energy("x1/(2*3) + 2^-1*t + (x1+1)^(2)", 1).unwrap();
        let v = e.eval(1.0, &[3.0]);
        assert!((v - (0.5 + 0.5 + 16.0)).abs() < 1e-14);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_energy("x1 + * 2", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.column, 6);
        let err = parse_energy("sin(x1", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        let err = parse_energy("  ", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        let err = parse_energy("foo + x1", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = parse_energy("-x1^2", 1).unwrap();
        assert_eq!(e.eval(0.0, &[3.0]), -9.0);
        let e = parse_energy("2*-x1", 1).unwrap();
        assert_eq!(e.eval(0.0, &[3.0]), -6.0);
    }
}
