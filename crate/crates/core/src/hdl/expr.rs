//! Constant folding for parameter values and packed-range bounds.

use std::collections::HashMap;

use super::lexer::{TokKind, Token};

pub(crate) type Env = HashMap<String, i64>;

/// Evaluates a constant integer expression. Returns a human-readable reason
/// on anything that is not a compile-time constant over `env`.
pub(crate) fn eval(tokens: &[Token<'_>], env: &Env) -> Result<i64, String> {
    if tokens.is_empty() {
        return Err("empty expression".into());
    }
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        env,
    };
    let v = p.ternary()?;
    if p.pos != tokens.len() {
        return Err(format!(
            "unexpected `{}` in constant expression",
            tokens[p.pos].text
        ));
    }
    Ok(v)
}

struct Parser<'t, 'a> {
    toks: &'t [Token<'a>],
    pos: usize,
    env: &'t Env,
}

// (operators, precedence) from loosest to tightest binding
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!=", "===", "!=="],
    &["<", "<=", ">", ">="],
    &["<<", ">>", "<<<", ">>>"],
    &["+", "-"],
    &["*", "/", "%"],
];

impl Parser<'_, '_> {
    fn peek(&self) -> Option<&str> {
        self.toks
            .get(self.pos)
            .filter(|t| t.kind == TokKind::Sym)
            .map(|t| t.text)
    }

    fn expect(&mut self, s: &str) -> Result<(), String> {
        if self.peek() == Some(s) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected `{s}`"))
        }
    }

    fn ternary(&mut self) -> Result<i64, String> {
        let cond = self.binary(0)?;
        if self.peek() == Some("?") {
            self.pos += 1;
            let a = self.ternary()?;
            self.expect(":")?;
            let b = self.ternary()?;
            return Ok(if cond != 0 { a } else { b });
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Result<i64, String> {
        if level == BINARY_LEVELS.len() {
            return self.power();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.peek().filter(|op| BINARY_LEVELS[level].contains(op)) {
            let op = op.to_owned();
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            lhs = apply(&op, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<i64, String> {
        let base = self.unary()?;
        if self.peek() == Some("**") {
            self.pos += 1;
            let exp = self.power()?;
            return apply("**", base, exp);
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<i64, String> {
        match self.peek() {
            Some("-") => {
                self.pos += 1;
                Ok(self.unary()?.wrapping_neg())
            }
            Some("+") => {
                self.pos += 1;
                self.unary()
            }
            Some("!") => {
                self.pos += 1;
                Ok((self.unary()? == 0) as i64)
            }
            Some("~") => {
                self.pos += 1;
                Ok(!self.unary()?)
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<i64, String> {
        let tok = *self.toks.get(self.pos).ok_or("truncated expression")?;
        self.pos += 1;
        match tok.kind {
            TokKind::Number => parse_number(tok.text),
            TokKind::Ident => self
                .env
                .get(tok.text)
                .copied()
                .ok_or_else(|| format!("`{}` is not a known constant", tok.text)),
            TokKind::SysIdent if tok.text == "$clog2" => {
                self.expect("(")?;
                let v = self.ternary()?;
                self.expect(")")?;
                Ok(clog2(v))
            }
            TokKind::Sym if tok.text == "(" => {
                let v = self.ternary()?;
                self.expect(")")?;
                Ok(v)
            }
            _ => Err(format!(
                "`{}` is not supported in a constant expression",
                tok.text
            )),
        }
    }
}

fn apply(op: &str, a: i64, b: i64) -> Result<i64, String> {
    Ok(match op {
        "+" => a.wrapping_add(b),
        "-" => a.wrapping_sub(b),
        "*" => a.wrapping_mul(b),
        "/" | "%" if b == 0 => return Err("division by zero".into()),
        "/" => a / b,
        "%" => a % b,
        "**" => {
            let e = u32::try_from(b).map_err(|_| "negative exponent")?;
            a.checked_pow(e).ok_or("exponent overflow")?
        }
        "<<" | "<<<" => a
            .checked_shl(u32::try_from(b).map_err(|_| "bad shift")?)
            .unwrap_or(0),
        ">>" | ">>>" => a
            .checked_shr(u32::try_from(b).map_err(|_| "bad shift")?)
            .unwrap_or(0),
        "&" => a & b,
        "|" => a | b,
        "^" => a ^ b,
        "&&" => (a != 0 && b != 0) as i64,
        "||" => (a != 0 || b != 0) as i64,
        "==" | "===" => (a == b) as i64,
        "!=" | "!==" => (a != b) as i64,
        "<" => (a < b) as i64,
        "<=" => (a <= b) as i64,
        ">" => (a > b) as i64,
        ">=" => (a >= b) as i64,
        _ => return Err(format!("operator `{op}` unsupported")),
    })
}

fn clog2(v: i64) -> i64 {
    if v <= 1 {
        0
    } else {
        64 - i64::from((v - 1).leading_zeros())
    }
}

pub(crate) fn parse_number(text: &str) -> Result<i64, String> {
    let clean: String = text
        .chars()
        .filter(|c| *c != '_' && !c.is_whitespace())
        .collect();
    let Some(tick) = clean.find('\'') else {
        return clean
            .parse::<i64>()
            .map_err(|_| format!("`{text}` is not an integer"));
    };
    let mut rest = &clean[tick + 1..];
    if rest.starts_with(['s', 'S']) {
        rest = &rest[1..];
    }
    let (radix, digits) = match rest.chars().next() {
        Some('b' | 'B') => (2, &rest[1..]),
        Some('o' | 'O') => (8, &rest[1..]),
        Some('d' | 'D') => (10, &rest[1..]),
        Some('h' | 'H') => (16, &rest[1..]),
        // unbased unsized literal ('0 / '1)
        Some('0') if rest.len() == 1 => return Ok(0),
        Some('1') if rest.len() == 1 => return Ok(1),
        _ => return Err(format!("`{text}` is not an integer")),
    };
    i64::from_str_radix(digits, radix).map_err(|_| format!("`{text}` has non-constant digits"))
}
