//! Plain-text polynomial format used by configuration files.
//!
//! A polynomial is a signed sum of terms `coef * x1^a y1^b xi1^c eta1^d`.
//! The printer always emits canonical form (terms in exponent order, the
//! shortest round-trip decimal for every coefficient), so printing and
//! re-parsing reproduces the coefficients bit for bit. The parser is more
//! lenient: the coefficient may be omitted, factors may be separated by
//! spaces or `*`, and repeated terms are summed.

use std::fmt::Write as _;

use super::{Ambient, Exponents, Polynomial};
use crate::error::{Error, Result};

pub(super) fn format_polynomial(p: &Polynomial) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let amb = p.ambient();
    let mut out = String::new();
    for (i, (e, c)) in p.terms().enumerate() {
        let negative = c.is_sign_negative();
        match (i, negative) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        out.push_str(&format_coefficient(c.abs()));
        let mut first = true;
        for (v, &k) in e.iter().enumerate() {
            if k == 0 {
                continue;
            }
            out.push_str(if first { " * " } else { " " });
            first = false;
            out.push_str(&amb.var_name(v));
            if k > 1 {
                let _ = write!(out, "^{k}");
            }
        }
    }
    out
}

fn format_coefficient(c: f64) -> String {
    if (1e-4..=1e15).contains(&c) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

/// Parses the text format into a polynomial on `ambient`.
///
/// ```
/// use neklab_core::polyalg::{parse_polynomial, Ambient};
/// let p = parse_polynomial("0.5 * x1^2 + 0.5 * y1^2", Ambient::new(1, 0)).unwrap();
/// assert_eq!(p.len(), 2);
/// assert_eq!(parse_polynomial(&p.to_string(), Ambient::new(1, 0)).unwrap(), p);
/// ```
pub fn parse_polynomial(text: &str, ambient: Ambient) -> Result<Polynomial> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        ambient,
    };
    let terms = parser.polynomial()?;
    Polynomial::from_terms(ambient, terms)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    ambient: Ambient,
}

impl Parser<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn polynomial(&mut self) -> Result<Vec<(Exponents, f64)>> {
        let mut terms = Vec::new();
        self.skip_ws();
        if self.peek().is_none() {
            return self.err("empty polynomial");
        }
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            _ => {}
        }
        loop {
            self.skip_ws();
            let (e, c) = self.term()?;
            terms.push((e, sign * c));
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(b) => return self.err(format!("expected '+' or '-', found '{}'", b as char)),
            }
            self.pos += 1;
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<(Exponents, f64)> {
        let mut exps = vec![0u16; self.ambient.nvars()];
        let coefficient = match self.peek() {
            Some(b) if b.is_ascii_digit() || b == b'.' => {
                let c = self.number()?;
                self.skip_ws();
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    self.skip_ws();
                    self.factor(&mut exps)?;
                } else if matches!(self.peek(), Some(b) if b.is_ascii_alphabetic()) {
                    self.factor(&mut exps)?;
                } else {
                    return Ok((exps, c));
                }
                c
            }
            Some(b) if b.is_ascii_alphabetic() => {
                self.factor(&mut exps)?;
                1.0
            }
            _ => return self.err("expected a coefficient or a variable"),
        };
        loop {
            let save = self.pos;
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    self.skip_ws();
                    self.factor(&mut exps)?;
                }
                Some(b) if b.is_ascii_alphabetic() => self.factor(&mut exps)?,
                _ => {
                    self.pos = save;
                    break;
                }
            }
        }
        Ok((exps, coefficient))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit() || b == b'.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mut look = self.pos + 1;
            if matches!(self.src.get(look), Some(b'+' | b'-')) {
                look += 1;
            }
            if matches!(self.src.get(look), Some(b) if b.is_ascii_digit()) {
                self.pos = look;
                while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.err(format!("invalid number '{s}'"))
            }
        }
    }

    fn factor(&mut self, exps: &mut [u16]) -> Result<()> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let idx_start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        let idx_text = std::str::from_utf8(&self.src[idx_start..self.pos]).expect("ascii");
        let index: usize = match idx_text.parse() {
            Ok(i) if i >= 1 => i,
            _ => {
                self.pos = start;
                return self.err(format!("variable '{name}' needs an index starting at 1"));
            }
        };
        let amb = self.ambient;
        let var = match name {
            "x" if index <= amb.n => amb.x(index - 1),
            "y" if index <= amb.n => amb.y(index - 1),
            "xi" if index <= amb.big_n => amb.xi(index - 1),
            "eta" if index <= amb.big_n => amb.eta(index - 1),
            "x" | "y" | "xi" | "eta" => {
                self.pos = start;
                return self.err(format!(
                    "variable {name}{index} outside ambient (n={}, N={})",
                    amb.n, amb.big_n
                ));
            }
            _ => {
                self.pos = start;
                return self.err(format!("unknown variable '{name}'"));
            }
        };
        let mut power = 1u16;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let p_start = self.pos;
            while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
                self.pos += 1;
            }
            let p_text = std::str::from_utf8(&self.src[p_start..self.pos]).expect("ascii");
            power = match p_text.parse() {
                Ok(p) => p,
                Err(_) => {
                    self.pos = p_start;
                    return self.err("expected a non-negative integer exponent");
                }
            };
        }
        exps[var] += power;
        Ok(())
    }
}
