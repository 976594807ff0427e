//! Basis-function declarations.
//!
//! A response's regression functions are written as a comma-separated list of
//! product terms over the design variables `x1..xp`:
//!
//! ```text
//! list   := term ("," term)*
//! term   := "1" | factor ("*" factor)*
//! factor := VAR ["^" INT]
//!         | "(" VAR [("+" | "-") NUM] ")_+" "^" INT
//! VAR    := "x" INT          (1-based variable index)
//! ```
//!
//! `(x1-0.5)_+^3` is the truncated power `max(0, x1 - 0.5)^3`. Whitespace is
//! ignored everywhere.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::DesignSpace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("parse error at byte {position}: expected {expected}, found {found}")]
    Parse {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("variable x{var} is out of range (model has {p} design variables)")]
    Range { var: usize, p: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    /// `x_var ^ exponent`
    Pow { var: usize, exponent: u32 },
    /// `max(0, x_var + shift) ^ exponent`
    TruncPow { var: usize, shift: f64, exponent: u32 },
}

impl Factor {
    pub fn var(&self) -> usize {
        match *self {
            Factor::Pow { var, .. } | Factor::TruncPow { var, .. } => var,
        }
    }

    #[inline]
    fn eval(&self, point: &[f64]) -> f64 {
        match *self {
            Factor::Pow { var, exponent } => point[var - 1].powi(exponent as i32),
            Factor::TruncPow {
                var,
                shift,
                exponent,
            } => (point[var - 1] + shift).max(0.0).powi(exponent as i32),
        }
    }

    fn sort_key(&self) -> (usize, u8) {
        match self {
            Factor::Pow { var, .. } => (*var, 0),
            Factor::TruncPow { var, .. } => (*var, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisExpr {
    Const(f64),
    Term(Vec<Factor>),
}

impl BasisExpr {
    /// Canonical form: factors ordered by variable, powers of the same
    /// variable merged.
    pub fn term(mut factors: Vec<Factor>) -> BasisExpr {
        assert!(!factors.is_empty(), "a term needs at least one factor");
        factors.sort_by_key(Factor::sort_key);
        let mut merged: Vec<Factor> = Vec::with_capacity(factors.len());
        for f in factors {
            if let (
                Some(Factor::Pow { var: pv, exponent }),
                Factor::Pow {
                    var,
                    exponent: more,
                },
            ) = (merged.last_mut(), &f)
            {
                if *pv == *var {
                    *exponent += more;
                    continue;
                }
            }
            merged.push(f);
        }
        BasisExpr::Term(merged)
    }

    #[inline]
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            BasisExpr::Const(c) => *c,
            BasisExpr::Term(fs) => fs.iter().map(|f| f.eval(point)).product(),
        }
    }

    pub fn max_var(&self) -> usize {
        match self {
            BasisExpr::Const(_) => 0,
            BasisExpr::Term(fs) => fs.iter().map(Factor::var).max().unwrap_or(0),
        }
    }

    fn factors(&self) -> &[Factor] {
        match self {
            BasisExpr::Const(_) => &[],
            BasisExpr::Term(fs) => fs,
        }
    }

    /// Sign of the term under `x_axis → -x_axis` when it follows from the
    /// exponents alone; `None` when a truncated power involves the axis.
    fn symbolic_reflection_sign(&self, axis: usize) -> Option<f64> {
        let mut sign = 1.0;
        for f in self.factors() {
            match *f {
                Factor::Pow { var, exponent } if var == axis && exponent % 2 == 1 => sign = -sign,
                Factor::Pow { .. } => {}
                Factor::TruncPow { var, .. } if var == axis => return None,
                Factor::TruncPow { .. } => {}
            }
        }
        Some(sign)
    }

    /// True when `expr(T x) = c · expr(x)` for a positive constant `c` under
    /// any positive per-axis scaling `T` with the given factors.
    pub fn is_scale_diagonal(&self, t: &[f64]) -> bool {
        self.factors().iter().all(|f| match *f {
            Factor::Pow { .. } => true,
            Factor::TruncPow { var, shift, .. } => shift == 0.0 || t[var - 1] == 1.0,
        })
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Factor::Pow { var, exponent: 1 } => write!(f, "x{var}"),
            Factor::Pow { var, exponent } => write!(f, "x{var}^{exponent}"),
            Factor::TruncPow {
                var,
                shift,
                exponent,
            } => {
                if shift > 0.0 {
                    write!(f, "(x{var}+{shift})_+^{exponent}")
                } else if shift < 0.0 {
                    write!(f, "(x{var}-{})_+^{exponent}", -shift)
                } else {
                    write!(f, "(x{var})_+^{exponent}")
                }
            }
        }
    }
}

impl fmt::Display for BasisExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisExpr::Const(c) => write!(f, "{c}"),
            BasisExpr::Term(fs) => {
                for (k, factor) in fs.iter().enumerate() {
                    if k > 0 {
                        f.write_str("*")?;
                    }
                    write!(f, "{factor}")?;
                }
                Ok(())
            }
        }
    }
}

/// Ordered basis `f_j(x)`; the order fixes the parameter order of `β_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisVector {
    exprs: Vec<BasisExpr>,
}

impl BasisVector {
    pub fn new(exprs: Vec<BasisExpr>) -> Self {
        assert!(!exprs.is_empty(), "a basis needs at least one term");
        Self { exprs }
    }

    pub fn parse(text: &str) -> Result<Self, BasisError> {
        Parser::new(text).parse_list().map(Self::new)
    }

    /// Parses and checks every variable index against `p`.
    pub fn parse_with_vars(text: &str, p: usize) -> Result<Self, BasisError> {
        let v = Self::parse(text)?;
        v.check_vars(p)?;
        Ok(v)
    }

    pub fn check_vars(&self, p: usize) -> Result<(), BasisError> {
        match self.max_var() {
            var if var > p => Err(BasisError::Range { var, p }),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn exprs(&self) -> &[BasisExpr] {
        &self.exprs
    }

    pub fn max_var(&self) -> usize {
        self.exprs.iter().map(BasisExpr::max_var).max().unwrap_or(0)
    }

    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.exprs.iter().map(|e| e.eval(point)).collect()
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(point);
        }
    }

    /// Diagonal of `Q` with `f(T_axis x) = Q f(x)` on every point of `space`,
    /// or `None` when no constant ±1 pattern exists. `axis` is 1-based.
    ///
    /// Pure monomials follow exponent parity; terms with a truncated power in
    /// the reflected variable are checked exhaustively over the grid.
    pub fn reflection_signature(&self, axis: usize, space: &DesignSpace) -> Option<Vec<f64>> {
        if !space.is_reflection_closed(axis) {
            return None;
        }
        self.exprs
            .iter()
            .map(|e| {
                e.symbolic_reflection_sign(axis)
                    .or_else(|| numeric_reflection_sign(e, axis, space))
            })
            .collect()
    }

    pub fn is_scale_diagonal(&self, t: &[f64]) -> bool {
        self.exprs.iter().all(|e| e.is_scale_diagonal(t))
    }
}

impl fmt::Display for BasisVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.exprs.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn numeric_reflection_sign(expr: &BasisExpr, axis: usize, space: &DesignSpace) -> Option<f64> {
    let (mut plus, mut minus) = (true, true);
    for i in 0..space.len() {
        let j = space.reflect_index(i, axis)?;
        let a = expr.eval(space.point(i));
        let b = expr.eval(space.point(j));
        plus &= same_value(b, a);
        minus &= same_value(b, -a);
        if !plus && !minus {
            return None;
        }
    }
    Some(if plus { 1.0 } else { -1.0 })
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn error(&mut self, expected: &str) -> BasisError {
        self.skip_ws();
        let found = match self.src[self.pos..].chars().next() {
            Some(c) => format!("'{c}'"),
            None => "end of input".to_string(),
        };
        BasisError::Parse {
            position: self.pos,
            expected: expected.to_string(),
            found,
        }
    }

    fn expect(&mut self, c: u8, what: &str) -> Result<(), BasisError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn parse_list(&mut self) -> Result<Vec<BasisExpr>, BasisError> {
        let mut out = vec![self.parse_term()?];
        loop {
            match self.peek() {
                None => return Ok(out),
                Some(b',') => {
                    self.pos += 1;
                    out.push(self.parse_term()?);
                }
                Some(_) => return Err(self.error("',', '*' or end of input")),
            }
        }
    }

    fn parse_term(&mut self) -> Result<BasisExpr, BasisError> {
        if self.peek() == Some(b'1') {
            let start = self.pos;
            self.pos += 1;
            if self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                self.pos = start;
                return Err(self.error("'1', a variable or '('"));
            }
            return Ok(BasisExpr::Const(1.0));
        }
        let mut factors = vec![self.parse_factor()?];
        while self.peek() == Some(b'*') {
            self.pos += 1;
            factors.push(self.parse_factor()?);
        }
        Ok(BasisExpr::term(factors))
    }

    fn parse_factor(&mut self) -> Result<Factor, BasisError> {
        match self.peek() {
            Some(b'x') => {
                let var = self.parse_var()?;
                let exponent = if self.peek() == Some(b'^') {
                    self.pos += 1;
                    self.parse_exponent()?
                } else {
                    1
                };
                Ok(Factor::Pow { var, exponent })
            }
            Some(b'(') => {
                self.pos += 1;
                let var = self.parse_var()?;
                let shift = match self.peek() {
                    Some(b'+') => {
                        self.pos += 1;
                        self.parse_number()?
                    }
                    Some(b'-') => {
                        self.pos += 1;
                        -self.parse_number()?
                    }
                    _ => 0.0,
                };
                self.expect(b')', "')'")?;
                self.expect(b'_', "'_+' after ')'")?;
                self.expect(b'+', "'+' after ')_'")?;
                self.expect(b'^', "'^' after ')_+'")?;
                let exponent = self.parse_exponent()?;
                Ok(Factor::TruncPow {
                    var,
                    shift,
                    exponent,
                })
            }
            _ => Err(self.error("'1', a variable or '('")),
        }
    }

    fn parse_var(&mut self) -> Result<usize, BasisError> {
        self.expect(b'x', "a variable like 'x1'")?;
        let start = self.pos;
        let n = self.digits();
        if n == 0 {
            return Err(self.error("a variable index"));
        }
        let var: usize = self.src[start..self.pos]
            .parse()
            .map_err(|_| BasisError::Parse {
                position: start,
                expected: "a variable index".into(),
                found: self.src[start..self.pos].to_string(),
            })?;
        if var == 0 {
            return Err(BasisError::Parse {
                position: start,
                expected: "a variable index of at least 1".into(),
                found: "0".into(),
            });
        }
        Ok(var)
    }

    fn parse_exponent(&mut self) -> Result<u32, BasisError> {
        self.skip_ws();
        let start = self.pos;
        if self.digits() == 0 {
            return Err(self.error("a positive integer exponent"));
        }
        match self.src[start..self.pos].parse::<u32>() {
            Ok(e) if e >= 1 => Ok(e),
            _ => Err(BasisError::Parse {
                position: start,
                expected: "a positive integer exponent".into(),
                found: self.src[start..self.pos].to_string(),
            }),
        }
    }

    fn parse_number(&mut self) -> Result<f64, BasisError> {
        self.skip_ws();
        let start = self.pos;
        let int = self.digits();
        let mut frac = 0;
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac = self.digits();
        }
        if int + frac == 0 {
            self.pos = start;
            return Err(self.error("a decimal number"));
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| BasisError::Parse {
                position: start,
                expected: "a decimal number".into(),
                found: self.src[start..self.pos].to_string(),
            })
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        self.pos - start
    }
}
