//! Text formats accepted on the command line.

use std::fmt;

use newton_chaos::{Interval, Polynomial, SmoothFunction};

/// Parse failure with a 1-based column into the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    pub input: String,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at column {} in '{}'",
            self.message, self.column, self.input
        )
    }
}

impl std::error::Error for SpecError {}

fn err(input: &str, column: usize, message: impl Into<String>) -> SpecError {
    SpecError {
        input: input.to_string(),
        column,
        message: message.into(),
    }
}

/// Comma-separated `f64` literals starting at byte offset `base` of `input`.
fn parse_numbers(input: &str, body: &str, base: usize) -> Result<Vec<f64>, SpecError> {
    let mut out = Vec::new();
    let mut offset = base;
    for tok in body.split(',') {
        let lead = tok.len() - tok.trim_start().len();
        let t = tok.trim();
        let col = offset + lead + 1;
        if t.is_empty() {
            return Err(err(input, col, "empty number"));
        }
        let v: f64 = t
            .parse()
            .map_err(|_| err(input, col, format!("malformed number '{t}'")))?;
        if !v.is_finite() {
            return Err(err(input, col, format!("non-finite number '{t}'")));
        }
        out.push(v);
        offset += tok.len() + 1;
    }
    Ok(out)
}

/// `poly:c0,c1,...,cn` with coefficients in ascending powers.
pub fn parse_polynomial(s: &str) -> Result<Polynomial, SpecError> {
    let lead = s.len() - s.trim_start().len();
    let body_start = match s.trim_start().strip_prefix("poly:") {
        Some(_) => lead + "poly:".len(),
        None => return Err(err(s, lead + 1, "expected 'poly:' prefix")),
    };
    let body = s[body_start..].trim_end();
    if body.trim().is_empty() {
        return Err(err(s, body_start + 1, "empty coefficient list"));
    }
    let coeffs = parse_numbers(s, body, body_start)?;
    if *coeffs.last().expect("nonempty") == 0.0 {
        let last = body_start + body.rfind(',').map(|i| i + 2).unwrap_or(1);
        return Err(err(s, last, "leading coefficient is zero"));
    }
    Polynomial::new(coeffs).map_err(|e| err(s, body_start + 1, e.to_string()))
}

pub fn parse_function_spec(s: &str, window: Option<Interval>) -> Result<SmoothFunction, SpecError> {
    let p = parse_polynomial(s)?;
    Ok(SmoothFunction::from_polynomial(
        p,
        window.unwrap_or_else(Interval::default_window),
    ))
}

/// `lo:hi` with `lo < hi`.
pub fn parse_window(s: &str) -> Result<Interval, SpecError> {
    let v = parse_colon_numbers(s, 2)?;
    if !(v[0] < v[1]) {
        return Err(err(s, 1, "window needs lo < hi"));
    }
    Ok(Interval::new(v[0], v[1]).expect("checked"))
}

/// `lo:hi:n` with an integer count `n >= 1`.
pub fn parse_range(s: &str) -> Result<(f64, f64, usize), SpecError> {
    let v = parse_colon_numbers(s, 3)?;
    let n = v[2];
    if !(n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
        let col = s.rfind(':').map(|i| i + 2).unwrap_or(1);
        return Err(err(s, col, "count must be a positive integer"));
    }
    Ok((v[0], v[1], n as usize))
}

/// `lo:hi:n` expanded into `n` evenly spaced points, ends included.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, SpecError> {
    let (lo, hi, n) = parse_range(s)?;
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

fn parse_colon_numbers(s: &str, count: usize) -> Result<Vec<f64>, SpecError> {
    let mut out = Vec::with_capacity(count);
    let mut offset = 0;
    for tok in s.split(':') {
        let v = parse_numbers(s, tok, offset)?;
        if v.len() != 1 {
            return Err(err(s, offset + 1, "expected a single number"));
        }
        out.push(v[0]);
        offset += tok.len() + 1;
    }
    if out.len() != count {
        return Err(err(
            s,
            s.len() + 1,
            format!("expected {count} ':'-separated numbers"),
        ));
    }
    Ok(out)
}

/// `a,b` for the affine map `x ↦ a·x + b`.
pub fn parse_pair(s: &str) -> Result<(f64, f64), SpecError> {
    let v = parse_numbers(s, s, 0)?;
    if v.len() != 2 {
        return Err(err(s, 1, "expected 'a,b'"));
    }
    Ok((v[0], v[1]))
}

/// `1,2,2`.
pub fn parse_symbols(s: &str) -> Result<Vec<usize>, SpecError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for tok in s.split(',') {
        let lead = tok.len() - tok.trim_start().len();
        let t = tok.trim();
        let v: usize = t
            .parse()
            .map_err(|_| err(s, offset + lead + 1, format!("bad symbol '{t}'")))?;
        if v == 0 {
            return Err(err(s, offset + lead + 1, "symbols start at 1"));
        }
        out.push(v);
        offset += tok.len() + 1;
    }
    Ok(out)
}
