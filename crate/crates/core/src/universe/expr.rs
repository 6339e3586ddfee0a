use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::{IndexId, UniverseError};

/// Set expression over the base indexes. Complements are always taken inside T, so every
/// expression evaluates to a subset of T's members.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UniverseExpr {
    Base(IndexId),
    /// `T ∖ inner`
    Complement(Box<UniverseExpr>),
    Intersect(Box<UniverseExpr>, Box<UniverseExpr>),
    Union(Box<UniverseExpr>, Box<UniverseExpr>),
}

impl UniverseExpr {
    /// `a - b`, i.e. `a ∩ b^c`.
    pub fn difference(a: UniverseExpr, b: UniverseExpr) -> Self {
        UniverseExpr::Intersect(Box::new(a), Box::new(UniverseExpr::Complement(Box::new(b))))
    }

    pub fn union(a: UniverseExpr, b: UniverseExpr) -> Self {
        UniverseExpr::Union(Box::new(a), Box::new(b))
    }

    /// Evaluates against per-index member sets. `base` must return T's set for `IndexId::T`.
    pub fn evaluate<F>(&self, base: &F) -> BTreeSet<usize>
    where
        F: Fn(IndexId) -> BTreeSet<usize>,
    {
        let full = base(IndexId::T);
        let out = self.eval_inner(base, &full);
        out.intersection(&full).copied().collect()
    }

    fn eval_inner<F>(&self, base: &F, full: &BTreeSet<usize>) -> BTreeSet<usize>
    where
        F: Fn(IndexId) -> BTreeSet<usize>,
    {
        match self {
            UniverseExpr::Base(IndexId::T) => full.clone(),
            UniverseExpr::Base(id) => base(*id),
            UniverseExpr::Complement(e) => full.difference(&e.eval_inner(base, full)).copied().collect(),
            UniverseExpr::Intersect(a, b) => {
                let a = a.eval_inner(base, full);
                let b = b.eval_inner(base, full);
                a.intersection(&b).copied().collect()
            }
            UniverseExpr::Union(a, b) => {
                let mut a = a.eval_inner(base, full);
                a.extend(b.eval_inner(base, full));
                a
            }
        }
    }
}

/// Parses the `200-100+50` surface syntax: left-associative, `-` is set difference inside T
/// and `+` is union.
pub fn parse_universe(text: &str) -> Result<UniverseExpr, UniverseError> {
    let bytes = text.as_bytes();
    let mut pos = 0;

    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };

    let term = |pos: &mut usize| -> Result<UniverseExpr, UniverseError> {
        skip_ws(pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_alphanumeric() {
            *pos += 1;
        }
        if start == *pos {
            return Err(UniverseError::Syntax {
                position: start,
                message: "expected an index token".into(),
            });
        }
        let token = &text[start..*pos];
        let id = token.parse::<IndexId>().map_err(|_| UniverseError::UnknownIndexToken {
            position: start,
            token: token.to_string(),
        })?;
        Ok(UniverseExpr::Base(id))
    };

    let mut expr = term(&mut pos)?;
    loop {
        skip_ws(&mut pos);
        if pos == bytes.len() {
            break;
        }
        let op = bytes[pos];
        if op != b'-' && op != b'+' {
            return Err(UniverseError::Syntax {
                position: pos,
                message: format!("expected `-` or `+`, found `{}`", op as char),
            });
        }
        pos += 1;
        let rhs = term(&mut pos)?;
        expr = if op == b'-' {
            UniverseExpr::difference(expr, rhs)
        } else {
            UniverseExpr::union(expr, rhs)
        };
    }
    Ok(expr)
}

impl FromStr for UniverseExpr {
    type Err = UniverseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_universe(s)
    }
}

impl fmt::Display for UniverseExpr {
    /// Renders in the surface syntax when the tree has that shape, otherwise in set notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UniverseExpr::Base(id) => write!(f, "{id}"),
            UniverseExpr::Intersect(a, b) => match b.as_ref() {
                UniverseExpr::Complement(c) if matches!(c.as_ref(), UniverseExpr::Base(_)) => {
                    write!(f, "{a}-{c}")
                }
                _ => write!(f, "({a}&{b})"),
            },
            UniverseExpr::Union(a, b) if matches!(b.as_ref(), UniverseExpr::Base(_)) => {
                write!(f, "{a}+{b}")
            }
            UniverseExpr::Union(a, b) => write!(f, "({a}|{b})"),
            UniverseExpr::Complement(a) => write!(f, "~{a}"),
        }
    }
}
