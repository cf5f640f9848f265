//! Belief patterns: trees of symbols, integers, and `?`-variables.
//!
//! Stored beliefs carry ground patterns; queries and rule templates may
//! contain variables. Matching a pattern against a ground pattern is plain
//! one-way matching; rule dispatch additionally needs full unification of
//! two open patterns (a query may itself contain variables).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::TbmError;
use crate::sexpr::{self, Sexpr, SexprKind};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Sym(String),
    Int(i64),
    Var(String),
    List(Vec<Pattern>),
}

/// Variable assignments produced by matching; keys keep their `?` sigil.
pub type Bindings = BTreeMap<String, Pattern>;

impl Pattern {
    pub fn sym(s: &str) -> Pattern {
        Pattern::Sym(s.to_string())
    }

    pub fn var(s: &str) -> Pattern {
        debug_assert!(s.starts_with('?'));
        Pattern::Var(s.to_string())
    }

    pub fn list(items: Vec<Pattern>) -> Pattern {
        Pattern::List(items)
    }

    /// Parse one pattern from text. Floats are not pattern atoms.
    pub fn parse(text: &str) -> Result<Pattern, TbmError> {
        Self::from_sexpr(&sexpr::parse_one(text)?)
    }

    pub fn from_sexpr(e: &Sexpr) -> Result<Pattern, TbmError> {
        match &e.kind {
            SexprKind::Int(i) => Ok(Pattern::Int(*i)),
            SexprKind::Float(_) => Err(e.error("floating-point atoms are not pattern atoms")),
            SexprKind::Sym(s) => {
                if s.starts_with('?') {
                    Ok(Pattern::Var(s.clone()))
                } else {
                    Ok(Pattern::Sym(s.clone()))
                }
            }
            SexprKind::List(items) => Ok(Pattern::List(
                items.iter().map(Pattern::from_sexpr).collect::<Result<_, _>>()?,
            )),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Pattern::Var(_) => false,
            Pattern::Sym(_) | Pattern::Int(_) => true,
            Pattern::List(items) => items.iter().all(Pattern::is_ground),
        }
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Pattern::Var(v) => {
                out.insert(v.as_str());
            }
            Pattern::List(items) => items.iter().for_each(|p| p.collect_vars(out)),
            _ => {}
        }
    }

    /// Head symbol used for assessor dispatch: a bare symbol, or the first
    /// element of a list when that is a symbol.
    pub fn head(&self) -> Option<&str> {
        match self {
            Pattern::Sym(s) => Some(s),
            Pattern::List(items) => match items.first() {
                Some(Pattern::Sym(s)) => Some(s),
                _ => None,
            },
            _ => None,
        }
    }

    /// One-way match of `self` (which may contain variables) against a
    /// ground pattern. Repeated variables must match equal subterms.
    pub fn match_ground(&self, ground: &Pattern) -> Option<Bindings> {
        let mut b = Bindings::new();
        if self.match_into(ground, &mut b) {
            Some(b)
        } else {
            None
        }
    }

    fn match_into(&self, ground: &Pattern, b: &mut Bindings) -> bool {
        match (self, ground) {
            (Pattern::Var(v), g) => match b.get(v) {
                Some(prev) => prev == g,
                None => {
                    b.insert(v.clone(), g.clone());
                    true
                }
            },
            (Pattern::Sym(a), Pattern::Sym(c)) => a == c,
            (Pattern::Int(a), Pattern::Int(c)) => a == c,
            (Pattern::List(xs), Pattern::List(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x.match_into(y, b))
            }
            _ => false,
        }
    }

    /// Full unification of two patterns, either of which may contain
    /// variables. Returns the unifying substitution if one exists.
    pub fn unify(&self, other: &Pattern) -> Option<Bindings> {
        let mut b = Bindings::new();
        if unify_terms(self, other, &mut b) {
            Some(b)
        } else {
            None
        }
    }

    /// Replace bound variables throughout, resolving chains of variable
    /// bindings; unbound variables stay in place.
    pub fn substitute(&self, b: &Bindings) -> Pattern {
        match self {
            Pattern::Var(v) => match b.get(v) {
                Some(t) => t.substitute(b),
                None => self.clone(),
            },
            Pattern::List(items) => {
                Pattern::List(items.iter().map(|p| p.substitute(b)).collect())
            }
            _ => self.clone(),
        }
    }
}

fn walk<'a>(mut t: &'a Pattern, b: &'a Bindings) -> &'a Pattern {
    while let Pattern::Var(v) = t {
        match b.get(v) {
            Some(next) => t = next,
            None => break,
        }
    }
    t
}

fn occurs(v: &str, t: &Pattern, b: &Bindings) -> bool {
    match walk(t, b) {
        Pattern::Var(w) => w == v,
        Pattern::List(items) => items.iter().any(|t| occurs(v, t, b)),
        _ => false,
    }
}

fn unify_terms(a: &Pattern, c: &Pattern, b: &mut Bindings) -> bool {
    let a = walk(a, b).clone();
    let c = walk(c, b).clone();
    match (&a, &c) {
        (Pattern::Var(v), Pattern::Var(w)) if v == w => true,
        (Pattern::Var(v), t) | (t, Pattern::Var(v)) => {
            if occurs(v, t, b) {
                return false;
            }
            b.insert(v.clone(), t.clone());
            true
        }
        (Pattern::Sym(x), Pattern::Sym(y)) => x == y,
        (Pattern::Int(x), Pattern::Int(y)) => x == y,
        (Pattern::List(xs), Pattern::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| unify_terms(x, y, b))
        }
        _ => false,
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Sym(s) | Pattern::Var(s) => write!(f, "{s}"),
            Pattern::Int(i) => write!(f, "{i}"),
            Pattern::List(items) => {
                write!(f, "(")?;
                for (i, p) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}
