//! Textual scenario format.
//!
//! A scenario is a sequence of s-expression forms; `;` comments run to end
//! of line. Declarations (`config`, `overlay`, `point`, `interval`,
//! `rule`) set the stage, in file order, and must precede use; `event`,
//! `query`, and `expect` form the script that `run` executes. Times are
//! ticks (minutes, in the bundled files) from the single `:origin` point.
//!
//! ```text
//! (overlay base :grain 1)
//! (point birth :origin)
//! (point load :after birth :delta 10512000 10512000)
//! (point shot :after load :delta 60 60)
//! (rule shoot-kills :trigger (shoot ?x ?g) :pre ((loaded ?g))
//!                   :consequent (alive ?x) :duration 525600 :generator gen-shoot)
//! (event (shoot fred gun1) :at shot :strength (1 0))
//! (query (alive fred) :at shot)
//! (expect :for 0.012345679 :against 0.986282579 :tol 1e-9)
//! ```

use std::collections::BTreeMap;

use tbm_core::calculus::{generator_by_name, CalculusConfig};
use tbm_core::pattern::Pattern;
use tbm_core::sexpr::{parse_all, Pos, Sexpr, SexprKind};
use tbm_core::shafer::ShaferStrength;
use tbm_core::time::Extended;
use tbm_core::TbmError;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: CalculusConfig,
    pub overlays: Vec<OverlayDecl>,
    pub points: Vec<PointDecl>,
    pub intervals: Vec<IntervalDecl>,
    pub rules: Vec<RuleDecl>,
    pub script: Vec<Step>,
}

#[derive(Debug, Clone)]
pub struct OverlayDecl {
    pub name: String,
    pub grain: i64,
}

#[derive(Debug, Clone)]
pub enum Anchor {
    Origin,
    /// Exactly this many ticks after the origin.
    At(i64),
    /// Between `lo` and `hi` ticks after another named point.
    After {
        base: String,
        lo: Extended<i64>,
        hi: Extended<i64>,
    },
}

#[derive(Debug, Clone)]
pub struct PointDecl {
    pub name: String,
    pub anchor: Anchor,
}

#[derive(Debug, Clone)]
pub struct IntervalDecl {
    pub name: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone)]
pub struct RuleDecl {
    pub name: String,
    pub trigger: Pattern,
    pub pre: Vec<Pattern>,
    pub consequent: Pattern,
    pub duration: i64,
    pub generator: String,
    pub active: Option<String>,
}

#[derive(Debug, Clone)]
pub enum Step {
    Assert {
        pattern: Pattern,
        at: String,
        strength: (f64, f64),
    },
    Query {
        pattern: Pattern,
        at: String,
    },
    /// Checks the preceding query's answer; sets the exit code on failure.
    Expect {
        support_for: Option<f64>,
        support_against: Option<f64>,
        tol: f64,
    },
}

/// Overrides for [`CalculusConfig`], from `(config ...)` forms.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfigPatch {
    pub alive_lifetime: Option<i64>,
    pub loaded_lifetime: Option<i64>,
    pub born_cutoff: Option<i64>,
    pub born_evidence: Option<(f64, f64)>,
}

impl ConfigPatch {
    pub fn apply(&self, c: &mut CalculusConfig) -> Result<(), TbmError> {
        if let Some(v) = self.alive_lifetime {
            c.alive_lifetime = v;
        }
        if let Some(v) = self.loaded_lifetime {
            c.loaded_lifetime = v;
        }
        if let Some(v) = self.born_cutoff {
            c.born_cutoff = v;
        }
        if let Some((f, a)) = self.born_evidence {
            c.born_evidence = ShaferStrength::new(f, a)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Form destructuring.

struct Form<'a> {
    head: &'a str,
    pos: Pos,
    positional: Vec<&'a Sexpr>,
    keyed: Vec<(&'a str, Vec<&'a Sexpr>, Pos)>,
}

impl<'a> Form<'a> {
    fn destructure(e: &'a Sexpr) -> Result<Form<'a>, TbmError> {
        let items = e
            .as_list()
            .ok_or_else(|| e.error("expected a parenthesized form"))?;
        let head = items
            .first()
            .and_then(|h| h.as_sym())
            .ok_or_else(|| e.error("expected a form starting with a symbol"))?;
        let mut form = Form {
            head,
            pos: e.pos,
            positional: Vec::new(),
            keyed: Vec::new(),
        };
        for item in &items[1..] {
            match item.as_sym() {
                Some(s) if s.starts_with(':') => form.keyed.push((s, Vec::new(), item.pos)),
                _ => match form.keyed.last_mut() {
                    Some((_, vals, _)) => vals.push(item),
                    None => form.positional.push(item),
                },
            }
        }
        Ok(form)
    }

    fn err(&self, msg: impl Into<String>) -> TbmError {
        TbmError::Parse {
            line: self.pos.line,
            col: self.pos.col,
            msg: msg.into(),
        }
    }

    fn allow_keys(&self, allowed: &[&str]) -> Result<(), TbmError> {
        for (k, _, pos) in &self.keyed {
            if !allowed.contains(k) {
                return Err(TbmError::Parse {
                    line: pos.line,
                    col: pos.col,
                    msg: format!("unknown keyword `{k}` in `{}` form", self.head),
                });
            }
        }
        Ok(())
    }

    fn values(&self, key: &str) -> Option<&[&'a Sexpr]> {
        self.keyed
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, v, _)| v.as_slice())
    }

    fn flag(&self, key: &str) -> bool {
        self.values(key).is_some()
    }

    fn one(&self, key: &str) -> Result<&'a Sexpr, TbmError> {
        match self.values(key) {
            Some([v]) => Ok(v),
            Some(_) => Err(self.err(format!("`{key}` takes exactly one value"))),
            None => Err(self.err(format!("`{}` form needs `{key}`", self.head))),
        }
    }

    fn opt(&self, key: &str) -> Result<Option<&'a Sexpr>, TbmError> {
        match self.values(key) {
            Some([v]) => Ok(Some(v)),
            Some(_) => Err(self.err(format!("`{key}` takes exactly one value"))),
            None => Ok(None),
        }
    }

    fn positional(&self, n: usize, what: &str) -> Result<&'a Sexpr, TbmError> {
        self.positional
            .get(n)
            .copied()
            .ok_or_else(|| self.err(format!("`{}` form needs {what}", self.head)))
    }
}

fn as_i64(e: &Sexpr) -> Result<i64, TbmError> {
    match e.kind {
        SexprKind::Int(v) => Ok(v),
        _ => Err(e.error("expected an integer")),
    }
}

fn as_f64(e: &Sexpr) -> Result<f64, TbmError> {
    match e.kind {
        SexprKind::Int(v) => Ok(v as f64),
        SexprKind::Float(v) => Ok(v),
        _ => Err(e.error("expected a number")),
    }
}

fn as_ext(e: &Sexpr) -> Result<Extended<i64>, TbmError> {
    match &e.kind {
        SexprKind::Int(v) => Ok(Extended::Finite(*v)),
        SexprKind::Sym(s) if s == "-inf" => Ok(Extended::NegInf),
        SexprKind::Sym(s) if s == "+inf" => Ok(Extended::PosInf),
        _ => Err(e.error("expected an integer, `-inf`, or `+inf`")),
    }
}

fn as_name(e: &Sexpr) -> Result<&str, TbmError> {
    match e.as_sym() {
        Some(s) if !s.starts_with(':') && !s.starts_with('?') => Ok(s),
        _ => Err(e.error("expected a name")),
    }
}

fn as_strength(e: &Sexpr) -> Result<(f64, f64), TbmError> {
    let items = e
        .as_list()
        .ok_or_else(|| e.error("expected a (for against) strength pair"))?;
    if items.len() != 2 {
        return Err(e.error("expected a (for against) strength pair"));
    }
    let f = as_f64(&items[0])?;
    let a = as_f64(&items[1])?;
    ShaferStrength::new(f, a).map_err(|err| e.error(err.to_string()))?;
    Ok((f, a))
}

// ---------------------------------------------------------------------------
// The parser proper.

#[derive(Clone, Copy, PartialEq)]
enum NameKind {
    Overlay,
    Point,
    Interval,
    Rule,
}

struct Names(BTreeMap<String, NameKind>);

impl Names {
    fn declare(&mut self, e: &Sexpr, kind: NameKind) -> Result<String, CliError> {
        let name = as_name(e)?;
        if self.0.contains_key(name) {
            return Err(CliError::DuplicateName {
                name: name.into(),
                line: e.pos.line,
                col: e.pos.col,
            });
        }
        self.0.insert(name.into(), kind);
        Ok(name.into())
    }

    fn resolve(&self, e: &Sexpr, kind: NameKind) -> Result<String, CliError> {
        let name = as_name(e)?;
        match self.0.get(name) {
            Some(k) if *k == kind => Ok(name.into()),
            _ => Err(CliError::UndefinedName {
                name: name.into(),
                line: e.pos.line,
                col: e.pos.col,
            }),
        }
    }
}

fn parse_config_form(form: &Form, patch: &mut ConfigPatch) -> Result<(), TbmError> {
    form.allow_keys(&[":alive-lifetime", ":loaded-lifetime", ":born-cutoff", ":born-evidence"])?;
    if let Some(v) = form.opt(":alive-lifetime")? {
        patch.alive_lifetime = Some(as_i64(v)?);
    }
    if let Some(v) = form.opt(":loaded-lifetime")? {
        patch.loaded_lifetime = Some(as_i64(v)?);
    }
    if let Some(v) = form.opt(":born-cutoff")? {
        patch.born_cutoff = Some(as_i64(v)?);
    }
    if let Some(v) = form.opt(":born-evidence")? {
        patch.born_evidence = Some(as_strength(v)?);
    }
    Ok(())
}

/// Parse a file containing only `(config ...)` forms.
pub fn parse_config_file(text: &str) -> Result<ConfigPatch, CliError> {
    let mut patch = ConfigPatch::default();
    for e in parse_all(text)? {
        let form = Form::destructure(&e)?;
        if form.head != "config" {
            return Err(form.err("only `config` forms are allowed here").into());
        }
        parse_config_form(&form, &mut patch)?;
    }
    Ok(patch)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let mut sc = Scenario {
        config: CalculusConfig::default(),
        overlays: Vec::new(),
        points: Vec::new(),
        intervals: Vec::new(),
        rules: Vec::new(),
        script: Vec::new(),
    };
    let mut names = Names(BTreeMap::new());
    let mut origin_at: Option<Pos> = None;
    let mut patch = ConfigPatch::default();

    for e in parse_all(text)? {
        let form = Form::destructure(&e)?;
        match form.head {
            "config" => parse_config_form(&form, &mut patch)?,
            "overlay" => {
                form.allow_keys(&[":grain"])?;
                let name = names.declare(form.positional(0, "a name")?, NameKind::Overlay)?;
                let grain = as_i64(form.one(":grain")?)?;
                sc.overlays.push(OverlayDecl { name, grain });
            }
            "point" => {
                form.allow_keys(&[":origin", ":at", ":after", ":delta"])?;
                let name = names.declare(form.positional(0, "a name")?, NameKind::Point)?;
                let anchor = if form.flag(":origin") {
                    if let Some(prev) = origin_at {
                        return Err(TbmError::Parse {
                            line: form.pos.line,
                            col: form.pos.col,
                            msg: format!(
                                "a second origin point; the first is at line {}, column {}",
                                prev.line, prev.col
                            ),
                        }
                        .into());
                    }
                    origin_at = Some(form.pos);
                    Anchor::Origin
                } else if let Some(t) = form.opt(":at")? {
                    if origin_at.is_none() {
                        return Err(form.err("`:at` needs the origin point declared first").into());
                    }
                    Anchor::At(as_i64(t)?)
                } else if form.flag(":after") {
                    let base = names.resolve(form.one(":after")?, NameKind::Point)?;
                    let delta = form
                        .values(":delta")
                        .ok_or_else(|| form.err("`:after` needs `:delta LO HI`"))?;
                    let [lo, hi] = delta else {
                        return Err(form.err("`:delta` takes exactly two values").into());
                    };
                    Anchor::After {
                        base,
                        lo: as_ext(lo)?,
                        hi: as_ext(hi)?,
                    }
                } else {
                    return Err(form
                        .err("a point needs `:origin`, `:at T`, or `:after P :delta LO HI`")
                        .into());
                };
                sc.points.push(PointDecl { name, anchor });
            }
            "interval" => {
                form.allow_keys(&[])?;
                let name = names.declare(form.positional(0, "a name")?, NameKind::Interval)?;
                let from = names.resolve(form.positional(1, "a from point")?, NameKind::Point)?;
                let to = names.resolve(form.positional(2, "a to point")?, NameKind::Point)?;
                sc.intervals.push(IntervalDecl { name, from, to });
            }
            "rule" => {
                form.allow_keys(&[":trigger", ":pre", ":consequent", ":duration", ":generator", ":active"])?;
                let name = names.declare(form.positional(0, "a name")?, NameKind::Rule)?;
                let trigger = Pattern::from_sexpr(form.one(":trigger")?)?;
                let pre = match form.opt(":pre")? {
                    None => Vec::new(),
                    Some(list) => list
                        .as_list()
                        .ok_or_else(|| list.error("`:pre` takes a list of patterns"))?
                        .iter()
                        .map(Pattern::from_sexpr)
                        .collect::<Result<_, _>>()?,
                };
                let consequent = Pattern::from_sexpr(form.one(":consequent")?)?;
                let duration = as_i64(form.one(":duration")?)?;
                let gen_e = form.one(":generator")?;
                let generator = as_name(gen_e)?.to_string();
                if generator_by_name(&generator).is_none() {
                    return Err(CliError::UnknownGenerator {
                        name: generator,
                        line: gen_e.pos.line,
                        col: gen_e.pos.col,
                    });
                }
                let active = match form.opt(":active")? {
                    None => None,
                    Some(e) => Some(names.resolve(e, NameKind::Interval)?),
                };
                sc.rules.push(RuleDecl {
                    name,
                    trigger,
                    pre,
                    consequent,
                    duration,
                    generator,
                    active,
                });
            }
            "event" => {
                form.allow_keys(&[":at", ":strength"])?;
                let pe = form.positional(0, "a fact pattern")?;
                let pattern = Pattern::from_sexpr(pe)?;
                if !pattern.is_ground() {
                    return Err(pe.error("event patterns must be ground").into());
                }
                let at = names.resolve(form.one(":at")?, NameKind::Point)?;
                let strength = as_strength(form.one(":strength")?)?;
                sc.script.push(Step::Assert {
                    pattern,
                    at,
                    strength,
                });
            }
            "query" => {
                form.allow_keys(&[":at"])?;
                let pattern = Pattern::from_sexpr(form.positional(0, "a fact pattern")?)?;
                let at = names.resolve(form.one(":at")?, NameKind::Point)?;
                sc.script.push(Step::Query { pattern, at });
            }
            "expect" => {
                form.allow_keys(&[":for", ":against", ":tol"])?;
                let follows_query = sc
                    .script
                    .iter()
                    .rev()
                    .find(|s| !matches!(s, Step::Expect { .. }))
                    .is_some_and(|s| matches!(s, Step::Query { .. }));
                if !follows_query {
                    return Err(form.err("`expect` must follow a `query`").into());
                }
                let support_for = form.opt(":for")?.map(as_f64).transpose()?;
                let support_against = form.opt(":against")?.map(as_f64).transpose()?;
                if support_for.is_none() && support_against.is_none() {
                    return Err(form.err("`expect` needs `:for` and/or `:against`").into());
                }
                let tol = form.opt(":tol")?.map(as_f64).transpose()?.unwrap_or(0.0);
                if !(tol >= 0.0) {
                    return Err(form.err("`:tol` must be nonnegative").into());
                }
                sc.script.push(Step::Expect {
                    support_for,
                    support_against,
                    tol,
                });
            }
            other => {
                return Err(form.err(format!("unknown form `{other}`")).into());
            }
        }
    }

    if origin_at.is_none() {
        return Err(TbmError::Parse {
            line: 1,
            col: 1,
            msg: "scenario declares no origin point".into(),
        }
        .into());
    }
    patch.apply(&mut sc.config)?;
    Ok(sc)
}
