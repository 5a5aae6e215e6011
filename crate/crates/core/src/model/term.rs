//! Constants, variables and terms.
//!
//! Constants are interned process-wide: a [`Const`] is a copyable handle and
//! two constants are equal iff they denote the same IRI, string, or number.

use std::fmt;
use std::sync::{Arc, LazyLock, RwLock};

use rustc_hash::FxHashMap;

/// Reserved predicate used to canonicalize unary atoms `C(x)` into
/// `(x, rdf:type, C)`.
pub const RDF_TYPE: &str = "rdf:type";

const RDF_TYPE_FULL: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Key {
    Iri(Arc<str>),
    Str(Arc<str>),
    Num(u64),
}

#[derive(Default)]
struct Dictionary {
    values: Vec<Key>,
    index: FxHashMap<Key, u32>,
}

static DICTIONARY: LazyLock<RwLock<Dictionary>> = LazyLock::new(Default::default);

fn intern(key: Key) -> Const {
    if let Some(&id) = DICTIONARY.read().unwrap().index.get(&key) {
        return Const(id);
    }
    let mut dict = DICTIONARY.write().unwrap();
    if let Some(&id) = dict.index.get(&key) {
        return Const(id);
    }
    let id = u32::try_from(dict.values.len()).expect("constant dictionary overflow");
    dict.values.push(key.clone());
    dict.index.insert(key, id);
    Const(id)
}

/// An interned ground value: IRI, string literal, or finite number.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Const(u32);

/// The decoded value behind a [`Const`].
#[derive(Clone, Debug, PartialEq)]
pub enum ConstValue {
    Iri(Arc<str>),
    Str(Arc<str>),
    Num(f64),
}

impl Const {
    pub fn iri(name: &str) -> Const {
        let name = if name == RDF_TYPE_FULL { RDF_TYPE } else { name };
        intern(Key::Iri(name.into()))
    }

    pub fn string(text: &str) -> Const {
        intern(Key::Str(text.into()))
    }

    /// Returns `None` for NaN and infinities.
    pub fn number(value: f64) -> Option<Const> {
        if !value.is_finite() {
            return None;
        }
        // -0.0 and 0.0 are one constant.
        let value = if value == 0.0 { 0.0 } else { value };
        Some(intern(Key::Num(value.to_bits())))
    }

    pub fn rdf_type() -> Const {
        static RDF: LazyLock<Const> = LazyLock::new(|| Const::iri(RDF_TYPE));
        *RDF
    }

    pub fn value(self) -> ConstValue {
        match &DICTIONARY.read().unwrap().values[self.0 as usize] {
            Key::Iri(s) => ConstValue::Iri(s.clone()),
            Key::Str(s) => ConstValue::Str(s.clone()),
            Key::Num(bits) => ConstValue::Num(f64::from_bits(*bits)),
        }
    }

    pub fn as_number(self) -> Option<f64> {
        match DICTIONARY.read().unwrap().values[self.0 as usize] {
            Key::Num(bits) => Some(f64::from_bits(bits)),
            _ => None,
        }
    }

    pub fn is_number(self) -> bool {
        self.as_number().is_some()
    }

    /// Renders the constant as an N-Triples term.
    pub fn to_ntriples(self) -> String {
        match self.value() {
            ConstValue::Iri(s) => format!("<{s}>"),
            ConstValue::Str(s) => quote(&s),
            ConstValue::Num(n) => format_number(n),
        }
    }

    /// Total order on values (IRIs, then numbers, then strings), used where
    /// output must not depend on interning order.
    pub fn cmp_value(self, other: Const) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        if self == other {
            return Ordering::Equal;
        }
        match (self.value(), other.value()) {
            (ConstValue::Iri(a), ConstValue::Iri(b)) => a.cmp(&b),
            (ConstValue::Num(a), ConstValue::Num(b)) => a.total_cmp(&b),
            (ConstValue::Str(a), ConstValue::Str(b)) => a.cmp(&b),
            (ConstValue::Iri(_), _) => Ordering::Less,
            (_, ConstValue::Iri(_)) => Ordering::Greater,
            (ConstValue::Num(_), _) => Ordering::Less,
            (_, ConstValue::Num(_)) => Ordering::Greater,
        }
    }
}

pub(crate) fn format_number(n: f64) -> String {
    format!("{n}")
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// True when `name` can be written bare in the rule language without being
/// read as a variable or keyword.
pub(crate) fn is_bare_constant(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    let bytes = name.as_bytes();
    if bytes[bytes.len() - 1] == b':' {
        return false;
    }
    if matches!(
        name.to_ascii_lowercase().as_str(),
        "not" | "and" | "bind" | "comp" | "aggregate" | "on" | "with" | "as" | "abs"
    ) {
        return false;
    }
    name.chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ':')
}

impl fmt::Display for Const {
    /// Rule-language rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            ConstValue::Iri(s) if is_bare_constant(&s) => f.write_str(&s),
            ConstValue::Iri(s) => write!(f, "<{s}>"),
            ConstValue::Str(s) => f.write_str(&quote(&s)),
            ConstValue::Num(n) => f.write_str(&format_number(n)),
        }
    }
}

impl fmt::Debug for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A rule variable, written `X` or `?x`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Var {
        Var(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// Variable names begin with an uppercase letter or `?`.
    pub fn is_valid_name(name: &str) -> bool {
        match name.chars().next() {
            Some('?') => name.len() > 1,
            Some(c) => c.is_ascii_uppercase(),
            None => false,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    Const(Const),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Var::new(name))
    }

    pub fn iri(name: &str) -> Term {
        Term::Const(Const::iri(name))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<Const> {
        match self {
            Term::Const(c) => Some(*c),
            Term::Var(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => v.fmt(f),
            Term::Const(c) => c.fmt(f),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
