//! Surface syntax for rules and facts.
//!
//! Rules, one per statement, optionally labelled:
//!
//! ```text
//! r2: p11(X, Y) :- p11(X, Z) ∧ p11(Z, Y) ∧ COMP(X, !=, Y).
//! r6: anomaly(X) :- median(X, M) ∧ temp(X, T) and BIND(abs(T - M) AS D), COMP(D, >, 5).
//! r3: count(X, Z) :- AGGREGATE(nb(X, Y) ∧ temp(Y, T)) ON X WITH COUNT(T) AS Z.
//! ```
//!
//! Facts are either N-Triples lines (`<s> <p> <o> .`) or functional
//! (`p(s, o).`, `C(s).`).

use super::rule::{
    AggOp, AggregateSpec, Atom, BinOp, Bind, Comp, Comparator, Expr, Fact, Literal, Rule, RuleId,
};
use super::term::{Const, Term, Var, RDF_TYPE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Iri(String),
    Str(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    Dot,
    Implies,
    Wedge,
    Plus,
    Minus,
    Star,
    Slash,
    Caret2,
    At(String),
    Cmp(Comparator),
}

impl Tok {
    fn ends_value(&self) -> bool {
        matches!(
            self,
            Tok::Ident(_) | Tok::Iri(_) | Tok::Str(_) | Tok::Num(_) | Tok::RParen
        )
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '?'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn tokenize(src: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out: Vec<Spanned> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let prev_value = out.last().is_some_and(|t| t.tok.ends_value());
        let push = |out: &mut Vec<Spanned>, tok| out.push(Spanned { tok, col });
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '(' => {
                push(&mut out, Tok::LParen);
                i += 1;
            }
            ')' => {
                push(&mut out, Tok::RParen);
                i += 1;
            }
            ',' => {
                push(&mut out, Tok::Comma);
                i += 1;
            }
            '∧' | '&' => {
                push(&mut out, Tok::Wedge);
                i += 1;
            }
            '*' => {
                push(&mut out, Tok::Star);
                i += 1;
            }
            '/' => {
                push(&mut out, Tok::Slash);
                i += 1;
            }
            '+' | '-' if !prev_value && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                let (n, next) = lex_number(&chars, i)?;
                push(&mut out, Tok::Num(n));
                i = next;
            }
            '+' => {
                push(&mut out, Tok::Plus);
                i += 1;
            }
            '-' => {
                push(&mut out, Tok::Minus);
                i += 1;
            }
            ':' if chars.get(i + 1) == Some(&'-') => {
                push(&mut out, Tok::Implies);
                i += 2;
            }
            '^' if chars.get(i + 1) == Some(&'^') => {
                push(&mut out, Tok::Caret2);
                i += 2;
            }
            '@' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '-') {
                    j += 1;
                }
                push(&mut out, Tok::At(chars[start..j].iter().collect()));
                i = j;
            }
            '.' => {
                push(&mut out, Tok::Dot);
                i += 1;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                push(&mut out, Tok::Cmp(Comparator::Ne));
                i += 2;
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push(&mut out, Tok::Cmp(Comparator::Ge));
                    i += 2;
                } else {
                    push(&mut out, Tok::Cmp(Comparator::Gt));
                    i += 1;
                }
            }
            '=' => {
                push(&mut out, Tok::Cmp(Comparator::Eq));
                i += 1;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    push(&mut out, Tok::Cmp(Comparator::Le));
                    i += 2;
                    continue;
                }
                // `<iri>` when a closing bracket follows before any separator.
                let mut j = i + 1;
                while j < chars.len()
                    && !chars[j].is_whitespace()
                    && !matches!(chars[j], '>' | ',' | '(' | ')' | '<')
                {
                    j += 1;
                }
                if j > i + 1 && chars.get(j) == Some(&'>') {
                    push(&mut out, Tok::Iri(chars[i + 1..j].iter().collect()));
                    i = j + 1;
                } else {
                    push(&mut out, Tok::Cmp(Comparator::Lt));
                    i += 1;
                }
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => return Err(Error::syntax(1, col, "unterminated string literal")),
                        Some('"') => break,
                        Some('\\') => {
                            let esc = chars
                                .get(j + 1)
                                .ok_or_else(|| Error::syntax(1, j + 1, "dangling escape"))?;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                other => *other,
                            });
                            j += 2;
                        }
                        Some(ch) => {
                            s.push(*ch);
                            j += 1;
                        }
                    }
                }
                push(&mut out, Tok::Str(s));
                i = j + 1;
            }
            c if c.is_ascii_digit() => {
                let (n, next) = lex_number(&chars, i)?;
                push(&mut out, Tok::Num(n));
                i = next;
            }
            c if is_ident_start(c) => {
                let mut j = i + 1;
                while j < chars.len() {
                    let ch = chars[j];
                    if is_ident_char(ch) || (ch == ':' && chars.get(j + 1).is_some_and(|&n| is_ident_char(n))) {
                        j += 1;
                    } else {
                        break;
                    }
                }
                push(&mut out, Tok::Ident(chars[i..j].iter().collect()));
                i = j;
            }
            other => {
                return Err(Error::syntax(1, col, format!("unexpected character '{other}'")));
            }
        }
    }
    Ok(out)
}

fn lex_number(chars: &[char], start: usize) -> Result<(f64, usize)> {
    let mut j = start;
    if matches!(chars[j], '+' | '-') {
        j += 1;
    }
    while j < chars.len() && chars[j].is_ascii_digit() {
        j += 1;
    }
    if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
        j += 1;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
    }
    if j < chars.len() && matches!(chars[j], 'e' | 'E') {
        let mut k = j + 1;
        if k < chars.len() && matches!(chars[k], '+' | '-') {
            k += 1;
        }
        if k < chars.len() && chars[k].is_ascii_digit() {
            while k < chars.len() && chars[k].is_ascii_digit() {
                k += 1;
            }
            j = k;
        }
    }
    let text: String = chars[start..j].iter().collect();
    let value: f64 = text
        .parse()
        .map_err(|_| Error::syntax(1, start + 1, format!("bad number '{text}'")))?;
    if !value.is_finite() {
        return Err(Error::syntax(1, start + 1, format!("number '{text}' is not finite")));
    }
    Ok((value, j))
}

const KEYWORDS: &[&str] = &[
    "not", "and", "bind", "comp", "aggregate", "on", "with", "as", "abs",
];

/// Whether `name` can be written bare as a predicate.
pub(crate) fn is_predicate_name(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphabetic() || first == '_')
        && !name.ends_with(':')
        && name.chars().all(|c| is_ident_char(c) || c == ':')
        && !KEYWORDS.contains(&name.to_ascii_lowercase().as_str())
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
            end_col: src.chars().count() + 1,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::syntax(1, self.col(), message))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword_call(&self, kw: &str) -> bool {
        self.at_keyword(kw) && self.peek_at(1) == Some(&Tok::LParen)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {}", kw.to_ascii_uppercase()))
        }
    }

    fn finish(&mut self) -> Result<()> {
        self.expect(Tok::Dot, "'.'")?;
        if self.peek().is_some() {
            return self.err("unexpected input after '.'");
        }
        Ok(())
    }

    fn var(&mut self) -> Result<Var> {
        match self.peek() {
            Some(Tok::Ident(s)) if Var::is_valid_name(s) => {
                let v = Var::new(s);
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected a variable"),
        }
    }

    fn term(&mut self) -> Result<Term> {
        let t = match self.peek() {
            Some(Tok::Ident(s)) if Var::is_valid_name(s) => Term::var(s),
            Some(Tok::Ident(s)) if KEYWORDS.contains(&s.to_ascii_lowercase().as_str()) => {
                return self.err(format!("keyword '{s}' cannot be used as a term"));
            }
            Some(Tok::Ident(s)) => Term::iri(s),
            Some(Tok::Iri(s)) => Term::iri(s),
            Some(Tok::Str(s)) => Term::Const(Const::string(s)),
            Some(Tok::Num(n)) => Term::Const(Const::number(*n).expect("lexer yields finite numbers")),
            _ => return self.err("expected a term"),
        };
        self.pos += 1;
        Ok(t)
    }

    fn predicate(&mut self) -> Result<Const> {
        let c = match self.peek() {
            Some(Tok::Ident(s)) if !s.starts_with('?') => Const::iri(s),
            Some(Tok::Iri(s)) => Const::iri(s),
            _ => return self.err("expected a predicate"),
        };
        self.pos += 1;
        Ok(c)
    }

    fn atom(&mut self) -> Result<Atom> {
        let pred = self.predicate()?;
        self.expect(Tok::LParen, "'('")?;
        let first = self.term()?;
        let atom = if self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            let second = self.term()?;
            Atom::new(pred, first, second)
        } else {
            if pred == Const::rdf_type() {
                return self.err(format!("{RDF_TYPE} takes two arguments"));
            }
            Atom::class(pred, first)
        };
        self.expect(Tok::RParen, "')'")?;
        Ok(atom)
    }

    fn at_separator(&self) -> bool {
        matches!(self.peek(), Some(Tok::Comma | Tok::Wedge)) || self.at_keyword("and")
    }

    fn literal(&mut self) -> Result<Literal> {
        if self.at_keyword("not") {
            self.pos += 1;
            return Ok(Literal::Neg(self.atom()?));
        }
        if self.keyword_call("bind") {
            self.pos += 2;
            let expr = self.expr()?;
            self.expect_keyword("as")?;
            let target = self.var()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(Literal::Bind(Bind { expr, target }));
        }
        if self.keyword_call("comp") {
            self.pos += 2;
            let left = self.term()?;
            self.expect(Tok::Comma, "','")?;
            let op = match self.next() {
                Some(Tok::Cmp(op)) => op,
                _ => {
                    self.pos -= 1;
                    return self.err("expected a comparator (>, >=, =, <=, <, !=)");
                }
            };
            self.expect(Tok::Comma, "','")?;
            let right = self.term()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(Literal::Comp(Comp { left, op, right }));
        }
        if self.keyword_call("aggregate") {
            return self.err("AGGREGATE must be the whole rule body");
        }
        Ok(Literal::Pos(self.atom()?))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(e);
        }
        if self.keyword_call("abs") {
            self.pos += 2;
            let e = self.expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(Expr::Abs(Box::new(e)));
        }
        Ok(Expr::Term(self.term()?))
    }

    fn aggregate_body(&mut self, rule: &str) -> Result<(Vec<Literal>, AggregateSpec)> {
        self.pos += 2;
        let mut body = vec![Literal::Pos(self.atom()?)];
        while self.at_separator() {
            self.pos += 1;
            body.push(Literal::Pos(self.atom()?));
        }
        self.expect(Tok::RParen, "')'")?;
        self.expect_keyword("on")?;
        let group = self.var()?;
        self.expect_keyword("with")?;
        let op_col = self.col();
        let op_name = match self.next() {
            Some(Tok::Ident(s)) => s,
            _ => return self.err("expected an aggregate operator"),
        };
        let op = AggOp::parse(&op_name).ok_or_else(|| Error::Aggregate {
            rule: rule.to_string(),
            message: format!(
                "unknown aggregate operator '{op_name}' at column {op_col} \
                 (expected MAX, MIN, AVG, COUNT, SUM or MED)"
            ),
        })?;
        self.expect(Tok::LParen, "'('")?;
        let value = self.var()?;
        self.expect(Tok::RParen, "')'")?;
        self.expect_keyword("as")?;
        let result = self.var()?;
        Ok((
            body,
            AggregateSpec {
                group,
                op,
                value,
                result,
            },
        ))
    }
}

/// Splits an optional `label:` prefix off a rule statement.
fn split_label(text: &str) -> (Option<&str>, &str, usize) {
    let trimmed = text.trim_start();
    let end = trimmed
        .char_indices()
        .find(|&(_, c)| !is_ident_char(c))
        .map_or(trimmed.len(), |(i, _)| i);
    if end == 0 || !trimmed.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        return (None, text, 0);
    }
    let rest = trimmed[end..].trim_start();
    if let Some(after) = rest.strip_prefix(':') {
        if after.starts_with(char::is_whitespace) || after.is_empty() {
            let consumed = text.len() - after.len();
            return (Some(&trimmed[..end]), after, text[..consumed].chars().count());
        }
    }
    (None, text, 0)
}

/// Parses one rule statement. Unlabelled rules get an empty id, assigned
/// when the rule is registered with an engine.
pub fn parse_rule(text: &str) -> Result<Rule> {
    let (label, body_text, offset) = split_label(text);
    let shift = |e: Error| match e {
        Error::Syntax {
            line,
            column,
            message,
        } => Error::Syntax {
            line,
            column: column + offset,
            message,
        },
        other => other,
    };
    let id = RuleId::new(label.unwrap_or(""));
    let rule_name = label.unwrap_or("<unlabelled>");
    let mut p = Parser::new(body_text).map_err(shift)?;
    let rule = (|| {
        let head = p.atom()?;
        p.expect(Tok::Implies, "':-'")?;
        let (body, aggregate) = if p.keyword_call("aggregate") {
            let (body, spec) = p.aggregate_body(rule_name)?;
            (body, Some(spec))
        } else {
            let mut body = vec![p.literal()?];
            while p.at_separator() {
                p.pos += 1;
                body.push(p.literal()?);
            }
            (body, None)
        };
        p.finish()?;
        Ok(Rule {
            id,
            head,
            body,
            aggregate,
        })
    })()
    .map_err(shift)?;
    rule.validate()?;
    Ok(rule)
}

/// Parses an aggregate rule; errors if the statement has no aggregate.
pub fn parse_aggregate_rule(text: &str) -> Result<Rule> {
    let rule = parse_rule(text)?;
    if rule.aggregate.is_none() {
        return Err(Error::Aggregate {
            rule: rule.id.to_string(),
            message: "rule has no AGGREGATE body".into(),
        });
    }
    Ok(rule)
}

fn is_comment(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('#') || t.starts_with('%') || t.starts_with("//")
}

/// Parses a rule file. A statement may span lines; it ends at a line whose
/// last character is `.`.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>> {
    let mut rules = Vec::new();
    let mut pending = String::new();
    let mut start_line = 0;
    for (idx, line) in text.lines().enumerate() {
        if pending.is_empty() && is_comment(line) {
            continue;
        }
        if pending.is_empty() {
            start_line = idx + 1;
        } else {
            pending.push(' ');
        }
        pending.push_str(line.trim_end());
        if pending.ends_with('.') {
            rules.push(parse_rule(&pending).map_err(|e| e.at_line(start_line))?);
            pending.clear();
        }
    }
    if !pending.trim().is_empty() {
        return Err(Error::syntax(
            start_line,
            pending.chars().count() + 1,
            "rule is not terminated by '.'",
        ));
    }
    Ok(rules)
}

fn ntriples_object(p: &mut Parser) -> Result<Const> {
    match p.next() {
        Some(Tok::Iri(s)) => Ok(Const::iri(&s)),
        Some(Tok::Num(n)) => Ok(Const::number(n).expect("lexer yields finite numbers")),
        Some(Tok::Str(s)) => match p.peek() {
            Some(Tok::Caret2) => {
                p.pos += 1;
                let dt = match p.next() {
                    Some(Tok::Iri(dt)) => dt,
                    _ => return p.err("expected a datatype IRI"),
                };
                let numeric = ["integer", "decimal", "double", "float", "int", "long"]
                    .iter()
                    .any(|suffix| dt.ends_with(suffix));
                if numeric {
                    match s.trim().parse::<f64>().ok().and_then(Const::number) {
                        Some(c) => Ok(c),
                        None => p.err(format!("'{s}' is not a finite number")),
                    }
                } else {
                    Ok(Const::string(&s))
                }
            }
            Some(Tok::At(_)) => {
                p.pos += 1;
                Ok(Const::string(&s))
            }
            _ => Ok(Const::string(&s)),
        },
        _ => {
            p.pos = p.pos.saturating_sub(1);
            p.err("expected an IRI, literal or number")
        }
    }
}

fn parse_ntriple(line: &str) -> Result<Fact> {
    let mut p = Parser::new(line)?;
    let s = match p.next() {
        Some(Tok::Iri(s)) => Const::iri(&s),
        _ => return Err(Error::syntax(1, 1, "expected subject IRI")),
    };
    let pred = match p.next() {
        Some(Tok::Iri(s)) => Const::iri(&s),
        _ => {
            p.pos -= 1;
            return p.err("expected predicate IRI");
        }
    };
    let o = ntriples_object(&mut p)?;
    p.finish()?;
    Ok(Fact::new(pred, s, o))
}

fn parse_functional_fact(line: &str) -> Result<Fact> {
    let mut p = Parser::new(line)?;
    let atom = p.atom()?;
    p.finish()?;
    match atom.ground() {
        Some(f) => Ok(f),
        None => Err(Error::syntax(1, 1, "facts must not contain variables")),
    }
}

/// Fact file syntax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactFormat {
    NTriples,
    Datalog,
    /// Decide per line: `<` starts an N-Triples line.
    Auto,
}

pub fn parse_facts(text: &str) -> Result<Vec<Fact>> {
    parse_facts_as(text, FactFormat::Auto)
}

pub fn parse_facts_as(text: &str, format: FactFormat) -> Result<Vec<Fact>> {
    let mut facts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        let nt = match format {
            FactFormat::NTriples => true,
            FactFormat::Datalog => false,
            FactFormat::Auto => line.trim_start().starts_with('<'),
        };
        let fact = if nt {
            parse_ntriple(line)
        } else {
            parse_functional_fact(line)
        };
        facts.push(fact.map_err(|e| e.at_line(idx + 1))?);
    }
    Ok(facts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(n: &str) -> Term {
        Term::var(n)
    }

    fn atom(p: &str, s: Term, o: Term) -> Atom {
        Atom::new(Const::iri(p), s, o)
    }

    #[test]
    fn parses_copy_rule() {
        let r = parse_rule("r1: p11(X, Y) :- p1(X, Y).").unwrap();
        assert_eq!(r.id.as_str(), "r1");
        assert_eq!(r.head, atom("p11", var("X"), var("Y")));
        assert_eq!(r.body, vec![Literal::Pos(atom("p1", var("X"), var("Y")))]);
    }

    #[test]
    fn negation_with_local_variable() {
        let r = parse_rule("p20(X, Y) :- p12(X, Y) ∧ not p13(Y, Z).").unwrap();
        let neg: Vec<_> = r.negative_body().cloned().collect();
        assert_eq!(neg, vec![atom("p13", var("Y"), var("Z"))]);
        assert_eq!(r.positive_body().count(), 1);
    }

    #[test]
    fn unbound_bind_input_is_unsafe() {
        let err = parse_rule("q(X) :- BIND(Y+1 AS X).").unwrap_err();
        assert!(matches!(err, Error::Safety { .. }), "{err:?}");
    }

    #[test]
    fn unbound_head_variable_is_unsafe() {
        let err = parse_rule("q(X, Y) :- p(X, Z).").unwrap_err();
        assert!(matches!(err, Error::Safety { .. }));
    }

    #[test]
    fn negated_only_variable_in_two_atoms_is_unsafe() {
        let err = parse_rule("q(X) :- p(X, X) ∧ not a(X, Z) ∧ not b(X, Z).").unwrap_err();
        assert!(matches!(err, Error::Safety { .. }));
        assert!(parse_rule("q(X) :- p(X, X) ∧ not a(Z, Z).").is_ok());
    }

    #[test]
    fn conjunction_spellings() {
        let a = parse_rule("t(X, Z) :- n(X, Y) ∧ n(Y, Z).").unwrap();
        let b = parse_rule("t(X, Z) :- n(X, Y) and n(Y, Z).").unwrap();
        let c = parse_rule("t(X, Z) :- n(X, Y), n(Y, Z).").unwrap();
        let d = parse_rule("t(X, Z) :- n(X, Y) AND n(Y, Z).").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(c, d);
    }

    #[test]
    fn unary_atoms_are_canonicalized() {
        let r = parse_rule("MoreThan3Neighbours(X) :- cnt(X, N) ∧ Comp(N, >=, 3).").unwrap();
        assert_eq!(r.head, Atom::class(Const::iri("MoreThan3Neighbours"), var("X")));
        assert_eq!(r.head.pred, Const::rdf_type());
        match &r.body[1] {
            Literal::Comp(c) => {
                assert_eq!(c.op, Comparator::Ge);
                assert_eq!(c.right, Term::Const(Const::number(3.0).unwrap()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bind_with_abs() {
        let r = parse_rule(
            "r6: SensorAnomalyWindTurbine(X) :- med(X, M) ∧ MoreThan3Neighbours(X) ∧ \
             temp(X, T) and bind(abs(T-M) as D) ∧ Comp(D,>,5).",
        )
        .unwrap();
        let bind = r
            .body
            .iter()
            .find_map(|l| match l {
                Literal::Bind(b) => Some(b.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(bind.target, Var::new("D"));
        assert_eq!(
            bind.expr,
            Expr::Abs(Box::new(Expr::Binary(
                BinOp::Sub,
                Box::new(Expr::Term(var("T"))),
                Box::new(Expr::Term(var("M")))
            )))
        );
    }

    #[test]
    fn bind_target_may_not_be_positive_variable() {
        let err = parse_rule("q(X, Y) :- p(X, Y) ∧ BIND(X + 1 AS Y).").unwrap_err();
        assert!(matches!(err, Error::Safety { .. }));
    }

    #[test]
    fn aggregate_rules() {
        let r = parse_aggregate_rule(
            "r3: hasNeighbourAirTemperatureMeasurementNumber(X, Z) :- aggregate( hasNeighbour(X, Y) \
             ∧ hasAirTemperatureMesurement(Y, T)) on X with count(T) as Z .",
        )
        .unwrap();
        let agg = r.aggregate.unwrap();
        assert_eq!(agg.group, Var::new("X"));
        assert_eq!(agg.op, AggOp::Count);
        assert_eq!(agg.value, Var::new("T"));
        assert_eq!(agg.result, Var::new("Z"));

        let r = parse_aggregate_rule(
            "m(X, Z) :- aggregate( nb(X, Y) ∧ t(Y, T)) on X with Med(T) as Z .",
        )
        .unwrap();
        assert_eq!(r.aggregate.unwrap().op, AggOp::Med);

        let err =
            parse_aggregate_rule("h(X,Z) :- AGGREGATE(b(X,Y)) ON X WITH MODE(Y) AS Z.").unwrap_err();
        assert!(matches!(err, Error::Aggregate { .. }), "{err:?}");

        let err = parse_aggregate_rule("h(X,Z) :- AGGREGATE(b(X,Y)) ON W WITH MAX(Y) AS Z.")
            .unwrap_err();
        assert!(matches!(err, Error::Aggregate { .. }));
        assert!(parse_aggregate_rule("h(X, Y) :- b(X, Y).").is_err());
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_rule("p(X, Y) :- q(X, Y)") {
            Err(Error::Syntax { line: 1, column, .. }) => assert_eq!(column, 19),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_rule("p(X :- q(X)."), Err(Error::Syntax { .. })));
        assert!(matches!(parse_rule("p(X) q(X)."), Err(Error::Syntax { .. })));
    }

    #[test]
    fn comparator_versus_iri() {
        let r = parse_rule("q(X) :- p(X, <http://x/y>) ∧ v(X, V) ∧ COMP(V, <, 3).").unwrap();
        assert_eq!(r.body[0], Literal::Pos(atom("p", var("X"), Term::iri("http://x/y"))));
        assert!(matches!(&r.body[2], Literal::Comp(c) if c.op == Comparator::Lt));
        let r = parse_rule("q(X) :- v(X, V) ∧ COMP(V, <=, -3).").unwrap();
        assert!(
            matches!(&r.body[1], Literal::Comp(c) if c.op == Comparator::Le && c.right == Term::Const(Const::number(-3.0).unwrap()))
        );
    }

    #[test]
    fn facts_in_both_syntaxes() {
        let facts = parse_facts(
            "# comment\n<wt1> <hasNeighbour> <wt2> .\n\np1(a, b).\n<wt1> <temp> \"20.5\"^^<http://www.w3.org/2001/XMLSchema#decimal> .\nC(a).\n<a> <name> \"x\"@en .\n",
        )
        .unwrap();
        assert_eq!(
            facts,
            vec![
                Fact::iri("hasNeighbour", "wt1", "wt2"),
                Fact::iri("p1", "a", "b"),
                Fact::new(Const::iri("temp"), Const::iri("wt1"), Const::number(20.5).unwrap()),
                Fact::new(Const::rdf_type(), Const::iri("a"), Const::iri("C")),
                Fact::new(Const::iri("name"), Const::iri("a"), Const::string("x")),
            ]
        );
    }

    #[test]
    fn variable_in_fact_is_error_with_line() {
        match parse_facts("p1(a, b).\np1(a, X).") {
            Err(Error::Syntax { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multi_line_rule_statements() {
        let rules = parse_rules(
            "r4: p12(X, Y) :- p2(X, Y).\nr5: p12(X, Y) :- p12(X, Z) ∧ p12(Z, Y)\n  ∧ COMP(X,!=, Y).\n",
        )
        .unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[1].body.len(), 3);
        assert!(parse_rules("").unwrap().is_empty());
        assert!(matches!(
            parse_rules("r1: p(X, Y) :- q(X, Y).\nr2: p(X, Y) :- q(X Y)."),
            Err(Error::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn label_detection() {
        assert_eq!(split_label("r1: p(X) :- q(X).").0, Some("r1"));
        assert_eq!(split_label("r10_new: p(X) :- q(X).").0, Some("r10_new"));
        assert_eq!(split_label("rdf:type(X, C) :- q(X, C).").0, None);
        assert_eq!(split_label("p(X) :- q(X).").0, None);
    }
}
