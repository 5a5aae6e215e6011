use edgelog::{parse_facts_as, Const, FactFormat, Pattern};

// Stands in for a wildcard so the fact parser can read the pattern.
const WILDCARD: &str = "urn:edgelog:wildcard";

/// Parses `p(s, o)` or `C(x)` where any argument may be `?` or `?name`.
pub fn parse_pattern(text: &str) -> Result<Pattern, String> {
    let text = text.trim().trim_end_matches('.').trim();
    let (pred, rest) = text
        .split_once('(')
        .ok_or_else(|| format!("expected p(s, o) or C(x), got '{text}'"))?;
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("missing ')' in '{text}'"))?;
    let args: Vec<String> = args
        .split(',')
        .map(|a| {
            let a = a.trim();
            if a.starts_with('?') {
                format!("<{WILDCARD}>")
            } else {
                a.to_string()
            }
        })
        .collect();
    let line = format!("{}({}).", pred.trim(), args.join(", "));
    let fact = parse_facts_as(&line, FactFormat::Datalog)
        .map_err(|e| e.to_string())?
        .pop()
        .ok_or_else(|| "empty pattern".to_string())?;
    let wildcard = Const::iri(WILDCARD);
    let bound = |c: Const| (c != wildcard).then_some(c);
    if fact.p == wildcard {
        return Err("the predicate must be a constant".into());
    }
    Ok(Pattern::new(fact.p, bound(fact.s), bound(fact.o)))
}
