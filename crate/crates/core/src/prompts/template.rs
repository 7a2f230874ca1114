use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use regex::Regex;

use super::PromptError;

static PLACEHOLDER: Lazy<Regex> = Lazy::new(|| Regex::new(r"\{([A-Z][A-Z0-9_]*)\}").expect("valid pattern"));

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(String),
}

/// Text with `{UPPER_CASE}` placeholders, substituted in a single pass.
///
/// A placeholder bound to `None` removes its whole line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    source: String,
    lines: Vec<Vec<Segment>>,
}

impl Template {
    pub fn parse(source: &str) -> Self {
        let lines = source.split('\n').map(parse_line).collect();
        Template { source: source.to_string(), lines }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().flatten().filter_map(|s| match s {
            Segment::Placeholder(p) => Some(p.as_str()),
            Segment::Literal(_) => None,
        })
    }

    pub fn render(&self, values: &BTreeMap<&str, Option<&str>>) -> Result<String, PromptError> {
        let mut out: Vec<String> = Vec::with_capacity(self.lines.len());
        'lines: for line in &self.lines {
            let mut buf = String::new();
            for seg in line {
                match seg {
                    Segment::Literal(s) => buf.push_str(s),
                    Segment::Placeholder(p) => match values.get(p.as_str()) {
                        Some(Some(v)) => buf.push_str(v),
                        Some(None) => continue 'lines,
                        None => return Err(PromptError::Unsubstituted(p.clone())),
                    },
                }
            }
            out.push(buf);
        }
        Ok(out.join("\n"))
    }

    /// Recovers placeholder values from rendered text. Lines whose
    /// placeholders were unbound at render time are tried as absent,
    /// preferring matches that keep the most lines.
    pub fn extract(&self, text: &str) -> Option<BTreeMap<String, String>> {
        let optional: Vec<usize> = (0..self.lines.len())
            .filter(|&i| self.lines[i].iter().any(|s| matches!(s, Segment::Placeholder(_))))
            .collect();
        let k = optional.len().min(8);
        let mut masks: Vec<u32> = (0..(1u32 << k)).collect();
        masks.sort_by_key(|m| m.count_ones());
        for mask in masks {
            let dropped: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).map(|b| optional[b]).collect();
            let mut joined: Vec<Segment> = Vec::new();
            let mut first = true;
            for (_, line) in self.lines.iter().enumerate().filter(|(i, _)| !dropped.contains(i)) {
                if !first {
                    joined.push(Segment::Literal("\n".into()));
                }
                first = false;
                joined.extend(line.iter().cloned());
            }
            let mut bound = BTreeMap::new();
            if match_segments(&joined, text, &mut bound) {
                return Some(bound);
            }
        }
        None
    }
}

fn parse_line(line: &str) -> Vec<Segment> {
    let mut segs = Vec::new();
    let mut last = 0;
    for cap in PLACEHOLDER.captures_iter(line) {
        let m = cap.get(0).expect("whole match");
        if m.start() > last {
            segs.push(Segment::Literal(line[last..m.start()].to_string()));
        }
        segs.push(Segment::Placeholder(cap[1].to_string()));
        last = m.end();
    }
    if last < line.len() {
        segs.push(Segment::Literal(line[last..].to_string()));
    }
    segs
}

fn match_segments(segs: &[Segment], text: &str, bound: &mut BTreeMap<String, String>) -> bool {
    let Some((first, rest)) = segs.split_first() else {
        return text.is_empty();
    };
    match first {
        Segment::Literal(lit) => text.strip_prefix(lit.as_str()).is_some_and(|t| match_segments(rest, t, bound)),
        Segment::Placeholder(p) => {
            if let Some(v) = bound.get(p).cloned() {
                return text.strip_prefix(v.as_str()).is_some_and(|t| match_segments(rest, t, bound));
            }
            let line_end = text.find('\n').unwrap_or(text.len());
            for end in (1..=line_end).filter(|&e| text.is_char_boundary(e)) {
                bound.insert(p.clone(), text[..end].to_string());
                if match_segments(rest, &text[end..], bound) {
                    return true;
                }
                bound.remove(p);
            }
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_render() {
        let t = Template::parse("Variable: {NAME}\nDescription: {NAME} is the {DESCRIPTION}\nAnswer:");
        assert_eq!(t.placeholders().collect::<Vec<_>>(), ["NAME", "NAME", "DESCRIPTION"]);
        let v = BTreeMap::from([("NAME", Some("age")), ("DESCRIPTION", Some("age in years"))]);
        assert_eq!(t.render(&v).unwrap(), "Variable: age\nDescription: age is the age in years\nAnswer:");
        let v = BTreeMap::from([("NAME", Some("age")), ("DESCRIPTION", None)]);
        assert_eq!(t.render(&v).unwrap(), "Variable: age\nAnswer:");
    }

    #[test]
    fn substitution_is_single_pass() {
        let t = Template::parse("A {NAME} B");
        let v = BTreeMap::from([("NAME", Some("{DESCRIPTION}"))]);
        assert_eq!(t.render(&v).unwrap(), "A {DESCRIPTION} B");
    }

    #[test]
    fn lowercase_braces_are_literal() {
        let t = Template::parse("x {} {name}");
        assert_eq!(t.placeholders().count(), 0);
    }

    proptest! {
        #[test]
        fn extract_inverts_render(
            name in "[A-Za-z][A-Za-z0-9 _()+-]{0,24}",
            desc in proptest::option::of("[A-Za-z0-9][A-Za-z0-9 ,.'()-]{0,60}"),
        ) {
            let t = Template::parse("Variable: {NAME}\nDescription: {NAME} is the {DESCRIPTION}\nAnswer:");
            let v = BTreeMap::from([("NAME", Some(name.as_str())), ("DESCRIPTION", desc.as_deref())]);
            let text = t.render(&v).unwrap();
            let got = t.extract(&text).unwrap();
            prop_assert_eq!(got.get("NAME"), Some(&name));
            prop_assert_eq!(got.get("DESCRIPTION"), desc.as_ref());
        }
    }
}
