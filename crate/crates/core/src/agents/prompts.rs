use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::Route;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template `{template}`: unbalanced brace at byte {offset}")]
    Syntax { template: String, offset: usize },
    #[error("template `{template}`: slot `{slot}` has no value")]
    Unfilled { template: String, slot: String },
    #[error("template `{template}`: {detail}")]
    Io { template: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// Text with `{slot}` placeholders; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn parse(name: &str, source: &str) -> Result<Self, PromptError> {
        let err = |offset| PromptError::Syntax { template: name.to_string(), offset };
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|&(_, n)| n) == Some('{') => {
                    chars.next();
                    text.push('{');
                }
                '}' if chars.peek().map(|&(_, n)| n) == Some('}') => {
                    chars.next();
                    text.push('}');
                }
                '{' => {
                    let mut slot = String::new();
                    loop {
                        match chars.next() {
                            Some((_, '}')) => break,
                            Some((_, ch)) if ch.is_ascii_lowercase() || ch == '_' => slot.push(ch),
                            _ => return Err(err(i)),
                        }
                    }
                    if slot.is_empty() {
                        return Err(err(i));
                    }
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(slot));
                }
                '}' => return Err(err(i)),
                _ => text.push(c),
            }
        }
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(Self { name: name.to_string(), pieces })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Every slot must have a value; extra values are ignored.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(values.get(s.as_str()).ok_or_else(|| PromptError::Unfilled {
                    template: self.name.clone(),
                    slot: s.clone(),
                })?),
            }
        }
        Ok(out)
    }
}

/// The classifier and reviewer prompts plus one generator prompt per route.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub classify: PromptTemplate,
    pub review: PromptTemplate,
    generate: BTreeMap<Route, PromptTemplate>,
}

const BUNDLED: [(&str, &str); 5] = [
    ("classify", include_str!("../../templates/classify.txt")),
    ("review", include_str!("../../templates/review.txt")),
    ("generate_iot_rag_se", include_str!("../../templates/generate_iot_rag_se.txt")),
    ("generate_maps", include_str!("../../templates/generate_maps.txt")),
    ("generate_web", include_str!("../../templates/generate_web.txt")),
];

impl PromptSet {
    pub fn bundled() -> Self {
        Self::from_sources(|name| Ok(BUNDLED.iter().find(|(n, _)| *n == name).expect("bundled template").1.to_string()))
            .expect("bundled templates parse")
    }

    /// Reads `<name>.txt` from `dir`, falling back to the bundled copy for
    /// missing files.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        Self::from_sources(|name| {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    Ok(BUNDLED.iter().find(|(n, _)| *n == name).expect("bundled template").1.to_string())
                }
                Err(e) => Err(PromptError::Io { template: name.to_string(), detail: e.to_string() }),
            }
        })
    }

    fn from_sources(read: impl Fn(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let t = |name: &str| PromptTemplate::parse(name, &read(name)?);
        let generate = [Route::IotRagSe, Route::Maps, Route::Web]
            .into_iter()
            .map(|r| Ok((r, t(&format!("generate_{}", r.as_str()))?)))
            .collect::<Result<_, PromptError>>()?;
        Ok(Self { classify: t("classify")?, review: t("review")?, generate })
    }

    /// Generator prompt for a retrieval route.
    pub fn generate(&self, route: Route) -> Option<&PromptTemplate> {
        self.generate.get(&route)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn slots_and_escapes() {
        let t = PromptTemplate::parse("t", "Q: {query}\nReply as {{\"a\": 1}} using {context}.").unwrap();
        assert_eq!(t.slots().into_iter().collect::<Vec<_>>(), vec!["context", "query"]);
        let out = t.render(&values(&[("query", "dog park"), ("context", "[]"), ("unused", "x")])).unwrap();
        assert_eq!(out, "Q: dog park\nReply as {\"a\": 1} using [].");
    }

    #[test]
    fn unfilled_slot_is_an_error() {
        let t = PromptTemplate::parse("t", "{query} {preferences}").unwrap();
        let e = t.render(&values(&[("query", "q")])).unwrap_err();
        assert_eq!(e, PromptError::Unfilled { template: "t".into(), slot: "preferences".into() });
    }

    #[test]
    fn syntax_errors() {
        for bad in ["{", "}", "{}", "{Query}", "a { b"] {
            assert!(matches!(PromptTemplate::parse("t", bad), Err(PromptError::Syntax { .. })), "{bad}");
        }
    }

    #[test]
    fn bundled_set_has_required_slots() {
        let set = PromptSet::bundled();
        for r in [Route::IotRagSe, Route::Maps, Route::Web] {
            let slots = set.generate(r).unwrap().slots();
            for s in ["query", "context", "preferences"] {
                assert!(slots.contains(s), "{r:?} lacks {s}");
            }
        }
        assert!(set.generate(Route::DirectAnswer).is_none());
        assert!(set.classify.slots().contains("query"));
        assert!(set.review.slots().contains("answer"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("review.txt"), "Check {answer} for {query}.").unwrap();
        let set = PromptSet::load(dir.path()).unwrap();
        assert_eq!(set.review.render(&values(&[("answer", "A"), ("query", "Q")])).unwrap(), "Check A for Q.");
        assert_eq!(set.classify, PromptSet::bundled().classify);
    }
}
