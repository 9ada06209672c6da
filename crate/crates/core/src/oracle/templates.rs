use std::fs;
use std::path::Path;

use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    /// Anchor localization: does the text describe the image?
    Loc,
    /// Attribute questions about the anchor image.
    Vqa,
    /// Merge VQA answers into the query.
    Aggr,
    /// Split a description into single-attribute sub-sentences.
    Dec,
    /// Restyle one sub-sentence.
    Rwt,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [Self::Loc, Self::Vqa, Self::Aggr, Self::Dec, Self::Rwt];

    pub fn attaches_image(self) -> bool {
        matches!(self, Self::Loc | Self::Vqa)
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            Self::Loc => &["query"],
            Self::Vqa => &["questions"],
            Self::Aggr => &["answers", "query"],
            Self::Dec => &["text"],
            Self::Rwt => &["text", "count"],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Loc => "loc.txt",
            Self::Vqa => "vqa.txt",
            Self::Aggr => "aggr.txt",
            Self::Dec => "dec.txt",
            Self::Rwt => "rwt.txt",
        }
    }

    pub fn default_text(self) -> &'static str {
        match self {
            Self::Loc => "Can this text accurately describe the image? Answer Yes or No.\nText: {query}",
            Self::Vqa => {
                "Look at the person in the image and answer the following questions one by one. \
                 Reply as a numbered list with one answer per question.\n{questions}"
            }
            Self::Aggr => {
                "Merge the original description of a person and the answers below into one fluent and \
                 concise description of that person. Keep every detail of the original description. \
                 Reply with the description only.\nOriginal description: {query}\nAnswers:\n{answers}"
            }
            Self::Dec => {
                "Split the following person description into independent sub-sentences, each describing \
                 a single attribute of the person. Reply as a numbered list (1. ... 2. ...) and nothing else.\n\
                 Description: {text}"
            }
            Self::Rwt => {
                "Rewrite the following sentence into {count} sentences with different styles but the same \
                 meaning. Reply as a numbered list with exactly {count} items and nothing else.\nSentence: {text}"
            }
        }
    }
}

/// A prompt with named `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    text: String,
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind, text: impl Into<String>) -> Result<Self, OracleError> {
        let text = text.into();
        for name in kind.placeholders() {
            if !text.contains(&format!("{{{name}}}")) {
                return Err(OracleError::Template(format!("{kind:?} template lacks the {{{name}}} placeholder")));
            }
        }
        Ok(Self { kind, text })
    }

    pub fn default_for(kind: TemplateKind) -> Self {
        Self { kind, text: kind.default_text().to_string() }
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn attaches_image(&self) -> bool {
        self.kind.attaches_image()
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (name, value) in vars {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        out
    }
}

/// The five templates an LLM-backed oracle needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub loc: PromptTemplate,
    pub vqa: PromptTemplate,
    pub aggr: PromptTemplate,
    pub dec: PromptTemplate,
    pub rwt: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            loc: PromptTemplate::default_for(TemplateKind::Loc),
            vqa: PromptTemplate::default_for(TemplateKind::Vqa),
            aggr: PromptTemplate::default_for(TemplateKind::Aggr),
            dec: PromptTemplate::default_for(TemplateKind::Dec),
            rwt: PromptTemplate::default_for(TemplateKind::Rwt),
        }
    }
}

impl TemplateSet {
    /// Reads `loc.txt`, `vqa.txt`, ... from `dir`; absent files keep the
    /// default wording.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, OracleError> {
        let dir = dir.as_ref();
        let load = |kind: TemplateKind| -> Result<PromptTemplate, OracleError> {
            let path = dir.join(kind.file_name());
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
                PromptTemplate::new(kind, text.trim_end().to_string())
            } else {
                Ok(PromptTemplate::default_for(kind))
            }
        };
        Ok(Self {
            loc: load(TemplateKind::Loc)?,
            vqa: load(TemplateKind::Vqa)?,
            aggr: load(TemplateKind::Aggr)?,
            dec: load(TemplateKind::Dec)?,
            rwt: load(TemplateKind::Rwt)?,
        })
    }

    pub fn get(&self, kind: TemplateKind) -> &PromptTemplate {
        match kind {
            TemplateKind::Loc => &self.loc,
            TemplateKind::Vqa => &self.vqa,
            TemplateKind::Aggr => &self.aggr,
            TemplateKind::Dec => &self.dec,
            TemplateKind::Rwt => &self.rwt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_satisfy_their_own_placeholders() {
        for kind in TemplateKind::ALL {
            PromptTemplate::new(kind, kind.default_text()).unwrap();
        }
    }

    #[test]
    fn image_attachment_by_kind() {
        let attached: Vec<_> = TemplateKind::ALL.iter().filter(|k| k.attaches_image()).collect();
        assert_eq!(attached, vec![&TemplateKind::Loc, &TemplateKind::Vqa]);
    }

    #[test]
    fn missing_placeholder_rejected() {
        assert!(PromptTemplate::new(TemplateKind::Aggr, "merge {answers}").is_err());
    }

    #[test]
    fn render_fills_slots() {
        let t = PromptTemplate::default_for(TemplateKind::Loc);
        let s = t.render(&[("query", "a man in a red coat")]);
        assert!(s.starts_with("Can this text accurately describe the image?"));
        assert!(s.ends_with("Text: a man in a red coat"));
    }

    #[test]
    fn dir_overrides_only_present_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("loc.txt"), "Q: {query}? Yes/No\n").unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.loc.text(), "Q: {query}? Yes/No");
        assert_eq!(set.vqa, PromptTemplate::default_for(TemplateKind::Vqa));
        fs::write(dir.path().join("dec.txt"), "no slot").unwrap();
        assert!(TemplateSet::from_dir(dir.path()).is_err());
    }
}
