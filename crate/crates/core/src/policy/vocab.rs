use std::collections::{BTreeSet, HashMap};

use crate::metrics::{tokenize, TokenMode};
use crate::syllogism::MarkerSet;

use super::PolicyError;

pub const PAD: u32 = 0;
pub const EOS: u32 = 1;
pub const SEP: u32 = 2;
pub const UNK: u32 = 3;
pub const MAJOR: u32 = 4;
pub const MINOR: u32 = 5;
pub const CONCLUSION: u32 = 6;

const RESERVED: [&str; 4] = ["<pad>", "<eos>", "<sep>", "<unk>"];

/// Reserved tokens, then the three markers, then sorted word tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    markers: MarkerSet,
}

impl Vocab {
    pub fn build<S: AsRef<str>>(texts: &[S], markers: &MarkerSet) -> Result<Self, PolicyError> {
        if texts.is_empty() {
            return Err(PolicyError::EmptyCorpus);
        }
        let mut words = BTreeSet::new();
        for t in texts {
            for segment in split_markers(t.as_ref(), markers) {
                if let Segment::Text(s) = segment {
                    words.extend(tokenize(s, TokenMode::Word));
                }
            }
        }
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(markers.as_array().iter().map(|s| s.to_string()))
            .chain(words)
            .collect();
        Ok(Self::from_tokens(tokens, markers.clone()))
    }

    fn from_tokens(tokens: Vec<String>, markers: MarkerSet) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            index,
            markers,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn markers(&self) -> &MarkerSet {
        &self.markers
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Markers become their reserved ids; other text is word-tokenized, with
    /// out-of-vocabulary words mapped to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for segment in split_markers(text, &self.markers) {
            match segment {
                Segment::Marker(k) => out.push(MAJOR + k as u32),
                Segment::Text(s) => out.extend(
                    tokenize(s, TokenMode::Word)
                        .iter()
                        .map(|w| self.id(w).unwrap_or(UNK)),
                ),
            }
        }
        out
    }

    /// Render ordinals as text, stopping at the first `<eos>`. Markers start
    /// a new line; everything else is space-separated.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == EOS {
                break;
            }
            let tok = self.token(id).unwrap_or("<unk>");
            if !out.is_empty() {
                out.push(if (MAJOR..=CONCLUSION).contains(&id) {
                    '\n'
                } else {
                    ' '
                });
            }
            out.push_str(tok);
        }
        out
    }

    /// One token per line; markers are read back from positions 4..7.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PolicyError> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let tokens: Vec<String> = body.split('\n').map(str::to_owned).collect();
        if tokens.len() < 7 || tokens[..4] != RESERVED {
            return Err(PolicyError::BadVocab("missing reserved tokens".into()));
        }
        // markers (lines 5..7) may contain spaces; words never do
        let malformed = |i: usize, t: &str| {
            t.is_empty()
                || t.chars()
                    .any(|c| c.is_control() || (!(4..7).contains(&i) && c.is_whitespace()))
        };
        if let Some(i) = tokens.iter().enumerate().position(|(i, t)| malformed(i, t)) {
            return Err(PolicyError::BadVocab(format!(
                "malformed token on line {}",
                i + 1
            )));
        }
        let markers = MarkerSet::new(tokens[4].clone(), tokens[5].clone(), tokens[6].clone())
            .map_err(|e| PolicyError::BadVocab(e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = tokens.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(PolicyError::BadVocab(format!("duplicate token `{dup}`")));
        }
        Ok(Self::from_tokens(tokens, markers))
    }
}

enum Segment<'a> {
    Marker(usize),
    Text(&'a str),
}

fn split_markers<'a>(text: &'a str, markers: &MarkerSet) -> Vec<Segment<'a>> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let next = markers
            .as_array()
            .iter()
            .enumerate()
            .filter_map(|(k, m)| rest.find(m).map(|pos| (pos, k, m.len())))
            .min();
        match next {
            Some((pos, k, len)) => {
                out.push(Segment::Text(&rest[..pos]));
                out.push(Segment::Marker(k));
                rest = &rest[pos + len..];
            }
            None => {
                out.push(Segment::Text(rest));
                return out;
            }
        }
    }
}
