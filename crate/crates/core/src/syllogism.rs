//! Strict parsing of `major premise → minor premise → conclusion` text.
//!
//! A response is valid iff each of the three markers occurs exactly once, in
//! order, and each is followed by a non-empty body. A body runs from the end
//! of its marker to the start of the next marker (or end of text) and is
//! trimmed before the emptiness check. Matching is exact and case-sensitive.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkerSet {
    major: String,
    minor: String,
    conclusion: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarkerError {
    #[error("marker strings must be non-empty")]
    Empty,
    #[error("marker `{0}` overlaps marker `{1}`")]
    Overlap(String, String),
}

impl Default for MarkerSet {
    fn default() -> Self {
        Self {
            major: "Major premise:".into(),
            minor: "Minor premise:".into(),
            conclusion: "Conclusion:".into(),
        }
    }
}

impl MarkerSet {
    pub fn new(
        major: impl Into<String>,
        minor: impl Into<String>,
        conclusion: impl Into<String>,
    ) -> Result<Self, MarkerError> {
        let set = Self {
            major: major.into(),
            minor: minor.into(),
            conclusion: conclusion.into(),
        };
        let all = set.as_array();
        if all.iter().any(|m| m.is_empty()) {
            return Err(MarkerError::Empty);
        }
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                if i != j && b.contains(a) {
                    return Err(MarkerError::Overlap(a.to_string(), b.to_string()));
                }
            }
        }
        Ok(set)
    }

    /// `大前提` / `小前提` / `结论`.
    pub fn chinese() -> Self {
        Self::new("大前提：", "小前提：", "结论：").expect("distinct markers")
    }

    pub fn major(&self) -> &str {
        &self.major
    }

    pub fn minor(&self) -> &str {
        &self.minor
    }

    pub fn conclusion(&self) -> &str {
        &self.conclusion
    }

    /// Markers in canonical order.
    pub fn as_array(&self) -> [&str; 3] {
        [&self.major, &self.minor, &self.conclusion]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub major: String,
    pub minor: String,
    pub conclusion: String,
}

impl ReasoningPath {
    pub fn new(
        major: impl Into<String>,
        minor: impl Into<String>,
        conclusion: impl Into<String>,
    ) -> Self {
        Self {
            major: major.into(),
            minor: minor.into(),
            conclusion: conclusion.into(),
        }
    }

    fn segments(&self) -> [&str; 3] {
        [&self.major, &self.minor, &self.conclusion]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Major,
    Minor,
    Conclusion,
}

const PARTS: [Part; 3] = [Part::Major, Part::Minor, Part::Conclusion];

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Major => "major",
            Part::Minor => "minor",
            Part::Conclusion => "conclusion",
        })
    }
}

/// Why a response is not a syllogism. The first violated rule is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Invalid {
    Missing(Part),
    Duplicate(Part),
    OutOfOrder,
    Empty(Part),
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Invalid::Missing(p) => write!(f, "missing_{p}"),
            Invalid::Duplicate(p) => write!(f, "duplicate_{p}"),
            Invalid::OutOfOrder => f.write_str("out_of_order"),
            Invalid::Empty(p) => write!(f, "empty_{p}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("invalid path: {0} segment is empty")]
    EmptySegment(Part),
    #[error("invalid path: {0} segment contains a marker")]
    ContainsMarker(Part),
}

pub fn parse_response(text: &str, markers: &MarkerSet) -> Result<ReasoningPath, Invalid> {
    let mut positions = [0usize; 3];
    for (k, marker) in markers.as_array().iter().enumerate() {
        let mut hits = text.match_indices(marker);
        match (hits.next(), hits.next()) {
            (None, _) => return Err(Invalid::Missing(PARTS[k])),
            (Some(_), Some(_)) => return Err(Invalid::Duplicate(PARTS[k])),
            (Some((pos, _)), None) => positions[k] = pos,
        }
    }
    if !(positions[0] < positions[1] && positions[1] < positions[2]) {
        return Err(Invalid::OutOfOrder);
    }
    let ends = [positions[1], positions[2], text.len()];
    let mut bodies = [""; 3];
    for (k, marker) in markers.as_array().iter().enumerate() {
        let body = text[positions[k] + marker.len()..ends[k]].trim();
        if body.is_empty() {
            return Err(Invalid::Empty(PARTS[k]));
        }
        bodies[k] = body;
    }
    Ok(ReasoningPath::new(bodies[0], bodies[1], bodies[2]))
}

pub fn render_path(path: &ReasoningPath, markers: &MarkerSet) -> Result<String, RenderError> {
    let mut lines = Vec::with_capacity(3);
    for ((part, segment), marker) in PARTS.iter().zip(path.segments()).zip(markers.as_array()) {
        let segment = segment.trim();
        if segment.is_empty() {
            return Err(RenderError::EmptySegment(*part));
        }
        if markers.as_array().iter().any(|m| segment.contains(m)) {
            return Err(RenderError::ContainsMarker(*part));
        }
        lines.push(format!("{marker} {segment}"));
    }
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m() -> MarkerSet {
        MarkerSet::default()
    }

    #[test]
    fn canonical_form_parses() {
        let p = parse_response("Major premise: A. Minor premise: B. Conclusion: C.", &m()).unwrap();
        assert_eq!(p, ReasoningPath::new("A.", "B.", "C."));
    }

    #[test]
    fn violations() {
        let cases = [
            (
                "Conclusion: C. Major premise: A. Minor premise: B.",
                Invalid::OutOfOrder,
            ),
            (
                "Major premise: A. Minor premise: Conclusion: C.",
                Invalid::Empty(Part::Minor),
            ),
            (
                "Major premise: A. Conclusion: C.",
                Invalid::Missing(Part::Minor),
            ),
            ("", Invalid::Missing(Part::Major)),
            (
                "Major premise: A. Major premise: A. Minor premise: B. Conclusion: C.",
                Invalid::Duplicate(Part::Major),
            ),
            (
                "Major premise: A. Minor premise: B. Conclusion:   ",
                Invalid::Empty(Part::Conclusion),
            ),
            (
                "Major premise:Minor premise: B. Conclusion: C",
                Invalid::Empty(Part::Major),
            ),
            (
                "major premise: A. Minor premise: B. Conclusion: C.",
                Invalid::Missing(Part::Major),
            ),
        ];
        for (text, want) in cases {
            assert_eq!(parse_response(text, &m()), Err(want), "{text:?}");
        }
        assert_eq!(Invalid::OutOfOrder.to_string(), "out_of_order");
        assert_eq!(Invalid::Empty(Part::Minor).to_string(), "empty_minor");
    }

    #[test]
    fn chinese_markers() {
        let zh = MarkerSet::chinese();
        let p = parse_response("大前提：法律规定。小前提：事实。结论：结果。", &zh).unwrap();
        assert_eq!(p.minor, "事实。");
    }

    #[test]
    fn marker_set_validation() {
        assert!(MarkerSet::new("A:", "B:", "A:").is_err());
        assert!(MarkerSet::new("Premise:", "Minor Premise:", "C:").is_err());
        assert!(MarkerSet::new("", "B", "C").is_err());
    }

    #[test]
    fn render_rules() {
        let p = ReasoningPath::new("rule", "facts", "answer");
        let text = render_path(&p, &m()).unwrap();
        assert_eq!(
            text,
            "Major premise: rule\nMinor premise: facts\nConclusion: answer"
        );
        assert_eq!(render_path(&p, &m()).unwrap(), text);
        assert_eq!(
            render_path(&ReasoningPath::new("a", "b", " "), &m()),
            Err(RenderError::EmptySegment(Part::Conclusion))
        );
        assert_eq!(
            render_path(&ReasoningPath::new("a Conclusion: x", "b", "c"), &m()),
            Err(RenderError::ContainsMarker(Part::Major))
        );
    }

    fn segment() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 ,.;:'\"?!\u{4e00}-\u{4e10}\n]{1,40}"
            .prop_map(|s| s.trim().to_string())
            .prop_filter("non-empty, marker-free", |s| {
                !s.is_empty()
                    && MarkerSet::default()
                        .as_array()
                        .iter()
                        .all(|m| !s.contains(m))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn render_parse_round_trip(a in segment(), b in segment(), c in segment()) {
            let p = ReasoningPath::new(a, b, c);
            let text = render_path(&p, &m()).unwrap();
            prop_assert_eq!(parse_response(&text, &m()).unwrap(), p);
        }

        #[test]
        fn never_accepts_wrong_marker_counts(
            parts in prop::collection::vec(prop::sample::select(vec![0usize, 1, 2, 3]), 0..8)
        ) {
            let markers = m();
            let mut text = String::new();
            let mut counts = [0usize; 3];
            for p in &parts {
                if *p < 3 {
                    counts[*p] += 1;
                    text.push_str(markers.as_array()[*p]);
                }
                text.push_str(" body ");
            }
            if counts.iter().any(|&c| c != 1) {
                prop_assert!(parse_response(&text, &markers).is_err());
            }
        }
    }
}
