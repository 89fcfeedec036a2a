//! Token-frequency features over raw HTTP requests and the three binary
//! attack detectors (XSS, SQL injection, OS command injection).
//!
//! Counting is done on the raw request after one percent-decoding pass and
//! ASCII lowercasing. Occurrences are non-overlapping, scanned left to right.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{ClassifierModel, Dataset, LearnError, Schema};
use crate::packet::HttpRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttackLabel {
    Xss,
    Sqli,
    Osc,
}

impl AttackLabel {
    pub const ALL: [AttackLabel; 3] = [AttackLabel::Xss, AttackLabel::Sqli, AttackLabel::Osc];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackLabel::Xss => "XSS",
            AttackLabel::Sqli => "SQLI",
            AttackLabel::Osc => "OSC",
        }
    }
}

impl fmt::Display for AttackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown attack label `{s}`"))
    }
}

/// Version of the built-in token lists below.
pub const TOKEN_LIST_VERSION: u32 = 1;

const XSS_TOKENS: &[&str] = &[
    "<script",
    "</script",
    "javascript:",
    "vbscript:",
    "onerror",
    "onload",
    "onmouseover",
    "onfocus",
    "onclick",
    "alert(",
    "prompt(",
    "confirm(",
    "document.cookie",
    "document.write",
    "document.location",
    "window.location",
    "innerhtml",
    "<img",
    "<iframe",
    "<svg",
    "<body",
    "<object",
    "<embed",
    "<style",
    "<input",
    "src=",
    "href=",
    "&#",
    "expression(",
    "fromcharcode",
    "<",
    ">",
    "\"",
    "(",
    ")",
    " !",
    "^",
    "<>",
    "[]",
    "createelement",
    "search",
    "eval()",
    "string.fromcharcode",
];

const XSS_EXCLUDED: &[&str] = &[" !", "^", "<>", "[]", "createelement", "search", "eval()", "string.fromcharcode"];

const SQLI_TOKENS: &[&str] = &[
    "union",
    "select",
    "insert",
    "update",
    "delete",
    "drop",
    "table",
    "from",
    "where",
    "or ",
    "and ",
    "--",
    "/*",
    "*/",
    "sleep(",
    "benchmark(",
    "waitfor",
    "delay",
    "information_schema",
    "char(",
    "concat(",
    "null",
    "order by",
    "group by",
    "having",
    "exec",
    "xp_",
    "@@",
    "0x",
    "1=1",
    "' or",
    "\" or",
    "cast(",
    "version(",
    "-",
    "/**/",
    "'",
    ";",
    "#",
    "[",
    "]",
    "(",
    ")",
    "^",
    "|",
    "<>",
    "<=",
    ">=",
    "&&",
    "||",
    ":",
    " !=",
    "()",
];

const SQLI_EXCLUDED: &[&str] =
    &["-", "/**/", "'", ";", "#", "[", "]", "(", ")", "^", "|", "<>", "<=", ">=", "&&", "||", ":", " !=", "()"];

const OSC_TOKENS: &[&str] = &[
    ";",
    "|",
    "&&",
    "||",
    "$(",
    "${",
    "cat ",
    "ls ",
    "wget ",
    "curl ",
    "nc ",
    "netcat",
    "bash",
    "/bin/",
    "sh ",
    "whoami",
    "uname",
    "ping ",
    "chmod",
    "rm ",
    "echo ",
    "/tmp/",
    "passwd",
    "shadow",
    "ifconfig",
    "netstat",
    "nslookup",
    "2>&1",
    "/dev/null",
    "powershell",
    "cmd.exe",
    "..\\",
    "\\.",
    "\\/",
    ":/",
    "etc/passwd",
    "`",
];

const OSC_EXCLUDED: &[&str] = &["..\\", "\\.", "\\/", ":/", "etc/passwd", "`"];

/// Ordered token list for one attack class. Excluded tokens never survive
/// construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFeatureSpec {
    pub attack: AttackLabel,
    pub version: u32,
    pub tokens: Vec<String>,
    pub excluded: Vec<String>,
}

#[derive(Debug, Error)]
pub enum IdsError {
    #[error("no trained {0} model")]
    UntrainedModel(AttackLabel),
    #[error("{label} model: {source}")]
    Model { label: AttackLabel, source: LearnError },
    #[error("invalid token spec: {0}")]
    InvalidSpec(String),
}

impl TokenFeatureSpec {
    /// Lowercase, drop empties and duplicates, then remove `excluded`.
    pub fn new(attack: AttackLabel, version: u32, base: &[&str], excluded: &[&str]) -> Self {
        let excluded: Vec<String> = excluded.iter().map(|t| t.to_ascii_lowercase()).collect();
        let mut tokens: Vec<String> = Vec::new();
        for t in base.iter().map(|t| t.to_ascii_lowercase()) {
            if !t.is_empty() && !excluded.contains(&t) && !tokens.contains(&t) {
                tokens.push(t);
            }
        }
        TokenFeatureSpec { attack, version, tokens, excluded }
    }

    pub fn builtin(attack: AttackLabel) -> Self {
        let (base, excluded) = match attack {
            AttackLabel::Xss => (XSS_TOKENS, XSS_EXCLUDED),
            AttackLabel::Sqli => (SQLI_TOKENS, SQLI_EXCLUDED),
            AttackLabel::Osc => (OSC_TOKENS, OSC_EXCLUDED),
        };
        Self::new(attack, TOKEN_LIST_VERSION, base, excluded)
    }

    /// Re-establish invariants on a spec loaded from disk.
    pub fn validate(&self) -> Result<(), IdsError> {
        for (i, t) in self.tokens.iter().enumerate() {
            if t.is_empty() || *t != t.to_ascii_lowercase() {
                return Err(IdsError::InvalidSpec(format!("token `{t}` is empty or not lowercase")));
            }
            if self.excluded.contains(t) {
                return Err(IdsError::InvalidSpec(format!("token `{t}` is excluded")));
            }
            if self.tokens[..i].contains(t) {
                return Err(IdsError::InvalidSpec(format!("token `{t}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let names: Vec<String> = self.tokens.iter().map(|t| format!("tok:{t}")).collect();
        Schema::numeric(&names.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpFeatureVector {
    pub attack: AttackLabel,
    pub counts: Vec<u32>,
}

impl HttpFeatureVector {
    pub fn as_row(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }
}

/// One percent-decoding pass followed by ASCII lowercasing.
pub fn normalize_request(raw: &str) -> Vec<u8> {
    let mut bytes: Vec<u8> = percent_encoding::percent_decode_str(raw).collect();
    bytes.make_ascii_lowercase();
    bytes
}

fn count_non_overlapping(hay: &[u8], needle: &[u8]) -> u32 {
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    let mut n = 0;
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        if &hay[i..i + needle.len()] == needle {
            n += 1;
            i += needle.len();
        } else {
            i += 1;
        }
    }
    n
}

pub fn extract_http_features(raw: &str, spec: &TokenFeatureSpec) -> HttpFeatureVector {
    let text = normalize_request(raw);
    HttpFeatureVector {
        attack: spec.attack,
        counts: spec.tokens.iter().map(|t| count_non_overlapping(&text, t.as_bytes())).collect(),
    }
}

/// Build a training set for one attack class from `(raw request, is_attack)`.
pub fn http_dataset<'a>(
    spec: &TokenFeatureSpec,
    samples: impl IntoIterator<Item = (&'a str, bool)>,
) -> Result<Dataset, LearnError> {
    let (rows, labels) =
        samples.into_iter().map(|(raw, attack)| (extract_http_features(raw, spec).as_row(), u8::from(attack))).unzip();
    Dataset::new(spec.schema(), rows, labels)
}

/// A token spec paired with the model trained on it.
#[derive(Debug, Clone)]
pub struct AttackDetector {
    pub spec: TokenFeatureSpec,
    pub model: ClassifierModel,
}

impl AttackDetector {
    pub fn new(spec: TokenFeatureSpec, model: ClassifierModel) -> Result<Self, IdsError> {
        spec.validate()?;
        model.check_schema(&spec.schema()).map_err(|source| IdsError::Model { label: spec.attack, source })?;
        Ok(AttackDetector { spec, model })
    }

    pub fn is_attack(&self, raw: &str) -> bool {
        let v = extract_http_features(raw, &self.spec);
        self.model.predict(&v.as_row()).map(|y| y == 1).unwrap_or(false)
    }
}

/// The three independent binary detectors.
#[derive(Debug, Clone, Default)]
pub struct HttpIds {
    detectors: Vec<AttackDetector>,
}

impl HttpIds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, detector: AttackDetector) -> Self {
        self.insert(detector);
        self
    }

    pub fn insert(&mut self, detector: AttackDetector) {
        self.detectors.retain(|d| d.spec.attack != detector.spec.attack);
        self.detectors.push(detector);
    }

    pub fn detector(&self, label: AttackLabel) -> Option<&AttackDetector> {
        self.detectors.iter().find(|d| d.spec.attack == label)
    }

    pub fn is_complete(&self) -> bool {
        AttackLabel::ALL.iter().all(|&l| self.detector(l).is_some())
    }

    /// Every label whose detector fires. Multiple labels may be returned.
    pub fn classify(&self, raw: &str) -> Result<BTreeSet<AttackLabel>, IdsError> {
        let mut out = BTreeSet::new();
        for label in AttackLabel::ALL {
            let d = self.detector(label).ok_or(IdsError::UntrainedModel(label))?;
            if d.is_attack(raw) {
                out.insert(label);
            }
        }
        Ok(out)
    }
}

pub fn classify_request(req: &HttpRequest, ids: &HttpIds) -> Result<BTreeSet<AttackLabel>, IdsError> {
    ids.classify(&req.raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusions_are_honored() {
        for label in AttackLabel::ALL {
            let spec = TokenFeatureSpec::builtin(label);
            spec.validate().unwrap();
            assert!(spec.tokens.iter().all(|t| !spec.excluded.contains(t)));
            assert!(!spec.tokens.is_empty());
        }
        let xss = TokenFeatureSpec::builtin(AttackLabel::Xss);
        assert!(!xss.tokens.contains(&"createelement".to_string()));
        assert!(xss.excluded.contains(&"string.fromcharcode".to_string()));
        let osc = TokenFeatureSpec::builtin(AttackLabel::Osc);
        assert!(!osc.tokens.contains(&"etc/passwd".to_string()));
        assert!(!osc.tokens.contains(&"`".to_string()));
    }

    #[test]
    fn benign_query_has_no_sqli_tokens() {
        let v = extract_http_features("GET /?q=hello", &TokenFeatureSpec::builtin(AttackLabel::Sqli));
        assert!(v.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn counts_repeated_and_encoded_tokens() {
        let spec = TokenFeatureSpec::new(AttackLabel::Sqli, 1, &["union"], &[]);
        let v = extract_http_features("GET /?a=1 UNION select 2 union SELECT 3", &spec);
        assert_eq!(v.counts, vec![2]);

        let spec = TokenFeatureSpec::new(AttackLabel::Xss, 1, &["<script"], &[]);
        assert_eq!(extract_http_features("%3Cscript%3E", &spec).counts, vec![1]);
        // A second encoding layer survives one decode pass.
        assert_eq!(extract_http_features("%253Cscript%253E", &spec).counts, vec![0]);
    }

    #[test]
    fn non_overlapping_count() {
        assert_eq!(count_non_overlapping(b"aaaa", b"aa"), 2);
        assert_eq!(count_non_overlapping(b"aaa", b"aa"), 1);
        assert_eq!(count_non_overlapping(b"", b"a"), 0);
    }

    #[test]
    fn missing_model_is_untrained() {
        assert!(matches!(HttpIds::new().classify("GET / HTTP/1.1"), Err(IdsError::UntrainedModel(_))));
    }

    #[test]
    fn labels_serialize_uppercase() {
        assert_eq!(serde_json::to_string(&AttackLabel::Sqli).unwrap(), "\"SQLI\"");
        assert_eq!("osc".parse::<AttackLabel>().unwrap(), AttackLabel::Osc);
    }
}
