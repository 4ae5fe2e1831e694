//! Part-of-speech tagging.
//!
//! Profiling only needs *some* Penn-Treebank tagger, so tagging is a trait.
//! [`RuleTagger`] is a dependency-free lexicon-plus-suffix tagger tuned for
//! lowercased news headlines; richer taggers can be plugged in behind
//! [`PosTagger`].

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// The Penn Treebank tag set (punctuation tags included).
pub const PENN_TAGS: &[&str] = &[
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS", "PDT", "POS",
    "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB", "#", "$", "''", "``", "(", ")", ",", ".", ":",
];

pub fn is_penn_tag(tag: &str) -> bool {
    PENN_TAGS.contains(&tag)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerInfo {
    pub name: String,
    pub version: String,
}

pub trait PosTagger {
    fn info(&self) -> TaggerInfo;

    /// Returns one tag per input token.
    fn tag(&self, tokens: &[&str]) -> Vec<String>;
}

/// Tags every headline with `tagger` and checks the output length.
pub fn tag_checked<T: PosTagger + ?Sized>(tagger: &T, tokens: &[&str]) -> Result<Vec<String>> {
    let tags = tagger.tag(tokens);
    if tags.len() != tokens.len() {
        return Err(CoreError::TagLengthMismatch { expected: tokens.len(), got: tags.len() });
    }
    Ok(tags)
}

const CLOSED_CLASS: &[(&str, &[&str])] = &[
    ("DT", &["the", "a", "an", "this", "that", "these", "those", "every", "each", "no", "another", "some", "any", "all", "both", "either", "neither"]),
    ("IN", &[
        "of", "in", "on", "at", "for", "with", "over", "after", "before", "from", "by", "about", "against", "as",
        "into", "near", "under", "amid", "despite", "during", "since", "without", "between", "through", "until",
        "across", "behind", "beyond", "among", "onto", "towards", "toward", "via", "per", "than", "if", "while",
        "because", "whether", "though", "although", "like", "upon", "inside", "outside", "around", "following",
        "ahead", "above", "below",
    ]),
    ("TO", &["to"]),
    ("CC", &["and", "or", "but", "nor", "yet", "plus"]),
    ("PRP", &["he", "she", "it", "they", "we", "i", "you", "him", "them", "us", "me", "himself", "herself", "itself", "themselves"]),
    ("PRP$", &["his", "its", "their", "our", "my", "your"]),
    ("MD", &["will", "would", "can", "could", "may", "might", "should", "must", "shall", "cannot", "won't", "can't"]),
    ("WDT", &["which", "whatever"]),
    ("WP", &["who", "what", "whom"]),
    ("WRB", &["where", "when", "why", "how"]),
    ("EX", &["there"]),
    ("RB", &[
        "not", "never", "now", "also", "again", "still", "very", "too", "just", "already", "soon", "here", "today",
        "yet", "ever", "almost", "only", "even", "once", "twice", "away", "together", "n't", "so", "well",
    ]),
    ("RP", &["up", "down", "out", "off"]),
    ("RBR", &["further"]),
    ("JJR", &["more", "less", "fewer", "bigger", "higher", "lower", "better", "worse", "greater", "larger", "smaller", "older", "younger"]),
    ("JJS", &["most", "least", "best", "worst", "biggest", "highest", "lowest", "largest", "oldest", "latest"]),
    ("VBZ", &["is", "has", "does", "says", "gets", "goes", "makes", "takes", "wants", "needs", "faces", "calls", "hits", "wins"]),
    ("VBP", &["are", "have", "do", "say", "get", "go", "make", "take", "want", "need"]),
    ("VBD", &["was", "were", "had", "did", "said", "went", "got", "made", "took", "came", "told"]),
    ("VB", &["be"]),
    ("VBN", &["been", "done", "gone", "given", "taken", "seen", "known", "shown", "found", "held", "left", "hit", "set", "cut", "hurt", "won", "lost", "built", "sold", "caught", "brought", "kept"]),
    ("VBG", &["being"]),
    ("JJ", &[
        "new", "big", "old", "high", "low", "top", "first", "last", "major", "local", "national", "australian",
        "international", "federal", "young", "long", "former", "good", "bad", "small", "large", "free", "fresh",
        "public", "private", "final", "black", "white", "social", "political", "human", "early", "late", "key",
        "next", "full", "open", "hot", "cold", "dry", "wet", "safe", "rural", "regional", "indigenous", "remote",
        "dead", "alive", "real", "fake", "great", "little", "own", "other", "many", "much", "few", "several",
        "chinese", "american", "british", "indian", "french", "german", "european", "asian", "african", "global",
        "foreign", "domestic", "medical", "mental", "military", "nuclear", "economic", "financial", "legal",
        "illegal", "serious", "fatal", "missing", "wild", "native", "north", "south", "east", "west", "northern",
        "southern", "eastern", "western", "central", "general", "special", "extra", "main", "vital", "likely",
        "unlikely", "possible", "important", "fair", "unfair", "strong", "weak", "record", "annual", "daily",
        "weekly", "worth", "sure", "ready", "short", "tough", "hard", "easy", "busy", "quiet", "rare", "recent",
    ]),
];

const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen",
    "fifteen", "twenty", "thirty", "forty", "fifty", "hundred", "hundreds", "thousand", "thousands", "million",
    "millions", "billion", "billions", "dozen", "dozens",
];

const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "ive", "able", "ible", "ical", "ic", "less", "ish", "ary", "ant", "ent"];
const NOUN_S_EXCEPTIONS: &[&str] = &["ss", "us", "is", "ous", "ics"];

/// Lexicon-plus-suffix Penn-Treebank tagger for lowercased headlines.
#[derive(Debug, Clone)]
pub struct RuleTagger {
    lexicon: HashMap<String, String>,
}

impl Default for RuleTagger {
    fn default() -> Self {
        let mut lexicon = HashMap::new();
        for (tag, words) in CLOSED_CLASS {
            for w in *words {
                lexicon.entry((*w).to_string()).or_insert_with(|| (*tag).to_string());
            }
        }
        for w in NUMBER_WORDS {
            lexicon.insert((*w).to_string(), "CD".to_string());
        }
        RuleTagger { lexicon }
    }
}

impl RuleTagger {
    pub const NAME: &'static str = "headcheck-rule-tagger";
    pub const VERSION: &'static str = "1.0";

    /// Adds `word<TAB>TAG` entries on top of the built-in lexicon.
    pub fn extend_lexicon<R: BufRead>(&mut self, reader: R) -> Result<usize> {
        let mut added = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| CoreError::InvalidRecord(format!("lexicon line {}: expected word<TAB>tag", i + 1)))?;
            if !is_penn_tag(tag) {
                return Err(CoreError::InvalidRecord(format!("lexicon line {}: `{tag}` is not a Penn tag", i + 1)));
            }
            self.lexicon.insert(word.to_lowercase(), tag.to_string());
            added += 1;
        }
        Ok(added)
    }

    fn tag_word(&self, word: &str, prev: Option<&str>, verb_seen: bool) -> &'static str {
        if word.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',' || c == '%' || c == '$') {
            return if word.starts_with('$') { "$" } else { "CD" };
        }
        if word.chars().any(|c| c.is_ascii_digit()) {
            return "CD";
        }
        if word.ends_with("'s") {
            return "NN";
        }
        if matches!(prev, Some("TO") | Some("MD")) {
            return "VB";
        }
        if word.len() > 4 && word.ends_with("ing") {
            return "VBG";
        }
        if word.len() > 3 && word.ends_with("ed") {
            return "VBN";
        }
        if word.len() > 3 && word.ends_with("ly") {
            return "RB";
        }
        if word.len() > 4 && word.ends_with("est") {
            return "JJS";
        }
        if word.len() > 4 && ADJ_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            return "JJ";
        }
        if word.len() > 3 && word.ends_with('s') && !NOUN_S_EXCEPTIONS.iter().any(|s| word.ends_with(s)) {
            // A noun followed by an -s word, before any verb, reads as subject + verb.
            let after_noun = matches!(prev, Some("NN") | Some("NNS") | Some("NNP"));
            return if after_noun && !verb_seen { "VBZ" } else { "NNS" };
        }
        "NN"
    }
}

impl PosTagger for RuleTagger {
    fn info(&self) -> TaggerInfo {
        TaggerInfo { name: Self::NAME.into(), version: Self::VERSION.into() }
    }

    fn tag(&self, tokens: &[&str]) -> Vec<String> {
        let mut tags: Vec<String> = Vec::with_capacity(tokens.len());
        let mut verb_seen = false;
        for token in tokens {
            let prev = tags.last().map(String::as_str);
            let tag = match self.lexicon.get(*token) {
                Some(t) => t.clone(),
                None => self.tag_word(token, prev, verb_seen).to_string(),
            };
            verb_seen |= tag.starts_with("VB") || tag == "MD";
            tags.push(tag);
        }
        tags
    }
}
