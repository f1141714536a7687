//! Text utilities shared by the planners, scorers and metrics: size
//! estimation, term segmentation, phrase matching and interrogative detection.

/// Size estimate of one text field: Unicode scalar count divided by 4,
/// rounded up.
pub fn size_units(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // kana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xAC00..=0xD7AF    // hangul
        | 0xF900..=0xFAFF    // compatibility
        | 0x20000..=0x2FA1F) // ext B+
}

/// Segments text into lowercase terms.
///
/// Whitespace separates terms; punctuation is stripped from both ends of each
/// whitespace token and splits it internally except for apostrophes and
/// hyphens. Runs of CJK characters yield one term per scalar.
pub fn terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        let t = cur.trim_matches(|c: char| c == '\'' || c == '-' || c == '’');
        if !t.is_empty() {
            out.push(t.to_string());
        }
        cur.clear();
    };
    for c in text.chars() {
        if is_cjk(c) {
            flush(&mut cur, &mut out);
            out.push(c.to_string());
        } else if c.is_alphanumeric() || c == '\'' || c == '’' || c == '-' {
            cur.extend(c.to_lowercase());
        } else {
            flush(&mut cur, &mut out);
        }
    }
    flush(&mut cur, &mut out);
    out
}

/// A phrase pattern matched on term boundaries. Segments separated by `...`
/// must appear in order, with any gap between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    source: String,
    segments: Vec<Vec<String>>,
}

impl Phrase {
    pub fn new(pattern: &str) -> Self {
        let segments = pattern
            .split("...")
            .map(terms)
            .filter(|s| !s.is_empty())
            .collect();
        Phrase { source: pattern.to_string(), segments }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Returns the matched term span as `(start, end)` indices into `haystack`.
    pub fn find(&self, haystack: &[String]) -> Option<(usize, usize)> {
        if self.segments.is_empty() {
            return None;
        }
        // Leftmost start, then greedy earliest completion of the remaining
        // segments.
        'start: for s in 0..haystack.len() {
            let mut pos = s;
            let mut first = true;
            for seg in &self.segments {
                let found = if first {
                    starts_with_at(haystack, pos, seg).then_some(pos)
                } else {
                    (pos..haystack.len()).find(|&p| starts_with_at(haystack, p, seg))
                };
                match found {
                    Some(p) => pos = p + seg.len(),
                    None => continue 'start,
                }
                first = false;
            }
            return Some((s, pos));
        }
        None
    }

    pub fn matches(&self, haystack: &[String]) -> bool {
        self.find(haystack).is_some()
    }
}

fn starts_with_at(haystack: &[String], pos: usize, seg: &[String]) -> bool {
    haystack.len() >= pos + seg.len() && haystack[pos..pos + seg.len()] == *seg
}

/// Counts how many lexicon entries occur in `text_terms` (each entry at most once).
pub fn lexicon_hits(text_terms: &[String], lexicon: &[String]) -> usize {
    lexicon
        .iter()
        .map(|p| Phrase::new(p))
        .filter(|p| p.matches(text_terms))
        .count()
}

/// Splits text into sentences, keeping each terminator with its sentence.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?' | '。' | '！' | '？' | '\n') {
            // absorb runs like "?!" or "..."
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if matches!(d, '.' | '!' | '?' | '。' | '！' | '？') {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Sentence-initial words that open a question.
pub const DEFAULT_QUESTION_OPENERS: &[&str] = &[
    "what", "why", "how", "when", "where", "who", "whom", "whose", "which", "can", "could",
    "would", "will", "shall", "should", "do", "does", "did", "is", "are", "was", "were", "have",
    "has", "had", "may", "might",
];

/// Open wh-forms, the subset of openers that invite elaboration.
pub const WH_WORDS: &[&str] = &["what", "why", "how", "when", "where", "who", "whom", "whose", "which"];

pub fn ends_with_question_mark(sentence: &str) -> bool {
    sentence.trim_end().ends_with(['?', '？'])
}

/// Lenient check: a sentence is interrogative if it ends in a question mark
/// or starts with an opener from `openers`.
pub fn is_interrogative_sentence(sentence: &str, openers: &[&str]) -> bool {
    if ends_with_question_mark(sentence) {
        return true;
    }
    terms(sentence)
        .first()
        .is_some_and(|w| openers.contains(&w.as_str()))
}

/// Returns the interrogative sentences of `text` under the lenient check.
pub fn interrogative_sentences<'a>(text: &'a str, openers: &[&str]) -> Vec<&'a str> {
    sentences(text)
        .into_iter()
        .filter(|s| is_interrogative_sentence(s, openers))
        .collect()
}

/// Strict check used by the generation constraint: some sentence ends with
/// `?` or `？`.
pub fn has_question_mark_sentence(text: &str) -> bool {
    sentences(text).iter().any(|s| ends_with_question_mark(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_round_up() {
        assert_eq!(size_units(""), 0);
        assert_eq!(size_units("abc"), 1);
        assert_eq!(size_units("abcd"), 1);
        assert_eq!(size_units("abcde"), 2);
        assert_eq!(size_units("我很焦虑"), 1);
    }

    #[test]
    fn terms_strip_punctuation_and_split_cjk() {
        assert_eq!(terms("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(terms("I don't know."), vec!["i", "don't", "know"]);
        assert_eq!(terms("我很好 ok"), vec!["我", "很", "好", "ok"]);
        assert!(terms("  ?! ").is_empty());
    }

    #[test]
    fn phrase_gap_templates() {
        let p = Phrase::new("if ... what");
        let t = terms("If I quit, what then?");
        assert_eq!(p.find(&t), Some((0, 4)));
        assert!(!p.matches(&terms("what if")));
        assert!(Phrase::new("thank you").matches(&terms("Thank you so much")));
        assert!(!Phrase::new("thank you").matches(&terms("thankyou")));
    }

    #[test]
    fn sentence_split_keeps_terminators() {
        assert_eq!(sentences("Hi. How are you?? Fine"), vec!["Hi.", "How are you??", "Fine"]);
        assert_eq!(sentences("你好吗？我很好。"), vec!["你好吗？", "我很好。"]);
    }

    #[test]
    fn interrogative_detection() {
        assert!(is_interrogative_sentence("What matters most?", DEFAULT_QUESTION_OPENERS));
        assert!(is_interrogative_sentence("Could you say more.", DEFAULT_QUESTION_OPENERS));
        assert!(!is_interrogative_sentence("That sounds hard.", DEFAULT_QUESTION_OPENERS));
        assert!(has_question_mark_sentence("Okay. 你怎么看？"));
        assert!(!has_question_mark_sentence("Could you say more."));
    }
}
