//! Word-level vocabulary. Ids 0..6 are the special symbols; everything else
//! is a pre-tokenized word.
//!
//! Pre-tokenization splits on whitespace and peels sentence punctuation off
//! word edges so that `London.` and `London` share a token. Swapping in a
//! subword model only needs a different [`pre_tokenize`]/[`detokenize`] pair.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::SpecialTokens;

pub const PAD: usize = 0;
pub const EOS: usize = 1;
pub const NODE_SEP: usize = 2;
pub const NO_NODE: usize = 3;
pub const NO_EDGE: usize = 4;
pub const UNK: usize = 5;
pub const NUM_SPECIAL: usize = 6;

pub const UNK_TOKEN: &str = "<unk>";

const CLOSING: &[char] = &['.', ',', ';', ':', '!', '?', ')'];
const OPENING: &[char] = &['('];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: BTreeMap<String, usize>,
}

fn special_strings() -> [String; NUM_SPECIAL] {
    let sp = SpecialTokens::default();
    [sp.pad, sp.eos, sp.node_sep, sp.no_node, sp.no_edge, UNK_TOKEN.into()]
}

/// Splits `s` into word tokens. Special symbols such as `<node_sep>` stay whole.
pub fn pre_tokenize(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in s.split_whitespace() {
        if word.starts_with('<') && word.ends_with('>') {
            out.push(word);
            continue;
        }
        let mut w = word;
        while let Some(c) = w.chars().next().filter(|c| OPENING.contains(c)) {
            if w.len() == 1 {
                break;
            }
            out.push(&w[..c.len_utf8()]);
            w = &w[c.len_utf8()..];
        }
        let mut tail = Vec::new();
        while let Some(c) = w.chars().last().filter(|c| CLOSING.contains(c)) {
            if w.len() == c.len_utf8() {
                break;
            }
            let cut = w.len() - c.len_utf8();
            tail.push(&w[cut..]);
            w = &w[..cut];
        }
        out.push(w);
        out.extend(tail.into_iter().rev());
    }
    out
}

/// Inverse of [`pre_tokenize`] for conventionally spaced text.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for t in tokens {
        let t = t.as_ref();
        let closing = t.chars().count() == 1 && t.chars().all(|c| CLOSING.contains(&c));
        if !glue_next && !closing {
            out.push(' ');
        }
        out.push_str(t);
        glue_next = t.chars().count() == 1 && t.chars().all(|c| OPENING.contains(&c));
    }
    out
}

impl Vocab {
    /// Builds a vocabulary from raw strings (texts, node strings, relation
    /// labels). Order: specials, then tokens by descending count, ties
    /// broken lexicographically.
    pub fn build<'a, I>(strings: I) -> Result<Vocab>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let specials = special_strings();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut any = false;
        for s in strings {
            any = true;
            for tok in pre_tokenize(s) {
                if !specials.iter().any(|sp| sp == tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        if !any {
            return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = specials
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| String::from(t)))
            .collect();
        Vocab::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        let specials = special_strings();
        if tokens.len() < NUM_SPECIAL || tokens[..NUM_SPECIAL] != specials[..] {
            return Err(Error::invalid("vocabulary must start with the six special tokens"));
        }
        let mut ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::invalid(alloc::format!("bad vocabulary token {t:?}")));
            }
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(alloc::format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab { tokens, ids })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK_TOKEN, String::as_str)
    }

    pub fn encode(&self, s: &str) -> Vec<usize> {
        self.encode_counted(s).0
    }

    /// Encodes `s`, also returning the number of out-of-vocabulary tokens.
    pub fn encode_counted(&self, s: &str) -> (Vec<usize>, usize) {
        let mut oov = 0;
        let ids = pre_tokenize(s)
            .into_iter()
            .map(|t| {
                self.id(t).unwrap_or_else(|| {
                    oov += 1;
                    UNK
                })
            })
            .collect();
        (ids, oov)
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        let toks: Vec<&str> = ids.iter().map(|&i| self.token(i)).collect();
        detokenize(&toks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn size_counts_specials_and_words() {
        let v = Vocab::build(["a b a"]).unwrap();
        assert_eq!(v.size(), NUM_SPECIAL + 2);
        assert_eq!(v.token(NUM_SPECIAL), "a");
        assert_eq!(v.token(NUM_SPECIAL + 1), "b");
    }

    #[test]
    fn deterministic() {
        let texts = ["the cat sat", "on the mat .", "zebra"];
        assert_eq!(Vocab::build(texts).unwrap(), Vocab::build(texts).unwrap());
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocab::build(["c b a"]).unwrap();
        let words: Vec<&str> = v.tokens()[NUM_SPECIAL..].iter().map(String::as_str).collect();
        assert_eq!(words, vec!["a", "b", "c"]);
    }

    #[test]
    fn unknown_is_unk() {
        let v = Vocab::build(["known words"]).unwrap();
        assert_eq!(v.encode("known mystery"), vec![v.id("known").unwrap(), UNK]);
    }

    #[test]
    fn oov_count() {
        let v = Vocab::build(["alpha beta"]).unwrap();
        let (ids, oov) = v.encode_counted("alpha x beta y z");
        assert_eq!(ids.len(), 5);
        assert_eq!(oov, 3);
    }

    #[test]
    fn empty_string() {
        let v = Vocab::build(["x"]).unwrap();
        assert!(v.encode("").is_empty());
        assert!(Vocab::build(core::iter::empty()).is_err());
    }

    #[test]
    fn round_trip_sentence() {
        let s = "Ada was born in London. T.S. Thakur (a judge) leads India.";
        let v = Vocab::build([s]).unwrap();
        assert_eq!(v.decode(&v.encode(s)), s);
        assert!(v.id("London").is_some());
        assert!(v.id("T.S").is_some());
    }

    #[test]
    fn specials_are_recognized_in_sequences() {
        let v = Vocab::build(["A B"]).unwrap();
        assert_eq!(v.encode("<pad> A <node_sep> B </s>"), vec![PAD, v.id("A").unwrap(), NODE_SEP, v.id("B").unwrap(), EOS]);
        assert_eq!(v.encode("<no_node> <no_edge>"), vec![NO_NODE, NO_EDGE]);
    }

    #[test]
    fn from_tokens_validates() {
        let v = Vocab::build(["a b"]).unwrap();
        assert_eq!(Vocab::from_tokens(v.tokens().to_vec()).unwrap(), v);
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
        let mut dup = v.tokens().to_vec();
        dup.push("a".into());
        assert!(Vocab::from_tokens(dup).is_err());
    }

    proptest::proptest! {
        #[test]
        fn id_token_bijection(words in proptest::collection::vec("[a-z]{1,6}", 1..30)) {
            let text = words.join(" ");
            let v = Vocab::build([text.as_str()]).unwrap();
            for id in 0..v.size() {
                proptest::prop_assert_eq!(v.id(v.token(id)), Some(id));
            }
            for id in v.encode(&text) {
                proptest::prop_assert!(id >= NUM_SPECIAL);
            }
            proptest::prop_assert_eq!(v.decode(&v.encode(&text)), text.clone());
        }
    }
}
