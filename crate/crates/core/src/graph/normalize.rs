//! Text clean-up applied to dataset strings before tokenization.

use alloc::string::String;
use alloc::vec::Vec;

/// U+00A0..=U+00FF. `None` marks characters with no ASCII stand-in.
#[rustfmt::skip]
const LATIN1: [Option<&str>; 96] = [
    // A0: nbsp ¡ ¢ £ ¤ ¥ ¦ § ¨ © ª « ¬ soft-hyphen ® ¯
    Some(" "), Some("!"), Some("c"), None, None, None, Some("|"), None,
    None, None, Some("a"), Some("\""), None, Some(""), None, None,
    // B0: ° ± ² ³ ´ µ ¶ · ¸ ¹ º » ¼ ½ ¾ ¿
    None, None, Some("2"), Some("3"), Some("'"), Some("u"), None, Some("."),
    None, Some("1"), Some("o"), Some("\""), Some("1/4"), Some("1/2"), Some("3/4"), Some("?"),
    // C0: À Á Â Ã Ä Å Æ Ç È É Ê Ë Ì Í Î Ï
    Some("A"), Some("A"), Some("A"), Some("A"), Some("A"), Some("A"), Some("AE"), Some("C"),
    Some("E"), Some("E"), Some("E"), Some("E"), Some("I"), Some("I"), Some("I"), Some("I"),
    // D0: Ð Ñ Ò Ó Ô Õ Ö × Ø Ù Ú Û Ü Ý Þ ß
    Some("D"), Some("N"), Some("O"), Some("O"), Some("O"), Some("O"), Some("O"), Some("x"),
    Some("O"), Some("U"), Some("U"), Some("U"), Some("U"), Some("Y"), Some("TH"), Some("ss"),
    // E0: à á â ã ä å æ ç è é ê ë ì í î ï
    Some("a"), Some("a"), Some("a"), Some("a"), Some("a"), Some("a"), Some("ae"), Some("c"),
    Some("e"), Some("e"), Some("e"), Some("e"), Some("i"), Some("i"), Some("i"), Some("i"),
    // F0: ð ñ ò ó ô õ ö ÷ ø ù ú û ü ý þ ÿ
    Some("d"), Some("n"), Some("o"), Some("o"), Some("o"), Some("o"), Some("o"), Some("/"),
    Some("o"), Some("u"), Some("u"), Some("u"), Some("u"), Some("y"), Some("th"), Some("y"),
];

/// U+0100..=U+017F, Latin Extended-A.
#[rustfmt::skip]
const LATIN_EXT_A: [&str; 128] = [
    // 0100
    "A", "a", "A", "a", "A", "a", "C", "c", "C", "c", "C", "c", "C", "c", "D", "d",
    // 0110
    "D", "d", "E", "e", "E", "e", "E", "e", "E", "e", "E", "e", "G", "g", "G", "g",
    // 0120
    "G", "g", "G", "g", "H", "h", "H", "h", "I", "i", "I", "i", "I", "i", "I", "i",
    // 0130
    "I", "i", "IJ", "ij", "J", "j", "K", "k", "k", "L", "l", "L", "l", "L", "l", "L",
    // 0140
    "l", "L", "l", "N", "n", "N", "n", "N", "n", "'n", "N", "n", "O", "o", "O", "o",
    // 0150
    "O", "o", "OE", "oe", "R", "r", "R", "r", "R", "r", "S", "s", "S", "s", "S", "s",
    // 0160
    "S", "s", "T", "t", "T", "t", "T", "t", "U", "u", "U", "u", "U", "u", "U", "u",
    // 0170
    "U", "u", "U", "u", "W", "w", "Y", "y", "Y", "Z", "z", "Z", "z", "Z", "z", "s",
];

/// Typographic punctuation and a few Latin Extended-B letters common in names.
const EXTRA: &[(char, &str)] = &[
    ('\u{0218}', "S"),
    ('\u{0219}', "s"),
    ('\u{021A}', "T"),
    ('\u{021B}', "t"),
    ('\u{2010}', "-"),
    ('\u{2011}', "-"),
    ('\u{2012}', "-"),
    ('\u{2013}', "-"),
    ('\u{2014}', "-"),
    ('\u{2015}', "-"),
    ('\u{2018}', "'"),
    ('\u{2019}', "'"),
    ('\u{201A}', "'"),
    ('\u{201B}', "'"),
    ('\u{201C}', "\""),
    ('\u{201D}', "\""),
    ('\u{201E}', "\""),
    ('\u{201F}', "\""),
    ('\u{2026}', "..."),
    ('\u{2032}', "'"),
    ('\u{2033}', "\""),
];

/// ASCII replacement for `c`, or `None` when the character is dropped.
pub fn fold_char(c: char) -> Option<&'static str> {
    let cp = c as u32;
    match cp {
        0x00..=0x7F => None,
        0xA0..=0xFF => LATIN1[(cp - 0xA0) as usize],
        0x100..=0x17F => Some(LATIN_EXT_A[(cp - 0x100) as usize]),
        _ => EXTRA
            .binary_search_by_key(&c, |&(k, _)| k)
            .ok()
            .map(|i| EXTRA[i].1),
    }
}

/// Normalizes a dataset string: folds non-ASCII characters to ASCII, turns
/// underscores into spaces, collapses whitespace and strips surrounding
/// quote pairs. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    normalize_text_counted(raw).0
}

/// Like [`normalize_text`], also returning how many characters had no ASCII
/// mapping and were dropped.
pub fn normalize_text_counted(raw: &str) -> (String, usize) {
    let mut folded = String::with_capacity(raw.len());
    let mut dropped = 0;
    for c in raw.chars() {
        if c.is_ascii() {
            folded.push(if c == '_' { ' ' } else { c });
        } else if let Some(rep) = fold_char(c) {
            folded.push_str(rep);
        } else {
            dropped += 1;
        }
    }
    let mut out = collapse_ws(&folded);
    loop {
        let b = out.as_bytes();
        if b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0] {
            out = collapse_ws(&out[1..out.len() - 1]);
        } else {
            break;
        }
    }
    if dropped > 0 {
        log::warn!("normalize_text: dropped {dropped} unmappable character(s)");
    }
    (out, dropped)
}

fn collapse_ws(s: &str) -> String {
    s.split_ascii_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn underscores_become_spaces() {
        assert_eq!(normalize_text("Agra_Airport"), "Agra Airport");
    }

    #[test]
    fn diacritics_fold() {
        assert_eq!(normalize_text("São_Paulo"), "Sao Paulo");
        assert_eq!(normalize_text("Søren Kierkegaard"), "Soren Kierkegaard");
        assert_eq!(normalize_text("Łódź"), "Lodz");
        assert_eq!(normalize_text("Straße"), "Strasse");
        assert_eq!(normalize_text("Œuvre"), "OEuvre");
    }

    #[test]
    fn clean_input_unchanged() {
        assert_eq!(normalize_text("plain text"), "plain text");
    }

    #[test]
    fn surrounding_quotes_stripped() {
        assert_eq!(normalize_text("\"Cheap\""), "Cheap");
        assert_eq!(normalize_text("“Quoted_value”"), "Quoted value");
        assert_eq!(normalize_text("' \"nested\" '"), "nested");
        // an apostrophe on one side only is content
        assert_eq!(normalize_text("Jones'"), "Jones'");
    }

    #[test]
    fn unmappable_chars_are_counted() {
        let (s, dropped) = normalize_text_counted("Tokyo 東京");
        assert_eq!(s, "Tokyo");
        assert_eq!(dropped, 2);
    }

    #[test]
    fn table_is_sorted() {
        assert!(EXTRA.windows(2).all(|w| w[0].0 < w[1].0));
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(once.is_ascii());
        }

        #[test]
        fn idempotent_latin(s in "[a-zA-Z_ \"'\u{00A0}-\u{017F}\u{2018}-\u{201F}]{0,30}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }
    }
}
