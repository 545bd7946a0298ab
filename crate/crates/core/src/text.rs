//! Title normalisation shared by the models and the metrics.

/// Lowercase, whitespace-separated tokens with punctuation stripped.
///
/// Letters and digits form tokens. A `.` survives only inside or in front of a
/// numeral (`20.5`, `.5`), an apostrophe only between letters (`kellogg's`),
/// and `&` is kept as a token of its own. Everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, tokens: &mut Vec<String>| {
        if !cur.is_empty() {
            tokens.push(std::mem::take(cur));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        if c.is_alphanumeric() {
            cur.push(c);
        } else if c == '.'
            && next.is_some_and(|n| n.is_ascii_digit())
            && (cur.is_empty() || prev.is_some_and(|p| p.is_ascii_digit()))
            && cur.chars().all(|ch| ch.is_ascii_digit() || ch == '.')
            && !cur.contains('.')
        {
            cur.push(c);
        } else if c == '\''
            && prev.is_some_and(char::is_alphabetic)
            && next.is_some_and(char::is_alphabetic)
        {
            cur.push(c);
        } else if c == '&' {
            flush(&mut cur, &mut tokens);
            tokens.push("&".to_string());
        } else {
            flush(&mut cur, &mut tokens);
        }
    }
    flush(&mut cur, &mut tokens);
    tokens
}

/// `tokenize` joined back with single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerals_stay_whole() {
        assert_eq!(
            tokenize("Lucky Charms Cereal, 20.5 oz. a box"),
            ["lucky", "charms", "cereal", "20.5", "oz", "a", "box"]
        );
        assert_eq!(tokenize("3.1 - 5.1 lbs"), ["3.1", "5.1", "lbs"]);
        assert_eq!(tokenize("1.5-2 lbs."), ["1.5", "2", "lbs"]);
        assert_eq!(tokenize("a 6 pack of .5 liter"), ["a", "6", "pack", "of", ".5", "liter"]);
    }

    #[test]
    fn punctuation_and_ampersand() {
        assert_eq!(
            tokenize("Wonderful Roasted & Salted, (Yoo-Hoo) Kellogg's"),
            ["wonderful", "roasted", "&", "salted", "yoo", "hoo", "kellogg's"]
        );
        assert!(tokenize("  ,, ").is_empty());
        assert_eq!(tokenize("end."), ["end"]);
    }
}
