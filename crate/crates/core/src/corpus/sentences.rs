/// Rule-based sentence splitter: a boundary follows `.`, `!` or `?` when the
/// next characters are whitespace and then an uppercase letter, or the end
/// of the text. Abbreviations are not special-cased.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') && is_boundary(&chars[i + 1..]) {
            push_trimmed(&mut out, &chars[start..=i]);
            start = i + 1;
        }
        i += 1;
    }
    if start < chars.len() {
        push_trimmed(&mut out, &chars[start..]);
    }
    out
}

fn is_boundary(rest: &[char]) -> bool {
    let ws = rest.iter().take_while(|c| c.is_whitespace()).count();
    match rest.get(ws) {
        None => true,
        Some(c) => ws > 0 && c.is_uppercase(),
    }
}

fn push_trimmed(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_owned());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic() {
        assert_eq!(segment_sentences("Hello. World."), ["Hello.", "World."]);
    }

    #[test]
    fn lowercase_follower_does_not_split() {
        assert_eq!(segment_sentences("Hi! how are you"), ["Hi! how are you"]);
    }

    #[test]
    fn empty() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("  \n ").is_empty());
    }

    #[test]
    fn ellipsis_and_newlines() {
        assert_eq!(
            segment_sentences("Wait... What?\nYes!  No."),
            ["Wait...", "What?", "Yes!", "No."]
        );
        assert_eq!(segment_sentences("3.5 is a number."), ["3.5 is a number."]);
    }
}
