use std::sync::OnceLock;

use regex::Regex;

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"(?i)(?:\bnot\s+|n't\s+)(?:true|correct|consistent|accurate)\b",
            r"|\b(?:true|yes|correct|consistent|accurate)\b",
            r"|\b(?:false|no|incorrect|inconsistent|wrong|inaccurate|untrue)\b",
        ))
        .unwrap()
    })
}

/// First verdict word in the reply: `Some(true)` for true/yes/correct/
/// consistent, `Some(false)` for false/no/incorrect/inconsistent/wrong or a
/// negated positive, `None` when nothing matches.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let m = verdict_re().find(reply)?;
    let word = m.as_str().to_ascii_lowercase();
    if word.starts_with("not") || word.starts_with("n't") {
        return Some(false);
    }
    Some(matches!(
        word.as_str(),
        "true" | "yes" | "correct" | "consistent" | "accurate"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon() {
        assert_eq!(parse_verdict("I think this is correct"), Some(true));
        assert_eq!(parse_verdict("this is wrong"), Some(false));
        assert_eq!(parse_verdict("Inconsistent: the answer differs"), Some(false));
        assert_eq!(parse_verdict("CONSISTENT"), Some(true));
        assert_eq!(parse_verdict("That is not true."), Some(false));
        assert_eq!(parse_verdict("It isn't correct"), Some(false));
        assert_eq!(parse_verdict("Hard to say."), None);
    }

    #[test]
    fn first_match_wins() {
        assert_eq!(parse_verdict("True. There is no contradiction."), Some(true));
        assert_eq!(parse_verdict("No, that is true only in children."), Some(false));
    }
}
