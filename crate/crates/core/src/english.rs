//! Tiny English helpers shared by the query renderer and the rationale
//! renderer. Covers exactly the vocabulary this crate ships; not a general
//! inflection library.

/// Pluralize a noun phrase by inflecting its last word.
pub(crate) fn pluralize(noun: &str) -> String {
    let (head, last) = match noun.rfind(' ') {
        Some(idx) => (&noun[..=idx], &noun[idx + 1..]),
        None => ("", noun),
    };
    format!("{head}{}", pluralize_word(last))
}

fn pluralize_word(word: &str) -> String {
    match word {
        "knife" => return "knives".to_string(),
        "person" => return "people".to_string(),
        "child" => return "children".to_string(),
        "sheep" => return "sheep".to_string(),
        _ => {}
    }
    if word.ends_with('s')
        || word.ends_with('x')
        || word.ends_with('z')
        || word.ends_with("ch")
        || word.ends_with("sh")
    {
        format!("{word}es")
    } else if word.ends_with('y')
        && !word.ends_with("ay")
        && !word.ends_with("ey")
        && !word.ends_with("oy")
        && !word.ends_with("uy")
    {
        format!("{}ies", &word[..word.len() - 1])
    } else {
        format!("{word}s")
    }
}

/// "a" or "an" for the noun phrase.
pub(crate) fn article(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}
