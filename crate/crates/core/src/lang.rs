use crate::message::Lang;

fn is_arabic(c: char) -> bool {
    matches!(c as u32,
        0x0600..=0x06FF | 0x0750..=0x077F | 0x0870..=0x089F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF)
}

/// Codepoint-ratio heuristic over alphabetic characters: `ar` when at least
/// 30% are Arabic, otherwise `en` when at least 30% are ASCII letters,
/// otherwise `und`.
pub fn detect_language(text: &str) -> Lang {
    let (mut alpha, mut arabic, mut latin) = (0usize, 0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        alpha += 1;
        if is_arabic(c) {
            arabic += 1;
        } else if c.is_ascii_alphabetic() {
            latin += 1;
        }
    }
    if alpha == 0 {
        Lang::Und
    } else if arabic * 10 >= alpha * 3 {
        Lang::Ar
    } else if latin * 10 >= alpha * 3 {
        Lang::En
    } else {
        Lang::Und
    }
}
