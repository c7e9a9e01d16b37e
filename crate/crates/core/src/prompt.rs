//! Framing shared by every prompt: instructions first, then the paragraph
//! between fixed delimiter lines.

pub const PARAGRAPH_OPEN: &str = "<<<PARAGRAPH>>>";
pub const PARAGRAPH_CLOSE: &str = "<<<END PARAGRAPH>>>";

/// Line appended when a response has to be requested again.
pub const JSON_ONLY_REMINDER: &str = "Return only the JSON object.";

/// Appends the delimited paragraph to an instruction block.
pub fn frame(instructions: &str, paragraph: &str) -> String {
    format!("{instructions}\n\nParagraph:\n{PARAGRAPH_OPEN}\n{paragraph}\n{PARAGRAPH_CLOSE}\n")
}

/// Adds the JSON-only reminder to an already framed prompt.
pub fn with_json_reminder(prompt: &str) -> String {
    format!("{prompt}\n{JSON_ONLY_REMINDER}\n")
}

/// Recovers the paragraph text from a framed prompt.
pub fn framed_paragraph(prompt: &str) -> Option<&str> {
    let start = prompt.find(PARAGRAPH_OPEN)? + PARAGRAPH_OPEN.len();
    let end = prompt.rfind(PARAGRAPH_CLOSE)?;
    if end < start {
        return None;
    }
    let inner = &prompt[start..end];
    let inner = inner.strip_prefix('\n').unwrap_or(inner);
    Some(inner.strip_suffix('\n').unwrap_or(inner))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let p = frame("Do things.", "line one\nline two");
        assert_eq!(framed_paragraph(&p), Some("line one\nline two"));
        let retry = with_json_reminder(&p);
        assert_eq!(framed_paragraph(&retry), Some("line one\nline two"));
        assert!(retry.ends_with("Return only the JSON object.\n"));
    }

    #[test]
    fn unframed_prompt() {
        assert_eq!(framed_paragraph("no delimiters"), None);
    }
}
