use crate::error::{Error, Result};

const START: &str = "START";
const END: &str = "END";

/// Returns the trimmed content between the first `START` and the next `END`
/// that follows it.
pub fn extract_marked(text: &str) -> Result<String> {
    let start = text.find(START).ok_or(Error::MarkerNotFound)?;
    let body_start = start + START.len();
    let end = text[body_start..].find(END).ok_or(Error::MarkerNotFound)?;
    Ok(text[body_start..body_start + end].trim().to_string())
}
