//! Pulling source code out of a chat response.

/// Returns the first fenced block tagged with `language`, else the first
/// fenced block of any kind, else the whole response. The result has leading
/// blank lines and trailing whitespace removed; first-line indentation is kept.
pub fn extract_code(response: &str, language: &str) -> String {
    let blocks = fenced_blocks(response);
    let chosen = blocks
        .iter()
        .find(|b| info_matches(&b.info, language))
        .or_else(|| blocks.first())
        .map(|b| b.body.as_str())
        .unwrap_or(response);
    tidy(chosen)
}

#[derive(Debug)]
struct Block {
    info: String,
    body: String,
}

fn fence_of(line: &str) -> Option<(&str, &str)> {
    let trimmed = line.trim_start();
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    for fence in ["```", "~~~"] {
        if let Some(rest) = trimmed.strip_prefix(fence) {
            let extra = rest.trim_start_matches(&fence[..1]);
            return Some((fence, extra.trim()));
        }
    }
    None
}

fn fenced_blocks(text: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut open: Option<(&str, String, Vec<&str>)> = None;
    for line in text.lines() {
        match open.take() {
            None => {
                if let Some((fence, info)) = fence_of(line) {
                    open = Some((fence, info.to_string(), Vec::new()));
                }
            }
            Some((fence, info, mut body)) => match fence_of(line) {
                Some((f, rest)) if f == fence && rest.is_empty() => blocks.push(Block {
                    info,
                    body: body.join("\n"),
                }),
                _ => {
                    body.push(line);
                    open = Some((fence, info, body));
                }
            },
        }
    }
    // an unterminated fence runs to the end of the response
    if let Some((_, info, body)) = open {
        blocks.push(Block {
            info,
            body: body.join("\n"),
        });
    }
    blocks
}

fn info_matches(info: &str, language: &str) -> bool {
    let tag = info.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
    let lang = language.to_ascii_lowercase();
    if tag.is_empty() {
        return false;
    }
    tag == lang
        || match lang.as_str() {
            "python" => matches!(tag.as_str(), "py" | "python3" | "py3"),
            "cpp" | "c++" => matches!(tag.as_str(), "cpp" | "c++" | "cc" | "cxx"),
            "javascript" | "js" => matches!(tag.as_str(), "js" | "javascript" | "node"),
            _ => false,
        }
}

fn tidy(s: &str) -> String {
    let mut lines: Vec<&str> = s.lines().collect();
    while lines.first().is_some_and(|l| l.trim().is_empty()) {
        lines.remove(0);
    }
    lines.join("\n").trim_end().to_string()
}
