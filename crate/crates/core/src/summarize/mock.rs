use super::prompt::CONTEXT_HEADER;
use super::SummaryProvider;
use crate::semantic::ProviderError;

/// Template-driven stand-in for a chat model. It reads the structured lines
/// of the built-in prompts (`Polarity:`/`Tags:` or the `Facets:` list) and
/// answers with fixed sentence templates.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSummarizer;

pub(crate) fn join_terms(terms: &[&str]) -> String {
    match terms {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn list(value: &str) -> Vec<&str> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn facet_sentence(facet: &str, values: &[&str]) -> String {
    let joined = join_terms(values);
    match (facet, values.is_empty()) {
        ("genres", false) => format!("Lately you have enjoyed {joined} movies."),
        ("actors", false) => format!("Actors you keep coming back to include {joined}."),
        ("directors", false) => format!("Directors behind your recent favorites include {joined}."),
        ("release years", false) => format!("Your recent favorites were released in {joined}."),
        ("languages", false) => format!("Most of them are in {joined}."),
        (f, _) => format!("No particular {f} stand out recently."),
    }
}

impl SummaryProvider for MockSummarizer {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let lines: Vec<&str> = prompt
            .lines()
            .take_while(|l| l.trim() != CONTEXT_HEADER)
            .collect();

        let field = |key: &str| {
            lines
                .iter()
                .find_map(|l| l.trim().strip_prefix(key).map(str::trim))
        };

        if let (Some(polarity), Some(tags)) = (field("Polarity:"), field("Tags:")) {
            let terms = join_terms(&list(tags));
            return match polarity {
                "liked" => Ok(format!("Movies featuring {terms} appeal to you.")),
                "disliked" => Ok(format!("Movies featuring {terms} are generally not favored.")),
                other => Err(ProviderError::BadResponse(format!("unknown polarity {other:?}"))),
            };
        }

        if let Some(start) = lines.iter().position(|l| l.trim() == "Facets:") {
            let mut sentences = Vec::new();
            for facet in ["genres", "actors", "directors", "release years", "languages"] {
                let prefix = format!("- {facet}:");
                let values: Vec<&str> = lines[start + 1..]
                    .iter()
                    .find_map(|l| l.trim().strip_prefix(prefix.as_str()))
                    .map(|v| {
                        list(v)
                            .into_iter()
                            .map(|item| item.rsplit_once(" (").map_or(item, |(label, _)| label))
                            .collect()
                    })
                    .unwrap_or_default();
                sentences.push(facet_sentence(facet, &values));
            }
            return Ok(sentences.join(" "));
        }

        Err(ProviderError::BadResponse(
            "mock summarizer could not recognise the prompt".into(),
        ))
    }
}
