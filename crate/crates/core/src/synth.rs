//! Deterministic synthetic corpora and scripted oracles.
//!
//! These builders fabricate survey and dimension-benchmark documents whose
//! majority answers are a pure function of (country, question), so an
//! offline scripted backend can play a model that knows every answer. They
//! back the end-to-end tests and the bundled demo data; nothing here is
//! real survey data.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{ground_truth, CdevalCorpus, Corpus};
use crate::gateway::{sha256_hex, ChatRequest};

/// Country names used by the generated survey corpus, in header order.
pub const SYNTH_COUNTRIES: [&str; 18] = [
    "United States",
    "China",
    "Germany",
    "India",
    "Brazil",
    "Nigeria",
    "Japan",
    "Mexico",
    "Russia",
    "Egypt",
    "Indonesia",
    "Turkey",
    "France",
    "South Korea",
    "Canada",
    "Argentina",
    "Kenya",
    "Vietnam",
];

/// Questionnaire topic names used by the generated survey corpus.
pub const SYNTH_TOPICS: [&str; 13] = [
    "Social Values, Attitudes & Stereotypes",
    "Happiness and Well-Being",
    "Social Capital, Trust & Organizational Membership",
    "Economic Values",
    "Corruption",
    "Migration",
    "Security",
    "Ethical Values and Norms",
    "Religious Values",
    "Political Interest & Political Participation",
    "Political Culture & Political Regimes",
    "Science & Technology",
    "Index of Postmaterialism",
];

/// Shape of a generated survey corpus.
#[derive(Debug, Clone, Copy)]
pub struct SynthPlan {
    pub countries: usize,
    pub topics: usize,
    pub questions_per_topic: usize,
}

impl Default for SynthPlan {
    fn default() -> Self {
        SynthPlan {
            countries: SYNTH_COUNTRIES.len(),
            topics: SYNTH_TOPICS.len(),
            questions_per_topic: 6,
        }
    }
}

fn option_labels(k: usize) -> Vec<String> {
    match k {
        2 => vec!["Agree".into(), "Disagree".into()],
        3 => vec!["Agree".into(), "Neutral".into(), "Disagree".into()],
        _ => vec![
            "Very important".into(),
            "Rather important".into(),
            "Not very important".into(),
            "Not at all important".into(),
        ],
    }
}

/// Build the synthetic survey corpus document. The majority option for
/// country c (0-based header position) on question j of topic t is
/// 1 + (c + t + j) mod K, holding a 0.7 share; the rest split evenly.
pub fn survey_corpus_doc(plan: &SynthPlan) -> serde_json::Value {
    assert!(plan.countries <= SYNTH_COUNTRIES.len(), "at most 18 countries");
    assert!(plan.topics <= SYNTH_TOPICS.len(), "at most 13 topics");
    let countries = &SYNTH_COUNTRIES[..plan.countries];
    let topics = &SYNTH_TOPICS[..plan.topics];

    let mut questions = Vec::new();
    for (t, topic) in topics.iter().enumerate() {
        for j in 0..plan.questions_per_topic {
            let k = 2 + (t + j) % 3;
            let id = format!("S{:02}{:02}", t + 1, j + 1);
            let text = format!(
                "Thinking about {}, how much do you agree with statement {} of this section?",
                topic.to_lowercase(),
                j + 1
            );
            let mut distributions = serde_json::Map::new();
            for (c, country) in countries.iter().enumerate() {
                let majority = (c + t + j) % k;
                let minor = 0.3 / (k as f64 - 1.0);
                let shares: Vec<f64> = (0..k)
                    .map(|i| if i == majority { 0.7 } else { minor })
                    .collect();
                distributions.insert((*country).to_string(), serde_json::json!(shares));
            }
            questions.push(serde_json::json!({
                "id": id,
                "topic": topic,
                "text": text,
                "options": option_labels(k),
                "distributions": distributions,
            }));
        }
    }

    serde_json::json!({
        "schema_version": 1,
        "source": "synthetic-survey",
        "countries": countries,
        "topics": topics,
        "questions": questions,
    })
}

/// Write the synthetic survey corpus to disk as pretty JSON.
pub fn write_survey_corpus(path: &Path, plan: &SynthPlan) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let doc = survey_corpus_doc(plan);
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap() + "\n")
}

/// Build a synthetic dimension benchmark: `items_per_dimension` binary items
/// for each of the six dimensions. Country c's ground tendency on item j of
/// dimension d is 1 + (c + d + j) mod 2.
pub fn dimension_corpus_doc(countries: usize, items_per_dimension: usize) -> serde_json::Value {
    assert!(countries <= SYNTH_COUNTRIES.len(), "at most 18 countries");
    let countries = &SYNTH_COUNTRIES[..countries];
    let dims = ["LTO", "MAS", "PDI", "IDV", "IVR", "UAI"];
    let mut items = Vec::new();
    for (d, dim) in dims.iter().enumerate() {
        for j in 0..items_per_dimension {
            let mut ground = serde_json::Map::new();
            for (c, country) in countries.iter().enumerate() {
                ground.insert((*country).to_string(), serde_json::json!(1 + (c + d + j) % 2));
            }
            items.push(serde_json::json!({
                "id": format!("D{}{:02}", dim, j + 1),
                "dimension": dim,
                "text": format!(
                    "Facing scenario {} of the {} series, which course would you take?",
                    j + 1,
                    dim
                ),
                "options": [
                    format!("Course favoring the first pole of {dim}"),
                    format!("Course favoring the second pole of {dim}"),
                ],
                "tendency_map": {"1": "high", "2": "low"},
                "ground_tendency": ground,
            }));
        }
    }
    serde_json::json!({
        "schema_version": 1,
        "source": "synthetic-dimensions",
        "countries": countries,
        "items": items,
    })
}

/// Write the synthetic dimension benchmark to disk as pretty JSON.
pub fn write_dimension_corpus(
    path: &Path,
    countries: usize,
    items_per_dimension: usize,
) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let doc = dimension_corpus_doc(countries, items_per_dimension);
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap() + "\n")
}

/// Country named in the survey persona, if the system prompt carries one.
pub fn persona_country(system: &str) -> Option<&str> {
    let start = system.find("a/an ")? + "a/an ".len();
    let rest = &system[start..];
    let end = rest.find(" cultural background")?;
    Some(&rest[..end])
}

/// The question text of the final `#Question: ... #Options:` line. Prompts
/// with in-context cases repeat the pattern, so the last occurrence wins.
pub fn last_question_text(user: &str) -> Option<&str> {
    let start = user.rfind("#Question: ")? + "#Question: ".len();
    let rest = &user[start..];
    let end = rest.find(" #Options:")?;
    Some(&rest[..end])
}

fn short_key(user: &str) -> String {
    sha256_hex(user.as_bytes())[..8].to_string()
}

fn mining_reply(user: &str) -> Option<String> {
    if user.contains("List exactly ") && user.contains(" cultural norms of ") {
        let start = user.find("List exactly ")? + "List exactly ".len();
        let n: usize = user[start..].split_whitespace().next()?.parse().ok()?;
        let key = short_key(user);
        let lines: Vec<String> = (1..=n)
            .map(|i| format!("{i}. Shared conviction {i} of this community (key {key})."))
            .collect();
        return Some(lines.join("\n"));
    }
    if user.contains("Below is a questionnaire item") {
        return Some(format!(
            "1. Respondents here consistently favor the leading option (key {}).",
            short_key(user)
        ));
    }
    if user.contains("Below are low-level cultural norms") {
        return Some(format!(
            "1. A common thread of local duty runs through these habits (key {}).",
            short_key(user)
        ));
    }
    None
}

/// Scripted-backend handler that answers every prompt the pipeline can
/// produce: mining prompts get well-formed norm lists, survey questions get
/// a think-wrapped majority answer for the persona country.
pub fn oracle_handler(
    corpus: &Corpus,
) -> impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static {
    oracle_with_errors(corpus, 0)
}

/// Like [`oracle_handler`], but every request whose seed is a nonzero
/// multiple of `wrong_every` answers with a deliberately wrong option
/// (still with reasoning). `wrong_every` of 0 never errs. Useful for
/// exercising rejection sampling and preference-pair collection.
pub fn oracle_with_errors(
    corpus: &Corpus,
    wrong_every: u64,
) -> impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static {
    let by_text: HashMap<String, String> = corpus
        .questions()
        .iter()
        .map(|q| (q.text.clone(), q.id.clone()))
        .collect();
    let corpus = corpus.clone();
    move |req: &ChatRequest| {
        if let Some(reply) = mining_reply(&req.user) {
            return Some(reply);
        }
        let country = persona_country(&req.system)?;
        let text = last_question_text(&req.user)?;
        let id = by_text.get(text)?;
        let ground = ground_truth(&corpus, id, country).ok()?;
        let k = corpus.question(id).ok()?.option_count();
        let wrong_turn = wrong_every != 0 && req.seed != 0 && req.seed % wrong_every == 0;
        let answer = if wrong_turn { ground % k + 1 } else { ground };
        let stance = if wrong_turn { "Second-guessing myself" } else { "Following my upbringing" };
        Some(format!(
            "<think>{stance} as someone from {country}, option {answer} fits best.</think> {answer}"
        ))
    }
}

/// Scripted-backend handler answering dimension benchmark items with the
/// persona country's ground tendency.
pub fn dimension_oracle_handler(
    cdeval: &CdevalCorpus,
) -> impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static {
    let by_text: HashMap<String, (String, std::collections::BTreeMap<String, u32>)> = cdeval
        .items()
        .iter()
        .map(|i| (i.text.clone(), (i.id.clone(), i.ground_tendency.clone())))
        .collect();
    move |req: &ChatRequest| {
        let country = persona_country(&req.system)?;
        let text = last_question_text(&req.user)?;
        let (_, ground) = by_text.get(text)?;
        let answer = ground.get(country)?;
        Some(format!("<think>My instinct points to option {answer}.</think> {answer}"))
    }
}
