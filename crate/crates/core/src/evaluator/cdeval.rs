//! Tendency-match scoring over the six-dimension cultural benchmark.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::corpus::{CdevalCorpus, Dimension};

use super::EvalError;

pub const CDEVAL_REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-dimension tendency-match scores, each the unweighted mean over
/// countries of that country's item match rate. Scores live in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdevalReport {
    pub schema_version: u32,
    pub countries: Vec<String>,
    /// Dimension label -> mean match rate over countries.
    pub dimension_scores: BTreeMap<String, f64>,
    /// Unweighted mean of the dimension scores.
    pub overall: f64,
    /// Country -> dimension label -> match rate for that country alone.
    pub per_country: BTreeMap<String, BTreeMap<String, f64>>,
    /// Fraction of answers substituted after repeated invalid completions;
    /// filled by the evaluation runner, 0.0 for purely offline scoring.
    pub invalid_rate: f64,
}

/// Score already-extracted answers against each country's ground tendency.
///
/// `answers` maps country -> item id -> chosen option index. An item counts
/// for a country only when the corpus records a ground tendency for that
/// pair; a country with no items in some dimension drops out of that
/// dimension's average rather than contributing zero.
pub fn cdeval_score(
    answers: &BTreeMap<String, BTreeMap<String, u32>>,
    corpus: &CdevalCorpus,
    countries: &[String],
) -> Result<CdevalReport, EvalError> {
    if countries.is_empty() {
        return Err(EvalError::EmptyInput { what: "countries" });
    }
    for country in countries {
        if !answers.contains_key(country) {
            return Err(EvalError::MissingAnswers { country: country.clone() });
        }
    }

    let mut per_country: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut dimension_scores = BTreeMap::new();
    for dimension in Dimension::ALL {
        let items = corpus.dimension_items(dimension);
        let mut country_rates = Vec::new();
        for country in countries {
            let country_answers = &answers[country];
            let mut matches = 0u32;
            let mut total = 0u32;
            for item in &items {
                let Some(&ground) = item.ground_tendency.get(country) else {
                    continue;
                };
                total += 1;
                let &answer = country_answers.get(&item.id).ok_or_else(|| {
                    EvalError::MissingItemAnswer {
                        country: country.clone(),
                        item: item.id.clone(),
                    }
                })?;
                let answered = item.pole_of(answer).ok_or(EvalError::AnswerOutOfRange {
                    index: 0,
                    value: answer,
                    k: 2,
                })?;
                let expected = item
                    .pole_of(ground)
                    .expect("ground tendency validated at load");
                if answered == expected {
                    matches += 1;
                }
            }
            if total > 0 {
                let rate = f64::from(matches) / f64::from(total);
                country_rates.push(rate);
                per_country
                    .entry(country.clone())
                    .or_default()
                    .insert(dimension.as_str().to_string(), rate);
            }
        }
        if !country_rates.is_empty() {
            let mean = country_rates.iter().sum::<f64>() / country_rates.len() as f64;
            dimension_scores.insert(dimension.as_str().to_string(), mean);
        }
    }

    if dimension_scores.is_empty() {
        return Err(EvalError::EmptyInput { what: "scored dimensions" });
    }
    let overall = dimension_scores.values().sum::<f64>() / dimension_scores.len() as f64;
    Ok(CdevalReport {
        schema_version: CDEVAL_REPORT_SCHEMA_VERSION,
        countries: countries.to_vec(),
        dimension_scores,
        overall,
        per_country,
        invalid_rate: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_cdeval;
    use std::path::Path;

    fn fixture() -> CdevalCorpus {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cdeval_small.json");
        load_cdeval(&path).unwrap()
    }

    fn ground_answers(corpus: &CdevalCorpus, countries: &[&str]) -> BTreeMap<String, BTreeMap<String, u32>> {
        let mut answers: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for item in corpus.items() {
            for (country, &g) in &item.ground_tendency {
                if countries.contains(&country.as_str()) {
                    answers
                        .entry(country.clone())
                        .or_default()
                        .insert(item.id.clone(), g);
                }
            }
        }
        answers
    }

    #[test]
    fn all_matching_answers_score_one() {
        let corpus = fixture();
        let countries: Vec<String> = ["China", "Germany", "USA", "Russia"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let answers = ground_answers(&corpus, &["China", "Germany", "USA", "Russia"]);
        let report = cdeval_score(&answers, &corpus, &countries).unwrap();
        assert_eq!(report.countries, countries);
        assert_eq!(report.dimension_scores.len(), 6);
        for (dim, score) in &report.dimension_scores {
            assert_eq!(*score, 1.0, "dimension {dim}");
        }
        assert_eq!(report.overall, 1.0);
    }

    #[test]
    fn dimension_score_averages_country_rates_not_pooled_items() {
        // China answers 1 of 2 LTO items correctly, Germany 2 of 2. The
        // dimension score must be (0.5 + 1.0) / 2 = 0.75, not pooled 3/4.
        let corpus = fixture();
        let countries = vec!["China".to_string(), "Germany".to_string()];
        let mut answers = ground_answers(&corpus, &["China", "Germany"]);
        let first = &corpus.dimension_items(Dimension::LTO)[0];
        let china = answers.get_mut("China").unwrap();
        let wrong = 3 - china[&first.id];
        china.insert(first.id.clone(), wrong);
        let report = cdeval_score(&answers, &corpus, &countries).unwrap();
        assert!((report.dimension_scores["LTO"] - 0.75).abs() < 1e-12);
        assert!((report.per_country["China"]["LTO"] - 0.5).abs() < 1e-12);
        assert!((report.per_country["Germany"]["LTO"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uneven_item_coverage_matches_hand_value() {
        // AlphaLand has ground tendencies on all 4 items and matches 3;
        // BetaLand covers 2 items and matches 1: (0.75 + 0.5) / 2 = 0.625.
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cdeval_uneven.json");
        let corpus = load_cdeval(&path).unwrap();
        let countries = vec!["AlphaLand".to_string(), "BetaLand".to_string()];
        let mut answers = ground_answers(&corpus, &["AlphaLand", "BetaLand"]);
        let alpha = answers.get_mut("AlphaLand").unwrap();
        let flipped = 3 - alpha["CDU4"];
        alpha.insert("CDU4".to_string(), flipped);
        let beta = answers.get_mut("BetaLand").unwrap();
        let flipped = 3 - beta["CDU2"];
        beta.insert("CDU2".to_string(), flipped);
        let report = cdeval_score(&answers, &corpus, &countries).unwrap();
        assert!((report.dimension_scores["LTO"] - 0.625).abs() < 1e-9);
        assert_eq!(report.dimension_scores.len(), 1);
        assert_eq!(report.overall, report.dimension_scores["LTO"]);
    }

    #[test]
    fn countries_without_items_drop_from_that_dimension() {
        let corpus = fixture();
        let countries = vec!["China".to_string()];
        let answers = ground_answers(&corpus, &["China"]);
        let report = cdeval_score(&answers, &corpus, &countries).unwrap();
        for score in report.dimension_scores.values() {
            assert_eq!(*score, 1.0);
        }
    }

    #[test]
    fn missing_country_or_item_errors() {
        let corpus = fixture();
        let answers = BTreeMap::new();
        let err = cdeval_score(&answers, &corpus, &["China".to_string()]).unwrap_err();
        assert!(matches!(err, EvalError::MissingAnswers { .. }));

        let mut partial = ground_answers(&corpus, &["China"]);
        partial.get_mut("China").unwrap().remove("CD01");
        let err = cdeval_score(&partial, &corpus, &["China".to_string()]).unwrap_err();
        assert!(matches!(err, EvalError::MissingItemAnswer { .. }));
    }
}
