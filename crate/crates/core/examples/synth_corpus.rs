//! Generate the synthetic demo corpora.
//!
//! Usage: `cargo run -p culturekit --example synth_corpus -- [DIR]`
//!
//! Writes `survey.json` (18 countries x 13 topics x 6 questions each) and
//! `dimensions.json` (3 items per dimension) under DIR, defaulting to
//! `demo-data`. Majority answers are a fixed function of (country,
//! question), so scripted backends can answer them perfectly in tests.

use std::path::PathBuf;

use culturekit::synth::{self, SynthPlan};

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("demo-data"));
    let survey = dir.join("survey.json");
    synth::write_survey_corpus(&survey, &SynthPlan::default())?;
    let dimensions = dir.join("dimensions.json");
    synth::write_dimension_corpus(&dimensions, SynthPlan::default().countries, 3)?;
    println!("wrote {}", survey.display());
    println!("wrote {}", dimensions.display());
    Ok(())
}
