//! Ship gate: every release criterion as one test, each printing a
//! `[acceptance] <criterion>: PASS` or `: FAIL` line (visible with
//! `cargo test -p culturekit --test acceptance -- --nocapture`).
//!
//! The checks pin the scoring formulas to independent in-test oracles,
//! drive the full mine/eval/distill pipeline offline against scripted
//! backends, and hold the determinism, dataset, and prompt-wording
//! contracts the rest of the workspace relies on.

use std::collections::{BTreeMap, HashMap};
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use culturekit::corpus::{
    ground_truth, load_cdeval, load_corpus, split_train_test, Corpus, CorpusSplit, Question,
};
use culturekit::distiller::{self, DistillConfig, DistillVariant};
use culturekit::evaluator::{
    self, alignment_score, cdeval_score, max_distance, paired_t_test, EvalConfig, EvalMode,
};
use culturekit::extract::extract_answer;
use culturekit::gateway::{ChatRequest, Gateway, ScriptedBackend};
use culturekit::miner::{self, MiningConfig, MiningMethod, NormBank};
use culturekit::pipeline::{self, RunConfig};
use culturekit::prompting::{self, AnswerEvidence, IclCase, RankedOption};
use culturekit::synth::{self, SynthPlan};

/// Run one criterion and print its verdict, so the gate reads as one line
/// per criterion even when a check panics mid-way.
fn criterion<F: FnOnce()>(name: &str, check: F) {
    match std::panic::catch_unwind(AssertUnwindSafe(check)) {
        Ok(()) => println!("[acceptance] {name}: PASS"),
        Err(payload) => {
            println!("[acceptance] {name}: FAIL");
            std::panic::resume_unwind(payload);
        }
    }
}

fn synth_corpus(dir: &Path, plan: &SynthPlan) -> Corpus {
    let path = dir.join("corpus.json");
    synth::write_survey_corpus(&path, plan).unwrap();
    load_corpus(&path).unwrap()
}

fn scripted(corpus: &Corpus, wrong_every: u64) -> Gateway {
    Gateway::new(Box::new(
        ScriptedBackend::new().with_handler(synth::oracle_with_errors(corpus, wrong_every)),
    ))
}

/// Independent transliteration of the alignment formula: one minus the
/// ratio of the answer-vector Euclidean distance to the farthest possible
/// distance, scaled to 100. Kept free of any library code on purpose.
fn reference_alignment(answers: &[u32], reference: &[u32], counts: &[u32]) -> f64 {
    let distance: f64 = answers
        .iter()
        .zip(reference)
        .map(|(&a, &r)| (f64::from(a) - f64::from(r)).powi(2))
        .sum::<f64>()
        .sqrt();
    let farthest: f64 = counts
        .iter()
        .map(|&k| f64::from(k - 1).powi(2))
        .sum::<f64>()
        .sqrt();
    (1.0 - distance / farthest) * 100.0
}

#[test]
fn alignment_score_matches_an_independent_oracle() {
    criterion(
        "alignment score equals independent oracle on 1000 random instances",
        || {
            let started = Instant::now();
            let mut rng = StdRng::seed_from_u64(0x5eed_0001);
            for _ in 0..1000 {
                let n = rng.gen_range(1..=20);
                let counts: Vec<u32> = (0..n).map(|_| rng.gen_range(2..=10)).collect();
                let answers: Vec<u32> = counts.iter().map(|&k| rng.gen_range(1..=k)).collect();
                let reference: Vec<u32> = counts.iter().map(|&k| rng.gen_range(1..=k)).collect();

                let got = alignment_score(&answers, &reference, &counts).unwrap();
                let want = reference_alignment(&answers, &reference, &counts);
                assert!((got - want).abs() < 1e-9, "oracle disagreement: {got} vs {want}");

                // Identical vectors must land on 100 exactly; answering the
                // top option against an all-ones reference is the farthest
                // configuration and must land on 0 exactly.
                assert_eq!(alignment_score(&answers, &answers, &counts).unwrap(), 100.0);
                let ones: Vec<u32> = vec![1; counts.len()];
                assert_eq!(alignment_score(&ones, &counts, &counts).unwrap(), 0.0);
            }
            assert!(started.elapsed().as_secs_f64() < 5.0, "oracle sweep too slow");
        },
    );
}

#[test]
fn metric_endpoints_match_hand_derived_values() {
    criterion("metric endpoint values match the hand oracle", || {
        let score = alignment_score(&[1, 2, 3], &[4, 2, 3], &[4, 4, 4]).unwrap();
        assert!((score - 42.264973).abs() < 1e-5, "got {score}");
        let farthest = max_distance(&[4, 4]).unwrap();
        assert!((farthest - 4.242640687).abs() < 1e-8, "got {farthest}");
    });
}

fn snapshot_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let name = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(name, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Mine, evaluate in norms mode, and distill into `root`, pinning the
/// artifact timestamp so bytes can be compared across runs.
fn full_pipeline(gateway: &Gateway, corpus: &Corpus, root: &Path) {
    let base = RunConfig {
        mode: EvalMode::Norms,
        variant: DistillVariant::Cnca,
        num_norms: 1,
        train_per_topic: 1,
        rounds: 2,
        per_round: 3,
        fixed_timestamp: Some(0),
        norms_dir: Some(root.join("norms")),
        out_dir: root.join("mine"),
        ..RunConfig::default()
    };
    pipeline::run_mine(gateway, corpus, &base).unwrap();
    let eval = RunConfig { out_dir: root.join("eval"), ..base.clone() };
    pipeline::run_eval(gateway, corpus, &eval).unwrap();
    let distill = RunConfig { out_dir: root.join("distill"), ..base };
    pipeline::run_distill(gateway, corpus, &distill).unwrap();
}

#[test]
fn record_and_replay_produce_byte_identical_artifacts() {
    criterion("record/replay artifacts byte-identical across 3 executions", || {
        let tmp = tempfile::tempdir().unwrap();
        let plan = SynthPlan { countries: 2, topics: 2, questions_per_topic: 6 };
        let corpus = synth_corpus(tmp.path(), &plan);

        let store = tmp.path().join("store");
        let backend = ScriptedBackend::new().with_handler(synth::oracle_with_errors(&corpus, 3));
        let recorder = Gateway::recording(Box::new(backend), &store).unwrap();
        full_pipeline(&recorder, &corpus, &tmp.path().join("recorded"));
        let recorded = snapshot_tree(&tmp.path().join("recorded"));
        assert!(recorded.contains_key("eval/report.json"));
        assert!(recorded.contains_key("distill/sft.jsonl"));

        for attempt in 0..3 {
            let replayer = Gateway::replay(&store).unwrap();
            let root = tmp.path().join(format!("replay-{attempt}"));
            full_pipeline(&replayer, &corpus, &root);
            let replayed = snapshot_tree(&root);
            assert_eq!(
                recorded.keys().collect::<Vec<_>>(),
                replayed.keys().collect::<Vec<_>>(),
                "replay {attempt} produced a different artifact listing"
            );
            for (name, bytes) in &recorded {
                assert!(
                    replayed[name] == *bytes,
                    "replay {attempt}: {name} differs from the recorded bytes"
                );
            }
        }
    });
}

#[test]
fn ground_truth_echo_scores_perfectly_in_every_mode() {
    criterion("ground-truth echo scores exactly 100.0 in all three modes", || {
        let tmp = tempfile::tempdir().unwrap();
        let plan = SynthPlan { countries: 2, topics: 2, questions_per_topic: 6 };
        let corpus = synth_corpus(tmp.path(), &plan);

        let base = RunConfig {
            num_norms: 1,
            train_per_topic: 1,
            norms_dir: Some(tmp.path().join("norms")),
            out_dir: tmp.path().join("mine"),
            fixed_timestamp: Some(0),
            ..RunConfig::default()
        };
        pipeline::run_mine(&scripted(&corpus, 0), &corpus, &base).unwrap();

        for mode in EvalMode::ALL {
            let cfg = RunConfig {
                mode,
                out_dir: tmp.path().join(format!("eval-{mode}")),
                ..base.clone()
            };
            let out = pipeline::run_eval(&scripted(&corpus, 0), &corpus, &cfg).unwrap();
            assert_eq!(out.report.overall_mean, 100.0, "mode {mode}");
            assert_eq!(out.report.invalid_rate, 0.0, "mode {mode}");
            for country in &out.report.countries {
                assert_eq!(country.mean, 100.0, "mode {mode}, {}", country.country);
            }
        }
    });
}

/// Handler that answers correctly (with reasoning) only at one seed and
/// with a definite wrong option everywhere else, so the accepted call
/// position is fully scripted.
fn correct_only_at(
    corpus: &Corpus,
    position: u64,
) -> impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static {
    let by_text: HashMap<String, String> = corpus
        .questions()
        .iter()
        .map(|q| (q.text.clone(), q.id.clone()))
        .collect();
    let corpus = corpus.clone();
    move |req: &ChatRequest| {
        let country = synth::persona_country(&req.system)?;
        let text = synth::last_question_text(&req.user)?;
        let id = by_text.get(text)?;
        let ground = ground_truth(&corpus, id, country).ok()?;
        let k = corpus.question(id).ok()?.option_count();
        let answer = if req.seed == position { ground } else { ground % k + 1 };
        Some(format!("<think>narrowing the options down</think> {answer}"))
    }
}

#[test]
fn rejection_sampling_accounting_is_exact() {
    criterion(
        "rejection sampling accounting: (1,1), (15,2), fallback (100,10), 200 random traces",
        || {
            let tmp = tempfile::tempdir().unwrap();
            let plan = SynthPlan { countries: 2, topics: 1, questions_per_topic: 6 };
            let corpus = synth_corpus(tmp.path(), &plan);
            let cfg = DistillConfig { rounds: 10, per_round: 10, ..DistillConfig::default() };
            let country = corpus.countries()[0].clone();
            let qid = corpus.questions()[0].id.clone();

            let sample_at = |position: u64| {
                let gw = Gateway::new(Box::new(
                    ScriptedBackend::new().with_handler(correct_only_at(&corpus, position)),
                ));
                distiller::synthesize_cot(&gw, &corpus, &qid, &country, None, &cfg).unwrap()
            };

            let sample = sample_at(1);
            assert_eq!((sample.calls_used, sample.rounds_used), (1, 1));
            assert!(sample.reasoning.is_some());

            let sample = sample_at(15);
            assert_eq!((sample.calls_used, sample.rounds_used), (15, 2));

            // Position 0 never matches a seed, so every completion is wrong
            // and the budget exhausts into the no-reasoning fallback.
            let sample = sample_at(0);
            assert_eq!((sample.calls_used, sample.rounds_used), (100, 10));
            assert!(sample.reasoning.is_none(), "fallback must carry no reasoning");
            assert_eq!(sample.answer, ground_truth(&corpus, &qid, &country).unwrap());
            assert!(sample.correct);

            let mut rng = StdRng::seed_from_u64(0x5eed_0002);
            for _ in 0..200 {
                let position: u64 = rng.gen_range(1..=100);
                let question = &corpus.questions()[rng.gen_range(0..corpus.len())];
                let country = &corpus.countries()[rng.gen_range(0..corpus.countries().len())];
                let gw = Gateway::new(Box::new(
                    ScriptedBackend::new().with_handler(correct_only_at(&corpus, position)),
                ));
                let sample =
                    distiller::synthesize_cot(&gw, &corpus, &question.id, country, None, &cfg)
                        .unwrap();
                assert_eq!(u64::from(sample.calls_used), position);
                assert_eq!(
                    sample.rounds_used,
                    (sample.calls_used + cfg.per_round - 1) / cfg.per_round
                );
                assert!(sample.calls_used >= 1);
                assert!(sample.calls_used <= cfg.rounds * cfg.per_round);
                assert!(sample.calls_used > (sample.rounds_used - 1) * cfg.per_round);
                assert!(sample.reasoning.is_some());
                assert!(sample.correct);
            }
        },
    );
}

#[test]
fn mined_norm_counts_follow_the_method_contract() {
    criterion(
        "norm cardinality: question-grounded m=5 gives 5 low + 1 high, topic-only gives n low",
        || {
            let tmp = tempfile::tempdir().unwrap();
            let plan = SynthPlan { countries: 2, topics: 1, questions_per_topic: 6 };
            let corpus = synth_corpus(tmp.path(), &plan);
            let gw = scripted(&corpus, 0);
            let country = corpus.countries()[0].clone();
            let topic = corpus.topics()[0].clone();
            let split = split_train_test(&corpus, &country, 5, None).unwrap();

            for method in [
                MiningMethod::TopicQuestionTopAnswer,
                MiningMethod::TopicQuestionRankedAnswers,
            ] {
                let set =
                    miner::mine(&gw, &corpus, &split, &topic, method, &MiningConfig::default())
                        .unwrap();
                assert_eq!(set.low_norms.len(), 5, "method {method}");
                assert!(set.high_norm.is_some(), "method {method}");
                assert!(set.low_norms.iter().all(|n| n.question_id.is_some()));
            }

            let cfg = MiningConfig { norms_per_topic: 7, ..MiningConfig::default() };
            let set = miner::mine(&gw, &corpus, &split, &topic, MiningMethod::Topic, &cfg).unwrap();
            assert_eq!(set.low_norms.len(), 7);
            assert!(set.high_norm.is_none());
            assert!(set.low_norms.iter().all(|n| n.question_id.is_none()));
        },
    );
}

#[test]
fn dataset_exports_meet_count_and_leakage_contracts() {
    criterion(
        "dataset exports: 1170 SFT records, no norm leakage, every DPO pair correct vs incorrect",
        || {
            let tmp = tempfile::tempdir().unwrap();
            let corpus = synth_corpus(tmp.path(), &SynthPlan::default());
            let countries = corpus.countries().to_vec();
            let topics = corpus.topics().to_vec();

            let norms_dir = tmp.path().join("norms");
            let mine_cfg = RunConfig {
                norms_dir: Some(norms_dir.clone()),
                out_dir: tmp.path().join("mine"),
                fixed_timestamp: Some(0),
                ..RunConfig::default()
            };
            pipeline::run_mine(&scripted(&corpus, 0), &corpus, &mine_cfg).unwrap();
            let bank = NormBank::load(
                &norms_dir,
                MiningMethod::TopicQuestionTopAnswer,
                countries
                    .iter()
                    .flat_map(|c| topics.iter().map(move |t| (c.as_str(), t.as_str()))),
            )
            .unwrap();

            let splits: Vec<CorpusSplit> = countries
                .iter()
                .map(|c| split_train_test(&corpus, c, 5, None).unwrap())
                .collect();
            let cfg = DistillConfig { rounds: 1, per_round: 3, ..DistillConfig::default() };
            let gw = scripted(&corpus, 3);

            let records = distiller::build_sft_dataset(
                &gw,
                &corpus,
                &splits,
                DistillVariant::Cnca,
                Some(&bank),
                &cfg,
            )
            .unwrap();
            // 18 countries x 13 topics x 5 train questions.
            assert_eq!(records.len(), 1170);

            for record in &records {
                let question = corpus.question(&record.meta.question_id).unwrap();
                assert_eq!(record.instruction, prompting::render_standard(question).unwrap());
                assert!(!record.instruction.contains("Cultural Norm"), "norm scaffold leaked");
                assert!(!record.instruction.contains("(key "), "norm text leaked");
                assert!(!record.system.contains("(key "), "norm text leaked into the persona");
                let norm_text = bank
                    .get(&record.meta.country, &question.topic)
                    .and_then(|set| set.norm_for_question(&question.id))
                    .unwrap();
                assert!(!record.instruction.contains(norm_text), "norm text leaked");
                assert!(record.target.starts_with("<think>"), "unexpected fallback sample");
                let ground =
                    ground_truth(&corpus, &question.id, &record.meta.country).unwrap();
                assert_eq!(extract_answer(&record.target, question.option_count()), Some(ground));
                let norm_ref = record.meta.norm_used.as_deref().unwrap();
                assert!(norm_ref.ends_with(&record.meta.question_id));
                assert!(!norm_ref.contains("(key "), "norm reference must not carry the text");
            }

            let pairs = distiller::collect_dpo_pairs(&gw, &corpus, &splits, &cfg).unwrap();
            assert_eq!(pairs.pairs.len(), 1170);
            assert!(pairs.skipped.is_empty());
            for pair in &pairs.pairs {
                let question = corpus.question(&pair.question_id).unwrap();
                let k = question.option_count();
                let ground = ground_truth(&corpus, &pair.question_id, &pair.country).unwrap();
                assert_eq!(pair.prompt, prompting::render_standard(question).unwrap());
                assert_eq!(extract_answer(&pair.chosen, k), Some(ground));
                let rejected = extract_answer(&pair.rejected, k).unwrap();
                assert_ne!(rejected, ground);
                assert!((1..=k).contains(&rejected));
                assert!(pair.chosen.starts_with("<think>"));
                assert!(pair.rejected.starts_with("<think>"));
            }
        },
    );
}

#[test]
fn dimension_benchmark_matches_fixture_and_oracle() {
    criterion("dimension benchmark: uneven fixture scores 0.625, all-match scores 1.0", || {
        // One country covers 4 items and matches 3; the other covers 2 and
        // matches 1. The dimension mean is (0.75 + 0.5) / 2.
        let path =
            Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cdeval_uneven.json");
        let fixture = load_cdeval(&path).unwrap();
        let countries = vec!["AlphaLand".to_string(), "BetaLand".to_string()];
        let mut answers: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for item in fixture.items() {
            for (country, &ground) in &item.ground_tendency {
                answers
                    .entry(country.clone())
                    .or_default()
                    .insert(item.id.clone(), ground);
            }
        }
        let alpha = answers.get_mut("AlphaLand").unwrap();
        let flipped = 3 - alpha["CDU4"];
        alpha.insert("CDU4".into(), flipped);
        let beta = answers.get_mut("BetaLand").unwrap();
        let flipped = 3 - beta["CDU2"];
        beta.insert("CDU2".into(), flipped);
        let report = cdeval_score(&answers, &fixture, &countries).unwrap();
        assert!((report.overall - 0.625).abs() < 1e-9, "got {}", report.overall);

        // A model answering every item with the ground tendency scores 1.0.
        let tmp = tempfile::tempdir().unwrap();
        let dims = tmp.path().join("dims.json");
        synth::write_dimension_corpus(&dims, 3, 2).unwrap();
        let cdeval = load_cdeval(&dims).unwrap();
        let gw = Gateway::new(Box::new(
            ScriptedBackend::new().with_handler(synth::dimension_oracle_handler(&cdeval)),
        ));
        let run =
            evaluator::run_cdeval(&gw, &cdeval, cdeval.countries(), &EvalConfig::default())
                .unwrap();
        assert_eq!(run.report.overall, 1.0);
    });
}

#[test]
fn rendered_prompts_match_committed_golden_files() {
    criterion("rendered prompts match the committed golden files byte-for-byte", || {
        let golden = |name: &str| {
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
            let text = std::fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            text.strip_suffix('\n').unwrap_or(&text).to_string()
        };
        let question = Question {
            id: "W001".into(),
            topic: "Social Values, Attitudes & Stereotypes".into(),
            text: "How important is family in your life?".into(),
            options: vec![
                "Very important".into(),
                "Rather important".into(),
                "Not very important".into(),
                "Not at all important".into(),
            ],
            distributions: Default::default(),
        };

        let system = prompting::render_system("Germany").unwrap();
        assert!(system.contains("a/an Germany cultural background"));
        assert_eq!(system, golden("system.txt"));
        assert_eq!(prompting::mining_system(), golden("mine_system.txt"));

        let standard = prompting::render_standard(&question).unwrap();
        assert!(standard.ends_with("Please return the number of the selected option only."));
        assert_eq!(standard, golden("eval_standard.txt"));

        let cases = vec![
            IclCase {
                question: "Do you believe in Heaven?".into(),
                options: vec!["Yes".into(), "No".into()],
                answer: 1,
            },
            IclCase {
                question: "How much do you trust your neighborhood?".into(),
                options: vec!["Completely".into(), "Somewhat".into(), "Not at all".into()],
                answer: 2,
            },
        ];
        assert_eq!(prompting::render_icl(&question, &cases).unwrap(), golden("eval_icl.txt"));

        let low = vec![
            "Punctuality signals respect for other people's time.".to_string(),
            "Rules apply equally to everyone, including strangers.".to_string(),
        ];
        assert_eq!(
            prompting::render_with_norms(
                &question,
                &low,
                Some("Public order rests on everyone doing their part."),
            )
            .unwrap(),
            golden("eval_norms.txt")
        );
        assert_eq!(
            prompting::render_with_norms(&question, &low, None).unwrap(),
            golden("eval_norms_low.txt")
        );

        assert_eq!(
            prompting::render_distill(
                &question,
                Some("Family obligations come before personal plans."),
            )
            .unwrap(),
            golden("distill_norm.txt")
        );
        assert_eq!(
            prompting::render_distill(&question, None).unwrap(),
            golden("eval_standard.txt")
        );

        assert_eq!(
            prompting::render_mining_topic_only("Japan", "Religious Values", 5).unwrap(),
            golden("mine_topic_only.txt")
        );
        let top1 = AnswerEvidence::Top1(RankedOption {
            index: 1,
            label: "Very important".into(),
            share: 0.89,
        });
        assert_eq!(
            prompting::render_mining_low_level("Japan", "Religious Values", &question, &top1)
                .unwrap(),
            golden("mine_low_level_top1.txt")
        );
        let ranked = AnswerEvidence::Ranked(vec![
            RankedOption { index: 1, label: "Very important".into(), share: 0.89 },
            RankedOption { index: 2, label: "Rather important".into(), share: 0.07 },
            RankedOption { index: 3, label: "Not very important".into(), share: 0.03 },
            RankedOption { index: 4, label: "Not at all important".into(), share: 0.01 },
        ]);
        assert_eq!(
            prompting::render_mining_low_level("Japan", "Religious Values", &question, &ranked)
                .unwrap(),
            golden("mine_low_level_ranked.txt")
        );
        let lows = vec![
            "Ancestors are honored at household altars.".to_string(),
            "Seasonal festivals bind neighborhoods together.".to_string(),
        ];
        assert_eq!(
            prompting::render_mining_aggregate("Japan", "Religious Values", &lows).unwrap(),
            golden("mine_aggregate.txt")
        );
        assert_eq!(prompting::strict_list_suffix(3), golden("mine_strict_suffix.txt"));
    });
}

#[derive(serde::Deserialize)]
struct ReferenceRow {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    p: f64,
}

#[test]
fn paired_t_test_matches_the_reference_table() {
    criterion("paired t-test matches the frozen reference table on 20 pairs", || {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures/paired_t_reference.json");
        let rows: Vec<ReferenceRow> =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rows.len(), 20);
        for (i, row) in rows.iter().enumerate() {
            let result = paired_t_test(&row.a, &row.b).unwrap();
            assert!((result.t - row.t).abs() < 1e-6, "row {i}: t {} vs {}", result.t, row.t);
            assert!((result.p - row.p).abs() < 1e-6, "row {i}: p {} vs {}", result.p, row.p);
            assert_eq!(result.df, row.a.len() - 1);
        }

        let same = [61.2, 70.4, 55.9, 80.1];
        let result = paired_t_test(&same, &same).unwrap();
        assert_eq!(result.p, 1.0);
        assert_eq!(result.t, 0.0);
        assert!(result.degenerate);
    });
}

#[test]
fn live_endpoint_smoke() {
    if std::env::var(pipeline::ENV_ENDPOINT).is_err() || std::env::var(pipeline::ENV_MODEL).is_err()
    {
        println!(
            "[acceptance] live endpoint smoke: SKIPPED ({} or {} not set)",
            pipeline::ENV_ENDPOINT,
            pipeline::ENV_MODEL
        );
        return;
    }
    criterion("live endpoint smoke: 5-question run, >= 80% parseable", || {
        let tmp = tempfile::tempdir().unwrap();
        let plan = SynthPlan { countries: 1, topics: 1, questions_per_topic: 5 };
        let corpus = synth_corpus(tmp.path(), &plan);
        let cfg = RunConfig {
            trials: 1,
            train_per_topic: 0,
            out_dir: tmp.path().join("live"),
            ..RunConfig::default()
        };
        let gateway = pipeline::gateway_from_env(None, None, cfg.parallelism).unwrap();
        let out = pipeline::run_eval(&gateway, &corpus, &cfg).unwrap();
        assert_eq!(out.report.answers.len(), 5);
        let parseable = out.report.answers.iter().filter(|a| a.extracted.is_some()).count();
        assert!(
            parseable * 5 >= out.report.answers.len() * 4,
            "only {parseable} of {} completions parsed",
            out.report.answers.len()
        );
        let body = std::fs::read_to_string(&out.report_path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert!(parsed.get("overall_mean").is_some(), "report is missing its headline score");
    });
}
