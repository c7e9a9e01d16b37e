//! Invariants checked with a deterministic property runner, so both the
//! crate tests and the acceptance binary can run them.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bias_audit::analytics::tables::{publisher_year_table, state_year_table};
use bias_audit::analytics::welch::welch_t_test;
use bias_audit::analytics::{tag_state, Gazetteer};
use bias_audit::corpus::{corpus_stats, load_corpus, split_blocks, Article};
use bias_audit::debias::{
    debias_all, debias_paragraph, reassess, residual_bias_rates, select_flagged, DebiasOutcome,
    FlaggedParagraph, PromptLevel,
};
use bias_audit::detection::{
    assess_corpus, assessment_from_raw, normalize_whitespace, ConsistencyFlag, ScoringInput,
};
use bias_audit::evaluation::metrics::{
    cohen_kappa, cosine_similarity, exact_match_rate, fbeta, krippendorff_alpha, majority_vote,
    AlphaLevel, KappaWeighting, TieRule,
};
use bias_audit::llm_gateway::{
    extract_json, BackendReply, CacheKey, ChatBackend, ChatRequest, ManualClock, RateLimiter,
    ResponseCache,
};
use bias_audit::{fanout, sha256_hex, Gateway, GatewayError, Paragraph, ProviderConfig};
use chrono::NaiveDate;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use serde_json::{json, Value};

pub type Check = fn() -> Result<(), String>;

/// Every invariant, by name.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("segmentation is idempotent", segmentation_idempotent),
        ("per-publisher paragraph counts sum to the total", corpus_counts_conserved),
        ("corpus order is independent of file creation order", corpus_order_stable),
        ("mock gateway is pure under reordering and concurrency", mock_gateway_pure),
        ("in-flight requests never exceed max_concurrency", gate_bounds_in_flight),
        ("rate limiter window under a simulated clock", rate_limit_window),
        ("cache round-trip and key separation", cache_round_trip),
        ("extract_json inverts serialisation", extract_roundtrip),
        ("score and flag normalisation", score_flag_normalisation),
        ("evidence is verbatim unless flagged", evidence_substring),
        ("debias: flagged-only input, monotone mock, residual bounds", debias_invariants),
        ("majority vote is permutation-invariant", majority_permutation),
        ("self-agreement metrics equal 1", self_agreement),
        ("alpha is invariant under item and rater order", alpha_order_invariant),
        ("alpha and kappa never exceed 1", agreement_upper_bound),
        ("two-rater nominal alpha matches exhaustive enumeration", alpha_exhaustive_two_raters),
        ("cosine bounds, symmetry and scale invariance", cosine_properties),
        ("aggregation is order-invariant and percentages recompute", aggregation_properties),
        ("Welch test antisymmetry", welch_antisymmetry),
        ("untagged articles are conserved", untagged_conservation),
    ]
}

fn run<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

const WORDS: &[&str] = &[
    "police", "said", "the", "suspects", "thugs", "fled", "downtown", "hordes", "of", "people",
    "gathered", "ghetto", "residents", "illegal aliens", "council", "voted", "savages", "marched",
    "quietly", "urban youths", "officers", "arrived", "late",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 2..9).prop_map(|w| {
        let mut s = w.join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        s
    })
}

fn paragraph_text() -> impl Strategy<Value = String> {
    prop::collection::vec(sentence(), 1..4).prop_map(|s| s.join(" "))
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by_key(|i| sha256_hex(format!("{seed}:{i}").as_bytes()));
    idx.into_iter().map(|i| items[i].clone()).collect()
}

fn article(id: &str, publisher: &str, year: i32, title: &str, paragraphs: &[String]) -> Article {
    Article {
        article_id: id.to_string(),
        publisher: publisher.to_string(),
        url: String::new(),
        publish_date: NaiveDate::from_ymd_opt(year, 6, 1).unwrap(),
        authors: vec![],
        title: title.to_string(),
        body_text: paragraphs.join("\n\n"),
    }
}

fn mock_gateway(concurrency: usize) -> Gateway {
    let cfg = ProviderConfig {
        max_concurrency: concurrency,
        ..ProviderConfig::mock("mock-detector")
    };
    Gateway::from_config(cfg, None).unwrap()
}

pub fn segmentation_idempotent() -> Result<(), String> {
    let body = prop::collection::vec(
        ("[a-z .]{0,20}", prop::sample::select(vec!["\n", "\n\n", "\n  \n", "\r\n\r\n", "\n\n\n", " "])),
        0..10,
    )
    .prop_map(|parts| parts.into_iter().map(|(t, sep)| format!("{t}{sep}")).collect::<String>());
    run(256, body, |text| {
        let once = split_blocks(&text);
        let twice = split_blocks(&once.join("\n\n"));
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.iter().all(|p| !p.trim().is_empty() && p.trim() == p));
        Ok(())
    })
}

pub fn corpus_counts_conserved() -> Result<(), String> {
    let articles = prop::collection::vec(
        (prop::sample::select(vec!["CNN", "Fox News", "DailyBeast"]), prop::collection::vec(paragraph_text(), 1..5)),
        0..12,
    );
    run(128, articles, |specs| {
        let arts: Vec<Article> = specs
            .iter()
            .enumerate()
            .map(|(i, (p, paras))| article(&format!("a{i}"), p, 2015, "t", paras))
            .collect();
        let stats = corpus_stats(&arts);
        let per_pub: usize = stats.per_publisher_counts.values().map(|c| c.paragraphs).sum();
        let per_pub_articles: usize = stats.per_publisher_counts.values().map(|c| c.articles).sum();
        let direct: usize = specs.iter().map(|(_, p)| p.len()).sum();
        prop_assert_eq!(per_pub, stats.paragraph_count);
        prop_assert_eq!(stats.paragraph_count, direct);
        prop_assert_eq!(per_pub_articles, arts.len());
        Ok(())
    })
}

pub fn corpus_order_stable() -> Result<(), String> {
    let files = prop::collection::btree_set("[a-z]{1,6}", 1..8);
    run(24, (files, any::<u64>()), |(names, seed)| {
        let names: Vec<String> = names.into_iter().collect();
        let load_in = |order: &[String]| -> Vec<String> {
            let dir = tempfile::tempdir().unwrap();
            for n in order {
                let sub = dir.path().join(if n.len() % 2 == 0 { "even" } else { "odd" });
                std::fs::create_dir_all(&sub).unwrap();
                let doc = json!({"id": n, "publisher": "P", "date": "2016-01-02", "title": n, "text": "Body."});
                std::fs::write(sub.join(format!("{n}.json")), doc.to_string()).unwrap();
            }
            let loaded = load_corpus(dir.path(), &Default::default()).unwrap();
            loaded.articles.into_iter().map(|a| a.article_id).collect()
        };
        let a = load_in(&names);
        let b = load_in(&shuffled(&names, seed));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), names.len());
        Ok(())
    })
}

pub fn mock_gateway_pure() -> Result<(), String> {
    let texts = prop::collection::vec(paragraph_text(), 1..12);
    run(32, (texts, any::<u64>()), |(texts, seed)| {
        let inputs: Vec<ScoringInput> = texts
            .iter()
            .enumerate()
            .flat_map(|(i, t)| ScoringInput::from_article(&article(&format!("n{i:02}"), "CNN", 2016, "t", std::slice::from_ref(t))))
            .collect();
        let serial = assess_corpus(&inputs, &mock_gateway(1), 1);
        let parallel = assess_corpus(&shuffled(&inputs, seed), &mock_gateway(8), 8);
        prop_assert_eq!(serial.records.len(), inputs.len());
        prop_assert_eq!(&serial, &parallel);
        let gw = mock_gateway(4);
        for t in &texts {
            prop_assert_eq!(gw.complete_prompt(t).unwrap().raw_text, gw.complete_prompt(t).unwrap().raw_text);
        }
        Ok(())
    })
}

struct SlowBackend {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ChatBackend for SlowBackend {
    fn chat(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(2));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(BackendReply {
            text: req.prompt_text.clone(),
            usage: None,
        })
    }
}

pub fn gate_bounds_in_flight() -> Result<(), String> {
    run(8, (1usize..5, 1usize..4), |(limit, oversubscribe)| {
        let backend = Arc::new(SlowBackend {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let cfg = ProviderConfig {
            max_concurrency: limit,
            ..ProviderConfig::mock("gate")
        };
        let gw = Gateway::builder(cfg).chat_backend(backend.clone()).build();
        let prompts: Vec<String> = (0..24).map(|i| format!("prompt {i}")).collect();
        let out = fanout::map_ordered(&prompts, limit * (oversubscribe + 1), |p| gw.complete_prompt(p).unwrap().raw_text);
        prop_assert_eq!(&out, &prompts);
        prop_assert!(backend.peak.load(Ordering::SeqCst) <= limit);
        Ok(())
    })
}

pub fn rate_limit_window() -> Result<(), String> {
    let gaps = prop::collection::vec(0u64..20_000, 1..60);
    run(128, (1u32..12, gaps), |(rpm, gaps)| {
        let clock = ManualClock::default();
        let limiter = RateLimiter::new(rpm);
        let mut starts = Vec::new();
        for gap in gaps {
            clock.advance(Duration::from_millis(gap));
            starts.push(limiter.acquire(&clock));
        }
        for (i, s) in starts.iter().enumerate() {
            let in_window = starts[i..].iter().filter(|t| **t < *s + Duration::from_secs(60)).count();
            prop_assert!(in_window <= rpm as usize, "{} starts within 60s of {:?}", in_window, s);
        }
        Ok(())
    })
}

pub fn cache_round_trip() -> Result<(), String> {
    run(64, ("[a-z0-9-]{1,12}", ".{0,64}", ".{0,64}", ".{0,200}"), |(model, p1, p2, value)| {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = CacheKey::chat(&model, 0.0, &p1);
        cache.store(&key, "chat", &model, &value).unwrap();
        prop_assert_eq!(cache.load(&key).map(|e| e.value), Some(value));
        let other = CacheKey::chat(&model, 0.0, &p2);
        prop_assert_eq!(key == other, p1 == p2);
        prop_assert!(CacheKey::chat(&model, 0.5, &p1) != key);
        prop_assert!(CacheKey::embedding(&model, &p1) != key);
        Ok(())
    })
}

fn json_doc() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|n| json!(n)),
        "[a-zA-Z0-9 {}\"\\[\\]&:,.]{0,12}".prop_map(Value::String),
    ];
    let value = leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z ]{1,6}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    });
    prop::collection::btree_map("[A-Za-z ]{1,10}", value, 0..5).prop_map(|m| Value::Object(m.into_iter().collect()))
}

pub fn extract_roundtrip() -> Result<(), String> {
    run(256, (json_doc(), any::<bool>()), |(d, pretty)| {
        let text = if pretty {
            serde_json::to_string_pretty(&d).unwrap()
        } else {
            serde_json::to_string(&d).unwrap()
        };
        prop_assert_eq!(extract_json(&text).unwrap(), d);
        Ok(())
    })
}

fn raw_reply() -> impl Strategy<Value = (String, Value, Option<&'static str>, Vec<String>, usize)> {
    let score = prop_oneof![
        (-3i64..6).prop_map(|n| json!(n)),
        (-1.0f64..4.0).prop_map(|x| json!(x)),
        (0i64..3).prop_map(|n| json!(n.to_string())),
    ];
    let detected = prop::option::of(prop::sample::select(vec!["Yes", "No", "yes", "no"]));
    let evidence = prop::collection::vec(prop_oneof![Just(None), sentence().prop_map(Some)], 0..3);
    (paragraph_text(), score, detected, evidence, 0usize..4).prop_map(|(para, score, detected, ev, n_just)| {
        // `None` entries pick a sentence from the paragraph itself.
        let sentences: Vec<&str> = para.split_inclusive('.').map(str::trim).collect();
        let ev: Vec<String> = ev
            .into_iter()
            .enumerate()
            .map(|(i, e)| e.unwrap_or_else(|| sentences[i % sentences.len()].replace(' ', "  ")))
            .collect();
        (para, score, detected, ev, n_just)
    })
}

fn reply_json(score: &Value, detected: Option<&str>, evidence: &[String], n_just: usize) -> String {
    let mut doc = json!({
        "Main Topic": "Crime",
        "Biased Sentences": evidence.join(" & "),
        "Bias Justification": vec!["Loaded term."; n_just].join(" & "),
        "Bias Score": score,
        "Bias Summary": "s",
        "Bias Removal": "r",
    });
    if let Some(d) = detected {
        doc["Bias Detected"] = json!(d);
    }
    doc.to_string()
}

pub fn score_flag_normalisation() -> Result<(), String> {
    run(512, raw_reply(), |(para, score, detected, evidence, n_just)| {
        let raw = reply_json(&score, detected, &evidence, n_just);
        let p = Paragraph::new("x", 0, para);
        let a = assessment_from_raw(&raw, &p, "m").map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(a.score <= 2);
        prop_assert_eq!(a.bias_detected, a.score > 0);
        let numeric = score.as_f64().or_else(|| score.as_str().and_then(|s| s.parse().ok())).unwrap();
        let expected = numeric.round().clamp(0.0, 2.0);
        prop_assert_eq!(f64::from(a.score), expected);
        prop_assert_eq!(a.score_clamped, numeric != expected);
        let says_yes = detected.map(|d| d.eq_ignore_ascii_case("yes"));
        let mismatch = says_yes.is_some_and(|y| y != (a.score > 0));
        prop_assert_eq!(a.consistency_flags.contains(&ConsistencyFlag::DetectedScoreMismatch), mismatch);
        Ok(())
    })
}

pub fn evidence_substring() -> Result<(), String> {
    run(512, raw_reply(), |(para, score, detected, evidence, n_just)| {
        let raw = reply_json(&score, detected, &evidence, n_just);
        let p = Paragraph::new("x", 0, para.clone());
        let a = assessment_from_raw(&raw, &p, "m").map_err(|e| TestCaseError::fail(e.to_string()))?;
        let hay = normalize_whitespace(&para);
        let all_verbatim = a.biased_sentences.iter().all(|s| hay.contains(&normalize_whitespace(s)));
        let flagged = a.consistency_flags.contains(&ConsistencyFlag::EvidenceNotVerbatim);
        prop_assert_eq!(flagged, !all_verbatim);
        Ok(())
    })
}

pub fn debias_invariants() -> Result<(), String> {
    let texts = prop::collection::vec(paragraph_text(), 1..10);
    run(24, texts, |texts| {
        let inputs: Vec<ScoringInput> = texts
            .iter()
            .enumerate()
            .flat_map(|(i, t)| ScoringInput::from_article(&article(&format!("d{i:02}"), "CNN", 2016, "t", std::slice::from_ref(t))))
            .collect();
        let gw = mock_gateway(4);
        let set = assess_corpus(&inputs, &gw, 4);
        let flagged = select_flagged(&set.records);
        prop_assert!(flagged.iter().all(|f| (1..=2).contains(&f.pre_score)));
        let n_flagged = set.records.iter().filter(|r| r.score().is_some_and(|s| s > 0)).count();
        prop_assert_eq!(flagged.len(), n_flagged);

        let unflagged = FlaggedParagraph {
            paragraph: Paragraph::new("z", 0, texts[0].clone()),
            pre_score: 0,
        };
        prop_assert!(debias_paragraph(&unflagged, PromptLevel::One, &gw).is_err());

        let mut results = Vec::new();
        for level in PromptLevel::ALL {
            let outcomes = debias_all(&flagged, level, &gw, 4);
            prop_assert_eq!(outcomes.len(), flagged.len());
            let ok: Vec<_> = outcomes
                .into_iter()
                .filter_map(|o| match o {
                    DebiasOutcome::Ok(r) => Some(r),
                    DebiasOutcome::Failed(_) => None,
                })
                .collect();
            results.extend(reassess(&ok, &gw, 4).results);
        }
        for r in &results {
            prop_assert!(r.post_score.unwrap() <= r.pre_score, "{:?}", r);
        }
        let cells = residual_bias_rates(&results).unwrap();
        prop_assert_eq!(cells.len(), 6);
        for c in &cells {
            prop_assert!(c.n_unbiased <= c.n_results);
            if let Some(rate) = c.rate {
                prop_assert!((0.0..=1.0).contains(&rate));
            }
        }
        for level in PromptLevel::ALL {
            let denom: usize = cells.iter().filter(|c| c.prompt_level == level).map(|c| c.n_results).sum();
            prop_assert_eq!(denom, results.iter().filter(|r| r.prompt_level == level).count());
        }
        Ok(())
    })
}

pub fn majority_permutation() -> Result<(), String> {
    run(512, (prop::collection::vec(0u8..3, 1..8), any::<u64>()), |(votes, seed)| {
        for rule in [TieRule::HigherSeverity, TieRule::LowerSeverity] {
            let a = majority_vote(&votes, rule).unwrap();
            prop_assert_eq!(a, majority_vote(&shuffled(&votes, seed), rule).unwrap());
            let mut rev = votes.clone();
            rev.reverse();
            prop_assert_eq!(a, majority_vote(&rev, rule).unwrap());
        }
        Ok(())
    })
}

const WEIGHTINGS: [KappaWeighting; 3] = [KappaWeighting::None, KappaWeighting::Linear, KappaWeighting::Quadratic];

pub fn self_agreement() -> Result<(), String> {
    run(512, prop::collection::vec(0u8..3, 1..12), |x| {
        prop_assert_eq!(exact_match_rate(&x, &x).unwrap(), 1.0);
        if x.iter().any(|&v| v > 0) {
            prop_assert_eq!(fbeta(&x, &x, 2.0).unwrap(), 1.0);
        }
        let distinct = x.iter().collect::<std::collections::BTreeSet<_>>().len();
        if distinct >= 2 {
            for w in WEIGHTINGS {
                prop_assert_eq!(cohen_kappa(&x, &x, w).unwrap(), 1.0);
            }
        }
        Ok(())
    })
}

fn units() -> impl Strategy<Value = Vec<Vec<Option<u8>>>> {
    (1usize..6).prop_flat_map(|raters| {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, 0u8..3), raters), 1..9)
    })
}

pub fn alpha_order_invariant() -> Result<(), String> {
    run(512, (units(), any::<u64>()), |(u, seed)| {
        for level in [AlphaLevel::Nominal, AlphaLevel::Ordinal, AlphaLevel::Interval] {
            let base = krippendorff_alpha(&u, level);
            let items = shuffled(&u, seed);
            let raters: Vec<Vec<Option<u8>>> = items
                .iter()
                .map(|row| {
                    let mut r = row.clone();
                    r.reverse();
                    r
                })
                .collect();
            match (base, krippendorff_alpha(&raters, level)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b),
                (Err(_), Err(_)) => {}
                (a, b) => return Err(TestCaseError::fail(format!("{a:?} vs {b:?}"))),
            }
        }
        Ok(())
    })
}

pub fn agreement_upper_bound() -> Result<(), String> {
    let pairs = (2usize..12).prop_flat_map(|n| (prop::collection::vec(0u8..3, n), prop::collection::vec(0u8..3, n)));
    run(512, (units(), pairs), |(u, (a, b))| {
        for level in [AlphaLevel::Nominal, AlphaLevel::Ordinal, AlphaLevel::Interval] {
            if let Ok(alpha) = krippendorff_alpha(&u, level) {
                prop_assert!(alpha <= 1.0 + 1e-12);
            }
        }
        for w in WEIGHTINGS {
            if let Ok(k) = cohen_kappa(&a, &b, w) {
                prop_assert!(k <= 1.0 + 1e-12);
            }
        }
        let em = exact_match_rate(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&em));
        let f = fbeta(&a, &b, 2.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        Ok(())
    })
}

/// Nominal alpha for two complete raters from the pooled-pairs definition:
/// `1 - (N-1) * 2 * Σ_u [a_u != b_u] / Σ_{i != j} [v_i != v_j]`.
fn two_rater_alpha(a: &[u8], b: &[u8]) -> f64 {
    let pooled: Vec<u8> = a.iter().chain(b).copied().collect();
    let n = pooled.len() as f64;
    let within: f64 = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 * 2.0;
    if within == 0.0 {
        return 1.0;
    }
    let mut between = 0.0;
    for (i, x) in pooled.iter().enumerate() {
        for (j, y) in pooled.iter().enumerate() {
            if i != j && x != y {
                between += 1.0;
            }
        }
    }
    1.0 - (n - 1.0) * within / between
}

pub fn alpha_exhaustive_two_raters() -> Result<(), String> {
    for n in 1..=4usize {
        let total = 3usize.pow(2 * n as u32);
        for code in 0..total {
            let mut c = code;
            let mut digits = Vec::with_capacity(2 * n);
            for _ in 0..2 * n {
                digits.push((c % 3) as u8);
                c /= 3;
            }
            let (a, b) = digits.split_at(n);
            let units: Vec<Vec<Option<u8>>> = a.iter().zip(b).map(|(x, y)| vec![Some(*x), Some(*y)]).collect();
            let got = krippendorff_alpha(&units, AlphaLevel::Nominal).map_err(|e| format!("{a:?} {b:?}: {e}"))?;
            let want = two_rater_alpha(a, b);
            if (got - want).abs() > 1e-9 {
                return Err(format!("{a:?} {b:?}: {got} vs {want}"));
            }
        }
    }
    Ok(())
}

pub fn cosine_properties() -> Result<(), String> {
    let vecs = (1usize..16).prop_flat_map(|d| {
        (prop::collection::vec(-100.0f64..100.0, d), prop::collection::vec(-100.0f64..100.0, d))
    });
    run(512, (vecs, 1e-3f64..1e3), |((a, b), c)| {
        let (Ok(ab), Ok(ba)) = (cosine_similarity(&a, &b), cosine_similarity(&b, &a)) else {
            return Ok(());
        };
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
        let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
        let s = cosine_similarity(&scaled, &b).unwrap();
        prop_assert!((s - ab).abs() <= 1e-12, "{} vs {}", s, ab);
        Ok(())
    })
}

type ArticleSpec = (usize, i32, Vec<Option<u8>>);

fn analytics_input() -> impl Strategy<Value = Vec<ArticleSpec>> {
    prop::collection::vec((0usize..3, 2013i32..2016, prop::collection::vec(prop::option::weighted(0.9, 0u8..3), 1..5)), 1..15)
}

const PUBLISHERS: [&str; 3] = ["CNN", "DailyBeast", "Fox News"];
const TITLES: [&str; 4] = ["Shooting in Ohio", "Protest in Missouri", "Storm damage", "Arrest in Texas"];

fn build(specs: &[ArticleSpec]) -> (Vec<Article>, Vec<bias_audit::AssessmentRecord>) {
    use bias_audit::detection::{AssessmentFailed, BiasAssessment, Outcome, ParagraphMeta};
    let mut articles = Vec::new();
    let mut records = Vec::new();
    for (i, (p, year, scores)) in specs.iter().enumerate() {
        let texts: Vec<String> = (0..scores.len()).map(|k| format!("Paragraph {k}.")).collect();
        let a = article(&format!("art{i:03}"), PUBLISHERS[*p], *year, TITLES[i % TITLES.len()], &texts);
        for (k, s) in scores.iter().enumerate() {
            let pid = bias_audit::ParagraphId::new(a.article_id.clone(), k);
            let outcome = match s {
                Some(score) => Outcome::Ok(BiasAssessment {
                    paragraph_id: pid.clone(),
                    model_id: "m".into(),
                    main_topic: String::new(),
                    bias_detected: *score > 0,
                    score: *score,
                    score_clamped: false,
                    biased_sentences: vec![],
                    justifications: vec![],
                    summary: String::new(),
                    removal_hint: String::new(),
                    consistency_flags: Default::default(),
                    raw_response_digest: String::new(),
                }),
                None => Outcome::Failed(AssessmentFailed {
                    paragraph_id: pid.clone(),
                    model_id: "m".into(),
                    cause: "injected".into(),
                }),
            };
            records.push(bias_audit::AssessmentRecord {
                paragraph_id: pid,
                meta: ParagraphMeta {
                    publisher: a.publisher.clone(),
                    publish_date: a.publish_date,
                    text: texts[k].clone(),
                },
                outcome,
            });
        }
        articles.push(a);
    }
    (articles, records)
}

/// (articles, biased articles, paragraphs, biased paragraphs)
type CellCounts = (usize, usize, usize, usize);

pub fn aggregation_properties() -> Result<(), String> {
    run(256, (analytics_input(), any::<u64>()), |(specs, seed)| {
        let (articles, records) = build(&specs);
        let table = publisher_year_table(&records, &articles).unwrap();
        prop_assert_eq!(&table, &publisher_year_table(&shuffled(&records, seed), &shuffled(&articles, seed ^ 1)).unwrap());

        let mut brute: BTreeMap<(String, Option<i32>), CellCounts> = BTreeMap::new();
        for (p, year, scores) in &specs {
            let scored: Vec<u8> = scores.iter().flatten().copied().collect();
            if scored.is_empty() {
                continue;
            }
            let biased = scored.iter().filter(|&&s| s > 0).count();
            for y in [Some(*year), None] {
                let e = brute.entry((PUBLISHERS[*p].to_string(), y)).or_default();
                e.0 += 1;
                e.1 += usize::from(biased > 0);
                e.2 += scored.len();
                e.3 += biased;
            }
        }
        prop_assert_eq!(table.len(), brute.len());
        for c in &table {
            let (na, nba, np, nbp) = brute[&(c.publisher.clone(), c.year)];
            prop_assert_eq!((c.n_articles, c.n_biased_articles, c.n_paragraphs, c.n_biased_paragraphs), (na, nba, np, nbp));
            prop_assert_eq!(c.pct_articles_biased, 100.0 * (nba as f64 / na as f64));
        }
        Ok(())
    })
}

pub fn welch_antisymmetry() -> Result<(), String> {
    let sample = prop::collection::vec(0u8..3, 2..20).prop_map(|v| v.into_iter().map(f64::from).collect::<Vec<_>>());
    run(256, (sample.clone(), sample), |(a, b)| {
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert_eq!(ab.t.map(|t| -t), ba.t);
        prop_assert_eq!(ab.df, ba.df);
        Ok(())
    })
}

pub fn untagged_conservation() -> Result<(), String> {
    let gazetteer = Gazetteer::default();
    run(256, analytics_input(), |specs| {
        let (articles, records) = build(&specs);
        let tags: Vec<_> = articles.iter().map(|a| tag_state(a, &gazetteer)).collect();
        let t = state_year_table(&records, &articles, &tags).unwrap();
        let tagged: usize = t.cells.iter().filter(|c| c.year.is_none()).map(|c| c.n_articles).sum();
        prop_assert_eq!(tagged + t.untagged.len(), t.n_articles_total);
        let scored_articles = specs.iter().filter(|(_, _, s)| s.iter().any(Option::is_some)).count();
        prop_assert_eq!(t.n_articles_total, scored_articles);
        for c in &t.cells {
            prop_assert_eq!(c.pct_paragraphs_biased, 100.0 * (c.n_biased_paragraphs as f64 / c.n_paragraphs as f64));
        }
        Ok(())
    })
}
