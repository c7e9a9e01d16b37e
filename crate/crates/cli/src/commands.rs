//! Subcommand implementations. Each returns the process exit code.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bias_audit::analytics::{self, emit, Formats, Gazetteer};
use bias_audit::corpus::{corpus_stats, load_corpus, IngestOptions, LoadedCorpus};
use bias_audit::debias::{self, DebiasOutcome, DebiasResult, PromptLevel};
use bias_audit::detection::{assess_corpus, AssessmentRecord, ScoringInput};
use bias_audit::evaluation::tables::{Table1, Table2, Table3};
use bias_audit::evaluation::{self, annotations, AlphaLevel, AlphaRaters, KappaWeighting, MetricOptions, TieRule};
use bias_audit::jsonl;
use bias_audit::Gateway;
use serde::Serialize;
use serde_json::json;

use crate::config::{build_gateway, choose_provider, config_digest, model_file_stem, RunConfig};
use crate::manifest::{display_path, StageRecorder, MANIFEST_FILE};
use crate::{AlphaLevelArg, AlphaRatersArg, Cli, Command, EvaluateTarget, KappaArg, MetricArgs, TieArg};

pub const EXIT_OK: u8 = 0;
pub const EXIT_THRESHOLD: u8 = 2;

pub const DEFAULT_DETECTOR: &str = "mock-detector";
pub const DEFAULT_REWRITER: &str = "mock-rewriter";

struct Ctx {
    cfg: RunConfig,
    concurrency: Option<usize>,
}

impl Ctx {
    fn corpus_root(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.cfg.corpus_root.clone())
            .context("no corpus given (use --corpus or corpus_root in the config file)")
    }

    fn run_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        let dir = flag
            .or_else(|| self.cfg.run_dir.clone())
            .context("no run directory given (use --out or run_dir in the config file)")?;
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn threshold(&self, flag: Option<f64>) -> Result<f64> {
        let t = flag.unwrap_or(self.cfg.failure_threshold);
        if !(0.0..=1.0).contains(&t) {
            bail!("failure threshold must be within [0, 1]");
        }
        Ok(t)
    }

    fn gateway(&self, cfg: bias_audit::ProviderConfig, run_dir: &Path) -> Result<Gateway> {
        build_gateway(cfg, self.concurrency, run_dir)
    }
}

fn workers(gw: &Gateway) -> usize {
    gw.config().max_concurrency.max(1)
}

fn load(root: &Path) -> Result<LoadedCorpus> {
    let corpus = load_corpus(root, &IngestOptions::default())?;
    for d in &corpus.diagnostics {
        log::warn!("skipped {}: {}", display_path(root, &d.path), d.reason);
    }
    Ok(corpus)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    jsonl::write_atomic(path, emit::json_string(value)?.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    jsonl::write_atomic(path, emit::csv_string(header, rows)?.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    print!("{}", emit::json_string(value)?);
    Ok(())
}

fn rate(failed: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        failed as f64 / total as f64
    }
}

fn check_threshold(stage: &str, failed: usize, total: usize, threshold: f64) -> u8 {
    let r = rate(failed, total);
    if r > threshold {
        log::error!("{stage}: {failed} of {total} requests failed ({:.2}%), above threshold {:.2}%", 100.0 * r, 100.0 * threshold);
        EXIT_THRESHOLD
    } else {
        EXIT_OK
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::empty(),
    };
    if cli.concurrency == Some(0) {
        bail!("--concurrency must be at least 1");
    }
    let ctx = Ctx {
        cfg,
        concurrency: cli.concurrency,
    };
    match cli.command {
        Command::Ingest { corpus, out } => ingest(&ctx, corpus, out),
        Command::Stats { corpus } => stats(&ctx, corpus),
        Command::Detect {
            corpus,
            model,
            provider,
            out,
            failure_threshold,
        } => detect(&ctx, corpus, model, provider, out, failure_threshold),
        Command::Debias {
            assessments,
            level,
            provider,
            model,
            out,
            failure_threshold,
        } => run_debias(&ctx, &assessments, level, provider, model, out, failure_threshold),
        Command::Reassess {
            input,
            detector,
            provider,
            out,
            failure_threshold,
        } => run_reassess(&ctx, &input, detector, provider, out, failure_threshold),
        Command::Evaluate { target } => evaluate(&ctx, target),
        Command::Analyze {
            assessments,
            corpus,
            out,
            charts,
            gazetteer,
        } => analyze(&ctx, &assessments, corpus, out, charts, gazetteer),
        Command::Report { run_dir } => crate::report::report(&ctx.run_dir(run_dir)?),
        Command::MockAnnotate {
            corpus,
            debiased,
            out,
            annotators,
            noise,
            seed,
        } => crate::annotate::mock_annotate(
            &ctx.corpus_root(corpus)?,
            &debiased,
            &out,
            annotators,
            noise,
            seed.unwrap_or(ctx.cfg.seed),
        ),
    }
}

fn ingest(ctx: &Ctx, corpus: Option<PathBuf>, out: Option<PathBuf>) -> Result<u8> {
    let root = ctx.corpus_root(corpus)?;
    let run_dir = ctx.run_dir(out)?;
    let loaded = load(&root)?;
    let mut stage = StageRecorder::new(&run_dir, "ingest", "ingest", json!({}));
    stage.input_dir("corpus", &root)?;

    let articles = run_dir.join("corpus/articles.jsonl");
    jsonl::write(&articles, &loaded.articles)?;
    let diagnostics: Vec<_> = loaded
        .diagnostics
        .iter()
        .map(|d| json!({"path": display_path(&root, &d.path), "reason": d.reason}))
        .collect();
    let diag_path = run_dir.join("corpus/diagnostics.jsonl");
    jsonl::write(&diag_path, &diagnostics)?;
    let stats = corpus_stats(&loaded.articles);
    let stats_path = run_dir.join("corpus/stats.json");
    write_json(&stats_path, &stats)?;
    for p in [&articles, &diag_path, &stats_path] {
        stage.output(p)?;
    }
    stage.finish()?;
    print_json(&json!({
        "articles": loaded.articles.len(),
        "paragraphs": stats.paragraph_count,
        "diagnostics": loaded.diagnostics.len(),
    }))?;
    Ok(EXIT_OK)
}

fn stats(ctx: &Ctx, corpus: Option<PathBuf>) -> Result<u8> {
    let root = ctx.corpus_root(corpus)?;
    let loaded = load(&root)?;
    print_json(&corpus_stats(&loaded.articles))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DetectSummary<'a> {
    model_id: &'a str,
    n_paragraphs: usize,
    n_ok: usize,
    n_failed: usize,
    failure_rate: f64,
    failure_threshold: f64,
    failed_ids: Vec<String>,
}

fn detect(
    ctx: &Ctx,
    corpus: Option<PathBuf>,
    model: Option<String>,
    provider: Option<String>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<u8> {
    let root = ctx.corpus_root(corpus)?;
    let run_dir = ctx.run_dir(out)?;
    let threshold = ctx.threshold(threshold)?;
    let model = model.or_else(|| ctx.cfg.detector_model.clone());
    let pcfg = choose_provider(
        provider.as_deref(),
        ctx.cfg.detection.as_ref(),
        model.as_deref(),
        DEFAULT_DETECTOR,
        "detect",
    )?;
    let digest = config_digest(&pcfg);
    let gw = ctx.gateway(pcfg, &run_dir)?;
    let loaded = load(&root)?;
    let inputs: Vec<ScoringInput> = loaded.articles.iter().flat_map(ScoringInput::from_article).collect();
    log::info!("scoring {} paragraphs with {}", inputs.len(), gw.model_id());
    let set = assess_corpus(&inputs, &gw, workers(&gw));

    let stem = model_file_stem(gw.model_id());
    let path = run_dir.join(format!("assessments/{stem}.jsonl"));
    jsonl::write(&path, &set.records)?;
    let failed_ids: Vec<String> = set.failures().map(|f| f.paragraph_id.to_string()).collect();
    let summary = DetectSummary {
        model_id: gw.model_id(),
        n_paragraphs: set.records.len(),
        n_ok: set.records.len() - failed_ids.len(),
        n_failed: failed_ids.len(),
        failure_rate: set.failure_rate(),
        failure_threshold: threshold,
        failed_ids,
    };
    let summary_path = run_dir.join(format!("assessments/{stem}.summary.json"));
    write_json(&summary_path, &summary)?;

    let mut stage = StageRecorder::new(
        &run_dir,
        format!("detect:{}", gw.model_id()),
        "detect",
        json!({"model_id": gw.model_id(), "failure_threshold": threshold}),
    );
    stage.config("detection", digest);
    stage.input_dir("corpus", &root)?;
    stage.output(&path)?;
    stage.output(&summary_path)?;
    stage.finish()?;
    log::info!("wrote {} ({} failed)", path.display(), summary.n_failed);
    println!("{}", path.display());
    Ok(check_threshold("detect", summary.n_failed, summary.n_paragraphs, threshold))
}

fn run_debias(
    ctx: &Ctx,
    assessments: &Path,
    level: u8,
    provider: Option<String>,
    model: Option<String>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<u8> {
    let level = PromptLevel::try_from(level)?;
    let run_dir = ctx.run_dir(out)?;
    let threshold = ctx.threshold(threshold)?;
    let records: Vec<AssessmentRecord> = jsonl::read(assessments)?;
    let flagged = debias::select_flagged(&records);
    let pcfg = choose_provider(
        provider.as_deref(),
        ctx.cfg.debias.as_ref(),
        model.as_deref(),
        DEFAULT_REWRITER,
        "debias",
    )?;
    let digest = config_digest(&pcfg);
    let gw = ctx.gateway(pcfg, &run_dir)?;
    log::info!("rewriting {} flagged paragraphs at level {}", flagged.len(), level.as_u8());
    let outcomes = debias::debias_all(&flagged, level, &gw, workers(&gw));
    let failed = outcomes.iter().filter(|o| matches!(o, DebiasOutcome::Failed(_))).count();

    let path = run_dir.join(format!("debias/level{}.jsonl", level.as_u8()));
    jsonl::write(&path, &outcomes)?;
    let mut stage = StageRecorder::new(
        &run_dir,
        format!("debias:level{}", level.as_u8()),
        "debias",
        json!({"level": level.as_u8(), "model_id": gw.model_id(), "failure_threshold": threshold}),
    );
    stage.config("debias", digest);
    stage.input_file("assessments", assessments)?;
    stage.output(&path)?;
    stage.finish()?;
    println!("{}", path.display());
    Ok(check_threshold("debias", failed, flagged.len(), threshold))
}

fn ok_results(outcomes: &[DebiasOutcome]) -> Vec<DebiasResult> {
    outcomes
        .iter()
        .filter_map(|o| match o {
            DebiasOutcome::Ok(r) => Some(r.clone()),
            DebiasOutcome::Failed(_) => None,
        })
        .collect()
}

fn run_reassess(
    ctx: &Ctx,
    input: &Path,
    detector: Option<String>,
    provider: Option<String>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<u8> {
    let run_dir = ctx.run_dir(out)?;
    let threshold = ctx.threshold(threshold)?;
    let outcomes: Vec<DebiasOutcome> = jsonl::read(input)?;
    let detector = detector.or_else(|| ctx.cfg.detector_model.clone());
    let pcfg = choose_provider(
        provider.as_deref(),
        ctx.cfg.detection.as_ref(),
        detector.as_deref(),
        DEFAULT_DETECTOR,
        "reassess",
    )?;
    let digest = config_digest(&pcfg);
    let gw = ctx.gateway(pcfg, &run_dir)?;
    let results = ok_results(&outcomes);
    let re = debias::reassess(&results, &gw, workers(&gw));

    let mut reassessed = re.results.into_iter();
    let merged: Vec<DebiasOutcome> = outcomes
        .into_iter()
        .map(|o| match o {
            DebiasOutcome::Ok(_) => DebiasOutcome::Ok(reassessed.next().expect("one result per ok outcome")),
            failed => failed,
        })
        .collect();

    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "debias".into());
    let path = run_dir.join(format!("debias/{stem}.reassessed.jsonl"));
    jsonl::write(&path, &merged)?;
    let fail_path = run_dir.join(format!("debias/{stem}.reassess_failures.jsonl"));
    jsonl::write(&fail_path, &re.failures)?;

    let mut stage = StageRecorder::new(
        &run_dir,
        format!("reassess:{stem}"),
        "reassess",
        json!({"detector": gw.model_id(), "failure_threshold": threshold}),
    );
    stage.config("detection", digest);
    stage.input_file("debiased", input)?;
    stage.output(&path)?;
    stage.output(&fail_path)?;
    stage.finish()?;
    println!("{}", path.display());
    Ok(check_threshold("reassess", re.failures.len(), results.len(), threshold))
}

impl MetricArgs {
    fn options(&self) -> MetricOptions {
        MetricOptions {
            alpha_level: match self.alpha_level {
                AlphaLevelArg::Nominal => AlphaLevel::Nominal,
                AlphaLevelArg::Ordinal => AlphaLevel::Ordinal,
                AlphaLevelArg::Interval => AlphaLevel::Interval,
            },
            alpha_raters: match self.alpha_raters {
                AlphaRatersArg::ModelVsMajority => AlphaRaters::ModelVsMajority,
                AlphaRatersArg::ModelVsAnnotators => AlphaRaters::ModelVsAnnotators,
            },
            kappa_weighting: match self.kappa_weight {
                KappaArg::None => KappaWeighting::None,
                KappaArg::Linear => KappaWeighting::Linear,
                KappaArg::Quadratic => KappaWeighting::Quadratic,
            },
            tie_rule: self.tie_rule.into(),
            allow_gaps: self.allow_gaps,
            ..MetricOptions::default()
        }
    }
}

impl From<TieArg> for TieRule {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::HigherSeverity => TieRule::HigherSeverity,
            TieArg::LowerSeverity => TieRule::LowerSeverity,
        }
    }
}

pub const TABLE1_HEADER: &[&str] = &["model", "exact_match_pct", "krippendorff_alpha", "cohen_kappa", "f2_score"];
pub const TABLE2_HEADER: &[&str] = &[
    "prompt",
    "human_moderate_pct",
    "human_extreme_pct",
    "llm_moderate_pct",
    "llm_extreme_pct",
];
pub const TABLE3_HEADER: &[&str] = &["prompt", "average_similarity", "cosine_similarity"];

#[derive(Serialize)]
struct DebiasBiasCsvRow {
    prompt_level: u8,
    judge: evaluation::Judge,
    mean_pre_score: Option<f64>,
    n_pre: usize,
    mean_post_score: Option<f64>,
    n_post: usize,
    t: Option<f64>,
    df: Option<f64>,
    p_value: Option<f64>,
}

fn load_debiased(files: &[PathBuf], stage: &mut StageRecorder) -> Result<Vec<DebiasResult>> {
    let mut results = Vec::new();
    for (i, f) in files.iter().enumerate() {
        let outcomes: Vec<DebiasOutcome> = jsonl::read(f)?;
        results.extend(ok_results(&outcomes));
        stage.input_file(&format!("debiased_{i}"), f)?;
    }
    Ok(results)
}

fn evaluate(ctx: &Ctx, target: EvaluateTarget) -> Result<u8> {
    match target {
        EvaluateTarget::Detection {
            annotations: ann_path,
            assessments,
            metrics,
            out,
        } => {
            let run_dir = ctx.run_dir(out)?;
            let opts = metrics.options();
            let ann = annotations::load_annotations(&ann_path)?;
            let mut stage = StageRecorder::new(
                &run_dir,
                "evaluate:detection",
                "evaluate detection",
                serde_json::to_value(opts)?,
            );
            stage.input_file("annotations", &ann_path)?;
            let mut reports = Vec::new();
            for (i, f) in assessments.iter().enumerate() {
                let records: Vec<AssessmentRecord> = jsonl::read(f)?;
                let report = evaluation::detection_report(&records, &ann, &opts)
                    .with_context(|| format!("evaluating {}", f.display()))?;
                let p = run_dir.join(format!("evaluation/detection_{}.json", model_file_stem(&report.model_id)));
                write_json(&p, &report)?;
                stage.input_file(&format!("assessments_{i}"), f)?;
                stage.output(&p)?;
                reports.push(report);
            }
            let table = Table1::from_reports(&reports);
            let jp = run_dir.join("evaluation/table1.json");
            let cp = run_dir.join("evaluation/table1.csv");
            write_json(&jp, &table)?;
            write_csv(&cp, TABLE1_HEADER, &table.rows)?;
            stage.output(&jp)?;
            stage.output(&cp)?;
            stage.finish()?;
            print_json(&table)?;
        }
        EvaluateTarget::Debias {
            annotations: ann_path,
            debiased,
            tie_rule,
            out,
        } => {
            let run_dir = ctx.run_dir(out)?;
            let rule: TieRule = tie_rule.into();
            let ann = annotations::load_annotations(&ann_path)?;
            let mut stage = StageRecorder::new(&run_dir, "evaluate:debias", "evaluate debias", json!({"tie_rule": rule}));
            stage.input_file("annotations", &ann_path)?;
            let results = load_debiased(&debiased, &mut stage)?;
            let rows = evaluation::debias_bias_report(&results, &ann, rule)?;
            let cells = evaluation::residual_report(&results, &ann, rule);
            let table = Table2::from_cells(&cells);

            let csv_rows: Vec<DebiasBiasCsvRow> = rows
                .iter()
                .map(|r| DebiasBiasCsvRow {
                    prompt_level: r.prompt_level.as_u8(),
                    judge: r.judge,
                    mean_pre_score: r.mean_pre_score,
                    n_pre: r.n_pre,
                    mean_post_score: r.mean_post_score,
                    n_post: r.n_post,
                    t: r.pre_vs_post.and_then(|w| w.t),
                    df: r.pre_vs_post.and_then(|w| w.df),
                    p_value: r.pre_vs_post.map(|w| w.p_value),
                })
                .collect();
            let files = [
                ("evaluation/debias_bias.json", emit::json_string(&rows)?),
                (
                    "evaluation/debias_bias.csv",
                    emit::csv_string(
                        &["prompt_level", "judge", "mean_pre_score", "n_pre", "mean_post_score", "n_post", "t", "df", "p_value"],
                        &csv_rows,
                    )?,
                ),
                ("evaluation/residual.json", emit::json_string(&cells)?),
                (
                    "evaluation/residual.csv",
                    emit::csv_string(&["prompt_level", "judge", "pre_score", "n_results", "n_unbiased", "rate"], &cells)?,
                ),
                ("evaluation/table2.json", emit::json_string(&table)?),
                ("evaluation/table2.csv", emit::csv_string(TABLE2_HEADER, &table.rows)?),
            ];
            for (name, body) in files {
                let p = run_dir.join(name);
                jsonl::write_atomic(&p, body.as_bytes())?;
                stage.output(&p)?;
            }
            stage.finish()?;
            print_json(&table)?;
        }
        EvaluateTarget::Similarity {
            annotations: ann_path,
            debiased,
            embedding_provider,
            no_embedding,
            out,
        } => {
            let run_dir = ctx.run_dir(out)?;
            let mut stage = StageRecorder::new(&run_dir, "evaluate:similarity", "evaluate similarity", json!({}));
            let ann = match &ann_path {
                Some(p) => {
                    stage.input_file("annotations", p)?;
                    annotations::load_annotations(p)?
                }
                None => Vec::new(),
            };
            let results = load_debiased(&debiased, &mut stage)?;
            let embedder = if no_embedding {
                None
            } else {
                match (embedding_provider.as_deref(), ctx.cfg.embedding.as_ref()) {
                    (None, None) => None,
                    (flag, section) => {
                        let pcfg = choose_provider(flag, section, None, "mock-embedding", "similarity")?;
                        stage.config("embedding", config_digest(&pcfg));
                        Some(ctx.gateway(pcfg, &run_dir)?)
                    }
                }
            };
            let rows = evaluation::similarity_report(&results, &ann, embedder.as_ref())?;
            let table = Table3::from_rows(&rows);
            let files = [
                ("evaluation/similarity.json", emit::json_string(&rows)?),
                (
                    "evaluation/similarity.csv",
                    emit::csv_string(
                        &["prompt_level", "n_pairs", "mean_human_similarity", "n_human_items", "mean_cosine", "n_cosine_pairs"],
                        &rows,
                    )?,
                ),
                ("evaluation/table3.json", emit::json_string(&table)?),
                ("evaluation/table3.csv", emit::csv_string(TABLE3_HEADER, &table.rows)?),
            ];
            for (name, body) in files {
                let p = run_dir.join(name);
                jsonl::write_atomic(&p, body.as_bytes())?;
                stage.output(&p)?;
            }
            stage.finish()?;
            print_json(&table)?;
        }
    }
    Ok(EXIT_OK)
}

fn analyze(
    ctx: &Ctx,
    assessments: &Path,
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    charts: bool,
    gazetteer: Option<PathBuf>,
) -> Result<u8> {
    let root = ctx.corpus_root(corpus)?;
    let out = match out {
        Some(o) => o,
        None => ctx.run_dir(None)?.join("analytics"),
    };
    std::fs::create_dir_all(&out)?;
    let gaz = match &gazetteer {
        Some(p) => Gazetteer::parse(&std::fs::read_to_string(p)?)?,
        None => Gazetteer::default(),
    };
    let records: Vec<AssessmentRecord> = jsonl::read(assessments)?;
    let loaded = load(&root)?;
    let tables = analytics::analyze(&records, &loaded.articles, &gaz)?;
    let formats = Formats {
        chart: charts,
        ..Formats::DATA
    };
    let written = analytics::emit_report(&out, &tables, formats)?;

    let manifest_root = out
        .ancestors()
        .skip(1)
        .filter(|a| !a.as_os_str().is_empty())
        .find(|a| a.join(MANIFEST_FILE).is_file())
        .unwrap_or(&out)
        .to_path_buf();
    let mut stage = StageRecorder::new(&manifest_root, "analyze", "analyze", json!({"charts": charts}));
    stage.input_file("assessments", assessments)?;
    stage.input_dir("corpus", &root)?;
    if let Some(g) = &gazetteer {
        stage.input_file("gazetteer", g)?;
    }
    for p in &written {
        stage.output(p)?;
    }
    stage.finish()?;
    println!("{}", out.display());
    Ok(EXIT_OK)
}
