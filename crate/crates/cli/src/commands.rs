use std::collections::{BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vidclaim::claim::render_claim;
use vidclaim::embed::{EmbeddingClient, FileEmbeddingClient};
use vidclaim::harness::{
    build_task1, build_task2, durations_from_annotations, ingest_charades_sta,
    random_baseline_task1, render_table, score_task1, score_task2, EvalReport, EventAnnotation,
    Relation, ScoringMode, TableRow,
};
use vidclaim::pipeline::{GroundedEvent, Pipeline};
use vidclaim::scorer::top_k;
use vidclaim::store::{load_video_embeddings, read_manifest, validate_store, VideoEmbeddingSet};
use vidclaim::transform::{ReplayTranscript, RuleFallback, TextTransformClient};

use crate::config::RunConfig;
use crate::error::{io_error, CliError};

pub struct Clients {
    pub transform: Box<dyn TextTransformClient>,
    pub embed: Box<dyn EmbeddingClient>,
    /// A non-rule transform client is configured (remote or replay).
    pub external_transform: bool,
}

#[cfg(feature = "remote")]
fn remote_transform(cfg: &RunConfig, url: &str) -> Result<Box<dyn TextTransformClient>, CliError> {
    Ok(Box::new(vidclaim::transform::RemoteService::connect(
        url,
        cfg.timeout,
        cfg.retries,
        cfg.max_in_flight,
    )?))
}

#[cfg(feature = "remote")]
fn remote_embed(cfg: &RunConfig, url: &str) -> Result<Box<dyn EmbeddingClient>, CliError> {
    Ok(Box::new(vidclaim::embed::HttpEmbeddingClient::new(url, cfg.timeout, cfg.retries)?))
}

#[cfg(not(feature = "remote"))]
fn remote_transform(_: &RunConfig, _: &str) -> Result<Box<dyn TextTransformClient>, CliError> {
    Err(CliError::Input("built without remote client support".into()))
}

#[cfg(not(feature = "remote"))]
fn remote_embed(_: &RunConfig, _: &str) -> Result<Box<dyn EmbeddingClient>, CliError> {
    Err(CliError::Input("built without remote client support".into()))
}

pub fn build_clients(cfg: &RunConfig) -> Result<Clients, CliError> {
    let (transform, external_transform): (Box<dyn TextTransformClient>, bool) =
        match (&cfg.transform_endpoint, &cfg.transcript) {
            _ if cfg.offline => (Box::new(RuleFallback), false),
            (Some(url), _) => (remote_transform(cfg, url)?, true),
            (None, Some(path)) => (
                Box::new(ReplayTranscript::from_path(path).map_err(|e| CliError::Input(e.to_string()))?),
                true,
            ),
            (None, None) => (Box::new(RuleFallback), false),
        };
    let embed: Box<dyn EmbeddingClient> = match &cfg.embed_endpoint {
        Some(url) => remote_embed(cfg, url)?,
        None => Box::new(FileEmbeddingClient::from_paths(&cfg.embeddings)?),
    };
    Ok(Clients {
        transform,
        embed,
        external_transform,
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Input(format!("worker pool: {e}")))
}

fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_error(path, e))?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| io_error(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

#[derive(Debug, Serialize)]
struct ActionSummary {
    action: String,
    chosen_timestamp: f64,
    top5: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct EventSummary {
    event_text: String,
    top5: Vec<f64>,
    actions: Vec<ActionSummary>,
}

impl From<&GroundedEvent> for EventSummary {
    fn from(e: &GroundedEvent) -> Self {
        Self {
            event_text: e.event_text.clone(),
            top5: top_k(&e.ranking, 5),
            actions: e
                .grounded
                .iter()
                .map(|g| ActionSummary {
                    action: g.action.text.clone(),
                    chosen_timestamp: g.chosen_timestamp,
                    top5: top_k(&g.ranking, 5),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
struct GroundRecord {
    video_id: String,
    query: String,
    needs_temporal_support: bool,
    claim: Vec<String>,
    events: Vec<EventSummary>,
}

fn strip_terminal(text: &str) -> &str {
    text.trim().trim_end_matches(['?', '.', '!']).trim()
}

pub fn ground(cfg: &RunConfig, video_id: &str, query: &str, require_activation: bool) -> Result<(), CliError> {
    if query.trim().is_empty() {
        return Err(CliError::Input("query is empty".into()));
    }
    let video = load_video_embeddings(cfg.store()?, video_id)?;
    let clients = build_clients(cfg)?;
    let pipeline = Pipeline::new(clients.transform.as_ref(), clients.embed.as_ref(), cfg.scorer.clone());
    let outcome = pipeline.ground_query(&video, query)?;
    let needs = outcome.activation.needs_temporal_support;
    let events = if needs {
        outcome.events
    } else if require_activation {
        println!("no temporal grounding needed; query passed through");
        return append_jsonl(
            &cfg.output_dir.join("ground.jsonl"),
            &GroundRecord {
                video_id: video_id.into(),
                query: query.into(),
                needs_temporal_support: false,
                claim: Vec::new(),
                events: Vec::new(),
            },
        );
    } else {
        vec![pipeline.ground_event(&video, strip_terminal(query))?]
    };
    let grounded: Vec<_> = events.iter().flat_map(|e| e.grounded.iter().cloned()).collect();
    let claim = render_claim(&grounded, video.meta());
    let record = GroundRecord {
        video_id: video_id.into(),
        query: query.into(),
        needs_temporal_support: needs,
        claim: claim.lines.clone(),
        events: events.iter().map(EventSummary::from).collect(),
    };
    println!("{}", claim.text());
    println!("{}", serde_json::to_string(&record.events).expect("serializes"));
    append_jsonl(&cfg.output_dir.join("ground.jsonl"), &record)
}

#[derive(Debug, Serialize)]
struct CorrectRecord<'a> {
    video_id: &'a str,
    query: &'a str,
    original: &'a str,
    corrected: &'a str,
    source: vidclaim::pipeline::CorrectionSource,
    claim: Vec<String>,
}

pub fn correct(cfg: &RunConfig, video_id: &str, query: &str, response_file: &Path) -> Result<(), CliError> {
    let response = fs::read_to_string(response_file).map_err(|e| io_error(response_file, e))?;
    let video = load_video_embeddings(cfg.store()?, video_id)?;
    let clients = build_clients(cfg)?;
    let pipeline = Pipeline::new(clients.transform.as_ref(), clients.embed.as_ref(), cfg.scorer.clone());
    let out = pipeline.correct(&video, query, response.trim_end())?;
    println!("{}", out.corrected);
    eprintln!("correction source: {}", serde_json::to_string(&out.source).expect("serializes"));
    append_jsonl(
        &cfg.output_dir.join("correct.jsonl"),
        &CorrectRecord {
            video_id,
            query,
            original: response.trim_end(),
            corrected: &out.corrected,
            source: out.source,
            claim: out.grounding.claim.map(|c| c.lines).unwrap_or_default(),
        },
    )
}

pub fn validate(store: &Path) -> Result<(), CliError> {
    if !store.is_dir() {
        return Err(CliError::Input(format!("{} is not a directory", store.display())));
    }
    let report = validate_store(store)?;
    for v in &report.videos {
        if v.violations.is_empty() {
            let shapes: Vec<String> = v
                .shapes
                .iter()
                .map(|(name, n, d)| format!("{name} {n}x{d}"))
                .collect();
            println!("ok        {}  {}", v.video_id, shapes.join(", "));
        } else {
            for problem in &v.violations {
                println!("VIOLATION {}  {problem}", v.video_id);
            }
        }
    }
    println!(
        "{} video(s), {} violation(s)",
        report.videos.len(),
        report.violation_count()
    );
    match report.violation_count() {
        0 => Ok(()),
        n => Err(CliError::Findings(n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSource {
    Responses,
    Pipeline,
    RandomBaseline,
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub task: u8,
    pub annotations: PathBuf,
    pub source: EvalSource,
    pub responses: Option<PathBuf>,
    pub trials: usize,
    pub max_per_video: usize,
    pub label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ResponseLine {
    id: String,
    response: String,
}

fn load_responses(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ResponseLine = serde_json::from_str(line).map_err(|e| {
            CliError::Input(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.insert(r.id, r.response);
    }
    Ok(out)
}

fn load_annotations(path: &Path) -> Result<Vec<EventAnnotation>, CliError> {
    let ingested = ingest_charades_sta(path)?;
    for s in &ingested.skipped {
        eprintln!("{}:{}: skipped: {}", path.display(), s.line, s.reason);
    }
    Ok(ingested.annotations)
}

/// Store durations where available, else the latest annotated end per video.
fn durations(cfg: &RunConfig, anns: &[EventAnnotation]) -> HashMap<String, f64> {
    let mut out = durations_from_annotations(anns);
    if let Some(store) = &cfg.store_root {
        for (id, d) in out.iter_mut() {
            if let Ok(m) = read_manifest(&store.join(id)) {
                *d = m.duration_seconds;
            }
        }
    }
    out
}

fn load_videos(
    cfg: &RunConfig,
    pool: &rayon::ThreadPool,
    ids: BTreeSet<&str>,
) -> Result<HashMap<String, VideoEmbeddingSet>, CliError> {
    let store = cfg.store()?;
    pool.install(|| {
        ids.par_iter()
            .map(|id| Ok((id.to_string(), load_video_embeddings(store, id)?)))
            .collect()
    })
}

fn mode_name(mode: ScoringMode) -> &'static str {
    match mode {
        ScoringMode::Pipeline => "pipeline",
        ScoringMode::FreeText => "responses",
        ScoringMode::RandomBaseline => "random",
        ScoringMode::Classification => "responses",
    }
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<(), CliError> {
    let anns = load_annotations(&args.annotations)?;
    let pool = thread_pool(cfg.jobs)?;
    let (report, items_written) = match (args.task, args.source) {
        (1, EvalSource::RandomBaseline) => {
            let (r1, r5) = random_baseline_task1(&anns, args.trials, cfg.seed, &durations(cfg, &anns))?;
            let report = EvalReport {
                task: 1,
                mode: ScoringMode::RandomBaseline,
                n_items: anns.len(),
                r1_acc: Some(r1),
                r5_acc: Some(r5),
                acc: None,
                items_path: None,
            };
            (report, false)
        }
        (2, EvalSource::RandomBaseline) => {
            return Err(CliError::Input("--random-baseline applies to task 1".into()))
        }
        (1, source) => {
            let clients = build_clients(cfg)?;
            let items = build_task1(&anns, clients.external_transform.then_some(clients.transform.as_ref()));
            let durations = durations(cfg, &anns);
            let (mut report, records) = if source == EvalSource::Pipeline {
                let videos = load_videos(cfg, &pool, items.iter().map(|i| i.annotation.video_id.as_str()).collect())?;
                let pipeline = Pipeline::new(clients.transform.as_ref(), clients.embed.as_ref(), cfg.scorer.clone());
                let grounded: Vec<(String, Vec<f64>, String)> = pool.install(|| {
                    items
                        .par_iter()
                        .map(|it| {
                            let video = &videos[&it.annotation.video_id];
                            let ev = pipeline.ground_event(video, &it.annotation.caption)?;
                            let claim = render_claim(&ev.grounded, video.meta());
                            Ok((it.id.clone(), top_k(&ev.ranking, 5), claim.text()))
                        })
                        .collect::<Result<_, CliError>>()
                })?;
                let preds = grounded.iter().map(|(id, p, _)| (id.clone(), p.clone())).collect();
                let responses = grounded.into_iter().map(|(id, _, c)| (id, c)).collect();
                score_task1(&items, &responses, Some(&preds), &durations, None)?
            } else {
                let responses = load_responses(args.responses.as_deref().expect("checked by caller"))?;
                let parser = clients.external_transform.then_some(clients.transform.as_ref());
                score_task1(&items, &responses, None, &durations, parser)?
            };
            let path = cfg.output_dir.join(format!("task1_{}.jsonl", mode_name(report.mode)));
            write_jsonl(&path, &records)?;
            report.items_path = Some(path.display().to_string());
            (report, true)
        }
        (2, source) => {
            let clients = build_clients(cfg)?;
            let items = build_task2(
                &anns,
                cfg.seed,
                args.max_per_video,
                clients.external_transform.then_some(clients.transform.as_ref()),
            )?;
            let responses = if source == EvalSource::Pipeline {
                let videos = load_videos(cfg, &pool, items.iter().map(|i| i.video_id.as_str()).collect())?;
                let pipeline = Pipeline::new(clients.transform.as_ref(), clients.embed.as_ref(), cfg.scorer.clone());
                pool.install(|| {
                    items
                        .par_iter()
                        .map(|it| {
                            let video = &videos[&it.video_id];
                            let ta = best_time(&pipeline.ground_event(video, &it.event_a.caption)?);
                            let tb = best_time(&pipeline.ground_event(video, &it.event_b.caption)?);
                            Ok((it.id.clone(), order_answer(ta, tb, it.relation)))
                        })
                        .collect::<Result<HashMap<_, _>, CliError>>()
                })?
            } else {
                load_responses(args.responses.as_deref().expect("checked by caller"))?
            };
            let classifier = clients.external_transform.then_some(clients.transform.as_ref());
            let (mut report, records) = score_task2(&items, &responses, classifier)?;
            if source == EvalSource::Pipeline {
                report.mode = ScoringMode::Pipeline;
            }
            let path = cfg.output_dir.join(format!("task2_{}.jsonl", mode_name(report.mode)));
            write_jsonl(&path, &records)?;
            report.items_path = Some(path.display().to_string());
            (report, true)
        }
        (t, _) => return Err(CliError::Input(format!("unknown task {t}"))),
    };

    let stem = format!("task{}_{}", report.task, mode_name(report.mode));
    let summary = cfg.output_dir.join(format!("{stem}_summary.json"));
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
    fs::write(&summary, serde_json::to_string_pretty(&report).expect("serializes"))
        .map_err(|e| io_error(&summary, e))?;
    let label = args.label.clone().unwrap_or_else(|| match report.mode {
        ScoringMode::Pipeline => "Grounded pipeline".into(),
        ScoringMode::RandomBaseline => "Random".into(),
        _ => "Responses".into(),
    });
    let title = if report.task == 1 {
        "Task 1: timestamp prediction"
    } else {
        "Task 2: order prediction"
    };
    print!(
        "{}",
        render_table(title, &[TableRow { method: label, report: report.clone() }])
    );
    if items_written {
        eprintln!("wrote {} and {}", report.items_path.as_deref().unwrap_or(""), summary.display());
    } else {
        eprintln!("wrote {}", summary.display());
    }
    Ok(())
}

fn best_time(event: &GroundedEvent) -> f64 {
    event.ranking.best().map_or(f64::NAN, |e| e.timestamp_seconds)
}

/// Yes/No from the grounded times of A and B; equal times carry no order.
pub fn order_answer(ta: f64, tb: f64, relation: Relation) -> String {
    if ta == tb || ta.is_nan() || tb.is_nan() {
        return "No relevant information.".into();
    }
    let holds = match relation {
        Relation::Before => ta < tb,
        Relation::After => ta > tb,
    };
    if holds { "Yes." } else { "No." }.into()
}

#[derive(Debug, Serialize)]
struct Task1Question<'a> {
    id: &'a str,
    video_id: &'a str,
    caption: &'a str,
    question: &'a str,
}

#[derive(Debug, Serialize)]
struct Task2Question<'a> {
    id: &'a str,
    video_id: &'a str,
    event_a: &'a str,
    event_b: &'a str,
    relation: Relation,
    question: &'a str,
}

/// Prints the items of a task as JSONL so answers can be collected elsewhere.
pub fn questions(cfg: &RunConfig, task: u8, annotations: &Path, max_per_video: usize) -> Result<(), CliError> {
    let anns = load_annotations(annotations)?;
    let clients = build_clients(cfg)?;
    let client = clients.external_transform.then_some(clients.transform.as_ref());
    let mut out = std::io::stdout().lock();
    let mut emit = |line: String| writeln!(out, "{line}").map_err(|e| CliError::Input(e.to_string()));
    match task {
        1 => {
            for it in build_task1(&anns, client) {
                emit(serde_json::to_string(&Task1Question {
                    id: &it.id,
                    video_id: &it.annotation.video_id,
                    caption: &it.annotation.caption,
                    question: &it.question,
                })
                .expect("serializes"))?;
            }
        }
        2 => {
            for it in build_task2(&anns, cfg.seed, max_per_video, client)? {
                emit(serde_json::to_string(&Task2Question {
                    id: &it.id,
                    video_id: &it.video_id,
                    event_a: &it.event_a.caption,
                    event_b: &it.event_b.caption,
                    relation: it.relation,
                    question: &it.question,
                })
                .expect("serializes"))?;
            }
        }
        t => return Err(CliError::Input(format!("unknown task {t}"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_answers() {
        assert_eq!(order_answer(2.0, 5.0, Relation::Before), "Yes.");
        assert_eq!(order_answer(2.0, 5.0, Relation::After), "No.");
        assert_eq!(order_answer(5.0, 2.0, Relation::After), "Yes.");
        assert_eq!(order_answer(3.0, 3.0, Relation::Before), "No relevant information.");
    }
}
