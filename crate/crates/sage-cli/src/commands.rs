//! Subcommand implementations for the staged pipeline.
//!
//! Each stage reads one line-delimited artifact and writes the next, so
//! expensive generation steps are resumable and auditable. Questions that
//! cannot proceed are written to a sibling `*.skipped.jsonl` file and
//! reported on standard error; they never fail the whole run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use sage::analysis::{
    aggregate_report, correlate_with_humans, emit_correlations, emit_report_aggregates,
    emit_report_rows, emit_sweep, temperature_sweep, ConsistencyReport, HumanAggregation,
    MetricKind, ReportFormat, ReportRow, SweepMode, SweepOptions, Target,
};
use sage::corpus::{
    self, load_annotations, load_fixed_rots, load_paraphrase_sets, load_questions, load_records,
    save_paraphrase_sets, save_records, validate_record, EmbeddingStore, EvaluationRecord,
    GenerationSummary, ParaphraseSetRecord,
};
use sage::gateway::cache::ResponseCache;
use sage::gateway::http::{HttpChatProvider, HttpEmbeddingProvider};
use sage::gateway::{Gateway, GenerationConfig};
use sage::metric::cosine_similarity;
use sage::textsim::{filter_paraphrases, paraphrase_quality};

use crate::config::{RunConfig, API_KEY_ENV};

/// Resolved global settings shared by every subcommand.
pub struct CommandContext {
    pub config: RunConfig,
    pub offline: bool,
    pub endpoint: Option<String>,
    pub cache_dir: PathBuf,
    pub concurrency: usize,
}

impl CommandContext {
    pub fn build_gateway(&self) -> Result<Gateway> {
        let cache = ResponseCache::open(&self.cache_dir)?;
        let gateway = if self.offline {
            Gateway::offline(self.config.stub.to_stub_config()?)
        } else {
            let endpoint = self.endpoint.as_deref().ok_or_else(|| {
                anyhow!(
                    "no endpoint configured: pass --endpoint, set SAGE_ENDPOINT, \
                     put `endpoint` in the config file, or run with --offline"
                )
            })?;
            let api_key = std::env::var(API_KEY_ENV).ok();
            Gateway::new(
                Box::new(HttpChatProvider::new(endpoint, api_key.clone())?),
                Box::new(HttpEmbeddingProvider::new(
                    endpoint,
                    &self.config.models.embedder,
                    api_key,
                )?),
                &self.config.models.embedder,
            )
        };
        Ok(gateway
            .with_cache(cache)
            .with_concurrency(self.concurrency))
    }

    fn generation_config(&self, model_id: &str, temperature: f64) -> GenerationConfig {
        GenerationConfig {
            model_id: model_id.to_string(),
            temperature,
            max_tokens: self.config.generation.max_tokens,
            sample_index: 0,
        }
    }

    fn target_models(&self, override_list: &[String]) -> Result<Vec<String>> {
        let models = if !override_list.is_empty() {
            override_list.to_vec()
        } else {
            self.config.models.targets.clone()
        };
        if models.is_empty() {
            bail!("no target models: pass --models or set [models].targets in the config");
        }
        Ok(models)
    }
}

#[derive(Debug, Serialize)]
struct SkipEntry {
    question_id: String,
    stage: String,
    reason: String,
}

fn report_skips(stage: &str, skips: &[SkipEntry], out_path: &Path) -> Result<()> {
    if skips.is_empty() {
        return Ok(());
    }
    for skip in skips {
        eprintln!("skipped {} ({}): {}", skip.question_id, stage, skip.reason);
    }
    let skip_path = sibling_with_suffix(out_path, "skipped.jsonl");
    corpus::write_jsonl(&skip_path, corpus::SKIPS_SCHEMA, skips)?;
    eprintln!("{} skip(s) written to {}", skips.len(), skip_path.display());
    Ok(())
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn print_gateway_stats(gateway: &Gateway) {
    let stats = gateway.stats();
    eprintln!(
        "provider calls: chat={} embed={}; cache hits={}",
        stats.chat_provider_calls, stats.embed_provider_calls, stats.cache_hits
    );
}

/// Order-preserving parallel map over a bounded worker pool.
fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let sender = sender.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= items.len() {
                    break;
                }
                let result = f(&items[index]);
                if sender.send((index, result)).is_err() {
                    break;
                }
            });
        }
    });
    drop(sender);
    let mut results: Vec<(usize, R)> = receiver.into_iter().collect();
    results.sort_by_key(|(index, _)| *index);
    results.into_iter().map(|(_, result)| result).collect()
}

/// Generates, scores, and filters paraphrases for every question.
pub fn cmd_paraphrase(
    ctx: &CommandContext,
    questions_path: &Path,
    out_path: &Path,
    k: Option<usize>,
    threshold: Option<f64>,
    beta: Option<f64>,
) -> Result<()> {
    let questions = load_questions(questions_path)
        .with_context(|| format!("failed to load questions from {}", questions_path.display()))?;
    let k = k.unwrap_or(ctx.config.paraphrase.k);
    let threshold = threshold.unwrap_or(ctx.config.paraphrase.threshold);
    let beta = beta.unwrap_or(ctx.config.paraphrase.beta);
    if !(0.0..=1.0).contains(&threshold) || !(0.0..=1.0).contains(&beta) {
        bail!("threshold and beta must lie in [0, 1]");
    }
    let gateway = ctx.build_gateway()?;
    let generator = &ctx.config.models.generator;
    let paraphrase_temperature = ctx.config.paraphrase.temperature;

    let sets: Vec<Result<ParaphraseSetRecord>> =
        parallel_map(&questions, ctx.concurrency, |question| {
            let config = ctx.generation_config(generator, paraphrase_temperature);
            let candidates = gateway.generate_paraphrases(&question.question, k, &config)?;
            let scored = if candidates.is_empty() {
                Vec::new()
            } else {
                let mut batch = vec![question.question.clone()];
                batch.extend(candidates.iter().cloned());
                let vectors = Gateway::embed(&gateway, &batch)?;
                candidates
                    .iter()
                    .zip(&vectors[1..])
                    .map(|(candidate, vector)| {
                        let semantic_sim =
                            cosine_similarity(&vectors[0], vector)?.clamp(0.0, 1.0);
                        Ok(paraphrase_quality(
                            &question.question,
                            candidate,
                            semantic_sim,
                            beta,
                        )?)
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let retained = filter_paraphrases(scored, threshold);
            let flagged = retained.len() < 2;
            Ok(ParaphraseSetRecord {
                question_id: question.id.clone(),
                question: question.question.clone(),
                paraphrases: retained,
                flagged,
            })
        });
    let sets = sets.into_iter().collect::<Result<Vec<_>>>()?;

    let flagged = sets.iter().filter(|s| s.flagged).count();
    save_paraphrase_sets(out_path, &sets)?;
    if flagged > 0 {
        let entries: Vec<SkipEntry> = sets
            .iter()
            .filter(|s| s.flagged)
            .map(|s| SkipEntry {
                question_id: s.question_id.clone(),
                stage: "paraphrase".to_string(),
                reason: format!(
                    "only {} paraphrase(s) passed the {threshold} quality threshold",
                    s.paraphrases.len()
                ),
            })
            .collect();
        report_skips("paraphrase", &entries, out_path)?;
    }
    println!(
        "paraphrased {} question(s) ({} flagged) -> {}",
        sets.len(),
        flagged,
        out_path.display()
    );
    print_gateway_stats(&gateway);
    Ok(())
}

/// Generates answers for every retained paraphrase with each target model.
pub fn cmd_generate(
    ctx: &CommandContext,
    paraphrases_path: &Path,
    out_path: &Path,
    models: &[String],
    samples: Option<usize>,
) -> Result<()> {
    let sets = load_paraphrase_sets(paraphrases_path)?;
    let models = ctx.target_models(models)?;
    let samples = samples.unwrap_or(ctx.config.generation.samples).max(1);
    let answer_temperature = ctx.config.generation.temperature;
    let gateway = ctx.build_gateway()?;

    let mut skips = Vec::new();
    let eligible: Vec<&ParaphraseSetRecord> = sets
        .iter()
        .filter(|set| {
            if set.flagged || set.paraphrases.len() < 2 {
                skips.push(SkipEntry {
                    question_id: set.question_id.clone(),
                    stage: "generate".to_string(),
                    reason: format!(
                        "{} paraphrase(s) available; need at least 2",
                        set.paraphrases.len()
                    ),
                });
                false
            } else {
                true
            }
        })
        .collect();

    let records: Vec<Result<EvaluationRecord>> =
        parallel_map(&eligible, ctx.concurrency, |set| {
            let mut answers = BTreeMap::new();
            for model_id in &models {
                let mut per_paraphrase = Vec::with_capacity(set.paraphrases.len());
                for paraphrase in &set.paraphrases {
                    let mut draws = Vec::with_capacity(samples);
                    for sample in 0..samples {
                        let config = ctx
                            .generation_config(model_id, answer_temperature)
                            .with_sample_index(sample as u32);
                        draws.push(gateway.generate_answer(&paraphrase.text, &config)?);
                    }
                    per_paraphrase.push(draws);
                }
                answers.insert(model_id.clone(), per_paraphrase);
            }
            Ok(EvaluationRecord {
                question_id: set.question_id.clone(),
                question: set.question.clone(),
                paraphrases: set.paraphrases.clone(),
                answers,
                rots: BTreeMap::new(),
                generation: GenerationSummary {
                    answer_temperature,
                    rot_temperature: ctx.config.generation.rot_temperature,
                    max_tokens: ctx.config.generation.max_tokens,
                    samples_per_paraphrase: samples,
                    fixed_rot: None,
                },
            })
        });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;

    for record in &records {
        let report = validate_record(record);
        if !report.is_valid() {
            bail!(
                "generated record \"{}\" violates invariants: {}",
                record.question_id,
                report.violations.join("; ")
            );
        }
    }
    save_records(out_path, &records)?;
    report_skips("generate", &skips, out_path)?;
    println!(
        "generated answers for {} question(s) x {} model(s) -> {}",
        records.len(),
        models.len(),
        out_path.display()
    );
    print_gateway_stats(&gateway);
    Ok(())
}

/// Infers a rule of thumb for every (paraphrase, answer) pair.
pub fn cmd_rot(
    ctx: &CommandContext,
    records_path: &Path,
    out_path: &Path,
    models: &[String],
) -> Result<()> {
    let records = load_records(records_path)?;
    let gateway = ctx.build_gateway()?;
    let generator = &ctx.config.models.generator;
    let rot_temperature = ctx.config.generation.rot_temperature;

    let updated: Vec<Result<EvaluationRecord>> =
        parallel_map(&records, ctx.concurrency, |record| {
            let mut record = record.clone();
            let model_ids: Vec<String> = if models.is_empty() {
                record.answers.keys().cloned().collect()
            } else {
                models.to_vec()
            };
            for model_id in model_ids {
                let Some(per_paraphrase) = record.answers.get(&model_id) else {
                    bail!(
                        "record \"{}\" has no answers for model \"{model_id}\"",
                        record.question_id
                    );
                };
                let mut rots = Vec::with_capacity(record.paraphrases.len());
                for (paraphrase, samples) in record.paraphrases.iter().zip(per_paraphrase) {
                    let answer = samples.first().expect("validated non-empty");
                    let config = ctx.generation_config(generator, rot_temperature);
                    rots.push(gateway.generate_rot(&paraphrase.text, answer, &config)?);
                }
                record.rots.insert(model_id, rots);
            }
            Ok(record)
        });
    let updated = updated.into_iter().collect::<Result<Vec<_>>>()?;

    save_records(out_path, &updated)?;
    println!(
        "generated rules of thumb for {} record(s) -> {}",
        updated.len(),
        out_path.display()
    );
    print_gateway_stats(&gateway);
    Ok(())
}

/// Regenerates answers while conditioning each question on a fixed rule of
/// thumb; the rule's text is kept in the record for provenance.
pub fn cmd_rot_answer(
    ctx: &CommandContext,
    records_path: &Path,
    rots_path: &Path,
    out_path: &Path,
    models: &[String],
) -> Result<()> {
    let records = load_records(records_path)?;
    let fixed: BTreeMap<String, String> = load_fixed_rots(rots_path)?
        .into_iter()
        .map(|r| (r.question_id, r.rot))
        .collect();
    let gateway = ctx.build_gateway()?;
    let answer_temperature = ctx.config.generation.temperature;

    let mut skips = Vec::new();
    let eligible: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|record| {
            if fixed.contains_key(&record.question_id) {
                true
            } else {
                skips.push(SkipEntry {
                    question_id: record.question_id.clone(),
                    stage: "rot-answer".to_string(),
                    reason: "no fixed rule of thumb for this question".to_string(),
                });
                false
            }
        })
        .collect();

    let updated: Vec<Result<EvaluationRecord>> =
        parallel_map(&eligible, ctx.concurrency, |record| {
            let mut record = (*record).clone();
            let rot = fixed[&record.question_id].clone();
            let model_ids: Vec<String> = if models.is_empty() {
                if record.answers.is_empty() {
                    ctx.target_models(&[])?
                } else {
                    record.answers.keys().cloned().collect()
                }
            } else {
                models.to_vec()
            };
            let samples = record.generation.samples_per_paraphrase.max(1);
            let mut answers = BTreeMap::new();
            for model_id in model_ids {
                let mut per_paraphrase = Vec::with_capacity(record.paraphrases.len());
                for paraphrase in &record.paraphrases {
                    let mut draws = Vec::with_capacity(samples);
                    for sample in 0..samples {
                        let config = ctx
                            .generation_config(&model_id, answer_temperature)
                            .with_sample_index(sample as u32);
                        draws.push(gateway.generate_answer_with_rot(
                            &paraphrase.text,
                            &rot,
                            &config,
                        )?);
                    }
                    per_paraphrase.push(draws);
                }
                answers.insert(model_id, per_paraphrase);
            }
            record.answers = answers;
            record.rots.clear(); // stale: they described the unconditioned answers
            record.generation.fixed_rot = Some(rot);
            Ok(record)
        });
    let updated = updated.into_iter().collect::<Result<Vec<_>>>()?;

    save_records(out_path, &updated)?;
    report_skips("rot-answer", &skips, out_path)?;
    println!(
        "regenerated {} record(s) under fixed rules of thumb -> {}",
        updated.len(),
        out_path.display()
    );
    print_gateway_stats(&gateway);
    Ok(())
}

fn parse_metrics(names: &[String]) -> Result<Vec<MetricKind>> {
    let mut metrics = Vec::new();
    for name in names {
        let metric: MetricKind = name.parse().map_err(|e: String| anyhow!(e))?;
        if !metrics.contains(&metric) {
            metrics.push(metric);
        }
    }
    if metrics.is_empty() {
        bail!("no metrics requested");
    }
    metrics.sort();
    Ok(metrics)
}

fn parse_targets(target: &str) -> Result<Vec<Target>> {
    match target {
        "both" => Ok(vec![Target::Answers, Target::Rots]),
        other => Ok(vec![other.parse().map_err(|e: String| anyhow!(e))?]),
    }
}

/// Scores records and writes the report files.
#[allow(clippy::too_many_arguments)]
pub fn cmd_score(
    ctx: &CommandContext,
    records_path: &Path,
    out_dir: &Path,
    format: ReportFormat,
    metrics: &[String],
    target: Option<&str>,
    models: &[String],
    embeddings_path: Option<&Path>,
) -> Result<()> {
    let records = load_records(records_path)?;
    let metric_names = if metrics.is_empty() {
        ctx.config.scoring.metrics.clone()
    } else {
        metrics.to_vec()
    };
    let metrics = parse_metrics(&metric_names)?;
    let targets = parse_targets(target.unwrap_or(&ctx.config.scoring.target))?;
    let models: Vec<String> = if models.is_empty() {
        // Every model that shows up in the records.
        let mut discovered = BTreeSet::new();
        for record in &records {
            discovered.extend(record.answers.keys().cloned());
            discovered.extend(record.rots.keys().cloned());
        }
        discovered.into_iter().collect()
    } else {
        models.to_vec()
    };
    if models.is_empty() {
        bail!("records carry no model outputs to score");
    }

    let embeddings_path = embeddings_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.cache_dir.join("embeddings.jsonl"));
    let mut store = EmbeddingStore::load_or_default(&embeddings_path)?;

    let needs_embeddings = metrics
        .iter()
        .any(|m| matches!(m, MetricKind::SemanticCons | MetricKind::Sage));
    if needs_embeddings {
        let mut wanted: BTreeSet<String> = BTreeSet::new();
        for record in &records {
            for model_id in &models {
                for &target in &targets {
                    let texts = match target {
                        Target::Answers => record.answer_texts(model_id),
                        Target::Rots => record.rot_texts(model_id),
                    };
                    wanted.extend(texts);
                }
            }
        }
        let missing: Vec<String> = wanted
            .into_iter()
            .filter(|t| !t.trim().is_empty() && !store.contains_text(t))
            .collect();
        if !missing.is_empty() {
            let gateway = ctx.build_gateway()?;
            for chunk in missing.chunks(64) {
                let vectors = Gateway::embed(&gateway, chunk)?;
                for (text, vector) in chunk.iter().zip(vectors) {
                    store.insert_text(text, vector);
                }
            }
            store.save(&embeddings_path)?;
            eprintln!(
                "embedded {} new text(s) into {}",
                missing.len(),
                embeddings_path.display()
            );
            print_gateway_stats(&gateway);
        }
    }

    let report = aggregate_report(&records, &models, &targets, &metrics, &store)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("failed to create {}", out_dir.display()))?;
    let rows_jsonl = out_dir.join("rows.jsonl");
    corpus::write_jsonl(&rows_jsonl, corpus::REPORT_ROWS_SCHEMA, &report.rows)?;
    let rows_table = out_dir.join(format!("rows.{}", format.extension()));
    emit_report_rows(&report, &rows_table, format)?;
    let aggregates_table = out_dir.join(format!("aggregates.{}", format.extension()));
    emit_report_aggregates(&report, &aggregates_table, format)?;
    if !report.skipped.is_empty() {
        let skip_entries: Vec<SkipEntry> = report
            .skipped
            .iter()
            .map(|s| SkipEntry {
                question_id: s.question_id.clone(),
                stage: "score".to_string(),
                reason: s.reason.clone(),
            })
            .collect();
        for entry in &skip_entries {
            eprintln!("skipped {} (score): {}", entry.question_id, entry.reason);
        }
        corpus::write_jsonl(
            &out_dir.join("skipped.jsonl"),
            corpus::SKIPS_SCHEMA,
            &skip_entries,
        )?;
    }

    println!(
        "scored {} row(s) over {} question(s) -> {}",
        report.rows.len(),
        records.len(),
        out_dir.display()
    );
    for aggregate in &report.aggregates {
        println!(
            "  {} {} {}: {:.4} (n={})",
            aggregate.model_id,
            aggregate.target.label(),
            aggregate.metric.label(),
            aggregate.mean,
            aggregate.question_count
        );
    }
    Ok(())
}

/// Runs the temperature sweep and writes one table.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    ctx: &CommandContext,
    questions_path: &Path,
    temps: &str,
    mode: SweepMode,
    model_id: &str,
    out_path: &Path,
    format: ReportFormat,
    metrics: &[String],
    draws: Option<usize>,
    paraphrase_k: Option<usize>,
) -> Result<()> {
    let questions = load_questions(questions_path)?;
    let temperatures: Vec<f64> = temps
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad temperature \"{t}\": {e}"))
        })
        .collect::<Result<_>>()?;
    let metric_names = if metrics.is_empty() {
        ctx.config.scoring.metrics.clone()
    } else {
        metrics.to_vec()
    };
    let metrics = parse_metrics(&metric_names)?;
    let gateway = ctx.build_gateway()?;
    let options = SweepOptions {
        draws: draws.unwrap_or(5),
        paraphrase_k: paraphrase_k.unwrap_or(ctx.config.paraphrase.k),
        paraphrase_temperature: ctx.config.paraphrase.temperature,
        max_tokens: ctx.config.generation.max_tokens,
    };
    let result = temperature_sweep(
        &questions,
        &temperatures,
        mode,
        model_id,
        &metrics,
        &gateway,
        &options,
    )?;
    emit_sweep(&result, out_path, format)?;
    println!(
        "swept {} temperature(s) x {} metric(s) in {} mode -> {}",
        temperatures.len(),
        metrics.len(),
        result.mode.label(),
        out_path.display()
    );
    print_gateway_stats(&gateway);
    Ok(())
}

/// Correlates per-question scores with human annotations.
pub fn cmd_correlate(
    rows_path: &Path,
    annotations_path: &Path,
    aggregation: HumanAggregation,
    out_path: &Path,
    format: ReportFormat,
) -> Result<()> {
    let rows: Vec<ReportRow> = corpus::read_jsonl(rows_path, corpus::REPORT_ROWS_SCHEMA)?;
    let annotations = load_annotations(annotations_path)?;
    let report = ConsistencyReport {
        rows,
        aggregates: Vec::new(),
        skipped: Vec::new(),
    };
    let correlations = correlate_with_humans(&report, &annotations, aggregation)?;
    emit_correlations(&correlations, out_path, format)?;
    for c in &correlations {
        println!(
            "{} {} {} vs human {}: r = {:.4} (n={})",
            c.model_id,
            c.target.label(),
            c.metric.label(),
            c.aggregation.label(),
            c.pearson_r,
            c.question_count
        );
    }
    Ok(())
}

/// Validates a records file and reports every violation. Returns the
/// number of invalid records.
pub fn cmd_validate(records_path: &Path) -> Result<usize> {
    let records: Vec<EvaluationRecord> =
        corpus::read_jsonl(records_path, corpus::RECORDS_SCHEMA)?;
    let mut invalid = 0;
    for record in &records {
        let report = validate_record(record);
        if !report.is_valid() {
            invalid += 1;
            println!("{}:", record.question_id);
            for violation in &report.violations {
                println!("  - {violation}");
            }
        }
    }
    println!(
        "{} record(s) checked, {} invalid",
        records.len(),
        invalid
    );
    Ok(invalid)
}
