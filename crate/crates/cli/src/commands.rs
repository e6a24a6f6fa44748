use std::path::Path;

use cspine_core::eval::{
    bench_inference, evaluate, format_bench_table, format_f1_table, macro_f1_per_task, ConfusionMatrix, MIN_BENCH_INPUTS,
};
use cspine_core::features::{
    read_embeddings, write_embeddings, write_embeddings_jsonl, EmbeddingIndex, HashedFeaturizerConfig,
};
use cspine_core::io::{read_corpus, read_jsonl, write_jsonl};
use cspine_core::mtl::{read_checkpoint, train_with_init, write_checkpoint, Example, MtlParams, TrainMode};
use cspine_core::pipeline::{compare_single_multitask, examples_from_index, featurize_bundles, hashed_examples, segment_corpus};
use cspine_core::segmenter::{audit_grouping, split_sentences, AuditEntry};
use cspine_core::similarity::{distance_matrix, estimate_diameter, slice_conditionals, upper_bound, Cloud};
use cspine_core::synth::generate_corpus;
use cspine_core::{validate_corpus, PathologyTask, SegmentBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::{BenchArgs, Cli, Command, DataArgs, DistanceArgs, EvalArgs, FeaturizeArgs, GenerateArgs, SegmentArgs, TrainArgs};

pub fn run(cli: &Cli) -> CliResult<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let out = |summary: Summary| {
        if cli.json {
            println!("{}", serde_json::to_string(&summary.json).expect("summary serializes"));
        } else {
            print!("{}", summary.text);
        }
    };
    let summary = match &cli.command {
        Command::Generate(a) => generate(a, config)?,
        Command::Segment(a) => segment(a, config)?,
        Command::Featurize(a) => featurize(a, config)?,
        Command::Train(a) => train(a, config)?,
        Command::Eval(a) => eval(a, config)?,
        Command::Distance(a) => distance(a, config)?,
        Command::Bench(a) => bench(a, config)?,
    };
    out(summary);
    Ok(())
}

/// What a command reports on stdout.
struct Summary {
    text: String,
    json: serde_json::Value,
}

fn summary<T: Serialize>(text: String, json: &T) -> Summary {
    Summary {
        text,
        json: serde_json::to_value(json).expect("summary serializes"),
    }
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("value serializes") + "\n"))
}

fn read_bundles(path: &Path) -> CliResult<Vec<SegmentBundle>> {
    require(path)?;
    let bundles: Vec<SegmentBundle> = read_jsonl(path)?;
    for b in &bundles {
        b.labels.check()?;
    }
    Ok(bundles)
}

/// Bundles and their model inputs, plus the files they came from.
fn load_examples(
    data: &DataArgs,
    features: &HashedFeaturizerConfig,
    manifest: &mut Manifest,
) -> CliResult<(Vec<SegmentBundle>, Vec<Example>, Option<EmbeddingIndex>)> {
    let bundles = read_bundles(&data.bundles)?;
    manifest.input(&data.bundles)?;
    match &data.embeddings {
        Some(path) => {
            require(path)?;
            manifest.input(path)?;
            let index = EmbeddingIndex::new(read_embeddings(path)?)?;
            let examples = examples_from_index(&bundles, &index)?;
            Ok((bundles, examples, Some(index)))
        }
        None => {
            let examples = hashed_examples(&bundles, features)?;
            Ok((bundles, examples, None))
        }
    }
}

fn generate(a: &GenerateArgs, mut config: RunConfig) -> CliResult<Summary> {
    let g = &mut config.generate;
    if let Some(v) = a.n {
        g.n_reports = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.practices {
        g.practices = v;
    }
    if let Some(v) = a.ocr_fraction {
        g.ocr_fraction = v;
    }
    let corpus = generate_corpus(g)?;
    out_dir(&a.out)?;
    let mut manifest = Manifest::new("generate", Some(g.seed), g);
    let files = [
        ("reports.jsonl", write_jsonl(a.out.join("reports.jsonl"), &corpus.reports)),
        ("bundles.jsonl", write_jsonl(a.out.join("bundles.jsonl"), &corpus.bundles)),
        ("assignments.jsonl", write_jsonl(a.out.join("assignments.jsonl"), &corpus.assignments)),
        ("provenance.jsonl", write_jsonl(a.out.join("provenance.jsonl"), &corpus.provenance)),
    ];
    for (name, result) in files {
        result?;
        manifest.output(&a.out.join(name))?;
    }
    let manifest_path = manifest.write(&a.out)?;
    let noised = corpus.reports.iter().filter(|r| r.ocr_flag).count();
    let text = format!(
        "generated {} reports ({noised} with OCR noise), {} bundles in {}\n",
        corpus.reports.len(),
        corpus.bundles.len(),
        a.out.display()
    );
    Ok(summary(
        text,
        &serde_json::json!({
            "reports": corpus.reports.len(),
            "ocr_reports": noised,
            "bundles": corpus.bundles.len(),
            "manifest": manifest_path,
        }),
    ))
}

fn segment(a: &SegmentArgs, mut config: RunConfig) -> CliResult<Summary> {
    if a.no_carry_forward {
        config.grouping.carry_forward = false;
    }
    require(&a.reports)?;
    let mut manifest = Manifest::new("segment", None, &config.grouping);
    let (reports, mut gold) = read_corpus(&a.reports)?;
    manifest.input(&a.reports)?;
    if let Some(labels) = &a.labels {
        gold.extend(read_bundles(labels)?);
        manifest.input(labels)?;
    }
    let validation = validate_corpus(&reports, &gold);
    if !validation.is_ok() {
        return Err(CliError::Validation(format!("corpus failed validation: {:?}", validation.violations)));
    }
    let segmented = segment_corpus(&reports, &gold, &config.grouping)?;
    let mut audit: Vec<AuditEntry> = Vec::new();
    for r in &reports {
        audit.extend(audit_grouping(&split_sentences(r), &config.grouping)?);
    }
    if !segmented.skipped.is_empty() {
        log::warn!("{} segment groups skipped for lack of gold labels", segmented.skipped.len());
    }
    out_dir(&a.out)?;
    let bundles_path = a.out.join("bundles.jsonl");
    let audit_path = a.out.join("audit.jsonl");
    write_jsonl(&bundles_path, &segmented.bundles)?;
    write_jsonl(&audit_path, &audit)?;
    manifest.output(&bundles_path)?;
    manifest.output(&audit_path)?;
    let manifest_path = manifest.write(&a.out)?;
    let text = format!(
        "{} reports -> {} bundles, {} sentences audited, {} groups skipped\n",
        reports.len(),
        segmented.bundles.len(),
        audit.len(),
        segmented.skipped.len()
    );
    Ok(summary(
        text,
        &serde_json::json!({
            "reports": reports.len(),
            "bundles": segmented.bundles.len(),
            "sentences": audit.len(),
            "skipped": segmented.skipped.len(),
            "manifest": manifest_path,
        }),
    ))
}

fn featurize(a: &FeaturizeArgs, mut config: RunConfig) -> CliResult<Summary> {
    if let Some(v) = a.dim {
        config.features.dim = v;
    }
    if let Some(v) = a.seed {
        config.features.seed = v;
    }
    let mut manifest = Manifest::new("featurize", Some(config.features.seed), &config.features);
    let bundles = read_bundles(&a.bundles)?;
    manifest.input(&a.bundles)?;
    let records = featurize_bundles(&bundles, &config.features)?;
    out_dir(&a.out)?;
    let path = if a.jsonl {
        let p = a.out.join("embeddings.jsonl");
        write_embeddings_jsonl(&records, &p)?;
        p
    } else {
        let p = a.out.join("embeddings.bin");
        write_embeddings(&records, &p)?;
        p
    };
    manifest.output(&path)?;
    let manifest_path = manifest.write(&a.out)?;
    Ok(summary(
        format!("{} embeddings of dim {} -> {}\n", records.len(), config.features.dim, path.display()),
        &serde_json::json!({"records": records.len(), "dim": config.features.dim, "path": path, "manifest": manifest_path}),
    ))
}

fn per_task_json(values: [f64; 4]) -> serde_json::Value {
    PathologyTask::ALL
        .iter()
        .zip(values)
        .map(|(t, v)| (t.to_string(), serde_json::json!(v)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn train(a: &TrainArgs, mut config: RunConfig) -> CliResult<Summary> {
    let t = &mut config.train;
    if let Some(v) = a.mode {
        t.mode = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if a.epochs.is_some() {
        t.epochs = a.epochs;
    }
    if a.lr.is_some() {
        t.lr = a.lr;
    }
    if a.hidden_dim.is_some() {
        t.hidden_dim = a.hidden_dim;
    }
    let mut train_config = t.train_config();
    let init = match &a.init_trunk {
        Some(path) => {
            require(path)?;
            let (params, header) = read_checkpoint(path)?;
            train_config.hidden_dim = header.hidden_dim;
            Some((path, params))
        }
        None => None,
    };
    train_config.validate()?;
    let mut manifest = Manifest::new("train", Some(train_config.seed), &(&train_config, &config.features));
    let (_, examples, _) = load_examples(&a.data, &config.features, &mut manifest)?;
    if let Some((path, _)) = &init {
        manifest.input(path)?;
    }
    let (params, log) = train_with_init(&examples, &train_config, init.as_ref().map(|(_, p)| p))?;
    out_dir(&a.out)?;
    let ckpt = a.out.join("model.ckpt");
    let log_path = a.out.join("training_log.jsonl");
    write_checkpoint(&ckpt, &params, &train_config)?;
    log.write_jsonl(&log_path)?;
    manifest.output(&ckpt)?;
    manifest.output(&log_path)?;
    let manifest_path = manifest.write(&a.out)?;
    let val = log.last(cspine_core::mtl::Split::Val);
    let text = format!(
        "trained {} on {} instances: best epoch {}, final val loss {:.4}{}\n",
        train_config.mode,
        examples.len(),
        log.best_epoch,
        val.map_or(f64::NAN, |v| v.loss),
        if log.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(summary(
        text,
        &serde_json::json!({
            "mode": train_config.mode.to_string(),
            "instances": examples.len(),
            "best_epoch": log.best_epoch,
            "stopped_early": log.stopped_early,
            "val": val,
            "checkpoint": ckpt,
            "manifest": manifest_path,
        }),
    ))
}

fn eval(a: &EvalArgs, mut config: RunConfig) -> CliResult<Summary> {
    if let Some(path) = &a.model {
        require(path)?;
        let mut manifest = Manifest::new("eval", None, &config.features);
        manifest.input(path)?;
        let (params, header) = read_checkpoint(path)?;
        let (_, examples, _) = load_examples(&a.data, &config.features, &mut manifest)?;
        let cms: [ConfusionMatrix; 4] = evaluate(&params, &examples)?;
        let f1 = macro_f1_per_task(&cms);
        let active = params.mode.active_tasks();
        out_dir(&a.out)?;
        let path_out = a.out.join("eval.json");
        let report = serde_json::json!({
            "mode": header.mode.to_string(),
            "instances": examples.len(),
            "macro_f1": per_task_json(f1),
            "active_tasks": active,
            "confusion": cms,
        });
        write_json(&path_out, &report)?;
        manifest.output(&path_out)?;
        manifest.write(&a.out)?;
        let mut text = format!("{} on {} instances\n", header.mode, examples.len());
        for (t, task) in PathologyTask::ALL.iter().enumerate() {
            if active[t] {
                text.push_str(&format!("  {task}: macro-F1 {:.3}\n", f1[t]));
            }
        }
        return Ok(summary(text, &report));
    }

    let trials = &mut config.eval;
    if let Some(n) = a.seeds {
        trials.seeds = (0..n).collect();
    }
    if a.adapter {
        trials.adapter = true;
    }
    if let Some(v) = a.test_fraction {
        trials.test_fraction = v;
    }
    if a.epochs.is_some() {
        trials.overrides.epochs = a.epochs;
    }
    let mut manifest = Manifest::new("eval", None, &(&*trials, &config.features));
    let (_, examples, _) = load_examples(&a.data, &config.features, &mut manifest)?;
    let report = compare_single_multitask(&examples, trials)?;
    out_dir(&a.out)?;
    let table = format_f1_table(&report.rows(trials.adapter));
    let json_path = a.out.join("f1.json");
    let table_path = a.out.join("f1_table.txt");
    write_json(&json_path, &report)?;
    write_text(&table_path, &table)?;
    manifest.output(&json_path)?;
    manifest.output(&table_path)?;
    manifest.write(&a.out)?;
    let baseline = PathologyTask::ALL
        .iter()
        .zip(report.baseline)
        .map(|(t, b)| format!("{t} {b:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(summary(format!("{table}majority baseline: {baseline}\n"), &report))
}

fn distance(a: &DistanceArgs, mut config: RunConfig) -> CliResult<Summary> {
    let d = &mut config.distance;
    if let Some(v) = a.projections {
        d.n_projections = v;
    }
    if let Some(v) = &a.proj_dims {
        d.projection_dims = v.clone();
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    if a.include_class0 {
        d.include_class0 = true;
    }
    let sw = d.sw_config();
    let mut manifest = Manifest::new("distance", Some(sw.seed), &(&*d, &config.features));
    let (bundles, _, index) = load_examples(&a.data, &config.features, &mut manifest)?;
    let index = match index {
        Some(i) => i,
        None => EmbeddingIndex::new(featurize_bundles(&bundles, &config.features)?)?,
    };
    let clouds = slice_conditionals(&bundles, &index, d.include_class0)?;
    let matrix = distance_matrix(&clouds, &sw)?;
    let refs: Vec<&Cloud> = clouds.iter().map(|c| &c.points).collect();
    let diameter = estimate_diameter(&refs)?;
    let bound = upper_bound(diameter, 1.0)?;
    out_dir(&a.out)?;
    let csv_path = a.out.join("distances.csv");
    let json_path = a.out.join("distances.json");
    let csv = matrix.to_csv();
    write_text(&csv_path, &csv)?;
    let report = serde_json::json!({
        "labels": matrix.labels.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        "sizes": matrix.sizes,
        "values": matrix.values,
        "stderr": matrix.stderr,
        "diameter": diameter,
        "upper_bound": bound,
        "config": sw,
    });
    write_json(&json_path, &report)?;
    manifest.output(&csv_path)?;
    manifest.output(&json_path)?;
    manifest.write(&a.out)?;
    Ok(summary(format!("{csv}diameter bound: {bound:.4}\n"), &report))
}

fn bench(a: &BenchArgs, mut config: RunConfig) -> CliResult<Summary> {
    let b = &mut config.bench;
    if let Some(v) = a.inputs {
        b.inputs = v;
    }
    if let Some(v) = a.repeats {
        b.options.repeats = v;
    }
    if let Some(v) = a.workers {
        b.options.workers = v;
    }
    if let Some(v) = a.hidden_dim {
        b.hidden_dim = v;
    }
    if a.adapter {
        b.adapter = true;
    }
    if b.inputs < MIN_BENCH_INPUTS {
        return Err(CliError::Config(format!("bench needs at least {MIN_BENCH_INPUTS} inputs")));
    }
    let mut manifest = Manifest::new("bench", Some(b.seed), &(&*b, &config.features));
    let bundles: Vec<SegmentBundle> = match &a.bundles {
        Some(path) => {
            let v = read_bundles(path)?;
            manifest.input(path)?;
            v
        }
        None => {
            let mut g = config.generate.clone();
            g.seed = b.seed;
            generate_corpus(&g)?.bundles
        }
    };
    let mut inputs: Vec<Vec<f64>> = hashed_examples(&bundles, &config.features)?.into_iter().map(|e| e.x).collect();
    if inputs.is_empty() {
        return Err(CliError::Validation("no bundles to benchmark".into()));
    }
    let available = inputs.len();
    inputs = inputs.into_iter().cycle().take(b.inputs).collect();
    let (multi, single): (TrainMode, fn(PathologyTask) -> TrainMode) = if b.adapter {
        (TrainMode::AdapterMultitask, TrainMode::AdapterSingle)
    } else {
        (TrainMode::Multitask, TrainMode::SingleTask)
    };
    let dim = config.features.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
    let mt = MtlParams::init(multi, dim, b.hidden_dim, 0.5, 1e-5, 1.0, &mut rng);
    let singles = PathologyTask::ALL.map(|t| MtlParams::init(single(t), dim, b.hidden_dim, 0.5, 1e-5, 1.0, &mut rng));
    let results = bench_inference(&mt, &singles, &inputs, b.options)?;
    let ratio = results[1].wall_seconds / results[0].wall_seconds;
    out_dir(&a.out)?;
    let path = a.out.join("bench.json");
    let report = serde_json::json!({
        "results": results,
        "ratio": ratio,
        "distinct_inputs": available.min(b.inputs),
        "options": b.options,
    });
    write_json(&path, &report)?;
    manifest.output(&path)?;
    manifest.write(&a.out)?;
    Ok(summary(format!("{}ratio four-single / multitask: {ratio:.2}\n", format_bench_table(&results)), &report))
}
