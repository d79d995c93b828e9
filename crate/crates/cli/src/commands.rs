use std::path::{Path, PathBuf};
use std::time::Instant;

use mwp_core::corpus::{
    corpus_stats, load_corpus, save_corpus, validate_corpus, CorpusError, ProblemRecord, VariationType,
};
use mwp_core::expr::solve_for_x;
use mwp_core::quantity::TaggedProblem;
use mwp_core::variants::{
    build_prompts, generate_offline, generate_remote, variant_records, VariantError, VariantRequest, VariantSet,
};
use mwp_core::voting::vote;
use mwp_core::BigRational;
use mwp_harness::{
    run_cv, run_k_grid, to_original_frame, train_solver, CvConfig, HarnessError, Predictor, Sample, VariantSource,
};
use mwp_model::{checkpoint, ModelError};
use serde_json::json;

use crate::config::{RunConfig, VariantMode};
use crate::output::{header, header_line, write, write_json};
use crate::CliError;

fn corpus_error(e: CorpusError) -> CliError {
    CliError::Io(e.to_string())
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Io { .. } | ModelError::Checkpoint(_) => CliError::Io(e.to_string()),
        e => CliError::Runtime(e.to_string()),
    }
}

fn harness_error(e: HarnessError) -> CliError {
    match e {
        HarnessError::Corpus(e) => corpus_error(e),
        HarnessError::Split(e) => CliError::Config(e.to_string()),
        e => CliError::Runtime(e.to_string()),
    }
}

fn variant_error(e: VariantError) -> CliError {
    match e {
        VariantError::MissingCredentials(_) | VariantError::KOutOfRange(_) => CliError::Config(e.to_string()),
        VariantError::Archive(_) => CliError::Io(e.to_string()),
        e => CliError::Runtime(e.to_string()),
    }
}

fn load(path: &Path) -> Result<Vec<ProblemRecord>, CliError> {
    let records = load_corpus(path).map_err(corpus_error)?;
    validate_corpus(&records).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(records)
}

fn deterministic(cfg: &RunConfig) -> bool {
    cfg.variants.mode != VariantMode::Remote
}

/// Fails before any request when the key variable is unset.
fn check_credentials(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.variants.mode == VariantMode::Remote && std::env::var_os(&cfg.remote.api_key_env).is_none() {
        return Err(CliError::Config(format!(
            "remote variant generation needs an API key in ${}",
            cfg.remote.api_key_env
        )));
    }
    Ok(())
}

fn variants_for(cfg: &RunConfig, seed: &ProblemRecord) -> Result<VariantSet, CliError> {
    match cfg.variants.mode {
        VariantMode::Offline => Ok(generate_offline(seed, cfg.variants.counts(), cfg.seed)),
        VariantMode::Remote => {
            let spec = build_prompts(&VariantRequest {
                seed: seed.clone(),
                counts: cfg.variants.counts(),
            })
            .map_err(variant_error)?;
            generate_remote(&spec, &cfg.remote).map_err(variant_error)
        }
        VariantMode::Corpus => Err(CliError::Config(
            "variant mode `corpus` reads variants from the corpus; choose offline or remote to generate".into(),
        )),
    }
}

pub fn stats(cfg: &RunConfig, path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let records = load(path)?;
    let s = corpus_stats(&records).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("corpus                   {}", path.display());
    println!("problems                 {}", s.n_problems);
    println!("unique templates         {}", s.n_unique_templates);
    println!("avg operators            {:.3}", s.avg_operators);
    println!("avg quantities/problem   {:.3}", s.avg_quantities_per_problem);
    println!("avg quantities/equation  {:.3}", s.avg_quantities_per_equation);
    println!("problems with constants  {}", s.n_problems_with_constants);
    println!("runtime                  {:.3}s", start.elapsed().as_secs_f64());
    if let Some(out) = out {
        write_json(out, header(cfg, "stats", true), &json!({ "corpus": path, "stats": s }))?;
    }
    Ok(())
}

pub fn tag_text(cfg: &RunConfig, text: &str, out: Option<&Path>) -> Result<(), CliError> {
    let t = TaggedProblem::new(text, None).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{}", t.tagged_text);
    for q in &t.quantities {
        println!("[Q{}] = {}", q.index, q.surface);
    }
    if let Some(out) = out {
        write_json(out, header(cfg, "tag", true), &t)?;
    }
    Ok(())
}

pub fn tag_corpus(cfg: &RunConfig, path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let records = load(path)?;
    let mut lines = vec![format!("# {}", header_line(cfg, "tag", true))];
    for r in &records {
        let t = TaggedProblem::new(&r.text, Some(&r.equation))
            .map_err(|e| CliError::Io(format!("record {}: {e}", r.id)))?;
        lines.push(
            json!({
                "id": r.id,
                "group_id": r.group_id,
                "variation_type": r.variation_type,
                "tagged_text": t.tagged_text,
                "tagged_equation": t.tagged_equation,
                "quantities": t.quantities,
            })
            .to_string(),
        );
    }
    let text = lines.join("\n") + "\n";
    match out {
        Some(out) => {
            write(out, &text)?;
            println!("tagged {} records into {}", records.len(), out.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn gen_variants(cfg: &RunConfig, path: &Path, out: &Path) -> Result<(), CliError> {
    if cfg.variants.counts().total() == 0 {
        return Err(CliError::Config(
            "no variants requested; set --k1/--k2/--k3 or --k".into(),
        ));
    }
    check_credentials(cfg)?;
    let mut records = load(path)?;
    let originals: Vec<ProblemRecord> = records
        .iter()
        .filter(|r| r.variation_type == VariationType::Original)
        .cloned()
        .collect();
    let (mut added, mut shortfalls, mut rejected) = (0, 0, 0);
    for r in &originals {
        let set = variants_for(cfg, r)?;
        shortfalls += set.shortfalls.len();
        rejected += set.rejection_count();
        let new = variant_records(r, &set);
        added += new.len();
        records.extend(new);
    }
    let header = vec![header_line(cfg, "gen-variants", deterministic(cfg))];
    save_corpus(out, &records, &header).map_err(corpus_error)?;
    println!(
        "{} seeds, {added} variants written to {} ({rejected} rejected, {shortfalls} short)",
        originals.len(),
        out.display()
    );
    Ok(())
}

fn loss_log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".log.json");
    PathBuf::from(s)
}

pub fn train(cfg: &RunConfig, path: &Path, out: &Path) -> Result<(), CliError> {
    if cfg.variants.mode == VariantMode::Remote {
        return Err(CliError::Config(
            "train does not call the endpoint; run gen-variants --remote first and train on its output".into(),
        ));
    }
    let records = load(path)?;
    let mut all = records.clone();
    if cfg.variants.mode == VariantMode::Offline && cfg.variants.counts().total() > 0 {
        for r in records.iter().filter(|r| r.variation_type == VariationType::Original) {
            all.extend(variant_records(r, &variants_for(cfg, r)?));
        }
    }
    let samples = all
        .iter()
        .map(Sample::from_record)
        .collect::<Result<Vec<_>, _>>()
        .map_err(harness_error)?;
    println!("training on {} samples ({} problems)", samples.len(), records.len());
    let start = Instant::now();
    let mut losses = Vec::new();
    let model = train_solver(&samples, &cfg.model, &cfg.train_config(), cfg.seed, |e, l| {
        println!("epoch {:>3}  loss {l:.5}", e + 1);
        losses.push(l);
    })
    .map_err(harness_error)?;
    checkpoint::save(&model, out).map_err(model_error)?;
    let log = loss_log_path(out);
    write_json(
        &log,
        header(cfg, "train", true),
        &json!({
            "corpus": path,
            "samples": samples.len(),
            "parameters": model.params.parameter_count(),
            "epoch_losses": losses,
            "runtime_seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    println!("checkpoint {}  loss log {}", out.display(), log.display());
    Ok(())
}

pub fn predict(cfg: &RunConfig, model_path: &Path, text: &str, out: Option<&Path>) -> Result<(), CliError> {
    let model = checkpoint::load(model_path).map_err(model_error)?;
    if cfg.voting {
        check_credentials(cfg)?;
    }
    // placeholder equation and answer: only the text feeds the generator
    let original = ProblemRecord::original("input", text, "x=0", BigRational::from_integer(0.into()));
    let tagged = TaggedProblem::new(text, None).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut candidates = vec![json!({
        "source": "original",
        "text": tagged.tagged_text,
        "equation": model.predict(&original),
    })];
    let mut equations = vec![model.predict(&original)];
    if cfg.voting && cfg.variants.counts().total() > 0 {
        let set = variants_for(cfg, &original)?;
        for (i, v) in set.valid().enumerate() {
            let rec = ProblemRecord {
                id: format!("input-v{}", i + 1),
                text: v.text.clone(),
                variation_type: v.variation_type,
                ..original.clone()
            };
            let eq = to_original_frame(&model.predict(&rec), &rec, &original);
            candidates.push(json!({
                "source": v.variation_type,
                "text": TaggedProblem::new(&v.text, None).map(|t| t.tagged_text).unwrap_or_default(),
                "equation": eq,
            }));
            equations.push(eq);
        }
    }
    let (winner, ballot) = match vote(&equations) {
        Ok((w, b)) => (Some(w), Some(b)),
        Err(_) => (None, None),
    };
    let answers: Vec<String> = winner
        .as_ref()
        .and_then(|w| solve_for_x(w, &tagged.values()).ok())
        .map(|roots| roots.iter().map(|r| r.to_string()).collect())
        .unwrap_or_default();
    println!("{}", tagged.tagged_text);
    for (i, c) in candidates.iter().enumerate() {
        println!(
            "candidate {i:>2} [{}] {}",
            c["source"].as_str().unwrap_or(""),
            c["equation"].as_str().unwrap_or("")
        );
    }
    match &winner {
        Some(w) => println!("winner {w}  x = {}", answers.join(", ")),
        None => println!("winner none (every candidate malformed)"),
    }
    if let Some(out) = out {
        write_json(
            out,
            header(cfg, "predict", deterministic(cfg)),
            &json!({
                "model": model_path,
                "tagged_text": tagged.tagged_text,
                "quantities": tagged.quantities,
                "candidates": candidates,
                "winner": winner.map(|w| w.to_string()),
                "ballot": ballot,
                "answers": answers,
            }),
        )?;
    }
    Ok(())
}

fn cv_config(cfg: &RunConfig) -> Result<CvConfig, CliError> {
    let source = match cfg.variants.mode {
        VariantMode::Offline => VariantSource::Offline,
        VariantMode::Corpus => VariantSource::Corpus,
        VariantMode::Remote => return Err(CliError::Config(
            "eval does not call the endpoint; generate variants with gen-variants --remote and use mode = \"corpus\""
                .into(),
        )),
    };
    Ok(CvConfig {
        folds: cfg.folds,
        variants: cfg.variants.counts(),
        source,
        voting: cfg.voting,
        seed: cfg.seed,
        model: cfg.model.clone(),
        train: cfg.train_config(),
        parallel: true,
    })
}

pub fn eval(cfg: &RunConfig, path: &Path, grid: &[usize], out: Option<&Path>) -> Result<(), CliError> {
    let records = load(path)?;
    let cv = cv_config(cfg)?;
    let reports = if grid.is_empty() {
        vec![run_cv(&records, &cv).map_err(harness_error)?]
    } else {
        run_k_grid(&records, &cv, grid).map_err(harness_error)?
    };
    let tables: Vec<String> = reports.iter().map(|r| r.table()).collect();
    for t in &tables {
        println!("{t}");
    }
    if let Some(out) = out {
        let h = header(cfg, "eval", true);
        if grid.is_empty() {
            write_json(out, h, &json!({ "report": reports[0] }))?;
        } else {
            write_json(out, h, &json!({ "grid": grid, "reports": reports }))?;
        }
        let table = format!("# {}\n{}", header_line(cfg, "eval", true), tables.join("\n"));
        write(&out.with_extension("txt"), &table)?;
    }
    Ok(())
}
