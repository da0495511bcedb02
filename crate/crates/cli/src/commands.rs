use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use sedkit::baseline::{self, FeatureVector, TrainConfig, Vocab};
use sedkit::corruptor::{self, ConjunctionLexicon, CorruptConfig, RuleMix};
use sedkit::dedup::{self, DedupConfig, EvalSet, Unit};
use sedkit::deptree::{self, DepTree, Orientation};
use sedkit::edits::{read_m2, tokenize, Granularity};
use sedkit::metrics::{self, ErrorType, M2Config, RefSelection, SentenceLabel};
use sedkit::sampler::{self, SamplerConfig, Scheme, Task};
use sedkit::seed;
use sedkit::stats;

use crate::args::*;
use crate::config::FileConfig;
use crate::io::{ensure_distinct, invalid, read_lines, read_text, CliError, Output};

pub struct Globals {
    pub config: FileConfig,
    pub orientation: Orientation,
    pub lenient: bool,
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_file_name(format!("{}{suffix}", file_stem(path)))
}

fn load_trees(path: &Path, g: &Globals) -> Result<Vec<DepTree>, CliError> {
    let text = read_text(path)?;
    if g.lenient {
        let (trees, errors) = deptree::parse_conllu_lenient(&text);
        for e in &errors {
            eprintln!("warning: {}: skipped record: {e}", path.display());
        }
        Ok(trees)
    } else {
        deptree::parse_conllu(&text).map_err(invalid(path.display()))
    }
}

pub fn ingest(a: &IngestArgs, g: &Globals) -> Result<(), CliError> {
    let text = read_text(&a.input)?;
    let (trees, errors) = if g.lenient {
        deptree::parse_conllu_lenient(&text)
    } else {
        (deptree::parse_conllu(&text).map_err(invalid(a.input.display()))?, Vec::new())
    };
    for e in &errors {
        eprintln!("warning: {}: skipped record: {e}", a.input.display());
    }
    if let Some(out) = &a.output {
        ensure_distinct(out, &[&a.input])?;
        let mut o = Output::open(Some(out))?;
        o.write_str(&deptree::serialize_conllu(&trees))?;
        o.finish()?;
    }
    let tokens: usize = trees.iter().map(DepTree::len).sum();
    let mut o = Output::open(None)?;
    o.write_str(&format!("sentences\t{}\ntokens\t{tokens}\nrejected\t{}\n", trees.len(), errors.len()))?;
    o.finish()
}

pub fn dedup(a: &DedupArgs, g: &Globals) -> Result<(), CliError> {
    let gamma = g.config.pick(a.gamma, "gamma", 0.70)?;
    let unit: Unit = g.config.pick(a.unit.clone(), "unit", "char".to_string())?.parse().map_err(invalid("--unit"))?;
    let cfg = DedupConfig::new(gamma).map_err(invalid("--gamma"))?.with_unit(unit);

    let train: Vec<String> = read_text(&a.train)?.lines().map(str::to_string).collect();
    let evals = a
        .against
        .iter()
        .map(|p| Ok(EvalSet::new(file_stem(p), read_text(p)?.lines().map(str::to_string).collect())))
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = dedup::filter_leakage(&train, &evals, &cfg).map_err(invalid("dedup"))?;

    let clean_path = a.output.clone().unwrap_or_else(|| sibling(&a.train, ".clean.txt"));
    let report_path = a.report.clone().unwrap_or_else(|| sibling(&a.train, ".leak.tsv"));
    let inputs: Vec<&Path> = std::iter::once(a.train.as_path()).chain(a.against.iter().map(PathBuf::as_path)).collect();
    ensure_distinct(&clean_path, &inputs)?;
    ensure_distinct(&report_path, &inputs)?;

    let mut clean = Output::open(Some(&clean_path))?;
    for line in &report.kept {
        clean.write_str(line)?;
        clean.write_str("\n")?;
    }
    clean.finish()?;
    let mut hits = Output::open(Some(&report_path))?;
    hits.with(|w| dedup::write_hits_tsv(&report.removed, w))?;
    hits.finish()?;
    eprintln!(
        "dedup: gamma={gamma:.2} kept {} removed {} -> {}, {}",
        report.kept.len(),
        report.removed.len(),
        clean_path.display(),
        report_path.display()
    );
    Ok(())
}

fn parse_weights(s: &str) -> Result<RuleMix, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(invalid(format!("--weights `{s}`")))?;
    let arr: [f64; 3] = parts
        .try_into()
        .map_err(|_| CliError::Validation(format!("--weights `{s}`: expected three comma-separated numbers")))?;
    Ok(RuleMix(arr))
}

pub fn corrupt(a: &CorruptArgs, g: &Globals) -> Result<(), CliError> {
    let seed = g.config.pick(a.seed, "seed", 0)?;
    let rate = g.config.pick(a.rate, "rate", 1.0)?;
    let mix = match g.config.pick_opt(a.weights.clone(), "weights")? {
        Some(w) => parse_weights(&w)?,
        None => RuleMix::default(),
    };
    let lexicon = match g.config.pick_opt(a.lexicon.clone(), "lexicon")? {
        Some(p) => ConjunctionLexicon::parse(&read_text(&p)?).map_err(invalid(p.display()))?,
        None => ConjunctionLexicon::default(),
    };
    let trees = load_trees(&a.input, g)?;
    eprintln!("corrupt: seed={seed} rate={rate} weights={:?}", mix.0);
    let cfg = CorruptConfig { mix, rate, seed };
    let records = corruptor::corrupt_batch(&trees, &cfg, &lexicon).map_err(invalid("corrupt"))?;

    if let Some(p) = &a.output {
        ensure_distinct(p, &[&a.input])?;
    }
    let mut out = Output::open(a.output.as_deref())?;
    out.with(|w| corruptor::write_jsonl(&records, w))?;
    out.finish()?;
    if let Some(p) = &a.tsv {
        ensure_distinct(p, &[&a.input])?;
        let mut tsv = Output::open(Some(p))?;
        tsv.with(|w| corruptor::write_tsv(&records, w))?;
        tsv.finish()?;
    }
    eprintln!("corrupt: {} of {} sentences corrupted", records.len(), trees.len());
    Ok(())
}

fn relation_set(path: Option<PathBuf>) -> Result<Vec<String>, CliError> {
    match path {
        Some(p) => Ok(read_lines(&p)?.into_iter().map(|l| l.trim().to_string()).collect()),
        None => Ok(sampler::DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect()),
    }
}

pub fn sample(a: &SampleArgs, g: &Globals) -> Result<(), CliError> {
    let scheme: Scheme = a.task.parse().map_err(invalid("--task"))?;
    let seed = g.config.pick(a.seed, "seed", 0)?;
    let pairs = g.config.pick(a.pairs, "pairs_per_sentence", 4)?;
    let relations = relation_set(g.config.pick_opt(a.relations.clone(), "relation_set")?)?;
    let cfg = SamplerConfig::new(pairs, relations, seed)
        .map_err(invalid("sample"))?
        .with_orientation(g.orientation);
    let trees = load_trees(&a.input, g)?;
    eprintln!("sample: task={} seed={seed} pairs_per_sentence={pairs}", a.task);
    let examples = sampler::sample_corpus(&trees, &cfg, scheme);
    if let Some(p) = &a.output {
        ensure_distinct(p, &[&a.input])?;
    }
    let mut out = Output::open(a.output.as_deref())?;
    let n = out.with(|w| sampler::write_examples(&examples, w))?;
    out.finish()?;
    eprintln!("sample: {n} examples from {} sentences", trees.len());
    Ok(())
}

pub fn score_m2(a: &ScoreM2Args, g: &Globals) -> Result<(), CliError> {
    let beta = g.config.pick(a.beta, "beta", 0.5)?;
    let max_unchanged = g.config.pick(a.max_unchanged, "max_unchanged", 2)?;
    let granularity: Granularity = g
        .config
        .pick(a.granularity.clone(), "granularity", "token".to_string())?
        .parse()
        .map_err(invalid("--granularity"))?;
    let records = read_m2(&read_text(&a.m2)?).map_err(invalid(a.m2.display()))?;
    let hyps: Vec<Vec<String>> =
        read_text(&a.hyp)?.lines().map(|l| tokenize(l, granularity)).collect();
    let sources: Vec<Vec<String>> = match &a.source {
        Some(p) => read_text(p)?.lines().map(|l| tokenize(l, granularity)).collect(),
        None => records.iter().map(|r| r.source.clone()).collect(),
    };
    let cfg = M2Config {
        beta,
        max_unchanged,
        selection: if a.per_sentence { RefSelection::PerSentence } else { RefSelection::Cumulative },
    };
    let report = metrics::m2_score(&sources, &hyps, &records, &cfg).map_err(invalid("score m2"))?;
    let mut out = Output::open(None)?;
    out.write_str(&format!(
        "TP/FP/FN = {}/{}/{}\n{}\n",
        report.tp,
        report.fp,
        report.fn_,
        report.summary_line()
    ))?;
    out.finish()?;
    if let Some(p) = &a.json {
        write_json(p, &report)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = Output::open(Some(path))?;
    out.with(|w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })?;
    out.finish()
}

/// `id<TAB>value` rows in file order; duplicate ids are errors.
fn id_table(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut seen = HashMap::new();
    let mut rows = Vec::new();
    for (k, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = line
            .split_once('\t')
            .ok_or_else(|| CliError::Validation(format!("{}:{}: expected `id<TAB>value`", path.display(), k + 1)))?;
        if seen.insert(id.to_string(), k + 1).is_some() {
            return Err(CliError::Validation(format!("{}:{}: duplicate id `{id}`", path.display(), k + 1)));
        }
        rows.push((id.to_string(), value.trim().to_string()));
    }
    Ok(rows)
}

pub fn score_cls(a: &ScoreClsArgs, _g: &Globals) -> Result<(), CliError> {
    let parse_label = |path: &Path, v: &str| -> Result<SentenceLabel, CliError> { v.parse().map_err(invalid(path.display())) };
    let gold_rows = id_table(&a.gold)?;
    let preds: HashMap<String, String> = id_table(&a.pred)?.into_iter().collect();
    let mut golds = Vec::with_capacity(gold_rows.len());
    let mut predicted = Vec::with_capacity(gold_rows.len());
    for (id, g) in &gold_rows {
        golds.push(parse_label(&a.gold, g)?);
        let p = preds
            .get(id)
            .ok_or_else(|| CliError::Validation(format!("{}: no prediction for id `{id}`", a.pred.display())))?;
        predicted.push(parse_label(&a.pred, p)?);
    }
    if preds.len() != gold_rows.len() {
        return Err(CliError::Validation(format!(
            "{} predictions but {} gold labels",
            preds.len(),
            gold_rows.len()
        )));
    }

    let report = match &a.types {
        Some(p) => {
            let mut by_id: HashMap<String, ErrorType> = HashMap::new();
            for (id, t) in id_table(p)? {
                if t.is_empty() || t == "_" {
                    continue;
                }
                by_id.insert(id, t.parse().map_err(invalid(p.display()))?);
            }
            let types: Vec<Option<ErrorType>> = gold_rows.iter().map(|(id, _)| by_id.get(id).copied()).collect();
            metrics::per_type_recall(&predicted, &golds, &types)
        }
        None => metrics::cls_metrics(&predicted, &golds),
    }
    .map_err(invalid("score cls"))?;

    let mut text = format!(
        "TP/FP/FN/TN = {}/{}/{}/{}\nP/R/F1 = {:.1}/{:.1}/{:.1}\n",
        report.tp,
        report.fp,
        report.fn_,
        report.tn,
        100.0 * report.precision,
        100.0 * report.recall,
        100.0 * report.f1
    );
    if let Some(map) = &report.per_type {
        text.push_str("type\tgold\tdetected\trecall\n");
        for (t, r) in map {
            text.push_str(&format!("{t}\t{}\t{}\t{:.1}\n", r.gold, r.detected, 100.0 * r.recall));
        }
    }
    let mut out = Output::open(None)?;
    out.write_str(&text)?;
    out.finish()?;
    if let Some(p) = &a.json {
        write_json(p, &report)?;
    }
    Ok(())
}

pub fn stats(a: &StatsArgs, g: &Globals) -> Result<(), CliError> {
    let table = if !a.labeled.is_empty() {
        let rows = a
            .labeled
            .iter()
            .map(|p| {
                let rows = stats::parse_labeled(&read_text(p)?).map_err(invalid(p.display()))?;
                Ok((file_stem(p), stats::labeled_stats(&rows).map_err(invalid(p.display()))?))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        stats::format_labeled_table(&rows)
    } else {
        let granularity: Granularity = g
            .config
            .pick(a.granularity.clone(), "granularity", "char".to_string())?
            .parse()
            .map_err(invalid("--granularity"))?;
        let parsed = a
            .pairs
            .iter()
            .map(|p| Ok((p, stats::parse_pairs(&read_text(p)?).map_err(invalid(p.display()))?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let at = |unit: Granularity| {
            parsed
                .iter()
                .map(|(p, pairs)| Ok((file_stem(p), stats::pair_stats(pairs, unit).map_err(invalid(p.display()))?)))
                .collect::<Result<Vec<_>, CliError>>()
        };
        let table = stats::format_pair_table(&at(granularity)?);
        if a.detail {
            // Both edit units side by side.
            let (chars, tokens) = (at(Granularity::Char)?, at(Granularity::Token)?);
            let mut lines = table.lines();
            let mut out = format!("{}\tAvg.Edit.Char\tAvg.Edit.Token\n", lines.next().unwrap_or_default());
            for ((line, (_, c)), (_, t)) in lines.zip(&chars).zip(&tokens) {
                out.push_str(&format!("{line}\t{:.1}\t{:.1}\n", c.avg_edit, t.avg_edit));
            }
            out
        } else {
            table
        }
    };
    let mut out = Output::open(None)?;
    out.write_str(&table)?;
    out.finish()
}

/// A task's examples, each with the tree it was sampled from.
type TaskItems<'a> = (Task, Vec<(&'a sampler::PairExample, &'a DepTree)>);

#[derive(serde::Serialize)]
struct ProbeModel<'a> {
    task: Task,
    vocab: &'a Vocab,
    model: &'a baseline::LinearModel,
}

pub fn probe(a: &ProbeArgs, g: &Globals) -> Result<(), CliError> {
    let c = &g.config;
    let seed = c.pick(a.seed, "seed", 0)?;
    let holdout = c.pick(a.holdout, "holdout", 0.2)?;
    if !(0.0..1.0).contains(&holdout) {
        return Err(CliError::Validation(format!("--holdout must lie in [0, 1), got {holdout}")));
    }
    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        lr: c.pick(a.lr, "lr", defaults.lr)?,
        epochs: c.pick(a.epochs, "epochs", defaults.epochs)?,
        batch: c.pick(a.batch, "batch", defaults.batch)?,
        l2: c.pick(a.l2, "l2", defaults.l2)?,
        seed,
    };
    let vocab_cap = c.pick(a.vocab_cap, "vocab_cap", 32)?;

    let trees = load_trees(&a.trees, g)?;
    let by_id: HashMap<String, &DepTree> = trees.iter().enumerate().map(|(k, t)| (t.source_id(k), t)).collect();
    let examples = sampler::read_examples(&read_text(&a.examples)?).map_err(invalid(a.examples.display()))?;
    eprintln!("probe: seed={seed} holdout={holdout} epochs={} lr={}", train_cfg.epochs, train_cfg.lr);

    let mut by_task: BTreeMap<&str, TaskItems> = BTreeMap::new();
    for ex in &examples {
        let tree = by_id.get(&ex.source_id).ok_or_else(|| {
            CliError::Validation(format!("example source_id `{}` not found in {}", ex.source_id, a.trees.display()))
        })?;
        by_task.entry(ex.task.as_str()).or_insert_with(|| (ex.task, Vec::new())).1.push((ex, tree));
    }

    let mut rows = Vec::new();
    let mut models = Vec::new();
    for (name, (task, items)) in &by_task {
        let held = |ex: &sampler::PairExample| {
            (seed::derive(seed, &[&ex.source_id]) % 10_000) as f64 / 10_000.0 < holdout
        };
        let (test, train): (Vec<_>, Vec<_>) = items.iter().partition(|(ex, _)| held(ex));
        let keys = train
            .iter()
            .map(|(ex, t)| baseline::pos_pair_key(ex, t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid("probe"))?;
        let vocab = Vocab::build(keys, vocab_cap);
        let featurize = |set: &[(&sampler::PairExample, &DepTree)]| -> Result<(Vec<FeatureVector>, Vec<String>), CliError> {
            let xs = set
                .iter()
                .map(|(ex, t)| baseline::featurize(ex, t, &vocab))
                .collect::<Result<Vec<_>, _>>()
                .map_err(invalid("probe"))?;
            Ok((xs, set.iter().map(|(ex, _)| ex.label.clone()).collect()))
        };
        let (train_x, train_y) = featurize(&train)?;
        let out = match baseline::train(&train_x, &train_y, &train_cfg) {
            Ok(out) => out,
            Err(baseline::BaselineError::TooFewClasses(n)) => {
                eprintln!("warning: probe: task {name} has {n} class(es) in training data, skipped");
                continue;
            }
            Err(e) => return Err(invalid("probe")(e)),
        };
        let (eval_x, eval_y) = if test.is_empty() { (train_x, train_y) } else { featurize(&test)? };
        rows.extend(baseline::accuracy_report(&out.model, &eval_x, &eval_y, name).map_err(invalid("probe"))?);
        eprintln!(
            "probe: {name}: {} train / {} eval, loss {:.4} -> {:.4}",
            train.len(),
            test.len(),
            out.losses[0],
            out.losses[out.losses.len() - 1]
        );
        models.push((*task, vocab, out.model));
    }

    if let Some(p) = &a.model {
        let doc: Vec<ProbeModel> =
            models.iter().map(|(task, vocab, model)| ProbeModel { task: *task, vocab, model }).collect();
        write_json(p, &doc)?;
    }
    let mut out = Output::open(a.report.as_deref())?;
    out.with(|w| baseline::write_accuracy_tsv(&rows, w))?;
    out.finish()
}
