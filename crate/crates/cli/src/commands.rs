use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use stresshmm_core::classify::{
    check_split, evaluate_bank, extract_corpus_features, parse_alpha_range, relative_improvement, score_components,
    sweep_from_components, train_bank, ConfusionMatrix, Evaluation, ModelBank, ModelKind, PerformanceReport, SweepRow,
};
use stresshmm_core::model_io::{load_bank, save_bank, write_atomic};
use stresshmm_core::{generate_synthetic, load_manifest, CorpusManifest, SplitSpec, SyntheticSpec};

use crate::config::{Overrides, RunConfig};
use crate::Preset;

pub struct SynthArgs {
    pub out: PathBuf,
    pub preset: Preset,
    pub paper_shaped: bool,
    pub speakers: Option<usize>,
    pub sentences: Option<u32>,
    pub repetitions: Option<u32>,
    pub seed: Option<u64>,
    pub dry_run: bool,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match a.preset {
        Preset::Stress => SyntheticSpec::stress(),
        Preset::Emotion => SyntheticSpec::emotion(),
        Preset::ProsodyOnly => SyntheticSpec::prosody_only(),
    };
    if a.paper_shaped {
        spec = spec.paper_shaped();
    }
    let (speakers, sentences, repetitions) = (
        a.speakers.unwrap_or(spec.speakers),
        a.sentences.unwrap_or(spec.sentences),
        a.repetitions.unwrap_or(spec.repetitions),
    );
    spec = spec.with_shape(speakers, sentences, repetitions);
    if let Some(s) = a.seed {
        spec = spec.with_seed(s);
    }
    let manifest = if a.dry_run {
        spec.plan().context("planning corpus")?
    } else {
        generate_synthetic(&spec, &a.out).with_context(|| format!("writing corpus to {}", a.out.display()))?
    };
    let path = a.out.join("manifest.tsv");
    if a.dry_run {
        println!("manifest (not written): {}", path.display());
    } else {
        println!("manifest: {}", path.display());
    }
    println!(
        "utterances: {} ({} speakers x {} sentences x {} conditions x {} repetitions)",
        manifest.utterances().len(),
        spec.speakers,
        spec.sentences,
        spec.conditions.len(),
        spec.repetitions
    );
    Ok(())
}

struct Prepared {
    cfg: RunConfig,
    manifest: CorpusManifest,
    split: SplitSpec,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn prepare(o: &Overrides, record_as: &str) -> Result<Prepared> {
    let cfg = RunConfig::resolve(o)?;
    cfg.validate().context("validating configuration")?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .context("starting worker pool")?;
    }
    let manifest = load_manifest(cfg.manifest_path()).context("loading manifest")?;
    let split = cfg.split.resolve(&manifest).context("building split")?;
    let (train, test) = split.partition(&manifest);
    check_split(&manifest, &split, &train, &test).context("checking split")?;
    fs::create_dir_all(cfg.output_dir()).with_context(|| format!("creating {}", cfg.output_dir().display()))?;
    fs::write(cfg.output_dir().join(record_as), cfg.absolute()?.to_toml()?).context("recording configuration")?;
    Ok(Prepared {
        cfg,
        manifest,
        split,
        train,
        test,
    })
}

fn write_jsonl(path: &Path, records: &[serde_json::Value]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn train(o: &Overrides) -> Result<()> {
    let p = prepare(o, "config.toml")?;
    let feats = extract_corpus_features(&p.manifest, &p.train, &p.cfg.features, p.cfg.cache_dir.as_deref())
        .context("extracting training features")?;
    let (bank, logs) = train_bank(&p.manifest, &p.train, &feats, &p.cfg.model).context("training")?;
    let out = p.cfg.output_dir();
    save_bank(&bank, out.join("bank.txt")).context("writing bank")?;
    let records: Vec<serde_json::Value> = logs.iter().map(|l| json!({ "record": "training", "log": l })).collect();
    write_jsonl(&out.join("training_log.jsonl"), &records)?;
    println!(
        "trained {} {} models on {} utterances ({} train speakers, {} train sentences)",
        bank.len(),
        bank.kind(),
        p.train.len(),
        p.split.train_speakers().len(),
        p.split.train_sentences().len()
    );
    for l in &logs {
        println!(
            "  {:<10} {:>4} utterances, {:>3} iterations, final log-likelihood {:.3}",
            l.condition,
            l.utterances,
            l.acoustic.len().saturating_sub(1),
            l.acoustic.last().copied().unwrap_or(f64::NAN)
        );
    }
    println!("bank: {}", out.join("bank.txt").display());
    Ok(())
}

fn confusion_record(c: &ConfusionMatrix) -> serde_json::Value {
    let k = c.len();
    let counts: Vec<Vec<u64>> = (0..k).map(|p| (0..k).map(|t| c.count(p, t)).collect()).collect();
    let percent: Vec<Vec<Option<f64>>> = (0..k).map(|p| (0..k).map(|t| c.percent(p, t)).collect()).collect();
    json!({ "record": "confusion", "labels": c.labels(), "counts": counts, "percent": percent })
}

fn sweep_records(rows: &[SweepRow]) -> Vec<serde_json::Value> {
    rows.iter()
        .map(|r| {
            json!({
                "record": "sweep",
                "alpha": r.alpha,
                "average": r.average,
                "average_excluding_neutral": r.average_excluding_neutral,
                "per_condition": r.per_condition,
            })
        })
        .collect()
}

fn render_sweep(labels: &[String], rows: &[SweepRow]) -> String {
    let mut out = format!("{:<7}", "alpha");
    for l in labels {
        let _ = write!(out, "{l:>10}");
    }
    let _ = writeln!(out, "{:>10}{:>16}", "average", "avg-no-neutral");
    for r in rows {
        let _ = write!(out, "{:<7.1}", r.alpha);
        for v in &r.per_condition {
            let _ = write!(out, "{:>10}", v.map_or_else(|| "-".into(), |x| format!("{x:.1}")));
        }
        let ex = r
            .average_excluding_neutral
            .map_or_else(|| "-".into(), |x| format!("{x:.1}"));
        let _ = writeln!(out, "{:>10.1}{ex:>16}", r.average);
    }
    out
}

fn write_evaluation(
    out: &Path,
    manifest: &CorpusManifest,
    eval: &Evaluation,
    sweep: Option<&[SweepRow]>,
) -> Result<()> {
    let labels = manifest.condition_set().labels();
    let mut records = vec![
        json!({ "record": "performance", "report": eval.report }),
        confusion_record(&eval.confusion),
    ];
    for d in &eval.decisions {
        let u = &manifest.utterances()[d.utterance];
        records.push(json!({
            "record": "decision",
            "audio_path": u.audio_path,
            "truth": labels[d.truth],
            "predicted": labels[d.predicted],
            "scores": d.scores,
        }));
    }
    let mut text = String::new();
    let _ = writeln!(text, "Identification performance (%)\n");
    text.push_str(&PerformanceReport::render_table(&[&eval.report]));
    let _ = writeln!(
        text,
        "\nConfusion matrix (%): columns are the true condition, rows the identified model\n"
    );
    text.push_str(&eval.confusion.render());
    if let Some(rows) = sweep {
        records.extend(sweep_records(rows));
        let _ = writeln!(text, "\nAverage identification performance (%) versus alpha\n");
        text.push_str(&render_sweep(labels, rows));
        fs::write(out.join("sweep.tsv"), SweepRow::render_series(rows))?;
    }
    fs::write(out.join("report.txt"), &text)?;
    write_jsonl(&out.join("report.jsonl"), &records)?;
    print!("{text}");
    Ok(())
}

pub fn evaluate(o: &Overrides, bank_path: &Path, alpha_sweep: Option<&str>) -> Result<()> {
    let alphas = alpha_sweep
        .map(parse_alpha_range)
        .transpose()
        .context("parsing --alpha-sweep")?;
    let p = prepare(o, "evaluate_config.toml")?;
    let mut bank: ModelBank = load_bank(bank_path).with_context(|| format!("loading bank {}", bank_path.display()))?;
    if let Some(a) = o.alpha {
        bank = bank.with_alpha(a).context("applying --alpha")?;
    }
    if alphas.is_some() && bank.kind() != ModelKind::Sphmm {
        bail!(
            "--alpha-sweep needs a sphmm bank, {} has kind {}",
            bank_path.display(),
            bank.kind()
        );
    }
    let feats = extract_corpus_features(&p.manifest, &p.test, &p.cfg.features, p.cfg.cache_dir.as_deref())
        .context("extracting test features")?;
    let eval = evaluate_bank(&bank, &p.manifest, &p.test, &feats).context("scoring test utterances")?;
    let rows = match &alphas {
        Some(a) => {
            let comps = score_components(&bank, &feats)?;
            let truths: Vec<usize> = p.test.iter().map(|&i| p.manifest.label_index(i)).collect();
            Some(sweep_from_components(bank.conditions().labels(), &truths, &comps, a)?)
        }
        None => None,
    };
    write_evaluation(p.cfg.output_dir(), &p.manifest, &eval, rows.as_deref()).context("writing reports")
}

pub fn sweep(o: &Overrides, alpha_sweep: &str) -> Result<()> {
    let alphas = parse_alpha_range(alpha_sweep).context("parsing --alpha-sweep")?;
    let o = Overrides {
        kind: Some(ModelKind::Sphmm),
        ..o.clone()
    };
    let p = prepare(&o, "config.toml")?;
    let train_feats = extract_corpus_features(&p.manifest, &p.train, &p.cfg.features, p.cfg.cache_dir.as_deref())
        .context("extracting training features")?;
    let (bank, _) = train_bank(&p.manifest, &p.train, &train_feats, &p.cfg.model).context("training")?;
    drop(train_feats);
    let out = p.cfg.output_dir();
    save_bank(&bank, out.join("bank.txt")).context("writing bank")?;
    let feats = extract_corpus_features(&p.manifest, &p.test, &p.cfg.features, p.cfg.cache_dir.as_deref())
        .context("extracting test features")?;
    let eval = evaluate_bank(&bank, &p.manifest, &p.test, &feats).context("scoring test utterances")?;
    let comps = score_components(&bank, &feats)?;
    let truths: Vec<usize> = p.test.iter().map(|&i| p.manifest.label_index(i)).collect();
    let rows = sweep_from_components(bank.conditions().labels(), &truths, &comps, &alphas)?;
    write_evaluation(out, &p.manifest, &eval, Some(&rows)).context("writing reports")
}

fn read_report(dir: &Path) -> Result<PerformanceReport> {
    let path = dir.join("report.jsonl");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("parsing {}", path.display()))?;
        if v["record"] == "performance" {
            return Ok(serde_json::from_value(v["report"].clone())?);
        }
    }
    bail!("{} has no performance record", path.display())
}

pub fn report(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let reports = runs.iter().map(|r| read_report(r)).collect::<Result<Vec<_>>>()?;
    if reports.windows(2).any(|w| w[0].labels != w[1].labels) {
        bail!("runs use different condition sets");
    }
    let refs: Vec<&PerformanceReport> = reports.iter().collect();
    let mut text = PerformanceReport::render_table(&refs);
    if let Some((last, rest)) = reports.split_last() {
        for base in rest {
            let _ = writeln!(text, "\nRelative improvement (%) of {} over {}", last.kind, base.kind);
            for (i, l) in last.labels.iter().enumerate() {
                let cell = match (last.per_condition[i], base.per_condition[i]) {
                    (Some(n), Some(b)) if b > 0.0 => format!("{:.1}", relative_improvement(n, b)?),
                    _ => "-".into(),
                };
                let _ = writeln!(text, "  {l:<10}{cell:>8}");
            }
            if base.average > 0.0 {
                let _ = writeln!(
                    text,
                    "  {:<10}{:>8.1}",
                    "average",
                    relative_improvement(last.average, base.average)?
                );
            }
        }
    }
    print!("{text}");
    if let Some(path) = out {
        write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
