use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use entlink::analysis::{
    ablation_eval, capture_activations, mention_pair_similarity, name_map, pca_2d, rsa_entities_vs_names, value_drift,
    Layer,
};
use entlink::corpus::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use entlink::corpus::{default_catalog_path, entity_frequencies, load_catalog, load_corpus, save_corpus, Corpus, FrequencyTable};
use entlink::evaluation::{
    approx_randomization_test, bucket_report, gold_entities, mention_type_report, metric_report, predict,
    ClassGrouping, GroupingMode, MetricKind, PredictionSet,
};
use entlink::kb::{load_kb, save_kb};
use entlink::models::{load_model, save_model, GateSimilarity, ModelBundle, ModelKind, VariantFlags};
use entlink::probing::{attribute_mrr, generate_descriptions, link_descriptions, relation_mrr, SpeakerMode};
use entlink::training::{history_jsonl, train, TrainConfig};

use crate::manifest::ManifestBuilder;
use crate::report;
use crate::{Analysis, Cli, Command, CorpusArgs, FlagArgs, Grouping, Probe};

pub fn run(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match &cli.command {
        Command::GenSynthetic { spec } => gen_synthetic(cli, spec.as_deref()),
        Command::Train { config, data, val } => cmd_train(cli, config, data, val.as_deref()),
        Command::Eval {
            data,
            model,
            predictions,
            train_corpus,
            grouping,
            chunk_len,
        } => cmd_eval(cli, data, model.as_deref(), predictions.as_deref(), train_corpus.as_deref(), *grouping, *chunk_len),
        Command::Compare {
            data,
            model_a,
            model_b,
            iterations,
            grouping,
            chunk_len,
        } => cmd_compare(cli, data, model_a, model_b, *iterations, *grouping, *chunk_len),
        Command::Analyze {
            which,
            data,
            model,
            scene,
            flags,
            chunk_len,
        } => cmd_analyze(cli, *which, data, model, *scene, flags, *chunk_len),
        Command::Probe {
            which,
            model,
            kb,
            catalog,
            max_properties,
        } => cmd_probe(cli, *which, model, kb, catalog, *max_properties),
        Command::Params {
            model,
            config,
            vocab,
            entities,
        } => cmd_params(cli, model.as_deref(), config.as_deref(), *vocab, *entities),
    }
}

fn write_out(cli: &Cli, m: &mut ManifestBuilder, name: &str, text: &str) -> Result<PathBuf> {
    let path = cli.out.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    m.output(&path);
    Ok(path)
}

fn catalog_path(data: &CorpusArgs) -> PathBuf {
    data.catalog.clone().unwrap_or_else(|| default_catalog_path(&data.corpus))
}

fn open_corpus(data: &CorpusArgs, m: &mut ManifestBuilder) -> Result<Corpus> {
    let cat = catalog_path(data);
    let corpus = open_corpus_at(&data.corpus, &cat)?;
    m.input(&data.corpus).input(&cat);
    Ok(corpus)
}

fn open_corpus_at(path: &Path, catalog: &Path) -> Result<Corpus> {
    if !path.exists() {
        bail!("corpus file {} does not exist", path.display());
    }
    if !catalog.exists() {
        bail!("catalog file {} does not exist (pass --catalog)", catalog.display());
    }
    Ok(load_corpus(path, catalog)?)
}

fn open_model(path: &Path, m: &mut ManifestBuilder) -> Result<ModelBundle> {
    if !path.exists() {
        bail!("model file {} does not exist", path.display());
    }
    m.input(path);
    Ok(load_model(path)?)
}

fn check_model_fits(model: &ModelBundle, corpus: &Corpus) -> Result<()> {
    if model.num_entities() != corpus.catalog.len() {
        bail!(
            "model has {} entities but the catalog lists {}; use the catalog the model was trained with",
            model.num_entities(),
            corpus.catalog.len()
        );
    }
    Ok(())
}

fn groupings(g: Option<Grouping>) -> Vec<GroupingMode> {
    match g {
        None => vec![GroupingMode::All, GroupingMode::Main],
        Some(Grouping::All) => vec![GroupingMode::All],
        Some(Grouping::Main) => vec![GroupingMode::Main],
    }
}

/// Evaluation classes: entities seen in training and test, and the mains.
fn model_groupings(model: &ModelBundle, test: &Corpus) -> (ClassGrouping, ClassGrouping) {
    let train_ents = trained_entities(&model.meta.train_freq);
    let all = ClassGrouping::all(&train_ents, &gold_entities(test));
    (all, ClassGrouping::main(&model.meta.mains))
}

fn trained_entities(freq: &FrequencyTable) -> std::collections::BTreeSet<usize> {
    freq.counts().iter().enumerate().filter(|(_, &c)| c > 0).map(|(e, _)| e).collect()
}

fn gen_synthetic(cli: &Cli, spec_path: Option<&Path>) -> Result<()> {
    let mut m = ManifestBuilder::new("gen-synthetic");
    let (spec, spec_seed) = match spec_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read spec file {}", p.display()))?;
            m.input(p).config_kv(&text);
            SyntheticSpec::from_kv_text(&text, p)?
        }
        None => (SyntheticSpec::default(), None),
    };
    let seed = cli.seed.or(spec_seed).unwrap_or(0);
    m.seed(seed);
    let data = generate_synthetic_corpus(&spec, seed)?;
    let corpus = cli.out.join("corpus.jsonl");
    let catalog = default_catalog_path(&corpus);
    save_corpus(&data.corpus, &corpus, &catalog)?;
    m.output(&corpus).output(&catalog);
    if spec.with_kb {
        let kb = cli.out.join("kb.tsv");
        save_kb(&data.kb, &kb)?;
        m.output(&kb);
    }
    m.write(&cli.out)?;
    println!(
        "{} scenes, {} mentions, {} entities",
        data.corpus.num_scenes(),
        data.corpus.num_mentions(),
        data.corpus.catalog.len()
    );
    Ok(())
}

fn cmd_train(cli: &Cli, config: &Path, data: &CorpusArgs, val: Option<&Path>) -> Result<()> {
    let mut m = ManifestBuilder::new("train");
    if !config.exists() {
        bail!("config file {} does not exist", config.display());
    }
    let mut cfg = TrainConfig::load(config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    m.input(config).config_kv(&cfg.to_kv()).seed(cfg.seed);
    let corpus = open_corpus(data, &mut m)?;
    let val_corpus = match val {
        Some(v) => {
            let c = open_corpus_at(v, &catalog_path(data))?;
            m.input(v);
            Some(c)
        }
        None => None,
    };
    let outcome = train(&corpus, val_corpus.as_ref(), &cfg)?;
    let model_path = cli.out.join("model.bin");
    save_model(&outcome.model, &model_path)?;
    m.output(&model_path);
    write_out(cli, &mut m, "history.jsonl", &history_jsonl(&outcome.history))?;
    write_out(cli, &mut m, "config.txt", &cfg.to_kv())?;
    m.write(&cli.out)?;
    let last = outcome.history.last().map(|h| h.train_loss).unwrap_or(f64::NAN);
    println!(
        "trained {} for {} epochs (best epoch {}), final loss {last:.6}",
        cfg.kind,
        outcome.history.len(),
        outcome.best_epoch
    );
    Ok(())
}

fn cmd_eval(
    cli: &Cli,
    data: &CorpusArgs,
    model: Option<&Path>,
    predictions: Option<&Path>,
    train_corpus: Option<&Path>,
    grouping: Option<Grouping>,
    chunk_len: usize,
) -> Result<()> {
    let mut m = ManifestBuilder::new("eval");
    m.config("chunk_len", chunk_len);
    let test = open_corpus(data, &mut m)?;
    let (preds, all, main, freq) = match (model, predictions) {
        (Some(mp), _) => {
            let model = open_model(mp, &mut m)?;
            check_model_fits(&model, &test)?;
            let preds = predict(&model, &test, chunk_len)?;
            let (all, main) = model_groupings(&model, &test);
            (preds, all, main, model.meta.train_freq.clone())
        }
        (None, Some(pp)) => {
            if !pp.exists() {
                bail!("predictions file {} does not exist", pp.display());
            }
            m.input(pp);
            let preds = PredictionSet::load(pp)?;
            let reference = match train_corpus {
                Some(t) => {
                    m.input(t);
                    open_corpus_at(t, &catalog_path(data))?
                }
                None => test.clone(),
            };
            let all = ClassGrouping::all(&gold_entities(&reference), &gold_entities(&test));
            let main = ClassGrouping::main(&test.catalog.mains());
            (preds, all, main, entity_frequencies(&reference))
        }
        (None, None) => bail!("pass --model or --predictions"),
    };
    let modes = groupings(grouping);
    let metrics = metric_report(&preds, &all, &main)?;
    let type_grouping = if modes[0] == GroupingMode::All { &all } else { &main };
    let mut text = report::metric_block(&metrics, &modes);
    text.push('\n');
    text.push_str(&report::bucket_block(&bucket_report(&preds, &freq)));
    text.push('\n');
    text.push_str(&report::type_block(&mention_type_report(&preds, type_grouping)?, modes[0]));
    write_out(cli, &mut m, "predictions.jsonl", &preds.to_jsonl())?;
    write_out(cli, &mut m, "eval.txt", &text)?;
    m.write(&cli.out)?;
    print!("{text}");
    Ok(())
}

fn cmd_compare(
    cli: &Cli,
    data: &CorpusArgs,
    model_a: &Path,
    model_b: &Path,
    iterations: usize,
    grouping: Option<Grouping>,
    chunk_len: usize,
) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let mut m = ManifestBuilder::new("compare");
    m.seed(seed).config("iterations", iterations).config("chunk_len", chunk_len);
    let test = open_corpus(data, &mut m)?;
    let a = open_model(model_a, &mut m)?;
    let b = open_model(model_b, &mut m)?;
    check_model_fits(&a, &test)?;
    check_model_fits(&b, &test)?;
    let pa = predict(&a, &test, chunk_len)?;
    let pb = predict(&b, &test, chunk_len)?;
    // Classes come from model A so both systems are scored identically.
    let (all, main) = model_groupings(&a, &test);
    let (ra, rb) = (metric_report(&pa, &all, &main)?, metric_report(&pb, &all, &main)?);
    let mut text = String::from("grouping\tmetric\tmodel_a\tmodel_b\tp_value\n");
    for mode in groupings(grouping) {
        let g = if mode == GroupingMode::All { &all } else { &main };
        for (kind, label, va, vb) in [
            (MetricKind::MacroF1, "macro_f1", pick(&ra, mode, true), pick(&rb, mode, true)),
            (MetricKind::Accuracy, "accuracy", pick(&ra, mode, false), pick(&rb, mode, false)),
        ] {
            let p = approx_randomization_test(&pa, &pb, kind, g, iterations, seed)?;
            text.push_str(&format!("{mode}\t{label}\t{va:.6}\t{vb:.6}\t{p:.6}\n"));
        }
    }
    write_out(cli, &mut m, "compare.txt", &text)?;
    m.write(&cli.out)?;
    print!("{text}");
    Ok(())
}

fn pick(r: &entlink::evaluation::MetricReport, mode: GroupingMode, f1: bool) -> f64 {
    match (mode, f1) {
        (GroupingMode::All, true) => r.f1_all,
        (GroupingMode::All, false) => r.acc_all,
        (GroupingMode::Main, true) => r.f1_main,
        (GroupingMode::Main, false) => r.acc_main,
    }
}

fn override_flags(model: &ModelBundle, f: &FlagArgs) -> Result<VariantFlags> {
    let mut flags = model.config.flags;
    if let Some(u) = f.updates {
        flags.updates_enabled = u;
    }
    if let Some(g) = &f.gate {
        flags.gate_similarity = g.parse::<GateSimilarity>()?;
    }
    if let Some(t) = f.tie {
        flags.tie_speaker_referent = t;
    }
    Ok(flags)
}

fn cmd_analyze(
    cli: &Cli,
    which: Analysis,
    data: &CorpusArgs,
    model_path: &Path,
    scene: usize,
    flag_args: &FlagArgs,
    chunk_len: usize,
) -> Result<()> {
    let name = match which {
        Analysis::Rsa => "rsa",
        Analysis::Pairs => "pairs",
        Analysis::Drift => "drift",
        Analysis::Ablation => "ablation",
        Analysis::Pca => "pca",
    };
    let mut m = ManifestBuilder::new(&format!("analyze-{name}"));
    m.config("chunk_len", chunk_len);
    let corpus = open_corpus(data, &mut m)?;
    let model = open_model(model_path, &mut m)?;
    check_model_fits(&model, &corpus)?;
    let text = match which {
        Analysis::Rsa => {
            let names = name_map(&corpus);
            let mut s = String::from("entities\trho\tn\tpairs\n");
            s.push_str(&report::rsa_line("all", &rsa_entities_vs_names(&model, &names, None)?));
            let mains = model.meta.mains.clone();
            match rsa_entities_vs_names(&model, &names, Some(&mains)) {
                Ok(r) => s.push_str(&report::rsa_line("main", &r)),
                Err(e) => s.push_str(&format!("main\tn/a ({e})\n")),
            }
            s
        }
        Analysis::Pairs => {
            let dump = capture_activations(&model, &corpus, chunk_len)?;
            write_out(cli, &mut m, "activations.jsonl", &dump.to_jsonl())?;
            let mut s = String::from("layer\tmean_pair_cosine\n");
            let layers: &[Layer] = if model.kind().has_query() { &[Layer::H, Layer::Q] } else { &[Layer::H] };
            for &l in layers {
                let label = if l == Layer::H { "h" } else { "q" };
                s.push_str(&format!("{label}\t{:.6}\n", mention_pair_similarity(&dump, l)?));
            }
            s
        }
        Analysis::Drift => {
            m.config("scene", scene);
            let scenes: Vec<_> = corpus.scenes().collect();
            let Some(sc) = scenes.get(scene) else {
                bail!("scene index {scene} out of range (corpus has {} scenes)", scenes.len());
            };
            report::drift_block(&value_drift(&model, sc, scene, chunk_len)?)
        }
        Analysis::Ablation => {
            let flags = override_flags(&model, flag_args)?;
            let (all, main) = model_groupings(&model, &corpus);
            report::ablation_block(&ablation_eval(&model, &corpus, flags, &all, &main, chunk_len)?)
        }
        Analysis::Pca => {
            let emb = model.entity_embeddings();
            let ids: Vec<usize> = (0..model.num_entities()).collect();
            let points: Vec<Vec<f64>> = ids.iter().map(|&e| emb.row(e).to_vec()).collect();
            report::pca_block(&pca_2d(&points)?, &ids, &corpus.catalog)
        }
    };
    write_out(cli, &mut m, &format!("analyze-{name}.txt"), &text)?;
    m.write(&cli.out)?;
    print!("{text}");
    Ok(())
}

fn cmd_probe(cli: &Cli, which: Probe, model_path: &Path, kb_path: &Path, catalog_path: &Path, max_props: usize) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let name = match which {
        Probe::Descriptions => "descriptions",
        Probe::Attributes => "attributes",
        Probe::Relations => "relations",
    };
    let mut m = ManifestBuilder::new(&format!("probe-{name}"));
    m.seed(seed).config("max_properties", max_props);
    let model = open_model(model_path, &mut m)?;
    for p in [kb_path, catalog_path] {
        if !p.exists() {
            bail!("file {} does not exist", p.display());
        }
    }
    let catalog = load_catalog(catalog_path)?;
    let kb = load_kb(kb_path, &catalog)?;
    m.input(kb_path).input(catalog_path);
    if model.num_entities() != catalog.len() {
        bail!(
            "model has {} entities but the catalog lists {}; use the catalog the model was trained with",
            model.num_entities(),
            catalog.len()
        );
    }
    let text = match which {
        Probe::Descriptions => {
            if model.kind() == ModelKind::BiLstm {
                bail!("description linking needs a query model (entlib or entnet), got bilstm");
            }
            let descs = generate_descriptions(&kb, &catalog, max_props)?;
            let mut listing = String::from("entity\tdescription\n");
            for d in &descs {
                listing.push_str(&format!("{}\t{}\n", d.target, d.text));
            }
            write_out(cli, &mut m, "descriptions.tsv", &listing)?;
            let mut modes = Vec::new();
            if model.meta.unknown.is_some() {
                modes.push(SpeakerMode::Unknown);
            }
            modes.extend(SpeakerMode::PROBE_MODES);
            let mut reports = Vec::new();
            for mode in modes {
                reports.push((mode.to_string(), link_descriptions(&model, &descs, mode, seed)?));
            }
            report::link_block(&reports, descs.len(), model.num_entities())
        }
        Probe::Attributes => {
            let mut rows = Vec::new();
            for attr in kb.attribute_names() {
                rows.push(attribute_mrr(&model, &kb, attr, seed)?);
            }
            report::attribute_block(&rows)
        }
        Probe::Relations => report::relation_block(&relation_mrr(model.entity_embeddings(), &kb)?),
    };
    write_out(cli, &mut m, &format!("probe-{name}.txt"), &text)?;
    m.write(&cli.out)?;
    print!("{text}");
    Ok(())
}

fn cmd_params(cli: &Cli, model: Option<&Path>, config: Option<&Path>, vocab: Option<usize>, entities: Option<usize>) -> Result<()> {
    let mut m = ManifestBuilder::new("params");
    let report = match (model, config) {
        (Some(p), _) => open_model(p, &mut m)?.config.param_counts(),
        (None, Some(c)) => {
            if !c.exists() {
                bail!("config file {} does not exist", c.display());
            }
            let cfg = TrainConfig::load(c)?;
            m.input(c).config_kv(&cfg.to_kv());
            let (v, n) = (vocab.unwrap_or(0), entities.unwrap_or(0));
            m.config("vocab", v).config("entities", n);
            let mc = cfg.model_config(v, n);
            mc.validate()?;
            mc.param_counts()
        }
        (None, None) => bail!("pass --model or --config"),
    };
    let text = report.to_string();
    write_out(cli, &mut m, "params.txt", &text)?;
    m.write(&cli.out)?;
    print!("{text}");
    Ok(())
}
