use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use cfgrank_core::features::{self, parse_feature_table, write_feature_table};
use cfgrank_core::learn::{self, CvOutcome, LabeledDataset, TableRow};
use cfgrank_core::report::{self, ComparisonSummary, CorpusStats};
use cfgrank_core::{ingest, sbc, Cfg, Execution, FeatureVector};
use serde::Serialize;

use crate::error::{fail, learn as learn_failure, Classify, CmdResult, ExitKind};
use crate::{AnalyzeArgs, EvaluateArgs, FeaturesArgs, GenArgs, IngestArgs, InputFormat, TrainArgs};

const GRAPH_SUFFIX: &str = ".graph.json";

fn read(path: &Path) -> CmdResult<Vec<u8>> {
    fs::read(path).or_exit(ExitKind::Input, || {
        format!("cannot read {}", path.display())
    })
}

fn write(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).or_exit(ExitKind::Usage, || {
        format!("cannot write {}", path.display())
    })
}

fn make_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).or_exit(ExitKind::Usage, || {
        format!("cannot create {}", path.display())
    })
}

fn files_in(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let entries =
        fs::read_dir(dir).or_exit(ExitKind::Input, || format!("cannot list {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.or_exit(ExitKind::Input, || format!("cannot list {}", dir.display()))?;
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn expand(paths: &[PathBuf], format: InputFormat) -> CmdResult<Vec<PathBuf>> {
    let wanted = |p: &Path| {
        p.extension()
            .is_some_and(|e| format.extensions().iter().any(|w| e == *w))
    };
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(files_in(p)?.into_iter().filter(|f| wanted(f)));
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

// Sample ids become file names.
fn check_sample_id(id: &str) -> anyhow::Result<()> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\', '\0']) {
        return Err(anyhow!("sample id `{id}` cannot be used as a file name"));
    }
    Ok(())
}

fn convert(path: &Path, format: InputFormat, call_edges: bool) -> anyhow::Result<Cfg> {
    let bytes = fs::read(path)?;
    let g = match format {
        InputFormat::CfgJson => {
            let doc = ingest::parse_cfg_json(&bytes)?;
            ingest::document_to_cfg(&doc, call_edges).cfg
        }
        InputFormat::Edgelist => ingest::parse_edge_list(&bytes, &file_stem(path))?,
        InputFormat::Sbc => sbc::recover_cfg(&sbc::decode(&bytes)?, &file_stem(path)),
    };
    check_sample_id(g.sample_id())?;
    Ok(g)
}

pub fn ingest(args: &IngestArgs, exec: Execution) -> CmdResult {
    let inputs = expand(&args.paths, args.format)?;
    let converted = exec.map_slice(&inputs, |p| convert(p, args.format, !args.no_call_edges));
    let mut seen = BTreeSet::new();
    let mut graphs = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in inputs.iter().zip(converted) {
        match result {
            Ok(g) if !seen.insert(g.sample_id().to_string()) => {
                failures.push((path, anyhow!("duplicate sample id `{}`", g.sample_id())))
            }
            Ok(g) => graphs.push(g),
            Err(e) => failures.push((path, e)),
        }
    }
    if !args.keep_going && !failures.is_empty() {
        let (path, e) = failures.swap_remove(0);
        return Err(fail(
            ExitKind::Input,
            e.context(format!("{}", path.display())),
        ));
    }
    make_dir(&args.out)?;
    for g in &graphs {
        write(
            &args.out.join(format!("{}{GRAPH_SUFFIX}", g.sample_id())),
            &ingest::write_canonical(g),
        )?;
    }
    for (path, e) in &failures {
        eprintln!("failed: {}: {e:#}", path.display());
    }
    println!("ingest: {} parsed, {} failed", graphs.len(), failures.len());
    Ok(())
}

pub fn gen(args: &GenArgs, exec: Execution) -> CmdResult {
    let count = args.count as usize;
    let programs = sbc::generate_corpus_with(count, args.profile, args.seed, exec);
    make_dir(&args.out)?;
    let mut manifest = String::from("sample_id,seed\n");
    for (i, program) in programs.iter().enumerate() {
        let id = format!("{}-{i:05}", args.profile);
        write(&args.out.join(format!("{id}.sbc")), &program.encode())?;
        manifest.push_str(&format!("{id},{}\n", sbc::program_seed(args.seed, i)));
    }
    write(&args.out.join("manifest.csv"), manifest.as_bytes())?;
    println!("gen: wrote {count} {} programs", args.profile);
    Ok(())
}

/// Every canonical graph in `dir`, sorted by sample id.
fn load_graphs(dir: &Path, exec: Execution) -> CmdResult<Vec<Cfg>> {
    let paths: Vec<PathBuf> = files_in(dir)?
        .into_iter()
        .filter(|p| p.to_string_lossy().ends_with(GRAPH_SUFFIX))
        .collect();
    if paths.is_empty() {
        return Err(fail(
            ExitKind::Input,
            anyhow!("no {GRAPH_SUFFIX} files in {}", dir.display()),
        ));
    }
    let parsed = exec.map_slice(&paths, |p| -> CmdResult<Cfg> {
        ingest::parse_canonical(&read(p)?).or_exit(ExitKind::Input, || format!("{}", p.display()))
    });
    let mut graphs = parsed.into_iter().collect::<CmdResult<Vec<_>>>()?;
    graphs.sort_by(|a, b| a.sample_id().cmp(b.sample_id()));
    for pair in graphs.windows(2) {
        if pair[0].sample_id() == pair[1].sample_id() {
            return Err(fail(
                ExitKind::Input,
                anyhow!(
                    "duplicate sample id `{}` in {}",
                    pair[0].sample_id(),
                    dir.display()
                ),
            ));
        }
    }
    Ok(graphs)
}

pub fn features(args: &FeaturesArgs, exec: Execution) -> CmdResult {
    let graphs = load_graphs(&args.dir, exec)?;
    let rows: Vec<FeatureVector> = features::extract_batch(&graphs, exec)
        .into_iter()
        .map(|f| f.with_label(args.label))
        .collect();
    write(&args.out, &write_feature_table(&rows))?;
    println!("features: {} rows", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct AnalysisReport {
    corpora: Vec<CorpusStats>,
    comparisons: Vec<ComparisonSummary>,
}

pub fn analyze(args: &AnalyzeArgs, exec: Execution) -> CmdResult {
    let names: Vec<String> = if args.names.is_empty() {
        args.dirs.iter().map(|d| file_stem(d)).collect()
    } else if args.names.len() == args.dirs.len() {
        args.names.clone()
    } else {
        return Err(fail(
            ExitKind::Usage,
            anyhow!(
                "{} names given for {} directories",
                args.names.len(),
                args.dirs.len()
            ),
        ));
    };
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(fail(
            ExitKind::Usage,
            anyhow!("corpus names must be distinct"),
        ));
    }
    let mut corpora = Vec::new();
    for (dir, name) in args.dirs.iter().zip(&names) {
        let graphs = load_graphs(dir, exec)?;
        corpora.push(
            report::corpus_stats_with(&graphs, name, exec)
                .or_exit(ExitKind::Input, || format!("corpus {name}"))?,
        );
    }
    let mut comparisons = Vec::new();
    for i in 0..corpora.len() {
        for j in i + 1..corpora.len() {
            let c = report::compare(&corpora[i], &corpora[j], &args.metric, args.threshold)
                .or_exit(ExitKind::Usage, || "compare".into())?;
            println!(
                "{} vs {}: {} < {}: {:.1}% vs {:.1}% below, rule accuracy {:.1}%",
                c.first,
                c.second,
                c.metric,
                c.threshold,
                100.0 * c.first_below,
                100.0 * c.second_below,
                100.0 * c.rule_accuracy
            );
            comparisons.push(c);
        }
    }
    for c in &corpora {
        println!("{}: {} samples", c.corpus_name, c.samples.len());
    }
    if let Some(path) = &args.cdf_csv {
        let mut csv = String::new();
        for (i, c) in corpora.iter().enumerate() {
            let body = c.cdf_csv();
            csv.push_str(if i == 0 {
                &body
            } else {
                body.split_once('\n').map_or("", |x| x.1)
            });
        }
        write(path, csv.as_bytes())?;
    }
    let report = AnalysisReport {
        corpora,
        comparisons,
    };
    let mut json = serde_json::to_vec_pretty(&report).expect("report is serializable");
    json.push(b'\n');
    write(&args.out, &json)
}

fn load_dataset(tables: &[PathBuf]) -> CmdResult<LabeledDataset> {
    let mut rows = Vec::new();
    for path in tables {
        rows.extend(
            parse_feature_table(&read(path)?)
                .or_exit(ExitKind::Input, || format!("{}", path.display()))?,
        );
    }
    LabeledDataset::from_vectors(&rows).map_err(learn_failure)
}

pub fn train(args: &TrainArgs, exec: Execution) -> CmdResult {
    let data = load_dataset(&args.tables)?;
    let hyper = args.hyper.resolve();
    let model =
        learn::train_with(args.kind, &data, &hyper, args.seed, exec).map_err(learn_failure)?;
    write(&args.out, &learn::model_to_json(&model))?;
    let (mal, ben) = data.class_counts();
    println!(
        "train: {} on {mal} malicious + {ben} benign samples",
        args.kind.name()
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation<'a> {
    malicious: usize,
    benign: usize,
    hyper: learn::HyperParams,
    results: &'a [CvOutcome],
}

pub fn evaluate(args: &EvaluateArgs, exec: Execution) -> CmdResult {
    let data = load_dataset(&args.tables)?;
    let hyper = args.hyper.resolve();
    hyper.validate().map_err(learn_failure)?;
    let mut results = Vec::new();
    for &kind in &args.kind {
        results.push(
            learn::cross_validate_with(kind, &data, &hyper, args.k as usize, args.seed, exec)
                .map_err(learn_failure)?,
        );
    }
    let rows: Vec<TableRow> = results
        .iter()
        .map(|r| TableRow {
            method: r.kind.table_name(),
            matrix: &r.averaged,
            report: &r.report,
        })
        .collect();
    print!("{}", learn::render_table(&rows));
    let (malicious, benign) = data.class_counts();
    let out = Evaluation {
        malicious,
        benign,
        hyper,
        results: &results,
    };
    let mut json = serde_json::to_vec_pretty(&out).expect("results are serializable");
    json.push(b'\n');
    write(&args.out, &json)
}
