mod cmd;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use cfgrank_core::learn::{ForestParams, HyperParams, LogRegParams, ModelKind, SvmParams};
use cfgrank_core::sbc::Profile;
use cfgrank_core::{Execution, Label};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{fail, ExitKind};

#[derive(Parser, Debug)]
#[command(
    name = "cfgrank",
    version,
    about = "Control-flow graph features and malware classifiers"
)]
struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, short = 'j', global = true, env = "CFGRANK_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert CFG descriptions into canonical graph files.
    Ingest(IngestArgs),
    /// Write a seeded corpus of synthetic bytecode programs.
    Gen(GenArgs),
    /// Extract the feature table from a directory of canonical graphs.
    Features(FeaturesArgs),
    /// Corpus statistics, CDFs and pairwise threshold comparisons.
    Analyze(AnalyzeArgs),
    /// Fit one classifier on labeled feature tables.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation of one or more classifiers.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    CfgJson,
    Edgelist,
    Sbc,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Input files. A directory contributes its files with the format's
    /// extension (`.json`, `.edges` or `.txt`, `.sbc`) in name order.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long, short, value_enum)]
    pub format: InputFormat,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Convert what parses and report the rest instead of failing.
    #[arg(long)]
    pub keep_going: bool,
    /// Leave call edges out of cfg-json graphs.
    #[arg(long)]
    pub no_call_edges: bool,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, short, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
    pub count: u64,
    #[arg(long, short, value_parser = parse_profile)]
    pub profile: Profile,
    #[arg(long, short, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Directory of `*.graph.json` files.
    pub dir: PathBuf,
    #[arg(long, short, value_parser = parse_label)]
    pub label: Option<Label>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// One directory of canonical graphs per corpus.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Corpus names, one per directory; defaults to directory names.
    #[arg(long = "name", short)]
    pub names: Vec<String>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value = "avg_closeness", value_parser = clap::builder::PossibleValuesParser::new(cfgrank_core::report::METRICS))]
    pub metric: String,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Also write every CDF point as CSV.
    #[arg(long)]
    pub cdf_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct HyperArgs {
    /// Logistic regression step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Logistic regression L2 penalty.
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// SVM regularization strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub min_steps: Option<usize>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
}

impl InputFormat {
    pub fn extensions(self) -> &'static [&'static str] {
        match self {
            InputFormat::CfgJson => &["json"],
            InputFormat::Edgelist => &["edges", "txt"],
            InputFormat::Sbc => &["sbc"],
        }
    }
}

impl HyperArgs {
    pub fn resolve(&self) -> HyperParams {
        let (lr, svm, rf) = (
            LogRegParams::default(),
            SvmParams::default(),
            ForestParams::default(),
        );
        HyperParams {
            logreg: LogRegParams {
                learning_rate: self.learning_rate.unwrap_or(lr.learning_rate),
                l2: self.l2.unwrap_or(lr.l2),
                epochs: self.epochs.unwrap_or(lr.epochs),
            },
            svm: SvmParams {
                lambda: self.lambda.unwrap_or(svm.lambda),
                min_steps: self.min_steps.unwrap_or(svm.min_steps),
                passes: self.passes.unwrap_or(svm.passes),
            },
            forest: ForestParams {
                trees: self.trees.unwrap_or(rf.trees),
                min_leaf: self.min_leaf.unwrap_or(rf.min_leaf),
                max_depth: self.max_depth.or(rf.max_depth),
                max_features: self.max_features.or(rf.max_features),
            },
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled feature tables, concatenated in the order given.
    #[arg(required = true)]
    pub tables: Vec<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long, short, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(required = true)]
    pub tables: Vec<PathBuf>,
    /// Classifiers to evaluate, in table order.
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "logreg,svm,rf")]
    pub kind: Vec<ModelKind>,
    #[arg(long, short, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: u64,
    #[arg(long, short, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse()
}

fn parse_label(s: &str) -> Result<Label, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn configure(jobs: Option<usize>) -> Result<Execution, error::Failure> {
    match jobs {
        Some(0) => Err(fail(
            ExitKind::Usage,
            anyhow::anyhow!("--jobs must be at least 1"),
        )),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| fail(ExitKind::Usage, e))?;
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::default()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                ExitKind::Usage as u8
            } else {
                0
            });
        }
    };
    let outcome = configure(cli.jobs).and_then(|exec| match &cli.command {
        Command::Ingest(a) => cmd::ingest(a, exec),
        Command::Gen(a) => cmd::gen(a, exec),
        Command::Features(a) => cmd::features(a, exec),
        Command::Analyze(a) => cmd::analyze(a, exec),
        Command::Train(a) => cmd::train(a, exec),
        Command::Evaluate(a) => cmd::evaluate(a, exec),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.kind as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_replace_only_given_fields() {
        let cli = Cli::try_parse_from([
            "cfgrank", "train", "t.csv", "--kind", "rf", "-o", "m", "--trees", "7",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!()
        };
        let h = args.hyper.resolve();
        assert_eq!(h.forest.trees, 7);
        assert_eq!(h.logreg, LogRegParams::default());
        assert_eq!(h.svm, SvmParams::default());
    }
}
