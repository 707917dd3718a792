//! `henet` command line: describe, analyze, train, eval, bench.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analyze::{
    analyze, compare_to_reference, render_comparison_kv, render_comparison_table, render_kv, render_table,
    CountingConvention, REFERENCE_SIZES,
};
use crate::arch::{build_model, ModelFamily, ModelGraph, NetworkConfig};
use crate::bench::{bench_forward, odd_even_experiment, resolution_chain};
use crate::data::{load_cifar10, load_cifar100, load_model, save_model, LabeledDataset};
use crate::error::{Error, Result};
use crate::train::{evaluate, train_loop, TrainConfig};

/// Exit status for command-line usage errors.
pub const USAGE_EXIT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "henet",
    version,
    about = "HENet CPU engine: build, analyze, train, evaluate and benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
    /// Seed for weight initialization, batch order, augmentation and bench inputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Kv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Henet,
    Shufflenet,
}

impl From<Family> for ModelFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Henet => ModelFamily::HeNet,
            Family::Shufflenet => ModelFamily::ShuffleNet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Cifar10,
    Cifar100,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Architecture file (`key = value` lines).
    #[arg(long, value_name = "FILE", conflicts_with = "repeat")]
    pub config: Option<PathBuf>,
    /// Default stage layout with this many stride-1 blocks per stage.
    #[arg(long, value_name = "N")]
    pub repeat: Option<usize>,
    #[arg(long, value_enum, default_value_t = Family::Henet)]
    pub model: Family,
    #[arg(long, value_name = "PIXELS")]
    pub input_size: Option<usize>,
    #[arg(long, value_name = "K")]
    pub num_classes: Option<usize>,
}

impl ModelArgs {
    pub fn network_config(&self) -> Result<NetworkConfig> {
        let mut cfg = match (&self.config, self.repeat) {
            (Some(path), _) => NetworkConfig::from_file(path)?,
            (None, Some(r)) => NetworkConfig::with_repeat(r),
            (None, None) => NetworkConfig::default(),
        };
        if let Some(s) = self.input_size {
            cfg.input_size = s;
        }
        if let Some(k) = self.num_classes {
            cfg.num_classes = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn build(&self, seed: u64) -> Result<ModelGraph<f32>> {
        build_model(self.model.into(), &self.network_config()?, seed)
    }
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Print the block-by-block shape trace.
    Describe(ModelArgs),
    /// Count parameters and multiply-accumulates, with the published sizes alongside.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        /// Leave batch-norm gamma/beta out of the parameter totals.
        #[arg(long)]
        exclude_bn: bool,
    },
    /// Train on CIFAR binary data.
    Train(TrainArgs),
    /// Accuracy of a saved model on a test split.
    Eval {
        #[arg(long, value_name = "FILE")]
        model_file: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Dataset::Cifar10)]
        dataset: Dataset,
        /// Evaluate only the first N test samples.
        #[arg(long, value_name = "N")]
        test_samples: Option<usize>,
    },
    /// Time single-threaded batch-1 forward passes.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Compare the odd input size against the next even size.
        #[arg(long)]
        odd_even: bool,
        /// Also write one CSV row per trial here.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Dataset::Cifar10)]
    pub dataset: Dataset,
    #[arg(long, default_value_t = 65_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Train on the first N training samples only.
    #[arg(long, value_name = "N")]
    pub train_samples: Option<usize>,
    /// Evaluate on the first N test samples only.
    #[arg(long, value_name = "N")]
    pub test_samples: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub log_interval: usize,
    /// Evaluate on the test split every N iterations (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub eval_interval: usize,
    #[arg(long)]
    pub exempt_bn_decay: bool,
    #[arg(long)]
    pub no_augment: bool,
    /// Write the trained model here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn load_dataset(kind: Dataset, dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    match kind {
        Dataset::Cifar10 => load_cifar10(dir),
        Dataset::Cifar100 => load_cifar100(dir),
    }
}

fn size(s: crate::Shape) -> String {
    format!("{}×{}×{}", s.h, s.w, s.c)
}

fn describe(g: &ModelGraph<f32>, format: Format) -> String {
    let mut out = String::new();
    let chain = resolution_chain(g).iter().map(|v| v.to_string()).collect::<Vec<_>>();
    let last = g
        .nodes()
        .iter()
        .rev()
        .find(|n| !matches!(n.layer, crate::arch::Layer::Linear(_)));
    let head = last.map(|n| n.output).unwrap_or(g.input_shape());
    match format {
        Format::Table => {
            let _ = writeln!(
                out,
                "{} repeat {} input {}",
                g.family().name(),
                g.config().repeat,
                size(g.input_shape())
            );
            let _ = writeln!(out, "{:<16} {:>10} {:>8}", "block", "output", "(m,n)");
            for b in g.blocks() {
                let groups = b.spec.as_ref().map_or(String::new(), |s| format!("({},{})", s.m, s.n));
                let _ = writeln!(
                    out,
                    "{:<16} {:>10} {:>8}",
                    b.name,
                    size(g.nodes()[b.output].output),
                    groups
                );
            }
            let _ = writeln!(out, "resolution {}", chain.join("→"));
            let _ = writeln!(out, "{} → FC {}", size(head), g.num_classes());
        }
        Format::Kv => {
            let _ = writeln!(out, "model={}", g.family().name());
            let _ = writeln!(out, "repeat={}", g.config().repeat);
            for b in g.blocks() {
                let s = g.nodes()[b.output].output;
                let _ = writeln!(out, "block.{}.output={}x{}x{}", b.name, s.h, s.w, s.c);
                if let Some(spec) = &b.spec {
                    let _ = writeln!(out, "block.{}.groups={},{}", b.name, spec.m, spec.n);
                }
            }
            let _ = writeln!(out, "resolution={}", chain.join(","));
            let _ = writeln!(out, "fc.in={}x{}x{}", head.h, head.w, head.c);
            let _ = writeln!(out, "fc.out={}", g.num_classes());
        }
    }
    out
}

fn run_analyze(cli: &Cli, model: &ModelArgs, exclude_bn: bool) -> Result<String> {
    let convention = CountingConvention {
        include_bn: !exclude_bn,
    };
    let cfg = model.network_config()?;
    let family: ModelFamily = model.model.into();
    let g = build_model::<f32>(family, &cfg, cli.seed)?;
    let report = analyze(&g, g.input_shape(), convention)?;
    let mut reports = Vec::new();
    for (repeat, _, _) in REFERENCE_SIZES {
        let c = NetworkConfig { repeat, ..cfg.clone() };
        let g = build_model::<f32>(family, &c, cli.seed)?;
        reports.push(analyze(&g, g.input_shape(), convention)?);
    }
    let rows = compare_to_reference(&reports);
    Ok(match cli.format {
        Format::Table => format!("{}\n{}", render_table(&report), render_comparison_table(&rows)),
        Format::Kv => format!("{}{}", render_kv(&report), render_comparison_kv(&rows)),
    })
}

fn run_train(cli: &Cli, args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (train, test) = load_dataset(args.dataset, &args.data)?;
    let train = match args.train_samples {
        Some(n) => train.take(n),
        None => train,
    };
    let test = match args.test_samples {
        Some(n) => test.take(n),
        None => test,
    };
    let mut model = args.model.clone();
    if model.num_classes.is_none() && model.config.is_none() {
        model.num_classes = Some(train.class_count());
    }
    let mut g = model.build(cli.seed)?;
    g.set_input_mean(train.channel_means())?;
    let cfg = TrainConfig {
        base_lr: args.lr,
        weight_decay: args.weight_decay,
        momentum: args.momentum,
        batch_size: args.batch_size,
        seed: cli.seed,
        exempt_bn_decay: args.exempt_bn_decay,
        augment: !args.no_augment,
        log_interval: args.log_interval,
        eval_interval: args.eval_interval,
        ..TrainConfig::scaled(args.max_iter)
    };
    let eval = (!test.is_empty()).then_some(&test);
    let mut write_err = None;
    let outcome = train_loop(g, &train, eval, &cfg, &mut |line| {
        if let Err(e) = writeln!(out, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io("<stdout>", e));
    }
    let mut summary = String::new();
    if let Some(loss) = outcome.final_loss {
        let _ = writeln!(summary, "final_loss={loss:.6}");
    }
    let _ = writeln!(summary, "train_acc={:.4}", evaluate(&outcome.graph, &train)?);
    if !test.is_empty() {
        let _ = writeln!(summary, "test_acc={:.4}", evaluate(&outcome.graph, &test)?);
    }
    if let Some(path) = &args.out {
        save_model(&outcome.graph, path)?;
        let _ = writeln!(summary, "model_file={}", path.display());
    }
    out.write_all(summary.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let text = match &cli.verb {
        Verb::Describe(model) => describe(&model.build(cli.seed)?, cli.format),
        Verb::Analyze { model, exclude_bn } => run_analyze(cli, model, *exclude_bn)?,
        Verb::Train(args) => return run_train(cli, args, out),
        Verb::Eval {
            model_file,
            data,
            dataset,
            test_samples,
        } => {
            let g = load_model(model_file)?;
            let (_, test) = load_dataset(*dataset, data)?;
            let test = test_samples.map_or(test.clone(), |n| test.take(n));
            let acc = evaluate(&g, &test)?;
            match cli.format {
                Format::Table => format!("accuracy {acc:.4} on {} samples\n", test.len()),
                Format::Kv => format!("samples={}\naccuracy={acc:.4}\n", test.len()),
            }
        }
        Verb::Bench {
            model,
            runs,
            trials,
            odd_even,
            csv,
        } => {
            let (text, csv_text) = if *odd_even {
                let r = odd_even_experiment(model.model.into(), &model.network_config()?, *runs, *trials, cli.seed)?;
                let text = match cli.format {
                    Format::Table => r.render_table(),
                    Format::Kv => r.render_kv(),
                };
                (text, r.render_csv())
            } else {
                let g = model.build(cli.seed)?;
                let r = bench_forward(&g, g.input_shape(), *runs, *trials, cli.seed)?;
                let text = match cli.format {
                    Format::Table => r.render_table(),
                    Format::Kv => r.render_kv(""),
                };
                (text, r.render_csv())
            };
            if let Some(path) = csv {
                std::fs::write(path, csv_text).map_err(|e| Error::io(path, e))?;
            }
            text
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// Parses `args` (program name first) and runs the command. Returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            // one line: the message plus its detail lines, without tips and usage
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("tip:"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(err, "{line}");
            return USAGE_EXIT;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            let _ = writeln!(err, "error[{}]: {e}", cat.name());
            cat.exit_code()
        }
    }
}

pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
