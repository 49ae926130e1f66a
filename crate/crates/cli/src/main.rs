use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use canids_core::bench::{allocation_bench, bench_to_csv, bench_to_text, DEFAULT_FIXED_WIDTHS};
use canids_core::canio::FEATURE_DIM;
use canids_core::dataset::{
    gen_synthetic, load_many, split, subsample_per_class, write_labeled, Dataset, Schema,
    SyntheticSpec,
};
use canids_core::metrics::{confusion_to_text, MetricsTable};
use canids_core::modelfile::{load_model, save_model};
use canids_core::nncore::allocate_layers;
use canids_core::rtdetect::{latency_report, open_model, run_stream};
use canids_core::trainer::{evaluate, train, TrainConfig};
use canids_core::tuner::{cross_validate, random_search, SearchSpace};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "canids",
    version,
    about = "CAN bus intrusion detection with a compact MLP"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Input file; repeat to concatenate several files of one schema.
    #[arg(long, global = true)]
    data: Vec<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = SchemaArg::Synthetic)]
    schema: SchemaArg,
    /// Number of hidden layers.
    #[arg(long, global = true, default_value_t = 3)]
    hidden: usize,
    #[arg(long, global = true, default_value_t = 100)]
    epochs: usize,
    #[arg(long, global = true, default_value_t = 300)]
    num_batches: usize,
    #[arg(long, global = true, default_value_t = 0.001)]
    lr: f64,
    /// L2 penalty coefficient on weights.
    #[arg(long, global = true, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true, default_value_t = 20)]
    trials: usize,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaArg {
    Ciciov2024,
    Carhacking,
    Synthetic,
}

impl From<SchemaArg> for Schema {
    fn from(s: SchemaArg) -> Self {
        match s {
            SchemaArg::Ciciov2024 => Schema::CicIoV2024,
            SchemaArg::Carhacking => Schema::CarHacking(None),
            SchemaArg::Synthetic => Schema::Labeled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFormat {
    /// Labeled CSV readable with `--schema synthetic`.
    Csv,
    /// candump-style log lines for `detect`.
    Log,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; with --folds, run k-fold cross-validation instead.
    Train {
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Score a saved model on labeled data.
    Eval,
    /// Random hyperparameter search with k-fold scoring (10 folds by default).
    Tune {
        /// Fraction of each class kept for the search.
        #[arg(long, default_value_t = 0.5)]
        subsample: f64,
    },
    /// Classify a frame log from --data or standard input.
    Detect,
    /// Generate synthetic traffic from a spec file (--data) or the built-in five-class spec.
    Gen {
        #[arg(long, value_enum, default_value_t = GenFormat::Csv)]
        format: GenFormat,
        /// Samples per class for the built-in spec.
        #[arg(long, default_value_t = 1000)]
        per_class: usize,
    },
    /// Compare the class-proportional layout with fixed-width hidden layers.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FIXED_WIDTHS)]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
}

impl Common {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            num_batches: self.num_batches,
            learning_rate: self.lr,
            l2_lambda: self.l2,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    fn dataset(&self) -> Result<Dataset, Box<dyn Error>> {
        if self.data.is_empty() {
            return Err("--data is required".into());
        }
        if let Some(missing) = self.data.iter().find(|p| !p.exists()) {
            return Err(format!("data file not found: {}", missing.display()).into());
        }
        Ok(load_many(&self.data, self.schema.into())?)
    }

    fn model_path(&self) -> Result<&Path, Box<dyn Error>> {
        self.model
            .as_deref()
            .ok_or_else(|| "--model is required".into())
    }
}

fn check_fraction(name: &str, f: f64) -> CliResult {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(format!("{name} must lie in (0, 1], got {f}").into())
    }
}

fn write_out(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()).into())
}

fn cmd_train(c: &Common, train_fraction: f64) -> CliResult {
    let ds = c.dataset()?;
    let arch = allocate_layers(c.hidden, ds.num_classes(), FEATURE_DIM)?;
    let cfg = c.train_config();
    cfg.validate()?;

    if let Some(k) = c.folds {
        let cv = cross_validate(&arch, &ds, &cfg, k, c.seed)?;
        print!("{}", cv.report.to_text());
        return Ok(());
    }

    check_fraction("--train-fraction", train_fraction)?;
    let (train_set, test_set) = split(&ds, train_fraction, c.seed);
    let (model, report) = train(&arch, &train_set, &cfg)?;
    print!("{}", report.to_table());
    println!("train_seconds\t{:.3}", report.train_seconds);
    if !test_set.is_empty() {
        let eval = evaluate(&model, &test_set)?;
        println!();
        print!(
            "{}",
            MetricsTable::new(&eval.confusion, model.class_names()).to_text()
        );
        println!();
        print!(
            "{}",
            confusion_to_text(&eval.confusion, model.class_names())
        );
    }
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("model.txt"));
    save_model(&model, &out)?;
    eprintln!("model written to {}", out.display());
    Ok(())
}

fn cmd_eval(c: &Common) -> CliResult {
    let model = load_model(c.model_path()?)?;
    let ds = c.dataset()?;
    let eval = evaluate(&model, &ds)?;
    let table = MetricsTable::new(&eval.confusion, model.class_names());
    print!("{}", table.to_text());
    println!();
    print!(
        "{}",
        confusion_to_text(&eval.confusion, model.class_names())
    );
    if let Some(out) = &c.out {
        write_out(out, &table.to_csv())?;
    }
    Ok(())
}

fn cmd_tune(c: &Common, subsample: f64) -> CliResult {
    check_fraction("--subsample", subsample)?;
    let ds = subsample_per_class(&c.dataset()?, subsample, c.seed);
    let outcome = random_search(
        &SearchSpace::default(),
        &ds,
        c.trials,
        c.folds.unwrap_or(10),
        c.seed,
        &c.train_config(),
    )?;
    let log = outcome.to_log();
    print!("{log}");
    if let Some(out) = &c.out {
        write_out(out, &log)?;
    }
    Ok(())
}

fn cmd_detect(c: &Common) -> CliResult {
    let model = open_model(c.model_path()?)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut write_err = None;
    let mut sink = |e: canids_core::rtdetect::StreamEvent| {
        if write_err.is_none() {
            if let Err(err) = writeln!(out, "{}", e.to_line()) {
                write_err = Some(err);
            }
        }
    };
    let stats = match c.data.as_slice() {
        [] => run_stream(&model, io::stdin().lock(), &mut sink)?,
        [path] => run_stream(&model, BufReader::new(File::open(path)?), &mut sink)?,
        _ => return Err("detect reads a single --data file".into()),
    };
    if let Some(err) = write_err {
        return Err(err.into());
    }
    out.flush()?;
    eprint!("{}", latency_report(&stats.classify));
    let params = model.param_count();
    eprintln!(
        "model parameters: {params} ({} bytes as f64)",
        params * std::mem::size_of::<f64>()
    );
    if stats.parse.count > 0 {
        eprintln!(
            "parse latency (us): median {:.3}, max {:.3}",
            stats.parse.median, stats.parse.max
        );
    }
    if stats.warnings > 0 {
        eprintln!("{} line(s) skipped", stats.warnings);
    }
    Ok(())
}

fn cmd_gen(c: &Common, format: GenFormat, per_class: usize) -> CliResult {
    let spec = match c.data.as_slice() {
        [] => SyntheticSpec::car_hacking_like(per_class),
        [path] => fs::read_to_string(path)?.parse::<SyntheticSpec>()?,
        _ => return Err("gen reads a single spec file".into()),
    };
    let mut sink: Box<dyn Write> = match &c.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match format {
        GenFormat::Csv => write_labeled(&gen_synthetic(&spec, c.seed)?, &mut sink)?,
        GenFormat::Log => {
            for (frame, _) in spec.frames(c.seed)? {
                writeln!(sink, "({:.6}) can0 {frame}", frame.timestamp)?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

fn cmd_bench(c: &Common, widths: &[usize], train_fraction: f64) -> CliResult {
    check_fraction("--train-fraction", train_fraction)?;
    let ds = c.dataset()?;
    let (train_set, test_set) = split(&ds, train_fraction, c.seed);
    if test_set.is_empty() {
        return Err("bench needs a nonempty test split".into());
    }
    let rows = allocation_bench(&train_set, &test_set, c.hidden, widths, &c.train_config())?;
    print!("{}", bench_to_text(&rows));
    if let Some(out) = &c.out {
        write_out(out, &bench_to_csv(&rows))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let c = &cli.common;
    match cli.command {
        Command::Train { train_fraction } => cmd_train(c, train_fraction),
        Command::Eval => cmd_eval(c),
        Command::Tune { subsample } => cmd_tune(c, subsample),
        Command::Detect => cmd_detect(c),
        Command::Gen { format, per_class } => cmd_gen(c, format, per_class),
        Command::Bench {
            widths,
            train_fraction,
        } => cmd_bench(c, &widths, train_fraction),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
