use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use forest_uq::dataset::{load_csv, load_features_csv, LabelColumn};
use forest_uq::evaluate::{instance_uncertainty, run_experiment, Criterion, ExperimentConfig, DEFAULT_STEP};
use forest_uq::likelihood::{build_uncertainty_table, DEFAULT_TABLE_MAX_TOTAL, DEFAULT_TOLERANCE};
use forest_uq::plot::arc_svg;
use forest_uq::{Forest, ForestConfig, RlCache};

/// Random forests with aleatoric and epistemic uncertainty estimates.
#[derive(Debug, Parser)]
#[command(name = "forest-uq", version)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FOREST_UQ_THREADS")]
    threads: Option<usize>,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "FOREST_UQ_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a forest and save it as JSON.
    Train(TrainArgs),
    /// Per-instance predictions and uncertainties for a query CSV.
    Uncertainty(UncertaintyArgs),
    /// Repeated-split accuracy-rejection experiment.
    Experiment(ExperimentArgs),
    /// Dump the per-leaf relative-likelihood table.
    RlTable(RlTableArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV file.
    #[arg(long)]
    data: PathBuf,

    /// Label column, by header name or zero-based index (default: last).
    #[arg(long)]
    label_col: Option<LabelColumn>,
}

#[derive(Debug, Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 50)]
    trees: usize,

    #[arg(long, default_value_t = 10)]
    max_depth: usize,

    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,

    /// Features examined per split (default: ceil(sqrt(D))).
    #[arg(long)]
    max_features: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ForestArgs {
    fn config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            max_features: self.max_features,
            seed: self.seed,
            ..ForestConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    forest: ForestArgs,

    /// Model file to write.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct UncertaintyArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,

    /// Query CSV with the model's features.
    #[arg(long)]
    data: PathBuf,

    /// Column to drop from the query file, e.g. a label column.
    #[arg(long)]
    label_col: Option<LabelColumn>,

    /// Absolute accuracy of the relative-likelihood solver.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,

    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    forest: ForestArgs,

    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,

    /// Split each class separately.
    #[arg(long)]
    stratify: bool,

    #[arg(long, default_value_t = 100)]
    reps: usize,

    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,

    /// Comma-separated criteria (default: all that apply).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<Criterion>,

    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,

    /// Curves CSV to write.
    #[arg(long, default_value = "curves.csv")]
    out: PathBuf,

    /// Also write one SVG per criterion next to the CSV.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Args)]
struct RlTableArgs {
    #[arg(long, default_value_t = DEFAULT_TABLE_MAX_TOTAL)]
    max_total: u64,

    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,

    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Output {
    out_dir: Option<PathBuf>,
}

impl Output {
    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn create(&self, path: &Path) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.resolve(path);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }

    /// Writes `body` to `path`, or to stdout when no path is given.
    fn emit(&self, path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        match path {
            Some(p) => {
                let (resolved, mut w) = self.create(p)?;
                body(&mut w)?;
                w.flush()
                    .with_context(|| format!("cannot write {}", resolved.display()))
            }
            None => {
                let mut out = io::stdout().lock();
                body(&mut out)?;
                Ok(out.flush()?)
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    let out = Output { out_dir: cli.out_dir };
    match cli.command {
        Command::Train(args) => train(&out, args),
        Command::Uncertainty(args) => uncertainty(&out, args),
        Command::Experiment(args) => experiment(&out, args),
        Command::RlTable(args) => rl_table(&out, args),
    }
}

fn load(args: &DataArgs) -> Result<forest_uq::Dataset> {
    let label = args.label_col.clone().unwrap_or_default();
    let ds = load_csv(&args.data, &label).with_context(|| format!("cannot load {}", args.data.display()))?;
    if ds.is_single_class() {
        eprintln!("warning: {} contains a single class", args.data.display());
    }
    Ok(ds)
}

fn train(out: &Output, args: TrainArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let forest = Forest::fit(&ds, &args.forest.config())?;
    let (path, mut w) = out.create(&args.out)?;
    forest.write_json(&mut w)?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;

    let depths: Vec<usize> = forest.trees().iter().map(|t| t.depth()).collect();
    let mean = depths.iter().sum::<usize>() as f64 / depths.len() as f64;
    println!(
        "trained on N={} D={} K={}: M={} trees, depth min={} mean={:.2} max={}",
        ds.len(),
        ds.n_features(),
        ds.class_count(),
        depths.len(),
        depths.iter().min().unwrap_or(&0),
        mean,
        depths.iter().max().unwrap_or(&0),
    );
    println!("model written to {}", path.display());
    Ok(())
}

fn uncertainty(out: &Output, args: UncertaintyArgs) -> Result<()> {
    let forest = Forest::load(&args.model).with_context(|| format!("cannot load model {}", args.model.display()))?;
    let queries = load_features_csv(&args.data, args.label_col.as_ref())
        .with_context(|| format!("cannot load {}", args.data.display()))?;
    if queries.n_features != forest.n_features() {
        bail!(
            "query file has {} features, model expects {}",
            queries.n_features,
            forest.n_features()
        );
    }
    let cache = RlCache::new(DEFAULT_TABLE_MAX_TOTAL, args.tol)?;
    let scored = queries
        .rows()
        .map(|x| instance_uncertainty(&forest, x, &cache))
        .collect::<forest_uq::Result<Vec<_>>>()?;

    out.emit(args.out.as_deref(), |w| {
        let mut csv = csv_writer(w);
        csv.write_record(["index", "prediction", "au_ent", "eu_ent", "tu_ent", "au_rl", "eu_rl"])?;
        for (i, u) in scored.iter().enumerate() {
            let (au_rl, eu_rl) = u.likelihood.map_or((String::new(), String::new()), |l| {
                (l.aleatoric.to_string(), l.epistemic.to_string())
            });
            csv.write_record([
                i.to_string(),
                forest.label_map()[u.predicted].clone(),
                u.entropy.aleatoric.to_string(),
                u.entropy.epistemic.to_string(),
                u.entropy.total.to_string(),
                au_rl,
                eu_rl,
            ])?;
        }
        csv.flush()?;
        Ok(())
    })
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(w)
}

fn experiment(out: &Output, args: ExperimentArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let config = ExperimentConfig {
        forest: ForestConfig {
            train_fraction: args.train_fraction,
            stratify: args.stratify,
            ..args.forest.config()
        },
        repetitions: args.reps,
        step: args.step,
        criteria: args.criteria,
        tolerance: args.tol,
    };
    let result = run_experiment(&ds, &config)?;

    let (path, mut w) = out.create(&args.out)?;
    result.write_csv(&mut w)?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    println!("curves written to {}", path.display());

    if args.plot {
        let baseline = result.curve(Criterion::Random);
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("curves");
        for curve in result.curves.iter().filter(|c| c.criterion != Criterion::Random) {
            let svg_path = path.with_file_name(format!("{stem}_{}.svg", curve.criterion));
            fs::write(&svg_path, arc_svg(curve, baseline))
                .with_context(|| format!("cannot write {}", svg_path.display()))?;
            println!("plot written to {}", svg_path.display());
        }
    }
    Ok(())
}

fn rl_table(out: &Output, args: RlTableArgs) -> Result<()> {
    let table = build_uncertainty_table(args.max_total, args.tol)?;
    out.emit(args.out.as_deref(), |w| {
        let mut csv = csv_writer(w);
        csv.write_record(["n", "p", "pi_pos", "pi_neg", "u_e", "u_a"])?;
        for (c, e) in &table {
            csv.write_record([
                c.positive.to_string(),
                c.negative.to_string(),
                e.support.positive.to_string(),
                e.support.negative.to_string(),
                e.uncertainty.epistemic.to_string(),
                e.uncertainty.aleatoric.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })
}
