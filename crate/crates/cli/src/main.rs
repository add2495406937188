//! `surfclass`: texture corpus synthesis, feature extraction, k-NN
//! classification, repeated-split evaluation and Gabor kernel dumps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surfclass_core::classify::{classify_batch, write_predictions, KnnModel};
use surfclass_core::eval::{
    evaluate, load_manifest, write_report, EvalConfig, KnnClassifier, TrainSize,
};
use surfclass_core::features::{
    read_features, write_features, FeatureConfig, GaborPooling, LabeledFeature, Method,
    MinMaxScaler,
};
use surfclass_core::filters::{make_gabor_kernel, BankConfig, GaborParams, WindowSpec};
use surfclass_core::synth::{gen_corpus, load_recipes, SynthConfig};
use surfclass_core::{eval::extract_manifest, Error};

#[derive(Parser)]
#[command(
    name = "surfclass",
    version,
    about = "Surface-patch texture classification"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus plus manifest.csv.
    Synth(SynthArgs),
    /// Extract features for every manifest entry.
    Extract(ExtractArgs),
    /// Label test features by k-NN against training features.
    Classify(ClassifyArgs),
    /// Repeated random-split evaluation over several training sizes.
    Evaluate(EvaluateArgs),
    /// Write one Gabor kernel as text or PGM.
    Kernel(KernelArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recipe file, one class per line; overrides --preset.
    #[arg(long)]
    recipes: Option<PathBuf>,
    /// Built-in class set: `noise` or `gratings`.
    #[arg(long, default_value = "noise")]
    preset: String,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Gabor bank file (`key = value` lines).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Gabor pooling: `energy` (mean |r| and std per kernel) or `raw`.
    #[arg(long, default_value = "energy", value_parser = parse_pooling)]
    pooling: GaborPooling,
    /// Std-dev window sides.
    #[arg(long, value_delimiter = ',', default_value = "3,5,7", value_parser = parse_window)]
    windows: Vec<WindowSpec>,
    /// Std-dev pooling grid; equal to the patch side keeps the full map.
    #[arg(long, default_value_t = 8)]
    grid: usize,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Min-max scale features, fitted on the training file.
    #[arg(long)]
    minmax: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Per-class counts (integers) or fractions of the corpus (e.g. 0.7).
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40,60")]
    train_sizes: Vec<TrainSize>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Min-max scale features, fitted on each trial's training side.
    #[arg(long)]
    minmax: bool,
    /// Draw splits from the pooled corpus instead of per class.
    #[arg(long)]
    unstratified: bool,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct KernelArgs {
    /// Orientation in radians, in [0, pi).
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Cycles per pixel.
    #[arg(long, default_value_t = 0.125, value_parser = parse_positive)]
    freq: f64,
    /// Defaults to 0.56 / freq.
    #[arg(long, value_parser = parse_positive)]
    sigma_x: Option<f64>,
    /// Defaults to sigma-x.
    #[arg(long, value_parser = parse_positive)]
    sigma_y: Option<f64>,
    /// Defaults to ceil(3 max(sigma-x, sigma-y)).
    #[arg(long)]
    half_size: Option<usize>,
    /// `.pgm` writes a grayscale image, anything else a text dump.
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pooling(s: &str) -> Result<GaborPooling, String> {
    match s {
        "energy" => Ok(GaborPooling::Energy),
        "raw" => Ok(GaborPooling::Raw),
        _ => Err(format!("unknown pooling {s:?}, expected energy or raw")),
    }
}

fn parse_window(s: &str) -> Result<WindowSpec, String> {
    let side: usize = s
        .trim()
        .parse()
        .map_err(|_| format!("bad window side {s:?}"))?;
    WindowSpec::new(side).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(_) => Err(format!("not a number: {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn echo(sub: &str, pairs: &[(&str, String)]) {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("surfclass {sub}: {}", body.join(" "));
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl FeatureArgs {
    fn config(&self) -> Result<FeatureConfig, Failure> {
        Ok(match self.method {
            Method::Gabor => FeatureConfig::Gabor {
                bank: match &self.bank {
                    Some(path) => BankConfig::load(path)?,
                    None => BankConfig::default(),
                },
                pooling: self.pooling,
            },
            Method::Stddev => {
                if self.grid == 0 {
                    return Err(Failure::Usage("--grid must be at least 1".into()));
                }
                FeatureConfig::Stddev {
                    windows: self.windows.clone(),
                    grid: self.grid,
                }
            }
        })
    }
}

fn cmd_synth(a: SynthArgs) -> Outcome {
    let mut cfg = match a.preset.as_str() {
        "noise" => SynthConfig::default_noise(a.seed),
        "gratings" => SynthConfig::gratings(a.seed),
        other => {
            return Err(Failure::Usage(format!(
                "unknown preset {other:?}, expected noise or gratings"
            )))
        }
    };
    if let Some(path) = &a.recipes {
        cfg.recipes = load_recipes(path)?;
    }
    cfg.per_class = a.per_class;
    cfg.patch_side = a.side;
    let labels: Vec<&str> = cfg.recipes.iter().map(|r| r.label.as_str()).collect();
    echo(
        "synth",
        &[
            ("out", a.out.display().to_string()),
            ("per_class", a.per_class.to_string()),
            ("side", a.side.to_string()),
            ("seed", a.seed.to_string()),
            (
                "recipes",
                a.recipes
                    .as_ref()
                    .map_or(a.preset.clone(), |p| p.display().to_string()),
            ),
            ("classes", join(&labels)),
            ("threads", rayon::current_num_threads().to_string()),
        ],
    );
    let manifest = gen_corpus(&cfg, &a.out)?;
    eprintln!(
        "wrote {} patches and {}",
        manifest.entries.len(),
        a.out.join("manifest.csv").display()
    );
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Outcome {
    let cfg = a.features.config()?;
    echo(
        "extract",
        &[
            ("manifest", a.manifest.display().to_string()),
            ("out", a.out.display().to_string()),
            ("features", cfg.describe()),
            ("threads", rayon::current_num_threads().to_string()),
        ],
    );
    let manifest = load_manifest(&a.manifest)?;
    let set = extract_manifest(&manifest, &cfg)?;
    write_features(&a.out, &set)?;
    eprintln!(
        "wrote {} rows of dim {} to {}",
        set.samples.len(),
        set.dim,
        a.out.display()
    );
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> Outcome {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    echo(
        "classify",
        &[
            ("train", a.train.display().to_string()),
            ("test", a.test.display().to_string()),
            ("k", a.k.to_string()),
            ("minmax", a.minmax.to_string()),
            ("out", a.out.display().to_string()),
            ("threads", rayon::current_num_threads().to_string()),
        ],
    );
    let train = read_features(&a.train)?;
    let test = read_features(&a.test)?;
    if train.method != test.method {
        return Err(Error::MethodMismatch {
            left: train.method.to_string(),
            right: test.method.to_string(),
        }
        .into());
    }
    if train.dim != test.dim {
        return Err(Error::DimMismatch {
            left: train.dim,
            right: test.dim,
        }
        .into());
    }
    let (samples, queries) = if a.minmax {
        let scaler = MinMaxScaler::fit(train.samples.iter().map(|s| &s.feature))?;
        let scaled = train
            .samples
            .iter()
            .map(|s| {
                Ok(LabeledFeature::new(
                    scaler.transform(&s.feature)?,
                    &s.label,
                    &s.source,
                ))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let queries = test
            .samples
            .iter()
            .map(|s| scaler.transform(&s.feature))
            .collect::<Result<Vec<_>, Error>>()?;
        (scaled, queries)
    } else {
        (
            train.samples,
            test.samples.iter().map(|s| s.feature.clone()).collect(),
        )
    };
    let model = KnnModel::new(samples, a.k)?;
    let preds = classify_batch(&model, &queries)?;
    write_predictions(&a.out, &test.samples, &preds)?;
    let correct = preds
        .iter()
        .zip(&test.samples)
        .filter(|(p, s)| p.label == s.label)
        .count();
    eprintln!(
        "classified {} samples, {} match their file label ({:.4})",
        preds.len(),
        correct,
        if preds.is_empty() {
            0.0
        } else {
            correct as f64 / preds.len() as f64
        }
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Outcome {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let features = a.features.config()?;
    let classifier = KnnClassifier {
        k: a.k,
        minmax: a.minmax,
    };
    let cfg = EvalConfig {
        sizes: a.train_sizes.clone(),
        trials: a.trials,
        seed: a.seed,
        stratified: !a.unstratified,
    };
    echo(
        "evaluate",
        &[
            ("manifest", a.manifest.display().to_string()),
            ("out", a.out.display().to_string()),
            ("features", features.describe()),
            ("k", a.k.to_string()),
            ("minmax", a.minmax.to_string()),
            ("eval", cfg.describe()),
            ("threads", rayon::current_num_threads().to_string()),
        ],
    );
    let manifest = load_manifest(&a.manifest)?;
    let report = evaluate(&manifest, &features, &classifier, &cfg)?;
    write_report(&report, &a.out)?;
    for p in &report.points {
        eprintln!("train_size={} mean={:.4} std={:.4}", p.size, p.mean, p.std);
    }
    Ok(())
}

fn cmd_kernel(a: KernelArgs) -> Outcome {
    let sigma_x = a.sigma_x.unwrap_or(BankConfig::default().sigma_for(a.freq));
    let sigma_y = a.sigma_y.unwrap_or(sigma_x);
    let half = a
        .half_size
        .unwrap_or_else(|| BankConfig::default().half_size_for(sigma_x.max(sigma_y)));
    echo(
        "kernel",
        &[
            ("theta", format!("{:?}", a.theta)),
            ("freq", format!("{:?}", a.freq)),
            ("sigma_x", format!("{sigma_x:?}")),
            ("sigma_y", format!("{sigma_y:?}")),
            ("half_size", half.to_string()),
            ("out", a.out.display().to_string()),
        ],
    );
    let params = GaborParams::new(sigma_x, sigma_y, a.theta, a.freq, half)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    make_gabor_kernel(&params).save(&a.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Kernel(a) => cmd_kernel(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
