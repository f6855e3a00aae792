use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nardf_cli::config::{load_config, parse_config, ExperimentConfig, Format, OutputConfig};
use nardf_cli::record::emit;
use nardf_cli::run::{run, trace_csv, RunEnv};
use serde_json::{json, Map, Value};

/// Thread count for Monte-Carlo trials. Results do not depend on it.
const THREADS_VAR: &str = "NARDF_THREADS";

#[derive(Parser, Debug)]
#[command(name = "nardf", version, about = "Nonanticipative rate distortion experiments")]
struct Cli {
    /// Experiment config (JSON). Subcommand flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reverse water-filling over a list of eigenvalues.
    Waterfill(WaterfillArgs),
    /// Rate-distortion curve of a finite-alphabet Markov source.
    FiniteRdf(FiniteRdfArgs),
    /// Encoder/channel/decoder design for a Gauss-Markov source.
    GaussRealize(GaussRealizeArgs),
    /// Monte-Carlo run of the realized cascade.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct WaterfillArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eigenvalues: Option<Vec<f64>>,
    /// One level or a comma-separated grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    distortion: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct FiniteRdfArgs {
    #[arg(long)]
    source: Option<PathBuf>,
    /// `hamming`, `squared_error` or a JSON file.
    #[arg(long)]
    distortion: Option<String>,
    /// `start:stop:points` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    s_grid: Option<String>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    /// `tilt` or `causal`.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct GaussRealizeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    distortion_level: Option<f64>,
    /// Fix the channel power and solve for the distortion instead.
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    channel_noise: Option<f64>,
    #[arg(long)]
    steady_state: bool,
    #[arg(long)]
    horizon: Option<usize>,
    /// `mmse` or `as_printed`.
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Defaults to the scalar model A = 0.5, B = C = G = 1.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    distortion_level: Option<f64>,
    #[arg(long)]
    channel_noise: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// `steady_state`, `finite_horizon` or `perfect_channel`.
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    decoder: Option<String>,
    /// Write the first trial's signals as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn absolute(p: &Path) -> Result<String> {
    let abs = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()?.join(p)
    };
    Ok(abs.display().to_string())
}

fn put(obj: &mut Map<String, Value>, key: &str, v: Option<Value>) {
    if let Some(v) = v {
        obj.insert(key.to_string(), v);
    }
}

fn put_default(obj: &mut Map<String, Value>, key: &str, v: Value) {
    obj.entry(key.to_string()).or_insert(v);
}

/// Experiment key, overrides, and a top-level `tol` override.
fn overlay(cmd: &Command) -> Result<(&'static str, Map<String, Value>, Option<f64>)> {
    let mut o = Map::new();
    let path = |p: &Option<PathBuf>| p.as_deref().map(absolute).transpose().map(|s| s.map(Value::from));
    Ok(match cmd {
        Command::Waterfill(a) => {
            put(&mut o, "eigenvalues", a.eigenvalues.clone().map(|v| json!(v)));
            put(
                &mut o,
                "distortion",
                a.distortion.clone().map(|v| if v.len() == 1 { json!(v[0]) } else { json!(v) }),
            );
            ("waterfill", o, None)
        }
        Command::FiniteRdf(a) => {
            put(&mut o, "source", path(&a.source)?);
            let dist = match a.distortion.as_deref() {
                None => None,
                Some(k @ ("hamming" | "squared_error")) => Some(json!(k)),
                Some(file) => Some(json!(absolute(Path::new(file))?)),
            };
            put(&mut o, "distortion", dist);
            let grid = match a.s_grid.as_deref() {
                None => None,
                Some(g) if g.contains(':') => Some(json!(g)),
                Some(g) => {
                    let v: Result<Vec<f64>, _> = g.split(',').map(|x| x.trim().parse::<f64>()).collect();
                    Some(json!(v.with_context(|| format!("bad --s-grid {g:?}"))?))
                }
            };
            put(&mut o, "s_grid", grid);
            put(&mut o, "max_iter", a.max_iter.map(Value::from));
            put(&mut o, "damping", a.damping.map(Value::from));
            put(&mut o, "kernel", a.kernel.clone().map(Value::from));
            ("finite_rdf", o, a.tol)
        }
        Command::GaussRealize(a) => {
            put(&mut o, "model", path(&a.model)?);
            put(&mut o, "distortion_level", a.distortion_level.map(Value::from));
            put(&mut o, "power", a.power.map(Value::from));
            put(&mut o, "channel_noise", a.channel_noise.map(Value::from));
            if a.steady_state {
                o.insert("steady_state".into(), Value::Bool(true));
            }
            put(&mut o, "horizon", a.horizon.map(Value::from));
            put(&mut o, "decoder", a.decoder.clone().map(Value::from));
            ("gauss_realize", o, a.tol)
        }
        Command::Simulate(a) => {
            put(&mut o, "model", path(&a.model)?);
            put(&mut o, "distortion_level", a.distortion_level.map(Value::from));
            put(&mut o, "channel_noise", a.channel_noise.map(Value::from));
            put(&mut o, "trials", a.trials.map(Value::from));
            put(&mut o, "horizon", a.horizon.map(Value::from));
            put(&mut o, "design", a.design.clone().map(Value::from));
            put(&mut o, "decoder", a.decoder.clone().map(Value::from));
            ("simulate", o, None)
        }
    })
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let Some(cmd) = &cli.command else {
        let path = cli.config.as_deref().context("give --config or a subcommand (see --help)")?;
        return Ok(load_config(path)?);
    };
    let (key, over, tol) = overlay(cmd)?;
    let (mut root, origin, base) = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (v, p.display().to_string(), base)
        }
        None => (json!({ "experiment": { key: {} } }), "command line".to_string(), PathBuf::from(".")),
    };
    let exp = root
        .get_mut("experiment")
        .and_then(Value::as_object_mut)
        .context("config has no `experiment` object")?;
    let Some(entry) = exp.get_mut(key).and_then(Value::as_object_mut) else {
        let found: Vec<&String> = exp.keys().collect();
        bail!("subcommand expects a `{key}` experiment, config has {found:?}");
    };
    entry.extend(over);
    if key == "simulate" {
        put_default(
            entry,
            "model",
            json!({"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "G": [[1.0]]}),
        );
        put_default(entry, "distortion_level", json!(0.5));
        put_default(entry, "channel_noise", json!(1.0));
    }
    if let Some(t) = tol {
        root["tol"] = json!(t);
    }
    let text = serde_json::to_string(&root)?;
    Ok(parse_config(&text, &origin, &base)?)
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_VAR}={v:?} is not a count"))?;
            Ok(n.max(1))
        }
    }
}

fn main_inner() -> Result<()> {
    let cli = Cli::parse();
    let mut config = build_config(&cli)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let mut output = config.output.clone().unwrap_or_default();
    if cli.out.is_some() {
        output.path = cli.out.clone();
    }
    if cli.format.is_some() {
        output.format = cli.format;
    }
    if let Some(Command::Simulate(SimulateArgs { trace: Some(t), .. })) = &cli.command {
        output.trace = Some(t.clone());
    }
    config.output = (output != OutputConfig::default()).then_some(output.clone());

    let env = RunEnv {
        threads: threads()?,
        want_trace: output.trace.is_some(),
    };
    let result = run(&config, env).with_context(|| format!("{} experiment failed", config.experiment.name()))?;
    emit(&result.record, config.format(), output.path.as_deref())
        .with_context(|| match &output.path {
            Some(p) => format!("cannot write {}", p.display()),
            None => "cannot write to stdout".into(),
        })?;
    if let (Some(path), Some(trace)) = (&output.trace, &result.trace) {
        std::fs::write(path, trace_csv(trace)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nardf: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
