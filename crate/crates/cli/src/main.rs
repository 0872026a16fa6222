//! `ergograph`: command-line front end.
//!
//! Graphs travel as JSON, signals and PSDs as `node,value` CSV. Output goes to
//! `--out` or standard output. Set `ERGOGRAPH_LOG` (e.g. `debug`) to change the
//! log level; the default is `info`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ergograph::bounds::{bound_reports_csv, estimator_psd, filtered_psd, BoundReport};
use ergograph::distributed::simulate_diffusion;
use ergograph::estimators::{graph_shift_average, optimal_mse_estimator};
use ergograph::experiments::{gmrf_field_demo, run_experiment, ExperimentConfig, FieldSettings};
use ergograph::graphs::{
    adjacency_shift, covariance_graph, directed_cycle, erdos_renyi, normalized_adjacency_shift, sbm,
    sensor_network, Graph, GraphDocument, SensorParams, ShiftOperator,
};
use ergograph::io::{read_signal_csv, write_signal_csv};
use ergograph::process::{gmrf_psd_calibrated, logspace_psd, snr_to_p1, DcRule, WssProcess};
use ergograph::seeds::rng_from_seed;
use ergograph::spectral::{classify_spectrum, decompose, SpectralDecomposition};
use ergograph::Complex64;
use log::info;
use nalgebra::DVector;

#[derive(Parser, Debug)]
#[command(name = "ergograph", version, about = "Ergodic mean estimation on graph processes")]
struct Cli {
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a graph and write it as JSON.
    Graph(GraphArgs),
    /// Eigenvalues, Perron vector and spectral regime of a graph's shift.
    Spectrum(SpectrumArgs),
    /// Draw one realization of a stationary process on a graph.
    Sample(SampleArgs),
    /// Estimate the ensemble mean from one realization.
    Estimate(EstimateArgs),
    /// Per-node variances and Chebyshev bounds.
    Bound(BoundArgs),
    /// Run a Monte-Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// One GMRF realization on a sensor network and its shift average.
    GmrfDemo(DemoArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum GraphFamily {
    Cycle,
    Path,
    Complete,
    Er,
    Sbm,
    Sensor,
    Covariance,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ShiftChoice {
    Adjacency,
    Normalized,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long, value_enum)]
    family: GraphFamily,
    #[arg(long)]
    n: usize,
    /// Required for the random families.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.2)]
    p_er: f64,
    #[arg(long, default_value_t = 4)]
    communities: usize,
    #[arg(long, default_value_t = 0.6)]
    p_in: f64,
    #[arg(long, default_value_t = 0.1)]
    p_out: f64,
    #[arg(long, default_value_t = 0.01)]
    rho_min: f64,
    #[arg(long, default_value_t = 1.0)]
    rho_max: f64,
    #[arg(long, default_value_t = 1.75)]
    thres_factor: f64,
    /// Training samples for the covariance family.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Ignored for the covariance family, which carries its own shift.
    #[arg(long, value_enum, default_value_t = ShiftChoice::Adjacency)]
    shift: ShiftChoice,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also dump the full eigenvector matrix.
    #[arg(long)]
    vectors: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum PsdShape {
    Logspace,
    Gmrf,
    Flat,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum DcChoice {
    KeepP1,
    Literal,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    mu: f64,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, value_enum, default_value_t = PsdShape::Logspace)]
    psd: PsdShape,
    #[arg(long, value_enum, default_value_t = DcChoice::KeepP1)]
    dc_rule: DcChoice,
    /// The GMRF uses `a = scale / λ_1`.
    #[arg(long, default_value_t = 0.99)]
    gmrf_a_scale: f64,
    /// Write the PSD used to this CSV as well.
    #[arg(long)]
    psd_out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum EstimatorChoice {
    ShiftAverage,
    Optimal,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::ShiftAverage)]
    estimator: EstimatorChoice,
    /// Diffusion depth `L`; defaults to `N`.
    #[arg(long)]
    depth: Option<usize>,
    /// Run the shift average as a neighbor-exchange protocol.
    #[arg(long)]
    distributed: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum BoundTarget {
    ShiftAverage,
    Optimal,
    /// The raw observation `x` itself.
    Raw,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Process PSD as `node,value` CSV, in the Perron-first frequency order.
    #[arg(long)]
    psd: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = BoundTarget::ShiftAverage)]
    estimator: BoundTarget,
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    mu: f64,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// A graph file plus its shift: the embedded one, or the adjacency.
fn load_graph(path: &Path) -> Result<(Graph, ShiftOperator)> {
    let doc = GraphDocument::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let (g, shift) = doc.into_parts().with_context(|| format!("in {}", path.display()))?;
    let shift = match shift {
        Some(s) => s,
        None => adjacency_shift(&g)?,
    };
    Ok((g, shift))
}

fn load_signal(path: &Path, n: usize) -> Result<DVector<f64>> {
    let x = read_signal_csv(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    if x.len() != n {
        bail!("{} has {} entries but the graph has {n} vertices", path.display(), x.len());
    }
    Ok(x)
}

fn required_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.with_context(|| format!("{what} is random: pass --seed"))
}

fn cmd_graph(a: &GraphArgs) -> Result<String> {
    let random = !matches!(a.family, GraphFamily::Cycle | GraphFamily::Path | GraphFamily::Complete);
    let seed = if random { Some(required_seed(a.seed, "this graph family")?) } else { None };
    info!("seed: {}", seed.map_or("none".to_string(), |s| s.to_string()));
    let mut rng = rng_from_seed(seed.unwrap_or(0));
    let sensor = SensorParams { rho_min: a.rho_min, rho_max: a.rho_max, thres_factor: a.thres_factor };
    let (g, fixed_shift) = match a.family {
        GraphFamily::Cycle => (directed_cycle(a.n)?, None),
        GraphFamily::Path => (Graph::path(a.n)?, None),
        GraphFamily::Complete => (Graph::complete(a.n)?, None),
        GraphFamily::Er => (erdos_renyi(a.n, a.p_er, &mut rng)?, None),
        GraphFamily::Sbm => (sbm(a.n, a.communities, a.p_in, a.p_out, &mut rng)?, None),
        GraphFamily::Sensor => (sensor_network(a.n, sensor, &mut rng)?.graph, None),
        GraphFamily::Covariance => {
            let cg = covariance_graph(a.n, a.samples, &mut rng)?;
            (cg.graph, Some(cg.shift))
        }
    };
    let shift = match (fixed_shift, a.shift) {
        (Some(s), _) => Some(s),
        (None, ShiftChoice::Normalized) => Some(normalized_adjacency_shift(&g)?),
        (None, ShiftChoice::Adjacency) => None,
    };
    Ok(g.to_document(shift.as_ref()).to_json())
}

fn complex_pairs(v: impl IntoIterator<Item = Complex64>) -> Vec<[f64; 2]> {
    v.into_iter().map(|c| [c.re, c.im]).collect()
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<String> {
    info!("seed: none");
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        bail!("--threshold must lie in (0, 1), got {}", a.threshold);
    }
    let (_, s) = load_graph(&a.graph)?;
    let d = decompose(&s)?;
    let regime = classify_spectrum(&d, a.threshold);
    let mut out = serde_json::json!({
        "n": d.n(),
        "kind": d.source_kind(),
        "lambda1": d.lambda1(),
        "eigenvalues": complex_pairs(d.eigenvalues().iter().copied()),
        "perron_vector": d.perron_vector().as_slice(),
        "regime": regime,
    });
    if a.vectors {
        let rows: Vec<_> = d.eigenvectors().row_iter().map(|r| complex_pairs(r.iter().copied())).collect();
        out["eigenvectors"] = serde_json::to_value(rows)?;
    }
    Ok(serde_json::to_string(&out)?)
}

fn sample_psd(a: &SampleArgs, d: &SpectralDecomposition) -> Result<DVector<f64>> {
    let p1 = snr_to_p1(a.mu, a.snr_db)?;
    Ok(match a.psd {
        PsdShape::Logspace => {
            let dc = match a.dc_rule {
                DcChoice::KeepP1 => DcRule::KeepP1,
                DcChoice::Literal => DcRule::Literal,
            };
            logspace_psd(d.n(), p1, dc)?
        }
        PsdShape::Gmrf => gmrf_psd_calibrated(d, a.gmrf_a_scale / d.lambda1(), p1)?.0,
        PsdShape::Flat => DVector::from_element(d.n(), p1),
    })
}

fn cmd_sample(a: &SampleArgs) -> Result<String> {
    info!("seed: {}", a.seed);
    let (_, s) = load_graph(&a.graph)?;
    let d = decompose(&s)?;
    let psd = sample_psd(a, &d)?;
    if let Some(path) = &a.psd_out {
        write_output(Some(path), &write_signal_csv("psd", &psd))?;
    }
    let sampler = WssProcess::new(d, a.mu, psd)?.sampler()?;
    let x = sampler.sample(&mut rng_from_seed(a.seed));
    Ok(write_signal_csv("value", &x))
}

fn cmd_estimate(a: &EstimateArgs) -> Result<String> {
    info!("seed: none");
    let (g, s) = load_graph(&a.graph)?;
    let x = load_signal(&a.signal, g.n())?;
    let d = decompose(&s)?;
    let depth = a.depth.unwrap_or(g.n());
    let est = match (a.estimator, a.distributed) {
        (EstimatorChoice::ShiftAverage, false) => graph_shift_average(&s, d.lambda1(), &x, depth)?,
        (EstimatorChoice::ShiftAverage, true) => {
            let trace = simulate_diffusion(&g, &s, d.lambda1(), &x, depth)?;
            eprintln!("rounds: {}, messages: {}", trace.rounds, trace.messages_sent);
            trace.per_node_estimates
        }
        (EstimatorChoice::Optimal, false) => optimal_mse_estimator(&d, &x)?,
        (EstimatorChoice::Optimal, true) => bail!("--distributed only applies to the shift average"),
    };
    Ok(write_signal_csv("estimate", &est))
}

fn cmd_bound(a: &BoundArgs) -> Result<String> {
    info!("seed: none");
    let (g, s) = load_graph(&a.graph)?;
    let p = load_signal(&a.psd, g.n())?;
    let d = decompose(&s)?;
    let psd = match a.estimator {
        BoundTarget::ShiftAverage => estimator_psd(&p, d.eigenvalues(), d.lambda1(), a.depth.unwrap_or(g.n()))?,
        BoundTarget::Optimal => {
            let mut e1 = DVector::from_element(g.n(), Complex64::ZERO);
            e1[0] = Complex64::ONE;
            filtered_psd(&p, &e1)?
        }
        BoundTarget::Raw => p,
    };
    let reports = (0..g.n())
        .map(|k| BoundReport::new(psd.clone(), &d, k, a.epsilon))
        .collect::<ergograph::Result<Vec<_>>>()?;
    Ok(bound_reports_csv(&reports))
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<String> {
    let mut cfg = ExperimentConfig::from_json(&read(&a.config)?).with_context(|| format!("in {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    info!("seed: {}", cfg.master_seed);
    let run = || run_experiment(&cfg);
    let report = match a.threads {
        Some(0) => bail!("--threads must be positive"),
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(run)?,
        None => run()?,
    };
    info!(
        "{} graphs in {:.1}s ({} redrawn, {} dominance violations)",
        report.graphs.len(),
        report.runtime_secs,
        report.redrawn,
        report.dominance_violations.total()
    );
    Ok(report.to_csv())
}

fn cmd_demo(a: &DemoArgs) -> Result<String> {
    info!("seed: {}", a.seed);
    let settings = FieldSettings { mu: a.mu, snr_db: a.snr_db, ..FieldSettings::default() };
    let demo = gmrf_field_demo(a.n, a.seed, &settings)?;
    info!("relative error: raw {:.4}, shift average {:.4}", demo.rel_err_raw, demo.rel_err_avg);
    Ok(demo.to_csv())
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            let written = stdout.write_all(text.as_bytes()).and_then(|()| {
                if text.ends_with('\n') {
                    Ok(())
                } else {
                    stdout.write_all(b"\n")
                }
            });
            match written {
                // The reader went away (e.g. `| head`); nothing left to do.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let text = match &cli.command {
        Command::Graph(a) => cmd_graph(a)?,
        Command::Spectrum(a) => cmd_spectrum(a)?,
        Command::Sample(a) => cmd_sample(a)?,
        Command::Estimate(a) => cmd_estimate(a)?,
        Command::Bound(a) => cmd_bound(a)?,
        Command::Experiment(a) => cmd_experiment(a)?,
        Command::GmrfDemo(a) => cmd_demo(a)?,
    };
    write_output(cli.out.as_ref(), &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERGOGRAPH_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
