use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use rfdcov::bootstrap::{bootstrap_test, Resampling, TestConfig, TestResult, TestVariant};
use rfdcov::fields::dump::{DumpLayout, FieldDump};
use rfdcov::montecarlo::{
    poisson_negative_moment_check, run_boxplot_experiment, run_power_experiment, run_size_experiment, simulate_sample,
    write_records, FieldFamily, McConfig, RateTable, ResultSink, SchemeSpec,
};
use rfdcov::stations::{
    load_stations, per_station_tests, regional_field_test, synthetic_panel, write_regional_results, Season,
    StationPanel, SyntheticPanelSpec, VariablePair,
};
use rfdcov::{distance_matrix, sample_dcov, DcovParams, DiscretizationScheme, Error, LatticeSpec, LocationSet, Result};

/// Distance covariance independence tests for random fields.
#[derive(Parser, Debug)]
#[command(name = "rfdcov", version)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate fields and write a binary dump.
    Simulate(SimulateArgs),
    /// Sample distance covariance and correlation of a paired dump.
    Dcov(DcovArgs),
    /// Bootstrap independence test on a paired dump.
    Test(TestArgs),
    /// Empirical size of the bootstrap test under independence.
    McSize(ExperimentArgs),
    /// Empirical power of the bootstrap test over a rho grid.
    McPower(ExperimentArgs),
    /// Per-replication sample distance correlations for boxplots.
    McBoxplot(ExperimentArgs),
    /// Exact p^gamma E[N^-gamma 1(N > 0)] for N ~ Poisson(p).
    CheckPoisson(PoissonArgs),
    /// Independence tests on a station panel.
    Stations(StationArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Brownian,
    Fbs,
    Stable,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Scheme {
    Lattice,
    Random,
}

#[derive(Args, Debug, Default)]
struct FieldArgs {
    /// Field family: brownian, fbs or stable [default: brownian]
    #[arg(long, value_enum)]
    family: Option<Family>,
    /// Hurst index of the fbs family (same on both axes)
    #[arg(long)]
    hurst: Option<f64>,
    /// Stability index of the stable family [default: 1.8]
    #[arg(long)]
    alpha: Option<f64>,
    /// Discretization: lattice or random locations [default: lattice]
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    /// Lattice points per axis [default: 30]
    #[arg(long)]
    q: Option<usize>,
    /// Poisson intensity of the random locations [default: 300]
    #[arg(long)]
    p: Option<f64>,
}

impl FieldArgs {
    fn is_set(&self) -> bool {
        self.family.is_some()
            || self.hurst.is_some()
            || self.alpha.is_some()
            || self.scheme.is_some()
            || self.q.is_some()
            || self.p.is_some()
    }

    fn apply(&self, cfg: &mut McConfig) -> Result<()> {
        cfg.family = match self.family.unwrap_or(Family::Brownian) {
            Family::Brownian => FieldFamily::Brownian,
            Family::Fbs => FieldFamily::Fbs {
                hurst: self.hurst.ok_or_else(|| Error::Config("--family fbs needs --hurst".into()))?,
            },
            Family::Stable => FieldFamily::Stable {
                alpha: self.alpha.unwrap_or(1.8),
            },
        };
        cfg.scheme = match self.scheme.unwrap_or(Scheme::Lattice) {
            Scheme::Lattice => SchemeSpec::Lattice { q: self.q.unwrap_or(30) },
            Scheme::Random => SchemeSpec::Random { p: self.p.unwrap_or(300.0) },
        };
        Ok(())
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Number of realizations
    #[arg(long)]
    n: usize,
    /// Write a paired dump with y = rho x + ... (omit for a single-field dump)
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Output dump file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DumpArgs {
    /// Paired dump written by `simulate --rho`
    #[arg(long = "in")]
    input: PathBuf,
    /// Expected discretization of the dump (checked against its header)
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    /// Expected lattice size (checked against the dump header)
    #[arg(long)]
    q: Option<usize>,
    /// Distance exponent in (0, 2)
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args, Debug)]
struct DcovArgs {
    #[command(flatten)]
    dump: DumpArgs,
    /// Output CSV (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    dump: DumpArgs,
    #[command(flatten)]
    test: TestFlags,
    #[arg(long)]
    seed: u64,
    /// Output CSV (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct TestFlags {
    /// Bootstrap resamples B [default: 200, stations: 1000]
    #[arg(long = "B")]
    resamples: Option<usize>,
    /// Test level xi [default: 0.05]
    #[arg(long)]
    xi: Option<f64>,
    /// Test variant: dcor or un [default: dcor]
    #[arg(long)]
    variant: Option<String>,
    /// Resampling of the dcor variant: permutation, y, independent or pairs [default: permutation]
    #[arg(long)]
    resampling: Option<String>,
}

impl TestFlags {
    fn build(&self, default_b: usize, seed: u64) -> Result<TestConfig> {
        let variant: TestVariant = self.variant.as_deref().unwrap_or("dcor").parse()?;
        let resampling: Resampling = self.resampling.as_deref().unwrap_or("permutation").parse()?;
        Ok(TestConfig::new(self.resamples.unwrap_or(default_b), self.xi.unwrap_or(0.05), variant, seed)?
            .with_resampling(resampling))
    }
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Flat key=value config file; excludes the experiment flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    field: FieldArgs,
    /// Sample sizes, comma separated [default: 100]
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Dependence levels, comma separated [default: 0; mc-power: 0.5]
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Monte Carlo repetitions [default: 200]
    #[arg(long = "M")]
    reps: Option<usize>,
    /// Bootstrap resamples B [default: 200]
    #[arg(long = "B")]
    resamples: Option<usize>,
    /// Test levels, comma separated [default: 0.05]
    #[arg(long, value_delimiter = ',')]
    xi: Vec<f64>,
    /// Test variant: dcor or un [default: dcor]
    #[arg(long)]
    variant: Option<String>,
    /// Resampling of the dcor variant [default: permutation]
    #[arg(long)]
    resampling: Option<String>,
    /// Distance exponent [default: 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Full-scale settings (q=100 or p=1000, M=500, B=500); takes hours
    #[arg(long)]
    full_scale: bool,
    /// Required unless given in --config
    #[arg(long)]
    seed: Option<u64>,
    /// Per-trial CSV, appended to and resumed if it exists
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum Experiment {
    Size,
    Power,
    Boxplot,
}

impl ExperimentArgs {
    fn flags_set(&self) -> bool {
        self.field.is_set()
            || !self.n.is_empty()
            || !self.rho.is_empty()
            || self.reps.is_some()
            || self.resamples.is_some()
            || !self.xi.is_empty()
            || self.variant.is_some()
            || self.resampling.is_some()
            || self.beta.is_some()
            || self.full_scale
            || self.seed.is_some()
    }

    fn config(&self, experiment: Experiment) -> Result<McConfig> {
        if let Some(path) = &self.config {
            if self.flags_set() {
                return Err(Error::Config("--config cannot be combined with experiment flags".into()));
            }
            let cfg = McConfig::load(path)?;
            info!("loaded {}", path.display());
            return Ok(cfg);
        }
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("randomized commands need --seed (or a config file with seed)".into()))?;
        let mut cfg = McConfig::new(seed);
        self.field.apply(&mut cfg)?;
        if !self.n.is_empty() {
            cfg.ns = self.n.clone();
        }
        cfg.rhos = if !self.rho.is_empty() {
            self.rho.clone()
        } else if matches!(experiment, Experiment::Power) {
            vec![0.5]
        } else {
            vec![0.0]
        };
        if let Some(m) = self.reps {
            cfg.reps = m;
        }
        if !self.xi.is_empty() {
            cfg.levels = self.xi.clone();
        }
        if let Some(beta) = self.beta {
            cfg.params = DcovParams::new(beta)?;
        }
        let flags = TestFlags {
            resamples: self.resamples,
            xi: cfg.levels.first().copied(),
            variant: self.variant.clone(),
            resampling: self.resampling.clone(),
        };
        cfg.test = flags.build(200, seed)?;
        if self.full_scale {
            cfg = cfg.full_scale()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct PoissonArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct StationArgs {
    /// Station CSV (station_id,lat,lon,region,year,month,temp,prec,wind)
    #[arg(long = "in", conflicts_with = "synthetic_stations")]
    input: Option<PathBuf>,
    /// Use a synthetic panel with this many stations instead of --in
    #[arg(long)]
    synthetic_stations: Option<usize>,
    /// Months of the synthetic panel
    #[arg(long, default_value_t = 480)]
    synthetic_months: usize,
    /// Dependence between temp and prec in the synthetic panel
    #[arg(long, default_value_t = 0.0)]
    synthetic_rho: f64,
    /// Region tags in the synthetic panel
    #[arg(long, default_value_t = 8)]
    synthetic_regions: usize,
    /// Number of independent synthetic panels; results are listed panel by panel
    #[arg(long, default_value_t = 1)]
    synthetic_panels: usize,
    /// Variable pair, e.g. temp-prec
    #[arg(long, default_value = "temp-prec")]
    pair: String,
    /// Region tag, `all`, or `each` for the whole panel and every region
    #[arg(long, default_value = "all")]
    region: String,
    /// winter, spring, summer, autumn, `all`, or `each`
    #[arg(long, default_value = "all")]
    season: String,
    /// Test every station's two series instead of the field-level test
    #[arg(long)]
    per_station: bool,
    #[command(flatten)]
    test: TestFlags,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long)]
    seed: u64,
    /// Output CSV (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:?}")
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::Config("--n must be positive".into()));
    }
    let mut cfg = McConfig::new(args.seed);
    args.field.apply(&mut cfg)?;
    let (scheme, x, y) = simulate_sample(&cfg, args.n, args.rho.unwrap_or(0.0), 0)?;
    let layout = match &scheme {
        DiscretizationScheme::Lattice(l) => DumpLayout::Lattice {
            d: l.d() as u32,
            q: l.q() as u32,
        },
        other => DumpLayout::Points {
            d: 2,
            count: other.site_count() as u32,
        },
    };
    let dump = FieldDump {
        layout,
        x,
        y: args.rho.map(|_| y),
    };
    let mut out = BufWriter::new(File::create(&args.out)?);
    dump.write(&mut out)?;
    out.flush()?;
    info!("wrote {} realizations to {}", args.n, args.out.display());
    Ok(())
}

fn read_pairs(args: &DumpArgs) -> Result<(rfdcov::DistanceMatrix, rfdcov::DistanceMatrix)> {
    let file = File::open(&args.input).map_err(|e| Error::Data(format!("{}: {e}", args.input.display())))?;
    let dump = FieldDump::read(io::BufReader::new(file))?;
    let Some(y) = &dump.y else {
        return Err(Error::Data(format!("{} holds a single field, not a pair", args.input.display())));
    };
    let scheme = match dump.layout {
        DumpLayout::Lattice { d, q } => {
            if args.scheme == Some(Scheme::Random) {
                return Err(Error::Config("dump holds lattice fields, --scheme random given".into()));
            }
            if args.q.is_some_and(|want| want != q as usize) {
                return Err(Error::Config(format!("dump has q = {q}, --q {} given", args.q.unwrap_or(0))));
            }
            DiscretizationScheme::Lattice(LatticeSpec::new(d as usize, q as usize)?)
        }
        DumpLayout::Points { d, count } => {
            if args.scheme == Some(Scheme::Lattice) {
                return Err(Error::Config("dump holds random-location fields, --scheme lattice given".into()));
            }
            // The random-location norm only uses the number of sites.
            let points = vec![vec![0.0; d as usize]; count as usize];
            DiscretizationScheme::Locations(LocationSet::new(d as usize, points, count as f64)?)
        }
    };
    let params = DcovParams::new(args.beta)?;
    Ok((distance_matrix(&dump.x, &scheme, params)?, distance_matrix(y, &scheme, params)?))
}

fn dcov(args: &DcovArgs) -> Result<()> {
    let (dx, dy) = read_pairs(&args.dump)?;
    let r = sample_dcov(&dx, &dy)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "T,R")?;
    writeln!(out, "{},{}", format_float(r.t_xy), format_float(r.r_xy.unwrap_or(f64::NAN)))?;
    out.flush()?;
    Ok(())
}

fn test(args: &TestArgs) -> Result<()> {
    let (dx, dy) = read_pairs(&args.dump)?;
    let cfg = args.test.build(200, args.seed)?;
    let result = bootstrap_test(&dx, &dy, &cfg)?;
    write_test_result(args.out.as_deref(), &result)
}

fn write_test_result(path: Option<&Path>, result: &TestResult) -> Result<()> {
    let mut out = output(path)?;
    writeln!(out, "{}", TestResult::RECORD_HEADER.join(","))?;
    writeln!(out, "{}", result.record().join(","))?;
    out.flush()?;
    Ok(())
}

fn experiment(args: &ExperimentArgs, kind: Experiment) -> Result<()> {
    let cfg = args.config(kind)?;
    info!(
        "{} trials per cell, {} cells",
        cfg.reps,
        cfg.ns.len() * cfg.rhos.len()
    );
    let mut sink = args.out.as_deref().map(ResultSink::open).transpose()?;
    let mut stdout = output(None)?;
    let table: RateTable = match kind {
        Experiment::Boxplot => {
            let rows = run_boxplot_experiment(&cfg, sink.as_mut())?;
            if sink.is_none() {
                write_records(&mut stdout, &rows)?;
            }
            stdout.flush()?;
            return Ok(());
        }
        Experiment::Size => run_size_experiment(&cfg, sink.as_mut())?,
        Experiment::Power => run_power_experiment(&cfg, sink.as_mut())?,
    };
    table.write_csv(&mut stdout)?;
    stdout.flush()?;
    Ok(())
}

fn check_poisson(args: &PoissonArgs) -> Result<()> {
    let v = poisson_negative_moment_check(args.p, args.gamma)?;
    let mut out = output(None)?;
    writeln!(out, "p,gamma,value")?;
    writeln!(out, "{},{},{}", args.p, args.gamma, format_float(v))?;
    out.flush()?;
    Ok(())
}

fn stations(args: &StationArgs) -> Result<()> {
    let panels: Vec<StationPanel> = match (&args.input, args.synthetic_stations) {
        (Some(path), None) => vec![load_stations(path)?],
        (None, Some(stations)) => {
            let spec = SyntheticPanelSpec {
                stations,
                months: args.synthetic_months,
                rho: args.synthetic_rho,
                regions: args.synthetic_regions,
            };
            (0..args.synthetic_panels as u64)
                .map(|k| synthetic_panel(&spec, args.seed, k))
                .collect::<Result<_>>()?
        }
        _ => return Err(Error::Config("give either --in or --synthetic-stations".into())),
    };
    let pair: VariablePair = args.pair.parse()?;
    let base = args.test.build(1000, args.seed)?;
    let params = DcovParams::new(args.beta)?;
    let seasons: Vec<Option<Season>> = match args.season.as_str() {
        "all" => vec![None],
        "each" => std::iter::once(None).chain(Season::ALL.into_iter().map(Some)).collect(),
        s => vec![Some(s.parse()?)],
    };
    let mut out = output(args.out.as_deref())?;

    if args.per_station {
        writeln!(out, "station_id,R,quantile,reject,undefined")?;
    }
    let mut results = Vec::new();
    for (k, panel) in panels.iter().enumerate() {
        let cfg = base.with_trial(k as u64);
        if args.per_station {
            let summary = per_station_tests(panel, pair, &cfg, params);
            for t in &summary.tests {
                match &t.result {
                    Ok(r) => writeln!(
                        out,
                        "{},{},{},{},{}",
                        t.station,
                        format_float(r.statistic),
                        format_float(r.quantile),
                        u8::from(r.reject),
                        u8::from(r.undefined)
                    )?,
                    Err(e) => log::warn!("station {}: {e}", t.station),
                }
            }
            info!("{} of {} stations reject", summary.rejections, summary.tests.len());
            continue;
        }
        let regions: Vec<Option<String>> = match args.region.as_str() {
            "all" => vec![None],
            "each" => std::iter::once(None).chain(panel.regions().into_iter().map(Some)).collect(),
            tag => vec![Some(tag.to_string())],
        };
        for region in &regions {
            for &season in &seasons {
                results.push(regional_field_test(panel, region.as_deref(), season, pair, &cfg, params)?);
            }
        }
    }
    if !args.per_station {
        write_regional_results(&mut out, &results)?;
    }
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Dcov(a) => dcov(a),
        Command::Test(a) => test(a),
        Command::McSize(a) => experiment(a, Experiment::Size),
        Command::McPower(a) => experiment(a, Experiment::Power),
        Command::McBoxplot(a) => experiment(a, Experiment::Boxplot),
        Command::CheckPoisson(a) => check_poisson(a),
        Command::Stations(a) => stations(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
