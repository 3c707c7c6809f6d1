//! Monte Carlo harness for boxplot, size and power experiments, plus two
//! numeric checks (Poisson negative moments and Riemann-sum convergence).
//!
//! Trials run in parallel in fixed-size chunks; each chunk is written to the
//! output in trial order, so the CSV does not depend on the worker count.
//! Every trial draws from its own streams keyed by the trial index, so a run
//! interrupted part way can be resumed from the rows already on disk.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bootstrap::{bootstrap_test, format_float, order_statistic_quantile, Resampling, TestConfig, TestResult, TestVariant};
use crate::dcov::dcor;
use crate::distance::distance_matrix;
use crate::domain::{DcovParams, DiscretizationScheme, DistanceMatrix, FieldRealization, LatticeSpec};
use crate::error::{Error, Result};
use crate::fields::{
    make_dependent_pair, sample_poisson_locations, simulate_increment_sheet_lattice, DependenceFamily, DependenceSpec,
    FbsParams, GaussianFieldSampler, IrregularGrid, Purpose, RngStream, SheetFamily, StableParams, StreamId,
    MAX_DENSE_SITES,
};
use crate::norms::lattice_norm;

/// Exact CSV header of experiment output.
pub const CSV_HEADER: [&str; 13] = [
    "experiment", "family", "scheme", "q_or_p", "n", "rho", "xi", "B", "M", "trial", "statistic", "quantile", "reject",
];

/// Trials evaluated between two flushes of the output.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldFamily {
    Brownian,
    Fbs { hurst: f64 },
    Stable { alpha: f64 },
}

impl FieldFamily {
    pub fn label(&self) -> String {
        match self {
            FieldFamily::Brownian => "brownian".to_string(),
            FieldFamily::Fbs { hurst } => format!("fbs({hurst})"),
            FieldFamily::Stable { alpha } => format!("stable({alpha})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeSpec {
    Lattice { q: usize },
    /// Poisson(`p`) uniform locations, drawn once per experiment.
    Random { p: f64 },
}

impl SchemeSpec {
    fn name(&self) -> &'static str {
        match self {
            SchemeSpec::Lattice { .. } => "lattice",
            SchemeSpec::Random { .. } => "random",
        }
    }

    fn size_label(&self) -> String {
        match self {
            SchemeSpec::Lattice { q } => q.to_string(),
            SchemeSpec::Random { p } => p.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Boxplot,
    Size,
    Power,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Boxplot => "boxplot",
            ExperimentKind::Size => "size",
            ExperimentKind::Power => "power",
        }
    }
}

/// Settings of one experiment. Fields are public for assembly from the CLI
/// or a config file; runners validate before doing any work.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub family: FieldFamily,
    pub scheme: SchemeSpec,
    pub rhos: Vec<f64>,
    pub ns: Vec<usize>,
    /// Monte Carlo repetitions `M`.
    pub reps: usize,
    /// Test levels; every trial is decided at each of them from one bootstrap
    /// distribution. The test config's own level is used when empty.
    pub levels: Vec<f64>,
    pub test: TestConfig,
    pub params: DcovParams,
    pub seed: u64,
}

impl McConfig {
    /// Desk-scale defaults: Brownian sheets on a 30 x 30 lattice, n = 100,
    /// M = 200, B = 200, xi = 0.05.
    pub fn new(seed: u64) -> Self {
        Self {
            family: FieldFamily::Brownian,
            scheme: SchemeSpec::Lattice { q: 30 },
            rhos: vec![0.0],
            ns: vec![100],
            reps: 200,
            levels: vec![0.05],
            test: TestConfig::new(200, 0.05, TestVariant::DcorResample, seed).expect("valid defaults"),
            params: DcovParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 10 {
            return Err(Error::config(format!("need M >= 10 repetitions, got {}", self.reps)));
        }
        if self.ns.is_empty() {
            return Err(Error::config("empty sample size grid"));
        }
        if let Some(n) = self.ns.iter().find(|&&n| n < 4) {
            return Err(Error::config(format!("sample sizes must be >= 4, got {n}")));
        }
        if self.rhos.is_empty() {
            return Err(Error::config("empty rho grid"));
        }
        for &xi in &self.levels {
            self.test.with_level(xi)?;
        }
        match self.family {
            FieldFamily::Brownian => {}
            FieldFamily::Fbs { hurst } => {
                FbsParams::new(vec![hurst; 2])?;
            }
            FieldFamily::Stable { alpha } => {
                StableParams::new(alpha, 1.0)?;
                if alpha >= 2.0 {
                    return Err(Error::config("stable family needs alpha < 2; use brownian for alpha = 2"));
                }
            }
        }
        for &rho in &self.rhos {
            DependenceSpec::new(rho, self.dependence_family())?;
        }
        match self.scheme {
            SchemeSpec::Lattice { q: 0 } => Err(Error::config("lattice needs q >= 1")),
            SchemeSpec::Random { p } if !(p > 0.0 && p.is_finite()) => {
                Err(Error::config(format!("Poisson intensity must be positive, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Full-scale settings: q = 100 (or p = 1000), M = 500, B = 500.
    pub fn full_scale(mut self) -> Result<Self> {
        self.scheme = match self.scheme {
            SchemeSpec::Lattice { .. } => SchemeSpec::Lattice { q: 100 },
            SchemeSpec::Random { .. } => SchemeSpec::Random { p: 1000.0 },
        };
        self.reps = 500;
        self.test = TestConfig::new(500, self.test.xi(), self.test.variant(), self.test.seed())?
            .with_resampling(self.test.resampling());
        Ok(self)
    }

    fn dependence_family(&self) -> DependenceFamily {
        match self.family {
            FieldFamily::Stable { alpha } => DependenceFamily::Stable { alpha },
            _ => DependenceFamily::Gaussian,
        }
    }

    fn levels(&self) -> Vec<f64> {
        if self.levels.is_empty() {
            vec![self.test.xi()]
        } else {
            self.levels.clone()
        }
    }

    /// Parses a flat `key = value` config. Lists are comma separated, `#`
    /// starts a comment, unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: HashMap<String, (usize, String)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected key = value", i + 1)))?;
            let key = k.trim().to_string();
            if kv.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::config(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        const KNOWN: [&str; 16] = [
            "family", "hurst", "alpha", "scheme", "q", "p", "n", "rho", "xi", "B", "M", "seed", "beta", "variant",
            "resampling", "full_scale",
        ];
        if let Some((k, (line, _))) = kv.iter().find(|(k, _)| !KNOWN.contains(&k.as_str())) {
            return Err(Error::config(format!("config line {line}: unknown key {k:?}")));
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.as_str());
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(format!("invalid value {v:?} for {key}")))
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }

        let seed: u64 = num("seed", get("seed").ok_or_else(|| Error::config("config must set seed"))?)?;
        let mut cfg = McConfig::new(seed);
        cfg.family = match get("family").unwrap_or("brownian") {
            "brownian" => FieldFamily::Brownian,
            "fbs" => FieldFamily::Fbs {
                hurst: num("hurst", get("hurst").ok_or_else(|| Error::config("family fbs needs hurst"))?)?,
            },
            "stable" => FieldFamily::Stable {
                alpha: num("alpha", get("alpha").unwrap_or("1.8"))?,
            },
            other => return Err(Error::config(format!("unknown family {other:?}"))),
        };
        cfg.scheme = match get("scheme").unwrap_or("lattice") {
            "lattice" => SchemeSpec::Lattice {
                q: num("q", get("q").unwrap_or("30"))?,
            },
            "random" => SchemeSpec::Random {
                p: num("p", get("p").unwrap_or("300"))?,
            },
            other => return Err(Error::config(format!("unknown scheme {other:?}"))),
        };
        if let Some(v) = get("n") {
            cfg.ns = list("n", v)?;
        }
        if let Some(v) = get("rho") {
            cfg.rhos = list("rho", v)?;
        }
        if let Some(v) = get("xi") {
            cfg.levels = list("xi", v)?;
        }
        if let Some(v) = get("M") {
            cfg.reps = num("M", v)?;
        }
        if let Some(v) = get("beta") {
            cfg.params = DcovParams::new(num("beta", v)?)?;
        }
        let resamples = get("B").map(|v| num("B", v)).transpose()?.unwrap_or(200);
        let variant: TestVariant = get("variant").unwrap_or("dcor").parse()?;
        let resampling: Resampling = get("resampling").unwrap_or("permutation").parse()?;
        let first_level = cfg.levels.first().copied().unwrap_or(0.05);
        cfg.test = TestConfig::new(resamples, first_level, variant, seed)?.with_resampling(resampling);
        if num::<bool>("full_scale", get("full_scale").unwrap_or("false"))? {
            cfg = cfg.full_scale()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Field generator prepared once per experiment.
enum Sampler {
    LatticeSheet { lattice: LatticeSpec, family: SheetFamily },
    Dense(GaussianFieldSampler),
    Grid { grid: IrregularGrid, family: SheetFamily },
}

struct Generator {
    scheme: DiscretizationScheme,
    sampler: Sampler,
    dependence: DependenceFamily,
}

impl Generator {
    fn new(cfg: &McConfig) -> Result<Self> {
        let sheet_family = match cfg.family {
            FieldFamily::Stable { alpha } => Some(SheetFamily::Stable(StableParams::new(alpha, 1.0)?)),
            FieldFamily::Brownian => Some(SheetFamily::Gaussian),
            FieldFamily::Fbs { .. } => None,
        };
        let fbs = match cfg.family {
            FieldFamily::Fbs { hurst } => FbsParams::new(vec![hurst; 2])?,
            _ => FbsParams::brownian(2),
        };
        let (scheme, sampler) = match cfg.scheme {
            SchemeSpec::Lattice { q } => {
                let lattice = LatticeSpec::new(2, q)?;
                let sampler = match sheet_family {
                    Some(family) => Sampler::LatticeSheet { lattice, family },
                    None => Sampler::Dense(GaussianFieldSampler::new(&lattice.sites(), |s, t| fbs.covariance(s, t))?),
                };
                (DiscretizationScheme::Lattice(lattice), sampler)
            }
            SchemeSpec::Random { p } => {
                let mut rng = RngStream::new(cfg.seed, StreamId::new(0, Purpose::Locations));
                let points = sample_poisson_locations(p, 2, &mut rng)?;
                let dense = matches!(cfg.family, FieldFamily::Brownian | FieldFamily::Fbs { .. })
                    && points.count() <= MAX_DENSE_SITES;
                let sampler = if dense {
                    Sampler::Dense(GaussianFieldSampler::new(points.points(), |s, t| fbs.covariance(s, t))?)
                } else {
                    let family = sheet_family.ok_or_else(|| {
                        Error::config(format!(
                            "{} locations exceed the dense Gaussian cap of {MAX_DENSE_SITES}",
                            points.count()
                        ))
                    })?;
                    Sampler::Grid {
                        grid: IrregularGrid::new(&points)?,
                        family,
                    }
                };
                (DiscretizationScheme::Locations(points), sampler)
            }
        };
        Ok(Self {
            scheme,
            sampler,
            dependence: match cfg.family {
                FieldFamily::Stable { alpha } => DependenceFamily::Stable { alpha },
                _ => DependenceFamily::Gaussian,
            },
        })
    }

    fn draw(&self, n: usize, rng: &mut RngStream) -> Result<Vec<FieldRealization>> {
        match &self.sampler {
            Sampler::LatticeSheet { lattice, family } => simulate_increment_sheet_lattice(*family, lattice, n, rng),
            Sampler::Dense(s) => Ok(s.sample_many(n, rng)),
            Sampler::Grid { grid, family } => Ok((0..n).map(|_| grid.sample(*family, rng)).collect()),
        }
    }

    /// The `trial`-th sample of `n` pairs at dependence `rho`.
    fn fields(&self, n: usize, rho: f64, trial: u64, seed: u64) -> Result<(Vec<FieldRealization>, Vec<FieldRealization>)> {
        let stream = |purpose| RngStream::new(seed, StreamId::new(trial, purpose));
        let x = self.draw(n, &mut stream(Purpose::FieldX))?;
        let x_prime = self.draw(n, &mut stream(Purpose::FieldXPrime))?;
        let spec = DependenceSpec::new(rho, self.dependence)?;
        let y = x
            .iter()
            .zip(&x_prime)
            .map(|(a, b)| make_dependent_pair(a, b, &spec))
            .collect::<Result<Vec<_>>>()?;
        Ok((x, y))
    }

    fn sample(&self, n: usize, rho: f64, trial: u64, seed: u64, params: DcovParams) -> Result<(DistanceMatrix, DistanceMatrix)> {
        let (x, y) = self.fields(n, rho, trial, seed)?;
        Ok((
            distance_matrix(&x, &self.scheme, params)?,
            distance_matrix(&y, &self.scheme, params)?,
        ))
    }
}

/// The paired sample an experiment with `cfg` draws for `(n, rho, trial)`,
/// together with its discretization scheme.
pub fn simulate_sample(
    cfg: &McConfig,
    n: usize,
    rho: f64,
    trial: u64,
) -> Result<(DiscretizationScheme, Vec<FieldRealization>, Vec<FieldRealization>)> {
    let generator = Generator::new(cfg)?;
    let (x, y) = generator.fields(n, rho, trial, cfg.seed)?;
    Ok((generator.scheme, x, y))
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct McRecord {
    pub experiment: String,
    pub family: String,
    pub scheme: String,
    pub q_or_p: String,
    pub n: usize,
    pub rho: f64,
    pub xi: Option<f64>,
    pub resamples: Option<usize>,
    pub reps: usize,
    pub trial: usize,
    /// `NaN` when undefined.
    pub statistic: f64,
    pub quantile: f64,
    pub reject: Option<bool>,
}

impl McRecord {
    fn fields(&self) -> [String; 13] {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".to_string());
        [
            self.experiment.clone(),
            self.family.clone(),
            self.scheme.clone(),
            self.q_or_p.clone(),
            self.n.to_string(),
            self.rho.to_string(),
            opt(self.xi.map(|v| v.to_string())),
            opt(self.resamples.map(|v| v.to_string())),
            self.reps.to_string(),
            self.trial.to_string(),
            format_float(self.statistic),
            format_float(self.quantile),
            opt(self.reject.map(|r| u8::from(r).to_string())),
        ]
    }

    fn parse(row: &csv::StringRecord, line: usize, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if row.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", CSV_HEADER.len(), row.len())));
        }
        fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> std::result::Result<Option<T>, String> {
            match &row[i] {
                "NA" => Ok(None),
                s => s.parse().map(Some).map_err(|_| format!("invalid {} value {s:?}", CSV_HEADER[i])),
            }
        }
        let req = |i: usize| -> std::result::Result<usize, String> {
            field::<usize>(row, i)?.ok_or_else(|| format!("{} may not be NA", CSV_HEADER[i]))
        };
        let parsed = (|| -> std::result::Result<Self, String> {
            Ok(Self {
                experiment: row[0].to_string(),
                family: row[1].to_string(),
                scheme: row[2].to_string(),
                q_or_p: row[3].to_string(),
                n: req(4)?,
                rho: field(row, 5)?.ok_or("rho may not be NA")?,
                xi: field(row, 6)?,
                resamples: field(row, 7)?,
                reps: req(8)?,
                trial: req(9)?,
                statistic: field(row, 10)?.unwrap_or(f64::NAN),
                quantile: field(row, 11)?.unwrap_or(f64::NAN),
                reject: field::<u8>(row, 12)?.map(|v| v == 1),
            })
        })();
        parsed.map_err(bad)
    }
}

/// Append-only CSV output that remembers the trials already on disk.
pub struct ResultSink {
    path: PathBuf,
    file: File,
    existing: Vec<McRecord>,
}

impl ResultSink {
    /// Opens `path` for appending, writing the header to a new or empty file
    /// and loading the rows of an existing one.
    pub fn open(path: &Path) -> Result<Self> {
        let mut existing = Vec::new();
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        if !fresh {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
            let header = reader.headers()?.clone();
            if header.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: format!("header does not match {}", CSV_HEADER.join(",")),
                });
            }
            for (i, row) in reader.records().enumerate() {
                existing.push(McRecord::parse(&row?, i + 2, path)?);
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{}", CSV_HEADER.join(","))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            existing,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&mut self, records: &[McRecord]) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in records {
                w.write_record(r.fields())?;
            }
            w.flush()?;
        }
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Writes records as CSV (header included) to any writer.
pub fn write_records<W: Write>(out: W, records: &[McRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Rejection rate of one `(n, rho, xi)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub rho: f64,
    pub xi: f64,
    pub rejections: usize,
    pub trials: usize,
    pub rate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn get(&self, n: usize, rho: f64, xi: f64) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.n == n && r.rho == rho && r.xi == xi)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "rho", "xi", "rejections", "trials", "rate", "se"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.rho.to_string(),
                r.xi.to_string(),
                r.rejections.to_string(),
                r.trials.to_string(),
                format_float(r.rate),
                format_float(r.se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trials of the cell `(n, rho)`: reused from disk when present, otherwise run
/// in chunks and streamed to `sink`.
fn run_cell<F>(
    kind: ExperimentKind,
    cfg: &McConfig,
    n: usize,
    rho: f64,
    sink: &mut Option<&mut ResultSink>,
    evaluate: &F,
) -> Result<Vec<McRecord>>
where
    F: Fn(u64) -> Result<Vec<McRecord>> + Sync,
{
    let mut done: HashMap<usize, Vec<McRecord>> = HashMap::new();
    if let Some(s) = sink.as_deref() {
        let (family, scheme, size) = (cfg.family.label(), cfg.scheme.name(), cfg.scheme.size_label());
        for r in &s.existing {
            if r.experiment == kind.name() && r.n == n && r.rho == rho {
                if r.family != family || r.scheme != scheme || r.q_or_p != size || r.reps != cfg.reps {
                    return Err(Error::config(format!(
                        "{} holds rows of a different experiment ({} {} {}); use a new output file",
                        s.path.display(),
                        r.family,
                        r.scheme,
                        r.q_or_p
                    )));
                }
                done.entry(r.trial).or_default().push(r.clone());
            }
        }
    }
    let mut out = Vec::with_capacity(cfg.reps);
    let todo: Vec<usize> = (0..cfg.reps).filter(|t| !done.contains_key(t)).collect();
    let mut fresh: HashMap<usize, Vec<McRecord>> = HashMap::new();
    for chunk in todo.chunks(CHUNK) {
        let rows = chunk
            .par_iter()
            .map(|&t| {
                evaluate(t as u64).map_err(|e| Error::Replication {
                    replication: t,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(s) = sink.as_deref_mut() {
            s.write(&rows.concat())?;
        }
        fresh.extend(chunk.iter().copied().zip(rows));
    }
    for t in 0..cfg.reps {
        out.extend(done.remove(&t).or_else(|| fresh.remove(&t)).unwrap_or_default());
    }
    Ok(out)
}

fn record(kind: ExperimentKind, cfg: &McConfig, n: usize, rho: f64, trial: u64) -> McRecord {
    McRecord {
        experiment: kind.name().to_string(),
        family: cfg.family.label(),
        scheme: cfg.scheme.name().to_string(),
        q_or_p: cfg.scheme.size_label(),
        n,
        rho,
        xi: None,
        resamples: None,
        reps: cfg.reps,
        trial: trial as usize,
        statistic: f64::NAN,
        quantile: f64::NAN,
        reject: None,
    }
}

/// Per-replication `R_n` values for every `(rho, n)` cell.
pub fn run_boxplot_experiment(cfg: &McConfig, mut sink: Option<&mut ResultSink>) -> Result<Vec<McRecord>> {
    cfg.validate()?;
    let generator = Generator::new(cfg)?;
    let mut all = Vec::new();
    for &rho in &cfg.rhos {
        for &n in &cfg.ns {
            let evaluate = |trial: u64| {
                let (dx, dy) = generator.sample(n, rho, trial, cfg.seed, cfg.params)?;
                let mut rec = record(ExperimentKind::Boxplot, cfg, n, rho, trial);
                rec.statistic = dcor(&dx, &dy).unwrap_or(f64::NAN);
                Ok(vec![rec])
            };
            all.extend(run_cell(ExperimentKind::Boxplot, cfg, n, rho, &mut sink, &evaluate)?);
        }
    }
    Ok(all)
}

/// Rejection-rate experiment with an arbitrary test; `run_size_experiment`
/// and `run_power_experiment` plug in the bootstrap test.
pub fn run_rate_experiment_with<T>(
    kind: ExperimentKind,
    cfg: &McConfig,
    test: T,
    mut sink: Option<&mut ResultSink>,
) -> Result<RateTable>
where
    T: Fn(&DistanceMatrix, &DistanceMatrix, &TestConfig) -> Result<TestResult> + Sync,
{
    cfg.validate()?;
    let generator = Generator::new(cfg)?;
    let levels = cfg.levels();
    let mut table = RateTable::default();
    for &rho in &cfg.rhos {
        for &n in &cfg.ns {
            let evaluate = |trial: u64| {
                let (dx, dy) = generator.sample(n, rho, trial, cfg.seed, cfg.params)?;
                let result = test(&dx, &dy, &cfg.test.with_trial(trial))?;
                Ok(levels
                    .iter()
                    .map(|&xi| {
                        let mut rec = record(kind, cfg, n, rho, trial);
                        rec.xi = Some(xi);
                        rec.resamples = Some(cfg.test.resamples());
                        rec.statistic = result.statistic;
                        if result.undefined || result.bootstrap_values.is_empty() {
                            rec.reject = Some(false);
                        } else {
                            rec.quantile = order_statistic_quantile(&result.bootstrap_values, 1.0 - xi);
                            rec.reject = Some(result.statistic >= rec.quantile);
                        }
                        rec
                    })
                    .collect())
            };
            let records = run_cell(kind, cfg, n, rho, &mut sink, &evaluate)?;
            for &xi in &levels {
                let cell: Vec<&McRecord> = records.iter().filter(|r| r.xi == Some(xi)).collect();
                let rejections = cell.iter().filter(|r| r.reject == Some(true)).count();
                let trials = cell.len();
                let rate = rejections as f64 / trials as f64;
                table.rows.push(RateRow {
                    n,
                    rho,
                    xi,
                    rejections,
                    trials,
                    rate,
                    se: (rate * (1.0 - rate) / trials as f64).sqrt(),
                });
            }
        }
    }
    Ok(table)
}

/// Empirical size under independence; every rho in the grid must be 0.
pub fn run_size_experiment(cfg: &McConfig, sink: Option<&mut ResultSink>) -> Result<RateTable> {
    if cfg.rhos.iter().any(|&r| r != 0.0) {
        return Err(Error::config("size experiments need rho = 0"));
    }
    run_rate_experiment_with(ExperimentKind::Size, cfg, bootstrap_test, sink)
}

/// Empirical power over the rho grid.
pub fn run_power_experiment(cfg: &McConfig, sink: Option<&mut ResultSink>) -> Result<RateTable> {
    run_rate_experiment_with(ExperimentKind::Power, cfg, bootstrap_test, sink)
}

/// `p^gamma E[N^-gamma 1(N > 0)]` for `N ~ Poisson(p)`, summed in log space
/// over `k` in `[max(1, p - 20 sqrt p), p + 20 sqrt p]` and beyond until the
/// terms are negligible.
pub fn poisson_negative_moment_check(p: f64, gamma: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::config(format!("p must be >= 1, got {p}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config(format!("gamma must be positive, got {gamma}")));
    }
    let spread = 20.0 * p.sqrt();
    let lo = (p - spread).floor().max(1.0) as u64;
    let hi = (p + spread).ceil() as u64;
    let ln_p = p.ln();
    // ln k! accumulated up to lo - 1.
    let mut ln_fact: f64 = (1..lo).map(|i| (i as f64).ln()).sum();
    let mut total = 0.0;
    let mut k = lo;
    loop {
        let kf = k as f64;
        ln_fact += kf.ln();
        let term = (gamma * (ln_p - kf.ln()) - p + kf * ln_p - ln_fact).exp();
        total += term;
        if k >= hi && term <= 1e-16 * total {
            break;
        }
        k += 1;
    }
    Ok(total)
}

/// `|lattice_norm(f on the q-lattice)^2 - exact|` for each `q`.
pub fn riemann_convergence_check<F>(f: F, d: usize, exact: f64, qs: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    qs.iter()
        .map(|&q| {
            let lattice = LatticeSpec::new(d, q)?;
            let values: Vec<f64> = lattice.sites().iter().map(|s| f(s)).collect();
            Ok((lattice_norm(&values)?.powi(2) - exact).abs())
        })
        .collect()
}

/// Median of `|R_n|` over boxplot rows with the given `n` and `rho`.
pub fn median_abs_statistic(records: &[McRecord], n: usize, rho: f64) -> Option<f64> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.n == n && r.rho == rho && r.statistic.is_finite())
        .map(|r| r.statistic.abs())
        .collect();
    (!values.is_empty()).then(|| crate::stats::median(&values))
}
