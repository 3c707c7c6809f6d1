//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Randomized experiments run through the `rfdcov` binary so
//! that thread-count reproducibility can be checked on the same outputs.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rfdcov::fields::{
    sample_stable, simulate_fbs_lattice, simulate_increment_sheet_lattice, FbsParams, RngStream, SheetFamily,
    StableParams,
};
use rfdcov::montecarlo::poisson_negative_moment_check;
use rfdcov::stats::{binomial_band, median};
use rfdcov::{
    distance_matrix, empirical_h2, sample_dcov, ustat_dcov, DcovParams, DiscretizationScheme, DistanceMatrix,
    FieldRealization, LatticeSpec,
};

const SEED: u64 = 20_240_601;

type Outcome = (bool, String);
type Step = Box<dyn FnOnce(&mut Context) -> Outcome>;

/// One CLI invocation whose stdout and per-trial file are compared across
/// thread counts.
struct Run {
    label: &'static str,
    args: Vec<String>,
    writes_out: bool,
}

struct Context {
    dir: tempfile::TempDir,
    runs: Vec<Run>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs the binary with `threads` workers and returns (stdout, out file).
    fn exec(&self, run: &Run, threads: usize) -> (String, Vec<u8>) {
        let out = self.path(&format!("{}-t{threads}.csv", run.label));
        let _ = std::fs::remove_file(&out);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rfdcov"));
        cmd.args(["--threads", &threads.to_string()]).args(&run.args);
        if run.writes_out {
            cmd.arg("--out").arg(&out);
        }
        let output = cmd.output().expect("spawn rfdcov");
        assert!(
            output.status.success(),
            "rfdcov {:?} failed: {}",
            run.args,
            String::from_utf8_lossy(&output.stderr)
        );
        let file = if run.writes_out { std::fs::read(&out).expect("read output") } else { Vec::new() };
        (String::from_utf8(output.stdout).expect("utf8 stdout"), file)
    }

    /// Registers and executes a run single-threaded.
    fn run(&mut self, label: &'static str, args: &[&str], writes_out: bool) -> (String, Vec<u8>) {
        let run = Run {
            label,
            args: args.iter().map(|s| s.to_string()).collect(),
            writes_out,
        };
        let result = self.exec(&run, 1);
        self.runs.push(run);
        result
    }
}

fn seed_arg() -> String {
    SEED.to_string()
}

/// Rejection rate from the single data row of an `mc-size`/`mc-power` table.
fn single_rate(table: &str) -> (f64, usize, usize) {
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    let row: Vec<&str> = lines.next().expect("row").split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).expect(name)];
    (col("rate").parse().unwrap(), col("rejections").parse().unwrap(), col("trials").parse().unwrap())
}

fn lattice_fields(q: usize, n: usize, rng: &mut RngStream) -> (DiscretizationScheme, Vec<FieldRealization>) {
    let lattice = LatticeSpec::new(2, q).unwrap();
    let fields = simulate_increment_sheet_lattice(SheetFamily::Gaussian, &lattice, n, rng).unwrap();
    (DiscretizationScheme::Lattice(lattice), fields)
}

fn random_matrix(n: usize, rng: &mut RngStream) -> DistanceMatrix {
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let mut entries = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            entries[k * n + l] = points[k].iter().zip(&points[l]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        }
    }
    DistanceMatrix::from_row_major(n, entries).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.total + v;
        if self.total.abs() >= v.abs() {
            self.carry += (self.total - t) + v;
        } else {
            self.carry += (v - t) + self.total;
        }
        self.total = t;
    }

    fn value(&self) -> f64 {
        self.total + self.carry
    }
}

fn naive_vstat(a: &DistanceMatrix, b: &DistanceMatrix) -> f64 {
    let n = a.n();
    let nf = n as f64;
    let (mut s1, mut sa, mut sb, mut s3) = (Sum::default(), Sum::default(), Sum::default(), Sum::default());
    for i in 0..n {
        for j in 0..n {
            s1.add(a.get(i, j) * b.get(i, j));
            sa.add(a.get(i, j));
            sb.add(b.get(i, j));
            for k in 0..n {
                s3.add(a.get(i, j) * b.get(i, k));
            }
        }
    }
    s1.value() / (nf * nf) + (sa.value() / (nf * nf)) * (sb.value() / (nf * nf)) - 2.0 * s3.value() / (nf * nf * nf)
}

fn kernel_f(a: &DistanceMatrix, b: &DistanceMatrix, t: [usize; 4]) -> f64 {
    let [i1, i2, i3, i4] = t;
    a.get(i1, i2) * b.get(i1, i2) + a.get(i1, i2) * b.get(i3, i4) - 2.0 * a.get(i1, i2) * b.get(i1, i3)
}

const PERMS: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

fn kernel_h(a: &DistanceMatrix, b: &DistanceMatrix, t: [usize; 4]) -> f64 {
    PERMS.iter().map(|p| kernel_f(a, b, [t[p[0]], t[p[1]], t[p[2]], t[p[3]]])).sum::<f64>() / 24.0
}

fn criterion_1() -> Outcome {
    let mut rng = RngStream::from_seed(SEED ^ 1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=50);
        let a = random_matrix(n, &mut rng);
        let b = random_matrix(n, &mut rng);
        worst = worst.max(rel_err(sample_dcov(&a, &b).unwrap().t_xy, naive_vstat(&a, &b)));
    }
    let secs = start.elapsed().as_secs_f64();
    (worst <= 1e-12 && secs < 5.0, format!("max rel err {worst:.2e}, {secs:.2}s"))
}

fn criterion_2() -> Outcome {
    let mut rng = RngStream::from_seed(SEED ^ 2);
    let mut worst: f64 = 0.0;
    for n in 4..=12 {
        let a = random_matrix(n, &mut rng);
        let b = random_matrix(n, &mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    for i4 in 0..n {
                        let t = [i1, i2, i3, i4];
                        let distinct = (0..4).all(|x| (x + 1..4).all(|y| t[x] != t[y]));
                        if distinct {
                            total += kernel_f(&a, &b, t);
                            count += 1;
                        }
                    }
                }
            }
        }
        worst = worst.max(rel_err(ustat_dcov(&a, &b).unwrap(), total / count as f64));
    }
    (worst <= 1e-10, format!("max rel err {worst:.2e} over n = 4..12"))
}

fn criterion_3() -> Outcome {
    let mut rng = RngStream::from_seed(SEED ^ 3);
    let (mut worst, mut residual_ok) = (0.0f64, true);
    for n in 2..=6 {
        let a = random_matrix(n, &mut rng);
        let b = random_matrix(n, &mut rng);
        let nf = n as f64;
        let mut g = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for i3 in 0..n {
                    for i4 in 0..n {
                        s += kernel_h(&a, &b, [k, l, i3, i4]);
                    }
                }
                g[k * n + l] = s / (nf * nf);
            }
        }
        let g1: Vec<f64> = (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i2 in 0..n {
                    for i3 in 0..n {
                        for i4 in 0..n {
                            s += kernel_h(&a, &b, [k, i2, i3, i4]);
                        }
                    }
                }
                s / nf.powi(3)
            })
            .collect();
        let g0 = g1.iter().sum::<f64>() / nf;
        let h2 = empirical_h2(&a, &b).unwrap();
        for k in 0..n {
            for l in 0..n {
                let brute = g[k * n + l] - g1[k] - g1[l] + g0;
                worst = worst.max((h2.get(k, l) - brute).abs());
            }
        }
        residual_ok &= h2.centering_residual() <= 1e-9 * nf * h2.max_abs().max(f64::MIN_POSITIVE);
    }
    (worst <= 1e-10 && residual_ok, format!("max abs err {worst:.2e}, centering ok: {residual_ok}"))
}

fn rate_in(rate: (f64, usize, usize), lo: f64, hi: f64) -> Outcome {
    let (r, k, m) = rate;
    ((lo..=hi).contains(&r), format!("rate {r:.3} ({k}/{m}), band [{lo}, {hi}]"))
}

fn criterion_4(ctx: &mut Context) -> Outcome {
    let seed = seed_arg();
    let args = ["mc-size", "--q", "30", "--n", "100", "--M", "200", "--B", "200", "--xi", "0.05", "--seed", &seed];
    let (stdout, _) = ctx.run("size-lattice", &args, true);
    rate_in(single_rate(&stdout), 0.02, 0.09)
}

fn criterion_5(ctx: &mut Context) -> Outcome {
    let seed = seed_arg();
    let args = ["mc-power", "--q", "30", "--n", "100", "--rho", "0.5", "--M", "100", "--B", "200", "--seed", &seed];
    let (stdout, _) = ctx.run("power-lattice", &args, true);
    let (r, k, m) = single_rate(&stdout);
    (r >= 0.95, format!("rate {r:.3} ({k}/{m}), need >= 0.95"))
}

fn criterion_6(ctx: &mut Context) -> Outcome {
    let seed = seed_arg();
    let args = [
        "mc-size", "--family", "stable", "--alpha", "1.8", "--q", "30", "--n", "100", "--M", "200", "--B", "200",
        "--seed", &seed,
    ];
    let (stdout, _) = ctx.run("size-stable", &args, true);
    rate_in(single_rate(&stdout), 0.01, 0.08)
}

fn criterion_7(ctx: &mut Context) -> Outcome {
    let seed = seed_arg();
    let args = [
        "mc-size", "--scheme", "random", "--p", "300", "--n", "100", "--M", "200", "--B", "200", "--seed", &seed,
    ];
    let (stdout, _) = ctx.run("size-random", &args, true);
    rate_in(single_rate(&stdout), 0.02, 0.09)
}

/// Median |statistic| per sample size from a per-trial CSV.
fn medians(csv: &[u8], sizes: &[usize]) -> Vec<f64> {
    let text = std::str::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let n_col = header.iter().position(|h| *h == "n").unwrap();
    let s_col = header.iter().position(|h| *h == "statistic").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    sizes
        .iter()
        .map(|&n| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r[n_col].parse::<usize>().unwrap() == n)
                .filter_map(|r| r[s_col].parse::<f64>().ok())
                .map(f64::abs)
                .collect();
            median(&values)
        })
        .collect()
}

fn criterion_8(ctx: &mut Context) -> Outcome {
    let seed = seed_arg();
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, scheme) in [("boxplot-lattice", ["--scheme", "lattice"]), ("boxplot-random", ["--scheme", "random"])] {
        let mut args = vec!["mc-boxplot", "--n", "100,300", "--M", "100", "--seed", &seed];
        args.extend(scheme);
        let (_, file) = ctx.run(label, &args, true);
        let m = medians(&file, &[100, 300]);
        pass &= m[1] < m[0];
        detail.push(format!("{}: {:.4} -> {:.4}", scheme[1], m[0], m[1]));
    }
    (pass, format!("median |R| n=100 -> n=300, {}", detail.join("; ")))
}

fn criterion_9() -> Outcome {
    let mut rng = RngStream::from_seed(SEED ^ 9);
    let params = FbsParams::new(vec![0.3, 0.7]).unwrap();
    let lattice = LatticeSpec::new(2, 10).unwrap();
    let draws = 5000;
    let fields = simulate_fbs_lattice(&params, &lattice, draws, &mut rng).unwrap();
    let pairs = [(0, 0), (11, 55), (9, 90), (44, 45), (99, 37)];
    let mut worst_z: f64 = 0.0;
    for (s, t) in pairs {
        let products: Vec<f64> = fields.iter().map(|f| f.values()[s] * f.values()[t]).collect();
        let mean = products.iter().sum::<f64>() / draws as f64;
        let var = products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let exact = params.covariance(&lattice.site(s), &lattice.site(t));
        worst_z = worst_z.max((mean - exact).abs() / (var / draws as f64).sqrt());
    }

    let stable = StableParams::new(1.8, 1.0).unwrap();
    let samples: Vec<f64> = (0..100_000).map(|_| sample_stable(stable, &mut rng)).collect();
    let mut worst_cf: f64 = 0.0;
    for u in [0.5f64, 1.0, 2.0] {
        let cos: Vec<f64> = samples.iter().map(|x| (u * x).cos()).collect();
        let m = cos.len() as f64;
        let mean = cos.iter().sum::<f64>() / m;
        let var = cos.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let exact = (-u.abs().powf(1.8)).exp();
        worst_cf = worst_cf.max((mean - exact).abs() / (var / m).sqrt());
    }
    (
        worst_z <= 3.0 && worst_cf <= 3.0,
        format!("fBs covariance max |z| {worst_z:.2}, stable cf max |z| {worst_cf:.2}"),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let values: Vec<(f64, f64)> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&g| (g, poisson_negative_moment_check(1000.0, g).unwrap()))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = values.iter().all(|(_, v)| (v - 1.0).abs() <= 0.01) && secs < 1.0;
    let shown: Vec<String> = values.iter().map(|(g, v)| format!("gamma {g}: {v:.5}")).collect();
    (pass, format!("{}, {secs:.3}s", shown.join(", ")))
}

fn criterion_11() -> Outcome {
    let mut rng = RngStream::from_seed(SEED ^ 11);
    let params = DcovParams::new(1.0).unwrap();
    let n = 500;
    let (scheme, x) = lattice_fields(30, n, &mut rng);
    let (_, y) = lattice_fields(30, n, &mut rng);
    let dx = distance_matrix(&x, &scheme, params).unwrap();
    let dy = distance_matrix(&y, &scheme, params).unwrap();
    let gap = n as f64 * (sample_dcov(&dx, &dy).unwrap().t_xy - ustat_dcov(&dx, &dy).unwrap());

    let mean_distance = |rng: &mut RngStream| {
        let pairs = 10_000;
        let (_, a) = lattice_fields(30, pairs, rng);
        let (_, b) = lattice_fields(30, pairs, rng);
        let total: f64 = a
            .iter()
            .zip(&b)
            .map(|(u, v)| {
                let diff: Vec<f64> = u.values().iter().zip(v.values()).map(|(p, q)| p - q).collect();
                scheme.norm(&diff).unwrap()
            })
            .sum();
        total / pairs as f64
    };
    let ex = mean_distance(&mut rng);
    let ey = mean_distance(&mut rng);
    let target = ex * ey;
    let rel = (gap - target).abs() / target;
    (rel <= 0.10, format!("n(T - U) = {gap:.4}, E|X-X'| E|Y-Y'| = {target:.4}, rel {rel:.3}"))
}

fn station_rejections(stdout: &str) -> (usize, usize) {
    let mut lines = stdout.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "reject").unwrap();
    let rows: Vec<usize> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    (rows.iter().sum(), rows.len())
}

fn criterion_12(ctx: &mut Context) -> Outcome {
    let seed = seed_arg();
    let common = [
        "stations", "--synthetic-stations", "100", "--synthetic-months", "480", "--synthetic-panels", "50", "--B",
        "200", "--seed", &seed,
    ];
    let mut null_args = common.to_vec();
    null_args.extend(["--synthetic-rho", "0"]);
    let (null_out, _) = ctx.run("stations-null", &null_args, false);
    let (k, panels) = station_rejections(&null_out);
    let (lo, hi) = binomial_band(50, 0.05, 0.995);

    let mut same_args = common.to_vec();
    same_args.extend(["--synthetic-rho", "1"]);
    let (same_out, _) = ctx.run("stations-identical", &same_args, false);
    let (k_same, panels_same) = station_rejections(&same_out);

    let pass = panels == 50 && (lo..=hi).contains(&k) && panels_same == 50 && k_same == 50;
    (
        pass,
        format!("independent: {k}/{panels} rejected, band [{lo}, {hi}]; y = x: {k_same}/{panels_same} rejected"),
    )
}

fn criterion_13(ctx: &Context) -> Outcome {
    let threads = 3;
    let mut mismatched = Vec::new();
    for run in &ctx.runs {
        let single = ctx.exec(run, 1);
        let multi = ctx.exec(run, threads);
        if single != multi {
            mismatched.push(run.label);
        }
    }
    (
        mismatched.is_empty() && !ctx.runs.is_empty(),
        format!("{} runs compared at 1 vs {threads} threads, mismatched: {mismatched:?}", ctx.runs.len()),
    )
}

fn guarded<F: FnOnce() -> Outcome>(f: F) -> Outcome {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    })
}

fn main() {
    // Honour `cargo test -- --list` and name filters used by other targets.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }

    let mut ctx = Context {
        dir: tempfile::tempdir().expect("temp dir"),
        runs: Vec::new(),
    };
    assert!(Path::new(env!("CARGO_BIN_EXE_rfdcov")).exists());

    let mut failed = 0;
    let mut report = |id: usize, outcome: Outcome, secs: f64| {
        let (pass, detail) = outcome;
        if !pass {
            failed += 1;
        }
        println!("criterion {id:>2} {}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
    };

    let steps: Vec<(usize, Step)> = vec![
        (1, Box::new(|_| criterion_1())),
        (2, Box::new(|_| criterion_2())),
        (3, Box::new(|_| criterion_3())),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(criterion_8)),
        (9, Box::new(|_| criterion_9())),
        (10, Box::new(|_| criterion_10())),
        (11, Box::new(|_| criterion_11())),
        (12, Box::new(criterion_12)),
        (13, Box::new(|c: &mut Context| criterion_13(c))),
    ];
    for (id, step) in steps {
        let start = Instant::now();
        let outcome = guarded(|| step(&mut ctx));
        report(id, outcome, start.elapsed().as_secs_f64());
    }

    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
