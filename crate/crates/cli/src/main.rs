//! Command-line front end: solvers, envelope assembly, attractor clouds,
//! twist/crossing/turning diagnostics, the dual layer, discount sweeps and
//! the scenario presets.
//!
//! Exit codes: 0 ok, 1 usage error, 2 numerical failure, 3 scenario mismatch.

mod scenarios;
mod svg;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fatlab::attractor::{iterate_f, upper_boundary, IterateParams};
use fatlab::potentials::Potential;
use fatlab::quadratic::{explicit_symmetric_subaction, QuadraticSpec, SymmetricSubaction};
use fatlab::series::{
    candidates, crossing_point, envelope, s_deriv, s_value, s_value_fixed_depth, validate_envelope,
    Envelope, EnvelopeValidation,
};
use fatlab::solver::{
    empirical_measure, lambda_sweep, realizer, solve_subaction, turning_points, OrbitReport,
    SolveReport, SweepRow,
};
use fatlab::symbolic::SymbolSeq;
use fatlab::transport::{DualEval, PlanOrbit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "fatlab",
    version,
    about = "Discounted ergodic optimization laboratory"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the discounted Bellman fixed point and export the subaction.
    Solve(CommonArgs),
    /// Assemble the upper envelope of symbolic series curves.
    Envelope(CommonArgs),
    /// Iterate the skew product and bin the cloud's upper boundary.
    Attractor(CommonArgs),
    /// Twist diagnostics: quadratic predicate plus a Δ′ sign scan.
    Twist(CommonArgs),
    /// Crossing points for all candidate pairs, with closed forms when quadratic.
    Crossings(CommonArgs),
    /// Turning points: zeros of the branch gap function.
    Turning(CommonArgs),
    /// Dual layer: A*, b*, admissibility gap, fundamental relation, plan orbit.
    Dual(CommonArgs),
    /// Discount sweep tabulating (1-lambda)·max b.
    Sweep {
        /// Comma-separated list of discounts.
        #[arg(long, default_value = "0.3,0.5,0.7,0.9,0.99")]
        lambdas: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a named preset end-to-end and diff it against its expected structure.
    Scenario {
        /// One of: quad_sym, quad_eps, tent, cosine, quad_drift, sine.
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Bundle solve, envelope, quadratic and transport results into one JSON.
    Report(CommonArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Discount factor in (0,1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Branch count of T(x) = d·x mod 1.
    #[arg(long)]
    d: Option<usize>,
    /// Potential spec: poly:c0,c1,c2 | quad_sym | tent | cosine | sine |
    /// quad_eps:eps,drift | quad_drift | table:<csv path>.
    #[arg(long)]
    potential: Option<String>,
    /// Grid size for the solver and envelope scans.
    #[arg(long)]
    grid: Option<usize>,
    /// Solver / series tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Fixed series truncation depth (0 = adaptive with tail closure).
    #[arg(long)]
    depth: Option<usize>,
    /// Longest candidate period.
    #[arg(long = "period-max")]
    period_max: Option<usize>,
    /// Longest candidate preperiod.
    #[arg(long = "preperiod-max")]
    preperiod_max: Option<usize>,
    /// Total forward iterations for the attractor cloud.
    #[arg(long)]
    iters: Option<usize>,
    /// Discarded leading points per orbit.
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    /// Bins for the cloud's upper boundary.
    #[arg(long)]
    bins: Option<usize>,
    /// Seed for orbit restarts and sampled diagnostics.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of restarted orbits for the cloud.
    #[arg(long)]
    orbits: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout summary format: csv (plain lines) or json.
    #[arg(long)]
    format: Option<String>,
    /// Also render an SVG per artifact.
    #[arg(long)]
    svg: bool,
    /// Thread cap for data-parallel sections (0 = rayon default).
    #[arg(long)]
    jobs: Option<usize>,
    /// key=value config file; flags override config values.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Settings {
    lambda: f64,
    d: usize,
    potential: String,
    grid: usize,
    tol: f64,
    depth: usize,
    period_max: usize,
    preperiod_max: usize,
    iters: usize,
    burn_in: usize,
    bins: usize,
    seed: u64,
    orbits: usize,
    out: PathBuf,
    json_stdout: bool,
    svg: bool,
    jobs: usize,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Mismatch(m) => m,
        }
    }
}

impl From<fatlab::Error> for Failure {
    fn from(e: fatlab::Error) -> Self {
        match e {
            fatlab::Error::Parse(_)
            | fatlab::Error::InvalidParameter(_)
            | fatlab::Error::DigitOutOfRange { .. }
            | fatlab::Error::Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("io: {e}"))
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    if let Err(failure) = dispatch(cli) {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.code());
    }
}

fn parse_config(path: &Path) -> Result<HashMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

impl Settings {
    fn resolve(args: &CommonArgs) -> Result<Settings, Failure> {
        let cfg = match &args.config {
            Some(path) => parse_config(path)?,
            None => HashMap::new(),
        };
        fn pick<T: std::str::FromStr>(
            flag: Option<T>,
            cfg: &HashMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T, Failure> {
            if let Some(v) = flag {
                return Ok(v);
            }
            match cfg.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Failure::Usage(format!("config {key}: bad value {raw:?}"))),
                None => Ok(default),
            }
        }
        let format = pick(args.format.clone(), &cfg, "format", "csv".to_string())?;
        if format != "csv" && format != "json" {
            return Err(Failure::Usage(format!(
                "--format must be csv or json, got {format:?}"
            )));
        }
        let s = Settings {
            lambda: pick(args.lambda, &cfg, "lambda", 0.51)?,
            d: pick(args.d, &cfg, "d", 2)?,
            potential: pick(args.potential.clone(), &cfg, "potential", "quad_sym".into())?,
            grid: pick(args.grid, &cfg, "grid", 4096)?,
            tol: pick(args.tol, &cfg, "tol", 1e-9)?,
            depth: pick(args.depth, &cfg, "depth", 0)?,
            period_max: pick(args.period_max, &cfg, "period_max", 3)?,
            preperiod_max: pick(args.preperiod_max, &cfg, "preperiod_max", 2)?,
            iters: pick(args.iters, &cfg, "iters", 4000)?,
            burn_in: pick(args.burn_in, &cfg, "burn_in", 100)?,
            bins: pick(args.bins, &cfg, "bins", 64)?,
            seed: pick(args.seed, &cfg, "seed", 0)?,
            orbits: pick(args.orbits, &cfg, "orbits", 1)?,
            out: pick(args.out.clone(), &cfg, "out", PathBuf::from("out"))?,
            json_stdout: format == "json",
            svg: args.svg || cfg.get("svg").map(|v| v == "true").unwrap_or(false),
            jobs: pick(args.jobs, &cfg, "jobs", 0)?,
        };
        if !(0.0 < s.lambda && s.lambda < 1.0) {
            return Err(Failure::Usage(format!(
                "--lambda must lie in (0,1), got {}",
                s.lambda
            )));
        }
        if s.d < 2 {
            return Err(Failure::Usage(format!(
                "--d must be at least 2, got {}",
                s.d
            )));
        }
        if s.grid < 2 {
            return Err(Failure::Usage("--grid must be at least 2".into()));
        }
        Ok(s)
    }

    fn potential(&self) -> Result<Potential, Failure> {
        Potential::from_spec(&self.potential).map_err(|e| Failure::Usage(e.to_string()))
    }

    fn candidates(&self) -> Vec<SymbolSeq> {
        candidates(self.d, self.period_max, self.preperiod_max)
    }

    fn outdir(&self) -> Result<&Path, Failure> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }

    fn eval_series(&self, pot: &Potential, x: f64, a: &SymbolSeq) -> f64 {
        if self.depth > 0 {
            s_value_fixed_depth(pot, self.lambda, x, a, self.depth).value
        } else {
            s_value(pot, self.lambda, x, a, 1e-12 * (1.0 + pot.sup_abs())).value
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let common = match &cli.cmd {
        Cmd::Solve(c)
        | Cmd::Envelope(c)
        | Cmd::Attractor(c)
        | Cmd::Twist(c)
        | Cmd::Crossings(c)
        | Cmd::Turning(c)
        | Cmd::Dual(c)
        | Cmd::Report(c) => c,
        Cmd::Sweep { common, .. } | Cmd::Scenario { common, .. } => common,
    };
    let settings = Settings::resolve(common)?;
    if settings.jobs > 0 {
        // Build the global pool once; later calls inherit the cap.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.jobs)
            .build_global();
    }
    match cli.cmd {
        Cmd::Solve(_) => cmd_solve(&settings),
        Cmd::Envelope(_) => cmd_envelope(&settings),
        Cmd::Attractor(_) => cmd_attractor(&settings),
        Cmd::Twist(_) => cmd_twist(&settings),
        Cmd::Crossings(_) => cmd_crossings(&settings),
        Cmd::Turning(_) => cmd_turning(&settings),
        Cmd::Dual(_) => cmd_dual(&settings),
        Cmd::Sweep { lambdas, .. } => cmd_sweep(&settings, &lambdas),
        Cmd::Scenario { name, common } => {
            let overrides = (common.lambda, common.period_max, common.preperiod_max);
            cmd_scenario(&settings, &name, overrides)
        }
        Cmd::Report(_) => cmd_report(&settings),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Numerical(format!("serialize {name}: {e}")))?;
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

#[derive(Serialize)]
struct SolveJson {
    lambda: f64,
    potential: String,
    n: usize,
    iterations: usize,
    residual: f64,
    max_b: f64,
    turning_points: Vec<f64>,
    turning_degenerate: bool,
    orbit: Option<OrbitReport>,
}

fn solve_with_diagnostics(
    settings: &Settings,
    pot: &Potential,
) -> Result<(SolveReport, SolveJson), Failure> {
    let rep = solve_subaction(
        pot,
        settings.lambda,
        settings.d,
        settings.grid,
        settings.tol,
    )?;
    let (points, degenerate) = if settings.d == 2 {
        let tp = turning_points(&rep.b, pot, settings.lambda, 1e-9 * (1.0 + pot.sup_abs()));
        (tp.points, tp.degenerate)
    } else {
        (Vec::new(), false)
    };
    let em = empirical_measure(&rep.b, pot, settings.lambda, settings.d, 0.77, 2000);
    let json = SolveJson {
        lambda: settings.lambda,
        potential: pot.name().to_string(),
        n: settings.grid,
        iterations: rep.iterations,
        residual: rep.final_residual,
        max_b: rep.b.max(),
        turning_points: points,
        turning_degenerate: degenerate,
        orbit: em.orbit,
    };
    Ok((rep, json))
}

fn cmd_solve(settings: &Settings) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let (rep, json) = solve_with_diagnostics(settings, &pot)?;
    let dir = settings.outdir()?;

    let mut csv = String::from("x,b\n");
    for j in 0..rep.b.n() {
        csv.push_str(&format!("{},{}\n", rep.b.node_x(j), rep.b.values()[j]));
    }
    std::fs::write(dir.join("b.csv"), csv)?;
    write_json(dir, "solve_report.json", &json)?;

    if settings.svg {
        let pts: Vec<(f64, f64)> = (0..rep.b.n())
            .map(|j| (rep.b.node_x(j), rep.b.values()[j]))
            .collect();
        let mut svg = svg::Svg::new((0.0, 1.0), (rep.b.min(), rep.b.max()));
        svg.polyline(&pts, "#1f77b4", 1.4);
        svg.save(&dir.join("b.svg"))?;
    }
    if settings.json_stdout {
        print_json(&json);
    } else {
        println!(
            "solved {} at lambda {}: {} nodes, {} iterations, residual {:.3e}, max b {:.9}",
            json.potential, json.lambda, json.n, json.iterations, json.residual, json.max_b
        );
    }
    Ok(())
}

fn build_envelope(settings: &Settings, pot: &Potential) -> Result<Envelope, Failure> {
    let cands = settings.candidates();
    if settings.depth == 0 {
        return Ok(envelope(
            pot,
            settings.lambda,
            &cands,
            settings.grid.min(4096),
        )?);
    }
    // Fixed-depth compatibility mode: pointwise argmax of truncated sums,
    // switch points at grid resolution.
    let n = settings.grid.min(4096);
    let mut cands = cands;
    cands.sort();
    let tie = 1e-12 * (1.0 + pot.sup_abs());
    let rows: Vec<Vec<f64>> = cands
        .iter()
        .map(|a| {
            (0..=n)
                .map(|j| {
                    s_value_fixed_depth(
                        pot,
                        settings.lambda,
                        j as f64 / n as f64,
                        a,
                        settings.depth,
                    )
                    .value
                })
                .collect()
        })
        .collect();
    let mut pieces = Vec::new();
    let mut switches = Vec::new();
    let arg = |j: usize| -> usize {
        let vmax = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        rows.iter().rposition(|r| r[j] >= vmax - tie).unwrap()
    };
    let mut prev = arg(0);
    for j in 1..=n {
        let a = arg(j);
        if a != prev {
            let sw = (j as f64 - 0.5) / n as f64;
            pieces.push(fatlab::EnvelopePiece {
                seq: cands[prev].clone(),
                l: switches.last().copied().unwrap_or(0.0),
                r: sw,
            });
            switches.push(sw);
            prev = a;
        }
    }
    pieces.push(fatlab::EnvelopePiece {
        seq: cands[prev].clone(),
        l: switches.last().copied().unwrap_or(0.0),
        r: 1.0,
    });
    Ok(Envelope {
        pieces,
        switch_points: switches,
    })
}

fn cmd_envelope(settings: &Settings) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let env = build_envelope(settings, &pot)?;
    let dir = settings.outdir()?;

    let n = settings.grid.min(4096);
    let mut csv = String::from("x,b,piece_index\n");
    let mut curve = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let x = j as f64 / n as f64;
        let idx = env.piece_index(x);
        let v = settings.eval_series(&pot, x, &env.pieces[idx].seq);
        curve.push((x, v));
        csv.push_str(&format!("{x},{v},{idx}\n"));
    }
    std::fs::write(dir.join("envelope.csv"), csv)?;
    write_json(dir, "pieces.json", &env.pieces)?;
    write_json(dir, "switches.json", &env.switch_points)?;

    if settings.svg {
        let ymin = curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mut svg = svg::Svg::new((0.0, 1.0), (ymin, ymax));
        svg.polyline(&curve, "#d62728", 1.4);
        for &sw in &env.switch_points {
            svg.vline(sw, "#888");
        }
        svg.save(&dir.join("envelope.svg"))?;
    }
    if settings.json_stdout {
        print_json(&env);
    } else {
        let seqs: Vec<String> = env.pieces.iter().map(|p| p.seq.to_string()).collect();
        println!(
            "envelope of {} candidates: {} pieces [{}], switches {:?}",
            settings.candidates().len(),
            env.pieces.len(),
            seqs.join(", "),
            env.switch_points
        );
    }
    Ok(())
}

fn cmd_attractor(settings: &Settings) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let cloud = iterate_f(
        &pot,
        settings.lambda,
        settings.d,
        IterateParams {
            n: settings.iters,
            burn: settings.burn_in,
            orbits: settings.orbits,
            seed: settings.seed,
            ..Default::default()
        },
    )?;
    let bins = upper_boundary(&cloud, settings.bins)?;
    let dir = settings.outdir()?;

    let mut csv = String::from("x,s\n");
    for &(x, s) in &cloud.points {
        csv.push_str(&format!("{x},{s}\n"));
    }
    std::fs::write(dir.join("cloud.csv"), csv)?;

    let mut bcsv = String::from("x,smax,count\n");
    for b in &bins {
        match b.smax {
            Some(s) => bcsv.push_str(&format!("{},{},{}\n", b.x_center, s, b.count)),
            None => bcsv.push_str(&format!("{},,0\n", b.x_center)),
        }
    }
    std::fs::write(dir.join("boundary.csv"), bcsv)?;

    if settings.svg {
        let smin = cloud
            .points
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min);
        let smax = cloud
            .points
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut svg = svg::Svg::new((0.0, 1.0), (smin, smax));
        svg.dots(&cloud.points, "#7f7f7f", 0.8);
        let boundary: Vec<(f64, f64)> = bins
            .iter()
            .filter_map(|b| b.smax.map(|s| (b.x_center, s)))
            .collect();
        svg.polyline(&boundary, "#d62728", 1.4);
        svg.save(&dir.join("attractor.svg"))?;
    }
    if settings.json_stdout {
        #[derive(Serialize)]
        struct AttractorJson<'a> {
            lambda: f64,
            potential: &'a str,
            points: usize,
            max_abs_s: f64,
            bins: usize,
            empty_bins: usize,
        }
        print_json(&AttractorJson {
            lambda: settings.lambda,
            potential: pot.name(),
            points: cloud.points.len(),
            max_abs_s: cloud.max_abs_s,
            bins: settings.bins,
            empty_bins: bins.iter().filter(|b| b.count == 0).count(),
        });
    } else {
        println!(
            "cloud: {} points ({} orbits, seed {}), |s| <= {:.6}; boundary over {} bins ({} empty)",
            cloud.points.len(),
            settings.orbits,
            settings.seed,
            cloud.max_abs_s,
            settings.bins,
            bins.iter().filter(|b| b.count == 0).count()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TwistViolation {
    a: String,
    b: String,
    x: f64,
    dprime: f64,
}

#[derive(Serialize)]
struct TwistJson {
    quadratic_predicate: Option<bool>,
    pairs_checked: usize,
    x_samples: usize,
    violation_count: usize,
    violations: Vec<TwistViolation>,
}

fn quad_spec(pot: &Potential, lambda: f64) -> Option<QuadraticSpec> {
    let c = pot.poly_coeffs()?;
    if c.len() > 3 || c.is_empty() {
        return None;
    }
    QuadraticSpec::new(
        c.first().copied().unwrap_or(0.0),
        c.get(1).copied().unwrap_or(0.0),
        c.get(2).copied().unwrap_or(0.0),
        lambda,
        2,
    )
    .ok()
}

fn cmd_twist(settings: &Settings) -> Result<(), Failure> {
    if settings.d != 2 {
        return Err(Failure::Usage("twist diagnostics require d = 2".into()));
    }
    let pot = settings.potential()?;
    let fam = settings.candidates();
    let samples = 25usize;
    let mut violations = Vec::new();
    let mut pairs = 0usize;
    for i in 0..fam.len() {
        for j in 0..i {
            pairs += 1;
            for k in 0..samples {
                let x = (k as f64 + 0.5) / samples as f64;
                let da = s_deriv(&pot, settings.lambda, x, &fam[i], 1e-10)?;
                let db = s_deriv(&pot, settings.lambda, x, &fam[j], 1e-10)?;
                // fam is lex-sorted, so fam[i] > fam[j]; twist demands Δ′ < 0.
                if da - db >= 0.0 && violations.len() < 100 {
                    violations.push(TwistViolation {
                        a: fam[i].to_string(),
                        b: fam[j].to_string(),
                        x,
                        dprime: da - db,
                    });
                }
            }
        }
    }
    let json = TwistJson {
        quadratic_predicate: quad_spec(&pot, settings.lambda).map(|q| q.twist_predicate()),
        pairs_checked: pairs,
        x_samples: samples,
        violation_count: violations.len(),
        violations,
    };
    let dir = settings.outdir()?;
    write_json(dir, "twist.json", &json)?;
    if settings.json_stdout {
        print_json(&json);
    } else {
        println!(
            "twist: quadratic predicate {:?}, scan over {} pairs x {} samples found {} violations",
            json.quadratic_predicate, json.pairs_checked, json.x_samples, json.violation_count
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CrossingJson {
    a: String,
    b: String,
    x: f64,
    closed_form: Option<f64>,
    closed_inside: Option<bool>,
}

fn cmd_crossings(settings: &Settings) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let fam = settings.candidates();
    let q = quad_spec(&pot, settings.lambda);
    let scan = 512usize;
    let mut out = Vec::new();
    for i in 0..fam.len() {
        for j in 0..i {
            let (a, b) = (&fam[i], &fam[j]);
            // Bracket by scanning Delta for a sign change on (0,1).
            let dv = |x: f64| {
                s_value(&pot, settings.lambda, x, a, 1e-12).value
                    - s_value(&pot, settings.lambda, x, b, 1e-12).value
            };
            let mut bracket = None;
            let mut prev = dv(1e-9);
            for k in 1..=scan {
                let x = (k as f64 / scan as f64).min(1.0 - 1e-9);
                let cur = dv(x);
                if prev != 0.0 && cur != 0.0 && prev.signum() != cur.signum() {
                    bracket = Some(((k - 1) as f64 / scan as f64, x));
                    break;
                }
                if cur != 0.0 {
                    prev = cur;
                }
            }
            if let Some(br) = bracket {
                let x = crossing_point(&pot, settings.lambda, a, b, br)?;
                let closed = q.and_then(|q| q.closed_crossing(a, b).ok());
                out.push(CrossingJson {
                    a: a.to_string(),
                    b: b.to_string(),
                    x,
                    closed_form: closed.as_ref().map(|c| c.x),
                    closed_inside: closed.as_ref().map(|c| c.inside),
                });
            }
        }
    }
    let dir = settings.outdir()?;
    write_json(dir, "crossings.json", &out)?;
    if settings.json_stdout {
        print_json(&out);
    } else {
        println!(
            "crossings: {} transversal pairs found among {} candidates",
            out.len(),
            fam.len()
        );
        for c in out.iter().take(10) {
            println!(
                "  {} x {} at {:.8}{}",
                c.a,
                c.b,
                c.x,
                match c.closed_form {
                    Some(cf) => format!(" (closed form {cf:.8})"),
                    None => String::new(),
                }
            );
        }
    }
    Ok(())
}

fn cmd_turning(settings: &Settings) -> Result<(), Failure> {
    if settings.d != 2 {
        return Err(Failure::Usage("turning points require d = 2".into()));
    }
    let pot = settings.potential()?;
    let rep = solve_subaction(&pot, settings.lambda, 2, settings.grid, settings.tol)?;
    let tp = turning_points(&rep.b, &pot, settings.lambda, 1e-9 * (1.0 + pot.sup_abs()));
    let dir = settings.outdir()?;
    write_json(dir, "turning.json", &tp)?;
    if settings.json_stdout {
        print_json(&tp);
    } else if tp.degenerate {
        println!("turning points: degenerate (gap vanishes identically)");
    } else {
        println!("turning points ({}): {:?}", tp.count(), tp.points);
    }
    Ok(())
}

#[derive(Serialize)]
struct DualJson {
    lambda: f64,
    x_bar: f64,
    a_star: Vec<(String, f64)>,
    b_star: Vec<(String, f64)>,
    identity_residual_max: f64,
    p_grid_max: f64,
    fr_residual_max: f64,
    plan_orbit: Option<PlanOrbit>,
}

fn dual_diagnostics(settings: &Settings, pot: &Potential) -> Result<DualJson, Failure> {
    if settings.d != 2 {
        return Err(Failure::Usage("the dual layer requires d = 2".into()));
    }
    let rep = solve_subaction(pot, settings.lambda, 2, settings.grid, settings.tol)?;
    let de = DualEval::new(pot, settings.lambda);
    let fam = settings.candidates();

    let a_star: Vec<(String, f64)> = fam
        .iter()
        .map(|a| (a.to_string(), de.dual_potential(a)))
        .collect();
    let b_star: Vec<(String, f64)> = fam
        .iter()
        .map(|a| (a.to_string(), de.dual_subaction(a)))
        .collect();
    let identity_residual_max = fam
        .iter()
        .map(|a| de.dual_identity_residual(a))
        .fold(0.0, f64::max);

    let tie = 1e-9 * (1.0 + pot.sup_abs());
    let mut p_grid_max: f64 = 0.0;
    for j in 0..256 {
        let x = j as f64 / 256.0;
        if let Some(a) = realizer(&rep.b, pot, settings.lambda, 2, x, 300, tie).seq {
            p_grid_max = p_grid_max.max(de.admissibility_gap(&rep.b, x, &a).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut fr_residual_max: f64 = 0.0;
    for _ in 0..20 {
        let a = &fam[rng.gen_range(0..fam.len())];
        let x = rng.gen_range(0.01..0.99);
        fr_residual_max = fr_residual_max.max(de.fundamental_relation_residual(&rep.b, x, a));
    }

    // Plan orbit seeded at the detected maximizing orbit.
    let em = empirical_measure(&rep.b, pot, settings.lambda, 2, 0.77, 2000);
    let plan_orbit = em.orbit.and_then(|orbit| {
        let x0 = orbit.points[0];
        let a0 = realizer(&rep.b, pot, settings.lambda, 2, x0, 300, tie).seq?;
        de.plan_orbit(&rep.b, x0, &a0, 64, 1e-5).ok()
    });

    Ok(DualJson {
        lambda: settings.lambda,
        x_bar: de.x_bar(),
        a_star,
        b_star,
        identity_residual_max,
        p_grid_max,
        fr_residual_max,
        plan_orbit,
    })
}

fn cmd_dual(settings: &Settings) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let json = dual_diagnostics(settings, &pot)?;
    let dir = settings.outdir()?;
    write_json(dir, "dual.json", &json)?;
    if settings.json_stdout {
        print_json(&json);
    } else {
        println!(
            "dual layer: identity residual {:.2e}, p on grid {:.2e}, FR residual {:.2e}, plan orbit {}",
            json.identity_residual_max,
            json.p_grid_max,
            json.fr_residual_max,
            match &json.plan_orbit {
                Some(p) => format!("period {:?}, p_max {:.2e}", p.period, p.p_max),
                None => "unavailable".into(),
            }
        );
    }
    Ok(())
}

fn cmd_sweep(settings: &Settings, lambdas: &str) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let list: Vec<f64> = lambdas
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Usage(format!("--lambdas entry {t:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    for &l in &list {
        if !(0.0 < l && l < 1.0) {
            return Err(Failure::Usage(format!("lambda {l} outside (0,1)")));
        }
        if l >= 0.95 {
            eprintln!("note: lambda = {l} contracts slowly; expect a long solve");
        }
    }
    let rows: Vec<SweepRow> = lambda_sweep(&pot, &list, settings.d, settings.grid, settings.tol)?;
    let dir = settings.outdir()?;
    let mut csv = String::from("lambda,max_b,scaled,iterations,slow\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.lambda, r.max_b, r.scaled, r.iterations, r.slow
        ));
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;
    write_json(dir, "sweep.json", &rows)?;
    if settings.json_stdout {
        print_json(&rows);
    } else {
        for r in &rows {
            println!(
                "lambda {:<6} max b {:>14.9}  (1-lambda)·max b {:>14.9}  ({} iterations{})",
                r.lambda,
                r.max_b,
                r.scaled,
                r.iterations,
                if r.slow { ", slow regime" } else { "" }
            );
        }
    }
    Ok(())
}

fn cmd_scenario(
    settings: &Settings,
    name: &str,
    overrides: (Option<f64>, Option<usize>, Option<usize>),
) -> Result<(), Failure> {
    let preset = scenarios::find(name).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown scenario {name:?}; available: {}",
            scenarios::PRESETS
                .iter()
                .map(|p| p.name)
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    // The preset supplies the potential, discount and candidate family;
    // explicit flags override them (and may then legitimately fail the
    // structural diff).
    let pot = Potential::from_spec(preset.potential).map_err(|e| Failure::Usage(e.to_string()))?;
    let (lambda_flag, pmax_flag, qmax_flag) = overrides;
    let lambda = lambda_flag.unwrap_or(preset.lambda);
    let family = (
        pmax_flag.unwrap_or(preset.period_max),
        qmax_flag.unwrap_or(preset.preperiod_max),
    );
    let run = scenarios::run(preset, &pot, lambda, family, settings.grid, settings.tol)?;
    let dir = settings.outdir()?;
    write_json(dir, "scenario.json", &run.outcome)?;
    write_json(dir, "pieces.json", &run.envelope.pieces)?;
    write_json(dir, "switches.json", &run.envelope.switch_points)?;
    let mut csv = String::from("x,b\n");
    for j in 0..run.report.b.n() {
        csv.push_str(&format!(
            "{},{}\n",
            run.report.b.node_x(j),
            run.report.b.values()[j]
        ));
    }
    std::fs::write(dir.join("b.csv"), csv)?;
    if settings.svg {
        let pts: Vec<(f64, f64)> = (0..run.report.b.n())
            .map(|j| (run.report.b.node_x(j), run.report.b.values()[j]))
            .collect();
        let mut svg = svg::Svg::new((0.0, 1.0), (run.report.b.min(), run.report.b.max()));
        svg.polyline(&pts, "#1f77b4", 1.4);
        for &sw in &run.envelope.switch_points {
            svg.vline(sw, "#888");
        }
        svg.save(&dir.join("scenario.svg"))?;
    }

    if settings.json_stdout {
        print_json(&run.outcome);
    } else {
        println!(
            "scenario {name} (lambda {lambda}, potential {})",
            run.outcome.potential
        );
        for c in &run.outcome.checks {
            println!(
                "  [{}] {}: expected {}, got {}",
                if c.pass { "ok" } else { "MISMATCH" },
                c.name,
                c.expected,
                c.got
            );
        }
        if let Some(label) = run.outcome.twist_label {
            println!("  (twist label, reported not asserted: {label})");
        }
    }
    if run.outcome.pass {
        println!("scenario {name}: structure matches");
        Ok(())
    } else {
        Err(Failure::Mismatch(format!(
            "scenario {name}: computed structure differs"
        )))
    }
}

#[derive(Serialize)]
struct ReportJson {
    solve: SolveJson,
    pieces: Vec<fatlab::EnvelopePiece>,
    switch_points: Vec<f64>,
    validation: EnvelopeValidation,
    quadratic_twist: Option<bool>,
    /// Closed-form crossing of the two period-2 curves, when quadratic.
    quadratic_crossing: Option<fatlab::quadratic::Crossing>,
    symmetric_subaction: Option<SymmetricSubaction>,
    dual: DualJson,
}

fn cmd_report(settings: &Settings) -> Result<(), Failure> {
    let pot = settings.potential()?;
    let (_, solve) = solve_with_diagnostics(settings, &pot)?;
    let env = build_envelope(settings, &pot)?;
    let validation = validate_envelope(&env, &pot, settings.lambda, 512, settings.tol)?;
    let symmetric_subaction = if pot.name() == "quad_sym" {
        Some(explicit_symmetric_subaction(settings.lambda)?)
    } else {
        None
    };
    let dual = dual_diagnostics(settings, &pot)?;
    let q = quad_spec(&pot, settings.lambda);
    let quadratic_crossing = q.and_then(|q| {
        let s10 = SymbolSeq::periodic(&[1, 0], 2).unwrap();
        let s01 = SymbolSeq::periodic(&[0, 1], 2).unwrap();
        q.closed_crossing(&s10, &s01).ok()
    });
    let report = ReportJson {
        solve,
        pieces: env.pieces,
        switch_points: env.switch_points,
        validation,
        quadratic_twist: q.map(|q| q.twist_predicate()),
        quadratic_crossing,
        symmetric_subaction,
        dual,
    };
    let dir = settings.outdir()?;
    write_json(dir, "report.json", &report)?;
    if settings.json_stdout {
        print_json(&report);
    } else {
        println!(
            "report for {} at lambda {}: {} pieces, calibration residual {:.2e}, dual identity {:.2e}",
            report.solve.potential,
            report.solve.lambda,
            report.pieces.len(),
            report.validation.max_residual,
            report.dual.identity_residual_max
        );
        if let Some(sub) = &report.symmetric_subaction {
            println!(
                "  b(0): oracle {:.9} vs alternative closed form {:.9} (mismatch {:.3e}, oracle kept)",
                sub.b0_oracle, sub.b0_alt_closed, sub.alt_mismatch
            );
        }
    }
    Ok(())
}
