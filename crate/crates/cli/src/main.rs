//! `covpov`: batch front-end over scenario files.
//!
//! Exit codes: 0 success, 1 a numerical check failed, 2 the scenario is
//! malformed or cannot be evaluated, 3 an I/O failure.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covpov::engine::{coordinate_moments, density, evaluate_field, probability, tau_matrix, DensityField};
use covpov::kernel::{validate_isometry, validate_subnormalization, KernelMode};
use covpov::lorentz::{boost_element, oracle_boost_element, GammaLabel};
use covpov::scenario::{orthonormal_basis, run_verify_suite, tolerance_scale_from_env, Prepared, Scenario};
use serde::Serialize;

use output::{csv_row, RunDir};

#[derive(Parser)]
#[command(name = "covpov", version, about = "Covariant event-localization measures: densities, probabilities and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the kernel's isometry (or sub-normalization) condition.
    ValidateKernel(Common),
    /// Density on the spacetime grid as CSV.
    Density(Common),
    /// Probabilities of the scenario's regions.
    Probability(Common),
    /// Coordinate moments as JSON.
    Moments(Common),
    /// Galerkin matrix of tau(I) in the scenario's basis.
    TauMatrix(Common),
    /// Run the scenario's verification battery.
    VerifySuite(Common),
    /// Everything the scenario requests.
    Run(Common),
    /// Boost matrix elements `(l 0 | U(b_zeta) | 0 0)` with oracle residuals.
    DmatrixTable(DmatrixArgs),
}

#[derive(Args)]
struct DmatrixArgs {
    /// Principal-series parameter `c = i q`.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 4)]
    l_max: usize,
    #[arg(long, default_value_t = 3.0)]
    zeta_max: f64,
    /// Rapidities `-zeta_max..=zeta_max` in this many steps.
    #[arg(long, default_value_t = 24)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Check(String),
    Scenario(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Scenario(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<covpov::Error> for Failure {
    fn from(e: covpov::Error) -> Self {
        Failure::Scenario(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DmatrixTable(a) => dmatrix_table(&a),
        Command::ValidateKernel(c) => with_scenario(&c, "validate-kernel", validate_kernel),
        Command::Density(c) => with_scenario(&c, "density", |s, p, d, _| write_density(s, p, d).map(|_| ())),
        Command::Probability(c) => with_scenario(&c, "probability", write_probabilities),
        Command::Moments(c) => with_scenario(&c, "moments", |s, p, d, _| write_moments(s, p, d, None)),
        Command::TauMatrix(c) => with_scenario(&c, "tau-matrix", write_tau),
        Command::VerifySuite(c) => with_scenario(&c, "verify-suite", verify_suite),
        Command::Run(c) => with_scenario(&c, "run", run_all),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Check(m) => format!("check failed: {m}"),
                Failure::Scenario(m) => format!("scenario error: {m}"),
                Failure::Io(m) => format!("i/o error: {m}"),
            };
            eprintln!("{msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load(path: &Path) -> std::result::Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text).map_err(|e| Failure::Scenario(format!("{}: {e}", path.display())))
}

fn with_scenario(
    c: &Common,
    command: &str,
    body: impl FnOnce(&Scenario, &Prepared, &mut RunDir, u64) -> Outcome,
) -> Outcome {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Scenario(format!("--threads: {e}")))?;
    }
    let scenario = load(&c.scenario)?;
    let seed = c.seed.unwrap_or(scenario.seed);
    let prepared = scenario.prepare()?;
    let mut dir = RunDir::create(&c.out)?;
    let result = body(&scenario, &prepared, &mut dir, seed);
    // The manifest records whatever was written, also on check failures;
    // the body's own failure takes precedence over a manifest error.
    let manifest = dir.write_manifest(&scenario.name, command, seed);
    result.and(manifest)
}

fn rho(p: &Prepared) -> std::result::Result<DensityField, Failure> {
    Ok(density(&evaluate_field(&p.psi, &p.kernel, &p.grid)?))
}

fn write_json<T: Serialize>(dir: &mut RunDir, name: &str, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    dir.write(name, text.as_bytes())
}

fn validate_kernel(_: &Scenario, p: &Prepared, dir: &mut RunDir, _: u64) -> Outcome {
    let tol = p.kernel.tolerance();
    let report = match p.kernel.mode() {
        KernelMode::Normalized => validate_isometry(&p.kernel, tol),
        KernelMode::Subnormalized => validate_subnormalization(&p.kernel, tol),
    };
    write_json(dir, "kernel.json", &report)?;
    let label = match p.kernel.mode() {
        KernelMode::Normalized => "max|G-I|",
        KernelMode::Subnormalized => "lambda_max(G)",
    };
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    println!("{verdict} {label}={}", report.max_value);
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "kernel condition violated at mass node {} (mu = {})",
            report.worst.mass_index, report.worst.mass
        )))
    }
}

fn write_density(_: &Scenario, p: &Prepared, dir: &mut RunDir) -> std::result::Result<DensityField, Failure> {
    let rho = rho(p)?;
    let names: &[&str] = match p.grid.dim().coords() {
        1 => &["t"],
        2 => &["t", "x"],
        _ => &["t", "x", "y", "z"],
    };
    let mut text = format!("{},rho\n", names.join(","));
    for (i, v) in rho.values.iter().enumerate() {
        let mut row = p.grid.point(i);
        row.push(*v);
        text.push_str(&csv_row(&row));
    }
    dir.write("density.csv", text.as_bytes())?;
    println!("density: {} points, total {:.12}", rho.values.len(), rho.total());
    Ok(rho)
}

fn write_moments(_: &Scenario, p: &Prepared, dir: &mut RunDir, rho_in: Option<&DensityField>) -> Outcome {
    let owned;
    let rho = match rho_in {
        Some(r) => r,
        None => {
            owned = rho(p)?;
            &owned
        }
    };
    let m = coordinate_moments(rho);
    write_json(dir, "moments.json", &m)?;
    if m.truncated {
        eprintln!("warning: density reaches the box boundary (ratio {:.3e})", m.boundary_ratio);
    }
    println!("moments: total {:.12}, mean {:?}", m.total, m.mean);
    Ok(())
}

#[derive(Serialize)]
struct RegionProbability {
    name: String,
    probability: f64,
    clipped: bool,
}

fn write_probabilities(s: &Scenario, p: &Prepared, dir: &mut RunDir, _: u64) -> Outcome {
    probabilities_from(s, &rho(p)?, dir)
}

fn probabilities_from(s: &Scenario, rho: &DensityField, dir: &mut RunDir) -> Outcome {
    if s.outputs.regions.is_empty() {
        return Err(Failure::Scenario("outputs.regions: no regions requested".into()));
    }
    let mut out = Vec::new();
    for r in &s.outputs.regions {
        let rep = probability(rho, &r.region)?;
        if rep.clipped {
            eprintln!("warning: region {:?} extends past the grid box and was clipped", r.name);
        }
        println!("probability {}: {:.12}{}", r.name, rep.probability, if rep.clipped { " (clipped)" } else { "" });
        out.push(RegionProbability { name: r.name.clone(), probability: rep.probability, clipped: rep.clipped });
    }
    write_json(dir, "probability.json", &out)
}

fn write_tau(s: &Scenario, p: &Prepared, dir: &mut RunDir, _: u64) -> Outcome {
    let Some(t) = &s.outputs.tau else {
        return Err(Failure::Scenario("outputs.tau: no region and basis given".into()));
    };
    let basis = orthonormal_basis(&t.basis, &p.state_grid)?;
    let m = tau_matrix(&p.kernel, &p.grid, &t.region, &basis)?;
    if m.clipped {
        eprintln!("warning: tau region extends past the grid box and was clipped");
    }
    write_json(dir, "tau.json", &m)?;
    println!("tau-matrix: eigenvalues {:?}", m.eigenvalues);
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    scenario: &'a str,
    seed: u64,
    tolerance_scale: f64,
    pass: bool,
    checks: Vec<covpov::verify::CheckResult>,
}

fn verify_suite(s: &Scenario, _: &Prepared, dir: &mut RunDir, seed: u64) -> Outcome {
    let scale = tolerance_scale_from_env()?;
    let checks = run_verify_suite(s, seed, scale)?;
    for c in &checks {
        println!("{}", c.summary());
    }
    let pass = checks.iter().all(|c| c.pass);
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    write_json(dir, "verify.json", &VerifyReport { scenario: &s.name, seed, tolerance_scale: scale, pass, checks })?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

fn run_all(s: &Scenario, p: &Prepared, dir: &mut RunDir, seed: u64) -> Outcome {
    validate_kernel(s, p, dir, seed)?;
    let rho = if s.outputs.density { write_density(s, p, dir)? } else { rho(p)? };
    if s.outputs.moments {
        write_moments(s, p, dir, Some(&rho))?;
    }
    if !s.outputs.regions.is_empty() {
        probabilities_from(s, &rho, dir)?;
    }
    if s.outputs.tau.is_some() {
        write_tau(s, p, dir, seed)?;
    }
    if s.outputs.verify.is_some() {
        verify_suite(s, p, dir, seed)?;
    }
    Ok(())
}

/// Oracle quadrature order for the table's residual column.
const TABLE_ORACLE_ORDER: usize = 64;

fn dmatrix_table(a: &DmatrixArgs) -> Outcome {
    if a.steps == 0 || !(a.zeta_max >= 0.0) {
        return Err(Failure::Scenario("--steps must be positive and --zeta-max non-negative".into()));
    }
    let c = GammaLabel::principal(0, a.q).c();
    let mut text = String::from("l,zeta,re_d,im_d,oracle_residual\n");
    let mut worst: f64 = 0.0;
    for k in 0..=a.steps {
        let zeta = -a.zeta_max + 2.0 * a.zeta_max * k as f64 / a.steps as f64;
        for l in 0..=a.l_max {
            let fast = boost_element(c, l, zeta)?;
            let slow = oracle_boost_element(c, l, 0, zeta, TABLE_ORACLE_ORDER)?;
            let res = (fast - slow).norm();
            worst = worst.max(res);
            text.push_str(&format!("{l},{}", csv_row(&[zeta, fast.re, fast.im, res])));
        }
    }
    let mut dir = RunDir::create(&a.out)?;
    dir.write("dmatrix.csv", text.as_bytes())?;
    dir.write_manifest("dmatrix-table", "dmatrix-table", 0)?;
    println!("dmatrix-table: l <= {}, c = {}i, max oracle residual {worst:.3e}", a.l_max, a.q);
    Ok(())
}
