use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pbadapt::config::{MeshSource, Reference, RunConfig};
use pbadapt::driver::{adaptive_loop, uniform_loop, AdaptiveConfig, Background, RefinementMode};
use pbadapt::estimator::{effectivity, estimate_with, EstimatorTag};
use pbadapt::mesh::write_panel_csv;
use pbadapt::oracle::{born_energy, kirkwood_series, richardson, SphereCase};
use pbadapt::physics::{solvation_energy, EnergyResult};
use pbadapt::solver::{solve_adjoint, solve_adjoint_conforming, solve_forward, ChargeSet};
use pbadapt::{Error, Result};

#[derive(Parser)]
#[command(name = "pbadapt", version, about = "Poisson-Boltzmann solvation energies with adaptive error control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and report the solvation energy.
    Solve,
    /// Per-panel error maps for both estimators.
    Estimate,
    /// Adaptive refinement run.
    Adapt,
    /// Kirkwood sphere energy or Richardson extrapolation.
    Oracle,
}

#[derive(Args)]
struct Flags {
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "pbadapt_out")]
    out: PathBuf,
    #[arg(long, global = true, value_name = "Ephi|Eu")]
    estimator: Option<String>,
    #[arg(long, global = true, value_name = "F")]
    fraction: Option<f64>,
    #[arg(long = "adjoint-levels", global = true, value_name = "K")]
    adjoint_levels: Option<u32>,
    #[arg(long, global = true, value_name = "flat|conforming")]
    mode: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    iters: Option<usize>,
    #[arg(long = "gmres-tol", global = true, value_name = "T")]
    gmres_tol: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Write zero wall times so repeated runs give identical files.
    #[arg(long = "no-timing", global = true)]
    no_timing: bool,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl Flags {
    fn load(&self) -> Result<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
        let mut c = RunConfig::load(path)?;
        if let Some(e) = &self.estimator {
            c.adapt.estimator = e.parse().map_err(config_err)?;
        }
        if let Some(m) = &self.mode {
            c.adapt.mode = m.parse().map_err(config_err)?;
        }
        if let Some(f) = self.fraction {
            c.adapt.fraction = f;
        }
        if let Some(k) = self.adjoint_levels {
            c.adapt.adjoint_levels = k;
        }
        if let Some(n) = self.iters {
            c.adapt.iterations = n;
        }
        if let Some(t) = self.gmres_tol {
            c.solver.gmres_tol = t;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Parse { .. } | Error::Io { .. } | Error::Manifold(_) | Error::InvalidMesh(_) => 3,
        Error::NonConvergence { .. }
        | Error::Singularity { .. }
        | Error::Domain { .. }
        | Error::SeriesNotConverged { .. }
        | Error::NonMonotone(_)
        | Error::Undefined(_) => 4,
        Error::OpenPlan(_) => 5,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct Problem {
    mesh: pbadapt::mesh::SurfaceMesh,
    charges: ChargeSet,
    background: Option<Background>,
}

fn load_problem(c: &RunConfig) -> Result<Problem> {
    let mesh = c.mesh.load()?;
    mesh.validate()?;
    let charges = c.charges.load()?;
    let background = c.background.as_ref().map(|b| b.load().map(|m| Background::from_mesh(&m))).transpose()?;
    Ok(Problem { mesh, charges, background })
}

fn sphere_case(c: &RunConfig, charges: &ChargeSet) -> Result<SphereCase> {
    match c.mesh {
        MeshSource::Icosphere { radius, .. } => {
            SphereCase::new(radius, charges.clone(), c.physics)?.with_terms(c.oracle.terms)
        }
        MeshSource::Msms { .. } => Err(Error::Config("Kirkwood reference needs an icosphere mesh".into())),
    }
}

/// Exact energy for effectivity ratios, or the reason there is none.
fn reference_energy(c: &RunConfig, p: &Problem) -> Result<std::result::Result<f64, String>> {
    match c.oracle.reference {
        Reference::Kirkwood => Ok(Ok(kirkwood_series(&sphere_case(c, &p.charges)?)?.value)),
        Reference::Richardson => {
            let mode = if p.background.is_some() { RefinementMode::Conforming } else { RefinementMode::Flat };
            let h = uniform_loop(&p.mesh, &p.charges, &c.physics, 3, mode, p.background.as_ref(), &c.solver)
                .map_err(|a| a.error)?;
            let e = h.energies();
            Ok(Ok(richardson([e[0], e[1], e[2]])?.0))
        }
        Reference::None => Ok(Err("no reference energy configured ([oracle] reference)".into())),
    }
}

fn cmd_solve(c: &RunConfig, out: &Path) -> Result<()> {
    let p = load_problem(c)?;
    let forward = solve_forward(&p.mesh, &c.physics, &p.charges, &c.solver)?;
    let energy = solvation_energy(&forward, &p.charges, &c.physics)?;
    print!("{}", energy.key_values());
    println!("gmres_tol = {:e}", c.solver.gmres_tol);
    create_out(out)?;
    write(&out.join("energy.csv"), &format!("{}\n{}\n", EnergyResult::CSV_HEADER, energy.csv_row()))
}

fn cmd_estimate(c: &RunConfig, out: &Path) -> Result<()> {
    let p = load_problem(c)?;
    let levels = c.adapt.adjoint_levels;
    let forward = solve_forward(&p.mesh, &c.physics, &p.charges, &c.solver)?;
    let energy = solvation_energy(&forward, &p.charges, &c.physics)?;
    let adjoint = match &p.background {
        Some(bg) => solve_adjoint_conforming(&p.mesh, &c.physics, &p.charges, levels, &bg.0, &c.solver)?,
        None => solve_adjoint(&p.mesh, &c.physics, &p.charges, levels, &c.solver)?,
    };
    let exact = reference_energy(c, &p)?;
    create_out(out)?;
    print!("{}", energy.key_values());
    println!("adjoint_panels = {}", adjoint.mesh.num_panels());
    match &exact {
        Ok(v) => println!("dG_reference = {v:.16e}"),
        Err(note) => println!("note: gamma_eff omitted, {note}"),
    }
    for tag in [EstimatorTag::Ephi, EstimatorTag::Eu] {
        let map = estimate_with(tag, &forward, &adjoint, &p.charges, &c.physics)?;
        write_panel_csv(&p.mesh, &map.per_panel, out.join(format!("errors_{tag}.csv")))?;
        println!("signed_{tag} = {:.16e}", map.signed_total);
        println!("sum_{tag} = {:.16e}", map.sum_abs());
        if let Ok(v) = exact {
            println!("gamma_{tag} = {:.16e}", effectivity(map.signed_total, energy.dg_solv, v)?);
        }
    }
    Ok(())
}

fn cmd_adapt(c: &RunConfig, out: &Path, timing: bool) -> Result<()> {
    let p = load_problem(c)?;
    let config = AdaptiveConfig {
        estimator_tag: c.adapt.estimator,
        marking_fraction: c.adapt.fraction,
        adjoint_refine_levels: c.adapt.adjoint_levels,
        refinement_mode: c.adapt.mode,
        max_iterations: c.adapt.iterations,
        background: p.background.clone(),
        gmres_tol: c.solver.gmres_tol,
    };
    let (history, failure) = match adaptive_loop(&p.mesh, &p.charges, &c.physics, &config) {
        Ok(h) => (h, None),
        Err(a) => (a.partial, Some(a.error)),
    };
    history.write_run_dir(out, timing)?;
    for (k, r) in history.records.iter().enumerate() {
        println!("iter {k}: N = {}, dG = {:.16e}", r.mesh.num_panels(), r.energy.dg_solv);
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_oracle(c: &RunConfig) -> Result<()> {
    if let Some(values) = c.oracle.values {
        let (value, order) = richardson(values)?;
        println!("richardson = {value:.16e}");
        println!("order = {order:.16e}");
        return Ok(());
    }
    let charges = c.charges.load()?;
    let case = sphere_case(c, &charges)?;
    let s = kirkwood_series(&case)?;
    println!("kirkwood = {:.16e}", s.value);
    println!("terms = {}", s.terms);
    println!("tail = {:.3e}", s.tail);
    if charges.len() == 1 && charges.positions()[0] == pbadapt::Point::zeros() && c.physics.kappa == 0.0 {
        println!("born = {:.16e}", born_energy(charges.charges()[0], case.radius, &c.physics));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.flags.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads {n}: {e}")))?;
    }
    let c = cli.flags.load()?;
    let out = &cli.flags.out;
    match cli.command {
        Command::Solve => cmd_solve(&c, out),
        Command::Estimate => cmd_estimate(&c, out),
        Command::Adapt => cmd_adapt(&c, out, !cli.flags.no_timing),
        Command::Oracle => cmd_oracle(&c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
