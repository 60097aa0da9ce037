use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, warn};

use openbook::harness::{
    export_meshes, run_convergence, run_fattened, run_limit, run_transfer_defects, write_convergence_outputs,
    write_defect_outputs, write_fattened_outputs, write_limit_outputs, ExperimentConfig,
};
use openbook::Error;

#[derive(Parser)]
#[command(name = "openbook", version, about = "Spectra of fattened open books and their limit operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the eigensolver start blocks; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Surface eigenvalues per h, extrapolated and compared with the closed form.
    LimitSpectrum,
    /// Fattened-domain eigenvalues per (eps, h), extrapolated in h.
    FattenedSpectrum,
    /// Full convergence study with gap table, rate fits and transfer defects.
    Converge,
    /// Transfer-map defects on the finest meshes.
    TransferDefects,
    /// Writes the finest meshes (VTK) and their forms (Matrix Market).
    MeshExport,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_STALLED: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverStalled { .. } => EXIT_STALLED,
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::EmptyStructure
        | Error::TransversalityViolation { .. }
        | Error::MeshResolution { .. }
        | Error::FatteningTooLarge { .. }
        | Error::CutoffOnEigenvalue { .. }
        | Error::UnknownStrategy { .. }
        | Error::Json(_) => EXIT_VALIDATION,
        _ => 1,
    }
}

fn load_config(c: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, dir))
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

/// Runs the command; Ok(true) when some solver run stalled.
fn run(cli: &Cli) -> Result<bool, Error> {
    let (cfg, dir) = load_config(&cli.common)?;
    match cli.command {
        Command::LimitSpectrum => {
            let r = run_limit(&cfg)?;
            write_limit_outputs(&dir, &r)?;
            for run in &r.runs {
                println!("h = {}: {}", run.h, fmt_values(&run.values));
            }
            println!("extrapolated: {}", fmt_values(&r.extrapolated));
            println!("closed form:  {}", fmt_values(&r.oracle));
            Ok(r.any_stalled())
        }
        Command::FattenedSpectrum => {
            let r = run_fattened(&cfg)?;
            write_fattened_outputs(&dir, &r)?;
            for s in &r.per_eps {
                println!("eps = {}: {}", s.eps, fmt_values(&s.extrapolated));
            }
            Ok(r.any_stalled())
        }
        Command::Converge => {
            let r = run_convergence(&cfg)?;
            write_convergence_outputs(&dir, &r)?;
            for f in &r.fits {
                let alpha = f.fit.map(|x| format!("{:.3}", x.alpha)).unwrap_or_else(|| "-".into());
                println!("n = {}: alpha = {alpha}, gaps decreasing = {}", f.n, f.monotone);
            }
            for w in &r.warnings {
                warn!("{w}");
            }
            Ok(r.any_stalled())
        }
        Command::TransferDefects => {
            let (reports, failures) = run_transfer_defects(&cfg)?;
            write_defect_outputs(&dir, &reports)?;
            for r in &reports {
                println!(
                    "eps = {}: dim {} J iso {:.4e} en {:.4e}, K iso {:.4e} en {:.4e}",
                    r.eps, r.dim, r.dj_iso, r.dj_energy, r.dk_iso, r.dk_energy
                );
            }
            for (eps, f) in &failures {
                error!("eps = {eps}: {}", f.message);
            }
            Ok(failures.iter().any(|(_, f)| f.stalled))
        }
        Command::MeshExport => {
            for p in export_meshes(&cfg, &dir)? {
                println!("{}", p.display());
            }
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            error!("a solver run stalled; partial results were written");
            ExitCode::from(EXIT_STALLED)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use openbook::eigensolve::{lobpcg, LobpcgOptions};
    use openbook::femcore::assemble_surface;
    use openbook::geometry::build_periodic_flat_book;
    use openbook::meshing::mesh_surface;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Geometry("x".into())), 1);
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let f = assemble_surface(&mesh_surface(&s, 0.05).unwrap()).unwrap();
        let e = lobpcg(&f.stiffness, &f.mass, 6, 1e-12, 1, &LobpcgOptions { max_iter: 2 }).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_STALLED);
    }
}
