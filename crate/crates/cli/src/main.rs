//! Batch CLI for simulated MPI scans and the three-stage reconstruction.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpi_recon_cli::manifest::{parse_float, DenoiserKind, ExperimentManifest};
use mpi_recon_cli::pipeline::{grid_metrics, run_pipeline};
use mpi_recon_core::core_stage::{core_stage_solve, CoreStageConfig};
use mpi_recon_core::deconv::{hqs_deconvolve, DeconvConfig, IdentityDenoiser, TikhonovDenoiser};
use mpi_recon_core::error::Error;
use mpi_recon_core::grid::Fov;
use mpi_recon_core::io;
use mpi_recon_core::params::PhysicalParams;
use mpi_recon_core::phantom::{builtin_phantom, parse_phantom, rasterize_phantom};
use mpi_recon_core::relaxation::{relaxation_adaption, RelaxationParams};
use mpi_recon_core::scan::{add_noise, forward_debye, forward_langevin};
use mpi_recon_core::trajectory::lissajous_trajectory;

#[derive(Parser)]
#[command(
    name = "mpi-recon",
    about = "Simulate field-free-point MPI scans and reconstruct concentrations \
             (relaxation adaption, core stage, multi-kernel deconvolution)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Reconstruction grid as two values: NX NY
    #[arg(long, num_args = 2, value_names = ["NX", "NY"], default_values_t = [32, 32])]
    grid: Vec<usize>,
    /// FOV half-extent along x (m); defaults to the drive-field amplitude
    #[arg(long)]
    fov_x: Option<f64>,
    /// FOV half-extent along y (m)
    #[arg(long)]
    fov_y: Option<f64>,
}

impl GridArgs {
    fn dims(&self) -> (usize, usize) {
        (self.grid[0], self.grid[1])
    }
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom, scan it along a Lissajous trajectory and write
    /// the (optionally relaxation-affected, noisy) scan record
    Simulate {
        /// Phantom: builtin:<name> or a phantom file path
        #[arg(long, default_value = "builtin:dot")]
        phantom: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Drive-field amplitude along x (m)
        #[arg(long, default_value_t = 0.012)]
        amplitude_x: f64,
        /// Drive-field amplitude along y (m)
        #[arg(long, default_value_t = 0.012)]
        amplitude_y: f64,
        /// Excitation frequency along x (Hz; fractions like 2.5e6/102 accepted)
        #[arg(long, default_value = "2.5e6/102", value_parser = parse_float)]
        fx: f64,
        /// Excitation frequency along y (Hz)
        #[arg(long, default_value = "2.5e6/96", value_parser = parse_float)]
        fy: f64,
        /// Sampling step (s)
        #[arg(long, default_value_t = 4e-7)]
        dt: f64,
        /// Samples per scan
        #[arg(long, default_value_t = 1632)]
        samples: usize,
        /// Relaxation time of the simulated Debye model (s); 0 = adiabatic
        #[arg(long, default_value_t = 5e-6)]
        tau: f64,
        /// Target SNR in dB ("inf" for noise-free)
        #[arg(long, default_value = "40", value_parser = parse_float)]
        snr_db: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output scan record
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the rasterized ground truth grid
        #[arg(long)]
        rho_out: Option<PathBuf>,
        /// Also write a CSV debug dump of the scan
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Relaxation adaption: convert a Debye-model scan to Langevin-model data
    Adapt {
        #[arg(long, short)]
        input: PathBuf,
        /// Relaxation time for the x channel (s)
        #[arg(long, value_parser = parse_float)]
        tau_x: f64,
        /// Relaxation time for the y channel (s)
        #[arg(long, value_parser = parse_float)]
        tau_y: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Core stage: reconstruct the matrix-valued core response from a scan
    Core {
        #[arg(long, short)]
        input: PathBuf,
        /// Regularization weight
        #[arg(long, default_value = "1e-7", value_parser = parse_float)]
        gamma: f64,
        #[arg(long, default_value_t = 15_000)]
        cg_max_iters: usize,
        #[arg(long, default_value = "1e-6", value_parser = parse_float)]
        cg_tol: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Deconvolution stage: recover the concentration from a core response
    Deconv {
        #[arg(long, short)]
        input: PathBuf,
        /// Initial splitting multiplier
        #[arg(long, default_value = "1e-7", value_parser = parse_float)]
        nu0: f64,
        /// Outer iterations
        #[arg(long, default_value_t = 10)]
        n_it: usize,
        /// Kernel weights as four 0/1 flags in the order 11,12,21,22
        #[arg(long, default_value = "1,1,1,1")]
        beta: String,
        /// Padding percent per side before deconvolution
        #[arg(long, default_value_t = 5.0)]
        pad_pct: f64,
        /// Border cut percent per side on the result
        #[arg(long, default_value_t = 5.0)]
        cut_pct: f64,
        /// Denoiser: tikhonov or identity
        #[arg(long, default_value = "tikhonov")]
        denoiser: String,
        #[arg(long, default_value_t = 10_000)]
        cg_max_iters: usize,
        #[arg(long, default_value = "1e-12", value_parser = parse_float)]
        cg_tol: f64,
        /// Output concentration grid
        #[arg(long, short)]
        out: PathBuf,
        /// Also export a 16-bit PGM image
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Run a full manifest (all sweep combinations)
    Pipeline {
        #[arg(long, short)]
        manifest: PathBuf,
    },
    /// Run a manifest and print the sweep summary with the argmax row
    Sweep {
        #[arg(long, short)]
        manifest: PathBuf,
    },
    /// PSNR/SSIM between two scalar grid files
    Metrics {
        /// Grid under test
        #[arg(long, short)]
        image: PathBuf,
        /// Reference grid
        #[arg(long, short)]
        reference: PathBuf,
    },
}

fn parse_beta(s: &str) -> Result<[bool; 4], Error> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::config("beta expects four comma-separated 0/1 flags"));
    }
    let mut beta = [false; 4];
    for (i, p) in parts.iter().enumerate() {
        beta[i] = match *p {
            "1" => true,
            "0" => false,
            other => return Err(Error::config(format!("beta flag must be 0 or 1, got '{other}'"))),
        };
    }
    Ok(beta)
}

fn run(cli: Cli) -> Result<(), Error> {
    let params = PhysicalParams::simulation_2d();
    match cli.command {
        Command::Simulate {
            phantom,
            grid,
            amplitude_x,
            amplitude_y,
            fx,
            fy,
            dt,
            samples,
            tau,
            snr_db,
            seed,
            out,
            rho_out,
            csv,
        } => {
            let fov = Fov::centered(
                grid.fov_x.unwrap_or(amplitude_x),
                grid.fov_y.unwrap_or(amplitude_y),
            )?;
            let ph = if let Some(name) = phantom.strip_prefix("builtin:") {
                builtin_phantom(name, fov)?
            } else {
                parse_phantom(&std::fs::read_to_string(&phantom)?)?
            };
            let (nx, ny) = grid.dims();
            let raster = rasterize_phantom(&ph, nx, ny, fov)?;
            if raster.clipped > 0 {
                eprintln!("warning: {} primitive(s) extend outside the FOV and were clipped", raster.clipped);
            }
            let traj = lissajous_trajectory(amplitude_x, amplitude_y, fx, fy, dt, samples)?;
            let adiabatic = forward_langevin(&raster.grid, &traj, &params)?;
            let scan = if tau > 0.0 {
                forward_debye(&adiabatic, tau, None)?
            } else {
                adiabatic
            };
            let noisy = add_noise(&scan, snr_db, seed)?;
            io::write_scan(std::fs::File::create(&out)?, &noisy)?;
            if let Some(p) = rho_out {
                io::write_scalar_grid(std::fs::File::create(p)?, &raster.grid)?;
            }
            if let Some(p) = csv {
                io::write_scan_csv(std::fs::File::create(p)?, &noisy)?;
            }
            println!("wrote scan with {} samples to {}", noisy.len(), out.display());
        }
        Command::Adapt { input, tau_x, tau_y, out } => {
            let scan = io::read_scan(std::fs::File::open(&input)?)?;
            let adapted =
                relaxation_adaption(&scan, &RelaxationParams::per_channel(tau_x, tau_y, scan.dt))?;
            io::write_scan(std::fs::File::create(&out)?, &adapted)?;
            println!("wrote adapted scan to {}", out.display());
        }
        Command::Core {
            input,
            gamma,
            cg_max_iters,
            cg_tol,
            grid,
            out,
        } => {
            let scan = io::read_scan(std::fs::File::open(&input)?)?;
            // default FOV: the drive-field FOV of the recorded trajectory
            let (mut ax, mut ay) = (0.0f64, 0.0f64);
            for p in &scan.positions {
                ax = ax.max(p[0].abs());
                ay = ay.max(p[1].abs());
            }
            let fov = Fov::centered(grid.fov_x.unwrap_or(ax), grid.fov_y.unwrap_or(ay))?;
            let cfg = CoreStageConfig {
                gamma,
                cg_max_iters,
                cg_tol,
                nx: grid.dims().0,
                ny: grid.dims().1,
                fov,
            };
            let (field, report) = core_stage_solve(&scan, &cfg, &params)?;
            io::write_matrix_grid(std::fs::File::create(&out)?, &field)?;
            println!(
                "core stage: {} CG iterations, relative residual {:.3e}{}, energy {:.6e}",
                report.iterations,
                report.rel_residual,
                if report.converged { "" } else { " (not converged)" },
                report.energy
            );
            println!("wrote core response to {}", out.display());
        }
        Command::Deconv {
            input,
            nu0,
            n_it,
            beta,
            pad_pct,
            cut_pct,
            denoiser,
            cg_max_iters,
            cg_tol,
            out,
            image,
        } => {
            let field = io::read_matrix_grid(std::fs::File::open(&input)?)?;
            let cfg = DeconvConfig {
                nu0,
                n_it,
                beta: parse_beta(&beta)?,
                cg_max_iters,
                cg_tol,
                padding_percent: pad_pct,
                cut_percent: cut_pct,
            };
            let kind: DenoiserKind = denoiser.parse()?;
            let (rho, report) = match kind {
                DenoiserKind::Tikhonov => {
                    hqs_deconvolve(&field, &params, &cfg, &TikhonovDenoiser::default())?
                }
                DenoiserKind::Identity => hqs_deconvolve(&field, &params, &cfg, &IdentityDenoiser)?,
            };
            io::write_scalar_grid(std::fs::File::create(&out)?, &rho)?;
            if let Some(p) = image {
                io::write_pgm16(&p, &rho)?;
            }
            println!(
                "deconvolution: lambda {:.3e}, final nu {:.3e}, wrote {}",
                report.lambda,
                report.nus.last().copied().unwrap_or(nu0),
                out.display()
            );
        }
        Command::Pipeline { manifest } => {
            let m = ExperimentManifest::from_file(&manifest)?;
            let outcome = run_pipeline(&m)?;
            println!(
                "{} run(s) finished, {} failed; outputs in {}",
                outcome.rows.len(),
                outcome.failures.len(),
                m.out_dir.display()
            );
            if outcome.rows.is_empty() {
                return Err(Error::numerical("every combination failed"));
            }
        }
        Command::Sweep { manifest } => {
            let m = ExperimentManifest::from_file(&manifest)?;
            let outcome = run_pipeline(&m)?;
            println!("tau,gamma,nu0,mean_psnr_trace,mean_ssim_trace,mean_psnr_rho,mean_ssim_rho");
            for s in &outcome.summary {
                println!(
                    "{},{},{},{},{},{},{}",
                    s.tau, s.gamma, s.nu0, s.mean_psnr_trace, s.mean_ssim_trace, s.mean_psnr_rho, s.mean_ssim_rho
                );
            }
            if let Some(b) = &outcome.best {
                println!(
                    "best: tau={} gamma={} nu0={} mean_psnr_rho={}",
                    b.tau, b.gamma, b.nu0, b.mean_psnr_rho
                );
            }
            if outcome.rows.is_empty() {
                return Err(Error::numerical("every combination failed"));
            }
        }
        Command::Metrics { image, reference } => {
            let (p, s) = grid_metrics(&image, &reference)?;
            println!("psnr_db={p}");
            println!("ssim={s}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Format(_) | Error::Io(_) => ExitCode::from(2),
                Error::Domain(_) | Error::Numerical(_) | Error::Conditioning(_) => ExitCode::from(3),
            }
        }
    }
}
