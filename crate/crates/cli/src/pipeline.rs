//! End-to-end experiment runner: simulate each phantom once, then sweep the
//! (tau, gamma, nu0) grid through the three reconstruction stages, emitting
//! metrics tables, a sweep summary with the argmax row, and per-run images.
//!
//! Sweep combinations run in a worker pool; output rows keep the manifest
//! order and file names carry the parameter tuple, so reruns with the same
//! manifest and seed are byte-identical (timings live in a separate file).

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use mpi_recon_core::conv::core_operator_apply;
use mpi_recon_core::core_stage::{core_stage_solve, CoreStageConfig};
use mpi_recon_core::deconv::{hqs_deconvolve, DeconvConfig, Denoiser, IdentityDenoiser, TikhonovDenoiser};
use mpi_recon_core::error::{Error, Result};
use mpi_recon_core::grid::{trace_of, ScalarGrid};
use mpi_recon_core::io::write_pgm16;
use mpi_recon_core::metrics::{psnr, ssim};
use mpi_recon_core::phantom::rasterize_phantom;
use mpi_recon_core::relaxation::{relaxation_adaption, RelaxationParams};
use mpi_recon_core::scan::{add_noise, forward_debye, forward_langevin, ScanRecord};

use crate::manifest::{DenoiserKind, ExperimentManifest};

#[derive(Debug, Clone)]
pub struct RunRow {
    pub phantom: String,
    pub tau: f64,
    pub gamma: f64,
    pub nu0: f64,
    pub n_it: usize,
    pub psnr_trace: f64,
    pub ssim_trace: f64,
    pub psnr_rho: f64,
    pub ssim_rho: f64,
}

#[derive(Debug, Clone)]
pub struct TimingRow {
    pub phantom: String,
    pub tau: f64,
    pub gamma: f64,
    pub nu0: f64,
    pub adapt_seconds: f64,
    pub core_seconds: f64,
    pub deconv_seconds: f64,
}

/// Mean metrics over phantoms for one parameter combination.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub tau: f64,
    pub gamma: f64,
    pub nu0: f64,
    pub mean_psnr_trace: f64,
    pub mean_ssim_trace: f64,
    pub mean_psnr_rho: f64,
    pub mean_ssim_rho: f64,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub rows: Vec<RunRow>,
    pub timings: Vec<TimingRow>,
    pub summary: Vec<SummaryRow>,
    /// Argmax of the mean reconstruction PSNR; ties go to the earliest
    /// (smallest) parameters in sweep order.
    pub best: Option<SummaryRow>,
    pub failures: Vec<String>,
}

fn make_denoiser(kind: DenoiserKind) -> Box<dyn Denoiser + Sync + Send> {
    match kind {
        DenoiserKind::Tikhonov => Box::new(TikhonovDenoiser::default()),
        DenoiserKind::Identity => Box::new(IdentityDenoiser),
    }
}

/// Center crop to at most `(nx, ny)`; metrics compare reconstructions and
/// ground truth on their common centered region.
fn crop_center(g: &ScalarGrid, nx: usize, ny: usize) -> ScalarGrid {
    let (gx, gy) = g.values.dim();
    if gx <= nx && gy <= ny {
        return g.clone();
    }
    let ox = (gx - nx.min(gx)) / 2;
    let oy = (gy - ny.min(gy)) / 2;
    let take_x = nx.min(gx);
    let take_y = ny.min(gy);
    let values = ndarray::Array2::from_shape_fn((take_x, take_y), |(i, j)| {
        g.values[[i + ox, j + oy]]
    });
    let fov = mpi_recon_core::grid::Fov {
        x0: g.fov.x0 + ox as f64 * g.hx(),
        x1: g.fov.x0 + (ox + take_x) as f64 * g.hx(),
        y0: g.fov.y0 + oy as f64 * g.hy(),
        y1: g.fov.y0 + (oy + take_y) as f64 * g.hy(),
    };
    ScalarGrid { values, fov }
}

fn metric_pair(recon: &ScalarGrid, reference: &ScalarGrid) -> Result<(f64, f64)> {
    let (rx, ry) = reference.values.dim();
    let (cx, cy) = recon.values.dim();
    let nx = rx.min(cx);
    let ny = ry.min(cy);
    let a = crop_center(recon, nx, ny);
    let b = crop_center(reference, nx, ny);
    Ok((psnr(&a, &b)?, ssim(&a, &b)?))
}

struct SimulatedPhantom {
    name: String,
    truth: ScalarGrid,
    gt_trace: ScalarGrid,
    scan: ScanRecord,
}

fn simulate_phantom(
    manifest: &ExperimentManifest,
    index: usize,
    selector: &str,
) -> Result<SimulatedPhantom> {
    let params = manifest.physical_params();
    let phantom = manifest.load_phantom(selector)?;
    let raster = rasterize_phantom(&phantom, manifest.nx, manifest.ny, manifest.fov)?;
    let traj = manifest.trajectory()?;
    let adiabatic = forward_langevin(&raster.grid, &traj, &params)?;
    let relaxed = if manifest.tau_gt > 0.0 {
        forward_debye(&adiabatic, manifest.tau_gt, None)?
    } else {
        adiabatic
    };
    let noisy = add_noise(&relaxed, manifest.snr_db, manifest.seed.wrapping_add(index as u64))?;
    let gt_field = core_operator_apply(&raster.grid, params.h_sat, &params)?;
    Ok(SimulatedPhantom {
        name: selector.to_string(),
        truth: raster.grid,
        gt_trace: trace_of(&gt_field),
        scan: noisy,
    })
}

fn fmt_param(v: f64) -> String {
    format!("{v:e}")
}

/// Runs the full manifest. Stage errors are recorded per combination and the
/// remaining combinations continue.
pub fn run_pipeline(manifest: &ExperimentManifest) -> Result<PipelineOutcome> {
    manifest.validate()?;
    std::fs::create_dir_all(&manifest.out_dir)?;
    let params = manifest.physical_params();
    let denoiser = make_denoiser(manifest.denoiser);

    // simulate each phantom once
    let mut phantoms = Vec::new();
    for (i, selector) in manifest.phantoms.iter().enumerate() {
        let sim = simulate_phantom(manifest, i, selector)
            .map_err(|e| Error::config(format!("phantom '{selector}': {e}")))?;
        if manifest.write_images {
            write_pgm16(&manifest.out_dir.join(format!("gt_p{i}.pgm")), &sim.truth)?;
            write_pgm16(&manifest.out_dir.join(format!("gt_trace_p{i}.pgm")), &sim.gt_trace)?;
        }
        phantoms.push(sim);
    }

    // one work item per (phantom, tau, gamma); nu0 sweeps inside
    let mut items = Vec::new();
    for pi in 0..phantoms.len() {
        for &tau in &manifest.taus {
            for &gamma in &manifest.gammas {
                items.push((pi, tau, gamma));
            }
        }
    }

    type ItemResult = std::result::Result<(Vec<RunRow>, Vec<TimingRow>), String>;
    let results: Vec<ItemResult> = items
        .par_iter()
        .map(|&(pi, tau, gamma)| {
            let sim = &phantoms[pi];
            let tag = format!(
                "phantom={} tau={} gamma={}",
                sim.name,
                fmt_param(tau),
                fmt_param(gamma)
            );
            let work = || -> Result<(Vec<RunRow>, Vec<TimingRow>)> {
                let t0 = Instant::now();
                let adapted = relaxation_adaption(
                    &sim.scan,
                    &RelaxationParams::uniform(tau, manifest.dt),
                )?;
                let adapt_seconds = t0.elapsed().as_secs_f64();

                let t1 = Instant::now();
                let core_cfg = CoreStageConfig {
                    gamma,
                    cg_max_iters: manifest.core_cg_max_iters,
                    cg_tol: manifest.core_cg_tol,
                    nx: manifest.nx,
                    ny: manifest.ny,
                    fov: manifest.fov,
                };
                let (field, _report) = core_stage_solve(&adapted, &core_cfg, &params)?;
                let core_seconds = t1.elapsed().as_secs_f64();

                let trace = trace_of(&field);
                let (psnr_trace, ssim_trace) = metric_pair(&trace, &sim.gt_trace)?;
                if manifest.write_images {
                    write_pgm16(
                        &manifest.out_dir.join(format!(
                            "trace_p{pi}_tau{}_gamma{}.pgm",
                            fmt_param(tau),
                            fmt_param(gamma)
                        )),
                        &trace,
                    )?;
                }

                let mut rows = Vec::new();
                let mut timings = Vec::new();
                for &nu0 in &manifest.nu0s {
                    let t2 = Instant::now();
                    let deconv_cfg = DeconvConfig {
                        nu0,
                        n_it: manifest.n_it,
                        beta: manifest.beta,
                        cg_max_iters: manifest.deconv_cg_max_iters,
                        cg_tol: manifest.deconv_cg_tol,
                        padding_percent: manifest.pad_percent,
                        cut_percent: manifest.cut_percent,
                    };
                    let (rho, _hqs) = hqs_deconvolve(&field, &params, &deconv_cfg, denoiser.as_ref())?;
                    let deconv_seconds = t2.elapsed().as_secs_f64();
                    let (psnr_rho, ssim_rho) = metric_pair(&rho, &sim.truth)?;
                    if manifest.write_images {
                        write_pgm16(
                            &manifest.out_dir.join(format!(
                                "rho_p{pi}_tau{}_gamma{}_nu{}.pgm",
                                fmt_param(tau),
                                fmt_param(gamma),
                                fmt_param(nu0)
                            )),
                            &rho,
                        )?;
                    }
                    rows.push(RunRow {
                        phantom: sim.name.clone(),
                        tau,
                        gamma,
                        nu0,
                        n_it: manifest.n_it,
                        psnr_trace,
                        ssim_trace,
                        psnr_rho,
                        ssim_rho,
                    });
                    timings.push(TimingRow {
                        phantom: sim.name.clone(),
                        tau,
                        gamma,
                        nu0,
                        adapt_seconds,
                        core_seconds,
                        deconv_seconds,
                    });
                }
                Ok((rows, timings))
            };
            work().map_err(|e| format!("{tag}: {e}"))
        })
        .collect();

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut failures = Vec::new();
    // reassemble in manifest order: items are (phantom, tau, gamma) blocks
    let mut by_item: Vec<Option<(Vec<RunRow>, Vec<TimingRow>)>> = Vec::new();
    for r in results {
        match r {
            Ok(pair) => by_item.push(Some(pair)),
            Err(msg) => {
                failures.push(msg);
                by_item.push(None);
            }
        }
    }
    // order rows phantom-major to match nested sweep semantics
    for (idx, _) in items.iter().enumerate() {
        if let Some((r, t)) = &by_item[idx] {
            rows.extend(r.iter().cloned());
            timings.extend(t.iter().cloned());
        }
    }

    // summary: mean over phantoms per (tau, gamma, nu0) in sweep order
    let mut summary = Vec::new();
    for &tau in &manifest.taus {
        for &gamma in &manifest.gammas {
            for &nu0 in &manifest.nu0s {
                let group: Vec<&RunRow> = rows
                    .iter()
                    .filter(|r| r.tau == tau && r.gamma == gamma && r.nu0 == nu0)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let n = group.len() as f64;
                summary.push(SummaryRow {
                    tau,
                    gamma,
                    nu0,
                    mean_psnr_trace: group.iter().map(|r| r.psnr_trace).sum::<f64>() / n,
                    mean_ssim_trace: group.iter().map(|r| r.ssim_trace).sum::<f64>() / n,
                    mean_psnr_rho: group.iter().map(|r| r.psnr_rho).sum::<f64>() / n,
                    mean_ssim_rho: group.iter().map(|r| r.ssim_rho).sum::<f64>() / n,
                });
            }
        }
    }
    let best = summary
        .iter()
        .fold(None::<SummaryRow>, |acc, row| match acc {
            // strictly-greater keeps the earliest (smallest) parameters on ties
            Some(b) if row.mean_psnr_rho > b.mean_psnr_rho => Some(row.clone()),
            None => Some(row.clone()),
            other => other,
        });

    write_outputs(manifest, &rows, &timings, &summary, best.as_ref(), &failures)?;
    Ok(PipelineOutcome {
        rows,
        timings,
        summary,
        best,
        failures,
    })
}

fn write_outputs(
    manifest: &ExperimentManifest,
    rows: &[RunRow],
    timings: &[TimingRow],
    summary: &[SummaryRow],
    best: Option<&SummaryRow>,
    failures: &[String],
) -> Result<()> {
    let dir = &manifest.out_dir;
    let mut metrics = std::fs::File::create(dir.join("metrics.csv"))?;
    writeln!(
        metrics,
        "phantom,tau,gamma,nu0,n_it,psnr_trace,ssim_trace,psnr_rho,ssim_rho"
    )?;
    for r in rows {
        writeln!(
            metrics,
            "{},{},{},{},{},{},{},{},{}",
            r.phantom, r.tau, r.gamma, r.nu0, r.n_it, r.psnr_trace, r.ssim_trace, r.psnr_rho, r.ssim_rho
        )?;
    }

    let mut tim = std::fs::File::create(dir.join("timings.csv"))?;
    writeln!(tim, "phantom,tau,gamma,nu0,adapt_s,core_s,deconv_s")?;
    for t in timings {
        writeln!(
            tim,
            "{},{},{},{},{:.3},{:.3},{:.3}",
            t.phantom, t.tau, t.gamma, t.nu0, t.adapt_seconds, t.core_seconds, t.deconv_seconds
        )?;
    }

    let mut sum = std::fs::File::create(dir.join("summary.csv"))?;
    writeln!(
        sum,
        "tau,gamma,nu0,mean_psnr_trace,mean_ssim_trace,mean_psnr_rho,mean_ssim_rho"
    )?;
    for s in summary {
        writeln!(
            sum,
            "{},{},{},{},{},{},{}",
            s.tau, s.gamma, s.nu0, s.mean_psnr_trace, s.mean_ssim_trace, s.mean_psnr_rho, s.mean_ssim_rho
        )?;
    }

    if let Some(b) = best {
        let mut f = std::fs::File::create(dir.join("best.csv"))?;
        writeln!(f, "tau,gamma,nu0,mean_psnr_rho,mean_ssim_rho")?;
        writeln!(
            f,
            "{},{},{},{},{}",
            b.tau, b.gamma, b.nu0, b.mean_psnr_rho, b.mean_ssim_rho
        )?;
    }

    if !failures.is_empty() {
        let mut f = std::fs::File::create(dir.join("errors.log"))?;
        for line in failures {
            writeln!(f, "{line}")?;
        }
    }
    Ok(())
}

/// Convenience wrapper used by the CLI's `metrics` subcommand.
pub fn grid_metrics(image: &Path, reference: &Path) -> Result<(f64, f64)> {
    let a = mpi_recon_core::io::read_scalar_grid(std::fs::File::open(image)?)?;
    let b = mpi_recon_core::io::read_scalar_grid(std::fs::File::open(reference)?)?;
    metric_pair(&a, &b)
}
