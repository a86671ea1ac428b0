//! Experiment manifests: a flat, line-oriented `key = value` file with
//! `[section]` headers. Values may repeat to build lists and numeric fields
//! accept comma-separated lists and `a/b` fractions; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mpi_recon_core::error::{Error, Result};
use mpi_recon_core::grid::Fov;
use mpi_recon_core::params::PhysicalParams;
use mpi_recon_core::phantom::{builtin_phantom, parse_phantom, Phantom};
use mpi_recon_core::trajectory::{lissajous_trajectory, Trajectory};

/// Which denoiser the deconvolution stage plugs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    Tikhonov,
    Identity,
}

impl std::str::FromStr for DenoiserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tikhonov" => Ok(DenoiserKind::Tikhonov),
            "identity" => Ok(DenoiserKind::Identity),
            other => Err(Error::config(format!(
                "unknown denoiser '{other}' (expected tikhonov or identity)"
            ))),
        }
    }
}

/// Fully resolved experiment description driving the pipeline runner.
#[derive(Debug, Clone)]
pub struct ExperimentManifest {
    /// Phantom selectors: `builtin:<name>` or a path to a phantom file.
    pub phantoms: Vec<String>,
    pub nx: usize,
    pub ny: usize,
    pub fov: Fov,
    pub amplitude: [f64; 2],
    pub fx: f64,
    pub fy: f64,
    pub dt: f64,
    pub samples: usize,
    pub tau_gt: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub taus: Vec<f64>,
    pub gammas: Vec<f64>,
    pub nu0s: Vec<f64>,
    pub n_it: usize,
    pub core_cg_max_iters: usize,
    pub core_cg_tol: f64,
    pub deconv_cg_max_iters: usize,
    pub deconv_cg_tol: f64,
    pub pad_percent: f64,
    pub cut_percent: f64,
    pub denoiser: DenoiserKind,
    pub beta: [bool; 4],
    pub out_dir: PathBuf,
    pub write_images: bool,
}

/// Raw parsed `section.key -> values` map.
#[derive(Debug, Default)]
struct RawManifest {
    entries: BTreeMap<String, Vec<String>>,
}

impl RawManifest {
    fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(format!("line {}: unterminated section header", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries.entry(full).or_default().push(value.trim().to_string());
        }
        Ok(RawManifest { entries })
    }

    fn values(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(|v| v.as_slice())
    }

    fn single(&self, key: &str) -> Result<Option<&str>> {
        match self.values(key) {
            None => Ok(None),
            Some([v]) => Ok(Some(v)),
            Some(_) => Err(Error::config(format!("key '{key}' given more than once"))),
        }
    }
}

/// Parses a float, accepting `a/b` fractions (useful for exact scanner
/// frequencies like `2.5e6/102`).
pub fn parse_float(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| bad_number(s))?;
        let d: f64 = den.trim().parse().map_err(|_| bad_number(s))?;
        if d == 0.0 {
            return Err(Error::config(format!("division by zero in '{s}'")));
        }
        return Ok(n / d);
    }
    match s {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => s.parse().map_err(|_| bad_number(s)),
    }
}

fn bad_number(s: &str) -> Error {
    Error::config(format!("cannot parse number '{s}'"))
}

fn parse_float_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_float).collect()
}

impl ExperimentManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read manifest {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_with_base(&text, &base)
    }

    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self> {
        let raw = RawManifest::parse(text)?;
        let float = |key: &str, default: f64| -> Result<f64> {
            raw.single(key)?.map(parse_float).unwrap_or(Ok(default))
        };
        let uint = |key: &str, default: usize| -> Result<usize> {
            match raw.single(key)? {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::config(format!("bad integer for '{key}': '{v}'"))),
            }
        };
        let float_list = |key: &str, default: &[f64]| -> Result<Vec<f64>> {
            match raw.values(key) {
                None => Ok(default.to_vec()),
                Some(vals) => {
                    let mut out = Vec::new();
                    for v in vals {
                        out.extend(parse_float_list(v)?);
                    }
                    Ok(out)
                }
            }
        };

        let phantoms: Vec<String> = match raw.values("phantoms.phantom") {
            Some(vals) => vals.to_vec(),
            None => vec!["builtin:dot".to_string()],
        };

        let nx = uint("grid.nx", 32)?;
        let ny = uint("grid.ny", 32)?;
        let amplitude_x = float("trajectory.amplitude_x", 0.012)?;
        let amplitude_y = float("trajectory.amplitude_y", 0.012)?;
        let fov_x = float("grid.fov_x", amplitude_x)?;
        let fov_y = float("grid.fov_y", amplitude_y)?;
        let fov = Fov::centered(fov_x, fov_y)?;

        let taus = float_list("adapt.tau", &[0.0])?;
        let gammas = float_list("core.gamma", &[7e-7])?;
        let nu0s = float_list("deconv.nu0", &[1e-7])?;
        for (name, list) in [("adapt.tau", &taus), ("core.gamma", &gammas), ("deconv.nu0", &nu0s)] {
            if list.is_empty() {
                return Err(Error::config(format!("sweep list '{name}' is empty")));
            }
        }

        let beta = match raw.single("deconv.beta")? {
            None => [true; 4],
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(Error::config(
                        "deconv.beta expects four comma-separated 0/1 flags (order 11,12,21,22)",
                    ));
                }
                let mut b = [false; 4];
                for (i, p) in parts.iter().enumerate() {
                    b[i] = match *p {
                        "1" => true,
                        "0" => false,
                        other => {
                            return Err(Error::config(format!("beta flag must be 0 or 1, got '{other}'")))
                        }
                    };
                }
                b
            }
        };

        let denoiser: DenoiserKind = raw
            .single("deconv.denoiser")?
            .unwrap_or("tikhonov")
            .parse()?;

        let out_dir = {
            let dir = raw.single("output.dir")?.unwrap_or("runs/out").to_string();
            let p = PathBuf::from(&dir);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let write_images = match raw.single("output.images")? {
            None => true,
            Some("true") | Some("1") => true,
            Some("false") | Some("0") => false,
            Some(other) => {
                return Err(Error::config(format!("output.images must be true/false, got '{other}'")))
            }
        };

        let seed = match raw.single("simulate.seed")? {
            None => 42,
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("bad seed '{v}'")))?,
        };

        let manifest = ExperimentManifest {
            phantoms,
            nx,
            ny,
            fov,
            amplitude: [amplitude_x, amplitude_y],
            fx: float("trajectory.fx", 2.5e6 / 102.0)?,
            fy: float("trajectory.fy", 2.5e6 / 96.0)?,
            dt: float("trajectory.dt", 4e-7)?,
            samples: uint("trajectory.samples", 1632)?,
            tau_gt: float("simulate.tau_gt", 5e-6)?,
            snr_db: float("simulate.snr_db", 40.0)?,
            seed,
            taus,
            gammas,
            nu0s,
            n_it: uint("deconv.n_it", 10)?,
            core_cg_max_iters: uint("core.cg_max_iters", 15_000)?,
            core_cg_tol: float("core.cg_tol", 1e-6)?,
            deconv_cg_max_iters: uint("deconv.cg_max_iters", 10_000)?,
            deconv_cg_tol: float("deconv.cg_tol", 1e-12)?,
            pad_percent: float("deconv.pad_pct", 5.0)?,
            cut_percent: float("deconv.cut_pct", 5.0)?,
            denoiser,
            beta,
            out_dir,
            write_images,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phantoms.is_empty() {
            return Err(Error::config("at least one phantom is required"));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::config("grid must be at least 2x2"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) || self.samples == 0 {
            return Err(Error::config("trajectory needs dt > 0 and samples > 0"));
        }
        if self.taus.iter().any(|&t| t < 0.0) {
            return Err(Error::config("relaxation times must be >= 0"));
        }
        if self.tau_gt < 0.0 {
            return Err(Error::config("simulated tau must be >= 0"));
        }
        if self.n_it == 0 {
            return Err(Error::config("deconv.n_it must be at least 1"));
        }
        Ok(())
    }

    /// Resolves a phantom selector against this manifest's geometry.
    pub fn load_phantom(&self, selector: &str) -> Result<Phantom> {
        if let Some(name) = selector.strip_prefix("builtin:") {
            builtin_phantom(name, self.fov)
        } else {
            let text = std::fs::read_to_string(selector)
                .map_err(|e| Error::config(format!("cannot read phantom '{selector}': {e}")))?;
            parse_phantom(&text)
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        lissajous_trajectory(
            self.amplitude[0],
            self.amplitude[1],
            self.fx,
            self.fy,
            self.dt,
            self.samples,
        )
    }

    pub fn physical_params(&self) -> PhysicalParams {
        PhysicalParams::simulation_2d()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_manifest() {
        let text = "\
[phantoms]
phantom = builtin:dot
phantom = builtin:el

[grid]
nx = 16
ny = 16

[trajectory]
fx = 2.5e6/102
fy = 2.5e6/96
dt = 4e-7
samples = 408

[simulate]
tau_gt = 5e-6
snr_db = 40
seed = 7

[adapt]
tau = 0,1e-7,1e-6

[core]
gamma = 7e-7
cg_max_iters = 500
cg_tol = 1e-6

[deconv]
nu0 = 1e-7,1e-8
n_it = 5
beta = 1,0,0,1
denoiser = identity

[output]
dir = out
images = false
";
        let m = ExperimentManifest::from_str_with_base(text, Path::new("/tmp/base")).unwrap();
        assert_eq!(m.phantoms, vec!["builtin:dot", "builtin:el"]);
        assert_eq!(m.nx, 16);
        assert_eq!(m.samples, 408);
        assert!((m.fx - 2.5e6 / 102.0).abs() < 1e-9);
        assert_eq!(m.taus, vec![0.0, 1e-7, 1e-6]);
        assert_eq!(m.nu0s, vec![1e-7, 1e-8]);
        assert_eq!(m.beta, [true, false, false, true]);
        assert_eq!(m.denoiser, DenoiserKind::Identity);
        assert_eq!(m.seed, 7);
        assert_eq!(m.out_dir, PathBuf::from("/tmp/base/out"));
        assert!(!m.write_images);
    }

    #[test]
    fn defaults_cover_missing_sections() {
        let m = ExperimentManifest::from_str_with_base("", Path::new(".")).unwrap();
        assert_eq!(m.nx, 32);
        assert_eq!(m.samples, 1632);
        assert_eq!(m.taus, vec![0.0]);
        assert_eq!(m.gammas, vec![7e-7]);
        assert_eq!(m.denoiser, DenoiserKind::Tikhonov);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(ExperimentManifest::from_str_with_base("[grid\nnx = 2", Path::new(".")).is_err());
        assert!(ExperimentManifest::from_str_with_base("just text", Path::new(".")).is_err());
        assert!(
            ExperimentManifest::from_str_with_base("[grid]\nnx = -3", Path::new(".")).is_err()
        );
        assert!(ExperimentManifest::from_str_with_base(
            "[deconv]\nbeta = 1,1",
            Path::new(".")
        )
        .is_err());
        assert!(ExperimentManifest::from_str_with_base(
            "[adapt]\ntau = -1e-6",
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn fraction_floats() {
        assert!((parse_float("2.5e6/102").unwrap() - 24509.80392156863).abs() < 1e-6);
        assert_eq!(parse_float("inf").unwrap(), f64::INFINITY);
        assert!(parse_float("1/0").is_err());
        assert!(parse_float("abc").is_err());
    }
}
