//! Serialization: a binary container family with a versioned header for
//! scans, grids and spectra, plus CSV debug export, a two-column AF-TF
//! reader and 16-bit PGM image export.
//!
//! Container layout: 8-byte magic `MPIBIN\0\0`, `u16` version, `u16` kind,
//! then a kind-specific header and little-endian `f64` payload arrays.
//! Grids are stored x-major (`ix * ny + iy`).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Fov, MatrixFieldGrid, ScalarGrid};
use crate::preprocess::SpectrumRecord;
use crate::scan::{ModelTag, ScanRecord};

const MAGIC: &[u8; 8] = b"MPIBIN\0\0";
const VERSION: u16 = 1;

const KIND_SCAN: u16 = 1;
const KIND_SCALAR_GRID: u16 = 2;
const KIND_MATRIX_GRID: u16 = 3;
const KIND_SPECTRUM: u16 = 4;

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn new(mut out: W, kind: u16) -> Result<Self> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&kind.to_le_bytes())?;
        Ok(Writer { out })
    }

    fn u16(&mut self, v: u16) -> Result<()> {
        Ok(self.out.write_all(&v.to_le_bytes())?)
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.out.write_all(&v.to_le_bytes())?)
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.out.write_all(&v.to_le_bytes())?)
    }

    fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }

    fn fov(&mut self, f: &Fov) -> Result<()> {
        self.f64(f.x0)?;
        self.f64(f.x1)?;
        self.f64(f.y0)?;
        self.f64(f.y1)
    }
}

struct Reader<R: Read> {
    inp: R,
}

impl<R: Read> Reader<R> {
    fn new(mut inp: R, expected_kind: u16) -> Result<Self> {
        let mut magic = [0u8; 8];
        inp.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("bad magic: not an MPIBIN container"));
        }
        let mut r = Reader { inp };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported container version {version}")));
        }
        let kind = r.u16()?;
        if kind != expected_kind {
            return Err(Error::format(format!(
                "container kind {kind} does not match expected {expected_kind}"
            )));
        }
        Ok(r)
    }

    fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.inp.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn fov(&mut self) -> Result<Fov> {
        let (x0, x1, y0, y1) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        Fov::new(x0, x1, y0, y1)
    }
}

fn pairs_flat(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|p| p.iter().copied()).collect()
}

fn unflatten_pairs(v: &[f64]) -> Vec<[f64; 2]> {
    v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

pub fn write_scan<W: Write>(out: W, scan: &ScanRecord) -> Result<()> {
    let mut w = Writer::new(out, KIND_SCAN)?;
    w.u16(2)?; // channel count
    w.u64(scan.len() as u64)?;
    w.f64(scan.dt)?;
    let (tag, tau) = match scan.model {
        ModelTag::Langevin => (0u16, 0.0),
        ModelTag::Debye { tau } => (1u16, tau),
    };
    w.u16(tag)?;
    w.f64(tau)?;
    w.f64(scan.calibration)?;
    w.u16(scan.s0.is_some() as u16)?;
    w.f64_slice(&pairs_flat(&scan.samples))?;
    w.f64_slice(&pairs_flat(&scan.positions))?;
    w.f64_slice(&pairs_flat(&scan.velocities))?;
    if let Some(s0) = scan.s0 {
        w.f64_slice(&s0)?;
    }
    Ok(())
}

pub fn read_scan<R: Read>(inp: R) -> Result<ScanRecord> {
    let mut r = Reader::new(inp, KIND_SCAN)?;
    let n = r.u16()?;
    if n != 2 {
        return Err(Error::format(format!("expected 2 channels, found {n}")));
    }
    let l = r.u64()? as usize;
    let dt = r.f64()?;
    let tag = r.u16()?;
    let tau = r.f64()?;
    let model = match tag {
        0 => ModelTag::Langevin,
        1 => ModelTag::Debye { tau },
        other => return Err(Error::format(format!("unknown model tag {other}"))),
    };
    let calibration = r.f64()?;
    let has_s0 = r.u16()? != 0;
    let samples = unflatten_pairs(&r.f64_vec(2 * l)?);
    let positions = unflatten_pairs(&r.f64_vec(2 * l)?);
    let velocities = unflatten_pairs(&r.f64_vec(2 * l)?);
    let s0 = if has_s0 {
        let v = r.f64_vec(2)?;
        Some([v[0], v[1]])
    } else {
        None
    };
    ScanRecord::new(samples, positions, velocities, dt, model, s0, calibration)
}

pub fn write_scalar_grid<W: Write>(out: W, g: &ScalarGrid) -> Result<()> {
    let mut w = Writer::new(out, KIND_SCALAR_GRID)?;
    w.u64(g.nx() as u64)?;
    w.u64(g.ny() as u64)?;
    w.fov(&g.fov)?;
    w.f64_slice(g.values.as_slice().expect("row-major"))?;
    Ok(())
}

pub fn read_scalar_grid<R: Read>(inp: R) -> Result<ScalarGrid> {
    let mut r = Reader::new(inp, KIND_SCALAR_GRID)?;
    let nx = r.u64()? as usize;
    let ny = r.u64()? as usize;
    let fov = r.fov()?;
    let values = r.f64_vec(nx * ny)?;
    let arr = Array2::from_shape_vec((nx, ny), values)
        .map_err(|e| Error::format(format!("bad grid payload: {e}")))?;
    ScalarGrid::from_values(arr, fov)
}

pub fn write_matrix_grid<W: Write>(out: W, g: &MatrixFieldGrid) -> Result<()> {
    let mut w = Writer::new(out, KIND_MATRIX_GRID)?;
    w.u64(g.nx() as u64)?;
    w.u64(g.ny() as u64)?;
    w.fov(&g.fov)?;
    for c in 0..4 {
        w.f64_slice(g.comps[c].as_slice().expect("row-major"))?;
    }
    Ok(())
}

pub fn read_matrix_grid<R: Read>(inp: R) -> Result<MatrixFieldGrid> {
    let mut r = Reader::new(inp, KIND_MATRIX_GRID)?;
    let nx = r.u64()? as usize;
    let ny = r.u64()? as usize;
    let fov = r.fov()?;
    let mut comps: Vec<Array2<f64>> = Vec::with_capacity(4);
    for _ in 0..4 {
        let values = r.f64_vec(nx * ny)?;
        comps.push(
            Array2::from_shape_vec((nx, ny), values)
                .map_err(|e| Error::format(format!("bad grid payload: {e}")))?,
        );
    }
    let comps: [Array2<f64>; 4] = comps.try_into().expect("four components");
    Ok(MatrixFieldGrid { comps, fov })
}

pub fn write_spectrum<W: Write>(out: W, s: &SpectrumRecord) -> Result<()> {
    let mut w = Writer::new(out, KIND_SPECTRUM)?;
    w.u16(2)?;
    w.u64(s.len() as u64)?;
    w.f64(s.df)?;
    w.u16(s.snr.is_some() as u16)?;
    for ch in 0..2 {
        for c in &s.spectra[ch] {
            w.f64(c.re)?;
            w.f64(c.im)?;
        }
    }
    if let Some(snr) = &s.snr {
        for ch in 0..2 {
            w.f64_slice(&snr[ch])?;
        }
    }
    Ok(())
}

pub fn read_spectrum<R: Read>(inp: R) -> Result<SpectrumRecord> {
    let mut r = Reader::new(inp, KIND_SPECTRUM)?;
    let n = r.u16()?;
    if n != 2 {
        return Err(Error::format(format!("expected 2 channels, found {n}")));
    }
    let l = r.u64()? as usize;
    let df = r.f64()?;
    let has_snr = r.u16()? != 0;
    let mut spectra: [Vec<Complex64>; 2] = [Vec::with_capacity(l), Vec::with_capacity(l)];
    for ch in 0..2 {
        for _ in 0..l {
            let re = r.f64()?;
            let im = r.f64()?;
            spectra[ch].push(Complex64::new(re, im));
        }
    }
    let snr = if has_snr {
        let a = r.f64_vec(l)?;
        let b = r.f64_vec(l)?;
        Some([a, b])
    } else {
        None
    };
    Ok(SpectrumRecord { spectra, df, snr })
}

/// CSV debug export: one row per sample with `t, s_x, s_y, r_x, r_y, v_x, v_y`.
pub fn write_scan_csv<W: Write>(mut out: W, scan: &ScanRecord) -> Result<()> {
    writeln!(out, "t,s_x,s_y,r_x,r_y,v_x,v_y")?;
    for k in 0..scan.len() {
        let t = (k + 1) as f64 * scan.dt;
        let s = scan.samples[k];
        let r = scan.positions[k];
        let v = scan.velocities[k];
        writeln!(out, "{t},{},{},{},{},{},{}", s[0], s[1], r[0], r[1], v[0], v[1])?;
    }
    Ok(())
}

/// Reads a per-channel AF transfer function from a two-column (real, imag)
/// CSV; `#`-prefixed lines and a `re,im`/`real,imag` header are skipped.
pub fn read_aftf_csv(path: &Path) -> Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let re = parts.next().unwrap_or("");
        let im = parts.next().unwrap_or("");
        if lineno == 0 && re.parse::<f64>().is_err() {
            continue; // header row
        }
        let re: f64 = re
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad real part '{re}'", lineno + 1)))?;
        let im: f64 = im
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad imag part '{im}'", lineno + 1)))?;
        out.push(Complex64::new(re, im));
    }
    if out.is_empty() {
        return Err(Error::format("transfer function file contains no rows"));
    }
    Ok(out)
}

/// 16-bit binary PGM with min-max normalization; the applied range is
/// recorded in a `<path>.meta.txt` sidecar. Negative values clip at export
/// only.
pub fn write_pgm16(path: &Path, g: &ScalarGrid) -> Result<()> {
    let (nx, ny) = g.values.dim();
    let lo = g.min().max(0.0);
    let hi = g.max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut data = Vec::with_capacity(nx * ny * 2);
    // image rows top-to-bottom = decreasing y
    for row in (0..ny).rev() {
        for col in 0..nx {
            let v = (g.values[[col, row]].max(0.0) - lo) / span;
            let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            data.extend_from_slice(&q.to_be_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{nx} {ny}\n65535\n")?;
    f.write_all(&data)?;
    let meta = format!(
        "min={lo}\nmax={hi}\nnx={nx}\nny={ny}\nfov={} {} {} {}\norientation=rows top-to-bottom are decreasing y\n",
        g.fov.x0, g.fov.x1, g.fov.y0, g.fov.y1
    );
    std::fs::write(path.with_extension("pgm.meta.txt"), meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_scan(l: usize) -> ScanRecord {
        let samples: Vec<[f64; 2]> = (0..l).map(|k| [k as f64 * 0.5, -(k as f64)]).collect();
        let positions: Vec<[f64; 2]> = (0..l).map(|k| [k as f64 * 1e-4, 1e-3]).collect();
        let velocities: Vec<[f64; 2]> = (0..l).map(|k| [1.0, k as f64]).collect();
        ScanRecord::new(
            samples,
            positions,
            velocities,
            4e-7,
            ModelTag::Debye { tau: 5e-6 },
            Some([0.25, -0.5]),
            -2.9e-24,
        )
        .unwrap()
    }

    #[test]
    fn scan_container_roundtrip() {
        let scan = sample_scan(17);
        let mut buf = Vec::new();
        write_scan(&mut buf, &scan).unwrap();
        let back = read_scan(buf.as_slice()).unwrap();
        assert_eq!(scan, back);
    }

    #[test]
    fn scalar_grid_roundtrip() {
        let fov = Fov::centered(0.01, 0.02).unwrap();
        let mut g = ScalarGrid::zeros(5, 7, fov).unwrap();
        for (i, v) in g.values.iter_mut().enumerate() {
            *v = i as f64 * 0.1 - 1.0;
        }
        let mut buf = Vec::new();
        write_scalar_grid(&mut buf, &g).unwrap();
        assert_eq!(read_scalar_grid(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn matrix_grid_roundtrip() {
        let fov = Fov::centered(0.01, 0.01).unwrap();
        let mut g = MatrixFieldGrid::zeros(4, 6, fov).unwrap();
        for c in 0..4 {
            for (i, v) in g.comps[c].iter_mut().enumerate() {
                *v = (c * 100 + i) as f64;
            }
        }
        let mut buf = Vec::new();
        write_matrix_grid(&mut buf, &g).unwrap();
        assert_eq!(read_matrix_grid(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn spectrum_roundtrip_with_snr() {
        let spec = SpectrumRecord {
            spectra: [
                (0..9).map(|k| Complex64::new(k as f64, -(k as f64))).collect(),
                (0..9).map(|k| Complex64::new(0.5 * k as f64, 2.0)).collect(),
            ],
            df: 1531.86,
            snr: Some([vec![1.0; 9], vec![2.0; 9]]),
        };
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &spec).unwrap();
        assert_eq!(read_spectrum(buf.as_slice()).unwrap(), spec);
    }

    #[test]
    fn rejects_wrong_kind_and_magic() {
        let scan = sample_scan(3);
        let mut buf = Vec::new();
        write_scan(&mut buf, &scan).unwrap();
        assert!(read_scalar_grid(buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_scan(buf.as_slice()).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let scan = sample_scan(5);
        let mut buf = Vec::new();
        write_scan(&mut buf, &scan).unwrap();
        buf.truncate(buf.len() - 7);
        assert!(read_scan(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_export_shape() {
        let scan = sample_scan(3);
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, &scan).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "t,s_x,s_y,r_x,r_y,v_x,v_y");
        assert_eq!(lines[1].split(',').count(), 7);
    }

    #[test]
    fn aftf_csv_reader_accepts_headers_and_comments() {
        let dir = std::env::temp_dir().join("mpi_recon_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("af.csv");
        std::fs::write(&path, "re,im\n# comment\n1.0,0.5\n2.0,-0.25\n").unwrap();
        let af = read_aftf_csv(&path).unwrap();
        assert_eq!(af, vec![Complex64::new(1.0, 0.5), Complex64::new(2.0, -0.25)]);
        std::fs::write(&path, "1.0,bad\n").unwrap();
        assert!(read_aftf_csv(&path).is_err());
    }

    #[test]
    fn pgm_export_writes_header_and_sidecar() {
        let dir = std::env::temp_dir().join("mpi_recon_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.pgm");
        let fov = Fov::centered(1.0, 1.0).unwrap();
        let mut g = ScalarGrid::zeros(4, 3, fov).unwrap();
        g.values[[0, 0]] = -1.0; // clipped at export
        g.values[[3, 2]] = 2.0;
        write_pgm16(&path, &g).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n65535\n"));
        assert_eq!(bytes.len(), 13 + 4 * 3 * 2);
        let meta = std::fs::read_to_string(dir.join("img.pgm.meta.txt")).unwrap();
        assert!(meta.contains("max=2"));
    }

    proptest! {
        #[test]
        fn scan_roundtrip_random(l in 1usize..40, tau in 1e-7f64..1e-4, has_s0 in proptest::bool::ANY) {
            let samples: Vec<[f64; 2]> = (0..l).map(|k| [(k as f64).sin(), (k as f64).cos()]).collect();
            let positions = vec![[0.0, 0.0]; l];
            let velocities = vec![[1.0, -1.0]; l];
            let scan = ScanRecord::new(
                samples,
                positions,
                velocities,
                4e-7,
                ModelTag::Debye { tau },
                has_s0.then_some([0.1, 0.2]),
                -1.0,
            )
            .unwrap();
            let mut buf = Vec::new();
            write_scan(&mut buf, &scan).unwrap();
            prop_assert_eq!(read_scan(buf.as_slice()).unwrap(), scan);
        }
    }
}
