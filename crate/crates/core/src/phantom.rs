//! Phantom descriptions and their rasterization onto the FOV grid.

use crate::error::{Error, Result};
use crate::grid::{Fov, ScalarGrid};

/// Shape primitives with per-primitive intensity. Coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Disc {
        center: [f64; 2],
        radius: f64,
        intensity: f64,
    },
    Rect {
        min: [f64; 2],
        max: [f64; 2],
        intensity: f64,
    },
    /// Polyline drawn with a round pen of the given width.
    Tube {
        points: Vec<[f64; 2]>,
        width: f64,
        intensity: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Phantom {
    pub primitives: Vec<Primitive>,
}

/// Output of [`rasterize_phantom`]: the grid plus the number of primitives
/// that extended beyond the FOV and were clipped.
#[derive(Debug, Clone)]
pub struct Rasterized {
    pub grid: ScalarGrid,
    pub clipped: usize,
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

impl Primitive {
    fn intensity(&self) -> f64 {
        match self {
            Primitive::Disc { intensity, .. }
            | Primitive::Rect { intensity, .. }
            | Primitive::Tube { intensity, .. } => *intensity,
        }
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Primitive::Disc { center, radius, .. } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                d[0] * d[0] + d[1] * d[1] <= radius * radius
            }
            Primitive::Rect { min, max, .. } => {
                p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
            }
            Primitive::Tube { points, width, .. } => {
                if points.len() < 2 {
                    return false;
                }
                let half = width / 2.0;
                points
                    .windows(2)
                    .any(|s| point_segment_distance(p, s[0], s[1]) <= half)
            }
        }
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Primitive::Disc { center, radius, .. } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Primitive::Rect { min, max, .. } => (*min, *max),
            Primitive::Tube { points, width, .. } => {
                let half = width / 2.0;
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for p in points {
                    for c in 0..2 {
                        lo[c] = lo[c].min(p[c] - half);
                        hi[c] = hi[c].max(p[c] + half);
                    }
                }
                (lo, hi)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Disc { center, radius, intensity } => {
                center.iter().all(|v| v.is_finite()) && *radius > 0.0 && intensity.is_finite() && *intensity >= 0.0
            }
            Primitive::Rect { min, max, intensity } => {
                min[0] < max[0] && min[1] < max[1] && intensity.is_finite() && *intensity >= 0.0
            }
            Primitive::Tube { points, width, intensity } => {
                points.len() >= 2
                    && points.iter().all(|p| p.iter().all(|v| v.is_finite()))
                    && *width > 0.0
                    && intensity.is_finite()
                    && *intensity >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid phantom primitive: {self:?}")))
        }
    }
}

/// Subsamples per cell edge in the coverage estimate.
const SUPERSAMPLE: usize = 16;

/// Antialiased coverage rasterization; each cell gets the mean over
/// subsamples of the pointwise maximum of `intensity * membership` across
/// primitives, so values stay in `[0, max intensity]`.
pub fn rasterize_phantom(phantom: &Phantom, nx: usize, ny: usize, fov: Fov) -> Result<Rasterized> {
    let mut grid = ScalarGrid::zeros(nx, ny, fov)?;
    let mut clipped = 0;
    for prim in &phantom.primitives {
        prim.validate()?;
        let (lo, hi) = prim.bbox();
        if !(fov.contains(lo) && fov.contains(hi)) {
            clipped += 1;
        }
    }
    if phantom.primitives.is_empty() {
        return Ok(Rasterized { grid, clipped });
    }
    let hx = grid.hx();
    let hy = grid.hy();
    let inv_s = 1.0 / SUPERSAMPLE as f64;
    for ix in 0..nx {
        for iy in 0..ny {
            let x0 = fov.x0 + ix as f64 * hx;
            let y0 = fov.y0 + iy as f64 * hy;
            // Quick reject: skip cells away from every primitive bbox.
            let cell_far = phantom.primitives.iter().all(|p| {
                let (lo, hi) = p.bbox();
                x0 + hx < lo[0] || x0 > hi[0] || y0 + hy < lo[1] || y0 > hi[1]
            });
            if cell_far {
                continue;
            }
            let mut acc = 0.0;
            for sx in 0..SUPERSAMPLE {
                let px = x0 + (sx as f64 + 0.5) * inv_s * hx;
                for sy in 0..SUPERSAMPLE {
                    let py = y0 + (sy as f64 + 0.5) * inv_s * hy;
                    let mut v = 0.0f64;
                    for prim in &phantom.primitives {
                        if prim.contains([px, py]) {
                            v = v.max(prim.intensity());
                        }
                    }
                    acc += v;
                }
            }
            grid.values[[ix, iy]] = acc * inv_s * inv_s;
        }
    }
    Ok(Rasterized { grid, clipped })
}

/// Named phantom layouts used by the experiment runner, scaled to the FOV.
pub fn builtin_phantom(name: &str, fov: Fov) -> Result<Phantom> {
    let w = fov.width();
    let h = fov.height();
    let cx = (fov.x0 + fov.x1) / 2.0;
    let cy = (fov.y0 + fov.y1) / 2.0;
    let s = w.min(h);
    let prims = match name {
        "dot" => vec![Primitive::Disc {
            center: [cx + 0.08 * w, cy - 0.05 * h],
            radius: 0.14 * s,
            intensity: 1.0,
        }],
        "two-dots" => vec![
            Primitive::Disc {
                center: [cx - 0.2 * w, cy - 0.15 * h],
                radius: 0.11 * s,
                intensity: 1.0,
            },
            Primitive::Disc {
                center: [cx + 0.18 * w, cy + 0.17 * h],
                radius: 0.09 * s,
                intensity: 0.8,
            },
        ],
        "el" => vec![
            Primitive::Rect {
                min: [cx - 0.25 * w, cy - 0.25 * h],
                max: [cx - 0.1 * w, cy + 0.25 * h],
                intensity: 1.0,
            },
            Primitive::Rect {
                min: [cx - 0.1 * w, cy - 0.25 * h],
                max: [cx + 0.25 * w, cy - 0.1 * h],
                intensity: 1.0,
            },
        ],
        "bar" => vec![Primitive::Rect {
            min: [cx - 0.3 * w, cy - 0.08 * h],
            max: [cx + 0.3 * w, cy + 0.08 * h],
            intensity: 1.0,
        }],
        "spiral" => {
            let turns = 1.75;
            let n = 48;
            let points = (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    let ang = turns * std::f64::consts::TAU * t;
                    let r = (0.08 + 0.27 * t) * s / 2.0;
                    [cx + r * ang.cos(), cy + r * ang.sin()]
                })
                .collect();
            vec![Primitive::Tube {
                points,
                width: 0.07 * s,
                intensity: 1.0,
            }]
        }
        other => {
            return Err(Error::config(format!(
                "unknown builtin phantom '{other}' (expected dot, two-dots, el, bar or spiral)"
            )))
        }
    };
    Ok(Phantom { primitives: prims })
}

/// Parses the line-oriented phantom text format. One primitive per line,
/// coordinates in meters, `#` starts a comment:
///
/// ```text
/// disc cx cy radius intensity
/// rect x0 y0 x1 y1 intensity
/// tube width intensity x0 y0 x1 y1 [x2 y2 ...]
/// ```
pub fn parse_phantom(text: &str) -> Result<Phantom> {
    let mut primitives = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().unwrap_or("");
        let nums: std::result::Result<Vec<f64>, _> = tokens.map(str::parse::<f64>).collect();
        let nums = nums.map_err(|e| {
            Error::format(format!("phantom line {}: bad number ({e})", lineno + 1))
        })?;
        let bad = |msg: &str| Error::format(format!("phantom line {}: {msg}", lineno + 1));
        let prim = match kind {
            "disc" => {
                if nums.len() != 4 {
                    return Err(bad("disc expects: cx cy radius intensity"));
                }
                Primitive::Disc {
                    center: [nums[0], nums[1]],
                    radius: nums[2],
                    intensity: nums[3],
                }
            }
            "rect" => {
                if nums.len() != 5 {
                    return Err(bad("rect expects: x0 y0 x1 y1 intensity"));
                }
                Primitive::Rect {
                    min: [nums[0], nums[1]],
                    max: [nums[2], nums[3]],
                    intensity: nums[4],
                }
            }
            "tube" => {
                if nums.len() < 6 || (nums.len() - 2) % 2 != 0 {
                    return Err(bad("tube expects: width intensity x0 y0 x1 y1 ..."));
                }
                Primitive::Tube {
                    width: nums[0],
                    intensity: nums[1],
                    points: nums[2..].chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
                }
            }
            other => return Err(bad(&format!("unknown primitive '{other}'"))),
        };
        prim.validate()?;
        primitives.push(prim);
    }
    Ok(Phantom { primitives })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fov() -> Fov {
        Fov::centered(0.012, 0.012).unwrap()
    }

    #[test]
    fn empty_phantom_rasterizes_to_zero() {
        let r = rasterize_phantom(&Phantom::default(), 16, 16, fov()).unwrap();
        assert!(r.grid.values.iter().all(|&v| v == 0.0));
        assert_eq!(r.clipped, 0);
    }

    #[test]
    fn full_fov_rectangle_fills_every_cell() {
        let f = fov();
        let ph = Phantom {
            primitives: vec![Primitive::Rect {
                min: [f.x0, f.y0],
                max: [f.x1, f.y1],
                intensity: 1.0,
            }],
        };
        let r = rasterize_phantom(&ph, 12, 12, f).unwrap();
        assert!(r.grid.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn disc_mass_matches_analytic_area() {
        let f = fov();
        let radius = 0.3 * f.width() / 2.0;
        let ph = Phantom {
            primitives: vec![Primitive::Disc {
                center: [0.0, 0.0],
                radius,
                intensity: 1.0,
            }],
        };
        let r = rasterize_phantom(&ph, 50, 50, f).unwrap();
        let area = std::f64::consts::PI * radius * radius;
        let mass = r.grid.mass();
        assert!(
            (mass - area).abs() < 0.02 * area,
            "mass {mass} vs analytic {area}"
        );
        assert_eq!(r.clipped, 0);
    }

    #[test]
    fn out_of_fov_primitive_is_counted_as_clipped() {
        let f = fov();
        let ph = Phantom {
            primitives: vec![Primitive::Disc {
                center: [f.x1, 0.0],
                radius: 0.002,
                intensity: 1.0,
            }],
        };
        let r = rasterize_phantom(&ph, 16, 16, f).unwrap();
        assert_eq!(r.clipped, 1);
        assert!(r.grid.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn builtin_phantoms_have_support_in_fov() {
        for name in ["dot", "two-dots", "el", "bar", "spiral"] {
            let ph = builtin_phantom(name, fov()).unwrap();
            let r = rasterize_phantom(&ph, 32, 32, fov()).unwrap();
            assert_eq!(r.clipped, 0, "{name} extends outside FOV");
            assert!(r.grid.values.iter().any(|&v| v > 0.0), "{name} is empty");
            assert!(r.grid.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(builtin_phantom("nope", fov()).is_err());
    }

    #[test]
    fn parse_phantom_accepts_all_primitives() {
        let text = "# two shapes\ndisc 0.001 -0.002 0.003 1.0\nrect -0.004 -0.004 0.0 0.0 0.5  # inline comment\ntube 0.002 1.0 -0.005 0.0 0.005 0.0\n";
        let ph = parse_phantom(text).unwrap();
        assert_eq!(ph.primitives.len(), 3);
        assert!(matches!(ph.primitives[0], Primitive::Disc { .. }));
        assert!(matches!(ph.primitives[1], Primitive::Rect { .. }));
        assert!(matches!(ph.primitives[2], Primitive::Tube { .. }));
    }

    #[test]
    fn parse_phantom_rejects_malformed_lines() {
        assert!(parse_phantom("disc 0 0 0.1").is_err());
        assert!(parse_phantom("blob 1 2 3 4").is_err());
        assert!(parse_phantom("rect 0 0 x 1 1").is_err());
        assert!(parse_phantom("tube 0.01 1.0 0.0 0.0").is_err());
        // negative radius fails primitive validation
        assert!(parse_phantom("disc 0 0 -0.1 1").is_err());
    }

    #[test]
    fn tube_covers_its_segment() {
        let ph = Phantom {
            primitives: vec![Primitive::Tube {
                points: vec![[-0.006, 0.0], [0.006, 0.0]],
                width: 0.003,
                intensity: 1.0,
            }],
        };
        let r = rasterize_phantom(&ph, 48, 48, fov()).unwrap();
        // expected mass: rectangle plus two half-disc caps
        let expected = 0.012 * 0.003 + std::f64::consts::PI * 0.0015f64.powi(2);
        let mass = r.grid.mass();
        assert!((mass - expected).abs() < 0.05 * expected, "mass {mass} vs {expected}");
    }
}
