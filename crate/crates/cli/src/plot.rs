//! Line-oriented plot data for 2-D instances: polygons for `P` and `S_r`,
//! ellipse boundaries for inner sets, and marker points.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rdo_core::hierarchy::{upper_preconditions, BoundsOptions, UpperPolicy};
use rdo_core::inner::inner_sdp;
use rdo_core::outer::{check_bounded, lower_bound, outer_set};
use rdo_core::switched::switched_inner_sdp;
use rdo_core::{Config, Polytope, RdoError, RdoInstance};

use crate::error::{CliError, CliResult};
use crate::instance_file::fmt_g17;

pub const ELLIPSE_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Polygon,
    Ellipse,
    Point,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Polygon => "polygon",
            LayerKind::Ellipse => "ellipse",
            LayerKind::Point => "point",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub label: String,
    /// Polygons repeat their first vertex at the end.
    pub points: Vec<[f64; 2]>,
}

impl Layer {
    /// Distinct vertices of a polygon, samples of an ellipse.
    pub fn vertex_count(&self) -> usize {
        match self.kind {
            LayerKind::Polygon => self.points.len().saturating_sub(1),
            _ => self.points.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotData {
    pub layers: Vec<Layer>,
}

impl PlotData {
    pub fn layer(&self, label: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.label == label)
    }

    pub fn emit(&self) -> String {
        let mut out = String::new();
        for layer in &self.layers {
            writeln!(out, "layer {} {}", layer.kind.name(), layer.label).expect("string write");
            for p in &layer.points {
                writeln!(out, "{} {}", fmt_g17(p[0]), fmt_g17(p[1])).expect("string write");
            }
        }
        out
    }
}

/// Vertices of a bounded 2-D polytope, counterclockwise and closed.
/// Candidate points are pairwise line intersections that satisfy every
/// row within `eps`; duplicates closer than `eps` are merged.
pub fn polygon_vertices(p: &Polytope, eps: f64) -> Vec<[f64; 2]> {
    let a = p.a();
    let b = p.b();
    let m = p.rows();
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let (a11, a12, a21, a22) = (a[(i, 0)], a[(i, 1)], a[(j, 0)], a[(j, 1)]);
            let det = a11 * a22 - a12 * a21;
            let scale = (a11.hypot(a12) * a21.hypot(a22)).max(f64::MIN_POSITIVE);
            if det.abs() <= 1e-12 * scale {
                continue;
            }
            let x = [(b[i] * a22 - a12 * b[j]) / det, (a11 * b[j] - a21 * b[i]) / det];
            let v = DVector::from_column_slice(&x);
            if p.max_violation(&v) > eps * (1.0 + v.amax()) {
                continue;
            }
            if !pts.iter().any(|q| (q[0] - x[0]).hypot(q[1] - x[1]) <= eps * (1.0 + x[0].hypot(x[1]))) {
                pts.push(x);
            }
        }
    }
    if pts.is_empty() {
        return pts;
    }
    let k = pts.len() as f64;
    let cx = pts.iter().map(|q| q[0]).sum::<f64>() / k;
    let cy = pts.iter().map(|q| q[1]).sum::<f64>() / k;
    pts.sort_by(|u, v| (u[1] - cy).atan2(u[0] - cx).total_cmp(&(v[1] - cy).atan2(v[0] - cx)));
    pts.push(pts[0]);
    pts
}

/// `ELLIPSE_SAMPLES` boundary points of `{z | z^T H z <= level}`.
pub fn ellipse_boundary(h: &DMatrix<f64>, level: f64) -> Vec<[f64; 2]> {
    let eig = SymmetricEigen::new(rdo_core::numlin::symmetrize(h));
    let v = &eig.eigenvectors;
    let radii: Vec<f64> = eig.eigenvalues.iter().map(|&l| (level / l.max(f64::MIN_POSITIVE)).sqrt()).collect();
    (0..ELLIPSE_SAMPLES)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / ELLIPSE_SAMPLES as f64;
            let (u0, u1) = (radii[0] * t.cos(), radii[1] * t.sin());
            [v[(0, 0)] * u0 + v[(0, 1)] * u1, v[(1, 0)] * u0 + v[(1, 1)] * u1]
        })
        .collect()
}

/// `P` intersected with a square window when `P` is unbounded.
fn clipped(p: &Polytope, cfg: &Config) -> CliResult<(Polytope, bool)> {
    if check_bounded(p, cfg)? {
        return Ok((p.clone(), false));
    }
    let half = 10.0 * p.b().amax().max(1.0);
    let box_rows = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let a = DMatrix::from_fn(p.rows() + 4, 2, |i, j| if i < p.rows() { p.a()[(i, j)] } else { box_rows[i - p.rows()][j] });
    let b = DVector::from_fn(p.rows() + 4, |i, _| if i < p.rows() { p.b()[i] } else { half });
    Ok((Polytope::new(a, b)?, true))
}

fn polygon_layer(p: &Polytope, label: &str, cfg: &Config) -> CliResult<Layer> {
    let (poly, was_clipped) = clipped(p, cfg)?;
    let label = if was_clipped { format!("{label}_clipped") } else { label.to_string() };
    Ok(Layer { kind: LayerKind::Polygon, label, points: polygon_vertices(&poly, cfg.tol.feas) })
}

/// Layers for `P`, `S_r`, the minimizer over `S_r` and, when upper-bound
/// preconditions hold, the inner ellipsoids at level `r` with their witness.
pub fn plot_data(inst: &RdoInstance, r: usize, l: Option<usize>, cfg: &Config) -> CliResult<PlotData> {
    if inst.n() != 2 {
        return Err(CliError::DimensionNotPlottable { n: inst.n() });
    }
    let mut data = PlotData::default();
    data.layers.push(polygon_layer(&inst.polytope, "P", cfg)?);
    data.layers.push(polygon_layer(&outer_set(inst, r, cfg)?, &format!("S_{r}"), cfg)?);
    if let Some(x) = lower_bound(inst, r, cfg)?.lower.argmin() {
        data.layers.push(Layer { kind: LayerKind::Point, label: format!("argmin_S_{r}"), points: vec![[x[0], x[1]]] });
    }

    let opts = BoundsOptions { r_max: r, l, tol: 0.0, upper: UpperPolicy::IfAvailable };
    let l_used = match upper_preconditions(inst, &opts, cfg) {
        Ok((l_used, _)) => l_used,
        Err(e @ RdoError::Numerical(_)) => return Err(e.into()),
        Err(_) => return Ok(data),
    };
    let (forms, witness) = match l_used {
        None => {
            let lvl = inner_sdp(inst, r, cfg)?;
            (vec![(format!("E_{r}"), lvl.ellipsoid.m)], lvl.witness)
        }
        Some(l) => {
            let lvl = switched_inner_sdp(inst, l, r, cfg)?;
            let labels = rdo_core::switched::multi_indices(inst.s(), l - 1);
            let forms = labels
                .iter()
                .zip(lvl.set.forms)
                .map(|(pi, h)| {
                    let tag: String = pi.iter().map(|i| (i + 1).to_string()).collect();
                    let name = if tag.is_empty() { format!("F_{r}") } else { format!("F_{r}_{tag}") };
                    (name, h)
                })
                .collect();
            (forms, lvl.witness)
        }
    };
    for (label, h) in forms {
        data.layers.push(Layer { kind: LayerKind::Ellipse, label, points: ellipse_boundary(&h, 1.0) });
    }
    data.layers.push(Layer { kind: LayerKind::Point, label: format!("witness_I_{r}"), points: vec![[witness[0], witness[1]]] });
    Ok(data)
}
