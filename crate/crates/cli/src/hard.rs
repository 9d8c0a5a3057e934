//! Instances built from a digraph whose membership question asks whether
//! node 1 reaches node n by walks of every length `k >= 1`.

use nalgebra::{DMatrix, DVector};
use rdo_core::{simulate, Config, Membership, RdoError};

use crate::error::CliResult;
use crate::instance_file::InstanceFile;

/// `G` = adjacency matrix, one row `-(row 1 of G) x <= -1/2`, query `z = e_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    pub nodes: usize,
    pub g: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub z: DVector<f64>,
}

/// `edges` are 1-based `(from, to)` pairs; repeats are ignored.
pub fn gen_hard_instance(nodes: usize, edges: &[(usize, usize)]) -> CliResult<HardInstance> {
    if nodes < 2 {
        return Err(RdoError::InvalidArgument(format!("need at least 2 nodes, got {nodes}")).into());
    }
    let mut g = DMatrix::zeros(nodes, nodes);
    for &(u, v) in edges {
        if !(1..=nodes).contains(&u) || !(1..=nodes).contains(&v) {
            return Err(RdoError::InvalidArgument(format!("edge {u}->{v} outside 1..={nodes}")).into());
        }
        g[(u - 1, v - 1)] = 1.0;
    }
    let a = g.rows(0, 1).map(|v| if v == 0.0 { 0.0 } else { -v });
    let mut z = DVector::zeros(nodes);
    z[nodes - 1] = 1.0;
    Ok(HardInstance { nodes, g, a, b: DVector::from_element(1, -0.5), z })
}

impl HardInstance {
    /// Simulates `z` for `k_max` steps. Runs on the raw row, which may be
    /// identically zero when node 1 has no out-edge.
    pub fn membership(&self, k_max: usize, cfg: &Config) -> CliResult<Membership> {
        Ok(simulate(&self.a, &self.b, std::slice::from_ref(&self.g), &self.z, k_max, cfg)?)
    }

    pub fn file(&self) -> InstanceFile {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        InstanceFile {
            name: Some(format!("walks-1-to-{}", self.nodes)),
            c: vec![0.0; self.nodes],
            a: rows(&self.a),
            b: self.b.iter().copied().collect(),
            g: Some(rows(&self.g)),
            gs: None,
            rho_star: None,
        }
    }
}

/// Parses `"1-2"` style edge tokens.
pub fn parse_edge(token: &str) -> Result<(usize, usize), String> {
    let (u, v) = token.split_once('-').ok_or_else(|| format!("edge `{token}` is not of the form FROM-TO"))?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("edge `{token}`: {e}"));
    Ok((parse(u)?, parse(v)?))
}
