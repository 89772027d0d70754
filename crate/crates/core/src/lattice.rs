//! Periodicity lattice, its dual, the Brillouin zone and the inradius r0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer multi-index. Unused trailing entries are zero when `dim == 1`.
pub type Mode = [i64; 2];

const ENUM_RADIUS: i64 = 3;
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub dim: usize,
    /// basis[i][j]: component i of a_j.
    pub basis: [[f64; 2]; 2],
    /// dual[i][j]: component i of b_j.
    pub dual: [[f64; 2]; 2],
    pub cell_volume: f64,
    pub r0: f64,
}

impl Lattice {
    /// Build from basis vectors a_1..a_d.
    pub fn new(vectors: &[Vec<f64>]) -> Result<Self> {
        let dim = vectors.len();
        if !(1..=2).contains(&dim) || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::ShapeMismatch(format!("lattice basis must be d x d with d in {{1,2}}, got {dim} vectors")));
        }
        let mut basis = [[0.0; 2]; 2];
        for (j, v) in vectors.iter().enumerate() {
            for (i, &x) in v.iter().enumerate() {
                basis[i][j] = x;
            }
        }
        let det = if dim == 1 { basis[0][0] } else { basis[0][0] * basis[1][1] - basis[0][1] * basis[1][0] };
        let max_col = vectors.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        if !det.is_finite() || det.abs() < 1e-12 * max_col.powi(dim as i32) || max_col == 0.0 {
            return Err(Error::SingularBasis { det });
        }
        // dual = 2π (basisᵀ)⁻¹
        let mut dual = [[0.0; 2]; 2];
        if dim == 1 {
            dual[0][0] = 2.0 * PI / basis[0][0];
        } else {
            let s = 2.0 * PI / det;
            dual[0][0] = s * basis[1][1];
            dual[0][1] = -s * basis[1][0];
            dual[1][0] = -s * basis[0][1];
            dual[1][1] = s * basis[0][0];
        }
        let mut lat = Lattice { dim, basis, dual, cell_volume: det.abs(), r0: 0.0 };
        let shortest = lat.dual_vectors().map(norm).fold(f64::INFINITY, f64::min);
        lat.r0 = 0.5 * shortest;
        Ok(lat)
    }

    pub fn cubic(dim: usize, side: f64) -> Self {
        let v: Vec<Vec<f64>> = (0..dim).map(|j| (0..dim).map(|i| if i == j { side } else { 0.0 }).collect()).collect();
        Self::new(&v).expect("cubic lattice")
    }

    /// ξ = Σ k_j b_j
    pub fn xi(&self, k: Mode) -> [f64; 2] {
        let mut out = [0.0; 2];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += self.dual[i][j] * k[j] as f64;
            }
        }
        out
    }

    pub fn xi_norm2(&self, k: Mode) -> f64 {
        let x = self.xi(k);
        x[0] * x[0] + x[1] * x[1]
    }

    /// Nonzero dual vectors with integer coordinates in [-3, 3]^d.
    pub fn dual_vectors(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        let r = ENUM_RADIUS;
        let second = if self.dim == 2 { -r..=r } else { 0..=0 };
        (-r..=r)
            .flat_map(move |i| second.clone().map(move |j| [i, j]))
            .filter(|k| *k != [0, 0])
            .map(move |k| self.xi(k))
    }

    /// ξ ∈ Ω̃/ε, boundary ties excluded.
    pub fn in_brillouin(&self, xi: [f64; 2], eps: f64) -> bool {
        let p = [eps * xi[0], eps * xi[1]];
        let np = norm(p);
        self.dual_vectors().all(|b| {
            let d = norm([p[0] - b[0], p[1] - b[1]]);
            np < d - TIE_TOL * d.max(1.0)
        })
    }
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}
