//! Cell decomposition carrying the density and entropy of the particle cloud:
//! gaps between consecutive particles in 1D, a Delaunay triangulation in 2D.
//! Each particle's mass is shared among its incident cells, so cell masses
//! sum to one and maps that are affine on cells have exact gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::SmallMat;
use crate::numeric::{bbox_diameter, pairwise_sum};
use crate::state::{FluidState, GasLaw};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Node indices; the first `dim + 1` entries are used.
    pub nodes: [usize; 3],
    pub mass: f64,
    pub entropy: f64,
}

impl Cell {
    pub fn nodes(&self, dim: usize) -> &[usize] {
        &self.nodes[..dim + 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDiscretization {
    pub dim: usize,
    /// Current node positions, flat.
    pub nodes: Vec<f64>,
    pub cells: Vec<Cell>,
    volumes: Vec<f64>,
    /// Gradients of the nodal basis functions, per cell and local node.
    basis: Vec<[[f64; 2]; 3]>,
}

impl EnergyDiscretization {
    /// Builds the discretization of a particle state (d = 1 or 2).
    pub fn from_state(state: &FluidState) -> Result<Self> {
        match state.dim {
            1 => Self::from_state_1d(state),
            2 => Self::from_state_2d(state),
            d => Err(Error::Unsupported(format!(
                "internal energy discretization in d = {d}"
            ))),
        }
    }

    fn from_state_1d(state: &FluidState) -> Result<Self> {
        let n = state.len();
        if n < 2 {
            return Err(Error::DegenerateMesh("need at least two particles".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| state.positions[a].total_cmp(&state.positions[b]));
        // Interior particles give half their mass to each neighbouring cell;
        // the two end particles give all of it to their only cell.
        let share = |rank: usize| if rank == 0 || rank == n - 1 { 1.0 } else { 0.5 };
        let mut cells = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let (a, b) = (order[k], order[k + 1]);
            let (ma, mb) = (share(k) * state.masses[a], share(k + 1) * state.masses[b]);
            let mass = ma + mb;
            cells.push(Cell {
                nodes: [a, b, 0],
                mass,
                entropy: (ma * state.entropies[a] + mb * state.entropies[b]) / mass,
            });
        }
        Self::from_parts(1, state.positions.clone(), cells)
    }

    fn from_state_2d(state: &FluidState) -> Result<Self> {
        let n = state.len();
        let pts: Vec<delaunator::Point> = (0..n)
            .map(|i| delaunator::Point {
                x: state.positions[2 * i],
                y: state.positions[2 * i + 1],
            })
            .collect();
        let tri = delaunator::triangulate(&pts);
        let diam = bbox_diameter(&state.positions, 2);
        let min_area = 1e-12 * diam * diam;
        let mut tris: Vec<[usize; 3]> = Vec::new();
        let mut areas: Vec<f64> = Vec::new();
        for t in tri.triangles.chunks_exact(3) {
            let a = signed_area(&state.positions, t[0], t[1], t[2]).abs();
            if a > min_area {
                tris.push([t[0], t[1], t[2]]);
                areas.push(a);
            }
        }
        if tris.is_empty() {
            return Err(Error::DegenerateMesh(
                "point cloud has no non-degenerate triangles".into(),
            ));
        }
        let mut star = vec![0.0; n];
        for (t, &a) in tris.iter().zip(&areas) {
            for &v in t {
                star[v] += a;
            }
        }
        if let Some(v) = star.iter().position(|&s| s == 0.0) {
            return Err(Error::DegenerateMesh(format!(
                "particle {v} is not a vertex of any triangle (duplicate or collinear point)"
            )));
        }
        let cells = tris
            .iter()
            .zip(&areas)
            .map(|(t, &a)| {
                let shares: Vec<f64> = t.iter().map(|&v| state.masses[v] * a / star[v]).collect();
                let mass = pairwise_sum(&shares);
                let ent: f64 = t
                    .iter()
                    .zip(&shares)
                    .map(|(&v, s)| s * state.entropies[v])
                    .sum();
                Cell {
                    nodes: *t,
                    mass,
                    entropy: ent / mass,
                }
            })
            .collect();
        Self::from_parts(2, state.positions.clone(), cells)
    }

    /// Builds from explicit cells; geometry is computed from `nodes`.
    pub fn from_parts(dim: usize, nodes: Vec<f64>, cells: Vec<Cell>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Unsupported(format!("mesh in d = {dim}")));
        }
        let mut disc = EnergyDiscretization {
            dim,
            nodes,
            cells,
            volumes: Vec::new(),
            basis: Vec::new(),
        };
        disc.recompute_geometry()?;
        Ok(disc)
    }

    /// Moves the nodes to `targets`, keeping cell masses and entropies
    /// (Lagrangian update).
    pub fn advance(&mut self, targets: &[f64]) -> Result<()> {
        self.nodes.copy_from_slice(targets);
        self.recompute_geometry()
    }

    fn recompute_geometry(&mut self) -> Result<()> {
        let d = self.dim;
        self.volumes.clear();
        self.basis.clear();
        for (k, c) in self.cells.iter().enumerate() {
            let (vol, grads) = if d == 1 {
                let (a, b) = (c.nodes[0], c.nodes[1]);
                let len = self.nodes[b] - self.nodes[a];
                (len, [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0; 2]])
            } else {
                let [a, b, cc] = c.nodes;
                let p = |i: usize| (self.nodes[2 * i], self.nodes[2 * i + 1]);
                let (p0, p1, p2) = (p(a), p(b), p(cc));
                let (e1, e2) = ((p1.0 - p0.0, p1.1 - p0.1), (p2.0 - p0.0, p2.1 - p0.1));
                let det = e1.0 * e2.1 - e2.0 * e1.1;
                // Rows of J⁻¹ with J = [e1 e2] are the gradients of φ₁, φ₂.
                let g1 = [e2.1 / det, -e2.0 / det];
                let g2 = [-e1.1 / det, e1.0 / det];
                let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
                (0.5 * det.abs(), [g0, g1, g2])
            };
            if !(vol > 0.0 && vol.is_finite()) {
                return Err(Error::InfiniteEnergy(format!(
                    "cell {k} has non-positive volume {vol}"
                )));
            }
            self.volumes.push(vol);
            self.basis.push(grads);
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn volume(&self, k: usize) -> f64 {
        self.volumes[k]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Cell density mass/volume.
    pub fn density(&self, k: usize) -> f64 {
        self.cells[k].mass / self.volumes[k]
    }

    pub fn total_mass(&self) -> f64 {
        let m: Vec<f64> = self.cells.iter().map(|c| c.mass).collect();
        pairwise_sum(&m)
    }

    /// Σ rₖ volₖ, which equals the total mass.
    pub fn density_integral(&self) -> f64 {
        let v: Vec<f64> = (0..self.num_cells())
            .map(|k| self.density(k) * self.volume(k))
            .collect();
        pairwise_sum(&v)
    }

    /// Energy density U(rₖ, Sₖ) on each cell.
    pub fn energy_coefficients(&self, law: &GasLaw) -> Vec<f64> {
        (0..self.num_cells())
            .map(|k| law.energy_density(self.density(k), self.cells[k].entropy))
            .collect()
    }

    /// Gradient ∇T on cell `k` of the map that is affine on the cell and
    /// sends node v to `targets[v]`: A_ab = Σ_v T_v[a] ∂_b φ_v.
    pub fn cell_gradient(&self, k: usize, targets: &[f64]) -> SmallMat {
        let d = self.dim;
        let mut a = SmallMat::zeros(d);
        for (l, &v) in self.cells[k].nodes(d).iter().enumerate() {
            let g = &self.basis[k][l];
            for r in 0..d {
                let tv = targets[v * d + r];
                for c in 0..d {
                    a.a[r][c] += tv * g[c];
                }
            }
        }
        a
    }

    pub(crate) fn basis(&self, k: usize) -> &[[f64; 2]; 3] {
        &self.basis[k]
    }

    /// Nodes sorted by position (1D); cell k joins entries k and k+1.
    pub fn chain_1d(&self) -> Option<Vec<usize>> {
        if self.dim != 1 {
            return None;
        }
        let mut chain = Vec::with_capacity(self.num_cells() + 1);
        chain.push(self.cells.first()?.nodes[0]);
        for c in &self.cells {
            if *chain.last().unwrap() != c.nodes[0] {
                return None;
            }
            chain.push(c.nodes[1]);
        }
        Some(chain)
    }
}

fn signed_area(p: &[f64], a: usize, b: usize, c: usize) -> f64 {
    let (ax, ay) = (p[2 * a], p[2 * a + 1]);
    let (bx, by) = (p[2 * b], p[2 * b + 1]);
    let (cx, cy) = (p[2 * c], p[2 * c + 1]);
    0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_d_cells_conserve_mass() {
        let s = FluidState::new(
            1,
            vec![0.2, 0.3, 0.1, 0.4],
            vec![1.0, -1.0, 0.5, 0.0],
            vec![0.0; 4],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let disc = EnergyDiscretization::from_state(&s).unwrap();
        assert_eq!(disc.num_cells(), 3);
        assert_abs_diff_eq!(disc.total_mass(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(disc.density_integral(), 1.0, epsilon = 1e-15);
        assert_eq!(disc.chain_1d().unwrap(), vec![1, 3, 2, 0]);
        // entropy mass is conserved by the sharing
        let ent: f64 = disc.cells.iter().map(|c| c.mass * c.entropy).sum();
        assert_abs_diff_eq!(ent, s.total_entropy(), epsilon = 1e-15);
    }

    #[test]
    fn coincident_particles_have_infinite_energy() {
        let s = FluidState::isentropic(1, vec![0.5, 0.5], vec![0.0, 0.0], vec![0.0; 2]).unwrap();
        assert!(matches!(
            EnergyDiscretization::from_state(&s),
            Err(Error::InfiniteEnergy(_))
        ));
    }

    #[test]
    fn two_d_affine_map_has_exact_gradient() {
        let pts = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.4, 0.6];
        let s = FluidState::isentropic(2, vec![0.2; 5], pts.clone(), vec![0.0; 10]).unwrap();
        let disc = EnergyDiscretization::from_state(&s).unwrap();
        assert_abs_diff_eq!(disc.volumes().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(disc.total_mass(), 1.0, epsilon = 1e-14);
        let m = [[2.0, 0.5], [-0.3, 1.5]];
        let t: Vec<f64> = pts
            .chunks(2)
            .flat_map(|p| {
                [
                    m[0][0] * p[0] + m[0][1] * p[1] + 1.0,
                    m[1][0] * p[0] + m[1][1] * p[1],
                ]
            })
            .collect();
        for k in 0..disc.num_cells() {
            let g = disc.cell_gradient(k, &t);
            for r in 0..2 {
                for c in 0..2 {
                    assert_abs_diff_eq!(g.a[r][c], m[r][c], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let s = FluidState::isentropic(
            2,
            vec![0.5, 0.25, 0.25],
            vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0],
            vec![0.0; 6],
        )
        .unwrap();
        assert!(EnergyDiscretization::from_state(&s).is_err());
    }
}
