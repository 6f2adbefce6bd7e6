//! Particle state, transport maps, gas law and per-step ledger, plus the
//! state algebra shared by both solvers (moments, energies, push-forward).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::{bbox_diameter, exp, floor, norm_sq, pairwise_sum, powf, sum_by};
use crate::polytropic::Optimality;
use crate::{Error, Result};

/// Tolerance on Σ m = 1.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// Weighted particle cloud ρ = Σ mᵢ δ_{xᵢ} with velocities and specific
/// entropies. Vectors are stored flat: particle `i` occupies
/// `[i*dim, (i+1)*dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub dim: usize,
    pub masses: Vec<f64>,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub entropies: Vec<f64>,
}

impl FluidState {
    /// Builds and validates a state.
    pub fn new(
        dim: usize,
        masses: Vec<f64>,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        entropies: Vec<f64>,
    ) -> Result<Self> {
        let s = FluidState {
            dim,
            masses,
            positions,
            velocities,
            entropies,
        };
        s.validate()?;
        Ok(s)
    }

    /// Zero-entropy state.
    pub fn isentropic(
        dim: usize,
        masses: Vec<f64>,
        positions: Vec<f64>,
        velocities: Vec<f64>,
    ) -> Result<Self> {
        let n = masses.len();
        Self::new(dim, masses, positions, velocities, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// Checks the structural invariants: consistent lengths, positive masses
    /// summing to one, nonnegative entropies, finite data.
    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if self.dim == 0 {
            return Err(Error::InvalidState("dimension must be positive".into()));
        }
        if n == 0 {
            return Err(Error::InvalidState("state has no particles".into()));
        }
        if self.positions.len() != n * self.dim || self.velocities.len() != n * self.dim {
            return Err(Error::InvalidState(format!(
                "expected {} coordinates for {n} particles in d={}",
                n * self.dim,
                self.dim
            )));
        }
        if self.entropies.len() != n {
            return Err(Error::InvalidState(format!(
                "expected {n} entropies, got {}",
                self.entropies.len()
            )));
        }
        if let Some(i) = self
            .masses
            .iter()
            .position(|&m| !(m > 0.0 && m.is_finite()))
        {
            return Err(Error::InvalidState(format!(
                "particle {i} has non-positive mass {}",
                self.masses[i]
            )));
        }
        if let Some(i) = self
            .entropies
            .iter()
            .position(|&s| !(s >= 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidState(format!(
                "particle {i} has negative entropy {}",
                self.entropies[i]
            )));
        }
        if self
            .positions
            .iter()
            .chain(&self.velocities)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidState(
                "non-finite position or velocity".into(),
            ));
        }
        let total = pairwise_sum(&self.masses);
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidState(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        if self.second_moment().is_nan() {
            return Err(Error::InvalidState("second moment is NaN".into()));
        }
        Ok(())
    }

    /// Σ mᵢ|xᵢ|².
    pub fn second_moment(&self) -> f64 {
        sum_by(self.len(), |i| self.masses[i] * norm_sq(self.position(i)))
    }

    /// Σ mᵢ Sᵢ.
    pub fn total_entropy(&self) -> f64 {
        sum_by(self.len(), |i| self.masses[i] * self.entropies[i])
    }

    pub fn center_of_mass(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| {
                sum_by(self.len(), |i| {
                    self.masses[i] * self.positions[i * self.dim + k]
                })
            })
            .collect()
    }

    /// Diameter of the point cloud (bounding-box diagonal).
    pub fn diameter(&self) -> f64 {
        bbox_diameter(&self.positions, self.dim)
    }

    /// Free-transport targets x + τu.
    pub fn free_transport(&self, tau: f64) -> Vec<f64> {
        self.positions
            .iter()
            .zip(&self.velocities)
            .map(|(x, u)| x + tau * u)
            .collect()
    }
}

/// Σ mᵢ uᵢ.
pub fn total_momentum(state: &FluidState) -> Vec<f64> {
    let d = state.dim;
    (0..d)
        .map(|k| {
            sum_by(state.len(), |i| {
                state.masses[i] * state.velocities[i * d + k]
            })
        })
        .collect()
}

/// Σ ½ mᵢ |uᵢ|².
pub fn kinetic_energy(state: &FluidState) -> f64 {
    0.5 * sum_by(state.len(), |i| {
        state.masses[i] * norm_sq(state.velocity(i))
    })
}

/// Target positions of a one-step transport map, together with the step size.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub dim: usize,
    pub tau: f64,
    pub targets: Vec<f64>,
    /// Set once the map has been produced by a solver and checked monotone.
    pub accepted: bool,
}

impl TransportMap {
    pub fn new(dim: usize, tau: f64, targets: Vec<f64>) -> Self {
        TransportMap {
            dim,
            tau,
            targets,
            accepted: false,
        }
    }

    pub fn identity(state: &FluidState, tau: f64) -> Self {
        TransportMap {
            dim: state.dim,
            tau,
            targets: state.positions.clone(),
            accepted: true,
        }
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.dim..(i + 1) * self.dim]
    }

    /// Transport velocity V = (T − x)/τ.
    pub fn transport_velocity(&self, state: &FluidState) -> Vec<f64> {
        self.targets
            .iter()
            .zip(&state.positions)
            .map(|(t, x)| (t - x) / self.tau)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GasMode {
    Pressureless,
    Polytropic,
}

/// Whether specific entropy is carried per particle or fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyMode {
    #[default]
    Full,
    Isentropic,
}

/// Polytropic law U(r, S) = κ e^S r^γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasLaw {
    pub gamma: f64,
    pub kappa: f64,
    pub mode: GasMode,
    pub entropy: EntropyMode,
}

impl GasLaw {
    pub fn pressureless() -> Self {
        GasLaw {
            gamma: 2.0,
            kappa: 0.0,
            mode: GasMode::Pressureless,
            entropy: EntropyMode::Full,
        }
    }

    pub fn polytropic(gamma: f64, kappa: f64) -> Self {
        GasLaw {
            gamma,
            kappa,
            mode: GasMode::Polytropic,
            entropy: EntropyMode::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == GasMode::Polytropic {
            if !(self.gamma > 1.0 && self.gamma.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "polytropic mode needs gamma > 1, got {}",
                    self.gamma
                )));
            }
            if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "kappa must be nonnegative, got {}",
                    self.kappa
                )));
            }
        }
        Ok(())
    }

    fn entropy_factor(&self, s: f64) -> f64 {
        match self.entropy {
            EntropyMode::Full => exp(s),
            EntropyMode::Isentropic => 1.0,
        }
    }

    /// Internal energy density U(r, S) = κ e^S r^γ.
    pub fn energy_density(&self, r: f64, s: f64) -> f64 {
        if r <= 0.0 || self.kappa == 0.0 {
            return 0.0;
        }
        self.kappa * self.entropy_factor(s) * powf(r, self.gamma)
    }

    /// Pressure P(r, S) = U'r − U = κ(γ−1) e^S r^γ.
    pub fn pressure(&self, r: f64, s: f64) -> f64 {
        (self.gamma - 1.0) * self.energy_density(r, s)
    }

    /// p(r, S) = P'r − P = κ(γ−1)² e^S r^γ.
    pub fn pressure_derivative_term(&self, r: f64, s: f64) -> f64 {
        (self.gamma - 1.0) * (self.gamma - 1.0) * self.energy_density(r, s)
    }
}

/// Per-step energy and conservation ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub tau: f64,
    /// A_τ²: (3/4τ²)Σm|(x+τu)−T|² + Σm|W−U|².
    pub acc_cost_sq: f64,
    /// tr M_τ.
    pub stress_trace: f64,
    pub kinetic_before: f64,
    pub kinetic_after: f64,
    pub internal_before: f64,
    pub internal_after: f64,
    /// ∫₀^τ ∫ Δ_s dx s ds (polytropic only).
    pub dissipation: f64,
    pub momentum_after: Vec<f64>,
    /// Number of particles absorbed by merging during this step.
    pub merged: usize,
    pub optimality: Option<Optimality>,
}

impl StepReport {
    /// kinetic_before + internal_before − (kinetic_after + internal_after +
    /// stress_trace + ½A² + dissipation). Zero for an exact identity and
    /// nonnegative when only the inequality holds.
    pub fn ledger_defect(&self) -> f64 {
        self.kinetic_before + self.internal_before
            - (self.kinetic_after
                + self.internal_after
                + self.stress_trace
                + 0.5 * self.acc_cost_sq
                + self.dissipation)
    }

    pub fn total_before(&self) -> f64 {
        self.kinetic_before + self.internal_before
    }

    pub fn total_after(&self) -> f64 {
        self.kinetic_after + self.internal_after
    }
}

/// Result of one timestep: the new state, the accepted map, the ledger, and
/// for each new particle the indices of the old particles it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: FluidState,
    pub map: TransportMap,
    pub report: StepReport,
    pub groups: Vec<Vec<usize>>,
}

/// How close two targets must be (in ℓ∞) to be merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeTolerance {
    /// Multiple of the target cloud diameter.
    Relative(f64),
    Absolute(f64),
}

impl Default for MergeTolerance {
    fn default() -> Self {
        MergeTolerance::Relative(1e-9)
    }
}

impl MergeTolerance {
    pub fn resolve(&self, points: &[f64], dim: usize) -> f64 {
        match *self {
            MergeTolerance::Relative(f) => f * bbox_diameter(points, dim),
            MergeTolerance::Absolute(a) => a,
        }
    }
}

/// Groups particles whose targets coincide within `tol` in ℓ∞. Groups are
/// connected components of the "within tol" relation, found with a spatial
/// hash on quantized coordinates. Each group lists member indices in
/// increasing order; groups are ordered by their first member.
pub fn coincidence_groups(targets: &[f64], dim: usize, tol: f64) -> Vec<Vec<usize>> {
    let n = targets.len() / dim;
    let mut uf = UnionFind::new(n);
    if tol > 0.0 {
        let cell = tol;
        let mut grid: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let key: Vec<i64> = targets[i * dim..(i + 1) * dim]
                .iter()
                .map(|v| floor(v / cell) as i64)
                .collect();
            grid.entry(key).or_default().push(i);
        }
        let offsets = neighbor_offsets(dim);
        for (key, members) in &grid {
            for off in &offsets {
                let nk: Vec<i64> = key
                    .iter()
                    .zip(off)
                    .map(|(a, b)| a.saturating_add(*b))
                    .collect();
                let Some(others) = grid.get(&nk) else {
                    continue;
                };
                for &i in members {
                    for &j in others {
                        if j <= i {
                            continue;
                        }
                        let close = (0..dim)
                            .all(|k| (targets[i * dim + k] - targets[j * dim + k]).abs() <= tol);
                        if close {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    } else {
        // Exact coincidence only.
        let mut seen: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for i in 0..n {
            let key: Vec<u64> = targets[i * dim..(i + 1) * dim]
                .iter()
                .map(|v| (v + 0.0).to_bits())
                .collect();
            match seen.get(&key) {
                Some(&j) => uf.union(i, j),
                None => {
                    seen.insert(key, i);
                }
            }
        }
    }
    uf.groups()
}

fn neighbor_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * 3);
        for o in &out {
            for d in -1..=1 {
                let mut v = o.clone();
                v.push(d);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Disjoint-set forest with path halving and union by size.
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }

    /// Components as sorted index lists, ordered by smallest member.
    pub(crate) fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if slot[r] == usize::MAX {
                slot[r] = out.len();
                out.push(Vec::new());
            }
            out[slot[r]].push(i);
        }
        out
    }
}

/// Moves particles to their targets and merges those landing on the same
/// point (within `merge_tol`, ℓ∞): masses add, velocities and entropies are
/// mass-weighted means, and the merged position is the mass-weighted mean of
/// the member targets.
pub fn push_forward(state: &FluidState, map: &TransportMap, merge_tol: f64) -> FluidState {
    push_forward_grouped(state, map, merge_tol).0
}

/// Like [`push_forward`], also returning for each new particle the indices of
/// the old particles it was formed from.
pub fn push_forward_grouped(
    state: &FluidState,
    map: &TransportMap,
    merge_tol: f64,
) -> (FluidState, Vec<Vec<usize>>) {
    let with_vel = TransportedState {
        state,
        targets: &map.targets,
        velocities: &state.velocities,
    };
    with_vel.merge(merge_tol)
}

/// Targets plus the velocities particles carry after the step, prior to
/// merging.
pub(crate) struct TransportedState<'a> {
    pub state: &'a FluidState,
    pub targets: &'a [f64],
    pub velocities: &'a [f64],
}

impl TransportedState<'_> {
    pub(crate) fn merge(&self, merge_tol: f64) -> (FluidState, Vec<Vec<usize>>) {
        let d = self.state.dim;
        let groups = coincidence_groups(self.targets, d, merge_tol);
        let s = self.state;
        let mut masses = Vec::with_capacity(groups.len());
        let mut positions = Vec::with_capacity(groups.len() * d);
        let mut velocities = Vec::with_capacity(groups.len() * d);
        let mut entropies = Vec::with_capacity(groups.len());
        for g in &groups {
            if let [i] = g[..] {
                masses.push(s.masses[i]);
                positions.extend_from_slice(&self.targets[i * d..(i + 1) * d]);
                velocities.extend_from_slice(&self.velocities[i * d..(i + 1) * d]);
                entropies.push(s.entropies[i]);
                continue;
            }
            let terms: Vec<f64> = g.iter().map(|&i| s.masses[i]).collect();
            let mass = pairwise_sum(&terms);
            masses.push(mass);
            for k in 0..d {
                let terms: Vec<f64> = g
                    .iter()
                    .map(|&i| s.masses[i] * self.targets[i * d + k])
                    .collect();
                positions.push(pairwise_sum(&terms) / mass);
            }
            for k in 0..d {
                let terms: Vec<f64> = g
                    .iter()
                    .map(|&i| s.masses[i] * self.velocities[i * d + k])
                    .collect();
                velocities.push(pairwise_sum(&terms) / mass);
            }
            let terms: Vec<f64> = g.iter().map(|&i| s.masses[i] * s.entropies[i]).collect();
            entropies.push(pairwise_sum(&terms) / mass);
        }
        let out = FluidState {
            dim: d,
            masses,
            positions,
            velocities,
            entropies,
        };
        (out, groups)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn state_1d(m: &[f64], x: &[f64], u: &[f64]) -> FluidState {
        FluidState::isentropic(1, m.to_vec(), x.to_vec(), u.to_vec()).unwrap()
    }

    #[test]
    fn coincidence_groups_survive_huge_coordinates() {
        let t = [1e300, 1e300, -1e300, 0.0, 0.0];
        let g = coincidence_groups(&t, 1, 1e-9);
        assert_eq!(g, vec![vec![0, 1], vec![2], vec![3, 4]]);
    }

    #[test]
    fn momentum_examples() {
        let s = state_1d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, -1.0]);
        assert_eq!(total_momentum(&s), vec![0.0]);
        let s = state_1d(&[0.25, 0.75], &[0.0, 1.0], &[2.0, -2.0]);
        assert_abs_diff_eq!(total_momentum(&s)[0], -1.0, epsilon = 1e-15);
        let s = state_1d(&[0.25, 0.75], &[0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(total_momentum(&s), vec![0.0]);
    }

    #[test]
    fn kinetic_energy_examples() {
        let s = state_1d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, -1.0]);
        assert_abs_diff_eq!(kinetic_energy(&s), 0.5, epsilon = 1e-15);
        let s2 = state_1d(&[0.5, 0.5], &[0.0, 1.0], &[2.0, -2.0]);
        assert_abs_diff_eq!(
            kinetic_energy(&s2),
            4.0 * kinetic_energy(&s),
            epsilon = 1e-15
        );
        let rest = state_1d(&[0.5, 0.5], &[0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(kinetic_energy(&rest), 0.0);
    }

    #[test]
    fn validation_rejects_bad_states() {
        assert!(FluidState::isentropic(1, vec![0.5, 0.4], vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(FluidState::isentropic(1, vec![], vec![], vec![]).is_err());
        assert!(FluidState::new(1, vec![1.0], vec![0.0], vec![0.0], vec![-1.0]).is_err());
        assert!(FluidState::isentropic(2, vec![1.0], vec![0.0], vec![0.0, 0.0]).is_err());
        assert!(FluidState::isentropic(1, vec![1.0], vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn push_forward_identity_is_noop() {
        let s = state_1d(&[0.25, 0.25, 0.5], &[0.0, 1.0, 2.0], &[1.0, 0.0, -1.0]);
        let map = TransportMap::identity(&s, 0.1);
        assert_eq!(push_forward(&s, &map, 1e-12), s);
    }

    #[test]
    fn push_forward_merges_symmetric_pair() {
        let s = state_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, -1.0]);
        let map = TransportMap::new(1, 1.0, vec![0.0, 0.0]);
        let out = push_forward(&s, &map, 1e-12);
        assert_eq!(out.masses, vec![1.0]);
        assert_eq!(out.velocities, vec![0.0]);
        assert_eq!(out.positions, vec![0.0]);
    }

    #[test]
    fn push_forward_merges_weighted_mean() {
        let s = FluidState::new(
            1,
            vec![0.25, 0.25, 0.5],
            vec![0.0, 1.0, 2.0],
            vec![2.0, 0.0, 0.0],
            vec![1.0, 3.0, 0.5],
        )
        .unwrap();
        let map = TransportMap::new(1, 1.0, vec![0.5, 0.5, 2.0]);
        let (out, groups) = push_forward_grouped(&s, &map, 1e-12);
        assert_eq!(groups, vec![vec![0, 1], vec![2]]);
        assert_eq!(out.velocities, vec![1.0, 0.0]);
        assert_eq!(out.entropies[0], 2.0);
        assert_abs_diff_eq!(out.total_entropy(), s.total_entropy(), epsilon = 1e-15);
    }

    #[test]
    fn groups_are_transitive_within_tolerance() {
        // 0.0 ~ 0.9e-3 ~ 1.8e-3 with tol 1e-3 chains into one group.
        let targets = [0.0, 0.9e-3, 1.8e-3, 5.0];
        let g = coincidence_groups(&targets, 1, 1e-3);
        assert_eq!(g, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn gas_law_formulas() {
        let law = GasLaw::polytropic(2.0, 1.0);
        assert_eq!(law.pressure(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(law.pressure(3.0, 0.0), 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(law.pressure_derivative_term(1.0, 0.0), 1.0, epsilon = 1e-14);
        // p = P'r − P by central differences
        let law = GasLaw::polytropic(1.4, 0.7);
        let (r, s, h) = (1.3, 0.4, 1e-6);
        let dp = (law.pressure(r + h, s) - law.pressure(r - h, s)) / (2.0 * h);
        let p = dp * r - law.pressure(r, s);
        assert_abs_diff_eq!(p, law.pressure_derivative_term(r, s), epsilon = 1e-8);
        assert!(GasLaw::polytropic(1.0, 1.0).validate().is_err());
    }

    #[test]
    fn isentropic_mode_ignores_entropy() {
        let mut law = GasLaw::polytropic(2.0, 1.0);
        law.entropy = EntropyMode::Isentropic;
        assert_eq!(law.energy_density(2.0, 5.0), 4.0);
    }
}
