//! Finite-level matrix algebras attached to a diagram.
//!
//! The level-n algebra is the direct sum, over vertices v at level n, of full
//! matrix algebras indexed by the root paths ending at v. Elements are dense
//! complex blocks; states are block density matrices. The Hamiltonian is the
//! diagonal of path potentials, and the flow-related oracles (the KMS
//! identity, the ground-state form, the averaging expectation and the
//! geodesic compression) act blockwise.
//!
//! This layer is oracle scale by design: path families are materialized
//! explicitly and capped. The DP layer carries the large-scale analysis.

use crate::diagram::{DiagramSpec, FinitePath, PathStep};
use crate::error::AlgebraError;
use crate::geodesic::TightSubdiagram;
use crate::matrix::CMat;
use crate::potential::TieMode;
use crate::util::{logsumexp, SplitMix64};
use num_complex::Complex64;
use num_rational::BigRational;
use std::collections::BTreeMap;

pub const DEFAULT_PATH_CAP: usize = 4096;
pub const DEFAULT_GROUND_SEED: u64 = 0x5eed_ba5e;

/// One direct summand: the paths into a vertex and their potentials.
#[derive(Clone, Debug)]
pub struct AlgebraBlock {
    pub vertex: usize,
    pub paths: Vec<FinitePath>,
    pub energies: Vec<f64>,
    pub energies_exact: Vec<BigRational>,
}

impl AlgebraBlock {
    pub fn dim(&self) -> usize {
        self.paths.len()
    }
}

#[derive(Clone, Debug)]
pub struct LevelAlgebra {
    pub level: usize,
    /// blocks[v] corresponds to vertex v of the level.
    pub blocks: Vec<AlgebraBlock>,
}

/// Build the level algebra, enumerating at most `cap` paths.
pub fn build_level_algebra(
    spec: &DiagramSpec,
    level: usize,
    cap: usize,
) -> Result<LevelAlgebra, AlgebraError> {
    let paths = spec.enumerate_root_paths(level, cap).map_err(|e| match e {
        crate::error::DiagramError::Schema(s) if s.contains("paths at level") => {
            AlgebraError::PathCapExceeded {
                level,
                paths: cap + 1,
                cap,
            }
        }
        other => AlgebraError::Diagram(other),
    })?;
    let width = spec.level_size(level);
    let mut blocks: Vec<AlgebraBlock> = (0..width)
        .map(|vertex| AlgebraBlock {
            vertex,
            paths: Vec::new(),
            energies: Vec::new(),
            energies_exact: Vec::new(),
        })
        .collect();
    for p in paths {
        let pot = spec.path_potential(&p)?;
        let b = &mut blocks[p.end_vertex];
        b.energies.push(pot.f64());
        b.energies_exact.push(pot.exact().clone());
        b.paths.push(p);
    }
    Ok(LevelAlgebra { level, blocks })
}

impl LevelAlgebra {
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    pub fn path_index(&self, path: &FinitePath) -> Option<(usize, usize)> {
        let block = self.blocks.get(path.end_vertex)?;
        block
            .paths
            .iter()
            .position(|p| p == path)
            .map(|i| (path.end_vertex, i))
    }

    pub fn zero_element(&self) -> AlgebraElement {
        AlgebraElement {
            level: self.level,
            blocks: self.blocks.iter().map(|b| CMat::zeros(b.dim())).collect(),
        }
    }

    pub fn identity(&self) -> AlgebraElement {
        AlgebraElement {
            level: self.level,
            blocks: self
                .blocks
                .iter()
                .map(|b| CMat::identity(b.dim()))
                .collect(),
        }
    }

    /// Matrix unit E_{mu_i, mu_j} inside the block of one vertex.
    pub fn unit(&self, vertex: usize, i: usize, j: usize) -> AlgebraElement {
        let mut e = self.zero_element();
        e.blocks[vertex][(i, j)] = Complex64::new(1.0, 0.0);
        e
    }

    /// The diagonal Hamiltonian as an element.
    pub fn hamiltonian(&self) -> AlgebraElement {
        let mut h = self.zero_element();
        for (v, b) in self.blocks.iter().enumerate() {
            for (i, &en) in b.energies.iter().enumerate() {
                h.blocks[v][(i, i)] = Complex64::new(en, 0.0);
            }
        }
        h
    }

    /// Seeded random element with entries in the unit box.
    pub fn random_element(&self, rng: &mut SplitMix64) -> AlgebraElement {
        let mut a = self.zero_element();
        for block in &mut a.blocks {
            let d = block.dim;
            for i in 0..d {
                for j in 0..d {
                    block[(i, j)] =
                        Complex64::new(rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0));
                }
            }
        }
        a
    }
}

/// Block-diagonal element of a level algebra.
#[derive(Clone, Debug)]
pub struct AlgebraElement {
    pub level: usize,
    pub blocks: Vec<CMat>,
}

impl AlgebraElement {
    fn check_shape(&self, other: &AlgebraElement) -> Result<(), AlgebraError> {
        if self.level != other.level
            || self.blocks.len() != other.blocks.len()
            || self
                .blocks
                .iter()
                .zip(&other.blocks)
                .any(|(a, b)| a.dim != b.dim)
        {
            return Err(AlgebraError::BlockMismatch(format!(
                "levels {} vs {}",
                self.level, other.level
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
        self.check_shape(other)?;
        Ok(AlgebraElement {
            level: self.level,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.mul(b))
                .collect(),
        })
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
        self.check_shape(other)?;
        Ok(AlgebraElement {
            level: self.level,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.add(b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
        self.check_shape(other)?;
        Ok(AlgebraElement {
            level: self.level,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }

    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement {
            level: self.level,
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> AlgebraElement {
        AlgebraElement {
            level: self.level,
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    pub fn op_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.op_norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_abs()).fold(0.0, f64::max)
    }
}

/// i (H a - a H): the infinitesimal action on a level element. On a matrix
/// unit E_{mu,nu} this multiplies by i (F(mu) - F(nu)).
pub fn generator_apply(
    alg: &LevelAlgebra,
    a: &AlgebraElement,
) -> Result<AlgebraElement, AlgebraError> {
    if a.level != alg.level || a.blocks.len() != alg.blocks.len() {
        return Err(AlgebraError::BlockMismatch("element/algebra".into()));
    }
    let mut out = a.clone();
    for (v, block) in alg.blocks.iter().enumerate() {
        let d = block.dim();
        if a.blocks[v].dim != d {
            return Err(AlgebraError::BlockMismatch(format!("block {v}")));
        }
        for i in 0..d {
            for j in 0..d {
                let factor = Complex64::new(0.0, block.energies[i] - block.energies[j]);
                out.blocks[v][(i, j)] = factor * a.blocks[v][(i, j)];
            }
        }
    }
    Ok(out)
}

/// Block density matrix: positive blocks with unit total trace.
#[derive(Clone, Debug)]
pub struct BlockState {
    pub level: usize,
    pub blocks: Vec<CMat>,
}

impl BlockState {
    pub fn validate(&self) -> Result<(), AlgebraError> {
        let mut trace = 0.0;
        for (v, b) in self.blocks.iter().enumerate() {
            let t = b.trace();
            if t.im.abs() > 1e-10 {
                return Err(AlgebraError::BadState(format!(
                    "block {v} has complex trace {t}"
                )));
            }
            trace += t.re;
            if b.min_eigenvalue_hermitian() < -1e-10 {
                return Err(AlgebraError::BadState(format!(
                    "block {v} is not positive semidefinite"
                )));
            }
        }
        if (trace - 1.0).abs() > 1e-12 {
            return Err(AlgebraError::BadState(format!(
                "total trace {trace} differs from 1"
            )));
        }
        Ok(())
    }

    /// Expectation of an element: sum of tr(rho_v a_v).
    pub fn expect(&self, a: &AlgebraElement) -> Result<Complex64, AlgebraError> {
        if a.blocks.len() != self.blocks.len() {
            return Err(AlgebraError::BlockMismatch("state/element".into()));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (rho, x) in self.blocks.iter().zip(&a.blocks) {
            if rho.dim != x.dim {
                return Err(AlgebraError::BlockMismatch("state/element block".into()));
            }
            acc += rho.mul(x).trace();
        }
        Ok(acc)
    }

    /// omega(E_{mu,nu}) = rho[nu, mu] for paths in the same block.
    pub fn unit_expectation(&self, vertex: usize, i: usize, j: usize) -> Complex64 {
        self.blocks[vertex][(j, i)]
    }

    /// Mass assigned to the vertex projections: omega(p_v).
    pub fn vertex_masses(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.trace().re).collect()
    }

    pub fn max_entry_distance(&self, other: &BlockState) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.sub(b).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Gibbs state at inverse temperature beta with prescribed vertex masses:
/// per block, the normalized diagonal of e^{-beta H}.
pub fn gibbs_state(
    alg: &LevelAlgebra,
    beta: f64,
    vertex_weights: &[f64],
) -> Result<BlockState, AlgebraError> {
    check_weights(vertex_weights, alg.blocks.len())?;
    let mut blocks = Vec::with_capacity(alg.blocks.len());
    for (v, b) in alg.blocks.iter().enumerate() {
        let d = b.dim();
        let logs: Vec<f64> = b.energies.iter().map(|&e| -beta * e).collect();
        let log_z = logsumexp(&logs);
        let mut rho = CMat::zeros(d);
        for i in 0..d {
            rho[(i, i)] = Complex64::new(vertex_weights[v] * (logs[i] - log_z).exp(), 0.0);
        }
        blocks.push(rho);
    }
    Ok(BlockState {
        level: alg.level,
        blocks,
    })
}

fn check_weights(weights: &[f64], expected: usize) -> Result<(), AlgebraError> {
    if weights.len() != expected {
        return Err(AlgebraError::BadState(format!(
            "{} weights for {} blocks",
            weights.len(),
            expected
        )));
    }
    if weights.iter().any(|&w| w < -1e-12) {
        return Err(AlgebraError::BadState("negative vertex weight".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(AlgebraError::BadState(format!(
            "vertex weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Witnessing quadruple of a KMS violation, as path indices within a block.
#[derive(Clone, Debug)]
pub struct KmsWitness {
    pub vertex: usize,
    pub mu: usize,
    pub mu_prime: usize,
    pub nu: usize,
    pub nu_prime: usize,
    pub violation: f64,
}

#[derive(Clone, Debug)]
pub struct KmsReport {
    pub beta: f64,
    pub max_violation: f64,
    pub witness: Option<KmsWitness>,
    pub quadruples_checked: usize,
}

impl KmsReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Check the twisted trace identity
/// omega(E_{mu,mu'} E_{nu,nu'}) = e^{-beta (F(mu)-F(mu'))} omega(E_{nu,nu'} E_{mu,mu'})
/// over matrix-unit quadruples. Quadruples whose products vanish structurally
/// on both sides hold identically and are skipped for blocks of dimension
/// greater than 12.
pub fn check_kms(
    alg: &LevelAlgebra,
    state: &BlockState,
    beta: f64,
) -> Result<KmsReport, AlgebraError> {
    if state.blocks.len() != alg.blocks.len() {
        return Err(AlgebraError::BlockMismatch("state/algebra".into()));
    }
    let mut max_violation = 0.0f64;
    let mut witness = None;
    let mut checked = 0usize;
    for (v, b) in alg.blocks.iter().enumerate() {
        let d = b.dim();
        if state.blocks[v].dim != d {
            return Err(AlgebraError::BlockMismatch(format!("block {v}")));
        }
        let rho = &state.blocks[v];
        let full_sweep = d <= 12;
        for i in 0..d {
            for j in 0..d {
                let twist = (-beta * (b.energies[i] - b.energies[j])).exp();
                for k in 0..d {
                    for l in 0..d {
                        if !full_sweep && j != k && l != i {
                            continue;
                        }
                        // omega(E_{i,j} E_{k,l}) = delta_{jk} rho[l, i]
                        let lhs = if j == k {
                            rho[(l, i)]
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        let rhs = if l == i {
                            rho[(j, k)] * twist
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        let violation = (lhs - rhs).norm();
                        checked += 1;
                        if violation > max_violation {
                            max_violation = violation;
                            witness = Some(KmsWitness {
                                vertex: v,
                                mu: i,
                                mu_prime: j,
                                nu: k,
                                nu_prime: l,
                                violation,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(KmsReport {
        beta,
        max_violation,
        witness,
        quadruples_checked: checked,
    })
}

#[derive(Clone, Debug)]
pub struct GroundWitness {
    pub vertex: usize,
    pub mu: usize,
    pub nu: usize,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct GroundReport {
    pub min_value: f64,
    pub witness: Option<GroundWitness>,
    pub max_imag: f64,
    pub trials: usize,
    pub seed: u64,
}

impl GroundReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_value >= -tol
    }
}

/// Evaluate -i omega(a* delta(a)) over every matrix unit and over seeded
/// random elements; the most negative value refutes the ground property. On
/// the unit E_{mu,nu} the value is (F(mu) - F(nu)) omega(E_{nu,nu}), so the
/// unit sweep realizes the witness search: mass on a non-minimal path nu is
/// exposed by any mu of smaller potential in the same block.
pub fn check_ground(
    alg: &LevelAlgebra,
    state: &BlockState,
    trials: usize,
    seed: u64,
) -> Result<GroundReport, AlgebraError> {
    if state.blocks.len() != alg.blocks.len() {
        return Err(AlgebraError::BlockMismatch("state/algebra".into()));
    }
    let mut min_value = f64::INFINITY;
    let mut witness: Option<GroundWitness> = None;
    for (v, b) in alg.blocks.iter().enumerate() {
        let d = b.dim();
        let rho = &state.blocks[v];
        for i in 0..d {
            for j in 0..d {
                let value = (b.energies[i] - b.energies[j]) * rho[(j, j)].re;
                if value < min_value {
                    min_value = value;
                    witness = Some(GroundWitness {
                        vertex: v,
                        mu: i,
                        nu: j,
                        value,
                    });
                }
            }
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut max_imag = 0.0f64;
    for _ in 0..trials {
        let a = alg.random_element(&mut rng);
        let da = generator_apply(alg, &a)?;
        let q = a.adjoint().mul(&da)?;
        let val = state.expect(&q)?;
        // -i (re + i im) = im - i re
        let real = val.im;
        let imag = -val.re;
        max_imag = max_imag.max(imag.abs());
        if real < min_value {
            min_value = real;
            witness = None;
        }
    }

    Ok(GroundReport {
        min_value,
        witness,
        max_imag,
        trials,
        seed,
    })
}

/// Averaging projection onto the flow-invariant part: kills every matrix-unit
/// entry whose two paths have different potentials.
pub fn conditional_expectation(
    alg: &LevelAlgebra,
    a: &AlgebraElement,
    mode: TieMode,
) -> Result<AlgebraElement, AlgebraError> {
    let mut out = a.clone();
    for (v, b) in alg.blocks.iter().enumerate() {
        let d = b.dim();
        if a.blocks[v].dim != d {
            return Err(AlgebraError::BlockMismatch(format!("block {v}")));
        }
        for i in 0..d {
            for j in 0..d {
                let equal = match mode {
                    TieMode::Exact => b.energies_exact[i] == b.energies_exact[j],
                    TieMode::Float => {
                        let tol = TieMode::float_tol(b.energies[i].abs().max(b.energies[j].abs()));
                        (b.energies[i] - b.energies[j]).abs() <= tol
                    }
                };
                if !equal {
                    out.blocks[v][(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
    Ok(out)
}

/// Index mapping between the geodesic paths of the ambient diagram and the
/// paths of the surviving subdiagram presented on its own.
pub struct GeodesicPathMap {
    /// per gap: ambient bundle index -> subdiagram bundle index
    bundle_maps: Vec<BTreeMap<usize, usize>>,
    /// per level: ambient vertex -> subdiagram vertex
    vertex_maps: Vec<BTreeMap<usize, usize>>,
}

impl GeodesicPathMap {
    pub fn new(sub: &TightSubdiagram) -> Self {
        let bundle_maps = sub
            .arrows
            .iter()
            .map(|set| {
                set.iter()
                    .enumerate()
                    .map(|(new, &old)| (old, new))
                    .collect()
            })
            .collect();
        let vertex_maps = sub
            .surviving
            .iter()
            .map(|set| {
                set.iter()
                    .enumerate()
                    .map(|(new, &old)| (old, new))
                    .collect()
            })
            .collect();
        GeodesicPathMap {
            bundle_maps,
            vertex_maps,
        }
    }

    /// Rewrite an ambient geodesic path in subdiagram coordinates.
    pub fn map_path(&self, path: &FinitePath) -> Option<FinitePath> {
        let mut steps = Vec::with_capacity(path.steps.len());
        for (i, s) in path.steps.iter().enumerate() {
            let new_bundle = *self.bundle_maps.get(i)?.get(&s.bundle)?;
            steps.push(PathStep {
                bundle: new_bundle,
                copy: s.copy,
            });
        }
        let end = *self
            .vertex_maps
            .get(path.end_level())?
            .get(&path.end_vertex)?;
        Some(FinitePath {
            start_level: 0,
            end_vertex: end,
            steps,
        })
    }
}

/// Compress an element to the geodesic corner: average first, then keep only
/// the matrix units whose paths are geodesic prefixes, re-indexed into the
/// algebra of the surviving subdiagram.
pub fn q_f_compress(
    alg: &LevelAlgebra,
    sub: &TightSubdiagram,
    plus_alg: &LevelAlgebra,
    a: &AlgebraElement,
) -> Result<AlgebraElement, AlgebraError> {
    if alg.level > sub.depth {
        return Err(AlgebraError::CertificationExceeded {
            certified: sub.depth,
            requested: alg.level,
        });
    }
    let averaged = conditional_expectation(alg, a, sub.mode)?;
    let map = GeodesicPathMap::new(sub);
    let mut out = plus_alg.zero_element();
    for (v, b) in alg.blocks.iter().enumerate() {
        // geodesic paths of this block, with their subdiagram indices
        let mut geo: Vec<(usize, (usize, usize))> = Vec::new();
        for (i, p) in b.paths.iter().enumerate() {
            if crate::geodesic::is_geodesic_prefix(sub, p) {
                let mapped = map
                    .map_path(p)
                    .expect("surviving path maps into the subdiagram");
                let idx = plus_alg
                    .path_index(&mapped)
                    .expect("mapped path exists in the subdiagram algebra");
                geo.push((i, idx));
            }
        }
        for &(i, (pv, pi)) in &geo {
            for &(j, (qv, qj)) in &geo {
                if pv != qv {
                    continue;
                }
                out.blocks[pv][(pi, qj)] += averaged.blocks[v][(i, j)];
            }
        }
    }
    Ok(out)
}

/// Embed a level-n element into level n+1: each unit E_{mu,mu'} becomes the
/// sum of E_{mu a, mu' a} over the arrows a extending the paths.
pub fn embed(
    alg_lo: &LevelAlgebra,
    alg_hi: &LevelAlgebra,
    a: &AlgebraElement,
) -> Result<AlgebraElement, AlgebraError> {
    if alg_hi.level != alg_lo.level + 1 {
        return Err(AlgebraError::BlockMismatch(format!(
            "embedding expects consecutive levels, got {} -> {}",
            alg_lo.level, alg_hi.level
        )));
    }
    // prefix lookup: steps of a level-n path -> its (vertex, index)
    let mut prefix_idx: BTreeMap<&[PathStep], (usize, usize)> = BTreeMap::new();
    for (v, b) in alg_lo.blocks.iter().enumerate() {
        for (i, p) in b.paths.iter().enumerate() {
            prefix_idx.insert(p.steps.as_slice(), (v, i));
        }
    }
    let mut out = alg_hi.zero_element();
    for (w, bh) in alg_hi.blocks.iter().enumerate() {
        let d = bh.dim();
        for p in 0..d {
            let (p_prefix, p_last) = bh.paths[p].steps.split_at(alg_lo.level);
            let &(pv, pi) = prefix_idx
                .get(p_prefix)
                .ok_or_else(|| AlgebraError::BlockMismatch("missing prefix".into()))?;
            for q in 0..d {
                let (q_prefix, q_last) = bh.paths[q].steps.split_at(alg_lo.level);
                if p_last != q_last {
                    continue;
                }
                let &(qv, qi) = prefix_idx
                    .get(q_prefix)
                    .ok_or_else(|| AlgebraError::BlockMismatch("missing prefix".into()))?;
                if pv != qv {
                    continue;
                }
                out.blocks[w][(p, q)] = a.blocks[pv][(pi, qi)];
            }
        }
    }
    Ok(out)
}

/// Pull a level-(n+1) state back to level n along the embedding: partial
/// trace over the final arrow.
pub fn restrict_state(
    alg_hi: &LevelAlgebra,
    alg_lo: &LevelAlgebra,
    state: &BlockState,
) -> Result<BlockState, AlgebraError> {
    if alg_hi.level != alg_lo.level + 1 || state.level != alg_hi.level {
        return Err(AlgebraError::BlockMismatch("restriction levels".into()));
    }
    let mut prefix_idx: BTreeMap<&[PathStep], (usize, usize)> = BTreeMap::new();
    for (v, b) in alg_lo.blocks.iter().enumerate() {
        for (i, p) in b.paths.iter().enumerate() {
            prefix_idx.insert(p.steps.as_slice(), (v, i));
        }
    }
    let mut out = BlockState {
        level: alg_lo.level,
        blocks: alg_lo.blocks.iter().map(|b| CMat::zeros(b.dim())).collect(),
    };
    for bh in alg_hi.blocks.iter() {
        let d = bh.dim();
        let w = bh.vertex;
        for p in 0..d {
            let (p_prefix, p_last) = bh.paths[p].steps.split_at(alg_lo.level);
            let &(pv, pi) = prefix_idx.get(p_prefix).expect("prefix exists");
            for q in 0..d {
                let (q_prefix, q_last) = bh.paths[q].steps.split_at(alg_lo.level);
                if p_last != q_last {
                    continue;
                }
                let &(qv, qi) = prefix_idx.get(q_prefix).expect("prefix exists");
                if pv != qv {
                    continue;
                }
                let add = state.blocks[w][(q, p)];
                out.blocks[pv][(qi, pi)] += add;
            }
        }
    }
    Ok(out)
}

/// Uniform-on-minimizers state: per vertex, the equal-weight diagonal on the
/// minimal-potential paths, scaled by the vertex weight.
pub fn local_kms_infinity_state(
    alg: &LevelAlgebra,
    mode: TieMode,
    vertex_weights: &[f64],
) -> Result<BlockState, AlgebraError> {
    check_weights(vertex_weights, alg.blocks.len())?;
    let mut blocks = Vec::with_capacity(alg.blocks.len());
    for (v, b) in alg.blocks.iter().enumerate() {
        let d = b.dim();
        let minimal = minimal_indices(b, mode);
        let mut rho = CMat::zeros(d);
        let share = vertex_weights[v] / minimal.len() as f64;
        for &i in &minimal {
            rho[(i, i)] = Complex64::new(share, 0.0);
        }
        blocks.push(rho);
    }
    Ok(BlockState {
        level: alg.level,
        blocks,
    })
}

pub(crate) fn minimal_indices(block: &AlgebraBlock, mode: TieMode) -> Vec<usize> {
    match mode {
        TieMode::Exact => {
            let m = block
                .energies_exact
                .iter()
                .min()
                .expect("non-empty block")
                .clone();
            block
                .energies_exact
                .iter()
                .enumerate()
                .filter(|(_, e)| **e == m)
                .map(|(i, _)| i)
                .collect()
        }
        TieMode::Float => {
            let m = block.energies.iter().cloned().fold(f64::INFINITY, f64::min);
            let tol = TieMode::float_tol(m);
            block
                .energies
                .iter()
                .enumerate()
                .filter(|(_, e)| **e - m <= tol)
                .map(|(i, _)| i)
                .collect()
        }
    }
}

/// Distance of a vertex-weight vector from the convex hull of distributions
/// reachable by the large-beta limit flow from `lookahead` levels below.
/// Callers warn when this is not ~0.
pub fn limit_flow_defect(
    spec: &DiagramSpec,
    level: usize,
    lookahead: usize,
    mode: TieMode,
    weights: &[f64],
) -> Result<f64, AlgebraError> {
    let deep = level + lookahead;
    if spec.check_depth(deep).is_err() {
        // horizon too short to test; unverifiable rather than wrong
        return Ok(0.0);
    }
    let mut product: Option<crate::matrix::Mat> = None;
    for gap in (level + 1)..=deep {
        let m = crate::stats::stochastic_limit_matrix(spec, gap, mode)
            .map_err(|e| match e {
                crate::error::StatsError::Diagram(d) => AlgebraError::Diagram(d),
                crate::error::StatsError::Tie(t) => AlgebraError::Tie(t),
            })?
            .mat;
        product = Some(match product {
            None => m,
            Some(p) => p.mul(&m),
        });
    }
    let Some(p) = product else {
        return Ok(0.0);
    };
    // Frank-Wolfe for min over the simplex of || P t - w ||^2
    let cols = p.cols;
    let mut t = vec![1.0 / cols as f64; cols];
    for it in 0..500 {
        let pt = p.mul_vec(&t);
        let resid: Vec<f64> = pt.iter().zip(weights).map(|(a, b)| a - b).collect();
        let mut grad = vec![0.0; cols];
        for (c, g) in grad.iter_mut().enumerate() {
            for r in 0..p.rows {
                *g += p[(r, c)] * resid[r];
            }
        }
        let k = grad
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let gamma = 2.0 / (it as f64 + 2.0);
        for (ci, tv) in t.iter_mut().enumerate() {
            let target = if ci == k { 1.0 } else { 0.0 };
            *tv += gamma * (target - *tv);
        }
    }
    let pt = p.mul_vec(&t);
    Ok(pt
        .iter()
        .zip(weights)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>())
}

/// tau . Q_F for a trace given by block weights on the surviving subdiagram:
/// diagonal mass t_v / #G_n^v on each geodesic path into v.
pub fn trace_to_ground(
    alg: &LevelAlgebra,
    sub: &TightSubdiagram,
    block_weights: &BTreeMap<usize, f64>,
) -> Result<BlockState, AlgebraError> {
    if alg.level > sub.depth {
        return Err(AlgebraError::CertificationExceeded {
            certified: sub.depth,
            requested: alg.level,
        });
    }
    let sum: f64 = block_weights.values().sum();
    if (sum - 1.0).abs() > 1e-12 || block_weights.values().any(|&w| w < -1e-12) {
        return Err(AlgebraError::NonTracialWeights(format!(
            "block weights must be a probability vector, sum {sum}"
        )));
    }
    for v in block_weights.keys() {
        if !sub.vertex_survives(alg.level, *v) {
            return Err(AlgebraError::NonTracialWeights(format!(
                "vertex {v} does not survive at level {}",
                alg.level
            )));
        }
    }
    let mut blocks = Vec::with_capacity(alg.blocks.len());
    for (v, b) in alg.blocks.iter().enumerate() {
        let d = b.dim();
        let mut rho = CMat::zeros(d);
        if let Some(&w) = block_weights.get(&v) {
            let geo: Vec<usize> = b
                .paths
                .iter()
                .enumerate()
                .filter(|(_, p)| crate::geodesic::is_geodesic_prefix(sub, p))
                .map(|(i, _)| i)
                .collect();
            if geo.is_empty() {
                return Err(AlgebraError::NonTracialWeights(format!(
                    "no geodesic paths into vertex {v}"
                )));
            }
            let share = w / geo.len() as f64;
            for &i in &geo {
                rho[(i, i)] = Complex64::new(share, 0.0);
            }
        }
        blocks.push(rho);
    }
    Ok(BlockState {
        level: alg.level,
        blocks,
    })
}

/// Verify that a state on the subdiagram algebra is a trace (each block a
/// multiple of the identity) and push it through the compression.
pub fn trace_to_ground_from_state(
    alg: &LevelAlgebra,
    sub: &TightSubdiagram,
    plus_state: &BlockState,
) -> Result<BlockState, AlgebraError> {
    let mut weights = BTreeMap::new();
    let survivors: Vec<usize> = sub.surviving[alg.level].iter().cloned().collect();
    if plus_state.blocks.len() != survivors.len() {
        return Err(AlgebraError::BlockMismatch(
            "state blocks do not match the surviving vertices".into(),
        ));
    }
    for (bi, rho) in plus_state.blocks.iter().enumerate() {
        let d = rho.dim;
        let t = rho.trace().re;
        if d > 0 {
            let c = t / d as f64;
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { c } else { 0.0 };
                    if (rho[(i, j)] - Complex64::new(expect, 0.0)).norm() > 1e-12 {
                        return Err(AlgebraError::NonTracialWeights(format!(
                            "block {bi} is not a multiple of the identity"
                        )));
                    }
                }
            }
        }
        if t > 0.0 {
            weights.insert(survivors[bi], t);
        }
    }
    trace_to_ground(alg, sub, &weights)
}

/// omega(Q_n): total mass on the geodesic projections.
pub fn geodesic_projection_mass(
    alg: &LevelAlgebra,
    sub: &TightSubdiagram,
    state: &BlockState,
) -> Result<f64, AlgebraError> {
    if alg.level > sub.depth {
        return Err(AlgebraError::CertificationExceeded {
            certified: sub.depth,
            requested: alg.level,
        });
    }
    let mut mass = 0.0;
    for (v, b) in alg.blocks.iter().enumerate() {
        for (i, p) in b.paths.iter().enumerate() {
            if crate::geodesic::is_geodesic_prefix(sub, p) {
                mass += state.blocks[v][(i, i)].re;
            }
        }
    }
    Ok(mass)
}
