//! Brute-force oracles: explicit path enumeration, independent of the DP
//! layer it is used to check.

#![allow(dead_code)]

use bratteli::diagram::FinitePath;
use bratteli::matrix::Mat;
use bratteli::DiagramSpec;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// One enumerated root path with its potential in both tracks.
#[derive(Clone, Debug)]
pub struct BrutePath {
    pub path: FinitePath,
    pub potential: f64,
    pub exact: BigRational,
}

/// All root paths to every level up to `depth`, fully materialized.
pub struct BruteTable {
    pub depth: usize,
    /// per level, per path
    pub paths: Vec<Vec<BrutePath>>,
}

pub fn enumerate(spec: &DiagramSpec, depth: usize) -> BruteTable {
    let mut paths = Vec::with_capacity(depth + 1);
    for level in 0..=depth {
        let level_paths = spec
            .enumerate_root_paths(level, 2_000_000)
            .expect("oracle enumeration");
        let mut out = Vec::with_capacity(level_paths.len());
        for p in level_paths {
            let pot = spec.path_potential(&p).expect("path potential");
            out.push(BrutePath {
                potential: pot.f64(),
                exact: pot.exact().clone(),
                path: p,
            });
        }
        paths.push(out);
    }
    BruteTable { depth, paths }
}

impl BruteTable {
    pub fn count(&self, level: usize, vertex: usize) -> BigUint {
        BigUint::from(
            self.paths[level]
                .iter()
                .filter(|p| p.path.end_vertex == vertex)
                .count(),
        )
    }

    pub fn log_z(&self, level: usize, vertex: usize, beta: f64) -> f64 {
        let terms: Vec<f64> = self.paths[level]
            .iter()
            .filter(|p| p.path.end_vertex == vertex)
            .map(|p| -beta * p.potential)
            .collect();
        bratteli::util::logsumexp(&terms)
    }

    pub fn min_potential(&self, level: usize, vertex: usize) -> f64 {
        self.paths[level]
            .iter()
            .filter(|p| p.path.end_vertex == vertex)
            .map(|p| p.potential)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_exact(&self, level: usize, vertex: usize) -> BigRational {
        self.paths[level]
            .iter()
            .filter(|p| p.path.end_vertex == vertex)
            .map(|p| p.exact.clone())
            .min()
            .expect("vertex reachable")
    }

    /// Number of exact minimizers into a vertex.
    pub fn min_count(&self, level: usize, vertex: usize) -> BigUint {
        let m = self.min_exact(level, vertex);
        BigUint::from(
            self.paths[level]
                .iter()
                .filter(|p| p.path.end_vertex == vertex && p.exact == m)
                .count(),
        )
    }

    /// Stochastic matrix entry (v, w) at a gap by the explicit path-sum ratio.
    pub fn stochastic(&self, spec: &DiagramSpec, gap: usize, beta: f64) -> Mat {
        let rows = spec.level_size(gap - 1);
        let cols = spec.level_size(gap);
        let mut mat = Mat::zeros(rows, cols);
        for w in 0..cols {
            let denom: f64 = self.paths[gap]
                .iter()
                .filter(|p| p.path.end_vertex == w)
                .map(|p| (-beta * p.potential).exp())
                .sum();
            for v in 0..rows {
                let num: f64 = self.paths[gap]
                    .iter()
                    .filter(|p| {
                        p.path.end_vertex == w && vertex_at(spec, &p.path, gap - 1) == v
                    })
                    .map(|p| (-beta * p.potential).exp())
                    .sum();
                mat[(v, w)] = num / denom;
            }
        }
        mat
    }

    /// Minimizer-ratio matrix by explicit counting with exact comparisons.
    pub fn stochastic_limit(&self, spec: &DiagramSpec, gap: usize) -> Mat {
        let rows = spec.level_size(gap - 1);
        let cols = spec.level_size(gap);
        let mut mat = Mat::zeros(rows, cols);
        for w in 0..cols {
            let m = self.min_exact(gap, w);
            let denom = self.paths[gap]
                .iter()
                .filter(|p| p.path.end_vertex == w && p.exact == m)
                .count() as f64;
            for v in 0..rows {
                let num = self.paths[gap]
                    .iter()
                    .filter(|p| {
                        p.path.end_vertex == w
                            && p.exact == m
                            && vertex_at(spec, &p.path, gap - 1) == v
                    })
                    .count() as f64;
                mat[(v, w)] = num / denom;
            }
        }
        mat
    }

    /// Paths every prefix of which is exactly minimal to its endpoint, and
    /// which admit a prefix-minimal continuation down to `horizon`. These are
    /// the geodesic prefixes decidable from a finite window.
    pub fn geodesic_prefixes(&self, spec: &DiagramSpec, level: usize, horizon: usize) -> Vec<&BrutePath> {
        assert!(level <= horizon && horizon <= self.depth);
        // mark prefix-minimal paths per level
        let minimal = |bp: &BrutePath| -> bool {
            for n in 1..=bp.path.len() {
                let prefix_pot: BigRational = prefix_exact(spec, &bp.path, n);
                let end = vertex_at(spec, &bp.path, n);
                if prefix_pot != self.min_exact(n, end) {
                    return false;
                }
            }
            true
        };
        let deep_survivors: Vec<&BrutePath> = self.paths[horizon]
            .iter()
            .filter(|p| minimal(p))
            .collect();
        self.paths[level]
            .iter()
            .filter(|p| {
                deep_survivors
                    .iter()
                    .any(|q| q.path.steps[..level] == p.path.steps[..])
            })
            .collect()
    }
}

/// Vertex index a root path passes through at a level.
pub fn vertex_at(spec: &DiagramSpec, path: &FinitePath, level: usize) -> usize {
    if level == 0 {
        return 0;
    }
    let bundles = spec.bundles_at(level).expect("within depth");
    bundles[path.steps[level - 1].bundle].to
}

pub fn prefix_exact(spec: &DiagramSpec, path: &FinitePath, len: usize) -> BigRational {
    let mut acc = BigRational::zero();
    for (i, s) in path.steps.iter().take(len).enumerate() {
        let bundles = spec.bundles_at(i + 1).expect("within depth");
        acc += bundles[s.bundle].potential.exact();
    }
    acc
}

/// The 25-diagram random corpus used by the oracle suites: at most 3 vertices
/// per level, depth at most 3, potentials in [-2, 2].
pub fn oracle_corpus() -> Vec<DiagramSpec> {
    (0..25u64)
        .map(|seed| {
            let depth = 1 + (seed % 3) as usize;
            bratteli::fixtures::random_diagram(1000 + seed, 3, depth, (-2.0, 2.0))
        })
        .collect()
}

pub fn big_one() -> BigUint {
    BigUint::one()
}
