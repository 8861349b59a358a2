//! Per-vertex path statistics by dynamic programming, and the projective /
//! stochastic matrix systems derived from them.
//!
//! Nothing here enumerates paths: partition functions are accumulated in the
//! log domain, path and minimizer counts as big integers, so depth and |beta|
//! are limited only by patience.

use crate::diagram::DiagramSpec;
use crate::error::{StatsError, TieError};
use crate::matrix::{l1_distance, Mat};
use crate::potential::TieMode;
use crate::util::{big_ratio_f64, fmt_g17, logsumexp};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::fmt::Write as _;

/// Statistics of the root-emitted paths into one level.
#[derive(Clone, Debug)]
pub struct LevelStats {
    pub level: usize,
    /// Number of root paths ending at each vertex.
    pub path_count: Vec<BigUint>,
    /// Requested inverse temperatures, in call order.
    pub betas: Vec<f64>,
    /// log_z[b][v] = log sum over paths into v of e^{-beta_b * F(path)}.
    pub log_z: Vec<Vec<f64>>,
    /// Minimal path potential per vertex.
    pub min_potential: Vec<f64>,
    /// Number of minimizing paths per vertex.
    pub min_count: Vec<BigUint>,
}

/// Minimal-potential DP with per-arrow tightness flags. Shared by the
/// minimizer counts here and by the geodesic extraction.
#[derive(Clone, Debug)]
pub(crate) struct MinDp {
    /// min_f[j][v]: minimal potential of root paths into vertex v at level j.
    pub min_f: Vec<Vec<f64>>,
    /// Exact counterpart, kept in both modes (floats are dyadic rationals).
    pub min_exact: Vec<Vec<BigRational>>,
    /// tight[g-1][bundle]: arrow attains the minimum at gap g.
    pub tight: Vec<Vec<bool>>,
    /// min_count[j][v]: number of minimizing root paths.
    pub min_count: Vec<Vec<BigUint>>,
}

pub(crate) fn min_dp(
    spec: &DiagramSpec,
    depth: usize,
    mode: TieMode,
) -> Result<MinDp, StatsError> {
    spec.check_depth(depth)?;
    let mut min_f = vec![vec![0.0f64]];
    let mut min_exact = vec![vec![BigRational::zero()]];
    let mut tight = Vec::new();
    let mut min_count = vec![vec![BigUint::one()]];

    for gap in 1..=depth {
        let bundles = spec.bundles_at(gap)?;
        let width = spec.level_size(gap);
        let prev_f = &min_f[gap - 1];
        let prev_exact = &min_exact[gap - 1];

        let mut level_f = vec![f64::INFINITY; width];
        let mut level_exact: Vec<Option<BigRational>> = vec![None; width];
        for b in &bundles {
            let cand = prev_f[b.from] + b.potential.f64();
            if cand < level_f[b.to] {
                level_f[b.to] = cand;
            }
            let cand_exact = &prev_exact[b.from] + b.potential.exact();
            match &level_exact[b.to] {
                Some(cur) if *cur <= cand_exact => {}
                _ => level_exact[b.to] = Some(cand_exact),
            }
        }
        let level_exact: Vec<BigRational> = level_exact
            .into_iter()
            .map(|o| o.expect("every vertex receives an arrow"))
            .collect();

        let mut gap_tight = vec![false; bundles.len()];
        let mut level_count = vec![BigUint::zero(); width];
        for (bi, b) in bundles.iter().enumerate() {
            let is_tight = match mode {
                TieMode::Exact => {
                    &prev_exact[b.from] + b.potential.exact() == level_exact[b.to]
                }
                TieMode::Float => {
                    let m = level_f[b.to];
                    let defect = prev_f[b.from] + b.potential.f64() - m;
                    let tol = TieMode::float_tol(m);
                    if defect > tol && defect <= 64.0 * tol {
                        return Err(TieError::Ambiguous {
                            gap,
                            from: spec.level_names(gap - 1)[b.from].clone(),
                            to: spec.level_names(gap)[b.to].clone(),
                            defect,
                            tol,
                        }
                        .into());
                    }
                    defect <= tol
                }
            };
            gap_tight[bi] = is_tight;
            if is_tight {
                let add = &min_count[gap - 1][b.from] * &b.count;
                level_count[b.to] += add;
            }
        }

        min_f.push(level_f);
        min_exact.push(level_exact);
        tight.push(gap_tight);
        min_count.push(level_count);
    }

    Ok(MinDp {
        min_f,
        min_exact,
        tight,
        min_count,
    })
}

/// Evaluate path counts, log partition functions and minimizer data level by
/// level, without enumerating paths.
pub fn compute_level_stats(
    spec: &DiagramSpec,
    depth: usize,
    betas: &[f64],
) -> Result<Vec<LevelStats>, StatsError> {
    compute_level_stats_mode(spec, depth, betas, TieMode::Float)
}

pub fn compute_level_stats_mode(
    spec: &DiagramSpec,
    depth: usize,
    betas: &[f64],
    mode: TieMode,
) -> Result<Vec<LevelStats>, StatsError> {
    spec.check_depth(depth)?;
    let dp = min_dp(spec, depth, mode)?;
    let (counts, log_z) = partition_dp(spec, depth, betas)?;
    Ok((0..=depth)
        .map(|j| LevelStats {
            level: j,
            path_count: counts[j].clone(),
            betas: betas.to_vec(),
            log_z: log_z[j].clone(),
            min_potential: dp.min_f[j].clone(),
            min_count: dp.min_count[j].clone(),
        })
        .collect())
}

/// Per-level path counts and log partition values (indexed [level][beta][vertex]).
pub(crate) type PartitionTable = (Vec<Vec<BigUint>>, Vec<Vec<Vec<f64>>>);

/// Path counts and log partition functions only; no tie-sensitive data.
pub(crate) fn partition_dp(
    spec: &DiagramSpec,
    depth: usize,
    betas: &[f64],
) -> Result<PartitionTable, StatsError> {
    spec.check_depth(depth)?;
    let mut counts: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
    let mut log_z: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0]; betas.len()]];
    for gap in 1..=depth {
        let bundles = spec.bundles_at(gap)?;
        let width = spec.level_size(gap);

        let mut level_counts = vec![BigUint::zero(); width];
        for b in &bundles {
            let add = &counts[gap - 1][b.from] * &b.count;
            level_counts[b.to] += add;
        }
        counts.push(level_counts);

        let mut level_z = Vec::with_capacity(betas.len());
        for (bi, &beta) in betas.iter().enumerate() {
            let mut terms: Vec<Vec<f64>> = vec![Vec::new(); width];
            for b in &bundles {
                terms[b.to]
                    .push(log_z[gap - 1][bi][b.from] + b.ln_count() - beta * b.potential.f64());
            }
            level_z.push(terms.iter().map(|t| logsumexp(t)).collect::<Vec<f64>>());
        }
        log_z.push(level_z);
    }
    Ok((counts, log_z))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SystemFlavor {
    RawGauge { beta: f64 },
    LeftStochastic { beta: f64 },
    StochasticLimit,
    UserSupplied,
}

/// One matrix of a projective system, over level_{j-1} x level_j.
#[derive(Clone, Debug)]
pub struct ProjectiveSystemMatrix {
    pub gap: usize,
    pub flavor: SystemFlavor,
    pub mat: Mat,
}

/// Gauge-weight matrix: entry (v, w) sums e^{-beta F(a)} over the arrows
/// v -> w. At beta = 0 this is the transposed multiplicity matrix.
pub fn gauge_matrix(
    spec: &DiagramSpec,
    gap: usize,
    beta: f64,
) -> Result<ProjectiveSystemMatrix, StatsError> {
    let bundles = spec.bundles_at(gap)?;
    let mut mat = Mat::zeros(spec.level_size(gap - 1), spec.level_size(gap));
    for b in &bundles {
        mat[(b.from, b.to)] += (b.ln_count() - beta * b.potential.f64()).exp();
    }
    Ok(ProjectiveSystemMatrix {
        gap,
        flavor: SystemFlavor::RawGauge { beta },
        mat,
    })
}

/// Column-normalized path-weight matrix: entry (v, w) is the weight of the
/// paths into w passing through v, relative to all paths into w. Computed via
/// the partition-function factorization, in the log domain.
pub fn stochastic_matrix(
    spec: &DiagramSpec,
    gap: usize,
    beta: f64,
) -> Result<ProjectiveSystemMatrix, StatsError> {
    let (_, log_z) = partition_dp(spec, gap, &[beta])?;
    stochastic_matrix_from_logz(spec, gap, beta, 0, &log_z)
}

/// log_z is indexed [level][beta][vertex].
pub(crate) fn stochastic_matrix_from_logz(
    spec: &DiagramSpec,
    gap: usize,
    beta: f64,
    beta_idx: usize,
    log_z: &[Vec<Vec<f64>>],
) -> Result<ProjectiveSystemMatrix, StatsError> {
    let bundles = spec.bundles_at(gap)?;
    let rows = spec.level_size(gap - 1);
    let cols = spec.level_size(gap);
    // log of the per-(v, w) arrow weight sums
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); rows * cols];
    for b in &bundles {
        terms[b.from * cols + b.to].push(b.ln_count() - beta * b.potential.f64());
    }
    let mut mat = Mat::zeros(rows, cols);
    for v in 0..rows {
        for w in 0..cols {
            let t = &terms[v * cols + w];
            if t.is_empty() {
                continue;
            }
            mat[(v, w)] =
                (log_z[gap - 1][beta_idx][v] + logsumexp(t) - log_z[gap][beta_idx][w]).exp();
        }
    }
    Ok(ProjectiveSystemMatrix {
        gap,
        flavor: SystemFlavor::LeftStochastic { beta },
        mat,
    })
}

/// Large-beta limit of the stochastic matrices: minimizer-count ratios along
/// tight arrows.
pub fn stochastic_limit_matrix(
    spec: &DiagramSpec,
    gap: usize,
    mode: TieMode,
) -> Result<ProjectiveSystemMatrix, StatsError> {
    let dp = min_dp(spec, gap, mode)?;
    stochastic_limit_from_dp(spec, gap, &dp)
}

pub(crate) fn stochastic_limit_from_dp(
    spec: &DiagramSpec,
    gap: usize,
    dp: &MinDp,
) -> Result<ProjectiveSystemMatrix, StatsError> {
    let bundles = spec.bundles_at(gap)?;
    let rows = spec.level_size(gap - 1);
    let cols = spec.level_size(gap);
    let mut numer = vec![BigUint::zero(); rows * cols];
    for (bi, b) in bundles.iter().enumerate() {
        if dp.tight[gap - 1][bi] {
            let add = &dp.min_count[gap - 1][b.from] * &b.count;
            numer[b.from * cols + b.to] += add;
        }
    }
    let mut mat = Mat::zeros(rows, cols);
    for w in 0..cols {
        let den = &dp.min_count[gap][w];
        for v in 0..rows {
            let n = &numer[v * cols + w];
            if !n.is_zero() {
                mat[(v, w)] = big_ratio_f64(n, den);
            }
        }
    }
    Ok(ProjectiveSystemMatrix {
        gap,
        flavor: SystemFlavor::StochasticLimit,
        mat,
    })
}

/// Certified bound on the unseen tail of the distance series.
#[derive(Clone, Debug, PartialEq)]
pub enum TailBound {
    /// All trailing distances vanish.
    Zero,
    /// Measured geometric decay over the trailing window: the tail is bounded
    /// by `last * ratio / (1 - ratio)`.
    Geometric {
        ratio: f64,
        bound: f64,
        window: usize,
    },
    Inconclusive { reason: String },
}

#[derive(Clone, Debug)]
pub struct L1Report {
    pub beta: f64,
    /// Distance between the beta-stochastic and limit matrices per gap.
    pub per_gap: Vec<f64>,
    pub partial_sum: f64,
    pub tail: TailBound,
}

impl L1Report {
    /// Upper bound on the full series when the tail is certified.
    pub fn certified_total(&self) -> Option<f64> {
        match &self.tail {
            TailBound::Zero => Some(self.partial_sum),
            TailBound::Geometric { bound, .. } => Some(self.partial_sum + bound),
            TailBound::Inconclusive { .. } => None,
        }
    }
}

/// Per-gap l1 distances between the beta-stochastic matrices and their
/// large-beta limits, with a tail bound for periodic presentations whose
/// trailing distances decay geometrically over the observed window.
pub fn l1_convergence_report(
    spec: &DiagramSpec,
    beta: f64,
    depth: usize,
    mode: TieMode,
) -> Result<L1Report, StatsError> {
    spec.check_depth(depth)?;
    let (_, log_z) = partition_dp(spec, depth, &[beta])?;
    let dp = min_dp(spec, depth, mode)?;
    let mut per_gap = Vec::with_capacity(depth);
    for gap in 1..=depth {
        let s = stochastic_matrix_from_logz(spec, gap, beta, 0, &log_z)?;
        let l = stochastic_limit_from_dp(spec, gap, &dp)?;
        per_gap.push(l1_distance(&s.mat, &l.mat));
    }
    let partial_sum = per_gap.iter().sum();

    let tail = if !spec.is_periodic() {
        TailBound::Inconclusive {
            reason: "finite-prefix presentation: tail behaviour unknown beyond the horizon".into(),
        }
    } else {
        let window = 5usize.min(depth.saturating_sub(1)).max(2);
        let tail_slice = &per_gap[depth - window..];
        if tail_slice.iter().all(|&d| d <= 1e-15) {
            TailBound::Zero
        } else {
            let mut ratio: f64 = 0.0;
            let mut ok = true;
            for pair in tail_slice.windows(2) {
                if pair[0] <= 0.0 {
                    ok = false;
                    break;
                }
                ratio = ratio.max(pair[1] / pair[0]);
            }
            if ok && ratio < 0.999 {
                let last = *tail_slice.last().unwrap();
                TailBound::Geometric {
                    ratio,
                    bound: last * ratio / (1.0 - ratio),
                    window,
                }
            } else {
                TailBound::Inconclusive {
                    reason: format!(
                        "trailing distances do not decay geometrically over the last {window} gaps"
                    ),
                }
            }
        }
    };

    Ok(L1Report {
        beta,
        per_gap,
        partial_sum,
        tail,
    })
}

/// CSV rows (gap, beta, l1_distance, partial_sum), one block per report.
pub fn l1_reports_csv(reports: &[L1Report]) -> String {
    let mut out = String::from("gap,beta,l1_distance,partial_sum\n");
    for r in reports {
        let mut running = 0.0;
        for (gi, d) in r.per_gap.iter().enumerate() {
            running += d;
            writeln!(
                out,
                "{},{},{},{}",
                gi + 1,
                fmt_g17(r.beta),
                fmt_g17(*d),
                fmt_g17(running)
            )
            .unwrap();
        }
    }
    out
}

/// Dense text dump of a system matrix with vertex-name headers.
pub fn matrix_dump(spec: &DiagramSpec, m: &ProjectiveSystemMatrix) -> String {
    let mut out = String::new();
    write!(out, "gap {}", m.gap).unwrap();
    for name in spec.level_names(m.gap) {
        write!(out, "\t{name}").unwrap();
    }
    writeln!(out).unwrap();
    for (v, name) in spec.level_names(m.gap - 1).iter().enumerate() {
        write!(out, "{name}").unwrap();
        for w in 0..m.mat.cols {
            write!(out, "\t{}", fmt_g17(m.mat[(v, w)])).unwrap();
        }
        writeln!(out).unwrap();
    }
    out
}
