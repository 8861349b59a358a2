//! Numerical realization of the inverse limits parametrizing KMS states: the
//! simplex flows under the column-normalized matrices, the raw-gauge limit
//! vectors with top normalization, the large-beta transport toward the
//! minimizer flow, and the perturbation transport between comparable matrix
//! systems.
//!
//! Convergence is never asserted: every approximant carries the residual of
//! its last deepening step, and uniqueness claims are phrased as multi-seed
//! agreement within tolerance.

use crate::diagram::DiagramSpec;
use crate::error::StatsError;
use crate::matrix::Mat;
use crate::potential::TieMode;
use crate::stats;
use crate::util::SplitMix64;

pub const DEFAULT_FLOW_TOL: f64 = 1e-9;
/// Default budget of matrix multiplications per query.
pub const DEFAULT_BUDGET: usize = 10_000;

/// Nonnegative vertex distribution summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexVector {
    pub level: usize,
    pub values: Vec<f64>,
}

impl SimplexVector {
    pub fn new(level: usize, values: Vec<f64>) -> Result<Self, String> {
        if values.iter().any(|&x| x < -1e-12) {
            return Err("negative entry".into());
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!("entries sum to {sum}, expected 1"));
        }
        Ok(SimplexVector { level, values })
    }

    pub fn uniform(level: usize, width: usize) -> Self {
        SimplexVector {
            level,
            values: vec![1.0 / width as f64; width],
        }
    }

    pub fn extreme(level: usize, width: usize, at: usize) -> Self {
        let mut values = vec![0.0; width];
        values[at] = 1.0;
        SimplexVector { level, values }
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApproximantFlavor {
    GaugeSystem { beta: f64 },
    StochasticSystem { beta: f64 },
    StochasticLimitSystem,
}

/// A finite approximant of an inverse-limit element at one base level.
#[derive(Clone, Debug)]
pub struct InverseLimitApproximant {
    pub base_level: usize,
    pub values: Vec<f64>,
    /// Effective depth of the seed (may be astronomically deep after
    /// repeated-squaring acceleration on stationary tails).
    pub source_depth: u64,
    /// l1 change produced by the last deepening step.
    pub residual: f64,
    pub converged: bool,
    pub flavor: ApproximantFlavor,
    /// Matrix multiplications spent.
    pub work: usize,
}

/// How the seed distribution at the deep level is chosen.
#[derive(Clone, Debug)]
pub enum Seed {
    Uniform,
    Extreme(usize),
    Explicit(Vec<f64>),
}

impl Seed {
    fn instantiate(&self, width: usize) -> Option<Vec<f64>> {
        match self {
            Seed::Uniform => Some(vec![1.0 / width as f64; width]),
            Seed::Extreme(i) => {
                if *i >= width {
                    return None;
                }
                let mut v = vec![0.0; width];
                v[*i] = 1.0;
                Some(v)
            }
            Seed::Explicit(v) => {
                if v.len() != width {
                    return None;
                }
                Some(v.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub tol: f64,
    pub budget: usize,
    /// Gaps to iterate sequentially before trying stationary acceleration.
    pub sequential: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: DEFAULT_FLOW_TOL,
            budget: DEFAULT_BUDGET,
            sequential: 64,
        }
    }
}

fn l1(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(a, b)| (a - b).abs()).sum()
}

/// Rescale a nonnegative vector to sum 1. The stochastic flow preserves the
/// simplex exactly; this only removes float drift, which would otherwise
/// compound into underflow at the astronomical depths reached by squaring.
fn renorm_simplex(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        for x in v {
            *x /= sum;
        }
    }
}

/// Renormalize every column to sum 1. Products of left-stochastic matrices
/// are left stochastic exactly; float drift breaks this at extreme powers.
fn rescale_columns(m: &mut Mat) {
    for j in 0..m.cols {
        let sum: f64 = (0..m.rows).map(|i| m[(i, j)]).sum();
        if sum > 0.0 {
            for i in 0..m.rows {
                m[(i, j)] /= sum;
            }
        }
    }
}

fn mats_close(a: &Mat, b: &Mat) -> bool {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return false;
    }
    let scale = a.max_abs().max(b.max_abs()).max(1.0);
    a.data()
        .iter()
        .zip(b.data())
        .all(|(x, y)| (x - y).abs() <= 1e-12 * scale)
}

/// Iterate products M_{j+1} M_{j+2} ... applied to re-instantiated seeds,
/// deepening until the base-level output stabilizes. When the per-gap
/// matrices become stationary the tail is raised to powers by repeated
/// squaring, so stiff contractions (large beta) still converge within budget.
fn push_flow(
    gap_matrix: &dyn Fn(usize) -> Result<Mat, StatsError>,
    level_width: &dyn Fn(usize) -> usize,
    base_level: usize,
    min_depth: usize,
    max_gap: Option<usize>,
    seed: &Seed,
    opts: FlowOptions,
) -> Result<(Vec<f64>, u64, f64, bool, usize), StatsError> {
    let mut product: Option<Mat> = None; // base_level x current deep level
    let mut out_prev: Option<Vec<f64>> = None;
    let mut residual = f64::INFINITY;
    let mut work = 0usize;
    let mut last_mat: Option<Mat> = None;
    let mut stationary_run = 0usize;
    let mut gap = base_level;
    let hard_stop = max_gap.unwrap_or(usize::MAX);

    loop {
        if gap >= hard_stop || work >= opts.budget {
            break;
        }
        gap += 1;
        let m = gap_matrix(gap)?;
        if let Some(prev) = &last_mat {
            if mats_close(prev, &m) {
                stationary_run += 1;
            } else {
                stationary_run = 0;
            }
        }
        last_mat = Some(m.clone());
        product = Some(match product {
            None => m,
            Some(p) => {
                work += 1;
                p.mul(&m)
            }
        });
        let width = level_width(gap);
        let at_stop = gap >= hard_stop || work >= opts.budget;
        let Some(s) = seed.instantiate(width) else {
            if at_stop {
                return Err(StatsError::Diagram(crate::error::DiagramError::Schema(
                    format!("seed does not fit level {gap} of width {width}"),
                )));
            }
            // explicit seeds may only fit some levels; measure residuals
            // where they do
            out_prev = None;
            continue;
        };
        let mut out = product.as_ref().unwrap().mul_vec(&s);
        renorm_simplex(&mut out);
        if let Some(prev) = &out_prev {
            residual = l1(&out, prev);
        }
        let deep_enough = gap >= base_level + min_depth.max(1);
        out_prev = Some(out);
        if deep_enough && residual <= opts.tol {
            return Ok((out_prev.unwrap(), gap as u64, residual, true, work));
        }
        // stationary tail: jump ahead by squaring
        if deep_enough && stationary_run >= 3 && gap >= opts.sequential + base_level {
            let c = last_mat.clone().unwrap();
            let mut power = c.clone(); // c^(2^t)
            let mut p = product.clone().unwrap();
            let mut depth_jump = 0u128;
            let mut step: u128 = 1;
            for _ in 0..60 {
                if work + 3 > opts.budget {
                    break;
                }
                let mut candidate = p.mul(&power);
                work += 1;
                rescale_columns(&mut candidate);
                let s = seed
                    .instantiate(level_width(gap))
                    .expect("stationary width");
                let mut out_new = candidate.mul_vec(&s);
                renorm_simplex(&mut out_new);
                let r = l1(&out_new, out_prev.as_ref().unwrap());
                out_prev = Some(out_new);
                p = candidate;
                depth_jump += step;
                if r <= opts.tol {
                    // verify with one more application of the tail matrix
                    let verify = p.mul(&c);
                    work += 1;
                    let mut out_v = verify.mul_vec(&seed.instantiate(level_width(gap)).unwrap());
                    renorm_simplex(&mut out_v);
                    let rv = l1(&out_v, out_prev.as_ref().unwrap());
                    let depth = gap as u64 + depth_jump.min(u64::MAX as u128) as u64;
                    return Ok((out_v, depth + 1, rv.max(r), rv.max(r) <= opts.tol, work));
                }
                power = power.mul(&power);
                work += 1;
                rescale_columns(&mut power);
                step *= 2;
            }
            break;
        }
    }

    let out = match out_prev {
        Some(o) => o,
        None => {
            // zero-depth request: the seed itself at the base level
            let width = level_width(base_level);
            seed.instantiate(width)
                .ok_or_else(|| {
                    StatsError::Diagram(crate::error::DiagramError::Schema(
                        "seed does not fit the base level".into(),
                    ))
                })?
        }
    };
    let converged = residual <= opts.tol;
    Ok((out, gap as u64, residual, converged, work))
}

/// Vertex distribution of a beta-KMS state approximated from a seed placed
/// `depth` levels below; for periodic presentations the flow is deepened
/// until the residual drops under tolerance or the budget runs out.
pub fn kms_vertex_distribution(
    spec: &DiagramSpec,
    beta: f64,
    base_level: usize,
    depth: usize,
    seed: &Seed,
    opts: FlowOptions,
) -> Result<InverseLimitApproximant, StatsError> {
    let deep = base_level + depth;
    spec.check_depth(deep)?;
    let table_depth = match spec.available_depth() {
        Some(d) => d,
        None => deep.max(base_level + opts.sequential + 8),
    };
    let (_, log_z) = stats::partition_dp(spec, table_depth, &[beta])?;
    let gap_matrix = |gap: usize| -> Result<Mat, StatsError> {
        if gap <= table_depth {
            Ok(stats::stochastic_matrix_from_logz(spec, gap, beta, 0, &log_z)?.mat)
        } else {
            Ok(stats::stochastic_matrix(spec, gap, beta)?.mat)
        }
    };
    let width = |level: usize| spec.level_size(level);
    let max_gap = if spec.is_periodic() { None } else { Some(deep) };
    let min_depth = if spec.is_periodic() { depth.max(2) } else { depth };
    let (values, source_depth, residual, converged, work) = push_flow(
        &gap_matrix,
        &width,
        base_level,
        min_depth,
        max_gap,
        seed,
        opts,
    )?;
    Ok(InverseLimitApproximant {
        base_level,
        values,
        source_depth,
        residual,
        converged,
        flavor: ApproximantFlavor::StochasticSystem { beta },
        work,
    })
}

/// Agreement of the flow across several seeds: uniform, every extreme point
/// of the deep level, and seeded random distributions up to `min_seeds`.
#[derive(Clone, Debug)]
pub struct AgreementReport {
    pub beta: f64,
    pub base_level: usize,
    pub distributions: Vec<InverseLimitApproximant>,
    pub max_pairwise_l1: f64,
    pub all_converged: bool,
}

impl AgreementReport {
    pub fn agree(&self, tol: f64) -> bool {
        self.all_converged && self.max_pairwise_l1 <= tol
    }

    pub fn consensus(&self) -> &[f64] {
        &self.distributions[0].values
    }
}

pub fn multi_seed_kms_distribution(
    spec: &DiagramSpec,
    beta: f64,
    base_level: usize,
    depth: usize,
    min_seeds: usize,
    opts: FlowOptions,
) -> Result<AgreementReport, StatsError> {
    let deep_width = spec.level_size(base_level + depth);
    let mut seeds = vec![Seed::Uniform];
    for i in 0..deep_width {
        seeds.push(Seed::Extreme(i));
    }
    let mut rng = SplitMix64::new(0xa9ee);
    while seeds.len() < min_seeds {
        let mut v: Vec<f64> = (0..deep_width).map(|_| rng.uniform() + 1e-3).collect();
        let sum: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= sum);
        seeds.push(Seed::Explicit(v));
    }
    let distributions: Vec<InverseLimitApproximant> = seeds
        .iter()
        .map(|s| kms_vertex_distribution(spec, beta, base_level, depth, s, opts))
        .collect::<Result<_, _>>()?;
    let mut max_pairwise = 0.0f64;
    for i in 0..distributions.len() {
        for j in (i + 1)..distributions.len() {
            max_pairwise = max_pairwise.max(l1(&distributions[i].values, &distributions[j].values));
        }
    }
    let all_converged = distributions.iter().all(|d| d.converged);
    Ok(AgreementReport {
        beta,
        base_level,
        distributions,
        max_pairwise_l1: max_pairwise,
        all_converged,
    })
}

/// Normalized limit vector of the raw gauge system: iterated products with
/// per-step rescaling, reported with the top component normalized to 1.
pub fn gauge_limit_vector(
    spec: &DiagramSpec,
    beta: f64,
    base_level: usize,
    depth: usize,
    opts: FlowOptions,
) -> Result<InverseLimitApproximant, StatsError> {
    let deep = base_level + depth;
    spec.check_depth(deep)?;
    // top factor: gauge product from the root down to the base level
    let mut top = Mat::identity(1);
    for gap in 1..=base_level {
        top = top.mul(&stats::gauge_matrix(spec, gap, beta)?.mat);
    }
    let gap_matrix = |gap: usize| -> Result<Mat, StatsError> {
        let mut m = stats::gauge_matrix(spec, gap, beta)?.mat;
        // rescale for overflow safety; scaling drops out of the normalized
        // output (scaled systems have homeomorphic limits)
        let s = m.max_abs();
        if s > 0.0 {
            m = m.scale(1.0 / s);
        }
        Ok(m)
    };
    let width = |level: usize| spec.level_size(level);
    let normalize = move |y: &[f64]| -> Vec<f64> {
        let psi0 = top.mul_vec(y)[0];
        y.iter().map(|x| x / psi0).collect()
    };

    // sequential deepening with normalized residuals
    let mut product: Option<Mat> = None;
    let mut out_prev: Option<Vec<f64>> = None;
    let mut residual = f64::INFINITY;
    let mut work = 0usize;
    let mut last_mat: Option<Mat> = None;
    let mut stationary_run = 0;
    let mut gap = base_level;
    let max_gap = if spec.is_periodic() { usize::MAX } else { deep };
    let min_gap = base_level + depth.max(1).min(if spec.is_periodic() { 2 } else { depth });
    let mut converged = false;
    let mut source_depth;
    loop {
        source_depth = gap as u64;
        if gap >= max_gap || work >= opts.budget {
            break;
        }
        gap += 1;
        let m = gap_matrix(gap)?;
        if let Some(prev) = &last_mat {
            if mats_close(prev, &m) {
                stationary_run += 1;
            } else {
                stationary_run = 0;
            }
        }
        last_mat = Some(m.clone());
        product = Some(match product {
            None => m,
            Some(p) => {
                work += 1;
                let mut q = p.mul(&m);
                let s = q.max_abs();
                if s > 0.0 {
                    q = q.scale(1.0 / s);
                }
                q
            }
        });
        let out = normalize(&product.as_ref().unwrap().mul_vec(&vec![
            1.0;
            width(gap)
        ]));
        if let Some(prev) = &out_prev {
            residual = l1(&out, prev);
        }
        out_prev = Some(out);
        source_depth = gap as u64;
        if gap >= min_gap && residual <= opts.tol {
            converged = true;
            break;
        }
        if gap >= min_gap && stationary_run >= 3 && work + 3 < opts.budget {
            let c = last_mat.clone().unwrap();
            let mut power = c.clone();
            let mut p = product.clone().unwrap();
            let mut jump = 0u64;
            let mut step = 1u64;
            for _ in 0..60 {
                if work + 3 > opts.budget {
                    break;
                }
                let mut cand = p.mul(&power);
                work += 1;
                let s = cand.max_abs();
                if s > 0.0 {
                    cand = cand.scale(1.0 / s);
                }
                let out_new = normalize(&cand.mul_vec(&vec![1.0; width(gap)]));
                residual = l1(&out_new, out_prev.as_ref().unwrap());
                out_prev = Some(out_new);
                p = cand;
                jump = jump.saturating_add(step);
                if residual <= opts.tol {
                    converged = true;
                    break;
                }
                power = power.mul(&power);
                work += 1;
                step = step.saturating_mul(2);
            }
            source_depth = gap as u64 + jump;
            break;
        }
    }

    let values = out_prev.unwrap_or_else(|| vec![1.0; width(base_level)]);
    Ok(InverseLimitApproximant {
        base_level,
        values,
        source_depth,
        residual,
        converged,
        flavor: ApproximantFlavor::GaugeSystem { beta },
        work,
    })
}

/// A coherent family for the minimizer flow: seed pushed from `depth` down to
/// the root through the stochastic-limit matrices.
pub fn limit_flow_family(
    spec: &DiagramSpec,
    depth: usize,
    seed: &Seed,
    mode: TieMode,
) -> Result<Vec<SimplexVector>, StatsError> {
    spec.check_depth(depth)?;
    let mut family = vec![SimplexVector {
        level: depth,
        values: seed.instantiate(spec.level_size(depth)).ok_or_else(|| {
            StatsError::Diagram(crate::error::DiagramError::Schema(
                "seed does not fit the deep level".into(),
            ))
        })?,
    }];
    for gap in (1..=depth).rev() {
        let m = stats::stochastic_limit_matrix(spec, gap, mode)?.mat;
        let prev = family.last().unwrap();
        let values = m.mul_vec(&prev.values);
        family.push(SimplexVector {
            level: gap - 1,
            values,
        });
    }
    family.reverse();
    Ok(family)
}

#[derive(Clone, Debug)]
pub struct TransportReport {
    pub beta: f64,
    /// (level, l1 distance of the transported value to the target family).
    pub distances: Vec<(usize, f64)>,
    pub max_distance: f64,
    pub all_converged: bool,
}

/// For each beta, transport the target minimizer-flow family through the
/// beta-stochastic flow and measure how closely it can be approached.
pub fn beta_infinity_transport(
    spec: &DiagramSpec,
    target: &[SimplexVector],
    betas: &[f64],
    opts: FlowOptions,
) -> Result<Vec<TransportReport>, StatsError> {
    assert!(!target.is_empty(), "empty target family");
    let deepest = target.last().unwrap();
    let mut reports = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut distances = Vec::new();
        let mut all_converged = true;
        for t in &target[..target.len() - 1] {
            let depth = deepest.level - t.level;
            let approx = kms_vertex_distribution(
                spec,
                beta,
                t.level,
                depth,
                &Seed::Explicit(deepest.values.clone()),
                opts,
            )?;
            all_converged &= approx.converged;
            distances.push((t.level, t.l1_distance(&approx.values)));
        }
        let max_distance = distances.iter().map(|d| d.1).fold(0.0, f64::max);
        reports.push(TransportReport {
            beta,
            distances,
            max_distance,
            all_converged,
        });
    }
    Ok(reports)
}

/// Constant K_N of the comparison bound between two systems that agree
/// entrywise within epsilon from gap N on: computed from the finitely many
/// gaps below N.
pub fn comparison_constant(system_a: &[Mat], system_b: &[Mat], n_start: usize) -> f64 {
    let mut prod_a = Mat::identity(1);
    let mut prod_b = Mat::identity(1);
    for g in 0..n_start.saturating_sub(1) {
        prod_a = prod_a.mul(&system_a[g]);
        prod_b = prod_b.mul(&system_b[g]);
    }
    let mut c: f64 = f64::INFINITY;
    for w in 0..prod_a.cols {
        let a = prod_a[(0, w)];
        let b = prod_b[(0, w)];
        if a > 0.0 {
            c = c.min(b / a);
        }
    }
    if !c.is_finite() || c <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 / c) * 2f64.powi(1 - n_start as i32)
}

#[derive(Clone, Debug)]
pub struct TransportedFamily {
    pub base_level: usize,
    pub depth: usize,
    /// Transported values per level, from base_level - 1 up to
    /// base_level + depth - 1.
    pub values: Vec<(usize, Vec<f64>)>,
    pub k_n: f64,
    /// Euclidean-norm bound on the distance to the true limit value, per the
    /// Cauchy estimate of the comparison argument.
    pub tail_bound: f64,
    /// Whether the growth/closeness hypotheses were verified for the given
    /// epsilon budget; `None` when no budget was supplied. The transported
    /// values are returned either way, but the tail bound is only meaningful
    /// under an accepted hypothesis.
    pub hypothesis_accepted: Option<bool>,
}

/// Apply partial products of the target system to a family living in the
/// comparison system: values at level l use
/// A^{(l+1)} ... A^{(base+depth)} phi^{base+depth}.
pub fn perturbation_transport(
    target_system: &[Mat],
    comparison_system: &[Mat],
    phi: &[(usize, Vec<f64>)],
    base_level: usize,
    depth: usize,
    n_start: usize,
) -> Result<TransportedFamily, crate::error::ConstructError> {
    perturbation_transport_with_budget(
        target_system,
        comparison_system,
        phi,
        base_level,
        depth,
        n_start,
        None,
    )
}

/// As `perturbation_transport`, verifying the hypotheses against an explicit
/// epsilon budget and flagging the result.
pub fn perturbation_transport_with_budget(
    target_system: &[Mat],
    comparison_system: &[Mat],
    phi: &[(usize, Vec<f64>)],
    base_level: usize,
    depth: usize,
    n_start: usize,
    epsilons: Option<&[f64]>,
) -> Result<TransportedFamily, crate::error::ConstructError> {
    let deep = base_level + depth;
    let phi_deep = phi
        .iter()
        .find(|(l, _)| *l == deep)
        .ok_or(crate::error::ConstructError::SystemMismatch { gap: deep })?;
    let phi0 = phi
        .iter()
        .find(|(l, _)| *l == 0)
        .map(|(_, v)| v.iter().sum::<f64>())
        .unwrap_or(1.0);

    let mut values: Vec<(usize, Vec<f64>)> = Vec::new();
    // walk upward: v_l = A^{(l+1)} v_{l+1}
    let mut current = phi_deep.1.clone();
    for level in (base_level.saturating_sub(1)..deep).rev() {
        let gap = level + 1;
        let m = target_system
            .get(gap - 1)
            .ok_or(crate::error::ConstructError::SystemMismatch { gap })?;
        if m.cols != current.len() {
            return Err(crate::error::ConstructError::SystemMismatch { gap });
        }
        current = m.mul_vec(&current);
        values.push((level, current.clone()));
    }
    values.reverse();

    let k_n = comparison_constant(target_system, comparison_system, n_start);
    let tail_bound = k_n * phi0 * 2f64.powi(-(deep as i32));
    let hypothesis_accepted = epsilons.map(|eps| {
        verify_perturbation_hypothesis(
            target_system,
            eps,
            comparison_system,
            n_start.max(1)..=target_system.len(),
        )
        .accepted
    });
    Ok(TransportedFamily {
        base_level,
        depth,
        values,
        k_n,
        tail_bound,
        hypothesis_accepted,
    })
}

#[derive(Clone, Debug)]
pub struct GapCheck {
    pub gap: usize,
    pub epsilon: f64,
    pub growth_ok: bool,
    pub closeness_ok: bool,
    pub growth_lhs: f64,
    pub growth_rhs: f64,
}

#[derive(Clone, Debug)]
pub struct HypothesisReport {
    pub accepted: bool,
    pub first_failure: Option<usize>,
    pub gaps: Vec<GapCheck>,
}

/// Check, gap by gap over a window, the two hypotheses of the perturbation
/// comparison: the growth condition
/// eps_j sqrt(w_j) (min_w prod_{v0,w})^{-1} prod_{k<=j} (2 ||A^(k)|| + 1) <= 4^{-j}
/// with Euclidean operator norms, and the entrywise closeness
/// |A^(j) - B^(j)| <= eps_j A^(j).
pub fn verify_perturbation_hypothesis(
    system_a: &[Mat],
    epsilons: &[f64],
    system_b: &[Mat],
    window: std::ops::RangeInclusive<usize>,
) -> HypothesisReport {
    let mut gaps = Vec::new();
    let mut first_failure = None;
    let mut prod = Mat::identity(1);
    let mut norm_factor = 1.0f64;
    for gap in 1..=*window.end() {
        if gap > system_a.len() || gap > system_b.len() || gap > epsilons.len() {
            break;
        }
        let a = &system_a[gap - 1];
        let b = &system_b[gap - 1];
        let eps = epsilons[gap - 1];
        prod = prod.mul(a);
        norm_factor *= 2.0 * a.l2_op_norm() + 1.0;
        if gap < *window.start() {
            continue;
        }
        let min_entry = (0..prod.cols)
            .map(|w| prod[(0, w)])
            .fold(f64::INFINITY, f64::min);
        let growth_lhs = eps * (a.cols as f64).sqrt() * norm_factor / min_entry;
        let growth_rhs = 4f64.powi(-(gap as i32));
        let growth_ok = min_entry > 0.0 && growth_lhs <= growth_rhs;

        let mut closeness_ok = (a.rows, a.cols) == (b.rows, b.cols);
        if closeness_ok {
            'outer: for v in 0..a.rows {
                for w in 0..a.cols {
                    if (a[(v, w)] - b[(v, w)]).abs() > eps * a[(v, w)] + 1e-300 {
                        closeness_ok = false;
                        break 'outer;
                    }
                }
            }
        }
        if !(growth_ok && closeness_ok) && first_failure.is_none() {
            first_failure = Some(gap);
        }
        gaps.push(GapCheck {
            gap,
            epsilon: eps,
            growth_ok,
            closeness_ok,
            growth_lhs,
            growth_rhs,
        });
    }
    HypothesisReport {
        accepted: first_failure.is_none() && !gaps.is_empty(),
        first_failure,
        gaps,
    }
}

/// Largest epsilon sequence accepted by the growth condition for a system,
/// rounded down to powers of two.
pub fn admissible_epsilons(system_a: &[Mat], up_to_gap: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(up_to_gap);
    let mut prod = Mat::identity(1);
    let mut norm_factor = 1.0f64;
    for gap in 1..=up_to_gap.min(system_a.len()) {
        let a = &system_a[gap - 1];
        prod = prod.mul(a);
        norm_factor *= 2.0 * a.l2_op_norm() + 1.0;
        let min_entry = (0..prod.cols)
            .map(|w| prod[(0, w)])
            .fold(f64::INFINITY, f64::min);
        let bound = 4f64.powi(-(gap as i32)) * min_entry / ((a.cols as f64).sqrt() * norm_factor);
        let eps = pow2_below(bound).min(0.25);
        out.push(eps);
    }
    out
}

/// Largest power of two strictly below x (0 when x <= 0).
pub fn pow2_below(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return 0.0;
    }
    let e = x.log2().floor();
    let p = 2f64.powf(e);
    if p >= x {
        p / 2.0
    } else {
        p
    }
}

/// CSV rows (beta, level, vertex, value, residual).
pub fn flow_csv(
    spec: &DiagramSpec,
    rows: &[(f64, InverseLimitApproximant)],
) -> String {
    use crate::util::fmt_g17;
    use std::fmt::Write as _;
    let mut out = String::from("beta,level,vertex,value,residual\n");
    for (beta, a) in rows {
        let names = spec.level_names(a.base_level);
        for (v, x) in a.values.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_g17(*beta),
                a.base_level,
                names[v],
                fmt_g17(*x),
                fmt_g17(a.residual)
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn two_column_flow_converges_to_barycenter() {
        let spec = fixtures::br2();
        for &beta in &[-2.0, -1.0, 0.5, 1.0, 2.0] {
            for seed in [Seed::Uniform, Seed::Extreme(0), Seed::Extreme(1)] {
                let a = kms_vertex_distribution(
                    &spec,
                    beta,
                    1,
                    4,
                    &seed,
                    FlowOptions::default(),
                )
                .unwrap();
                assert!(a.converged, "beta {beta}: {a:?}");
                assert!(a.residual < 1e-9);
                assert!((a.values[0] - 0.5).abs() < 1e-8, "beta {beta}: {a:?}");
                assert!((a.values[1] - 0.5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn multi_seed_agreement_on_two_columns() {
        let spec = fixtures::br2();
        let report =
            multi_seed_kms_distribution(&spec, 1.0, 1, 4, 5, FlowOptions::default()).unwrap();
        assert!(report.distributions.len() >= 5);
        assert!(report.agree(1e-8), "{report:?}");
    }

    #[test]
    fn chain_flow_is_trivial() {
        let spec = fixtures::chain(&[0.0, 0.0, 0.0, 0.0]);
        let a = kms_vertex_distribution(&spec, 1.0, 1, 3, &Seed::Uniform, FlowOptions::default())
            .unwrap();
        assert_eq!(a.values, vec![1.0]);
    }

    #[test]
    fn flow_output_stays_on_simplex() {
        let spec = fixtures::random_diagram(13, 3, 6, (-2.0, 2.0));
        for &beta in &[-1.5, 0.0, 2.0] {
            let a = kms_vertex_distribution(
                &spec,
                beta,
                1,
                5,
                &Seed::Extreme(0),
                FlowOptions::default(),
            )
            .unwrap();
            let sum: f64 = a.values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(a.values.iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn stochastic_application_is_weak_contraction() {
        let spec = fixtures::random_diagram(29, 3, 6, (-2.0, 2.0));
        for gap in (2..=6).rev() {
            let m = crate::stats::stochastic_matrix(&spec, gap, 1.2).unwrap().mat;
            let wa = spec.level_size(gap);
            let mut rng = SplitMix64::new(gap as u64);
            for _ in 0..5 {
                let mut x: Vec<f64> = (0..wa).map(|_| rng.uniform()).collect();
                let mut y: Vec<f64> = (0..wa).map(|_| rng.uniform()).collect();
                let sx: f64 = x.iter().sum();
                let sy: f64 = y.iter().sum();
                x.iter_mut().for_each(|v| *v /= sx);
                y.iter_mut().for_each(|v| *v /= sy);
                let dx = l1(&m.mul_vec(&x), &m.mul_vec(&y));
                let d0 = l1(&x, &y);
                assert!(dx <= d0 + 1e-12);
            }
        }
    }

    #[test]
    fn gauge_limit_vector_on_two_columns() {
        let spec = fixtures::br2();
        let a = gauge_limit_vector(&spec, 1.0, 1, 60, FlowOptions::default()).unwrap();
        assert!(a.converged);
        assert!(a.residual < 1e-9);
        assert!((a.values[0] - 0.5).abs() < 1e-9);
        assert!((a.values[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gauge_and_stochastic_flows_are_partition_weighted_renormalizations() {
        // t_v proportional to psi_v Z_v, with matching seeds: the flow seeded
        // by the partition weights of the deep level corresponds to the gauge
        // vector seeded by ones
        let spec = fixtures::random_diagram(41, 3, 5, (-1.0, 1.0));
        let beta = 0.9;
        let level = 2;
        let depth = 3;
        let stats = crate::stats::compute_level_stats(&spec, level + depth, &[beta]).unwrap();
        let deep_logz = &stats[level + depth].log_z[0];
        let lse = crate::util::logsumexp(deep_logz);
        let seed: Vec<f64> = deep_logz.iter().map(|lz| (lz - lse).exp()).collect();

        let gauge = gauge_limit_vector(&spec, beta, level, depth, FlowOptions::default()).unwrap();
        let flow = kms_vertex_distribution(
            &spec,
            beta,
            level,
            depth,
            &Seed::Explicit(seed),
            FlowOptions::default(),
        )
        .unwrap();
        let weighted: Vec<f64> = gauge
            .values
            .iter()
            .zip(&stats[level].log_z[0])
            .map(|(psi, lz)| psi * lz.exp())
            .collect();
        let sum: f64 = weighted.iter().sum();
        for (w, t) in weighted.iter().zip(&flow.values) {
            assert!((w / sum - t).abs() < 1e-9, "{gauge:?} vs {flow:?}");
        }
    }

    #[test]
    fn scaling_the_system_rescales_gauge_and_fixes_stochastic() {
        // check on raw matrices: scaled systems produce the same normalized
        // outputs up to the explicit rescaling
        let spec = fixtures::br2();
        let beta = 0.7;
        let m = crate::stats::gauge_matrix(&spec, 3, beta).unwrap().mat;
        let scaled = m.scale(3.5);
        let x = vec![0.6, 0.4];
        let y1 = m.mul_vec(&x);
        let y2 = scaled.mul_vec(&x);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((3.5 * a - b).abs() < 1e-12);
        }
        // stochastic normalization divides the scaling out
        let s1: f64 = y1.iter().sum();
        let s2: f64 = y2.iter().sum();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a / s1 - b / s2).abs() < 1e-14);
        }
    }

    #[test]
    fn deep_beta_flow_reaches_barycenter_through_acceleration() {
        let spec = fixtures::br2();
        let a = kms_vertex_distribution(
            &spec,
            16.0,
            1,
            4,
            &Seed::Extreme(0),
            FlowOptions::default(),
        )
        .unwrap();
        assert!(a.converged, "{a:?}");
        assert!((a.values[0] - 0.5).abs() < 1e-7, "{a:?}");
        assert!(a.source_depth > 1_000, "acceleration unused: {a:?}");
    }

    #[test]
    fn limit_family_and_transport_on_ramp() {
        let spec = fixtures::ramp();
        let family = limit_flow_family(&spec, 10, &Seed::Explicit(vec![0.7, 0.3]), TieMode::Float)
            .unwrap();
        // identity limit matrices beyond gap 1 keep the family constant
        for t in &family[1..] {
            assert!((t.values[0] - 0.7).abs() < 1e-14);
        }
        let reports =
            beta_infinity_transport(&spec, &family[1..], &[2.0, 4.0, 8.0], FlowOptions::default())
                .unwrap();
        let mut prev = f64::INFINITY;
        for r in &reports {
            let tail: f64 = (2..=10).map(|j| 2.0 * (-r.beta * j as f64).exp()).sum();
            assert!(r.max_distance <= 2.0 * tail + 1e-9, "{r:?}");
            assert!(r.max_distance < prev);
            prev = r.max_distance;
        }
    }

    #[test]
    fn flat_transport_distance_is_zero() {
        let spec = fixtures::complete_flat(2);
        let family =
            limit_flow_family(&spec, 6, &Seed::Uniform, TieMode::Float).unwrap();
        let reports =
            beta_infinity_transport(&spec, &family[1..], &[1.0, 3.0], FlowOptions::default())
                .unwrap();
        for r in &reports {
            assert!(r.max_distance < 1e-12);
        }
    }

    #[test]
    fn extreme_targets_on_two_columns_stay_far() {
        let spec = fixtures::br2();
        let family = limit_flow_family(&spec, 8, &Seed::Extreme(0), TieMode::Float).unwrap();
        let betas: Vec<f64> = (1..=16).map(|b| b as f64).collect();
        let reports =
            beta_infinity_transport(&spec, &family[1..], &betas, FlowOptions::default()).unwrap();
        for r in &reports {
            assert!(
                r.max_distance >= 0.45,
                "beta {}: distance {}",
                r.beta,
                r.max_distance
            );
        }
    }

    #[test]
    fn identical_systems_transport_is_identity() {
        let spec = fixtures::br2();
        let beta = 1.0;
        let system: Vec<Mat> = (1..=8)
            .map(|g| crate::stats::gauge_matrix(&spec, g, beta).unwrap().mat)
            .collect();
        // a genuine limit family: deep products applied to ones
        let mut family: Vec<(usize, Vec<f64>)> = Vec::new();
        let deep = 8usize;
        let mut v = vec![1.0; spec.level_size(deep)];
        family.push((deep, v.clone()));
        for gap in (1..=deep).rev() {
            v = system[gap - 1].mul_vec(&v);
            family.push((gap - 1, v.clone()));
        }
        family.reverse();
        let t = perturbation_transport(&system, &system, &family, 1, 7, 1).unwrap();
        for (level, vals) in &t.values {
            let expect = &family.iter().find(|(l, _)| l == level).unwrap().1;
            for (a, b) in vals.iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(t.k_n.is_finite());
    }

    #[test]
    fn hypothesis_check_accepts_identical_and_rejects_crafted() {
        let spec = fixtures::br2();
        let system: Vec<Mat> = (1..=6)
            .map(|g| crate::stats::gauge_matrix(&spec, g, 0.5).unwrap().mat)
            .collect();
        let eps = admissible_epsilons(&system, 6);
        assert!(eps.iter().all(|&e| e > 0.0));
        let report = verify_perturbation_hypothesis(&system, &eps, &system, 1..=6);
        assert!(report.accepted, "{report:?}");

        // violate the growth condition at gap 3
        let mut bad_eps = eps.clone();
        bad_eps[2] = 0.4;
        let report = verify_perturbation_hypothesis(&system, &bad_eps, &system, 1..=6);
        assert!(!report.accepted);
        assert_eq!(report.first_failure, Some(3));
    }

    #[test]
    fn perturbed_system_within_epsilon_is_accepted() {
        let spec = fixtures::br2();
        let system: Vec<Mat> = (1..=6)
            .map(|g| crate::stats::gauge_matrix(&spec, g, 0.5).unwrap().mat)
            .collect();
        let eps = admissible_epsilons(&system, 6);
        let mut rng = SplitMix64::new(77);
        let perturbed: Vec<Mat> = system
            .iter()
            .zip(&eps)
            .map(|(m, &e)| {
                let mut out = m.clone();
                for i in 0..m.rows {
                    for j in 0..m.cols {
                        out[(i, j)] *= 1.0 + e * (2.0 * rng.uniform() - 1.0) * 0.9;
                    }
                }
                out
            })
            .collect();
        let report = verify_perturbation_hypothesis(&system, &eps, &perturbed, 1..=6);
        assert!(report.accepted, "{report:?}");
    }

    #[test]
    fn pow2_below_is_a_power_of_two_below() {
        for &x in &[0.3, 1.0, 1.5, 0.0001, 123.0] {
            let p = pow2_below(x);
            assert!(p < x);
            assert_eq!(p.log2().fract(), 0.0);
            assert!(2.0 * p >= x || p == 0.0);
        }
    }
}
