//! Canonical small diagrams used across the test suites and the docs.

use crate::diagram::{ArrowBundle, DiagramSpec, PeriodicTail, TailArrow};
use crate::potential::Potential;
use crate::util::SplitMix64;
use num_bigint::BigUint;

fn tail_arrow(from: usize, to: usize, pot: f64, step: f64) -> TailArrow {
    TailArrow {
        from,
        to,
        potential: Potential::from_f64(pot),
        step: Potential::from_f64(step),
        count: BigUint::from(1u32),
    }
}

/// One vertex per level, one arrow per gap with the given potentials.
pub fn chain(potentials: &[f64]) -> DiagramSpec {
    let levels = (0..=potentials.len())
        .map(|j| vec![format!("c{j}")])
        .collect();
    let gaps = potentials
        .iter()
        .map(|&p| vec![ArrowBundle::new(0, 0, Potential::from_f64(p), 1)])
        .collect();
    DiagramSpec::from_parts(levels, gaps, None).expect("chain is valid")
}

/// Stationary two-column diagram: vertical arrows within each column, cross
/// arrows between them, with the given potentials. The root emits one arrow
/// into each column.
pub fn two_column(
    root_left: f64,
    root_right: f64,
    left_vertical: f64,
    right_vertical: f64,
    cross: f64,
) -> DiagramSpec {
    let levels = vec![vec!["v0".to_string()], vec!["L".to_string(), "R".to_string()]];
    let gap1 = vec![
        ArrowBundle::new(0, 0, Potential::from_f64(root_left), 1),
        ArrowBundle::new(0, 1, Potential::from_f64(root_right), 1),
    ];
    let tail = PeriodicTail {
        from_level: 1,
        arrows: vec![
            tail_arrow(0, 0, left_vertical, 0.0),
            tail_arrow(0, 1, cross, 0.0),
            tail_arrow(1, 0, cross, 0.0),
            tail_arrow(1, 1, right_vertical, 0.0),
        ],
    };
    DiagramSpec::from_parts(levels, vec![gap1], Some(tail)).expect("two-column is valid")
}

/// Two columns; the left column costs 0, everything else costs 1. A single
/// geodesic column survives.
pub fn br1() -> DiagramSpec {
    two_column(0.0, 1.0, 0.0, 1.0, 1.0)
}

/// Two columns; both verticals cost 0, crossing costs 1. Two geodesic columns
/// survive.
pub fn br2() -> DiagramSpec {
    two_column(0.0, 0.0, 0.0, 0.0, 1.0)
}

/// Two columns with free verticals and cross arrows whose cost grows linearly
/// with the gap index: crossing at gap j costs j ( j >= 2 ).
pub fn ramp() -> DiagramSpec {
    let levels = vec![vec!["v0".to_string()], vec!["L".to_string(), "R".to_string()]];
    let gap1 = vec![
        ArrowBundle::new(0, 0, Potential::zero(), 1),
        ArrowBundle::new(0, 1, Potential::zero(), 1),
    ];
    let tail = PeriodicTail {
        from_level: 1,
        arrows: vec![
            tail_arrow(0, 0, 0.0, 0.0),
            tail_arrow(0, 1, 2.0, 1.0),
            tail_arrow(1, 0, 2.0, 1.0),
            tail_arrow(1, 1, 0.0, 0.0),
        ],
    };
    DiagramSpec::from_parts(levels, vec![gap1], Some(tail)).expect("ramp is valid")
}

/// `k` disjoint columns under a common root: one vertex per column per level,
/// vertical arrows only, everything at potential 0.
pub fn columns(k: usize) -> DiagramSpec {
    let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
    let levels = vec![vec!["v0".to_string()], names];
    let gap1 = (0..k)
        .map(|i| ArrowBundle::new(0, i, Potential::zero(), 1))
        .collect();
    let tail = PeriodicTail {
        from_level: 1,
        arrows: (0..k).map(|i| tail_arrow(i, i, 0.0, 0.0)).collect(),
    };
    DiagramSpec::from_parts(levels, vec![gap1], Some(tail)).expect("columns are valid")
}

/// Stationary diagram with `width` vertices per level and every arrow present
/// at potential 0.
pub fn complete_flat(width: usize) -> DiagramSpec {
    let names: Vec<String> = (0..width).map(|i| format!("w{i}")).collect();
    let levels = vec![vec!["v0".to_string()], names];
    let gap1 = (0..width)
        .map(|i| ArrowBundle::new(0, i, Potential::zero(), 1))
        .collect();
    let mut arrows = Vec::new();
    for i in 0..width {
        for j in 0..width {
            arrows.push(tail_arrow(i, j, 0.0, 0.0));
        }
    }
    let tail = PeriodicTail {
        from_level: 1,
        arrows,
    };
    DiagramSpec::from_parts(levels, vec![gap1], Some(tail)).expect("flat diagram is valid")
}

/// Seeded random diagram for oracle suites: at most `max_width` vertices per
/// level, the given depth, potentials uniform in `pot_range`. Occasionally
/// emits parallel arrows so bundle multiplicities are exercised.
pub fn random_diagram(
    seed: u64,
    max_width: usize,
    depth: usize,
    pot_range: (f64, f64),
) -> DiagramSpec {
    let mut rng = SplitMix64::new(seed);
    let mut levels = vec![vec!["v0".to_string()]];
    for j in 1..=depth {
        let w = 1 + rng.below(max_width);
        levels.push((0..w).map(|i| format!("l{j}v{i}")).collect());
    }
    let mut gaps = Vec::new();
    for g in 1..=depth {
        let lo = levels[g - 1].len();
        let hi = levels[g].len();
        let mut arrows: Vec<ArrowBundle> = Vec::new();
        let pot = |rng: &mut SplitMix64| Potential::from_f64(rng.range_f64(pot_range.0, pot_range.1));
        // cover every range vertex, then every source vertex
        for t in 0..hi {
            let s = rng.below(lo);
            let p = pot(&mut rng);
            arrows.push(ArrowBundle::new(s, t, p, 1));
        }
        for s in 0..lo {
            if !arrows.iter().any(|a| a.from == s) {
                let t = rng.below(hi);
                let p = pot(&mut rng);
                arrows.push(ArrowBundle::new(s, t, p, 1));
            }
        }
        let extras = rng.below(3);
        for _ in 0..extras {
            let s = rng.below(lo);
            let t = rng.below(hi);
            let c = if rng.below(4) == 0 { 2 } else { 1 };
            let p = pot(&mut rng);
            arrows.push(ArrowBundle::new(s, t, p, c));
        }
        gaps.push(arrows);
    }
    DiagramSpec::from_parts(levels, gaps, None).expect("random diagram is valid")
}
