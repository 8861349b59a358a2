//! Leveled multigraphs with arrow potentials.
//!
//! A diagram is presented either as a finite prefix (levels `0..=N` with all
//! arrows explicit) or with an eventually periodic tail: a repeating block of
//! vertices and arrows appended after the explicit prefix. Tail arrows may
//! carry an arithmetic step so that potentials growing linearly with the level
//! index stay presentable with an infinite horizon.
//!
//! Parallel arrows are first class: a bundle groups parallel arrows with the
//! same potential, and an individual arrow is addressed as (gap, bundle,
//! copy).

use crate::error::DiagramError;
use crate::matrix::Mat;
use crate::potential::Potential;
use crate::util::{big_ln, big_ratio_f64};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// A group of parallel arrows sharing source, range and potential.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrowBundle {
    /// Index of the source vertex in the level below the gap.
    pub from: usize,
    /// Index of the range vertex in the level above the gap.
    pub to: usize,
    pub potential: Potential,
    /// Number of parallel copies, each a distinct arrow.
    pub count: BigUint,
}

impl ArrowBundle {
    pub fn new(from: usize, to: usize, potential: Potential, count: u64) -> Self {
        ArrowBundle {
            from,
            to,
            potential,
            count: BigUint::from(count),
        }
    }

    pub fn ln_count(&self) -> f64 {
        big_ln(&self.count)
    }

    pub fn count_u64(&self) -> Option<u64> {
        self.count.to_u64()
    }
}

/// Repeating-block arrow; `step` is added to the potential once per extra
/// repetition of the block.
#[derive(Clone, Debug, PartialEq)]
pub struct TailArrow {
    pub from: usize,
    pub to: usize,
    pub potential: Potential,
    pub step: Potential,
    pub count: BigUint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicTail {
    /// The level at which the repeating block starts; equals the last explicit
    /// level, whose vertex list must coincide with the block's.
    pub from_level: usize,
    pub arrows: Vec<TailArrow>,
}

/// A validated diagram. Immutable after construction; all operations are pure.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagramSpec {
    levels: Vec<Vec<String>>,
    /// gaps[g-1] holds the arrows from level g-1 to level g.
    gaps: Vec<Vec<ArrowBundle>>,
    tail: Option<PeriodicTail>,
}

impl DiagramSpec {
    pub fn from_parts(
        levels: Vec<Vec<String>>,
        gaps: Vec<Vec<ArrowBundle>>,
        tail: Option<PeriodicTail>,
    ) -> Result<Self, DiagramError> {
        let spec = DiagramSpec { levels, gaps, tail };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), DiagramError> {
        if self.levels.is_empty() {
            return Err(DiagramError::Schema("no levels".into()));
        }
        if self.levels[0].len() != 1 {
            return Err(DiagramError::BadRoot(self.levels[0].len()));
        }
        for (j, names) in self.levels.iter().enumerate() {
            if names.is_empty() {
                return Err(DiagramError::Schema(format!("level {j} is empty")));
            }
            let mut seen = BTreeSet::new();
            for n in names {
                if !seen.insert(n) {
                    return Err(DiagramError::Schema(format!(
                        "duplicate vertex `{n}` at level {j}"
                    )));
                }
            }
        }
        if self.gaps.len() + 1 != self.levels.len() {
            return Err(DiagramError::Schema(format!(
                "{} levels require {} gaps, found {}",
                self.levels.len(),
                self.levels.len() - 1,
                self.gaps.len()
            )));
        }
        for (gi, bundles) in self.gaps.iter().enumerate() {
            let gap = gi + 1;
            let lo = self.levels[gap - 1].len();
            let hi = self.levels[gap].len();
            for b in bundles {
                if b.from >= lo || b.to >= hi {
                    return Err(DiagramError::LevelMismatch {
                        gap,
                        from: format!("#{}", b.from),
                        to: format!("#{}", b.to),
                        detail: "vertex index out of range".into(),
                    });
                }
                if b.count.is_zero() {
                    return Err(DiagramError::Schema(format!(
                        "zero-count arrow bundle at gap {gap}"
                    )));
                }
            }
        }
        // no sinks below the horizon, no unreachable vertices above the root
        let last = self.levels.len() - 1;
        for j in 0..last {
            for (vi, name) in self.levels[j].iter().enumerate() {
                if !self.gaps[j].iter().any(|b| b.from == vi) {
                    return Err(DiagramError::Sink {
                        level: j,
                        vertex: name.clone(),
                    });
                }
            }
        }
        for j in 1..=last {
            for (vi, name) in self.levels[j].iter().enumerate() {
                if !self.gaps[j - 1].iter().any(|b| b.to == vi) {
                    return Err(DiagramError::Unreachable {
                        level: j,
                        vertex: name.clone(),
                    });
                }
            }
        }
        if let Some(tail) = &self.tail {
            if tail.from_level != last {
                return Err(DiagramError::Schema(format!(
                    "repeat.from_level is {}, must equal the last explicit level {last}",
                    tail.from_level
                )));
            }
            let block = &self.levels[last];
            let n = block.len();
            for a in &tail.arrows {
                if a.from >= n || a.to >= n {
                    return Err(DiagramError::Schema(
                        "repeat arrow references a vertex outside the block".into(),
                    ));
                }
                if a.count.is_zero() {
                    return Err(DiagramError::Schema("zero-count repeat arrow".into()));
                }
            }
            for (vi, name) in block.iter().enumerate() {
                if !tail.arrows.iter().any(|a| a.from == vi) {
                    return Err(DiagramError::Sink {
                        level: last,
                        vertex: name.clone(),
                    });
                }
                if !tail.arrows.iter().any(|a| a.to == vi) {
                    return Err(DiagramError::Unreachable {
                        level: last + 1,
                        vertex: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn root_name(&self) -> &str {
        &self.levels[0][0]
    }

    pub fn is_periodic(&self) -> bool {
        self.tail.is_some()
    }

    pub fn tail(&self) -> Option<&PeriodicTail> {
        self.tail.as_ref()
    }

    /// Deepest level available, or `None` when the presentation is unbounded.
    pub fn available_depth(&self) -> Option<usize> {
        if self.tail.is_some() {
            None
        } else {
            Some(self.levels.len() - 1)
        }
    }

    pub fn prefix_depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn check_depth(&self, depth: usize) -> Result<(), DiagramError> {
        match self.available_depth() {
            Some(avail) if depth > avail => Err(DiagramError::DepthExceeded {
                requested: depth,
                available: avail,
            }),
            _ => Ok(()),
        }
    }

    /// Vertex names at a level (tail levels repeat the block).
    pub fn level_names(&self, level: usize) -> &[String] {
        if level < self.levels.len() {
            &self.levels[level]
        } else {
            assert!(self.tail.is_some(), "level beyond finite prefix");
            &self.levels[self.levels.len() - 1]
        }
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.level_names(level).len()
    }

    pub fn vertex_index(&self, level: usize, name: &str) -> Option<usize> {
        self.level_names(level).iter().position(|n| n == name)
    }

    /// Arrow bundles at a gap, materializing stepped tail potentials.
    pub fn bundles_at(&self, gap: usize) -> Result<Vec<ArrowBundle>, DiagramError> {
        assert!(gap >= 1, "gaps are 1-based");
        if gap <= self.gaps.len() {
            return Ok(self.gaps[gap - 1].clone());
        }
        let Some(tail) = &self.tail else {
            return Err(DiagramError::DepthExceeded {
                requested: gap,
                available: self.gaps.len(),
            });
        };
        let k = (gap - tail.from_level - 1) as u64;
        Ok(tail
            .arrows
            .iter()
            .map(|a| ArrowBundle {
                from: a.from,
                to: a.to,
                potential: a.potential.add_scaled(&a.step, k),
                count: a.count.clone(),
            })
            .collect())
    }

    /// Materialize the presentation as a finite prefix of the given depth.
    pub fn expand(&self, depth: usize) -> Result<DiagramSpec, DiagramError> {
        if depth == 0 {
            return Err(DiagramError::Schema("depth must be >= 1".into()));
        }
        self.check_depth(depth)?;
        if self.tail.is_none() {
            if depth == self.prefix_depth() {
                return Ok(self.clone());
            }
            return DiagramSpec::from_parts(
                self.levels[..=depth].to_vec(),
                self.gaps[..depth].to_vec(),
                None,
            );
        }
        let mut levels = self.levels.clone();
        let mut gaps = self.gaps.clone();
        let block = self.levels[self.levels.len() - 1].clone();
        while levels.len() <= depth {
            let gap = gaps.len() + 1;
            gaps.push(self.bundles_at(gap)?);
            levels.push(block.clone());
        }
        levels.truncate(depth + 1);
        gaps.truncate(depth);
        DiagramSpec::from_parts(levels, gaps, None)
    }

    /// Move the start of the periodic tail deeper, keeping the same diagram.
    pub fn with_prefix_extended(&self, to_level: usize) -> Result<DiagramSpec, DiagramError> {
        let Some(tail) = &self.tail else {
            return Ok(self.clone());
        };
        if to_level <= tail.from_level {
            return Ok(self.clone());
        }
        let shift = (to_level - tail.from_level) as u64;
        let mut levels = self.levels.clone();
        let mut gaps = self.gaps.clone();
        let block = self.levels[self.levels.len() - 1].clone();
        for gap in (tail.from_level + 1)..=to_level {
            gaps.push(self.bundles_at(gap)?);
            levels.push(block.clone());
        }
        let new_tail = PeriodicTail {
            from_level: to_level,
            arrows: tail
                .arrows
                .iter()
                .map(|a| TailArrow {
                    from: a.from,
                    to: a.to,
                    potential: a.potential.add_scaled(&a.step, shift),
                    step: a.step.clone(),
                    count: a.count.clone(),
                })
                .collect(),
        };
        DiagramSpec::from_parts(levels, gaps, Some(new_tail))
    }

    /// Multiplicity matrix at a gap: entry (v, w) counts the arrows w -> v.
    pub fn multiplicity_matrix(&self, gap: usize) -> Result<MultiplicityMatrix, DiagramError> {
        let bundles = self.bundles_at(gap)?;
        let rows = self.level_size(gap);
        let cols = self.level_size(gap - 1);
        let mut entries = vec![BigUint::zero(); rows * cols];
        for b in &bundles {
            entries[b.to * cols + b.from] += &b.count;
        }
        Ok(MultiplicityMatrix {
            gap,
            rows,
            cols,
            entries,
        })
    }

    pub fn multiplicity_matrices(
        &self,
        depth: usize,
    ) -> Result<Vec<MultiplicityMatrix>, DiagramError> {
        self.check_depth(depth)?;
        (1..=depth).map(|g| self.multiplicity_matrix(g)).collect()
    }

    /// Telescope to the cut levels `0 < k_1 < k_2 < ...`. Arrows of the result
    /// are the paths between consecutive cuts; potentials add along paths.
    pub fn telescope(&self, cuts: &[usize]) -> Result<DiagramSpec, DiagramError> {
        if cuts.is_empty() {
            return Err(DiagramError::BadCuts("no cut levels given".into()));
        }
        let mut prev = 0usize;
        for &c in cuts {
            if c <= prev {
                return Err(DiagramError::BadCuts(format!(
                    "cuts must be strictly increasing and positive, got {cuts:?}"
                )));
            }
            prev = c;
        }
        let deepest = *cuts.last().unwrap();
        self.check_depth(deepest)?;

        let mut new_levels = vec![self.levels[0].clone()];
        let mut new_gaps = Vec::new();
        let mut start = 0usize;
        for &cut in cuts {
            new_levels.push(self.level_names(cut).to_vec());
            new_gaps.push(self.collapse_gaps(start, cut)?);
            start = cut;
        }
        DiagramSpec::from_parts(new_levels, new_gaps, None)
    }

    /// Group the paths from `from_level` to `to_level` into arrow bundles,
    /// keyed by (source, range, exact potential).
    fn collapse_gaps(
        &self,
        from_level: usize,
        to_level: usize,
    ) -> Result<Vec<ArrowBundle>, DiagramError> {
        // acc: (source at from_level, current vertex, exact potential) -> count
        let mut acc: BTreeMap<(usize, usize, BigRational), BigUint> = BTreeMap::new();
        for v in 0..self.level_size(from_level) {
            acc.insert((v, v, BigRational::zero()), BigUint::one());
        }
        for gap in (from_level + 1)..=to_level {
            let bundles = self.bundles_at(gap)?;
            let mut next: BTreeMap<(usize, usize, BigRational), BigUint> = BTreeMap::new();
            for ((src, at, pot), cnt) in &acc {
                for b in bundles.iter().filter(|b| b.from == *at) {
                    let key = (*src, b.to, pot + b.potential.exact());
                    let add = cnt * &b.count;
                    *next.entry(key).or_insert_with(BigUint::zero) += add;
                }
            }
            acc = next;
        }
        Ok(acc
            .into_iter()
            .map(|((src, dst, pot), count)| ArrowBundle {
                from: src,
                to: dst,
                potential: Potential::from_rational(pot),
                count,
            })
            .collect())
    }

    /// Level-wise cartesian product; arrow pairs at the same gap, potentials
    /// added. Periodic tails survive when both factors have one.
    pub fn product(&self, other: &DiagramSpec) -> Result<DiagramSpec, DiagramError> {
        let (a, b) = match (self.tail.as_ref(), other.tail.as_ref()) {
            (Some(ta), Some(tb)) => {
                let align = ta.from_level.max(tb.from_level);
                (
                    self.with_prefix_extended(align)?,
                    other.with_prefix_extended(align)?,
                )
            }
            (Some(_), None) => (self.expand(other.prefix_depth())?, other.clone()),
            (None, Some(_)) => (self.clone(), other.expand(self.prefix_depth())?),
            (None, None) => {
                let d = self.prefix_depth().min(other.prefix_depth());
                (self.expand(d)?, other.expand(d)?)
            }
        };

        let depth = a.prefix_depth();
        let mut levels = Vec::with_capacity(depth + 1);
        for j in 0..=depth {
            let mut names = Vec::new();
            for x in &a.levels[j] {
                for y in &b.levels[j] {
                    names.push(format!("({x},{y})"));
                }
            }
            levels.push(names);
        }
        let width = |j: usize| b.levels[j].len();
        let mut gaps = Vec::with_capacity(depth);
        for g in 1..=depth {
            let mut bundles = Vec::new();
            for ba in &a.gaps[g - 1] {
                for bb in &b.gaps[g - 1] {
                    bundles.push(ArrowBundle {
                        from: ba.from * width(g - 1) + bb.from,
                        to: ba.to * width(g) + bb.to,
                        potential: ba.potential.add(&bb.potential),
                        count: &ba.count * &bb.count,
                    });
                }
            }
            gaps.push(bundles);
        }
        let tail = match (a.tail.as_ref(), b.tail.as_ref()) {
            (Some(ta), Some(tb)) => {
                debug_assert_eq!(ta.from_level, tb.from_level);
                let w = width(depth);
                let mut arrows = Vec::new();
                for x in &ta.arrows {
                    for y in &tb.arrows {
                        arrows.push(TailArrow {
                            from: x.from * w + y.from,
                            to: x.to * w + y.to,
                            potential: x.potential.add(&y.potential),
                            step: x.step.add(&y.step),
                            count: &x.count * &y.count,
                        });
                    }
                }
                Some(PeriodicTail {
                    from_level: ta.from_level,
                    arrows,
                })
            }
            _ => None,
        };
        DiagramSpec::from_parts(levels, gaps, tail)
    }

    /// Same diagram with every potential (and step) negated.
    pub fn negate_potential(&self) -> DiagramSpec {
        DiagramSpec {
            levels: self.levels.clone(),
            gaps: self
                .gaps
                .iter()
                .map(|bs| {
                    bs.iter()
                        .map(|b| ArrowBundle {
                            from: b.from,
                            to: b.to,
                            potential: b.potential.neg(),
                            count: b.count.clone(),
                        })
                        .collect()
                })
                .collect(),
            tail: self.tail.as_ref().map(|t| PeriodicTail {
                from_level: t.from_level,
                arrows: t
                    .arrows
                    .iter()
                    .map(|a| TailArrow {
                        from: a.from,
                        to: a.to,
                        potential: a.potential.neg(),
                        step: a.step.neg(),
                        count: a.count.clone(),
                    })
                    .collect(),
            }),
        }
    }

    /// Explicit paths from the root down to `level`, each arrow copy distinct.
    /// Paths are ordered lexicographically by (bundle, copy) per gap.
    pub fn enumerate_root_paths(
        &self,
        level: usize,
        cap: usize,
    ) -> Result<Vec<FinitePath>, DiagramError> {
        self.check_depth(level)?;
        let mut paths: Vec<FinitePath> = vec![FinitePath {
            start_level: 0,
            end_vertex: 0,
            steps: Vec::new(),
        }];
        for gap in 1..=level {
            let bundles = self.bundles_at(gap)?;
            let mut next = Vec::new();
            for p in &paths {
                for (bi, b) in bundles.iter().enumerate() {
                    if b.from != p.end_vertex {
                        continue;
                    }
                    let copies = b.count_u64().ok_or_else(|| DiagramError::CountOverflow {
                        gap,
                        detail: "bundle too large for explicit path enumeration".into(),
                    })?;
                    for c in 0..copies {
                        if next.len() >= cap {
                            return Err(DiagramError::Schema(format!(
                                "more than {cap} paths at level {level}; raise the cap or use the DP layer"
                            )));
                        }
                        let mut q = p.clone();
                        q.steps.push(PathStep { bundle: bi, copy: c });
                        q.end_vertex = b.to;
                        next.push(q);
                    }
                }
            }
            paths = next;
        }
        Ok(paths)
    }

    /// Total potential of a path, following bundle potentials per gap.
    pub fn path_potential(&self, path: &FinitePath) -> Result<Potential, DiagramError> {
        let mut pot = Potential::zero();
        for (i, step) in path.steps.iter().enumerate() {
            let gap = path.start_level + i + 1;
            let bundles = self.bundles_at(gap)?;
            pot = pot.add(&bundles[step.bundle].potential);
        }
        Ok(pot)
    }

    /// DOT rendering of a finite prefix. `highlight` marks the surviving
    /// vertices (per level) and arrow bundles (per gap) of a subdiagram.
    pub fn to_dot(
        &self,
        depth: usize,
        highlight: Option<&DotHighlight>,
    ) -> Result<String, DiagramError> {
        self.check_depth(depth)?;
        let mut out = String::new();
        writeln!(out, "digraph diagram {{").unwrap();
        writeln!(out, "  rankdir=TB;").unwrap();
        writeln!(out, "  node [shape=circle, fontsize=10];").unwrap();
        for j in 0..=depth {
            write!(out, "  {{ rank=same;").unwrap();
            for (vi, name) in self.level_names(j).iter().enumerate() {
                let emph = highlight.map(|h| h.vertex_on(j, vi)).unwrap_or(false);
                let style = if emph {
                    ", style=filled, fillcolor=lightblue"
                } else {
                    ""
                };
                write!(out, " v{j}_{vi} [label=\"{name}\"{style}];").unwrap();
            }
            writeln!(out, " }}").unwrap();
        }
        for gap in 1..=depth {
            for (bi, b) in self.bundles_at(gap)?.iter().enumerate() {
                let emph = highlight.map(|h| h.arrow_on(gap, bi)).unwrap_or(false);
                let color = if emph { ", color=red, penwidth=2.0" } else { "" };
                let mult = if b.count > BigUint::one() {
                    format!(" x{}", b.count)
                } else {
                    String::new()
                };
                writeln!(
                    out,
                    "  v{}_{} -> v{}_{} [label=\"{:?}{}\"{}];",
                    gap - 1,
                    b.from,
                    gap,
                    b.to,
                    b.potential,
                    mult,
                    color
                )
                .unwrap();
            }
        }
        writeln!(out, "}}").unwrap();
        Ok(out)
    }

    // ----- JSON format -----

    pub fn from_json(text: &str) -> Result<Self, DiagramError> {
        let file: DiagramFile = serde_json::from_str(text)
            .map_err(|e| DiagramError::Schema(format!("invalid JSON: {e}")))?;
        file.into_spec()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DiagramFile::from_spec(self)).expect("serialization")
    }
}

/// Highlight sets for DOT export, keyed by level / gap.
#[derive(Clone, Debug, Default)]
pub struct DotHighlight {
    pub vertices: BTreeMap<usize, BTreeSet<usize>>,
    pub arrows: BTreeMap<usize, BTreeSet<usize>>,
}

impl DotHighlight {
    fn vertex_on(&self, level: usize, v: usize) -> bool {
        self.vertices.get(&level).is_some_and(|s| s.contains(&v))
    }
    fn arrow_on(&self, gap: usize, b: usize) -> bool {
        self.arrows.get(&gap).is_some_and(|s| s.contains(&b))
    }
}

/// Integer multiplicity matrix over level_j x level_{j-1}.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplicityMatrix {
    pub gap: usize,
    pub rows: usize,
    pub cols: usize,
    entries: Vec<BigUint>,
}

impl MultiplicityMatrix {
    pub fn entry(&self, v: usize, w: usize) -> &BigUint {
        &self.entries[v * self.cols + w]
    }

    /// Matrix product, used when composing gaps under telescoping.
    pub fn mul(&self, other: &MultiplicityMatrix) -> MultiplicityMatrix {
        assert_eq!(self.cols, other.rows, "gap mismatch");
        let mut entries = vec![BigUint::zero(); self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entry(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let add = a * other.entry(k, j);
                    entries[i * other.cols + j] += add;
                }
            }
        }
        MultiplicityMatrix {
            gap: other.gap,
            rows: self.rows,
            cols: other.cols,
            entries,
        }
    }

    pub fn to_mat(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = big_ratio_f64(self.entry(i, j), &BigUint::one());
            }
        }
        m
    }

    pub fn column_sums(&self) -> Vec<BigUint> {
        (0..self.cols)
            .map(|w| (0..self.rows).fold(BigUint::zero(), |acc, v| acc + self.entry(v, w)))
            .collect()
    }
}

/// A finite path; arrows are addressed as (bundle index, copy index) per gap
/// starting at `start_level`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FinitePath {
    pub start_level: usize,
    pub end_vertex: usize,
    pub steps: Vec<PathStep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathStep {
    pub bundle: usize,
    pub copy: u64,
}

impl FinitePath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn end_level(&self) -> usize {
        self.start_level + self.steps.len()
    }
}

// ----- serde shadow types -----

#[derive(Serialize, Deserialize)]
struct DiagramFile {
    levels: Vec<Vec<String>>,
    arrows: Vec<ArrowFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    repeat: Option<RepeatFile>,
}

#[derive(Serialize, Deserialize)]
struct ArrowFile {
    gap: usize,
    from: String,
    to: String,
    potential: NumOrStr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<NumOrStr>,
}

#[derive(Serialize, Deserialize)]
struct RepeatFile {
    from_level: usize,
    vertices: Vec<String>,
    arrows: Vec<RepeatArrowFile>,
}

#[derive(Serialize, Deserialize)]
struct RepeatArrowFile {
    from: String,
    to: String,
    potential: NumOrStr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    potential_step: Option<NumOrStr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<NumOrStr>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

impl NumOrStr {
    fn to_potential(&self) -> Result<Potential, DiagramError> {
        match self {
            NumOrStr::Num(x) => {
                if !x.is_finite() {
                    return Err(DiagramError::Schema("non-finite potential".into()));
                }
                Ok(Potential::from_f64(*x))
            }
            NumOrStr::Str(s) => Potential::parse(s).map_err(DiagramError::Schema),
        }
    }

    fn to_count(&self) -> Result<BigUint, DiagramError> {
        match self {
            NumOrStr::Num(x) => {
                if *x < 1.0 || x.fract() != 0.0 || *x > 2f64.powi(53) {
                    return Err(DiagramError::Schema(format!(
                        "count must be a positive integer, got {x}; use a decimal string above 2^53"
                    )));
                }
                Ok(BigUint::from(*x as u64))
            }
            NumOrStr::Str(s) => s
                .parse::<BigUint>()
                .map_err(|e| DiagramError::Schema(format!("bad count `{s}`: {e}"))),
        }
    }

    fn from_potential(p: &Potential) -> NumOrStr {
        if p.needs_rational_form() {
            NumOrStr::Str(p.rational_string())
        } else {
            NumOrStr::Num(p.f64())
        }
    }

    fn from_count(c: &BigUint) -> Option<NumOrStr> {
        if c.is_one() {
            return None;
        }
        match c.to_u64() {
            Some(v) if v <= (1u64 << 53) => Some(NumOrStr::Num(v as f64)),
            _ => Some(NumOrStr::Str(c.to_string())),
        }
    }
}

impl DiagramFile {
    fn into_spec(self) -> Result<DiagramSpec, DiagramError> {
        let levels = self.levels;
        if levels.is_empty() {
            return Err(DiagramError::Schema("no levels".into()));
        }
        let index = |level: usize, name: &str| -> Option<usize> {
            levels
                .get(level)
                .and_then(|ns| ns.iter().position(|n| n == name))
        };
        let mut gaps: Vec<Vec<ArrowBundle>> = vec![Vec::new(); levels.len() - 1];
        for a in &self.arrows {
            if a.gap == 0 || a.gap >= levels.len() {
                return Err(DiagramError::LevelMismatch {
                    gap: a.gap,
                    from: a.from.clone(),
                    to: a.to.clone(),
                    detail: format!("gap must lie in 1..={}", levels.len() - 1),
                });
            }
            let from = index(a.gap - 1, &a.from).ok_or_else(|| DiagramError::LevelMismatch {
                gap: a.gap,
                from: a.from.clone(),
                to: a.to.clone(),
                detail: format!("source `{}` not at level {}", a.from, a.gap - 1),
            })?;
            let to = index(a.gap, &a.to).ok_or_else(|| DiagramError::LevelMismatch {
                gap: a.gap,
                from: a.from.clone(),
                to: a.to.clone(),
                detail: format!("range `{}` not at level {}", a.to, a.gap),
            })?;
            let count = match &a.count {
                Some(c) => c.to_count()?,
                None => BigUint::one(),
            };
            gaps[a.gap - 1].push(ArrowBundle {
                from,
                to,
                potential: a.potential.to_potential()?,
                count,
            });
        }
        let tail = match self.repeat {
            None => None,
            Some(rep) => {
                let last = levels.len() - 1;
                if rep.vertices != levels[last] {
                    return Err(DiagramError::Schema(
                        "repeat.vertices must equal the last explicit level, in the same order"
                            .into(),
                    ));
                }
                let bidx = |name: &str| -> Result<usize, DiagramError> {
                    rep.vertices.iter().position(|n| n == name).ok_or_else(|| {
                        DiagramError::Schema(format!("repeat vertex `{name}` not in block"))
                    })
                };
                let mut arrows = Vec::new();
                for a in &rep.arrows {
                    arrows.push(TailArrow {
                        from: bidx(&a.from)?,
                        to: bidx(&a.to)?,
                        potential: a.potential.to_potential()?,
                        step: match &a.potential_step {
                            Some(s) => s.to_potential()?,
                            None => Potential::zero(),
                        },
                        count: match &a.count {
                            Some(c) => c.to_count()?,
                            None => BigUint::one(),
                        },
                    });
                }
                Some(PeriodicTail {
                    from_level: rep.from_level,
                    arrows,
                })
            }
        };
        DiagramSpec::from_parts(levels, gaps, tail)
    }

    fn from_spec(spec: &DiagramSpec) -> DiagramFile {
        let mut arrows = Vec::new();
        for (gi, bundles) in spec.gaps.iter().enumerate() {
            let gap = gi + 1;
            for b in bundles {
                arrows.push(ArrowFile {
                    gap,
                    from: spec.levels[gap - 1][b.from].clone(),
                    to: spec.levels[gap][b.to].clone(),
                    potential: NumOrStr::from_potential(&b.potential),
                    count: NumOrStr::from_count(&b.count),
                });
            }
        }
        let repeat = spec.tail.as_ref().map(|t| {
            let block = &spec.levels[spec.levels.len() - 1];
            RepeatFile {
                from_level: t.from_level,
                vertices: block.clone(),
                arrows: t
                    .arrows
                    .iter()
                    .map(|a| RepeatArrowFile {
                        from: block[a.from].clone(),
                        to: block[a.to].clone(),
                        potential: NumOrStr::from_potential(&a.potential),
                        potential_step: if a.step.is_zero() {
                            None
                        } else {
                            Some(NumOrStr::from_potential(&a.step))
                        },
                        count: NumOrStr::from_count(&a.count),
                    })
                    .collect(),
            }
        });
        DiagramFile {
            levels: spec.levels.clone(),
            arrows,
            repeat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn load_two_column_diagram() {
        let spec = fixtures::br2();
        assert_eq!(spec.level_size(0), 1);
        for j in 1..=8 {
            assert_eq!(spec.level_size(j), 2);
        }
        assert!(spec.is_periodic());
    }

    #[test]
    fn single_chain_is_valid() {
        let spec = fixtures::chain(&[0.0, 0.0, 0.0]);
        assert_eq!(spec.available_depth(), Some(3));
        let mm = spec.multiplicity_matrices(3).unwrap();
        for m in &mm {
            assert_eq!((m.rows, m.cols), (1, 1));
            assert!(m.entry(0, 0).is_one());
        }
    }

    #[test]
    fn sink_vertex_is_rejected() {
        let json = r#"{
            "levels": [["v0"], ["a", "b"], ["c"]],
            "arrows": [
                {"gap": 1, "from": "v0", "to": "a", "potential": 0},
                {"gap": 1, "from": "v0", "to": "b", "potential": 0},
                {"gap": 2, "from": "a", "to": "c", "potential": 1}
            ]
        }"#;
        match DiagramSpec::from_json(json) {
            Err(DiagramError::Sink { level, vertex }) => {
                assert_eq!((level, vertex.as_str()), (1, "b"));
            }
            other => panic!("expected sink error, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let spec = fixtures::br2();
        let text = spec.to_json();
        let reloaded = DiagramSpec::from_json(&text).unwrap();
        assert_eq!(spec, reloaded);

        let rational = DiagramSpec::from_json(
            r#"{
                "levels": [["v0"], ["a"]],
                "arrows": [{"gap": 1, "from": "v0", "to": "a", "potential": "1/3", "count": 2}]
            }"#,
        )
        .unwrap();
        let again = DiagramSpec::from_json(&rational.to_json()).unwrap();
        assert_eq!(rational, again);
    }

    #[test]
    fn multiplicity_of_two_column_diagram() {
        let spec = fixtures::br2();
        for gap in 2..=5 {
            let m = spec.multiplicity_matrix(gap).unwrap();
            for v in 0..2 {
                for w in 0..2 {
                    assert!(m.entry(v, w).is_one());
                }
            }
        }
    }

    #[test]
    fn telescoping_chain_adds_potentials() {
        let spec = fixtures::chain(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tel = spec.telescope(&[2, 4, 6]).unwrap();
        assert_eq!(tel.prefix_depth(), 3);
        let pots: Vec<f64> = (1..=3)
            .map(|g| tel.bundles_at(g).unwrap()[0].potential.f64())
            .collect();
        assert_eq!(pots, vec![3.0, 7.0, 11.0]);
    }

    #[test]
    fn telescoped_two_column_gap_groups_path_sums() {
        // paths of length 2 between consecutive cuts in the two-column
        // diagram: within a column {0, 2}, across {1, 1}
        let spec = fixtures::br2();
        let tel = spec.expand(6).unwrap().telescope(&[2, 4, 6]).unwrap();
        let bundles = tel.bundles_at(2).unwrap();
        let into_first: Vec<(f64, u64)> = bundles
            .iter()
            .filter(|b| b.to == 0)
            .map(|b| (b.potential.f64(), b.count_u64().unwrap()))
            .collect();
        assert!(into_first.contains(&(0.0, 1)));
        assert!(into_first.contains(&(2.0, 1)));
        assert!(into_first.contains(&(1.0, 2)));
    }

    #[test]
    fn negate_twice_is_identity() {
        let spec = fixtures::br1();
        assert_eq!(spec.negate_potential().negate_potential(), spec);
        let flat = fixtures::chain(&[0.0, 0.0]);
        assert_eq!(flat.negate_potential(), flat);
    }

    #[test]
    fn product_of_chains_is_chain() {
        let a = fixtures::chain(&[1.0, 2.0]);
        let b = fixtures::chain(&[0.5, 0.25]);
        let p = a.product(&b).unwrap();
        assert_eq!(p.level_size(1), 1);
        assert_eq!(p.bundles_at(1).unwrap()[0].potential.f64(), 1.5);
        assert_eq!(p.bundles_at(2).unwrap()[0].potential.f64(), 2.25);
    }

    #[test]
    fn stepped_tail_expands_arithmetically() {
        let spec = fixtures::ramp();
        // cross arrows at gap j carry potential j for j >= 2
        for gap in 2..=7 {
            let bundles = spec.bundles_at(gap).unwrap();
            let cross: Vec<f64> = bundles
                .iter()
                .filter(|b| b.from != b.to)
                .map(|b| b.potential.f64())
                .collect();
            assert_eq!(cross, vec![gap as f64, gap as f64]);
        }
    }

    #[test]
    fn specs_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<DiagramSpec>();
        assert_send_sync::<MultiplicityMatrix>();
        assert_send_sync::<FinitePath>();
    }

    #[test]
    fn depth_exceeded_reported() {
        let spec = fixtures::chain(&[0.0]);
        match spec.expand(5) {
            Err(DiagramError::DepthExceeded {
                requested,
                available,
            }) => {
                assert_eq!((requested, available), (5, 1));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }
}
