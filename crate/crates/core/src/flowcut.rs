//! Chamber-pair flow networks: capacities from kernel interactions, max flow
//! and min cut on the complete chamber graph, path decompositions of flows,
//! and the two-chamber replacement partition built from a min cut.

use crate::error::{Error, Result};
use crate::grid::{ExteriorRule, GridPartition};
use crate::kernel::{weighted_pair_sum, KernelEngine};
use crate::scalar::Real;
use crate::tensions::{pair_order, SurfaceTensionMatrix};
use std::collections::VecDeque;

/// Relative cutoff under which residual capacity counts as exhausted;
/// guards augmentation against numeric dust on irrational-ratio capacities.
const RESIDUAL_CUTOFF: f64 = 1e-13;

/// Complete graph on chambers with symmetric nonnegative arc capacities and
/// zero diagonal, in energy units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork<T: Real = f64> {
    m: usize,
    p: Vec<T>,
}

impl<T: Real> FlowNetwork<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidFlow(format!("network needs at least 2 vertices, got {m}")));
        }
        let mut p = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidFlow(format!(
                    "row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::InvalidFlow(format!(
                        "capacity ({},{}) must be finite and nonnegative, got {v}",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j && v != T::zero() {
                    return Err(Error::InvalidFlow(format!(
                        "diagonal entry ({},{}) must be zero, got {v}",
                        i + 1,
                        i + 1
                    )));
                }
                p.push(v);
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if p[i * m + j] != p[j * m + i] {
                    return Err(Error::InvalidFlow(format!(
                        "capacities ({},{}) and ({},{}) differ",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { m, p })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn capacity(&self, i: usize, j: usize) -> T {
        self.p[i * self.m + j]
    }

    /// Capacity mass crossing the cut: sum of p over (K1, K2) pairs.
    pub fn cut_size(&self, cut: &Cut) -> T {
        let mut acc = T::zero();
        for i in 0..self.m {
            if !cut.contains_k1(i) {
                continue;
            }
            for j in 0..self.m {
                if !cut.contains_k1(j) {
                    acc = acc + self.capacity(i, j);
                }
            }
        }
        acc
    }

    /// Half the sigma-weighted capacity mass over ordered pairs, which is the
    /// multiphase energy of the partition the network was built from; summed
    /// along the same path as the energy report so the identity is exact.
    pub fn total_energy(&self, sigma: &SurfaceTensionMatrix<T>) -> Result<T> {
        if sigma.m() != self.m {
            return Err(Error::ChamberMismatch { partition: self.m, matrix: sigma.m() });
        }
        let values: Vec<T> = pair_order(self.m).map(|(i, j)| self.capacity(i, j)).collect();
        Ok(weighted_pair_sum(sigma, &values))
    }

    /// "m" then m rows of capacities.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.m);
        for i in 0..self.m {
            let row: Vec<String> =
                (0..self.m).map(|j| format!("{}", self.capacity(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let m: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty network text".into()))?
            .trim()
            .parse()
            .map_err(|_| Error::Parse("first line must be the vertex count".into()))?;
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing capacity row {}", i + 1)))?;
            let row: Vec<T> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map(T::of)
                        .map_err(|_| Error::Parse(format!("bad capacity '{tok}' in row {}", i + 1)))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    fn max_capacity(&self) -> T {
        self.p.iter().copied().fold(T::zero(), T::max)
    }
}

/// Capacities from a partition's pairwise kernel interactions (all three
/// terms, sigma-independent): the network whose cuts bound two-chamber
/// competitors.
pub fn build_network<T: Real>(
    engine: &KernelEngine<T>,
    p: &GridPartition<T>,
) -> Result<FlowNetwork<T>> {
    if p.exterior() == ExteriorRule::None {
        return Err(Error::Precondition("network construction needs labeled exterior data".into()));
    }
    let comps = engine.pair_components(p)?;
    let totals = comps.pair_totals();
    let m = p.m();
    let mut caps = vec![T::zero(); m * m];
    for (k, (i, j)) in pair_order(m).enumerate() {
        caps[i * m + j] = totals[k];
        caps[j * m + i] = totals[k];
    }
    Ok(FlowNetwork { m, p: caps })
}

/// Feasible source-to-sink flow: nonnegative arc values, balanced at every
/// other vertex. Capacity feasibility is relative to the generating network.
#[derive(Debug, Clone)]
pub struct Flow<T: Real = f64> {
    m: usize,
    source: usize,
    sink: usize,
    f: Vec<T>,
    value: T,
}

impl<T: Real> Flow<T> {
    /// Validates balance and nonnegativity; `arcs[i][j]` is the flow on the
    /// directed arc i -> j.
    pub fn from_arcs(arcs: Vec<Vec<T>>, source: usize, sink: usize) -> Result<Self> {
        let m = arcs.len();
        if source >= m || sink >= m || source == sink {
            return Err(Error::InvalidFlow(format!(
                "source {} and sink {} must be distinct vertices below {m}",
                source + 1,
                sink + 1
            )));
        }
        let mut f = Vec::with_capacity(m * m);
        for (i, row) in arcs.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidFlow(format!(
                    "arc row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::InvalidFlow(format!(
                        "arc ({},{}) must be finite and nonnegative, got {v}",
                        i + 1,
                        j + 1
                    )));
                }
                f.push(v);
            }
        }
        let max_arc = f.iter().copied().fold(T::zero(), T::max);
        let tol = T::of(1e-9) * (T::one() + max_arc);
        for v in 0..m {
            if v == source || v == sink {
                continue;
            }
            let net = node_net(&f, m, v);
            if net.abs() > tol {
                return Err(Error::InvalidFlow(format!("vertex {} is unbalanced by {net}", v + 1)));
            }
        }
        let value = node_net(&f, m, source);
        if value < -tol {
            return Err(Error::InvalidFlow(format!(
                "source {} has negative net outflow {value}",
                source + 1
            )));
        }
        Ok(Self { m, source, sink, f, value })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.f[i * self.m + j]
    }

    /// Net outflow of the source.
    pub fn value(&self) -> T {
        self.value
    }

    /// "source i", "sink j", "value v", then one "i j f" line per positive
    /// arc, vertices 1-based.
    pub fn to_text(&self) -> String {
        let mut out =
            format!("source {}\nsink {}\nvalue {}\n", self.source + 1, self.sink + 1, self.value);
        for i in 0..self.m {
            for j in 0..self.m {
                let v = self.at(i, j);
                if v > T::zero() {
                    out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
                }
            }
        }
        out
    }
}

fn node_net<T: Real>(f: &[T], m: usize, v: usize) -> T {
    let mut net = T::zero();
    for w in 0..m {
        net = net + f[v * m + w] - f[w * m + v];
    }
    net
}

/// Vertex bipartition with the source in K1 and the sink in K2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    source: usize,
    sink: usize,
    in_k1: Vec<bool>,
}

impl Cut {
    pub fn new(m: usize, source: usize, sink: usize, in_k1: Vec<bool>) -> Result<Self> {
        if in_k1.len() != m {
            return Err(Error::InvalidFlow(format!(
                "cut membership has {} entries, expected {m}",
                in_k1.len()
            )));
        }
        if source >= m || sink >= m || source == sink {
            return Err(Error::InvalidFlow(format!(
                "source {} and sink {} must be distinct vertices below {m}",
                source + 1,
                sink + 1
            )));
        }
        if !in_k1[source] || in_k1[sink] {
            return Err(Error::InvalidFlow(
                "cut must keep the source in K1 and the sink in K2".into(),
            ));
        }
        Ok(Self { source, sink, in_k1 })
    }

    pub fn m(&self) -> usize {
        self.in_k1.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn contains_k1(&self, v: usize) -> bool {
        self.in_k1[v]
    }

    pub fn k1(&self) -> Vec<usize> {
        (0..self.m()).filter(|&v| self.in_k1[v]).collect()
    }

    pub fn k2(&self) -> Vec<usize> {
        (0..self.m()).filter(|&v| !self.in_k1[v]).collect()
    }

    /// Bit v set when vertex v (0-based) lies in K1; vertex counts beyond 64
    /// are out of scope for chamber graphs.
    pub fn bitmask_k1(&self) -> u64 {
        assert!(self.m() <= 64, "bitmask supports at most 64 vertices");
        self.in_k1
            .iter()
            .enumerate()
            .fold(0u64, |acc, (v, &inside)| if inside { acc | (1 << v) } else { acc })
    }

    /// "k1 mask" and "k2 mask" lines with decimal vertex bitmasks.
    pub fn to_text(&self) -> String {
        let k1 = self.bitmask_k1();
        let all = if self.m() == 64 { u64::MAX } else { (1u64 << self.m()) - 1 };
        format!("k1 {}\nk2 {}\n", k1, all & !k1)
    }
}

/// Maximum flow by shortest augmenting paths on the residual graph, with
/// opposite-arc cancellation so f(i,j) * f(j,i) = 0 throughout.
pub fn max_flow<T: Real>(net: &FlowNetwork<T>, source: usize, sink: usize) -> Result<Flow<T>> {
    check_terminals(net, source, sink)?;
    let m = net.m;
    let tol = T::of(RESIDUAL_CUTOFF) * net.max_capacity();
    let mut f = vec![T::zero(); m * m];
    while let Some(path) = shortest_augmenting_path(&net.p, &f, m, source, sink, tol) {
        let mut delta = T::infinity();
        for w in path.windows(2) {
            delta = delta.min(residual(&net.p, &f, m, w[0], w[1]));
        }
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            let back = f[v * m + u].min(delta);
            f[v * m + u] = f[v * m + u] - back;
            f[u * m + v] = f[u * m + v] + (delta - back);
        }
    }
    let value = node_net(&f, m, source);
    Ok(Flow { m, source, sink, f, value })
}

/// The canonical minimum cut: K1 is the set of vertices reachable from the
/// source in the residual graph of a maximum flow.
pub fn min_cut<T: Real>(net: &FlowNetwork<T>, source: usize, sink: usize) -> Result<Cut> {
    let flow = max_flow(net, source, sink)?;
    let m = net.m;
    let tol = T::of(RESIDUAL_CUTOFF) * net.max_capacity();
    let mut in_k1 = vec![false; m];
    in_k1[source] = true;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for (v, reached) in in_k1.iter_mut().enumerate() {
            if !*reached && residual(&net.p, &flow.f, m, u, v) > tol {
                *reached = true;
                queue.push_back(v);
            }
        }
    }
    Cut::new(m, source, sink, in_k1)
}

#[inline]
fn residual<T: Real>(p: &[T], f: &[T], m: usize, u: usize, v: usize) -> T {
    p[u * m + v] - f[u * m + v] + f[v * m + u]
}

fn check_terminals<T: Real>(net: &FlowNetwork<T>, source: usize, sink: usize) -> Result<()> {
    if source == sink {
        return Err(Error::InvalidFlow(format!(
            "source and sink must differ, both are {}",
            source + 1
        )));
    }
    if source >= net.m || sink >= net.m {
        return Err(Error::InvalidFlow(format!(
            "terminals ({}, {}) outside the {} vertices",
            source + 1,
            sink + 1,
            net.m
        )));
    }
    Ok(())
}

fn shortest_augmenting_path<T: Real>(
    p: &[T],
    f: &[T],
    m: usize,
    source: usize,
    sink: usize,
    tol: T,
) -> Option<Vec<usize>> {
    let mut parent = vec![usize::MAX; m];
    parent[source] = source;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for v in 0..m {
            if parent[v] == usize::MAX && residual(p, f, m, u, v) > tol {
                parent[v] = u;
                if v == sink {
                    let mut path = vec![sink];
                    let mut w = sink;
                    while w != source {
                        w = parent[w];
                        path.push(w);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(v);
            }
        }
    }
    None
}

/// Weighted simple source-to-sink paths summing to a flow: no arc appears
/// together with its opposite anywhere in the family.
#[derive(Debug, Clone)]
pub struct PathDecomposition<T: Real = f64> {
    source: usize,
    sink: usize,
    paths: Vec<(Vec<usize>, T)>,
}

impl<T: Real> PathDecomposition<T> {
    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Vertex sequences with their weights.
    pub fn paths(&self) -> &[(Vec<usize>, T)] {
        &self.paths
    }

    pub fn total_weight(&self) -> T {
        self.paths.iter().map(|(_, a)| *a).sum()
    }

    /// Combined weight of paths using the arc (i, j) in that direction.
    pub fn arc_usage(&self, i: usize, j: usize) -> T {
        let mut acc = T::zero();
        for (path, alpha) in &self.paths {
            if path.windows(2).any(|w| w[0] == i && w[1] == j) {
                acc = acc + *alpha;
            }
        }
        acc
    }
}

/// Splits a flow into weighted simple paths: opposite arc pairs cancel
/// first, paths leave by maximum bottleneck, and leftover circulation mass
/// is peeled off as cycles. Each extraction zeroes its bottleneck arc, so
/// the path count never exceeds the arc count.
pub fn decompose_flow<T: Real>(flow: &Flow<T>) -> Result<PathDecomposition<T>> {
    let checked = Flow::from_arcs(
        (0..flow.m).map(|i| (0..flow.m).map(|j| flow.at(i, j)).collect()).collect(),
        flow.source,
        flow.sink,
    )?;
    let m = checked.m;
    let mut g = checked.f;
    for i in 0..m {
        for j in (i + 1)..m {
            let c = g[i * m + j].min(g[j * m + i]);
            g[i * m + j] = g[i * m + j] - c;
            g[j * m + i] = g[j * m + i] - c;
        }
    }
    let max_arc = g.iter().copied().fold(T::zero(), T::max);
    let tol = T::of(RESIDUAL_CUTOFF) * max_arc;
    let mut paths = Vec::new();
    while let Some(path) = widest_path(&g, m, checked.source, checked.sink, tol) {
        let mut alpha = T::infinity();
        for w in path.windows(2) {
            alpha = alpha.min(g[w[0] * m + w[1]]);
        }
        for w in path.windows(2) {
            g[w[0] * m + w[1]] = g[w[0] * m + w[1]] - alpha;
        }
        paths.push((path, alpha));
    }
    remove_cycles(&mut g, m, tol);
    Ok(PathDecomposition { source: checked.source, sink: checked.sink, paths })
}

/// Maximum-bottleneck simple path over arcs above the cutoff, ties broken by
/// smallest vertex index.
fn widest_path<T: Real>(
    g: &[T],
    m: usize,
    source: usize,
    sink: usize,
    tol: T,
) -> Option<Vec<usize>> {
    let mut width = vec![T::neg_infinity(); m];
    let mut parent = vec![usize::MAX; m];
    let mut done = vec![false; m];
    width[source] = T::infinity();
    loop {
        let mut u = usize::MAX;
        for v in 0..m {
            if !done[v] && width[v] > T::zero() && (u == usize::MAX || width[v] > width[u]) {
                u = v;
            }
        }
        if u == usize::MAX {
            return None;
        }
        if u == sink {
            let mut path = vec![sink];
            let mut w = sink;
            while w != source {
                w = parent[w];
                path.push(w);
            }
            path.reverse();
            return Some(path);
        }
        done[u] = true;
        for v in 0..m {
            if done[v] {
                continue;
            }
            let arc = g[u * m + v];
            if arc > tol && width[u].min(arc) > width[v] {
                width[v] = width[u].min(arc);
                parent[v] = u;
            }
        }
    }
}

/// Peels remaining circulation mass off cycle by cycle; stray arcs below the
/// walkable level are dropped as numeric residue.
fn remove_cycles<T: Real>(g: &mut [T], m: usize, tol: T) {
    loop {
        let mut start = usize::MAX;
        let mut best = tol;
        for u in 0..m {
            for v in 0..m {
                if g[u * m + v] > best {
                    best = g[u * m + v];
                    start = u;
                }
            }
        }
        if start == usize::MAX {
            return;
        }
        let mut order = vec![usize::MAX; m];
        let mut walk = vec![start];
        order[start] = 0;
        loop {
            let u = *walk.last().unwrap();
            let mut next = usize::MAX;
            for v in 0..m {
                if g[u * m + v] > T::zero()
                    && (next == usize::MAX || g[u * m + v] > g[u * m + next])
                {
                    next = v;
                }
            }
            if next == usize::MAX {
                // conservation residue: drop the dust arc that led here
                if walk.len() >= 2 {
                    let prev = walk[walk.len() - 2];
                    g[prev * m + u] = T::zero();
                } else {
                    for v in 0..m {
                        g[u * m + v] = T::zero();
                    }
                }
                break;
            }
            if order[next] != usize::MAX {
                let cycle = &walk[order[next]..];
                let mut alpha = g[u * m + next];
                for w in cycle.windows(2) {
                    alpha = alpha.min(g[w[0] * m + w[1]]);
                }
                for w in cycle.windows(2) {
                    g[w[0] * m + w[1]] = g[w[0] * m + w[1]] - alpha;
                }
                g[u * m + next] = g[u * m + next] - alpha;
                break;
            }
            order[next] = walk.len();
            walk.push(next);
        }
    }
}

/// Two-chamber competitor from the min cut between chambers i and j: every
/// chamber on the source side of the cut merges into i, the rest into j,
/// with the exterior untouched. When the tension matrix satisfies the
/// triangle inequality this never increases the multiphase energy.
pub fn replace<T: Real>(
    engine: &KernelEngine<T>,
    p: &GridPartition<T>,
    i: u8,
    j: u8,
) -> Result<GridPartition<T>> {
    match p.exterior() {
        ExteriorRule::HalfPair { i: a, j: b, .. } if a == i && b == j => {}
        _ => {
            return Err(Error::Precondition(format!(
                "replacement between chambers {} and {} needs exterior half-space data carrying exactly those labels",
                i as usize + 1,
                j as usize + 1
            )));
        }
    }
    let net = build_network(engine, p)?;
    let cut = min_cut(&net, i as usize, j as usize)?;
    let labels =
        p.labels().iter().map(|&l| if cut.contains_k1(l as usize) { i } else { j }).collect();
    GridPartition::from_labels(*p.spec(), p.m(), labels, p.exterior())
}
