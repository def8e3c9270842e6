//! Singular-kernel quadrature over grid cells and the fractional energies:
//! pair interactions, the internal/boundary multiphase split, the classical
//! weighted perimeter, and the scaled-energy scan toward the s -> 1/2 limit.

use crate::error::{Error, Result};
use crate::grid::{ExteriorRule, GridPartition, GridSpec};
use crate::scalar::Real;
use crate::tensions::{pair_index, pair_order, SurfaceTensionMatrix};
use rayon::prelude::*;
use std::collections::HashMap;

/// Volume of the unit ball in R^dim, for dim <= 3.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("unit ball volume tabulated only up to dimension 3"),
    }
}

/// Quadrature and truncation parameters for the kernel |x-y|^-(n+2s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig<T: Real = f64> {
    s: T,
    max_depth: u32,
    trunc_radius: T,
}

impl<T: Real> KernelConfig<T> {
    pub fn new(s: T, max_depth: u32, trunc_radius: T) -> Result<Self> {
        if !(s > T::zero() && s < T::of(0.5)) {
            return Err(Error::InvalidKernel(format!("exponent s must lie in (0, 1/2), got {s}")));
        }
        if !trunc_radius.is_finite() || trunc_radius <= T::zero() {
            return Err(Error::InvalidKernel(format!(
                "truncation radius must be positive, got {trunc_radius}"
            )));
        }
        Ok(Self { s, max_depth, trunc_radius })
    }

    /// Depth 6 and truncation radius 4L.
    pub fn with_defaults(s: T, box_side: T) -> Result<Self> {
        Self::new(s, 6, T::of(4.0) * box_side)
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn trunc_radius(&self) -> T {
        self.trunc_radius
    }
}

/// The multiphase energy split: internal (both cells in the box), boundary
/// (box-to-exterior, truncated), their sum, and the (1-2s)-scaled sum.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport<T: Real = f64> {
    pub internal: T,
    pub boundary: T,
    pub total: T,
    pub scaled_total: T,
}

/// Interaction of two chambers across the unordered pair list: `inin` counts
/// both cells inside the box, `cross` one inside and one in the truncated
/// exterior. Values are in cell units; multiply by `h_factor` for energies.
#[derive(Debug, Clone)]
pub struct PairComponents<T: Real = f64> {
    pub m: usize,
    pub h_factor: T,
    pub inin: Vec<T>,
    pub cross: Vec<T>,
}

impl<T: Real> PairComponents<T> {
    /// Full three-term pair energies: (inin + cross) * h^(n-2s).
    pub fn pair_totals(&self) -> Vec<T> {
        self.inin.iter().zip(&self.cross).map(|(&a, &b)| (a + b) * self.h_factor).collect()
    }

    /// Within-box pair energies: inin * h^(n-2s).
    pub fn pair_internals(&self) -> Vec<T> {
        self.inin.iter().map(|&a| a * self.h_factor).collect()
    }
}

/// Sum of sigma_ij * value_k over the canonical pair order; the single
/// summation path shared by energy reports and network capacities.
pub fn weighted_pair_sum<T: Real>(sigma: &SurfaceTensionMatrix<T>, pair_values: &[T]) -> T {
    debug_assert_eq!(pair_values.len(), sigma.m() * (sigma.m() - 1) / 2);
    let mut acc = T::zero();
    for (k, (i, j)) in pair_order(sigma.m()).enumerate() {
        acc = acc + sigma.get(i, j) * pair_values[k];
    }
    acc
}

/// Kernel values aggregated over the truncated exterior: entry (cell, j) is
/// the summed kernel weight from the cell to every exterior cell labeled j.
/// Depends on the exterior rule only, so it survives interior relabeling.
#[derive(Debug, Clone)]
pub struct GhostField<T: Real = f64> {
    rule: ExteriorRule,
    m: usize,
    values: Vec<T>,
}

impl<T: Real> GhostField<T> {
    pub fn at(&self, cell: usize, chamber: usize) -> T {
        self.values[cell * self.m + chamber]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rule(&self) -> ExteriorRule {
        self.rule
    }
}

/// Precomputed cell-pair kernel weights for one (grid, config) pair: the
/// reusable unit behind every energy evaluation.
///
/// A cell pair at integer offset d contributes h^(n-2s) * w(|d|) where w is
/// tabulated once per sorted absolute offset: exact dimension-reduced values
/// for touching pairs, recursive dyadic subdivision (depth-limited, midpoint
/// leaves) for nearby separated pairs, and the midpoint rule beyond center
/// distance 2*sqrt(n) cells. The exterior is sampled into ghost cells on the
/// cubic frame of width R_t around the box.
pub struct KernelEngine<T: Real = f64> {
    spec: GridSpec<T>,
    cfg: KernelConfig<T>,
    ghost_layers: usize,
    reach: usize,
    table: Vec<T>,
    h_factor: T,
    ghosts: Vec<[i64; 3]>,
}

impl<T: Real> KernelEngine<T> {
    pub fn build(spec: GridSpec<T>, cfg: KernelConfig<T>) -> Result<Self> {
        if cfg.trunc_radius < spec.box_side() {
            return Err(Error::InvalidKernel(format!(
                "truncation radius {} is smaller than the box side {}",
                cfg.trunc_radius,
                spec.box_side()
            )));
        }
        let ratio = (cfg.trunc_radius / spec.h()).as_f64();
        let ghost_layers = ratio.round() as usize;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidKernel(format!(
                "truncation radius must be a whole number of cell widths, got {ratio} cells"
            )));
        }
        let n = spec.n();
        let nn = spec.cells_per_side();
        let reach = nn - 1 + ghost_layers;
        let mut builder = WeightBuilder::new(n, cfg.s.as_f64(), cfg.max_depth);
        let mut table = Vec::with_capacity(table_len(n, reach));
        match n {
            2 => {
                for b in 0..=reach as i64 {
                    for a in 0..=b {
                        table.push(T::of(builder.weight([a, b, 0])));
                    }
                }
            }
            _ => {
                for c in 0..=reach as i64 {
                    for b in 0..=c {
                        for a in 0..=b {
                            table.push(T::of(builder.weight([a, b, c])));
                        }
                    }
                }
            }
        }
        let two = T::of(2.0);
        let h_factor = spec.h().powf(T::of_usize(n) - two * cfg.s);
        let ghosts = enumerate_ghosts(&spec, ghost_layers);
        Ok(Self { spec, cfg, ghost_layers, reach, table, h_factor, ghosts })
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn cfg(&self) -> &KernelConfig<T> {
        &self.cfg
    }

    pub fn ghost_layers(&self) -> usize {
        self.ghost_layers
    }

    /// h^(n-2s), the cell-units-to-energy conversion factor.
    pub fn h_factor(&self) -> T {
        self.h_factor
    }

    /// Tabulated kernel weight of a cell pair at integer offset d, in cell
    /// units.
    #[inline]
    pub fn offset_weight(&self, d: [i64; 3]) -> T {
        let c = canonical_offset(self.spec.n(), d);
        debug_assert!(c[2].unsigned_abs() as usize <= self.reach);
        let idx = match self.spec.n() {
            2 => tri(c[1] as usize) + c[0] as usize,
            _ => tet(c[2] as usize) + tri(c[1] as usize) + c[0] as usize,
        };
        self.table[idx]
    }

    /// Interaction energy of two disjoint cell sets inside the box. The
    /// arguments are canonically ordered first, so the result is exactly
    /// symmetric.
    pub fn interaction(&self, cells_a: &[usize], cells_b: &[usize]) -> Result<T> {
        let ncells = self.spec.num_cells();
        let mut in_a = vec![false; ncells];
        for &a in cells_a {
            if a >= ncells {
                return Err(Error::Precondition(format!("cell index {a} outside the grid")));
            }
            in_a[a] = true;
        }
        for &b in cells_b {
            if b >= ncells {
                return Err(Error::Precondition(format!("cell index {b} outside the grid")));
            }
            if in_a[b] {
                return Err(Error::Precondition(format!(
                    "cell sets overlap at cell {b}; interaction needs disjoint interiors"
                )));
            }
        }
        let (first, second) =
            if cells_a <= cells_b { (cells_a, cells_b) } else { (cells_b, cells_a) };
        let mut acc = T::zero();
        for &a in first {
            let ma = to_i64(self.spec.multi_index(a));
            for &b in second {
                let mb = to_i64(self.spec.multi_index(b));
                acc = acc + self.offset_weight(sub(mb, ma));
            }
        }
        Ok(acc * self.h_factor)
    }

    /// Kernel mass from every box cell to the labeled exterior ghost cells.
    /// The expensive precomputation behind boundary terms and cell flips.
    pub fn ghost_field(&self, rule: ExteriorRule, m: usize) -> GhostField<T> {
        let spec = &self.spec;
        let labeled: Vec<([i64; 3], u8)> = self
            .ghosts
            .iter()
            .filter_map(|&g| {
                let center =
                    [spec.center_coord(g[0]), spec.center_coord(g[1]), spec.center_coord(g[2])];
                rule.label_at(&center[..spec.n()]).map(|l| (g, l))
            })
            .collect();
        let ncells = spec.num_cells();
        let rows: Vec<Vec<T>> = (0..ncells)
            .into_par_iter()
            .map(|c| {
                let mc = to_i64(spec.multi_index(c));
                let mut acc = vec![T::zero(); m];
                for &(g, l) in &labeled {
                    acc[l as usize] = acc[l as usize] + self.offset_weight(sub(g, mc));
                }
                acc
            })
            .collect();
        let mut values = Vec::with_capacity(ncells * m);
        for row in rows {
            values.extend(row);
        }
        GhostField { rule, m, values }
    }

    /// Per-pair interaction components of a partition, reusing a ghost field
    /// built for the same exterior rule.
    pub fn pair_components_with(
        &self,
        p: &GridPartition<T>,
        gf: &GhostField<T>,
    ) -> Result<PairComponents<T>> {
        self.check_partition(p)?;
        if gf.m != p.m() || gf.rule != p.exterior() {
            return Err(Error::Precondition(
                "ghost field was built for a different exterior rule or chamber count".into(),
            ));
        }
        let m = p.m();
        let npairs = m * (m - 1) / 2;
        let ncells = self.spec.num_cells();
        let mis: Vec<[i64; 3]> = (0..ncells).map(|c| to_i64(self.spec.multi_index(c))).collect();
        let labels = p.labels();
        let partials: Vec<Vec<T>> = (0..ncells)
            .into_par_iter()
            .map(|a| {
                let la = labels[a] as usize;
                let ma = mis[a];
                let mut acc = vec![T::zero(); npairs];
                for b in (a + 1)..ncells {
                    let lb = labels[b] as usize;
                    if lb == la {
                        continue;
                    }
                    let k = if la < lb { pair_index(m, la, lb) } else { pair_index(m, lb, la) };
                    acc[k] = acc[k] + self.offset_weight(sub(mis[b], ma));
                }
                acc
            })
            .collect();
        let mut inin = vec![T::zero(); npairs];
        for row in &partials {
            for (dst, &v) in inin.iter_mut().zip(row) {
                *dst = *dst + v;
            }
        }
        let mut cross = vec![T::zero(); npairs];
        for (c, &lc) in labels.iter().enumerate() {
            let la = lc as usize;
            for ch in 0..m {
                if ch == la {
                    continue;
                }
                let k = if la < ch { pair_index(m, la, ch) } else { pair_index(m, ch, la) };
                cross[k] = cross[k] + gf.at(c, ch);
            }
        }
        Ok(PairComponents { m, h_factor: self.h_factor, inin, cross })
    }

    pub fn pair_components(&self, p: &GridPartition<T>) -> Result<PairComponents<T>> {
        let gf = self.ghost_field(p.exterior(), p.m());
        self.pair_components_with(p, &gf)
    }

    /// The multiphase energy report; `boundary` is defined as total minus
    /// internal so the report identity holds exactly as computed.
    pub fn multiphase_energy_with(
        &self,
        p: &GridPartition<T>,
        sigma: &SurfaceTensionMatrix<T>,
        gf: &GhostField<T>,
    ) -> Result<EnergyReport<T>> {
        if p.m() != sigma.m() {
            return Err(Error::ChamberMismatch { partition: p.m(), matrix: sigma.m() });
        }
        let comps = self.pair_components_with(p, gf)?;
        let internal = weighted_pair_sum(sigma, &comps.pair_internals());
        let total = weighted_pair_sum(sigma, &comps.pair_totals());
        let boundary = total - internal;
        let scaled_total = (T::one() - T::of(2.0) * self.cfg.s) * total;
        Ok(EnergyReport { internal, boundary, total, scaled_total })
    }

    pub fn multiphase_energy(
        &self,
        p: &GridPartition<T>,
        sigma: &SurfaceTensionMatrix<T>,
    ) -> Result<EnergyReport<T>> {
        let gf = self.ghost_field(p.exterior(), p.m());
        self.multiphase_energy_with(p, sigma, &gf)
    }

    /// Three-term fractional perimeter of one chamber: both-in-box plus the
    /// two box-to-exterior interactions, exterior truncated at R_t.
    pub fn perimeter_fractional(&self, p: &GridPartition<T>, chamber: u8) -> Result<T> {
        self.check_partition(p)?;
        if chamber as usize >= p.m() {
            return Err(Error::Precondition(format!(
                "chamber {} outside the {} chambers",
                chamber as usize + 1,
                p.m()
            )));
        }
        let map = |c: u8| u8::from(c != chamber);
        let labels: Vec<u8> = p.labels().iter().map(|&l| map(l)).collect();
        let exterior = match p.exterior() {
            ExteriorRule::HalfPair { i, j, axis } => {
                if map(i) == map(j) {
                    ExteriorRule::Constant(map(i))
                } else {
                    ExteriorRule::HalfPair { i: map(i), j: map(j), axis }
                }
            }
            ExteriorRule::Constant(i) => ExteriorRule::Constant(map(i)),
            ExteriorRule::None => ExteriorRule::None,
        };
        let reduced = GridPartition::from_labels(*p.spec(), 2, labels, exterior)?;
        let comps = self.pair_components(&reduced)?;
        Ok(comps.pair_totals()[0])
    }

    /// Upper bound on the neglected exterior tail beyond R_t:
    /// n * omega_n * L^n * sigma_max / (2s * R_t^(2s)).
    pub fn tail_bound(&self, sigma_max: T) -> T {
        let n = self.spec.n();
        let two_s = T::of(2.0) * self.cfg.s;
        T::of_usize(n)
            * T::of(unit_ball_volume(n))
            * self.spec.box_side().powi(n as i32)
            * sigma_max
            / (two_s * self.cfg.trunc_radius.powf(two_s))
    }

    fn check_partition(&self, p: &GridPartition<T>) -> Result<()> {
        if *p.spec() != self.spec {
            return Err(Error::Precondition(
                "partition grid differs from the engine's grid".into(),
            ));
        }
        Ok(())
    }
}

/// Weighted classical perimeter: sigma_ij * h^(n-1) summed over interior
/// faces separating differently labeled cells, each unordered face once.
pub fn perimeter_classical<T: Real>(
    p: &GridPartition<T>,
    sigma: &SurfaceTensionMatrix<T>,
) -> Result<T> {
    if p.m() != sigma.m() {
        return Err(Error::ChamberMismatch { partition: p.m(), matrix: sigma.m() });
    }
    let spec = p.spec();
    let n = spec.n();
    let nn = spec.cells_per_side();
    let mut acc = T::zero();
    for axis in 0..n {
        for flat in 0..spec.num_cells() {
            let mi = spec.multi_index(flat);
            if mi[axis] + 1 >= nn {
                continue;
            }
            let mut next = mi;
            next[axis] += 1;
            let la = p.label(flat);
            let lb = p.label(spec.flat_index(next));
            if la != lb {
                acc = acc + sigma.get(la as usize, lb as usize);
            }
        }
    }
    Ok(acc * spec.h().powi(n as i32 - 1))
}

/// One row of the scaled-energy scan.
#[derive(Debug, Clone, Copy)]
pub struct GammaScanRow<T: Real = f64> {
    pub s: T,
    pub cells_per_side: usize,
    pub internal: T,
    pub boundary: T,
    pub scaled_total: T,
    pub classical_target: T,
    pub tail_bound: T,
}

/// Evaluates (1-2s) * multiphase energy across exponents and refinements for
/// one partition family, alongside the classical-limit target
/// omega_(n-1) * weighted classical perimeter. Emits data only; convergence
/// judgments live in the test suites.
#[allow(clippy::too_many_arguments)]
pub fn gamma_scan<T: Real, F>(
    dim: usize,
    box_side: T,
    make: F,
    sigma: &SurfaceTensionMatrix<T>,
    s_list: &[T],
    n_list: &[usize],
    max_depth: u32,
    trunc_radius: T,
) -> Result<Vec<GammaScanRow<T>>>
where
    F: Fn(&GridSpec<T>) -> Result<GridPartition<T>>,
{
    if s_list.is_empty() || n_list.is_empty() {
        return Err(Error::Precondition("scan needs at least one s and one refinement".into()));
    }
    for w in s_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Precondition("exponent list must be strictly increasing".into()));
        }
    }
    if !(s_list[0] > T::zero() && *s_list.last().unwrap() < T::of(0.5)) {
        return Err(Error::Precondition("exponents must lie in (0, 1/2)".into()));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Precondition("refinement list must be strictly increasing".into()));
        }
    }
    let omega = T::of(unit_ball_volume(dim - 1));
    let mut rows = Vec::with_capacity(s_list.len() * n_list.len());
    for &s in s_list {
        for &nn in n_list {
            let spec = GridSpec::new(dim, nn, box_side)?;
            let partition = make(&spec)?;
            let engine = KernelEngine::build(spec, KernelConfig::new(s, max_depth, trunc_radius)?)?;
            let report = engine.multiphase_energy(&partition, sigma)?;
            rows.push(GammaScanRow {
                s,
                cells_per_side: nn,
                internal: report.internal,
                boundary: report.boundary,
                scaled_total: report.scaled_total,
                classical_target: omega * perimeter_classical(&partition, sigma)?,
                tail_bound: engine.tail_bound(sigma.max_off_diagonal()),
            });
        }
    }
    Ok(rows)
}

#[inline]
fn to_i64(mi: [usize; 3]) -> [i64; 3] {
    [mi[0] as i64, mi[1] as i64, mi[2] as i64]
}

#[inline]
fn sub(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn tri(x: usize) -> usize {
    x * (x + 1) / 2
}

#[inline]
fn tet(x: usize) -> usize {
    x * (x + 1) * (x + 2) / 6
}

fn table_len(n: usize, reach: usize) -> usize {
    match n {
        2 => tri(reach) + reach + 1,
        _ => tet(reach) + tri(reach) + reach + 1,
    }
}

/// Absolute components of the first n axes, sorted ascending; the symmetry
/// class the weight table is keyed on.
#[inline]
fn canonical_offset(n: usize, d: [i64; 3]) -> [i64; 3] {
    if n == 2 {
        let a = d[0].abs();
        let b = d[1].abs();
        if a <= b {
            [a, b, 0]
        } else {
            [b, a, 0]
        }
    } else {
        let mut c = [d[0].abs(), d[1].abs(), d[2].abs()];
        if c[0] > c[1] {
            c.swap(0, 1);
        }
        if c[1] > c[2] {
            c.swap(1, 2);
        }
        if c[0] > c[1] {
            c.swap(0, 1);
        }
        c
    }
}

fn enumerate_ghosts<T: Real>(spec: &GridSpec<T>, layers: usize) -> Vec<[i64; 3]> {
    let nn = spec.cells_per_side() as i64;
    let g = layers as i64;
    let inside = |v: i64| (0..nn).contains(&v);
    let mut out = Vec::new();
    match spec.n() {
        2 => {
            for i in -g..nn + g {
                for j in -g..nn + g {
                    if !(inside(i) && inside(j)) {
                        out.push([i, j, 0]);
                    }
                }
            }
        }
        _ => {
            for i in -g..nn + g {
                for j in -g..nn + g {
                    for k in -g..nn + g {
                        if !(inside(i) && inside(j) && inside(k)) {
                            out.push([i, j, k]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Weight construction in f64, independent of the storage scalar so f32 and
/// f64 engines tabulate identical classifications.
struct WeightBuilder {
    n: usize,
    max_depth: u32,
    far2: i64,
    pw: f64,
    norm: f64,
    touch: HashMap<[i64; 3], f64>,
    memo: HashMap<([i64; 3], u32), f64>,
}

impl WeightBuilder {
    fn new(n: usize, s: f64, max_depth: u32) -> Self {
        let order = if n == 2 { 40 } else { 32 };
        let gl = gauss_legendre(order);
        let mut touch = HashMap::new();
        let patterns: &[[i64; 3]] =
            if n == 2 { &[[0, 1, 0], [1, 1, 0]] } else { &[[0, 0, 1], [0, 1, 1], [1, 1, 1]] };
        for &p in patterns {
            touch.insert(p, touching_value(n, p, s, &gl));
        }
        Self {
            n,
            max_depth,
            far2: 4 * n as i64,
            pw: -(n as f64 / 2.0 + s),
            norm: 2f64.powf(-(n as f64 - 2.0 * s)),
            touch,
            memo: HashMap::new(),
        }
    }

    /// Kernel weight of a canonical (sorted nonnegative) offset at the
    /// configured depth.
    fn weight(&mut self, d: [i64; 3]) -> f64 {
        self.weight_at(d, self.max_depth)
    }

    fn weight_at(&mut self, d: [i64; 3], depth: u32) -> f64 {
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if d2 == 0 {
            return 0.0;
        }
        if d.iter().all(|&v| v <= 1) {
            return self.touch[&canonical_key(self.n, d)];
        }
        if d2 >= self.far2 || depth == 0 {
            return (d2 as f64).powf(self.pw);
        }
        if let Some(&w) = self.memo.get(&(d, depth)) {
            return w;
        }
        let mut acc = 0.0;
        let n = self.n;
        let es: &[i64] = &[-1, 0, 1];
        for &e0 in es {
            for &e1 in es {
                if n == 2 {
                    let child = canonical_key(n, [2 * d[0] + e0, 2 * d[1] + e1, 0]);
                    let mult = mult_of(e0) * mult_of(e1);
                    acc += mult * self.weight_at(child, depth - 1);
                } else {
                    for &e2 in es {
                        let child = canonical_key(n, [2 * d[0] + e0, 2 * d[1] + e1, 2 * d[2] + e2]);
                        let mult = mult_of(e0) * mult_of(e1) * mult_of(e2);
                        acc += mult * self.weight_at(child, depth - 1);
                    }
                }
            }
        }
        let w = self.norm * acc;
        self.memo.insert((d, depth), w);
        w
    }
}

#[inline]
fn mult_of(e: i64) -> f64 {
    if e == 0 {
        2.0
    } else {
        1.0
    }
}

/// canonical_offset for builder-internal [i64; 3] values (already
/// nonnegative except for subdivision children).
#[inline]
fn canonical_key(n: usize, d: [i64; 3]) -> [i64; 3] {
    canonical_offset(n, d)
}

/// Per-axis density factors of the reduced difference integrals.
#[derive(Clone, Copy)]
enum AxisDensity {
    Constant,
    Z,
    OneMinusZ,
    TwoMinusZ,
}

impl AxisDensity {
    fn eval(self, z: f64) -> f64 {
        match self {
            AxisDensity::Constant => 1.0,
            AxisDensity::Z => z,
            AxisDensity::OneMinusZ => 1.0 - z,
            AxisDensity::TwoMinusZ => 2.0 - z,
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// recurrence.
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..64 {
            let (p, d) = legendre_pair(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_pair(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=k {
        let jf = j as f64;
        let p = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p;
    }
    let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor Gauss-Legendre integral of dens(z) * |z|^-(n+2s) over a box.
fn gl_box(
    n: usize,
    lims: &[(f64, f64); 3],
    dens: &[AxisDensity; 3],
    s: f64,
    gl: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let pw = -(n as f64 / 2.0 + s);
    let (ref t, ref w) = *gl;
    let order = t.len();
    let mut axis_z = [vec![], vec![], vec![]];
    let mut axis_w = [vec![], vec![], vec![]];
    for ax in 0..n {
        let (lo, hi) = lims[ax];
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for q in 0..order {
            let z = mid + half * t[q];
            axis_z[ax].push(z);
            axis_w[ax].push(half * w[q] * dens[ax].eval(z));
        }
    }
    let mut acc = 0.0;
    if n == 2 {
        for i in 0..order {
            let zi = axis_z[0][i];
            let wi = axis_w[0][i];
            for j in 0..order {
                let zj = axis_z[1][j];
                acc += wi * axis_w[1][j] * (zi * zi + zj * zj).powf(pw);
            }
        }
    } else {
        for i in 0..order {
            let zi = axis_z[0][i];
            let wi = axis_w[0][i];
            for j in 0..order {
                let zj = axis_z[1][j];
                let wij = wi * axis_w[1][j];
                let rij = zi * zi + zj * zj;
                for k in 0..order {
                    let zk = axis_z[2][k];
                    acc += wij * axis_w[2][k] * (rij + zk * zk).powf(pw);
                }
            }
        }
    }
    acc
}

/// Monomial singular integral over the unit box: the z^e |z|^-(n+2s) mass,
/// closed through the dyadic scaling identity M = A / (1 - 2^-(|e|-2s))
/// where A integrates over the L-shell [0,1]^n minus [0,1/2]^n.
fn monomial_mass(n: usize, e: [u8; 3], s: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let dens = |i: usize| if e[i] == 1 { AxisDensity::Z } else { AxisDensity::Constant };
    let mut a = 0.0;
    for jbox in 0..n {
        let mut lims = [(0.0, 1.0); 3];
        for (i, lim) in lims.iter_mut().enumerate().take(n) {
            *lim = match i.cmp(&jbox) {
                std::cmp::Ordering::Equal => (0.5, 1.0),
                std::cmp::Ordering::Less => (0.0, 0.5),
                std::cmp::Ordering::Greater => (0.0, 1.0),
            };
        }
        a += gl_box(n, &lims, &[dens(0), dens(1), dens(2)], s, gl);
    }
    let total: u8 = e.iter().sum();
    a / (1.0 - 2f64.powf(-(total as f64 - 2.0 * s)))
}

/// Exact interaction weight of two touching unit cells at 0/1 offset d: the
/// difference-variable reduction with triangular densities, split into one
/// singular box (handled by monomial masses) and smooth boxes (tensor
/// quadrature), folded over the offset's zero axes.
fn touching_value(n: usize, d: [i64; 3], s: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let zero_axes: Vec<usize> = (0..n).filter(|&i| d[i] == 0).collect();
    let one_axes: Vec<usize> = (0..n).filter(|&i| d[i] == 1).collect();
    let fold = 2f64.powi(zero_axes.len() as i32);
    let mut singular = 0.0;
    for subset in 0u32..(1 << zero_axes.len()) {
        let mut e = [0u8; 3];
        for &i in &one_axes {
            e[i] = 1;
        }
        let mut sign = 1.0;
        for (bit, &i) in zero_axes.iter().enumerate() {
            if (subset >> bit) & 1 == 1 {
                e[i] = 1;
                sign = -sign;
            }
        }
        singular += sign * monomial_mass(n, e, s, gl);
    }
    let mut smooth = 0.0;
    for choice in 1u32..(1 << one_axes.len()) {
        let mut lims = [(0.0, 1.0); 3];
        let mut dens = [AxisDensity::Constant; 3];
        for &i in &zero_axes {
            dens[i] = AxisDensity::OneMinusZ;
        }
        for (bit, &i) in one_axes.iter().enumerate() {
            if (choice >> bit) & 1 == 1 {
                lims[i] = (1.0, 2.0);
                dens[i] = AxisDensity::TwoMinusZ;
            } else {
                dens[i] = AxisDensity::Z;
            }
        }
        smooth += gl_box(n, &lims, &dens, s, gl);
    }
    fold * (singular + smooth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExteriorRule, GridPartition, GridSpec, LaminatePath};

    fn engine(n: usize, nn: usize, box_side: f64, s: f64, depth: u32) -> KernelEngine<f64> {
        let spec = GridSpec::new(n, nn, box_side).unwrap();
        let cfg = KernelConfig::new(s, depth, 4.0 * box_side).unwrap();
        KernelEngine::build(spec, cfg).unwrap()
    }

    fn uniform_sigma(m: usize) -> SurfaceTensionMatrix<f64> {
        let rows =
            (0..m).map(|i| (0..m).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        SurfaceTensionMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn far_pair_is_midpoint_value() {
        // unit cells three widths apart: h^(2n) / d^(n+2s) with h = 1, d = 3
        let eng = engine(2, 4, 4.0, 0.25, 6);
        let spec = eng.spec();
        let a = spec.flat_index([2, 0, 0]);
        let b = spec.flat_index([2, 3, 0]);
        let got = eng.interaction(&[a], &[b]).unwrap();
        let expect = 9f64.powf(-1.25);
        assert!((got - expect).abs() < 1e-14 * expect, "{got} vs {expect}");
    }

    #[test]
    fn touching_values_match_reduction_2d() {
        // exact edge and corner values, pinned independently of this code by
        // scipy quadrature of the dimension-reduced integrals
        let eng = engine(2, 4, 4.0, 0.48, 6);
        let spec = eng.spec();
        let edge =
            eng.interaction(&[spec.flat_index([2, 2, 0])], &[spec.flat_index([2, 3, 0])]).unwrap();
        let corner =
            eng.interaction(&[spec.flat_index([2, 2, 0])], &[spec.flat_index([3, 3, 0])]).unwrap();
        assert!((edge - 49.323580729522).abs() < 1e-8);
        assert!((corner - 0.777469788654).abs() < 1e-10);
    }

    #[test]
    fn touching_values_match_reduction_3d() {
        for (s, expect) in [
            (0.30, [6.4317182267, 0.6097747433, 0.2102791506]),
            (0.45, [29.4884032498, 0.7048079354, 0.1994608288]),
        ] {
            let eng = engine(3, 4, 4.0, s, 4);
            let spec = eng.spec();
            let base = spec.flat_index([2, 2, 2]);
            let face = eng.interaction(&[base], &[spec.flat_index([2, 2, 3])]).unwrap();
            let edge = eng.interaction(&[base], &[spec.flat_index([2, 3, 3])]).unwrap();
            let corner = eng.interaction(&[base], &[spec.flat_index([3, 3, 3])]).unwrap();
            assert!((face - expect[0]).abs() < 1e-6 * expect[0], "s={s}: {face}");
            assert!((edge - expect[1]).abs() < 1e-6 * expect[1], "s={s}: {edge}");
            assert!((corner - expect[2]).abs() < 1e-6 * expect[2], "s={s}: {corner}");
        }
    }

    #[test]
    fn adjacent_squares_track_refinement_oracle() {
        // oracle: uniform 2^k midpoint refinement of the adjacent-unit-square
        // integral at s = 0.25, Richardson-extrapolated (k up to 4096):
        // 3.6470877 +- 1e-6; the engine's exact reduction gives 3.647087515503
        let oracle = 3.6470877;
        let mut last = f64::INFINITY;
        for depth in 0..4 {
            let eng = engine(2, 4, 4.0, 0.25, depth);
            let spec = eng.spec();
            let got = eng
                .interaction(&[spec.flat_index([2, 2, 0])], &[spec.flat_index([2, 3, 0])])
                .unwrap();
            let err = (got - oracle).abs();
            assert!(err <= last + 1e-12, "depth {depth} error grew: {err} > {last}");
            assert!(err < 1e-5 * oracle);
            last = err;
        }
    }

    #[test]
    fn interaction_is_symmetric_exactly() {
        let eng = engine(2, 6, 1.0, 0.35, 3);
        let a = vec![0, 7, 8, 21];
        let b = vec![3, 4, 30, 31, 35];
        assert_eq!(eng.interaction(&a, &b).unwrap(), eng.interaction(&b, &a).unwrap());
    }

    #[test]
    fn interaction_is_additive() {
        let eng = engine(2, 6, 1.0, 0.35, 3);
        let a1 = vec![0, 1];
        let a2 = vec![14, 15, 20];
        let joined = vec![0, 1, 14, 15, 20];
        let b = vec![30, 31, 25];
        let lhs = eng.interaction(&joined, &b).unwrap();
        let rhs = eng.interaction(&a1, &b).unwrap() + eng.interaction(&a2, &b).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn interaction_rejects_overlap() {
        let eng = engine(2, 4, 1.0, 0.35, 3);
        assert!(eng.interaction(&[1, 2], &[2, 3]).is_err());
    }

    #[test]
    fn two_chamber_total_reduces_to_single_perimeter() {
        let eng = engine(2, 8, 1.0, 0.45, 4);
        let p = GridPartition::make_halfspace_pair(*eng.spec(), 3, 0, 1, 1).unwrap();
        let sigma = SurfaceTensionMatrix::from_rows(vec![
            vec![0.0, 2.5, 1.0],
            vec![2.5, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let report = eng.multiphase_energy(&p, &sigma).unwrap();
        let perim = eng.perimeter_fractional(&p, 0).unwrap();
        assert_eq!(report.total, 2.5 * perim);
        assert_eq!(report.total, report.internal + report.boundary);
        assert!(report.boundary >= 0.0);
    }

    #[test]
    fn complement_has_equal_perimeter() {
        let eng = engine(2, 8, 1.0, 0.4, 4);
        let p = GridPartition::make_halfspace_pair(*eng.spec(), 2, 0, 1, 0).unwrap();
        assert_eq!(
            eng.perimeter_fractional(&p, 0).unwrap(),
            eng.perimeter_fractional(&p, 1).unwrap()
        );
    }

    #[test]
    fn uniform_partition_has_zero_energy() {
        let eng = engine(2, 6, 1.0, 0.3, 3);
        let labels = vec![0u8; 36];
        let p =
            GridPartition::from_labels(*eng.spec(), 2, labels, ExteriorRule::Constant(0)).unwrap();
        let report = eng.multiphase_energy(&p, &uniform_sigma(2)).unwrap();
        assert_eq!(report.total, 0.0);
        assert_eq!(report.internal, 0.0);
        assert_eq!(report.boundary, 0.0);
    }

    #[test]
    fn empty_chamber_has_zero_perimeter() {
        let eng = engine(2, 6, 1.0, 0.3, 3);
        let p = GridPartition::make_halfspace_pair(*eng.spec(), 3, 0, 1, 1).unwrap();
        assert_eq!(eng.perimeter_fractional(&p, 2).unwrap(), 0.0);
    }

    #[test]
    fn energy_scales_linearly_in_sigma() {
        let eng = engine(2, 6, 1.0, 0.4, 3);
        let path = LaminatePath::new(vec![0, 2, 1], 0).unwrap();
        let p = GridPartition::make_laminate(*eng.spec(), 3, &path, 1).unwrap();
        let s1 = uniform_sigma(3);
        let s3 = SurfaceTensionMatrix::from_rows(
            (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { 3.0 }).collect()).collect(),
        )
        .unwrap();
        let r1 = eng.multiphase_energy(&p, &s1).unwrap();
        let r3 = eng.multiphase_energy(&p, &s3).unwrap();
        assert!((r3.total - 3.0 * r1.total).abs() <= 1e-12 * r3.total);
        assert!((r3.internal - 3.0 * r1.internal).abs() <= 1e-12 * r3.internal.max(1e-300));
        assert!((r3.scaled_total - 3.0 * r1.scaled_total).abs() <= 1e-12 * r3.scaled_total);
    }

    #[test]
    fn energy_dominates_uniform_lower_bound() {
        let eng = engine(2, 6, 1.0, 0.4, 3);
        let path = LaminatePath::new(vec![0, 2, 1], 0).unwrap();
        let p = GridPartition::make_laminate(*eng.spec(), 3, &path, 1).unwrap();
        let sigma = SurfaceTensionMatrix::from_rows(vec![
            vec![0.0, 1.5, 0.7],
            vec![1.5, 0.0, 2.0],
            vec![0.7, 2.0, 0.0],
        ])
        .unwrap();
        let report = eng.multiphase_energy(&p, &sigma).unwrap();
        let comps = eng.pair_components(&p).unwrap();
        let half_sum: f64 = comps.pair_internals().iter().sum();
        assert!(report.internal >= sigma.min_off_diagonal() * half_sum * (1.0 - 1e-12));
    }

    #[test]
    fn chamber_count_mismatch_rejected() {
        let eng = engine(2, 4, 1.0, 0.3, 2);
        let p = GridPartition::make_halfspace_pair(*eng.spec(), 4, 0, 1, 0).unwrap();
        assert!(eng.multiphase_energy(&p, &uniform_sigma(3)).is_err());
    }

    #[test]
    fn classical_perimeter_examples() {
        let spec = GridSpec::new(2, 64, 1.0).unwrap();
        let hsp = GridPartition::make_halfspace_pair(spec, 2, 0, 1, 1).unwrap();
        assert_eq!(perimeter_classical(&hsp, &uniform_sigma(2)).unwrap(), 1.0);

        let path = LaminatePath::new(vec![0, 2, 1], 3).unwrap();
        let lam = GridPartition::make_laminate(spec, 3, &path, 1).unwrap();
        assert_eq!(perimeter_classical(&lam, &uniform_sigma(3)).unwrap(), 2.0);

        let spec2 = GridSpec::new(2, 2, 1.0).unwrap();
        let checker =
            GridPartition::from_labels(spec2, 2, vec![0, 1, 1, 0], ExteriorRule::None).unwrap();
        assert_eq!(perimeter_classical(&checker, &uniform_sigma(2)).unwrap(), 2.0);
    }

    #[test]
    fn classical_perimeter_survives_label_permutation() {
        let spec = GridSpec::new(2, 8, 1.0).unwrap();
        let path = LaminatePath::new(vec![0, 2, 1], 0).unwrap();
        let lam = GridPartition::make_laminate(spec, 3, &path, 1).unwrap();
        let sigma = SurfaceTensionMatrix::from_rows(vec![
            vec![0.0, 3.0, 1.0],
            vec![3.0, 0.0, 2.0],
            vec![1.0, 2.0, 0.0],
        ])
        .unwrap();
        // permutation (0 1 2) -> (1 2 0) applied to labels and to sigma
        let perm = [1u8, 2, 0];
        let labels: Vec<u8> = lam.labels().iter().map(|&l| perm[l as usize]).collect();
        let permuted = GridPartition::from_labels(spec, 3, labels, ExteriorRule::None).unwrap();
        let mut rows = vec![vec![0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[perm[i] as usize][perm[j] as usize] = sigma.get(i, j);
            }
        }
        let sigma_p = SurfaceTensionMatrix::from_rows(rows).unwrap();
        assert_eq!(
            perimeter_classical(&lam, &sigma).unwrap(),
            perimeter_classical(&permuted, &sigma_p).unwrap()
        );
    }

    #[test]
    fn halfspace_scaled_energy_anchor() {
        // full three-term half-space value at moderate resolution; pinned by
        // an independent prototype of the same discretization
        let eng = engine(2, 32, 1.0, 0.45, 6);
        let p = GridPartition::make_halfspace_pair(*eng.spec(), 2, 0, 1, 1).unwrap();
        let report = eng.multiphase_energy(&p, &uniform_sigma(2)).unwrap();
        assert!(
            (report.scaled_total - 2.3094).abs() < 2e-3,
            "scaled total {}",
            report.scaled_total
        );
    }

    #[test]
    fn scan_rows_match_direct_evaluation() {
        let sigma = uniform_sigma(2);
        let rows = gamma_scan(
            2,
            1.0,
            |spec| GridPartition::make_halfspace_pair(*spec, 2, 0, 1, 1),
            &sigma,
            &[0.3, 0.4],
            &[4, 8],
            3,
            4.0,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].cells_per_side, 4);
        assert_eq!(rows[1].cells_per_side, 8);
        for row in &rows {
            assert_eq!(row.classical_target, 2.0);
            assert!(row.tail_bound > 0.0);
            let eng = engine(2, row.cells_per_side, 1.0, row.s, 3);
            let p = GridPartition::make_halfspace_pair(*eng.spec(), 2, 0, 1, 1).unwrap();
            let report = eng.multiphase_energy(&p, &sigma).unwrap();
            assert_eq!(row.scaled_total, report.scaled_total);
            assert_eq!(row.internal, report.internal);
            assert_eq!(row.boundary, report.boundary);
        }
    }

    #[test]
    fn scan_validates_exponent_list() {
        let sigma = uniform_sigma(2);
        let make = |spec: &GridSpec<f64>| GridPartition::make_halfspace_pair(*spec, 2, 0, 1, 1);
        assert!(gamma_scan(2, 1.0, make, &sigma, &[0.4, 0.3], &[4], 2, 4.0).is_err());
        assert!(gamma_scan(2, 1.0, make, &sigma, &[0.3, 0.6], &[4], 2, 4.0).is_err());
        assert!(gamma_scan(2, 1.0, make, &sigma, &[0.3], &[8, 4], 2, 4.0).is_err());
    }

    #[test]
    fn tail_bound_formula() {
        let eng = engine(2, 8, 1.0, 0.45, 2);
        let expect = 2.0 * std::f64::consts::PI * 1.0 * 3.0 / (0.9 * 4f64.powf(0.9));
        assert!((eng.tail_bound(3.0) - expect).abs() < 1e-14 * expect);
    }

    #[test]
    fn config_rejects_bad_exponent() {
        assert!(KernelConfig::new(0.5, 4, 4.0).is_err());
        assert!(KernelConfig::new(0.0, 4, 4.0).is_err());
        assert!(KernelConfig::new(-0.1, 4, 4.0).is_err());
    }

    #[test]
    fn build_rejects_fractional_ghost_width() {
        let spec = GridSpec::new(2, 3, 1.0).unwrap();
        let cfg = KernelConfig::new(0.3, 2, 1.5).unwrap();
        assert!(KernelEngine::build(spec, cfg).is_err());
    }

    #[test]
    fn f32_engine_matches_f64_classification() {
        let spec64 = GridSpec::new(2, 6, 1.0).unwrap();
        let eng64 = KernelEngine::build(spec64, KernelConfig::new(0.4, 3, 4.0).unwrap()).unwrap();
        let spec32 = GridSpec::<f32>::new(2, 6, 1.0).unwrap();
        let eng32 =
            KernelEngine::build(spec32, KernelConfig::new(0.4f32, 3, 4.0).unwrap()).unwrap();
        let p64 = GridPartition::make_halfspace_pair(spec64, 2, 0, 1, 1).unwrap();
        let p32 = GridPartition::make_halfspace_pair(spec32, 2, 0, 1, 1).unwrap();
        let r64 = eng64.multiphase_energy(&p64, &uniform_sigma(2)).unwrap();
        let rows32 = vec![vec![0.0f32, 1.0], vec![1.0, 0.0]];
        let sigma32 = SurfaceTensionMatrix::from_rows(rows32).unwrap();
        let r32 = eng32.multiphase_energy(&p32, &sigma32).unwrap();
        assert!((r32.total as f64 - r64.total).abs() < 1e-4 * r64.total);
    }
}
