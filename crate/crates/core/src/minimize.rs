//! Local minimization of the multiphase energy by single-cell label flips
//! under prescribed exterior data: greedy descent, simulated annealing, the
//! restarted estimate of the constrained two-chamber cell value, and the
//! wetting experiment that nucleates a third phase across a costly
//! interface.

use crate::error::{Error, Result};
use crate::grid::{GridPartition, GridSpec};
use crate::kernel::{EnergyReport, GhostField, KernelConfig, KernelEngine};
use crate::scalar::Real;
use crate::tensions::SurfaceTensionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default relative slack for judging a wetting run against the relaxed
/// interface target.
pub const DEFAULT_WETTING_TOLERANCE: f64 = 0.15;

/// Flip acceptance strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy<T: Real = f64> {
    /// Best strictly-improving label per cell, sweep until stable.
    Greedy,
    /// Metropolis acceptance with a geometric temperature schedule, then a
    /// final greedy phase.
    Annealed { initial_temperature: T, decay: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeConfig<T: Real = f64> {
    strategy: Strategy<T>,
    max_sweeps: usize,
    rng_seed: u64,
}

impl<T: Real> MinimizeConfig<T> {
    pub fn new(strategy: Strategy<T>, max_sweeps: usize, rng_seed: u64) -> Result<Self> {
        if max_sweeps == 0 {
            return Err(Error::Precondition("max_sweeps must be at least 1".into()));
        }
        if let Strategy::Annealed { initial_temperature, decay } = strategy {
            if !initial_temperature.is_finite() || initial_temperature <= T::zero() {
                return Err(Error::Precondition(format!(
                    "initial temperature must be positive, got {initial_temperature}"
                )));
            }
            if !(decay > T::zero() && decay < T::one()) {
                return Err(Error::Precondition(format!(
                    "temperature decay must lie in (0, 1), got {decay}"
                )));
            }
        }
        Ok(Self { strategy, max_sweeps, rng_seed })
    }

    pub fn strategy(&self) -> Strategy<T> {
        self.strategy
    }

    pub fn max_sweeps(&self) -> usize {
        self.max_sweeps
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// One sweep of the search trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepLogRow<T: Real = f64> {
    pub sweep: usize,
    pub accepted: usize,
    pub energy: T,
    /// Combined volume of every chamber beyond the first two.
    pub third_phase_volume: T,
}

/// Result of a search trajectory.
#[derive(Debug, Clone)]
pub struct SearchOutcome<T: Real = f64> {
    pub partition: GridPartition<T>,
    pub report: EnergyReport<T>,
    pub log: Vec<SweepLogRow<T>>,
}

/// Energy change of relabeling one cell, computed from the cell's kernel
/// row and ghost masses; matches full re-evaluation without paying for one.
pub fn flip_delta<T: Real>(
    engine: &KernelEngine<T>,
    p: &GridPartition<T>,
    gf: &GhostField<T>,
    cell: usize,
    new_label: u8,
    sigma: &SurfaceTensionMatrix<T>,
) -> Result<T> {
    check_setup(engine, p, gf, sigma)?;
    if cell >= engine.spec().num_cells() {
        return Err(Error::Precondition(format!("cell index {cell} outside the grid")));
    }
    if new_label as usize >= p.m() {
        return Err(Error::Precondition(format!(
            "label {} outside the {} chambers",
            new_label as usize + 1,
            p.m()
        )));
    }
    let old_label = p.label(cell);
    if old_label == new_label {
        return Ok(T::zero());
    }
    let masses = chamber_masses(engine, p, gf, cell);
    Ok(delta_from_masses(&masses, sigma, old_label, new_label, engine.h_factor()))
}

/// Kernel mass seen by one cell per chamber: interactions with every other
/// box cell of that label plus the cell's ghost masses. The cell itself is
/// excluded.
fn chamber_masses<T: Real>(
    engine: &KernelEngine<T>,
    p: &GridPartition<T>,
    gf: &GhostField<T>,
    cell: usize,
) -> Vec<T> {
    let spec = engine.spec();
    let mc = spec.multi_index(cell);
    let mc = [mc[0] as i64, mc[1] as i64, mc[2] as i64];
    let mut masses = vec![T::zero(); p.m()];
    for c in 0..spec.num_cells() {
        if c == cell {
            continue;
        }
        let mi = spec.multi_index(c);
        let d = [mi[0] as i64 - mc[0], mi[1] as i64 - mc[1], mi[2] as i64 - mc[2]];
        let l = p.label(c) as usize;
        masses[l] = masses[l] + engine.offset_weight(d);
    }
    for (ch, mass) in masses.iter_mut().enumerate() {
        *mass = *mass + gf.at(cell, ch);
    }
    masses
}

/// Sigma-weighted relabeling difference against fixed chamber masses; the
/// zero diagonal of sigma absorbs the old- and new-label terms.
fn delta_from_masses<T: Real>(
    masses: &[T],
    sigma: &SurfaceTensionMatrix<T>,
    old_label: u8,
    new_label: u8,
    h_factor: T,
) -> T {
    let (a, b) = (old_label as usize, new_label as usize);
    let mut acc = T::zero();
    for (ch, &mass) in masses.iter().enumerate() {
        acc = acc + (sigma.get(b, ch) - sigma.get(a, ch)) * mass;
    }
    acc * h_factor
}

fn check_setup<T: Real>(
    engine: &KernelEngine<T>,
    p: &GridPartition<T>,
    gf: &GhostField<T>,
    sigma: &SurfaceTensionMatrix<T>,
) -> Result<()> {
    if p.spec() != engine.spec() {
        return Err(Error::Precondition("partition grid differs from the engine's grid".into()));
    }
    if p.m() != sigma.m() {
        return Err(Error::ChamberMismatch { partition: p.m(), matrix: sigma.m() });
    }
    if gf.m() != p.m() || gf.rule() != p.exterior() {
        return Err(Error::Precondition(
            "ghost field was built for a different exterior rule or chamber count".into(),
        ));
    }
    Ok(())
}

/// Flippable cells: everything except the one-cell ring against the box
/// boundary, which stays frozen so every reachable competitor differs from
/// the start only compactly inside the box.
fn interior_cells<T: Real>(spec: &GridSpec<T>) -> Vec<usize> {
    let nn = spec.cells_per_side();
    let inner = |v: usize| v >= 1 && v + 1 < nn;
    (0..spec.num_cells())
        .filter(|&c| {
            let mi = spec.multi_index(c);
            (0..spec.n()).all(|ax| inner(mi[ax]))
        })
        .collect()
}

fn third_phase_volume<T: Real>(p: &GridPartition<T>) -> T {
    p.volumes().iter().skip(2).copied().sum()
}

/// Local search from a start partition, flipping interior cells only. The
/// trajectory is strictly sequential in lexicographic cell order, so a fixed
/// seed reproduces it bit for bit. Reuses a ghost field built for the
/// start's exterior rule.
pub fn local_search_with<T: Real>(
    engine: &KernelEngine<T>,
    start: &GridPartition<T>,
    sigma: &SurfaceTensionMatrix<T>,
    cfg: &MinimizeConfig<T>,
    gf: &GhostField<T>,
) -> Result<SearchOutcome<T>> {
    check_setup(engine, start, gf, sigma)?;
    let mut p = start.clone();
    let mut energy = engine.multiphase_energy_with(&p, sigma, gf)?.total;
    let interior = interior_cells(engine.spec());
    let mut log = Vec::new();
    let mut sweep = 0usize;
    match cfg.strategy {
        Strategy::Greedy => {
            greedy_phase(
                engine,
                &mut p,
                sigma,
                gf,
                &interior,
                cfg.max_sweeps,
                &mut sweep,
                &mut energy,
                &mut log,
            );
        }
        Strategy::Annealed { initial_temperature, decay } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let mut temperature = initial_temperature;
            let m = p.m();
            for _ in 0..cfg.max_sweeps {
                let mut accepted = 0usize;
                for &cell in &interior {
                    let old_label = p.label(cell);
                    let offset = rng.gen_range(1..m) as u8;
                    let proposal = (old_label + offset) % m as u8;
                    let masses = chamber_masses(engine, &p, gf, cell);
                    let delta =
                        delta_from_masses(&masses, sigma, old_label, proposal, engine.h_factor());
                    let take = if delta <= T::zero() {
                        let _ = rng.gen::<f64>();
                        true
                    } else {
                        let threshold = (-delta / temperature).as_f64().exp();
                        rng.gen::<f64>() < threshold
                    };
                    if take {
                        p.set_label(cell, proposal);
                        energy = energy + delta;
                        accepted += 1;
                    }
                }
                sweep += 1;
                log.push(SweepLogRow {
                    sweep,
                    accepted,
                    energy,
                    third_phase_volume: third_phase_volume(&p),
                });
                temperature = temperature * decay;
            }
            greedy_phase(
                engine,
                &mut p,
                sigma,
                gf,
                &interior,
                cfg.max_sweeps,
                &mut sweep,
                &mut energy,
                &mut log,
            );
        }
    }
    let report = engine.multiphase_energy_with(&p, sigma, gf)?;
    Ok(SearchOutcome { partition: p, report, log })
}

pub fn local_search<T: Real>(
    engine: &KernelEngine<T>,
    start: &GridPartition<T>,
    sigma: &SurfaceTensionMatrix<T>,
    cfg: &MinimizeConfig<T>,
) -> Result<SearchOutcome<T>> {
    let gf = engine.ghost_field(start.exterior(), start.m());
    local_search_with(engine, start, sigma, cfg, &gf)
}

/// Sweeps accepting the best strictly negative relabeling per cell until a
/// sweep accepts nothing or the sweep budget runs out. Zero deltas are
/// rejected so the loop terminates.
#[allow(clippy::too_many_arguments)]
fn greedy_phase<T: Real>(
    engine: &KernelEngine<T>,
    p: &mut GridPartition<T>,
    sigma: &SurfaceTensionMatrix<T>,
    gf: &GhostField<T>,
    interior: &[usize],
    max_sweeps: usize,
    sweep: &mut usize,
    energy: &mut T,
    log: &mut Vec<SweepLogRow<T>>,
) {
    let m = p.m();
    for _ in 0..max_sweeps {
        let mut accepted = 0usize;
        for &cell in interior {
            let old_label = p.label(cell);
            let masses = chamber_masses(engine, p, gf, cell);
            let mut best_label = old_label;
            let mut best_delta = T::zero();
            for candidate in 0..m as u8 {
                if candidate == old_label {
                    continue;
                }
                let delta =
                    delta_from_masses(&masses, sigma, old_label, candidate, engine.h_factor());
                if delta < best_delta {
                    best_delta = delta;
                    best_label = candidate;
                }
            }
            if best_label != old_label {
                p.set_label(cell, best_label);
                *energy = *energy + best_delta;
                accepted += 1;
            }
        }
        *sweep += 1;
        log.push(SweepLogRow {
            sweep: *sweep,
            accepted,
            energy: *energy,
            third_phase_volume: third_phase_volume(p),
        });
        if accepted == 0 {
            return;
        }
    }
}

/// Restarted estimate of the constrained two-chamber cell value between
/// chambers i and j.
#[derive(Debug, Clone)]
pub struct GammaBarEstimate<T: Real = f64> {
    /// Best (1-2s)-scaled energy found across restarts.
    pub best_scaled: T,
    /// (1-2s) sigma_ij P_2s(half space) on the same grid.
    pub halfspace_scaled: T,
    /// best_scaled - halfspace_scaled.
    pub gap: T,
    pub partition: GridPartition<T>,
    pub restarts: usize,
}

/// Minimizes the scaled energy under half-space exterior data carrying i
/// against j. Restart 0 starts from the half-space pair itself; later
/// restarts randomize the flippable interior with seeds derived as
/// seed + restart index, and run in parallel. Requires a triangle-satisfying
/// tension matrix, for which the half space is the conjectured minimizer;
/// the estimate upper-bounds the true discrete minimum.
pub fn gamma_bar_estimate<T: Real>(
    engine: &KernelEngine<T>,
    i: u8,
    j: u8,
    sigma: &SurfaceTensionMatrix<T>,
    cfg: &MinimizeConfig<T>,
    restarts: usize,
) -> Result<GammaBarEstimate<T>> {
    if !sigma.check_triangle() {
        return Err(Error::Precondition(
            "cell-value estimation needs a triangle-satisfying tension matrix".into(),
        ));
    }
    if restarts == 0 {
        return Err(Error::Precondition("need at least one restart".into()));
    }
    let m = sigma.m();
    let axis = engine.spec().n() - 1;
    let halfspace = GridPartition::make_halfspace_pair(*engine.spec(), m, i, j, axis)?;
    let gf = engine.ghost_field(halfspace.exterior(), m);
    let interior = interior_cells(engine.spec());
    let outcomes: Vec<SearchOutcome<T>> = (0..restarts)
        .into_par_iter()
        .map(|idx| {
            let seed = cfg.rng_seed.wrapping_add(idx as u64);
            let start = if idx == 0 {
                halfspace.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = halfspace.clone();
                for &cell in &interior {
                    p.set_label(cell, rng.gen_range(0..m) as u8);
                }
                p
            };
            local_search_with(engine, &start, sigma, &cfg.with_seed(seed), &gf)
        })
        .collect::<Result<_>>()?;
    let mut best = 0usize;
    for (idx, outcome) in outcomes.iter().enumerate() {
        if outcome.report.scaled_total < outcomes[best].report.scaled_total {
            best = idx;
        }
    }
    let one_minus_2s = T::one() - T::of(2.0) * engine.cfg().s();
    let halfspace_scaled = one_minus_2s
        * sigma.get(i as usize, j as usize)
        * engine.perimeter_fractional(&halfspace, i)?;
    let outcome = &outcomes[best];
    Ok(GammaBarEstimate {
        best_scaled: outcome.report.scaled_total,
        halfspace_scaled,
        gap: outcome.report.scaled_total - halfspace_scaled,
        partition: outcome.partition.clone(),
        restarts,
    })
}

/// One wetting run at a fixed exponent and resolution.
#[derive(Debug, Clone, Copy)]
pub struct WettingRow<T: Real = f64> {
    pub s: T,
    pub cells_per_side: usize,
    /// Volume nucleated outside chambers i and j.
    pub third_phase_volume: T,
    /// (1-2s)-scaled energy reached by the search under the raw tensions.
    pub scaled_energy: T,
    /// sigma_ij (1-2s) P_2s(half space): the no-nucleation cost.
    pub pure_interface: T,
    /// relaxed sigma_ij (1-2s) P_2s(half space): the wetted limit target.
    pub relaxed_target: T,
    /// True when nucleation strictly released energy.
    pub success: bool,
}

impl<T: Real> WettingRow<T> {
    /// Whether the reached energy lies in [relaxed_target * (1 - tolerance),
    /// pure_interface]: below the un-wetted cost, but not beyond what the
    /// relaxed tensions allow.
    pub fn within_band(&self, tolerance: T) -> bool {
        self.scaled_energy >= self.relaxed_target * (T::one() - tolerance)
            && self.scaled_energy <= self.pure_interface
    }
}

/// Minimizes from the half-space pair (i, j) under a triangle-violating
/// tension matrix across exponents and resolutions, reporting how much
/// third phase nucleates and how the reached energy compares with the pure
/// interface and with the relaxed target.
#[allow(clippy::too_many_arguments)]
pub fn wetting_experiment<T: Real>(
    dim: usize,
    box_side: T,
    sigma: &SurfaceTensionMatrix<T>,
    i: u8,
    j: u8,
    s_list: &[T],
    n_list: &[usize],
    max_depth: u32,
    trunc_radius: T,
    cfg: &MinimizeConfig<T>,
) -> Result<Vec<WettingRow<T>>> {
    let m = sigma.m();
    if i == j || i as usize >= m || j as usize >= m {
        return Err(Error::Precondition(format!(
            "chambers {} and {} must be distinct and at most {m}",
            i as usize + 1,
            j as usize + 1
        )));
    }
    let relaxed = sigma.relax();
    let sij = sigma.get(i as usize, j as usize);
    let sij_relaxed = relaxed.get(i as usize, j as usize);
    if sij_relaxed >= sij {
        return Err(Error::Precondition(
            "tension matrix satisfies the triangle inequality around this pair; nothing to wet"
                .into(),
        ));
    }
    let mut rows = Vec::with_capacity(s_list.len() * n_list.len());
    for &s in s_list {
        for &nn in n_list {
            let spec = GridSpec::new(dim, nn, box_side)?;
            let engine = KernelEngine::build(spec, KernelConfig::new(s, max_depth, trunc_radius)?)?;
            let axis = dim - 1;
            let halfspace = GridPartition::make_halfspace_pair(spec, m, i, j, axis)?;
            let gf = engine.ghost_field(halfspace.exterior(), m);
            let outcome = local_search_with(&engine, &halfspace, sigma, cfg, &gf)?;
            let one_minus_2s = T::one() - T::of(2.0) * s;
            let halfspace_perimeter = engine.perimeter_fractional(&halfspace, i)?;
            let pure_interface = sij * one_minus_2s * halfspace_perimeter;
            let relaxed_target = sij_relaxed * one_minus_2s * halfspace_perimeter;
            let volumes = outcome.partition.volumes();
            let third_phase_volume = volumes
                .iter()
                .enumerate()
                .filter(|&(ch, _)| ch != i as usize && ch != j as usize)
                .map(|(_, &v)| v)
                .sum();
            let scaled_energy = outcome.report.scaled_total;
            rows.push(WettingRow {
                s,
                cells_per_side: nn,
                third_phase_volume,
                scaled_energy,
                pure_interface,
                relaxed_target,
                success: scaled_energy < pure_interface && third_phase_volume > T::zero(),
            });
        }
    }
    Ok(rows)
}
