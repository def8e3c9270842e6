//! Experiment configuration: line-oriented `key = value` text grouped under
//! `[section]` headers.
//!
//! Blank lines and lines starting with `#` are ignored. Chamber labels,
//! axes, and laminate chamber lists are 1-based in files, matching the
//! partition and tension text formats; they are converted to 0-based
//! indices on load. Relative paths resolve against the directory of the
//! file that names them.
//!
//! Sections by experiment kind (`[output]` is always allowed):
//!
//! | kind           | sections                                                  |
//! |----------------|-----------------------------------------------------------|
//! | relax          | experiment, tensions                                       |
//! | energy         | experiment, tensions, kernel, partition, grid unless file  |
//! | gamma-scan     | experiment, tensions, grid, kernel (lists), partition      |
//! | mincut-replace | like energy; partition exterior must be a half-space pair  |
//! | minimize       | like energy plus minimize                                  |
//! | wetting        | experiment, tensions, grid, kernel (lists), partition pair, minimize |
//! | gamma-bar      | experiment, tensions, grid, kernel, partition pair, minimize (restarts) |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fracperim_core::grid::LaminatePath;
use fracperim_core::minimize::{MinimizeConfig, Strategy};
use fracperim_core::{Config as CoreKernelConfig, Grid as GridSpec, Partition, Tensions};

use crate::error::{LabError, Result};

/// Default subdivision depth when `[kernel] max_depth` is omitted.
pub const DEFAULT_MAX_DEPTH: u32 = 6;
/// Default truncation radius is this multiple of the box side.
pub const DEFAULT_TRUNC_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Relax,
    Energy,
    GammaScan,
    MincutReplace,
    Minimize,
    Wetting,
    GammaBar,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Relax,
        ExperimentKind::Energy,
        ExperimentKind::GammaScan,
        ExperimentKind::MincutReplace,
        ExperimentKind::Minimize,
        ExperimentKind::Wetting,
        ExperimentKind::GammaBar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Relax => "relax",
            ExperimentKind::Energy => "energy",
            ExperimentKind::GammaScan => "gamma-scan",
            ExperimentKind::MincutReplace => "mincut-replace",
            ExperimentKind::Minimize => "minimize",
            ExperimentKind::Wetting => "wetting",
            ExperimentKind::GammaBar => "gamma-bar",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `[grid]` section, resolved. Absent when the grid comes from a partition
/// file and for plain relaxation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub dim: usize,
    /// Absent for scan experiments, which take resolutions from `n_list`.
    pub cells_per_side: Option<usize>,
    pub box_side: f64,
}

/// `[kernel]` section, resolved: either a single exponent or scan lists,
/// with the depth and truncation radius defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSettings {
    pub s: Option<f64>,
    pub s_list: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    pub max_depth: u32,
    pub trunc_radius: f64,
}

/// `[partition]` section, resolved. Chambers and axes are 0-based here.
#[derive(Debug, Clone)]
pub enum PartitionSettings {
    Halfspace {
        i: u8,
        j: u8,
        axis: usize,
    },
    Laminate {
        chambers: Vec<u8>,
        q: u32,
        axis: usize,
    },
    /// Parsed content of a partition file; the grid comes from its header.
    File {
        partition: Partition,
    },
    /// Chamber pair for experiments that build their own half-space start.
    Pair {
        i: u8,
        j: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategySettings {
    Greedy,
    Annealed { initial_temperature: f64, decay: f64 },
}

/// `[minimize]` section, resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeSettings {
    pub strategy: StrategySettings,
    pub max_sweeps: usize,
    pub seed: u64,
    /// Randomized restarts; only meaningful for gamma-bar runs.
    pub restarts: Option<usize>,
}

impl MinimizeSettings {
    pub fn to_core(&self) -> Result<MinimizeConfig<f64>> {
        let strategy = match self.strategy {
            StrategySettings::Greedy => Strategy::Greedy,
            StrategySettings::Annealed { initial_temperature, decay } => {
                Strategy::Annealed { initial_temperature, decay }
            }
        };
        Ok(MinimizeConfig::new(strategy, self.max_sweeps, self.seed)?)
    }
}

/// A fully resolved experiment: every file reference read, every default
/// filled in, every numeric range checked against module preconditions.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: Option<GridSettings>,
    pub kernel: Option<KernelSettings>,
    pub tensions: Tensions,
    pub partition: Option<PartitionSettings>,
    pub minimize: Option<MinimizeSettings>,
}

/// Resolved configuration plus the output directory named in the file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub out_dir: Option<PathBuf>,
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<Resolved> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let sections = parse_sections(&text)?;
    resolve(sections, &base, seed_override)
}

// ---------------------------------------------------------------------------
// Raw section parsing

#[derive(Debug, Clone)]
pub(crate) struct RawEntry {
    pub(crate) key: String,
    pub(crate) value: String,
    pub(crate) line: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct RawSection {
    pub(crate) name: String,
    pub(crate) line: usize,
    pub(crate) entries: Vec<RawEntry>,
}

fn config_err(line: usize, msg: impl fmt::Display) -> LabError {
    LabError::Config(format!("line {line}: {msg}"))
}

pub(crate) fn parse_sections(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| config_err(line, "section header is missing the closing ']'"))?
                .trim();
            if name.is_empty() {
                return Err(config_err(line, "empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(config_err(line, format!("duplicate section [{name}]")));
            }
            sections.push(RawSection { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("expected 'key = value', got '{trimmed}'")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(config_err(line, "empty key before '='"));
        }
        let section = sections.last_mut().ok_or_else(|| {
            config_err(line, format!("field '{key}' appears before any [section]"))
        })?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(config_err(line, format!("duplicate field '{key}' in [{}]", section.name)));
        }
        section.entries.push(RawEntry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok(sections)
}

// ---------------------------------------------------------------------------
// Typed field extraction

struct Fields {
    section: String,
    line: usize,
    entries: Vec<RawEntry>,
    used: Vec<bool>,
}

impl Fields {
    fn new(section: RawSection) -> Self {
        let used = vec![false; section.entries.len()];
        Self { section: section.name, line: section.line, entries: section.entries, used }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let idx = self.entries.iter().position(|e| e.key == key)?;
        self.used[idx] = true;
        let e = &self.entries[idx];
        Some((e.value.clone(), e.line))
    }

    fn req(&mut self, key: &str) -> Result<(String, usize)> {
        self.take(key).ok_or_else(|| {
            config_err(self.line, format!("[{}] is missing field '{key}'", self.section))
        })
    }

    fn parse_scalar<T: FromStr>(
        &self,
        key: &str,
        value: &str,
        line: usize,
        what: &str,
    ) -> Result<T> {
        value.parse().map_err(|_| {
            config_err(
                line,
                format!("[{}] field '{key}': expected {what}, got '{value}'", self.section),
            )
        })
    }

    fn req_str(&mut self, key: &str) -> Result<(String, usize)> {
        self.req(key)
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<(f64, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => Ok(Some((self.parse_scalar(key, &v, line, "a number")?, line))),
        }
    }

    fn req_f64(&mut self, key: &str) -> Result<(f64, usize)> {
        let (v, line) = self.req(key)?;
        Ok((self.parse_scalar(key, &v, line, "a number")?, line))
    }

    fn opt_usize(&mut self, key: &str) -> Result<Option<(usize, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => {
                Ok(Some((self.parse_scalar(key, &v, line, "a nonnegative integer")?, line)))
            }
        }
    }

    fn req_usize(&mut self, key: &str) -> Result<(usize, usize)> {
        let (v, line) = self.req(key)?;
        Ok((self.parse_scalar(key, &v, line, "a nonnegative integer")?, line))
    }

    fn opt_u32(&mut self, key: &str) -> Result<Option<(u32, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => {
                Ok(Some((self.parse_scalar(key, &v, line, "a nonnegative integer")?, line)))
            }
        }
    }

    fn req_u32(&mut self, key: &str) -> Result<(u32, usize)> {
        let (v, line) = self.req(key)?;
        Ok((self.parse_scalar(key, &v, line, "a nonnegative integer")?, line))
    }

    fn opt_u64(&mut self, key: &str) -> Result<Option<(u64, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => {
                Ok(Some((self.parse_scalar(key, &v, line, "a nonnegative integer")?, line)))
            }
        }
    }

    fn req_f64_list(&mut self, key: &str) -> Result<(Vec<f64>, usize)> {
        let (v, line) = self.req(key)?;
        let mut out = Vec::new();
        for tok in v.split(',') {
            out.push(self.parse_scalar(key, tok.trim(), line, "a comma-separated number list")?);
        }
        Ok((out, line))
    }

    fn req_usize_list(&mut self, key: &str) -> Result<(Vec<usize>, usize)> {
        let (v, line) = self.req(key)?;
        let mut out = Vec::new();
        for tok in v.split(',') {
            out.push(self.parse_scalar(key, tok.trim(), line, "a comma-separated integer list")?);
        }
        Ok((out, line))
    }

    /// 1-based chamber label, converted to 0-based and checked against m.
    fn req_chamber(&mut self, key: &str, m: usize) -> Result<(u8, usize)> {
        let (v, line) = self.req_usize(key)?;
        if v < 1 || v > m {
            return Err(config_err(
                line,
                format!("[{}] field '{key}': chamber {v} outside 1..{m}", self.section),
            ));
        }
        Ok(((v - 1) as u8, line))
    }

    fn forbid(&mut self, key: &str, why: &str) -> Result<()> {
        if let Some((_, line)) = self.take(key) {
            return Err(config_err(line, format!("[{}] field '{key}' {why}", self.section)));
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        for (idx, used) in self.used.iter().enumerate() {
            if !used {
                let e = &self.entries[idx];
                return Err(config_err(
                    e.line,
                    format!("unknown field '{}' in [{}]", e.key, self.section),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Section resolution

struct Sections {
    by_name: BTreeMap<String, RawSection>,
}

impl Sections {
    fn new(sections: Vec<RawSection>) -> Self {
        let by_name = sections.into_iter().map(|s| (s.name.clone(), s)).collect();
        Self { by_name }
    }

    fn take(&mut self, name: &str) -> Option<Fields> {
        self.by_name.remove(name).map(Fields::new)
    }

    fn req(&mut self, name: &str) -> Result<Fields> {
        self.take(name)
            .ok_or_else(|| LabError::Config(format!("missing required section [{name}]")))
    }

    fn finish(self, kind: ExperimentKind) -> Result<()> {
        const KNOWN: [&str; 7] =
            ["experiment", "grid", "kernel", "tensions", "partition", "minimize", "output"];
        if let Some(sec) = self.by_name.values().min_by_key(|s| s.line) {
            let msg = if KNOWN.contains(&sec.name.as_str()) {
                format!("section [{}] does not apply to experiment kind '{kind}'", sec.name)
            } else {
                format!("unknown section [{}]", sec.name)
            };
            return Err(config_err(sec.line, msg));
        }
        Ok(())
    }
}

fn module_config_err(line: usize, e: fracperim_core::Error) -> LabError {
    config_err(line, e)
}

fn resolve_tensions(mut fields: Fields, base: &Path) -> Result<Tensions> {
    let file = fields.take("file");
    let rows = fields.take("rows");
    let matrix = match (file, rows) {
        (Some((path, line)), None) => {
            let full = base.join(&path);
            let text = std::fs::read_to_string(&full).map_err(|e| {
                config_err(line, format!("cannot read tension matrix {}: {e}", full.display()))
            })?;
            Tensions::from_text(&text)
                .map_err(|e| config_err(line, format!("tension matrix {}: {e}", full.display())))?
        }
        (None, Some((text, line))) => {
            let mut rows = Vec::new();
            for row_text in text.split(';') {
                let mut row = Vec::new();
                for tok in row_text.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| {
                        config_err(line, format!("[tensions] field 'rows': bad entry '{tok}'"))
                    })?;
                    row.push(v);
                }
                rows.push(row);
            }
            Tensions::from_rows(rows).map_err(|e| module_config_err(line, e))?
        }
        (Some(_), Some((_, line))) => {
            return Err(config_err(line, "[tensions] takes 'file' or 'rows', not both"));
        }
        (None, None) => {
            return Err(config_err(fields.line, "[tensions] needs either 'file' or 'rows'"));
        }
    };
    fields.finish()?;
    Ok(matrix)
}

#[derive(Clone, Copy, PartialEq)]
enum NUse {
    Required,
    Forbidden,
}

fn resolve_grid(mut fields: Fields, n_use: NUse) -> Result<GridSettings> {
    let (dim, dim_line) = fields.req_usize("dim")?;
    let (box_side, box_line) = fields.req_f64("box_side")?;
    let cells_per_side = match n_use {
        NUse::Required => {
            let (n, line) = fields.req_usize("cells_per_side")?;
            GridSpec::new(dim, n, box_side).map_err(|e| module_config_err(line, e))?;
            Some(n)
        }
        NUse::Forbidden => {
            fields.forbid(
                "cells_per_side",
                "does not apply to scan experiments; resolutions come from [kernel] n_list",
            )?;
            // probe with the smallest legal resolution to validate dim and box side
            GridSpec::new(dim, 2, box_side)
                .map_err(|e| module_config_err(dim_line.max(box_line), e))?;
            None
        }
    };
    fields.finish()?;
    Ok(GridSettings { dim, cells_per_side, box_side })
}

/// Truncation radius must span whole cells for every resolution in play.
fn check_trunc_multiple(trunc_radius: f64, box_side: f64, n: usize, line: usize) -> Result<()> {
    let ratio = trunc_radius * n as f64 / box_side;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(config_err(
            line,
            format!(
                "trunc_radius {trunc_radius} is not a whole multiple of the cell size at N={n}"
            ),
        ));
    }
    Ok(())
}

fn resolve_kernel_single(mut fields: Fields, grid: &GridSettings) -> Result<KernelSettings> {
    for key in ["s_list", "n_list"] {
        fields.forbid(key, "only applies to scan experiments")?;
    }
    let (s, s_line) = fields.req_f64("s")?;
    let max_depth = fields.opt_u32("max_depth")?.map(|(v, _)| v).unwrap_or(DEFAULT_MAX_DEPTH);
    let (trunc_radius, trunc_line) = match fields.opt_f64("trunc_radius")? {
        Some((v, line)) => (v, line),
        None => (DEFAULT_TRUNC_FACTOR * grid.box_side, s_line),
    };
    CoreKernelConfig::new(s, max_depth, trunc_radius).map_err(|e| module_config_err(s_line, e))?;
    if let Some(n) = grid.cells_per_side {
        check_trunc_multiple(trunc_radius, grid.box_side, n, trunc_line)?;
    }
    fields.finish()?;
    Ok(KernelSettings { s: Some(s), s_list: None, n_list: None, max_depth, trunc_radius })
}

fn resolve_kernel_scan(mut fields: Fields, grid: &GridSettings) -> Result<KernelSettings> {
    fields.forbid("s", "does not apply to scan experiments; use 's_list'")?;
    let (s_list, s_line) = fields.req_f64_list("s_list")?;
    let (n_list, n_line) = fields.req_usize_list("n_list")?;
    let max_depth = fields.opt_u32("max_depth")?.map(|(v, _)| v).unwrap_or(DEFAULT_MAX_DEPTH);
    let (trunc_radius, trunc_line) = match fields.opt_f64("trunc_radius")? {
        Some((v, line)) => (v, line),
        None => (DEFAULT_TRUNC_FACTOR * grid.box_side, s_line),
    };
    for w in s_list.windows(2) {
        if w[1] <= w[0] {
            return Err(config_err(s_line, "[kernel] field 's_list' must be strictly increasing"));
        }
    }
    for &s in &s_list {
        CoreKernelConfig::new(s, max_depth, trunc_radius)
            .map_err(|e| module_config_err(s_line, e))?;
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(config_err(n_line, "[kernel] field 'n_list' must be strictly increasing"));
        }
    }
    for &n in &n_list {
        GridSpec::new(grid.dim, n, grid.box_side).map_err(|e| module_config_err(n_line, e))?;
        check_trunc_multiple(trunc_radius, grid.box_side, n, trunc_line)?;
    }
    fields.finish()?;
    Ok(KernelSettings {
        s: None,
        s_list: Some(s_list),
        n_list: Some(n_list),
        max_depth,
        trunc_radius,
    })
}

fn resolve_axis(fields: &mut Fields, dim: usize) -> Result<usize> {
    match fields.opt_usize("axis")? {
        None => Ok(dim - 1),
        Some((axis, line)) => {
            if axis < 1 || axis > dim {
                return Err(config_err(
                    line,
                    format!("[partition] field 'axis': axis {axis} outside 1..{dim}"),
                ));
            }
            Ok(axis - 1)
        }
    }
}

/// Full partition source for energy-style experiments. Generators need the
/// grid section; a partition file replaces it.
fn resolve_partition_full(
    sections: &mut Sections,
    base: &Path,
    m: usize,
) -> Result<(PartitionSettings, Option<GridSettings>)> {
    let mut fields = sections.req("partition")?;
    let (kind, kind_line) = fields.req_str("kind")?;
    match kind.as_str() {
        "file" => {
            if let Some(grid) = sections.take("grid") {
                return Err(config_err(
                    grid.line,
                    "[grid] conflicts with a partition file; the file header fixes the grid",
                ));
            }
            let (path, line) = fields.req("file")?;
            let full = base.join(&path);
            let text = std::fs::read_to_string(&full).map_err(|e| {
                config_err(line, format!("cannot read partition {}: {e}", full.display()))
            })?;
            let partition = Partition::deserialize(&text)
                .map_err(|e| config_err(line, format!("partition {}: {e}", full.display())))?;
            if partition.m() != m {
                return Err(config_err(
                    line,
                    format!(
                        "partition has {} chambers but the tension matrix has {m}",
                        partition.m()
                    ),
                ));
            }
            fields.finish()?;
            Ok((PartitionSettings::File { partition }, None))
        }
        "halfspace" => {
            let grid = resolve_grid(sections.req("grid")?, NUse::Required)?;
            let (i, _) = fields.req_chamber("i", m)?;
            let (j, j_line) = fields.req_chamber("j", m)?;
            if i == j {
                return Err(config_err(j_line, "[partition] chambers i and j must differ"));
            }
            let axis = resolve_axis(&mut fields, grid.dim)?;
            fields.finish()?;
            Ok((PartitionSettings::Halfspace { i, j, axis }, Some(grid)))
        }
        "laminate" => {
            let grid = resolve_grid(sections.req("grid")?, NUse::Required)?;
            let (raw, line) = fields.req_usize_list("chambers")?;
            let mut chambers = Vec::with_capacity(raw.len());
            for v in raw {
                if v < 1 || v > m {
                    return Err(config_err(
                        line,
                        format!("[partition] field 'chambers': chamber {v} outside 1..{m}"),
                    ));
                }
                chambers.push((v - 1) as u8);
            }
            let (q, q_line) = fields.req_u32("q")?;
            LaminatePath::new(chambers.clone(), q).map_err(|e| module_config_err(q_line, e))?;
            let axis = resolve_axis(&mut fields, grid.dim)?;
            fields.finish()?;
            Ok((PartitionSettings::Laminate { chambers, q, axis }, Some(grid)))
        }
        other => Err(config_err(
            kind_line,
            format!("[partition] kind '{other}' is not one of halfspace, laminate, file"),
        )),
    }
}

/// Generator-only partition source for scans, which rebuild it per resolution.
fn resolve_partition_generator(
    sections: &mut Sections,
    m: usize,
    dim: usize,
) -> Result<PartitionSettings> {
    let mut fields = sections.req("partition")?;
    let (kind, kind_line) = fields.req_str("kind")?;
    match kind.as_str() {
        "halfspace" => {
            let (i, _) = fields.req_chamber("i", m)?;
            let (j, j_line) = fields.req_chamber("j", m)?;
            if i == j {
                return Err(config_err(j_line, "[partition] chambers i and j must differ"));
            }
            let axis = resolve_axis(&mut fields, dim)?;
            fields.finish()?;
            Ok(PartitionSettings::Halfspace { i, j, axis })
        }
        "laminate" => {
            let (raw, line) = fields.req_usize_list("chambers")?;
            let mut chambers = Vec::with_capacity(raw.len());
            for v in raw {
                if v < 1 || v > m {
                    return Err(config_err(
                        line,
                        format!("[partition] field 'chambers': chamber {v} outside 1..{m}"),
                    ));
                }
                chambers.push((v - 1) as u8);
            }
            let (q, q_line) = fields.req_u32("q")?;
            LaminatePath::new(chambers.clone(), q).map_err(|e| module_config_err(q_line, e))?;
            let axis = resolve_axis(&mut fields, dim)?;
            fields.finish()?;
            Ok(PartitionSettings::Laminate { chambers, q, axis })
        }
        other => Err(config_err(
            kind_line,
            format!(
                "[partition] kind '{other}' must be a generator (halfspace or laminate) for scans"
            ),
        )),
    }
}

/// Chamber pair for experiments that construct their own half-space start.
fn resolve_partition_pair(sections: &mut Sections, m: usize) -> Result<PartitionSettings> {
    let mut fields = sections.req("partition")?;
    let (i, _) = fields.req_chamber("i", m)?;
    let (j, j_line) = fields.req_chamber("j", m)?;
    if i == j {
        return Err(config_err(j_line, "[partition] chambers i and j must differ"));
    }
    fields.finish()?;
    Ok(PartitionSettings::Pair { i, j })
}

fn resolve_minimize(
    mut fields: Fields,
    allow_restarts: bool,
    seed_override: Option<u64>,
) -> Result<MinimizeSettings> {
    let (strat, strat_line) = fields.req_str("strategy")?;
    let strategy = match strat.as_str() {
        "greedy" => {
            for key in ["initial_temperature", "decay"] {
                fields.forbid(key, "only applies to strategy = annealed")?;
            }
            StrategySettings::Greedy
        }
        "annealed" => {
            let (initial_temperature, _) = fields.req_f64("initial_temperature")?;
            let (decay, _) = fields.req_f64("decay")?;
            StrategySettings::Annealed { initial_temperature, decay }
        }
        other => {
            return Err(config_err(
                strat_line,
                format!("[minimize] strategy '{other}' is not one of greedy, annealed"),
            ));
        }
    };
    let (max_sweeps, sweeps_line) = fields.req_usize("max_sweeps")?;
    let seed = match fields.opt_u64("seed")? {
        Some((v, _)) => v,
        None => 0,
    };
    let seed = seed_override.unwrap_or(seed);
    let restarts = if allow_restarts {
        Some(fields.req_usize("restarts")?.0)
    } else {
        fields.forbid("restarts", "only applies to gamma-bar experiments")?;
        None
    };
    fields.finish()?;
    let settings = MinimizeSettings { strategy, max_sweeps, seed, restarts };
    settings.to_core().map_err(|e| match e {
        LabError::Module(m) => module_config_err(sweeps_line, m),
        other => other,
    })?;
    Ok(settings)
}

pub(crate) fn resolve(
    sections: Vec<RawSection>,
    base: &Path,
    seed_override: Option<u64>,
) -> Result<Resolved> {
    let mut sections = Sections::new(sections);

    let mut experiment = sections.req("experiment")?;
    let (kind_name, kind_line) = experiment.req_str("kind")?;
    let kind = ExperimentKind::from_name(&kind_name).ok_or_else(|| {
        let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        config_err(
            kind_line,
            format!("unknown experiment kind '{kind_name}'; expected one of {}", names.join(", ")),
        )
    })?;
    experiment.finish()?;

    let out_dir = match sections.take("output") {
        None => None,
        Some(mut fields) => {
            let (dir, _) = fields.req_str("dir")?;
            fields.finish()?;
            Some(base.join(dir))
        }
    };

    let tensions = resolve_tensions(sections.req("tensions")?, base)?;
    let m = tensions.m();

    let config = match kind {
        ExperimentKind::Relax => ExperimentConfig {
            kind,
            grid: None,
            kernel: None,
            tensions,
            partition: None,
            minimize: None,
        },
        ExperimentKind::Energy | ExperimentKind::MincutReplace | ExperimentKind::Minimize => {
            let (partition, grid) = resolve_partition_full(&mut sections, base, m)?;
            if kind == ExperimentKind::MincutReplace {
                check_halfpair_exterior(&partition)?;
            }
            let grid_for_kernel = grid.clone().unwrap_or_else(|| {
                let PartitionSettings::File { partition: ref p } = partition else {
                    unreachable!("generator partitions always carry a grid section");
                };
                GridSettings {
                    dim: p.spec().n(),
                    cells_per_side: Some(p.spec().cells_per_side()),
                    box_side: p.spec().box_side(),
                }
            });
            let kernel = resolve_kernel_single(sections.req("kernel")?, &grid_for_kernel)?;
            let minimize = if kind == ExperimentKind::Minimize {
                Some(resolve_minimize(sections.req("minimize")?, false, seed_override)?)
            } else {
                None
            };
            ExperimentConfig {
                kind,
                grid,
                kernel: Some(kernel),
                tensions,
                partition: Some(partition),
                minimize,
            }
        }
        ExperimentKind::GammaScan | ExperimentKind::Wetting => {
            let grid = resolve_grid(sections.req("grid")?, NUse::Forbidden)?;
            let kernel = resolve_kernel_scan(sections.req("kernel")?, &grid)?;
            let partition = if kind == ExperimentKind::GammaScan {
                resolve_partition_generator(&mut sections, m, grid.dim)?
            } else {
                resolve_partition_pair(&mut sections, m)?
            };
            let minimize = if kind == ExperimentKind::Wetting {
                Some(resolve_minimize(sections.req("minimize")?, false, seed_override)?)
            } else {
                None
            };
            ExperimentConfig {
                kind,
                grid: Some(grid),
                kernel: Some(kernel),
                tensions,
                partition: Some(partition),
                minimize,
            }
        }
        ExperimentKind::GammaBar => {
            let grid = resolve_grid(sections.req("grid")?, NUse::Required)?;
            let kernel = resolve_kernel_single(sections.req("kernel")?, &grid)?;
            let partition = resolve_partition_pair(&mut sections, m)?;
            let minimize = resolve_minimize(sections.req("minimize")?, true, seed_override)?;
            ExperimentConfig {
                kind,
                grid: Some(grid),
                kernel: Some(kernel),
                tensions,
                partition: Some(partition),
                minimize: Some(minimize),
            }
        }
    };

    if seed_override.is_some() && config.minimize.is_none() {
        return Err(LabError::Config(format!(
            "--seed does not apply to experiment kind '{kind}'; it has no [minimize] section"
        )));
    }

    sections.finish(kind)?;
    Ok(Resolved { config, out_dir })
}

fn check_halfpair_exterior(partition: &PartitionSettings) -> Result<()> {
    match partition {
        PartitionSettings::Halfspace { .. } | PartitionSettings::Laminate { .. } => Ok(()),
        PartitionSettings::File { partition } => match partition.exterior() {
            fracperim_core::grid::ExteriorRule::HalfPair { .. } => Ok(()),
            other => Err(LabError::Config(format!(
                "mincut-replace needs a half-space pair exterior, partition file has {other:?}"
            ))),
        },
        PartitionSettings::Pair { .. } => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Canonical echo, used by manifests

impl ExperimentConfig {
    /// Canonical section text that resolves back to this configuration.
    /// File references are replaced by their resolved content: tension rows
    /// are inlined and a file partition points at the copy the run writes
    /// next to its manifest.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        out.push_str("[experiment]\n");
        out.push_str(&format!("kind = {}\n", self.kind));
        if let Some(grid) = &self.grid {
            out.push_str("\n[grid]\n");
            out.push_str(&format!("dim = {}\n", grid.dim));
            if let Some(n) = grid.cells_per_side {
                out.push_str(&format!("cells_per_side = {n}\n"));
            }
            out.push_str(&format!("box_side = {}\n", grid.box_side));
        }
        if let Some(kernel) = &self.kernel {
            out.push_str("\n[kernel]\n");
            if let Some(s) = kernel.s {
                out.push_str(&format!("s = {s}\n"));
            }
            if let Some(s_list) = &kernel.s_list {
                out.push_str(&format!("s_list = {}\n", join_displayed(s_list)));
            }
            if let Some(n_list) = &kernel.n_list {
                out.push_str(&format!("n_list = {}\n", join_displayed(n_list)));
            }
            out.push_str(&format!("max_depth = {}\n", kernel.max_depth));
            out.push_str(&format!("trunc_radius = {}\n", kernel.trunc_radius));
        }
        out.push_str("\n[tensions]\n");
        let rows: Vec<String> = self
            .tensions
            .rows()
            .iter()
            .map(|row| row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" "))
            .collect();
        out.push_str(&format!("rows = {}\n", rows.join(" ; ")));
        if let Some(partition) = &self.partition {
            out.push_str("\n[partition]\n");
            match partition {
                PartitionSettings::Halfspace { i, j, axis } => {
                    out.push_str("kind = halfspace\n");
                    out.push_str(&format!("i = {}\n", *i as usize + 1));
                    out.push_str(&format!("j = {}\n", *j as usize + 1));
                    out.push_str(&format!("axis = {}\n", axis + 1));
                }
                PartitionSettings::Laminate { chambers, q, axis } => {
                    out.push_str("kind = laminate\n");
                    let listed: Vec<String> =
                        chambers.iter().map(|&c| format!("{}", c as usize + 1)).collect();
                    out.push_str(&format!("chambers = {}\n", listed.join(", ")));
                    out.push_str(&format!("q = {q}\n"));
                    out.push_str(&format!("axis = {}\n", axis + 1));
                }
                PartitionSettings::File { .. } => {
                    out.push_str("kind = file\n");
                    out.push_str(&format!("file = {START_PARTITION_FILE}\n"));
                }
                PartitionSettings::Pair { i, j } => {
                    out.push_str(&format!("i = {}\n", *i as usize + 1));
                    out.push_str(&format!("j = {}\n", *j as usize + 1));
                }
            }
        }
        if let Some(minimize) = &self.minimize {
            out.push_str("\n[minimize]\n");
            match minimize.strategy {
                StrategySettings::Greedy => out.push_str("strategy = greedy\n"),
                StrategySettings::Annealed { initial_temperature, decay } => {
                    out.push_str("strategy = annealed\n");
                    out.push_str(&format!("initial_temperature = {initial_temperature}\n"));
                    out.push_str(&format!("decay = {decay}\n"));
                }
            }
            out.push_str(&format!("max_sweeps = {}\n", minimize.max_sweeps));
            out.push_str(&format!("seed = {}\n", minimize.seed));
            if let Some(restarts) = minimize.restarts {
                out.push_str(&format!("restarts = {restarts}\n"));
            }
        }
        out
    }
}

/// Name under which a run snapshots a partition loaded from a file.
pub const START_PARTITION_FILE: &str = "start_partition.txt";

fn join_displayed<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ")
}
