//! Experiment execution: computes every artifact in memory, then writes the
//! batch plus a manifest, so failed runs leave no partial outputs.

use std::path::Path;

use fracperim_core::flowcut::{build_network, max_flow, min_cut, replace};
use fracperim_core::grid::{ExteriorRule, LaminatePath};
use fracperim_core::kernel::gamma_scan;
use fracperim_core::minimize::{gamma_bar_estimate, local_search, wetting_experiment};
use fracperim_core::tensions::pair_order;
use fracperim_core::{Config as KernelConfig, Engine, Grid, Partition};

use crate::config::{
    ExperimentConfig, ExperimentKind, KernelSettings, PartitionSettings, START_PARTITION_FILE,
};
use crate::error::{io_err, LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MANIFEST_FORMAT: u32 = 1;

/// 17 significant digits; round-trips any finite f64.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(headers: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(headers).expect("in-memory write");
        Self { writer }
    }

    fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("csv output is ascii")
    }
}

/// Runs the experiment and returns (file name, content) pairs in the order
/// they will be written.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    match cfg.kind {
        ExperimentKind::Relax => run_relax(cfg),
        ExperimentKind::Energy => run_energy(cfg),
        ExperimentKind::GammaScan => run_gamma_scan(cfg),
        ExperimentKind::MincutReplace => run_mincut_replace(cfg),
        ExperimentKind::Minimize => run_minimize(cfg),
        ExperimentKind::Wetting => run_wetting(cfg),
        ExperimentKind::GammaBar => run_gamma_bar(cfg),
    }
}

/// Executes, then persists all artifacts and the manifest under `out_dir`.
/// Returns the written file names, manifest last.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<String>> {
    let artifacts = execute(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    for (name, content) in &artifacts {
        let path = out_dir.join(name);
        std::fs::write(&path, content).map_err(|e| io_err(&path, e))?;
    }
    let manifest = render_manifest(cfg, &artifacts);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, &manifest).map_err(|e| io_err(&manifest_path, e))?;
    let mut names: Vec<String> = artifacts.into_iter().map(|(name, _)| name).collect();
    names.push(MANIFEST_FILE.to_string());
    Ok(names)
}

/// Manifest text: format and version header, the resolved config echo, and
/// the artifact list. Re-resolving the embedded config reproduces the run.
pub fn render_manifest(cfg: &ExperimentConfig, artifacts: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str("[manifest]\n");
    out.push_str(&format!("format = {MANIFEST_FORMAT}\n"));
    out.push_str(&format!("version = {}\n\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&cfg.echo());
    out.push_str("\n[artifacts]\n");
    let names: Vec<&str> = artifacts.iter().map(|(name, _)| name.as_str()).collect();
    out.push_str(&format!("files = {}\n", names.join(", ")));
    out
}

// ---------------------------------------------------------------------------
// Shared assembly

fn kernel_config(kernel: &KernelSettings) -> Result<KernelConfig> {
    let s = kernel.s.ok_or_else(|| {
        LabError::Config("experiment needs a single exponent 's' in [kernel]".into())
    })?;
    Ok(KernelConfig::new(s, kernel.max_depth, kernel.trunc_radius)?)
}

/// Builds the engine and the start partition for single-resolution kinds.
fn engine_and_partition(cfg: &ExperimentConfig) -> Result<(Engine, Partition)> {
    let kernel = cfg.kernel.as_ref().expect("resolved config carries kernel settings");
    let m = cfg.tensions.m();
    let partition = match cfg.partition.as_ref().expect("resolved config carries a partition") {
        PartitionSettings::File { partition } => partition.clone(),
        PartitionSettings::Halfspace { i, j, axis } => {
            let spec = grid_spec(cfg)?;
            Partition::make_halfspace_pair(spec, m, *i, *j, *axis)?
        }
        PartitionSettings::Laminate { chambers, q, axis } => {
            let spec = grid_spec(cfg)?;
            let path = LaminatePath::new(chambers.clone(), *q)?;
            Partition::make_laminate(spec, m, &path, *axis)?
        }
        PartitionSettings::Pair { i, j } => {
            let spec = grid_spec(cfg)?;
            Partition::make_halfspace_pair(spec, m, *i, *j, spec.n() - 1)?
        }
    };
    let engine = Engine::build(*partition.spec(), kernel_config(kernel)?)?;
    Ok((engine, partition))
}

fn grid_spec(cfg: &ExperimentConfig) -> Result<Grid> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| LabError::Config("experiment needs a [grid] section".into()))?;
    let n = grid
        .cells_per_side
        .ok_or_else(|| LabError::Config("experiment needs 'cells_per_side' in [grid]".into()))?;
    Ok(Grid::new(grid.dim, n, grid.box_side)?)
}

/// Snapshot of a file-loaded start partition, so the manifest stays
/// self-contained; generator partitions are already pinned by the config.
fn start_snapshot(cfg: &ExperimentConfig) -> Option<(String, String)> {
    match cfg.partition.as_ref() {
        Some(PartitionSettings::File { partition }) => {
            Some((START_PARTITION_FILE.to_string(), partition.serialize()))
        }
        _ => None,
    }
}

fn third_phase_volume(p: &Partition) -> f64 {
    p.volumes().iter().skip(2).sum()
}

// ---------------------------------------------------------------------------
// Experiment bodies

fn run_relax(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let relaxed = cfg.tensions.relax();
    let m = cfg.tensions.m();
    let mut csv = Csv::new(&["i", "j", "sigma", "sigma_bar"]);
    for (i, j) in pair_order(m) {
        csv.row([
            (i + 1).to_string(),
            (j + 1).to_string(),
            fmt_float(cfg.tensions.get(i, j)),
            fmt_float(relaxed.get(i, j)),
        ]);
    }
    Ok(vec![
        ("sigma_bar.txt".to_string(), relaxed.to_text()),
        ("relax.csv".to_string(), csv.finish()),
    ])
}

fn run_energy(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let (engine, partition) = engine_and_partition(cfg)?;
    let report = engine.multiphase_energy(&partition, &cfg.tensions)?;
    let mut csv =
        Csv::new(&["s", "cells_per_side", "internal", "boundary", "total", "scaled_total"]);
    csv.row([
        fmt_float(engine.cfg().s()),
        engine.spec().cells_per_side().to_string(),
        fmt_float(report.internal),
        fmt_float(report.boundary),
        fmt_float(report.total),
        fmt_float(report.scaled_total),
    ]);
    let mut artifacts = Vec::new();
    artifacts.extend(start_snapshot(cfg));
    artifacts.push(("energy.csv".to_string(), csv.finish()));
    Ok(artifacts)
}

fn run_gamma_scan(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let grid = cfg.grid.as_ref().expect("scan config carries grid settings");
    let kernel = cfg.kernel.as_ref().expect("scan config carries kernel settings");
    let s_list = kernel.s_list.as_deref().expect("scan config carries s_list");
    let n_list = kernel.n_list.as_deref().expect("scan config carries n_list");
    let m = cfg.tensions.m();
    let partition = cfg.partition.as_ref().expect("scan config carries a partition").clone();
    let make = move |spec: &Grid| match &partition {
        PartitionSettings::Halfspace { i, j, axis } => {
            Partition::make_halfspace_pair(*spec, m, *i, *j, *axis)
        }
        PartitionSettings::Laminate { chambers, q, axis } => {
            let path = LaminatePath::new(chambers.clone(), *q)?;
            Partition::make_laminate(*spec, m, &path, *axis)
        }
        _ => Err(fracperim_core::Error::Precondition("scan partitions must be generators".into())),
    };
    let rows = gamma_scan(
        grid.dim,
        grid.box_side,
        make,
        &cfg.tensions,
        s_list,
        n_list,
        kernel.max_depth,
        kernel.trunc_radius,
    )?;
    let mut csv = Csv::new(&[
        "s",
        "cells_per_side",
        "internal",
        "boundary",
        "scaled_total",
        "classical_target",
        "tail_bound",
    ]);
    for row in rows {
        csv.row([
            fmt_float(row.s),
            row.cells_per_side.to_string(),
            fmt_float(row.internal),
            fmt_float(row.boundary),
            fmt_float(row.scaled_total),
            fmt_float(row.classical_target),
            fmt_float(row.tail_bound),
        ]);
    }
    Ok(vec![("gamma_scan.csv".to_string(), csv.finish())])
}

fn run_mincut_replace(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let (engine, partition) = engine_and_partition(cfg)?;
    let ExteriorRule::HalfPair { i, j, .. } = partition.exterior() else {
        return Err(LabError::Config("mincut-replace needs a half-space pair exterior".into()));
    };
    let network = build_network(&engine, &partition)?;
    let flow = max_flow(&network, i as usize, j as usize)?;
    let cut = min_cut(&network, i as usize, j as usize)?;
    let replaced = replace(&engine, &partition, i, j)?;
    let before = engine.multiphase_energy(&partition, &cfg.tensions)?;
    let after = engine.multiphase_energy(&replaced, &cfg.tensions)?;
    let mut csv = Csv::new(&[
        "flow_value",
        "cut_size",
        "total_before",
        "scaled_before",
        "total_after",
        "scaled_after",
    ]);
    csv.row([
        fmt_float(flow.value()),
        fmt_float(network.cut_size(&cut)),
        fmt_float(before.total),
        fmt_float(before.scaled_total),
        fmt_float(after.total),
        fmt_float(after.scaled_total),
    ]);
    let mut artifacts = Vec::new();
    artifacts.extend(start_snapshot(cfg));
    artifacts.push(("network.txt".to_string(), network.to_text()));
    artifacts.push(("flow.txt".to_string(), flow.to_text()));
    artifacts.push(("cut.txt".to_string(), cut.to_text()));
    artifacts.push(("replaced_partition.txt".to_string(), replaced.serialize()));
    artifacts.push(("replace.csv".to_string(), csv.finish()));
    Ok(artifacts)
}

fn run_minimize(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let (engine, start) = engine_and_partition(cfg)?;
    let settings = cfg.minimize.as_ref().expect("minimize config carries settings");
    let outcome = local_search(&engine, &start, &cfg.tensions, &settings.to_core()?)?;
    let mut sweeps = Csv::new(&["sweep", "accepted", "energy", "third_phase_volume"]);
    for row in &outcome.log {
        sweeps.row([
            row.sweep.to_string(),
            row.accepted.to_string(),
            fmt_float(row.energy),
            fmt_float(row.third_phase_volume),
        ]);
    }
    let mut summary = Csv::new(&[
        "internal",
        "boundary",
        "total",
        "scaled_total",
        "sweeps_run",
        "third_phase_volume",
    ]);
    summary.row([
        fmt_float(outcome.report.internal),
        fmt_float(outcome.report.boundary),
        fmt_float(outcome.report.total),
        fmt_float(outcome.report.scaled_total),
        outcome.log.len().to_string(),
        fmt_float(third_phase_volume(&outcome.partition)),
    ]);
    let mut artifacts = Vec::new();
    artifacts.extend(start_snapshot(cfg));
    artifacts.push(("final_partition.txt".to_string(), outcome.partition.serialize()));
    artifacts.push(("sweeps.csv".to_string(), sweeps.finish()));
    artifacts.push(("minimize.csv".to_string(), summary.finish()));
    Ok(artifacts)
}

fn run_wetting(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let grid = cfg.grid.as_ref().expect("wetting config carries grid settings");
    let kernel = cfg.kernel.as_ref().expect("wetting config carries kernel settings");
    let s_list = kernel.s_list.as_deref().expect("wetting config carries s_list");
    let n_list = kernel.n_list.as_deref().expect("wetting config carries n_list");
    let Some(PartitionSettings::Pair { i, j }) = cfg.partition.as_ref() else {
        return Err(LabError::Config("wetting needs a chamber pair in [partition]".into()));
    };
    let settings = cfg.minimize.as_ref().expect("wetting config carries minimize settings");
    let rows = wetting_experiment(
        grid.dim,
        grid.box_side,
        &cfg.tensions,
        *i,
        *j,
        s_list,
        n_list,
        kernel.max_depth,
        kernel.trunc_radius,
        &settings.to_core()?,
    )?;
    let mut csv = Csv::new(&[
        "s",
        "cells_per_side",
        "third_phase_volume",
        "scaled_energy",
        "pure_interface",
        "relaxed_target",
        "success",
    ]);
    for row in rows {
        csv.row([
            fmt_float(row.s),
            row.cells_per_side.to_string(),
            fmt_float(row.third_phase_volume),
            fmt_float(row.scaled_energy),
            fmt_float(row.pure_interface),
            fmt_float(row.relaxed_target),
            (row.success as u8).to_string(),
        ]);
    }
    Ok(vec![("wetting.csv".to_string(), csv.finish())])
}

fn run_gamma_bar(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let (engine, _) = engine_and_partition(cfg)?;
    let Some(PartitionSettings::Pair { i, j }) = cfg.partition.as_ref() else {
        return Err(LabError::Config("gamma-bar needs a chamber pair in [partition]".into()));
    };
    let settings = cfg.minimize.as_ref().expect("gamma-bar config carries minimize settings");
    let restarts = settings.restarts.expect("gamma-bar config carries restarts");
    let estimate =
        gamma_bar_estimate(&engine, *i, *j, &cfg.tensions, &settings.to_core()?, restarts)?;
    let mut csv = Csv::new(&["best_scaled", "halfspace_scaled", "gap", "restarts"]);
    csv.row([
        fmt_float(estimate.best_scaled),
        fmt_float(estimate.halfspace_scaled),
        fmt_float(estimate.gap),
        estimate.restarts.to_string(),
    ]);
    Ok(vec![
        ("best_partition.txt".to_string(), estimate.partition.serialize()),
        ("gamma_bar.csv".to_string(), csv.finish()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_sections, resolve};
    use fracperim_core::Tensions;
    use std::path::Path;

    fn resolved(text: &str) -> ExperimentConfig {
        resolve(parse_sections(text).unwrap(), Path::new("."), None).unwrap().config
    }

    fn artifact<'a>(artifacts: &'a [(String, String)], name: &str) -> &'a str {
        &artifacts.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("missing {name}")).1
    }

    #[test]
    fn relax_artifacts_match_module_results() {
        let cfg =
            resolved("[experiment]\nkind = relax\n\n[tensions]\nrows = 0 3 1 ; 3 0 1 ; 1 1 0\n");
        let artifacts = execute(&cfg).unwrap();
        let expected = Tensions::from_rows(vec![
            vec![0.0, 2.0, 1.0],
            vec![2.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(artifact(&artifacts, "sigma_bar.txt"), expected.to_text());
        let csv = artifact(&artifacts, "relax.csv");
        assert!(csv.starts_with("i,j,sigma,sigma_bar\n"), "{csv}");
        assert!(csv.contains(&fmt_float(2.0)), "{csv}");
    }

    #[test]
    fn gamma_scan_csv_matches_direct_scan() {
        let cfg = resolved(
            "\
[experiment]
kind = gamma-scan

[grid]
dim = 2
box_side = 1.0

[kernel]
s_list = 0.3, 0.4
n_list = 4, 8
max_depth = 2

[tensions]
rows = 0 1 ; 1 0

[partition]
kind = halfspace
i = 1
j = 2
",
        );
        let artifacts = execute(&cfg).unwrap();
        let direct = gamma_scan(
            2,
            1.0,
            |spec| Partition::make_halfspace_pair(*spec, 2, 0, 1, 1),
            &cfg.tensions,
            &[0.3, 0.4],
            &[4, 8],
            2,
            4.0,
        )
        .unwrap();
        let csv = artifact(&artifacts, "gamma_scan.csv");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + direct.len());
        for (line, row) in lines[1..].iter().zip(&direct) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[4], fmt_float(row.scaled_total));
        }
    }

    #[test]
    fn energy_snapshots_file_partitions() {
        let spec = Grid::new(2, 4, 1.0).unwrap();
        let part = Partition::make_halfspace_pair(spec, 2, 0, 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.txt"), part.serialize()).unwrap();
        let text = "\
[experiment]
kind = energy

[kernel]
s = 0.4
max_depth = 2

[tensions]
rows = 0 1 ; 1 0

[partition]
kind = file
file = p.txt
";
        let cfg = resolve(parse_sections(text).unwrap(), dir.path(), None).unwrap().config;
        let artifacts = execute(&cfg).unwrap();
        assert_eq!(artifact(&artifacts, START_PARTITION_FILE), part.serialize());
        assert!(artifact(&artifacts, "energy.csv").starts_with("s,cells_per_side,"));
    }

    #[test]
    fn mincut_replace_never_raises_energy() {
        let text = "\
[experiment]
kind = mincut-replace

[grid]
dim = 2
cells_per_side = 8
box_side = 1.0

[kernel]
s = 0.4
max_depth = 3

[tensions]
rows = 0 1.8 0.9 ; 1.8 0 1.0 ; 0.9 1.0 0

[partition]
kind = laminate
chambers = 1, 3, 2
q = 1
";
        let cfg = resolved(text);
        let artifacts = execute(&cfg).unwrap();
        let csv = artifact(&artifacts, "replace.csv");
        let data_line = csv.lines().nth(1).unwrap();
        let cells: Vec<f64> = data_line.split(',').map(|c| c.parse().unwrap()).collect();
        let (total_before, total_after) = (cells[2], cells[4]);
        assert!(total_after <= total_before * (1.0 + 1e-10), "{csv}");
        assert!(artifact(&artifacts, "replaced_partition.txt").contains("halfpair"));
    }

    #[test]
    fn minimize_keeps_halfspace_stable() {
        let cfg = resolved(
            "\
[experiment]
kind = minimize

[grid]
dim = 2
cells_per_side = 6
box_side = 1.0

[kernel]
s = 0.4
max_depth = 3

[tensions]
rows = 0 1 ; 1 0

[partition]
kind = halfspace
i = 1
j = 2

[minimize]
strategy = greedy
max_sweeps = 4
seed = 0
",
        );
        let artifacts = execute(&cfg).unwrap();
        let sweeps = artifact(&artifacts, "sweeps.csv");
        assert_eq!(sweeps.lines().count(), 2, "{sweeps}");
        let final_part = artifact(&artifacts, "final_partition.txt");
        let spec = Grid::new(2, 6, 1.0).unwrap();
        let expected = Partition::make_halfspace_pair(spec, 2, 0, 1, 1).unwrap();
        assert_eq!(final_part, expected.serialize());
    }

    #[test]
    fn run_to_dir_writes_manifest_and_artifacts() {
        let cfg =
            resolved("[experiment]\nkind = relax\n\n[tensions]\nrows = 0 3 1 ; 3 0 1 ; 1 1 0\n");
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let names = run_to_dir(&cfg, &out).unwrap();
        assert_eq!(names.last().map(String::as_str), Some(MANIFEST_FILE));
        for name in &names {
            assert!(out.join(name).is_file(), "missing {name}");
        }
        let manifest = std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
        assert!(manifest.contains("kind = relax"), "{manifest}");
        assert!(manifest.contains("files = sigma_bar.txt, relax.csv"), "{manifest}");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, -2.3094e-7, std::f64::consts::PI, 6.923532224098382] {
            let text = fmt_float(v);
            assert_eq!(text.parse::<f64>().unwrap(), v, "{text}");
        }
    }
}
