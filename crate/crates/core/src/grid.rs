//! Uniform-grid partitions of a cube with analytic exterior labels, and the
//! canonical configurations: half-space pairs and laminates.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform discretization of the cube [-L/2, L/2]^n into N cells per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Real = f64> {
    n: usize,
    cells_per_side: usize,
    box_side: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(n: usize, cells_per_side: usize, box_side: T) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {n}")));
        }
        if cells_per_side < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per side, got {cells_per_side}"
            )));
        }
        if !box_side.is_finite() || box_side <= T::zero() {
            return Err(Error::InvalidGrid(format!("box side must be positive, got {box_side}")));
        }
        Ok(Self { n, cells_per_side, box_side })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn box_side(&self) -> T {
        self.box_side
    }

    /// Cell width h = L/N.
    pub fn h(&self) -> T {
        self.box_side / T::of_usize(self.cells_per_side)
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side.pow(self.n as u32)
    }

    pub fn cell_volume(&self) -> T {
        self.h().powi(self.n as i32)
    }

    /// Center coordinate of cell layer `i` along any axis: (i + 1/2)h - L/2.
    /// Accepts indices outside 0..N for ghost layers.
    pub fn center_coord(&self, i: i64) -> T {
        (T::of(i as f64) + T::of(0.5)) * self.h() - self.box_side * T::of(0.5)
    }

    /// Flat cell index with the last axis fastest.
    pub fn flat_index(&self, mi: [usize; 3]) -> usize {
        let nn = self.cells_per_side;
        match self.n {
            2 => mi[0] * nn + mi[1],
            _ => (mi[0] * nn + mi[1]) * nn + mi[2],
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let nn = self.cells_per_side;
        match self.n {
            2 => [flat / nn, flat % nn, 0],
            _ => [flat / (nn * nn), (flat / nn) % nn, flat % nn],
        }
    }
}

/// Analytic label assignment outside the box. Chamber indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExteriorRule {
    /// Points with coordinate >= offset along `axis` get label `i`, the rest
    /// get label `j`. Offset is in length units.
    HalfPair {
        i: u8,
        j: u8,
        axis: usize,
    },
    Constant(u8),
    None,
}

impl ExteriorRule {
    /// Label of an exterior point, by its cell-center coordinates.
    pub fn label_at<T: Real>(&self, center: &[T]) -> Option<u8> {
        match *self {
            ExteriorRule::HalfPair { i, j, axis } => {
                Some(if center[axis] >= T::zero() { i } else { j })
            }
            ExteriorRule::Constant(i) => Some(i),
            ExteriorRule::None => None,
        }
    }

    fn to_header(self) -> String {
        match self {
            ExteriorRule::HalfPair { i, j, axis } => {
                format!("halfpair:{},{},axis{}", i + 1, j + 1, axis + 1)
            }
            ExteriorRule::Constant(i) => format!("constant:{}", i + 1),
            ExteriorRule::None => "none".into(),
        }
    }

    fn from_header(text: &str, n: usize, m: usize) -> Result<Self> {
        let chamber = |tok: &str| -> Result<u8> {
            let v: usize = tok
                .parse()
                .map_err(|e| Error::Parse(format!("bad exterior chamber {tok:?}: {e}")))?;
            if v < 1 || v > m {
                return Err(Error::Parse(format!("exterior chamber {v} outside 1..{m}")));
            }
            Ok((v - 1) as u8)
        };
        if text == "none" {
            return Ok(ExteriorRule::None);
        }
        if let Some(rest) = text.strip_prefix("constant:") {
            return Ok(ExteriorRule::Constant(chamber(rest)?));
        }
        if let Some(rest) = text.strip_prefix("halfpair:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("exterior rule {text:?} needs i,j,axisK")));
            }
            let i = chamber(parts[0])?;
            let j = chamber(parts[1])?;
            let axis_txt = parts[2]
                .strip_prefix("axis")
                .ok_or_else(|| Error::Parse(format!("expected axisK, got {:?}", parts[2])))?;
            let axis: usize = axis_txt
                .parse()
                .map_err(|e| Error::Parse(format!("bad axis {axis_txt:?}: {e}")))?;
            if axis < 1 || axis > n {
                return Err(Error::Parse(format!("axis {axis} outside 1..{n}")));
            }
            return Ok(ExteriorRule::HalfPair { i, j, axis: axis - 1 });
        }
        Err(Error::Parse(format!("unknown exterior rule {text:?}")))
    }
}

/// Label field over the grid plus the exterior rule. Labels are 0-based
/// chamber indices below `m`; files store them 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition<T: Real = f64> {
    spec: GridSpec<T>,
    m: usize,
    labels: Vec<u8>,
    exterior: ExteriorRule,
}

/// Chamber sequence i_0,...,i_H (0-based, pairwise distinct) and lamination
/// stage q; stage q halves the slab width q times.
#[derive(Debug, Clone)]
pub struct LaminatePath {
    chambers: Vec<u8>,
    q: u32,
}

impl LaminatePath {
    pub fn new(chambers: Vec<u8>, q: u32) -> Result<Self> {
        if chambers.len() < 2 {
            return Err(Error::Precondition("laminate path needs at least two chambers".into()));
        }
        for (a, &ca) in chambers.iter().enumerate() {
            for &cb in chambers.iter().skip(a + 1) {
                if ca == cb {
                    return Err(Error::Precondition(format!(
                        "laminate path repeats chamber {}",
                        ca + 1
                    )));
                }
            }
        }
        Ok(Self { chambers, q })
    }

    pub fn chambers(&self) -> &[u8] {
        &self.chambers
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Number of interfaces H along the path.
    pub fn hops(&self) -> usize {
        self.chambers.len() - 1
    }
}

impl<T: Real> GridPartition<T> {
    pub fn from_labels(
        spec: GridSpec<T>,
        m: usize,
        labels: Vec<u8>,
        exterior: ExteriorRule,
    ) -> Result<Self> {
        if m < 2 || m > u8::MAX as usize {
            return Err(Error::InvalidGrid(format!("chamber count {m} outside 2..=255")));
        }
        if labels.len() != spec.num_cells() {
            return Err(Error::InvalidGrid(format!(
                "expected {} labels, got {}",
                spec.num_cells(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= m) {
            return Err(Error::InvalidGrid(format!(
                "label {} outside the {m} chambers",
                bad as usize + 1
            )));
        }
        check_exterior_chambers(&exterior, m)?;
        Ok(Self { spec, m, labels, exterior })
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn exterior(&self) -> ExteriorRule {
        self.exterior
    }

    pub fn label(&self, flat: usize) -> u8 {
        self.labels[flat]
    }

    pub fn set_label(&mut self, flat: usize, label: u8) {
        debug_assert!((label as usize) < self.m);
        self.labels[flat] = label;
    }

    /// Two-chamber half-space configuration: cells whose center coordinate
    /// along `axis` is >= 0 get label `i`, the rest `j`; matching exterior.
    pub fn make_halfspace_pair(
        spec: GridSpec<T>,
        m: usize,
        i: u8,
        j: u8,
        axis: usize,
    ) -> Result<Self> {
        if i == j {
            return Err(Error::Precondition("half-space pair needs two distinct chambers".into()));
        }
        check_axis(&spec, axis)?;
        let mut labels = vec![0u8; spec.num_cells()];
        for (flat, slot) in labels.iter_mut().enumerate() {
            let mi = spec.multi_index(flat);
            let c = spec.center_coord(mi[axis] as i64);
            *slot = if c >= T::zero() { i } else { j };
        }
        Self::from_labels(spec, m, labels, ExteriorRule::HalfPair { i, j, axis })
    }

    /// Layered configuration across a slab of width L*2^-(q+1) centered on
    /// the interface plane: chamber i_0 fills the >= side, i_H the < side,
    /// and the H-1 intermediate chambers split the slab into equal strips
    /// ordered from the i_0 side down. Exterior is half-pair(i_0, i_H).
    pub fn make_laminate(
        spec: GridSpec<T>,
        m: usize,
        path: &LaminatePath,
        axis: usize,
    ) -> Result<Self> {
        check_axis(&spec, axis)?;
        let ch = path.chambers();
        let hops = path.hops();
        let first = ch[0];
        let last = ch[hops];
        if hops == 1 {
            return Self::make_halfspace_pair(spec, m, first, last, axis);
        }
        // each strip must contain at least one cell layer
        let min_n = (hops - 1) * (1usize << (path.q() + 1));
        if spec.cells_per_side() < min_n {
            return Err(Error::Precondition(format!(
                "laminate stage q={} with {} strips needs N >= {min_n}, got N={}",
                path.q(),
                hops - 1,
                spec.cells_per_side()
            )));
        }
        let l = spec.box_side();
        let half_slab = l * T::of(0.5f64.powi(path.q() as i32 + 2));
        let strip = (half_slab + half_slab) / T::of_usize(hops - 1);
        let mut labels = vec![0u8; spec.num_cells()];
        for (flat, slot) in labels.iter_mut().enumerate() {
            let mi = spec.multi_index(flat);
            let c = spec.center_coord(mi[axis] as i64);
            *slot = if c >= half_slab {
                first
            } else if c < -half_slab {
                last
            } else {
                let k = ((half_slab - c) / strip).floor();
                let k = <usize as num_traits::NumCast>::from(k).unwrap_or(0).min(hops - 2);
                ch[k + 1]
            };
        }
        Self::from_labels(spec, m, labels, ExteriorRule::HalfPair { i: first, j: last, axis })
    }

    /// Per-chamber volume inside the box: (cells labeled i) * h^n.
    pub fn volumes(&self) -> Vec<T> {
        let mut counts = vec![0usize; self.m];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        let hv = self.spec.cell_volume();
        counts.into_iter().map(|c| T::of_usize(c) * hv).collect()
    }

    /// Per-chamber L1 distance between indicator functions on the box.
    pub fn l1_distance(&self, other: &Self) -> Result<Vec<T>> {
        if self.spec != other.spec {
            return Err(Error::Precondition("L1 distance needs identical grids".into()));
        }
        let m = self.m.max(other.m);
        let mut counts = vec![0usize; m];
        for (&a, &b) in self.labels.iter().zip(&other.labels) {
            if a != b {
                counts[a as usize] += 1;
                counts[b as usize] += 1;
            }
        }
        let hv = self.spec.cell_volume();
        Ok(counts.into_iter().map(|c| T::of_usize(c) * hv).collect())
    }

    /// ASCII format: header "n=_ N=_ L=_ m=_ exterior=_", then the label
    /// array row-major (1-based labels), N per line.
    pub fn serialize(&self) -> String {
        let spec = &self.spec;
        let mut out = format!(
            "n={} N={} L={} m={} exterior={}\n",
            spec.n(),
            spec.cells_per_side(),
            spec.box_side(),
            self.m,
            self.exterior.to_header()
        );
        let nn = spec.cells_per_side();
        for row in self.labels.chunks(nn) {
            let line: Vec<String> = row.iter().map(|&l| format!("{}", l + 1)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty partition text".into()))?;
        let mut n = Option::<usize>::None;
        let mut nn = Option::<usize>::None;
        let mut l = Option::<f64>::None;
        let mut m = Option::<usize>::None;
        let mut ext = Option::<&str>::None;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("header field {field:?} is not key=value")))?;
            match key {
                "n" => n = Some(parse_num(key, value)?),
                "N" => nn = Some(parse_num(key, value)?),
                "L" => l = Some(parse_num(key, value)?),
                "m" => m = Some(parse_num(key, value)?),
                "exterior" => ext = Some(value),
                _ => return Err(Error::Parse(format!("unknown header field {key:?}"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("header is missing {k}"));
        let n = n.ok_or_else(|| missing("n"))?;
        let nn = nn.ok_or_else(|| missing("N"))?;
        let l = l.ok_or_else(|| missing("L"))?;
        let m = m.ok_or_else(|| missing("m"))?;
        let ext = ext.ok_or_else(|| missing("exterior"))?;
        let spec = GridSpec::new(n, nn, T::of(l))?;
        let exterior = ExteriorRule::from_header(ext, n, m)?;
        let mut labels = Vec::with_capacity(spec.num_cells());
        for line in lines {
            for tok in line.split_whitespace() {
                let v: usize =
                    tok.parse().map_err(|e| Error::Parse(format!("bad label {tok:?}: {e}")))?;
                if v < 1 || v > m {
                    return Err(Error::Parse(format!("label {v} outside 1..{m}")));
                }
                labels.push((v - 1) as u8);
            }
        }
        if labels.len() != spec.num_cells() {
            return Err(Error::Parse(format!(
                "expected {} labels, got {}",
                spec.num_cells(),
                labels.len()
            )));
        }
        Self::from_labels(spec, m, labels, exterior)
    }
}

fn check_axis<T: Real>(spec: &GridSpec<T>, axis: usize) -> Result<()> {
    if axis >= spec.n() {
        return Err(Error::Precondition(format!(
            "axis {axis} outside the {}-dimensional grid",
            spec.n()
        )));
    }
    Ok(())
}

fn check_exterior_chambers(rule: &ExteriorRule, m: usize) -> Result<()> {
    let check = |c: u8| {
        if c as usize >= m {
            Err(Error::InvalidGrid(format!(
                "exterior chamber {} outside the {m} chambers",
                c as usize + 1
            )))
        } else {
            Ok(())
        }
    };
    match *rule {
        ExteriorRule::HalfPair { i, j, .. } => {
            check(i)?;
            check(j)
        }
        ExteriorRule::Constant(i) => check(i),
        ExteriorRule::None => Ok(()),
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Parse(format!("bad header value {key}={value}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec2(n_cells: usize) -> GridSpec<f64> {
        GridSpec::new(2, n_cells, 1.0).unwrap()
    }

    #[test]
    fn halfspace_split_counts() {
        let p = GridPartition::make_halfspace_pair(spec2(4), 3, 0, 1, 1).unwrap();
        let top = p.labels().iter().filter(|&&l| l == 0).count();
        let bottom = p.labels().iter().filter(|&&l| l == 1).count();
        assert_eq!((top, bottom), (8, 8));
        assert_eq!(p.volumes(), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn halfspace_swap_reflects() {
        let s = spec2(4);
        let p = GridPartition::make_halfspace_pair(s, 2, 0, 1, 0).unwrap();
        let q = GridPartition::make_halfspace_pair(s, 2, 1, 0, 0).unwrap();
        for flat in 0..s.num_cells() {
            let mi = s.multi_index(flat);
            let mirrored = s.flat_index([s.cells_per_side() - 1 - mi[0], mi[1], 0]);
            assert_eq!(p.label(flat), q.label(mirrored));
        }
    }

    #[test]
    fn halfspace_rejects_equal_chambers() {
        assert!(GridPartition::make_halfspace_pair(spec2(4), 2, 1, 1, 0).is_err());
    }

    #[test]
    fn laminate_single_hop_is_halfspace() {
        let s = spec2(8);
        let path = LaminatePath::new(vec![0, 1], 3).unwrap();
        let lam = GridPartition::make_laminate(s, 2, &path, 1).unwrap();
        let hsp = GridPartition::make_halfspace_pair(s, 2, 0, 1, 1).unwrap();
        assert_eq!(lam, hsp);
    }

    #[test]
    fn laminate_three_phase_strip() {
        let path = LaminatePath::new(vec![0, 2, 1], 0).unwrap();
        let p = GridPartition::make_laminate(spec2(8), 3, &path, 1).unwrap();
        assert_eq!(p.volumes(), vec![0.25, 0.25, 0.5]);
        assert_eq!(p.exterior(), ExteriorRule::HalfPair { i: 0, j: 1, axis: 1 });
        // strip occupies the centered half: rows with |center| < 1/4
        for flat in 0..p.spec().num_cells() {
            let mi = p.spec().multi_index(flat);
            let c = p.spec().center_coord(mi[1] as i64);
            let expect = if c >= 0.25 {
                0
            } else if c < -0.25 {
                1
            } else {
                2
            };
            assert_eq!(p.label(flat), expect);
        }
    }

    #[test]
    fn laminate_orders_strips_from_top() {
        let path = LaminatePath::new(vec![0, 2, 3, 1], 0).unwrap();
        let p = GridPartition::make_laminate(spec2(16), 4, &path, 1).unwrap();
        // walking down axis 1: chamber 0, strip 2, strip 3, chamber 1
        let col: Vec<u8> =
            (0..16).rev().map(|row| p.label(p.spec().flat_index([0, row, 0]))).collect();
        let mut seen = vec![col[0]];
        for &l in &col {
            if *seen.last().unwrap() != l {
                seen.push(l);
            }
        }
        assert_eq!(seen, vec![0, 2, 3, 1]);
    }

    #[test]
    fn laminate_names_minimal_n() {
        let path = LaminatePath::new(vec![0, 2, 1], 4).unwrap();
        let err = GridPartition::make_laminate(spec2(16), 3, &path, 1).unwrap_err();
        assert!(err.to_string().contains("N >= 32"), "{err}");
    }

    #[test]
    fn volumes_sum_to_box() {
        let path = LaminatePath::new(vec![0, 2, 1], 1).unwrap();
        let p = GridPartition::make_laminate(spec2(8), 3, &path, 0).unwrap();
        let total: f64 = p.volumes().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l1_distance_of_reflection() {
        let s = spec2(6);
        let p = GridPartition::make_halfspace_pair(s, 2, 0, 1, 0).unwrap();
        let q = GridPartition::make_halfspace_pair(s, 2, 1, 0, 0).unwrap();
        assert_eq!(p.l1_distance(&q).unwrap(), vec![1.0, 1.0]);
        assert_eq!(p.l1_distance(&p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn l1_distance_laminate_shrinks_with_stage() {
        let s = spec2(64);
        let hsp = GridPartition::make_halfspace_pair(s, 3, 0, 1, 1).unwrap();
        let mut prev = f64::INFINITY;
        for q in 0..4 {
            let path = LaminatePath::new(vec![0, 2, 1], q).unwrap();
            let lam = GridPartition::make_laminate(s, 3, &path, 1).unwrap();
            let d = lam.l1_distance(&hsp).unwrap()[2];
            assert_eq!(d, 0.5f64.powi(q as i32 + 1));
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn header_example_parses() {
        let text = "n=2 N=4 L=1 m=3 exterior=halfpair:1,2,axis2\n\
                    1 1 1 1\n1 1 1 1\n2 2 2 2\n3 3 2 2\n";
        let p = GridPartition::<f64>::deserialize(text).unwrap();
        assert_eq!(p.spec().n(), 2);
        assert_eq!(p.spec().cells_per_side(), 4);
        assert_eq!(p.m(), 3);
        assert_eq!(p.exterior(), ExteriorRule::HalfPair { i: 0, j: 1, axis: 1 });
        assert_eq!(p.label(p.spec().flat_index([3, 0, 0])), 2);
    }

    #[test]
    fn deserialize_rejects_label_out_of_range() {
        let text = "n=2 N=2 L=1 m=3 exterior=none\n1 2\n7 1\n";
        let err = GridPartition::<f64>::deserialize(text).unwrap_err();
        assert!(err.to_string().contains('7'), "{err}");
    }

    #[test]
    fn deserialize_rejects_truncation() {
        let text = "n=2 N=4 L=1 m=2 exterior=none\n1 2 1 2\n";
        assert!(GridPartition::<f64>::deserialize(text).is_err());
    }

    proptest! {
        #[test]
        fn serialize_round_trips(
            labels in proptest::collection::vec(0u8..3, 36),
            rule in 0usize..4,
        ) {
            let spec = GridSpec::<f64>::new(2, 6, 1.0).unwrap();
            let exterior = match rule {
                0 => ExteriorRule::HalfPair { i: 0, j: 1, axis: 0 },
                1 => ExteriorRule::HalfPair { i: 2, j: 0, axis: 1 },
                2 => ExteriorRule::Constant(1),
                _ => ExteriorRule::None,
            };
            let p = GridPartition::from_labels(spec, 3, labels, exterior).unwrap();
            let back = GridPartition::<f64>::deserialize(&p.serialize()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn volumes_partition_box(labels in proptest::collection::vec(0u8..4, 64)) {
            let spec = GridSpec::<f64>::new(3, 4, 2.0).unwrap();
            let p = GridPartition::from_labels(spec, 4, labels, ExteriorRule::None).unwrap();
            let total: f64 = p.volumes().iter().sum();
            prop_assert!((total - 8.0).abs() < 64.0 * 8.0 * f64::EPSILON);
        }
    }
}
