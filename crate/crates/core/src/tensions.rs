//! Surface-tension matrix algebra: validation, metric closure, and the
//! structural decompositions (additive, four-chamber, cut cone).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative slack used when comparing path costs and triangle sums.
///
/// Costs of equal-value chamber paths summed in different association orders
/// differ by a few ulps; without the slack, re-relaxing an already-closed
/// matrix would "improve" entries by one ulp and idempotence would fail.
const REL_GUARD: f64 = 1e-12;

/// Symmetric m-by-m matrix of interface weights: zero diagonal, positive
/// off-diagonal. Chamber indices are 0-based throughout the API; file
/// formats use 1-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTensionMatrix<T: Real = f64> {
    m: usize,
    entries: Vec<T>,
}

/// A failed matrix invariant, naming the offending entry (0-based indices).
#[derive(Debug, Clone, PartialEq)]
pub enum TensionViolation {
    NotSquare { rows: usize, cols: usize },
    TooSmall { m: usize },
    NonzeroDiagonal { i: usize },
    Asymmetric { i: usize, j: usize },
    NonPositive { i: usize, j: usize },
    NotFinite { i: usize, j: usize },
}

impl std::fmt::Display for TensionViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TensionViolation::NotSquare { rows, cols } => {
                write!(f, "expected a square matrix, got {rows} rows of width {cols}")
            }
            TensionViolation::TooSmall { m } => write!(f, "need m >= 2 chambers, got m={m}"),
            TensionViolation::NonzeroDiagonal { i } => {
                write!(f, "nonzero diagonal at ({},{})", i + 1, i + 1)
            }
            TensionViolation::Asymmetric { i, j } => {
                write!(f, "asymmetry at ({},{})", i + 1, j + 1)
            }
            TensionViolation::NonPositive { i, j } => {
                write!(f, "entry ({},{}) not positive", i + 1, j + 1)
            }
            TensionViolation::NotFinite { i, j } => {
                write!(f, "entry ({},{}) not finite", i + 1, j + 1)
            }
        }
    }
}

/// Checks the three matrix invariants on raw rows; `Ok` means a valid member
/// of the tension class.
#[allow(clippy::needless_range_loop)]
pub fn validate<T: Real>(rows: &[Vec<T>]) -> std::result::Result<(), TensionViolation> {
    let m = rows.len();
    if m < 2 {
        return Err(TensionViolation::TooSmall { m });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(TensionViolation::NotSquare { rows: m, cols: row.len() });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(TensionViolation::NotFinite { i, j });
            }
        }
    }
    for i in 0..m {
        if rows[i][i] != T::zero() {
            return Err(TensionViolation::NonzeroDiagonal { i });
        }
        for j in (i + 1)..m {
            if rows[i][j] != rows[j][i] {
                return Err(TensionViolation::Asymmetric { i, j });
            }
            if rows[i][j] <= T::zero() {
                return Err(TensionViolation::NonPositive { i, j });
            }
        }
    }
    Ok(())
}

impl<T: Real> SurfaceTensionMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        validate(&rows).map_err(|v| Error::InvalidTension(v.to_string()))?;
        let m = rows.len();
        let entries = rows.into_iter().flatten().collect();
        Ok(Self { m, entries })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.m + j]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.m).map(|i| self.entries[i * self.m..(i + 1) * self.m].to_vec()).collect()
    }

    pub fn min_off_diagonal(&self) -> T {
        let mut best = T::infinity();
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j && self.get(i, j) < best {
                    best = self.get(i, j);
                }
            }
        }
        best
    }

    pub fn max_off_diagonal(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j && self.get(i, j) > best {
                    best = self.get(i, j);
                }
            }
        }
        best
    }

    /// Shortest-path closure over chamber paths: the componentwise-largest
    /// matrix below `self` satisfying the triangle inequality.
    ///
    /// Layered all-pairs dynamic programming; round r adds paths of up to r
    /// edges by appending one edge on the right, so every candidate value is
    /// a left-to-right sum of original entries and the result matches plain
    /// simple-path enumeration value for value. The optimal path needs at
    /// most m-1 edges.
    pub fn relax(&self) -> Self {
        let m = self.m;
        let guard = T::one() - T::of(REL_GUARD);
        let mut best = self.entries.clone();
        for _ in 2..m {
            let prev = best.clone();
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    for k in 0..m {
                        if k == i || k == j {
                            continue;
                        }
                        let cand = prev[i * m + k] + self.entries[k * m + j];
                        if cand < best[i * m + j] * guard {
                            best[i * m + j] = cand;
                        }
                    }
                }
            }
        }
        // restore exact symmetry: path sets for (i,j) and (j,i) coincide but
        // are scanned in reversed edge order
        for i in 0..m {
            for j in (i + 1)..m {
                let lo = if best[i * m + j] < best[j * m + i] {
                    best[i * m + j]
                } else {
                    best[j * m + i]
                };
                best[i * m + j] = lo;
                best[j * m + i] = lo;
            }
        }
        Self { m, entries: best }
    }

    /// True iff sigma_ij <= sigma_ik + sigma_kj for every triple, with the
    /// same relative slack `relax` uses to absorb summation rounding.
    pub fn check_triangle(&self) -> bool {
        let m = self.m;
        let tol = T::one() + T::of(REL_GUARD);
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                for k in 0..m {
                    if k == i || k == j {
                        continue;
                    }
                    if self.get(i, j) > (self.get(i, k) + self.get(k, j)) * tol {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The unique nonnegative alpha with sigma_ij = alpha_i + alpha_j (m=3).
    pub fn additive_decomposition_3(&self) -> Result<[T; 3]> {
        if self.m != 3 {
            return Err(Error::Precondition(format!(
                "additive decomposition needs m=3, got m={}",
                self.m
            )));
        }
        if !self.check_triangle() {
            return Err(Error::Precondition(
                "additive decomposition needs the triangle inequality".into(),
            ));
        }
        let half = T::of(0.5);
        let s12 = self.get(0, 1);
        let s13 = self.get(0, 2);
        let s23 = self.get(1, 2);
        let alpha = [(s12 + s13 - s23) * half, (s12 + s23 - s13) * half, (s23 + s13 - s12) * half];
        let floor = -T::of(REL_GUARD) * self.max_off_diagonal();
        for (i, &a) in alpha.iter().enumerate() {
            if a < floor {
                return Err(Error::Precondition(format!(
                    "additive coefficient {} would be negative ({a})",
                    i + 1
                )));
            }
        }
        Ok(alpha.map(|a| if a < T::zero() { T::zero() } else { a }))
    }

    /// The seven coefficients of the four-chamber decomposition and their
    /// pairing threshold.
    pub fn decomposition_4(&self) -> Result<Decomposition4<T>> {
        if self.m != 4 {
            return Err(Error::Precondition(format!(
                "four-chamber decomposition needs m=4, got m={}",
                self.m
            )));
        }
        if !self.check_triangle() {
            return Err(Error::Precondition(
                "four-chamber decomposition needs the triangle inequality".into(),
            ));
        }
        let half = T::of(0.5);
        let s = |i: usize, j: usize| self.get(i, j);
        let a = [
            (s(0, 1) + s(0, 2) + s(0, 3)) * half,
            (s(0, 1) + s(1, 2) + s(1, 3)) * half,
            (s(0, 2) + s(1, 2) + s(2, 3)) * half,
            (s(0, 3) + s(1, 3) + s(2, 3)) * half,
            (s(0, 1) + s(2, 3)) * half,
            (s(0, 2) + s(1, 3)) * half,
            (s(0, 3) + s(1, 2)) * half,
        ];
        let alpha_star = a[4].max(a[5]).max(a[6]);
        let floor = -T::of(REL_GUARD) * self.max_off_diagonal();
        for (k, &ak) in a.iter().enumerate().take(4) {
            if ak - alpha_star < floor {
                return Err(Error::Precondition(format!(
                    "coefficient {} falls below the pairing threshold",
                    k + 1
                )));
            }
        }
        Ok(Decomposition4 { coefficients: a, alpha_star })
    }

    /// Nonnegative combination of cut matrices reproducing `self`, or the
    /// verdict that none exists (max-entry residual above 1e-9).
    ///
    /// Enumerates the 2^(m-1)-1 distinct cut matrices and solves the
    /// nonnegative least-squares problem over them (Lawson-Hanson). Any
    /// triangle-satisfying matrix with m in {3,4} is embeddable.
    pub fn cut_cone_decomposition(&self) -> Result<CutConeResult<T>> {
        let m = self.m;
        if m > 6 {
            return Err(Error::Unsupported(format!(
                "cut-cone decomposition enumerates subsets, m={m} > 6 rejected"
            )));
        }
        let masks = cut_masks(m);
        let npairs = m * (m - 1) / 2;
        // column per cut matrix, row per unordered chamber pair
        let mut cols = Vec::with_capacity(masks.len());
        for &mask in &masks {
            let mut col = vec![T::zero(); npairs];
            for (r, (i, j)) in pair_order(m).enumerate() {
                if cut_separates(mask, i, j) {
                    col[r] = T::one();
                }
            }
            cols.push(col);
        }
        let rhs: Vec<T> = pair_order(m).map(|(i, j)| self.get(i, j)).collect();
        let lambda = nnls(&cols, &rhs);
        // reconstruction residual in the max norm
        let mut residual = T::zero();
        for (r, &b) in rhs.iter().enumerate() {
            let mut acc = T::zero();
            for (c, col) in cols.iter().enumerate() {
                acc = acc + lambda[c] * col[r];
            }
            let err = (acc - b).abs();
            if err > residual {
                residual = err;
            }
        }
        if residual < T::of(CUT_CONE_TOL) {
            let terms = masks
                .iter()
                .zip(&lambda)
                .filter(|(_, &l)| l > T::zero())
                .map(|(&mask, &l)| (mask, l))
                .collect();
            Ok(CutConeResult::Embeddable(CutDecomposition { m, terms }))
        } else {
            Ok(CutConeResult::NotEmbeddable { residual })
        }
    }

    /// Matrix text format: first line "m", then m whitespace-separated rows.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.m);
        for i in 0..self.m {
            let row: Vec<String> = (0..self.m).map(|j| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let m: usize = tokens
            .next()
            .ok_or_else(|| Error::Parse("empty tension matrix text".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad chamber count: {e}")))?;
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let tok = tokens.next().ok_or_else(|| {
                    Error::Parse(format!("matrix text truncated at entry ({},{})", i + 1, j + 1))
                })?;
                let v: f64 = tok
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad entry ({},{}): {e}", i + 1, j + 1)))?;
                row.push(T::of(v));
            }
            rows.push(row);
        }
        if tokens.next().is_some() {
            return Err(Error::Parse("trailing tokens after matrix entries".into()));
        }
        Self::from_rows(rows)
    }
}

/// Residual threshold below which a cut-cone reconstruction counts as exact.
pub const CUT_CONE_TOL: f64 = 1e-9;

/// Output of the four-chamber decomposition: coefficients[0..4] attach to
/// single chambers, coefficients[4..7] to the three chamber pairings, and
/// alpha_star is the largest pairing coefficient.
#[derive(Debug, Clone)]
pub struct Decomposition4<T: Real> {
    pub coefficients: [T; 7],
    pub alpha_star: T,
}

impl<T: Real> Decomposition4<T> {
    /// Rebuilds the six entries from the coefficients; the inverse of the
    /// defining formulas.
    pub fn reconstruct(&self) -> Vec<Vec<T>> {
        let a = &self.coefficients;
        let z = T::zero();
        let e = |p: T, q: T, r: T, t: T| (p + q) - (r + t);
        let s12 = e(a[0], a[1], a[5], a[6]);
        let s13 = e(a[0], a[2], a[4], a[6]);
        let s14 = e(a[0], a[3], a[4], a[5]);
        let s23 = e(a[1], a[2], a[4], a[5]);
        let s24 = e(a[1], a[3], a[4], a[6]);
        let s34 = e(a[2], a[3], a[5], a[6]);
        vec![
            vec![z, s12, s13, s14],
            vec![s12, z, s23, s24],
            vec![s13, s23, z, s34],
            vec![s14, s24, s34, z],
        ]
    }
}

/// Nonnegative combination of cut matrices: terms (J-as-bitmask, lambda_J).
/// Bit b of a mask means chamber b (0-based) belongs to J.
#[derive(Debug, Clone)]
pub struct CutDecomposition<T: Real> {
    m: usize,
    terms: Vec<(u32, T)>,
}

#[derive(Debug, Clone)]
pub enum CutConeResult<T: Real> {
    Embeddable(CutDecomposition<T>),
    NotEmbeddable { residual: T },
}

impl<T: Real> CutDecomposition<T> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &[(u32, T)] {
        &self.terms
    }

    /// Entry (i,j) of the weighted sum of cut matrices.
    pub fn reconstruct_entry(&self, i: usize, j: usize) -> T {
        let mut acc = T::zero();
        for &(mask, l) in &self.terms {
            if cut_separates(mask, i, j) {
                acc = acc + l;
            }
        }
        acc
    }

    /// Serialized as lines "J-as-bitmask lambda".
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &(mask, l) in &self.terms {
            out.push_str(&format!("{mask} {l}\n"));
        }
        out
    }

    pub fn from_text(text: &str, m: usize) -> Result<Self> {
        let full: u32 = (1 << m) - 1;
        let mut terms = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mask: u32 = parts
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad bitmask: {e}", ln + 1)))?;
            let lam: f64 = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing lambda", ln + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad lambda: {e}", ln + 1)))?;
            if mask == 0 || mask >= full {
                return Err(Error::Parse(format!(
                    "line {}: subset must be nonempty and proper",
                    ln + 1
                )));
            }
            if lam < 0.0 {
                return Err(Error::Parse(format!("line {}: negative lambda", ln + 1)));
            }
            terms.push((mask, T::of(lam)));
        }
        Ok(Self { m, terms })
    }
}

/// One representative bitmask per distinct cut matrix: J and its complement
/// define the same matrix, so enumerate nonempty subsets excluding the last
/// chamber.
fn cut_masks(m: usize) -> Vec<u32> {
    (1u32..(1 << (m - 1))).collect()
}

fn cut_separates(mask: u32, i: usize, j: usize) -> bool {
    ((mask >> i) & 1) != ((mask >> j) & 1)
}

/// Unordered pairs (i,j), i < j, in lexicographic order; the canonical pair
/// enumeration shared by every module that vectorizes over chamber pairs.
pub fn pair_order(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| ((i + 1)..m).map(move |j| (i, j)))
}

/// Index of pair (i,j), i < j, within `pair_order(m)`.
pub fn pair_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * m - i * (i + 1) / 2 + (j - i - 1)
}

/// Lawson-Hanson nonnegative least squares: minimize |A x - b| over x >= 0.
/// `cols` are the columns of A. Sized for a handful of rows and at most 31
/// columns; least-squares subproblems go through normal equations.
fn nnls<T: Real>(cols: &[Vec<T>], b: &[T]) -> Vec<T> {
    let ncols = cols.len();
    let mut x = vec![T::zero(); ncols];
    let mut passive = vec![false; ncols];
    let scale = b.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let tol = T::of(1e-13) * scale.max(T::one());

    let residual = |x: &[T]| -> Vec<T> {
        let mut r = b.to_vec();
        for (c, col) in cols.iter().enumerate() {
            if x[c] != T::zero() {
                for (ri, &v) in r.iter_mut().zip(col.iter()) {
                    *ri = *ri - x[c] * v;
                }
            }
        }
        r
    };

    for _outer in 0..(4 * ncols) {
        let r = residual(&x);
        // gradient on the active set
        let mut best = tol;
        let mut pick = None;
        for (c, col) in cols.iter().enumerate() {
            if passive[c] {
                continue;
            }
            let w: T = col.iter().zip(&r).map(|(&a, &ri)| a * ri).sum();
            if w > best {
                best = w;
                pick = Some(c);
            }
        }
        let Some(pick) = pick else { break };
        passive[pick] = true;

        loop {
            let z = ls_on_passive(cols, b, &passive);
            let mut alpha = T::one();
            let mut blocker = None;
            for c in 0..ncols {
                if passive[c] && z[c] <= T::zero() {
                    let denom = x[c] - z[c];
                    if denom > T::zero() {
                        let a = x[c] / denom;
                        if a < alpha {
                            alpha = a;
                            blocker = Some(c);
                        }
                    } else {
                        alpha = T::zero();
                        blocker = Some(c);
                    }
                }
            }
            if blocker.is_none() {
                x = z;
                break;
            }
            for c in 0..ncols {
                if passive[c] {
                    x[c] = x[c] + alpha * (z[c] - x[c]);
                }
            }
            for c in 0..ncols {
                if passive[c] && x[c] <= tol {
                    x[c] = T::zero();
                    passive[c] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Least squares restricted to the passive columns, via normal equations and
/// Gaussian elimination with partial pivoting; zeros elsewhere.
fn ls_on_passive<T: Real>(cols: &[Vec<T>], b: &[T], passive: &[bool]) -> Vec<T> {
    let idx: Vec<usize> = (0..cols.len()).filter(|&c| passive[c]).collect();
    let k = idx.len();
    let mut ata = vec![T::zero(); k * k];
    let mut atb = vec![T::zero(); k];
    for (p, &cp) in idx.iter().enumerate() {
        atb[p] = cols[cp].iter().zip(b).map(|(&a, &v)| a * v).sum();
        for (q, &cq) in idx.iter().enumerate() {
            ata[p * k + q] = cols[cp].iter().zip(&cols[cq]).map(|(&a, &v)| a * v).sum();
        }
    }
    // elimination
    let mut rhs = atb;
    for col in 0..k {
        let mut piv = col;
        for r in (col + 1)..k {
            if ata[r * k + col].abs() > ata[piv * k + col].abs() {
                piv = r;
            }
        }
        if ata[piv * k + col].abs() <= T::of(1e-300) {
            continue;
        }
        if piv != col {
            for c in 0..k {
                ata.swap(col * k + c, piv * k + c);
            }
            rhs.swap(col, piv);
        }
        let d = ata[col * k + col];
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = ata[r * k + col] / d;
            if f != T::zero() {
                for c in col..k {
                    ata[r * k + c] = ata[r * k + c] - f * ata[col * k + c];
                }
                rhs[r] = rhs[r] - f * rhs[col];
            }
        }
    }
    let mut out = vec![T::zero(); cols.len()];
    for (p, &cp) in idx.iter().enumerate() {
        let d = ata[p * k + p];
        out[cp] = if d.abs() > T::of(1e-300) { rhs[p] / d } else { T::zero() };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> SurfaceTensionMatrix<f64> {
        SurfaceTensionMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn validate_accepts_minimal() {
        assert!(validate(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn validate_names_asymmetry() {
        let v = validate(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap_err();
        assert_eq!(v, TensionViolation::Asymmetric { i: 0, j: 1 });
        assert!(v.to_string().contains("(1,2)"));
    }

    #[test]
    fn validate_names_nonpositive() {
        let v = validate(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap_err();
        assert_eq!(v, TensionViolation::NonPositive { i: 0, j: 1 });
    }

    #[test]
    fn relax_shortcuts_through_cheap_chamber() {
        let s = mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 3.0], &[1.0, 3.0, 0.0]]);
        let r = s.relax();
        assert_eq!(r.get(1, 2), 2.0);
        assert_eq!(r.get(0, 1), 1.0);
        assert_eq!(r.get(0, 2), 1.0);
    }

    #[test]
    fn relax_fixes_metrics() {
        let s = mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 2.0], &[1.0, 2.0, 0.0]]);
        assert_eq!(s.relax(), s);
    }

    #[test]
    fn relax_keeps_additive_matrices() {
        // sigma_ij = a_i + a_j is closed: any detour adds 2*a_k
        let a = [1.0, 2.0, 3.0, 0.5];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { a[i] + a[j] }).collect())
            .collect();
        let s = SurfaceTensionMatrix::from_rows(rows).unwrap();
        assert_eq!(s.relax(), s);
    }

    #[test]
    fn triangle_check_matches_examples() {
        assert!(!mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 3.0], &[1.0, 3.0, 0.0]]).check_triangle());
        assert!(mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 2.0], &[1.0, 2.0, 0.0]]).check_triangle());
    }

    #[test]
    fn additive_symmetric_case() {
        let s = mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        assert_eq!(s.additive_decomposition_3().unwrap(), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn additive_345() {
        let s = mat(&[&[0.0, 3.0, 4.0], &[3.0, 0.0, 5.0], &[4.0, 5.0, 0.0]]);
        assert_eq!(s.additive_decomposition_3().unwrap(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn additive_boundary_alpha_zero() {
        let s = mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 2.0], &[1.0, 2.0, 0.0]]);
        assert_eq!(s.additive_decomposition_3().unwrap(), [0.0, 1.0, 1.0]);
    }

    #[test]
    fn additive_rejects_triangle_violation() {
        let s = mat(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 3.0], &[1.0, 3.0, 0.0]]);
        assert!(s.additive_decomposition_3().is_err());
    }

    #[test]
    fn four_chamber_uniform() {
        let rows: Vec<Vec<f64>> =
            (0..4).map(|i| (0..4).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        let s = SurfaceTensionMatrix::from_rows(rows).unwrap();
        let d = s.decomposition_4().unwrap();
        for k in 0..4 {
            assert_eq!(d.coefficients[k], 1.5);
        }
        for k in 4..7 {
            assert_eq!(d.coefficients[k], 1.0);
        }
        assert_eq!(d.alpha_star, 1.0);
        assert_eq!(d.reconstruct()[0][1], 1.0);
    }

    #[test]
    fn four_chamber_paired() {
        let s = mat(&[
            &[0.0, 2.0, 1.0, 1.0],
            &[2.0, 0.0, 1.0, 1.0],
            &[1.0, 1.0, 0.0, 2.0],
            &[1.0, 1.0, 2.0, 0.0],
        ]);
        assert!(s.check_triangle());
        let d = s.decomposition_4().unwrap();
        assert_eq!(d.coefficients[4], 2.0);
        assert_eq!(d.coefficients[5], 1.0);
        assert_eq!(d.coefficients[6], 1.0);
        assert_eq!(d.alpha_star, 2.0);
        let rec = d.reconstruct();
        for (i, row) in rec.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((v - s.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cut_cone_additive_matrix() {
        let a = [1.0, 2.0, 3.0];
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 0.0 } else { a[i] + a[j] }).collect())
            .collect();
        let s = SurfaceTensionMatrix::from_rows(rows).unwrap();
        match s.cut_cone_decomposition().unwrap() {
            CutConeResult::Embeddable(d) => {
                for (i, j) in pair_order(3) {
                    assert!((d.reconstruct_entry(i, j) - s.get(i, j)).abs() < 1e-9);
                }
            }
            CutConeResult::NotEmbeddable { .. } => panic!("additive matrix is embeddable"),
        }
    }

    #[test]
    fn cut_cone_345() {
        let s = mat(&[&[0.0, 3.0, 4.0], &[3.0, 0.0, 5.0], &[4.0, 5.0, 0.0]]);
        match s.cut_cone_decomposition().unwrap() {
            CutConeResult::Embeddable(d) => {
                for (i, j) in pair_order(3) {
                    assert!((d.reconstruct_entry(i, j) - s.get(i, j)).abs() < 1e-9);
                }
            }
            CutConeResult::NotEmbeddable { .. } => panic!("triangle metric with m=3"),
        }
    }

    #[test]
    fn cut_cone_rejects_bipartite_path_metric() {
        // shortest paths of the complete bipartite graph K_{2,3}: the
        // smallest metric outside the cut cone
        let parts = [0, 0, 1, 1, 1];
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..5)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else if parts[i] == parts[j] {
                            2.0
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect();
        let s = SurfaceTensionMatrix::from_rows(rows).unwrap();
        match s.cut_cone_decomposition().unwrap() {
            CutConeResult::Embeddable(_) => panic!("bipartite path metric is not embeddable"),
            CutConeResult::NotEmbeddable { residual } => assert!(residual > 1e-3),
        }
    }

    #[test]
    fn cut_cone_rejects_large_m() {
        let rows: Vec<Vec<f64>> =
            (0..7).map(|i| (0..7).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        let s = SurfaceTensionMatrix::from_rows(rows).unwrap();
        assert!(s.cut_cone_decomposition().is_err());
    }

    #[test]
    fn matrix_text_round_trip() {
        let s = mat(&[&[0.0, 3.25, 4.0], &[3.25, 0.0, 5.5], &[4.0, 5.5, 0.0]]);
        let back = SurfaceTensionMatrix::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn cut_text_round_trip() {
        let s = mat(&[&[0.0, 3.0, 4.0], &[3.0, 0.0, 5.0], &[4.0, 5.0, 0.0]]);
        let CutConeResult::Embeddable(d) = s.cut_cone_decomposition().unwrap() else {
            panic!("embeddable fixture");
        };
        let back = CutDecomposition::<f64>::from_text(&d.to_text(), 3).unwrap();
        for (i, j) in pair_order(3) {
            assert_eq!(back.reconstruct_entry(i, j), d.reconstruct_entry(i, j));
        }
    }

    #[test]
    fn pair_index_matches_order() {
        for m in 2..7 {
            for (k, (i, j)) in pair_order(m).enumerate() {
                assert_eq!(pair_index(m, i, j), k);
            }
        }
    }
}
