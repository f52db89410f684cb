//! Sparse matrix storage, Matrix Market ingestion, synthetic problem
//! generators, and the block-row partition that defines the virtual
//! message-passing layout.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::reduction::{DotMode, ReductionPlan};

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("malformed Matrix Market header: {0}")]
    BadHeader(String),
    #[error("unsupported Matrix Market field `{0}` (need real or integer)")]
    UnsupportedField(String),
    #[error("unsupported Matrix Market symmetry `{0}` (need general or symmetric)")]
    UnsupportedSymmetry(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({row}, {col}) out of range for a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("malformed entry on line {line}: {msg}")]
    BadEntry { line: usize, msg: String },
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("half bandwidth {hb} must be smaller than the matrix size {n}")]
    BandTooWide { hb: usize, n: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Square sparse matrix in compressed-row form. Within each row the column
/// indices are strictly increasing; this canonical order is what makes the
/// sequential fma chain of the SpMV deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from unordered (row, col, value) triplets. Duplicates are
    /// summed; rows end up sorted by column.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<CsrMatrix, MatrixError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(MatrixError::IndexOutOfRange { row: r, col: c, n });
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut it = row.iter().peekable();
            while let Some(&(c, v)) = it.next() {
                let mut sum = v;
                while let Some(&&(c2, v2)) = it.peek() {
                    if c2 != c {
                        break;
                    }
                    sum += v2;
                    it.next();
                }
                col_idx.push(c);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix { n, row_ptr, col_idx, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// (column, value) pairs of row `i` in canonical order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c, v))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .find(|&(c, _)| c == i)
                    .map(|(_, v)| v)
                    .unwrap_or(0.0)
            })
            .collect()
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }
}

/// Parse a Matrix Market coordinate file: real or integer field, general or
/// symmetric symmetry. Symmetric inputs are expanded to full storage,
/// duplicates summed, indices converted to 0-based.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<CsrMatrix, MatrixError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(MatrixError::BadHeader("empty input".into())),
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5
        || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket")
        || !tokens[1].eq_ignore_ascii_case("matrix")
        || !tokens[2].eq_ignore_ascii_case("coordinate")
    {
        return Err(MatrixError::BadHeader(header));
    }
    let field = tokens[3].to_ascii_lowercase();
    if field != "real" && field != "integer" {
        return Err(MatrixError::UnsupportedField(field));
    }
    let symmetry = tokens[4].to_ascii_lowercase();
    let symmetric = match symmetry.as_str() {
        "general" => false,
        "symmetric" => true,
        _ => return Err(MatrixError::UnsupportedSymmetry(symmetry)),
    };

    // Skip comments, then the size line.
    let (size_lineno, size_line) = loop {
        let (no, line) = match lines.next() {
            Some((no, line)) => (no, line?),
            None => return Err(MatrixError::BadHeader("missing size line".into())),
        };
        if !line.trim_start().starts_with('%') && !line.trim().is_empty() {
            break (no, line);
        }
    };
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e: std::num::ParseIntError| MatrixError::BadEntry {
            line: size_lineno + 1,
            msg: e.to_string(),
        })?;
    if dims.len() != 3 {
        return Err(MatrixError::BadEntry {
            line: size_lineno + 1,
            msg: "size line needs rows, cols, nnz".into(),
        });
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    if rows != cols {
        return Err(MatrixError::NotSquare { rows, cols });
    }

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0usize;
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let parse_idx = |s: Option<&str>| -> Result<usize, MatrixError> {
            s.and_then(|x| x.parse::<usize>().ok())
                .ok_or_else(|| MatrixError::BadEntry { line: no + 1, msg: t.to_string() })
        };
        let r = parse_idx(it.next())?;
        let c = parse_idx(it.next())?;
        let v: f64 = it
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| MatrixError::BadEntry { line: no + 1, msg: t.to_string() })?;
        if r < 1 || r > rows || c < 1 || c > cols {
            return Err(MatrixError::IndexOutOfRange { row: r, col: c, n: rows });
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(MatrixError::BadEntry {
            line: 0,
            msg: format!("expected {nnz} entries, found {seen}"),
        });
    }
    CsrMatrix::from_triplets(rows, triplets)
}

/// Write coordinate-format Matrix Market (real, general, 1-based).
/// Values use the shortest round-trip decimal form, so parse(write(m)) == m.
pub fn write_matrix_market(m: &CsrMatrix, mut w: impl Write) -> Result<(), MatrixError> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.n(), m.n(), m.nnz())?;
    for i in 0..m.n() {
        for (c, v) in m.row(i) {
            writeln!(w, "{} {} {}", i + 1, c + 1, v)?;
        }
    }
    Ok(())
}

/// 27-point Poisson stencil on an `m`^3 grid: central coefficient 26,
/// neighbors -1, boundary rows truncated. With `perturb`, every sub-diagonal
/// entry is multiplied by `1.0 - 0.0001`, breaking symmetry.
pub fn gen_poisson27(m: usize, perturb: bool) -> Result<CsrMatrix, MatrixError> {
    if m < 2 {
        return Err(MatrixError::GridTooSmall(m));
    }
    let n = m * m * m;
    let idx = |x: usize, y: usize, z: usize| (z * m + y) * m + x;
    let mut triplets = Vec::with_capacity(27 * n);
    for z in 0..m {
        for y in 0..m {
            for x in 0..m {
                let row = idx(x, y, z);
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny, nz) =
                                (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if nx < 0 || ny < 0 || nz < 0 {
                                continue;
                            }
                            let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                            if nx >= m || ny >= m || nz >= m {
                                continue;
                            }
                            let col = idx(nx, ny, nz);
                            let mut v = if col == row { 26.0 } else { -1.0 };
                            if perturb && col < row {
                                v *= 1.0 - 0.0001;
                            }
                            triplets.push((row, col, v));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, triplets)
}

/// Diagonally dominant band matrix: diagonal `2*hb + 1`, off-band entries
/// drawn from a fixed-seed generator in (0, 1). Actual nnz accounts for
/// boundary truncation.
pub fn gen_band(n: usize, half_bandwidth: usize) -> Result<CsrMatrix, MatrixError> {
    if half_bandwidth >= n {
        return Err(MatrixError::BandTooWide { hb: half_bandwidth, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xB4AD);
    let diag = (2 * half_bandwidth + 1) as f64;
    let mut triplets = Vec::new();
    for i in 0..n {
        let lo = i.saturating_sub(half_bandwidth);
        let hi = (i + half_bandwidth).min(n - 1);
        for j in lo..=hi {
            let v = if j == i { diag } else { rng.gen_range(f64::MIN_POSITIVE..1.0) };
            triplets.push((i, j, v));
        }
    }
    CsrMatrix::from_triplets(n, triplets)
}

/// Contiguous block-row partition into `K` ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPartition {
    offsets: Vec<usize>,
}

impl RowPartition {
    pub fn ranks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Row range owned by rank `k`.
    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn slice<'a>(&self, k: usize, v: &'a [f64]) -> &'a [f64] {
        &v[self.range(k)]
    }
}

/// Block sizes `ceil(n/K)` for the first `n mod K` ranks, `floor(n/K)`
/// for the rest.
pub fn partition_rows(n: usize, ranks: usize) -> RowPartition {
    assert!(ranks >= 1 && ranks <= n, "need 1 <= ranks <= n");
    let base = n / ranks;
    let extra = n % ranks;
    let mut offsets = Vec::with_capacity(ranks + 1);
    offsets.push(0);
    for k in 0..ranks {
        let size = base + usize::from(k < extra);
        offsets.push(offsets[k] + size);
    }
    RowPartition { offsets }
}

/// Virtual message-passing context: partition, reduction tree policy, and
/// accumulation mode shared by all collective operations.
#[derive(Debug, Clone)]
pub struct RankWorld {
    pub partition: RowPartition,
    pub plan: ReductionPlan,
    pub mode: DotMode,
}

impl RankWorld {
    pub fn new(partition: RowPartition, plan: ReductionPlan, mode: DotMode) -> RankWorld {
        RankWorld { partition, plan, mode }
    }

    pub fn ranks(&self) -> usize {
        self.partition.ranks()
    }
}

/// Assemble per-rank slices into the replicated full vector: plain
/// concatenation in rank order, no arithmetic.
pub fn allgather(partition: &RowPartition, local: &[&[f64]]) -> Vec<f64> {
    assert_eq!(local.len(), partition.ranks());
    let mut out = Vec::with_capacity(partition.n());
    for (k, slice) in local.iter().enumerate() {
        assert_eq!(slice.len(), partition.range(k).len());
        out.extend_from_slice(slice);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parse_identity() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 1.0\n";
        let m = parse_matrix_market(Cursor::new(text)).unwrap();
        assert_eq!(m.row_ptr(), &[0, 1, 2]);
        assert_eq!(m.col_idx(), &[0, 1]);
        assert_eq!(m.values(), &[1.0, 1.0]);
    }

    #[test]
    fn parse_symmetric_expands() {
        // Lower triangle of a 3x3 tridiagonal: 5 stored entries, 7 after
        // expansion.
        let text = "%%MatrixMarket matrix coordinate real symmetric\n\
                    3 3 5\n1 1 2.0\n2 1 -1.0\n2 2 2.0\n3 2 -1.0\n3 3 2.0\n";
        let m = parse_matrix_market(Cursor::new(text)).unwrap();
        assert_eq!(m.nnz(), 7);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (1, -1.0)]);
    }

    #[test]
    fn parse_sums_duplicates() {
        let text = "%%MatrixMarket matrix coordinate real general\n\
                    2 2 3\n1 1 1.5\n1 1 2.5\n2 2 1.0\n";
        let m = parse_matrix_market(Cursor::new(text)).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.values()[0], 4.0);
    }

    #[test]
    fn parse_rejects_bad_inputs() {
        let nonsquare = "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(nonsquare)),
            Err(MatrixError::NotSquare { .. })
        ));
        let pattern = "%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(pattern)),
            Err(MatrixError::UnsupportedField(_))
        ));
        let oob = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(oob)),
            Err(MatrixError::IndexOutOfRange { .. })
        ));
        let junk = "not a matrix\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(junk)),
            Err(MatrixError::BadHeader(_))
        ));
    }

    #[test]
    fn roundtrip_is_identical() {
        let m = gen_poisson27(3, true).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let m2 = parse_matrix_market(Cursor::new(buf)).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn poisson27_m2_all_adjacent() {
        let m = gen_poisson27(2, false).unwrap();
        assert_eq!(m.n(), 8);
        for i in 0..8 {
            assert_eq!(m.row(i).count(), 8);
        }
    }

    #[test]
    fn poisson27_interior_row() {
        let m = gen_poisson27(4, false).unwrap();
        // Interior point (1,1,1).
        let row = (1 * 4 + 1) * 4 + 1;
        let entries: Vec<_> = m.row(row).collect();
        assert_eq!(entries.len(), 27);
        for (c, v) in entries {
            if c == row {
                assert_eq!(v, 26.0);
            } else {
                assert_eq!(v, -1.0);
            }
        }
    }

    #[test]
    fn poisson27_perturbation_breaks_symmetry() {
        let sym = gen_poisson27(3, false).unwrap();
        let unsym = gen_poisson27(3, true).unwrap();
        let asym_count = |m: &CsrMatrix| {
            let mut count = 0;
            for i in 0..m.n() {
                for (j, v) in m.row(i) {
                    let vt = m.row(j).find(|&(c, _)| c == i).map(|(_, v)| v).unwrap_or(0.0);
                    if v != vt {
                        count += 1;
                    }
                }
            }
            count
        };
        assert_eq!(asym_count(&sym), 0);
        assert!(asym_count(&unsym) > 0);
    }

    #[test]
    fn band_shapes() {
        let tri = gen_band(5, 1).unwrap();
        assert_eq!(tri.nnz(), 13); // 3*5 - 2
        let diag = gen_band(4, 0).unwrap();
        assert_eq!(diag.nnz(), 4);
        // Seeded generation is reproducible.
        assert_eq!(gen_band(6, 2).unwrap(), gen_band(6, 2).unwrap());
        assert!(matches!(gen_band(3, 3), Err(MatrixError::BandTooWide { .. })));
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_rows(10, 3).offsets(), &[0, 4, 7, 10]);
        assert_eq!(partition_rows(5, 5).offsets(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(partition_rows(7, 1).offsets(), &[0, 7]);
    }

    #[test]
    fn partition_covers_everything() {
        for n in 1..=12 {
            for k in 1..=n {
                let p = partition_rows(n, k);
                assert_eq!(p.ranks(), k);
                assert_eq!(p.n(), n);
                for w in p.offsets().windows(2) {
                    assert!(w[0] < w[1]);
                }
            }
        }
    }

    #[test]
    fn allgather_concatenates() {
        let p = partition_rows(6, 3);
        let full: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let slices: Vec<&[f64]> = (0..3).map(|k| p.slice(k, &full)).collect();
        assert_eq!(allgather(&p, &slices), full);

        let p1 = partition_rows(4, 1);
        let v = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(allgather(&p1, &[&v]), v);
    }
}
