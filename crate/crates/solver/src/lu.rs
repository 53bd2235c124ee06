//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! Columns of the basis are indexed by *slot* (position in the basis) and
//! rows by constraint row. Pivots are chosen with a Markowitz rule that
//! prefers singletons and otherwise applies threshold partial pivoting, which
//! keeps the near-triangular bases of network-like models almost fill-free.

/// Entries below this magnitude are never accepted as pivots.
const ABS_PIVOT_TOL: f64 = 1e-9;
/// Threshold partial pivoting: accept `|a| >= THRESHOLD * max |a_col|`.
const THRESHOLD: f64 = 0.1;
/// Columns examined per Markowitz search.
const SEARCH_COLS: usize = 4;

#[derive(Debug, Clone)]
struct Eta {
    slot: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

/// Rows and slots left without a pivot when the basis is (numerically) singular.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Singular {
    pub slots: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct SparseLu {
    m: usize,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    etas: Vec<Eta>,
}

impl SparseLu {
    /// Factor the `m x m` matrix whose slot `s` column is `columns[s]`
    /// (a list of `(row, value)` pairs without duplicate rows).
    pub fn factor(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut col_count = vec![0usize; m];
        for (s, col) in columns.iter().enumerate() {
            for &(r, v) in col {
                if v != 0.0 {
                    rows[r].push((s, v));
                    col_rows[s].push(r);
                    col_count[s] += 1;
                }
            }
        }
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut pos = vec![0usize; m];

        let mut lu = SparseLu {
            m,
            piv_row: Vec::with_capacity(m),
            piv_col: Vec::with_capacity(m),
            piv_val: Vec::with_capacity(m),
            l_start: vec![0],
            l_idx: Vec::new(),
            l_val: Vec::new(),
            u_start: vec![0],
            u_idx: Vec::new(),
            u_val: Vec::new(),
            etas: Vec::new(),
        };

        for _ in 0..m {
            let Some((r, c)) = choose_pivot(&rows, &col_rows, &col_count, &row_active, &col_active) else {
                break;
            };
            let prow = std::mem::take(&mut rows[r]);
            let pv = prow.iter().find(|e| e.0 == c).map(|e| e.1).unwrap_or(0.0);

            for k in 0..col_rows[c].len() {
                let i = col_rows[c][k];
                if i == r || !row_active[i] {
                    continue;
                }
                let Some(at) = rows[i].iter().position(|e| e.0 == c) else {
                    continue;
                };
                let aic = rows[i].swap_remove(at).1;
                let l = aic / pv;
                for (idx, &(s, _)) in rows[i].iter().enumerate() {
                    pos[s] = idx + 1;
                }
                for &(s, v) in &prow {
                    if s == c {
                        continue;
                    }
                    if pos[s] > 0 {
                        rows[i][pos[s] - 1].1 -= l * v;
                    } else {
                        rows[i].push((s, -l * v));
                        pos[s] = rows[i].len();
                        col_rows[s].push(i);
                        col_count[s] += 1;
                    }
                }
                for &(s, _) in &rows[i] {
                    pos[s] = 0;
                }
                lu.l_idx.push(i);
                lu.l_val.push(l);
            }
            lu.l_start.push(lu.l_idx.len());

            row_active[r] = false;
            col_active[c] = false;
            for &(s, v) in &prow {
                col_count[s] -= 1;
                if s != c {
                    lu.u_idx.push(s);
                    lu.u_val.push(v);
                }
            }
            lu.u_start.push(lu.u_idx.len());
            lu.piv_row.push(r);
            lu.piv_col.push(c);
            lu.piv_val.push(pv);
        }

        if lu.piv_row.len() < m {
            return Err(Singular {
                slots: (0..m).filter(|&s| col_active[s]).collect(),
                rows: (0..m).filter(|&r| row_active[r]).collect(),
            });
        }
        Ok(lu)
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Solve `B x = rhs`; `rhs` is indexed by row, the result by slot.
    pub fn ftran(&self, rhs: &[f64]) -> Vec<f64> {
        let mut work = rhs.to_vec();
        for k in 0..self.piv_row.len() {
            let v = work[self.piv_row[k]];
            if v != 0.0 {
                for p in self.l_start[k]..self.l_start[k + 1] {
                    work[self.l_idx[p]] -= self.l_val[p] * v;
                }
            }
        }
        let mut out = vec![0.0; self.m];
        for k in (0..self.piv_row.len()).rev() {
            let mut v = work[self.piv_row[k]];
            for p in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[p] * out[self.u_idx[p]];
            }
            out[self.piv_col[k]] = v / self.piv_val[k];
        }
        for eta in &self.etas {
            let xr = out[eta.slot] / eta.pivot;
            if xr != 0.0 {
                for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                    out[i] -= a * xr;
                }
            }
            out[eta.slot] = xr;
        }
        out
    }

    /// Solve `B^T y = rhs`; `rhs` is indexed by slot, the result by row.
    pub fn btran(&self, rhs: &[f64]) -> Vec<f64> {
        let mut e = rhs.to_vec();
        for eta in self.etas.iter().rev() {
            let mut v = e[eta.slot];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                v -= a * e[i];
            }
            e[eta.slot] = v / eta.pivot;
        }
        let mut w = vec![0.0; self.m];
        for k in 0..self.piv_row.len() {
            let wr = e[self.piv_col[k]] / self.piv_val[k];
            w[self.piv_row[k]] = wr;
            if wr != 0.0 {
                for p in self.u_start[k]..self.u_start[k + 1] {
                    e[self.u_idx[p]] -= self.u_val[p] * wr;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let mut acc = 0.0;
            for p in self.l_start[k]..self.l_start[k + 1] {
                acc += self.l_val[p] * w[self.l_idx[p]];
            }
            w[self.piv_row[k]] -= acc;
        }
        w
    }

    /// Record that the column in `slot` was replaced by a column whose
    /// FTRAN image under the current factorization is `alpha`.
    pub fn update(&mut self, slot: usize, alpha: &[f64]) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != slot && a.abs() > 1e-14 {
                idx.push(i);
                val.push(a);
            }
        }
        self.etas.push(Eta { slot, pivot: alpha[slot], idx, val });
    }
}

fn choose_pivot(
    rows: &[Vec<(usize, f64)>],
    col_rows: &[Vec<usize>],
    col_count: &[usize],
    row_active: &[bool],
    col_active: &[bool],
) -> Option<(usize, usize)> {
    // Column singletons first.
    let mut best: [(usize, usize); SEARCH_COLS] = [(usize::MAX, usize::MAX); SEARCH_COLS];
    for c in 0..col_count.len() {
        if !col_active[c] || col_count[c] == 0 {
            continue;
        }
        let cnt = col_count[c];
        if cnt == 1 {
            if let Some(r) = col_rows[c].iter().copied().find(|&r| row_active[r]) {
                if let Some(&(_, v)) = rows[r].iter().find(|e| e.0 == c) {
                    if v.abs() >= ABS_PIVOT_TOL {
                        return Some((r, c));
                    }
                }
            }
            continue;
        }
        // keep the SEARCH_COLS sparsest columns, ties by index
        if cnt < best[SEARCH_COLS - 1].0 {
            let mut k = SEARCH_COLS - 1;
            while k > 0 && best[k - 1].0 > cnt {
                best[k] = best[k - 1];
                k -= 1;
            }
            best[k] = (cnt, c);
        }
    }
    // Row singletons.
    for (r, row) in rows.iter().enumerate() {
        if row_active[r] && row.len() == 1 && row[0].1.abs() >= ABS_PIVOT_TOL {
            return Some((r, row[0].0));
        }
    }
    // Markowitz with threshold partial pivoting over the sparsest columns.
    let mut choice: Option<(usize, usize, usize, f64)> = None;
    for &(cnt, c) in best.iter().filter(|b| b.0 != usize::MAX) {
        let entries: Vec<(usize, f64)> = col_rows[c]
            .iter()
            .filter(|&&r| row_active[r])
            .filter_map(|&r| rows[r].iter().find(|e| e.0 == c).map(|e| (r, e.1)))
            .collect();
        let max_abs = entries.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        for (r, v) in entries {
            if v.abs() < ABS_PIVOT_TOL || v.abs() < THRESHOLD * max_abs {
                continue;
            }
            let merit = (rows[r].len() - 1) * (cnt - 1);
            let better = match choice {
                None => true,
                Some((bm, _, _, bv)) => merit < bm || (merit == bm && v.abs() > bv.abs()),
            };
            if better {
                choice = Some((merit, r, c, v));
            }
        }
    }
    choice.map(|(_, r, c, _)| (r, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m).map(|c| (0..m).filter(|&r| a[r][c] != 0.0).map(|r| (r, a[r][c])).collect()).collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = a.len();
        (0..m).map(|c| (0..m).map(|r| a[r][c]).collect()).collect()
    }

    #[test]
    fn solves_dense_system_both_ways() {
        let a = vec![
            vec![4.0, 1.0, 0.0, 2.0],
            vec![1.0, 3.0, 1.0, 0.0],
            vec![0.0, 1.0, 5.0, 1.0],
            vec![2.0, 0.0, 1.0, 6.0],
        ];
        let lu = SparseLu::factor(4, &dense_to_cols(&a)).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let x = lu.ftran(&b);
        for (got, want) in matvec(&a, &x).iter().zip(&b) {
            assert!((got - want).abs() < 1e-12);
        }
        let y = lu.btran(&b);
        for (got, want) in matvec(&transpose(&a), &y).iter().zip(&b) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = vec![vec![-1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, -1.0]];
        let mut lu = SparseLu::factor(3, &dense_to_cols(&a)).unwrap();
        let newcol = [2.0, 1.0, -3.0];
        let alpha = lu.ftran(&newcol);
        lu.update(1, &alpha);
        for r in 0..3 {
            a[r][1] = newcol[r];
        }
        let b = vec![0.3, 1.0, 2.0];
        let x = lu.ftran(&b);
        for (got, want) in matvec(&a, &x).iter().zip(&b) {
            assert!((got - want).abs() < 1e-12);
        }
        let y = lu.btran(&b);
        for (got, want) in matvec(&transpose(&a), &y).iter().zip(&b) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_rows_and_slots() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let err = SparseLu::factor(3, &dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.slots.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
