//! Bordered banded direct solver.
//!
//! The 2D grids order their unknowns row-major, which makes the Laplacian
//! block banded. A handful of unknowns fall outside the band structure: the
//! shared constants of redistribution components and, on periodic grids, the
//! nodes of the last grid row/column whose wrap-around edges would destroy
//! the bandwidth. Those go into a dense border, eliminated through a Schur
//! complement after a single banded LU factorisation:
//!
//! ```text
//! [ A  B ] [x]   [f]        A x = f - B y  with  (C - E A^{-1} B) y = g - E A^{-1} f
//! [ E  C ] [y] = [g]
//! ```
//!
//! `A` is factorised without pivoting; the assembled systems are diagonally
//! dominant, and a vanishing pivot is reported as a solve failure rather than
//! patched over.

use super::SolveError;
use nalgebra::{DMatrix, DVector};

pub struct BorderedBand {
    n_band: usize,
    n_border: usize,
    bw: usize,
    /// Row-major band storage: entry (i, j) lives at `band[i * width + (j - i + bw)]`.
    band: Vec<f64>,
    /// Coupling blocks.
    b_cols: Vec<f64>, // n_band x n_border
    e_rows: Vec<f64>, // n_border x n_band
    corner: Vec<f64>, // n_border x n_border
}

impl BorderedBand {
    pub fn new(n_band: usize, bw: usize, n_border: usize) -> Self {
        BorderedBand {
            n_band,
            n_border,
            bw,
            band: vec![0.0; n_band * (2 * bw + 1)],
            b_cols: vec![0.0; n_band * n_border],
            e_rows: vec![0.0; n_border * n_band],
            corner: vec![0.0; n_border * n_border],
        }
    }

    pub fn n(&self) -> usize {
        self.n_band + self.n_border
    }

    #[inline]
    fn band_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    /// Accumulate into entry (i, j); indices `>= n_band` address the border.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        match (i < self.n_band, j < self.n_band) {
            (true, true) => {
                let idx = self.band_idx(i, j);
                self.band[idx] += v;
            }
            (true, false) => self.b_cols[i * self.n_border + (j - self.n_band)] += v,
            (false, true) => self.e_rows[(i - self.n_band) * self.n_band + j] += v,
            (false, false) => {
                self.corner[(i - self.n_band) * self.n_border + (j - self.n_band)] += v
            }
        }
    }

    /// Factor and solve for several right-hand sides at once.
    pub fn solve(mut self, rhs: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, SolveError> {
        let (n, bw) = (self.n_band, self.bw);
        let width = 2 * bw + 1;
        // In-place banded LU (Doolittle, no pivoting).
        for k in 0..n {
            let pivot = self.band[k * width + bw];
            if pivot.abs() < 1e-300 {
                return Err(SolveError::LinearSolveFailure(format!(
                    "zero pivot at band row {k}"
                )));
            }
            let i_max = (k + bw).min(n.saturating_sub(1));
            for i in (k + 1)..=i_max {
                let idx_ik = self.band_idx(i, k);
                let l = self.band[idx_ik] / pivot;
                if l != 0.0 {
                    self.band[idx_ik] = l;
                    let j_max = (k + bw).min(n - 1);
                    for j in (k + 1)..=j_max {
                        let a_kj = self.band[self.band_idx(k, j)];
                        if a_kj != 0.0 {
                            let idx = self.band_idx(i, j);
                            self.band[idx] -= l * a_kj;
                        }
                    }
                } else {
                    self.band[idx_ik] = 0.0;
                }
            }
        }

        let band_solve = |band: &BorderedBand, mut v: Vec<f64>| -> Vec<f64> {
            let (n, bw) = (band.n_band, band.bw);
            for i in 0..n {
                let j_lo = i.saturating_sub(bw);
                let mut s = v[i];
                for j in j_lo..i {
                    s -= band.band[band.band_idx(i, j)] * v[j];
                }
                v[i] = s;
            }
            for i in (0..n).rev() {
                let j_hi = (i + bw).min(n.saturating_sub(1));
                let mut s = v[i];
                for j in (i + 1)..=j_hi.max(i) {
                    if j > i {
                        s -= band.band[band.band_idx(i, j)] * v[j];
                    }
                }
                v[i] = s / band.band[band.band_idx(i, i)];
            }
            v
        };

        if self.n_border == 0 {
            return Ok(rhs
                .into_iter()
                .map(|r| {
                    debug_assert_eq!(r.len(), n);
                    band_solve(&self, r)
                })
                .collect());
        }

        // X = A^{-1} B, one banded solve per border column.
        let m = self.n_border;
        let mut x_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
        for c in 0..m {
            let col: Vec<f64> = (0..n).map(|i| self.b_cols[i * m + c]).collect();
            x_cols.push(band_solve(&self, col));
        }
        // Schur complement S = C - E X.
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                let mut s = self.corner[r * m + c];
                for i in 0..n {
                    s -= self.e_rows[r * n + i] * x_cols[c][i];
                }
                schur[(r, c)] = s;
            }
        }
        let schur_lu = schur.lu();

        let mut out = Vec::with_capacity(rhs.len());
        for r in rhs {
            debug_assert_eq!(r.len(), n + m);
            let (f, g) = r.split_at(n);
            let y = band_solve(&self, f.to_vec());
            let mut gg = DVector::<f64>::zeros(m);
            for row in 0..m {
                let mut s = g[row];
                for i in 0..n {
                    s -= self.e_rows[row * n + i] * y[i];
                }
                gg[row] = s;
            }
            let yc = schur_lu
                .solve(&gg)
                .ok_or_else(|| SolveError::LinearSolveFailure("singular Schur complement".into()))?;
            let mut sol = vec![0.0; n + m];
            for i in 0..n {
                let mut s = y[i];
                for c in 0..m {
                    s -= x_cols[c][i] * yc[c];
                }
                sol[i] = s;
            }
            for c in 0..m {
                sol[n + c] = yc[c];
            }
            out.push(sol);
        }
        Ok(out)
    }
}
