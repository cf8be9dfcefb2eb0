//! Symmetric envelope (skyline) storage with in-place Cholesky.
//!
//! Only the lower triangle is stored, row by row, from the first structurally
//! non-zero column up to the diagonal. Cholesky fill stays inside that
//! envelope, so an odometry chain with a few long-range loop edges factors in
//! time linear in the number of nodes times the loop spans.

#[derive(Clone, Debug)]
pub(crate) struct Skyline {
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    /// `first[r]` is the first stored column of row `r` (must be `<= r`).
    pub(crate) fn with_envelope(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (r, &f) in first.iter().enumerate() {
            debug_assert!(f <= r);
            offset.push(total);
            total += r - f + 1;
        }
        offset.push(total);
        Self {
            first,
            offset,
            values: vec![0.0; total],
        }
    }

    /// Envelope for 6×6 blocks where `first_block[b]` is the lowest block
    /// column coupled to block row `b`.
    pub(crate) fn with_block_envelope(first_block: &[usize], block: usize) -> Self {
        let first = first_block
            .iter()
            .flat_map(|&fb| std::iter::repeat_n(fb * block, block))
            .collect();
        Self::with_envelope(first)
    }

    pub(crate) fn dim(&self) -> usize {
        self.first.len()
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && c >= self.first[r]);
        self.offset[r] + (c - self.first[r])
    }

    /// Reads `A[r][c]` for any `r, c` using symmetry; zero outside the envelope.
    #[cfg(test)]
    pub(crate) fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.idx(r, c)]
        }
    }

    /// Adds to the lower-triangle entry `(r, c)` with `c <= r`.
    #[inline]
    pub(crate) fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.values[i] += v;
    }

    pub(crate) fn diagonal(&self, r: usize) -> f64 {
        self.values[self.idx(r, r)]
    }

    /// In-place Cholesky `A = L·Lᵀ`. Returns `false` if `A` is not positive definite.
    pub(crate) fn factor(&mut self) -> bool {
        let n = self.dim();
        for r in 0..n {
            let fr = self.first[r];
            let row_r = self.offset[r];
            for c in fr..=r {
                let fc = self.first[c];
                let row_c = self.offset[c];
                let start = fr.max(fc);
                let mut s = self.values[row_r + (c - fr)];
                for k in start..c {
                    s -= self.values[row_r + (k - fr)] * self.values[row_c + (k - fc)];
                }
                if c < r {
                    s /= self.values[row_c + (c - fc)];
                    self.values[row_r + (c - fr)] = s;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return false;
                    }
                    self.values[row_r + (c - fr)] = s.sqrt();
                }
            }
        }
        true
    }

    /// Solves `L·Lᵀ·x = b` after [`Skyline::factor`].
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for r in 0..n {
            let fr = self.first[r];
            let row = self.offset[r];
            let mut s = x[r];
            for k in fr..r {
                s -= self.values[row + (k - fr)] * x[k];
            }
            x[r] = s / self.values[row + (r - fr)];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let row = self.offset[r];
            x[r] /= self.values[row + (r - fr)];
            let xr = x[r];
            for k in fr..r {
                x[k] -= self.values[row + (k - fr)] * xr;
            }
        }
        x
    }
}
