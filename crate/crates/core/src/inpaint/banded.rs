//! Cholesky factorisation in band storage, used when the same reduced
//! system has to be solved many times (tonal optimisation, echo assembly).

pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds columns i-bw..=i at offsets 0..=bw
    l: Vec<f64>,
}

impl BandCholesky {
    /// `entries(i, push)` must report every `(j, a_ij)` of row `i` with
    /// `i - bw <= j <= i`; entries outside the band are ignored.
    pub(crate) fn factor(n: usize, bw: usize, mut entries: impl FnMut(usize, &mut dyn FnMut(usize, f64))) -> Option<Self> {
        let stride = bw + 1;
        let mut l = vec![0.0; n * stride];
        for i in 0..n {
            let row = &mut l[i * stride..(i + 1) * stride];
            entries(i, &mut |j, v| {
                if j <= i && i - j <= bw {
                    row[j + bw - i] += v;
                }
            });
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = l[i * stride + (j + bw - i)];
                for k in lo..j {
                    s -= l[i * stride + (k + bw - i)] * l[j * stride + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * stride + bw] = s.sqrt();
                } else {
                    l[i * stride + (j + bw - i)] = s / l[j * stride + bw];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }

    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_from(b, 0);
    }

    /// As `solve_in_place` for a right-hand side that is zero before `first`.
    pub(crate) fn solve_from(&self, b: &mut [f64], first: usize) {
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        for i in first..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * stride + (k + bw - i)] * b[k];
            }
            b[i] = s / self.l[i * stride + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * stride + (i + bw - k)] * b[k];
            }
            b[i] = s / self.l[i * stride + bw];
        }
    }

    pub(crate) fn storage_len(n: usize, bw: usize) -> usize {
        n * (bw + 1)
    }
}
