use crate::error::{Error, Result};

/// Sparse sum `out[b, u, :] = scale · Σ_{(v, r) ∈ N(u)} K[r] · x[b, v, :]`,
/// where each `K[r]` is a `c_out × c_in` block.
///
/// Entries of each output are stored contiguously (CSR layout) in the order they
/// were pushed, which fixes the reduction order.
#[derive(Clone, Debug)]
pub struct ContractionPattern {
    n_in: usize,
    n_rows: usize,
    out_ptr: Vec<usize>,
    inputs: Vec<u32>,
    rows: Vec<u32>,
    scale: f64,
}

impl ContractionPattern {
    pub fn new(n_in: usize, n_rows: usize, scale: f64) -> Self {
        Self {
            n_in,
            n_rows,
            out_ptr: vec![0],
            inputs: Vec::new(),
            rows: Vec::new(),
            scale,
        }
    }

    /// Appends one output sample with its `(input index, kernel row)` entries.
    pub fn push_output(&mut self, entries: impl IntoIterator<Item = (usize, usize)>) {
        for (v, r) in entries {
            debug_assert!(v < self.n_in && r < self.n_rows);
            self.inputs.push(v as u32);
            self.rows.push(r as u32);
        }
        self.out_ptr.push(self.inputs.len());
    }

    pub fn n_out(&self) -> usize {
        self.out_ptr.len() - 1
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_entries(&self) -> usize {
        self.inputs.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn set_n_rows(&mut self, n_rows: usize) {
        self.n_rows = n_rows;
    }

    /// `(input, row)` entries of output `u`.
    pub fn entries(&self, u: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (a, b) = (self.out_ptr[u], self.out_ptr[u + 1]);
        self.inputs[a..b]
            .iter()
            .zip(&self.rows[a..b])
            .map(|(&v, &r)| (v as usize, r as usize))
    }

    pub fn neighborhood_size(&self, u: usize) -> usize {
        self.out_ptr[u + 1] - self.out_ptr[u]
    }

    fn check(
        &self,
        kernel: usize,
        input: usize,
        batch: usize,
        c_in: usize,
        c_out: usize,
    ) -> Result<()> {
        if kernel != self.n_rows * c_out * c_in {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows * c_out * c_in,
                found: kernel,
                context: "contraction kernel rows",
            });
        }
        if input != batch * self.n_in * c_in {
            return Err(Error::DimensionMismatch {
                expected: batch * self.n_in * c_in,
                found: input,
                context: "contraction input",
            });
        }
        Ok(())
    }

    pub fn forward(
        &self,
        kernel: &[f64],
        input: &[f64],
        batch: usize,
        c_in: usize,
        c_out: usize,
    ) -> Result<Vec<f64>> {
        self.check(kernel.len(), input.len(), batch, c_in, c_out)?;
        let n_out = self.n_out();
        let block = c_out * c_in;
        let mut out = vec![0.0; batch * n_out * c_out];
        let mut acc = vec![0.0; c_out];
        for b in 0..batch {
            let x_b = &input[b * self.n_in * c_in..(b + 1) * self.n_in * c_in];
            for u in 0..n_out {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (v, r) in self.entries(u) {
                    let k = &kernel[r * block..(r + 1) * block];
                    let x = &x_b[v * c_in..(v + 1) * c_in];
                    for (a, k_row) in acc.iter_mut().zip(k.chunks_exact(c_in)) {
                        *a += k_row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                    }
                }
                let dst = &mut out[(b * n_out + u) * c_out..(b * n_out + u + 1) * c_out];
                for (d, a) in dst.iter_mut().zip(&acc) {
                    *d = a * self.scale;
                }
            }
        }
        Ok(out)
    }

    /// Accumulates vector-Jacobian products into `grad_kernel` and `grad_input`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        kernel: &[f64],
        input: &[f64],
        grad_out: &[f64],
        batch: usize,
        c_in: usize,
        c_out: usize,
        mut grad_kernel: Option<&mut [f64]>,
        mut grad_input: Option<&mut [f64]>,
    ) -> Result<()> {
        self.check(kernel.len(), input.len(), batch, c_in, c_out)?;
        let n_out = self.n_out();
        let block = c_out * c_in;
        let mut g = vec![0.0; c_out];
        for b in 0..batch {
            let base_in = b * self.n_in * c_in;
            for u in 0..n_out {
                let src = &grad_out[(b * n_out + u) * c_out..(b * n_out + u + 1) * c_out];
                for (gi, s) in g.iter_mut().zip(src) {
                    *gi = s * self.scale;
                }
                if g.iter().all(|&x| x == 0.0) {
                    continue;
                }
                for (v, r) in self.entries(u) {
                    let x_off = base_in + v * c_in;
                    if let Some(gk) = grad_kernel.as_deref_mut() {
                        let x = &input[x_off..x_off + c_in];
                        let gk = &mut gk[r * block..(r + 1) * block];
                        for (gk_row, &go) in gk.chunks_exact_mut(c_in).zip(&g) {
                            for (dst, xi) in gk_row.iter_mut().zip(x) {
                                *dst += go * xi;
                            }
                        }
                    }
                    if let Some(gx) = grad_input.as_deref_mut() {
                        let k = &kernel[r * block..(r + 1) * block];
                        let gx = &mut gx[x_off..x_off + c_in];
                        for (k_row, &go) in k.chunks_exact(c_in).zip(&g) {
                            for (dst, kv) in gx.iter_mut().zip(k_row) {
                                *dst += go * kv;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
