//! Low-level multidimensional FFT plumbing shared by the spectral operators.
//!
//! Layout convention: x is the fastest axis, so the linear index of a point
//! is `ix + n*iy (+ n*n*iz)`. All axes have the same length `n`, which lets
//! one pair of 1D plans serve every axis.
//!
//! The forward transform is unnormalized; the inverse carries the full
//! `1/n^dim` factor. Real field pairs are packed into a single complex
//! transform (`a + i b`) in both directions, which halves the FFT count in
//! the per-iteration operator application.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::Arc;

pub(crate) type C64 = Complex<f64>;

/// 1D plans plus the per-axis frequency tables for one grid size.
pub(crate) struct Transforms {
    n: usize,
    dim: usize,
    fwd: Arc<dyn rustfft::Fft<f64>>,
    inv: Arc<dyn rustfft::Fft<f64>>,
    /// Integer frequencies in FFT order scaled by 2*pi/length.
    /// For even n the half bin carries -n/2.
    pub(crate) freq: Vec<f64>,
    /// Same table with the +-n/2 bin zeroed; used by odd-order derivatives
    /// so real input maps to real output.
    pub(crate) freq_deriv: Vec<f64>,
}

impl Transforms {
    pub(crate) fn new(dim: usize, n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scale = 2.0 * std::f64::consts::PI / length;
        let mut freq = vec![0.0; n];
        let mut freq_deriv = vec![0.0; n];
        for j in 0..n {
            let k = if 2 * j <= n { j as i64 } else { j as i64 - n as i64 };
            freq[j] = k as f64 * scale;
            freq_deriv[j] = freq[j];
        }
        if n % 2 == 0 {
            // 2*j == n bin: freq keeps -n/2 (so |k|^2 is full), derivative is zeroed
            freq[n / 2] = -((n / 2) as f64) * scale;
            freq_deriv[n / 2] = 0.0;
        }
        Transforms { n, dim, fwd, inv, freq, freq_deriv }
    }

    pub(crate) fn total(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    /// Transform every line along `axis`, in place.
    fn transform_axis(&self, data: &mut [C64], axis: usize, forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let stride = self.stride(axis);
        let lines = self.total() / n;
        // Walk the (dim-1)-dimensional set of line starts as a mixed-radix counter.
        for li in 0..lines {
            let mut rem = li;
            let mut start = 0;
            for a in 0..self.dim {
                if a == axis {
                    continue;
                }
                start += (rem % n) * self.stride(a);
                rem /= n;
            }
            if stride == 1 {
                line.copy_from_slice(&data[start..start + n]);
            } else {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + j * stride];
                }
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            if stride == 1 {
                data[start..start + n].copy_from_slice(&line);
            } else {
                for (j, slot) in line.iter().enumerate() {
                    data[start + j * stride] = *slot;
                }
            }
        }
    }

    fn transform_all(&self, data: &mut [C64], forward: bool) {
        for axis in 0..self.dim {
            self.transform_axis(data, axis, forward);
        }
    }

    /// Unnormalized forward transform of a real field.
    pub(crate) fn forward(&self, values: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.transform_all(&mut data, true);
        data
    }

    /// Forward transform of two real fields through one complex transform.
    pub(crate) fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<C64>, Vec<C64>) {
        debug_assert_eq!(a.len(), b.len());
        let mut data: Vec<C64> = a
            .iter()
            .zip(b)
            .map(|(&re, &im)| C64::new(re, im))
            .collect();
        self.transform_all(&mut data, true);
        // z = a + i b  =>  a_hat(k) = (z(k) + conj z(-k))/2, b_hat(k) = (z(k) - conj z(-k))/(2i)
        let total = self.total();
        let mut ah = vec![C64::new(0.0, 0.0); total];
        let mut bh = vec![C64::new(0.0, 0.0); total];
        self.for_each_with_neg(|l, lneg| {
            let z = data[l];
            let zn = data[lneg].conj();
            ah[l] = 0.5 * (z + zn);
            let d = z - zn;
            bh[l] = C64::new(0.5 * d.im, -0.5 * d.re); // d / (2i)
        });
        (ah, bh)
    }

    /// Inverse transform (with 1/n^dim) of a conjugate-symmetric spectrum,
    /// keeping the real part.
    pub(crate) fn inverse_real(&self, spectrum: &[C64]) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        self.transform_all(&mut data, false);
        let norm = 1.0 / self.total() as f64;
        data.iter().map(|z| z.re * norm).collect()
    }

    /// Inverse transform of two conjugate-symmetric spectra through one
    /// complex transform of `A + i B`.
    pub(crate) fn inverse_pair_real(&self, a: &[C64], b: &[C64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(a.len(), b.len());
        let mut data: Vec<C64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x + C64::new(-y.im, y.re)) // x + i*y
            .collect();
        self.transform_all(&mut data, false);
        let norm = 1.0 / self.total() as f64;
        let re = data.iter().map(|z| z.re * norm).collect();
        let im = data.iter().map(|z| z.im * norm).collect();
        (re, im)
    }

    /// Visit every mode with its linear index and the index of the negated
    /// wavevector.
    fn for_each_with_neg(&self, mut f: impl FnMut(usize, usize)) {
        let n = self.n;
        match self.dim {
            2 => {
                let mut l = 0;
                for iy in 0..n {
                    let ny = if iy == 0 { 0 } else { n - iy };
                    for ix in 0..n {
                        let nx = if ix == 0 { 0 } else { n - ix };
                        f(l, nx + n * ny);
                        l += 1;
                    }
                }
            }
            3 => {
                let mut l = 0;
                for iz in 0..n {
                    let nz = if iz == 0 { 0 } else { n - iz };
                    for iy in 0..n {
                        let ny = if iy == 0 { 0 } else { n - iy };
                        for ix in 0..n {
                            let nx = if ix == 0 { 0 } else { n - ix };
                            f(l, nx + n * (ny + n * nz));
                            l += 1;
                        }
                    }
                }
            }
            _ => unreachable!("grid dim is 2 or 3"),
        }
    }

    /// Visit every mode with its linear index and |k|^2 (full table, so the
    /// +-n/2 bin contributes (n/2)^2).
    pub(crate) fn for_each_ksq(&self, mut f: impl FnMut(usize, f64)) {
        let n = self.n;
        let fr = &self.freq;
        match self.dim {
            2 => {
                let mut l = 0;
                for iy in 0..n {
                    let ky2 = fr[iy] * fr[iy];
                    for ix in 0..n {
                        f(l, fr[ix] * fr[ix] + ky2);
                        l += 1;
                    }
                }
            }
            3 => {
                let mut l = 0;
                for iz in 0..n {
                    let kz2 = fr[iz] * fr[iz];
                    for iy in 0..n {
                        let kyz = fr[iy] * fr[iy] + kz2;
                        for ix in 0..n {
                            f(l, fr[ix] * fr[ix] + kyz);
                            l += 1;
                        }
                    }
                }
            }
            _ => unreachable!("grid dim is 2 or 3"),
        }
    }

    /// Visit every mode with the derivative wavenumber along `axis`
    /// (Nyquist-zeroed table).
    pub(crate) fn for_each_kaxis(&self, axis: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.n;
        let fr = &self.freq_deriv;
        let total = self.total();
        let stride = self.stride(axis);
        for l in 0..total {
            f(l, fr[(l / stride) % n]);
        }
    }
}
