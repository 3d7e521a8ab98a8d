//! Normal-equation operators for the filter objective and the first-frame
//! joint filter/projection problem, plus a preconditioned conjugate-gradient
//! driver shared by both.
//!
//! Filters are handled through `u = conj(F)`, so a response spectrum is
//! `R = sum_c u_c * Z_c` (elementwise). With `N` grid cells the objective in
//! spatial units is
//!
//! ```text
//! E(u) = 1/N * ( sum_l pi_l |R_l - Y|^2 + sum_c u_c^H M u_c )
//! M u  = conj(FFT(w^2 . IFFT(conj(u))))
//! ```
//!
//! which is the weighted squared label error plus `sum_c |w . f_c|^2`.

use num_complex::Complex64;

use super::fft::Fft2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[inline]
pub(crate) fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Preconditioned conjugate gradient on a Hermitian positive semi-definite
/// operator. `diag` is a Jacobi preconditioner. `observe` sees the iterate
/// after every step.
pub(crate) fn pcg(
    x: &mut [Complex64],
    b: &[Complex64],
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    diag: &[f64],
    iterations: usize,
    mut observe: impl FnMut(&[Complex64]),
) {
    let ax = apply(x);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<Complex64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = re_dot(&r, &z);
    for _ in 0..iterations {
        if rz.abs() < 1e-300 {
            break;
        }
        let ap = apply(&p);
        let pap = re_dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for ((xi, pi), (ri, api)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
            *xi += pi * alpha;
            *ri -= api * alpha;
        }
        observe(x);
        for ((zi, ri), d) in z.iter_mut().zip(&r).zip(diag) {
            *zi = ri / d;
        }
        let rz_new = re_dot(&r, &z);
        let beta = rz_new / rz;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
        rz = rz_new;
    }
}

/// Regularisation operator `M` applied channel by channel.
pub(crate) fn apply_reg(fft: &Fft2, reg_sq: &[f64], u: &[Complex64], out: &mut [Complex64]) {
    let n = fft.len();
    let mut buf = vec![ZERO; n];
    for (uc, oc) in u.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        for (b, v) in buf.iter_mut().zip(uc) {
            *b = v.conj();
        }
        fft.inverse(&mut buf);
        for (b, w2) in buf.iter_mut().zip(reg_sq) {
            *b *= *w2;
        }
        fft.forward(&mut buf);
        for (o, b) in oc.iter_mut().zip(&buf) {
            *o += b.conj();
        }
    }
}

/// `sum_c |w . f_c|^2` with `f_c = IFFT(conj(u_c))`.
pub(crate) fn reg_energy(fft: &Fft2, reg_sq: &[f64], u: &[Complex64]) -> f64 {
    let n = fft.len();
    let mut buf = vec![ZERO; n];
    let mut total = 0.0;
    for uc in u.chunks_exact(n) {
        for (b, v) in buf.iter_mut().zip(uc) {
            *b = v.conj();
        }
        fft.inverse(&mut buf);
        total += buf.iter().zip(reg_sq).map(|(b, w2)| w2 * b.norm_sqr()).sum::<f64>();
    }
    total
}

/// Response spectrum `sum_c u_c Z_c`.
pub(crate) fn response_spectrum(u: &[Complex64], z: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut r = vec![ZERO; n];
    for (uc, zc) in u.chunks_exact(n).zip(z.chunks_exact(n)) {
        for ((ri, ui), zi) in r.iter_mut().zip(uc).zip(zc) {
            *ri += ui * zi;
        }
    }
    r
}

/// Makes every channel spectrum Hermitian-symmetric, i.e. the spectrum of a
/// real filter.
pub(crate) fn symmetrize(u: &mut [Complex64], width: usize, height: usize) {
    let n = width * height;
    for uc in u.chunks_exact_mut(n) {
        let orig = uc.to_vec();
        for y in 0..height {
            for x in 0..width {
                let my = (height - y) % height;
                let mx = (width - x) % width;
                uc[y * width + x] = (orig[y * width + x] + orig[my * width + mx].conj()) * 0.5;
            }
        }
    }
}

/// The filter-only problem with a fixed projection.
pub(crate) struct FilterProblem<'a> {
    pub fft: &'a Fft2,
    pub samples: Vec<(&'a [Complex64], f64)>,
    pub label: &'a [Complex64],
    pub reg_sq: &'a [f64],
    pub channels: usize,
}

impl FilterProblem<'_> {
    fn n(&self) -> usize {
        self.fft.len()
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let mut out = vec![ZERO; u.len()];
        apply_reg(self.fft, self.reg_sq, u, &mut out);
        for &(z, pi) in &self.samples {
            let r = response_spectrum(u, z, n);
            for (oc, zc) in out.chunks_exact_mut(n).zip(z.chunks_exact(n)) {
                for ((o, zi), ri) in oc.iter_mut().zip(zc).zip(&r) {
                    *o += zi.conj() * ri * pi;
                }
            }
        }
        out
    }

    pub fn rhs(&self) -> Vec<Complex64> {
        let n = self.n();
        let mut b = vec![ZERO; self.channels * n];
        for &(z, pi) in &self.samples {
            for (bc, zc) in b.chunks_exact_mut(n).zip(z.chunks_exact(n)) {
                for ((bi, zi), yi) in bc.iter_mut().zip(zc).zip(self.label) {
                    *bi += zi.conj() * yi * pi;
                }
            }
        }
        b
    }

    pub fn preconditioner(&self) -> Vec<f64> {
        let n = self.n();
        let mean_reg = self.reg_sq.iter().sum::<f64>() / n as f64;
        let mut d = vec![mean_reg; self.channels * n];
        for &(z, pi) in &self.samples {
            for (di, zi) in d.iter_mut().zip(z) {
                *di += pi * zi.norm_sqr();
            }
        }
        d
    }

    /// Weighted squared label error over all samples, spatial units.
    pub fn data_term(&self, u: &[Complex64]) -> f64 {
        let n = self.n();
        self.samples
            .iter()
            .map(|&(z, pi)| {
                let r = response_spectrum(u, z, n);
                pi * r.iter().zip(self.label).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            / n as f64
    }

    pub fn objective(&self, u: &[Complex64]) -> f64 {
        self.data_term(u) + reg_energy(self.fft, self.reg_sq, u)
    }

    pub fn solve(&self, u: &mut [Complex64], iterations: usize, observe: impl FnMut(&[Complex64])) {
        let b = self.rhs();
        let d = self.preconditioner();
        pcg(u, &b, |v| self.apply(v), &d, iterations, observe);
    }
}

/// Gauss-Newton linearisation of the joint filter/projection objective for
/// a single sample around `(u0, P0)`. Unknowns are packed as `[u; dP]` with
/// `u` the new filters and `dP` the projection increment (real parts only).
pub(crate) struct JointProblem<'a> {
    pub fft: &'a Fft2,
    /// Unprojected sample spectra, `D x N`.
    pub sample: &'a [Complex64],
    /// Current filters, `C x N`.
    pub u0: &'a [Complex64],
    /// Sample projected with the current matrix, `C x N`.
    pub z0: &'a [Complex64],
    pub label: &'a [Complex64],
    pub reg_sq: &'a [f64],
    pub dims: usize,
    pub basis: usize,
}

impl JointProblem<'_> {
    fn n(&self) -> usize {
        self.fft.len()
    }

    /// `sum_c u0_c * (dP^T X)_c`.
    fn projection_response(&self, dp: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let mut e = vec![ZERO; n];
        let mut q = vec![ZERO; n];
        for c in 0..self.basis {
            q.iter_mut().for_each(|v| *v = ZERO);
            for d in 0..self.dims {
                let p = dp[d * self.basis + c].re;
                if p == 0.0 {
                    continue;
                }
                for (qi, xi) in q.iter_mut().zip(&self.sample[d * n..(d + 1) * n]) {
                    *qi += xi * p;
                }
            }
            for ((ei, qi), ui) in e.iter_mut().zip(&q).zip(&self.u0[c * n..(c + 1) * n]) {
                *ei += ui * qi;
            }
        }
        e
    }

    /// Adjoint of the projection part: `Re sum_k conj(u0_c X_d) e`.
    fn projection_adjoint(&self, e: &[Complex64], out: &mut [Complex64]) {
        let n = self.n();
        for c in 0..self.basis {
            let uc = &self.u0[c * n..(c + 1) * n];
            let ue: Vec<Complex64> = uc.iter().zip(e).map(|(u, e)| u.conj() * e).collect();
            for d in 0..self.dims {
                let xd = &self.sample[d * n..(d + 1) * n];
                let s: f64 = xd.iter().zip(&ue).map(|(x, v)| (x.conj() * v).re).sum();
                out[d * self.basis + c] += Complex64::new(s, 0.0);
            }
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let split = self.basis * n;
        let (u, dp) = v.split_at(split);
        let mut e = response_spectrum(u, self.z0, n);
        for (ei, pi) in e.iter_mut().zip(self.projection_response(dp)) {
            *ei += pi;
        }
        let mut out = vec![ZERO; v.len()];
        let (ou, op) = out.split_at_mut(split);
        apply_reg(self.fft, self.reg_sq, u, ou);
        for (oc, zc) in ou.chunks_exact_mut(n).zip(self.z0.chunks_exact(n)) {
            for ((o, zi), ei) in oc.iter_mut().zip(zc).zip(&e) {
                *o += zi.conj() * ei;
            }
        }
        self.projection_adjoint(&e, op);
        out
    }

    pub fn rhs(&self) -> Vec<Complex64> {
        let n = self.n();
        let mut b = vec![ZERO; self.basis * n + self.dims * self.basis];
        let (bu, bp) = b.split_at_mut(self.basis * n);
        for (bc, zc) in bu.chunks_exact_mut(n).zip(self.z0.chunks_exact(n)) {
            for ((bi, zi), yi) in bc.iter_mut().zip(zc).zip(self.label) {
                *bi = zi.conj() * yi;
            }
        }
        self.projection_adjoint(self.label, bp);
        b
    }

    pub fn preconditioner(&self) -> Vec<f64> {
        let n = self.n();
        let mean_reg = self.reg_sq.iter().sum::<f64>() / n as f64;
        let mut d: Vec<f64> = self.z0.iter().map(|z| z.norm_sqr() + mean_reg).collect();
        for dd in 0..self.dims {
            let xd = &self.sample[dd * n..(dd + 1) * n];
            for c in 0..self.basis {
                let uc = &self.u0[c * n..(c + 1) * n];
                let s: f64 = xd.iter().zip(uc).map(|(x, u)| (x * u).norm_sqr()).sum();
                d.push(s.max(1e-12 * (1.0 + mean_reg)));
            }
        }
        d
    }
}
