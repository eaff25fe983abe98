//! The dNLS Hamiltonian `𝓗 = 𝓗₂ + 𝓗₄` on the function side, and
//! sequence-side Hamiltonians `h = 𝓗 ∘ F_nls^{-1}` used by the normal-form checks.
//!
//! Function-side gradients are taken with respect to the bilinear pairing
//! `⟨·,·⟩_r`. The quartic part is evaluated on a grid of `4N+1` points,
//! which integrates every product of four truncated fields exactly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::backend::{ActionHam, Backend, BackendKind, InnerMap};
use crate::error::{Error, Result};
use crate::phase_space::{CVec, ModeLayout, Seq, C0};
use crate::poly::ZetaPoly;

/// Samples of a truncated field on the `4N+1` grid.
fn to_grid(layout: &ModeLayout, coef: &[Complex64]) -> Vec<Complex64> {
    let g = 4 * layout.cutoff() + 1;
    (0..g)
        .map(|k| {
            let x = k as f64 / g as f64;
            layout
                .modes()
                .zip(coef)
                .map(|(n, c)| c * Complex64::from_polar(1.0, 2.0 * PI * n as f64 * x))
                .sum()
        })
        .collect()
}

/// Fourier coefficients on `[-N, N]` of grid samples (exact for degree ≤ 4N).
fn from_grid(layout: &ModeLayout, f: &[Complex64]) -> Vec<Complex64> {
    let g = f.len();
    layout
        .modes()
        .map(|n| {
            f.iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * PI * n as f64 * k as f64 / g as f64))
                .sum::<Complex64>()
                / g as f64
        })
        .collect()
}

fn split(layout: &ModeLayout, w: &CVec) -> (Vec<Complex64>, Vec<Complex64>) {
    let m = layout.n_modes();
    (w.rows(0, m).iter().copied().collect(), w.rows(m, m).iter().copied().collect())
}

fn join(a: Vec<Complex64>, b: Vec<Complex64>) -> CVec {
    CVec::from_iterator(a.len() + b.len(), a.into_iter().chain(b))
}

fn grid_mean(f: impl Iterator<Item = Complex64>, g: usize) -> Complex64 {
    f.sum::<Complex64>() / g as f64
}

/// `𝓗₂(w) = Σ 4π²n² u_n v_{−n}`.
pub fn h2(layout: &ModeLayout, w: &CVec) -> Complex64 {
    let m = layout.n_modes();
    layout
        .modes()
        .map(|n| 4.0 * PI * PI * (n * n) as f64 * w[layout.slot(n)] * w[m + layout.slot(-n)])
        .sum()
}

/// `𝓗₄(w) = ∫ u² v² dx`.
pub fn h4(layout: &ModeLayout, w: &CVec) -> Complex64 {
    let (u, v) = split(layout, w);
    let (ug, vg) = (to_grid(layout, &u), to_grid(layout, &v));
    grid_mean(ug.iter().zip(&vg).map(|(a, b)| a * a * b * b), ug.len())
}

pub fn h_nls(layout: &ModeLayout, w: &CVec) -> Complex64 {
    h2(layout, w) + h4(layout, w)
}

/// `𝒟₂ w`: `(4π²n² v_n, 4π²n² u_n)`.
pub fn d2_apply(layout: &ModeLayout, w: &CVec) -> CVec {
    let m = layout.n_modes();
    let mut out = CVec::zeros(2 * m);
    for n in layout.modes() {
        let i = layout.slot(n);
        let s = 4.0 * PI * PI * (n * n) as f64;
        out[i] = w[m + i] * s;
        out[m + i] = w[i] * s;
    }
    out
}

/// `∇𝓗 = 𝒟₂ w + (2uv², 2u²v)`.
pub fn grad_h_nls(layout: &ModeLayout, w: &CVec) -> CVec {
    let (u, v) = split(layout, w);
    let (ug, vg) = (to_grid(layout, &u), to_grid(layout, &v));
    let gu: Vec<Complex64> = ug.iter().zip(&vg).map(|(a, b)| 2.0 * a * b * b).collect();
    let gv: Vec<Complex64> = ug.iter().zip(&vg).map(|(a, b)| 2.0 * a * a * b).collect();
    d2_apply(layout, w) + join(from_grid(layout, &gu), from_grid(layout, &gv))
}

/// `d∇𝓗(w)[ŵ] = 𝒟₂ŵ + (2ûv² + 4uvv̂, 4uvû + 2u²v̂)`.
pub fn d_grad_h_nls_apply(layout: &ModeLayout, w: &CVec, wh: &CVec) -> CVec {
    let (u, v) = split(layout, w);
    let (a, b) = split(layout, wh);
    let (ug, vg, ag, bg) = (to_grid(layout, &u), to_grid(layout, &v), to_grid(layout, &a), to_grid(layout, &b));
    let g = ug.len();
    let mut gu = vec![C0; g];
    let mut gv = vec![C0; g];
    for k in 0..g {
        gu[k] = 2.0 * ag[k] * vg[k] * vg[k] + 4.0 * ug[k] * vg[k] * bg[k];
        gv[k] = 4.0 * ug[k] * vg[k] * ag[k] + 2.0 * ug[k] * ug[k] * bg[k];
    }
    d2_apply(layout, wh) + join(from_grid(layout, &gu), from_grid(layout, &gv))
}

/// Dense matrix of `d∇𝓗(w)`.
pub fn d_grad_h_nls(layout: &ModeLayout, w: &CVec) -> DMatrix<Complex64> {
    let d = layout.dim();
    let mut out = DMatrix::from_element(d, d, C0);
    for c in 0..d {
        let mut e = CVec::zeros(d);
        e[c] = Complex64::new(1.0, 0.0);
        out.set_column(c, &d_grad_h_nls_apply(layout, w, &e));
    }
    out
}

/// `d³𝓗₄(w₀)[w, w, w] = 12 ∫ (u₀ u v² + u² v₀ v) dx`.
pub fn d3_h4(layout: &ModeLayout, w0: &CVec, w: &CVec) -> Complex64 {
    d3_h4_multi(layout, w0, w, w, w)
}

/// Polarized third derivative `d³𝓗₄(w₀)[a, b, c]`, from `f_uuv = 4v`, `f_uvv = 4u`.
pub fn d3_h4_multi(layout: &ModeLayout, w0: &CVec, a: &CVec, b: &CVec, c: &CVec) -> Complex64 {
    let grids = |w: &CVec| {
        let (p, q) = split(layout, w);
        (to_grid(layout, &p), to_grid(layout, &q))
    };
    let (u0, v0) = grids(w0);
    let (au, av) = grids(a);
    let (bu, bv) = grids(b);
    let (cu, cv) = grids(c);
    let g = u0.len();
    grid_mean(
        (0..g).map(|k| {
            4.0 * v0[k] * (au[k] * bu[k] * cv[k] + au[k] * bv[k] * cu[k] + av[k] * bu[k] * cu[k])
                + 4.0 * u0[k] * (au[k] * bv[k] * cv[k] + av[k] * bu[k] * cv[k] + av[k] * bv[k] * cu[k])
        }),
        g,
    )
}

/// A sequence-side Hamiltonian with derivatives up to order three.
pub trait SeqHamiltonian: Send + Sync {
    fn value(&self, z: &Seq) -> f64;
    fn grad(&self, z: &Seq) -> Seq;
    fn hess(&self, z: &Seq) -> DMatrix<f64>;
    /// `d³h(z)[a, ·, ·]`
    fn d3(&self, z: &Seq, a: &Seq) -> DMatrix<f64>;
    /// Diagonal of the quadratic part (the sequence-side `𝒟₂`).
    fn quad_diag(&self) -> Seq;
}

/// `h = K ∘ I`, the toy Hamiltonian, pushed forward by an action-preserving map.
pub struct ActionSeqHam {
    pub layout: ModeLayout,
    pub k: ActionHam,
}

impl SeqHamiltonian for ActionSeqHam {
    fn value(&self, z: &Seq) -> f64 {
        self.k.value(&crate::phase_space::actions_of(&self.layout, z))
    }
    fn grad(&self, z: &Seq) -> Seq {
        let m = self.layout.n_modes();
        let w = self.k.freqs(&crate::phase_space::actions_of(&self.layout, z));
        Seq::from_fn(2 * m, |i, _| w[i % m] * z[i])
    }
    fn hess(&self, z: &Seq) -> DMatrix<f64> {
        let m = self.layout.n_modes();
        let w = self.k.freqs(&crate::phase_space::actions_of(&self.layout, z));
        DMatrix::from_fn(2 * m, 2 * m, |a, c| {
            let diag = if a == c { w[a % m] } else { 0.0 };
            diag + z[a] * self.k.k[(a % m, c % m)] * z[c]
        })
    }
    fn d3(&self, z: &Seq, a: &Seq) -> DMatrix<f64> {
        let m = self.layout.n_modes();
        let dots: Vec<f64> = (0..m).map(|k| z[k] * a[k] + z[m + k] * a[m + k]).collect();
        let dw: Vec<f64> = (0..m).map(|n| (0..m).map(|k| self.k.k[(n, k)] * dots[k]).sum()).collect();
        DMatrix::from_fn(2 * m, 2 * m, |b, c| {
            let diag = if b == c { dw[b % m] } else { 0.0 };
            let kk = self.k.k[(b % m, c % m)];
            diag + a[b] * kk * z[c] + z[b] * kk * a[c]
        })
    }
    fn quad_diag(&self) -> Seq {
        let m = self.layout.n_modes();
        Seq::from_fn(2 * m, |i, _| self.k.base[i % m])
    }
}

/// `h(z) = 𝓗^{nls}(F_nls^{-1} z) = Σ 4π²n² I_n + Σ_{a+b=c+d} ζ_aζ_bζ̄_cζ̄_d`.
pub struct DnlsSeqHam {
    pub layout: ModeLayout,
    pub quartic: ZetaPoly,
}

impl DnlsSeqHam {
    pub fn new(layout: &ModeLayout) -> Self {
        let q = crate::backend::dnls_quartic_terms(layout);
        Self { layout: layout.clone(), quartic: ZetaPoly::from_map(layout, &q) }
    }
    fn omega(&self, i: usize) -> f64 {
        let n = self.layout.mode_of(i);
        4.0 * PI * PI * (n * n) as f64
    }
}

impl SeqHamiltonian for DnlsSeqHam {
    fn value(&self, z: &Seq) -> f64 {
        let q: f64 = (0..z.len()).map(|i| 0.5 * self.omega(i) * z[i] * z[i]).sum();
        q + self.quartic.value(z)
    }
    fn grad(&self, z: &Seq) -> Seq {
        self.quartic.grad(z) + Seq::from_fn(z.len(), |i, _| self.omega(i) * z[i])
    }
    fn hess(&self, z: &Seq) -> DMatrix<f64> {
        let mut h = self.quartic.hess(z);
        for i in 0..z.len() {
            h[(i, i)] += self.omega(i);
        }
        h
    }
    fn d3(&self, z: &Seq, a: &Seq) -> DMatrix<f64> {
        self.quartic.contracted(z, &[a])
    }
    fn quad_diag(&self) -> Seq {
        Seq::from_fn(self.layout.dim(), |i, _| self.omega(i))
    }
}

/// The Hamiltonian for which the backend's `Ψ` is a Birkhoff map (toy: exactly;
/// perturbative: to quartic order).
pub fn backend_hamiltonian(b: &Backend) -> Result<Box<dyn SeqHamiltonian>> {
    match (b.kind, &b.map) {
        (BackendKind::Toy, InnerMap::Twist(_)) => {
            Ok(Box::new(ActionSeqHam { layout: b.layout.clone(), k: b.actions.clone() }))
        }
        (BackendKind::Toy, InnerMap::Flow(_)) => Err(Error::Config(
            "normal-form checks need an action-preserving toy generator".into(),
        )),
        (BackendKind::Perturbative, _) => Ok(Box::new(DnlsSeqHam::new(&b.layout))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::fnls_inverse;

    #[test]
    fn single_mode_energy() {
        let l = ModeLayout::new(3, &[]).unwrap();
        let m = l.n_modes();
        let eps = 0.3;
        let mut w = CVec::zeros(l.dim());
        w[l.slot(1)] = Complex64::new(eps, 0.0);
        w[m + l.slot(-1)] = Complex64::new(eps, 0.0);
        let h = h_nls(&l, &w);
        assert!((h.re - (4.0 * PI * PI * eps * eps + eps.powi(4))).abs() < 1e-12);
        assert!(h.im.abs() < 1e-14);
    }

    #[test]
    fn constant_fields_third_derivative() {
        let l = ModeLayout::new(2, &[]).unwrap();
        let m = l.n_modes();
        let mut w = CVec::zeros(l.dim());
        w[l.slot(0)] = Complex64::new(1.0, 0.0);
        w[m + l.slot(0)] = Complex64::new(1.0, 0.0);
        assert!((d3_h4(&l, &w, &w) - Complex64::new(24.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sequence_side_matches_function_side() {
        let l = ModeLayout::new(3, &[]).unwrap();
        let h = DnlsSeqHam::new(&l);
        let z = Seq::from_fn(l.dim(), |i, _| 0.1 * (1.3 * i as f64).sin());
        let w = fnls_inverse(&l, &z);
        assert!((h.value(&z) - h_nls(&l, &w).re).abs() < 1e-13);
    }
}
