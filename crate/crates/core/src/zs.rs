//! Zakharov–Shabat spectral data on `[0, 1]`.
//!
//! `L = diag(i, −i) ∂_x + offdiag(u, ū)`. The eigenvalue equation `LF = λF` is
//! integrated as `F' = A(x, λ) F` with `A = [[−iλ, iu], [−iū, iλ]]`, trace free,
//! so the fundamental solution has unit determinant.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phase_space::{CVec, ModeLayout, C0, CI};

type C = Complex64;

/// Default number of integration steps on `[0, 1]`.
pub const ZS_STEPS: usize = 2048;

fn cr(x: f64) -> C {
    C::new(x, 0.0)
}

/// Potential `u(x) = Σ_{|n|≤N} u_n e^{2πinx}`; the second component is `ū`.
#[derive(Clone, Debug)]
pub struct ZsPotential {
    pub cutoff: usize,
    pub u: Vec<C>,
}

impl ZsPotential {
    pub fn zero(cutoff: usize) -> Self {
        Self { cutoff, u: vec![C0; 2 * cutoff + 1] }
    }

    /// Takes the `u` block of a function-side vector `(u_n, v_n)`.
    pub fn from_field(layout: &ModeLayout, w: &CVec) -> Self {
        Self { cutoff: layout.cutoff(), u: (0..layout.n_modes()).map(|i| w[i]).collect() }
    }

    pub fn eval(&self, x: f64) -> C {
        let n0 = self.cutoff as i64;
        self.u
            .iter()
            .enumerate()
            .map(|(k, c)| c * C::from_polar(1.0, 2.0 * std::f64::consts::PI * (k as i64 - n0) as f64 * x))
            .sum()
    }
}

/// Dirichlet eigenvalue with its normalized eigenfunction `H` and companion solution `K`,
/// sampled on the uniform grid `x_k = k / steps`.
#[derive(Clone, Debug)]
pub struct DirichletData {
    pub mu: f64,
    pub h: Vec<[C; 2]>,
    pub k: Vec<[C; 2]>,
}

pub struct ZsSolver {
    pub potential: ZsPotential,
    pub steps: usize,
    /// `u` at the two Gauss nodes of each step.
    nodes: Vec<(C, C)>,
    /// `u` on the grid.
    grid: Vec<C>,
}

fn coeff(u: C, lambda: C) -> Matrix2<C> {
    Matrix2::new(-CI * lambda, CI * u, -CI * u.conj(), CI * lambda)
}

/// `exp(B)` for a trace-free 2×2 matrix.
fn expm_traceless(b: &Matrix2<C>) -> Matrix2<C> {
    let s2 = -b.determinant();
    let s = s2.sqrt();
    let (c, sh) = if s.norm() < 1e-8 {
        (C::new(1.0, 0.0) + s2 / 2.0, C::new(1.0, 0.0) + s2 / 6.0)
    } else {
        (s.cosh(), s.sinh() / s)
    };
    Matrix2::identity() * c + b * sh
}

/// Trapezoidal `L²(0, 1)` inner product `∫ F · conj(G)`.
pub fn l2_inner(f: &[[C; 2]], g: &[[C; 2]]) -> C {
    let n = f.len() - 1;
    let h = 1.0 / n as f64;
    let mut acc = C0;
    for (k, (a, b)) in f.iter().zip(g).enumerate() {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += (a[0] * b[0].conj() + a[1] * b[1].conj()) * w;
    }
    acc * h
}

pub fn l2_norm(f: &[[C; 2]]) -> f64 {
    l2_inner(f, f).re.max(0.0).sqrt()
}

impl ZsSolver {
    pub fn new(potential: ZsPotential, steps: usize) -> Self {
        let h = 1.0 / steps as f64;
        let d = 3f64.sqrt() / 6.0;
        let nodes = (0..steps)
            .map(|k| {
                let x = k as f64 * h;
                (potential.eval(x + (0.5 - d) * h), potential.eval(x + (0.5 + d) * h))
            })
            .collect();
        let grid = (0..=steps).map(|k| potential.eval(k as f64 * h)).collect();
        Self { potential, steps, nodes, grid }
    }

    fn step(&self, k: usize, lambda: C) -> Matrix2<C> {
        let h = 1.0 / self.steps as f64;
        let (u1, u2) = self.nodes[k];
        let a1 = coeff(u1, lambda);
        let a2 = coeff(u2, lambda);
        let omega = (a1 + a2) * cr(0.5 * h) + (a2 * a1 - a1 * a2) * cr(3f64.sqrt() / 12.0 * h * h);
        expm_traceless(&omega)
    }

    /// `M(x_k, λ)` on the grid, `M(0, λ) = Id`.
    pub fn fundamental_solution(&self, lambda: C) -> Vec<Matrix2<C>> {
        let mut out = Vec::with_capacity(self.steps + 1);
        let mut m = Matrix2::identity();
        out.push(m);
        for k in 0..self.steps {
            m = self.step(k, lambda) * m;
            out.push(m);
        }
        out
    }

    pub fn monodromy(&self, lambda: C) -> Matrix2<C> {
        (0..self.steps).fold(Matrix2::identity(), |m, k| self.step(k, lambda) * m)
    }

    /// Dirichlet characteristic function `χ_D(λ) = (i/2)(M₁₁ + M₁₂ − M₂₁ − M₂₂)(1, λ)`;
    /// equals `sin λ` at `u = 0`.
    pub fn chi_d(&self, lambda: C) -> C {
        let m = self.monodromy(lambda);
        CI * 0.5 * (m[(0, 0)] + m[(0, 1)] - m[(1, 0)] - m[(1, 1)])
    }

    fn chi_re(&self, lambda: f64) -> f64 {
        self.chi_d(cr(lambda)).re
    }

    /// Real roots of `χ_D` in `[a, b]`: π/8 scan, bisection, safeguarded Newton polish.
    /// Brackets that fail to polish are returned as errors next to the roots found.
    pub fn dirichlet_eigenvalues(&self, a: f64, b: f64) -> (Vec<f64>, Vec<Error>) {
        let step = std::f64::consts::PI / 8.0;
        let n = ((b - a) / step).ceil().max(1.0) as usize;
        let xs: Vec<f64> = (0..=n).map(|k| (a + k as f64 * step).min(b)).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| self.chi_re(x)).collect();
        let mut roots = Vec::new();
        let mut errors = Vec::new();
        for k in 0..n {
            if fs[k] == 0.0 {
                roots.push(xs[k]);
                continue;
            }
            if fs[k] * fs[k + 1] < 0.0 {
                match self.polish(xs[k], xs[k + 1], fs[k]) {
                    Ok(r) => roots.push(r),
                    Err(e) => errors.push(e),
                }
            }
        }
        if fs[n] == 0.0 {
            roots.push(xs[n]);
        }
        (roots, errors)
    }

    fn polish(&self, mut lo: f64, mut hi: f64, flo: f64) -> Result<f64> {
        let sign_lo = flo.signum();
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if self.chi_re(mid).signum() == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..50 {
            let f = self.chi_re(x);
            if f.abs() <= 1e-12 {
                return Ok(x);
            }
            if f.signum() == sign_lo {
                lo = x;
            } else {
                hi = x;
            }
            let h = 1e-6;
            let df = (self.chi_re(x + h) - self.chi_re(x - h)) / (2.0 * h);
            let nx = x - f / df;
            x = if df != 0.0 && nx > lo && nx < hi { nx } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        let f = self.chi_re(x);
        if f.abs() <= 1e-10 {
            Ok(x)
        } else {
            Err(Error::Root(format!("no convergence near {x} (|χ_D| = {:.3e})", f.abs())))
        }
    }

    /// `H = (M₁ + M₂)/‖M₁ + M₂‖` and `K` the normalized solution orthogonal to `H` with
    /// `−i(K₁(0) − K₂(0)) > 0`.
    pub fn dirichlet_eigenfunctions(&self, mu: f64) -> Result<DirichletData> {
        let m = self.fundamental_solution(cr(mu));
        let plus: Vec<[C; 2]> = m.iter().map(|a| [a[(0, 0)] + a[(0, 1)], a[(1, 0)] + a[(1, 1)]]).collect();
        let minus: Vec<[C; 2]> = m.iter().map(|a| [a[(0, 0)] - a[(0, 1)], a[(1, 0)] - a[(1, 1)]]).collect();
        let nh = l2_norm(&plus);
        if nh < 1e-12 {
            return Err(Error::Root(format!("degenerate eigenfunction norm at μ = {mu}")));
        }
        let h: Vec<[C; 2]> = plus.iter().map(|v| [v[0] / nh, v[1] / nh]).collect();
        let c = l2_inner(&minus, &h);
        let mut k: Vec<[C; 2]> = minus.iter().zip(&h).map(|(g, e)| [g[0] - c * e[0], g[1] - c * e[1]]).collect();
        let nk = l2_norm(&k);
        if nk < 1e-12 {
            return Err(Error::Root(format!("degenerate companion solution at μ = {mu}")));
        }
        let d = (k[0][0] - k[0][1]) / nk;
        if d.norm() < 1e-14 {
            return Err(Error::Root(format!("companion sign condition undefined at μ = {mu}")));
        }
        // rotate so that −i(K₁(0) − K₂(0)) is real and positive
        let phase = CI * d.norm() / d / nk;
        for v in k.iter_mut() {
            v[0] *= phase;
            v[1] *= phase;
        }
        Ok(DirichletData { mu, h, k })
    }

    /// `max(‖LH − μH‖, ‖LK − μK‖)` in `L²`, derivatives by sixth-order differences
    /// (one-sided stencils at the ends).
    pub fn eigen_residual(&self, data: &DirichletData) -> f64 {
        let r = |f: &[[C; 2]]| {
            let res: Vec<[C; 2]> = (0..f.len())
                .map(|k| {
                    let d0 = self.derivative(f, k, 0);
                    let d1 = self.derivative(f, k, 1);
                    let u = self.grid[k];
                    [
                        CI * d0 + u * f[k][1] - f[k][0] * data.mu,
                        -CI * d1 + u.conj() * f[k][0] - f[k][1] * data.mu,
                    ]
                })
                .collect();
            l2_norm(&res)
        };
        r(&data.h).max(r(&data.k))
    }

    fn derivative(&self, f: &[[C; 2]], k: usize, c: usize) -> C {
        let n = f.len() - 1;
        let start = k.saturating_sub(3).min(n - 6);
        let w = fd_weights((k - start) as f64);
        (0..7).map(|i| f[start + i][c] * w[i]).sum::<C>() * n as f64
    }

    /// `∂𝔷_j^± = ((K₂ ± iH₂)², (K₁ ± iH₁)²)` as function-side Fourier vectors on `layout`.
    pub fn grad_frak_z(&self, layout: &ModeLayout, data: &DirichletData) -> (CVec, CVec) {
        let field = |s: f64| {
            let a: Vec<C> = data.k.iter().zip(&data.h).map(|(k, h)| (k[1] + CI * s * h[1]).powi(2)).collect();
            let b: Vec<C> = data.k.iter().zip(&data.h).map(|(k, h)| (k[0] + CI * s * h[0]).powi(2)).collect();
            to_fourier(layout, &a, &b)
        };
        (field(1.0), field(-1.0))
    }
}

/// Weights of the 7-point first-derivative stencil on nodes `0..7` evaluated at `p` (unit spacing).
fn fd_weights(p: f64) -> [f64; 7] {
    // derivative of the Lagrange basis at p
    let mut w = [0.0; 7];
    for (i, wi) in w.iter_mut().enumerate() {
        let xi = i as f64;
        let denom: f64 = (0..7).filter(|&m| m != i).map(|m| xi - m as f64).product();
        let mut s = 0.0;
        for j in (0..7).filter(|&j| j != i) {
            s += (0..7).filter(|&m| m != i && m != j).map(|m| p - m as f64).product::<f64>();
        }
        *wi = s / denom;
    }
    w
}

/// Trapezoidal Fourier coefficients `∫₀¹ f e^{−2πinx} dx` of grid samples, `|n| ≤ N`.
pub fn to_fourier(layout: &ModeLayout, a: &[C], b: &[C]) -> CVec {
    let m = layout.n_modes();
    let steps = a.len() - 1;
    let h = 1.0 / steps as f64;
    let coef = |f: &[C], n: i64| -> C {
        let mut acc = C0;
        for (k, v) in f.iter().enumerate() {
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += v * C::from_polar(w, -2.0 * std::f64::consts::PI * n as f64 * k as f64 * h);
        }
        acc * h
    };
    let mut out = CVec::zeros(2 * m);
    for n in layout.modes() {
        out[layout.slot(n)] = coef(a, n);
        out[m + layout.slot(n)] = coef(b, n);
    }
    out
}

/// `i𝕁(a, b) = (−ib, ia)`.
fn i_bbj(w: &CVec) -> CVec {
    let m = w.len() / 2;
    CVec::from_fn(w.len(), |i, _| if i < m { -CI * w[m + i] } else { CI * w[i - m] })
}

/// Columns `(dΨ^{nls}[e^{(1,j)}], dΨ^{nls}[e^{(2,j)}]) = (−i𝕁∂y_j, i𝕁∂x_j)` with
/// `∂x_j = ξ/√8 (e^{iβ}∂𝔷⁺ + e^{−iβ}∂𝔷⁻)` and `∂y_j = ξ/(√8 i)(e^{iβ}∂𝔷⁺ − e^{−iβ}∂𝔷⁻)`.
pub fn dpsi_nls_columns(grad_plus: &CVec, grad_minus: &CVec, xi: f64, beta: f64) -> (CVec, CVec) {
    let c = xi / 8f64.sqrt();
    let ep = C::from_polar(1.0, beta);
    let em = C::from_polar(1.0, -beta);
    let dx = (grad_plus * ep + grad_minus * em) * cr(c);
    let dy = (grad_plus * ep - grad_minus * em) * (cr(c) / CI);
    (-i_bbj(&dy), i_bbj(&dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::fnls_inverse_c;
    use std::f64::consts::PI;

    fn small_potential(amp: f64) -> ZsPotential {
        let mut p = ZsPotential::zero(4);
        p.u[4 + 1] = C::new(amp, 0.3 * amp);
        p.u[4 - 2] = C::new(-0.5 * amp, 0.7 * amp);
        p
    }

    #[test]
    fn zero_potential_closed_forms() {
        let s = ZsSolver::new(ZsPotential::zero(4), 256);
        let lam = C::new(2.3, 0.4);
        let m = s.fundamental_solution(lam);
        for (k, a) in m.iter().enumerate() {
            let x = k as f64 / 256.0;
            assert!((a[(0, 0)] - (-CI * lam * x).exp()).norm() < 1e-12);
            assert!((a[(1, 1)] - (CI * lam * x).exp()).norm() < 1e-12);
            assert!(a[(0, 1)].norm() < 1e-14 && a[(1, 0)].norm() < 1e-14);
        }
        let (mu, err) = s.dirichlet_eigenvalues(-3.5, 10.0);
        assert!(err.is_empty());
        let expect: Vec<f64> = (-1..=3).map(|j| j as f64 * PI).collect();
        assert_eq!(mu.len(), expect.len());
        for (a, b) in mu.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn unit_determinant_and_small_potential_roots() {
        let s = ZsSolver::new(small_potential(0.3), 1024);
        let m = s.monodromy(C::new(1.7, -0.2));
        assert!((m.determinant() - 1.0).norm() < 1e-10);
        let s = ZsSolver::new(small_potential(1e-2), 1024);
        let (mu, _) = s.dirichlet_eigenvalues(-3.5, 10.0);
        assert_eq!(mu.len(), 5);
        for (j, m) in (-1..=3).zip(&mu) {
            assert!((m - j as f64 * PI).abs() < 0.1);
            assert!(s.chi_d(cr(*m)).norm() < 1e-10);
        }
    }

    #[test]
    fn eigenfunctions_normalized() {
        let s = ZsSolver::new(small_potential(0.2), 2048);
        let (mu, _) = s.dirichlet_eigenvalues(2.0, 7.0);
        for m in mu {
            let d = s.dirichlet_eigenfunctions(m).unwrap();
            assert!((l2_norm(&d.h) - 1.0).abs() < 1e-12);
            assert!((l2_norm(&d.k) - 1.0).abs() < 1e-12);
            assert!(l2_inner(&d.k, &d.h).norm() < 1e-12);
            let sc = -CI * (d.k[0][0] - d.k[0][1]);
            assert!(sc.re > 0.0 && sc.im.abs() < 1e-12);
            assert!(s.eigen_residual(&d) < 1e-8, "{}", s.eigen_residual(&d));
        }
    }

    #[test]
    fn fd_weights_reproduce_known_stencils() {
        let w = fd_weights(0.0);
        let f = [-49.0 / 20.0, 6.0, -15.0 / 2.0, 20.0 / 3.0, -15.0 / 4.0, 6.0 / 5.0, -1.0 / 6.0];
        for (a, b) in w.iter().zip(f) {
            assert!((a - b).abs() < 1e-12);
        }
        let w = fd_weights(3.0);
        assert!((w[4] - 0.75).abs() < 1e-12 && w[3].abs() < 1e-12);
    }

    #[test]
    fn zero_potential_columns_match_basis_images() {
        let l = ModeLayout::new(4, &[1]).unwrap();
        let s = ZsSolver::new(ZsPotential::zero(4), 512);
        for j in [-2i64, 2, 3] {
            let d = s.dirichlet_eigenfunctions(j as f64 * PI).unwrap();
            let (gp, gm) = s.grad_frak_z(&l, &d);
            let (c1, c2) = dpsi_nls_columns(&gp, &gm, 1.0, 0.0);
            let mut e = CVec::zeros(l.dim());
            e[l.x_index(j)] = cr(1.0);
            assert!((c1 - fnls_inverse_c(&l, &e)).camax() < 1e-6);
            e[l.x_index(j)] = C0;
            e[l.y_index(j)] = cr(1.0);
            assert!((&c2 - fnls_inverse_c(&l, &e)).camax() < 1e-6);
            let (c1b, _) = dpsi_nls_columns(&gp, &gm, 2.0, 0.0);
            assert!((c1b - fnls_inverse_c(&l, &CVec::zeros(l.dim())) - dpsi_nls_columns(&gp, &gm, 1.0, 0.0).0 * cr(2.0)).camax() < 1e-14);
        }
    }
}
