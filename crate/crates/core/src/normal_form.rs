//! The transformed Hamiltonian `𝓗^{nls} ∘ Ψ` and its expansion around the torus.
//!
//! All quantities live on the sequence side: `h = 𝓗^{nls} ∘ F_nls^{-1}` (or
//! the toy Hamiltonian), `Φ` the backend's inner map, `T = dΦ(z_S, 0)` and
//! `D_l`, `G_lk` its derivatives along the tagged coordinates. Under this
//! pullback `i𝕁` becomes `J^{-1}` and `dΨᵀ` becomes `Tᵀ`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::backend::{ActionHam, Jets};
use crate::chart::{phi_l_from, Patch};
use crate::corrector::CorrectorContext;
use crate::error::Result;
use crate::hamiltonian::{backend_hamiltonian, ActionSeqHam, SeqHamiltonian};
use crate::phase_space::{
    actions_of, apply_j, fnls_inverse_c, gather, j_matrix, op_norm, CVec, ModeLayout, Seq,
};
use crate::quadrature::{gauss_legendre, integrate_checked, GAUSS_NODES};

fn j_left(a: &DMatrix<f64>) -> DMatrix<f64> {
    j_matrix(a.nrows()) * a
}

fn restrict(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Terms of `𝓟₂ + 𝓟₃ = 𝓗^{(2)} − H^{nls}(I_S, 0) − 𝓗_Ω`.
#[derive(Clone, Debug, Default)]
pub struct P3Terms {
    pub p2: f64,
    pub p3_2a: f64,
    pub p3_2b: f64,
    pub p3_2c: f64,
    pub p3_1: f64,
    /// `𝓗^{(2)}(z) − H^{nls}(I_S, 0) − 𝓗_Ω(z)`.
    pub target: f64,
}

impl P3Terms {
    pub fn p3(&self) -> f64 {
        self.p3_2a + self.p3_2b + self.p3_2c + self.p3_1
    }
    pub fn closure(&self) -> f64 {
        (self.p2 + self.p3() - self.target).abs()
    }
}

pub struct NormalForm<'a> {
    pub corr: &'a CorrectorContext,
    pub ham: Box<dyn SeqHamiltonian>,
    /// `h^{nls}(z_S) = H^{nls}(I_S, 0)` and the frequencies `ω(I)`.
    pub actions: ActionSeqHam,
}

impl<'a> NormalForm<'a> {
    pub fn new(corr: &'a CorrectorContext) -> Result<Self> {
        let b = &corr.chart.backend;
        Ok(Self {
            ham: backend_hamiltonian(b)?,
            actions: ActionSeqHam { layout: b.layout.clone(), k: b.actions.clone() },
            corr,
        })
    }

    fn layout(&self) -> &ModeLayout {
        &self.corr.chart.layout
    }
    fn s_idx(&self) -> &[usize] {
        &self.corr.chart.s_idx
    }
    fn p_idx(&self) -> &[usize] {
        &self.corr.chart.p_idx
    }
    fn k(&self) -> &ActionHam {
        &self.actions.k
    }

    /// `ω_n(I_S(z), 0)` by mode slot.
    pub fn torus_freqs(&self, z: &Seq) -> Vec<f64> {
        let zs = self.corr.chart.torus_point(z);
        self.k().freqs(&actions_of(self.layout(), &zs))
    }

    /// `Ω(I_S, 0) z` coordinatewise.
    fn omega_apply(&self, z: &Seq, v: &Seq) -> Seq {
        let w = self.torus_freqs(z);
        let m = self.layout().n_modes();
        Seq::from_fn(v.len(), |i, _| w[i % m] * v[i])
    }

    /// `∂_l ω_n(I_S, 0)` for the tagged coordinate `l`, by mode slot.
    fn d_freqs(&self, z: &Seq, l: usize) -> Vec<f64> {
        let m = self.layout().n_modes();
        let c = self.s_idx()[l];
        (0..m).map(|n| self.k().k[(n, c % m)] * z[c]).collect()
    }

    /// `h^{nls}(z_S)`.
    pub fn h_torus(&self, z: &Seq) -> f64 {
        self.actions.value(&self.corr.chart.torus_point(z))
    }

    /// `𝓗_Ω(z) = ½(Ω_⊥(I_S, 0) z_⊥, z_⊥)_r`.
    pub fn h_omega(&self, z: &Seq) -> f64 {
        let zp = self.corr.chart.perp_part(z);
        0.5 * self.omega_apply(z, &zp).dot(&zp)
    }

    pub fn grad_h_omega(&self, z: &Seq) -> Seq {
        let zp = self.corr.chart.perp_part(z);
        let mut g = self.omega_apply(z, &zp);
        let m = self.layout().n_modes();
        let i = actions_of(self.layout(), &zp);
        for (l, &c) in self.s_idx().iter().enumerate() {
            let dw = self.d_freqs(z, l);
            g[c] = (0..m).map(|n| dw[n] * i[n]).sum();
        }
        g
    }

    /// `‖Ω(I) z − Tᵀ ∇h(Φ(z))‖₀`.
    pub fn identity_chain(&self, z: &Seq) -> Result<f64> {
        let b = &self.corr.chart.backend;
        let t = b.phi_jac(z)?;
        let lhs = self.actions.grad(z);
        Ok((lhs - t.transpose() * self.ham.grad(&b.phi(z)?)).norm())
    }

    /// `‖Π_⊥ Tᵀ ∇h(Φ(z_S, 0))‖₀`.
    pub fn identity_torus_gradient(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        let jets = patch.jets(z)?;
        let g = jets.t.transpose() * self.ham.grad(&jets.phi);
        Ok(gather(&g, self.p_idx()).norm())
    }

    /// `ℛ^{(1)}(z_S) = Tᵀ J^{-1} Σ_l a_l D_l` on `⊥` columns, `a = J Ω_S(I_S, 0) z_S`.
    pub fn r1_from(&self, z: &Seq, jets: &Jets) -> DMatrix<f64> {
        let n = z.len();
        let a = apply_j(&self.omega_apply(z, &self.corr.chart.torus_point(z)));
        let mut sum = DMatrix::zeros(n, n);
        for (l, &c) in self.s_idx().iter().enumerate() {
            if a[c] != 0.0 {
                sum += &jets.d[l] * a[c];
            }
        }
        let mut r = -(jets.t.transpose() * j_left(&sum));
        for &c in self.s_idx() {
            r.column_mut(c).fill(0.0);
        }
        r
    }

    pub fn r1_operator(&self, patch: &Patch, z: &Seq) -> Result<DMatrix<f64>> {
        Ok(self.r1_from(z, &patch.jets(z)?))
    }

    /// `Tᵀ Hess h(Φ) T − ℛ^{(1)} − Ω(I_S, 0)` on `⊥` columns, operator norm.
    pub fn identity_hessian(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        let jets = patch.jets(z)?;
        let n = z.len();
        let hess = self.ham.hess(&jets.phi);
        let lhs = jets.t.transpose() * hess * &jets.t - self.r1_from(z, &jets);
        let om = DMatrix::from_diagonal(&self.omega_apply(z, &Seq::from_element(n, 1.0)));
        let all: Vec<usize> = (0..n).collect();
        Ok(op_norm(&restrict(&(lhs - om), &all, self.p_idx())))
    }

    /// Hessian of the quartic part of `h`.
    fn hess4(&self, y: &Seq) -> DMatrix<f64> {
        let mut h = self.ham.hess(y);
        let q = self.ham.quad_diag();
        for i in 0..y.len() {
            h[(i, i)] -= q[i];
        }
        h
    }

    /// `∂_l ℛ^{(1)}(z_S)` for the tagged coordinate `l`.
    fn d_r1(&self, z: &Seq, jets: &Jets, l: usize) -> DMatrix<f64> {
        let n = z.len();
        let zs = self.corr.chart.torus_point(z);
        let v = self.omega_apply(z, &zs);
        let a = apply_j(&v);
        let dw = self.d_freqs(z, l);
        let m = self.layout().n_modes();
        let cl = self.s_idx()[l];
        let mut dv = Seq::zeros(n);
        for &c in self.s_idx() {
            dv[c] = dw[c % m] * zs[c];
        }
        dv[cl] += self.torus_freqs(z)[cl % m];
        let da = apply_j(&dv);
        let mut sum_a = DMatrix::zeros(n, n);
        let mut sum_da = DMatrix::zeros(n, n);
        for (k, &c) in self.s_idx().iter().enumerate() {
            sum_a += &jets.d[k] * a[c];
            sum_da += &jets.d[k] * da[c] + jets.g(l, k) * a[c];
        }
        let mut r = -(jets.d[l].transpose() * j_left(&sum_a)) - jets.t.transpose() * j_left(&sum_da);
        for &c in self.s_idx() {
            r.column_mut(c).fill(0.0);
        }
        r
    }

    /// `ℛ_{x_j}` (or `ℛ_{y_j}`) for the tagged coordinate `l`, as a full matrix supported on `⊥ × ⊥`.
    pub fn r_xy_from(&self, z: &Seq, jets: &Jets, l: usize) -> DMatrix<f64> {
        let n = z.len();
        let m = self.layout().n_modes();
        let h4 = self.hess4(&jets.phi);
        let tl = jets.t.column(self.s_idx()[l]).into_owned();
        let d3 = self.ham.d3(&jets.phi, &tl);
        let dl = &jets.d[l];
        let dw = self.d_freqs(z, l);
        let term1 = DMatrix::from_fn(n, n, |i, k| if i == k { 0.5 * dw[i % m] } else { 0.0 });
        let term2 = self.d_r1(z, jets, l) * 0.5;
        let term3 = (dl.transpose() * &h4 * &jets.t
            + jets.t.transpose() * &h4 * dl
            + jets.t.transpose() * d3 * &jets.t)
            * -0.5;
        let term4 = dl.transpose() * &h4 * &jets.t;
        let term5 = dl.transpose() * j_left(&(&jets.t * j_left(&self.r1_from(z, jets))));
        let mut r = term1 + term2 + term3 + term4 + term5;
        for &c in self.s_idx() {
            r.row_mut(c).fill(0.0);
            r.column_mut(c).fill(0.0);
        }
        r
    }

    /// `(ℛ_{x_j}, ℛ_{y_j})` for the tagged mode `j`.
    pub fn r_xy_operators(&self, patch: &Patch, z: &Seq, j: i64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let jets = patch.jets(z)?;
        let pos = self.layout().tagged().iter().position(|&q| q == j).expect("j must be tagged");
        let r = self.layout().tagged().len();
        Ok((self.r_xy_from(z, &jets, pos), self.r_xy_from(z, &jets, r + pos)))
    }

    /// `(J^{-1} T (0, J Ω_⊥ z_⊥), D_l (0, z_⊥))_r` and `(ℛ_l z_⊥, z_⊥)_r`.
    pub fn r_xy_identity(&self, patch: &Patch, z: &Seq, l: usize) -> Result<(f64, f64)> {
        let jets = patch.jets(z)?;
        let zp = self.corr.chart.perp_part(z);
        let jw = apply_j(&self.omega_apply(z, &zp));
        let lhs = -apply_j(&(&jets.t * jw)).dot(&(&jets.d[l] * &zp));
        let rhs = (self.r_xy_from(z, &jets, l) * &zp).dot(&zp);
        Ok((lhs, rhs))
    }

    /// `𝒯₃^{(1)}(z_S, w) = ½∫₀¹(1−t)² d³h(Φ(z_S, 0) + t w)[w, w, w] dt`.
    pub fn taylor_remainder_t31(&self, phi: &Seq, w: &Seq) -> Result<f64> {
        let f = |t: f64| {
            let y = phi + w * t;
            0.5 * (1.0 - t).powi(2) * (self.ham.d3(&y, w) * w).dot(w)
        };
        integrate_checked(f, 1e-10)
    }

    /// `h(φ + w) − h(φ) − (∇h, w) − ½(Hess h w, w) − 𝒯₃^{(1)}`.
    pub fn taylor_identity(&self, phi: &Seq, w: &Seq) -> Result<f64> {
        let lhs = self.ham.value(&(phi + w))
            - self.ham.value(phi)
            - self.ham.grad(phi).dot(w)
            - 0.5 * (self.ham.hess(phi) * w).dot(w);
        Ok((lhs - self.taylor_remainder_t31(phi, w)?).abs())
    }

    /// `𝓟₃^{(1)}(z) = 𝒯₃^{(1)}(z_S, T(0, z_⊥))`.
    pub fn p3_1(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        let jets = patch.jets(z)?;
        let w = &jets.t * self.corr.chart.perp_part(z);
        self.taylor_remainder_t31(&jets.phi, &w)
    }

    /// `𝓟₂^{(1)}(z) = ½(ℛ^{(1)}(z_S) z_⊥, z_⊥)_r`.
    pub fn p2_1(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        let zp = self.corr.chart.perp_part(z);
        Ok(0.5 * (self.r1_operator(patch, z)? * &zp).dot(&zp))
    }

    /// `𝓗^{(2)}(z) = h(Φ_L(Ψ_C(z)))`.
    pub fn transformed_h(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        Ok(self.ham.value(&self.corr.phi_full(patch, z)?))
    }

    /// `𝓗^{(2)}(z) − H^{nls}(I_S, 0) − Σ_{n∈S^⊥} ω_n(I_S, 0) I_n(z)`.
    pub fn p3(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        Ok(self.transformed_h(patch, z)? - self.h_torus(z) - self.h_omega(z))
    }

    /// `∇p3(z)`.
    pub fn grad_p3(&self, patch: &Patch, z: &Seq) -> Result<Seq> {
        let (y, d, _) = self.corr.d_phi_full(patch, z)?;
        let w = phi_l_from(&patch.jets_low(&y)?, &self.corr.chart.perp_part(&y));
        let g = d.transpose() * self.ham.grad(&w);
        let gs = self.actions.grad(&self.corr.chart.torus_point(z));
        Ok(g - gs - self.grad_h_omega(z))
    }

    /// `𝓟_Ω(z, τ) = (∇𝓗_Ω(z), X(z, τ))_r`.
    pub fn p_omega(&self, patch: &Patch, z: &Seq, tau: f64) -> Result<f64> {
        Ok(self.grad_h_omega(z).dot(&self.corr.vector_field(patch, z, tau)?))
    }

    /// `∇_S𝓗_Ω · π_S X + τ Σ_l X_l (ℛ_l z_⊥, z_⊥)_r`.
    pub fn p_omega_formula(&self, patch: &Patch, z: &Seq, tau: f64) -> Result<f64> {
        let jets = patch.jets(z)?;
        let x = self.corr.vector_field(patch, z, tau)?;
        let zp = self.corr.chart.perp_part(z);
        let g = self.grad_h_omega(z);
        let mut acc = 0.0;
        for (l, &c) in self.s_idx().iter().enumerate() {
            acc += g[c] * x[c] + tau * x[c] * (self.r_xy_from(z, &jets, l) * &zp).dot(&zp);
        }
        Ok(acc)
    }

    /// `∫₀¹ 𝓟_Ω(Ψ_X^{0,τ}(z), τ) dτ`.
    pub fn p3_2b_integral(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        let (nodes, weights) = gauss_legendre(GAUSS_NODES);
        let mut acc = 0.0;
        for (t, w) in nodes.iter().zip(&weights) {
            let y = self.corr.flow(patch, z, 0.0, *t, crate::corrector::Tangent::None)?.value;
            acc += w * self.p_omega(patch, &y, *t)?;
        }
        Ok(acc)
    }

    /// The decomposition of `𝓗^{(2)}` into `𝓟₂` and the four parts of `𝓟₃`.
    pub fn p3_terms(&self, patch: &Patch, z: &Seq) -> Result<P3Terms> {
        let y = self.corr.psi_c(patch, z)?;
        let bc = &y - z;
        let b2 = -apply_j(&patch.local_l(z)?.e_vector());
        let b3 = &bc - &b2;
        let zs = self.corr.chart.torus_point(z);
        let grad_s = self.actions.grad(&zs);
        let bs = self.corr.chart.torus_point(&bc);
        let quad = |t: f64| {
            let h = self.actions.hess(&(&zs + &bs * t));
            (1.0 - t) * (h * &bs).dot(&bs)
        };
        let p2_1 = self.p2_1(patch, z)?;
        let jets_y = patch.jets(&y)?;
        let target = self.ham.value(&phi_l_from(&jets_y, &self.corr.chart.perp_part(&y)))
            - self.h_torus(z)
            - self.h_omega(z);
        Ok(P3Terms {
            p2: grad_s.dot(&b2) + p2_1,
            p3_2a: grad_s.dot(&b3) + integrate_checked(quad, 1e-10)?,
            p3_2b: self.h_omega(&y) - self.h_omega(z),
            p3_2c: self.p2_1(patch, &y)? - p2_1,
            p3_1: self.p3_1(patch, &y)?,
            target,
        })
    }

    /// `𝓟₂(z_S, z_⊥)` from `B₂^C = −JE` and `ℛ^{(1)}`, given the jets at `(z_S, 0)`.
    fn p2_form(&self, z: &Seq, jets: &Jets) -> (DMatrix<f64>, Seq, Vec<DMatrix<f64>>) {
        let r1 = self.r1_from(z, jets);
        let zs = self.corr.chart.torus_point(z);
        let c = apply_j(&self.actions.grad(&zs));
        let tj = -(j_left(&jets.t)).transpose();
        let mk: Vec<DMatrix<f64>> = jets.d.iter().map(|d| &tj * d).collect();
        (r1, c, mk)
    }

    /// Operator norm of the `z_⊥`-Hessian of `𝓟₂` at `(z_S, 0)`, by second differences
    /// of the quadratic form (exact for any step, taken as 1).
    pub fn p2_residual(&self, jets: &Jets, z: &Seq) -> f64 {
        let (r1, c, mk) = self.p2_form(z, jets);
        let p = self.p_idx();
        let s = self.s_idx();
        let n = z.len();
        // 𝓟₂(z_⊥) = Σ_k c_k E_k + ½(ℛ^{(1)} z_⊥, z_⊥), E_k = ½ z_⊥ᵀ M_k z_⊥
        let mut q = &r1 * 0.5;
        for (k, &ck) in s.iter().enumerate() {
            q += &mk[k] * (0.5 * c[ck]);
        }
        let f = |v: &Seq| (&q * v).dot(v);
        let mut hess = DMatrix::zeros(p.len(), p.len());
        let e = |i: usize| {
            let mut v = Seq::zeros(n);
            v[p[i]] = 1.0;
            v
        };
        for i in 0..p.len() {
            let ei = e(i);
            let fi = f(&ei);
            for j in i..p.len() {
                let ej = e(j);
                let v = f(&(&ei + &ej)) - fi - f(&ej);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        op_norm(&hess)
    }

    /// `d_⊥∇_⊥ p3(z_S, 0)[v]`, projected on `S^⊥`: central differences of `∇p3` along `v` at
    /// steps `h` and `2h`, Richardson-combined so the quartic part of `p3` drops out.
    pub fn remainder_hessian_apply(&self, patch: &Patch, zs: &Seq, v: &Seq, h: f64) -> Result<Seq> {
        let diff = |k: f64| -> Result<Seq> {
            let gp = self.grad_p3(patch, &(zs + v * k))?;
            let gm = self.grad_p3(patch, &(zs - v * k))?;
            Ok((gp - gm) / (2.0 * k))
        };
        let r = (diff(h)? * 4.0 - diff(2.0 * h)?) / 3.0;
        Ok(crate::phase_space::project_perp(self.layout(), &r))
    }

    /// Floquet solution `ŵ^{±,j}(t) = e^{±iω_j t} dΨ^{nls}(z_S(t), 0)[(e^{(1,j)} ∓ i e^{(2,j)})/√2]`.
    pub fn floquet_seq(&self, z: &Seq, j: i64, sign: i32, t: f64) -> Result<CVec> {
        let b = &self.corr.chart.backend;
        let l = self.layout();
        let w = self.torus_freqs(z);
        let zt = self.torus_rotation(z, t);
        let tm = b.phi_jac(&zt)?;
        let n = z.len();
        let sgn = if sign >= 0 { 1.0 } else { -1.0 };
        let mut zeta = CVec::zeros(n);
        zeta[l.x_index(j)] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        zeta[l.y_index(j)] = Complex64::new(0.0, -sgn * std::f64::consts::FRAC_1_SQRT_2);
        let phase = Complex64::from_polar(1.0, sgn * w[l.slot(j)] * t);
        Ok(tm.map(|x| Complex64::new(x, 0.0)) * zeta * phase)
    }

    pub fn floquet(&self, z: &Seq, j: i64, sign: i32, t: f64) -> Result<CVec> {
        Ok(fnls_inverse_c(self.layout(), &self.floquet_seq(z, j, sign, t)?))
    }

    /// `z_S(t)`: each tagged pair rotated by `ω_j(I_S, 0) t`.
    pub fn torus_rotation(&self, z: &Seq, t: f64) -> Seq {
        let l = self.layout();
        let w = self.torus_freqs(z);
        let mut out = self.corr.chart.torus_point(z);
        for &j in l.tagged() {
            let (xi, yi) = (l.x_index(j), l.y_index(j));
            let (s, c) = (w[l.slot(j)] * t).sin_cos();
            let (x, y) = (out[xi], out[yi]);
            out[xi] = c * x - s * y;
            out[yi] = s * x + c * y;
        }
        out
    }

    /// `max_t ‖∂_t ẑ − J Hess h(Φ(z_S(t), 0)) ẑ‖₀` on `points` times over one period of the
    /// slowest tagged frequency, `∂_t` by fourth-order central differences.
    pub fn floquet_residual(&self, z: &Seq, j: i64, sign: i32, points: usize) -> Result<f64> {
        let l = self.layout();
        let w = self.torus_freqs(z);
        let slowest = l
            .tagged()
            .iter()
            .map(|&q| w[l.slot(q)].abs())
            .fold(f64::INFINITY, f64::min);
        let period = if slowest.is_finite() && slowest > 0.0 { 2.0 * std::f64::consts::PI / slowest } else { 1.0 };
        let h = 1e-3 / w[l.slot(j)].abs().max(1.0);
        let b = &self.corr.chart.backend;
        let mut worst: f64 = 0.0;
        for k in 0..points {
            let t = period * k as f64 / points as f64;
            let f = |dt: f64| self.floquet_seq(z, j, sign, t + dt);
            let deriv = (f(-2.0 * h)? - f(-h)? * Complex64::new(8.0, 0.0) + f(h)? * Complex64::new(8.0, 0.0)
                - f(2.0 * h)?)
                / Complex64::new(12.0 * h, 0.0);
            let zh = f(0.0)?;
            let hess = self.ham.hess(&b.phi(&self.torus_rotation(z, t))?);
            let a = j_left(&hess).map(|x| Complex64::new(x, 0.0));
            let res = deriv - a * zh;
            worst = worst.max(res.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendSpec;
    use crate::chart::{ChartConfig, ChartContext};
    use crate::flow::FlowConfig;
    use crate::sampling;

    fn ctx() -> CorrectorContext {
        let l = ModeLayout::new(4, &[1, -2]).unwrap();
        let b = BackendSpec::toy().build(&l).unwrap();
        let chart = ChartContext::new(b, &ChartConfig::default()).unwrap();
        CorrectorContext::new(chart, FlowConfig::default(), 1).unwrap()
    }

    fn point(c: &CorrectorContext, seed: u64, r: f64) -> Seq {
        let l = &c.chart.layout;
        sampling::tagged_sample(l, &mut sampling::rng(seed, 0), 0.1)
            + sampling::perp_sample(l, &mut sampling::rng(seed, 1), 0, r)
    }

    #[test]
    fn toy_identities_hold() {
        let c = ctx();
        let nf = NormalForm::new(&c).unwrap();
        let z = point(&c, 2, 0.04);
        let p = c.patch(&z).unwrap();
        assert!(nf.identity_chain(&z).unwrap() < 1e-10);
        assert!(nf.identity_torus_gradient(&p, &z).unwrap() < 1e-10);
        assert!(nf.identity_hessian(&p, &z).unwrap() < 1e-9);
        for l in 0..4 {
            let (a, b) = nf.r_xy_identity(&p, &z, l).unwrap();
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "l={l}: {a} vs {b}");
        }
    }

    #[test]
    fn d_r1_matches_finite_differences() {
        let c = ctx();
        let nf = NormalForm::new(&c).unwrap();
        let z = point(&c, 3, 0.04);
        let jets = c.chart.backend.jets(&c.chart.torus_point(&z), &c.chart.s_idx, true).unwrap();
        let h = 1e-6;
        for l in 0..4 {
            let col = c.chart.s_idx[l];
            let mut e = Seq::zeros(z.len());
            e[col] = h;
            let r = |y: &Seq| {
                let j = c.chart.backend.jets(&c.chart.torus_point(y), &c.chart.s_idx, false).unwrap();
                nf.r1_from(y, &j)
            };
            let fd = (r(&(&z + &e)) - r(&(&z - &e))) / (2.0 * h);
            assert!((fd - nf.d_r1(&z, &jets, l)).amax() < 1e-6);
        }
    }

    #[test]
    fn p3_terms_close_and_p2_vanishes() {
        let c = ctx();
        let nf = NormalForm::new(&c).unwrap();
        let z = point(&c, 4, 0.04);
        let p = c.patch(&z).unwrap();
        let t = nf.p3_terms(&p, &z).unwrap();
        assert!(t.closure() < 1e-10, "{t:?}");
        assert!(t.p2.abs() < 1e-12, "{t:?}");
        let direct = nf.p3(&p, &z).unwrap();
        assert!((direct - t.p3()).abs() < 1e-10);
        let jets = c.chart.backend.jets(&c.chart.torus_point(&z), &c.chart.s_idx, false).unwrap();
        assert!(nf.p2_residual(&jets, &z) < 1e-10);
        let b = nf.p3_2b_integral(&p, &z).unwrap();
        assert!((b - t.p3_2b).abs() < 1e-10);
        for tau in [0.0, 0.5, 1.0] {
            let a = nf.p_omega(&p, &z, tau).unwrap();
            let f = nf.p_omega_formula(&p, &z, tau).unwrap();
            assert!((a - f).abs() < 1e-10 * (1.0 + a.abs()), "{a} {f}");
        }
    }

    #[test]
    fn floquet_toy_residual() {
        let c = ctx();
        let nf = NormalForm::new(&c).unwrap();
        let z = c.chart.torus_point(&point(&c, 5, 0.0));
        for sign in [1, -1] {
            let r = nf.floquet_residual(&z, 3, sign, 16).unwrap();
            assert!(r < 1e-6, "{r}");
        }
    }
}
