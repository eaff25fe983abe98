//! The path-method corrector `Ψ_C`, the time-one map of `∂_τ z = X(z, τ)`,
//! and the composed map `Ψ = Ψ_L ∘ Ψ_C`.
//!
//! Flows use the fixed-step RK4 scheme of [`FlowConfig`] with a step-halving
//! check on the values. Tangent maps are integrated with the variational
//! equation `M' = dX(z(τ), τ) M` alongside the base flow.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chart::{chart_inverse, d_phi_l_from, phi_l_from, ChartContext, Patch};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::phase_space::{
    apply_j, fnls_forward, fnls_forward_matrix, fnls_inverse, fnls_inverse_matrix, j_matrix, op_norm,
    sobolev_norm, to_complex_mat, CVec, Part, Seq,
};
use crate::quadrature::{gauss_legendre, rk4_observed, GAUSS_NODES};
use crate::sampling;

/// Which tangent information to carry along a flow.
#[derive(Clone, Debug)]
pub enum Tangent {
    None,
    Dir(Seq),
    Full,
}

#[derive(Clone, Debug)]
pub struct FlowOut {
    pub value: Seq,
    pub dir: Option<Seq>,
    pub jac: Option<DMatrix<f64>>,
    /// Max-norm difference against the half-step run.
    pub halving_err: f64,
    /// Largest `‖z_⊥(τ)‖₀ / 2δ` along the path.
    pub domain_use: f64,
}

pub struct CorrectorContext {
    pub chart: ChartContext,
    pub flow: FlowConfig,
    pub delta_prime: f64,
    pub halvings: usize,
}

pub const MAX_HALVINGS: usize = 6;

impl CorrectorContext {
    /// Starts from `δ' = δ/2` and halves while probe flows leave `𝒱_{2δ}`.
    pub fn new(chart: ChartContext, flow: FlowConfig, seed: u64) -> Result<Self> {
        flow.validate()?;
        let mut ctx = Self { delta_prime: 0.5 * chart.delta, chart, flow, halvings: 0 };
        loop {
            match ctx.probe(seed) {
                Ok(()) => return Ok(ctx),
                Err(Error::DomainEscape(_)) if ctx.halvings < MAX_HALVINGS => {
                    ctx.delta_prime *= 0.5;
                    ctx.halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn probe(&self, seed: u64) -> Result<()> {
        for k in 0..3u64 {
            let zs = sampling::tagged_sample(&self.chart.layout, &mut sampling::rng(seed, 3_000 + k), self.chart.k_amplitude);
            let zp = sampling::perp_sample(&self.chart.layout, &mut sampling::rng(seed, 3_100 + k), 0, 0.99 * self.delta_prime);
            let z = zs + zp;
            let patch = self.chart.patch(&z)?;
            self.flow(&patch, &z, 0.0, 1.0, Tangent::None)?;
        }
        Ok(())
    }

    /// `z ∈ 𝒱'_δ`.
    pub fn guard_start(&self, z: &Seq) -> Result<()> {
        let zp = sobolev_norm(&self.chart.layout, z, 0, Part::Perp);
        if zp >= self.delta_prime {
            return Err(Error::Radius { what: "‖z_⊥‖₀ (corrector)", value: zp, limit: self.delta_prime });
        }
        self.chart.guard(z, 1.0)
    }

    pub fn patch(&self, z: &Seq) -> Result<Patch<'_>> {
        self.chart.patch(z)
    }

    /// `X(z, τ)`.
    pub fn vector_field(&self, patch: &Patch, z: &Seq, tau: f64) -> Result<Seq> {
        patch.local_l(z)?.vector_field(tau)
    }

    /// `Ψ_X^{τ₀, τ₁}(z)` with optional tangent propagation.
    pub fn flow(&self, patch: &Patch, z: &Seq, t0: f64, t1: f64, tangent: Tangent) -> Result<FlowOut> {
        let n = z.len();
        if t0 == t1 {
            return Ok(FlowOut {
                value: z.clone(),
                dir: match &tangent {
                    Tangent::Dir(v) => Some(v.clone()),
                    _ => None,
                },
                jac: matches!(tangent, Tangent::Full).then(|| DMatrix::identity(n, n)),
                halving_err: 0.0,
                domain_use: 0.0,
            });
        }
        let (full, domain_use) = self.integrate(patch, z, t0, t1, &tangent, self.flow.steps)?;
        let (half, _) = self.integrate(patch, z, t0, t1, &Tangent::None, self.flow.steps / 2)?;
        let value = full.rows(0, n).into_owned();
        let halving_err = (&value - &half).amax();
        if halving_err > self.flow.halving_tol * (1.0 + z.amax()) {
            return Err(Error::Halving(halving_err));
        }
        let (dir, jac) = match tangent {
            Tangent::None => (None, None),
            Tangent::Dir(_) => (Some(full.rows(n, n).into_owned()), None),
            Tangent::Full => (None, Some(DMatrix::from_column_slice(n, n, &full.as_slice()[n..]))),
        };
        Ok(FlowOut { value, dir, jac, halving_err, domain_use })
    }

    fn integrate(
        &self,
        patch: &Patch,
        z: &Seq,
        t0: f64,
        t1: f64,
        tangent: &Tangent,
        steps: usize,
    ) -> Result<(DVector<f64>, f64)> {
        let n = z.len();
        let extra = match tangent {
            Tangent::None => 0,
            Tangent::Dir(_) => n,
            Tangent::Full => n * n,
        };
        let mut y0 = DVector::zeros(n + extra);
        y0.rows_mut(0, n).copy_from(z);
        match tangent {
            Tangent::None => {}
            Tangent::Dir(v) => y0.rows_mut(n, n).copy_from(v),
            Tangent::Full => {
                for i in 0..n {
                    y0[n + i * n + i] = 1.0;
                }
            }
        }
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let rhs = |tau: f64, y: &DVector<f64>| -> DVector<f64> {
            let mut out = DVector::zeros(y.len());
            if failure.borrow().is_some() {
                return out;
            }
            let zc = y.rows(0, n).into_owned();
            let mut step = || -> Result<()> {
                let ll = match tangent {
                    Tangent::None => patch.local_l_low(&zc)?,
                    _ => patch.local_l(&zc)?,
                };
                let x = ll.vector_field(tau)?;
                out.rows_mut(0, n).copy_from(&x);
                match tangent {
                    Tangent::None => {}
                    Tangent::Dir(_) => {
                        let v = y.rows(n, n).into_owned();
                        out.rows_mut(n, n).copy_from(&ll.dx_apply(tau, &x, &v)?);
                    }
                    Tangent::Full => {
                        let m = DMatrix::from_column_slice(n, n, &y.as_slice()[n..]);
                        let dm = ll.dx_matrix(tau, &x)? * m;
                        out.as_mut_slice()[n..].copy_from_slice(dm.as_slice());
                    }
                }
                Ok(())
            };
            if let Err(e) = step() {
                *failure.borrow_mut() = Some(e);
            }
            out
        };
        let limit = 2.0 * self.chart.delta;
        let mut domain_use: f64 = 0.0;
        let mut escape = None;
        let observe = |tau: f64, y: &DVector<f64>| -> bool {
            if failure.borrow().is_some() {
                return false;
            }
            let zc = y.rows(0, n).into_owned();
            let zp = sobolev_norm(&self.chart.layout, &zc, 0, Part::Perp);
            domain_use = domain_use.max(zp / limit);
            if !zc.iter().all(|v| v.is_finite()) || self.chart.guard(&zc, 2.0).is_err() {
                escape = Some(tau);
                return false;
            }
            true
        };
        let out = rk4_observed(rhs, &y0, t0, t1, steps, observe);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if let Some(tau) = escape {
            return Err(Error::DomainEscape(tau));
        }
        Ok((out.expect("aborts are reported above"), domain_use))
    }

    pub fn psi_c(&self, patch: &Patch, z: &Seq) -> Result<Seq> {
        self.guard_start(z)?;
        Ok(self.flow(patch, z, 0.0, 1.0, Tangent::None)?.value)
    }

    /// `Ψ_C^{-1} = Ψ_X^{1, 0}`.
    pub fn psi_c_inv(&self, patch: &Patch, z: &Seq) -> Result<Seq> {
        self.chart.guard(z, 2.0)?;
        Ok(self.flow(patch, z, 1.0, 0.0, Tangent::None)?.value)
    }

    /// `B_C(z) = Ψ_C(z) − z`.
    pub fn b_c(&self, patch: &Patch, z: &Seq) -> Result<Seq> {
        Ok(self.psi_c(patch, z)? - z)
    }

    /// `(Ψ_C(z), dΨ_C(z))`.
    pub fn d_psi_c(&self, patch: &Patch, z: &Seq) -> Result<(Seq, DMatrix<f64>)> {
        self.guard_start(z)?;
        let out = self.flow(patch, z, 0.0, 1.0, Tangent::Full)?;
        Ok((out.value, out.jac.expect("full tangent requested")))
    }

    /// `‖dΨ_Cᵀ 𝓛₁(Ψ_C z) dΨ_C − J^{-1}‖`, the pullback of `Λ_M + Λ_L` minus `Λ_M`.
    pub fn darboux_residual(&self, patch: &Patch, z: &Seq) -> Result<f64> {
        let (w, m) = self.d_psi_c(patch, z)?;
        let jinv = -j_matrix(z.len());
        let gram = &jinv + patch.local_l(&w)?.matrix();
        Ok(op_norm(&(m.transpose() * gram * &m - jinv)))
    }

    /// Gram matrix of `(Ψ_X^{0,τ})^* Λ_τ`.
    pub fn pulled_gram(&self, patch: &Patch, z: &Seq, tau: f64) -> Result<DMatrix<f64>> {
        let out = self.flow(patch, z, 0.0, tau, Tangent::Full)?;
        let m = out.jac.expect("full tangent requested");
        let gram = -j_matrix(z.len()) + patch.local_l(&out.value)?.matrix() * tau;
        Ok(m.transpose() * gram * &m)
    }

    /// `‖∂_τ (Ψ_X^{0,τ})^* Λ_τ‖` by a central difference with step `h`.
    pub fn tau_probe(&self, patch: &Patch, z: &Seq, tau: f64, h: f64) -> Result<f64> {
        self.guard_start(z)?;
        let gp = self.pulled_gram(patch, z, tau + h)?;
        let gm = self.pulled_gram(patch, z, tau - h)?;
        Ok(op_norm(&((gp - gm) / (2.0 * h))))
    }

    /// `B₂^C(z) = −J E(z)` and `B₃^C(z) = ∫₀¹ (dB_C(z_S, t z_⊥)[(0, z_⊥)] − 2t B₂^C(z)) dt`.
    pub fn b_c_split(&self, patch: &Patch, z: &Seq) -> Result<(Seq, Seq)> {
        self.guard_start(z)?;
        let b2 = -apply_j(&patch.local_l(z)?.e_vector());
        let zs = self.chart.torus_point(z);
        let zp = self.chart.perp_part(z);
        let (nodes, weights) = gauss_legendre(GAUSS_NODES);
        let mut b3 = Seq::zeros(z.len());
        for (t, w) in nodes.iter().zip(&weights) {
            let y = &zs + &zp * *t;
            let out = self.flow(patch, &y, 0.0, 1.0, Tangent::Dir(zp.clone()))?;
            let db = out.dir.expect("tangent requested") - &zp;
            b3 += (db - &b2 * (2.0 * t)) * *w;
        }
        Ok((b2, b3))
    }

    /// `Φ_L ∘ Ψ_C` on the sequence side.
    pub fn phi_full(&self, patch: &Patch, z: &Seq) -> Result<Seq> {
        let w = self.psi_c(patch, z)?;
        let jets = patch.jets_low(&w)?;
        Ok(phi_l_from(&jets, &self.chart.perp_part(&w)))
    }

    /// `Ψ(z) = Ψ_L(Ψ_C(z))`.
    pub fn psi_full(&self, patch: &Patch, z: &Seq) -> Result<CVec> {
        Ok(fnls_inverse(&self.chart.layout, &self.phi_full(patch, z)?))
    }

    /// `B(z) = Ψ(z) − F_nls^{-1} z`.
    pub fn b_full(&self, patch: &Patch, z: &Seq) -> Result<CVec> {
        Ok(fnls_inverse(&self.chart.layout, &(self.phi_full(patch, z)? - z)))
    }

    /// `F_nls^{-1}(B_C(z)) + B_L(Ψ_C(z))`, the decomposed form of `B(z)`.
    pub fn b_full_decomposed(&self, patch: &Patch, z: &Seq) -> Result<CVec> {
        let w = self.psi_c(patch, z)?;
        let bc = &w - z;
        Ok(fnls_inverse(&self.chart.layout, &bc) + patch.b_l(&w)?)
    }

    /// `dΦ_L(Ψ_C z) dΨ_C(z)`; `dΨ = F_nls^{-1}` times this.
    pub fn d_phi_full(&self, patch: &Patch, z: &Seq) -> Result<(Seq, DMatrix<f64>, DMatrix<f64>)> {
        let (w, m) = self.d_psi_c(patch, z)?;
        let jets = patch.jets_low(&w)?;
        let dl = d_phi_l_from(&jets, &self.chart.s_idx, &self.chart.perp_part(&w));
        Ok((w, dl * &m, m))
    }

    pub fn d_psi_full(&self, patch: &Patch, z: &Seq) -> Result<DMatrix<Complex64>> {
        let (_, d, _) = self.d_phi_full(patch, z)?;
        Ok(fnls_inverse_matrix(&self.chart.layout) * to_complex_mat(&d))
    }

    /// `Ψ^{-1}(w)`: Newton for `Ψ_L^{-1}`, then the backward corrector flow.
    pub fn psi_full_inv(&self, patch: &Patch, w: &CVec) -> Result<Seq> {
        let target = fnls_forward(&self.chart.layout, w)?;
        let mut y = target.clone();
        let tol = crate::backend::NEWTON_TOL * (1.0 + target.amax());
        let mut converged = false;
        for _ in 0..crate::backend::NEWTON_MAX {
            let jets = patch.jets_low(&y)?;
            let zp = self.chart.perp_part(&y);
            let res = phi_l_from(&jets, &zp) - &target;
            if res.amax() <= tol {
                converged = true;
                break;
            }
            let d = d_phi_l_from(&jets, &self.chart.s_idx, &zp);
            y -= d.lu().solve(&res).ok_or(Error::Singular)?;
        }
        if !converged {
            let jets = patch.jets(&y)?;
            let res = (phi_l_from(&jets, &self.chart.perp_part(&y)) - &target).amax();
            if res > tol {
                return Err(Error::Newton(res));
            }
        }
        self.psi_c_inv(patch, &y)
    }

    /// `𝒜(z) = dΨ(z)^{-1} − F_nls` from the dense inverse of `dΦ_L dΨ_C`.
    pub fn a_full_dense(&self, patch: &Patch, z: &Seq) -> Result<DMatrix<Complex64>> {
        let (_, d, _) = self.d_phi_full(patch, z)?;
        let n = z.len();
        let inv = d.try_inverse().ok_or(Error::Singular)? - DMatrix::identity(n, n);
        Ok(to_complex_mat(&inv) * fnls_forward_matrix(&self.chart.layout))
    }

    /// `𝒜(z) = 𝒜_L(Ψ_C z) + (dΨ_C^{-1} − Id) dΨ_L(Ψ_C z)^{-1}` by the chain rule, with the
    /// chart part from its Neumann series. The flag reports Neumann certification.
    pub fn a_full(&self, patch: &Patch, z: &Seq) -> Result<(DMatrix<Complex64>, bool)> {
        let (w, m) = self.d_psi_c(patch, z)?;
        let n = z.len();
        let jets = patch.jets(&w)?;
        let inv = chart_inverse(&jets, &self.chart.s_idx, &self.chart.perp_part(&w))?;
        let dl_inv = &inv.seq + DMatrix::identity(n, n);
        let ac = m.try_inverse().ok_or(Error::Singular)? - DMatrix::identity(n, n);
        let seq = &inv.seq + ac * dl_inv;
        Ok((to_complex_mat(&seq) * fnls_forward_matrix(&self.chart.layout), inv.certified))
    }

    pub fn a_full_apply(&self, patch: &Patch, z: &Seq, w: &CVec) -> Result<CVec> {
        Ok(self.a_full(patch, z)?.0 * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendSpec;
    use crate::chart::ChartConfig;
    use crate::forms::symplecticity_residual;
    use crate::phase_space::{op_norm_c, ModeLayout};

    fn ctx() -> CorrectorContext {
        let l = ModeLayout::new(4, &[1]).unwrap();
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
    fn flow_group_and_reversal() {
        let c = ctx();
        let z = point(&c, 2, 0.04);
        let p = c.patch(&z).unwrap();
        let a = c.flow(&p, &z, 0.0, 0.5, Tangent::None).unwrap().value;
        let b = c.flow(&p, &a, 0.5, 1.0, Tangent::None).unwrap().value;
        let full = c.psi_c(&p, &z).unwrap();
        assert!((&b - &full).amax() < 1e-9);
        assert!((c.psi_c_inv(&p, &full).unwrap() - &z).amax() < 1e-9);
        assert!((c.psi_c(&p, &c.chart.torus_point(&z)).unwrap() - c.chart.torus_point(&z)).amax() == 0.0);
    }

    #[test]
    fn corrected_map_is_symplectic_and_darboux() {
        let c = ctx();
        let z = point(&c, 3, 0.04);
        let p = c.patch(&z).unwrap();
        assert!(c.darboux_residual(&p, &z).unwrap() < 1e-9);
        let d = c.d_psi_full(&p, &z).unwrap();
        assert!(symplecticity_residual(&c.chart.layout, &d).unwrap() < 1e-9);
        // uncorrected chart is not symplectic at this size
        let dl = p.d_psi_l(&z).unwrap();
        assert!(symplecticity_residual(&c.chart.layout, &dl).unwrap() > 1e-6);
    }

    #[test]
    fn round_trips_and_inverse_formula() {
        let c = ctx();
        let z = point(&c, 4, 0.04);
        let p = c.patch(&z).unwrap();
        let w = c.psi_full(&p, &z).unwrap();
        assert!((c.psi_full_inv(&p, &w).unwrap() - &z).amax() < 1e-10);
        let (a, cert) = c.a_full(&p, &z).unwrap();
        assert!(cert);
        let dense = c.a_full_dense(&p, &z).unwrap();
        assert!(op_norm_c(&(a - dense)) < 1e-9);
        let bd = c.b_full_decomposed(&p, &z).unwrap();
        assert!((c.b_full(&p, &z).unwrap() - bd).camax() < 1e-13);
    }

    #[test]
    fn taylor_split_closes() {
        let c = ctx();
        let z = point(&c, 5, 0.04);
        let p = c.patch(&z).unwrap();
        let (b2, b3) = c.b_c_split(&p, &z).unwrap();
        let bc = c.b_c(&p, &z).unwrap();
        assert!((&b2 + &b3 - &bc).amax() < 1e-10, "{}", (&b2 + &b3 - &bc).amax());
        assert!(b3.norm() < b2.norm());
    }
}
