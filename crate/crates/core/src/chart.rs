//! The linearized chart `Ψ_L(z) = Ψ^{nls}(z_S, 0) + d_⊥Ψ^{nls}(z_S, 0)[z_⊥]`.
//!
//! Everything is computed on the sequence side through `Ψ^{nls} = F_nls^{-1} ∘ Φ`:
//! `Φ_L(z) = Φ(z_S, 0) + T(z_S)(0, z_⊥)` and `Ψ_L = F_nls^{-1} ∘ Φ_L`.
//! The jets of `Φ` at `(z_S, 0)` come from a [`Patch`], either recomputed at
//! every `z_S` or expanded to second order around an anchor.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendKind, Jets};
use crate::error::{Error, Result};
use crate::forms::{power_norm, LocalL};
use crate::phase_space::{
    fnls_forward_matrix, fnls_inverse, fnls_inverse_matrix, gather, scatter, sobolev_norm, to_complex_mat,
    CVec, ModeLayout, Part, Seq,
};
use crate::sampling;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JetMode {
    /// Jets recomputed at every base point.
    Exact,
    /// Jets at the anchor, extended by their Taylor model.
    Anchored,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartConfig {
    /// Radius `δ` of the `⊥` ball.
    pub delta: f64,
    /// Half-width of the box of torus samples `𝒦`.
    pub k_amplitude: f64,
    /// Margin added to the `𝒦` box to form `𝒱_S`.
    pub margin: f64,
    pub c0_samples: usize,
    /// Defaults to exact jets for the toy backend and anchored jets otherwise.
    pub jet_mode: Option<JetMode>,
    pub seed: u64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self { delta: 0.1, k_amplitude: 0.1, margin: 0.1, c0_samples: 100, jet_mode: None, seed: 1 }
    }
}

pub const NEUMANN_TOL: f64 = 1e-14;
pub const NEUMANN_MAX: usize = 200;

#[derive(Clone, Debug)]
pub struct ChartContext {
    pub backend: Backend,
    pub layout: ModeLayout,
    pub s_idx: Vec<usize>,
    pub p_idx: Vec<usize>,
    pub delta: f64,
    /// `δ` requested before the `C₀δ ≤ ½` shrink, if one happened.
    pub delta_requested: f64,
    pub c0: f64,
    pub k_amplitude: f64,
    pub box_half: f64,
    pub jet_mode: JetMode,
}

impl ChartContext {
    pub fn new(backend: Backend, cfg: &ChartConfig) -> Result<Self> {
        if !(cfg.delta > 0.0) || !(cfg.k_amplitude >= 0.0) || !(cfg.margin >= 0.0) {
            return Err(Error::Config("chart radii must be positive".into()));
        }
        let layout = backend.layout.clone();
        let jet_mode = cfg.jet_mode.unwrap_or(match backend.kind {
            BackendKind::Toy => JetMode::Exact,
            BackendKind::Perturbative => JetMode::Anchored,
        });
        let mut ctx = Self {
            s_idx: layout.s_coords(),
            p_idx: layout.perp_coords(),
            layout,
            backend,
            delta: cfg.delta,
            delta_requested: cfg.delta,
            c0: 0.0,
            k_amplitude: cfg.k_amplitude,
            box_half: cfg.k_amplitude + cfg.margin,
            jet_mode,
        };
        ctx.c0 = ctx.fit_c0(cfg)?;
        if ctx.c0 * ctx.delta > 0.5 {
            ctx.delta = 0.5 / ctx.c0;
        }
        Ok(ctx)
    }

    /// `max margin / ‖z_⊥‖₀` over samples with `‖z_⊥‖₀ = δ`, cycling through at most five torus points.
    fn fit_c0(&self, cfg: &ChartConfig) -> Result<f64> {
        let n_tori = cfg.c0_samples.clamp(1, 5);
        let mut tori = Vec::new();
        for k in 0..n_tori {
            let zs = sampling::tagged_sample(&self.layout, &mut sampling::rng(cfg.seed, 1_000 + k as u64), self.k_amplitude);
            let jets = self.backend.jets(&zs, &self.s_idx, false)?;
            let tinv = jets.t.clone().try_inverse().ok_or(Error::Singular)?;
            tori.push((jets, tinv));
        }
        let mut c0: f64 = 0.0;
        for q in 0..cfg.c0_samples {
            let (jets, tinv) = &tori[q % n_tori];
            let zp = sampling::perp_sample(&self.layout, &mut sampling::rng(cfg.seed, 2_000 + q as u64), 0, self.delta);
            let v = v_matrix(jets, &zp);
            c0 = c0.max(power_norm(&(tinv * v), 200) / self.delta);
        }
        Ok(c0)
    }

    pub fn split(&self, z: &Seq) -> (Seq, Seq) {
        (gather(z, &self.s_idx), gather(z, &self.p_idx))
    }

    /// `(z_S, 0)` embedded in the full space.
    pub fn torus_point(&self, z: &Seq) -> Seq {
        scatter(z.len(), &self.s_idx, &gather(z, &self.s_idx))
    }

    pub fn perp_part(&self, z: &Seq) -> Seq {
        let mut out = z.clone();
        for &i in &self.s_idx {
            out[i] = 0.0;
        }
        out
    }

    /// `z ∈ 𝒱_S × {‖z_⊥‖₀ < factor·δ}`.
    pub fn guard(&self, z: &Seq, factor: f64) -> Result<()> {
        let zp = sobolev_norm(&self.layout, z, 0, Part::Perp);
        if zp >= factor * self.delta {
            return Err(Error::Radius { what: "‖z_⊥‖₀", value: zp, limit: factor * self.delta });
        }
        let zs = gather(z, &self.s_idx).amax();
        if zs > self.box_half {
            return Err(Error::Radius { what: "max |z_S|", value: zs, limit: self.box_half });
        }
        Ok(())
    }

    /// Patch anchored at the torus point of `z`.
    pub fn patch(&self, z: &Seq) -> Result<Patch<'_>> {
        let anchor = match self.jet_mode {
            JetMode::Exact => None,
            JetMode::Anchored => {
                let zs = gather(z, &self.s_idx);
                let jets = self.backend.jets(&self.torus_point(z), &self.s_idx, true)?;
                Some((zs, jets))
            }
        };
        Ok(Patch { ctx: self, anchor })
    }
}

/// `V = [D_k (0, z_⊥)]_k`.
pub fn v_matrix(jets: &Jets, zp: &Seq) -> DMatrix<f64> {
    let r = jets.rank();
    let mut v = DMatrix::zeros(zp.len(), r);
    for k in 0..r {
        v.set_column(k, &(&jets.d[k] * zp));
    }
    v
}

/// `dΨ_L(z)^{-1} − F_nls` on the sequence side together with its certification status.
#[derive(Clone, Debug)]
pub struct ChartInverse {
    /// `dΦ_L(z)^{-1} − Id`.
    pub seq: DMatrix<f64>,
    pub margin: f64,
    /// Neumann series used under the `½` margin.
    pub certified: bool,
    pub terms: usize,
}

/// Jet source shared by all evaluations of one computation.
pub struct Patch<'a> {
    pub ctx: &'a ChartContext,
    anchor: Option<(Seq, Jets)>,
}

impl<'a> Patch<'a> {
    /// Jets of `Φ` at `(z_S, 0)`.
    pub fn jets(&self, z: &Seq) -> Result<Jets> {
        self.jets_with(z, true)
    }

    /// Jets without `G` where they are recomputed; enough for `Φ_L`, `dΦ_L`, `L` and `X`.
    pub fn jets_low(&self, z: &Seq) -> Result<Jets> {
        self.jets_with(z, false)
    }

    fn jets_with(&self, z: &Seq, with_g: bool) -> Result<Jets> {
        let zs = gather(z, &self.ctx.s_idx);
        match &self.anchor {
            None => self.ctx.backend.jets(&self.ctx.torus_point(z), &self.ctx.s_idx, with_g),
            Some((a, jets)) => Ok(jets.shifted(&self.ctx.s_idx, &(zs - a))),
        }
    }

    pub fn local_l(&self, z: &Seq) -> Result<LocalL> {
        Ok(LocalL::new(self.jets(z)?, &self.ctx.s_idx, &self.ctx.p_idx, z))
    }

    /// `L(z)` without third-order jets; `dx_apply` and `dx_matrix` need [`Patch::local_l`].
    pub fn local_l_low(&self, z: &Seq) -> Result<LocalL> {
        Ok(LocalL::new(self.jets_low(z)?, &self.ctx.s_idx, &self.ctx.p_idx, z))
    }

    /// `Φ_L(z) = Φ(z_S, 0) + T(0, z_⊥)`.
    pub fn phi_l(&self, z: &Seq) -> Result<Seq> {
        let jets = self.jets_low(z)?;
        Ok(phi_l_from(&jets, &self.ctx.perp_part(z)))
    }

    pub fn psi_l(&self, z: &Seq) -> Result<CVec> {
        self.ctx.guard(z, 2.0)?;
        Ok(fnls_inverse(&self.ctx.layout, &self.phi_l(z)?))
    }

    /// `dΦ_L(z) = T + V Π_S`.
    pub fn d_phi_l(&self, z: &Seq) -> Result<DMatrix<f64>> {
        let jets = self.jets_low(z)?;
        Ok(d_phi_l_from(&jets, &self.ctx.s_idx, &self.ctx.perp_part(z)))
    }

    pub fn d_psi_l(&self, z: &Seq) -> Result<DMatrix<Complex64>> {
        self.ctx.guard(z, 2.0)?;
        Ok(fnls_inverse_matrix(&self.ctx.layout) * to_complex_mat(&self.d_phi_l(z)?))
    }

    /// `B_L(z) = Ψ_L(z) − F_nls^{-1} z`.
    pub fn b_l(&self, z: &Seq) -> Result<CVec> {
        self.ctx.guard(z, 2.0)?;
        Ok(fnls_inverse(&self.ctx.layout, &(self.phi_l(z)? - z)))
    }

    /// `‖𝒯(z)^{-1} ℛ(z)‖ = ‖T^{-1} V‖`.
    pub fn contraction_margin(&self, z: &Seq) -> Result<f64> {
        let jets = self.jets(z)?;
        let tinv = jets.t.clone().try_inverse().ok_or(Error::Singular)?;
        Ok(power_norm(&(tinv * v_matrix(&jets, &self.ctx.perp_part(z))), 200))
    }

    /// `𝒜_L(z) = dA^{nls} − 𝒯^{-1}ℛ𝒮`, with `𝒮` from the Neumann series of `(Id + 𝒯^{-1}ℛ)^{-1}`.
    ///
    /// `𝒯^{-1}ℛ = T^{-1} V Π_S` has rank `2|S|`, so the series is summed for
    /// `k = Π_S T^{-1} V` and pushed through: `K(Id + K)^{-1} = T^{-1}V(Id + k)^{-1}Π_S`.
    pub fn a_l(&self, z: &Seq) -> Result<ChartInverse> {
        self.ctx.guard(z, 2.0)?;
        let jets = self.jets(z)?;
        chart_inverse(&jets, &self.ctx.s_idx, &self.ctx.perp_part(z))
    }

    /// `𝒜_L(z)` as a sequence-side × function-side matrix.
    pub fn a_l_matrix(&self, z: &Seq) -> Result<(DMatrix<Complex64>, bool)> {
        let inv = self.a_l(z)?;
        Ok((to_complex_mat(&inv.seq) * fnls_forward_matrix(&self.ctx.layout), inv.certified))
    }

    pub fn a_l_apply(&self, z: &Seq, w: &CVec) -> Result<CVec> {
        Ok(self.a_l_matrix(z)?.0 * w)
    }
}

pub fn phi_l_from(jets: &Jets, zp: &Seq) -> Seq {
    &jets.phi + &jets.t * zp
}

pub fn d_phi_l_from(jets: &Jets, s_idx: &[usize], zp: &Seq) -> DMatrix<f64> {
    let v = v_matrix(jets, zp);
    let mut m = jets.t.clone();
    for (k, &c) in s_idx.iter().enumerate() {
        let col = m.column(c) + v.column(k);
        m.set_column(c, &col);
    }
    m
}

pub fn chart_inverse(jets: &Jets, s_idx: &[usize], zp: &Seq) -> Result<ChartInverse> {
    let n = zp.len();
    let r = s_idx.len();
    let tinv = jets.t.clone().try_inverse().ok_or(Error::Singular)?;
    let tv = &tinv * v_matrix(jets, zp);
    let margin = power_norm(&tv, 200);
    let k = DMatrix::from_fn(r, r, |i, j| tv[(s_idx[i], j)]);
    let mut certified = margin <= 0.5;
    let mut terms = 0;
    let mut inv = None;
    if certified {
        let mut sum = DMatrix::identity(r, r);
        let mut term = DMatrix::identity(r, r);
        while terms < NEUMANN_MAX {
            term = -(&term * &k);
            terms += 1;
            sum += &term;
            if term.norm() < NEUMANN_TOL {
                break;
            }
        }
        if term.norm() < NEUMANN_TOL {
            inv = Some(sum);
        } else {
            certified = false;
        }
    }
    let inv = match inv {
        Some(s) => s,
        None => (DMatrix::identity(r, r) + &k).try_inverse().ok_or(Error::Singular)?,
    };
    // Π_S T^{-1}: rows of T^{-1} on S
    let ps_tinv = DMatrix::from_fn(r, n, |i, j| tinv[(s_idx[i], j)]);
    let seq = &tinv - DMatrix::identity(n, n) - tv * inv * ps_tinv;
    Ok(ChartInverse { seq, margin, certified, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendSpec;
    use crate::phase_space::{fnls_forward_matrix, op_norm_c};

    fn ctx() -> ChartContext {
        let l = ModeLayout::new(5, &[1, -2]).unwrap();
        let b = BackendSpec::toy().build(&l).unwrap();
        ChartContext::new(b, &ChartConfig::default()).unwrap()
    }

    fn point(c: &ChartContext, seed: u64) -> Seq {
        let zs = sampling::tagged_sample(&c.layout, &mut sampling::rng(seed, 0), 0.1);
        zs + sampling::perp_sample(&c.layout, &mut sampling::rng(seed, 1), 0, 0.04)
    }

    #[test]
    fn chart_restricts_to_backend_on_torus() {
        let c = ctx();
        let z = point(&c, 3);
        let p = c.patch(&z).unwrap();
        let t = c.torus_point(&z);
        let a = p.psi_l(&t).unwrap();
        let b = c.backend.bk_eval(&t).unwrap();
        assert!((a - b).camax() < 1e-14);
        let da = p.d_psi_l(&t).unwrap();
        let db = c.backend.bk_diff(&t).unwrap();
        assert!((da - db).camax() < 1e-14);
    }

    #[test]
    fn d_psi_l_matches_finite_differences() {
        let c = ctx();
        let z = point(&c, 4);
        let p = c.patch(&z).unwrap();
        let d = p.d_psi_l(&z).unwrap();
        let h = 1e-6;
        for col in [0, 3, 7, 12, 17] {
            let mut e = Seq::zeros(z.len());
            e[col] = h;
            let fd = (p.psi_l(&(&z + &e)).unwrap() - p.psi_l(&(&z - &e)).unwrap()) / Complex64::new(2.0 * h, 0.0);
            assert!((fd - d.column(col)).camax() < 1e-7, "column {col}");
        }
    }

    #[test]
    fn chart_inverse_matches_dense_inverse() {
        let c = ctx();
        let z = point(&c, 5);
        let p = c.patch(&z).unwrap();
        let (a, certified) = p.a_l_matrix(&z).unwrap();
        assert!(certified);
        let inv = p.d_psi_l(&z).unwrap().try_inverse().unwrap();
        let diff = inv - (fnls_forward_matrix(&c.layout) + a);
        assert!(op_norm_c(&diff) < 1e-10);
    }

    #[test]
    fn margin_is_homogeneous_and_below_fit() {
        let c = ctx();
        let z = point(&c, 6);
        let p = c.patch(&z).unwrap();
        let m1 = p.contraction_margin(&z).unwrap();
        let z2 = c.torus_point(&z) + c.perp_part(&z) * 2.0;
        let m2 = p.contraction_margin(&z2).unwrap();
        assert!((m2 - 2.0 * m1).abs() < 1e-10 * m2.max(1.0));
        assert_eq!(p.contraction_margin(&c.torus_point(&z)).unwrap(), 0.0);
        assert!(c.c0 * c.delta <= 0.5);
    }
}
