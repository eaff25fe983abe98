//! Differential forms on truncated spaces.
//!
//! Constant two-forms are stored as Gram matrices, `Λ[a, b] = (G a, b)_r` on
//! the sequence side and `⟨G a, b⟩_r` on the function side. Nonconstant forms
//! implement [`FormField`]; their exterior derivatives use Cartan's formula
//! with central differences.
//!
//! [`LocalL`] holds the operator `L(z)` of the pulled-back form
//! `Ψ_L^*Λ = Λ_M + Λ_L`, its one-form vector `E(z)` and the solver for
//! `𝓛_τ = J^{-1} + τL`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::backend::Jets;
use crate::error::{Error, Result};
use crate::phase_space::{apply_j, gather, j_matrix, pairing_matrix, CVec, ModeLayout, Seq};
use crate::quadrature::{fd_step, gauss_legendre, GAUSS_NODES};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Sequence,
    Function,
}

/// Constant two-form given by its Gram matrix.
#[derive(Clone, Debug)]
pub struct TwoFormMat {
    pub gram: DMatrix<Complex64>,
    pub side: Side,
}

impl TwoFormMat {
    /// `Λ_M`, Gram `J^{-1} = −J`.
    pub fn lambda_m(layout: &ModeLayout) -> Self {
        let g = -j_matrix(layout.dim());
        Self { gram: g.map(|x| Complex64::new(x, 0.0)), side: Side::Sequence }
    }
    /// `Λ`, Gram `i𝕁` against `⟨·,·⟩_r`.
    pub fn lambda(layout: &ModeLayout) -> Self {
        let g = j_matrix(layout.dim());
        Self { gram: g.map(|x| Complex64::new(0.0, x)), side: Side::Function }
    }

    pub fn eval(&self, layout: &ModeLayout, a: &CVec, b: &CVec) -> Complex64 {
        let ga = &self.gram * a;
        match self.side {
            Side::Sequence => ga.iter().zip(b.iter()).map(|(x, y)| x * y).sum(),
            Side::Function => crate::phase_space::pairing_fun_r(layout, &ga, b),
        }
    }

    /// Antisymmetry defect with respect to the side's pairing.
    pub fn antisymmetry_defect(&self, layout: &ModeLayout) -> f64 {
        let b = match self.side {
            Side::Sequence => self.gram.transpose(),
            Side::Function => self.gram.transpose() * pairing_matrix(layout),
        };
        // bilinear matrix is Gᵀ (seq) or GᵀP (fun); antisymmetric iff B + Bᵀ = 0
        (&b + b.transpose()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Pullback of a two-form under a linear map `T` from the sequence side:
/// `G' = Tᵗ G T` with `Tᵗ = Tᵀ` or `Tᵀ P` depending on the target side.
pub fn pullback_two_form(layout: &ModeLayout, t: &DMatrix<Complex64>, form: &TwoFormMat) -> Result<TwoFormMat> {
    if t.nrows() != form.gram.nrows() {
        return Err(Error::Layout("pullback dimension mismatch".into()));
    }
    let tt = match form.side {
        Side::Sequence => t.transpose(),
        Side::Function => t.transpose() * pairing_matrix(layout),
    };
    Ok(TwoFormMat { gram: tt * &form.gram * t, side: Side::Sequence })
}

/// Operator norm of `Tᵗ G_Λ T − J^{-1}` for a sequence-to-function map `T`.
pub fn symplecticity_residual(layout: &ModeLayout, t: &DMatrix<Complex64>) -> Result<f64> {
    let pb = pullback_two_form(layout, t, &TwoFormMat::lambda(layout))?;
    Ok(crate::phase_space::op_norm_c(&(pb.gram - TwoFormMat::lambda_m(layout).gram)))
}

/// Same check for a sequence-side map and the reference form `Λ_M`.
pub fn symplecticity_residual_seq(t: &DMatrix<f64>) -> f64 {
    let g = -j_matrix(t.nrows());
    crate::phase_space::op_norm(&(t.transpose() * &g * t - g))
}

/// A nonconstant `r`-form on `ℝⁿ`.
pub trait FormField: Sync {
    fn degree(&self) -> usize;
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64;
}

/// `dω(z)[ξ_1..ξ_{r+1}] = Σ_j (−1)^{j+1} ω'(z)·ξ_j [ξ without ξ_j]`, central differences.
pub fn exterior_derivative(w: &dyn FormField, z: &Seq, vs: &[&Seq]) -> f64 {
    assert_eq!(vs.len(), w.degree() + 1, "exterior derivative needs r + 1 vectors");
    let h = fd_step(z.norm());
    let mut acc = 0.0;
    for j in 0..vs.len() {
        let rest: Vec<&Seq> = vs.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| *v).collect();
        let zp = z + vs[j] * h;
        let zm = z - vs[j] * h;
        let deriv = (w.eval(&zp, &rest) - w.eval(&zm, &rest)) / (2.0 * h);
        acc += if j % 2 == 0 { deriv } else { -deriv };
    }
    acc
}

/// `dω` as a form field.
pub struct Exterior<'a>(pub &'a dyn FormField);

impl FormField for Exterior<'_> {
    fn degree(&self) -> usize {
        self.0.degree() + 1
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        exterior_derivative(self.0, z, vs)
    }
}

/// `ω_C(x, y)[ξ..] = ∫₀¹ ω(x, ty)[(0, y), (v_1, t w_1), ...] dt` on `ℝ^{n₁} × ℝ^{n₂}`,
/// with the `y` block given by `y_idx`.
pub struct Cone<'a> {
    pub inner: &'a dyn FormField,
    pub y_idx: Vec<usize>,
    pub nodes: usize,
}

impl<'a> Cone<'a> {
    pub fn new(inner: &'a dyn FormField, y_idx: Vec<usize>) -> Self {
        Self { inner, y_idx, nodes: GAUSS_NODES }
    }
    fn scale_y(&self, v: &Seq, t: f64) -> Seq {
        let mut out = v.clone();
        for &i in &self.y_idx {
            out[i] *= t;
        }
        out
    }
    fn only_y(&self, v: &Seq) -> Seq {
        let mut out = Seq::zeros(v.len());
        for &i in &self.y_idx {
            out[i] = v[i];
        }
        out
    }
    fn quad(&self, z: &Seq, vs: &[&Seq], nodes: usize) -> f64 {
        let (x, w) = gauss_legendre(nodes);
        let radial = self.only_y(z);
        x.iter()
            .zip(&w)
            .map(|(t, wt)| {
                let zt = self.scale_y(z, *t);
                let scaled: Vec<Seq> = vs.iter().map(|v| self.scale_y(v, *t)).collect();
                let mut args: Vec<&Seq> = vec![&radial];
                args.extend(scaled.iter());
                wt * self.inner.eval(&zt, &args)
            })
            .sum()
    }

    /// Node-doubling check of the quadrature.
    pub fn checked(&self, z: &Seq, vs: &[&Seq], tol: f64) -> Result<f64> {
        let a = self.quad(z, vs, self.nodes);
        let b = self.quad(z, vs, 2 * self.nodes);
        if (a - b).abs() > tol * (1.0 + b.abs()) {
            return Err(Error::Quadrature((a - b).abs()));
        }
        Ok(b)
    }
}

impl FormField for Cone<'_> {
    fn degree(&self) -> usize {
        self.inner.degree() - 1
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        self.quad(z, vs, self.nodes)
    }
}

/// Value of `ω_C` with the node-doubling check.
pub fn cone_construct(w: &dyn FormField, y_idx: &[usize], z: &Seq, vs: &[&Seq]) -> Result<f64> {
    Cone::new(w, y_idx.to_vec()).checked(z, vs, 1e-10)
}

/// `λ_M(z)[ẑ] = ½(J^{-1} z, ẑ)_r`, whose exterior derivative is `Λ_M`.
pub struct LambdaM;

impl FormField for LambdaM {
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        -0.5 * apply_j(z).dot(vs[0])
    }
}

/// `Λ_M` as a form field.
pub struct BigLambdaM;

impl FormField for BigLambdaM {
    fn degree(&self) -> usize {
        2
    }
    fn eval(&self, _z: &Seq, vs: &[&Seq]) -> f64 {
        -apply_j(vs[0]).dot(vs[1])
    }
}

/// Blocks of `L(z)`; the `⊥⊥` block is identically zero.
#[derive(Clone, Debug)]
pub struct BlockL {
    pub ss: DMatrix<f64>,
    pub sp: DMatrix<f64>,
    pub ps: DMatrix<f64>,
}

/// `L(z)`, `E(z)` and `𝓛_τ(z)` at one point, from the jets of `Φ` at `z_S`.
///
/// With `T = dΦ(z_S, 0)`, `V = [D_k (0, z_⊥)]_k` and `P = TᵀJV`:
/// `L_S^⊥ = P_⊥ᵀ`, `L_⊥^S = −P_⊥`, `L_S^S = P_Sᵀ − P_S − VᵀJV`, `E_S = ½ P_⊥ᵀ z_⊥`.
pub struct LocalL {
    pub jets: Jets,
    pub s_idx: Vec<usize>,
    pub p_idx: Vec<usize>,
    pub zp: Seq,
    pub v: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub vjv: DMatrix<f64>,
    pub tj: DMatrix<f64>,
}

fn j_left(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = n / 2;
    let mut out = DMatrix::zeros(n, a.ncols());
    for i in 0..m {
        out.row_mut(i).copy_from(&(-a.row(m + i)));
        out.row_mut(m + i).copy_from(&a.row(i));
    }
    out
}

impl LocalL {
    pub fn new(jets: Jets, s_idx: &[usize], p_idx: &[usize], z: &Seq) -> Self {
        let n = z.len();
        let r = s_idx.len();
        let mut zp = z.clone();
        for &i in s_idx {
            zp[i] = 0.0;
        }
        let mut v = DMatrix::zeros(n, r);
        for k in 0..r {
            v.set_column(k, &(&jets.d[k] * &zp));
        }
        // TᵀJ = −(J T)ᵀ... kept explicit: (TᵀJ) = (Jᵀ T)ᵀ = −(J T)ᵀ
        let tj = -j_left(&jets.t).transpose();
        let p = &tj * &v;
        let vjv = v.transpose() * j_left(&v);
        Self { jets, s_idx: s_idx.to_vec(), p_idx: p_idx.to_vec(), zp, v, p, vjv, tj }
    }

    pub fn rank(&self) -> usize {
        self.s_idx.len()
    }

    fn rows(&self, a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
    }

    pub fn blocks(&self) -> BlockL {
        let ps = self.rows(&self.p, &self.s_idx);
        let pp = self.rows(&self.p, &self.p_idx);
        BlockL { ss: ps.transpose() - &ps - &self.vjv, sp: pp.transpose(), ps: -pp }
    }

    /// Dense `L(z)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.zp.len();
        let r = self.rank();
        let mut l = DMatrix::zeros(n, n);
        for k in 0..r {
            let sk = self.s_idx[k];
            for i in 0..n {
                l[(i, sk)] -= self.p[(i, k)];
                l[(sk, i)] += self.p[(i, k)];
            }
            for q in 0..r {
                l[(sk, self.s_idx[q])] -= self.vjv[(k, q)];
            }
        }
        l
    }

    /// `E(z) = (½ P_⊥ᵀ z_⊥, 0)`.
    pub fn e_vector(&self) -> Seq {
        let es = self.p.transpose() * &self.zp * 0.5;
        let mut e = Seq::zeros(self.zp.len());
        for (k, &i) in self.s_idx.iter().enumerate() {
            e[i] = es[k];
        }
        e
    }

    /// `L(z) x` without forming `L`.
    pub fn apply_l(&self, x: &Seq) -> Seq {
        let xs = gather(x, &self.s_idx);
        let mut out = -(&self.p * &xs);
        let ptx = self.p.transpose() * x;
        let vx = &self.vjv * &xs;
        for (k, &i) in self.s_idx.iter().enumerate() {
            out[i] += ptx[k] - vx[k];
        }
        out
    }

    /// Solves `(J^{-1} + τL) v = rhs` by eliminating the `⊥` block.
    pub fn solve(&self, tau: f64, rhs: &Seq) -> Result<Seq> {
        let b = self.blocks();
        let r = self.rank();
        let rs = gather(rhs, &self.s_idx);
        let rp = gather(rhs, &self.p_idx);
        let jw = j_left(&b.ps);
        let schur = -j_matrix(r) + &b.ss * tau - &b.sp * &jw * (tau * tau);
        let rhs_s = &rs - &b.sp * apply_j(&rp) * tau;
        let a = schur.lu().solve(&rhs_s).ok_or(Error::Singular)?;
        let bp = apply_j(&(&rp - &b.ps * &a * tau));
        let mut out = Seq::zeros(rhs.len());
        for (k, &i) in self.s_idx.iter().enumerate() {
            out[i] = a[k];
        }
        for (k, &i) in self.p_idx.iter().enumerate() {
            out[i] = bp[k];
        }
        Ok(out)
    }

    /// `X(z, τ) = −𝓛_τ(z)^{-1} E(z)`.
    pub fn vector_field(&self, tau: f64) -> Result<Seq> {
        Ok(-self.solve(tau, &self.e_vector())?)
    }

    /// `dX(z, τ)[ẑ]` given `x = X(z, τ)`.
    pub fn dx_apply(&self, tau: f64, x: &Seq, zh: &Seq) -> Result<Seq> {
        let n = self.zp.len();
        let r = self.rank();
        let hs = gather(zh, &self.s_idx);
        let mut hp = zh.clone();
        for &i in &self.s_idx {
            hp[i] = 0.0;
        }
        let mut dt = DMatrix::zeros(n, n);
        for l in 0..r {
            if hs[l] != 0.0 {
                dt += &self.jets.d[l] * hs[l];
            }
        }
        let mut dv = DMatrix::zeros(n, r);
        for k in 0..r {
            let mut col = &self.jets.d[k] * &hp;
            for l in 0..r {
                if hs[l] != 0.0 {
                    col += self.jets.g(l, k) * &self.zp * hs[l];
                }
            }
            dv.set_column(k, &col);
        }
        let jv = j_left(&self.v);
        let dp = dt.transpose() * &jv + &self.tj * &dv;
        self.finish_dx(tau, x, &hp, &dp, &dv)
    }

    fn finish_dx(&self, tau: f64, x: &Seq, hp: &Seq, dp: &DMatrix<f64>, dv: &DMatrix<f64>) -> Result<Seq> {
        let xs = gather(x, &self.s_idx);
        let de_s = (dp.transpose() * &self.zp + self.p.transpose() * hp) * 0.5;
        let dvjv = dv.transpose() * j_left(&self.v) + self.v.transpose() * j_left(dv);
        let mut rhs = -(dp * &xs) * tau;
        let dptx = dp.transpose() * x;
        let dvx = &dvjv * &xs;
        for (k, &i) in self.s_idx.iter().enumerate() {
            rhs[i] += de_s[k] + tau * (dptx[k] - dvx[k]);
        }
        Ok(-self.solve(tau, &rhs)?)
    }

    /// Dense `dX(z, τ)`; `⊥` columns reuse `M_k = TᵀJ D_k`.
    pub fn dx_matrix(&self, tau: f64, x: &Seq) -> Result<DMatrix<f64>> {
        let n = self.zp.len();
        let r = self.rank();
        let mk: Vec<DMatrix<f64>> = self.jets.d.iter().map(|d| &self.tj * d).collect();
        let mut out = DMatrix::zeros(n, n);
        for &c in &self.s_idx {
            let mut e = Seq::zeros(n);
            e[c] = 1.0;
            out.set_column(c, &self.dx_apply(tau, x, &e)?);
        }
        for &c in &self.p_idx {
            let mut hp = Seq::zeros(n);
            hp[c] = 1.0;
            let dv = DMatrix::from_fn(n, r, |i, k| self.jets.d[k][(i, c)]);
            let dp = DMatrix::from_fn(n, r, |i, k| mk[k][(i, c)]);
            out.set_column(c, &self.finish_dx(tau, x, &hp, &dp, &dv)?);
        }
        Ok(out)
    }
}

/// Norm of a linear map estimated by power iteration on `AᵀA`.
pub fn power_norm(a: &DMatrix<f64>, iters: usize) -> f64 {
    if a.ncols() == 0 || a.amax() == 0.0 {
        return 0.0;
    }
    let ata = a.transpose() * a;
    let mut v = DVector::from_fn(a.ncols(), |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = &ata * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = w / nw;
        let conv = (nw - lam).abs() <= 1e-14 * nw;
        lam = nw;
        v = next;
        if conv {
            break;
        }
    }
    lam.sqrt()
}

/// Quadratic polynomial `c₀ + c·z + zᵀQz`, optionally multiplied by a linear factor `d·z`.
#[derive(Clone, Debug)]
pub struct QuadPoly {
    pub c0: f64,
    pub c: Seq,
    pub q: DMatrix<f64>,
    pub factor: Option<Seq>,
}

impl QuadPoly {
    pub fn random<R: rand::Rng>(n: usize, rng: &mut R, factor: Option<Seq>) -> Self {
        let mut g = || rng.gen_range(-1.0..1.0);
        let c0 = g();
        let c = Seq::from_fn(n, |_, _| g());
        let q = DMatrix::from_fn(n, n, |_, _| g());
        Self { c0, c, q: (&q + q.transpose()) * 0.5, factor }
    }

    fn base(&self, z: &Seq) -> f64 {
        self.c0 + self.c.dot(z) + (&self.q * z).dot(z)
    }

    pub fn value(&self, z: &Seq) -> f64 {
        let b = self.base(z);
        self.factor.as_ref().map_or(b, |d| d.dot(z) * b)
    }

    pub fn grad(&self, z: &Seq) -> Seq {
        let gb = &self.c + &self.q * z * 2.0;
        match &self.factor {
            None => gb,
            Some(d) => d * self.base(z) + gb * d.dot(z),
        }
    }
}

/// Random linear form in the `y` block.
fn y_factor<R: rand::Rng>(n: usize, y_idx: &[usize], rng: &mut R) -> Seq {
    let mut d = Seq::zeros(n);
    for &i in y_idx {
        d[i] = rng.gen_range(-1.0..1.0);
    }
    d
}

/// One-form `Σ_i a_i(z) ξ_i` with polynomial coefficients.
#[derive(Clone, Debug)]
pub struct PolyOneForm {
    pub comps: Vec<QuadPoly>,
}

impl PolyOneForm {
    /// Random coefficients; those along `x` carry a `y`-linear factor, so `ω(x, 0)[(v, 0)] = 0`.
    pub fn random_hypothesis<R: rand::Rng>(n: usize, y_idx: &[usize], rng: &mut R) -> Self {
        let comps = (0..n)
            .map(|i| {
                let f = (!y_idx.contains(&i)).then(|| y_factor(n, y_idx, rng));
                QuadPoly::random(n, rng, f)
            })
            .collect();
        Self { comps }
    }
}

impl FormField for PolyOneForm {
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        self.comps.iter().enumerate().map(|(i, a)| a.value(z) * vs[0][i]).sum()
    }
}

/// Two-form `Σ_{i<j} a_ij(z)(ξ_i η_j − ξ_j η_i)`.
#[derive(Clone, Debug)]
pub struct PolyTwoForm {
    pub comps: Vec<(usize, usize, QuadPoly)>,
}

impl PolyTwoForm {
    /// Random coefficients; `x`–`x` components carry a `y`-linear factor.
    pub fn random_hypothesis<R: rand::Rng>(n: usize, y_idx: &[usize], rng: &mut R) -> Self {
        let mut comps = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let xx = !y_idx.contains(&i) && !y_idx.contains(&j);
                let f = xx.then(|| y_factor(n, y_idx, rng));
                comps.push((i, j, QuadPoly::random(n, rng, f)));
            }
        }
        Self { comps }
    }
}

impl FormField for PolyTwoForm {
    fn degree(&self) -> usize {
        2
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        let (a, b) = (vs[0], vs[1]);
        self.comps.iter().map(|(i, j, p)| p.value(z) * (a[*i] * b[*j] - a[*j] * b[*i])).sum()
    }
}

/// Closed two-form `dλ[ξ, η] = λ'(z)ξ[η] − λ'(z)η[ξ]`, evaluated from exact gradients.
#[derive(Clone, Debug)]
pub struct ExactTwoForm {
    pub primitive: PolyOneForm,
}

impl FormField for ExactTwoForm {
    fn degree(&self) -> usize {
        2
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        let (a, b) = (vs[0], vs[1]);
        self.primitive
            .comps
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let g = p.grad(z);
                g.dot(a) * b[j] - g.dot(b) * a[j]
            })
            .sum()
    }
}

/// `d(ω_C) + (dω)_C − ω` at `z` on `r` vectors.
pub fn poincare_residual(w: &dyn FormField, y_idx: &[usize], z: &Seq, vs: &[&Seq]) -> Result<f64> {
    let cone = Cone::new(w, y_idx.to_vec());
    let dw = Exterior(w);
    let cone_dw = Cone::new(&dw, y_idx.to_vec());
    Ok(exterior_derivative(&cone, z, vs) + cone_dw.checked(z, vs, 1e-8)? - w.eval(z, vs))
}

/// `d(ω_C) − ω` for a closed `ω`.
pub fn poincare_closed_residual(w: &dyn FormField, y_idx: &[usize], z: &Seq, vs: &[&Seq]) -> f64 {
    let cone = Cone::new(w, y_idx.to_vec());
    exterior_derivative(&cone, z, vs) - w.eval(z, vs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng;
    use rand::Rng;

    fn setup(seed: u64) -> (Vec<usize>, Seq, Seq, Seq) {
        let mut r = rng(seed, 0);
        let z = Seq::from_fn(5, |_, _| r.gen_range(-0.5..0.5));
        let a = Seq::from_fn(5, |_, _| r.gen_range(-1.0..1.0));
        let b = Seq::from_fn(5, |_, _| r.gen_range(-1.0..1.0));
        (vec![3, 4], z, a, b)
    }

    #[test]
    fn poincare_identity_on_random_forms() {
        for seed in 0..4 {
            let (y, z, a, b) = setup(seed);
            let mut r = rng(seed, 1);
            let w1 = PolyOneForm::random_hypothesis(5, &y, &mut r);
            assert!(poincare_residual(&w1, &y, &z, &[&a]).unwrap().abs() < 1e-7);
            let w2 = PolyTwoForm::random_hypothesis(5, &y, &mut r);
            assert!(poincare_residual(&w2, &y, &z, &[&a, &b]).unwrap().abs() < 1e-7);
            let closed = ExactTwoForm { primitive: PolyOneForm::random_hypothesis(5, &y, &mut r) };
            assert!(exterior_derivative(&closed, &z, &[&a, &b, &(&a + &b * 0.3)]).abs() < 1e-7);
            assert!(poincare_closed_residual(&closed, &y, &z, &[&a, &b]).abs() < 1e-7);
        }
    }

    #[test]
    fn hypothesis_is_needed() {
        let (y, z, a, _) = setup(9);
        let mut r = rng(9, 1);
        let mut w = PolyOneForm::random_hypothesis(5, &y, &mut r);
        w.comps[0].factor = None;
        assert!(poincare_residual(&w, &y, &z, &[&a]).unwrap().abs() > 1e-4);
    }

    #[test]
    fn lambda_m_primitive() {
        let (_, z, a, b) = setup(3);
        let d = exterior_derivative(&LambdaM, &z, &[&a, &b]);
        assert!((d - BigLambdaM.eval(&z, &[&a, &b])).abs() < 1e-10);
        // Λ_M[ẑ, ẑ'] = ŷ·x̂' − x̂·ŷ' on a single pair
        let e = |v: [f64; 2]| Seq::from_vec(v.to_vec());
        let (p, q) = (e([0.3, -1.2]), e([2.0, 0.7]));
        let expect = p[1] * q[0] - p[0] * q[1];
        assert!((BigLambdaM.eval(&e([0.0, 0.0]), &[&p, &q]) - expect).abs() < 1e-15);
    }
}
