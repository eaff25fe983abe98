//! Truncated sequence and function spaces.
//!
//! A sequence-side state is stored as a real vector `[x_{-N..N}, y_{-N..N}]`,
//! a function-side state as a complex vector `[u_{-N..N}, v_{-N..N}]` of
//! Fourier coefficients. The two are related by [`fnls_forward`] /
//! [`fnls_inverse`], which also carry the Sobolev weights over unchanged.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real sequence-side vector `[x, y]`.
pub type Seq = DVector<f64>;
/// Complex vector, either a complexified sequence-side vector or a function-side `[u, v]`.
pub type CVec = DVector<Complex64>;

pub const C0: Complex64 = Complex64::new(0.0, 0.0);
pub const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Mode cutoff `N` together with the tagged set `S ⊆ [-N, N]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeLayout {
    cutoff: usize,
    tagged: Vec<i64>,
}

impl ModeLayout {
    pub fn new(cutoff: usize, tagged: &[i64]) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::Layout("cutoff must be positive".into()));
        }
        let mut s: Vec<i64> = tagged.to_vec();
        s.sort_unstable();
        s.dedup();
        if let Some(bad) = s.iter().find(|j| j.unsigned_abs() as usize > cutoff) {
            return Err(Error::Layout(format!("tagged mode {bad} outside [-{cutoff}, {cutoff}]")));
        }
        Ok(Self { cutoff, tagged: s })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }
    pub fn tagged(&self) -> &[i64] {
        &self.tagged
    }
    pub fn is_tagged(&self, n: i64) -> bool {
        self.tagged.binary_search(&n).is_ok()
    }
    pub fn n_modes(&self) -> usize {
        2 * self.cutoff + 1
    }
    /// Real dimension of the sequence space.
    pub fn dim(&self) -> usize {
        2 * self.n_modes()
    }
    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.cutoff as i64;
        -n..=n
    }
    pub fn slot(&self, n: i64) -> usize {
        (n + self.cutoff as i64) as usize
    }
    pub fn x_index(&self, n: i64) -> usize {
        self.slot(n)
    }
    pub fn y_index(&self, n: i64) -> usize {
        self.n_modes() + self.slot(n)
    }
    /// Mode carried by a coordinate index.
    pub fn mode_of(&self, idx: usize) -> i64 {
        (idx % self.n_modes()) as i64 - self.cutoff as i64
    }
    pub fn weight(n: i64) -> f64 {
        n.unsigned_abs().max(1) as f64
    }
    pub fn perp_modes(&self) -> Vec<i64> {
        self.modes().filter(|n| !self.is_tagged(*n)).collect()
    }
    /// Indices of `z_S = ((x_j)_{j∈S}, (y_j)_{j∈S})` inside the full vector.
    pub fn s_coords(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tagged.iter().map(|&j| self.x_index(j)).collect();
        v.extend(self.tagged.iter().map(|&j| self.y_index(j)));
        v
    }
    /// Indices of `z_⊥` inside the full vector, x block first.
    pub fn perp_coords(&self) -> Vec<usize> {
        let p = self.perp_modes();
        let mut v: Vec<usize> = p.iter().map(|&j| self.x_index(j)).collect();
        v.extend(p.iter().map(|&j| self.y_index(j)));
        v
    }
    /// Same layout with a different tagged set.
    pub fn with_tagged(&self, tagged: &[i64]) -> Result<Self> {
        Self::new(self.cutoff, tagged)
    }
}

/// Which part of a state a norm or projection refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Full,
    Tagged,
    Perp,
}

/// Serializable sequence-side state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncState {
    #[serde(rename = "N")]
    pub cutoff: usize,
    #[serde(rename = "S")]
    pub tagged: Vec<i64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TruncState {
    pub fn from_vec(layout: &ModeLayout, z: &Seq) -> Self {
        let m = layout.n_modes();
        Self {
            cutoff: layout.cutoff(),
            tagged: layout.tagged().to_vec(),
            x: z.rows(0, m).iter().copied().collect(),
            y: z.rows(m, m).iter().copied().collect(),
        }
    }
    pub fn layout(&self) -> Result<ModeLayout> {
        ModeLayout::new(self.cutoff, &self.tagged)
    }
    pub fn to_vec(&self) -> Result<Seq> {
        let m = 2 * self.cutoff + 1;
        if self.x.len() != m || self.y.len() != m {
            return Err(Error::Layout(format!("state arrays must have length {m}")));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::Layout("state entries must be finite".into()));
        }
        Ok(Seq::from_iterator(2 * m, self.x.iter().chain(&self.y).copied()))
    }
}

/// Serializable function-side state; complex entries as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    #[serde(rename = "N")]
    pub cutoff: usize,
    pub u: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
}

impl FieldPair {
    pub fn from_vec(layout: &ModeLayout, w: &CVec) -> Self {
        let m = layout.n_modes();
        let pack = |c: &Complex64| [c.re, c.im];
        Self {
            cutoff: layout.cutoff(),
            u: w.rows(0, m).iter().map(pack).collect(),
            v: w.rows(m, m).iter().map(pack).collect(),
        }
    }
    pub fn to_vec(&self) -> Result<CVec> {
        let m = 2 * self.cutoff + 1;
        if self.u.len() != m || self.v.len() != m {
            return Err(Error::Layout(format!("field arrays must have length {m}")));
        }
        Ok(CVec::from_iterator(
            2 * m,
            self.u.iter().chain(&self.v).map(|p| Complex64::new(p[0], p[1])),
        ))
    }
}

/// `(Σ ⟨n⟩^{2s}(x_n² + y_n²))^{1/2}` over the requested part.
pub fn sobolev_norm(layout: &ModeLayout, z: &Seq, s: u32, part: Part) -> f64 {
    let m = layout.n_modes();
    let mut acc = 0.0;
    for n in layout.modes() {
        let keep = match part {
            Part::Full => true,
            Part::Tagged => layout.is_tagged(n),
            Part::Perp => !layout.is_tagged(n),
        };
        if keep {
            let w = ModeLayout::weight(n).powi(2 * s as i32);
            let i = layout.slot(n);
            acc += w * (z[i] * z[i] + z[m + i] * z[m + i]);
        }
    }
    acc.sqrt()
}

/// Sobolev norm of a complex vector, sequence or function side (same weights).
pub fn sobolev_norm_c(layout: &ModeLayout, w: &CVec, s: u32) -> f64 {
    let m = layout.n_modes();
    let mut acc = 0.0;
    for n in layout.modes() {
        let wt = ModeLayout::weight(n).powi(2 * s as i32);
        let i = layout.slot(n);
        acc += wt * (w[i].norm_sqr() + w[m + i].norm_sqr());
    }
    acc.sqrt()
}

/// `Π_S z`: keeps the tagged block, zeroes the rest.
pub fn project_s(layout: &ModeLayout, z: &Seq) -> Seq {
    let mut out = Seq::zeros(z.len());
    for i in layout.s_coords() {
        out[i] = z[i];
    }
    out
}

/// `Π_⊥ z = z − Π_S z`.
pub fn project_perp(layout: &ModeLayout, z: &Seq) -> Seq {
    let mut out = z.clone();
    for i in layout.s_coords() {
        out[i] = 0.0;
    }
    out
}

/// Gathers the entries at `idx`.
pub fn gather(z: &Seq, idx: &[usize]) -> Seq {
    Seq::from_iterator(idx.len(), idx.iter().map(|&i| z[i]))
}

/// Writes `part` into the entries at `idx` of a zero vector of length `dim`.
pub fn scatter(dim: usize, idx: &[usize], part: &Seq) -> Seq {
    let mut out = Seq::zeros(dim);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = part[k];
    }
    out
}

/// `(z, z')_r = x·x' + y·y'`.
pub fn pairing_seq_r(z: &Seq, zp: &Seq) -> f64 {
    z.dot(zp)
}

/// `⟨w, w'⟩_r = Σ_n u_n u'_{-n} + v_n v'_{-n}` (no conjugation).
pub fn pairing_fun_r(layout: &ModeLayout, w: &CVec, wp: &CVec) -> Complex64 {
    let m = layout.n_modes();
    let mut acc = C0;
    for n in layout.modes() {
        let i = layout.slot(n);
        let j = layout.slot(-n);
        acc += w[i] * wp[j] + w[m + i] * wp[m + j];
    }
    acc
}

/// `J(x, y) = (-y, x)`.
pub fn apply_j(z: &Seq) -> Seq {
    let m = z.len() / 2;
    let mut out = Seq::zeros(z.len());
    for i in 0..m {
        out[i] = -z[m + i];
        out[m + i] = z[i];
    }
    out
}

/// `𝕁(u, v) = (-v, u)`.
pub fn apply_bbj(w: &CVec) -> CVec {
    let m = w.len() / 2;
    let mut out = CVec::zeros(w.len());
    for i in 0..m {
        out[i] = -w[m + i];
        out[m + i] = w[i];
    }
    out
}

/// Dense matrix of `J` on a space of real dimension `dim`.
pub fn j_matrix(dim: usize) -> DMatrix<f64> {
    let m = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..m {
        j[(i, m + i)] = -1.0;
        j[(m + i, i)] = 1.0;
    }
    j
}

/// Matrix `P` of the function-side pairing, `⟨a, b⟩_r = aᵀ P b` (mode reflection in each block).
pub fn pairing_matrix(layout: &ModeLayout) -> DMatrix<Complex64> {
    let m = layout.n_modes();
    let mut p = DMatrix::from_element(2 * m, 2 * m, C0);
    for n in layout.modes() {
        let (i, j) = (layout.slot(n), layout.slot(-n));
        p[(i, j)] = Complex64::new(1.0, 0.0);
        p[(m + i, m + j)] = Complex64::new(1.0, 0.0);
    }
    p
}

/// `x_n = −(u_{−n}+v_n)/√2`, `y_n = −i(u_{−n}−v_n)/√2`, complex-valued in general.
pub fn fnls_forward_c(layout: &ModeLayout, w: &CVec) -> CVec {
    let m = layout.n_modes();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut z = CVec::zeros(2 * m);
    for n in layout.modes() {
        let (i, j) = (layout.slot(n), layout.slot(-n));
        z[i] = -(w[j] + w[m + i]) * r;
        z[m + i] = -CI * (w[j] - w[m + i]) * r;
    }
    z
}

/// Real-subspace version of [`fnls_forward_c`]; fails if the image has an
/// imaginary part above `1e-12` relative.
pub fn fnls_forward(layout: &ModeLayout, w: &CVec) -> Result<Seq> {
    let z = fnls_forward_c(layout, w);
    let scale = 1.0 + z.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let im = z.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if im > 1e-12 * scale {
        return Err(Error::NotReal(im));
    }
    Ok(z.map(|c| c.re))
}

/// `u_n = −(x_{−n} − i y_{−n})/√2`, `v_n = −(x_n + i y_n)/√2`.
pub fn fnls_inverse_c(layout: &ModeLayout, z: &CVec) -> CVec {
    let m = layout.n_modes();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut w = CVec::zeros(2 * m);
    for n in layout.modes() {
        let (i, j) = (layout.slot(n), layout.slot(-n));
        w[i] = -(z[j] - CI * z[m + j]) * r;
        w[m + i] = -(z[i] + CI * z[m + i]) * r;
    }
    w
}

pub fn fnls_inverse(layout: &ModeLayout, z: &Seq) -> CVec {
    fnls_inverse_c(layout, &z.map(|x| Complex64::new(x, 0.0)))
}

/// Dense matrix of `F_nls^{-1}` (function side × sequence side).
pub fn fnls_inverse_matrix(layout: &ModeLayout) -> DMatrix<Complex64> {
    let d = layout.dim();
    let mut out = DMatrix::from_element(d, d, C0);
    for k in 0..d {
        let mut e = CVec::zeros(d);
        e[k] = Complex64::new(1.0, 0.0);
        out.set_column(k, &fnls_inverse_c(layout, &e));
    }
    out
}

/// Dense matrix of `F_nls` (sequence side × function side).
pub fn fnls_forward_matrix(layout: &ModeLayout) -> DMatrix<Complex64> {
    let d = layout.dim();
    let mut out = DMatrix::from_element(d, d, C0);
    for k in 0..d {
        let mut e = CVec::zeros(d);
        e[k] = Complex64::new(1.0, 0.0);
        out.set_column(k, &fnls_forward_c(layout, &e));
    }
    out
}

/// `w` lies on the real subspace, `v_n = conj(u_{−n})`, up to `tol`.
pub fn is_real_subspace(layout: &ModeLayout, w: &CVec, tol: f64) -> bool {
    let m = layout.n_modes();
    layout
        .modes()
        .all(|n| (w[m + layout.slot(n)] - w[layout.slot(-n)].conj()).norm() <= tol)
}

/// Actions `I_n = (x_n² + y_n²)/2`, indexed by slot.
pub fn actions_of(layout: &ModeLayout, z: &Seq) -> Vec<f64> {
    let m = layout.n_modes();
    (0..m).map(|i| 0.5 * (z[i] * z[i] + z[m + i] * z[m + i])).collect()
}

pub fn to_complex(z: &Seq) -> CVec {
    z.map(|x| Complex64::new(x, 0.0))
}

pub fn to_complex_mat(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Largest singular value; the operator norm used for all matrix residuals.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn op_norm_c(a: &DMatrix<Complex64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lay() -> ModeLayout {
        ModeLayout::new(4, &[1, -2]).unwrap()
    }

    #[test]
    fn layout_rejects_out_of_range_modes() {
        assert!(ModeLayout::new(3, &[4]).is_err());
        assert!(ModeLayout::new(0, &[]).is_err());
        assert_eq!(lay().tagged(), &[-2, 1]);
    }

    #[test]
    fn single_mode_norm() {
        let l = lay();
        let mut z = Seq::zeros(l.dim());
        z[l.x_index(2)] = 1.0;
        assert_eq!(sobolev_norm(&l, &z, 1, Part::Full), 2.0);
        assert_eq!(sobolev_norm(&l, &Seq::zeros(l.dim()), 3, Part::Full), 0.0);
    }

    #[test]
    fn j_maps_first_basis_vector_to_second() {
        let l = lay();
        let mut e1 = Seq::zeros(l.dim());
        e1[l.x_index(3)] = 1.0;
        let mut e2 = Seq::zeros(l.dim());
        e2[l.y_index(3)] = 1.0;
        assert_eq!(apply_j(&e1), e2);
    }

    #[test]
    fn fnls_of_first_fourier_mode() {
        let l = lay();
        let m = l.n_modes();
        let mut w = CVec::zeros(l.dim());
        w[l.slot(1)] = Complex64::new(1.0, 0.0);
        w[m + l.slot(-1)] = Complex64::new(1.0, 0.0);
        let z = fnls_forward(&l, &w).unwrap();
        for i in 0..l.dim() {
            let expect = if i == l.x_index(-1) { -2f64.sqrt() } else { 0.0 };
            assert!((z[i] - expect).abs() < 1e-15, "index {i}");
        }
    }

    #[test]
    fn pairing_examples() {
        let l = lay();
        let mut w = CVec::zeros(l.dim());
        w[l.slot(1)] = Complex64::new(1.0, 0.0);
        assert_eq!(pairing_fun_r(&l, &w, &w), C0);
        let mut c = CVec::zeros(l.dim());
        c[l.slot(0)] = Complex64::new(1.0, 0.0);
        assert_eq!(pairing_fun_r(&l, &c, &c), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn actions_example() {
        let l = lay();
        let mut z = Seq::zeros(l.dim());
        z[l.x_index(0)] = 3.0;
        z[l.y_index(0)] = 4.0;
        assert_eq!(actions_of(&l, &z)[l.slot(0)], 12.5);
    }
}
