//! Exactly symplectic stand-ins for the Birkhoff map.
//!
//! Every backend is `Ψ = F_nls^{-1} ∘ Φ` with `Φ` a sequence-side symplectic
//! map. The toy backend uses an action-dependent rotation `Φ_n(z) = R(θ_n(I)) z_n`
//! (closed form, exact inverse) or, for a general generator, the time-one map
//! of its flow. The perturbative backend is the time-one map of the quartic
//! Birkhoff generator of truncated dNLS.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, PolyFlow};
use crate::phase_space::{
    actions_of, fnls_forward, fnls_forward_matrix, fnls_inverse, fnls_inverse_matrix, sobolev_norm,
    to_complex_mat, CVec, ModeLayout, Part, Seq, C0,
};
use crate::poly::{canonical, MonoKey, MonomialSpec, ZetaPoly};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Toy,
    Perturbative,
}

/// Action-only Hamiltonian `K(I) = Σ ω̄_n I_n + ½ Σ k_{nm} I_n I_m`, indexed by slot.
#[derive(Clone, Debug)]
pub struct ActionHam {
    pub base: Vec<f64>,
    pub k: DMatrix<f64>,
}

impl ActionHam {
    pub fn value(&self, i: &[f64]) -> f64 {
        let mut v = 0.0;
        for a in 0..i.len() {
            v += self.base[a] * i[a];
            for b in 0..i.len() {
                v += 0.5 * self.k[(a, b)] * i[a] * i[b];
            }
        }
        v
    }

    pub fn freqs(&self, i: &[f64]) -> Vec<f64> {
        (0..i.len())
            .map(|a| self.base[a] + (0..i.len()).map(|b| self.k[(a, b)] * i[b]).sum::<f64>())
            .collect()
    }
}

/// Frequencies split as `4π²n² + correction`.
#[derive(Clone, Debug, Serialize)]
pub struct FreqTable {
    pub omega: Vec<f64>,
    pub base: Vec<f64>,
    pub correction: Vec<f64>,
}

pub fn dnls_base_freqs(layout: &ModeLayout) -> Vec<f64> {
    layout.modes().map(|n| 4.0 * PI * PI * (n * n) as f64).collect()
}

/// Derivatives of `Φ` at a base point: `T = dΦ`, `D_l = d²Φ[e_l, ·]` and
/// `G_{lk} = d³Φ[e_l, e_k, ·]` for the listed coordinates (row-major `g[l * r + k]`).
#[derive(Clone, Debug)]
pub struct Jets {
    pub phi: Seq,
    pub t: DMatrix<f64>,
    pub d: Vec<DMatrix<f64>>,
    pub g: Vec<DMatrix<f64>>,
}

impl Jets {
    pub fn rank(&self) -> usize {
        self.d.len()
    }
    pub fn g(&self, l: usize, k: usize) -> &DMatrix<f64> {
        &self.g[l * self.d.len() + k]
    }

    /// Second-order model around the anchor, shifted by `delta` in the listed coordinates.
    /// `T(δ) = T + Σδ_l D_l + ½Σδ_lδ_k G_lk`, `D_k(δ) = D_k + Σδ_l G_lk`, and the
    /// cubic Taylor polynomial of `Φ`, so that the model is self-consistent.
    pub fn shifted(&self, coords: &[usize], delta: &Seq) -> Jets {
        let r = self.rank();
        let n = self.t.nrows();
        let mut dfull = Seq::zeros(n);
        for (l, &c) in coords.iter().enumerate() {
            dfull[c] = delta[l];
        }
        let mut t = self.t.clone();
        let mut d = self.d.clone();
        let mut phi = &self.phi + &self.t * &dfull;
        for l in 0..r {
            if delta[l] == 0.0 {
                continue;
            }
            t += &self.d[l] * delta[l];
            phi += &self.d[l] * &dfull * (0.5 * delta[l]);
            for k in 0..r {
                let gk = self.g(l, k);
                t += gk * (0.5 * delta[l] * delta[k]);
                d[k] += gk * delta[l];
                phi += gk * &dfull * (delta[l] * delta[k] / 6.0);
            }
        }
        Jets { phi, t, d, g: self.g.clone() }
    }
}

/// Closed-form twist `Φ_n(z) = R(θ_n(I)) z_n`, `θ_n = Σ_m g_{nm} I_m`.
#[derive(Clone, Debug)]
pub struct Twist {
    pub g: DMatrix<f64>,
}

type P2 = [f64; 2];

fn rot(th: f64, p: P2) -> P2 {
    let (s, c) = th.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}
fn jr(p: P2) -> P2 {
    [-p[1], p[0]]
}
fn axpy(acc: &mut P2, a: f64, p: P2) {
    acc[0] += a * p[0];
    acc[1] += a * p[1];
}

impl Twist {
    fn pair(z: &Seq, m: usize, i: usize) -> P2 {
        [z[i], z[m + i]]
    }
    fn theta(&self, z: &Seq) -> Vec<f64> {
        let m = z.len() / 2;
        let i: Vec<f64> = (0..m).map(|k| 0.5 * (z[k] * z[k] + z[m + k] * z[m + k])).collect();
        (0..m).map(|a| (0..m).map(|b| self.g[(a, b)] * i[b]).sum()).collect()
    }
    /// `Σ_m g_{nm} (a_m · b_m)`
    fn bil(&self, a: &Seq, b: &Seq) -> Vec<f64> {
        let m = a.len() / 2;
        let dots: Vec<f64> = (0..m).map(|k| a[k] * b[k] + a[m + k] * b[m + k]).collect();
        (0..m).map(|n| (0..m).map(|k| self.g[(n, k)] * dots[k]).sum()).collect()
    }

    pub fn eval(&self, z: &Seq) -> Seq {
        let m = z.len() / 2;
        let th = self.theta(z);
        let mut out = Seq::zeros(z.len());
        for i in 0..m {
            let r = rot(th[i], Self::pair(z, m, i));
            out[i] = r[0];
            out[m + i] = r[1];
        }
        out
    }

    pub fn inverse(&self, w: &Seq) -> Seq {
        let m = w.len() / 2;
        let th = self.theta(w);
        let mut out = Seq::zeros(w.len());
        for i in 0..m {
            let r = rot(-th[i], Self::pair(w, m, i));
            out[i] = r[0];
            out[m + i] = r[1];
        }
        out
    }

    pub fn d1(&self, z: &Seq, a: &Seq) -> Seq {
        let m = z.len() / 2;
        let th = self.theta(z);
        let ta = self.bil(z, a);
        let mut out = Seq::zeros(z.len());
        for i in 0..m {
            let mut acc = rot(th[i], Self::pair(a, m, i));
            axpy(&mut acc, ta[i], jr(rot(th[i], Self::pair(z, m, i))));
            out[i] = acc[0];
            out[m + i] = acc[1];
        }
        out
    }

    pub fn d2(&self, z: &Seq, a: &Seq, b: &Seq) -> Seq {
        let m = z.len() / 2;
        let th = self.theta(z);
        let (ta, tb, tab) = (self.bil(z, a), self.bil(z, b), self.bil(a, b));
        let mut out = Seq::zeros(z.len());
        for i in 0..m {
            let (ra, rb, rz) = (
                rot(th[i], Self::pair(a, m, i)),
                rot(th[i], Self::pair(b, m, i)),
                rot(th[i], Self::pair(z, m, i)),
            );
            let mut acc = [0.0; 2];
            axpy(&mut acc, tb[i], jr(ra));
            axpy(&mut acc, ta[i], jr(rb));
            axpy(&mut acc, tab[i], jr(rz));
            axpy(&mut acc, -ta[i] * tb[i], rz);
            out[i] = acc[0];
            out[m + i] = acc[1];
        }
        out
    }

    /// Jacobian, `d²Φ[a, ·]` (when `a` is given) or `d³Φ[a, b, ·]` (when both are),
    /// built column by column with the basis-vector contractions done in `O(m)`.
    pub fn matrix(&self, z: &Seq, a: Option<&Seq>, b: Option<&Seq>) -> DMatrix<f64> {
        let n = z.len();
        let m = n / 2;
        let th = self.theta(z);
        let order = 1 + usize::from(a.is_some()) + usize::from(b.is_some());
        let zero = Seq::zeros(n);
        let a = a.unwrap_or(&zero);
        let b = b.unwrap_or(&zero);
        let (ta, tb, tab) = (self.bil(z, a), self.bil(z, b), self.bil(a, b));
        let rz: Vec<P2> = (0..m).map(|i| rot(th[i], Self::pair(z, m, i))).collect();
        let ra: Vec<P2> = (0..m).map(|i| rot(th[i], Self::pair(a, m, i))).collect();
        let rb: Vec<P2> = (0..m).map(|i| rot(th[i], Self::pair(b, m, i))).collect();
        let mut out = DMatrix::zeros(n, n);
        for c in 0..n {
            let mu = c % m;
            let mut ec = [0.0; 2];
            ec[c / m] = 1.0;
            let rc = rot(th[mu], ec);
            for i in 0..m {
                let g = self.g[(i, mu)];
                let tc = g * z[c];
                let mut acc = [0.0; 2];
                match order {
                    1 => {
                        axpy(&mut acc, tc, jr(rz[i]));
                        if i == mu {
                            axpy(&mut acc, 1.0, rc);
                        }
                    }
                    2 => {
                        let tac = g * a[c];
                        axpy(&mut acc, tc, jr(ra[i]));
                        axpy(&mut acc, tac, jr(rz[i]));
                        axpy(&mut acc, -ta[i] * tc, rz[i]);
                        if i == mu {
                            axpy(&mut acc, ta[i], jr(rc));
                        }
                    }
                    _ => {
                        let (tac, tbc) = (g * a[c], g * b[c]);
                        axpy(&mut acc, tbc, jr(ra[i]));
                        axpy(&mut acc, tac, jr(rb[i]));
                        axpy(&mut acc, -tb[i] * tc, ra[i]);
                        axpy(&mut acc, -ta[i] * tc, rb[i]);
                        axpy(&mut acc, -(tab[i] * tc + tac * tb[i] + tbc * ta[i]), rz[i]);
                        axpy(&mut acc, -ta[i] * tb[i] * tc, jr(rz[i]));
                        if i == mu {
                            axpy(&mut acc, tab[i], jr(rc));
                            axpy(&mut acc, -ta[i] * tb[i], rc);
                        }
                    }
                }
                out[(i, c)] = acc[0];
                out[(m + i, c)] = acc[1];
            }
        }
        out
    }

    pub fn d3(&self, z: &Seq, a: &Seq, b: &Seq, c: &Seq) -> Seq {
        let m = z.len() / 2;
        let th = self.theta(z);
        let (ta, tb, tc) = (self.bil(z, a), self.bil(z, b), self.bil(z, c));
        let (tab, tac, tbc) = (self.bil(a, b), self.bil(a, c), self.bil(b, c));
        let mut out = Seq::zeros(z.len());
        for i in 0..m {
            let ra = rot(th[i], Self::pair(a, m, i));
            let rb = rot(th[i], Self::pair(b, m, i));
            let rc = rot(th[i], Self::pair(c, m, i));
            let rz = rot(th[i], Self::pair(z, m, i));
            let mut acc = [0.0; 2];
            axpy(&mut acc, tbc[i], jr(ra));
            axpy(&mut acc, tac[i], jr(rb));
            axpy(&mut acc, tab[i], jr(rc));
            axpy(&mut acc, -tb[i] * tc[i], ra);
            axpy(&mut acc, -ta[i] * tc[i], rb);
            axpy(&mut acc, -ta[i] * tb[i], rc);
            axpy(&mut acc, -(tab[i] * tc[i] + tac[i] * tb[i] + tbc[i] * ta[i]), rz);
            axpy(&mut acc, -ta[i] * tb[i] * tc[i], jr(rz));
            out[i] = acc[0];
            out[m + i] = acc[1];
        }
        out
    }
}

fn basis(n: usize, k: usize) -> Seq {
    let mut e = Seq::zeros(n);
    e[k] = 1.0;
    e
}

/// The sequence-side map `Φ`.
#[derive(Clone, Debug)]
pub enum InnerMap {
    Twist(Twist),
    Flow(PolyFlow),
}

impl InnerMap {
    pub fn eval(&self, z: &Seq) -> Result<Seq> {
        match self {
            InnerMap::Twist(t) => Ok(t.eval(z)),
            InnerMap::Flow(f) => f.eval(z, 1.0),
        }
    }
    pub fn jac(&self, z: &Seq) -> Result<DMatrix<f64>> {
        match self {
            InnerMap::Twist(t) => Ok(t.matrix(z, None, None)),
            InnerMap::Flow(f) => Ok(f.propagate(z, 1.0, true, &[], &[])?.jac.unwrap()),
        }
    }
    /// `d²Φ(z)[a, ·]`
    pub fn d2(&self, z: &Seq, a: &Seq) -> Result<DMatrix<f64>> {
        match self {
            InnerMap::Twist(t) => Ok(t.matrix(z, Some(a), None)),
            InnerMap::Flow(f) => Ok(f.propagate(z, 1.0, true, std::slice::from_ref(a), &[])?.second.remove(0)),
        }
    }
    /// `d³Φ(z)[a, b, ·]`
    pub fn d3(&self, z: &Seq, a: &Seq, b: &Seq) -> Result<DMatrix<f64>> {
        match self {
            InnerMap::Twist(t) => Ok(t.matrix(z, Some(a), Some(b))),
            InnerMap::Flow(f) => Ok(f
                .propagate(z, 1.0, true, &[a.clone(), b.clone()], &[(0, 1)])?
                .third
                .remove(0)),
        }
    }
    /// Value and derivatives along the listed coordinates; third derivatives only if `third`.
    pub fn jets(&self, z: &Seq, coords: &[usize], third: bool) -> Result<Jets> {
        let n = z.len();
        let r = coords.len();
        let rr = if third { r } else { 0 };
        match self {
            InnerMap::Twist(t) => {
                let es: Vec<Seq> = coords.iter().map(|&c| basis(n, c)).collect();
                let d: Vec<DMatrix<f64>> = es.iter().map(|a| t.matrix(z, Some(a), None)).collect();
                let mut g = vec![DMatrix::zeros(n, n); rr * rr];
                for l in 0..rr {
                    for k in l..rr {
                        let gl = t.matrix(z, Some(&es[l]), Some(&es[k]));
                        g[k * r + l] = gl.clone();
                        g[l * r + k] = gl;
                    }
                }
                Ok(Jets { phi: t.eval(z), t: t.matrix(z, None, None), d, g })
            }
            InnerMap::Flow(f) => {
                let es: Vec<Seq> = coords.iter().map(|&c| basis(n, c)).collect();
                let mut pairs = Vec::new();
                for l in 0..rr {
                    for k in l..rr {
                        pairs.push((l, k));
                    }
                }
                let out = f.propagate(z, 1.0, true, &es, &pairs)?;
                let mut g = vec![DMatrix::zeros(n, n); rr * rr];
                for (q, &(l, k)) in pairs.iter().enumerate() {
                    g[l * r + k] = out.third[q].clone();
                    g[k * r + l] = out.third[q].clone();
                }
                Ok(Jets { phi: out.value, t: out.jac.unwrap(), d: out.second, g })
            }
        }
    }
    /// Starting guess (toy: exact) for `Φ^{-1}`.
    pub fn inverse_guess(&self, w: &Seq) -> Result<Seq> {
        match self {
            InnerMap::Twist(t) => Ok(t.inverse(w)),
            InnerMap::Flow(f) => f.eval(w, -1.0),
        }
    }
}

/// Backend configuration block.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Toy: coupling `c` of the default twist `g_{nm} = c/(⟨n⟩⟨m⟩)`.
    pub twist: f64,
    /// Toy: explicit generator monomials; overrides `twist` when nonempty.
    pub generator: Vec<MonomialSpec>,
    /// Toy: base frequencies by mode; default `4π²n²`.
    pub base_freqs: Option<Vec<f64>>,
    /// Toy: uniform quadratic coupling `k_{nm} = kappa`.
    pub kappa: f64,
    pub radius: Option<f64>,
    pub flow: FlowConfig,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            kind: BackendKind::Toy,
            twist: 1.0,
            generator: Vec::new(),
            base_freqs: None,
            kappa: 1.0,
            radius: None,
            flow: FlowConfig::default(),
        }
    }
}

impl BackendSpec {
    pub fn toy() -> Self {
        Self::default()
    }
    pub fn perturbative() -> Self {
        Self { kind: BackendKind::Perturbative, ..Self::default() }
    }
    pub fn build(&self, layout: &ModeLayout) -> Result<Backend> {
        self.flow.validate()?;
        let mut b = match self.kind {
            BackendKind::Toy => {
                let m = layout.n_modes();
                let base = match &self.base_freqs {
                    Some(v) if v.len() == m => v.clone(),
                    Some(v) => {
                        return Err(Error::Config(format!(
                            "base_freqs has {} entries, expected {m}",
                            v.len()
                        )))
                    }
                    None => dnls_base_freqs(layout),
                };
                let k = DMatrix::from_element(m, m, self.kappa);
                let gen = if self.generator.is_empty() {
                    Generator::Twist(default_twist(layout, self.twist))
                } else {
                    Generator::Monomials(self.generator.clone())
                };
                make_toy(layout, ActionHam { base, k }, gen, self.flow)?
            }
            BackendKind::Perturbative => make_perturbative(layout, self.flow)?,
        };
        if let Some(r) = self.radius {
            b.radius = r;
        }
        Ok(b)
    }
}

/// `g_{nm} = c / (⟨n⟩⟨m⟩)`, which makes `Φ − id` one-smoothing.
pub fn default_twist(layout: &ModeLayout, c: f64) -> DMatrix<f64> {
    let m = layout.n_modes();
    let modes: Vec<i64> = layout.modes().collect();
    DMatrix::from_fn(m, m, |a, b| c / (ModeLayout::weight(modes[a]) * ModeLayout::weight(modes[b])))
}

pub enum Generator {
    Twist(DMatrix<f64>),
    Monomials(Vec<MonomialSpec>),
}

#[derive(Clone, Debug)]
pub struct Backend {
    pub layout: ModeLayout,
    pub kind: BackendKind,
    pub map: InnerMap,
    pub actions: ActionHam,
    pub radius: f64,
    /// Perturbative only: the quartic part of the truncated dNLS Hamiltonian in `ζ`.
    pub quartic: Option<ZetaPoly>,
    /// Perturbative only: the resonant part of `quartic`.
    pub resonant: Option<ZetaPoly>,
}

/// Twist matrix from monomials that are all of the form `c I_a I_b`; `None` otherwise.
fn action_only(layout: &ModeLayout, specs: &[MonomialSpec]) -> Option<DMatrix<f64>> {
    let m = layout.n_modes();
    let mut g = DMatrix::zeros(m, m);
    for s in specs {
        let (a, b) = canonical(&s.modes, &s.bar_modes);
        if a.len() != 2 || a != b || s.coef[1] != 0.0 {
            return None;
        }
        let (p, q) = (layout.slot(a[0]), layout.slot(a[1]));
        if p == q {
            g[(p, p)] += 2.0 * s.coef[0];
        } else {
            g[(p, q)] += s.coef[0];
            g[(q, p)] += s.coef[0];
        }
    }
    Some(g)
}

pub fn make_toy(layout: &ModeLayout, actions: ActionHam, gen: Generator, flow: FlowConfig) -> Result<Backend> {
    let map = match gen {
        Generator::Twist(g) => InnerMap::Twist(Twist { g }),
        Generator::Monomials(specs) => {
            let poly = ZetaPoly::from_specs(layout, &specs)?;
            if poly.terms.is_empty() {
                InnerMap::Twist(Twist { g: DMatrix::zeros(layout.n_modes(), layout.n_modes()) })
            } else {
                if poly.min_degree() < 3 || poly.max_degree() > 4 {
                    return Err(Error::Generator(
                        "monomial degrees must lie in [3, 4] so that dΨ(0) = F_nls^{-1}".into(),
                    ));
                }
                if poly.reality_defect() > 1e-12 {
                    return Err(Error::Generator("generator is not real-valued".into()));
                }
                match action_only(layout, &specs) {
                    Some(g) => InnerMap::Twist(Twist { g }),
                    None => InnerMap::Flow(PolyFlow::new(poly, flow)),
                }
            }
        }
    };
    Ok(Backend {
        layout: layout.clone(),
        kind: BackendKind::Toy,
        map,
        actions,
        radius: 0.5,
        quartic: None,
        resonant: None,
    })
}

/// Ordered quadruples `a + b = c + d` in `[-N, N]`, collected by canonical key:
/// `∫ u²v² dx = Σ ζ_a ζ_b ζ̄_c ζ̄_d` on the truncated space.
pub fn dnls_quartic_terms(layout: &ModeLayout) -> BTreeMap<MonoKey, Complex64> {
    let n = layout.cutoff() as i64;
    let mut map = BTreeMap::new();
    for a in -n..=n {
        for b in -n..=n {
            for c in -n..=n {
                let d = a + b - c;
                if d.abs() > n {
                    continue;
                }
                *map.entry(canonical(&[a, b], &[c, d])).or_insert(C0) += Complex64::new(1.0, 0.0);
            }
        }
    }
    map
}

/// `{a, b} = {c, d}` as multisets.
pub fn is_resonant_key(key: &MonoKey) -> bool {
    key.0 == key.1
}

/// `Σ ω_n (α_n − β_n)` for the base frequencies `4π²n²`.
pub fn small_divisor(key: &MonoKey) -> f64 {
    let w = |n: i64| 4.0 * PI * PI * (n * n) as f64;
    key.0.iter().map(|&n| w(n)).sum::<f64>() - key.1.iter().map(|&n| w(n)).sum::<f64>()
}

/// Solves `{H₂, F} + H₄ = N₄` monomial-wise: `F = i h / Δ` on non-resonant terms.
pub fn homological_generator(
    quartic: &BTreeMap<MonoKey, Complex64>,
) -> Result<(BTreeMap<MonoKey, Complex64>, BTreeMap<MonoKey, Complex64>)> {
    let mut gen = BTreeMap::new();
    let mut res = BTreeMap::new();
    for (key, h) in quartic {
        if is_resonant_key(key) {
            res.insert(key.clone(), *h);
            continue;
        }
        let delta = small_divisor(key);
        if delta.abs() < 1e-9 {
            return Err(Error::Resonance(format!("{key:?}")));
        }
        gen.insert(key.clone(), Complex64::new(0.0, 1.0) * h / delta);
    }
    Ok((gen, res))
}

/// Largest coefficient of `{H₂, F} + H₄ − N₄`, with `{H₂, ζ^α ζ̄^β} = iΔ ζ^α ζ̄^β`.
pub fn homological_residual(
    quartic: &BTreeMap<MonoKey, Complex64>,
    gen: &BTreeMap<MonoKey, Complex64>,
    res: &BTreeMap<MonoKey, Complex64>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (key, h) in quartic {
        let f = gen.get(key).copied().unwrap_or(C0);
        let n = res.get(key).copied().unwrap_or(C0);
        let bracket = Complex64::new(0.0, small_divisor(key)) * f;
        worst = worst.max((bracket + h - n).norm());
    }
    worst
}

pub fn make_perturbative(layout: &ModeLayout, flow: FlowConfig) -> Result<Backend> {
    let quartic = dnls_quartic_terms(layout);
    let (gen, res) = homological_generator(&quartic)?;
    // N₄ as an action polynomial: a resonant term ζ_aζ_bζ̄_aζ̄_b equals I_a I_b.
    let m = layout.n_modes();
    let mut k = DMatrix::zeros(m, m);
    for ((a, _), c) in &res {
        let (p, q) = (layout.slot(a[0]), layout.slot(a[1]));
        if p == q {
            k[(p, p)] += 2.0 * c.re;
        } else {
            k[(p, q)] += c.re;
            k[(q, p)] += c.re;
        }
    }
    Ok(Backend {
        layout: layout.clone(),
        kind: BackendKind::Perturbative,
        map: InnerMap::Flow(PolyFlow::new(ZetaPoly::from_map(layout, &gen), flow)),
        actions: ActionHam { base: dnls_base_freqs(layout), k },
        radius: 0.2,
        quartic: Some(ZetaPoly::from_map(layout, &quartic)),
        resonant: Some(ZetaPoly::from_map(layout, &res)),
    })
}

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX: usize = 50;

impl Backend {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn guard(&self, z: &Seq) -> Result<()> {
        let r = sobolev_norm(&self.layout, z, 0, Part::Full);
        if r > self.radius {
            return Err(Error::Radius { what: "‖z‖₀", value: r, limit: self.radius });
        }
        Ok(())
    }

    pub fn phi(&self, z: &Seq) -> Result<Seq> {
        self.guard(z)?;
        self.map.eval(z)
    }
    pub fn phi_jac(&self, z: &Seq) -> Result<DMatrix<f64>> {
        self.guard(z)?;
        self.map.jac(z)
    }
    pub fn phi_d2(&self, z: &Seq, a: &Seq) -> Result<DMatrix<f64>> {
        self.guard(z)?;
        self.map.d2(z, a)
    }
    pub fn phi_d3(&self, z: &Seq, a: &Seq, b: &Seq) -> Result<DMatrix<f64>> {
        self.guard(z)?;
        self.map.d3(z, a, b)
    }
    pub fn jets(&self, z: &Seq, coords: &[usize], third: bool) -> Result<Jets> {
        self.guard(z)?;
        self.map.jets(z, coords, third)
    }

    /// Solves `Φ(z) = target` by damped Newton from the map's inverse guess.
    pub fn phi_inverse(&self, target: &Seq) -> Result<Seq> {
        let mut z = self.map.inverse_guess(target)?;
        let mut res = self.map.eval(&z)? - target;
        let mut rn = res.amax();
        for _ in 0..NEWTON_MAX {
            if rn <= NEWTON_TOL * (1.0 + target.amax()) {
                self.guard(&z)?;
                return Ok(z);
            }
            let t = self.map.jac(&z)?;
            let step = t.lu().solve(&res).ok_or(Error::Singular)?;
            let mut lam = 1.0;
            loop {
                let cand = &z - &step * lam;
                let r2 = self.map.eval(&cand)? - target;
                if r2.amax() < rn || lam < 1e-3 {
                    z = cand;
                    res = r2;
                    rn = res.amax();
                    break;
                }
                lam *= 0.5;
            }
        }
        if rn <= NEWTON_TOL * (1.0 + target.amax()) {
            return Ok(z);
        }
        Err(Error::Newton(rn))
    }

    /// `Ψ(z)`.
    pub fn bk_eval(&self, z: &Seq) -> Result<CVec> {
        Ok(fnls_inverse(&self.layout, &self.phi(z)?))
    }
    /// `dΨ(z)` as a function-side × sequence-side matrix.
    pub fn bk_diff(&self, z: &Seq) -> Result<DMatrix<Complex64>> {
        Ok(fnls_inverse_matrix(&self.layout) * to_complex_mat(&self.phi_jac(z)?))
    }
    /// `d²Ψ(z)[dir, ·]`.
    pub fn bk_diff2(&self, z: &Seq, dir: &Seq) -> Result<DMatrix<Complex64>> {
        Ok(fnls_inverse_matrix(&self.layout) * to_complex_mat(&self.phi_d2(z, dir)?))
    }
    /// `dΨ(z)^{-1}` as a sequence-side × function-side matrix.
    pub fn bk_inv_diff(&self, z: &Seq) -> Result<DMatrix<Complex64>> {
        let t = self.phi_jac(z)?;
        let tinv = t.try_inverse().ok_or(Error::Singular)?;
        Ok(to_complex_mat(&tinv) * fnls_forward_matrix(&self.layout))
    }
    /// `B^{nls}(z) = Ψ(z) − F_nls^{-1} z`.
    pub fn bk_b_nls(&self, z: &Seq) -> Result<CVec> {
        Ok(fnls_inverse(&self.layout, &(self.phi(z)? - z)))
    }
    /// `Φ^{nls}(w) = Ψ^{-1}(w)` by Newton inversion.
    pub fn bk_phi_nls(&self, w: &CVec) -> Result<Seq> {
        self.phi_inverse(&fnls_forward(&self.layout, w)?)
    }
    /// `A^{nls}(w) = Φ^{nls}(w) − F_nls w`.
    pub fn bk_a_nls(&self, w: &CVec) -> Result<Seq> {
        let target = fnls_forward(&self.layout, w)?;
        Ok(self.phi_inverse(&target)? - target)
    }
    pub fn bk_h(&self, i: &[f64]) -> f64 {
        self.actions.value(i)
    }
    pub fn bk_freqs(&self, i: &[f64]) -> FreqTable {
        let omega = self.actions.freqs(i);
        let base = dnls_base_freqs(&self.layout);
        let correction = omega.iter().zip(&base).map(|(a, b)| a - b).collect();
        FreqTable { omega, base, correction }
    }
    /// `H^{nls}(I(z))`.
    pub fn h_of_state(&self, z: &Seq) -> f64 {
        self.actions.value(&actions_of(&self.layout, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns<F: Fn(&Seq) -> Seq>(n: usize, f: F) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, n);
        for c in 0..n {
            out.set_column(c, &f(&basis(n, c)));
        }
        out
    }

    #[test]
    fn twist_inverse_and_derivatives() {
        let l = ModeLayout::new(3, &[1]).unwrap();
        let t = Twist { g: default_twist(&l, 0.8) };
        let z = Seq::from_fn(l.dim(), |i, _| 0.2 * ((i * 7 % 5) as f64 - 2.0) / 2.0);
        let w = t.eval(&z);
        assert!((t.inverse(&w) - &z).amax() < 1e-14);
        let a = Seq::from_fn(l.dim(), |i, _| (i as f64).sin());
        let b = Seq::from_fn(l.dim(), |i, _| (2.0 * i as f64).cos());
        let c = Seq::from_fn(l.dim(), |i, _| (0.3 * i as f64 + 1.0).sin());
        let h = 1e-5;
        let fd1 = (t.eval(&(&z + &a * h)) - t.eval(&(&z - &a * h))) / (2.0 * h);
        assert!((fd1 - t.d1(&z, &a)).amax() < 1e-9);
        let fd2 = (t.d1(&(&z + &b * h), &a) - t.d1(&(&z - &b * h), &a)) / (2.0 * h);
        assert!((fd2 - t.d2(&z, &a, &b)).amax() < 1e-9);
        let fd3 = (t.d2(&(&z + &c * h), &a, &b) - t.d2(&(&z - &c * h), &a, &b)) / (2.0 * h);
        assert!((fd3 - t.d3(&z, &a, &b, &c)).amax() < 1e-9);
        let cols = |f: &dyn Fn(&Seq) -> Seq| columns(l.dim(), f);
        assert!((t.matrix(&z, None, None) - cols(&|e| t.d1(&z, e))).amax() < 1e-14);
        assert!((t.matrix(&z, Some(&a), None) - cols(&|e| t.d2(&z, &a, e))).amax() < 1e-13);
        assert!((t.matrix(&z, Some(&a), Some(&b)) - cols(&|e| t.d3(&z, &a, &b, e))).amax() < 1e-13);
    }

    #[test]
    fn resonant_set_is_trivial_pairs() {
        for n in [3i64, 8] {
            for a in -n..=n {
                for b in -n..=n {
                    for c in -n..=n {
                        let d = a + b - c;
                        if d.abs() > n {
                            continue;
                        }
                        let key = canonical(&[a, b], &[c, d]);
                        let res = a * a + b * b == c * c + d * d;
                        assert_eq!(res, is_resonant_key(&key), "{a} {b} {c} {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn resonant_quartic_is_closed_form() {
        let l = ModeLayout::new(4, &[]).unwrap();
        let b = make_perturbative(&l, FlowConfig::default()).unwrap();
        let i: Vec<f64> = (0..l.n_modes()).map(|k| 0.01 * (k as f64 + 1.0)).collect();
        let s: f64 = i.iter().sum();
        let expect = 2.0 * s * s - i.iter().map(|x| x * x).sum::<f64>();
        let base: f64 = i.iter().zip(dnls_base_freqs(&l)).map(|(a, w)| a * w).sum();
        let got = b.bk_h(&i) - base;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }
}
