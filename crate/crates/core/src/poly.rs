//! Polynomials in the complex coordinates `ζ_n = (x_n − i y_n)/√2` and their
//! real-coordinate derivatives.
//!
//! Variables are indexed in "w-space": slot `k < m` is `ζ_{k−N}`, slot `m + k`
//! is `ζ̄_{k−N}`. Derivatives are taken in w-space by summing over injective
//! assignments of monomial positions, then mapped back to `(x, y)` with the
//! constant change of variables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{CVec, ModeLayout, Seq, C0, CI};

/// JSON form of one monomial `coef · Π ζ_{modes} Π ζ̄_{bar_modes}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialSpec {
    pub modes: Vec<i64>,
    pub bar_modes: Vec<i64>,
    pub coef: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Monomial {
    pub vars: Vec<usize>,
    pub coef: Complex64,
}

#[derive(Clone, Debug)]
pub struct ZetaPoly {
    pub m: usize,
    pub terms: Vec<Monomial>,
}

/// Canonical key: sorted unbarred modes, sorted barred modes.
pub type MonoKey = (Vec<i64>, Vec<i64>);

impl ZetaPoly {
    pub fn from_map(layout: &ModeLayout, map: &BTreeMap<MonoKey, Complex64>) -> Self {
        let m = layout.n_modes();
        let terms = map
            .iter()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|((a, b), c)| Monomial {
                vars: a
                    .iter()
                    .map(|&n| layout.slot(n))
                    .chain(b.iter().map(|&n| m + layout.slot(n)))
                    .collect(),
                coef: *c,
            })
            .collect();
        Self { m, terms }
    }

    pub fn from_specs(layout: &ModeLayout, specs: &[MonomialSpec]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in specs {
            for &n in s.modes.iter().chain(&s.bar_modes) {
                if n.unsigned_abs() as usize > layout.cutoff() {
                    return Err(Error::Generator(format!("mode {n} outside cutoff")));
                }
            }
            let key = canonical(&s.modes, &s.bar_modes);
            *map.entry(key).or_insert(C0) += Complex64::new(s.coef[0], s.coef[1]);
        }
        Ok(Self::from_map(layout, &map))
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|t| t.vars.len()).max().unwrap_or(0)
    }
    pub fn min_degree(&self) -> usize {
        self.terms.iter().map(|t| t.vars.len()).min().unwrap_or(0)
    }

    /// Largest deviation from being real-valued on real states: `|c_{αβ} − conj(c_{βα})|`.
    pub fn reality_defect(&self) -> f64 {
        let m = self.m;
        let mut map: BTreeMap<Vec<usize>, Complex64> = BTreeMap::new();
        for t in &self.terms {
            let mut v = t.vars.clone();
            v.sort_unstable();
            *map.entry(v).or_insert(C0) += t.coef;
        }
        let mut worst: f64 = 0.0;
        for (v, c) in &map {
            let mut conj: Vec<usize> = v.iter().map(|&k| if k < m { k + m } else { k - m }).collect();
            conj.sort_unstable();
            let cc = map.get(&conj).copied().unwrap_or(C0);
            worst = worst.max((c - cc.conj()).norm());
        }
        worst
    }

    /// Value at a real state.
    pub fn value(&self, z: &Seq) -> f64 {
        let w = to_w(self.m, z);
        self.terms
            .iter()
            .map(|t| t.coef * t.vars.iter().map(|&k| w[k]).product::<Complex64>())
            .sum::<Complex64>()
            .re
    }

    /// Real gradient.
    pub fn grad(&self, z: &Seq) -> Seq {
        let w = to_w(self.m, z);
        let mut g = CVec::zeros(2 * self.m);
        for t in &self.terms {
            let d = t.vars.len();
            for p in 0..d {
                let mut prod = t.coef;
                for (q, &k) in t.vars.iter().enumerate() {
                    if q != p {
                        prod *= w[k];
                    }
                }
                g[t.vars[p]] += prod;
            }
        }
        pull_vec(self.m, &g)
    }

    /// Real matrix of `d^{k+2} G(z)[dirs..., ·, ·]`, for `k = dirs.len() ≤ 2`.
    pub fn contracted(&self, z: &Seq, dirs: &[&Seq]) -> DMatrix<f64> {
        let w = to_w(self.m, z);
        let dw: Vec<CVec> = dirs.iter().map(|d| to_w(self.m, d)).collect();
        let n = 2 * self.m;
        let mut h = DMatrix::from_element(n, n, C0);
        let k = dirs.len();
        let mut used = [false; 8];
        for t in &self.terms {
            let d = t.vars.len();
            if d < k + 2 {
                continue;
            }
            if d == 4 {
                quartic_leaf(t, &w, &dw, &mut h);
                continue;
            }
            // direction slots first, then the two free slots
            let mut pick = [0usize; 4];
            fn rec(
                t: &Monomial,
                w: &CVec,
                dw: &[CVec],
                h: &mut DMatrix<Complex64>,
                used: &mut [bool; 8],
                pick: &mut [usize; 4],
                level: usize,
                k: usize,
            ) {
                let d = t.vars.len();
                if level == k + 2 {
                    let mut prod = t.coef;
                    for (j, item) in dw.iter().enumerate().take(k) {
                        prod *= item[t.vars[pick[j]]];
                    }
                    for q in 0..d {
                        if !used[q] {
                            prod *= w[t.vars[q]];
                        }
                    }
                    h[(t.vars[pick[k]], t.vars[pick[k + 1]])] += prod;
                    return;
                }
                for q in 0..d {
                    if !used[q] {
                        used[q] = true;
                        pick[level] = q;
                        rec(t, w, dw, h, used, pick, level + 1, k);
                        used[q] = false;
                    }
                }
            }
            rec(t, &w, &dw, &mut h, &mut used, &mut pick, 0, k);
        }
        pull_mat(self.m, &h)
    }

    pub fn hess(&self, z: &Seq) -> DMatrix<f64> {
        self.contracted(z, &[])
    }
}

/// Quartic term contribution to `d^{k+2}[dirs, ·, ·]`, summed over the six complementary slot pairs.
fn quartic_leaf(t: &Monomial, w: &CVec, dw: &[CVec], h: &mut DMatrix<Complex64>) {
    const PAIRS: [(usize, usize, usize, usize); 6] =
        [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2), (1, 2, 0, 3), (1, 3, 0, 2), (2, 3, 0, 1)];
    let v = &t.vars;
    for &(p, q, a, b) in &PAIRS {
        let (va, vb) = (v[a], v[b]);
        let s = match dw.len() {
            0 => w[va] * w[vb],
            1 => dw[0][va] * w[vb] + dw[0][vb] * w[va],
            _ => dw[0][va] * dw[1][vb] + dw[0][vb] * dw[1][va],
        } * t.coef;
        h[(v[p], v[q])] += s;
        h[(v[q], v[p])] += s;
    }
}

pub fn canonical(modes: &[i64], bar: &[i64]) -> MonoKey {
    let mut a = modes.to_vec();
    let mut b = bar.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// `w = C z`, with `ζ = (x − iy)/√2`, `ζ̄ = (x + iy)/√2`.
pub fn to_w(m: usize, z: &Seq) -> CVec {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut w = CVec::zeros(2 * m);
    for k in 0..m {
        w[k] = Complex64::new(z[k], -z[m + k]) * r;
        w[m + k] = Complex64::new(z[k], z[m + k]) * r;
    }
    w
}

/// `Cᵀ g`, real part.
fn pull_vec(m: usize, g: &CVec) -> Seq {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Seq::zeros(2 * m);
    for k in 0..m {
        out[k] = ((g[k] + g[m + k]) * r).re;
        out[m + k] = ((-CI * g[k] + CI * g[m + k]) * r).re;
    }
    out
}

/// `Cᵀ H C`, real part.
fn pull_mat(m: usize, h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let n = 2 * m;
    // column c of C: x_k -> (k: r, m+k: r); y_k -> (k: -i r, m+k: i r)
    let cols = |a: usize| -> [(usize, Complex64); 2] {
        if a < m {
            [(a, Complex64::new(r, 0.0)), (m + a, Complex64::new(r, 0.0))]
        } else {
            let k = a - m;
            [(k, Complex64::new(0.0, -r)), (m + k, Complex64::new(0.0, r))]
        }
    };
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        let ca = cols(a);
        for b in 0..n {
            let cb = cols(b);
            let mut s = C0;
            for (p, cp) in ca {
                for (q, cq) in cb {
                    s += cp * cq * h[(p, q)];
                }
            }
            out[(a, b)] = s.re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn action_square(layout: &ModeLayout, n: i64) -> ZetaPoly {
        // |ζ_n|⁴ = I_n²
        ZetaPoly::from_specs(
            layout,
            &[MonomialSpec { modes: vec![n, n], bar_modes: vec![n, n], coef: [1.0, 0.0] }],
        )
        .unwrap()
    }

    #[test]
    fn quartic_action_value_and_gradient() {
        let l = ModeLayout::new(3, &[]).unwrap();
        let p = action_square(&l, 2);
        let mut z = Seq::zeros(l.dim());
        z[l.x_index(2)] = 0.3;
        z[l.y_index(2)] = -0.4;
        let i = 0.5 * (0.09 + 0.16);
        assert!((p.value(&z) - i * i).abs() < 1e-15);
        let g = p.grad(&z);
        assert!((g[l.x_index(2)] - 2.0 * i * 0.3).abs() < 1e-14);
        assert!((g[l.y_index(2)] + 2.0 * i * 0.4).abs() < 1e-14);
        assert!(p.reality_defect() < 1e-15);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let l = ModeLayout::new(2, &[]).unwrap();
        let specs = vec![
            MonomialSpec { modes: vec![1, 0], bar_modes: vec![-1, 2], coef: [0.3, 0.1] },
            MonomialSpec { modes: vec![-1, 2], bar_modes: vec![1, 0], coef: [0.3, -0.1] },
        ];
        let p = ZetaPoly::from_specs(&l, &specs).unwrap();
        let z = Seq::from_fn(l.dim(), |i, _| 0.1 * (i as f64 + 1.0).sin());
        let h = p.hess(&z);
        let e = 1e-6;
        for a in 0..l.dim() {
            let mut zp = z.clone();
            zp[a] += e;
            let mut zm = z.clone();
            zm[a] -= e;
            let col = (p.grad(&zp) - p.grad(&zm)) / (2.0 * e);
            for b in 0..l.dim() {
                assert!((col[b] - h[(b, a)]).abs() < 1e-8);
            }
        }
        let d = Seq::from_fn(l.dim(), |i, _| (0.7 * i as f64).cos());
        let t3 = p.contracted(&z, &[&d]);
        let fd = (p.hess(&(&z + &d * e)) - p.hess(&(&z - &d * e))) / (2.0 * e);
        assert!((t3 - fd).abs().max() < 1e-8);
        let d2 = Seq::from_fn(l.dim(), |i, _| (1.3 * i as f64).sin());
        let t4 = p.contracted(&z, &[&d, &d2]);
        let fd = (p.contracted(&(&z + &d2 * e), &[&d]) - p.contracted(&(&z - &d2 * e), &[&d])) / (2.0 * e);
        assert!((t4 - fd).abs().max() < 1e-8);
    }
}
