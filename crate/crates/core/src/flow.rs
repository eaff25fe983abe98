//! Time-one maps of polynomial Hamiltonians with variational equations.
//!
//! The augmented system carries the Jacobian `M`, second variations `M_a`
//! along chosen directions and third variations `M_ab` along chosen pairs.
//! Integrating the augmented system with the same RK4 scheme yields the exact
//! derivatives of the discrete time-one map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::Seq;
use crate::poly::ZetaPoly;
use crate::quadrature::rk4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub steps: usize,
    /// Method order; only the classical fourth-order scheme is implemented.
    pub order: usize,
    pub halving_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { steps: 32, order: 4, halving_tol: 1e-9 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 16 || !self.steps.is_multiple_of(2) {
            return Err(Error::Config("flow steps must be even and at least 16".into()));
        }
        if self.order != 4 {
            return Err(Error::Config("only order-4 flows are available".into()));
        }
        if !(self.halving_tol > 0.0) {
            return Err(Error::Config("halving tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`PolyFlow::propagate`].
#[derive(Clone, Debug)]
pub struct FlowJets {
    pub value: Seq,
    pub jac: Option<DMatrix<f64>>,
    pub second: Vec<DMatrix<f64>>,
    pub third: Vec<DMatrix<f64>>,
}

/// Hamiltonian flow `ż = J∇G(z)` of a polynomial `G` given in `ζ` monomials.
#[derive(Clone, Debug)]
pub struct PolyFlow {
    pub gen: ZetaPoly,
    pub cfg: FlowConfig,
}

fn j_left(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let m = n / 2;
    let mut out = DMatrix::zeros(n, h.ncols());
    for i in 0..m {
        out.row_mut(i).copy_from(&(-h.row(m + i)));
        out.row_mut(m + i).copy_from(&h.row(i));
    }
    out
}

fn j_vec(v: &Seq) -> Seq {
    crate::phase_space::apply_j(v)
}

impl PolyFlow {
    pub fn new(gen: ZetaPoly, cfg: FlowConfig) -> Self {
        Self { gen, cfg }
    }

    pub fn field(&self, z: &Seq) -> Seq {
        j_vec(&self.gen.grad(z))
    }

    fn value_only(&self, z: &Seq, t1: f64, steps: usize) -> Seq {
        rk4(|_, y| self.field(y), z, 0.0, t1, steps)
    }

    /// Time-`t1` map value with the halving check.
    pub fn eval(&self, z: &Seq, t1: f64) -> Result<Seq> {
        let full = self.value_only(z, t1, self.cfg.steps);
        self.check(z, t1, &full)?;
        Ok(full)
    }

    fn check(&self, z: &Seq, t1: f64, full: &Seq) -> Result<()> {
        let half = self.value_only(z, t1, self.cfg.steps / 2);
        let diff = (full - half).amax();
        if diff > self.cfg.halving_tol * (1.0 + z.amax()) {
            return Err(Error::Halving(diff));
        }
        Ok(())
    }

    /// Value, Jacobian, `d²Φ[dirs_a, ·]` and `d³Φ[dirs_a, dirs_b, ·]` for the listed pairs.
    pub fn propagate(
        &self,
        z: &Seq,
        t1: f64,
        want_jac: bool,
        dirs: &[Seq],
        pairs: &[(usize, usize)],
    ) -> Result<FlowJets> {
        let n = z.len();
        let nn = n * n;
        let k = dirs.len();
        let p = pairs.len();
        let jac = want_jac || k > 0;
        let size = n + if jac { nn * (1 + k + p) } else { 0 };
        let mut y0 = DVector::zeros(size);
        y0.rows_mut(0, n).copy_from(z);
        if jac {
            for i in 0..n {
                y0[n + i * n + i] = 1.0;
            }
        }
        let mat = |y: &DVector<f64>, slot: usize| -> DMatrix<f64> {
            DMatrix::from_column_slice(n, n, &y.as_slice()[n + slot * nn..n + (slot + 1) * nn])
        };
        let rhs = |_t: f64, y: &DVector<f64>| -> DVector<f64> {
            let zc = y.rows(0, n).into_owned();
            let mut out = DVector::zeros(size);
            out.rows_mut(0, n).copy_from(&self.field(&zc));
            if !jac {
                return out;
            }
            let a = j_left(&self.gen.hess(&zc));
            let m = mat(y, 0);
            let put = |out: &mut DVector<f64>, slot: usize, v: &DMatrix<f64>| {
                out.as_mut_slice()[n + slot * nn..n + (slot + 1) * nn].copy_from_slice(v.as_slice());
            };
            put(&mut out, 0, &(&a * &m));
            let ma: Vec<DMatrix<f64>> = (0..k).map(|i| mat(y, 1 + i)).collect();
            let delta: Vec<Seq> = dirs.iter().map(|d| &m * d).collect();
            let bmat: Vec<DMatrix<f64>> =
                delta.iter().map(|d| j_left(&self.gen.contracted(&zc, &[d]))).collect();
            for i in 0..k {
                put(&mut out, 1 + i, &(&a * &ma[i] + &bmat[i] * &m));
            }
            for (q, &(ia, ib)) in pairs.iter().enumerate() {
                let mab = mat(y, 1 + k + q);
                let dab = &ma[ib] * &dirs[ia];
                let b_ab = j_left(&self.gen.contracted(&zc, &[&dab]));
                let c_ab = j_left(&self.gen.contracted(&zc, &[&delta[ia], &delta[ib]]));
                let v = &a * &mab + &bmat[ia] * &ma[ib] + &bmat[ib] * &ma[ia] + (b_ab + c_ab) * &m;
                put(&mut out, 1 + k + q, &v);
            }
            out
        };
        let y = rk4(rhs, &y0, 0.0, t1, self.cfg.steps);
        let value = y.rows(0, n).into_owned();
        self.check(z, t1, &value)?;
        Ok(FlowJets {
            jac: if jac { Some(mat(&y, 0)) } else { None },
            second: (0..k).map(|i| mat(&y, 1 + i)).collect(),
            third: (0..p).map(|q| mat(&y, 1 + k + q)).collect(),
            value,
        })
    }
}
