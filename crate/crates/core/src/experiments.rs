//! Experiments behind the `nlscanon` CLI.
//!
//! Each experiment turns a JSON config into a list of [`Row`]s. Samples are
//! evaluated in parallel; every sample owns a random stream keyed by its id, and
//! rows are assembled in sample order, so the output does not depend on the
//! thread count. Failures inside a sample (guards, Newton, quadrature) become
//! failed rows; only configuration errors abort a run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendKind, BackendSpec, Jets};
use crate::chart::{d_phi_l_from, phi_l_from, ChartConfig, ChartContext, Patch};
use crate::corrector::{CorrectorContext, Tangent};
use crate::error::{Error, Result};
use crate::fit::{slope_fit, tame_fit, TameNorms, TameOp, TamePoint};
use crate::flow::FlowConfig;
use crate::forms::{
    cone_construct, exterior_derivative, poincare_closed_residual, poincare_residual, symplecticity_residual,
    BigLambdaM, ExactTwoForm, FormField, LambdaM, PolyOneForm, PolyTwoForm, TwoFormMat, pullback_two_form,
};
use crate::normal_form::NormalForm;
use crate::phase_space::{
    actions_of, apply_j, fnls_forward_matrix, fnls_inverse, fnls_inverse_matrix, op_norm_c,
    sobolev_norm, sobolev_norm_c, to_complex, to_complex_mat, CVec, ModeLayout, Part, Seq,
};
use crate::quadrature::log_grid;
use crate::sampling::{direction, perp_sample, rng, tagged_sample};
use crate::zs::{dpsi_nls_columns, ZsPotential, ZsSolver, ZS_STEPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "symplectic")]
    Symplectic,
    #[serde(rename = "darboux")]
    Darboux,
    #[serde(rename = "poincare")]
    Poincare,
    #[serde(rename = "p2-vanish")]
    P2Vanish,
    #[serde(rename = "normal-form")]
    NormalForm,
    #[serde(rename = "tame")]
    Tame,
    #[serde(rename = "smoothing")]
    Smoothing,
    #[serde(rename = "floquet")]
    Floquet,
    #[serde(rename = "zs-crosscheck")]
    ZsCrosscheck,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 9] = [
        ExperimentId::Symplectic,
        ExperimentId::Darboux,
        ExperimentId::Poincare,
        ExperimentId::P2Vanish,
        ExperimentId::NormalForm,
        ExperimentId::Tame,
        ExperimentId::Smoothing,
        ExperimentId::Floquet,
        ExperimentId::ZsCrosscheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Symplectic => "symplectic",
            ExperimentId::Darboux => "darboux",
            ExperimentId::Poincare => "poincare",
            ExperimentId::P2Vanish => "p2-vanish",
            ExperimentId::NormalForm => "normal-form",
            ExperimentId::Tame => "tame",
            ExperimentId::Smoothing => "smoothing",
            ExperimentId::Floquet => "floquet",
            ExperimentId::ZsCrosscheck => "zs-crosscheck",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::Symplectic => "symplecticity of the full map, inverse round trips",
            ExperimentId::Darboux => "Darboux pullback of the corrector, tau probe, flow consistency",
            ExperimentId::Poincare => "Poincare lemma on random forms, primitives of the chart forms",
            ExperimentId::P2Vanish => "vanishing of the quadratic normal-form remainder",
            ExperimentId::NormalForm => "cubic remainder slope and term closure, operator identities",
            ExperimentId::Tame => "tame estimates fitted on a train batch and checked on a test batch",
            ExperimentId::Smoothing => "smoothing constants and frequency corrections across cutoffs",
            ExperimentId::Floquet => "Floquet solutions of the linearized equation",
            ExperimentId::ZsCrosscheck => "Zakharov-Shabat spectral data against the backend",
        }
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    /// Mode cutoff `N`.
    #[serde(rename = "N")]
    pub n: usize,
    /// Tagged modes `S`.
    #[serde(rename = "S")]
    pub s: Vec<i64>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { n: 16, s: vec![1, -2] }
    }
}

/// Run configuration. Optional fields fall back to per-experiment defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `N = 16, S = {1, −2}` (`N = 8` for `tame`).
    #[serde(default)]
    pub layout: Option<LayoutConfig>,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub chart: ChartConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    /// Sample count (train and test batch size for `tame`).
    #[serde(default)]
    pub samples: Option<usize>,
    /// Amplitude list: fraction of `δ'` for pointwise checks, `ε` or `ρ` grid for sweeps.
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    /// Backends for `symplectic`.
    #[serde(default)]
    pub backends: Option<Vec<BackendKind>>,
    /// Cutoff sweep for `smoothing`.
    #[serde(default)]
    pub cutoffs: Option<Vec<usize>>,
    /// Sobolev indices for `tame` and `smoothing`.
    #[serde(default)]
    pub sobolev: Option<Vec<u32>>,
    /// Per-quantity tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId) -> Self {
        Self {
            experiment,
            seed: 0,
            layout: None,
            backend: BackendSpec::default(),
            chart: ChartConfig::default(),
            flow: FlowConfig::default(),
            samples: None,
            amplitudes: None,
            backends: None,
            cutoffs: None,
            sobolev: None,
            tolerances: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let layout = self.layout_config();
        ModeLayout::new(layout.n, &layout.s)?;
        if layout.n > 64 {
            return bad(format!("cutoff N = {} exceeds 64", layout.n));
        }
        if self.samples == Some(0) {
            return bad("samples must be positive".into());
        }
        if let Some(a) = &self.amplitudes {
            if a.is_empty() || a.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return bad("amplitudes must be a nonempty list of positive numbers".into());
            }
        }
        if let Some(c) = &self.cutoffs {
            if c.is_empty() || c.iter().any(|&n| n == 0 || n > 64) {
                return bad("cutoffs must be a nonempty list in 1..=64".into());
            }
        }
        if let Some(s) = &self.sobolev {
            if s.is_empty() || s.iter().any(|&k| k > 8) {
                return bad("sobolev indices must be a nonempty list in 0..=8".into());
            }
        }
        if matches!(&self.backends, Some(b) if b.is_empty()) {
            return bad("backends must be nonempty".into());
        }
        for (k, v) in &self.tolerances {
            if !v.is_finite() || *v < 0.0 {
                return bad(format!("tolerance {k} must be a nonnegative number"));
            }
        }
        self.flow.validate()?;
        Ok(())
    }

    pub fn layout_config(&self) -> LayoutConfig {
        self.layout.clone().unwrap_or_else(|| match self.experiment {
            ExperimentId::Tame => LayoutConfig { n: 8, ..LayoutConfig::default() },
            _ => LayoutConfig::default(),
        })
    }

    fn layout(&self) -> Result<ModeLayout> {
        let l = self.layout_config();
        ModeLayout::new(l.n, &l.s)
    }

    fn tol(&self, quantity: &str, default: f64) -> f64 {
        self.tolerances.get(quantity).copied().unwrap_or(default)
    }

    fn samples_or(&self, n: usize) -> usize {
        self.samples.unwrap_or(n)
    }

    fn amplitude_or(&self, a: f64) -> f64 {
        self.amplitudes.as_ref().and_then(|v| v.first().copied()).unwrap_or(a)
    }

    fn grid_or(&self, a: f64, b: f64, n: usize) -> Vec<f64> {
        self.amplitudes.clone().unwrap_or_else(|| log_grid(a, b, n))
    }

    fn corrector(&self, kind: BackendKind, layout: &ModeLayout) -> Result<CorrectorContext> {
        let mut spec = self.backend.clone();
        spec.kind = kind;
        let chart = ChartContext::new(spec.build(layout)?, &self.chart)?;
        CorrectorContext::new(chart, self.flow, self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// `value ≤ tolerance`.
    Le,
    /// `value ≥ tolerance` (slope floors).
    Ge,
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub experiment: String,
    pub backend: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "S")]
    pub s: String,
    pub amplitude: f64,
    pub quantity: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub comparison: Comparison,
    /// Acceptance criterion checked by this row, if any.
    pub criterion: Option<u8>,
    pub diagnostics: String,
}

pub const CSV_HEADER: [&str; 9] = ["experiment", "backend", "N", "S", "amplitude", "quantity", "value", "tolerance", "pass"];

impl Row {
    fn csv_record(&self) -> [String; 9] {
        [
            self.experiment.clone(),
            self.backend.clone(),
            self.n.to_string(),
            self.s.clone(),
            self.amplitude.to_string(),
            self.quantity.clone(),
            self.value.to_string(),
            self.tolerance.to_string(),
            self.pass.to_string(),
        ]
    }
}

/// Shared row fields for one backend and layout.
struct RowCtx {
    experiment: ExperimentId,
    backend: String,
    n: usize,
    s: String,
}

impl RowCtx {
    fn new(experiment: ExperimentId, backend: &str, layout: &ModeLayout) -> Self {
        let s = layout.tagged().iter().map(i64::to_string).collect::<Vec<_>>().join(";");
        Self { experiment, backend: backend.into(), n: layout.cutoff(), s }
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        amplitude: f64,
        quantity: &str,
        value: f64,
        tolerance: f64,
        comparison: Comparison,
        criterion: Option<u8>,
        failures: &Failures,
        diagnostics: String,
    ) -> Row {
        let ok = match comparison {
            Comparison::Le => value <= tolerance,
            Comparison::Ge => value >= tolerance,
        };
        let mut diag = diagnostics;
        if failures.count > 0 {
            if !diag.is_empty() {
                diag.push_str("; ");
            }
            let _ = write!(diag, "{} of {} evaluations failed: {}", failures.count, failures.total, failures.first);
        }
        Row {
            experiment: self.experiment.to_string(),
            backend: self.backend.clone(),
            n: self.n,
            s: self.s.clone(),
            amplitude,
            quantity: quantity.into(),
            value,
            tolerance,
            pass: ok && failures.count == 0,
            comparison,
            criterion,
            diagnostics: diag,
        }
    }

    fn setup_failure(&self, what: &str, err: &Error) -> Row {
        let f = Failures { count: 1, total: 1, first: err.to_string() };
        self.row(f64::NAN, &format!("setup_{what}"), f64::NAN, 0.0, Comparison::Le, None, &f, String::new())
    }
}

/// Error tally over a batch of evaluations.
#[derive(Clone, Debug, Default)]
struct Failures {
    count: usize,
    total: usize,
    first: String,
}

type SampleResult<T> = std::result::Result<T, String>;

impl Failures {
    fn of<T>(results: &[SampleResult<T>]) -> Self {
        let mut f = Failures { total: results.len(), ..Default::default() };
        for r in results {
            if let Err(e) = r {
                if f.count == 0 {
                    f.first = e.clone();
                }
                f.count += 1;
            }
        }
        f
    }
}

fn max_of(vals: impl IntoIterator<Item = f64>) -> f64 {
    vals.into_iter().fold(f64::NAN, |a, b| if a.is_nan() || b > a { b } else { a })
}

fn min_of(vals: impl IntoIterator<Item = f64>) -> f64 {
    vals.into_iter().fold(f64::NAN, |a, b| if a.is_nan() || b < a { b } else { a })
}

/// Max of component `k` over the successful samples; NaN when none succeeded.
fn col_max<const K: usize>(res: &[SampleResult<[f64; K]>], k: usize) -> f64 {
    max_of(res.iter().filter_map(|r| r.as_ref().ok()).map(|a| a[k]))
}

fn torus_point(layout: &ModeLayout, seed: u64, t: usize, amp: f64) -> Seq {
    tagged_sample(layout, &mut rng(seed, 10_000 + t as u64), amp)
}

fn perp_point(layout: &ModeLayout, seed: u64, i: usize, s: u32, norm0: f64) -> Seq {
    perp_sample(layout, &mut rng(seed, 20_000 + i as u64), s, norm0)
}

/// Evaluates `f` on `n` samples grouped `group` per torus point, one patch per torus.
/// Sample `i` is `z_S(i / group) + z_⊥(i)` with `‖z_⊥‖₀ = frac·δ'`.
fn per_torus<T, F>(corr: &CorrectorContext, seed: u64, n: usize, group: usize, frac: f64, f: F) -> Vec<SampleResult<T>>
where
    T: Send,
    F: Fn(&Patch, &Seq, usize) -> Result<T> + Sync,
{
    let layout = &corr.chart.layout;
    let groups = n.div_ceil(group);
    let norm0 = frac * corr.delta_prime;
    let out: Vec<Vec<SampleResult<T>>> = (0..groups)
        .into_par_iter()
        .map(|t| {
            let zs = torus_point(layout, seed, t, corr.chart.k_amplitude);
            let ids = t * group..((t + 1) * group).min(n);
            match corr.patch(&zs) {
                Err(e) => ids.map(|_| Err(e.to_string())).collect(),
                Ok(patch) => ids
                    .map(|i| {
                        let z = &zs + perp_point(layout, seed, i, 1, norm0);
                        f(&patch, &z, i).map_err(|e| e.to_string())
                    })
                    .collect(),
            }
        })
        .collect();
    out.into_iter().flatten().collect()
}

fn kind_name(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Toy => "toy",
        BackendKind::Perturbative => "perturbative",
    }
}

/// Results of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub passed: usize,
    pub failed: usize,
    /// Tolerance overrides that matched no row.
    pub unused_tolerances: Vec<String>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.failed == 0 && !self.rows.is_empty()
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.csv_record()).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
    }

    /// Writes `report.json` and `rows.csv` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.csv_string()?)?;
        let mut f = std::fs::File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

/// Runs the configured experiment on the current rayon pool.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let rows = match cfg.experiment {
        ExperimentId::Symplectic => symplectic(cfg)?,
        ExperimentId::Darboux => darboux(cfg)?,
        ExperimentId::Poincare => poincare(cfg)?,
        ExperimentId::P2Vanish => p2_vanish(cfg)?,
        ExperimentId::NormalForm => normal_form(cfg)?,
        ExperimentId::Tame => tame(cfg)?,
        ExperimentId::Smoothing => smoothing(cfg)?,
        ExperimentId::Floquet => floquet(cfg)?,
        ExperimentId::ZsCrosscheck => zs_crosscheck(cfg)?,
    };
    let passed = rows.iter().filter(|r| r.pass).count();
    let unused_tolerances =
        cfg.tolerances.keys().filter(|k| !rows.iter().any(|r| &r.quantity == *k)).cloned().collect();
    Ok(Report {
        experiment: cfg.experiment.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        failed: rows.len() - passed,
        passed,
        rows,
        unused_tolerances,
    })
}

fn symplectic(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let n = cfg.samples_or(20);
    let frac = cfg.amplitude_or(0.8);
    let kinds = cfg.backends.clone().unwrap_or_else(|| vec![BackendKind::Toy, BackendKind::Perturbative]);
    let mut rows = Vec::new();
    for kind in kinds {
        let rc = RowCtx::new(ExperimentId::Symplectic, kind_name(kind), &layout);
        let corr = match cfg.corrector(kind, &layout) {
            Ok(c) => c,
            Err(e) => {
                rows.push(rc.setup_failure("corrector", &e));
                continue;
            }
        };
        let l = &layout;
        let fwd = fnls_forward_matrix(l);
        let inv = fnls_inverse_matrix(l);
        let id = DMatrix::<Complex64>::identity(l.dim(), l.dim());
        let res = per_torus(&corr, cfg.seed, n, 4, frac, |p, z, _| {
            let (_, d, _) = corr.d_phi_full(p, z)?;
            let t = &inv * to_complex_mat(&d);
            let sym = symplecticity_residual(l, &t)?;
            let back = corr.psi_full_inv(p, &corr.psi_full(p, z)?)?;
            let (a, certified) = corr.a_full(p, z)?;
            let inv_id = op_norm_c(&((&fwd + a) * &t - &id));
            Ok([sym, (back - z).amax(), inv_id, if certified { 0.0 } else { 1.0 }])
        });
        let fails = Failures::of(&res);
        let uncert = res.iter().filter_map(|r| r.as_ref().ok()).filter(|a| a[3] > 0.0).count();
        let diag = format!("delta' = {:.3e}", corr.delta_prime);
        rows.push(rc.row(frac, "symplecticity", col_max(&res, 0), cfg.tol("symplecticity", 1e-7), Comparison::Le, Some(1), &fails, diag.clone()));
        rows.push(rc.row(frac, "round_trip", col_max(&res, 1), cfg.tol("round_trip", 1e-8), Comparison::Le, Some(12), &fails, String::new()));
        rows.push(rc.row(
            frac,
            "inverse_identity",
            col_max(&res, 2),
            cfg.tol("inverse_identity", 1e-8),
            Comparison::Le,
            Some(12),
            &fails,
            format!("{uncert} samples with an uncertified Neumann series"),
        ));
    }
    Ok(rows)
}

fn darboux(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let kind = cfg.backend.kind;
    let rc = RowCtx::new(ExperimentId::Darboux, kind_name(kind), &layout);
    let corr = match cfg.corrector(kind, &layout) {
        Ok(c) => c,
        Err(e) => return Ok(vec![rc.setup_failure("corrector", &e)]),
    };
    let n = cfg.samples_or(20);
    let frac = cfg.amplitude_or(0.8);
    let probes = n.min(5);
    let taus = [0.0, 0.25, 0.5, 0.75, 1.0];
    let res = per_torus(&corr, cfg.seed, n, 4, frac, |p, z, i| {
        let darb = corr.darboux_residual(p, z)?;
        let full = corr.flow(p, z, 0.0, 1.0, Tangent::None)?.value;
        let half = corr.flow(p, z, 0.0, 0.5, Tangent::None)?.value;
        let group = (corr.flow(p, &half, 0.5, 1.0, Tangent::None)?.value - &full).amax();
        let back = (corr.flow(p, &full, 1.0, 0.0, Tangent::None)?.value - z).amax();
        let mut probe = 0.0f64;
        if i < probes {
            for &tau in &taus {
                probe = probe.max(corr.tau_probe(p, z, tau, 1e-3)?);
            }
        }
        Ok([darb, probe, group, back])
    });
    let fails = Failures::of(&res);
    let mut rows = vec![
        rc.row(frac, "darboux_pullback", col_max(&res, 0), cfg.tol("darboux_pullback", 1e-7), Comparison::Le, Some(2), &fails, format!("delta' = {:.3e}", corr.delta_prime)),
        rc.row(frac, "tau_probe", col_max(&res, 1), cfg.tol("tau_probe", 1e-6), Comparison::Le, Some(2), &fails, format!("{probes} points x {} tau values", taus.len())),
        rc.row(frac, "flow_group", col_max(&res, 2), cfg.tol("flow_group", 1e-9), Comparison::Le, None, &fails, String::new()),
        rc.row(frac, "flow_backward_forward", col_max(&res, 3), cfg.tol("flow_backward_forward", 1e-9), Comparison::Le, None, &fails, String::new()),
    ];
    // cubic part of B_C along an ε-ray that reaches 0.9δ' at the largest ε
    let eps = cfg.grid_or(-2.5, -1.0, 6);
    let zs = torus_point(&layout, cfg.seed, 0, corr.chart.k_amplitude);
    let eps_max = eps.iter().copied().fold(0.0, f64::max);
    let base = perp_point(&layout, cfg.seed, 0, 1, 0.9 * corr.delta_prime / eps_max);
    let vals: Vec<SampleResult<f64>> = eps
        .par_iter()
        .map(|&e| {
            let z = &zs + &base * e;
            let p = corr.patch(&zs)?;
            let (_, b3) = corr.b_c_split(&p, &z)?;
            Ok(sobolev_norm(&layout, &b3, 0, Part::Full))
        })
        .map(|r: Result<f64>| r.map_err(|e| e.to_string()))
        .collect();
    rows.push(slope_row(&rc, cfg, "b3_slope", &eps, &vals, 2.9, None));
    Ok(rows)
}

fn slope_row(rc: &RowCtx, cfg: &ExperimentConfig, q: &str, eps: &[f64], vals: &[SampleResult<f64>], floor: f64, crit: Option<u8>) -> Row {
    let fails = Failures::of(vals);
    let v: Vec<f64> = vals.iter().map(|r| *r.as_ref().unwrap_or(&f64::NAN)).collect();
    let amp = eps.iter().copied().fold(0.0, f64::max);
    let values = v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    match slope_fit(eps, &v) {
        Ok(f) => rc.row(amp, q, f.slope, cfg.tol(q, floor), Comparison::Ge, crit, &fails, format!("{} points used, {} excluded; values {values}", f.used, f.excluded)),
        Err(e) => rc.row(amp, q, f64::NAN, cfg.tol(q, floor), Comparison::Ge, crit, &fails, format!("{e}; values {values}")),
    }
}

/// `λ_L(z)[ξ] = (E(z), ξ)` on the patch.
struct LambdaL<'a, 'b>(&'a Patch<'b>);

impl FormField for LambdaL<'_, '_> {
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        self.0.local_l(z).map(|l| l.e_vector().dot(vs[0])).unwrap_or(f64::NAN)
    }
}

/// `Λ_L(z)[ξ, η] = (L(z)ξ, η)`.
struct BigLambdaL<'a, 'b>(&'a Patch<'b>);

impl FormField for BigLambdaL<'_, '_> {
    fn degree(&self) -> usize {
        2
    }
    fn eval(&self, z: &Seq, vs: &[&Seq]) -> f64 {
        self.0.local_l(z).map(|l| l.apply_l(vs[0]).dot(vs[1])).unwrap_or(f64::NAN)
    }
}

fn poincare(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let forms = cfg.samples_or(10);
    let dim = 6;
    let y_idx = [3usize, 4, 5];
    let unit = |r: &mut rand_chacha::ChaCha8Rng, a: f64| Seq::from_fn(dim, |_, _| r.gen_range(-a..a));
    let res: Vec<SampleResult<[f64; 2]>> = (0..forms)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(cfg.seed, 30_000 + i as u64);
            let z = unit(&mut r, 0.5);
            let a = unit(&mut r, 1.0);
            let b = unit(&mut r, 1.0);
            let open = if i % 2 == 0 {
                let w = PolyOneForm::random_hypothesis(dim, &y_idx, &mut r);
                poincare_residual(&w, &y_idx, &z, &[&a])
            } else {
                let w = PolyTwoForm::random_hypothesis(dim, &y_idx, &mut r);
                poincare_residual(&w, &y_idx, &z, &[&a, &b])
            };
            let closed = ExactTwoForm { primitive: PolyOneForm::random_hypothesis(dim, &y_idx, &mut r) };
            let c = poincare_closed_residual(&closed, &y_idx, &z, &[&a, &b]);
            open.map(|o| [o.abs(), c.abs()]).map_err(|e| e.to_string())
        })
        .collect();
    let rc = RowCtx { experiment: ExperimentId::Poincare, backend: "none".into(), n: dim, s: "3;4;5".into() };
    let fails = Failures::of(&res);
    let mut rows = vec![
        rc.row(0.5, "poincare_identity", col_max(&res, 0), cfg.tol("poincare_identity", 1e-7), Comparison::Le, Some(3), &fails, format!("{forms} forms of degree 1 and 2")),
        rc.row(0.5, "poincare_closed", col_max(&res, 1), cfg.tol("poincare_closed", 1e-7), Comparison::Le, Some(3), &fails, format!("{forms} exact two-forms")),
    ];

    // forms attached to the chart
    let layout = cfg.layout()?;
    let kind = cfg.backend.kind;
    let rc = RowCtx::new(ExperimentId::Poincare, kind_name(kind), &layout);
    let corr = match cfg.corrector(kind, &layout) {
        Ok(c) => c,
        Err(e) => {
            rows.push(rc.setup_failure("corrector", &e));
            return Ok(rows);
        }
    };
    let frac = cfg.amplitude_or(0.8);
    let pts = forms.min(5);
    let lam = TwoFormMat::lambda(&layout);
    let p_idx = corr.chart.p_idx.clone();
    let res = per_torus(&corr, cfg.seed, pts, 1, frac, |p, z, i| {
        let mut r = rng(cfg.seed, 31_000 + i as u64);
        let a = direction(&layout, &mut r, 0);
        let b = direction(&layout, &mut r, 0);
        let ll = p.local_l(z)?;
        let pb = pullback_two_form(&layout, &p.d_psi_l(z)?, &lam)?;
        let expect = TwoFormMat::lambda_m(&layout).gram + to_complex_mat(&ll.matrix());
        let pull = op_norm_c(&(pb.gram - expect));
        let d_lam = exterior_derivative(&LambdaL(p), z, &[&a, &b]) - BigLambdaL(p).eval(z, &[&a, &b]);
        let cone = cone_construct(&BigLambdaL(p), &p_idx, z, &[&a])? - ll.e_vector().dot(&a);
        let dm = exterior_derivative(&LambdaM, z, &[&a, &b]) - BigLambdaM.eval(z, &[&a, &b]);
        Ok([pull, d_lam.abs(), cone.abs(), dm.abs()])
    });
    let fails = Failures::of(&res);
    for (k, q, tol) in [(0, "chart_pullback", 1e-8), (1, "chart_primitive", 1e-7), (2, "chart_cone", 1e-7), (3, "reference_primitive", 1e-7)] {
        rows.push(rc.row(frac, q, col_max(&res, k), cfg.tol(q, tol), Comparison::Le, None, &fails, format!("{pts} points")));
    }
    Ok(rows)
}

fn p2_vanish(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let mut rows = Vec::new();

    let rc = RowCtx::new(ExperimentId::P2Vanish, "toy", &layout);
    match cfg.corrector(BackendKind::Toy, &layout) {
        Err(e) => rows.push(rc.setup_failure("corrector", &e)),
        Ok(corr) => {
            let nf = NormalForm::new(&corr)?;
            let n = cfg.samples_or(10);
            let amp = corr.chart.k_amplitude;
            let res: Vec<SampleResult<f64>> = (0..n)
                .into_par_iter()
                .map(|t| {
                    let zs = torus_point(&layout, cfg.seed, t, amp);
                    let jets = corr.chart.backend.jets(&zs, &corr.chart.s_idx, false)?;
                    Ok(nf.p2_residual(&jets, &zs))
                })
                .map(|r: Result<f64>| r.map_err(|e| e.to_string()))
                .collect();
            let fails = Failures::of(&res);
            let v = max_of(res.iter().filter_map(|r| r.as_ref().ok()).copied());
            rows.push(rc.row(amp, "p2_hessian", v, cfg.tol("p2_hessian", 1e-6), Comparison::Le, Some(4), &fails, format!("{n} torus points")));
        }
    }

    let rc = RowCtx::new(ExperimentId::P2Vanish, "perturbative", &layout);
    match cfg.corrector(BackendKind::Perturbative, &layout) {
        Err(e) => rows.push(rc.setup_failure("corrector", &e)),
        Ok(corr) => {
            let nf = NormalForm::new(&corr)?;
            let mut u = tagged_sample(&layout, &mut rng(cfg.seed, 40_000), 1.0);
            u /= sobolev_norm(&layout, &u, 0, Part::Full);
            let v = perp_sample(&layout, &mut rng(cfg.seed, 41_000), 1, 1.0);
            let formula = |rho: f64| -> Result<f64> {
                let zs = &u * rho;
                let jets: Jets = corr.chart.backend.jets(&zs, &corr.chart.s_idx, false)?;
                Ok(nf.p2_residual(&jets, &zs))
            };
            // the quadratic part of the full remainder carries the non-Birkhoff defect
            let effective = |rho: f64| -> Result<f64> {
                let zs = &u * rho;
                let p = corr.patch(&zs)?;
                Ok(sobolev_norm(&layout, &nf.remainder_hessian_apply(&p, &zs, &v, 2e-3)?, 0, Part::Full))
            };
            let rhos = cfg.grid_or(-2.0, -1.0, 6);
            let vals: Vec<SampleResult<f64>> = rhos.par_iter().map(|&r| effective(r).map_err(|e| e.to_string())).collect();
            rows.push(slope_row(&rc, cfg, "p2_rho_slope", &rhos, &vals, 3.7, Some(4)));
            let f: Vec<SampleResult<f64>> =
                rhos.iter().copied().chain([0.0]).map(|r| formula(r).map_err(|e| e.to_string())).collect();
            let v = max_of(f.iter().filter_map(|r| r.as_ref().ok()).copied());
            rows.push(rc.row(
                rhos.iter().copied().fold(0.0, f64::max),
                "p2_formula",
                v,
                cfg.tol("p2_formula", 1e-10),
                Comparison::Le,
                None,
                &Failures::of(&f),
                "quadratic form of the remainder at every sweep point and the origin".into(),
            ));
        }
    }
    Ok(rows)
}

fn normal_form(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let kind = cfg.backend.kind;
    let rc = RowCtx::new(ExperimentId::NormalForm, kind_name(kind), &layout);
    let corr = match cfg.corrector(kind, &layout) {
        Ok(c) => c,
        Err(e) => return Ok(vec![rc.setup_failure("corrector", &e)]),
    };
    let nf = NormalForm::new(&corr)?;
    let n = cfg.samples_or(10);
    let frac = 0.5;
    let rank = corr.chart.s_idx.len();
    let taus = [0.0, 0.5, 1.0];
    let res = per_torus(&corr, cfg.seed, n, 5, frac, |p, z, i| {
        let zs = corr.chart.torus_point(z);
        let zp = corr.chart.perp_part(z);
        let terms = nf.p3_terms(p, z)?;
        let torus = nf.p3(p, &zs)?.abs();
        let b2 = (nf.p3_2b_integral(p, z)? - terms.p3_2b).abs();
        // directional derivative of p3 against central differences
        let d = direction(&layout, &mut rng(cfg.seed, 50_000 + i as u64), 1);
        let h = 1e-3;
        let f = |k: f64| nf.p3(p, &(z + &d * (k * h)));
        let fd = (f(-2.0)? - 8.0 * f(-1.0)? + 8.0 * f(1.0)? - f(2.0)?) / (12.0 * h);
        let g = nf.grad_p3(p, z)?;
        let grad = (g.dot(&d) - fd).abs() / g.norm().max(f64::MIN_POSITIVE);
        let jets = p.jets(&zs)?;
        let taylor = nf.taylor_identity(&jets.phi, &(&jets.t * &zp))?;
        let chain = nf.identity_chain(z)?;
        let tgrad = nf.identity_torus_gradient(p, z)?;
        let hess = nf.identity_hessian(p, z)?;
        let mut cap = 0.0f64;
        for l in 0..rank {
            let (a, b) = nf.r_xy_identity(p, z, l)?;
            cap = cap.max((a - b).abs());
        }
        let ll = p.local_l(z)?;
        let e = ll.e_vector();
        let mut fund = 0.0f64;
        let mut pom = 0.0f64;
        for &tau in &taus {
            let x = ll.vector_field(tau)?;
            let r = &e - apply_j(&x) + ll.apply_l(&x) * tau;
            fund = fund.max(r.amax());
            let a = nf.p_omega(p, z, tau)?;
            pom = pom.max((a - nf.p_omega_formula(p, z, tau)?).abs() / (1.0 + a.abs()));
        }
        Ok([terms.closure(), torus, b2, grad, taylor, chain, tgrad, hess, cap, fund, pom])
    });
    let fails = Failures::of(&res);
    let spec: [(&str, f64, Option<u8>); 11] = [
        ("p3_closure", 1e-7, Some(5)),
        ("p3_torus", 1e-9, Some(5)),
        ("p3_second_order_integral", 1e-7, None),
        ("p3_gradient_fd", 1e-5, None),
        ("taylor_identity", 1e-8, None),
        ("identity_chain", 1e-7, None),
        ("identity_torus_gradient", 1e-8, None),
        ("identity_hessian", 1e-7, Some(9)),
        ("r_xy_identity", 1e-6, Some(9)),
        ("fundamental_identity", 1e-9, Some(9)),
        ("p_omega_formula", 1e-9, None),
    ];
    let mut rows: Vec<Row> = spec
        .iter()
        .enumerate()
        .map(|(k, (q, tol, c))| rc.row(frac, q, col_max(&res, k), cfg.tol(q, *tol), Comparison::Le, *c, &fails, format!("{n} points")))
        .collect();

    let eps = cfg.grid_or(-2.5, -1.0, 6);
    let eps_max = eps.iter().copied().fold(0.0, f64::max);
    let slope_samples = n.min(3);
    let slopes: Vec<Row> = (0..slope_samples)
        .into_par_iter()
        .map(|i| {
            let zs = torus_point(&layout, cfg.seed, i, corr.chart.k_amplitude);
            let base = perp_point(&layout, cfg.seed, i, 1, 0.9 * corr.delta_prime / eps_max);
            let vals: Vec<SampleResult<f64>> = eps
                .iter()
                .map(|&e| {
                    let p = corr.patch(&zs)?;
                    Ok(nf.p3(&p, &(&zs + &base * e))?.abs())
                })
                .map(|r: Result<f64>| r.map_err(|e| e.to_string()))
                .collect();
            slope_row(&rc, cfg, "p3_slope", &eps, &vals, 2.9, Some(5))
        })
        .collect();
    // the worst slope over the samples decides
    if let Some(worst) = slopes.into_iter().min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Less)) {
        rows.push(worst);
    }
    Ok(rows)
}

/// Values of every registered operator at one sample, as `(numerator vector, tangent)` norms.
struct TameSample {
    /// `‖op‖_{s + gain}` per operator, per Sobolev index.
    nums: BTreeMap<TameOp, Vec<f64>>,
    norms: Vec<TameNorms>,
}

fn tame_sample(corr: &CorrectorContext, nf: &NormalForm, seed: u64, i: usize, sob: &[u32]) -> Result<TameSample> {
    let layout = &corr.chart.layout;
    let mut r = rng(seed, 60_000 + i as u64);
    let frac = r.gen_range(0.1..0.9);
    let s_draw = r.gen_range(1..=3u32);
    let zs = torus_point(layout, seed, 100_000 + i, corr.chart.k_amplitude);
    let z = &zs + perp_sample(layout, &mut r, s_draw, frac * corr.delta_prime);
    let hd = direction(layout, &mut r, s_draw);
    let wh = fnls_inverse(layout, &direction(layout, &mut r, s_draw));
    let p = corr.patch(&zs)?;
    let tau = 0.5;
    let fd = 1e-4;
    let (zp_, zm_) = (&z + &hd * fd, &z - &hd * fd);

    let x_at = |y: &Seq| -> Result<(Seq, Seq)> {
        let ll = p.local_l(y)?;
        let x = ll.vector_field(tau)?;
        let dx = ll.dx_apply(tau, &x, &hd)?;
        Ok((x, dx))
    };
    // B_C, dB_C, B, dB from one tangent flow
    let b_at = |y: &Seq| -> Result<(Seq, Seq, CVec, CVec)> {
        let out = corr.flow(&p, y, 0.0, 1.0, Tangent::Dir(hd.clone()))?;
        let dir = out.dir.expect("tangent requested");
        let w = out.value;
        let jets = p.jets(&w)?;
        let wp = corr.chart.perp_part(&w);
        let b = fnls_inverse(layout, &(phi_l_from(&jets, &wp) - y));
        let db = fnls_inverse(layout, &(d_phi_l_from(&jets, &corr.chart.s_idx, &wp) * &dir - &hd));
        Ok((&w - y, dir - &hd, b, db))
    };
    let (x0, dx0) = x_at(&z)?;
    let (_, dxp) = x_at(&zp_)?;
    let (_, dxm) = x_at(&zm_)?;
    let (bc0, dbc0, b0, db0) = b_at(&z)?;
    let (_, dbcp, _, dbp) = b_at(&zp_)?;
    let (_, dbcm, _, dbm) = b_at(&zm_)?;
    let g0 = nf.grad_p3(&p, &z)?;
    let gp = nf.grad_p3(&p, &zp_)?;
    let gm = nf.grad_p3(&p, &zm_)?;
    let a = corr.a_full_apply(&p, &z, &wh)?;
    let al = p.a_l_apply(&z, &wh)?;

    let seqs: Vec<(TameOp, CVec)> = vec![
        (TameOp::X, to_complex(&x0)),
        (TameOp::DX, to_complex(&dx0)),
        (TameOp::D2X, to_complex(&((dxp - dxm) / (2.0 * fd)))),
        (TameOp::BC, to_complex(&bc0)),
        (TameOp::DBC, to_complex(&dbc0)),
        (TameOp::D2BC, to_complex(&((dbcp - dbcm) / (2.0 * fd)))),
        (TameOp::B, b0),
        (TameOp::DB, db0),
        (TameOp::D2B, (dbp - dbm) / Complex64::new(2.0 * fd, 0.0)),
        (TameOp::A, a),
        (TameOp::AL, al),
        (TameOp::GradP3, to_complex(&g0)),
        (TameOp::DGradP3, to_complex(&((&gp - &gm) / (2.0 * fd)))),
        (TameOp::D2GradP3, to_complex(&((&gp - &g0 * 2.0 + &gm) / (fd * fd)))),
    ];
    let zp = corr.chart.perp_part(&z);
    let nums = seqs
        .into_iter()
        .map(|(op, v)| (op, sob.iter().map(|&s| sobolev_norm_c(layout, &v, s + op.gain())).collect()))
        .collect();
    let norms = sob
        .iter()
        .map(|&s| TameNorms {
            zp_s: sobolev_norm(layout, &zp, s, Part::Full),
            zp_0: sobolev_norm(layout, &zp, 0, Part::Full),
            h_s: sobolev_norm(layout, &hd, s, Part::Full),
            h_0: sobolev_norm(layout, &hd, 0, Part::Full),
            w_s: sobolev_norm_c(layout, &wh, s),
            w_0: sobolev_norm_c(layout, &wh, 0),
        })
        .collect();
    Ok(TameSample { nums, norms })
}

fn tame(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let kind = cfg.backend.kind;
    let rc = RowCtx::new(ExperimentId::Tame, kind_name(kind), &layout);
    let corr = match cfg.corrector(kind, &layout) {
        Ok(c) => c,
        Err(e) => return Ok(vec![rc.setup_failure("corrector", &e)]),
    };
    let nf = NormalForm::new(&corr)?;
    let batch = cfg.samples_or(200);
    let sob = cfg.sobolev.clone().unwrap_or_else(|| vec![1, 2, 3]);
    let res: Vec<SampleResult<TameSample>> =
        (0..2 * batch).into_par_iter().map(|i| tame_sample(&corr, &nf, cfg.seed, i, &sob).map_err(|e| e.to_string())).collect();
    let (train, test) = res.split_at(batch);
    let fails = Failures::of(&res);
    let mut rows = Vec::new();
    for op in TameOp::ALL {
        for (k, &s) in sob.iter().enumerate() {
            let pts = |b: &[SampleResult<TameSample>]| -> Vec<TamePoint> {
                b.iter()
                    .filter_map(|r| r.as_ref().ok())
                    .map(|t| TamePoint { num: t.nums[&op][k], den: op.denominator(&t.norms[k]) })
                    .collect()
            };
            let q = format!("tame_{}_s{s}", op.name());
            let tol = cfg.tol(&q, 2.0);
            let row = match tame_fit(&pts(train), &pts(test)) {
                Ok(f) => rc.row(f64::NAN, &q, f.excess(), tol, Comparison::Le, Some(6), &fails, format!("C_train = {:.4e}, max test ratio = {:.4e}", f.c_train, f.max_test)),
                Err(e) => rc.row(f64::NAN, &q, f64::NAN, tol, Comparison::Le, Some(6), &fails, e.to_string()),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

fn smoothing(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let cutoffs = cfg.cutoffs.clone().unwrap_or_else(|| vec![8, 16, 32]);
    let sob = cfg.sobolev.clone().unwrap_or_else(|| vec![1, 2, 3]);
    let n = cfg.samples_or(20);
    let frac = cfg.amplitude_or(0.5);
    let kind = cfg.backend.kind;
    let base = cfg.layout()?;
    let label = |l: &ModeLayout| RowCtx::new(ExperimentId::Smoothing, kind_name(kind), l);
    let mut rows = Vec::new();

    // per cutoff: max over samples of the two smoothing ratios, per Sobolev index
    let mut consts: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut fails = Failures::default();
    for &nc in &cutoffs {
        let layout = ModeLayout::new(nc, base.tagged())?;
        let corr = match cfg.corrector(kind, &layout) {
            Ok(c) => c,
            Err(e) => {
                rows.push(label(&layout).setup_failure("corrector", &e));
                continue;
            }
        };
        let res = per_torus(&corr, cfg.seed, n, 5, frac, |p, z, i| {
            let wh = fnls_inverse(&layout, &direction(&layout, &mut rng(cfg.seed, 70_000 + i as u64), 1));
            let b = corr.b_full(p, z)?;
            let a = corr.a_full_apply(p, z, &wh)?;
            let zp = corr.chart.perp_part(z);
            let mut out = Vec::with_capacity(2 * sob.len());
            for &s in &sob {
                let zs = sobolev_norm(&layout, &zp, s, Part::Full);
                out.push(sobolev_norm_c(&layout, &b, s + 1) / (1.0 + zs));
            }
            for &s in &sob {
                let zs = sobolev_norm(&layout, &zp, s, Part::Full);
                let w0 = sobolev_norm_c(&layout, &wh, 0);
                let ws = sobolev_norm_c(&layout, &wh, s);
                out.push(sobolev_norm_c(&layout, &a, s + 1) / (zs * w0 + ws));
            }
            Ok(out)
        });
        let f = Failures::of(&res);
        fails.count += f.count;
        fails.total += f.total;
        if fails.first.is_empty() {
            fails.first = f.first;
        }
        let ok: Vec<&Vec<f64>> = res.iter().filter_map(|r| r.as_ref().ok()).collect();
        let m = sob.len();
        let c = |k: usize| max_of(ok.iter().map(|v| v[k]));
        consts.push((nc, (0..m).map(c).collect(), (0..m).map(|k| c(m + k)).collect()));
    }
    let rc = RowCtx { n: cutoffs.iter().copied().max().unwrap_or(0), ..label(&base) };
    let spread = |v: &[f64]| {
        let (hi, lo) = (max_of(v.iter().copied()), min_of(v.iter().copied()));
        if hi == 0.0 { 1.0 } else { hi / lo }
    };
    for (which, q0) in [(0, "smoothing_B"), (1, "smoothing_A")] {
        for (k, &s) in sob.iter().enumerate() {
            let v: Vec<f64> = consts.iter().map(|(_, b, a)| if which == 0 { b[k] } else { a[k] }).collect();
            let diag = consts.iter().zip(&v).map(|((nc, _, _), c)| format!("N={nc}: {c:.4e}")).collect::<Vec<_>>().join(", ");
            let q = format!("{q0}_s{s}");
            let val = if consts.len() == cutoffs.len() { spread(&v) } else { f64::NAN };
            rows.push(rc.row(frac, &q, val, cfg.tol(&q, 2.0), Comparison::Le, Some(7), &fails, diag));
        }
    }

    // frequency corrections of the perturbative backend at a fixed torus point
    let rcp = RowCtx { n: rc.n, ..RowCtx::new(ExperimentId::Smoothing, "perturbative", &base) };
    let mut spec = cfg.backend.clone();
    spec.kind = BackendKind::Perturbative;
    let amp = cfg.chart.k_amplitude;
    let zs_small = torus_point(&base, cfg.seed, 0, amp);
    let mut corr_max = Vec::new();
    let mut ffail = Failures::default();
    for &nc in &cutoffs {
        ffail.total += 1;
        let r = ModeLayout::new(nc, base.tagged()).and_then(|l| {
            let b = spec.build(&l)?;
            // same tagged coordinates on every cutoff
            let mut zs = Seq::zeros(l.dim());
            for (&src, &dst) in base.s_coords().iter().zip(&l.s_coords()) {
                zs[dst] = zs_small[src];
            }
            let t = b.bk_freqs(&actions_of(&l, &zs));
            Ok(max_of(t.correction.iter().map(|c| c.abs())))
        });
        match r {
            Ok(v) => corr_max.push((nc, v)),
            Err(e) => {
                if ffail.count == 0 {
                    ffail.first = e.to_string();
                }
                ffail.count += 1;
            }
        }
    }
    let vals: Vec<f64> = corr_max.iter().map(|c| c.1).collect();
    let hi = max_of(vals.iter().copied());
    let lo = min_of(vals.iter().copied());
    let variation = if hi == 0.0 { 0.0 } else { (hi - lo) / hi };
    let diag = corr_max.iter().map(|(nc, v)| format!("N={nc}: {v:.6e}")).collect::<Vec<_>>().join(", ");
    rows.push(rcp.row(amp, "frequency_correction_variation", variation, cfg.tol("frequency_correction_variation", 0.1), Comparison::Le, Some(8), &ffail, diag));
    Ok(rows)
}

fn floquet(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let kind = cfg.backend.kind;
    let rc = RowCtx::new(ExperimentId::Floquet, kind_name(kind), &layout);
    let corr = match cfg.corrector(kind, &layout) {
        Ok(c) => c,
        Err(e) => return Ok(vec![rc.setup_failure("corrector", &e)]),
    };
    let nf = NormalForm::new(&corr)?;
    let tori = cfg.samples_or(2);
    let mut modes = layout.perp_modes();
    modes.sort_by_key(|&n| (n.abs(), n));
    modes.truncate(3);
    let jobs: Vec<(usize, i64, i32)> =
        (0..tori).flat_map(|t| modes.iter().flat_map(move |&j| [1, -1].map(|s| (t, j, s)))).collect();
    let res: Vec<SampleResult<f64>> = jobs
        .par_iter()
        .map(|&(t, j, s)| {
            let zs = torus_point(&layout, cfg.seed, t, corr.chart.k_amplitude);
            nf.floquet_residual(&zs, j, s, 64).map_err(|e| e.to_string())
        })
        .collect();
    let fails = Failures::of(&res);
    let v = max_of(res.iter().filter_map(|r| r.as_ref().ok()).copied());
    let modes_s = modes.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
    Ok(vec![rc.row(
        corr.chart.k_amplitude,
        "floquet_residual",
        v,
        cfg.tol("floquet_residual", 1e-6),
        Comparison::Le,
        Some(10),
        &fails,
        format!("{tori} torus points, modes {modes_s}, both signs, 64 times"),
    )])
}

fn zs_crosscheck(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let layout = cfg.layout()?;
    let rc = RowCtx::new(ExperimentId::ZsCrosscheck, "perturbative", &layout);
    let mut rows = Vec::new();
    let one = |x: f64| Complex64::new(x, 0.0);
    let ok = |v: f64| -> [SampleResult<f64>; 1] { [Ok(v)] };

    // zero potential: closed-form fundamental solution and Dirichlet spectrum
    let free = ZsSolver::new(ZsPotential::zero(layout.cutoff()), ZS_STEPS);
    let mut fund = 0.0f64;
    for lam in [one(0.7), Complex64::new(2.3, 0.4), one(-5.1)] {
        for (k, m) in free.fundamental_solution(lam).iter().enumerate() {
            let x = k as f64 / ZS_STEPS as f64;
            let i = Complex64::i();
            fund = fund.max((m[(0, 0)] - (-i * lam * x).exp()).norm());
            fund = fund.max((m[(1, 1)] - (i * lam * x).exp()).norm());
            fund = fund.max(m[(0, 1)].norm()).max(m[(1, 0)].norm());
        }
    }
    rows.push(rc.row(0.0, "zs_free_fundamental", fund, cfg.tol("zs_free_fundamental", 1e-10), Comparison::Le, Some(11), &Failures::of(&ok(fund)), String::new()));
    let (mu, errs) = free.dirichlet_eigenvalues(-3.5, 10.0);
    let expect: Vec<f64> = (-1..=3).map(|j| j as f64 * PI).collect();
    let dev = if mu.len() == expect.len() && errs.is_empty() {
        max_of(mu.iter().zip(&expect).map(|(a, b)| (a - b).abs()))
    } else {
        f64::INFINITY
    };
    rows.push(rc.row(0.0, "zs_free_dirichlet", dev, cfg.tol("zs_free_dirichlet", 1e-10), Comparison::Le, Some(11), &Failures::default(), format!("{} roots found, {} root errors", mu.len(), errs.len())));

    // unit determinant for random potentials
    let dets: Vec<f64> = (0..4u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(cfg.seed, 80_000 + k);
            let mut pot = ZsPotential::zero(4);
            for c in pot.u.iter_mut() {
                *c = Complex64::new(r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3));
            }
            let lam = Complex64::new(r.gen_range(-8.0..8.0), r.gen_range(-1.0..1.0));
            (ZsSolver::new(pot, ZS_STEPS).monodromy(lam).determinant() - 1.0).norm()
        })
        .collect();
    let det = max_of(dets);
    rows.push(rc.row(0.3, "zs_unit_determinant", det, cfg.tol("zs_unit_determinant", 1e-10), Comparison::Le, Some(11), &Failures::default(), "4 random potentials".into()));

    // small-amplitude potential from the perturbative backend
    let amp = cfg.amplitude_or(1e-2);
    let mut spec = cfg.backend.clone();
    spec.kind = BackendKind::Perturbative;
    let backend = match spec.build(&layout) {
        Ok(b) => b,
        Err(e) => {
            rows.push(rc.setup_failure("backend", &e));
            return Ok(rows);
        }
    };
    let mut zs = tagged_sample(&layout, &mut rng(cfg.seed, 40_000), 1.0);
    zs *= amp / sobolev_norm(&layout, &zs, 0, Part::Full);
    let (w, dpsi) = match backend.bk_eval(&zs).and_then(|w| Ok((w, backend.bk_diff(&zs)?))) {
        Ok(x) => x,
        Err(e) => {
            rows.push(rc.setup_failure("backend", &e));
            return Ok(rows);
        }
    };
    let solver = ZsSolver::new(ZsPotential::from_field(&layout, &w), ZS_STEPS);
    let mut modes: Vec<i64> = layout.perp_modes().into_iter().filter(|n| n.abs() <= 3).collect();
    modes.sort_by_key(|&n| (n.abs(), n));
    let per_mode: Vec<SampleResult<[f64; 4]>> = modes
        .par_iter()
        .map(|&j| -> Result<[f64; 4]> {
            let c = j as f64 * PI;
            let (mu, _) = solver.dirichlet_eigenvalues(c - 0.5 * PI, c + 0.5 * PI);
            let mu = mu
                .into_iter()
                .min_by(|a, b| (a - c).abs().total_cmp(&(b - c).abs()))
                .ok_or_else(|| Error::Root(format!("no Dirichlet eigenvalue near {j}π")))?;
            let data = solver.dirichlet_eigenfunctions(mu)?;
            let resid = solver.eigen_residual(&data);
            let (gp, gm) = solver.grad_frak_z(&layout, &data);
            let (c1, c2) = dpsi_nls_columns(&gp, &gm, 1.0, 0.0);
            let b1 = dpsi.column(layout.x_index(j)).into_owned();
            let b2 = dpsi.column(layout.y_index(j)).into_owned();
            let rel = ((&c1 - &b1).norm_squared() + (&c2 - &b2).norm_squared()).sqrt()
                / (b1.norm_squared() + b2.norm_squared()).sqrt();
            let real = reality_defect(&layout, &c1).max(reality_defect(&layout, &c2));
            Ok([resid, rel, real, (mu - c).abs()])
        })
        .map(|r| r.map_err(|e| e.to_string()))
        .collect();
    let fails = Failures::of(&per_mode);
    let modes_s = modes.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
    rows.push(rc.row(amp, "zs_eigen_residual", col_max(&per_mode, 0), cfg.tol("zs_eigen_residual", 1e-8), Comparison::Le, Some(11), &fails, format!("modes {modes_s}")));
    rows.push(rc.row(amp, "zs_column_reality", col_max(&per_mode, 2), cfg.tol("zs_column_reality", 1e-8), Comparison::Le, None, &fails, String::new()));
    let shifts = per_mode.iter().filter_map(|r| r.as_ref().ok()).map(|a| format!("{:.2e}", a[3])).collect::<Vec<_>>().join(" ");
    rows.push(rc.row(
        amp,
        "zs_backend_columns",
        col_max(&per_mode, 1),
        cfg.tol("zs_backend_columns", 5e-2),
        Comparison::Le,
        Some(11),
        &fails,
        format!("stretch check; relative column error, eigenvalue shifts {shifts}"),
    ));
    Ok(rows)
}

/// `max_n |v_n − conj(u_{−n})|`: distance of a function-side vector from `v = ū`.
fn reality_defect(layout: &ModeLayout, w: &CVec) -> f64 {
    let m = layout.n_modes();
    max_of(layout.modes().map(|n| (w[m + layout.slot(n)] - w[layout.slot(-n)].conj()).norm()))
}
