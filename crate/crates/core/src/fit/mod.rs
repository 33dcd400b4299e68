//! Constrained least-squares estimation of the nested model hierarchy,
//! information-criterion ranking, and train/test prediction validation.
//!
//! The positivity and detailed-balance constraints are enforced by
//! reparameterization: rates are optimized in log space, the
//! excitation/relaxation ratio through a logistic transform, so every point
//! the simplex visits maps to a feasible parameter vector.

mod nelder_mead;

pub use nelder_mead::{minimize, NmOptions, NmResult};

use crate::model::{KernelSpec, ModelParams};
use crate::qstate::{bloch_to_density_unchecked, trace_distance};
use crate::recon::BlochSeries;
use crate::solver::Propagator;
use crate::{substream, Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// The nested model hierarchy: Lindblad (M0), exponential-kernel (M1),
/// second-order rational kernel (M2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    M0,
    M1,
    M2,
}

impl ModelId {
    pub const ALL: [ModelId; 3] = [ModelId::M0, ModelId::M1, ModelId::M2];

    /// Number of free parameters: 4, 5 and 7.
    pub fn n_params(&self) -> usize {
        match self {
            ModelId::M0 => 4,
            ModelId::M1 => 5,
            ModelId::M2 => 7,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "M0" | "m0" => Ok(ModelId::M0),
            "M1" | "m1" => Ok(ModelId::M1),
            "M2" | "m2" => Ok(ModelId::M2),
            other => Err(Error::Validation(format!("unknown model id {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelId::M0 => "M0",
            ModelId::M1 => "M1",
            ModelId::M2 => "M2",
        }
    }
}

/// Configuration of one fitting run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelId,
    /// Number of independent local searches.
    pub multistart: u32,
    /// Relative chi-square change at which a search stops.
    pub tolerance: f64,
    pub seed: u64,
    pub max_iterations: u64,
    /// Worker threads for the multistart pool; 1 runs sequentially. The
    /// result is independent of the schedule.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_jobs() -> usize {
    1
}

impl FitConfig {
    pub fn new(model: ModelId, seed: u64) -> Self {
        Self {
            model,
            multistart: 16,
            tolerance: 1e-10,
            seed,
            max_iterations: 20_000,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.multistart < 1 {
            return Err(Error::Validation("multistart must be at least 1".into()));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::Validation("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one local search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: u32,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Per-parameter bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Best-fit result for one model on one series (or a joint set of series).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub theta: ModelParams,
    pub chi2: f64,
    pub n_params: usize,
    /// chi^2 + sum_jk ln(2 pi sigma_jk^2) + 2p, the Gaussian-likelihood
    /// information criterion. Comparable only across fits of one series.
    pub aic: f64,
    pub converged: bool,
    /// Labels of the fitted series.
    pub prep_labels: Vec<String>,
    /// Fingerprint of the fitted data; ranking requires it to match.
    pub series_fingerprint: u64,
    pub starts: Vec<StartRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<Vec<ParamInterval>>,
}

/// chi^2(theta) = sum_jk (v_hat_jk - v_jk(theta))^2 / sigma_jk^2, the
/// prediction starting from the series' preparation state.
pub fn chi_squared(theta: &ModelParams, series: &BlochSeries) -> Result<f64> {
    series.validate()?;
    let prop = Propagator::build(theta)?;
    let mut total = 0.0;
    for p in &series.points {
        let v = prop.propagate_bloch(&series.prep, p.t);
        let res = [
            (p.v.vx - v.vx) / p.sigma[0],
            (p.v.vy - v.vy) / p.sigma[1],
            (p.v.vz - v.vz) / p.sigma[2],
        ];
        for r in res {
            total += r * r;
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical(
            "chi-square evaluated to a non-finite value".into(),
        ));
    }
    Ok(total)
}

/// Joint chi-square over several series sharing one parameter vector.
pub fn chi_squared_set(theta: &ModelParams, set: &[BlochSeries]) -> Result<f64> {
    let mut total = 0.0;
    for s in set {
        total += chi_squared(theta, s)?;
    }
    Ok(total)
}

/// The sigma-dependent additive constant of -2 ln L for Gaussian residuals.
fn log_norm_constant(series: &BlochSeries) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    series
        .points
        .iter()
        .map(|p| p.sigma.iter().map(|s| (tau * s * s).ln()).sum::<f64>())
        .sum()
}

// ---------------------------------------------------------------------------
// Reparameterization

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unpack(model: ModelId, u: &[f64]) -> ModelParams {
    let rate = |x: f64| x.exp().clamp(1e-30, 1e30);
    let omega_z = u[0];
    let gamma_z = rate(u[1]);
    let gamma_sum = rate(u[2]);
    let gamma_ratio = sigmoid(u[3]).clamp(1e-15, 1.0 - 1e-9);
    let gamma_minus = gamma_sum / (1.0 + gamma_ratio);
    let gamma_plus = gamma_sum - gamma_minus;
    let kernel = match model {
        ModelId::M0 => KernelSpec::Delta,
        ModelId::M1 => KernelSpec::Exp { b0: rate(u[4]) },
        ModelId::M2 => KernelSpec::Rational2 {
            a0: rate(u[4]),
            b0: rate(u[5]),
            b1: rate(u[6]),
        },
    };
    ModelParams {
        omega_z,
        gamma_z,
        gamma_plus,
        gamma_minus,
        kernel,
    }
}

fn pack(theta: &ModelParams) -> Vec<f64> {
    let mut u = vec![
        theta.omega_z,
        theta.gamma_z.ln(),
        theta.gamma_sum().ln(),
        logit(theta.gamma_ratio()),
    ];
    match theta.kernel {
        KernelSpec::Delta => {}
        KernelSpec::Exp { b0 } => u.push(b0.max(1e-12).ln()),
        KernelSpec::Rational2 { a0, b0, b1 } => {
            u.push(a0.max(1e-12).ln());
            u.push(b0.max(1e-12).ln());
            u.push(b1.max(1e-12).ln());
        }
    }
    u
}

// ---------------------------------------------------------------------------
// Start generation

/// Coarse spectral estimate of the oscillation frequency from the x
/// component, on the (generally non-uniform) sample grid.
fn periodogram_peak(series: &BlochSeries) -> f64 {
    let n = series.points.len() as f64;
    let mean = series.points.iter().map(|p| p.v.vx).sum::<f64>() / n;
    let mut best = (0.0f64, 0.0f64);
    let mut w = 0.02;
    while w <= 4.0 {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for p in &series.points {
            let x = p.v.vx - mean;
            re += x * (w * p.t).cos();
            im += x * (w * p.t).sin();
        }
        let power = re * re + im * im;
        if power > best.1 {
            best = (w, power);
        }
        w += 0.02;
    }
    best.0
}

/// Crude single-exponential estimates of the relaxation channel: returns
/// (gamma_sum, gamma_ratio) from the z component.
fn z_channel_guess(series: &BlochSeries) -> (f64, f64) {
    let vz0 = series.prep.vz;
    let mut best = (0.01f64, 0.2f64, f64::INFINITY);
    for k in 0..14 {
        let gs = 10f64.powf(-3.0 + 3.0 * k as f64 / 13.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for p in &series.points {
            let e = (-gs * p.t).exp();
            num += (p.v.vz - vz0 * e) * (1.0 - e);
            den += (1.0 - e) * (1.0 - e);
        }
        if den < 1e-12 {
            continue;
        }
        let c = (num / den).clamp(0.02, 0.96);
        let resid: f64 = series
            .points
            .iter()
            .map(|p| {
                let e = (-gs * p.t).exp();
                (p.v.vz - vz0 * e - c * (1.0 - e)).powi(2)
            })
            .sum();
        if resid < best.2 {
            let ratio = ((1.0 - c) / (1.0 + c)).clamp(0.02, 0.9);
            best = (gs, ratio, resid);
        }
    }
    (best.0, best.1)
}

/// Decay-rate estimate of the transverse amplitude.
fn transverse_decay_guess(series: &BlochSeries) -> f64 {
    let pts: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter_map(|p| {
            let r = (p.v.vx * p.v.vx + p.v.vy * p.v.vy).sqrt();
            (r > 0.02).then(|| (p.t, r.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return 0.05;
    }
    let n = pts.len() as f64;
    let (st, sr) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, mr) = (st / n, sr / n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, r) in &pts {
        num += (t - mt) * (r - mr);
        den += (t - mt) * (t - mt);
    }
    if den < 1e-12 {
        return 0.05;
    }
    (-(num / den)).clamp(1e-4, 2.0)
}

fn starts_for(set: &[BlochSeries], config: &FitConfig, extra: &[ModelParams]) -> Vec<Vec<f64>> {
    let dim = config.model.n_params();
    // Frequency and coherence-decay guesses come from the series with the
    // strongest transverse signal, the relaxation guess from the one
    // sweeping the widest z range.
    let transverse = |s: &BlochSeries| {
        s.points
            .iter()
            .map(|p| p.v.vx.hypot(p.v.vy))
            .fold(0.0f64, f64::max)
    };
    let zrange = |s: &BlochSeries| {
        let (lo, hi) = s
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
                (a.0.min(p.v.vz), a.1.max(p.v.vz))
            });
        hi - lo
    };
    let coh = set
        .iter()
        .max_by(|a, b| transverse(a).total_cmp(&transverse(b)))
        .expect("nonempty set");
    let pop = set
        .iter()
        .max_by(|a, b| zrange(a).total_cmp(&zrange(b)))
        .expect("nonempty set");

    let omega_hat = periodogram_peak(coh);
    let (gs_hat, gr_hat) = z_channel_guess(pop);
    let decay = transverse_decay_guess(coh);
    let gz_hat = ((decay - 0.5 * gs_hat) / 2.0).clamp(1e-4, 1.0);

    let mut heuristic = vec![omega_hat, gz_hat.ln(), gs_hat.ln(), logit(gr_hat)];
    heuristic.resize(dim, (0.1f64).ln());
    let mut flipped = heuristic.clone();
    flipped[0] = -omega_hat;

    let mut starts = vec![heuristic, flipped];
    for theta in extra {
        starts.push(pack(theta));
    }

    let remaining = (config.multistart as usize).saturating_sub(starts.len());
    if remaining > 0 {
        // Latin hypercube over decade ranges: rates 1e-4..1, omega +-2.
        let mut rng = ChaCha12Rng::seed_from_u64(substream(config.seed, 0x5ba6));
        let lo_hi: Vec<(f64, f64)> = (0..dim)
            .map(|d| match d {
                0 => (-2.0, 2.0),
                3 => (logit(0.05), logit(0.95)),
                _ => ((1e-4f64).ln(), 0.0),
            })
            .collect();
        let strata: Vec<Vec<usize>> = (0..dim)
            .map(|_| {
                let mut idx: Vec<usize> = (0..remaining).collect();
                idx.shuffle(&mut rng);
                idx
            })
            .collect();
        let mut rows = vec![Vec::with_capacity(dim); remaining];
        for col in &strata {
            for (row, &v) in rows.iter_mut().zip(col) {
                row.push(v);
            }
        }
        for row in rows {
            let x: Vec<f64> = row
                .iter()
                .zip(&lo_hi)
                .map(|(&cell, &(lo, hi))| {
                    lo + (hi - lo) * (cell as f64 + rng.gen::<f64>()) / remaining as f64
                })
                .collect();
            starts.push(x);
        }
    }
    starts.truncate((config.multistart as usize).max(2 + extra.len()));
    starts
}

// ---------------------------------------------------------------------------
// Fitting

/// Fits one model to a set of series sharing the parameter vector, by
/// multistart simplex search. Seeds two data-driven starts (periodogram
/// frequency, both signs) and fills the rest by a deterministic Latin
/// hypercube; `extra` adds caller-supplied warm starts.
pub fn fit_set_with_starts(
    set: &[BlochSeries],
    config: &FitConfig,
    extra: &[ModelParams],
) -> Result<FitResult> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::Validation("no series to fit".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in set {
        s.validate()?;
        if !seen.insert(s.prep_label.clone()) {
            return Err(Error::Validation(format!(
                "duplicate series label {:?} in fitting set",
                s.prep_label
            )));
        }
    }
    let p = config.model.n_params();
    let n_points: usize = set.iter().map(|s| s.points.len()).sum();
    if n_points < p + 1 {
        return Err(Error::Validation(format!(
            "set has {} points; fitting {} needs at least {}",
            n_points,
            config.model.name(),
            p + 1
        )));
    }
    let starts = starts_for(set, config, extra);

    let objective = |u: &[f64]| -> f64 {
        let theta = unpack(config.model, u);
        debug_assert!(
            theta.validate().is_ok(),
            "reparameterization left the feasible set"
        );
        chi_squared_set(&theta, set).unwrap_or(f64::INFINITY)
    };
    let nm = NmOptions {
        tolerance: config.tolerance,
        max_iterations: config.max_iterations,
        ..Default::default()
    };

    let run_start = |(i, x0): (usize, &Vec<f64>)| -> (StartRecord, Vec<f64>) {
        let initial = objective(x0);
        let r = minimize(objective, x0, &nm);
        (
            StartRecord {
                index: i as u32,
                initial_chi2: initial,
                final_chi2: r.fx,
                iterations: r.iterations,
                converged: r.converged,
            },
            r.x,
        )
    };

    let outcomes: Vec<(StartRecord, Vec<f64>)> = if config.jobs > 1 {
        let mut slots: Vec<Option<(StartRecord, Vec<f64>)>> = vec![None; starts.len()];
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots_mutex = std::sync::Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..config.jobs.min(starts.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= starts.len() {
                        break;
                    }
                    let out = run_start((i, &starts[i]));
                    slots_mutex.lock().unwrap()[i] = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every start ran"))
            .collect()
    } else {
        starts.iter().enumerate().map(run_start).collect()
    };

    let best = outcomes
        .iter()
        .min_by(|a, b| a.0.final_chi2.total_cmp(&b.0.final_chi2))
        .expect("at least one start");
    let theta = unpack(config.model, &best.1);
    let chi2 = best.0.final_chi2;
    let converged = chi2.is_finite() && outcomes.iter().any(|o| o.0.converged);
    let lognorm: f64 = set.iter().map(log_norm_constant).sum();
    let aic = chi2 + lognorm + 2.0 * p as f64;

    // Monotone improvement over every start.
    debug_assert!(outcomes.iter().all(|o| chi2 <= o.0.initial_chi2 + 1e-9));

    Ok(FitResult {
        model: config.model,
        theta,
        chi2,
        n_params: p,
        aic,
        converged,
        prep_labels: set.iter().map(|s| s.prep_label.clone()).collect(),
        series_fingerprint: set_fingerprint(set),
        starts: outcomes.into_iter().map(|o| o.0).collect(),
        ci: None,
    })
}

fn set_fingerprint(set: &[BlochSeries]) -> u64 {
    let mut bytes = Vec::with_capacity(8 * set.len());
    for s in set {
        bytes.extend_from_slice(&s.fingerprint().to_le_bytes());
    }
    crate::fingerprint(&bytes)
}

/// Fits one model on a single series with caller-supplied warm starts.
pub fn fit_model_with_starts(
    series: &BlochSeries,
    config: &FitConfig,
    extra: &[ModelParams],
) -> Result<FitResult> {
    fit_set_with_starts(std::slice::from_ref(series), config, extra)
}

/// Fits one model on a single series with the default start set.
pub fn fit_model(series: &BlochSeries, config: &FitConfig) -> Result<FitResult> {
    fit_set_with_starts(std::slice::from_ref(series), config, &[])
}

/// Fits several models on one series, warm-starting each kernel model
/// from its simpler predecessor (the hierarchy is nested: the second-order
/// kernel reduces to the exponential one as a0, b0 -> 0).
pub fn fit_models(
    series: &BlochSeries,
    base: &FitConfig,
    models: &[ModelId],
) -> Result<Vec<FitResult>> {
    fit_models_set(std::slice::from_ref(series), base, models)
}

/// Fits several models on a joint series set with the same warm-start
/// chaining as [`fit_models`].
pub fn fit_models_set(
    set: &[BlochSeries],
    base: &FitConfig,
    models: &[ModelId],
) -> Result<Vec<FitResult>> {
    let mut results: Vec<FitResult> = Vec::with_capacity(models.len());
    for &model in models {
        let config = FitConfig { model, ..*base };
        let mut extra = Vec::new();
        match model {
            ModelId::M0 => {}
            ModelId::M1 => {
                if let Some(m0) = results.iter().find(|r| r.model == ModelId::M0) {
                    for b0 in [1.0, 0.05] {
                        extra.push(ModelParams {
                            kernel: KernelSpec::Exp { b0 },
                            ..m0.theta
                        });
                    }
                }
            }
            ModelId::M2 => {
                if let Some(m1) = results.iter().find(|r| r.model == ModelId::M1) {
                    if let KernelSpec::Exp { b0 } = m1.theta.kernel {
                        extra.push(ModelParams {
                            kernel: KernelSpec::Rational2 {
                                a0: 1e-8,
                                b0: 1e-8,
                                b1: b0,
                            },
                            ..m1.theta
                        });
                    }
                }
                if let Some(m0) = results.iter().find(|r| r.model == ModelId::M0) {
                    extra.push(ModelParams {
                        kernel: KernelSpec::Rational2 {
                            a0: 0.1,
                            b0: 0.01,
                            b1: 0.1,
                        },
                        ..m0.theta
                    });
                }
            }
        }
        results.push(fit_set_with_starts(set, &config, &extra)?);
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Ranking

/// Empirical-support bands for AIC differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportBand {
    /// Delta within [0, 2].
    Substantial,
    /// Delta within [4, 7].
    ConsiderablyLess,
    /// Delta above 10.
    EssentiallyNone,
    /// Gaps of the heuristic table.
    Unclassified,
}

impl SupportBand {
    fn from_delta(d: f64) -> Self {
        if d <= 2.0 {
            SupportBand::Substantial
        } else if (4.0..=7.0).contains(&d) {
            SupportBand::ConsiderablyLess
        } else if d > 10.0 {
            SupportBand::EssentiallyNone
        } else {
            SupportBand::Unclassified
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankEntry {
    pub model: ModelId,
    pub n_params: usize,
    pub aic: f64,
    pub delta: f64,
    pub support: SupportBand,
}

/// Orders fits of one series by ascending AIC and reports the differences
/// Delta_i = AIC_i - min AIC. Ties within 1e-9 prefer fewer parameters.
pub fn aic_rank(results: &[FitResult]) -> Result<Vec<RankEntry>> {
    if results.is_empty() {
        return Err(Error::Validation("nothing to rank".into()));
    }
    let fp = results[0].series_fingerprint;
    if results.iter().any(|r| r.series_fingerprint != fp) {
        return Err(Error::Validation(
            "fits were produced on different series; ranking is not meaningful".into(),
        ));
    }
    let mut order: Vec<&FitResult> = results.iter().collect();
    order.sort_by(|a, b| {
        if (a.aic - b.aic).abs() <= 1e-9 {
            a.n_params.cmp(&b.n_params)
        } else {
            a.aic.total_cmp(&b.aic)
        }
    });
    let best = order[0].aic;
    Ok(order
        .into_iter()
        .map(|r| {
            let delta = r.aic - best;
            RankEntry {
                model: r.model,
                n_params: r.n_params,
                aic: r.aic,
                delta,
                support: SupportBand::from_delta(delta),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Prediction validation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PercentileReport {
    pub model: ModelId,
    pub n_series: usize,
    pub n_points: usize,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

impl PercentileReport {
    pub fn csv_header() -> &'static str {
        "model,n_series,n_points,p5,p50,p95\n"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.12e},{:.12e},{:.12e}\n",
            self.model.name(),
            self.n_series,
            self.n_points,
            self.p5,
            self.p50,
            self.p95
        )
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Trace-distance percentiles between observed and predicted states over
/// held-out series, pooled across times and series. No refitting occurs;
/// the test series must be disjoint from the fitting series by label.
pub fn validate_predictions(
    fit: &FitResult,
    test_series: &[BlochSeries],
) -> Result<PercentileReport> {
    if test_series.is_empty() {
        return Err(Error::Validation("no test series supplied".into()));
    }
    for s in test_series {
        s.validate()?;
        if fit.prep_labels.contains(&s.prep_label) {
            return Err(Error::Validation(format!(
                "test series {:?} coincides with a fitting series",
                s.prep_label
            )));
        }
    }
    let prop = Propagator::build(&fit.theta)?;
    let mut distances = Vec::new();
    for s in test_series {
        for p in &s.points {
            let predicted = prop.propagate_bloch(&s.prep, p.t);
            let d = trace_distance(
                &bloch_to_density_unchecked(&p.v),
                &bloch_to_density_unchecked(&predicted),
            );
            distances.push(d);
        }
    }
    distances.sort_by(f64::total_cmp);
    Ok(PercentileReport {
        model: fit.model,
        n_series: test_series.len(),
        n_points: distances.len(),
        p5: percentile(&distances, 5.0),
        p50: percentile(&distances, 50.0),
        p95: percentile(&distances, 95.0),
    })
}

// ---------------------------------------------------------------------------
// Bootstrap confidence intervals

fn param_list(theta: &ModelParams) -> Vec<(&'static str, f64)> {
    let mut out = vec![
        ("omega_z", theta.omega_z),
        ("gamma_z", theta.gamma_z),
        ("gamma_plus", theta.gamma_plus),
        ("gamma_minus", theta.gamma_minus),
    ];
    match theta.kernel {
        KernelSpec::Delta => {}
        KernelSpec::Exp { b0 } => out.push(("kernel_b0", b0)),
        KernelSpec::Rational2 { a0, b0, b1 } => {
            out.push(("kernel_a0", a0));
            out.push(("kernel_b0", b0));
            out.push(("kernel_b1", b1));
        }
    }
    out
}

/// Percentile bootstrap intervals on the fitted parameters: the series is
/// resampled parametrically from its own per-point deviations, refit from
/// the incumbent, and per-parameter quantiles reported.
pub fn bootstrap_ci(
    series: &BlochSeries,
    config: &FitConfig,
    fit: &FitResult,
    n_boot: u32,
    level: f64,
) -> Result<Vec<ParamInterval>> {
    if !(0.5..1.0).contains(&level) {
        return Err(Error::Validation(format!(
            "confidence level {level} outside [0.5, 1)"
        )));
    }
    if n_boot < 8 {
        return Err(Error::Validation(
            "bootstrap needs at least 8 refits".into(),
        ));
    }
    let names: Vec<&'static str> = param_list(&fit.theta).iter().map(|p| p.0).collect();
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_boot as usize); names.len()];

    let refit_config = FitConfig {
        multistart: 2,
        ..*config
    };
    for b in 0..n_boot {
        let mut rng = ChaCha12Rng::seed_from_u64(substream(config.seed, 0xb007 + b as u64));
        let mut resampled = series.clone();
        for p in resampled.points.iter_mut() {
            let n: [f64; 3] = [
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
            ];
            p.v.vx += p.sigma[0] * n[0];
            p.v.vy += p.sigma[1] * n[1];
            p.v.vz += p.sigma[2] * n[2];
        }
        let refit = fit_model_with_starts(&resampled, &refit_config, &[fit.theta])?;
        for (k, (_, value)) in param_list(&refit.theta).into_iter().enumerate() {
            samples[k].push(value);
        }
    }

    let alpha = (1.0 - level) / 2.0;
    let estimates = param_list(&fit.theta);
    Ok(names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut xs = samples[k].clone();
            xs.sort_by(f64::total_cmp);
            ParamInterval {
                name: (*name).to_string(),
                estimate: estimates[k].1,
                lower: percentile(&xs, 100.0 * alpha),
                upper: percentile(&xs, 100.0 * (1.0 - alpha)),
                level,
            }
        })
        .collect())
}
