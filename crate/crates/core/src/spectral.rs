//! Spectral measures of observables under the flow.
//!
//! Conventions: `C(t) = <f o phi_t, g>` and `C_ff(t) = int e^{2 pi i xi t} dsigma_f(xi)`.
//! The twisted norm `|| int_0^T e^{-2 pi i lambda t} f o phi_t dt ||` then
//! probes `sigma_f` near `lambda`, and
//! `sigma_f([lambda - r, lambda + r]) <= 8 r^2 ||.||^2` at `T = 1/(2r)` is
//! the mass bound implemented here.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{linear_fit, mean_stderr, LinearFit};
use crate::observables::{cis, CellwiseObservable};
use crate::rng::stream_rng;
use crate::surface::{SurfacePoint, ZipperedRectangles};
use crate::twisted::{orbit_prefixes, twisted_integral_direct, RenormalizedIntegrator};

/// Constant in front of `r^2 ||.||^2` in the mass bound.
pub const MASS_CONSTANT: f64 = 8.0;

const MAX_RESAMPLES: usize = 1000;

/// Mean-square estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSquare {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Anything that can produce `E |int_0^T e^{-2 pi i lambda t} X_t dt|^2`.
pub trait SpectralSource {
    fn twisted_mean_square(&self, lambda: f64, t: f64, n_samples: usize, seed: u64) -> Result<MeanSquare>;
}

/// An observable on a surface, sampled over start points stratified by
/// rectangle with sample counts proportional to area.
pub struct SurfaceSource<'a> {
    pub surface: &'a ZipperedRectangles,
    pub f: &'a CellwiseObservable,
}

impl SpectralSource for SurfaceSource<'_> {
    fn twisted_mean_square(&self, lambda: f64, t: f64, n_samples: usize, seed: u64) -> Result<MeanSquare> {
        let s = self.surface;
        let mut fast = if self.f.is_horizontally_constant() { Some(RenormalizedIntegrator::new(s, self.f, -lambda)?) } else { None };
        let mut rng = stream_rng(seed, 0);
        let mut total = 0.0;
        let mut var = 0.0;
        let mut used = 0;
        for j in 0..s.d() {
            let w = s.rect_area(j) / s.area();
            let n = ((n_samples as f64 * w).round() as usize).max(2);
            let mut vals = Vec::with_capacity(n);
            let mut misses = 0;
            while vals.len() < n {
                let pt = s.sample_in_rect(j, &mut rng);
                let res = match fast.as_mut() {
                    Some(r) => r.integrate(&pt, t),
                    None => twisted_integral_direct(s, self.f, -lambda, &pt, t),
                };
                match res {
                    Ok(tr) => vals.push(tr.value.norm_sqr()),
                    Err(Error::SingularityHit { .. }) if misses < MAX_RESAMPLES => misses += 1,
                    Err(e) => return Err(e),
                }
            }
            let (m, se) = mean_stderr(&vals);
            total += w * m;
            var += (w * se).powi(2);
            used += n;
        }
        Ok(MeanSquare { value: total * s.area(), stderr: var.sqrt() * s.area(), n_samples: used })
    }
}

/// Random telegraph signal: `X_t = +-1` flipping at Poisson rate `rate`,
/// started from its stationary law. Its correlation is `e^{-2 rate |t|}` and
/// its spectral density the Lorentzian
/// `4 rate / (4 rate^2 + 4 pi^2 xi^2)`.
pub struct TelegraphSource {
    pub rate: f64,
}

impl TelegraphSource {
    pub fn density(&self, xi: f64) -> f64 {
        let g = 2.0 * self.rate;
        2.0 * g / (g * g + 4.0 * PI * PI * xi * xi)
    }
}

impl SpectralSource for TelegraphSource {
    fn twisted_mean_square(&self, lambda: f64, t: f64, n_samples: usize, seed: u64) -> Result<MeanSquare> {
        let mut rng = stream_rng(seed, 0);
        let vals: Vec<f64> = (0..n_samples)
            .map(|_| {
                let mut sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut at = 0.0;
                let mut acc = Complex64::new(0.0, 0.0);
                while at < t {
                    let u: f64 = rng.random();
                    let next = (at - (1.0 - u).ln() / self.rate).min(t);
                    acc += sign * cis(-lambda * at) * crate::observables::phase_integral(-lambda, next - at);
                    at = next;
                    sign = -sign;
                }
                acc.norm_sqr()
            })
            .collect();
        let (m, se) = mean_stderr(&vals);
        Ok(MeanSquare { value: m, stderr: se, n_samples })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// `|| int_0^T e^{-2 pi i lambda t} f o phi_t dt ||_{L^2}` by Monte Carlo.
pub fn l2_twisted_norm(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<L2Estimate> {
    l2_of(&SurfaceSource { surface: s, f }, lambda, t, n_samples, seed)
}

fn l2_of(src: &dyn SpectralSource, lambda: f64, t: f64, n_samples: usize, seed: u64) -> Result<L2Estimate> {
    if n_samples < 100 {
        return Err(Error::InvalidArgument("need at least 100 samples".into()));
    }
    if !lambda.is_finite() || !t.is_finite() {
        return Err(Error::NonFiniteInput("l2 input"));
    }
    let ms = src.twisted_mean_square(lambda, t, n_samples, seed)?;
    let value = ms.value.max(0.0).sqrt();
    let stderr = if value > 0.0 { ms.stderr / (2.0 * value) } else { ms.stderr.sqrt() };
    Ok(L2Estimate { value, stderr, n_samples: ms.n_samples })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub lambda: f64,
    pub r: f64,
    pub mass_upper: f64,
    /// Standard error of `mass_upper`.
    pub stderr: f64,
    pub l2_twisted: f64,
    pub n_samples: usize,
    pub t_used: f64,
}

pub fn mass_bound(r: f64, l2: f64) -> f64 {
    MASS_CONSTANT * r * r * l2 * l2
}

pub fn spectral_mass_upper(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    mass_upper_of(&SurfaceSource { surface: s, f }, lambda, r, n_samples, seed)
}

pub fn mass_upper_of(src: &dyn SpectralSource, lambda: f64, r: f64, n_samples: usize, seed: u64) -> Result<SpectralEstimate> {
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::InvalidArgument(format!("r = {r} is outside (0, 1/2]")));
    }
    let t = 1.0 / (2.0 * r);
    if n_samples < 100 {
        return Err(Error::InvalidArgument("need at least 100 samples".into()));
    }
    let ms = src.twisted_mean_square(lambda, t, n_samples, seed)?;
    let l2 = ms.value.max(0.0).sqrt();
    Ok(SpectralEstimate {
        lambda,
        r,
        mass_upper: mass_bound(r, l2),
        stderr: MASS_CONSTANT * r * r * ms.stderr,
        l2_twisted: l2,
        n_samples: ms.n_samples,
        t_used: t,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDimension {
    pub slope: f64,
    pub stderr: f64,
    pub band: (f64, f64),
    pub r_squared: f64,
    pub estimates: Vec<SpectralEstimate>,
}

pub fn local_dimension(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    r_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<LocalDimension> {
    local_dimension_of(&SurfaceSource { surface: s, f }, lambda, r_grid, n_samples, seed)
}

/// Slope of `log mass_upper` against `log r`.
pub fn local_dimension_of(src: &dyn SpectralSource, lambda: f64, r_grid: &[f64], n_samples: usize, seed: u64) -> Result<LocalDimension> {
    let lo = r_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r_grid.iter().copied().fold(0.0, f64::max);
    if r_grid.len() < 6 || hi / lo < 100.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument("r grid needs at least 6 points spanning two decades".into()));
    }
    let estimates = r_grid
        .iter()
        .enumerate()
        .map(|(i, &r)| mass_upper_of(src, lambda, r, n_samples, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    if estimates.iter().any(|e| e.mass_upper <= 0.0) {
        return Err(Error::DegenerateData("zero mass bound".into()));
    }
    let xs: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.mass_upper.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(LocalDimension { slope: fit.slope, stderr: fit.slope_stderr, band: fit.slope_interval(0.95), r_squared: fit.r_squared, estimates })
}

/// How correlations are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Base points, jittered-stratified along the transversal.
    pub n_base: usize,
    /// Time step of the correlation grid.
    pub dt: f64,
    /// Independent groups the base points are dealt into.
    pub groups: usize,
    pub seed: u64,
    /// Upper bound on `n_base * (number of grid times)`.
    pub max_evaluations: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { n_base: 256, dt: 0.25, groups: 8, seed: 0, max_evaluations: 2_000_000_000 }
    }
}

/// `C(k dt)` for `k = 0..=K`, estimated separately on each group of base
/// points.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSamples {
    pub dt: f64,
    pub groups: Vec<Vec<Complex64>>,
}

impl CorrelationSamples {
    pub fn len(&self) -> usize {
        self.groups[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(&self) -> Vec<Complex64> {
        let g = self.groups.len() as f64;
        (0..self.len()).map(|k| self.groups.iter().map(|c| c[k]).sum::<Complex64>() / g).collect()
    }

    /// Unbiased estimate of `|C|^2`: the product of the means over two
    /// disjoint halves of the groups.
    pub fn cross_square(&self) -> Vec<f64> {
        let half = self.groups.len() / 2;
        let mean_of = |gs: &[Vec<Complex64>], k: usize| gs.iter().map(|c| c[k]).sum::<Complex64>() / gs.len() as f64;
        (0..self.len()).map(|k| (mean_of(&self.groups[..half], k) * mean_of(&self.groups[half..], k).conj()).re).collect()
    }
}

/// `<f o phi_t, g>` on the grid `t = k dt`, `k = 0..=K`. The vertical
/// integral in each rectangle is exact; only the base coordinate is
/// sampled.
pub fn correlation_samples(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    g: &CellwiseObservable,
    t_max: f64,
    q: &QuadratureSpec,
) -> Result<CorrelationSamples> {
    f.validate_for(s)?;
    g.validate_for(s)?;
    if q.dt.is_nan() || q.dt <= 0.0 || !t_max.is_finite() || t_max < 0.0 {
        return Err(Error::InvalidArgument("bad correlation grid".into()));
    }
    if q.groups < 2 || q.n_base < q.groups {
        return Err(Error::InvalidArgument("need at least two groups with one base point each".into()));
    }
    let k_max = (t_max / q.dt).ceil() as usize;
    let required = q.n_base as u64 * (k_max as u64 + 1);
    if required > q.max_evaluations {
        return Err(Error::QuadratureBudgetExceeded { required, budget: q.max_evaluations });
    }
    let grid: Vec<f64> = (0..=k_max).map(|k| k as f64 * q.dt).collect();
    let total = s.iet().total_length();
    let mut rng = stream_rng(q.seed, 0);
    let mut groups = vec![vec![Complex64::new(0.0, 0.0); k_max + 1]; q.groups];
    let mut counts = vec![0usize; q.groups];
    let mut i = 0usize;
    let mut misses = 0usize;
    while i < q.n_base {
        let x = (i as f64 + rng.random::<f64>()) * total / q.n_base as f64;
        let Ok(base) = s.base_point(x) else {
            misses += 1;
            if misses > MAX_RESAMPLES {
                return Err(Error::SingularityHit { time: 0.0 });
            }
            continue;
        };
        match base_contribution(s, f, g, &base, &grid) {
            Ok(c) => {
                let gi = i % q.groups;
                for (acc, v) in groups[gi].iter_mut().zip(c) {
                    *acc += v;
                }
                counts[gi] += 1;
                i += 1;
            }
            Err(Error::SingularityHit { .. }) if misses < MAX_RESAMPLES => misses += 1,
            Err(e) => return Err(e),
        }
    }
    for (grp, &n) in groups.iter_mut().zip(&counts) {
        let w = total / n as f64;
        for v in grp.iter_mut() {
            *v *= w;
        }
    }
    Ok(CorrelationSamples { dt: q.dt, groups })
}

/// `int_0^{h_j} f(phi_{t+y} b) conj(g(b + y)) dy` for a base point `b` of
/// rectangle `j`, at every grid time.
fn base_contribution(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    g: &CellwiseObservable,
    base: &SurfacePoint,
    grid: &[f64],
) -> Result<Vec<Complex64>> {
    let j = base.rect;
    let (l, h) = (s.lengths()[j], s.heights()[j]);
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    // merge the grid with its shift by h, remembering where each lands
    let mut times = Vec::with_capacity(2 * grid.len());
    let (mut at, mut shifted) = (vec![0; grid.len()], vec![0; grid.len()]);
    let (mut a, mut b) = (0, 0);
    while a < grid.len() || b < grid.len() {
        if b == grid.len() || (a < grid.len() && grid[a] <= grid[b] + h) {
            at[a] = times.len();
            times.push(grid[a]);
            a += 1;
        } else {
            shifted[b] = times.len();
            times.push(grid[b] + h);
            b += 1;
        }
    }
    let mut by_n: Vec<(i64, Complex64)> = Vec::new();
    for term in g.terms(j) {
        let w = term.c.conj() * cis(-(term.m as f64) * base.x / l);
        match by_n.iter_mut().find(|(n, _)| *n == term.n) {
            Some((_, acc)) => *acc += w,
            None => by_n.push((term.n, w)),
        }
    }
    for (n, weight) in by_n {
        let p = orbit_prefixes(s, f, -(n as f64) / h, base, 0.0, &times)?;
        for (k, &t) in grid.iter().enumerate() {
            let window = p.values[shifted[k]] - p.values[at[k]];
            let phase = if n == 0 { Complex64::new(1.0, 0.0) } else { cis(n as f64 * t / h) };
            out[k] += weight * phase * window;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub t_grid: Vec<f64>,
    /// `(1/T) int_0^T |<f o phi_t, g>|^2 dt`, debiased.
    pub values: Vec<f64>,
    /// Same average from the pooled estimate `|C|^2`, biased upward by the
    /// sampling noise but nonnegative.
    pub plain_values: Vec<f64>,
    /// `|<f, g>|^2` estimated at `t = 0`.
    pub c0: f64,
    pub fit: Option<LinearFit>,
}

impl DecayCurve {
    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// 95% interval of the fitted exponent.
    pub fn band(&self) -> Option<(f64, f64)> {
        self.fit.map(|f| f.slope_interval(0.95))
    }
}

/// Cumulative trapezoid average `(1/T) int_0^T y(t) dt` on a uniform grid.
fn running_average(y: &[f64], dt: f64, t_grid: &[f64]) -> Vec<f64> {
    let mut cum = vec![0.0; y.len()];
    for k in 1..y.len() {
        cum[k] = cum[k - 1] + 0.5 * dt * (y[k] + y[k - 1]);
    }
    t_grid
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return y[0];
            }
            let pos = t / dt;
            let k = (pos.floor() as usize).min(y.len() - 1);
            let frac = pos - k as f64;
            let extra = if k + 1 < y.len() && frac > 0.0 {
                let yt = y[k] + frac * (y[k + 1] - y[k]);
                0.5 * frac * dt * (y[k] + yt)
            } else {
                0.0
            };
            (cum[k] + extra) / t
        })
        .collect()
}

/// Cesàro averages of squared correlations on `t_grid`, with a log-log fit
/// over the grid points where the debiased average is positive.
pub fn correlation_decay(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    g: &CellwiseObservable,
    t_grid: &[f64],
    q: &QuadratureSpec,
) -> Result<DecayCurve> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| t.is_nan() || t <= 0.0) {
        return Err(Error::InvalidArgument("T grid must be positive and nonempty".into()));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let samples = correlation_samples(s, f, g, t_max, q)?;
    let cross = samples.cross_square();
    let pooled: Vec<f64> = samples.mean().iter().map(|c| c.norm_sqr()).collect();
    let values = running_average(&cross, q.dt, t_grid);
    let plain_values = running_average(&pooled, q.dt, t_grid);
    let (xs, ys): (Vec<f64>, Vec<f64>) = t_grid.iter().zip(&values).filter(|(_, &v)| v > 0.0).map(|(t, v)| (t.ln(), v.ln())).unzip();
    let fit = if xs.len() >= 3 { linear_fit(&xs, &ys).ok() } else { None };
    Ok(DecayCurve { t_grid: t_grid.to_vec(), values, plain_values, c0: cross[0], fit })
}

/// Spectral measure of `f` recovered from its autocorrelation through a Hann
/// lag window of half-width `lag_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSpectrum {
    pub dt: f64,
    pub lag_max: f64,
    pub groups: Vec<Vec<Complex64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMass {
    pub value: f64,
    pub stderr: f64,
}

impl CorrelationSpectrum {
    pub fn new(s: &ZipperedRectangles, f: &CellwiseObservable, lag_max: f64, q: &QuadratureSpec) -> Result<Self> {
        let samples = correlation_samples(s, f, f, lag_max, q)?;
        Ok(CorrelationSpectrum { dt: samples.dt, lag_max, groups: samples.groups })
    }

    fn window(&self, t: f64) -> f64 {
        if t.abs() >= self.lag_max {
            0.0
        } else {
            (PI * t / (2.0 * self.lag_max)).cos().powi(2)
        }
    }

    fn mass_from(&self, corr: &[Complex64], a: f64, b: f64) -> f64 {
        let mut total = self.dt * corr[0].re * (b - a);
        for (k, c) in corr.iter().enumerate().skip(1) {
            let t = k as f64 * self.dt;
            let w = self.window(t);
            if w == 0.0 {
                break;
            }
            // int_a^b e^{-2 pi i xi t} d xi
            let e = (cis(-b * t) - cis(-a * t)) / Complex64::new(0.0, -2.0 * PI * t);
            total += 2.0 * self.dt * w * (c * e).re;
        }
        total
    }

    /// Estimated `sigma_f([a, b])` with a standard error across groups.
    pub fn mass(&self, a: f64, b: f64) -> OracleMass {
        let per_group: Vec<f64> = self.groups.iter().map(|c| self.mass_from(c, a, b)).collect();
        let (value, stderr) = mean_stderr(&per_group);
        OracleMass { value, stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub direction: String,
    pub at: f64,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub lambda: f64,
    /// Growth exponent `1 - alpha` of the twisted norm in `T`.
    pub growth_exponent: f64,
    /// Envelope constant `max_T l2(T) / T^{growth}`.
    pub growth_constant: f64,
    /// Slope of `log mass_upper` in `log r`.
    pub mass_exponent: f64,
    pub mass_constant: f64,
    pub violations: Vec<Violation>,
    /// The lower direction needs a lower bound on twisted integrals that
    /// is not certified here, so it is only reported.
    pub lower_direction_checked: bool,
}

/// Checks both directions of the correspondence between twisted-norm growth
/// and local spectral mass on measured data.
///
/// Growth to mass: `l2(T) <= C T^e` on `t_grid` gives
/// `mass(r) <= 8 C^2 (2r)^{-2e} r^2`.
///
/// Mass to growth: `sigma(B(lambda, rho)) <= D rho^s` for `rho <= r_0` (the
/// largest radius) and total mass `||f||^2` beyond give, splitting the
/// Fejér kernel into dyadic shells of radius `2^k / T`,
/// `l2(T)^2 <= D T^{2-s} (1 + sum_{k<K} 2^{(k+1)s} / (pi^2 4^k)) + ||f||^2 T^2 / (pi^2 4^K)`
/// with `K = floor(log2(r_0 T))`. It is checked for `T >= 1/r_0`; its growth
/// is `max(T^{1-s/2}, (log T)^{1/2})` up to constants.
///
/// Each comparison allows `tolerance` relative slack plus three standard
/// errors.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    r_grid: &[f64],
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<SandwichReport> {
    if r_grid.len() < 2 || t_grid.len() < 2 {
        return Err(Error::InvalidArgument("sandwich grids need at least two points".into()));
    }
    let src = SurfaceSource { surface: s, f };
    let l2s = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| l2_of(&src, lambda, t, n_samples, seed.wrapping_add(1000 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let masses = r_grid
        .iter()
        .enumerate()
        .map(|(i, &r)| mass_upper_of(&src, lambda, r, n_samples, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    if l2s.iter().any(|e| e.value <= 0.0) || masses.iter().any(|m| m.mass_upper <= 0.0) {
        return Err(Error::DegenerateData("zero twisted norm".into()));
    }
    let lt: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let growth = linear_fit(&lt, &l2s.iter().map(|e| e.value.ln()).collect::<Vec<_>>())?.slope;
    let c = t_grid.iter().zip(&l2s).map(|(t, e)| (e.value + 3.0 * e.stderr) / t.powf(growth)).fold(0.0, f64::max);
    let lr: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let slope = linear_fit(&lr, &masses.iter().map(|m| m.mass_upper.ln()).collect::<Vec<_>>())?.slope;
    let d = r_grid.iter().zip(&masses).map(|(r, m)| (m.mass_upper + 3.0 * m.stderr) / r.powf(slope)).fold(0.0, f64::max);

    let mut violations = Vec::new();
    for (r, m) in r_grid.iter().zip(&masses) {
        let bound = MASS_CONSTANT * c * c * (2.0 * r).powf(-2.0 * growth) * r * r;
        if m.mass_upper - 3.0 * m.stderr > bound * (1.0 + tolerance) {
            violations.push(Violation { direction: "growth->mass".into(), at: *r, measured: m.mass_upper, bound });
        }
    }
    let r0 = r_grid.iter().copied().fold(0.0, f64::max);
    let total = f.l2_norm(s).powi(2);
    for (t, e) in t_grid.iter().zip(&l2s) {
        if t * r0 < 1.0 {
            continue;
        }
        let k_max = (r0 * t).log2().floor() as i32;
        let shells: f64 = (0..k_max).map(|k| 2f64.powf((k + 1) as f64 * slope) / (PI * PI * 4f64.powi(k))).sum();
        let squared = d * t.powf(2.0 - slope) * (1.0 + shells) + total * t * t / (PI * PI * 4f64.powi(k_max));
        let bound = squared.sqrt();
        if e.value - 3.0 * e.stderr > bound * (1.0 + tolerance) {
            violations.push(Violation { direction: "mass->growth".into(), at: *t, measured: e.value, bound });
        }
    }
    Ok(SandwichReport {
        lambda,
        growth_exponent: growth,
        growth_constant: c,
        mass_exponent: slope,
        mass_constant: d,
        violations,
        lower_direction_checked: false,
    })
}
