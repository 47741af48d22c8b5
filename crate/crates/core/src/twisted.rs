//! Twisted ergodic integrals `int e^{2 pi i lambda t} f(phi_t x) dt`.
//!
//! The direct integrator walks the orbit rectangle by rectangle and uses the
//! closed-form cell integrals. The renormalized integrator walks a tower of
//! Zorich-induced maps instead and only needs a logarithmic number of
//! steps, taking each full return to a deeper induced interval in one jump.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cocycles::{advance_turns, phase_turns, twisted_matrix_from_turns};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::iet::Iet;
use crate::observables::{cis, CellwiseObservable};
use crate::surface::{SurfacePoint, ZipperedRectangles};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistedTrace {
    pub value: Complex64,
    pub t: f64,
    pub lambda: f64,
    pub start: SurfacePoint,
    /// Phase measured from global orbit time, so traces of consecutive
    /// segments add up.
    pub absolute_phase: bool,
    pub end: SurfacePoint,
    /// Rectangle crossings (direct) or tower steps (renormalized).
    pub work: u64,
}

/// Prefix integrals of one orbit at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitPrefixes {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Running maximum of `|I(t)|` over every crossing time up to each sample.
    pub running_max: Vec<f64>,
    pub end: SurfacePoint,
    pub crossings: u64,
}

fn check_inputs(s: &ZipperedRectangles, f: &CellwiseObservable, lambda: f64, x0: &SurfacePoint) -> Result<()> {
    if !lambda.is_finite() {
        return Err(Error::NonFiniteInput("lambda"));
    }
    if !x0.x.is_finite() || !x0.y.is_finite() {
        return Err(Error::NonFiniteInput("start point"));
    }
    f.validate_for(s)?;
    if !s.contains(x0) {
        return Err(Error::InvalidArgument(format!("{x0:?} is not a point of the surface")));
    }
    Ok(())
}

/// Integrals from `x0` over `[0, times[k]]`, with phase `exp(2 pi i lambda (t0 + t))`.
pub fn orbit_prefixes(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    x0: &SurfacePoint,
    t0: f64,
    times: &[f64],
) -> Result<OrbitPrefixes> {
    check_inputs(s, f, lambda, x0)?;
    if !t0.is_finite() || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteInput("time"));
    }
    if times.iter().any(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be nonnegative and sorted".into()));
    }
    let d = s.d();
    let heights = s.heights();
    let mut values = Vec::with_capacity(times.len());
    let mut running_max = Vec::with_capacity(times.len());
    let mut counts = vec![0u64; d];
    let first = heights[x0.rect] - x0.y;
    let mut pt = *x0;
    let mut elapsed = 0.0;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut max_abs = 0.0f64;
    let mut crossings = 0u64;
    let mut k = 0;
    loop {
        let seg = heights[pt.rect] - pt.y;
        while k < times.len() && times[k] <= elapsed + seg {
            let v = acc + f.segment_integral(s, pt.rect, pt.x, pt.y, times[k] - elapsed, lambda, t0 + elapsed);
            max_abs = max_abs.max(v.norm());
            values.push(v);
            running_max.push(max_abs);
            k += 1;
        }
        if k == times.len() {
            let last = times.last().copied().unwrap_or(0.0);
            let end = SurfacePoint { y: pt.y + (last - elapsed), ..pt };
            return Ok(OrbitPrefixes { times: times.to_vec(), values, running_max, end, crossings });
        }
        acc += f.segment_integral(s, pt.rect, pt.x, pt.y, seg, lambda, t0 + elapsed);
        max_abs = max_abs.max(acc.norm());
        if crossings > 0 {
            counts[pt.rect] += 1;
        }
        crossings += 1;
        elapsed = first + counts.iter().zip(heights).map(|(&c, h)| c as f64 * h).sum::<f64>();
        pt = s.cross_top(pt.rect, pt.x, elapsed)?;
    }
}

/// `int_0^T exp(2 pi i lambda t) f(phi_t x0) dt` by exact cell integrals.
pub fn twisted_integral_direct(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    x0: &SurfacePoint,
    t: f64,
) -> Result<TwistedTrace> {
    twisted_integral_from(s, f, lambda, x0, 0.0, t)
}

/// Integral over `[t0, t0 + duration]` of an orbit that is at `x0` at time
/// `t0`.
pub fn twisted_integral_from(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    x0: &SurfacePoint,
    t0: f64,
    duration: f64,
) -> Result<TwistedTrace> {
    if !duration.is_finite() {
        return Err(Error::NonFiniteInput("time"));
    }
    let p = orbit_prefixes(s, f, lambda, x0, t0, &[duration])?;
    Ok(TwistedTrace { value: p.values[0], t: duration, lambda, start: *x0, absolute_phase: true, end: p.end, work: p.crossings })
}

struct Level {
    iet: Iet,
    heights: Vec<f64>,
    turns: Vec<u128>,
    phi: Vec<Complex64>,
    min_height: f64,
}

/// Zorich tower over a surface for one observable and frequency. Levels are
/// built on demand and reused across calls.
pub struct RenormalizedIntegrator<'a> {
    s: &'a ZipperedRectangles,
    f: &'a CellwiseObservable,
    lambda: f64,
    levels: Vec<Level>,
    exhausted: bool,
    matrix_products: u64,
}

impl<'a> RenormalizedIntegrator<'a> {
    pub fn new(s: &'a ZipperedRectangles, f: &'a CellwiseObservable, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::NonFiniteInput("lambda"));
        }
        f.validate_for(s)?;
        if !f.is_horizontally_constant() {
            return Err(Error::UnsupportedObservable("terms depending on the horizontal coordinate".into()));
        }
        let heights = s.heights().to_vec();
        let phi = (0..s.d()).map(|j| f.crossing_integral(s, j, lambda)).collect();
        let level = Level {
            iet: s.iet().clone(),
            turns: phase_turns(&heights, lambda),
            min_height: heights.iter().copied().fold(f64::INFINITY, f64::min),
            heights,
            phi,
        };
        Ok(RenormalizedIntegrator { s, f, lambda, levels: vec![level], exhausted: false, matrix_products: 0 })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Twisted matrix products performed while building the tower.
    pub fn matrix_products(&self) -> u64 {
        self.matrix_products
    }

    fn build_next(&mut self) {
        let top = self.levels.last().expect("level 0 exists");
        let z = match top.iet.zorich_step_induced() {
            Ok(z) => z,
            Err(_) => {
                self.exhausted = true;
                return;
            }
        };
        let m = twisted_matrix_from_turns(&z, &top.turns);
        let d = top.phi.len();
        let phi = (0..d).map(|b| (0..d).map(|a| m.0[(a, b)] * top.phi[a]).sum()).collect();
        let heights = z.matrix.transpose_apply(&top.heights);
        let turns = advance_turns(&z.matrix, &top.turns);
        let min_height = heights.iter().copied().fold(f64::INFINITY, f64::min);
        self.matrix_products += 1;
        self.levels.push(Level { iet: z.iet, heights, turns, phi, min_height });
    }

    /// Whether level `k + 1` exists, building it if it could be useful for a
    /// remaining time `budget`.
    fn has_level(&mut self, k: usize, budget: f64) -> bool {
        if k + 1 < self.levels.len() {
            return true;
        }
        if self.exhausted || self.levels[k].min_height > budget {
            return false;
        }
        self.build_next();
        k + 1 < self.levels.len()
    }

    pub fn integrate(&mut self, x0: &SurfacePoint, t: f64) -> Result<TwistedTrace> {
        check_inputs(self.s, self.f, self.lambda, x0)?;
        if !t.is_finite() {
            return Err(Error::NonFiniteInput("time"));
        }
        if t < 0.0 {
            return Err(Error::InvalidArgument("integration time must be nonnegative".into()));
        }
        let (s, f, lambda) = (self.s, self.f, self.lambda);
        let first = s.heights()[x0.rect] - x0.y;
        let trace = |value, end, work| TwistedTrace { value, t, lambda, start: *x0, absolute_phase: true, end, work };
        if t < first {
            let v = f.segment_integral(s, x0.rect, x0.x, x0.y, t, lambda, 0.0);
            return Ok(trace(v, SurfacePoint { y: x0.y + t, ..*x0 }, 1));
        }
        let mut acc = f.segment_integral(s, x0.rect, x0.x, x0.y, first, lambda, 0.0);
        let mut elapsed = first;
        let mut x = s.base_position(x0);
        x = s.iet().apply(x).map_err(|e| singular(e, elapsed))?;
        let mut k = 0usize;
        let mut work = 1u64;
        loop {
            let remaining = t - elapsed;
            while self.has_level(k, remaining) {
                let up = &self.levels[k + 1];
                if x >= up.iet.total_length() {
                    break;
                }
                match up.iet.letter_at(x) {
                    Ok(b) if up.heights[b] <= remaining => k += 1,
                    _ => break,
                }
            }
            let level = &self.levels[k];
            let b = level.iet.letter_at(x).map_err(|e| singular(e, elapsed))?;
            work += 1;
            if level.heights[b] <= remaining {
                acc += cis(lambda * elapsed) * level.phi[b];
                x = level.iet.apply(x).map_err(|e| singular(e, elapsed + level.heights[b]))?;
                elapsed += level.heights[b];
                continue;
            }
            if k > 0 {
                k -= 1;
                continue;
            }
            let local = x - level.iet.top_start(b);
            if remaining > 0.0 {
                acc += f.segment_integral(s, b, local, 0.0, remaining, lambda, elapsed);
            }
            return Ok(trace(acc, SurfacePoint { rect: b, x: local, y: remaining }, work));
        }
    }
}

fn singular(e: Error, time: f64) -> Error {
    match e {
        Error::DiscontinuityHit { .. } | Error::OutOfDomain { .. } => Error::SingularityHit { time },
        other => other,
    }
}

/// Same quantity as [`twisted_integral_direct`] through the Zorich tower.
/// Requires an observable whose terms do not depend on the horizontal
/// coordinate.
pub fn twisted_sum_renormalized(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    x0: &SurfacePoint,
    t: f64,
) -> Result<TwistedTrace> {
    RenormalizedIntegrator::new(s, f, lambda)?.integrate(x0, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChopSegment {
    /// Index into the scales, `None` for the remainder.
    pub scale: Option<usize>,
    pub start: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChopDecomposition {
    pub t: f64,
    pub scales: Vec<f64>,
    pub counts: Vec<u64>,
    pub remainder: f64,
    pub segments: Vec<ChopSegment>,
}

impl ChopDecomposition {
    /// `m_l <= e^{t_{l+1} - t_l}` wherever the next scale exists.
    pub fn counts_bounded(&self, times: &[f64]) -> bool {
        (0..self.counts.len().saturating_sub(1)).all(|l| self.counts[l] as f64 <= (times[l + 1] - times[l]).exp() * (1.0 + 1e-12))
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().zip(&self.scales).map(|(&m, t)| m as f64 * t).sum::<f64>() + self.remainder
    }
}

/// Greedy largest-scale-first cut of `[0, T]` into `m_l` pieces of length
/// `e^{t_l}` and a remainder `0 < tau <= e^{t_1}` (or `tau = 0` when the cut
/// is exact). Only scales not exceeding `T` are used. Segments are listed in
/// orbit order: scale 1 pieces first, the remainder last.
pub fn chop_decompose(t: f64, times: &[f64]) -> Result<ChopDecomposition> {
    if times.is_empty() {
        return Err(Error::EmptyTimes);
    }
    if !t.is_finite() || times.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("chop input"));
    }
    if t <= 0.0 {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be nondecreasing".into()));
    }
    let scales: Vec<f64> = times.iter().map(|x| x.exp()).collect();
    let n = scales.iter().take_while(|&&s| s <= t).count();
    let mut counts = vec![0u64; scales.len()];
    let mut rem = t;
    for l in (1..n).rev() {
        let mut m = (rem / scales[l]).floor();
        while m > 0.0 && m * scales[l] > rem {
            m -= 1.0;
        }
        counts[l] = m as u64;
        rem -= m * scales[l];
    }
    if n >= 1 && rem > 0.0 {
        let mut m = (rem / scales[0]).ceil() - 1.0;
        while m > 0.0 && m * scales[0] >= rem {
            m -= 1.0;
        }
        counts[0] = m.max(0.0) as u64;
        rem -= counts[0] as f64 * scales[0];
    }
    let mut segments = Vec::new();
    let mut start = 0.0;
    for (l, &m) in counts.iter().enumerate() {
        for _ in 0..m {
            segments.push(ChopSegment { scale: Some(l), start, length: scales[l] });
            start += scales[l];
        }
    }
    if rem > 0.0 {
        segments.push(ChopSegment { scale: None, start, length: rem });
    }
    Ok(ChopDecomposition { t, scales, counts, remainder: rem, segments })
}

/// `sum_n e^{2 pi i n theta} int_0^T e^{2 pi i n lambda t} f_n(phi_t x0) dt`,
/// the integral of `F(x, theta) = sum_n f_n(x) e^{2 pi i n theta}` along the
/// product flow `(phi_t x, theta + lambda t)`.
pub fn product_flow_integral(
    s: &ZipperedRectangles,
    modes: &[(i64, CellwiseObservable)],
    lambda: f64,
    x0: &SurfacePoint,
    theta: f64,
    t: f64,
) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for (n, fbar) in modes {
        let trace = twisted_integral_direct(s, fbar, *n as f64 * lambda, x0, t)?;
        total += cis(*n as f64 * theta) * trace.value;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Fit the running maximum of `|I(t)|`.
    Envelope,
    /// Fit `|I(T)|` at the grid points.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub stderr: f64,
    pub t_grid: Vec<f64>,
    pub mode: FitMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub lambda: f64,
    pub t_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub envelope: Vec<f64>,
    pub fit: ExponentFit,
}

impl Sweep {
    /// Rows `T,lambda,re,im,abs`.
    pub fn csv_rows(&self) -> Vec<String> {
        self.t_grid.iter().zip(&self.values).map(|(t, v)| format!("{t:e},{:e},{:e},{:e},{:e}", self.lambda, v.re, v.im, v.norm())).collect()
    }
}

pub const SWEEP_CSV_HEADER: &str = "T,lambda,re,im,abs";

/// `n` points from `lo` to `hi` in geometric progression.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo * (r * i as f64).exp() }).collect()
}

fn is_geometric(grid: &[f64]) -> bool {
    if grid.iter().any(|&t| t <= 0.0) {
        return false;
    }
    let ratios: Vec<f64> = grid.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let first = ratios[0];
    first > 0.0 && ratios.iter().all(|r| (r - first).abs() <= 1e-6 * first)
}

/// Fit `log |I(T)| ~ exponent * log T` along one orbit.
pub fn sweep_and_fit(
    s: &ZipperedRectangles,
    f: &CellwiseObservable,
    lambda: f64,
    x0: &SurfacePoint,
    t_grid: &[f64],
    mode: FitMode,
) -> Result<Sweep> {
    if t_grid.len() < 8 || !is_geometric(t_grid) {
        return Err(Error::InvalidArgument("T grid must be geometric with at least 8 points".into()));
    }
    let p = orbit_prefixes(s, f, lambda, x0, 0.0, t_grid)?;
    let fit = fit_exponent(t_grid, &p.values, &p.running_max, mode)?;
    Ok(Sweep { lambda, t_grid: t_grid.to_vec(), values: p.values, envelope: p.running_max, fit })
}

pub fn fit_exponent(t_grid: &[f64], values: &[Complex64], envelope: &[f64], mode: FitMode) -> Result<ExponentFit> {
    let ys: Vec<f64> = match mode {
        FitMode::Envelope => envelope.to_vec(),
        FitMode::Raw => values.iter().map(|v| v.norm()).collect(),
    };
    if ys.iter().all(|&y| y < 1e-14) {
        return Err(Error::DegenerateData("all twisted integrals are below 1e-14".into()));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = t_grid.iter().zip(&ys).filter(|(_, &y)| y >= 1e-14).map(|(t, y)| (t.ln(), y.ln())).unzip();
    let LinearFit { slope, intercept, r_squared, slope_stderr, .. } = linear_fit(&lx, &ly)?;
    Ok(ExponentFit { exponent: slope, intercept, r_squared, stderr: slope_stderr, t_grid: t_grid.to_vec(), mode })
}
