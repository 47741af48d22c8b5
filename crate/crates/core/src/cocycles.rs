//! The Rauzy-Veech cocycle along Zorich paths: untwisted matrices,
//! Lyapunov exponents of the heights cocycle, and the cocycle twisted by a
//! frequency `lambda`.
//!
//! Twisted phases are `exp(2 pi i lambda h)` for heights `h` that grow like
//! `e^t`. They are tracked exactly as 128-bit fixed-point fractions of a turn
//! ("turns"), updated with the same integer matrices as the heights, so no
//! precision is lost however long the path.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::mean_stderr;
use crate::iet::{Iet, Permutation, StepKind, ZorichStep};
use crate::matrix::IntMatrix;
use crate::surface::{SuspensionDatum, ZipperedRectangles};

const TURN: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0; // 2^128

/// `frac(x)` as a 128-bit fraction of a turn, truncated below `2^-128`.
pub fn turns_of(x: f64) -> u128 {
    let f = x - x.floor();
    if f == 0.0 || f < 1e-300 {
        return 0;
    }
    let bits = f.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32 - 1075;
    let mantissa = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
    let shift = exp + 128;
    if shift >= 0 {
        (mantissa as u128) << shift
    } else if shift > -64 {
        (mantissa as u128) >> (-shift)
    } else {
        0
    }
}

/// Representative of a turn in `[-1/2, 1/2)`.
pub fn signed_turn(t: u128) -> f64 {
    (t as i128) as f64 / TURN
}

pub fn cis_turn(t: u128) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * signed_turn(t))
}

/// `1 + z + .. + z^(c-1)` for `z = exp(2 pi i theta)`.
pub fn geometric_sum(theta: u128, c: u64) -> Complex64 {
    if c == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let s = signed_turn(theta);
    if s == 0.0 {
        return Complex64::new(c as f64, 0.0);
    }
    let p = signed_turn(theta.wrapping_mul(c as u128));
    let ratio = ((PI * p).sin() / (PI * s).sin()).clamp(-(c as f64), c as f64);
    Complex64::from_polar(ratio, PI * (p - s))
}

/// Phases `lambda * h` of a heights vector, in turns.
pub fn phase_turns(heights: &[f64], lambda: f64) -> Vec<u128> {
    heights.iter().map(|h| turns_of(lambda * h)).collect()
}

/// `B^T theta` modulo one.
pub fn advance_turns(matrix: &IntMatrix, turns: &[u128]) -> Vec<u128> {
    let d = turns.len();
    (0..d).map(|b| (0..d).fold(0u128, |acc, a| acc.wrapping_add(turns[a].wrapping_mul(matrix.get(a, b) as u128)))).collect()
}

/// Complex transfer matrix of one Zorich step at a fixed frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistedMatrix(pub DMatrix<Complex64>);

impl TwistedMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `|M_ab| <= B_ab` entrywise, up to `slack` relative.
    pub fn dominated_by(&self, b: &IntMatrix, slack: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| self.0[(i, j)].norm() <= b.get(i, j) as f64 * (1.0 + slack)))
    }

    pub fn equals_untwisted(&self, b: &IntMatrix) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| self.0[(i, j)] == Complex64::new(b.get(i, j) as f64, 0.0)))
    }
}

/// Twisted matrix of a Zorich step from the phases of the heights before
/// the step. Entry `(a, b)` sums `exp(2 pi i lambda p)` over the positions of
/// `a` in the return word of `b`, with `p` the height of the preceding part
/// of the word.
pub fn twisted_matrix_from_turns(step: &ZorichStep, turns: &[u128]) -> TwistedMatrix {
    let d = turns.len();
    let mut m = DMatrix::<Complex64>::identity(d, d);
    let w = step.winner;
    for &b in &step.losers {
        let c = step.hits(b);
        if c == 0 {
            continue;
        }
        let run = geometric_sum(turns[w], c);
        match step.kind {
            StepKind::Top => m[(w, b)] = cis_turn(turns[b]) * run,
            StepKind::Bottom => {
                m[(w, b)] = run;
                m[(b, b)] = cis_turn(turns[w].wrapping_mul(c as u128));
            }
        }
    }
    TwistedMatrix(m)
}

pub fn twisted_matrix(step: &ZorichStep, heights_before: &[f64], lambda: f64) -> TwistedMatrix {
    twisted_matrix_from_turns(step, &phase_turns(heights_before, lambda))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathStep {
    pub zorich: ZorichStep,
    /// Heights after the step, rescaled by `exp(-t)` to stay of order one.
    pub heights: Vec<f64>,
    /// Teichmüller time after the step.
    pub time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CocyclePath {
    pub start: Iet,
    pub heights0: Vec<f64>,
    pub steps: Vec<PathStep>,
}

impl CocyclePath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.time).collect()
    }

    pub fn total_time(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.time)
    }

    pub fn permutations(&self) -> impl Iterator<Item = &Permutation> {
        std::iter::once(self.start.permutation()).chain(self.steps.iter().map(|s| s.zorich.iet.permutation()))
    }

    /// `B_1 B_2 .. B_n` for the first `n` steps.
    pub fn product(&self, n: usize) -> IntMatrix {
        self.steps[..n].iter().fold(IntMatrix::identity(self.start.d()), |acc, s| &acc * &s.zorich.matrix)
    }

    /// Phases of the unrescaled heights before each step, plus the final one.
    pub fn turns(&self, lambda: f64) -> Vec<Vec<u128>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut cur = phase_turns(&self.heights0, lambda);
        for s in &self.steps {
            let next = advance_turns(&s.zorich.matrix, &cur);
            out.push(cur);
            cur = next;
        }
        out.push(cur);
        out
    }

    pub fn twisted_matrices(&self, lambda: f64) -> Vec<TwistedMatrix> {
        let turns = self.turns(lambda);
        self.steps.iter().zip(&turns).map(|(s, t)| twisted_matrix_from_turns(&s.zorich, t)).collect()
    }
}

/// Zorich path from an IET and heights over it. The IET is normalized
/// first; `t_n` is measured from its total length.
pub fn build_path_with_heights(iet: &Iet, heights: &[f64], n_zorich: usize) -> Result<CocyclePath> {
    if heights.len() != iet.d() {
        return Err(Error::InvalidArgument("heights do not match the alphabet".into()));
    }
    let start = iet.normalize().with_log_scale(0.0);
    let mut cur = start.clone();
    let mut h = heights.to_vec();
    let mut time = 0.0;
    let mut steps = Vec::with_capacity(n_zorich);
    for _ in 0..n_zorich {
        let z = cur.zorich_step()?;
        let scale = (-z.duration).exp();
        h = z.matrix.transpose_apply(&h).into_iter().map(|x| x * scale).collect();
        time += z.duration;
        cur = z.iet.clone().with_log_scale(0.0);
        steps.push(PathStep { zorich: z, heights: h.clone(), time });
    }
    Ok(CocyclePath { start, heights0: heights.to_vec(), steps })
}

/// Zorich path over `lengths` with the heights of the canonical suspension.
pub fn build_path(p: &Permutation, lengths: &[f64], n_zorich: usize) -> Result<CocyclePath> {
    let iet = Iet::new(p.clone(), lengths.to_vec())?;
    let heights = crate::surface::heights_from_suspension(p, &SuspensionDatum::canonical(p))?;
    build_path_with_heights(&iet, &heights, n_zorich)
}

pub fn surface_path(s: &ZipperedRectangles, n_zorich: usize) -> Result<CocyclePath> {
    build_path_with_heights(s.iet(), s.heights(), n_zorich)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
    pub total_steps: u64,
}

/// Top `k` Lyapunov exponents of the heights cocycle `v -> B^T v` per unit
/// Teichmüller time, averaged over `n_paths` paths from uniformly random
/// lengths. Paths hitting a connection are restarted from fresh lengths.
pub fn kz_exponents<R: Rng + ?Sized>(p: &Permutation, n_paths: usize, n_zorich: usize, k: usize, rng: &mut R) -> Result<LyapunovEstimate> {
    let info = p.stratum()?;
    if k == 0 || k > 2 * info.genus {
        return Err(Error::InvalidArgument(format!("k must be in 1..={}", 2 * info.genus)));
    }
    if n_paths == 0 || n_zorich == 0 {
        return Err(Error::InvalidArgument("need at least one path and one step".into()));
    }
    let d = p.d();
    let mut per_path = Vec::with_capacity(n_paths);
    let mut total_steps = 0u64;
    while per_path.len() < n_paths {
        let mut iet = random_iet(p, rng)?;
        let mut basis = DMatrix::<f64>::from_fn(d, k, |_, _| StandardNormal.sample(rng));
        orthonormalize(&mut basis);
        let mut logs = vec![0.0; k];
        let mut time = 0.0;
        let mut ok = true;
        for _ in 0..n_zorich {
            let z = match iet.zorich_step() {
                Ok(z) => z,
                Err(Error::ConnectionDetected { .. }) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            };
            apply_heights_step(&z, &mut basis);
            for (acc, r) in logs.iter_mut().zip(orthonormalize(&mut basis)) {
                *acc += r.ln();
            }
            time += z.duration;
            iet = z.iet;
            total_steps += 1;
        }
        if ok && time > 0.0 {
            per_path.push(logs.iter().map(|l| l / time).collect::<Vec<f64>>());
        }
    }
    let mut exponents = Vec::with_capacity(k);
    let mut stderr = Vec::with_capacity(k);
    for i in 0..k {
        let column: Vec<f64> = per_path.iter().map(|e| e[i]).collect();
        let (m, s) = mean_stderr(&column);
        exponents.push(m);
        stderr.push(if n_paths > 1 { s } else { f64::NAN });
    }
    Ok(LyapunovEstimate { exponents, stderr, n_paths, total_steps })
}

fn random_iet<R: Rng + ?Sized>(p: &Permutation, rng: &mut R) -> Result<Iet> {
    let raw: Vec<f64> = (0..p.d()).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = raw.iter().sum();
    Iet::new(p.clone(), raw.iter().map(|x| x / sum).collect())
}

/// `v_b += hits(b) * v_winner` for every column.
fn apply_heights_step(z: &ZorichStep, basis: &mut DMatrix<f64>) {
    let w = z.winner;
    for &b in &z.losers {
        let c = z.hits(b) as f64;
        for col in 0..basis.ncols() {
            basis[(b, col)] += c * basis[(w, col)];
        }
    }
}

/// Modified Gram-Schmidt in place; returns the norms removed from each column.
fn orthonormalize(basis: &mut DMatrix<f64>) -> Vec<f64> {
    let k = basis.ncols();
    let mut norms = Vec::with_capacity(k);
    for j in 0..k {
        for i in 0..j {
            let proj = basis.column(i).dot(&basis.column(j));
            let qi = basis.column(i).clone_owned();
            basis.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let n = basis.column(j).norm();
        basis.column_mut(j).scale_mut(1.0 / n);
        norms.push(n);
    }
    norms
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub lambda: f64,
    /// `1 - log ||A_lambda(n)|| / t_n` with the operator 2-norm.
    pub alpha_hat: f64,
    pub stderr: f64,
    pub band: (f64, f64),
    pub n_steps: usize,
    pub t_n: f64,
    /// `(n, alpha_hat)` at checkpoints along the path.
    pub convergence: Vec<(usize, f64)>,
    /// Same rate from the log of the entry sum, a cheap monitor.
    pub alpha_entry_sum: f64,
}

/// Running product of twisted matrices with the scale factored out.
pub struct TwistedProduct {
    pub matrix: DMatrix<Complex64>,
    pub log_scale: f64,
}

impl TwistedProduct {
    pub fn identity(d: usize) -> Self {
        TwistedProduct { matrix: DMatrix::identity(d, d), log_scale: 0.0 }
    }

    pub fn push(&mut self, m: &TwistedMatrix) {
        self.matrix = &self.matrix * &m.0;
        let max = self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max > 0.0 {
            self.matrix.unscale_mut(max);
            self.log_scale += max.ln();
        }
    }

    pub fn log_norm(&self) -> f64 {
        let s = self.matrix.clone().singular_values();
        s.max().ln() + self.log_scale
    }

    pub fn log_entry_sum(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).sum::<f64>().ln() + self.log_scale
    }
}

const GAP_BATCHES: usize = 10;

/// Growth-rate deficit of the twisted cocycle along the surface's Zorich
/// path, for each frequency in the grid.
pub fn gap_sweep(s: &ZipperedRectangles, lambda_grid: &[f64], n_zorich: usize) -> Result<Vec<GapEstimate>> {
    let path = surface_path(s, n_zorich)?;
    Ok(lambda_grid.iter().map(|&l| gap_on_path(&path, l)).collect())
}

pub fn gap_on_path(path: &CocyclePath, lambda: f64) -> GapEstimate {
    let d = path.start.d();
    let n = path.len();
    let turns = path.turns(lambda);
    let mut prod = TwistedProduct::identity(d);
    let batch = (n / GAP_BATCHES).max(1);
    let mut checkpoints = vec![(0usize, 0.0f64, 0.0f64)];
    for (i, (step, t)) in path.steps.iter().zip(&turns).enumerate() {
        prod.push(&twisted_matrix_from_turns(&step.zorich, t));
        if (i + 1) % batch == 0 || i + 1 == n {
            checkpoints.push((i + 1, step.time, prod.log_norm()));
        }
    }
    let t_n = path.total_time();
    let (_, _, log_norm) = *checkpoints.last().expect("nonempty");
    let alpha_hat = 1.0 - log_norm / t_n;
    let rates: Vec<f64> = checkpoints.windows(2).filter(|w| w[1].1 > w[0].1).map(|w| 1.0 - (w[1].2 - w[0].2) / (w[1].1 - w[0].1)).collect();
    let (_, stderr) = mean_stderr(&rates);
    let stderr = if stderr.is_finite() { stderr } else { 0.0 };
    let convergence = checkpoints[1..].iter().map(|&(k, t, l)| (k, 1.0 - l / t)).collect();
    GapEstimate {
        lambda,
        alpha_hat,
        stderr,
        band: (alpha_hat - 1.96 * stderr, alpha_hat + 1.96 * stderr),
        n_steps: n,
        t_n,
        convergence,
        alpha_entry_sum: 1.0 - prod.log_entry_sum() / t_n,
    }
}

/// `Phi_n = A^T Phi_0` for the twisted product `A` over the first `n` steps.
pub fn transport(path: &CocyclePath, lambda: f64, phi0: &[Complex64], n: usize) -> Vec<Complex64> {
    let turns = path.turns(lambda);
    let mut phi = DVector::from_column_slice(phi0);
    for (s, t) in path.steps[..n].iter().zip(&turns) {
        phi = twisted_matrix_from_turns(&s.zorich, t).0.transpose() * phi;
    }
    phi.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    #[test]
    fn turns_are_exact_for_dyadic_values() {
        assert_eq!(turns_of(0.5), 1u128 << 127);
        assert_eq!(turns_of(2.25), 1u128 << 126);
        assert_eq!(turns_of(-0.25), 3u128 << 126);
        assert_eq!(signed_turn(turns_of(0.75)), -0.25);
        let x = 0.1234567;
        assert!((signed_turn(turns_of(x)) - x).abs() < 1e-17);
    }

    #[test]
    fn geometric_sum_matches_direct_sum() {
        for (theta, c) in [(0.1234, 7u64), (0.5, 4), (1e-9, 1000), (0.999, 13), (0.0, 5)] {
            let t = turns_of(theta);
            let direct: Complex64 = (0..c).map(|j| Complex64::from_polar(1.0, 2.0 * PI * theta * j as f64)).sum();
            assert!((geometric_sum(t, c) - direct).norm() < 1e-10, "{theta} {c}");
        }
    }

    fn irrational_lengths() -> Vec<f64> {
        let raw = [2f64.sqrt(), 3f64.sqrt(), 5f64.sqrt(), 7f64.sqrt()];
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    }

    #[test]
    fn golden_path_has_fibonacci_blocks() {
        let g = golden();
        let path = build_path(&Permutation::symmetric(2), &[1.0 - g, g], 20).unwrap();
        for s in &path.steps[..18] {
            assert_eq!(s.zorich.step_count, 1);
            assert_eq!(s.zorich.matrix.determinant(), 1);
        }
        // alternating unit blocks multiply to Fibonacci matrices
        let p = path.product(10);
        let mut entries: Vec<i64> = p.rows().concat();
        entries.sort_unstable();
        assert_eq!(entries, vec![34, 55, 55, 89]);
        for w in path.steps[..10].windows(2) {
            assert!((w[1].time - w[0].time - g.recip().ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn heights_follow_transposed_products() {
        let p = Permutation::symmetric(4);
        let path = build_path(&p, &irrational_lengths(), 12).unwrap();
        for n in [1, 5, 12] {
            let raw = path.product(n).transpose_apply(&path.heights0);
            let scale = (-path.steps[n - 1].time).exp();
            for (a, b) in raw.iter().zip(&path.steps[n - 1].heights) {
                assert!((a * scale - b).abs() < 1e-12 * b.abs().max(1.0), "{a} {b}");
            }
        }
    }

    #[test]
    fn times_increase_strictly() {
        let p = Permutation::for_stratum("H(1,1)").unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..1000 {
            let Ok(iet) = random_iet(&p, &mut rng) else { continue };
            let Ok(path) = build_path(&p, iet.lengths(), 8) else { continue };
            assert!(path.steps.windows(2).all(|w| w[1].time > w[0].time));
            assert!(path.steps[0].time > 0.0);
        }
    }

    #[test]
    fn intersection_form_is_preserved() {
        let mut rng = stream_rng(3, 0);
        for name in ["H(2)", "H(1,1)"] {
            let p = Permutation::for_stratum(name).unwrap();
            for _ in 0..50 {
                let iet = random_iet(&p, &mut rng).unwrap();
                let path = build_path(&p, iet.lengths(), 20).unwrap();
                let mut before = p.intersection_matrix();
                for s in &path.steps {
                    let after = s.zorich.iet.permutation().intersection_matrix();
                    let b = &s.zorich.matrix;
                    assert_eq!(&(&b.transpose() * &before) * b, after);
                    before = after;
                }
            }
        }
    }

    #[test]
    fn twisted_matrices_reduce_and_are_dominated() {
        let p = Permutation::for_stratum("H(2)").unwrap();
        let path = build_path(&p, &irrational_lengths(), 40).unwrap();
        for m in path.twisted_matrices(0.0).iter().zip(&path.steps) {
            assert!(m.0.equals_untwisted(&m.1.zorich.matrix));
        }
        for m in path.twisted_matrices(1.37).iter().zip(&path.steps) {
            assert!(m.0.dominated_by(&m.1.zorich.matrix, 1e-12));
        }
    }

    /// Return words of the level-`n` letters over the original alphabet.
    fn return_words(path: &CocyclePath, n: usize) -> Vec<Vec<usize>> {
        let d = path.start.d();
        let mut words: Vec<Vec<usize>> = (0..d).map(|a| vec![a]).collect();
        let mut iet = path.start.clone();
        for _ in 0..n {
            let z = iet.zorich_step().unwrap();
            for r in z.rauzy_steps() {
                let [first, second] = r.loser_word();
                words[r.loser] = [words[first].clone(), words[second].clone()].concat();
            }
            iet = z.iet;
        }
        words
    }

    #[test]
    fn twisted_product_matches_return_word_sums() {
        let g = golden();
        let mut cases = vec![(Permutation::symmetric(2), vec![1.0 - g, g], vec![1.0, 1.0], 12)];
        let p = Permutation::for_stratum("H(2)").unwrap();
        let s = ZipperedRectangles::random(&p, &mut stream_rng(5, 0)).unwrap();
        cases.push((p, s.lengths().to_vec(), s.heights().to_vec(), 8));
        for (p, lengths, heights, n) in cases {
            let iet = Iet::new(p, lengths).unwrap();
            let path = build_path_with_heights(&iet, &heights, n).unwrap();
            let words = return_words(&path, n);
            for lambda in [1.0, 0.37] {
                let mut prod = DMatrix::<Complex64>::identity(iet.d(), iet.d());
                for m in path.twisted_matrices(lambda) {
                    prod *= m.0;
                }
                for (b, word) in words.iter().enumerate() {
                    let mut offset = 0.0;
                    let mut direct = vec![Complex64::new(0.0, 0.0); iet.d()];
                    for &a in word {
                        direct[a] += Complex64::from_polar(1.0, 2.0 * PI * lambda * offset);
                        offset += heights[a];
                    }
                    for a in 0..iet.d() {
                        let scale = prod[(a, b)].norm().max(1.0);
                        assert!((prod[(a, b)] - direct[a]).norm() < 1e-9 * scale, "{a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn untwisted_gap_is_zero() {
        let s = ZipperedRectangles::random(&Permutation::for_stratum("H(2)").unwrap(), &mut stream_rng(9, 0)).unwrap();
        let est = gap_sweep(&s, &[0.0], 2000).unwrap();
        assert!(est[0].alpha_hat.abs() < 0.02, "{:?}", est[0].alpha_hat);
    }

    #[test]
    fn torus_integer_frequency_has_no_gap() {
        let s = ZipperedRectangles::golden_torus();
        let est = gap_sweep(&s, &[1.0, 2.0], 200).unwrap();
        for e in est {
            assert!(e.alpha_hat.abs() < 0.02, "{e:?}");
        }
    }

    #[test]
    fn top_exponent_is_one() {
        let p = Permutation::for_stratum("H(2)").unwrap();
        let est = kz_exponents(&p, 4, 5000, 2, &mut stream_rng(4, 0)).unwrap();
        assert!((est.exponents[0] - 1.0).abs() < 0.01, "{est:?}");
        assert!(kz_exponents(&p, 1, 10, 5, &mut stream_rng(4, 0)).is_err());
    }
}
