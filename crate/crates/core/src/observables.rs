//! Cellwise trigonometric observables on zippered rectangles.
//!
//! On rectangle `j` an observable is a finite sum of terms
//! `c * exp(2 pi i (m x / l_j + n y / h_j))` in rectangle coordinates.
//! Such functions are usually discontinuous across rectangle sides, but all
//! their integrals along flow segments have closed forms.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{SurfacePoint, ZipperedRectangles};

/// Below this value of `|omega| * delta` the segment integral switches to a
/// Taylor expansion.
pub const TAYLOR_THRESHOLD: f64 = 1e-6;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub m: i64,
    pub n: i64,
    pub c: Complex64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CellwiseObservable {
    cells: Vec<Vec<Term>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2_norm: f64,
    pub sup_norm_bound: f64,
    pub sobolev1_proxy: f64,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    cell: usize,
    m: i64,
    n: i64,
    re: f64,
    im: f64,
}

/// `int_0^delta exp(2 pi i omega u) du`.
pub fn phase_integral(omega: f64, delta: f64) -> Complex64 {
    let z = Complex64::new(0.0, TWO_PI * omega * delta);
    if (omega * delta).abs() < TAYLOR_THRESHOLD {
        delta * (1.0 + z / 2.0 + z * z / 6.0)
    } else {
        ((z.exp()) - 1.0) / Complex64::new(0.0, TWO_PI * omega)
    }
}

/// `exp(2 pi i theta)`, with the argument reduced first.
pub fn cis(theta: f64) -> Complex64 {
    let r = theta - theta.round();
    Complex64::from_polar(1.0, TWO_PI * r)
}

impl CellwiseObservable {
    pub fn zero(d: usize) -> Self {
        CellwiseObservable { cells: vec![Vec::new(); d] }
    }

    pub fn constant(d: usize, c: Complex64) -> Self {
        CellwiseObservable::cellwise_constant(&vec![c; d])
    }

    pub fn cellwise_constant(values: &[Complex64]) -> Self {
        let mut f = CellwiseObservable::zero(values.len());
        for (j, &c) in values.iter().enumerate() {
            f.add_term(j, 0, 0, c);
        }
        f
    }

    /// Single term on one cell.
    pub fn mode(d: usize, cell: usize, m: i64, n: i64, c: Complex64) -> Self {
        let mut f = CellwiseObservable::zero(d);
        f.add_term(cell, m, n, c);
        f
    }

    /// Add `c` to the `(m, n)` coefficient of `cell`, merging with an
    /// existing term.
    pub fn add_term(&mut self, cell: usize, m: i64, n: i64, c: Complex64) {
        let terms = &mut self.cells[cell];
        match terms.iter_mut().find(|t| t.m == m && t.n == n) {
            Some(t) => t.c += c,
            None => terms.push(Term { m, n, c }),
        }
    }

    pub fn d(&self) -> usize {
        self.cells.len()
    }

    pub fn terms(&self, cell: usize) -> &[Term] {
        &self.cells[cell]
    }

    pub fn coefficient(&self, cell: usize, m: i64, n: i64) -> Complex64 {
        self.cells[cell].iter().filter(|t| t.m == m && t.n == n).map(|t| t.c).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.cells.iter().flatten().all(|t| t.c.re.is_finite() && t.c.im.is_finite())
    }

    /// True when every term is independent of the horizontal coordinate, so
    /// the integral over a full vertical crossing depends only on the cell.
    pub fn is_horizontally_constant(&self) -> bool {
        self.cells.iter().flatten().all(|t| t.m == 0)
    }

    pub fn is_cellwise_constant(&self) -> bool {
        self.cells.iter().flatten().all(|t| t.m == 0 && t.n == 0)
    }

    pub fn validate_for(&self, s: &ZipperedRectangles) -> Result<()> {
        if self.d() != s.d() {
            return Err(Error::InvalidArgument(format!("observable has {} cells, surface has {}", self.d(), s.d())));
        }
        if !self.is_finite() {
            return Err(Error::NonFiniteInput("observable coefficient"));
        }
        Ok(())
    }

    pub fn evaluate(&self, s: &ZipperedRectangles, pt: &SurfacePoint) -> Complex64 {
        let (l, h) = (s.lengths()[pt.rect], s.heights()[pt.rect]);
        self.cells[pt.rect].iter().map(|t| t.c * cis(t.m as f64 * pt.x / l + t.n as f64 * pt.y / h)).sum()
    }

    /// Average over the surface.
    pub fn mean(&self, s: &ZipperedRectangles) -> Complex64 {
        let total: Complex64 = (0..self.d()).map(|j| self.coefficient(j, 0, 0) * s.rect_area(j)).sum();
        total / s.area()
    }

    pub fn is_zero_mean(&self, s: &ZipperedRectangles) -> bool {
        self.mean(s).norm() <= 1e-12 * self.sup_bound().max(1.0)
    }

    pub fn centered(&self, s: &ZipperedRectangles) -> Self {
        let mu = self.mean(s);
        let mut f = self.clone();
        for j in 0..f.d() {
            f.add_term(j, 0, 0, -mu);
        }
        f
    }

    /// `<f, g> = int f conj(g)` against the area form.
    pub fn inner_product(&self, g: &CellwiseObservable, s: &ZipperedRectangles) -> Complex64 {
        (0..self.d())
            .map(|j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in &self.cells[j] {
                    for b in g.cells[j].iter().filter(|b| b.m == a.m && b.n == a.n) {
                        acc += a.c * b.c.conj();
                    }
                }
                acc * s.rect_area(j)
            })
            .sum()
    }

    pub fn l2_norm(&self, s: &ZipperedRectangles) -> f64 {
        self.inner_product(self, s).re.max(0.0).sqrt()
    }

    /// Largest per-cell sum of coefficient moduli.
    pub fn sup_bound(&self) -> f64 {
        self.cells.iter().map(|terms| terms.iter().map(|t| t.c.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// L2 norm, sup bound, and the first-order Sobolev proxy
    /// `(|f|^2 + |df/dx|^2 + |df/dy|^2)^(1/2)` computed cellwise.
    pub fn norms(&self, s: &ZipperedRectangles) -> NormReport {
        let l2 = self.l2_norm(s);
        let derivative: f64 = (0..self.d())
            .map(|j| {
                let (l, h) = (s.lengths()[j], s.heights()[j]);
                let w: f64 = self.cells[j]
                    .iter()
                    .map(|t| t.c.norm_sqr() * ((TWO_PI * t.m as f64 / l).powi(2) + (TWO_PI * t.n as f64 / h).powi(2)))
                    .sum();
                w * s.rect_area(j)
            })
            .sum();
        NormReport { l2_norm: l2, sup_norm_bound: self.sup_bound(), sobolev1_proxy: (l2 * l2 + derivative).sqrt() }
    }

    pub fn conj(&self) -> Self {
        CellwiseObservable {
            cells: self.cells.iter().map(|terms| terms.iter().map(|t| Term { m: -t.m, n: -t.n, c: t.c.conj() }).collect()).collect(),
        }
    }

    pub fn scaled(&self, k: Complex64) -> Self {
        CellwiseObservable { cells: self.cells.iter().map(|terms| terms.iter().map(|t| Term { c: t.c * k, ..*t }).collect()).collect() }
    }

    pub fn add(&self, other: &CellwiseObservable) -> Self {
        let mut f = self.clone();
        for (j, terms) in other.cells.iter().enumerate() {
            for t in terms {
                f.add_term(j, t.m, t.n, t.c);
            }
        }
        f
    }

    /// `int_0^delta exp(2 pi i lambda (t0 + u)) f(x, y0 + u) du` inside
    /// rectangle `j`, for a segment that stays in the rectangle.
    #[allow(clippy::too_many_arguments)]
    pub fn segment_integral(&self, s: &ZipperedRectangles, j: usize, x: f64, y0: f64, delta: f64, lambda: f64, t0: f64) -> Complex64 {
        let (l, h) = (s.lengths()[j], s.heights()[j]);
        let start_phase = cis(lambda * t0);
        let sum: Complex64 = self.cells[j]
            .iter()
            .map(|t| {
                let omega = lambda + t.n as f64 / h;
                t.c * cis(t.m as f64 * x / l + t.n as f64 * y0 / h) * phase_integral(omega, delta)
            })
            .sum();
        start_phase * sum
    }

    /// Integral over a full crossing of rectangle `j` starting at time zero.
    /// Only meaningful for horizontally constant observables.
    pub fn crossing_integral(&self, s: &ZipperedRectangles, j: usize, lambda: f64) -> Complex64 {
        self.segment_integral(s, j, 0.0, 0.0, s.heights()[j], lambda, 0.0)
    }

    pub fn to_json(&self) -> String {
        let terms: Vec<TermRepr> = self
            .cells
            .iter()
            .enumerate()
            .flat_map(|(cell, terms)| terms.iter().map(move |t| TermRepr { cell, m: t.m, n: t.n, re: t.c.re, im: t.c.im }))
            .collect();
        serde_json::to_string(&terms).expect("terms serialize")
    }

    pub fn from_json(text: &str, d: usize) -> Result<Self> {
        let terms: Vec<TermRepr> = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut f = CellwiseObservable::zero(d);
        for t in terms {
            if t.cell >= d {
                return Err(Error::InvalidArgument(format!("cell {} out of range for d = {d}", t.cell)));
            }
            f.add_term(t.cell, t.m, t.n, Complex64::new(t.re, t.im));
        }
        if !f.is_finite() {
            return Err(Error::NonFiniteInput("observable coefficient"));
        }
        Ok(f)
    }

    /// Real zero-mean cellwise-constant observable with Gaussian values.
    pub fn random_cellwise_constant<R: Rng + ?Sized>(s: &ZipperedRectangles, rng: &mut R) -> Self {
        let values: Vec<Complex64> = (0..s.d()).map(|_| Complex64::new(StandardNormal.sample(rng), 0.0)).collect();
        CellwiseObservable::cellwise_constant(&values).centered(s)
    }

    /// Zero-mean observable with `n_terms` random terms per cell and modes
    /// in `-max_mode..=max_mode`.
    pub fn random_trig<R: Rng + ?Sized>(s: &ZipperedRectangles, max_mode: i64, n_terms: usize, rng: &mut R) -> Self {
        let mut f = CellwiseObservable::zero(s.d());
        for j in 0..s.d() {
            for _ in 0..n_terms {
                let m = rng.random_range(-max_mode..=max_mode);
                let n = rng.random_range(-max_mode..=max_mode);
                let c = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
                f.add_term(j, m, n, c);
            }
        }
        f.centered(s)
    }

    /// Like [`Self::random_trig`] but with horizontally constant terms only.
    pub fn random_vertical<R: Rng + ?Sized>(s: &ZipperedRectangles, max_mode: i64, n_terms: usize, rng: &mut R) -> Self {
        let mut f = CellwiseObservable::zero(s.d());
        for j in 0..s.d() {
            for _ in 0..n_terms {
                let n = rng.random_range(-max_mode..=max_mode);
                let c = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
                f.add_term(j, 0, n, c);
            }
        }
        f.centered(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iet::Permutation;
    use crate::rng::stream_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn h2(seed: u64) -> ZipperedRectangles {
        ZipperedRectangles::random(&Permutation::for_stratum("H(2)").unwrap(), &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn constant_one_has_unit_mean() {
        let s = h2(1);
        let f = CellwiseObservable::constant(4, c(1.0, 0.0));
        assert!((f.mean(&s) - 1.0).norm() < 1e-12);
        let r = f.norms(&s);
        assert!((r.sobolev1_proxy - 1.0).abs() < 1e-12 && (r.l2_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_modes_have_zero_mean() {
        let s = h2(2);
        for (m, n) in [(1, 0), (0, 1), (-2, 3)] {
            assert_eq!(CellwiseObservable::mode(4, 2, m, n, c(1.0, 1.0)).mean(&s), c(0.0, 0.0));
        }
    }

    #[test]
    fn sobolev_proxy_of_single_horizontal_mode() {
        let s = ZipperedRectangles::new(
            crate::iet::Iet::new(Permutation::symmetric(2), vec![1.0, 1.0]).unwrap(),
            crate::surface::SuspensionDatum(vec![1.0, -1.0]),
        )
        .unwrap();
        let f = CellwiseObservable::mode(2, 0, 1, 0, c(1.0, 0.0));
        let r = f.norms(&s);
        assert!((r.sobolev1_proxy.powi(2) - (1.0 + TWO_PI * TWO_PI)).abs() < 1e-10);
    }

    #[test]
    fn norms_are_homogeneous() {
        let s = h2(3);
        let f = CellwiseObservable::random_trig(&s, 3, 4, &mut stream_rng(3, 1));
        let (a, b) = (f.norms(&s), f.scaled(c(2.0, 0.0)).norms(&s));
        assert!((b.l2_norm - 2.0 * a.l2_norm).abs() < 1e-12 * b.l2_norm);
        assert!((b.sup_norm_bound - 2.0 * a.sup_norm_bound).abs() < 1e-12 * b.sup_norm_bound);
        assert!((b.sobolev1_proxy - 2.0 * a.sobolev1_proxy).abs() < 1e-12 * b.sobolev1_proxy);
        assert!(a.l2_norm <= a.sup_norm_bound && a.l2_norm <= a.sobolev1_proxy);
    }

    #[test]
    fn inner_product_is_hermitian_and_sesquilinear() {
        let s = h2(4);
        let mut rng = stream_rng(4, 1);
        let f = CellwiseObservable::random_trig(&s, 2, 3, &mut rng);
        let g = CellwiseObservable::random_trig(&s, 2, 3, &mut rng);
        let k = CellwiseObservable::random_trig(&s, 2, 3, &mut rng);
        let (a, b) = (c(0.3, -1.2), c(-0.7, 0.4));
        assert!((f.inner_product(&g, &s) - g.inner_product(&f, &s).conj()).norm() < 1e-12);
        let lhs = f.scaled(a).add(&g.scaled(b)).inner_product(&k, &s);
        let rhs = a * f.inner_product(&k, &s) + b * g.inner_product(&k, &s);
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0));
        let lhs = k.inner_product(&f.scaled(a), &s);
        assert!((lhs - a.conj() * k.inner_product(&f, &s)).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn distinct_modes_are_orthogonal() {
        let s = h2(5);
        let f = CellwiseObservable::mode(4, 1, 1, 0, c(1.0, 0.0));
        let g = CellwiseObservable::mode(4, 1, 0, 1, c(1.0, 0.0));
        let h = CellwiseObservable::mode(4, 2, 1, 0, c(1.0, 0.0));
        assert_eq!(f.inner_product(&g, &s), c(0.0, 0.0));
        assert_eq!(f.inner_product(&h, &s), c(0.0, 0.0));
    }

    #[test]
    fn centering_is_exact() {
        let s = h2(6);
        let mut f = CellwiseObservable::random_trig(&s, 2, 3, &mut stream_rng(6, 1));
        f.add_term(0, 0, 0, c(3.0, -2.0));
        let g = f.centered(&s);
        assert!(g.mean(&s).norm() < 1e-15);
        assert!(g.is_zero_mean(&s));
    }

    #[test]
    fn json_round_trip() {
        let s = h2(7);
        let f = CellwiseObservable::random_trig(&s, 2, 3, &mut stream_rng(7, 1));
        assert_eq!(CellwiseObservable::from_json(&f.to_json(), 4).unwrap(), f);
        assert!(CellwiseObservable::from_json(r#"[{"cell":9,"m":0,"n":0,"re":1,"im":0}]"#, 4).is_err());
    }

    #[test]
    fn segment_integral_matches_quadrature() {
        let s = h2(8);
        let f = CellwiseObservable::random_trig(&s, 3, 3, &mut stream_rng(8, 1));
        let j = 1;
        let (x, y0, delta, lambda, t0) = (0.3 * s.lengths()[j], 0.1 * s.heights()[j], 0.7 * s.heights()[j], 1.7, 4.2);
        let n = 20_000;
        let du = delta / n as f64;
        let quad: Complex64 = (0..n)
            .map(|k| {
                let u = (k as f64 + 0.5) * du;
                cis(lambda * (t0 + u)) * f.evaluate(&s, &SurfacePoint { rect: j, x, y: y0 + u }) * du
            })
            .sum();
        let exact = f.segment_integral(&s, j, x, y0, delta, lambda, t0);
        assert!((quad - exact).norm() < 1e-7, "{quad} vs {exact}");
    }

    #[test]
    fn taylor_branch_is_continuous() {
        for delta in [0.5, 1.0, 3.0] {
            let omega = 0.999 * TAYLOR_THRESHOLD / delta;
            let z = Complex64::new(0.0, TWO_PI * omega * delta);
            let series = delta * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
            assert!((phase_integral(omega, delta) - series).norm() < 1e-15 * delta);
            let above = phase_integral(1.001 * TAYLOR_THRESHOLD / delta, delta);
            assert!((phase_integral(omega, delta) - above).norm() < 1e-8 * delta);
        }
        assert_eq!(phase_integral(0.0, 2.0), c(2.0, 0.0));
    }
}
