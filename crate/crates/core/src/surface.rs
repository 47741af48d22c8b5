//! Translation surfaces presented as zippered rectangles over an interval
//! exchange, with the unit-speed vertical flow.
//!
//! Rectangle `j` sits over the top interval of letter `j` and has height
//! `heights[j]`. A point leaving the top of rectangle `j` at base position
//! `X` re-enters at `(T(X), 0)` where `T` is the exchange. The horizontal
//! translation flow of a differential is the vertical flow of its rotation,
//! so this vertical flow stands in for the translation flow throughout.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iet::{Iet, Permutation};

const TAU_RETRIES: usize = 10_000;

/// Suspension datum `tau`, indexed by letter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuspensionDatum(pub Vec<f64>);

impl SuspensionDatum {
    /// `tau_a = bottom_position(a) - top_position(a)`.
    pub fn canonical(p: &Permutation) -> Self {
        SuspensionDatum((0..p.d()).map(|a| p.bottom_position(a) as f64 - p.top_position(a) as f64).collect())
    }

    /// Proper prefix sums are positive along the top row and negative along
    /// the bottom row.
    pub fn in_cone(&self, p: &Permutation) -> bool {
        let d = p.d();
        let prefix_ok = |order: &[usize], sign: f64| {
            let mut acc = 0.0;
            order[..d - 1].iter().all(|&a| {
                acc += self.0[a];
                sign * acc > 0.0
            })
        };
        self.0.len() == d && prefix_ok(p.top(), 1.0) && prefix_ok(p.bottom(), -1.0)
    }
}

/// `omega * tau` with the permutation's intersection matrix.
pub fn heights_from_suspension(p: &Permutation, tau: &SuspensionDatum) -> Result<Vec<f64>> {
    if tau.0.len() != p.d() {
        return Err(Error::InvalidSuspension(format!("expected {} entries", p.d())));
    }
    if tau.0.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteInput("suspension datum"));
    }
    if !tau.in_cone(p) {
        return Err(Error::InvalidSuspension("tau is outside the suspension cone".into()));
    }
    let omega = p.intersection_matrix();
    let heights = omega.apply(&tau.0);
    if let Some(h) = heights.iter().find(|&&h| h <= 0.0) {
        return Err(Error::InvalidSuspension(format!("non-positive height {h}")));
    }
    Ok(heights)
}

/// A point of the surface in rectangle coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub rect: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipperedRectangles {
    iet: Iet,
    tau: SuspensionDatum,
    heights: Vec<f64>,
    area: f64,
}

impl ZipperedRectangles {
    pub fn new(iet: Iet, tau: SuspensionDatum) -> Result<Self> {
        let heights = heights_from_suspension(iet.permutation(), &tau)?;
        let area = iet.lengths().iter().zip(&heights).map(|(l, h)| l * h).sum();
        Ok(ZipperedRectangles { iet, tau, heights, area })
    }

    /// Rescale heights (and `tau`) so the total area is one; lengths are
    /// left untouched.
    pub fn normalized(&self) -> Self {
        let s = 1.0 / self.area;
        let heights: Vec<f64> = self.heights.iter().map(|h| h * s).collect();
        let area = self.iet.lengths().iter().zip(&heights).map(|(l, h)| l * h).sum();
        ZipperedRectangles { iet: self.iet.clone(), tau: SuspensionDatum(self.tau.0.iter().map(|t| t * s).collect()), heights, area }
    }

    /// Unit-area torus with unit heights whose first return map is the
    /// rotation by the golden mean `g = (sqrt 5 - 1) / 2`.
    pub fn golden_torus() -> Self {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let iet = Iet::new(Permutation::symmetric(2), vec![1.0 - g, g]).expect("valid lengths");
        ZipperedRectangles::new(iet, SuspensionDatum(vec![1.0, -1.0])).expect("valid torus")
    }

    /// Random unit-area surface over `p`: lengths uniform on the simplex,
    /// `tau` uniform on the slice `[-1, 1]^d` of the suspension cone.
    ///
    /// Falls back to the canonical datum if rejection sampling of `tau`
    /// keeps failing.
    pub fn random<R: Rng + ?Sized>(p: &Permutation, rng: &mut R) -> Result<Self> {
        if let Some(k) = p.reducible_at() {
            return Err(Error::ReduciblePermutation(k));
        }
        let d = p.d();
        let raw: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
        let sum: f64 = raw.iter().sum();
        let lengths = raw.iter().map(|e| e / sum).collect();
        let iet = Iet::new(p.clone(), lengths)?;
        for _ in 0..TAU_RETRIES {
            let tau = SuspensionDatum((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            if let Ok(s) = ZipperedRectangles::new(iet.clone(), tau) {
                return Ok(s.normalized());
            }
        }
        Ok(ZipperedRectangles::new(iet, SuspensionDatum::canonical(p))?.normalized())
    }

    pub fn iet(&self) -> &Iet {
        &self.iet
    }

    pub fn permutation(&self) -> &Permutation {
        self.iet.permutation()
    }

    pub fn d(&self) -> usize {
        self.iet.d()
    }

    pub fn lengths(&self) -> &[f64] {
        self.iet.lengths()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn tau(&self) -> &SuspensionDatum {
        &self.tau
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn rect_area(&self, j: usize) -> f64 {
        self.lengths()[j] * self.heights[j]
    }

    pub fn base_position(&self, pt: &SurfacePoint) -> f64 {
        self.iet.top_start(pt.rect) + pt.x
    }

    /// Point at height zero over base position `x`.
    pub fn base_point(&self, x: f64) -> Result<SurfacePoint> {
        let rect = self.iet.letter_at(x)?;
        Ok(SurfacePoint { rect, x: x - self.iet.top_start(rect), y: 0.0 })
    }

    pub fn contains(&self, pt: &SurfacePoint) -> bool {
        pt.rect < self.d() && pt.x >= 0.0 && pt.x < self.lengths()[pt.rect] && pt.y >= 0.0 && pt.y < self.heights[pt.rect]
    }

    /// Where a point leaving the top of its rectangle re-enters, at height 0.
    /// `elapsed` is only used to label a singular crossing.
    pub fn cross_top(&self, rect: usize, x: f64, elapsed: f64) -> Result<SurfacePoint> {
        let base = self.iet.top_start(rect) + x;
        match self.iet.apply(base) {
            Ok(image) => self.base_point(image).map_err(|e| match e {
                Error::DiscontinuityHit { .. } | Error::OutOfDomain { .. } => Error::SingularityHit { time: elapsed },
                other => other,
            }),
            Err(Error::DiscontinuityHit { .. }) => Err(Error::SingularityHit { time: elapsed }),
            Err(e) => Err(e),
        }
    }

    /// Flow `pt` for time `t >= 0`.
    pub fn flow(&self, pt: &SurfacePoint, t: f64) -> Result<SurfacePoint> {
        if !t.is_finite() || !pt.x.is_finite() || !pt.y.is_finite() {
            return Err(Error::NonFiniteInput("flow input"));
        }
        if t < 0.0 {
            return Err(Error::InvalidArgument("flow time must be nonnegative".into()));
        }
        if !self.contains(pt) {
            return Err(Error::InvalidArgument(format!("{pt:?} is not a point of the surface")));
        }
        let first = self.heights[pt.rect] - pt.y;
        if t < first {
            return Ok(SurfacePoint { y: pt.y + t, ..*pt });
        }
        let mut counts = vec![0u64; self.d()];
        let mut cur = self.cross_top(pt.rect, pt.x, first)?;
        let mut elapsed = first;
        loop {
            let h = self.heights[cur.rect];
            if t - elapsed < h {
                cur.y = t - elapsed;
                return Ok(cur);
            }
            counts[cur.rect] += 1;
            elapsed = first + counts.iter().zip(&self.heights).map(|(&c, h)| c as f64 * h).sum::<f64>();
            cur = self.cross_top(cur.rect, cur.x, elapsed)?;
        }
    }

    /// First return of a base point to the base: landing point and time.
    pub fn first_return(&self, pt: &SurfacePoint) -> Result<(SurfacePoint, f64)> {
        if pt.y != 0.0 {
            return Err(Error::InvalidArgument("first return needs a point on the base".into()));
        }
        let h = self.heights[pt.rect];
        Ok((self.cross_top(pt.rect, pt.x, h)?, h))
    }

    /// A point drawn from the normalized area measure.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfacePoint {
        let mut u = rng.random::<f64>() * self.area;
        let mut rect = self.d() - 1;
        for j in 0..self.d() {
            let a = self.rect_area(j);
            if u < a {
                rect = j;
                break;
            }
            u -= a;
        }
        self.sample_in_rect(rect, rng)
    }

    pub fn sample_in_rect<R: Rng + ?Sized>(&self, rect: usize, rng: &mut R) -> SurfacePoint {
        SurfacePoint { rect, x: rng.random::<f64>() * self.lengths()[rect], y: rng.random::<f64>() * self.heights[rect] }
    }

    /// JSON with every float written to 17 significant digits.
    pub fn to_json(&self) -> String {
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(", ");
        let perm = serde_json::to_string(self.permutation()).expect("permutation serializes");
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"permutation\": {perm}, \"lengths\": [{}], \"log_scale\": {:.16e}, \"tau\": [{}], \"heights\": [{}], \"area\": {:.16e}}}",
            floats(self.lengths()),
            self.iet.log_scale(),
            floats(&self.tau.0),
            floats(&self.heights),
            self.area
        );
        out
    }

    /// Parse [`Self::to_json`] output; heights and area are recomputed and
    /// checked against the stored values.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Repr {
            permutation: Permutation,
            lengths: Vec<f64>,
            #[serde(default)]
            log_scale: f64,
            tau: Vec<f64>,
            heights: Vec<f64>,
            area: f64,
        }
        let r: Repr = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let iet = Iet::new(r.permutation, r.lengths)?.with_log_scale(r.log_scale);
        let rebuilt = ZipperedRectangles::new(iet, SuspensionDatum(r.tau))?;
        let scale = r.area / rebuilt.area;
        let consistent = r.heights.len() == rebuilt.d()
            && r.heights.iter().zip(&rebuilt.heights).all(|(a, b)| (a - b * scale).abs() <= 1e-9 * a.abs().max(1.0));
        if !consistent {
            return Err(Error::InvalidSuspension("stored heights disagree with tau".into()));
        }
        Ok(ZipperedRectangles { heights: r.heights, area: r.area, ..rebuilt })
    }
}
