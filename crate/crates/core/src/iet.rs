//! Interval exchange transformations, Rauzy-Veech induction and its Zorich
//! acceleration.
//!
//! Letters are indices `0..d`. A [`Permutation`] stores the two orders of
//! the letters (top row: intervals before the exchange, bottom row: after),
//! together with display labels. Lengths are always indexed by letter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::IntMatrix;

/// Relative tolerance used for tie detection and discontinuity checks.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermutationRepr", into = "PermutationRepr")]
pub struct Permutation {
    labels: Vec<String>,
    top: Vec<usize>,
    bottom: Vec<usize>,
    top_pos: Vec<usize>,
    bottom_pos: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PermutationRepr {
    labels: Vec<String>,
    top: Vec<String>,
    bottom: Vec<String>,
}

impl TryFrom<PermutationRepr> for Permutation {
    type Error = Error;

    fn try_from(r: PermutationRepr) -> Result<Self> {
        let index = |name: &String| {
            r.labels.iter().position(|l| l == name).ok_or_else(|| Error::InvalidPermutation(format!("unknown letter {name}")))
        };
        let top = r.top.iter().map(index).collect::<Result<Vec<_>>>()?;
        let bottom = r.bottom.iter().map(index).collect::<Result<Vec<_>>>()?;
        Permutation::from_orders(r.labels, top, bottom)
    }
}

impl From<Permutation> for PermutationRepr {
    fn from(p: Permutation) -> Self {
        PermutationRepr {
            top: p.top.iter().map(|&a| p.labels[a].clone()).collect(),
            bottom: p.bottom.iter().map(|&a| p.labels[a].clone()).collect(),
            labels: p.labels,
        }
    }
}

fn default_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("L{i}")
    }
}

fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (pos, &letter) in order.iter().enumerate() {
        inv[letter] = pos;
    }
    inv
}

impl Permutation {
    /// Build from explicit letter orders. `top[k]` is the letter at top
    /// position `k`.
    pub fn from_orders(labels: Vec<String>, top: Vec<usize>, bottom: Vec<usize>) -> Result<Self> {
        let d = labels.len();
        if d == 0 {
            return Err(Error::InvalidPermutation("empty alphabet".into()));
        }
        if top.len() != d || bottom.len() != d {
            return Err(Error::InvalidPermutation("rows must list every letter once".into()));
        }
        for row in [&top, &bottom] {
            let mut seen = vec![false; d];
            for &a in row.iter() {
                if a >= d || seen[a] {
                    return Err(Error::InvalidPermutation("rows must be bijections".into()));
                }
                seen[a] = true;
            }
        }
        let mut uniq = labels.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != d {
            return Err(Error::InvalidPermutation("duplicate labels".into()));
        }
        let top_pos = inverse(&top);
        let bottom_pos = inverse(&bottom);
        Ok(Permutation { labels, top, bottom, top_pos, bottom_pos })
    }

    /// The symmetric permutation `A B .. / .. B A` on `d` letters.
    pub fn symmetric(d: usize) -> Self {
        let labels = (0..d).map(default_label).collect();
        let top = (0..d).collect();
        let bottom = (0..d).rev().collect();
        Permutation::from_orders(labels, top, bottom).expect("symmetric permutation is valid")
    }

    /// Representative permutation of a named stratum: `H(0)` (torus),
    /// `H(2)` or `H(1,1)`.
    pub fn for_stratum(name: &str) -> Result<Self> {
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "H(0)" | "torus" => Ok(Self::symmetric(2)),
            "H(2)" => Ok(Self::symmetric(4)),
            "H(1,1)" => Ok(Self::symmetric(5)),
            _ => Err(Error::InvalidPermutation(format!("no representative for stratum {name}"))),
        }
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn top(&self) -> &[usize] {
        &self.top
    }

    pub fn bottom(&self) -> &[usize] {
        &self.bottom
    }

    pub fn top_position(&self, letter: usize) -> usize {
        self.top_pos[letter]
    }

    pub fn bottom_position(&self, letter: usize) -> usize {
        self.bottom_pos[letter]
    }

    pub fn top_last(&self) -> usize {
        self.top[self.d() - 1]
    }

    pub fn bottom_last(&self) -> usize {
        self.bottom[self.d() - 1]
    }

    /// First position `k < d` at which the leading blocks of both rows
    /// contain the same letters, if any.
    pub fn reducible_at(&self) -> Option<usize> {
        let d = self.d();
        let mut max_bottom = 0;
        for k in 0..d - 1 {
            max_bottom = max_bottom.max(self.bottom_pos[self.top[k]]);
            if max_bottom == k {
                return Some(k + 1);
            }
        }
        None
    }

    pub fn is_irreducible(&self) -> bool {
        self.reducible_at().is_none()
    }

    /// Antisymmetric intersection matrix: `+1` at `(a, b)` when `a` comes
    /// after `b` on top and before `b` on the bottom, `-1` in the mirrored
    /// case. Heights of a suspension are `omega * tau`.
    pub fn intersection_matrix(&self) -> IntMatrix {
        let d = self.d();
        let mut m = IntMatrix::zeros(d);
        for a in 0..d {
            for b in 0..d {
                let (ta, tb) = (self.top_pos[a], self.top_pos[b]);
                let (ba, bb) = (self.bottom_pos[a], self.bottom_pos[b]);
                if ta > tb && ba < bb {
                    m.set(a, b, 1);
                } else if ta < tb && ba > bb {
                    m.set(a, b, -1);
                }
            }
        }
        m
    }

    /// Genus and zero orders from the vertex cycles of the suspension
    /// polygon.
    ///
    /// Polygon corners `T_0..T_d` (top chain) and `B_0..B_d` (bottom chain)
    /// are identified through the side gluings. Each surface vertex of cone
    /// angle `2pi(k+1)` contains `k+1` downward vertical directions, and in
    /// an x-monotone suspension polygon those are exactly the interior top
    /// corners `T_1..T_{d-1}` in its class.
    pub fn stratum(&self) -> Result<StratumInfo> {
        if let Some(k) = self.reducible_at() {
            return Err(Error::ReduciblePermutation(k));
        }
        let d = self.d();
        let t = |k: usize| k;
        let b = |k: usize| d + 1 + k;
        let mut uf = UnionFind::new(2 * (d + 1));
        uf.union(t(0), b(0));
        uf.union(t(d), b(d));
        for (k, &letter) in self.top.iter().enumerate() {
            let p = self.bottom_pos[letter];
            uf.union(t(k), b(p));
            uf.union(t(k + 1), b(p + 1));
        }
        let mut corner_count = vec![0usize; 2 * (d + 1)];
        for k in 1..d {
            corner_count[uf.find(t(k))] += 1;
        }
        let mut roots: Vec<usize> = (0..2 * (d + 1)).map(|v| uf.find(v)).collect();
        roots.sort_unstable();
        roots.dedup();
        let vertices = roots.len();
        let mut orders: Vec<usize> = roots.iter().map(|&r| corner_count[r].saturating_sub(1)).collect();
        if roots.iter().any(|&r| corner_count[r] == 0) || (d + 1 < vertices) || !(d + 1 - vertices).is_multiple_of(2) {
            return Err(Error::InvalidPermutation("inconsistent vertex cycles".into()));
        }
        let genus = (d + 1 - vertices) / 2;
        orders.sort_unstable_by(|a, b| b.cmp(a));
        let marked_points = orders.iter().filter(|&&k| k == 0).count();
        let kappa: Vec<usize> = orders.into_iter().filter(|&k| k > 0).collect();
        debug_assert_eq!(kappa.iter().sum::<usize>() + 2, 2 * genus);
        Ok(StratumInfo { genus, kappa, marked_points, d })
    }

    /// Apply one Rauzy move of the given type in place.
    fn rauzy_move(&mut self, kind: StepKind) {
        let d = self.d();
        match kind {
            StepKind::Top => {
                let winner = self.top[d - 1];
                let loser = self.bottom.pop().expect("nonempty");
                let at = self.bottom.iter().position(|&a| a == winner).expect("winner in row");
                self.bottom.insert(at + 1, loser);
                self.bottom_pos = inverse(&self.bottom);
            }
            StepKind::Bottom => {
                let winner = self.bottom[d - 1];
                let loser = self.top.pop().expect("nonempty");
                let at = self.top.iter().position(|&a| a == winner).expect("winner in row");
                self.top.insert(at + 1, loser);
                self.top_pos = inverse(&self.top);
            }
        }
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |order: &[usize]| order.iter().map(|&a| self.labels[a].as_str()).collect::<Vec<_>>().join(" ");
        write!(f, "{}\n{}", row(&self.top), row(&self.bottom))
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |order: &[usize]| order.iter().map(|&a| self.labels[a].as_str()).collect::<Vec<_>>().join(" ");
        write!(f, "Permutation({} / {})", row(&self.top), row(&self.bottom))
    }
}

impl FromStr for Permutation {
    type Err = Error;

    /// Two rows of whitespace-separated letters; letters are numbered in
    /// their top-row order.
    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<Vec<&str>> = s.lines().map(|l| l.split_whitespace().collect::<Vec<_>>()).filter(|r| !r.is_empty()).collect();
        if rows.len() != 2 {
            return Err(Error::InvalidPermutation(format!("expected 2 rows, got {}", rows.len())));
        }
        let labels: Vec<String> = rows[0].iter().map(|s| s.to_string()).collect();
        let top: Vec<usize> = (0..labels.len()).collect();
        let bottom = rows[1]
            .iter()
            .map(|name| {
                labels
                    .iter()
                    .position(|l| l == name)
                    .ok_or_else(|| Error::InvalidPermutation(format!("letter {name} missing from top row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::from_orders(labels, top, bottom)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumInfo {
    pub genus: usize,
    /// Orders of the genuine zeros, descending.
    pub kappa: Vec<usize>,
    /// Regular points that appear as vertices of the presentation.
    pub marked_points: usize,
    pub d: usize,
}

impl StratumInfo {
    pub fn name(&self) -> String {
        if self.kappa.is_empty() {
            return "H(0)".into();
        }
        let parts: Vec<String> = self.kappa.iter().map(|k| k.to_string()).collect();
        format!("H({})", parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    /// The last top interval is longer: it wins.
    Top,
    /// The last bottom interval is longer: it wins.
    Bottom,
}

/// One Rauzy-Veech induction step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RauzyStep {
    pub kind: StepKind,
    pub winner: usize,
    pub loser: usize,
    /// `old_lengths = elementary_matrix * new_lengths`.
    pub elementary_matrix: IntMatrix,
}

impl RauzyStep {
    fn new(d: usize, kind: StepKind, winner: usize, loser: usize) -> Self {
        RauzyStep { kind, winner, loser, elementary_matrix: IntMatrix::elementary(d, winner, loser, 1) }
    }

    /// Return word of the loser over the previous alphabet; every other
    /// letter returns after a single crossing.
    pub fn loser_word(&self) -> [usize; 2] {
        match self.kind {
            StepKind::Top => [self.loser, self.winner],
            StepKind::Bottom => [self.winner, self.loser],
        }
    }
}

/// A maximal run of same-type Rauzy steps.
///
/// The winner is fixed during a run and the losers cycle through the block
/// of letters that follow the winner in the opposite row, in `losers` order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZorichStep {
    /// Induced map after the run, renormalized to unit total length unless
    /// built by [`Iet::zorich_step_induced`].
    pub iet: Iet,
    pub kind: StepKind,
    pub winner: usize,
    pub losers: Vec<usize>,
    pub step_count: u64,
    /// Product of the elementary matrices of the run.
    pub matrix: IntMatrix,
    /// Teichmüller time spent during the run.
    pub duration: f64,
}

impl ZorichStep {
    /// Loser of the `i`-th Rauzy step in the run.
    pub fn loser_at(&self, i: u64) -> usize {
        self.losers[(i % self.losers.len() as u64) as usize]
    }

    /// Number of times `letter` loses during the run.
    pub fn hits(&self, letter: usize) -> u64 {
        let m = self.losers.len() as u64;
        match self.losers.iter().position(|&b| b == letter) {
            None => 0,
            Some(i) => self.step_count / m + u64::from((i as u64) < self.step_count % m),
        }
    }

    /// The individual Rauzy steps, in order. Only sensible for short runs.
    pub fn rauzy_steps(&self) -> impl Iterator<Item = RauzyStep> + '_ {
        let d = self.iet.d();
        (0..self.step_count).map(move |i| RauzyStep::new(d, self.kind, self.winner, self.loser_at(i)))
    }
}

/// An interval exchange: permutation plus positive lengths (by letter).
///
/// `log_scale` records renormalizations: the physical lengths are
/// `lengths * exp(-log_scale)`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IetRepr", into = "IetRepr")]
pub struct Iet {
    perm: Permutation,
    lengths: Vec<f64>,
    log_scale: f64,
    top_starts: Vec<f64>,
    bottom_starts: Vec<f64>,
    total: f64,
}

#[derive(Serialize, Deserialize)]
struct IetRepr {
    permutation: Permutation,
    lengths: Vec<f64>,
    log_scale: f64,
}

impl TryFrom<IetRepr> for Iet {
    type Error = Error;

    fn try_from(r: IetRepr) -> Result<Self> {
        Ok(Iet::new(r.permutation, r.lengths)?.with_log_scale(r.log_scale))
    }
}

impl From<Iet> for IetRepr {
    fn from(i: Iet) -> Self {
        IetRepr { permutation: i.perm, lengths: i.lengths, log_scale: i.log_scale }
    }
}

impl fmt::Debug for Iet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Iet").field("perm", &self.perm).field("lengths", &self.lengths).field("log_scale", &self.log_scale).finish()
    }
}

fn starts(order: &[usize], lengths: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lengths.len()];
    let mut acc = 0.0;
    for &a in order {
        out[a] = acc;
        acc += lengths[a];
    }
    out
}

impl Iet {
    pub fn new(perm: Permutation, lengths: Vec<f64>) -> Result<Self> {
        if lengths.len() != perm.d() {
            return Err(Error::InvalidLengths(format!("expected {} lengths, got {}", perm.d(), lengths.len())));
        }
        if lengths.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::InvalidLengths("lengths must be finite and positive".into()));
        }
        Ok(Self::from_parts(perm, lengths, 0.0))
    }

    fn from_parts(perm: Permutation, lengths: Vec<f64>, log_scale: f64) -> Self {
        let top_starts = starts(perm.top(), &lengths);
        let bottom_starts = starts(perm.bottom(), &lengths);
        let total = perm.top().iter().map(|&a| lengths[a]).sum();
        Iet { perm, lengths, log_scale, top_starts, bottom_starts, total }
    }

    pub fn with_log_scale(mut self, log_scale: f64) -> Self {
        self.log_scale = log_scale;
        self
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn total_length(&self) -> f64 {
        self.total
    }

    pub fn top_start(&self, letter: usize) -> f64 {
        self.top_starts[letter]
    }

    pub fn bottom_start(&self, letter: usize) -> f64 {
        self.bottom_starts[letter]
    }

    /// Rescale to unit total length, accumulating the scale in `log_scale`.
    pub fn normalize(&self) -> Iet {
        let total = self.total;
        let lengths = self.lengths.iter().map(|l| l / total).collect();
        Self::from_parts(self.perm.clone(), lengths, self.log_scale - total.ln())
    }

    fn tolerance(&self) -> f64 {
        TIE_TOLERANCE * self.total
    }

    /// Letter whose top interval contains `x`, rejecting points within the
    /// tie tolerance of an interior endpoint.
    pub fn letter_at(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput("point"));
        }
        if x < 0.0 || x >= self.total {
            return Err(Error::OutOfDomain { x, total: self.total });
        }
        let tol = self.tolerance();
        let d = self.d();
        for (k, &a) in self.perm.top().iter().enumerate() {
            let end = self.top_starts[a] + self.lengths[a];
            if x < end || k == d - 1 {
                if k + 1 < d && end - x <= tol {
                    return Err(Error::DiscontinuityHit { x });
                }
                if k > 0 && x - self.top_starts[a] <= tol {
                    return Err(Error::DiscontinuityHit { x });
                }
                return Ok(a);
            }
        }
        unreachable!("x is inside the domain")
    }

    /// Image of `x` under the exchange.
    pub fn apply(&self, x: f64) -> Result<f64> {
        let a = self.letter_at(x)?;
        Ok(self.bottom_starts[a] + (x - self.top_starts[a]))
    }

    fn step_kind(&self) -> Result<StepKind> {
        let top = self.lengths[self.perm.top_last()];
        let bottom = self.lengths[self.perm.bottom_last()];
        if (top - bottom).abs() <= self.tolerance() {
            return Err(Error::ConnectionDetected { top, bottom });
        }
        Ok(if top > bottom { StepKind::Top } else { StepKind::Bottom })
    }

    /// One Rauzy-Veech step: induce on `[0, total - loser_length)`.
    pub fn rauzy_step(&self) -> Result<(Iet, RauzyStep)> {
        let kind = self.step_kind()?;
        let (winner, loser) = match kind {
            StepKind::Top => (self.perm.top_last(), self.perm.bottom_last()),
            StepKind::Bottom => (self.perm.bottom_last(), self.perm.top_last()),
        };
        let mut lengths = self.lengths.clone();
        lengths[winner] -= lengths[loser];
        let mut perm = self.perm.clone();
        perm.rauzy_move(kind);
        let step = RauzyStep::new(self.d(), kind, winner, loser);
        Ok((Self::from_parts(perm, lengths, self.log_scale), step))
    }

    /// A maximal run of same-type Rauzy steps, followed by renormalization.
    ///
    /// Whole cycles through the loser block are applied arithmetically, so
    /// the cost does not depend on the length of the run.
    pub fn zorich_step(&self) -> Result<ZorichStep> {
        self.zorich(true)
    }

    /// Like [`Self::zorich_step`] but keeps the induced map on its subinterval
    /// of the original domain instead of rescaling it.
    pub fn zorich_step_induced(&self) -> Result<ZorichStep> {
        self.zorich(false)
    }

    fn zorich(&self, normalize: bool) -> Result<ZorichStep> {
        let d = self.d();
        let kind = self.step_kind()?;
        let (winner, row) = match kind {
            StepKind::Top => (self.perm.top_last(), self.perm.bottom()),
            StepKind::Bottom => (self.perm.bottom_last(), self.perm.top()),
        };
        let at = row.iter().position(|&a| a == winner).expect("winner in row");
        let block: Vec<usize> = row[at + 1..].to_vec();
        let losers: Vec<usize> = block.iter().rev().copied().collect();
        let m = losers.len() as u64;
        let cycle: f64 = losers.iter().map(|&b| self.lengths[b]).sum();

        let mut rem = self.lengths[winner];
        let mut count: u64 = 0;
        let whole = (rem / cycle).floor() - 1.0;
        if whole >= 1.0 {
            let k = whole as u64;
            rem -= k as f64 * cycle;
            count = k * m;
        }
        loop {
            let loser = losers[(count % m) as usize];
            if rem > self.lengths[loser] {
                rem -= self.lengths[loser];
                count += 1;
            } else {
                break;
            }
        }
        debug_assert!(count >= 1);
        if rem <= self.tolerance() {
            return Err(Error::ConnectionDetected { top: rem, bottom: 0.0 });
        }

        let mut lengths = self.lengths.clone();
        lengths[winner] = rem;
        let mut matrix = IntMatrix::identity(d);
        let mut hits = vec![0u64; d];
        for (i, &b) in losers.iter().enumerate() {
            hits[b] = count / m + u64::from((i as u64) < count % m);
            matrix.add_at(winner, b, hits[b] as i64);
        }
        // after `count` steps the block is rotated right by `count mod m`
        let shift = (count % m) as usize;
        let mut rotated = block.clone();
        rotated.rotate_right(shift);
        let mut new_row = row[..=at].to_vec();
        new_row.extend_from_slice(&rotated);
        let perm = match kind {
            StepKind::Top => Permutation::from_orders(self.perm.labels.clone(), self.perm.top.clone(), new_row),
            StepKind::Bottom => Permutation::from_orders(self.perm.labels.clone(), new_row, self.perm.bottom.clone()),
        }
        .expect("Rauzy moves preserve bijectivity");
        let induced = Self::from_parts(perm, lengths, self.log_scale);
        let duration = (self.total / induced.total).ln();
        let iet = if normalize { induced.normalize() } else { induced };
        Ok(ZorichStep { iet, kind, winner, losers, step_count: count, matrix, duration })
    }
}
