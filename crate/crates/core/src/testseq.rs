//! Test sequences: growth schedules, small-cancellation families, sequence
//! points for abelian/free towers, heuristic points for surface flats, point
//! verification, the limit oracle and the swap-symmetry check.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::construct::TwinTower;
use crate::normal::{check_morphism_free, word_verdict, Morphism, MorphismCheck, Verdict, VerdictOptions, Witness};
use crate::tower::{abelian_block_values, precompose_twist, Flat, FlatKind, OrderingCertificate, Tower, TowerError};
use crate::word::{max_piece_ratio, primitive_root, Word};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TestSeqError {
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("ordering: {0}")]
    Ordering(String),
    #[error("small-cancellation families need a base of rank at least 2")]
    BaseRank,
    #[error("flat {0} has no twist curves")]
    MissingTwists(String),
    #[error("flat {flat}: {detail}")]
    Unsupported { flat: String, detail: String },
    #[error(transparent)]
    Tower(#[from] TowerError),
}

/// `coef · n^deg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Growth {
    pub coef: u64,
    pub deg: u32,
}

impl Growth {
    pub fn eval(&self, n: u64) -> u64 {
        self.coef * n.pow(self.deg)
    }
}

impl fmt::Display for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.coef, self.deg) {
            (c, 0) => write!(f, "{c}"),
            (1, 1) => write!(f, "n"),
            (1, d) => write!(f, "n^{d}"),
            (c, 1) => write!(f, "{c}*n"),
            (c, d) => write!(f, "{c}*n^{d}"),
        }
    }
}

impl FromStr for Growth {
    type Err = TestSeqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TestSeqError::Schedule(format!("cannot parse growth `{s}`"));
        let s = s.trim();
        let (coef, rest) = match s.split_once('*') {
            Some((c, r)) => (c.trim().parse::<u64>().map_err(|_| bad())?, r.trim()),
            None if s.starts_with('n') => (1, s),
            None => return Ok(Growth { coef: s.parse().map_err(|_| bad())?, deg: 0 }),
        };
        let deg = match rest.strip_prefix('n').ok_or_else(bad)?.trim() {
            "" => 1,
            d => d.strip_prefix('^').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?,
        };
        Ok(Growth { coef, deg })
    }
}

/// Exponent functions for the top generator block of every abelian flat, in
/// ordering order; within a flat the first generator grows fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrowthSchedule {
    pub flats: Vec<Vec<Growth>>,
}

impl GrowthSchedule {
    /// `n^k, …, n` for each abelian flat of rank `k`.
    pub fn default_for(t: &Tower, ordering: &[String]) -> Result<Self, TestSeqError> {
        let mut flats = Vec::new();
        for id in ordering {
            let f = t.flat(id).ok_or_else(|| TestSeqError::Ordering(format!("unknown flat {id}")))?;
            if let Some(a) = f.abelian() {
                flats.push((1..=a.rank as u32).rev().map(|d| Growth { coef: 1, deg: d }).collect());
            }
        }
        Ok(GrowthSchedule { flats })
    }

    /// Degree comparison: every exponent tends to infinity and consecutive
    /// ratios tend to 0.
    pub fn validate(&self) -> Result<(), TestSeqError> {
        for (i, flat) in self.flats.iter().enumerate() {
            for g in flat {
                if g.coef == 0 || g.deg == 0 {
                    return Err(TestSeqError::Schedule(format!("flat {}: `{g}` does not tend to infinity", i + 1)));
                }
            }
            for w in flat.windows(2) {
                if w[1].deg >= w[0].deg {
                    return Err(TestSeqError::Schedule(format!("flat {}: `{}`/`{}` does not tend to 0", i + 1, w[1], w[0])));
                }
            }
        }
        Ok(())
    }

    /// Smallest `N₀` with strictly decreasing exponents in every flat for all `n ≥ N₀`.
    pub fn threshold(&self) -> u64 {
        let mut n0 = 1;
        for flat in &self.flats {
            for w in flat.windows(2) {
                let mut n = 1u64;
                while w[1].eval(n) >= w[0].eval(n) {
                    n += 1;
                }
                n0 = n0.max(n);
            }
        }
        n0
    }

    /// Largest consecutive ratio `m_{j+1}(n)/m_j(n)` over all flats.
    pub fn max_ratio(&self, n: u64) -> Option<Ratio<u64>> {
        self.flats.iter().flat_map(|f| f.windows(2).map(|w| Ratio::new(w[1].eval(n), w[0].eval(n)))).max()
    }

    fn check_against(&self, t: &Tower, ordering: &[String]) -> Result<(), TestSeqError> {
        let ranks: Vec<usize> = ordering.iter().filter_map(|id| t.flat(id).and_then(Flat::abelian)).map(|a| a.rank).collect();
        let got: Vec<usize> = self.flats.iter().map(Vec::len).collect();
        if ranks != got {
            return Err(TestSeqError::Schedule(format!("abelian flat ranks {ranks:?} but schedule sizes {got:?}")));
        }
        Ok(())
    }
}

impl fmt::Display for GrowthSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flats: Vec<String> = self.flats.iter().map(|fl| fl.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ")).collect();
        write!(f, "{}", flats.join("; "))
    }
}

impl FromStr for GrowthSchedule {
    type Err = TestSeqError;

    /// Flats separated by `;`, growths by `,`: `n^2, n; 3*n`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let flats = s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.split(',').map(str::parse).collect::<Result<Vec<Growth>, _>>())
            .collect::<Result<_, _>>()?;
        Ok(GrowthSchedule { flats })
    }
}

/// A legitimate flat ordering with its certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingWitness {
    pub order: Vec<String>,
    pub certificate: OrderingCertificate,
}

impl OrderingWitness {
    pub fn new(t: &Tower, order: Vec<String>) -> Result<Self, TestSeqError> {
        let certificate = t.check_legitimate_ordering(&order)?;
        if !certificate.legitimate {
            let bad = certificate.steps.iter().find(|s| !s.outside.is_empty()).expect("some step fails");
            return Err(TestSeqError::Ordering(format!("flat {} retracts onto {} before they are available", bad.flat, bad.outside.join(","))));
        }
        Ok(OrderingWitness { order, certificate })
    }

    pub fn natural(t: &Tower) -> Self {
        Self::new(t, t.natural_ordering()).expect("the natural ordering is legitimate")
    }
}

/// One morphism `h_n` from the top level to the base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequencePoint {
    pub n: u64,
    pub images: Vec<Word>,
    /// Set for points built from Dehn twists, which carry no certificate.
    pub heuristic: bool,
}

impl SequencePoint {
    pub fn label(&self) -> String {
        format!("testseq:n={}", self.n)
    }

    pub fn morphism(&self) -> Morphism {
        Morphism::new(self.label(), self.images.clone())
    }
}

/// Deterministic `k`-tuple over `e1, e2` satisfying `C'(1/n)`.
///
/// Each word alternates runs of `e1` and `e2` with all run lengths distinct
/// across the tuple, so a common subword spans at most two partial runs.
pub fn gen_smallcanc_family(k: usize, n: u64, base_rank: usize) -> Result<Vec<Word>, TestSeqError> {
    smallcanc_scaled(k, n, base_rank, 1)
}

/// [`gen_smallcanc_family`] with every run multiplied by `scale`.
pub fn smallcanc_scaled(k: usize, n: u64, base_rank: usize, scale: u64) -> Result<Vec<Word>, TestSeqError> {
    if base_rank < 2 {
        return Err(TestSeqError::BaseRank);
    }
    if k == 0 || n < 2 {
        return Err(TestSeqError::Schedule(format!("family needs k ≥ 1 and n ≥ 2, got k={k}, n={n}")));
    }
    let runs = 2 * (2 * n as usize + 1);
    Ok((0..k)
        .map(|i| {
            let mut letters = Vec::new();
            for r in 0..runs {
                let len = (1 + i + k * r) as u64 * scale;
                let l = if r % 2 == 0 { 1 } else { 2 };
                letters.extend(std::iter::repeat(l).take(len as usize));
            }
            Word::from_letters(letters)
        })
        .collect())
}

struct Builder<'a> {
    t: &'a Tower,
    images: Vec<Option<Word>>,
    /// Generators assigned so far, in assignment order.
    assigned: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn new(t: &'a Tower) -> Self {
        let mut images = vec![None; t.gens().len()];
        for (i, img) in images.iter_mut().enumerate().take(t.base_rank()) {
            *img = Some(Word::gen(i));
        }
        Builder { t, images, assigned: (0..t.base_rank()).collect() }
    }

    fn eval(&self, w: &Word, flat: &Flat) -> Result<Word, TestSeqError> {
        let mut out = Word::identity();
        for &l in w.letters() {
            let i = l.unsigned_abs() as usize - 1;
            let img = self.images[i].as_ref().ok_or_else(|| TestSeqError::Ordering(format!("flat {} needs {} first", flat.id, self.t.gens()[i])))?;
            out.mul_assign(&if l > 0 { img.clone() } else { img.inverse() });
        }
        Ok(out)
    }

    fn max_probe_len(&self) -> usize {
        self.assigned.iter().map(|&i| self.images[i].as_ref().map_or(0, Word::len)).max().unwrap_or(0)
    }

    fn set(&mut self, f: &Flat, own: Vec<Word>) {
        for (g, w) in f.gens.clone().zip(own) {
            self.images[g] = Some(w);
            self.assigned.push(g);
        }
    }

    fn finish(self, n: u64, heuristic: bool) -> SequencePoint {
        SequencePoint { n, images: self.images.into_iter().map(|w| w.expect("every flat assigned")).collect(), heuristic }
    }
}

/// Root and exponent of the peg image: `h(peg) = γ^b`.
fn peg_root(b: &Builder, f: &Flat) -> Result<(Word, i64), TestSeqError> {
    let hp = b.eval(&f.abelian().expect("abelian").peg, f)?;
    if hp.is_identity() {
        return Err(TestSeqError::Unsupported { flat: f.id.clone(), detail: "peg image is trivial".into() });
    }
    let (g, e) = primitive_root(&hp).expect("non-identity");
    Ok((g, e as i64))
}

/// Smallest `s ≥ 1` with `|γ^{s·m}| ≥ target`.
fn dominating_scale(gamma: &Word, m: u64, target: usize) -> u64 {
    let (c, core) = gamma.cyclic_reduce();
    let fixed = 2 * c.len();
    let per = core.len() as u64 * m;
    if fixed as u64 + per >= target as u64 {
        return 1;
    }
    (target as u64 - fixed as u64).div_ceil(per).max(1)
}

/// The point `h_n` for a tower of abelian flats and free factors.
///
/// Abelian flats send their top block to `γ^{s·m_j(n)}` with `γ` the root
/// of the peg image and `s ≥ 1` the least scale making the slowest
/// generator `n` times longer than every earlier image. Free factors get a
/// scaled `C'(1/max(n,2))` family with the same domination margin.
pub fn gen_sequence_point(t: &Tower, ordering: &OrderingWitness, schedule: &GrowthSchedule, n: u64) -> Result<SequencePoint, TestSeqError> {
    schedule.validate()?;
    schedule.check_against(t, &ordering.order)?;
    let mut b = Builder::new(t);
    let mut next_abelian = 0;
    for id in &ordering.order {
        let f = t.flat(id).expect("certified ordering");
        let target = n as usize * b.max_probe_len();
        let own = match &f.kind {
            FlatKind::Abelian(a) => {
                let growth = &schedule.flats[next_abelian];
                next_abelian += 1;
                let (gamma, e) = peg_root(&b, f)?;
                let m: Vec<u64> = growth.iter().map(|g| g.eval(n)).collect();
                let s = dominating_scale(&gamma, *m.last().expect("rank ≥ 1"), target);
                let top: Vec<i64> = m.iter().map(|&x| (s * x) as i64).collect();
                abelian_block_values(a, e, &top).iter().flat_map(|blk| blk.iter().map(|&x| gamma.pow(x))).collect()
            }
            FlatKind::Free { rank } => {
                let nn = n.max(2);
                let base = gen_smallcanc_family(*rank, nn, t.base_rank())?;
                let shortest = base.iter().map(Word::len).min().unwrap_or(1).max(1);
                let s = (target.div_ceil(shortest)).max(1) as u64;
                smallcanc_scaled(*rank, nn, t.base_rank(), s)?
            }
            FlatKind::Surface(_) => {
                return Err(TestSeqError::Unsupported { flat: id.clone(), detail: "surface flats only have heuristic points".into() })
            }
        };
        b.set(f, own);
    }
    Ok(b.finish(n, false))
}

/// Heuristic point: composite retraction with the `n`-th power of every
/// declared twist precomposed on each surface flat. Abelian flats add
/// `m_j(n)` from the default schedule to their retraction exponents and free
/// factors use small-cancellation words (trivial at `n = 0`).
pub fn gen_surface_point(t: &Tower, ordering: &OrderingWitness, n: u64, seed: u64) -> Result<SequencePoint, TestSeqError> {
    let mut b = Builder::new(t);
    let cyclic = smallcanc_scaled(1, 2, t.base_rank().max(2), 1 + seed % 3)?.remove(0);
    for id in &ordering.order {
        let f = t.flat(id).expect("certified ordering");
        let own = match &f.kind {
            FlatKind::Abelian(a) => {
                let (gamma, e) = peg_root(&b, f)?;
                let base_top = if a.layers.is_empty() { e } else { 0 };
                let top: Vec<i64> = (1..=a.rank as u32).rev().map(|d| base_top + n.pow(d) as i64).collect();
                abelian_block_values(a, e, &top).iter().flat_map(|blk| blk.iter().map(|&x| gamma.pow(x))).collect()
            }
            FlatKind::Free { rank } if n == 0 => vec![Word::identity(); *rank],
            FlatKind::Free { rank } => gen_smallcanc_family(*rank, n.max(2), t.base_rank())?,
            FlatKind::Surface(s) => {
                if s.twists.is_empty() {
                    return Err(TestSeqError::MissingTwists(id.clone()));
                }
                let lower: Vec<Word> = (0..f.gens.start).map(|i| b.eval(&Word::gen(i), f)).collect::<Result<_, _>>()?;
                let mut sub = lower[..f.lower_rank].to_vec();
                if s.cyclic_letter {
                    sub.push(cyclic.clone());
                }
                let mut phi: Vec<Word> = s.images.iter().map(|w| w.substitute(&sub)).collect();
                for tw in &s.twists {
                    for _ in 0..n {
                        phi = precompose_twist(&lower, f, &phi, tw);
                    }
                }
                phi
            }
        };
        b.set(f, own);
    }
    Ok(b.finish(n, true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckItem {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Itemized result of [`verify_point`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointReport {
    pub items: Vec<CheckItem>,
}

impl PointReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&CheckItem> {
        self.items.iter().filter(|i| i.status == CheckStatus::Fail).collect()
    }

    fn push(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.items.push(CheckItem { name: name.into(), status, detail: detail.into() });
    }
}

impl fmt::Display for PointReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            let s = match i.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "skip",
            };
            writeln!(f, "{s} {}: {}", i.name, i.detail)?;
        }
        Ok(())
    }
}

/// Signed exponent `e` with `w = γ^e`, if any.
fn power_of(w: &Word, gamma: &Word) -> Option<i64> {
    if w.is_identity() {
        return Some(0);
    }
    let (r, k) = primitive_root(w).ok()?;
    if r == *gamma {
        Some(k as i64)
    } else if r == gamma.inverse() {
        Some(-(k as i64))
    } else {
        None
    }
}

/// Checks a point against the test-sequence clauses at its index.
///
/// Domination is tested against `probes` (words over the tower) that are
/// supported on generators placed before the flat; without probes, every
/// earlier generator is a probe.
pub fn verify_point(t: &Tower, ordering: &OrderingWitness, schedule: &GrowthSchedule, point: &SequencePoint, probes: Option<&[Word]>) -> PointReport {
    let mut rep = PointReport { items: Vec::new() };
    let n = point.n;
    let h = &point.images;
    let base_ok = (0..t.base_rank()).all(|i| h.get(i) == Some(&Word::gen(i)));
    rep.push("base-identity", base_ok, "");
    if h.len() != t.gens().len() {
        rep.push("relators", false, format!("{} images for {} generators", h.len(), t.gens().len()));
        return rep;
    }
    let rel = check_morphism_free(&t.presentation(), h);
    rep.push("relators", rel == MorphismCheck::Exact(true), format!("{rel:?}"));
    if point.heuristic {
        rep.items.push(CheckItem { name: "test-sequence".into(), status: CheckStatus::Skipped, detail: "heuristic point".into() });
        return rep;
    }
    if let Err(e) = schedule.check_against(t, &ordering.order) {
        rep.push("schedule", false, e.to_string());
        return rep;
    }
    let mut placed: HashSet<usize> = (0..t.base_rank()).collect();
    let mut next_abelian = 0;
    for id in &ordering.order {
        let f = t.flat(id).expect("certified ordering");
        let before: Vec<Word> = match probes {
            Some(ps) => ps.iter().filter(|p| p.letters().iter().all(|l| placed.contains(&(l.unsigned_abs() as usize - 1)))).cloned().collect(),
            None => placed.iter().map(|&i| Word::gen(i)).collect(),
        };
        let probe_max = before.iter().map(|p| p.substitute(h).len()).max().unwrap_or(0);
        let dominated: Vec<usize>;
        match &f.kind {
            FlatKind::Abelian(a) => {
                let growth = &schedule.flats[next_abelian];
                next_abelian += 1;
                let top = f.block(a.layers.len());
                let hp = a.peg.substitute(h);
                let exps: Option<Vec<i64>> = if hp.is_identity() {
                    None
                } else {
                    let (gamma, _) = primitive_root(&hp).expect("non-identity");
                    top.clone().map(|g| power_of(&h[g], &gamma)).collect()
                };
                match exps {
                    None => rep.push(format!("ratio:{id}"), false, "images are not powers of the peg root"),
                    Some(e) => {
                        let m: Vec<i64> = growth.iter().map(|g| g.eval(n) as i64).collect();
                        let proportional = e.iter().zip(&m).all(|(&x, &y)| x * m[0] == e[0] * y) && e[0] > 0;
                        let decreasing = n < schedule.threshold() || e.windows(2).all(|w| w[1] < w[0]);
                        let ratio = e.windows(2).map(|w| Ratio::new(w[1], w[0])).max();
                        let detail = format!(
                            "exponents {:?}{}",
                            e,
                            ratio.map(|r| format!(", max ratio {:.4}", *r.numer() as f64 / *r.denom() as f64)).unwrap_or_default()
                        );
                        rep.push(format!("ratio:{id}"), proportional && decreasing, detail);
                    }
                }
                dominated = vec![top.end - 1];
            }
            FlatKind::Free { .. } => {
                let imgs: Vec<Word> = f.gens.clone().map(|g| h[g].clone()).collect();
                let lambda = Ratio::new(1, n.max(2) as usize);
                let r = max_piece_ratio(&imgs);
                rep.push(format!("small-cancellation:{id}"), r < lambda && imgs.iter().all(|w| !w.is_identity()), format!("max piece ratio {r} vs {lambda}"));
                dominated = f.gens.clone().collect();
            }
            FlatKind::Surface(_) => {
                rep.items.push(CheckItem { name: format!("surface:{id}"), status: CheckStatus::Skipped, detail: "no exact clauses".into() });
                dominated = Vec::new();
            }
        }
        if !dominated.is_empty() {
            let least = dominated.iter().map(|&g| h[g].len()).min().unwrap_or(0);
            rep.push(format!("domination:{id}"), n as usize * probe_max <= least, format!("{n}·{probe_max} ≤ {least}"));
        }
        placed.extend(f.gens.clone());
    }
    rep
}

/// One-sided triviality test: evaluates `w` under `h_1, …, h_budget`
/// (heuristic points when the tower has surface flats). Never answers Trivial.
pub fn limit_oracle(t: &Tower, w: &Word, budget: u64) -> Verdict {
    let ordering = OrderingWitness::natural(t);
    let has_surface = t.flats().any(|f| f.surface().is_some());
    let schedule = GrowthSchedule::default_for(t, &ordering.order).expect("natural ordering");
    for n in 1..=budget {
        let point = if has_surface { gen_surface_point(t, &ordering, n, 0) } else { gen_sequence_point(t, &ordering, &schedule, n) };
        let Ok(point) = point else { continue };
        if !w.substitute(&point.images).is_identity() {
            return Verdict::NonTrivial(Witness { morphism: point.morphism() });
        }
    }
    Verdict::Unknown
}

/// Verdict on `w′·w⁻¹`, where `w′` exchanges every generator with its twin:
/// the exact word-problem verdict, or the limit oracle when that is Unknown.
pub fn swap_symmetry_check(tt: &TwinTower, w: &Word, opts: &VerdictOptions, budget: u64) -> Verdict {
    let d = tt.swap_word(w).mul(&w.inverse());
    match word_verdict(&tt.tower, tt.tower.height(), &d, opts) {
        Verdict::Unknown => limit_oracle(&tt.tower, &d, budget),
        v => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::GlueOptions;

    fn single_flat(peg: Word, rank: usize) -> Tower {
        Tower::new(2).unwrap().glue_abelian_flat(peg, rank, &GlueOptions::default()).unwrap()
    }

    #[test]
    fn growth_literals_round_trip() {
        for s in ["n", "n^2", "3*n", "2*n^3", "5"] {
            assert_eq!(s.parse::<Growth>().unwrap().to_string(), s);
        }
        let sch: GrowthSchedule = "n^2, n; 3*n".parse().unwrap();
        assert_eq!(sch.to_string(), "n^2, n; 3*n");
        assert!("n^".parse::<Growth>().is_err());
        assert!("x".parse::<Growth>().is_err());
    }

    #[test]
    fn schedule_validation_and_threshold() {
        assert!("n^2, n".parse::<GrowthSchedule>().unwrap().validate().is_ok());
        assert!("n, n^2".parse::<GrowthSchedule>().unwrap().validate().is_err());
        assert!("5".parse::<GrowthSchedule>().unwrap().validate().is_err());
        let s: GrowthSchedule = "n^2, 10*n".parse().unwrap();
        assert_eq!(s.threshold(), 11);
        let d: GrowthSchedule = "n^3, n^2, n".parse().unwrap();
        assert!(d.max_ratio(50).unwrap() < Ratio::new(1, 10));
    }

    #[test]
    fn families_pass_checker() {
        for k in 1..=3 {
            for n in [2u64, 3, 7] {
                let fam = gen_smallcanc_family(k, n, 2).unwrap();
                assert!(max_piece_ratio(&fam) < Ratio::new(1, n as usize), "k={k} n={n}");
                let lens: Vec<usize> = fam.iter().map(Word::len).collect();
                let (lo, hi) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
                assert!(hi <= 2 * lo);
            }
        }
        assert_eq!(gen_smallcanc_family(1, 2, 1), Err(TestSeqError::BaseRank));
    }

    #[test]
    fn single_flat_point() {
        let t = single_flat(Word::gen(0), 2);
        let ord = OrderingWitness::natural(&t);
        let sch: GrowthSchedule = "n^2, n".parse().unwrap();
        let p = gen_sequence_point(&t, &ord, &sch, 4).unwrap();
        assert_eq!(p.images[2], Word::gen(0).pow(16));
        assert_eq!(p.images[3], Word::gen(0).pow(4));
        assert!(verify_point(&t, &ord, &sch, &p, None).passed());
        // Swapped exponents fail the ratio check.
        let mut bad = p.clone();
        bad.images.swap(2, 3);
        let rep = verify_point(&t, &ord, &sch, &bad, None);
        assert!(rep.failures().iter().any(|i| i.name == "ratio:1"), "{rep}");
        // Rank one: h_5(z) = e1^5.
        let t1 = single_flat(Word::gen(0), 1);
        let o1 = OrderingWitness::natural(&t1);
        let s1 = GrowthSchedule::default_for(&t1, &o1.order).unwrap();
        assert_eq!(gen_sequence_point(&t1, &o1, &s1, 5).unwrap().images[2], Word::gen(0).pow(5));
    }

    #[test]
    fn free_factor_points_dominate() {
        let t = Tower::new(2).unwrap().glue_free_factor(1).unwrap();
        let t = t.glue_abelian_flat(Word::gen(2), 1, &GlueOptions::default()).unwrap();
        let ord = OrderingWitness::natural(&t);
        let sch = GrowthSchedule::default_for(&t, &ord.order).unwrap();
        for n in [1, 2, 5] {
            let p = gen_sequence_point(&t, &ord, &sch, n).unwrap();
            let rep = verify_point(&t, &ord, &sch, &p, None);
            assert!(rep.passed(), "n={n}\n{rep}");
        }
    }

    #[test]
    fn surface_points_kill_relators() {
        let s = Word::commutator(&Word::gen(0), &Word::gen(1));
        let t = Tower::new(2).unwrap().glue_surface_flat(1, vec![s], vec![Word::gen(0), Word::gen(1)], &GlueOptions::default()).unwrap();
        let ord = OrderingWitness::natural(&t);
        let p0 = gen_surface_point(&t, &ord, 0, 0).unwrap();
        assert_eq!(p0.images, t.composite_retraction(1).images);
        let p3 = gen_surface_point(&t, &ord, 3, 0).unwrap();
        assert!(check_morphism_free(&t.presentation(), &p3.images).passed());
        assert_ne!(p3.images[2], Word::gen(0));
        let sch = GrowthSchedule { flats: Vec::new() };
        assert!(verify_point(&t, &ord, &sch, &p3, None).passed());
    }

    #[test]
    fn limit_oracle_is_one_sided() {
        let t = single_flat(Word::from_letters([1, 1, 2, 2]), 2);
        let z1 = Word::gen(2);
        match limit_oracle(&t, &z1, 5) {
            Verdict::NonTrivial(w) => assert_eq!(w.morphism.id, "testseq:n=1"),
            v => panic!("{v}"),
        }
        let rel = t.presentation().relators[0].clone();
        assert!(limit_oracle(&t, &rel, 5).is_unknown());
    }
}
