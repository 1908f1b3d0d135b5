//! Word problem in tower levels by iterated amalgam normal forms.
//!
//! Level `i` is built flat by flat, each step an amalgam `G ∗_C B` with `C`
//! cyclic: the peg for abelian flats (with `B` free abelian on the peg and
//! the outermost generator block), the boundary for single-boundary surface
//! flats (with `B` free on the surface letters), trivial for free factors.

use std::collections::HashMap;

use super::{conj_cert, invert_cert, replay, Certificate, Conj, Morphism, Tri, Verdict, Witness};
use crate::tower::{surface_word, Flat, FlatKind, Tower};
use crate::word::{carriers_conjugate, is_conjugate_cyclic, primitive_root, Word, WordError};

/// Budgets and seed for [`word_verdict`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerdictOptions {
    pub seed: u64,
    /// Morphisms tried before the normal-form computation.
    pub samples: usize,
    /// Morphisms tried when the normal form proves nontriviality.
    pub extended: usize,
    /// Nesting bound for edge-membership recursion.
    pub depth: usize,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        VerdictOptions { seed: 0, samples: 16, extended: 400, depth: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tok {
    L(i32),
    P(i8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Syl {
    A(Word),
    B(Vec<Tok>),
}

/// Normal-form solver for one tower level.
pub struct Solver<'a> {
    level: usize,
    flats: Vec<&'a Flat>,
    rels: Vec<Word>,
    index: HashMap<Word, usize>,
    homs: Vec<Morphism>,
    depth: usize,
}

impl<'a> Solver<'a> {
    pub fn new(tower: &'a Tower, level: usize, opts: &VerdictOptions) -> Self {
        let level = level.min(tower.height());
        let flats: Vec<&Flat> = tower.floors()[..level].iter().flat_map(|f| f.flats.iter()).collect();
        let rels = tower.relators_at(level);
        let index = crate::tower::relator_index(&rels);
        let homs = tower.sample_homs(level, opts.seed, opts.samples);
        Solver { level, flats, rels, index, homs, depth: opts.depth }
    }

    pub fn relators(&self) -> &[Word] {
        &self.rels
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `Yes(cert)` with `replay(cert) = w` freely, `No` if `w ≠ 1`.
    pub fn decide(&self, w: &Word) -> Tri<Certificate> {
        self.decide_at(self.flats.len(), w, 0)
    }

    fn rel(&self, w: &Word) -> usize {
        *self.index.get(w).expect("relator present in level presentation")
    }

    fn decide_at(&self, s: usize, w: &Word, depth: usize) -> Tri<Certificate> {
        if w.is_identity() {
            return Tri::Yes(Vec::new());
        }
        if s == 0 {
            return Tri::No;
        }
        if depth > self.depth {
            return Tri::Unknown;
        }
        let f = self.flats[s - 1];
        let own = |l: i32| f.gens.contains(&(l.unsigned_abs() as usize - 1));
        if !w.letters().iter().any(|&l| own(l)) {
            return self.decide_at(s - 1, w, depth);
        }
        if let FlatKind::Surface(sf) = &f.kind {
            if sf.boundary.len() != 1 || sf.genus == 0 {
                return Tri::Unknown;
            }
        }
        let mut syls: Vec<Syl> = Vec::new();
        for &l in w.letters() {
            if own(l) {
                match syls.last_mut() {
                    Some(Syl::B(t)) => t.push(Tok::L(l)),
                    _ => syls.push(Syl::B(vec![Tok::L(l)])),
                }
            } else {
                match syls.last_mut() {
                    Some(Syl::A(u)) => u.mul_assign(&Word::from_letters([l])),
                    _ => syls.push(Syl::A(Word::from_letters([l]))),
                }
            }
        }
        let mut cert: Certificate = Vec::new();
        loop {
            normalize(&mut syls);
            match syls.len() {
                0 => return Tri::Yes(cert),
                1 => {
                    return match &syls[0] {
                        Syl::A(u) => match self.decide_at(s - 1, u, depth + 1) {
                            Tri::Yes(t) => {
                                cert.extend(t);
                                Tri::Yes(cert)
                            }
                            other => other,
                        },
                        Syl::B(toks) => match &f.kind {
                            FlatKind::Abelian(_) => {
                                let (t, c, e) = self.abelian_normal(f, toks);
                                if c == 0 && e.iter().all(|&x| x == 0) {
                                    cert.extend(t);
                                    Tri::Yes(cert)
                                } else {
                                    Tri::No
                                }
                            }
                            _ => Tri::No,
                        },
                    }
                }
                _ => {}
            }
            let mut unknown = false;
            let mut pinched = false;
            for k in 0..syls.len() {
                match self.cross(s, f, &syls[k], depth) {
                    Tri::Yes((t, new)) => {
                        let prefix = Word::product(syls[..k].iter().map(|x| self.syl_word(f, x)).collect::<Vec<_>>().iter());
                        cert.extend(conj_cert(&t, &prefix));
                        syls[k] = new;
                        pinched = true;
                        break;
                    }
                    Tri::No => {}
                    Tri::Unknown => unknown = true,
                }
            }
            if pinched {
                continue;
            }
            return if unknown { Tri::Unknown } else { Tri::No };
        }
    }

    fn peg(f: &Flat) -> Word {
        match &f.kind {
            FlatKind::Abelian(a) => a.peg.clone(),
            FlatKind::Surface(s) => s.boundary[0].clone(),
            FlatKind::Free { .. } => Word::identity(),
        }
    }

    fn syl_word(&self, f: &Flat, s: &Syl) -> Word {
        match s {
            Syl::A(u) => u.clone(),
            Syl::B(t) => toks_word(t, &Self::peg(f)),
        }
    }

    /// If the syllable lies in the edge group: a certificate for `x·x'⁻¹` and `x'`.
    fn cross(&self, s: usize, f: &Flat, syl: &Syl, depth: usize) -> Tri<(Certificate, Syl)> {
        match (syl, &f.kind) {
            (Syl::A(u), FlatKind::Free { .. }) => match self.decide_at(s - 1, u, depth + 1) {
                Tri::Yes(t) => Tri::Yes((t, Syl::B(Vec::new()))),
                Tri::No => Tri::No,
                Tri::Unknown => Tri::Unknown,
            },
            (Syl::A(u), FlatKind::Abelian(a)) => match self.member(s - 1, u, &a.peg, depth) {
                Tri::Yes((t, k)) => {
                    let sign = if k < 0 { -1 } else { 1 };
                    Tri::Yes((t, Syl::B(vec![Tok::P(sign); k.unsigned_abs() as usize])))
                }
                Tri::No => Tri::No,
                Tri::Unknown => Tri::Unknown,
            },
            (Syl::A(u), FlatKind::Surface(sf)) => match self.member(s - 1, u, &sf.boundary[0], depth) {
                Tri::Yes((mut t, k)) => {
                    let sw = surface_word(f.gens.start, sf.genus);
                    t.extend(invert_cert(&self.surface_power_cert(f, k)));
                    Tri::Yes((t, Syl::B(sw.pow(k).letters().iter().map(|&l| Tok::L(l)).collect())))
                }
                Tri::No => Tri::No,
                Tri::Unknown => Tri::Unknown,
            },
            (Syl::B(_), FlatKind::Free { .. }) => Tri::No,
            (Syl::B(toks), FlatKind::Abelian(a)) => {
                let (t, c, e) = self.abelian_normal(f, toks);
                if e.iter().all(|&x| x == 0) {
                    Tri::Yes((t, Syl::A(a.peg.pow(c))))
                } else {
                    Tri::No
                }
            }
            (Syl::B(toks), FlatKind::Surface(sf)) => {
                let x = toks_word(toks, &Word::identity());
                let sw = surface_word(f.gens.start, sf.genus);
                if x.len() % sw.len() != 0 {
                    return Tri::No;
                }
                let m = (x.len() / sw.len()) as i64;
                let k = if x == sw.pow(m) {
                    m
                } else if x == sw.pow(-m) {
                    -m
                } else {
                    return Tri::No;
                };
                Tri::Yes((self.surface_power_cert(f, k), Syl::A(sf.boundary[0].pow(k))))
            }
        }
    }

    /// Certificate for `S^k · b^{-k}` where the flat relator is `S·b⁻¹`.
    fn surface_power_cert(&self, f: &Flat, k: i64) -> Certificate {
        let sf = f.surface().expect("surface flat");
        let sw = surface_word(f.gens.start, sf.genus);
        let b = &sf.boundary[0];
        let r = self.rel(&sw.mul(&b.inverse()));
        let m = k.unsigned_abs() as i64;
        let pos: Certificate = (0..m).rev().map(|j| Conj { conj: sw.pow(j), rel: r, sign: 1 }).collect();
        if k >= 0 {
            pos
        } else {
            conj_cert(&invert_cert(&pos), &b.pow(k))
        }
    }

    /// Membership of `u` (a stage-`s` element) in `⟨p⟩`: `u = replay(T)·p^k`.
    fn member(&self, s: usize, u: &Word, p: &Word, depth: usize) -> Tri<(Certificate, i64)> {
        if u.is_identity() {
            return Tri::Yes((Vec::new(), 0));
        }
        if p.is_identity() {
            return match self.decide_at(s, u, depth + 1) {
                Tri::Yes(t) => Tri::Yes((t, 0)),
                Tri::No => Tri::No,
                Tri::Unknown => Tri::Unknown,
            };
        }
        if s == 0 {
            return match power_of(u, p) {
                Some(k) => Tri::Yes((Vec::new(), k)),
                None => Tri::No,
            };
        }
        for h in &self.homs {
            let hp = p.substitute(&h.images);
            if hp.is_identity() {
                continue;
            }
            let hu = u.substitute(&h.images);
            let Some(k) = power_of(&hu, &hp) else { return Tri::No };
            return match self.decide_at(s, &u.mul(&p.pow(-k)), depth + 1) {
                Tri::Yes(t) => Tri::Yes((t, k)),
                Tri::No => Tri::No,
                Tri::Unknown => Tri::Unknown,
            };
        }
        Tri::Unknown
    }

    /// Rewrites an abelian-flat syllable as `P^c · ∏ aⱼ^{eⱼ}` over the peg and
    /// the outermost generator block.
    fn abelian_normal(&self, f: &Flat, toks: &[Tok]) -> (Certificate, i64, Vec<i64>) {
        let a = f.abelian().expect("abelian flat");
        let peg = &a.peg;
        let top = f.block(a.layers.len());
        let mut cur = toks.to_vec();
        let mut cert = Vec::new();
        // eliminate inner blocks through the defining relators
        loop {
            let Some(i) = cur.iter().position(|t| matches!(t, Tok::L(l) if !top.contains(&(l.unsigned_abs() as usize - 1))))
            else {
                break;
            };
            let Tok::L(l) = cur[i] else { unreachable!() };
            let g = l.unsigned_abs() as usize - 1;
            let off = g - f.gens.start;
            let (layer, row) = (off / a.rank, off % a.rank);
            let emb = &a.layers[layer];
            let next = f.block(layer + 1);
            let mut d_toks = Vec::new();
            let kp = to_i64(&emb.peg_col[row]);
            d_toks.extend(std::iter::repeat(Tok::P(kp.signum() as i8)).take(kp.unsigned_abs() as usize));
            for (j, aj) in next.clone().enumerate() {
                let e = to_i64(&emb.k[(row, j)]);
                let letter = (aj as i32 + 1) * e.signum() as i32;
                d_toks.extend(std::iter::repeat(Tok::L(letter)).take(e.unsigned_abs() as usize));
            }
            let d = toks_word(&d_toks, peg);
            let rho = self.rel(&Word::gen(g).mul(&d.inverse()));
            let x = toks_word(&cur[..i], peg);
            if l > 0 {
                cert.push(Conj { conj: x, rel: rho, sign: 1 });
                cur.splice(i..i + 1, d_toks);
            } else {
                cert.push(Conj { conj: x.mul(&d.inverse()), rel: rho, sign: -1 });
                cur.splice(i..i + 1, inv_toks(&d_toks));
            }
        }
        // sort: peg first, then the outer block in order
        let key = |t: &Tok| match t {
            Tok::P(_) => 0usize,
            Tok::L(l) => 1 + l.unsigned_abs() as usize,
        };
        cancel(&mut cur);
        let mut changed = true;
        while changed {
            changed = false;
            let mut i = 0;
            while i + 1 < cur.len() {
                if key(&cur[i]) > key(&cur[i + 1]) {
                    let (x, y) = (tok_word(&cur[i], peg), tok_word(&cur[i + 1], peg));
                    let rel_word = match (cur[i], cur[i + 1]) {
                        (Tok::L(p), Tok::L(q)) => {
                            let (lo, hi) = (p.unsigned_abs().min(q.unsigned_abs()), p.unsigned_abs().max(q.unsigned_abs()));
                            Word::commutator(&Word::gen(lo as usize - 1), &Word::gen(hi as usize - 1))
                        }
                        (Tok::L(p), Tok::P(_)) | (Tok::P(_), Tok::L(p)) => Word::commutator(&Word::gen(p.unsigned_abs() as usize - 1), peg),
                        _ => unreachable!("peg tokens share a key"),
                    };
                    let rho = self.rel(&rel_word);
                    let comm = Word::commutator(&x, &y);
                    let prefix = toks_word(&cur[..i], peg);
                    let (g, sign) = match is_conjugate_cyclic(&rel_word, &comm) {
                        Some(g) => (g, 1),
                        None => (is_conjugate_cyclic(&rel_word.inverse(), &comm).expect("commutator of commuting letters"), -1),
                    };
                    cert.push(Conj { conj: prefix.mul(&g), rel: rho, sign });
                    cur.swap(i, i + 1);
                    changed = true;
                    if cancel(&mut cur) {
                        i = 0;
                        continue;
                    }
                }
                i += 1;
            }
        }
        let mut c = 0i64;
        let mut e = vec![0i64; a.rank];
        for t in &cur {
            match *t {
                Tok::P(s) => c += s as i64,
                Tok::L(l) => e[l.unsigned_abs() as usize - 1 - top.start] += l.signum() as i64,
            }
        }
        (cert, c, e)
    }
}

fn to_i64(x: &num_bigint::BigInt) -> i64 {
    use num_traits::ToPrimitive;
    x.to_i64().expect("small exponent")
}

fn tok_word(t: &Tok, peg: &Word) -> Word {
    match *t {
        Tok::L(l) => Word::from_letters([l]),
        Tok::P(s) => {
            if s > 0 {
                peg.clone()
            } else {
                peg.inverse()
            }
        }
    }
}

fn toks_word(ts: &[Tok], peg: &Word) -> Word {
    let mut w = Word::identity();
    for t in ts {
        w.mul_assign(&tok_word(t, peg));
    }
    w
}

fn inv_toks(ts: &[Tok]) -> Vec<Tok> {
    ts.iter()
        .rev()
        .map(|t| match *t {
            Tok::L(l) => Tok::L(-l),
            Tok::P(s) => Tok::P(-s),
        })
        .collect()
}

fn inverse_pair(a: &Tok, b: &Tok) -> bool {
    match (a, b) {
        (Tok::L(x), Tok::L(y)) => *x == -*y,
        (Tok::P(x), Tok::P(y)) => *x == -*y,
        _ => false,
    }
}

/// Free cancellation of adjacent inverse tokens; reports whether anything changed.
fn cancel(ts: &mut Vec<Tok>) -> bool {
    let mut out: Vec<Tok> = Vec::with_capacity(ts.len());
    for t in ts.iter() {
        if out.last().map(|l| inverse_pair(l, t)).unwrap_or(false) {
            out.pop();
        } else {
            out.push(*t);
        }
    }
    let changed = out.len() != ts.len();
    *ts = out;
    changed
}

/// Merges neighbouring syllables of one side and drops empty ones.
fn normalize(syls: &mut Vec<Syl>) {
    let mut out: Vec<Syl> = Vec::new();
    for s in syls.drain(..) {
        let empty = match &s {
            Syl::A(u) => u.is_identity(),
            Syl::B(t) => t.is_empty(),
        };
        if empty {
            continue;
        }
        match (out.last_mut(), s) {
            (Some(Syl::A(u)), Syl::A(v)) => {
                u.mul_assign(&v);
                if u.is_identity() {
                    out.pop();
                }
            }
            (Some(Syl::B(t)), Syl::B(v)) => {
                t.extend(v);
                cancel(t);
                if t.is_empty() {
                    out.pop();
                }
            }
            (_, s) => out.push(s),
        }
    }
    *syls = out;
}

/// `k` with `u = p^k` in a free group, if any.
fn power_of(u: &Word, p: &Word) -> Option<i64> {
    if u.is_identity() {
        return Some(0);
    }
    let (rp, kp) = primitive_root(p).ok()?;
    let (ru, ku) = primitive_root(u).ok()?;
    let sign = if ru == rp {
        1
    } else if ru == rp.inverse() {
        -1
    } else {
        return None;
    };
    if ku % kp != 0 {
        return None;
    }
    Some(sign * (ku / kp) as i64)
}

/// Decides `w = 1` in level `level`: `NonTrivial` needs a separating morphism
/// to the base, `Trivial` carries a replayed relator certificate.
pub fn word_verdict(tower: &Tower, level: usize, w: &Word, opts: &VerdictOptions) -> Verdict {
    if w.is_identity() {
        return Verdict::Trivial(Vec::new());
    }
    let solver = Solver::new(tower, level, opts);
    if let Some(h) = solver.homs.iter().find(|h| !w.substitute(&h.images).is_identity()) {
        return Verdict::NonTrivial(Witness { morphism: h.clone() });
    }
    match solver.decide(w) {
        Tri::Yes(cert) => {
            if replay(&cert, &solver.rels) == *w {
                Verdict::Trivial(cert)
            } else {
                Verdict::Unknown
            }
        }
        Tri::No => {
            let wide = tower.sample_homs_spread(solver.level, opts.seed.wrapping_add(1), opts.extended, 64);
            match wide.into_iter().find(|h| !w.substitute(&h.images).is_identity()) {
                Some(h) => Verdict::NonTrivial(Witness { morphism: h }),
                None => Verdict::Unknown,
            }
        }
        Tri::Unknown => Verdict::Unknown,
    }
}

/// Whether two base pegs have conjugate carriers (up to inversion).
pub fn peg_carrier_conjugacy(tower: &Tower, p: &Word, q: &Word) -> Result<bool, WordError> {
    let rank = tower.base_rank();
    for w in [p, q] {
        if !w.fits(rank) {
            return Err(WordError::IndexOutOfRange { index: w.support_rank(), rank });
        }
    }
    carriers_conjugate(p, q)
}
