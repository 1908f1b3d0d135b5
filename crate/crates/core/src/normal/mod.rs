//! Presentations, morphisms, relator certificates and word-problem verdicts.
//!
//! A [`Verdict`] is three-valued. `Trivial` carries a product of relator
//! conjugates that freely equals the word; `NonTrivial` carries a morphism to
//! the base free group under which the word survives.

mod reduce;
mod solver;

use std::fmt;

use crate::word::{Basis, Word, WordError};

pub use reduce::{amalgam_reduce, hnn_reduce, EdgeOracle, GenericEdge, GenericHnn, HnnOracle, HnnWord, Side, Syllable, Tri, VertexKind};
pub use solver::{peg_carrier_conjugacy, word_verdict, Solver, VerdictOptions};

/// Generators plus relators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    pub gens: Vec<String>,
    pub relators: Vec<Word>,
}

impl Presentation {
    pub fn new(gens: Vec<String>, relators: Vec<Word>) -> Self {
        Presentation { gens, relators }
    }

    pub fn free(gens: Vec<String>) -> Self {
        Presentation { gens, relators: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.gens.len()
    }

    pub fn basis(&self) -> Result<Basis, WordError> {
        Basis::new(self.gens.clone())
    }

    pub fn parse_word(&self, s: &str) -> Result<Word, WordError> {
        crate::word::parse_word(s, &self.gens)
    }

    pub fn format_word(&self, w: &Word) -> String {
        w.display(&self.gens).to_string()
    }

    /// Parses the canonical `< g1 g2 | r1, r2 >` form.
    pub fn parse(s: &str) -> Result<Self, WordError> {
        let t = s.trim();
        let inner = t
            .strip_prefix('<')
            .and_then(|x| x.strip_suffix('>'))
            .ok_or(WordError::Parse { pos: 0, msg: "expected `< gens | relators >`".into() })?;
        let bar = inner.find('|').ok_or(WordError::Parse { pos: 0, msg: "missing `|`".into() })?;
        let gens: Vec<String> = inner[..bar].split_whitespace().map(String::from).collect();
        Basis::new(gens.clone())?;
        let mut relators = Vec::new();
        for part in inner[bar + 1..].split(',') {
            if part.trim().is_empty() {
                continue;
            }
            let w = crate::word::parse_word(part, &gens)?;
            if !w.is_identity() {
                relators.push(w);
            }
        }
        Ok(Presentation { gens, relators })
    }
}

impl fmt::Display for Presentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "< {} |", self.gens.join(" "))?;
        let rels: Vec<String> = self.relators.iter().map(|r| self.format_word(r)).collect();
        if rels.is_empty() {
            write!(f, " >")
        } else {
            write!(f, " {} >", rels.join(", "))
        }
    }
}

/// A map on generators, given by images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Morphism {
    pub id: String,
    pub images: Vec<Word>,
}

impl Morphism {
    pub fn new(id: impl Into<String>, images: Vec<Word>) -> Self {
        Morphism { id: id.into(), images }
    }

    pub fn identity(rank: usize) -> Self {
        Morphism { id: "id".into(), images: (0..rank).map(Word::gen).collect() }
    }

    pub fn source_rank(&self) -> usize {
        self.images.len()
    }

    pub fn apply(&self, w: &Word) -> Result<Word, MorphismError> {
        if !w.fits(self.images.len()) {
            return Err(MorphismError::MissingImage { index: w.support_rank() - 1 });
        }
        Ok(w.substitute(&self.images))
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Morphism) -> Result<Morphism, MorphismError> {
        let images = self.images.iter().map(|w| other.apply(w)).collect::<Result<_, _>>()?;
        Ok(Morphism { id: format!("{}∘{}", other.id, self.id), images })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MorphismError {
    #[error("generator {index} has no image")]
    MissingImage { index: usize },
}

/// Evaluates `w` along a chain of morphisms applied left to right.
pub fn eval(chain: &[Morphism], w: &Word) -> Result<Word, MorphismError> {
    let mut cur = w.clone();
    for m in chain {
        cur = m.apply(&cur)?;
    }
    Ok(cur)
}

/// One factor `conj · relator^sign · conj⁻¹` of a triviality certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conj {
    pub conj: Word,
    pub rel: usize,
    pub sign: i8,
}

/// Product of relator conjugates.
pub type Certificate = Vec<Conj>;

/// Multiplies out a certificate against `relators`.
pub fn replay(cert: &[Conj], relators: &[Word]) -> Word {
    let mut out = Word::identity();
    for c in cert {
        let r = if c.sign < 0 { relators[c.rel].inverse() } else { relators[c.rel].clone() };
        out.mul_assign(&r.conjugate_by(&c.conj));
    }
    out
}

/// Conjugates every factor of a certificate by `g`.
pub(crate) fn conj_cert(cert: &[Conj], g: &Word) -> Certificate {
    cert.iter().map(|c| Conj { conj: g.mul(&c.conj), rel: c.rel, sign: c.sign }).collect()
}

/// Certificate for the inverse element.
pub(crate) fn invert_cert(cert: &[Conj]) -> Certificate {
    cert.iter().rev().map(|c| Conj { conj: c.conj.clone(), rel: c.rel, sign: -c.sign }).collect()
}

/// A morphism to the base free group under which a word survives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub morphism: Morphism,
}

/// Three-valued answer to "is `w` trivial?".
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Trivial(Certificate),
    NonTrivial(Witness),
    Unknown,
}

impl Verdict {
    pub fn is_trivial(&self) -> bool {
        matches!(self, Verdict::Trivial(_))
    }

    pub fn is_nontrivial(&self) -> bool {
        matches!(self, Verdict::NonTrivial(_))
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Verdict::Unknown)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Trivial(_) => write!(f, "trivial"),
            Verdict::NonTrivial(w) => write!(f, "nontrivial witness={}", w.morphism.id),
            Verdict::Unknown => write!(f, "unknown"),
        }
    }
}

/// Outcome of a relator-preservation check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MorphismCheck {
    /// Every relator image was decided trivial.
    Exact(bool),
    /// Some image was undecided; `passed` reports `samples` random evaluations to the base.
    Sampled { samples: usize, passed: bool },
}

impl MorphismCheck {
    pub fn passed(&self) -> bool {
        match self {
            MorphismCheck::Exact(b) => *b,
            MorphismCheck::Sampled { passed, .. } => *passed,
        }
    }
}

/// Relator check for a morphism into a free group: images must reduce to 1.
pub fn check_morphism_free(source: &Presentation, images: &[Word]) -> MorphismCheck {
    MorphismCheck::Exact(source.relators.iter().all(|r| r.substitute(images).is_identity()))
}

/// Relator check for a morphism into a tower level.
pub fn check_morphism_tower(
    source: &Presentation,
    images: &[Word],
    target: &crate::tower::Tower,
    level: usize,
    opts: &VerdictOptions,
) -> MorphismCheck {
    let mut undecided = Vec::new();
    for r in &source.relators {
        let img = r.substitute(images);
        match word_verdict(target, level, &img, opts) {
            Verdict::Trivial(_) => {}
            Verdict::NonTrivial(_) => return MorphismCheck::Exact(false),
            Verdict::Unknown => undecided.push(img),
        }
    }
    if undecided.is_empty() {
        return MorphismCheck::Exact(true);
    }
    let homs = target.sample_homs(level, opts.seed, opts.samples);
    let passed = homs.iter().all(|h| undecided.iter().all(|w| w.substitute(&h.images).is_identity()));
    MorphismCheck::Sampled { samples: homs.len(), passed }
}

/// Bounded best-first search for a relator certificate of `w`.
///
/// Moves are cyclic rotations and replacements `u → v` where `u·v⁻¹` is a
/// cyclic rotation of a relator or its inverse with `|v| ≤ |u|`. At most
/// `budget` states are expanded. `None` means no certificate was found.
pub fn rewrite_search(w: &Word, relators: &[Word], budget: usize) -> Option<Certificate> {
    use std::collections::{BinaryHeap, HashSet};
    use std::cmp::Reverse;

    // Every rotation of every relator and inverse, split into (u, v, conj, rel, sign)
    // with u·v⁻¹ = conj · r^sign · conj⁻¹.
    let mut moves: Vec<(Word, Word, Word, usize, i8)> = Vec::new();
    for (idx, r) in relators.iter().enumerate() {
        let (c0, core) = r.cyclic_reduce();
        for sign in [1i8, -1] {
            let base = if sign > 0 { core.clone() } else { core.inverse() };
            let n = base.len();
            for k in 0..n {
                let rho = base.rotate(k);
                // rho = g · base · g⁻¹ with g = base[..k]⁻¹; base = c0⁻¹ r^sign c0.
                let g = base.prefix(k).inverse().mul(&c0.inverse());
                for cut in (n + 1) / 2..=n {
                    let u = rho.prefix(cut);
                    let v = rho.suffix_from(cut).inverse();
                    moves.push((u, v, g.clone(), idx, sign));
                }
            }
        }
    }

    struct State {
        word: Word,
        conj: Word,
        cert: Certificate,
    }
    let mut states: Vec<State> = vec![State { word: w.clone(), conj: Word::identity(), cert: Vec::new() }];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((w.len(), 0usize)));
    let mut seen: HashSet<Word> = HashSet::new();
    seen.insert(w.clone());
    let mut expanded = 0usize;
    while let Some(Reverse((_, id))) = heap.pop() {
        let (word, conj, cert) = {
            let s = &states[id];
            (s.word.clone(), s.conj.clone(), s.cert.clone())
        };
        if word.is_identity() {
            return Some(cert);
        }
        expanded += 1;
        if expanded > budget {
            return None;
        }
        let mut push = |nw: Word, nconj: Word, ncert: Certificate, states: &mut Vec<State>, heap: &mut BinaryHeap<Reverse<(usize, usize)>>| {
            if nw.is_identity() || seen.insert(nw.clone()) {
                states.push(State { word: nw.clone(), conj: nconj, cert: ncert });
                heap.push(Reverse((nw.len(), states.len() - 1)));
            }
        };
        // Rotation by one letter: word = x · (rest·x) · x⁻¹.
        if word.len() > 1 {
            let x = word.prefix(1);
            let rot = word.suffix_from(1).mul(&x);
            push(rot, conj.mul(&x), cert.clone(), &mut states, &mut heap);
        }
        let letters = word.letters();
        for (u, v, g, idx, sign) in &moves {
            let ul = u.letters();
            if ul.len() > letters.len() {
                continue;
            }
            for i in 0..=letters.len() - ul.len() {
                if &letters[i..i + ul.len()] != ul {
                    continue;
                }
                let left = word.prefix(i);
                let right = word.suffix_from(i + ul.len());
                let nw = left.mul(v).mul(&right);
                let mut ncert = cert.clone();
                ncert.push(Conj { conj: conj.mul(&left).mul(g), rel: *idx, sign: *sign });
                push(nw, conj.clone(), ncert, &mut states, &mut heap);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_and_parse() {
        let p = Presentation::parse("< x1 x2 | x1*x2*x1^-1*x2^-1 >").unwrap();
        assert_eq!(p.to_string(), "< x1 x2 | x1*x2*x1^-1*x2^-1 >");
        let q = Presentation::free(vec!["e1".into(), "e2".into()]);
        assert_eq!(q.to_string(), "< e1 e2 | >");
        assert_eq!(Presentation::parse(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn morphism_checks_on_free_targets() {
        let src = Presentation::parse("< x1 x2 e1 e2 | x1*x2*x1^-1*x2^-1*e2*e1*e2^-1*e1^-1 >").unwrap();
        let good = vec![Word::gen(2), Word::gen(3), Word::gen(2), Word::gen(3)];
        assert_eq!(check_morphism_free(&src, &good), MorphismCheck::Exact(true));
        let bad = vec![Word::gen(2), Word::gen(2), Word::gen(2), Word::gen(3)];
        assert_eq!(check_morphism_free(&src, &bad), MorphismCheck::Exact(false));
        let empty = Presentation::free(vec!["a".into()]);
        assert!(check_morphism_free(&empty, &[Word::gen(5)]).passed());
    }

    #[test]
    fn eval_is_functorial() {
        let f = Morphism::new("f", vec![Word::from_letters([1, 2]), Word::from_letters([2])]);
        let g = Morphism::new("g", vec![Word::from_letters([2]), Word::from_letters([1, 1])]);
        let w = Word::from_letters([1, -2, 1]);
        let gf = f.then(&g).unwrap();
        assert_eq!(eval(&[f.clone(), g.clone()], &w).unwrap(), gf.apply(&w).unwrap());
        assert_eq!(eval(&[], &w).unwrap(), w);
        assert!(f.apply(&Word::gen(4)).is_err());
    }

    #[test]
    fn certificates_replay() {
        let rels = vec![Word::from_letters([1, 2, -1, -2])];
        let cert = vec![Conj { conj: Word::gen(0), rel: 0, sign: 1 }, Conj { conj: Word::identity(), rel: 0, sign: -1 }];
        let w = replay(&cert, &rels);
        assert_eq!(replay(&invert_cert(&cert), &rels), w.inverse());
        let g = Word::gen(1);
        assert_eq!(replay(&conj_cert(&cert, &g), &rels), w.conjugate_by(&g));
    }

    #[test]
    fn rewrite_search_certifies() {
        // ⟨a, b | [a,b]⟩: b a b⁻¹ a⁻¹ and a² b a⁻² b⁻¹ are trivial.
        let rels = vec![Word::from_letters([1, 2, -1, -2])];
        for w in [Word::from_letters([2, 1, -2, -1]), Word::from_letters([1, 1, 2, -1, -1, -2]), Word::from_letters([2, 1, 1, -2, -1, -1])] {
            let cert = rewrite_search(&w, &rels, 500).expect("certificate");
            assert_eq!(replay(&cert, &rels), w);
        }
        assert!(rewrite_search(&Word::from_letters([1, 2]), &rels, 200).is_none());
    }

    #[test]
    fn verdict_serialization() {
        assert_eq!(Verdict::Trivial(vec![]).to_string(), "trivial");
        assert_eq!(Verdict::Unknown.to_string(), "unknown");
        let w = Verdict::NonTrivial(Witness { morphism: Morphism::new("retract", vec![]) });
        assert_eq!(w.to_string(), "nontrivial witness=retract");
    }
}
