//! Reduced forms in amalgamated products and HNN extensions.
//!
//! Both factors are written over one shared alphabet, so merging two
//! same-side syllables is concatenation followed by free reduction. Edge
//! membership is delegated to an oracle that may answer `Unknown`.

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::dioph::{IntMatrix, Lattice};
use crate::word::{primitive_root, Word};

/// Three-valued membership answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tri<T> {
    Yes(T),
    No,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syllable {
    pub side: Side,
    pub word: Word,
}

impl Syllable {
    pub fn new(side: Side, word: Word) -> Self {
        Syllable { side, word }
    }
}

/// Edge-group membership for `A ∗_C B`.
pub trait EdgeOracle {
    /// If `w` (an element of `side`) lies in `C`, the same element written on the other side.
    fn cross(&self, side: Side, w: &Word) -> Tri<Word>;
}

/// Merges neighbours on the same side and drops empty syllables.
fn normalize(seq: &[Syllable]) -> Vec<Syllable> {
    let mut out: Vec<Syllable> = Vec::new();
    for s in seq {
        if s.word.is_identity() {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.side == s.side => {
                last.word.mul_assign(&s.word);
                if last.word.is_identity() {
                    out.pop();
                }
            }
            _ => out.push(s.clone()),
        }
    }
    out
}

/// Pinches syllables lying in the edge group until none remain (or one
/// syllable is left). Returns `None` if the oracle could not decide.
pub fn amalgam_reduce<O: EdgeOracle + ?Sized>(seq: &[Syllable], oracle: &O) -> Option<Vec<Syllable>> {
    let mut cur = normalize(seq);
    'outer: loop {
        if cur.len() <= 1 {
            return Some(cur);
        }
        for k in 0..cur.len() {
            match oracle.cross(cur[k].side, &cur[k].word) {
                Tri::Yes(img) => {
                    let side = cur[k].side.other();
                    cur[k] = Syllable::new(side, img);
                    cur = normalize(&cur);
                    continue 'outer;
                }
                Tri::No => {}
                Tri::Unknown => return None,
            }
        }
        return Some(cur);
    }
}

/// `g₀ t^{ε₁} g₁ ⋯ t^{εₖ} gₖ` with base-group words `gᵢ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HnnWord {
    pub base: Vec<Word>,
    pub stable: Vec<i8>,
}

impl HnnWord {
    /// Splits a word at occurrences of the stable letter `t` (a 1-based letter value).
    pub fn split(w: &Word, t: i32) -> Self {
        let mut base = vec![Word::identity()];
        let mut stable = Vec::new();
        for &l in w.letters() {
            if l == t || l == -t {
                stable.push(if l == t { 1 } else { -1 });
                base.push(Word::identity());
            } else {
                base.last_mut().unwrap().mul_assign(&Word::from_letters([l]));
            }
        }
        HnnWord { base, stable }
    }

    /// Reassembles the word with stable letter `t`.
    pub fn join(&self, t: i32) -> Word {
        let mut out = self.base[0].clone();
        for (i, &e) in self.stable.iter().enumerate() {
            out.mul_assign(&Word::from_letters([t * e as i32]));
            out.mul_assign(&self.base[i + 1]);
        }
        out
    }

    pub fn stable_len(&self) -> usize {
        self.stable.len()
    }
}

/// Associated-subgroup membership for an HNN extension with relations
/// `t · f_ē(c) · t⁻¹ = f_e(c)`.
pub trait HnnOracle {
    /// `t^ε g t^{-ε}` as a base word when `g` lies in the relevant subgroup.
    fn conjugate_through(&self, eps: i8, g: &Word) -> Tri<Word>;
}

/// Britton reduction: removes every pinch `t^ε g t^{-ε}`.
pub fn hnn_reduce<O: HnnOracle + ?Sized>(w: &HnnWord, oracle: &O) -> Option<HnnWord> {
    let mut cur = w.clone();
    'outer: loop {
        for k in 0..cur.stable.len().saturating_sub(1) {
            let eps = cur.stable[k];
            if cur.stable[k + 1] != -eps {
                continue;
            }
            match oracle.conjugate_through(eps, &cur.base[k + 1]) {
                Tri::Yes(h) => {
                    let merged = Word::product([&cur.base[k], &h, &cur.base[k + 2]]);
                    cur.base.splice(k..k + 3, [merged]);
                    cur.stable.drain(k..k + 2);
                    continue 'outer;
                }
                Tri::No => {}
                Tri::Unknown => return None,
            }
        }
        return Some(cur);
    }
}

/// A vertex group whose edge-subgroup membership is decidable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VertexKind {
    /// Free on its letters.
    Free,
    /// Free abelian on the listed 0-based generator indices.
    Abelian { gens: Vec<usize> },
}

impl VertexKind {
    fn coords(&self, w: &Word) -> Vec<BigInt> {
        match self {
            VertexKind::Abelian { gens } => gens.iter().map(|&g| BigInt::from(w.exponent_sum(g))).collect(),
            VertexKind::Free => Vec::new(),
        }
    }

    /// Coefficients `c` with `w = ∏ eᵢ^{cᵢ}` in this vertex group.
    pub fn express(&self, edge: &[Word], w: &Word) -> Tri<Vec<i64>> {
        match self {
            VertexKind::Free => {
                if edge.len() != 1 {
                    return Tri::Unknown;
                }
                let e = &edge[0];
                if w.is_identity() {
                    return Tri::Yes(vec![0]);
                }
                if e.is_identity() {
                    return Tri::No;
                }
                let (re, ke) = primitive_root(e).expect("non-identity");
                let (rw, kw) = primitive_root(w).expect("non-identity");
                let sign = if rw == re {
                    1
                } else if rw == re.inverse() {
                    -1
                } else {
                    return Tri::No;
                };
                if kw % ke != 0 {
                    return Tri::No;
                }
                Tri::Yes(vec![sign * (kw / ke) as i64])
            }
            VertexKind::Abelian { gens } => {
                let cols: Vec<Vec<BigInt>> = edge.iter().map(|e| self.coords(e)).collect();
                let m = IntMatrix::from_cols(gens.len(), &cols);
                let target = self.coords(w);
                // Columns of an injective edge map are independent, so coordinates are unique.
                let lat = Lattice::span(&m);
                if lat.rank() != edge.len() {
                    return Tri::Unknown;
                }
                let Some(y) = lat.coordinates(&target) else { return Tri::No };
                // y is in Hermite coordinates; map back through the transform.
                let hf = crate::dioph::hnf(&m);
                let full: Vec<BigInt> = {
                    let mut v = y.clone();
                    v.resize(edge.len(), BigInt::from(0));
                    hf.u.mul_vec(&v)
                };
                match full.iter().map(|x| x.to_i64()).collect::<Option<Vec<i64>>>() {
                    Some(c) => Tri::Yes(c),
                    None => Tri::Unknown,
                }
            }
        }
    }
}

fn power_product(gens: &[Word], coeffs: &[i64]) -> Word {
    let mut out = Word::identity();
    for (g, &c) in gens.iter().zip(coeffs) {
        out.mul_assign(&g.pow(c));
    }
    out
}

/// Amalgam over a free abelian edge group with images `a_edge` in A and `b_edge` in B.
#[derive(Clone, Debug)]
pub struct GenericEdge {
    pub a_kind: VertexKind,
    pub b_kind: VertexKind,
    pub a_edge: Vec<Word>,
    pub b_edge: Vec<Word>,
}

impl EdgeOracle for GenericEdge {
    fn cross(&self, side: Side, w: &Word) -> Tri<Word> {
        let (kind, from, to) = match side {
            Side::A => (&self.a_kind, &self.a_edge, &self.b_edge),
            Side::B => (&self.b_kind, &self.b_edge, &self.a_edge),
        };
        match kind.express(from, w) {
            Tri::Yes(c) => Tri::Yes(power_product(to, &c)),
            Tri::No => Tri::No,
            Tri::Unknown => Tri::Unknown,
        }
    }
}

/// HNN extension of one decidable vertex group: `t · bar(c) · t⁻¹ = fwd(c)`.
#[derive(Clone, Debug)]
pub struct GenericHnn {
    pub kind: VertexKind,
    pub fwd: Vec<Word>,
    pub bar: Vec<Word>,
}

impl HnnOracle for GenericHnn {
    fn conjugate_through(&self, eps: i8, g: &Word) -> Tri<Word> {
        let (from, to) = if eps > 0 { (&self.bar, &self.fwd) } else { (&self.fwd, &self.bar) };
        match self.kind.express(from, g) {
            Tri::Yes(c) => Tri::Yes(power_product(to, &c)),
            Tri::No => Tri::No,
            Tri::Unknown => Tri::Unknown,
        }
    }
}
