//! Free-group words over a ranked basis.
//!
//! A letter is a nonzero `i32`: `+(i+1)` is generator `i`, `-(i+1)` its inverse.
//! Words are always freely reduced. Names live in [`Basis`]; a [`Word`] is just
//! the letter sequence, so the same word value can be printed against any
//! basis that is large enough.

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use rand::Rng;
use thiserror::Error;

/// A signed generator index, `±(index + 1)`.
pub type Letter = i32;

/// Errors from building or parsing words.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WordError {
    #[error("letter index {index} out of range for basis of rank {rank}")]
    IndexOutOfRange { index: usize, rank: usize },
    #[error("zero is not a letter")]
    ZeroLetter,
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown generator `{name}` at byte {pos}")]
    UnknownGenerator { name: String, pos: usize },
    #[error("basis must be non-empty")]
    EmptyBasis,
    #[error("duplicate generator name `{0}`")]
    DuplicateName(String),
    #[error("invalid generator name `{0}`")]
    InvalidName(String),
    #[error("identity has no root or centralizer generator")]
    Identity,
}

/// A freely reduced word.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<Letter>);

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word{:?}", self.0)
    }
}

/// Pushes `l` onto a reduced stack, cancelling if it meets its inverse.
#[inline]
fn push_reduced(out: &mut Vec<Letter>, l: Letter) {
    if out.last() == Some(&-l) {
        out.pop();
    } else {
        out.push(l);
    }
}

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// The generator with 0-based index `i`.
    pub fn gen(i: usize) -> Self {
        Word(vec![i as Letter + 1])
    }

    /// Freely reduces a raw letter sequence. Panics on a zero letter.
    pub fn from_letters<I: IntoIterator<Item = Letter>>(raw: I) -> Self {
        let mut out = Vec::new();
        for l in raw {
            assert!(l != 0, "zero letter");
            push_reduced(&mut out, l);
        }
        Word(out)
    }

    /// Freely reduces `(index, sign)` pairs, checking indices against `rank`.
    pub fn reduce(raw: &[(usize, i8)], rank: usize) -> Result<Self, WordError> {
        let mut out = Vec::with_capacity(raw.len());
        for &(i, s) in raw {
            if i >= rank {
                return Err(WordError::IndexOutOfRange { index: i, rank });
            }
            let l = (i as Letter + 1) * if s < 0 { -1 } else { 1 };
            push_reduced(&mut out, l);
        }
        Ok(Word(out))
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn into_letters(self) -> Vec<Letter> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest generator index used plus one (0 for the identity).
    pub fn support_rank(&self) -> usize {
        self.0.iter().map(|l| l.unsigned_abs() as usize).max().unwrap_or(0)
    }

    /// True if every letter has index below `rank`.
    pub fn fits(&self, rank: usize) -> bool {
        self.support_rank() <= rank
    }

    pub fn inverse(&self) -> Self {
        Word(self.0.iter().rev().map(|l| -l).collect())
    }

    pub fn mul(&self, other: &Word) -> Self {
        let mut out = self.0.clone();
        for &l in &other.0 {
            push_reduced(&mut out, l);
        }
        Word(out)
    }

    /// Multiplies in place by `other` on the right.
    pub fn mul_assign(&mut self, other: &Word) {
        for &l in &other.0 {
            push_reduced(&mut self.0, l);
        }
    }

    /// Product of a sequence of words.
    pub fn product<'a, I: IntoIterator<Item = &'a Word>>(ws: I) -> Self {
        let mut out = Word::identity();
        for w in ws {
            out.mul_assign(w);
        }
        out
    }

    pub fn pow(&self, k: i64) -> Self {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let (conj, core) = base.cyclic_reduce();
        let mut body = Vec::with_capacity(core.len() * k.unsigned_abs() as usize);
        for _ in 0..k.unsigned_abs() {
            body.extend_from_slice(&core.0);
        }
        conj.mul(&Word(body)).mul(&conj.inverse())
    }

    /// `a b a⁻¹ b⁻¹`.
    pub fn commutator(a: &Word, b: &Word) -> Self {
        Word::product([a, b, &a.inverse(), &b.inverse()])
    }

    /// `g w g⁻¹`.
    pub fn conjugate_by(&self, g: &Word) -> Self {
        Word::product([g, self, &g.inverse()])
    }

    /// Splits `w = c · core · c⁻¹` with `core` cyclically reduced.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let s = &self.0;
        let (mut i, mut j) = (0usize, s.len());
        while j >= i + 2 && s[i] == -s[j - 1] {
            i += 1;
            j -= 1;
        }
        (Word(s[..i].to_vec()), Word(s[i..j].to_vec()))
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.0.len() < 2 || self.0[0] != -self.0[self.0.len() - 1]
    }

    /// Rotation `w[k..] w[..k]` of a cyclically reduced word.
    pub fn rotate(&self, k: usize) -> Word {
        if self.0.is_empty() {
            return Word::identity();
        }
        let k = k % self.0.len();
        let mut v = self.0[k..].to_vec();
        v.extend_from_slice(&self.0[..k]);
        Word(v)
    }

    /// Prefix of length `k` (as a word; prefixes of reduced words are reduced).
    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k].to_vec())
    }

    pub fn suffix_from(&self, k: usize) -> Word {
        Word(self.0[k..].to_vec())
    }

    /// Substitutes `images[i]` for generator `i` and reduces.
    pub fn substitute(&self, images: &[Word]) -> Word {
        let mut out = Vec::new();
        for &l in &self.0 {
            let img = &images[l.unsigned_abs() as usize - 1];
            if l > 0 {
                for &m in &img.0 {
                    push_reduced(&mut out, m);
                }
            } else {
                for &m in img.0.iter().rev() {
                    push_reduced(&mut out, -m);
                }
            }
        }
        Word(out)
    }

    /// Renumbers letters through `map` (0-based old index to 0-based new index).
    pub fn relabel(&self, map: &[usize]) -> Word {
        Word::from_letters(self.0.iter().map(|&l| {
            let n = map[l.unsigned_abs() as usize - 1] as Letter + 1;
            if l > 0 {
                n
            } else {
                -n
            }
        }))
    }

    /// Exponent sum of generator `i`.
    pub fn exponent_sum(&self, i: usize) -> i64 {
        let g = i as Letter + 1;
        self.0
            .iter()
            .map(|&l| {
                if l == g {
                    1
                } else if l == -g {
                    -1
                } else {
                    0
                }
            })
            .sum()
    }

    /// Formats against a name list.
    pub fn display<'a>(&'a self, names: &'a [String]) -> WordDisplay<'a> {
        WordDisplay { word: self, names }
    }
}

/// Helper returned by [`Word::display`].
pub struct WordDisplay<'a> {
    word: &'a Word,
    names: &'a [String],
}

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_identity() {
            return write!(f, "1");
        }
        for (k, &l) in self.word.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            let i = l.unsigned_abs() as usize - 1;
            match self.names.get(i) {
                Some(n) => write!(f, "{n}")?,
                None => write!(f, "?{i}")?,
            }
            if l < 0 {
                write!(f, "^-1")?;
            }
        }
        Ok(())
    }
}

/// Returns the unique root `ρ` and exponent `k ≥ 1` with `w = ρᵏ`, `ρ` not a
/// proper power. Works for any non-identity `w` (not only cyclically reduced).
pub fn primitive_root(w: &Word) -> Result<(Word, u64), WordError> {
    if w.is_identity() {
        return Err(WordError::Identity);
    }
    let (c, core) = w.cyclic_reduce();
    let (r, k) = cyclic_root(&core);
    Ok((r.conjugate_by(&c), k))
}

/// Root of a cyclically reduced non-identity word by smallest period.
fn cyclic_root(core: &Word) -> (Word, u64) {
    let s = core.letters();
    let n = s.len();
    // Smallest period d dividing n, via the prefix function.
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut k = pi[i - 1];
        while k > 0 && s[i] != s[k] {
            k = pi[k - 1];
        }
        if s[i] == s[k] {
            k += 1;
        }
        pi[i] = k;
    }
    let p = n - pi[n - 1];
    let d = if n % p == 0 { p } else { n };
    (Word(s[..d].to_vec()), (n / d) as u64)
}

/// True iff `u` and `v` commute in the free group.
pub fn commutes(u: &Word, v: &Word) -> bool {
    if u.is_identity() || v.is_identity() {
        return true;
    }
    let (ru, _) = primitive_root(u).expect("non-identity");
    let (rv, _) = primitive_root(v).expect("non-identity");
    ru == rv || ru == rv.inverse()
}

/// The primitive root generating the centralizer of `w`; the identity has
/// the whole group as centralizer and yields [`WordError::Identity`].
pub fn centralizer(w: &Word) -> Result<Word, WordError> {
    primitive_root(w).map(|(r, _)| r)
}

/// If `u` and `v` are conjugate returns `g` with `g u g⁻¹ = v`.
pub fn is_conjugate_cyclic(u: &Word, v: &Word) -> Option<Word> {
    let (cu, pu) = u.cyclic_reduce();
    let (cv, pv) = v.cyclic_reduce();
    if pu.len() != pv.len() {
        return None;
    }
    if pu.is_identity() {
        return Some(Word::identity());
    }
    let n = pu.len();
    // Find k with rot_k(pu) = pv by searching pv in pu·pu.
    let mut doubled = pu.0.clone();
    doubled.extend_from_slice(&pu.0);
    let k = find_subslice(&doubled[..2 * n - 1], &pv.0)?;
    // pv = a⁻¹ pu a with a = pu[..k]; so v = (cv a⁻¹ cu⁻¹) u (cu a cv⁻¹).
    let a = pu.prefix(k);
    Some(Word::product([&cv, &a.inverse(), &cu.inverse()]))
}

/// KMP search for `needle` in `hay`.
fn find_subslice(hay: &[Letter], needle: &[Letter]) -> Option<usize> {
    let m = needle.len();
    if m == 0 {
        return Some(0);
    }
    let mut pi = vec![0usize; m];
    for i in 1..m {
        let mut k = pi[i - 1];
        while k > 0 && needle[i] != needle[k] {
            k = pi[k - 1];
        }
        if needle[i] == needle[k] {
            k += 1;
        }
        pi[i] = k;
    }
    let mut k = 0;
    for (i, &c) in hay.iter().enumerate() {
        while k > 0 && c != needle[k] {
            k = pi[k - 1];
        }
        if c == needle[k] {
            k += 1;
        }
        if k == m {
            return Some(i + 1 - m);
        }
    }
    None
}

/// Carriers of `⟨p⟩` and `⟨q⟩` are conjugate: primitive roots agree up to
/// cyclic conjugacy and inversion.
pub fn carriers_conjugate(p: &Word, q: &Word) -> Result<bool, WordError> {
    let (rp, _) = primitive_root(p)?;
    let (rq, _) = primitive_root(q)?;
    Ok(is_conjugate_cyclic(&rp, &rq).is_some() || is_conjugate_cyclic(&rp, &rq.inverse()).is_some())
}

/// Largest piece ratio `|p| / |r|` over the symmetrized closure of `relators`.
///
/// Occurrences are all rotations of each cyclically reduced relator and of
/// its inverse. A piece is a common prefix of two distinct occurrences; its
/// ratio is taken against the shorter of the two relators, and is capped at 1.
pub fn max_piece_ratio(relators: &[Word]) -> Ratio<usize> {
    let cores: Vec<Word> = relators.iter().map(|r| r.cyclic_reduce().1).collect();
    if cores.is_empty() || cores.iter().all(|c| c.is_identity()) {
        return Ratio::from_integer(0);
    }
    // Symbol alphabet: letters map to 1..=2R; separators are unique above that.
    let rank = cores.iter().map(|c| c.support_rank()).max().unwrap_or(0) as u32;
    let sym = |l: Letter| -> u32 {
        let i = l.unsigned_abs() - 1;
        2 * i + 1 + u32::from(l < 0)
    };
    let mut text: Vec<u32> = Vec::new();
    // For each text position: Some((class length, occurrence id)) if it starts an occurrence.
    let mut starts: Vec<Option<usize>> = Vec::new();
    let mut next_sep = 2 * rank + 1;
    for c in &cores {
        if c.is_identity() {
            continue;
        }
        for w in [c.clone(), c.inverse()] {
            let n = w.len();
            for rep in 0..2 {
                for (k, &l) in w.letters().iter().enumerate() {
                    text.push(sym(l));
                    starts.push(if rep == 0 && k < n { Some(n) } else { None });
                }
            }
            text.push(next_sep);
            starts.push(None);
            next_sep += 1;
        }
    }
    let sa = suffix_array(&text);
    let lcp = lcp_array(&text, &sa);
    let mut classes: Vec<usize> = cores.iter().map(|c| c.len()).filter(|&l| l > 0).collect();
    classes.sort_unstable();
    classes.dedup();
    let class_of: HashMap<usize, usize> = classes.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    // running[c]: min LCP since the last occurrence of class c (None if none yet).
    let mut running: Vec<Option<usize>> = vec![None; classes.len()];
    let mut best = Ratio::from_integer(0usize);
    for (rank_pos, &p) in sa.iter().enumerate() {
        if rank_pos > 0 {
            let h = lcp[rank_pos];
            for r in running.iter_mut().flatten() {
                *r = (*r).min(h);
            }
        }
        if let Some(len) = starts[p] {
            for (ci, r) in running.iter().enumerate() {
                if let Some(h) = *r {
                    let m = len.min(classes[ci]);
                    let cand = Ratio::new(h.min(m), m);
                    if cand > best {
                        best = cand;
                    }
                }
            }
            running[class_of[&len]] = Some(usize::MAX);
        }
    }
    best
}

/// Prefix-doubling suffix array.
fn suffix_array(s: &[u32]) -> Vec<usize> {
    let n = s.len();
    let mut sa: Vec<usize> = (0..n).collect();
    let mut rank: Vec<usize> = s.iter().map(|&c| c as usize).collect();
    let mut tmp = vec![0usize; n];
    let mut k = 1;
    if n <= 1 {
        return sa;
    }
    loop {
        let key = |i: usize| (rank[i], if i + k < n { rank[i + k] + 1 } else { 0 });
        sa.sort_unstable_by_key(|&i| key(i));
        tmp[sa[0]] = 0;
        for w in 1..n {
            tmp[sa[w]] = tmp[sa[w - 1]] + usize::from(key(sa[w - 1]) < key(sa[w]));
        }
        std::mem::swap(&mut rank, &mut tmp);
        if rank[sa[n - 1]] == n - 1 {
            break;
        }
        k *= 2;
    }
    sa
}

/// Kasai LCP: `lcp[i]` is the common prefix of `sa[i-1]` and `sa[i]`.
fn lcp_array(s: &[u32], sa: &[usize]) -> Vec<usize> {
    let n = s.len();
    let mut rank = vec![0usize; n];
    for (i, &p) in sa.iter().enumerate() {
        rank[p] = i;
    }
    let mut lcp = vec![0usize; n];
    let mut h = 0usize;
    for i in 0..n {
        if rank[i] > 0 {
            let j = sa[rank[i] - 1];
            while i + h < n && j + h < n && s[i + h] == s[j + h] {
                h += 1;
            }
            lcp[rank[i]] = h;
            h = h.saturating_sub(1);
        } else {
            h = 0;
        }
    }
    lcp
}

/// Uniform random freely reduced word of length `len` over `rank` generators.
pub fn random_word<R: Rng + ?Sized>(rng: &mut R, rank: usize, len: usize) -> Word {
    let mut v: Vec<Letter> = Vec::with_capacity(len);
    while v.len() < len {
        let i = rng.gen_range(0..rank) as Letter + 1;
        let l = if rng.gen_bool(0.5) { i } else { -i };
        if v.last() == Some(&-l) {
            continue;
        }
        v.push(l);
    }
    Word(v)
}

/// Random cyclically reduced word of length `len` (`len ≥ 1`, `rank ≥ 1`).
pub fn random_cyclic_word<R: Rng + ?Sized>(rng: &mut R, rank: usize, len: usize) -> Word {
    loop {
        let w = random_word(rng, rank, len);
        if w.is_cyclically_reduced() {
            return w;
        }
    }
}

/// Ordered, distinct generator names.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Basis {
    names: Vec<String>,
}

/// True if `s` matches `[A-Za-z_][A-Za-z0-9_]*'*`.
pub fn is_valid_name(s: &str) -> bool {
    let body = s.trim_end_matches('\'');
    let mut cs = body.chars();
    match cs.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Basis {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(names: I) -> Result<Self, WordError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(WordError::EmptyBasis);
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !is_valid_name(n) {
                return Err(WordError::InvalidName(n.clone()));
            }
            if !seen.insert(n.as_str()) {
                return Err(WordError::DuplicateName(n.clone()));
            }
        }
        Ok(Basis { names })
    }

    /// `prefix1 .. prefix{rank}`.
    pub fn numbered(prefix: &str, rank: usize) -> Result<Self, WordError> {
        Basis::new((1..=rank).map(|i| format!("{prefix}{i}")))
    }

    pub fn rank(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn format(&self, w: &Word) -> String {
        w.display(&self.names).to_string()
    }

    pub fn parse(&self, s: &str) -> Result<Word, WordError> {
        parse_word(s, &self.names)
    }
}

/// Parses the word literal syntax against `names`.
///
/// Grammar: `""` or `1` for the identity, else factors joined by `*`, each
/// factor an identifier (or `1`) with an optional `^k` integer exponent.
pub fn parse_word(s: &str, names: &[String]) -> Result<Word, WordError> {
    let lookup: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let b = s.as_bytes();
    let mut pos = 0usize;
    let skip_ws = |pos: &mut usize| {
        while *pos < b.len() && b[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };
    skip_ws(&mut pos);
    if pos == b.len() {
        return Ok(Word::identity());
    }
    let mut out = Word::identity();
    loop {
        skip_ws(&mut pos);
        let start = pos;
        let factor = if pos < b.len() && (b[pos].is_ascii_alphabetic() || b[pos] == b'_') {
            while pos < b.len() && (b[pos].is_ascii_alphanumeric() || b[pos] == b'_') {
                pos += 1;
            }
            while pos < b.len() && b[pos] == b'\'' {
                pos += 1;
            }
            let name = &s[start..pos];
            match lookup.get(name) {
                Some(&i) => Word::gen(i),
                None => {
                    return Err(WordError::UnknownGenerator { name: name.to_string(), pos: start });
                }
            }
        } else if pos < b.len() && b[pos] == b'1' && !(pos + 1 < b.len() && b[pos + 1].is_ascii_digit()) {
            pos += 1;
            Word::identity()
        } else {
            let msg = if pos < b.len() {
                format!("expected generator, found `{}`", s[pos..].chars().next().unwrap_or(' '))
            } else {
                "expected generator, found end of input".to_string()
            };
            return Err(WordError::Parse { pos, msg });
        };
        skip_ws(&mut pos);
        let mut exp: i64 = 1;
        if pos < b.len() && b[pos] == b'^' {
            pos += 1;
            skip_ws(&mut pos);
            let estart = pos;
            if pos < b.len() && (b[pos] == b'-' || b[pos] == b'+') {
                pos += 1;
            }
            while pos < b.len() && b[pos].is_ascii_digit() {
                pos += 1;
            }
            exp = s[estart..pos].parse().map_err(|_| WordError::Parse {
                pos: estart,
                msg: "expected integer exponent".to_string(),
            })?;
        }
        out.mul_assign(&factor.pow(exp));
        skip_ws(&mut pos);
        if pos == b.len() {
            return Ok(out);
        }
        if b[pos] != b'*' {
            return Err(WordError::Parse {
                pos,
                msg: format!("expected `*` or end, found `{}`", s[pos..].chars().next().unwrap_or(' ')),
            });
        }
        pos += 1;
    }
}
