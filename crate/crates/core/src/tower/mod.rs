//! Towers over a free base: floors of surface flats, abelian flats and free
//! factors, with their retractions.
//!
//! Generators are kept in construction order, so the generators of level `i`
//! are a prefix of the full list and every stored word (pegs, boundaries,
//! retraction images) is a word in that prefix.

pub mod spec;

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dioph::ClosureEmbedding;
use crate::normal::{word_verdict, Morphism, Presentation, Verdict, VerdictOptions};
use crate::word::{carriers_conjugate, commutes, is_conjugate_cyclic, is_valid_name, primitive_root, random_word, Word, WordError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TowerError {
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("level {level} out of range for tower of height {height}")]
    LevelOutOfRange { level: usize, height: usize },
    #[error("check `{check}` failed: {detail}")]
    Invalid { check: String, detail: String },
    #[error("check `{check}` undecided: {detail}")]
    Unknown { check: String, detail: String },
    #[error("unknown flat `{0}`")]
    UnknownFlat(String),
    #[error("{0}")]
    Spec(String),
}

impl TowerError {
    pub fn invalid(check: &str, detail: impl Into<String>) -> Self {
        TowerError::Invalid { check: check.into(), detail: detail.into() }
    }
}

/// How undecided validity checks are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Validation {
    /// Undecided checks are errors.
    #[default]
    Strict,
    /// Undecided checks are recorded as assumptions.
    AssumeValid,
}

/// Knobs for validity checks during construction.
#[derive(Clone, Copy, Debug)]
pub struct GlueOptions {
    pub validation: Validation,
    pub seed: u64,
    pub samples: usize,
}

impl Default for GlueOptions {
    fn default() -> Self {
        GlueOptions { validation: Validation::Strict, seed: 0, samples: 24 }
    }
}

impl GlueOptions {
    pub fn assume_valid() -> Self {
        GlueOptions { validation: Validation::AssumeValid, ..Default::default() }
    }

    fn verdict_opts(&self) -> VerdictOptions {
        VerdictOptions { seed: self.seed, samples: self.samples, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbelianFlat {
    pub peg: Word,
    pub rank: usize,
    /// Closure layers, innermost first; layer `ℓ` writes the previous
    /// generators as `peg^{k} · ∏ aⱼ^{K}` in fresh generators `a`.
    pub layers: Vec<ClosureEmbedding>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceFlat {
    pub genus: usize,
    pub boundary: Vec<Word>,
    /// Retraction images of `x₁..x_{2g}, t₂..tₙ`; with `cyclic_letter` the
    /// letter of index `lower_rank` stands for the extra free factor.
    pub images: Vec<Word>,
    pub cyclic_letter: bool,
    /// Endomorphisms fixing the lower level, as images of the flat generators.
    pub twists: Vec<Vec<Word>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlatKind {
    Abelian(AbelianFlat),
    Surface(SurfaceFlat),
    Free { rank: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flat {
    pub id: String,
    pub kind: FlatKind,
    /// Global indices of this flat's generators.
    pub gens: Range<usize>,
    /// Number of generators of the level below this flat's floor.
    pub lower_rank: usize,
}

impl Flat {
    pub fn is_abelian(&self) -> bool {
        matches!(self.kind, FlatKind::Abelian(_))
    }

    pub fn abelian(&self) -> Option<&AbelianFlat> {
        match &self.kind {
            FlatKind::Abelian(a) => Some(a),
            _ => None,
        }
    }

    pub fn surface(&self) -> Option<&SurfaceFlat> {
        match &self.kind {
            FlatKind::Surface(s) => Some(s),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FlatKind::Abelian(_) => "abelian",
            FlatKind::Surface(_) => "surface",
            FlatKind::Free { .. } => "free",
        }
    }

    /// Global indices of the `ℓ`-th generator block of an abelian flat
    /// (block 0 is `z`, block `ℓ ≥ 1` is closure layer `ℓ`).
    pub fn block(&self, l: usize) -> Range<usize> {
        let m = self.abelian().map(|a| a.rank).unwrap_or(self.gens.len());
        let s = self.gens.start + l * m;
        s..s + m
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Floor {
    pub flats: Vec<Flat>,
}

/// Declarative description of a flat to glue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlatSpec {
    Abelian { peg: Word, rank: usize, names: Option<Vec<String>>, layers: Vec<ClosureEmbedding> },
    Surface {
        genus: usize,
        boundary: Vec<Word>,
        images: Vec<Word>,
        names: Option<Vec<String>>,
        cyclic_letter: bool,
        /// Images of the flat generators over lower + flat generators.
        twists: Option<Vec<Vec<Word>>>,
    },
    Free { rank: usize, names: Option<Vec<String>> },
}

impl FlatSpec {
    pub fn abelian(peg: Word, rank: usize) -> Self {
        FlatSpec::Abelian { peg, rank, names: None, layers: Vec::new() }
    }

    pub fn surface(genus: usize, boundary: Vec<Word>, images: Vec<Word>) -> Self {
        FlatSpec::Surface { genus, boundary, images, names: None, cyclic_letter: false, twists: None }
    }

    pub fn free(rank: usize) -> Self {
        FlatSpec::Free { rank, names: None }
    }

    pub fn with_names(mut self, ns: Vec<String>) -> Self {
        match &mut self {
            FlatSpec::Abelian { names, .. } | FlatSpec::Surface { names, .. } | FlatSpec::Free { names, .. } => *names = Some(ns),
        }
        self
    }

    fn gen_count(&self) -> usize {
        match self {
            FlatSpec::Abelian { rank, layers, .. } => rank * (1 + layers.len()),
            FlatSpec::Surface { genus, boundary, .. } => 2 * genus + boundary.len().saturating_sub(1),
            FlatSpec::Free { rank, .. } => *rank,
        }
    }
}

/// A tower over the free group of rank `base_rank`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tower {
    base_rank: usize,
    gens: Vec<String>,
    floors: Vec<Floor>,
    assumptions: Vec<String>,
    next_id: usize,
}

/// `∏ [x_{2i-1}, x_{2i}]` over the given generator indices.
pub fn surface_word(start: usize, genus: usize) -> Word {
    let mut s = Word::identity();
    for i in 0..genus {
        s.mul_assign(&Word::commutator(&Word::gen(start + 2 * i), &Word::gen(start + 2 * i + 1)));
    }
    s
}

/// `b₁ · ∏_{k≥2} tₖ bₖ tₖ⁻¹` with the `t`s given as words.
fn boundary_product(boundary: &[Word], ts: &[Word]) -> Word {
    let mut b = boundary[0].clone();
    for (k, bk) in boundary.iter().enumerate().skip(1) {
        b.mul_assign(&bk.conjugate_by(&ts[k - 1]));
    }
    b
}

/// Default twists: per handle `x_{2i} ↦ x_{2i}x_{2i-1}` and `x_{2i-1} ↦ x_{2i-1}x_{2i}`.
fn default_twists(start: usize, genus: usize, count: usize) -> Vec<Vec<Word>> {
    let mut out = Vec::new();
    for i in 0..genus {
        let (a, b) = (start + 2 * i, start + 2 * i + 1);
        let mut t1: Vec<Word> = (start..start + count).map(Word::gen).collect();
        t1[2 * i + 1] = Word::gen(b).mul(&Word::gen(a));
        let mut t2: Vec<Word> = (start..start + count).map(Word::gen).collect();
        t2[2 * i] = Word::gen(a).mul(&Word::gen(b));
        out.push(t1);
        out.push(t2);
    }
    out
}

impl Tower {
    /// The free group `⟨e1..e_rank⟩`.
    pub fn new(base_rank: usize) -> Result<Self, TowerError> {
        Self::with_base_names((1..=base_rank).map(|i| format!("e{i}")).collect())
    }

    pub fn with_base_names(names: Vec<String>) -> Result<Self, TowerError> {
        crate::word::Basis::new(names.clone())?;
        Ok(Tower { base_rank: names.len(), gens: names, floors: Vec::new(), assumptions: Vec::new(), next_id: 1 })
    }

    pub fn base_rank(&self) -> usize {
        self.base_rank
    }

    pub fn height(&self) -> usize {
        self.floors.len()
    }

    pub fn gens(&self) -> &[String] {
        &self.gens
    }

    pub fn floors(&self) -> &[Floor] {
        &self.floors
    }

    /// Validity claims that were assumed rather than decided.
    pub fn assumptions(&self) -> &[String] {
        &self.assumptions
    }

    pub fn flats(&self) -> impl Iterator<Item = &Flat> {
        self.floors.iter().flat_map(|f| f.flats.iter())
    }

    pub fn flat(&self, id: &str) -> Option<&Flat> {
        self.flats().find(|f| f.id == id)
    }

    /// Floor index (1-based level) of a flat.
    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.floors.iter().position(|f| f.flats.iter().any(|x| x.id == id)).map(|i| i + 1)
    }

    pub fn check_level(&self, level: usize) -> Result<(), TowerError> {
        if level > self.height() {
            Err(TowerError::LevelOutOfRange { level, height: self.height() })
        } else {
            Ok(())
        }
    }

    /// Number of generators of level `i`.
    pub fn rank_at(&self, level: usize) -> usize {
        self.floors[..level.min(self.height())]
            .last()
            .and_then(|f| f.flats.last())
            .map(|f| f.gens.end)
            .unwrap_or(self.base_rank)
    }

    pub fn names_at(&self, level: usize) -> &[String] {
        &self.gens[..self.rank_at(level)]
    }

    pub fn parse(&self, s: &str) -> Result<Word, WordError> {
        crate::word::parse_word(s, &self.gens)
    }

    pub fn format(&self, w: &Word) -> String {
        w.display(&self.gens).to_string()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.gens.iter().position(|n| n == name)
    }

    fn fresh_names(&self, prefix: &str, count: usize, taken: &HashSet<String>) -> Vec<String> {
        let mut k = 1usize;
        let mut out = Vec::new();
        while out.len() < count {
            let n = format!("{prefix}{k}");
            if !taken.contains(&n) {
                out.push(n);
            }
            k += 1;
        }
        out
    }

    /// Relators contributed by one flat, in canonical order.
    pub fn flat_relators(&self, flat: &Flat) -> Vec<Word> {
        flat_relators(flat)
    }

    /// All relators of level `i` in flat order.
    pub fn relators_at(&self, level: usize) -> Vec<Word> {
        self.floors[..level.min(self.height())].iter().flat_map(|f| f.flats.iter()).flat_map(flat_relators).collect()
    }

    pub fn presentation_at(&self, level: usize) -> Result<Presentation, TowerError> {
        self.check_level(level)?;
        Ok(Presentation::new(self.names_at(level).to_vec(), self.relators_at(level)))
    }

    pub fn presentation(&self) -> Presentation {
        self.presentation_at(self.height()).expect("top level")
    }

    /// Images of a flat's generators under its floor retraction, in the level
    /// below (the cyclic letter, if any, is sent to 1).
    pub fn flat_retraction(&self, flat: &Flat) -> Vec<Word> {
        flat_retraction(flat)
    }

    /// `rᵢ : Gⁱ → Gⁱ⁻¹` as images of all level-`i` generators.
    pub fn retraction_at(&self, level: usize) -> Result<Morphism, TowerError> {
        self.check_level(level)?;
        if level == 0 {
            return Err(TowerError::LevelOutOfRange { level, height: self.height() });
        }
        let lower = self.rank_at(level - 1);
        let mut images: Vec<Word> = (0..lower).map(Word::gen).collect();
        for f in &self.floors[level - 1].flats {
            images.extend(flat_retraction(f));
        }
        Ok(Morphism::new(format!("r{level}"), images))
    }

    /// Composite retraction of level `i` onto the base.
    pub fn composite_retraction(&self, level: usize) -> Morphism {
        let mut images: Vec<Word> = (0..self.base_rank).map(Word::gen).collect();
        for f in self.floors[..level].iter().flat_map(|f| f.flats.iter()) {
            for w in flat_retraction(f) {
                images.push(w.substitute(&images));
            }
        }
        Morphism::new("retract", images)
    }

    /// Deterministic morphisms from level `i` to the base: the composite
    /// retraction followed by `count` seeded random ones.
    pub fn sample_homs(&self, level: usize, seed: u64, count: usize) -> Vec<Morphism> {
        let mut out = vec![self.composite_retraction(level)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7033);
        for k in 0..count {
            out.push(Morphism::new(format!("sample:{seed}:{k}"), self.random_hom(level, &mut rng, 1 + k as i64 % 7)));
        }
        out
    }

    /// Like [`Tower::sample_homs`] without the retraction, with abelian
    /// exponent bounds growing linearly up to `max_spread`.
    pub fn sample_homs_spread(&self, level: usize, seed: u64, count: usize, max_spread: i64) -> Vec<Morphism> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0dd5_9a4e);
        (0..count)
            .map(|k| {
                let spread = 1 + (k as i64 * max_spread) / count.max(1) as i64;
                Morphism::new(format!("wide:{seed}:{k}"), self.random_hom(level, &mut rng, spread))
            })
            .collect()
    }

    /// One random morphism to the base; `spread` bounds abelian exponents.
    pub fn random_hom<R: Rng + ?Sized>(&self, level: usize, rng: &mut R, spread: i64) -> Vec<Word> {
        let mut images: Vec<Word> = (0..self.base_rank).map(Word::gen).collect();
        for f in self.floors[..level].iter().flat_map(|f| f.flats.iter()) {
            let own = match &f.kind {
                FlatKind::Abelian(a) => {
                    let top: Vec<i64> = (0..a.rank).map(|_| rng.gen_range(-spread..=spread)).collect();
                    let hp = a.peg.substitute(&images);
                    let (gamma, b) = if hp.is_identity() {
                        let len = rng.gen_range(1..=3);
                        (random_word(rng, self.base_rank, len), 0)
                    } else {
                        let (g, b) = primitive_root(&hp).expect("non-identity");
                        (g, b as i64)
                    };
                    abelian_images(a, &gamma, b, &top)
                }
                FlatKind::Free { rank } => (0..*rank)
                    .map(|_| {
                        let len = rng.gen_range(1..=3);
                        random_word(rng, self.base_rank, len)
                    })
                    .collect(),
                FlatKind::Surface(s) => {
                    let mut lower = images[..f.lower_rank].to_vec();
                    if s.cyclic_letter {
                        let len = rng.gen_range(1..=3);
                        lower.push(random_word(rng, self.base_rank, len));
                    }
                    let mut phi: Vec<Word> = s.images.iter().map(|w| w.substitute(&lower)).collect();
                    if !s.twists.is_empty() {
                        let count = rng.gen_range(0..=4);
                        for _ in 0..count {
                            let t = &s.twists[rng.gen_range(0..s.twists.len())];
                            phi = precompose_twist(&images, f, &phi, t);
                        }
                    }
                    phi
                }
            };
            images.extend(own);
        }
        images
    }

    /// Glues a floor made of several flats over the current top level.
    pub fn glue_floor(&self, specs: Vec<FlatSpec>, opts: &GlueOptions) -> Result<Tower, TowerError> {
        if specs.is_empty() {
            return Err(TowerError::invalid("floor", "a floor needs at least one flat"));
        }
        let mut t = self.clone();
        let lower_rank = self.gens.len();
        let mut taken: HashSet<String> = t.gens.iter().cloned().collect();
        let mut floor = Floor::default();
        for spec in specs {
            let count = spec.gen_count();
            let start = t.gens.len();
            let (prefix, names) = match &spec {
                FlatSpec::Abelian { names, .. } => ("z", names),
                FlatSpec::Surface { names, .. } => ("x", names),
                FlatSpec::Free { names, .. } => ("f", names),
            };
            let new_names = match names {
                Some(ns) => {
                    if ns.len() != count {
                        return Err(TowerError::Spec(format!("expected {count} generator names, got {}", ns.len())));
                    }
                    ns.clone()
                }
                None => match &spec {
                    FlatSpec::Abelian { rank, layers, .. } if !layers.is_empty() => {
                        let mut v = t.fresh_names("z", *rank, &taken);
                        let mut tk = taken.clone();
                        tk.extend(v.iter().cloned());
                        v.extend(t.fresh_names("a", rank * layers.len(), &tk));
                        v
                    }
                    FlatSpec::Surface { genus, boundary, .. } => {
                        let mut v = t.fresh_names("x", 2 * genus, &taken);
                        let mut tk = taken.clone();
                        tk.extend(v.iter().cloned());
                        v.extend(t.fresh_names("t", boundary.len().saturating_sub(1), &tk));
                        v
                    }
                    _ => t.fresh_names(prefix, count, &taken),
                },
            };
            for n in &new_names {
                if !is_valid_name(n) {
                    return Err(WordError::InvalidName(n.clone()).into());
                }
                if !taken.insert(n.clone()) {
                    return Err(WordError::DuplicateName(n.clone()).into());
                }
            }
            let id = t.next_id.to_string();
            t.next_id += 1;
            let kind = match spec {
                FlatSpec::Abelian { peg, rank, layers, .. } => {
                    if rank == 0 {
                        return Err(TowerError::invalid("rank", "abelian flat rank must be positive"));
                    }
                    self.check_fits(&peg, lower_rank, "peg")?;
                    if layers.iter().any(|l| l.rank() != rank) {
                        return Err(TowerError::invalid("closure", "closure embedding rank differs from flat rank"));
                    }
                    FlatKind::Abelian(AbelianFlat { peg, rank, layers })
                }
                FlatSpec::Free { rank, .. } => {
                    if rank == 0 {
                        return Err(TowerError::invalid("rank", "free factor rank must be positive"));
                    }
                    FlatKind::Free { rank }
                }
                FlatSpec::Surface { genus, boundary, images, cyclic_letter, twists, .. } => {
                    if boundary.is_empty() {
                        return Err(TowerError::invalid("boundary", "a surface flat needs at least one boundary component"));
                    }
                    for b in &boundary {
                        self.check_fits(b, lower_rank, "boundary")?;
                    }
                    if images.len() != count {
                        return Err(TowerError::invalid(
                            "images",
                            format!("expected {count} retraction images, got {}", images.len()),
                        ));
                    }
                    let img_rank = lower_rank + usize::from(cyclic_letter);
                    for w in &images {
                        self.check_fits(w, img_rank, "images")?;
                    }
                    let twists = match twists {
                        Some(ts) => ts,
                        None => default_twists(start, genus, count),
                    };
                    for tw in &twists {
                        if tw.len() != count {
                            return Err(TowerError::invalid("twists", "twist must give one image per surface generator"));
                        }
                        for w in tw {
                            self.check_fits(w, start + count, "twists")?;
                        }
                    }
                    FlatKind::Surface(SurfaceFlat { genus, boundary, images, cyclic_letter, twists })
                }
            };
            t.gens.extend(new_names);
            floor.flats.push(Flat { id, kind, gens: start..start + count, lower_rank });
        }
        t.floors.push(floor);
        t.validate_top_floor(opts)?;
        Ok(t)
    }

    fn check_fits(&self, w: &Word, rank: usize, what: &str) -> Result<(), TowerError> {
        if w.fits(rank) {
            Ok(())
        } else {
            Err(TowerError::invalid(what, "word uses generators outside the level below"))
        }
    }

    pub fn glue_abelian_flat(&self, peg: Word, rank: usize, opts: &GlueOptions) -> Result<Tower, TowerError> {
        self.glue_floor(vec![FlatSpec::abelian(peg, rank)], opts)
    }

    pub fn glue_surface_flat(&self, genus: usize, boundary: Vec<Word>, images: Vec<Word>, opts: &GlueOptions) -> Result<Tower, TowerError> {
        self.glue_floor(vec![FlatSpec::surface(genus, boundary, images)], opts)
    }

    pub fn glue_free_factor(&self, rank: usize) -> Result<Tower, TowerError> {
        self.glue_floor(vec![FlatSpec::free(rank)], &GlueOptions::default())
    }

    fn undecided(&mut self, opts: &GlueOptions, check: &str, detail: String) -> Result<(), TowerError> {
        match opts.validation {
            Validation::Strict => Err(TowerError::Unknown { check: check.into(), detail }),
            Validation::AssumeValid => {
                self.assumptions.push(format!("{check}: {detail}"));
                Ok(())
            }
        }
    }

    /// Re-runs every validity check on the top floor.
    fn validate_top_floor(&mut self, opts: &GlueOptions) -> Result<(), TowerError> {
        let level = self.height();
        let lower = level - 1;
        let floor = self.floors[level - 1].clone();
        let earlier: Vec<Flat> = self.floors[..lower].iter().flat_map(|f| f.flats.iter().cloned()).collect();
        let mut seen_abelian: Vec<Flat> = earlier.iter().filter(|f| f.is_abelian()).cloned().collect();
        let homs = self.sample_homs(lower, opts.seed, opts.samples);
        for flat in &floor.flats {
            match &flat.kind {
                FlatKind::Abelian(a) => {
                    self.check_peg(flat, a, &seen_abelian, &homs, opts)?;
                    seen_abelian.push(flat.clone());
                }
                FlatKind::Surface(s) => self.check_surface(flat, s, lower, &homs, opts)?,
                FlatKind::Free { .. } => {}
            }
        }
        self.check_retraction(level, opts)
    }

    fn check_peg(&mut self, flat: &Flat, a: &AbelianFlat, earlier: &[Flat], homs: &[Morphism], opts: &GlueOptions) -> Result<(), TowerError> {
        let peg = &a.peg;
        let at_base = peg.fits(self.base_rank);
        if at_base {
            if peg.is_identity() {
                return Err(TowerError::invalid("peg", "peg is the identity"));
            }
            let (_, k) = primitive_root(peg)?;
            if k != 1 {
                return Err(TowerError::invalid("peg", format!("peg is a proper power (exponent {k})")));
            }
        } else {
            let imgs: Vec<Word> = homs.iter().map(|h| peg.substitute(&h.images)).collect();
            if imgs.iter().all(Word::is_identity) {
                match word_verdict(self, flat.lower_level(self), peg, &opts.verdict_opts()) {
                    Verdict::Trivial(_) => return Err(TowerError::invalid("peg", "peg is trivial")),
                    _ => self.undecided(opts, "peg", format!("flat {}: peg nontriviality", flat.id))?,
                }
            }
            if !imgs.iter().any(|w| !w.is_identity() && primitive_root(w).map(|r| r.1 == 1).unwrap_or(false)) {
                self.undecided(opts, "peg", format!("flat {}: peg may be a proper power", flat.id))?;
            }
        }
        for prev in earlier {
            let q = &prev.abelian().expect("abelian").peg;
            if at_base && q.fits(self.base_rank) {
                if carriers_conjugate(peg, q)? {
                    return Err(TowerError::invalid(
                        "peg",
                        format!("flat {}: peg carrier is conjugate to the peg of flat {}", flat.id, prev.id),
                    ));
                }
                continue;
            }
            let separated = homs.iter().any(|h| {
                let (hp, hq) = (peg.substitute(&h.images), q.substitute(&h.images));
                !hp.is_identity() && !hq.is_identity() && !carriers_conjugate(&hp, &hq).unwrap_or(true)
            });
            if !separated {
                self.undecided(opts, "peg", format!("flat {}: non-conjugacy with the peg of flat {}", flat.id, prev.id))?;
            }
        }
        Ok(())
    }

    fn check_surface(&mut self, flat: &Flat, s: &SurfaceFlat, lower: usize, homs: &[Morphism], opts: &GlueOptions) -> Result<(), TowerError> {
        let vopts = opts.verdict_opts();
        for b in &s.boundary {
            if b.fits(self.base_rank) {
                if b.is_identity() {
                    return Err(TowerError::invalid("boundary", "boundary word is the identity"));
                }
            } else if homs.iter().all(|h| b.substitute(&h.images).is_identity()) {
                match word_verdict(self, lower, b, &vopts) {
                    Verdict::NonTrivial(_) => {}
                    Verdict::Trivial(_) => return Err(TowerError::invalid("boundary", "boundary word is trivial")),
                    Verdict::Unknown => self.undecided(opts, "boundary", format!("flat {}: boundary nontriviality", flat.id))?,
                }
            }
        }
        // relator compatibility of the declared images
        let count = flat.gens.len();
        let ts: Vec<Word> = s.images[2 * s.genus..count].to_vec();
        let xs: Vec<Word> = s.images[..2 * s.genus].to_vec();
        let mut sw = Word::identity();
        for i in 0..s.genus {
            sw.mul_assign(&Word::commutator(&xs[2 * i], &xs[2 * i + 1]));
        }
        let u = sw.mul(&boundary_product(&s.boundary, &ts).inverse());
        let compatible = if s.cyclic_letter {
            self.trivial_in_free_product(&u, flat.lower_rank, lower, &vopts)
        } else if u.fits(self.base_rank) {
            Some(u.is_identity())
        } else {
            match word_verdict(self, lower, &u, &vopts) {
                Verdict::Trivial(_) => Some(true),
                Verdict::NonTrivial(_) => Some(false),
                Verdict::Unknown => None,
            }
        };
        match compatible {
            Some(true) => {}
            Some(false) => {
                return Err(TowerError::invalid(
                    "retraction",
                    format!("flat {}: images do not send the surface relator to the identity", flat.id),
                ))
            }
            None => self.undecided(opts, "retraction", format!("flat {}: relator compatibility", flat.id))?,
        }
        if !s.cyclic_letter {
            let imgs = &s.images;
            let pairs: Vec<(usize, usize)> =
                (0..imgs.len()).flat_map(|i| (i + 1..imgs.len()).map(move |j| (i, j))).collect();
            let base_level = imgs.iter().all(|w| w.fits(self.base_rank));
            let nonabelian = if base_level {
                Some(pairs.iter().any(|&(i, j)| !commutes(&imgs[i], &imgs[j])))
            } else if homs.iter().any(|h| {
                pairs.iter().any(|&(i, j)| !commutes(&imgs[i].substitute(&h.images), &imgs[j].substitute(&h.images)))
            }) {
                Some(true)
            } else if pairs
                .iter()
                .all(|&(i, j)| word_verdict(self, lower, &Word::commutator(&imgs[i], &imgs[j]), &vopts).is_trivial())
            {
                Some(false)
            } else {
                None
            };
            match nonabelian {
                Some(true) => {}
                Some(false) => {
                    return Err(TowerError::invalid(
                        "non-abelian image",
                        format!("flat {}: retraction images commute and no cyclic exception is declared", flat.id),
                    ))
                }
                None => self.undecided(opts, "non-abelian image", format!("flat {}", flat.id))?,
            }
        }
        let rel = flat_relators(flat).pop().expect("surface relator");
        for (k, tw) in s.twists.iter().enumerate() {
            let mut full: Vec<Word> = (0..flat.gens.start).map(Word::gen).collect();
            full.extend(tw.iter().cloned());
            let img = rel.substitute(&full);
            if is_conjugate_cyclic(&img, &rel).is_none() && is_conjugate_cyclic(&img, &rel.inverse()).is_none() {
                return Err(TowerError::invalid("twists", format!("flat {}: twist {} does not preserve the relator", flat.id, k + 1)));
            }
        }
        Ok(())
    }

    /// Decides `u = 1` in `Gˡᵉᵛᵉˡ ∗ ⟨s⟩` where `s` is letter `lower_rank`.
    fn trivial_in_free_product(&self, u: &Word, lower_rank: usize, level: usize, opts: &VerdictOptions) -> Option<bool> {
        let s = lower_rank as i32 + 1;
        // g₀ s^{k₁} g₁ ⋯ s^{kₙ} gₙ
        let mut parts = vec![Word::identity()];
        let mut powers: Vec<i64> = Vec::new();
        for &l in u.letters() {
            if l.abs() == s {
                powers.push(l.signum() as i64);
                parts.push(Word::identity());
            } else {
                parts.last_mut().unwrap().mul_assign(&Word::from_letters([l]));
            }
        }
        let mut known_nontrivial = vec![false; parts.len()];
        'outer: loop {
            if powers.is_empty() {
                return match word_verdict(self, level, &parts[0], opts) {
                    Verdict::Trivial(_) => Some(true),
                    Verdict::NonTrivial(_) => Some(false),
                    Verdict::Unknown => None,
                };
            }
            for k in 1..parts.len() - 1 {
                if known_nontrivial[k] {
                    continue;
                }
                let trivial = parts[k].is_identity()
                    || match word_verdict(self, level, &parts[k], opts) {
                        Verdict::Trivial(_) => true,
                        Verdict::NonTrivial(_) => false,
                        Verdict::Unknown => return None,
                    };
                if !trivial {
                    known_nontrivial[k] = true;
                    continue;
                }
                let e = powers[k - 1] + powers[k];
                parts.remove(k);
                known_nontrivial.remove(k);
                if e == 0 {
                    powers.drain(k - 1..k + 1);
                    let right = parts.remove(k);
                    known_nontrivial.remove(k);
                    parts[k - 1].mul_assign(&right);
                    known_nontrivial[k - 1] = false;
                } else {
                    powers.splice(k - 1..k + 1, [e]);
                }
                continue 'outer;
            }
            return Some(false);
        }
    }

    /// Checks the top retraction is the identity on lower generators and kills every relator.
    fn check_retraction(&mut self, level: usize, opts: &GlueOptions) -> Result<(), TowerError> {
        let r = self.retraction_at(level)?;
        let lower = self.rank_at(level - 1);
        for (i, w) in r.images.iter().enumerate().take(lower) {
            if *w != Word::gen(i) {
                return Err(TowerError::invalid("retraction", "retraction moves a lower generator"));
            }
        }
        let vopts = opts.verdict_opts();
        for f in &self.floors[level - 1].flats.clone() {
            if let FlatKind::Surface(_) = f.kind {
                continue; // checked against the declared images above
            }
            for rel in flat_relators(f) {
                let img = rel.substitute(&r.images);
                if img.is_identity() {
                    continue;
                }
                match word_verdict(self, level - 1, &img, &vopts) {
                    Verdict::Trivial(_) => {}
                    Verdict::NonTrivial(_) => {
                        return Err(TowerError::invalid("retraction", format!("flat {}: relator image is nontrivial", f.id)))
                    }
                    Verdict::Unknown => self.undecided(opts, "retraction", format!("flat {}: relator image", f.id))?,
                }
            }
        }
        Ok(())
    }

    /// Flat-level legitimacy of an ordering: each flat's retraction images
    /// must be words over the base and the generators of earlier flats.
    pub fn check_legitimate_ordering(&self, order: &[String]) -> Result<OrderingCertificate, TowerError> {
        let all: Vec<&Flat> = self.flats().collect();
        let mut seen = HashSet::new();
        for id in order {
            if self.flat(id).is_none() {
                return Err(TowerError::UnknownFlat(id.clone()));
            }
            if !seen.insert(id.clone()) {
                return Err(TowerError::Spec(format!("flat `{id}` listed twice")));
            }
        }
        if seen.len() != all.len() {
            return Err(TowerError::Spec("ordering must list every flat exactly once".into()));
        }
        let mut allowed: HashSet<usize> = (0..self.base_rank).collect();
        let mut steps = Vec::new();
        let mut legit = true;
        for id in order {
            let f = self.flat(id).expect("checked");
            let images = flat_retraction(f);
            let bad: Vec<String> = images
                .iter()
                .flat_map(|w| w.letters().iter().map(|l| l.unsigned_abs() as usize - 1))
                .filter(|i| !allowed.contains(i))
                .map(|i| self.gens[i].clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            if !bad.is_empty() {
                legit = false;
            }
            steps.push(OrderingStep { flat: id.clone(), outside: bad });
            allowed.extend(f.gens.clone());
        }
        Ok(OrderingCertificate { legitimate: legit, steps })
    }

    /// Natural ordering: floor by floor, flats in order.
    pub fn natural_ordering(&self) -> Vec<String> {
        self.flats().map(|f| f.id.clone()).collect()
    }

    /// Rebuilds the tower so base-peg abelian flats form floor 1, every other
    /// flat has its own floor and consecutive free factors share one.
    pub fn normalize_convention(&self) -> Result<Normalized, TowerError> {
        let flats: Vec<&Flat> = self.flats().collect();
        let is_base_abelian = |f: &Flat| f.abelian().map(|a| a.peg.fits(self.base_rank)).unwrap_or(false);
        let mut groups: Vec<Vec<&Flat>> = Vec::new();
        let first: Vec<&Flat> = flats.iter().copied().filter(|f| is_base_abelian(f)).collect();
        if !first.is_empty() {
            groups.push(first);
        }
        for f in flats.iter().copied().filter(|f| !is_base_abelian(f)) {
            let merge = matches!(f.kind, FlatKind::Free { .. })
                && groups.last().map(|g| g.iter().all(|x| matches!(x.kind, FlatKind::Free { .. }))).unwrap_or(false);
            if merge {
                groups.last_mut().unwrap().push(f);
            } else {
                groups.push(vec![f]);
            }
        }
        // new generator order
        let mut order: Vec<usize> = (0..self.base_rank).collect();
        for g in &groups {
            for f in g {
                order.extend(f.gens.clone());
            }
        }
        let mut map = vec![0usize; self.gens.len()];
        for (new, &old) in order.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Tower {
            base_rank: self.base_rank,
            gens: order.iter().map(|&i| self.gens[i].clone()).collect(),
            floors: Vec::new(),
            assumptions: self.assumptions.clone(),
            next_id: self.next_id,
        };
        let mut next = self.base_rank;
        for g in &groups {
            let lower_rank = next;
            let mut floor = Floor::default();
            let all_free = g.iter().all(|f| matches!(f.kind, FlatKind::Free { .. }));
            if all_free && g.len() > 1 {
                let rank: usize = g.iter().map(|f| f.gens.len()).sum();
                floor.flats.push(Flat { id: g[0].id.clone(), kind: FlatKind::Free { rank }, gens: next..next + rank, lower_rank });
                next += rank;
            } else {
                for f in g {
                    let n = f.gens.len();
                    let mut nf = relabel_flat(f, &map, lower_rank);
                    nf.gens = next..next + n;
                    floor.flats.push(nf);
                    next += n;
                }
            }
            t.floors.push(floor);
        }
        // the re-mapping is a bijection on generators; check relators correspond both ways
        let old_rels: HashSet<Word> = self.presentation().relators.iter().map(|r| r.relabel(&map)).collect();
        let new_rels: HashSet<Word> = t.presentation().relators.into_iter().collect();
        if old_rels != new_rels {
            return Err(TowerError::invalid("normalize", "re-mapped relators differ"));
        }
        Ok(Normalized { tower: t, gen_map: map })
    }

    /// Rebuilds the tower with extra generators inserted; `new_flats` gives,
    /// per old flat id, its replacement kind and generator names.
    pub(crate) fn rebuild(&self, mut replace: impl FnMut(&Flat) -> (FlatKind, Vec<String>)) -> Result<(Tower, Vec<usize>), TowerError> {
        let mut map: Vec<usize> = (0..self.base_rank).collect();
        map.resize(self.gens.len(), usize::MAX);
        let mut t = Tower {
            base_rank: self.base_rank,
            gens: self.gens[..self.base_rank].to_vec(),
            floors: Vec::new(),
            assumptions: self.assumptions.clone(),
            next_id: self.next_id,
        };
        for floor in &self.floors {
            let lower_rank = t.gens.len();
            let mut nf = Floor::default();
            let mut pending = Vec::new();
            for f in &floor.flats {
                let (kind, names) = replace(f);
                pending.push((f, kind, names));
            }
            for (f, kind, names) in pending {
                let start = t.gens.len();
                // old flat generators map to the first slots of the new block
                for (k, old) in f.gens.clone().enumerate() {
                    map[old] = start + k;
                }
                let kind = relabel_kind(&kind, &map, f.lower_rank, lower_rank);
                t.gens.extend(names.iter().cloned());
                nf.flats.push(Flat { id: f.id.clone(), kind, gens: start..start + names.len(), lower_rank });
            }
            t.floors.push(nf);
        }
        crate::word::Basis::new(t.gens.clone())?;
        Ok((t, map))
    }

    /// Re-validates every floor from scratch.
    pub fn revalidate(&self, opts: &GlueOptions) -> Result<Tower, TowerError> {
        let mut t = Tower {
            base_rank: self.base_rank,
            gens: self.gens[..self.base_rank].to_vec(),
            floors: Vec::new(),
            assumptions: Vec::new(),
            next_id: self.next_id,
        };
        for floor in &self.floors {
            for f in &floor.flats {
                t.gens.extend(self.gens[f.gens.clone()].iter().cloned());
            }
            t.floors.push(floor.clone());
            t.validate_top_floor(opts)?;
        }
        Ok(t)
    }
}

impl Flat {
    /// Level of the floor below this flat, given the tower it lives in.
    pub fn lower_level(&self, t: &Tower) -> usize {
        t.level_of(&self.id).map(|l| l - 1).unwrap_or(t.height())
    }
}

/// Result of [`Tower::normalize_convention`].
#[derive(Clone, Debug)]
pub struct Normalized {
    pub tower: Tower,
    /// Old generator index to new generator index.
    pub gen_map: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingStep {
    pub flat: String,
    /// Generators appearing in retraction images that are not yet available.
    pub outside: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingCertificate {
    pub legitimate: bool,
    pub steps: Vec<OrderingStep>,
}

/// Images of an abelian flat's generators given the image `γ^b` of the peg
/// and exponents `top` for the outermost generator block.
pub(crate) fn abelian_images(a: &AbelianFlat, gamma: &Word, b: i64, top: &[i64]) -> Vec<Word> {
    let values = abelian_block_values(a, b, top);
    values.iter().flat_map(|blk| blk.iter().map(|&e| gamma.pow(e))).collect()
}

/// Exponents of `γ` for every generator block, from the top block down.
pub fn abelian_block_values(a: &AbelianFlat, b: i64, top: &[i64]) -> Vec<Vec<i64>> {
    use num_traits::ToPrimitive;
    let mut blocks = vec![top.to_vec()];
    for layer in a.layers.iter().rev() {
        let above = blocks.last().unwrap().clone();
        let m = a.rank;
        let below: Vec<i64> = (0..m)
            .map(|i| {
                let k = layer.peg_col[i].to_i64().expect("small exponent");
                let s: i64 = (0..m).map(|j| layer.k[(i, j)].to_i64().expect("small exponent") * above[j]).sum();
                b * k + s
            })
            .collect();
        blocks.push(below);
    }
    blocks.reverse();
    blocks
}

/// `φ ∘ τ` on a flat's generators: `τ` images are over lower + flat letters.
pub fn precompose_twist(lower_images: &[Word], flat: &Flat, phi: &[Word], twist: &[Word]) -> Vec<Word> {
    let mut full: Vec<Word> = lower_images[..flat.gens.start].to_vec();
    full.extend(phi.iter().cloned());
    twist.iter().map(|w| w.substitute(&full)).collect()
}

fn flat_relators(flat: &Flat) -> Vec<Word> {
    match &flat.kind {
        FlatKind::Free { .. } => Vec::new(),
        FlatKind::Surface(s) => {
            let start = flat.gens.start;
            let sw = surface_word(start, s.genus);
            let ts: Vec<Word> = (start + 2 * s.genus..flat.gens.end).map(Word::gen).collect();
            vec![sw.mul(&boundary_product(&s.boundary, &ts).inverse())]
        }
        FlatKind::Abelian(a) => {
            use num_traits::ToPrimitive;
            let p = &a.peg;
            let mut out = Vec::new();
            let z = flat.block(0);
            for i in z.clone() {
                out.push(Word::commutator(&Word::gen(i), p));
            }
            for i in z.clone() {
                for j in i + 1..z.end {
                    out.push(Word::commutator(&Word::gen(i), &Word::gen(j)));
                }
            }
            for (l, layer) in a.layers.iter().enumerate() {
                let prev = flat.block(l);
                let cur = flat.block(l + 1);
                for j in cur.clone() {
                    out.push(Word::commutator(&Word::gen(j), p));
                }
                for i in cur.clone() {
                    for j in i + 1..cur.end {
                        out.push(Word::commutator(&Word::gen(i), &Word::gen(j)));
                    }
                }
                for g in flat.gens.start..cur.start {
                    for j in cur.clone() {
                        out.push(Word::commutator(&Word::gen(g), &Word::gen(j)));
                    }
                }
                for (i, g) in prev.clone().enumerate() {
                    let mut d = p.pow(layer.peg_col[i].to_i64().expect("small exponent"));
                    for (j, aj) in cur.clone().enumerate() {
                        d.mul_assign(&Word::gen(aj).pow(layer.k[(i, j)].to_i64().expect("small exponent")));
                    }
                    out.push(Word::gen(g).mul(&d.inverse()));
                }
            }
            out
        }
    }
}

fn flat_retraction(flat: &Flat) -> Vec<Word> {
    match &flat.kind {
        FlatKind::Free { rank } => vec![Word::identity(); *rank],
        FlatKind::Surface(s) => {
            if s.cyclic_letter {
                let mut kill: Vec<Word> = (0..flat.lower_rank).map(Word::gen).collect();
                kill.push(Word::identity());
                s.images.iter().map(|w| w.substitute(&kill)).collect()
            } else {
                s.images.clone()
            }
        }
        FlatKind::Abelian(a) => {
            // z ↦ peg without closure; with closure the outer block goes to 1.
            let (gamma, b) = (a.peg.clone(), 1);
            let top = if a.layers.is_empty() { vec![1; a.rank] } else { vec![0; a.rank] };
            abelian_images(a, &gamma, b, &top)
        }
    }
}

fn relabel_kind(kind: &FlatKind, map: &[usize], old_lower: usize, new_lower: usize) -> FlatKind {
    let rl = |w: &Word| w.relabel(map);
    match kind {
        FlatKind::Free { rank } => FlatKind::Free { rank: *rank },
        FlatKind::Abelian(a) => FlatKind::Abelian(AbelianFlat { peg: rl(&a.peg), rank: a.rank, layers: a.layers.clone() }),
        FlatKind::Surface(s) => {
            let images = if s.cyclic_letter {
                let mut m2 = map[..old_lower].to_vec();
                m2.push(new_lower);
                s.images.iter().map(|w| w.relabel(&m2)).collect()
            } else {
                s.images.iter().map(rl).collect()
            };
            FlatKind::Surface(SurfaceFlat {
                genus: s.genus,
                boundary: s.boundary.iter().map(rl).collect(),
                images,
                cyclic_letter: s.cyclic_letter,
                twists: s.twists.iter().map(|t| t.iter().map(rl).collect()).collect(),
            })
        }
    }
}

fn relabel_flat(f: &Flat, map: &[usize], new_lower: usize) -> Flat {
    Flat { id: f.id.clone(), kind: relabel_kind(&f.kind, map, f.lower_rank, new_lower), gens: f.gens.clone(), lower_rank: new_lower }
}

/// Index of each relator word in a relator list.
pub(crate) fn relator_index(rels: &[Word]) -> HashMap<Word, usize> {
    let mut m = HashMap::new();
    for (i, r) in rels.iter().enumerate() {
        m.entry(r.clone()).or_insert(i);
    }
    m
}
