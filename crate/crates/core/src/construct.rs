//! Derived constructions on towers: floor doubles, twin towers, closures,
//! symmetric closures and completions of GADs.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::dioph::{solvable, ClosureEmbedding, Coset, IntMatrix, IntVec, Lattice, LinearSystem};
use crate::gog::{maximal_subtree, Gad, GogError, VertexClass};
use crate::normal::{check_morphism_free, word_verdict, Morphism, MorphismCheck, Presentation, Verdict, VerdictOptions};
use crate::tower::{abelian_block_values, AbelianFlat, Flat, FlatKind, FlatSpec, GlueOptions, Tower, TowerError};
use crate::word::{carriers_conjugate, is_conjugate_cyclic, primitive_root, Word, WordError};

/// Twin name of a generator: the declared override or the primed name.
pub fn twin_name(n: &str, names: &BTreeMap<String, String>) -> String {
    names.get(n).cloned().unwrap_or_else(|| format!("{n}'"))
}

/// A doubled abelian floor with its two embeddings of the original level.
#[derive(Clone, Debug)]
pub struct DoubleData {
    pub tower: Tower,
    pub level: usize,
    /// Inclusion of the original level.
    pub f1: Morphism,
    /// Identity below the floor, each `z` sent to its paired `y`.
    pub f2: Morphism,
    /// `(z, y)` generator index pairs in the doubled tower.
    pub pairs: Vec<(usize, usize)>,
}

/// Replaces every flat `ℤᵐ` of the abelian floor at `level` by `ℤᵐ ⊕ ℤᵐ`.
pub fn floor_double(t: &Tower, level: usize, names: &BTreeMap<String, String>, opts: &GlueOptions) -> Result<DoubleData, TowerError> {
    if level == 0 || level > t.height() {
        return Err(TowerError::LevelOutOfRange { level, height: t.height() });
    }
    let floor = &t.floors()[level - 1];
    if floor.flats.iter().any(|f| f.abelian().map_or(true, |a| !a.layers.is_empty())) {
        return Err(TowerError::invalid("double", format!("floor {level} is not an abelian floor")));
    }
    let ids: HashSet<String> = floor.flats.iter().map(|f| f.id.clone()).collect();
    let gens = t.gens().to_vec();
    let (rebuilt, map) = t.rebuild(|f| {
        let old: Vec<String> = gens[f.gens.clone()].to_vec();
        if !ids.contains(&f.id) {
            return (f.kind.clone(), old);
        }
        let a = f.abelian().expect("abelian floor");
        let mut ns = old.clone();
        ns.extend(old.iter().map(|n| twin_name(n, names)));
        (FlatKind::Abelian(AbelianFlat { peg: a.peg.clone(), rank: 2 * a.rank, layers: Vec::new() }), ns)
    })?;
    let tower = rebuilt.revalidate(opts)?;
    let n = t.rank_at(level);
    let f1 = Morphism::new("f1", (0..n).map(|i| Word::gen(map[i])).collect());
    let mut f2_images = f1.images.clone();
    let mut pairs = Vec::new();
    for f in &floor.flats {
        let m = f.gens.len();
        for g in f.gens.clone() {
            let y = map[g] + m;
            pairs.push((map[g], y));
            f2_images[g] = Word::gen(y);
        }
    }
    Ok(DoubleData { tower, level, f1, f2: Morphism::new("f2", f2_images), pairs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwinCase {
    /// Height 0: the twin is the base itself.
    Trivial,
    NonAbelian,
    Abelian,
}

/// Twin tower with its flat pairing and generator swap.
#[derive(Clone, Debug)]
pub struct TwinTower {
    pub tower: Tower,
    pub case: TwinCase,
    /// Flat id to twin flat id; doubled first-floor flats are their own twins.
    pub twin_map: BTreeMap<String, String>,
    /// Involution on generator indices exchanging each generator with its twin.
    pub swap: Vec<usize>,
    /// Flat ids of the original floors (after doubling), in order.
    pub original_flats: Vec<String>,
    /// Flat ids of the copy floors, in order.
    pub copy_flats: Vec<String>,
}

impl TwinTower {
    /// Applies the generator swap to a word.
    pub fn swap_word(&self, w: &Word) -> Word {
        w.relabel(&self.swap)
    }

    /// The two natural orderings: originals first, and copies first.
    pub fn orderings(&self) -> (Vec<String>, Vec<String>) {
        let first: Vec<String> = if self.case == TwinCase::Abelian {
            self.tower.floors()[0].flats.iter().map(|f| f.id.clone()).collect()
        } else {
            Vec::new()
        };
        let mut a = first.clone();
        a.extend(self.original_flats.iter().filter(|f| !first.contains(f)).cloned());
        a.extend(self.copy_flats.iter().cloned());
        let mut b = first.clone();
        b.extend(self.copy_flats.iter().cloned());
        b.extend(self.original_flats.iter().filter(|f| !first.contains(f)).cloned());
        (a, b)
    }
}

/// A flat spec equal to `flat` with words relabelled by `phi`.
fn copy_spec(flat: &Flat, phi: &[usize], cyclic_new: usize, names: Vec<String>) -> FlatSpec {
    let rl = |w: &Word| w.relabel(phi);
    match &flat.kind {
        FlatKind::Abelian(a) => FlatSpec::Abelian { peg: rl(&a.peg), rank: a.rank, names: Some(names), layers: a.layers.clone() },
        FlatKind::Free { rank } => FlatSpec::Free { rank: *rank, names: Some(names) },
        FlatKind::Surface(s) => {
            let images = if s.cyclic_letter {
                let mut m2 = phi[..flat.lower_rank].to_vec();
                m2.push(cyclic_new);
                s.images.iter().map(|w| w.relabel(&m2)).collect()
            } else {
                s.images.iter().map(rl).collect()
            };
            FlatSpec::Surface {
                genus: s.genus,
                boundary: s.boundary.iter().map(rl).collect(),
                images,
                names: Some(names),
                cyclic_letter: s.cyclic_letter,
                twists: Some(s.twists.iter().map(|t| t.iter().map(rl).collect()).collect()),
            }
        }
    }
}

/// Glues copies of `floors` over `out`, relabelling through `phi`, which must
/// already map every generator below the copied floors. Returns the copy flat ids.
fn glue_copies(
    out: &mut Tower,
    src: &Tower,
    floors: std::ops::Range<usize>,
    phi: &mut Vec<usize>,
    twin_map: &mut BTreeMap<String, String>,
    names: &BTreeMap<String, String>,
    opts: &GlueOptions,
) -> Result<Vec<String>, TowerError> {
    let mut copies = Vec::new();
    for fl in floors {
        let floor = &src.floors()[fl];
        let lower_new = out.gens().len();
        let mut next = lower_new;
        for f in &floor.flats {
            for g in f.gens.clone() {
                phi[g] = next;
                next += 1;
            }
        }
        let specs = floor
            .flats
            .iter()
            .map(|f| copy_spec(f, phi, lower_new, src.gens()[f.gens.clone()].iter().map(|n| twin_name(n, names)).collect()))
            .collect();
        *out = out.glue_floor(specs, opts)?;
        let new_floor = out.floors().last().expect("glued");
        for (f, g) in floor.flats.iter().zip(&new_floor.flats) {
            twin_map.insert(f.id.clone(), g.id.clone());
            twin_map.insert(g.id.clone(), f.id.clone());
            copies.push(g.id.clone());
        }
    }
    Ok(copies)
}

/// Twin tower of `t`: `G ∗_𝔽 G` when the first floor is not abelian, and
/// `G_Db ∗_{G¹_Db} (_f G_Db)` when it is. Every glued floor is re-validated.
pub fn twin_tower(t: &Tower, names: &BTreeMap<String, String>, opts: &GlueOptions) -> Result<TwinTower, TowerError> {
    let base = t.base_rank();
    if t.height() == 0 {
        return Ok(TwinTower {
            tower: t.clone(),
            case: TwinCase::Trivial,
            twin_map: BTreeMap::new(),
            swap: (0..base).collect(),
            original_flats: Vec::new(),
            copy_flats: Vec::new(),
        });
    }
    let first_abelian = t.floors()[0].flats.iter().all(|f| f.abelian().is_some_and(|a| a.layers.is_empty() && a.peg.fits(base)));
    let mut twin_map = BTreeMap::new();
    if !first_abelian {
        let mut out = t.clone();
        let mut phi: Vec<usize> = (0..t.gens().len()).collect();
        let copies = glue_copies(&mut out, t, 0..t.height(), &mut phi, &mut twin_map, names, opts)?;
        let mut swap: Vec<usize> = (0..out.gens().len()).collect();
        for (i, &j) in phi.iter().enumerate().skip(base) {
            swap[i] = j;
            swap[j] = i;
        }
        return Ok(TwinTower { tower: out, case: TwinCase::NonAbelian, twin_map, swap, original_flats: t.natural_ordering(), copy_flats: copies });
    }
    let d = floor_double(t, 1, names, opts)?;
    let mut out = d.tower.clone();
    // Index of each original generator inside the doubled tower.
    let to_db: Vec<usize> = t.gens().iter().map(|n| out.index_of(n).expect("kept")).collect();
    let mut phi: Vec<usize> = (0..t.gens().len()).map(|i| to_db[i]).collect();
    for (k, &(z, y)) in d.pairs.iter().enumerate() {
        let orig = t.floors()[0].flats.iter().flat_map(|f| f.gens.clone()).nth(k).expect("pair");
        debug_assert_eq!(to_db[orig], z);
        phi[orig] = y;
    }
    for f in &t.floors()[0].flats {
        twin_map.insert(f.id.clone(), f.id.clone());
    }
    let copies = glue_copies(&mut out, t, 1..t.height(), &mut phi, &mut twin_map, names, opts)?;
    let mut swap: Vec<usize> = (0..out.gens().len()).collect();
    for &(z, y) in &d.pairs {
        swap[z] = y;
        swap[y] = z;
    }
    let upper_start = t.rank_at(1);
    for i in upper_start..t.gens().len() {
        swap[to_db[i]] = phi[i];
        swap[phi[i]] = to_db[i];
    }
    Ok(TwinTower { tower: out, case: TwinCase::Abelian, twin_map, swap, original_flats: d.tower.natural_ordering(), copy_flats: copies })
}

fn fresh(prefix: &str, taken: &mut HashSet<String>) -> String {
    let mut k = 1;
    loop {
        let n = format!("{prefix}{k}");
        if taken.insert(n.clone()) {
            return n;
        }
        k += 1;
    }
}

/// Closure of `t`: each listed abelian flat gains one layer `z = c^k · a^K`
/// in fresh generators `a`. The result is re-validated.
pub fn tower_closure(t: &Tower, embeddings: &BTreeMap<String, ClosureEmbedding>, opts: &GlueOptions) -> Result<Tower, TowerError> {
    for (id, e) in embeddings {
        let f = t.flat(id).ok_or_else(|| TowerError::UnknownFlat(id.clone()))?;
        let a = f.abelian().ok_or_else(|| TowerError::invalid("closure", format!("flat {id} is not abelian")))?;
        if e.rank() != a.rank {
            return Err(TowerError::invalid("closure", format!("flat {id} has rank {} but the embedding has rank {}", a.rank, e.rank())));
        }
        if e.index().is_zero() {
            return Err(TowerError::invalid("closure", format!("embedding on flat {id} has infinite index")));
        }
    }
    let mut taken: HashSet<String> = t.gens().iter().cloned().collect();
    let gens = t.gens().to_vec();
    let (rebuilt, _) = t.rebuild(|f| {
        let old: Vec<String> = gens[f.gens.clone()].to_vec();
        match (embeddings.get(&f.id), f.abelian()) {
            (Some(e), Some(a)) => {
                let mut ns = old;
                ns.extend((0..a.rank).map(|_| fresh("a", &mut taken)));
                let mut layers = a.layers.clone();
                layers.push(e.clone());
                (FlatKind::Abelian(AbelianFlat { peg: a.peg.clone(), rank: a.rank, layers }), ns)
            }
            _ => (f.kind.clone(), old),
        }
    })?;
    rebuilt.revalidate(opts)
}

/// `z = b·offset + coeff·y` for the outermost block `y` of a layered flat.
pub fn composite_system(a: &AbelianFlat, b: i64) -> LinearSystem {
    let m = a.rank;
    let mut offset: IntVec = vec![BigInt::zero(); m];
    let mut coeff = IntMatrix::identity(m);
    for layer in &a.layers {
        let shift: IntVec = layer.peg_col.iter().map(|x| x * b).collect();
        let add = coeff.mul_vec(&shift);
        offset = offset.iter().zip(&add).map(|(x, y)| x + y).collect();
        coeff = coeff.mul(&layer.k);
    }
    LinearSystem { offset, coeff }
}

/// Outcome of extending a morphism through a closure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extension {
    /// Exponents of `γ` for the outermost generator block, and the images of
    /// every block of the flat.
    Extends { y: IntVec, images: Vec<Word> },
    /// The `z` exponents must lie in this coset.
    DoesNotExtend { coset: Coset },
}

impl std::fmt::Display for Extension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Extension::Extends { y, .. } if y.len() == 1 => write!(f, "extends, y={}", y[0]),
            Extension::Extends { y, .. } => {
                write!(f, "extends, y=({})", y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            }
            Extension::DoesNotExtend { coset } => write!(f, "does not extend, coset {coset}"),
        }
    }
}

/// Decides whether a morphism to the base, given on the level below `flat`
/// (`lower`) and on the flat's `z` block (`z_images`), extends over the
/// closure layers of `flat`.
pub fn closure_extension(flat: &Flat, lower: &[Word], z_images: &[Word]) -> Result<Extension, TowerError> {
    let a = flat.abelian().ok_or_else(|| TowerError::invalid("extend", "flat is not abelian"))?;
    let hp = a.peg.substitute(lower);
    if hp.is_identity() {
        return Err(TowerError::invalid("extend", "peg is sent to the identity"));
    }
    let (gamma, b) = primitive_root(&hp)?;
    let mut p = Vec::new();
    for w in z_images {
        if w.is_identity() {
            p.push(BigInt::zero());
            continue;
        }
        let (r, k) = primitive_root(w)?;
        let e = if r == gamma {
            k as i64
        } else if r == gamma.inverse() {
            -(k as i64)
        } else {
            return Err(TowerError::invalid("extend", "a z image does not commute with the peg image"));
        };
        p.push(BigInt::from(e));
    }
    let sys = composite_system(a, b as i64);
    match solvable(&sys, &p) {
        Some(y) => {
            let top: Vec<i64> = y.iter().map(|v| v.to_i64().expect("small exponent")).collect();
            let blocks = abelian_block_values(a, b as i64, &top);
            let images = blocks.iter().flat_map(|blk| blk.iter().map(|&e| gamma.pow(e))).collect();
            Ok(Extension::Extends { y, images })
        }
        None => Ok(Extension::DoesNotExtend {
            coset: crate::dioph::system_to_coset(&sys).map_err(|e| TowerError::invalid("extend", e.to_string()))?,
        }),
    }
}

/// Lattices of one twin pair after symmetrization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairLattices {
    pub flat: String,
    pub twin: String,
    pub u: Lattice,
    pub u_hat: Lattice,
}

#[derive(Clone, Debug)]
pub struct SymmetricClosure {
    pub tower: Tower,
    pub pairs: Vec<PairLattices>,
}

/// Closes a twin tower with `embeddings`, then closes again so each twin
/// pair realizes the cosets `p + U∩Û` and `p̂ + U∩Û`.
pub fn symmetric_closure(tt: &TwinTower, embeddings: &BTreeMap<String, ClosureEmbedding>, opts: &GlueOptions) -> Result<SymmetricClosure, TowerError> {
    let mut pairs = Vec::new();
    for id in embeddings.keys() {
        let twin = tt.twin_map.get(id).ok_or_else(|| TowerError::invalid("symmetric", format!("flat {id} has no twin")))?;
        if twin == id {
            continue;
        }
        if !embeddings.contains_key(twin) {
            return Err(TowerError::invalid("symmetric", format!("twin {twin} of flat {id} has no embedding")));
        }
        if id < twin {
            pairs.push((id.clone(), twin.clone()));
        }
    }
    let closed = tower_closure(&tt.tower, embeddings, opts)?;
    let mut second = BTreeMap::new();
    for (f, g) in &pairs {
        let (ef, eg) = (&embeddings[f], &embeddings[g]);
        let w = Lattice::span(&ef.k).intersect(&Lattice::span(&eg.k));
        second.insert(f.clone(), relative_layer(&ef.k, &w)?);
        second.insert(g.clone(), relative_layer(&eg.k, &w)?);
    }
    let tower = if second.is_empty() { closed } else { tower_closure(&closed, &second, opts)? };
    let mut out = Vec::new();
    for (f, g) in pairs {
        let lat = |id: &str| {
            let a = tower.flat(id).and_then(|x| x.abelian()).expect("closed flat");
            Lattice::span(&composite_system(a, 1).coeff)
        };
        let (u, u_hat) = (lat(&f), lat(&g));
        if u != u_hat {
            return Err(TowerError::invalid("symmetric", format!("lattices of flats {f} and {g} differ")));
        }
        out.push(PairLattices { flat: f, twin: g, u, u_hat });
    }
    Ok(SymmetricClosure { tower, pairs: out })
}

/// Layer `K₁` with zero peg column and `span(K·K₁) = w`.
fn relative_layer(k: &IntMatrix, w: &Lattice) -> Result<ClosureEmbedding, TowerError> {
    let m = k.rows();
    let sys = LinearSystem { offset: vec![BigInt::zero(); m], coeff: k.clone() };
    let cols: Vec<IntVec> = w
        .basis()
        .columns()
        .iter()
        .map(|c| solvable(&sys, c).ok_or_else(|| TowerError::invalid("symmetric", "intersection is not inside the lattice")))
        .collect::<Result<_, _>>()?;
    ClosureEmbedding::new(vec![BigInt::zero(); m], IntMatrix::from_cols(m, &cols)).map_err(|e| TowerError::invalid("symmetric", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompletionError {
    #[error(transparent)]
    Gog(#[from] GogError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("filtration: {0}")]
    Filtration(String),
    #[error("strictness: {0}")]
    Strictness(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// One filtration step and the case it fell into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionStep {
    pub edge: usize,
    pub case: &'static str,
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub comp: Tower,
    /// Presentation of `G` for the filtration tree.
    pub source: Presentation,
    pub embedding: Morphism,
    pub filtration: Vec<usize>,
    pub steps: Vec<CompletionStep>,
    /// Conjugator `γ_v` per vertex, over the generators of `comp`.
    pub gammas: Vec<Word>,
    pub assumptions: Vec<String>,
}

impl CompletionResult {
    /// Exact relator check of the embedding (every relator image decided).
    pub fn check_relators(&self, opts: &VerdictOptions) -> MorphismCheck {
        crate::normal::check_morphism_tower(&self.source, &self.embedding.images, &self.comp, self.comp.height(), opts)
    }
}

enum Pending {
    Abelian { peg: Word, gens: Vec<usize> },
    Surface { genus: usize, xs: Vec<usize>, ts: Vec<Option<usize>>, boundary: Vec<Option<Word>>, x_images: Vec<Word>, t_images: Vec<Option<Word>> },
}

/// Symbol table for `Comp` generators, with words over symbol indices.
struct Symbols {
    names: Vec<String>,
    taken: HashSet<String>,
}

impl Symbols {
    fn add(&mut self, wanted: Option<&str>, prefix: &str) -> usize {
        let name = match wanted {
            Some(w) => {
                let mut n = format!("{w}'");
                while self.taken.contains(&n) {
                    n.push('\'');
                }
                self.taken.insert(n.clone());
                n
            }
            None => fresh(prefix, &mut self.taken),
        };
        self.names.push(name);
        self.names.len() - 1
    }
}

/// Default filtration: tree edges in breadth-first order, then the
/// remaining edges in declaration order.
pub fn default_filtration(gad: &Gad) -> Result<Vec<usize>, GogError> {
    let g = &gad.gog.graph;
    let tree = maximal_subtree(g)?;
    let mut order = Vec::new();
    let mut seen = vec![false; g.vertex_count()];
    seen[0] = true;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for e in 0..g.edge_count() {
            if tree.contains(&e) && g.alpha(e) == v && !seen[g.tau(e)] {
                seen[g.tau(e)] = true;
                order.push(e / 2);
                queue.push_back(g.tau(e));
            }
        }
    }
    let rest: Vec<usize> = (0..g.pair_count()).filter(|k| !order.contains(k)).collect();
    order.extend(rest);
    Ok(order)
}

/// The completion of `G = π₁(gad)` with respect to `eta : G → L`, where
/// `eta` is given on the generators of the filtration-tree presentation and
/// `L` is free on `target`.
pub fn completion(
    gad: &Gad,
    target: &[String],
    eta: &BTreeMap<String, String>,
    filtration: Option<&[usize]>,
    opts: &GlueOptions,
) -> Result<CompletionResult, CompletionError> {
    let g = &gad.gog.graph;
    let filtration: Vec<usize> = match filtration {
        Some(f) => f.to_vec(),
        None => default_filtration(gad)?,
    };
    if gad.classes.first() != Some(&VertexClass::Rigid) {
        return Err(CompletionError::Filtration("the first vertex must be rigid".into()));
    }
    let mut sorted = filtration.clone();
    sorted.sort_unstable();
    if sorted != (0..g.pair_count()).collect::<Vec<_>>() {
        return Err(CompletionError::Filtration("must list every edge exactly once".into()));
    }
    // Tree edges are the ones that reach a new vertex.
    let mut present = vec![false; g.vertex_count()];
    present[0] = true;
    let mut tree = Vec::new();
    for &k in &filtration {
        let (a, b) = (g.alpha(2 * k), g.tau(2 * k));
        match (present[a], present[b]) {
            (false, false) => return Err(CompletionError::Filtration(format!("edge {k} is not attached to the current subgraph"))),
            (true, true) => {}
            _ => {
                present[a] = true;
                present[b] = true;
                tree.extend([2 * k, 2 * k + 1]);
            }
        }
    }
    tree.sort_unstable();
    let fund = gad.gog.fundamental_presentation(&tree)?;
    let source = fund.presentation.clone();
    crate::word::Basis::new(target.to_vec())?;
    let mut eta_images = Vec::new();
    for name in &source.gens {
        let s = eta.get(name).ok_or_else(|| CompletionError::Strictness(format!("no image for generator {name}")))?;
        eta_images.push(crate::word::parse_word(s, target)?);
    }
    if check_morphism_free(&source, &eta_images) != MorphismCheck::Exact(true) {
        return Err(CompletionError::Strictness("eta does not kill every relator".into()));
    }
    let eta_of = |w: &Word| w.substitute(&eta_images);

    let l = target.len();
    let mut syms = Symbols { names: target.to_vec(), taken: target.iter().cloned().collect() };
    let mut pending: Vec<Pending> = Vec::new();
    let mut surface_slot: HashMap<usize, usize> = HashMap::new();
    let mut gammas: Vec<Option<Word>> = vec![None; g.vertex_count()];
    gammas[0] = Some(Word::identity());
    let mut images: Vec<Option<Word>> = vec![None; source.rank()];
    for i in 0..gad.gog.vertex_groups[0].rank() {
        images[fund.offsets[0] + i] = Some(eta_of(&Word::gen(fund.offsets[0] + i)));
    }
    let mut steps = Vec::new();
    let mut assumptions = Vec::new();
    let mut seen_vertex = vec![false; g.vertex_count()];
    seen_vertex[0] = true;

    for &k in &filtration {
        let stable = fund.stable.get(&k).copied();
        // Orient so that `u` is already present; `v` may be new.
        let (eu, ev) = if seen_vertex[g.alpha(2 * k)] { (2 * k + 1, 2 * k) } else { (2 * k, 2 * k + 1) };
        // eu lands in u = tau(eu), ev lands in v = tau(ev).
        let (u, v) = (g.tau(eu), g.tau(ev));
        if gad.gog.edge_ranks[k] != 1 {
            return Err(CompletionError::Strictness(format!("edge {k}: an edge group of rank {} cannot embed in a free group", gad.gog.edge_ranks[k])));
        }
        let img_u = fund.globalize(u, &gad.gog.edge_maps[eu][0]);
        let new_v = !seen_vertex[v];
        let gamma_u = gammas[u].clone().expect("present vertex");
        let (cu, cv) = (gad.classes[u], gad.classes[v]);
        let step_case;
        match (cu, cv) {
            (VertexClass::Rigid, VertexClass::Rigid) | (VertexClass::Rigid, VertexClass::Abelian) if cv == VertexClass::Rigid || new_v => {
                let p = eta_of(&img_u);
                if p.is_identity() {
                    return Err(CompletionError::Strictness(format!("edge {k}: eta kills the edge group")));
                }
                let (rho, kpow) = primitive_root(&p)?;
                let rank_new = if cv == VertexClass::Abelian { gad.gog.vertex_groups[v].rank() - 1 } else { 1 };
                // Existing flat whose peg carrier is conjugate to ⟨ρ⟩.
                let mut merged = None;
                for (idx, pf) in pending.iter().enumerate() {
                    if let Pending::Abelian { peg, .. } = pf {
                        if carriers_conjugate(peg, &rho)? {
                            let (h, sigma) = match is_conjugate_cyclic(peg, &rho) {
                                Some(h) => (h, 1i64),
                                None => (is_conjugate_cyclic(&peg.inverse(), &rho).expect("conjugate carriers"), -1),
                            };
                            merged = Some((idx, h, sigma));
                            break;
                        }
                    }
                }
                let merged_case = merged.is_some();
                let (zs, h): (Vec<usize>, Word) = match merged {
                    Some((idx, h, _)) => {
                        let mut new = Vec::new();
                        for _ in 0..rank_new {
                            new.push(syms.add(None, "z"));
                        }
                        if let Pending::Abelian { gens, .. } = &mut pending[idx] {
                            gens.extend(new.iter().copied());
                        }
                        (new, h)
                    }
                    None => {
                        let new: Vec<usize> = (0..rank_new).map(|_| syms.add(None, "z")).collect();
                        pending.push(Pending::Abelian { peg: rho.clone(), gens: new.clone() });
                        (new, Word::identity())
                    }
                };
                let z_eff: Vec<Word> = zs.iter().map(|&z| Word::gen(z).conjugate_by(&h)).collect();
                if cv == VertexClass::Rigid {
                    let z = &z_eff[0];
                    if new_v {
                        let gv = gamma_u.mul(z);
                        for i in 0..gad.gog.vertex_groups[v].rank() {
                            let gi = fund.offsets[v] + i;
                            images[gi] = Some(eta_of(&Word::gen(gi)).conjugate_by(&gv));
                        }
                        gammas[v] = Some(gv);
                    } else {
                        // Both ends are present, so u = α(e) and z commutes with η(f_ē(c)).
                        let t = stable.expect("non-tree edge");
                        let gt = gammas[g.tau(2 * k)].clone().unwrap();
                        images[t] = Some(gt.mul(&eta_of(&Word::gen(t))).mul(z).mul(&gamma_u.inverse()));
                    }
                    step_case = if merged_case { "1B" } else { "1A" };
                } else {
                    // Abelian leaf: complete the peripheral vector to a basis.
                    let n = gad.gog.vertex_groups[v].rank();
                    let local = &gad.gog.edge_maps[ev][0];
                    let vp: Vec<BigInt> = (0..n).map(|i| BigInt::from(local.exponent_sum(i))).collect();
                    let b = crate::dioph::complete_to_unimodular(&vp)
                        .map_err(|_| CompletionError::Unsupported(format!("edge {k}: peripheral vector is not primitive")))?;
                    let binv = crate::dioph::unimodular_inverse(&b).map_err(|e| CompletionError::Unsupported(e.to_string()))?;
                    for i in 0..n {
                        let mut w = rho.pow(kpow as i64 * binv[(0, i)].to_i64().expect("small"));
                        for j in 1..n {
                            w.mul_assign(&z_eff[j - 1].pow(binv[(j, i)].to_i64().expect("small")));
                        }
                        images[fund.offsets[v] + i] = Some(w.conjugate_by(&gamma_u));
                    }
                    gammas[v] = Some(gamma_u.clone());
                    step_case = if merged_case { "2B" } else { "2A" };
                }
            }
            (VertexClass::Rigid, VertexClass::Surface) if new_v => {
                let sd = gad.surface_data[v].as_ref().expect("surface data");
                let d_index = boundary_index(&gad.gog.edge_maps[ev][0], sd.genus);
                if d_index != 0 {
                    return Err(CompletionError::Unsupported(format!("edge {k}: the first edge at a surface must attach its first boundary")));
                }
                let xs: Vec<usize> = (0..2 * sd.genus).map(|i| syms.add(Some(&gad.gog.vertex_groups[v].gens[i]), "x")).collect();
                let x_images: Vec<Word> = (0..2 * sd.genus).map(|i| eta_of(&Word::gen(fund.offsets[v] + i))).collect();
                let mut boundary = vec![None; sd.boundary];
                boundary[0] = Some(eta_of(&img_u));
                let mut t_images = vec![None; sd.boundary];
                t_images[0] = Some(Word::identity());
                pending.push(Pending::Surface { genus: sd.genus, xs: xs.clone(), ts: vec![None; sd.boundary], boundary, x_images, t_images });
                surface_slot.insert(v, pending.len() - 1);
                for (i, &x) in xs.iter().enumerate() {
                    images[fund.offsets[v] + i] = Some(Word::gen(x).conjugate_by(&gamma_u));
                }
                gammas[v] = Some(gamma_u.clone());
                step_case = "3A";
            }
            (VertexClass::Surface, VertexClass::Rigid) | (VertexClass::Rigid, VertexClass::Surface) => {
                // A later boundary of a surface already present.
                let (s, r, e_s) = if cu == VertexClass::Surface { (u, v, eu) } else { (v, u, ev) };
                let sd = gad.surface_data[s].as_ref().expect("surface data");
                let d_index = boundary_index(&gad.gog.edge_maps[e_s][0], sd.genus);
                let e_r = e_s ^ 1;
                let img_r = fund.globalize(r, &gad.gog.edge_maps[e_r][0]);
                let slot = surface_slot[&s];
                let tt = syms.add(None, "t");
                let gamma_s = gammas[s].clone().unwrap();
                let b = eta_of(&img_r);
                let retract_t = match stable {
                    // f_e(c) = t f_ē(c) t⁻¹; e = 2k lands in tau(2k).
                    Some(t) if g.tau(2 * k) == s => eta_of(&Word::gen(t)),
                    Some(t) => eta_of(&Word::gen(t)).inverse(),
                    None => Word::identity(),
                };
                if let Pending::Surface { ts, boundary, t_images, .. } = &mut pending[slot] {
                    if boundary[d_index].is_some() {
                        return Err(CompletionError::Filtration(format!("edge {k}: boundary attached twice")));
                    }
                    ts[d_index] = Some(tt);
                    boundary[d_index] = Some(b.clone());
                    t_images[d_index] = Some(retract_t);
                }
                let t_word = Word::gen(tt);
                if new_v {
                    // New rigid vertex on a later boundary: γ_r = γ_s t̃.
                    let gr = gamma_s.mul(&t_word);
                    for i in 0..gad.gog.vertex_groups[r].rank() {
                        let gi = fund.offsets[r] + i;
                        images[gi] = Some(eta_of(&Word::gen(gi)).conjugate_by(&gr));
                    }
                    gammas[r] = Some(gr);
                } else {
                    let t = stable.expect("non-tree edge");
                    let gamma_r = gammas[r].clone().unwrap();
                    let ft = if g.tau(2 * k) == s {
                        gamma_s.mul(&t_word).mul(&gamma_r.inverse())
                    } else {
                        gamma_r.mul(&t_word.inverse()).mul(&gamma_s.inverse())
                    };
                    images[t] = Some(ft);
                }
                step_case = "3B";
            }
            _ => {
                return Err(CompletionError::Unsupported(format!(
                    "edge {k}: {cu:?}-{cv:?} edges{}",
                    if new_v { "" } else { " closing a cycle" }
                )))
            }
        }
        if new_v {
            seen_vertex[v] = true;
        }
        steps.push(CompletionStep { edge: k, case: step_case });
    }

    // Surface boundary generators d_k are written through the copy.
    for v in 0..g.vertex_count() {
        if let (VertexClass::Surface, Some(&slot)) = (gad.classes[v], surface_slot.get(&v)) {
            let sd = gad.surface_data[v].as_ref().unwrap();
            if let Pending::Surface { ts, boundary, .. } = &pending[slot] {
                if boundary.iter().any(Option::is_none) {
                    return Err(CompletionError::Filtration("a surface boundary has no edge".into()));
                }
                let gamma = gammas[v].clone().unwrap();
                for d in 0..sd.boundary {
                    let bd = boundary[d].clone().unwrap();
                    let val = match ts[d] {
                        None => bd,
                        Some(t) => bd.conjugate_by(&Word::gen(t)),
                    };
                    images[fund.offsets[v] + 2 * sd.genus + d] = Some(val.conjugate_by(&gamma));
                }
            }
        }
    }

    // Materialize the single floor over L.
    let mut specs = Vec::new();
    let mut order: Vec<usize> = (0..l).collect();
    for p in &pending {
        match p {
            Pending::Abelian { peg, gens } => {
                specs.push(FlatSpec::abelian(peg.clone(), gens.len()).with_names(gens.iter().map(|&i| syms.names[i].clone()).collect()));
                order.extend(gens.iter().copied());
            }
            Pending::Surface { genus, xs, ts, boundary, x_images, t_images } => {
                let mut names: Vec<String> = xs.iter().map(|&i| syms.names[i].clone()).collect();
                let mut imgs = x_images.clone();
                let mut gens_order = xs.clone();
                for d in 1..ts.len() {
                    let t = ts[d].expect("checked");
                    names.push(syms.names[t].clone());
                    imgs.push(t_images[d].clone().unwrap());
                    gens_order.push(t);
                }
                let bd: Vec<Word> = boundary.iter().map(|b| b.clone().unwrap()).collect();
                let spec = FlatSpec::Surface { genus: *genus, boundary: bd, images: imgs, names: Some(names), cyclic_letter: false, twists: None };
                specs.push(spec);
                order.extend(gens_order);
            }
        }
    }
    let base = Tower::with_base_names(target.to_vec())?;
    let comp = if specs.is_empty() {
        base
    } else {
        base.glue_floor(specs, opts).map_err(|e| match e {
            TowerError::Invalid { check, detail } => CompletionError::Strictness(format!("{check}: {detail}")),
            other => CompletionError::Tower(other),
        })?
    };
    assumptions.extend(comp.assumptions().iter().cloned());
    let mut sym_to_comp = vec![0usize; syms.names.len()];
    for (pos, &s) in order.iter().enumerate() {
        sym_to_comp[s] = pos;
    }
    let embedding_images: Vec<Word> = images
        .into_iter()
        .enumerate()
        .map(|(i, w)| w.map(|w| w.relabel(&sym_to_comp)).ok_or_else(|| CompletionError::Filtration(format!("generator {} never reached", source.gens[i]))))
        .collect::<Result<_, _>>()?;
    let gammas = gammas.into_iter().map(|g| g.unwrap_or_default().relabel(&sym_to_comp)).collect();
    Ok(CompletionResult { comp, source, embedding: Morphism::new("completion", embedding_images), filtration, steps, gammas, assumptions })
}

/// Index of the boundary generator `d_k` that a surface edge maps onto.
fn boundary_index(w: &Word, genus: usize) -> usize {
    w.letters()[0] as usize - 1 - 2 * genus
}

/// Counts from the bounded-ball injectivity check.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InjectivityReport {
    pub words: usize,
    /// Distinct elements of `G` among the words.
    pub classes: usize,
    /// Class pairs with equal images under every sampled morphism that were
    /// then separated by a word-problem verdict in `Comp`.
    pub separated_by_verdict: usize,
    pub unknown: usize,
    /// Distinct elements with equal images.
    pub collisions: usize,
}

/// Injectivity of the completion embedding on the ball of `radius`.
///
/// Images are bucketed by their values under sampled morphisms `Comp → L`
/// (different buckets are separated by a witness). Inside a bucket, words
/// equal in `G` are merged using the word problem of `G`, and distinct
/// classes are compared by `word_verdict` in `Comp`. Returns `None` when
/// the word problem of `G` is not available.
pub fn check_injectivity(gad: &Gad, res: &CompletionResult, radius: usize, opts: &VerdictOptions) -> Option<InjectivityReport> {
    gad.single_edge_word_problem(&Word::identity())?;
    let level = res.comp.height();
    let homs = res.comp.sample_homs(level, opts.seed, 8);
    let rank = res.source.rank() as i32;
    let mut words = vec![Word::identity()];
    let mut frontier = vec![Word::identity()];
    for _ in 0..radius {
        let mut next = Vec::new();
        for w in &frontier {
            let last = w.letters().last().copied();
            for l in (1..=rank).flat_map(|x| [x, -x]) {
                if last == Some(-l) {
                    continue;
                }
                next.push(w.mul(&Word::from_letters([l])));
            }
        }
        words.extend(next.iter().cloned());
        frontier = next;
    }
    let mut report = InjectivityReport { words: words.len(), ..Default::default() };
    let mut buckets: HashMap<Vec<Word>, Vec<(Word, Word)>> = HashMap::new();
    for w in &words {
        let img = res.embedding.apply(w).ok()?;
        let key: Vec<Word> = homs.iter().map(|h| img.substitute(&h.images)).collect();
        let reps = buckets.entry(key).or_default();
        let mut same = false;
        for (r, _) in reps.iter() {
            if gad.single_edge_word_problem(&w.mul(&r.inverse()))? {
                same = true;
                break;
            }
        }
        if same {
            continue;
        }
        for (_, rimg) in reps.iter() {
            match word_verdict(&res.comp, level, &img.mul(&rimg.inverse()), opts) {
                Verdict::NonTrivial(_) => report.separated_by_verdict += 1,
                Verdict::Trivial(_) => report.collisions += 1,
                Verdict::Unknown => report.unknown += 1,
            }
        }
        reps.push((w.clone(), img));
        report.classes += 1;
    }
    Some(report)
}
