//! Graphs of groups with free abelian edge groups, GADs, and their
//! fundamental-group presentations.
//!
//! Oriented edges come in pairs: edge `2k` is the declared edge `k` and
//! `2k+1` its reverse. The map `f_e` of an oriented edge lands in the vertex
//! group at `tau(e)`, and the relation attached to a non-tree pair with
//! stable letter `t` is `f_e(c) = t · f_ē(c) · t⁻¹`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::dioph::{hnf, IntMatrix, Lattice};
use crate::normal::{amalgam_reduce, rewrite_search, GenericEdge, Morphism, Presentation, Side, Syllable, VertexKind};
use crate::tower::surface_word;
use crate::word::{commutes, parse_word, Basis, Word, WordError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GogError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("edge {edge}: {detail}")]
    BadEdge { edge: usize, detail: String },
    #[error("vertex `{vertex}`: {detail}")]
    BadVertex { vertex: String, detail: String },
    #[error("generator `{0}` is declared by two vertices")]
    DuplicateGenerator(String),
    #[error("`{0}` is not a maximal subtree")]
    NotATree(String),
    #[error("{0} does not centralize the edge image")]
    NotCentralizing(String),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("json: {0}")]
    Json(String),
}

/// A finite connected graph with an edge involution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub vertices: Vec<String>,
    alpha: Vec<usize>,
    tau: Vec<usize>,
}

impl Graph {
    /// Builds the graph with one edge pair per `(from, to)`.
    pub fn new(vertices: Vec<String>, pairs: &[(usize, usize)]) -> Self {
        let mut alpha = Vec::new();
        let mut tau = Vec::new();
        for &(a, b) in pairs {
            alpha.extend([a, b]);
            tau.extend([b, a]);
        }
        Graph { vertices, alpha, tau }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn pair_count(&self) -> usize {
        self.alpha.len() / 2
    }

    pub fn inv(&self, e: usize) -> usize {
        e ^ 1
    }

    pub fn alpha(&self, e: usize) -> usize {
        self.alpha[e]
    }

    pub fn tau(&self, e: usize) -> usize {
        self.tau[e]
    }

    pub fn is_connected(&self) -> bool {
        self.vertices.is_empty() || self.bfs_tree().len() / 2 + 1 == self.vertex_count()
    }

    fn bfs_tree(&self) -> Vec<usize> {
        if self.vertices.is_empty() {
            return Vec::new();
        }
        let mut seen = vec![false; self.vertex_count()];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        let mut tree = Vec::new();
        while let Some(v) = queue.pop_front() {
            for e in 0..self.edge_count() {
                if self.alpha[e] == v && !seen[self.tau[e]] {
                    seen[self.tau[e]] = true;
                    tree.push(e);
                    tree.push(self.inv(e));
                    queue.push_back(self.tau[e]);
                }
            }
        }
        tree.sort_unstable();
        tree
    }

    /// Whether `tree` (closed under inversion) spans the graph without cycles.
    pub fn is_maximal_subtree(&self, tree: &[usize]) -> bool {
        let mut pairs: Vec<usize> = tree.iter().map(|e| e / 2).collect();
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.len() + 1 != self.vertex_count() || tree.iter().any(|&e| !tree.contains(&self.inv(e))) {
            return false;
        }
        // Union-find acyclicity.
        let mut parent: Vec<usize> = (0..self.vertex_count()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for k in pairs {
            let (a, b) = (find(&mut parent, self.alpha[2 * k]), find(&mut parent, self.tau[2 * k]));
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }

    /// Vertices reachable from `start` without crossing pair `cut`.
    fn component_without(&self, start: usize, cut: usize) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for e in 0..self.edge_count() {
                if e / 2 != cut && self.alpha[e] == v && !seen[self.tau[e]] {
                    seen[self.tau[e]] = true;
                    stack.push(self.tau[e]);
                }
            }
        }
        seen
    }
}

/// Spanning tree by breadth-first search from vertex 0, as a sorted set of
/// oriented edges closed under inversion.
pub fn maximal_subtree(g: &Graph) -> Result<Vec<usize>, GogError> {
    let t = g.bfs_tree();
    if t.len() / 2 + 1 != g.vertex_count().max(1) {
        return Err(GogError::Disconnected);
    }
    Ok(t)
}

/// Vertex groups, free abelian edge groups and edge maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphOfGroups {
    pub graph: Graph,
    pub vertex_groups: Vec<Presentation>,
    /// Rank of the free abelian group on each edge pair.
    pub edge_ranks: Vec<usize>,
    /// Images of the edge generators, per oriented edge, over the local
    /// generators of `G_{tau(e)}`.
    pub edge_maps: Vec<Vec<Word>>,
}

/// A fundamental-group presentation with its bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fundamental {
    pub presentation: Presentation,
    pub tree: Vec<usize>,
    /// First global generator index of each vertex group.
    pub offsets: Vec<usize>,
    /// Stable letter index for each non-tree pair.
    pub stable: BTreeMap<usize, usize>,
}

impl Fundamental {
    /// Global word for a local word of vertex `v`.
    pub fn globalize(&self, v: usize, w: &Word) -> Word {
        shift(w, self.offsets[v])
    }

    /// Vertex owning a global generator, if it is not a stable letter.
    pub fn vertex_of(&self, gen: usize) -> Option<usize> {
        if self.stable.values().any(|&s| s == gen) {
            return None;
        }
        self.offsets.iter().rposition(|&o| o <= gen)
    }
}

fn shift(w: &Word, off: usize) -> Word {
    Word::from_letters(w.letters().iter().map(|&l| if l > 0 { l + off as i32 } else { l - off as i32 }))
}

impl GraphOfGroups {
    pub fn new(graph: Graph, vertex_groups: Vec<Presentation>, edge_ranks: Vec<usize>, edge_maps: Vec<Vec<Word>>) -> Result<Self, GogError> {
        let g = GraphOfGroups { graph, vertex_groups, edge_ranks, edge_maps };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<(), GogError> {
        if !self.graph.is_connected() {
            return Err(GogError::Disconnected);
        }
        if self.edge_ranks.len() != self.graph.pair_count() || self.edge_maps.len() != self.graph.edge_count() {
            return Err(GogError::BadEdge { edge: 0, detail: "edge data does not match the graph".into() });
        }
        for e in 0..self.graph.edge_count() {
            let target = &self.vertex_groups[self.graph.tau(e)];
            if self.edge_maps[e].len() != self.edge_ranks[e / 2] || self.edge_ranks[e / 2] == 0 {
                return Err(GogError::BadEdge { edge: e / 2, detail: "edge map rank mismatch".into() });
            }
            if self.edge_maps[e].iter().any(|w| !w.fits(target.rank())) {
                return Err(GogError::BadEdge { edge: e / 2, detail: "image is not a word over the target vertex".into() });
            }
        }
        Ok(())
    }

    /// The presentation of `π₁(𝒢, T)`: vertex generators in vertex order,
    /// then `t<k>` for each non-tree pair `k` (1-based).
    pub fn fundamental_presentation(&self, tree: &[usize]) -> Result<Fundamental, GogError> {
        if !self.graph.is_maximal_subtree(tree) {
            return Err(GogError::NotATree(format!("{tree:?}")));
        }
        let mut gens: Vec<String> = Vec::new();
        let mut offsets = Vec::new();
        let mut relators = Vec::new();
        for p in &self.vertex_groups {
            offsets.push(gens.len());
            for g in &p.gens {
                if gens.contains(g) {
                    return Err(GogError::DuplicateGenerator(g.clone()));
                }
                gens.push(g.clone());
            }
        }
        for (v, p) in self.vertex_groups.iter().enumerate() {
            relators.extend(p.relators.iter().map(|r| shift(r, offsets[v])));
        }
        let mut stable = BTreeMap::new();
        for k in 0..self.graph.pair_count() {
            if !tree.contains(&(2 * k)) {
                let mut name = format!("t{}", k + 1);
                while gens.contains(&name) {
                    name.push('\'');
                }
                stable.insert(k, gens.len());
                gens.push(name);
            }
        }
        for k in 0..self.graph.pair_count() {
            let (e, eb) = (2 * k, 2 * k + 1);
            for j in 0..self.edge_ranks[k] {
                let fe = shift(&self.edge_maps[e][j], offsets[self.graph.tau(e)]);
                let feb = shift(&self.edge_maps[eb][j], offsets[self.graph.tau(eb)]);
                let r = match stable.get(&k) {
                    None => fe.mul(&feb.inverse()),
                    Some(&t) => fe.mul(&feb.conjugate_by(&Word::gen(t)).inverse()),
                };
                if !r.is_identity() {
                    relators.push(r);
                }
            }
        }
        let mut tree = tree.to_vec();
        tree.sort_unstable();
        Ok(Fundamental { presentation: Presentation::new(gens, relators), tree, offsets, stable })
    }

    /// Fundamental presentation with tree-edge relators `x = w` eliminated
    /// whenever one side is a single generator not occurring on the other.
    /// Of two candidates the later generator is eliminated.
    pub fn reduced_presentation(&self, tree: &[usize]) -> Result<Presentation, GogError> {
        let f = self.fundamental_presentation(tree)?;
        let n = f.presentation.rank();
        let mut images: Vec<Word> = (0..n).map(Word::gen).collect();
        let mut dropped = vec![false; n];
        let mut edge_rels: Vec<Word> = Vec::new();
        for k in 0..self.graph.pair_count() {
            for j in 0..self.edge_ranks[k] {
                let fe = f.globalize(self.graph.tau(2 * k), &self.edge_maps[2 * k][j]);
                let feb = f.globalize(self.graph.tau(2 * k + 1), &self.edge_maps[2 * k + 1][j]);
                if let Some(&t) = f.stable.get(&k) {
                    edge_rels.push(fe.mul(&feb.conjugate_by(&Word::gen(t)).inverse()));
                    continue;
                }
                let cur = fe.mul(&feb.inverse()).substitute(&images);
                match eliminable(&cur) {
                    Some((g, val)) => {
                        let mut sub: Vec<Word> = (0..n).map(Word::gen).collect();
                        sub[g] = val;
                        for im in images.iter_mut() {
                            *im = im.substitute(&sub);
                        }
                        dropped[g] = true;
                    }
                    None => edge_rels.push(cur),
                }
            }
        }
        let mut map = vec![usize::MAX; n];
        let mut gens = Vec::new();
        for i in 0..n {
            if !dropped[i] {
                map[i] = gens.len();
                gens.push(f.presentation.gens[i].clone());
            }
        }
        let vertex_rels = self.vertex_groups.iter().enumerate().flat_map(|(v, p)| p.relators.iter().map(move |r| (v, r)));
        let mut relators = Vec::new();
        let all = vertex_rels.map(|(v, r)| f.globalize(v, r)).chain(edge_rels);
        for r in all {
            let w = r.substitute(&images).relabel(&map);
            if !w.is_identity() && !relators.contains(&w) {
                relators.push(w);
            }
        }
        Ok(Presentation::new(gens, relators))
    }

    /// Path from vertex 0 to every vertex inside `tree`, as oriented edges.
    fn tree_paths(&self, tree: &[usize]) -> Vec<Vec<usize>> {
        let mut paths: Vec<Option<Vec<usize>>> = vec![None; self.graph.vertex_count()];
        paths[0] = Some(Vec::new());
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &e in tree {
                let w = self.graph.tau(e);
                if self.graph.alpha(e) == v && paths[w].is_none() {
                    let mut p = paths[v].clone().unwrap();
                    p.push(e);
                    paths[w] = Some(p);
                    queue.push_back(w);
                }
            }
        }
        paths.into_iter().map(|p| p.unwrap_or_default()).collect()
    }

    /// Value in `π₁(𝒢, T)` of the groupoid arrow along oriented edge `e`.
    /// The arrow of the representative edge of a pair is `t⁻¹`.
    fn arrow(f: &Fundamental, e: usize) -> Word {
        match f.stable.get(&(e / 2)) {
            None => Word::identity(),
            Some(&t) if e % 2 == 0 => Word::gen(t).inverse(),
            Some(&t) => Word::gen(t),
        }
    }

    fn path_word(f: &Fundamental, path: &[usize]) -> Word {
        Word::product(path.iter().map(|&e| Self::arrow(f, e)).collect::<Vec<_>>().iter())
    }

    /// Re-mapping `π₁(𝒢, T1) → π₁(𝒢, T2)` through loops based at vertex 0.
    pub fn subtree_isomorphism(&self, t1: &[usize], t2: &[usize]) -> Result<(Fundamental, Fundamental, Morphism), GogError> {
        let f1 = self.fundamental_presentation(t1)?;
        let f2 = self.fundamental_presentation(t2)?;
        let paths = self.tree_paths(&f1.tree);
        let mut images = Vec::new();
        for v in 0..self.graph.vertex_count() {
            let q = Self::path_word(&f2, &paths[v]);
            for i in 0..self.vertex_groups[v].rank() {
                images.push(Word::gen(f2.offsets[v] + i).conjugate_by(&q));
            }
        }
        for &k in f1.stable.keys() {
            let e = 2 * k;
            // t1 = arrow(e)⁻¹ read as the loop P(τ(e)) · arrow(ē) · P(α(e))⁻¹.
            let loop_word = Self::path_word(&f2, &paths[self.graph.tau(e)])
                .mul(&Self::arrow(&f2, self.graph.inv(e)))
                .mul(&Self::path_word(&f2, &paths[self.graph.alpha(e)]).inverse());
            images.push(loop_word);
        }
        Ok((f1, f2, Morphism::new("subtree", images)))
    }

    /// Peripheral lattice `P` and its saturation `P̄` at an abelian vertex,
    /// spanned by the exponent vectors of incoming edge images.
    pub fn peripheral_subgroup(&self, v: usize) -> (Lattice, Lattice) {
        let n = self.vertex_groups[v].rank();
        let mut cols = Vec::new();
        for e in 0..self.graph.edge_count() {
            if self.graph.tau(e) == v {
                for w in &self.edge_maps[e] {
                    cols.push((0..n).map(|i| BigInt::from(w.exponent_sum(i))).collect::<Vec<_>>());
                }
            }
        }
        if cols.is_empty() {
            return (Lattice::zero(n), Lattice::zero(n));
        }
        let p = Lattice::span(&IntMatrix::from_cols(n, &cols));
        let sat = p.saturation();
        (p, sat)
    }
}

/// A generator `g` and value `w` with `r = 1 ⇔ g = w`, taken from either
/// end of `r`; the larger generator index wins.
fn eliminable(r: &Word) -> Option<(usize, Word)> {
    let l = r.letters();
    if l.len() < 2 {
        return None;
    }
    let mut best: Option<(usize, Word)> = None;
    let first = l[0];
    if !l[1..].iter().any(|x| x.abs() == first.abs()) {
        let rest = r.suffix_from(1).inverse();
        best = Some((first.unsigned_abs() as usize - 1, if first > 0 { rest } else { rest.inverse() }));
    }
    let last = l[l.len() - 1];
    if !l[..l.len() - 1].iter().any(|x| x.abs() == last.abs()) {
        let rest = r.prefix(l.len() - 1);
        let cand = (last.unsigned_abs() as usize - 1, if last < 0 { rest } else { rest.inverse() });
        if best.as_ref().map_or(true, |b| cand.0 > b.0) {
            best = Some(cand);
        }
    }
    best
}

/// Checks that `images` sends every relator of `src` to a word certified
/// trivial in `dst` by bounded relator rewriting.
pub fn certify_map(src: &Presentation, dst: &Presentation, images: &[Word], budget: usize) -> bool {
    src.relators.iter().all(|r| {
        let w = r.substitute(images);
        w.is_identity() || rewrite_search(&w, &dst.relators, budget).is_some()
    })
}

/// Checks that `there` and `back` are mutually inverse on generators of `src`.
pub fn certify_inverse(src: &Presentation, there: &[Word], back: &[Word], budget: usize) -> bool {
    (0..src.rank()).all(|i| {
        let w = Word::gen(i).substitute(there).substitute(back).mul(&Word::gen(i).inverse());
        w.is_identity() || rewrite_search(&w, &src.relators, budget).is_some()
    })
}

/// Vertex classes of a GAD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexClass {
    Surface,
    Abelian,
    Rigid,
}

/// Genus and boundary generators of a surface-type vertex. The vertex group is
/// `⟨x1..x2g, d1..dn | ∏[x_{2i-1}, x_{2i}] · (d1⋯dn)⁻¹⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceData {
    pub genus: usize,
    pub boundary: usize,
    /// Declared curve twists: images of the vertex generators.
    pub twists: Vec<Vec<Word>>,
}

/// A graph of groups with abelian edge groups and classified vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gad {
    pub gog: GraphOfGroups,
    pub classes: Vec<VertexClass>,
    pub surface_data: Vec<Option<SurfaceData>>,
}

/// One decomposition automorphism with its relator certificate status.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Automorphism {
    pub label: String,
    pub morphism: Morphism,
    /// Every relator image was certified trivial.
    pub certified: bool,
}

impl Gad {
    pub fn new(gog: GraphOfGroups, classes: Vec<VertexClass>, surface_data: Vec<Option<SurfaceData>>) -> Result<Self, GogError> {
        let g = Gad { gog, classes, surface_data };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<(), GogError> {
        let gr = &self.gog.graph;
        for v in 0..gr.vertex_count() {
            let bad = |d: &str| Err(GogError::BadVertex { vertex: gr.vertices[v].clone(), detail: d.into() });
            match self.classes[v] {
                VertexClass::Abelian => {
                    if self.gog.vertex_groups[v].rank() < 2 {
                        return bad("abelian vertex groups must be non-cyclic");
                    }
                }
                VertexClass::Surface => {
                    let Some(sd) = &self.surface_data[v] else { return bad("missing surface data") };
                    if sd.genus == 0 || sd.boundary == 0 {
                        return bad("surface vertices need genus and boundary");
                    }
                    let incoming: Vec<usize> = (0..gr.edge_count()).filter(|&e| gr.tau(e) == v).collect();
                    if incoming.len() != sd.boundary {
                        return bad("needs one incident edge per boundary component");
                    }
                    let mut hit = vec![false; sd.boundary];
                    for e in incoming {
                        let m = &self.gog.edge_maps[e];
                        let d = m.first().and_then(|w| match w.letters() {
                            [l] if *l > 0 && (*l as usize) > 2 * sd.genus => Some(*l as usize - 1 - 2 * sd.genus),
                            _ => None,
                        });
                        match (m.len(), d) {
                            (1, Some(k)) if !hit[k] => hit[k] = true,
                            _ => return bad("each edge must map onto a distinct boundary generator"),
                        }
                    }
                }
                VertexClass::Rigid => {}
            }
        }
        Ok(())
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.gog.graph.vertices.iter().position(|v| v == id)
    }

    /// Inner automorphisms, abelian transvections fixing `P̄`, edge twists and
    /// declared surface twists. `h_vertex` is the vertex containing `H`.
    pub fn modular_generators(&self, h_vertex: usize, budget: usize) -> Result<Vec<Automorphism>, GogError> {
        let tree = maximal_subtree(&self.gog.graph)?;
        let f = self.gog.fundamental_presentation(&tree)?;
        let pres = &f.presentation;
        let n = pres.rank();
        let ident: Vec<Word> = (0..n).map(Word::gen).collect();
        let mut out = Vec::new();
        let push = |label: String, images: Vec<Word>, out: &mut Vec<Automorphism>| {
            let certified = certify_map(pres, pres, &images, budget);
            out.push(Automorphism { label: label.clone(), morphism: Morphism::new(label, images), certified });
        };
        for (i, g) in pres.gens.iter().enumerate() {
            let x = Word::gen(i);
            push(format!("inner:{g}"), ident.iter().map(|w| w.conjugate_by(&x)).collect(), &mut out);
        }
        for v in 0..self.gog.graph.vertex_count() {
            if self.classes[v] != VertexClass::Abelian {
                continue;
            }
            let m = self.gog.vertex_groups[v].rank();
            let (_, sat) = self.gog.peripheral_subgroup(v);
            for (label, t) in transvections_fixing(&sat, m) {
                let mut images = ident.clone();
                for i in 0..m {
                    let mut w = Word::identity();
                    for j in 0..m {
                        w.mul_assign(&Word::gen(f.offsets[v] + j).pow(t[j][i]));
                    }
                    images[f.offsets[v] + i] = w;
                }
                push(format!("shear:{}:{label}", self.gog.graph.vertices[v]), images, &mut out);
            }
        }
        for k in 0..self.gog.graph.pair_count() {
            if self.gog.edge_ranks[k] != 1 {
                continue;
            }
            let e = 2 * k;
            let twist = if f.stable.contains_key(&k) {
                let g = f.globalize(self.gog.graph.tau(e ^ 1), &self.gog.edge_maps[e ^ 1][0]);
                dehn_twist_on(&self.gog, &f, k, &g, None)
            } else {
                // Twist the side away from H by the image on that side.
                let side = self.gog.graph.component_without(self.gog.graph.alpha(e), k);
                if side[self.gog.graph.tau(e)] {
                    continue;
                }
                let far = if side[h_vertex] { self.gog.graph.tau(e) } else { self.gog.graph.alpha(e) };
                let into = if far == self.gog.graph.tau(e) { e } else { e ^ 1 };
                let g = f.globalize(far, &self.gog.edge_maps[into][0]);
                dehn_twist_on(&self.gog, &f, k, &g, Some(far))
            };
            push(format!("twist:e{}", k + 1), twist, &mut out);
        }
        for v in 0..self.gog.graph.vertex_count() {
            if let Some(sd) = &self.surface_data[v] {
                for (i, tw) in sd.twists.iter().enumerate() {
                    let mut images = ident.clone();
                    for (j, w) in tw.iter().enumerate() {
                        images[f.offsets[v] + j] = f.globalize(v, w);
                    }
                    push(format!("curve:{}:{}", self.gog.graph.vertices[v], i + 1), images, &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Decides the word problem of `π₁` for a single rigid free vertex, or one
    /// edge joining a free rigid vertex (vertex 0) to an abelian, single-boundary
    /// surface, or free rigid vertex. Words are over the BFS-tree presentation.
    pub fn single_edge_word_problem(&self, w: &Word) -> Option<bool> {
        let g = &self.gog;
        let free_rigid = |v: usize| self.classes[v] == VertexClass::Rigid && g.vertex_groups[v].relators.is_empty();
        if g.graph.vertex_count() == 1 && g.graph.pair_count() == 0 {
            return match self.classes[0] {
                VertexClass::Rigid if free_rigid(0) => Some(w.is_identity()),
                VertexClass::Abelian => Some((0..g.vertex_groups[0].rank()).all(|i| w.exponent_sum(i) == 0)),
                _ => None,
            };
        }
        if g.graph.vertex_count() != 2 || g.graph.pair_count() != 1 || !free_rigid(0) {
            return None;
        }
        let f = g.fundamental_presentation(&maximal_subtree(&g.graph).ok()?).ok()?;
        let e_into_1 = if g.graph.tau(0) == 1 { 0 } else { 1 };
        let a_edge = f.globalize(0, &g.edge_maps[e_into_1 ^ 1][0]);
        let raw_b = f.globalize(1, &g.edge_maps[e_into_1][0]);
        let off = f.offsets[1];
        let rank_a = off;
        let (b_kind, subst): (VertexKind, Vec<Word>) = match self.classes[1] {
            VertexClass::Abelian => {
                let m = g.vertex_groups[1].rank();
                (VertexKind::Abelian { gens: (off..off + m).collect() }, (0..off + m).map(Word::gen).collect())
            }
            VertexClass::Rigid if free_rigid(1) => (VertexKind::Free, (0..f.presentation.rank()).map(Word::gen).collect()),
            VertexClass::Surface => {
                let sd = self.surface_data[1].as_ref()?;
                if sd.boundary != 1 {
                    return None;
                }
                let mut s: Vec<Word> = (0..off + 2 * sd.genus).map(Word::gen).collect();
                s.push(shift(&surface_word(0, sd.genus), off));
                (VertexKind::Free, s)
            }
            _ => return None,
        };
        if !w.fits(f.presentation.rank()) {
            return None;
        }
        let oracle = GenericEdge { a_kind: VertexKind::Free, b_kind: b_kind.clone(), a_edge: vec![a_edge], b_edge: vec![raw_b.substitute(&subst)] };
        let mut seq = Vec::new();
        for &l in w.letters() {
            let side = if (l.unsigned_abs() as usize) <= rank_a { Side::A } else { Side::B };
            let letter = Word::from_letters([l]);
            let word = if side == Side::B { letter.substitute(&subst) } else { letter };
            seq.push(Syllable::new(side, word));
        }
        let red = amalgam_reduce(&seq, &oracle)?;
        Some(match red.as_slice() {
            [] => true,
            [s] if s.side == Side::B => match &b_kind {
                VertexKind::Abelian { gens } => gens.iter().all(|&i| s.word.exponent_sum(i) == 0),
                VertexKind::Free => s.word.is_identity(),
            },
            [s] => s.word.is_identity(),
            _ => false,
        })
    }
}

/// Transvections `I + u·φᵀ` with `φ` killing `sat` and `φ(u) = 0`, as integer
/// matrices (column `i` is the image of basis vector `i`).
fn transvections_fixing(sat: &Lattice, m: usize) -> Vec<(String, Vec<Vec<i64>>)> {
    use num_traits::ToPrimitive;
    let annihilators: Vec<Vec<BigInt>> = if sat.rank() == 0 {
        (0..m).map(|i| (0..m).map(|j| BigInt::from((i == j) as i64)).collect()).collect()
    } else {
        let hf = hnf(&sat.basis().transpose());
        (hf.rank()..m).map(|j| hf.u.col(j)).collect()
    };
    let mut out = Vec::new();
    for (a, phi) in annihilators.iter().enumerate() {
        for i in 0..m {
            if !phi[i].is_zero() {
                continue;
            }
            let mut t = vec![vec![0i64; m]; m];
            for (r, row) in t.iter_mut().enumerate() {
                row[r] = 1;
                for (c, x) in row.iter_mut().enumerate() {
                    if r == i {
                        *x += phi[c].to_i64().unwrap_or(0);
                    }
                }
            }
            if phi.iter().any(|x| !x.is_zero()) && !(phi[i].is_one()) {
                out.push((format!("{}:{}", a + 1, i + 1), t));
            }
        }
    }
    out
}

/// Images of a Dehn twist along pair `k` by `g` (global word).
///
/// With `side = Some(v)` (tree edge) the component containing `v` after
/// cutting `k` is conjugated by `g` and stable letters become `g_τ·t·g_α⁻¹`.
/// With `side = None` (non-tree edge) the stable letter `t` becomes `t·g`.
fn dehn_twist_on(gog: &GraphOfGroups, f: &Fundamental, k: usize, g: &Word, side: Option<usize>) -> Vec<Word> {
    let n = f.presentation.rank();
    let mut images: Vec<Word> = (0..n).map(Word::gen).collect();
    match side {
        None => {
            let t = f.stable[&k];
            images[t] = Word::gen(t).mul(g);
        }
        Some(v) => {
            let comp = gog.graph.component_without(v, k);
            for (u, &inside) in comp.iter().enumerate() {
                if inside {
                    for i in 0..gog.vertex_groups[u].rank() {
                        images[f.offsets[u] + i] = Word::gen(f.offsets[u] + i).conjugate_by(g);
                    }
                }
            }
            for (&pair, &t) in &f.stable {
                let e = 2 * pair;
                let gt = if comp[gog.graph.tau(e)] { g.clone() } else { Word::identity() };
                let ga = if comp[gog.graph.alpha(e)] { g.clone() } else { Word::identity() };
                images[t] = gt.mul(&Word::gen(t)).mul(&ga.inverse());
            }
        }
    }
    images
}

/// Dehn twist of a one-edge splitting by `g`.
///
/// Amalgam: identity on the `alpha` side, conjugation by `g` on the `tau`
/// side. HNN: `t ↦ t·g`. `g` must centralize the edge image on the twisted
/// side; this is checked by free commutation or a relator certificate.
pub fn dehn_twist(gog: &GraphOfGroups, g: &Word, budget: usize) -> Result<Automorphism, GogError> {
    if gog.graph.pair_count() != 1 {
        return Err(GogError::BadEdge { edge: 0, detail: "expected a one-edge splitting".into() });
    }
    let tree = maximal_subtree(&gog.graph)?;
    let f = gog.fundamental_presentation(&tree)?;
    let pres = &f.presentation;
    let hnn = f.stable.contains_key(&0);
    let (edge_img, side) = if hnn {
        (f.globalize(gog.graph.tau(1), &gog.edge_maps[1][0]), None)
    } else {
        (f.globalize(gog.graph.tau(0), &gog.edge_maps[0][0]), Some(gog.graph.tau(0)))
    };
    let comm = Word::commutator(g, &edge_img);
    if !commutes(g, &edge_img) && rewrite_search(&comm, &pres.relators, budget).is_none() {
        return Err(GogError::NotCentralizing(pres.format_word(g)));
    }
    let images = dehn_twist_on(gog, &f, 0, g, side);
    let certified = certify_map(pres, pres, &images, budget);
    let label = format!("twist:{}", pres.format_word(g));
    Ok(Automorphism { label: label.clone(), morphism: Morphism::new(label, images), certified })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum VertexEntry {
    Rigid {
        id: String,
        gens: Vec<String>,
        #[serde(default)]
        relators: Vec<String>,
    },
    Abelian {
        id: String,
        gens: Vec<String>,
    },
    Surface {
        id: String,
        genus: usize,
        gens: Vec<String>,
        boundary: Vec<String>,
        #[serde(default)]
        twists: Vec<Vec<String>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeEntry {
    from: String,
    to: String,
    from_images: Vec<String>,
    to_images: Vec<String>,
}

/// A morphism from `π₁` to a free group, given by generator names.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct EtaEntry {
    pub target: Vec<String>,
    pub images: BTreeMap<String, String>,
}

/// JSON form of a GAD plus optional completion data.
#[derive(Debug, Serialize, Deserialize)]
pub struct GadFile {
    vertices: Vec<VertexEntry>,
    #[serde(default)]
    edges: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaEntry>,
    /// Edge indices (0-based, declaration order) in filtration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtration: Option<Vec<usize>>,
}

impl GadFile {
    pub fn from_json(s: &str) -> Result<Self, GogError> {
        serde_json::from_str(s).map_err(|e| GogError::Json(e.to_string()))
    }

    pub fn build(&self) -> Result<Gad, GogError> {
        let mut ids = Vec::new();
        let mut groups = Vec::new();
        let mut classes = Vec::new();
        let mut sdata = Vec::new();
        for v in &self.vertices {
            match v {
                VertexEntry::Rigid { id, gens, relators } => {
                    Basis::new(gens.clone())?;
                    let rels = relators.iter().map(|r| parse_word(r, gens)).collect::<Result<Vec<_>, _>>()?;
                    ids.push(id.clone());
                    groups.push(Presentation::new(gens.clone(), rels.into_iter().filter(|r| !r.is_identity()).collect()));
                    classes.push(VertexClass::Rigid);
                    sdata.push(None);
                }
                VertexEntry::Abelian { id, gens } => {
                    Basis::new(gens.clone())?;
                    let mut rels = Vec::new();
                    for i in 0..gens.len() {
                        for j in i + 1..gens.len() {
                            rels.push(Word::commutator(&Word::gen(i), &Word::gen(j)));
                        }
                    }
                    ids.push(id.clone());
                    groups.push(Presentation::new(gens.clone(), rels));
                    classes.push(VertexClass::Abelian);
                    sdata.push(None);
                }
                VertexEntry::Surface { id, genus, gens, boundary, twists } => {
                    if gens.len() != 2 * genus {
                        return Err(GogError::BadVertex { vertex: id.clone(), detail: "expected 2·genus surface generators".into() });
                    }
                    let all: Vec<String> = gens.iter().chain(boundary).cloned().collect();
                    Basis::new(all.clone())?;
                    let mut d = Word::identity();
                    for k in 0..boundary.len() {
                        d.mul_assign(&Word::gen(2 * genus + k));
                    }
                    let rel = surface_word(0, *genus).mul(&d.inverse());
                    let tw = twists
                        .iter()
                        .map(|t| {
                            if t.len() != all.len() {
                                return Err(GogError::BadVertex { vertex: id.clone(), detail: "twist needs one image per generator".into() });
                            }
                            t.iter().map(|s| parse_word(s, &all).map_err(GogError::from)).collect()
                        })
                        .collect::<Result<Vec<Vec<Word>>, _>>()?;
                    ids.push(id.clone());
                    groups.push(Presentation::new(all, vec![rel]));
                    classes.push(VertexClass::Surface);
                    sdata.push(Some(SurfaceData { genus: *genus, boundary: boundary.len(), twists: tw }));
                }
            }
        }
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut pairs = Vec::new();
        let mut ranks = Vec::new();
        let mut maps = Vec::new();
        for (k, e) in self.edges.iter().enumerate() {
            let a = *index.get(e.from.as_str()).ok_or_else(|| GogError::UnknownVertex(e.from.clone()))?;
            let b = *index.get(e.to.as_str()).ok_or_else(|| GogError::UnknownVertex(e.to.clone()))?;
            if e.from_images.len() != e.to_images.len() {
                return Err(GogError::BadEdge { edge: k, detail: "image counts differ".into() });
            }
            pairs.push((a, b));
            ranks.push(e.to_images.len());
            let parse_all = |v: usize, ws: &[String]| -> Result<Vec<Word>, GogError> {
                ws.iter().map(|s| parse_word(s, &groups[v].gens).map_err(|err| GogError::BadEdge { edge: k, detail: err.to_string() })).collect()
            };
            maps.push(parse_all(b, &e.to_images)?);
            maps.push(parse_all(a, &e.from_images)?);
        }
        let gog = GraphOfGroups::new(Graph::new(ids, &pairs), groups, ranks, maps)?;
        Gad::new(gog, classes, sdata)
    }
}
