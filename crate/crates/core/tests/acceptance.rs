//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Every check compares library output against goldens written by hand or
//! against an oracle implemented here, independently of the library code.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use freetower_core::construct::{
    check_injectivity, closure_extension, completion, symmetric_closure, tower_closure, twin_tower, Extension, TwinTower,
};
use freetower_core::dioph::{hnf, snf, ClosureEmbedding, IntMatrix, Lattice};
use freetower_core::gog::{maximal_subtree, GadFile};
use freetower_core::normal::word_verdict;
use freetower_core::normal::{MorphismCheck, Verdict, VerdictOptions};
use freetower_core::testseq::{
    gen_sequence_point, gen_smallcanc_family, swap_symmetry_check, verify_point, GrowthSchedule, OrderingWitness,
};
use freetower_core::tower::spec::SpecFile;
use freetower_core::word::{max_piece_ratio, random_cyclic_word, random_word, Letter};
use freetower_core::{GlueOptions, Tower, Word};
use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn spec(name: &str) -> SpecFile {
    SpecFile::from_json(&read(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn tower(name: &str) -> Tower {
    spec(name).build(&GlueOptions::default()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn twin(name: &str) -> TwinTower {
    let s = spec(name);
    let t = s.build(&GlueOptions::default()).unwrap();
    twin_tower(&t, &s.twin_names.clone().unwrap_or_default(), &GlueOptions::default()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

/// Word over named generators from a test-side letter list (`-` marks an inverse).
fn word_of(t: &Tower, letters: &[&str]) -> Word {
    let idx: Vec<Letter> = letters
        .iter()
        .map(|l| {
            let (name, sign) = l.strip_prefix('-').map_or((*l, 1), |n| (n, -1));
            let i = t.index_of(name).unwrap_or_else(|| panic!("no generator {name}"));
            sign * (i as Letter + 1)
        })
        .collect();
    Word::from_letters(idx)
}

// ---------------------------------------------------------------- criterion 1

fn abelian_flat_golden(n: usize, k: usize) -> String {
    let mut gens: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    gens.extend((1..=k).map(|i| format!("z{i}")));
    let square: Vec<String> = (1..=n).flat_map(|i| [format!("x{i}"), format!("x{i}")]).collect();
    let mut rels = vec![square.join("*")];
    for i in 1..=k {
        rels.push(format!("x1*z{i}*x1^-1*z{i}^-1"));
    }
    for i in 1..=k {
        for j in i + 1..=k {
            rels.push(format!("z{i}*z{j}*z{i}^-1*z{j}^-1"));
        }
    }
    format!("< {} | {} >", gens.join(" "), rels.join(", "))
}

fn abelian_flat_gad(n: usize, k: usize) -> String {
    let xs: Vec<String> = (1..=n).map(|i| format!("\"x{i}\"")).collect();
    let sq: Vec<String> = (1..=n).map(|i| format!("x{i}^2")).collect();
    let zs: Vec<String> = (1..=k).map(|i| format!("\"z{i}\"")).collect();
    format!(
        r#"{{"vertices": [{{"type": "rigid", "id": "S", "gens": [{}], "relators": ["{}"]}},
             {{"type": "abelian", "id": "A", "gens": ["c", {}]}}],
           "edges": [{{"from": "S", "to": "A", "from_images": ["x1"], "to_images": ["c"]}}]}}"#,
        xs.join(", "),
        sq.join("*"),
        zs.join(", ")
    )
}

fn gad_presentation(src: &str) -> String {
    let gad = GadFile::from_json(src).unwrap().build().unwrap();
    let tree = maximal_subtree(&gad.gog.graph).unwrap();
    gad.gog.reduced_presentation(&tree).unwrap().to_string()
}

const NONABELIAN_TWIN: &str = "< e1 e2 x1 x2 z1 z2 y1 y2 z1' z2' | \
x1*x2*x1^-1*x2^-1*e2*e1*e2^-1*e1^-1, \
z1*x1*x1*x1*x2*x2*x2*x2*z1^-1*x2^-1*x2^-1*x2^-1*x2^-1*x1^-1*x1^-1*x1^-1, \
z2*x1*x1*x1*x2*x2*x2*x2*z2^-1*x2^-1*x2^-1*x2^-1*x2^-1*x1^-1*x1^-1*x1^-1, \
z1*z2*z1^-1*z2^-1, \
y1*y2*y1^-1*y2^-1*e2*e1*e2^-1*e1^-1, \
z1'*y1*y1*y1*y2*y2*y2*y2*z1'^-1*y2^-1*y2^-1*y2^-1*y2^-1*y1^-1*y1^-1*y1^-1, \
z2'*y1*y1*y1*y2*y2*y2*y2*z2'^-1*y2^-1*y2^-1*y2^-1*y2^-1*y1^-1*y1^-1*y1^-1, \
z1'*z2'*z1'^-1*z2'^-1 >";

const ABELIAN_TWIN: &str = "< e1 e2 z1 z2 y1 y2 x1 x2 p1 p2 | \
z1*e1*e1*e2*e2*z1^-1*e2^-1*e2^-1*e1^-1*e1^-1, \
z2*e1*e1*e2*e2*z2^-1*e2^-1*e2^-1*e1^-1*e1^-1, \
y1*e1*e1*e2*e2*y1^-1*e2^-1*e2^-1*e1^-1*e1^-1, \
y2*e1*e1*e2*e2*y2^-1*e2^-1*e2^-1*e1^-1*e1^-1, \
z1*z2*z1^-1*z2^-1, z1*y1*z1^-1*y1^-1, z1*y2*z1^-1*y2^-1, z2*y1*z2^-1*y1^-1, z2*y2*z2^-1*y2^-1, y1*y2*y1^-1*y2^-1, \
x1*x2*x1^-1*x2^-1*e1*z1*e1^-1*z1^-1, \
p1*p2*p1^-1*p2^-1*e1*y1*e1^-1*y1^-1 >";

fn criterion_1() -> Outcome {
    let limit = Duration::from_secs(1);
    let start = Instant::now();
    let got = gad_presentation(&read("abelian_flat_gad.json"));
    ensure(got == abelian_flat_golden(3, 2), || format!("(a) fixture: {got}"))?;
    within(start, limit)?;
    for n in 1..=4 {
        for k in 1..=3 {
            let got = gad_presentation(&abelian_flat_gad(n, k));
            ensure(got == abelian_flat_golden(n, k), || format!("(a) n={n} k={k}: {got}"))?;
        }
    }

    let start = Instant::now();
    let tt = twin("nonabelian_twin.json");
    let got = tt.tower.presentation().to_string();
    ensure(got == NONABELIAN_TWIN, || format!("(b) {got}"))?;
    let kinds: Vec<String> = tt
        .tower
        .floors()
        .iter()
        .map(|f| {
            let fl = &f.flats[0];
            match (fl.surface(), fl.abelian()) {
                (Some(s), _) => format!("surface genus {} boundary {}", s.genus, s.boundary.len()),
                (_, Some(a)) => format!("abelian rank {} peg {}", a.rank, tt.tower.format(&a.peg)),
                _ => "free".into(),
            }
        })
        .collect();
    let want = [
        "surface genus 1 boundary 1",
        "abelian rank 2 peg x1*x1*x1*x2*x2*x2*x2",
        "surface genus 1 boundary 1",
        "abelian rank 2 peg y1*y1*y1*y2*y2*y2*y2",
    ];
    ensure(kinds == want, || format!("(b) floors {kinds:?}"))?;
    within(start, limit)?;

    let start = Instant::now();
    let tt = twin("abelian_twin.json");
    let got = tt.tower.presentation().to_string();
    ensure(got == ABELIAN_TWIN, || format!("(c) {got}"))?;
    ensure(tt.tower.gens().len() == 10, || "(c) generator count".into())?;
    within(start, limit)?;
    Ok("abelian flat n=1..4 k=1..3, four-floor twin, 10-generator twin".into())
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let s = spec("closure.json");
    let t = s.build(&GlueOptions::default()).unwrap();
    let emb: BTreeMap<String, ClosureEmbedding> =
        s.closures.as_ref().unwrap().iter().map(|c| (c.flat.clone(), c.embedding().unwrap())).collect();
    let c = tower_closure(&t, &emb, &GlueOptions::default()).map_err(|e| e.to_string())?;
    let flat = c.flats().next().unwrap();
    let rels = c.presentation().relators;
    let (e1, e2) = (Word::gen(0), Word::gen(1));
    let mut extends = Vec::new();
    for p in -9i64..=9 {
        // Witness scan: some a ↦ e1^y killing every relator, with z ↦ e1^p.
        let brute = (-30i64..=30).any(|y| {
            let h = [e1.clone(), e2.clone(), e1.pow(p), e1.pow(y)];
            rels.iter().all(|r| r.substitute(&h).is_identity())
        });
        let got = closure_extension(flat, &[e1.clone(), e2.clone()], &[e1.pow(p)]).map_err(|e| e.to_string())?;
        let says = matches!(got, Extension::Extends { .. });
        ensure(says == brute, || format!("p={p}: library {got}, witness scan {brute}"))?;
        ensure(says == (p.rem_euclid(3) == 2), || format!("p={p}: expected p ≡ 2 mod 3"))?;
        if let Extension::Extends { images, .. } = &got {
            let mut h = vec![e1.clone(), e2.clone()];
            h.extend(images.iter().cloned());
            ensure(rels.iter().all(|r| r.substitute(&h).is_identity()), || format!("p={p}: extension is not a morphism"))?;
        }
        if says {
            extends.push(p);
        }
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("extends for p in {extends:?}"))
}

// ---------------------------------------------------------------- criterion 3

fn det_i64(m: &[Vec<i64>]) -> i64 {
    match m.len() {
        0 => 1,
        1 => m[0][0],
        n => (0..n)
            .map(|j| {
                let minor: Vec<Vec<i64>> = m[1..].iter().map(|r| r.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &x)| x).collect()).collect();
                let s = if j % 2 == 0 { 1 } else { -1 };
                s * m[0][j] * det_i64(&minor)
            })
            .sum(),
    }
}

/// `v ∈ span(K)` for square nonsingular `K`, via `adj(K)·v ≡ 0 (mod det K)`.
fn in_span(k: &[Vec<i64>], v: &[i64]) -> bool {
    let n = k.len();
    let d = det_i64(k);
    (0..n).all(|i| {
        // Cramer: replace column i by v.
        let mut m = k.to_vec();
        for (r, row) in m.iter_mut().enumerate() {
            row[i] = v[r];
        }
        det_i64(&m) % d == 0
    })
}

fn random_nonsingular(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<i64>> {
    loop {
        let k: Vec<Vec<i64>> = (0..m).map(|_| (0..m).map(|_| rng.gen_range(-4..=4)).collect()).collect();
        if det_i64(&k) != 0 {
            return k;
        }
    }
}

fn box_points(m: usize, b: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out.into_iter().flat_map(|v: Vec<i64>| (-b..=b).map(move |x| [v.clone(), vec![x]].concat())).collect();
    }
    out
}

fn check_pair(tt: &TwinTower, f: &str, g: &str, kf: &[Vec<i64>], kg: &[Vec<i64>], pf: &[i64], pg: &[i64], bound: i64) -> Result<Lattice, String> {
    let mut emb = BTreeMap::new();
    emb.insert(f.to_string(), ClosureEmbedding::from_i64(pf, kf).unwrap());
    emb.insert(g.to_string(), ClosureEmbedding::from_i64(pg, kg).unwrap());
    let sc = symmetric_closure(tt, &emb, &GlueOptions::default()).map_err(|e| format!("{kf:?}/{kg:?}: {e}"))?;
    let pair = &sc.pairs[0];
    ensure(pair.u == pair.u_hat, || format!("{kf:?}/{kg:?}: U ≠ Û"))?;
    for v in box_points(kf.len(), bound) {
        let lib = pair.u.contains(&v.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>());
        let brute = in_span(kf, &v) && in_span(kg, &v);
        ensure(lib == brute, || format!("{kf:?}/{kg:?}: disagreement at {v:?}"))?;
    }
    Ok(pair.u.clone())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let rank1 = twin("symmetric.json");
    let (f1, g1) = ("2", rank1.twin_map["2"].as_str());
    let u = check_pair(&rank1, f1, g1, &[vec![2]], &[vec![3]], &[0], &[0], 40)?;
    ensure(u == Lattice::span(&IntMatrix::from_rows(&[[6]])), || format!("(2,3): U = {:?}", u.basis()))?;
    ensure(u.basis().clone() == IntMatrix::from_rows(&[[6]]), || "(2,3): Hermite basis is not [6]".into())?;

    let rank2 = twin("nonabelian_twin.json");
    let (f2, g2) = ("2", rank2.twin_map["2"].as_str());
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0003);
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(-12i64..=12), rng.gen_range(-12i64..=12));
        if a == 0 || b == 0 {
            continue;
        }
        let (pa, pb) = (rng.gen_range(-5..=5), rng.gen_range(-5..=5));
        check_pair(&rank1, f1, g1, &[vec![a]], &[vec![b]], &[pa], &[pb], 200)?;
    }
    for _ in 0..100 {
        let kf = random_nonsingular(&mut rng, 2);
        let kg = random_nonsingular(&mut rng, 2);
        let pf = [rng.gen_range(-3..=3), rng.gen_range(-3..=3)];
        let pg = [rng.gen_range(-3..=3), rng.gen_range(-3..=3)];
        check_pair(&rank2, f2, g2, &kf, &kg, &pf, &pg, 12)?;
    }
    within(start, Duration::from_secs(5))?;
    Ok("U = Û = 6ℤ for (2,3); 100 rank-1 and 100 rank-2 pairs match brute-force intersection".into())
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let vo = VerdictOptions::default();
    let mut notes = Vec::new();
    for (name, abelian) in [("complete_trivial.json", true), ("complete_abelian.json", true), ("complete_surface.json", false)] {
        let f = GadFile::from_json(&read(name)).unwrap();
        let gad = f.build().unwrap();
        let eta = f.eta.clone().unwrap();
        let res = completion(&gad, &eta.target, &eta.images, f.filtration.as_deref(), &GlueOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        // Relators of the source, pushed forward, must reduce to the identity in the completion.
        let check = res.check_relators(&vo);
        ensure(check == MorphismCheck::Exact(true), || format!("{name}: relator check {check:?}"))?;
        let rep = check_injectivity(&gad, &res, 4, &vo).ok_or_else(|| format!("{name}: no injectivity check"))?;
        ensure(rep.collisions == 0, || format!("{name}: {} collisions", rep.collisions))?;
        if abelian {
            ensure(rep.unknown == 0, || format!("{name}: {} unknown", rep.unknown))?;
        }
        notes.push(format!("{name}: {} words/{} classes/{} unknown", rep.words, rep.classes, rep.unknown));
    }
    within(start, Duration::from_secs(30))?;
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- criterion 5

/// All pairs of distinct positioned occurrences in the symmetrized closure;
/// a piece's ratio is taken against the shorter of the two relators.
fn brute_pieces(rels: &[Word]) -> Ratio<usize> {
    let mut occ: Vec<Vec<Letter>> = Vec::new();
    for r in rels {
        let c = cyclic_core(r.letters());
        if c.is_empty() {
            continue;
        }
        let inv: Vec<Letter> = c.iter().rev().map(|l| -l).collect();
        for w in [c, inv] {
            for s in 0..w.len() {
                occ.push(w[s..].iter().chain(&w[..s]).copied().collect());
            }
        }
    }
    let mut best = Ratio::from_integer(0);
    for (i, a) in occ.iter().enumerate() {
        for (j, b) in occ.iter().enumerate() {
            if i == j {
                continue;
            }
            let m = a.len().min(b.len());
            let h = a.iter().zip(b).take_while(|(x, y)| x == y).count().min(m);
            best = best.max(Ratio::new(h, m));
        }
    }
    best
}

fn cyclic_core(w: &[Letter]) -> Vec<Letter> {
    let mut v = w.to_vec();
    while v.len() >= 2 && v[0] == -v[v.len() - 1] {
        v.remove(0);
        v.pop();
    }
    v
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    for k in 1..=3 {
        for n in [2u64, 10, 20, 50] {
            let fam = gen_smallcanc_family(k, n, 2).map_err(|e| e.to_string())?;
            ensure(fam.len() == k && fam.iter().all(|w| w.is_cyclically_reduced()), || format!("k={k} n={n}: malformed family"))?;
            let r = max_piece_ratio(&fam);
            ensure(r < Ratio::new(1, n as usize), || format!("k={k} n={n}: ratio {r}"))?;
            if n == 2 {
                ensure(brute_pieces(&fam) == r, || format!("k={k} n=2: oracle {} vs {r}", brute_pieces(&fam)))?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0005);
    for _ in 0..500 {
        let rank = rng.gen_range(1..=3);
        let count = rng.gen_range(1..=3);
        let rels: Vec<Word> = (0..count)
            .map(|_| {
                let len = rng.gen_range(1..=10);
                if rng.gen_bool(0.7) {
                    random_cyclic_word(&mut rng, rank, len)
                } else {
                    random_word(&mut rng, rank, len)
                }
            })
            .collect();
        let (lib, brute) = (max_piece_ratio(&rels), brute_pieces(&rels));
        ensure(lib == brute, || format!("{rels:?}: checker {lib}, oracle {brute}"))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok("12 families below 1/n; 500 random sets agree with the piece oracle".into())
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let towers: Vec<(&str, Tower)> = vec![
        ("single_flat", tower("single_flat.json")),
        ("closure", tower("closure.json")),
        (
            "square-peg",
            SpecFile::from_json(r#"{"base_rank": 2, "floors": [{"type": "abelian", "peg": "e1^2*e2^2", "rank": 2}]}"#)
                .map_err(|e| e.to_string())?
                .build(&GlueOptions::default())
                .map_err(|e| e.to_string())?,
        ),
        (
            "free-then-abelian",
            SpecFile::from_json(r#"{"base_rank": 2, "floors": [{"type": "free", "rank": 1}, {"type": "abelian", "peg": "f1", "rank": 2}]}"#)
                .map_err(|e| e.to_string())?
                .build(&GlueOptions::default())
                .map_err(|e| e.to_string())?,
        ),
    ];
    let mut ratio50 = Vec::new();
    for (name, t) in &towers {
        let ow = OrderingWitness::natural(t);
        let sch = GrowthSchedule::default_for(t, &ow.order).map_err(|e| e.to_string())?;
        for n in [1u64, 5, 25, 50] {
            let pt = gen_sequence_point(t, &ow, &sch, n).map_err(|e| format!("{name} n={n}: {e}"))?;
            let rep = verify_point(t, &ow, &sch, &pt, None);
            ensure(rep.passed(), || format!("{name} n={n}:\n{rep}"))?;
            // Independent re-check of relators and the base.
            ensure((0..t.base_rank()).all(|i| pt.images[i] == Word::gen(i)), || format!("{name} n={n}: base moved"))?;
            ensure(t.presentation().relators.iter().all(|r| r.substitute(&pt.images).is_identity()), || format!("{name} n={n}: relator survives"))?;
            if n == 50 {
                if let Some(r) = sch.max_ratio(50) {
                    ensure(r < Ratio::new(1, 10), || format!("{name}: ratio {r} at n=50"))?;
                    ratio50.push(format!("{name} {r}"));
                }
            }
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("4 towers at n=1,5,25,50; ratios at 50: {}", ratio50.join(", ")))
}

// ---------------------------------------------------------------- criterion 7

/// Normal form in `ℤ² * ℤ`: after eliminating `z = a³e1²`, the closure group
/// is `⟨e1, a⟩ ≅ ℤ²` free-product `⟨e2⟩`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Syl {
    Ab(i64, i64),
    Free(i64),
}

fn closure_group_trivial(w: &Word, idx: &HashMap<&str, usize>) -> bool {
    let mut stack: Vec<Syl> = Vec::new();
    for &l in w.letters() {
        let s = l.signum() as i64;
        let g = l.unsigned_abs() as usize - 1;
        let syl = if g == idx["e1"] {
            Syl::Ab(s, 0)
        } else if g == idx["a1"] {
            Syl::Ab(0, s)
        } else if g == idx["z1"] {
            Syl::Ab(2 * s, 3 * s)
        } else if g == idx["e2"] {
            Syl::Free(s)
        } else {
            panic!("unexpected generator");
        };
        let merged = match (stack.last().copied(), syl) {
            (Some(Syl::Ab(a, b)), Syl::Ab(c, d)) => Some(Syl::Ab(a + c, b + d)),
            (Some(Syl::Free(a)), Syl::Free(b)) => Some(Syl::Free(a + b)),
            _ => None,
        };
        match merged {
            Some(m) => {
                stack.pop();
                if m != Syl::Ab(0, 0) && m != Syl::Free(0) {
                    stack.push(m);
                }
            }
            None => stack.push(syl),
        }
    }
    stack.is_empty()
}

fn reduced_words(rank: usize, max_len: usize) -> Vec<Word> {
    let mut out = vec![Vec::<Letter>::new()];
    let mut frontier = vec![Vec::<Letter>::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for g in 1..=rank as Letter {
                for l in [g, -g] {
                    if w.last() != Some(&-l) {
                        let mut v = w.clone();
                        v.push(l);
                        next.push(v);
                    }
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.into_iter().map(Word::from_letters).collect()
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let s = spec("closure.json");
    let t = s.build(&GlueOptions::default()).unwrap();
    let emb: BTreeMap<String, ClosureEmbedding> =
        s.closures.as_ref().unwrap().iter().map(|c| (c.flat.clone(), c.embedding().unwrap())).collect();
    let c = tower_closure(&t, &emb, &GlueOptions::default()).map_err(|e| e.to_string())?;
    let names = c.gens().to_vec();
    let idx: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let vo = VerdictOptions::default();
    let words = reduced_words(names.len(), 6);
    let (mut trivial, mut unknown) = (0usize, 0usize);
    for w in &words {
        let truth = closure_group_trivial(w, &idx);
        match word_verdict(&c, c.height(), w, &vo) {
            Verdict::Trivial(_) if truth => trivial += 1,
            Verdict::NonTrivial(_) if !truth => {}
            Verdict::Unknown => unknown += 1,
            v => return Err(format!("{}: verdict {v}, oracle trivial={truth}", c.format(w))),
        }
    }
    ensure(unknown == 0, || format!("{unknown} unknown verdicts"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("{} words, {trivial} trivial, 0 unknown", words.len()))
}

// ---------------------------------------------------------------- criterion 8

/// Random morphism of the non-abelian twin to `F(e1, e2)`, built here from
/// Nielsen moves that fix the commutator `[e1, e2]`.
fn twin_hom(t: &Tower, rng: &mut ChaCha8Rng) -> Vec<Word> {
    let (e1, e2) = (Word::gen(0), Word::gen(1));
    let mut surface = || {
        let (mut a, mut b) = (e1.clone(), e2.clone());
        for _ in 0..rng.gen_range(0..4) {
            match rng.gen_range(0..4) {
                0 => b = b.mul(&a),
                1 => b = b.mul(&a.inverse()),
                2 => a = a.mul(&b),
                _ => a = a.mul(&b.inverse()),
            }
        }
        (a, b)
    };
    let (x1, x2) = surface();
    let (y1, y2) = surface();
    let peg = |a: &Word, b: &Word| a.pow(3).mul(&b.pow(4));
    let (p, q) = (peg(&x1, &x2), peg(&y1, &y2));
    let mut h = vec![Word::identity(); t.gens().len()];
    let mut set = |n: &str, w: Word| h[t.index_of(n).unwrap()] = w;
    set("e1", e1.clone());
    set("e2", e2.clone());
    set("x1", x1);
    set("x2", x2);
    set("y1", y1);
    set("y2", y2);
    for z in ["z1", "z2"] {
        set(z, p.pow(rng.gen_range(-3..=3)));
    }
    for z in ["z1'", "z2'"] {
        set(z, q.pow(rng.gen_range(-3..=3)));
    }
    h
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let tt = twin("nonabelian_twin.json");
    let t = &tt.tower;
    let rels = t.presentation().relators;
    let vo = VerdictOptions::default();
    let budget = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0008);
    let homs: Vec<Vec<Word>> = (0..12).map(|_| twin_hom(t, &mut rng)).collect();
    for h in &homs {
        ensure(rels.iter().all(|r| r.substitute(h).is_identity()), || "test-side morphism is not a morphism".into())?;
    }
    for i in 0..50 {
        let w = random_word(&mut rng, 2, 1 + i % 12);
        let v = swap_symmetry_check(&tt, &w, &vo, budget);
        ensure(v.is_trivial(), || format!("coefficient word {}: {v}", t.format(&w)))?;
    }
    let check_witness = |w: &Word, v: &Verdict| -> Result<(), String> {
        let Verdict::NonTrivial(wit) = v else {
            return Err(format!("{}: {v}", t.format(w)));
        };
        let d = tt.swap_word(w).mul(&w.inverse());
        let h = &wit.morphism.images;
        ensure(h.len() == t.gens().len(), || format!("{}: witness has {} images", t.format(w), h.len()))?;
        ensure(rels.iter().all(|r| r.substitute(h).is_identity()), || format!("{}: witness is not a morphism", t.format(w)))?;
        ensure(!d.substitute(h).is_identity(), || format!("{}: witness does not separate", t.format(w)))
    };
    let x = word_of(t, &["x1", "y1"]);
    check_witness(&x, &swap_symmetry_check(&tt, &x, &vo, budget))?;
    let (mut mixed, mut tried) = (0, 0);
    while mixed < 20 {
        tried += 1;
        ensure(tried < 2000, || "could not sample 20 separated mixed words".into())?;
        let len = rng.gen_range(2..=6);
        let w = random_word(&mut rng, t.gens().len(), len);
        if w.letters().iter().all(|l| l.unsigned_abs() <= 2) {
            continue;
        }
        let d = tt.swap_word(&w).mul(&w.inverse());
        let separated = homs.iter().any(|h| !d.substitute(h).is_identity());
        let v = swap_symmetry_check(&tt, &w, &vo, budget);
        if separated {
            ensure(!v.is_trivial(), || format!("false Trivial on {}", t.format(&w)))?;
            check_witness(&w, &v)?;
            mixed += 1;
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("50 coefficient words trivial; x1·y1 and 20 mixed words separated ({tried} sampled)"))
}

// ---------------------------------------------------------------- criterion 9

fn to_i64(m: &IntMatrix) -> Vec<Vec<i64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| i64::try_from(&m[(i, j)]).expect("small entry")).collect()).collect()
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// gcd of all `k×k` minors.
fn determinantal_divisor(m: &[Vec<i64>], k: usize) -> i64 {
    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        if n < k {
            return vec![];
        }
        let mut out = subsets(n - 1, k);
        for mut s in subsets(n - 1, k - 1) {
            s.push(n - 1);
            out.push(s);
        }
        out
    }
    let mut g = 0;
    for rs in subsets(m.len(), k) {
        for cs in subsets(m[0].len(), k) {
            let sub: Vec<Vec<i64>> = rs.iter().map(|&r| cs.iter().map(|&c| m[r][c]).collect()).collect();
            g = gcd(g, det_i64(&sub));
        }
    }
    g
}

fn unimodular(m: &IntMatrix) -> bool {
    let d = det_i64(&to_i64(m));
    d == 1 || d == -1
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0009);
    for trial in 0..1000 {
        let (r, c) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let rows: Vec<Vec<i64>> = (0..r).map(|_| (0..c).map(|_| rng.gen_range(-5..=5)).collect()).collect();
        let m = IntMatrix::from_rows(&rows);
        let tag = || format!("trial {trial}: {rows:?}");

        let h = hnf(&m);
        ensure(m.mul(&h.u) == h.h, || format!("{}: H ≠ M·U", tag()))?;
        ensure(unimodular(&h.u), || format!("{}: U not unimodular", tag()))?;
        let hh = to_i64(&h.h);
        for (col, &(pr, pc)) in h.pivots.iter().enumerate() {
            ensure(pc == col && hh[pr][pc] > 0, || format!("{}: bad pivot", tag()))?;
            ensure((0..pr).all(|i| hh[i][pc] == 0), || format!("{}: not echelon", tag()))?;
            ensure((0..pc).all(|j| (0..hh[pr][pc]).contains(&hh[pr][j])), || format!("{}: not reduced", tag()))?;
        }
        ensure((h.rank()..c).all(|j| (0..r).all(|i| hh[i][j] == 0)), || format!("{}: nonzero tail column", tag()))?;

        let s = snf(&m);
        ensure(s.l.mul(&m).mul(&s.r) == s.s, || format!("{}: S ≠ L·M·R", tag()))?;
        ensure(unimodular(&s.l) && unimodular(&s.r), || format!("{}: transforms not unimodular", tag()))?;
        ensure(s.l.mul(&s.linv) == IntMatrix::identity(r), || format!("{}: L·L⁻¹ ≠ I", tag()))?;
        let ss = to_i64(&s.s);
        ensure((0..r).all(|i| (0..c).all(|j| i == j || ss[i][j] == 0)), || format!("{}: S not diagonal", tag()))?;
        let inv = s.invariants();
        ensure(inv.iter().all(|d| d.is_positive()), || format!("{}: negative invariant", tag()))?;
        ensure(inv.windows(2).all(|w| (&w[1] % &w[0]).is_zero()), || format!("{}: divisibility chain broken", tag()))?;
        ensure((inv.len()..r.min(c)).all(|i| ss[i][i] == 0), || format!("{}: zero inside the chain", tag()))?;
        let mut prod = BigInt::one();
        for k in 1..=r.min(c) {
            let dk = determinantal_divisor(&rows, k);
            if k <= inv.len() {
                prod *= &inv[k - 1];
                ensure(BigInt::from(dk) == prod, || format!("{}: d{k} = {dk}, product {prod}", tag()))?;
            } else {
                ensure(dk == 0, || format!("{}: rank mismatch", tag()))?;
            }
        }
        ensure(h.rank() == inv.len(), || format!("{}: Hermite and Smith ranks differ", tag()))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok("1000 matrices up to 4×4".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("fixture reproduction", criterion_1),
        ("closure extension", criterion_2),
        ("symmetric closure", criterion_3),
        ("completion embedding", criterion_4),
        ("small cancellation", criterion_5),
        ("test-sequence checks", criterion_6),
        ("word-problem exactness", criterion_7),
        ("swap symmetry", criterion_8),
        ("lattice algebra", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.2}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.2}s) {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
