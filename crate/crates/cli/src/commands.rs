//! Command implementations. Each returns the full stdout text so fixture
//! verification can compare it byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use freetower_core::construct::{
    check_injectivity, closure_extension, completion, symmetric_closure, tower_closure, twin_tower, CompletionError, TwinCase,
};
use freetower_core::gog::{maximal_subtree, Gad, GadFile, GogError, VertexClass};
use freetower_core::normal::MorphismCheck;
use freetower_core::testseq::{gen_sequence_point, gen_surface_point, limit_oracle, GrowthSchedule, OrderingWitness, TestSeqError};
use freetower_core::tower::spec::{ClosureEntry, SpecFile};
use freetower_core::tower::{FlatKind, Validation};
use freetower_core::word::{parse_word, primitive_root};
use freetower_core::{ClosureEmbedding, GlueOptions, Lattice, Tower, TowerError, VerdictOptions, Word};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validity failure: {0}")]
    Invalid(String),
    #[error("undecided: {0} (rerun with --assume-valid to accept)")]
    Unknown(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Unknown(_) => 4,
        }
    }
}

impl From<TowerError> for CliError {
    fn from(e: TowerError) -> Self {
        match e {
            TowerError::Word(_) | TowerError::Spec(_) => CliError::Parse(e.to_string()),
            TowerError::Unknown { .. } => CliError::Unknown(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<GogError> for CliError {
    fn from(e: GogError) -> Self {
        match e {
            GogError::Json(_) | GogError::Word(_) => CliError::Parse(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CompletionError> for CliError {
    fn from(e: CompletionError) -> Self {
        match e {
            CompletionError::Tower(t) => t.into(),
            CompletionError::Gog(g) => g.into(),
            CompletionError::Word(w) => CliError::Parse(w.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<TestSeqError> for CliError {
    fn from(e: TestSeqError) -> Self {
        match e {
            TestSeqError::Tower(t) => t.into(),
            TestSeqError::Schedule(_) => CliError::Parse(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Flags shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub level: Option<usize>,
    pub n: Option<u64>,
    pub seed: u64,
    pub budget: Option<u64>,
    pub p: Option<String>,
    pub word: Option<String>,
    pub embeddings: Option<PathBuf>,
    pub assume_valid: bool,
}

impl Flags {
    fn glue(&self) -> GlueOptions {
        let validation = if self.assume_valid { Validation::AssumeValid } else { Validation::Strict };
        GlueOptions { validation, seed: self.seed, ..Default::default() }
    }
}

pub enum Input {
    Tower(SpecFile),
    Gad(GadFile),
}

pub fn read_input(path: &Path) -> Result<Input, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    parse_input(&text)
}

pub fn parse_input(text: &str) -> Result<Input, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    if value.get("vertices").is_some() {
        Ok(Input::Gad(GadFile::from_json(text)?))
    } else {
        Ok(Input::Tower(SpecFile::from_json(text)?))
    }
}

fn tower_input(input: &Input) -> Result<&SpecFile, CliError> {
    match input {
        Input::Tower(s) => Ok(s),
        Input::Gad(_) => Err(CliError::Parse("expected a tower spec, found a GAD".into())),
    }
}

fn gad_input(input: &Input) -> Result<&GadFile, CliError> {
    match input {
        Input::Gad(g) => Ok(g),
        Input::Tower(_) => Err(CliError::Parse("expected a GAD, found a tower spec".into())),
    }
}

fn assumption_lines(t: &Tower, out: &mut String) {
    for a in t.assumptions() {
        out.push_str(&format!("warning: assumed {a}\n"));
    }
}

fn lattice_text(l: &Lattice) -> String {
    let b = l.basis();
    if b.rows() == 1 && b.cols() == 1 {
        return format!("{}ℤ", b[(0, 0)]);
    }
    let cols: Vec<String> = b.columns().iter().map(|c| format!("({})", c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))).collect();
    format!("span[{}]", cols.join(" "))
}

fn build_tower(spec: &SpecFile, flags: &Flags) -> Result<Tower, CliError> {
    Ok(spec.build(&flags.glue())?)
}

fn build_gad(file: &GadFile) -> Result<Gad, CliError> {
    Ok(file.build()?)
}

/// Tower or GAD summary.
pub fn cmd_build(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let mut out = String::new();
    match input {
        Input::Tower(spec) => {
            let t = build_tower(spec, flags)?;
            let names = t.gens();
            out.push_str(&format!("tower: height {}, base {}\n", t.height(), names[..t.base_rank()].join(" ")));
            for (i, floor) in t.floors().iter().enumerate() {
                for f in &floor.flats {
                    let own = names[f.gens.clone()].join(" ");
                    let what = match &f.kind {
                        FlatKind::Abelian(a) => format!(
                            "abelian rank {} peg {}{}",
                            a.rank,
                            t.format(&a.peg),
                            if a.layers.is_empty() { String::new() } else { format!(" closure layers {}", a.layers.len()) }
                        ),
                        FlatKind::Surface(s) => format!(
                            "surface genus {} boundary {}",
                            s.genus,
                            s.boundary.iter().map(|b| t.format(b)).collect::<Vec<_>>().join(", ")
                        ),
                        FlatKind::Free { rank } => format!("free rank {rank}"),
                    };
                    out.push_str(&format!("floor {}: flat {} ({own}) {what}\n", i + 1, f.id));
                }
            }
            assumption_lines(&t, &mut out);
        }
        Input::Gad(file) => {
            let gad = build_gad(file)?;
            let g = &gad.gog.graph;
            out.push_str(&format!("gad: {} vertices, {} edges\n", g.vertex_count(), g.pair_count()));
            for (v, id) in g.vertices.iter().enumerate() {
                let class = match gad.classes[v] {
                    VertexClass::Rigid => "rigid",
                    VertexClass::Abelian => "abelian",
                    VertexClass::Surface => "surface",
                };
                out.push_str(&format!("vertex {id}: {class} ({})\n", gad.gog.vertex_groups[v].gens.join(" ")));
            }
            for k in 0..g.pair_count() {
                out.push_str(&format!("edge {k}: {} -> {}\n", g.vertices[g.alpha(2 * k)], g.vertices[g.tau(2 * k)]));
            }
        }
    }
    Ok(out)
}

/// Canonical presentation of a tower level, or the reduced presentation of
/// a GAD's fundamental group.
pub fn cmd_present(input: &Input, flags: &Flags) -> Result<String, CliError> {
    match input {
        Input::Tower(spec) => {
            let t = build_tower(spec, flags)?;
            let level = flags.level.unwrap_or(t.height());
            let mut out = format!("{}\n", t.presentation_at(level)?);
            assumption_lines(&t, &mut out);
            Ok(out)
        }
        Input::Gad(file) => {
            let gad = build_gad(file)?;
            let tree = maximal_subtree(&gad.gog.graph)?;
            Ok(format!("{}\n", gad.gog.reduced_presentation(&tree)?))
        }
    }
}

pub fn cmd_twin(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let spec = tower_input(input)?;
    let t = build_tower(spec, flags)?;
    let names = spec.twin_names.clone().unwrap_or_default();
    let tt = twin_tower(&t, &names, &flags.glue())?;
    let mut out = format!("{}\n", tt.tower.presentation());
    let case = match tt.case {
        TwinCase::Trivial => "trivial",
        TwinCase::NonAbelian => "non-abelian",
        TwinCase::Abelian => "abelian",
    };
    out.push_str(&format!("case: {case}\n"));
    for (a, b) in &tt.twin_map {
        if a <= b {
            out.push_str(&format!("twin: flat {a} <-> flat {b}\n"));
        }
    }
    let (first, second) = tt.orderings();
    out.push_str(&format!("ordering: {}\n", first.join(" ")));
    out.push_str(&format!("ordering: {}\n", second.join(" ")));
    assumption_lines(&tt.tower, &mut out);
    Ok(out)
}

fn embeddings(spec: &SpecFile, flags: &Flags) -> Result<BTreeMap<String, ClosureEmbedding>, CliError> {
    let entries: Vec<ClosureEntry> = match &flags.embeddings {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?
        }
        None => spec.closures.clone().ok_or_else(|| CliError::Parse("no closures in the input and no --embeddings".into()))?,
    };
    let mut out = BTreeMap::new();
    for e in entries {
        let emb = e.embedding()?;
        if out.insert(e.flat.clone(), emb).is_some() {
            return Err(CliError::Parse(format!("flat {} has two embeddings", e.flat)));
        }
    }
    Ok(out)
}

fn remap_table(before: &Tower, after: &Tower, out: &mut String) {
    for f in after.flats() {
        let old = before.flat(&f.id).map(|g| g.gens.len()).unwrap_or(0);
        let names = &after.gens()[f.gens.clone()];
        if names.len() > old {
            out.push_str(&format!("flat {}: {} + {}\n", f.id, names[..old].join(" "), names[old..].join(" ")));
        }
    }
}

pub fn cmd_closure(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let spec = tower_input(input)?;
    let t = build_tower(spec, flags)?;
    let emb = embeddings(spec, flags)?;
    let c = tower_closure(&t, &emb, &flags.glue())?;
    let mut out = format!("{}\n", c.presentation());
    remap_table(&t, &c, &mut out);
    assumption_lines(&c, &mut out);
    Ok(out)
}

/// Symmetric closure of the twin tower; embeddings name twin-tower flats.
pub fn cmd_symmetrize(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let spec = tower_input(input)?;
    let t = build_tower(spec, flags)?;
    let tt = twin_tower(&t, &spec.twin_names.clone().unwrap_or_default(), &flags.glue())?;
    let emb = embeddings(spec, flags)?;
    let sc = symmetric_closure(&tt, &emb, &flags.glue())?;
    let mut out = format!("{}\n", sc.tower.presentation());
    for p in &sc.pairs {
        out.push_str(&format!("flats {}/{}: U = {}, Û = {}\n", p.flat, p.twin, lattice_text(&p.u), lattice_text(&p.u_hat)));
    }
    assumption_lines(&sc.tower, &mut out);
    Ok(out)
}

pub fn cmd_complete(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let file = gad_input(input)?;
    let gad = build_gad(file)?;
    let eta = file.eta.as_ref().ok_or_else(|| CliError::Parse("a completion needs an `eta` section".into()))?;
    let res = completion(&gad, &eta.target, &eta.images, file.filtration.as_deref(), &flags.glue())?;
    let vo = VerdictOptions { seed: flags.seed, ..Default::default() };
    let mut out = format!("{}\n", res.comp.presentation());
    let steps: Vec<String> = res.steps.iter().map(|s| format!("{}(edge {})", s.case, s.edge)).collect();
    out.push_str(&format!("steps: {}\n", if steps.is_empty() { "none".into() } else { steps.join(" ") }));
    for (name, w) in res.source.gens.iter().zip(&res.embedding.images) {
        out.push_str(&format!("{name} = {}\n", res.comp.format(w)));
    }
    match res.check_relators(&vo) {
        MorphismCheck::Exact(true) => out.push_str("relators: all trivial\n"),
        MorphismCheck::Exact(false) => return Err(CliError::Invalid("the embedding does not kill every relator".into())),
        other => {
            if !flags.assume_valid {
                return Err(CliError::Unknown(format!("relator check: {other:?}")));
            }
            out.push_str(&format!("warning: relator check undecided ({other:?})\n"));
        }
    }
    if let Some(radius) = flags.level {
        match check_injectivity(&gad, &res, radius, &vo) {
            Some(r) => out.push_str(&format!(
                "injectivity radius {radius}: {} words, {} classes, {} separated by verdict, {} unknown, {} collisions\n",
                r.words, r.classes, r.separated_by_verdict, r.unknown, r.collisions
            )),
            None => out.push_str("injectivity: no word problem for this GAD\n"),
        }
    }
    assumption_lines(&res.comp, &mut out);
    Ok(out)
}

pub fn cmd_testseq(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let spec = tower_input(input)?;
    let t = build_tower(spec, flags)?;
    let order = spec.ordering.clone().unwrap_or_else(|| t.natural_ordering());
    let ordering = OrderingWitness::new(&t, order)?;
    let n = flags.n.unwrap_or(1);
    let point = if t.flats().any(|f| f.surface().is_some()) {
        gen_surface_point(&t, &ordering, n, flags.seed)?
    } else {
        let schedule = match &spec.schedule {
            Some(s) => s.parse::<GrowthSchedule>()?,
            None => GrowthSchedule::default_for(&t, &ordering.order)?,
        };
        gen_sequence_point(&t, &ordering, &schedule, n)?
    };
    let mut out = format!("# n={} {}\n", n, if point.heuristic { "heuristic" } else { "exact" });
    for (name, w) in t.gens().iter().zip(&point.images) {
        out.push_str(&format!("{name} = {}\n", t.format(w)));
    }
    Ok(out)
}

/// Extension of `h = id` on the level below the first closed abelian flat,
/// with `z_i ↦ γ^{p_i}` for the root `γ` of the peg image.
pub fn cmd_extend(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let spec = tower_input(input)?;
    let mut t = build_tower(spec, flags)?;
    if let Some(cl) = &spec.closures {
        let emb = embeddings(spec, &Flags { embeddings: None, ..flags.clone() })?;
        if !cl.is_empty() {
            t = tower_closure(&t, &emb, &flags.glue())?;
        }
    }
    let flat = t
        .flats()
        .find(|f| f.abelian().is_some_and(|a| !a.layers.is_empty()))
        .ok_or_else(|| CliError::Invalid("no closed abelian flat".into()))?;
    let p: Vec<i64> = flags
        .p
        .as_deref()
        .ok_or_else(|| CliError::Parse("--p is required".into()))?
        .split(',')
        .map(|s| s.trim().parse::<i64>().map_err(|_| CliError::Parse(format!("bad exponent `{s}`"))))
        .collect::<Result<_, _>>()?;
    let a = flat.abelian().expect("abelian");
    if p.len() != a.rank {
        return Err(CliError::Parse(format!("--p has {} entries but the flat has rank {}", p.len(), a.rank)));
    }
    let lower = t.composite_retraction(t.level_of(&flat.id).expect("flat") - 1).images;
    let hp = a.peg.substitute(&lower);
    let (gamma, _) = primitive_root(&hp).map_err(|e| CliError::Invalid(e.to_string()))?;
    let z: Vec<Word> = p.iter().map(|&e| gamma.pow(e)).collect();
    Ok(format!("{}\n", closure_extension(flat, &lower, &z)?))
}

pub fn cmd_oracle(input: &Input, flags: &Flags) -> Result<String, CliError> {
    let spec = tower_input(input)?;
    let t = build_tower(spec, flags)?;
    let ws = flags.word.as_deref().ok_or_else(|| CliError::Parse("--word is required".into()))?;
    let w = parse_word(ws, t.gens()).map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(format!("{}\n", limit_oracle(&t, &w, flags.budget.unwrap_or(20))))
}

/// One entry of `suite.json` in the fixture directory.
#[derive(Debug, Deserialize)]
pub struct FixtureCase {
    pub name: String,
    pub command: String,
    pub input: String,
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub p: Option<String>,
    #[serde(default)]
    pub word: Option<String>,
    #[serde(default)]
    pub embeddings: Option<String>,
    pub expect: String,
}

pub fn run(command: &str, input: &Input, flags: &Flags) -> Result<String, CliError> {
    match command {
        "build" => cmd_build(input, flags),
        "present" => cmd_present(input, flags),
        "twin" => cmd_twin(input, flags),
        "closure" => cmd_closure(input, flags),
        "symmetrize" => cmd_symmetrize(input, flags),
        "complete" => cmd_complete(input, flags),
        "testseq" => cmd_testseq(input, flags),
        "extend" => cmd_extend(input, flags),
        "oracle" => cmd_oracle(input, flags),
        other => Err(CliError::Parse(format!("unknown command `{other}`"))),
    }
}

/// Runs every case of `dir/suite.json`; returns the report and whether
/// every case passed.
pub fn cmd_verify_fixtures(dir: &Path) -> Result<(String, bool), CliError> {
    let suite = dir.join("suite.json");
    let text = std::fs::read_to_string(&suite).map_err(|e| CliError::Parse(format!("{}: {e}", suite.display())))?;
    let cases: Vec<FixtureCase> = serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", suite.display())))?;
    let mut out = String::new();
    let mut passed = 0;
    for case in &cases {
        let flags = Flags {
            level: case.level,
            n: case.n,
            p: case.p.clone(),
            word: case.word.clone(),
            embeddings: case.embeddings.as_ref().map(|e| dir.join(e)),
            ..Default::default()
        };
        let result = read_input(&dir.join(&case.input)).and_then(|input| run(&case.command, &input, &flags));
        let ok = matches!(&result, Ok(s) if *s == case.expect);
        if ok {
            passed += 1;
            out.push_str(&format!("PASS {}\n", case.name));
        } else {
            let got = match result {
                Ok(s) => s,
                Err(e) => format!("error: {e}\n"),
            };
            out.push_str(&format!("FAIL {}\n  expected: {:?}\n  got:      {:?}\n", case.name, case.expect, got));
        }
    }
    out.push_str(&format!("{passed}/{} fixtures passed\n", cases.len()));
    Ok((out, passed == cases.len()))
}
