//! JSON tower specs.
//!
//! Word literals inside a spec are parsed against every generator declared
//! before them, so a floor can refer to anything below it by name.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::{FlatKind, FlatSpec, GlueOptions, Tower, TowerError};
use crate::dioph::ClosureEmbedding;
use crate::word::{parse_word, Word};

/// One closure layer: `zᵢ ↦ c^{peg_col[i]} · ∏ⱼ aⱼ^{k[i][j]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub peg_col: Vec<i64>,
    pub k: Vec<Vec<i64>>,
}

/// A floor entry; `floor` groups several flats glued over the same level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FloorEntry {
    Abelian {
        peg: String,
        rank: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        names: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        layers: Vec<LayerEntry>,
    },
    Surface {
        genus: usize,
        boundary: Vec<String>,
        images: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        names: Option<Vec<String>>,
        /// Name of the extra letter when images live in `lower ∗ ⟨s⟩`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cyclic: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        twists: Option<Vec<Vec<String>>>,
    },
    Free {
        rank: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        names: Option<Vec<String>>,
    },
    Floor { flats: Vec<FloorEntry> },
}

/// Closure request attached to a flat id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureEntry {
    pub flat: String,
    pub peg_col: Vec<i64>,
    pub k: Vec<Vec<i64>>,
}

impl ClosureEntry {
    pub fn embedding(&self) -> Result<ClosureEmbedding, TowerError> {
        ClosureEmbedding::from_i64(&self.peg_col, &self.k).map_err(|e| TowerError::Spec(e.to_string()))
    }
}

/// A spec file: a tower plus optional inputs for later constructions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecFile {
    pub base_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_names: Option<Vec<String>>,
    #[serde(default)]
    pub floors: Vec<FloorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closures: Option<Vec<ClosureEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Vec<String>>,
    /// Generator renaming for the copy in twin constructions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twin_names: Option<BTreeMap<String, String>>,
}

impl SpecFile {
    pub fn from_json(s: &str) -> Result<Self, TowerError> {
        serde_json::from_str(s).map_err(|e| TowerError::Spec(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    /// Builds and validates the tower.
    pub fn build(&self, opts: &GlueOptions) -> Result<Tower, TowerError> {
        let mut t = match &self.base_names {
            Some(ns) => {
                if ns.len() != self.base_rank {
                    return Err(TowerError::Spec(format!("base_rank {} but {} base names", self.base_rank, ns.len())));
                }
                Tower::with_base_names(ns.clone())?
            }
            None => Tower::new(self.base_rank)?,
        };
        for (i, entry) in self.floors.iter().enumerate() {
            let flats = match entry {
                FloorEntry::Floor { flats } => {
                    if flats.iter().any(|f| matches!(f, FloorEntry::Floor { .. })) {
                        return Err(TowerError::Spec(format!("floor {}: nested floor entries", i + 1)));
                    }
                    flats.iter().collect()
                }
                single => vec![single],
            };
            let specs = flats.into_iter().map(|f| flat_spec(&t, f)).collect::<Result<Vec<_>, _>>()?;
            t = t.glue_floor(specs, opts)?;
        }
        Ok(t)
    }

    /// Canonical spec of a tower: every name explicit, twists only when not default.
    pub fn from_tower(t: &Tower) -> SpecFile {
        let names = t.gens();
        let fmt = |w: &Word| w.display(names).to_string();
        let mut floors = Vec::new();
        for floor in t.floors() {
            let mut entries = Vec::new();
            for f in &floor.flats {
                let own = names[f.gens.clone()].to_vec();
                entries.push(match &f.kind {
                    FlatKind::Free { rank } => FloorEntry::Free { rank: *rank, names: Some(own) },
                    FlatKind::Abelian(a) => FloorEntry::Abelian {
                        peg: fmt(&a.peg),
                        rank: a.rank,
                        names: Some(own),
                        layers: a
                            .layers
                            .iter()
                            .map(|l| LayerEntry {
                                peg_col: l.peg_col.iter().map(|x| x.to_i64().expect("small")).collect(),
                                k: (0..l.k.rows()).map(|r| (0..l.k.cols()).map(|c| l.k[(r, c)].to_i64().expect("small")).collect()).collect(),
                            })
                            .collect(),
                    },
                    FlatKind::Surface(s) => {
                        let cyclic = s.cyclic_letter.then(|| fresh_letter(names));
                        let image_names: Vec<String> = match &cyclic {
                            Some(c) => names[..f.lower_rank].iter().cloned().chain([c.clone()]).collect(),
                            None => names.to_vec(),
                        };
                        let count = f.gens.len();
                        let defaults = super::default_twists(f.gens.start, s.genus, count);
                        FloorEntry::Surface {
                            genus: s.genus,
                            boundary: s.boundary.iter().map(fmt).collect(),
                            images: s.images.iter().map(|w| w.display(&image_names).to_string()).collect(),
                            names: Some(own),
                            cyclic,
                            twists: (s.twists != defaults).then(|| s.twists.iter().map(|tw| tw.iter().map(fmt).collect()).collect()),
                        }
                    }
                });
            }
            floors.push(if entries.len() == 1 { entries.pop().unwrap() } else { FloorEntry::Floor { flats: entries } });
        }
        SpecFile {
            base_rank: t.base_rank(),
            base_names: Some(names[..t.base_rank()].to_vec()),
            floors,
            closures: None,
            schedule: None,
            ordering: None,
            twin_names: None,
        }
    }
}

fn fresh_letter(names: &[String]) -> String {
    let mut k = 0;
    loop {
        let n = if k == 0 { "s".to_string() } else { format!("s{k}") };
        if !names.contains(&n) {
            return n;
        }
        k += 1;
    }
}

fn parse_all(ws: &[String], names: &[String]) -> Result<Vec<Word>, TowerError> {
    ws.iter().map(|s| parse_word(s, names).map_err(TowerError::from)).collect()
}

fn flat_spec(t: &Tower, e: &FloorEntry) -> Result<FlatSpec, TowerError> {
    let names = t.gens();
    Ok(match e {
        FloorEntry::Abelian { peg, rank, names: ns, layers } => FlatSpec::Abelian {
            peg: parse_word(peg, names)?,
            rank: *rank,
            names: ns.clone(),
            layers: layers
                .iter()
                .map(|l| ClosureEmbedding::from_i64(&l.peg_col, &l.k).map_err(|e| TowerError::Spec(e.to_string())))
                .collect::<Result<_, _>>()?,
        },
        FloorEntry::Free { rank, names: ns } => FlatSpec::Free { rank: *rank, names: ns.clone() },
        FloorEntry::Surface { genus, boundary, images, names: ns, cyclic, twists } => {
            let boundary = parse_all(boundary, names)?;
            let mut image_names = names.to_vec();
            if let Some(c) = cyclic {
                image_names.push(c.clone());
            }
            let images = parse_all(images, &image_names)?;
            let twists = match twists {
                None => None,
                Some(ts) => {
                    let own = match ns {
                        Some(v) => v.clone(),
                        None => return Err(TowerError::Spec("surface twists need explicit generator names".into())),
                    };
                    let mut all = names.to_vec();
                    all.extend(own);
                    Some(ts.iter().map(|tw| parse_all(tw, &all)).collect::<Result<Vec<_>, _>>()?)
                }
            };
            FlatSpec::Surface { genus: *genus, boundary, images, names: ns.clone(), cyclic_letter: cyclic.is_some(), twists }
        }
        FloorEntry::Floor { .. } => return Err(TowerError::Spec("nested floor entry".into())),
    })
}
