//! Impulse-response datasets: the listener-position grid, the IR tensor and
//! its on-disk form (a JSON manifest plus one raw little-endian `f64` file
//! per position).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterdesign::{ControlFilterSet, DesignParams, FilterDictionary, FilterTag, Method};
use crate::signal::{read_f64_le, write_f64_le};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DICTIONARY_FILE: &str = "dictionary.json";

/// Dense index of a listener position within one grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionId(pub usize);

impl PositionId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The three microphone families of a sound zone scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MicGroup {
    Bright,
    Dark,
    Observation,
}

impl MicGroup {
    /// On-disk group order.
    pub const ALL: [MicGroup; 3] = [MicGroup::Bright, MicGroup::Dark, MicGroup::Observation];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicCounts {
    pub bright: usize,
    pub dark: usize,
    pub observation: usize,
}

impl MicCounts {
    pub fn get(&self, group: MicGroup) -> usize {
        match group {
            MicGroup::Bright => self.bright,
            MicGroup::Dark => self.dark,
            MicGroup::Observation => self.observation,
        }
    }

    pub fn total(&self) -> usize {
        self.bright + self.dark + self.observation
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub id: PositionId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Id in the grid this point was subset from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_id: Option<PositionId>,
}

impl GridPoint {
    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub sample_rate_hz: u32,
    #[serde(rename = "ir_length_K")]
    pub ir_length: usize,
    pub num_loudspeakers: usize,
    pub mics: MicCounts,
    pub grid: Vec<GridPoint>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(self.schema_version));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        if self.ir_length == 0 {
            return Err(Error::invalid("ir_length_K must be at least 1"));
        }
        if self.num_loudspeakers == 0 {
            return Err(Error::invalid("num_loudspeakers must be at least 1"));
        }
        let m = self.mics;
        if m.bright == 0 || m.dark == 0 || m.observation == 0 {
            return Err(Error::invalid("every microphone group needs at least one mic"));
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("grid has no positions"));
        }
        let mut seen = HashSet::new();
        for (i, p) in self.grid.iter().enumerate() {
            if p.id.0 != i {
                return Err(Error::invalid(format!(
                    "grid ids must be dense: entry {i} has id {}",
                    p.id.0
                )));
            }
            if !p.coords().iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("position {i} has non-finite coordinates")));
            }
            if !seen.insert(p.coords().map(f64::to_bits)) {
                return Err(Error::invalid(format!("position {i} duplicates an earlier point")));
            }
        }
        Ok(())
    }

    pub fn num_positions(&self) -> usize {
        self.grid.len()
    }

    /// Number of samples stored per position.
    pub fn position_len(&self) -> usize {
        self.mics.total() * self.num_loudspeakers * self.ir_length
    }
}

/// Impulse responses for every (position, group, mic, loudspeaker).
///
/// Immutable once built; the flat buffer uses the on-disk order
/// `[position][group][mic][loudspeaker][sample]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IrSet {
    manifest: Manifest,
    data: Vec<f64>,
}

impl IrSet {
    pub fn new(manifest: Manifest, data: Vec<f64>) -> Result<Self> {
        manifest.validate()?;
        let expected = manifest.num_positions() * manifest.position_len();
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "IR data has {} samples, manifest implies {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite IR sample at flat index {i}")));
        }
        Ok(IrSet { manifest, data })
    }

    /// Builds a set by asking `f` for every IR. `f` must return exactly K samples.
    pub fn from_fn<F>(manifest: Manifest, mut f: F) -> Result<Self>
    where
        F: FnMut(PositionId, MicGroup, usize, usize) -> Result<Vec<f64>>,
    {
        manifest.validate()?;
        let k = manifest.ir_length;
        let mut data = Vec::with_capacity(manifest.num_positions() * manifest.position_len());
        for s in 0..manifest.num_positions() {
            for group in MicGroup::ALL {
                for m in 0..manifest.mics.get(group) {
                    for l in 0..manifest.num_loudspeakers {
                        let h = f(PositionId(s), group, m, l)?;
                        if h.len() != k {
                            return Err(Error::invalid(format!(
                                "IR has {} samples, expected {k}",
                                h.len()
                            )));
                        }
                        data.extend_from_slice(&h);
                    }
                }
            }
        }
        IrSet::new(manifest, data)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn num_positions(&self) -> usize {
        self.manifest.num_positions()
    }

    pub fn ir_length(&self) -> usize {
        self.manifest.ir_length
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.manifest.num_loudspeakers
    }

    pub fn mic_count(&self, group: MicGroup) -> usize {
        self.manifest.mics.get(group)
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.manifest.sample_rate_hz
    }

    pub fn positions(&self) -> impl Iterator<Item = PositionId> {
        (0..self.num_positions()).map(PositionId)
    }

    pub fn check_position(&self, pos: PositionId) -> Result<()> {
        if pos.0 < self.num_positions() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "position {} out of range (S = {})",
                pos.0,
                self.num_positions()
            )))
        }
    }

    /// Id of `pos` in the root grid this set descends from.
    pub fn original_id(&self, pos: PositionId) -> PositionId {
        let p = &self.manifest.grid[pos.0];
        p.original_id.unwrap_or(p.id)
    }

    pub fn original_ids(&self) -> Vec<PositionId> {
        self.positions().map(|p| self.original_id(p)).collect()
    }

    fn group_offset(&self, group: MicGroup) -> usize {
        let m = self.manifest.mics;
        let per_mic = self.num_loudspeakers() * self.ir_length();
        match group {
            MicGroup::Bright => 0,
            MicGroup::Dark => m.bright * per_mic,
            MicGroup::Observation => (m.bright + m.dark) * per_mic,
        }
    }

    /// IR from loudspeaker `ls` to microphone `mic` of `group` at `pos`.
    pub fn ir(&self, pos: PositionId, group: MicGroup, mic: usize, ls: usize) -> &[f64] {
        assert!(mic < self.mic_count(group) && ls < self.num_loudspeakers());
        let k = self.ir_length();
        let start = pos.0 * self.manifest.position_len()
            + self.group_offset(group)
            + (mic * self.num_loudspeakers() + ls) * k;
        &self.data[start..start + k]
    }

    /// All IRs of one position in file order.
    pub fn position_block(&self, pos: PositionId) -> &[f64] {
        let n = self.manifest.position_len();
        &self.data[pos.0 * n..(pos.0 + 1) * n]
    }

    /// Keeps only `keep`, re-indexed densely in the given order.
    pub fn subset_positions(&self, keep: &[PositionId]) -> Result<IrSet> {
        if keep.is_empty() {
            return Err(Error::invalid("subset must keep at least one position"));
        }
        let mut seen = HashSet::new();
        for &p in keep {
            self.check_position(p)?;
            if !seen.insert(p) {
                return Err(Error::invalid(format!("position {} listed twice", p.0)));
            }
        }
        let mut manifest = self.manifest.clone();
        manifest.grid = keep
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let src = &self.manifest.grid[p.0];
                GridPoint {
                    id: PositionId(i),
                    original_id: Some(self.original_id(p)),
                    ..src.clone()
                }
            })
            .collect();
        let mut data = Vec::with_capacity(keep.len() * self.manifest.position_len());
        for &p in keep {
            data.extend_from_slice(self.position_block(p));
        }
        Ok(IrSet { manifest, data })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn position_file(dir: &Path, pos: usize) -> std::path::PathBuf {
    dir.join(format!("pos_{pos}.f64"))
}

/// Reads a raw file and checks its length before decoding.
fn read_exact_f64(path: &Path, expected_samples: usize) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let found = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let expected = expected_samples as u64 * 8;
    if found != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    read_f64_le(path)
}

pub fn save_irset(set: &IrSet, dir: &Path) -> Result<()> {
    // Re-check before touching the filesystem so a bad set writes nothing.
    set.manifest.validate()?;
    if let Some(i) = set.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite IR sample at flat index {i}")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(MANIFEST_FILE), &set.manifest)?;
    for pos in set.positions() {
        write_f64_le(&position_file(dir, pos.0), set.position_block(pos))?;
    }
    Ok(())
}

pub fn load_irset(dir: &Path) -> Result<IrSet> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    manifest.validate()?;
    let per_pos = manifest.position_len();
    let mut data = Vec::with_capacity(per_pos * manifest.num_positions());
    for s in 0..manifest.num_positions() {
        data.extend(read_exact_f64(&position_file(dir, s), per_pos)?);
    }
    IrSet::new(manifest, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct DictionaryManifest {
    schema_version: u32,
    method: Method,
    params: DesignParams,
    num_loudspeakers: usize,
    /// Original grid id of each entry, in file order.
    positions: Vec<PositionId>,
    has_mix: bool,
}

const FILTERS_FILE: &str = "filters.f64";
const MIX_FILE: &str = "mix.f64";

/// Writes a filter dictionary (and optionally its Mix Data filter) as
/// `dictionary.json` + `filters.f64` ([entry][loudspeaker][tap]) + `mix.f64`.
pub fn save_dictionary(
    dict: &FilterDictionary,
    mix: Option<&ControlFilterSet>,
    dir: &Path,
) -> Result<()> {
    let mut flat = Vec::new();
    for entry in dict.entries() {
        if !entry.coefficients().iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("non-finite filter coefficient"));
        }
        flat.extend_from_slice(entry.coefficients());
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DictionaryManifest {
        schema_version: SCHEMA_VERSION,
        method: dict.method(),
        params: *dict.params(),
        num_loudspeakers: dict.num_loudspeakers(),
        positions: dict.original_ids().to_vec(),
        has_mix: mix.is_some(),
    };
    write_json(&dir.join(DICTIONARY_FILE), &manifest)?;
    write_f64_le(&dir.join(FILTERS_FILE), &flat)?;
    if let Some(mix) = mix {
        write_f64_le(&dir.join(MIX_FILE), mix.coefficients())?;
    }
    Ok(())
}

pub fn load_dictionary(dir: &Path) -> Result<(FilterDictionary, Option<ControlFilterSet>)> {
    let m: DictionaryManifest = read_json(&dir.join(DICTIONARY_FILE))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion(m.schema_version));
    }
    let lj = m.num_loudspeakers * m.params.filter_len;
    let flat = read_exact_f64(&dir.join(FILTERS_FILE), lj * m.positions.len())?;
    let entries = flat
        .chunks_exact(lj.max(1))
        .enumerate()
        .map(|(i, c)| {
            ControlFilterSet::new(
                c.to_vec(),
                m.num_loudspeakers,
                m.method,
                FilterTag::Position(PositionId(i)),
                m.params,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dict = FilterDictionary::new(m.method, m.params, entries, m.positions)?;
    let mix = if m.has_mix {
        let c = read_exact_f64(&dir.join(MIX_FILE), lj)?;
        Some(ControlFilterSet::new(
            c,
            m.num_loudspeakers,
            m.method,
            FilterTag::Mix,
            m.params,
        )?)
    } else {
        None
    };
    Ok((dict, mix))
}
