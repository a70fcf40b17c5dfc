//! Binary trajectory store.
//!
//! Layout (little-endian): magic `SISYLAB1`, u32 format version, u32 config
//! length, UTF-8 config text, u32 atom count, then per atom a u32 atom index, a
//! u32 record count and that many records of six f64 `(t, x, z, px, pz, m)` with
//! `m = ±0.5`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sisylab::engine::{AtomState, Ensemble};
use sisylab::lattice::Sublevel;

use crate::error::HarnessError;

pub const MAGIC: &[u8; 8] = b"SISYLAB1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredAtom {
    pub index: u32,
    pub times: Vec<f64>,
    pub states: Vec<AtomState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStore {
    pub config_text: String,
    pub atoms: Vec<StoredAtom>,
}

impl TrajectoryStore {
    pub fn from_ensemble(config_text: String, ensemble: &Ensemble) -> Self {
        let atoms = ensemble
            .atom_indices
            .iter()
            .zip(&ensemble.trajectories)
            .map(|(&i, tr)| StoredAtom {
                index: i as u32,
                times: ensemble.times[..tr.len()].to_vec(),
                states: tr.clone(),
            })
            .collect();
        Self { config_text, atoms }
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let u32le = |v: usize| (v as u32).to_le_bytes();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&u32le(self.config_text.len()))?;
        w.write_all(self.config_text.as_bytes())?;
        w.write_all(&u32le(self.atoms.len()))?;
        for atom in &self.atoms {
            w.write_all(&atom.index.to_le_bytes())?;
            w.write_all(&u32le(atom.states.len()))?;
            for (t, s) in atom.times.iter().zip(&atom.states) {
                for v in [*t, s.x, s.z, s.px, s.pz, s.m.m()] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, String> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err("not a trajectory store (bad magic)".into());
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported store version {version}"));
        }
        let len = read_u32(r)? as usize;
        let mut blob = vec![0u8; len];
        r.read_exact(&mut blob).map_err(|e| e.to_string())?;
        let config_text = String::from_utf8(blob).map_err(|e| e.to_string())?;
        let n_atoms = read_u32(r)?;
        let mut atoms = Vec::with_capacity(n_atoms as usize);
        for _ in 0..n_atoms {
            let index = read_u32(r)?;
            let count = read_u32(r)? as usize;
            let mut times = Vec::with_capacity(count);
            let mut states = Vec::with_capacity(count);
            for _ in 0..count {
                let mut rec = [0.0; 6];
                for v in &mut rec {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b).map_err(|e| e.to_string())?;
                    *v = f64::from_le_bytes(b);
                }
                let m = Sublevel::from_m(rec[5]).ok_or_else(|| format!("bad sublevel {}", rec[5]))?;
                times.push(rec[0]);
                states.push(AtomState {
                    x: rec[1],
                    z: rec[2],
                    px: rec[3],
                    pz: rec[4],
                    m,
                });
            }
            atoms.push(StoredAtom {
                index,
                times,
                states,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
            return Err("trailing bytes after the last atom".into());
        }
        Ok(Self { config_text, atoms })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::read_from(&mut BufReader::new(file)).map_err(|m| HarnessError::format(path, m))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| e.to_string())?;
    Ok(u32::from_le_bytes(b))
}
