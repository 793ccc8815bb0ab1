//! Field checkpoints: a JSON sidecar plus a raw little-endian f64 blob.
//!
//! The blob holds `sites × C(7,k)` values, site-major. Sites are ordered
//! lexicographically over the active axes (first active axis slowest) and the
//! components of a site follow the lexicographic order of increasing
//! multi-indices.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FormField, Lattice, LatticeSpec};
use crate::error::{Error, Result};
use crate::exterior::n_components;

pub const FORMAT: &str = "g2flow-field";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub dtype: String,
    pub lattice: LatticeSpec,
    pub degree: usize,
    pub sites: usize,
    pub components_per_site: usize,
    /// Blob file name, relative to the sidecar's directory.
    pub blob: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Writes `<stem>.json` and `<stem>.bin` next to each other; returns the
/// sidecar path.
pub fn write_field(dir: &Path, stem: &str, field: &FormField, meta: serde_json::Value) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let blob_name = format!("{stem}.bin");
    let mut bytes = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(&blob_name), bytes)?;
    let sidecar = Sidecar {
        format: FORMAT.into(),
        version: VERSION,
        endianness: "little".into(),
        dtype: "f64".into(),
        lattice: field.lattice().spec(),
        degree: field.degree(),
        sites: field.sites(),
        components_per_site: n_components(field.degree()),
        blob: blob_name,
        meta,
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(path)
}

/// Reads a checkpoint; reuses `lattice` when its spec matches the sidecar.
pub fn read_field(sidecar_path: &Path, lattice: Option<&Arc<Lattice>>) -> Result<(FormField, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path)?)?;
    if sidecar.format != FORMAT || sidecar.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format {} v{}", sidecar.format, sidecar.version)));
    }
    if sidecar.endianness != "little" || sidecar.dtype != "f64" {
        return Err(Error::Checkpoint(format!("unsupported encoding {} {}", sidecar.endianness, sidecar.dtype)));
    }
    let lattice = match lattice {
        Some(l) if l.spec() == sidecar.lattice => l.clone(),
        _ => Lattice::from_spec(&sidecar.lattice)?,
    };
    if lattice.sites() != sidecar.sites || n_components(sidecar.degree) != sidecar.components_per_site {
        return Err(Error::Checkpoint("sidecar sizes are inconsistent with its lattice".into()));
    }
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(dir.join(&sidecar.blob))?;
    if bytes.len() != 8 * sidecar.sites * sidecar.components_per_site {
        return Err(Error::Checkpoint(format!("blob has {} bytes, expected {}", bytes.len(), 8 * sidecar.sites * sidecar.components_per_site)));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let field = FormField::from_data(&lattice, sidecar.degree, data)?;
    Ok((field, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::Form;
    use crate::lattice::Scheme;

    #[test]
    fn round_trip_is_bit_exact() {
        let lat = Lattice::new(&[1, 4], 8, 2.5, Scheme::Spectral).unwrap();
        let f = FormField::from_fn(&lat, 3, |x| {
            Form::basis(&[0, 1, 2]) * (x[1] * 1.1).sin() + Form::basis(&[2, 4, 6]) * (x[4] / 3.0).exp()
        });
        let dir = tempfile::tempdir().unwrap();
        let path = write_field(dir.path(), "phi", &f, serde_json::json!({"t": 0.125})).unwrap();
        let (g, side) = read_field(&path, None).unwrap();
        assert_eq!(f.data(), g.data());
        assert_eq!(side.meta["t"], 0.125);
        assert_eq!(side.lattice.active_axes, vec![2, 5]);
        let raw = fs::read(dir.path().join("phi.bin")).unwrap();
        assert_eq!(&raw[..8], &f.data()[0].to_le_bytes());
    }

    #[test]
    fn rejects_truncated_blob() {
        let lat = Lattice::new(&[0], 8, 1.0, Scheme::Spectral).unwrap();
        let f = FormField::zeros(&lat, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = write_field(dir.path(), "b", &f, serde_json::Value::Null).unwrap();
        fs::write(dir.path().join("b.bin"), [0u8; 16]).unwrap();
        assert!(matches!(read_field(&path, None), Err(Error::Checkpoint(_))));
    }
}
