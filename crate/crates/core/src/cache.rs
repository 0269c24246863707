//! On-disk cache for local eigen data, keyed by a hash of everything the
//! spectral problems depend on. Enabled by `CEMFLOW_CACHE_DIR`.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::grid::CellBox;
use crate::instance::Instance;
use crate::spectral::{build_aux_space, AuxSpace, ElementEigen};

pub const CACHE_ENV: &str = "CEMFLOW_CACHE_DIR";

/// Hash of the grids, resampled medium, velocity, boundary layout and
/// `s`-weight of an instance.
pub fn fingerprint(inst: &Instance) -> String {
    let mut h = Sha256::new();
    let f = inst.fine();
    let c = inst.coarse();
    h.update(format!("{:?}|{}x{}|{}x{}|", f.domain, f.nx, f.ny, c.nx, c.ny).as_bytes());
    for v in inst.medium.values() {
        h.update(v.to_le_bytes());
    }
    h.update(format!("|{:?}|{:?}|{:?}", inst.problem.velocity, inst.problem.boundary, inst.kappa_tilde.c).as_bytes());
    h.update(inst.problem.data.b.label().as_bytes());
    hex::encode(h.finalize())
}

#[derive(Clone, Debug)]
pub struct CacheDir {
    root: PathBuf,
}

impl CacheDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    /// `None` when the variable is unset or empty.
    pub fn from_env() -> Result<Option<Self>> {
        match std::env::var_os(CACHE_ENV) {
            Some(p) if !p.is_empty() => Self::new(PathBuf::from(p)).map(Some),
            _ => Ok(None),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.bin"))
    }

    pub fn load(&self, key: &str) -> Option<Vec<f64>> {
        let bytes = fs::read(self.path(key)).ok()?;
        if bytes.len() % 8 != 0 {
            return None;
        }
        Some(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    pub fn store(&self, key: &str, data: &[f64]) -> Result<()> {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let tmp = self.root.join(format!("{key}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }
}

fn push_vecs(out: &mut Vec<f64>, v: &[Vec<f64>]) {
    out.push(v.len() as f64);
    for x in v {
        out.push(x.len() as f64);
        out.extend_from_slice(x);
    }
}

pub fn encode_aux(aux: &AuxSpace) -> Vec<f64> {
    let mut out = vec![aux.l as f64, f64::from(u8::from(aux.symmetrize)), aux.elements.len() as f64];
    for el in &aux.elements {
        let c = el.cells;
        out.extend([el.element as f64, c.x0 as f64, c.x1 as f64, c.y0 as f64, c.y1 as f64, el.max_imag, el.residual]);
        out.push(el.eigenvalues.len() as f64);
        out.extend_from_slice(&el.eigenvalues);
        push_vecs(&mut out, &el.raw);
        push_vecs(&mut out, &el.basis);
        push_vecs(&mut out, &el.s_basis);
    }
    out
}

struct Reader<'a> {
    data: &'a [f64],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[f64]> {
        let s = self.data.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn num(&mut self) -> Option<f64> {
        self.take(1).map(|s| s[0])
    }

    fn count(&mut self) -> Option<usize> {
        let v = self.num()?;
        (v >= 0.0 && v.fract() == 0.0).then_some(v as usize)
    }

    fn vecs(&mut self) -> Option<Vec<Vec<f64>>> {
        let n = self.count()?;
        (0..n).map(|_| self.count().and_then(|k| self.take(k).map(|s| s.to_vec()))).collect()
    }
}

pub fn decode_aux(data: &[f64]) -> Option<AuxSpace> {
    let mut r = Reader { data, pos: 0 };
    let l = r.count()?;
    let symmetrize = r.num()? != 0.0;
    let ne = r.count()?;
    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        let element = r.count()?;
        let cells = CellBox { x0: r.count()?, x1: r.count()?, y0: r.count()?, y1: r.count()? };
        let max_imag = r.num()?;
        let residual = r.num()?;
        let k = r.count()?;
        let eigenvalues = r.take(k)?.to_vec();
        let raw = r.vecs()?;
        let basis = r.vecs()?;
        let s_basis = r.vecs()?;
        elements.push(ElementEigen { element, cells, eigenvalues, max_imag, raw, basis, s_basis, residual });
    }
    (r.pos == data.len()).then_some(AuxSpace { l, symmetrize, elements })
}

/// [`build_aux_space`] through the cache when one is configured.
pub fn aux_space_cached(inst: &Instance, l: usize, symmetrize: bool, cache: Option<&CacheDir>) -> Result<AuxSpace> {
    let Some(cache) = cache else {
        return build_aux_space(inst, l, symmetrize);
    };
    let key = format!("aux-{}-{l}-{}", fingerprint(inst), u8::from(symmetrize));
    if let Some(aux) = cache.load(&key).and_then(|d| decode_aux(&d)) {
        if aux.l == l && aux.elements.len() == inst.coarse().num_elements() {
            return Ok(aux);
        }
    }
    let aux = build_aux_space(inst, l, symmetrize)?;
    cache.store(&key, &encode_aux(&aux))?;
    Ok(aux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{builtin_medium, builtin_velocity, MediumPattern};
    use crate::grid::{BoundaryKind, BoundarySpec, DomainSpec};
    use crate::instance::ProblemData;

    #[test]
    fn aux_roundtrip_through_cache() {
        let medium = builtin_medium(12, 12, 100.0, MediumPattern::Inclusions, 2).unwrap();
        let spec = BoundarySpec::all(&DomainSpec::unit_square(), BoundaryKind::Dirichlet);
        let inst = Instance::new(ProblemData::new(medium, builtin_velocity("vortex", 1.0).unwrap(), spec), 12, 12, 3, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheDir::new(dir.path()).unwrap();
        let a = aux_space_cached(&inst, 2, false, Some(&cache)).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let b = aux_space_cached(&inst, 2, false, Some(&cache)).unwrap();
        assert_eq!(a, b);
        assert_eq!(decode_aux(&encode_aux(&a)), Some(a));
        assert!(decode_aux(&[1.0, 0.0]).is_none());
        let other = Instance::new(
            ProblemData::new(inst.problem.medium.clone(), builtin_velocity("vortex", 2.0).unwrap(), inst.problem.boundary.clone()),
            12,
            12,
            3,
            3,
        )
        .unwrap();
        assert_ne!(fingerprint(&inst), fingerprint(&other));
    }
}
