//! Synthetic datasets: phantom targets, coil maps, per-sample masks and noise.
//!
//! On disk a dataset is a directory with `targets/*.mtf`, `coils/*.mtf` and
//! a `manifest.txt`. Masks and measurement noise are not stored; they are
//! regenerated from the per-sample seeds recorded in the manifest.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::coils::{make_synthetic_coils, CoilMaps};
use crate::data::phantom::{make_phantom, PhantomSpec};
use crate::mask::{make_vd_mask, SamplingMask};
use crate::mtf;
use crate::operators::ForwardModel;
use crate::rng::{self, Stream};
use crate::scalar::Real;
use crate::tensor::ComplexTensor;
use crate::unrolled::checkpoint::parse_kv;
use crate::unrolled::{Problem, Sample};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetSpec {
    pub h: usize,
    pub w: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub accel: f64,
    pub coils: usize,
    pub noise_sigma: f64,
    pub texture_amp: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            h: 64,
            w: 64,
            n_train: 200,
            n_val: 20,
            n_test: 20,
            accel: 4.0,
            coils: 4,
            noise_sigma: 0.01,
            texture_amp: 0.05,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    fn validate(&self) -> Result<()> {
        if self.coils == 0 {
            return Err(Error::Parameter("need at least one coil".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Parameter(format!("bad noise sigma {}", self.noise_sigma)));
        }
        // mask constraints are checked by the generator itself
        make_vd_mask(self.h, self.w, self.accel, 0).map(|_| ())
    }

    fn ids(&self) -> impl Iterator<Item = (usize, Split)> {
        let (a, b, c) = (self.n_train, self.n_val, self.n_test);
        (0..a + b + c).map(move |i| {
            let s = if i < a {
                Split::Train
            } else if i < a + b {
                Split::Val
            } else {
                Split::Test
            };
            (i, s)
        })
    }
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: usize,
    pub split: Split,
    pub target: String,
    pub coils: Option<String>,
    pub mask_seed: u64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub entries: Vec<ManifestEntry>,
}

/// Ingredients of one sample, kept so the same image can be re-measured
/// with a different mask.
#[derive(Clone, Debug)]
pub struct Record<T: Real> {
    pub id: usize,
    pub split: Split,
    pub target: ComplexTensor<T>,
    pub coils: Option<CoilMaps<T>>,
    pub mask_seed: u64,
    pub noise_seed: u64,
}

impl<T: Real> Record<T> {
    /// Measures the target through `mask` with this record's noise seed.
    pub fn sample_with_mask(&self, mask: SamplingMask, noise_sigma: f64) -> Result<Sample<T>> {
        let model = match &self.coils {
            None => ForwardModel::single_channel(mask),
            Some(c) => ForwardModel::multi_channel(mask, c.clone())?,
        }
        .with_noise_sigma(noise_sigma);
        let b = model.simulate_measurement(&self.target, noise_sigma, self.noise_seed)?;
        Ok(Sample {
            problem: Problem::new(model, b)?,
            target: self.target.clone(),
        })
    }

    pub fn sample(&self, accel: f64, noise_sigma: f64) -> Result<Sample<T>> {
        let (h, w) = self.target.shape2()?;
        self.sample_with_mask(make_vd_mask(h, w, accel, self.mask_seed)?, noise_sigma)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset<T: Real> {
    pub spec: DatasetSpec,
    pub records: Vec<Record<T>>,
    pub train: Vec<Sample<T>>,
    pub val: Vec<Sample<T>>,
    pub test: Vec<Sample<T>>,
}

impl<T: Real> Dataset<T> {
    fn assemble(spec: DatasetSpec, records: Vec<Record<T>>) -> Result<Self> {
        let mut ds = Self {
            spec,
            records: Vec::new(),
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for r in &records {
            let s = r.sample(spec.accel, spec.noise_sigma)?;
            match r.split {
                Split::Train => ds.train.push(s),
                Split::Val => ds.val.push(s),
                Split::Test => ds.test.push(s),
            }
        }
        ds.records = records;
        Ok(ds)
    }

    pub fn records(&self, split: Split) -> impl Iterator<Item = &Record<T>> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn samples(&self, split: Split) -> &[Sample<T>] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn mask_seed(seed: u64, id: usize) -> u64 {
    rng::derive(seed, Stream::Mask, id as u64)
}

fn noise_seed(seed: u64, id: usize) -> u64 {
    rng::derive(seed, Stream::Noise, id as u64)
}

fn make_record<T: Real>(spec: &DatasetSpec, id: usize, split: Split) -> Result<Record<T>> {
    let pspec = PhantomSpec {
        texture_amp: spec.texture_amp,
        ..PhantomSpec::new(spec.h, spec.w, rng::derive(spec.seed, Stream::Phantom, id as u64))
    };
    let coils = if spec.coils > 1 {
        Some(make_synthetic_coils(
            spec.h,
            spec.w,
            spec.coils,
            rng::derive(spec.seed, Stream::Coils, id as u64),
        )?)
    } else {
        None
    };
    Ok(Record {
        id,
        split,
        target: make_phantom(&pspec),
        coils,
        mask_seed: mask_seed(spec.seed, id),
        noise_seed: noise_seed(spec.seed, id),
    })
}

/// Generates the dataset in memory. Sample ids run over train, then
/// validation, then test, so every split has its own masks and noise.
pub fn make_dataset<T: Real>(spec: &DatasetSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let records = spec
        .ids()
        .map(|(id, split)| make_record(spec, id, split))
        .collect::<Result<Vec<_>>>()?;
    Dataset::assemble(*spec, records)
}

fn manifest_text(m: &DatasetManifest) -> String {
    let s = &m.spec;
    let mut out = String::from("# synthetic phantom dataset\n");
    for (k, v) in [
        ("h", s.h.to_string()),
        ("w", s.w.to_string()),
        ("n_train", s.n_train.to_string()),
        ("n_val", s.n_val.to_string()),
        ("n_test", s.n_test.to_string()),
        ("accel", s.accel.to_string()),
        ("coils", s.coils.to_string()),
        ("noise_sigma", s.noise_sigma.to_string()),
        ("texture_amp", s.texture_amp.to_string()),
        ("seed", s.seed.to_string()),
    ] {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out.push_str("[samples]\n# id split target coils mask_seed noise_seed\n");
    for e in &m.entries {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            e.id,
            e.split,
            e.target,
            e.coils.as_deref().unwrap_or("-"),
            e.mask_seed,
            e.noise_seed
        ));
    }
    out
}

/// Generates the dataset and writes it under `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, spec: &DatasetSpec) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let ds = make_dataset::<f64>(spec)?;
    for sub in ["targets", "coils"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut entries = Vec::with_capacity(ds.records.len());
    for r in &ds.records {
        let target = format!("targets/{:05}.mtf", r.id);
        mtf::save(&r.target, dir.join(&target))?;
        let coils = match &r.coils {
            Some(c) => {
                let p = format!("coils/{:05}.mtf", r.id);
                mtf::save(c.as_tensor(), dir.join(&p))?;
                Some(p)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            id: r.id,
            split: r.split,
            target,
            coils,
            mask_seed: r.mask_seed,
            noise_seed: r.noise_seed,
        });
    }
    let m = DatasetManifest { spec: *spec, entries };
    let p = dir.join("manifest.txt");
    fs::write(&p, manifest_text(&m)).map_err(|e| Error::io(&p, e))?;
    Ok(m)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let p = dir.as_ref().join("manifest.txt");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let (head, body) = text
        .split_once("[samples]")
        .ok_or_else(|| Error::Config("manifest.txt: missing [samples] section".into()))?;
    let kv = parse_kv(head, "manifest.txt")?;
    let get = |k: &str| -> Result<&str> {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("manifest.txt: missing key {k}")))
    };
    fn num<V: FromStr>(k: &str, v: &str) -> Result<V> {
        v.parse()
            .map_err(|_| Error::Config(format!("manifest.txt: bad value for {k}: {v:?}")))
    }
    let spec = DatasetSpec {
        h: num("h", get("h")?)?,
        w: num("w", get("w")?)?,
        n_train: num("n_train", get("n_train")?)?,
        n_val: num("n_val", get("n_val")?)?,
        n_test: num("n_test", get("n_test")?)?,
        accel: num("accel", get("accel")?)?,
        coils: num("coils", get("coils")?)?,
        noise_sigma: num("noise_sigma", get("noise_sigma")?)?,
        texture_amp: num("texture_amp", get("texture_amp")?)?,
        seed: num("seed", get("seed")?)?,
    };
    let mut entries = Vec::new();
    for line in body.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let [id, split, target, coils, ms, ns] = f[..] else {
            return Err(Error::Config(format!("manifest.txt: malformed sample row {line:?}")));
        };
        entries.push(ManifestEntry {
            id: num("id", id)?,
            split: split.parse()?,
            target: target.to_string(),
            coils: (coils != "-").then(|| coils.to_string()),
            mask_seed: num("mask_seed", ms)?,
            noise_seed: num("noise_seed", ns)?,
        });
    }
    Ok(DatasetManifest { spec, entries })
}

/// Reads a dataset written by [`write_dataset`], rebuilding masks and measurements.
pub fn load_dataset<T: Real>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let mut records = Vec::with_capacity(m.entries.len());
    for e in &m.entries {
        let target = mtf::load(dir.join(&e.target))?.into_complex::<T>()?;
        let coils = match &e.coils {
            Some(p) => {
                let t = mtf::load(dir.join(p))?.into_complex::<T>()?;
                Some(CoilMaps::new(t)?)
            }
            None => None,
        };
        records.push(Record {
            id: e.id,
            split: e.split,
            target,
            coils,
            mask_seed: e.mask_seed,
            noise_seed: e.noise_seed,
        });
    }
    Dataset::assemble(m.spec, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small() -> DatasetSpec {
        DatasetSpec {
            h: 16,
            w: 16,
            n_train: 3,
            n_val: 2,
            n_test: 2,
            accel: 3.0,
            coils: 2,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn splits_have_disjoint_seeds() {
        let ds = make_dataset::<f64>(&small()).unwrap();
        assert_eq!((ds.train.len(), ds.val.len(), ds.test.len()), (3, 2, 2));
        let seeds = |s| ds.records(s).map(|r| r.mask_seed).collect::<HashSet<_>>();
        assert!(seeds(Split::Train).is_disjoint(&seeds(Split::Test)));
        assert!(seeds(Split::Train).is_disjoint(&seeds(Split::Val)));
    }

    #[test]
    fn empty_train_split() {
        let spec = DatasetSpec { n_train: 0, ..small() };
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &spec).unwrap();
        assert_eq!(m.entries.iter().filter(|e| e.split == Split::Train).count(), 0);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }

    #[test]
    fn reload_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &small()).unwrap();
        let a = make_dataset::<f64>(&small()).unwrap();
        let b = load_dataset::<f64>(dir.path()).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.target, y.target);
            assert_eq!(
                x.coils.as_ref().unwrap().as_tensor(),
                y.coils.as_ref().unwrap().as_tensor()
            );
        }
        for (x, y) in a.test.iter().zip(&b.test) {
            assert_eq!(x.problem.b, y.problem.b);
        }
    }

    #[test]
    fn missing_directory_names_path() {
        let err = load_dataset::<f64>("/nonexistent/ds").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ds"), "{err}");
    }
}
