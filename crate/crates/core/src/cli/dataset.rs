use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{make_bandpass_noise, read_wav, resample, trim_silence, write_wav, AudioClip, DEFAULT_THRESHOLD_DB};
use crate::train::derive_seed;

pub const DATASET_VERSION: u32 = 1;

/// Share of every class held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub class: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub sample_rate: u32,
    pub split_seed: u64,
    pub classes: Vec<String>,
    pub clips: Vec<ClipEntry>,
    #[serde(default)]
    pub skipped: Vec<Skipped>,
    /// Generator settings, for synthetic sets.
    #[serde(default)]
    pub toy: Option<ToySpec>,
}

/// Band-limited noise classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    /// `[f_lo, f_hi]` Hz per class.
    pub bands: Vec<[f64; 2]>,
    pub clips_per_class: usize,
    /// Seconds.
    pub duration: f64,
    pub sample_rate: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub exclusive: bool,
}

fn yes() -> bool {
    true
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            bands: vec![[500.0, 1500.0], [2000.0, 3500.0]],
            clips_per_class: 100,
            duration: 0.5,
            sample_rate: 8000,
            seed: 0,
            exclusive: true,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.bands.len() < 2 {
            return Err(Error::Config("a toy set needs at least two classes".into()));
        }
        if self.clips_per_class < 2 {
            return Err(Error::Config("clips_per_class must be at least 2 so both splits see every class".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for (c, [lo, hi]) in self.bands.iter().enumerate() {
            if !(0.0 <= *lo && lo < hi && *hi <= nyquist) {
                return Err(Error::Config(format!("band {c} [{lo}, {hi}] Hz is empty or above {nyquist} Hz")));
            }
        }
        if self.exclusive {
            for (a, ba) in self.bands.iter().enumerate() {
                for (b, bb) in self.bands.iter().enumerate().skip(a + 1) {
                    if ba[0] <= bb[1] && bb[0] <= ba[1] {
                        return Err(Error::Config(format!("bands {a} and {b} overlap")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-class seeded split: `round(0.2·n)` test clips, at least one on each side.
pub fn stratified_split(classes: &[usize], seed: u64) -> Result<Vec<Split>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut out = vec![Split::Train; classes.len()];
    for (c, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::Param(format!("class {c} has {} clip(s); both splits need one", idx.len())));
        }
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64])));
        let n_test = ((idx.len() as f64 * TEST_FRACTION).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..n_test] {
            out[i] = Split::Test;
        }
    }
    Ok(out)
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if m.schema_version != DATASET_VERSION {
            return Err(Error::Schema(format!(
                "{} has dataset version {}, this build reads version {DATASET_VERSION}",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn count(&self, split: Split) -> usize {
        self.clips.iter().filter(|c| c.split == split).count()
    }

    /// Labelled clips of `split`, resampled to the manifest rate if needed.
    pub fn load_clips(&self, dir: &Path, split: Split) -> Result<Vec<AudioClip>> {
        self.clips
            .iter()
            .filter(|c| c.split == split)
            .map(|c| {
                let clip = read_wav(dir.join(&c.path))?;
                let clip = if clip.sample_rate == self.sample_rate {
                    clip
                } else {
                    resample(&clip, self.sample_rate)?
                };
                Ok(clip.with_label(c.class))
            })
            .collect()
    }
}

/// Writes the toy clips and their manifest into `dir`.
pub fn generate_toy(spec: &ToySpec, dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut labels = Vec::new();
    let mut paths = Vec::new();
    std::fs::create_dir_all(dir.join("clips")).map_err(|e| Error::io(dir, e))?;
    for (c, band) in spec.bands.iter().enumerate() {
        for i in 0..spec.clips_per_class {
            let seed = derive_seed(spec.seed, &[c as u64, i as u64]);
            let clip = make_bandpass_noise(*band, spec.sample_rate, spec.duration, seed)?;
            let rel = format!("clips/class{c}_{i:04}.wav");
            write_wav(dir.join(&rel), &clip)?;
            labels.push(c);
            paths.push(rel);
        }
    }
    let splits = stratified_split(&labels, spec.seed)?;
    let manifest = DatasetManifest {
        schema_version: DATASET_VERSION,
        sample_rate: spec.sample_rate,
        split_seed: spec.seed,
        classes: (0..spec.bands.len()).map(|c| format!("class{c}")).collect(),
        clips: paths
            .into_iter()
            .zip(labels)
            .zip(splits)
            .map(|((path, class), split)| ClipEntry { path, class, split })
            .collect(),
        skipped: Vec::new(),
        toy: Some(spec.clone()),
    };
    manifest.save(dir.join("dataset.json"))?;
    Ok(manifest)
}

/// Reads `root/<class>/*.wav`, trims boundary silence, writes the trimmed
/// clips at `sample_rate` (default: the first file's rate) and a manifest into `dir`.
pub fn ingest(root: &Path, dir: &Path, split_seed: u64, sample_rate: Option<u32>) -> Result<DatasetManifest> {
    let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    let mut skipped = Vec::new();
    let mut usable: Vec<(String, Vec<(String, AudioClip)>)> = Vec::new();
    let mut rate = sample_rate;
    for cdir in &class_dirs {
        let name = cdir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let mut files: Vec<PathBuf> = std::fs::read_dir(cdir)
            .map_err(|e| Error::io(cdir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        let mut clips = Vec::new();
        for f in files {
            let shown = f.strip_prefix(root).unwrap_or(&f).display().to_string();
            let clip = match read_wav(&f).and_then(|c| trim_silence(&c, DEFAULT_THRESHOLD_DB)) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("skipping {shown}: {e}");
                    skipped.push(Skipped {
                        path: shown,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let sr = *rate.get_or_insert(clip.sample_rate);
            let clip = if clip.sample_rate == sr { clip } else { resample(&clip, sr)? };
            let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            clips.push((stem, clip));
        }
        if clips.len() < 2 {
            log::warn!("class {name} has {} usable clip(s) and is left out", clips.len());
            continue;
        }
        usable.push((name, clips));
    }
    if usable.is_empty() {
        return Err(Error::Param(format!("no usable classes under {}", root.display())));
    }
    let mut labels = Vec::new();
    let mut paths = Vec::new();
    for (c, (name, clips)) in usable.iter().enumerate() {
        let cdir = dir.join("clips").join(name);
        std::fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        for (stem, clip) in clips {
            let rel = format!("clips/{name}/{stem}.wav");
            write_wav(dir.join(&rel), clip)?;
            labels.push(c);
            paths.push(rel);
        }
    }
    let splits = stratified_split(&labels, split_seed)?;
    let manifest = DatasetManifest {
        schema_version: DATASET_VERSION,
        sample_rate: rate.expect("at least one clip was read"),
        split_seed,
        classes: usable.into_iter().map(|(n, _)| n).collect(),
        clips: paths
            .into_iter()
            .zip(labels)
            .zip(splits)
            .map(|((path, class), split)| ClipEntry { path, class, split })
            .collect(),
        skipped,
        toy: None,
    };
    manifest.save(dir.join("dataset.json"))?;
    Ok(manifest)
}
