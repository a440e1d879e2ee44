use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::{Preset, RunConfig};
use super::dataset::{generate_toy, ingest, DatasetManifest, Split, ToySpec};
use super::{Cli, Command, SweepKind};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Classifier, ModelInput, ModelKind};
use crate::pointcloud::Strategy;
use crate::train::{
    evaluate, featurize, sweep_repr, sweep_subsample, train_with, write_history_csv, write_repr_csv,
    write_subsample_csv, CountRow, Featurization, RunManifest,
};

/// Freshly created output directory of one command.
#[derive(Clone, Debug)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    /// `<base>/<verb>-<UTC timestamp>`, suffixed when that name is taken.
    pub fn create(base: &Path, verb: &str) -> Result<Self> {
        std::fs::create_dir_all(base).map_err(|e| Error::io(base, e))?;
        let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
        for k in 0.. {
            let name = if k == 0 {
                format!("{verb}-{stamp}")
            } else {
                format!("{verb}-{stamp}-{k}")
            };
            let path = base.join(name);
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir(path)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        unreachable!()
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// `path` itself, or `dataset.json` inside it.
fn dataset_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("dataset.json")
    } else {
        path.to_path_buf()
    }
}

fn load_dataset(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let file = dataset_file(path);
    let manifest = DatasetManifest::load(&file)?;
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, dir))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    cli.config.as_deref().map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn checkpoint_featurization(ckpt: &Checkpoint) -> Result<Featurization> {
    serde_json::from_value(ckpt.featurization.clone())
        .map_err(|e| Error::Schema(format!("checkpoint featurisation: {e}")))
}

/// Runs one parsed command and returns the run directory it wrote.
pub fn run(cli: &Cli) -> Result<RunDir> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::GenToy => {
            let cfg = match &cli.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    let spec: ToySpec = toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?;
                    spec
                }
                None => ToySpec::default(),
            };
            let spec = ToySpec {
                seed: cli.seed.unwrap_or(cfg.seed),
                ..cfg
            };
            spec.validate()?;
            let dir = RunDir::create(&cli.out, "gen-toy")?;
            let m = generate_toy(&spec, &dir.0)?;
            let mut run = RunManifest::new("gen-toy", spec.seed);
            run.config = serde_json::to_value(&spec)?;
            run.outputs = vec!["dataset.json".into()];
            run.metrics = json!({"train": m.count(Split::Train), "test": m.count(Split::Test)});
            run.save(dir.join("manifest.json"))?;
            println!("{} train / {} test clips", m.count(Split::Train), m.count(Split::Test));
            Ok(dir)
        }
        Command::Ingest { root, sample_rate } => {
            if !root.is_dir() {
                return Err(Error::Param(format!("{} is not a directory", root.display())));
            }
            let dir = RunDir::create(&cli.out, "ingest")?;
            let m = ingest(root, &dir.0, seed, *sample_rate).inspect_err(|_| {
                let _ = std::fs::remove_dir_all(&dir.0);
            })?;
            let mut run = RunManifest::new("ingest", seed);
            run.config = json!({"root": root, "sample_rate": m.sample_rate});
            run.outputs = vec!["dataset.json".into()];
            run.metrics = json!({
                "classes": m.classes.len(),
                "train": m.count(Split::Train),
                "test": m.count(Split::Test),
                "skipped": m.skipped.len(),
            });
            run.save(dir.join("manifest.json"))?;
            for s in &m.skipped {
                eprintln!("warning: skipped {}: {}", s.path, s.reason);
            }
            println!(
                "{} classes, {} train / {} test clips, {} skipped",
                m.classes.len(),
                m.count(Split::Train),
                m.count(Split::Test),
                m.skipped.len()
            );
            Ok(dir)
        }
        Command::Train { dataset, preset } => train_cmd(cli, dataset, *preset),
        Command::Eval { checkpoint, dataset } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let model: Classifier<f64> = ckpt.to_model()?;
            let feat = checkpoint_featurization(&ckpt)?;
            let (ds, ddir) = load_dataset(dataset)?;
            let test = featurize(&ds.load_clips(&ddir, Split::Test)?, &feat)?;
            let report = evaluate(&model, &test)?;
            let dir = RunDir::create(&cli.out, "eval")?;
            write_json(&dir.join("eval.json"), &report)?;
            let mut run = RunManifest::new("eval", seed);
            run.config = json!({"checkpoint": checkpoint, "dataset": dataset_file(dataset)});
            run.outputs = vec!["eval.json".into()];
            run.metrics = json!({"accuracy": report.accuracy, "examples": report.count});
            run.save(dir.join("manifest.json"))?;
            println!("accuracy {}", report.accuracy);
            Ok(dir)
        }
        Command::Sweep {
            checkpoint,
            dataset,
            kind,
        } => sweep_cmd(cli, checkpoint, dataset, *kind),
        Command::Report { runs, example } => report_cmd(cli, runs, *example),
    }
}

fn train_cmd(cli: &Cli, dataset: &Path, preset: Preset) -> Result<RunDir> {
    let cfg = load_config(cli)?;
    let (ds, ddir) = load_dataset(dataset)?;
    let (spec, feat, mut train_cfg) = cfg.resolve(preset, ds.classes.len(), ds.sample_rate)?;
    if let Some(seed) = cli.seed {
        train_cfg.seed = seed;
    }
    let t0 = Instant::now();
    let train_set = featurize(&ds.load_clips(&ddir, Split::Train)?, &feat)?;
    let test_set = featurize(&ds.load_clips(&ddir, Split::Test)?, &feat)?;
    let featurize_s = t0.elapsed().as_secs_f64();

    let mut model = Classifier::<f64>::new(spec, train_cfg.seed)?;
    let t1 = Instant::now();
    let epochs = train_cfg.epochs;
    let history = train_with(&mut model, &train_set, &train_cfg, |r| {
        log::info!(
            "epoch {}/{epochs} loss {:.5} train accuracy {:.4}",
            r.epoch + 1,
            r.loss,
            r.train_accuracy
        );
    })?;
    let train_s = t1.elapsed().as_secs_f64();
    let report = evaluate(&model, &test_set)?;

    let dir = RunDir::create(&cli.out, "train")?;
    Checkpoint::from_model(&model, serde_json::to_value(&feat)?).save(dir.join("checkpoint.json"))?;
    write_history_csv(dir.join("history.csv"), &history)?;
    write_json(&dir.join("eval.json"), &report)?;
    let mut run = RunManifest::new("train", train_cfg.seed);
    run.preset = Some(preset.name().into());
    run.config = json!({
        "dataset": std::fs::canonicalize(dataset_file(dataset)).unwrap_or_else(|_| dataset_file(dataset)),
        "train": train_cfg,
        "model": model.spec(),
        "features": feat,
    });
    run.timings.insert("featurize_seconds".into(), featurize_s);
    run.timings.insert("train_seconds".into(), train_s);
    run.timings.insert("mean_epoch_seconds".into(), history.mean_epoch_seconds());
    run.outputs = vec!["checkpoint.json".into(), "history.csv".into(), "eval.json".into()];
    let size = train_set[0].input.as_cloud().map_or(0, |c| c.len());
    run.metrics = json!({
        "test_accuracy": report.accuracy,
        "final_train_accuracy": history.last().map(|e| e.train_accuracy),
        "final_loss": history.last().map(|e| e.loss),
        "params": model.param_count(),
        "inference_macs": model.macs(size),
        "training_macs": model.training_macs(size),
        "train_examples": train_set.len(),
        "test_examples": test_set.len(),
    });
    run.save(dir.join("manifest.json"))?;
    println!("test accuracy {}", report.accuracy);
    Ok(dir)
}

fn sweep_cmd(cli: &Cli, checkpoint: &Path, dataset: &Path, kind: SweepKind) -> Result<RunDir> {
    let cfg = load_config(cli)?.sweep;
    let ckpt = Checkpoint::load(checkpoint)?;
    let model: Classifier<f64> = ckpt.to_model()?;
    let feat = checkpoint_featurization(&ckpt)?;
    let (ds, ddir) = load_dataset(dataset)?;
    let clips = ds.load_clips(&ddir, Split::Test)?;
    let mut run = RunManifest::new("sweep", cli.seed.unwrap_or(0));
    let t0 = Instant::now();
    let (dir, csv_name) = match kind {
        SweepKind::Repr => {
            let n = feat.n_fft;
            let sr = feat.sample_rate;
            let windows = cfg.window_sizes.unwrap_or_else(|| vec![n / 4, n / 2, n, 2 * n]);
            let rates = cfg.sample_rates.unwrap_or_else(|| vec![sr / 2, sr, 2 * sr]);
            let cells = sweep_repr(&model, &clips, &feat, &windows, &rates, cli.jobs)?;
            let dir = RunDir::create(&cli.out, "sweep-repr")?;
            write_repr_csv(dir.join("repr.csv"), &cells)?;
            run.config = json!({"kind": "repr", "window_sizes": windows, "sample_rates": rates});
            run.metrics = serde_json::to_value(&cells)?;
            (dir, "repr.csv")
        }
        SweepKind::Subsample => {
            let examples = featurize(&clips, &feat)?;
            let gridded = model.spec().kind == ModelKind::Tst3 || model.spec().kind == ModelKind::Cnn;
            let strategies = cfg.strategies.unwrap_or_else(|| {
                let mut s = vec![Strategy::Topk, Strategy::Random];
                if gridded {
                    s.push(Strategy::Gradient);
                }
                s
            });
            let fractions = cfg
                .fractions
                .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 0.95, 1.0]);
            let repeats = cfg.repeats.unwrap_or(10);
            let mut rows = Vec::new();
            for s in &strategies {
                rows.extend(sweep_subsample(&model, &examples, &fractions, *s, repeats, cli.seed.unwrap_or(0), cli.jobs)?);
            }
            let dir = RunDir::create(&cli.out, "sweep-subsample")?;
            write_subsample_csv(dir.join("subsample.csv"), &rows)?;
            run.config = json!({"kind": "subsample", "fractions": fractions, "strategies": strategies, "repeats": repeats});
            run.metrics = serde_json::to_value(&rows)?;
            (dir, "subsample.csv")
        }
    };
    run.config["checkpoint"] = json!(checkpoint);
    run.config["dataset"] = json!(dataset_file(dataset));
    run.timings.insert("sweep_seconds".into(), t0.elapsed().as_secs_f64());
    run.outputs = vec![csv_name.into()];
    run.save(dir.join("manifest.json"))?;
    println!("wrote {}", dir.join(csv_name).display());
    Ok(dir)
}

/// One line of the report's parameter / MAC table.
#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    #[serde(flatten)]
    pub counts: CountRow,
    /// Published reference count for this model, where one exists.
    pub reference_params: Option<usize>,
    pub baseline: Option<&'static str>,
    /// Whether this set model has fewer parameters than its baseline.
    pub fewer_than_baseline: Option<bool>,
}

/// Full-size presets (10 classes) and the toy presets, MACs counted at
/// 1025 points / bins for frame models and 5130 for spectrogram models.
pub fn count_table() -> Vec<TableRow> {
    let build = |p: Preset, classes| Classifier::<f64>::new(p.spec(classes), 0).expect("preset builds");
    let rows = [
        (Preset::Fst, 10, 1025, Some(80_202), Some("fb")),
        (Preset::Fb, 10, 1025, Some(660_492), None),
        (Preset::Tst3, 10, 5130, Some(80_394), Some("cnn")),
        (Preset::Cnn, 10, 5130, Some(158_049), None),
        (Preset::FstToy, 2, 64, None, Some("fb-toy")),
        (Preset::FbToy, 2, 64, None, None),
    ];
    let counts: Vec<CountRow> = rows
        .iter()
        .map(|&(p, c, size, _, _)| CountRow::new(p.name(), &build(p, c), size))
        .collect();
    rows.iter()
        .zip(&counts)
        .map(|(&(_, _, _, reference, baseline), row)| TableRow {
            counts: row.clone(),
            reference_params: reference,
            baseline,
            fewer_than_baseline: baseline
                .map(|b| row.params < counts.iter().find(|r| r.model == b).expect("baseline listed").params),
        })
        .collect()
}

fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model",
        "params",
        "reference_params",
        "baseline",
        "fewer_than_baseline",
        "input_size",
        "inference_macs",
        "training_macs",
    ])?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in rows {
        w.write_record([
            r.counts.model.clone(),
            r.counts.params.to_string(),
            opt(r.reference_params.map(|p| p.to_string())),
            opt(r.baseline.map(str::to_string)),
            opt(r.fewer_than_baseline.map(|b| b.to_string())),
            r.counts.input_size.to_string(),
            r.counts.inference_macs.to_string(),
            r.counts.training_macs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Run directories named directly, or the run directories inside a named parent.
fn expand_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("manifest.json").is_file() {
            out.push(p.clone());
            continue;
        }
        let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("manifest.json").is_file())
            .collect();
        if inner.is_empty() {
            return Err(Error::Param(format!("{} holds no run manifest", p.display())));
        }
        inner.sort();
        out.extend(inner);
    }
    Ok(out)
}

fn report_cmd(cli: &Cli, runs: &[PathBuf], example: usize) -> Result<RunDir> {
    let mut found = Vec::new();
    for r in expand_runs(runs)? {
        let file = r.join("manifest.json");
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64());
        found.push((r, file, version));
    }
    let versions: BTreeSet<Option<u64>> = found.iter().map(|f| f.2).collect();
    if versions.len() > 1 {
        let listed: Vec<String> = found
            .iter()
            .map(|(r, _, v)| format!("{} (version {})", r.display(), v.map_or("missing".into(), |v| v.to_string())))
            .collect();
        return Err(Error::Schema(format!("conflicting manifest versions: {}", listed.join(", "))));
    }
    let manifests = found
        .iter()
        .map(|(_, f, _)| RunManifest::load(f))
        .collect::<Result<Vec<_>>>()?;

    // attention of the first trained set model, if any
    let mut attention: Option<(String, Vec<(Vec<f64>, f64)>, usize)> = None;
    for ((r, _, _), m) in found.iter().zip(&manifests) {
        if m.command != "train" {
            continue;
        }
        let ckpt = Checkpoint::load(r.join("checkpoint.json"))?;
        if !ckpt.spec.kind.takes_clouds() {
            continue;
        }
        let model: Classifier<f64> = ckpt.to_model()?;
        let feat = checkpoint_featurization(&ckpt)?;
        let dpath = m.config["dataset"]
            .as_str()
            .ok_or_else(|| Error::Schema(format!("{} names no dataset", r.display())))?;
        let (ds, ddir) = load_dataset(Path::new(dpath))?;
        let test = featurize(&ds.load_clips(&ddir, Split::Test)?, &feat)?;
        let ex = test
            .get(example)
            .ok_or_else(|| Error::Param(format!("example {example} outside the {} test examples", test.len())))?;
        let ModelInput::Cloud(cloud) = &ex.input else {
            unreachable!("set models take clouds")
        };
        let w = model.attention_weights(cloud)?;
        let rows = (0..cloud.len()).map(|i| (cloud.point(i).to_vec(), w[i])).collect();
        attention = Some((r.display().to_string(), rows, cloud.dim()));
        break;
    }

    let table = count_table();
    let flag = |name: &str| table.iter().find(|r| r.counts.model == name).and_then(|r| r.fewer_than_baseline);
    let ordering = json!({
        "fst_lt_fb": flag("fst"),
        "tst3_lt_cnn": flag("tst3"),
    });

    let dir = RunDir::create(&cli.out, "report")?;
    write_table_csv(&dir.join("counts.csv"), &table)?;
    let mut outputs = vec!["report.json".to_string(), "counts.csv".to_string()];
    if let Some((_, rows, dim)) = &attention {
        let path = dir.join("attention.csv");
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let header = if *dim == 3 { "t,f,m,attention" } else { "f,m,attention" };
        let mut text = format!("{header}\n");
        for (p, w) in rows {
            let cols: Vec<String> = p.iter().chain(std::iter::once(w)).map(|x| x.to_string()).collect();
            text += &cols.join(",");
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        outputs.push("attention.csv".into());
    }
    write_json(
        &dir.join("report.json"),
        &json!({
            "runs": manifests,
            "counts": table,
            "ordering": ordering,
            "attention_source": attention.as_ref().map(|a| &a.0),
        }),
    )?;
    let mut run = RunManifest::new("report", cli.seed.unwrap_or(0));
    run.config = json!({"runs": runs, "example": example});
    run.outputs = outputs;
    run.metrics = ordering;
    run.save(dir.join("manifest.json"))?;
    println!("merged {} runs", manifests.len());
    Ok(dir)
}
