use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use neurcam::data::{default_names, load_csv, load_labels, standardize, write_csv};
use neurcam::explain::export_dir;
use neurcam::kmeans::{assign_nearest, KmeansConfig};
use neurcam::metrics::{self, PartitionPair};
use neurcam::model::ModelState;
use neurcam::trainer::{fit_multi_seed_observed, EpochRecord, TrainObserver};
use neurcam::{DualDataset, Error, Matrix, PersistedModel, Result, ScalerStats, TrainConfig};
use serde::Serialize;

use crate::args::{BaselineArgs, EvalArgs, ExplainArgs, FitArgs, InputArgs, PredictArgs, SynthArgs};

fn load_input(input: &InputArgs) -> Result<(Matrix, Vec<String>)> {
    let (x, names) = load_csv(&input.x, !input.no_header)?;
    let names = names.unwrap_or_else(|| default_names(x.cols()));
    Ok((x, names))
}

fn load_matrix(path: &Path, no_header: bool) -> Result<Matrix> {
    Ok(load_csv(path, !no_header)?.0)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Training settings: flags override the config file, which overrides the
/// library defaults.
pub fn resolve_config(args: &FitArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            toml::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(cfg.k, args.k);
    set!(cfg.num_single, args.gates);
    set!(cfg.num_pair, args.pair_gates);
    set!(cfg.m, args.m);
    set!(cfg.gamma, args.gamma);
    set!(cfg.seeds, args.seeds);
    set!(cfg.warmup_epochs, args.warmup);
    set!(cfg.temper_epochs, args.temper);
    set!(cfg.lr, args.lr);
    set!(cfg.batch_size, args.batch_size);
    set!(cfg.hidden, args.hidden);
    set!(cfg.basis, args.basis);
    set!(cfg.ablation, args.ablation);
    if let Some(e) = args.epochs {
        cfg.total_epochs = Some(e);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_path(out: &Path, seed: u64) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".seed{seed}.ckpt"));
    out.with_file_name(name)
}

/// Everything persisted alongside the trained parameters.
#[derive(Clone)]
struct ModelMeta {
    config: TrainConfig,
    scaler: Option<ScalerStats>,
    scaler_t: Option<ScalerStats>,
    names: Vec<String>,
}

impl ModelMeta {
    fn persist(&self, model: ModelState, seed: u64) -> PersistedModel {
        PersistedModel::new(
            self.config.clone(),
            model,
            self.scaler.clone(),
            self.scaler_t.clone(),
            self.names.clone(),
            seed,
        )
    }
}

struct Checkpointer {
    every: usize,
    path: PathBuf,
    seed: u64,
    meta: ModelMeta,
}

impl TrainObserver for Checkpointer {
    fn on_epoch_end(&mut self, record: &EpochRecord, model: &ModelState, _snapshot: Option<&ModelState>) -> Result<()> {
        if self.every > 0 && record.epoch.is_multiple_of(self.every) {
            self.meta.persist(model.clone(), self.seed).save(&self.path)?;
            log::debug!("seed {}: checkpoint at epoch {}", self.seed, record.epoch);
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct FitSummary<'a> {
    best_seed: u64,
    best_inertia: f64,
    config: &'a TrainConfig,
    runs: &'a [neurcam::TrainReport],
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let (x, names) = load_input(&args.input)?;
    let xt = match &args.xt {
        Some(p) => Some(load_matrix(p, args.input.no_header)?),
        None => None,
    };
    let has_xt = xt.is_some();
    let raw = DualDataset::new(x.clone(), xt.unwrap_or(x), Some(names.clone()), None)?;

    // Without a separate representation, distances are measured on the same
    // (scaled) features the model reads.
    let scale_xt = args.standardize_xt || (!has_xt && !args.no_standardize);
    let scaler = (!args.no_standardize).then(|| standardize(raw.x_interp()).1);
    let scaler_t = scale_xt.then(|| standardize(raw.x_transformed()).1);
    let xi = match &scaler {
        Some(s) => s.transform(raw.x_interp())?,
        None => raw.x_interp().clone(),
    };
    let xt = match &scaler_t {
        Some(s) => s.transform(raw.x_transformed())?,
        None => raw.x_transformed().clone(),
    };
    let dataset = DualDataset::new(xi, xt, Some(names.clone()), None)?;
    let meta = ModelMeta {
        config: cfg.clone(),
        scaler,
        scaler_t,
        names,
    };
    info!(
        "training on {} rows, {} features, {} transformed dims; k={}, seeds={:?}, {} epochs",
        dataset.len(),
        dataset.num_features(),
        dataset.transformed_dim(),
        cfg.k,
        cfg.seeds,
        cfg.total_epochs()
    );

    let out = args.out.clone();
    let every = args.checkpoint_every;
    let fitted = fit_multi_seed_observed(&dataset, &cfg, |seed| {
        Box::new(Checkpointer {
            every,
            path: checkpoint_path(&out, seed),
            seed,
            meta: meta.clone(),
        })
    })?;
    for seed in &cfg.seeds {
        let p = checkpoint_path(&out, *seed);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }

    for r in &fitted.reports {
        info!(
            "seed {}: inertia {:.6} (k-means init {:.6}), {:.1}s{}",
            r.seed,
            r.final_inertia,
            r.kmeans_inertia,
            r.wall_time_secs,
            if r.forced_hard_switch { ", forced hard switch" } else { "" }
        );
    }
    let best = fitted.best_report();
    meta.persist(fitted.best.clone(), best.seed).save(&args.out)?;
    info!("saved seed {} to {}", best.seed, args.out.display());

    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut name = args.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".report.json");
        args.out.with_file_name(name)
    });
    let summary = FitSummary {
        best_seed: best.seed,
        best_inertia: best.final_inertia,
        config: &cfg,
        runs: &fitted.reports,
    };
    write_file(&report_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;

    println!("seed={}", best.seed);
    println!("inertia={}", best.final_inertia);
    Ok(())
}

fn check_names(model: &PersistedModel, names: &[String], has_header: bool) {
    if has_header && names != model.feature_names.as_slice() {
        warn!(
            "column names {:?} differ from the training names {:?}; using column order",
            names, model.feature_names
        );
    }
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = PersistedModel::load(&args.model)?;
    let (x, names) = load_input(&args.input)?;
    let xi = model.prepare_interp(&x)?;
    check_names(&model, &names, !args.input.no_header);

    let mut buf = Vec::new();
    if args.soft {
        let w = model.model.assign_batch(&xi)?;
        let header: Vec<String> = (0..model.model.k).map(|c| format!("cluster_{c}")).collect();
        write_csv(&mut buf, &w, Some(&header))?;
    } else {
        let labels = model.model.predict_batch(&xi)?;
        buf.extend_from_slice(b"cluster\n");
        for l in labels {
            buf.extend_from_slice(format!("{l}\n").as_bytes());
        }
    }
    match &args.out {
        Some(p) => write_file(p, &buf),
        None => io::stdout().write_all(&buf).map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let model = PersistedModel::load(&args.model)?;
    let (x, names) = load_input(&args.input)?;
    check_names(&model, &names, !args.input.no_header);
    let xi = model.prepare_interp(&x)?;
    let data = DualDataset::single(xi, Some(model.feature_names.clone()), None)?;
    let shapes = neurcam::explain(&model.model, &data, args.grid_points)?;
    let manifest = export_dir(&shapes, &args.out_dir, model.scaler.as_ref())?;
    info!(
        "wrote {} feature and {} pair files to {}",
        manifest.features.len(),
        manifest.pairs.len(),
        args.out_dir.display()
    );
    for entry in shapes.importance.iter() {
        println!("{}\t{}", entry.term, entry.score);
    }
    Ok(())
}

fn print_scores(pred: &[usize], labels: &[usize]) -> Result<()> {
    let pair = PartitionPair::new(labels, pred)?;
    println!("ari={}", metrics::adjusted_rand(&pair));
    println!("nmi={}", metrics::nmi(&pair));
    println!("acc={}", metrics::unsup_accuracy(&pair));
    Ok(())
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let labels = load_labels(path)?;
    if labels.len() != n {
        return Err(Error::Input(format!(
            "{} has {} labels for {} rows",
            path.display(),
            labels.len(),
            n
        )));
    }
    Ok(labels)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let model = PersistedModel::load(&args.model)?;
    let (x, names) = load_input(&args.input)?;
    check_names(&model, &names, !args.input.no_header);
    let xt = match &args.xt {
        Some(p) => load_matrix(p, args.input.no_header)?,
        None => x.clone(),
    };
    let labels = read_labels(&args.labels, x.rows())?;
    let raw = DualDataset::new(x, xt, Some(model.feature_names.clone()), None)?;
    let data = model.prepare_dataset(&raw)?;
    let pred = model.model.predict_batch(data.x_interp())?;
    print_scores(&pred, &labels)?;
    println!("inertia={}", metrics::normalized_inertia(&data, &model.model)?);
    Ok(())
}

pub fn baseline_kmeans(args: &BaselineArgs) -> Result<()> {
    let mut xt = load_matrix(&args.xt, args.no_header)?;
    if args.standardize {
        xt = standardize(&xt).0;
    }
    let cfg = KmeansConfig {
        k: args.k,
        batch_size: args.batch_size,
        seed: args.seed,
        ..KmeansConfig::default()
    };
    let fit = neurcam::mbk_fit(&xt, &cfg)?;
    let n = xt.rows() as f64;
    for (i, r) in fit.restarts.iter().enumerate() {
        info!(
            "restart {i}: seeding inertia {:.6}, final {:.6} after {} epochs",
            r.seed_inertia / n,
            r.final_inertia / n,
            r.epochs
        );
    }
    let pred = assign_nearest(&xt, &fit.centroids);
    if let Some(p) = &args.labels {
        let labels = read_labels(p, xt.rows())?;
        print_scores(&pred, &labels)?;
    }
    println!("inertia={}", fit.inertia / n);
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.k == 0 || args.d == 0 || args.n < args.k {
        return Err(Error::Config("synth needs k >= 1, d >= 1 and n >= k".into()));
    }
    let (x, labels) = neurcam::synth::gaussian_blobs(args.n, args.d, args.k, args.separation, args.seed);
    let mut buf = Vec::new();
    write_csv(&mut buf, &x, Some(&default_names(args.d)))?;
    write_file(&args.out, &buf)?;
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write_file(&args.labels_out, text.as_bytes())?;
    info!("wrote {} rows to {}", args.n, args.out.display());
    Ok(())
}

