use std::fmt;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use emotion_forge::alignment::{align_face, LandmarkSet};
use emotion_forge::augment::{default_spec, variants};
use emotion_forge::dataset::{load_manifest, load_samples, LabeledImage, TaskMode};
use emotion_forge::eval::{evaluate, latency_report};
use emotion_forge::exec::Exec;
use emotion_forge::imaging::{read_pgm, write_pgm};
use emotion_forge::nn::{Architecture, ModelParams};
use emotion_forge::stream::{
    directory_frames, load_frame, parse_frame_list, FrameRecord, Streamer, RECORD_HEADER,
};
use emotion_forge::train::{load_model, save_model, Checkpoint, TrainConfig, TrainError, Trainer};
use log::{info, warn};

use crate::{Command, TrainArgs};

/// Exit status classes: 1 usage, 2 bad input data, 3 internal failure.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Data(e) | Failure::Internal(e) => write!(f, "{e:#}"),
        }
    }
}

trait Classify<T> {
    fn data(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Align { input, out } => cmd_align(&input, &out).map(|n| {
            println!("aligned {n} images");
        }),
        Command::Augment {
            input,
            manifest,
            out,
        } => cmd_augment(input.as_deref(), manifest.as_deref(), &out).map(|n| {
            println!("wrote {n} images");
        }),
        Command::Train(args) => cmd_train(&args),
        Command::Eval {
            manifest,
            model,
            mode,
        } => cmd_eval(&manifest, &model, mode),
        Command::Infer {
            image,
            landmarks,
            model,
            mode,
        } => cmd_infer(&image, landmarks.as_deref(), &model, mode),
        Command::Stream {
            frames,
            model,
            mode,
            alpha,
            out,
        } => cmd_stream(frames.as_deref(), &model, mode, alpha, out.as_deref()),
    }
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))
        .data()?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.context("directory listing failed").data()?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .data()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .data()
}

fn align_one(path: &Path) -> anyhow::Result<Vec<u8>> {
    let sidecar = LandmarkSet::sidecar_path(path);
    if !sidecar.exists() {
        return Err(anyhow!("no landmark sidecar {}", sidecar.display()));
    }
    let img = read_pgm(&std::fs::read(path)?)?;
    let lm = LandmarkSet::parse(&std::fs::read_to_string(&sidecar)?)?;
    Ok(write_pgm(&align_face(&img, &lm)?.image))
}

pub fn cmd_align(input: &Path, out: &Path) -> Result<usize, Failure> {
    let files = pgm_files(input)?;
    create_dir(out)?;
    let mut done = 0;
    for path in &files {
        match align_one(path) {
            Ok(bytes) => {
                write_file(&out.join(path.file_name().expect("listed file")), &bytes)?;
                done += 1;
            }
            Err(e) => warn!("skipping {}: {e:#}", path.display()),
        }
    }
    if done == 0 {
        return Err(Failure::Data(anyhow!(
            "no image in {} could be aligned",
            input.display()
        )));
    }
    Ok(done)
}

fn file_stem(path: &Path) -> Result<String, Failure> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Failure::Data(anyhow!("unusable file name {}", path.display())))
}

/// Manifest lines with the image field split off: `(image, rest)`.
fn manifest_entries(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| match l.split_once(',') {
            Some((img, rest)) => (img.trim().to_string(), rest.trim().to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect()
}

pub fn cmd_augment(
    input: Option<&Path>,
    manifest: Option<&Path>,
    out: &Path,
) -> Result<usize, Failure> {
    let spec = default_spec();
    let (images, labels): (Vec<PathBuf>, Vec<Option<String>>) = match (manifest, input) {
        (Some(m), _) => {
            let text = std::fs::read_to_string(m)
                .with_context(|| format!("cannot read {}", m.display()))
                .data()?;
            let base = m.parent().unwrap_or(Path::new(""));
            manifest_entries(&text)
                .into_iter()
                .map(|(img, rest)| (base.join(img), Some(rest)))
                .unzip()
        }
        (None, Some(dir)) => pgm_files(dir)?.into_iter().map(|p| (p, None)).unzip(),
        (None, None) => {
            return Err(Failure::Usage(
                "augment needs an input directory or --manifest".into(),
            ))
        }
    };
    let mut stems = std::collections::HashSet::new();
    for p in &images {
        if !stems.insert(file_stem(p)?) {
            return Err(Failure::Data(anyhow!(
                "two inputs share the file stem of {}",
                p.display()
            )));
        }
    }
    create_dir(out)?;
    let mut lines = String::new();
    let mut written = 0;
    for (path, label) in images.iter().zip(&labels) {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .data()?;
        let img = read_pgm(&bytes)
            .with_context(|| path.display().to_string())
            .data()?;
        let stem = file_stem(path)?;
        for (tag, variant) in variants(&img, &spec).internal()? {
            let name = tag.file_name(&stem);
            write_file(&out.join(&name), &write_pgm(&variant))?;
            written += 1;
            if let Some(rest) = label {
                lines.push_str(&format!("{name},{rest}\n"));
            }
        }
    }
    if manifest.is_some() {
        write_file(&out.join("manifest.csv"), lines.as_bytes())?;
    }
    Ok(written)
}

fn load_set(manifest: &Path, mode: TaskMode) -> Result<Vec<LabeledImage>, Failure> {
    let samples = load_manifest(manifest, mode).data()?;
    if samples.is_empty() {
        return Err(Failure::Data(anyhow!(
            "{} lists no samples",
            manifest.display()
        )));
    }
    load_samples(&samples, Exec::default()).data()
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::Nn(_) | TrainError::ShapeMismatch(_) => Failure::Internal(e.into()),
        TrainError::InvalidConfig(m) => Failure::Usage(m),
        other => Failure::Data(other.into()),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let train = load_set(&args.manifest, args.mode)?;
    let val = match &args.val {
        Some(v) => load_set(v, args.mode)?,
        None => Vec::new(),
    };
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path).map_err(train_failure)?;
            if ckpt.config.mode != args.mode {
                return Err(Failure::Data(anyhow!(
                    "checkpoint was trained in {} mode",
                    ckpt.config.mode
                )));
            }
            Trainer::from_checkpoint(ckpt).map_err(train_failure)?
        }
        None => {
            let config = TrainConfig {
                learning_rate: args.lr,
                momentum: args.momentum,
                batch_size: args.batch_size,
                max_iterations: args.iterations,
                seed: args.seed,
                checkpoint_every: args.checkpoint_every,
                mode: args.mode,
                ..TrainConfig::default()
            };
            let side = train[0].image.width();
            Trainer::new(config, &Architecture::emo_net_with_side(side)).map_err(train_failure)?
        }
    };
    let until = trainer.config().max_iterations;
    trainer
        .run_until(until, &train, &val, |c| {
            if let Some(v) = c.history.validation.last().filter(|v| v.iteration == c.iteration) {
                match v.rmse {
                    Some(r) => info!(
                        "iteration {}: validation loss {:.4}, accuracy {:.4}, rmse {r:.4}",
                        v.iteration, v.loss, v.accuracy
                    ),
                    None => info!(
                        "iteration {}: validation loss {:.4}, accuracy {:.4}",
                        v.iteration, v.loss, v.accuracy
                    ),
                }
            } else {
                info!(
                    "iteration {}: training loss {:.4}",
                    c.iteration,
                    c.history.train_loss.last().copied().unwrap_or(f64::NAN)
                );
            }
            if let Some(path) = &args.checkpoint {
                c.save(path)?;
            }
            Ok(())
        })
        .map_err(train_failure)?;
    save_model(trainer.params(), args.mode, &args.out)
        .with_context(|| format!("cannot save {}", args.out.display()))
        .data()?;
    let history = args
        .history
        .clone()
        .unwrap_or_else(|| args.out.with_extension("history"));
    write_file(&history, trainer.history().loss_log().as_bytes())?;
    println!(
        "trained {} iterations; model {}; history {}",
        trainer.iteration(),
        args.out.display(),
        history.display()
    );
    Ok(())
}

fn open_model(
    path: &Path,
    requested: Option<TaskMode>,
) -> Result<(ModelParams<f32>, TaskMode, TaskMode), Failure> {
    let (params, model_mode) = load_model(path)
        .with_context(|| format!("cannot load model {}", path.display()))
        .data()?;
    Ok((params, model_mode, requested.unwrap_or(model_mode)))
}

pub fn cmd_eval(manifest: &Path, model: &Path, mode: Option<TaskMode>) -> Result<(), Failure> {
    let (params, model_mode, mode) = open_model(model, mode)?;
    if model_mode != mode {
        return Err(Failure::Data(anyhow!(
            "model has a {model_mode} head but {mode} evaluation was requested"
        )));
    }
    let set = load_set(manifest, mode)?;
    let e = evaluate(&params, &set, mode, Exec::default()).data()?;
    print!("{}", e.confusion);
    println!("samples {}", e.confusion.total());
    println!("accuracy {:.4}", e.confusion.accuracy());
    if let Some(r) = e.rmse {
        println!("rmse {r:.4}");
    }
    println!("loss {:.4}", e.loss);
    let latency = latency_report(&params, &set).internal()?;
    println!("latency {latency}");
    Ok(())
}

fn write_records(
    records: impl Iterator<Item = Result<FrameRecord, Failure>>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(
            std::fs::File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .data()?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    writeln!(w, "{RECORD_HEADER}").internal()?;
    for r in records {
        writeln!(w, "{}", r?.to_line()).internal()?;
    }
    w.flush().internal()
}

pub fn cmd_infer(
    image: &Path,
    landmarks: Option<&Path>,
    model: &Path,
    mode: Option<TaskMode>,
) -> Result<(), Failure> {
    let (params, model_mode, mode) = open_model(model, mode)?;
    let mut s = Streamer::new(&params, model_mode, mode, 1.0).data()?;
    let frame = load_frame(image, landmarks).map_err(|m| Failure::Data(anyhow!(m)))?;
    let rec = s.process(Ok(frame)).internal()?;
    write_records(std::iter::once(Ok(rec)), None)
}

pub fn cmd_stream(
    frames: Option<&Path>,
    model: &Path,
    mode: Option<TaskMode>,
    alpha: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let (params, model_mode, mode) = open_model(model, mode)?;
    let mut s = Streamer::new(&params, model_mode, mode, alpha).data()?;
    let sources: Vec<(PathBuf, Option<PathBuf>)> = match frames {
        Some(dir) => directory_frames(dir)
            .with_context(|| format!("cannot list {}", dir.display()))
            .data()?
            .into_iter()
            .map(|p| (p, None))
            .collect(),
        None => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .context("cannot read frame list from stdin")
                .data()?;
            parse_frame_list(&text, Path::new(""))
        }
    };
    write_records(
        sources
            .iter()
            .map(|(img, lm)| s.process(load_frame(img, lm.as_deref())).internal()),
        out,
    )
}
