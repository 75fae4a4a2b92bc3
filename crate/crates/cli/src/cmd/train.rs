use std::path::{Path, PathBuf};

use clap::Args;
use tfd_sed::checkpoint;
use tfd_sed::config::RunConfig;
use tfd_sed::data::{
    eval_set, read_strong, read_unlabeled, read_weak, strong_clips, unlabeled_clips, weak_clips, ClassMap, DataLayout,
    LabelGrid,
};
use tfd_sed::train::{train, EpochLog, TrainData};

use crate::cmd::{create_dir, load_config, write_text};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset root as written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for checkpoints and the log.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

/// Class list of a dataset, checked against the model head.
pub fn dataset_classes(layout: &DataLayout, cfg: &RunConfig) -> CliResult<ClassMap> {
    let classes = ClassMap::read(&layout.classes())?;
    if classes.len() != cfg.model.classes {
        return Err(CliError::Usage(format!(
            "dataset has {} classes, model.classes = {}",
            classes.len(),
            cfg.model.classes
        )));
    }
    Ok(classes)
}

pub fn label_grid(cfg: &RunConfig) -> LabelGrid {
    let fe = &cfg.frontend;
    LabelGrid {
        classes: cfg.model.classes,
        frames: fe.n_frames(fe.clip_samples()),
        frame_seconds: fe.frame_seconds(),
        time_pool: cfg.model.time_pool(),
    }
}

/// Loads every training subset present under `root`; the validation split
/// is optional.
pub fn load_training(root: &Path, cfg: &RunConfig) -> CliResult<TrainData> {
    let layout = DataLayout::new(root);
    let classes = dataset_classes(&layout, cfg)?;
    let fe = &cfg.frontend;
    let strong = read_strong(&layout.manifest("strong"), &classes)?;
    let weak = read_weak(&layout.manifest("weak"), &classes)?;
    let unlabeled = read_unlabeled(&layout.manifest("unlabeled"))?;
    let validation = if layout.manifest("validation").exists() {
        let v = read_strong(&layout.manifest("validation"), &classes)?;
        Some(eval_set(&layout.audio("validation"), &v, fe)?)
    } else {
        None
    };
    Ok(TrainData {
        strong: strong_clips(&layout.audio("strong"), &strong, fe, label_grid(cfg))?,
        weak: weak_clips(&layout.audio("weak"), &weak, fe, cfg.model.classes)?,
        unlabeled: unlabeled_clips(&layout.audio("unlabeled"), &unlabeled, fe)?,
        validation,
    })
}

pub fn run(a: &TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = load_training(&a.data, &cfg)?;
    eprintln!(
        "training on {} strong, {} weak, {} unlabeled clips",
        data.strong.len(),
        data.weak.len(),
        data.unlabeled.len()
    );
    create_dir(&a.out)?;
    write_text(&a.out.join("config.cfg"), &cfg.serialize())?;
    println!("{}", EpochLog::HEADER);
    let out = train(&cfg, &data, |row| println!("{}", row.line()))?;

    let mut log = String::from(EpochLog::HEADER);
    log.push('\n');
    for row in &out.log {
        log.push_str(&row.line());
        log.push('\n');
    }
    write_text(&a.out.join("train_log.tsv"), &log)?;
    checkpoint::save(&a.out.join("student.ckpt"), &cfg, &out.student)?;
    checkpoint::save(&a.out.join("teacher.ckpt"), &cfg, &out.teacher)?;
    Ok(())
}
