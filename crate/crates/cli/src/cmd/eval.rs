use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Map, Value};
use tfd_sed::checkpoint;
use tfd_sed::data::{eval_set, read_strong, write_predictions, DataLayout};
use tfd_sed::eval::{anova_oneway, ordering, tukey_hsd, Anova, Event};
use tfd_sed::infer::{detections, evaluate, predict};
use tfd_sed::train::{decode_params, eval_batch};

use crate::cmd::train::dataset_classes;
use crate::cmd::{create_dir, write_text};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset root as written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Strong-labelled split to score.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report PSDS1.
    #[arg(long)]
    pub psds1: bool,
    /// Report class-wise F1.
    #[arg(long)]
    pub classwise_f1: bool,
    /// Glob of further checkpoints; runs are grouped by directory.
    #[arg(long)]
    pub runs: Option<String>,
    /// One-way ANOVA and Tukey HSD orderings across run groups.
    #[arg(long, requires = "runs")]
    pub anova: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory; defaults to the checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Scores of one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub name: String,
    pub group: String,
    pub psds1: f64,
    pub macro_f1: f64,
    /// `None` for classes without reference events.
    pub classwise_f1: Vec<Option<f64>>,
}

/// Group of a run: its directory name with a trailing seed index removed,
/// or the parent directory when the run directory is only a seed index.
pub fn group_label(path: &Path) -> String {
    let name = |p: Option<&Path>| {
        p.and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let dir = path.parent();
    let own = name(dir);
    let is_index = |s: &str| {
        let digits = s.strip_prefix("seed").unwrap_or(s);
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    if is_index(&own) {
        return name(dir.and_then(Path::parent));
    }
    for sep in ['-', '_'] {
        if let Some((head, tail)) = own.rsplit_once(sep) {
            if is_index(tail) && !head.is_empty() {
                return head.to_string();
            }
        }
    }
    own
}

fn run_name(path: &Path) -> String {
    let parent = path.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned());
    let file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match parent {
        Some(p) if !p.is_empty() => format!("{}/{}", p, file),
        _ => file,
    }
}

/// Scores `ckpt` on a split and returns the detections at the F1 threshold.
pub fn score(ckpt: &Path, data: &Path, split: &str) -> CliResult<(RunMetrics, Vec<Event>)> {
    let (cfg, net, store) = checkpoint::load(ckpt)?;
    let layout = DataLayout::new(data);
    let classes = dataset_classes(&layout, &cfg)?;
    let manifest = read_strong(&layout.manifest(split), &classes)?;
    let set = eval_set(&layout.audio(split), &manifest, &cfg.frontend)?;
    let posts = predict(&net, &store, &set.features, eval_batch(&cfg))?;
    let p = decode_params(&cfg);
    let r = evaluate(&set.files, &posts, &set.truth, set.hours, cfg.model.classes, &cfg.eval, &p)?;
    let events = detections(&set.files, &posts, cfg.eval.f1_threshold, &p)?;
    Ok((
        RunMetrics {
            name: run_name(ckpt),
            group: group_label(ckpt),
            psds1: r.psds.score,
            macro_f1: r.macro_f1,
            classwise_f1: r.classwise.iter().map(|c| c.as_ref().map(|s| s.f1)).collect(),
        },
        events,
    ))
}

/// ANOVA over PSDS1 and Tukey orderings per metric across run groups.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub groups: Vec<String>,
    pub psds1: Anova,
    pub psds1_ordering: String,
    /// `(class, anova, ordering)` for classes scored in every run.
    pub classes: Vec<(String, Anova, String)>,
}

pub fn compare(runs: &[RunMetrics], class_names: &[String], alpha: f64) -> CliResult<Comparison> {
    let mut groups: Vec<String> = runs.iter().map(|r| r.group.clone()).collect();
    groups.sort();
    groups.dedup();
    if groups.len() < 2 {
        return Err(CliError::Usage("--anova needs runs from at least two groups".into()));
    }
    let collect = |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Option<Vec<Vec<f64>>> {
        groups
            .iter()
            .map(|g| runs.iter().filter(|r| &r.group == g).map(f).collect::<Option<Vec<f64>>>())
            .collect()
    };
    let psds = collect(&|r| Some(r.psds1)).expect("psds is always present");
    if psds.iter().map(Vec::len).sum::<usize>() <= groups.len() {
        return Err(CliError::Usage("--anova needs more runs than groups".into()));
    }
    let psds1 = anova_oneway(&psds)?;
    let psds1_ordering = ordering(&groups, &tukey_hsd(&psds, alpha)?);
    let mut classes = Vec::new();
    for (c, name) in class_names.iter().enumerate() {
        if let Some(v) = collect(&|r| r.classwise_f1.get(c).copied().flatten()) {
            classes.push((name.clone(), anova_oneway(&v)?, ordering(&groups, &tukey_hsd(&v, alpha)?)));
        }
    }
    Ok(Comparison {
        groups,
        psds1,
        psds1_ordering,
        classes,
    })
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn opt(v: Option<f64>) -> String {
    v.map_or("nan".into(), |v| format!("{:.6}", v))
}

/// Which metrics to write.
#[derive(Clone, Copy, Debug)]
pub struct Selection {
    pub psds1: bool,
    pub classwise_f1: bool,
}

fn run_text(m: &RunMetrics, class_names: &[String], sel: Selection, prefix: &str) -> String {
    let mut s = String::new();
    if sel.psds1 {
        s.push_str(&format!("{}psds1\t{:.6}\n", prefix, m.psds1));
    }
    if sel.classwise_f1 {
        s.push_str(&format!("{}macro_f1\t{:.6}\n", prefix, m.macro_f1));
        for (name, f) in class_names.iter().zip(&m.classwise_f1) {
            s.push_str(&format!("{}f1.{}\t{}\n", prefix, name, opt(*f)));
        }
    }
    s
}

fn run_json(m: &RunMetrics, class_names: &[String], sel: Selection) -> Value {
    let mut o = Map::new();
    o.insert("name".into(), json!(m.name));
    o.insert("group".into(), json!(m.group));
    if sel.psds1 {
        o.insert("psds1".into(), num(m.psds1));
    }
    if sel.classwise_f1 {
        o.insert("macro_f1".into(), num(m.macro_f1));
        let per: Map<String, Value> = class_names
            .iter()
            .zip(&m.classwise_f1)
            .map(|(n, f)| (n.clone(), f.map_or(Value::Null, num)))
            .collect();
        o.insert("classwise_f1".into(), Value::Object(per));
    }
    Value::Object(o)
}

fn anova_json(a: &Anova, order: &str) -> Value {
    json!({
        "f": num(a.f),
        "p": num(a.p),
        "df_between": a.df_between,
        "df_within": a.df_within,
        "ordering": order,
    })
}

/// Text and JSON renderings of the metric files.
pub fn render(
    main: Option<&RunMetrics>,
    runs: &[RunMetrics],
    cmp: Option<&Comparison>,
    class_names: &[String],
    split: &str,
    sel: Selection,
) -> (String, String) {
    let mut text = format!("split\t{}\n", split);
    let mut root = Map::new();
    root.insert("split".into(), json!(split));
    if let Some(m) = main {
        text.push_str(&format!("checkpoint\t{}\n", m.name));
        text.push_str(&run_text(m, class_names, sel, ""));
        root.insert("checkpoint".into(), run_json(m, class_names, sel));
    }
    if !runs.is_empty() {
        for r in runs {
            text.push_str(&run_text(r, class_names, sel, &format!("run.{}.", r.name)));
        }
        root.insert(
            "runs".into(),
            Value::Array(runs.iter().map(|r| run_json(r, class_names, sel)).collect()),
        );
    }
    if let Some(c) = cmp {
        let a = &c.psds1;
        text.push_str(&format!(
            "anova.psds1\tF={:.6}\tp={:.6e}\tdf=({},{})\n",
            a.f, a.p, a.df_between, a.df_within
        ));
        text.push_str(&format!("tukey.psds1\t{}\n", c.psds1_ordering));
        let mut per = Map::new();
        for (name, a, order) in &c.classes {
            text.push_str(&format!("tukey.f1.{}\tp={:.6e}\t{}\n", name, a.p, order));
            per.insert(name.clone(), anova_json(a, order));
        }
        root.insert(
            "comparison".into(),
            json!({
                "groups": c.groups,
                "psds1": anova_json(&c.psds1, &c.psds1_ordering),
                "classwise_f1": Value::Object(per),
            }),
        );
    }
    let json = serde_json::to_string_pretty(&Value::Object(root)).expect("plain JSON values");
    (text, json + "\n")
}

pub fn run(a: &EvalArgs) -> CliResult<()> {
    if a.checkpoint.is_none() && a.runs.is_none() {
        return Err(CliError::Usage("give --checkpoint or --runs".into()));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    let sel = if a.psds1 || a.classwise_f1 {
        Selection {
            psds1: a.psds1,
            classwise_f1: a.classwise_f1,
        }
    } else {
        Selection {
            psds1: true,
            classwise_f1: true,
        }
    };
    let class_names = tfd_sed::data::ClassMap::read(&DataLayout::new(&a.data).classes())?
        .names()
        .to_vec();
    let out = a
        .out
        .clone()
        .or_else(|| a.checkpoint.as_ref().and_then(|c| c.parent().map(Path::to_path_buf)))
        .unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;

    let main = match &a.checkpoint {
        Some(c) => {
            let (m, events) = score(c, &a.data, &a.split)?;
            let classes = tfd_sed::data::ClassMap::new(class_names.clone())?;
            write_predictions(&out.join("predictions.tsv"), &events, &classes)?;
            Some(m)
        }
        None => None,
    };
    let mut runs = Vec::new();
    if let Some(pattern) = &a.runs {
        let mut paths: Vec<PathBuf> = glob::glob(pattern)
            .map_err(|e| CliError::Usage(format!("bad --runs pattern: {}", e)))?
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Sed(tfd_sed::SedError::io(e.path(), std::io::Error::other(e.to_string()))))?;
        paths.sort();
        if paths.is_empty() {
            return Err(CliError::Usage(format!("--runs `{}` matched nothing", pattern)));
        }
        for p in &paths {
            runs.push(score(p, &a.data, &a.split)?.0);
        }
    }
    let cmp = if a.anova {
        Some(compare(&runs, &class_names, a.alpha)?)
    } else {
        None
    };
    let (text, json) = render(main.as_ref(), &runs, cmp.as_ref(), &class_names, &a.split, sel);
    print!("{}", text);
    write_text(&out.join("metrics.txt"), &text)?;
    write_text(&out.join("metrics.json"), &json)?;
    Ok(())
}
