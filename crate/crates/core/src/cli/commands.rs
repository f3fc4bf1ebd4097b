use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use super::{
    AblateArgs, AugmentArgs, EvalArgs, PreprocessArgs, ProfilesArgs, RunConfig, SynthArgs,
    SynthTask, TrainArgs,
};
use crate::error::{Error, Result};
use crate::features::{
    extract_dataset, write_feature_csv, FeatureConfig, FeatureKind, FeatureVector, PipelineMode,
};
use crate::imagecore::{
    augment_dataset, load_dataset_dir, write_dataset_dir, GrayImage, LabeledDataset, Split,
};
use crate::learners::{
    fit_mlp, knn_fit, load_model, save_model, ModelBundle, ModelKind, TrainedModel,
};
use crate::metrics::{evaluate, format_table, EvalReport};
use crate::synth::{
    generate_binary_proxy, generate_dataset, ShapeRanges, SynthConfig, REFERENCE_COUNTS,
};

/// Proxy task counts per split, background then object (57% background).
pub const PROXY_COUNTS: [[usize; 2]; 3] = [[342, 258], [114, 86], [114, 86]];

fn emit(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{key}={value}").map_err(|e| Error::io("<stdout>", e))
}

fn emit_block(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Parses `a,b,c/d,e,f/g,h,i` into per-split, per-class counts.
fn parse_counts(text: &str, classes: usize) -> Result<Vec<Vec<usize>>> {
    let splits: Vec<&str> = text.split('/').collect();
    if splits.len() != 3 {
        return Err(Error::invalid(format!(
            "--counts needs train/validation/test groups, got {text:?}"
        )));
    }
    splits
        .iter()
        .map(|group| {
            let counts = group
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::invalid(format!("bad count {c:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if counts.len() != classes {
                return Err(Error::invalid(format!(
                    "expected {classes} class counts per split, got {group:?}"
                )));
            }
            Ok(counts)
        })
        .collect()
}

fn report_split_sizes(out: &mut dyn Write, ds: &LabeledDataset<GrayImage>) -> Result<()> {
    let split = ds.split();
    emit(out, &format!("{split}.instances"), ds.len())?;
    for (name, count) in ds.class_names().iter().zip(ds.class_counts()) {
        emit(out, &format!("{split}.{name}"), count)?;
    }
    Ok(())
}

pub fn synth(
    a: &SynthArgs,
    cfg: &RunConfig,
    file_stroke: Option<f64>,
    out: &mut dyn Write,
) -> Result<()> {
    let datasets: Vec<LabeledDataset<GrayImage>> = match a.task {
        SynthTask::Shapes => {
            let counts = match &a.counts {
                Some(text) => {
                    let parsed = parse_counts(text, 3)?;
                    let mut fixed = [[0usize; 3]; 3];
                    for (dst, src) in fixed.iter_mut().zip(parsed) {
                        dst.copy_from_slice(&src);
                    }
                    fixed
                }
                None => REFERENCE_COUNTS,
            };
            let stroke_probability = a.stroke_probability.or(file_stroke).unwrap_or(0.0);
            if !(0.0..=1.0).contains(&stroke_probability) {
                return Err(Error::invalid("stroke probability must lie in [0, 1]"));
            }
            let synth_cfg = SynthConfig {
                counts,
                size: cfg.size,
                seed: cfg.seed,
                ranges: ShapeRanges {
                    stroke_probability,
                    ..ShapeRanges::default()
                },
            };
            generate_dataset(&synth_cfg)?.into_iter().collect()
        }
        SynthTask::Proxy => {
            let counts = match &a.counts {
                Some(text) => parse_counts(text, 2)?,
                None => PROXY_COUNTS.iter().map(|c| c.to_vec()).collect(),
            };
            Split::ALL
                .iter()
                .zip(&counts)
                .map(|(&split, c)| generate_binary_proxy([c[0], c[1]], cfg.size, cfg.seed, split))
                .collect::<Result<_>>()?
        }
    };
    emit(out, "seed", cfg.seed)?;
    emit(out, "size", cfg.size)?;
    for ds in &datasets {
        write_dataset_dir(ds, a.out.join(ds.split().as_str()))?;
        report_split_sizes(out, ds)?;
    }
    emit(out, "out", a.out.display())
}

pub fn augment(a: &AugmentArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset_dir(&a.input, Split::Train)?;
    let grown = augment_dataset(&ds, a.target, cfg.seed)?;
    write_dataset_dir(&grown, &a.out)?;
    emit(out, "seed", cfg.seed)?;
    emit(out, "instances_in", ds.len())?;
    emit(out, "instances_out", grown.len())?;
    for (name, count) in grown.class_names().iter().zip(grown.class_counts()) {
        emit(out, &format!("class.{name}"), count)?;
    }
    Ok(())
}

/// Loads `data/<split>` resized to size×size, or `None` when absent.
fn load_split(data: &Path, split: Split, size: usize) -> Result<Option<LabeledDataset<GrayImage>>> {
    let dir = data.join(split.as_str());
    if !dir.is_dir() {
        return Ok(None);
    }
    let started = Instant::now();
    let ds = load_dataset_dir(&dir, split)?;
    let ds = ds.par_try_map(|img| {
        if img.width() == size && img.height() == size {
            Ok(img.clone())
        } else {
            img.resize(size, size)
        }
    })?;
    log::info!(
        "loaded {} {split} images in {:.2?}",
        ds.len(),
        started.elapsed()
    );
    Ok(Some(ds))
}

fn require_split(data: &Path, split: Split, size: usize) -> Result<LabeledDataset<GrayImage>> {
    load_split(data, split, size)?.ok_or_else(|| {
        Error::invalid(format!(
            "missing {} directory under {}",
            split.as_str(),
            data.display()
        ))
    })
}

fn check_classes(expected: &[String], ds: &LabeledDataset<GrayImage>) -> Result<()> {
    if ds.class_names() != expected {
        return Err(Error::invalid(format!(
            "{} split has classes {:?}, expected {:?}",
            ds.split(),
            ds.class_names(),
            expected
        )));
    }
    Ok(())
}

pub fn preprocess(a: &PreprocessArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    create_dir(&a.out)?;
    let mut found = 0;
    emit(out, "representation", cfg.features.kind)?;
    emit(out, "mode", cfg.features.mode)?;
    emit(out, "omega", cfg.features.omega)?;
    for split in Split::ALL {
        let Some(images) = load_split(&a.data, split, cfg.size)? else {
            continue;
        };
        found += 1;
        let features = extract_dataset(&images, &cfg.features)?;
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &features).map_err(|e| Error::io("<buffer>", e))?;
        let path = a.out.join(format!("{}.csv", split.as_str()));
        write_file(&path, &buf)?;
        emit(out, &format!("{split}.rows"), features.len())?;
        emit(
            out,
            "features",
            features.items().first().map_or(0, |(f, _)| f.len()),
        )?;
    }
    if found == 0 {
        return Err(Error::invalid(format!(
            "no train/validation/test directories under {}",
            a.data.display()
        )));
    }
    Ok(())
}

fn empty_like(
    ds: &LabeledDataset<FeatureVector>,
    split: Split,
) -> Result<LabeledDataset<FeatureVector>> {
    LabeledDataset::new(Vec::new(), ds.class_names().to_vec(), split)
}

struct Fitted {
    model: TrainedModel,
    history_csv: Option<Vec<u8>>,
}

fn fit(
    cfg: &RunConfig,
    train: &LabeledDataset<FeatureVector>,
    val: Option<&LabeledDataset<FeatureVector>>,
) -> Result<Fitted> {
    let started = Instant::now();
    let fitted = match cfg.model {
        ModelKind::Knn => Fitted {
            model: TrainedModel::Knn(knn_fit(train, cfg.k)?),
            history_csv: None,
        },
        ModelKind::Mlp => {
            let empty;
            let val = match val {
                Some(v) => v,
                None => {
                    empty = empty_like(train, Split::Validation)?;
                    &empty
                }
            };
            let (model, history) = fit_mlp(train, val, &cfg.train)?;
            let mut csv = Vec::new();
            history
                .write_csv(&mut csv)
                .map_err(|e| Error::io("<buffer>", e))?;
            Fitted {
                model: TrainedModel::Mlp(model),
                history_csv: Some(csv),
            }
        }
    };
    log::info!("fitted {} in {:.2?}", cfg.model, started.elapsed());
    Ok(fitted)
}

pub fn train(a: &TrainArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let train_images = require_split(&a.data, Split::Train, cfg.size)?;
    let val_images = load_split(&a.data, Split::Validation, cfg.size)?;
    if let Some(v) = &val_images {
        check_classes(train_images.class_names(), v)?;
    }
    let train = extract_dataset(&train_images, &cfg.features)?;
    let val = val_images
        .as_ref()
        .map(|v| extract_dataset(v, &cfg.features))
        .transpose()?;
    let fitted = fit(cfg, &train, val.as_ref())?;
    let bundle = ModelBundle {
        model: fitted.model,
        features: cfg.features,
        image_size: cfg.size,
        class_names: train.class_names().to_vec(),
    };
    create_dir(&a.out)?;
    let bytes = save_model(&bundle, a.out.join("model.lgpm"))?;
    if let Some(csv) = &fitted.history_csv {
        write_file(&a.out.join("history.csv"), csv)?;
    }
    let mut size_report = String::new();
    let _ = writeln!(size_report, "model={}", cfg.model);
    let _ = writeln!(size_report, "representation={}", cfg.features.kind);
    let _ = writeln!(size_report, "mode={}", cfg.features.mode);
    let _ = writeln!(size_report, "feature_dim={}", bundle.model.input_dim());
    let _ = writeln!(size_report, "train_instances={}", train.len());
    let _ = writeln!(size_report, "model_bytes={bytes}");
    write_file(&a.out.join("size.txt"), size_report.as_bytes())?;
    emit(out, "seed", cfg.seed)?;
    emit_block(out, &size_report)?;
    if let Some(val) = &val {
        if !val.is_empty() {
            emit_block(
                out,
                &evaluate(&bundle.model, val)?.to_key_values("validation."),
            )?;
        }
    }
    Ok(())
}

fn evaluate_images(bundle: &ModelBundle, images: &LabeledDataset<GrayImage>) -> Result<EvalReport> {
    check_classes(&bundle.class_names, images)?;
    let features = extract_dataset(images, &bundle.features)?;
    evaluate(&bundle.model, &features)
}

fn model_label(kind: ModelKind, features: &FeatureConfig) -> String {
    let rep = match features.kind {
        FeatureKind::LineProfile => "LP",
        FeatureKind::Flattened => "flattened",
    };
    let model = match kind {
        ModelKind::Knn => "kNN",
        ModelKind::Mlp => "MLP",
    };
    format!("{rep} + {model}")
}

fn metrics_csv(rows: &[(Split, EvalReport)]) -> String {
    let mut csv = String::from("split,metric,value\n");
    for (split, report) in rows {
        for line in report.to_key_values("").lines() {
            if let Some((k, v)) = line.split_once('=') {
                // Confusion rows hold commas; quote them.
                if v.contains(',') {
                    let _ = writeln!(csv, "{split},{k},\"{v}\"");
                } else {
                    let _ = writeln!(csv, "{split},{k},{v}");
                }
            }
        }
    }
    csv
}

pub fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load_model(&a.model_file)?;
    let mut splits = Vec::new();
    if a.include_train {
        splits.push(Split::Train);
    }
    splits.extend([Split::Validation, Split::Test]);
    let mut reports = Vec::new();
    for split in splits {
        match load_split(&a.data, split, bundle.image_size)? {
            Some(images) => reports.push((split, evaluate_images(&bundle, &images)?)),
            None if split == Split::Test => {
                return Err(Error::invalid(format!(
                    "missing test directory under {}",
                    a.data.display()
                )))
            }
            None => {}
        }
    }
    create_dir(&a.out)?;
    let mut columns: Vec<(String, Option<EvalReport>)> = Vec::new();
    if !a.include_train {
        columns.push(("train".into(), None));
    }
    columns.extend(
        reports
            .iter()
            .map(|(s, r)| (s.as_str().to_string(), Some(r.clone()))),
    );
    let label = model_label(bundle.model.kind(), &bundle.features);
    let mut text = format_table(
        &format!("Results ({})", bundle.features.mode),
        &[(label, columns)],
    );
    for (split, report) in &reports {
        text.push('\n');
        text.push_str(&report.to_key_values(&format!("{split}.")));
        if let Some(roc) = report.roc_csv() {
            write_file(
                &a.out.join(format!("roc_{}.csv", split.as_str())),
                roc.as_bytes(),
            )?;
        }
    }
    write_file(&a.out.join("report.txt"), text.as_bytes())?;
    write_file(&a.out.join("metrics.csv"), metrics_csv(&reports).as_bytes())?;
    emit(out, "model", bundle.model.kind())?;
    emit(out, "representation", bundle.features.kind)?;
    for (split, report) in &reports {
        emit_block(out, &report.to_key_values(&format!("{split}.")))?;
    }
    Ok(())
}

pub fn ablate(a: &AblateArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    if cfg.features.kind != FeatureKind::LineProfile {
        return Err(Error::invalid(
            "ablation applies to the lp representation only",
        ));
    }
    let train_images = require_split(&a.data, Split::Train, cfg.size)?;
    let val_images = load_split(&a.data, Split::Validation, cfg.size)?;
    let test_images = require_split(&a.data, Split::Test, cfg.size)?;
    check_classes(train_images.class_names(), &test_images)?;
    if let Some(v) = &val_images {
        check_classes(train_images.class_names(), v)?;
    }
    create_dir(&a.out)?;
    let mut table_rows = Vec::new();
    let mut blocks = String::new();
    for mode in PipelineMode::ALL {
        let mode_cfg = RunConfig {
            features: FeatureConfig {
                mode,
                ..cfg.features
            },
            ..cfg.clone()
        };
        let train = extract_dataset(&train_images, &mode_cfg.features)?;
        let val = val_images
            .as_ref()
            .map(|v| extract_dataset(v, &mode_cfg.features))
            .transpose()?;
        let test = extract_dataset(&test_images, &mode_cfg.features)?;
        let fitted = fit(&mode_cfg, &train, val.as_ref())?;
        let mut columns = vec![("train".to_string(), None)];
        let _ = writeln!(blocks, "[removed_step={}]", mode.removed_step());
        let _ = writeln!(blocks, "mode={mode}");
        if let Some(val) = &val {
            let report = evaluate(&fitted.model, val)?;
            blocks.push_str(&report.to_key_values("validation."));
            columns.push(("validation".to_string(), Some(report)));
        }
        let report = evaluate(&fitted.model, &test)?;
        blocks.push_str(&report.to_key_values("test."));
        columns.push(("test".to_string(), Some(report)));
        blocks.push('\n');
        table_rows.push((
            format!(
                "{} ({})",
                model_label(cfg.model, &mode_cfg.features),
                mode.removed_step()
            ),
            columns,
        ));
    }
    let mut text = format_table("Ablation (row label names the removed step)", &table_rows);
    text.push('\n');
    text.push_str(&blocks);
    write_file(&a.out.join("ablation.txt"), text.as_bytes())?;
    emit(out, "seed", cfg.seed)?;
    emit(out, "model", cfg.model)?;
    emit_block(out, &blocks)
}

/// One profile per class.
pub type Profiles = Vec<Vec<f64>>;

/// Per-class means of the row profile and the column profile.
pub fn mean_profiles(ds: &LabeledDataset<FeatureVector>) -> Result<(Profiles, Profiles)> {
    let dim = ds
        .items()
        .first()
        .map(|(f, _)| f.len())
        .ok_or_else(|| Error::invalid("cannot average profiles of an empty dataset"))?;
    let n = dim / 2;
    let classes = ds.num_classes();
    let mut sums = vec![vec![0.0; dim]; classes];
    for (fv, label) in ds.items() {
        for (s, v) in sums[*label].iter_mut().zip(fv.values()) {
            *s += v;
        }
    }
    let counts = ds.class_counts();
    let mut xs = Vec::with_capacity(classes);
    let mut ys = Vec::with_capacity(classes);
    for (sum, &count) in sums.iter().zip(&counts) {
        let mean: Vec<f64> = if count == 0 {
            vec![f64::NAN; dim]
        } else {
            sum.iter().map(|s| s / count as f64).collect()
        };
        xs.push(mean[..n].to_vec());
        ys.push(mean[n..].to_vec());
    }
    Ok((xs, ys))
}

fn profile_csv(names: &[String], profiles: &[Vec<f64>]) -> String {
    let mut csv = String::from("index");
    for name in names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    let len = profiles.first().map_or(0, Vec::len);
    for i in 0..len {
        let _ = write!(csv, "{i}");
        for p in profiles {
            let _ = write!(csv, ",{}", p[i]);
        }
        csv.push('\n');
    }
    csv
}

pub fn profiles(a: &ProfilesArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    if cfg.features.kind != FeatureKind::LineProfile {
        return Err(Error::invalid("profiles need the lp representation"));
    }
    let images = require_split(&a.data, a.split, cfg.size)?;
    let features = extract_dataset(&images, &cfg.features)?;
    let (xs, ys) = mean_profiles(&features)?;
    create_dir(&a.out)?;
    let names = features.class_names();
    write_file(
        &a.out.join("profile_x.csv"),
        profile_csv(names, &xs).as_bytes(),
    )?;
    write_file(
        &a.out.join("profile_y.csv"),
        profile_csv(names, &ys).as_bytes(),
    )?;
    emit(out, "split", a.split)?;
    emit(out, "classes", names.join(","))?;
    emit(out, "profile_length", xs.first().map_or(0, Vec::len))?;
    emit(out, "instances", features.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_parsing() {
        assert_eq!(
            parse_counts("1,2,3/4,5,6/7,8,9", 3).unwrap(),
            vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]]
        );
        assert!(parse_counts("1,2/3,4", 2).is_err());
        assert!(parse_counts("1,2,3/4,5,6/7,8", 3).is_err());
        assert!(parse_counts("1,x/1,1/1,1", 2).is_err());
    }

    #[test]
    fn mean_profile_split() {
        let names = vec!["a".to_string(), "b".to_string()];
        let fv = |v: Vec<f64>| FeatureVector::new(v, FeatureKind::LineProfile).unwrap();
        let ds = LabeledDataset::new(
            vec![
                (fv(vec![1.0, 2.0, 3.0, 4.0]), 0),
                (fv(vec![3.0, 2.0, 1.0, 0.0]), 0),
                (fv(vec![5.0, 5.0, 5.0, 5.0]), 1),
            ],
            names,
            Split::Train,
        )
        .unwrap();
        let (xs, ys) = mean_profiles(&ds).unwrap();
        assert_eq!(xs, vec![vec![2.0, 2.0], vec![5.0, 5.0]]);
        assert_eq!(ys, vec![vec![2.0, 2.0], vec![5.0, 5.0]]);
    }
}
