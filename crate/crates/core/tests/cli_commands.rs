use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lgprep::cli;

fn run(args: &[&str]) -> lgprep::Result<String> {
    let mut out = Vec::new();
    let mut full = vec!["lgprep"];
    full.extend_from_slice(args);
    cli::run(full, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn value<'a>(output: &'a str, key: &str) -> &'a str {
    output
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in\n{output}"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    files
}

const COUNTS: &str = "12,12,12/4,4,4/6,6,6";

/// Runs the whole command chain into `root`.
fn pipeline(root: &Path) -> Vec<String> {
    let p = |s: &str| root.join(s).to_str().unwrap().to_string();
    let (data, size) = (p("data"), "32");
    let mlp_model = p("mlp/model.lgpm");
    let augment_input = p("data/train");
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "synth", "--out", &data, "--counts", COUNTS, "--size", size, "--seed", "5",
        ],
        vec!["preprocess", "--data", &data, "--size", size, "--out"],
        vec!["train", "--data", &data, "--size", size, "--out"],
        vec![
            "train", "--data", &data, "--size", size, "--model", "mlp", "--epochs", "4", "--seed",
            "5", "--out",
        ],
        vec!["eval", "--model-file", &mlp_model, "--data", &data, "--out"],
        vec!["ablate", "--data", &data, "--size", size, "--out"],
        vec!["profiles", "--data", &data, "--size", size, "--out"],
        vec![
            "augment",
            "--input",
            &augment_input,
            "--target",
            "50",
            "--seed",
            "5",
            "--out",
        ],
    ];
    let outs = [
        "",
        "features",
        "knn",
        "mlp",
        "eval",
        "ablate",
        "profiles",
        "augmented",
    ];
    commands
        .into_iter()
        .zip(outs)
        .map(|(mut args, out)| {
            let out_dir = p(out);
            if !out.is_empty() {
                args.push(&out_dir);
            }
            run(&args).unwrap()
        })
        .collect()
}

#[test]
fn full_chain_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipeline(dir.path());

    assert_eq!(value(&out[0], "train.instances"), "36");
    assert_eq!(value(&out[0], "test.triangle"), "6");
    let square_dir = dir.path().join("data/validation/square");
    assert_eq!(fs::read_dir(square_dir).unwrap().count(), 4);

    assert_eq!(value(&out[1], "features"), "64");
    let csv = fs::read_to_string(dir.path().join("features/train.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 65);
    assert!(lines.all(|l| l.split(',').count() == 65));

    assert_eq!(value(&out[2], "feature_dim"), "64");
    assert!(value(&out[2], "model_bytes").parse::<usize>().unwrap() > 36 * 64 * 8);
    assert!(dir.path().join("mlp/history.csv").exists());
    assert!(dir.path().join("mlp/size.txt").exists());

    value(&out[4], "test.accuracy").parse::<f64>().unwrap();
    for f in ["report.txt", "metrics.csv"] {
        assert!(dir.path().join("eval").join(f).exists());
    }

    let blocks: Vec<&str> = out[5]
        .lines()
        .filter(|l| l.starts_with("[removed_step="))
        .collect();
    assert_eq!(
        blocks,
        [
            "[removed_step=none]",
            "[removed_step=convolution]",
            "[removed_step=shift]"
        ]
    );

    let px = fs::read_to_string(dir.path().join("profiles/profile_x.csv")).unwrap();
    assert_eq!(px.lines().next().unwrap(), "index,circle,square,triangle");
    assert_eq!(px.lines().count(), 33);
    assert_eq!(value(&out[6], "profile_length"), "32");

    assert_eq!(value(&out[7], "instances_out"), "50");
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = pipeline(a.path());
    let out_b = pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() > 100);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{} differs", k.display());
    }
    // Output paths differ between the runs; everything else must match.
    let strip = |outs: &[String], root: &Path| -> Vec<String> {
        outs.iter()
            .map(|o| o.replace(root.to_str().unwrap(), "<root>"))
            .collect()
    };
    assert_eq!(strip(&out_a, a.path()), strip(&out_b, b.path()));
}

#[test]
fn binary_task_reports_roc() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    run(&[
        "synth",
        "--task",
        "proxy",
        "--out",
        &p("data"),
        "--counts",
        "20,14/6,4/6,4",
        "--size",
        "32",
    ])
    .unwrap();
    run(&[
        "train",
        "--data",
        &p("data"),
        "--out",
        &p("m"),
        "--size",
        "32",
    ])
    .unwrap();
    let out = run(&[
        "eval",
        "--model-file",
        &p("m/model.lgpm"),
        "--data",
        &p("data"),
        "--out",
        &p("e"),
        "--include-train",
    ])
    .unwrap();
    value(&out, "test.auc").parse::<f64>().unwrap();
    assert_eq!(value(&out, "train.accuracy"), "1");
    let roc = fs::read_to_string(dir.path().join("e/roc_test.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n0,0\n"));
    assert!(roc.trim_end().ends_with("1,1"));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    fs::write(
        dir.path().join("cfg.toml"),
        "size = 16\nrepresentation = \"flattened\"\n",
    )
    .unwrap();
    run(&[
        "synth",
        "--out",
        &p("data"),
        "--counts",
        "3,3,3/1,1,1/1,1,1",
        "--size",
        "24",
    ])
    .unwrap();
    let out = run(&[
        "preprocess",
        "--config",
        &p("cfg.toml"),
        "--data",
        &p("data"),
        "--out",
        &p("f"),
    ])
    .unwrap();
    assert_eq!(value(&out, "features"), "256");
    let out = run(&[
        "preprocess",
        "--config",
        &p("cfg.toml"),
        "--data",
        &p("data"),
        "--out",
        &p("g"),
        "--representation",
        "lp",
    ])
    .unwrap();
    assert_eq!(value(&out, "features"), "32");
    fs::write(dir.path().join("bad.toml"), "sise = 16\n").unwrap();
    assert!(run(&[
        "preprocess",
        "--config",
        &p("bad.toml"),
        "--data",
        &p("data"),
        "--out",
        &p("h")
    ])
    .is_err());
}

#[test]
fn errors_for_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    assert!(run(&["train", "--data", &p("nothing"), "--out", &p("o")]).is_err());
    assert!(run(&[
        "eval",
        "--model-file",
        &p("nothing.lgpm"),
        "--data",
        &p("d"),
        "--out",
        &p("o")
    ])
    .is_err());
    assert!(run(&["preprocess", "--data", &p("nothing"), "--out", &p("o")]).is_err());
    assert!(run(&["frobnicate"]).is_err());
}
