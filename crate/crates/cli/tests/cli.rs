mod common;

use std::path::{Path, PathBuf};

use common::*;
use tgc_core::synth::{multimodal_corpus, separable_corpus};
use tgc_core::Checkpoint;

const TOY: &str = r#"{"id":"d1","text":"the cat sat on the mat with a hat","label":"animal"}
{"id":"d2","text":"a dog ran in the park after the cat","label":"animal"}
{"id":"d3","text":"stocks fell as the market closed lower","label":"finance"}
{"id":"d4","text":"the bank raised interest rates on loans","label":"finance"}
{"id":"d5","text":"a bird sang in the tree near the cat","label":"animal"}
"#;

const SMALL: &str = "d_embed = 8\nlayer_widths = 6,4\nd_fuse = 4\nbatch_size = 2\nmode = gnn-only\n";

fn toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.jsonl");
    std::fs::write(&path, TOY).unwrap();
    path
}

fn train_toy(dir: &Path, extra: &str) -> (PathBuf, std::process::Output) {
    let cfg = write_config(dir, "toy.cfg", &format!("{SMALL}{extra}"));
    let model = dir.join("toy.tgcm");
    let out = tgc(&["train", "--data", p(&toy(dir)), "--config", p(&cfg), "--out-model", p(&model)]);
    (model, out)
}

fn assert_error_line(out: &std::process::Output, exit: i32, error_code: &str) {
    assert_eq!(code(out), exit, "stderr: {}", stderr(out));
    let err = stderr(out);
    let line = err.trim_end();
    assert!(!line.contains('\n'), "{line}");
    assert!(line.starts_with(&format!("error: {error_code}:")), "{line}");
}

#[test]
fn preprocess_writes_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("two.jsonl");
    std::fs::write(&data, "{\"id\":\"a\",\"text\":\"red apples\",\"label\":\"x\"}\n{\"id\":\"b\",\"text\":\"green pears\",\"label\":\"y\"}\n").unwrap();
    let out_dir = dir.path().join("pre");
    let out = tgc(&["preprocess", "--data", p(&data), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("vocab.tsv").exists());
    assert!(out_dir.join("corpus.tsv").exists());
    let text = stdout(&out);
    assert_eq!(report_value(&text, "docs").as_deref(), Some("2"));
    assert!(report_value(&text, "vocab_size").is_some());
    assert!(report_value(&text, "mean_graph_nodes").is_some());
}

#[test]
fn preprocess_names_the_bad_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(&data, "{\"id\":\"ok\",\"text\":\"fine\",\"label\":\"x\"}\n{\"id\":\"broken-7\",\"label\":\"y\"}\n").unwrap();
    let out = tgc(&["preprocess", "--data", p(&data), "--out", p(&dir.path().join("o"))]);
    assert_error_line(&out, 2, "ParseError");
    assert!(stderr(&out).contains("broken-7"));
    assert!(stderr(&out).contains("line 2"));
}

#[test]
fn preprocess_rejects_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.jsonl");
    std::fs::write(&data, "").unwrap();
    let out = tgc(&["preprocess", "--data", p(&data), "--out", p(&dir.path().join("o"))]);
    assert_error_line(&out, 2, "EmptyCorpus");
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "widnow_size = 3\n");
    let out = tgc(&["train", "--data", p(&toy(dir.path())), "--config", p(&cfg), "--out-model", p(&dir.path().join("m"))]);
    assert_error_line(&out, 2, "ConfigError");
}

#[test]
fn train_writes_checkpoint_and_one_loss_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let (model, out) = train_toy(dir.path(), "epochs = 5\n");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(model.exists());
    let report = std::fs::read_to_string(format!("{}.report.tsv", model.display())).unwrap();
    let losses = tgc_cli::report::parse_tsv(&report)
        .into_iter()
        .filter(|(k, _)| k.starts_with("loss.epoch"))
        .count();
    assert_eq!(losses, 5);
    assert_eq!(report_value(&report, "seed").as_deref(), Some("0"));
    assert_eq!(report_value(&report, "config.epochs").as_deref(), Some("5"));
}

#[test]
fn train_reports_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |s: String| -> Vec<(String, String)> {
        tgc_cli::report::parse_tsv(&s)
            .into_iter()
            .filter(|(k, _)| k != tgc_cli::report::WALL_TIME_KEY)
            .collect()
    };
    let (model, out) = train_toy(dir.path(), "epochs = 4\nseed = 9\n");
    assert_eq!(code(&out), 0);
    let first = strip(std::fs::read_to_string(format!("{}.report.tsv", model.display())).unwrap());
    let (_, out) = train_toy(dir.path(), "epochs = 4\nseed = 9\n");
    assert_eq!(code(&out), 0);
    let second = strip(std::fs::read_to_string(format!("{}.report.tsv", model.display())).unwrap());
    assert_eq!(first, second);
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // 1e6 saturates the softmax and stalls at the probability clamp; 1e30 overflows f32
    let (_, out) = train_toy(dir.path(), "epochs = 5\nlr0 = 1e30\n");
    assert_eq!(code(&out), 3, "stdout {} stderr {}", stdout(&out), stderr(&out));
    let err = stderr(&out);
    assert!(err.starts_with("error: NonFinite"), "{err}");
    assert!(err.contains("non-finite"), "{err}");
}

#[test]
fn eval_after_training_fits_the_toy_set() {
    let dir = tempfile::tempdir().unwrap();
    let docs = separable_corpus(60, 40, 3);
    let data = write_docs(dir.path(), "sep", &docs, false);
    let cfg = write_config(dir.path(), "sep.cfg", &format!("{SMALL}epochs = 30\nlr0 = 0.1\nbatch_size = 8\n"));
    let model = dir.path().join("sep.tgcm");
    let out = tgc(&["train", "--data", p(&data), "--config", p(&cfg), "--out-model", p(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = dir.path().join("eval.tsv");
    let out = tgc(&["eval", "--data", p(&data), "--model", p(&model), "--report", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let acc: f64 = report_value(&stdout(&out), "accuracy").unwrap().parse().unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
    assert_eq!(std::fs::read_to_string(&report).unwrap(), stdout(&out));
}

#[test]
fn zeroed_classifier_scores_the_first_class_share() {
    let dir = tempfile::tempdir().unwrap();
    let (model, out) = train_toy(dir.path(), "epochs = 2\n");
    assert_eq!(code(&out), 0);
    let mut ckpt = Checkpoint::load(&model).unwrap();
    ckpt.model.params.head.w.fill_zero();
    ckpt.model.params.head.b.fill_zero();
    ckpt.save(&model).unwrap();
    let out = tgc(&["eval", "--data", p(&toy(dir.path())), "--model", p(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // uniform probabilities tie; the lowest class index ("animal") wins
    let acc: f64 = report_value(&stdout(&out), "accuracy").unwrap().parse().unwrap();
    assert_eq!(acc, 3.0 / 5.0);
    assert_eq!(report_value(&stdout(&out), "confusion.finance").as_deref(), Some("2,0"));
}

#[test]
fn eval_rejects_unseen_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (model, out) = train_toy(dir.path(), "epochs = 1\n");
    assert_eq!(code(&out), 0);
    let data = dir.path().join("new.jsonl");
    std::fs::write(&data, "{\"id\":\"z\",\"text\":\"the cat\",\"label\":\"sports\"}\n").unwrap();
    let out = tgc(&["eval", "--data", p(&data), "--model", p(&model)]);
    assert_error_line(&out, 2, "UnknownLabel");
    assert!(stderr(&out).contains("sports"));
}

fn multimodal_model(dir: &Path) -> PathBuf {
    let data = write_docs(dir, "mm", &multimodal_corpus(40, 3, 1), true);
    let cfg = write_config(dir, "mm.cfg", "d_embed = 8\nlayer_widths = 6,4\nd_fuse = 4\nepochs = 3\nbatch_size = 8\n");
    let model = dir.join("mm.tgcm");
    let out = tgc(&["train", "--data", p(&data), "--config", p(&cfg), "--out-model", p(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    model
}

#[test]
fn predict_prints_label_and_normalized_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let model = multimodal_model(dir.path());
    let args = ["predict", "--model", p(&model), "--text", "w001 w002 w065", "--modality", "meta=[0.5,-1.0,2.0]"];
    let out = tgc(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let label = lines[0].strip_prefix("label\t").unwrap();
    assert!(label == "c0" || label == "c1");
    let probs: Vec<f64> = lines[1..]
        .iter()
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            assert!(k.starts_with("prob.c"));
            assert_eq!(v.split_once('.').unwrap().1.len(), 6);
            v.parse().unwrap()
        })
        .collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6, "{probs:?}");

    assert_eq!(stdout(&tgc(&args)), text);

    let vec_file = dir.path().join("q.f32");
    tgc_cli::dataset::write_vector(&vec_file, &[0.5, -1.0, 2.0]).unwrap();
    let from_file = tgc(&["predict", "--model", p(&model), "--text", "w001 w002 w065", "--modality", &format!("meta={}", p(&vec_file))]);
    assert_eq!(stdout(&from_file), text);
}

#[test]
fn predict_requires_declared_modalities() {
    let dir = tempfile::tempdir().unwrap();
    let model = multimodal_model(dir.path());
    let out = tgc(&["predict", "--model", p(&model), "--text", "w001 w002"]);
    assert_error_line(&out, 2, "ModalityError");
    let out = tgc(&["predict", "--model", p(&model), "--text", "w001", "--modality", "meta=[1.0]"]);
    assert_error_line(&out, 2, "ModalityError");
}

#[test]
fn gradcheck_passes_and_catches_injected_errors() {
    let out = tgc(&["gradcheck", "--seed", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let max: f64 = report_value(&stdout(&out), "max_rel_error").unwrap().parse().unwrap();
    assert!(max < 1e-4);

    let out = tgc(&["gradcheck", "--inject-grad-error"]);
    assert_error_line(&out, 1, "GradcheckFailed");
    assert!(stderr(&out).contains("classifier.b"));
}

#[test]
fn ablate_requires_modalities() {
    let dir = tempfile::tempdir().unwrap();
    let out = tgc(&["ablate", "--data", p(&toy(dir.path()))]);
    assert_error_line(&out, 2, "NoModalities");
}

#[test]
fn ablate_emits_a_three_row_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_docs(dir.path(), "ab", &multimodal_corpus(40, 3, 2), false);
    let cfg = write_config(dir.path(), "ab.cfg", "d_embed = 8\nlayer_widths = 6,4\nd_fuse = 4\nepochs = 2\nbatch_size = 8\n");
    let report = dir.path().join("ab.tsv");
    let out = tgc(&["ablate", "--data", p(&data), "--config", p(&cfg), "--report", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&report).unwrap();
    let table: Vec<&str> = text.split("\n\n").nth(1).unwrap().lines().collect();
    assert_eq!(table[0], "model\tacc\tf1");
    let rows: Vec<&str> = table[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(rows, ["GNN-MMC", "GNN", "MMC"]);
    for mode in ["full", "gnn-only", "mmc-only"] {
        assert!(report_value(&text, &format!("{mode}.accuracy")).is_some(), "{mode}");
    }
}

#[test]
fn missing_data_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tgc(&["eval", "--data", p(&dir.path().join("nope.jsonl")), "--model", p(&dir.path().join("m"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error: "));
}
