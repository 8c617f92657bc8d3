#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tgc_cli::dataset::write_vector;
use tgc_core::synth::SynthDoc;

pub fn tgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgc"))
        .args(args)
        .env("TGC_THREADS", "1")
        .output()
        .expect("run tgc")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Writes docs as JSON lines, class names `c<label>`. Modality vectors go to
/// `<stem>_vec/<id>.f32` files when `files` is set, inline otherwise.
pub fn write_docs(dir: &Path, stem: &str, docs: &[SynthDoc], files: bool) -> PathBuf {
    let vec_dir = dir.join(format!("{stem}_vec"));
    if files {
        std::fs::create_dir_all(&vec_dir).unwrap();
    }
    let mut out = String::new();
    for d in docs {
        let mut rec = serde_json::json!({
            "id": d.id,
            "text": d.text,
            "label": format!("c{}", d.label),
        });
        if let Some(m) = &d.modality {
            let src = if files {
                write_vector(&vec_dir.join(format!("{}.f32", d.id)), m).unwrap();
                serde_json::json!(format!("{stem}_vec/{}.f32", d.id))
            } else {
                serde_json::json!(m)
            };
            rec["modalities"] = serde_json::json!({ "meta": src });
        }
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    let path = dir.join(format!("{stem}.jsonl"));
    std::fs::write(&path, out).unwrap();
    path
}

pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// `key<TAB>value` lines of a report, table excluded.
pub fn report_value(text: &str, key: &str) -> Option<String> {
    tgc_cli::report::parse_tsv(text)
        .into_iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
}
