//! End-to-end checks of the installed binary: every subcommand, the file
//! formats it reads and writes, and the exit-code contract (0 ok, 1 usage,
//! 2 missing file, 3 bad data).

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn urdukit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urdukit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn urdukit_stdin(dir: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_urdukit"))
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary spawns");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().expect("binary finishes")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Enough repeated Urdu text to train a few hundred merges.
fn training_lines() -> String {
    let words = [
        "پاکستان", "اردو", "زبان", "تعلیم", "حکومت", "عوام", "شہر", "کتاب", "علم", "دنیا",
        "خبر", "قوم",
    ];
    let suffixes = ["", "وں", "ی", "یں"];
    let mut out = String::new();
    for i in 0..60 {
        let mut line = Vec::new();
        for j in 0..8 {
            let w = words[(i * 3 + j * 5 + i * j) % words.len()];
            line.push(format!("{w}{}", suffixes[(i + j) % suffixes.len()]));
        }
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn corpus_csv() -> String {
    let mut rows = String::from("data,source,category\n");
    for (i, line) in training_lines().lines().enumerate() {
        let cat = if i % 2 == 0 { "news" } else { "blogs" };
        rows.push_str(&format!("{line},web,{cat}\n"));
    }
    rows
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let help = urdukit(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    let text = ok(&help);
    for sub in ["clean", "dedup", "train-tokenizer", "pack", "budget", "pipeline"] {
        assert!(text.contains(sub), "--help does not mention {sub}");
    }
    assert_eq!(code(&urdukit(dir.path(), &["--version"])), 0);
    // unknown flags are usage errors
    assert_eq!(code(&urdukit(dir.path(), &["clean", "--nope"])), 1);
}

#[test]
fn clean_text_mode_denoises_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("raw.txt"),
        "میرا نمبر 12345 ہے اور یہ متن ہے\n\
         یہاں\u{200B}چھپا ہوا حرف اور قیمت ۲۵۰ روپے ہے\n\
         http://spam.example.com\n",
    )
    .unwrap();
    ok(&urdukit(
        dir.path(),
        &["clean", "--in", "raw.txt", "--out", "clean.txt", "--report", "report.csv"],
    ));
    let cleaned = fs::read_to_string(dir.path().join("clean.txt")).unwrap();
    assert_eq!(cleaned.lines().count(), 2, "the all-noise line must be dropped");
    assert!(!cleaned.contains(|c: char| c.is_ascii_digit()));
    assert!(!cleaned.contains('\u{200B}'));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("counter,value\n"));
    assert!(report.lines().count() > 3);

    // cleaning its own output changes nothing
    ok(&urdukit(dir.path(), &["clean", "--in", "clean.txt", "--out", "again.txt"]));
    assert_eq!(fs::read_to_string(dir.path().join("again.txt")).unwrap(), cleaned);
}

#[test]
fn clean_csv_mode_preserves_metadata() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("in.csv"),
        "data,source,category\n\
         اچھا صاف متن یہاں ہے,web,news\n\
         نمبر 99 والا متن,mirror,blogs\n\
         http://only-noise.example.com,web,junk\n",
    )
    .unwrap();
    ok(&urdukit(dir.path(), &["clean", "--in", "in.csv", "--out", "out.csv"]));
    let out = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "data,source,category");
    assert_eq!(lines.len(), 3, "two rows survive, the noise-only row is gone");
    assert!(lines[1].ends_with("web,news"));
    assert!(lines[2].ends_with("mirror,blogs"));
    assert!(!out.contains("99"));
}

#[test]
fn dedup_removes_exact_and_near_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let base: Vec<String> = (0..240).map(|j| format!("لفظ{j}")).collect();
    let long = base.join(" ");
    let near = format!("{long} اضافی");
    let distinct = "یہ ایک الگ دستاویز ہے جس کا اپنا مختلف متن ہے";
    let other: Vec<String> = (0..100).map(|j| format!("دوسرا{j}")).collect();
    let mut csv = String::from("data,source,category\n");
    for row in [&long, &near, &distinct.to_string(), &distinct.to_string(), &other.join(" ")] {
        csv.push_str(&format!("{row},web,news\n"));
    }
    fs::write(dir.path().join("in.csv"), csv).unwrap();
    ok(&urdukit(
        dir.path(),
        &["dedup", "--in", "in.csv", "--out", "out.csv", "--report", "report.csv"],
    ));
    let out = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(out.lines().count(), 4, "five rows in, three out");
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "kept_id,removed_id,est_jaccard");
    assert_eq!(lines.len(), 3);
    // row numbers are 1-based; the padded copy of row 1 is longer, so it
    // becomes the representative, while exact copies keep the first row
    assert!(lines.iter().any(|l| l.starts_with("2,1,")), "near duplicate: {report}");
    assert!(lines.iter().any(|l| l.starts_with("3,4,")), "exact duplicate: {report}");
}

#[test]
fn tokenizer_train_encode_decode_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), training_lines()).unwrap();
    ok(&urdukit(
        dir.path(),
        &["train-tokenizer", "--in", "corpus.txt", "--vocab-size", "330", "--out", "tok.vocab"],
    ));

    let sample = "پاکستان میں اردو زبان";
    fs::write(dir.path().join("sample.txt"), sample).unwrap();
    let ids = ok(&urdukit(dir.path(), &["encode", "--vocab", "tok.vocab", "--in", "sample.txt"]));
    assert!(ids.trim().split(' ').all(|t| t.parse::<u32>().is_ok()), "bad ids: {ids}");

    // decode reads ids from standard input and must restore the bytes
    let back = urdukit_stdin(dir.path(), &["decode", "--vocab", "tok.vocab"], &ids);
    assert_eq!(ok(&back), sample);

    // encode also reads standard input
    let ids2 = urdukit_stdin(dir.path(), &["encode", "--vocab", "tok.vocab"], sample);
    assert_eq!(ok(&ids2), ids);
}

#[test]
fn eval_tokenizer_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), training_lines()).unwrap();
    ok(&urdukit(
        dir.path(),
        &["train-tokenizer", "--in", "corpus.txt", "--vocab-size", "330", "--out", "tok.vocab"],
    ));
    ok(&urdukit(
        dir.path(),
        &[
            "eval-tokenizer",
            "--vocab",
            "tok.vocab",
            "--corpus",
            "corpus.txt",
            "--out",
            "report.csv",
            "--plot-data",
            "plot.csv",
        ],
    ));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "name,fertility,avg_token_count,tokens_per_second,coverage");
    assert!(lines.iter().any(|l| l.starts_with("tok,")));
    assert!(lines.iter().any(|l| l.starts_with("bytes,")));
    let plot = fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert!(plot.starts_with("name,avg_token_count\n"));
    assert_eq!(plot.lines().count(), 3, "trained vocab plus the byte baseline");
}

#[test]
fn pack_stats_and_split_work_together() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), training_lines()).unwrap();
    fs::write(dir.path().join("corpus.csv"), corpus_csv()).unwrap();
    ok(&urdukit(
        dir.path(),
        &["train-tokenizer", "--in", "corpus.txt", "--vocab-size", "330", "--out", "tok.vocab"],
    ));
    ok(&urdukit(
        dir.path(),
        &[
            "pack",
            "--in",
            "corpus.csv",
            "--vocab",
            "tok.vocab",
            "--out-dir",
            "shards",
            "--shard-tokens",
            "600",
        ],
    ));
    let shard_count = fs::read_dir(dir.path().join("shards"))
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".shard")
        })
        .count();
    assert!(shard_count > 1, "a 600-token cap must produce several shards");

    ok(&urdukit(
        dir.path(),
        &["stats", "--in", "corpus.csv", "--vocab", "tok.vocab", "--out", "stats.csv"],
    ));
    let stats = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert!(stats.starts_with("category,rows,bytes,share_pct,tokens\n"));
    assert!(stats.contains("news,"));
    assert!(stats.contains("blogs,"));

    let first = ok(&urdukit(
        dir.path(),
        &["split", "--shards", "shards", "--val-fraction", "0.5", "--seed", "7"],
    ));
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "shard,split");
    assert_eq!(lines.len(), shard_count + 1);
    assert!(lines[1..].iter().all(|l| l.ends_with(",train") || l.ends_with(",val")));
    assert!(lines[1..].iter().any(|l| l.ends_with(",val")));
    // the deal is a pure function of the file list and the seed
    let second = ok(&urdukit(
        dir.path(),
        &["split", "--shards", "shards", "--val-fraction", "0.5", "--seed", "7"],
    ));
    assert_eq!(first, second);
}

#[test]
fn schedule_lookup_and_curve_dump() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("plan.kv"), "peak_lr = 6e-4\nwarmup_tokens = 171e6\n").unwrap();
    let at = ok(&urdukit(dir.path(), &["schedule", "--plan", "plan.kv", "--at-tokens", "171e6"]));
    assert_eq!(at.trim(), "0.0006", "warmup must end at the peak rate");

    let dump = ok(&urdukit(dir.path(), &["schedule", "--plan", "plan.kv", "--dump", "csv"]));
    let lines: Vec<&str> = dump.lines().collect();
    assert_eq!(lines[0], "tokens,lr");
    assert_eq!(lines.len(), 102, "the full curve samples 101 points");
    assert!(lines[1].starts_with("0,"));

    // exactly one of the two modes must be chosen
    assert_eq!(code(&urdukit(dir.path(), &["schedule", "--plan", "plan.kv"])), 1);
}

#[test]
fn budget_prints_the_estimate_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("shape.kv"),
        "n_params = 134e6\nn_layers = 12\nd_model = 768\nn_heads = 12\nd_head = 64\nn_ctx = 1024\nvocab_size = 32000\n",
    )
    .unwrap();
    fs::write(dir.path().join("plan.kv"), "total_tokens = 16.5e9\nepochs = 3\n").unwrap();
    let table = ok(&urdukit(
        dir.path(),
        &["budget", "--shape", "shape.kv", "--plan", "plan.kv", "--hw", "v100_cluster"],
    ));
    assert!(table.starts_with("Estimates\n"));
    for label in [
        "Model size",
        "FLOPs per step",
        "Total compute",
        "GPU type",
        "Time per epoch",
        "Total energy",
        "Carbon footprint",
        "Estimated cost",
    ] {
        assert!(table.contains(label), "missing row {label:?} in:\n{table}");
    }
    assert!(table.contains("134.0M params"));
    assert!(table.contains("v100-cluster x4"));

    // an unknown preset name is treated as a profile path
    assert_eq!(
        code(&urdukit(dir.path(), &["budget", "--shape", "shape.kv", "--plan", "plan.kv", "--hw", "absent.kv"])),
        2
    );
}

#[test]
fn eval_metrics_scores_multiple_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("gold.csv"),
        "text,label\nغلط لکھا,درست لکھا\nیہ جملہ,یہ جملہ\nتیسرا سوال,تیسرا جواب\n",
    )
    .unwrap();
    fs::write(dir.path().join("run_a.txt"), "درست لکھا\nیہ جملہ\nتیسرا جواب\n").unwrap();
    fs::write(dir.path().join("run_b.txt"), "درست لکھا\nغلط متن\nکچھ اور\n").unwrap();
    ok(&urdukit(
        dir.path(),
        &[
            "eval-metrics",
            "--task",
            "sc",
            "--gold",
            "gold.csv",
            "--pred",
            "run_a.txt",
            "--pred",
            "run_b.txt",
            "--out",
            "scores.csv",
        ],
    ));
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    let lines: Vec<&str> = scores.lines().collect();
    assert_eq!(lines[0], "task,run,examples,accuracy,bleu,rouge_l");
    assert!(lines[1].starts_with("sc,1,3,100,100,1"), "perfect first run: {scores}");
    assert!(lines[2].starts_with("sc,2,3,33."), "one-of-three second run: {scores}");
    assert!(lines[3].starts_with("sc,mean,3,66."), "averaged row: {scores}");

    assert_eq!(
        code(&urdukit(dir.path(), &["eval-metrics", "--task", "nope", "--gold", "gold.csv", "--pred", "run_a.txt", "--out", "x.csv"])),
        1
    );
}

#[test]
fn pipeline_runs_and_validate_config_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::from("data,source,category\n");
    for i in 0..10 {
        rows.push_str(&format!(
            "اردو زبان میں لکھی گئی دستاویز نمبر {i} جس میں کچھ مشترک الفاظ ہیں,web,news\n"
        ));
    }
    rows.push_str("اردو زبان میں لکھی گئی دستاویز نمبر 0 جس میں کچھ مشترک الفاظ ہیں,web,news\n");
    fs::write(dir.path().join("in.csv"), rows).unwrap();
    let model = "[model]\nn_params = 134e6\nn_layers = 12\nd_model = 768\nn_heads = 12\n\
                 d_head = 64\nn_ctx = 1024\nvocab_size = 300\n";
    let config = |out: &str| {
        format!(
            "[run]\ninput = in.csv\nout_dir = {out}\nseed = 7\n\n\
             [tokenizer]\nvocab_size = 300\n\n[pack]\ntokens_per_shard = 256\n\n\
             {model}\n[hardware]\npreset = v100_cluster\n"
        )
    };
    fs::write(dir.path().join("run.conf"), config("out_a")).unwrap();
    assert_eq!(code(&urdukit(dir.path(), &["validate-config", "run.conf"])), 0);
    ok(&urdukit(dir.path(), &["pipeline", "run.conf"]));
    assert!(dir.path().join("out_a/manifest.json").exists());
    assert!(dir.path().join("out_a/tokenizer.vocab").exists());

    // a second run over the same input produces identical artifacts
    fs::write(dir.path().join("rerun.conf"), config("out_b")).unwrap();
    ok(&urdukit(dir.path(), &["pipeline", "rerun.conf"]));
    for f in ["cleaned.csv", "deduped.csv", "tokenizer.vocab", "stats.csv"] {
        assert_eq!(
            fs::read(dir.path().join("out_a").join(f)).unwrap(),
            fs::read(dir.path().join("out_b").join(f)).unwrap(),
            "{f} differs between reruns"
        );
    }

    // problems are listed with their line numbers, one per line
    fs::write(
        dir.path().join("bad.conf"),
        "[run]\ninput = in.csv\nout_dir = out_c\n\n[mystery]\nx = 1\n\n[pack]\ntokens_per_shard = 0\n",
    )
    .unwrap();
    let bad = urdukit(dir.path(), &["validate-config", "bad.conf"]);
    assert_eq!(code(&bad), 1);
    let listing = String::from_utf8(bad.stdout).unwrap();
    assert!(listing.contains("line 5"), "unknown section location: {listing}");

    // a structurally valid config whose input file is absent is an
    // environment problem, not a usage one
    fs::write(
        dir.path().join("missing.conf"),
        format!("[run]\ninput = absent.csv\nout_dir = out_d\n\n{model}\n[hardware]\npreset = v100_cluster\n"),
    )
    .unwrap();
    assert_eq!(code(&urdukit(dir.path(), &["pipeline", "missing.conf"])), 2);
}

#[test]
fn bad_data_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), training_lines()).unwrap();
    ok(&urdukit(
        dir.path(),
        &["train-tokenizer", "--in", "corpus.txt", "--vocab-size", "300", "--out", "tok.vocab"],
    ));
    // not token ids at all
    let garbage = urdukit_stdin(dir.path(), &["decode", "--vocab", "tok.vocab"], "abc");
    assert_eq!(code(&garbage), 3);
    // a well-formed id the vocabulary does not contain
    let unknown = urdukit_stdin(dir.path(), &["decode", "--vocab", "tok.vocab"], "999999");
    assert_eq!(code(&unknown), 3);
}
