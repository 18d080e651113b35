use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prepsense::corpus::write_instances_tsv;
use prepsense::features::PrepInstance;
use prepsense::EmbeddingTable;
use tempfile::TempDir;

fn psd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psd"))
        .args(args)
        .output()
        .expect("spawn psd")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two prepositions over a tiny vocabulary where the sense follows the right
/// context word's group.
struct Fixture {
    dir: TempDir,
    vectors: PathBuf,
    train: PathBuf,
    test: PathBuf,
    raw: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let groups: [(&str, [f64; 4]); 2] = [("x", [1.0, 0.1, 0.0, 0.2]), ("y", [0.0, 0.2, 1.0, 0.1])];
    let mut rows = Vec::new();
    for (g, base) in &groups {
        for i in 0..6 {
            let mut v = base.to_vec();
            v[1] += 0.05 * i as f64;
            v[3] -= 0.03 * i as f64;
            rows.push((format!("{g}{i}"), v));
        }
    }
    for (i, w) in ["the", "a", "in", "on", "sat"].iter().enumerate() {
        rows.push((w.to_string(), vec![0.3, 0.3 + 0.1 * i as f64, 0.3, -0.2]));
    }
    let table = EmbeddingTable::from_rows(4, rows).unwrap().table;
    let vectors = dir.path().join("vectors.txt");
    table.save(&vectors).unwrap();

    let make = |n: usize, tag: &str| -> Vec<PrepInstance> {
        (0..n)
            .map(|i| {
                let prep = if i % 2 == 0 { "in" } else { "on" };
                let (g, sense) = if (i / 2) % 2 == 0 { ("x", "S1") } else { ("y", "S2") };
                let tokens: Vec<String> = [
                    "the",
                    &format!("{g}{}", i % 6),
                    prep,
                    "a",
                    &format!("{g}{}", (i + 1) % 6),
                ]
                .iter()
                .map(|t| t.to_string())
                .collect();
                PrepInstance::new(format!("{tag}{i}"), tokens, 2, Some(format!("{prep}_{sense}"))).unwrap()
            })
            .collect()
    };
    let train = dir.path().join("train.tsv");
    let test = dir.path().join("test.tsv");
    write_instances_tsv(&train, &make(48, "tr")).unwrap();
    write_instances_tsv(&test, &make(16, "te")).unwrap();

    let raw = dir.path().join("raw.txt");
    fs::write(&raw, "the x1 in a x2\nthe y3 on a y4\nnothing here\n").unwrap();
    Fixture {
        dir,
        vectors,
        train,
        test,
        raw,
    }
}

fn knn_tune(f: &Fixture, model: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "knn",
        "tune",
        "--embeddings",
        s(&f.vectors),
        "--instances",
        s(&f.train),
        "--model",
        s(model),
        "--k",
        "1,3",
        "--k-left",
        "1,2",
        "--k-right",
        "1,2",
    ];
    args.extend_from_slice(extra);
    psd(&args)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn help_exits_zero() {
    let out = psd(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("knn") && text.contains("cluster"));
    assert_eq!(code(&psd(&["knn", "tune", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let out = psd(&["knn", "tune", "--instances", "x.tsv", "--model", "m"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--embeddings"));
    assert_eq!(code(&psd(&["no-such-command"])), 1);
    assert_eq!(
        code(&psd(&[
            "--jobs",
            "0",
            "features",
            "--embeddings",
            "a",
            "--instances",
            "b",
            "--out",
            "c"
        ])),
        1
    );
}

#[test]
fn missing_input_exits_two_and_names_the_file() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.txt");
    let out = psd(&[
        "features",
        "--embeddings",
        s(&missing),
        "--instances",
        s(&missing),
        "--out",
        s(&dir.path().join("f.tsv")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("absent.txt"), "{}", stderr(&out));
}

#[test]
fn knn_tune_is_reproducible() {
    let f = fixture();
    let a = f.dir.path().join("a");
    let b = f.dir.path().join("b");
    let out = knn_tune(&f, &a, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&knn_tune(&f, &b, &[])), 0);
    let files = dir_bytes(&a);
    let names: Vec<&str> = files.iter().map(|x| x.0.as_str()).collect();
    assert_eq!(names, ["in.knn.tsv", "on.knn.tsv"]);
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn knn_and_cluster_round_trip_through_model_directories() {
    let f = fixture();
    let knn = f.dir.path().join("knn");
    let report = f.dir.path().join("knn_eval.tsv");
    assert_eq!(code(&knn_tune(&f, &knn, &[])), 0);
    let out = psd(&[
        "knn",
        "eval",
        "--embeddings",
        s(&f.vectors),
        "--instances",
        s(&f.test),
        "--model",
        s(&knn),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let tsv = fs::read_to_string(&report).unwrap();
    assert!(tsv.starts_with("evaluation\tcondition\tmetric\tvalue\tn\tskipped\n"));
    assert!(report.with_extension("txt").exists());

    let clusters = f.dir.path().join("clusters");
    let fit = psd(&[
        "cluster",
        "fit",
        "--embeddings",
        s(&f.vectors),
        "--instances",
        s(&f.train),
        "--model",
        s(&clusters),
        "--prep",
        "in",
    ]);
    assert_eq!(code(&fit), 0, "{}", stderr(&fit));
    assert_eq!(dir_bytes(&clusters).len(), 1);
    let eval = psd(&[
        "cluster",
        "eval",
        "--embeddings",
        s(&f.vectors),
        "--instances",
        s(&f.test),
        "--model",
        s(&clusters),
    ]);
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
}

#[test]
fn tag_then_train_embeddings() {
    let f = fixture();
    let knn = f.dir.path().join("knn");
    assert_eq!(code(&knn_tune(&f, &knn, &[])), 0);
    let tagged = f.dir.path().join("tagged.txt");
    let out = psd(&[
        "tag",
        "--embeddings",
        s(&f.vectors),
        "--model",
        s(&knn),
        "--corpus",
        s(&f.raw),
        "--out",
        s(&tagged),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&tagged).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("in::in_S1"), "{text}");
    assert!(lines[1].contains("on::on_S2"), "{text}");
    assert_eq!(lines[2], "nothing here");

    let vectors = f.dir.path().join("trained.txt");
    let out = psd(&[
        "embed",
        "train",
        "--corpus",
        s(&tagged),
        "--out",
        s(&vectors),
        "--dim",
        "6",
        "--epochs",
        "2",
        "--min-count",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trained = EmbeddingTable::load(&vectors).unwrap().table;
    assert_eq!(trained.dim(), 6);
    assert!(trained.contains("in::in_S1"));
}

#[test]
fn config_file_supplies_missing_flags() {
    let f = fixture();
    let config = f.dir.path().join("run.conf");
    fs::write(
        &config,
        format!(
            "# shared settings\nembeddings = {}\nk = 1,3\nk-left = 1,2\nk-right = 1,2\ntopk = 5\n",
            s(&f.vectors)
        ),
    )
    .unwrap();
    let from_config = f.dir.path().join("c");
    let out = psd(&[
        "--config",
        s(&config),
        "knn",
        "tune",
        "--instances",
        s(&f.train),
        "--model",
        s(&from_config),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("\"topk\""), "{}", stderr(&out));

    let direct = f.dir.path().join("d");
    assert_eq!(code(&knn_tune(&f, &direct, &[])), 0);
    assert_eq!(dir_bytes(&from_config), dir_bytes(&direct));

    // Command-line flags win over the file.
    let narrowed = f.dir.path().join("n");
    let out = psd(&[
        "--config",
        s(&config),
        "knn",
        "tune",
        "--instances",
        s(&f.train),
        "--model",
        s(&narrowed),
        "--prep",
        "in",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(dir_bytes(&narrowed).len(), 1);

    fs::write(&config, "this line has no separator\n").unwrap();
    let out = psd(&[
        "--config",
        s(&config),
        "knn",
        "tune",
        "--instances",
        "x",
        "--model",
        "y",
    ]);
    assert_eq!(code(&out), 1);
}
