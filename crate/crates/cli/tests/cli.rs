use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mokd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mokd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["synth", "--classes", "8", "--per-class", "30", "--dim", "16", "--seed", "3", "--out"];
    args.push(path.to_str().unwrap());
    args.extend_from_slice(extra);
    let o = mokd(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    path
}

#[test]
fn synth_writes_a_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let ds = mokd::tasks::load_embeddings(&path).unwrap();
    assert_eq!(ds.n_classes(), 8);
    assert_eq!(ds.dim(), 16);
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(synth(dir.path(), "a.emb", &[])).unwrap();
    let b = std::fs::read(synth(dir.path(), "b.emb", &[])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synth_rejects_single_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.emb");
    let o = mokd(&["synth", "--classes", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("classes"));
}

#[test]
fn synth_unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("x.emb");
    let o = mokd(&["synth", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mokd(&[]).status.code(), Some(2));
    assert_eq!(mokd(&["eval"]).status.code(), Some(2));
    assert_eq!(mokd(&["hsic", "--embeddings", "x", "--kernel", "nope"]).status.code(), Some(2));
    assert_eq!(mokd(&["hsic", "--embeddings", "x", "--coeff", "1", "--grid", "1,2"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_one() {
    let o = mokd(&["hsic", "--embeddings", "/nonexistent/pool.emb"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mokd(&["eval", "--embeddings", "/nonexistent/pool.emb"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn hsic_singleton_grid_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let o = mokd(&["hsic", "--embeddings", path.to_str().unwrap(), "--coeff", "1.0", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn hsic_csv_reparses_and_selected_row_is_positive() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let o = mokd(&["hsic", "--embeddings", path.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "coefficient,sigma,hsic,variance,power_ratio,selected");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 15);
    assert_eq!(rows.iter().filter(|r| r[5] == 1.0).count(), 1);
    let selected = rows.iter().find(|r| r[5] == 1.0).unwrap();
    assert!(selected[2] > 0.0);
    assert!(rows.iter().all(|r| r[4] <= selected[4]));

    let table = stdout(&mokd(&["hsic", "--embeddings", path.to_str().unwrap()]));
    assert!(table.contains("selected: coefficient"));
    let embedded = mokd(&["hsic", "--embeddings", path.to_str().unwrap(), "--labels-from", "embedded"]);
    assert_eq!(embedded.status.code(), Some(0));
}

#[test]
fn hsic_too_few_rows_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.csv");
    std::fs::write(&path, "label,f0,f1\n0,0.0,1.0\n1,1.0,0.0\n").unwrap();
    let o = mokd(&["hsic", "--embeddings", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn eval_separable_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let args = ["eval", "--embeddings", path.to_str().unwrap(), "--episodes", "8", "--seed", "5", "--steps", "10"];
    let a = mokd(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = mokd(&args);
    assert_eq!(stdout(&a), stdout(&b));
    let acc: f64 = stdout(&a).lines().find_map(|l| l.strip_prefix("mean_accuracy")).unwrap().trim().parse().unwrap();
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn eval_ncc_and_fixed_mode() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let p = path.to_str().unwrap();
    let o = mokd(&[
        "eval",
        "--embeddings",
        p,
        "--episodes",
        "3",
        "--loss",
        "ncc",
        "--ways",
        "5",
        "--shots",
        "5",
        "--queries",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("loss           ncc"));
    assert!(stdout(&o).contains("mean_support   25.00"));
    let o = mokd(&["eval", "--embeddings", p, "--ways", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_rejects_zero_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let o = mokd(&["eval", "--embeddings", path.to_str().unwrap(), "--steps", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_dumps_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let maps = dir.path().join("maps");
    let o = mokd(&[
        "eval",
        "--embeddings",
        path.to_str().unwrap(),
        "--episodes",
        "2",
        "--steps",
        "2",
        "--dump-heatmaps",
        maps.to_str().unwrap(),
        "--verbose",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().filter(|l| l.starts_with("episode")).count(), 2);
    let text = std::fs::read_to_string(maps.join("support_0000.csv")).unwrap();
    let (matrix, bounds) = mokd::eval::read_similarity_csv(text.as_bytes()).unwrap();
    assert_eq!(matrix.nrows(), matrix.ncols());
    assert_eq!(bounds[0], 0);
    assert!(maps.join("query_0001.csv").exists());
}

#[test]
fn config_precedence_flag_over_file_over_default() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# layered fixture\nloss = ncc\nepisodes = 3\nsteps = 2\n").unwrap();
    let p = path.to_str().unwrap();
    let c = cfg.to_str().unwrap();

    let from_file = stdout(&mokd(&["eval", "--embeddings", p, "--config", c]));
    assert!(from_file.contains("loss           ncc"));
    assert!(from_file.contains("episodes       3"));

    let flagged = stdout(&mokd(&["eval", "--embeddings", p, "--config", c, "--episodes", "4"]));
    assert!(flagged.contains("loss           ncc"));
    assert!(flagged.contains("episodes       4"));

    let defaults = stdout(&mokd(&["eval", "--embeddings", p, "--steps", "1", "--episodes", "2"]));
    assert!(defaults.contains("loss           mokd"));
}

#[test]
fn config_unknown_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "pool.emb", &[]);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "gama = 3\n").unwrap();
    let o = mokd(&["eval", "--embeddings", path.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("'gama'"));
    let o = mokd(&["eval", "--embeddings", path.to_str().unwrap(), "--config", "/nonexistent.cfg"]);
    assert_eq!(o.status.code(), Some(1));
}
