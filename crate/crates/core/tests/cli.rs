use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use nft::data::{load_dataset, parse_ptb, save_dataset, Dataset, LabeledTree};
use nft::factors::TreeCrf;
use nft::gnn::GnnConfig;
use nft::inference::enumerate_oracle;
use nft::training::{predict_crf, save_checkpoint, ModelConfig, ModelParams};
use tempfile::TempDir;

fn nft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nft"))
        .args(args)
        .env_remove("NFT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nft(args);
    assert!(
        out.status.success(),
        "nft {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn sst_like(dir: &TempDir) -> String {
    let trees = ["(3 (2 good) (2 film))", "(1 (0 bad) (2 (2 a) (2 film)))", "(0 awful)", "(4 (4 great) (3 fun))"]
        .iter()
        .map(|s| {
            let t = parse_ptb(s).unwrap();
            let attrs = (0..t.len()).map(|v| vec![v as f64 * 0.1, 1.0]).collect();
            t.with_attributes(attrs).unwrap()
        })
        .collect();
    let p = path(dir, "sst.json");
    save_dataset(Path::new(&p), &Dataset::new(5, trees).unwrap()).unwrap();
    p
}

#[test]
fn missing_file_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "no_such_data.json");
    let out = nft(&["train", "--train", &missing, "--out", &path(&dir, "ck")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_data.json"));
}

#[test]
fn zeroed_checkpoint_evaluates_to_minus_log_five() {
    let dir = TempDir::new().unwrap();
    let data = sst_like(&dir);
    let ck = path(&dir, "zero.ck");
    ok(&["init", "--data", &data, "--zeros", "--out", &ck]);
    let report = ok(&["eval", "--checkpoint", &ck, "--data", &data]);
    let keys: Vec<&str> = report.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(keys, ["per_node_ll", "accuracy", "n_trees", "n_nodes"]);
    let ll: f64 = report.lines().next().unwrap()["per_node_ll=".len()..].parse().unwrap();
    assert!((ll + 5f64.ln()).abs() < 1e-3, "{ll}");
    // ties go to label 0: accuracy is the frequency of label 0
    assert!(report.contains("accuracy=0.16666666666666666\n"), "{report}");
    assert!(report.contains("n_trees=4\nn_nodes=12\n"));
}

#[test]
fn label_count_mismatch_is_an_error() {
    let dir = TempDir::new().unwrap();
    let data = sst_like(&dir);
    let ck = path(&dir, "three.ck");
    ok(&["init", "--labels", "3", "--attr-size", "2", "--zeros", "--out", &ck]);
    let out = nft(&["eval", "--checkpoint", &ck, "--data", &data]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("labels"));
}

#[test]
fn decode_single_node_uniform_gives_label_zero() {
    let dir = TempDir::new().unwrap();
    let tree = LabeledTree::new(vec![None], vec![vec![0.3]], None, vec![None]).unwrap();
    let data = path(&dir, "one.json");
    save_dataset(Path::new(&data), &Dataset::new(2, vec![tree]).unwrap()).unwrap();
    let ck = path(&dir, "ck");
    ok(&["init", "--labels", "2", "--attr-size", "1", "--zeros", "--out", &ck]);
    assert_eq!(ok(&["decode", "--checkpoint", &ck, "--data", &data]), "0 0\n");
}

#[test]
fn decode_matches_enumeration() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d");
    ok(&["gen-synthetic", "--out", &data, "--n-trees", "15", "--max-nodes", "7", "--seed", "4"]);
    let ck = path(&dir, "ck");
    ok(&["init", "--data", &data, "--hidden", "5", "--seed", "8", "--out", &ck]);
    let out_file = path(&dir, "map.txt");
    ok(&["decode", "--checkpoint", &ck, "--data", &data, "--out", &out_file]);
    let decoded = fs::read_to_string(&out_file).unwrap();

    let ds = load_dataset(Path::new(&data)).unwrap();
    let (cfg, params) = nft::training::load_checkpoint(Path::new(&ck)).unwrap();
    for (line, tree) in decoded.lines().zip(&ds.trees) {
        let crf = predict_crf(&params, tree, &cfg).unwrap();
        let labels: Vec<usize> = line.split(' ').skip(1).map(|s| s.parse().unwrap()).collect();
        let oracle = enumerate_oracle(&crf).unwrap();
        assert_eq!(crf.score(&labels), oracle.map_score);
    }
    assert_eq!(decoded.lines().count(), 15);
}

#[test]
fn sample_output_contract() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d");
    ok(&["gen-synthetic", "--out", &data, "--n-trees", "3", "--seed", "2"]);
    let ck = path(&dir, "ck");
    ok(&["init", "--data", &data, "--hidden", "4", "--out", &ck]);
    let header_only = ok(&["sample", "--checkpoint", &ck, "--data", &data, "--top-k", "0", "--samples", "50"]);
    assert_eq!(header_only.lines().count(), 3);
    assert!(header_only.lines().all(|l| l.starts_with("tree ")));

    let a = ok(&["sample", "--checkpoint", &ck, "--data", &data, "--samples", "200", "--seed", "9"]);
    let b = ok(&["sample", "--checkpoint", &ck, "--data", &data, "--samples", "200", "--seed", "9"]);
    assert_eq!(a, b);
    assert_eq!(a.matches(" mode\n").count(), 3);
}

#[test]
fn peaked_model_sample_mode_is_map() {
    let dir = TempDir::new().unwrap();
    let cfg = ModelConfig {
        gnn: GnnConfig::new(2, 1, 2).unwrap(),
        num_labels: 3,
        baseline: false,
    };
    let mut params = ModelParams::zeros(&cfg);
    params.heads.node_b = nft::diffcore::Tensor::vector(vec![-2.0, 3.0, 0.0]).unwrap();
    let ck = path(&dir, "peaked.ck");
    save_checkpoint(Path::new(&ck), &cfg, &params).unwrap();
    let tree = LabeledTree::new(vec![None, Some(0), Some(0)], vec![vec![0.0, 1.0]; 3], None, vec![None; 3]).unwrap();
    let data = path(&dir, "t.json");
    save_dataset(Path::new(&data), &Dataset::new(3, vec![tree]).unwrap()).unwrap();
    let out = ok(&["sample", "--checkpoint", &ck, "--data", &data, "--top-k", "1"]);
    let decoded = ok(&["decode", "--checkpoint", &ck, "--data", &data]);
    assert_eq!(decoded, "0 1 1 1\n");
    assert!(out.lines().nth(1).unwrap().ends_with(" 1 1 1 mode"), "{out}");
}

#[test]
fn oracle_check_passes_and_checks_single_files() {
    let out = ok(&["oracle-check", "--crfs", "200", "--gradient-instances", "4", "--tv-samples", "20000"]);
    assert!(out.contains("PASS inference vs enumeration: 200 CRFs"));
    assert!(out.ends_with("all checks passed\n"));

    let dir = TempDir::new().unwrap();
    let crf_file = path(&dir, "c.txt");
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    fs::write(&crf_file, TreeCrf::random(5, 3, 2.0, &mut rng).to_text()).unwrap();
    assert!(ok(&["oracle-check", "--crf", &crf_file]).starts_with("PASS"));

    let big = path(&dir, "big.txt");
    fs::write(&big, TreeCrf::random(20, 5, 1.0, &mut rng).to_text()).unwrap();
    let out = nft(&["oracle-check", "--crf", &big]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("capacity"));
}

#[test]
fn synthetic_quickstart_improves_over_first_epoch() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "quick");
    let start = Instant::now();
    ok(&["gen-synthetic", "--out", &data, "--n-trees", "200", "--max-nodes", "10", "--split", "0.8,0.1,0.1"]);
    let log = ok(&[
        "train", "--train", &format!("{data}/train.json"), "--valid", &format!("{data}/valid.json"),
        "--out", &path(&dir, "ck"), "--log", &path(&dir, "log.txt"),
    ]);
    assert!(start.elapsed().as_secs() < 60);
    assert_eq!(fs::read_to_string(path(&dir, "log.txt")).unwrap(), log);
    let valid: Vec<f64> = log
        .lines()
        .filter_map(|l| l.split(' ').find_map(|kv| kv.strip_prefix("valid_nll=")))
        .map(|v| v.parse().unwrap())
        .collect();
    let best = valid.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best <= 0.9 * valid[0], "epoch 1 {} best {best}", valid[0]);
}

#[test]
fn baseline_flag_and_config_file() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    ok(&["gen-synthetic", "--out", &data, "--n-trees", "20"]);
    let cfg_file = path(&dir, "run.cfg");
    fs::write(&cfg_file, "epochs=2\nhidden=4\nbaseline=true\n").unwrap();
    let ck = path(&dir, "ck");
    let out = nft(&["train", "--config", &cfg_file, "--train", &data, "--out", &ck, "--seed", "3"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("baseline=true") && stderr.contains("seed=3") && stderr.contains("epochs=2"));
    let text = fs::read_to_string(&ck).unwrap();
    assert!(text.contains("baseline true\n") && text.contains("hidden_size 4\n"));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("epoch=")).count(), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let gen = |seed_env: &str, name: &str| {
        let p = path(&dir, name);
        let out = Command::new(env!("CARGO_BIN_EXE_nft"))
            .args(["gen-synthetic", "--out", &p, "--n-trees", "5"])
            .env("NFT_SEED", seed_env)
            .output()
            .unwrap();
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("seed={seed_env}")));
        fs::read(p).unwrap()
    };
    assert_eq!(gen("12", "a"), gen("12", "b"));
    assert_ne!(gen("12", "c"), gen("13", "d"));
    let out = Command::new(env!("CARGO_BIN_EXE_nft"))
        .args(["gen-synthetic", "--out", &path(&dir, "e"), "--n-trees", "5"])
        .env("NFT_SEED", "not-a-number")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn checkpoint_round_trip_reproduces_metrics() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    ok(&["gen-synthetic", "--out", &data, "--n-trees", "30"]);
    let ck = path(&dir, "ck");
    ok(&["train", "--train", &data, "--out", &ck, "--epochs", "2", "--hidden", "5"]);
    let (cfg, params) = nft::training::load_checkpoint(Path::new(&ck)).unwrap();
    let again = path(&dir, "ck2");
    save_checkpoint(Path::new(&again), &cfg, &params).unwrap();
    assert_eq!(fs::read(&ck).unwrap(), fs::read(&again).unwrap());
    assert_eq!(
        ok(&["eval", "--checkpoint", &ck, "--data", &data]),
        ok(&["eval", "--checkpoint", &again, "--data", &data])
    );
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    ok(&["gen-synthetic", "--out", &data, "--n-trees", "40"]);
    let run = |jobs: &str, name: &str| {
        let ck = path(&dir, name);
        let log = ok(&["train", "--train", &data, "--out", &ck, "--epochs", "2", "--hidden", "4", "--jobs", jobs]);
        (log, fs::read(ck).unwrap())
    };
    assert_eq!(run("1", "a"), run("4", "b"));
}
