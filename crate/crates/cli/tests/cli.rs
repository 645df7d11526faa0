use std::path::Path;
use std::process::Command;

use rbhmc::export::TreeDoc;
use rbhmc_cli::config::ConfigArgs;
use rbhmc_cli::{cmd_eval, cmd_fit, cmd_generate, CliError, Mode, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rbhmc"))
}

fn small() -> RunConfig {
    RunConfig {
        n: 30,
        dim: 2,
        trunc: 4,
        burnin: 20,
        draws: 30,
        seed: 7,
        prior_var: 25.0,
        ..Default::default()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn generate_is_reproducible_and_labels_every_row() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    cmd_generate(&small(), &a).unwrap();
    cmd_generate(&small(), &b).unwrap();
    for f in ["data.csv", "tree.json", "labels.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert_eq!(read(&a.join("labels.csv")).lines().count(), 30);
    assert_eq!(read(&a.join("data.csv")).lines().count(), 30);
    let zero = RunConfig { n: 0, ..small() };
    assert!(matches!(
        cmd_generate(&zero, &d.path().join("c")),
        Err(CliError::Usage(_))
    ));
}

#[test]
fn tree_json_round_trips_through_a_file() {
    let d = tempfile::tempdir().unwrap();
    cmd_generate(&small(), d.path()).unwrap();
    let s = read(&d.path().join("tree.json"));
    let doc = TreeDoc::from_json(&s).unwrap();
    let (t, p) = doc.to_tree().unwrap();
    assert_eq!(
        TreeDoc::new(&t, &p, &doc.kernel_vectors())
            .unwrap()
            .to_json(),
        s
    );
}

#[test]
fn ground_truth_tree_has_perfect_leaf_f_measure() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small();
    cmd_generate(&cfg, d.path()).unwrap();
    let r = cmd_eval(
        &d.path().join("tree.json"),
        &d.path().join("data.csv"),
        Some(&d.path().join("labels.csv")),
    )
    .unwrap();
    let f = r.f_by_level.unwrap();
    assert_eq!(f[&cfg.depth], 1.0);
    let r = cmd_eval(
        &d.path().join("tree.json"),
        &d.path().join("data.csv"),
        None,
    )
    .unwrap();
    assert!(r.f_by_level.is_none());
}

#[test]
fn fit_writes_one_directory_per_chain() {
    let d = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        chains: 2,
        ..small()
    };
    cmd_generate(&cfg, &d.path().join("g")).unwrap();
    let s = cmd_fit(&cfg, &d.path().join("g/data.csv"), &d.path().join("fit"), 2).unwrap();
    assert_eq!(s.chains.len(), 2);
    assert_eq!((s.chains[0].seed, s.chains[1].seed), (7, 8));
    for c in 0..2 {
        let dir = d.path().join(format!("fit/chain_{c}"));
        let trace = read(&dir.join("trace.csv"));
        assert_eq!(trace.lines().count(), 1 + cfg.burnin + cfg.draws);
        assert!(read(&dir.join("tree.nwk")).trim_end().ends_with(';'));
        TreeDoc::from_json(&read(&dir.join("tree.json")))
            .unwrap()
            .to_tree()
            .unwrap();
    }
    let one = RunConfig {
        chains: 1,
        ..cfg.clone()
    };
    let s1 = cmd_fit(
        &one,
        &d.path().join("g/data.csv"),
        &d.path().join("fit1"),
        1,
    )
    .unwrap();
    assert_eq!(s1.chains[0], s.chains[0]);
    assert_eq!(
        read(&d.path().join("fit1/chain_0/trace.csv")),
        read(&d.path().join("fit/chain_0/trace.csv"))
    );
    let summary: serde_json::Value =
        serde_json::from_str(&read(&d.path().join("fit/summary.json"))).unwrap();
    assert_eq!(summary["chains"].as_array().unwrap().len(), 2);
}

#[test]
fn vi_mode_warns_about_ignored_settings() {
    let d = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        mode: Mode::Vi,
        max_cycles: 5,
        branching: 2,
        ..small()
    };
    cmd_generate(&cfg, &d.path().join("g")).unwrap();
    let s = cmd_fit(&cfg, &d.path().join("g/data.csv"), &d.path().join("fit"), 1).unwrap();
    assert_eq!(s.warnings.len(), 1);
    assert!(s.warnings[0].contains("burnin"));
    let trace = read(&d.path().join("fit/chain_0/trace.csv"));
    assert!(trace.starts_with("cycle,relbo,delta\n"));
}

#[test]
fn fit_applies_pca_first() {
    let d = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        dim: 3,
        pca_dims: Some(2),
        draws: 5,
        burnin: 0,
        ..small()
    };
    cmd_generate(&cfg, &d.path().join("g")).unwrap();
    let s = cmd_fit(&cfg, &d.path().join("g/data.csv"), &d.path().join("fit"), 1).unwrap();
    assert_eq!(s.dim, 2);
    let bad = RunConfig {
        pca_dims: Some(4),
        ..cfg
    };
    assert!(matches!(
        cmd_fit(
            &bad,
            &d.path().join("g/data.csv"),
            &d.path().join("fit2"),
            1
        ),
        Err(CliError::Data(_))
    ));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(bin().arg("--help").status().unwrap().code(), Some(0));
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(
        bin()
            .args(["fit", "--data"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(1)
    );

    let ragged = d.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    let o = bin()
        .args([
            "fit",
            "--data",
            ragged.to_str().unwrap(),
            "--out",
            d.path().join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let g = d.path().join("g");
    let o = bin()
        .args([
            "generate",
            "--out",
            g.to_str().unwrap(),
            "--n",
            "12",
            "--dim",
            "2",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = bin()
        .args([
            "fit",
            "--data",
            g.join("data.csv").to_str().unwrap(),
            "--out",
            d.path().join("f").to_str().unwrap(),
        ])
        .args(["--alpha", "-1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));

    let o = bin()
        .args([
            "eval",
            "--tree",
            g.join("tree.json").to_str().unwrap(),
            "--data",
            g.join("data.csv").to_str().unwrap(),
        ])
        .args(["--labels", g.join("labels.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["aid"].is_number());

    let short = d.path().join("short.csv");
    std::fs::write(&short, "0,0\n").unwrap();
    let o = bin()
        .args([
            "eval",
            "--tree",
            g.join("tree.json").to_str().unwrap(),
            "--data",
            short.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn singular_path_tree_has_no_aod() {
    let d = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        alpha: 1e-9,
        n: 5,
        ..small()
    };
    cmd_generate(&cfg, d.path()).unwrap();
    let o = bin()
        .args([
            "eval",
            "--tree",
            d.path().join("tree.json").to_str().unwrap(),
        ])
        .args(["--data", d.path().join("data.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.get("aod").is_none());
}

#[test]
fn eval_matches_direct_metric_calls() {
    let d = tempfile::tempdir().unwrap();
    let g = cmd_generate(&small(), d.path()).unwrap();
    let r = cmd_eval(
        &d.path().join("tree.json"),
        &d.path().join("data.csv"),
        None,
    )
    .unwrap();
    let paths: Vec<&[usize]> = g.assignments.iter().map(|a| a.path.as_slice()).collect();
    let direct = rbhmc::metrics::evaluate(&g.tree, &paths, &g.data, None).unwrap();
    assert_eq!(r, direct);
}

#[test]
fn eval_accepts_the_bundled_animals_labels() {
    let d = tempfile::tempdir().unwrap();
    let cfg = RunConfig { n: 33, ..small() };
    cmd_generate(&cfg, d.path()).unwrap();
    let labels = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/animals_labels.csv");
    let r = cmd_eval(
        &d.path().join("tree.json"),
        &d.path().join("data.csv"),
        Some(&labels),
    )
    .unwrap();
    assert_eq!(r.f_by_level.unwrap().len(), cfg.depth);
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.toml");
    std::fs::write(&p, "draws = 3\nburnin = 1\nchains = 2\n").unwrap();
    let args = ConfigArgs {
        config: Some(p),
        chains: Some(1),
        ..Default::default()
    };
    let c = RunConfig::resolve(&args).unwrap();
    assert_eq!((c.draws, c.burnin, c.chains), (3, 1, 1));
}
