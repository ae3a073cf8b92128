use ovsr_cli::cli_dispatch;
use ovsr_core::data::write_synthetic_corpus;
use std::path::Path;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["ovsr"];
    argv.extend_from_slice(args);
    cli_dispatch(&argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["train", "--help"]), 0);
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["upscale"]), 2);
    assert_eq!(run(&["prepare", "--input", "x"]), 2);
}

#[test]
fn runtime_errors_are_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    assert_eq!(run(&["analyze-hf", "--input", s(&missing)]), 1);
    assert_eq!(run(&["prepare", "--input", s(dir.path()), "--out", s(&missing), "--scale", "3"]), 1);
    assert_eq!(run(&["infer", "--ckpt", s(&missing), "--in", s(dir.path()), "--out", s(&missing)]), 1);
}

#[test]
fn prepare_train_infer_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (corpus, data, runs) = (root.join("corpus"), root.join("data"), root.join("runs"));
    write_synthetic_corpus(&corpus, 2, 16, 16, 16, 3).unwrap();
    assert_eq!(run(&["prepare", "--input", s(&corpus), "--out", s(&data), "--scale", "2", "--test-every", "2"]), 0);
    let test_ids = std::fs::read_to_string(data.join("sep_testlist.txt")).unwrap();
    let id = test_ids.lines().next().unwrap().to_string();

    let hf_csv = root.join("hf.csv");
    let frames = data.join("sequences").join(&id);
    assert_eq!(run(&["analyze-hf", "--input", s(&frames), "--out", s(&hf_csv)]), 0);
    assert_eq!(std::fs::read_to_string(&hf_csv).unwrap().lines().count(), 8);

    let cfg = root.join("train.cfg");
    std::fs::write(
        &cfg,
        "scale=2\nchannels=4\nstate=2\npyramid_levels=2\nres_blocks=1\nregisters_per_frame=1\nattn_hidden=2\n\
         batch_size=1\ncrop=0\ntotal_steps=2\ncheckpoint_every=1\n",
    )
    .unwrap();
    assert_eq!(
        run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&runs), "--set", "lr_init=0.001"]),
        0
    );
    let loss = std::fs::read_to_string(runs.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(runs.join("final.bin").exists());
    assert_eq!(run(&["train", "--data", s(&data), "--out", s(&runs), "--set", "nonsense"]), 1);

    let pred = root.join("pred").join(&id);
    let lr = data.join("lr_x2").join(&id);
    assert_eq!(run(&["infer", "--ckpt", s(&runs.join("final.bin")), "--in", s(&lr), "--out", s(&pred)]), 0);
    assert!(pred.join("im7.png").exists());

    let pred_root = root.join("pred");
    let manifest = data.join("sep_testlist.txt");
    let report = root.join("report.csv");
    let tiers = data.join("tiers.csv");
    let args = [
        "evaluate", "--pred", s(&pred_root), "--gt", s(&data), "--manifest", s(&manifest), "--out",
        s(&report), "--tiers", s(&tiers),
    ];
    assert_eq!(run(&args), 0);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("clip,frame,psnr,ssim,set,tier"));
    assert!(root.join("report.json").exists() && root.join("report_plot.csv").exists());

    // a clip without predictions is reported and fails the command
    std::fs::write(&manifest, format!("{id}\nvideo009/0001\n")).unwrap();
    assert_eq!(run(&args), 1);
}

#[test]
fn gradcheck_single_instance() {
    assert_eq!(run(&["gradcheck", "--instances", "1", "--primitives-only"]), 0);
}
