use std::process::Command;

fn occlubench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_occlubench"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(occlubench(&["--help"]).status.code(), Some(0));
    assert_eq!(occlubench(&["--version"]).status.code(), Some(0));
    let out = occlubench(&["train", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("--cutmix"));
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(
        occlubench(&["apply-masks", "--mask", "3", "--out", o])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        occlubench(&["inpaint", "--input", o, "--strategy", "blur", "--out", o])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        occlubench(&["evaluate", "--checkpoint", "x", "--condition", "bad", "--out", o])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        occlubench(&[
            "evaluate",
            "--checkpoint",
            "missing.ocrc",
            "--condition",
            "c=m.csv",
            "--out",
            o
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        occlubench(&["report", "--input", "missing.json", "--out", o])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn synth_masks_writes_images_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("masks");
    let st = occlubench(&[
        "--seed",
        "4",
        "synth-masks",
        "--mask",
        "1",
        "--size",
        "48",
        "--count",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("masks.json")).unwrap()).unwrap();
    let entries = index.as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        let name = e["mask"].as_str().unwrap();
        let img = occlubench::imagecore::read_image(&out.join(name)).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (48, 48, 1));
        assert!(["left", "right"].contains(&e["side"].as_str().unwrap().to_lowercase().as_str()));
    }
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env_seed: &str| {
        let out = dir.path().join(name);
        let st = Command::new(env!("CARGO_BIN_EXE_occlubench"))
            .env("OCCLUBENCH_SEED", env_seed)
            .args([
                "demo-dataset",
                "--classes",
                "2",
                "--per-class",
                "2",
                "--size",
                "8",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(st.success());
        std::fs::read(out.join("images/id00/000.ppm")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a2", "5"), run("c", "6"));
}
