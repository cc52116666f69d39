use std::fs;
use std::process::Command;

fn kawahara() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kawahara"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = kawahara().args(["resonance-scan", "--threads", "2", "--seed", "3", "--out"]).arg(dir.path().join("a")).status().unwrap();
    assert_eq!(ok.code(), Some(0));
    assert!(dir.path().join("a/manifest.json").exists());

    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "scenario = \"solve\"\nseed = 1\n[equation]\nbeta = 0.0\n[grid]\nn = 32\nbox_length = 6.0\n[solve]\nt_final = 1.0\ndt = 0.1\ninitial = { kind = \"zero\" }\n").unwrap();
    let out = kawahara().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("b")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("equation"));

    let out = kawahara().args(["contraction", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));

    fs::write(&cfg, "scenario = \"solve\"\nseed = 1\n[equation]\nbeta = 1.0\n[grid]\nn = 128\nbox_length = 50.0\n[solve]\nt_final = 10.0\ndt = 0.5\ninitial = { kind = \"sech2\", amplitude = 50.0, width = 0.5 }\n").unwrap();
    let out = kawahara().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("c")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(kawahara().args(["solve", "--bogus"]).output().unwrap().status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let out = kawahara().args(["wellposed-probe", "--seed", "17", "--print-config"]).output().unwrap();
    assert!(out.status.success());
    let c = kawahara_harness::ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(c.seed, 17);
    assert_eq!(c.scenario, kawahara_harness::ScenarioKind::WellposedProbe);
}
