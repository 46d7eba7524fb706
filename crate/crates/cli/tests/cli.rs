use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use uspeech_core::audio::{derive_stream, write_wav, WavEncoding};
use uspeech_core::rir::SyntheticRir;
use uspeech_core::AudioBuffer;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uspeech"))
}

fn run(args: &[&str]) -> (i32, Value) {
    let out = bin().args(args).env("RUST_LOG", "warn").output().expect("binary runs");
    let code = out.status.code().unwrap_or(-1);
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, v)
}

fn schema() -> jsonschema::JSONSchema {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/summary.schema.json")).unwrap();
    jsonschema::JSONSchema::compile(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_schema(v: &Value) {
    let s = schema();
    let msgs: Vec<String> = match s.validate(v) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("summary violates schema: {msgs:?}\n{v:#}");
}

fn tone(fs: u32, secs: f64, seed: u64) -> AudioBuffer {
    let mut st = derive_stream(seed, "cli-fixture");
    let n = (fs as f64 * secs) as usize;
    let f0 = 120.0 + 80.0 * st.uniform();
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / fs as f64;
            let env = (std::f64::consts::PI * 3.0 * t).sin().max(0.0);
            0.3 * env * (2.0 * std::f64::consts::PI * f0 * t).sin() + 0.002 * st.normal()
        })
        .collect();
    AudioBuffer::new(x, fs).unwrap()
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Corpus {
    fn path(&self, rel: &str) -> String {
        self.root.join(rel).display().to_string()
    }
}

/// 20 clean utterances, two noise assets, two RIRs, and a recipe.
fn corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    for sub in ["clean", "noise", "rirs"] {
        std::fs::create_dir_all(root.join(sub)).unwrap();
    }
    let mut manifest = String::new();
    for i in 0..20 {
        let id = format!("utt{i:02}");
        let secs = 0.5 + 0.05 * i as f64;
        write_wav(&tone(16000, secs, i), root.join(format!("clean/{id}.wav")), WavEncoding::Pcm16).unwrap();
        let source = ["a", "b"][i as usize % 2];
        let line = json!({"id": id, "path": format!("clean/{id}.wav"), "source": source, "duration_s": secs, "fs": 16000});
        manifest.push_str(&format!("{line}\n"));
    }
    std::fs::write(root.join("manifest.jsonl"), manifest).unwrap();
    for k in 0..2 {
        let mut st = derive_stream(50 + k, "noise");
        let noise = AudioBuffer::new((0..12000).map(|_| 0.1 * st.normal()).collect(), 16000).unwrap();
        write_wav(&noise, root.join(format!("noise/n{k}.wav")), WavEncoding::Float32).unwrap();
        let rir = SyntheticRir { length_ms: 120.0, ..Default::default() }.render(16000, &mut derive_stream(60 + k, "rir")).unwrap();
        write_wav(&rir, root.join(format!("rirs/r{k}.wav")), WavEncoding::Float32).unwrap();
    }
    let recipe = json!({"steps": [
        {"kind": "reverb", "rir": "*", "target": {"kind": "early_reflected", "window_ms": 50.0}},
        {"kind": "noise", "asset": "*", "snr_db": 5.0},
        {"kind": "clip", "threshold_ratio": 0.7},
        {"kind": "bandlimit", "cutoff_hz": 4000.0},
        {"kind": "codec", "bits": 8, "mulaw": true},
        {"kind": "packet_loss", "packet_ms": 20.0, "loss": {"model": "bernoulli", "p": 0.1}},
        {"kind": "wind", "gain_db": -10.0}
    ]});
    std::fs::write(root.join("recipe.json"), recipe.to_string()).unwrap();
    Corpus { _dir: dir, root }
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().to_string(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_independent_of_worker_count() {
    let c = corpus();
    let sim = |workers: &str, out: &str, seed: &str| {
        run(&[
            "simulate", "--manifest", &c.path("manifest.jsonl"), "--recipe", &c.path("recipe.json"),
            "--noise-dir", &c.path("noise"), "--rir-dir", &c.path("rirs"),
            "--out-dir", &c.path(out), "--workers", workers, "--seed", seed,
        ])
    };
    let (c1, v1) = sim("1", "out1", "7");
    let (c8, v8) = sim("8", "out8", "7");
    assert_eq!((c1, c8), (0, 0), "{v1:#}");
    assert_schema(&v1);
    assert_eq!(v1["result"]["items"], 20);
    assert_eq!(v1["result"]["digest"], v8["result"]["digest"]);
    assert_eq!(files_in(&c.root.join("out1")), files_in(&c.root.join("out8")));
    assert_eq!(files_in(&c.root.join("out1")).len(), 41);

    let (_, other) = sim("4", "out_seed", "8");
    assert_ne!(other["result"]["digest"], v1["result"]["digest"]);
}

#[test]
fn simulate_from_config_file() {
    let c = corpus();
    let cfg = "root_seed = 7\nworkers = 3\n[assets]\nnoise_dir = \"noise\"\nrir_dir = \"rirs\"\n\
               [simulate]\nmanifest = \"manifest.jsonl\"\nrecipe = \"recipe.json\"\nout_dir = \"cfg_out\"\n";
    std::fs::write(c.root.join("pipeline.toml"), cfg).unwrap();
    let (code, v) = run(&["simulate", "--config", &c.path("pipeline.toml")]);
    assert_eq!(code, 0, "{v:#}");
    assert_eq!(v["seed"], 7);
    let (_, flags) = run(&[
        "simulate", "--manifest", &c.path("manifest.jsonl"), "--recipe", &c.path("recipe.json"),
        "--noise-dir", &c.path("noise"), "--rir-dir", &c.path("rirs"), "--out-dir", &c.path("flag_out"), "--seed", "7",
    ]);
    assert_eq!(v["result"]["digest"], flags["result"]["digest"]);

    std::fs::write(c.root.join("bad.toml"), "[curate]\ntau = 1.5\n").unwrap();
    let (code, v) = run(&["curate", "filter", "--config", &c.path("bad.toml")]);
    assert_eq!(code, 1);
    assert!(v["error"].as_str().unwrap().contains("curate.tau"), "{v}");
    std::fs::write(c.root.join("missing.toml"), "[assets]\nnoise_dir = \"nope\"\n").unwrap();
    let (code, v) = run(&["bands", "--fs", "16000", "--config", &c.path("missing.toml")]);
    assert_eq!(code, 1);
    assert!(v["error"].as_str().unwrap().contains("assets.noise_dir"), "{v}");
    assert_schema(&v);
}

#[test]
fn dp_identity_gaussian() {
    let (code, v) = run(&["dp", "identity", "--model", "gaussian", "--grid", "201"]);
    assert_eq!(code, 0);
    assert_schema(&v);
    let r = &v["result"];
    assert!((r["D_star"].as_f64().unwrap() - 0.5).abs() < 0.01);
    assert!((r["D0_direct"].as_f64().unwrap() - 0.5858).abs() < 0.02);
    assert!(r["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn dp_curve_and_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let (code, v) = run(&["dp", "curve", "--model", "binary", "--points", "11", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_schema(&v);
    assert_eq!(v["result"]["shape"]["convex"], true);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 12);
    let (code, v) = run(&["dp", "sample-mse", "--model", "binary", "--samples", "20000", "--seed", "3"]);
    assert_eq!(code, 0);
    assert_schema(&v);
    let ratio = v["result"]["ratio"].as_f64().unwrap();
    assert!((1.8..2.2).contains(&ratio), "{ratio}");
    let (_, again) = run(&["dp", "sample-mse", "--model", "binary", "--samples", "20000", "--seed", "3"]);
    assert_eq!(v, again);
}

#[test]
fn bands_at_22050() {
    let (code, v) = run(&["bands", "--fs", "22050"]);
    assert_eq!(code, 0);
    assert_schema(&v);
    assert_eq!(v["result"]["n_bands"], 3);
    assert_eq!(v["result"]["upper_edges_hz"], json!([4000.0, 8000.0, 11025.0]));
}

#[test]
fn curate_score_filter_hist() {
    let c = corpus();
    let scores = c.path("scores.jsonl");
    let (code, v) = run(&["curate", "score", "--manifest", &c.path("manifest.jsonl"), "--out", &scores, "--workers", "4"]);
    assert_eq!(code, 0, "{v:#}");
    assert_schema(&v);

    // A hand-made sidecar keeps the accounting check independent of the scorer.
    let mut side = String::new();
    for i in 0..20 {
        side.push_str(&format!("{}\n", json!({"id": format!("utt{i:02}"), "score": i as f64 / 20.0})));
    }
    let sidecar = c.path("side.jsonl");
    std::fs::write(&sidecar, side).unwrap();
    let kept = c.path("kept.jsonl");
    let hist_csv = c.path("hist.csv");
    let (code, v) = run(&[
        "curate", "filter", "--manifest", &c.path("manifest.jsonl"), "--scores", &sidecar, "--tau", "0.65",
        "--out-manifest", &kept, "--csv", &hist_csv,
    ]);
    assert_eq!(code, 0, "{v:#}");
    assert_schema(&v);
    let r = &v["result"];
    let (k, d, t) = (r["kept_hours"].as_f64().unwrap(), r["dropped_hours"].as_f64().unwrap(), r["total_hours"].as_f64().unwrap());
    assert!((k + d - t).abs() < 1e-12);
    assert_eq!(r["kept"].as_array().unwrap().len(), 7);
    assert_eq!(std::fs::read_to_string(&kept).unwrap().lines().count(), 7);
    let pts = &r["reference"]["points"];
    assert_eq!(pts[2], json!({"tau": 0.72, "hours": 629.0}));
    assert!(std::fs::read_to_string(&hist_csv).unwrap().starts_with("source,"));

    let (code, v) = run(&["curate", "hist", "--manifest", &c.path("manifest.jsonl"), "--scores", &sidecar, "--bins", "4"]);
    assert_eq!(code, 0);
    assert_schema(&v);
    assert_eq!(v["result"]["per_source"]["a"]["histogram"]["counts"].as_array().unwrap().len(), 4);
}

#[test]
fn signal_and_twostage_pipeline() {
    let c = corpus();
    let p = |s: &str| c.path(s);
    let mut outputs = Vec::new();
    let mut go = |args: &[&str]| {
        let (code, v) = run(args);
        assert_eq!(code, 0, "{args:?}: {v:#}");
        assert_schema(&v);
        outputs.push(v.clone());
        v
    };
    go(&["rir", "decompose", "--rir", &p("rirs/r0.wav"), "--window-ms", "50", "--out", &p("rec.json")]);
    let t = go(&["rir", "targets", "--rir", &p("rirs/r0.wav"), "--clean", &p("clean/utt00.wav"), "--out-dir", &p("targets")]);
    assert_eq!(t["result"]["files"].as_array().unwrap().len(), 4);
    let s = go(&["stft", "--input", &p("clean/utt03.wav"), "--out", &p("utt03.sfig")]);
    assert_eq!(s["result"]["win_len"], 640);
    go(&["istft", "--input", &p("utt03.sfig"), "--out", &p("utt03_back.wav")]);
    go(&["twostage", "regress", "--noisy", &p("targets/reverberant.wav"), "--noise", &p("noise/n0.wav"), "--out", &p("reg.sfig")]);
    go(&["twostage", "fit", "--clean", &p("clean/utt00.wav"), &p("clean/utt01.wav"), "--resolution", "64", "--out", &p("c.tsqc")]);
    let corr = go(&["twostage", "correct", "--regressed", &p("reg.sfig"), "--corrector", &p("c.tsqc"), "--out", &p("final.sfig")]);
    assert_eq!(corr["result"]["residual_identity_exact"], true);
    let rc = go(&[
        "twostage", "residual-corr", "--clean", &p("clean/utt00.wav"), "--regressed", &p("reg.sfig"), "--final", &p("clean/utt00.wav"),
    ]);
    assert_eq!(rc["result"]["correlation"], 1.0);
    let l = go(&["twostage", "lipschitz", "--widths", "8,8,8", "--pairs", "200"]);
    assert_eq!(l["result"]["violations"], 0);
    let m = go(&["metrics", "--ref", &p("clean/utt03.wav"), "--est", &p("utt03_back.wav")]);
    assert!(m["result"]["sdr_db"].as_f64().unwrap() > 60.0);
    std::fs::write(
        c.root.join("pairs.jsonl"),
        format!("{}\n{}\n", json!({"ref_path": "clean/utt03.wav", "est_path": "utt03_back.wav"}), json!({"ref_path": "clean/utt00.wav", "est_path": "targets/reverberant.wav"})),
    )
    .unwrap();
    let b = go(&["metrics", "--pairs", &p("pairs.jsonl"), "--out", &p("per_pair.jsonl"), "--workers", "2"]);
    assert_eq!(b["result"]["aggregate"]["count"], 2);
}

#[test]
fn exit_codes() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let (code, v) = run(&["stft", "--input", "/definitely/not/here.wav", "--out", "/tmp/x.sfig"]);
    assert_eq!(code, 2);
    assert_schema(&v);
    assert_eq!(v["exit_code"], 2);
    let (code, v) = run(&["bands", "--fs", "11000", "--width-hz=-5"]);
    assert_eq!(code, 1);
    assert_schema(&v);
    let (code, _) = run(&["dp", "identity", "--model", "gaussian", "--grid", "1"]);
    assert_eq!(code, 1);
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
