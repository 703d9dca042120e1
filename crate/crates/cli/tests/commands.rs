use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;
use uwstyle_core::checkpoint;
use uwstyle_core::datasynth::DatasetManifest;
use uwstyle_core::model::ModelConfig;
use uwstyle_core::trainer::{TrainConfig, TrainState};
use uwstyle_core::Image;
use uwstyle_serve::{router, AppState, ServeConfig};

const TINY_MODEL: &str = "\
[train.config]
patch_size = 32
[train.config.model]
base_filters = 4
content_channels = 8
num_content_resblocks = 1
style_channels = 8
generator_resblocks = 1
adain_param_net_hidden = 8
transform_hidden = 4
";

fn tiny_model() -> ModelConfig {
    ModelConfig {
        base_filters: 4,
        content_channels: 8,
        num_content_resblocks: 1,
        style_channels: 8,
        generator_resblocks: 1,
        adain_param_net_hidden: 8,
        transform_hidden: 4,
        ..ModelConfig::default()
    }
}

fn tiny_checkpoint(dir: &Path) -> PathBuf {
    let mut state = TrainState::new(TrainConfig {
        patch_size: 32,
        model: tiny_model(),
        ..TrainConfig::default()
    })
    .unwrap();
    let nudged: Vec<(String, _)> = state
        .model
        .gen_params()
        .iter()
        .filter(|(n, _)| n.starts_with("transform"))
        .map(|(n, t)| (n.to_string(), t.map(|v| v + 0.05)))
        .collect();
    for (name, t) in nudged {
        state.model.gen_params_mut().set(&name, t).unwrap();
    }
    let path = dir.join("tiny.ckpt");
    checkpoint::save(&state, &path).unwrap();
    path
}

fn uwstyle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwstyle")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = uwstyle(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A tiny dataset plus a checkpoint, shared by most tests.
struct Fixture {
    dir: tempfile::TempDir,
    data: PathBuf,
    ckpt: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["synth", "--seed", "3", "--count", "4", "--height", "32", "--width", "36", "--out", s(&data)]);
        let ckpt = tiny_checkpoint(dir.path());
        Self { dir, data, ckpt }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn real_image(&self, id: &str) -> PathBuf {
        self.data.join(format!("real/{id}.png"))
    }
}

#[test]
fn synth_writes_every_file_and_echo() {
    let f = Fixture::new();
    let manifest = DatasetManifest::load(&f.data.join("manifest.toml")).unwrap();
    assert_eq!(manifest.samples.len(), 4);
    for sub in ["clean", "synthetic", "real", "depth"] {
        assert_eq!(fs::read_dir(f.data.join(sub)).unwrap().count(), 4, "{sub}");
    }
    let img = Image::load(&f.real_image("0000")).unwrap();
    assert_eq!((img.height(), img.width()), (32, 36));

    // replaying the echo regenerates identical files
    let again = f.path("again");
    let echo = fs::read_to_string(f.data.join("run_config.toml")).unwrap();
    let replay = f.path("replay.toml");
    fs::write(&replay, echo.replace(s(&f.data), s(&again))).unwrap();
    ok(&["synth", "--config", s(&replay)]);
    for id in ["0000", "0003"] {
        assert_eq!(
            fs::read(f.real_image(id)).unwrap(),
            fs::read(again.join(format!("real/{id}.png"))).unwrap()
        );
    }
}

#[test]
fn interpolate_zero_matches_enhance_zero() {
    let f = Fixture::new();
    let input = f.real_image("0001");
    let single = f.path("single.png");
    let sweep = f.path("sweep");
    ok(&["enhance", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--output", s(&single), "--alpha", "0"]);
    ok(&["interpolate", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--out-dir", s(&sweep)]);
    assert_eq!(fs::read(&single).unwrap(), fs::read(sweep.join("alpha_+0.000.png")).unwrap());
    let names: Vec<_> = fs::read_dir(&sweep)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    assert_eq!(names.len(), 5);

    // crop to a multiple of 4 happens before decoding: 32x36 stays 32x36
    let out = Image::load(&single).unwrap();
    assert_eq!((out.height(), out.width()), (32, 36));
    let full = f.path("full.png");
    ok(&["enhance", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--output", s(&full)]);
    assert_eq!(fs::read(&full).unwrap(), fs::read(sweep.join("alpha_+1.000.png")).unwrap());
}

#[test]
fn echo_reproduces_enhance() {
    let f = Fixture::new();
    let input = f.real_image("0002");
    let output = f.path("out.png");
    ok(&[
        "enhance", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--output", s(&output),
        "--alpha", "0.3", "--domain", "syn",
    ]);
    let first = fs::read(&output).unwrap();
    let echo = f.path("out.png.run.toml");
    let text = fs::read_to_string(&echo).unwrap();
    assert!(text.starts_with("[enhance]"), "{text}");
    let replay = f.path("replay.toml");
    fs::write(&replay, &text).unwrap();
    fs::remove_file(&output).unwrap();
    ok(&["enhance", "--config", s(&replay)]);
    assert_eq!(fs::read(&output).unwrap(), first);

    // a flag still wins over the file
    ok(&["enhance", "--config", s(&replay), "--alpha", "0.9"]);
    let echoed = fs::read_to_string(&echo).unwrap();
    assert!(echoed.contains("alpha = 0.9") && echoed.contains("domain = \"syn\""), "{echoed}");
}

#[test]
fn inputs_are_left_untouched() {
    let f = Fixture::new();
    let input = f.real_image("0000");
    let before = fs::read(&input).unwrap();
    let ckpt_before = fs::read(&f.ckpt).unwrap();
    let out = uwstyle(&["enhance", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--output", s(&input)]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["enhance", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--output", s(&f.path("x.png"))]);
    ok(&[
        "translate", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--style",
        s(&f.data.join("synthetic/0001.png")), "--to", "syn", "--output", s(&f.path("t.png")),
    ]);
    assert_eq!(fs::read(&input).unwrap(), before);
    assert_eq!(fs::read(&f.ckpt).unwrap(), ckpt_before);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(uwstyle(&["enhance", "--bogus"]).status.code(), Some(2));
    assert_eq!(uwstyle(&["enhance", "--alpha", "x"]).status.code(), Some(2));
    assert_eq!(uwstyle(&["nonsense"]).status.code(), Some(2));
    let missing = uwstyle(&[
        "enhance", "--checkpoint", s(&f.ckpt), "--input", s(&f.path("nope.png")), "--output",
        s(&f.path("o.png")),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let bad_domain = uwstyle(&[
        "enhance", "--checkpoint", s(&f.ckpt), "--input", s(&f.real_image("0000")), "--output",
        s(&f.path("o.png")), "--domain", "clean",
    ]);
    assert_eq!(bad_domain.status.code(), Some(2));
    let bad_config = f.path("bad.toml");
    fs::write(&bad_config, "[enhance]\nalpah = 1\n").unwrap();
    assert_eq!(uwstyle(&["enhance", "--config", s(&bad_config)]).status.code(), Some(2));
    assert_eq!(uwstyle(&["synth", "--count", "2", "--out", s(&f.path("few"))]).status.code(), Some(2));
}

#[test]
fn eval_writes_csv() {
    let f = Fixture::new();
    let pairs = f.path("pairs.csv");
    let mut text = String::from("id,image,reference\n");
    for id in ["0000", "0001"] {
        let img = f.data.join(format!("synthetic/{id}.png"));
        let reference = f.data.join(format!("clean/{id}.png"));
        text.push_str(&format!("{id},{},{}\n", s(&img), s(&reference)));
    }
    fs::write(&pairs, text).unwrap();
    let stdout = ok(&["eval", "--pairs", s(&pairs), "--metrics", "psnr,ssim,uiqm,uciqe"]).stdout;
    let csv = String::from_utf8(stdout).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "id,psnr,ssim,uiqm,uciqe");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));

    let out = f.path("scores.csv");
    ok(&["eval", "--folder", s(&f.data.join("real")), "--out", s(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("id,uiqm,uciqe"));
    assert_eq!(csv.lines().count(), 6);
    assert!(f.path("scores.csv.run.toml").exists());

    // full-reference metrics need references
    let code = uwstyle(&["eval", "--folder", s(&f.data.join("real")), "--metrics", "psnr"]).status.code();
    assert_eq!(code, Some(3));
    let code = uwstyle(&["eval", "--folder", s(&f.data.join("real")), "--metrics", "niqe"]).status.code();
    assert_eq!(code, Some(2));
}

#[test]
fn train_resume_and_latents() {
    let f = Fixture::new();
    let config = f.path("tiny.toml");
    fs::write(&config, TINY_MODEL).unwrap();
    let run = f.path("run");
    let out = ok(&[
        "train", "--config", s(&config), "--data", s(&f.data), "--out", s(&run), "--steps", "2",
        "--checkpoint-every", "1",
    ]);
    let last = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    assert!(last.ends_with("step_000002.ckpt"), "{}", last.display());
    assert_eq!(checkpoint::load(&last).unwrap().step, 2);

    let resumed = f.path("resumed");
    ok(&[
        "train", "--config", s(&config), "--data", s(&f.data), "--out", s(&resumed), "--steps", "2",
        "--checkpoint-every", "1", "--resume", s(&run.join("checkpoints/step_000001.ckpt")),
    ]);
    assert_eq!(
        fs::read(&last).unwrap(),
        fs::read(resumed.join("checkpoints/step_000002.ckpt")).unwrap()
    );
    let echo = fs::read_to_string(run.join("run_config.toml")).unwrap();
    assert!(echo.contains("base_filters = 4"), "{echo}");

    let lat = f.path("lat");
    ok(&["latents", "--data", s(&f.data), "--checkpoint", s(&last), "--out-dir", s(&lat), "--split", "all"]);
    assert_eq!(fs::read_to_string(lat.join("embedding.csv")).unwrap().lines().count(), 1 + 16);
    let scores: serde_json::Value = serde_json::from_slice(&fs::read(lat.join("scores.json")).unwrap()).unwrap();
    assert_eq!(scores["points"], 16);
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::test]
async fn service_matches_cli_outputs() {
    let f = Fixture::new();
    let app = router(Arc::new(AppState::from_checkpoint(&f.ckpt, ServeConfig::default()).unwrap()));
    for (id, domain) in [("0000", "real"), ("0001", "syn")] {
        let input = if domain == "real" {
            f.real_image(id)
        } else {
            f.data.join(format!("synthetic/{id}.png"))
        };
        let req = Request::post(format!("/api/upload?domain={domain}"))
            .body(Body::from(fs::read(&input).unwrap()))
            .unwrap();
        let (status, body) = call(&app, req).await;
        assert_eq!(status, StatusCode::OK);
        let reply: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let token = reply["token"].as_str().unwrap();
        for alpha in ["0", "0.5", "1", "-0.25"] {
            let output = f.path(&format!("{id}_{alpha}.png"));
            ok(&[
                "enhance", "--checkpoint", s(&f.ckpt), "--input", s(&input), "--output", s(&output),
                "--domain", domain, "--alpha", alpha,
            ]);
            let uri = format!("/api/enhance?token={token}&alpha={alpha}");
            let (status, png) = call(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(png, fs::read(&output).unwrap(), "{id} alpha {alpha}");
        }
    }
}
