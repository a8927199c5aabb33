use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use saetbl::market_data::KlineTransport;
use saetbl::Error;
use saetbl_cli::HttpTransport;

fn fixture_into(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic_30d.toml");
    let dst = dir.join("run.toml");
    std::fs::write(&dst, edit(std::fs::read_to_string(src).unwrap())).unwrap();
    dst
}

fn saetbl(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saetbl"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_run_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_into(dir.path(), |s| s);
    for cmd in [&["synth"][..], &["resample"], &["label"], &["run", "--jobs", "2"], &["report"], &["portfolio"]] {
        let out = saetbl(&cfg, cmd);
        assert_eq!(out.status.code(), Some(0), "{cmd:?}: {}", stderr(&out));
    }
    let out = dir.path().join("out");
    for f in ["run/SYNA/manifest.json", "run/SYNA/trades.csv", "report/SYNA.json", "report/SYNA_plot.csv", "portfolio/correlation.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden/synthetic_30d_SYNA.json");
    assert_eq!(std::fs::read(out.join("report/SYNA.json")).unwrap(), std::fs::read(golden).unwrap());
}

#[test]
fn help_lists_every_command() {
    let out = Command::new(env!("CARGO_BIN_EXE_saetbl")).arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["fetch", "synth", "resample", "label", "run", "report", "portfolio", "Exit codes"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_into(dir.path(), |s| s.replace("interval_minutes = 30", "interval_minutes = 7"));
    let out = saetbl(&cfg, &["resample"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("interval"));
    let missing = saetbl(&dir.path().join("nope.toml"), &["run"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn missing_inputs_exit_3_and_name_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_into(dir.path(), |s| s);
    let out = saetbl(&cfg, &["run"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("`resample`"), "{}", stderr(&out));
}

#[test]
fn numeric_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    // no differencing order fits in a two-term window
    let cfg = fixture_into(dir.path(), |s| s.replace("max_width = 2000", "max_width = 2"));
    for cmd in ["synth", "resample"] {
        assert_eq!(saetbl(&cfg, &[cmd]).status.code(), Some(0));
    }
    let out = saetbl(&cfg, &["run"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("split 0"));
}

/// Serves one canned HTTP response per connection.
fn serve(responses: Vec<(u16, &'static str)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for (code, body) in responses {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = s.read(&mut buf);
            let reply = format!(
                "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            s.write_all(reply.as_bytes()).unwrap();
        }
    });
    format!("http://{addr}")
}

#[test]
fn transport_classifies_http_status() {
    let url = serve(vec![(200, "[]"), (429, "slow down"), (503, ""), (400, "bad symbol")]);
    let t = HttpTransport::new(url, Duration::from_secs(5));
    assert_eq!(t.get("/api/v3/klines?symbol=X").unwrap(), "[]");
    for expect_retry in [true, true, false] {
        match t.get("/api/v3/klines?symbol=X") {
            Err(Error::Transport { retriable, .. }) => assert_eq!(retriable, expect_retry),
            other => panic!("unexpected {other:?}"),
        }
    }
}
