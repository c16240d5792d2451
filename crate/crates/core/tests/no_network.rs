//! Only the live backend may touch the network.

use std::path::{Path, PathBuf};

const ALLOWED: &str = "llm/live.rs";
const NETWORK_MARKERS: [&str; 5] = ["reqwest", "std::net", "TcpStream", "UdpSocket", "hyper"];

fn rust_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            rust_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
}

#[test]
fn network_code_lives_only_in_the_live_backend() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    rust_files(&src, &mut files);
    assert!(files.len() > 10);
    let mut offenders = Vec::new();
    for f in files {
        let rel = f.strip_prefix(&src).unwrap().to_string_lossy().replace('\\', "/");
        if rel == ALLOWED {
            continue;
        }
        let text = std::fs::read_to_string(&f).unwrap();
        for m in NETWORK_MARKERS {
            if text.contains(m) {
                offenders.push(format!("{rel}: {m}"));
            }
        }
    }
    assert!(offenders.is_empty(), "network use outside {ALLOWED}: {offenders:?}");
}

#[test]
fn live_backend_is_the_only_user_of_the_http_client() {
    let live = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src").join(ALLOWED)).unwrap();
    assert!(live.contains("reqwest"));
}
