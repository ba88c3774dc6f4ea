mod common;

use std::path::PathBuf;
use std::process::Command;

use common::*;
use covclose::tbgen::{splice_body, template_for_design, TemplateOptions};

const DESIGNS: [(&str, &str); 10] = [
    ("alu", "alu"),
    ("caesar_cipher", "caesar_cipher"),
    ("dual_port_memory", "dual_port_memory"),
    ("fifo", "fifo"),
    ("fixed_arbiter", "fixed_arbiter"),
    ("lfsr", "lfsr_top"),
    ("multiplexer", "multiplexer"),
    ("toy_counter", "toy_counter"),
    ("ttc_lite", "ttc_lite"),
    ("uart_lite", "uart_top"),
];

fn slang_available() -> bool {
    Command::new("python3")
        .args(["-c", "import pyslang"])
        .output()
        .is_ok_and(|o| o.status.success())
}

fn sources(design: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(design_dir(design))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "v" || x == "sv"))
        .collect();
    files.sort();
    files
}

#[test]
fn templates_elaborate_for_every_design() {
    if !slang_available() {
        eprintln!("SKIP: pyslang not available");
        return;
    }
    let checker = repo_root().join("tools/slang_check.py");
    let dir = tempfile::tempdir().unwrap();
    let body = "  initial begin\n    #40;\n    $finish;\n  end\n";
    for (design, top) in DESIGNS {
        let model = load_design(design, top);
        let template = template_for_design(&model, TemplateOptions::default()).unwrap();
        for (tag, text) in [
            ("empty", template.text()),
            ("body", splice_body(&template, body).unwrap()),
        ] {
            let tb = dir.path().join(format!("{design}_{tag}.sv"));
            std::fs::write(&tb, text).unwrap();
            let out = Command::new("python3")
                .arg(&checker)
                .args(["--default-timescale", "--top", "tb"])
                .args(sources(design))
                .arg(&tb)
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "{design} ({tag}): {}{}",
                String::from_utf8_lossy(&out.stdout),
                String::from_utf8_lossy(&out.stderr)
            );
        }
    }
}
