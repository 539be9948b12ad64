//! Drives the command-line interface in-process: train the constant
//! problem, export the grid, and compare it with itself.

use dflm::cli::main_with_args;

fn main() {
    let dir = std::env::temp_dir().join("dflm-cli-pipeline");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("constant.toml");
    std::fs::write(&config, dflm::config::bundled("constant").unwrap()).unwrap();
    let run = dir.join("run");
    let csv = dir.join("u.csv");
    let s = |p: &std::path::Path| p.to_str().unwrap().to_string();

    let steps: Vec<Vec<String>> = vec![
        vec!["train".into(), "--config".into(), s(&config), "--out".into(), s(&run), "--iterations".into(), "20".into()],
        vec!["evaluate".into(), "--checkpoint".into(), s(&run.join("final.bin")), "--grid".into(), "101".into(), "--out".into(), s(&csv)],
        vec!["compare".into(), "--a".into(), s(&csv), "--b".into(), s(&csv)],
    ];
    for args in steps {
        println!("$ dflm {}", args.join(" "));
        let code = main_with_args(std::iter::once("dflm".to_string()).chain(args));
        println!("exit code {code}");
    }
}
