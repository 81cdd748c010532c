//! Runs the built-in "paper-3-2" scenario in memory and prints its report;
//! pass a directory to also write the artifacts.

use strictmodes::scenario::{list_scenarios, run, Scenario};

fn main() -> strictmodes::Result<()> {
    for (id, desc) in list_scenarios() {
        println!("{id}: {desc}");
    }
    let sc = Scenario::builtin("paper-3-2")?;
    let out = run(&sc, None)?;
    for (name, bytes) in &out.files {
        println!("{name:24} {:>9} bytes", bytes.len());
    }
    println!("{}", String::from_utf8_lossy(&out.files["report.toml"]).lines().take(40).collect::<Vec<_>>().join("\n"));
    if let Some(dir) = std::env::args().nth(1) {
        out.write(std::path::Path::new(&dir))?;
    }
    std::process::exit(out.exit_code());
}
