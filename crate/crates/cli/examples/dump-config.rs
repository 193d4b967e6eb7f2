//! Regenerates `config.default` at the repository root:
//! `cargo run -p dms-cli --example dump-config > config.default`

fn main() {
    let cfg = dms_cli::config::Config::default();
    println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
}
