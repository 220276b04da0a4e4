use std::io::Write;

use clap::Parser;

fn main() {
    let level = match synpop::cli::Cli::try_parse().map(|c| c.verbose).unwrap_or(0) {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let mut stdout = std::io::stdout().lock();
    let code = synpop::cli::run(std::env::args_os(), &mut stdout);
    let _ = stdout.flush();
    std::process::exit(code);
}
