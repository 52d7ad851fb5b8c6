use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    let cli = match censpde::cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.kind().as_str().map_or_else(|| e.to_string(), |k| format!("{k}: {}", e.render()));
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("error kind=usage message={first:?}");
            std::process::exit(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = censpde::cli::run(cli) {
        eprintln!("{}", e.error_line());
        std::process::exit(e.exit_code());
    }
}
