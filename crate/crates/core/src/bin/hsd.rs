use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv = match hsd::cli::merge_config_file(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let cli = hsd::cli::Cli::parse_from(argv);
    if let Err(e) = hsd::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
