use clap::Parser;
use qfa_cli::commands::requested_threads;
use qfa_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = requested_threads(&cli).and_then(|threads| {
        if let Some(t) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| qfa_cli::CliError::Validation(format!("thread pool: {e}")))?;
        }
        run(&cli.command, &mut std::io::stdout().lock())
    });
    if let Err(e) = result {
        eprintln!("qfa: {e}");
        std::process::exit(e.exit_code());
    }
}
