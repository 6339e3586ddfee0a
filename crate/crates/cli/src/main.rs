use clap::Parser;
use momlab::{execution_from_env, run, Cli, EXIT_CONFIG, EXIT_OK};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = execution_from_env().and_then(|exec| run(cli, exec));
    if let Err(e) = result {
        eprintln!("momlab: {e}");
        std::process::exit(e.exit_code());
    }
}
