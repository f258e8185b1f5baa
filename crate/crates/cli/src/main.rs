use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIPGUARD_LOG", "info")).init();
    let cli = tipguard_cli::Cli::parse();
    match tipguard_cli::run(cli) {
        Ok(summary) => println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes")),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
