use clap::Parser;

fn main() {
    let cli = prach_cli::Cli::parse();
    if let Err(e) = prach_cli::run(cli) {
        eprintln!("error: {}", e);
        std::process::exit(prach_cli::exit_code(&e));
    }
}
