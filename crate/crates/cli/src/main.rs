use clap::Parser;

fn main() {
    if let Err(e) = saccade_cli::run(saccade_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
