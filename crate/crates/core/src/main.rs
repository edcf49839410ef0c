use clap::Parser;
use phasecast::harness::cli::{exit_code, run, Cli, ErrorRecord};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(line) => println!("{line}"),
        Err(e) => {
            eprintln!("{}", ErrorRecord::new(&e).to_json());
            std::process::exit(exit_code(&e));
        }
    }
}
