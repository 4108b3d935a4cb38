use clap::Parser;

fn main() {
    let cli = capabench::cli::Cli::parse();
    std::process::exit(capabench::cli::main_with(cli));
}
