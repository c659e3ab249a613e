use clap::Parser;

fn main() {
    let cli = dcgrid_cli::Cli::parse();
    std::process::exit(dcgrid_cli::run(&cli));
}
