fn main() {
    std::process::exit(ctcr_consensus::cli::run(std::env::args_os()));
}
