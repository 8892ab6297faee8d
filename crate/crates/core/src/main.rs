fn main() {
    std::process::exit(stochopt::cli::cli_entry(std::env::args_os()));
}
