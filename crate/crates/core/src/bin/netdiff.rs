fn main() {
    std::process::exit(netdiff::cli::run(std::env::args_os()));
}
