fn main() {
    std::process::exit(ppr::cli::run(std::env::args_os()));
}
