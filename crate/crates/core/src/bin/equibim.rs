fn main() {
    std::process::exit(equibim::cli::run(std::env::args_os()));
}
