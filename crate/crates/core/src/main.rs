fn main() {
    std::process::exit(condout::cli::run(std::env::args_os()));
}
