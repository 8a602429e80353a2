fn main() {
    std::process::exit(kimura_cli::run(std::env::args_os()));
}
