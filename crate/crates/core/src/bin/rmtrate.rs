fn main() {
    std::process::exit(rmtrate::cli::run(std::env::args_os()));
}
