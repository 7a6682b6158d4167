fn main() {
    std::process::exit(ganc::cli::run(std::env::args_os()));
}
