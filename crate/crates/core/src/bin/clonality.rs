fn main() {
    std::process::exit(clonality::cli::run(std::env::args_os()));
}
