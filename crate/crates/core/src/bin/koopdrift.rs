fn main() {
    std::process::exit(koopdrift::cli::run(std::env::args_os()));
}
