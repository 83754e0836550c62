fn main() {
    std::process::exit(reltori::cli::run(std::env::args_os()));
}
