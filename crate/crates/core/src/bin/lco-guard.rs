fn main() {
    std::process::exit(lco_guard::cli::run(std::env::args_os()));
}
