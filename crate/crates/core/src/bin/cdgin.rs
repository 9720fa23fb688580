fn main() {
    std::process::exit(cdgin::cli::run(std::env::args_os()));
}
