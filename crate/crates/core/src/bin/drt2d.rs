fn main() {
    std::process::exit(drt2d::cli::run(std::env::args_os()));
}
