fn main() {
    std::process::exit(orbit_mle::cli::run(std::env::args_os()));
}
