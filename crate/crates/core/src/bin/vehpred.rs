fn main() {
    std::process::exit(vehicle_prediction::harness::cli::run(std::env::args_os()));
}
