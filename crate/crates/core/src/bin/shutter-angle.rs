fn main() {
    std::process::exit(shutter_angle::cli::run(std::env::args_os()));
}
