fn main() {
    env_logger::init();
    std::process::exit(panolayout::cli::run(std::env::args_os()));
}
