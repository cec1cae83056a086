fn main() {
    std::process::exit(fpseg_cli::run(std::env::args_os()));
}
