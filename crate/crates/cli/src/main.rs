fn main() {
    std::process::exit(occlubench_cli::run(std::env::args_os()));
}
