fn main() {
    std::process::exit(qvuln::experiments::run_cli(std::env::args_os()));
}
