fn main() {
    std::process::exit(capflow_cli::execute(std::env::args_os()));
}
