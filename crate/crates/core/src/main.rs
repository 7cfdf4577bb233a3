fn main() {
    std::process::exit(rentbuy::scenario_cli::run(std::env::args_os()));
}
