fn main() {
    std::process::exit(fleet_cli::app::main_with(std::env::args_os()));
}
