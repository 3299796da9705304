fn main() {
    std::process::exit(qmetro_cli::run(std::env::args_os()));
}
