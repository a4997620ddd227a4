fn main() {
    std::process::exit(floquet_spectral::cli_io::run_command(std::env::args_os()));
}
