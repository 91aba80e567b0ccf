fn main() {
    if let Err(e) = distilab::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
