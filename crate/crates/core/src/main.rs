fn main() -> std::process::ExitCode {
    chemotaxis_fkpp::cli::main_entry()
}
