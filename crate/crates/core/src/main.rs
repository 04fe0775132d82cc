fn main() -> std::process::ExitCode {
    clusterpp::cli::main_entry()
}
