fn main() -> std::process::ExitCode {
    tascom_core::cli::run()
}
