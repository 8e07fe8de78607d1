fn main() -> std::process::ExitCode {
    swimstat::cli::main()
}
