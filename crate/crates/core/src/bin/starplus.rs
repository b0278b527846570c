fn main() -> std::process::ExitCode {
    starplus::cli::main()
}
