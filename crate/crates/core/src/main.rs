fn main() -> std::process::ExitCode {
    leafvote::cli::main()
}
