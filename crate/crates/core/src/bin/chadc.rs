fn main() {
    let code = chad::with_big_stack(|| {
        let args: Vec<_> = std::env::args_os().collect();
        chad::cli::main_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
    });
    std::process::exit(code);
}
