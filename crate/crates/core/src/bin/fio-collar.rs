fn main() {
    let code = fio_collar::cli::main_from(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
