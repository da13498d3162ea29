use clap::Parser;

fn main() {
    let cli = match fts_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { fts_cli::EXIT_INPUT } else { 0 };
            std::process::exit(code);
        }
    };
    let code = fts_cli::run(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
