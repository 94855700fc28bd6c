fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVSIM_LOG", "warn")).init();
    std::process::exit(evsim::cli::run(std::env::args_os()));
}
