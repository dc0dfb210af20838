fn main() {
    std::process::exit(ablation_planner::cli::main());
}
