//! Prints the event log of the built-in healthcare scenario.

fn main() -> dhabe::Result<()> {
    let log = dhabe::harness::run_scenario(&dhabe::harness::Scenario::healthcare())?;
    print!("{log}");
    if !log.all_passed() {
        std::process::exit(1);
    }
    Ok(())
}
