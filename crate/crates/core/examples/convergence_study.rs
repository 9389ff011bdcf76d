// A configuration-driven refinement study through the harness: the ergodic
// constant is computed at `hx`, `hx/2` and `hx/4`.

use nonlocal_hjb::harness::{run, RunConfig};

const CONFIG: &str = r#"
mode = "convergence-study"

[problem]
family = "example-1-1"
dim = 1
s = 0.9
gamma = 1.6
theta = 0.1

[grid]
hx = 0.5
radii = [8.0, 16.0]

[study]
base = "ergodic"
refinements = 3
"#;

pub fn run_example() -> nonlocal_hjb::Result<Vec<f64>> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    let out = std::env::temp_dir().join(format!("nonlocal-hjb-study-{}", std::process::id()));
    let report = run(&cfg, &out)?;
    let mut values = Vec::new();
    if let Some(levels) = report.summary["levels"].as_array() {
        for l in levels {
            println!(
                "hx = {:<6} lambda* = {:.8}  change {}",
                l["hx"],
                l["value"].as_f64().unwrap_or(f64::NAN),
                l["value_change"]
            );
            values.push(l["value"].as_f64().unwrap_or(f64::NAN));
        }
    }
    println!("status {:?}, outputs in {}", report.status, out.display());
    std::fs::remove_dir_all(&out)?;
    Ok(values)
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
