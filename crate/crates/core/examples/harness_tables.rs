//! Driving the experiment harness from code: a config built from text,
//! the detect command, and its CSV tables written to a directory.

use flowmeter::harness::{detect, ExperimentConfig};

fn main() -> flowmeter::Result<()> {
    let mut cfg = ExperimentConfig::parse(
        "# binary detector, two samples\n\
         speeds = 0, 4e-4\n\
         samples = 2\n\
         t_lo = 0.05\n\
         t_hi = 0.2\n\
         resolution = 1e-3\n\
         true_speed = 4e-4\n",
    )?;
    cfg.set("trials", "50000")?;
    cfg.validate()?;
    let out = std::env::temp_dir().join("flowmeter-harness-example");
    for table in detect(&cfg)? {
        let path = table.write(&out)?;
        println!("{} ({} rows) -> {}", table.name, table.rows.len(), path.display());
        print!("{}", table.body());
    }
    Ok(())
}
