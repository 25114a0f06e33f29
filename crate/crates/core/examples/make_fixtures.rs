//! Writes a synthetic mission cohort with nominal funding and a price index.
//!
//! Usage: `cargo run -p steti-core --example make_fixtures -- <dir> [seed]`

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use steti::dataset::{deflate, write_funding, write_missions, Deflator, FundingTable};
use steti::synthetic::{synthetic_funding, synthetic_missions, MissionSpec};

const FIRST_YEAR: i32 = 1930;
const LAST_YEAR: i32 = 2023;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("missing output directory")?);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&dir)?;

    let real = synthetic_funding(FIRST_YEAR, LAST_YEAR, seed);
    let mut spec = MissionSpec::default();
    spec.cohort.seed = seed;
    let missions = synthetic_missions(&spec, &real);
    write_missions(File::create(dir.join("missions.csv"))?, &missions)?;

    let index: BTreeMap<i32, f64> = (FIRST_YEAR..=LAST_YEAR)
        .map(|y| (y, 100.0 * 1.03f64.powi(y - LAST_YEAR)))
        .collect();
    // Inflating by the reciprocal index turns constant dollars into nominal ones.
    let inflate = Deflator::new(index.clone(), LAST_YEAR)?.inverted();
    let nominal = real
        .series()
        .iter()
        .map(|s| deflate(s, &inflate))
        .collect::<Result<Vec<_>, _>>()?;
    write_funding(File::create(dir.join("funding.csv"))?, &FundingTable::from_series(&nominal)?)?;

    let mut f = File::create(dir.join("deflator.csv"))?;
    writeln!(f, "year,index")?;
    for (y, v) in &index {
        writeln!(f, "{y},{v}")?;
    }
    let failed = missions.iter().filter(|m| m.is_inactive()).count();
    println!("wrote {} missions ({failed} failed) to {}", missions.len(), dir.display());
    Ok(())
}
