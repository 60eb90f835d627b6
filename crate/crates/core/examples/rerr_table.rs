//! Result tables: relative error reduction, rendering, CSV and JSON round trip.

use grl_asr::harness::{rerr, ResultTable, RowKey};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut table = ResultTable::new("example grid", &[0, 1, 2], 82.4);
    for (lambda, f, errs) in [
        (1.0, 1, vec![64.0, 61.5, 63.2]),
        (2.0, 2, vec![60.3, 53.0, 53.2]),
        (4.0, 3, vec![70.1, 72.4, 69.9]),
    ] {
        table.push(RowKey::Grid { lambda, feature_layer: f }, errs)?;
    }
    print!("{}", table.render()?);
    print!("{}", table.to_csv()?);
    let back = ResultTable::from_json(&table.to_json())?;
    println!("json round trip exact: {}", back == table);
    println!("RERR of 64.6 -> 54.6: {:.2}%", rerr(64.6, 54.6)?);
    Ok(())
}
