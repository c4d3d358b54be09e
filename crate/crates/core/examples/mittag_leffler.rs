//! Tabulate Mittag-Leffler functions against closed forms.

use subdiffusion::specfun::{mittag_leffler, MLParams};

fn main() -> subdiffusion::Result<()> {
    println!("{:>8} {:>16} {:>16} {:>16}", "z", "E_1(z)", "exp(z)", "E_1/2(z)");
    for z in [-10.0, -1.0, -0.1, 0.0, 0.5, 2.0] {
        let e1 = mittag_leffler(MLParams::new(1.0, 1.0)?, z)?;
        let eh = mittag_leffler(MLParams::new(0.5, 1.0)?, z)?;
        println!("{z:>8.2} {e1:>16.10e} {:>16.10e} {eh:>16.10e}", f64::exp(z));
    }
    Ok(())
}
