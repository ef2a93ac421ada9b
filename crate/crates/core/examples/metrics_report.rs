//! Confusion matrix, per-class precision/recall/F1 and macro-F1.

use offlang::eval;

fn main() -> offlang::Result<()> {
    let truth = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
    let pred = [0, 0, 1, 0, 1, 1, 2, 2, 0, 2];
    let report = eval::evaluate(&truth, &pred, 3)?;
    for row in &report.confusion.counts {
        println!("{row:?}");
    }
    print!("{}", report.to_table(&["IND", "GRP", "OTH"]));
    report.write_csv(&["IND", "GRP", "OTH"], std::io::stdout())?;
    Ok(())
}
