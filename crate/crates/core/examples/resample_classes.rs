//! Interpolated over/under-sampling across the p_u range.

use offlang::resample::{self, ClassCounts, ResamplePlan};

fn main() -> offlang::Result<()> {
    let counts = ClassCounts::new([(0, 1929), (1, 852), (2, 319)].into_iter().collect())?;
    for p_u in [0.0, 0.3, 0.7, 1.0] {
        let plan = ResamplePlan::new(&counts, p_u)?;
        let mut out = Vec::new();
        resample::write_report(&counts, &plan, &["IND", "GRP", "OTH"], &mut out)?;
        println!("p_u = {p_u}\n{}", String::from_utf8_lossy(&out));
    }

    let labels: Vec<usize> = (0..30).map(|i| usize::from(i % 5 == 0)).collect();
    let idx = resample::rebalance_indices(&labels, 0.5, 42)?;
    let ones = idx.iter().filter(|&&i| labels[i] == 1).count();
    println!("24/6 split at p_u=0.5 -> {} examples, {} of class 1", idx.len(), ones);
    Ok(())
}
