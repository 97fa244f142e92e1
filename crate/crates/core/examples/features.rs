//! Feature plumbing: CMVN statistics, frame stacking and the binary file
//! format.

use streamslu::features::{
    accumulate_cmvn, apply_cmvn, read_features, stack_frames, stacked_len, write_features, FeatureMatrix,
    DEFAULT_CMVN_EPS,
};

fn main() -> streamslu::Result<()> {
    let rows: Vec<Vec<f64>> = (0..20).map(|t| vec![t as f64, 10.0 - 0.5 * t as f64, 3.0]).collect();
    let x = FeatureMatrix::from_rows(&rows)?;

    let stats = accumulate_cmvn([&x])?;
    println!("mean {:?}", stats.mean);
    println!("var  {:?}", stats.variance);
    let norm = apply_cmvn(&x, &stats, DEFAULT_CMVN_EPS)?;
    println!("first normalized frame {:.3?}", norm.frame(0));

    let (w, s) = (8, 3);
    let stacked = stack_frames(&norm, w, s)?;
    println!(
        "stacking {} frames by {w} with stride {s}: {} frames of dim {} (formula {})",
        x.frame_count(),
        stacked.frame_count(),
        stacked.dim(),
        stacked_len(x.frame_count(), w, s)
    );

    let mut buf = Vec::new();
    write_features(&mut buf, &stacked)?;
    let back = read_features(buf.as_slice())?;
    let err = back
        .matrix()
        .as_slice()
        .iter()
        .zip(stacked.matrix().as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // stored as f32
    println!("{} bytes on disk, round trip max error {err:.1e}", buf.len());
    Ok(())
}
