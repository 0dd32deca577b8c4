fn main() {
    use locbound::experiments::{substream, AveragePocStudy};
    use locbound::channel::{sample_bias_sequence, AnchorPaths};
    use locbound::fim::path_overlap_coefficient;
    use locbound::geometry::Sight;
    let w = locbound::Waveform64::canonical_pulse();
    // replicate criterion 5 cells and catch the first failing draw
    for (cell, ia) in [(0u64, 1.4e-9), (1u64, 3.5e-9)] {
        let rate = 1.0 / ia;
        let mut worst: f64 = 0.0;
        for rep in 0..1000u64 {
            let mut rng = substream(65_2024, cell, rep);
            let biases = sample_bias_sequence::<f64, _>(rate, 50, Sight::Los, &mut rng).unwrap();
            let paths = AnchorPaths::new(biases, vec![1.0; 50]).unwrap();
            match path_overlap_coefficient(&paths, &w) {
                Ok(chi) => { if chi > worst { worst = chi; } }
                Err(e) => { println!("cell {cell} rep {rep}: {e}"); break; }
            }
        }
        println!("cell {cell} (1/nu = {} ns): worst chi = {worst}", ia*1e9);
    }
    let study = AveragePocStudy { waveform: w, inter_arrival_s: vec![1.4e-9, 3.5e-9], path_counts: vec![50], replications: 1000, seed: 65_2024 };
    let t = study.run().unwrap();
    println!("{}", t.to_csv_string());
}
