//! Linear classifier on pooled MNIST images. Uses the IDX files in
//! $SGDTHERMO_DATA_DIR when present, otherwise a small synthetic IDX set.
//!
//! cargo run --release --example mnist_classifier

use sgdthermo::models::mnist::{load_mnist, train_files, write_idx};
use sgdthermo::models::ModelSpec;
use sgdthermo::rng::run_rng;
use sgdthermo::stationary::{find_minimum, wr_theory, Landscape};
use rand::Rng;

fn main() -> sgdthermo::Result<()> {
    let dir = match std::env::var_os("SGDTHERMO_DATA_DIR") {
        Some(d) => std::path::PathBuf::from(d),
        None => {
            // Ten blurry "digits": a bright square whose position encodes the label.
            let dir = std::env::temp_dir().join("sgdthermo_fake_mnist");
            std::fs::create_dir_all(&dir)?;
            let mut rng = run_rng(1, 0);
            let labels: Vec<u8> = (0..500).map(|i| (i % 10) as u8).collect();
            let images: Vec<Vec<u8>> = labels
                .iter()
                .map(|&l| {
                    let (r0, c0) = (4 + 2 * (l as usize / 5) * 5, 2 + 5 * (l as usize % 5));
                    (0..784)
                        .map(|p| {
                            let (r, c) = (p / 28, p % 28);
                            let on = (r0..r0 + 8).contains(&r) && (c0..c0 + 4).contains(&c);
                            if on { 200 + rng.random_range(0..50) } else { rng.random_range(0..30) }
                        })
                        .collect()
                })
                .collect();
            let (img, lbl) = train_files(&dir);
            write_idx(&img, &lbl, &images, &labels)?;
            println!("no SGDTHERMO_DATA_DIR; wrote a synthetic set to {}", dir.display());
            dir
        }
    };
    let (img, lbl) = train_files(&dir);
    let full = load_mnist(&img, &lbl)?;
    let data = full.subset(&(0..full.len().min(1000)).collect::<Vec<_>>())?;
    let model = ModelSpec::linear_classifier(data.d_in(), data.d_out(), 1e-2);
    println!("{} samples, {} inputs, {} parameters", data.len(), data.d_in(), model.n_params());

    let t0 = find_minimum(&model, &data, &vec![0.0; model.n_params()], Landscape::Plain)?;
    println!("loss at minimum {:.5}", model.loss(&data, t0.as_slice()));
    let th = wr_theory(&model, &data, t0.as_slice(), 1e-4, 100)?;
    println!("tr Sigma = {:.3e}, entropy rate = {:.3e} per step", th.sigma.trace(), th.entropy_rate);
    Ok(())
}
