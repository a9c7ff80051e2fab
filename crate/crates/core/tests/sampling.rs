use gp_moment::experiments::simulate_data;
use gp_moment::mcmc::kernel_density;
use gp_moment::model::{builtin_model, exponential_overid, mean_gaussian, mean_truncated};
use gp_moment::numerics::{Grid, Measure};
use nalgebra::DVector;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn simulated_means_follow_the_law_of_large_numbers() {
    let n = 1_000_000;
    for (model, theta) in [(mean_gaussian(), 0.7), (mean_truncated(), 0.4), (exponential_overid(), 2.0)] {
        let data = simulate_data(&model, n, &[theta], 11).unwrap();
        assert_eq!(data.len(), n);
        let m = mean(&data);
        assert!((m - theta).abs() < 0.01, "{}: sample mean {m} vs θ* {theta}", model.name);
        // Every moment condition averages to zero at the truth.
        let pi = Measure::empirical(&data).unwrap();
        for g in &model.constraint_functions(&[theta], pi.nodes()).unwrap()[1..] {
            let avg = pi.integral(g).unwrap();
            assert!(avg.abs() < 0.05, "{}: {avg}", model.name);
        }
    }
}

#[test]
fn truncated_draws_stay_in_support() {
    let data = simulate_data(&mean_truncated(), 10_000, &[-0.6], 3).unwrap();
    assert!(data.iter().all(|x| (-1.0..=1.0).contains(x)));
    assert!(simulate_data(&mean_truncated(), 10, &[0.95], 3).is_err());
}

#[test]
fn simulation_is_seeded() {
    let m = builtin_model("exponential_overid").unwrap();
    let a = simulate_data(&m, 100, &[2.0], 5).unwrap();
    assert_eq!(a, simulate_data(&m, 100, &[2.0], 5).unwrap());
    assert_ne!(a, simulate_data(&m, 100, &[2.0], 6).unwrap());
    assert!(simulate_data(&m, 0, &[2.0], 5).is_err());
}

#[test]
fn kernel_density_integrates_to_one() {
    let draws = simulate_data(&mean_gaussian(), 5000, &[1.0], 9).unwrap();
    let grid = Grid::uniform(-5.0, 7.0, 1201).unwrap();
    let dens = kernel_density(&draws, 0.2, grid.points()).unwrap();
    let leb = Measure::lebesgue(grid);
    let total = leb.integral(dens.values()).unwrap();
    assert!((total - 1.0).abs() < 1e-2, "{total}");
    let first = leb.integral(&dens.values().component_mul(&DVector::from_column_slice(leb.nodes()))).unwrap();
    assert!((first - mean(&draws)).abs() < 1e-2, "{first}");
    assert!(kernel_density(&draws, 0.0, &[0.0]).is_err());
}
