// Temporary development probe; removed before release.
use mot_core::admm::{self, InitScheme, SolverConfig};
use mot_core::cost::CostModel;
use mot_core::density::{gaussian_density, DensityPair};
use mot_core::lattice::{integrate_x, mean_x, Lattice};
use mot_core::pde::{assemble_operator, solve_phi, StepARhs};

fn main() {
    // Residual attainability after the backward-error change.
    let l = Lattice::<f64>::new(128, 128, 0.0, 1.0).unwrap();
    let op = assemble_operator(&l, 64.0).unwrap();
    let pi = std::f64::consts::PI;
    let smooth = mot_core::lattice::Field::from_fn(&l, |t, x| {
        (pi * t).cos() * (pi * x).sin() * 430.0
    });
    let zeros = vec![0.0; 128];
    let rhs = StepARhs::from_parts(&l, &smooth, &zeros, &zeros);
    for tol in [1e-10, 1e-12] {
        match solve_phi(&op, &rhs, tol) {
            Ok(_) => println!("128x128 smooth rhs: tol {tol:e} OK"),
            Err(e) => println!("128x128 smooth rhs: tol {tol:e} FAILED ({e})"),
        }
    }

    // Benchmark-size run.
    let t0 = std::time::Instant::now();
    let rho0 = gaussian_density(&l, 0.5, 0.05).unwrap();
    let rho1 = gaussian_density(&l, 0.5, 0.1).unwrap();
    let pair = DensityPair::new(&l, rho0, rho1).unwrap();
    let cost = CostModel::quadratic(0.00375).unwrap();
    let config = SolverConfig {
        max_iter: 3000,
        res_tol: 0.0,
        init_scheme: InitScheme::LinearMarginal,
        ..Default::default()
    };
    let (state, report) = admm::run(&config, &pair, &cost, &l).unwrap();
    println!("3000 iters in {:.1?}", t0.elapsed());
    for rec in report.history.iter() {
        let i = rec.iteration;
        if i <= 10 || i == 20 || i == 50 || i % 100 == 0 {
            println!(
                "iter {:4}  res {:.6e}  gap {:.6e}",
                i, rec.residual, rec.primal_gap
            );
        }
    }

    let surf = mot_core::calib::extract_sigma2(&state, 0.1).unwrap();
    let s = mot_core::calib::summarize(&surf);
    println!(
        "sigma2 mean {:.6}  min {:.6}  max {:.6}  unmasked {:.3}  clips {}",
        s.sigma2_mean, s.sigma2_min, s.sigma2_max, s.unmasked_fraction, s.clip_count
    );

    // Criterion 2: L1 distance to the constant-diffusion flow at quarter points.
    for frac in [0.25, 0.5, 0.75] {
        let i = (frac * (l.nt() - 1) as f64).round() as usize;
        let t = l.t(i);
        let var = 0.0025 + 0.0075 * t;
        let exact = gaussian_density(&l, 0.5, var.sqrt()).unwrap();
        let diff: Vec<f64> = state
            .rho
            .row(i)
            .iter()
            .zip(&exact)
            .map(|(&a, &b)| (a - b).abs())
            .collect();
        println!("t={t:.4}  L1 to heat flow = {:.5}", integrate_x(&diff, &l));
    }

    // Criterion 4: masses, means, marginal mismatches.
    let mut mass_lo = f64::INFINITY;
    let mut mass_hi = f64::NEG_INFINITY;
    let mut mean_lo = f64::INFINITY;
    let mut mean_hi = f64::NEG_INFINITY;
    for i in 0..l.nt() {
        let mass = integrate_x(state.rho.row(i), &l);
        let mean = mean_x(state.rho.row(i), &l);
        mass_lo = mass_lo.min(mass);
        mass_hi = mass_hi.max(mass);
        mean_lo = mean_lo.min(mean);
        mean_hi = mean_hi.max(mean);
    }
    println!("mass range [{mass_lo:.6}, {mass_hi:.6}]  mean range [{mean_lo:.8}, {mean_hi:.8}]");
    for (row, target, tag) in [(0, pair.rho0(), "t=0"), (l.nt() - 1, pair.rho1(), "t=1")] {
        let diff: Vec<f64> = state
            .rho
            .row(row)
            .iter()
            .zip(target)
            .map(|(&a, &b)| (a - b).abs())
            .collect();
        println!("{tag} marginal L1 mismatch = {:.6}", integrate_x(&diff, &l));
    }

    // Criterion 3 shape: windowed means of the residual history.
    let window = 50;
    let means: Vec<f64> = report
        .history
        .chunks(window)
        .map(|c| c.iter().map(|r| r.residual).sum::<f64>() / c.len() as f64)
        .collect();
    let increases = means.windows(2).filter(|w| w[1] > w[0]).count();
    println!(
        "windowed means: first {:.3e} peak {:.3e} last {:.3e}, {} increases of {}",
        means[0],
        means.iter().cloned().fold(0.0, f64::max),
        means[means.len() - 1],
        increases,
        means.len() - 1
    );
    println!(
        "res(10) = {:.6e}, res(500) = {:.6e}, ratio = {:.3}",
        report.history[9].residual,
        report.history[499].residual,
        report.history[499].residual / report.history[9].residual
    );

    // Where does the residual max live? Re-run with snapshots.
    let snapshots = [10usize, 100, 500, 1000, 3000];
    let mut snap_state: Vec<(usize, f64, f64)> = Vec::new();
    let config2 = SolverConfig {
        max_iter: 3000,
        res_tol: 0.0,
        ..Default::default()
    };
    let gb = 0.00375;
    let cost2 = CostModel::quadratic(gb).unwrap();
    let op2 = assemble_operator(&l, 64.0).unwrap();
    let mut st = admm::init_state(&pair, &cost2, InitScheme::LinearMarginal);
    for n in 1..=config2.max_iter {
        st.phi = admm::step_a(&st, &op2, &pair, 64.0, 1e-10).unwrap();
        let (a, b) = admm::step_b(&st, &cost2, 64.0).unwrap();
        st.a = a;
        st.b = b;
        let (rho, m) = admm::step_c(&st, 64.0);
        st.rho = rho;
        st.m = m;
        if snapshots.contains(&n) {
            let (dt_phi, dxx_phi) = mot_core::lattice::grad_txx(&st.phi);
            let mut interior: f64 = 0.0;
            let mut boundary: f64 = 0.0;
            for i in 0..l.nt() {
                for j in 0..l.nx() {
                    let v = st.rho.at(i, j)
                        * (dt_phi.at(i, j) + cost2.f_conj(dxx_phi.at(i, j))).abs();
                    if i == 0 || i == l.nt() - 1 {
                        boundary = boundary.max(v);
                    } else {
                        interior = interior.max(v);
                    }
                }
            }
            snap_state.push((n, interior, boundary));
        }
    }
    for (n, interior, boundary) in snap_state {
        println!("iter {n:4}: interior res {interior:.4e}, time-boundary res {boundary:.4e}");
    }
}
