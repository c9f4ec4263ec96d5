//! Calibration probe for the dbar fixture (dev utility).

use eigenlab::eigenmap::*;
use eigenlab::ellipsoid::EllipsoidSpec;
use eigenlab::gauge::*;
use eigenlab::mesh::{make_mesh, Domain, Operators};
use std::time::Instant;

fn main() {
    for &h in &[0.05] {
        let mesh = make_mesh(Domain::Disk, h).unwrap();
        let ops = Operators::assemble(&mesh);
        let spec = EllipsoidSpec::new(vec![1.0, 1.0, 1.0]).unwrap();
        let w = [1.2, 0.5];
        for &amp in &[0.05, 0.1, 0.2, 0.4] {
            let t0 = Instant::now();
            let data = MapField::from_fn(mesh.n_vertices(), 3, |v| {
                let p = mesh.vertices[v];
                let th = p[1].atan2(p[0]);
                let u = w[0] * p[0] + w[1] * p[1];
                spec.proj_p(&[u.cos(), u.sin(), amp * (th.sin() + 0.6 * (2.0 * th).cos())])
                    .unwrap()
            });
            let sol = solve_interior(
                &mesh,
                &ops,
                &spec,
                &data,
                &SolveOpts { solve_tol: 1e-8, ..Default::default() },
            )
            .unwrap();
            let omega = SoMatField::from_omega(&sol.omega, mesh.n_triangles());
            let frame = uhlenbeck_gauge(
                &mesh,
                &ops,
                &omega,
                &GaugeOpts { grad_tol: 1e-10, max_iters: 2000, ..Default::default() },
            )
            .unwrap();
            let om = omega_from_frame(&mesh, &frame);
            match dbar_frame(&mesh, &om, 3, &DbarOpts::default()) {
                Ok(db) => {
                    let fac = holomorphic_factor(&mesh, &sol, &frame, &db).unwrap();
                    println!(
                        "h {h} amp {amp}: E {:.3} omega_E {:.3} l21 {:.4} gate {} contr {:.3} |A-I| {:.3} dA {:.2e} dB {:.2e} impr {:.1} floor {} resid_rel {:.2e} [{:.0}s]",
                        sol.dirichlet_energy,
                        sol.omega_energy,
                        db.omega_l21,
                        db.gate_met,
                        db.contraction,
                        db.a_minus_i_norm,
                        fac.dbar_alpha_l2,
                        fac.dbar_beta_l2,
                        fac.dbar_alpha_l2 / fac.dbar_beta_l2,
                        fac.at_discretization_floor,
                        fac.dbar_alpha_residual / fac.dbar_alpha_l2,
                        t0.elapsed().as_secs_f64()
                    );
                }
                Err(e) => println!("h {h} amp {amp}: E {:.3} dbar error {e}", sol.dirichlet_energy),
            }
        }
    }
}
