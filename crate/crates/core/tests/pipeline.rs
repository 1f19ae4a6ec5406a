use std::sync::Arc;

use goafem::bench::{make_preset, reference_goal, ExampleId};
use goafem::drive::{run, RunConfig};
use goafem::export::read_record_csv;
use goafem::mesh::{build_initial_mesh_with_elements, uniform_refine};
use goafem::space::{build_space, DiscreteField};
use goafem::system::{assemble_primal_residual, mass_diagonal, residual_norm};
use goafem::{ProblemSpec, Strategy};

/// The interpolant of the exact solution leaves a residual that vanishes at
/// first order in `h`, once the spikes are resolved.
#[test]
fn manufactured_residual_decays() {
    for (example, preset) in [(ExampleId::Ex1, "266"), (ExampleId::Ex2, "w1x7")] {
        let spec: ProblemSpec = make_preset(example, preset).unwrap();
        let exact = spec.exact_solution.clone().unwrap();
        let mut mesh = Arc::new(build_initial_mesh_with_elements::<f64>(144).unwrap());
        let mut norms = Vec::new();
        for _ in 0..5 {
            let space = build_space(&mesh, 1).unwrap();
            let mut u = DiscreteField::interpolate(&space, |x| exact(x));
            let boundary = space.boundary_mask().iter().zip(u.coefficients());
            assert!(boundary.filter(|(b, _)| **b).all(|(_, v)| v.abs() < 1e-12));
            u.clear_boundary();
            let r = assemble_primal_residual(&spec, &u).unwrap();
            norms.push(residual_norm(&space, &mass_diagonal(&space), &r));
            mesh = Arc::new(uniform_refine(&mesh).unwrap());
        }
        let rates: Vec<f64> = norms.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        assert!(rates.iter().rev().take(2).all(|&r| r >= 0.9), "{preset}: {norms:?}");
    }
}

#[test]
fn adaptive_run_invariants() {
    let spec: ProblemSpec = make_preset(ExampleId::Ex2, "w2x5").unwrap();
    let goal = reference_goal(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for strategy in [Strategy::Hpz, Strategy::Ms, Strategy::Dwr] {
        let out_dir = dir.path().join(strategy.to_string());
        let config = RunConfig {
            strategy,
            target_elements: Some(600),
            out_dir: Some(out_dir.clone()),
            snapshot_every: Some(5),
            ..RunConfig::default()
        };
        let outcome = run(&spec, &config, Some(goal)).unwrap();
        assert!(outcome.is_ok());
        let rows = &outcome.record.rows;
        assert_eq!(read_record_csv(&out_dir.join("record.csv")).unwrap(), *rows);
        assert!(out_dir.join("plot.svg").exists() && out_dir.join("mesh_000.vtk").exists());
        assert!(rows.last().unwrap().n_elements >= 600);
        assert_eq!(rows.len(), outcome.states.len());
        for (i, (row, state)) in rows.iter().zip(&outcome.states).enumerate() {
            assert_eq!(row.iter, i);
            state.mesh.check_conformity().unwrap();
            assert_eq!(row.n_elements, state.mesh.n_elements());
            assert_eq!(row.n_dofs, state.mesh.n_vertices() - state.mesh.n_boundary_vertices());
            assert!(row.wall_ms.is_none());
            assert!(row.goal_error.unwrap() >= 0.0);
            assert!(state.primal.boundary_is_zero());
            assert!(state.newton.converged);
            match strategy {
                Strategy::Dwr => assert!(row.dwr_est.is_some() && row.zeta_sq.is_none()),
                _ => assert!(row.dwr_est.is_none() && row.zeta_sq.is_some()),
            }
        }
        for pair in outcome.states.windows(2) {
            let marked = pair[0].marked.as_ref().unwrap();
            assert!(!marked.is_empty());
            assert!(pair[1].mesh.descends_from(&pair[0].mesh));
            assert!(pair[1].mesh.n_elements() > pair[0].mesh.n_elements());
            // every marked element was bisected
            let lineage = pair[1].mesh.lineage().unwrap();
            for &t in &marked.elements {
                let kept =
                    (0..pair[1].mesh.n_elements()).any(|c| lineage.carried()[c] && lineage.element_parent()[c] == t);
                assert!(!kept, "marked element {t} survived refinement");
            }
        }
        assert!(outcome.states.last().unwrap().marked.is_none());
    }
}

#[test]
fn combined_marks_follow_strategy() {
    let spec: ProblemSpec = make_preset(ExampleId::Ex1, "433").unwrap();
    for strategy in [Strategy::Hpz, Strategy::Ms] {
        let config = RunConfig {
            strategy,
            max_iterations: 6,
            ..RunConfig::default()
        };
        let outcome = run(&spec, &config, None).unwrap();
        for s in outcome.states.iter().filter(|s| s.marked.is_some()) {
            let (p, d, m) = (
                &s.primal_marks,
                s.dual_marks.as_ref().unwrap(),
                s.marked.as_ref().unwrap(),
            );
            match strategy {
                Strategy::Hpz => {
                    let mut union: Vec<usize> = p.elements.iter().chain(&d.elements).copied().collect();
                    union.sort_unstable();
                    union.dedup();
                    assert_eq!(m.elements, union);
                }
                _ => {
                    let smaller = if d.len() < p.len() { d } else { p };
                    assert_eq!(m.elements, smaller.elements);
                }
            }
        }
    }
}
