use approx::assert_relative_eq;
use statrs::distribution::{Continuous, StudentsT};

use mbgibbs::models::dpmm::{ClusterStats, NiwPrior};

fn stats(points: &[&[f64]]) -> ClusterStats {
    let mut s = ClusterStats::empty(points[0].len());
    for p in points {
        s.add(p);
    }
    s
}

#[test]
fn one_dimensional_predictive_is_students_t() {
    let prior = NiwPrior::new(vec![0.4], 0.7, 3.5, vec![1.3]).unwrap();
    let t = prior.posterior(&ClusterStats::empty(1)).predictive().unwrap();
    // scale² = psi (kappa + 1) / (kappa nu)
    let scale = (1.3f64 * 1.7 / (0.7 * 3.5)).sqrt();
    let oracle = StudentsT::new(0.4, scale, 3.5).unwrap();
    for x in [-3.0, -0.2, 0.4, 1.1, 6.0] {
        assert_relative_eq!(t.log_density(&[x]), oracle.ln_pdf(x), max_relative = 1e-10);
    }
}

#[test]
fn predictive_is_ratio_of_marginals() {
    let prior = NiwPrior::new(vec![0.0, 1.0], 0.5, 4.0, vec![1.0, 0.3, 0.3, 2.0]).unwrap();
    let seen: Vec<&[f64]> = vec![&[0.2, 1.5], &[-0.7, 0.4], &[1.1, 2.2]];
    let next = [0.5, -0.3];
    let before = prior.log_marginal_likelihood(&stats(&seen)).unwrap();
    let mut all = seen.clone();
    all.push(&next);
    let after = prior.log_marginal_likelihood(&stats(&all)).unwrap();
    let pred = prior.posterior(&stats(&seen)).predictive().unwrap();
    assert_relative_eq!(pred.log_density(&next), after - before, max_relative = 1e-10);
}

#[test]
fn empty_cluster_has_unit_marginal() {
    let prior = NiwPrior::new(vec![0.0, 0.0], 1.0, 3.0, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert_relative_eq!(prior.log_marginal_likelihood(&ClusterStats::empty(2)).unwrap(), 0.0, epsilon = 1e-12);
}
