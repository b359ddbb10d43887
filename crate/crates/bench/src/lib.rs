//! Shared fixtures for the criterion benches.

use impdiff::methods::{self, Method, Settings};
use impdiff::registry::{self, Overrides};
use impdiff::ProblemSpec;

/// A registry problem with its default input point and weights.
pub struct Fixture {
    pub spec: ProblemSpec,
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub settings: Settings,
}

impl Fixture {
    pub fn new(name: &str, overrides: Overrides) -> Self {
        let spec = registry::lookup_with(name, &overrides).expect("registered problem");
        Self {
            x: spec.default_x.clone(),
            alpha: spec.default_alpha.clone(),
            spec,
            settings: Settings::default(),
        }
    }

    pub fn run(&self, method: Method) -> Vec<f64> {
        methods::gradient(&self.spec, method, &self.x, &self.alpha, &self.settings)
            .expect("gradient")
            .gradient
    }
}

/// `ode-linear-nd` with `state_dim` states and `input_dim` parameters.
pub fn linear_ode(state_dim: usize, input_dim: usize) -> Fixture {
    Fixture::new(
        "ode-linear-nd",
        Overrides {
            state_dim: Some(state_dim),
            input_dim: Some(input_dim),
            seed: Some(0),
            ..Overrides::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let f = linear_ode(3, 4);
        assert_eq!(f.x.len(), 4);
        let a = f.run(Method::Adjoint);
        let b = f.run(Method::ForwardSens);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-6 * (1.0 + q.abs()));
        }
    }
}
