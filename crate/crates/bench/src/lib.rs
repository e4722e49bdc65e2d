//! Fixtures shared by the benches.

use undelay::Scenario;

/// A 2000-step, order-4 run: long enough to exercise the whole pipeline,
/// short enough for criterion's default sample count.
pub fn short_scenario() -> Scenario {
    Scenario::from_json_str(
        r#"{
          "version": 1,
          "name": "bench-short",
          "differentiator": {
            "order": 4,
            "gains": [4.0, 6.0, 4.0, 1.0],
            "delay": 0.1,
            "schedule": { "constant": { "rate": 20.0 } }
          },
          "signal": {
            "form": { "sine": { "amplitude": 1.0, "frequency": 1.0 } },
            "delay": 0.1
          },
          "integrator": { "dt": 0.001, "t_end": 2.0, "method": "rk4" },
          "metrics_window": [1.0, 2.0]
        }"#,
    )
    .expect("fixture parses")
}
