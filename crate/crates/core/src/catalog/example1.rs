//! Three-strategy, two-situation game where only a model with inference can
//! invade the correctly specified residents.

use crate::game::{Kernel, MonitoringStructure, Row, StageEnv};

/// Row player's success probability, indexed [situation][row][column].
pub const SUCCESS: [[[f64; 3]; 3]; 2] = [
    [[0.1, 0.1, 0.1], [0.1, 0.3, 0.1], [0.11, 0.1, 0.2]],
    [[0.11, 0.5, 0.12], [0.5, 0.12, 0.14], [0.4, 0.55, 0.4]],
];

pub fn build_example1() -> StageEnv {
    let strategies: Vec<String> = ["a1", "a2", "a3"].iter().map(|s| s.to_string()).collect();
    let kernels = SUCCESS
        .iter()
        .map(|t| {
            Kernel::from_fn(3, 2, |a, b| Row::dense(vec![t[a][b], 1.0 - t[a][b]])).expect("tabulated rows are valid")
        })
        .collect();
    StageEnv::new(
        strategies.clone(),
        vec!["g".into(), "b".into()],
        vec!["G_A".into(), "G_B".into()],
        kernels,
        vec![1.0, 0.0],
        MonitoringStructure::perfect(&strategies),
    )
    .expect("example environment is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::expected_payoff;

    #[test]
    fn table_cells() {
        let env = build_example1();
        assert_eq!(expected_payoff(&env, "G_A", "a1", "a3", None).unwrap(), 0.1);
        assert_eq!(expected_payoff(&env, "G_A", "a3", "a1", None).unwrap(), 0.11);
        assert_eq!(expected_payoff(&env, "G_B", "a2", "a1", None).unwrap(), 0.5);
        assert_eq!(expected_payoff(&env, "G_B", "a3", "a2", None).unwrap(), 0.55);
        assert_eq!(expected_payoff(&env, "G_A", "a2", "a2", None).unwrap(), 0.3);
    }
}
