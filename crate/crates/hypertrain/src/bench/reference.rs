//! Published reference results for the benchmark tables, used only for
//! display next to freshly computed aggregates. Nothing here is ever
//! recomputed or asserted by the library.

/// One method's published mean ± standard error (None = not reported).
#[derive(Clone, Copy, Debug)]
pub struct ReferenceEntry {
    pub method: &'static str,
    pub mean: f64,
    pub std_err: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct ReferenceRow {
    pub dataset: &'static str,
    pub n: usize,
    pub d: usize,
    pub entries: &'static [ReferenceEntry],
}

macro_rules! entry {
    ($m:literal, $mean:literal, $se:literal) => {
        ReferenceEntry {
            method: $m,
            mean: $mean,
            std_err: Some($se),
        }
    };
    ($m:literal, $mean:literal) => {
        ReferenceEntry {
            method: $m,
            mean: $mean,
            std_err: None,
        }
    };
}

/// Test-RMSE comparison table for the UCI regression suite.
pub const REGRESSION_REFERENCE: &[ReferenceRow] = &[
    ReferenceRow {
        dataset: "boston",
        n: 506,
        d: 13,
        entries: &[
            entry!("vi", 4.32, 0.29),
            entry!("pbp", 3.01, 0.18),
            entry!("dropout", 2.97, 0.85),
            entry!("vmg", 2.70, 0.13),
            entry!("sgd", 3.73, 0.67),
            entry!("hyper", 3.72, 1.05),
        ],
    },
    ReferenceRow {
        dataset: "concrete",
        n: 1030,
        d: 8,
        entries: &[
            entry!("vi", 7.19, 0.12),
            entry!("pbp", 5.67, 0.09),
            entry!("dropout", 5.23, 0.53),
            entry!("vmg", 4.89, 0.12),
            entry!("sgd", 5.29, 0.87),
            entry!("hyper", 4.74, 0.64),
        ],
    },
    ReferenceRow {
        dataset: "energy",
        n: 768,
        d: 8,
        entries: &[
            entry!("vi", 2.65, 0.08),
            entry!("pbp", 1.80, 0.05),
            entry!("dropout", 1.66, 0.19),
            entry!("vmg", 0.54, 0.02),
            entry!("sgd", 0.95, 0.13),
            entry!("hyper", 0.87, 0.10),
        ],
    },
    ReferenceRow {
        dataset: "kin8nm",
        n: 8192,
        d: 8,
        entries: &[
            entry!("vi", 0.10, 0.00),
            entry!("pbp", 0.10, 0.00),
            entry!("dropout", 0.10, 0.00),
            entry!("vmg", 0.08, 0.00),
            entry!("sgd", 0.08, 0.00),
            entry!("hyper", 0.08, 0.00),
        ],
    },
    ReferenceRow {
        dataset: "naval",
        n: 11_934,
        d: 16,
        entries: &[
            entry!("vi", 0.01, 0.00),
            entry!("pbp", 0.01, 0.00),
            entry!("dropout", 0.01, 0.00),
            entry!("vmg", 0.00, 0.00),
            entry!("sgd", 0.00, 0.00),
            entry!("hyper", 0.00, 0.00),
        ],
    },
    ReferenceRow {
        dataset: "power",
        n: 9568,
        d: 4,
        entries: &[
            entry!("vi", 4.33, 0.04),
            entry!("pbp", 4.12, 0.03),
            entry!("dropout", 4.02, 0.18),
            entry!("vmg", 4.04, 0.04),
            entry!("sgd", 4.06, 0.25),
            entry!("hyper", 4.02, 0.18),
        ],
    },
    ReferenceRow {
        dataset: "protein",
        n: 45_730,
        d: 9,
        entries: &[
            entry!("vi", 4.84, 0.03),
            entry!("pbp", 4.73, 0.01),
            entry!("dropout", 4.36, 0.04),
            entry!("vmg", 4.13, 0.02),
            entry!("sgd", 4.37, 0.03),
            entry!("hyper", 4.65, 0.19),
        ],
    },
    ReferenceRow {
        dataset: "wine",
        n: 1599,
        d: 11,
        entries: &[
            entry!("vi", 0.65, 0.01),
            entry!("pbp", 0.64, 0.01),
            entry!("dropout", 0.62, 0.04),
            entry!("vmg", 0.63, 0.01),
            entry!("sgd", 0.80, 0.05),
            entry!("hyper", 0.62, 0.04),
        ],
    },
    ReferenceRow {
        dataset: "yacht",
        n: 308,
        d: 6,
        entries: &[
            entry!("vi", 6.89, 0.67),
            entry!("pbp", 1.02, 0.05),
            entry!("dropout", 1.11, 0.38),
            entry!("vmg", 0.71, 0.05),
            entry!("sgd", 0.77, 0.25),
            entry!("hyper", 0.57, 0.21),
        ],
    },
    ReferenceRow {
        dataset: "year",
        n: 515_345,
        d: 90,
        entries: &[
            entry!("vi", 9.03),
            entry!("pbp", 8.87),
            entry!("dropout", 8.84),
            entry!("vmg", 8.78),
            entry!("sgd", 8.74, 0.03),
            entry!("hyper", 8.74, 0.03),
        ],
    },
];

/// Test-error (%) comparison table for the MNIST architectures.
pub const MNIST_REFERENCE: &[ReferenceRow] = &[
    ReferenceRow {
        dataset: "mnist_2x400",
        n: 60_000,
        d: 784,
        entries: &[
            entry!("bayes_b_sm", 1.36),
            entry!("vmg", 1.15),
            entry!("sgd", 1.43),
            entry!("hyper", 1.26),
        ],
    },
    ReferenceRow {
        dataset: "mnist_2x800",
        n: 60_000,
        d: 784,
        entries: &[
            entry!("max_likelihood", 1.60),
            entry!("dropconnect", 1.20),
            entry!("bayes_b_sm", 1.34),
            entry!("sgd", 1.64),
            entry!("hyper", 1.37),
        ],
    },
    ReferenceRow {
        dataset: "mnist_3x150",
        n: 60_000,
        d: 784,
        entries: &[
            entry!("var_dropout", 1.42),
            entry!("vmg", 1.18),
            entry!("sgd", 1.71),
            entry!("hyper", 1.49),
        ],
    },
];

/// Look up the published row for a dataset, if it has one.
pub fn reference_for(dataset: &str) -> Option<&'static ReferenceRow> {
    REGRESSION_REFERENCE
        .iter()
        .chain(MNIST_REFERENCE)
        .find(|r| r.dataset == dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yacht_row_is_present_with_both_in_repo_methods() {
        let row = reference_for("yacht").unwrap();
        assert_eq!((row.n, row.d), (308, 6));
        let hyper = row.entries.iter().find(|e| e.method == "hyper").unwrap();
        assert_eq!(hyper.mean, 0.57);
        assert_eq!(hyper.std_err, Some(0.21));
    }

    #[test]
    fn unknown_dataset_has_no_row() {
        assert!(reference_for("synthetic").is_none());
    }
}
