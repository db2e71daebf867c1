//! Series verdicts against Fock-space matrix elements.

use elliptic_core::cartan_data::parse_label;
use elliptic_core::fock_oracle::{annulus_samples, exchange_spotcheck, FockSpace, SpotVerdict};
use elliptic_core::free_field::{Conventions, Scale, PQ};
use elliptic_core::lattice_series::q_frac;
use elliptic_core::relation_checker::{check_exchange, CheckWindow};
use elliptic_core::theta_products::Relation;

fn rescaled() -> Conventions {
    Conventions {
        e_zero_scale: Scale {
            sign: -1,
            pq: PQ::new(4, 4),
        },
        ..Conventions::literal()
    }
}

#[test]
fn exchange_verdicts_agree_with_fock_matrix_elements() {
    let mut decisive = 0;
    let mut failures = 0;
    for (label, pairs) in [
        ("A1", vec![(0, 0)]),
        ("A2", vec![(0, 1)]),
        ("A3", vec![(0, 2)]),
    ] {
        let cd = parse_label(label).unwrap();
        for conv in [Conventions::literal(), rescaled()] {
            let space = FockSpace::new(cd.clone(), conv, q_frac(1, 2), q_frac(1, 3), 7).unwrap();
            for &(i, j) in &pairs {
                for rel in Relation::ALL {
                    let series =
                        check_exchange(rel, i, j, &cd, CheckWindow::TWO_POINT, &conv).unwrap();
                    let samples = annulus_samples(&space, rel, i, j).unwrap();
                    let spot = exchange_spotcheck(&space, rel.name(), i, j, &samples).unwrap();
                    match spot.verdict {
                        SpotVerdict::Inconclusive => {}
                        v => {
                            decisive += 1;
                            failures += usize::from(v == SpotVerdict::Fail);
                            assert_eq!(
                                v == SpotVerdict::Pass,
                                series.passed(),
                                "{label} {rel} ({i},{j}) {}",
                                conv.describe()
                            );
                        }
                    }
                }
            }
        }
    }
    // Most relations have no common convergence annulus for the two
    // orderings, so the oracle is silent on them.
    assert!(decisive >= 20, "only {decisive} decisive comparisons");
    assert!(failures >= 1);
}
