mod common;

use asymseg::metrics::{
    confusion, hausdorff95, imbalance_ratio, largest_component, Connectivity, Mask,
};

#[test]
fn hd95_and_largest_component_match_brute_force() {
    let rep = common::metric_oracles(31, 100);
    assert_eq!(rep.hd95_mismatches, 0);
    assert_eq!(rep.component_mismatches, 0);
}

#[test]
fn rates_satisfy_the_dice_identity_exactly() {
    assert_eq!(common::score_identities(41, 5000), 0);
}

#[test]
fn hd95_is_symmetric() {
    let mut rng = common::rng(2);
    for _ in 0..50 {
        let a = common::random_mask(&mut rng, 20, 20);
        let b = common::random_mask(&mut rng, 20, 20);
        assert_eq!(hausdorff95(&a, &b).unwrap(), hausdorff95(&b, &a).unwrap());
    }
}

#[test]
fn largest_component_never_adds_false_positives() {
    let mut rng = common::rng(6);
    for _ in 0..100 {
        let pred = common::random_mask(&mut rng, 16, 16);
        let gt = common::random_mask(&mut rng, 16, 16);
        let post = largest_component(&pred, Connectivity::Four);
        let (a, b) = (confusion(&pred, &gt).unwrap(), confusion(&post, &gt).unwrap());
        assert!(b.fp <= a.fp && b.tp <= a.tp);
        for i in 0..256 {
            if post.data()[i] {
                assert!(pred.data()[i]);
            }
        }
    }
}

#[test]
fn imbalance_of_two_images() {
    let s = imbalance_ratio(&[(10, 1000), (10, 3000), (0, 50)]);
    assert_eq!(s.ratios, vec![100.0, 300.0]);
    assert_eq!((s.mean, s.std, s.excluded), (200.0, 100.0, 1));
    let _ = Mask::empty(1, 1);
}
