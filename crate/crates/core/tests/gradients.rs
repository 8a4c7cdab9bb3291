mod common;

use common::{gradient_check, random_network, FD_TOLERANCE};
use daeinit::nn::{Activation, Dense, Layer, LayerKind, Network};
use daeinit::{Matrix, RngStream};

#[test]
fn random_networks_match_finite_differences() {
    let mut rng = RngStream::new(2024, 1);
    let mut kinds = std::collections::BTreeSet::new();
    let mut checked = 0;
    for n in 0..50 {
        let (net, batch) = random_network(&mut rng);
        for layer in net.layers() {
            kinds.insert(match &layer.kind {
                LayerKind::Dense(d) => format!("dense-{}", d.activation()),
                other => format!("{other:?}")
                    .split('(')
                    .next()
                    .unwrap()
                    .to_lowercase(),
            });
        }
        let report = gradient_check(&net, &batch, &mut rng);
        assert!(
            report.max_rel_err < FD_TOLERANCE,
            "network {n}: relative error {:e} at {}",
            report.max_rel_err,
            report.worst
        );
        checked += report.checked;
    }
    assert!(checked > 500, "only {checked} entries checked");
    for k in [
        "dense-relu",
        "dense-sigmoid",
        "dense-linear",
        "batchnorm",
        "dropout",
    ] {
        assert!(kinds.contains(k), "no {k} layer among {kinds:?}");
    }
}

#[test]
fn frozen_layers_get_no_gradient_and_the_rest_still_check() {
    let mut rng = RngStream::new(5, 0);
    let layers = vec![
        Layer::dense(Dense::glorot(&mut rng, 4, 6, Activation::Sigmoid).unwrap()).frozen(true),
        Layer::batch_norm(6).unwrap(),
        Layer::dense(Dense::glorot(&mut rng, 6, 3, Activation::Linear).unwrap()).frozen(true),
        Layer::dense(Dense::glorot(&mut rng, 3, 1, Activation::Sigmoid).unwrap()),
    ];
    let net = Network::new(4, layers).unwrap();
    let batch = Matrix::rand_normal(&mut rng, 7, 4, 0.0, 1.0);
    let report = gradient_check(&net, &batch, &mut rng);
    assert!(report.max_rel_err < FD_TOLERANCE, "{report:?}");
    // batch norm gamma/beta plus the last dense layer
    assert_eq!(report.checked, 6 + 6 + 3 + 1);
}
