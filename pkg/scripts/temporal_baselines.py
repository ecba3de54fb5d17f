"""One-step coefficient forecasts on the training split: LSTM against a
linear autoregressive fit and persistence, scored on the held-out tail."""

import numpy as np

from sparsefield.experiments import split_index
from sparsefield.separation import separate
from sparsefield.temporal import TrainConfig, build_features, fit_ar_baseline, predict_sequence, train

from common import dump, parser, setup


def main():
    args = parser(__doc__).parse_args()
    ds, _, cfg = setup(args)
    l1 = split_index(ds.snapshots.n_snapshots)
    _, coeffs = separate(ds.snapshots.columns(0, l1), cfg.threshold,
                         energy_measure=cfg.energy_measure)
    d, target = build_features(coeffs.a, ds.inputs[:, :l1])
    tail = d.shape[0] - int(0.2 * d.shape[0])
    n = coeffs.order

    def score(pred):
        return float(np.sqrt(np.mean((pred[tail:] - target[tail:]) ** 2)))

    lstm = train([(d[:tail], target[:tail])], TrainConfig(epochs=args.epochs, seed=args.seed,
                                                         residual=True))
    ar = fit_ar_baseline([(coeffs.a[:, :tail + 1], ds.inputs[:, :tail + 1])])
    dump(args, "temporal_baselines", {
        "order": n,
        "persistence_rmse": score(d[:, :n]),
        "ar_rmse": score(ar.predict(d)),
        "lstm_rmse": score(predict_sequence(lstm, d)),
    })


if __name__ == "__main__":
    main()
