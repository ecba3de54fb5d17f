"""Two-sensor headline run: pick the scheme by sweep, then report its errors
next to the full-sensing baseline and the perfect-coefficient floor."""

import time

from sparsefield import experiments as ex

from common import dump, parser, setup


def main():
    args = parser(__doc__).parse_args()
    ds, ctx, cfg = setup(args)
    start = time.perf_counter()
    _, winner = ex.sweep_scheme(ds, cfg, ctx)
    model, ev = ex.fit_and_evaluate(ds, winner.s_tag, cfg, ctx)
    _, full = ex.fit_and_evaluate(ds, tuple(range(1, ds.grid.size + 1)), cfg, ctx)
    _, rollout = ex.fit_and_evaluate(ds, winner.s_tag, cfg, ctx, mode="rollout")
    dump(args, "headline", {
        "two_sensor": ev.summary(),
        "rollout_test_rmse": rollout.test_rmse,
        "full_sensing_test_rmse": full.test_rmse,
        "perfect_model": ex.perfect_model(model, ds, ctx),
        "seconds": time.perf_counter() - start,
    })


if __name__ == "__main__":
    main()
