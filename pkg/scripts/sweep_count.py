"""Testing and training RMSE against the number of online sensors [1..k]."""

from sparsefield import experiments as ex

from common import dump, parser, setup


def main():
    p = parser(__doc__)
    p.add_argument("--reuse-temporal", action="store_true")
    args = p.parse_args()
    ds, ctx, cfg = setup(args)
    rows = ex.sweep_count(ds, cfg, ctx, reuse_temporal=args.reuse_temporal)
    dump(args, "sweep_count", [r.as_dict() for r in rows])


if __name__ == "__main__":
    main()
