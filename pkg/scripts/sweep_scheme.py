"""Two-sensor schemes around the highest-variance anchor sensor."""

from sparsefield import experiments as ex

from common import dump, parser, setup


def main():
    p = parser(__doc__)
    p.add_argument("--anchor", type=int, default=None)
    p.add_argument("--reuse-temporal", action="store_true")
    args = p.parse_args()
    ds, ctx, cfg = setup(args)
    rows, winner = ex.sweep_scheme(ds, cfg, ctx, args.anchor, reuse_temporal=args.reuse_temporal)
    dump(args, "sweep_scheme", {"rows": [r.as_dict() for r in rows], "winner": winner.as_dict()})


if __name__ == "__main__":
    main()
