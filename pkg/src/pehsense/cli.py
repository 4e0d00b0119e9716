"""Command-line entry point: ``pehsense <command> --config study.toml``.

Exit codes: 0 success, 1 configuration error, 2 some study cells failed.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__, config, plots, study

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("pehsense")


def _parser():
    p = argparse.ArgumentParser(prog="pehsense", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, needs_config=True):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, required=needs_config, help="experiment TOML file")
        sp.add_argument("--out", type=Path, help="output directory (overrides experiment.output_dir)")
        sp.add_argument("--seed", type=int, help="experiment seed (overrides experiment.seed)")
        sp.add_argument("--jobs", type=int, help="worker threads for study cells")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    add("simulate", "simulate every device on every input trace and write voltage traces")
    add("featurize", "write harvested-energy feature tables")
    add("augment", "write StiefelGen-augmented traces and a provenance manifest")
    add("study", "run the factorial classification study and write the report")
    add("anomaly", "fit the healthy-energy Gaussian and classify every event")
    add("report", "regenerate SVG figures from the CSVs in an output directory", needs_config=False)
    return p


def _load(args):
    cfg = config.load(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise config.ConfigError("--seed", "must be an unsigned 64-bit integer")
        cfg.experiment = dataclasses.replace(cfg.experiment, seed=args.seed)
    if args.jobs is not None:
        if args.jobs < 1:
            raise config.ConfigError("--jobs", "must be >= 1")
        cfg.experiment = dataclasses.replace(cfg.experiment, jobs=args.jobs)
    out = args.out if args.out is not None else cfg.output_dir()
    return cfg, Path(out)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            if args.out is None and args.config is None:
                raise config.ConfigError("--out", "report needs --out or --config")
            out = args.out if args.out is not None else _load(args)[1]
            if not Path(out).is_dir():
                raise config.ConfigError("--out", f"directory {str(out)!r} does not exist")
            made = plots.render_all(out)
            print(f"wrote {len(made)} figures to {Path(out) / 'figures'}")
            return EXIT_OK
        cfg, out = _load(args)
        out.mkdir(parents=True, exist_ok=True)
        config.dump(cfg, out / "config.toml")
        if args.command == "simulate":
            files = study.run_simulate(cfg, out)
            print(f"wrote {len(files)} traces under {out / 'simulate'}")
        elif args.command == "featurize":
            files = study.run_featurize(cfg, out)
            print(f"wrote {len(files)} feature tables under {out / 'features'}")
        elif args.command == "augment":
            aug = study.run_augment(cfg, out)
            print(f"wrote {len(aug.manifest)} augmented traces under {out / 'augment'}")
        elif args.command == "anomaly":
            res = study.run_anomaly(cfg, out)
            m = res.model
            print(f"mu={m.mu!r} J sigma={m.sigma!r} J z={m.z_threshold:g} "
                  f"thresholds=[{m.mu - m.z_threshold * m.sigma!r}, {m.mu + m.z_threshold * m.sigma!r}] J "
                  f"accuracy={res.accuracy:.4f}")
        elif args.command == "study":
            res = study.run_study(cfg, out)
            plots.render_all(out)
            print(f"{res.n_cells} cells, {res.n_failed} failed; report in {out}")
            if res.n_failed:
                return EXIT_PARTIAL
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
