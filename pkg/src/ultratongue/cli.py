"""Command-line entry point: ``ultratongue <subcommand> [options]``.

On failure a single line ``error<TAB><category><TAB><message>`` goes to
stderr and the process exits nonzero (1 for pipeline errors, 2 for usage
errors, 70 for anything unexpected).
"""

import argparse
import logging
import sys
from dataclasses import replace

from . import __version__, pipeline
from .config import load_config
from .errors import UltraTongueError

log = logging.getLogger("ultratongue")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, 2)


def _fail(category, message, code):
    text = " ".join(str(message).split())
    sys.stderr.write(f"error\t{category}\t{text}\n")
    raise SystemExit(code)


def _systems(cfg, args):
    return [args.system] if args.system else [s.name for s in cfg.systems]


def cmd_gen(cfg, args):
    kw = {}
    if args.n_utterances is not None:
        kw["n_utterances"] = args.n_utterances
    if args.noise is not None:
        kw["noise"] = args.noise
    if args.min_frames is not None or args.max_frames is not None:
        lo, hi = cfg.frames_per_utterance
        kw["frames_per_utterance"] = (args.min_frames or lo, args.max_frames or hi)
    cfg = replace(cfg, **kw)
    manifest = pipeline.run_gen(cfg, force=args.force)
    print(f"corpus\t{cfg.corpus_dir}\t{len(manifest.all_ids)} utterances")


def cmd_prepare(cfg, args):
    p, rewritten = pipeline.run_prepare(cfg)
    print(f"prepared\t{p.root}\t{sum(p.frame_counts.values())} frames\t{'updated' if rewritten else 'up to date'}")


def cmd_fit_et(cfg, args):
    basis, changed = pipeline.run_fit_et(cfg)
    print(f"eigentongue\t{basis.n_components} components\t{'updated' if changed else 'up to date'}")


def cmd_train(cfg, args):
    for name in _systems(cfg, args):
        model, report = pipeline.run_train(cfg, name)
        print(f"trained\t{name}\tbest_epoch {report.best_epoch}\t"
              f"validation_loss {report.validation_loss[report.best_epoch]:.6f}")


def cmd_predict(cfg, args):
    for name in _systems(cfg, args):
        preds = pipeline.run_predict(cfg, name)
        print(f"predicted\t{name}\t{sum(len(v) for v in preds.values())} frames")


def cmd_evaluate(cfg, args):
    reports = {}
    for name in _systems(cfg, args):
        reports[name] = pipeline.run_evaluate(cfg, name)
        r = reports[name]["O_rec"]
        print(f"evaluated\t{name}\tO_rec mse {r.mean[0]:.3f} ssim {r.mean[1]:.4f} cwssim {r.mean[2]:.4f}")
    if not args.system:
        by_pairing, _ = pipeline.run_table(cfg, reports)
        sys.stdout.write(pipeline.table_text({"O_rec": by_pairing["O_rec"]}))


def cmd_sweep(cfg, args):
    for rank, (name, rep, err) in enumerate(pipeline.run_sweep(cfg), 1):
        tail = f"failed: {err}" if rep is None else f"cwssim {rep.mean[2]:.4f}"
        print(f"{rank}\t{name}\t{tail}")


def cmd_run(cfg, args):
    by_pairing, _ = pipeline.run_all(cfg)
    sys.stdout.write(pipeline.table_text(by_pairing))


def build_parser():
    # SUPPRESS keeps a subparser from resetting flags given before the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="count")

    parser = _Parser(prog="ultratongue", description="Audio-to-ultrasound tongue image inversion experiments.",
                     parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic parallel corpus")
    g.add_argument("--n-utterances", type=int)
    g.add_argument("--min-frames", type=int)
    g.add_argument("--max-frames", type=int)
    g.add_argument("--noise", type=float, help="speckle blend in [0, 1]")
    g.add_argument("--force", action="store_true", help="regenerate even if a corpus exists")
    g.set_defaults(func=cmd_gen)

    sub.add_parser("prepare", parents=[common], help="features, pixel targets and EigenTongues").set_defaults(func=cmd_prepare)
    sub.add_parser("fit-et", parents=[common], help="refit the EigenTongue basis").set_defaults(func=cmd_fit_et)
    for name, func, text in (("train", cmd_train, "train systems"),
                             ("predict", cmd_predict, "predict test frames"),
                             ("evaluate", cmd_evaluate, "score predictions and write reports")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("system", nargs="?", help="system name (default: every configured system)")
        sp.set_defaults(func=func)
    sub.add_parser("sweep", parents=[common], help="optimizer x batch x width grid").set_defaults(func=cmd_sweep)
    sub.add_parser("run", parents=[common], help="the whole pipeline end to end").set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    verbose = getattr(args, "verbose", 0) or 0
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None),
                          {"seed": getattr(args, "seed", None), "out": getattr(args, "out", None)})
        args.func(cfg, args)
    except UltraTongueError as exc:
        _fail(exc.category, exc, 1)
    except (OSError, MemoryError) as exc:
        _fail("io" if isinstance(exc, OSError) else "memory", exc, 1)
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        _fail("internal", f"{type(exc).__name__}: {exc}", 70)
    return 0


if __name__ == "__main__":
    sys.exit(main())
