"""Light-source-transfer CLI entrypoint."""
import argparse
import sys
from pathlib import Path

from utils.environment import pin_threads

# BLAS pools are sized on first numpy import
pin_threads()

from config import settings  # noqa: E402
from core.errors import ConfigError, CorpusError, RelightError, ShapeError  # noqa: E402
from core.models import ABLATIONS  # noqa: E402
from utils.config import TrainConfig, config_help  # noqa: E402
from utils.logging import setup_logging  # noqa: E402


class UsageError(ConfigError):
    """Command line could not be parsed."""


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def cmd_gen_data(args) -> int:
    from synth.corpus import build_corpus

    summary = build_corpus(Path(args.out), args.scenes, args.res, args.seed, split=args.split)
    print(f"scenes={summary.scenes} lit_images={summary.lit_images} "
          f"shadow_free_images={summary.shadow_free_images} pairs={summary.pairs}")
    return 0


def cmd_train(args) -> int:
    from core.trainer import train

    config = TrainConfig.from_file(Path(args.config) if args.config else None)
    if args.no_adv:
        config = config.with_overrides(adversarial=False)
    summary = train(config, Path(args.data), Path(args.out), ablate=args.ablate,
                    resume=Path(args.resume) if args.resume else None)
    print(f"variant={summary.variant} steps={summary.steps} "
          f"generator_parameters={summary.generator_parameters} "
          f"discriminator_parameters={summary.discriminator_parameters} "
          f"checkpoint={summary.final_checkpoint}")
    return 0


def cmd_infer(args) -> int:
    from core.checkpoint import load_checkpoint
    from network.relight import full_forward
    from utils.image_io import enhance_contrast, from_tensor, read_image, to_tensor, write_image

    bundle = load_checkpoint(Path(args.ckpt)).bundle
    image = read_image(Path(args.input))
    size = bundle.arch.resolution
    if image.shape[0] != size:
        raise ShapeError(f"input image is {image.shape[0]}x{image.shape[1]}, "
                         f"checkpoint expects {size}x{size}")

    outputs = full_forward(to_tensor([image]), bundle)
    written = {Path(args.out): from_tensor(outputs.y_hat)[0]}
    if args.dump_aux:
        aux = Path(args.dump_aux)
        written[aux / "shadow_free.png"] = from_tensor(outputs.shadow_free)[0]
        written[aux / "relit.png"] = from_tensor(outputs.relit)[0]
    for path, result in written.items():
        write_image(path, result)
        if args.enhance:
            write_image(path.with_name(f"{path.stem}_enhanced.png"), enhance_contrast(result))
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    from core.evaluation import evaluate, write_report

    if (args.ckpt is None) == (args.baseline is None):
        raise UsageError("eval needs exactly one of --ckpt or --baseline")
    report = evaluate(Path(args.data),
                      checkpoint=Path(args.ckpt) if args.ckpt else None,
                      baseline=args.baseline,
                      lpips_file=Path(args.lpips_file) if args.lpips_file else None,
                      resolution=args.res)
    if args.out:
        write_report(report, Path(args.out))
    print(report.to_text(), end="")
    return 0


def cmd_ablate(args) -> int:
    from core.evaluation import format_ablation_table, run_ablation

    config = TrainConfig.from_file(Path(args.config) if args.config else None)
    rows = run_ablation(config, Path(args.data), Path(args.out),
                        val_dir=Path(args.val_data) if args.val_data else None,
                        lpips_file=Path(args.lpips_file) if args.lpips_file else None)
    print(format_ablation_table(rows), end="")
    return 0


def build_parser() -> ArgumentParser:
    p = ArgumentParser(prog="relight", description="Image light-source transfer: "
                       "synthetic corpus, training, inference and evaluation")
    p.add_argument("--quiet", "-q", action="store_true", help="quiet mode - only show errors")
    p.add_argument("--verbose", "-v", action="store_true", help="verbose mode - per-step losses")
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="INFO",
                   help="set logging level")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    gen = sub.add_parser("gen-data", help="render a synthetic relighting corpus")
    gen.add_argument("--scenes", type=int, required=True, help="number of scenes")
    gen.add_argument("--res", type=int, default=2 * settings.DEFAULT_RESOLUTION,
                     help="image resolution (power of two, multiple of 16)")
    gen.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="run seed")
    gen.add_argument("--out", required=True, help="corpus directory")
    gen.add_argument("--split", choices=sorted(settings.SPLIT_SEED_BASES), default="train",
                     help="seed range to draw scenes from")
    gen.set_defaults(func=cmd_gen_data)

    tr = sub.add_parser("train", help="train the relighting network",
                        epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    tr.add_argument("--data", required=True, help="training corpus directory")
    tr.add_argument("--config", help="key=value config file (defaults when omitted)")
    tr.add_argument("--out", required=True, help="run directory for the loss log and checkpoints")
    tr.add_argument("--no-adv", action="store_true", help="reconstruction losses only")
    tr.add_argument("--ablate", choices=sorted(k for k in ABLATIONS if k), help="drop calibration "
                    "(cal), the multi-scale branch (ms), or both")
    tr.add_argument("--resume", help="training checkpoint to continue from")
    tr.set_defaults(func=cmd_train)

    inf = sub.add_parser("infer", help="relight one image toward the target light")
    inf.add_argument("--ckpt", required=True, help="checkpoint file")
    inf.add_argument("--input", required=True, help="input PNG")
    inf.add_argument("--out", required=True, help="output PNG")
    inf.add_argument("--dump-aux", help="directory for shadow_free.png and relit.png")
    inf.add_argument("--enhance", action="store_true",
                     help="also write contrast-enhanced *_enhanced.png copies")
    inf.set_defaults(func=cmd_infer)

    ev = sub.add_parser("eval", help="PSNR / SSIM (and LPIPS / MPS) over a corpus")
    ev.add_argument("--data", required=True, help="evaluation corpus directory")
    ev.add_argument("--ckpt", help="checkpoint file")
    ev.add_argument("--baseline", choices=["identity", "target"],
                    help="score the input (identity) or the target itself instead of a model")
    ev.add_argument("--res", type=int, help="baseline comparison resolution (default native)")
    ev.add_argument("--lpips-file", help="per-pair LPIPS values (input_path<TAB>value)")
    ev.add_argument("--out", help="directory for metrics.txt and metrics.json")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="train and score the four calibration / multi-scale variants",
                        epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    ab.add_argument("--data", required=True, help="training corpus directory")
    ab.add_argument("--config", help="key=value config file (defaults when omitted)")
    ab.add_argument("--out", required=True, help="directory for per-variant runs and the table")
    ab.add_argument("--val-data", help="validation corpus (default: the training corpus)")
    ab.add_argument("--lpips-file", help="per-pair LPIPS values, optionally keyed by variant")
    ab.set_defaults(func=cmd_ablate)
    return p


def _report(error: Exception) -> None:
    print("error: " + " ".join(str(error).split()), file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log_level = "DEBUG"
        elif args.quiet:
            log_level = "ERROR"
        else:
            log_level = args.log_level
        setup_logging(level=log_level, quiet=args.quiet)
        return args.func(args)
    except ConfigError as e:
        _report(e)
        return 2
    except RelightError as e:
        _report(e)
        return 1
    except OSError as e:
        _report(CorpusError(f"{e.filename or 'file system'}: {e.strerror or e}"))
        return 1


if __name__ == "__main__":
    sys.exit(main())
