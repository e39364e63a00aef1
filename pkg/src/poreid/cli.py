"""``poreid`` command line: enhance, extract, match, identify, rerank, evaluate, synth.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 partial benchmark failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .enhancement import stft_enhance
from .evaluation import format_report, run_benchmark, save_truth
from .extraction import extract_pores, load_pores, save_pores
from .identification import (Gallery, compute_cmc, format_ranking, identify, load_gallery, load_scores,
                             parse_ranking, rerank)
from .imaging import load_image, save_image
from .matching import match_pores
from .minutiae import load_minutiae, load_pairs, match_minutiae, save_minutiae

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="key = value settings file")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting (repeatable)")
    g.add_argument("--seed", type=int, help="seed for consensus fitting and synthesis")
    g.add_argument("--ppi", type=int, help="resolution, overrides image sidecar metadata")
    g.add_argument("--jobs", type=int, default=1, help="worker threads for gallery and corpus work")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="poreid", description="Sweat-pore extraction and pore-assisted fingerprint identification.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("enhance", parents=[common], help="STFT-enhance a P5 image")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--invert", action="store_true", help="input has light ridges")

    s = sub.add_parser("extract", parents=[common], help="extract a pore template from a P5 image")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--invert", action="store_true", help="input has light ridges")

    s = sub.add_parser("match", parents=[common], help="match a latent pore template to a rolled one")
    s.add_argument("--latent-pores", required=True)
    s.add_argument("--rolled-pores", required=True)
    s.add_argument("--latent-minutiae", required=True)
    s.add_argument("--rolled-minutiae", required=True)
    s.add_argument("--pairs", help="minutiae pair file; computed when omitted")
    s.add_argument("--audit", action="store_true", help="also print one line per matched pore pair")
    s.add_argument("--out", help="output file (default standard output)")

    s = sub.add_parser("identify", parents=[common], help="search a gallery with one latent or a batch")
    s.add_argument("--gallery", required=True, help="manifest: id minutiae_path pore_path")
    s.add_argument("--latent-minutiae")
    s.add_argument("--latent-pores")
    s.add_argument("--latent-image", help="extract latent pores from this image instead")
    s.add_argument("--latents", help="batch manifest: mate_id minutiae_path pore_path; writes CMC")
    s.add_argument("--scores", help="external minutiae scores, one 'id score' per line")
    s.add_argument("--no-gate", action="store_true", help="always consult pores")
    s.add_argument("--out", help="output CSV (default standard output)")
    s.add_argument("--figure", help="CMC figure path for batch mode (default: --out with .png)")

    s = sub.add_parser("rerank", parents=[common], help="pore re-rank an existing ranking CSV")
    s.add_argument("--ranking", required=True)
    s.add_argument("--gallery", required=True)
    s.add_argument("--latent-minutiae", required=True)
    s.add_argument("--latent-pores", required=True)
    s.add_argument("--out", help="output CSV (default standard output)")

    s = sub.add_parser("evaluate", parents=[common], help="score extraction against ground truth")
    s.add_argument("--manifest", required=True, help="lines: image_path truth_path")
    s.add_argument("--confidence", default=None,
                   help="comma-separated confidence sweep (default: extract.confidence)")
    s.add_argument("--radius", type=float, help="match radius in pixels (default 5 at 1000 ppi)")
    s.add_argument("--out", help="report CSV (default standard output)")
    s.add_argument("--figure", help="figure path (default: --out with .png)")
    s.add_argument("--no-figure", action="store_true")

    s = sub.add_parser("synth", parents=[common], help="write synthetic prints with ground truth")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--prefix", default="synth")
    s.add_argument("--width", type=int, default=512)
    s.add_argument("--height", type=int, default=512)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--deformation", type=float, default=0.0)
    s.add_argument("--orientation-field", choices=("constant", "smooth-random"), default="smooth-random")
    return p


# ---------------------------------------------------------------------------

def _header(cfg) -> str:
    return "\n".join(["poreid configuration"] + cfg.lines())


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _image(args):
    img = load_image(args.inp, args.ppi)
    return img.inverted() if args.invert else img


def cmd_enhance(args, cfg):
    save_image(stft_enhance(_image(args), cfg.enhancement), args.out)
    return EXIT_OK


def cmd_extract(args, cfg):
    t = extract_pores(_image(args), cfg.enhancement, cfg.extraction, source_id=Path(args.inp).stem)
    save_pores(t, args.out)
    return EXIT_OK


def _rescale(t, ppi):
    return t if ppi is None or t.ppi == ppi else t.rescaled(ppi)


def cmd_match(args, cfg):
    lp = _rescale(load_pores(args.latent_pores), args.ppi)
    rp = _rescale(load_pores(args.rolled_pores), args.ppi)
    lm = _rescale(load_minutiae(args.latent_minutiae), lp.ppi)
    rm = _rescale(load_minutiae(args.rolled_minutiae), rp.ppi)
    if args.pairs:
        pairs = load_pairs(args.pairs)
        pairs.validate(lm, rm)
    else:
        pairs = match_minutiae(lm, rm)
    res = match_pores(lp, rp, pairs, lm, rm, cfg.match_params())
    lines = [f"SCORE {res.score:.6f}  MODE {res.mode}  MATCHES {len(res)}"]
    if args.audit:
        lines += [f"MATCH {a} {b} {w:.6f}" for a, b, w in res.matches]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _latent_pores(args, cfg, ppi):
    if args.latent_pores:
        return _rescale(load_pores(args.latent_pores), ppi)
    if args.latent_image:
        img = load_image(args.latent_image, args.ppi)
        return _rescale(extract_pores(img, cfg.enhancement, cfg.extraction, source_id="latent"), ppi)
    raise UsageError("identify: one of --latent-pores or --latent-image is required")


def _identify_params(args, cfg):
    ip = cfg.identify_params()
    if getattr(args, "no_gate", False):
        ip = replace(ip, gate=False)
    return ip


def _batch(args, cfg, g: Gallery, external):
    path = Path(args.latents)
    rows = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{n}: expected 'mate_id minutiae_path pore_path'")
        rows.append((parts[0], path.parent / parts[1], path.parent / parts[2]))
    if not rows:
        raise ValueError(f"{path}: no latents listed")
    ip = _identify_params(args, cfg)
    before, after = [], []
    applied = 0
    for mate, mp, pp in rows:
        g.get(mate)
        lm, lp = load_minutiae(mp), _rescale(load_pores(pp), g.ppi)
        final, used = identify(lm, lp, g, ip, external, args.jobs)
        applied += used
        before.append((next(c.minutiae_index for c in final if c.id == mate), len(g)))
        after.append((next(c.final_index for c in final if c.id == mate), len(g)))
    cmc_m, cmc_f = compute_cmc(before), compute_cmc(after)
    lines = [f"# {ln}" for ln in _header(cfg).splitlines()]
    lines.append(f"# latents={len(rows)} pores_consulted={applied}")
    lines.append("rank,minutiae_only,fused")
    lines += [f"{r},{m:.6f},{f:.6f}" for r, (m, f) in
              enumerate(zip(cmc_m.hits_at_rank, cmc_f.hits_at_rank), start=1)]
    _emit("\n".join(lines) + "\n", args.out)
    fig = args.figure or (str(Path(args.out).with_suffix(".png")) if args.out else None)
    if fig:
        from .plotting import plot_cmc
        plot_cmc({"minutiae only": cmc_m, "minutiae + pores": cmc_f}, fig)
    return EXIT_OK


def cmd_identify(args, cfg):
    g = load_gallery(args.gallery, args.ppi)
    external = load_scores(args.scores) if args.scores else None
    if args.latents:
        return _batch(args, cfg, g, external)
    if not args.latent_minutiae:
        raise UsageError("identify: --latent-minutiae (or --latents) is required")
    lm = load_minutiae(args.latent_minutiae)
    lp = _latent_pores(args, cfg, g.ppi)
    final, used = identify(lm, lp, g, _identify_params(args, cfg), external, args.jobs)
    head = "".join(f"# {ln}\n" for ln in _header(cfg).splitlines()) + f"# pores_consulted={used}\n"
    _emit(head + format_ranking(final), args.out)
    return EXIT_OK


def cmd_rerank(args, cfg):
    g = load_gallery(args.gallery, args.ppi)
    ranked = parse_ranking(Path(args.ranking).read_text(encoding="utf-8"))
    ids = {c.id for c in ranked}
    for c in ranked:
        g.get(c.id)
    if len(ids) != len(ranked):
        raise ValueError(f"{args.ranking}: duplicate ids")
    lm = load_minutiae(args.latent_minutiae)
    lp = _rescale(load_pores(args.latent_pores), g.ppi)
    ip = cfg.identify_params()
    final = rerank(ranked, lm, lp, g, ip.top_n, ip.weight, ip.match, args.jobs)
    head = "".join(f"# {ln}\n" for ln in _header(cfg).splitlines())
    _emit(head + format_ranking(final), args.out)
    return EXIT_OK


def cmd_evaluate(args, cfg):
    if args.confidence:
        try:
            conf = [float(c) for c in args.confidence.split(",") if c.strip()]
        except ValueError:
            raise UsageError(f"evaluate: bad --confidence {args.confidence!r}") from None
    else:
        conf = [cfg.extraction.confidence]
    res = run_benchmark(args.manifest, conf, cfg.enhancement, cfg.extraction, args.ppi, args.radius,
                        args.jobs)
    _emit(format_report(res, _header(cfg)), args.out)
    fig = args.figure or (str(Path(args.out).with_suffix(".png")) if args.out else None)
    if fig and not args.no_figure and res.aggregate:
        from .plotting import plot_benchmark
        plot_benchmark(res, fig)
    for f in res.failures:
        print(f"poreid: skipped {f}", file=sys.stderr)
    return EXIT_PARTIAL if res.partial else EXIT_OK


def cmd_synth(args, cfg):
    from .synthetic import default_params, generate
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.count < 1:
        raise UsageError("synth: --count must be >= 1")
    lines = []
    for i in range(args.count):
        seed = cfg.seed + i
        name = f"{args.prefix}{i:04d}" if args.count > 1 else args.prefix
        params = default_params(seed=seed, width=args.width, height=args.height, ppi=args.ppi or 1000,
                                noise_level=args.noise, deformation_amplitude=args.deformation,
                                orientation_field=args.orientation_field)
        o = generate(params, source_id=name)
        save_image(o.image, out / f"{name}.pgm")
        save_truth(o.truth_pores, out / f"{name}.poregt")
        save_minutiae(o.truth_minutiae, out / f"{name}.mnt")
        lines.append(f"{name}.pgm {name}.poregt")
    with open(out / "MANIFEST", "a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {"enhance": cmd_enhance, "extract": cmd_extract, "match": cmd_match, "identify": cmd_identify,
            "rerank": cmd_rerank, "evaluate": cmd_evaluate, "synth": cmd_synth}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        cfg = cfgmod.load_config(args.config, args.set, args.seed)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"poreid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        msg = f"cannot read {exc.filename}: {exc.strerror}" if exc.filename else str(exc)
        print(f"poreid: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, IndexError) as exc:
        print(f"poreid: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
