"""Command-line entry point.

One subcommand per pipeline stage; every command writes a single JSON
document to stdout and logs to stderr.  Exit codes: 0 success, 2 usage or
bad input, 3 numeric failure, 4 I/O or network failure.  Flag defaults
reproduce the reference configuration (lambda 0.1, 100 iterations,
threshold 1e-2, tau 0.01).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, descriptors, evaluate, losses, matcher, sinkhorn
from .core import (
    EmbedMatrix,
    Marginals,
    SolverConfig,
    load_descriptor_bank,
    read_embed_matrix,
    save_descriptor_bank,
    write_embed_matrix,
)
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    FormatError,
    GenerationError,
    NumericError,
    OstError,
    ParseError,
    SizeError,
    TransportError,
    ValidationError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_USAGE_ERRORS = (
    ValidationError,
    FormatError,
    DegenerateInputError,
    SizeError,
    ConfigurationError,
    ParseError,
    GenerationError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
)


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _log(quiet: bool, message: str) -> None:
    if not quiet:
        print(message, file=sys.stderr)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(lam=args.lam, max_iter=args.max_iter, thresh=args.thresh)


def cmd_gen(args) -> int:
    classes_path = Path(args.classes)
    categories = [
        line.strip() for line in classes_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    cache = descriptors.DescriptorCache(args.cache) if args.cache else None
    if args.mock:
        client = descriptors.MockLlmClient()
    else:
        client = descriptors.HttpLlmClient()
    bank = descriptors.build_bank(
        categories,
        n_spatio=args.n,
        n_temporal=args.n,
        client=client,
        cache=cache,
        template_version=args.template,
        jobs=args.jobs,
    )
    save_descriptor_bank(bank, args.out)
    _emit({"classes": len(bank.classes), "out": str(args.out)})
    return EXIT_OK


def cmd_solve(args) -> int:
    cost = sinkhorn.CostMatrix(read_embed_matrix(args.cost).data)
    t, n = cost.shape
    plan = sinkhorn.sinkhorn_solve(cost, Marginals.uniform(t, n), _solver_config(args))
    write_embed_matrix(EmbedMatrix(plan.values), args.out)
    sidecar = Path(str(args.out) + ".json")
    sidecar.write_text(json.dumps(plan.diagnostics(), indent=2) + "\n", encoding="utf-8")
    _emit(plan.diagnostics())
    return EXIT_OK


def cmd_score(args) -> int:
    frames = read_embed_matrix(args.video)
    bank = load_descriptor_bank(args.bank)
    class_embs = matcher.load_class_embeddings(bank, args.bank)
    logits = matcher.classify(
        frames, class_embs, _solver_config(args), include_category_in_pool=args.pool_category
    )
    _emit(logits.to_json_dict(video=str(args.video)))
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = evaluate.load_manifest(args.manifest)
    modes = evaluate.MODES if args.mode == "all" else (args.mode,)
    results = evaluate.zero_shot_eval_all_modes(
        manifest, _solver_config(args), modes=modes, jobs=max(1, args.jobs)
    )
    _emit({mode: res.to_json_dict() for mode, res in results.items()})
    return EXIT_OK


def cmd_density(args) -> int:
    emb = read_embed_matrix(args.emb)
    if args.delta_against:
        pooled = read_embed_matrix(args.delta_against)
        before, after = analysis.density_delta(emb, pooled)
        _emit({"before": before, "after": after})
    else:
        _emit(analysis.mean_pairwise_cosine(emb).to_json_dict())
    return EXIT_OK


def cmd_ensemble(args) -> int:
    pretrained = analysis.read_param_set(args.a)
    finetuned = analysis.read_param_set(args.b)
    if args.swap:
        pretrained, finetuned = finetuned, pretrained
    blended = analysis.weight_space_ensemble(pretrained, finetuned, args.alpha)
    analysis.write_param_set(blended, args.out)
    _emit({"out": str(args.out), "alpha": args.alpha, "params": len(blended.params)})
    return EXIT_OK


def cmd_oracle(args) -> int:
    cost = sinkhorn.CostMatrix(read_embed_matrix(args.cost).data)
    t, n = cost.shape
    plan, value = sinkhorn.exact_ot_oracle(cost, Marginals.uniform(t, n))
    if args.out:
        write_embed_matrix(EmbedMatrix(np.maximum(plan, 0.0)), args.out)
    _emit({"cost": value, "shape": [t, n]})
    return EXIT_OK


def cmd_loss_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    batches = 0
    taus = (args.tau,) if args.tau is not None else (1.0, 0.07, 0.01)
    for tau in taus:
        for _ in range(args.batches):
            k = int(rng.integers(1, 4))
            b = int(rng.integers(2, 5))
            logits = losses.BatchLogits(rng.standard_normal((k, b, b)), "v2t", tau)
            labels = rng.integers(0, max(1, b - 1), size=b)
            targets = losses.make_targets(labels.tolist())
            worst = max(worst, _max_grad_error(logits, targets))
            batches += 1
    ok = worst <= args.tolerance
    _emit({"max_rel_err": worst, "batches": batches, "tolerance": args.tolerance, "ok": ok})
    return EXIT_OK if ok else EXIT_NUMERIC


def _max_grad_error(logits: losses.BatchLogits, targets: losses.TargetDistribution) -> float:
    analytic = losses.loss_grad_logits(logits, targets)
    h = 1e-4

    def at(idx, offset):
        values = logits.values.copy()
        values[idx] += offset
        return losses._directional_loss(
            losses.BatchLogits(values, logits.direction, logits.tau), targets, False
        )

    fd = np.zeros_like(analytic)
    for idx in np.ndindex(fd.shape):
        # fourth-order central stencil; quadratic truncation is too coarse
        # at tau = 0.01
        fd[idx] = (
            -at(idx, 2 * h) + 8 * at(idx, h) - 8 * at(idx, -h) + at(idx, -2 * h)
        ) / (12.0 * h)
    scale = max(float(np.max(np.abs(fd))), float(np.max(np.abs(analytic))), 1e-6)
    return float(np.max(np.abs(fd - analytic))) / scale


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.1,
                   help="entropy weight (default 0.1)")
    p.add_argument("--max-iter", type=int, default=100, help="scaling sweeps cap (default 100)")
    p.add_argument("--thresh", type=float, default=1e-2,
                   help="convergence threshold on mean |delta a| (default 1e-2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ost", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="suppress stderr logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a descriptor bank via an LLM endpoint")
    p.add_argument("--classes", required=True, help="file with one category per line")
    p.add_argument("--n", type=int, default=4, help="descriptors per kind (default 4)")
    p.add_argument("--out", required=True)
    p.add_argument("--cache", default=None, help="descriptor cache directory")
    p.add_argument("--mock", action="store_true", help="use the deterministic offline client")
    p.add_argument("--template", default="body-v1", choices=descriptors.TEMPLATE_VERSIONS)
    p.add_argument("--jobs", type=int, default=4)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one transport problem from a cost matrix file")
    p.add_argument("--cost", required=True, help="cost matrix in OSTE format")
    p.add_argument("--out", required=True, help="plan output path (OSTE + .json sidecar)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("score", help="classify one video against a bank")
    p.add_argument("--video", required=True, help="frame embeddings in OSTE format")
    p.add_argument("--bank", required=True)
    p.add_argument("--pool-category", action="store_true",
                   help="append the category embedding to the pooled descriptors")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="zero-shot evaluation over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", default="all", choices=("all",) + evaluate.MODES)
    p.add_argument("--jobs", type=int, default=1, help="worker threads for item scoring")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("density", help="mean pairwise cosine of an embedding set")
    p.add_argument("--emb", required=True)
    p.add_argument("--delta-against", default=None,
                   help="pooled per-class descriptor matrix for a before/after report")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("ensemble", help="blend two parameter sets in weight space")
    p.add_argument("--a", required=True, help="pretrained parameter set (OSTP)")
    p.add_argument("--b", required=True, help="finetuned parameter set (OSTP)")
    p.add_argument("--alpha", type=float, default=0.2,
                   help="weight on the pretrained side (default 0.2)")
    p.add_argument("--swap", action="store_true", help="flip which side alpha weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("oracle", help="exact LP transport solve for verification")
    p.add_argument("--cost", required=True)
    p.add_argument("--out", default=None, help="optional plan output path")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("loss-check", help="verify analytic loss gradients numerically")
    p.add_argument("--batches", type=int, default=10, help="random batches per temperature")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=None,
                   help="check a single temperature instead of the default sweep")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_loss_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except NumericError as exc:
        _log(args.quiet, f"numeric error: {exc}")
        return EXIT_NUMERIC
    except _USAGE_ERRORS as exc:
        _log(args.quiet, f"error: {exc}")
        return EXIT_USAGE
    except TransportError as exc:
        _log(args.quiet, f"transport error: {exc}")
        return EXIT_IO
    except OSError as exc:
        _log(args.quiet, f"i/o error: {exc}")
        return EXIT_IO
    except OstError as exc:
        _log(args.quiet, f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
