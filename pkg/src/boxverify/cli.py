"""Command-line driver.

    boxverify verify <model.onnx> <spec.vnnlib> [flags]
    boxverify batch <manifest.csv> [flags]
    boxverify validate-ce <model.onnx> <spec.vnnlib> <ce-file>

``verify`` prints exactly one of ``holds``, ``violated`` or ``unknown`` on
stdout; diagnostics go to stderr. ``holds`` means the estimated output ranges
rule out the violation formula. The ranges are sampled and locally optimized,
not certified, so ``holds`` is strong evidence rather than a proof.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checker, onnx_runtime, vnnlib
from .bounds import SAMPLES_PER_INPUT, estimate_output_bounds
from .checker import UnknownReason, Verdict, VerdictKind
from .optimizer import OptConfig
from .sampler import lhsmdu

__all__ = [
    "RunRecord",
    "format_counterexample",
    "parse_counterexample",
    "verify",
    "validate_ce",
    "run_batch",
    "main",
]

log = logging.getLogger("boxverify")

CSV_COLUMNS = ["model", "spec", "result", "time_seconds", "seed"]


@dataclass
class RunRecord:
    model: str
    spec: str
    result: str
    time_seconds: float
    seed: int
    provenance: str | None = None
    ce_path: str | None = None
    diagnostic: str | None = None
    verdict: Verdict | None = field(default=None, repr=False)
    file_error: bool = False


class _Timeout(Exception):
    pass


def format_counterexample(x, y) -> str:
    parts = [f"(X_{i} {float(v)!r})" for i, v in enumerate(x)]
    parts += [f"(Y_{j} {float(v)!r})" for j, v in enumerate(y)]
    return "(" + "\n ".join(parts) + ")\n"


def parse_counterexample(text: str) -> tuple[np.ndarray, np.ndarray]:
    forms = vnnlib.read_sexprs(text)
    if len(forms) != 1 or isinstance(forms[0], str):
        raise ValueError("counterexample must be a single list of (name value) pairs")
    xs: dict[int, float] = {}
    ys: dict[int, float] = {}
    for pair in forms[0]:
        if isinstance(pair, str) or len(pair) != 2:
            raise ValueError(f"bad assignment {pair!r}")
        name, value = pair
        kind, _, idx = name.partition("_")
        if kind not in ("X", "Y") or not idx.isdigit():
            raise ValueError(f"bad variable name {name!r}")
        (xs if kind == "X" else ys)[int(idx)] = float(value)
    if sorted(xs) != list(range(len(xs))) or sorted(ys) != list(range(len(ys))):
        raise ValueError("variable indices must be contiguous from 0")
    return (np.array([xs[i] for i in range(len(xs))]),
            np.array([ys[j] for j in range(len(ys))]))


def _default_ce_path(model_path, spec_path) -> Path:
    return Path(f"{Path(model_path).stem}__{Path(spec_path).stem}.counterexample")


def verify(
    model_path,
    spec_path,
    *,
    seed: int = 42,
    samples_per_input: int = SAMPLES_PER_INPUT,
    cache_dir=None,
    timeout: float | None = None,
    ce_out=None,
    cfg: OptConfig | None = None,
    jobs: int = 1,
) -> RunRecord:
    """Run the full pipeline on one (model, spec) pair. Never raises for bad
    inputs: problems become an ``unknown`` record with a diagnostic."""
    start = time.perf_counter()
    rec = RunRecord(str(model_path), str(spec_path), "unknown", 0.0, int(seed))

    def check_time():
        if timeout is not None and time.perf_counter() - start > timeout:
            raise _Timeout

    verdict = None
    try:
        spec = vnnlib.load_spec(spec_path)
        check_time()
        net = onnx_runtime.load_network_file(model_path)
        check_time()
        if spec.input_count != net.input_dim or spec.output_count != net.output_dim:
            raise vnnlib.SpecError(
                f"spec declares {spec.input_count} inputs/{spec.output_count} outputs, "
                f"model has {net.input_dim}/{net.output_dim}")
        if vnnlib.has_complex_input_disjunction(spec):
            verdict = Verdict.unknown(UnknownReason.COMPLEX_DISJUNCTION)
            rec.diagnostic = "disjunction over input variables"
        else:
            box = vnnlib.extract_input_box(spec)
            bounds = estimate_output_bounds(
                net, box, seed, cfg, samples_per_input=samples_per_input,
                cache=cache_dir, jobs=jobs)
            rec.provenance = bounds.provenance.value
            check_time()
            samples = bounds.samples
            if samples is None:
                samples = lhsmdu(samples_per_input * net.input_dim, box, seed)
            verdict = checker.decide(spec, net, box, bounds, samples)
    except _Timeout:
        verdict = Verdict.unknown(UnknownReason.INCONCLUSIVE)
        rec.diagnostic = f"timeout after {timeout} s"
    except OSError as exc:
        verdict = Verdict.unknown(UnknownReason.INVALID_SPEC)
        rec.diagnostic = f"cannot read input: {exc}"
        rec.file_error = True
    except vnnlib.SpecError as exc:
        verdict = Verdict.unknown(UnknownReason.INVALID_SPEC)
        rec.diagnostic = f"{type(exc).__name__}: {exc}"
    except onnx_runtime.ModelError as exc:
        verdict = Verdict.unknown(UnknownReason.UNSUPPORTED_MODEL)
        rec.diagnostic = f"{type(exc).__name__}: {exc}"

    rec.verdict = verdict
    rec.result = verdict.kind.value
    if verdict.kind is VerdictKind.VIOLATED:
        path = Path(ce_out) if ce_out is not None else _default_ce_path(model_path, spec_path)
        path.write_text(format_counterexample(verdict.x, verdict.y), encoding="utf-8")
        rec.ce_path = str(path)
    rec.time_seconds = time.perf_counter() - start
    return rec


def validate_ce(model_path, spec_path, ce_path) -> tuple[bool, str]:
    """Re-check a counterexample from scratch: re-run the model on the stored
    inputs and evaluate the property on the fresh outputs."""
    spec = vnnlib.load_spec(spec_path)
    net = onnx_runtime.load_network_file(model_path)
    x, y_stored = parse_counterexample(Path(ce_path).read_text(encoding="utf-8"))
    if x.shape[0] != net.input_dim:
        return False, f"counterexample has {x.shape[0]} inputs, model expects {net.input_dim}"
    y = onnx_runtime.infer(net, x)
    if not checker.eval_point(spec.assertion, x, y):
        return False, "recomputed outputs do not satisfy the violation formula"
    if y_stored.shape != y.shape or not np.array_equal(y_stored, y):
        return True, "valid (stored outputs differ from recomputed ones)"
    return True, "valid"


def _verify_row(args):
    model, spec, options = args
    return verify(model, spec, **options)


def _read_manifest(path: Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected 'model,spec', got {row!r}")
            model, spec = (c.strip() for c in row)
            if (model, spec) == ("model", "spec"):
                continue
            pairs.append((model, spec))
    return pairs


def _summary(records: list[RunRecord]) -> str:
    counts = {k: sum(r.result == k for r in records) for k in ("holds", "violated", "unknown")}
    total = sum(r.time_seconds for r in records)
    return (f"holds={counts['holds']} violated={counts['violated']} "
            f"unknown={counts['unknown']} total_time={total:.3f}")


def write_csv(records: list[RunRecord], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.model, r.spec, r.result, f"{r.time_seconds:.3f}", r.seed])


def run_batch(manifest_path, *, jobs: int = 1, ce_dir=None, **options) -> tuple[list[RunRecord], str]:
    """Verify every manifest row; relative paths resolve against the manifest."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    pairs = _read_manifest(manifest_path)
    ce_dir = Path(ce_dir) if ce_dir is not None else Path.cwd()
    work = []
    for model, spec in pairs:
        m = Path(model) if Path(model).is_absolute() else base / model
        s = Path(spec) if Path(spec).is_absolute() else base / spec
        opts = dict(options, ce_out=ce_dir / _default_ce_path(m, s).name)
        work.append((m, s, opts))

    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_verify_row, work))
    else:
        records = [_verify_row(w) for w in work]
    for rec, (model, spec) in zip(records, pairs):
        rec.model, rec.spec = model, spec
    return records, _summary(records)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--samples-per-input", type=int, default=SAMPLES_PER_INPUT)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--timeout", type=float, default=None, help="soft limit in seconds")
    p.add_argument("--memory", type=int, default=10, help="L-BFGS history pairs")
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--grad-tolerance", type=float, default=1e-5)
    p.add_argument("--f-tolerance", type=float, default=1e-9)
    p.add_argument("--fd-step", type=float, default=1e-6)


def _options(args) -> dict:
    cfg = OptConfig(args.memory, args.max_iterations, args.grad_tolerance,
                    args.f_tolerance, args.fd_step)
    return dict(seed=args.seed, samples_per_input=args.samples_per_input,
                cache_dir=args.cache_dir, timeout=args.timeout, cfg=cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxverify", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check one model against one VNNLIB property")
    p.add_argument("model")
    p.add_argument("spec")
    p.add_argument("--ce-out", default=None)
    p.add_argument("--jobs", type=int, default=1, help="parallel output refinements")
    _add_common(p)

    p = sub.add_parser("batch", help="run every 'model,spec' row of a manifest")
    p.add_argument("manifest")
    p.add_argument("--ce-out", default=None, help="directory for counterexample files")
    p.add_argument("--csv-out", default=None, help="CSV destination (default stdout)")
    p.add_argument("--jobs", type=int, default=1, help="instances run in parallel")
    _add_common(p)

    p = sub.add_parser("validate-ce", help="re-check a counterexample file")
    p.add_argument("model")
    p.add_argument("spec")
    p.add_argument("ce_file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s: %(message)s")

    if args.command == "verify":
        rec = verify(args.model, args.spec, ce_out=args.ce_out, jobs=args.jobs, **_options(args))
        if rec.diagnostic:
            print(f"boxverify: {rec.diagnostic}", file=sys.stderr)
        if rec.ce_path:
            print(f"boxverify: counterexample written to {rec.ce_path}", file=sys.stderr)
        print(rec.result)
        return 2 if rec.file_error else 0

    if args.command == "batch":
        try:
            records, summary = run_batch(args.manifest, jobs=args.jobs, ce_dir=args.ce_out,
                                         **_options(args))
        except (OSError, ValueError) as exc:
            print(f"boxverify: cannot read manifest: {exc}", file=sys.stderr)
            return 2
        for r in records:
            if r.diagnostic:
                print(f"boxverify: {r.model},{r.spec}: {r.diagnostic}", file=sys.stderr)
        if args.csv_out:
            with open(args.csv_out, "w", encoding="utf-8", newline="") as fh:
                write_csv(records, fh)
        else:
            buf = io.StringIO()
            write_csv(records, buf)
            sys.stdout.write(buf.getvalue())
        print(summary, file=sys.stderr)
        return 0

    try:
        ok, message = validate_ce(args.model, args.spec, args.ce_file)
    except (OSError, ValueError, vnnlib.SpecError, onnx_runtime.ModelError) as exc:
        print(f"boxverify: {exc}", file=sys.stderr)
        return 2
    print("valid" if ok else "invalid")
    if message not in ("valid",):
        print(f"boxverify: {message}", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
