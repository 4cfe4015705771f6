"""Command-line interface.

Every output file starts with one ``#`` header line holding the run
configuration as JSON (JSON reports carry it under ``"run_config"``
instead).  Re-running that configuration reproduces the file body exactly.

Exit codes: 0 success, 2 usage error, 3 infeasible or degenerate input,
4 shot budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .analysis import FitError, fit_report
from .circuit import OPTIMAL_SCHEDULE, CnotSchedule, ScheduleError, apply_noise, build_memory_circuit, enumerate_schedules, reduce_by_symmetry
from .decoder2d import ConcatMatchingDecoder2D, Syndrome2D, syndrome_from_error
from .decoder_cl import ConcatMatchingDecoderCL
from .dem import decompose, extract_dem, parse_dem, serialize_dem
from .lattice import build_triangular
from .matching import MatchingInfeasibleError
from .montecarlo import estimate_pfail, estimate_rows, read_csv, read_events, run_bitflip, write_csv

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def parse_p_grid(text: str) -> list[float]:
    """``0.01``, ``0.01,0.02`` or a log grid ``start:stop:count``."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            a, b, n = float(a), float(b), int(n)
            if a <= 0 or b <= 0 or n < 1:
                raise ValueError
            return [float(v) for v in np.geomspace(a, b, n)] if n > 1 else [a]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --p value {text!r}; use a number, a list or start:stop:count") from None


def _schedule(text: str | None) -> CnotSchedule:
    if text is None:
        return OPTIMAL_SCHEDULE
    try:
        return CnotSchedule.parse(text)
    except (ScheduleError, ValueError) as e:
        raise UsageError(f"invalid schedule {text!r}: {e}") from None


def _point_seed(seed: int, *key) -> int:
    """Seed of one grid point, so any point can be rerun on its own."""
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in key]]).generate_state(1, dtype=np.uint32)[0])


def _header(config: dict) -> str:
    return json.dumps({"artifact_version": __version__, **config}, sort_keys=True, separators=(",", ":"))


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n") if path and path != "-" else sys.stdout


def _config(args, keys) -> dict:
    return {"command": args.command, **{k: getattr(args, k) for k in keys}}


# -- commands --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    ds = _int_list(args.d)
    Ts = _int_list(args.T) if args.mode == "circuit" else [1]
    ps = parse_p_grid(args.p)
    sched = _schedule(args.schedule)
    if args.shots is None and args.ci is None:
        raise UsageError("give --shots or --ci")
    if any(d < 3 or d % 2 == 0 for d in ds):
        raise UsageError("distances must be odd and at least 3")
    cfg = _config(args, ["mode", "d", "T", "p", "schedule", "shots", "ci", "ci_mode", "max_shots", "seed", "layout", "stage1_weight"])
    cfg["schedule"] = str(sched)
    if args.mode == "bitflip":
        cfg["T"] = "1"
    rows = []
    over_budget = False
    for d in ds:
        for T in Ts:
            for i, p in enumerate(ps):
                s = _point_seed(args.seed, d, T, i)
                if args.mode == "bitflip":
                    est = run_bitflip(d, p, args.shots, s, ci_target=args.ci, mode=args.ci_mode, max_shots=args.max_shots)
                else:
                    est = estimate_pfail(d, T, p, sched, args.ci, s, mode=args.ci_mode, shots=args.shots,
                                         max_shots=args.max_shots, layout=args.layout, stage1_weight=args.stage1_weight)
                over_budget |= est.budget_exceeded
                rows.extend(estimate_rows(est, d=d, T=T, p=p, schedule=sched if args.mode == "circuit" else "-", seed=s))
    fh = _open_out(args.out)
    try:
        write_csv(fh, rows, _header(cfg))
    finally:
        if fh is not sys.stdout:
            fh.close()
    if over_budget:
        print("warning: shot budget exhausted before the CI target was met", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_enumerate_schedules(args) -> int:
    if args.length < 1:
        raise UsageError("--length must be positive")
    found = enumerate_schedules(args.length)
    if args.reduce:
        found = reduce_by_symmetry(found)
    fh = _open_out(args.out)
    try:
        fh.write(f"# {_header(_config(args, ['length', 'reduce']))}\n")
        for s in found:
            fh.write(f"{s}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_export_dem(args) -> int:
    sched = _schedule(args.schedule)
    if (args.color is None) != (args.part is None):
        raise UsageError("--color and --part go together")
    if not 0 <= args.p < 0.75:
        raise UsageError("--p must lie in [0, 0.75)")
    cfg = _config(args, ["d", "T", "p", "schedule", "layout", "color", "part"])
    cfg["schedule"] = str(sched)
    dem = extract_dem(apply_noise(build_memory_circuit(args.d, args.T, sched, layout=args.layout), args.p))
    if args.color is not None and len(dem):
        parts = decompose(dem, args.color)
        dem = parts.restricted if args.part == "restricted" else parts.only
    fh = _open_out(args.out)
    try:
        fh.write(f"# {_header(cfg)}\n")
        if len(dem):
            fh.write(serialize_dem(dem))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.dem, encoding="utf-8") as fh:
        dem = parse_dem(fh.read())
    if len(dem) == 0:
        print("error: the detector error model has no mechanisms", file=sys.stderr)
        return EXIT_INFEASIBLE
    with open(args.events, "rb") as fh:
        events = read_events(fh, dem.num_detectors)
    dec = ConcatMatchingDecoderCL(stage1_weight=args.stage1_weight).fit(dem)
    pred = dec.predict(events)
    fh = _open_out(args.out)
    try:
        fh.write(f"# {_header(_config(args, ['dem', 'events', 'stage1_weight']))}\n")
        for row in pred:
            fh.write("".join(str(int(b)) for b in row) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        with open(args.csv, encoding="utf-8") as fh:
            rows = read_csv(fh)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    report = {"run_config": json.loads(_header(_config(args, ["csv"])))}
    try:
        report.update(fit_report(rows))
    except FitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    fh = _open_out(args.out)
    try:
        json.dump(report, fh, indent=2, allow_nan=True)
        fh.write("\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_decode2d(args) -> int:
    lattice = build_triangular(args.d)
    if (args.faces is None) == (args.errors is None):
        raise UsageError("give exactly one of --faces and --errors")
    try:
        if args.faces is not None:
            syn = Syndrome2D.from_faces(lattice, _int_list(args.faces))
        else:
            syn = syndrome_from_error(lattice, _int_list(args.errors))
    except ValueError as e:
        raise UsageError(str(e)) from None
    res = ConcatMatchingDecoder2D().fit(lattice).decode(syn)
    out = {
        "run_config": json.loads(_header(_config(args, ["d", "faces", "errors"]))),
        "chosen": res.chosen.letter,
        "weights": {c.letter: w for c, w in res.weights.items()},
        "predictions": {c.letter: sorted(v) for c, v in res.predictions.items()},
    }
    fh = _open_out(args.out)
    try:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="concatmwpm", description="Concatenated matching decoders for triangular color codes.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="estimate logical failure rates over a (d, T, p) grid")
    s.add_argument("--mode", choices=["bitflip", "circuit"], default="circuit")
    s.add_argument("--d", required=True, help="distance(s), comma separated")
    s.add_argument("--T", default="1", help="round count(s), comma separated (circuit mode)")
    s.add_argument("--p", required=True, help="p, a comma list or start:stop:count (log grid)")
    s.add_argument("--schedule", help="CNOT schedule 'z1,..,z6;x1,..,x6' (default: the optimal one)")
    s.add_argument("--shots", type=int, help="fixed shots per point and basis")
    s.add_argument("--ci", type=float, help="target 99%% CI half-width")
    s.add_argument("--ci-mode", dest="ci_mode", choices=["relative", "absolute"], default="relative")
    s.add_argument("--max-shots", dest="max_shots", type=int, default=10**8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--layout", choices=["fused", "separate"], default="fused")
    s.add_argument("--stage1-weight", dest="stage1_weight", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("enumerate-schedules", help="list valid CNOT schedules of a given length")
    e.add_argument("--length", type=int, default=7)
    e.add_argument("--reduce", action="store_true", help="one representative per rotation orbit")
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_enumerate_schedules)

    x = sub.add_parser("export-dem", help="write the detector error model (or one decomposed part)")
    x.add_argument("--d", type=int, required=True)
    x.add_argument("--T", type=int, required=True)
    x.add_argument("--p", type=float, required=True)
    x.add_argument("--schedule")
    x.add_argument("--layout", choices=["fused", "separate"], default="fused")
    x.add_argument("--color", choices=["R", "G", "B"])
    x.add_argument("--part", choices=["restricted", "only"])
    x.add_argument("--out", default="-")
    x.set_defaults(func=cmd_export_dem)

    c = sub.add_parser("decode", help="decode packed detection events against a DEM file")
    c.add_argument("--dem", required=True)
    c.add_argument("--events", required=True)
    c.add_argument("--stage1-weight", dest="stage1_weight", action="store_true")
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_decode)

    f = sub.add_parser("fit", help="fit threshold models to a simulate CSV")
    f.add_argument("csv")
    f.add_argument("--out", default="-")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("decode2d", help="decode one perfect-measurement syndrome")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--faces", help="violated faces, comma separated")
    g.add_argument("--errors", help="X-error qubits, comma separated (syndrome computed)")
    g.add_argument("--out", default="-")
    g.set_defaults(func=cmd_decode2d)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MatchingInfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScheduleError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
