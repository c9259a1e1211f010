"""Command-line front end.

Each subcommand validates its flags (merged over an optional JSON config
file, flags winning) before computing, writes CSV/JSON artifacts plus a
manifest into ``--out`` and exits 0 on success, 2 on validation errors and
3 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .backends import BUNDLED_DEVICES, DeviceModelError, load_device
from .circuits import SectorSpec, build_adhoc, build_aswap, resources
from .fermion import IntegralFormatError, bundled_h2_distances, h2_fcidump_path, load_fcidump, molecular_hamiltonian
from .mitigation import Backend, build_spam_matrix
from .vqe import (
    DEFAULT_SECTORS,
    ConfigError,
    VqeRunConfig,
    curve_csv,
    dissociation_curve,
    exact_diagonalize,
    run_ground,
    sector_eigenvalues,
    sector_scan,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
BENCH_STRATEGIES = ("none", "re", "sy", "spam", "spamre", "spamsy", "spamsyre")


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Argument types


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def half_int(text: str) -> float:
    value = Fraction(text)
    if (2 * value).denominator != 1:
        raise argparse.ArgumentTypeError(f"expected an integer or half-integer, got {text}")
    return float(value)


def odd_folds(text: str) -> tuple[int, ...]:
    try:
        folds = tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"folds must be comma-separated integers: {text}") from None
    if not folds or folds[0] != 1 or any(f % 2 == 0 for f in folds) or list(folds) != sorted(set(folds)):
        raise argparse.ArgumentTypeError("folds must be odd, strictly increasing and start at 1")
    return folds


def mitigation_list(text: str) -> str:
    parts = [t.strip().lower() for t in str(text).split(",") if t.strip()]
    allowed = {"spam", "symmetry", "richardson", "none"}
    bad = [p for p in parts if p not in allowed]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown mitigation {bad}; choose from spam,symmetry,richardson")
    parts = [p for p in parts if p != "none"]
    return ",".join(parts) if parts else "none"


def strategy_list(text: str) -> tuple[str, ...]:
    parts = tuple(t.strip().lower() for t in str(text).split(",") if t.strip())
    bad = [p for p in parts if p not in BENCH_STRATEGIES]
    if bad or not parts:
        raise argparse.ArgumentTypeError(f"strategies must come from {','.join(BENCH_STRATEGIES)}")
    return parts


def distance_list(text: str) -> tuple[float, ...]:
    if str(text) == "all":
        return tuple(bundled_h2_distances())
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def sector_list(text: str) -> tuple[tuple[int, float], ...]:
    out = []
    for item in str(text).split(","):
        n, _, sz = item.partition(":")
        out.append((int(n), half_int(sz or "0")))
    return tuple(out)


# ---------------------------------------------------------------------------
# Parser


def _add_run_flags(p: argparse.ArgumentParser, with_ansatz: bool = True) -> None:
    if with_ansatz:
        p.add_argument("--ansatz", choices=("aswap", "ry", "ryrz", "swaprz"), default="aswap")
        p.add_argument("--n", type=nonneg_int, default=2, help="particle number")
        p.add_argument("--sz", type=half_int, default=0.0, help="spin projection")
        p.add_argument("--depth", type=nonneg_int, default=1)
        p.add_argument("--entanglement", choices=("full", "linear"), default="full")
        p.add_argument("--layers", type=nonneg_int, default=None, help="ASWAP layers (default: automatic)")
    p.add_argument("--backend", choices=("statevector", "sampled", "noisy"), default="statevector")
    p.add_argument("--device", default=None, help="device JSON path or bundled name")
    p.add_argument("--shots", type=positive_int, default=8192)
    p.add_argument("--optimizer", choices=("direct", "neldermead", "lbfgs"), default=None)
    p.add_argument("--budget", type=positive_int, default=None)
    p.add_argument("--starts", type=positive_int, default=10, help="multistart count (DIRECT runs once)")
    p.add_argument("--mitigate", type=mitigation_list, default="none")
    p.add_argument("--folds", type=odd_folds, default=(1, 3, 5))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="symvqe-out")
    p.add_argument("--jobs", type=positive_int, default=os.cpu_count() or 1)
    p.add_argument("--dry-run", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="symvqe", description="Symmetry-preserving VQE for small molecules.")
    parser.add_argument("--config", default=None, help="JSON file with flag defaults (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("ground", help="ground-state VQE at one geometry")
    p.add_argument("--fcidump", required=True)
    _add_run_flags(p)
    subs["ground"] = p

    p = sub.add_parser("sectors", help="ASWAP VQE in several (N, Sz) sectors")
    p.add_argument("--fcidump", required=True)
    p.add_argument("--sectors", type=sector_list, default=DEFAULT_SECTORS, help="e.g. 0:0,1:1/2,2:0")
    _add_run_flags(p, with_ansatz=False)
    subs["sectors"] = p

    p = sub.add_parser("curve", help="dissociation curve over bundled or supplied geometries")
    p.add_argument("--distances", type=distance_list, default=tuple(bundled_h2_distances()))
    p.add_argument("--data-dir", default=None, help="directory of d<distance>.fcid files")
    _add_run_flags(p)
    subs["curve"] = p

    p = sub.add_parser("resources", help="parameter and CNOT counts of an ansatz")
    p.add_argument("--ansatz", choices=("aswap", "ry", "ryrz", "swaprz"), default="aswap")
    p.add_argument("--n-qubits", type=positive_int, default=4)
    p.add_argument("--n", type=nonneg_int, default=2)
    p.add_argument("--sz", type=half_int, default=0.0)
    p.add_argument("--depth", type=nonneg_int, default=1)
    p.add_argument("--entanglement", choices=("full", "linear"), default="full")
    p.add_argument("--layers", type=nonneg_int, default=1)
    p.add_argument("--dry-run", action="store_true")
    subs["resources"] = p

    p = sub.add_parser("exact", help="exact eigenvalues of the qubit Hamiltonian")
    p.add_argument("--fcidump", required=True)
    p.add_argument("--n", type=nonneg_int, default=None, help="restrict to a particle number")
    p.add_argument("--sz", type=half_int, default=None, help="restrict to a spin projection")
    p.add_argument("--out", default=None)
    p.add_argument("--dry-run", action="store_true")
    subs["exact"] = p

    p = sub.add_parser("mitigate-bench", help="compare mitigation strategy combinations")
    p.add_argument("--fcidump", default=None, help="defaults to the bundled 0.735 A geometry")
    p.add_argument("--strategies", type=strategy_list, default=BENCH_STRATEGIES)
    _add_run_flags(p)
    p.set_defaults(backend="noisy", optimizer="direct")
    subs["mitigate-bench"] = p

    p = sub.add_parser("spam-cal", help="measure and store a readout calibration matrix")
    p.add_argument("--device", required=True)
    p.add_argument("--n-qubits", type=positive_int, default=4)
    p.add_argument("--shots", type=positive_int, default=8192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="symvqe-out")
    p.add_argument("--dry-run", action="store_true")
    subs["spam-cal"] = p
    return parser, subs


def _load_config_defaults(path: str, sub: argparse.ArgumentParser) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    out = {}
    for key, value in data.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions:
            raise ValidationError(f"unknown config key {key!r}")
        action = actions[dest]
        if action.type is not None and not isinstance(value, bool):
            try:
                value = action.type(",".join(map(str, value)) if isinstance(value, list) else str(value))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ValidationError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise ValidationError(f"config key {key!r} must be one of {list(action.choices)}")
        out[dest] = value
    return out


def parse_and_validate(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = subs[args.command]
        defaults = _load_config_defaults(args.config, sub)
        sub.set_defaults(**defaults)
        if "fcidump" in defaults:
            for a in sub._actions:
                if a.dest == "fcidump":
                    a.required = False
        args = parser.parse_args(argv)
    _validate(args)
    return args


def _validate(args) -> None:
    for attr in ("fcidump", "data_dir"):
        path = getattr(args, attr, None)
        if path is not None and not Path(path).exists():
            raise ValidationError(f"--{attr.replace('_', '-')}: no such file {path}")
    if getattr(args, "device", None) is not None:
        dev = args.device
        if not Path(dev).exists() and dev not in BUNDLED_DEVICES:
            raise ValidationError(f"--device: no such file or bundled device {dev}")
    if args.command == "resources":
        SectorSpec(args.n_qubits, args.n, args.sz)
    if args.command in ("ground", "sectors", "curve", "mitigate-bench"):
        if args.command == "mitigate-bench" and args.backend != "statevector" and not args.device:
            raise ValidationError("mitigate-bench needs --device")
        _run_config(args)
    if args.command == "curve":
        missing = [d for d in args.distances if not _has_geometry(d, args.data_dir)]
        if missing:
            raise ValidationError(f"no integral file for distances {missing}")


def _has_geometry(distance, directory) -> bool:
    try:
        h2_fcidump_path(distance, directory)
        return True
    except (FileNotFoundError, ValueError):
        return False


def _run_config(args, **overrides) -> VqeRunConfig:
    n_qubits = 4
    if getattr(args, "fcidump", None):
        n_qubits = 2 * load_fcidump(args.fcidump).n_spatial
    optimizer = args.optimizer or ("lbfgs" if args.backend == "statevector" else "direct")
    fields = dict(
        ansatz=getattr(args, "ansatz", "aswap"),
        n_qubits=n_qubits,
        n_particles=getattr(args, "n", 2),
        sz=getattr(args, "sz", 0.0),
        depth=getattr(args, "depth", 1),
        entanglement=getattr(args, "entanglement", "full"),
        layers=getattr(args, "layers", None),
        backend=args.backend,
        device=args.device,
        shots=args.shots,
        optimizer=optimizer,
        budget=args.budget,
        n_starts=args.starts,
        mitigation=args.mitigate.replace(",", "").replace("symmetry", "sy").replace("richardson", "re") or "none",
        folds=args.folds,
        seed=args.seed,
    )
    fields.update(overrides)
    try:
        return VqeRunConfig(**fields)
    except (ConfigError, ValueError) as exc:
        raise ValidationError(str(exc)) from None


# ---------------------------------------------------------------------------
# Subcommands


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


class _Artifacts:
    def __init__(self, out: str | None):
        self.dir = Path(out) if out else None
        self.paths: list[str] = []

    def write(self, name: str, text: str) -> None:
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.paths.append(str(path))


def cmd_ground(args, art: _Artifacts) -> dict:
    config = _run_config(args)
    result = run_ground(config, load_fcidump(args.fcidump))
    art.write("result.json", result.to_json() + "\n")
    print(f"energy={result.energy:.12g} exact={result.exact_energy:.12g} abs_err={result.abs_error:.3e} evals={result.n_evaluations}")
    return config.to_dict()


def cmd_sectors(args, art: _Artifacts) -> dict:
    config = _run_config(args)
    ints = load_fcidump(args.fcidump)
    results = sector_scan(config, ints, args.sectors, jobs=args.jobs)
    rows = []
    for (m, sz), r in zip(args.sectors, results):
        rows.append((m, sz, r.energy, r.exact_energy, r.abs_error, r.n_expectation, r.sz_expectation, r.n_evaluations, r.nearest_eigen_index))
        print(f"N={m} Sz={sz:+g} energy={r.energy:.12g} exact={r.exact_energy:.12g} abs_err={r.abs_error:.3e}")
    art.write("sectors.csv", _csv(("n", "sz", "energy", "exact_energy", "abs_err", "n_mean", "sz_mean", "evals", "nearest_index"), rows))
    return {**config.to_dict(), "sectors": [list(s) for s in args.sectors]}


def cmd_curve(args, art: _Artifacts) -> dict:
    config = _run_config(args)
    rows = dissociation_curve(config, args.distances, args.data_dir, jobs=args.jobs)
    text = curve_csv(rows)
    art.write("curve.csv", text)
    sys.stdout.write(text)
    return {**config.to_dict(), "distances": list(args.distances)}


def cmd_resources(args, art: _Artifacts) -> dict:
    sector = SectorSpec(args.n_qubits, args.n, args.sz)
    if args.ansatz == "aswap":
        circuit = build_aswap(sector, args.layers)
    else:
        kind = {"ry": "RY", "ryrz": "RYRZ", "swaprz": "SwapRZ"}[args.ansatz]
        occupied = sector.occupied_qubits() if kind == "SwapRZ" else ()
        circuit = build_adhoc(kind, args.n_qubits, args.depth, args.entanglement, occupied)
    rep = resources(circuit)
    print(f"params={rep.n_free_params} cnots={rep.n_cnots}")
    print(f"depth={rep.depth}")
    return vars(args)


def cmd_exact(args, art: _Artifacts) -> dict:
    ints = load_fcidump(args.fcidump)
    h = molecular_hamiltonian(ints)
    if args.n is not None or args.sz is not None:
        if args.n is None or args.sz is None:
            raise ValidationError("--n and --sz must be given together")
        values = sector_eigenvalues(h, args.n, args.sz, ints.e_nuc)
    else:
        values = exact_diagonalize(h, ints.e_nuc)
    for v in values:
        print(_fmt(v))
    art.write("exact.csv", _csv(("index", "energy"), enumerate(values)))
    return vars(args)


def cmd_mitigate_bench(args, art: _Artifacts) -> dict:
    path = args.fcidump or str(h2_fcidump_path(0.735))
    ints = load_fcidump(path)
    rows = []
    for strategy in args.strategies:
        config = _run_config(args, mitigation=strategy)
        r = run_ground(config, ints)
        rows.append((strategy, r.energy, r.exact_energy, r.abs_error, r.std_error, r.n_expectation, r.sz_expectation, r.n_evaluations))
        print(f"{strategy}: abs_err={r.abs_error:.4e} std={r.std_error:.2e}")
    art.write("mitigate_bench.csv", _csv(("strategy", "energy", "exact_energy", "abs_err", "std_error", "n_mean", "sz_mean", "evals"), rows))
    return {**_run_config(args).to_dict(), "strategies": list(args.strategies), "fcidump": path}


def cmd_spam_cal(args, art: _Artifacts) -> dict:
    dev = load_device(args.device)
    backend = Backend("noisy", dev)
    cal = build_spam_matrix(backend.sample, args.n_qubits, args.shots, args.seed)
    art.write("spam_calibration.json", cal.to_json() + "\n")
    print(f"condition_number={np.linalg.cond(cal.entries):.6g}")
    return vars(args)


COMMANDS = {
    "ground": cmd_ground,
    "sectors": cmd_sectors,
    "curve": cmd_curve,
    "resources": cmd_resources,
    "exact": cmd_exact,
    "mitigate-bench": cmd_mitigate_bench,
    "spam-cal": cmd_spam_cal,
}


def _versions() -> dict:
    import scipy

    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "symvqe": pkg}


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "type": type(exc).__name__}) + "\n")
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if k != "func"}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_and_validate(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_VALIDATION
    except (ValidationError, ConfigError, IntegralFormatError, DeviceModelError, ValueError) as exc:
        return _error("validation", exc, EXIT_VALIDATION)
    if args.dry_run:
        print(json.dumps(_jsonable(vars(args)), indent=2, sort_keys=True))
        return EXIT_OK
    art = _Artifacts(getattr(args, "out", None))
    start = time.time()
    try:
        resolved = COMMANDS[args.command](args, art)
    except ValidationError as exc:
        return _error("validation", exc, EXIT_VALIDATION)
    except Exception as exc:  # noqa: BLE001 - any failure becomes a runtime error record
        return _error("runtime", exc, EXIT_RUNTIME)
    if art.dir is not None:
        manifest = {
            "command": args.command,
            "argv": argv,
            "config": _jsonable(resolved),
            "seed": getattr(args, "seed", None),
            "versions": _versions(),
            "wall_time_s": round(time.time() - start, 3),
            "artifacts": sorted(art.paths) + [str(art.dir / "manifest.json")],
        }
        (art.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
