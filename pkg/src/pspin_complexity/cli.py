"""Command-line orchestration: configuration, experiment execution,
result persistence.

Outputs are written atomically (temp file + rename), embed the config
hash and library version, and a JSON summary goes to stdout.  Exit codes:
0 success, 2 validation failure, 3 numerical non-convergence, 64 usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .constants import SEED_ENV_VAR, THREADS_ENV_VAR, master_seed
from .freeconv import FreeConvError, convolve_semicircle, log_potential
from .functional import complexity_I
from .measure import DiscreteMeasure, gaussian_grid_measure
from .optimizer import (
    InfeasibleError,
    SolverConfig,
    SolverFailure,
    find_uc,
    sigma_curve,
)
from .potential import Potential, PotentialError, validate_assumption1
from .rmt import log_det_experiment
from .kacrice import (
    KacRiceError,
    count_critical_points,
    covariance_test,
    expected_crt,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICS = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_out_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stamp(cfg: dict) -> str:
    return f"# config_hash={_config_hash(cfg)} version={__version__}\n"


def _load_potential(path: str) -> Potential:
    with open(path) as fh:
        return Potential.from_json(fh.read())


def _load_solver_config(path: str | None, seed: int, overrides: dict) -> SolverConfig:
    data: dict = {}
    if path:
        if path.endswith(".toml"):
            try:
                import tomllib  # py >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path) as fh:
                data = json.load(fh)
    data.setdefault("seed", seed)
    for k, v in overrides.items():
        if v is not None:
            data[k] = v
    if "K" in data and isinstance(data["K"], str):
        data["K"] = math.inf if data["K"] in ("inf", "Infinity") else float(data["K"])
    known = {f for f in SolverConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise PotentialError(f"unknown solver config keys: {sorted(unknown)}")
    return SolverConfig(**data)


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True, default=str))


def _parse_atoms(text: str) -> DiscreteMeasure:
    atoms, masses = [], []
    for part in text.split(","):
        loc, _, mass = part.partition(":")
        atoms.append(float(loc))
        masses.append(float(mass) if mass else 1.0)
    masses = np.asarray(masses, dtype=float)
    return DiscreteMeasure(np.asarray(atoms), masses / masses.sum())


def _parse_diag(spec: str, n: int) -> np.ndarray:
    if spec == "0":
        return np.zeros(n)
    kind, _, arg = spec.partition(":")
    if kind == "const":
        return np.full(n, float(arg))
    if kind == "alt":
        val = float(arg)
        d = np.full(n, val)
        d[1::2] = -val
        return d
    if kind == "file":
        return np.loadtxt(arg, ndmin=1)[:n]
    raise PotentialError(f"unknown diagonal spec {spec!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="pspin-complexity", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--threads", type=int, default=None, help="numeric thread count")
    parser.add_argument("--out-dir", default=".", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate-potential", help="check the structural conditions")
    sp.add_argument("--potential", required=True)
    sp.add_argument("--grid-max", type=float, default=1e3)
    sp.add_argument("--grid-points", type=int, default=10_000)

    sp = sub.add_parser("sigma", help="complexity values on a u grid")
    sp.add_argument("--u", required=True, help="comma-separated levels")
    sp.add_argument("--potential", required=True)
    sp.add_argument("--config", default=None, help="solver config (json/toml)")
    sp.add_argument("--grid-max", type=float, default=None)
    sp.add_argument("--grid-points", type=int, default=None)
    sp.add_argument("--restarts", type=int, default=None)
    sp.add_argument("--out", default="sigma.csv")

    sp = sub.add_parser("uc", help="critical level search")
    sp.add_argument("--potential", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default="uc.json")

    sp = sub.add_parser("freeconv", help="free convolution with the semicircle law")
    sp.add_argument("--atoms", required=True, help="loc:mass,loc:mass,...")
    sp.add_argument("--out", default="freeconv.csv")

    sp = sub.add_parser("rmt-logdet", help="log-determinant asymptotics experiment")
    sp.add_argument("--diag", required=True, help="0 | const:<v> | alt:<v> | file:<path>")
    sp.add_argument("--n", type=int, default=400)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--out", default="rmt_logdet.json")

    sp = sub.add_parser("kacrice", help="finite-N expected critical point count")
    sp.add_argument("--n", type=int, required=True, choices=(2, 3))
    sp.add_argument("--u", type=float, default=0.0)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--validate-against-counting", action="store_true")
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--out", default="kacrice.json")

    sp = sub.add_parser("cov-test", help="covariance structure of (H, grad, hess)")
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--sigma", default="0.7,-1.1,0.4", help="comma-separated coordinates")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--out", default="covtest.json")

    sub.add_parser("selftest", help="fast smoke suite of analytic identities")
    return parser


def _cmd_validate(args, seed: int) -> int:
    pot = _load_potential(args.potential)
    rep = validate_assumption1(pot, grid_max=args.grid_max, grid_points=args.grid_points)
    cfg = {"command": "validate-potential", "potential": pot.to_json(), "seed": seed}
    out = rep.summary()
    out["config_hash"] = _config_hash(cfg)
    out["version"] = __version__
    _emit(out)
    return EXIT_OK if rep.all_passed else EXIT_VALIDATION


def _cmd_sigma(args, seed: int) -> int:
    pot = _load_potential(args.potential)
    u_values = [float(x) for x in args.u.split(",")]
    overrides = {
        "grid_max": args.grid_max,
        "grid_points": args.grid_points,
        "restarts": args.restarts,
    }
    config = _load_solver_config(args.config, seed, overrides)
    reports = sigma_curve(u_values, pot, config)
    cfg = {
        "command": "sigma",
        "u": u_values,
        "potential": pot.to_json(),
        "config": config.__dict__,
    }
    lines = [_stamp(cfg).rstrip("\n"), "u,sigma,feasibility_slack,iterations,restarts"]
    for r in reports:
        lines.append(
            f"{r.u!r},{r.sigma!r},{r.feasibility_slack!r},{r.iterations},{r.restarts}"
        )
    path = os.path.join(args.out_dir, args.out)
    _atomic_write(path, "\n".join(lines) + "\n")
    _emit(
        {
            "command": "sigma",
            "out": path,
            "sigma": {str(r.u): r.sigma for r in reports},
            "config_hash": _config_hash(cfg),
            "version": __version__,
        }
    )
    return EXIT_OK


def _cmd_uc(args, seed: int) -> int:
    pot = _load_potential(args.potential)
    config = _load_solver_config(args.config, seed, {})
    rep = find_uc(pot, config)
    cfg = {"command": "uc", "potential": pot.to_json(), "config": config.__dict__}
    payload = rep.as_dict()
    payload["config_hash"] = _config_hash(cfg)
    payload["version"] = __version__
    path = os.path.join(args.out_dir, args.out)
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit(payload)
    return EXIT_OK


def _cmd_freeconv(args, seed: int) -> int:
    nu = _parse_atoms(args.atoms)
    result = convolve_semicircle(nu)
    cfg = {"command": "freeconv", "atoms": args.atoms}
    path = os.path.join(args.out_dir, args.out)
    _atomic_write(path, _stamp(cfg) + result.to_csv())
    summary = result.summary()
    summary["out"] = path
    summary["config_hash"] = _config_hash(cfg)
    summary["version"] = __version__
    _emit(summary)
    return EXIT_OK


def _cmd_rmt_logdet(args, seed: int) -> int:
    diag = _parse_diag(args.diag, args.n)
    rep = log_det_experiment(diag, ambient_n=args.n, samples=args.samples, seed=seed)
    cfg = {"command": "rmt-logdet", "diag": args.diag, "n": args.n, "samples": args.samples, "seed": seed}
    payload = rep.as_dict()
    payload["config_hash"] = _config_hash(cfg)
    payload["version"] = __version__
    path = os.path.join(args.out_dir, args.out)
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit(payload)
    return EXIT_OK


def _cmd_kacrice(args, seed: int) -> int:
    pot = _load_potential(args.potential)
    est = expected_crt(args.n, pot, u=args.u, seed=seed)
    payload = est.as_dict()
    if args.validate_against_counting:
        if args.n != 2:
            raise KacRiceError("counting oracle available at N = 2 only")
        cr = count_critical_points(2, pot, coupling_seed=seed, trials=args.trials)
        payload["oracle_mean"] = cr.mean
        payload["oracle_stderr"] = cr.stderr
        payload["combined_gap"] = abs(cr.mean - est.value)
    cfg = {"command": "kacrice", "n": args.n, "u": args.u, "potential": pot.to_json(), "seed": seed}
    payload["config_hash"] = _config_hash(cfg)
    payload["version"] = __version__
    path = os.path.join(args.out_dir, args.out)
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit(payload)
    return EXIT_OK


def _cmd_covtest(args, seed: int) -> int:
    pot = _load_potential(args.potential)
    sigma = np.array([float(x) for x in args.sigma.split(",")])[: args.n]
    rep = covariance_test(sigma, pot, samples=args.samples, seed=seed)
    cfg = {"command": "cov-test", "sigma": args.sigma, "n": args.n, "samples": args.samples, "seed": seed}
    rep["config_hash"] = _config_hash(cfg)
    rep["version"] = __version__
    path = os.path.join(args.out_dir, args.out)
    _atomic_write(path, json.dumps(rep, indent=2, sort_keys=True) + "\n")
    _emit(rep)
    return EXIT_OK


def _cmd_selftest(args, seed: int) -> int:
    checks: dict[str, bool] = {}
    r = convolve_semicircle(DiscreteMeasure.point(0.0))
    checks["sc_log_potential"] = abs(log_potential(r) - (-0.5)) < 1e-3
    mu = gaussian_grid_measure(2.0)
    from .measure import kl_divergence, moment, dilate

    checks["kl_gaussian"] = abs(kl_divergence(mu) - 0.5 * (4 - 1 - 2 * math.log(2.0))) < 1e-3
    checks["m2_gaussian"] = abs(moment(gaussian_grid_measure(1.0), 2.0) - 1.0) < 1e-4
    checks["dilation"] = abs(moment(dilate(gaussian_grid_measure(1.0), 0.5), 2.0) - 0.25) < 1e-4
    from .potential import Potential, example_paper_potential

    pot = example_paper_potential(2)
    checks["assumption1"] = validate_assumption1(pot).all_passed
    pot3 = Potential(
        terms=((1.0, 4.0), (1.0, 6.0)), p=3, q=4.0, q1=4.0, q2=6.0, c_bound=35.0
    )
    fv = complexity_I(gaussian_grid_measure(0.01), pot3)
    checks["small_t_limit"] = abs(fv.total - 0.5 * math.log(2.0)) < 0.05
    ok = all(checks.values())
    _emit({"command": "selftest", "checks": checks, "ok": ok, "version": __version__})
    return EXIT_OK if ok else EXIT_VALIDATION


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.threads is not None:
        os.environ[THREADS_ENV_VAR] = str(args.threads)
    seed = args.seed if args.seed is not None else master_seed()
    os.environ.setdefault(SEED_ENV_VAR, str(seed))
    handlers = {
        "validate-potential": _cmd_validate,
        "sigma": _cmd_sigma,
        "uc": _cmd_uc,
        "freeconv": _cmd_freeconv,
        "rmt-logdet": _cmd_rmt_logdet,
        "kacrice": _cmd_kacrice,
        "cov-test": _cmd_covtest,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args, seed)
    except (PotentialError, InfeasibleError, FileNotFoundError, ValueError) as exc:
        _emit({"error": str(exc), "kind": "validation"})
        return EXIT_VALIDATION
    except (FreeConvError, SolverFailure, KacRiceError) as exc:
        _emit({"error": str(exc), "kind": "numerical"})
        return EXIT_NUMERICS


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
