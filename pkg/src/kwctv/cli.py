"""kwctv command line: kernel, solve, check, bound.

Exit codes: 0 success, 1 runtime error, 2 certification or validation
failure, 3 a check suite reported a failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import io as kio
from .diagnostics import (check_structure, coincidence_set, coincidence_tolerance, lebj_audit,
                          monotone_gap_audit)
from .errors import KwcError, ValidationError
from .penalty import (JumpPenalty, Potential, build_from_potential, certify, verify_potential)
from .rof import max_jump, solve_rof
from .signal import Interp, PiecewiseConstantFn, Signal, total_energy
from .solver_dp import LevelGrid, brute_force, solve_dp
from .solver_refine import best_single_jump, budget_for, budget_from, refine

log = logging.getLogger("kwctv")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID, EXIT_CHECK = 0, 1, 2, 3

DEFAULTS: dict[str, Any] = {
    "penalty": "rho-over-1+rho",
    "potential": None,
    "s": 1.0,
    "M": None,
    "grid_step": 0.01,
    "rho_max": 10.0,
    "lambda": None,
    "interp": None,
    "levels": None,
    "eta": None,
    "refine": False,
    "baseline": None,
    "plot": None,
    "out": None,
    "tol": 1e-10,
    "max_iters": 10_000,
    "restarts": 0,
    "seed": 0,
    "n": 6,
    "oracle": True,
    "max_states": 2_000_000,
    "negative_control": False,
    "suite": "structure",
    "length": 1.0,
    "monotone": False,
    "signal": None,
}


class _Config(dict):
    __getattr__ = dict.__getitem__


def _resolve(ns: argparse.Namespace) -> _Config:
    """Flags override the JSON config file, which overrides the defaults."""
    cfg = dict(DEFAULTS)
    given = vars(ns)
    path = given.get("config")
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise kio.ParseError(path, exc.lineno, exc.msg) from None
        if not isinstance(data, dict):
            raise kio.ParseError(path, 1, "config must be a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise kio.ParseError(path, 1, f"unknown keys {sorted(unknown)}")
        cfg.update(data)
    cfg.update({k: v for k, v in given.items() if k not in ("config", "cmd")})
    cfg["cmd"] = given["cmd"]
    return _Config(cfg)


def _potential(spec: str) -> Potential:
    if Path(spec).is_file():
        return kio.load_potential(spec)
    return Potential.named(spec)


def _penalty(cfg: _Config, M: float | None = None) -> JumpPenalty:
    if cfg.potential:
        spec = "potential:" + cfg.potential
    else:
        spec = cfg.penalty
    if spec == "linear":
        return JumpPenalty.linear()
    if spec == "rho-over-1+rho":
        return JumpPenalty.rho_over_one_plus_rho()
    if spec.startswith("potential:"):
        F = _potential(spec.split(":", 1)[1])
        rho_max = max(float(cfg.rho_max), 1.5 * (M or 0.0))
        return build_from_potential(F, s=float(cfg.s), rho_max=rho_max)
    raise ValidationError(f"unknown penalty {spec!r}; use linear, rho-over-1+rho or potential:<name|file>")


def _emit(obj: Any, cfg: _Config) -> None:
    text = kio.dump_json(obj, cfg.out)
    if cfg.out is None:
        print(text)


def _signal(cfg: _Config) -> Signal:
    if not cfg.signal:
        raise ValidationError("--signal is required")
    return kio.load_signal(cfg.signal, lam=cfg["lambda"], interp=cfg.interp)


def _levels(cfg: _Config, g: Signal) -> LevelGrid:
    if cfg.levels is not None and cfg.eta is not None:
        raise ValidationError("give --levels or --eta, not both")
    if cfg.eta is not None:
        return LevelGrid.for_signal(g, eta=float(cfg.eta))
    return LevelGrid.for_signal(g, count=int(cfg.levels if cfg.levels is not None else 129))


def _cert_M(cfg: _Config, g: Signal | None) -> float:
    if cfg.M is not None:
        return float(cfg.M)
    if g is not None and g.osc > 0:
        return g.osc
    return 1.0


# --------------------------------------------------------------------------- commands


def cmd_kernel(cfg: _Config) -> int:
    M = _cert_M(cfg, None)
    p = _penalty(cfg, M)
    out: dict[str, Any] = {}
    if cfg.potential or cfg.penalty.startswith("potential:"):
        spec = cfg.potential or cfg.penalty.split(":", 1)[1]
        out["potential"] = verify_potential(_potential(spec)).to_dict()
    cert = certify(p, M, grid_step=float(cfg.grid_step))
    out.update(cert.to_dict())
    out["penalty"] = p.label
    _emit(out, cfg)
    if "potential" in out and not out["potential"]["passed"]:
        log.warning("potential failed the subadditivity probes")
        return EXIT_INVALID
    return EXIT_OK


def _solution_dict(g: Signal, p: JumpPenalty, u: PiecewiseConstantFn, budget_m: int | None,
                   eta: float) -> dict:
    e = total_energy(u, g, p)
    d = u.to_dict()
    d.update(energy=e.to_dict(), jumps=u.n_jumps, budget_m=budget_m,
             coincidence_points=[list(c) for c in coincidence_set(u, g, coincidence_tolerance(g, eta))],
             max_jump=max_jump(u))
    return d


def cmd_solve(cfg: _Config) -> int:
    g = _signal(cfg)
    if cfg.baseline is not None:
        if cfg.baseline != "rof":
            raise ValidationError(f"unknown baseline {cfg.baseline!r}")
        sol = solve_rof(g)
        out = _solution_dict(g, JumpPenalty.linear(), sol.u, None, 0.0)
        out["baseline"] = "rof"
        u = sol.u
    else:
        M = _cert_M(cfg, g)
        p = _penalty(cfg, M)
        cert = certify(p, M, grid_step=float(cfg.grid_step))
        budget = budget_for(g, cert)
        grid = _levels(cfg, g)
        sol = solve_dp(g, p, grid)
        u, eta = sol.u, grid.eta
        extra: dict[str, Any] = {"dp_energy": sol.energy.to_dict(), "eta": eta}
        if cfg.refine:
            r = refine(g, p, sol.u, budget, tol=float(cfg.tol), max_iters=int(cfg.max_iters),
                       restarts=int(cfg.restarts))
            u, eta = r.u, 0.0
            extra.update(midpoint_residuals=r.midpoint_residuals, iterations=r.iterations,
                         converged=r.converged)
        out = _solution_dict(g, p, u, budget.m, eta)
        out.update(extra)
        out["certificate"] = cert.to_dict()
        if u.n_jumps > budget.m:
            log.error("solution has %d jumps, budget is %d", u.n_jumps, budget.m)
            _emit(out, cfg)
            return EXIT_CHECK
    if cfg.plot:
        kio.write_plot(g, u, cfg.plot)
    _emit(out, cfg)
    return EXIT_OK


def _negative_control(cfg: _Config) -> dict:
    """Nearest-level projection of a fine ramp: many small jumps, far over budget."""
    lam = float(cfg["lambda"] or 1.0)
    g = Signal.from_function(lambda x: x, 0.0, 1.0, 64, lam)
    p = _penalty(cfg, 1.0)
    cert = certify(p, g.osc, grid_step=float(cfg.grid_step))
    grid = LevelGrid.for_signal(g, count=51)
    idx = np.abs(g.samples[:, None] - grid.levels[None, :]).argmin(axis=1)
    u = PiecewiseConstantFn.from_cells(g, grid.levels[idx])
    rep = check_structure(u, g, p, cert, eta=grid.eta)
    return {"instance": "projection of g(x)=x onto 51 levels", "jumps": u.n_jumps,
            "detected": not rep.passed, "failed_checks": [c.name for c in rep.failures()],
            "report": rep.to_dict()}


def _oracle_suite(cfg: _Config) -> dict:
    rng = np.random.default_rng(int(cfg.seed))
    n = int(cfg.n)
    lam = float(cfg["lambda"] or rng.uniform(1.0, 40.0))
    g = Signal(rng.uniform(0.0, 1.0, n), 0.0, 1.0, lam)
    p = _penalty(cfg, g.osc)
    grid = LevelGrid.for_signal(g, count=int(cfg.levels if cfg.levels is not None else 5))
    sol = solve_dp(g, p, grid)
    out: dict[str, Any] = {"seed": int(cfg.seed), "n": n, "lambda": lam, "levels": grid.size,
                           "samples": g.samples.tolist(), "dp": sol.to_dict()}
    ok = True
    if cfg.oracle:
        bf = brute_force(g, p, grid, max_states=int(cfg.max_states))
        same = bool(np.array_equal(bf.assignment, sol.assignment)) and bf.energy.total == sol.energy.total
        out["oracle"] = {"match": same, "energy": bf.energy.total}
        ok &= same
    if g.osc > 0:
        cert = certify(p, g.osc, grid_step=float(cfg.grid_step))
        rep = check_structure(sol.u, g, p, cert, eta=grid.eta)
        out["structure"] = rep.to_dict()
        ok &= rep.passed
    out["passed"] = bool(ok)
    return out


def _monotone_suite(cfg: _Config) -> dict:
    lam = float(cfg["lambda"] or 1.0)
    n = int(cfg.n) if cfg.n and int(cfg.n) >= 16 else 256
    g = Signal.from_function(lambda x: x, 0.0, 1.0, n, lam, interp=Interp.LINEAR)
    p = _penalty(cfg, g.osc)
    cert = certify(p, g.osc, grid_step=float(cfg.grid_step))
    grid = LevelGrid.for_signal(g, eta=float(cfg.eta or 1 / 128))
    sol = solve_dp(g, p, grid)
    r = refine(g, p, sol.u, budget_for(g, cert))
    rep = check_structure(r.u, g, p, cert)
    audit = monotone_gap_audit(g, p, cert, brackets=[(0.0, 0.5), (0.0, 1.0)])
    lebj = lebj_audit(g, p, cert, 0.0, 0.5, rng=np.random.default_rng(int(cfg.seed)))
    sj = best_single_jump(g, 0.0, 1.0, g.value_at(0.0), g.value_at(1.0, "left"))
    pmf_ok = abs(sj.location - 0.5) <= g.h and sj.residual <= 1e-9
    lebj_min = min(row.margin for row in lebj)
    ok = rep.passed and audit.passed and bool(audit.audited) and lebj_min >= 0 and pmf_ok
    return {"lambda": lam, "n": n, "structure": rep.to_dict(), "gap_audit": audit.to_dict(),
            "lebj_min_margin": lebj_min, "single_jump": sj._asdict(), "pmf_ok": bool(pmf_ok),
            "passed": bool(ok)}


def cmd_check(cfg: _Config) -> int:
    if cfg.negative_control:
        out = _negative_control(cfg)
        _emit(out, cfg)
        return EXIT_OK if out["detected"] else EXIT_CHECK
    if cfg.suite == "monotone":
        out = _monotone_suite(cfg)
    elif cfg.suite == "structure":
        out = _oracle_suite(cfg)
    else:
        raise ValidationError(f"unknown suite {cfg.suite!r}")
    _emit(out, cfg)
    return EXIT_OK if out["passed"] else EXIT_CHECK


def cmd_bound(cfg: _Config) -> int:
    g = _signal(cfg) if cfg.signal else None
    M = _cert_M(cfg, g)
    p = _penalty(cfg, M)
    cert = certify(p, M, grid_step=float(cfg.grid_step))
    if g is not None:
        general = budget_for(g, cert) if not g.is_monotone() else budget_from(cert, g.length, g.lam)
        mono = budget_for(g, cert) if g.is_monotone() else None
    else:
        if cfg["lambda"] is None:
            raise ValidationError("--lambda is required without --signal")
        general = budget_from(cert, float(cfg.length), float(cfg["lambda"]))
        mono = budget_from(cert, float(cfg.length), float(cfg["lambda"]), True) if cfg.monotone else None
    out = {"m": general.m, "A_M": cert.A_M, "C_M": cert.C_M, "c_M": cert.c_M, "M": cert.M,
           "lambda": general.lam, "length": general.length,
           "m_monotone": mono.m if mono is not None else None}
    _emit(out, cfg)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _add_common(sp: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    sp.add_argument("--config", default=S, help="JSON file with option defaults")
    sp.add_argument("--penalty", default=S, help="linear | rho-over-1+rho | potential:<name|file>")
    sp.add_argument("--potential", default=S, help="built-in potential or CSV file")
    sp.add_argument("--s", type=float, default=S)
    sp.add_argument("--M", type=float, default=S, help="certification range (default osc g)")
    sp.add_argument("--grid-step", dest="grid_step", type=float, default=S)
    sp.add_argument("--rho-max", dest="rho_max", type=float, default=S)
    sp.add_argument("--lambda", dest="lambda", type=float, default=S)
    sp.add_argument("--out", default=S, help="write JSON here instead of stdout")
    sp.add_argument("-v", "--verbose", action="store_true", default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    ap = argparse.ArgumentParser(prog="kwctv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    k = sub.add_parser("kernel", help="build and certify a jump penalty")
    _add_common(k)

    s = sub.add_parser("solve", help="minimise the energy for a sampled signal")
    _add_common(s)
    s.add_argument("--signal", default=S)
    s.add_argument("--interp", choices=[i.value for i in Interp], default=S)
    s.add_argument("--levels", type=int, default=S)
    s.add_argument("--eta", type=float, default=S)
    s.add_argument("--refine", action="store_true", default=S)
    s.add_argument("--tol", type=float, default=S)
    s.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    s.add_argument("--restarts", type=int, default=S)
    s.add_argument("--baseline", choices=["rof"], default=S)
    s.add_argument("--plot", default=S, help="CSV of x, g(x), u(x) rows")

    c = sub.add_parser("check", help="run the property suite")
    _add_common(c)
    c.add_argument("--seed", type=int, default=S)
    c.add_argument("--n", type=int, default=S)
    c.add_argument("--levels", type=int, default=S)
    c.add_argument("--eta", type=float, default=S)
    c.add_argument("--oracle", dest="oracle", action="store_true", default=S)
    c.add_argument("--no-oracle", dest="oracle", action="store_false", default=S)
    c.add_argument("--max-states", dest="max_states", type=int, default=S)
    c.add_argument("--negative-control", dest="negative_control", action="store_true", default=S)
    c.add_argument("--suite", choices=["structure", "monotone"], default=S)

    b = sub.add_parser("bound", help="jump-count bound for a signal or raw numbers")
    _add_common(b)
    b.add_argument("--signal", default=S)
    b.add_argument("--interp", choices=[i.value for i in Interp], default=S)
    b.add_argument("--length", type=float, default=S)
    b.add_argument("--monotone", action="store_true", default=S)
    return ap


COMMANDS = {"kernel": cmd_kernel, "solve": cmd_solve, "check": cmd_check, "bound": cmd_bound}


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="kwctv: %(levelname)s: %(message)s")
    try:
        cfg = _resolve(ns)
        return COMMANDS[cfg.cmd](cfg)
    except KwcError as exc:
        print(f"kwctv: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"kwctv: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
