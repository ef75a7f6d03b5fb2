"""Command-line entry point: ``stochfield <command> [flags]``.

Exit status: 0 success, 1 verification ran but some check failed, 2 usage
error, 3 spec error, 4 numeric or precondition error.  Errors are printed
to stderr as a JSON object with a ``code`` field.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np
import scipy.linalg

from .. import __version__
from ..dynamics import Chain, evolve
from ..exceptions import FieldError, PreconditionError, SpecError
from ..generators import validate_generator
from ..gradient import fd_gradient_local, fd_gradient_system, grad_local, grad_system, relative_error
from ..learning import TrainerConfig, train_gradient_descent
from ..objective import expected_signal_quadrature
from ..propagation import check_uniform_value, propagated_local_gradient, propagated_value, solve_effective_objectives
from ..trajectories import entropy_bound_check, mc_expected_signal, mc_transition_row
from . import verify
from .report import ExperimentReport, emit_results
from .spec import demo_spec_path, list_demo_specs, load_field_spec

COMMANDS = ("validate", "evolve", "stationary", "objective", "gradient", "propagate", "sample", "entropy-check",
            "train", "verify-all")
ARROWS = ("→", "->")
DEFAULT_SAMPLE_PATHS = 10_000


class UsageError(FieldError):
    code = "usage-error"
    exit_status = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="stochfield", description="Objective-driven stochastic fields on finite graphs.")
    p.add_argument("--version", action="version", version=f"stochfield {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", help="field spec file, or the name of a bundled demo")
    p.add_argument("--seed", type=int, help="random seed (default: the spec's seed, else 0)")
    p.add_argument("--t", type=float, help="time horizon")
    p.add_argument("--paths", type=int, help="number of sampled paths")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--tol", type=float, help="tolerance for finite-difference comparisons")
    p.add_argument("--node", help="node name for local operations")
    p.add_argument("--param", help="one parameter, written DEST→SRC (digits comma separated, or flat indices)")
    p.add_argument("--start", type=int, default=0, help="initial configuration (flat index)")
    p.add_argument("--steps", type=int, default=100, help="training steps")
    p.add_argument("--lr", type=float, default=0.5, help="training learning rate")
    p.add_argument("--only", help="verify-all: comma separated criterion numbers")
    p.add_argument("--no-meta", action="store_true", help="omit wall time and timestamp from the report")
    return p


# -- helpers ---------------------------------------------------------------------

def _resolve_spec(arg):
    if arg is None:
        return None
    if not os.path.exists(arg) and arg in list_demo_specs():
        arg = demo_spec_path(arg)
    return load_field_spec(arg)


def _need_spec(spec, command):
    if spec is None:
        raise UsageError(f"{command} needs --spec")
    return spec


def _digits_str(digits):
    return ",".join(str(d) for d in digits)


def _key_str(dest_space, src_space, key):
    d, s = key
    return f"{_digits_str(dest_space.decode(d))}→{_digits_str(src_space.decode(s))}"


def _parse_cfg(text, space):
    """A configuration given as comma separated digits or as a flat index."""
    text = text.strip()
    try:
        if "," in text:
            return space.encode([int(x) for x in text.split(",")])
        v = int(text)
    except ValueError:
        raise UsageError(f"bad configuration {text!r}") from None
    except FieldError as exc:
        raise UsageError(f"bad configuration {text!r}: {exc.message}") from None
    if not 0 <= v < space.total:
        raise UsageError(f"configuration {v} outside 0..{space.total - 1}")
    return v


def parse_param(text, dest_space, src_space):
    for arrow in ARROWS:
        if arrow in text:
            a, b = text.split(arrow, 1)
            return _parse_cfg(a, dest_space), _parse_cfg(b, src_space)
    raise UsageError(f"--param must look like DEST→SRC, got {text!r}")


def _start(args, n):
    if not 0 <= args.start < n:
        raise UsageError(f"--start {args.start} outside 0..{n - 1}")
    e = np.zeros(n)
    e[args.start] = 1.0
    return e


def _seed(args, spec):
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be nonnegative")
        return args.seed
    return spec.seed if spec is not None else 0


def _chain(spec):
    return Chain(spec.generator())


def _objective_for(spec, node=None):
    """The objective a command should use: the spec's signal, else the network."""
    if spec.signal is not None:
        return spec.signal
    if spec.network is not None:
        return spec.network
    raise PreconditionError("the spec defines no objective signal and no propagation network")


# -- commands ---------------------------------------------------------------------

def cmd_validate(args, spec, rep):
    T = spec.topology
    G = spec.generator()
    validate_generator(G)
    ch = Chain(G)
    rep.results = {
        "n_states": T.n_states,
        "nodes": [{"name": n.name, "kind": n.kind, "local_size": len(T.local_region(i)),
                   "observed_size": len(T.observed_region(i))} for i, n in enumerate(T.nodes)],
        "generator_valid": True,
        "null_dim": ch.null_dim,
        "ergodic": ch.ergodic,
        "has_signal": spec.signal is not None,
        "network": None if spec.network is None else {
            "strongly_connected": spec.network.strongly_connected, "notes": spec.network.notes},
    }
    rep.residuals = {"max_abs_column_sum": float(np.abs(G.sum(axis=0)).max())}


def cmd_evolve(args, spec, rep):
    ch = _chain(spec)
    t = 1.0 if args.t is None else args.t
    if t < 0:
        raise UsageError("--t must be nonnegative")
    state = evolve(ch, _start(args, ch.n), t)
    rep.config.update({"t": t, "start": args.start})
    rep.results = {"state": state.tolist()}
    rep.residuals = {"normalization": abs(math.fsum(state) - 1.0)}


def cmd_stationary(args, spec, rep):
    ch = _chain(spec)
    r = ch.stationary(_start(args, ch.n))
    rep.results = {"stationary": r.stationary.tolist(), "ergodic": r.ergodic, "null_dim": r.null_dim}
    rep.residuals = {"residual": r.residual}
    rep.tolerances = {"residual": 1e-10}


def cmd_objective(args, spec, rep):
    ch = _chain(spec)
    res = {}
    if spec.signal is None and spec.network is None:
        raise PreconditionError("the spec defines no objective signal and no propagation network")
    if spec.signal is not None:
        phi = ch.stationary(_start(args, ch.n)).stationary
        res["gamma_bar"] = float(spec.signal.flux_row(ch.G) @ phi)
        if args.t is not None:
            res["expected_signal"] = expected_signal_quadrature(spec.signal, ch, args.start, args.t)
            rep.config.update({"t": args.t, "start": args.start})
    if spec.network is not None:
        names = spec.topology.names
        u = check_uniform_value(spec.network, ch)
        res["node_values"] = {names[k]: v for k, v in u.values.items()}
        res["env_values"] = {f"{names[s]}->{names[t]}": v for (s, t), v in u.env_values.items()}
        rep.residuals["value_spread"] = u.spread
    rep.results = res


def cmd_gradient(args, spec, rep):
    T = spec.topology
    ch = _chain(spec)
    tol = 1e-5 if args.tol is None else args.tol
    if args.node is None:
        if spec.signal is None:
            raise PreconditionError("a system gradient needs an objective signal in the spec")
        g = grad_system(spec.signal, ch)
        dspace = sspace = T.omega
        fd = lambda key: fd_gradient_system(spec.signal, ch, key)
    else:
        i = T.index(args.node)
        obj = _objective_for(spec)
        if obj is spec.network:
            g = propagated_local_gradient(spec.network, spec.tables, i, G=ch)
            vf = lambda tb: propagated_value(spec.network, Chain(_assemble(spec, tb)), i)
            fd = lambda key: fd_gradient_local(None, T, spec.tables, i, key, value_fn=vf)
        else:
            g = grad_local(obj, T, spec.tables, i, G=ch)
            fd = lambda key: fd_gradient_local(obj, T, spec.tables, i, key)
        dspace, sspace = T.local_region(i).space, T.observed_region(i).space
        rep.config["node"] = args.node
    if args.param is not None:
        key = parse_param(args.param, dspace, sspace)
        if key not in g:
            raise UsageError(f"--param {args.param!r} is not a free parameter")
        a = g[key]
        f = fd(key)
        err = relative_error(a, f)
        ks = _key_str(dspace, sspace, key)
        rep.results = {"gradient": {ks: a}, "finite_difference": {ks: f}, "relative_error": err,
                       "within_tolerance": err <= tol}
        rep.tolerances = {"relative_error": tol}
        return
    rep.results = {"gradient": {_key_str(dspace, sspace, k): v for k, v in g.items()}}


def _assemble(spec, tables):
    from ..generators import assemble_system

    return assemble_system(spec.topology, tables)


def cmd_propagate(args, spec, rep):
    if spec.network is None:
        raise PreconditionError("the spec defines no propagation network")
    ch = _chain(spec)
    sol = solve_effective_objectives(spec.network, ch)
    u = check_uniform_value(spec.network, ch, sol)
    names = spec.topology.names
    rep.results = {"route": sol.route, "strongly_connected": spec.network.strongly_connected,
                   "node_values": {names[k]: v for k, v in u.values.items()},
                   "env_values": {f"{names[s]}->{names[t]}": v for (s, t), v in u.env_values.items()},
                   "notes": spec.network.notes}
    rep.residuals = {"fixed_point": sol.residual, "value_spread": u.spread}
    rep.tolerances = {"value_spread": 1e-9}


def _paths(args, default=DEFAULT_SAMPLE_PATHS):
    n = default if args.paths is None else args.paths
    if n < 1:
        raise UsageError("--paths must be at least 1")
    return n


def cmd_sample(args, spec, rep):
    ch = _chain(spec)
    n = _paths(args)
    t = 1.0 if args.t is None else args.t
    if t < 0:
        raise UsageError("--t must be nonnegative")
    _start(args, ch.n)
    row = mc_transition_row(ch.G, args.start, t, n, rep.seed)
    exact = scipy.linalg.expm(ch.G * t)[:, args.start]
    rep.config.update({"t": t, "start": args.start, "paths": n})
    res = {"transition": {str(k): s.to_dict() for k, s in enumerate(row)}, "exact": exact.tolist()}
    res["max_abs_z"] = max((abs(s.estimate - p) / s.stderr for s, p in zip(row, exact) if s.stderr > 0),
                           default=0.0)
    if spec.signal is not None:
        sig = mc_expected_signal(ch.G, spec.signal, args.start, t, n, rep.seed)
        res["signal"] = sig.to_dict()
        res["signal_quadrature"] = expected_signal_quadrature(spec.signal, ch, args.start, t)
    rep.results = res


def cmd_entropy(args, spec, rep):
    ch = _chain(spec)
    n = _paths(args)
    t = 1.0 if args.t is None else args.t
    _start(args, ch.n)
    chk = entropy_bound_check(ch.G, t, args.start, n, rep.seed)
    rep.config.update({"t": t, "start": args.start, "paths": n})
    rep.results = {"action": {"estimate": chk.mc_mean, "stderr": chk.stderr}, "bound": chk.bound,
                   "analytic_mean": chk.analytic_mean, "bound_holds": chk.mc_mean >= chk.bound - 3 * chk.stderr,
                   "jump_entropies": chk.entropies}


def cmd_train(args, spec, rep):
    T = spec.topology
    obj = _objective_for(spec)
    nodes = [args.node] if args.node else [T.names[i] for i in T.acting()]
    if not nodes:
        raise PreconditionError("no acting node to train")
    if args.steps < 0:
        raise UsageError("--steps must be nonnegative")
    if not args.lr > 0:
        raise UsageError("--lr must be positive")
    cfg = TrainerConfig(learning_rate=args.lr, n_steps=args.steps)
    tr = train_gradient_descent(T, spec.tables, obj, nodes, cfg)
    rep.config.update({"nodes": nodes, "steps": args.steps, "lr": args.lr, "rate_floor": cfg.rate_floor})
    rep.results = {"totals": tr.totals, "halted": tr.halted,
                   "final_values": {T.names[k]: v for k, v in tr.steps[-1].values.items()} if tr.steps else {}}


def cmd_verify(args, spec, rep):
    if spec is None:
        only = None
        if args.only:
            try:
                only = [int(x) for x in args.only.split(",")]
            except ValueError:
                raise UsageError("--only takes comma separated criterion numbers") from None
            bad = [k for k in only if k not in verify.CRITERIA]
            if bad:
                raise UsageError(f"unknown criteria {bad}")
        if args.paths is not None and args.paths < 1:
            raise UsageError("--paths must be at least 1")
        results = verify.run_all(rep.seed, args.paths, only)
    else:
        results = verify.verify_spec(spec, rep.seed, args.paths, tol=args.tol)
    rep.config["paths"] = args.paths
    rep.results = {"checks": [r.to_dict(include_meta=not args.no_meta) for r in results],
                   "all_passed": all(r.passed for r in results)}
    for r in results:
        print(verify.format_line(r), file=sys.stderr)
    return 0 if rep.results["all_passed"] else 1


HANDLERS = {
    "validate": cmd_validate, "evolve": cmd_evolve, "stationary": cmd_stationary, "objective": cmd_objective,
    "gradient": cmd_gradient, "propagate": cmd_propagate, "sample": cmd_sample, "entropy-check": cmd_entropy,
    "train": cmd_train, "verify-all": cmd_verify,
}


def run_experiment(argv) -> tuple:
    """Parse ``argv`` and run one command; returns ``(report, args, status)``."""
    args = build_parser().parse_args(argv)
    spec = _resolve_spec(args.spec)
    if args.command != "verify-all":
        _need_spec(spec, args.command)
    rep = ExperimentReport(command=list(argv))
    rep.seed = _seed(args, spec)
    rep.config = {"spec": args.spec}
    t0 = time.perf_counter()
    status = HANDLERS[args.command](args, spec, rep) or 0
    rep.wall_time = time.perf_counter() - t0
    return rep, args, status


def _fail(exc: FieldError):
    print(json.dumps({"error": exc.to_dict()}), file=sys.stderr)
    return exc.exit_status


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        rep, args, status = run_experiment(argv)
        emit_results(rep, args.format, args.out, include_meta=not args.no_meta)
        return status
    except FieldError as exc:
        return _fail(exc)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        return _fail(FieldError(f"numeric failure: {exc}"))
    except Exception as exc:  # keep the error contract even for bugs
        err = FieldError(f"internal error: {type(exc).__name__}: {exc}")
        err.code = "internal-error"
        return _fail(err)


if __name__ == "__main__":
    sys.exit(main())
