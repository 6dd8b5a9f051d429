"""Experiment driver: reproduces the solver study tables and emits CSV rows
plus plain-text nodal fields for plotting.

Subcommands: poisson | control | sparsa | sweep | verify.  Options resolve
as flags > config file (key=value lines) > defaults.  Exit codes: 0 success,
1 solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .dc import DcError
from .fem import (MeshFormatError, assemble, build_structured_mesh,
                  import_mesh, read_field, w_of, write_field)
from .measures import (DiscreteMeasureSpace, OracleLimitError, largest_k_auto,
                       weighted_l0, weighted_l1)
from .problems import ControlConfig, control_reduced, default_load, poisson_prototype
from .solver import L0PenaltyConfig, penalty_sweep, solve_l0_penalized
from .sparsa import SparsaConfig, SparsaError, node_l1_weights, sparsa_solve
from .ssn import SsnError

__all__ = ["main"]


class ConfigError(ValueError):
    pass


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.12g}"
    if value is None:
        return ""
    return str(value)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _load_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _resolve(args, option_spec):
    """Merge CLI flags, config-file entries and defaults."""
    from_file = {}
    if getattr(args, "config", None):
        from_file = _load_config_file(args.config)
    resolved = {}
    for name, (convert, default) in option_spec.items():
        flag = getattr(args, name, None)
        if flag is not None:
            resolved[name] = flag
        elif name in from_file:
            raw = from_file[name]
            try:
                resolved[name] = convert(raw)
            except ValueError as exc:
                raise ConfigError(f"config value {name}={raw!r}: {exc}") from exc
        else:
            resolved[name] = default
    unknown = set(from_file) - set(option_spec)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return argparse.Namespace(**resolved)


def _float_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _mesh_from(opts):
    if getattr(opts, "mesh_file", None):
        return import_mesh(opts.mesh_file)
    return build_structured_mesh(opts.n)


def _scaled_gradient(problem, system, u):
    grad = problem.smooth_grad(u)
    out = np.zeros_like(grad)
    free = system.free_nodes
    out[free] = grad[free] / system.patch_measure[free]
    return out


def _solver_config(opts, total_measure, u0_vector=None):
    policy = opts.u0
    u0 = None
    if getattr(opts, "u0_file", None):
        policy = "custom"
        u0 = read_field(opts.u0_file)
    elif u0_vector is not None:
        policy = "custom"
        u0 = u0_vector
    cfg = L0PenaltyConfig(K=opts.K, rho=opts.rho,
                          schedule_lambda=opts.schedule,
                          zero_sign_policy=opts.zero_sign,
                          u0_policy=policy, u0=u0, max_iter=opts.max_iter)
    cfg.validate(total_measure)
    return cfg


def _write_iters(path, solution):
    if not path:
        return
    header = ["k", "K_k", "objective", "gap", "newton_iters", "ssn_residual"]
    rows = [(row.k, row.K, row.objective, row.gap, row.newton_iters,
             row.ssn_residual) for row in solution.history]
    _write_csv(path, header, rows)


def _write_fields(opts, problem, system, u):
    if getattr(opts, "solution_out", None):
        write_field(opts.solution_out, u)
    if getattr(opts, "multiplier_out", None):
        write_field(opts.multiplier_out, _scaled_gradient(problem, system, u))


def _self_check(opts, system, reported_l0, reported_gap):
    """Re-derive l0 and gap from the emitted solution field."""
    if not (opts.verify and getattr(opts, "solution_out", None)):
        return True
    u = read_field(opts.solution_out)
    elems = DiscreteMeasureSpace(system.elem_measure)
    w = w_of(u, system)
    sel = largest_k_auto(w, elems, opts.K)
    gap = weighted_l1(w, elems) - sel.value
    l0 = weighted_l0(w, elems)
    scale = max(weighted_l1(w, elems), 1.0)
    ok = abs(l0 - reported_l0) <= 1e-9 and abs(gap - reported_gap) <= 1e-9 * scale
    if not ok:
        print(f"verify: mismatch (l0 {l0} vs {reported_l0}, "
              f"gap {gap} vs {reported_gap})", file=sys.stderr)
    return ok


COMMON_SPEC = {
    "n": (int, 128),
    "mesh_file": (str, None),
    "K": (float, 0.25),
    "rho": (float, 1e9),
    "schedule": (float, None),
    "zero_sign": (str, "zero"),
    "u0": (str, "unconstrained_solve"),
    "u0_file": (str, None),
    "max_iter": (int, 500),
    "seed": (int, 0),
    "csv": (str, None),
    "iters_csv": (str, None),
    "solution_out": (str, None),
    "multiplier_out": (str, None),
    "verify": (lambda s: s.lower() in ("1", "true", "yes"), False),
}


def cmd_poisson(opts):
    mesh = _mesh_from(opts)
    system = assemble(mesh, default_load)
    problem = poisson_prototype(system)
    cfg = _solver_config(opts, float(system.elem_measure.sum()))
    sol = solve_l0_penalized(problem, system, cfg)

    header = ["n", "K", "rho", "seed", "f", "l0", "gap", "dc_iters",
              "ssn_iters", "selection_mode"]
    row = [opts.n, opts.K, opts.rho, opts.seed, sol.objective, sol.l0,
           sol.gap, sol.dc_iters, sol.newton_iters,
           "exact" if sol.gap_selection_exact else "greedy"]
    if opts.schedule is not None:
        header += ["schedule_lambda", "sched_steps"]
        row += [opts.schedule, sol.schedule_steps]
    _write_csv(opts.csv, header, [row])
    _write_iters(opts.iters_csv, sol)
    _write_fields(opts, problem, system, sol.u)
    return 0 if _self_check(opts, system, sol.l0, sol.gap) else 1


CONTROL_SPEC = dict(COMMON_SPEC)
CONTROL_SPEC.update({
    "alpha": (float, 1e-7),
    "beta": (float, None),
    "betas": (_float_list, None),
    "y_d_file": (str, None),
})


def cmd_control(opts):
    mesh = _mesh_from(opts)
    system = assemble(mesh)
    betas = opts.betas if opts.betas else [opts.beta if opts.beta is not None
                                           else opts.alpha]
    y_d = read_field(opts.y_d_file) if opts.y_d_file else None

    header = ["n", "K", "rho", "seed", "alpha", "beta", "f", "l0", "gap",
              "tracking_error", "dc_iters", "ssn_iters", "selection_mode"]
    if opts.schedule is not None:
        header += ["schedule_lambda", "sched_steps"]
    rows = []
    last = None
    for beta in betas:
        ctrl = ControlConfig(alpha=opts.alpha, beta=beta, y_d=y_d)
        problem = control_reduced(system, ctrl)
        cfg = _solver_config(opts, float(system.elem_measure.sum()))
        sol = solve_l0_penalized(problem, system, cfg)
        row = [opts.n, opts.K, opts.rho, opts.seed, opts.alpha, beta,
               sol.objective, sol.l0, sol.gap,
               problem.tracking_error(sol.u), sol.dc_iters, sol.newton_iters,
               "exact" if sol.gap_selection_exact else "greedy"]
        if opts.schedule is not None:
            row += [opts.schedule, sol.schedule_steps]
        rows.append(row)
        last = (problem, sol)
    _write_csv(opts.csv, header, rows)
    problem, sol = last
    _write_iters(opts.iters_csv, sol)
    _write_fields(opts, problem, system, sol.u)
    return 0 if _self_check(opts, system, sol.l0, sol.gap) else 1


SPARSA_SPEC = dict(COMMON_SPEC)
SPARSA_SPEC.update({
    "beta": (float, 4.360),
    "rel_tol": (float, 1e-5),
    "sparsa_max_iter": (int, 20_000),
})


def cmd_sparsa(opts):
    mesh = _mesh_from(opts)
    system = assemble(mesh, default_load)
    problem = poisson_prototype(system)
    cfg = SparsaConfig(beta=opts.beta, rel_tol=opts.rel_tol,
                       max_iter=opts.sparsa_max_iter)
    if opts.beta == 0.0:
        u = problem.hessian.solve_principal(np.arange(system.num_free),
                                            problem.q_smooth)
        iters = 0
    else:
        u0 = system.restrict(read_field(opts.u0_file)) if opts.u0_file \
            else problem.hessian.solve_principal(np.arange(system.num_free),
                                                 problem.q_smooth)
        res = sparsa_solve(problem.hessian, problem.q_smooth,
                           node_l1_weights(system, opts.beta), cfg, u0)
        u, iters = res.u, res.iters
    u_full = system.expand(u)
    elems = DiscreteMeasureSpace(system.elem_measure)
    w = w_of(u_full, system)
    sel = largest_k_auto(w, elems, opts.K)
    gap = weighted_l1(w, elems) - sel.value
    f_val = problem.smooth_value(u_full)
    header = ["n", "K", "beta", "seed", "f", "l0", "gap", "iters"]
    row = [opts.n, opts.K, opts.beta, opts.seed, f_val,
           weighted_l0(w, elems), gap, iters]
    _write_csv(opts.csv, header, [row])
    _write_fields(opts, problem, system, u_full)
    return 0 if _self_check(opts, system, weighted_l0(w, elems), gap) else 1


SWEEP_SPEC = dict(COMMON_SPEC)
SWEEP_SPEC.update({
    "rhos": (_float_list, [1e3, 1e6, 1e9, 1e12]),
})


def cmd_sweep(opts):
    mesh = _mesh_from(opts)
    system = assemble(mesh, default_load)
    problem = poisson_prototype(system)
    cfg = _solver_config(opts, float(system.elem_measure.sum()))
    solutions = penalty_sweep(problem, system, cfg, opts.rhos)
    header = ["n", "K", "rho", "seed", "f", "l0", "gap", "dc_iters",
              "ssn_iters", "selection_mode"]
    rows = [[opts.n, opts.K, rho, opts.seed, sol.objective, sol.l0, sol.gap,
             sol.dc_iters, sol.newton_iters,
             "exact" if sol.gap_selection_exact else "greedy"]
            for rho, sol in zip(opts.rhos, solutions)]
    _write_csv(opts.csv, header, rows)
    if opts.solution_out:
        write_field(opts.solution_out, solutions[-1].u)
    return 0


VERIFY_SPEC = {
    "n": (int, 128),
    "mesh_file": (str, None),
    "K": (float, 0.25),
    "csv": (str, None),
    "solution_out": (str, None),
}


def cmd_verify(opts):
    if not opts.csv or not opts.solution_out:
        raise ConfigError("verify needs --csv and --solution-out")
    mesh = _mesh_from(opts)
    system = assemble(mesh)
    u = read_field(opts.solution_out)
    with open(opts.csv) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    row = dict(zip(header, lines[-1].split(",")))
    elems = DiscreteMeasureSpace(system.elem_measure)
    w = w_of(u, system)
    sel = largest_k_auto(w, elems, opts.K)
    gap = weighted_l1(w, elems) - sel.value
    l0 = weighted_l0(w, elems)
    scale = max(weighted_l1(w, elems), 1.0)
    ok = (abs(l0 - float(row["l0"])) <= 1e-9
          and abs(gap - float(row["gap"])) <= 1e-9 * scale)
    print(f"l0 recomputed {l0:.12g} reported {row['l0']}; "
          f"gap recomputed {gap:.12g} reported {row['gap']}: "
          f"{'OK' if ok else 'MISMATCH'}")
    return 0 if ok else 1


def _add_options(parser, spec):
    for name, (convert, _default) in spec.items():
        flag = "--" + name.replace("_", "-")
        if convert is bool or name == "verify":
            parser.add_argument(flag, action="store_const", const=True,
                                dest=name, default=None)
        else:
            parser.add_argument(flag, type=convert if convert is not str else str,
                                dest=name, default=None)
    parser.add_argument("--config", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dcl0",
        description="support-measure constrained quadratic solver experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in (("poisson", COMMON_SPEC), ("control", CONTROL_SPEC),
                       ("sparsa", SPARSA_SPEC), ("sweep", SWEEP_SPEC),
                       ("verify", VERIFY_SPEC)):
        _add_options(sub.add_parser(name), spec)
    return parser


COMMANDS = {
    "poisson": (cmd_poisson, COMMON_SPEC),
    "control": (cmd_control, CONTROL_SPEC),
    "sparsa": (cmd_sparsa, SPARSA_SPEC),
    "sweep": (cmd_sweep, SWEEP_SPEC),
    "verify": (cmd_verify, VERIFY_SPEC),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run, spec = COMMANDS[args.command]
    try:
        opts = _resolve(args, spec)
        if not getattr(opts, "mesh_file", None) and getattr(opts, "n", 2) < 2:
            raise ConfigError("mesh resolution must be at least 2")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"dcl0: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(opts)
    except (ConfigError, ValueError) as exc:
        print(f"dcl0: config error: {exc}", file=sys.stderr)
        return 2
    except (DcError, SsnError, SparsaError, OracleLimitError,
            MeshFormatError, OSError) as exc:
        print(f"dcl0: solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
